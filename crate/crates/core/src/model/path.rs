use crate::error::{Error, Result};
use crate::model::SystemParams;

fn center_of_mass_defect(params: &SystemParams, positions: &[f64]) -> f64 {
    let weighted: f64 = positions
        .iter()
        .zip(params.masses())
        .map(|(q, m)| q * m)
        .sum();
    weighted / params.total_mass()
}

pub(crate) fn check_center_of_mass(params: &SystemParams, positions: &[f64]) -> Result<()> {
    if positions.len() != params.n_bodies() {
        return Err(Error::InvalidConfiguration(format!(
            "expected {} positions, got {}",
            params.n_bodies(),
            positions.len()
        )));
    }
    if let Some(q) = positions.iter().find(|q| !q.is_finite()) {
        return Err(Error::InvalidConfiguration(format!(
            "non-finite position {q}"
        )));
    }
    let scale = positions.iter().fold(0.0f64, |a, q| a.max(q.abs())) + 1.0;
    let defect = center_of_mass_defect(params, positions);
    if defect.abs() > 1e-12 * scale {
        return Err(Error::InvalidConfiguration(format!(
            "center of mass is {defect:e}, not at the origin"
        )));
    }
    Ok(())
}

/// Subtract the center of mass in place.
pub(crate) fn recenter(params: &SystemParams, positions: &mut [f64]) {
    let com = center_of_mass_defect(params, positions);
    positions.iter_mut().for_each(|q| *q -= com);
}

/// Collinear positions of `N` bodies with center of mass at the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    positions: Vec<f64>,
}

impl Configuration {
    pub fn new(params: &SystemParams, positions: Vec<f64>) -> Result<Self> {
        check_center_of_mass(params, &positions)?;
        Ok(Self { positions })
    }

    /// Translate `positions` so the center of mass sits at the origin.
    pub fn centered(params: &SystemParams, mut positions: Vec<f64>) -> Result<Self> {
        if positions.len() != params.n_bodies() {
            return Err(Error::InvalidConfiguration(format!(
                "expected {} positions, got {}",
                params.n_bodies(),
                positions.len()
            )));
        }
        recenter(params, &mut positions);
        Self::new(params, positions)
    }

    pub(crate) fn from_raw(positions: Vec<f64>) -> Self {
        Self { positions }
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn into_positions(self) -> Vec<f64> {
        self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Smallest pairwise distance.
    pub fn min_gap(&self) -> f64 {
        min_pair_distance(&self.positions)
    }
}

pub(crate) fn min_pair_distance(q: &[f64]) -> f64 {
    let mut best = f64::INFINITY;
    for k in 0..q.len() {
        for j in k + 1..q.len() {
            best = best.min((q[j] - q[k]).abs());
        }
    }
    best
}

/// A nodal path on a time grid; the discretized element of the path space
/// joining two configurations. Positions are stored node-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePath {
    times: Vec<f64>,
    n_bodies: usize,
    positions: Vec<f64>,
}

impl DiscretePath {
    pub fn new(params: &SystemParams, times: Vec<f64>, positions: Vec<f64>) -> Result<Self> {
        let n = params.n_bodies();
        if times.len() < 3 {
            return Err(Error::InvalidPath(format!(
                "at least 3 nodes (M >= 2) are required, got {}",
                times.len()
            )));
        }
        if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidPath(
                "times must be finite and strictly increasing".into(),
            ));
        }
        if positions.len() != times.len() * n {
            return Err(Error::InvalidPath(format!(
                "expected {} position entries, got {}",
                times.len() * n,
                positions.len()
            )));
        }
        for (i, node) in positions.chunks(n).enumerate() {
            check_center_of_mass(params, node)
                .map_err(|e| Error::InvalidPath(format!("node {i}: {e}")))?;
        }
        Ok(Self {
            times,
            n_bodies: n,
            positions,
        })
    }

    pub fn from_nodes(params: &SystemParams, times: Vec<f64>, nodes: &[Vec<f64>]) -> Result<Self> {
        let positions = nodes.iter().flatten().copied().collect();
        if nodes.iter().any(|n| n.len() != params.n_bodies()) {
            return Err(Error::InvalidPath("ragged node list".into()));
        }
        Self::new(params, times, positions)
    }

    /// Build from a function of time sampled on `times`; each sample is recentered.
    pub fn sample<F>(params: &SystemParams, times: Vec<f64>, mut f: F) -> Result<Self>
    where
        F: FnMut(f64) -> Vec<f64>,
    {
        let mut positions = Vec::with_capacity(times.len() * params.n_bodies());
        for &t in &times {
            let mut q = f(t);
            if q.len() != params.n_bodies() {
                return Err(Error::InvalidPath("sampler returned wrong length".into()));
            }
            recenter(params, &mut q);
            positions.extend(q);
        }
        Self::new(params, times, positions)
    }

    pub(crate) fn from_raw(times: Vec<f64>, n_bodies: usize, positions: Vec<f64>) -> Self {
        debug_assert_eq!(positions.len(), times.len() * n_bodies);
        Self {
            times,
            n_bodies,
            positions,
        }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn t_start(&self) -> f64 {
        self.times[0]
    }

    pub fn t_end(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub fn n_nodes(&self) -> usize {
        self.times.len()
    }

    /// Number of grid intervals `M`.
    pub fn n_intervals(&self) -> usize {
        self.times.len() - 1
    }

    pub fn n_bodies(&self) -> usize {
        self.n_bodies
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.positions[i * self.n_bodies..(i + 1) * self.n_bodies]
    }

    pub fn configuration(&self, i: usize) -> Configuration {
        Configuration::from_raw(self.node(i).to_vec())
    }

    pub fn nodes(&self) -> impl Iterator<Item = &[f64]> {
        self.positions.chunks(self.n_bodies)
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub(crate) fn positions_mut(&mut self) -> &mut [f64] {
        &mut self.positions
    }

    /// Trajectory of one body across all nodes.
    pub fn body(&self, j: usize) -> Vec<f64> {
        self.nodes().map(|q| q[j]).collect()
    }

    /// Positions at time `t` by linear interpolation of the nodal path.
    pub fn interpolate(&self, t: f64) -> Vec<f64> {
        let m = self.n_intervals();
        let i = match self.times.partition_point(|&s| s <= t) {
            0 => 0,
            k => (k - 1).min(m - 1),
        };
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let s = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
        self.node(i)
            .iter()
            .zip(self.node(i + 1))
            .map(|(a, b)| a + s * (b - a))
            .collect()
    }

    /// Minimum pairwise distance at every node.
    pub fn nodal_min_gaps(&self) -> Vec<f64> {
        self.nodes().map(min_pair_distance).collect()
    }
}

/// A path expressed in consecutive-body gaps `x_k = q_{k+1} - q_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct GapPath {
    times: Vec<f64>,
    n_gaps: usize,
    gaps: Vec<f64>,
}

impl GapPath {
    pub fn new(times: Vec<f64>, n_gaps: usize, gaps: Vec<f64>) -> Result<Self> {
        if times.len() < 3 {
            return Err(Error::InvalidPath("at least 3 nodes are required".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidPath(
                "times must be strictly increasing".into(),
            ));
        }
        if n_gaps == 0 || gaps.len() != n_gaps * times.len() {
            return Err(Error::InvalidPath(format!(
                "expected {} gap entries, got {}",
                n_gaps * times.len(),
                gaps.len()
            )));
        }
        if gaps.iter().any(|g| !g.is_finite()) {
            return Err(Error::InvalidPath("non-finite gap".into()));
        }
        Ok(Self {
            times,
            n_gaps,
            gaps,
        })
    }

    /// Gap representation of a positional path.
    pub fn from_path(path: &DiscretePath) -> Self {
        let n = path.n_bodies();
        let mut gaps = Vec::with_capacity(path.n_nodes() * (n - 1));
        for q in path.nodes() {
            gaps.extend(q.windows(2).map(|w| w[1] - w[0]));
        }
        Self {
            times: path.times.clone(),
            n_gaps: n - 1,
            gaps,
        }
    }

    /// Positions reconstructed from gaps with the center of mass at the origin.
    pub fn to_path(&self, params: &SystemParams) -> Result<DiscretePath> {
        if params.n_bodies() != self.n_gaps + 1 {
            return Err(Error::InvalidPath(format!(
                "{} gaps do not describe {} bodies",
                self.n_gaps,
                params.n_bodies()
            )));
        }
        let mut positions = Vec::with_capacity(self.times.len() * params.n_bodies());
        for x in self.gaps.chunks(self.n_gaps) {
            positions.extend(positions_from_gaps(params.masses(), x));
        }
        DiscretePath::new(params, self.times.clone(), positions)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn n_nodes(&self) -> usize {
        self.times.len()
    }

    pub fn n_gaps(&self) -> usize {
        self.n_gaps
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.gaps[i * self.n_gaps..(i + 1) * self.n_gaps]
    }

    pub fn nodes(&self) -> impl Iterator<Item = &[f64]> {
        self.gaps.chunks(self.n_gaps)
    }

    pub fn gap_series(&self, k: usize) -> Vec<f64> {
        self.nodes().map(|x| x[k]).collect()
    }
}

/// Positions with zero center of mass whose consecutive differences are `gaps`.
pub(crate) fn positions_from_gaps(masses: &[f64], gaps: &[f64]) -> Vec<f64> {
    let mut q = Vec::with_capacity(masses.len());
    q.push(0.0);
    let mut acc = 0.0;
    for x in gaps {
        acc += x;
        q.push(acc);
    }
    let total: f64 = masses.iter().sum();
    let com = q.iter().zip(masses).map(|(a, m)| a * m).sum::<f64>() / total;
    q.iter_mut().for_each(|a| *a -= com);
    q
}

/// Uniform grid of `m` intervals on `[t1, t2]`.
pub fn uniform_times(t1: f64, t2: f64, m: usize) -> Vec<f64> {
    let h = (t2 - t1) / m as f64;
    (0..=m)
        .map(|i| if i == m { t2 } else { t1 + h * i as f64 })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params3() -> SystemParams {
        SystemParams::new(vec![1.0, 2.0, 3.0]).unwrap()
    }

    #[test]
    fn configuration_requires_center_of_mass() {
        let p = params3();
        assert!(Configuration::new(&p, vec![1.0, 1.0, 1.0]).is_err());
        assert!(Configuration::new(&p, vec![-1.0, 1.0]).is_err());
        let c = Configuration::centered(&p, vec![1.0, 1.0, 1.0]).unwrap();
        assert!(c.positions().iter().all(|q| q.abs() < 1e-15));
        assert!(Configuration::new(&p, vec![-3.0, 0.0, 1.0]).is_ok());
    }

    #[test]
    fn path_validation() {
        let p = SystemParams::equal_masses(2).unwrap();
        assert!(DiscretePath::new(&p, vec![0.0, 1.0], vec![-1.0, 1.0, -1.0, 1.0]).is_err());
        assert!(DiscretePath::new(
            &p,
            vec![0.0, 0.5, 0.5],
            vec![-1.0, 1.0, -1.0, 1.0, -1.0, 1.0]
        )
        .is_err());
        assert!(DiscretePath::new(
            &p,
            vec![0.0, 0.5, 1.0],
            vec![-1.0, 1.0, -1.0, 1.5, -1.0, 1.0]
        )
        .is_err());
        let path = DiscretePath::new(
            &p,
            vec![0.0, 0.5, 1.0],
            vec![-1.0, 1.0, -0.5, 0.5, -1.0, 1.0],
        )
        .unwrap();
        assert_eq!(path.interpolate(0.25), vec![-0.75, 0.75]);
        assert_eq!(path.nodal_min_gaps(), vec![2.0, 1.0, 2.0]);
    }

    #[test]
    fn gap_round_trip() {
        let p = params3();
        let path = DiscretePath::sample(&p, uniform_times(0.0, 1.0, 10), |t| {
            vec![-1.0 + 0.3 * t, 0.2 * t * t, 1.0 + t.sin()]
        })
        .unwrap();
        let back = GapPath::from_path(&path).to_path(&p).unwrap();
        for (a, b) in path.positions().iter().zip(back.positions()) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn uniform_grid_hits_endpoints() {
        let t = uniform_times(0.3, 1.7, 7);
        assert_eq!(t.len(), 8);
        assert_eq!(t[0], 0.3);
        assert_eq!(t[7], 1.7);
    }
}

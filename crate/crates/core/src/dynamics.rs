//! Newton's equations `m_j q_j'' = dU/dq_j` integrated with an adaptive
//! Dormand–Prince 5(4) pair, and the residual of a nodal path in them.
//!
//! Integration stops at the first accepted step where two bodies are closer
//! than `collision_tol` or have changed order; the partial trajectory is
//! returned with [`Termination::CollisionApproach`].

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    kinetic, min_pair_distance, potential, potential_gradient, strict_order, DiscretePath,
    SystemParams,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryState {
    pub time: f64,
    pub positions: Vec<f64>,
    pub velocities: Vec<f64>,
}

impl TrajectoryState {
    /// Checks the lengths, the center of mass and the total momentum.
    pub fn validate(&self, params: &SystemParams) -> Result<()> {
        let n = params.n_bodies();
        if self.positions.len() != n || self.velocities.len() != n {
            return Err(Error::InvalidConfiguration(format!(
                "state must have {n} positions and {n} velocities"
            )));
        }
        if !self.time.is_finite()
            || self
                .positions
                .iter()
                .chain(&self.velocities)
                .any(|x| !x.is_finite())
        {
            return Err(Error::InvalidConfiguration("non-finite state".into()));
        }
        let m = params.masses();
        let scale = |v: &[f64]| {
            v.iter().zip(m).map(|(x, m)| (x * m).abs()).sum::<f64>() + params.total_mass()
        };
        let com: f64 = self.positions.iter().zip(m).map(|(q, m)| q * m).sum();
        let momentum: f64 = self.velocities.iter().zip(m).map(|(v, m)| v * m).sum();
        if com.abs() > 1e-12 * scale(&self.positions) {
            return Err(Error::InvalidConfiguration(format!(
                "center of mass is {com:e}"
            )));
        }
        if momentum.abs() > 1e-12 * scale(&self.velocities) {
            return Err(Error::InvalidConfiguration(format!(
                "total momentum is {momentum:e}"
            )));
        }
        Ok(())
    }
}

/// Total energy `E = K - U`.
pub fn energy(params: &SystemParams, state: &TrajectoryState) -> Result<f64> {
    Ok(kinetic(params, &state.velocities) - potential(params, &state.positions)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegrateOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            max_steps: 2_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum Termination {
    Completed,
    /// Two bodies came within `collision_tol` (or crossed) at `time`.
    CollisionApproach {
        time: f64,
        gap: f64,
    },
    StepLimit {
        time: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<TrajectoryState>,
    pub termination: Termination,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

impl Trajectory {
    pub fn last(&self) -> &TrajectoryState {
        self.states
            .last()
            .expect("a trajectory holds its initial state")
    }

    /// `max_t |E(t) - E(0)| / (|E(0)| + 1)`.
    pub fn energy_drift(&self, params: &SystemParams) -> Result<f64> {
        let e0 = energy(params, &self.states[0])?;
        let mut worst = 0.0f64;
        for s in &self.states {
            worst = worst.max((energy(params, s)? - e0).abs());
        }
        Ok(worst / (e0.abs() + 1.0))
    }

    /// CSV with header `t,q1..qN,v1..vN,E`.
    pub fn write_csv<W: Write>(&self, params: &SystemParams, out: W) -> Result<()> {
        let n = params.n_bodies();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|j| format!("q{j}")));
        header.extend((1..=n).map(|j| format!("v{j}")));
        header.push("E".into());
        w.write_record(&header)?;
        for s in &self.states {
            let mut row = vec![format!("{:.16e}", s.time)];
            row.extend(
                s.positions
                    .iter()
                    .chain(&s.velocities)
                    .map(|x| format!("{x:.16e}")),
            );
            row.push(format!("{:.16e}", energy(params, s)?));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Floor of the energy-scaled relative tolerance.
const MIN_RTOL: f64 = 1e-14;

// Dormand–Prince 5(4) tableau
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

struct Stepper<'a> {
    params: &'a SystemParams,
    opts: IntegrateOptions,
    k: [Vec<f64>; 7],
    stage: Vec<f64>,
    y5: Vec<f64>,
}

impl<'a> Stepper<'a> {
    fn new(params: &'a SystemParams, opts: IntegrateOptions) -> Self {
        let dim = 2 * params.n_bodies();
        Self {
            params,
            opts,
            k: std::array::from_fn(|_| vec![0.0; dim]),
            stage: vec![0.0; dim],
            y5: vec![0.0; dim],
        }
    }

    /// `y = (q, v)`, `y' = (v, grad U / m)`.
    fn rhs(&self, y: &[f64], out: &mut [f64]) {
        let n = self.params.n_bodies();
        let (q, v) = y.split_at(n);
        out[..n].copy_from_slice(v);
        let g = potential_gradient(self.params, q, 0.0).unwrap_or_else(|_| vec![f64::NAN; n]);
        for ((o, g), m) in out[n..].iter_mut().zip(g).zip(self.params.masses()) {
            *o = g / m;
        }
    }

    /// One trial step; on return `y5` holds the candidate and the result is
    /// the scaled error norm. `rtol` may be tighter than the option when the
    /// kinetic and potential energies dwarf the total.
    fn trial(&mut self, y: &[f64], h: f64, rtol: f64) -> f64 {
        let dim = y.len();
        let mut k = std::mem::take(&mut self.k);
        self.rhs(y, &mut k[0]);
        for s in 1..7 {
            for i in 0..dim {
                let acc: f64 = (0..s).map(|r| A[s][r] * k[r][i]).sum();
                self.stage[i] = y[i] + h * acc;
            }
            let stage = std::mem::take(&mut self.stage);
            self.rhs(&stage, &mut k[s]);
            self.stage = stage;
        }
        let mut err = 0.0;
        for i in 0..dim {
            let hi: f64 = (0..7).map(|s| B5[s] * k[s][i]).sum();
            let lo: f64 = (0..7).map(|s| B4[s] * k[s][i]).sum();
            self.y5[i] = y[i] + h * hi;
            let sc = self.opts.atol + rtol * y[i].abs().max(self.y5[i].abs());
            let e = h * (hi - lo) / sc;
            err += e * e;
        }
        self.k = k;
        (err / dim as f64).sqrt()
    }
}

fn state_of(params: &SystemParams, t: f64, y: &[f64]) -> TrajectoryState {
    let n = params.n_bodies();
    TrajectoryState {
        time: t,
        positions: y[..n].to_vec(),
        velocities: y[n..].to_vec(),
    }
}

/// Integrate from `state0` through the increasing output `times`; every
/// output time is hit exactly. With `record_steps` every accepted step is
/// kept as well.
fn run(
    params: &SystemParams,
    state0: &TrajectoryState,
    times: &[f64],
    record_steps: bool,
    opts: &IntegrateOptions,
) -> Result<Trajectory> {
    params.validate()?;
    state0.validate(params)?;
    if !(opts.rtol > 0.0 && opts.atol > 0.0 && opts.max_steps > 0) {
        return Err(Error::InvalidParams(
            "integration tolerances must be positive".into(),
        ));
    }
    let t_end = *times
        .last()
        .ok_or_else(|| Error::InvalidParams("no output times".into()))?;
    if times.windows(2).any(|w| w[1] <= w[0]) || times[0] <= state0.time || !t_end.is_finite() {
        return Err(Error::InvalidInterval {
            t1: state0.time,
            t2: times[0],
        });
    }
    let tol = params.collision_tol();
    let mut out = Trajectory {
        states: vec![state0.clone()],
        termination: Termination::Completed,
        accepted_steps: 0,
        rejected_steps: 0,
    };
    let gap0 = min_pair_distance(&state0.positions);
    if gap0 < tol {
        out.termination = Termination::CollisionApproach {
            time: state0.time,
            gap: gap0,
        };
        return Ok(out);
    }
    let n = params.n_bodies();
    let order0 = strict_order(&state0.positions);
    let mut y: Vec<f64> = state0
        .positions
        .iter()
        .chain(&state0.velocities)
        .copied()
        .collect();
    let mut t = state0.time;
    let mut stepper = Stepper::new(params, *opts);
    // energy errors scale with K + U, so hold the relative accuracy to the
    // budget |E0| + 1 when both grow near a close approach
    let budget = energy(params, state0)?.abs() + 1.0;
    let rtol_at = |y: &[f64]| {
        let size = kinetic(params, &y[n..]) + potential(params, &y[..n]).unwrap_or(f64::INFINITY);
        opts.rtol * (budget / size).clamp(MIN_RTOL / opts.rtol, 1.0)
    };
    let mut h = 1e-3 * (t_end - t).min(1.0);
    let mut next = 0;
    while next < times.len() {
        if out.accepted_steps + out.rejected_steps >= opts.max_steps {
            out.termination = Termination::StepLimit { time: t };
            return Ok(out);
        }
        let target = times[next];
        let hits = t + h >= target;
        let step = if hits { target - t } else { h };
        let err = stepper.trial(&y, step, rtol_at(&y));
        if !(err <= 1.0) {
            out.rejected_steps += 1;
            let factor = if err.is_finite() {
                (0.9 * err.powf(-0.2)).max(0.2)
            } else {
                0.2
            };
            h = step * factor;
            continue;
        }
        out.accepted_steps += 1;
        t = if hits { target } else { t + step };
        std::mem::swap(&mut y, &mut stepper.y5);
        let gap = min_pair_distance(&y[..n]);
        let crossed = strict_order(&y[..n]) != order0;
        if hits {
            next += 1;
        }
        if hits || record_steps || gap < tol || crossed {
            out.states.push(state_of(params, t, &y));
        }
        if gap < tol || crossed {
            out.termination = Termination::CollisionApproach { time: t, gap };
            return Ok(out);
        }
        let grow = if err > 0.0 {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        } else {
            5.0
        };
        // a step shortened to land on an output time does not set the next size
        h = if hits {
            h.max(step * grow)
        } else {
            step * grow
        };
    }
    Ok(out)
}

/// Integrate to `t_end`, keeping every accepted step.
pub fn integrate(
    params: &SystemParams,
    state0: &TrajectoryState,
    t_end: f64,
    opts: &IntegrateOptions,
) -> Result<Trajectory> {
    run(params, state0, &[t_end], true, opts)
}

/// Integrate and keep the initial state plus the states at the increasing
/// output `times` (all after `state0.time`).
pub fn integrate_at(
    params: &SystemParams,
    state0: &TrajectoryState,
    times: &[f64],
    opts: &IntegrateOptions,
) -> Result<Trajectory> {
    run(params, state0, times, false, opts)
}

/// State at node `i` of a nodal path, with velocities by second-order
/// differences (one-sided at the ends).
pub fn node_state(path: &DiscretePath, i: usize) -> TrajectoryState {
    let t = path.times();
    let last = path.n_intervals();
    let q = path.node(i);
    let velocities = if i == 0 || i == last {
        // three-point one-sided difference
        let (a, b, c, sign) = if i == 0 {
            (0, 1, 2, 1.0)
        } else {
            (last, last - 1, last - 2, -1.0)
        };
        let (h1, h2) = ((t[b] - t[a]).abs(), (t[c] - t[b]).abs());
        let (w0, w1, w2) = (
            -(2.0 * h1 + h2) / (h1 * (h1 + h2)),
            (h1 + h2) / (h1 * h2),
            -h1 / (h2 * (h1 + h2)),
        );
        (0..q.len())
            .map(|j| sign * (w0 * path.node(a)[j] + w1 * path.node(b)[j] + w2 * path.node(c)[j]))
            .collect()
    } else {
        let (h1, h2) = (t[i] - t[i - 1], t[i + 1] - t[i]);
        let (qm, qp) = (path.node(i - 1), path.node(i + 1));
        (0..q.len())
            .map(|j| (h1 * h1 * (qp[j] - q[j]) + h2 * h2 * (q[j] - qm[j])) / (h1 * h2 * (h1 + h2)))
            .collect()
    };
    TrajectoryState {
        time: t[i],
        positions: q.to_vec(),
        velocities,
    }
}

/// Largest residual of Newton's equations over the interior nodes of the
/// inclusive node range `segment`:
///
/// ```text
/// max_i max_j |m_j D2 q_j(t_i) - dU/dq_j| / max_j |dU/dq_j|
/// ```
///
/// where `D2` is the three-point second difference.
pub fn eom_residual(
    params: &SystemParams,
    p: &DiscretePath,
    segment: (usize, usize),
) -> Result<f64> {
    let (lo, hi) = segment;
    if p.n_bodies() != params.n_bodies() {
        return Err(Error::MassMismatch);
    }
    if hi >= p.n_nodes() || hi < lo + 2 {
        return Err(Error::InvalidParams(format!(
            "segment {lo}..={hi} needs an interior node inside {} nodes",
            p.n_nodes()
        )));
    }
    let floor = 10.0 * params.collision_tol();
    for i in lo..=hi {
        let gap = min_pair_distance(p.node(i));
        if gap <= floor {
            return Err(Error::SegmentContainsCollision { node: i, gap });
        }
    }
    let t = p.times();
    let m = params.masses();
    let mut worst = 0.0f64;
    for i in lo + 1..hi {
        let (h1, h2) = (t[i] - t[i - 1], t[i + 1] - t[i]);
        let (qm, q, qp) = (p.node(i - 1), p.node(i), p.node(i + 1));
        let force = potential_gradient(params, q, 0.0)?;
        let scale = force.iter().fold(0.0f64, |a, f| a.max(f.abs()));
        let defect = (0..q.len()).fold(0.0f64, |a, j| {
            let acc = 2.0 / (h1 + h2) * ((qp[j] - q[j]) / h2 - (q[j] - qm[j]) / h1);
            a.max((m[j] * acc - force[j]).abs())
        });
        worst = worst.max(defect / scale.max(f64::MIN_POSITIVE));
    }
    Ok(worst)
}

/// Maximal node ranges on which every gap exceeds `10 * collision_tol`.
pub fn collision_free_segments(params: &SystemParams, p: &DiscretePath) -> Vec<(usize, usize)> {
    let floor = 10.0 * params.collision_tol();
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    for (i, q) in p.nodes().enumerate() {
        match (min_pair_distance(q) > floor, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push((s, i - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, p.n_intervals()));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::uniform_times;

    fn two_body(sep: f64, speed: f64) -> (SystemParams, TrajectoryState) {
        let p = SystemParams::equal_masses(2).unwrap();
        let s = TrajectoryState {
            time: 0.0,
            positions: vec![-0.5 * sep, 0.5 * sep],
            velocities: vec![-0.5 * speed, 0.5 * speed],
        };
        (p, s)
    }

    #[test]
    fn parabolic_escape_has_two_thirds_law() {
        // E = 0 for unit masses: relative speed^2 / 4 = 1 / r
        let (p, s) = two_body(1.0, 2.0);
        assert!(energy(&p, &s).unwrap().abs() < 1e-15);
        let times: Vec<f64> = (0..=20)
            .map(|i| 1e3 * 10f64.powf(i as f64 / 20.0))
            .collect();
        let tr = integrate_at(&p, &s, &times, &IntegrateOptions::default()).unwrap();
        assert_eq!(tr.termination, Termination::Completed);
        let pts: Vec<(f64, f64)> = tr.states[1..]
            .iter()
            .map(|s| (s.time.ln(), (s.positions[1] - s.positions[0]).ln()))
            .collect();
        let n = pts.len() as f64;
        let (sx, sy) = pts.iter().fold((0.0, 0.0), |a, (x, y)| (a.0 + x, a.1 + y));
        let (mx, my) = (sx / n, sy / n);
        let slope = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
            / pts.iter().map(|(x, _)| (x - mx).powi(2)).sum::<f64>();
        assert!((slope - 2.0 / 3.0).abs() < 0.01, "{slope}");
        assert!(tr.energy_drift(&p).unwrap() < 1e-7);
    }

    #[test]
    fn drop_is_time_reversible() {
        // free-fall time from separation 2 is pi/2 * sqrt(2) ~ 2.221
        let (p, s) = two_body(2.0, 0.0);
        let opts = IntegrateOptions::default();
        let fwd = integrate(&p, &s, 2.2, &opts).unwrap();
        assert_eq!(fwd.termination, Termination::Completed);
        let mut back = fwd.last().clone();
        back.velocities.iter_mut().for_each(|v| *v = -*v);
        back.time = 0.0;
        let rev = integrate(&p, &back, 2.2, &opts).unwrap();
        let end = rev.last();
        for (a, b) in end.positions.iter().zip(&s.positions) {
            assert!((a - b).abs() < 1e-6, "{a} {b}");
        }
        for v in &end.velocities {
            assert!(v.abs() < 1e-6);
        }
        assert!(fwd.energy_drift(&p).unwrap() < 1e-7);
    }

    #[test]
    fn drop_halts_near_collision() {
        let (p, s) = two_body(2.0, 0.0);
        let tr = integrate(&p, &s, 3.0, &IntegrateOptions::default()).unwrap();
        assert!(tr.energy_drift(&p).unwrap() < 1e-7);
        match tr.termination {
            Termination::CollisionApproach { time, gap } => {
                assert!((time - std::f64::consts::FRAC_PI_2 * 2f64.sqrt()).abs() < 1e-3);
                assert!(gap < p.collision_tol());
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn three_body_conserves() {
        let p = SystemParams::new(vec![1.0, 2.0, 1.5]).unwrap();
        let mut q = vec![-2.0, 0.1, 1.7];
        let mut v = vec![0.3, -0.4, 0.2];
        for x in [&mut q, &mut v] {
            let mean = x.iter().zip(p.masses()).map(|(a, m)| a * m).sum::<f64>() / p.total_mass();
            x.iter_mut().for_each(|a| *a -= mean);
        }
        let s = TrajectoryState {
            time: 0.0,
            positions: q,
            velocities: v,
        };
        let tr = integrate(&p, &s, 1.5, &IntegrateOptions::default()).unwrap();
        assert!(tr.energy_drift(&p).unwrap() < 1e-7);
        for st in &tr.states {
            let com: f64 = st
                .positions
                .iter()
                .zip(p.masses())
                .map(|(a, m)| a * m)
                .sum();
            let mom: f64 = st
                .velocities
                .iter()
                .zip(p.masses())
                .map(|(a, m)| a * m)
                .sum();
            assert!(com.abs() < 1e-10 && mom.abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_moving_center_of_mass() {
        let p = SystemParams::equal_masses(2).unwrap();
        let s = TrajectoryState {
            time: 0.0,
            positions: vec![-1.0, 1.0],
            velocities: vec![1.0, 1.0],
        };
        assert!(integrate(&p, &s, 1.0, &IntegrateOptions::default()).is_err());
    }

    #[test]
    fn sampled_trajectory_has_small_residual() {
        let (p, s) = two_body(2.0, 0.5);
        let times = uniform_times(0.0, 1.0, 256);
        let tr = integrate_at(&p, &s, &times[1..], &IntegrateOptions::default()).unwrap();
        let nodes: Vec<Vec<f64>> = tr.states.iter().map(|s| s.positions.clone()).collect();
        let path = DiscretePath::from_nodes(&p, times, &nodes).unwrap();
        let r = eom_residual(&p, &path, (0, 256)).unwrap();
        assert!(r < 1e-4, "{r}");
        let st = node_state(&path, 128);
        let exact = &tr.states[128];
        for (a, b) in st.velocities.iter().zip(&exact.velocities) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn straight_line_is_not_a_solution() {
        let p = SystemParams::equal_masses(2).unwrap();
        let path =
            DiscretePath::sample(&p, uniform_times(0.0, 1.0, 64), |t| vec![-1.0 - t, 1.0 + t])
                .unwrap();
        assert!((eom_residual(&p, &path, (0, 64)).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn residual_rejects_collision_segment() {
        let p = SystemParams::equal_masses(2).unwrap();
        let path = DiscretePath::sample(&p, uniform_times(0.0, 1.0, 64), |t| {
            let x = 0.5 * (t - 0.5).abs().powf(2.0 / 3.0);
            vec![-x, x]
        })
        .unwrap();
        assert!(matches!(
            eom_residual(&p, &path, (0, 64)),
            Err(Error::SegmentContainsCollision { node: 32, .. })
        ));
        let segs = collision_free_segments(&p, &path);
        assert_eq!(segs, vec![(0, 31), (33, 64)]);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let (p, s) = two_body(2.0, 0.5);
        let tr = integrate_at(&p, &s, &[0.5, 1.0], &IntegrateOptions::default()).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&p, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,q1,q2,v1,v2,E");
        assert_eq!(lines.len(), 4);
    }
}

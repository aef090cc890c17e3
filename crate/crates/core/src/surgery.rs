//! Path constructions used to compare actions: relabeling bodies, the
//! order-normalizing path, and the plateau deformation of one gap.
//!
//! The plateau deformation replaces gap `x_k` by the constant `delta` on the
//! maximal window around a collision where `x_k <= delta`. Writing the action
//! in gap form, the kinetic terms that change are `A x_k'^2 + B x_k'` with
//!
//! ```text
//! A = M_left M_right / (2M)
//! B = sum_{l <= k < r} m_l m_r / M * (sum_{j=l}^{r-1} x_j' - x_k')
//! ```
//!
//! where `M_left` and `M_right` are the masses on either side of the gap.
//! Each potential term containing `x_k` can only decrease when `x_k` is raised
//! to `delta`, so the action drops whenever `A x_k'^2 + B x_k' > 0` on the
//! window. [`check_plateau_inequality`] evaluates this per grid interval with the
//! interval velocities the quadrature uses.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    action, gap_action, recenter, strict_order, DiscretePath, GapPath, OrderLabel, SystemParams,
};

/// Default plateau level as a multiple of `collision_tol`.
pub const DEFAULT_DELTA_FACTOR: f64 = 5.0;

/// Plateau level used when the caller does not choose one.
pub fn default_delta(params: &SystemParams) -> f64 {
    DEFAULT_DELTA_FACTOR * params.collision_tol()
}

/// A relabeled path and whether the relabeling can change the action.
#[derive(Debug, Clone, PartialEq)]
pub struct Relabeled {
    pub path: DiscretePath,
    /// Set for unequal masses: the relabeled path is recentered and its
    /// action generally differs from the original.
    pub mass_warning: bool,
}

fn check_permutation(tau: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if tau.len() != n {
        return Err(Error::InvalidParams(format!(
            "permutation has {} entries for {n} bodies",
            tau.len()
        )));
    }
    for &t in tau {
        if t >= n || std::mem::replace(&mut seen[t], true) {
            return Err(Error::InvalidParams(format!(
                "{tau:?} is not a permutation"
            )));
        }
    }
    Ok(())
}

/// `r_j(t) = q_{tau(j)}(t)` at every node (zero-based `tau`).
pub fn relabel(params: &SystemParams, p: &DiscretePath, tau: &[usize]) -> Result<Relabeled> {
    let n = p.n_bodies();
    if params.n_bodies() != n {
        return Err(Error::MassMismatch);
    }
    check_permutation(tau, n)?;
    let equal = params.has_equal_masses();
    let mut positions = Vec::with_capacity(p.positions().len());
    for q in p.nodes() {
        let start = positions.len();
        positions.extend(tau.iter().map(|&t| q[t]));
        if !equal {
            recenter(params, &mut positions[start..]);
        }
    }
    if !equal {
        log::warn!("relabeling bodies of unequal mass; the action is not preserved");
    }
    Ok(Relabeled {
        path: DiscretePath::new(params, p.times().to_vec(), positions)?,
        mass_warning: !equal,
    })
}

/// One stretch of constant order in [`normalize_order`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedSection {
    pub t_start: f64,
    pub t_end: f64,
    /// Order of the source path on this stretch.
    pub order: OrderLabel,
    /// Zero-based `tau` with `h_j = q_{tau(j)}` on this stretch.
    pub permutation: Vec<usize>,
}

/// Result of [`normalize_order`].
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    /// The source path with a node inserted at every pair crossing, where the
    /// crossing bodies are snapped to their common mean.
    pub source: DiscretePath,
    /// Constant-order path on the grid of `source`.
    pub path: DiscretePath,
    pub reference: OrderLabel,
    pub sections: Vec<NormalizedSection>,
    /// Times of the inserted crossing nodes.
    pub inserted: Vec<f64>,
    /// Largest mismatch of the one-sided limits at a crossing node.
    pub max_jump: f64,
}

/// Crossing times of every pair on the interval `[i, i + 1]`, as fractions.
fn interval_crossings(a: &[f64], b: &[f64], out: &mut Vec<(f64, usize, usize)>) {
    out.clear();
    let n = a.len();
    for j in 0..n {
        for k in j + 1..n {
            let (da, db) = (a[k] - a[j], b[k] - b[j]);
            if (da > 0.0 && db < 0.0) || (da < 0.0 && db > 0.0) {
                out.push((da / (da - db), j, k));
            }
        }
    }
    out.sort_by(|x, y| x.0.total_cmp(&y.0));
}

/// Relabel each collision-free stretch so the order is that of the first
/// stretch throughout.
///
/// A node is inserted at each pair crossing of the nodal path; there the
/// crossing bodies coincide, so neighbouring stretches join continuously.
/// Requires equal masses.
pub fn normalize_order(params: &SystemParams, p: &DiscretePath) -> Result<Normalized> {
    let n = p.n_bodies();
    if params.n_bodies() != n {
        return Err(Error::MassMismatch);
    }
    if !params.has_equal_masses() {
        return Err(Error::InvalidParams(
            "order normalization needs equal masses".into(),
        ));
    }
    let tol = params.collision_tol();
    let mut times = Vec::with_capacity(p.n_nodes());
    let mut nodes: Vec<Vec<f64>> = Vec::with_capacity(p.n_nodes());
    let mut inserted = Vec::new();
    let mut max_jump = 0.0f64;
    let mut crossings = Vec::new();
    for i in 0..p.n_intervals() {
        let (a, b) = (p.node(i), p.node(i + 1));
        let (ta, tb) = (p.times()[i], p.times()[i + 1]);
        times.push(ta);
        nodes.push(a.to_vec());
        interval_crossings(a, b, &mut crossings);
        let mut c = 0;
        while c < crossings.len() {
            let s = crossings[c].0;
            let t = ta + s * (tb - ta);
            let mut q: Vec<f64> = a.iter().zip(b).map(|(x, y)| x + s * (y - x)).collect();
            // pairs crossing at the same fraction share the node
            let mut end = c;
            while end < crossings.len() && crossings[end].0 == s {
                end += 1;
            }
            for &(_, j, k) in &crossings[c..end] {
                max_jump = max_jump.max((q[k] - q[j]).abs());
            }
            for &(_, j, k) in &crossings[c..end] {
                let mean = 0.5 * (q[j] + q[k]);
                q[j] = mean;
                q[k] = mean;
            }
            c = end;
            if t <= ta || t >= tb {
                continue;
            }
            times.push(t);
            nodes.push(q);
            inserted.push(t);
        }
    }
    times.push(p.t_end());
    nodes.push(p.node(p.n_intervals()).to_vec());
    if max_jump >= tol {
        let t = inserted.first().copied().unwrap_or(p.t_start());
        return Err(Error::ContinuityFailure {
            time: t,
            jump: max_jump,
        });
    }
    let source = DiscretePath::from_nodes(params, times.clone(), &nodes)?;

    // order on each sub-interval, read at its midpoint
    let mid_order = |i: usize| {
        let q: Vec<f64> = nodes[i]
            .iter()
            .zip(&nodes[i + 1])
            .map(|(x, y)| 0.5 * (x + y))
            .collect();
        strict_order(&q)
    };
    let reference = mid_order(0);
    let ref_ranks = reference.as_slice();
    let mut sections: Vec<NormalizedSection> = Vec::new();
    let mut interval_perm: Vec<usize> = Vec::with_capacity(times.len() - 1);
    for i in 0..times.len() - 1 {
        let order = mid_order(i);
        match sections.last_mut() {
            Some(s) if s.order == order => s.t_end = times[i + 1],
            _ => {
                // the body at rank r of this stretch takes the label at rank r of the reference
                let mut permutation = vec![0; n];
                for (r, &body) in order.as_slice().iter().enumerate() {
                    permutation[ref_ranks[r]] = body;
                }
                sections.push(NormalizedSection {
                    t_start: times[i],
                    t_end: times[i + 1],
                    order,
                    permutation,
                });
            }
        }
        interval_perm.push(sections.len() - 1);
    }
    let mut positions = Vec::with_capacity(times.len() * n);
    for (i, q) in nodes.iter().enumerate() {
        let s = interval_perm[i.min(interval_perm.len() - 1)];
        let tau = &sections[s].permutation;
        positions.extend(tau.iter().map(|&t| q[t]));
    }
    let path = DiscretePath::new(params, times, positions)?;
    Ok(Normalized {
        source,
        path,
        reference,
        sections,
        inserted,
        max_jump,
    })
}

/// Verdict of [`check_plateau_inequality`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub holds: bool,
    /// Smallest `A x_k'^2 + B x_k'` over the window's intervals.
    pub margin: f64,
    pub a: f64,
    pub intervals: usize,
}

/// `A x_k'^2 + B x_k'` on the intervals of the node range `window`
/// (inclusive), with interval velocities. Holds when every value is strictly
/// positive.
pub fn check_plateau_inequality(
    params: &SystemParams,
    g: &GapPath,
    gap_index: usize,
    window: (usize, usize),
) -> Result<InequalityCheck> {
    let n_gaps = g.n_gaps();
    if params.n_bodies() != n_gaps + 1 {
        return Err(Error::MassMismatch);
    }
    if gap_index >= n_gaps {
        return Err(Error::InvalidParams(format!(
            "gap index {gap_index} out of range for {n_gaps} gaps"
        )));
    }
    let (lo, hi) = window;
    if lo >= hi || hi >= g.n_nodes() {
        return Err(Error::InvalidParams(format!(
            "window {lo}..={hi} is not inside the {} nodes",
            g.n_nodes()
        )));
    }
    let m = params.masses();
    let total = params.total_mass();
    let k = gap_index;
    let left: f64 = m[..=k].iter().sum();
    let a = left * (total - left) / (2.0 * total);
    let times = g.times();
    let mut margin = f64::INFINITY;
    let mut v = vec![0.0; n_gaps];
    for i in lo..hi {
        let h = times[i + 1] - times[i];
        for (vj, (xa, xb)) in v.iter_mut().zip(g.node(i).iter().zip(g.node(i + 1))) {
            *vj = (xb - xa) / h;
        }
        let mut b = 0.0;
        for l in 0..=k {
            for r in k + 1..=n_gaps {
                let others: f64 = v[l..r].iter().sum::<f64>() - v[k];
                b += m[l] * m[r] / total * others;
            }
        }
        margin = margin.min(a * v[k] * v[k] + b * v[k]);
    }
    Ok(InequalityCheck {
        holds: margin > 0.0,
        margin,
        a,
        intervals: hi - lo,
    })
}

/// Where and how a plateau was applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateauDetail {
    pub gap: usize,
    pub delta: f64,
    pub t0: f64,
    /// Times where the gap reaches `delta` on either side.
    pub window: [f64; 2],
    /// Node range of the window on the output grid, inclusive.
    pub nodes: [usize; 2],
    /// Number of nodes inserted at the window ends.
    pub inserted: usize,
    pub inequality: InequalityCheck,
    /// Smallest other gap inside the window.
    pub min_other_gap: f64,
}

/// Result of [`plateau_deform`].
#[derive(Debug, Clone, PartialEq)]
pub struct SurgeryOutcome {
    pub path: DiscretePath,
    pub gaps: GapPath,
    pub action_before: f64,
    pub action_after: f64,
    pub applied: bool,
    pub detail: PlateauDetail,
}

/// Serializable summary of a surgery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurgeryReport {
    pub action_before: f64,
    pub action_after: f64,
    pub action_decrease: f64,
    pub applied: bool,
    pub detail: PlateauDetail,
}

impl SurgeryOutcome {
    pub fn report(&self) -> SurgeryReport {
        SurgeryReport {
            action_before: self.action_before,
            action_after: self.action_after,
            action_decrease: self.action_before - self.action_after,
            applied: self.applied,
            detail: self.detail.clone(),
        }
    }

    pub fn write_report_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, &self.report())?;
        Ok(())
    }
}

/// Fraction along `[a, b]` where a linear function reaches `level`.
fn level_fraction(a: f64, b: f64, level: f64) -> f64 {
    ((level - a) / (b - a)).clamp(0.0, 1.0)
}

/// Replace gap `k` by `delta` on the maximal window around `t0` where it
/// stays at or below `delta`, and compare the actions at `eps = 0`.
///
/// Window ends are located by linear interpolation and inserted as nodes
/// unless they fall on existing ones.
pub fn plateau_deform(
    params: &SystemParams,
    g: &GapPath,
    k: usize,
    t0: f64,
    delta: f64,
) -> Result<SurgeryOutcome> {
    let n_gaps = g.n_gaps();
    if params.n_bodies() != n_gaps + 1 {
        return Err(Error::MassMismatch);
    }
    if k >= n_gaps {
        return Err(Error::InvalidParams(format!(
            "gap index {k} out of range for {n_gaps} gaps"
        )));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "delta must be positive, got {delta}"
        )));
    }
    let times = g.times();
    let x = g.gap_series(k);
    let last = x.len() - 1;
    if t0 < times[0] || t0 > times[last] {
        return Err(Error::InvalidParams(format!(
            "t0 = {t0} lies outside the grid"
        )));
    }
    // deepest node within one step of t0
    let j = times.partition_point(|&t| t < t0).min(last);
    let center = [j.saturating_sub(1), j, (j + 1).min(last)]
        .into_iter()
        .min_by(|&a, &b| x[a].total_cmp(&x[b]))
        .unwrap();
    if x[center] > delta {
        return Err(Error::WindowNotFound {
            gap: k,
            side: "center",
        });
    }
    if x.iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidPath(format!(
            "gap {k} changes sign; normalize the order first"
        )));
    }
    let mut lo = center;
    while x[lo] <= delta {
        if lo == 0 {
            return Err(Error::WindowNotFound {
                gap: k,
                side: "left",
            });
        }
        lo -= 1;
    }
    let mut hi = center;
    while x[hi] <= delta {
        if hi == last {
            return Err(Error::WindowNotFound {
                gap: k,
                side: "right",
            });
        }
        hi += 1;
    }
    // x[lo] > delta >= x[lo + 1]; x[hi - 1] <= delta < x[hi]
    let s_lo = level_fraction(x[lo], x[lo + 1], delta);
    let s_hi = level_fraction(x[hi - 1], x[hi], delta);
    let interp = |i: usize, s: f64| -> Vec<f64> {
        g.node(i)
            .iter()
            .zip(g.node(i + 1))
            .map(|(a, b)| a + s * (b - a))
            .collect()
    };

    let mut new_times: Vec<f64> = Vec::with_capacity(times.len() + 2);
    let mut new_gaps: Vec<f64> = Vec::with_capacity((times.len() + 2) * n_gaps);
    let mut push = |t: f64, node: &[f64]| {
        new_times.push(t);
        new_gaps.extend_from_slice(node);
    };
    let mut inserted = 0;
    for (i, &t) in times.iter().enumerate().take(lo + 1) {
        push(t, g.node(i));
    }
    if s_lo < 1.0 {
        push(
            times[lo] + s_lo * (times[lo + 1] - times[lo]),
            &interp(lo, s_lo),
        );
        inserted += 1;
    }
    for (i, &t) in times.iter().enumerate().take(hi).skip(lo + 1) {
        push(t, g.node(i));
    }
    if s_hi > 0.0 {
        push(
            times[hi - 1] + s_hi * (times[hi] - times[hi - 1]),
            &interp(hi - 1, s_hi),
        );
        inserted += 1;
    }
    for (i, &t) in times.iter().enumerate().skip(hi) {
        push(t, g.node(i));
    }
    let start = lo + 1;
    let end = hi - 1 + inserted;
    for i in [start, end] {
        new_gaps[i * n_gaps + k] = delta;
    }
    let before = GapPath::new(new_times.clone(), n_gaps, new_gaps.clone())?;
    let inequality = check_plateau_inequality(params, &before, k, (start, end))?;
    let mut applied = false;
    let mut min_other = f64::INFINITY;
    for i in start..=end {
        let node = &mut new_gaps[i * n_gaps..(i + 1) * n_gaps];
        if node[k] < delta {
            applied = true;
        }
        node[k] = delta;
        for (j, &v) in node.iter().enumerate() {
            if j != k {
                min_other = min_other.min(v);
            }
        }
    }
    let after = GapPath::new(new_times, n_gaps, new_gaps)?;
    let action_before = gap_action(params, &before, 0.0)?;
    let path = after.to_path(params)?;
    let action_after = action(params, &path, 0.0)?;
    let window = [before.times()[start], before.times()[end]];
    Ok(SurgeryOutcome {
        path,
        gaps: after,
        action_before,
        action_after,
        applied,
        detail: PlateauDetail {
            gap: k,
            delta,
            t0,
            window,
            nodes: [start, end],
            inserted,
            inequality,
            min_other_gap: min_other,
        },
    })
}

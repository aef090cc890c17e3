//! Force function, kinetic energy and the discretized action.
//!
//! The action of a nodal path is the composite quadrature
//!
//! ```text
//! A = sum_i [ h_i * K((q_{i+1} - q_i) / h_i) + Q_i ]
//! ```
//!
//! where `K` is the kinetic energy of the interval's constant velocity and
//! `Q_i` is the trapezoidal rule for the force function on the interval,
//! sub-sampled `quadrature_refinement` times along the linear interpolant when
//! a nodal pair distance is below `10 * collision_tol`.
//!
//! On an interval where the separation `d` of a pair changes sign, the
//! linear interpolant passes through a collision and the rules above badly
//! underestimate that pair's share of the action. There the pair's kinetic
//! term (through the Lagrange identity) and its potential are instead
//! integrated exactly along the path on which `sign(d) |d|^(1/beta)` is linear
//! in time, `beta = 2 / (2 + alpha)`, which is the local shape of a collision
//! solution. The replacement is weighted by `|da db| / (|da db| + eps^2)`
//! for nodal separations `da`, `db`, so that it switches off smoothly where
//! the regularization dominates. Collision-free paths never trigger this.
//!
//! Per-node sums are accumulated in ascending order of their terms, so that
//! relabeling bodies of equal mass reproduces the action bit for bit.

use crate::error::{Error, Result};
use crate::model::{DiscretePath, GapPath, SystemParams};

/// Value of one pair term `c m_a m_b (d^2 + eps^2)^(-alpha/2)` and its
/// derivative with respect to the signed separation `d`.
#[inline]
fn pair_term(coef: f64, alpha: f64, d: f64, eps: f64) -> (f64, f64) {
    let s = d * d + eps * eps;
    let inv = if alpha == 1.0 {
        1.0 / s.sqrt()
    } else {
        s.powf(-0.5 * alpha)
    };
    let value = coef * inv;
    (value, -alpha * value * d / s)
}

fn canonical_sum(terms: &mut [f64]) -> f64 {
    terms.sort_unstable_by(f64::total_cmp);
    terms.iter().sum()
}

/// Replacement of one pair's share of an interval `[t, t + h]` whose nodal
/// separations `da`, `db` have opposite signs. `kin_coef = m_a m_b / (2M)`,
/// `pot_coef = c m_a m_b`; `standard` is the pair's share under the regular
/// rules as `(value, d/dda, d/ddb)`. Returns the correction to add, with its
/// derivatives in `da` and `db`.
fn crossing_correction(
    kin_coef: f64,
    pot_coef: f64,
    beta: f64,
    h: f64,
    da: f64,
    db: f64,
    standard: (f64, f64, f64),
) -> (f64, f64, f64) {
    let p = 1.0 / beta;
    let gamma = 2.0 * beta - 1.0;
    let wa = da.signum() * da.abs().powf(p);
    let wb = db.signum() * db.abs().powf(p);
    let big_h = |w: f64| w.signum() * w.abs().powf(gamma) / gamma;
    let dh = |w: f64| w.abs().powf(gamma - 1.0);
    let s = big_h(wb) - big_h(wa);
    let delta = wb - wa;
    let kc = kin_coef * beta * beta;
    let kin = kc * delta * s / h;
    let pot = pot_coef * h * s / delta;
    let dwa =
        kc * (-s - delta * dh(wa)) / h + pot_coef * h * (s - dh(wa) * delta) / (delta * delta);
    let dwb = kc * (s + delta * dh(wb)) / h + pot_coef * h * (dh(wb) * delta - s) / (delta * delta);
    let dda = dwa * p * da.abs().powf(p - 1.0);
    let ddb = dwb * p * db.abs().powf(p - 1.0);
    (kin + pot - standard.0, dda - standard.1, ddb - standard.2)
}

/// The pair's share of an interval under the regular rules.
#[allow(clippy::too_many_arguments)]
fn standard_pair_share(
    kin_coef: f64,
    pot_coef: f64,
    alpha: f64,
    eps: f64,
    h: f64,
    da: f64,
    db: f64,
    refine: usize,
) -> (f64, f64, f64) {
    let dd = db - da;
    let mut value = kin_coef * dd * dd / h;
    let mut ga = -2.0 * kin_coef * dd / h;
    let mut gb = -ga;
    let (ua, fa) = pair_term(pot_coef, alpha, da, eps);
    let (ub, fb) = pair_term(pot_coef, alpha, db, eps);
    let w = h / refine as f64;
    value += 0.5 * w * (ua + ub);
    ga += 0.5 * w * fa;
    gb += 0.5 * w * fb;
    for s in 1..refine {
        let sigma = s as f64 / refine as f64;
        let (u, f) = pair_term(pot_coef, alpha, da + sigma * dd, eps);
        value += w * u;
        ga += w * (1.0 - sigma) * f;
        gb += w * sigma * f;
    }
    (value, ga, gb)
}

/// Corrections for every pair crossing inside the interval; `sep` maps a node
/// to its pair separations, `weights` holds `m_a m_b` per pair.
#[allow(clippy::too_many_arguments)]
fn crossing_corrections(
    params: &SystemParams,
    weights: &[f64],
    sep_a: &[f64],
    sep_b: &[f64],
    h: f64,
    eps: f64,
    refine: usize,
    out: &mut Vec<(usize, f64, f64, f64)>,
) {
    out.clear();
    let total_mass = params.total_mass();
    let (c, alpha, beta) = (
        params.coupling(),
        params.alpha(),
        params.collision_exponent(),
    );
    for (p, ((&da, &db), &w)) in sep_a.iter().zip(sep_b).zip(weights).enumerate() {
        if (da > 0.0 && db < 0.0) || (da < 0.0 && db > 0.0) {
            let kin_coef = w / (2.0 * total_mass);
            let standard = standard_pair_share(kin_coef, c * w, alpha, eps, h, da, db, refine);
            let (v, ga, gb) = crossing_correction(kin_coef, c * w, beta, h, da, db, standard);
            // fade the correction in once the nodal gaps clear the regularization
            // scale, keeping the regularized action continuous when a node
            // passes through the collision
            let g = -da * db;
            let e2 = eps * eps;
            let omega = g / (g + e2);
            let dscale = e2 / ((g + e2) * (g + e2));
            out.push((
                p,
                omega * v,
                omega * ga - v * dscale * db,
                omega * gb - v * dscale * da,
            ));
        }
    }
}

/// Scratch buffers reused across nodes.
struct Workspace {
    terms: Vec<f64>,
    sub: Vec<f64>,
    force: Vec<f64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Self {
            terms: Vec::with_capacity(n * n),
            sub: vec![0.0; n],
            force: vec![0.0; n],
        }
    }
}

fn potential_at(params: &SystemParams, q: &[f64], eps: f64, terms: &mut Vec<f64>) -> Result<f64> {
    let m = params.masses();
    let (c, alpha) = (params.coupling(), params.alpha());
    terms.clear();
    for k in 0..q.len() {
        for j in k + 1..q.len() {
            let d = q[j] - q[k];
            if eps == 0.0 && d == 0.0 {
                return Err(Error::CollisionSingularity(k, j));
            }
            terms.push(pair_term(c * m[k] * m[j], alpha, d, eps).0);
        }
    }
    Ok(canonical_sum(terms))
}

/// Accumulate `weight * dU/dq` into `grad`.
fn potential_gradient_at(
    params: &SystemParams,
    q: &[f64],
    eps: f64,
    weight: f64,
    grad: &mut [f64],
) {
    let m = params.masses();
    let (c, alpha) = (params.coupling(), params.alpha());
    for k in 0..q.len() {
        for j in k + 1..q.len() {
            let d = q[j] - q[k];
            let (_, dd) = pair_term(c * m[k] * m[j], alpha, d, eps);
            grad[j] += weight * dd;
            grad[k] -= weight * dd;
        }
    }
}

/// Force function `U(q) = c * sum_{k<j} m_k m_j / |q_k - q_j|^alpha`.
pub fn potential(params: &SystemParams, positions: &[f64]) -> Result<f64> {
    potential_at(params, positions, 0.0, &mut Vec::new())
}

/// Smoothed force function with pair terms `(|q_k - q_j|^2 + eps^2)^(-alpha/2)`.
pub fn regularized_potential(params: &SystemParams, positions: &[f64], eps: f64) -> f64 {
    assert!(eps > 0.0, "regularization must be positive");
    potential_at(params, positions, eps, &mut Vec::new()).expect("regularized potential is finite")
}

/// Gradient `dU/dq_j` of the (optionally regularized) force function.
pub fn potential_gradient(params: &SystemParams, positions: &[f64], eps: f64) -> Result<Vec<f64>> {
    if eps == 0.0 {
        for k in 0..positions.len() {
            for j in k + 1..positions.len() {
                if positions[j] == positions[k] {
                    return Err(Error::CollisionSingularity(k, j));
                }
            }
        }
    }
    let mut g = vec![0.0; positions.len()];
    potential_gradient_at(params, positions, eps, 1.0, &mut g);
    Ok(g)
}

/// Moment of inertia `sum_j m_j q_j^2`.
pub fn moment_of_inertia(params: &SystemParams, positions: &[f64]) -> f64 {
    positions
        .iter()
        .zip(params.masses())
        .map(|(q, m)| m * q * q)
        .sum()
}

/// Kinetic energy `sum_j m_j v_j^2 / 2`.
pub fn kinetic(params: &SystemParams, velocities: &[f64]) -> f64 {
    let mut terms: Vec<f64> = velocities
        .iter()
        .zip(params.masses())
        .map(|(v, m)| 0.5 * m * v * v)
        .collect();
    canonical_sum(&mut terms)
}

fn refine_interval(params: &SystemParams, a: &[f64], b: &[f64]) -> bool {
    if params.quadrature_refinement() <= 1 {
        return false;
    }
    let floor = 10.0 * params.collision_tol();
    for k in 0..a.len() {
        for j in k + 1..a.len() {
            if (a[j] - a[k]).abs() < floor || (b[j] - b[k]).abs() < floor {
                return true;
            }
        }
    }
    false
}

/// Which intervals the refinement rule sub-samples.
pub(crate) fn refinement_mask(params: &SystemParams, positions: &[f64]) -> Vec<bool> {
    let n = params.n_bodies();
    let nodes: Vec<&[f64]> = positions.chunks(n).collect();
    nodes
        .windows(2)
        .map(|w| refine_interval(params, w[0], w[1]))
        .collect()
}

/// Discrete action of a nodal path. `eps = 0` evaluates the singular force
/// function and fails on an exact collision at a quadrature point.
pub fn action(params: &SystemParams, path: &DiscretePath, eps: f64) -> Result<f64> {
    action_raw(params, path.times(), path.positions(), eps)
}

pub(crate) fn action_raw(
    params: &SystemParams,
    times: &[f64],
    positions: &[f64],
    eps: f64,
) -> Result<f64> {
    let n = params.n_bodies();
    let masses = params.masses();
    let refine = params.quadrature_refinement();
    let mut ws = Workspace::new(n);
    let weights = pair_weights(masses);
    let (mut sep_a, mut sep_b, mut corr) = (Vec::new(), Vec::new(), Vec::new());
    let node_u: Vec<f64> = positions
        .chunks(n)
        .map(|q| potential_at(params, q, eps, &mut ws.terms))
        .collect::<Result<_>>()?;
    let mut total = 0.0;
    for i in 0..times.len() - 1 {
        let h = times[i + 1] - times[i];
        let a = &positions[i * n..(i + 1) * n];
        let b = &positions[(i + 1) * n..(i + 2) * n];
        ws.terms.clear();
        ws.terms.extend((0..n).map(|j| {
            let v = (b[j] - a[j]) / h;
            0.5 * masses[j] * v * v
        }));
        let kin = canonical_sum(&mut ws.terms);
        let refined = refine_interval(params, a, b);
        let quad = if refined {
            let mut acc = 0.5 * (node_u[i] + node_u[i + 1]);
            for s in 1..refine {
                let sigma = s as f64 / refine as f64;
                for j in 0..n {
                    ws.sub[j] = a[j] + sigma * (b[j] - a[j]);
                }
                acc += potential_at(params, &ws.sub, eps, &mut ws.terms)?;
            }
            acc * h / refine as f64
        } else {
            0.5 * h * (node_u[i] + node_u[i + 1])
        };
        pair_separations(a, &mut sep_a);
        pair_separations(b, &mut sep_b);
        let r = if refined { refine } else { 1 };
        crossing_corrections(params, &weights, &sep_a, &sep_b, h, eps, r, &mut corr);
        ws.terms.clear();
        ws.terms.extend(corr.iter().map(|c| c.1));
        total += h * kin + quad + canonical_sum(&mut ws.terms);
    }
    Ok(total)
}

/// `m_a m_b` for every pair `a < b`, in the order of [`pair_separations`].
fn pair_weights(masses: &[f64]) -> Vec<f64> {
    let n = masses.len();
    (0..n)
        .flat_map(|a| (a + 1..n).map(move |b| masses[a] * masses[b]))
        .collect()
}

/// `q_b - q_a` for every pair `a < b`.
fn pair_separations(q: &[f64], out: &mut Vec<f64>) {
    out.clear();
    for a in 0..q.len() {
        for b in a + 1..q.len() {
            out.push(q[b] - q[a]);
        }
    }
}

/// Action together with its gradient with respect to every nodal position
/// (endpoints included). `eps` must be positive. A `mask` overrides the
/// refinement rule per interval.
pub(crate) fn action_and_gradient_raw(
    params: &SystemParams,
    times: &[f64],
    positions: &[f64],
    eps: f64,
    mask: Option<&[bool]>,
    grad: &mut [f64],
) -> f64 {
    let n = params.n_bodies();
    let masses = params.masses();
    let refine = params.quadrature_refinement();
    let mut ws = Workspace::new(n);
    let weights = pair_weights(masses);
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
        .collect();
    let (mut sep_a, mut sep_b, mut corr) = (Vec::new(), Vec::new(), Vec::new());
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut total = 0.0;
    let mut node_u = Vec::with_capacity(times.len());
    for q in positions.chunks(n) {
        node_u.push(potential_at(params, q, eps, &mut ws.terms).expect("regularized"));
    }
    for i in 0..times.len() - 1 {
        let h = times[i + 1] - times[i];
        let (a, b) = (
            &positions[i * n..(i + 1) * n],
            &positions[(i + 1) * n..(i + 2) * n],
        );
        let mut kin = 0.0;
        for j in 0..n {
            let dv = b[j] - a[j];
            kin += 0.5 * masses[j] * dv * dv / h;
            let f = masses[j] * dv / h;
            grad[i * n + j] -= f;
            grad[(i + 1) * n + j] += f;
        }
        let refined = refine > 1 && mask.map_or_else(|| refine_interval(params, a, b), |m| m[i]);
        let quad = if refined {
            let w = h / refine as f64;
            let mut acc = 0.5 * (node_u[i] + node_u[i + 1]);
            for s in 1..refine {
                let sigma = s as f64 / refine as f64;
                for j in 0..n {
                    ws.sub[j] = a[j] + sigma * (b[j] - a[j]);
                }
                acc += potential_at(params, &ws.sub, eps, &mut ws.terms).expect("regularized");
                ws.force.iter_mut().for_each(|f| *f = 0.0);
                potential_gradient_at(params, &ws.sub, eps, w, &mut ws.force);
                for j in 0..n {
                    grad[i * n + j] += (1.0 - sigma) * ws.force[j];
                    grad[(i + 1) * n + j] += sigma * ws.force[j];
                }
            }
            potential_gradient_at(params, a, eps, 0.5 * w, &mut grad[i * n..(i + 1) * n]);
            potential_gradient_at(params, b, eps, 0.5 * w, &mut grad[(i + 1) * n..(i + 2) * n]);
            acc * w
        } else {
            potential_gradient_at(params, a, eps, 0.5 * h, &mut grad[i * n..(i + 1) * n]);
            potential_gradient_at(params, b, eps, 0.5 * h, &mut grad[(i + 1) * n..(i + 2) * n]);
            0.5 * h * (node_u[i] + node_u[i + 1])
        };
        pair_separations(a, &mut sep_a);
        pair_separations(b, &mut sep_b);
        let r = if refined { refine } else { 1 };
        crossing_corrections(params, &weights, &sep_a, &sep_b, h, eps, r, &mut corr);
        let mut c_total = 0.0;
        for &(p, v, ga, gb) in &corr {
            let (lo, hi) = pairs[p];
            c_total += v;
            grad[i * n + hi] += ga;
            grad[i * n + lo] -= ga;
            grad[(i + 1) * n + hi] += gb;
            grad[(i + 1) * n + lo] -= gb;
        }
        total += kin + quad + c_total;
    }
    total
}

/// Map a raw gradient row to the steepest-ascent direction in the kinetic
/// (mass) metric, restricted to zero center of mass:
/// `d_j = g_j / m_j - (sum g) / (sum m)`.
fn mass_metric_direction(masses: &[f64], g: &[f64], out: &mut [f64]) {
    let total_mass: f64 = masses.iter().sum();
    let shift = g.iter().sum::<f64>() / total_mass;
    for ((o, gj), m) in out.iter_mut().zip(g).zip(masses) {
        *o = gj / m - shift;
    }
}

/// Gradient of the regularized action with respect to the interior nodes,
/// expressed as a direction in the mass metric and projected onto the
/// zero-center-of-mass subspace. Row `i` of the result belongs to node `i + 1`.
///
/// For a feasible perturbation `v` (zero center of mass at every node) the
/// directional derivative of the action is `sum_i sum_j m_j d_ij v_ij`.
pub fn action_gradient(params: &SystemParams, path: &DiscretePath, eps: f64) -> Vec<f64> {
    assert!(
        eps > 0.0,
        "the action gradient is taken of the regularized action"
    );
    let n = params.n_bodies();
    let mut raw = vec![0.0; path.positions().len()];
    action_and_gradient_raw(params, path.times(), path.positions(), eps, None, &mut raw);
    let interior = &raw[n..raw.len() - n];
    let mut out = vec![0.0; interior.len()];
    for (g, o) in interior.chunks(n).zip(out.chunks_mut(n)) {
        mass_metric_direction(params.masses(), g, o);
    }
    out
}

/// Action of a gap path through the pair-sum form
///
/// ```text
/// F(x) = int sum_{l<k} m_k m_l / (2M) [ |sum_{j=l}^{k-1} x_j'|^2 + 2 M c / |sum_{j=l}^{k-1} x_j|^alpha ] dt
/// ```
///
/// using the same quadrature as [`action`]. On center-of-mass paths the two agree.
pub fn gap_action(params: &SystemParams, gaps: &GapPath, eps: f64) -> Result<f64> {
    let n = params.n_bodies();
    if gaps.n_gaps() + 1 != n {
        return Err(Error::InvalidPath(format!(
            "{} gaps do not describe {} bodies",
            gaps.n_gaps(),
            n
        )));
    }
    let m = params.masses();
    let total_mass = params.total_mass();
    let (c, alpha) = (params.coupling(), params.alpha());
    let times = gaps.times();
    let refine = params.quadrature_refinement();
    let floor = 10.0 * params.collision_tol();
    let mut terms = Vec::with_capacity(n * n);

    // pair separations sum_{j=l}^{k-1} x_j for all l < k
    let separations = |x: &[f64], out: &mut Vec<f64>| {
        out.clear();
        for l in 0..n {
            let mut acc = 0.0;
            for xk in &x[l..n - 1] {
                acc += xk;
                out.push(acc);
            }
        }
    };
    let pair_weights: Vec<f64> = (0..n)
        .flat_map(|l| (l + 1..n).map(move |k| m[k] * m[l]))
        .collect();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|l| (l + 1..n).map(move |k| (l, k)))
        .collect();

    let pot = |sep: &[f64], terms: &mut Vec<f64>| -> Result<f64> {
        terms.clear();
        for ((s, w), &(l, k)) in sep.iter().zip(&pair_weights).zip(&pairs) {
            if eps == 0.0 && *s == 0.0 {
                return Err(Error::CollisionSingularity(l, k));
            }
            terms.push(pair_term(c * w, alpha, *s, eps).0);
        }
        Ok(canonical_sum(terms))
    };

    let mut sep_a = Vec::new();
    let mut sep_b = Vec::new();
    let mut sep_s = Vec::new();
    let mut vel = Vec::new();
    let mut vel_sep = Vec::new();
    let mut sub = vec![0.0; n - 1];
    let mut corr = Vec::new();
    let mut total = 0.0;
    for i in 0..times.len() - 1 {
        let h = times[i + 1] - times[i];
        let (a, b) = (gaps.node(i), gaps.node(i + 1));
        separations(a, &mut sep_a);
        separations(b, &mut sep_b);
        vel.clear();
        vel.extend(a.iter().zip(b).map(|(xa, xb)| (xb - xa) / h));
        separations(&vel, &mut vel_sep);
        terms.clear();
        terms.extend(
            vel_sep
                .iter()
                .zip(&pair_weights)
                .map(|(v, w)| w / (2.0 * total_mass) * v * v),
        );
        let kin = canonical_sum(&mut terms);
        let ua = pot(&sep_a, &mut terms)?;
        let ub = pot(&sep_b, &mut terms)?;
        let refined = refine > 1 && sep_a.iter().chain(&sep_b).any(|s| s.abs() < floor);
        let quad = if refined {
            let mut acc = 0.5 * (ua + ub);
            for s in 1..refine {
                let sigma = s as f64 / refine as f64;
                for k in 0..n - 1 {
                    sub[k] = a[k] + sigma * (b[k] - a[k]);
                }
                separations(&sub, &mut sep_s);
                acc += pot(&sep_s, &mut terms)?;
            }
            acc * h / refine as f64
        } else {
            0.5 * h * (ua + ub)
        };
        let r = if refined { refine } else { 1 };
        crossing_corrections(params, &pair_weights, &sep_a, &sep_b, h, eps, r, &mut corr);
        terms.clear();
        terms.extend(corr.iter().map(|c| c.1));
        total += h * kin + quad + canonical_sum(&mut terms);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::uniform_times;

    #[test]
    fn two_body_unit_distance() {
        let p = SystemParams::equal_masses(2).unwrap();
        assert_eq!(potential(&p, &[-0.5, 0.5]).unwrap(), 1.0);
    }

    #[test]
    fn three_body_line() {
        let p = SystemParams::equal_masses(3).unwrap();
        assert_eq!(potential(&p, &[-1.0, 0.0, 1.0]).unwrap(), 2.5);
    }

    #[test]
    fn exact_collision_is_singular() {
        let p = SystemParams::equal_masses(3).unwrap();
        assert!(matches!(
            potential(&p, &[0.0, 0.0, 1.0]),
            Err(Error::CollisionSingularity(0, 1))
        ));
    }

    #[test]
    fn regularized_at_zero_gap() {
        let p = SystemParams::equal_masses(2).unwrap();
        let u = regularized_potential(&p, &[0.0, 0.0], 0.1);
        assert!((u - 10.0).abs() < 1e-12);
    }

    #[test]
    fn regularized_close_to_exact_for_wide_gaps() {
        let p = SystemParams::new(vec![1.0, 2.0, 0.5]).unwrap();
        let q = [-2.0, 0.5, 3.0];
        let exact = potential(&p, &q).unwrap();
        for eps in [1e-2, 1e-3] {
            let reg = regularized_potential(&p, &q, eps);
            assert!(reg < exact);
            // O(eps^2) with gaps >= 2.5
            assert!(exact - reg < 2.0 * eps * eps);
        }
    }

    #[test]
    fn kinetic_examples() {
        let p = SystemParams::equal_masses(2).unwrap();
        assert_eq!(kinetic(&p, &[0.0, 0.0]), 0.0);
        assert_eq!(kinetic(&p, &[1.0, -1.0]), 1.0);
    }

    #[test]
    fn rest_path_action() {
        let p = SystemParams::equal_masses(2).unwrap();
        let path =
            DiscretePath::sample(&p, uniform_times(0.0, 1.0, 16), |_| vec![-1.0, 1.0]).unwrap();
        assert!((action(&p, &path, 0.0).unwrap() - 0.5).abs() < 1e-15);
        let gaps = GapPath::from_path(&path);
        assert!((gap_action(&p, &gaps, 0.0).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn refinement_uses_interpolated_samples() {
        // nodal gap below 10 * tol triggers sub-sampling
        let p = SystemParams::equal_masses(2)
            .unwrap()
            .with_collision_tol(0.1)
            .unwrap()
            .with_quadrature_refinement(4)
            .unwrap();
        let path = DiscretePath::new(
            &p,
            vec![0.0, 0.5, 1.0],
            vec![-1.0, 1.0, -0.25, 0.25, -1.0, 1.0],
        )
        .unwrap();
        let a = action(&p, &path, 0.0).unwrap();
        // oracle: explicit trapezoid on 4 sub-intervals per interval
        let mut oracle = 0.0;
        for (ga, gb) in [(2.0, 0.5), (0.5, 2.0)] {
            let h = 0.5;
            let v: f64 = (gb - ga) / h;
            oracle += h * 0.25 * v * v;
            let f = |s: f64| 1.0 / (ga + s * (gb - ga));
            let mut acc = 0.5 * (f(0.0) + f(1.0));
            for s in 1..4 {
                acc += f(s as f64 / 4.0);
            }
            oracle += acc * h / 4.0;
        }
        assert!((a - oracle).abs() < 1e-14);
    }

    #[test]
    fn crossing_interval_is_exact_for_collision_shape() {
        // |d|^(3/2) linear in t: d = 2 sign(t - 1/2) |t - 1/2|^(2/3) * k
        let p = SystemParams::equal_masses(2).unwrap();
        let t0 = 0.43;
        let d = |t: f64| (t - t0).signum() * 2.0 * (t - t0).abs().powf(2.0 / 3.0);
        let path = DiscretePath::new(&p, vec![0.4, 0.45, 0.5], {
            [0.4, 0.45, 0.5]
                .iter()
                .flat_map(|&t| [-0.5 * d(t), 0.5 * d(t)])
                .collect()
        })
        .unwrap();
        let a = action(&p, &path, 0.0).unwrap();
        // oracle: int d'^2 / 4 + 1 / |d| dt in closed form on the crossing interval
        let primitive =
            |x: f64| 0.25 * 16.0 / 9.0 * 3.0 * x.powf(1.0 / 3.0) + 0.5 * 3.0 * x.powf(1.0 / 3.0);
        let first = primitive(t0 - 0.4) + primitive(0.45 - t0);
        let h = 0.05;
        let v = (d(0.5) - d(0.45)) / h;
        let second = h * 0.25 * v * v + 0.5 * h * (1.0 / d(0.45) + 1.0 / d(0.5));
        assert!(
            (a - first - second).abs() < 1e-12,
            "{a} vs {}",
            first + second
        );
    }

    #[test]
    fn gradient_matches_differences_across_crossings() {
        let p = SystemParams::new(vec![1.0, 2.0, 0.7]).unwrap();
        let times = uniform_times(0.0, 1.0, 12);
        let path = DiscretePath::sample(&p, times.clone(), |t| {
            vec![-1.0 + 2.3 * t, 0.1 * (5.0 * t).sin(), 1.2 - 2.0 * t * t]
        })
        .unwrap();
        let eps = 1e-3;
        let mut grad = vec![0.0; path.positions().len()];
        action_and_gradient_raw(&p, &times, path.positions(), eps, None, &mut grad);
        let mut x = path.positions().to_vec();
        for idx in 3..x.len() - 3 {
            let h = 1e-6;
            let x0 = x[idx];
            x[idx] = x0 + h;
            let fp = action_raw(&p, &times, &x, eps).unwrap();
            x[idx] = x0 - h;
            let fm = action_raw(&p, &times, &x, eps).unwrap();
            x[idx] = x0;
            let fd = (fp - fm) / (2.0 * h);
            assert!(
                (fd - grad[idx]).abs() < 1e-5 * (1.0 + fd.abs()),
                "{idx}: {fd} vs {}",
                grad[idx]
            );
        }
    }
}

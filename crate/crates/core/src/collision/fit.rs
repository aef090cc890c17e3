//! Power-law fits around a collision moment.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{ClusterFit, CollisionEvent, FLOOR_FACTOR, MIN_FIT_R2};
use crate::central_config::scaled_cc_residual;
use crate::error::{Error, Result};
use crate::model::{DiscretePath, SystemParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOptions {
    /// Nodes per side used by the fits.
    pub window: usize,
    /// Nodes nearest the collision left out on each side, where the grid
    /// cannot resolve the singular behaviour.
    pub skip: usize,
    pub min_window: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            window: 12,
            skip: 2,
            min_window: 6,
        }
    }
}

fn diameter(q: &[f64], bodies: &[usize]) -> f64 {
    let (lo, hi) = bodies
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &b| {
            (lo.min(q[b]), hi.max(q[b]))
        });
    hi - lo
}

fn lstsq(design: DMatrix<f64>, y: DVector<f64>) -> (DVector<f64>, f64) {
    let svd = design.clone().svd(true, true);
    let coef = svd.solve(&y, 1e-14).expect("SVD solve");
    let res = design * &coef - y;
    (coef, res.norm_squared())
}

/// Node indices on one side of `t0`, nearest first, skipping `opts.skip`
/// nodes and any below the regularization floor, staying inside `bounds`.
fn side_nodes(
    path: &DiscretePath,
    params: &SystemParams,
    bodies: &[usize],
    anchor: usize,
    side: Side,
    bounds: (f64, f64),
    opts: &FitOptions,
) -> Vec<usize> {
    let floor = FLOOR_FACTOR * params.collision_tol();
    let last = path.n_nodes() - 1;
    let candidates: Box<dyn Iterator<Item = usize>> = match side {
        Side::Left => Box::new((0..=anchor.saturating_sub(opts.skip)).rev()),
        Side::Right => Box::new((anchor + opts.skip).min(last + 1)..=last),
    };
    let times = path.times();
    candidates
        .take_while(|&i| times[i] >= bounds.0 && times[i] <= bounds.1)
        .filter(|&i| diameter(path.node(i), bodies) >= floor)
        .take(opts.window)
        .collect()
}

fn nearest_node(times: &[f64], t: f64) -> usize {
    let i = times.partition_point(|&x| x < t).min(times.len() - 1);
    if i > 0 && (t - times[i - 1]) < (times[i] - t) {
        i - 1
    } else {
        i
    }
}

struct Windows {
    left: Vec<usize>,
    right: Vec<usize>,
}

impl Windows {
    fn new(
        path: &DiscretePath,
        params: &SystemParams,
        bodies: &[usize],
        t_guess: f64,
        bounds: (f64, f64),
        opts: &FitOptions,
    ) -> Self {
        let anchor = nearest_node(path.times(), t_guess);
        Self {
            left: side_nodes(path, params, bodies, anchor, Side::Left, bounds, opts),
            right: side_nodes(path, params, bodies, anchor, Side::Right, bounds, opts),
        }
    }

    /// Side with more usable nodes; left on ties.
    fn best(&self) -> (Side, &[usize]) {
        if self.right.len() > self.left.len() {
            (Side::Right, &self.right)
        } else {
            (Side::Left, &self.left)
        }
    }

    fn side(&self, side: Side) -> &[usize] {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }
}

/// Sum of squared residuals of `D^(1/beta) ~ a tau + b tau^(1 + alpha beta)` on one side.
fn side_sse(
    path: &DiscretePath,
    params: &SystemParams,
    bodies: &[usize],
    nodes: &[usize],
    t0: f64,
) -> f64 {
    let beta = params.collision_exponent();
    let lead = params.alpha() * beta;
    if nodes.len() < 3 {
        return 0.0;
    }
    let times = path.times();
    let tau: Vec<f64> = nodes.iter().map(|&i| (times[i] - t0).abs()).collect();
    let design = DMatrix::from_fn(nodes.len(), 2, |r, c| {
        if c == 0 {
            tau[r]
        } else {
            tau[r].powf(1.0 + lead)
        }
    });
    let y = DVector::from_iterator(
        nodes.len(),
        nodes
            .iter()
            .map(|&i| diameter(path.node(i), bodies).powf(1.0 / beta)),
    );
    lstsq(design, y).1
}

fn golden_section<F: FnMut(f64) -> f64>(mut a: f64, mut b: f64, mut f: F) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..100 {
        if b - a <= 1e-15 * (1.0 + a.abs().max(b.abs())) {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Collision time of the cluster `bodies`: the `t0` within one grid step of
/// `t_guess` that best fits the asymptotic form of the cluster diameter on
/// both sides.
pub fn refine_t0(
    path: &DiscretePath,
    params: &SystemParams,
    bodies: &[usize],
    t_guess: f64,
    bounds: (f64, f64),
    opts: &FitOptions,
) -> f64 {
    let times = path.times();
    let anchor = nearest_node(times, t_guess);
    let lo = times[anchor.saturating_sub(1)].max(bounds.0);
    let hi = times[(anchor + 1).min(times.len() - 1)].min(bounds.1);
    let w = Windows::new(path, params, bodies, t_guess, bounds, opts);
    if w.left.len() < 3 && w.right.len() < 3 {
        return t_guess;
    }
    let sse = |t0: f64| {
        side_sse(path, params, bodies, &w.left, t0) + side_sse(path, params, bodies, &w.right, t0)
    };
    let t = golden_section(lo, hi, sse);
    // keep the detector estimate if the fit is not better there
    if sse(t_guess) <= sse(t) {
        t_guess
    } else {
        t
    }
}

/// Result of [`fit_exponent`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExponentFit {
    pub t0: f64,
    pub side: Side,
    pub nodes: Vec<usize>,
    pub exponent: f64,
    pub r2: f64,
}

fn event_cluster(event: &CollisionEvent, cluster_index: usize) -> Result<&[usize]> {
    let cluster = event
        .clusters
        .get(cluster_index)
        .ok_or_else(|| Error::InvalidParams(format!("no cluster {cluster_index}")))?;
    if cluster.is_singleton() {
        return Err(Error::SingletonCluster(cluster_index));
    }
    Ok(&cluster.bodies)
}

fn exponent_on(path: &DiscretePath, bodies: &[usize], nodes: &[usize], t0: f64) -> (f64, f64) {
    let x: Vec<f64> = nodes
        .iter()
        .map(|&i| (path.times()[i] - t0).abs().ln())
        .collect();
    let y: Vec<f64> = nodes
        .iter()
        .map(|&i| diameter(path.node(i), bodies).ln())
        .collect();
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    (slope, r2)
}

/// Fit of `r_j = (q_j - cbar) / tau^beta` by `s_j + a_j tau^(alpha beta) +
/// b_j tau^(2 - beta)` for every body of the cluster: the two leading
/// corrections, from the cluster's energy and from the forces of the other
/// bodies. Returns the intercepts and the summed squared residual.
fn normalized_fit(
    path: &DiscretePath,
    params: &SystemParams,
    bodies: &[usize],
    nodes: &[usize],
    t0: f64,
) -> (Vec<f64>, f64) {
    let beta = params.collision_exponent();
    let masses = params.masses();
    let mass: f64 = bodies.iter().map(|&b| masses[b]).sum();
    let tau: Vec<f64> = nodes
        .iter()
        .map(|&i| (path.times()[i] - t0).abs())
        .collect();
    let u: Vec<f64> = tau.iter().map(|t| t.powf(beta)).collect();
    let powers = [0.0, params.alpha() * beta, 2.0 - beta];
    let design = DMatrix::from_fn(u.len(), 3, |r, c| tau[r].powf(powers[c]));
    let mut s = Vec::with_capacity(bodies.len());
    let mut sse = 0.0;
    for &b in bodies {
        let y = DVector::from_iterator(
            u.len(),
            nodes.iter().zip(&u).map(|(&i, ui)| {
                let q = path.node(i);
                let cbar = bodies.iter().map(|&a| masses[a] * q[a]).sum::<f64>() / mass;
                (q[b] - cbar) / ui
            }),
        );
        let (coef, res) = lstsq(design.clone(), y);
        s.push(coef[0]);
        sse += res;
    }
    (s, sse)
}

/// Collision time seen from one side: the `t0` within a grid step of
/// `t_event` that best fits the normalized configuration on `nodes`. The two
/// sides of a discrete collision disagree by a fraction of a step, which
/// otherwise shows up as an `h / tau` error in `r_j`.
fn side_t0(
    path: &DiscretePath,
    params: &SystemParams,
    bodies: &[usize],
    nodes: &[usize],
    t_event: f64,
    side: Side,
) -> f64 {
    let times = path.times();
    let anchor = nearest_node(times, t_event);
    let step = times[(anchor + 1).min(times.len() - 1)] - times[anchor.saturating_sub(1)];
    let nearest = times[nodes[0]];
    let (lo, hi) = match side {
        Side::Left => ((t_event - step).max(nearest + 1e-3 * step), t_event + step),
        Side::Right => (t_event - step, (t_event + step).min(nearest - 1e-3 * step)),
    };
    if !(hi > lo) {
        return t_event;
    }
    let sse = |t0: f64| normalized_fit(path, params, bodies, nodes, t0).1;
    let t = golden_section(lo, hi, sse);
    if sse(t_event) <= sse(t) {
        t_event
    } else {
        t
    }
}

fn fit_within(
    path: &DiscretePath,
    params: &SystemParams,
    event: &CollisionEvent,
    cluster_index: usize,
    side: Option<Side>,
    bounds: (f64, f64),
    opts: &FitOptions,
) -> Result<ExponentFit> {
    let bodies = event_cluster(event, cluster_index)?;
    let t_event = refine_t0(path, params, bodies, event.t0, bounds, opts);
    let w = Windows::new(path, params, bodies, t_event, bounds, opts);
    let (side, nodes) = match side {
        Some(side) => (side, w.side(side)),
        None => w.best(),
    };
    let required = opts.min_window.max(4);
    if nodes.len() < required {
        return Err(Error::InsufficientWindow {
            available: nodes.len(),
            required,
        });
    }
    let t0 = side_t0(path, params, bodies, nodes, t_event, side);
    let (exponent, r2) = exponent_on(path, bodies, nodes, t0);
    Ok(ExponentFit {
        t0,
        side,
        nodes: nodes.to_vec(),
        exponent,
        r2,
    })
}

/// Log-log slope of the cluster diameter against `|t - t0|` on the side with
/// the larger usable window, with its `r^2`.
pub fn fit_exponent(
    path: &DiscretePath,
    params: &SystemParams,
    event: &CollisionEvent,
    cluster_index: usize,
    opts: &FitOptions,
) -> Result<ExponentFit> {
    fit_within(
        path,
        params,
        event,
        cluster_index,
        None,
        (path.t_start(), path.t_end()),
        opts,
    )
}

/// Limit of `r_j(t) = (q_j(t) - cbar(t)) / |t - t0|^beta` as `t -> t0`,
/// where `cbar` is the cluster's center of mass, extrapolated from the fit
/// window with the two leading correction terms. Bodies are in the cluster's
/// (ascending index) order.
pub fn limit_normalized_config(
    path: &DiscretePath,
    params: &SystemParams,
    event: &CollisionEvent,
    cluster_index: usize,
    side: Option<Side>,
    opts: &FitOptions,
) -> Result<Vec<f64>> {
    let fit = fit_within(
        path,
        params,
        event,
        cluster_index,
        side,
        (path.t_start(), path.t_end()),
        opts,
    )?;
    limit_from(path, params, event, cluster_index, &fit)
}

fn limit_from(
    path: &DiscretePath,
    params: &SystemParams,
    event: &CollisionEvent,
    cluster_index: usize,
    fit: &ExponentFit,
) -> Result<Vec<f64>> {
    if !(fit.r2 > MIN_FIT_R2) {
        return Err(Error::PoorFit { r2: fit.r2 });
    }
    let bodies = &event.clusters[cluster_index].bodies;
    Ok(normalized_fit(path, params, bodies, &fit.nodes, fit.t0).0)
}

/// Everything the reports need about one colliding cluster.
pub(super) fn analyze_cluster(
    path: &DiscretePath,
    params: &SystemParams,
    event: &CollisionEvent,
    cluster_index: usize,
    bounds: (f64, f64),
    opts: &FitOptions,
) -> ClusterFit {
    let mut out = ClusterFit {
        t0: event.t0,
        side: None,
        window: 0,
        exponent: None,
        r2: None,
        limit_config: None,
        cc_scaled_residual: None,
        order_matches: None,
        local_grid: None,
        error: None,
    };
    let fit = match fit_within(path, params, event, cluster_index, None, bounds, opts) {
        Ok(f) => f,
        Err(e) => {
            out.error = Some(e.to_string());
            return out;
        }
    };
    out.t0 = fit.t0;
    out.side = Some(fit.side);
    out.window = fit.nodes.len();
    out.exponent = Some(fit.exponent);
    out.r2 = Some(fit.r2);
    let bodies = &event.clusters[cluster_index].bodies;
    let s = match limit_from(path, params, event, cluster_index, &fit) {
        Ok(v) => v,
        Err(e) => {
            out.error = Some(e.to_string());
            return out;
        }
    };
    match params
        .subsystem(bodies)
        .and_then(|sub| scaled_cc_residual(&sub, &s, params.collision_lambda()))
    {
        Ok(r) => out.cc_scaled_residual = Some(r),
        Err(e) => out.error = Some(e.to_string()),
    }
    // order of the cluster at the window node closest to the collision
    let q = path.node(fit.nodes[0]);
    let mut by_path = bodies.clone();
    by_path.sort_by(|&a, &b| q[a].total_cmp(&q[b]));
    let mut local: Vec<usize> = (0..bodies.len()).collect();
    local.sort_by(|&a, &b| s[a].total_cmp(&s[b]));
    let by_limit: Vec<usize> = local.iter().map(|&l| bodies[l]).collect();
    out.order_matches = Some(by_path == by_limit);
    out.limit_config = Some(s);
    out
}

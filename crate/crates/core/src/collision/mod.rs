//! Collision detection and asymptotic analysis on discrete paths.
//!
//! Near a collision the gap `d` between two bodies behaves like
//! `|t - t0|^beta` with `beta = 2 / (2 + alpha)`, so the transformed gap
//! `w = sign(d) |d|^(1/beta)` is close to linear in `t`. A pair event is
//! a sign change of `w` between two nodes (a crossing), an exactly zero gap at
//! a node, or a V-shaped minimum of `|w|` whose apex, extrapolated from the
//! secants on either side, falls below `collision_tol` (a touch). Pair events
//! closer than [`MERGE_STEPS`] grid steps form one collision moment.

mod fit;
mod zoom;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{strict_order, DiscretePath, OrderLabel, SystemParams};

pub use fit::{fit_exponent, limit_normalized_config, refine_t0, FitOptions, Side};
pub use zoom::{analyze_minimizer, zoom_event, ZoomOptions};

/// Pair events closer than this many grid steps belong to one moment.
pub const MERGE_STEPS: f64 = 4.0;
/// Nodes whose cluster diameter is below this multiple of `collision_tol`
/// are dropped from fits.
pub const FLOOR_FACTOR: f64 = 10.0;
/// Minimum `r^2` of the exponent fit before a limit configuration is extracted.
pub const MIN_FIT_R2: f64 = 0.99;

mod one_based {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[usize], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|b| b + 1).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<usize>, D::Error> {
        let v = Vec::<usize>::deserialize(d)?;
        if v.contains(&0) {
            return Err(serde::de::Error::custom("body labels are one-based"));
        }
        Ok(v.into_iter().map(|b| b - 1).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    /// Member bodies, ascending (zero-based; one-based when serialized).
    #[serde(with = "one_based")]
    pub bodies: Vec<usize>,
    /// Mass-weighted mean position at `t0`.
    pub limit_point: f64,
}

impl Cluster {
    pub fn is_singleton(&self) -> bool {
        self.bodies.len() == 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairEventKind {
    Crossing,
    Touch,
    Node,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairEvent {
    pub j: usize,
    pub k: usize,
    pub time: f64,
    pub kind: PairEventKind,
}

/// Asymptotic analysis of one colliding cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterFit {
    /// Collision time re-estimated from the cluster diameter.
    pub t0: f64,
    pub side: Option<Side>,
    /// Number of nodes in the fit window.
    pub window: usize,
    pub exponent: Option<f64>,
    pub r2: Option<f64>,
    /// Extrapolated normalized configuration, cluster-local body order.
    pub limit_config: Option<Vec<f64>>,
    pub cc_scaled_residual: Option<f64>,
    pub order_matches: Option<bool>,
    /// Interval count of the local re-solve the fit was taken on; `None`
    /// when fitted on the analyzed path itself.
    pub local_grid: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionEvent {
    pub t0: f64,
    /// Earliest and latest pair-event times merged into this moment.
    pub t_span: [f64; 2],
    /// Partition of all bodies, sorted by limit point.
    pub clusters: Vec<Cluster>,
    /// Set when pair events more than one grid step apart were merged.
    pub merged: bool,
    pub pairs: Vec<PairEvent>,
    /// One entry per cluster; `None` for singletons or before analysis.
    pub fits: Vec<Option<ClusterFit>>,
}

impl CollisionEvent {
    pub fn colliding_clusters(&self) -> impl Iterator<Item = (usize, &Cluster)> {
        self.clusters
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_singleton())
    }
}

/// Collision-free stretch between consecutive events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderSection {
    pub t_start: f64,
    pub t_end: f64,
    pub order: Option<OrderLabel>,
    /// False when the nodal order changes inside the section.
    pub constant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionReport {
    pub count: usize,
    pub events: Vec<CollisionEvent>,
    pub sections: Vec<OrderSection>,
    /// No order label repeats among the sections.
    pub sections_distinct: bool,
}

fn transformed(d: f64, p: f64) -> f64 {
    d.signum() * d.abs().powf(p)
}

/// Pair events of bodies `j < k`.
fn pair_events(
    path: &DiscretePath,
    params: &SystemParams,
    j: usize,
    k: usize,
    out: &mut Vec<PairEvent>,
) {
    let p = 1.0 / params.collision_exponent();
    let tol = params.collision_tol();
    let t = path.times();
    let m = path.n_intervals();
    let d: Vec<f64> = path.nodes().map(|q| q[k] - q[j]).collect();
    let w: Vec<f64> = d.iter().map(|&x| transformed(x, p)).collect();
    let mut push = |time: f64, kind| out.push(PairEvent { j, k, time, kind });
    for i in 1..m {
        if d[i] == 0.0 {
            push(t[i], PairEventKind::Node);
        }
    }
    for i in 0..m {
        if w[i] != 0.0 && w[i + 1] != 0.0 && (w[i] > 0.0) != (w[i + 1] > 0.0) {
            let s = w[i] / (w[i] - w[i + 1]);
            push(t[i] + s * (t[i + 1] - t[i]), PairEventKind::Crossing);
        }
    }
    for i in 1..m {
        let a = w[i].abs();
        let same_sign = (w[i - 1] > 0.0) == (w[i] > 0.0) && (w[i + 1] > 0.0) == (w[i] > 0.0);
        if d[i] == 0.0 || !same_sign || !(a <= w[i - 1].abs() && a < w[i + 1].abs()) {
            continue;
        }
        if d[i].abs() < tol {
            push(t[i], PairEventKind::Node);
            continue;
        }
        if i < 2 || i + 2 > m {
            continue;
        }
        let (wl1, wl2) = (w[i - 2].abs(), w[i - 1].abs());
        let (wr1, wr2) = (w[i + 1].abs(), w[i + 2].abs());
        let sl = (wl2 - wl1) / (t[i - 1] - t[i - 2]);
        let sr = (wr2 - wr1) / (t[i + 2] - t[i + 1]);
        if !(sl < 0.0 && sr > 0.0) {
            continue;
        }
        // intersection of the two secant lines
        let ta = (wr1 - sr * t[i + 1] - wl1 + sl * t[i - 2]) / (sl - sr);
        let wa = wl1 + sl * (ta - t[i - 2]);
        if ta < t[i - 1] || ta > t[i + 1] {
            continue;
        }
        if wa.max(0.0).powf(1.0 / p) < tol {
            push(ta, PairEventKind::Touch);
        }
    }
}

fn find(parent: &mut [usize], mut a: usize) -> usize {
    while parent[a] != a {
        parent[a] = parent[parent[a]];
        a = parent[a];
    }
    a
}

fn mean_step(path: &DiscretePath) -> f64 {
    (path.t_end() - path.t_start()) / path.n_intervals() as f64
}

/// Collision moments of a path, in time order, without fits.
pub fn detect_collisions(path: &DiscretePath, params: &SystemParams) -> Vec<CollisionEvent> {
    let n = path.n_bodies();
    let mut pairs = Vec::new();
    for j in 0..n {
        for k in j + 1..n {
            pair_events(path, params, j, k, &mut pairs);
        }
    }
    pairs.sort_by(|a, b| a.time.total_cmp(&b.time).then((a.j, a.k).cmp(&(b.j, b.k))));
    let h = mean_step(path);
    let mut groups: Vec<Vec<PairEvent>> = Vec::new();
    for ev in pairs {
        match groups.last_mut() {
            Some(g) if ev.time - g.last().unwrap().time < MERGE_STEPS * h => g.push(ev),
            _ => groups.push(vec![ev]),
        }
    }
    let masses = params.masses();
    groups
        .into_iter()
        .map(|g| {
            let t_first = g.first().unwrap().time;
            let t_last = g.last().unwrap().time;
            let t0 = g.iter().map(|e| e.time).sum::<f64>() / g.len() as f64;
            let mut parent: Vec<usize> = (0..n).collect();
            for e in &g {
                let (a, b) = (find(&mut parent, e.j), find(&mut parent, e.k));
                parent[a.max(b)] = a.min(b);
            }
            let q = path.interpolate(t0);
            let mut clusters: Vec<Cluster> = Vec::new();
            for root in 0..n {
                let bodies: Vec<usize> = (0..n).filter(|&b| find(&mut parent, b) == root).collect();
                if bodies.is_empty() {
                    continue;
                }
                let mass: f64 = bodies.iter().map(|&b| masses[b]).sum();
                let limit_point = bodies.iter().map(|&b| masses[b] * q[b]).sum::<f64>() / mass;
                clusters.push(Cluster {
                    bodies,
                    limit_point,
                });
            }
            clusters.sort_by(|a, b| a.limit_point.total_cmp(&b.limit_point));
            let fits = vec![None; clusters.len()];
            CollisionEvent {
                t0,
                t_span: [t_first, t_last],
                clusters,
                merged: t_last - t_first > h,
                pairs: g,
                fits,
            }
        })
        .collect()
}

/// Number of collision moments strictly inside the time interval.
pub fn count_collision_moments(path: &DiscretePath, params: &SystemParams) -> usize {
    detect_collisions(path, params)
        .iter()
        .filter(|e| e.t0 > path.t_start() && e.t0 < path.t_end())
        .count()
}

/// Order labels of the stretches between events.
pub fn order_sections(path: &DiscretePath, events: &[CollisionEvent]) -> Vec<OrderSection> {
    let mut bounds = vec![(f64::NEG_INFINITY, path.t_start())];
    bounds.extend(events.iter().map(|e| (e.t_span[0], e.t_span[1])));
    bounds.push((path.t_end(), f64::INFINITY));
    let times = path.times();
    bounds
        .windows(2)
        .map(|w| {
            let (start, end) = (w[0].1, w[1].0);
            let mut labels = times
                .iter()
                .enumerate()
                .filter(|(_, &t)| t >= start && t <= end)
                .filter(|(_, &t)| {
                    !(t == start && w[0].0.is_finite()) && !(t == end && w[1].1.is_finite())
                })
                .map(|(i, _)| strict_order(path.node(i)));
            let first = labels.next();
            let constant = match &first {
                Some(l) => labels.all(|x| &x == l),
                None => true,
            };
            OrderSection {
                t_start: start,
                t_end: end,
                order: first,
                constant,
            }
        })
        .collect()
}

/// True when no order label occurs in two sections.
pub fn sections_distinct(sections: &[OrderSection]) -> bool {
    let labels: Vec<&OrderLabel> = sections.iter().filter_map(|s| s.order.as_ref()).collect();
    (0..labels.len()).all(|a| (a + 1..labels.len()).all(|b| labels[a] != labels[b]))
}

/// Fit every colliding cluster of one event. Failures are recorded on the
/// fit rather than returned.
pub fn analyze_event(
    path: &DiscretePath,
    params: &SystemParams,
    event: &CollisionEvent,
    opts: &FitOptions,
) -> CollisionEvent {
    analyze_within(path, params, event, (path.t_start(), path.t_end()), opts)
}

fn analyze_within(
    path: &DiscretePath,
    params: &SystemParams,
    event: &CollisionEvent,
    bounds: (f64, f64),
    opts: &FitOptions,
) -> CollisionEvent {
    let mut out = event.clone();
    for (c, cluster) in event.clusters.iter().enumerate() {
        if cluster.is_singleton() {
            continue;
        }
        out.fits[c] = Some(fit::analyze_cluster(path, params, event, c, bounds, opts));
    }
    if let Some(fit) = out.fits.iter().flatten().next() {
        out.t0 = fit.t0;
    }
    out
}

/// Fit windows of event `i` stop half-way to the neighbouring events.
fn event_bounds(path: &DiscretePath, spans: &[[f64; 2]], i: usize) -> (f64, f64) {
    let lo = if i > 0 {
        0.5 * (spans[i - 1][1] + spans[i][0])
    } else {
        path.t_start()
    };
    let hi = spans
        .get(i + 1)
        .map_or(path.t_end(), |n| 0.5 * (spans[i][1] + n[0]));
    (lo, hi)
}

/// Detection, per-cluster fits and the order-section sequence.
pub fn analyze_collisions(
    path: &DiscretePath,
    params: &SystemParams,
    opts: &FitOptions,
) -> CollisionReport {
    let raw = detect_collisions(path, params);
    let spans: Vec<[f64; 2]> = raw.iter().map(|e| e.t_span).collect();
    let events: Vec<CollisionEvent> = raw
        .iter()
        .enumerate()
        .map(|(i, e)| analyze_within(path, params, e, event_bounds(path, &spans, i), opts))
        .collect();
    let count = events
        .iter()
        .filter(|e| e.t0 > path.t_start() && e.t0 < path.t_end())
        .count();
    let sections = order_sections(path, &events);
    let sections_distinct = sections_distinct(&sections);
    CollisionReport {
        count,
        events,
        sections,
        sections_distinct,
    }
}

/// Nodal minimum gap and order fingerprint: `t,min_gap,order_hash`.
pub fn write_min_gap_csv<W: Write>(path: &DiscretePath, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "min_gap", "order_hash"])?;
    for ((i, t), g) in path.times().iter().enumerate().zip(path.nodal_min_gaps()) {
        let hash = strict_order(path.node(i)).fingerprint();
        w.write_record([format!("{t:.16e}"), format!("{g:.16e}"), hash.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

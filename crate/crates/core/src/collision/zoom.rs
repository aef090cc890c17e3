//! Local re-solves around the collision moments of a minimizer.
//!
//! The discretization error of a computed collision depends on the distance
//! to the collision counted in grid steps, not in time, so the asymptotic
//! fits need many nodes close to `t0`. A restriction of a minimizer to a
//! subinterval minimizes the action between its own endpoints, so each event
//! is re-solved on a finer grid over a short interval around it, starting from
//! the interpolated coarse path, and the fits are taken there.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    analyze_collisions, event_bounds, order_sections, sections_distinct, CollisionEvent,
    CollisionReport, FitOptions,
};
use crate::error::{Error, Result};
use crate::minimize::{geometric_schedule, minimize_from, MinimizeConfig, MinimizeResult};
use crate::model::{uniform_times, DiscretePath, SystemParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZoomOptions {
    /// Coarse grid steps kept on each side of the event.
    pub half_width: usize,
    /// Refinement factor of the local grid.
    pub factor: usize,
    /// Regularization schedule of the local problem, geometric with ratio
    /// one half. Starting above the final value lets the crossing move off
    /// the fine node it was interpolated onto.
    pub eps_start: f64,
    pub eps_end: f64,
    /// Absolute gradient tolerance of the local problem. Rounding limits the
    /// attainable gradient on fine grids.
    pub grad_tol: f64,
    /// Fit windows, in local grid nodes.
    pub fit: FitOptions,
}

impl Default for ZoomOptions {
    fn default() -> Self {
        Self {
            half_width: 8,
            factor: 64,
            eps_start: 1e-3,
            eps_end: 1e-6,
            grad_tol: 1e-6,
            fit: FitOptions {
                window: 48,
                skip: 8,
                min_window: 6,
            },
        }
    }
}

/// Re-minimize on a grid `opts.factor` times finer over the coarse nodes
/// within `opts.half_width` steps of the event, kept inside `bounds`.
pub fn zoom_event(
    path: &DiscretePath,
    params: &SystemParams,
    event: &CollisionEvent,
    bounds: (f64, f64),
    opts: &ZoomOptions,
) -> Result<MinimizeResult> {
    if opts.factor == 0 {
        return Err(Error::InvalidParams("zoom factor must be positive".into()));
    }
    let times = path.times();
    let last = times.len() - 1;
    let before = times
        .partition_point(|&t| t <= event.t_span[0])
        .saturating_sub(1);
    let after = times.partition_point(|&t| t < event.t_span[1]).min(last);
    let mut i0 = before.saturating_sub(opts.half_width);
    while i0 < before && times[i0] < bounds.0 {
        i0 += 1;
    }
    let mut i1 = (after + opts.half_width).min(last);
    while i1 > after && times[i1] > bounds.1 {
        i1 -= 1;
    }
    if i1 < i0 + 2 {
        return Err(Error::InvalidPath(format!(
            "no room for a local problem around t = {}",
            event.t0
        )));
    }
    let local = uniform_times(times[i0], times[i1], (i1 - i0) * opts.factor);
    let init = DiscretePath::sample(params, local, |t| path.interpolate(t))?;
    let cfg = MinimizeConfig {
        eps_schedule: geometric_schedule(opts.eps_start, opts.eps_end, 0.5),
        grad_tol: Some(opts.grad_tol),
        ..Default::default()
    };
    minimize_from(params, &init, &cfg)
}

fn colliding_sets(event: &CollisionEvent) -> Vec<&[usize]> {
    let mut sets: Vec<&[usize]> = event
        .colliding_clusters()
        .map(|(_, c)| c.bodies.as_slice())
        .collect();
    sets.sort();
    sets
}

/// Replace the fits of `event` by fits on a converged local re-solve when it
/// shows a collision of the same clusters. Otherwise the event is kept.
fn refine(
    path: &DiscretePath,
    params: &SystemParams,
    event: &mut CollisionEvent,
    bounds: (f64, f64),
    opts: &ZoomOptions,
) {
    let solved = match zoom_event(path, params, event, bounds, opts) {
        Ok(r) if r.converged => r,
        Ok(r) => {
            log::warn!(
                "local re-solve at t = {} stopped at gradient {:e}",
                event.t0,
                r.gradient_norm
            );
            return;
        }
        Err(e) => {
            log::warn!("local re-solve at t = {} failed: {e}", event.t0);
            return;
        }
    };
    let local = analyze_collisions(&solved.path, params, &opts.fit);
    let target = colliding_sets(event);
    let Some(found) = local
        .events
        .iter()
        .filter(|e| colliding_sets(e) == target)
        .min_by(|a, b| (a.t0 - event.t0).abs().total_cmp(&(b.t0 - event.t0).abs()))
    else {
        log::warn!(
            "local re-solve at t = {} changed the collision structure",
            event.t0
        );
        return;
    };
    let grid = solved.path.n_intervals();
    for (c, cluster) in event.clusters.iter().enumerate() {
        if cluster.is_singleton() {
            continue;
        }
        let matching = found
            .clusters
            .iter()
            .position(|l| l.bodies == cluster.bodies);
        if let Some(mut fit) = matching.and_then(|l| found.fits[l].clone()) {
            fit.local_grid = Some(grid);
            event.fits[c] = Some(fit);
        }
    }
    event.t0 = found.t0;
}

/// [`analyze_collisions`] for a minimizer: every event is re-solved locally
/// and fitted on the fine grid, falling back to the coarse fit when the
/// local problem does not converge to the same collision.
pub fn analyze_minimizer(
    path: &DiscretePath,
    params: &SystemParams,
    opts: &FitOptions,
    zoom: &ZoomOptions,
) -> CollisionReport {
    let mut report = analyze_collisions(path, params, opts);
    let spans: Vec<[f64; 2]> = report.events.iter().map(|e| e.t_span).collect();
    report
        .events
        .par_iter_mut()
        .enumerate()
        .for_each(|(i, event)| {
            let bounds = event_bounds(path, &spans, i);
            refine(path, params, event, bounds, zoom);
        });
    report.sections = order_sections(path, &report.events);
    report.sections_distinct = sections_distinct(&report.sections);
    report
}

//! Minimization of the discretized action between fixed endpoint
//! configurations, by L-BFGS under a decreasing regularization schedule.

mod lbfgs;
mod objective;
mod seed;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    action_raw, uniform_times, Configuration, DiscretePath, OrderLabel, SystemParams,
};
use lbfgs::{Objective, Options};
use objective::{Laplacian, PathObjective, SectorObjective};

pub use seed::{straight_line, straight_line_seed, SEED_PERTURBATION};

pub const DEFAULT_GRID_SIZE: usize = 256;
pub const DEFAULT_MAX_ITERS_PER_EPS: usize = 2000;
/// Relative stopping tolerance on the final stage.
pub const DEFAULT_GRAD_TOL: f64 = 1e-8;
/// Looser relative tolerance for the warm-up stages.
const STAGE_GRAD_TOL: f64 = 1e-5;
const MEMORY: usize = 12;
const MAX_REFREEZES: usize = 8;

/// Geometric sequence from `start` down to `end` with the given ratio; `end`
/// is always the last entry.
pub fn geometric_schedule(start: f64, end: f64, ratio: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut eps = start;
    while eps > end * (1.0 + 1e-12) {
        out.push(eps);
        eps *= ratio;
    }
    out.push(end);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MinimizeConfig {
    pub grid_size: usize,
    pub eps_schedule: Vec<f64>,
    pub max_iters_per_eps: usize,
    /// Absolute tolerance on the final gradient norm; `None` means
    /// `DEFAULT_GRAD_TOL * max(|action|, 1)`.
    pub grad_tol: Option<f64>,
    pub order_sector: Option<OrderLabel>,
    pub seed: u64,
}

impl Default for MinimizeConfig {
    fn default() -> Self {
        Self {
            grid_size: DEFAULT_GRID_SIZE,
            eps_schedule: geometric_schedule(1e-1, 1e-6, 0.5),
            max_iters_per_eps: DEFAULT_MAX_ITERS_PER_EPS,
            grad_tol: None,
            order_sector: None,
            seed: 0,
        }
    }
}

impl MinimizeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_size < 8 {
            return Err(Error::InvalidParams(format!(
                "grid_size must be at least 8, got {}",
                self.grid_size
            )));
        }
        if self.eps_schedule.is_empty() {
            return Err(Error::InvalidParams("eps_schedule is empty".into()));
        }
        if self
            .eps_schedule
            .iter()
            .any(|e| !(*e > 0.0 && e.is_finite()))
        {
            return Err(Error::InvalidParams(
                "eps_schedule entries must be positive".into(),
            ));
        }
        if self.eps_schedule.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidParams(
                "eps_schedule must be strictly decreasing".into(),
            ));
        }
        if self.max_iters_per_eps == 0 {
            return Err(Error::InvalidParams(
                "max_iters_per_eps must be positive".into(),
            ));
        }
        if let Some(tol) = self.grad_tol {
            if !(tol > 0.0) {
                return Err(Error::InvalidParams("grad_tol must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn eps_final(&self) -> f64 {
        *self.eps_schedule.last().expect("validated schedule")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub eps: f64,
    pub iter: usize,
    pub action: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone)]
pub struct MinimizeResult {
    pub path: DiscretePath,
    pub action_value: f64,
    pub converged: bool,
    pub eps_final: f64,
    pub iterations: usize,
    /// Dual norm `sqrt(g . K^{-1} g)` of the projected gradient, where `K` is
    /// the kinetic Hessian of the discretization.
    pub gradient_norm: f64,
    pub grad_tol: f64,
    pub trace: Vec<TraceRow>,
}

impl MinimizeResult {
    /// Convergence trace as CSV with header `eps,iter,action,grad_norm`.
    pub fn write_trace_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.trace {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_problem(
    params: &SystemParams,
    q_i: &Configuration,
    q_f: &Configuration,
    t1: f64,
    t2: f64,
) -> Result<()> {
    params.validate()?;
    if params.n_bodies() < 2 {
        return Err(Error::InvalidParams(
            "at least two bodies are required".into(),
        ));
    }
    if q_i.len() != params.n_bodies() || q_f.len() != params.n_bodies() {
        return Err(Error::MassMismatch);
    }
    if !(t2 > t1) || !t1.is_finite() || !t2.is_finite() {
        return Err(Error::InvalidInterval { t1, t2 });
    }
    Ok(())
}

fn record(trace: &mut Vec<TraceRow>, total: &mut usize, eps: f64, outcome: &lbfgs::Outcome) {
    let base = *total;
    *total += outcome.iterations;
    trace.extend(
        outcome
            .trace
            .iter()
            .map(|&(iter, action, grad_norm)| TraceRow {
                eps,
                iter: base + iter,
                action,
                grad_norm,
            }),
    );
}

/// Run the continuation schedule. `make` builds the objective for one eps;
/// `candidates` are alternative starting points tried at every stage, the
/// lowest value winning.
fn continuation<'o, O, F>(
    cfg: &MinimizeConfig,
    x: &mut Vec<f64>,
    candidates: &[Vec<f64>],
    lower_bound: Option<f64>,
    mut make: F,
) -> (lbfgs::Outcome, f64, usize, Vec<TraceRow>)
where
    O: Objective + 'o,
    F: FnMut(f64) -> O,
{
    let mut trace = Vec::new();
    let mut total = 0;
    let mut last = None;
    let mut tol_final = 0.0;
    let n_stages = cfg.eps_schedule.len();
    for (stage, &eps) in cfg.eps_schedule.iter().enumerate() {
        let mut obj = make(eps);
        let mut g = vec![0.0; obj.dim()];
        let mut best = obj.eval(x, &mut g);
        for c in candidates {
            let fc = obj.eval(c, &mut g);
            if fc < best || !best.is_finite() {
                best = fc;
                x.clone_from(c);
            }
        }
        let final_stage = stage + 1 == n_stages;
        let tol = match (final_stage, cfg.grad_tol) {
            (true, Some(tol)) => tol,
            (true, None) => DEFAULT_GRAD_TOL * best.abs().max(1.0),
            (false, _) => STAGE_GRAD_TOL * best.abs().max(1.0),
        };
        let opts = Options {
            memory: MEMORY,
            max_iters: cfg.max_iters_per_eps,
            grad_tol: tol,
            lower_bound,
        };
        // the refinement rule is frozen for each run and re-read at its end
        obj.freeze(x);
        let mut outcome = lbfgs::minimize(&mut obj, x, &opts);
        for _ in 0..MAX_REFREEZES {
            if !obj.freeze(x) {
                break;
            }
            record(&mut trace, &mut total, eps, &outcome);
            outcome = lbfgs::minimize(&mut obj, x, &opts);
        }
        if final_stage {
            tol_final = match cfg.grad_tol {
                Some(tol) => tol,
                None => DEFAULT_GRAD_TOL * outcome.value.abs().max(1.0),
            };
        }
        log::debug!(
            "eps {eps:.3e}: {} iterations, action {:.12e}, grad {:.3e}",
            outcome.iterations,
            outcome.value,
            outcome.grad_norm
        );
        record(&mut trace, &mut total, eps, &outcome);
        last = Some(outcome);
    }
    (last.expect("non-empty schedule"), tol_final, total, trace)
}

/// Minimize the discretized action over paths from `q_i` at `t1` to `q_f`
/// at `t2` on a uniform grid. Dispatches to [`minimize_in_sector`] when
/// `cfg.order_sector` is set.
pub fn minimize(
    params: &SystemParams,
    q_i: &Configuration,
    q_f: &Configuration,
    t1: f64,
    t2: f64,
    cfg: &MinimizeConfig,
) -> Result<MinimizeResult> {
    if let Some(sector) = &cfg.order_sector {
        return minimize_in_sector(params, q_i, q_f, t1, t2, sector, cfg);
    }
    check_problem(params, q_i, q_f, t1, t2)?;
    cfg.validate()?;
    let n = params.n_bodies();
    let times = uniform_times(t1, t2, cfg.grid_size);
    let seed_path = straight_line_seed(params, q_i, q_f, &times, cfg.seed);
    let line = straight_line(q_i, q_f, &times);
    let interior = |p: &DiscretePath| p.positions()[n..p.positions().len() - n].to_vec();
    let candidates = [interior(&seed_path), interior(&line)];
    let mut x = candidates[0].clone();
    let laplacian = Laplacian::new(&times);
    let (outcome, tol, iterations, trace) =
        continuation(cfg, &mut x, &candidates[1..], None, |eps| {
            PathObjective::new(
                params,
                &times,
                q_i.positions(),
                q_f.positions(),
                eps,
                laplacian.clone(),
            )
        });
    let mut positions = Vec::with_capacity(times.len() * n);
    positions.extend_from_slice(q_i.positions());
    positions.extend_from_slice(&x);
    positions.extend_from_slice(q_f.positions());
    finish(
        params, times, positions, cfg, outcome, tol, iterations, trace,
    )
}

/// Unconstrained minimization started from `initial`, on its grid and with
/// its endpoints. `cfg.grid_size`, `cfg.seed` and `cfg.order_sector` are not
/// used.
pub fn minimize_from(
    params: &SystemParams,
    initial: &DiscretePath,
    cfg: &MinimizeConfig,
) -> Result<MinimizeResult> {
    cfg.validate()?;
    let n = params.n_bodies();
    if initial.n_bodies() != n {
        return Err(Error::MassMismatch);
    }
    if initial.n_intervals() < 2 {
        return Err(Error::InvalidParams(
            "the initial path needs an interior node".into(),
        ));
    }
    let times = initial.times().to_vec();
    let all = initial.positions();
    let (first, last) = (&all[..n], &all[all.len() - n..]);
    let mut x = all[n..all.len() - n].to_vec();
    let laplacian = Laplacian::new(&times);
    let (outcome, tol, iterations, trace) = continuation(cfg, &mut x, &[], None, |eps| {
        PathObjective::new(params, &times, first, last, eps, laplacian.clone())
    });
    let mut positions = Vec::with_capacity(all.len());
    positions.extend_from_slice(first);
    positions.extend_from_slice(&x);
    positions.extend_from_slice(last);
    finish(
        params, times, positions, cfg, outcome, tol, iterations, trace,
    )
}

#[allow(clippy::too_many_arguments)]
fn finish(
    params: &SystemParams,
    times: Vec<f64>,
    positions: Vec<f64>,
    cfg: &MinimizeConfig,
    outcome: lbfgs::Outcome,
    grad_tol: f64,
    iterations: usize,
    trace: Vec<TraceRow>,
) -> Result<MinimizeResult> {
    let eps_final = cfg.eps_final();
    let action_value = action_raw(params, &times, &positions, eps_final)?;
    let path = DiscretePath::from_raw(times, params.n_bodies(), positions);
    Ok(MinimizeResult {
        path,
        action_value,
        converged: outcome.converged && outcome.grad_norm <= grad_tol,
        eps_final,
        iterations,
        gradient_norm: outcome.grad_norm,
        grad_tol,
        trace,
    })
}

/// Consecutive gaps of `q` taken in the order `sector`.
fn sector_gaps(q: &[f64], sector: &[usize]) -> Vec<f64> {
    sector.windows(2).map(|w| q[w[1]] - q[w[0]]).collect()
}

/// Minimize over paths that keep the order `sector` (weakly) at every node.
/// Gap variables are clamped at zero, so the boundary is reachable.
pub fn minimize_in_sector(
    params: &SystemParams,
    q_i: &Configuration,
    q_f: &Configuration,
    t1: f64,
    t2: f64,
    sector: &OrderLabel,
    cfg: &MinimizeConfig,
) -> Result<MinimizeResult> {
    check_problem(params, q_i, q_f, t1, t2)?;
    cfg.validate()?;
    let n = params.n_bodies();
    if sector.len() != n {
        return Err(Error::InvalidParams(format!(
            "sector {sector} does not have {n} bodies"
        )));
    }
    let order = sector.as_slice();
    let gaps_i = sector_gaps(q_i.positions(), order);
    let gaps_f = sector_gaps(q_f.positions(), order);
    if gaps_i.iter().any(|&g| g < 0.0) {
        return Err(Error::SectorMismatch {
            endpoint: "initial",
        });
    }
    if gaps_f.iter().any(|&g| g < 0.0) {
        return Err(Error::SectorMismatch { endpoint: "final" });
    }
    let times = uniform_times(t1, t2, cfg.grid_size);
    let m = cfg.grid_size;
    let seed_path = straight_line_seed(params, q_i, q_f, &times, cfg.seed);
    let line_gaps: Vec<f64> = (1..m)
        .flat_map(|i| {
            let s = (times[i] - t1) / (t2 - t1);
            gaps_i
                .iter()
                .zip(&gaps_f)
                .map(move |(a, b)| a + s * (b - a))
                .collect::<Vec<_>>()
        })
        .collect();
    let seed_gaps: Vec<f64> = (1..m)
        .flat_map(|i| sector_gaps(seed_path.node(i), order))
        .map(|g| g.max(0.0))
        .collect();
    let candidates = [seed_gaps, line_gaps];
    let mut x = candidates[0].clone();
    let laplacian = Laplacian::new(&times);
    let make = |eps| {
        SectorObjective::new(
            params,
            &times,
            order,
            q_i.positions(),
            q_f.positions(),
            eps,
            laplacian.clone(),
        )
    };
    let (outcome, tol, iterations, trace) =
        continuation(cfg, &mut x, &candidates[1..], Some(0.0), make);
    let positions = make(cfg.eps_final()).positions(&x);
    finish(
        params, times, positions, cfg, outcome, tol, iterations, trace,
    )
}

//! Experiment orchestration: minimize between two endpoints, analyse the
//! collisions of the minimizer and check them against the expected
//! behaviour for same-order and different-order endpoints.
//!
//! A run whose minimization does not converge is reported with its own
//! status and never counts as a failed check.

mod report;
mod spec;

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::collision::{analyze_collisions, analyze_minimizer, detect_collisions, CollisionReport};
use crate::dynamics::{collision_free_segments, eom_residual};
use crate::error::{Error, Result};
use crate::minimize::{minimize, TraceRow};
use crate::model::{
    min_pair_distance, order_of, same_order, DiscretePath, GapPath, OrderLabel, SystemParams,
};
use crate::surgery::{default_delta, normalize_order, plateau_deform};

pub use report::{emit_report, emit_sweep, render_text};
pub use spec::{
    load_spec, load_sweep, validate_input, validate_sweep, AnalysisOptions, CheckTolerances,
    ExperimentSpec, Problem, SweepSpec,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    NotConverged,
    Error,
}

impl Status {
    /// Process exit code: 0 pass, 1 failed check, 2 error, 3 not converged.
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Pass => 0,
            Status::Fail => 1,
            Status::Error => 2,
            Status::NotConverged => 3,
        }
    }

    fn severity(self) -> u8 {
        match self {
            Status::Pass => 0,
            Status::NotConverged => 1,
            Status::Error => 2,
            Status::Fail => 3,
        }
    }
}

/// Exit code of a sweep: the most severe status among its runs.
pub fn sweep_exit_code(reports: &[ExperimentReport]) -> i32 {
    reports
        .iter()
        .map(|r| r.status)
        .max_by_key(|s| s.severity())
        .unwrap_or(Status::Pass)
        .exit_code()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimizeSummary {
    pub grid_size: usize,
    pub action: f64,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub grad_tol: f64,
    pub eps_final: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentResidual {
    pub start: usize,
    pub end: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurgeryProbe {
    pub gap: usize,
    pub t0: f64,
    pub delta: f64,
    pub action_before: Option<f64>,
    pub action_after: Option<f64>,
    pub inequality_holds: Option<bool>,
    pub margin: Option<f64>,
    pub min_other_gap: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub minimize_s: f64,
    pub analysis_s: f64,
    pub total_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: Option<String>,
    pub status: Status,
    pub n_bodies: usize,
    pub alpha: f64,
    pub masses: Vec<f64>,
    /// Literal same-order relation of the endpoints.
    pub same_order: bool,
    pub endpoint_orders: Option<[OrderLabel; 2]>,
    /// Set when an endpoint has bodies closer than `collision_tol`.
    pub degenerate_endpoints: bool,
    /// `N! - 1`.
    pub collision_bound: usize,
    pub minimize: Option<MinimizeSummary>,
    /// Smallest pairwise distance over the interior nodes.
    pub interior_min_gap: Option<f64>,
    pub collisions: Option<CollisionReport>,
    pub eom: Vec<SegmentResidual>,
    pub surgery: Vec<SurgeryProbe>,
    pub checks: Vec<Check>,
    pub error: Option<String>,
    #[serde(skip)]
    pub timings: Timings,
    #[serde(skip)]
    pub path: Option<DiscretePath>,
    #[serde(skip)]
    pub params: Option<SystemParams>,
    #[serde(skip)]
    pub trace: Vec<TraceRow>,
}

impl ExperimentReport {
    fn empty(spec: &ExperimentSpec) -> Self {
        let n = spec.problem.masses.len();
        Self {
            name: spec.name.clone(),
            status: Status::Error,
            n_bodies: n,
            alpha: spec.problem.alpha,
            masses: spec.problem.masses.clone(),
            same_order: false,
            endpoint_orders: None,
            degenerate_endpoints: false,
            collision_bound: (1..=n).product::<usize>().saturating_sub(1),
            minimize: None,
            interior_min_gap: None,
            collisions: None,
            eom: Vec::new(),
            surgery: Vec::new(),
            checks: Vec::new(),
            error: None,
            timings: Timings::default(),
            path: None,
            params: None,
            trace: Vec::new(),
        }
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn collision_count(&self) -> Option<usize> {
        self.collisions.as_ref().map(|c| c.count)
    }

    fn push(&mut self, name: &str, passed: bool, detail: String) {
        self.checks.push(Check {
            name: name.into(),
            passed,
            detail,
        });
    }
}

/// Minimize, analyse and check one experiment. Errors are recorded in the
/// report.
pub fn run_experiment(spec: &ExperimentSpec) -> ExperimentReport {
    let start = Instant::now();
    let mut report = ExperimentReport::empty(spec);
    if let Err(e) = run_into(spec, &mut report) {
        report.status = Status::Error;
        report.error = Some(e.to_string());
    }
    report.timings.total_s = start.elapsed().as_secs_f64();
    report
}

fn run_into(spec: &ExperimentSpec, report: &mut ExperimentReport) -> Result<()> {
    spec.validate()?;
    let params = spec.problem.params()?;
    let (q_i, q_f) = spec.problem.endpoints(&params)?;
    let n = params.n_bodies();
    let oi = order_of(&params, q_i.positions());
    let of = order_of(&params, q_f.positions());
    report.degenerate_endpoints = oi.degenerate || of.degenerate;
    report.endpoint_orders = Some([oi.label, of.label]);
    report.same_order = same_order(q_i.positions(), q_f.positions());

    let t = Instant::now();
    let cfg = spec.minimize_config();
    let result = minimize(&params, &q_i, &q_f, spec.problem.t1, spec.problem.t2, &cfg)?;
    report.timings.minimize_s = t.elapsed().as_secs_f64();
    report.minimize = Some(MinimizeSummary {
        grid_size: cfg.grid_size,
        action: result.action_value,
        converged: result.converged,
        iterations: result.iterations,
        gradient_norm: result.gradient_norm,
        grad_tol: result.grad_tol,
        eps_final: result.eps_final,
    });
    let path = result.path.clone();
    let m = path.n_intervals();
    report.interior_min_gap = (1..m)
        .map(|i| min_pair_distance(path.node(i)))
        .min_by(f64::total_cmp);

    let t = Instant::now();
    let opts = &spec.analysis;
    if opts.collisions {
        report.collisions = Some(match (&opts.zoom, opts.exponent_fits) {
            (Some(zoom), true) => analyze_minimizer(&path, &params, &opts.fit, zoom),
            _ => analyze_collisions(&path, &params, &opts.fit),
        });
    }
    if opts.eom_residuals {
        let spans: Vec<[f64; 2]> = match &report.collisions {
            Some(c) => c.events.iter().map(|e| e.t_span).collect(),
            None => detect_collisions(&path, &params)
                .iter()
                .map(|e| e.t_span)
                .collect(),
        };
        report.eom = residuals(&params, &path, &spans);
    }
    if opts.surgery_probes {
        report.surgery = surgery_probes(&params, &path);
    }
    report.timings.analysis_s = t.elapsed().as_secs_f64();

    evaluate_checks(spec, &params, n, report);
    report.status = if !result.converged {
        Status::NotConverged
    } else if report.checks.iter().all(|c| c.passed) {
        Status::Pass
    } else {
        Status::Fail
    };
    report.path = Some(path);
    report.params = Some(params);
    report.trace = result.trace;
    Ok(())
}

/// Residuals on the collision-free segments, also split at the detected
/// collision moments `spans`, trimmed by four nodes next to each collision
/// where the second difference cannot resolve the motion.
fn residuals(
    params: &SystemParams,
    path: &DiscretePath,
    spans: &[[f64; 2]],
) -> Vec<SegmentResidual> {
    const TRIM: usize = 4;
    let last = path.n_intervals();
    let times = path.times();
    let mut segments = Vec::new();
    for (mut s, e) in collision_free_segments(params, path) {
        for span in spans {
            // Nodes of the interval(s) holding the event.
            let a = times.partition_point(|&t| t <= span[0]).saturating_sub(1);
            let b = times.partition_point(|&t| t < span[1]).min(last);
            if b <= s || a >= e {
                continue;
            }
            if a > s {
                segments.push((s, a));
            }
            s = b;
        }
        if e > s {
            segments.push((s, e));
        }
    }
    segments
        .into_iter()
        .filter_map(|(s, e)| {
            let s2 = if s == 0 { 0 } else { s + TRIM };
            let e2 = if e == last {
                last
            } else {
                e.saturating_sub(TRIM)
            };
            if e2 < s2 + 2 {
                return None;
            }
            eom_residual(params, path, (s2, e2))
                .ok()
                .map(|residual| SegmentResidual {
                    start: s2,
                    end: e2,
                    residual,
                })
        })
        .collect()
}

/// Plateau deformations at the deepest interior point of every gap, on the
/// order-normalized path when the masses are equal.
fn surgery_probes(params: &SystemParams, path: &DiscretePath) -> Vec<SurgeryProbe> {
    let base = if params.has_equal_masses() {
        // The crossing nodes inserted by the normalization sit at gap zero,
        // where the unsoftened action is infinite; the probes use the
        // relabeled original nodes only.
        match normalize_order(params, path).and_then(|norm| {
            let (times, nodes): (Vec<f64>, Vec<Vec<f64>>) = norm
                .path
                .times()
                .iter()
                .zip(norm.path.nodes())
                .filter(|(t, _)| !norm.inserted.contains(t))
                .map(|(&t, q)| (t, q.to_vec()))
                .unzip();
            DiscretePath::from_nodes(params, times, &nodes)
        }) {
            Ok(base) => base,
            Err(e) => {
                return vec![SurgeryProbe {
                    gap: 0,
                    t0: path.t_start(),
                    delta: 0.0,
                    action_before: None,
                    action_after: None,
                    inequality_holds: None,
                    margin: None,
                    min_other_gap: None,
                    error: Some(e.to_string()),
                }]
            }
        }
    } else {
        path.clone()
    };
    let gaps = GapPath::from_path(&base);
    let last = gaps.n_nodes() - 1;
    (0..gaps.n_gaps())
        .map(|k| {
            let x = gaps.gap_series(k);
            let i = (1..last)
                .filter(|&i| x[i] > 0.0)
                .min_by(|&a, &b| x[a].total_cmp(&x[b]))
                .unwrap_or(1);
            let t0 = gaps.times()[i];
            let delta = (2.0 * x[i]).max(default_delta(params));
            let mut probe = SurgeryProbe {
                gap: k,
                t0,
                delta,
                action_before: None,
                action_after: None,
                inequality_holds: None,
                margin: None,
                min_other_gap: None,
                error: None,
            };
            match plateau_deform(params, &gaps, k, t0, delta) {
                Ok(out) => {
                    probe.action_before = Some(out.action_before);
                    probe.action_after = Some(out.action_after);
                    probe.inequality_holds = Some(out.detail.inequality.holds);
                    probe.margin = Some(out.detail.inequality.margin);
                    probe.min_other_gap = Some(out.detail.min_other_gap);
                }
                Err(e) => probe.error = Some(e.to_string()),
            }
            probe
        })
        .collect()
}

fn evaluate_checks(
    spec: &ExperimentSpec,
    params: &SystemParams,
    n: usize,
    report: &mut ExperimentReport,
) {
    let tol = &spec.checks;
    let floor = tol.min_gap_factor * params.collision_tol();
    let count = report.collision_count();
    if report.same_order {
        let gap = report.interior_min_gap.unwrap_or(f64::INFINITY);
        let free = gap > floor && count.is_none_or(|c| c == 0);
        report.push(
            "collision_free",
            free,
            format!("interior min gap {gap:.3e} (floor {floor:.1e}), collisions {count:?}"),
        );
        if spec.analysis.eom_residuals {
            let worst = report.eom.iter().map(|s| s.residual).fold(0.0f64, f64::max);
            let whole = report.eom.len() == 1;
            report.push(
                "eom_residual",
                whole && worst < tol.eom_residual_max,
                format!(
                    "max residual {worst:.3e} over {} segment(s), limit {:.1e}",
                    report.eom.len(),
                    tol.eom_residual_max
                ),
            );
        }
    } else if let Some(c) = count {
        report.push(
            "collision_forced",
            c >= 1,
            format!("{c} collision moment(s)"),
        );
        let bound = report.collision_bound;
        report.push("collision_bound", c <= bound, format!("{c} <= {bound}"));
    }
    if let Some(col) = report.collisions.clone() {
        report.push(
            "sections_distinct",
            col.sections_distinct,
            format!("{} order section(s)", col.sections.len()),
        );
        if spec.analysis.exponent_fits && !col.events.is_empty() {
            let target = params.collision_exponent();
            let mut failures = Vec::new();
            let mut fitted = 0;
            for (e, event) in col.events.iter().enumerate() {
                for (c, fit) in event.fits.iter().enumerate() {
                    let Some(fit) = fit else { continue };
                    fitted += 1;
                    let exp_ok = fit
                        .exponent
                        .is_some_and(|x| (x - target).abs() <= tol.exponent_tol);
                    let cc_ok = fit
                        .cc_scaled_residual
                        .is_some_and(|r| r < tol.cc_residual_max);
                    let order_ok = fit.order_matches == Some(true);
                    if !(exp_ok && cc_ok && order_ok) {
                        failures.push(format!(
                            "event {e} cluster {c}: exponent {:?}, cc residual {:?}, order {:?}{}",
                            fit.exponent,
                            fit.cc_scaled_residual,
                            fit.order_matches,
                            fit.error
                                .as_ref()
                                .map(|m| format!(", {m}"))
                                .unwrap_or_default()
                        ));
                    }
                }
            }
            report.push(
                "collision_asymptotics",
                failures.is_empty(),
                if failures.is_empty() {
                    format!("{fitted} cluster fit(s) within tolerance of exponent {target:.4}")
                } else {
                    failures.join("; ")
                },
            );
        }
    }
    if !report.surgery.is_empty() {
        let bad: Vec<usize> = report
            .surgery
            .iter()
            .filter(|p| {
                p.inequality_holds == Some(true)
                    && p.min_other_gap.is_some_and(|g| g > p.delta)
                    && !matches!((p.action_before, p.action_after), (Some(a), Some(b)) if b < a)
            })
            .map(|p| p.gap)
            .collect();
        report.push(
            "plateau_verdict",
            bad.is_empty(),
            if bad.is_empty() {
                format!(
                    "{} probe(s); the action fell wherever the inequality held",
                    report.surgery.len()
                )
            } else {
                let gaps: Vec<usize> = bad.iter().map(|g| g + 1).collect();
                format!("inequality held but the action did not fall on gap(s) {gaps:?}")
            },
        );
    }
    debug_assert!(n == report.n_bodies);
}

/// Run every spec on a pool of `parallelism` threads; results are in input
/// order and do not depend on the thread count.
pub fn sweep(specs: &[ExperimentSpec], parallelism: usize) -> Result<Vec<ExperimentReport>> {
    if parallelism == 0 {
        return Err(Error::InvalidParams("parallelism must be positive".into()));
    }
    let outputs: Vec<_> = specs.iter().filter_map(|s| s.output.as_ref()).collect();
    for (i, a) in outputs.iter().enumerate() {
        if outputs[i + 1..].contains(a) {
            return Err(Error::InvalidParams(format!(
                "output directory {} is shared by two experiments",
                a.display()
            )));
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| Error::InvalidParams(e.to_string()))?;
    Ok(pool.install(|| specs.par_iter().map(run_experiment).collect()))
}

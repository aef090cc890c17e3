use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use super::{ExperimentReport, Status};
use crate::collision::write_min_gap_csv;
use crate::error::Result;
use crate::io::{to_writer_exact, write_path};

/// Human-readable summary of one report.
pub fn render_text(r: &ExperimentReport) -> String {
    let mut s = String::new();
    let name = r.name.as_deref().unwrap_or("experiment");
    let _ = writeln!(s, "{name}: {:?}", r.status);
    let _ = writeln!(
        s,
        "  bodies {} alpha {} masses {:?}",
        r.n_bodies, r.alpha, r.masses
    );
    if let Some([a, b]) = &r.endpoint_orders {
        let _ = writeln!(
            s,
            "  endpoint orders {a} -> {b} (same order: {}{})",
            r.same_order,
            if r.degenerate_endpoints {
                ", degenerate"
            } else {
                ""
            }
        );
    }
    if let Some(m) = &r.minimize {
        let _ = writeln!(
            s,
            "  action {:.12} on M = {}, converged {} after {} iterations (gradient {:.2e}, tol {:.2e})",
            m.action, m.grid_size, m.converged, m.iterations, m.gradient_norm, m.grad_tol
        );
    }
    if let Some(g) = r.interior_min_gap {
        let _ = writeln!(s, "  interior min gap {g:.3e}");
    }
    if let Some(c) = &r.collisions {
        let _ = writeln!(
            s,
            "  collision moments {} (bound {})",
            c.count, r.collision_bound
        );
        for e in &c.events {
            let groups: Vec<String> = e
                .colliding_clusters()
                .map(|(_, cl)| format!("{:?}", cl.bodies.iter().map(|b| b + 1).collect::<Vec<_>>()))
                .collect();
            let _ = writeln!(s, "    t0 = {:.6} clusters {}", e.t0, groups.join(" "));
            for fit in e.fits.iter().flatten() {
                let _ = writeln!(
                    s,
                    "      exponent {} cc residual {} order {}{}",
                    fit.exponent.map_or("-".into(), |x| format!("{x:.4}")),
                    fit.cc_scaled_residual
                        .map_or("-".into(), |x| format!("{x:.2e}")),
                    fit.order_matches.map_or("-".into(), |x| x.to_string()),
                    fit.error
                        .as_ref()
                        .map(|m| format!(" ({m})"))
                        .unwrap_or_default()
                );
            }
        }
        let labels: Vec<String> = c
            .sections
            .iter()
            .map(|sec| sec.order.as_ref().map_or("?".into(), |o| o.to_string()))
            .collect();
        let _ = writeln!(
            s,
            "  sections {} (distinct: {})",
            labels.join(" | "),
            c.sections_distinct
        );
    }
    for seg in &r.eom {
        let _ = writeln!(
            s,
            "  eom residual nodes {}..={}: {:.3e}",
            seg.start, seg.end, seg.residual
        );
    }
    for p in &r.surgery {
        match (&p.error, p.action_before, p.action_after) {
            (None, Some(a), Some(b)) => {
                let _ = writeln!(
                    s,
                    "  plateau gap {} at t = {:.4} delta {:.2e}: action {a:.8} -> {b:.8}, inequality {:?}",
                    p.gap + 1,
                    p.t0,
                    p.delta,
                    p.inequality_holds
                );
            }
            (Some(e), ..) => {
                let _ = writeln!(s, "  plateau gap {}: {e}", p.gap + 1);
            }
            _ => {}
        }
    }
    for c in &r.checks {
        let _ = writeln!(
            s,
            "  [{}] {}: {}",
            if c.passed { "pass" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    if let Some(e) = &r.error {
        let _ = writeln!(s, "  error: {e}");
    }
    s
}

fn write_json<T: Serialize + ?Sized>(file: &Path, value: &T) -> Result<()> {
    let mut f = fs::File::create(file)?;
    to_writer_exact(&mut f, value)?;
    std::io::Write::write_all(&mut f, b"\n")?;
    Ok(())
}

/// Per-cluster fit summary, one row per colliding cluster.
fn write_fits_csv(r: &ExperimentReport, file: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(file)?;
    w.write_record([
        "event",
        "cluster",
        "bodies",
        "t0",
        "side",
        "window",
        "exponent",
        "r2",
        "cc_scaled_residual",
        "order_matches",
        "local_grid",
    ])?;
    let opt = |x: Option<f64>| x.map_or(String::new(), |v| format!("{v:.16e}"));
    if let Some(c) = &r.collisions {
        for (e, event) in c.events.iter().enumerate() {
            for (k, fit) in event.fits.iter().enumerate() {
                let Some(fit) = fit else { continue };
                let bodies: Vec<String> = event.clusters[k]
                    .bodies
                    .iter()
                    .map(|b| (b + 1).to_string())
                    .collect();
                w.write_record([
                    e.to_string(),
                    k.to_string(),
                    bodies.join(" "),
                    format!("{:.16e}", fit.t0),
                    fit.side
                        .map_or(String::new(), |s| format!("{s:?}").to_lowercase()),
                    fit.window.to_string(),
                    opt(fit.exponent),
                    opt(fit.r2),
                    opt(fit.cc_scaled_residual),
                    fit.order_matches.map_or(String::new(), |b| b.to_string()),
                    fit.local_grid.map_or(String::new(), |m| m.to_string()),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// `log|t - t0|` against the log cluster diameter on the analyzed path, for
/// plotting the exponent fits.
fn write_loglog_csv(r: &ExperimentReport, file: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(file)?;
    w.write_record(["event", "cluster", "t", "log_tau", "log_diameter"])?;
    if let (Some(c), Some(path)) = (&r.collisions, &r.path) {
        for (e, event) in c.events.iter().enumerate() {
            for (k, fit) in event.fits.iter().enumerate() {
                let Some(fit) = fit else { continue };
                let bodies = &event.clusters[k].bodies;
                for (i, &t) in path.times().iter().enumerate() {
                    let tau = (t - fit.t0).abs();
                    let q = path.node(i);
                    let (lo, hi) = bodies
                        .iter()
                        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &j| {
                            (a.min(q[j]), b.max(q[j]))
                        });
                    let d = hi - lo;
                    if tau == 0.0 || d <= 0.0 || tau > 0.25 * (path.t_end() - path.t_start()) {
                        continue;
                    }
                    w.write_record([
                        e.to_string(),
                        k.to_string(),
                        format!("{t:.16e}"),
                        format!("{:.16e}", tau.ln()),
                        format!("{:.16e}", d.ln()),
                    ])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Write `report.json`, `timings.json`, `report.txt`, the minimizer as
/// `path.json`, and the CSV series `trace.csv`, `min_gap.csv`, `fits.csv`
/// and `loglog.csv` into `dir`.
pub fn emit_report(r: &ExperimentReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_json(&dir.join("report.json"), r)?;
    write_json(&dir.join("timings.json"), &r.timings)?;
    fs::write(dir.join("report.txt"), render_text(r))?;
    if let (Some(path), Some(params)) = (&r.path, &r.params) {
        write_path(&dir.join("path.json"), params, path)?;
        write_min_gap_csv(path, fs::File::create(dir.join("min_gap.csv"))?)?;
    }
    if !r.trace.is_empty() {
        let mut w = csv::Writer::from_path(dir.join("trace.csv"))?;
        for row in &r.trace {
            w.serialize(row)?;
        }
        w.flush()?;
    }
    write_fits_csv(r, &dir.join("fits.csv"))?;
    write_loglog_csv(r, &dir.join("loglog.csv"))?;
    Ok(())
}

#[derive(Serialize)]
struct SweepRow<'a> {
    index: usize,
    name: Option<&'a str>,
    status: Status,
    order_initial: Option<String>,
    order_final: Option<String>,
    same_order: bool,
    converged: Option<bool>,
    collisions: Option<usize>,
    sections_distinct: Option<bool>,
}

/// Write each report into its own subdirectory `NNN` of `dir` plus a
/// `sweep.json` of all reports and a `sweep.csv` matrix of collision counts.
pub fn emit_sweep(reports: &[ExperimentReport], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (i, r) in reports.iter().enumerate() {
        emit_report(r, &dir.join(format!("{i:03}")))?;
    }
    write_json(&dir.join("sweep.json"), reports)?;
    let mut w = csv::Writer::from_path(dir.join("sweep.csv"))?;
    for (index, r) in reports.iter().enumerate() {
        w.serialize(SweepRow {
            index,
            name: r.name.as_deref(),
            status: r.status,
            order_initial: r.endpoint_orders.as_ref().map(|o| o[0].to_string()),
            order_final: r.endpoint_orders.as_ref().map(|o| o[1].to_string()),
            same_order: r.same_order,
            converged: r.minimize.as_ref().map(|m| m.converged),
            collisions: r.collision_count(),
            sections_distinct: r.collisions.as_ref().map(|c| c.sections_distinct),
        })?;
    }
    w.flush()?;
    Ok(())
}

//! Collinear central configurations: solutions of
//! `dU/dq_k = -lambda m_k q_k` with zero center of mass.
//!
//! Within one ordering the solution is the unique minimizer of
//! `V = U + lambda I / 2`, which is strictly convex in the consecutive gaps.
//! [`solve_cc`] runs a damped Newton iteration on `V` in those gaps.

use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_center_of_mass, moment_of_inertia, potential, OrderLabel, SystemParams};

/// Target scaled residual of the Newton solve.
pub const SOLVE_TOL: f64 = 1e-12;
/// Scaled residual accepted by [`certify_nondegenerate`] as a central configuration.
pub const CC_TOL: f64 = 1e-10;
/// Relative eigenvalue threshold for non-degeneracy.
pub const DEGENERACY_TOL: f64 = 1e-8;
pub const MAX_ENUMERATION_BODIES: usize = 8;
const MAX_NEWTON_ITERS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentralConfiguration {
    /// Body-indexed positions, center of mass at the origin.
    pub positions: Vec<f64>,
    pub lambda: f64,
    pub order: OrderLabel,
    /// Smallest absolute eigenvalue of the reduced Hessian; set by
    /// [`certify_nondegenerate`].
    pub min_eigen_abs: Option<f64>,
    pub nondegenerate: Option<bool>,
}

/// Per-body defects `dU/dq_k + lambda m_k q_k`.
pub fn cc_defects(params: &SystemParams, positions: &[f64], lambda: f64) -> Result<Vec<f64>> {
    let m = params.masses();
    let (c, alpha) = (params.coupling(), params.alpha());
    let n = positions.len();
    let mut out: Vec<f64> = (0..n).map(|k| lambda * m[k] * positions[k]).collect();
    for k in 0..n {
        for j in k + 1..n {
            let d = positions[j] - positions[k];
            if d == 0.0 {
                return Err(Error::CollisionSingularity(k, j));
            }
            // d/dq_j of c m_j m_k |d|^-alpha
            let f = -alpha * c * m[j] * m[k] * d.abs().powf(-alpha - 1.0) * d.signum();
            out[j] += f;
            out[k] -= f;
        }
    }
    Ok(out)
}

/// Euclidean norm of the central-configuration defects at `lambda`.
pub fn cc_residual(params: &SystemParams, positions: &[f64], lambda: f64) -> Result<f64> {
    let d = cc_defects(params, positions, lambda)?;
    Ok(d.iter().map(|v| v * v).sum::<f64>().sqrt())
}

/// [`cc_residual`] divided by `lambda * max|q| * max m`, the size of the
/// right-hand side.
pub fn scaled_cc_residual(params: &SystemParams, positions: &[f64], lambda: f64) -> Result<f64> {
    let r = cc_residual(params, positions, lambda)?;
    let qmax = positions.iter().fold(0.0f64, |a, q| a.max(q.abs()));
    let mmax = params.masses().iter().fold(0.0f64, |a, m| a.max(*m));
    Ok(r / (lambda * qmax * mmax))
}

/// The multiplier of a central configuration, `alpha U / I` (reduces to
/// `U / I` for the Newtonian exponent).
pub fn lambda_of(params: &SystemParams, positions: &[f64]) -> Result<f64> {
    Ok(params.alpha() * potential(params, positions)? / moment_of_inertia(params, positions))
}

struct Sector<'a> {
    params: &'a SystemParams,
    order: &'a [usize],
    masses: Vec<f64>,
    lambda: f64,
}

impl Sector<'_> {
    fn positions(&self, gaps: &[f64]) -> Vec<f64> {
        let ranked = crate::model::positions_from_gaps(&self.masses, gaps);
        let mut q = vec![0.0; ranked.len()];
        for (r, &b) in self.order.iter().enumerate() {
            q[b] = ranked[r];
        }
        q
    }

    fn value(&self, gaps: &[f64]) -> f64 {
        let q = self.positions(gaps);
        potential(self.params, &q).unwrap_or(f64::INFINITY)
            + 0.5 * self.lambda * moment_of_inertia(self.params, &q)
    }

    /// d q_rank / d gap.
    fn jacobian(&self) -> DMatrix<f64> {
        let n = self.masses.len();
        let total: f64 = self.masses.iter().sum();
        DMatrix::from_fn(n, n - 1, |r, s| {
            let tail: f64 = self.masses[s + 1..].iter().sum();
            (if r > s { 1.0 } else { 0.0 }) - tail / total
        })
    }

    /// Gradient and Hessian of `V` in the gaps.
    fn derivatives(&self, gaps: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.masses.len();
        let q = crate::model::positions_from_gaps(&self.masses, gaps);
        let (c, alpha) = (self.params.coupling(), self.params.alpha());
        let mut g = DVector::from_fn(n, |r, _| self.lambda * self.masses[r] * q[r]);
        let mut h = DMatrix::from_fn(n, n, |a, b| {
            if a == b {
                self.lambda * self.masses[a]
            } else {
                0.0
            }
        });
        for a in 0..n {
            for b in a + 1..n {
                let d = q[b] - q[a];
                let mm = c * self.masses[a] * self.masses[b];
                let f = -alpha * mm * d.powf(-alpha - 1.0);
                let k = alpha * (alpha + 1.0) * mm * d.powf(-alpha - 2.0);
                g[b] += f;
                g[a] -= f;
                h[(a, a)] += k;
                h[(b, b)] += k;
                h[(a, b)] -= k;
                h[(b, a)] -= k;
            }
        }
        let jac = self.jacobian();
        (jac.transpose() * g, jac.transpose() * h * jac)
    }
}

/// Central configuration with the given ordering and multiplier, from an
/// equal-gap start.
pub fn solve_cc(
    params: &SystemParams,
    order: &OrderLabel,
    lambda: f64,
) -> Result<CentralConfiguration> {
    let n = params.n_bodies();
    solve_cc_from(params, order, lambda, &vec![1.0; n.saturating_sub(1)])
}

/// As [`solve_cc`], starting from the given consecutive gaps (rescaled
/// optimally before iterating).
pub fn solve_cc_from(
    params: &SystemParams,
    order: &OrderLabel,
    lambda: f64,
    initial_gaps: &[f64],
) -> Result<CentralConfiguration> {
    params.validate()?;
    let n = params.n_bodies();
    if n < 2 {
        return Err(Error::InvalidParams(
            "a central configuration needs two bodies".into(),
        ));
    }
    if order.len() != n {
        return Err(Error::InvalidParams(format!(
            "order {order} does not have {n} bodies"
        )));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    if initial_gaps.len() != n - 1 || initial_gaps.iter().any(|g| !(*g > 0.0)) {
        return Err(Error::InvalidParams(
            "initial gaps must be N-1 positive numbers".into(),
        ));
    }
    let sector = Sector {
        params,
        order: order.as_slice(),
        masses: order
            .as_slice()
            .iter()
            .map(|&b| params.masses()[b])
            .collect(),
        lambda,
    };
    let alpha = params.alpha();
    let mut x = initial_gaps.to_vec();
    {
        // V(s x) = s^-alpha U + s^2 lambda I / 2 is minimized in s exactly
        let q = sector.positions(&x);
        let u = potential(params, &q)?;
        let i = moment_of_inertia(params, &q);
        let s = (alpha * u / (lambda * i)).powf(1.0 / (alpha + 2.0));
        x.iter_mut().for_each(|g| *g *= s);
    }
    let mut best = f64::INFINITY;
    for _ in 0..MAX_NEWTON_ITERS {
        let q = sector.positions(&x);
        let res = scaled_cc_residual(params, &q, lambda)?;
        best = best.min(res);
        if res < SOLVE_TOL {
            return Ok(CentralConfiguration {
                positions: q,
                lambda,
                order: order.clone(),
                min_eigen_abs: None,
                nondegenerate: None,
            });
        }
        let (g, h) = sector.derivatives(&x);
        let Some(chol) = h.cholesky() else {
            break;
        };
        let step = chol.solve(&(-&g));
        let slope = g.dot(&step);
        let v0 = sector.value(&x);
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, d)| a + t * d).collect();
            if trial.iter().all(|g| *g > 0.0) {
                let v = sector.value(&trial);
                // near the solution V stalls at rounding level; accept full steps there
                if v <= v0 + 1e-4 * t * slope || (t == 1.0 && (v - v0).abs() <= 1e-14 * v0.abs()) {
                    x = trial;
                    moved = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    let q = sector.positions(&x);
    best = best.min(scaled_cc_residual(params, &q, lambda)?);
    Err(Error::NewtonDivergence {
        best_residual: best,
    })
}

/// One central configuration per ordering, in lexicographic order of the
/// ordering, solved in parallel.
pub fn enumerate_ccs(params: &SystemParams, lambda: f64) -> Result<Vec<CentralConfiguration>> {
    let n = params.n_bodies();
    if n > MAX_ENUMERATION_BODIES {
        return Err(Error::InvalidParams(format!(
            "enumeration is limited to {MAX_ENUMERATION_BODIES} bodies, got {n}"
        )));
    }
    OrderLabel::all(n)
        .par_iter()
        .map(|order| solve_cc(params, order, lambda))
        .collect()
}

/// Hessian of `U + lambda I / 2` in the mass metric, restricted to the
/// complement of the translation direction. Returns its eigenvalues.
pub fn reduced_hessian_eigenvalues(
    params: &SystemParams,
    positions: &[f64],
    lambda: f64,
) -> Vec<f64> {
    let n = positions.len();
    let m = params.masses();
    let (c, alpha) = (params.coupling(), params.alpha());
    let mut h = DMatrix::from_fn(n, n, |a, b| if a == b { lambda * m[a] } else { 0.0 });
    for a in 0..n {
        for b in a + 1..n {
            let d = (positions[b] - positions[a]).abs();
            let k = alpha * (alpha + 1.0) * c * m[a] * m[b] * d.powf(-alpha - 2.0);
            h[(a, a)] += k;
            h[(b, b)] += k;
            h[(a, b)] -= k;
            h[(b, a)] -= k;
        }
    }
    let sqrt_m: Vec<f64> = m.iter().map(|v| v.sqrt()).collect();
    let metric = DMatrix::from_fn(n, n, |a, b| h[(a, b)] / (sqrt_m[a] * sqrt_m[b]));
    // orthonormal complement of sqrt(m): QR of [u, e_1, .., e_{n-1}]
    let norm = sqrt_m.iter().map(|v| v * v).sum::<f64>().sqrt();
    let basis = DMatrix::from_fn(n, n, |r, col| {
        if col == 0 {
            sqrt_m[r] / norm
        } else if r == col - 1 {
            1.0
        } else {
            0.0
        }
    });
    let q = basis.qr().q();
    let comp = q.columns(1, n - 1).into_owned();
    let reduced = comp.transpose() * metric * &comp;
    let reduced = (&reduced + reduced.transpose()) * 0.5;
    SymmetricEigen::new(reduced)
        .eigenvalues
        .iter()
        .copied()
        .collect()
}

/// Check that `cc` is a central configuration and record the smallest
/// absolute eigenvalue of its reduced Hessian.
pub fn certify_nondegenerate(
    params: &SystemParams,
    cc: &CentralConfiguration,
) -> Result<CentralConfiguration> {
    if cc.positions.len() != params.n_bodies() {
        return Err(Error::MassMismatch);
    }
    check_center_of_mass(params, &cc.positions)?;
    let scaled = scaled_cc_residual(params, &cc.positions, cc.lambda)?;
    let recovered = lambda_of(params, &cc.positions)?;
    if !(scaled < CC_TOL) || (recovered - cc.lambda).abs() > CC_TOL * cc.lambda {
        return Err(Error::NotCentralConfiguration {
            scaled_residual: scaled,
        });
    }
    let eig = reduced_hessian_eigenvalues(params, &cc.positions, cc.lambda);
    let min_abs = eig.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
    let max_abs = eig.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut out = cc.clone();
    out.min_eigen_abs = Some(min_abs);
    out.nondegenerate = Some(min_abs > DEGENERACY_TOL * max_abs);
    Ok(out)
}

/// One row per configuration: `order,lambda,min_eigen_abs,q1..qN`.
pub fn write_ccs_csv<W: Write>(ccs: &[CentralConfiguration], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let n = ccs.first().map_or(0, |c| c.positions.len());
    let mut header = vec!["order".to_string(), "lambda".into(), "min_eigen_abs".into()];
    header.extend((1..=n).map(|j| format!("q{j}")));
    w.write_record(&header)?;
    for cc in ccs {
        let mut row = vec![
            cc.order.to_string(),
            format!("{:.16e}", cc.lambda),
            cc.min_eigen_abs
                .map(|v| format!("{v:.16e}"))
                .unwrap_or_default(),
        ];
        row.extend(cc.positions.iter().map(|q| format!("{q:.16e}")));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_body_radius() {
        let p = SystemParams::equal_masses(2).unwrap();
        let cc = solve_cc(&p, &OrderLabel::identity(2), 2.0 / 9.0).unwrap();
        let r = (9.0f64 / 8.0).cbrt();
        assert!((cc.positions[0] + r).abs() < 1e-13);
        assert!((cc.positions[1] - r).abs() < 1e-13);
        assert!(cc_residual(&p, &cc.positions, 2.0 / 9.0).unwrap() < 1e-12);
    }

    #[test]
    fn two_body_reduced_hessian() {
        // 2k + lambda with k = 2 / (2r)^3 = lambda
        let p = SystemParams::equal_masses(2).unwrap();
        let cc = solve_cc(&p, &OrderLabel::identity(2), 2.0 / 9.0).unwrap();
        let cert = certify_nondegenerate(&p, &cc).unwrap();
        assert!((cert.min_eigen_abs.unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(cert.nondegenerate, Some(true));
    }

    #[test]
    fn perturbed_input_is_rejected() {
        let p = SystemParams::equal_masses(3).unwrap();
        let mut cc = solve_cc(&p, &OrderLabel::identity(3), 2.0 / 9.0).unwrap();
        cc.positions[0] -= 1e-3;
        cc.positions[2] += 1e-3;
        assert!(matches!(
            certify_nondegenerate(&p, &cc),
            Err(Error::NotCentralConfiguration { .. })
        ));
    }

    #[test]
    fn collisions_are_singular() {
        let p = SystemParams::equal_masses(2).unwrap();
        assert!(matches!(
            cc_residual(&p, &[0.0, 0.0], 1.0),
            Err(Error::CollisionSingularity(0, 1))
        ));
    }

    #[test]
    fn general_exponent() {
        let p = SystemParams::new(vec![1.0, 2.0, 0.5])
            .unwrap()
            .with_alpha(0.5)
            .unwrap();
        let lambda = p.collision_lambda();
        let cc = solve_cc(&p, &OrderLabel::from_one_based(&[3, 1, 2]).unwrap(), lambda).unwrap();
        assert!((lambda_of(&p, &cc.positions).unwrap() - lambda).abs() < 1e-10 * lambda);
        assert_eq!(crate::model::strict_order(&cc.positions), cc.order);
    }

    #[test]
    fn csv_rows() {
        let p = SystemParams::equal_masses(2).unwrap();
        let ccs = enumerate_ccs(&p, 2.0 / 9.0).unwrap();
        let mut buf = Vec::new();
        write_ccs_csv(&ccs, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("order,lambda,min_eigen_abs,q1,q2\n"));
        assert!(text.contains("\"(2,1)\""));
    }
}

//! Discretized action as an optimization objective, in nodal positions or in
//! sector-ordered gap variables. Endpoint nodes are held fixed.

use nalgebra::DMatrix;

use crate::minimize::lbfgs::Objective;
use crate::model::{action_and_gradient_raw, positions_from_gaps, refinement_mask, SystemParams};

/// Thomas-algorithm factorization of the interior discrete Laplacian
/// `(L u)_i = (u_i - u_{i-1}) / h_{i-1} - (u_{i+1} - u_i) / h_i`.
#[derive(Debug, Clone)]
pub(crate) struct Laplacian {
    off: Vec<f64>,
    c_prime: Vec<f64>,
    denom: Vec<f64>,
}

impl Laplacian {
    pub(crate) fn new(times: &[f64]) -> Self {
        let m = times.len() - 1;
        let k = m - 1;
        let h: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
        let diag: Vec<f64> = (1..m).map(|i| 1.0 / h[i - 1] + 1.0 / h[i]).collect();
        let off: Vec<f64> = (1..m.saturating_sub(1) + 1).map(|i| -1.0 / h[i]).collect();
        let mut c_prime = vec![0.0; k];
        let mut denom = vec![0.0; k];
        for i in 0..k {
            let prev = if i == 0 {
                0.0
            } else {
                off[i - 1] * c_prime[i - 1]
            };
            denom[i] = diag[i] - prev;
            if i + 1 < k {
                c_prime[i] = off[i] / denom[i];
            }
        }
        Self {
            off,
            c_prime,
            denom,
        }
    }

    /// Solve `L u = rhs` in place, reading elements `rhs[offset + stride * i]`.
    fn solve_strided(&self, data: &mut [f64], offset: usize, stride: usize) {
        let k = self.denom.len();
        let at = |i: usize| offset + stride * i;
        data[at(0)] /= self.denom[0];
        for i in 1..k {
            data[at(i)] = (data[at(i)] - self.off[i - 1] * data[at(i - 1)]) / self.denom[i];
        }
        for i in (0..k.saturating_sub(1)).rev() {
            data[at(i)] -= self.c_prime[i] * data[at(i + 1)];
        }
    }
}

pub(crate) struct PathObjective<'a> {
    params: &'a SystemParams,
    times: &'a [f64],
    eps: f64,
    full: Vec<f64>,
    grad_full: Vec<f64>,
    laplacian: Laplacian,
    mask: Option<Vec<bool>>,
}

impl<'a> PathObjective<'a> {
    pub(crate) fn new(
        params: &'a SystemParams,
        times: &'a [f64],
        first: &[f64],
        last: &[f64],
        eps: f64,
        laplacian: Laplacian,
    ) -> Self {
        let n = params.n_bodies();
        let mut full = vec![0.0; times.len() * n];
        full[..n].copy_from_slice(first);
        let len = full.len();
        full[len - n..].copy_from_slice(last);
        Self {
            params,
            times,
            eps,
            grad_full: vec![0.0; len],
            full,
            laplacian,
            mask: None,
        }
    }
}

impl Objective for PathObjective<'_> {
    fn dim(&self) -> usize {
        self.full.len() - 2 * self.params.n_bodies()
    }

    fn eval(&mut self, x: &[f64], grad: &mut [f64]) -> f64 {
        let n = self.params.n_bodies();
        let len = self.full.len();
        self.full[n..len - n].copy_from_slice(x);
        let f = action_and_gradient_raw(
            self.params,
            self.times,
            &self.full,
            self.eps,
            self.mask.as_deref(),
            &mut self.grad_full,
        );
        let masses = self.params.masses();
        let total = self.params.total_mass();
        for (g, raw) in grad.chunks_mut(n).zip(self.grad_full[n..len - n].chunks(n)) {
            // drop the component along the constraint normal, leaving sum_j g_j = 0
            let shift = raw.iter().sum::<f64>() / total;
            for j in 0..n {
                g[j] = raw[j] - masses[j] * shift;
            }
        }
        f
    }

    fn precondition(&self, g: &[f64], out: &mut [f64]) {
        let n = self.params.n_bodies();
        out.copy_from_slice(g);
        for (j, m) in self.params.masses().iter().enumerate() {
            self.laplacian.solve_strided(out, j, n);
            out.iter_mut().skip(j).step_by(n).for_each(|v| *v /= m);
        }
    }

    fn project(&self, x: &mut [f64]) {
        let n = self.params.n_bodies();
        let masses = self.params.masses();
        let total = self.params.total_mass();
        for node in x.chunks_mut(n) {
            let com = node.iter().zip(masses).map(|(q, m)| q * m).sum::<f64>() / total;
            node.iter_mut().for_each(|q| *q -= com);
        }
    }

    fn freeze(&mut self, x: &[f64]) -> bool {
        let n = self.params.n_bodies();
        let len = self.full.len();
        self.full[n..len - n].copy_from_slice(x);
        replace_mask(&mut self.mask, refinement_mask(self.params, &self.full))
    }
}

fn replace_mask(slot: &mut Option<Vec<bool>>, mask: Vec<bool>) -> bool {
    let changed = slot.as_ref() != Some(&mask);
    *slot = Some(mask);
    changed
}

/// Action over gaps between consecutive bodies of a fixed ordering. Body
/// `order[r]` sits at rank `r`.
pub(crate) struct SectorObjective<'a> {
    params: &'a SystemParams,
    times: &'a [f64],
    order: &'a [usize],
    ranked_masses: Vec<f64>,
    eps: f64,
    full: Vec<f64>,
    grad_full: Vec<f64>,
    laplacian: Laplacian,
    gram_inverse: DMatrix<f64>,
    mask: Option<Vec<bool>>,
}

impl<'a> SectorObjective<'a> {
    pub(crate) fn new(
        params: &'a SystemParams,
        times: &'a [f64],
        order: &'a [usize],
        first: &[f64],
        last: &[f64],
        eps: f64,
        laplacian: Laplacian,
    ) -> Self {
        let n = params.n_bodies();
        let mut full = vec![0.0; times.len() * n];
        full[..n].copy_from_slice(first);
        let len = full.len();
        full[len - n..].copy_from_slice(last);
        let ranked_masses: Vec<f64> = order.iter().map(|&b| params.masses()[b]).collect();
        let total: f64 = ranked_masses.iter().sum();
        // kinetic metric in gap velocities
        let gram = DMatrix::from_fn(n - 1, n - 1, |p, q| {
            let left: f64 = ranked_masses[..=p.min(q)].iter().sum();
            let right: f64 = ranked_masses[p.max(q) + 1..].iter().sum();
            left * right / total
        });
        let gram_inverse = gram.try_inverse().expect("gap metric is positive definite");
        Self {
            params,
            times,
            order,
            ranked_masses,
            eps,
            grad_full: vec![0.0; len],
            full,
            laplacian,
            gram_inverse,
            mask: None,
        }
    }

    /// Body-indexed positions for every node; endpoints are copied verbatim.
    pub(crate) fn positions(&self, interior: &[f64]) -> Vec<f64> {
        let mut out = self.full.clone();
        self.fill_positions(interior, &mut out);
        out
    }

    fn fill_positions(&self, interior: &[f64], out: &mut [f64]) {
        let n = self.params.n_bodies();
        for (i, gaps) in interior.chunks(n - 1).enumerate() {
            let ranked = positions_from_gaps(&self.ranked_masses, gaps);
            for (r, &b) in self.order.iter().enumerate() {
                out[(i + 1) * n + b] = ranked[r];
            }
        }
    }
}

impl Objective for SectorObjective<'_> {
    fn dim(&self) -> usize {
        (self.times.len() - 2) * (self.params.n_bodies() - 1)
    }

    fn eval(&mut self, x: &[f64], grad: &mut [f64]) -> f64 {
        let n = self.params.n_bodies();
        let mut full = std::mem::take(&mut self.full);
        self.fill_positions(x, &mut full);
        let f = action_and_gradient_raw(
            self.params,
            self.times,
            &full,
            self.eps,
            self.mask.as_deref(),
            &mut self.grad_full,
        );
        self.full = full;
        let total: f64 = self.ranked_masses.iter().sum();
        for (i, g) in grad.chunks_mut(n - 1).enumerate() {
            let raw = &self.grad_full[(i + 1) * n..(i + 2) * n];
            let ranked: Vec<f64> = self.order.iter().map(|&b| raw[b]).collect();
            let sum_g: f64 = ranked.iter().sum();
            // chain rule through q_r = q_0(x) + sum_{s<r} x_s
            let mut tail_g = 0.0;
            let mut tail_m = 0.0;
            for s in (0..n - 1).rev() {
                tail_g += ranked[s + 1];
                tail_m += self.ranked_masses[s + 1];
                g[s] = tail_g - sum_g * tail_m / total;
            }
        }
        f
    }

    fn precondition(&self, g: &[f64], out: &mut [f64]) {
        let k = self.params.n_bodies() - 1;
        out.copy_from_slice(g);
        for s in 0..k {
            self.laplacian.solve_strided(out, s, k);
        }
        let mut tmp = vec![0.0; k];
        for node in out.chunks_mut(k) {
            for (p, slot) in tmp.iter_mut().enumerate() {
                *slot = (0..k).map(|q| self.gram_inverse[(p, q)] * node[q]).sum();
            }
            node.copy_from_slice(&tmp);
        }
    }

    fn freeze(&mut self, x: &[f64]) -> bool {
        let full = self.positions(x);
        replace_mask(&mut self.mask, refinement_mask(self.params, &full))
    }
}

//! Limited-memory BFGS with a strong Wolfe line search, a caller-supplied
//! initial inverse Hessian, and an optional projected variant for the bound
//! `x >= lower`.

use std::collections::VecDeque;

pub(crate) trait Objective {
    fn dim(&self) -> usize;

    /// Value at `x`; writes the gradient into `grad`.
    fn eval(&mut self, x: &[f64], grad: &mut [f64]) -> f64;

    /// Apply the initial inverse Hessian approximation.
    fn precondition(&self, g: &[f64], out: &mut [f64]);

    /// Restore feasibility after an accepted step (rounding drift only).
    fn project(&self, _x: &mut [f64]) {}

    /// Fix any piecewise choices of the objective at `x`, so that it is
    /// smooth until the next call. Returns whether the choices changed.
    fn freeze(&mut self, _x: &[f64]) -> bool {
        false
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Options {
    pub memory: usize,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub lower_bound: Option<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct Outcome {
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// (iteration, value, gradient norm) after every iteration.
    pub trace: Vec<(usize, f64, f64)>,
}

const C1: f64 = 1e-4;
const C2: f64 = 0.9;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Memory {
    pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)>,
    capacity: usize,
}

impl Memory {
    fn new(capacity: usize) -> Self {
        Self {
            pairs: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    fn push(&mut self, s: Vec<f64>, y: Vec<f64>) {
        let sy = dot(&s, &y);
        if !(sy > 1e-300) {
            return;
        }
        if self.pairs.len() == self.capacity {
            self.pairs.pop_front();
        }
        self.pairs.push_back((s, y, 1.0 / sy));
    }

    fn clear(&mut self) {
        self.pairs.clear();
    }

    /// Two-loop recursion: `out = H g`.
    fn apply<O: Objective>(&self, obj: &O, g: &[f64], out: &mut [f64]) {
        let mut q = g.to_vec();
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for (s, y, rho) in self.pairs.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        obj.precondition(&q, out);
        if let Some((s, y, _)) = self.pairs.back() {
            let mut hy = vec![0.0; y.len()];
            obj.precondition(y, &mut hy);
            let gamma = dot(s, y) / dot(y, &hy);
            if gamma.is_finite() && gamma > 0.0 {
                out.iter_mut().for_each(|o| *o *= gamma);
            }
        }
        for ((s, y, rho), a) in self.pairs.iter().zip(alphas.into_iter().rev()) {
            let b = rho * dot(y, out);
            out.iter_mut().zip(s).for_each(|(o, si)| *o += (a - b) * si);
        }
    }
}

fn dual_norm<O: Objective>(obj: &O, g: &[f64], scratch: &mut [f64]) -> f64 {
    obj.precondition(g, scratch);
    dot(g, scratch).max(0.0).sqrt()
}

struct Trial {
    alpha: f64,
    f: f64,
    g: Vec<f64>,
    dphi: f64,
}

struct LineSearch<'a, O: Objective> {
    obj: &'a mut O,
    x: &'a [f64],
    d: &'a [f64],
    f0: f64,
    dphi0: f64,
    xt: Vec<f64>,
}

impl<O: Objective> LineSearch<'_, O> {
    fn eval(&mut self, alpha: f64) -> Trial {
        for ((xt, x), d) in self.xt.iter_mut().zip(self.x).zip(self.d) {
            *xt = x + alpha * d;
        }
        let mut g = vec![0.0; self.x.len()];
        let f = self.obj.eval(&self.xt, &mut g);
        let dphi = dot(&g, self.d);
        Trial { alpha, f, g, dphi }
    }

    fn armijo(&self, t: &Trial) -> bool {
        t.f <= self.f0 + C1 * t.alpha * self.dphi0 || self.approx_wolfe(t)
    }

    fn curvature(&self, t: &Trial) -> bool {
        t.dphi.abs() <= -C2 * self.dphi0
    }

    /// Approximate Wolfe test for when value differences drown in rounding.
    fn approx_wolfe(&self, t: &Trial) -> bool {
        let noise = 1e-13 * self.f0.abs().max(1e-300);
        t.f <= self.f0 + noise
            && t.dphi <= (2.0 * C1 - 1.0) * self.dphi0
            && t.dphi >= C2 * self.dphi0
    }

    fn search(&mut self, alpha0: f64) -> Option<Trial> {
        let mut prev = Trial {
            alpha: 0.0,
            f: self.f0,
            g: Vec::new(),
            dphi: self.dphi0,
        };
        let mut alpha = alpha0;
        for i in 0..40 {
            let t = self.eval(alpha);
            if !t.f.is_finite() {
                alpha = 0.5 * (prev.alpha + alpha);
                continue;
            }
            if !self.armijo(&t) || (i > 0 && t.f >= prev.f && !self.approx_wolfe(&t)) {
                return self.zoom(prev, t);
            }
            if self.curvature(&t) {
                return Some(t);
            }
            if t.dphi >= 0.0 {
                return self.zoom(t, prev);
            }
            alpha = (2.0 * alpha).min(1e10);
            prev = t;
        }
        None
    }

    fn zoom(&mut self, mut lo: Trial, mut hi: Trial) -> Option<Trial> {
        for _ in 0..60 {
            let (a, b) = (lo.alpha.min(hi.alpha), lo.alpha.max(hi.alpha));
            let width = b - a;
            if width <= 1e-16 * b.max(1e-300) {
                break;
            }
            let alpha = cubic_min(&lo, &hi)
                .filter(|x| *x > a + 0.1 * width && *x < b - 0.1 * width)
                .unwrap_or(0.5 * (a + b));
            let t = self.eval(alpha);
            if !t.f.is_finite() {
                hi = t;
                continue;
            }
            if !self.armijo(&t) || (t.f >= lo.f && !self.approx_wolfe(&t)) {
                hi = t;
            } else {
                if self.curvature(&t) {
                    return Some(t);
                }
                if t.dphi * (hi.alpha - lo.alpha) >= 0.0 {
                    hi = std::mem::replace(&mut lo, t);
                } else {
                    lo = t;
                }
            }
        }
        // accept the best point found if it decreased the objective
        (lo.alpha > 0.0 && lo.f < self.f0).then_some(lo)
    }
}

/// Minimizer of the cubic Hermite interpolant through two trials.
fn cubic_min(p: &Trial, q: &Trial) -> Option<f64> {
    let (a, b) = (p.alpha, q.alpha);
    let d1 = p.dphi + q.dphi - 3.0 * (p.f - q.f) / (a - b);
    let disc = d1 * d1 - p.dphi * q.dphi;
    if disc < 0.0 {
        return None;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let x = b - (b - a) * (q.dphi + d2 - d1) / (q.dphi - p.dphi + 2.0 * d2);
    x.is_finite().then_some(x)
}

/// Unconstrained L-BFGS from `x` (updated in place).
pub(crate) fn minimize<O: Objective>(obj: &mut O, x: &mut [f64], opts: &Options) -> Outcome {
    if opts.lower_bound.is_some() {
        return minimize_bounded(obj, x, opts);
    }
    let n = obj.dim();
    let mut g = vec![0.0; n];
    let mut f = obj.eval(x, &mut g);
    let mut scratch = vec![0.0; n];
    let mut gnorm = dual_norm(obj, &g, &mut scratch);
    let mut mem = Memory::new(opts.memory);
    let mut trace = Vec::new();
    let mut d = vec![0.0; n];
    let mut failures = 0;
    let mut iterations = 0;
    while iterations < opts.max_iters && gnorm > opts.grad_tol {
        mem.apply(obj, &g, &mut d);
        d.iter_mut().for_each(|v| *v = -*v);
        let mut dphi0 = dot(&g, &d);
        if !(dphi0 < 0.0) {
            mem.clear();
            obj.precondition(&g, &mut d);
            d.iter_mut().for_each(|v| *v = -*v);
            dphi0 = dot(&g, &d);
        }
        let alpha0 = if mem.pairs.is_empty() {
            // first step: move by at most the scale the preconditioned gradient suggests
            1.0f64.min(1.0 / gnorm.max(1e-300))
        } else {
            1.0
        };
        let mut ls = LineSearch {
            obj,
            x,
            d: &d,
            f0: f,
            dphi0,
            xt: vec![0.0; n],
        };
        let trial = ls.search(alpha0);
        iterations += 1;
        let Some(t) = trial else {
            failures += 1;
            if failures >= 2 || mem.pairs.is_empty() {
                break;
            }
            mem.clear();
            continue;
        };
        failures = 0;
        let s: Vec<f64> = d.iter().map(|di| t.alpha * di).collect();
        x.iter_mut().zip(&s).for_each(|(xi, si)| *xi += si);
        obj.project(x);
        let y: Vec<f64> = t.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        mem.push(s, y);
        f = t.f;
        g = t.g;
        gnorm = dual_norm(obj, &g, &mut scratch);
        trace.push((iterations, f, gnorm));
    }
    Outcome {
        value: f,
        grad_norm: gnorm,
        iterations,
        converged: gnorm <= opts.grad_tol,
        trace,
    }
}

/// Projected gradient: zero components that sit on the bound and push outward.
fn projected_gradient(x: &[f64], g: &[f64], lower: f64, out: &mut [f64]) {
    for ((o, xi), gi) in out.iter_mut().zip(x).zip(g) {
        *o = if *xi <= lower && *gi > 0.0 { 0.0 } else { *gi };
    }
}

/// L-BFGS restricted to the free variables, with Armijo backtracking along the
/// projection of the search ray onto `x >= lower`.
fn minimize_bounded<O: Objective>(obj: &mut O, x: &mut [f64], opts: &Options) -> Outcome {
    let lower = opts.lower_bound.expect("bounded variant");
    let n = obj.dim();
    x.iter_mut().for_each(|xi| *xi = xi.max(lower));
    let mut g = vec![0.0; n];
    let mut f = obj.eval(x, &mut g);
    let mut pg = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    projected_gradient(x, &g, lower, &mut pg);
    let mut gnorm = dual_norm(obj, &pg, &mut scratch);
    let mut mem = Memory::new(opts.memory);
    let mut trace = Vec::new();
    let mut d = vec![0.0; n];
    let mut xt = vec![0.0; n];
    let mut gt = vec![0.0; n];
    let mut iterations = 0;
    let mut failures = 0;
    while iterations < opts.max_iters && gnorm > opts.grad_tol {
        iterations += 1;
        let active: Vec<bool> = x
            .iter()
            .zip(&g)
            .map(|(xi, gi)| *xi <= lower && *gi > 0.0)
            .collect();
        mem.apply(obj, &pg, &mut d);
        d.iter_mut()
            .zip(&active)
            .for_each(|(v, a)| *v = if *a { 0.0 } else { -*v });
        if !(dot(&pg, &d) < 0.0) {
            mem.clear();
            obj.precondition(&pg, &mut d);
            d.iter_mut()
                .zip(&active)
                .for_each(|(v, a)| *v = if *a { 0.0 } else { -*v });
            if !(dot(&pg, &d) < 0.0) {
                d.iter_mut().zip(&pg).for_each(|(v, p)| *v = -p);
            }
        }
        let mut alpha = if mem.pairs.is_empty() {
            1.0f64.min(1.0 / gnorm.max(1e-300))
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..60 {
            for ((xt, xi), di) in xt.iter_mut().zip(x.iter()).zip(&d) {
                *xt = (xi + alpha * di).max(lower);
            }
            let ft = obj.eval(&xt, &mut gt);
            let decrease: f64 = g
                .iter()
                .zip(xt.iter().zip(x.iter()))
                .map(|(gi, (a, b))| gi * (a - b))
                .sum();
            if ft.is_finite() && ft <= f + C1 * decrease && decrease < 0.0 {
                accepted = Some(ft);
                break;
            }
            alpha *= 0.5;
        }
        let Some(ft) = accepted else {
            failures += 1;
            if failures >= 2 || mem.pairs.is_empty() {
                break;
            }
            mem.clear();
            continue;
        };
        failures = 0;
        let s: Vec<f64> = xt.iter().zip(x.iter()).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
        x.copy_from_slice(&xt);
        obj.project(x);
        mem.push(s, y);
        f = ft;
        g.copy_from_slice(&gt);
        projected_gradient(x, &g, lower, &mut pg);
        gnorm = dual_norm(obj, &pg, &mut scratch);
        trace.push((iterations, f, gnorm));
    }
    Outcome {
        value: f,
        grad_norm: gnorm,
        iterations,
        converged: gnorm <= opts.grad_tol,
        trace,
    }
}

//! Restricted-capacity unitary parameterization
//! `W(θ) = D₃ R₂ F⁻¹ D₂ P R₁ F D₁`.
//!
//! `D` are diagonal phase matrices `diag(e^{iθ})`, `R` are Householder
//! reflections `I − 2uuᴴ/(uᴴu)`, `F` is the unitary DFT and `P` a fixed
//! permutation. The trainable vector has `7n` reals, laid out as
//!
//! ```text
//! phase1 | refl1.re | refl1.im | phase2 | refl2.re | refl2.im | phase3
//! ```
//!
//! and that ordering is used for gradients and checkpoints alike.

use std::f64::consts::PI;
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::fft::{plan, DftPlan};
use crate::linalg::{matmul, unitarity_defect, Complex, ComplexMatrix, ComplexVector, ZERO};
use crate::random::Rng;

/// Minimum squared norm of a reflection vector.
pub const MIN_REFLECTION_NORM_SQR: f64 = 1e-20;

/// Number of trainable reals for hidden size `n`.
pub fn param_count(n: usize) -> usize {
    7 * n
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CapacityVerdict {
    pub n: usize,
    pub param_count: usize,
    /// Real dimension of U(n).
    pub manifold_dim: usize,
    /// Fewer parameters than the manifold dimension: the image of the
    /// parameterization has measure zero and misses some unitaries.
    pub provably_restricted: bool,
}

pub fn capacity_verdict(n: usize) -> CapacityVerdict {
    let param_count = param_count(n);
    let manifold_dim = n * n;
    CapacityVerdict {
        n,
        param_count,
        manifold_dim,
        provably_restricted: param_count < manifold_dim,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RestrictedParams {
    n: usize,
    pub phase1: Vec<f64>,
    pub refl1: Vec<Complex>,
    pub phase2: Vec<f64>,
    pub refl2: Vec<Complex>,
    pub phase3: Vec<f64>,
    perm: Vec<usize>,
}

impl RestrictedParams {
    pub fn new(
        phase1: Vec<f64>,
        refl1: Vec<Complex>,
        phase2: Vec<f64>,
        refl2: Vec<Complex>,
        phase3: Vec<f64>,
        perm: Vec<usize>,
    ) -> Result<Self> {
        let n = phase1.len();
        let p = Self {
            n,
            phase1,
            refl1,
            phase2,
            refl2,
            phase3,
            perm,
        };
        p.validate()?;
        Ok(p)
    }

    /// Rebuilds parameters from a flat `7n` vector and a permutation.
    pub fn from_theta(theta: &[f64], perm: Vec<usize>) -> Result<Self> {
        if theta.len() % 7 != 0 {
            return Err(Error::Invalid(format!("theta length {} is not a multiple of 7", theta.len())));
        }
        let n = theta.len() / 7;
        let mut p = Self {
            n,
            phase1: vec![0.0; n],
            refl1: vec![ZERO; n],
            phase2: vec![0.0; n],
            refl2: vec![ZERO; n],
            phase3: vec![0.0; n],
            perm,
        };
        p.set_theta(theta)?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        let n = self.n;
        if n == 0 {
            return Err(Error::Invalid("hidden size must be positive".into()));
        }
        let lens = [
            self.phase2.len(),
            self.phase3.len(),
            self.refl1.len(),
            self.refl2.len(),
            self.perm.len(),
        ];
        if lens.iter().any(|&l| l != n) {
            return Err(Error::Invalid(format!("inconsistent factor lengths for n={n}: {lens:?}")));
        }
        for (name, u) in [("refl1", &self.refl1), ("refl2", &self.refl2)] {
            let s: f64 = u.iter().map(|z| z.norm_sqr()).sum();
            if !(s > MIN_REFLECTION_NORM_SQR) {
                return Err(Error::Invalid(format!("{name} has squared norm {s:e}")));
            }
        }
        let mut seen = vec![false; n];
        for &k in &self.perm {
            if k >= n || std::mem::replace(&mut seen[k], true) {
                return Err(Error::Invalid("perm is not a permutation".into()));
            }
        }
        Ok(())
    }

    /// Draws phases uniformly on `[−π, π)`, reflection components uniformly
    /// on `[−1, 1]` (resampling near-zero vectors) and a uniform permutation.
    pub fn sample(n: usize, rng: &mut Rng) -> Self {
        assert!(n >= 1);
        let mut phases = || (0..n).map(|_| rng.uniform(-PI, PI)).collect::<Vec<_>>();
        let phase1 = phases();
        let phase2 = phases();
        let phase3 = phases();
        let mut reflection = || loop {
            let u: Vec<Complex> = (0..n)
                .map(|_| Complex::new(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)))
                .collect();
            if u.iter().map(|z| z.norm_sqr()).sum::<f64>() >= 1e-6 {
                break u;
            }
        };
        let refl1 = reflection();
        let refl2 = reflection();
        let perm = rng.permutation(n);
        Self {
            n,
            phase1,
            refl1,
            phase2,
            refl2,
            phase3,
            perm,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    /// Flat trainable vector in the documented `7n` order.
    pub fn theta(&self) -> Vec<f64> {
        let mut t = Vec::with_capacity(7 * self.n);
        t.extend_from_slice(&self.phase1);
        t.extend(self.refl1.iter().map(|z| z.re));
        t.extend(self.refl1.iter().map(|z| z.im));
        t.extend_from_slice(&self.phase2);
        t.extend(self.refl2.iter().map(|z| z.re));
        t.extend(self.refl2.iter().map(|z| z.im));
        t.extend_from_slice(&self.phase3);
        t
    }

    pub fn set_theta(&mut self, theta: &[f64]) -> Result<()> {
        let n = self.n;
        if theta.len() != 7 * n {
            return Err(Error::shape("set_theta", (7 * n, 1), (theta.len(), 1)));
        }
        let block = |k: usize| &theta[k * n..(k + 1) * n];
        let complex = |re: &[f64], im: &[f64]| -> Vec<Complex> {
            re.iter().zip(im).map(|(&a, &b)| Complex::new(a, b)).collect()
        };
        self.phase1 = block(0).to_vec();
        self.refl1 = complex(block(1), block(2));
        self.phase2 = block(3).to_vec();
        self.refl2 = complex(block(4), block(5));
        self.phase3 = block(6).to_vec();
        self.validate()
    }

    /// Precomputes phases and reflection norms for repeated application.
    pub fn prepare(&self) -> PreparedRestricted<'_> {
        let diag = |phase: &[f64]| phase.iter().map(|&t| Complex::from_polar(1.0, t)).collect();
        let norm = |u: &[Complex]| u.iter().map(|z| z.norm_sqr()).sum();
        PreparedRestricted {
            params: self,
            d1: diag(&self.phase1),
            d2: diag(&self.phase2),
            d3: diag(&self.phase3),
            s1: norm(&self.refl1),
            s2: norm(&self.refl2),
            plan: plan(self.n),
        }
    }

    /// `W(θ)·v`, factor by factor in O(n log n).
    pub fn apply(&self, v: &ComplexVector) -> Result<ComplexVector> {
        self.check_len(v.len())?;
        let mut out = v.clone();
        let mut scratch = vec![ZERO; self.n];
        self.prepare().apply_in_place(out.as_mut_slice(), &mut scratch);
        Ok(out)
    }

    /// Pullback of a downstream gradient through `v ↦ W(θ)·v`.
    ///
    /// Gradients use the split-real convention `∂L/∂Re + i·∂L/∂Im`.
    /// Returns `(∂L/∂θ, ∂L/∂v)` with `θ` in the documented `7n` order.
    pub fn apply_backward(
        &self,
        v: &ComplexVector,
        grad_out: &ComplexVector,
    ) -> Result<(Vec<f64>, ComplexVector)> {
        self.check_len(v.len())?;
        self.check_len(grad_out.len())?;
        let mut grad_theta = vec![0.0; 7 * self.n];
        let mut grad_v = ComplexVector::zeros(self.n);
        self.prepare().backward_acc(
            v.as_slice(),
            grad_out.as_slice(),
            &mut grad_theta,
            grad_v.as_mut_slice(),
        );
        Ok((grad_theta, grad_v))
    }

    /// Dense `n×n` matrix of `W(θ)`, built column by column from [`apply`](Self::apply).
    pub fn compose(&self) -> ComplexMatrix {
        let prepared = self.prepare();
        let mut scratch = vec![ZERO; self.n];
        let columns: Vec<ComplexVector> = (0..self.n)
            .map(|k| {
                let mut e = ComplexVector::basis(self.n, k);
                prepared.apply_in_place(e.as_mut_slice(), &mut scratch);
                e
            })
            .collect();
        ComplexMatrix::from_columns(&columns).expect("columns share length")
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n {
            return Err(Error::shape("restricted apply", (self.n, self.n), (len, 1)));
        }
        Ok(())
    }
}

/// [`RestrictedParams`] with phases exponentiated and norms cached.
pub struct PreparedRestricted<'a> {
    params: &'a RestrictedParams,
    d1: Vec<Complex>,
    d2: Vec<Complex>,
    d3: Vec<Complex>,
    s1: f64,
    s2: f64,
    plan: Rc<DftPlan>,
}

fn scale_by(x: &mut [Complex], d: &[Complex]) {
    for (a, b) in x.iter_mut().zip(d) {
        *a *= b;
    }
}

fn scale_by_conj(x: &mut [Complex], d: &[Complex]) {
    for (a, b) in x.iter_mut().zip(d) {
        *a *= b.conj();
    }
}

/// `x ← (I − 2uuᴴ/s)·x`
fn reflect(x: &mut [Complex], u: &[Complex], s: f64) {
    let alpha = crate::linalg::dot(u, x) * (2.0 / s);
    for (a, b) in x.iter_mut().zip(u) {
        *a -= alpha * b;
    }
}

/// Gradient with respect to `u` of `Re⟨g, R(u)·x⟩`.
fn reflect_grad_u(x: &[Complex], g: &[Complex], u: &[Complex], s: f64, out_re: &mut [f64], out_im: &mut [f64]) {
    let alpha = crate::linalg::dot(u, x);
    let beta = crate::linalg::dot(g, u);
    let radial = 4.0 / (s * s) * (alpha * beta).re;
    let k = 2.0 / s;
    for i in 0..u.len() {
        let gu = -(beta * x[i] + alpha.conj() * g[i]) * k + u[i] * radial;
        out_re[i] += gu.re;
        out_im[i] += gu.im;
    }
}

/// `out_k += Re(conj(g_k) · i · y_k)`, the derivative of a phase factor.
fn phase_grad(g: &[Complex], y: &[Complex], out: &mut [f64]) {
    for ((o, a), b) in out.iter_mut().zip(g).zip(y) {
        *o -= (a.conj() * b).im;
    }
}

impl PreparedRestricted<'_> {
    pub fn n(&self) -> usize {
        self.params.n
    }

    /// In-place `x ← W(θ)·x`; `scratch` needs length `n`.
    pub fn apply_in_place(&self, x: &mut [Complex], scratch: &mut [Complex]) {
        let p = self.params;
        scale_by(x, &self.d1);
        self.plan.process(x, scratch, false);
        reflect(x, &p.refl1, self.s1);
        scratch.copy_from_slice(x);
        for (xi, &src) in x.iter_mut().zip(&p.perm) {
            *xi = scratch[src];
        }
        scale_by(x, &self.d2);
        self.plan.process(x, scratch, true);
        reflect(x, &p.refl2, self.s2);
        scale_by(x, &self.d3);
    }

    /// Accumulates `∂L/∂θ` into `grad_theta` and `∂L/∂v` into `grad_v`
    /// given `grad_out = ∂L/∂(W v)`.
    pub fn backward_acc(&self, v: &[Complex], grad_out: &[Complex], grad_theta: &mut [f64], grad_v: &mut [Complex]) {
        let p = self.params;
        let n = p.n;
        let mut scratch = vec![ZERO; n];

        // forward, keeping the inputs of each non-trivial factor
        let mut a1 = v.to_vec();
        scale_by(&mut a1, &self.d1);
        let mut a2 = a1.clone();
        self.plan.process(&mut a2, &mut scratch, false);
        let mut a3 = a2.clone();
        reflect(&mut a3, &p.refl1, self.s1);
        let mut a5: Vec<Complex> = p.perm.iter().map(|&src| a3[src]).collect();
        scale_by(&mut a5, &self.d2);
        let mut a6 = a5.clone();
        self.plan.process(&mut a6, &mut scratch, true);
        let mut out = a6.clone();
        reflect(&mut out, &p.refl2, self.s2);
        scale_by(&mut out, &self.d3);

        let (ph1, rest) = grad_theta.split_at_mut(n);
        let (r1re, rest) = rest.split_at_mut(n);
        let (r1im, rest) = rest.split_at_mut(n);
        let (ph2, rest) = rest.split_at_mut(n);
        let (r2re, rest) = rest.split_at_mut(n);
        let (r2im, ph3) = rest.split_at_mut(n);

        let mut g = grad_out.to_vec();
        phase_grad(&g, &out, ph3);
        scale_by_conj(&mut g, &self.d3);
        reflect_grad_u(&a6, &g, &p.refl2, self.s2, r2re, r2im);
        reflect(&mut g, &p.refl2, self.s2);
        self.plan.process(&mut g, &mut scratch, false);
        phase_grad(&g, &a5, ph2);
        scale_by_conj(&mut g, &self.d2);
        let mut g3 = vec![ZERO; n];
        for (gi, &src) in g.iter().zip(&p.perm) {
            g3[src] = *gi;
        }
        let mut g = g3;
        reflect_grad_u(&a2, &g, &p.refl1, self.s1, r1re, r1im);
        reflect(&mut g, &p.refl1, self.s1);
        self.plan.process(&mut g, &mut scratch, true);
        phase_grad(&g, &a1, ph1);
        scale_by_conj(&mut g, &self.d1);
        for (o, x) in grad_v.iter_mut().zip(&g) {
            *o += x;
        }
    }
}

/// Product of two independent restricted-capacity draws.
pub fn sample_wide_unitary(n: usize, rng: &mut Rng) -> ComplexMatrix {
    let a = RestrictedParams::sample(n, rng).compose();
    let b = RestrictedParams::sample(n, rng).compose();
    matmul(&a, &b).expect("square factors")
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub restarts: usize,
    pub iters: usize,
    pub lr: f64,
    /// Permutation shared by all restarts; `None` draws one per restart.
    pub perm: Option<Vec<usize>>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            restarts: 8,
            iters: 3000,
            lr: 1e-2,
            perm: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub best_params: RestrictedParams,
    /// `‖W(θ) − target‖_F` at `best_params`.
    pub residual: f64,
    /// Final best residual of every restart, in restart order.
    pub restart_residuals: Vec<f64>,
    /// Best-so-far residual after each iteration of the winning restart.
    pub trace: Vec<f64>,
}

/// `f(θ) = ‖W(θ) − target‖²_F` and its gradient, one basis column at a time.
pub fn fit_objective(params: &RestrictedParams, target: &ComplexMatrix) -> (f64, Vec<f64>) {
    let n = params.n;
    let prepared = params.prepare();
    let mut scratch = vec![ZERO; n];
    let mut grad = vec![0.0; 7 * n];
    let mut sink = vec![ZERO; n];
    let mut value = 0.0;
    for k in 0..n {
        let e = ComplexVector::basis(n, k);
        let mut col = e.clone().into_vec();
        prepared.apply_in_place(&mut col, &mut scratch);
        let diff: Vec<Complex> = col.iter().enumerate().map(|(i, z)| z - target[(i, k)]).collect();
        value += diff.iter().map(|z| z.norm_sqr()).sum::<f64>();
        let g: Vec<Complex> = diff.iter().map(|z| z * 2.0).collect();
        prepared.backward_acc(e.as_slice(), &g, &mut grad, &mut sink);
    }
    (value, grad)
}

/// Fits the restricted parameterization to a unitary target by gradient
/// descent from several random starts and keeps the best run.
pub fn fit_to_target(target: &ComplexMatrix, options: &FitOptions, rng: &mut Rng) -> Result<FitResult> {
    let defect = unitarity_defect(target)?;
    if !(defect < 1e-8) {
        return Err(Error::Invalid(format!("target is not unitary (defect {defect:e})")));
    }
    if options.restarts == 0 {
        return Err(Error::Invalid("restarts must be positive".into()));
    }
    let n = target.rows();
    let mut best: Option<FitResult> = None;
    let mut restart_residuals = Vec::with_capacity(options.restarts);
    for _ in 0..options.restarts {
        let mut params = RestrictedParams::sample(n, rng);
        if let Some(perm) = &options.perm {
            params = RestrictedParams::from_theta(&params.theta(), perm.clone())?;
        }
        let mut theta = params.theta();
        let mut best_run = (f64::INFINITY, params.clone());
        let mut trace = Vec::with_capacity(options.iters + 1);
        for it in 0..=options.iters {
            let (value, grad) = fit_objective(&params, target);
            let residual = value.sqrt();
            if residual < best_run.0 {
                best_run = (residual, params.clone());
            }
            trace.push(best_run.0);
            if it == options.iters {
                break;
            }
            for (t, g) in theta.iter_mut().zip(&grad) {
                *t -= options.lr * g;
            }
            if params.set_theta(&theta).is_err() {
                // reflection vector collapsed; keep the best point seen
                break;
            }
        }
        restart_residuals.push(best_run.0);
        if best.as_ref().map_or(true, |b| best_run.0 < b.residual) {
            best = Some(FitResult {
                best_params: best_run.1,
                residual: best_run.0,
                restart_residuals: Vec::new(),
                trace,
            });
        }
    }
    let mut result = best.expect("at least one restart");
    result.restart_residuals = restart_residuals;
    Ok(result)
}

//! The unitary RNN
//!
//! ```text
//! h_t = σ_b(W h_{t−1} + V x_t)
//! y_t = U h_t + c            (real part only when `real_output`)
//! ```
//!
//! with the modReLU nonlinearity `σ_b`, plus losses and exact
//! backpropagation through time. Complex parameters are treated as pairs
//! of reals; every gradient is `∂L/∂Re + i·∂L/∂Im`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Complex, ComplexMatrix, ComplexVector, ZERO};
use crate::random::{haar_unitary, Rng};
use crate::restricted::RestrictedParams;
use crate::stiefel::StiefelPoint;

/// Below this modulus modReLU outputs exactly zero.
pub const MODRELU_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecurrenceKind {
    Restricted,
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Recurrence {
    Restricted(RestrictedParams),
    Full(StiefelPoint),
}

impl Recurrence {
    /// Restricted draws come from [`RestrictedParams::sample`], full ones are Haar.
    pub fn sample(kind: RecurrenceKind, n: usize, rng: &mut Rng) -> Self {
        match kind {
            RecurrenceKind::Restricted => Recurrence::Restricted(RestrictedParams::sample(n, rng)),
            RecurrenceKind::Full => Recurrence::Full(StiefelPoint::new(haar_unitary(n, rng)).expect("Haar draw is unitary")),
        }
    }

    pub fn kind(&self) -> RecurrenceKind {
        match self {
            Recurrence::Restricted(_) => RecurrenceKind::Restricted,
            Recurrence::Full(_) => RecurrenceKind::Full,
        }
    }

    pub fn n(&self) -> usize {
        match self {
            Recurrence::Restricted(p) => p.n(),
            Recurrence::Full(w) => w.n(),
        }
    }

    /// Dense recurrence matrix.
    pub fn matrix(&self) -> ComplexMatrix {
        match self {
            Recurrence::Restricted(p) => p.compose(),
            Recurrence::Full(w) => w.matrix().clone(),
        }
    }

    pub fn unitarity_defect(&self) -> f64 {
        crate::linalg::unitarity_defect(&self.matrix()).expect("square")
    }

    /// Number of trainable reals.
    pub fn param_count(&self) -> usize {
        match self {
            Recurrence::Restricted(p) => 7 * p.n(),
            Recurrence::Full(w) => w.n() * w.n(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UrnnModel {
    pub recurrence: Recurrence,
    /// Input-to-hidden, `n×m`.
    pub v: ComplexMatrix,
    /// modReLU bias.
    pub b: Vec<f64>,
    /// Hidden-to-output, `l×n`.
    pub u: ComplexMatrix,
    pub c: Vec<Complex>,
    pub h0: Vec<Complex>,
    pub real_output: bool,
}

fn glorot(rows: usize, cols: usize, rng: &mut Rng) -> ComplexMatrix {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    ComplexMatrix::from_fn(rows, cols, |_, _| {
        let re = rng.uniform(-limit, limit);
        let im = rng.uniform(-limit, limit);
        Complex::new(re, im)
    })
}

impl UrnnModel {
    /// Scaled-uniform `V` and `U`; zero `b`, `c` and `h0`.
    pub fn init(recurrence: Recurrence, m: usize, l: usize, real_output: bool, rng: &mut Rng) -> Self {
        let n = recurrence.n();
        let v = glorot(n, m, rng);
        let u = glorot(l, n, rng);
        Self {
            recurrence,
            v,
            b: vec![0.0; n],
            u,
            c: vec![ZERO; l],
            h0: vec![ZERO; n],
            real_output,
        }
    }

    pub fn n(&self) -> usize {
        self.recurrence.n()
    }

    pub fn m(&self) -> usize {
        self.v.cols()
    }

    pub fn l(&self) -> usize {
        self.u.rows()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        let bad = |what: &str| Err(Error::Invalid(format!("inconsistent model shape: {what}")));
        if self.v.rows() != n {
            return bad("V rows");
        }
        if self.u.cols() != n {
            return bad("U cols");
        }
        if self.b.len() != n || self.h0.len() != n {
            return bad("b/h0 length");
        }
        if self.c.len() != self.l() {
            return bad("c length");
        }
        Ok(())
    }

    /// Total trainable reals, `h0` included.
    pub fn param_count(&self) -> usize {
        self.recurrence.param_count()
            + 2 * (self.v.rows() * self.v.cols() + self.u.rows() * self.u.cols() + self.c.len() + self.h0.len())
            + self.b.len()
    }

    fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |x: f64| {
            h ^= x.to_bits();
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        };
        match &self.recurrence {
            Recurrence::Restricted(p) => p.theta().into_iter().for_each(&mut eat),
            Recurrence::Full(w) => w.matrix().as_slice().iter().for_each(|z| {
                eat(z.re);
                eat(z.im);
            }),
        }
        for z in self.v.as_slice().iter().chain(self.u.as_slice()).chain(&self.c).chain(&self.h0) {
            eat(z.re);
            eat(z.im);
        }
        self.b.iter().for_each(|&x| eat(x));
        h
    }
}

/// Inputs for every sequence and step, flattened `batch × steps (× dim)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Inputs {
    /// Class indices expanded to one-hot vectors of length `dim`.
    OneHot { dim: usize, index: Vec<u32> },
    /// Real or complex dense vectors (real data has zero imaginary part).
    Dense { dim: usize, values: Vec<Complex> },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    /// Class index per step, for cross entropy over `classes` logits.
    Classes { classes: usize, index: Vec<u32> },
    Real { dim: usize, values: Vec<f64> },
    Complex { dim: usize, values: Vec<Complex> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceBatch {
    pub batch: usize,
    pub steps: usize,
    pub inputs: Inputs,
    pub targets: Targets,
    /// Optional per-(sequence, step) loss weight.
    pub mask: Option<Vec<f64>>,
}

impl Inputs {
    pub fn dim(&self) -> usize {
        match self {
            Inputs::OneHot { dim, .. } | Inputs::Dense { dim, .. } => *dim,
        }
    }

    fn len_steps(&self) -> usize {
        match self {
            Inputs::OneHot { index, .. } => index.len(),
            Inputs::Dense { dim, values } => values.len() / (*dim).max(1),
        }
    }

    fn select(&self, rows: &[usize], steps: usize) -> Inputs {
        match self {
            Inputs::OneHot { dim, index } => Inputs::OneHot {
                dim: *dim,
                index: gather(index, rows, steps),
            },
            Inputs::Dense { dim, values } => Inputs::Dense {
                dim: *dim,
                values: gather(values, rows, steps * dim),
            },
        }
    }
}

impl Targets {
    pub fn dim(&self) -> usize {
        match self {
            Targets::Classes { classes, .. } => *classes,
            Targets::Real { dim, .. } | Targets::Complex { dim, .. } => *dim,
        }
    }

    fn len_steps(&self) -> usize {
        match self {
            Targets::Classes { index, .. } => index.len(),
            Targets::Real { dim, values } => values.len() / (*dim).max(1),
            Targets::Complex { dim, values } => values.len() / (*dim).max(1),
        }
    }

    fn select(&self, rows: &[usize], steps: usize) -> Targets {
        match self {
            Targets::Classes { classes, index } => Targets::Classes {
                classes: *classes,
                index: gather(index, rows, steps),
            },
            Targets::Real { dim, values } => Targets::Real {
                dim: *dim,
                values: gather(values, rows, steps * dim),
            },
            Targets::Complex { dim, values } => Targets::Complex {
                dim: *dim,
                values: gather(values, rows, steps * dim),
            },
        }
    }
}

fn gather<T: Copy>(data: &[T], rows: &[usize], row_len: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(rows.len() * row_len);
    for &r in rows {
        out.extend_from_slice(&data[r * row_len..(r + 1) * row_len]);
    }
    out
}

impl SequenceBatch {
    pub fn validate(&self) -> Result<()> {
        let expected = self.batch * self.steps;
        let inputs = self.inputs.len_steps();
        let targets = self.targets.len_steps();
        if inputs != expected || targets != expected {
            return Err(Error::Invalid(format!(
                "batch {}×{} has {inputs} input steps and {targets} target steps",
                self.batch, self.steps
            )));
        }
        if let Some(mask) = &self.mask {
            if mask.len() != expected {
                return Err(Error::Invalid(format!("mask length {} != {expected}", mask.len())));
            }
        }
        Ok(())
    }

    /// Sub-batch made of the given sequences, in the given order.
    pub fn select(&self, rows: &[usize]) -> SequenceBatch {
        SequenceBatch {
            batch: rows.len(),
            steps: self.steps,
            inputs: self.inputs.select(rows, self.steps),
            targets: self.targets.select(rows, self.steps),
            mask: self.mask.as_ref().map(|m| gather(m, rows, self.steps)),
        }
    }

    /// Contiguous sub-batch `start..end`.
    pub fn slice(&self, start: usize, end: usize) -> SequenceBatch {
        self.select(&(start..end).collect::<Vec<_>>())
    }

    fn weight(&self, s: usize, t: usize) -> f64 {
        self.mask.as_ref().map_or(1.0, |m| m[s * self.steps + t])
    }

    fn total_weight(&self) -> f64 {
        self.mask
            .as_ref()
            .map_or((self.batch * self.steps) as f64, |m| m.iter().sum())
    }
}

/// `[σ_b(z)]_i = (|z_i| + b_i)·z_i/|z_i|` if `|z_i| + b_i > 0`, else 0.
pub fn modrelu(z: &ComplexVector, b: &[f64]) -> Result<ComplexVector> {
    if z.len() != b.len() {
        return Err(Error::shape("modrelu", (z.len(), 1), (b.len(), 1)));
    }
    let mut out = z.clone();
    modrelu_in_place(out.as_mut_slice(), b);
    Ok(out)
}

fn modrelu_in_place(z: &mut [Complex], b: &[f64]) {
    for (x, &bias) in z.iter_mut().zip(b) {
        let r = x.norm();
        if r < MODRELU_EPS || r + bias <= 0.0 {
            *x = ZERO;
        } else {
            *x *= (r + bias) / r;
        }
    }
}

/// Pulls `g_h` back through modReLU: writes `∂L/∂z` into `g_h` and
/// accumulates `∂L/∂b`.
fn modrelu_backward(z: &[Complex], b: &[f64], g_h: &mut [Complex], g_b: &mut [f64]) {
    for i in 0..z.len() {
        let x = z[i];
        let r = x.norm();
        let g = g_h[i];
        if r < MODRELU_EPS || r + b[i] <= 0.0 {
            g_h[i] = ZERO;
            continue;
        }
        // out = z·(1 + b/r); d|z| = Re(conj(z) dz)/r
        let proj = (g.conj() * x).re;
        g_b[i] += proj / r;
        g_h[i] = g * (1.0 + b[i] / r) - x * (b[i] * proj / (r * r * r));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Mse,
    CrossEntropy,
}

/// States and pre-activations retained for the backward pass.
#[derive(Debug, Clone)]
pub struct HiddenTrace {
    batch: usize,
    steps: usize,
    n: usize,
    fingerprint: u64,
    /// `batch × (steps + 1) × n`, starting with `h0`.
    pub states: Vec<Complex>,
    /// `batch × steps × n`.
    pub preactivations: Vec<Complex>,
}

impl HiddenTrace {
    pub fn state(&self, s: usize, t: usize) -> &[Complex] {
        let off = (s * (self.steps + 1) + t) * self.n;
        &self.states[off..off + self.n]
    }

    fn preactivation(&self, s: usize, t: usize) -> &[Complex] {
        let off = (s * self.steps + t) * self.n;
        &self.preactivations[off..off + self.n]
    }
}

/// `batch × steps × l` outputs; imaginary parts are zero for real outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Outputs {
    pub batch: usize,
    pub steps: usize,
    pub dim: usize,
    pub real: bool,
    pub values: Vec<Complex>,
}

impl Outputs {
    pub fn step(&self, s: usize, t: usize) -> &[Complex] {
        let off = (s * self.steps + t) * self.dim;
        &self.values[off..off + self.dim]
    }
}

fn add_input(model: &UrnnModel, inputs: &Inputs, s: usize, t: usize, steps: usize, z: &mut [Complex]) {
    let pos = s * steps + t;
    match inputs {
        Inputs::OneHot { dim, index } => {
            let k = index[pos] as usize;
            for (i, zi) in z.iter_mut().enumerate() {
                *zi += model.v.as_slice()[i * dim + k];
            }
        }
        Inputs::Dense { dim, values } => {
            let x = &values[pos * dim..(pos + 1) * dim];
            let mut tmp = vec![ZERO; z.len()];
            model.v.matvec_into(x, &mut tmp);
            for (a, b) in z.iter_mut().zip(&tmp) {
                *a += b;
            }
        }
    }
}

/// Runs the recurrence over every sequence of `batch`.
pub fn forward(model: &UrnnModel, batch: &SequenceBatch) -> Result<(HiddenTrace, Outputs)> {
    model.validate()?;
    batch.validate()?;
    if batch.inputs.dim() != model.m() {
        return Err(Error::shape("forward inputs", (model.n(), model.m()), (batch.inputs.dim(), 1)));
    }
    let (n, l, steps) = (model.n(), model.l(), batch.steps);
    let mut states = Vec::with_capacity(batch.batch * (steps + 1) * n);
    let mut preactivations = Vec::with_capacity(batch.batch * steps * n);
    let mut values = Vec::with_capacity(batch.batch * steps * l);

    let prepared = match &model.recurrence {
        Recurrence::Restricted(p) => Some(p.prepare()),
        Recurrence::Full(_) => None,
    };
    let mut scratch = vec![ZERO; n];
    let mut z = vec![ZERO; n];
    let mut y = vec![ZERO; l];

    for s in 0..batch.batch {
        let mut h = model.h0.clone();
        states.extend_from_slice(&h);
        for t in 0..steps {
            match (&model.recurrence, &prepared) {
                (Recurrence::Full(w), _) => w.matrix().matvec_into(&h, &mut z),
                (Recurrence::Restricted(_), Some(p)) => {
                    z.copy_from_slice(&h);
                    p.apply_in_place(&mut z, &mut scratch);
                }
                _ => unreachable!(),
            }
            add_input(model, &batch.inputs, s, t, steps, &mut z);
            preactivations.extend_from_slice(&z);
            h.copy_from_slice(&z);
            modrelu_in_place(&mut h, &model.b);
            states.extend_from_slice(&h);

            model.u.matvec_into(&h, &mut y);
            for (k, yk) in y.iter_mut().enumerate() {
                *yk += model.c[k];
                if model.real_output {
                    yk.im = 0.0;
                }
            }
            values.extend_from_slice(&y);
        }
    }
    let trace = HiddenTrace {
        batch: batch.batch,
        steps,
        n,
        fingerprint: model.fingerprint(),
        states,
        preactivations,
    };
    let outputs = Outputs {
        batch: batch.batch,
        steps,
        dim: l,
        real: model.real_output,
        values,
    };
    Ok((trace, outputs))
}

fn check_outputs(outputs: &Outputs, batch: &SequenceBatch, kind: LossKind) -> Result<()> {
    if outputs.batch != batch.batch || outputs.steps != batch.steps {
        return Err(Error::shape("loss", (outputs.batch, outputs.steps), (batch.batch, batch.steps)));
    }
    if batch.targets.dim() != outputs.dim {
        return Err(Error::shape("loss", (outputs.dim, 1), (batch.targets.dim(), 1)));
    }
    if let Some(i) = outputs.values.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite { context: "outputs", index: i });
    }
    match (kind, &batch.targets) {
        (LossKind::CrossEntropy, Targets::Classes { .. }) if outputs.real => Ok(()),
        (LossKind::CrossEntropy, _) => Err(Error::Invalid(
            "cross entropy needs real outputs and class targets".into(),
        )),
        (LossKind::Mse, Targets::Classes { .. }) => Err(Error::Invalid("mse needs numeric targets".into())),
        (LossKind::Mse, Targets::Complex { .. }) if outputs.real => {
            Err(Error::Invalid("real outputs cannot fit complex targets".into()))
        }
        (LossKind::Mse, _) => Ok(()),
    }
}

fn log_softmax_at(logits: &[Complex], k: usize) -> f64 {
    let max = logits.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|z| (z.re - max).exp()).sum();
    logits[k].re - max - sum.ln()
}

/// Per-step loss and its gradient with respect to the step's outputs,
/// before normalization.
fn step_loss(y: &[Complex], targets: &Targets, pos: usize, kind: LossKind, grad: Option<&mut [Complex]>) -> f64 {
    match (kind, targets) {
        (LossKind::CrossEntropy, Targets::Classes { index, .. }) => {
            let k = index[pos] as usize;
            if let Some(g) = grad {
                let max = y.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
                let sum: f64 = y.iter().map(|z| (z.re - max).exp()).sum();
                for (j, gj) in g.iter_mut().enumerate() {
                    let p = (y[j].re - max).exp() / sum;
                    *gj = Complex::new(p - if j == k { 1.0 } else { 0.0 }, 0.0);
                }
            }
            -log_softmax_at(y, k)
        }
        (LossKind::Mse, Targets::Real { dim, values }) => {
            let d = &values[pos * dim..(pos + 1) * dim];
            let mut total = 0.0;
            let mut grad = grad;
            for j in 0..*dim {
                let e = y[j] - Complex::new(d[j], 0.0);
                total += e.norm_sqr();
                if let Some(g) = grad.as_deref_mut() {
                    g[j] = e * 2.0;
                }
            }
            total
        }
        (LossKind::Mse, Targets::Complex { dim, values }) => {
            let d = &values[pos * dim..(pos + 1) * dim];
            let mut total = 0.0;
            let mut grad = grad;
            for j in 0..*dim {
                let e = y[j] - d[j];
                total += e.norm_sqr();
                if let Some(g) = grad.as_deref_mut() {
                    g[j] = e * 2.0;
                }
            }
            total
        }
        _ => unreachable!("checked by check_outputs"),
    }
}

fn normalizer(batch: &SequenceBatch, dim: usize, kind: LossKind) -> f64 {
    match kind {
        LossKind::Mse => batch.total_weight() * dim as f64,
        LossKind::CrossEntropy => batch.total_weight(),
    }
}

/// Mean squared error over batch, time and components, or mean per-step
/// cross entropy of `softmax(y_t)`.
pub fn compute_loss(outputs: &Outputs, batch: &SequenceBatch, kind: LossKind) -> Result<f64> {
    check_outputs(outputs, batch, kind)?;
    let mut total = 0.0;
    for s in 0..batch.batch {
        for t in 0..batch.steps {
            let w = batch.weight(s, t);
            if w != 0.0 {
                total += w * step_loss(outputs.step(s, t), &batch.targets, s * batch.steps + t, kind, None);
            }
        }
    }
    let norm = normalizer(batch, outputs.dim, kind);
    Ok(if norm > 0.0 { total / norm } else { 0.0 })
}

/// Fraction of steps whose arg-max logit equals the target class.
pub fn accuracy(outputs: &Outputs, batch: &SequenceBatch) -> Option<f64> {
    let Targets::Classes { index, .. } = &batch.targets else {
        return None;
    };
    let mut hits = 0usize;
    for (pos, &k) in index.iter().enumerate() {
        let y = &outputs.values[pos * outputs.dim..(pos + 1) * outputs.dim];
        let best = (0..y.len()).fold(0, |b, j| if y[j].re > y[b].re { j } else { b });
        hits += (best == k as usize) as usize;
    }
    Some(hits as f64 / index.len().max(1) as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub enum RecurrenceGrad {
    /// `∂L/∂θ` in the restricted `7n` order.
    Theta(Vec<f64>),
    /// Dense `G = Σ_t (∂L/∂z_t) h_{t−1}ᴴ`.
    Dense(ComplexMatrix),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub recurrence: RecurrenceGrad,
    pub v: ComplexMatrix,
    pub b: Vec<f64>,
    pub u: ComplexMatrix,
    pub c: Vec<Complex>,
    pub h0: Vec<Complex>,
}

impl GradientSet {
    pub fn zeros_like(model: &UrnnModel) -> Self {
        let recurrence = match &model.recurrence {
            Recurrence::Restricted(p) => RecurrenceGrad::Theta(vec![0.0; 7 * p.n()]),
            Recurrence::Full(w) => RecurrenceGrad::Dense(ComplexMatrix::zeros(w.n(), w.n())),
        };
        Self {
            recurrence,
            v: ComplexMatrix::zeros(model.v.rows(), model.v.cols()),
            b: vec![0.0; model.b.len()],
            u: ComplexMatrix::zeros(model.u.rows(), model.u.cols()),
            c: vec![ZERO; model.c.len()],
            h0: vec![ZERO; model.h0.len()],
        }
    }

    /// Flattened reals of one parameter group, in [`ParamGroup`] order.
    pub fn group(&self, group: ParamGroup) -> Vec<f64> {
        match group {
            ParamGroup::Recurrence => match &self.recurrence {
                RecurrenceGrad::Theta(t) => t.clone(),
                RecurrenceGrad::Dense(g) => split(g.as_slice()),
            },
            ParamGroup::V => split(self.v.as_slice()),
            ParamGroup::B => self.b.clone(),
            ParamGroup::U => split(self.u.as_slice()),
            ParamGroup::C => split(&self.c),
            ParamGroup::H0 => split(&self.h0),
        }
    }

    pub fn is_finite(&self) -> bool {
        ParamGroup::ALL
            .iter()
            .all(|&g| self.group(g).iter().all(|x| x.is_finite()))
    }
}

fn split(z: &[Complex]) -> Vec<f64> {
    z.iter().flat_map(|c| [c.re, c.im]).collect()
}

/// Named groups of trainable reals. Complex arrays flatten to interleaved
/// `re, im` pairs in row-major order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamGroup {
    Recurrence,
    V,
    B,
    U,
    C,
    H0,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 6] = [
        ParamGroup::Recurrence,
        ParamGroup::V,
        ParamGroup::B,
        ParamGroup::U,
        ParamGroup::C,
        ParamGroup::H0,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamGroup::Recurrence => "recurrence",
            ParamGroup::V => "v",
            ParamGroup::B => "b",
            ParamGroup::U => "u",
            ParamGroup::C => "c",
            ParamGroup::H0 => "h0",
        }
    }
}

fn complex_slot(z: &mut [Complex], idx: usize) -> &mut f64 {
    let c = &mut z[idx / 2];
    if idx % 2 == 0 {
        &mut c.re
    } else {
        &mut c.im
    }
}

impl UrnnModel {
    pub fn group_len(&self, group: ParamGroup) -> usize {
        match group {
            ParamGroup::Recurrence => self.recurrence.param_count() * if matches!(self.recurrence, Recurrence::Full(_)) { 2 } else { 1 },
            ParamGroup::V => 2 * self.v.as_slice().len(),
            ParamGroup::B => self.b.len(),
            ParamGroup::U => 2 * self.u.as_slice().len(),
            ParamGroup::C => 2 * self.c.len(),
            ParamGroup::H0 => 2 * self.h0.len(),
        }
    }

    /// Adds `delta` to one real of a parameter group. For a full recurrence
    /// this leaves the unitary manifold; it exists for finite differences.
    pub fn perturb(&mut self, group: ParamGroup, idx: usize, delta: f64) -> Result<()> {
        match group {
            ParamGroup::Recurrence => match &mut self.recurrence {
                Recurrence::Restricted(p) => {
                    let mut theta = p.theta();
                    theta[idx] += delta;
                    p.set_theta(&theta)?;
                }
                Recurrence::Full(w) => *complex_slot(w.matrix_mut_unchecked().as_mut_slice(), idx) += delta,
            },
            ParamGroup::V => *complex_slot(self.v.as_mut_slice(), idx) += delta,
            ParamGroup::B => self.b[idx] += delta,
            ParamGroup::U => *complex_slot(self.u.as_mut_slice(), idx) += delta,
            ParamGroup::C => *complex_slot(&mut self.c, idx) += delta,
            ParamGroup::H0 => *complex_slot(&mut self.h0, idx) += delta,
        }
        Ok(())
    }
}

impl UrnnModel {
    /// Flattened reals of one group, laid out like [`GradientSet::group`].
    pub fn group_values(&self, group: ParamGroup) -> Vec<f64> {
        match group {
            ParamGroup::Recurrence => match &self.recurrence {
                Recurrence::Restricted(p) => p.theta(),
                Recurrence::Full(w) => split(w.matrix().as_slice()),
            },
            ParamGroup::V => split(self.v.as_slice()),
            ParamGroup::B => self.b.clone(),
            ParamGroup::U => split(self.u.as_slice()),
            ParamGroup::C => split(&self.c),
            ParamGroup::H0 => split(&self.h0),
        }
    }

    /// Overwrites one group from flattened reals. A full recurrence must be
    /// written through [`StiefelPoint`] instead and is rejected here.
    pub fn set_group_values(&mut self, group: ParamGroup, values: &[f64]) -> Result<()> {
        if values.len() != self.group_len(group) {
            return Err(Error::shape("set_group_values", (values.len(), 1), (self.group_len(group), 1)));
        }
        let unsplit = |dst: &mut [Complex]| {
            for (z, p) in dst.iter_mut().zip(values.chunks_exact(2)) {
                *z = Complex::new(p[0], p[1]);
            }
        };
        match group {
            ParamGroup::Recurrence => match &mut self.recurrence {
                Recurrence::Restricted(p) => p.set_theta(values)?,
                Recurrence::Full(_) => {
                    return Err(Error::Invalid("full recurrence is updated on the manifold, not by value".into()))
                }
            },
            ParamGroup::V => unsplit(self.v.as_mut_slice()),
            ParamGroup::B => self.b.copy_from_slice(values),
            ParamGroup::U => unsplit(self.u.as_mut_slice()),
            ParamGroup::C => unsplit(&mut self.c),
            ParamGroup::H0 => unsplit(&mut self.h0),
        }
        Ok(())
    }
}

/// Exact gradient of the mean loss with respect to every model field.
pub fn bptt_backward(
    model: &UrnnModel,
    batch: &SequenceBatch,
    trace: &HiddenTrace,
    outputs: &Outputs,
    kind: LossKind,
) -> Result<GradientSet> {
    if trace.batch != batch.batch || trace.steps != batch.steps || trace.n != model.n() {
        return Err(Error::Invalid("hidden trace does not match this batch".into()));
    }
    if trace.fingerprint != model.fingerprint() {
        return Err(Error::Invalid("hidden trace is stale: model changed since forward".into()));
    }
    check_outputs(outputs, batch, kind)?;

    let (n, l, steps) = (model.n(), model.l(), batch.steps);
    let norm = normalizer(batch, l, kind);
    let mut grads = GradientSet::zeros_like(model);
    if norm <= 0.0 {
        return Ok(grads);
    }
    let prepared = match &model.recurrence {
        Recurrence::Restricted(p) => Some(p.prepare()),
        Recurrence::Full(_) => None,
    };

    let mut g_out = vec![ZERO; l];
    let mut g_h = vec![ZERO; n];
    let mut g_next = vec![ZERO; n];
    for s in 0..batch.batch {
        g_next.iter_mut().for_each(|x| *x = ZERO);
        for t in (0..steps).rev() {
            let pos = s * steps + t;
            let w = batch.weight(s, t);
            let h_t = trace.state(s, t + 1);
            g_h.copy_from_slice(&g_next);
            if w != 0.0 {
                step_loss(outputs.step(s, t), &batch.targets, pos, kind, Some(&mut g_out));
                let scale = w / norm;
                for g in g_out.iter_mut() {
                    *g *= scale;
                    if model.real_output {
                        g.im = 0.0;
                    }
                }
                grads.u.add_outer(&g_out, h_t);
                for (c, g) in grads.c.iter_mut().zip(&g_out) {
                    *c += g;
                }
                model.u.adjoint_matvec_acc(&g_out, &mut g_h);
            }
            modrelu_backward(trace.preactivation(s, t), &model.b, &mut g_h, &mut grads.b);
            let g_z = &g_h;

            match &batch.inputs {
                Inputs::OneHot { dim, index } => {
                    let k = index[pos] as usize;
                    let gv = grads.v.as_mut_slice();
                    for (i, g) in g_z.iter().enumerate() {
                        gv[i * dim + k] += g;
                    }
                }
                Inputs::Dense { dim, values } => {
                    grads.v.add_outer(g_z, &values[pos * dim..(pos + 1) * dim]);
                }
            }

            let h_prev = trace.state(s, t);
            g_next.iter_mut().for_each(|x| *x = ZERO);
            match (&model.recurrence, &prepared, &mut grads.recurrence) {
                (Recurrence::Full(wp), _, RecurrenceGrad::Dense(gw)) => {
                    gw.add_outer(g_z, h_prev);
                    wp.matrix().adjoint_matvec_acc(g_z, &mut g_next);
                }
                (Recurrence::Restricted(_), Some(p), RecurrenceGrad::Theta(gt)) => {
                    p.backward_acc(h_prev, g_z, gt, &mut g_next);
                }
                _ => unreachable!(),
            }
        }
        for (a, b) in grads.h0.iter_mut().zip(&g_next) {
            *a += b;
        }
    }
    Ok(grads)
}

/// Forward pass plus loss, the common evaluation path.
pub fn evaluate(model: &UrnnModel, batch: &SequenceBatch, kind: LossKind) -> Result<(f64, Outputs)> {
    let (_, outputs) = forward(model, batch)?;
    let loss = compute_loss(&outputs, batch, kind)?;
    Ok((loss, outputs))
}

/// Loss and full gradient set in one call.
pub fn loss_and_gradients(model: &UrnnModel, batch: &SequenceBatch, kind: LossKind) -> Result<(f64, GradientSet)> {
    let (trace, outputs) = forward(model, batch)?;
    let loss = compute_loss(&outputs, batch, kind)?;
    let grads = bptt_backward(model, batch, &trace, &outputs, kind)?;
    Ok((loss, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ONE;
    use crate::random::randn_circular;

    fn c(re: f64, im: f64) -> Complex {
        Complex::new(re, im)
    }

    #[test]
    fn modrelu_examples() {
        let out = modrelu(&ComplexVector::from_vec(vec![c(1.0, 0.0)]), &[0.5]).unwrap();
        assert!((out[0] - c(1.5, 0.0)).norm() < 1e-15);
        let out = modrelu(&ComplexVector::from_vec(vec![c(0.3, 0.0)]), &[-0.5]).unwrap();
        assert_eq!(out[0], ZERO);
        let out = modrelu(&ComplexVector::from_vec(vec![c(3.0, 4.0)]), &[-1.0]).unwrap();
        assert!((out[0] - c(2.4, 3.2)).norm() < 1e-15);
        let out = modrelu(&ComplexVector::from_vec(vec![ZERO]), &[5.0]).unwrap();
        assert_eq!(out[0], ZERO);
        assert!(modrelu(&ComplexVector::zeros(2), &[0.0]).is_err());
    }

    #[test]
    fn modrelu_modulus() {
        let mut rng = Rng::new(1);
        let z = randn_circular(64, &mut rng);
        let b: Vec<f64> = (0..64).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let out = modrelu(&z, &b).unwrap();
        for i in 0..64 {
            assert!((out[i].norm() - (z[i].norm() + b[i]).max(0.0)).abs() < 1e-14);
        }
    }

    fn scalar_model() -> UrnnModel {
        let one = |r, c| ComplexMatrix::from_vec(r, c, vec![ONE; r * c]).unwrap();
        UrnnModel {
            recurrence: Recurrence::Full(StiefelPoint::new(one(1, 1)).unwrap()),
            v: one(1, 1),
            b: vec![0.0],
            u: one(1, 1),
            c: vec![ZERO],
            h0: vec![ZERO],
            real_output: false,
        }
    }

    fn complex_batch(values: Vec<Complex>, targets: Vec<Complex>, batch: usize, steps: usize, dim: usize) -> SequenceBatch {
        let out_dim = targets.len() / (batch * steps).max(1);
        SequenceBatch {
            batch,
            steps,
            inputs: Inputs::Dense { dim, values },
            targets: Targets::Complex {
                dim: if batch * steps == 0 { dim } else { out_dim },
                values: targets,
            },
            mask: None,
        }
    }

    #[test]
    fn one_step_hand_trace() {
        let model = scalar_model();
        let batch = complex_batch(vec![ONE], vec![ZERO], 1, 1, 1);
        let (trace, out) = forward(&model, &batch).unwrap();
        assert_eq!(trace.preactivations, vec![ONE]);
        assert_eq!(trace.state(0, 1), &[ONE]);
        assert_eq!(out.values, vec![ONE]);
    }

    #[test]
    fn zero_steps() {
        let model = scalar_model();
        let batch = complex_batch(vec![], vec![], 1, 0, 1);
        let (trace, out) = forward(&model, &batch).unwrap();
        assert!(out.values.is_empty());
        assert_eq!(trace.states, vec![ZERO]);
    }

    #[test]
    fn suppressed_hidden_state() {
        let mut rng = Rng::new(2);
        let mut model = UrnnModel::init(Recurrence::sample(RecurrenceKind::Full, 4, &mut rng), 3, 2, false, &mut rng);
        model.b = vec![-1e6; 4];
        model.c = vec![c(0.5, -0.25); 2];
        let batch = complex_batch(randn_circular(5 * 3, &mut rng).into_vec(), vec![ZERO; 5 * 2], 1, 5, 3);
        let (trace, out) = forward(&model, &batch).unwrap();
        assert!(trace.states.iter().all(|z| *z == ZERO));
        assert!(out.values.iter().all(|z| *z == c(0.5, -0.25)));
    }

    #[test]
    fn losses() {
        let out = Outputs {
            batch: 1,
            steps: 1,
            dim: 9,
            real: true,
            values: vec![ZERO; 9],
        };
        let batch = SequenceBatch {
            batch: 1,
            steps: 1,
            inputs: Inputs::OneHot { dim: 1, index: vec![0] },
            targets: Targets::Classes { classes: 9, index: vec![4] },
            mask: None,
        };
        let ce = compute_loss(&out, &batch, LossKind::CrossEntropy).unwrap();
        assert!((ce - 9f64.ln()).abs() < 1e-12);

        let out = Outputs {
            batch: 1,
            steps: 1,
            dim: 2,
            real: true,
            values: vec![c(1.0, 0.0), ZERO],
        };
        let batch = SequenceBatch {
            targets: Targets::Classes { classes: 2, index: vec![0] },
            ..batch
        };
        let ce = compute_loss(&out, &batch, LossKind::CrossEntropy).unwrap();
        let e = std::f64::consts::E;
        assert!((ce + (e / (e + 1.0)).ln()).abs() < 1e-12);
        assert!((ce - 0.3133).abs() < 1e-4);
    }

    #[test]
    fn mse_of_perfect_fit_is_zero() {
        let model = scalar_model();
        let batch = complex_batch(vec![ONE, c(0.5, 0.5)], vec![ZERO, ZERO], 1, 2, 1);
        let (_, out) = forward(&model, &batch).unwrap();
        let batch = complex_batch(vec![ONE, c(0.5, 0.5)], out.values.clone(), 1, 2, 1);
        assert_eq!(compute_loss(&out, &batch, LossKind::Mse).unwrap(), 0.0);
        let (_, grads) = loss_and_gradients(&model, &batch, LossKind::Mse).unwrap();
        assert!(ParamGroup::ALL.iter().all(|&g| grads.group(g).iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn non_finite_outputs_reported() {
        let out = Outputs {
            batch: 1,
            steps: 2,
            dim: 1,
            real: false,
            values: vec![ONE, c(f64::NAN, 0.0)],
        };
        let batch = complex_batch(vec![ONE, ONE], vec![ZERO, ZERO], 1, 2, 1);
        match compute_loss(&out, &batch, LossKind::Mse) {
            Err(Error::NonFinite { index, .. }) => assert_eq!(index, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn stale_trace_rejected() {
        let mut rng = Rng::new(3);
        let mut model = UrnnModel::init(Recurrence::sample(RecurrenceKind::Restricted, 4, &mut rng), 2, 2, false, &mut rng);
        let batch = complex_batch(randn_circular(6, &mut rng).into_vec(), randn_circular(6, &mut rng).into_vec(), 1, 3, 2);
        let (trace, out) = forward(&model, &batch).unwrap();
        model.b[0] = 0.1;
        assert!(bptt_backward(&model, &batch, &trace, &out, LossKind::Mse).is_err());
    }

    #[test]
    fn norm_preserved_through_unitary_recurrence() {
        let mut rng = Rng::new(4);
        for kind in [RecurrenceKind::Restricted, RecurrenceKind::Full] {
            let mut model = UrnnModel::init(Recurrence::sample(kind, 8, &mut rng), 3, 2, false, &mut rng);
            model.h0 = randn_circular(8, &mut rng).into_vec();
            let steps = 6;
            let batch = complex_batch(vec![ZERO; steps * 3], vec![ZERO; steps * 2], 1, steps, 3);
            let (trace, _) = forward(&model, &batch).unwrap();
            for t in 0..steps {
                let prev: f64 = trace.state(0, t).iter().map(|z| z.norm_sqr()).sum();
                let pre: f64 = trace.preactivation(0, t).iter().map(|z| z.norm_sqr()).sum();
                assert!((prev.sqrt() - pre.sqrt()).abs() < 1e-12);
            }
        }
    }
}

//! Loss, hybrid gradients, Adam and the training loop.
//!
//! Gradients flow analytically through the head, the unrolled solver steps
//! (backpropagation through time) and the tanh encoder. Sensitivities of the
//! circuit readouts are obtained with the parameter-shift rule: every block
//! angle enters exactly one RY or RZ per block pass, so shifting that single
//! occurrence by `±π/2` gives its exact derivative, and the total derivative
//! sums over the passes in which the angle is re-applied. Encoding angles are
//! shifted the same way through the whole circuit.

use std::f64::consts::FRAC_PI_2;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::Dataset;
use crate::dynamics::{self, HiddenState};
use crate::error::{check_len, Error, Result};
use crate::model::{
    encoder_forward_cached, forward, head_forward, predict_probability, run_circuit, sigmoid, ModelKind, ModelSpec,
    ParamStore,
};
use crate::qblock::{self, Readout};

const PROB_CLAMP: f64 = 1e-12;

/// Binary cross-entropy with the probability clamped to `[1e-12, 1 − 1e-12]`.
pub fn bce_loss(probability: f64, label: u8) -> f64 {
    let p = probability.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    if label == 1 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Gradients, shaped exactly like the parameters they belong to.
#[derive(Clone, Debug, PartialEq)]
pub struct GradStore(pub ParamStore);

impl GradStore {
    pub fn zeros(spec: &ModelSpec) -> Result<Self> {
        ParamStore::zeros(spec).map(GradStore)
    }

    pub fn params(&self) -> &ParamStore {
        &self.0
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.0.to_flat()
    }

    fn add_assign(&mut self, other: &GradStore) {
        for (a, b) in self.0.tensors_mut().into_iter().zip(other.0.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    fn scale(&mut self, s: f64) {
        for t in self.0.tensors_mut() {
            for x in t {
                *x *= s;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.0.is_finite()
    }
}

/// A borrowed mini-batch.
#[derive(Clone, Debug)]
pub struct Batch<'a> {
    pub inputs: Vec<&'a [f64]>,
    pub labels: Vec<u8>,
}

impl<'a> Batch<'a> {
    pub fn new(inputs: Vec<&'a [f64]>, labels: Vec<u8>) -> Result<Self> {
        check_len("batch labels", labels.len(), inputs.len())?;
        if inputs.is_empty() {
            return Err(Error::Validation("batch is empty".into()));
        }
        Ok(Batch { inputs, labels })
    }

    pub fn from_dataset(ds: &'a Dataset, indices: &[usize]) -> Result<Self> {
        Self::new(
            indices.iter().map(|&i| ds.row(i)).collect(),
            indices.iter().map(|&i| ds.labels()[i]).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// How circuit sensitivities are obtained.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum QuantumGrad {
    /// Parameter shift while `depth · |θ|` stays within `budget`, otherwise
    /// central differences on whole-circuit evaluations.
    Auto {
        budget: usize,
    },
    ParameterShift,
    FiniteDifference {
        step: f64,
    },
}

impl Default for QuantumGrad {
    fn default() -> Self {
        QuantumGrad::Auto { budget: 4096 }
    }
}

const FALLBACK_FD_STEP: f64 = 1e-6;

/// Gradient evaluator; owns the worker pool when `threads > 1`.
pub struct GradEngine {
    quantum: QuantumGrad,
    pool: Option<rayon::ThreadPool>,
}

impl GradEngine {
    pub fn new(quantum: QuantumGrad, threads: usize) -> Result<Self> {
        let pool = if threads > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build()
                    .map_err(|e| Error::Config(format!("cannot start {threads} threads: {e}")))?,
            )
        } else {
            None
        };
        Ok(GradEngine { quantum, pool })
    }

    /// Maps `f` over `0..n`, keeping index order in the output.
    fn map_indexed<T: Send>(&self, n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
        match &self.pool {
            Some(pool) => pool.install(|| (0..n).into_par_iter().map(&f).collect()),
            None => (0..n).map(f).collect(),
        }
    }

    /// Mean BCE over the batch and its gradient with respect to every parameter.
    /// Per-sample contributions are summed in sample order regardless of the
    /// thread count.
    pub fn grad_batch(&self, spec: &ModelSpec, params: &ParamStore, batch: &Batch<'_>) -> Result<(GradStore, f64)> {
        if batch.is_empty() {
            return Err(Error::Validation("batch is empty".into()));
        }
        let per_sample = self.map_indexed(batch.len(), |i| {
            sample_grad(spec, params, batch.inputs[i], batch.labels[i], self.quantum)
        });
        let mut total = GradStore::zeros(spec)?;
        let mut loss = 0.0;
        for r in per_sample {
            let (g, l) = r?;
            total.add_assign(&g);
            loss += l;
        }
        let inv = 1.0 / batch.len() as f64;
        total.scale(inv);
        loss *= inv;
        if !total.is_finite() || !loss.is_finite() {
            return Err(Error::Training(format!(
                "non-finite gradient or loss (loss {loss}); parameters finite: {}",
                params.is_finite()
            )));
        }
        Ok((total, loss))
    }

    /// Mean loss, accuracy and per-sample probabilities over a dataset.
    pub fn evaluate(&self, spec: &ModelSpec, params: &ParamStore, ds: &Dataset) -> Result<Evaluation> {
        let probs = self
            .map_indexed(ds.len(), |i| forward(spec, params, ds.row(i)).map(|t| t.probability))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        Ok(Evaluation::from_probabilities(probs, ds.labels()))
    }
}

/// Single-threaded [`GradEngine::grad_batch`] with the default sensitivity mode.
pub fn grad_batch(spec: &ModelSpec, params: &ParamStore, batch: &Batch<'_>) -> Result<(GradStore, f64)> {
    GradEngine::new(QuantumGrad::default(), 1)?.grad_batch(spec, params, batch)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
    pub probabilities: Vec<f64>,
}

impl Evaluation {
    fn from_probabilities(probabilities: Vec<f64>, labels: &[u8]) -> Self {
        let n = labels.len().max(1) as f64;
        let loss = probabilities
            .iter()
            .zip(labels)
            .map(|(&p, &y)| bce_loss(p, y))
            .sum::<f64>()
            / n;
        let correct = probabilities
            .iter()
            .zip(labels)
            .filter(|(&p, &y)| predict_probability(p) == y)
            .count();
        Evaluation {
            loss,
            accuracy: correct as f64 / n,
            probabilities,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `Σ_k ⟨weights_k, readout(|ψ_k⟩)⟩` for `k ≥ from`, continuing the circuit from
/// `state` (which is `|ψ_{from−1}⟩`) with `first_angles` used for the first block
/// and the unshifted angles afterwards.
fn linearized_tail(
    mut state: crate::qsim::StateVector,
    spec: &ModelSpec,
    params: &ParamStore,
    first_angles: &[f64],
    from: usize,
    weights: &[Vec<f64>],
) -> Result<f64> {
    let (n, layers) = (spec.n_data_qubits, spec.n_block_layers);
    let mut acc = 0.0;
    for (k, w) in weights.iter().enumerate().skip(from) {
        let angles = if k == from { first_angles } else { params.block.angles() };
        qblock::apply_block_angles(&mut state, n, layers, angles)?;
        if w.iter().any(|&x| x != 0.0) {
            acc += dot(w, qblock::readout(&state)?.values());
        }
    }
    Ok(acc)
}

fn linearized_full(
    spec: &ModelSpec,
    params: &ParamStore,
    enc_angles: &[f64],
    block_angles: &[f64],
    weights: &[Vec<f64>],
) -> Result<f64> {
    let mut p = params.block.clone();
    p.angles_mut().copy_from_slice(block_angles);
    let (_, q) = run_circuit(enc_angles, &p, spec.circuit_depth())?;
    Ok(weights.iter().zip(&q).map(|(w, r)| dot(w, r)).sum())
}

/// Loss and gradient of one sample.
#[allow(clippy::needless_range_loop)]
pub(crate) fn sample_grad(
    spec: &ModelSpec,
    params: &ParamStore,
    x: &[f64],
    y: u8,
    quantum: QuantumGrad,
) -> Result<(GradStore, f64)> {
    let enc = encoder_forward_cached(spec, params, x)?;
    let depth = spec.circuit_depth();
    let (states, q) = run_circuit(&enc.angles, &params.block, depth)?;
    let (hidden, logit) = head_forward(spec, params, &q)?;
    let p = sigmoid(logit);
    let loss = bce_loss(p, y);
    let dlogit = p - f64::from(y);

    let mut g = GradStore::zeros(spec)?;
    let n = spec.n_data_qubits;

    // head
    let features: &[f64] = match spec.kind {
        ModelKind::Qnn => &q[depth],
        _ => hidden.last().unwrap().values(),
    };
    for (gw, f) in g.0.head_w.iter_mut().zip(features) {
        *gw = dlogit * f;
    }
    g.0.head_b = dlogit;

    // ∂L/∂(readout of |ψ_k⟩), through the unrolled solver for the dynamic models
    let mut gq = vec![vec![0.0; n]; depth + 1];
    let gfeat: Vec<f64> = params.head_w.iter().map(|w| dlogit * w).collect();
    if spec.kind == ModelKind::Qnn {
        gq[depth] = gfeat;
    } else {
        let mut gphi = gfeat;
        for t in (0..depth).rev() {
            let drive = Readout::new(q[t + 1].clone())?;
            let (dphi, ddrive) = dynamics::step_partials(&hidden[t], &drive, &spec.dynamics)?;
            for i in 0..n {
                gq[t + 1][i] = gphi[i] * ddrive[i];
                gphi[i] *= dphi[i];
            }
        }
        gq[0] = gphi;
    }
    let _: &[HiddenState] = &hidden;

    if gq.iter().all(|w| w.iter().all(|&v| v == 0.0)) {
        return Ok((g, loss));
    }

    // block angles
    let theta = params.block.angles();
    let n_theta = theta.len();
    let use_shift = match quantum {
        QuantumGrad::ParameterShift => true,
        QuantumGrad::FiniteDifference { .. } => false,
        QuantumGrad::Auto { budget } => depth * n_theta <= budget,
    };
    let block_grad = g.0.block.angles_mut();
    if use_shift {
        let mut shifted = theta.to_vec();
        for b in 1..=depth {
            if gq[b..].iter().all(|w| w.iter().all(|&v| v == 0.0)) {
                continue;
            }
            for j in 0..n_theta {
                shifted[j] = theta[j] + FRAC_PI_2;
                let plus = linearized_tail(states[b - 1].clone(), spec, params, &shifted, b, &gq)?;
                shifted[j] = theta[j] - FRAC_PI_2;
                let minus = linearized_tail(states[b - 1].clone(), spec, params, &shifted, b, &gq)?;
                shifted[j] = theta[j];
                block_grad[j] += 0.5 * (plus - minus);
            }
        }
    } else {
        let h = match quantum {
            QuantumGrad::FiniteDifference { step } => step,
            _ => FALLBACK_FD_STEP,
        };
        let mut shifted = theta.to_vec();
        for j in 0..n_theta {
            shifted[j] = theta[j] + h;
            let plus = linearized_full(spec, params, &enc.angles, &shifted, &gq)?;
            shifted[j] = theta[j] - h;
            let minus = linearized_full(spec, params, &enc.angles, &shifted, &gq)?;
            shifted[j] = theta[j];
            block_grad[j] = (plus - minus) / (2.0 * h);
        }
    }

    // encoding angles: each enters a single RY, so shift through the whole circuit
    let mut shifted = enc.angles.clone();
    let mut g_angles = vec![0.0; n];
    for i in 0..n {
        shifted[i] = enc.angles[i] + FRAC_PI_2;
        let plus = linearized_full(spec, params, &shifted, theta, &gq)?;
        shifted[i] = enc.angles[i] - FRAC_PI_2;
        let minus = linearized_full(spec, params, &shifted, theta, &gq)?;
        shifted[i] = enc.angles[i];
        g_angles[i] = 0.5 * (plus - minus);
    }

    // encoder: a = (π/2)(tanh(z2) + 1), z2 = W2·h + b2, h = tanh(W1·x + b1)
    let (d, hdim) = (spec.input_dim, spec.encoder_hidden);
    let gz2: Vec<f64> = g_angles
        .iter()
        .zip(&enc.out_act)
        .map(|(ga, t)| ga * FRAC_PI_2 * (1.0 - t * t))
        .collect();
    let mut gh = vec![0.0; hdim];
    for i in 0..n {
        g.0.enc_b2[i] = gz2[i];
        if gz2[i] == 0.0 {
            continue;
        }
        let w_row = &params.enc_w2[i * hdim..(i + 1) * hdim];
        let g_row = &mut g.0.enc_w2[i * hdim..(i + 1) * hdim];
        for j in 0..hdim {
            g_row[j] = gz2[i] * enc.hidden_act[j];
            gh[j] += gz2[i] * w_row[j];
        }
    }
    for j in 0..hdim {
        let a = enc.hidden_act[j];
        let gz1 = gh[j] * (1.0 - a * a);
        g.0.enc_b1[j] = gz1;
        if gz1 == 0.0 {
            continue;
        }
        for (gw, xi) in g.0.enc_w1[j * d..(j + 1) * d].iter_mut().zip(x) {
            *gw = gz1 * xi;
        }
    }
    Ok((g, loss))
}

/// Mean BCE of a batch under `params`.
pub fn batch_loss(spec: &ModelSpec, params: &ParamStore, batch: &Batch<'_>) -> Result<f64> {
    let mut total = 0.0;
    for (x, &y) in batch.inputs.iter().zip(&batch.labels) {
        total += bce_loss(forward(spec, params, x)?.probability, y);
    }
    Ok(total / batch.len() as f64)
}

/// Refuses finite-difference sweeps over more scalars than this.
pub const FD_PARAM_LIMIT: usize = 10_000;

/// Central differences `(f(p + ε·e_i) − f(p − ε·e_i)) / 2ε` for every coordinate.
pub fn central_difference(f: impl Fn(&[f64]) -> Result<f64>, point: &[f64], eps: f64) -> Result<Vec<f64>> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Validation(format!(
            "finite-difference step must be positive, got {eps}"
        )));
    }
    if point.len() > FD_PARAM_LIMIT {
        return Err(Error::Validation(format!(
            "{} parameters exceed the finite-difference budget of {FD_PARAM_LIMIT}",
            point.len()
        )));
    }
    let mut p = point.to_vec();
    (0..point.len())
        .map(|i| {
            p[i] = point[i] + eps;
            let up = f(&p)?;
            p[i] = point[i] - eps;
            let down = f(&p)?;
            p[i] = point[i];
            Ok((up - down) / (2.0 * eps))
        })
        .collect()
}

/// Finite-difference reference gradient of the mean batch loss.
pub fn fd_grad_oracle(spec: &ModelSpec, params: &ParamStore, batch: &Batch<'_>, eps: f64) -> Result<GradStore> {
    let flat = params.to_flat();
    let mut scratch = params.clone();
    let grads = central_difference(
        |p| {
            let mut s = scratch.clone();
            s.assign_flat(p)?;
            batch_loss(spec, &s, batch)
        },
        &flat,
        eps,
    )?;
    scratch.assign_flat(&grads)?;
    Ok(GradStore(scratch))
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(n_params: usize, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        AdamState {
            lr,
            beta1,
            beta2,
            eps,
            step: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(params: &mut ParamStore, grads: &GradStore, state: &mut AdamState) -> Result<()> {
    check_len("gradient", grads.0.len(), params.len())?;
    check_len("optimizer moments", state.m.len(), params.len())?;
    if !grads.is_finite() {
        return Err(Error::Training("non-finite gradient passed to Adam".into()));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    let mut k = 0;
    for (p_t, g_t) in params.tensors_mut().into_iter().zip(grads.0.tensors()) {
        for (p, &g) in p_t.iter_mut().zip(g_t) {
            let m = state.beta1 * state.m[k] + (1.0 - state.beta1) * g;
            let v = state.beta2 * state.v[k] + (1.0 - state.beta2) * g * g;
            state.m[k] = m;
            state.v[k] = v;
            *p -= state.lr * (m / c1) / ((v / c2).sqrt() + state.eps);
            k += 1;
        }
    }
    if !params.is_finite() {
        return Err(Error::Training(format!(
            "parameters became non-finite at optimizer step {}",
            state.step
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub eval_every: usize,
    pub seed: u64,
    pub threads: usize,
    pub quantum_grad: QuantumGrad,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 25,
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            eval_every: 15,
            seed: 42,
            threads: 1,
            quantum_grad: QuantumGrad::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config("Adam eps must be positive".into()));
        }
        if self.threads == 0 {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub step: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CurveLog {
    pub points: Vec<CurvePoint>,
}

impl CurveLog {
    pub const CSV_HEADER: &'static str = "step,train_loss,val_loss,val_accuracy";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for p in &self.points {
            out.push_str(&format!(
                "{},{},{},{}\n",
                p.step, p.train_loss, p.val_loss, p.val_accuracy
            ));
        }
        out
    }

    /// First logged step whose validation accuracy reaches `threshold`.
    pub fn first_step_reaching(&self, threshold: f64) -> Option<usize> {
        self.points.iter().find(|p| p.val_accuracy >= threshold).map(|p| p.step)
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters at the best validation accuracy (ties: lower validation loss,
    /// then earlier). Equal to `final_params` when nothing was evaluated.
    pub best: ParamStore,
    pub best_step: Option<usize>,
    pub final_params: ParamStore,
    pub log: CurveLog,
    pub steps: usize,
}

fn check_dataset(spec: &ModelSpec, ds: &Dataset, role: &str) -> Result<()> {
    if ds.dim() != spec.input_dim {
        return Err(Error::Shape(format!(
            "{role} set has {} features, model expects input_dim {}",
            ds.dim(),
            spec.input_dim
        )));
    }
    if !ds.is_binary() {
        return Err(Error::Validation(format!("{role} set labels are not binary")));
    }
    Ok(())
}

/// Seeded mini-batch Adam training with periodic validation.
pub fn train(spec: &ModelSpec, cfg: &TrainConfig, train_set: &Dataset, val_set: &Dataset) -> Result<TrainOutcome> {
    spec.validate()?;
    cfg.validate()?;
    check_dataset(spec, train_set, "training")?;
    check_dataset(spec, val_set, "validation")?;

    let engine = GradEngine::new(cfg.quantum_grad, cfg.threads)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = ParamStore::init(spec, &mut rng)?;
    let mut adam = AdamState::new(params.len(), cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);
    let mut log = CurveLog::default();
    let mut best: Option<(f64, f64, usize, ParamStore)> = None;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut step = 0;

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch = Batch::from_dataset(train_set, chunk)?;
            let (grads, loss) = engine.grad_batch(spec, &params, &batch)?;
            if !loss.is_finite() {
                return Err(Error::Training(format!("loss became {loss} at step {step}")));
            }
            adam_step(&mut params, &grads, &mut adam)?;
            step += 1;
            if step % cfg.eval_every == 0 {
                let tr = engine.evaluate(spec, &params, train_set)?;
                let va = engine.evaluate(spec, &params, val_set)?;
                log.points.push(CurvePoint {
                    step,
                    train_loss: tr.loss,
                    val_loss: va.loss,
                    val_accuracy: va.accuracy,
                });
                let better = match &best {
                    None => true,
                    Some((acc, vloss, _, _)) => va.accuracy > *acc || (va.accuracy == *acc && va.loss < *vloss),
                };
                if better {
                    best = Some((va.accuracy, va.loss, step, params.clone()));
                }
            }
        }
    }

    let (best, best_step) = match best {
        Some((_, _, s, p)) => (p, Some(s)),
        None => (params.clone(), None),
    };
    Ok(TrainOutcome {
        best,
        best_step,
        final_params: params,
        log,
        steps: step,
    })
}

//! End-to-end hybrid classifiers.
//!
//! `x → tanh MLP encoder → RY angles in [0, π] → encode → K residual blocks`.
//! The dynamic models (LQNet, CTRQNet) feed the readout after every block into
//! the hidden-state ODE and classify from `φ(T)`; the QNN baseline classifies
//! from the readout of the final block. A single logit with a sigmoid gives
//! `P(class 1)`.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::dynamics::{self, DynamicsConfig, HiddenState, Solver};
use crate::error::{check_len, Error, Result};
use crate::qblock::{self, BlockParams, EncodingAngles, Readout, MAX_DATA_QUBITS};
use crate::qsim::StateVector;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Qnn,
    Lqnet,
    Ctrqnet,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Ctrqnet, ModelKind::Lqnet, ModelKind::Qnn];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Qnn => "qnn",
            ModelKind::Lqnet => "lqnet",
            ModelKind::Ctrqnet => "ctrqnet",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Qnn => "QNN",
            ModelKind::Lqnet => "LQNet",
            ModelKind::Ctrqnet => "CTRQNet",
        }
    }

    /// Solver a dynamic model uses unless configured otherwise.
    pub fn default_solver(self) -> Solver {
        match self {
            ModelKind::Ctrqnet => Solver::EulerCtrq,
            ModelKind::Qnn | ModelKind::Lqnet => Solver::FusedLq,
        }
    }

    pub fn is_dynamic(self) -> bool {
        self != ModelKind::Qnn
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "qnn" => Ok(ModelKind::Qnn),
            "lqnet" | "qlnet" => Ok(ModelKind::Lqnet),
            "ctrqnet" => Ok(ModelKind::Ctrqnet),
            _ => Err(Error::Config(format!(
                "unknown model `{s}` (expected qnn, lqnet or ctrqnet)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub input_dim: usize,
    pub encoder_hidden: usize,
    pub n_data_qubits: usize,
    pub n_block_layers: usize,
    /// Number of stacked blocks in the QNN baseline.
    pub qnn_depth: usize,
    pub dynamics: DynamicsConfig,
}

impl ModelSpec {
    /// Defaults: 64 hidden units, 3 data qubits, 2 ansatz layers, QNN depth 4,
    /// τ = 1, Δt = 0.1, 4 steps.
    pub fn new(kind: ModelKind, input_dim: usize) -> Self {
        ModelSpec {
            kind,
            input_dim,
            encoder_hidden: 64,
            n_data_qubits: 3,
            n_block_layers: 2,
            qnn_depth: 4,
            dynamics: DynamicsConfig::with_solver(kind.default_solver()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::Validation("input_dim must be at least 1".into()));
        }
        if self.encoder_hidden == 0 {
            return Err(Error::Validation("encoder_hidden must be at least 1".into()));
        }
        if !(1..=MAX_DATA_QUBITS).contains(&self.n_data_qubits) {
            return Err(Error::Validation(format!(
                "n_data_qubits {} outside 1..={MAX_DATA_QUBITS}",
                self.n_data_qubits
            )));
        }
        self.dynamics.validate()
    }

    /// Number of residual blocks one forward pass runs.
    pub fn circuit_depth(&self) -> usize {
        match self.kind {
            ModelKind::Qnn => self.qnn_depth,
            _ => self.dynamics.n_steps,
        }
    }
}

/// Exact number of trainable scalars.
pub fn param_count(spec: &ModelSpec) -> Result<usize> {
    spec.validate()?;
    let (d, h, q) = (spec.input_dim, spec.encoder_hidden, spec.n_data_qubits);
    Ok(h * d + h + q * h + q + BlockParams::count(q, spec.n_block_layers) + q + 1)
}

/// All trainable tensors. Matrices are row-major `[out × in]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore {
    pub enc_w1: Vec<f64>,
    pub enc_b1: Vec<f64>,
    pub enc_w2: Vec<f64>,
    pub enc_b2: Vec<f64>,
    pub block: BlockParams,
    pub head_w: Vec<f64>,
    pub head_b: f64,
}

impl ParamStore {
    pub fn zeros(spec: &ModelSpec) -> Result<Self> {
        spec.validate()?;
        let (d, h, q) = (spec.input_dim, spec.encoder_hidden, spec.n_data_qubits);
        Ok(ParamStore {
            enc_w1: vec![0.0; h * d],
            enc_b1: vec![0.0; h],
            enc_w2: vec![0.0; q * h],
            enc_b2: vec![0.0; q],
            block: BlockParams::zeros(q, spec.n_block_layers)?,
            head_w: vec![0.0; q],
            head_b: 0.0,
        })
    }

    /// Encoder weights and biases uniform in `±1/√fan_in`, block angles uniform
    /// in `±0.1`, head zero (so the first loss is exactly ln 2).
    pub fn init<R: Rng + ?Sized>(spec: &ModelSpec, rng: &mut R) -> Result<Self> {
        let mut p = Self::zeros(spec)?;
        let b1 = 1.0 / (spec.input_dim as f64).sqrt();
        let b2 = 1.0 / (spec.encoder_hidden as f64).sqrt();
        for w in p.enc_w1.iter_mut().chain(p.enc_b1.iter_mut()) {
            *w = rng.gen_range(-b1..=b1);
        }
        for w in p.enc_w2.iter_mut().chain(p.enc_b2.iter_mut()) {
            *w = rng.gen_range(-b2..=b2);
        }
        for a in p.block.angles_mut() {
            *a = rng.gen_range(-0.1..=0.1);
        }
        Ok(p)
    }

    /// Tensors in checkpoint order.
    pub fn tensors(&self) -> [&[f64]; 7] {
        [
            &self.enc_w1,
            &self.enc_b1,
            &self.enc_w2,
            &self.enc_b2,
            self.block.angles(),
            &self.head_w,
            std::slice::from_ref(&self.head_b),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 7] {
        [
            &mut self.enc_w1,
            &mut self.enc_b1,
            &mut self.enc_w2,
            &mut self.enc_b2,
            self.block.angles_mut(),
            &mut self.head_w,
            std::slice::from_mut(&mut self.head_b),
        ]
    }

    pub fn len(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        check_len("flat parameters", flat.len(), self.len())?;
        let mut offset = 0;
        for t in self.tensors_mut() {
            t.copy_from_slice(&flat[offset..offset + t.len()]);
            offset += t.len();
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Checks every tensor against the shapes `spec` implies.
    pub fn check_shapes(&self, spec: &ModelSpec) -> Result<()> {
        let expected = Self::zeros(spec)?;
        for (i, (a, b)) in self.tensors().iter().zip(expected.tensors()).enumerate() {
            check_len(TENSOR_NAMES[i], a.len(), b.len())?;
        }
        if self.block.n_layers() != spec.n_block_layers || self.block.n_data_qubits() != spec.n_data_qubits {
            return Err(Error::Shape("block layout does not match the model spec".into()));
        }
        Ok(())
    }
}

pub const TENSOR_NAMES: [&str; 7] = ["enc_w1", "enc_b1", "enc_w2", "enc_b2", "block", "head_w", "head_b"];

/// Intermediates of one forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    pub angles: EncodingAngles,
    /// `φ_0 … φ_T` for the dynamic models, empty for the QNN.
    pub hidden: Vec<HiddenState>,
    /// Readout of every circuit state `|ψ_0⟩ … |ψ_K⟩`; the drive of step `t`
    /// is `readouts[t + 1]`.
    pub readouts: Vec<Readout>,
    pub logit: f64,
    pub probability: f64,
}

pub(crate) struct EncoderCache {
    pub hidden_act: Vec<f64>,
    pub out_act: Vec<f64>,
    pub angles: Vec<f64>,
}

pub(crate) fn encoder_forward_cached(spec: &ModelSpec, params: &ParamStore, x: &[f64]) -> Result<EncoderCache> {
    check_len("input", x.len(), spec.input_dim)?;
    let (d, h, q) = (spec.input_dim, spec.encoder_hidden, spec.n_data_qubits);
    let hidden_act: Vec<f64> = (0..h)
        .map(|j| {
            let row = &params.enc_w1[j * d..(j + 1) * d];
            let z: f64 = row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + params.enc_b1[j];
            z.tanh()
        })
        .collect();
    let out_act: Vec<f64> = (0..q)
        .map(|i| {
            let row = &params.enc_w2[i * h..(i + 1) * h];
            let z: f64 = row.iter().zip(&hidden_act).map(|(w, a)| w * a).sum::<f64>() + params.enc_b2[i];
            z.tanh()
        })
        .collect();
    let angles = out_act.iter().map(|t| FRAC_PI_2 * (t + 1.0)).collect();
    Ok(EncoderCache {
        hidden_act,
        out_act,
        angles,
    })
}

/// `a = (π/2)·(tanh(W2·tanh(W1·x + b1) + b2) + 1)`.
pub fn encoder_forward(spec: &ModelSpec, params: &ParamStore, x: &[f64]) -> Result<EncodingAngles> {
    let cache = encoder_forward_cached(spec, params, x)?;
    let angles = cache
        .angles
        .into_iter()
        .map(|a| a.clamp(0.0, std::f64::consts::PI))
        .collect();
    EncodingAngles::new(angles)
}

/// Circuit states `|ψ_0⟩ … |ψ_K⟩` and their readouts for raw encoding angles.
pub(crate) fn run_circuit(
    angles: &[f64],
    block: &BlockParams,
    depth: usize,
) -> Result<(Vec<StateVector>, Vec<Vec<f64>>)> {
    let mut states = Vec::with_capacity(depth + 1);
    let mut readouts = Vec::with_capacity(depth + 1);
    let mut state = qblock::encode_raw(angles)?;
    readouts.push(qblock::readout(&state)?.into_values());
    states.push(state.clone());
    for _ in 0..depth {
        qblock::apply_block(&mut state, block)?;
        readouts.push(qblock::readout(&state)?.into_values());
        states.push(state.clone());
    }
    Ok((states, readouts))
}

/// Classical tail: hidden trajectory (dynamic kinds) and the logit.
pub(crate) fn head_forward(
    spec: &ModelSpec,
    params: &ParamStore,
    readouts: &[Vec<f64>],
) -> Result<(Vec<HiddenState>, f64)> {
    let dot = |v: &[f64]| -> f64 { params.head_w.iter().zip(v).map(|(w, x)| w * x).sum::<f64>() + params.head_b };
    if spec.kind == ModelKind::Qnn {
        let last = readouts.last().expect("circuit pass holds |ψ_0⟩");
        return Ok((Vec::new(), dot(last)));
    }
    let mut hidden = Vec::with_capacity(readouts.len());
    hidden.push(HiddenState::new(readouts[0].clone())?);
    for r in &readouts[1..] {
        let drive = Readout::new(r.clone())?;
        let next = dynamics::step(hidden.last().unwrap(), &drive, &spec.dynamics)?;
        hidden.push(next);
    }
    let logit = dot(hidden.last().unwrap().values());
    Ok((hidden, logit))
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn forward(spec: &ModelSpec, params: &ParamStore, x: &[f64]) -> Result<ForwardTrace> {
    let angles = encoder_forward(spec, params, x)?;
    let (_, readouts) = run_circuit(angles.values(), &params.block, spec.circuit_depth())?;
    let (hidden, logit) = head_forward(spec, params, &readouts)?;
    Ok(ForwardTrace {
        angles,
        hidden,
        readouts: readouts.into_iter().map(Readout::new).collect::<Result<_>>()?,
        logit,
        probability: sigmoid(logit),
    })
}

/// Class 1 when `P(class 1) ≥ 0.5`; ties go to class 1.
pub fn predict(trace: &ForwardTrace) -> u8 {
    predict_probability(trace.probability)
}

pub fn predict_probability(p: f64) -> u8 {
    u8::from(p >= 0.5)
}

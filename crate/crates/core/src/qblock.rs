//! The quantum residual block.
//!
//! The register holds `n` data qubits (indices `0..n`) and one ancilla at index
//! `n`. Both the encoding stage and the parameterized stage share the residual
//! skeleton
//!
//! ```text
//! H(anc) → CX(anc → d_0) … CX(anc → d_{n-1}) → [stage unitary on data] → H(anc)
//! ```
//!
//! where the stage unitary is the angle encoding `⊗ RY(a_i)` or the trainable
//! ansatz `W(θ)`. The readout traces the ancilla out and returns `⟨Z_i⟩` for
//! every data qubit.

use std::f64::consts::PI;

use crate::error::{check_len, Error, Result};
use crate::qsim::{GateMatrix, StandardGate, StateVector};

/// Largest number of data qubits (one more qubit is needed for the ancilla).
pub const MAX_DATA_QUBITS: usize = StateVector::MAX_QUBITS - 1;

/// Trainable angles of `W(θ)`: one RY and one RZ angle per data qubit per layer.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockParams {
    n_data_qubits: usize,
    n_layers: usize,
    angles: Vec<f64>,
}

/// Which rotation an angle drives.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rotation {
    Ry = 0,
    Rz = 1,
}

impl BlockParams {
    pub fn new(n_data_qubits: usize, n_layers: usize, angles: Vec<f64>) -> Result<Self> {
        check_data_qubits(n_data_qubits)?;
        check_len("block angles", angles.len(), Self::count(n_data_qubits, n_layers))?;
        if let Some(bad) = angles.iter().position(|a| !a.is_finite()) {
            return Err(Error::Validation(format!("block angle {bad} is not finite")));
        }
        Ok(BlockParams {
            n_data_qubits,
            n_layers,
            angles,
        })
    }

    pub fn zeros(n_data_qubits: usize, n_layers: usize) -> Result<Self> {
        Self::new(n_data_qubits, n_layers, vec![0.0; Self::count(n_data_qubits, n_layers)])
    }

    pub fn count(n_data_qubits: usize, n_layers: usize) -> usize {
        n_layers * n_data_qubits * 2
    }

    pub fn n_data_qubits(&self) -> usize {
        self.n_data_qubits
    }

    pub fn n_layers(&self) -> usize {
        self.n_layers
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub(crate) fn angles_mut(&mut self) -> &mut [f64] {
        &mut self.angles
    }

    pub fn index(&self, layer: usize, qubit: usize, rotation: Rotation) -> usize {
        (layer * self.n_data_qubits + qubit) * 2 + rotation as usize
    }
}

fn check_data_qubits(n: usize) -> Result<()> {
    if !(1..=MAX_DATA_QUBITS).contains(&n) {
        return Err(Error::Config(format!(
            "data qubit count {n} outside 1..={MAX_DATA_QUBITS}"
        )));
    }
    Ok(())
}

/// Per-qubit RY encoding angles, each in `[0, π]`.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodingAngles(Vec<f64>);

impl EncodingAngles {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_data_qubits(values.len())?;
        if let Some(bad) = values.iter().position(|a| !(0.0..=PI).contains(a)) {
            return Err(Error::Validation(format!(
                "encoding angle {bad} = {} outside [0, π]",
                values[bad]
            )));
        }
        Ok(EncodingAngles(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `⟨Z_i⟩` of every data qubit, each in `[−1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Readout(Vec<f64>);

impl Readout {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Wraps drive values, e.g. for feeding the dynamics directly in tests.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(bad) = values.iter().position(|v| !(-1.0..=1.0).contains(v)) {
            return Err(Error::Validation(format!(
                "readout component {bad} = {} outside [−1, 1]",
                values[bad]
            )));
        }
        Ok(Readout(values))
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }
}

fn hadamard() -> GateMatrix {
    GateMatrix::standard(StandardGate::H)
}

fn residual_open(state: &mut StateVector, n_data: usize) -> Result<()> {
    let anc = n_data;
    state.apply_1q(&hadamard(), anc)?;
    for q in 0..n_data {
        state.cnot(anc, q)?;
    }
    Ok(())
}

/// Encoding stage from raw angles. Angles need not lie in `[0, π]` here, which
/// lets the parameter-shift rule evaluate at `a ± π/2`.
pub(crate) fn encode_raw(angles: &[f64]) -> Result<StateVector> {
    let n = angles.len();
    check_data_qubits(n)?;
    let mut state = StateVector::zero(n + 1)?;
    for (q, &a) in angles.iter().enumerate() {
        state.apply_1q(&GateMatrix::ry(a), q)?;
    }
    residual_open(&mut state, n)?;
    state.apply_1q(&hadamard(), n)?;
    Ok(state)
}

/// Prepares the input state: `RY(a_i)` on data qubit `i` from `|0…0⟩`, ancilla
/// in `|0⟩`, followed by the residual skeleton.
pub fn encode(angles: &EncodingAngles) -> Result<StateVector> {
    encode_raw(angles.values())
}

fn check_register(state: &StateVector, n_data: usize) -> Result<()> {
    if state.n_qubits() != n_data + 1 {
        return Err(Error::Shape(format!(
            "register has {} qubits, block expects {} data qubits plus an ancilla",
            state.n_qubits(),
            n_data
        )));
    }
    Ok(())
}

/// Applies `W(θ)` to the data qubits: per layer RY then RZ on every qubit,
/// followed by a ring of CNOTs `i → i+1 mod n`.
fn apply_ansatz(state: &mut StateVector, n: usize, n_layers: usize, angles: &[f64]) -> Result<()> {
    for layer in 0..n_layers {
        for q in 0..n {
            let base = (layer * n + q) * 2;
            state.apply_1q(&GateMatrix::ry(angles[base]), q)?;
            state.apply_1q(&GateMatrix::rz(angles[base + 1]), q)?;
        }
        if n > 1 {
            for q in 0..n {
                state.cnot(q, (q + 1) % n)?;
            }
        }
    }
    Ok(())
}

pub(crate) fn apply_block_angles(state: &mut StateVector, n: usize, n_layers: usize, angles: &[f64]) -> Result<()> {
    check_register(state, n)?;
    residual_open(state, n)?;
    apply_ansatz(state, n, n_layers, angles)?;
    state.apply_1q(&hadamard(), n)
}

/// One pass of the parameterized residual block `F̃`, in place.
pub fn apply_block(state: &mut StateVector, params: &BlockParams) -> Result<()> {
    apply_block_angles(state, params.n_data_qubits, params.n_layers, &params.angles)
}

/// `⟨Z_i ⊗ I_anc⟩` for every data qubit; the ancilla is the last qubit.
pub fn readout(state: &StateVector) -> Result<Readout> {
    let n = state.n_qubits();
    if n < 2 {
        return Err(Error::Shape(
            "readout needs at least one data qubit plus the ancilla".into(),
        ));
    }
    (0..n - 1)
        .map(|q| state.expectation_z(q))
        .collect::<Result<Vec<_>>>()
        .map(Readout)
}

/// Evolves the state through one block and reads the result out.
pub fn block_drive(state: &StateVector, params: &BlockParams) -> Result<(StateVector, Readout)> {
    let mut next = state.clone();
    apply_block(&mut next, params)?;
    let r = readout(&next)?;
    Ok((next, r))
}

//! Dense statevector simulator for small registers.
//!
//! Qubit `q` is bit `q` of the basis index (little-endian), so on a register of
//! `n` qubits the amplitude of `|b_{n-1} … b_1 b_0⟩` lives at index
//! `Σ b_q 2^q`. All arithmetic is double-precision complex and every
//! measurement is an exact expectation value.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Tolerance used when validating user-supplied gates.
pub const UNITARY_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    pub const MAX_QUBITS: usize = 6;

    /// `|0…0⟩` on `n_qubits` qubits.
    pub fn zero(n_qubits: usize) -> Result<Self> {
        check_register(n_qubits)?;
        let mut amps = vec![ZERO; 1 << n_qubits];
        amps[0] = ONE;
        Ok(StateVector { n_qubits, amps })
    }

    /// Wraps raw amplitudes. The length must be a power of two within the
    /// supported register size and the vector must be normalized to 1e-10.
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        let len = amps.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(Error::Shape(format!("amplitude count {len} is not a power of two ≥ 2")));
        }
        let n_qubits = len.trailing_zeros() as usize;
        check_register(n_qubits)?;
        let state = StateVector { n_qubits, amps };
        let norm = state.norm();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::Validation(format!("state is not normalized (norm {norm})")));
        }
        Ok(state)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    fn check_qubit(&self, q: usize) -> Result<()> {
        if q >= self.n_qubits {
            return Err(Error::Index(format!(
                "qubit {q} out of range for a {}-qubit register",
                self.n_qubits
            )));
        }
        Ok(())
    }

    /// Applies a 2×2 gate to `target`, identity elsewhere.
    pub fn apply_1q(&mut self, gate: &GateMatrix, target: usize) -> Result<()> {
        self.check_qubit(target)?;
        let m = gate.as_2x2()?;
        let stride = 1usize << target;
        for base in (0..self.amps.len()).step_by(stride << 1) {
            for i in base..base + stride {
                let a0 = self.amps[i];
                let a1 = self.amps[i + stride];
                self.amps[i] = m[0] * a0 + m[1] * a1;
                self.amps[i + stride] = m[2] * a0 + m[3] * a1;
            }
        }
        Ok(())
    }

    /// Applies a 2×2 gate to `target` on the subspace where `control` is 1.
    pub fn apply_controlled(&mut self, gate: &GateMatrix, control: usize, target: usize) -> Result<()> {
        self.check_qubit(control)?;
        self.check_qubit(target)?;
        if control == target {
            return Err(Error::Validation(format!(
                "control and target are both qubit {control}"
            )));
        }
        let m = gate.as_2x2()?;
        let cbit = 1usize << control;
        let tbit = 1usize << target;
        for i in 0..self.amps.len() {
            if i & cbit == 0 || i & tbit != 0 {
                continue;
            }
            let j = i | tbit;
            let a0 = self.amps[i];
            let a1 = self.amps[j];
            self.amps[i] = m[0] * a0 + m[1] * a1;
            self.amps[j] = m[2] * a0 + m[3] * a1;
        }
        Ok(())
    }

    /// Applies a 4×4 gate whose row index is `2·bit(first) + bit(second)`, the
    /// textbook ordering in which `standard_gate(Cnot)` controls on `first`.
    pub fn apply_2q(&mut self, gate: &GateMatrix, first: usize, second: usize) -> Result<()> {
        self.check_qubit(first)?;
        self.check_qubit(second)?;
        if first == second {
            return Err(Error::Validation(format!(
                "two-qubit gate applied twice to qubit {first}"
            )));
        }
        if gate.dim != 4 {
            return Err(Error::Validation(format!("expected a 4×4 gate, got {0}×{0}", gate.dim)));
        }
        let fbit = 1usize << first;
        let sbit = 1usize << second;
        for i in 0..self.amps.len() {
            if i & (fbit | sbit) != 0 {
                continue;
            }
            let idx = [i, i | sbit, i | fbit, i | fbit | sbit];
            let v = idx.map(|k| self.amps[k]);
            for (r, &k) in idx.iter().enumerate() {
                let row = &gate.entries[r * 4..r * 4 + 4];
                self.amps[k] = row[0] * v[0] + row[1] * v[1] + row[2] * v[2] + row[3] * v[3];
            }
        }
        Ok(())
    }

    /// Controlled-X, the workhorse of the residual block.
    pub fn cnot(&mut self, control: usize, target: usize) -> Result<()> {
        self.check_qubit(control)?;
        self.check_qubit(target)?;
        if control == target {
            return Err(Error::Validation(format!(
                "control and target are both qubit {control}"
            )));
        }
        let cbit = 1usize << control;
        let tbit = 1usize << target;
        for i in 0..self.amps.len() {
            if i & cbit != 0 && i & tbit == 0 {
                self.amps.swap(i, i | tbit);
            }
        }
        Ok(())
    }

    /// ⟨Z_target⟩, every other qubit traced out.
    pub fn expectation_z(&self, target: usize) -> Result<f64> {
        self.check_qubit(target)?;
        let tbit = 1usize << target;
        let value = self
            .amps
            .iter()
            .enumerate()
            .map(|(b, a)| {
                let p = a.norm_sqr();
                if b & tbit == 0 {
                    p
                } else {
                    -p
                }
            })
            .sum::<f64>();
        Ok(value.clamp(-1.0, 1.0))
    }

    /// Partial trace onto the qubits in `keep`. Qubit `keep[j]` becomes bit `j`
    /// of the reduced basis index, so order matters.
    pub fn reduced_density(&self, keep: &[usize]) -> Result<DensityMatrix> {
        if keep.is_empty() {
            return Err(Error::Validation("keep set is empty".into()));
        }
        for (j, &q) in keep.iter().enumerate() {
            self.check_qubit(q)?;
            if keep[..j].contains(&q) {
                return Err(Error::Validation(format!("qubit {q} listed twice")));
            }
        }
        let env: Vec<usize> = (0..self.n_qubits).filter(|q| !keep.contains(q)).collect();
        let dim = 1usize << keep.len();
        let scatter = |bits: usize, qubits: &[usize]| -> usize {
            qubits
                .iter()
                .enumerate()
                .filter(|(j, _)| bits >> j & 1 == 1)
                .map(|(_, &q)| 1usize << q)
                .sum()
        };
        let mut entries = vec![ZERO; dim * dim];
        for e in 0..1usize << env.len() {
            let env_idx = scatter(e, &env);
            for r in 0..dim {
                let ar = self.amps[env_idx | scatter(r, keep)];
                if ar == ZERO {
                    continue;
                }
                for c in 0..dim {
                    entries[r * dim + c] += ar * self.amps[env_idx | scatter(c, keep)].conj();
                }
            }
        }
        Ok(DensityMatrix { dim, entries })
    }
}

fn check_register(n_qubits: usize) -> Result<()> {
    if !(1..=StateVector::MAX_QUBITS).contains(&n_qubits) {
        return Err(Error::Config(format!(
            "register size {n_qubits} outside 1..={}",
            StateVector::MAX_QUBITS
        )));
    }
    Ok(())
}

/// A unitary on one (2×2) or two (4×4) qubits, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GateMatrix {
    dim: usize,
    entries: Vec<Complex64>,
}

impl GateMatrix {
    /// Validating constructor for arbitrary gates.
    pub fn new(dim: usize, entries: Vec<Complex64>) -> Result<Self> {
        if dim != 2 && dim != 4 {
            return Err(Error::Validation(format!("gate dimension {dim} not in {{2, 4}}")));
        }
        if entries.len() != dim * dim {
            return Err(Error::Shape(format!(
                "{dim}×{dim} gate needs {} entries, got {}",
                dim * dim,
                entries.len()
            )));
        }
        let gate = GateMatrix { dim, entries };
        let err = gate.unitarity_error();
        if !(err <= UNITARY_TOL) {
            return Err(Error::Validation(format!(
                "gate is not unitary (max |G†G − I| = {err:e})"
            )));
        }
        Ok(gate)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    /// max |G†G − I| over all entries.
    pub fn unitarity_error(&self) -> f64 {
        let d = self.dim;
        let mut worst = 0.0f64;
        for r in 0..d {
            for c in 0..d {
                let mut acc = ZERO;
                for k in 0..d {
                    acc += self.entries[k * d + r].conj() * self.entries[k * d + c];
                }
                let target = if r == c { ONE } else { ZERO };
                worst = worst.max((acc - target).norm());
            }
        }
        worst
    }

    fn as_2x2(&self) -> Result<[Complex64; 4]> {
        if self.dim != 2 {
            return Err(Error::Validation(format!("expected a 2×2 gate, got {0}×{0}", self.dim)));
        }
        Ok([self.entries[0], self.entries[1], self.entries[2], self.entries[3]])
    }

    fn real2(m: [f64; 4]) -> Self {
        GateMatrix {
            dim: 2,
            entries: m.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
        }
    }

    /// RY(θ) = [[cos θ/2, −sin θ/2], [sin θ/2, cos θ/2]].
    pub fn ry(theta: f64) -> Self {
        let (s, c) = (theta / 2.0).sin_cos();
        Self::real2([c, -s, s, c])
    }

    /// RZ(θ) = diag(e^{−iθ/2}, e^{iθ/2}).
    pub fn rz(theta: f64) -> Self {
        let (s, c) = (theta / 2.0).sin_cos();
        GateMatrix {
            dim: 2,
            entries: vec![Complex64::new(c, -s), ZERO, ZERO, Complex64::new(c, s)],
        }
    }

    pub fn standard(gate: StandardGate) -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        match gate {
            StandardGate::H => Self::real2([h, h, h, -h]),
            StandardGate::X => Self::real2([0.0, 1.0, 1.0, 0.0]),
            StandardGate::Y => GateMatrix {
                dim: 2,
                entries: vec![ZERO, -Complex64::i(), Complex64::i(), ZERO],
            },
            StandardGate::Z => Self::real2([1.0, 0.0, 0.0, -1.0]),
            StandardGate::Cnot => {
                let mut entries = vec![ZERO; 16];
                for (r, c) in [(0, 0), (1, 1), (2, 3), (3, 2)] {
                    entries[r * 4 + c] = ONE;
                }
                GateMatrix { dim: 4, entries }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StandardGate {
    H,
    X,
    Y,
    Z,
    Cnot,
}

impl FromStr for StandardGate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "H" => Ok(StandardGate::H),
            "X" => Ok(StandardGate::X),
            "Y" => Ok(StandardGate::Y),
            "Z" => Ok(StandardGate::Z),
            "CNOT" | "CX" => Ok(StandardGate::Cnot),
            _ => Err(Error::Validation(format!(
                "unknown gate `{s}` (expected H, X, Y, Z or CNOT)"
            ))),
        }
    }
}

impl fmt::Display for StandardGate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            StandardGate::H => "H",
            StandardGate::X => "X",
            StandardGate::Y => "Y",
            StandardGate::Z => "Z",
            StandardGate::Cnot => "CNOT",
        };
        f.write_str(name)
    }
}

/// Looks a gate up by name.
pub fn standard_gate(name: &str) -> Result<GateMatrix> {
    Ok(GateMatrix::standard(name.parse()?))
}

/// Reduced state of a subset of the register, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    dim: usize,
    entries: Vec<Complex64>,
}

impl DensityMatrix {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.entries[row * self.dim + col]
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// max |ρ − ρ†|.
    pub fn hermiticity_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for r in 0..self.dim {
            for c in 0..self.dim {
                worst = worst.max((self.get(r, c) - self.get(c, r).conj()).norm());
            }
        }
        worst
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let d = self.dim;
        let m = DMatrix::from_fn(d, d, |r, c| (self.get(r, c) + self.get(c, r).conj()) * 0.5);
        let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }
}

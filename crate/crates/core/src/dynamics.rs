//! One-step integrators for the hidden-state laws and the unrolled trajectory.
//!
//! With drive `r = F̃(|ψ_t⟩, θ)` (the block readout) and leak constant `τ`:
//!
//! | solver       | continuous law                 | discrete step                                      |
//! |--------------|--------------------------------|----------------------------------------------------|
//! | `Node`       | `φ' = r`                       | `φ + Δt·r`                                         |
//! | `FusedLq`    | `φ' = −(1/τ + r)·φ + r`        | `(φ + Δt·r) / (1 + Δt·(1/τ + r))`                  |
//! | `EulerCtrq`  | `φ' = −φ/τ + r`                | `φ·(1 − Δt/τ) + Δt·r`                              |
//!
//! All products are componentwise; the hidden dimension equals the number of
//! data qubits.

use std::fmt;
use std::str::FromStr;

use crate::error::{check_len, Error, Result};
use crate::qblock::{block_drive, readout, BlockParams, Readout};
use crate::qsim::StateVector;

#[derive(Clone, Debug, PartialEq)]
pub struct HiddenState(Vec<f64>);

impl HiddenState {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NumericalDomain(format!("hidden component {bad} is not finite")));
        }
        Ok(HiddenState(values))
    }

    pub fn zeros(n: usize) -> Self {
        HiddenState(vec![0.0; n])
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

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

impl From<&Readout> for HiddenState {
    fn from(r: &Readout) -> Self {
        HiddenState(r.values().to_vec())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Solver {
    /// Explicit Euler on the quantum neural ODE.
    Node,
    /// Fused implicit/explicit step of the liquid law (LQNet).
    FusedLq,
    /// Explicit Euler on the continuous-time recurrent law (CTRQNet).
    EulerCtrq,
}

impl Solver {
    pub fn name(self) -> &'static str {
        match self {
            Solver::Node => "node",
            Solver::FusedLq => "fused",
            Solver::EulerCtrq => "euler",
        }
    }
}

impl fmt::Display for Solver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Solver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "node" => Ok(Solver::Node),
            "fused" | "fused_lq" => Ok(Solver::FusedLq),
            "euler" | "euler_ctrq" => Ok(Solver::EulerCtrq),
            _ => Err(Error::Config(format!(
                "unknown solver `{s}` (expected node, fused or euler)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DynamicsConfig {
    pub tau: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub solver: Solver,
    /// Drive gain of the general liquid form; only [`ltc_fused_step`] reads it.
    pub a_param: Option<Vec<f64>>,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        DynamicsConfig {
            tau: 1.0,
            dt: 0.1,
            n_steps: 4,
            solver: Solver::FusedLq,
            a_param: None,
        }
    }
}

impl DynamicsConfig {
    pub fn with_solver(solver: Solver) -> Self {
        DynamicsConfig {
            solver,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if self.n_steps == 0 {
            return Err(Error::Config("n_steps must be at least 1".into()));
        }
        Ok(())
    }
}

fn check_dims(phi: &HiddenState, drive: &Readout) -> Result<()> {
    check_len("drive", drive.len(), phi.len())
}

pub fn node_step(phi: &HiddenState, drive: &Readout, dt: f64) -> Result<HiddenState> {
    check_dims(phi, drive)?;
    Ok(HiddenState(
        phi.0.iter().zip(drive.values()).map(|(p, r)| p + dt * r).collect(),
    ))
}

pub fn fused_step(phi: &HiddenState, drive: &Readout, cfg: &DynamicsConfig) -> Result<HiddenState> {
    check_dims(phi, drive)?;
    let inv_tau = 1.0 / cfg.tau;
    phi.0
        .iter()
        .zip(drive.values())
        .enumerate()
        .map(|(i, (&p, &r))| {
            let denom = 1.0 + cfg.dt * (inv_tau + r);
            if !(denom > 0.0) {
                return Err(Error::NumericalDomain(format!(
                    "fused step denominator {denom} ≤ 0 at component {i} \
                     (tau {}, dt {}, drive {r})",
                    cfg.tau, cfg.dt
                )));
            }
            Ok((p + cfg.dt * r) / denom)
        })
        .collect::<Result<Vec<_>>>()
        .map(HiddenState)
}

/// The general liquid fused step with drive gain `A`:
/// `x' = (x + Δt·f·A) / (1 + Δt·(1/τ + f))`.
pub fn ltc_fused_step(x: &HiddenState, f_val: &Readout, cfg: &DynamicsConfig) -> Result<HiddenState> {
    let a = cfg
        .a_param
        .as_ref()
        .ok_or_else(|| Error::Config("ltc_fused_step needs a_param".into()))?;
    check_dims(x, f_val)?;
    check_len("a_param", a.len(), x.len())?;
    let inv_tau = 1.0 / cfg.tau;
    x.0.iter()
        .zip(f_val.values())
        .zip(a)
        .enumerate()
        .map(|(i, ((&xi, &f), &ai))| {
            let denom = 1.0 + cfg.dt * (inv_tau + f);
            if !(denom > 0.0) {
                return Err(Error::NumericalDomain(format!(
                    "fused step denominator {denom} ≤ 0 at component {i}"
                )));
            }
            Ok((xi + cfg.dt * f * ai) / denom)
        })
        .collect::<Result<Vec<_>>>()
        .map(HiddenState)
}

pub fn euler_ctrq_step(phi: &HiddenState, drive: &Readout, cfg: &DynamicsConfig) -> Result<HiddenState> {
    check_dims(phi, drive)?;
    let decay = 1.0 - cfg.dt / cfg.tau;
    Ok(HiddenState(
        phi.0
            .iter()
            .zip(drive.values())
            .map(|(p, r)| p * decay + cfg.dt * r)
            .collect(),
    ))
}

/// Dispatches on `cfg.solver`.
pub fn step(phi: &HiddenState, drive: &Readout, cfg: &DynamicsConfig) -> Result<HiddenState> {
    match cfg.solver {
        Solver::Node => node_step(phi, drive, cfg.dt),
        Solver::FusedLq => fused_step(phi, drive, cfg),
        Solver::EulerCtrq => euler_ctrq_step(phi, drive, cfg),
    }
}

/// Componentwise partials `(∂φ'/∂φ, ∂φ'/∂r)` of one step, for BPTT.
pub fn step_partials(phi: &HiddenState, drive: &Readout, cfg: &DynamicsConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    check_dims(phi, drive)?;
    let dt = cfg.dt;
    let inv_tau = 1.0 / cfg.tau;
    let n = phi.len();
    Ok(match cfg.solver {
        Solver::Node => (vec![1.0; n], vec![dt; n]),
        Solver::EulerCtrq => (vec![1.0 - dt * inv_tau; n], vec![dt; n]),
        Solver::FusedLq => phi
            .0
            .iter()
            .zip(drive.values())
            .map(|(&p, &r)| {
                let denom = 1.0 + dt * (inv_tau + r);
                let next = (p + dt * r) / denom;
                (1.0 / denom, dt * (1.0 - next) / denom)
            })
            .unzip(),
    })
}

/// Unrolled hidden-state trajectory together with the quantum states that
/// produced its drives.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    /// `φ_0 … φ_T`.
    pub hidden: Vec<HiddenState>,
    /// `r_0 … r_{T−1}`; `r_t` is the readout after block `t + 1`.
    pub readouts: Vec<Readout>,
    /// `|ψ_0⟩ … |ψ_T⟩`.
    pub states: Vec<StateVector>,
}

impl Trajectory {
    pub fn final_hidden(&self) -> &HiddenState {
        self.hidden.last().expect("trajectory always holds φ_0")
    }
}

/// Iterates `(|ψ_{t+1}⟩, r_t) = block_drive(|ψ_t⟩)` and `φ_{t+1} = step(φ_t, r_t)`
/// for `n_steps` steps. `n_steps` is taken as given (zero yields `[φ_0]`).
pub fn integrate(
    phi0: &HiddenState,
    state0: &StateVector,
    params: &BlockParams,
    cfg: &DynamicsConfig,
) -> Result<Trajectory> {
    check_len("initial hidden state", phi0.len(), params.n_data_qubits())?;
    let mut traj = Trajectory {
        hidden: Vec::with_capacity(cfg.n_steps + 1),
        readouts: Vec::with_capacity(cfg.n_steps),
        states: Vec::with_capacity(cfg.n_steps + 1),
    };
    traj.hidden.push(phi0.clone());
    traj.states.push(state0.clone());
    for t in 0..cfg.n_steps {
        let (next, r) = block_drive(&traj.states[t], params)?;
        let phi = step(&traj.hidden[t], &r, cfg)?;
        traj.hidden.push(phi);
        traj.readouts.push(r);
        traj.states.push(next);
    }
    Ok(traj)
}

/// `φ_0` for the dynamic models: the readout of the encoded input state.
pub fn initial_hidden(state0: &StateVector) -> Result<HiddenState> {
    readout(state0).map(|r| HiddenState::from(&r))
}

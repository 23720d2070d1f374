//! Binary checkpoint container.
//!
//! ```text
//! "LQNET1" | u32 version
//! u8 kind | u8 solver
//! u64 input_dim | u64 encoder_hidden | u64 n_data_qubits | u64 n_block_layers
//! u64 qnn_depth | u64 n_steps | f64 tau | f64 dt
//! u8 has_a | [u64 len | len × f64]
//! u64 n_params | n_params × f64 (tensors in declared order)
//! ```
//!
//! All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use crate::dynamics::{DynamicsConfig, Solver};
use crate::error::{Error, Result};
use crate::model::{ModelKind, ModelSpec, ParamStore};
use crate::qblock::{BlockParams, MAX_DATA_QUBITS};

pub const MAGIC: &[u8; 6] = b"LQNET1";
pub const VERSION: u32 = 1;

fn kind_code(k: ModelKind) -> u8 {
    match k {
        ModelKind::Qnn => 0,
        ModelKind::Lqnet => 1,
        ModelKind::Ctrqnet => 2,
    }
}

fn solver_code(s: Solver) -> u8 {
    match s {
        Solver::Node => 0,
        Solver::FusedLq => 1,
        Solver::EulerCtrq => 2,
    }
}

pub fn encode(spec: &ModelSpec, params: &ParamStore) -> Result<Vec<u8>> {
    params.check_shapes(spec)?;
    let mut out = Vec::with_capacity(128 + params.len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(kind_code(spec.kind));
    out.push(solver_code(spec.dynamics.solver));
    for v in [
        spec.input_dim,
        spec.encoder_hidden,
        spec.n_data_qubits,
        spec.n_block_layers,
        spec.qnn_depth,
        spec.dynamics.n_steps,
    ] {
        out.extend_from_slice(&(v as u64).to_le_bytes());
    }
    out.extend_from_slice(&spec.dynamics.tau.to_le_bytes());
    out.extend_from_slice(&spec.dynamics.dt.to_le_bytes());
    match &spec.dynamics.a_param {
        None => out.push(0),
        Some(a) => {
            out.push(1);
            out.extend_from_slice(&(a.len() as u64).to_le_bytes());
            for v in a {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    let flat = params.to_flat();
    out.extend_from_slice(&(flat.len() as u64).to_le_bytes());
    for v in flat {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.at < n {
            return Err(Error::Format(format!("checkpoint truncated while reading {what}")));
        }
        let s = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn usize(&mut self, what: &str, max: u64) -> Result<usize> {
        let v = self.u64(what)?;
        if v > max {
            return Err(Error::Format(format!("checkpoint {what} = {v} exceeds {max}")));
        }
        Ok(v as usize)
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let bytes = self.take(
            n.checked_mul(8)
                .ok_or_else(|| Error::Format(format!("{what} too long")))?,
            what,
        )?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

const DIM_LIMIT: u64 = 1 << 24;

/// Decodes a checkpoint, checking the magic, the declared architecture and the
/// parameter count.
pub fn decode(bytes: &[u8]) -> Result<(ModelSpec, ParamStore)> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let mut r = Reader { bytes, at: MAGIC.len() };
    let version = u32::from_le_bytes(r.take(4, "version")?.try_into().unwrap());
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let kind = match r.u8("model kind")? {
        0 => ModelKind::Qnn,
        1 => ModelKind::Lqnet,
        2 => ModelKind::Ctrqnet,
        k => return Err(Error::Format(format!("unknown model kind code {k}"))),
    };
    let solver = match r.u8("solver")? {
        0 => Solver::Node,
        1 => Solver::FusedLq,
        2 => Solver::EulerCtrq,
        s => return Err(Error::Format(format!("unknown solver code {s}"))),
    };
    let input_dim = r.usize("input_dim", DIM_LIMIT)?;
    let encoder_hidden = r.usize("encoder_hidden", DIM_LIMIT)?;
    let n_data_qubits = r.usize("n_data_qubits", MAX_DATA_QUBITS as u64)?;
    let n_block_layers = r.usize("n_block_layers", 1 << 16)?;
    let qnn_depth = r.usize("qnn_depth", 1 << 16)?;
    let n_steps = r.usize("n_steps", 1 << 16)?;
    let tau = r.f64("tau")?;
    let dt = r.f64("dt")?;
    let a_param = match r.u8("a flag")? {
        0 => None,
        1 => {
            let n = r.usize("a length", MAX_DATA_QUBITS as u64)?;
            Some(r.f64s(n, "a values")?)
        }
        f => return Err(Error::Format(format!("bad a flag {f}"))),
    };
    let spec = ModelSpec {
        kind,
        input_dim,
        encoder_hidden,
        n_data_qubits,
        n_block_layers,
        qnn_depth,
        dynamics: DynamicsConfig {
            tau,
            dt,
            n_steps,
            solver,
            a_param,
        },
    };
    spec.validate()
        .map_err(|e| Error::Format(format!("checkpoint header invalid: {e}")))?;

    let (d, h, q) = (input_dim as u64, encoder_hidden as u64, n_data_qubits as u64);
    let expected = h * d + h + q * h + q + BlockParams::count(n_data_qubits, n_block_layers) as u64 + q + 1;
    let n_params = r.u64("parameter count")?;
    if n_params != expected {
        return Err(Error::Format(format!(
            "checkpoint declares {n_params} parameters, architecture needs {expected}"
        )));
    }
    let remaining = (bytes.len() - r.at) as u64;
    if remaining != n_params * 8 {
        return Err(Error::Format(format!(
            "checkpoint payload is {remaining} bytes, expected {}",
            n_params * 8
        )));
    }
    let flat = r.f64s(n_params as usize, "parameters")?;
    if flat.iter().any(|v| !v.is_finite()) {
        return Err(Error::Format("checkpoint holds non-finite parameters".into()));
    }
    let mut params = ParamStore::zeros(&spec)?;
    params.assign_flat(&flat)?;
    Ok((spec, params))
}

pub fn save(path: &Path, spec: &ModelSpec, params: &ParamStore) -> Result<()> {
    fs::write(path, encode(spec, params)?).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<(ModelSpec, ParamStore)> {
    decode(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

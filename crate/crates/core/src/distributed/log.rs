//! Realized quantization errors and the equivalent centralized error.
//!
//! Every error is stored as `quantized − exact`:
//! `a_i = x̂_i^{(s)} − x̃_i^{(s)}`, `b_i = ĝ_i^{(s)} − ∇f_i(x̂^{(s)}_𝒩(i))`,
//! `c_j = x̂_j^{(s_t)} − x_j^{(s_t)}` and `d_ℓ = ĝ_ℓ^{(s_t)} − ∇f_ℓ(x̂^{(s_t)}_𝒩(ℓ))`.

use std::io::{Read, Write};

use crate::error::{check_dim, Error, Result};
use crate::problem::{read_f64s, read_u32, read_u8, write_f64s, write_u32, ContainerKind, Header, ProblemInstance};

#[derive(Debug, Clone, PartialEq)]
pub struct StepLog {
    pub l: usize,
    /// State errors of `𝒩(ℓ)`, stacked in neighborhood order.
    pub c: Vec<f64>,
    pub d: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RoundLog {
    /// Per node, length `m_i`.
    pub a: Vec<Vec<f64>>,
    /// Per node, length `Σ_{j∈𝒩(i)} m_j`.
    pub b: Vec<Vec<f64>>,
    pub steps: Vec<StepLog>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct QuantLog {
    /// `None` for an unquantized run.
    pub bits: Option<u8>,
    pub inner: usize,
    pub rounds: Vec<RoundLog>,
}

fn stack(inst: &ProblemInstance, i: usize, blocks: &[Vec<f64>]) -> Vec<f64> {
    inst.graph().neighborhood(i).iter().flat_map(|&j| blocks[j].iter().copied()).collect()
}

/// `(1/N) Σ_i 𝒜_iᵀ(∇f_i(x̂^{(s)}) − ∇f_i(x̃^{(s)}) + b_i)`, the part of the
/// error shared by every inner step of a round.
pub fn outer_error_term(inst: &ProblemInstance, round: &RoundLog) -> Result<Vec<f64>> {
    let n = inst.node_count();
    check_dim(n, round.a.len())?;
    check_dim(n, round.b.len())?;
    let mut out = vec![0.0; inst.dim()];
    for i in 0..n {
        let mut g = inst.gradient_difference(i, &stack(inst, i, &round.a))?;
        check_dim(g.len(), round.b[i].len())?;
        g.iter_mut().zip(&round.b[i]).for_each(|(x, b)| *x += b);
        inst.scatter_add(&mut out, i, &g, 1.0)?;
    }
    let nf = n as f64;
    out.iter_mut().for_each(|v| *v /= nf);
    Ok(out)
}

/// `e^{s_t} = 𝒜_ℓᵀ(∇f_ℓ(x̂^{(s_t)}) − ∇f_ℓ(x^{(s_t)}) + d_ℓ − ∇f_ℓ(x̂^{(s)}) + ∇f_ℓ(x̃^{(s)}) − b_ℓ)`
/// plus the shared outer term.
pub fn step_error(inst: &ProblemInstance, round: &RoundLog, step: &StepLog, outer_term: &[f64]) -> Result<Vec<f64>> {
    let l = step.l;
    if l >= inst.node_count() {
        return Err(Error::Index(format!("logged coordinator {l} out of range")));
    }
    let fresh = inst.gradient_difference(l, &step.c)?;
    let stale = inst.gradient_difference(l, &stack(inst, l, &round.a))?;
    check_dim(fresh.len(), step.d.len())?;
    let local: Vec<f64> = (0..fresh.len()).map(|k| fresh[k] + step.d[k] - stale[k] - round.b[l][k]).collect();
    let mut e = outer_term.to_vec();
    inst.scatter_add(&mut e, l, &local, 1.0)?;
    Ok(e)
}

/// The centralized error equivalent to the distributed step `(s, t)`.
pub fn reconstruct_error(log: &QuantLog, inst: &ProblemInstance, s: usize, t: usize, l: usize) -> Result<Vec<f64>> {
    let round = log.rounds.get(s).ok_or_else(|| Error::MissingLog(format!("outer round {s}")))?;
    let step = round.steps.get(t).ok_or_else(|| Error::MissingLog(format!("inner step ({s}, {t})")))?;
    if step.l != l {
        return Err(Error::MissingLog(format!("step ({s}, {t}) was coordinated by node {}, not {l}", step.l)));
    }
    step_error(inst, round, step, &outer_error_term(inst, round)?)
}

impl QuantLog {
    /// All reconstructed errors in `s·T + t` order, ready for replay.
    pub fn replay_sequence(&self, inst: &ProblemInstance) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(self.rounds.len() * self.inner);
        for round in &self.rounds {
            let shared = outer_error_term(inst, round)?;
            for step in &round.steps {
                out.push(step_error(inst, round, step, &shared)?);
            }
        }
        Ok(out)
    }

    /// `Γ̂^{(s)} = Σ_t ‖e^{s_t}‖²`
    pub fn error_energy(&self, inst: &ProblemInstance, s: usize) -> Result<f64> {
        let round = self.rounds.get(s).ok_or_else(|| Error::MissingLog(format!("outer round {s}")))?;
        let shared = outer_error_term(inst, round)?;
        round.steps.iter().try_fold(0.0, |acc, step| {
            Ok(acc + step_error(inst, round, step, &shared)?.iter().map(|v| v * v).sum::<f64>())
        })
    }
}

/// Writes a log. Body: `n` as u8 (0 when unquantized), `T`, `S` as u32, then
/// per round every `a_i`, every `b_i`, and per step `ℓ` (u32), `c`, `d`.
pub fn save_quant_log<W: Write>(log: &QuantLog, inst: &ProblemInstance, w: &mut W) -> Result<()> {
    Header::for_instance(inst, ContainerKind::QuantLog).write(w)?;
    w.write_all(&[log.bits.unwrap_or(0)])?;
    write_u32(w, log.inner as u32)?;
    write_u32(w, log.rounds.len() as u32)?;
    for round in &log.rounds {
        for a in &round.a {
            write_f64s(w, a)?;
        }
        for b in &round.b {
            write_f64s(w, b)?;
        }
        if round.steps.len() != log.inner {
            return Err(Error::MissingLog(format!("round holds {} of {} inner steps", round.steps.len(), log.inner)));
        }
        for step in &round.steps {
            write_u32(w, step.l as u32)?;
            write_f64s(w, &step.c)?;
            write_f64s(w, &step.d)?;
        }
    }
    Ok(())
}

/// Reads a log written for `inst`; dimensions come from the instance.
pub fn load_quant_log<R: Read>(inst: &ProblemInstance, r: &mut R) -> Result<QuantLog> {
    let header = Header::read(r)?;
    if header.kind != ContainerKind::QuantLog {
        return Err(Error::Codec("container does not hold a quantization log".into()));
    }
    if header != Header::for_instance(inst, ContainerKind::QuantLog) {
        return Err(Error::Codec("log header does not match the instance".into()));
    }
    let bits = match read_u8(r)? {
        0 => None,
        b => Some(b),
    };
    let inner = read_u32(r)? as usize;
    let count = read_u32(r)? as usize;
    let n = inst.node_count();
    let mut rounds = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let a = (0..n).map(|i| read_f64s(r, inst.block_dim(i))).collect::<Result<Vec<_>>>()?;
        let b = (0..n).map(|i| read_f64s(r, inst.nbhd_dim(i))).collect::<Result<Vec<_>>>()?;
        let mut steps = Vec::with_capacity(inner.min(1 << 16));
        for _ in 0..inner {
            let l = read_u32(r)? as usize;
            if l >= n {
                return Err(Error::Codec(format!("coordinator {l} out of range")));
            }
            let c = read_f64s(r, inst.nbhd_dim(l))?;
            let d = read_f64s(r, inst.nbhd_dim(l))?;
            steps.push(StepLog { l, c, d });
        }
        rounds.push(RoundLog { a, b, steps });
    }
    Ok(QuantLog { bits, inner, rounds })
}

//! Exact bit accounting.

use std::fmt::Write as _;

use super::codec::{MessageKind, HEADER_LEN};
use crate::problem::ProblemInstance;

/// Totals for one `(s, phase, kind)`; `t` is `None` in the outer phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LedgerEntry {
    pub s: usize,
    pub t: Option<usize>,
    pub kind: MessageKind,
    pub messages: u64,
    pub payload_bits: u64,
    pub header_bits: u64,
}

/// Every delivered message is counted once per recipient: a broadcast to
/// `|𝒩(i)|` nodes costs `|𝒩(i)|` payloads.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BitLedger {
    entries: Vec<LedgerEntry>,
}

impl BitLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, s: usize, t: Option<usize>, kind: MessageKind, scalars: usize, bits_per_scalar: u32) {
        let payload = scalars as u64 * u64::from(bits_per_scalar);
        let header = 8 * HEADER_LEN as u64;
        match self.entries.last_mut() {
            Some(e) if e.s == s && e.t == t && e.kind == kind => {
                e.messages += 1;
                e.payload_bits += payload;
                e.header_bits += header;
            }
            _ => self.entries.push(LedgerEntry { s, t, kind, messages: 1, payload_bits: payload, header_bits: header }),
        }
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn round_payload(&self, s: usize) -> u64 {
        self.entries.iter().filter(|e| e.s == s).map(|e| e.payload_bits).sum()
    }

    pub fn outer_payload(&self, s: usize) -> u64 {
        self.entries.iter().filter(|e| e.s == s && e.t.is_none()).map(|e| e.payload_bits).sum()
    }

    pub fn inner_payload(&self, s: usize, t: usize) -> u64 {
        self.entries.iter().filter(|e| e.s == s && e.t == Some(t)).map(|e| e.payload_bits).sum()
    }

    pub fn total_payload(&self) -> u64 {
        self.entries.iter().map(|e| e.payload_bits).sum()
    }

    pub fn total_header(&self) -> u64 {
        self.entries.iter().map(|e| e.header_bits).sum()
    }

    pub fn rounds(&self) -> usize {
        self.entries.last().map_or(0, |e| e.s + 1)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("s,t,kind,messages,payload_bits,header_bits\n");
        for e in &self.entries {
            let t = e.t.map_or_else(|| "outer".to_string(), |t| t.to_string());
            let _ = writeln!(out, "{},{},{},{},{},{}", e.s, t, e.kind.name(), e.messages, e.payload_bits, e.header_bits);
        }
        out
    }
}

/// Upper bound on the payload bits of one outer round, `n·m̄·(N+T)·(D+D²)`.
pub fn bit_upper_bound(nodes: u64, inner: u64, max_degree: u64, block_dim: u64, bits: u64) -> u64 {
    bits * block_dim * (nodes + inner) * (max_degree + max_degree * max_degree)
}

/// Exact payload of the outer phase: `n·Σ_i |𝒩(i)|(m_i + Σ_{j∈𝒩(i)} m_j)`.
pub fn outer_round_bits(inst: &ProblemInstance, bits: u64) -> u64 {
    (0..inst.node_count())
        .map(|i| {
            let deg = inst.graph().neighborhood(i).len() as u64;
            bits * deg * (inst.block_dim(i) + inst.nbhd_dim(i)) as u64
        })
        .sum()
}

/// Exact payload of one inner step with coordinator `ℓ`:
/// `n·(|𝒩(ℓ)|·Σ_{j∈𝒩(ℓ)} m_j + Σ_{j∈𝒩(ℓ)} m_j)`.
pub fn inner_step_bits(inst: &ProblemInstance, l: usize, bits: u64) -> u64 {
    let deg = inst.graph().neighborhood(l).len() as u64;
    let stack = inst.nbhd_dim(l) as u64;
    bits * (deg * stack + stack)
}

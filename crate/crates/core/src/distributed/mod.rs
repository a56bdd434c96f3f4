//! Distributed quantized Prox-SVRG on a simulated synchronous network.
//!
//! Each outer round every node broadcasts its quantized anchor block, then the
//! quantized gradient of its local loss evaluated on the received anchors.
//! From those it caches `h̃_i = (1/N) Σ_{j∈𝒩(i)} ℬ_{ij} ĝ_j` and
//! `v_{ij} = −ℬ_{ij} ĝ_j + h̃_i`. Each inner step a coordinator draws `ℓ`; the
//! members of `𝒩(ℓ)` send quantized states to `ℓ`, which answers with its
//! quantized gradient. Members of `𝒩(ℓ)` step along `ℬ_{iℓ} ĝ_ℓ + v_{iℓ}`,
//! everyone else along `h̃_i`.
//!
//! With quantization disabled the run reproduces [`inexact_prox_svrg`] with no
//! injected error bit for bit, given the same `ℓ` seed.
//!
//! [`inexact_prox_svrg`]: crate::central::inexact_prox_svrg

mod codec;
mod ledger;
mod log;

pub use codec::{decode_message, encode_message, Message, MessageKind, FRAME_MAGIC, HEADER_LEN};
pub use ledger::{bit_upper_bound, inner_step_bits, outer_round_bits, BitLedger, LedgerEntry};
pub use log::{
    load_quant_log, outer_error_term, reconstruct_error, save_quant_log, step_error, QuantLog, RoundLog, StepLog,
};

use crate::central::{check_step, distance, Selector, SvrgOptions, Trace, TraceRow};
use crate::error::{check_dim, Error, Result};
use crate::problem::ProblemInstance;
use crate::quantizer::{dithered_decode, dithered_encode, CodewordBlock, DitherStream, Family, QuantizerState};

/// Bits charged per scalar when quantization is bypassed.
pub const UNQUANTIZED_BITS: u32 = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct QuantConfig {
    pub bits: u8,
    pub kappa: f64,
    /// `C_a, C_b, C_c, C_d`
    pub intervals: [f64; 4],
    pub dither_seed: u64,
}

impl QuantConfig {
    pub fn validate(&self) -> Result<()> {
        if !(2..=32).contains(&self.bits) {
            return Err(Error::Precondition(format!("2 <= n <= 32 violated: n = {}", self.bits)));
        }
        if !(self.kappa > 0.0 && self.kappa < 1.0) {
            return Err(Error::Precondition(format!("0 < kappa < 1 violated: kappa = {}", self.kappa)));
        }
        for (name, c) in ["c_a", "c_b", "c_c", "c_d"].iter().zip(self.intervals) {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::Precondition(format!("{name} > 0 violated: {name} = {c}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistributedConfig {
    pub svrg: SvrgOptions,
    /// `None` bypasses quantization.
    pub quant: Option<QuantConfig>,
    pub keep_log: bool,
}

/// What node `i` holds. Vectors indexed by neighbor use the position of the
/// neighbor in `𝒩(i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    pub x: Vec<f64>,
    pub x_tilde: Vec<f64>,
    /// Latest received `x̂_j`.
    pub x_hat: Vec<Vec<f64>>,
    /// Latest received `ĝ_j`.
    pub g_hat: Vec<Vec<f64>>,
    pub h_tilde: Vec<f64>,
    pub v: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct DistributedRun {
    pub trace: Trace,
    pub ledger: BitLedger,
    pub log: Option<QuantLog>,
    pub nodes: Vec<NodeState>,
}

struct Network<'a> {
    quant: Option<&'a QuantConfig>,
    /// Interval schedule per family; midpoints are filled in per message.
    templates: Vec<QuantizerState>,
    ledger: BitLedger,
    overflows: u64,
    edge_clamps: u64,
}

fn family_index(f: Family) -> usize {
    match f {
        Family::A => 0,
        Family::B => 1,
        Family::C => 2,
        Family::D => 3,
    }
}

impl<'a> Network<'a> {
    fn new(quant: Option<&'a QuantConfig>) -> Result<Self> {
        let templates = match quant {
            Some(q) => Family::ALL
                .iter()
                .map(|&f| QuantizerState::at_round(f, q.bits, q.intervals[family_index(f)], q.kappa, 0, Vec::new()))
                .collect::<Result<_>>()?,
            None => Vec::new(),
        };
        Ok(Self { quant, templates, ledger: BitLedger::new(), overflows: 0, edge_clamps: 0 })
    }

    fn refine(&mut self) {
        for q in &mut self.templates {
            *q = q.refine(Vec::new());
        }
    }

    /// Sends `value` from `sender` to each recipient and returns the vector
    /// they all reconstruct. Recipients decode against their own copy of the
    /// midpoint; any disagreement with the sender's reconstruction is fatal.
    #[allow(clippy::too_many_arguments)]
    fn transmit<'m>(
        &mut self,
        kind: MessageKind,
        sender: usize,
        s: usize,
        t: Option<usize>,
        value: &[f64],
        sender_mid: &[f64],
        recipients: impl Iterator<Item = &'m [f64]>,
    ) -> Result<Vec<f64>> {
        let Some(cfg) = self.quant else {
            for _ in recipients {
                self.ledger.record(s, t, kind, value.len(), UNQUANTIZED_BITS);
            }
            return Ok(value.to_vec());
        };
        let family = kind.family();
        let template = &self.templates[family_index(family)];
        let dither = DitherStream::new(cfg.dither_seed, family, sender, s, t.unwrap_or(0));
        let q = QuantizerState { midpoint: sender_mid.to_vec(), ..template.clone() };
        let block = dithered_encode(value, &q, &mut dither.clone())?;
        let own = dithered_decode(&block, &q, &mut dither.clone())?;
        let (step, half) = (q.step(), q.interval / 2.0);
        for ((z, mid), zh) in value.iter().zip(sender_mid).zip(&own) {
            let slack = 1e-12 * (z.abs() + mid.abs() + q.interval);
            if (z - mid).abs() <= half && (z - zh).abs() > 1.5 * step + slack {
                return Err(Error::Protocol(format!(
                    "reconstruction error {} exceeds 3/2 step {} for {} from node {sender}",
                    (z - zh).abs(),
                    1.5 * step,
                    kind.name()
                )));
            }
        }
        self.overflows += block.overflows as u64;
        self.edge_clamps += block.edge_clamps as u64;
        let sender_id =
            u16::try_from(sender).map_err(|_| Error::Protocol(format!("sender id {sender} does not fit the frame")))?;
        let frame = encode_message(&Message {
            kind,
            sender: sender_id,
            s: s as u32,
            t: t.unwrap_or(0) as u32,
            bits: cfg.bits,
            codes: block.codes,
        })?;
        for mid in recipients {
            let msg = decode_message(&frame)?;
            if msg.kind != kind || usize::from(msg.sender) != sender || msg.codes.len() != value.len() {
                return Err(Error::Protocol(format!("frame from node {sender} decoded inconsistently")));
            }
            let (count, bits) = (msg.codes.len(), msg.bits);
            let received = CodewordBlock { bits, codes: msg.codes, edge_clamps: 0, overflows: 0 };
            let qr = QuantizerState { midpoint: mid.to_vec(), ..template.clone() };
            let got = dithered_decode(&received, &qr, &mut dither.clone())?;
            if got.iter().zip(&own).any(|(a, b)| a.to_bits() != b.to_bits()) {
                return Err(Error::Protocol(format!("dither desync on {} from node {sender}", kind.name())));
            }
            self.ledger.record(s, t, kind, count, u32::from(bits));
        }
        Ok(own)
    }
}

fn difference(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// `h̃_i` and `v_{ij}` from the gradients node `i` received.
fn build_caches(inst: &ProblemInstance, i: usize, g_hat: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let nb = inst.graph().neighborhood(i);
    let mut h = vec![0.0; inst.block_dim(i)];
    for (p, &j) in nb.iter().enumerate() {
        for (acc, g) in h.iter_mut().zip(inst.scatter_block(&g_hat[p], j, i)?) {
            *acc += g;
        }
    }
    let nf = inst.node_count() as f64;
    h.iter_mut().for_each(|v| *v /= nf);
    let v = nb
        .iter()
        .enumerate()
        .map(|(p, &j)| {
            let block = inst.scatter_block(&g_hat[p], j, i)?;
            Ok(block.iter().zip(&h).map(|(g, hk)| -g + hk).collect())
        })
        .collect::<Result<_>>()?;
    Ok((h, v))
}

fn assemble(inst: &ProblemInstance, blocks: impl Fn(usize) -> Vec<f64>) -> Vec<f64> {
    (0..inst.node_count()).flat_map(blocks).collect()
}

/// Runs the distributed method for `S` outer rounds from `x = 0`.
pub fn run_distributed(inst: &ProblemInstance, x_star: &[f64], cfg: &DistributedConfig) -> Result<DistributedRun> {
    let n = inst.node_count();
    check_dim(inst.dim(), x_star.len())?;
    let SvrgOptions { eta, inner, outer, .. } = cfg.svrg;
    check_step(eta, inst.smoothness().l_bar, inner, cfg.svrg.force)?;
    if let Some(q) = &cfg.quant {
        q.validate()?;
    }
    let graph = inst.graph();
    let reg = inst.regularizer();
    let mut net = Network::new(cfg.quant.as_ref())?;
    let mut selector = Selector::new(cfg.svrg.selection_seed, n);
    let mut nodes: Vec<NodeState> = (0..n)
        .map(|i| {
            let nb = graph.neighborhood(i);
            NodeState {
                x: vec![0.0; inst.block_dim(i)],
                x_tilde: vec![0.0; inst.block_dim(i)],
                x_hat: nb.iter().map(|&j| vec![0.0; inst.block_dim(j)]).collect(),
                g_hat: nb.iter().map(|&j| vec![0.0; inst.nbhd_dim(j)]).collect(),
                h_tilde: vec![0.0; inst.block_dim(i)],
                v: nb.iter().map(|_| vec![0.0; inst.block_dim(i)]).collect(),
            }
        })
        .collect();
    let own = |i: usize| graph.position(i, i).expect("closed neighborhood");
    let mut trace = Trace::default();
    let mut log = cfg.keep_log.then(|| QuantLog { bits: cfg.quant.as_ref().map(|q| q.bits), inner, rounds: Vec::new() });

    for s in 0..=outer {
        let x_tilde = assemble(inst, |i| nodes[i].x_tilde.clone());
        trace.rows.push(TraceRow {
            s,
            gap: inst.objective_gap(&x_tilde, x_star)?,
            dist: distance(&x_tilde, x_star),
            gamma: 0.0,
            bits_cum: net.ledger.total_payload(),
            overflows: net.overflows,
            edge_clamps: net.edge_clamps,
        });
        trace.anchors.push(x_tilde);
        if s == outer {
            break;
        }
        if s > 0 {
            net.refine();
        }
        let mut round = RoundLog::default();

        // anchors, midpoint x̂_i^{(s−1)}
        for i in 0..n {
            let nb = graph.neighborhood(i);
            let value = nodes[i].x_tilde.clone();
            let sender_mid = nodes[i].x_hat[own(i)].clone();
            let mids: Vec<Vec<f64>> = nb.iter().map(|&r| nodes[r].x_hat[graph.position(r, i).unwrap()].clone()).collect();
            let got = net.transmit(MessageKind::StateOuter, i, s, None, &value, &sender_mid, mids.iter().map(Vec::as_slice))?;
            for &r in nb {
                let p = graph.position(r, i).unwrap();
                nodes[r].x_hat[p].clone_from(&got);
            }
            round.a.push(difference(&got, &value));
        }

        // gradients on received anchors, midpoint ĝ_i^{(s−1)}
        for i in 0..n {
            let nb = graph.neighborhood(i);
            let stacked: Vec<f64> = nodes[i].x_hat.concat();
            let value = inst.local_gradient(i, &stacked)?;
            let sender_mid = nodes[i].g_hat[own(i)].clone();
            let mids: Vec<Vec<f64>> = nb.iter().map(|&r| nodes[r].g_hat[graph.position(r, i).unwrap()].clone()).collect();
            let got = net.transmit(MessageKind::GradOuter, i, s, None, &value, &sender_mid, mids.iter().map(Vec::as_slice))?;
            for &r in nb {
                let p = graph.position(r, i).unwrap();
                nodes[r].g_hat[p].clone_from(&got);
            }
            round.b.push(difference(&got, &value));
        }

        for (i, node) in nodes.iter_mut().enumerate() {
            let (h, v) = build_caches(inst, i, &node.g_hat)?;
            node.h_tilde = h;
            node.v = v;
        }
        // cache coherence: the senders' own copies must rebuild the same caches
        for i in 0..n {
            let senders: Vec<Vec<f64>> = graph.neighborhood(i).iter().map(|&j| nodes[j].g_hat[own(j)].clone()).collect();
            let (h, v) = build_caches(inst, i, &senders)?;
            if h != nodes[i].h_tilde || v != nodes[i].v {
                return Err(Error::Protocol(format!("cached h and v of node {i} disagree with the senders' gradients")));
            }
        }
        let shared = outer_error_term(inst, &round)?;

        for node in nodes.iter_mut() {
            node.x.clone_from(&node.x_tilde);
        }
        let mut sums: Vec<Vec<f64>> = (0..n).map(|i| vec![0.0; inst.block_dim(i)]).collect();
        let mut gamma = 0.0;
        for t in 0..inner {
            let l = selector.draw();
            trace.selections.push(l);
            let nb_l = graph.neighborhood(l);

            // states of 𝒩(ℓ) to ℓ, midpoint x̂_j^{(s)}
            let mut received = Vec::with_capacity(inst.nbhd_dim(l));
            let mut c = Vec::with_capacity(inst.nbhd_dim(l));
            for (p, &j) in nb_l.iter().enumerate() {
                let value = nodes[j].x.clone();
                let sender_mid = nodes[j].x_hat[own(j)].clone();
                let mid_at_l = nodes[l].x_hat[p].clone();
                let got = net.transmit(
                    MessageKind::StateInner,
                    j,
                    s,
                    Some(t),
                    &value,
                    &sender_mid,
                    std::iter::once(mid_at_l.as_slice()),
                )?;
                c.extend(got.iter().zip(&value).map(|(a, b)| a - b));
                received.extend_from_slice(&got);
            }

            // ℓ's gradient to 𝒩(ℓ), midpoint ĝ_ℓ^{(s)}
            let value = inst.local_gradient(l, &received)?;
            let sender_mid = nodes[l].g_hat[own(l)].clone();
            let mids: Vec<Vec<f64>> =
                nb_l.iter().map(|&r| nodes[r].g_hat[graph.position(r, l).unwrap()].clone()).collect();
            let g_l = net.transmit(
                MessageKind::GradInner,
                l,
                s,
                Some(t),
                &value,
                &sender_mid,
                mids.iter().map(Vec::as_slice),
            )?;
            let d = difference(&g_l, &value);

            for (i, node) in nodes.iter_mut().enumerate() {
                match graph.position(i, l) {
                    Some(p) => {
                        let block = inst.scatter_block(&g_l, l, i)?;
                        for ((xk, gk), vk) in node.x.iter_mut().zip(block).zip(&node.v[p]) {
                            *xk -= eta * (gk + vk);
                        }
                    }
                    None => {
                        for (xk, hk) in node.x.iter_mut().zip(&node.h_tilde) {
                            *xk -= eta * hk;
                        }
                    }
                }
                reg.prox_block_in_place(&mut node.x, eta);
                for (acc, xk) in sums[i].iter_mut().zip(&node.x) {
                    *acc += xk;
                }
            }

            let step = StepLog { l, c, d };
            gamma += step_error(inst, &round, &step, &shared)?.iter().map(|v| v * v).sum::<f64>();
            if log.is_some() {
                round.steps.push(step);
            }
            if cfg.svrg.record_iterates {
                trace.iterates.push(assemble(inst, |i| nodes[i].x.clone()));
            }
        }
        trace.rows[s].gamma = gamma;
        let tf = inner as f64;
        for (node, sum) in nodes.iter_mut().zip(&sums) {
            node.x_tilde = sum.iter().map(|v| v / tf).collect();
        }
        if let Some(log) = log.as_mut() {
            log.rounds.push(round);
        }
    }
    Ok(DistributedRun { trace, ledger: net.ledger, log, nodes })
}

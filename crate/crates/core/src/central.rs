//! Centralized solvers: the deterministic proximal-gradient reference for `x*`
//! and inexact Prox-SVRG with a pluggable zero-mean error injector.

use std::fmt::Write as _;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_dim, Error, Result};
use crate::problem::ProblemInstance;
use crate::rng::{self, Purpose};

/// One full proximal-gradient step `x⁺ = prox_{ηR}(x − η∇F(x))`, returned
/// together with the fixed-point residual `‖x − x⁺‖/η`.
pub fn proximal_gradient_step(inst: &ProblemInstance, x: &[f64], eta: f64) -> Result<(Vec<f64>, f64)> {
    let g = inst.full_gradient(x)?;
    let mut next: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - eta * gi).collect();
    inst.prox_in_place(&mut next, eta)?;
    let residual = x.iter().zip(&next).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() / eta;
    Ok((next, residual))
}

/// Runs full proximal gradient from the origin until the fixed-point residual
/// is at most `tol`. `eta` defaults to `1/L_F`.
pub fn exact_reference(inst: &ProblemInstance, eta: Option<f64>, tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    if !(tol > 0.0) {
        return Err(Error::Parameter(format!("tolerance must be positive, got {tol}")));
    }
    let l_f = inst.smoothness().l_f();
    let eta = match eta {
        Some(e) => e,
        None if l_f > 0.0 => 1.0 / l_f,
        None => 1.0,
    };
    if !(eta > 0.0) || (l_f > 0.0 && eta > 1.0 / l_f * (1.0 + 1e-12)) {
        return Err(Error::Precondition(format!("reference step: need 0 < eta <= 1/L_F, got eta = {eta}, 1/L_F = {}", 1.0 / l_f)));
    }
    let mut x = vec![0.0; inst.dim()];
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        let (next, r) = proximal_gradient_step(inst, &x, eta)?;
        x = next;
        residual = r;
        if r <= tol {
            return Ok(x);
        }
    }
    Err(Error::NonConvergence { iterations: max_iter, residual })
}

/// Source of the additive error `e^{s_t}` in the inner direction.
#[derive(Debug, Clone, PartialEq)]
pub enum ErrorInjector {
    None,
    /// `e^{s_t} ~ N(0, σ0² κ_e^s / P · I)`, so `E‖e^{s_t}‖² = σ0² κ_e^s`.
    GaussianDecaying { sigma0: f64, kappa_e: f64 },
    /// A recorded sequence indexed by `s·T + t`.
    Replay(Vec<Vec<f64>>),
}

impl ErrorInjector {
    fn validate(&self, dim: usize, inner: usize, outer: usize) -> Result<()> {
        match self {
            ErrorInjector::None => Ok(()),
            ErrorInjector::GaussianDecaying { sigma0, kappa_e } => {
                if *sigma0 < 0.0 || !(*kappa_e > 0.0 && *kappa_e < 1.0) {
                    return Err(Error::Parameter(format!(
                        "need sigma0 >= 0 and 0 < kappa_e < 1, got {sigma0}, {kappa_e}"
                    )));
                }
                Ok(())
            }
            ErrorInjector::Replay(seq) => {
                if seq.len() < inner * outer {
                    return Err(Error::MissingLog(format!(
                        "replay holds {} error vectors, run needs {}",
                        seq.len(),
                        inner * outer
                    )));
                }
                seq.iter().try_for_each(|e| check_dim(dim, e.len()))
            }
        }
    }
}

/// Inner-loop settings shared by the central and distributed solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct SvrgOptions {
    pub eta: f64,
    pub inner: usize,
    pub outer: usize,
    /// Seed of the shared `ℓ` stream.
    pub selection_seed: u64,
    pub injector_seed: u64,
    /// Run even if `η ≥ 1/(4L̄)`.
    pub force: bool,
    /// Keep every inner iterate `x^{s_t}`, `t = 1..=T`.
    pub record_iterates: bool,
}

/// The `ℓ` sequence drawn by the coordinator.
#[derive(Debug, Clone)]
pub struct Selector {
    rng: ChaCha8Rng,
    nodes: usize,
}

impl Selector {
    pub fn new(seed: u64, nodes: usize) -> Self {
        Self { rng: rng::stream(seed, Purpose::Selection, 0, 0, 0), nodes }
    }

    pub fn draw(&mut self) -> usize {
        self.rng.random_range(0..self.nodes)
    }
}

/// Rejects `η ∉ (0, 1/(4L̄))` unless forced, and `T = 0` always.
pub fn check_step(eta: f64, l_bar: f64, inner: usize, force: bool) -> Result<()> {
    if inner == 0 {
        return Err(Error::Parameter("inner loop length T must be at least 1".into()));
    }
    if !(eta > 0.0) {
        return Err(Error::Precondition(format!("0 < eta violated: eta = {eta}")));
    }
    if !force && 4.0 * l_bar * eta >= 1.0 {
        return Err(Error::Precondition(format!(
            "4 * L_bar * eta < 1 violated: 4 * {l_bar} * {eta} = {}",
            4.0 * l_bar * eta
        )));
    }
    Ok(())
}

/// `∇f_ℓ(x) − ∇f_ℓ(x̃) + g`, lifted to the full dimension.
pub fn svrg_direction(inst: &ProblemInstance, l: usize, x: &[f64], x_tilde: &[f64], g: &[f64]) -> Result<Vec<f64>> {
    let a = inst.lift(l, &inst.local_gradient(l, &inst.gather(x, l)?)?)?;
    let b = inst.lift(l, &inst.local_gradient(l, &inst.gather(x_tilde, l)?)?)?;
    check_dim(a.len(), g.len())?;
    // grouped as a + (−b + g) so a node outside 𝒩(ℓ) sees exactly g
    Ok(a.iter().zip(&b).zip(g).map(|((ak, bk), gk)| ak + (-bk + gk)).collect())
}

/// One row per outer iteration `s = 0..=S`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub s: usize,
    /// `G(x̃^s) − G(x*)`
    pub gap: f64,
    /// `‖x̃^s − x*‖`
    pub dist: f64,
    /// `Σ_t ‖e^{s_t}‖²` over round `s`; zero on the final row.
    pub gamma: f64,
    pub bits_cum: u64,
    pub overflows: u64,
    pub edge_clamps: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    /// Written as the leading `#` row of the CSV.
    pub comment: Option<String>,
    pub rows: Vec<TraceRow>,
    /// Outer anchors `x̃^s`, `s = 0..=S`.
    pub anchors: Vec<Vec<f64>>,
    /// Inner iterates in `s·T + t` order when recorded.
    pub iterates: Vec<Vec<f64>>,
    /// The `ℓ` drawn at each inner step.
    pub selections: Vec<usize>,
}

pub const TRACE_HEADER: &str = "s,gap,dist,gamma,bits_cum,overflows,edge_clamps";

impl Trace {
    pub fn gaps(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.gap).collect()
    }

    pub fn total_overflows(&self) -> u64 {
        self.rows.last().map_or(0, |r| r.overflows)
    }

    /// The rate envelope only applies when no value left its interval.
    pub fn envelope_valid(&self) -> bool {
        self.total_overflows() == 0
    }

    /// Reads the rows (and the leading comment) back from [`to_csv`](Self::to_csv) output.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut trace = Trace::default();
        let mut header_seen = false;
        for (idx, line) in text.lines().enumerate() {
            let bad = |msg: String| Error::Codec(format!("trace line {}: {msg}", idx + 1));
            if let Some(c) = line.strip_prefix('#') {
                if trace.comment.is_none() && !header_seen {
                    trace.comment = Some(c.trim().to_string());
                }
                continue;
            }
            if !header_seen {
                if line.trim() != TRACE_HEADER {
                    return Err(bad(format!("expected header `{TRACE_HEADER}`")));
                }
                header_seen = true;
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(bad(format!("expected 7 fields, found {}", f.len())));
            }
            let float = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("bad number `{s}`")));
            let int = |s: &str| s.parse::<u64>().map_err(|_| bad(format!("bad integer `{s}`")));
            trace.rows.push(TraceRow {
                s: int(f[0])? as usize,
                gap: float(f[1])?,
                dist: float(f[2])?,
                gamma: float(f[3])?,
                bits_cum: int(f[4])?,
                overflows: int(f[5])?,
                edge_clamps: int(f[6])?,
            });
        }
        if !header_seen {
            return Err(Error::Codec("trace has no header".into()));
        }
        Ok(trace)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        if let Some(c) = &self.comment {
            let _ = writeln!(out, "# {c}");
        }
        out.push_str(TRACE_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:e},{:e},{:e},{},{},{}",
                r.s, r.gap, r.dist, r.gamma, r.bits_cum, r.overflows, r.edge_clamps
            );
        }
        out
    }
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Inexact Prox-SVRG. The inner loop starts from `x^{s_0} = x̃^s` and the
/// next anchor averages `x^{s_1}, …, x^{s_T}`.
pub fn inexact_prox_svrg(
    inst: &ProblemInstance,
    x_star: &[f64],
    opts: &SvrgOptions,
    injector: &ErrorInjector,
) -> Result<Trace> {
    let p = inst.dim();
    check_dim(p, x_star.len())?;
    let (eta, inner, outer) = (opts.eta, opts.inner, opts.outer);
    check_step(eta, inst.smoothness().l_bar, inner, opts.force)?;
    injector.validate(p, inner, outer)?;

    let mut selector = Selector::new(opts.selection_seed, inst.node_count());
    let mut noise = rng::stream(opts.injector_seed, Purpose::Injector, 0, 0, 0);
    let mut trace = Trace::default();
    let mut x_tilde = vec![0.0; p];
    let mut e = vec![0.0; p];

    for s in 0..=outer {
        let gap = inst.objective_gap(&x_tilde, x_star)?;
        let dist = distance(&x_tilde, x_star);
        trace.rows.push(TraceRow { s, gap, dist, gamma: 0.0, bits_cum: 0, overflows: 0, edge_clamps: 0 });
        trace.anchors.push(x_tilde.clone());
        if s == outer {
            break;
        }
        let g = inst.full_gradient(&x_tilde)?;
        let mut x = x_tilde.clone();
        let mut sum = vec![0.0; p];
        let mut gamma = 0.0;
        for t in 0..inner {
            let l = selector.draw();
            trace.selections.push(l);
            let mut v = svrg_direction(inst, l, &x, &x_tilde, &g)?;
            let injected = match injector {
                ErrorInjector::None => None,
                ErrorInjector::GaussianDecaying { sigma0, kappa_e } => {
                    let sd = sigma0 * kappa_e.powf(s as f64 / 2.0) / (p as f64).sqrt();
                    for ek in e.iter_mut() {
                        let z: f64 = StandardNormal.sample(&mut noise);
                        *ek = sd * z;
                    }
                    Some(&e[..])
                }
                ErrorInjector::Replay(seq) => Some(&seq[s * inner + t][..]),
            };
            if let Some(err) = injected {
                for (vk, ek) in v.iter_mut().zip(err) {
                    *vk += ek;
                }
                gamma += err.iter().map(|v| v * v).sum::<f64>();
            }
            for (xk, vk) in x.iter_mut().zip(&v) {
                *xk -= eta * vk;
            }
            inst.prox_in_place(&mut x, eta)?;
            for (acc, xk) in sum.iter_mut().zip(&x) {
                *acc += xk;
            }
            if opts.record_iterates {
                trace.iterates.push(x.clone());
            }
        }
        trace.rows[s].gamma = gamma;
        let tf = inner as f64;
        x_tilde = sum.iter().map(|v| v / tf).collect();
    }
    Ok(trace)
}

/// `α` and `β` of the inexact Prox-SVRG rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theorem1Constants {
    pub alpha: f64,
    pub beta: f64,
}

impl Theorem1Constants {
    /// A contraction factor `α ≥ 1` carries no guarantee.
    pub fn applicable(&self) -> bool {
        self.alpha < 1.0
    }
}

/// `α = 1/(μη(1−4L̄η)T) + 4L̄η(T+1)/((1−4L̄η)T)`, `β = η/(T(1−4L̄η))`.
pub fn theorem1_constants(mu: f64, l_bar: f64, eta: f64, inner: usize) -> Result<Theorem1Constants> {
    if !(mu > 0.0) {
        return Err(Error::NotStronglyConvex(format!("mu = {mu}")));
    }
    let q = 1.0 - 4.0 * l_bar * eta;
    if !(eta > 0.0) || !(q > 0.0) || inner == 0 {
        return Err(Error::Precondition(format!("0 < eta < 1/(4 L_bar) violated: eta = {eta}, L_bar = {l_bar}")));
    }
    let t = inner as f64;
    let alpha = 1.0 / (mu * eta * q * t) + 4.0 * l_bar * eta * (t + 1.0) / (q * t);
    let beta = eta / (t * q);
    Ok(Theorem1Constants { alpha, beta })
}

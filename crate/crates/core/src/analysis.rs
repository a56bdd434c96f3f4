//! Convergence constants, error-energy envelopes and fitted empirical rates.

use std::fmt::Write as _;

use crate::central::{theorem1_constants, Theorem1Constants, Trace};
use crate::distributed::{outer_error_term, step_error, QuantLog};
use crate::error::{Error, Result};
use crate::problem::ProblemInstance;

/// Inputs of the quantized rate envelope.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeParams {
    pub nodes: usize,
    /// `D = max_i |𝒩(i)|`
    pub max_degree: usize,
    pub inner: usize,
    pub block_dim: f64,
    /// `None` when quantization is bypassed; the noise constant is then zero.
    pub bits: Option<u8>,
    pub l_bar: f64,
    pub mu: f64,
    pub eta: f64,
    pub kappa: f64,
    /// `C_a, C_b, C_c, C_d`
    pub intervals: [f64; 4],
}

impl EnvelopeParams {
    pub fn theorem1(&self) -> Result<Theorem1Constants> {
        theorem1_constants(self.mu, self.l_bar, self.eta, self.inner)
    }

    /// `α` and `β`, provided `α < κ < 1`.
    pub fn checked(&self) -> Result<Theorem1Constants> {
        let c = self.theorem1()?;
        if !(self.kappa < 1.0) {
            return Err(Error::Precondition(format!("kappa < 1 violated: kappa = {}", self.kappa)));
        }
        if !(c.alpha < self.kappa) {
            return Err(Error::EnvelopeInapplicable { alpha: c.alpha, kappa: self.kappa });
        }
        Ok(c)
    }
}

/// `C = D·T·m̄/(12(2ⁿ−1)²) · (2L̄²(C_a + C_c) + 2((N+1)/N)C_b + C_d)`,
/// the bound `Γ^{(s)} ≤ C κ^s` on the per-round error energy.
pub fn gamma_bound_c(p: &EnvelopeParams) -> f64 {
    let Some(bits) = p.bits else { return 0.0 };
    let levels = 2f64.powi(i32::from(bits)) - 1.0;
    let [ca, cb, cc, cd] = p.intervals;
    let n = p.nodes as f64;
    let scale = p.max_degree as f64 * p.inner as f64 * p.block_dim / (12.0 * levels * levels);
    scale * (2.0 * p.l_bar * p.l_bar * (ca + cc) + 2.0 * ((n + 1.0) / n) * cb + cd)
}

/// `κ^s (G0 + βC/(1 − α/κ))`
pub fn envelope(p: &EnvelopeParams, s: usize, g0_gap: f64) -> Result<f64> {
    let c = p.checked()?;
    let noise = c.beta * gamma_bound_c(p) / (1.0 - c.alpha / p.kappa);
    Ok(p.kappa.powi(s as i32) * (g0_gap + noise))
}

/// `Γ̂^{(s)}`, summed over the logged round.
pub fn error_energy(log: &QuantLog, inst: &ProblemInstance, s: usize) -> Result<f64> {
    log.error_energy(inst, s)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    /// Per-step contraction `exp(slope)`.
    pub rho: f64,
    /// Least-squares slope of `log(value)` against the index.
    pub slope: f64,
    pub r_squared: f64,
    /// Number of leading points used.
    pub points: usize,
}

/// Least-squares fit of `log(series[k]) ≈ a + k·log ρ` over the leading
/// window of values above ten times the final value (the noise floor).
pub fn fit_linear_rate(series: &[f64]) -> Result<RateFit> {
    const MIN_POINTS: usize = 5;
    let last = *series.last().ok_or_else(|| Error::FitRefused("empty series".into()))?;
    let floor = 10.0 * last.max(0.0);
    let points = series.iter().take_while(|&&v| v > floor && v > 0.0 && v.is_finite()).count();
    if points < MIN_POINTS {
        return Err(Error::FitRefused(format!("{points} points above the floor, need {MIN_POINTS}")));
    }
    let k: Vec<f64> = (0..points).map(|i| i as f64).collect();
    let y: Vec<f64> = series[..points].iter().map(|v| v.ln()).collect();
    let nf = points as f64;
    let (mk, my) = (k.iter().sum::<f64>() / nf, y.iter().sum::<f64>() / nf);
    let sxy: f64 = k.iter().zip(&y).map(|(a, b)| (a - mk) * (b - my)).sum();
    let sxx: f64 = k.iter().map(|a| (a - mk) * (a - mk)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(RateFit { rho: slope.exp(), slope, r_squared, points })
}

/// Observed and bounded mean error energy of one logged round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecondMoment {
    pub observed: f64,
    pub bound: f64,
}

impl SecondMoment {
    pub fn holds(&self, slack: f64) -> bool {
        self.observed <= slack * self.bound
    }
}

fn sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Compares `mean_t ‖e^{s_t}‖²` with
/// `2L̄²Σ_c + 2L̄²Σ_a + E‖d‖² + 2E‖b_ℓ‖² + (2/N²) Σ_i ‖b_i‖²`,
/// expectations replaced by means over the round.
pub fn second_moment_check(log: &QuantLog, inst: &ProblemInstance, s: usize, l_bar: f64) -> Result<SecondMoment> {
    let round = log.rounds.get(s).ok_or_else(|| Error::MissingLog(format!("outer round {s}")))?;
    if round.steps.is_empty() {
        return Err(Error::MissingLog(format!("inner steps of round {s}")));
    }
    let shared = outer_error_term(inst, round)?;
    let t = round.steps.len() as f64;
    let n = inst.node_count() as f64;
    let mut observed = 0.0;
    let (mut sc, mut sd, mut sbl) = (0.0, 0.0, 0.0);
    for step in &round.steps {
        observed += sq(&step_error(inst, round, step, &shared)?);
        sc += sq(&step.c);
        sd += sq(&step.d);
        sbl += sq(&round.b[step.l]);
    }
    let sa: f64 = round.a.iter().map(|a| sq(a)).sum();
    let sb: f64 = round.b.iter().map(|b| sq(b)).sum();
    let l2 = l_bar * l_bar;
    let bound = 2.0 * l2 * sc / t + 2.0 * l2 * sa + sd / t + 2.0 * sbl / t + 2.0 / (n * n) * sb;
    Ok(SecondMoment { observed: observed / t, bound })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisRow {
    pub s: usize,
    pub gap: f64,
    pub envelope: Option<f64>,
    pub gamma: f64,
    pub gamma_bound: f64,
}

/// Constants, fitted rates and envelope verdicts for one trace.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisReport {
    pub alpha: f64,
    pub beta: f64,
    pub c: f64,
    pub kappa: f64,
    pub envelope_applicable: bool,
    /// Fitted on the gap from `s = 1`, the first iterate the method produced.
    pub gap_fit: std::result::Result<RateFit, String>,
    pub gamma_fit: std::result::Result<RateFit, String>,
    pub overflows: u64,
    pub rows: Vec<AnalysisRow>,
}

impl AnalysisReport {
    pub fn gap_within_envelope(&self) -> Option<bool> {
        self.envelope_applicable.then(|| self.rows.iter().all(|r| r.envelope.is_none_or(|e| r.gap <= e)))
    }

    pub fn gamma_within_bound(&self, slack: f64) -> bool {
        self.rows.iter().take(self.rows.len().saturating_sub(1)).all(|r| r.gamma <= slack * r.gamma_bound)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("s,gap,envelope,gamma,gamma_bound\n");
        for r in &self.rows {
            let env = r.envelope.map_or_else(String::new, |e| format!("{e:e}"));
            let _ = writeln!(out, "{},{:e},{},{:e},{:e}", r.s, r.gap, env, r.gamma, r.gamma_bound);
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "alpha = {:.6}", self.alpha);
        let _ = writeln!(out, "beta = {:e}", self.beta);
        let _ = writeln!(out, "C = {:e}", self.c);
        let _ = writeln!(out, "kappa = {}", self.kappa);
        let _ = writeln!(out, "overflow events = {}", self.overflows);
        let verdict = |f: &std::result::Result<RateFit, String>| match f {
            Ok(f) => format!("rho = {:.6} (R^2 = {:.4}, {} points)", f.rho, f.r_squared, f.points),
            Err(e) => format!("refused: {e}"),
        };
        let _ = writeln!(out, "gap rate: {}", verdict(&self.gap_fit));
        if let Ok(f) = &self.gap_fit {
            let _ = writeln!(out, "gap rate <= alpha: {}", f.rho <= self.alpha);
        }
        let _ = writeln!(out, "gamma rate: {}", verdict(&self.gamma_fit));
        match self.gap_within_envelope() {
            Some(ok) => {
                let _ = writeln!(out, "gap within envelope: {}", if ok { "PASS" } else { "FAIL" });
            }
            None => {
                let _ = writeln!(out, "gap within envelope: not applicable (alpha >= kappa)");
            }
        }
        let _ = writeln!(out, "gamma within 1.1 C kappa^s: {}", if self.gamma_within_bound(1.1) { "PASS" } else { "FAIL" });
        out
    }
}

pub fn analyze(trace: &Trace, p: &EnvelopeParams) -> Result<AnalysisReport> {
    let Theorem1Constants { alpha, beta } = p.theorem1()?;
    let c = gamma_bound_c(p);
    let applicable = p.checked().is_ok();
    let g0 = trace.rows.first().map_or(0.0, |r| r.gap);
    let rows = trace
        .rows
        .iter()
        .map(|r| {
            Ok(AnalysisRow {
                s: r.s,
                gap: r.gap,
                envelope: if applicable { Some(envelope(p, r.s, g0)?) } else { None },
                gamma: r.gamma,
                gamma_bound: c * p.kappa.powi(r.s as i32),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let gaps = trace.gaps();
    let gap_fit = fit_linear_rate(gaps.get(1..).unwrap_or(&[])).map_err(|e| e.to_string());
    let gammas: Vec<f64> = trace.rows.iter().take(trace.rows.len().saturating_sub(1)).map(|r| r.gamma).collect();
    let gamma_fit = fit_linear_rate(&gammas).map_err(|e| e.to_string());
    Ok(AnalysisReport {
        alpha,
        beta,
        c,
        kappa: p.kappa,
        envelope_applicable: applicable,
        gap_fit,
        gamma_fit,
        overflows: trace.total_overflows(),
        rows,
    })
}

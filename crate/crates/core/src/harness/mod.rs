//! Configuration, experiment orchestration and the command-line front end.

pub mod cli;
mod config;

use std::fmt::Write as _;
use std::fs::File;
use std::io::BufReader;

pub use config::{parse_bits, RunConfig};

use crate::analysis::{fit_linear_rate, EnvelopeParams, RateFit};
use crate::central::{
    check_step, exact_reference, inexact_prox_svrg, theorem1_constants, ErrorInjector, SvrgOptions, Theorem1Constants,
    Trace,
};
use crate::distributed::{run_distributed, DistributedConfig, DistributedRun, QuantConfig};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::problem::{generate_instance, load_instance, InstanceSpec, ProblemInstance, SmoothnessReport};
use crate::rng::{derive_seed, Purpose};

/// An instance with everything a run needs computed once.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub inst: ProblemInstance,
    pub smoothness: SmoothnessReport,
    pub x_star: Vec<f64>,
    pub eta: f64,
    pub inner: usize,
    /// `None` when `G` is not certifiably strongly convex.
    pub theorem1: Option<Theorem1Constants>,
    pub warnings: Vec<String>,
}

pub fn load_or_generate(cfg: &RunConfig) -> Result<ProblemInstance> {
    let inst = match &cfg.instance {
        Some(path) => load_instance(&mut BufReader::new(File::open(path)?))?,
        None => generate_instance(&InstanceSpec {
            nodes: cfg.nodes,
            degree: cfg.degree,
            block_dim: cfg.block_dim,
            rows: cfg.rows,
            regularizer: cfg.regularizer()?,
            seed: cfg.instance_seed(),
        })?,
    };
    Ok(inst)
}

/// Builds the instance, checks the step-size precondition, evaluates the
/// rate constants and solves for `x*`.
pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let inst = load_or_generate(cfg)?;
    let smoothness = inst.smoothness();
    let eta = cfg.step.unwrap_or(cfg.step_multiplier / smoothness.l_bar);
    let inner = cfg.inner.unwrap_or(cfg.inner_multiplier * inst.node_count());
    check_step(eta, smoothness.l_bar, inner, cfg.force)?;
    let mut warnings = Vec::new();
    let theorem1 = match theorem1_constants(smoothness.mu, smoothness.l_bar, eta, inner) {
        Ok(c) => {
            if !c.applicable() {
                warnings.push(format!("alpha = {} >= 1: no linear-rate guarantee", c.alpha));
            }
            Some(c)
        }
        Err(e) => {
            warnings.push(e.to_string());
            None
        }
    };
    let x_star = exact_reference(&inst, None, cfg.reference_tol, cfg.reference_max_iter)?;
    Ok(Prepared { inst, smoothness, x_star, eta, inner, theorem1, warnings })
}

fn seed_from(master: u64, purpose: Purpose) -> u64 {
    u64::from_le_bytes(derive_seed(master, purpose, 0, 0, 0)[..8].try_into().unwrap())
}

impl Prepared {
    pub fn svrg_options(&self, cfg: &RunConfig) -> SvrgOptions {
        SvrgOptions {
            eta: self.eta,
            inner: self.inner,
            outer: cfg.outer,
            selection_seed: cfg.selection_seed(),
            injector_seed: cfg.injector_seed(),
            force: cfg.force,
            record_iterates: false,
        }
    }

    pub fn distributed_config(&self, cfg: &RunConfig) -> DistributedConfig {
        DistributedConfig {
            svrg: self.svrg_options(cfg),
            quant: cfg.bits.map(|bits| QuantConfig {
                bits,
                kappa: cfg.kappa,
                intervals: [cfg.c_a, cfg.c_b, cfg.c_c, cfg.c_d],
                dither_seed: cfg.dither_seed(),
            }),
            keep_log: cfg.keep_log,
        }
    }

    pub fn envelope_params(&self, cfg: &RunConfig) -> EnvelopeParams {
        let n = self.inst.node_count();
        EnvelopeParams {
            nodes: n,
            max_degree: self.inst.graph().max_degree(),
            inner: self.inner,
            block_dim: self.inst.dim() as f64 / n as f64,
            bits: cfg.bits,
            l_bar: self.smoothness.l_bar,
            mu: self.smoothness.mu,
            eta: self.eta,
            kappa: cfg.kappa,
            intervals: [cfg.c_a, cfg.c_b, cfg.c_c, cfg.c_d],
        }
    }

    pub fn run_central(&self, cfg: &RunConfig) -> Result<Trace> {
        let mut trace = inexact_prox_svrg(&self.inst, &self.x_star, &self.svrg_options(cfg), &cfg.injector()?)?;
        trace.comment = Some(cfg.provenance());
        Ok(trace)
    }

    pub fn run_distributed(&self, cfg: &RunConfig) -> Result<DistributedRun> {
        let mut run = run_distributed(&self.inst, &self.x_star, &self.distributed_config(cfg))?;
        run.trace.comment = Some(cfg.provenance());
        Ok(run)
    }

    /// One distributed run per seed on this instance; each seed replaces the
    /// master seed and with it the selection and dither streams.
    pub fn sweep_distributed(&self, cfg: &RunConfig, seeds: &[u64], exec: Execution) -> Result<Vec<DistributedRun>> {
        exec.map(seeds.len(), |k| self.run_distributed(&reseeded(cfg, seeds[k]))).into_iter().collect()
    }

    pub fn sweep_central(
        &self,
        cfg: &RunConfig,
        seeds: &[u64],
        injector: &ErrorInjector,
        exec: Execution,
    ) -> Result<Vec<Trace>> {
        exec.map(seeds.len(), |k| {
            let c = reseeded(cfg, seeds[k]);
            let mut trace = inexact_prox_svrg(&self.inst, &self.x_star, &self.svrg_options(&c), injector)?;
            trace.comment = Some(c.provenance());
            Ok(trace)
        })
        .into_iter()
        .collect()
    }
}

/// `cfg` with run streams drawn from `seed`; the instance is unchanged.
pub fn reseeded(cfg: &RunConfig, seed: u64) -> RunConfig {
    RunConfig {
        instance_seed: Some(cfg.instance_seed()),
        selection_seed: Some(seed_from(seed, Purpose::Selection)),
        dither_seed: Some(seed_from(seed, Purpose::DitherA)),
        injector_seed: Some(seed_from(seed, Purpose::Injector)),
        master_seed: seed,
        ..cfg.clone()
    }
}

/// Componentwise mean of `f` over the rows of several traces.
pub fn mean_series(traces: &[&Trace], f: impl Fn(&crate::central::TraceRow) -> f64) -> Vec<f64> {
    let len = traces.iter().map(|t| t.rows.len()).min().unwrap_or(0);
    (0..len).map(|s| traces.iter().map(|t| f(&t.rows[s])).sum::<f64>() / traces.len() as f64).collect()
}

#[derive(Debug, Clone)]
pub struct Fig1Series {
    pub label: String,
    pub bits: Option<u8>,
    pub trace: Trace,
}

impl Fig1Series {
    /// Mean gap over the last ten rows.
    pub fn floor(&self) -> f64 {
        let gaps = self.trace.gaps();
        let tail = &gaps[gaps.len().saturating_sub(10)..];
        tail.iter().sum::<f64>() / tail.len() as f64
    }

    /// Rate fitted to the gap from `s = 1`.
    pub fn fit(&self) -> Result<RateFit> {
        fit_linear_rate(self.trace.gaps().get(1..).unwrap_or(&[]))
    }
}

/// Gap against outer iteration and cumulative bits for `n ∈ {11, 13, 15}`
/// and an unquantized run on one instance.
#[derive(Debug, Clone)]
pub struct Fig1 {
    pub provenance: String,
    pub alpha: Option<f64>,
    pub series: Vec<Fig1Series>,
}

pub const FIG1_BITS: [Option<u8>; 4] = [Some(11), Some(13), Some(15), None];

pub fn reproduce_fig1(cfg: &RunConfig, exec: Execution) -> Result<Fig1> {
    let prep = prepare(cfg)?;
    reproduce_fig1_with(&prep, cfg, exec)
}

pub fn reproduce_fig1_with(prep: &Prepared, cfg: &RunConfig, exec: Execution) -> Result<Fig1> {
    let runs = exec.map(FIG1_BITS.len(), |k| {
        let c = RunConfig { bits: FIG1_BITS[k], keep_log: false, ..cfg.clone() };
        prep.run_distributed(&c)
    });
    let mut series = Vec::with_capacity(runs.len());
    for (bits, run) in FIG1_BITS.iter().zip(runs) {
        let label = bits.map_or_else(|| "unquantized".to_string(), |b| format!("n={b}"));
        series.push(Fig1Series { label, bits: *bits, trace: run?.trace });
    }
    let base = RunConfig { bits: None, ..cfg.clone() };
    Ok(Fig1 { provenance: base.provenance(), alpha: prep.theorem1.map(|c| c.alpha), series })
}

impl Fig1 {
    pub fn to_csv(&self) -> String {
        let mut out = format!("# {}\nseries,bits,s,bits_cum,gap,dist\n", self.provenance);
        for series in &self.series {
            let bits = series.bits.map_or_else(|| "unquantized".to_string(), |b| b.to_string());
            for r in &series.trace.rows {
                let _ = writeln!(out, "{},{},{},{},{:e},{:e}", series.label, bits, r.s, r.bits_cum, r.gap, r.dist);
            }
        }
        out
    }

    /// Floors strictly decrease along `n = 11, 13, 15, unquantized`.
    pub fn floors_ordered(&self) -> bool {
        self.series.windows(2).all(|w| w[0].floor() > w[1].floor())
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        if let Some(a) = self.alpha {
            let _ = writeln!(out, "alpha = {a:.6}");
        }
        for s in &self.series {
            let fit = match s.fit() {
                Ok(f) => format!("rho = {:.6} over {} points", f.rho, f.points),
                Err(e) => e.to_string(),
            };
            let _ = writeln!(
                out,
                "{:<12} floor = {:e}  bits = {}  overflows = {}  {fit}",
                s.label,
                s.floor(),
                s.trace.rows.last().map_or(0, |r| r.bits_cum),
                s.trace.total_overflows()
            );
        }
        let _ = writeln!(out, "floors ordered: {}", self.floors_ordered());
        out
    }
}

/// Maps an error to the process exit code: 2 for configuration errors,
/// 3 for violated preconditions, 1 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } => 2,
        Error::Precondition(_) => 3,
        _ => 1,
    }
}

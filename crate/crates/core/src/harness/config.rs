//! Flat `key = value` run configuration.

use std::fmt::Write as _;
use std::path::PathBuf;

use sha2::{Digest, Sha256};

use crate::central::ErrorInjector;
use crate::error::{Error, Result};
use crate::problem::Regularizer;
use crate::rng::{derive_seed, Purpose};

/// Every tunable of a run. Optional seeds default to values derived from
/// `master_seed`; `step` and `inner` default to multiples of `1/L̄` and `N`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub nodes: usize,
    pub degree: usize,
    pub block_dim: usize,
    pub rows: usize,
    /// `elastic_net`, `l1`, `squared_l2` or `group_lasso`.
    pub regularizer: String,
    pub lambda1: f64,
    pub lambda2: f64,
    pub step: Option<f64>,
    pub step_multiplier: f64,
    pub inner: Option<usize>,
    pub inner_multiplier: usize,
    pub outer: usize,
    /// `None` runs without quantization.
    pub bits: Option<u8>,
    pub kappa: f64,
    pub c_a: f64,
    pub c_b: f64,
    pub c_c: f64,
    pub c_d: f64,
    pub master_seed: u64,
    pub instance_seed: Option<u64>,
    pub selection_seed: Option<u64>,
    pub dither_seed: Option<u64>,
    pub injector_seed: Option<u64>,
    /// `none` or `gaussian`.
    pub injector: String,
    pub sigma0: f64,
    pub kappa_e: f64,
    pub reference_tol: f64,
    pub reference_max_iter: usize,
    pub keep_log: bool,
    /// Load the instance from a container instead of generating it.
    pub instance: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub force: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            nodes: 40,
            degree: 8,
            block_dim: 10,
            rows: 80,
            regularizer: "elastic_net".into(),
            lambda1: 0.1,
            lambda2: 10.0,
            step: None,
            step_multiplier: 0.1,
            inner: None,
            inner_multiplier: 2,
            outer: 200,
            bits: Some(11),
            kappa: 0.97,
            c_a: 50.0,
            c_b: 300.0,
            c_c: 50.0,
            c_d: 400.0,
            master_seed: 1,
            instance_seed: None,
            selection_seed: None,
            dither_seed: None,
            injector_seed: None,
            injector: "none".into(),
            sigma0: 1.0,
            kappa_e: 0.9,
            reference_tol: 1e-12,
            reference_max_iter: 1_000_000,
            keep_log: false,
            instance: None,
            out: None,
            force: false,
        }
    }
}

fn derived(master: u64, purpose: Purpose) -> u64 {
    u64::from_le_bytes(derive_seed(master, purpose, 0, 0, 0)[..8].try_into().unwrap())
}

fn parse<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config { line, message: format!("cannot parse `{value}` as the value of `{key}`") })
}

fn parse_bool(line: usize, key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config { line, message: format!("cannot parse `{value}` as the value of `{key}`") }),
    }
}

/// `unquantized` or a bit count.
pub fn parse_bits(value: &str) -> Option<Option<u8>> {
    if value == "unquantized" {
        Some(None)
    } else {
        value.parse().ok().map(Some)
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(Error::Config { line, message: format!("expected `key = value`: {raw}") });
            };
            cfg.set(line, key.trim(), value.trim(), raw)?;
        }
        Ok(cfg)
    }

    fn set(&mut self, line: usize, key: &str, value: &str, raw: &str) -> Result<()> {
        let opt = |v: &str| v.is_empty() || v == "auto";
        match key {
            "nodes" => self.nodes = parse(line, key, value)?,
            "degree" => self.degree = parse(line, key, value)?,
            "block_dim" => self.block_dim = parse(line, key, value)?,
            "rows" => self.rows = parse(line, key, value)?,
            "regularizer" => self.regularizer = value.to_string(),
            "lambda1" => self.lambda1 = parse(line, key, value)?,
            "lambda2" => self.lambda2 = parse(line, key, value)?,
            "step" => self.step = if opt(value) { None } else { Some(parse(line, key, value)?) },
            "step_multiplier" => self.step_multiplier = parse(line, key, value)?,
            "inner" => self.inner = if opt(value) { None } else { Some(parse(line, key, value)?) },
            "inner_multiplier" => self.inner_multiplier = parse(line, key, value)?,
            "outer" => self.outer = parse(line, key, value)?,
            "bits" => {
                self.bits = parse_bits(value).ok_or_else(|| Error::Config {
                    line,
                    message: format!("`bits` must be an integer or `unquantized`, got `{value}`"),
                })?
            }
            "kappa" => self.kappa = parse(line, key, value)?,
            "c_a" => self.c_a = parse(line, key, value)?,
            "c_b" => self.c_b = parse(line, key, value)?,
            "c_c" => self.c_c = parse(line, key, value)?,
            "c_d" => self.c_d = parse(line, key, value)?,
            "master_seed" => self.master_seed = parse(line, key, value)?,
            "instance_seed" => self.instance_seed = if opt(value) { None } else { Some(parse(line, key, value)?) },
            "selection_seed" => self.selection_seed = if opt(value) { None } else { Some(parse(line, key, value)?) },
            "dither_seed" => self.dither_seed = if opt(value) { None } else { Some(parse(line, key, value)?) },
            "injector_seed" => self.injector_seed = if opt(value) { None } else { Some(parse(line, key, value)?) },
            "injector" => self.injector = value.to_string(),
            "sigma0" => self.sigma0 = parse(line, key, value)?,
            "kappa_e" => self.kappa_e = parse(line, key, value)?,
            "reference_tol" => self.reference_tol = parse(line, key, value)?,
            "reference_max_iter" => self.reference_max_iter = parse(line, key, value)?,
            "keep_log" => self.keep_log = parse_bool(line, key, value)?,
            "instance" => self.instance = if value.is_empty() { None } else { Some(value.into()) },
            "out" => self.out = if value.is_empty() { None } else { Some(value.into()) },
            "force" => self.force = parse_bool(line, key, value)?,
            _ => return Err(Error::Config { line, message: format!("unknown key `{key}`: {}", raw.trim_end()) }),
        }
        Ok(())
    }

    pub fn regularizer(&self) -> Result<Regularizer> {
        let r = match self.regularizer.as_str() {
            "elastic_net" => Regularizer::ElasticNet { lambda1: self.lambda1, lambda2: self.lambda2 },
            "l1" => Regularizer::L1 { lambda: self.lambda1 },
            "squared_l2" => Regularizer::SquaredL2 { lambda: self.lambda2 },
            "group_lasso" => Regularizer::GroupLassoPerNode { lambda: self.lambda1 },
            other => {
                return Err(Error::Parameter(format!(
                    "unknown regularizer `{other}` (expected elastic_net, l1, squared_l2 or group_lasso)"
                )))
            }
        };
        r.validate()?;
        Ok(r)
    }

    pub fn injector(&self) -> Result<ErrorInjector> {
        match self.injector.as_str() {
            "none" => Ok(ErrorInjector::None),
            "gaussian" => Ok(ErrorInjector::GaussianDecaying { sigma0: self.sigma0, kappa_e: self.kappa_e }),
            other => Err(Error::Parameter(format!("unknown injector `{other}` (expected none or gaussian)"))),
        }
    }

    pub fn instance_seed(&self) -> u64 {
        self.instance_seed.unwrap_or_else(|| derived(self.master_seed, Purpose::Graph))
    }

    pub fn selection_seed(&self) -> u64 {
        self.selection_seed.unwrap_or_else(|| derived(self.master_seed, Purpose::Selection))
    }

    pub fn dither_seed(&self) -> u64 {
        self.dither_seed.unwrap_or_else(|| derived(self.master_seed, Purpose::DitherA))
    }

    pub fn injector_seed(&self) -> u64 {
        self.injector_seed.unwrap_or_else(|| derived(self.master_seed, Purpose::Injector))
    }

    /// Canonical `key = value` text of every field except the output path,
    /// with derived seeds written out.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        let opt_f = |v: Option<f64>| v.map_or_else(|| "auto".to_string(), |v| format!("{v:e}"));
        let opt_u = |v: Option<usize>| v.map_or_else(|| "auto".to_string(), |v| v.to_string());
        let bits = self.bits.map_or_else(|| "unquantized".to_string(), |b| b.to_string());
        let instance = self.instance.as_ref().map_or_else(String::new, |p| p.display().to_string());
        let fields: Vec<(&str, String)> = vec![
            ("nodes", self.nodes.to_string()),
            ("degree", self.degree.to_string()),
            ("block_dim", self.block_dim.to_string()),
            ("rows", self.rows.to_string()),
            ("regularizer", self.regularizer.clone()),
            ("lambda1", format!("{:e}", self.lambda1)),
            ("lambda2", format!("{:e}", self.lambda2)),
            ("step", opt_f(self.step)),
            ("step_multiplier", format!("{:e}", self.step_multiplier)),
            ("inner", opt_u(self.inner)),
            ("inner_multiplier", self.inner_multiplier.to_string()),
            ("outer", self.outer.to_string()),
            ("bits", bits),
            ("kappa", format!("{:e}", self.kappa)),
            ("c_a", format!("{:e}", self.c_a)),
            ("c_b", format!("{:e}", self.c_b)),
            ("c_c", format!("{:e}", self.c_c)),
            ("c_d", format!("{:e}", self.c_d)),
            ("master_seed", self.master_seed.to_string()),
            ("instance_seed", self.instance_seed().to_string()),
            ("selection_seed", self.selection_seed().to_string()),
            ("dither_seed", self.dither_seed().to_string()),
            ("injector_seed", self.injector_seed().to_string()),
            ("injector", self.injector.clone()),
            ("sigma0", format!("{:e}", self.sigma0)),
            ("kappa_e", format!("{:e}", self.kappa_e)),
            ("reference_tol", format!("{:e}", self.reference_tol)),
            ("reference_max_iter", self.reference_max_iter.to_string()),
            ("keep_log", self.keep_log.to_string()),
            ("instance", instance),
            ("force", self.force.to_string()),
        ];
        for (k, v) in &fields {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// First 16 hex digits of the SHA-256 of [`canonical`](Self::canonical).
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// The leading comment row of every CSV a run writes.
    pub fn provenance(&self) -> String {
        format!(
            "config_hash={} master_seed={} instance_seed={} selection_seed={} dither_seed={} injector_seed={}",
            self.hash(),
            self.master_seed,
            self.instance_seed(),
            self.selection_seed(),
            self.dither_seed(),
            self.injector_seed()
        )
    }
}

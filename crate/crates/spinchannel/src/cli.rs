//! Command-line front end: configuration loading, subcommand dispatch,
//! deterministic parallel execution, and tabular output.
//!
//! Every sweep emits one record per (parameter point, quantity) in CSV
//! (default) or JSON-lines form. Identical configuration and seed yield
//! byte-identical output for any thread count: estimators accumulate in
//! fixed chunks and all reductions fold in index order.
//!
//! Times are the dimensionless `J t` of the physics; site, bond and qubit
//! indices are 1-based inside the library and 0-based in serialized
//! configuration and output.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::analysis::{
    self, fidelity_difference_scan, gaussian_rate_with_threshold, rate_scan, revival_period,
    RateQuantity, RateScanConfig,
};
use crate::channel;
use crate::echo::EchoEngine;
use crate::error::{Error, Result};
use crate::freefermion::ZeroModePolicy;
use crate::model::{BasisString, ModelParams};
use crate::oracle;

pub const DEFAULT_SEED: u64 = 42;

/// One output row: parameters, quantity name, value and statistics.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SweepRecord {
    pub n: usize,
    pub m: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub coupling: f64,
    pub epsilon: f64,
    /// Dimensionless time J t.
    pub t: f64,
    pub quantity: String,
    pub value: f64,
    /// 0 for exact computations.
    pub std_error: f64,
    /// 0 for exact computations.
    pub n_samples: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyArg {
    #[default]
    Reject,
    LeaveEmpty,
}

impl From<PolicyArg> for ZeroModePolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Reject => ZeroModePolicy::Reject,
            PolicyArg::LeaveEmpty => ZeroModePolicy::LeaveEmpty,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum QuantityArg {
    Fidelity,
    Purity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum PresetArg {
    #[default]
    Desk,
    Full,
}

// ---------- configuration ----------

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub n_qubits: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub coupling: f64,
    pub epsilon: f64,
    pub spacing: usize,
    /// 0-based bond indices; bond b couples (0-based) sites b and b+1.
    pub broken_bonds: Vec<usize>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            n_qubits: 8,
            gamma: 1.0,
            lambda: 1.0,
            coupling: 1.0,
            epsilon: 0.05,
            spacing: 0,
            broken_bonds: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    /// Largest dimensionless time J t.
    pub time_max: f64,
    /// Number of steps; the grid is 0..=time_max inclusive.
    pub time_steps: usize,
    /// Explicit lambda grid for scans; empty means derive from the range.
    pub lambda_values: Vec<f64>,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub lambda_step: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            time_max: 10.0,
            time_steps: 40,
            lambda_values: Vec::new(),
            lambda_min: 0.5,
            lambda_max: 1.5,
            lambda_step: 0.05,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingSection {
    /// 0 requests exact averages (guarded by the qubit limit).
    pub n_samples: u64,
    pub seed: u64,
}

impl Default for SamplingSection {
    fn default() -> Self {
        Self {
            n_samples: 10_000,
            seed: DEFAULT_SEED,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub threads: usize,
    pub output: Option<PathBuf>,
    pub format: OutputFormat,
    pub zero_mode_policy: PolicyArg,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            threads: 1,
            output: None,
            format: OutputFormat::Csv,
            zero_mode_policy: PolicyArg::Reject,
        }
    }
}

/// Full run configuration; the TOML file mirrors this structure.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub grid: GridSection,
    pub sampling: SamplingSection,
    pub run: RunSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn model_params(&self) -> Result<ModelParams> {
        let m = &self.model;
        let params = ModelParams::new(m.n_qubits, m.gamma, m.lambda, m.coupling, m.epsilon, m.spacing)?;
        // serialized bonds are 0-based
        params.with_broken_bonds(m.broken_bonds.iter().map(|&b| b + 1))
    }

    pub fn policy(&self) -> ZeroModePolicy {
        self.run.zero_mode_policy.into()
    }

    /// Dimensionless time grid 0..=time_max.
    pub fn jt_grid(&self) -> Vec<f64> {
        let steps = self.grid.time_steps.max(1);
        (0..=steps)
            .map(|i| self.grid.time_max * i as f64 / steps as f64)
            .collect()
    }

    /// Physical times corresponding to the J t grid.
    pub fn time_grid(&self) -> Vec<f64> {
        let j = self.model.coupling;
        self.jt_grid().into_iter().map(|jt| jt / j).collect()
    }

    pub fn lambda_grid(&self) -> Vec<f64> {
        if !self.grid.lambda_values.is_empty() {
            return self.grid.lambda_values.clone();
        }
        let mut out = Vec::new();
        let mut l = self.grid.lambda_min;
        let step = self.grid.lambda_step.max(1e-9);
        while l <= self.grid.lambda_max + 1e-12 {
            out.push((l * 1e12).round() / 1e12);
            l += step;
        }
        out
    }

    fn record(&self, lambda: f64, jt: f64, quantity: &str, value: f64) -> SweepRecord {
        SweepRecord {
            n: self.model.n_qubits,
            m: self.model.spacing,
            gamma: self.model.gamma,
            lambda,
            coupling: self.model.coupling,
            epsilon: self.model.epsilon,
            t: jt,
            quantity: quantity.to_string(),
            value,
            std_error: 0.0,
            n_samples: 0,
            seed: self.sampling.seed,
        }
    }
}

// ---------- argument parsing ----------

#[derive(Debug, Args, Default, Clone)]
pub struct CommonArgs {
    /// TOML configuration file; explicit flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Number of qubits n.
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Spacer spins m between consecutive coupled sites.
    #[arg(long, global = true)]
    pub m: Option<usize>,
    #[arg(long, global = true)]
    pub gamma: Option<f64>,
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    /// Exchange coupling J.
    #[arg(long, global = true)]
    pub coupling: Option<f64>,
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,
    /// Comma-separated 0-based broken bond indices.
    #[arg(long, global = true)]
    pub broken_bonds: Option<String>,
    /// Largest dimensionless time J t.
    #[arg(long, global = true)]
    pub time_max: Option<f64>,
    #[arg(long, global = true)]
    pub time_steps: Option<usize>,
    /// Lambda grid as "min:max:step" or a comma-separated list.
    #[arg(long, global = true)]
    pub lambda_grid: Option<String>,
    /// Sample count; 0 selects the exact average.
    #[arg(long, global = true)]
    pub samples: Option<u64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<OutputFormat>,
    #[arg(long, global = true, value_enum)]
    pub zero_mode_policy: Option<PolicyArg>,
}

#[derive(Debug, Parser)]
#[command(
    name = "spinchannel",
    about = "Correlated-qubit-channel simulator with a spin-chain memory environment",
    version
)]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Loschmidt echoes of one basis-string pair over the time grid.
    Echo {
        /// Basis string over {g,e}, qubit 1 first.
        #[arg(long, default_value = "e")]
        x: String,
        #[arg(long, default_value = "g")]
        y: String,
        /// Dump the full pair matrix at time_max instead (n <= 12).
        #[arg(long)]
        matrix: bool,
    },
    /// Channel fidelity over the time grid (exact or sampled).
    Fidelity,
    /// Choi purity over the time grid (exact or sampled).
    Purity,
    /// Channel entropy and its bounds over the time grid (exact, n <= 12).
    Entropy,
    /// Decay-rate scan over the transverse field.
    ScanLambda {
        #[arg(long, value_enum, default_value = "fidelity")]
        quantity: QuantityArg,
    },
    /// Decay rates versus qubit number at fixed field.
    ScanSize {
        /// Comma-separated qubit numbers.
        #[arg(long, default_value = "4,6,8,10,12")]
        sizes: String,
    },
    /// Generalized-model fidelity differences over spacer counts.
    Generalized {
        /// Comma-separated spacer counts m.
        #[arg(long, default_value = "0,1,2,3,4")]
        m_values: String,
        /// Fixed comparison time J t*.
        #[arg(long, default_value_t = 10.0)]
        t_star: f64,
    },
    /// Fidelity series and first-revival detection.
    Revival,
    /// Monte-Carlo audit of the Haar pair weights (n <= 3).
    HaarCheck {
        #[arg(long, default_value_t = 1_000_000)]
        states: u64,
    },
    /// Randomized validation against the dense many-body oracle.
    OracleVerify {
        #[arg(long, default_value_t = 200)]
        cases: usize,
    },
    /// Plot-ready data for one of the built-in figure presets (3..=7).
    Figure {
        #[arg(long)]
        id: u8,
        #[arg(long, value_enum, default_value = "desk")]
        preset: PresetArg,
    },
    /// Print the effective configuration as TOML.
    DumpConfig,
}

/// Merges the configuration file (if any) with command-line overrides.
pub fn resolve_config(common: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::from_toml(&fs::read_to_string(path)?)?,
        None => RunConfig::default(),
    };
    if let Some(n) = common.n {
        cfg.model.n_qubits = n;
    }
    if let Some(m) = common.m {
        cfg.model.spacing = m;
    }
    if let Some(g) = common.gamma {
        cfg.model.gamma = g;
    }
    if let Some(l) = common.lambda {
        cfg.model.lambda = l;
    }
    if let Some(j) = common.coupling {
        cfg.model.coupling = j;
    }
    if let Some(e) = common.epsilon {
        cfg.model.epsilon = e;
    }
    if let Some(b) = &common.broken_bonds {
        cfg.model.broken_bonds = parse_usize_list(b)?;
    }
    if let Some(t) = common.time_max {
        cfg.grid.time_max = t;
    }
    if let Some(s) = common.time_steps {
        cfg.grid.time_steps = s;
    }
    if let Some(spec) = &common.lambda_grid {
        cfg.grid.lambda_values = parse_lambda_grid(spec)?;
    }
    if let Some(s) = common.samples {
        cfg.sampling.n_samples = s;
    }
    if let Some(s) = common.seed {
        cfg.sampling.seed = s;
    }
    if let Some(t) = common.threads {
        cfg.run.threads = t;
    }
    if let Some(o) = &common.output {
        cfg.run.output = Some(o.clone());
    }
    if let Some(f) = common.format {
        cfg.run.format = f;
    }
    if let Some(p) = common.zero_mode_policy {
        cfg.run.zero_mode_policy = p;
    }
    Ok(cfg)
}

fn parse_usize_list(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|e| Error::Config(format!("bad list entry '{s}': {e}")))
        })
        .collect()
}

fn parse_lambda_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() == 3 {
        let bad = || Error::Config(format!("bad lambda grid '{spec}'"));
        let min: f64 = parts[0].trim().parse().map_err(|_| bad())?;
        let max: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let step: f64 = parts[2].trim().parse().map_err(|_| bad())?;
        if step <= 0.0 || max < min {
            return Err(bad());
        }
        let mut out = Vec::new();
        let mut l = min;
        while l <= max + 1e-12 {
            out.push((l * 1e12).round() / 1e12);
            l += step;
        }
        Ok(out)
    } else {
        spec.split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Config(format!("bad lambda value '{s}': {e}")))
            })
            .collect()
    }
}

// ---------- output ----------

/// Serializes records as CSV (with header) or JSON lines.
pub fn render_records(records: &[SweepRecord], format: OutputFormat) -> Result<String> {
    match format {
        OutputFormat::Csv => {
            let mut writer = csv::Writer::from_writer(Vec::new());
            for r in records {
                writer
                    .serialize(r)
                    .map_err(|e| Error::Config(format!("csv: {e}")))?;
            }
            let bytes = writer
                .into_inner()
                .map_err(|e| Error::Config(format!("csv: {e}")))?;
            String::from_utf8(bytes).map_err(|e| Error::Config(format!("csv: {e}")))
        }
        OutputFormat::Json => {
            let mut out = String::new();
            for r in records {
                let line =
                    serde_json::to_string(r).map_err(|e| Error::Config(format!("json: {e}")))?;
                out.push_str(&line);
                out.push('\n');
            }
            Ok(out)
        }
    }
}

fn emit(cfg: &RunConfig, text: &str) -> Result<()> {
    match &cfg.run.output {
        Some(path) => fs::write(path, text).map_err(Error::from),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

// ---------- subcommand implementations ----------

pub fn echo_records(cfg: &RunConfig, x: &str, y: &str, matrix: bool) -> Result<String> {
    let params = cfg.model_params()?;
    let engine = EchoEngine::with_policy(params.clone(), cfg.policy())?;
    let j = cfg.model.coupling;
    let mut out = String::new();
    if matrix {
        let t = cfg.grid.time_max / j;
        let m = engine.echo_matrix(t)?;
        out.push_str("x,y,t,re,im\n");
        for xi in 0..m.nrows() {
            for yi in 0..m.ncols() {
                let xs = BasisString::from_bits(xi as u64, params.n_qubits())?;
                let ys = BasisString::from_bits(yi as u64, params.n_qubits())?;
                let v = m[(xi, yi)];
                let _ = writeln!(out, "{xs},{ys},{},{},{}", cfg.grid.time_max, v.re, v.im);
            }
        }
        return Ok(out);
    }
    let xs = BasisString::from_str(x)?;
    let ys = BasisString::from_str(y)?;
    let times = cfg.time_grid();
    let series = engine.echo_series(xs.bits(), ys.bits(), &times)?;
    out.push_str("x,y,t,re,im\n");
    for (jt, value) in cfg.jt_grid().iter().zip(series) {
        let _ = writeln!(out, "{xs},{ys},{jt},{},{}", value.re, value.im);
    }
    Ok(out)
}

pub fn fidelity_records(cfg: &RunConfig) -> Result<Vec<SweepRecord>> {
    let params = cfg.model_params()?;
    let engine = EchoEngine::with_policy(params, cfg.policy())?;
    let times = cfg.time_grid();
    let jts = cfg.jt_grid();
    let dim = engine.hilbert_dim();
    let lambda = cfg.model.lambda;
    let mut records = Vec::new();
    if cfg.sampling.n_samples == 0 {
        let values = channel::exact_fidelity_series(&engine, &times)?;
        for (&jt, value) in jts.iter().zip(&values) {
            records.push(cfg.record(lambda, jt, "fidelity", *value));
            records.push(cfg.record(
                lambda,
                jt,
                "avg_transmission_fidelity",
                channel::average_transmission_fidelity(*value, dim),
            ));
        }
    } else {
        let estimates = channel::sampled_fidelity_series(
            &engine,
            &times,
            cfg.sampling.n_samples,
            cfg.sampling.seed,
        )?;
        for (&jt, est) in jts.iter().zip(&estimates) {
            let mut rec = cfg.record(lambda, jt, "fidelity", est.value);
            rec.std_error = est.std_error;
            rec.n_samples = est.n_samples;
            records.push(rec);
            let mut avg = cfg.record(
                lambda,
                jt,
                "avg_transmission_fidelity",
                channel::average_transmission_fidelity(est.value, dim),
            );
            avg.std_error = est.std_error * dim / (dim + 2.0);
            avg.n_samples = est.n_samples;
            records.push(avg);
        }
    }
    Ok(records)
}

pub fn purity_records(cfg: &RunConfig) -> Result<Vec<SweepRecord>> {
    let params = cfg.model_params()?;
    let engine = EchoEngine::with_policy(params, cfg.policy())?;
    let times = cfg.time_grid();
    let jts = cfg.jt_grid();
    let dim = engine.hilbert_dim();
    let lambda = cfg.model.lambda;
    let mut records = Vec::new();
    if cfg.sampling.n_samples == 0 {
        let values = channel::exact_purity_series(&engine, &times)?;
        for (&jt, value) in jts.iter().zip(&values) {
            records.push(cfg.record(lambda, jt, "purity", *value));
            records.push(cfg.record(
                lambda,
                jt,
                "avg_output_purity",
                channel::average_output_purity(*value, dim),
            ));
        }
    } else {
        let estimates = channel::sampled_purity_series(
            &engine,
            &times,
            cfg.sampling.n_samples,
            cfg.sampling.seed,
        )?;
        for (&jt, est) in jts.iter().zip(&estimates) {
            let mut rec = cfg.record(lambda, jt, "purity", est.value);
            rec.std_error = est.std_error;
            rec.n_samples = est.n_samples;
            records.push(rec);
            let mut avg = cfg.record(
                lambda,
                jt,
                "avg_output_purity",
                channel::average_output_purity(est.value, dim),
            );
            avg.std_error = est.std_error * dim / (dim + 2.0);
            avg.n_samples = est.n_samples;
            records.push(avg);
        }
    }
    Ok(records)
}

pub fn entropy_records(cfg: &RunConfig) -> Result<Vec<SweepRecord>> {
    let params = cfg.model_params()?;
    let engine = EchoEngine::with_policy(params.clone(), cfg.policy())?;
    let n = params.n_qubits();
    let lambda = cfg.model.lambda;
    let mut records = Vec::new();
    for (&jt, &t) in cfg.jt_grid().iter().zip(&cfg.time_grid()) {
        let entropy = channel::channel_entropy(&engine, t)?;
        let fidelity = channel::exact_fidelity(&engine, t)?;
        let purity = channel::exact_purity(&engine, t)?;
        records.push(cfg.record(lambda, jt, "entropy", entropy));
        records.push(cfg.record(lambda, jt, "hashing_bound", n as f64 - entropy));
        records.push(cfg.record(lambda, jt, "capacity_rate", 1.0 - entropy / n as f64));
        records.push(cfg.record(
            lambda,
            jt,
            "renyi_lower_bound",
            channel::renyi_lower_bound(purity)?,
        ));
        records.push(cfg.record(
            lambda,
            jt,
            "fano_upper_bound",
            channel::fano_upper_bound(fidelity, n),
        ));
        records.push(cfg.record(
            lambda,
            jt,
            "loose_capacity_bound",
            channel::loose_capacity_bound(fidelity, n),
        ));
    }
    Ok(records)
}

fn scan_records_from(
    cfg: &RunConfig,
    scan: &analysis::CriticalityScan,
    rate_name: &str,
) -> Vec<SweepRecord> {
    let mut records = Vec::new();
    let n_samples = cfg.sampling.n_samples;
    for (idx, &lambda) in scan.lambda_grid.iter().enumerate() {
        if let Some(rate) = scan.rates[idx] {
            let mut rec = cfg.record(lambda, 0.0, rate_name, rate);
            rec.n_samples = n_samples;
            records.push(rec);
        }
        if let Some(d) = scan.derivative[idx] {
            let mut rec = cfg.record(lambda, 0.0, &format!("d{rate_name}_dlambda"), d);
            rec.n_samples = n_samples;
            records.push(rec);
        }
    }
    if let Some(peak) = scan.peak_location {
        records.push(cfg.record(peak, 0.0, &format!("d{rate_name}_peak_lambda"), peak));
    }
    records
}

pub fn scan_lambda_records(cfg: &RunConfig, quantity: QuantityArg) -> Result<Vec<SweepRecord>> {
    let params = cfg.model_params()?;
    let (rate_quantity, rate_name) = match quantity {
        QuantityArg::Fidelity => (RateQuantity::Fidelity, "alpha"),
        QuantityArg::Purity => (RateQuantity::Purity, "beta"),
    };
    // fit window calibrated once at the grid midpoint
    let lambda_grid = cfg.lambda_grid();
    let mid = lambda_grid[lambda_grid.len() / 2];
    let probe_engine = EchoEngine::with_policy(params.with_lambda(mid)?, cfg.policy())?;
    let probe_samples = if cfg.sampling.n_samples == 0 {
        2000
    } else {
        cfg.sampling.n_samples
    };
    let times =
        analysis::short_time_grid(&probe_engine, probe_samples, cfg.sampling.seed, 0.88, 12)?;
    let scan = rate_scan(&RateScanConfig {
        base: params,
        lambda_grid,
        times,
        n_samples: cfg.sampling.n_samples,
        seed: cfg.sampling.seed,
        quantity: rate_quantity,
        threshold: analysis::DEFAULT_FIT_THRESHOLD,
        policy: cfg.policy(),
    })?;
    for (lambda, why) in &scan.fit_failures {
        eprintln!("warning: fit failed at lambda = {lambda}: {why}");
    }
    Ok(scan_records_from(cfg, &scan, rate_name))
}

pub fn scan_size_records(cfg: &RunConfig, sizes: &[usize]) -> Result<Vec<SweepRecord>> {
    let mut records = Vec::new();
    for &n in sizes {
        let mut sub = cfg.clone();
        sub.model.n_qubits = n;
        let params = sub.model_params()?;
        let engine = EchoEngine::with_policy(params, sub.policy())?;
        let probe_samples = if sub.sampling.n_samples == 0 {
            2000
        } else {
            sub.sampling.n_samples
        };
        let times =
            analysis::short_time_grid(&engine, probe_samples, sub.sampling.seed, 0.88, 12)?;
        let values: Vec<f64> = if sub.sampling.n_samples == 0 {
            channel::exact_fidelity_series(&engine, &times)?
        } else {
            channel::sampled_fidelity_series(
                &engine,
                &times,
                sub.sampling.n_samples,
                sub.sampling.seed,
            )?
            .into_iter()
            .map(|e| e.value)
            .collect()
        };
        let fit = gaussian_rate_with_threshold(&times, &values, analysis::DEFAULT_FIT_THRESHOLD)?;
        let mut rec = sub.record(sub.model.lambda, 0.0, "alpha", fit.rate);
        rec.n_samples = sub.sampling.n_samples;
        records.push(rec);
    }
    Ok(records)
}

pub fn generalized_records(
    cfg: &RunConfig,
    m_values: &[usize],
    t_star: f64,
) -> Result<Vec<SweepRecord>> {
    let params = cfg.model_params()?;
    let scan = fidelity_difference_scan(
        &params,
        m_values,
        &cfg.lambda_grid(),
        t_star / cfg.model.coupling,
        cfg.sampling.n_samples.max(1),
        cfg.sampling.seed,
        cfg.policy(),
    )?;
    let mut records = Vec::new();
    for (i, &m) in scan.m_values.iter().enumerate() {
        for (j, &lambda) in scan.lambda_grid.iter().enumerate() {
            let mut rec = cfg.record(lambda, t_star, "fidelity", scan.fidelities[i][j]);
            rec.m = m;
            rec.n_samples = cfg.sampling.n_samples;
            records.push(rec);
        }
    }
    for diff in &scan.differences {
        let name = format!("fidelity_difference_m{}_m{}", diff.m_a, diff.m_b);
        for (j, &lambda) in scan.lambda_grid.iter().enumerate() {
            let mut rec = cfg.record(lambda, t_star, &name, diff.values[j]);
            rec.m = diff.m_a;
            rec.n_samples = cfg.sampling.n_samples;
            records.push(rec);
        }
        let mut peak = cfg.record(
            diff.peak_lambda,
            t_star,
            &format!("{name}_peak_lambda"),
            diff.peak_lambda,
        );
        peak.m = diff.m_a;
        records.push(peak);
    }
    Ok(records)
}

pub fn revival_records(cfg: &RunConfig) -> Result<Vec<SweepRecord>> {
    let params = cfg.model_params()?;
    let engine = EchoEngine::with_policy(params, cfg.policy())?;
    let times = cfg.time_grid();
    let jts = cfg.jt_grid();
    let lambda = cfg.model.lambda;
    let values: Vec<f64> = if cfg.sampling.n_samples == 0 {
        channel::exact_fidelity_series(&engine, &times)?
    } else {
        channel::sampled_fidelity_series(
            &engine,
            &times,
            cfg.sampling.n_samples,
            cfg.sampling.seed,
        )?
        .into_iter()
        .map(|e| e.value)
        .collect()
    };
    let mut records = Vec::new();
    for (&jt, &value) in jts.iter().zip(&values) {
        let mut rec = cfg.record(lambda, jt, "fidelity", value);
        rec.n_samples = cfg.sampling.n_samples;
        records.push(rec);
    }
    let revival = revival_period(&jts, &values)?;
    records.push(cfg.record(lambda, revival.time, "revival_time", revival.time));
    records.push(cfg.record(lambda, revival.time, "revival_value", revival.value));
    records.push(cfg.record(
        lambda,
        revival.time,
        "revival_imperfect",
        if revival.imperfect { 1.0 } else { 0.0 },
    ));
    Ok(records)
}

pub fn haar_records(cfg: &RunConfig, n_states: u64) -> Result<Vec<SweepRecord>> {
    let n = cfg.model.n_qubits;
    let rows = channel::haar_probability_check(n, n_states, cfg.sampling.seed)?;
    let mut records = Vec::new();
    for row in rows {
        let class = if row.equal { "p_equal" } else { "p_unequal" };
        let mut rec = cfg.record(cfg.model.lambda, 0.0, class, row.estimate);
        rec.std_error = row.std_error;
        rec.n_samples = n_states;
        records.push(rec);
        records.push(cfg.record(
            cfg.model.lambda,
            0.0,
            &format!("{class}_expected"),
            row.expected,
        ));
    }
    Ok(records)
}

/// Pass/fail table of the oracle suite; the boolean reports overall success.
pub fn oracle_verify_report(cases: usize, seed: u64) -> Result<(String, bool)> {
    let checks = oracle::verification_suite(cases, seed)?;
    let mut out = String::from("check,cases,max_deviation,tolerance,status\n");
    let mut all_pass = true;
    for c in &checks {
        let status = if c.passed() { "PASS" } else { "FAIL" };
        all_pass &= c.passed();
        let _ = writeln!(
            out,
            "{},{},{:.3e},{:.1e},{status}",
            c.name, c.cases, c.max_deviation, c.tolerance
        );
    }
    Ok((out, all_pass))
}

// ---------- figure presets ----------

/// Built-in figure presets; the desk preset shrinks n and
/// the sample count so the sweep finishes on a laptop-class machine.
pub fn figure_records(id: u8, preset: PresetArg) -> Result<Vec<SweepRecord>> {
    let desk = preset == PresetArg::Desk;
    let mut cfg = RunConfig::default();
    cfg.model.epsilon = 0.05;
    cfg.model.gamma = 1.0;
    cfg.run.zero_mode_policy = PolicyArg::LeaveEmpty;
    cfg.sampling.n_samples = if desk { 10_000 } else { 50_000 };
    let lambda_list = [0.25, 0.5, 0.75, 0.9, 1.0, 1.1, 1.5, 2.0];
    match id {
        3 => {
            cfg.model.n_qubits = if desk { 12 } else { 50 };
            cfg.grid.time_max = 15.0;
            cfg.grid.time_steps = if desk { 30 } else { 60 };
            let mut records = Vec::new();
            for &lambda in &lambda_list {
                cfg.model.lambda = lambda;
                records.extend(fidelity_records(&cfg)?);
            }
            // inset: fidelity at fixed J t* = 5 as a function of lambda
            let t_star = 5.0;
            for &lambda in &lambda_list {
                cfg.model.lambda = lambda;
                let engine = EchoEngine::with_policy(cfg.model_params()?, cfg.policy())?;
                let est = channel::sampled_fidelity(
                    &engine,
                    t_star / cfg.model.coupling,
                    cfg.sampling.n_samples,
                    cfg.sampling.seed,
                )?;
                let mut rec = cfg.record(lambda, t_star, "fidelity_at_tstar", est.value);
                rec.std_error = est.std_error;
                rec.n_samples = est.n_samples;
                records.push(rec);
            }
            Ok(records)
        }
        4 => {
            let sizes: &[usize] = if desk {
                &[4, 6, 8, 10, 16]
            } else {
                &[4, 6, 8, 10, 16, 30, 50]
            };
            cfg.model.lambda = 1.0;
            cfg.grid.time_max = 15.0;
            cfg.grid.time_steps = if desk { 30 } else { 60 };
            let mut records = Vec::new();
            for &n in sizes {
                cfg.model.n_qubits = n;
                records.extend(fidelity_records(&cfg)?);
            }
            Ok(records)
        }
        5 => {
            cfg.model.n_qubits = if desk { 12 } else { 30 };
            cfg.grid.time_max = 30.0;
            cfg.grid.time_steps = 60;
            let mut records = Vec::new();
            for &lambda in &lambda_list {
                cfg.model.lambda = lambda;
                records.extend(purity_records(&cfg)?);
            }
            // inset: short-time Gaussian decay rate of the purity
            let mid_engine =
                EchoEngine::with_policy(cfg.model_params()?.with_lambda(1.0)?, cfg.policy())?;
            let times = analysis::short_time_grid(
                &mid_engine,
                cfg.sampling.n_samples,
                cfg.sampling.seed,
                0.88,
                12,
            )?;
            let scan = rate_scan(&RateScanConfig {
                base: cfg.model_params()?,
                lambda_grid: lambda_list.to_vec(),
                times,
                n_samples: cfg.sampling.n_samples,
                seed: cfg.sampling.seed,
                quantity: RateQuantity::Purity,
                threshold: analysis::DEFAULT_FIT_THRESHOLD,
                policy: cfg.policy(),
            })?;
            records.extend(scan_records_from(&cfg, &scan, "beta"));
            Ok(records)
        }
        6 => {
            cfg.model.n_qubits = 12;
            cfg.sampling.n_samples = 10_000;
            cfg.grid.time_max = 12.0;
            cfg.grid.time_steps = if desk { 24 } else { 48 };
            let m_values: &[usize] = if desk { &[0, 1, 2] } else { &[0, 1, 2, 3, 4] };
            let mut records = Vec::new();
            for &m in m_values {
                cfg.model.spacing = m;
                for &lambda in &[0.25, 1.0, 2.0] {
                    cfg.model.lambda = lambda;
                    records.extend(fidelity_records(&cfg)?);
                }
            }
            cfg.model.spacing = 0;
            cfg.grid.lambda_values = Vec::new();
            cfg.grid.lambda_min = 0.25;
            cfg.grid.lambda_max = 2.0;
            cfg.grid.lambda_step = if desk { 0.1 } else { 0.05 };
            records.extend(generalized_records(&cfg, m_values, 10.0)?);
            Ok(records)
        }
        7 => {
            cfg.model.n_qubits = 12;
            cfg.sampling.n_samples = 10_000;
            let m_values: &[usize] = if desk { &[0, 1, 2, 4] } else { &[0, 1, 2, 3, 4] };
            cfg.grid.lambda_min = if desk { 0.7 } else { 0.5 };
            cfg.grid.lambda_max = if desk { 1.3 } else { 1.5 };
            cfg.grid.lambda_step = if desk { 0.05 } else { 0.025 };
            let mut records = Vec::new();
            for &m in m_values {
                cfg.model.spacing = m;
                records.extend(scan_lambda_records(&cfg, QuantityArg::Fidelity)?);
            }
            // broken-link environment: five-site blocks
            let broken = ModelParams::broken_five_site_blocks(
                12,
                cfg.model.gamma,
                1.0,
                cfg.model.coupling,
                cfg.model.epsilon,
            )?;
            cfg.model.spacing = 4;
            cfg.model.broken_bonds = broken.broken_bonds().iter().map(|&b| b - 1).collect();
            let mut rows = scan_lambda_records(&cfg, QuantityArg::Fidelity)?;
            for r in &mut rows {
                r.quantity = format!("{}_broken", r.quantity);
            }
            records.extend(rows);
            Ok(records)
        }
        other => Err(Error::Config(format!(
            "unknown figure id {other} (expected 3..=7)"
        ))),
    }
}

// ---------- dispatch ----------

/// Runs one parsed invocation end to end.
pub fn run(cli: Cli) -> Result<()> {
    let cfg = resolve_config(&cli.common)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.run.threads.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| dispatch(&cli, &cfg))
}

fn dispatch(cli: &Cli, cfg: &RunConfig) -> Result<()> {
    match &cli.command {
        Command::Echo { x, y, matrix } => {
            let text = echo_records(cfg, x, y, *matrix)?;
            emit(cfg, &text)
        }
        Command::Fidelity => {
            let records = fidelity_records(cfg)?;
            emit(cfg, &render_records(&records, cfg.run.format)?)
        }
        Command::Purity => {
            let records = purity_records(cfg)?;
            emit(cfg, &render_records(&records, cfg.run.format)?)
        }
        Command::Entropy => {
            let records = entropy_records(cfg)?;
            emit(cfg, &render_records(&records, cfg.run.format)?)
        }
        Command::ScanLambda { quantity } => {
            let records = scan_lambda_records(cfg, *quantity)?;
            emit(cfg, &render_records(&records, cfg.run.format)?)
        }
        Command::ScanSize { sizes } => {
            let sizes = parse_usize_list(sizes)?;
            let records = scan_size_records(cfg, &sizes)?;
            emit(cfg, &render_records(&records, cfg.run.format)?)
        }
        Command::Generalized { m_values, t_star } => {
            let m_values = parse_usize_list(m_values)?;
            let records = generalized_records(cfg, &m_values, *t_star)?;
            emit(cfg, &render_records(&records, cfg.run.format)?)
        }
        Command::Revival => {
            let records = revival_records(cfg)?;
            emit(cfg, &render_records(&records, cfg.run.format)?)
        }
        Command::HaarCheck { states } => {
            let records = haar_records(cfg, *states)?;
            emit(cfg, &render_records(&records, cfg.run.format)?)
        }
        Command::OracleVerify { cases } => {
            let (table, all_pass) = oracle_verify_report(*cases, cfg.sampling.seed)?;
            emit(cfg, &table)?;
            if all_pass {
                Ok(())
            } else {
                Err(Error::Numerical {
                    context: "oracle verification".into(),
                    detail: "at least one check failed; see the table".into(),
                })
            }
        }
        Command::Figure { id, preset } => {
            let records = figure_records(*id, *preset)?;
            emit(cfg, &render_records(&records, cfg.run.format)?)
        }
        Command::DumpConfig => emit(cfg, &cfg.to_toml()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_through_toml() {
        let mut cfg = RunConfig::default();
        cfg.model.n_qubits = 6;
        cfg.model.spacing = 2;
        cfg.model.broken_bonds = vec![2, 7];
        cfg.grid.lambda_values = vec![0.5, 1.0];
        cfg.run.zero_mode_policy = PolicyArg::LeaveEmpty;
        let text = cfg.to_toml();
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn broken_bonds_serialize_zero_based() {
        let mut cfg = RunConfig::default();
        cfg.model.n_qubits = 4;
        cfg.model.broken_bonds = vec![1]; // 0-based: couples sites 1 and 2
        let params = cfg.model_params().unwrap();
        // 1-based bond index inside the library
        assert!(params.broken_bonds().contains(&2));
        assert_eq!(params.blocks(), vec![(1, 2), (3, 4)]);
    }

    #[test]
    fn lambda_grid_parsing() {
        assert_eq!(parse_lambda_grid("0.5:0.7:0.1").unwrap(), vec![0.5, 0.6, 0.7]);
        assert_eq!(parse_lambda_grid("0.25,1,2").unwrap(), vec![0.25, 1.0, 2.0]);
        assert!(parse_lambda_grid("1:0:-1").is_err());
    }

    #[test]
    fn fidelity_records_have_schema_invariants() {
        let mut cfg = RunConfig::default();
        cfg.model.n_qubits = 3;
        cfg.grid.time_max = 2.0;
        cfg.grid.time_steps = 4;
        cfg.sampling.n_samples = 0; // exact
        let records = fidelity_records(&cfg).unwrap();
        assert_eq!(records.len(), 2 * 5);
        for r in &records {
            if r.quantity == "fidelity" {
                assert!(r.value <= 1.0 + 1e-9 && r.value >= 0.0);
            }
            assert_eq!(r.std_error, 0.0);
            assert_eq!(r.n_samples, 0);
        }
        // t = 0 row is exactly 1
        assert!((records[0].value - 1.0).abs() < 1e-10);
    }

    #[test]
    fn entropy_records_are_consistent() {
        let mut cfg = RunConfig::default();
        cfg.model.n_qubits = 3;
        cfg.grid.time_max = 2.0;
        cfg.grid.time_steps = 2;
        let records = entropy_records(&cfg).unwrap();
        let find = |jt: f64, q: &str| -> f64 {
            records
                .iter()
                .find(|r| r.t == jt && r.quantity == q)
                .unwrap()
                .value
        };
        for &jt in &[0.0, 1.0, 2.0] {
            let h = find(jt, "entropy");
            assert!(find(jt, "hashing_bound") - (3.0 - h) == 0.0);
            assert!((find(jt, "capacity_rate") - (1.0 - h / 3.0)).abs() < 1e-15);
            assert!(find(jt, "renyi_lower_bound") <= h + 1e-9);
            assert!(find(jt, "fano_upper_bound") >= h - 1e-9);
        }
    }

    #[test]
    fn csv_rendering_is_stable() {
        let mut cfg = RunConfig::default();
        cfg.model.n_qubits = 3;
        cfg.grid.time_max = 1.0;
        cfg.grid.time_steps = 2;
        cfg.sampling.n_samples = 500;
        let a = render_records(&fidelity_records(&cfg).unwrap(), OutputFormat::Csv).unwrap();
        let b = render_records(&fidelity_records(&cfg).unwrap(), OutputFormat::Csv).unwrap();
        assert_eq!(a, b);
        assert!(a.starts_with(
            "n,m,gamma,lambda,coupling,epsilon,t,quantity,value,std_error,n_samples,seed"
        ));
    }

    #[test]
    fn haar_records_match_closed_form() {
        let mut cfg = RunConfig::default();
        cfg.model.n_qubits = 2;
        let records = haar_records(&cfg, 30_000).unwrap();
        let est = records.iter().find(|r| r.quantity == "p_equal").unwrap();
        let expected = records
            .iter()
            .find(|r| r.quantity == "p_equal_expected")
            .unwrap();
        assert!((expected.value - 0.125).abs() < 1e-12);
        assert!((est.value - expected.value).abs() < 4.0 * est.std_error + 1e-4);
    }
}

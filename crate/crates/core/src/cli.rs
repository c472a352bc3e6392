//! Command-line front end.
//!
//! Every command resolves its flags (and an optional JSON config file whose
//! keys override them) into a [`RunConfig`], validates it, and embeds it with
//! the crate version in every file it writes.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::geometry::ConvexPolygon;
use crate::inference::{crtt_mple, nois, write_nois_csv, NoisConfig, NoisResult};
use crate::model::{ExponentialModel, ModelKind};
use crate::point_process::{
    fit_logistic, fit_lpl, PointPattern, PpModel, Quadrature, WindowJson, DEFAULT_GRID,
};
use crate::sampler::{write_trace_csv, PeriodConfig, SmfChain};
use crate::tessellation::{TTessellation, TessellationJson};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = "ttess", version, about = "Gibbsian T-tessellations: simulation and pseudolikelihood inference")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample tessellations with the split/merge/flip chain.
    Simulate(CommonArgs),
    /// Estimate model parameters from a tessellation file.
    Estimate(CommonArgs),
    /// Simulate replicates and estimate each of them.
    Study(CommonArgs),
    /// Fit a Gibbs point process by logistic regression.
    Ppfit(CommonArgs),
    /// Calibrate the sampling period.
    Period(CommonArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Estimate(_) => "estimate",
            Command::Study(_) => "study",
            Command::Ppfit(_) => "ppfit",
            Command::Period(_) => "period",
        }
    }

    fn args(&self) -> &CommonArgs {
        match self {
            Command::Simulate(a)
            | Command::Estimate(a)
            | Command::Study(a)
            | Command::Ppfit(a)
            | Command::Period(a) => a,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Closed form for the CRTT model, NOIS otherwise.
    Auto,
    ClosedForm,
    Nois,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PpKind {
    Poisson,
    Strauss,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// crtt, area or angle.
    #[arg(long, default_value = "crtt")]
    pub model: ModelKind,
    /// Model parameter, one value per statistic.
    #[arg(long, num_args = 1.., allow_negative_numbers = true)]
    pub theta: Option<Vec<f64>>,
    /// Domain side lengths: one for a square, two for a rectangle.
    #[arg(long, num_args = 1..=2, default_values_t = [1.0])]
    pub side: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 12_500)]
    pub burnin: u64,
    #[arg(long, default_value_t = 3_704)]
    pub period: u64,
    /// Number of samples (simulate) or replicates (study).
    #[arg(long, default_value_t = 10)]
    pub replicates: usize,
    /// Independent chains sharing the replicates of a study.
    #[arg(long, default_value_t = 1)]
    pub chains: usize,
    /// NOIS relative stopping tolerance; negative runs to `--max-iter`.
    #[arg(long, allow_negative_numbers = true)]
    pub delta: Option<f64>,
    /// NOIS iteration cap.
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long, value_enum, default_value_t = Method::Auto)]
    pub method: Method,
    /// Keep one trace row out of this many.
    #[arg(long, default_value_t = 1)]
    pub trace_every: u64,
    /// Input file: a tessellation (estimate) or an `x,y` CSV pattern (ppfit).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Point-process window as `{"vertices": [[x, y], ...]}`; defaults to the rectangle given by `--side`.
    #[arg(long)]
    pub window: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = PpKind::Poisson)]
    pub pp_model: PpKind,
    /// Interaction radius of the Strauss model.
    #[arg(long)]
    pub radius: Option<f64>,
    /// Intensity of the dummy points.
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long, default_value = "ttess-out")]
    pub out: PathBuf,
    /// JSON file whose keys override the flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Fully resolved run settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: String,
    pub model: ModelKind,
    pub theta: Vec<f64>,
    pub side: Vec<f64>,
    pub seed: u64,
    pub burnin: u64,
    pub period: u64,
    pub replicates: usize,
    pub chains: usize,
    pub method: Method,
    pub nois: NoisConfig,
    pub trace_every: u64,
    pub input: Option<PathBuf>,
    pub window: Option<PathBuf>,
    pub pp_model: PpKind,
    pub radius: Option<f64>,
    pub rho: Option<f64>,
    pub out: PathBuf,
}

/// Parameter values used for simulation when `--theta` is absent.
pub fn default_theta(kind: ModelKind) -> Vec<f64> {
    match kind {
        ModelKind::Crtt => vec![0.64],
        ModelKind::Angle => vec![2.49, 2.5],
        ModelKind::Area => vec![0.53, 835.2],
    }
}

fn default_nois(kind: ModelKind) -> NoisConfig {
    let mut c = NoisConfig::default();
    if kind == ModelKind::Area {
        c.delta = -0.005;
        c.max_iterations = 100;
    }
    c
}

impl RunConfig {
    pub fn from_command(cmd: &Command) -> Result<Self> {
        let a = cmd.args();
        let mut nois = default_nois(a.model);
        if let Some(d) = a.delta {
            nois.delta = d;
        }
        if let Some(m) = a.max_iter {
            nois.max_iterations = m;
        }
        let cfg = RunConfig {
            command: cmd.name().into(),
            model: a.model,
            theta: a.theta.clone().unwrap_or_else(|| default_theta(a.model)),
            side: a.side.clone(),
            seed: a.seed,
            burnin: a.burnin,
            period: a.period,
            replicates: a.replicates,
            chains: a.chains,
            method: a.method,
            nois,
            trace_every: a.trace_every,
            input: a.input.clone(),
            window: a.window.clone(),
            pp_model: a.pp_model,
            radius: a.radius,
            rho: a.rho,
            out: a.out.clone(),
        };
        match &a.config {
            Some(path) => {
                let text = fs::read_to_string(path)?;
                let overrides: Value = serde_json::from_str(&text)?;
                cfg.with_overrides(overrides)
            }
            None => Ok(cfg),
        }
    }

    /// Replaces fields by the keys of a JSON object; nested objects merge.
    pub fn with_overrides(&self, overrides: Value) -> Result<Self> {
        if !overrides.is_object() {
            return Err(Error::Config("the config file must hold a JSON object".into()));
        }
        let mut base = serde_json::to_value(self)?;
        merge(&mut base, overrides);
        // The command is fixed by the invocation.
        base["command"] = json!(self.command);
        serde_json::from_value(base).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: &str| Err(Error::Config(m.into()));
        self.build_model()?;
        self.domain()?;
        self.nois.validate()?;
        if self.replicates == 0 {
            return cfg("replicates must be positive");
        }
        if self.chains == 0 || self.chains > self.replicates {
            return cfg("chains must lie between 1 and the number of replicates");
        }
        if self.period == 0 {
            return cfg("period must be positive");
        }
        if self.trace_every == 0 {
            return cfg("trace-every must be positive");
        }
        if self.method == Method::ClosedForm && self.model != ModelKind::Crtt {
            return cfg("the closed-form estimate exists for the crtt model only");
        }
        match self.command.as_str() {
            "estimate" if self.input.is_none() => cfg("estimate needs --input"),
            "ppfit" => {
                if self.input.is_none() {
                    return cfg("ppfit needs --input");
                }
                match self.rho {
                    None => return cfg("ppfit needs the dummy intensity --rho"),
                    Some(r) if !(r.is_finite() && r > 0.0) => return cfg("rho must be positive"),
                    _ => {}
                }
                if self.pp_model == PpKind::Strauss {
                    match self.radius {
                        Some(r) if r.is_finite() && r > 0.0 => {}
                        _ => return cfg("the strauss model needs a positive --radius"),
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn build_model(&self) -> Result<ExponentialModel> {
        ExponentialModel::builtin(self.model, self.theta.clone())
    }

    pub fn domain(&self) -> Result<ConvexPolygon> {
        match self.side.as_slice() {
            [s] => square_or_rect(*s, *s),
            [w, h] => square_or_rect(*w, *h),
            _ => Err(Error::Config("side takes one or two lengths".into())),
        }
    }
}

fn square_or_rect(w: f64, h: f64) -> Result<ConvexPolygon> {
    if !(w.is_finite() && h.is_finite() && w > 0.0 && h > 0.0) {
        return Err(Error::Config(format!("invalid side lengths {w} x {h}")));
    }
    ConvexPolygon::rectangle(w, h)
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

/// Independent generator for `(purpose, index)` derived from the run seed.
pub fn sub_rng(seed: u64, purpose: u32, index: u32) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(((purpose as u64) << 32) | index as u64);
    r
}

const CHAIN: u32 = 0;
const ESTIMATE: u32 = 1;
const DUMMY: u32 = 2;

fn header(cfg: &RunConfig) -> Value {
    json!({ "version": VERSION, "config": cfg })
}

fn write_json(path: &Path, cfg: &RunConfig, body: Value) -> Result<()> {
    let mut doc = header(cfg);
    if let (Value::Object(d), Value::Object(b)) = (&mut doc, body) {
        d.extend(b);
    }
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, &doc)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn csv_writer(path: &Path, cfg: &RunConfig) -> Result<BufWriter<File>> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# ttess {VERSION}")?;
    writeln!(w, "# config {}", serde_json::to_string(cfg)?)?;
    Ok(w)
}

/// Reads a tessellation written by `simulate` or a bare tessellation document.
pub fn read_tessellation(path: &Path) -> Result<TTessellation> {
    let v: Value = serde_json::from_str(&fs::read_to_string(path)?)?;
    let doc = match v.get("tessellation") {
        Some(t) => t.clone(),
        None => v,
    };
    let json: TessellationJson = serde_json::from_value(doc)
        .map_err(|e| Error::InvalidTessellation(format!("{}: {e}", path.display())))?;
    TTessellation::from_json(&json)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Estimate {
    pub theta_hat: Vec<f64>,
    pub method: Method,
    pub iterations: usize,
    pub converged: bool,
}

/// Estimates the configured model from `t`; also returns the NOIS run if any.
pub fn estimate(
    cfg: &RunConfig,
    t: &TTessellation,
    rng: &mut ChaCha8Rng,
) -> Result<(Estimate, Option<NoisResult>)> {
    let closed = match cfg.method {
        Method::ClosedForm => true,
        Method::Auto => cfg.model == ModelKind::Crtt,
        Method::Nois => false,
    };
    if closed {
        let e = Estimate {
            theta_hat: vec![crtt_mple(t)?],
            method: Method::ClosedForm,
            iterations: 0,
            converged: true,
        };
        return Ok((e, None));
    }
    let model = cfg.build_model()?;
    let r = nois(&model, t, &cfg.nois, rng)?;
    let e = Estimate {
        theta_hat: r.theta_hat.clone(),
        method: Method::Nois,
        iterations: r.iterations,
        converged: r.converged,
    };
    Ok((e, Some(r)))
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out)?;
    let mut chain = SmfChain::with_rng(
        TTessellation::empty(cfg.domain()?),
        cfg.build_model()?,
        sub_rng(cfg.seed, CHAIN, 0),
    )?;
    let samples = chain.sample(cfg.replicates, cfg.burnin, cfg.period);
    for (k, t) in samples.iter().enumerate() {
        let body = json!({
            "sample": k,
            "cells": t.cell_count(),
            "tessellation": t.to_json(),
        });
        write_json(&cfg.out.join(format!("sample_{k:04}.json")), cfg, body)?;
    }
    let thinned: Vec<_> = chain
        .trace()
        .iter()
        .filter(|r| r.iteration % cfg.trace_every == 0)
        .copied()
        .collect();
    let mut w = csv_writer(&cfg.out.join("trace.csv"), cfg)?;
    write_trace_csv(&thinned, &mut w)?;
    w.flush()?;
    println!("wrote {} samples to {}", samples.len(), cfg.out.display());
    Ok(())
}

pub fn cmd_estimate(cfg: &RunConfig) -> Result<()> {
    let input = cfg.input.as_ref().expect("validated");
    let t = read_tessellation(input)?;
    let mut rng = sub_rng(cfg.seed, ESTIMATE, 0);
    let (e, run) = estimate(cfg, &t, &mut rng)?;
    fs::create_dir_all(&cfg.out)?;
    let body = json!({
        "estimate": e,
        "nseint": t.nseint(),
        "nnbseint": t.nnbseint(),
        "nbseint": t.nbseint(),
        "u": t.u(),
        "cells": t.cell_count(),
    });
    write_json(&cfg.out.join("estimate.json"), cfg, body)?;
    if let Some(r) = run {
        let mut w = csv_writer(&cfg.out.join("nois_trace.csv"), cfg)?;
        write_nois_csv(&r, &mut w)?;
        w.flush()?;
    }
    let th: Vec<String> = e.theta_hat.iter().map(|x| format!("{x:.6}")).collect();
    println!("theta_hat = [{}]", th.join(", "));
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Replicate {
    pub replicate: usize,
    pub chain: usize,
    pub estimate: Estimate,
    pub nseint: usize,
    pub cells: usize,
}

/// min, first decile, quartiles, median, last decile, max.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub min: f64,
    pub d1: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub d9: f64,
    pub max: f64,
    pub mean: f64,
}

/// Linearly interpolated sample quantile of sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = p * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(values: &[f64]) -> Option<Summary> {
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    Some(Summary {
        min: s[0],
        d1: quantile(&s, 0.1),
        q1: quantile(&s, 0.25),
        median: quantile(&s, 0.5),
        q3: quantile(&s, 0.75),
        d9: quantile(&s, 0.9),
        max: s[s.len() - 1],
        mean: s.iter().sum::<f64>() / s.len() as f64,
    })
}

/// Replicate tessellations with their estimates, in replicate order.
pub fn run_study(cfg: &RunConfig) -> Result<Vec<Replicate>> {
    let domain = cfg.domain()?;
    let model = cfg.build_model()?;
    let per = cfg.replicates / cfg.chains;
    let extra = cfg.replicates % cfg.chains;
    let sizes: Vec<usize> = (0..cfg.chains).map(|c| per + usize::from(c < extra)).collect();
    let starts: Vec<usize> = sizes
        .iter()
        .scan(0, |acc, n| {
            let s = *acc;
            *acc += n;
            Some(s)
        })
        .collect();
    let per_chain: Vec<Result<Vec<Replicate>>> = (0..cfg.chains)
        .into_par_iter()
        .map(|c| {
            let mut chain = SmfChain::with_rng(
                TTessellation::empty(domain.clone()),
                model.clone(),
                sub_rng(cfg.seed, CHAIN, c as u32),
            )?
            .with_trace(false);
            let samples = chain.sample(sizes[c], cfg.burnin, cfg.period);
            samples
                .par_iter()
                .enumerate()
                .map(|(k, t)| {
                    let i = starts[c] + k;
                    let mut rng = sub_rng(cfg.seed, ESTIMATE, i as u32);
                    let (estimate, _) = estimate(cfg, t, &mut rng)?;
                    Ok(Replicate {
                        replicate: i,
                        chain: c,
                        estimate,
                        nseint: t.nseint(),
                        cells: t.cell_count(),
                    })
                })
                .collect()
        })
        .collect();
    let mut out = Vec::with_capacity(cfg.replicates);
    for r in per_chain {
        out.extend(r?);
    }
    Ok(out)
}

pub fn cmd_study(cfg: &RunConfig) -> Result<()> {
    let reps = run_study(cfg)?;
    fs::create_dir_all(&cfg.out)?;
    let dim = cfg.theta.len();
    let names: Vec<String> = (1..=dim).map(|k| format!("theta{k}")).collect();
    let mut w = csv_writer(&cfg.out.join("replicates.csv"), cfg)?;
    writeln!(w, "replicate,chain,{},iterations,converged,nseint,cells", names.join(","))?;
    for r in &reps {
        let th: Vec<String> = r.estimate.theta_hat.iter().map(|x| x.to_string()).collect();
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.replicate,
            r.chain,
            th.join(","),
            r.estimate.iterations,
            r.estimate.converged,
            r.nseint,
            r.cells
        )?;
    }
    w.flush()?;
    let summaries: Vec<Value> = (0..dim)
        .map(|k| {
            let v: Vec<f64> = reps.iter().map(|r| r.estimate.theta_hat[k]).collect();
            json!({ "parameter": names[k], "true": cfg.theta[k], "summary": summarize(&v) })
        })
        .collect();
    let converged = reps.iter().filter(|r| r.estimate.converged).count();
    write_json(
        &cfg.out.join("summary.json"),
        cfg,
        json!({ "replicates": reps.len(), "converged": converged, "parameters": summaries }),
    )?;
    let mut w = csv_writer(&cfg.out.join("summary.csv"), cfg)?;
    writeln!(w, "parameter,true,min,d1,q1,median,q3,d9,max,mean")?;
    for k in 0..dim {
        let v: Vec<f64> = reps.iter().map(|r| r.estimate.theta_hat[k]).collect();
        match summarize(&v) {
            Some(s) => writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                names[k], cfg.theta[k], s.min, s.d1, s.q1, s.median, s.q3, s.d9, s.max, s.mean
            )?,
            None => writeln!(w, "{},{},,,,,,,,", names[k], cfg.theta[k])?,
        }
    }
    w.flush()?;
    println!("{} replicates written to {}", reps.len(), cfg.out.display());
    Ok(())
}

pub fn cmd_ppfit(cfg: &RunConfig) -> Result<()> {
    let window = match &cfg.window {
        Some(p) => serde_json::from_reader::<_, WindowJson>(BufReader::new(File::open(p)?))?.polygon()?,
        None => cfg.domain()?,
    };
    let input = cfg.input.as_ref().expect("validated");
    let x = PointPattern::read_csv(window.clone(), BufReader::new(File::open(input)?))?;
    let model = match cfg.pp_model {
        PpKind::Poisson => PpModel::poisson(0.0)?,
        PpKind::Strauss => PpModel::strauss(0.0, 0.0, cfg.radius.expect("validated"))?,
    };
    let rho = cfg.rho.expect("validated");
    let mut rng = sub_rng(cfg.seed, DUMMY, 0);
    let fit = fit_logistic(&model, &x, rho, &mut rng)?;
    let lpl = Quadrature::grid(&window, DEFAULT_GRID).and_then(|q| fit_lpl(&model, &x, &q));
    let benchmark = (x.len() as f64 / window.area()).ln();
    let body = json!({
        "theta_hat": fit.theta,
        "logistic": fit,
        "quadrature_fit": match &lpl {
            Ok(f) => json!(f),
            Err(e) => json!({ "error": e.to_string() }),
        },
        "n": x.len(),
        "area": window.area(),
        "poisson_benchmark": {
            "log_n_over_area": benchmark,
            "difference": fit.theta[0] - benchmark,
        },
    });
    fs::create_dir_all(&cfg.out)?;
    write_json(&cfg.out.join("ppfit.json"), cfg, body)?;
    let th: Vec<String> = fit.theta.iter().map(|x| format!("{x:.6}")).collect();
    println!("theta_hat = [{}] (log(n/|D|) = {benchmark:.6})", th.join(", "));
    Ok(())
}

pub fn cmd_period(cfg: &RunConfig) -> Result<u64> {
    let mut chain = SmfChain::with_rng(
        TTessellation::empty(cfg.domain()?),
        cfg.build_model()?,
        sub_rng(cfg.seed, CHAIN, 0),
    )?
    .with_trace(false);
    chain.run(cfg.burnin);
    let report = chain.sampling_period(&PeriodConfig::default())?;
    fs::create_dir_all(&cfg.out)?;
    write_json(&cfg.out.join("period.json"), cfg, json!({ "report": report }))?;
    println!("{}", report.period);
    Ok(report.period)
}

fn is_usage(e: &Error) -> bool {
    matches!(
        e,
        Error::Config(_)
            | Error::InvalidModel(_)
            | Error::InvalidTessellation(_)
            | Error::InvalidPattern(_)
            | Error::DegeneratePolygon(_)
            | Error::Json(_)
    )
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = RunConfig::from_command(&cli.command)?;
    cfg.validate()?;
    match cfg.command.as_str() {
        "simulate" => cmd_simulate(&cfg),
        "estimate" => cmd_estimate(&cfg),
        "study" => cmd_study(&cfg),
        "ppfit" => cmd_ppfit(&cfg),
        "period" => cmd_period(&cfg).map(|_| ()),
        other => unreachable!("unknown command {other}"),
    }
}

/// Runs the command line and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if is_usage(&e) {
                2
            } else {
                1
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> RunConfig {
        let cli = Cli::try_parse_from(std::iter::once("ttess").chain(args.iter().copied())).unwrap();
        RunConfig::from_command(&cli.command).unwrap()
    }

    #[test]
    fn defaults_by_model() {
        let c = parse(&["simulate"]);
        assert_eq!(c.theta, vec![0.64]);
        assert_eq!((c.burnin, c.period), (12_500, 3_704));
        let a = parse(&["study", "--model", "area"]);
        assert_eq!(a.theta, vec![0.53, 835.2]);
        assert_eq!(a.nois.delta, -0.005);
        assert_eq!(a.nois.max_iterations, 100);
        assert_eq!(parse(&["simulate", "--model", "angle"]).theta, vec![2.49, 2.5]);
        let neg = parse(&["estimate", "--theta", "-1.5", "--delta", "-0.01"]);
        assert_eq!(neg.theta, vec![-1.5]);
        assert_eq!(neg.nois.delta, -0.01);
    }

    #[test]
    fn overrides_replace_and_merge() {
        let c = parse(&["study", "--seed", "3"]);
        let o = c
            .with_overrides(json!({"seed": 9, "nois": {"delta": 0.01}, "command": "period"}))
            .unwrap();
        assert_eq!(o.seed, 9);
        assert_eq!(o.nois.delta, 0.01);
        assert_eq!(o.nois.max_iterations, 150);
        assert_eq!(o.command, "study");
        assert!(c.with_overrides(json!({"sed": 1})).is_err());
        assert!(c.with_overrides(json!([1])).is_err());
    }

    #[test]
    fn validation() {
        assert!(parse(&["simulate", "--theta", "1", "2"]).validate().is_err());
        assert!(parse(&["simulate", "--side", "0"]).validate().is_err());
        assert!(parse(&["ppfit", "--input", "x.csv"]).validate().is_err());
        assert!(parse(&["ppfit", "--input", "x.csv", "--rho", "10"]).validate().is_ok());
        assert!(parse(&["ppfit", "--input", "x.csv", "--rho", "10", "--pp-model", "strauss"])
            .validate()
            .is_err());
        assert!(parse(&["estimate"]).validate().is_err());
        assert!(parse(&["study", "--replicates", "2", "--chains", "3"]).validate().is_err());
        assert!(parse(&["estimate", "--input", "t.json", "--model", "angle", "--method", "closed-form"])
            .validate()
            .is_err());
    }

    #[test]
    fn quantiles_match_interpolation() {
        let v: Vec<f64> = (0..11).map(f64::from).collect();
        let s = summarize(&v).unwrap();
        assert_eq!((s.min, s.d1, s.q1, s.median, s.q3, s.d9, s.max), (0.0, 1.0, 2.5, 5.0, 7.5, 9.0, 10.0));
        assert_eq!(quantile(&[1.0, 2.0], 0.5), 1.5);
        assert!(summarize(&[]).is_none());
    }

    #[test]
    fn sub_streams_differ() {
        use rand::Rng;
        let a: u64 = sub_rng(5, CHAIN, 0).random();
        let b: u64 = sub_rng(5, CHAIN, 1).random();
        let c: u64 = sub_rng(5, ESTIMATE, 0).random();
        assert!(a != b && a != c && b != c);
        assert_eq!(a, sub_rng(5, CHAIN, 0).random::<u64>());
    }
}

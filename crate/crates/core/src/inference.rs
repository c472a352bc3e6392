//! Maximum pseudolikelihood estimation for exponential T-tessellation models.
//!
//! The split integral of the log-pseudolikelihood is replaced by an average
//! over uniform dummy splits. Merge and flip terms are exact sums.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ExponentialModel, Statistic};
use crate::tessellation::{LocalOp, Split, TTessellation};

/// Largest exponent accepted before reporting overflow.
const MAX_EXPONENT: f64 = 700.0;

/// Uniform dummy splits of a tessellation with their statistic increments.
#[derive(Debug, Clone, Default)]
pub struct DummySplitSet {
    splits: Vec<Split>,
    increments: Vec<Vec<f64>>,
}

impl DummySplitSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Draws `n` splits from the normalized split measure of `t`.
    pub fn sample<R: Rng + ?Sized>(
        model: &ExponentialModel,
        t: &TTessellation,
        n: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut s = Self::new();
        s.extend(model, t, n, rng)?;
        Ok(s)
    }

    pub fn extend<R: Rng + ?Sized>(
        &mut self,
        model: &ExponentialModel,
        t: &TTessellation,
        n: usize,
        rng: &mut R,
    ) -> Result<()> {
        let new: Vec<Split> = (0..n).map(|_| t.sample_split(rng)).collect();
        let incs = new
            .par_iter()
            .map(|s| {
                let inc = model.increment(t, &LocalOp::Split(*s))?;
                if inc.forbidden {
                    return Err(Error::Estimation("dummy split with zero density".into()));
                }
                Ok(inc.values)
            })
            .collect::<Result<Vec<_>>>()?;
        self.splits.extend(new);
        self.increments.extend(incs);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.splits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.splits.is_empty()
    }

    pub fn splits(&self) -> &[Split] {
        &self.splits
    }

    pub fn increments(&self) -> &[Vec<f64>] {
        &self.increments
    }
}

/// The discrete log-pseudolikelihood of one tessellation, with merge and flip
/// increments precomputed.
#[derive(Debug, Clone)]
pub struct PseudoLikelihood {
    dim: usize,
    u: f64,
    merge_sum: DVector<f64>,
    flips: Vec<DVector<f64>>,
    flip_sum: DVector<f64>,
    splits: Vec<DVector<f64>>,
}

impl PseudoLikelihood {
    pub fn new(model: &ExponentialModel, t: &TTessellation, splits: &DummySplitSet) -> Result<Self> {
        let dim = model.dimension();
        let finite = |inc: crate::model::StatIncrement| {
            if inc.forbidden || inc.values.iter().any(|v| !v.is_finite()) {
                Err(Error::Estimation("non-finite statistic increment".into()))
            } else {
                Ok(DVector::from_vec(inc.values))
            }
        };
        let mut merge_sum = DVector::zeros(dim);
        for m in t.enumerate_merges() {
            merge_sum += finite(model.increment(t, &LocalOp::Merge(m))?)?;
        }
        let flips = t
            .enumerate_flips()
            .into_iter()
            .map(|f| finite(model.increment(t, &LocalOp::Flip(f))?))
            .collect::<Result<Vec<_>>>()?;
        let flip_sum = flips.iter().fold(DVector::zeros(dim), |a, b| a + b);
        let mut pl = PseudoLikelihood {
            dim,
            u: t.u(),
            merge_sum,
            flips,
            flip_sum,
            splits: Vec::new(),
        };
        pl.add_splits(splits);
        Ok(pl)
    }

    pub fn add_splits(&mut self, s: &DummySplitSet) {
        self.splits
            .extend(s.increments().iter().map(|v| DVector::from_column_slice(v)));
    }

    pub fn split_count(&self) -> usize {
        self.splits.len()
    }

    fn check(&self, theta: &DVector<f64>) -> Result<()> {
        if theta.len() != self.dim {
            return Err(Error::Estimation(format!(
                "parameter of dimension {} for a model of dimension {}",
                theta.len(),
                self.dim
            )));
        }
        if self.splits.is_empty() {
            return Err(Error::Estimation("empty dummy split set".into()));
        }
        Ok(())
    }

    fn weight(theta: &DVector<f64>, t: &DVector<f64>) -> Result<f64> {
        let x = theta.dot(t);
        if x > MAX_EXPONENT {
            return Err(Error::Numerical(format!("exponent {x} overflows")));
        }
        Ok(x.exp())
    }

    fn split_scale(&self) -> f64 {
        self.u / (PI * self.splits.len() as f64)
    }

    pub fn value(&self, theta: &DVector<f64>) -> Result<f64> {
        self.check(theta)?;
        let mut split_part = 0.0;
        for s in &self.splits {
            split_part += Self::weight(theta, s)?;
        }
        let mut flip_part = 0.0;
        for f in &self.flips {
            flip_part += Self::weight(theta, f)?;
        }
        let v = -theta.dot(&self.merge_sum) - self.split_scale() * split_part
            - theta.dot(&self.flip_sum)
            - flip_part;
        if !v.is_finite() {
            return Err(Error::Numerical("non-finite log-pseudolikelihood".into()));
        }
        Ok(v)
    }

    pub fn gradient(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(theta)?;
        let mut g = -&self.merge_sum - &self.flip_sum;
        let c = self.split_scale();
        for s in &self.splits {
            g -= s * (c * Self::weight(theta, s)?);
        }
        for f in &self.flips {
            g -= f * Self::weight(theta, f)?;
        }
        Ok(g)
    }

    pub fn hessian(&self, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check(theta)?;
        let mut h = DMatrix::zeros(self.dim, self.dim);
        let c = self.split_scale();
        for s in &self.splits {
            h.ger(-c * Self::weight(theta, s)?, s, s, 1.0);
        }
        for f in &self.flips {
            h.ger(-Self::weight(theta, f)?, f, f, 1.0);
        }
        Ok(h)
    }
}

pub fn lpl_discrete(
    model: &ExponentialModel,
    t: &TTessellation,
    s: &DummySplitSet,
    theta: &[f64],
) -> Result<f64> {
    PseudoLikelihood::new(model, t, s)?.value(&DVector::from_column_slice(theta))
}

pub fn lpl_gradient_discrete(
    model: &ExponentialModel,
    t: &TTessellation,
    s: &DummySplitSet,
    theta: &[f64],
) -> Result<Vec<f64>> {
    let g = PseudoLikelihood::new(model, t, s)?.gradient(&DVector::from_column_slice(theta))?;
    Ok(g.as_slice().to_vec())
}

pub fn lpl_hessian_discrete(
    model: &ExponentialModel,
    t: &TTessellation,
    s: &DummySplitSet,
    theta: &[f64],
) -> Result<DMatrix<f64>> {
    PseudoLikelihood::new(model, t, s)?.hessian(&DVector::from_column_slice(theta))
}

/// Closed-form maximum pseudolikelihood estimate under the CRTT model.
pub fn crtt_mple(t: &TTessellation) -> Result<f64> {
    crtt_mple_from_counts(t.nnbseint(), t.u())
}

/// `log(nnbseint * pi / u)`.
pub fn crtt_mple_from_counts(nnbseint: usize, u: f64) -> Result<f64> {
    if nnbseint == 0 {
        return Err(Error::Estimation(
            "no non-blocking internal segment: the estimate is -inf".into(),
        ));
    }
    if !(u.is_finite() && u > 0.0) {
        return Err(Error::Estimation(format!("invalid perimeter sum {u}")));
    }
    Ok((nnbseint as f64 * PI / u).ln())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialTheta {
    /// `"crtt-start"`: the CRTT estimate for the first component, zeros elsewhere.
    Named(String),
    Value(Vec<f64>),
}

impl InitialTheta {
    pub fn crtt_start() -> Self {
        InitialTheta::Named("crtt-start".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisConfig {
    pub epsilon: f64,
    pub delta: f64,
    pub max_iterations: usize,
    pub initial_theta: InitialTheta,
    /// Dummy splits added per iteration; defaults to the number of
    /// non-blocking internal segments.
    #[serde(default)]
    pub splits_per_iteration: Option<usize>,
}

impl Default for NoisConfig {
    fn default() -> Self {
        NoisConfig {
            epsilon: 1.0,
            delta: 0.005,
            max_iterations: 150,
            initial_theta: InitialTheta::crtt_start(),
            splits_per_iteration: None,
        }
    }
}

impl NoisConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::Config("epsilon must be positive".into()));
        }
        if !self.delta.is_finite() {
            return Err(Error::Config("delta must be finite".into()));
        }
        if self.splits_per_iteration == Some(0) {
            return Err(Error::Config("at least one dummy split per iteration".into()));
        }
        match &self.initial_theta {
            InitialTheta::Named(n) if n != "crtt-start" => {
                Err(Error::Config(format!("unknown initial value '{n}'")))
            }
            InitialTheta::Value(v) if v.iter().any(|x| !x.is_finite()) => {
                Err(Error::Config("non-finite initial value".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoisIteration {
    pub iteration: usize,
    pub theta: Vec<f64>,
    pub lpl: f64,
    pub splits: usize,
    /// Step length factor used for this update (after halvings).
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoisResult {
    pub theta_hat: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<NoisIteration>,
}

/// Newton ascent direction `-H⁻¹ G`, with a ridge when `H` is numerically
/// singular.
fn newton_direction(h: &DMatrix<f64>, g: &DVector<f64>) -> Result<DVector<f64>> {
    let neg = -h;
    if let Some(ch) = neg.clone().cholesky() {
        return Ok(ch.solve(g));
    }
    let scale = neg.diagonal().iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let mut ridge = 1e-12 * scale;
    while scale > 0.0 && ridge <= 1e-6 * scale {
        let n = neg.nrows();
        let reg = &neg + DMatrix::identity(n, n) * ridge;
        if let Some(ch) = reg.cholesky() {
            return Ok(ch.solve(g));
        }
        ridge *= 10.0;
    }
    Err(Error::Numerical(format!(
        "singular Hessian (diagonal {:?}); the statistic increments may not span the parameter space",
        h.diagonal().as_slice()
    )))
}

pub fn initial_theta(model: &ExponentialModel, t: &TTessellation, init: &InitialTheta) -> Result<Vec<f64>> {
    match init {
        InitialTheta::Value(v) => {
            if v.len() != model.dimension() {
                return Err(Error::Config(format!(
                    "initial value of dimension {} for a model of dimension {}",
                    v.len(),
                    model.dimension()
                )));
            }
            Ok(v.clone())
        }
        InitialTheta::Named(_) => {
            if !matches!(model.statistics().first(), Some(Statistic::Nseint)) {
                return Err(Error::Config(
                    "crtt-start needs nseint as first statistic".into(),
                ));
            }
            let mut v = vec![0.0; model.dimension()];
            v[0] = crtt_mple(t)?;
            Ok(v)
        }
    }
}

/// Newton optimization with increasing splitting.
pub fn nois<R: Rng + ?Sized>(
    model: &ExponentialModel,
    t: &TTessellation,
    cfg: &NoisConfig,
    rng: &mut R,
) -> Result<NoisResult> {
    cfg.validate()?;
    let nnb = t.nnbseint();
    if nnb == 0 {
        return Err(Error::Estimation("no non-blocking internal segment".into()));
    }
    let m = cfg.splits_per_iteration.unwrap_or(nnb);
    let mut theta = DVector::from_vec(initial_theta(model, t, &cfg.initial_theta)?);
    let mut pl = PseudoLikelihood::new(model, t, &DummySplitSet::sample(model, t, m, rng)?)?;
    let mut trace = vec![NoisIteration {
        iteration: 0,
        theta: theta.as_slice().to_vec(),
        lpl: pl.value(&theta)?,
        splits: pl.split_count(),
        step: 0.0,
    }];
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=cfg.max_iterations {
        let g = pl.gradient(&theta)?;
        let h = pl.hessian(&theta)?;
        let d = newton_direction(&h, &g)?;
        let base = pl.value(&theta)?;
        let mut eps = cfg.epsilon;
        let mut next = &theta + &d * eps;
        let mut halvings = 0;
        while halvings < 60 {
            match pl.value(&next) {
                Ok(v) if v >= base => break,
                _ => {
                    eps *= 0.5;
                    next = &theta + &d * eps;
                    halvings += 1;
                }
            }
        }
        let old = theta;
        theta = next;
        pl.add_splits(&DummySplitSet::sample(model, t, m, rng)?);
        let l = pl.value(&theta)?;
        let previous = if it == 1 {
            pl.value(&old)?
        } else {
            trace.last().unwrap().lpl
        };
        let delta_l = l - previous;
        trace.push(NoisIteration {
            iteration: it,
            theta: theta.as_slice().to_vec(),
            lpl: l,
            splits: pl.split_count(),
            step: eps,
        });
        iterations = it;
        if delta_l.abs() <= cfg.delta * (l.abs() + cfg.delta) {
            converged = true;
            break;
        }
    }
    Ok(NoisResult {
        theta_hat: theta.as_slice().to_vec(),
        iterations,
        converged,
        trace,
    })
}

pub fn write_nois_csv<W: std::io::Write>(r: &NoisResult, mut w: W) -> Result<()> {
    let d = r.theta_hat.len();
    let names: Vec<String> = (1..=d).map(|k| format!("theta{k}")).collect();
    writeln!(w, "iteration,{},lpl,splits,step", names.join(","))?;
    for it in &r.trace {
        let th: Vec<String> = it.theta.iter().map(|x| x.to_string()).collect();
        writeln!(w, "{},{},{},{},{}", it.iteration, th.join(","), it.lpl, it.splits, it.step)?;
    }
    Ok(())
}

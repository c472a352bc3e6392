//! Split/merge/flip Metropolis-Hastings-Green chain.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::Write;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::ExponentialModel;
use crate::tessellation::{LocalOp, MoveKind, TTessellation};

/// Accepted moves between recomputations of the incrementally kept statistics.
const RESYNC: u64 = 10_000;

/// Proposal probabilities of the three move types.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Mix {
    pub split: f64,
    pub merge: f64,
    pub flip: f64,
}

impl Default for Mix {
    fn default() -> Self {
        Mix {
            split: 1.0 / 3.0,
            merge: 1.0 / 3.0,
            flip: 1.0 / 3.0,
        }
    }
}

impl Mix {
    pub fn new(split: f64, merge: f64, flip: f64) -> Result<Self> {
        let all = [split, merge, flip];
        if all.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(Error::Config("move probabilities must be positive".into()));
        }
        if (all.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config("move probabilities must sum to 1".into()));
        }
        Ok(Mix { split, merge, flip })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRecord {
    pub iteration: u64,
    pub energy: f64,
    pub nseint: usize,
    pub nnbseint: usize,
    pub nbseint: usize,
    pub accepted: Option<MoveKind>,
}

#[derive(Debug, Clone, Copy)]
pub struct StepOutcome {
    pub proposed: MoveKind,
    pub accepted: bool,
    /// Log acceptance ratio; `-inf` for no-op and invalid proposals.
    pub log_ratio: f64,
    /// Serial of a segment created by the step.
    pub born: Option<u64>,
    /// Serial of a segment removed by the step.
    pub died: Option<u64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct MoveCounts {
    pub proposed: [u64; 3],
    pub accepted: [u64; 3],
}

impl MoveCounts {
    fn slot(kind: MoveKind) -> usize {
        match kind {
            MoveKind::Split => 0,
            MoveKind::Merge => 1,
            MoveKind::Flip => 2,
        }
    }

    pub fn proposed(&self, kind: MoveKind) -> u64 {
        self.proposed[Self::slot(kind)]
    }

    pub fn accepted(&self, kind: MoveKind) -> u64 {
        self.accepted[Self::slot(kind)]
    }
}

pub struct SmfChain {
    state: TTessellation,
    model: ExponentialModel,
    mix: Mix,
    rng: ChaCha8Rng,
    iteration: u64,
    stats: Vec<f64>,
    nseint: usize,
    nnbseint: usize,
    nbseint: usize,
    counts: MoveCounts,
    trace: Vec<TraceRecord>,
    record_trace: bool,
    births: HashMap<u64, u64>,
    verify: bool,
}

impl SmfChain {
    pub fn new(state: TTessellation, model: ExponentialModel, seed: u64) -> Result<Self> {
        Self::with_rng(state, model, ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn with_rng(state: TTessellation, model: ExponentialModel, rng: ChaCha8Rng) -> Result<Self> {
        if !model.energy(&state).is_finite() {
            return Err(Error::Sampler("initial state has zero density".into()));
        }
        let stats = model.t(&state);
        let births = state
            .internal_segments()
            .map(|(_, s)| (s.serial(), 0))
            .collect();
        Ok(SmfChain {
            nseint: state.nseint(),
            nnbseint: state.nnbseint(),
            nbseint: state.nbseint(),
            state,
            model,
            mix: Mix::default(),
            rng,
            iteration: 0,
            stats,
            counts: MoveCounts::default(),
            trace: Vec::new(),
            record_trace: true,
            births,
            verify: false,
        })
    }

    pub fn with_mix(mut self, mix: Mix) -> Self {
        self.mix = mix;
        self
    }

    /// Keep (default) or drop the per-step trace.
    pub fn with_trace(mut self, record: bool) -> Self {
        self.record_trace = record;
        self
    }

    /// Runs the full invariant checker after every accepted move.
    pub fn with_verification(mut self, verify: bool) -> Self {
        self.verify = verify;
        self
    }

    pub fn state(&self) -> &TTessellation {
        &self.state
    }

    pub fn model(&self) -> &ExponentialModel {
        &self.model
    }

    pub fn mix(&self) -> Mix {
        self.mix
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn counts(&self) -> MoveCounts {
        self.counts
    }

    /// Current `θᵀ t(T)`.
    pub fn energy(&self) -> f64 {
        self.model.dot(&self.stats)
    }

    /// Current statistic vector, maintained incrementally.
    pub fn statistics(&self) -> &[f64] {
        &self.stats
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    pub fn energy_trace(&self) -> Vec<f64> {
        self.trace.iter().map(|r| r.energy).collect()
    }

    /// Birth iteration of every live internal segment, by serial.
    pub fn births(&self) -> &HashMap<u64, u64> {
        &self.births
    }

    pub fn into_state(self) -> TTessellation {
        self.state
    }

    pub fn step(&mut self) -> StepOutcome {
        let x: f64 = self.rng.random();
        let (kind, proposal) = if x < self.mix.split {
            (MoveKind::Split, self.propose_split())
        } else if x < self.mix.split + self.mix.merge {
            (MoveKind::Merge, self.propose_merge())
        } else {
            (MoveKind::Flip, self.propose_flip())
        };
        self.counts.proposed[MoveCounts::slot(kind)] += 1;
        self.iteration += 1;

        let mut outcome = StepOutcome {
            proposed: kind,
            accepted: false,
            log_ratio: f64::NEG_INFINITY,
            born: None,
            died: None,
        };
        if let Some((op, log_ratio, increment)) = proposal {
            outcome.log_ratio = log_ratio;
            let accept = log_ratio >= 0.0 || self.rng.random::<f64>().ln() < log_ratio;
            if accept {
                let applied = self
                    .state
                    .apply_full(&op)
                    .expect("previewed move must apply");
                for (s, d) in self.stats.iter_mut().zip(&increment) {
                    *s += d;
                }
                self.nseint = (self.nseint as i64 + applied.effect.d_nseint) as usize;
                self.nnbseint = (self.nnbseint as i64 + applied.effect.d_nnbseint) as usize;
                self.nbseint = (self.nbseint as i64 + applied.effect.d_nbseint) as usize;
                if let Some(b) = applied.born {
                    self.births.insert(b, self.iteration);
                }
                if let Some(d) = applied.died {
                    self.births.remove(&d);
                }
                outcome.accepted = true;
                outcome.born = applied.born;
                outcome.died = applied.died;
                self.counts.accepted[MoveCounts::slot(kind)] += 1;
                if self.counts.accepted.iter().sum::<u64>() % RESYNC == 0 {
                    self.stats = self.model.t(&self.state);
                }
                if self.verify {
                    if let Err(e) = self.state.check_invariants() {
                        panic!("invariant violated after {kind} at iteration {}: {e}", self.iteration);
                    }
                }
            }
        }
        if self.record_trace {
            self.trace.push(TraceRecord {
                iteration: self.iteration,
                energy: self.energy(),
                nseint: self.nseint,
                nnbseint: self.nnbseint,
                nbseint: self.nbseint,
                accepted: outcome.accepted.then_some(kind),
            });
        }
        outcome
    }

    fn propose_split(&mut self) -> Option<(LocalOp, f64, Vec<f64>)> {
        let s = self.state.sample_split(&mut self.rng);
        let op = LocalOp::Split(s);
        let effect = self.state.preview(&op).ok()?;
        let inc = self.model.increment_with(&self.state, &op, &effect).ok()?;
        let merges_after = (self.nnbseint as i64 + effect.d_nnbseint) as f64;
        let log_ratio = self.model.log_intensity(&inc) + (self.mix.merge / merges_after).ln()
            - (self.mix.split * PI / self.state.u()).ln();
        Some((op, log_ratio, inc.values))
    }

    fn propose_merge(&mut self) -> Option<(LocalOp, f64, Vec<f64>)> {
        let merges = self.state.enumerate_merges();
        let m = *merges.choose(&mut self.rng)?;
        let op = LocalOp::Merge(m);
        let effect = self.state.preview(&op).ok()?;
        let inc = self.model.increment_with(&self.state, &op, &effect).ok()?;
        let u_after = self.state.u() + effect.d_u;
        let log_ratio = self.model.log_intensity(&inc) + (self.mix.split * PI / u_after).ln()
            - (self.mix.merge / merges.len() as f64).ln();
        Some((op, log_ratio, inc.values))
    }

    fn propose_flip(&mut self) -> Option<(LocalOp, f64, Vec<f64>)> {
        let flips = self.state.enumerate_flips();
        let f = *flips.choose(&mut self.rng)?;
        let op = LocalOp::Flip(f);
        let effect = self.state.preview(&op).ok()?;
        let inc = self.model.increment_with(&self.state, &op, &effect).ok()?;
        let flips_after = 2 * (self.nbseint as i64 + effect.d_nbseint);
        let log_ratio = self.model.log_intensity(&inc) + (flips.len() as f64).ln()
            - (flips_after as f64).ln();
        Some((op, log_ratio, inc.values))
    }

    pub fn run(&mut self, n: u64) {
        for _ in 0..n {
            self.step();
        }
    }

    /// Snapshots after `burnin` steps and then every `period` steps.
    pub fn sample(&mut self, n_samples: usize, burnin: u64, period: u64) -> Vec<TTessellation> {
        self.run(burnin);
        let mut out = Vec::with_capacity(n_samples);
        for k in 0..n_samples {
            if k > 0 {
                self.run(period);
            }
            out.push(self.state.clone());
        }
        out
    }

    /// Runs `n` steps and records when each segment lives.
    pub fn record_lifetimes(&mut self, n: u64) -> Lifetimes {
        let mut index: HashMap<u64, usize> = HashMap::new();
        let mut spans = Vec::new();
        for (_, s) in self.state.internal_segments() {
            index.insert(s.serial(), spans.len());
            spans.push((0, None));
        }
        for i in 1..=n {
            let o = self.step();
            if let Some(b) = o.born {
                index.insert(b, spans.len());
                spans.push((i, None));
            }
            if let Some(d) = o.died {
                if let Some(&k) = index.get(&d) {
                    spans[k].1 = Some(i);
                }
            }
        }
        Lifetimes { length: n, spans }
    }

    /// Calibrates the number of steps after which a given fraction of the
    /// segments alive at the start of a window have died. Advances the chain.
    pub fn sampling_period(&mut self, cfg: &PeriodConfig) -> Result<PeriodReport> {
        cfg.validate()?;
        let windows = cfg.min_windows as u64;
        let mut evaluations = Vec::new();
        let mut p = cfg.initial.max(1);
        let pilot = loop {
            if p > cfg.cap {
                return Err(Error::Sampler(format!(
                    "no renewal fraction {} reached with periods up to {}",
                    cfg.renewal_fraction, cfg.cap
                )));
            }
            let pilot = self.record_lifetimes(windows * p);
            let r = pilot.renewal(p);
            evaluations.push((p, r));
            if r >= cfg.renewal_fraction {
                break pilot;
            }
            p *= 2;
        };
        let (mut lo, mut hi) = (if p == cfg.initial.max(1) { 0 } else { p / 2 }, p);
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            let r = pilot.renewal(mid);
            evaluations.push((mid, r));
            if r >= cfg.renewal_fraction {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(PeriodReport {
            period: hi,
            renewal: pilot.renewal(hi),
            pilot_length: pilot.length,
            evaluations,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodConfig {
    pub renewal_fraction: f64,
    pub min_windows: usize,
    pub initial: u64,
    pub cap: u64,
}

impl Default for PeriodConfig {
    fn default() -> Self {
        PeriodConfig {
            renewal_fraction: 0.75,
            min_windows: 10,
            initial: 16,
            cap: 1 << 22,
        }
    }
}

impl PeriodConfig {
    fn validate(&self) -> Result<()> {
        if !(self.renewal_fraction > 0.0 && self.renewal_fraction < 1.0) {
            return Err(Error::Config("renewal fraction must lie in (0, 1)".into()));
        }
        if self.min_windows == 0 {
            return Err(Error::Config("at least one window is needed".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodReport {
    pub period: u64,
    /// Renewal fraction achieved at `period` on the final pilot run.
    pub renewal: f64,
    pub pilot_length: u64,
    /// Every `(period, renewal)` pair examined, in order.
    pub evaluations: Vec<(u64, f64)>,
}

/// Birth and death times (in steps from the start of a pilot run) of every
/// segment seen during the run.
#[derive(Debug, Clone)]
pub struct Lifetimes {
    pub length: u64,
    pub spans: Vec<(u64, Option<u64>)>,
}

impl Lifetimes {
    /// Mean over disjoint windows of length `p` of the fraction of segments
    /// alive at the window start that are dead at its end. Windows starting
    /// with no segment are skipped; with none left the result is 1.
    pub fn renewal(&self, p: u64) -> f64 {
        if p == 0 {
            return 0.0;
        }
        let mut sum = 0.0;
        let mut used = 0usize;
        for k in 0..self.length / p {
            let (start, end) = (k * p, (k + 1) * p);
            let mut alive = 0usize;
            let mut dead = 0usize;
            for &(b, d) in &self.spans {
                if b <= start && d.is_none_or(|d| d > start) {
                    alive += 1;
                    if d.is_some_and(|d| d <= end) {
                        dead += 1;
                    }
                }
            }
            if alive > 0 {
                sum += dead as f64 / alive as f64;
                used += 1;
            }
        }
        if used == 0 {
            1.0
        } else {
            sum / used as f64
        }
    }
}

/// Compares the means of the third and fourth quarters of an energy trace,
/// with standard errors from batch means.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stabilization {
    pub mean_third: f64,
    pub mean_fourth: f64,
    pub standard_error: f64,
    pub z: f64,
}

impl Stabilization {
    pub fn is_stable(&self, threshold: f64) -> bool {
        self.z.abs() < threshold
    }
}

pub fn energy_stabilization(energy: &[f64]) -> Result<Stabilization> {
    const BATCHES: usize = 20;
    let q = energy.len() / 4;
    if q < BATCHES * 2 {
        return Err(Error::Sampler("trace too short for the stabilization check".into()));
    }
    let third = &energy[2 * q..3 * q];
    let fourth = &energy[3 * q..4 * q];
    let batch_stats = |xs: &[f64]| {
        let b = xs.len() / BATCHES;
        let means: Vec<f64> = (0..BATCHES)
            .map(|k| xs[k * b..(k + 1) * b].iter().sum::<f64>() / b as f64)
            .collect();
        let m = means.iter().sum::<f64>() / BATCHES as f64;
        let var = means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (BATCHES - 1) as f64;
        (m, var / BATCHES as f64)
    };
    let (m3, v3) = batch_stats(third);
    let (m4, v4) = batch_stats(fourth);
    let se = (v3 + v4).sqrt();
    let z = if se > 0.0 {
        (m4 - m3) / se
    } else if m4 == m3 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(Stabilization {
        mean_third: m3,
        mean_fourth: m4,
        standard_error: se,
        z,
    })
}

pub fn write_trace_csv<W: Write>(records: &[TraceRecord], mut w: W) -> Result<()> {
    writeln!(w, "iteration,energy,nseint,nnbseint,nbseint,accepted_move_type")?;
    for r in records {
        let mv = r.accepted.map_or("none".to_string(), |k| k.to_string());
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.iteration, r.energy, r.nseint, r.nnbseint, r.nbseint, mv
        )?;
    }
    Ok(())
}

/// Lag-`k` sample autocorrelation.
pub fn autocorrelation(xs: &[f64], k: usize) -> f64 {
    let n = xs.len();
    if k >= n {
        return 0.0;
    }
    let m = xs.iter().sum::<f64>() / n as f64;
    let var: f64 = xs.iter().map(|x| (x - m).powi(2)).sum();
    if var == 0.0 {
        return 0.0;
    }
    let cov: f64 = (0..n - k).map(|i| (xs[i] - m) * (xs[i + k] - m)).sum();
    cov / var
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ConvexPolygon;
    use crate::model::ExponentialModel;

    fn chain(model: ExponentialModel, side: f64, seed: u64) -> SmfChain {
        let t = TTessellation::empty(ConvexPolygon::square(side).unwrap());
        SmfChain::new(t, model, seed).unwrap()
    }

    #[test]
    fn mix_validation() {
        assert!(Mix::new(0.5, 0.5, 0.0).is_err());
        assert!(Mix::new(0.5, 0.3, 0.3).is_err());
        assert!(Mix::new(0.2, 0.3, 0.5).is_ok());
    }

    #[test]
    fn first_split_ratio_on_empty_square() {
        // θ = 0, |M_sT| = 1, u(D) = 4
        let mut c = chain(ExponentialModel::crtt(0.0).unwrap(), 1.0, 3);
        let (_, log_r, _) = c.propose_split().unwrap();
        let expected = ((1.0 / 3.0) / 1.0) / ((1.0 / 3.0) * PI / 4.0);
        assert!((log_r.exp() - expected).abs() < 1e-12);
    }

    #[test]
    fn empty_proposals_are_rejected_no_ops() {
        let mut c = chain(ExponentialModel::crtt(0.0).unwrap(), 1.0, 3);
        assert!(c.propose_merge().is_none());
        assert!(c.propose_flip().is_none());
        c.run(0);
        assert_eq!(c.iteration(), 0);
        assert!(c.trace().is_empty());
    }

    #[test]
    fn balanced_flip_is_always_accepted() {
        // CRTT flips have λ = 1; a flip keeping |F| fixed has ratio 1
        let mut c = chain(ExponentialModel::crtt(0.64).unwrap(), 1.0, 11);
        c.run(400);
        let mut seen = 0;
        for _ in 0..200 {
            if let Some((op, log_r, _)) = c.propose_flip() {
                let after = c.state().preview(&op).unwrap();
                if after.d_nbseint == 0 {
                    assert!(log_r.abs() < 1e-12);
                    seen += 1;
                }
            }
        }
        assert!(seen > 0);
    }

    #[test]
    fn trace_and_invariants() {
        let mut c = chain(ExponentialModel::angle(1.0, 1.0).unwrap(), 1.0, 5).with_verification(true);
        c.run(1500);
        assert_eq!(c.trace().len(), 1500);
        assert_eq!(c.trace().last().unwrap().iteration, 1500);
        let fresh = c.model().t(c.state());
        for (a, b) in fresh.iter().zip(c.statistics()) {
            assert!((a - b).abs() < 1e-8);
        }
        assert_eq!(c.births().len(), c.state().nseint());
        let last = c.trace().last().unwrap();
        assert_eq!(last.nnbseint, c.state().nnbseint());
        assert_eq!(last.nbseint, c.state().nbseint());
        let mut buf = Vec::new();
        write_trace_csv(c.trace(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1501);
        assert!(text.starts_with("iteration,energy,nseint,nnbseint,nbseint,accepted_move_type\n"));
    }

    #[test]
    fn same_seed_same_chain() {
        let mut a = chain(ExponentialModel::area(0.5, 10.0).unwrap(), 1.0, 9);
        let mut b = chain(ExponentialModel::area(0.5, 10.0).unwrap(), 1.0, 9);
        a.run(500);
        b.run(500);
        assert_eq!(a.trace(), b.trace());
        assert!(a.state().geometric_eq(b.state(), 0.0));
    }

    #[test]
    fn sample_positions() {
        let mut c = chain(ExponentialModel::crtt(0.64).unwrap(), 1.0, 2);
        let s = c.sample(4, 100, 25);
        assert_eq!(s.len(), 4);
        assert_eq!(c.iteration(), 100 + 3 * 25);
    }

    #[test]
    fn splits_and_merges_balance_at_zero() {
        let mut c = chain(ExponentialModel::crtt(0.0).unwrap(), 1.0, 13).with_trace(false);
        c.run(20_000);
        let s = c.counts().accepted(MoveKind::Split) as f64;
        let m = c.counts().accepted(MoveKind::Merge) as f64;
        assert!((s - m).abs() <= 3.0 * (s + m).sqrt());
        assert_eq!(s - m, c.state().nseint() as f64);
    }

    #[test]
    fn energy_trace_stabilizes() {
        let burnin = 12_500;
        let mut c = chain(ExponentialModel::crtt(0.64).unwrap(), 1.0, 21).with_trace(true);
        c.run(4 * burnin);
        let st = energy_stabilization(&c.energy_trace()).unwrap();
        assert!(st.is_stable(2.0), "{st:?}");
    }

    #[test]
    fn lifetimes_renewal() {
        let l = Lifetimes {
            length: 20,
            spans: vec![(0, Some(3)), (0, None), (2, Some(12)), (11, Some(15))],
        };
        // window [0,10]: alive {0,1}, dead {0} -> 0.5; window [10,20]: alive {1,2}, dead {2} -> 0.5
        assert!((l.renewal(10) - 0.5).abs() < 1e-12);
        let empty = Lifetimes { length: 10, spans: vec![] };
        assert_eq!(empty.renewal(5), 1.0);
    }

    #[test]
    fn period_decorrelates_samples() {
        let mut c = chain(ExponentialModel::crtt(0.64).unwrap(), 1.0, 17).with_trace(false);
        c.run(5000);
        let report = c.sampling_period(&PeriodConfig::default()).unwrap();
        assert!(report.renewal >= 0.75);
        assert!(report.period > 1);
        let samples = c.sample(200, 0, report.period);
        let n: Vec<f64> = samples.iter().map(|t| t.nseint() as f64).collect();
        assert!(autocorrelation(&n, 1) < 0.5);
    }

    #[test]
    fn period_search_gives_up_at_cap() {
        let mut c = chain(ExponentialModel::crtt(0.64).unwrap(), 1.0, 1).with_trace(false);
        c.run(1000);
        let cfg = PeriodConfig {
            renewal_fraction: 0.9999,
            cap: 64,
            ..PeriodConfig::default()
        };
        assert!(matches!(c.sampling_period(&cfg), Err(Error::Sampler(_))));
        let bad = PeriodConfig {
            renewal_fraction: 1.0,
            ..PeriodConfig::default()
        };
        assert!(c.sampling_period(&bad).is_err());
    }

    #[test]
    fn autocorrelation_basics() {
        let alt: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert!(autocorrelation(&alt, 1) < -0.9);
        assert_eq!(autocorrelation(&[1.0, 1.0, 1.0], 1), 0.0);
    }
}

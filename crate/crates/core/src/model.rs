//! Exponential-family Gibbs models `h(T) ∝ exp(θᵀ t(T))` on T-tessellations.
//!
//! Statistic components carry their own sign (`-a2`, `-angle_sum`), so every
//! model's energy is the plain dot product `θᵀ t`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tessellation::{Flip, LocalOp, Merge, MoveEffect, Split, TTessellation};

/// A user-supplied statistic component.
///
/// `evaluate` may return `-inf` to mark a state of zero density. Such a
/// component makes the model forbid every move leading to that state.
pub trait CustomStatistic: Send + Sync {
    fn name(&self) -> &str;

    fn evaluate(&self, t: &TTessellation) -> f64;

    /// `t(op T) - t(T)`. The default applies the operator to a copy.
    fn increment(&self, t: &TTessellation, op: &LocalOp, _effect: &MoveEffect) -> Result<f64> {
        let before = self.evaluate(t);
        let mut next = t.clone();
        next.apply(op)?;
        Ok(self.evaluate(&next) - before)
    }

    /// Whether `h(T) = 0` implies `h(sT) = 0` for every split `s`.
    fn hereditary(&self) -> bool;
}

#[derive(Clone)]
pub enum Statistic {
    /// Number of internal segments.
    Nseint,
    /// Minus the sum of squared cell areas.
    NegA2,
    /// Minus the sum of `pi/2 - phi` over interior T-vertices.
    NegAngleSum,
    Custom(Arc<dyn CustomStatistic>),
}

impl fmt::Debug for Statistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl Statistic {
    pub fn name(&self) -> String {
        match self {
            Statistic::Nseint => "nseint".into(),
            Statistic::NegA2 => "-a2".into(),
            Statistic::NegAngleSum => "-angle_sum".into(),
            Statistic::Custom(c) => c.name().into(),
        }
    }

    pub fn evaluate(&self, t: &TTessellation) -> f64 {
        match self {
            Statistic::Nseint => t.nseint() as f64,
            Statistic::NegA2 => -t.a2(),
            Statistic::NegAngleSum => -t.angle_sum(),
            Statistic::Custom(c) => c.evaluate(t),
        }
    }

    fn increment(&self, t: &TTessellation, op: &LocalOp, e: &MoveEffect) -> Result<f64> {
        Ok(match self {
            Statistic::Nseint => e.d_nseint as f64,
            Statistic::NegA2 => -e.d_a2(),
            Statistic::NegAngleSum => -e.d_angle_sum(),
            Statistic::Custom(c) => c.increment(t, op, e)?,
        })
    }

    fn hereditary(&self) -> bool {
        match self {
            Statistic::Custom(c) => c.hereditary(),
            _ => true,
        }
    }
}

/// `t(op T) - t(T)`; `forbidden` is set when the target state has zero density.
#[derive(Debug, Clone, PartialEq)]
pub struct StatIncrement {
    pub values: Vec<f64>,
    pub forbidden: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Crtt,
    Area,
    Angle,
}

impl ModelKind {
    pub fn dimension(self) -> usize {
        match self {
            ModelKind::Crtt => 1,
            ModelKind::Area | ModelKind::Angle => 2,
        }
    }

    pub fn statistics(self) -> Vec<Statistic> {
        match self {
            ModelKind::Crtt => vec![Statistic::Nseint],
            ModelKind::Area => vec![Statistic::Nseint, Statistic::NegA2],
            ModelKind::Angle => vec![Statistic::Nseint, Statistic::NegAngleSum],
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Crtt => "crtt",
            ModelKind::Area => "area",
            ModelKind::Angle => "angle",
        })
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "crtt" => Ok(ModelKind::Crtt),
            "area" => Ok(ModelKind::Area),
            "angle" => Ok(ModelKind::Angle),
            other => Err(Error::InvalidModel(format!("unknown model '{other}'"))),
        }
    }
}

/// JSON model description: `{"model": "crtt", "theta": [0.64]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub model: ModelKind,
    pub theta: Vec<f64>,
}

impl ModelConfig {
    pub fn build(&self) -> Result<ExponentialModel> {
        ExponentialModel::builtin(self.model, self.theta.clone())
    }
}

#[derive(Debug, Clone)]
pub struct ExponentialModel {
    theta: Vec<f64>,
    stats: Vec<Statistic>,
    kind: Option<ModelKind>,
}

impl ExponentialModel {
    pub fn new(theta: Vec<f64>, stats: Vec<Statistic>) -> Result<Self> {
        if stats.is_empty() {
            return Err(Error::InvalidModel("a model needs at least one statistic".into()));
        }
        if theta.len() != stats.len() {
            return Err(Error::InvalidModel(format!(
                "{} parameters for {} statistics",
                theta.len(),
                stats.len()
            )));
        }
        if let Some(x) = theta.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidModel(format!("non-finite parameter {x}")));
        }
        Ok(ExponentialModel {
            theta,
            stats,
            kind: None,
        })
    }

    pub fn builtin(kind: ModelKind, theta: Vec<f64>) -> Result<Self> {
        let mut m = Self::new(theta, kind.statistics())?;
        m.kind = Some(kind);
        Ok(m)
    }

    /// Completely random T-tessellation model, `t = nseint`.
    pub fn crtt(theta: f64) -> Result<Self> {
        Self::builtin(ModelKind::Crtt, vec![theta])
    }

    /// `t = (nseint, -a2)`.
    pub fn area(theta1: f64, theta2: f64) -> Result<Self> {
        Self::builtin(ModelKind::Area, vec![theta1, theta2])
    }

    /// `t = (nseint, -angle_sum)`.
    pub fn angle(theta1: f64, theta2: f64) -> Result<Self> {
        Self::builtin(ModelKind::Angle, vec![theta1, theta2])
    }

    pub fn dimension(&self) -> usize {
        self.theta.len()
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn statistics(&self) -> &[Statistic] {
        &self.stats
    }

    pub fn kind(&self) -> Option<ModelKind> {
        self.kind
    }

    /// Same statistics, other parameter.
    pub fn with_theta(&self, theta: Vec<f64>) -> Result<Self> {
        let mut m = Self::new(theta, self.stats.clone())?;
        m.kind = self.kind;
        Ok(m)
    }

    pub fn config(&self) -> Option<ModelConfig> {
        self.kind.map(|model| ModelConfig {
            model,
            theta: self.theta.clone(),
        })
    }

    /// Densities of built-in models are positive everywhere.
    pub fn is_hereditary(&self) -> bool {
        self.stats.iter().all(Statistic::hereditary)
    }

    pub fn t(&self, t: &TTessellation) -> Vec<f64> {
        self.stats.iter().map(|s| s.evaluate(t)).collect()
    }

    /// `θᵀ t(T)`, or `-inf` for a state of zero density.
    pub fn energy(&self, t: &TTessellation) -> f64 {
        let v = self.t(t);
        if v.contains(&f64::NEG_INFINITY) {
            return f64::NEG_INFINITY;
        }
        self.dot(&v)
    }

    pub fn dot(&self, v: &[f64]) -> f64 {
        self.theta.iter().zip(v).map(|(a, b)| a * b).sum()
    }

    pub fn increment(&self, t: &TTessellation, op: &LocalOp) -> Result<StatIncrement> {
        let effect = t.preview(op)?;
        self.increment_with(t, op, &effect)
    }

    /// Increment from an already computed [`MoveEffect`].
    pub fn increment_with(
        &self,
        t: &TTessellation,
        op: &LocalOp,
        effect: &MoveEffect,
    ) -> Result<StatIncrement> {
        let mut values = Vec::with_capacity(self.stats.len());
        let mut forbidden = false;
        for s in &self.stats {
            let v = s.increment(t, op, effect)?;
            if v.is_nan() || v == f64::NEG_INFINITY {
                forbidden = true;
            }
            values.push(v);
        }
        Ok(StatIncrement { values, forbidden })
    }

    /// `log λ = θᵀ Δt`, `-inf` for forbidden moves.
    pub fn log_intensity(&self, inc: &StatIncrement) -> f64 {
        if inc.forbidden {
            return f64::NEG_INFINITY;
        }
        self.dot(&inc.values)
    }

    pub fn intensity(&self, inc: &StatIncrement) -> f64 {
        self.log_intensity(inc).exp()
    }

    pub fn papangelou_split(&self, t: &TTessellation, s: &Split) -> Result<f64> {
        Ok(self.intensity(&self.increment(t, &LocalOp::Split(*s))?))
    }

    pub fn papangelou_merge(&self, t: &TTessellation, m: &Merge) -> Result<f64> {
        Ok(self.intensity(&self.increment(t, &LocalOp::Merge(*m))?))
    }

    pub fn papangelou_flip(&self, t: &TTessellation, f: &Flip) -> Result<f64> {
        Ok(self.intensity(&self.increment(t, &LocalOp::Flip(*f))?))
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use rand::seq::IndexedRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::geometry::{ConvexPolygon, Line};

    fn square() -> TTessellation {
        TTessellation::empty(ConvexPolygon::square(1.0).unwrap())
    }

    fn split_at(x: f64) -> TTessellation {
        let mut t = square();
        t.apply_split(&Split { cell: 0, line: Line::new(0.0, x) }).unwrap();
        t
    }

    fn random_state(seed: u64, n: usize) -> (TTessellation, ChaCha8Rng) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = square();
        for _ in 0..n {
            let s = t.sample_split(&mut rng);
            t.apply_split(&s).unwrap();
        }
        for _ in 0..n {
            if let Some(f) = t.enumerate_flips().choose(&mut rng).copied() {
                let _ = t.apply_flip(&f);
            }
        }
        (t, rng)
    }

    fn all_ops(t: &TTessellation, rng: &mut ChaCha8Rng) -> Vec<LocalOp> {
        let mut ops: Vec<LocalOp> = (0..5).map(|_| LocalOp::Split(t.sample_split(rng))).collect();
        ops.extend(t.enumerate_merges().into_iter().map(LocalOp::Merge));
        ops.extend(t.enumerate_flips().into_iter().map(LocalOp::Flip));
        ops
    }

    /// Caps the number of internal segments; zero density beyond the cap.
    struct Capped(usize);

    impl CustomStatistic for Capped {
        fn name(&self) -> &str {
            "capped"
        }

        fn evaluate(&self, t: &TTessellation) -> f64 {
            if t.nseint() > self.0 {
                f64::NEG_INFINITY
            } else {
                0.0
            }
        }

        fn hereditary(&self) -> bool {
            true
        }
    }

    #[test]
    fn statistic_vectors() {
        let crtt = ExponentialModel::crtt(0.64).unwrap();
        assert_eq!(crtt.t(&square()), vec![0.0]);
        let area = ExponentialModel::area(1.0, 1.0).unwrap();
        let t = area.t(&split_at(0.4));
        assert_eq!(t[0], 1.0);
        assert!((t[1] + 0.52).abs() < 1e-12);
        let angle = ExponentialModel::angle(1.0, 1.0).unwrap();
        let mut u = split_at(0.4);
        let left = u.cells().iter().position(|c| c.polygon().centroid().x < 0.4).unwrap();
        u.apply_split(&Split { cell: left, line: Line::new(0.5 * PI, 0.3) }).unwrap();
        assert_eq!(angle.t(&u)[1].abs(), 0.0);
    }

    #[test]
    fn model_validation() {
        assert!(ExponentialModel::new(vec![], vec![]).is_err());
        assert!(ExponentialModel::new(vec![1.0, 2.0], vec![Statistic::Nseint]).is_err());
        assert!(ExponentialModel::crtt(f64::NAN).is_err());
        assert!(ExponentialModel::area(0.0, f64::INFINITY).is_err());
        let cfg: ModelConfig = serde_json::from_str(r#"{"model":"angle","theta":[2.49,2.5]}"#).unwrap();
        let m = cfg.build().unwrap();
        assert_eq!(m.kind(), Some(ModelKind::Angle));
        assert_eq!(m.config().unwrap(), cfg);
        let bad: ModelConfig = serde_json::from_str(r#"{"model":"crtt","theta":[1,2]}"#).unwrap();
        assert!(bad.build().is_err());
        assert!(serde_json::from_str::<ModelConfig>(r#"{"model":"foo","theta":[1]}"#).is_err());
    }

    #[test]
    fn crtt_intensities() {
        let m = ExponentialModel::crtt(0.64).unwrap();
        let (t, mut rng) = random_state(1, 15);
        for op in all_ops(&t, &mut rng) {
            let inc = m.increment(&t, &op).unwrap();
            let (expected_inc, expected_lambda) = match op {
                LocalOp::Split(_) => (1.0, 0.64f64.exp()),
                LocalOp::Merge(_) => (-1.0, (-0.64f64).exp()),
                LocalOp::Flip(_) => (0.0, 1.0),
            };
            assert_eq!(inc.values, vec![expected_inc]);
            assert!((m.intensity(&inc) - expected_lambda).abs() < 1e-12);
        }
        assert!((0.64f64.exp() - 1.8965).abs() < 1e-4);
    }

    #[test]
    fn zero_theta_gives_unit_intensities() {
        for m in [
            ExponentialModel::crtt(0.0).unwrap(),
            ExponentialModel::area(0.0, 0.0).unwrap(),
            ExponentialModel::angle(0.0, 0.0).unwrap(),
        ] {
            let (t, mut rng) = random_state(2, 10);
            for op in all_ops(&t, &mut rng) {
                assert_eq!(m.intensity(&m.increment(&t, &op).unwrap()), 1.0);
            }
        }
    }

    #[test]
    fn increments_match_full_recompute() {
        let models = [
            ExponentialModel::crtt(0.3).unwrap(),
            ExponentialModel::area(0.5, 3.0).unwrap(),
            ExponentialModel::angle(0.5, 2.0).unwrap(),
        ];
        for seed in 0..6 {
            let (t, mut rng) = random_state(10 + seed, 20);
            for op in all_ops(&t, &mut rng) {
                let mut next = t.clone();
                if next.apply(&op).is_err() {
                    continue;
                }
                for m in &models {
                    let inc = m.increment(&t, &op).unwrap();
                    let before = m.t(&t);
                    let after = m.t(&next);
                    for k in 0..m.dimension() {
                        assert!((after[k] - before[k] - inc.values[k]).abs() < 1e-8);
                    }
                    // energy-difference oracle for the intensity
                    let lambda = m.intensity(&inc);
                    let ratio = (m.energy(&next) - m.energy(&t)).exp();
                    assert!((lambda - ratio).abs() <= 1e-9 * ratio.max(1.0));
                }
            }
        }
    }

    #[test]
    fn area_split_increment() {
        let m = ExponentialModel::area(0.0, 1.0).unwrap();
        let t = square();
        let inc = m.increment(&t, &LocalOp::Split(Split { cell: 0, line: Line::new(0.0, 0.4) })).unwrap();
        // A = 1 split into 0.4 + 0.6: -a2 changes by 1 - 0.16 - 0.36
        assert!((inc.values[1] - 0.48).abs() < 1e-12);
    }

    #[test]
    fn split_and_merge_intensities_are_reciprocal() {
        let models = [
            ExponentialModel::crtt(0.64).unwrap(),
            ExponentialModel::area(0.53, 835.2).unwrap(),
            ExponentialModel::angle(2.49, 2.5).unwrap(),
        ];
        for seed in 0..5 {
            let (t, mut rng) = random_state(20 + seed, 12);
            for _ in 0..10 {
                let s = t.sample_split(&mut rng);
                let mut next = t.clone();
                let applied = next.apply_full(&LocalOp::Split(s)).unwrap();
                let LocalOp::Merge(m_inv) = applied.inverse else { unreachable!() };
                for m in &models {
                    let ls = m.papangelou_split(&t, &s).unwrap();
                    let lm = m.papangelou_merge(&next, &m_inv).unwrap();
                    assert!((ls * lm - 1.0).abs() < 1e-10, "{}", ls * lm);
                }
            }
        }
    }

    #[test]
    fn distinct_parameters_give_distinct_energies() {
        let probes: Vec<TTessellation> = (0..4).map(|s| random_state(30 + s, 8).0).collect();
        let pairs = [
            (ExponentialModel::crtt(0.64).unwrap(), ExponentialModel::crtt(0.65).unwrap()),
            (ExponentialModel::area(0.5, 1.0).unwrap(), ExponentialModel::area(0.5, 1.1).unwrap()),
            (ExponentialModel::angle(1.0, 2.0).unwrap(), ExponentialModel::angle(1.1, 2.0).unwrap()),
        ];
        for (a, b) in pairs {
            assert!(probes.iter().any(|t| (a.energy(t) - b.energy(t)).abs() > 1e-9));
        }
    }

    #[test]
    fn hereditary_zero_states_are_absorbing() {
        let cap = 3;
        let m = ExponentialModel::new(
            vec![0.2, 1.0],
            vec![Statistic::Nseint, Statistic::Custom(Arc::new(Capped(cap)))],
        )
        .unwrap();
        assert!(m.is_hereditary());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut t = square();
        for _ in 0..cap {
            let s = t.sample_split(&mut rng);
            assert!(m.papangelou_split(&t, &s).unwrap() > 0.0);
            t.apply_split(&s).unwrap();
        }
        // every split from the cap is forbidden, and so is every split after it
        for _ in 0..20 {
            let s = t.sample_split(&mut rng);
            assert_eq!(m.papangelou_split(&t, &s).unwrap(), 0.0);
        }
        let s = t.sample_split(&mut rng);
        t.apply_split(&s).unwrap();
        for _ in 0..20 {
            let s = t.sample_split(&mut rng);
            let mut next = t.clone();
            next.apply_split(&s).unwrap();
            assert_eq!(m.energy(&next), f64::NEG_INFINITY);
        }
        assert!(ExponentialModel::crtt(1.0).unwrap().is_hereditary());
    }
}

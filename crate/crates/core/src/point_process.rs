//! Finite Gibbs point patterns on a convex window: Papangelou intensities,
//! Besag's log-pseudolikelihood, and the logistic criterion with dummy points.

use std::io::{BufRead, Write};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ConvexPolygon, Point};

#[derive(Debug, Clone)]
pub struct PointPattern {
    window: ConvexPolygon,
    points: Vec<Point>,
}

impl PointPattern {
    pub fn new(window: ConvexPolygon, points: Vec<Point>) -> Result<Self> {
        let eps = window.eps();
        for (i, p) in points.iter().enumerate() {
            if !p.is_finite() || !window.contains(*p, eps) {
                return Err(Error::InvalidPattern(format!("point {i} outside the window")));
            }
        }
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by(|&a, &b| points[a].x.total_cmp(&points[b].x));
        for (k, &i) in order.iter().enumerate() {
            for &j in &order[k + 1..] {
                if points[j].x - points[i].x > eps {
                    break;
                }
                if points[i].dist(points[j]) <= eps {
                    return Err(Error::InvalidPattern(format!("points {i} and {j} coincide")));
                }
            }
        }
        Ok(PointPattern { window, points })
    }

    pub fn empty(window: ConvexPolygon) -> Self {
        PointPattern {
            window,
            points: Vec::new(),
        }
    }

    pub fn window(&self) -> &ConvexPolygon {
        &self.window
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Homogeneous Poisson pattern of intensity `rho`.
    pub fn poisson<R: Rng + ?Sized>(window: ConvexPolygon, rho: f64, rng: &mut R) -> Result<Self> {
        if !(rho.is_finite() && rho >= 0.0) {
            return Err(Error::InvalidPattern(format!("invalid intensity {rho}")));
        }
        let mean = rho * window.area();
        let n = if mean > 0.0 {
            Poisson::new(mean)
                .map_err(|e| Error::InvalidPattern(e.to_string()))?
                .sample(rng) as usize
        } else {
            0
        };
        let points = (0..n).map(|_| uniform_in(&window, rng)).collect();
        Ok(PointPattern { window, points })
    }

    /// Reads `x,y` rows; a non-numeric first line is taken as a header.
    pub fn read_csv<R: BufRead>(window: ConvexPolygon, reader: R) -> Result<Self> {
        let mut points = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split(',').map(str::trim);
            let (Some(x), Some(y)) = (parts.next(), parts.next()) else {
                return Err(Error::InvalidPattern(format!("line {}: expected x,y", i + 1)));
            };
            match (x.parse::<f64>(), y.parse::<f64>()) {
                (Ok(x), Ok(y)) => points.push(Point::new(x, y)),
                _ if points.is_empty() && i == 0 => continue,
                _ => return Err(Error::InvalidPattern(format!("line {}: not a number", i + 1))),
            }
        }
        Self::new(window, points)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x,y")?;
        for p in &self.points {
            writeln!(w, "{},{}", p.x, p.y)?;
        }
        Ok(())
    }
}

/// JSON window descriptor: `{"vertices": [[x, y], ...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WindowJson {
    pub vertices: Vec<[f64; 2]>,
}

impl WindowJson {
    pub fn polygon(&self) -> Result<ConvexPolygon> {
        ConvexPolygon::new(self.vertices.iter().map(|&v| v.into()).collect())
    }
}

fn uniform_in<R: Rng + ?Sized>(w: &ConvexPolygon, rng: &mut R) -> Point {
    let (lo, hi) = w.bounding_box();
    loop {
        let p = Point::new(rng.random_range(lo.x..hi.x), rng.random_range(lo.y..hi.y));
        if w.contains(p, 0.0) {
            return p;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum PpStatistic {
    /// Number of points.
    Count,
    /// Minus the number of pairs closer than `r`.
    NegCloseness { r: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PpModel {
    theta: Vec<f64>,
    stats: Vec<PpStatistic>,
}

impl PpModel {
    pub fn new(theta: Vec<f64>, stats: Vec<PpStatistic>) -> Result<Self> {
        if stats.is_empty() || theta.len() != stats.len() {
            return Err(Error::InvalidModel("parameter and statistic counts differ".into()));
        }
        if theta.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidModel("non-finite parameter".into()));
        }
        for s in &stats {
            if let PpStatistic::NegCloseness { r } = s {
                if !(r.is_finite() && *r > 0.0) {
                    return Err(Error::InvalidModel(format!("invalid interaction radius {r}")));
                }
            }
        }
        Ok(PpModel { theta, stats })
    }

    /// Homogeneous Poisson, `t = n`.
    pub fn poisson(theta: f64) -> Result<Self> {
        Self::new(vec![theta], vec![PpStatistic::Count])
    }

    /// Strauss, `t = (n, -s_R)`.
    pub fn strauss(theta1: f64, theta2: f64, r: f64) -> Result<Self> {
        Self::new(vec![theta1, theta2], vec![PpStatistic::Count, PpStatistic::NegCloseness { r }])
    }

    pub fn dimension(&self) -> usize {
        self.theta.len()
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn statistics(&self) -> &[PpStatistic] {
        &self.stats
    }

    pub fn with_theta(&self, theta: Vec<f64>) -> Result<Self> {
        Self::new(theta, self.stats.clone())
    }

    /// Statistic vector of a pattern.
    pub fn t(&self, x: &[Point]) -> Vec<f64> {
        self.stats
            .iter()
            .map(|s| match *s {
                PpStatistic::Count => x.len() as f64,
                PpStatistic::NegCloseness { r } => {
                    let mut pairs = 0usize;
                    for i in 0..x.len() {
                        for j in i + 1..x.len() {
                            if x[i].dist(x[j]) <= r {
                                pairs += 1;
                            }
                        }
                    }
                    -(pairs as f64)
                }
            })
            .collect()
    }

    /// `t(X ∪ {u}) - t(X)`, ignoring the point of index `skip` in `x`.
    pub fn increment(&self, u: Point, x: &[Point], skip: Option<usize>) -> Vec<f64> {
        self.stats
            .iter()
            .map(|s| match *s {
                PpStatistic::Count => 1.0,
                PpStatistic::NegCloseness { r } => {
                    let n = x
                        .iter()
                        .enumerate()
                        .filter(|&(i, p)| Some(i) != skip && p.dist(u) <= r)
                        .count();
                    -(n as f64)
                }
            })
            .collect()
    }

    fn eta(&self, inc: &[f64]) -> f64 {
        self.theta.iter().zip(inc).map(|(a, b)| a * b).sum()
    }

    /// `λ(u; X) = exp(θᵀ t(u, X))`.
    pub fn papangelou(&self, u: Point, x: &PointPattern) -> f64 {
        self.eta(&self.increment(u, x.points(), None)).exp()
    }
}

/// Midpoint grid quadrature on a convex window.
#[derive(Debug, Clone)]
pub struct Quadrature {
    pub nodes: Vec<Point>,
    pub weights: Vec<f64>,
}

impl Quadrature {
    /// `n × n` midpoints of the bounding box kept inside the window, with
    /// weights scaled to sum to the window area.
    pub fn grid(window: &ConvexPolygon, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("quadrature needs a positive resolution".into()));
        }
        let (lo, hi) = window.bounding_box();
        let (dx, dy) = ((hi.x - lo.x) / n as f64, (hi.y - lo.y) / n as f64);
        let mut nodes = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let p = Point::new(lo.x + (i as f64 + 0.5) * dx, lo.y + (j as f64 + 0.5) * dy);
                if window.contains(p, 0.0) {
                    nodes.push(p);
                }
            }
        }
        if nodes.is_empty() {
            return Err(Error::Config("no quadrature node inside the window".into()));
        }
        let w = window.area() / nodes.len() as f64;
        Ok(Quadrature {
            weights: vec![w; nodes.len()],
            nodes,
        })
    }
}

pub const DEFAULT_GRID: usize = 128;

/// Besag's log-pseudolikelihood `Σ log λ(x; X∖x) − ∫ λ(u; X) du`.
/// Returns `-inf` when the intensity vanishes at a data point.
pub fn lpl_pp(model: &PpModel, x: &PointPattern, theta: &[f64], quad: &Quadrature) -> Result<f64> {
    let m = model.with_theta(theta.to_vec())?;
    let pts = x.points();
    let mut sum = 0.0;
    for (i, &p) in pts.iter().enumerate() {
        let eta = m.eta(&m.increment(p, pts, Some(i)));
        if eta == f64::NEG_INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        sum += eta;
    }
    let integral: f64 = quad
        .nodes
        .iter()
        .zip(&quad.weights)
        .map(|(&u, w)| w * m.eta(&m.increment(u, pts, None)).exp())
        .sum();
    Ok(sum - integral)
}

/// Gradient and Hessian of [`lpl_pp`].
pub fn lpl_pp_derivatives(
    model: &PpModel,
    x: &PointPattern,
    theta: &[f64],
    quad: &Quadrature,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let m = model.with_theta(theta.to_vec())?;
    let d = m.dimension();
    let pts = x.points();
    let mut g = DVector::zeros(d);
    let mut h = DMatrix::zeros(d, d);
    for (i, &p) in pts.iter().enumerate() {
        g += DVector::from_vec(m.increment(p, pts, Some(i)));
    }
    for (&u, w) in quad.nodes.iter().zip(&quad.weights) {
        let t = DVector::from_vec(m.increment(u, pts, None));
        let lam = m.eta(t.as_slice()).exp();
        g -= &t * (w * lam);
        h.ger(-w * lam, &t, &t, 1.0);
    }
    Ok((g, h))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fit {
    pub theta: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub criterion: f64,
}

fn newton_step(h: &DMatrix<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
    (-h).cholesky().map(|c| c.solve(g))
}

/// Maximizes [`lpl_pp`] by damped Newton iterations.
pub fn fit_lpl(model: &PpModel, x: &PointPattern, quad: &Quadrature) -> Result<Fit> {
    if x.is_empty() {
        return Err(Error::Estimation("empty pattern: no finite maximizer".into()));
    }
    let mut theta = DVector::from_column_slice(model.theta());
    let mut value = lpl_pp(model, x, theta.as_slice(), quad)?;
    for it in 1..=100 {
        let (g, h) = lpl_pp_derivatives(model, x, theta.as_slice(), quad)?;
        let step = newton_step(&h, &g)
            .ok_or_else(|| Error::Estimation("singular pseudolikelihood Hessian".into()))?;
        let mut eps = 1.0;
        let (next, v) = loop {
            let cand = &theta + &step * eps;
            let v = lpl_pp(model, x, cand.as_slice(), quad)?;
            // Round-off in the criterion is ignored near the optimum.
            if v >= value - 1e-12 * (1.0 + value.abs()) || eps < 1e-10 {
                break (cand, v);
            }
            eps *= 0.5;
        };
        let moved = (&next - &theta).norm();
        theta = next;
        value = v;
        if moved < 1e-12 * (1.0 + theta.norm()) || g.norm() < 1e-12 * (1.0 + x.len() as f64) {
            return Ok(Fit {
                theta: theta.as_slice().to_vec(),
                iterations: it,
                converged: true,
                criterion: value,
            });
        }
        if theta.norm() > 1e6 {
            return Err(Error::Estimation("pseudolikelihood has no finite maximizer".into()));
        }
    }
    Ok(Fit {
        theta: theta.as_slice().to_vec(),
        iterations: 100,
        converged: false,
        criterion: value,
    })
}

/// Intensity of the dummy process.
#[derive(Clone)]
pub enum Rho {
    Constant(f64),
    Function(Arc<dyn Fn(Point) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for Rho {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Rho::Constant(c) => write!(f, "Constant({c})"),
            Rho::Function(_) => f.write_str("Function"),
        }
    }
}

impl Rho {
    pub fn at(&self, p: Point) -> f64 {
        match self {
            Rho::Constant(c) => *c,
            Rho::Function(f) => f(p),
        }
    }
}

/// `log(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Design of the logistic regression: covariates, response, offset `-log ρ`.
struct Design {
    rows: Vec<(DVector<f64>, bool, f64)>,
}

fn design(model: &PpModel, x: &PointPattern, y: &PointPattern, rho: &Rho) -> Result<Design> {
    let eps = x.window().eps();
    for (i, p) in y.points().iter().enumerate() {
        if x.points().iter().any(|q| q.dist(*p) <= eps) {
            return Err(Error::InvalidPattern(format!(
                "dummy point {i} coincides with a data point"
            )));
        }
    }
    let offset = |p: Point| -> Result<f64> {
        let r = rho.at(p);
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::InvalidMeasure(format!("dummy intensity {r} at {p:?}")));
        }
        Ok(-r.ln())
    };
    let pts = x.points();
    let mut rows = Vec::with_capacity(x.len() + y.len());
    for (i, &p) in pts.iter().enumerate() {
        rows.push((DVector::from_vec(model.increment(p, pts, Some(i))), true, offset(p)?));
    }
    for &p in y.points() {
        rows.push((DVector::from_vec(model.increment(p, pts, None)), false, offset(p)?));
    }
    Ok(Design { rows })
}

impl Design {
    /// Value, gradient and Hessian of the binomial log-likelihood with
    /// `logit P = θᵀ t + offset`.
    fn evaluate(&self, theta: &DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>) {
        let d = theta.len();
        let mut v = 0.0;
        let mut g = DVector::zeros(d);
        let mut h = DMatrix::zeros(d, d);
        for (t, z, off) in &self.rows {
            let eta = theta.dot(t) + off;
            v -= if *z { softplus(-eta) } else { softplus(eta) };
            let p = sigmoid(eta);
            let r = if *z { 1.0 - p } else { -p };
            g += t * r;
            h.ger(-p * (1.0 - p), t, t, 1.0);
        }
        (v, g, h)
    }
}

/// `Σ_X log λ/(λ+ρ) + Σ_Y log ρ/(λ+ρ)`.
pub fn logistic_criterion(
    model: &PpModel,
    x: &PointPattern,
    y: &PointPattern,
    rho: &Rho,
    theta: &[f64],
) -> Result<f64> {
    let m = model.with_theta(theta.to_vec())?;
    Ok(design(&m, x, y, rho)?.evaluate(&DVector::from_column_slice(theta)).0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogisticFit {
    pub theta: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub criterion: f64,
    pub n_data: usize,
    pub n_dummy: usize,
    /// Norm of the final gradient.
    pub gradient_norm: f64,
}

/// Newton maximizer of the logistic criterion for given dummy points.
pub fn fit_logistic_with(
    model: &PpModel,
    x: &PointPattern,
    y: &PointPattern,
    rho: &Rho,
) -> Result<LogisticFit> {
    if x.is_empty() {
        return Err(Error::Estimation("no data point: the criterion has no maximizer".into()));
    }
    if y.is_empty() {
        return Err(Error::Estimation("no dummy point: the criterion has no maximizer".into()));
    }
    let des = design(model, x, y, rho)?;
    let mut theta = DVector::from_column_slice(model.theta());
    let (mut value, mut g, mut h) = des.evaluate(&theta);
    for it in 1..=200 {
        let step = newton_step(&h, &g).ok_or_else(|| {
            Error::Estimation(format!(
                "separation: singular information matrix at theta = {:?}",
                theta.as_slice()
            ))
        })?;
        let mut eps = 1.0;
        let next = loop {
            let cand = &theta + &step * eps;
            let (v, _, _) = des.evaluate(&cand);
            if v >= value || eps < 1e-10 {
                break cand;
            }
            eps *= 0.5;
        };
        let moved = (&next - &theta).norm();
        theta = next;
        (value, g, h) = des.evaluate(&theta);
        if theta.iter().any(|v| v.abs() > 1e4) {
            return Err(Error::Estimation(format!(
                "separation: estimate diverges ({:?})",
                theta.as_slice()
            )));
        }
        if moved < 1e-10 * (1.0 + theta.norm()) {
            return Ok(LogisticFit {
                theta: theta.as_slice().to_vec(),
                iterations: it,
                converged: true,
                criterion: value,
                n_data: x.len(),
                n_dummy: y.len(),
                gradient_norm: g.norm(),
            });
        }
    }
    Err(Error::Estimation(format!(
        "no convergence; possible separation (gradient norm {})",
        g.norm()
    )))
}

/// Draws Poisson dummy points of intensity `rho` and fits the logistic
/// criterion.
pub fn fit_logistic<R: Rng + ?Sized>(
    model: &PpModel,
    x: &PointPattern,
    rho: f64,
    rng: &mut R,
) -> Result<LogisticFit> {
    if !(rho.is_finite() && rho > 0.0) {
        return Err(Error::Config(format!("dummy intensity must be positive, got {rho}")));
    }
    let y = PointPattern::poisson(x.window().clone(), rho, rng)?;
    fit_logistic_with(model, x, &y, &Rho::Constant(rho))
}

/// Birth-death Metropolis-Hastings simulation of a Gibbs pattern, started
/// from the empty pattern.
pub fn simulate_birth_death<R: Rng + ?Sized>(
    model: &PpModel,
    window: &ConvexPolygon,
    steps: usize,
    rng: &mut R,
) -> PointPattern {
    let area = window.area();
    let mut pts: Vec<Point> = Vec::new();
    for _ in 0..steps {
        if rng.random::<bool>() {
            let u = uniform_in(window, rng);
            let lam = model.eta(&model.increment(u, &pts, None)).exp();
            let r = lam * area / (pts.len() + 1) as f64;
            if rng.random::<f64>() < r {
                pts.push(u);
            }
        } else if !pts.is_empty() {
            let i = rng.random_range(0..pts.len());
            let lam = model.eta(&model.increment(pts[i], &pts, Some(i))).exp();
            let r = pts.len() as f64 / (area * lam);
            if rng.random::<f64>() < r {
                pts.swap_remove(i);
            }
        }
    }
    PointPattern {
        window: window.clone(),
        points: pts,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SubconfigCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub se_lhs: f64,
    pub se_rhs: f64,
    pub z: f64,
}

/// Monte-Carlo check of `E Σ_{Y ⊂ X} φ(Y) = e^ν E φ(X)` for a Poisson
/// pattern `X` of total mean `ν` on the unit square. Both sides use
/// independent streams derived from `rng`.
pub fn subconfig_mean_check<R, F>(nu_total: f64, phi: F, n_mc: usize, rng: &mut R) -> Result<SubconfigCheck>
where
    R: Rng + ?Sized,
    F: Fn(&[Point]) -> f64,
{
    const MAX_POINTS: usize = 20;
    if !(nu_total.is_finite() && nu_total >= 0.0) {
        return Err(Error::InvalidMeasure(format!("invalid total mass {nu_total}")));
    }
    if n_mc < 2 {
        return Err(Error::Config("at least two Monte-Carlo draws".into()));
    }
    let window = ConvexPolygon::square(1.0)?;
    let mut left = ChaCha8Rng::seed_from_u64(rng.random());
    let mut right = ChaCha8Rng::seed_from_u64(rng.random());
    let draw = |r: &mut ChaCha8Rng| PointPattern::poisson(window.clone(), nu_total, r);
    let mean_se = |v: &[f64]| {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, (var / n).sqrt())
    };
    let mut lhs = Vec::with_capacity(n_mc);
    let mut sub = Vec::with_capacity(MAX_POINTS);
    for _ in 0..n_mc {
        let x = draw(&mut left)?;
        let n = x.len();
        if n > MAX_POINTS {
            return Err(Error::InvalidPattern(format!(
                "pattern of {n} points is too large to enumerate its subsets"
            )));
        }
        let mut total = 0.0;
        for mask in 0u32..(1u32 << n) {
            sub.clear();
            sub.extend((0..n).filter(|k| mask & (1 << k) != 0).map(|k| x.points()[k]));
            total += phi(&sub);
        }
        lhs.push(total);
    }
    let scale = nu_total.exp();
    let mut rhs = Vec::with_capacity(n_mc);
    for _ in 0..n_mc {
        let x = draw(&mut right)?;
        rhs.push(scale * phi(x.points()));
    }
    let (l, sl) = mean_se(&lhs);
    let (r, sr) = mean_se(&rhs);
    let se = (sl * sl + sr * sr).sqrt();
    let z = if se > 0.0 {
        (l - r) / se
    } else if (l - r).abs() <= 1e-12 * l.abs().max(1.0) {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(SubconfigCheck {
        lhs: l,
        rhs: r,
        se_lhs: sl,
        se_rhs: sr,
        z,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> ConvexPolygon {
        ConvexPolygon::square(1.0).unwrap()
    }

    fn pattern(seed: u64, rate: f64) -> PointPattern {
        PointPattern::poisson(unit(), rate, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn pattern_validation() {
        assert!(PointPattern::new(unit(), vec![Point::new(2.0, 0.5)]).is_err());
        assert!(PointPattern::new(unit(), vec![Point::new(0.5, 0.5), Point::new(0.5, 0.5)]).is_err());
        let p = PointPattern::new(unit(), vec![Point::new(0.1, 0.2), Point::new(0.3, 0.4)]).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let back = PointPattern::read_csv(unit(), buf.as_slice()).unwrap();
        assert_eq!(back.points(), p.points());
        assert!(PointPattern::read_csv(unit(), "x,y\n0.1,zz\n".as_bytes()).is_err());
    }

    #[test]
    fn intensities() {
        let x = pattern(1, 30.0);
        let poisson = PpModel::poisson(0.7).unwrap();
        assert!((poisson.papangelou(Point::new(0.5, 0.5), &x) - 0.7f64.exp()).abs() < 1e-12);
        let strauss = PpModel::strauss(1.0, 0.4, 0.1).unwrap();
        for k in 0..20 {
            let u = Point::new(0.05 * k as f64, 0.5);
            let mut with = x.points().to_vec();
            with.push(u);
            let dt: Vec<f64> = strauss
                .t(&with)
                .iter()
                .zip(strauss.t(x.points()))
                .map(|(a, b)| a - b)
                .collect();
            let want = (1.0 * dt[0] + 0.4 * dt[1]).exp();
            assert!((strauss.papangelou(u, &x) - want).abs() < 1e-12);
            let neighbours = x.points().iter().filter(|p| p.dist(u) <= 0.1).count();
            assert!((want - (1.0 - 0.4 * neighbours as f64).exp()).abs() < 1e-12);
        }
        let zero = PpModel::strauss(0.0, 0.0, 0.1).unwrap();
        assert_eq!(zero.papangelou(Point::new(0.3, 0.3), &x), 1.0);
    }

    #[test]
    fn poisson_lpl_closed_form() {
        let x = pattern(2, 50.0);
        let n = x.len() as f64;
        let q = Quadrature::grid(x.window(), 16).unwrap();
        let m = PpModel::poisson(0.0).unwrap();
        for th in [-1.0, 0.5, 3.0] {
            let v = lpl_pp(&m, &x, &[th], &q).unwrap();
            assert!((v - (n * th - th.exp())).abs() < 1e-9);
        }
        for res in [8, 64, DEFAULT_GRID] {
            let q = Quadrature::grid(x.window(), res).unwrap();
            let fit = fit_lpl(&m, &x, &q).unwrap();
            assert!((fit.theta[0] - n.ln()).abs() < 1e-10, "{res}: {fit:?} vs {}", n.ln());
        }
        let empty = PointPattern::empty(unit());
        assert!((lpl_pp(&m, &empty, &[0.3], &q).unwrap() + 0.3f64.exp()).abs() < 1e-12);
        assert!(fit_lpl(&m, &empty, &q).is_err());
    }

    #[test]
    fn quadrature_on_a_triangle_has_exact_mass() {
        let tri = ConvexPolygon::new(vec![Point::new(0.0, 0.0), Point::new(2.0, 0.0), Point::new(0.0, 1.0)]).unwrap();
        let q = Quadrature::grid(&tri, 32).unwrap();
        assert!((q.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(q.nodes.iter().all(|p| tri.contains(*p, 0.0)));
    }

    #[test]
    fn strauss_nests_poisson() {
        let x = pattern(3, 40.0);
        let y = pattern(4, 200.0);
        let q = Quadrature::grid(x.window(), 32).unwrap();
        let p = PpModel::poisson(0.0).unwrap();
        let s = PpModel::strauss(0.0, 0.0, 0.05).unwrap();
        let rho = Rho::Constant(200.0);
        for th in [-0.5, 1.0, 3.7] {
            let a = lpl_pp(&p, &x, &[th], &q).unwrap();
            let b = lpl_pp(&s, &x, &[th, 0.0], &q).unwrap();
            assert!((a - b).abs() < 1e-9);
            let a = logistic_criterion(&p, &x, &y, &rho, &[th]).unwrap();
            let b = logistic_criterion(&s, &x, &y, &rho, &[th, 0.0]).unwrap();
            assert!((a - b).abs() < 1e-9);
        }
        let fp = fit_logistic_with(&p, &x, &y, &rho).unwrap();
        let fs = fit_logistic_with(&s, &x, &y, &rho).unwrap();
        assert!(fs.theta[0].is_finite());
        assert!(fp.converged && fs.converged);
    }

    #[test]
    fn lpl_gradient_matches_finite_differences() {
        let x = pattern(5, 60.0);
        let q = Quadrature::grid(x.window(), 24).unwrap();
        let m = PpModel::strauss(0.0, 0.0, 0.08).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..10 {
            let th = [rng.random_range(2.0..5.0), rng.random_range(-1.0..1.0)];
            let (g, h) = lpl_pp_derivatives(&m, &x, &th, &q).unwrap();
            for k in 0..2 {
                let step = 1e-6;
                let mut a = th;
                let mut b = th;
                a[k] += step;
                b[k] -= step;
                let fd = (lpl_pp(&m, &x, &a, &q).unwrap() - lpl_pp(&m, &x, &b, &q).unwrap()) / (2.0 * step);
                assert!((fd - g[k]).abs() <= 1e-5 * g[k].abs().max(1.0), "{fd} {}", g[k]);
            }
            let eig = nalgebra::SymmetricEigen::new(h).eigenvalues;
            assert!(eig.iter().all(|e| *e <= 1e-10));
        }
    }

    #[test]
    fn logistic_link_sign() {
        // a single data point and a single dummy point, Poisson model
        let x = PointPattern::new(unit(), vec![Point::new(0.2, 0.2)]).unwrap();
        let y = PointPattern::new(unit(), vec![Point::new(0.8, 0.8)]).unwrap();
        let m = PpModel::poisson(0.0).unwrap();
        let (rho, th) = (3.0f64, 0.4f64);
        let v = logistic_criterion(&m, &x, &y, &Rho::Constant(rho), &[th]).unwrap();
        let lam = th.exp();
        let want = (lam / (lam + rho)).ln() + (rho / (lam + rho)).ln();
        assert!((v - want).abs() < 1e-12);
        // P[data] = λ/(λ+ρ) = sigmoid(θ - log ρ)
        assert!((lam / (lam + rho) - sigmoid(th - rho.ln())).abs() < 1e-15);
    }

    #[test]
    fn logistic_criterion_concave_and_tails() {
        let x = pattern(7, 40.0);
        let y = pattern(8, 100.0);
        let m = PpModel::strauss(0.0, 0.0, 0.07).unwrap();
        let rho = Rho::Constant(100.0);
        let des = design(&m, &x, &y, &rho).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let th = DVector::from_vec(vec![rng.random_range(-3.0..6.0), rng.random_range(-2.0..2.0)]);
            let (_, _, h) = des.evaluate(&th);
            assert!(nalgebra::SymmetricEigen::new(h).eigenvalues.iter().all(|e| *e <= 1e-10));
        }
        let p = PpModel::poisson(0.0).unwrap();
        let mut last = f64::INFINITY;
        for th in [-10.0, -20.0, -40.0, -80.0] {
            let v = logistic_criterion(&p, &x, &y, &rho, &[th]).unwrap();
            assert!(v < last);
            last = v;
        }
        assert!(last < -1000.0);
    }

    #[test]
    fn logistic_input_errors() {
        let x = pattern(10, 30.0);
        let m = PpModel::poisson(0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(fit_logistic(&m, &PointPattern::empty(unit()), 100.0, &mut rng).is_err());
        assert!(fit_logistic(&m, &x, 0.0, &mut rng).is_err());
        let y = PointPattern::new(unit(), vec![x.points()[0]]).unwrap();
        assert!(logistic_criterion(&m, &x, &y, &Rho::Constant(1.0), &[0.0]).is_err());
    }

    #[test]
    fn logistic_poisson_approaches_closed_form() {
        let x = pattern(11, 50.0);
        let n = x.len() as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let fit = fit_logistic(&PpModel::poisson(0.0).unwrap(), &x, 100.0 * n, &mut rng).unwrap();
        let est = fit.theta[0].exp();
        assert!((est - n).abs() / n < 0.05, "{est} vs {n}");
    }

    #[test]
    fn logistic_on_strauss_data() {
        let truth = PpModel::strauss(4.5, 1.0, 0.08).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut est = Vec::new();
        for _ in 0..15 {
            let x = simulate_birth_death(&truth, &unit(), 4000, &mut rng);
            let start = PpModel::strauss(0.0, 0.0, 0.08).unwrap();
            let f = fit_logistic(&start, &x, 400.0, &mut rng).unwrap();
            est.push(f.theta[1]);
        }
        est.sort_by(f64::total_cmp);
        let median = est[est.len() / 2];
        assert!((median - 1.0).abs() < 0.75, "median {median}");
    }

    #[test]
    fn subconfig_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let one = subconfig_mean_check(2.0, |_| 1.0, 20_000, &mut rng).unwrap();
        assert!((one.rhs / 2.0f64.exp() - 1.0).abs() < 1e-12);
        assert!(one.z.abs() < 3.0);
        let empty = subconfig_mean_check(2.0, |y| (y.is_empty()) as u8 as f64, 20_000, &mut rng).unwrap();
        assert_eq!(empty.lhs, 1.0);
        assert!(empty.z.abs() < 3.0);
        let size = subconfig_mean_check(2.0, |y| y.len() as f64, 20_000, &mut rng).unwrap();
        assert!(size.z.abs() < 3.0);
        assert!(subconfig_mean_check(30.0, |_| 1.0, 10, &mut rng).is_err());
    }
}

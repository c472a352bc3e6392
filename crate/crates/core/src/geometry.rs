//! Planar primitives: points, lines in normal form, convex polygons,
//! line clipping and isotropic random lines.
//!
//! Lines are parameterized as `{(x, y) : x cos(alpha) + y sin(alpha) = p}` with
//! `alpha` in `[0, pi)`. The invariant measure `d(alpha) dp` restricted to the
//! lines hitting a convex set `K` has total mass `perimeter(K)`.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative geometric tolerance; absolute tolerances are this times a diameter.
pub const REL_EPS: f64 = 1e-9;

/// Absolute tolerance for a configuration of the given diameter.
pub fn geo_eps(diameter: f64) -> f64 {
    REL_EPS * diameter.max(f64::MIN_POSITIVE)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, o: Point) -> f64 {
        (self - o).norm()
    }

    pub fn midpoint(self, o: Point) -> Point {
        Point::new(0.5 * (self.x + o.x), 0.5 * (self.y + o.y))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Rotation by `angle` radians around the origin.
    pub fn rotated(self, angle: f64) -> Point {
        let (s, c) = angle.sin_cos();
        Point::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, k: f64) -> Point {
        Point::new(self.x * k, self.y * k)
    }
}

impl Neg for Point {
    type Output = Point;
    fn neg(self) -> Point {
        Point::new(-self.x, -self.y)
    }
}

impl From<[f64; 2]> for Point {
    fn from(v: [f64; 2]) -> Self {
        Point::new(v[0], v[1])
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

/// A line `x cos(alpha) + y sin(alpha) = p`.
///
/// Points on the line are addressed by a signed abscissa `t` along the unit
/// direction `(-sin(alpha), cos(alpha))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub alpha: f64,
    pub p: f64,
}

impl Line {
    /// Builds a line, reducing `alpha` into `[0, pi)` (flipping the sign of `p`
    /// when the normal is reversed).
    pub fn new(alpha: f64, p: f64) -> Self {
        let mut a = alpha.rem_euclid(2.0 * PI);
        let mut p = p;
        if a >= PI {
            a -= PI;
            p = -p;
        }
        if a >= PI {
            a = 0.0;
        }
        Line { alpha: a, p }
    }

    /// The line through two distinct points.
    pub fn through(a: Point, b: Point) -> Self {
        let d = b - a;
        let alpha = d.y.atan2(d.x) + 0.5 * PI;
        let n = Point::new(alpha.cos(), alpha.sin());
        Line::new(alpha, n.dot(a))
    }

    pub fn normal(&self) -> Point {
        Point::new(self.alpha.cos(), self.alpha.sin())
    }

    pub fn direction(&self) -> Point {
        Point::new(-self.alpha.sin(), self.alpha.cos())
    }

    pub fn at(&self, t: f64) -> Point {
        let (s, c) = self.alpha.sin_cos();
        Point::new(self.p * c - t * s, self.p * s + t * c)
    }

    /// Abscissa of the orthogonal projection of `q` on the line.
    pub fn param(&self, q: Point) -> f64 {
        q.dot(self.direction())
    }

    pub fn signed_distance(&self, q: Point) -> f64 {
        q.dot(self.normal()) - self.p
    }

    /// Acute angle between the two lines, in `[0, pi/2]`.
    pub fn acute_angle(&self, other: &Line) -> f64 {
        let d = (self.alpha - other.alpha).abs();
        d.min(PI - d)
    }

    /// Intersection point, `None` for (nearly) parallel lines.
    pub fn intersection(&self, other: &Line) -> Option<Point> {
        let (s1, c1) = self.alpha.sin_cos();
        let (s2, c2) = other.alpha.sin_cos();
        let det = c1 * s2 - s1 * c2;
        if det.abs() < 1e-14 {
            return None;
        }
        Some(Point::new(
            (self.p * s2 - other.p * s1) / det,
            (c1 * other.p - c2 * self.p) / det,
        ))
    }
}

/// Result of clipping a line by a convex polygon: the abscissa interval
/// `[t_in, t_out]` and the polygon edges through which the line enters and
/// exits. Edge `k` runs from vertex `k` to vertex `k + 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Clip {
    pub t_in: f64,
    pub t_out: f64,
    pub edge_in: usize,
    pub edge_out: usize,
}

impl Clip {
    pub fn length(&self) -> f64 {
        self.t_out - self.t_in
    }
}

/// A convex polygon with counter-clockwise vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Point>", into = "Vec<Point>")]
pub struct ConvexPolygon {
    vertices: Vec<Point>,
}

impl TryFrom<Vec<Point>> for ConvexPolygon {
    type Error = Error;
    fn try_from(v: Vec<Point>) -> Result<Self> {
        ConvexPolygon::new(v)
    }
}

impl From<ConvexPolygon> for Vec<Point> {
    fn from(p: ConvexPolygon) -> Self {
        p.vertices
    }
}

impl ConvexPolygon {
    /// Validates and builds a polygon. Clockwise input is reversed; collinear
    /// and repeated vertices are dropped.
    pub fn new(vertices: Vec<Point>) -> Result<Self> {
        if vertices.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegeneratePolygon("non-finite coordinate".into()));
        }
        if vertices.len() < 3 {
            return Err(Error::DegeneratePolygon(format!(
                "{} vertices, need at least 3",
                vertices.len()
            )));
        }
        let mut vs = vertices;
        let diameter = diameter_of(&vs);
        let eps = geo_eps(diameter);
        let a = signed_area(&vs);
        if a.abs() <= eps * diameter {
            return Err(Error::DegeneratePolygon("zero area".into()));
        }
        if a < 0.0 {
            vs.reverse();
        }
        vs.dedup_by(|b, a| a.dist(*b) <= eps);
        if vs.len() > 1 && vs[0].dist(vs[vs.len() - 1]) <= eps {
            vs.pop();
        }
        let vs = drop_collinear(vs, eps);
        if vs.len() < 3 {
            return Err(Error::DegeneratePolygon("fewer than 3 distinct corners".into()));
        }
        let n = vs.len();
        let mut turning = 0.0;
        for i in 0..n {
            let e0 = vs[(i + 1) % n] - vs[i];
            let e1 = vs[(i + 2) % n] - vs[(i + 1) % n];
            if e0.cross(e1) < -eps * e0.norm().max(e1.norm()) {
                return Err(Error::DegeneratePolygon("not convex".into()));
            }
            turning += e0.cross(e1).atan2(e0.dot(e1));
        }
        if (turning - 2.0 * PI).abs() > 1e-6 {
            return Err(Error::DegeneratePolygon("self-intersecting".into()));
        }
        Ok(ConvexPolygon { vertices: vs })
    }

    /// Builds from counter-clockwise corners known to be convex.
    pub(crate) fn from_ccw_unchecked(vertices: Vec<Point>) -> Self {
        debug_assert!(vertices.len() >= 3);
        ConvexPolygon { vertices }
    }

    pub fn rectangle(width: f64, height: f64) -> Result<Self> {
        if !(width > 0.0 && height > 0.0 && width.is_finite() && height.is_finite()) {
            return Err(Error::DegeneratePolygon(format!("rectangle {width} x {height}")));
        }
        ConvexPolygon::new(vec![
            Point::new(0.0, 0.0),
            Point::new(width, 0.0),
            Point::new(width, height),
            Point::new(0.0, height),
        ])
    }

    pub fn square(side: f64) -> Result<Self> {
        Self::rectangle(side, side)
    }

    /// Regular `n`-gon with circumradius `radius` centred at the origin.
    pub fn regular(n: usize, radius: f64) -> Result<Self> {
        ConvexPolygon::new(
            (0..n)
                .map(|k| {
                    let a = 2.0 * PI * k as f64 / n as f64;
                    Point::new(radius * a.cos(), radius * a.sin())
                })
                .collect(),
        )
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn vertex(&self, k: usize) -> Point {
        self.vertices[k % self.vertices.len()]
    }

    /// Edge `k` as `(start, end)`.
    pub fn edge(&self, k: usize) -> (Point, Point) {
        (self.vertex(k), self.vertex(k + 1))
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    pub fn perimeter(&self) -> f64 {
        let n = self.vertices.len();
        (0..n)
            .map(|k| self.vertices[k].dist(self.vertices[(k + 1) % n]))
            .sum()
    }

    pub fn centroid(&self) -> Point {
        // Relative to the first corner to limit cancellation on small cells.
        let o = self.vertices[0];
        let n = self.vertices.len();
        let mut cx = 0.0;
        let mut cy = 0.0;
        let mut a2 = 0.0;
        for k in 1..n - 1 {
            let p = self.vertices[k] - o;
            let q = self.vertices[k + 1] - o;
            let c = p.cross(q);
            a2 += c;
            cx += (p.x + q.x) * c;
            cy += (p.y + q.y) * c;
        }
        o + Point::new(cx / (3.0 * a2), cy / (3.0 * a2))
    }

    pub fn diameter(&self) -> f64 {
        diameter_of(&self.vertices)
    }

    pub fn eps(&self) -> f64 {
        geo_eps(self.diameter())
    }

    pub fn bounding_box(&self) -> (Point, Point) {
        let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for v in &self.vertices {
            lo.x = lo.x.min(v.x);
            lo.y = lo.y.min(v.y);
            hi.x = hi.x.max(v.x);
            hi.y = hi.y.max(v.y);
        }
        (lo, hi)
    }

    /// True when `q` is inside or within `tol` of the boundary.
    pub fn contains(&self, q: Point, tol: f64) -> bool {
        let n = self.vertices.len();
        (0..n).all(|k| {
            let a = self.vertices[k];
            let b = self.vertices[(k + 1) % n];
            let e = b - a;
            e.cross(q - a) >= -tol * e.norm()
        })
    }

    /// Distance from `q` to the polygon boundary.
    pub fn boundary_distance(&self, q: Point) -> f64 {
        let n = self.vertices.len();
        (0..n)
            .map(|k| point_segment_distance(q, self.vertices[k], self.vertices[(k + 1) % n]))
            .fold(f64::INFINITY, f64::min)
    }

    /// Clips `line` by the closed polygon. Chords not longer than `min_len`
    /// (including tangency at a vertex) are misses.
    pub fn clip(&self, line: &Line, min_len: f64) -> Option<Clip> {
        let n = self.vertices.len();
        let d = line.direction();
        let base = line.normal() * line.p;
        let mut t_in = f64::NEG_INFINITY;
        let mut t_out = f64::INFINITY;
        let mut edge_in = usize::MAX;
        let mut edge_out = usize::MAX;
        for k in 0..n {
            let a = self.vertices[k];
            let e = self.vertices[(k + 1) % n] - a;
            let len = e.norm();
            // inside: cross(e, q(t) - a) / |e| >= 0
            let c0 = e.cross(base - a) / len;
            let c1 = e.cross(d) / len;
            if c1.abs() < 1e-15 {
                if c0 <= 0.0 {
                    return None;
                }
                continue;
            }
            let t = -c0 / c1;
            if c1 > 0.0 {
                if t > t_in {
                    t_in = t;
                    edge_in = k;
                }
            } else if t < t_out {
                t_out = t;
                edge_out = k;
            }
        }
        if edge_in == usize::MAX || edge_out == usize::MAX || t_out - t_in <= min_len {
            return None;
        }
        Some(Clip {
            t_in,
            t_out,
            edge_in,
            edge_out,
        })
    }

    /// Smallest enclosing circle of the vertices as `(centre, radius)`.
    pub fn enclosing_circle(&self) -> (Point, f64) {
        min_enclosing_circle(&self.vertices)
    }

    pub fn translated(&self, v: Point) -> ConvexPolygon {
        ConvexPolygon::from_ccw_unchecked(self.vertices.iter().map(|&p| p + v).collect())
    }

    pub fn rotated(&self, angle: f64) -> ConvexPolygon {
        ConvexPolygon::from_ccw_unchecked(self.vertices.iter().map(|p| p.rotated(angle)).collect())
    }
}

/// Signed shoelace area (positive for counter-clockwise order).
pub fn signed_area(vs: &[Point]) -> f64 {
    let Some(&o) = vs.first() else {
        return 0.0;
    };
    let n = vs.len();
    0.5 * (1..n.saturating_sub(1))
        .map(|k| (vs[k] - o).cross(vs[k + 1] - o))
        .sum::<f64>()
}

/// Shoelace area of a polygon given by its vertices; errors when degenerate.
pub fn area(vertices: &[Point]) -> Result<f64> {
    Ok(ConvexPolygon::new(vertices.to_vec())?.area())
}

pub fn perimeter(poly: &ConvexPolygon) -> f64 {
    poly.perimeter()
}

/// Intersection of a line with a closed convex polygon.
pub fn chord(poly: &ConvexPolygon, line: &Line) -> Option<(Point, Point)> {
    poly.clip(line, poly.eps())
        .map(|c| (line.at(c.t_in), line.at(c.t_out)))
}

/// A uniform isotropic line hitting `poly`, drawn by rejection from the
/// smallest enclosing circle.
pub fn sample_hitting_line<R: Rng + ?Sized>(poly: &ConvexPolygon, rng: &mut R) -> Line {
    let (centre, radius) = poly.enclosing_circle();
    let eps = poly.eps();
    loop {
        let line = sample_line_in_circle(centre, radius, rng);
        if poly.clip(&line, eps).is_some() {
            return line;
        }
    }
}

/// A line from the invariant measure restricted to lines hitting a disc.
pub fn sample_line_in_circle<R: Rng + ?Sized>(centre: Point, radius: f64, rng: &mut R) -> Line {
    let alpha = rng.random::<f64>() * PI;
    let n = Point::new(alpha.cos(), alpha.sin());
    let p = centre.dot(n) + radius * (2.0 * rng.random::<f64>() - 1.0);
    Line { alpha, p }
}

pub fn point_segment_distance(q: Point, a: Point, b: Point) -> f64 {
    let e = b - a;
    let l2 = e.dot(e);
    if l2 == 0.0 {
        return q.dist(a);
    }
    let s = ((q - a).dot(e) / l2).clamp(0.0, 1.0);
    q.dist(a + e * s)
}

fn diameter_of(vs: &[Point]) -> f64 {
    let mut d: f64 = 0.0;
    for i in 0..vs.len() {
        for j in i + 1..vs.len() {
            d = d.max(vs[i].dist(vs[j]));
        }
    }
    d
}

fn drop_collinear(vs: Vec<Point>, eps: f64) -> Vec<Point> {
    let mut out = vs;
    loop {
        let n = out.len();
        if n < 3 {
            return out;
        }
        let found = (0..n).find(|&i| {
            let a = out[(i + n - 1) % n];
            let b = out[i];
            let c = out[(i + 1) % n];
            let e = c - a;
            (e.cross(b - a) / e.norm()).abs() <= eps && (b - a).dot(c - b) > 0.0
        });
        match found {
            Some(i) => {
                out.remove(i);
            }
            None => return out,
        }
    }
}

fn min_enclosing_circle(pts: &[Point]) -> (Point, f64) {
    let inside = |c: Point, r: f64, p: Point| p.dist(c) <= r * (1.0 + 1e-12) + 1e-300;
    let mut c = pts[0];
    let mut r = 0.0;
    for i in 1..pts.len() {
        if inside(c, r, pts[i]) {
            continue;
        }
        c = pts[i];
        r = 0.0;
        for j in 0..i {
            if inside(c, r, pts[j]) {
                continue;
            }
            c = pts[i].midpoint(pts[j]);
            r = c.dist(pts[i]);
            for k in 0..j {
                if inside(c, r, pts[k]) {
                    continue;
                }
                match circumcircle(pts[i], pts[j], pts[k]) {
                    Some((cc, rr)) => {
                        c = cc;
                        r = rr;
                    }
                    None => {
                        // collinear triple: the widest pair spans the others
                        let pairs = [(pts[i], pts[j]), (pts[i], pts[k]), (pts[j], pts[k])];
                        let (a, b) = pairs
                            .into_iter()
                            .max_by(|x, y| x.0.dist(x.1).total_cmp(&y.0.dist(y.1)))
                            .unwrap();
                        c = a.midpoint(b);
                        r = c.dist(a);
                    }
                }
            }
        }
    }
    (c, r)
}

fn circumcircle(a: Point, b: Point, c: Point) -> Option<(Point, f64)> {
    let d = 2.0 * (a.x * (b.y - c.y) + b.x * (c.y - a.y) + c.x * (a.y - b.y));
    if d.abs() < 1e-300 {
        return None;
    }
    let a2 = a.dot(a);
    let b2 = b.dot(b);
    let c2 = c.dot(c);
    let ux = (a2 * (b.y - c.y) + b2 * (c.y - a.y) + c2 * (a.y - b.y)) / d;
    let uy = (a2 * (c.x - b.x) + b2 * (a.x - c.x) + c2 * (b.x - a.x)) / d;
    let centre = Point::new(ux, uy);
    let r = centre.dist(a).max(centre.dist(b)).max(centre.dist(c));
    Some((centre, r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_square() -> ConvexPolygon {
        ConvexPolygon::square(1.0).unwrap()
    }

    #[test]
    fn area_and_perimeter_basics() {
        assert_eq!(unit_square().area(), 1.0);
        let tri = area(&[Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0)]).unwrap();
        assert!((tri - 0.5).abs() < 1e-15);
        assert_eq!(unit_square().perimeter(), 4.0);
        assert_eq!(ConvexPolygon::rectangle(2.0, 1.0).unwrap().perimeter(), 6.0);
        let hex = ConvexPolygon::regular(6, 1.0).unwrap();
        assert!((hex.perimeter() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_polygons_are_rejected() {
        let flat = vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(2.0, 0.0)];
        assert!(matches!(area(&flat), Err(Error::DegeneratePolygon(_))));
        assert!(ConvexPolygon::new(vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0)]).is_err());
        let dart = vec![
            Point::new(0.0, 0.0),
            Point::new(2.0, 0.0),
            Point::new(1.0, 0.3),
            Point::new(1.0, 2.0),
        ];
        assert!(ConvexPolygon::new(dart).is_err());
    }

    #[test]
    fn clockwise_input_is_reoriented() {
        let cw = ConvexPolygon::new(vec![
            Point::new(0.0, 0.0),
            Point::new(0.0, 1.0),
            Point::new(1.0, 1.0),
            Point::new(1.0, 0.0),
        ])
        .unwrap();
        assert!(cw.area() > 0.0);
    }

    #[test]
    fn chord_examples() {
        let sq = unit_square();
        let (a, b) = chord(&sq, &Line::new(0.0, 0.5)).unwrap();
        let (lo, hi) = if a.y < b.y { (a, b) } else { (b, a) };
        assert!(lo.dist(Point::new(0.5, 0.0)) < 1e-12);
        assert!(hi.dist(Point::new(0.5, 1.0)) < 1e-12);
        assert!(chord(&sq, &Line::new(0.0, 2.0)).is_none());
        // diagonal direction through the centre: normal at 3pi/4
        let alpha = 0.75 * PI;
        let c = Point::new(0.5, 0.5);
        let l = Line::new(alpha, c.dot(Point::new(alpha.cos(), alpha.sin())));
        let (a, b) = chord(&sq, &l).unwrap();
        assert!((a.dist(b) - 2f64.sqrt()).abs() < 1e-12);
        // tangent at a corner
        let t = Line::new(0.25 * PI, 0.0);
        assert!(chord(&sq, &t).is_none());
    }

    #[test]
    fn line_through_and_param() {
        let a = Point::new(0.3, -1.0);
        let b = Point::new(2.0, 4.0);
        let l = Line::through(a, b);
        assert!((0.0..PI).contains(&l.alpha));
        assert!(l.signed_distance(a).abs() < 1e-12);
        assert!(l.signed_distance(b).abs() < 1e-12);
        assert!(l.at(l.param(a)).dist(a) < 1e-12);
    }

    #[test]
    fn enclosing_circle_covers_vertices() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let pts: Vec<Point> = (0..8)
                .map(|_| Point::new(rng.random::<f64>(), rng.random::<f64>()))
                .collect();
            let (c, r) = min_enclosing_circle(&pts);
            for p in &pts {
                assert!(p.dist(c) <= r * (1.0 + 1e-9));
            }
        }
        let (c, r) = unit_square().enclosing_circle();
        assert!(c.dist(Point::new(0.5, 0.5)) < 1e-12);
        assert!((r - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn sampled_lines_always_hit() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let tri = ConvexPolygon::new(vec![
            Point::new(0.0, 0.0),
            Point::new(3.0, 0.2),
            Point::new(0.5, 0.4),
        ])
        .unwrap();
        for _ in 0..2000 {
            let l = sample_hitting_line(&tri, &mut rng);
            assert!(chord(&tri, &l).is_some());
        }
    }
}

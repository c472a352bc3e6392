//! T-tessellation state and the split, merge and flip operators.
//!
//! A tessellation is stored as a set of segments, each carrying its supporting
//! [`Line`], the abscissae of its two ends, the segment blocking each end and
//! the sorted list of T-vertices ("stems") where other segments end on it.
//! Domain sides are stored as boundary segments. Cells are convex polygons of
//! true corners whose sides are labelled with the segment containing them.

mod build;
mod ops;

use std::f64::consts::PI;

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{self, ConvexPolygon, Line, Point};

pub use build::{SegmentJson, TessellationJson};
pub use ops::{Applied, MoveEffect, MoveKind};

pub type SegId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum End {
    First,
    Last,
}

impl End {
    pub fn index(self) -> usize {
        match self {
            End::First => 0,
            End::Last => 1,
        }
    }

    pub fn from_index(i: usize) -> End {
        if i == 0 {
            End::First
        } else {
            End::Last
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Internal,
    Boundary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentKind {
    NonBlocking,
    Blocking,
}

/// A T-vertex in the interior of a segment, where segment `seg` ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Stem {
    pub t: f64,
    pub seg: SegId,
}

#[derive(Debug, Clone)]
pub struct Segment {
    pub(crate) line: Line,
    pub(crate) t: [f64; 2],
    pub(crate) blockers: [SegId; 2],
    pub(crate) stems: Vec<Stem>,
    pub(crate) location: Location,
    pub(crate) serial: u64,
}

impl Segment {
    pub fn line(&self) -> Line {
        self.line
    }

    pub fn endpoint(&self, end: End) -> Point {
        self.line.at(self.t[end.index()])
    }

    pub fn endpoints(&self) -> (Point, Point) {
        (self.endpoint(End::First), self.endpoint(End::Last))
    }

    pub fn length(&self) -> f64 {
        self.t[1] - self.t[0]
    }

    pub fn blocker(&self, end: End) -> SegId {
        self.blockers[end.index()]
    }

    pub fn location(&self) -> Location {
        self.location
    }

    pub fn is_internal(&self) -> bool {
        self.location == Location::Internal
    }

    /// Non-blocking segments are made of a single edge.
    pub fn kind(&self) -> SegmentKind {
        if self.stems.is_empty() {
            SegmentKind::NonBlocking
        } else {
            SegmentKind::Blocking
        }
    }

    pub fn edge_count(&self) -> usize {
        self.stems.len() + 1
    }

    /// Points where other segments end on this one, in abscissa order.
    pub fn t_vertices(&self) -> impl Iterator<Item = (Point, SegId)> + '_ {
        self.stems.iter().map(|s| (self.line.at(s.t), s.seg))
    }

    /// Unique identifier of this segment's lifetime (kept through flips).
    pub fn serial(&self) -> u64 {
        self.serial
    }

    pub(crate) fn insert_stem(&mut self, stem: Stem) {
        let pos = self.stems.partition_point(|s| s.t < stem.t);
        self.stems.insert(pos, stem);
    }

    pub(crate) fn remove_stem(&mut self, seg: SegId) -> Option<Stem> {
        let pos = self.stems.iter().position(|s| s.seg == seg)?;
        Some(self.stems.remove(pos))
    }
}

/// A convex cell; side `k` runs from corner `k` to corner `k + 1` and lies on
/// segment `sides[k]`.
#[derive(Debug, Clone)]
pub struct Cell {
    pub(crate) polygon: ConvexPolygon,
    pub(crate) sides: Vec<SegId>,
    pub(crate) area: f64,
    pub(crate) perimeter: f64,
}

impl Cell {
    pub(crate) fn new(corners: Vec<Point>, sides: Vec<SegId>) -> Cell {
        debug_assert_eq!(corners.len(), sides.len());
        let polygon = ConvexPolygon::from_ccw_unchecked(corners);
        let area = polygon.area();
        let perimeter = polygon.perimeter();
        Cell {
            polygon,
            sides,
            area,
            perimeter,
        }
    }

    pub fn polygon(&self) -> &ConvexPolygon {
        &self.polygon
    }

    pub fn sides(&self) -> &[SegId] {
        &self.sides
    }

    pub fn area(&self) -> f64 {
        self.area
    }

    pub fn perimeter(&self) -> f64 {
        self.perimeter
    }

    pub(crate) fn side_of(&self, seg: SegId) -> Option<usize> {
        self.sides.iter().position(|&s| s == seg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub cell: usize,
    pub line: Line,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Merge {
    pub segment: SegId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Flip {
    pub segment: SegId,
    pub end: End,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LocalOp {
    Split(Split),
    Merge(Merge),
    Flip(Flip),
}

impl LocalOp {
    pub fn kind(&self) -> MoveKind {
        match self {
            LocalOp::Split(_) => MoveKind::Split,
            LocalOp::Merge(_) => MoveKind::Merge,
            LocalOp::Flip(_) => MoveKind::Flip,
        }
    }
}

/// Scalar summaries of a tessellation.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct BasicStatistics {
    /// Internal segments.
    pub nseint: usize,
    /// Internal non-blocking segments.
    pub nnbseint: usize,
    /// Internal blocking segments.
    pub nbseint: usize,
    /// Sum of cell perimeters.
    pub u: f64,
    /// Sum of squared cell areas.
    pub a2: f64,
    /// Sum over interior T-vertices of `pi/2 - phi`, `phi` the acute angle.
    pub angle_sum: f64,
}

#[derive(Debug, Clone)]
pub struct TTessellation {
    pub(crate) domain: ConvexPolygon,
    pub(crate) eps: f64,
    pub(crate) segments: Vec<Option<Segment>>,
    pub(crate) free: Vec<SegId>,
    pub(crate) cells: Vec<Cell>,
    pub(crate) next_serial: u64,
    pub(crate) u: f64,
}

/// `pi/2 - phi` for the acute angle `phi` between two lines.
pub fn angle_deficit(a: &Line, b: &Line) -> f64 {
    0.5 * PI - a.acute_angle(b)
}

impl TTessellation {
    /// The tessellation with a single cell, the domain itself.
    pub fn empty(domain: ConvexPolygon) -> TTessellation {
        let eps = domain.eps();
        let n = domain.len();
        let mut segments = Vec::with_capacity(n);
        let mut sides = Vec::with_capacity(n);
        for k in 0..n {
            let (a, b) = domain.edge(k);
            let line = Line::through(a, b);
            let (ta, tb) = (line.param(a), line.param(b));
            // corner k is shared with side k-1, corner k+1 with side k+1
            let prev = (k + n - 1) % n;
            let next = (k + 1) % n;
            let (t, blockers) = if ta < tb {
                ([ta, tb], [prev, next])
            } else {
                ([tb, ta], [next, prev])
            };
            segments.push(Some(Segment {
                line,
                t,
                blockers,
                stems: Vec::new(),
                location: Location::Boundary,
                serial: k as u64,
            }));
            sides.push(k);
        }
        let cell = Cell::new(domain.vertices().to_vec(), sides);
        let u = cell.perimeter;
        TTessellation {
            domain,
            eps,
            segments,
            free: Vec::new(),
            cells: vec![cell],
            next_serial: n as u64,
            u,
        }
    }

    pub fn domain(&self) -> &ConvexPolygon {
        &self.domain
    }

    /// Geometric tolerance: `1e-9` times the domain diameter.
    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    pub fn segment(&self, id: SegId) -> Option<&Segment> {
        self.segments.get(id).and_then(|s| s.as_ref())
    }

    pub(crate) fn seg(&self, id: SegId) -> &Segment {
        self.segments[id].as_ref().expect("dangling segment id")
    }

    pub(crate) fn seg_mut(&mut self, id: SegId) -> &mut Segment {
        self.segments[id].as_mut().expect("dangling segment id")
    }

    /// All live segments (boundary sides included) with their ids.
    pub fn segments(&self) -> impl Iterator<Item = (SegId, &Segment)> {
        self.segments
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.as_ref().map(|s| (i, s)))
    }

    pub fn internal_segments(&self) -> impl Iterator<Item = (SegId, &Segment)> {
        self.segments().filter(|(_, s)| s.is_internal())
    }

    pub fn nseint(&self) -> usize {
        self.internal_segments().count()
    }

    pub fn nnbseint(&self) -> usize {
        self.internal_segments()
            .filter(|(_, s)| s.stems.is_empty())
            .count()
    }

    pub fn nbseint(&self) -> usize {
        self.internal_segments()
            .filter(|(_, s)| !s.stems.is_empty())
            .count()
    }

    /// Sum of cell perimeters `u(T)`.
    pub fn u(&self) -> f64 {
        self.u
    }

    /// Sum of cell perimeters recomputed from the cells.
    pub fn u_recomputed(&self) -> f64 {
        self.cells.iter().map(|c| c.polygon.perimeter()).sum()
    }

    /// Total mass `u(T)/pi` of the split measure.
    pub fn split_total_mass(&self) -> f64 {
        self.u / PI
    }

    pub fn a2(&self) -> f64 {
        self.cells.iter().map(|c| c.area * c.area).sum()
    }

    /// Sum of `pi/2 - phi(v)` over T-vertices in the interior of the domain.
    pub fn angle_sum(&self) -> f64 {
        self.internal_segments()
            .flat_map(|(_, s)| s.stems.iter().map(move |st| (s, st.seg)))
            .map(|(s, stem)| angle_deficit(&s.line, &self.seg(stem).line))
            .sum()
    }

    pub fn statistics_basic(&self) -> BasicStatistics {
        let (mut nseint, mut nnbseint, mut nbseint) = (0, 0, 0);
        for (_, s) in self.internal_segments() {
            nseint += 1;
            if s.stems.is_empty() {
                nnbseint += 1;
            } else {
                nbseint += 1;
            }
        }
        BasicStatistics {
            nseint,
            nnbseint,
            nbseint,
            u: self.u,
            a2: self.a2(),
            angle_sum: self.angle_sum(),
        }
    }

    /// Merges applicable to this tessellation: one per internal non-blocking
    /// segment.
    pub fn enumerate_merges(&self) -> Vec<Merge> {
        self.internal_segments()
            .filter(|(_, s)| s.stems.is_empty())
            .map(|(id, _)| Merge { segment: id })
            .collect()
    }

    /// Flips applicable to this tessellation: both ends of every internal
    /// blocking segment.
    pub fn enumerate_flips(&self) -> Vec<Flip> {
        self.internal_segments()
            .filter(|(_, s)| !s.stems.is_empty())
            .flat_map(|(id, _)| {
                [End::First, End::Last].map(|end| Flip { segment: id, end })
            })
            .collect()
    }

    pub fn merge_count(&self) -> usize {
        self.nnbseint()
    }

    pub fn flip_count(&self) -> usize {
        2 * self.nbseint()
    }

    /// A split from the normalized split measure `pi ds / u(T)`: a cell chosen
    /// with probability proportional to its perimeter, then an isotropic
    /// uniform line hitting it. Splits passing within tolerance of an existing
    /// vertex are redrawn.
    pub fn sample_split<R: Rng + ?Sized>(&self, rng: &mut R) -> Split {
        loop {
            let cell = self.sample_cell_by_perimeter(rng);
            let line = geometry::sample_hitting_line(&self.cells[cell].polygon, rng);
            let split = Split { cell, line };
            if self.plan_split(&split).is_ok() {
                return split;
            }
        }
    }

    pub(crate) fn sample_cell_by_perimeter<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total: f64 = self.cells.iter().map(|c| c.perimeter).sum();
        let mut x = rng.random::<f64>() * total;
        for (i, c) in self.cells.iter().enumerate() {
            x -= c.perimeter;
            if x < 0.0 {
                return i;
            }
        }
        self.cells.len() - 1
    }

    /// Applies any local operator.
    pub fn apply(&mut self, op: &LocalOp) -> Result<MoveEffect> {
        match op {
            LocalOp::Split(s) => self.apply_split(s),
            LocalOp::Merge(m) => self.apply_merge(m),
            LocalOp::Flip(f) => self.apply_flip(f),
        }
    }

    /// Statistic-relevant effect of an operator, without applying it.
    pub fn preview(&self, op: &LocalOp) -> Result<MoveEffect> {
        match op {
            LocalOp::Split(s) => Ok(self.plan_split(s)?.effect),
            LocalOp::Merge(m) => Ok(self.plan_merge(m)?.effect),
            LocalOp::Flip(f) => Ok(self.plan_flip(f)?.effect),
        }
    }

    pub(crate) fn alloc_segment(&mut self, mut seg: Segment) -> SegId {
        seg.serial = self.next_serial;
        self.next_serial += 1;
        match self.free.pop() {
            Some(id) => {
                self.segments[id] = Some(seg);
                id
            }
            None => {
                self.segments.push(Some(seg));
                self.segments.len() - 1
            }
        }
    }

    pub(crate) fn release_segment(&mut self, id: SegId) -> Segment {
        let s = self.segments[id].take().expect("dangling segment id");
        self.free.push(id);
        s
    }

    /// Geometric equality of the internal segment sets up to `tol`.
    pub fn geometric_eq(&self, other: &TTessellation, tol: f64) -> bool {
        if self.nseint() != other.nseint() || self.cells.len() != other.cells.len() {
            return false;
        }
        let mut used = vec![false; other.segments.len()];
        'outer: for (_, s) in self.internal_segments() {
            let (a, b) = s.endpoints();
            for (j, o) in other.internal_segments() {
                if used[j] {
                    continue;
                }
                let (c, d) = o.endpoints();
                if (a.dist(c) <= tol && b.dist(d) <= tol) || (a.dist(d) <= tol && b.dist(c) <= tol) {
                    used[j] = true;
                    continue 'outer;
                }
            }
            return false;
        }
        true
    }

    /// Internal segments as endpoint pairs.
    pub fn segment_endpoints(&self) -> Vec<(Point, Point)> {
        self.internal_segments().map(|(_, s)| s.endpoints()).collect()
    }

    /// Checks every structural invariant, including a full rebuild of the cells
    /// from the segment pattern.
    pub fn check_invariants(&self) -> Result<()> {
        build::check_invariants(self)
    }

    /// The T-junction structure's interior vertices: `(point, stem segment,
    /// blocking segment)`.
    pub fn interior_vertices(&self) -> Vec<(Point, SegId, SegId)> {
        self.internal_segments()
            .flat_map(|(id, s)| s.stems.iter().map(move |st| (s.line.at(st.t), st.seg, id)))
            .collect()
    }
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidOperation(msg.into()))
}

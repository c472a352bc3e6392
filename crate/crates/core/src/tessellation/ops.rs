use serde::Serialize;

use super::{
    angle_deficit, invalid, Cell, End, Flip, LocalOp, Location, Merge, SegId, Segment, Split,
    Stem, TTessellation,
};
use crate::error::{Error, Result};
use crate::geometry::{signed_area, Line, Point};

/// Placeholder label for a segment that does not exist yet.
const NEW: SegId = usize::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MoveKind {
    Split,
    Merge,
    Flip,
}

impl std::fmt::Display for MoveKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MoveKind::Split => "split",
            MoveKind::Merge => "merge",
            MoveKind::Flip => "flip",
        })
    }
}

/// What an operator changes, in the terms statistics are built from.
#[derive(Debug, Clone, PartialEq)]
pub struct MoveEffect {
    pub kind: MoveKind,
    pub d_nseint: i64,
    pub d_nnbseint: i64,
    pub d_nbseint: i64,
    pub d_u: f64,
    pub removed_areas: Vec<f64>,
    pub added_areas: Vec<f64>,
    /// `pi/2 - phi` of interior T-vertices that disappear.
    pub removed_angles: Vec<f64>,
    /// `pi/2 - phi` of interior T-vertices that appear.
    pub added_angles: Vec<f64>,
}

impl MoveEffect {
    pub fn d_a2(&self) -> f64 {
        self.added_areas.iter().map(|a| a * a).sum::<f64>()
            - self.removed_areas.iter().map(|a| a * a).sum::<f64>()
    }

    pub fn d_angle_sum(&self) -> f64 {
        self.added_angles.iter().sum::<f64>() - self.removed_angles.iter().sum::<f64>()
    }
}

/// Outcome of applying an operator.
#[derive(Debug, Clone)]
pub struct Applied {
    pub effect: MoveEffect,
    /// Operator restoring the previous tessellation.
    pub inverse: LocalOp,
    /// Serial of the segment created by a split.
    pub born: Option<u64>,
    /// Serial of the segment removed by a merge.
    pub died: Option<u64>,
}

type Polygon = (Vec<Point>, Vec<SegId>);

pub(crate) struct SplitPlan {
    cell: usize,
    line: Line,
    t: [f64; 2],
    ends: [Point; 2],
    blockers: [SegId; 2],
    pieces: [Polygon; 2],
    pub effect: MoveEffect,
}

pub(crate) struct MergePlan {
    segment: SegId,
    cells: [usize; 2],
    merged: Polygon,
    pub effect: MoveEffect,
}

pub(crate) struct FlipPlan {
    segment: SegId,
    end: usize,
    /// Segment whose end is extended.
    stem: SegId,
    stem_end: usize,
    stem_t_on_segment: f64,
    t_far: f64,
    far_point: Point,
    far_blocker: SegId,
    near_cell: usize,
    far_cell: usize,
    merged: Polygon,
    remainder: Polygon,
    pub effect: MoveEffect,
}

impl TTessellation {
    /// Rejects points within tolerance of an end or T-vertex of `seg`.
    fn check_clear(&self, seg: SegId, p: Point) -> Result<()> {
        let s = self.seg(seg);
        let tp = s.line.param(p);
        let eps = self.eps;
        if (tp - s.t[0]).abs() <= eps || (tp - s.t[1]).abs() <= eps {
            return Err(Error::DegenerateSplit(
                "chord passes through an existing vertex".into(),
            ));
        }
        if s.stems.iter().any(|st| (st.t - tp).abs() <= eps) {
            return Err(Error::DegenerateSplit(
                "chord passes through an existing vertex".into(),
            ));
        }
        Ok(())
    }

    /// Change of non-blocking/blocking internal counts when the stem counts of
    /// the listed segments change by the given amounts.
    fn kind_deltas(&self, deltas: &[(SegId, i64)]) -> (i64, i64) {
        let mut merged: Vec<(SegId, i64)> = Vec::with_capacity(deltas.len());
        for &(id, d) in deltas {
            match merged.iter_mut().find(|(i, _)| *i == id) {
                Some(e) => e.1 += d,
                None => merged.push((id, d)),
            }
        }
        let (mut nnb, mut nb) = (0, 0);
        for (id, d) in merged {
            let s = self.seg(id);
            if !s.is_internal() {
                continue;
            }
            let before = s.stems.len() as i64;
            let after = before + d;
            let was = (before > 0) as i64;
            let is = (after > 0) as i64;
            nb += is - was;
            nnb -= is - was;
        }
        (nnb, nb)
    }

    fn interior_deficit(&self, seg: &Line, blocker: SegId) -> Option<f64> {
        let b = self.seg(blocker);
        b.is_internal().then(|| angle_deficit(seg, &b.line))
    }

    pub(crate) fn plan_split(&self, s: &Split) -> Result<SplitPlan> {
        let cell = self
            .cells
            .get(s.cell)
            .ok_or_else(|| Error::InvalidOperation(format!("no cell {}", s.cell)))?;
        if !(s.line.alpha.is_finite() && s.line.p.is_finite()) {
            return invalid("non-finite split line");
        }
        let line = Line::new(s.line.alpha, s.line.p);
        let clip = cell
            .polygon
            .clip(&line, self.eps)
            .ok_or_else(|| Error::DegenerateSplit("line misses the cell".into()))?;
        let ends = [line.at(clip.t_in), line.at(clip.t_out)];
        let blockers = [cell.sides[clip.edge_in], cell.sides[clip.edge_out]];
        self.check_clear(blockers[0], ends[0])?;
        self.check_clear(blockers[1], ends[1])?;
        let pieces = cut_polygon(cell, clip.edge_in, ends[0], clip.edge_out, ends[1], NEW);
        let length = clip.length();
        let (nnb, nb) = self.kind_deltas(&[(blockers[0], 1), (blockers[1], 1)]);
        let added_angles = blockers
            .iter()
            .filter_map(|&b| self.interior_deficit(&line, b))
            .collect();
        let effect = MoveEffect {
            kind: super::MoveKind::Split,
            d_nseint: 1,
            d_nnbseint: 1 + nnb,
            d_nbseint: nb,
            d_u: 2.0 * length,
            removed_areas: vec![cell.area],
            added_areas: vec![signed_area(&pieces[0].0), signed_area(&pieces[1].0)],
            removed_angles: Vec::new(),
            added_angles,
        };
        Ok(SplitPlan {
            cell: s.cell,
            line,
            t: [clip.t_in, clip.t_out],
            ends,
            blockers,
            pieces,
            effect,
        })
    }

    pub fn apply_split(&mut self, s: &Split) -> Result<super::MoveEffect> {
        Ok(self.apply_split_full(s)?.effect)
    }

    pub(crate) fn apply_split_full(&mut self, s: &Split) -> Result<Applied> {
        let plan = self.plan_split(s)?;
        let id = self.alloc_segment(Segment {
            line: plan.line,
            t: plan.t,
            blockers: plan.blockers,
            stems: Vec::new(),
            location: Location::Internal,
            serial: 0,
        });
        for (b, p) in plan.blockers.into_iter().zip(plan.ends) {
            let seg = self.seg_mut(b);
            let t = seg.line.param(p);
            seg.insert_stem(Stem { t, seg: id });
        }
        let [a, b] = plan.pieces;
        self.cells[plan.cell] = make_cell(a, id);
        self.cells.push(make_cell(b, id));
        self.u += plan.effect.d_u;
        Ok(Applied {
            effect: plan.effect,
            inverse: LocalOp::Merge(Merge { segment: id }),
            born: Some(self.seg(id).serial),
            died: None,
        })
    }

    pub(crate) fn plan_merge(&self, m: &Merge) -> Result<MergePlan> {
        let s = match self.segment(m.segment) {
            Some(s) => s,
            None => return invalid(format!("no segment {}", m.segment)),
        };
        if !s.is_internal() {
            return invalid("cannot merge a boundary segment");
        }
        if !s.stems.is_empty() {
            return invalid("cannot merge a blocking segment");
        }
        let mut adj = self
            .cells
            .iter()
            .enumerate()
            .filter_map(|(ci, c)| c.side_of(m.segment).map(|k| (ci, k)));
        let (Some((ca, ka)), Some((cb, kb)), None) = (adj.next(), adj.next(), adj.next()) else {
            return Err(Error::InvalidTessellation(format!(
                "segment {} does not bound exactly two cells",
                m.segment
            )));
        };
        let merged = fuse(&self.cells[ca], ka, &self.cells[cb], kb);
        let (nnb, nb) = self.kind_deltas(&[(s.blockers[0], -1), (s.blockers[1], -1)]);
        let removed_angles = s
            .blockers
            .iter()
            .filter_map(|&b| self.interior_deficit(&s.line, b))
            .collect();
        let effect = MoveEffect {
            kind: super::MoveKind::Merge,
            d_nseint: -1,
            d_nnbseint: -1 + nnb,
            d_nbseint: nb,
            d_u: -2.0 * s.length(),
            removed_areas: vec![self.cells[ca].area, self.cells[cb].area],
            added_areas: vec![signed_area(&merged.0)],
            removed_angles,
            added_angles: Vec::new(),
        };
        Ok(MergePlan {
            segment: m.segment,
            cells: [ca, cb],
            merged,
            effect,
        })
    }

    pub fn apply_merge(&mut self, m: &Merge) -> Result<MoveEffect> {
        Ok(self.apply_merge_full(m)?.effect)
    }

    pub(crate) fn apply_merge_full(&mut self, m: &Merge) -> Result<Applied> {
        let plan = self.plan_merge(m)?;
        let seg = self.release_segment(plan.segment);
        for b in seg.blockers {
            self.seg_mut(b).remove_stem(plan.segment);
        }
        let keep = plan.cells[0].min(plan.cells[1]);
        let drop = plan.cells[0].max(plan.cells[1]);
        self.cells[keep] = make_cell(plan.merged, NEW);
        self.cells.swap_remove(drop);
        self.u += plan.effect.d_u;
        Ok(Applied {
            effect: plan.effect,
            inverse: LocalOp::Split(Split {
                cell: keep,
                line: seg.line,
            }),
            born: None,
            died: Some(seg.serial),
        })
    }

    pub(crate) fn plan_flip(&self, f: &Flip) -> Result<FlipPlan> {
        let s = match self.segment(f.segment) {
            Some(s) => s,
            None => return invalid(format!("no segment {}", f.segment)),
        };
        if !s.is_internal() {
            return invalid("cannot flip a boundary segment");
        }
        if s.stems.is_empty() {
            return invalid("cannot flip a non-blocking segment");
        }
        let e = f.end.index();
        let v = s.endpoint(f.end);
        let blocker = s.blockers[e];
        let stem = if e == 0 {
            s.stems[0]
        } else {
            *s.stems.last().unwrap()
        };
        let w = s.line.at(stem.t);
        let c = self.seg(stem.seg);
        let k = if c.blockers[0] == f.segment {
            0
        } else if c.blockers[1] == f.segment {
            1
        } else {
            return Err(Error::InvalidTessellation(format!(
                "stem {} is not blocked by segment {}",
                stem.seg, f.segment
            )));
        };
        let stem_side = s.line.signed_distance(c.endpoint(End::from_index(1 - k))) > 0.0;

        // the two cells sharing the terminal edge [v, w]
        let mid = v.midpoint(w);
        let tm = s.line.param(mid);
        let mut near = None;
        let mut far = None;
        for (ci, cell) in self.cells.iter().enumerate() {
            let Some(j) = cell.side_of(f.segment) else {
                continue;
            };
            let (a, b) = cell.polygon.edge(j);
            let (ta, tb) = (s.line.param(a), s.line.param(b));
            if tm > ta.min(tb) && tm < ta.max(tb) {
                let side = side_of_line(&s.line, cell.polygon.vertices());
                if side == stem_side {
                    near = Some((ci, j));
                } else {
                    far = Some((ci, j));
                }
            }
        }
        let (Some((near_cell, near_side)), Some((far_cell, _))) = (near, far) else {
            return Err(Error::InvalidTessellation(format!(
                "terminal edge of segment {} does not bound two cells",
                f.segment
            )));
        };

        // extension of the stem through the far cell
        let far_poly = &self.cells[far_cell];
        let clip = far_poly.polygon.clip(&c.line, self.eps).ok_or_else(|| {
            Error::InvalidTessellation("stem line misses the opposite cell".into())
        })?;
        let tw = c.line.param(w);
        let (t_far, edge_far, edge_near) = if (clip.t_in - tw).abs() < (clip.t_out - tw).abs() {
            (clip.t_out, clip.edge_out, clip.edge_in)
        } else {
            (clip.t_in, clip.edge_in, clip.edge_out)
        };
        if far_poly.sides[edge_near] != f.segment {
            return Err(Error::InvalidTessellation(
                "stem extension does not start on the flipped segment".into(),
            ));
        }
        let far_point = c.line.at(t_far);
        let far_blocker = far_poly.sides[edge_far];
        self.check_clear(far_blocker, far_point)
            .map_err(|_| Error::InvalidOperation("flip extension hits an existing vertex".into()))?;

        let (p_in, p_out) = if edge_near == clip.edge_in {
            (w, far_point)
        } else {
            (far_point, w)
        };
        let [piece_a, piece_b] = cut_polygon(far_poly, clip.edge_in, p_in, clip.edge_out, p_out, stem.seg);
        let v_side = c.line.signed_distance(v) > 0.0;
        let a_side = side_of_line(&c.line, &piece_a.0);
        let (attached, remainder) = if a_side == v_side {
            (piece_a, piece_b)
        } else {
            (piece_b, piece_a)
        };
        let attached_cell = make_cell(attached, NEW);
        let attached_side = attached_cell
            .side_of(f.segment)
            .expect("cut piece keeps the flipped segment");
        let merged = fuse(&self.cells[near_cell], near_side, &attached_cell, attached_side);

        let (nnb, nb) = self.kind_deltas(&[
            (f.segment, -1),
            (blocker, -1),
            (stem.seg, 1),
            (far_blocker, 1),
        ]);
        let effect = MoveEffect {
            kind: super::MoveKind::Flip,
            d_nseint: 0,
            d_nnbseint: nnb,
            d_nbseint: nb,
            d_u: 2.0 * ((t_far - tw).abs() - v.dist(w)),
            removed_areas: vec![self.cells[near_cell].area, far_poly.area],
            added_areas: vec![signed_area(&merged.0), signed_area(&remainder.0)],
            removed_angles: self.interior_deficit(&s.line, blocker).into_iter().collect(),
            added_angles: self.interior_deficit(&c.line, far_blocker).into_iter().collect(),
        };
        Ok(FlipPlan {
            segment: f.segment,
            end: e,
            stem: stem.seg,
            stem_end: k,
            stem_t_on_segment: stem.t,
            t_far,
            far_point,
            far_blocker,
            near_cell,
            far_cell,
            merged,
            remainder,
            effect,
        })
    }

    pub fn apply_flip(&mut self, f: &Flip) -> Result<MoveEffect> {
        Ok(self.apply_flip_full(f)?.effect)
    }

    pub(crate) fn apply_flip_full(&mut self, f: &Flip) -> Result<Applied> {
        let p = self.plan_flip(f)?;
        let old_blocker;
        {
            let s = self.seg_mut(p.segment);
            s.remove_stem(p.stem);
            s.t[p.end] = p.stem_t_on_segment;
            old_blocker = s.blockers[p.end];
            s.blockers[p.end] = p.stem;
        }
        self.seg_mut(old_blocker).remove_stem(p.segment);
        let w = self.seg(p.segment).line.at(p.stem_t_on_segment);
        {
            let c = self.seg_mut(p.stem);
            let tw = c.line.param(w);
            c.t[p.stem_end] = p.t_far;
            c.blockers[p.stem_end] = p.far_blocker;
            c.insert_stem(Stem {
                t: tw,
                seg: p.segment,
            });
        }
        {
            let x = self.seg_mut(p.far_blocker);
            let t = x.line.param(p.far_point);
            x.insert_stem(Stem { t, seg: p.stem });
        }
        self.cells[p.near_cell] = make_cell(p.merged, NEW);
        self.cells[p.far_cell] = make_cell(p.remainder, NEW);
        self.u += p.effect.d_u;
        Ok(Applied {
            effect: p.effect,
            inverse: LocalOp::Flip(Flip {
                segment: p.stem,
                end: End::from_index(p.stem_end),
            }),
            born: None,
            died: None,
        })
    }

    /// Applies an operator and reports its inverse and segment lifetimes.
    pub fn apply_full(&mut self, op: &LocalOp) -> Result<Applied> {
        match op {
            LocalOp::Split(s) => self.apply_split_full(s),
            LocalOp::Merge(m) => self.apply_merge_full(m),
            LocalOp::Flip(f) => self.apply_flip_full(f),
        }
    }
}

fn make_cell((corners, mut sides): Polygon, new_id: SegId) -> Cell {
    for s in &mut sides {
        if *s == NEW {
            *s = new_id;
        }
    }
    Cell::new(corners, sides)
}

/// Side of `line` holding a convex polygon lying on one side of it, read off
/// the corner farthest from the line.
fn side_of_line(line: &Line, pts: &[Point]) -> bool {
    pts.iter()
        .map(|&p| line.signed_distance(p))
        .fold(0.0f64, |best, d| if d.abs() > best.abs() { d } else { best })
        > 0.0
}

/// Cuts a convex cell along a chord entering through side `e_in` at `p_in`
/// and leaving through side `e_out` at `p_out`. Both pieces keep the
/// counter-clockwise orientation; the chord side is labelled `label`.
fn cut_polygon(
    cell: &Cell,
    e_in: usize,
    p_in: Point,
    e_out: usize,
    p_out: Point,
    label: SegId,
) -> [Polygon; 2] {
    let poly = cell.polygon.vertices();
    let n = poly.len();
    let walk = |from: usize, to: usize, start: Point, end: Point| -> Polygon {
        let mut pts = vec![start];
        let mut lab = vec![cell.sides[from]];
        let mut k = (from + 1) % n;
        loop {
            pts.push(poly[k]);
            lab.push(cell.sides[k]);
            if k == to {
                break;
            }
            k = (k + 1) % n;
        }
        pts.push(end);
        lab.push(label);
        (pts, lab)
    };
    [walk(e_in, e_out, p_in, p_out), walk(e_out, e_in, p_out, p_in)]
}

/// Union of two cells sharing side `ka` of `a` and side `kb` of `b`, with the
/// flat corners left at the ends of the removed side dropped.
fn fuse(a: &Cell, ka: usize, b: &Cell, kb: usize) -> Polygon {
    let pa = a.polygon.vertices();
    let pb = b.polygon.vertices();
    let (na, nb) = (pa.len(), pb.len());
    let mut pts = Vec::with_capacity(na + nb);
    let mut lab = Vec::with_capacity(na + nb);
    for i in 0..na {
        let k = (ka + 1 + i) % na;
        pts.push(pa[k]);
        lab.push(if k == ka { b.sides[(kb + 1) % nb] } else { a.sides[k] });
    }
    for i in 2..nb {
        let k = (kb + i) % nb;
        pts.push(pb[k]);
        lab.push(b.sides[k]);
    }
    collapse_flat(&mut pts, &mut lab);
    (pts, lab)
}

/// Drops corners whose incoming and outgoing sides lie on the same segment.
pub(super) fn collapse_flat(pts: &mut Vec<Point>, lab: &mut Vec<SegId>) {
    let mut i = 0;
    while i < pts.len() && pts.len() > 3 {
        let n = pts.len();
        if lab[(i + n - 1) % n] == lab[i] {
            pts.remove(i);
            lab.remove(i);
            i = i.saturating_sub(1);
        } else {
            i += 1;
        }
    }
}

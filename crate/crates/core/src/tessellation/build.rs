//! Construction from a segment pattern, the JSON format, and the invariant
//! checker (which rebuilds every cell from scratch by face tracing).

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ops::collapse_flat;
use super::{Cell, End, Location, SegId, Segment, Stem, TTessellation};
use crate::error::{Error, Result};
use crate::geometry::{signed_area, ConvexPolygon, Line, Point};

const UNSET: SegId = usize::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentJson {
    pub alpha: f64,
    pub p: f64,
    pub endpoints: [[f64; 2]; 2],
}

/// On-disk tessellation: the domain corners and the internal segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TessellationJson {
    pub domain: Vec<[f64; 2]>,
    pub segments: Vec<SegmentJson>,
}

fn bad<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidTessellation(msg.into()))
}

impl TTessellation {
    /// Builds a tessellation from its internal segments, each given as a
    /// supporting line and two endpoints. Every endpoint must lie in the
    /// interior of exactly one other segment or domain side (a T-vertex).
    pub fn from_segments(domain: ConvexPolygon, segs: &[(Line, Point, Point)]) -> Result<Self> {
        let mut t = TTessellation::empty(domain);
        let eps = t.eps;
        let n_boundary = t.segments.len();
        for (i, &(line, a, b)) in segs.iter().enumerate() {
            if !(line.alpha.is_finite() && line.p.is_finite() && a.is_finite() && b.is_finite()) {
                return bad(format!("segment {i}: non-finite data"));
            }
            let line = Line::new(line.alpha, line.p);
            for q in [a, b] {
                if line.signed_distance(q).abs() > 10.0 * eps {
                    return bad(format!("segment {i}: endpoint off its line"));
                }
                if !t.domain.contains(q, eps) {
                    return bad(format!("segment {i}: endpoint outside the domain"));
                }
            }
            let (ta, tb) = (line.param(a), line.param(b));
            let tt = if ta < tb { [ta, tb] } else { [tb, ta] };
            if tt[1] - tt[0] <= eps {
                return bad(format!("segment {i}: zero length"));
            }
            t.alloc_segment(Segment {
                line,
                t: tt,
                blockers: [UNSET, UNSET],
                stems: Vec::new(),
                location: Location::Internal,
                serial: 0,
            });
        }

        // blockers of every internal end
        let ids: Vec<SegId> = (n_boundary..t.segments.len()).collect();
        for &id in &ids {
            for e in 0..2 {
                let q = t.seg(id).endpoint(End::from_index(e));
                // segments through q within tolerance, closest first
                let mut near: Vec<(f64, SegId, f64)> = Vec::new();
                for (oid, o) in t.segments() {
                    let dist = o.line.signed_distance(q).abs();
                    if oid == id || dist > 10.0 * eps {
                        continue;
                    }
                    let tq = o.line.param(q);
                    if tq < o.t[0] - eps || tq > o.t[1] + eps {
                        continue;
                    }
                    near.push((dist, oid, tq));
                }
                near.sort_by(|a, b| a.0.total_cmp(&b.0));
                if near.len() > 1 && near[1].0 <= eps {
                    return bad(format!(
                        "segment {}: end lies on several segments",
                        id - n_boundary
                    ));
                }
                let found = near.first().map(|&(_, oid, tq)| (oid, tq));
                if let Some((oid, tq)) = found {
                    let o = t.seg(oid);
                    if (tq - o.t[0]).abs() <= eps || (tq - o.t[1]).abs() <= eps {
                        return bad(format!(
                            "segment {}: end shares a vertex with another segment end",
                            id - n_boundary
                        ));
                    }
                    if o.line.acute_angle(&t.seg(id).line) < 1e-9 {
                        return bad(format!(
                            "segment {}: collinear with a touching segment",
                            id - n_boundary
                        ));
                    }
                }
                let Some((blocker, tq)) = found else {
                    return bad(format!("segment {}: dangling end", id - n_boundary));
                };
                t.seg_mut(id).blockers[e] = blocker;
                t.seg_mut(blocker).insert_stem(Stem { t: tq, seg: id });
            }
        }

        check_no_crossings(&t)?;
        let cells = trace_cells(&t)?;
        if cells.len() != ids.len() + 1 {
            return bad(format!(
                "{} cells for {} internal segments",
                cells.len(),
                ids.len()
            ));
        }
        t.u = cells.iter().map(|c| c.perimeter).sum();
        t.cells = cells;
        Ok(t)
    }

    pub fn to_json(&self) -> TessellationJson {
        TessellationJson {
            domain: self.domain.vertices().iter().map(|&p| p.into()).collect(),
            segments: self
                .internal_segments()
                .map(|(_, s)| {
                    let (a, b) = s.endpoints();
                    SegmentJson {
                        alpha: s.line.alpha,
                        p: s.line.p,
                        endpoints: [a.into(), b.into()],
                    }
                })
                .collect(),
        }
    }

    pub fn from_json(json: &TessellationJson) -> Result<Self> {
        let domain = ConvexPolygon::new(json.domain.iter().map(|&v| v.into()).collect())?;
        let segs: Vec<(Line, Point, Point)> = json
            .segments
            .iter()
            .map(|s| {
                (
                    Line {
                        alpha: s.alpha,
                        p: s.p,
                    },
                    s.endpoints[0].into(),
                    s.endpoints[1].into(),
                )
            })
            .collect();
        TTessellation::from_segments(domain, &segs)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Self::from_json(&serde_json::from_str(s)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    /// Rebuilds the tessellation from its line pattern and T-junctions.
    pub fn rebuilt(&self) -> Result<Self> {
        let segs: Vec<_> = self
            .internal_segments()
            .map(|(_, s)| {
                let (a, b) = s.endpoints();
                (s.line, a, b)
            })
            .collect();
        TTessellation::from_segments(self.domain.clone(), &segs)
    }
}

fn check_no_crossings(t: &TTessellation) -> Result<()> {
    let eps = t.eps;
    let segs: Vec<(SegId, &Segment)> = t.segments().collect();
    for (i, &(ia, a)) in segs.iter().enumerate() {
        for &(ib, b) in &segs[i + 1..] {
            if !a.is_internal() && !b.is_internal() {
                continue;
            }
            match a.line.intersection(&b.line) {
                Some(x) => {
                    let ta = a.line.param(x);
                    let tb = b.line.param(x);
                    let inside_a = ta > a.t[0] + eps && ta < a.t[1] - eps;
                    let inside_b = tb > b.t[0] + eps && tb < b.t[1] - eps;
                    if inside_a && inside_b {
                        return bad(format!("segments {ia} and {ib} cross"));
                    }
                }
                None => {
                    // parallel: reject collinear overlap
                    let (a0, a1) = a.endpoints();
                    if b.line.signed_distance(a0).abs() <= eps {
                        let (p0, p1) = (b.line.param(a0), b.line.param(a1));
                        let (lo, hi) = (p0.min(p1), p0.max(p1));
                        if lo < b.t[1] - eps && hi > b.t[0] + eps {
                            return bad(format!("segments {ia} and {ib} overlap"));
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

/// Traces the faces of the planar graph formed by the segments.
fn trace_cells(t: &TTessellation) -> Result<Vec<Cell>> {
    // vertex id of each segment end
    let n_slots = t.segments.len();
    let mut end_vertex = vec![[usize::MAX; 2]; n_slots];
    let mut positions: Vec<Point> = t.domain.vertices().to_vec();
    let n_corners = positions.len();
    for (id, s) in t.segments() {
        for e in 0..2 {
            end_vertex[id][e] = match s.location {
                Location::Boundary => {
                    // side k joins corners k and k+1; the end blocked by side k-1 is corner k
                    let prev = (id + n_corners - 1) % n_corners;
                    if s.blockers[e] == prev {
                        id
                    } else {
                        (id + 1) % n_corners
                    }
                }
                Location::Internal => {
                    positions.push(s.endpoint(End::from_index(e)));
                    positions.len() - 1
                }
            };
        }
    }

    // half-edges: (from, to, label)
    let mut half: Vec<(usize, usize, SegId)> = Vec::new();
    for (id, s) in t.segments() {
        let mut chain = vec![end_vertex[id][0]];
        for st in &s.stems {
            let o = t.seg(st.seg);
            let e = if o.blockers[0] == id { 0 } else { 1 };
            chain.push(end_vertex[st.seg][e]);
        }
        chain.push(end_vertex[id][1]);
        for w in chain.windows(2) {
            half.push((w[0], w[1], id));
            half.push((w[1], w[0], id));
        }
    }
    let mut outgoing: Vec<Vec<usize>> = vec![Vec::new(); positions.len()];
    for (h, &(a, _, _)) in half.iter().enumerate() {
        outgoing[a].push(h);
    }
    let angle = |h: usize| {
        let (a, b, _) = half[h];
        let d = positions[b] - positions[a];
        d.y.atan2(d.x)
    };
    for out in &mut outgoing {
        out.sort_by(|&x, &y| angle(x).total_cmp(&angle(y)));
    }
    let twin = |h: usize| h ^ 1;
    let next = |h: usize| -> usize {
        let b = half[h].1;
        let out = &outgoing[b];
        let pos = out.iter().position(|&x| x == twin(h)).unwrap();
        out[(pos + out.len() - 1) % out.len()]
    };

    let mut seen = vec![false; half.len()];
    let mut cells = Vec::new();
    let mut outer = 0;
    let eps = t.eps;
    for start in 0..half.len() {
        if seen[start] {
            continue;
        }
        let mut pts = Vec::new();
        let mut lab = Vec::new();
        let mut h = start;
        loop {
            if seen[h] {
                if h != start {
                    return bad("inconsistent face structure");
                }
                break;
            }
            seen[h] = true;
            pts.push(positions[half[h].0]);
            lab.push(half[h].2);
            h = next(h);
            if pts.len() > half.len() {
                return bad("face tracing did not terminate");
            }
        }
        let area = signed_area(&pts);
        if area <= 0.0 {
            outer += 1;
            continue;
        }
        collapse_flat(&mut pts, &mut lab);
        let m = pts.len();
        for i in 0..m {
            let e0 = pts[(i + 1) % m] - pts[i];
            let e1 = pts[(i + 2) % m] - pts[(i + 1) % m];
            if e0.cross(e1) < -eps * e0.norm().max(e1.norm()) {
                return bad("non-convex cell");
            }
        }
        cells.push(Cell::new(pts, lab));
    }
    if outer != 1 {
        return bad(format!("{outer} unbounded faces"));
    }
    Ok(cells)
}

pub(super) fn check_invariants(t: &TTessellation) -> Result<()> {
    let eps = t.eps;
    let tol = 1e3 * eps;
    // segments and T-junctions
    for (id, s) in t.segments() {
        if !(s.t[0] < s.t[1]) {
            return bad(format!("segment {id}: empty extent"));
        }
        for w in s.stems.windows(2) {
            if !(w[0].t < w[1].t) {
                return bad(format!("segment {id}: unsorted T-vertices"));
            }
        }
        for st in &s.stems {
            if st.t <= s.t[0] + eps || st.t >= s.t[1] - eps {
                return bad(format!("segment {id}: T-vertex outside the segment interior"));
            }
            let o = t
                .segment(st.seg)
                .ok_or_else(|| Error::InvalidTessellation(format!("segment {id}: dangling stem")))?;
            let Some(e) = (0..2).find(|&e| o.blockers[e] == id) else {
                return bad(format!("segment {}: not blocked by {id}", st.seg));
            };
            if o.endpoint(End::from_index(e)).dist(s.line.at(st.t)) > tol {
                return bad(format!("segment {}: end and T-vertex disagree", st.seg));
            }
        }
        if s.is_internal() {
            for e in 0..2 {
                let b = t.segment(s.blockers[e]).ok_or_else(|| {
                    Error::InvalidTessellation(format!("segment {id}: dangling blocker"))
                })?;
                if !b.stems.iter().any(|st| st.seg == id) {
                    return bad(format!("segment {id}: blocker does not record it"));
                }
                if b.line.acute_angle(&s.line) < 1e-9 {
                    return bad(format!("segment {id}: collinear with its blocker"));
                }
            }
        }
    }
    // cells
    let mut total_area = 0.0;
    for (ci, c) in t.cells.iter().enumerate() {
        let pts = c.polygon.vertices();
        let m = pts.len();
        if m < 3 || c.sides.len() != m {
            return bad(format!("cell {ci}: malformed"));
        }
        if (signed_area(pts) - c.area).abs() > 1e-9 * c.area.abs().max(1e-300) || c.area <= 0.0 {
            return bad(format!("cell {ci}: area cache"));
        }
        for i in 0..m {
            let e0 = pts[(i + 1) % m] - pts[i];
            let e1 = pts[(i + 2) % m] - pts[(i + 1) % m];
            if e0.cross(e1) < -eps * e0.norm().max(e1.norm()) {
                return bad(format!("cell {ci}: not convex"));
            }
            let s = t
                .segment(c.sides[i])
                .ok_or_else(|| Error::InvalidTessellation(format!("cell {ci}: dangling side")))?;
            for q in [pts[i], pts[(i + 1) % m]] {
                if s.line.signed_distance(q).abs() > tol {
                    return bad(format!("cell {ci}: side off its segment"));
                }
                let tq = s.line.param(q);
                if tq < s.t[0] - tol || tq > s.t[1] + tol {
                    return bad(format!("cell {ci}: side beyond its segment"));
                }
            }
        }
        total_area += c.area;
    }
    let domain_area = t.domain.area();
    if (total_area - domain_area).abs() > 1e-6 * domain_area {
        return bad(format!("cell areas sum to {total_area}, domain has {domain_area}"));
    }
    if (t.u - t.u_recomputed()).abs() > 1e-9 * t.u.max(1.0) {
        return bad("perimeter cache drifted");
    }
    if t.cells.len() != t.nseint() + 1 {
        return bad("cell count differs from internal segment count + 1");
    }
    // full rebuild
    let rebuilt = t.rebuilt()?;
    let diam = t.domain.diameter();
    let mut used = vec![false; rebuilt.cells.len()];
    for c in &t.cells {
        let g = c.polygon.centroid();
        let hit = rebuilt.cells.iter().enumerate().position(|(j, r)| {
            !used[j]
                && r.polygon.centroid().dist(g) <= 1e-6 * diam
                && (r.area - c.area).abs() <= 1e-6 * c.area.max(1e-12)
                && r.polygon.len() == c.polygon.len()
        });
        match hit {
            Some(j) => used[j] = true,
            None => return bad("cells differ from a full rebuild"),
        }
    }
    Ok(())
}

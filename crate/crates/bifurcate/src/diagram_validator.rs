//! Combinatorial validation of bifurcation diagrams and classification of
//! umbilic diagrams into the fourteen-letter catalog of mutual positions.
//!
//! The rules:
//! * R1 — branches with reversed labels never intersect.
//! * R2 — the closure of a branch from `s_i` to `s_j` never meets side `l_j`
//!   (there the target saddle dies into a saddle-node, and the merged point
//!   would carry two opposite gradient lines).
//! * R3 — cusp-family diagrams have no branch ending at the cusp vertex.
//! * R4 — two components with the same label may cross only when their
//!   separatrix pair identifiers agree.
//! * R5 — crossings of branches sharing the target saddle are impossible.
//! * R6 — crossings of reverse-labeled branches are impossible.
//! * R7 — a chained crossing (from-s_i-to-s_j meets from-s_j-to-s_k) must be
//!   accompanied by an extra branch from the crossing point to side `l_i`.

use crate::bifurcation_tracer::{BifurcationDiagram, BranchEndpoint};
use crate::critical_points::{Caustic, CausticSide, Label};
use crate::field_models::ParameterPoint;
use crate::linalg::{cross, dist_to_polyline, segment_intersection, sub};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;
use std::sync::OnceLock;
use thiserror::Error;

/// Fraction of the region diagonal used as the geometric rule tolerance
/// (twice the continuation step).
pub const GEOM_TOL_FACTOR: f64 = 0.02;
/// Absolute vertex-avoidance radius for the cusp rule R3.
pub const VERTEX_AVOID_TOL: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RuleId {
    R1,
    R2,
    R3,
    R4,
    R5,
    R6,
    R7,
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RuleViolation {
    pub rule: RuleId,
    pub branches: Vec<usize>,
    pub location: Option<[f64; 2]>,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum ValidateError {
    #[error("diagram has unlabeled branches; rules need saddle identities")]
    UnlabeledDiagram,
    #[error("not an umbilic diagram: expected a three-sided caustic, found {sides} sides")]
    NotUmbilic { sides: usize },
}

/// Letters of the mutual-position catalog for three non-crossing branches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Letter {
    A,
    B,
    C,
    D,
    E,
    F,
    G,
    H,
    I,
    J,
    K,
    L,
    M,
    N,
    Other,
}

impl Letter {
    pub const ALL: [Letter; 14] = [
        Letter::A,
        Letter::B,
        Letter::C,
        Letter::D,
        Letter::E,
        Letter::F,
        Letter::G,
        Letter::H,
        Letter::I,
        Letter::J,
        Letter::K,
        Letter::L,
        Letter::M,
        Letter::N,
    ];

    pub fn allowed(&self) -> bool {
        matches!(
            self,
            Letter::A
                | Letter::B
                | Letter::C
                | Letter::D
                | Letter::G
                | Letter::L
                | Letter::M
                | Letter::N
        )
    }
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// The five crossing configurations of two bifurcation lines.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntersectionCase {
    /// Same ordered label: allowed iff the separatrix pairs agree.
    A,
    /// Same source saddle: allowed.
    B,
    /// Chained (target of one is source of the other): allowed with the
    /// extra branch of R7.
    C,
    /// Same target saddle: forbidden.
    D,
    /// Reversed labels: forbidden.
    E,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TopologyClass {
    pub letter: Letter,
    pub allowed: bool,
    pub case: Option<IntersectionCase>,
}

/// A detected crossing of two branches (either taken from the diagram or
/// re-derived from the polylines).
#[derive(Clone, Debug)]
struct Crossing {
    a: usize,
    b: usize,
    at: [f64; 2],
}

fn detect_crossings(diagram: &BifurcationDiagram, mask_radius: f64) -> Vec<Crossing> {
    let mut out: Vec<Crossing> = Vec::new();
    let mut push = |a: usize, b: usize, at: [f64; 2]| {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        if !out
            .iter()
            .any(|c| c.a == a && c.b == b && crate::linalg::norm(sub(c.at, at)) < 10.0 * mask_radius.max(1e-9))
        {
            out.push(Crossing { a, b, at });
        }
    };
    for i in &diagram.intersections {
        push(i.branch_ids.0, i.branch_ids.1, i.x.coords());
    }
    for (ia, a) in diagram.branches.iter().enumerate() {
        for (ib, b) in diagram.branches.iter().enumerate().skip(ia + 1) {
            let pa = a.as_polyline();
            let pb = b.as_polyline();
            for wa in pa.windows(2) {
                for wb in pb.windows(2) {
                    if let Some(p) = segment_intersection(wa[0], wa[1], wb[0], wb[1]) {
                        if caustic_distance(&diagram.caustic, p) > mask_radius {
                            push(ia, ib, p);
                        }
                    }
                }
            }
        }
    }
    out
}

fn caustic_distance(caustic: &Caustic, p: [f64; 2]) -> f64 {
    let mut d = f64::INFINITY;
    for arc in &caustic.arcs {
        let pts: Vec<[f64; 2]> = arc.points.iter().map(|q| q.coords()).collect();
        d = d.min(dist_to_polyline(p, &pts));
    }
    for v in &caustic.vertices {
        d = d.min(crate::linalg::norm(sub(p, v.coords())));
    }
    d
}

fn classify_case(a: (Label, Label), b: (Label, Label)) -> Option<IntersectionCase> {
    if a == b {
        Some(IntersectionCase::A)
    } else if a == (b.1, b.0) {
        Some(IntersectionCase::E)
    } else if a.0 == b.0 {
        Some(IntersectionCase::B)
    } else if a.1 == b.1 {
        Some(IntersectionCase::D)
    } else if a.1 == b.0 || a.0 == b.1 {
        Some(IntersectionCase::C)
    } else {
        None
    }
}

/// Check a diagram against the rule catalog. An empty list means all rules
/// pass; each violation is geometrically localized.
pub fn validate(diagram: &BifurcationDiagram) -> Result<Vec<RuleViolation>, ValidateError> {
    for b in &diagram.branches {
        if b.pair.0 == Label::Unlabeled || b.pair.1 == Label::Unlabeled {
            return Err(ValidateError::UnlabeledDiagram);
        }
    }
    let geom_tol = GEOM_TOL_FACTOR * diagram.region.diagonal();
    let mut violations: Vec<RuleViolation> = Vec::new();

    // R1: reversed-label branches never meet (away from the caustic, where
    // closures may legitimately share a degenerate point)
    for (ia, a) in diagram.branches.iter().enumerate() {
        for (ib, b) in diagram.branches.iter().enumerate().skip(ia + 1) {
            if a.pair != (b.pair.1, b.pair.0) {
                continue;
            }
            let pb = b.as_polyline();
            for p in a.as_polyline() {
                if caustic_distance(&diagram.caustic, p) <= geom_tol {
                    continue;
                }
                if dist_to_polyline(p, &pb) < geom_tol {
                    violations.push(RuleViolation {
                        rule: RuleId::R1,
                        branches: vec![ia, ib],
                        location: Some(p),
                        message: format!(
                            "branches {}->{} and {}->{} intersect",
                            a.pair.0, a.pair.1, b.pair.0, b.pair.1
                        ),
                    });
                    break;
                }
            }
        }
    }

    // R2: the closure of a branch never meets the side of its target saddle
    for (ib, b) in diagram.branches.iter().enumerate() {
        let Some(j) = b.pair.1.saddle_index() else {
            continue;
        };
        let Some(side) = diagram.caustic.side_with_label(j) else {
            continue;
        };
        let side_pts: Vec<[f64; 2]> = side.points.iter().map(|p| p.coords()).collect();
        for end in [b.endpoints.0, b.endpoints.1] {
            if let BranchEndpoint::CausticFold { side: Some(m) } = end {
                if m == j {
                    violations.push(RuleViolation {
                        rule: RuleId::R2,
                        branches: vec![ib],
                        location: b.points.last().map(|p| p.coords()),
                        message: format!(
                            "branch {}->{} ends on side l{} where {} dies",
                            b.pair.0, b.pair.1, j, b.pair.1
                        ),
                    });
                }
            }
        }
        // proximity form, masked near vertices where sides meet
        for p in b.as_polyline() {
            let near_vertex = diagram
                .caustic
                .vertices
                .iter()
                .any(|v| crate::linalg::norm(sub(p, v.coords())) < geom_tol);
            if near_vertex {
                continue;
            }
            if dist_to_polyline(p, &side_pts) < 0.5 * geom_tol {
                violations.push(RuleViolation {
                    rule: RuleId::R2,
                    branches: vec![ib],
                    location: Some(p),
                    message: format!(
                        "branch {}->{} touches side l{}",
                        b.pair.0, b.pair.1, j
                    ),
                });
                break;
            }
        }
    }

    // R3: cusp diagrams keep clear of the vertex
    if diagram.family == "cusp" {
        for (ib, b) in diagram.branches.iter().enumerate() {
            for v in &diagram.caustic.vertices {
                let close = b
                    .points
                    .first()
                    .map(|p| p.dist(*v) < VERTEX_AVOID_TOL)
                    .unwrap_or(false)
                    || b.points
                        .last()
                        .map(|p| p.dist(*v) < VERTEX_AVOID_TOL)
                        .unwrap_or(false)
                    || [b.endpoints.0, b.endpoints.1]
                        .contains(&BranchEndpoint::CausticCuspVertex);
                if close {
                    violations.push(RuleViolation {
                        rule: RuleId::R3,
                        branches: vec![ib],
                        location: Some(v.coords()),
                        message: "bifurcation line reaches the cusp vertex".into(),
                    });
                }
            }
        }
    }

    // crossing rules
    let crossings = detect_crossings(diagram, geom_tol);
    for c in &crossings {
        let a = &diagram.branches[c.a];
        let b = &diagram.branches[c.b];
        match classify_case(a.pair, b.pair) {
            Some(IntersectionCase::A) => {
                if a.branches != b.branches {
                    violations.push(RuleViolation {
                        rule: RuleId::R4,
                        branches: vec![c.a, c.b],
                        location: Some(c.at),
                        message: format!(
                            "components of the {}->{} locus cross with different separatrix pairs ({}{} vs {}{})",
                            a.pair.0, a.pair.1,
                            a.branches.0.symbol(), a.branches.1.symbol(),
                            b.branches.0.symbol(), b.branches.1.symbol(),
                        ),
                    });
                }
            }
            Some(IntersectionCase::B) => {}
            Some(IntersectionCase::C) => {
                // orient the chain: first carries s_i -> s_j, second s_j -> s_k
                let (first, second) = if a.pair.1 == b.pair.0 { (a, b) } else { (b, a) };
                let _ = second;
                if !has_extra_chain_branch(diagram, c.at, first.pair.0, geom_tol) {
                    violations.push(RuleViolation {
                        rule: RuleId::R7,
                        branches: vec![c.a, c.b],
                        location: Some(c.at),
                        message: format!(
                            "chained crossing lacks the extra branch from the intersection to side l{}",
                            first.pair.0.saddle_index().map(|i| i.to_string()).unwrap_or_else(|| "?".into())
                        ),
                    });
                }
            }
            Some(IntersectionCase::D) => violations.push(RuleViolation {
                rule: RuleId::R5,
                branches: vec![c.a, c.b],
                location: Some(c.at),
                message: format!(
                    "branches {}->{} and {}->{} share the target saddle and cross",
                    a.pair.0, a.pair.1, b.pair.0, b.pair.1
                ),
            }),
            Some(IntersectionCase::E) => violations.push(RuleViolation {
                rule: RuleId::R6,
                branches: vec![c.a, c.b],
                location: Some(c.at),
                message: format!(
                    "opposite separatrices {}->{} and {}->{} cross",
                    a.pair.0, a.pair.1, b.pair.0, b.pair.1
                ),
            }),
            None => {}
        }
    }

    Ok(violations)
}

/// Does some branch run from the crossing point to the side of `source`?
fn has_extra_chain_branch(
    diagram: &BifurcationDiagram,
    at: [f64; 2],
    source: Label,
    geom_tol: f64,
) -> bool {
    let Some(i) = source.saddle_index() else {
        return false;
    };
    let Some(side) = diagram.caustic.side_with_label(i) else {
        return false;
    };
    let side_pts: Vec<[f64; 2]> = side.points.iter().map(|p| p.coords()).collect();
    diagram.branches.iter().any(|b| {
        let (Some(first), Some(last)) = (b.points.first(), b.points.last()) else {
            return false;
        };
        let ends = [first.coords(), last.coords()];
        let touches_point = ends
            .iter()
            .any(|e| crate::linalg::norm(sub(*e, at)) < geom_tol);
        let touches_side = ends.iter().any(|e| dist_to_polyline(*e, &side_pts) < geom_tol);
        touches_point && touches_side
    })
}

// --- topology classification ---------------------------------------------

/// One boundary incidence of a branch: it either crosses a side (entry) or
/// terminates on it (extreme).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum EventKind {
    Entry,
    Extreme,
}

#[derive(Clone, Copy, Debug)]
struct BoundaryEvent {
    branch: usize,
    kind: EventKind,
    side: u8,
    position: f64,
}

/// Canonical signature: minimum over side-label rotations, cyclic starts and
/// branch renamings of the linearized event string.
fn canonical_signature(events: &[(usize, EventKind, u8)]) -> String {
    let n = events.len();
    let rotations: [[u8; 4]; 3] = [[0, 1, 2, 3], [0, 2, 3, 1], [0, 3, 1, 2]];
    let mut best: Option<String> = None;
    for rot in rotations {
        for start in 0..n {
            let mut names: Vec<usize> = Vec::new();
            let mut s = String::new();
            for k in 0..n {
                let (branch, kind, side) = events[(start + k) % n];
                let slot = match names.iter().position(|&b| b == branch) {
                    Some(i) => i,
                    None => {
                        names.push(branch);
                        names.len() - 1
                    }
                };
                let kch = match kind {
                    EventKind::Entry => 'e',
                    EventKind::Extreme => 'x',
                };
                s.push(char::from(b'a' + slot as u8));
                s.push(kch);
                s.push(char::from(b'0' + rot[side as usize]));
                s.push(';');
            }
            if best.as_ref().map_or(true, |b| s < *b) {
                best = Some(s);
            }
        }
    }
    best.unwrap_or_default()
}

/// The hand-encoded catalog: counter-clockwise boundary event sequences of
/// the fourteen diagrams (branch slot, kind, side label).
fn catalog() -> &'static Vec<(Letter, String)> {
    static CATALOG: OnceLock<Vec<(Letter, String)>> = OnceLock::new();
    CATALOG.get_or_init(|| {
        use EventKind::{Entry as E, Extreme as X};
        let raw: [(Letter, [(usize, EventKind, u8); 6]); 14] = [
            (Letter::A, [(0, X, 2), (1, X, 2), (2, E, 1), (2, X, 3), (1, E, 3), (0, E, 3)]),
            (Letter::B, [(0, X, 2), (1, X, 2), (2, X, 2), (2, E, 1), (1, E, 3), (0, E, 3)]),
            (Letter::C, [(0, X, 2), (1, X, 2), (2, E, 2), (2, X, 1), (1, E, 3), (0, E, 3)]),
            (Letter::D, [(2, E, 2), (0, X, 2), (1, X, 2), (1, E, 3), (0, E, 3), (2, X, 3)]),
            (Letter::E, [(0, X, 2), (1, X, 2), (2, E, 2), (2, X, 3), (1, E, 3), (0, E, 3)]),
            (Letter::F, [(0, X, 2), (2, E, 2), (1, X, 2), (1, E, 3), (2, X, 3), (0, E, 3)]),
            (Letter::G, [(0, X, 2), (1, E, 2), (1, X, 1), (2, X, 1), (2, E, 3), (0, E, 3)]),
            (Letter::H, [(0, X, 2), (1, E, 2), (2, X, 1), (2, E, 3), (1, X, 3), (0, E, 3)]),
            (Letter::I, [(1, E, 2), (0, X, 2), (2, X, 1), (2, E, 3), (0, E, 3), (1, X, 3)]),
            (Letter::J, [(0, X, 2), (1, E, 2), (2, X, 2), (2, E, 1), (1, X, 3), (0, E, 3)]),
            (Letter::K, [(1, E, 2), (0, X, 2), (2, X, 2), (2, E, 1), (0, E, 3), (1, X, 3)]),
            (Letter::L, [(0, X, 2), (1, E, 2), (1, X, 1), (2, E, 1), (2, X, 3), (0, E, 3)]),
            (Letter::M, [(0, X, 2), (1, X, 2), (2, X, 1), (2, E, 3), (1, E, 3), (0, E, 3)]),
            (Letter::N, [(0, X, 2), (1, X, 2), (2, X, 2), (2, E, 3), (1, E, 3), (0, E, 3)]),
        ];
        raw.iter()
            .map(|(l, ev)| (*l, canonical_signature(ev)))
            .collect()
    })
}

/// Classify an umbilic diagram (three-sided caustic, three principal
/// branches) into the letter catalog, or report the crossing case.
pub fn classify_topology(diagram: &BifurcationDiagram) -> Result<TopologyClass, ValidateError> {
    let sides: Vec<&CausticSide> = diagram.caustic.sides.iter().collect();
    let labeled: BTreeSet<u8> = sides.iter().filter_map(|s| s.label).collect();
    if sides.len() != 3 || labeled.len() != 3 {
        return Err(ValidateError::NotUmbilic { sides: sides.len() });
    }
    let geom_tol = GEOM_TOL_FACTOR * diagram.region.diagonal();

    let crossings = detect_crossings(diagram, geom_tol);
    if let Some(c) = crossings.first() {
        let a = &diagram.branches[c.a];
        let b = &diagram.branches[c.b];
        let case = classify_case(a.pair, b.pair);
        let allowed = match case {
            Some(IntersectionCase::A) => a.branches == b.branches,
            Some(IntersectionCase::B) => true,
            Some(IntersectionCase::C) => {
                let (first, _) = if a.pair.1 == b.pair.0 { (a, b) } else { (b, a) };
                has_extra_chain_branch(diagram, c.at, first.pair.0, geom_tol)
            }
            Some(IntersectionCase::D) | Some(IntersectionCase::E) => false,
            None => false,
        };
        return Ok(TopologyClass {
            letter: Letter::Other,
            allowed,
            case,
        });
    }

    let Some(events) = boundary_events(diagram, geom_tol) else {
        return Ok(TopologyClass {
            letter: Letter::Other,
            allowed: false,
            case: None,
        });
    };
    let sig = canonical_signature(&events);
    let letter = catalog()
        .iter()
        .find(|(_, s)| *s == sig)
        .map(|(l, _)| *l)
        .unwrap_or(Letter::Other);
    Ok(TopologyClass {
        letter,
        allowed: letter.allowed(),
        case: None,
    })
}

/// Extract the cyclic boundary-event sequence of a three-branch diagram.
/// Returns `None` when the combinatorial structure is not the catalog's
/// (missing entries, vertex endpoints, wrong branch count).
fn boundary_events(
    diagram: &BifurcationDiagram,
    geom_tol: f64,
) -> Option<Vec<(usize, EventKind, u8)>> {
    if diagram.branches.len() != 3 {
        return None;
    }
    // counter-clockwise cyclic order of the sides around the caustic centroid
    let centroid = {
        let mut c = [0.0, 0.0];
        let mut n = 0usize;
        for s in &diagram.caustic.sides {
            for p in &s.points {
                c[0] += p.x1;
                c[1] += p.x2;
                n += 1;
            }
        }
        [c[0] / n as f64, c[1] / n as f64]
    };
    let mut side_order: Vec<usize> = (0..diagram.caustic.sides.len()).collect();
    let angle_of = |s: &CausticSide| {
        let m = s.points[s.points.len() / 2];
        (m.x2 - centroid[1]).atan2(m.x1 - centroid[0])
    };
    side_order.sort_by(|&i, &j| {
        angle_of(&diagram.caustic.sides[i])
            .partial_cmp(&angle_of(&diagram.caustic.sides[j]))
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    // fractional position of a point along a side, oriented counter-clockwise
    let side_position = |side: &CausticSide, p: [f64; 2]| -> f64 {
        let pts: Vec<[f64; 2]> = side.points.iter().map(|q| q.coords()).collect();
        let mut best = (f64::INFINITY, 0.0f64);
        for (k, w) in pts.windows(2).enumerate() {
            let seg = sub(w[1], w[0]);
            let len2 = crate::linalg::dot(seg, seg);
            let t = if len2 == 0.0 {
                0.0
            } else {
                (crate::linalg::dot(sub(p, w[0]), seg) / len2).clamp(0.0, 1.0)
            };
            let q = [w[0][0] + t * seg[0], w[0][1] + t * seg[1]];
            let d = crate::linalg::norm(sub(p, q));
            if d < best.0 {
                best = (d, (k as f64 + t) / (pts.len() - 1) as f64);
            }
        }
        // orient by the side's sweep around the centroid
        let a0 = (pts[0][1] - centroid[1]).atan2(pts[0][0] - centroid[0]);
        let a1 = {
            let q = pts[pts.len() - 1];
            (q[1] - centroid[1]).atan2(q[0] - centroid[0])
        };
        let ccw = cross(
            [a0.cos(), a0.sin()],
            [a1.cos(), a1.sin()],
        ) > 0.0;
        if ccw {
            best.1
        } else {
            1.0 - best.1
        }
    };

    let mut events: Vec<BoundaryEvent> = Vec::new();
    for (ib, branch) in diagram.branches.iter().enumerate() {
        // extreme: the fold endpoint
        let mut extreme: Option<(u8, [f64; 2])> = None;
        for (end, point) in [
            (branch.endpoints.0, branch.points.first()),
            (branch.endpoints.1, branch.points.last()),
        ] {
            if let (BranchEndpoint::CausticFold { side: Some(m) }, Some(p)) = (end, point) {
                extreme = Some((m, p.coords()));
            }
        }
        let (ext_side, ext_point) = extreme?;
        // entry: the unique transversal crossing away from the extreme
        let mut entry: Option<(u8, [f64; 2])> = None;
        for side in &diagram.caustic.sides {
            let label = side.label?;
            let spts: Vec<[f64; 2]> = side.points.iter().map(|p| p.coords()).collect();
            for wb in branch.as_polyline().windows(2) {
                for ws in spts.windows(2) {
                    if let Some(p) = segment_intersection(wb[0], wb[1], ws[0], ws[1]) {
                        if crate::linalg::norm(sub(p, ext_point)) > 0.5 * geom_tol {
                            if entry.is_some() {
                                return None; // more crossings than the catalog allows
                            }
                            entry = Some((label, p));
                        }
                    }
                }
            }
        }
        let (ent_side, ent_point) = entry?;
        for (kind, side, point) in [
            (EventKind::Extreme, ext_side, ext_point),
            (EventKind::Entry, ent_side, ent_point),
        ] {
            let s = diagram
                .caustic
                .sides
                .iter()
                .find(|s| s.label == Some(side))?;
            let cyc = side_order
                .iter()
                .position(|&k| diagram.caustic.sides[k].label == Some(side))?;
            events.push(BoundaryEvent {
                branch: ib,
                kind,
                side,
                position: cyc as f64 + side_position(s, point),
            });
        }
    }
    events.sort_by(|a, b| {
        a.position
            .partial_cmp(&b.position)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Some(
        events
            .into_iter()
            .map(|e| (e.branch, e.kind, e.side))
            .collect(),
    )
}

/// Hand-encoded geometric fixtures of the catalog diagrams and of the five
/// crossing cases, built on an abstract three-sided caustic (left side l1,
/// upper side l2, lower side l3).
pub mod fixtures {
    use super::*;
    use crate::bifurcation_tracer::{
        BifurcationBranch, BifurcationDiagram, BranchEndpoint, Intersection, RegionBox,
    };
    use crate::critical_points::CausticArc;
    use crate::flow_engine::BranchSign;

    type Bez = ([f64; 2], [f64; 2], [f64; 2]);

    fn sample(b: Bez, n: usize) -> Vec<ParameterPoint> {
        (0..=n)
            .map(|k| {
                let t = k as f64 / n as f64;
                let u = 1.0 - t;
                ParameterPoint::new(
                    u * u * b.0[0] + 2.0 * u * t * b.1[0] + t * t * b.2[0],
                    u * u * b.0[1] + 2.0 * u * t * b.1[1] + t * t * b.2[1],
                )
            })
            .collect()
    }

    /// The schematic curvilinear triangle: vertices right (5,2), upper left
    /// (1,4), lower left (1,0); sides bow inward toward (2,2).
    pub fn triangle_caustic() -> Caustic {
        let l2 = sample(([5.0, 2.0], [2.0, 2.0], [1.0, 4.0]), 48); // upper
        let l1 = sample(([1.0, 4.0], [2.0, 2.0], [1.0, 0.0]), 48); // left
        let l3 = sample(([1.0, 0.0], [2.0, 2.0], [5.0, 2.0]), 48); // lower
        let mut loop_pts = l2.clone();
        loop_pts.extend(l1.iter().skip(1));
        loop_pts.extend(l3.iter().skip(1));
        let arc = CausticArc {
            id: 0,
            phase_points: Vec::new(),
            points: loop_pts,
            closed: true,
        };
        let sides = vec![
            CausticSide {
                arc: 0,
                label: Some(1),
                points: l1,
            },
            CausticSide {
                arc: 0,
                label: Some(2),
                points: l2,
            },
            CausticSide {
                arc: 0,
                label: Some(3),
                points: l3,
            },
        ];
        Caustic::from_parts(
            vec![arc],
            vec![
                ParameterPoint::new(5.0, 2.0),
                ParameterPoint::new(1.0, 4.0),
                ParameterPoint::new(1.0, 0.0),
            ],
            sides,
        )
    }

    /// Branch pair implied by (entry side, extreme side): the separatrix
    /// runs from the saddle dying at the extreme to the remaining saddle.
    fn pair_for(entry: u8, extreme: u8) -> (Label, Label) {
        let third = 6 - entry - extreme;
        (Label::saddle(extreme), Label::saddle(third))
    }

    fn branch(id: usize, bez: Bez, entry: u8, extreme: u8) -> BifurcationBranch {
        branch_with(id, bez, entry, extreme, (BranchSign::Plus, BranchSign::Plus))
    }

    fn branch_with(
        id: usize,
        bez: Bez,
        entry: u8,
        extreme: u8,
        branches: (BranchSign, BranchSign),
    ) -> BifurcationBranch {
        let points = sample(bez, 60);
        BifurcationBranch {
            id,
            pair: pair_for(entry, extreme),
            branches,
            psi_residuals: vec![0.0; points.len()],
            points,
            endpoints: (
                BranchEndpoint::RegionExit,
                BranchEndpoint::CausticFold {
                    side: Some(extreme),
                },
            ),
            labelings: Vec::new(),
        }
    }

    fn diagram(branches: Vec<BifurcationBranch>) -> BifurcationDiagram {
        BifurcationDiagram {
            family: "fixture".into(),
            region: RegionBox::new(-0.5, 8.0, -0.5, 6.0),
            caustic: triangle_caustic(),
            branches,
            intersections: Vec::new(),
        }
    }

    // the recurring strips of the catalog figures, with (entry, extreme)
    const P: (Bez, u8, u8) = (([4.5, 1.0], [3.5, 1.0], [3.5, 2.15]), 3, 2);
    const Q: (Bez, u8, u8) = (([2.0, 0.5], [2.5, 2.0], [2.5, 2.5]), 3, 2);
    const RA: (Bez, u8, u8) = (([0.0, 3.5], [1.5, 3.5], [1.7, 1.0]), 1, 3);
    const RB: (Bez, u8, u8) = (([0.0, 3.5], [0.3, 3.0], [1.7, 3.0]), 1, 2);
    const RC: (Bez, u8, u8) = (([2.0, 5.0], [2.0, 3.5], [1.45, 2.8]), 2, 1);
    const RD: (Bez, u8, u8) = (([2.0, 5.0], [4.0, 5.0], [4.0, 1.95]), 2, 3);
    const RE: (Bez, u8, u8) = (([2.0, 5.0], [2.0, 3.0], [1.7, 1.0]), 2, 3);
    const RF: (Bez, u8, u8) = (([2.0, 5.0], [3.0, 5.0], [3.0, 1.7]), 2, 3);
    const G2: (Bez, u8, u8) = (([3.0, 0.2], [3.0, 0.7], [1.3, 0.7]), 3, 1);
    const L2: (Bez, u8, u8) = (([0.0, 1.5], [1.5, 1.5], [1.7, 1.0]), 1, 3);
    const M2: (Bez, u8, u8) = (([3.0, 0.5], [2.5, 2.0], [2.5, 2.5]), 3, 2);
    const M3: (Bez, u8, u8) = (([2.0, 0.2], [2.0, 0.7], [1.3, 0.7]), 3, 1);
    const N3: (Bez, u8, u8) = (([2.0, 0.2], [2.0, 0.7], [1.7, 3.0]), 3, 2);

    /// Geometric fixture of one catalog letter.
    pub fn letter_fixture(letter: Letter) -> BifurcationDiagram {
        let parts: [(Bez, u8, u8); 3] = match letter {
            Letter::A => [P, Q, RA],
            Letter::B => [P, Q, RB],
            Letter::C => [P, Q, RC],
            Letter::D => [P, Q, RD],
            Letter::E => [P, Q, RE],
            Letter::F => [P, Q, RF],
            Letter::G => [P, G2, RC],
            Letter::H => [P, G2, RF],
            Letter::I => [P, G2, RD],
            Letter::J => [P, RB, RF],
            Letter::K => [P, RB, RD],
            Letter::L => [P, L2, RC],
            Letter::M => [P, M2, M3],
            Letter::N => [P, M2, N3],
            Letter::Other => panic!("no fixture for Other"),
        };
        diagram(
            parts
                .iter()
                .enumerate()
                .map(|(i, (bez, entry, extreme))| branch(i, *bez, *entry, *extreme))
                .collect(),
        )
    }

    fn crossing_point(a: &BifurcationBranch, b: &BifurcationBranch) -> Option<ParameterPoint> {
        for wa in a.as_polyline().windows(2) {
            for wb in b.as_polyline().windows(2) {
                if let Some(p) = segment_intersection(wa[0], wa[1], wb[0], wb[1]) {
                    return Some(ParameterPoint::new(p[0], p[1]));
                }
            }
        }
        None
    }

    /// Geometric fixture of a crossing case. For case A, `same_separatrices`
    /// picks whether the two components carry the same separatrix pair; for
    /// case C, `same_separatrices = true` includes the mandatory extra
    /// branch and `false` omits it.
    pub fn crossing_fixture(case: IntersectionCase, same_separatrices: bool) -> BifurcationDiagram {
        let (a, b): (BifurcationBranch, BifurcationBranch) = match case {
            IntersectionCase::A => {
                let pp = branch(0, ([4.5, 1.0], [3.5, 1.0], [2.5, 2.5]), 3, 2);
                let qq = branch_with(
                    1,
                    ([2.0, 0.5], [2.5, 2.0], [3.0, 2.25]),
                    3,
                    2,
                    if same_separatrices {
                        (BranchSign::Plus, BranchSign::Plus)
                    } else {
                        (BranchSign::Minus, BranchSign::Minus)
                    },
                );
                (pp, qq)
            }
            IntersectionCase::B => (
                branch(0, ([2.0, 0.5], [1.7, 2.0], [1.7, 3.0]), 3, 2),
                branch(1, ([0.0, 3.5], [0.3, 3.0], [2.5, 2.5]), 1, 2),
            ),
            IntersectionCase::C => (
                branch(0, ([2.0, 0.5], [2.5, 2.0], [2.25, 2.6]), 3, 2),
                branch(1, ([4.0, 5.0], [4.0, 2.0], [1.5, 2.0]), 2, 1),
            ),
            IntersectionCase::D => (
                branch(0, ([2.0, 0.5], [2.5, 2.0], [2.5, 2.5]), 3, 2),
                branch(1, ([1.5, 5.0], [1.8, 3.0], [3.0, 1.708]), 2, 3),
            ),
            IntersectionCase::E => (
                branch(0, ([2.0, 0.5], [2.5, 2.0], [2.5, 2.5]), 3, 2),
                branch(1, ([3.0, 0.3], [1.8, 1.8], [1.349, 0.9]), 3, 1),
            ),
        };
        let at = crossing_point(&a, &b).expect("fixture branches must cross");
        let mut branches = vec![a, b];
        if case == IntersectionCase::C && same_separatrices {
            // the extra segment from the crossing point to side l2
            let mut extra = branch(2, ((at.coords()), [2.1, 2.4], [2.12, 2.72]), 3, 2);
            extra.pair = (Label::S2, Label::S3);
            extra.endpoints = (
                BranchEndpoint::Truncated,
                BranchEndpoint::CausticFold { side: Some(2) },
            );
            branches.push(extra);
        }
        let mut d = diagram(branches);
        d.intersections.push(Intersection {
            x: at,
            branch_ids: (0, 1),
            pairs: (d.branches[0].pair, d.branches[1].pair),
        });
        d
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn catalog_signatures_are_distinct() {
        let cat = catalog();
        for (i, (la, sa)) in cat.iter().enumerate() {
            for (lb, sb) in cat.iter().skip(i + 1) {
                assert_ne!(sa, sb, "letters {la} and {lb} collide");
            }
        }
    }

    #[test]
    fn letter_fixtures_classify_to_themselves() {
        for letter in Letter::ALL {
            let d = letter_fixture(letter);
            let t = classify_topology(&d).unwrap();
            assert_eq!(t.letter, letter, "fixture {letter} classified as {}", t.letter);
            assert_eq!(t.allowed, letter.allowed());
            assert!(t.case.is_none());
        }
        // exactly eight allowed
        let allowed: Vec<Letter> = Letter::ALL.iter().copied().filter(Letter::allowed).collect();
        assert_eq!(
            allowed,
            vec![
                Letter::A,
                Letter::B,
                Letter::C,
                Letter::D,
                Letter::G,
                Letter::L,
                Letter::M,
                Letter::N
            ]
        );
    }

    #[test]
    fn classification_invariant_under_side_rotation() {
        // relabeling the sides cyclically (and the branch pairs with them)
        // must not change the letter
        let rot = |l: Label| match l {
            Label::S1 => Label::S2,
            Label::S2 => Label::S3,
            Label::S3 => Label::S1,
            other => other,
        };
        for letter in Letter::ALL {
            let mut d = letter_fixture(letter);
            for side in d.caustic.sides.iter_mut() {
                side.label = side.label.map(|i| (i % 3) + 1);
            }
            for b in d.branches.iter_mut() {
                b.pair = (rot(b.pair.0), rot(b.pair.1));
                for end in [&mut b.endpoints.0, &mut b.endpoints.1] {
                    if let BranchEndpoint::CausticFold { side: Some(m) } = end {
                        *m = (*m % 3) + 1;
                    }
                }
            }
            let t = classify_topology(&d).unwrap();
            assert_eq!(t.letter, letter, "rotation broke {letter}");
        }
    }

    #[test]
    fn allowed_fixtures_pass_validation() {
        for letter in Letter::ALL.iter().filter(|l| l.allowed()) {
            let d = letter_fixture(*letter);
            let v = validate(&d).unwrap();
            assert!(v.is_empty(), "{letter}: {v:?}");
        }
    }

    #[test]
    fn crossing_cases_classify_and_validate() {
        // (a) same pair of separatrices: fine; different: R4
        let d = crossing_fixture(IntersectionCase::A, true);
        assert!(validate(&d).unwrap().is_empty());
        let t = classify_topology(&d).unwrap();
        assert_eq!(t.case, Some(IntersectionCase::A));
        assert!(t.allowed);
        let d = crossing_fixture(IntersectionCase::A, false);
        let v = validate(&d).unwrap();
        assert!(v.iter().any(|v| v.rule == RuleId::R4), "{v:?}");
        assert!(!classify_topology(&d).unwrap().allowed);

        // (b) always allowed
        let d = crossing_fixture(IntersectionCase::B, true);
        assert!(validate(&d).unwrap().is_empty());
        let t = classify_topology(&d).unwrap();
        assert_eq!(t.case, Some(IntersectionCase::B));
        assert!(t.allowed);

        // (c) requires the extra branch
        let d = crossing_fixture(IntersectionCase::C, true);
        let v = validate(&d).unwrap();
        assert!(v.is_empty(), "{v:?}");
        assert!(classify_topology(&d).unwrap().allowed);
        let d = crossing_fixture(IntersectionCase::C, false);
        let v = validate(&d).unwrap();
        assert!(v.iter().any(|v| v.rule == RuleId::R7), "{v:?}");

        // (d) and (e) forbidden
        let d = crossing_fixture(IntersectionCase::D, true);
        let v = validate(&d).unwrap();
        assert!(v.iter().any(|v| v.rule == RuleId::R5), "{v:?}");
        assert!(!classify_topology(&d).unwrap().allowed);
        let d = crossing_fixture(IntersectionCase::E, true);
        let v = validate(&d).unwrap();
        assert!(v.iter().any(|v| v.rule == RuleId::R6), "{v:?}");
        assert!(!classify_topology(&d).unwrap().allowed);
    }

    #[test]
    fn r1_fires_on_overlapping_reversed_branches() {
        let mut d = letter_fixture(Letter::A);
        // clone the first branch reversed in labels: same geometry
        let mut rev = d.branches[0].clone();
        rev.id = 3;
        rev.pair = (d.branches[0].pair.1, d.branches[0].pair.0);
        d.branches.push(rev);
        let v = validate(&d).unwrap();
        assert!(v.iter().any(|v| v.rule == RuleId::R1), "{v:?}");
    }

    #[test]
    fn r2_fires_on_endpoint_at_target_side() {
        let mut d = letter_fixture(Letter::A);
        // relabel the first branch so its target is the side it ends on (l2)
        d.branches[0].pair = (Label::S3, Label::S2);
        let v = validate(&d).unwrap();
        assert!(v.iter().any(|v| v.rule == RuleId::R2), "{v:?}");
    }

    #[test]
    fn unlabeled_diagram_is_rejected() {
        let mut d = letter_fixture(Letter::A);
        d.branches[0].pair = (Label::Unlabeled, Label::S1);
        assert!(matches!(validate(&d), Err(ValidateError::UnlabeledDiagram)));
    }

    #[test]
    fn non_umbilic_caustic_is_rejected_for_classification() {
        let mut d = letter_fixture(Letter::A);
        d.caustic.sides.pop();
        assert!(matches!(
            classify_topology(&d),
            Err(ValidateError::NotUmbilic { .. })
        ));
    }
}

//! The caustic: image of the Hessian-degeneracy curve `det Hess f(y) = 0`
//! under the Lagrangian map `y -> grad f(y)`.
//!
//! The degeneracy curve is traced in the phase plane by tangent-predictor /
//! Newton-corrector marching; cusp vertices are flagged where the image
//! tangent reverses direction, and each side between vertices is labeled
//! `l_i` by probing just inside and identifying which saddle merges with the
//! node there.

use super::{
    continue_labels, find_critical_points, labeled_points, CriticalPointError, Label,
    PhaseWindow, PointClass,
};
use crate::field_models::{BaseKind, GeneratingFamily, ParameterPoint, PhasePoint};
use crate::linalg::{self, dot, norm, rot90, scale, sub, unit};
use serde::{Deserialize, Serialize};

/// One traced connected component of the degeneracy curve with its image.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CausticArc {
    pub id: usize,
    /// Sample points on `det Hess f = 0` in the phase plane.
    pub phase_points: Vec<PhasePoint>,
    /// Image polyline `grad f(phase_points)` in parameter space.
    pub points: Vec<ParameterPoint>,
    pub closed: bool,
}

/// A maximal vertex-free piece of the caustic, labeled by the saddle that
/// merges with the node along it.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CausticSide {
    pub arc: usize,
    /// `l_i` labeling: 1-based saddle index, `None` when probing failed.
    pub label: Option<u8>,
    pub points: Vec<ParameterPoint>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Inside,
    Outside,
    On,
}

/// Nearest caustic feature seen from a parameter point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CausticFeature {
    FoldSide { label: Option<u8> },
    Vertex,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Caustic {
    pub arcs: Vec<CausticArc>,
    /// Cusp vertices of the image (plus the whole caustic for the
    /// unperturbed umbilic, whose caustic is the single point `(0,0)`).
    pub vertices: Vec<ParameterPoint>,
    pub sides: Vec<CausticSide>,
    /// Set when the degeneracy locus is an isolated point.
    pub point_caustic: Option<ParameterPoint>,
    /// Ray-parity calibration: anchor point and the crossing parity of a
    /// point known to be inside.
    #[serde(default)]
    parity_anchor: Option<[f64; 2]>,
    #[serde(default)]
    inside_parity_odd: Option<bool>,
}

impl Caustic {
    /// Assemble a caustic from explicit parts (deserialized diagrams,
    /// hand-built fixtures). The region test stays uncalibrated.
    pub fn from_parts(
        arcs: Vec<CausticArc>,
        vertices: Vec<ParameterPoint>,
        sides: Vec<CausticSide>,
    ) -> Self {
        Self {
            arcs,
            vertices,
            sides,
            point_caustic: None,
            parity_anchor: None,
            inside_parity_odd: None,
        }
    }

    /// Classify a parameter point against the caustic. `on_tol` is the
    /// buffer within which a point counts as on the caustic.
    pub fn region_test(&self, x: ParameterPoint, on_tol: f64) -> Region {
        if let Some(p) = self.point_caustic {
            return if x.dist(p) <= on_tol {
                Region::On
            } else {
                Region::Outside
            };
        }
        let q = x.coords();
        for arc in &self.arcs {
            let pts: Vec<[f64; 2]> = arc.points.iter().map(|p| p.coords()).collect();
            if linalg::dist_to_polyline(q, &pts) <= on_tol {
                return Region::On;
            }
        }
        match (self.parity_anchor, self.inside_parity_odd) {
            (Some(anchor), Some(inside_odd)) => {
                let odd = self.crossing_parity(q, anchor);
                if odd == inside_odd {
                    Region::Inside
                } else {
                    Region::Outside
                }
            }
            _ => Region::Outside,
        }
    }

    fn crossing_parity(&self, from: [f64; 2], to: [f64; 2]) -> bool {
        let mut crossings = 0usize;
        for arc in &self.arcs {
            for w in arc.points.windows(2) {
                let a = w[0].coords();
                let b = w[1].coords();
                if linalg::segment_intersection(from, to, a, b).is_some() {
                    crossings += 1;
                }
            }
        }
        crossings % 2 == 1
    }

    pub fn nearest_vertex(&self, x: ParameterPoint) -> Option<(ParameterPoint, f64)> {
        self.vertices
            .iter()
            .map(|v| (*v, v.dist(x)))
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal))
    }

    pub fn nearest_side(&self, x: ParameterPoint) -> Option<(&CausticSide, f64)> {
        self.sides
            .iter()
            .map(|s| {
                let pts: Vec<[f64; 2]> = s.points.iter().map(|p| p.coords()).collect();
                (s, linalg::dist_to_polyline(x.coords(), &pts))
            })
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal))
    }

    /// Nearest feature within `radius`, preferring a vertex when both a
    /// vertex and a side are in range (sides end at vertices, so a branch
    /// dying at a vertex is always near some side too).
    pub fn nearest_feature(&self, x: ParameterPoint, radius: f64) -> Option<CausticFeature> {
        if let Some(p) = self.point_caustic {
            return (x.dist(p) <= radius).then_some(CausticFeature::Vertex);
        }
        if let Some((_, d)) = self.nearest_vertex(x) {
            if d <= radius {
                return Some(CausticFeature::Vertex);
            }
        }
        if let Some((side, d)) = self.nearest_side(x) {
            if d <= radius {
                return Some(CausticFeature::FoldSide { label: side.label });
            }
        }
        None
    }

    /// 1-based side labels present on this caustic.
    pub fn side_labels(&self) -> Vec<u8> {
        let mut v: Vec<u8> = self.sides.iter().filter_map(|s| s.label).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn side_with_label(&self, label: u8) -> Option<&CausticSide> {
        self.sides.iter().find(|s| s.label == Some(label))
    }
}

const SEED_GRID: usize = 121;
const CORRECTOR_ITERS: usize = 14;

fn det_hess(family: &GeneratingFamily, y: PhasePoint) -> f64 {
    family.hessian(y).det()
}

fn grad_det(family: &GeneratingFamily, y: PhasePoint) -> [f64; 2] {
    let h = 1e-6;
    [
        (det_hess(family, PhasePoint::new(y.y1 + h, y.y2))
            - det_hess(family, PhasePoint::new(y.y1 - h, y.y2)))
            / (2.0 * h),
        (det_hess(family, PhasePoint::new(y.y1, y.y2 + h))
            - det_hess(family, PhasePoint::new(y.y1, y.y2 - h)))
            / (2.0 * h),
    ]
}

fn correct_onto_curve(family: &GeneratingFamily, start: PhasePoint) -> Option<PhasePoint> {
    let mut y = start;
    for _ in 0..CORRECTOR_ITERS {
        let g = det_hess(family, y);
        let dg = grad_det(family, y);
        let n2 = dot(dg, dg);
        if n2 < 1e-20 {
            return None;
        }
        y = PhasePoint::new(y.y1 - g * dg[0] / n2, y.y2 - g * dg[1] / n2);
        if g.abs() < 1e-12 * (1.0 + y.rho() * y.rho()) {
            return Some(y);
        }
    }
    let g = det_hess(family, y);
    (g.abs() < 1e-10 * (1.0 + y.rho() * y.rho())).then_some(y)
}

fn curve_tangent(family: &GeneratingFamily, y: PhasePoint) -> [f64; 2] {
    unit(rot90(grad_det(family, y)))
}

/// March one direction until the window is left or the curve closes.
/// Returns the points marched (excluding the start) and whether it closed.
fn march(
    family: &GeneratingFamily,
    start: PhasePoint,
    mut dir: [f64; 2],
    step: f64,
    window: &PhaseWindow,
) -> (Vec<PhasePoint>, bool) {
    let mut pts = Vec::new();
    let mut y = start;
    let max_pts = ((8.0 * window.diagonal() / step) as usize).clamp(64, 200_000);
    let mut traveled = 0.0;
    for _ in 0..max_pts {
        let mut h = step;
        let mut next = None;
        for _ in 0..6 {
            let pred = PhasePoint::new(y.y1 + h * dir[0], y.y2 + h * dir[1]);
            if let Some(c) = correct_onto_curve(family, pred) {
                if c.dist(y) < 2.5 * h {
                    next = Some(c);
                    break;
                }
            }
            h *= 0.5;
        }
        let Some(c) = next else { break };
        let mut t = curve_tangent(family, c);
        if dot(t, dir) < 0.0 {
            t = scale(t, -1.0);
        }
        dir = t;
        traveled += c.dist(y);
        y = c;
        pts.push(y);
        if !window.contains(y) {
            return (pts, false);
        }
        if traveled > 3.0 * step && y.dist(start) < 0.75 * step {
            return (pts, true);
        }
    }
    (pts, false)
}

/// Locate an isolated zero-minimum of |det Hess| by shrinking pattern search
/// from the best grid point (handles the umbilic's point caustic).
fn locate_point_degeneracy(
    family: &GeneratingFamily,
    best: PhasePoint,
    window: &PhaseWindow,
) -> Option<PhasePoint> {
    let mut y = best;
    let mut h = window.diagonal() / SEED_GRID as f64;
    let mut val = det_hess(family, y).abs();
    for _ in 0..200 {
        let mut improved = false;
        for (dx, dy) in [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0), (1.0, 1.0), (-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0)] {
            let cand = PhasePoint::new(y.y1 + dx * h, y.y2 + dy * h);
            let v = det_hess(family, cand).abs();
            if v < val {
                y = cand;
                val = v;
                improved = true;
            }
        }
        if !improved {
            h *= 0.5;
            if h < 1e-12 {
                break;
            }
        }
    }
    (val < 1e-8).then_some(y)
}

/// Trace the caustic of a family over the given phase window.
///
/// `step` is the marching step in phase-plane units; image points cluster
/// automatically near cusp vertices where the Lagrangian map slows down.
pub fn trace_caustic(
    family: &GeneratingFamily,
    window: &PhaseWindow,
    step: f64,
) -> Result<Caustic, CriticalPointError> {
    // seed from sign changes on a uniform grid
    let n = SEED_GRID;
    let mut vals = vec![0.0f64; n * n];
    let at = |i: usize, j: usize| -> PhasePoint {
        PhasePoint::new(
            window.y1_min + (i as f64 / (n - 1) as f64) * (window.y1_max - window.y1_min),
            window.y2_min + (j as f64 / (n - 1) as f64) * (window.y2_max - window.y2_min),
        )
    };
    for i in 0..n {
        for j in 0..n {
            vals[i * n + j] = det_hess(family, at(i, j));
        }
    }
    let mut seeds: Vec<PhasePoint> = Vec::new();
    let push_seed = |a: PhasePoint, b: PhasePoint, va: f64, vb: f64, seeds: &mut Vec<PhasePoint>| {
        if va == 0.0 {
            seeds.push(a);
            return;
        }
        if va * vb < 0.0 {
            let t = va / (va - vb);
            seeds.push(PhasePoint::new(
                a.y1 + t * (b.y1 - a.y1),
                a.y2 + t * (b.y2 - a.y2),
            ));
        }
    };
    for i in 0..n {
        for j in 0..n {
            if i + 1 < n {
                push_seed(at(i, j), at(i + 1, j), vals[i * n + j], vals[(i + 1) * n + j], &mut seeds);
            }
            if j + 1 < n {
                push_seed(at(i, j), at(i, j + 1), vals[i * n + j], vals[i * n + j + 1], &mut seeds);
            }
        }
    }

    let point_caustic_fallback = || -> Result<Caustic, CriticalPointError> {
        // no traceable curve: either a point degeneracy or nothing
        let mut best = at(0, 0);
        let mut best_val = f64::INFINITY;
        for i in 0..n {
            for j in 0..n {
                if vals[i * n + j].abs() < best_val {
                    best_val = vals[i * n + j].abs();
                    best = at(i, j);
                }
            }
        }
        let y = locate_point_degeneracy(family, best, window)
            .ok_or(CriticalPointError::EmptyCaustic)?;
        let g = family.gradient(y);
        let image = ParameterPoint::new(g[0], g[1]);
        Ok(Caustic {
            arcs: vec![],
            vertices: vec![image],
            sides: vec![],
            point_caustic: Some(image),
            parity_anchor: None,
            inside_parity_odd: None,
        })
    };
    if seeds.is_empty() {
        return point_caustic_fallback();
    }

    // trace curves, consuming seeds as they are covered
    let mut arcs: Vec<CausticArc> = Vec::new();
    let mut remaining = seeds;
    while let Some(seed) = remaining.first().copied() {
        remaining.remove(0);
        let Some(start) = correct_onto_curve(family, seed) else {
            continue;
        };
        let t0 = curve_tangent(family, start);
        let (fwd, closed) = march(family, start, t0, step, window);
        let mut phase_points: Vec<PhasePoint> = Vec::new();
        if closed {
            phase_points.push(start);
            phase_points.extend(fwd);
            phase_points.push(start);
        } else {
            let (bwd, _) = march(family, start, scale(t0, -1.0), step, window);
            phase_points.extend(bwd.iter().rev());
            phase_points.push(start);
            phase_points.extend(fwd);
        }
        if phase_points.len() < 3 {
            continue;
        }
        remaining.retain(|s| {
            phase_points
                .iter()
                .all(|p| p.dist(*s) > 2.0 * step)
        });
        let points: Vec<ParameterPoint> = phase_points
            .iter()
            .map(|y| {
                let g = family.gradient(*y);
                ParameterPoint::new(g[0], g[1])
            })
            .collect();
        arcs.push(CausticArc {
            id: arcs.len(),
            phase_points,
            points,
            closed,
        });
    }
    if arcs.is_empty() {
        return point_caustic_fallback();
    }

    // flag cusp vertices: the image tangent reverses there
    let mut vertices: Vec<ParameterPoint> = Vec::new();
    let mut split_indices: Vec<Vec<usize>> = vec![Vec::new(); arcs.len()];
    for (ai, arc) in arcs.iter().enumerate() {
        let m = arc.points.len();
        if m < 4 {
            continue;
        }
        let seg = |k: usize| sub(arc.points[k + 1].coords(), arc.points[k].coords());
        for k in 0..m.saturating_sub(2) {
            let u = seg(k);
            let v = seg(k + 1);
            if dot(u, v) < 0.0 && (norm(u) > 0.0 || norm(v) > 0.0) {
                if let Some(vx) =
                    refine_vertex(family, arc.phase_points[k], arc.phase_points[k + 2], u, step)
                {
                    vertices.push(vx);
                    split_indices[ai].push(k + 1);
                }
            }
        }
    }

    // split arcs into sides at the vertices
    let mut sides: Vec<CausticSide> = Vec::new();
    for (ai, arc) in arcs.iter().enumerate() {
        let cuts = &split_indices[ai];
        if cuts.is_empty() {
            sides.push(CausticSide {
                arc: ai,
                label: None,
                points: arc.points.clone(),
            });
            continue;
        }
        if arc.closed {
            // wrap-around side from the last cut through the seam to the first
            for w in 0..cuts.len() {
                let from = cuts[w];
                let to = cuts[(w + 1) % cuts.len()];
                let mut pts: Vec<ParameterPoint> = Vec::new();
                if w + 1 < cuts.len() {
                    pts.extend_from_slice(&arc.points[from..=to]);
                } else {
                    pts.extend_from_slice(&arc.points[from..arc.points.len() - 1]);
                    pts.extend_from_slice(&arc.points[..=to]);
                }
                sides.push(CausticSide {
                    arc: ai,
                    label: None,
                    points: pts,
                });
            }
        } else {
            let mut prev = 0usize;
            for &c in cuts {
                sides.push(CausticSide {
                    arc: ai,
                    label: None,
                    points: arc.points[prev..=c].to_vec(),
                });
                prev = c;
            }
            sides.push(CausticSide {
                arc: ai,
                label: None,
                points: arc.points[prev..].to_vec(),
            });
        }
    }

    let mut caustic = Caustic {
        arcs,
        vertices,
        sides,
        point_caustic: None,
        parity_anchor: None,
        inside_parity_odd: None,
    };
    label_sides(family, &mut caustic, window);
    Ok(caustic)
}

/// Refine a vertex bracket by marching fine substeps between two phase
/// points and bisecting the sign change of the image-tangent component
/// along the pre-flip direction.
fn refine_vertex(
    family: &GeneratingFamily,
    a: PhasePoint,
    b: PhasePoint,
    pre_dir: [f64; 2],
    step: f64,
) -> Option<ParameterPoint> {
    let d = unit(pre_dir);
    let image_speed = |y: PhasePoint| -> f64 {
        let t = curve_tangent(family, y);
        dot(family.hessian(y).mul_vec(t), d)
    };
    // walk from a toward b in fine corrected steps, bracketing the sign flip
    let mut dir = unit(sub(b.coords(), a.coords()));
    let sub_step = step / 16.0;
    let mut y = a;
    let mut s_prev = image_speed(y);
    // orient the walk so the reference sign starts positive
    let sign0 = if s_prev >= 0.0 { 1.0 } else { -1.0 };
    s_prev *= sign0;
    let mut lo = y;
    let mut hi = None;
    for _ in 0..64 {
        let pred = PhasePoint::new(y.y1 + sub_step * dir[0], y.y2 + sub_step * dir[1]);
        let c = correct_onto_curve(family, pred)?;
        let mut t = curve_tangent(family, c);
        if dot(t, dir) < 0.0 {
            t = scale(t, -1.0);
        }
        dir = t;
        let s = sign0 * image_speed(c);
        if s_prev >= 0.0 && s < 0.0 {
            hi = Some(c);
            break;
        }
        lo = c;
        s_prev = s;
        y = c;
        if c.dist(b) < sub_step {
            break;
        }
    }
    let mut hi = hi?;
    for _ in 0..48 {
        let mid = correct_onto_curve(
            family,
            PhasePoint::new(0.5 * (lo.y1 + hi.y1), 0.5 * (lo.y2 + hi.y2)),
        )?;
        if sign0 * image_speed(mid) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if lo.dist(hi) < 1e-13 {
            break;
        }
    }
    let y = PhasePoint::new(0.5 * (lo.y1 + hi.y1), 0.5 * (lo.y2 + hi.y2));
    let g = family.gradient(y);
    Some(ParameterPoint::new(g[0], g[1]))
}

/// Probe just inside each side and identify the saddle that merges with the
/// node there; also calibrates the inside-parity for the region test.
fn label_sides(family: &GeneratingFamily, caustic: &mut Caustic, window: &PhaseWindow) {
    // parity anchor: outside the caustic bounding box, angled off-grid
    let mut xmin = f64::INFINITY;
    let mut xmax = f64::NEG_INFINITY;
    let mut ymin = f64::INFINITY;
    let mut ymax = f64::NEG_INFINITY;
    for arc in &caustic.arcs {
        for p in &arc.points {
            xmin = xmin.min(p.x1);
            xmax = xmax.max(p.x1);
            ymin = ymin.min(p.x2);
            ymax = ymax.max(p.x2);
        }
    }
    let diag = ((xmax - xmin).hypot(ymax - ymin)).max(1e-6);
    caustic.parity_anchor = Some([xmax + 0.31 * diag + 1.0, 0.5 * (ymin + ymax) + 0.173 * diag]);

    let probe_dist = (0.02 * diag).clamp(1e-3, 0.5);
    let mut inside_probe: Option<ParameterPoint> = None;

    let sides = std::mem::take(&mut caustic.sides);
    let labeled_sides: Vec<CausticSide> = sides
        .into_iter()
        .map(|mut side| {
            if side.points.len() < 2 {
                return side;
            }
            let mid_idx = side.points.len() / 2;
            let m = side.points[mid_idx].coords();
            let tang = unit(sub(
                side.points[(mid_idx + 1).min(side.points.len() - 1)].coords(),
                side.points[mid_idx.saturating_sub(1)].coords(),
            ));
            let nrm = rot90(tang);
            let count_at = |x: ParameterPoint| -> usize {
                find_critical_points(family, x, window)
                    .map(|v| v.len())
                    .unwrap_or(0)
            };
            let p_plus = ParameterPoint::new(m[0] + probe_dist * nrm[0], m[1] + probe_dist * nrm[1]);
            let p_minus =
                ParameterPoint::new(m[0] - probe_dist * nrm[0], m[1] - probe_dist * nrm[1]);
            let (inward, p_in) = if count_at(p_plus) >= count_at(p_minus) {
                (nrm, p_plus)
            } else {
                (scale(nrm, -1.0), p_minus)
            };
            if inside_probe.is_none() {
                inside_probe = Some(p_in);
            }
            side.label = merging_saddle(family, m, inward, probe_dist, window);
            side
        })
        .collect();
    caustic.sides = labeled_sides;

    if let (Some(probe), Some(anchor)) = (inside_probe, caustic.parity_anchor) {
        caustic.inside_parity_odd = Some(caustic.crossing_parity(probe.coords(), anchor));
    }
}

/// Identify which saddle merges with the node as the side is approached:
/// the saddle/node pair whose separation shrinks as the probe distance does.
fn merging_saddle(
    family: &GeneratingFamily,
    side_point: [f64; 2],
    inward: [f64; 2],
    probe_dist: f64,
    window: &PhaseWindow,
) -> Option<u8> {
    let probe = |d: f64| -> Option<Vec<super::CriticalPoint>> {
        let x = ParameterPoint::new(side_point[0] + d * inward[0], side_point[1] + d * inward[1]);
        match family.base_kind() {
            BaseKind::Cusp => {
                // go in via the symmetry axis to stay inside the non-convex region
                let x0 = ParameterPoint::new(0.0, 1.0);
                let ref0 = labeled_points(family, x0, window).ok()?;
                let way = ParameterPoint::new(0.0, x.x2.max(1.0));
                let mid = continue_labels(family, x0, &ref0, way, 0.1, window).ok()?;
                continue_labels(family, way, &mid, x, 0.05, window).ok()
            }
            _ => labeled_points(family, x, window).ok(),
        }
    };
    let pair_gap = |pts: &[super::CriticalPoint], idx: u8| -> Option<f64> {
        let node = pts.iter().find(|p| {
            matches!(p.class, PointClass::UnstableNode | PointClass::StableNode)
                || p.label == Label::N
        })?;
        let saddle = pts.iter().find(|p| p.label == Label::saddle(idx))?;
        Some(node.y.dist(saddle.y))
    };
    let far = probe(probe_dist)?;
    let near = probe(probe_dist / 4.0)?;
    let mut best: Option<(u8, f64)> = None;
    for idx in 1..=3u8 {
        if let (Some(g_far), Some(g_near)) = (pair_gap(&far, idx), pair_gap(&near, idx)) {
            if g_near < 0.8 * g_far {
                let score = g_near / g_far;
                if best.map_or(true, |(_, s)| score < s) {
                    best = Some((idx, score));
                }
            }
        }
    }
    if best.is_none() {
        // fall back to the saddle nearest the node at the closer probe
        let node = near.iter().find(|p| {
            matches!(p.class, PointClass::UnstableNode | PointClass::StableNode)
                || p.label == Label::N
        })?;
        let mut ranked: Vec<(f64, u8)> = (1..=3u8)
            .filter_map(|i| {
                near.iter()
                    .find(|p| p.label == Label::saddle(i))
                    .map(|p| (p.y.dist(node.y), i))
            })
            .collect();
        ranked.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
        return ranked.first().map(|&(_, i)| i);
    }
    best.map(|(i, _)| i)
}

#[cfg(test)]
mod tests {
    use super::*;

    const W: PhaseWindow = PhaseWindow {
        y1_min: -4.0,
        y1_max: 4.0,
        y2_min: -4.0,
        y2_max: 4.0,
    };

    #[test]
    fn fold_caustic_is_the_line_x1_zero() {
        let c = trace_caustic(&GeneratingFamily::Fold, &W, 0.05).unwrap();
        assert_eq!(c.arcs.len(), 1);
        assert!(c.vertices.is_empty());
        for p in &c.arcs[0].points {
            assert!(p.x1.abs() < 1e-9);
        }
        assert_eq!(c.region_test(ParameterPoint::new(1.0, 0.3), 1e-6), Region::Inside);
        assert_eq!(c.region_test(ParameterPoint::new(-1.0, 0.3), 1e-6), Region::Outside);
        assert_eq!(c.sides.len(), 1);
        assert_eq!(c.sides[0].label, Some(1));
    }

    #[test]
    fn cusp_caustic_matches_semicubical_parabola() {
        let c = trace_caustic(&GeneratingFamily::Cusp, &W, 0.02).unwrap();
        // the single traced arc maps onto |x1| = (4/3) sqrt(2/3) x2^{3/2}
        let coef = 4.0 / 3.0 * (2.0_f64 / 3.0).sqrt();
        let mut checked = 0;
        for arc in &c.arcs {
            for p in &arc.points {
                if p.x2 > 1e-3 {
                    let want = coef * p.x2.powf(1.5);
                    assert!(
                        (p.x1.abs() - want).abs() < 1e-6 * want.max(1e-9),
                        "point {p:?} off the parabola"
                    );
                    checked += 1;
                }
            }
        }
        assert!(checked > 100);
        // one cusp vertex at the origin
        assert_eq!(c.vertices.len(), 1);
        assert!(c.vertices[0].r() < 1e-6, "{:?}", c.vertices[0]);
        // example point: y = (1, 1/2) on det Hess = 0 maps to x = (2, 3/2)
        let y = PhasePoint::new(1.0, 0.5);
        assert!(det_hess(&GeneratingFamily::Cusp, y).abs() < 1e-15);
        let g = GeneratingFamily::Cusp.gradient(y);
        assert_eq!((g[0], g[1]), (2.0, 1.5));
        // sides: l1 is the x1 > 0 branch (s1 merges there), l2 the other
        assert_eq!(c.sides.len(), 2);
        for s in &c.sides {
            let probe = s.points[s.points.len() / 2];
            if probe.x1 > 0.0 {
                assert_eq!(s.label, Some(1));
            } else {
                assert_eq!(s.label, Some(2));
            }
        }
        // region test against the analytic formula
        for (x, want) in [
            (ParameterPoint::new(0.0, 1.0), Region::Inside),
            (ParameterPoint::new(2.0, 1.0), Region::Outside),
            (ParameterPoint::new(-2.0, 1.0), Region::Outside),
            (ParameterPoint::new(0.0, -0.5), Region::Outside),
            (ParameterPoint::new(1.0, 2.0), Region::Inside),
        ] {
            assert_eq!(c.region_test(x, 1e-8), want, "at {x:?}");
        }
    }

    #[test]
    fn umbilic_caustic_is_the_origin() {
        let c = trace_caustic(&GeneratingFamily::EllipticUmbilic, &W, 0.02).unwrap();
        assert!(c.arcs.is_empty());
        let p = c.point_caustic.expect("point caustic");
        assert!(p.r() < 1e-8);
        assert_eq!(c.region_test(ParameterPoint::new(0.5, 0.0), 1e-6), Region::Outside);
        assert_eq!(c.region_test(ParameterPoint::new(0.0, 0.0), 1e-6), Region::On);
    }

    #[test]
    fn perturbed_umbilic_caustic_is_the_tricuspoid() {
        let c = trace_caustic(&GeneratingFamily::PerturbedUmbilic, &W, 0.01).unwrap();
        assert_eq!(c.arcs.len(), 1);
        assert!(c.arcs[0].closed);
        // three cusp vertices at radius 3/4, angles 0, 2pi/3, 4pi/3
        assert_eq!(c.vertices.len(), 3);
        let mut angles: Vec<f64> = c.vertices.iter().map(|v| v.alpha()).collect();
        angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let want = [0.0, 2.0 * std::f64::consts::PI / 3.0, 4.0 * std::f64::consts::PI / 3.0];
        for (a, w) in angles.iter().zip(want) {
            let d = (a - w).abs().min((a - w + std::f64::consts::TAU).abs());
            assert!(d < 1e-4, "vertex angle {a} vs {w}");
        }
        for v in &c.vertices {
            assert!((v.r() - 0.75).abs() < 1e-6, "vertex radius {}", v.r());
        }
        // the x1-axis crossings: vertex at (3/4, 0), fold point at (-1/4, 0)
        assert!(c
            .vertices
            .iter()
            .any(|v| v.dist(ParameterPoint::new(0.75, 0.0)) < 1e-6));
        let fold = c
            .nearest_side(ParameterPoint::new(-0.25, 0.0))
            .map(|(_, d)| d)
            .unwrap();
        assert!(fold < 1e-4, "fold point distance {fold}");
        // sides labeled: left side is l3 (s3 merges with n there)
        assert_eq!(c.sides.len(), 3);
        let left = c
            .nearest_side(ParameterPoint::new(-0.25, 0.0))
            .unwrap()
            .0;
        assert_eq!(left.label, Some(3));
        let labels = c.side_labels();
        assert_eq!(labels, vec![1, 2, 3]);
        // region test
        assert_eq!(c.region_test(ParameterPoint::new(0.0, 0.0), 1e-6), Region::Inside);
        assert_eq!(c.region_test(ParameterPoint::new(1.0, 1.0), 1e-6), Region::Outside);
        assert_eq!(c.region_test(ParameterPoint::new(0.5, 0.0), 1e-6), Region::Inside);
        // vertex preference in feature matching
        assert_eq!(
            c.nearest_feature(ParameterPoint::new(0.751, 1e-3), 0.05),
            Some(CausticFeature::Vertex)
        );
        assert_eq!(
            c.nearest_feature(ParameterPoint::new(-0.26, 0.0), 0.05),
            Some(CausticFeature::FoldSide { label: Some(3) })
        );
    }
}

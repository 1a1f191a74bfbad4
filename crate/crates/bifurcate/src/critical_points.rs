//! Critical points of the gradient fields: closed forms where available,
//! multistart Newton with deflation elsewhere, eigenvalue classification,
//! persistent labels carried by nearest-neighbor continuation, and the
//! caustic (the parameter locus of degenerate critical points).

mod caustic;

pub use caustic::{trace_caustic, Caustic, CausticArc, CausticFeature, CausticSide, Region};

use crate::field_models::{GeneratingFamily, ParameterPoint, PhasePoint};
use crate::linalg::{self, dot, norm, solve2};
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Relative threshold under which an eigenvalue counts as zero:
/// `|l| < DEGENERACY_TOL * max(1, |l_other|)`.
pub const DEGENERACY_TOL: f64 = 1e-6;
/// Coincident roots closer than this fraction of the window diagonal merge.
pub const MERGE_TOL_FACTOR: f64 = 1e-7;
/// A root must satisfy `|field| < RESIDUAL_TOL * scale`.
pub const RESIDUAL_TOL: f64 = 1e-10;
/// Multistart grid is MULTISTART_N x MULTISTART_N over the phase window.
pub const MULTISTART_N: usize = 21;
/// Third-derivative threshold separating a saddle-node from a deeper
/// degeneracy along the kernel direction.
const HIGHER_DEGENERATE_TOL: f64 = 1e-3;

/// Rectangular search window in the phase plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseWindow {
    pub y1_min: f64,
    pub y1_max: f64,
    pub y2_min: f64,
    pub y2_max: f64,
}

impl PhaseWindow {
    pub fn new(y1_min: f64, y1_max: f64, y2_min: f64, y2_max: f64) -> Self {
        Self {
            y1_min,
            y1_max,
            y2_min,
            y2_max,
        }
    }

    pub fn square(half: f64) -> Self {
        Self::new(-half, half, -half, half)
    }

    pub fn diagonal(&self) -> f64 {
        (self.y1_max - self.y1_min).hypot(self.y2_max - self.y2_min)
    }

    pub fn contains(&self, y: PhasePoint) -> bool {
        y.y1 >= self.y1_min && y.y1 <= self.y1_max && y.y2 >= self.y2_min && y.y2 <= self.y2_max
    }

    fn contains_with_margin(&self, y: PhasePoint, margin: f64) -> bool {
        let mx = margin * (self.y1_max - self.y1_min);
        let my = margin * (self.y2_max - self.y2_min);
        y.y1 >= self.y1_min - mx
            && y.y1 <= self.y1_max + mx
            && y.y2 >= self.y2_min - my
            && y.y2 <= self.y2_max + my
    }
}

impl Default for PhaseWindow {
    fn default() -> Self {
        Self::square(4.0)
    }
}

/// Linearization type of a critical point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointClass {
    Saddle,
    UnstableNode,
    StableNode,
    SaddleNode,
    TwoFoldSaddle,
    HigherDegenerate,
}

impl fmt::Display for PointClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PointClass::Saddle => "saddle",
            PointClass::UnstableNode => "unstable_node",
            PointClass::StableNode => "stable_node",
            PointClass::SaddleNode => "saddle_node",
            PointClass::TwoFoldSaddle => "two_fold_saddle",
            PointClass::HigherDegenerate => "higher_degenerate",
        };
        f.write_str(s)
    }
}

/// Persistent identity of a critical point across parameter space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    S1,
    S2,
    S3,
    N,
    /// Saddle-node formed by `s_i` gluing with `n` on caustic side `l_i`.
    Ns(u8),
    /// The triple degeneracy at a tricuspoid vertex.
    Ns1S2,
    Unlabeled,
}

impl Label {
    pub fn saddle(i: u8) -> Label {
        match i {
            1 => Label::S1,
            2 => Label::S2,
            3 => Label::S3,
            _ => Label::Unlabeled,
        }
    }

    pub fn saddle_index(&self) -> Option<u8> {
        match self {
            Label::S1 => Some(1),
            Label::S2 => Some(2),
            Label::S3 => Some(3),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Label::S1 => "s1",
            Label::S2 => "s2",
            Label::S3 => "s3",
            Label::N => "n",
            Label::Ns(i) => return write!(f, "ns{i}"),
            Label::Ns1S2 => "ns1s2",
            Label::Unlabeled => "-",
        };
        f.write_str(s)
    }
}

/// A located, classified, possibly labeled rest point of the flow.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub y: PhasePoint,
    /// Eigenvalues of the linearization (Hessian of f), ascending.
    pub eigenvalues: [f64; 2],
    /// Unit eigenvectors matching `eigenvalues`.
    pub eigenvectors: [[f64; 2]; 2],
    pub class: PointClass,
    pub label: Label,
}

impl CriticalPoint {
    pub fn unstable_direction(&self) -> [f64; 2] {
        self.eigenvectors[1]
    }

    pub fn stable_direction(&self) -> [f64; 2] {
        self.eigenvectors[0]
    }
}

#[derive(Debug, Error)]
pub enum CriticalPointError {
    #[error("Newton refinement failed to converge from starts {starts:?} at x=({x1}, {x2})")]
    NonConvergence {
        x1: f64,
        x2: f64,
        starts: Vec<(f64, f64)>,
    },
    #[error("ambiguous label match for {label}: candidates at distance {d1:.3e} and {d2:.3e}")]
    AmbiguousMatch { label: Label, d1: f64, d2: f64 },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("no degeneracy curve found in the phase window")]
    EmptyCaustic,
}

/// Classify a symmetric linearization by its eigenvalues.
pub fn classify(eigenvalues: [f64; 2], degeneracy_tol: f64) -> PointClass {
    let [l1, l2] = eigenvalues;
    let z1 = l1.abs() < degeneracy_tol * 1.0_f64.max(l2.abs());
    let z2 = l2.abs() < degeneracy_tol * 1.0_f64.max(l1.abs());
    match (z1, z2) {
        (true, true) => PointClass::TwoFoldSaddle,
        (true, false) | (false, true) => PointClass::SaddleNode,
        (false, false) => {
            if l1 > 0.0 {
                PointClass::UnstableNode
            } else if l2 < 0.0 {
                PointClass::StableNode
            } else {
                PointClass::Saddle
            }
        }
    }
}

fn make_point(family: &GeneratingFamily, x: ParameterPoint, y: PhasePoint, label: Label) -> CriticalPoint {
    let eig = family.eval_jacobian(x, y).eigen();
    let mut class = classify(eig.values, DEGENERACY_TOL);
    if class == PointClass::SaddleNode && third_derivative_vanishes(family, y, &eig) {
        class = PointClass::HigherDegenerate;
    }
    CriticalPoint {
        y,
        eigenvalues: eig.values,
        eigenvectors: eig.vectors,
        class,
        label,
    }
}

/// A saddle-node has a nonzero third derivative of `f` along the kernel of
/// the Hessian; when it vanishes too, the point is more degenerate (e.g. the
/// cusp-vertex point where three critical points have merged).
fn third_derivative_vanishes(
    family: &GeneratingFamily,
    y: PhasePoint,
    eig: &crate::linalg::Eigen2,
) -> bool {
    let v = if eig.values[0].abs() <= eig.values[1].abs() {
        eig.vectors[0]
    } else {
        eig.vectors[1]
    };
    let h = 1e-4;
    let x0 = ParameterPoint::new(0.0, 0.0);
    let fv = |s: f64| {
        let p = PhasePoint::new(y.y1 + s * v[0], y.y2 + s * v[1]);
        let f = family.eval_field(x0, p);
        f.v1 * v[0] + f.v2 * v[1]
    };
    let third = (fv(h) - 2.0 * fv(0.0) + fv(-h)) / (h * h);
    third.abs() < HIGHER_DEGENERATE_TOL
}

/// Newton iteration on the field, optionally deflated by already-found roots:
/// the working map is `G(y) = F(y) / prod_k |y - r_k|`, whose Jacobian is
/// `W J_F + F (grad W)^T`.
fn newton_root(
    family: &GeneratingFamily,
    x: ParameterPoint,
    start: PhasePoint,
    deflate: &[PhasePoint],
    window: &PhaseWindow,
) -> Option<PhasePoint> {
    let mut y = start;
    let res_target = |p: PhasePoint| {
        RESIDUAL_TOL * 1e-2 * (1.0 + p.y1 * p.y1 + p.y2 * p.y2 + x.r())
    };
    let deflation = |p: PhasePoint| -> (f64, [f64; 2]) {
        // returns W and grad W / W
        let mut w = 1.0;
        let mut glog = [0.0, 0.0];
        for r in deflate {
            let d = [p.y1 - r.y1, p.y2 - r.y2];
            let n2 = (dot(d, d)).max(1e-24);
            w /= n2.sqrt();
            glog[0] -= d[0] / n2;
            glog[1] -= d[1] / n2;
        }
        (w, glog)
    };
    let gval = |p: PhasePoint| -> [f64; 2] {
        let f = family.eval_field(x, p);
        let (w, _) = deflation(p);
        [w * f.v1, w * f.v2]
    };
    for _ in 0..120 {
        let f = family.eval_field(x, y);
        let j = family.eval_jacobian(x, y);
        let (w, glog) = deflation(y);
        let g = [w * f.v1, w * f.v2];
        let gw = [w * glog[0], w * glog[1]];
        let jg = [
            [w * j.a + f.v1 * gw[0], w * j.b + f.v1 * gw[1]],
            [w * j.b + f.v2 * gw[0], w * j.d + f.v2 * gw[1]],
        ];
        let step = solve2(jg, [-g[0], -g[1]])?;
        let mut lambda = 1.0;
        let g0 = norm(g);
        let mut accepted = false;
        for _ in 0..10 {
            let cand = PhasePoint::new(y.y1 + lambda * step[0], y.y2 + lambda * step[1]);
            if norm(gval(cand)) <= g0 * (1.0 - 0.25 * lambda) + 1e-300 {
                y = cand;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            // stagnating on the deflated map; take the plain step and hope
            y = PhasePoint::new(y.y1 + step[0], y.y2 + step[1]);
        }
        if !window.contains_with_margin(y, 0.25) {
            return None;
        }
        let fres = family.eval_field(x, y).norm();
        if fres < res_target(y) && norm([lambda * step[0], lambda * step[1]]) < 1e-11 {
            break;
        }
    }
    polish_root(family, x, y)
}

/// Plain (undeflated) Newton polish; tolerant of degenerate roots, where the
/// iteration converges linearly instead of quadratically.
fn polish_root(
    family: &GeneratingFamily,
    x: ParameterPoint,
    start: PhasePoint,
) -> Option<PhasePoint> {
    let mut y = start;
    let mut best = y;
    let mut best_res = family.eval_field(x, y).norm();
    for _ in 0..80 {
        let f = family.eval_field(x, y);
        let j = family.eval_jacobian(x, y);
        let Some(step) = solve2([[j.a, j.b], [j.b, j.d]], [-f.v1, -f.v2]) else {
            break;
        };
        y = PhasePoint::new(y.y1 + step[0], y.y2 + step[1]);
        let res = family.eval_field(x, y).norm();
        if res < best_res {
            best_res = res;
            best = y;
        }
        if norm(step) < 1e-14 * (1.0 + norm(y.coords())) {
            break;
        }
    }
    let scale = 1.0 + best.y1 * best.y1 + best.y2 * best.y2 + x.r();
    if best_res < RESIDUAL_TOL * scale {
        Some(best)
    } else {
        None
    }
}

fn dedupe_roots(mut roots: Vec<PhasePoint>, merge_tol: f64) -> Vec<PhasePoint> {
    roots.sort_by(|a, b| {
        (a.y1, a.y2)
            .partial_cmp(&(b.y1, b.y2))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut out: Vec<PhasePoint> = Vec::new();
    for r in roots {
        if out.iter().all(|q| q.dist(r) > merge_tol) {
            out.push(r);
        }
    }
    out
}

/// The numeric root-finding path on its own, bypassing closed forms: every
/// critical point found by multistart Newton with deflation, classified but
/// unlabeled. Exists so the two paths can be compared wherever both apply.
pub fn multistart_critical_points(
    family: &GeneratingFamily,
    x: ParameterPoint,
    window: &PhaseWindow,
) -> Vec<CriticalPoint> {
    multistart_roots(family, x, window, &[])
        .into_iter()
        .map(|y| make_point(family, x, y, Label::Unlabeled))
        .collect()
}

fn multistart_roots(
    family: &GeneratingFamily,
    x: ParameterPoint,
    window: &PhaseWindow,
    extra_starts: &[PhasePoint],
) -> Vec<PhasePoint> {
    let merge_tol = MERGE_TOL_FACTOR * window.diagonal();
    let mut found: Vec<PhasePoint> = Vec::new();
    let try_start = |start: PhasePoint, found: &mut Vec<PhasePoint>| {
        if let Some(r) = newton_root(family, x, start, found, window) {
            if found.iter().all(|q| q.dist(r) > merge_tol) {
                found.push(r);
            }
        }
    };
    for s in extra_starts {
        try_start(*s, &mut found);
    }
    let n = MULTISTART_N;
    for i in 0..n {
        for j in 0..n {
            let fy1 = (i as f64 + 0.5) / n as f64;
            let fy2 = (j as f64 + 0.5) / n as f64;
            let start = PhasePoint::new(
                window.y1_min + fy1 * (window.y1_max - window.y1_min),
                window.y2_min + fy2 * (window.y2_max - window.y2_min),
            );
            try_start(start, &mut found);
        }
    }
    dedupe_roots(found, merge_tol)
}

/// All critical points of `grad f - x` in the window, classified.
///
/// Closed forms are used for the fold, the cusp on its symmetry axis
/// (`x1 = 0`), the elliptic umbilic, and the quadratically perturbed umbilic
/// on `x2 = 0`; everything else goes through multistart Newton with
/// deflation. Points carrying a canonical closed-form identity come back
/// labeled; Newton roots come back `Unlabeled`.
pub fn find_critical_points(
    family: &GeneratingFamily,
    x: ParameterPoint,
    window: &PhaseWindow,
) -> Result<Vec<CriticalPoint>, CriticalPointError> {
    use crate::field_models::BaseKind::*;
    let merge_tol = MERGE_TOL_FACTOR * window.diagonal();
    if family.bump().is_none() {
        match family.base_kind() {
            Fold => {
                let mut pts = Vec::new();
                if x.x1 > 0.0 {
                    let s = x.x1.sqrt();
                    pts.push(make_point(family, x, PhasePoint::new(s, x.x2), Label::N));
                    pts.push(make_point(family, x, PhasePoint::new(-s, x.x2), Label::S1));
                } else if x.x1 == 0.0 {
                    pts.push(make_point(
                        family,
                        x,
                        PhasePoint::new(0.0, x.x2),
                        Label::Ns(1),
                    ));
                }
                return Ok(pts);
            }
            Cusp if x.x1 == 0.0 => {
                let mut pts = vec![];
                if x.x2 > 0.0 {
                    let w = (2.0 * x.x2).sqrt();
                    pts.push(make_point(family, x, PhasePoint::new(0.0, x.x2), Label::N));
                    if w > merge_tol {
                        pts.push(make_point(family, x, PhasePoint::new(w, -x.x2), Label::S1));
                        pts.push(make_point(
                            family,
                            x,
                            PhasePoint::new(-w, -x.x2),
                            Label::S2,
                        ));
                    }
                } else {
                    let label = if x.x2 == 0.0 {
                        Label::Ns1S2
                    } else {
                        Label::Unlabeled
                    };
                    pts.push(make_point(family, x, PhasePoint::new(0.0, x.x2), label));
                }
                return Ok(pts);
            }
            EllipticUmbilic => {
                if x.r() == 0.0 {
                    return Ok(vec![make_point(
                        family,
                        x,
                        PhasePoint::new(0.0, 0.0),
                        Label::Unlabeled,
                    )]);
                }
                let (s1, s2) = closed_form_umbilic_saddles(x)?;
                return Ok(vec![s1, s2]);
            }
            PerturbedUmbilic if x.x2 == 0.0 => {
                return Ok(perturbed_axis_points(x, merge_tol));
            }
            _ => {}
        }
    }
    // Newton path; for bumped families, seed with the base closed forms.
    let mut extra = Vec::new();
    if family.bump().is_some() {
        if let Ok(base_pts) = find_critical_points(&base_family(family), x, window) {
            extra.extend(base_pts.iter().map(|p| p.y));
        }
    }
    let roots = multistart_roots(family, x, window, &extra);
    Ok(roots
        .into_iter()
        .map(|y| make_point(family, x, y, Label::Unlabeled))
        .collect())
}

fn base_family(family: &GeneratingFamily) -> GeneratingFamily {
    use crate::field_models::BaseKind::*;
    match family.base_kind() {
        Fold => GeneratingFamily::Fold,
        Cusp => GeneratingFamily::Cusp,
        EllipticUmbilic => GeneratingFamily::EllipticUmbilic,
        PerturbedUmbilic => GeneratingFamily::PerturbedUmbilic,
    }
}

/// The two saddles of the unperturbed elliptic umbilic at `x != 0`.
///
/// Solving `(y1 + i y2)^2 = x1 - i x2` gives `y = sqrt(r) e^{-i alpha / 2}`
/// with `alpha` in `[0, 2 pi)`, i.e. `y1 = sqrt((r + x1)/2)` up to sign; this
/// is the square-root branch that keeps `s1` on the positive `y1`-axis for
/// `alpha = 0` and rotates it by `-alpha/2` as `x` turns. The labels are
/// per-branch: transporting them around the origin swaps `s1` and `s2`.
pub fn closed_form_umbilic_saddles(
    x: ParameterPoint,
) -> Result<(CriticalPoint, CriticalPoint), CriticalPointError> {
    let r = x.r();
    if r == 0.0 {
        return Err(CriticalPointError::Degenerate(
            "x = (0, 0): the two saddles have merged into a 2-fold saddle".into(),
        ));
    }
    let fam = GeneratingFamily::EllipticUmbilic;
    let rho = r.sqrt();
    let half = 0.5 * x.alpha();
    let y1 = PhasePoint::new(rho * half.cos(), -rho * half.sin());
    let y2 = y1.antipode();
    let s1 = make_point(&fam, x, y1, Label::S1);
    let s2 = make_point(&fam, x, y2, Label::S2);
    debug_assert!(fam.eval_field(x, y1).norm() < 1e-12 * (1.0 + r));
    Ok((s1, s2))
}

/// Closed-form critical points of the perturbed umbilic on the axis `x2 = 0`.
pub fn perturbed_axis_points(x: ParameterPoint, merge_tol: f64) -> Vec<CriticalPoint> {
    let fam = GeneratingFamily::PerturbedUmbilic;
    let mut pts: Vec<CriticalPoint> = Vec::new();
    let push = |y: PhasePoint, label: Label, pts: &mut Vec<CriticalPoint>| {
        if let Some(existing) = pts.iter_mut().find(|p| p.y.dist(y) <= merge_tol) {
            existing.label = combine_labels(vec![existing.label, label], existing.class);
        } else {
            pts.push(make_point(&fam, x, y, label));
        }
    };
    if x.x1 <= 0.75 {
        let w = (0.75 - x.x1).sqrt();
        push(PhasePoint::new(0.5, w), Label::S1, &mut pts);
        push(PhasePoint::new(0.5, -w), Label::S2, &mut pts);
    }
    if x.x1 >= -0.25 {
        let d = (1.0 + 4.0 * x.x1).sqrt();
        push(PhasePoint::new(-(1.0 + d) / 2.0, 0.0), Label::S3, &mut pts);
        push(PhasePoint::new((-1.0 + d) / 2.0, 0.0), Label::N, &mut pts);
    }
    pts
}

/// Collapse the set of reference labels that landed on one current point.
/// A node plus one saddle is the saddle-node `ns_i`; the `{s1, s2, n}` trio
/// is the tricuspoid-vertex point `ns1s2` while degenerate, and plain `n`
/// once it has re-emerged as a simple saddle past the vertex.
fn combine_labels(mut labels: Vec<Label>, class: PointClass) -> Label {
    use Label::*;
    labels.sort();
    labels.dedup();
    labels.retain(|l| *l != Unlabeled);
    let nondegenerate = matches!(
        class,
        PointClass::Saddle | PointClass::UnstableNode | PointClass::StableNode
    );
    match labels.as_slice() {
        [] => Unlabeled,
        // a lone merged label continuing onto a plain point cannot be
        // resolved back into its constituents
        [Ns(_) | Ns1S2] if nondegenerate => Unlabeled,
        [one] => *one,
        _ => {
            let has_n = labels.contains(&N) || labels.iter().any(|l| matches!(l, Ns(_) | Ns1S2));
            let saddles: Vec<u8> = labels.iter().filter_map(|l| l.saddle_index()).collect();
            match (has_n, saddles.as_slice()) {
                (true, [i]) => Ns(*i),
                (true, s) if s.contains(&1) && s.contains(&2) => {
                    if class == PointClass::Saddle {
                        N
                    } else {
                        Ns1S2
                    }
                }
                (false, s) if s.contains(&1) && s.contains(&2) => Unlabeled,
                _ => Unlabeled,
            }
        }
    }
}

/// Reference labeling: positions plus eigenvalues for matching.
pub type Labeling = Vec<CriticalPoint>;

/// Transfer labels from a nearby reference configuration onto `points` by
/// nearest-neighbor matching in (position, eigenvalues). Reference points
/// that collapse onto a single current point produce merged labels
/// (`ns_i` for a saddle/node pair, `ns1s2` for the vertex trio). Unmatched
/// current points come back `Unlabeled`.
pub fn label_points(
    points: &[CriticalPoint],
    _x: ParameterPoint,
    reference: &[CriticalPoint],
) -> Result<Vec<CriticalPoint>, CriticalPointError> {
    let mut out: Vec<CriticalPoint> = points
        .iter()
        .map(|p| CriticalPoint {
            label: Label::Unlabeled,
            ..*p
        })
        .collect();
    if points.is_empty() {
        return Ok(out);
    }
    let cost = |r: &CriticalPoint, p: &CriticalPoint| {
        r.y.dist(p.y)
            + 0.05
                * ((r.eigenvalues[0] - p.eigenvalues[0]).abs()
                    + (r.eigenvalues[1] - p.eigenvalues[1]).abs())
    };
    // a reference point only matches within a fraction of its distance to
    // the nearest other reference point; beyond that it has died
    let radius_of = |j: usize| -> f64 {
        let mut sep = f64::INFINITY;
        for (k, other) in reference.iter().enumerate() {
            if k != j {
                sep = sep.min(reference[j].y.dist(other.y));
            }
        }
        if sep.is_finite() {
            (0.75 * sep).max(1e-6)
        } else {
            f64::INFINITY
        }
    };
    let tie_tol = 1e-6;

    let mut matched_labels: Vec<Vec<Label>> = vec![Vec::new(); out.len()];
    for (j, r) in reference.iter().enumerate() {
        if r.label == Label::Unlabeled {
            continue;
        }
        let radius = radius_of(j);
        let mut ranked: Vec<(f64, usize)> = out
            .iter()
            .enumerate()
            .map(|(i, p)| (cost(r, p), i))
            .collect();
        ranked.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
        let (d1, i1) = ranked[0];
        if d1 > radius {
            continue; // the reference point has no continuation here: it died
        }
        if let Some(&(d2, _)) = ranked.get(1) {
            if d2 <= radius && d2 - d1 < tie_tol {
                return Err(CriticalPointError::AmbiguousMatch {
                    label: r.label,
                    d1,
                    d2,
                });
            }
        }
        matched_labels[i1].push(r.label);
    }
    for (i, labels) in matched_labels.into_iter().enumerate() {
        out[i].label = combine_labels(labels, out[i].class);
    }
    Ok(out)
}

/// Step labels from `(from_x, labeled points)` to `to_x` along the straight
/// segment, splitting it so no single relabeling step exceeds `max_step`.
pub fn continue_labels(
    family: &GeneratingFamily,
    from_x: ParameterPoint,
    from: &[CriticalPoint],
    to_x: ParameterPoint,
    max_step: f64,
    window: &PhaseWindow,
) -> Result<Labeling, CriticalPointError> {
    let dist = from_x.dist(to_x);
    let steps = ((dist / max_step).ceil() as usize).max(1);
    let mut current: Labeling = from.to_vec();
    for k in 1..=steps {
        let t = k as f64 / steps as f64;
        let x = ParameterPoint::new(
            from_x.x1 + t * (to_x.x1 - from_x.x1),
            from_x.x2 + t * (to_x.x2 - from_x.x2),
        );
        let pts = find_critical_points(family, x, window)?;
        current = label_points(&pts, x, &current)?;
    }
    Ok(current)
}

/// Canonically labeled critical points at `x`, routing per family:
/// direct labels for the fold and the elliptic umbilic, continuation from
/// the canonical reference (`x = (0,0)` for the perturbed umbilic, the inner
/// axis point `(0, 1)` for the cusp) otherwise.
pub fn labeled_points(
    family: &GeneratingFamily,
    x: ParameterPoint,
    window: &PhaseWindow,
) -> Result<Labeling, CriticalPointError> {
    use crate::field_models::BaseKind::*;
    match family.base_kind() {
        Fold => find_critical_points(family, x, window),
        EllipticUmbilic => {
            let pts = find_critical_points(family, x, window)?;
            if family.bump().is_none() {
                return Ok(pts);
            }
            if x.r() == 0.0 {
                return Ok(pts);
            }
            let (s1, s2) = closed_form_umbilic_saddles(x)?;
            label_points(&pts, x, &[s1, s2])
        }
        PerturbedUmbilic if x.x2 == 0.0 && family.bump().is_none() => {
            find_critical_points(family, x, window)
        }
        PerturbedUmbilic | Cusp => {
            let x0 = match family.base_kind() {
                PerturbedUmbilic => ParameterPoint::new(0.0, 0.0),
                _ => ParameterPoint::new(0.0, 1.0),
            };
            let raw0 = find_critical_points(family, x0, window)?;
            let reference = if family.bump().is_none() {
                raw0
            } else {
                let canon = find_critical_points(&base_family(family), x0, window)?;
                label_points(&raw0, x0, &canon)?
            };
            // bend the path if it brushes a tricuspoid vertex, where three
            // points merge and matching degenerates
            let mut waypoints = vec![x0];
            if family.base_kind() == PerturbedUmbilic {
                let vertices: [ParameterPoint; 3] = [
                    ParameterPoint::from_polar(0.75, 0.0),
                    ParameterPoint::from_polar(0.75, 2.0 * std::f64::consts::PI / 3.0),
                    ParameterPoint::from_polar(0.75, 4.0 * std::f64::consts::PI / 3.0),
                ];
                let near_vertex = vertices.iter().any(|v| {
                    linalg::dist_to_segment(v.coords(), x0.coords(), x.coords()) < 0.02
                });
                if near_vertex && x.r() > 1e-9 {
                    let side = linalg::scale(linalg::unit(linalg::rot90(x.coords())), 0.15);
                    let mid = [0.5 * x.x1 + side[0], 0.5 * x.x2 + side[1]];
                    waypoints.push(ParameterPoint::new(mid[0], mid[1]));
                }
            }
            waypoints.push(x);
            let mut labeled = reference;
            for w in waypoints.windows(2) {
                labeled = continue_labels(family, w[0], &labeled, w[1], 0.05, window)?;
            }
            Ok(labeled)
        }
    }
}

/// Pick the point with a given label out of a labeling.
pub fn find_labeled(points: &[CriticalPoint], label: Label) -> Option<&CriticalPoint> {
    points.iter().find(|p| p.label == label)
}

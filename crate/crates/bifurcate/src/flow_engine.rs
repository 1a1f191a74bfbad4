//! Gradient-flow integration, invariant manifolds of saddles, the
//! separatrix-splitting function psi = h - k, and phase-portrait connection
//! graphs.
//!
//! The splitting function follows the transversal-section construction:
//! fix a section across the line joining two saddles, record the tangent
//! coordinate h where the chosen unstable branch of the first saddle first
//! crosses it and k where the chosen stable branch of the second saddle
//! does; psi = h - k vanishes exactly on saddle-to-saddle separatrices.

mod ode;

use crate::critical_points::{CriticalPoint, Label, PointClass};
use crate::field_models::{GeneratingFamily, ParameterPoint, PhasePoint};
use crate::linalg::{dot, norm, rot90, scale, sub, unit};
use ode::{Dopri5, DenseStep, StepOutcome};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default absolute local error tolerance of the integrator.
pub const DEFAULT_ABS_TOL: f64 = 1e-10;
/// Default relative local error tolerance.
pub const DEFAULT_REL_TOL: f64 = 1e-8;
/// Default cap on integration time; quadratic fields blow up or settle well
/// before this.
pub const DEFAULT_MAX_TIME: f64 = 200.0;
/// Basin radius for declaring convergence to a known critical point.
pub const CONVERGENCE_RADIUS: f64 = 1e-5;
/// An edge is declared when |psi| is below this fraction of the saddle-pair
/// distance.
pub const CONNECTION_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    fn sign(&self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        }
    }
}

/// Transversal section: a segment through `base` spanned by `tangent`,
/// crossed along `normal`; `(normal, tangent)` is positively oriented.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Section {
    pub base: PhasePoint,
    pub normal: [f64; 2],
    pub tangent: [f64; 2],
    pub half_width: f64,
}

impl Section {
    pub fn new(base: PhasePoint, normal: [f64; 2], half_width: f64) -> Self {
        let normal = unit(normal);
        Self {
            base,
            normal,
            tangent: rot90(normal),
            half_width,
        }
    }

    /// Auto placement for a saddle pair: midpoint, normal along the
    /// connecting direction, half-width half the pair distance.
    pub fn between(a: PhasePoint, b: PhasePoint) -> Self {
        let d = sub(b.coords(), a.coords());
        Self::new(
            PhasePoint::new(0.5 * (a.y1 + b.y1), 0.5 * (a.y2 + b.y2)),
            d,
            0.5 * norm(d),
        )
    }

    pub fn normal_coord(&self, y: [f64; 2]) -> f64 {
        dot(sub(y, self.base.coords()), self.normal)
    }

    pub fn tangent_coord(&self, y: [f64; 2]) -> f64 {
        dot(sub(y, self.base.coords()), self.tangent)
    }
}

/// Why an integration stopped.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Termination {
    SectionHit {
        t: f64,
        y: PhasePoint,
        tangent_coord: f64,
    },
    /// The section line was first crossed outside the half-width; the local
    /// connection geometry does not apply, so this is not a hit.
    SectionMissed {
        t: f64,
        y: PhasePoint,
        tangent_coord: f64,
    },
    Escaped {
        t: f64,
        y: PhasePoint,
    },
    ConvergedToCriticalPoint {
        t: f64,
        label: Label,
        y: PhasePoint,
    },
    MaxTime,
}

/// An integrated orbit. Sample times are physical (negative for backward
/// integration) and strictly monotone.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub samples: Vec<(f64, PhasePoint)>,
    pub termination: Termination,
    direction: Direction,
    segments: Vec<DenseStep>,
}

impl Trajectory {
    /// Dense evaluation at physical time `t` within the integrated span.
    pub fn eval(&self, t: f64) -> Option<PhasePoint> {
        let tau = t * self.direction.sign();
        if tau < -1e-12 {
            return None;
        }
        let seg = self
            .segments
            .iter()
            .find(|s| tau >= s.t0 - 1e-12 && tau <= s.t0 + s.h + 1e-12)?;
        let theta = ((tau - seg.t0) / seg.h).clamp(0.0, 1.0);
        let y = seg.eval(theta);
        Some(PhasePoint::new(y[0], y[1]))
    }

    pub fn last_point(&self) -> PhasePoint {
        self.samples.last().map(|(_, y)| *y).unwrap_or_else(|| {
            PhasePoint::new(f64::NAN, f64::NAN)
        })
    }

    pub fn span(&self) -> f64 {
        self.samples.last().map(|(t, _)| t.abs()).unwrap_or(0.0)
    }
}

/// Integration controls plus event inputs.
#[derive(Clone, Debug)]
pub struct FlowControls {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub escape_radius: f64,
    pub max_time: f64,
    pub max_steps: usize,
    pub convergence_radius: f64,
    /// Field-norm bound accompanying the basin test.
    pub field_tol: f64,
    /// Section event, if any.
    pub section: Option<Section>,
    /// Known critical points for convergence detection.
    pub critical_points: Vec<CriticalPoint>,
    /// Point whose own basin is ignored (the manifold's seed saddle).
    pub exclude: Option<PhasePoint>,
}

impl Default for FlowControls {
    fn default() -> Self {
        Self {
            abs_tol: DEFAULT_ABS_TOL,
            rel_tol: DEFAULT_REL_TOL,
            escape_radius: 40.0,
            max_time: DEFAULT_MAX_TIME,
            max_steps: 1_000_000,
            convergence_radius: CONVERGENCE_RADIUS,
            field_tol: 1e-3,
            section: None,
            critical_points: Vec::new(),
            exclude: None,
        }
    }
}

impl FlowControls {
    pub fn with_section(mut self, section: Section) -> Self {
        self.section = Some(section);
        self
    }

    pub fn with_critical_points(mut self, pts: &[CriticalPoint]) -> Self {
        self.critical_points = pts.to_vec();
        self
    }
}

/// Which invariant-manifold branch of a saddle to follow. Signs are relative
/// to the canonical orientation of the eigenvector (first nonzero component
/// positive).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManifoldKind {
    Unstable,
    Stable,
}

/// Branch sign of a separatrix relative to the facing convention: `Plus`
/// points toward the partner saddle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchSign {
    Plus,
    Minus,
}

impl BranchSign {
    pub fn signum(&self) -> f64 {
        match self {
            BranchSign::Plus => 1.0,
            BranchSign::Minus => -1.0,
        }
    }

    pub fn symbol(&self) -> &'static str {
        match self {
            BranchSign::Plus => "+",
            BranchSign::Minus => "-",
        }
    }

    pub const BOTH: [BranchSign; 2] = [BranchSign::Plus, BranchSign::Minus];
}

/// One evaluation of the splitting function at a parameter point.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SplittingSample {
    pub x: ParameterPoint,
    pub pair: (Label, Label),
    /// Tangent coordinate of the unstable-manifold crossing.
    pub h: f64,
    /// Tangent coordinate of the stable-manifold crossing.
    pub k: f64,
    /// psi = h - k, zero exactly on a saddle-to-saddle separatrix.
    pub psi: f64,
    pub branches: (BranchSign, BranchSign),
}

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("step size underflow at t = {t} (h = {h:.3e}); the flow is too stiff here")]
    StepUnderflow { t: f64, h: f64 },
    #[error("{kind:?} manifold never crossed the section: {termination:?}")]
    NoCrossing {
        kind: ManifoldKind,
        termination: Termination,
    },
    #[error("no saddle labeled {0} at this parameter point")]
    MissingSaddle(Label),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error(transparent)]
    CriticalPoints(#[from] crate::critical_points::CriticalPointError),
}

/// Integrate the flow from `y0`. Stops on a section event, escape past the
/// escape radius (finite-time blow-up is normal for these quadratic fields),
/// convergence into the basin of a known critical point, or the time cap.
pub fn integrate(
    family: &GeneratingFamily,
    x: ParameterPoint,
    y0: PhasePoint,
    direction: Direction,
    controls: &FlowControls,
) -> Result<Trajectory, FlowError> {
    let sgn = direction.sign();
    let rhs = move |y: [f64; 2]| -> [f64; 2] {
        let f = family.eval_field(x, PhasePoint::new(y[0], y[1]));
        [sgn * f.v1, sgn * f.v2]
    };
    let solver = Dopri5::new(rhs, controls.abs_tol, controls.rel_tol);

    let mut tau = 0.0;
    let mut y = y0.coords();
    let mut k1 = (solver.f)(y);
    let mut h = solver.initial_step(y).min(controls.max_time);
    let mut samples = vec![(0.0, y0)];
    let mut segments: Vec<DenseStep> = Vec::new();
    let mut seed_left = false;

    let finish = |samples: Vec<(f64, PhasePoint)>, segments: Vec<DenseStep>, term: Termination| {
        Ok(Trajectory {
            samples,
            termination: term,
            direction,
            segments,
        })
    };

    for _ in 0..controls.max_steps {
        if tau + h > controls.max_time {
            h = controls.max_time - tau;
            if h <= 0.0 {
                return finish(samples, segments, Termination::MaxTime);
            }
        }
        if !h.is_finite() || h < 1e-14 * (1.0 + tau) {
            return Err(FlowError::StepUnderflow { t: sgn * tau, h });
        }
        match solver.try_step(tau, y, k1, h) {
            StepOutcome::Rejected { h_next } => {
                h = h_next;
            }
            StepOutcome::Accepted { step, h_next } => {
                // section crossing has priority: localize on dense output
                if let Some(section) = &controls.section {
                    if let Some((theta, yc)) = first_section_crossing(section, &step) {
                        let t_hit = sgn * (step.t0 + theta * step.h);
                        let tc = section.tangent_coord(yc);
                        let yc = PhasePoint::new(yc[0], yc[1]);
                        let mut samples = samples;
                        samples.push((t_hit, yc));
                        let mut segments = segments;
                        segments.push(step);
                        let term = if tc.abs() <= section.half_width {
                            Termination::SectionHit {
                                t: t_hit,
                                y: yc,
                                tangent_coord: tc,
            }
                        } else {
                            Termination::SectionMissed {
                                t: t_hit,
                                y: yc,
                                tangent_coord: tc,
                            }
                        };
                        return finish(samples, segments, term);
                    }
                }
                tau = step.t0 + step.h;
                y = step.y1;
                k1 = step.k_end;
                h = h_next;
                let yp = PhasePoint::new(y[0], y[1]);
                samples.push((sgn * tau, yp));
                segments.push(step);

                if norm(y) > controls.escape_radius {
                    return finish(
                        samples,
                        segments,
                        Termination::Escaped { t: sgn * tau, y: yp },
                    );
                }
                // don't test convergence until the seed's own neighborhood
                // has been left
                if let Some(ex) = controls.exclude {
                    if !seed_left && yp.dist(ex) > 10.0 * controls.convergence_radius {
                        seed_left = true;
                    }
                }
                let fnorm = family.eval_field(x, yp).norm();
                if fnorm < controls.field_tol {
                    for cp in &controls.critical_points {
                        if let Some(ex) = controls.exclude {
                            if !seed_left && cp.y.dist(ex) < controls.convergence_radius {
                                continue;
                            }
                        }
                        if yp.dist(cp.y) < controls.convergence_radius {
                            return finish(
                                samples,
                                segments,
                                Termination::ConvergedToCriticalPoint {
                                    t: sgn * tau,
                                    label: cp.label,
                                    y: yp,
                                },
                            );
                        }
                    }
                }
                if tau >= controls.max_time {
                    return finish(samples, segments, Termination::MaxTime);
                }
            }
        }
    }
    finish(samples, segments, Termination::MaxTime)
}

/// First crossing of the section line within an accepted step, localized by
/// bisection on the dense output. Scans a few sub-intervals so that a
/// double crossing within one step is still seen.
fn first_section_crossing(section: &Section, step: &DenseStep) -> Option<(f64, [f64; 2])> {
    const SCAN: usize = 8;
    let g = |theta: f64| section.normal_coord(step.eval(theta));
    let mut th_prev = 0.0;
    let mut g_prev = g(0.0);
    for i in 1..=SCAN {
        let th = i as f64 / SCAN as f64;
        let gi = g(th);
        if g_prev == 0.0 {
            return Some((th_prev, step.eval(th_prev)));
        }
        if g_prev * gi < 0.0 {
            let (mut lo, mut hi) = (th_prev, th);
            let g_lo = g_prev;
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if g_lo * g(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo < 1e-15 {
                    break;
                }
            }
            let th_hit = 0.5 * (lo + hi);
            return Some((th_hit, step.eval(th_hit)));
        }
        th_prev = th;
        g_prev = gi;
    }
    None
}

/// Follow one invariant-manifold branch of a saddle: seed at
/// `saddle + offset_sign * delta * e` along the relevant eigenvector, then
/// integrate forward (unstable) or backward (stable).
///
/// `offset_sign` is relative to the canonical eigenvector orientation.
pub fn saddle_manifold(
    family: &GeneratingFamily,
    x: ParameterPoint,
    saddle: &CriticalPoint,
    kind: ManifoldKind,
    offset_sign: f64,
    delta: f64,
    controls: &FlowControls,
) -> Result<Trajectory, FlowError> {
    if saddle.class != PointClass::Saddle {
        return Err(FlowError::DegenerateInput(format!(
            "manifolds are seeded at saddles; got a {} at ({:.6}, {:.6})",
            saddle.class, saddle.y.y1, saddle.y.y2
        )));
    }
    let (e, direction) = match kind {
        ManifoldKind::Unstable => (canonical(saddle.unstable_direction()), Direction::Forward),
        ManifoldKind::Stable => (canonical(saddle.stable_direction()), Direction::Backward),
    };
    let seed = PhasePoint::new(
        saddle.y.y1 + offset_sign * delta * e[0],
        saddle.y.y2 + offset_sign * delta * e[1],
    );
    let mut controls = controls.clone();
    controls.exclude = Some(saddle.y);
    integrate(family, x, seed, direction, &controls)
}

/// Canonical eigenvector orientation: first nonzero component positive.
fn canonical(e: [f64; 2]) -> [f64; 2] {
    if e[0] < 0.0 || (e[0] == 0.0 && e[1] < 0.0) {
        scale(e, -1.0)
    } else {
        e
    }
}

/// Seed offset per the design rule: 1e-6 times the saddle-pair distance,
/// clamped to [1e-9, 1e-4].
pub fn seed_delta(pair_distance: f64) -> f64 {
    (1e-6 * pair_distance).clamp(1e-9, 1e-4)
}

/// Evaluate the splitting function for the ordered saddle pair `(si, sj)`.
///
/// Branch signs are facing-relative: `Plus` selects the branch whose seed
/// offset has positive inner product with the direction from `si` to `sj`
/// (for the unstable branch of `si`) or from `sj` to `si` (for the stable
/// branch of `sj`).
pub fn splitting(
    family: &GeneratingFamily,
    x: ParameterPoint,
    si: &CriticalPoint,
    sj: &CriticalPoint,
    section: Option<Section>,
    branches: (BranchSign, BranchSign),
    controls: &FlowControls,
) -> Result<SplittingSample, FlowError> {
    for s in [si, sj] {
        if s.class != PointClass::Saddle {
            return Err(FlowError::DegenerateInput(format!(
                "splitting needs two saddles; {} is a {}",
                s.label, s.class
            )));
        }
    }
    let d = sub(sj.y.coords(), si.y.coords());
    let dist = norm(d);
    if dist == 0.0 {
        return Err(FlowError::DegenerateInput(
            "saddle pair has merged".into(),
        ));
    }
    let dhat = scale(d, 1.0 / dist);
    let section = section.unwrap_or_else(|| Section::between(si.y, sj.y));
    let delta = seed_delta(dist);

    let facing_sign = |e: [f64; 2], toward: [f64; 2]| -> f64 {
        let c = dot(e, toward);
        if c.abs() > 1e-12 {
            c.signum()
        } else {
            // degenerate facing: fall back to the section tangent
            let ct = dot(e, section.tangent);
            if ct >= 0.0 {
                1.0
            } else {
                -1.0
            }
        }
    };

    let mut leg_controls = controls.clone();
    leg_controls.section = Some(section);
    leg_controls.critical_points = vec![*si, *sj];

    let su = branches.0.signum() * facing_sign(canonical(si.unstable_direction()), dhat);
    let h_traj = saddle_manifold(
        family,
        x,
        si,
        ManifoldKind::Unstable,
        su,
        delta,
        &leg_controls,
    )?;
    let h = match h_traj.termination {
        Termination::SectionHit { tangent_coord, .. } => tangent_coord,
        term => {
            return Err(FlowError::NoCrossing {
                kind: ManifoldKind::Unstable,
                termination: term,
            })
        }
    };

    let ss = branches.1.signum() * facing_sign(canonical(sj.stable_direction()), scale(dhat, -1.0));
    let k_traj = saddle_manifold(
        family,
        x,
        sj,
        ManifoldKind::Stable,
        ss,
        delta,
        &leg_controls,
    )?;
    let k = match k_traj.termination {
        Termination::SectionHit { tangent_coord, .. } => tangent_coord,
        term => {
            return Err(FlowError::NoCrossing {
                kind: ManifoldKind::Stable,
                termination: term,
            })
        }
    };

    Ok(SplittingSample {
        x,
        pair: (si.label, sj.label),
        h,
        k,
        psi: h - k,
        branches,
    })
}

/// Node of a phase-portrait graph.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PortraitNode {
    pub label: Label,
    pub class: PointClass,
    pub y: PhasePoint,
    pub eigenvalues: [f64; 2],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    NodeToSaddle,
    SaddleToSaddle,
}

/// Directed gradient-line edge; saddle-to-saddle edges carry the separatrix
/// pair identifier and the measured splitting.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PortraitEdge {
    pub kind: EdgeKind,
    pub from: usize,
    pub to: usize,
    pub branches: Option<(BranchSign, BranchSign)>,
    pub psi: Option<f64>,
    /// Sampled polyline of the underlying gradient line, for rendering.
    pub samples: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PhasePortraitGraph {
    pub x: ParameterPoint,
    pub nodes: Vec<PortraitNode>,
    pub edges: Vec<PortraitEdge>,
}

impl PhasePortraitGraph {
    /// No two opposite-direction saddle-to-saddle edges may join the same
    /// saddle pair: a gradient flow cannot carry both connections at once.
    pub fn has_opposite_saddle_edges(&self) -> bool {
        let ss: Vec<&PortraitEdge> = self
            .edges
            .iter()
            .filter(|e| e.kind == EdgeKind::SaddleToSaddle)
            .collect();
        for (i, a) in ss.iter().enumerate() {
            for b in ss.iter().skip(i + 1) {
                if a.from == b.to && a.to == b.from {
                    return true;
                }
            }
        }
        false
    }
}

fn decimate(samples: &[(f64, PhasePoint)], keep: usize) -> Vec<[f64; 2]> {
    if samples.is_empty() {
        return Vec::new();
    }
    let stride = (samples.len() / keep.max(1)).max(1);
    let mut out: Vec<[f64; 2]> = samples
        .iter()
        .step_by(stride)
        .map(|(_, y)| y.coords())
        .collect();
    let last = samples.last().unwrap().1.coords();
    if out.last() != Some(&last) {
        out.push(last);
    }
    out
}

/// Build the phase-portrait connection graph at `x` from labeled critical
/// points: node-to-saddle edges from backward convergence of stable
/// branches, saddle-to-saddle edges from near-zero splitting values.
pub fn connection_graph(
    family: &GeneratingFamily,
    x: ParameterPoint,
    points: &[CriticalPoint],
    controls: &FlowControls,
) -> Result<PhasePortraitGraph, FlowError> {
    let nodes: Vec<PortraitNode> = points
        .iter()
        .map(|p| PortraitNode {
            label: p.label,
            class: p.class,
            y: p.y,
            eigenvalues: p.eigenvalues,
        })
        .collect();
    let mut edges: Vec<PortraitEdge> = Vec::new();

    let saddle_idx: Vec<usize> = points
        .iter()
        .enumerate()
        .filter(|(_, p)| p.class == PointClass::Saddle)
        .map(|(i, _)| i)
        .collect();

    // node -> saddle gradient lines: a stable branch of the saddle converges
    // backward to the node
    for &is in &saddle_idx {
        let s = &points[is];
        let mut leg_controls = controls.clone();
        leg_controls.section = None;
        leg_controls.critical_points = points.to_vec();
        let scale_d = points
            .iter()
            .filter(|p| p.y.dist(s.y) > 0.0)
            .map(|p| p.y.dist(s.y))
            .fold(f64::INFINITY, f64::min);
        let delta = seed_delta(if scale_d.is_finite() { scale_d } else { 1.0 });
        let mut seen: Vec<usize> = Vec::new();
        for sign in [1.0, -1.0] {
            let traj = saddle_manifold(
                family,
                x,
                s,
                ManifoldKind::Stable,
                sign,
                delta,
                &leg_controls,
            )?;
            if let Termination::ConvergedToCriticalPoint { y, .. } = traj.termination {
                if let Some((inode, p)) = points
                    .iter()
                    .enumerate()
                    .find(|(_, p)| p.y.dist(y) < 10.0 * controls.convergence_radius)
                {
                    if matches!(p.class, PointClass::UnstableNode) && !seen.contains(&inode) {
                        seen.push(inode);
                        let mut samples = decimate(&traj.samples, 256);
                        samples.reverse();
                        edges.push(PortraitEdge {
                            kind: EdgeKind::NodeToSaddle,
                            from: inode,
                            to: is,
                            branches: None,
                            psi: None,
                            samples,
                        });
                    }
                }
            }
        }
    }

    // saddle -> saddle separatrices via the splitting function
    for &i in &saddle_idx {
        for &j in &saddle_idx {
            if i == j {
                continue;
            }
            let (si, sj) = (&points[i], &points[j]);
            let dist = si.y.dist(sj.y);
            for bu in BranchSign::BOTH {
                for bs in BranchSign::BOTH {
                    match splitting(family, x, si, sj, None, (bu, bs), controls) {
                        Ok(sample) if sample.psi.abs() < CONNECTION_TOL * dist => {
                            let traj = connection_polyline(family, x, si, sj, (bu, bs), controls);
                            edges.push(PortraitEdge {
                                kind: EdgeKind::SaddleToSaddle,
                                from: i,
                                to: j,
                                branches: Some((bu, bs)),
                                psi: Some(sample.psi),
                                samples: traj,
                            });
                        }
                        _ => {}
                    }
                }
            }
        }
    }

    Ok(PhasePortraitGraph { x, nodes, edges })
}

/// Polyline of a detected connection: unstable leg to the section plus the
/// reversed stable leg.
fn connection_polyline(
    family: &GeneratingFamily,
    x: ParameterPoint,
    si: &CriticalPoint,
    sj: &CriticalPoint,
    branches: (BranchSign, BranchSign),
    controls: &FlowControls,
) -> Vec<[f64; 2]> {
    let d = sub(sj.y.coords(), si.y.coords());
    let dist = norm(d);
    let dhat = scale(d, 1.0 / dist);
    let section = Section::between(si.y, sj.y);
    let delta = seed_delta(dist);
    let mut leg_controls = controls.clone();
    leg_controls.section = Some(section);
    leg_controls.critical_points = vec![*si, *sj];
    let facing = |e: [f64; 2], toward: [f64; 2]| if dot(e, toward) >= 0.0 { 1.0 } else { -1.0 };
    let su = branches.0.signum() * facing(canonical(si.unstable_direction()), dhat);
    let ss = branches.1.signum() * facing(canonical(sj.stable_direction()), scale(dhat, -1.0));
    let mut pts: Vec<[f64; 2]> = vec![si.y.coords()];
    if let Ok(t) = saddle_manifold(family, x, si, ManifoldKind::Unstable, su, delta, &leg_controls)
    {
        pts.extend(decimate(&t.samples, 192));
    }
    if let Ok(t) = saddle_manifold(family, x, sj, ManifoldKind::Stable, ss, delta, &leg_controls) {
        let mut back = decimate(&t.samples, 192);
        back.reverse();
        pts.extend(back);
    }
    pts.push(sj.y.coords());
    pts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::critical_points::{find_critical_points, find_labeled, labeled_points, PhaseWindow};

    const W: PhaseWindow = PhaseWindow {
        y1_min: -4.0,
        y1_max: 4.0,
        y2_min: -4.0,
        y2_max: 4.0,
    };

    #[test]
    fn fold_tanh_oracle() {
        // dy1 = y1^2 - 1 from y1(0) = 0 solves to y1(t) = -tanh t
        let fam = GeneratingFamily::Fold;
        let x = ParameterPoint::new(1.0, 0.0);
        let mut controls = FlowControls::default();
        controls.max_time = 1.0;
        let traj = integrate(&fam, x, PhasePoint::new(0.0, 0.0), Direction::Forward, &controls)
            .unwrap();
        assert_eq!(traj.termination, Termination::MaxTime);
        for k in 0..=20 {
            let t = k as f64 / 20.0;
            let y = traj.eval(t).unwrap();
            assert!(
                (y.y1 + t.tanh()).abs() < 1e-8,
                "t={t}: y1={}, want {}",
                y.y1,
                -t.tanh()
            );
            assert_eq!(y.y2, 0.0);
        }
        let end = traj.eval(1.0).unwrap();
        assert!((end.y1 + 0.7615941559557649).abs() < 1e-8);
    }

    #[test]
    fn fold_invariant_horizontal_line() {
        let fam = GeneratingFamily::Fold;
        let x = ParameterPoint::new(0.3, -1.2);
        let mut controls = FlowControls::default();
        controls.max_time = 3.0;
        let traj = integrate(
            &fam,
            x,
            PhasePoint::new(0.0, -1.2),
            Direction::Forward,
            &controls,
        )
        .unwrap();
        for (_, y) in &traj.samples {
            assert_eq!(y.y2, -1.2);
        }
    }

    #[test]
    fn fold_stable_branch_converges_backward_to_node() {
        let fam = GeneratingFamily::Fold;
        let x = ParameterPoint::new(1.0, 0.0);
        let pts = find_critical_points(&fam, x, &W).unwrap();
        let saddle = find_labeled(&pts, Label::S1).unwrap();
        let controls = FlowControls::default().with_critical_points(&pts);
        // the +canonical stable branch points toward the node
        let traj = saddle_manifold(
            &fam,
            x,
            saddle,
            ManifoldKind::Stable,
            1.0,
            seed_delta(2.0),
            &controls,
        )
        .unwrap();
        match traj.termination {
            Termination::ConvergedToCriticalPoint { label, y, .. } => {
                assert_eq!(label, Label::N);
                assert!(y.dist(PhasePoint::new(1.0, 0.0)) < 1e-4);
            }
            other => panic!("expected node convergence, got {other:?}"),
        }
        // the whole gradient line stays on the segment y2 = 0
        for (_, y) in &traj.samples {
            assert!(y.y2.abs() < 1e-12);
        }
        // degenerate input is rejected
        let x0 = ParameterPoint::new(0.0, 0.0);
        let pts0 = find_critical_points(&fam, x0, &W).unwrap();
        assert!(matches!(
            saddle_manifold(
                &fam,
                x0,
                &pts0[0],
                ManifoldKind::Stable,
                1.0,
                1e-6,
                &controls
            ),
            Err(FlowError::DegenerateInput(_))
        ));
    }

    #[test]
    fn umbilic_axis_connection_and_splitting_zero() {
        let fam = GeneratingFamily::EllipticUmbilic;
        for r in [0.5, 1.0, 2.0] {
            let x = ParameterPoint::new(r, 0.0);
            let pts = find_critical_points(&fam, x, &W).unwrap();
            let s1 = *find_labeled(&pts, Label::S1).unwrap();
            let s2 = *find_labeled(&pts, Label::S2).unwrap();
            let controls = FlowControls::default();
            let sample = splitting(
                &fam,
                x,
                &s1,
                &s2,
                None,
                (BranchSign::Plus, BranchSign::Plus),
                &controls,
            )
            .unwrap();
            assert!(
                sample.psi.abs() < 1e-8,
                "r={r}: psi = {} should vanish on the axis connection",
                sample.psi
            );
            assert_eq!(sample.psi, sample.h - sample.k);
        }
    }

    #[test]
    fn umbilic_unstable_branch_runs_along_axis_to_partner() {
        let fam = GeneratingFamily::EllipticUmbilic;
        let x = ParameterPoint::new(1.0, 0.0);
        let pts = find_critical_points(&fam, x, &W).unwrap();
        let s1 = find_labeled(&pts, Label::S1).unwrap();
        let controls = FlowControls::default().with_critical_points(&pts);
        // facing branch = negative canonical sign here (e_u = +x, partner at -x)
        let traj = saddle_manifold(
            &fam,
            x,
            s1,
            ManifoldKind::Unstable,
            -1.0,
            seed_delta(2.0),
            &controls,
        )
        .unwrap();
        match traj.termination {
            Termination::ConvergedToCriticalPoint { label, y, .. } => {
                assert_eq!(label, Label::S2);
                assert!(y.dist(PhasePoint::new(-1.0, 0.0)) < 1e-4);
            }
            other => panic!("expected s2 convergence, got {other:?}"),
        }
        for (_, y) in &traj.samples {
            assert!(y.y2.abs() < 1e-12);
        }
    }

    #[test]
    fn umbilic_off_ray_splitting_is_nonzero() {
        let fam = GeneratingFamily::EllipticUmbilic;
        let controls = FlowControls::default();
        // within the window around the alpha = 0 ray, psi is defined and
        // bounded away from zero off the ray, with opposite signs across it
        let psi_at = |alpha: f64| -> f64 {
            let x = ParameterPoint::from_polar(1.0, alpha.rem_euclid(std::f64::consts::TAU));
            let pts = find_critical_points(&fam, x, &W).unwrap();
            let s1 = *find_labeled(&pts, Label::S1).unwrap();
            let s2 = *find_labeled(&pts, Label::S2).unwrap();
            // closed-form labels jump across the cut at alpha = 0: keep the
            // physically continued pair by ordering on the saddle position
            // (the connection source stays on the y1 > 0 side near the ray)
            let (a, b) = if s1.y.y1 >= s2.y.y1 { (s1, s2) } else { (s2, s1) };
            splitting(
                &fam,
                x,
                &a,
                &b,
                None,
                (BranchSign::Plus, BranchSign::Plus),
                &controls,
            )
            .unwrap()
            .psi
        };
        let plus = psi_at(0.35);
        let minus = psi_at(-0.35);
        assert!(plus > 1e-2, "psi(0.35) = {plus}");
        assert!(minus < -1e-2, "psi(-0.35) = {minus}");
        // at pi/3, exactly between rays, the facing manifolds of this pair
        // miss the section entirely: a gap, not a zero
        let x = ParameterPoint::from_polar(1.0, std::f64::consts::FRAC_PI_3);
        let pts = find_critical_points(&fam, x, &W).unwrap();
        let s1 = *find_labeled(&pts, Label::S1).unwrap();
        let s2 = *find_labeled(&pts, Label::S2).unwrap();
        for (si, sj) in [(&s1, &s2), (&s2, &s1)] {
            for bu in BranchSign::BOTH {
                for bs in BranchSign::BOTH {
                    if let Ok(s) = splitting(&fam, x, si, sj, None, (bu, bs), &controls) {
                        assert!(s.psi.abs() > 1e-3, "unexpected connection at pi/3: {s:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn perturbed_umbilic_axis_connection_matches_closed_form() {
        // x = (1, 0): the n -> s3 gradient line is
        // y1(t) = p q (1 - e^{(p-q)t}) / (q - p e^{(p-q)t}), y2 = 0
        let fam = GeneratingFamily::PerturbedUmbilic;
        let x = ParameterPoint::new(1.0, 0.0);
        let p = (-1.0 + 5.0_f64.sqrt()) / 2.0;
        let q = (-1.0 - 5.0_f64.sqrt()) / 2.0;
        let closed = |t: f64| {
            let e = ((p - q) * t).exp();
            p * q * (1.0 - e) / (q - p * e)
        };
        let mut controls = FlowControls::default();
        controls.max_time = 9.0;
        let pts = find_critical_points(&fam, x, &W).unwrap();
        controls.critical_points = pts.clone();
        for dir in [Direction::Forward, Direction::Backward] {
            let traj = integrate(&fam, x, PhasePoint::new(0.0, 0.0), dir, &controls).unwrap();
            let mut sup = 0.0f64;
            for (t, y) in &traj.samples {
                sup = sup.max((y.y1 - closed(*t)).abs());
                assert_eq!(y.y2, 0.0);
            }
            assert!(sup < 1e-6, "sup-norm error {sup} for {dir:?}");
        }
    }

    #[test]
    fn splitting_zero_on_perturbed_axis_pair() {
        let fam = GeneratingFamily::PerturbedUmbilic;
        let x = ParameterPoint::new(1.0, 0.0);
        let pts = labeled_points(&fam, x, &W).unwrap();
        let n = *find_labeled(&pts, Label::N).unwrap();
        let s3 = *find_labeled(&pts, Label::S3).unwrap();
        assert_eq!(n.class, PointClass::Saddle);
        let sample = splitting(
            &fam,
            x,
            &n,
            &s3,
            None,
            (BranchSign::Plus, BranchSign::Plus),
            &FlowControls::default(),
        )
        .unwrap();
        assert!(sample.psi.abs() < 1e-8, "psi = {}", sample.psi);
    }

    #[test]
    fn fold_missing_saddle_pair_has_no_splitting() {
        // only one saddle exists: there is no pair to measure
        let fam = GeneratingFamily::Fold;
        let x = ParameterPoint::new(1.0, 0.0);
        let pts = find_critical_points(&fam, x, &W).unwrap();
        let saddles: Vec<_> = pts
            .iter()
            .filter(|p| p.class == PointClass::Saddle)
            .collect();
        assert_eq!(saddles.len(), 1);
    }

    #[test]
    fn richardson_delta_robustness() {
        // halving the seed offset moves h and k by less than 1e-6
        let fam = GeneratingFamily::EllipticUmbilic;
        let x = ParameterPoint::from_polar(1.0, 0.35);
        let pts = find_critical_points(&fam, x, &W).unwrap();
        let s1 = *find_labeled(&pts, Label::S1).unwrap();
        let s2 = *find_labeled(&pts, Label::S2).unwrap();
        let controls = FlowControls::default();
        let section = Section::between(s1.y, s2.y);
        let dist = s1.y.dist(s2.y);
        let run = |delta: f64| -> (f64, f64) {
            let mut lc = controls.clone();
            lc.section = Some(section);
            lc.critical_points = vec![s1, s2];
            let dhat = unit(sub(s2.y.coords(), s1.y.coords()));
            let su = if dot(canonical(s1.unstable_direction()), dhat) >= 0.0 { 1.0 } else { -1.0 };
            let ht = saddle_manifold(&fam, x, &s1, ManifoldKind::Unstable, su, delta, &lc).unwrap();
            let ss = if dot(canonical(s2.stable_direction()), scale(dhat, -1.0)) >= 0.0 { 1.0 } else { -1.0 };
            let kt = saddle_manifold(&fam, x, &s2, ManifoldKind::Stable, ss, delta, &lc).unwrap();
            let h = match ht.termination {
                Termination::SectionHit { tangent_coord, .. } => tangent_coord,
                t => panic!("{t:?}"),
            };
            let k = match kt.termination {
                Termination::SectionHit { tangent_coord, .. } => tangent_coord,
                t => panic!("{t:?}"),
            };
            (h, k)
        };
        let d0 = seed_delta(dist);
        let (h1, k1) = run(d0);
        let (h2, k2) = run(d0 / 2.0);
        assert!((h1 - h2).abs() < 1e-6, "h moved {}", (h1 - h2).abs());
        assert!((k1 - k2).abs() < 1e-6, "k moved {}", (k1 - k2).abs());
    }

    #[test]
    fn umbilic_scaling_covariance_of_trajectories() {
        // (1/l) y(t/l) solves the flow at x / l^2
        let fam = GeneratingFamily::EllipticUmbilic;
        let lambda = 1.7;
        let x = ParameterPoint::new(0.4, -0.8);
        let xs = ParameterPoint::new(x.x1 / (lambda * lambda), x.x2 / (lambda * lambda));
        let y0 = PhasePoint::new(0.3, 0.5);
        let ys = PhasePoint::new(y0.y1 / lambda, y0.y2 / lambda);
        let mut c1 = FlowControls::default();
        c1.max_time = 0.4;
        let t1 = integrate(&fam, x, y0, Direction::Forward, &c1).unwrap();
        let mut c2 = FlowControls::default();
        c2.max_time = 0.4 * lambda;
        let t2 = integrate(&fam, xs, ys, Direction::Forward, &c2).unwrap();
        for k in 0..=16 {
            let t = 0.4 * k as f64 / 16.0;
            let a = t1.eval(t).unwrap();
            let b = t2.eval(t * lambda).unwrap();
            assert!(
                (a.y1 - lambda * b.y1).abs() < 1e-6 && (a.y2 - lambda * b.y2).abs() < 1e-6,
                "t={t}: {a:?} vs scaled {b:?}"
            );
        }
    }

    #[test]
    fn umbilic_antipodal_trajectory_symmetry_and_crossings() {
        // the antipodal image of a trajectory is a trajectory (time
        // reversed); consequently k_+ = -h_+ at every x for the pair (1,2)
        let fam = GeneratingFamily::EllipticUmbilic;
        for k in 0..8 {
            let alpha = 0.1 + k as f64 * 0.7;
            let x = ParameterPoint::from_polar(1.1, alpha % std::f64::consts::TAU);
            let pts = find_critical_points(&fam, x, &W).unwrap();
            let s1 = *find_labeled(&pts, Label::S1).unwrap();
            let s2 = *find_labeled(&pts, Label::S2).unwrap();
            if let Ok(s) = splitting(
                &fam,
                x,
                &s1,
                &s2,
                None,
                (BranchSign::Plus, BranchSign::Plus),
                &FlowControls::default(),
            ) {
                assert!(
                    (s.k + s.h).abs() < 1e-7,
                    "alpha={alpha}: h={}, k={} should be opposite",
                    s.h,
                    s.k
                );
            }
        }
    }

    #[test]
    fn connection_graph_fold() {
        let fam = GeneratingFamily::Fold;
        let x = ParameterPoint::new(1.0, 0.0);
        let pts = labeled_points(&fam, x, &W).unwrap();
        let g = connection_graph(&fam, x, &pts, &FlowControls::default()).unwrap();
        assert_eq!(g.nodes.len(), 2);
        assert_eq!(g.edges.len(), 1);
        assert_eq!(g.edges[0].kind, EdgeKind::NodeToSaddle);
        assert_eq!(g.nodes[g.edges[0].from].label, Label::N);
        assert_eq!(g.nodes[g.edges[0].to].label, Label::S1);
        assert!(!g.has_opposite_saddle_edges());
    }

    #[test]
    fn connection_graph_umbilic_single_separatrix() {
        let fam = GeneratingFamily::EllipticUmbilic;
        let x = ParameterPoint::new(1.0, 0.0);
        let pts = labeled_points(&fam, x, &W).unwrap();
        let g = connection_graph(&fam, x, &pts, &FlowControls::default()).unwrap();
        let ss: Vec<_> = g
            .edges
            .iter()
            .filter(|e| e.kind == EdgeKind::SaddleToSaddle)
            .collect();
        assert_eq!(ss.len(), 1, "expected exactly one separatrix: {ss:?}");
        assert_eq!(g.nodes[ss[0].from].label, Label::S1);
        assert_eq!(g.nodes[ss[0].to].label, Label::S2);
        assert!(!g.has_opposite_saddle_edges());
    }

    #[test]
    fn connection_graph_perturbed_origin() {
        let fam = GeneratingFamily::PerturbedUmbilic;
        let x = ParameterPoint::new(0.0, 0.0);
        let pts = labeled_points(&fam, x, &W).unwrap();
        let g = connection_graph(&fam, x, &pts, &FlowControls::default()).unwrap();
        assert_eq!(g.nodes.len(), 4);
        let ns: Vec<_> = g
            .edges
            .iter()
            .filter(|e| e.kind == EdgeKind::NodeToSaddle)
            .collect();
        assert_eq!(ns.len(), 3, "all three gamma_ns_i must be present");
        assert_eq!(
            g.edges
                .iter()
                .filter(|e| e.kind == EdgeKind::SaddleToSaddle)
                .count(),
            0
        );
    }

    #[test]
    fn step_underflow_reported() {
        let fam = GeneratingFamily::EllipticUmbilic;
        let mut controls = FlowControls::default();
        controls.abs_tol = 5e-324;
        controls.rel_tol = 1e-300;
        let r = integrate(
            &fam,
            ParameterPoint::new(0.3, 0.2),
            PhasePoint::new(1.0, 1.0),
            Direction::Forward,
            &controls,
        );
        assert!(matches!(r, Err(FlowError::StepUnderflow { .. })));
    }
}

//! Zeros of the splitting function and their continuation into bifurcation
//! branches: circle scans bracket psi sign changes, pseudo-arclength
//! continuation follows each zero curve, and the assembled diagram carries
//! endpoint classifications against the caustic plus branch intersections.

use crate::critical_points::{
    find_labeled, labeled_points, Caustic, CausticFeature, CriticalPoint, CriticalPointError,
    Label, Labeling, PhaseWindow, PointClass,
};
use crate::field_models::{GeneratingFamily, ParameterPoint};
use crate::flow_engine::{
    splitting, BranchSign, FlowControls, FlowError, SplittingSample,
};
use crate::linalg::{dot, norm, rot90, scale, segment_intersection, unit};
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use thiserror::Error;

/// Rectangular region of parameter space under analysis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionBox {
    pub x1_min: f64,
    pub x1_max: f64,
    pub x2_min: f64,
    pub x2_max: f64,
}

impl RegionBox {
    pub fn new(x1_min: f64, x1_max: f64, x2_min: f64, x2_max: f64) -> Self {
        Self {
            x1_min,
            x1_max,
            x2_min,
            x2_max,
        }
    }

    pub fn square(half: f64) -> Self {
        Self::new(-half, half, -half, half)
    }

    pub fn diagonal(&self) -> f64 {
        (self.x1_max - self.x1_min).hypot(self.x2_max - self.x2_min)
    }

    pub fn contains(&self, x: ParameterPoint) -> bool {
        x.x1 >= self.x1_min && x.x1 <= self.x1_max && x.x2 >= self.x2_min && x.x2 <= self.x2_max
    }

    pub fn min_extent(&self) -> f64 {
        (self.x1_max - self.x1_min).min(self.x2_max - self.x2_min)
    }
}

impl Default for RegionBox {
    fn default() -> Self {
        Self::square(2.0)
    }
}

#[derive(Clone, Debug)]
pub struct TracerControls {
    pub flow: FlowControls,
    pub window: PhaseWindow,
    /// Maximum parameter-space step for one label-continuation move.
    pub label_step: f64,
    /// Corrector target for |psi| on branch points.
    pub corrector_tol: f64,
    /// Samples with |psi| below this count as zeros outright.
    pub psi_zero_tol: f64,
    /// Continuation step as a fraction of the region diagonal.
    pub step_factor: f64,
    /// Finite-difference step for psi gradients, fraction of region diagonal.
    pub fd_factor: f64,
    /// Boundary-circle scan density for locus seeding.
    pub circle_n: usize,
    /// Interior seeding grid is grid_n x grid_n.
    pub grid_n: usize,
    /// Scan all four (+-, +-) separatrix branch combinations.
    pub all_branch_combos: bool,
    pub max_branch_points: usize,
    /// Marching step for the caustic trace, phase-plane units.
    pub caustic_step: f64,
}

impl Default for TracerControls {
    fn default() -> Self {
        Self {
            flow: FlowControls::default(),
            window: PhaseWindow::square(6.0),
            label_step: 0.05,
            corrector_tol: 1e-9,
            psi_zero_tol: 1e-8,
            step_factor: 0.01,
            fd_factor: 1e-5,
            circle_n: 720,
            grid_n: 41,
            all_branch_combos: true,
            max_branch_points: 4000,
            caustic_step: 0.02,
        }
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    CriticalPoints(#[from] CriticalPointError),
    #[error("lost the zero at ({x1}, {x2}): {message}")]
    LostZero { x1: f64, x2: f64, message: String },
}

/// A labeled walk through parameter space: keeps the current critical-point
/// configuration and answers splitting-function queries at nearby points.
#[derive(Clone)]
pub struct PsiPath<'a> {
    family: &'a GeneratingFamily,
    controls: &'a TracerControls,
    caustic: Option<&'a Caustic>,
    pub x: ParameterPoint,
    pub points: Labeling,
}

impl<'a> PsiPath<'a> {
    pub fn start(
        family: &'a GeneratingFamily,
        x: ParameterPoint,
        controls: &'a TracerControls,
        caustic: Option<&'a Caustic>,
    ) -> Result<Self, TraceError> {
        let points = labeled_points(family, x, &controls.window)?;
        Ok(Self {
            family,
            controls,
            caustic,
            x,
            points,
        })
    }

    pub fn start_with(
        family: &'a GeneratingFamily,
        x: ParameterPoint,
        points: Labeling,
        controls: &'a TracerControls,
        caustic: Option<&'a Caustic>,
    ) -> Self {
        Self {
            family,
            controls,
            caustic,
            x,
            points,
        }
    }

    /// Labeled configuration at `x`, continued from the anchor without
    /// committing it.
    pub fn labels_at(&self, x: ParameterPoint) -> Result<Labeling, TraceError> {
        let mut labeled = crate::critical_points::continue_labels(
            self.family,
            self.x,
            &self.points,
            x,
            self.controls.label_step,
            &self.controls.window,
        )?;
        self.relabel_newborns(x, &mut labeled);
        Ok(labeled)
    }

    /// Commit the anchor to `x`.
    pub fn advance(&mut self, x: ParameterPoint) -> Result<(), TraceError> {
        self.points = self.labels_at(x)?;
        self.x = x;
        Ok(())
    }

    /// Points appearing when a caustic side is crossed inward are a node
    /// plus the saddle of that side; restore their identities.
    fn relabel_newborns(&self, x: ParameterPoint, labeled: &mut Labeling) {
        let Some(caustic) = self.caustic else { return };
        if labeled.iter().all(|p| p.label != Label::Unlabeled) {
            return;
        }
        let side_label = caustic.nearest_side(x).and_then(|(s, _)| s.label);
        let have_n = labeled.iter().any(|p| p.label == Label::N);
        let present: Vec<Label> = labeled.iter().map(|p| p.label).collect();
        for p in labeled.iter_mut() {
            if p.label != Label::Unlabeled {
                continue;
            }
            match p.class {
                PointClass::UnstableNode | PointClass::StableNode if !have_n => {
                    p.label = Label::N;
                }
                PointClass::Saddle => {
                    if let Some(i) = side_label {
                        let lab = Label::saddle(i);
                        if !present.contains(&lab) {
                            p.label = lab;
                        }
                    }
                }
                _ => {}
            }
        }
    }

    /// Splitting sample for the ordered labeled pair at `x` (continued from
    /// the anchor, not committed).
    pub fn eval(
        &self,
        x: ParameterPoint,
        pair: (Label, Label),
        branches: (BranchSign, BranchSign),
    ) -> Result<SplittingSample, TraceError> {
        let labeled = self.labels_at(x)?;
        let si = resolve_saddle(&labeled, pair.0)?;
        let sj = resolve_saddle(&labeled, pair.1)?;
        let mut sample = splitting(self.family, x, &si, &sj, None, branches, &self.controls.flow)?;
        sample.pair = pair;
        Ok(sample)
    }

    /// Distance between the pair's saddles at the anchor.
    pub fn pair_distance(&self, pair: (Label, Label)) -> Option<f64> {
        let a = find_labeled(&self.points, pair.0)?;
        let b = find_labeled(&self.points, pair.1)?;
        Some(a.y.dist(b.y))
    }
}



fn resolve_saddle(labeled: &[CriticalPoint], label: Label) -> Result<CriticalPoint, TraceError> {
    let p = find_labeled(labeled, label).ok_or(FlowError::MissingSaddle(label))?;
    if p.class != PointClass::Saddle {
        return Err(FlowError::DegenerateInput(format!(
            "{label} is a {} here, not a saddle",
            p.class
        ))
        .into());
    }
    Ok(*p)
}

/// Which saddle pair a scan should follow.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PairSelector {
    /// Track the two saddles present (valid where exactly two exist).
    Auto,
    /// A specific labeled pair; both orientations are scanned.
    Labeled(Label, Label),
}

/// One psi series along the circle: fixed orientation and branch pair.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScanSeries {
    pub pair: (Label, Label),
    pub branches: (BranchSign, BranchSign),
    /// One value per sample angle; `None` marks a gap (no section crossing).
    pub values: Vec<Option<f64>>,
}

/// A refined zero of psi on the circle.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScanZero {
    pub alpha: f64,
    pub pair: (Label, Label),
    pub branches: (BranchSign, BranchSign),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CircleScan {
    pub r: f64,
    pub alphas: Vec<f64>,
    pub series: Vec<ScanSeries>,
    pub zeros: Vec<ScanZero>,
    #[serde(skip)]
    pub seeds: Vec<BranchSeed>,
}

/// A continuation seed: a parameter point with psi ~ 0 for a concrete pair,
/// carrying the labeling that defines the pair there.
#[derive(Clone, Debug)]
pub struct BranchSeed {
    pub x: ParameterPoint,
    pub pair: (Label, Label),
    pub branches: (BranchSign, BranchSign),
    pub labeling: Labeling,
}

/// Uniformly sample psi over a circle of radius `r` and refine every sign
/// change by bisection (to 1e-6 rad). Gap samples are recorded, not errors;
/// zeros from all scanned series are merged by angle.
pub fn scan_circle(
    family: &GeneratingFamily,
    r: f64,
    n: usize,
    pair: PairSelector,
    controls: &TracerControls,
    caustic: Option<&Caustic>,
) -> Result<CircleScan, TraceError> {
    assert!(n >= 3, "need at least 3 samples");
    assert!(r > 0.0);
    let x0 = ParameterPoint::from_polar(r, 0.0);
    let mut path = PsiPath::start(family, x0, controls, caustic)?;

    // resolve the tracked pair, synthesizing labels if the configuration
    // came back unlabeled
    let mut base_pair: Option<(Label, Label)> = match pair {
        PairSelector::Labeled(i, j) => Some((i, j)),
        PairSelector::Auto => None,
    };
    if base_pair.is_none() {
        let mut saddles: Vec<&CriticalPoint> = path
            .points
            .iter()
            .filter(|p| p.class == PointClass::Saddle)
            .collect();
        saddles.sort_by(|a, b| {
            (a.y.y1, a.y.y2)
                .partial_cmp(&(b.y.y1, b.y.y2))
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        if saddles.len() == 2 {
            let mut labels: Vec<Label> = saddles.iter().map(|p| p.label).collect();
            if labels.iter().any(|l| *l == Label::Unlabeled) {
                // synthesize stable identities for the tracked pair
                let synth = [Label::S1, Label::S2];
                let mut k = 0;
                let positions: Vec<_> = saddles.iter().map(|p| p.y).collect();
                for (idx, pos) in positions.iter().enumerate() {
                    if labels[idx] == Label::Unlabeled {
                        while labels.contains(&synth[k]) {
                            k += 1;
                        }
                        labels[idx] = synth[k];
                        if let Some(p) = path.points.iter_mut().find(|p| p.y == *pos) {
                            p.label = labels[idx];
                        }
                    }
                }
            }
            base_pair = Some((labels[0], labels[1]));
        }
    }
    let orientations: Vec<(Label, Label)> = match base_pair {
        Some((i, j)) => vec![(i, j), (j, i)],
        None => Vec::new(),
    };
    let combos: Vec<(BranchSign, BranchSign)> = if controls.all_branch_combos {
        vec![
            (BranchSign::Plus, BranchSign::Plus),
            (BranchSign::Plus, BranchSign::Minus),
            (BranchSign::Minus, BranchSign::Plus),
            (BranchSign::Minus, BranchSign::Minus),
        ]
    } else {
        vec![(BranchSign::Plus, BranchSign::Plus)]
    };

    let alphas: Vec<f64> = (0..=n).map(|k| k as f64 * TAU / n as f64).collect();
    let mut series: Vec<ScanSeries> = orientations
        .iter()
        .flat_map(|&pair| {
            combos.iter().map(move |&branches| ScanSeries {
                pair,
                branches,
                values: Vec::with_capacity(n + 1),
            })
        })
        .collect();
    let mut labelings: Vec<Labeling> = Vec::with_capacity(n + 1);

    for &alpha in &alphas {
        let x = ParameterPoint::from_polar(r, alpha);
        if path.advance(x).is_err() {
            // keep going with the previous anchor; samples become gaps
        }
        labelings.push(path.points.clone());
        for s in series.iter_mut() {
            let v = path.eval(x, s.pair, s.branches).ok().map(|smp| smp.psi);
            s.values.push(v);
        }
    }

    // zero extraction
    let mut zeros: Vec<ScanZero> = Vec::new();
    let mut seeds: Vec<BranchSeed> = Vec::new();
    let ztol = controls.psi_zero_tol;
    for s in &series {
        for k in 0..n {
            let (va, vb) = (s.values[k], s.values[k + 1]);
            if let Some(a) = va {
                if a.abs() < ztol {
                    push_zero(
                        &mut zeros,
                        &mut seeds,
                        alphas[k],
                        s,
                        r,
                        &labelings[k],
                    );
                    continue;
                }
                if let Some(b) = vb {
                    if b.abs() >= ztol && a * b < 0.0 {
                        if let Some(alpha_zero) = bisect_zero(
                            family,
                            r,
                            alphas[k],
                            alphas[k + 1],
                            a,
                            s,
                            &labelings[k],
                            controls,
                            caustic,
                        ) {
                            push_zero(&mut zeros, &mut seeds, alpha_zero, s, r, &labelings[k]);
                        }
                    }
                }
            }
        }
        // the wrap sample at 2 pi counting as a zero maps back to 0
        if let Some(b) = s.values[n] {
            if b.abs() < ztol {
                push_zero(&mut zeros, &mut seeds, 0.0, s, r, &labelings[n]);
            }
        }
    }
    // merge zeros across series by angle
    let mut merged: Vec<ScanZero> = Vec::new();
    let mut merged_seeds: Vec<BranchSeed> = Vec::new();
    let mut order: Vec<usize> = (0..zeros.len()).collect();
    order.sort_by(|&i, &j| {
        zeros[i]
            .alpha
            .partial_cmp(&zeros[j].alpha)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    for idx in order {
        let z = &zeros[idx];
        let dup = merged.iter().any(|m| {
            let d = (m.alpha - z.alpha).abs();
            d.min(TAU - d) < 1e-5
        });
        if !dup {
            merged.push(z.clone());
            merged_seeds.push(seeds[idx].clone());
        }
    }

    Ok(CircleScan {
        r,
        alphas,
        series,
        zeros: merged,
        seeds: merged_seeds,
    })
}

fn push_zero(
    zeros: &mut Vec<ScanZero>,
    seeds: &mut Vec<BranchSeed>,
    alpha: f64,
    s: &ScanSeries,
    r: f64,
    labeling: &Labeling,
) {
    let alpha = alpha.rem_euclid(TAU);
    zeros.push(ScanZero {
        alpha,
        pair: s.pair,
        branches: s.branches,
    });
    seeds.push(BranchSeed {
        x: ParameterPoint::from_polar(r, alpha),
        pair: s.pair,
        branches: s.branches,
        labeling: labeling.clone(),
    });
}

#[allow(clippy::too_many_arguments)]
fn bisect_zero(
    family: &GeneratingFamily,
    r: f64,
    mut lo: f64,
    mut hi: f64,
    psi_lo: f64,
    s: &ScanSeries,
    labeling_lo: &Labeling,
    controls: &TracerControls,
    caustic: Option<&Caustic>,
) -> Option<f64> {
    let anchor = PsiPath::start_with(
        family,
        ParameterPoint::from_polar(r, lo),
        labeling_lo.clone(),
        controls,
        caustic,
    );
    let sign_lo = psi_lo.signum();
    for _ in 0..40 {
        if hi - lo < 1e-6 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let x = ParameterPoint::from_polar(r, mid);
        match anchor.eval(x, s.pair, s.branches) {
            Ok(smp) => {
                if smp.psi.signum() == sign_lo {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Err(_) => return None,
        }
    }
    Some(0.5 * (lo + hi))
}

/// How a traced branch terminates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BranchEndpoint {
    /// The saddle pair merges with the node on a fold arc of side `l_m`.
    CausticFold { side: Option<u8> },
    CausticCuspVertex,
    RegionExit,
    ClosedLoop,
    /// The corrector diverged away from any caustic feature; truncated.
    Truncated,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BifurcationBranch {
    pub id: usize,
    /// Ordered saddle pair: the separatrix runs from pair.0 to pair.1.
    pub pair: (Label, Label),
    pub branches: (BranchSign, BranchSign),
    pub points: Vec<ParameterPoint>,
    /// |psi| re-evaluated independently at each point after tracing.
    pub psi_residuals: Vec<f64>,
    pub endpoints: (BranchEndpoint, BranchEndpoint),
    #[serde(skip)]
    pub labelings: Vec<Labeling>,
}

impl BifurcationBranch {
    pub fn as_polyline(&self) -> Vec<[f64; 2]> {
        self.points.iter().map(|p| p.coords()).collect()
    }
}

/// Continue a psi zero into a full branch by pseudo-arclength continuation:
/// tangent predictor from the finite-difference psi gradient, scalar Newton
/// corrector transverse to the tangent.
pub fn trace_branch(
    family: &GeneratingFamily,
    seed: &BranchSeed,
    region: &RegionBox,
    caustic: Option<&Caustic>,
    controls: &TracerControls,
) -> Result<BifurcationBranch, TraceError> {
    let step0 = controls.step_factor * region.diagonal();
    let fd = controls.fd_factor * region.diagonal();
    let mut path = PsiPath::start_with(family, seed.x, seed.labeling.clone(), controls, caustic);
    path.advance(seed.x)?;

    // initial correction of the seed along the psi gradient
    let mut x = seed.x;
    for _ in 0..8 {
        let psi = path.eval(x, seed.pair, seed.branches)?.psi;
        if psi.abs() < controls.corrector_tol {
            break;
        }
        let g = grad_psi(&path, x, seed, fd)?;
        let g2 = dot(g, g);
        if g2 < 1e-30 {
            return Err(TraceError::LostZero {
                x1: x.x1,
                x2: x.x2,
                message: "psi gradient vanishes at the seed".into(),
            });
        }
        x = ParameterPoint::new(x.x1 - psi * g[0] / g2, x.x2 - psi * g[1] / g2);
    }
    let psi0 = path.eval(x, seed.pair, seed.branches)?.psi;
    if psi0.abs() > 1e-6 {
        return Err(TraceError::LostZero {
            x1: x.x1,
            x2: x.x2,
            message: format!("seed correction stalled at |psi| = {:.3e}", psi0.abs()),
        });
    }
    path.advance(x)?;
    let g0 = grad_psi(&path, x, seed, fd)?;
    let t0 = unit(rot90(g0));

    let forward = trace_direction(&path, x, t0, seed, region, caustic, controls, step0, fd);
    let mut combined: Vec<(ParameterPoint, Labeling)> = Vec::new();
    let (fwd_pts, fwd_end, fwd_closed) = forward;
    let (bwd_pts, bwd_end) = if fwd_closed {
        (Vec::new(), fwd_end)
    } else {
        let b = trace_direction(
            &path,
            x,
            scale(t0, -1.0),
            seed,
            region,
            caustic,
            controls,
            step0,
            fd,
        );
        (b.0, b.1)
    };
    for p in bwd_pts.into_iter().rev() {
        combined.push(p);
    }
    combined.push((x, path.points.clone()));
    combined.extend(fwd_pts);

    // independent residual pass: fresh labels walked along the polyline
    let mut residuals = vec![f64::NAN; combined.len()];
    let seed_idx = combined
        .iter()
        .position(|(p, _)| p.x1 == x.x1 && p.x2 == x.x2)
        .unwrap_or(0);
    let mut check = PsiPath::start_with(family, x, seed.labeling.clone(), controls, caustic);
    let _ = check.advance(x);
    let mut walk = |idxs: Vec<usize>, check: &PsiPath| {
        let mut local = check.clone();
        for i in idxs {
            let (p, _) = combined[i];
            if local.advance(p).is_err() {
                break;
            }
            match local.eval(p, seed.pair, seed.branches) {
                Ok(s) => residuals[i] = s.psi.abs(),
                Err(_) => break,
            }
        }
    };
    walk((seed_idx..combined.len()).collect(), &check);
    walk((0..seed_idx).rev().collect(), &check);

    Ok(BifurcationBranch {
        id: 0,
        pair: seed.pair,
        branches: seed.branches,
        points: combined.iter().map(|(p, _)| *p).collect(),
        psi_residuals: residuals,
        endpoints: (bwd_end, fwd_end),
        labelings: combined.into_iter().map(|(_, l)| l).collect(),
    })
}

fn grad_psi(
    path: &PsiPath,
    x: ParameterPoint,
    seed: &BranchSeed,
    fd: f64,
) -> Result<[f64; 2], TraceError> {
    let e = |dx: f64, dy: f64| ParameterPoint::new(x.x1 + dx, x.x2 + dy);
    let p = |xx: ParameterPoint| -> Result<f64, TraceError> {
        Ok(path.eval(xx, seed.pair, seed.branches)?.psi)
    };
    Ok([
        (p(e(fd, 0.0))? - p(e(-fd, 0.0))?) / (2.0 * fd),
        (p(e(0.0, fd))? - p(e(0.0, -fd))?) / (2.0 * fd),
    ])
}

/// March one direction; returns points+labelings, the endpoint, and whether
/// the branch closed into a loop.
#[allow(clippy::too_many_arguments)]
fn trace_direction(
    path0: &PsiPath,
    x_start: ParameterPoint,
    t_start: [f64; 2],
    seed: &BranchSeed,
    region: &RegionBox,
    caustic: Option<&Caustic>,
    controls: &TracerControls,
    step0: f64,
    fd: f64,
) -> (Vec<(ParameterPoint, Labeling)>, BranchEndpoint, bool) {
    let mut path = path0.clone();
    let mut x = x_start;
    let mut t = t_start;
    let mut step = step0;
    let min_step = step0 / 256.0;
    let mut clean = 0usize;
    let mut out: Vec<(ParameterPoint, Labeling)> = Vec::new();

    let classify = |x_last: ParameterPoint, path: &PsiPath| -> BranchEndpoint {
        // a merging pair or a dying label lands on the caustic: sort
        // vertex vs fold by the nearest feature
        match caustic.and_then(|c| c.nearest_feature(x_last, 2.0 * step0)) {
            Some(CausticFeature::Vertex) => BranchEndpoint::CausticCuspVertex,
            Some(CausticFeature::FoldSide { label }) => BranchEndpoint::CausticFold { side: label },
            None => {
                // the umbilic point caustic reports through nearest_feature;
                // anything else is a truncation
                let _ = path;
                BranchEndpoint::Truncated
            }
        }
    };

    for iter in 0..controls.max_branch_points {
        let pred = ParameterPoint::new(x.x1 + step * t[0], x.x2 + step * t[1]);
        // corrector: 1D Newton transverse to the tangent
        let nhat = rot90(t);
        let mut nu = 0.0f64;
        let mut corrected: Option<ParameterPoint> = None;
        let mut eval_failed = false;
        for _ in 0..10 {
            let cand = ParameterPoint::new(pred.x1 + nu * nhat[0], pred.x2 + nu * nhat[1]);
            match path.eval(cand, seed.pair, seed.branches) {
                Err(_) => {
                    eval_failed = true;
                    break;
                }
                Ok(s) if s.psi.abs() < controls.corrector_tol => {
                    corrected = Some(cand);
                    break;
                }
                Ok(s) => {
                    let dplus = path.eval(
                        ParameterPoint::new(cand.x1 + fd * nhat[0], cand.x2 + fd * nhat[1]),
                        seed.pair,
                        seed.branches,
                    );
                    let dminus = path.eval(
                        ParameterPoint::new(cand.x1 - fd * nhat[0], cand.x2 - fd * nhat[1]),
                        seed.pair,
                        seed.branches,
                    );
                    match (dplus, dminus) {
                        (Ok(p), Ok(m)) => {
                            let slope = (p.psi - m.psi) / (2.0 * fd);
                            if slope.abs() < 1e-30 {
                                eval_failed = true;
                                break;
                            }
                            nu -= s.psi / slope;
                            if nu.abs() > 2.0 * step {
                                // corrector running away from the predictor
                                break;
                            }
                        }
                        _ => {
                            eval_failed = true;
                            break;
                        }
                    }
                }
            }
        }
        match corrected {
            None => {
                // shrink toward the obstruction; classify once resolution
                // is exhausted
                step *= 0.5;
                clean = 0;
                if step < min_step {
                    let end = if eval_failed || !out.is_empty() || iter > 0 {
                        classify(x, &path)
                    } else {
                        BranchEndpoint::Truncated
                    };
                    return (out, end, false);
                }
            }
            Some(xn) => {
                if !region.contains(xn) {
                    return (out, BranchEndpoint::RegionExit, false);
                }
                if path.advance(xn).is_err() {
                    return (out, classify(x, &path), false);
                }
                // saddle pair merging onto the caustic
                if let Some(d) = path.pair_distance(seed.pair) {
                    if d < 1e-4 {
                        out.push((xn, path.points.clone()));
                        return (out, classify(xn, &path), false);
                    }
                }
                // tangent from the fresh gradient, oriented continuously
                match grad_psi(&path, xn, seed, fd) {
                    Err(_) => {
                        out.push((xn, path.points.clone()));
                        return (out, classify(xn, &path), false);
                    }
                    Ok(g) => {
                        let mut tn = unit(rot90(g));
                        if dot(tn, t) < 0.0 {
                            tn = scale(tn, -1.0);
                        }
                        t = tn;
                    }
                }
                x = xn;
                out.push((xn, path.points.clone()));
                clean += 1;
                if clean >= 5 {
                    step = (step * 2.0).min(2.0 * step0);
                    clean = 0;
                }
                if out.len() >= 10 {
                    let d = x.dist(x_start);
                    if d < 0.5 * step {
                        return (out, BranchEndpoint::ClosedLoop, true);
                    }
                }
            }
        }
    }
    (out, BranchEndpoint::Truncated, false)
}

/// A located crossing of two branches.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Intersection {
    pub x: ParameterPoint,
    pub branch_ids: (usize, usize),
    pub pairs: ((Label, Label), (Label, Label)),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BifurcationDiagram {
    pub family: String,
    pub region: RegionBox,
    pub caustic: Caustic,
    pub branches: Vec<BifurcationBranch>,
    pub intersections: Vec<Intersection>,
}

/// Full bifurcation diagram over a region: caustic, boundary-circle seeding,
/// interior grid seeding, continuation of every seed, duplicate merging and
/// branch-intersection detection. Per-seed failures are skipped, never fatal.
pub fn compute_locus(
    family: &GeneratingFamily,
    region: &RegionBox,
    controls: &TracerControls,
) -> Result<BifurcationDiagram, TraceError> {
    let caustic = crate::critical_points::trace_caustic(
        family,
        &controls.window,
        controls.caustic_step,
    )?;
    let mut seeds: Vec<BranchSeed> = Vec::new();

    // boundary circle
    let r_circle = 0.475 * region.min_extent();
    if let Ok(scan) = scan_circle(
        family,
        r_circle,
        controls.circle_n,
        PairSelector::Auto,
        controls,
        Some(&caustic),
    ) {
        seeds.extend(scan.seeds);
    }

    // interior serpentine grid per saddle pair and branch combo
    seeds.extend(grid_seeds(family, region, controls, &caustic));

    // trace, skipping seeds already covered by an existing branch
    let step0 = controls.step_factor * region.diagonal();
    let mut branches: Vec<BifurcationBranch> = Vec::new();
    for seed in &seeds {
        let covered = branches.iter().any(|b| {
            crate::linalg::dist_to_polyline(seed.x.coords(), &b.as_polyline()) < 1.5 * step0
        });
        if covered {
            continue;
        }
        if let Ok(mut b) = trace_branch(family, seed, region, Some(&caustic), controls) {
            if b.points.len() >= 3 {
                b.id = branches.len();
                branches.push(b);
            }
        }
    }
    // merge duplicates by symmetric polyline distance
    let mut keep: Vec<BifurcationBranch> = Vec::new();
    for b in branches {
        let dup = keep.iter().any(|k| {
            let ka = k.as_polyline();
            let ba = b.as_polyline();
            let d1 = ba
                .iter()
                .map(|p| crate::linalg::dist_to_polyline(*p, &ka))
                .fold(0.0f64, f64::max);
            let d2 = ka
                .iter()
                .map(|p| crate::linalg::dist_to_polyline(*p, &ba))
                .fold(0.0f64, f64::max);
            d1.max(d2) < step0
        });
        if !dup {
            keep.push(b);
        }
    }
    let mut branches = keep;
    for (i, b) in branches.iter_mut().enumerate() {
        b.id = i;
    }

    let intersections = find_intersections(family, &branches, controls, &caustic);

    Ok(BifurcationDiagram {
        family: family.name().to_string(),
        region: *region,
        caustic,
        branches,
        intersections,
    })
}

fn grid_seeds(
    family: &GeneratingFamily,
    region: &RegionBox,
    controls: &TracerControls,
    caustic: &Caustic,
) -> Vec<BranchSeed> {
    let n = controls.grid_n;
    crate::parallel::map((0..n).collect(), |row| {
        grid_row_seeds(family, region, controls, caustic, row)
    })
    .into_iter()
    .flatten()
    .collect()
}

/// Serpentine scan of one grid row: labels are continued point to point, so
/// psi sign changes along the row are meaningful brackets.
fn grid_row_seeds(
    family: &GeneratingFamily,
    region: &RegionBox,
    controls: &TracerControls,
    caustic: &Caustic,
    row: usize,
) -> Vec<BranchSeed> {
    let n = controls.grid_n;
    let mut seeds: Vec<BranchSeed> = Vec::new();
    let combos: Vec<(BranchSign, BranchSign)> = if controls.all_branch_combos {
        vec![
            (BranchSign::Plus, BranchSign::Plus),
            (BranchSign::Plus, BranchSign::Minus),
            (BranchSign::Minus, BranchSign::Plus),
            (BranchSign::Minus, BranchSign::Minus),
        ]
    } else {
        vec![(BranchSign::Plus, BranchSign::Plus)]
    };
    {
        let x2 = region.x2_min + (row as f64 + 0.5) / n as f64 * (region.x2_max - region.x2_min);
        let mut cols: Vec<usize> = (0..n).collect();
        if row % 2 == 1 {
            cols.reverse();
        }
        let row_start = ParameterPoint::new(
            region.x1_min
                + (cols[0] as f64 + 0.5) / n as f64 * (region.x1_max - region.x1_min),
            x2,
        );
        let Ok(mut path) = PsiPath::start(family, row_start, controls, Some(caustic)) else {
            return seeds;
        };
        // per (pair, combo) previous sample for sign-change bracketing
        let mut prev: Vec<((Label, Label), (BranchSign, BranchSign), Option<(ParameterPoint, f64, Labeling)>)> =
            Vec::new();
        for col in cols {
            let x1 = region.x1_min
                + (col as f64 + 0.5) / n as f64 * (region.x1_max - region.x1_min);
            let x = ParameterPoint::new(x1, x2);
            if path.advance(x).is_err() {
                for p in prev.iter_mut() {
                    p.2 = None;
                }
                continue;
            }
            let saddles: Vec<Label> = path
                .points
                .iter()
                .filter(|p| p.class == PointClass::Saddle && p.label != Label::Unlabeled)
                .map(|p| p.label)
                .collect();
            for &i in &saddles {
                for &j in &saddles {
                    if i == j {
                        continue;
                    }
                    for &branches in &combos {
                        let slot = match prev.iter_mut().find(|(pp, bb, _)| *pp == (i, j) && *bb == branches) {
                            Some(s) => s,
                            None => {
                                prev.push(((i, j), branches, None));
                                prev.last_mut().unwrap()
                            }
                        };
                        match path.eval(x, (i, j), branches) {
                            Err(_) => slot.2 = None,
                            Ok(sample) => {
                                let v = sample.psi;
                                if v.abs() < controls.psi_zero_tol {
                                    seeds.push(BranchSeed {
                                        x,
                                        pair: (i, j),
                                        branches,
                                        labeling: path.points.clone(),
                                    });
                                } else if let Some((px, pv, plab)) = &slot.2 {
                                    if pv * v < 0.0 && pv.abs() >= controls.psi_zero_tol {
                                        // linear zero estimate along the row edge
                                        let t = pv / (pv - v);
                                        let xm = ParameterPoint::new(
                                            px.x1 + t * (x.x1 - px.x1),
                                            px.x2 + t * (x.x2 - px.x2),
                                        );
                                        seeds.push(BranchSeed {
                                            x: xm,
                                            pair: (i, j),
                                            branches,
                                            labeling: plab.clone(),
                                        });
                                    }
                                }
                                slot.2 = Some((x, v, path.points.clone()));
                            }
                        }
                    }
                }
            }
        }
    }
    seeds
}

fn find_intersections(
    family: &GeneratingFamily,
    branches: &[BifurcationBranch],
    controls: &TracerControls,
    caustic: &Caustic,
) -> Vec<Intersection> {
    let mut out: Vec<Intersection> = Vec::new();
    for (ia, a) in branches.iter().enumerate() {
        for (ib, b) in branches.iter().enumerate().skip(ia + 1) {
            let pa = a.as_polyline();
            let pb = b.as_polyline();
            for (sa, wa) in pa.windows(2).enumerate() {
                for (sb, wb) in pb.windows(2).enumerate() {
                    if let Some(p) = segment_intersection(wa[0], wa[1], wb[0], wb[1]) {
                        let x0 = ParameterPoint::new(p[0], p[1]);
                        let x = refine_intersection(family, a, sa, b, sb, x0, controls, caustic)
                            .unwrap_or(x0);
                        let dup = out
                            .iter()
                            .any(|i| i.x.dist(x) < 1e-4 && i.branch_ids == (ia, ib));
                        if !dup {
                            out.push(Intersection {
                                x,
                                branch_ids: (ia, ib),
                                pairs: (a.pair, b.pair),
                            });
                        }
                    }
                }
            }
        }
    }
    out
}

/// Two-dimensional Newton on (psi_a, psi_b) = 0 near a geometric crossing,
/// each component anchored to its own branch labeling.
#[allow(clippy::too_many_arguments)]
fn refine_intersection(
    family: &GeneratingFamily,
    a: &BifurcationBranch,
    seg_a: usize,
    b: &BifurcationBranch,
    seg_b: usize,
    x0: ParameterPoint,
    controls: &TracerControls,
    caustic: &Caustic,
) -> Option<ParameterPoint> {
    let lab_a = a.labelings.get(seg_a)?.clone();
    let lab_b = b.labelings.get(seg_b)?.clone();
    let xa = *a.points.get(seg_a)?;
    let xb = *b.points.get(seg_b)?;
    let path_a = PsiPath::start_with(family, xa, lab_a, controls, Some(caustic));
    let path_b = PsiPath::start_with(family, xb, lab_b, controls, Some(caustic));
    let fd = controls.fd_factor * 10.0_f64.max(1.0);
    let fd = fd * 1e-1; // absolute step for the local jacobian
    let eval = |x: ParameterPoint| -> Option<[f64; 2]> {
        Some([
            path_a.eval(x, a.pair, a.branches).ok()?.psi,
            path_b.eval(x, b.pair, b.branches).ok()?.psi,
        ])
    };
    let mut x = x0;
    for _ in 0..12 {
        let f = eval(x)?;
        if norm(f) < controls.corrector_tol {
            return Some(x);
        }
        let fx = eval(ParameterPoint::new(x.x1 + fd, x.x2))?;
        let fmx = eval(ParameterPoint::new(x.x1 - fd, x.x2))?;
        let fy = eval(ParameterPoint::new(x.x1, x.x2 + fd))?;
        let fmy = eval(ParameterPoint::new(x.x1, x.x2 - fd))?;
        let jac = [
            [(fx[0] - fmx[0]) / (2.0 * fd), (fy[0] - fmy[0]) / (2.0 * fd)],
            [(fx[1] - fmx[1]) / (2.0 * fd), (fy[1] - fmy[1]) / (2.0 * fd)],
        ];
        let step = crate::linalg::solve2(jac, [-f[0], -f[1]])?;
        x = ParameterPoint::new(x.x1 + step[0], x.x2 + step[1]);
        if norm(step) < 1e-12 {
            break;
        }
    }
    let f = eval(x)?;
    (norm(f) < 1e-6).then_some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field_models::GeneratingFamily;

    fn ray_angles() -> [f64; 3] {
        [0.0, TAU / 3.0, 2.0 * TAU / 3.0]
    }

    fn assert_three_ray_zeros(zeros: &[ScanZero], tol: f64) {
        assert_eq!(zeros.len(), 3, "zeros: {zeros:?}");
        for want in ray_angles() {
            assert!(
                zeros.iter().any(|z| {
                    let d = (z.alpha - want).abs();
                    d.min(TAU - d) < tol
                }),
                "missing zero near {want}: {zeros:?}"
            );
        }
    }

    #[test]
    fn umbilic_circle_scan_finds_three_rays() {
        let fam = GeneratingFamily::EllipticUmbilic;
        let controls = TracerControls::default();
        for r in [0.25, 1.0] {
            let scan = scan_circle(&fam, r, 360, PairSelector::Labeled(Label::S1, Label::S2), &controls, None)
                .unwrap();
            assert_three_ray_zeros(&scan.zeros, 1e-3);
        }
    }

    #[test]
    fn umbilic_zero_angles_scale_invariant() {
        let fam = GeneratingFamily::EllipticUmbilic;
        let controls = TracerControls::default();
        let za = scan_circle(&fam, 1.0, 240, PairSelector::Auto, &controls, None).unwrap();
        let zb = scan_circle(&fam, 0.25, 240, PairSelector::Auto, &controls, None).unwrap();
        for (a, b) in za.zeros.iter().zip(zb.zeros.iter()) {
            let d = (a.alpha - b.alpha).abs();
            assert!(d.min(TAU - d) < 1e-4, "{} vs {}", a.alpha, b.alpha);
        }
    }

    #[test]
    fn fold_scan_has_no_zeros() {
        let fam = GeneratingFamily::Fold;
        let controls = TracerControls::default();
        let scan = scan_circle(&fam, 1.0, 90, PairSelector::Auto, &controls, None).unwrap();
        assert!(scan.zeros.is_empty());
        assert!(scan.series.iter().all(|s| s.values.iter().all(|v| v.is_none())));
    }

    #[test]
    fn umbilic_branch_is_a_ray_from_origin() {
        let fam = GeneratingFamily::EllipticUmbilic;
        let controls = TracerControls::default();
        let region = RegionBox::square(2.0);
        let caustic =
            crate::critical_points::trace_caustic(&fam, &controls.window, 0.02).unwrap();
        let scan = scan_circle(&fam, 1.0, 90, PairSelector::Auto, &controls, Some(&caustic))
            .unwrap();
        let seed = scan
            .seeds
            .iter()
            .find(|s| s.x.alpha() < 1e-6 || s.x.alpha() > TAU - 1e-6)
            .expect("seed on the alpha=0 ray");
        let branch = trace_branch(&fam, seed, &region, Some(&caustic), &controls).unwrap();
        // all points on the ray: alpha constant to 1e-4
        for p in &branch.points {
            assert!(
                p.x2.abs() < 1e-4 * p.r().max(1e-3),
                "branch point {p:?} off the axis"
            );
            assert!(p.x1 > 0.0);
        }
        // endpoints: origin (the point caustic counts as a vertex) and exit
        let ends = [branch.endpoints.0, branch.endpoints.1];
        assert!(ends.contains(&BranchEndpoint::CausticCuspVertex), "{ends:?}");
        assert!(ends.contains(&BranchEndpoint::RegionExit), "{ends:?}");
        // residuals hold after independent re-evaluation
        let good = branch
            .psi_residuals
            .iter()
            .filter(|r| r.is_finite())
            .count();
        assert!(good * 10 >= branch.points.len() * 9);
        for r in branch.psi_residuals.iter().filter(|r| r.is_finite()) {
            assert!(*r < 1e-6, "residual {r}");
        }
    }

    #[test]
    fn perturbed_axis_branch_ends_at_the_vertex() {
        let fam = GeneratingFamily::PerturbedUmbilic;
        let controls = TracerControls::default();
        let region = RegionBox::square(2.0);
        let caustic =
            crate::critical_points::trace_caustic(&fam, &controls.window, 0.01).unwrap();
        let x0 = ParameterPoint::new(1.0, 0.0);
        let labeling =
            crate::critical_points::labeled_points(&fam, x0, &controls.window).unwrap();
        let seed = BranchSeed {
            x: x0,
            pair: (Label::N, Label::S3),
            branches: (BranchSign::Plus, BranchSign::Plus),
            labeling,
        };
        let branch = trace_branch(&fam, &seed, &region, Some(&caustic), &controls).unwrap();
        for p in &branch.points {
            assert!(p.x2.abs() < 1e-6, "branch strays off the axis: {p:?}");
        }
        let ends = [branch.endpoints.0, branch.endpoints.1];
        assert!(ends.contains(&BranchEndpoint::CausticCuspVertex), "{ends:?}");
        assert!(ends.contains(&BranchEndpoint::RegionExit), "{ends:?}");
        // inner endpoint within two continuation steps of the vertex (3/4, 0)
        let step0 = controls.step_factor * region.diagonal();
        let inner = branch
            .points
            .iter()
            .min_by(|a, b| a.r().partial_cmp(&b.r()).unwrap())
            .unwrap();
        assert!(
            inner.dist(ParameterPoint::new(0.75, 0.0)) < 2.0 * step0,
            "inner endpoint {inner:?}"
        );
    }

    #[test]
    fn perturbed_locus_has_three_vertex_branches() {
        let fam = GeneratingFamily::PerturbedUmbilic;
        let mut controls = TracerControls::default();
        controls.grid_n = 21;
        let region = RegionBox::square(2.0);
        let diagram = compute_locus(&fam, &region, &controls).unwrap();
        assert_eq!(diagram.branches.len(), 3, "{:#?}", diagram
            .branches
            .iter()
            .map(|b| (b.pair, b.points.len(), b.endpoints))
            .collect::<Vec<_>>());
        // one branch per tricuspoid vertex, radially outward
        let mut hit = [false; 3];
        for b in &diagram.branches {
            let mid = b.points[b.points.len() / 2];
            for (k, w) in ray_angles().iter().enumerate() {
                let d = (mid.alpha() - w).abs();
                if d.min(TAU - d) < 1e-2 {
                    hit[k] = true;
                }
            }
            let ends = [b.endpoints.0, b.endpoints.1];
            assert!(ends.contains(&BranchEndpoint::CausticCuspVertex), "{ends:?}");
            assert!(ends.contains(&BranchEndpoint::RegionExit), "{ends:?}");
        }
        assert_eq!(hit, [true, true, true]);
    }

    #[test]
    fn cusp_locus_points_stay_inside_the_caustic() {
        // the unperturbed cusp shows no connections on its symmetry axis and
        // any zero curve must live where two saddles exist, inside
        let fam = GeneratingFamily::Cusp;
        let mut controls = TracerControls::default();
        controls.grid_n = 15;
        controls.circle_n = 120;
        let region = RegionBox::new(-2.0, 2.0, -0.5, 2.5);
        let diagram = compute_locus(&fam, &region, &controls).unwrap();
        for b in &diagram.branches {
            for p in &b.points {
                assert_ne!(
                    diagram
                        .caustic
                        .region_test(*p, 1e-4),
                    crate::critical_points::Region::Outside,
                    "cusp branch point {p:?} lies outside the caustic"
                );
            }
        }
        // whatever was found obeys the rule catalog (vertex avoidance
        // included, since the family tag is `cusp`)
        let violations = crate::diagram_validator::validate(&diagram).unwrap();
        assert!(violations.is_empty(), "{violations:?}");
    }

    #[test]
    fn umbilic_locus_has_three_rays_at_two_thirds_pi() {
        let fam = GeneratingFamily::EllipticUmbilic;
        let mut controls = TracerControls::default();
        controls.grid_n = 21; // plenty for three straight rays
        let region = RegionBox::square(2.0);
        let diagram = compute_locus(&fam, &region, &controls).unwrap();
        assert_eq!(diagram.branches.len(), 3, "{:?}", diagram.branches.len());
        let mut angles: Vec<f64> = diagram
            .branches
            .iter()
            .map(|b| b.points[b.points.len() / 2].alpha())
            .collect();
        angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (a, w) in angles.iter().zip(ray_angles()) {
            let d = (a - w).abs();
            assert!(d.min(TAU - d) < 1e-3, "ray at {a}, want {w}");
        }
        assert!(diagram.intersections.is_empty());
    }
}

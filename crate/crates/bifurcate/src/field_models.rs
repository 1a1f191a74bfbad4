//! Generating-function families and their gradient fields.
//!
//! Each family supplies a scalar generating function `f` on the phase plane;
//! the flow studied everywhere else is `dy/dt = grad f(y) - x` with `x` the
//! two-dimensional parameter. The dynamical systems are the source of truth
//! and `f` is chosen so that its analytic gradient reproduces them:
//!
//! * fold:     dy1 = y1^2 - x1,            dy2 = y2 - x2
//! * cusp:     dy1 = y1^3 + 2 y1 y2 - x1,  dy2 = y1^2 + y2 - x2
//! * umbilic:  dy1 = y1^2 - y2^2 - x1,     dy2 = -2 y1 y2 - x2
//! * quadratically perturbed umbilic: adds (+y1, +y2) to the umbilic field
//!
//! A bump-perturbed family adds a smooth compactly supported bump to any of
//! the closed-form bases; outside the support disc everything coincides with
//! the base family exactly.

use crate::linalg::SymMat2;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use thiserror::Error;

/// A point in the two-dimensional parameter (base) plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterPoint {
    pub x1: f64,
    pub x2: f64,
}

impl ParameterPoint {
    pub fn new(x1: f64, x2: f64) -> Self {
        Self { x1, x2 }
    }

    pub fn from_polar(r: f64, alpha: f64) -> Self {
        Self::new(r * alpha.cos(), r * alpha.sin())
    }

    /// Radial coordinate `r = sqrt(x1^2 + x2^2)`.
    pub fn r(&self) -> f64 {
        self.x1.hypot(self.x2)
    }

    /// Angular coordinate in `[0, 2*pi)`; zero at the origin.
    pub fn alpha(&self) -> f64 {
        if self.r() == 0.0 {
            return 0.0;
        }
        let a = self.x2.atan2(self.x1);
        if a < 0.0 {
            a + TAU
        } else {
            a
        }
    }

    pub fn coords(&self) -> [f64; 2] {
        [self.x1, self.x2]
    }

    pub fn dist(&self, other: ParameterPoint) -> f64 {
        (self.x1 - other.x1).hypot(self.x2 - other.x2)
    }
}

/// A point in the phase (fiber) plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub y1: f64,
    pub y2: f64,
}

impl PhasePoint {
    pub fn new(y1: f64, y2: f64) -> Self {
        Self { y1, y2 }
    }

    pub fn from_polar(rho: f64, theta: f64) -> Self {
        Self::new(rho * theta.cos(), rho * theta.sin())
    }

    pub fn rho(&self) -> f64 {
        self.y1.hypot(self.y2)
    }

    /// Angular coordinate in `[0, 2*pi)`; zero at the origin.
    pub fn theta(&self) -> f64 {
        if self.rho() == 0.0 {
            return 0.0;
        }
        let t = self.y2.atan2(self.y1);
        if t < 0.0 {
            t + TAU
        } else {
            t
        }
    }

    pub fn coords(&self) -> [f64; 2] {
        [self.y1, self.y2]
    }

    pub fn dist(&self, other: PhasePoint) -> f64 {
        (self.y1 - other.y1).hypot(self.y2 - other.y2)
    }

    pub fn antipode(&self) -> PhasePoint {
        Self::new(-self.y1, -self.y2)
    }
}

/// Time derivative `(dy1/dt, dy2/dt)` of the flow at a phase point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldValue {
    pub v1: f64,
    pub v2: f64,
}

impl FieldValue {
    pub fn coords(&self) -> [f64; 2] {
        [self.v1, self.v2]
    }

    pub fn norm(&self) -> f64 {
        self.v1.hypot(self.v2)
    }
}

/// The closed-form model kinds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseKind {
    Fold,
    Cusp,
    EllipticUmbilic,
    PerturbedUmbilic,
}

impl BaseKind {
    pub fn name(&self) -> &'static str {
        match self {
            BaseKind::Fold => "fold",
            BaseKind::Cusp => "cusp",
            BaseKind::EllipticUmbilic => "elliptic",
            BaseKind::PerturbedUmbilic => "perturbed",
        }
    }
}

/// Smooth compactly supported bump `eps * exp(1/(|y-c|^2/sigma^2 - 1))`
/// inside the disc `|y-c| < sigma`, identically zero outside.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: PhasePoint,
    pub sigma: f64,
    pub eps: f64,
}

impl Bump {
    fn value(&self, y: PhasePoint) -> f64 {
        let u = self.u(y);
        if u >= 1.0 {
            0.0
        } else {
            self.eps * (1.0 / (u - 1.0)).exp()
        }
    }

    fn u(&self, y: PhasePoint) -> f64 {
        let d1 = y.y1 - self.center.y1;
        let d2 = y.y2 - self.center.y2;
        (d1 * d1 + d2 * d2) / (self.sigma * self.sigma)
    }

    fn gradient(&self, y: PhasePoint) -> [f64; 2] {
        let u = self.u(y);
        if u >= 1.0 {
            return [0.0, 0.0];
        }
        let g = self.eps * (1.0 / (u - 1.0)).exp();
        let gu = -g / ((u - 1.0) * (u - 1.0));
        let s = 2.0 / (self.sigma * self.sigma);
        [
            gu * s * (y.y1 - self.center.y1),
            gu * s * (y.y2 - self.center.y2),
        ]
    }

    fn hessian(&self, y: PhasePoint) -> SymMat2 {
        let u = self.u(y);
        if u >= 1.0 {
            return SymMat2::new(0.0, 0.0, 0.0);
        }
        let g = self.eps * (1.0 / (u - 1.0)).exp();
        let um1 = u - 1.0;
        let gu = -g / (um1 * um1);
        let guu = g * (2.0 * u - 1.0) / (um1 * um1 * um1 * um1);
        let s = 2.0 / (self.sigma * self.sigma);
        let d1 = y.y1 - self.center.y1;
        let d2 = y.y2 - self.center.y2;
        SymMat2::new(
            guu * s * s * d1 * d1 + gu * s,
            guu * s * s * d1 * d2,
            guu * s * s * d2 * d2 + gu * s,
        )
    }
}

/// One of the model families, possibly with a bump perturbation on top.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratingFamily {
    Fold,
    Cusp,
    EllipticUmbilic,
    PerturbedUmbilic,
    BumpPerturbed { base: BaseKind, bump: Bump },
}

#[derive(Debug, Error, PartialEq)]
pub enum FieldError {
    /// Polar form is undefined at the origin of the phase plane.
    #[error("polar field undefined at rho = 0 (angle has no value)")]
    AngleUndefined,
    #[error("bad family spec: {0}")]
    BadFamilySpec(String),
}

impl GeneratingFamily {
    pub fn bump_over(base: BaseKind, center: PhasePoint, sigma: f64, eps: f64) -> Self {
        GeneratingFamily::BumpPerturbed {
            base,
            bump: Bump { center, sigma, eps },
        }
    }

    /// Closed-form base of this family (the family itself unless bumped).
    pub fn base_kind(&self) -> BaseKind {
        match self {
            GeneratingFamily::Fold => BaseKind::Fold,
            GeneratingFamily::Cusp => BaseKind::Cusp,
            GeneratingFamily::EllipticUmbilic => BaseKind::EllipticUmbilic,
            GeneratingFamily::PerturbedUmbilic => BaseKind::PerturbedUmbilic,
            GeneratingFamily::BumpPerturbed { base, .. } => *base,
        }
    }

    pub fn bump(&self) -> Option<&Bump> {
        match self {
            GeneratingFamily::BumpPerturbed { bump, .. } => Some(bump),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            GeneratingFamily::BumpPerturbed { .. } => "bump",
            f => f.base_kind().name(),
        }
    }

    /// Generating-function value `f(y)`.
    pub fn eval_f(&self, y: PhasePoint) -> f64 {
        let base = match self.base_kind() {
            BaseKind::Fold => y.y1 * y.y1 * y.y1 / 3.0 + 0.5 * y.y2 * y.y2,
            BaseKind::Cusp => {
                0.25 * y.y1.powi(4) + y.y1 * y.y1 * y.y2 + 0.5 * y.y2 * y.y2
            }
            BaseKind::EllipticUmbilic => y.y1 * y.y1 * y.y1 / 3.0 - y.y1 * y.y2 * y.y2,
            BaseKind::PerturbedUmbilic => {
                y.y1 * y.y1 * y.y1 / 3.0 - y.y1 * y.y2 * y.y2
                    + 0.5 * (y.y1 * y.y1 + y.y2 * y.y2)
            }
        };
        base + self.bump().map_or(0.0, |b| b.value(y))
    }

    /// Gradient of the generating function, `grad f(y)`.
    pub fn gradient(&self, y: PhasePoint) -> [f64; 2] {
        let g = match self.base_kind() {
            BaseKind::Fold => [y.y1 * y.y1, y.y2],
            BaseKind::Cusp => [
                y.y1 * y.y1 * y.y1 + 2.0 * y.y1 * y.y2,
                y.y1 * y.y1 + y.y2,
            ],
            BaseKind::EllipticUmbilic => [y.y1 * y.y1 - y.y2 * y.y2, -2.0 * y.y1 * y.y2],
            BaseKind::PerturbedUmbilic => [
                y.y1 * y.y1 - y.y2 * y.y2 + y.y1,
                -2.0 * y.y1 * y.y2 + y.y2,
            ],
        };
        match self.bump() {
            None => g,
            Some(b) => {
                let gb = b.gradient(y);
                [g[0] + gb[0], g[1] + gb[1]]
            }
        }
    }

    /// Right-hand side of the flow, `grad f(y) - x`.
    pub fn eval_field(&self, x: ParameterPoint, y: PhasePoint) -> FieldValue {
        let g = self.gradient(y);
        FieldValue {
            v1: g[0] - x.x1,
            v2: g[1] - x.x2,
        }
    }

    /// Jacobian of the field with respect to `y`: the Hessian of `f`,
    /// symmetric and independent of `x`.
    pub fn eval_jacobian(&self, _x: ParameterPoint, y: PhasePoint) -> SymMat2 {
        self.hessian(y)
    }

    pub fn hessian(&self, y: PhasePoint) -> SymMat2 {
        let h = match self.base_kind() {
            BaseKind::Fold => SymMat2::new(2.0 * y.y1, 0.0, 1.0),
            BaseKind::Cusp => SymMat2::new(3.0 * y.y1 * y.y1 + 2.0 * y.y2, 2.0 * y.y1, 1.0),
            BaseKind::EllipticUmbilic => SymMat2::new(2.0 * y.y1, -2.0 * y.y2, -2.0 * y.y1),
            BaseKind::PerturbedUmbilic => {
                SymMat2::new(2.0 * y.y1 + 1.0, -2.0 * y.y2, -2.0 * y.y1 + 1.0)
            }
        };
        match self.bump() {
            None => h,
            Some(b) => {
                let hb = b.hessian(y);
                SymMat2::new(h.a + hb.a, h.b + hb.b, h.d + hb.d)
            }
        }
    }
}

/// Exact polar form of the elliptic-umbilic flow, from the change of
/// variables `y = rho * e^{i theta}`, `x = r * e^{i alpha}`:
///
/// ```text
/// d rho   / dt = rho^2 cos(3 theta) - r cos(theta - alpha)
/// d theta / dt = (-rho^2 sin(3 theta) + r sin(theta - alpha)) / rho
/// ```
///
/// Constant-angle solutions need sin(3 theta) = 0 and sin(theta - alpha) = 0,
/// which is what singles out the three connection rays.
pub fn polar_field(
    x: ParameterPoint,
    rho: f64,
    theta: f64,
) -> Result<(f64, f64), FieldError> {
    if rho <= 0.0 {
        return Err(FieldError::AngleUndefined);
    }
    let r = x.r();
    let alpha = x.alpha();
    let drho = rho * rho * (3.0 * theta).cos() - r * (theta - alpha).cos();
    let dtheta = (-rho * rho * (3.0 * theta).sin() + r * (theta - alpha).sin()) / rho;
    Ok((drho, dtheta))
}

/// Parse a family from config keys:
/// `family = fold|cusp|elliptic|perturbed|bump` plus, for `bump`,
/// `bump.base`, `bump.center = <y1>,<y2>`, `bump.sigma`, `bump.eps`.
pub fn parse_family(
    get: &dyn Fn(&str) -> Option<String>,
) -> Result<GeneratingFamily, FieldError> {
    let kind = get("family")
        .ok_or_else(|| FieldError::BadFamilySpec("missing key `family`".into()))?;
    let base_of = |name: &str| -> Result<BaseKind, FieldError> {
        match name {
            "fold" => Ok(BaseKind::Fold),
            "cusp" => Ok(BaseKind::Cusp),
            "elliptic" => Ok(BaseKind::EllipticUmbilic),
            "perturbed" => Ok(BaseKind::PerturbedUmbilic),
            other => Err(FieldError::BadFamilySpec(format!(
                "unknown family `{other}` (expected fold|cusp|elliptic|perturbed|bump)"
            ))),
        }
    };
    match kind.as_str() {
        "bump" => {
            let base = base_of(&get("bump.base").ok_or_else(|| {
                FieldError::BadFamilySpec("missing key `bump.base`".into())
            })?)?;
            let center_raw = get("bump.center").ok_or_else(|| {
                FieldError::BadFamilySpec("missing key `bump.center`".into())
            })?;
            let parts: Vec<&str> = center_raw.split(',').map(str::trim).collect();
            if parts.len() != 2 {
                return Err(FieldError::BadFamilySpec(format!(
                    "bump.center must be `<y1>,<y2>`, got `{center_raw}`"
                )));
            }
            let c1: f64 = parts[0].parse().map_err(|_| {
                FieldError::BadFamilySpec(format!("bad number `{}`", parts[0]))
            })?;
            let c2: f64 = parts[1].parse().map_err(|_| {
                FieldError::BadFamilySpec(format!("bad number `{}`", parts[1]))
            })?;
            let sigma: f64 = get("bump.sigma")
                .ok_or_else(|| FieldError::BadFamilySpec("missing key `bump.sigma`".into()))?
                .parse()
                .map_err(|_| FieldError::BadFamilySpec("bad number for bump.sigma".into()))?;
            let eps: f64 = get("bump.eps")
                .ok_or_else(|| FieldError::BadFamilySpec("missing key `bump.eps`".into()))?
                .parse()
                .map_err(|_| FieldError::BadFamilySpec("bad number for bump.eps".into()))?;
            if sigma <= 0.0 {
                return Err(FieldError::BadFamilySpec("bump.sigma must be > 0".into()));
            }
            Ok(GeneratingFamily::bump_over(
                base,
                PhasePoint::new(c1, c2),
                sigma,
                eps,
            ))
        }
        name => Ok(match base_of(name)? {
            BaseKind::Fold => GeneratingFamily::Fold,
            BaseKind::Cusp => GeneratingFamily::Cusp,
            BaseKind::EllipticUmbilic => GeneratingFamily::EllipticUmbilic,
            BaseKind::PerturbedUmbilic => GeneratingFamily::PerturbedUmbilic,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::norm;
    use proptest::prelude::*;

    /// Central finite-difference gradient of `eval_f`, the independent check
    /// against the hand-written field formulas.
    fn fd_gradient(fam: &GeneratingFamily, y: PhasePoint, h: f64) -> [f64; 2] {
        let f = |p: PhasePoint| fam.eval_f(p);
        [
            (f(PhasePoint::new(y.y1 + h, y.y2)) - f(PhasePoint::new(y.y1 - h, y.y2))) / (2.0 * h),
            (f(PhasePoint::new(y.y1, y.y2 + h)) - f(PhasePoint::new(y.y1, y.y2 - h))) / (2.0 * h),
        ]
    }

    fn all_families() -> Vec<GeneratingFamily> {
        vec![
            GeneratingFamily::Fold,
            GeneratingFamily::Cusp,
            GeneratingFamily::EllipticUmbilic,
            GeneratingFamily::PerturbedUmbilic,
            GeneratingFamily::bump_over(
                BaseKind::EllipticUmbilic,
                PhasePoint::new(0.2, -0.1),
                0.4,
                0.03,
            ),
        ]
    }

    #[test]
    fn eval_f_examples() {
        assert_eq!(
            GeneratingFamily::Cusp.eval_f(PhasePoint::new(1.0, 1.0)),
            1.75
        );
        assert_eq!(
            GeneratingFamily::EllipticUmbilic.eval_f(PhasePoint::new(0.0, 0.0)),
            0.0
        );
        // compact support: outside the disc the bump contributes nothing
        let fam = GeneratingFamily::bump_over(
            BaseKind::EllipticUmbilic,
            PhasePoint::new(0.0, 0.0),
            0.3,
            0.05,
        );
        let y = PhasePoint::new(0.3, 0.0);
        assert_eq!(fam.eval_f(y), GeneratingFamily::EllipticUmbilic.eval_f(y));
        let y = PhasePoint::new(1.0, 1.0);
        assert_eq!(fam.eval_f(y), GeneratingFamily::EllipticUmbilic.eval_f(y));
    }

    #[test]
    fn eval_field_examples() {
        let v = GeneratingFamily::Fold
            .eval_field(ParameterPoint::new(1.0, 0.0), PhasePoint::new(2.0, 3.0));
        assert_eq!((v.v1, v.v2), (3.0, 3.0));
        let v = GeneratingFamily::EllipticUmbilic
            .eval_field(ParameterPoint::new(0.0, 0.0), PhasePoint::new(1.0, 1.0));
        assert_eq!((v.v1, v.v2), (0.0, -2.0));
        // s3 of the quadratically perturbed family at x = (0,0)
        let v = GeneratingFamily::PerturbedUmbilic
            .eval_field(ParameterPoint::new(0.0, 0.0), PhasePoint::new(-1.0, 0.0));
        assert_eq!((v.v1, v.v2), (0.0, 0.0));
    }

    #[test]
    fn eval_jacobian_examples() {
        let j = GeneratingFamily::Fold
            .eval_jacobian(ParameterPoint::new(7.0, -3.0), PhasePoint::new(1.0, 5.0));
        assert_eq!((j.a, j.b, j.d), (2.0, 0.0, 1.0));
        let j = GeneratingFamily::EllipticUmbilic
            .eval_jacobian(ParameterPoint::new(1.0, 1.0), PhasePoint::new(0.0, 0.0));
        assert_eq!((j.a, j.b, j.d), (0.0, 0.0, 0.0));
        let j = GeneratingFamily::Cusp
            .eval_jacobian(ParameterPoint::new(0.3, 0.4), PhasePoint::new(0.0, 0.0));
        assert_eq!((j.a, j.b, j.d), (0.0, 0.0, 1.0));
    }

    #[test]
    fn gradient_consistency_100_points_per_family() {
        // deterministic low-discrepancy-ish sweep, 100+ points per family
        for fam in all_families() {
            for i in 0..120 {
                let t = i as f64;
                let y = PhasePoint::new(
                    2.3 * (0.37 * t).sin() + 0.1,
                    2.1 * (0.53 * t + 1.0).cos() - 0.05,
                );
                let x = ParameterPoint::new(0.7 * (0.11 * t).cos(), 0.9 * (0.23 * t).sin());
                let g = fd_gradient(&fam, y, 1e-5);
                let v = fam.eval_field(x, y);
                let want = [g[0] - x.x1, g[1] - x.x2];
                let scale = 1.0_f64.max(norm(want));
                assert!(
                    (v.v1 - want[0]).abs() / scale < 1e-6
                        && (v.v2 - want[1]).abs() / scale < 1e-6,
                    "fd gradient mismatch for {fam:?} at {y:?}: got ({}, {}), want {want:?}",
                    v.v1,
                    v.v2
                );
            }
        }
    }

    #[test]
    fn jacobian_matches_fd_of_field() {
        for fam in all_families() {
            for i in 0..40 {
                let t = i as f64;
                let y = PhasePoint::new(1.7 * (0.41 * t).sin(), 1.3 * (0.29 * t).cos());
                let x = ParameterPoint::new(0.2, -0.4);
                let h = 1e-6;
                let j = fam.eval_jacobian(x, y);
                let fpx = fam.eval_field(x, PhasePoint::new(y.y1 + h, y.y2));
                let fmx = fam.eval_field(x, PhasePoint::new(y.y1 - h, y.y2));
                let fpy = fam.eval_field(x, PhasePoint::new(y.y1, y.y2 + h));
                let fmy = fam.eval_field(x, PhasePoint::new(y.y1, y.y2 - h));
                let a = (fpx.v1 - fmx.v1) / (2.0 * h);
                let b = (fpy.v1 - fmy.v1) / (2.0 * h);
                let b2 = (fpx.v2 - fmx.v2) / (2.0 * h);
                let d = (fpy.v2 - fmy.v2) / (2.0 * h);
                for (got, want) in [(j.a, a), (j.b, b), (j.b, b2), (j.d, d)] {
                    assert!(
                        (got - want).abs() < 1e-5 * (1.0 + want.abs()),
                        "jacobian mismatch for {fam:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn polar_field_examples() {
        // theta = 0 on the positive x1-axis: the angle equation vanishes
        let (_, dtheta) = polar_field(ParameterPoint::new(1.3, 0.0), 0.8, 0.0).unwrap();
        assert_eq!(dtheta, 0.0);
        // x = 0, rho = 1, theta = pi/6: drho = cos(pi/2) = 0
        let (drho, _) =
            polar_field(ParameterPoint::new(0.0, 0.0), 1.0, std::f64::consts::FRAC_PI_6).unwrap();
        assert!(drho.abs() < 1e-15);
        assert_eq!(
            polar_field(ParameterPoint::new(1.0, 0.0), 0.0, 0.0),
            Err(FieldError::AngleUndefined)
        );
    }

    #[test]
    fn parse_family_round_trip() {
        fn table(pairs: Vec<(&'static str, &'static str)>) -> impl Fn(&str) -> Option<String> {
            move |k: &str| {
                pairs
                    .iter()
                    .find(|(key, _)| *key == k)
                    .map(|(_, v)| v.to_string())
            }
        }
        let get = table(vec![("family", "elliptic")]);
        assert_eq!(
            parse_family(&get).unwrap(),
            GeneratingFamily::EllipticUmbilic
        );
        let get = table(vec![
            ("family", "bump"),
            ("bump.base", "elliptic"),
            ("bump.center", "0.1,-0.2"),
            ("bump.sigma", "0.25"),
            ("bump.eps", "0.01"),
        ]);
        let fam = parse_family(&get).unwrap();
        assert_eq!(
            fam,
            GeneratingFamily::bump_over(
                BaseKind::EllipticUmbilic,
                PhasePoint::new(0.1, -0.2),
                0.25,
                0.01
            )
        );
        let get = table(vec![("family", "banana")]);
        assert!(parse_family(&get).is_err());
    }

    proptest! {
        /// Antipodal trajectory symmetry of the umbilic: the field is even,
        /// F(x, -y) = F(x, y), so t -> -y(-t) maps solutions to solutions.
        #[test]
        fn umbilic_field_is_even(
            x1 in -3.0..3.0f64, x2 in -3.0..3.0f64,
            y1 in -3.0..3.0f64, y2 in -3.0..3.0f64,
        ) {
            let x = ParameterPoint::new(x1, x2);
            let y = PhasePoint::new(y1, y2);
            let v = GeneratingFamily::EllipticUmbilic.eval_field(x, y);
            let w = GeneratingFamily::EllipticUmbilic.eval_field(x, y.antipode());
            prop_assert_eq!((v.v1, v.v2), (w.v1, w.v2));
        }

        /// Scaling covariance: F(x/l^2, y/l) = F(x, y)/l^2, exactly.
        #[test]
        fn umbilic_scaling_covariance(
            x1 in -2.0..2.0f64, x2 in -2.0..2.0f64,
            y1 in -2.0..2.0f64, y2 in -2.0..2.0f64,
            lambda in 0.5..2.0f64,
        ) {
            let v = GeneratingFamily::EllipticUmbilic
                .eval_field(ParameterPoint::new(x1, x2), PhasePoint::new(y1, y2));
            let w = GeneratingFamily::EllipticUmbilic.eval_field(
                ParameterPoint::new(x1 / (lambda * lambda), x2 / (lambda * lambda)),
                PhasePoint::new(y1 / lambda, y2 / lambda),
            );
            let l2 = lambda * lambda;
            prop_assert!((w.v1 - v.v1 / l2).abs() <= 1e-14 * (1.0 + v.v1.abs()));
            prop_assert!((w.v2 - v.v2 / l2).abs() <= 1e-14 * (1.0 + v.v2.abs()));
        }

        /// Exact polar form round-trips to the cartesian field.
        #[test]
        fn polar_round_trip(
            x1 in -2.0..2.0f64, x2 in -2.0..2.0f64,
            rho in 0.05..3.0f64, theta in 0.0..std::f64::consts::TAU,
        ) {
            let x = ParameterPoint::new(x1, x2);
            let (drho, dtheta) = polar_field(x, rho, theta).unwrap();
            let v1 = drho * theta.cos() - rho * dtheta * theta.sin();
            let v2 = drho * theta.sin() + rho * dtheta * theta.cos();
            let y = PhasePoint::from_polar(rho, theta);
            let v = GeneratingFamily::EllipticUmbilic.eval_field(x, y);
            let scale = 1.0_f64.max(v.norm());
            prop_assert!((v1 - v.v1).abs() / scale < 1e-12);
            prop_assert!((v2 - v.v2).abs() / scale < 1e-12);
        }

        /// Bump-perturbed field equals the base field outside the support.
        #[test]
        fn bump_compact_support(
            y1 in -3.0..3.0f64, y2 in -3.0..3.0f64,
            c1 in -0.5..0.5f64, c2 in -0.5..0.5f64,
            sigma in 0.05..0.3f64,
        ) {
            let fam = GeneratingFamily::bump_over(
                BaseKind::EllipticUmbilic, PhasePoint::new(c1, c2), sigma, 0.05);
            let y = PhasePoint::new(y1, y2);
            let d = (y1 - c1).hypot(y2 - c2);
            prop_assume!(d >= sigma);
            let x = ParameterPoint::new(0.3, -0.7);
            let v = fam.eval_field(x, y);
            let w = GeneratingFamily::EllipticUmbilic.eval_field(x, y);
            prop_assert_eq!((v.v1, v.v2), (w.v1, w.v2));
        }
    }
}

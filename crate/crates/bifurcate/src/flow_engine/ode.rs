//! Dormand-Prince 5(4) stepper for autonomous planar fields, with the
//! standard quartic dense-output interpolant. The embedded pair drives the
//! step-size controller; dense output feeds event localization.

type V2 = [f64; 2];

fn axpy(y: V2, a: f64, x: V2) -> V2 {
    [y[0] + a * x[0], y[1] + a * x[1]]
}

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// One accepted step with its dense-output polynomial.
#[derive(Clone, Debug)]
pub struct DenseStep {
    pub t0: f64,
    pub h: f64,
    pub y1: V2,
    /// Derivative at the step end (FSAL stage), reused as the next k1.
    pub k_end: V2,
    rcont: [V2; 5],
}

impl DenseStep {
    /// Interpolated solution at fraction `theta` in `[0, 1]` of the step.
    pub fn eval(&self, theta: f64) -> V2 {
        let th1 = 1.0 - theta;
        let mut out = [0.0; 2];
        for i in 0..2 {
            out[i] = self.rcont[0][i]
                + theta
                    * (self.rcont[1][i]
                        + th1
                            * (self.rcont[2][i]
                                + theta * (self.rcont[3][i] + th1 * self.rcont[4][i])));
        }
        out
    }
}

pub enum StepOutcome {
    Accepted { step: DenseStep, h_next: f64 },
    Rejected { h_next: f64 },
}

pub struct Dopri5<F: Fn(V2) -> V2> {
    pub f: F,
    pub abs_tol: f64,
    pub rel_tol: f64,
}

impl<F: Fn(V2) -> V2> Dopri5<F> {
    pub fn new(f: F, abs_tol: f64, rel_tol: f64) -> Self {
        Self { f, abs_tol, rel_tol }
    }

    /// Classical starting-step heuristic.
    pub fn initial_step(&self, y0: V2) -> f64 {
        let k1 = (self.f)(y0);
        let sc = |i: usize| self.abs_tol + self.rel_tol * y0[i].abs();
        let d0 = ((y0[0] / sc(0)).powi(2) + (y0[1] / sc(1)).powi(2)).sqrt();
        let d1 = ((k1[0] / sc(0)).powi(2) + (k1[1] / sc(1)).powi(2)).sqrt();
        let h0 = if d0 < 1e-5 || d1 < 1e-5 {
            1e-6
        } else {
            0.01 * d0 / d1
        };
        let y1 = axpy(y0, h0, k1);
        let k2 = (self.f)(y1);
        let d2 = (((k2[0] - k1[0]) / sc(0)).powi(2) + ((k2[1] - k1[1]) / sc(1)).powi(2)).sqrt()
            / h0;
        let m = d1.max(d2);
        let h1 = if !(m.is_finite() && m > 1e-15) {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / m).powf(0.2)
        };
        let h = (100.0 * h0).min(h1);
        if h.is_finite() && h > 0.0 {
            h
        } else {
            1e-6
        }
    }

    /// Attempt one step of size `h` from `(t, y)` with `k1 = f(y)` known.
    pub fn try_step(&self, t: f64, y: V2, k1: V2, h: f64) -> StepOutcome {
        let f = &self.f;
        let k2 = f(axpy(y, h * A21, k1));
        let mut y3 = y;
        for (a, k) in [(A31, k1), (A32, k2)] {
            y3 = axpy(y3, h * a, k);
        }
        let k3 = f(y3);
        let mut y4 = y;
        for (a, k) in [(A41, k1), (A42, k2), (A43, k3)] {
            y4 = axpy(y4, h * a, k);
        }
        let k4 = f(y4);
        let mut y5 = y;
        for (a, k) in [(A51, k1), (A52, k2), (A53, k3), (A54, k4)] {
            y5 = axpy(y5, h * a, k);
        }
        let k5 = f(y5);
        let mut y6 = y;
        for (a, k) in [(A61, k1), (A62, k2), (A63, k3), (A64, k4), (A65, k5)] {
            y6 = axpy(y6, h * a, k);
        }
        let k6 = f(y6);
        let mut y1 = y;
        for (b, k) in [(B1, k1), (B3, k3), (B4, k4), (B5, k5), (B6, k6)] {
            y1 = axpy(y1, h * b, k);
        }
        let k7 = f(y1);

        let mut err = 0.0;
        for i in 0..2 {
            let e = h
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = self.abs_tol + self.rel_tol * y[i].abs().max(y1[i].abs());
            err += (e / sc) * (e / sc);
        }
        let err = (err / 2.0).sqrt();

        let fac = 0.9 * err.max(1e-30).powf(-0.2);
        let fac = fac.clamp(0.2, 5.0);
        if err > 1.0 {
            return StepOutcome::Rejected {
                h_next: h * fac.min(1.0),
            };
        }
        let mut rcont = [[0.0; 2]; 5];
        for i in 0..2 {
            let ydiff = y1[i] - y[i];
            let bspl = h * k1[i] - ydiff;
            rcont[0][i] = y[i];
            rcont[1][i] = ydiff;
            rcont[2][i] = bspl;
            rcont[3][i] = ydiff - h * k7[i] - bspl;
            rcont[4][i] = h
                * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
        }
        StepOutcome::Accepted {
            step: DenseStep {
                t0: t,
                h,
                y1,
                k_end: k7,
                rcont,
            },
            h_next: h * fac,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Integrate dy = -y, exact solution e^{-t}; checks both the solution
    /// and the dense interpolant.
    #[test]
    fn exponential_decay_to_tolerance() {
        let solver = Dopri5::new(|y: V2| [-y[0], -y[1]], 1e-12, 1e-10);
        let mut t = 0.0;
        let mut y = [1.0, 2.0];
        let mut k1 = [-1.0, -2.0];
        let mut h = solver.initial_step(y);
        let mut steps = Vec::new();
        while t < 5.0 {
            h = h.min(5.0 - t);
            match solver.try_step(t, y, k1, h) {
                StepOutcome::Accepted { step, h_next } => {
                    t = step.t0 + step.h;
                    y = step.y1;
                    k1 = step.k_end;
                    steps.push(step);
                    h = h_next;
                }
                StepOutcome::Rejected { h_next } => h = h_next,
            }
        }
        assert!((y[0] - (-5.0f64).exp()).abs() < 1e-9);
        assert!((y[1] - 2.0 * (-5.0f64).exp()).abs() < 1e-9);
        for step in steps.iter().step_by(3) {
            for theta in [0.25, 0.5, 0.75] {
                let u = step.eval(theta);
                let want = (-(step.t0 + theta * step.h)).exp();
                assert!((u[0] - want).abs() < 1e-8, "dense output off: {u:?}");
            }
        }
    }
}

//! Dormand–Prince 5(4) embedded pair with PI step-size control.
//!
//! The error norm is the Euclidean norm of the embedded error estimate
//! divided by `abs_tol + rel_tol · max(‖y‖, ‖y_new‖)`. Using a Euclidean norm
//! keeps the accepted step sequence invariant under orthogonal changes of
//! coordinates, which is what makes unitary equivariance hold sample-wise.

use crate::linalg::norm;

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
// b − b̂ (fifth minus fourth order weights)
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

pub struct StepResult {
    pub y: Vec<f64>,
    /// Right-hand side at the new point (first stage of the next step).
    pub dy: Vec<f64>,
    pub err: Vec<f64>,
}

fn comb(y: &[f64], h: f64, terms: &[(f64, &[f64])]) -> Vec<f64> {
    let mut out = y.to_vec();
    for (c, k) in terms {
        let ch = c * h;
        for (o, v) in out.iter_mut().zip(k.iter()) {
            *o += ch * v;
        }
    }
    out
}

/// One Dormand–Prince step of size `h` from `(y, k1 = F(y))`.
pub fn dopri_step<F: Fn(&[f64]) -> Vec<f64>>(rhs: &F, y: &[f64], k1: &[f64], h: f64) -> StepResult {
    let k2 = rhs(&comb(y, h, &[(A21, k1)]));
    let k3 = rhs(&comb(y, h, &[(A31, k1), (A32, &k2)]));
    let k4 = rhs(&comb(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]));
    let k5 = rhs(&comb(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
    let k6 = rhs(&comb(y, h, &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]));
    let ynew = comb(y, h, &[(B1, k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
    let k7 = rhs(&ynew);
    let err = (0..y.len())
        .map(|i| h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]))
        .collect();
    StepResult { y: ynew, dy: k7, err }
}

/// Scaled error norm of a step.
pub fn error_norm(step: &StepResult, y_old: &[f64], abs_tol: f64, rel_tol: f64) -> f64 {
    let scale = abs_tol + rel_tol * norm(y_old).max(norm(&step.y));
    norm(&step.err) / scale
}

/// PI controller (Hairer–Wanner style exponents for a fifth-order pair).
#[derive(Clone, Debug)]
pub struct StepController {
    prev_err: f64,
}

impl Default for StepController {
    fn default() -> Self {
        Self { prev_err: 1e-4 }
    }
}

impl StepController {
    const SAFETY: f64 = 0.9;
    const ALPHA: f64 = 0.7 / 5.0;
    const BETA: f64 = 0.4 / 5.0;

    /// Factor to apply to `h` after an accepted step with normalized error `err`.
    pub fn accept(&mut self, err: f64) -> f64 {
        let err = err.max(1e-10);
        let fac = Self::SAFETY * err.powf(-Self::ALPHA) * self.prev_err.powf(Self::BETA);
        self.prev_err = err;
        fac.clamp(0.2, 5.0)
    }

    /// Factor after a rejected step.
    pub fn reject(&self, err: f64) -> f64 {
        (Self::SAFETY * err.powf(-1.0 / 5.0)).clamp(0.1, 0.9)
    }
}

/// Initial step guess (Hairer–Nørsett–Wanner heuristic).
pub fn initial_step<F: Fn(&[f64]) -> Vec<f64>>(
    rhs: &F,
    y: &[f64],
    dy: &[f64],
    abs_tol: f64,
    rel_tol: f64,
    max_step: f64,
) -> f64 {
    let sc = abs_tol + rel_tol * norm(y);
    let d0 = norm(y) / sc;
    let d1 = norm(dy) / sc;
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let y1 = comb(y, h0, &[(1.0, dy)]);
    let dy1 = rhs(&y1);
    let diff: Vec<f64> = dy1.iter().zip(dy).map(|(a, b)| a - b).collect();
    let d2 = norm(&diff) / sc / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(1.0 / 5.0)
    };
    (100.0 * h0).min(h1).min(max_step)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn integrate(rhs: impl Fn(&[f64]) -> Vec<f64>, y0: Vec<f64>, t_end: f64, tol: f64) -> Vec<f64> {
        let mut t = 0.0;
        let mut y = y0;
        let mut k = rhs(&y);
        let mut h = initial_step(&rhs, &y, &k, tol, tol, 1.0);
        let mut ctl = StepController::default();
        while t < t_end {
            h = h.min(t_end - t);
            let s = dopri_step(&rhs, &y, &k, h);
            let e = error_norm(&s, &y, tol, tol);
            if e <= 1.0 {
                t += h;
                y = s.y;
                k = s.dy;
                h *= ctl.accept(e);
            } else {
                h *= ctl.reject(e);
            }
        }
        y
    }

    #[test]
    fn harmonic_oscillator_period() {
        let y = integrate(|y| vec![y[1], -y[0]], vec![1.0, 0.0], 2.0 * std::f64::consts::PI, 1e-11);
        assert!((y[0] - 1.0).abs() < 1e-8 && y[1].abs() < 1e-8);
    }

    #[test]
    fn exponential_growth() {
        let y = integrate(|y| vec![y[0]], vec![1.0], 3.0, 1e-12);
        assert!((y[0] - 3f64.exp()).abs() < 1e-9 * 3f64.exp());
    }

    #[test]
    fn fifth_order_convergence() {
        let rhs = |y: &[f64]| vec![-y[0] * y[0]];
        let exact = 1.0 / (1.0 + 0.5);
        let errs: Vec<f64> = [0.1, 0.05]
            .iter()
            .map(|&h| {
                let mut y = vec![1.0];
                for _ in 0..((0.5 / h) as usize) {
                    let k = rhs(&y);
                    y = dopri_step(&rhs, &y, &k, h).y;
                }
                (y[0] - exact).abs()
            })
            .collect();
        let order = (errs[0] / errs[1]).log2();
        assert!(order > 4.5, "observed order {order}");
    }
}

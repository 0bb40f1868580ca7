//! Lorentzian-plus-constant least squares.
//!
//! Trust-region-style damped Gauss-Newton (Levenberg-Marquardt damping on the
//! normal equations) with the analytic Jacobian. Parameters are
//! `(height, center, fwhm, offset)`; convergence is declared at relative
//! parameter change below 1e-8 or 200 iterations.

/// `m(x) = h (g/2)^2 / ((x - x0)^2 + (g/2)^2) + c`
pub fn lorentzian(x: f64, height: f64, center: f64, fwhm: f64, offset: f64) -> f64 {
    let hw = fwhm / 2.0;
    let d = (x - center) * (x - center) + hw * hw;
    height * hw * hw / d + offset
}

#[derive(Debug, Clone)]
pub struct FitResult {
    /// `(height, center, fwhm, offset)` at the optimum.
    pub params: [f64; 4],
    /// Parameter covariance from the residual variance and `(J^T J)^{-1}`;
    /// `None` when the normal matrix is singular or dof <= 0.
    pub covariance: Option<[[f64; 4]; 4]>,
    /// Sum of squared residuals at the optimum.
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl FitResult {
    /// One-sigma parameter uncertainties (zeros when covariance is missing).
    pub fn uncertainties(&self) -> [f64; 4] {
        match &self.covariance {
            Some(c) => [0, 1, 2, 3].map(|i| c[i][i].max(0.0).sqrt()),
            None => [0.0; 4],
        }
    }
}

const MAX_ITERATIONS: usize = 200;
const RELATIVE_TOLERANCE: f64 = 1e-8;

/// Fit the four-parameter model to `(x, y)` starting from `init`.
pub fn fit_lorentzian(x: &[f64], y: &[f64], init: [f64; 4]) -> FitResult {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    if n <= 4 {
        return FitResult {
            params: init,
            covariance: None,
            cost: f64::INFINITY,
            iterations: 0,
            converged: false,
        };
    }

    let mut params = init;
    params[2] = params[2].abs().max(f64::MIN_POSITIVE);
    let mut cost = residual_cost(x, y, &params);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let (jtj, jtr) = normal_equations(x, y, &params);

        // Inner damping loop: inflate lambda until a step reduces the cost.
        let mut stepped = false;
        for _ in 0..12 {
            let mut damped = jtj;
            for i in 0..4 {
                damped[i][i] += lambda * jtj[i][i].max(1e-300);
            }
            let Some(delta) = solve4(damped, [-jtr[0], -jtr[1], -jtr[2], -jtr[3]]) else {
                lambda *= 4.0;
                continue;
            };
            let mut trial = [0.0; 4];
            for i in 0..4 {
                trial[i] = params[i] + delta[i];
            }
            trial[2] = trial[2].abs().max(f64::MIN_POSITIVE);
            let trial_cost = residual_cost(x, y, &trial);
            if trial_cost.is_finite() && trial_cost < cost {
                let rel_change = (0..4)
                    .map(|i| (trial[i] - params[i]).abs() / (params[i].abs() + 1e-12))
                    .fold(0.0_f64, f64::max);
                params = trial;
                cost = trial_cost;
                lambda = (lambda / 3.0).max(1e-12);
                stepped = true;
                if rel_change < RELATIVE_TOLERANCE {
                    converged = true;
                }
                break;
            }
            lambda *= 4.0;
        }
        if converged || !stepped {
            // No downhill step at any damping: treat the current point as the
            // optimum; it converged if the gradient is already tiny.
            if !stepped {
                let grad_norm = jtr.iter().map(|g| g * g).sum::<f64>().sqrt();
                converged = grad_norm <= 1e-10 * (1.0 + cost);
            }
            break;
        }
    }

    let covariance = covariance_at(x, y, &params, cost);
    FitResult {
        params,
        covariance,
        cost,
        iterations,
        converged,
    }
}

fn residual_cost(x: &[f64], y: &[f64], p: &[f64; 4]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(&xi, &yi)| {
            let r = lorentzian(xi, p[0], p[1], p[2], p[3]) - yi;
            r * r
        })
        .sum()
}

/// Analytic Jacobian accumulated into `J^T J` and `J^T r`.
fn normal_equations(x: &[f64], y: &[f64], p: &[f64; 4]) -> ([[f64; 4]; 4], [f64; 4]) {
    let (h, x0, g, c) = (p[0], p[1], p[2], p[3]);
    let a = g / 2.0;
    let a2 = a * a;
    let mut jtj = [[0.0; 4]; 4];
    let mut jtr = [0.0; 4];
    for (&xi, &yi) in x.iter().zip(y) {
        let dx = xi - x0;
        let d = dx * dx + a2;
        let l = a2 / d;
        let r = h * l + c - yi;
        let row = [
            l,                         // d/dh
            2.0 * h * l * dx / d,      // d/dx0
            h * a * (1.0 - l) / d,     // d/dg
            1.0,                       // d/dc
        ];
        for i in 0..4 {
            jtr[i] += row[i] * r;
            for j in i..4 {
                jtj[i][j] += row[i] * row[j];
            }
        }
    }
    for i in 0..4 {
        for j in 0..i {
            jtj[i][j] = jtj[j][i];
        }
    }
    (jtj, jtr)
}

fn covariance_at(x: &[f64], y: &[f64], p: &[f64; 4], cost: f64) -> Option<[[f64; 4]; 4]> {
    let dof = x.len().checked_sub(4)?;
    if dof == 0 {
        return None;
    }
    let (jtj, _) = normal_equations(x, y, p);
    let s2 = cost / dof as f64;
    let mut cov = [[0.0; 4]; 4];
    for col in 0..4 {
        let mut e = [0.0; 4];
        e[col] = 1.0;
        let solved = solve4(jtj, e)?;
        for row in 0..4 {
            cov[row][col] = s2 * solved[row];
        }
    }
    Some(cov)
}

/// Gaussian elimination with partial pivoting for the 4x4 normal system.
fn solve4(mut a: [[f64; 4]; 4], mut b: [f64; 4]) -> Option<[f64; 4]> {
    for col in 0..4 {
        let pivot = (col..4).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..4 {
            let f = a[row][col] / a[col][col];
            for k in col..4 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut out = [0.0; 4];
    for row in (0..4).rev() {
        let mut s = b[row];
        for k in row + 1..4 {
            s -= a[row][k] * out[k];
        }
        out[row] = s / a[row][row];
    }
    out.iter().all(|v| v.is_finite()).then_some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_noiseless_lorentzian() {
        let truth = [7.5, 114_500.0, 1_200.0, 0.3];
        let x: Vec<f64> = (0..400).map(|i| 108_000.0 + 30.0 * i as f64).collect();
        let y: Vec<f64> = x.iter().map(|&xi| lorentzian(xi, truth[0], truth[1], truth[2], truth[3])).collect();
        let fit = fit_lorentzian(&x, &y, [5.0, 114_000.0, 2_000.0, 0.0]);
        assert!(fit.converged);
        for i in 0..4 {
            assert!(
                (fit.params[i] - truth[i]).abs() <= 1e-6 * (1.0 + truth[i].abs()),
                "param {i}: {} vs {}",
                fit.params[i],
                truth[i]
            );
        }
        assert!(fit.cost < 1e-12);
    }

    #[test]
    fn center_and_width_insensitive_to_flat_offset() {
        let x: Vec<f64> = (0..300).map(|i| -6_000.0 + 40.0 * i as f64).collect();
        let y0: Vec<f64> = x.iter().map(|&xi| lorentzian(xi, 4.0, 250.0, 1_100.0, 0.0)).collect();
        let y1: Vec<f64> = y0.iter().map(|v| v + 5.0).collect();
        let a = fit_lorentzian(&x, &y0, [3.0, 0.0, 1_500.0, 0.0]);
        let b = fit_lorentzian(&x, &y1, [3.0, 0.0, 1_500.0, 4.0]);
        assert!((a.params[1] - b.params[1]).abs() < 1e-6 * 1_100.0);
        assert!((a.params[2] - b.params[2]).abs() / a.params[2] < 1e-6);
        assert!((b.params[3] - a.params[3] - 5.0).abs() < 1e-6);
    }

    #[test]
    fn covariance_scales_with_noise() {
        // Deterministic pseudo-noise; covariance should be finite and positive.
        let x: Vec<f64> = (0..500).map(|i| i as f64 * 25.0).collect();
        let y: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(i, &xi)| {
                lorentzian(xi, 6.0, 6_000.0, 1_200.0, 1.0) + 0.05 * ((i * 2_654_435_761) % 1000) as f64 / 1000.0
            })
            .collect();
        let fit = fit_lorentzian(&x, &y, [5.0, 5_500.0, 1_500.0, 0.5]);
        assert!(fit.converged);
        let sig = fit.uncertainties();
        assert!(sig.iter().all(|&s| s.is_finite() && s > 0.0));
    }

    #[test]
    fn degenerate_input_flagged() {
        let fit = fit_lorentzian(&[1.0, 2.0], &[0.0, 0.0], [1.0, 0.0, 1.0, 0.0]);
        assert!(!fit.converged);
    }
}

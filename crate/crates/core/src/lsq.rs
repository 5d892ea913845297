//! Levenberg–Marquardt minimization of `½‖r(p)‖²`.
//!
//! Damping uses Marquardt's diagonal scaling and Nielsen's λ update.
//! Jacobians are either supplied or formed by central differences.
//! Covariance is `(JᵀJ)⁻¹` at the optimum via a thresholded SVD; singular
//! directions are flagged and their variances inflated rather than dropped.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Relative reduction of the cost below which the fit is converged.
    pub ftol: f64,
    /// Relative step size below which the fit is converged.
    pub xtol: f64,
    /// Infinity norm of the scaled gradient below which the fit is converged.
    pub gtol: f64,
    pub initial_lambda: f64,
    /// Singular values below `rcond·σ_max` count as rank deficiency.
    pub rcond: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            max_iterations: 500,
            ftol: 1e-15,
            xtol: 1e-12,
            gtol: 1e-14,
            initial_lambda: 1e-3,
            rcond: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    CostConverged,
    StepConverged,
    GradientConverged,
    /// Residual vector is (numerically) zero.
    ExactFit,
    MaxIterations,
    /// Residuals evaluated to a non-finite value at the starting point.
    NonFinite,
}

#[derive(Debug, Clone)]
pub struct LmReport {
    pub params: Vec<f64>,
    pub residuals: Vec<f64>,
    /// `½‖r‖²`.
    pub cost: f64,
    pub iterations: usize,
    pub termination: Termination,
    /// `(JᵀJ)⁻¹` at the optimum, unscaled.
    pub covariance: DMatrix<f64>,
    pub rank_deficient: bool,
}

impl LmReport {
    pub fn converged(&self) -> bool {
        !matches!(
            self.termination,
            Termination::MaxIterations | Termination::NonFinite
        )
    }

    pub fn residual_norm(&self) -> f64 {
        (2.0 * self.cost).sqrt()
    }

    /// Residual variance `‖r‖²/(m − p)`, for rescaling the covariance when
    /// the residuals are not already normalized by known errors.
    pub fn residual_variance(&self) -> f64 {
        let dof = self
            .residuals
            .len()
            .saturating_sub(self.params.len())
            .max(1);
        2.0 * self.cost / dof as f64
    }

    /// Standard errors `√diag(cov)·scale`.
    pub fn std_errors(&self, scale: f64) -> Vec<f64> {
        (0..self.params.len())
            .map(|i| (self.covariance[(i, i)] * scale).max(0.0).sqrt())
            .collect()
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Central-difference Jacobian.
pub fn numerical_jacobian<F>(f: &F, p: &[f64], r0_len: usize) -> DMatrix<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let mut jac = DMatrix::zeros(r0_len, p.len());
    let mut work = p.to_vec();
    for j in 0..p.len() {
        let h = 1e-6 * p[j].abs().max(1.0);
        work[j] = p[j] + h;
        let fp = f(&work);
        work[j] = p[j] - h;
        let fm = f(&work);
        work[j] = p[j];
        for i in 0..r0_len {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    jac
}

/// Minimizes with a finite-difference Jacobian.
pub fn minimize<F>(residuals: F, x0: &[f64], opts: &LmOptions) -> LmReport
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let jac = |p: &[f64], m: usize| numerical_jacobian(&residuals, p, m);
    minimize_with_jacobian(&residuals, jac, x0, opts)
}

pub fn minimize_with_jacobian<F, J>(
    residuals: F,
    jacobian: J,
    x0: &[f64],
    opts: &LmOptions,
) -> LmReport
where
    F: Fn(&[f64]) -> Vec<f64>,
    J: Fn(&[f64], usize) -> DMatrix<f64>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut r = residuals(&x);
    let m = r.len();
    let mut cost = 0.5 * norm2(&r);
    if !cost.is_finite() {
        return LmReport {
            params: x,
            residuals: r,
            cost,
            iterations: 0,
            termination: Termination::NonFinite,
            covariance: DMatrix::from_element(n, n, f64::INFINITY),
            rank_deficient: true,
        };
    }

    let mut lambda = opts.initial_lambda;
    let mut nu = 2.0;
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;
    let mut jac = jacobian(&x, m);

    'outer: while iterations < opts.max_iterations {
        iterations += 1;
        if cost == 0.0 {
            termination = Termination::ExactFit;
            break;
        }
        let rv = DVector::from_column_slice(&r);
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * &rv;
        let diag: Vec<f64> = (0..n).map(|i| jtj[(i, i)].max(1e-300)).collect();
        let g_scaled = (0..n)
            .map(|i| (g[i] / diag[i].sqrt()).abs())
            .fold(0.0, f64::max);
        if g_scaled <= opts.gtol * (2.0 * cost).sqrt().max(1e-300) {
            termination = Termination::GradientConverged;
            break;
        }

        // Inner loop: raise λ until a step reduces the cost.
        loop {
            let mut a = jtj.clone();
            for i in 0..n {
                a[(i, i)] += lambda * diag[i];
            }
            let step = match a.clone().cholesky() {
                Some(ch) => ch.solve(&(-&g)),
                None => match a.svd(true, true).solve(&(-&g), 1e-300) {
                    Ok(s) => s,
                    Err(_) => {
                        termination = Termination::StepConverged;
                        break 'outer;
                    }
                },
            };
            let x_new: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let r_new = residuals(&x_new);
            let cost_new = 0.5 * norm2(&r_new);
            // Predicted reduction of the local quadratic model.
            let predicted = -(step.dot(&g) + 0.5 * step.dot(&(&jtj * &step)));
            let actual = cost - cost_new;
            if cost_new.is_finite() && actual > 0.0 {
                let rho = if predicted > 0.0 {
                    actual / predicted
                } else {
                    1.0
                };
                lambda *= (1.0f64 / 3.0).max(1.0 - (2.0 * rho - 1.0).powi(3));
                nu = 2.0;
                let step_norm = step.norm();
                let x_norm = DVector::from_column_slice(&x).norm();
                x = x_new;
                r = r_new;
                let rel = actual / cost;
                cost = cost_new;
                jac = jacobian(&x, m);
                if rel < opts.ftol {
                    termination = Termination::CostConverged;
                    break 'outer;
                }
                if step_norm <= opts.xtol * (x_norm + opts.xtol) {
                    termination = Termination::StepConverged;
                    break 'outer;
                }
                break;
            }
            lambda *= nu;
            nu *= 2.0;
            if !lambda.is_finite() || lambda > 1e300 {
                termination = Termination::StepConverged;
                break 'outer;
            }
            if predicted.abs() <= 1e-30 * cost.max(1e-300) {
                termination = Termination::CostConverged;
                break 'outer;
            }
        }
    }

    let (covariance, rank_deficient) = covariance_from(&jac, opts.rcond);
    LmReport {
        params: x,
        residuals: r,
        cost,
        iterations,
        termination,
        covariance,
        rank_deficient,
    }
}

/// `(JᵀJ)⁻¹` with singular values below `rcond·σ_max` clamped up to that
/// threshold (which inflates the corresponding variances).
fn covariance_from(jac: &DMatrix<f64>, rcond: f64) -> (DMatrix<f64>, bool) {
    let n = jac.ncols();
    let svd = jac.clone().svd(false, true);
    let v_t = match svd.v_t {
        Some(v) => v,
        None => return (DMatrix::from_element(n, n, f64::INFINITY), true),
    };
    let s = &svd.singular_values;
    let s_max = s.iter().cloned().fold(0.0, f64::max);
    let floor = (rcond * s_max).max(f64::MIN_POSITIVE);
    let mut deficient = s.len() < n;
    let mut cov = DMatrix::zeros(n, n);
    for (k, &sk) in s.iter().enumerate() {
        let sv = if sk < floor {
            deficient = true;
            floor
        } else {
            sk
        };
        let row = v_t.row(k);
        cov += row.transpose() * row / (sv * sv);
    }
    (cov, deficient)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |p: &[f64]| vec![10.0 * (p[1] - p[0] * p[0]), 1.0 - p[0]];
        let rep = minimize(f, &[-1.2, 1.0], &LmOptions::default());
        assert!(rep.converged());
        assert!((rep.params[0] - 1.0).abs() < 1e-8);
        assert!((rep.params[1] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn exponential_fit_recovers_parameters() {
        let t: Vec<f64> = (0..30).map(|k| 0.2 * k as f64).collect();
        let y: Vec<f64> = t.iter().map(|&t| 3.0 * (-t / 1.7).exp()).collect();
        let f = |p: &[f64]| {
            t.iter()
                .zip(&y)
                .map(|(&t, &y)| p[0] * (-t / p[1]).exp() - y)
                .collect::<Vec<_>>()
        };
        let rep = minimize(f, &[1.0, 0.5], &LmOptions::default());
        assert!((rep.params[0] - 3.0).abs() < 1e-9);
        assert!((rep.params[1] - 1.7).abs() < 1e-9);
        assert!(!rep.rank_deficient);
    }

    #[test]
    fn linear_covariance_matches_normal_equations() {
        // r = a + b x − y: cov = (XᵀX)⁻¹
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 2.9, 5.1, 7.0];
        let f = |p: &[f64]| {
            x.iter()
                .zip(&y)
                .map(|(&x, &y)| p[0] + p[1] * x - y)
                .collect::<Vec<_>>()
        };
        let rep = minimize(f, &[0.0, 0.0], &LmOptions::default());
        // XᵀX = [[4, 6], [6, 14]], det = 20
        assert!((rep.covariance[(0, 0)] - 14.0 / 20.0).abs() < 1e-8);
        assert!((rep.covariance[(1, 1)] - 4.0 / 20.0).abs() < 1e-8);
        assert!((rep.covariance[(0, 1)] + 6.0 / 20.0).abs() < 1e-8);
    }

    #[test]
    fn degenerate_direction_is_flagged() {
        // Only p0 + p1 is identified.
        let f = |p: &[f64]| vec![p[0] + p[1] - 1.0, 2.0 * (p[0] + p[1]) - 2.0];
        let rep = minimize(f, &[0.3, 0.1], &LmOptions::default());
        assert!(rep.rank_deficient);
        assert!(rep.covariance[(0, 0)] > 1e6);
    }
}

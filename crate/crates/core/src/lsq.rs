//! Damped least squares (Levenberg-Marquardt) with covariance estimation.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A residual vector `r(p)` to be minimized in the sum-of-squares sense.
pub trait LeastSquares {
    fn residuals(&self, params: &[f64]) -> Vec<f64>;

    /// Typical magnitude of each parameter, used to size finite-difference steps
    /// and the relative step convergence test.
    fn param_scales(&self, params: &[f64]) -> Vec<f64> {
        params.iter().map(|p| p.abs().max(1e-3)).collect()
    }

    /// Jacobian `dr_i / dp_j`. Defaults to central differences with relative step
    /// `step` times the parameter scale.
    fn jacobian(&self, params: &[f64], step: f64) -> DMatrix<f64> {
        central_difference_jacobian(self, params, step)
    }
}

pub fn central_difference_jacobian<P: LeastSquares + ?Sized>(
    problem: &P,
    params: &[f64],
    step: f64,
) -> DMatrix<f64> {
    let scales = problem.param_scales(params);
    let mut columns = Vec::with_capacity(params.len());
    let mut p = params.to_vec();
    for j in 0..params.len() {
        let h = step * scales[j];
        p[j] = params[j] + h;
        let up = problem.residuals(&p);
        p[j] = params[j] - h;
        let down = problem.residuals(&p);
        p[j] = params[j];
        columns.push(DVector::from_iterator(up.len(), up.iter().zip(&down).map(|(u, d)| (u - d) / (2.0 * h))));
    }
    DMatrix::from_columns(&columns)
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct LmOptions {
    pub max_iter: usize,
    /// Relative parameter step below which the iteration stops.
    pub xtol: f64,
    /// Gradient infinity norm below which the iteration stops.
    pub gtol: f64,
    /// Relative finite-difference step.
    pub jacobian_step: f64,
    pub initial_lambda: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self { max_iter: 200, xtol: 1e-10, gtol: 1e-8, jacobian_step: 1e-6, initial_lambda: 1e-3 }
    }
}

#[derive(Debug, Clone)]
pub struct LmSolution {
    pub params: Vec<f64>,
    pub residuals: Vec<f64>,
    pub jacobian: DMatrix<f64>,
    /// Sum of squared residuals.
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).sum()
}

/// Minimizes `sum r_i(p)^2` from `x0`. Returns the best point reached; check
/// `converged` before trusting it.
pub fn minimize<P: LeastSquares + ?Sized>(problem: &P, x0: &[f64], opts: &LmOptions) -> LmSolution {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut r = problem.residuals(&x);
    let mut cost = sum_sq(&r);
    let mut lambda = opts.initial_lambda;
    let mut converged = false;
    let mut iterations = 0;
    let mut jac = problem.jacobian(&x, opts.jacobian_step);

    'outer: while iterations < opts.max_iter {
        iterations += 1;
        let rv = DVector::from_column_slice(&r);
        let grad = jac.transpose() * &rv;
        if grad.amax() < opts.gtol {
            converged = true;
            break;
        }
        let jtj = jac.transpose() * &jac;
        loop {
            let mut damped = jtj.clone();
            for i in 0..n {
                damped[(i, i)] += lambda * jtj[(i, i)].max(1e-300);
            }
            let step = match damped.clone().cholesky() {
                Some(ch) => ch.solve(&(-&grad)),
                None => match damped.svd(true, true).solve(&(-&grad), 1e-300) {
                    Ok(s) => s,
                    Err(_) => {
                        lambda *= 10.0;
                        if lambda > 1e16 {
                            converged = true;
                            break 'outer;
                        }
                        continue;
                    }
                },
            };
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let r_trial = problem.residuals(&trial);
            let cost_trial = sum_sq(&r_trial);
            if cost_trial.is_finite() && cost_trial <= cost {
                let scales = problem.param_scales(&x);
                let small = step
                    .iter()
                    .zip(&x)
                    .zip(&scales)
                    .all(|((s, xi), sc)| s.abs() <= opts.xtol * xi.abs().max(*sc));
                x = trial;
                r = r_trial;
                cost = cost_trial;
                lambda = (lambda / 10.0).max(1e-15);
                jac = problem.jacobian(&x, opts.jacobian_step);
                if small {
                    converged = true;
                    break 'outer;
                }
                break;
            }
            lambda *= 10.0;
            if lambda > 1e16 {
                // no decrease is possible at working precision
                converged = true;
                break 'outer;
            }
        }
    }
    LmSolution { params: x, residuals: r, jacobian: jac, cost, iterations, converged }
}

/// `(J^T J)^-1` computed on column-normalized `J`. Fails when the columns are
/// linearly dependent to within `rcond`.
pub fn covariance(jacobian: &DMatrix<f64>, rcond: f64) -> Result<DMatrix<f64>> {
    let n = jacobian.ncols();
    let norms: Vec<f64> = (0..n).map(|j| jacobian.column(j).norm()).collect();
    if let Some(j) = norms.iter().position(|&v| v == 0.0 || !v.is_finite()) {
        return Err(Error::RankDeficient(format!("parameter {j} does not affect the residuals")));
    }
    let mut scaled = jacobian.clone();
    for (j, &s) in norms.iter().enumerate() {
        scaled.column_mut(j).scale_mut(1.0 / s);
    }
    let svd = scaled.svd(false, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin <= rcond * smax {
        return Err(Error::RankDeficient(format!(
            "normalized Jacobian condition number {:.3e} exceeds {:.1e}",
            smax / smin,
            1.0 / rcond
        )));
    }
    let v_t = svd.v_t.expect("requested");
    let inv_s2 = svd.singular_values.map(|s| 1.0 / (s * s));
    let inner = v_t.transpose() * DMatrix::from_diagonal(&inv_s2) * &v_t;
    let mut cov = inner;
    for i in 0..n {
        for j in 0..n {
            cov[(i, j)] /= norms[i] * norms[j];
        }
    }
    // exact symmetry
    let sym = (&cov + cov.transpose()) * 0.5;
    Ok(sym)
}

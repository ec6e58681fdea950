//! Damped Gauss-Newton (Levenberg-Marquardt) iterations.

use nalgebra::{DMatrix, DVector};

use super::model::JointProblem;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct LmSettings {
    pub max_iter: usize,
    pub xtol: f64,
    pub gtol: f64,
    pub initial_damping: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum LmStop {
    Converged,
    MaxIterations,
    Stalled,
}

#[derive(Debug, Clone)]
pub(crate) struct LmOutcome {
    pub x: DVector<f64>,
    pub iterations: usize,
    pub stop: LmStop,
}

const DAMPING_UP: f64 = 3.0;
const DAMPING_DOWN: f64 = 3.0;
const DAMPING_MAX: f64 = 1e20;

fn cost(r: &DVector<f64>) -> f64 {
    0.5 * r.norm_squared()
}

/// Parameters sitting on their lower bound with the gradient pushing
/// them further out.
fn active_bounds(x: &DVector<f64>, g: &DVector<f64>, lb: &[f64]) -> Vec<bool> {
    (0..x.len()).map(|j| x[j] <= lb[j] && g[j] > 0.0).collect()
}

/// Largest cosine between the residual vector and a Jacobian column,
/// skipping parameters held on a bound.
fn gradient_cosine(jac: &DMatrix<f64>, r: &DVector<f64>, active: &[bool]) -> f64 {
    let rn = r.norm();
    if rn == 0.0 {
        return 0.0;
    }
    let g = jac.transpose() * r;
    (0..jac.ncols())
        .filter(|&j| !active[j])
        .map(|j| {
            let cn = jac.column(j).norm();
            if cn == 0.0 {
                0.0
            } else {
                g[j].abs() / (cn * rn)
            }
        })
        .fold(0.0, f64::max)
}

fn converged_at(problem: &JointProblem, x: &DVector<f64>, r: &DVector<f64>, lb: &[f64], gtol: f64) -> bool {
    let jac = problem.jacobian(x);
    let g = jac.transpose() * r;
    gradient_cosine(&jac, r, &active_bounds(x, &g, lb)) < gtol
}

pub(crate) fn minimize(problem: &JointProblem, x0: DVector<f64>, s: &LmSettings) -> LmOutcome {
    let mut x = x0;
    problem.project(&mut x);
    let mut r = problem.residuals(&x);
    let mut f = cost(&r);
    let mut lambda = s.initial_damping;
    let mut iterations = 0;
    let lb = problem.lower_bounds();

    loop {
        if iterations >= s.max_iter {
            return LmOutcome { x, iterations, stop: LmStop::MaxIterations };
        }
        iterations += 1;
        let jac = problem.jacobian(&x);
        let g = jac.transpose() * &r;
        let mut a = jac.transpose() * &jac;
        let mut g = g;
        let active = active_bounds(&x, &g, &lb);
        let diag_floor = a.diagonal().max() * 1e-15;
        for j in (0..x.len()).filter(|&j| active[j]) {
            a.row_mut(j).fill(0.0);
            a.column_mut(j).fill(0.0);
            a[(j, j)] = 1.0;
            g[j] = 0.0;
        }

        let mut accepted = None;
        while lambda <= DAMPING_MAX {
            let mut m = a.clone();
            for i in 0..m.nrows() {
                m[(i, i)] += lambda * a[(i, i)].max(diag_floor);
            }
            let Some(chol) = m.cholesky() else {
                lambda *= DAMPING_UP;
                continue;
            };
            let step = chol.solve(&(-&g));
            let mut trial = &x + &step;
            problem.project(&mut trial);
            let r_trial = problem.residuals(&trial);
            let f_trial = cost(&r_trial);
            if f_trial.is_finite() && f_trial <= f {
                let dx = (&trial - &x).norm();
                accepted = Some((trial, r_trial, f_trial, dx));
                lambda = (lambda / DAMPING_DOWN).max(1e-12);
                break;
            }
            lambda *= DAMPING_UP;
        }

        let Some((trial, r_trial, f_trial, dx)) = accepted else {
            // no descent direction left: done if the gradient vanishes
            let stop = if gradient_cosine(&jac, &r, &active) < s.gtol {
                LmStop::Converged
            } else {
                LmStop::Stalled
            };
            return LmOutcome { x, iterations, stop };
        };
        let small_step = dx <= s.xtol * (x.norm() + s.xtol);
        x = trial;
        r = r_trial;
        f = f_trial;
        let exact = f <= f64::EPSILON.powi(2) * (x.len() as f64);
        if exact || (small_step && converged_at(problem, &x, &r, &lb, s.gtol)) {
            return LmOutcome { x, iterations, stop: LmStop::Converged };
        }
    }
}

//! Finite-difference and identity checks for the kernels, the forward
//! residual and the reduced derivatives.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::Result;
use crate::forms;
use crate::forward::{initial_residual, space_time_residual, step_residual};
use crate::mesh::{Control, Discretization, FieldVector, Trajectory, PHI, UX, UY};
use crate::model::ModelParams;
use crate::reduced::Problem;
use crate::sensitivity::{solve_adjoint, solve_tangent};

/// Errors of a central-difference sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct FdReport {
    pub steps: Vec<f64>,
    pub errors: Vec<f64>,
    pub min_rel_error: f64,
    /// Slope of `log(error)` against `log(step)` where truncation dominates.
    pub order: Option<f64>,
    /// The largest step already shows no truncation error: the quotient is
    /// exact up to round-off (the checked quantity is polynomial of low degree).
    pub exact: bool,
}

/// Errors at or below this are treated as round-off.
pub const ROUNDOFF_FLOOR: f64 = 1e-10;

impl FdReport {
    pub fn from_errors(steps: Vec<f64>, errors: Vec<f64>) -> Self {
        let min_rel_error = errors.iter().cloned().fold(f64::INFINITY, f64::min);
        let exact = errors.first().is_some_and(|e| *e <= ROUNDOFF_FLOOR);
        let order = if exact { None } else { estimate_order(&steps, &errors) };
        FdReport {
            steps,
            errors,
            min_rel_error,
            order,
            exact,
        }
    }

    /// `min_rel_error <= tol` and either exactness or an order within `order_range`.
    pub fn passes(&self, tol: f64, order_range: Option<(f64, f64)>) -> bool {
        let order_ok = match order_range {
            None => true,
            Some((lo, hi)) => self.exact || self.order.is_some_and(|p| p >= lo && p <= hi),
        };
        self.min_rel_error <= tol && order_ok
    }
}

fn estimate_order(steps: &[f64], errors: &[f64]) -> Option<f64> {
    let argmin = errors
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)?;
    let floor = errors[argmin];
    // leading points that clearly sit above the round-off plateau
    let leading = |factor: f64| (0..=argmin).take_while(|&i| errors[i] >= factor * floor).count();
    let last = [100.0, 10.0]
        .into_iter()
        .map(leading)
        .find(|&count| count >= 2)
        .map_or(argmin, |count| count - 1);
    if last < 1 {
        return None;
    }
    let pts: Vec<(f64, f64)> = (0..=last)
        .filter(|&i| errors[i] > 0.0)
        .map(|i| (steps[i].ln(), errors[i].ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / n, sy / n);
    let (num, den) = pts
        .iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + (x - mx) * (y - my), b + (x - mx) * (x - mx)));
    Some(num / den)
}

/// Half-decade sweep from `1e-2` down to `1e-7`.
pub fn default_steps() -> Vec<f64> {
    (0..=10).map(|k| 10f64.powf(-2.0 - 0.5 * k as f64)).collect()
}

fn rel(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Random field with displacements of size `u_scale` and phase-field in `[0, 1]`.
pub fn random_field(disc: &Discretization, rng: &mut impl Rng, u_scale: f64) -> FieldVector {
    let mut f = FieldVector::zeros(disc.mesh());
    for node in 0..disc.mesh().num_nodes() {
        f.set(node, UX, u_scale * rng.gen_range(-1.0..1.0));
        f.set(node, UY, u_scale * rng.gen_range(-1.0..1.0));
        f.set(node, PHI, rng.gen_range(0.0..1.0));
    }
    f
}

pub fn random_control(disc: &Discretization, rng: &mut impl Rng, scale: f64) -> Control {
    let len = disc.mesh().neumann_nodes().len();
    Control::from_vec((0..len).map(|_| scale * rng.gen_range(-1.0..1.0)).collect())
}

fn shifted(u: &FieldVector, s: f64, du: &FieldVector) -> FieldVector {
    let mut v = u.clone();
    v.axpy(s, du);
    v
}

/// `a'_u(U)(dU, Z)` against central differences of `a(U)(Z)`.
pub fn check_a_prime_u(
    disc: &Discretization,
    params: &ModelParams,
    q: &Control,
    u: &FieldVector,
    du: &FieldVector,
    z: &FieldVector,
    steps: &[f64],
) -> FdReport {
    let exact = forms::eval_a_prime_u(disc, params, u, du, z);
    let errors = steps
        .iter()
        .map(|&s| {
            let fp = forms::eval_a(disc, params, q, &shifted(u, s, du), z);
            let fm = forms::eval_a(disc, params, q, &shifted(u, -s, du), z);
            rel((fp - fm) / (2.0 * s), exact)
        })
        .collect();
    FdReport::from_errors(steps.to_vec(), errors)
}

/// `a''_uu(U)(dU, Phi, Z)` against central differences of `a'_u(U)(Phi, Z)`.
pub fn check_a_second_uu(
    disc: &Discretization,
    params: &ModelParams,
    u: &FieldVector,
    du: &FieldVector,
    phi: &FieldVector,
    z: &FieldVector,
    steps: &[f64],
) -> FdReport {
    let exact = forms::eval_a_second_uu(disc, params, u, du, phi, z);
    let errors = steps
        .iter()
        .map(|&s| {
            let fp = forms::eval_a_prime_u(disc, params, &shifted(u, s, du), phi, z);
            let fm = forms::eval_a_prime_u(disc, params, &shifted(u, -s, du), phi, z);
            rel((fp - fm) / (2.0 * s), exact)
        })
        .collect();
    FdReport::from_errors(steps.to_vec(), errors)
}

/// Both kernel checks on random fields drawn from `seed`.
pub fn kernel_checks(disc: &Discretization, params: &ModelParams, seed: u64, steps: &[f64]) -> (FdReport, FdReport) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = random_field(disc, &mut rng, 1e-2);
    let du = random_field(disc, &mut rng, 1e-2);
    let phi = random_field(disc, &mut rng, 1e-2);
    let z = random_field(disc, &mut rng, 1.0);
    let q = random_control(disc, &mut rng, 1e3);
    (
        check_a_prime_u(disc, params, &q, &u, &du, &z, steps),
        check_a_second_uu(disc, params, &u, &du, &phi, &z, steps),
    )
}

/// Largest absolute difference between the monolithic space-time residual and
/// the stacked per-step residuals.
pub fn residual_equivalence(
    disc: &Discretization,
    params: &ModelParams,
    q: &Control,
    traj: &Trajectory,
    initial: &FieldVector,
) -> f64 {
    let mono = space_time_residual(disc, params, q, traj, initial);
    let mut worst = 0.0f64;
    for (m, r) in mono.iter().enumerate() {
        let stepwise = if m == 0 {
            initial_residual(disc, traj.state(0), initial)
        } else {
            step_residual(disc, params, traj.dt(m), q, traj.state(m), &traj.state(m - 1).phi())
        };
        for (a, b) in r.iter().zip(&stepwise) {
            worst = worst.max((a - b).abs());
        }
    }
    worst
}

/// Control step for a relative step `s`: scaled to the size of `q` and `dq`.
fn absolute_step(q: &Control, dq: &Control, s: f64) -> f64 {
    s * q.max_abs().max(1.0) / dq.max_abs().max(f64::MIN_POSITIVE)
}

/// Central differences of `j` against `(g, dq)_{Gamma_N}`. Steps are relative
/// to `max|q| / max|dq|`.
pub fn fd_check_gradient(problem: &Problem, q: &Control, directions: &[Control], steps: &[f64]) -> Result<Vec<FdReport>> {
    let (_, _, g) = problem.evaluate(q)?;
    directions
        .iter()
        .map(|dq| {
            let exact = problem.control_inner(&g, dq);
            let errors = steps
                .par_iter()
                .map(|&s| {
                    let h = absolute_step(q, dq, s);
                    let mut qp = q.clone();
                    qp.axpy(h, dq);
                    let mut qm = q.clone();
                    qm.axpy(-h, dq);
                    let jp = problem.reduced_cost(&qp)?.j;
                    let jm = problem.reduced_cost(&qm)?.j;
                    Ok(rel((jp - jm) / (2.0 * h), exact))
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(FdReport::from_errors(steps.to_vec(), errors))
        })
        .collect()
}

/// Result of [`fd_check_hessian`].
#[derive(Debug, Clone, PartialEq)]
pub struct HessianCheck {
    pub reports: Vec<FdReport>,
    /// Relative asymmetry `|(H d1, d2) - (d1, H d2)| / max(|.|)` over direction pairs.
    pub symmetry: f64,
}

/// `H dq` against central differences of the Riesz gradient, in the `Gamma_N` norm.
pub fn fd_check_hessian(problem: &Problem, q: &Control, directions: &[Control], steps: &[f64]) -> Result<HessianCheck> {
    let (eval, z, _) = problem.evaluate(q)?;
    let ctx = problem.context(q, &eval.trajectory)?;
    let products = directions
        .iter()
        .map(|dq| problem.hessian_vector(&ctx, &z, dq))
        .collect::<Result<Vec<_>>>()?;
    let mut reports = Vec::new();
    for (dq, hd) in directions.iter().zip(&products) {
        let norm = problem.control_norm(hd);
        let errors = steps
            .par_iter()
            .map(|&s| {
                let h = absolute_step(q, dq, s);
                let mut qp = q.clone();
                qp.axpy(h, dq);
                let mut qm = q.clone();
                qm.axpy(-h, dq);
                let (_, _, gp) = problem.evaluate(&qp)?;
                let (_, _, gm) = problem.evaluate(&qm)?;
                let mut fd = gp.sub(&gm).scaled(0.5 / h);
                fd.axpy(-1.0, hd);
                let err = problem.control_norm(&fd);
                Ok(if norm == 0.0 { err } else { err / norm })
            })
            .collect::<Result<Vec<f64>>>()?;
        reports.push(FdReport::from_errors(steps.to_vec(), errors));
    }
    let mut symmetry = 0.0f64;
    for i in 0..directions.len() {
        for j in i + 1..directions.len() {
            let a = problem.control_inner(&products[i], &directions[j]);
            let b = problem.control_inner(&directions[i], &products[j]);
            symmetry = symmetry.max(rel(a, b));
        }
    }
    Ok(HessianCheck { reports, symmetry })
}

/// Relative gap between the adjoint gradient and the tangent directional
/// derivative `sum_m J'_m dU_m + alpha M (q - q_d, dq)` for each direction.
pub fn duality_check(problem: &Problem, q: &Control, directions: &[Control]) -> Result<Vec<f64>> {
    let eval = problem.reduced_cost(q)?;
    let ctx = problem.context(q, &eval.trajectory)?;
    let z = solve_adjoint(&ctx)?;
    let g = problem.reduced_gradient(q, &z);
    let diff = q.sub(&problem.cost.q_d);
    directions
        .iter()
        .map(|dq| {
            let adjoint_side = problem.control_inner(&g, dq);
            let du = solve_tangent(&ctx, dq)?;
            let tangent_side: f64 = (1..=ctx.steps())
                .map(|m| forms::dot(&ctx.tracking_derivative(m), du.state(m).as_slice()))
                .sum::<f64>()
                + problem.cost.alpha * problem.steps() as f64 * problem.control_inner(&diff, dq);
            Ok(rel(adjoint_side, tangent_side))
        })
        .collect()
}

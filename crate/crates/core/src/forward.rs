//! Forward (state) solver: initial L2 projection followed by one semi-smooth
//! Newton solve per dG(0) time step.
//!
//! The residual of step `m` tested with `Phi` is
//!
//! ```text
//! gamma (phi_m - phi_{m-1}, Phi_phi)_{(m,m-1)} + eta (phi_m - phi_{m-1}, Phi_phi)
//!     + dt_m a(q, U_m)(Phi)
//! ```
//!
//! with the restricted product switched on pointwise where `phi_m > phi_{m-1}`.

use log::debug;

use crate::error::{Error, Result};
use crate::forms::{self, dot};
use crate::mesh::{validate_times, Control, Discretization, FieldVector, Trajectory, DOFS_PER_NODE, PHI};
use crate::model::{active_indicator, ModelParams};
use crate::sparse::CscMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonSettings {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_iter: usize,
    pub max_backtracks: usize,
    /// Linearize the penalty with the indicator of the current iterate frozen
    /// (semi-smooth Newton). When off, only the viscous part enters the
    /// Jacobian and convergence degrades to linear.
    pub active_set_freeze: bool,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        NewtonSettings {
            abs_tol: 1e-12,
            rel_tol: 1e-9,
            max_iter: 50,
            max_backtracks: 20,
            active_set_freeze: true,
        }
    }
}

impl NewtonSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return Err(Error::invalid("newton tolerances", "must be positive"));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter", "must be at least 1"));
        }
        Ok(())
    }

    /// Tight settings for finite-difference probes.
    pub fn tight() -> Self {
        NewtonSettings {
            abs_tol: 1e-14,
            rel_tol: 1e-13,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepReport {
    pub iterations: usize,
    pub initial_residual: f64,
    pub residual: f64,
    /// Residual norms per Newton iterate.
    pub history: Vec<f64>,
    pub converged: bool,
    /// Quadrature points with `phi_m > phi_{m-1}`.
    pub active_points: usize,
    /// `||(phi_m - phi_{m-1})_+||`.
    pub violation: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ForwardReport {
    /// Entry `k` describes time step `k + 1`.
    pub steps: Vec<StepReport>,
}

impl ForwardReport {
    pub fn newton_iterations(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.iterations).collect()
    }

    pub fn max_violation_sq(&self) -> f64 {
        self.steps.iter().map(|s| s.violation * s.violation).fold(0.0, f64::max)
    }

    pub fn all_converged(&self) -> bool {
        self.steps.iter().all(|s| s.converged)
    }
}

/// Solution of the initial-condition equation `(U_0 - U_init, Phi) = 0`.
///
/// The data is nodal Q1, so the L2 projection is the identity; returning the
/// data avoids the round-off of a mass solve and keeps intact states exact.
pub fn solve_initial(disc: &Discretization, initial: &FieldVector) -> Result<FieldVector> {
    if initial.len() != DOFS_PER_NODE * disc.mesh().num_nodes() {
        return Err(Error::DimensionMismatch {
            expected: DOFS_PER_NODE * disc.mesh().num_nodes(),
            got: initial.len(),
        });
    }
    Ok(initial.clone())
}

/// Unconstrained residual vector of step `m` (see module docs).
pub fn step_residual(
    disc: &Discretization,
    params: &ModelParams,
    dt: f64,
    q: &Control,
    u_m: &FieldVector,
    phi_prev: &[f64],
) -> Vec<f64> {
    let mut r = forms::penalty_vector(disc.mesh(), params, &u_m.phi(), phi_prev);
    let a = forms::residual_a(disc, params, q, u_m);
    for (ri, ai) in r.iter_mut().zip(a) {
        *ri += dt * ai;
    }
    r
}

/// Jacobian of [`step_residual`] with the indicator frozen, before constraints.
pub fn step_jacobian(
    disc: &Discretization,
    params: &ModelParams,
    dt: f64,
    u_m: &FieldVector,
    phi_prev: &[f64],
) -> CscMatrix {
    let mut j = forms::penalty_matrix(disc, params, &u_m.phi(), phi_prev);
    j.axpy(dt, &forms::jacobian_a(disc, params, u_m));
    j
}

fn constrained_norm(disc: &Discretization, r: &mut [f64]) -> f64 {
    disc.zero_dirichlet(r);
    r.iter().map(|v| v * v).sum::<f64>().sqrt()
}

const MAX_NONMONOTONE: usize = 5;

/// Solves step `step` for `U_m` given `U_{m-1}`.
#[allow(clippy::too_many_arguments)]
pub fn step_state(
    disc: &Discretization,
    params: &ModelParams,
    step: usize,
    dt: f64,
    q: &Control,
    prev: &FieldVector,
    settings: &NewtonSettings,
) -> Result<(FieldVector, StepReport)> {
    let phi_prev = prev.phi();
    let mut u = prev.clone();
    disc.zero_dirichlet(u.as_mut_slice());
    let mut r = step_residual(disc, params, dt, q, &u, &phi_prev);
    let mut norm = constrained_norm(disc, &mut r);
    let mut report = StepReport {
        initial_residual: norm,
        history: vec![norm],
        ..StepReport::default()
    };
    let target = settings.abs_tol.max(settings.rel_tol * norm);
    let mut frozen_params = *params;
    if !settings.active_set_freeze {
        frozen_params.gamma = 0.0;
    }

    let mut nonmonotone = 0;
    while norm > target {
        if report.iterations >= settings.max_iter {
            return Err(newton_failure(disc, step, u, norm, report, &phi_prev));
        }
        let mut jac = step_jacobian(disc, &frozen_params, dt, &u, &phi_prev);
        let mut rhs: Vec<f64> = r.iter().map(|v| -v).collect();
        jac.constrain_symmetric(disc.dirichlet_dofs(), Some(&mut rhs));
        let du = jac.factorize(step)?.solve(&rhs)?;
        report.iterations += 1;

        let mut t = 1.0;
        let mut accepted = None;
        let mut full_step = None;
        for _ in 0..=settings.max_backtracks {
            let mut trial = u.clone();
            for (x, d) in trial.as_mut_slice().iter_mut().zip(&du) {
                *x += t * d;
            }
            let mut rt = step_residual(disc, params, dt, q, &trial, &phi_prev);
            let nt = constrained_norm(disc, &mut rt);
            if nt <= (1.0 - 1e-4 * t) * norm || nt <= target {
                accepted = Some((trial, rt, nt));
                break;
            }
            if t == 1.0 {
                full_step = Some((trial, rt, nt));
            }
            t *= 0.5;
        }
        let scale = u.max_abs().max(1e-300);
        let step_size = du.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if accepted.is_none() && step_size <= 1e-13 * scale {
            // Full steps below round-off: the residual cannot be reduced further.
            debug!("step {step}: Newton stagnated at round-off (residual {norm:.3e})");
            break;
        }
        // The residual has kinks where the growth indicator switches, and
        // backtracking can stall at one. A bounded number of full steps is
        // taken without decrease to let the active set settle.
        if accepted.is_none() && nonmonotone < MAX_NONMONOTONE {
            if let Some(full) = full_step.filter(|s| s.2.is_finite()) {
                nonmonotone += 1;
                debug!("step {step}: nonmonotone full step ({norm:.3e} -> {:.3e})", full.2);
                accepted = Some(full);
            }
        }
        match accepted {
            Some((trial, rt, nt)) => {
                u = trial;
                r = rt;
                norm = nt;
                report.history.push(norm);
            }
            None => {
                return Err(newton_failure(disc, step, u, norm, report, &phi_prev));
            }
        }
    }
    report.residual = norm;
    report.converged = true;
    let phi = u.phi();
    report.active_points = forms::active_points(disc.mesh(), &phi, &phi_prev);
    report.violation = forms::growth_violation_sq(disc.mesh(), &phi, &phi_prev).sqrt();
    Ok((u, report))
}

fn newton_failure(
    disc: &Discretization,
    step: usize,
    best: FieldVector,
    residual: f64,
    mut report: StepReport,
    phi_prev: &[f64],
) -> Error {
    report.residual = residual;
    let phi = best.phi();
    report.active_points = forms::active_points(disc.mesh(), &phi, phi_prev);
    report.violation = forms::growth_violation_sq(disc.mesh(), &phi, phi_prev).sqrt();
    Error::NewtonFailed {
        step,
        iterations: report.iterations,
        residual,
        best: Box::new(best),
        report: Box::new(ForwardReport { steps: vec![report] }),
    }
}

/// Runs the full forward sweep: projection of `initial`, then steps `1..=M`.
pub fn solve_forward(
    disc: &Discretization,
    params: &ModelParams,
    q: &Control,
    initial: &FieldVector,
    times: &[f64],
    settings: &NewtonSettings,
) -> Result<(Trajectory, ForwardReport)> {
    validate_times(times)?;
    settings.validate()?;
    q.check_len(disc.mesh())?;
    if initial.len() != disc.mesh().num_dofs() {
        return Err(Error::DimensionMismatch {
            expected: disc.mesh().num_dofs(),
            got: initial.len(),
        });
    }
    let mut states = Vec::with_capacity(times.len());
    states.push(solve_initial(disc, initial)?);
    let mut report = ForwardReport::default();
    for m in 1..times.len() {
        let dt = times[m] - times[m - 1];
        match step_state(disc, params, m, dt, q, &states[m - 1], settings) {
            Ok((u, step_report)) => {
                debug!(
                    "step {m}: {} Newton iterations, residual {:.3e}, {} active points",
                    step_report.iterations, step_report.residual, step_report.active_points
                );
                states.push(u);
                report.steps.push(step_report);
            }
            Err(Error::NewtonFailed {
                step,
                iterations,
                residual,
                best,
                report: failed,
            }) => {
                report.steps.extend(failed.steps);
                return Err(Error::NewtonFailed {
                    step,
                    iterations,
                    residual,
                    best,
                    report: Box::new(report),
                });
            }
            Err(e) => return Err(e),
        }
    }
    Ok((Trajectory::new(times.to_vec(), states)?, report))
}

/// Residual of the initial condition, `(U_0 - U_init, Phi_0)` componentwise.
pub fn initial_residual(disc: &Discretization, u0: &FieldVector, initial: &FieldVector) -> Vec<f64> {
    let mut out = vec![0.0; u0.len()];
    for comp in 0..DOFS_PER_NODE {
        let diff: Vec<f64> = u0
            .component(comp)
            .iter()
            .zip(initial.component(comp))
            .map(|(a, b)| a - b)
            .collect();
        for (node, v) in disc.mass().mul_vec(&diff).into_iter().enumerate() {
            out[DOFS_PER_NODE * node + comp] = v;
        }
    }
    out
}

/// Monolithic space-time residual of a dG(0) trajectory in jump form.
///
/// Entry `m` is the residual tested with functions supported on time slab `m`
/// (entry 0 is the initial condition). Jump terms `[phi]_m = phi_m^+ - phi_m^-`
/// are tested with `Phi_m^+` and restricted where `phi_{m+1} > phi_m`.
pub fn space_time_residual(
    disc: &Discretization,
    params: &ModelParams,
    q: &Control,
    traj: &Trajectory,
    initial: &FieldVector,
) -> Vec<Vec<f64>> {
    let mesh = disc.mesh();
    let b = mesh.basis();
    let steps = traj.steps();
    let mut out = vec![vec![0.0; mesh.num_dofs()]; steps + 1];
    let phis: Vec<Vec<f64>> = traj.states.iter().map(|s| s.phi()).collect();
    for cell in mesh.cells() {
        for m in 0..steps {
            // phi^-_m = phi_m, phi^+_m = phi_{m+1}, Phi^+_m = Phi_{m+1}
            let mut local = [0.0; 4];
            for qp in 0..4 {
                let at = |f: &[f64]| -> f64 { (0..4).map(|a| f[cell[a]] * b.values[qp][a]).sum() };
                let minus = at(&phis[m]);
                let plus = at(&phis[m + 1]);
                let jump = plus - minus;
                let weight = params.gamma * active_indicator(plus, minus) + params.eta;
                for (a, l) in local.iter_mut().enumerate() {
                    *l += b.weights[qp] * weight * jump * b.values[qp][a];
                }
            }
            for a in 0..4 {
                out[m + 1][DOFS_PER_NODE * cell[a] + PHI] += local[a];
            }
        }
    }
    for m in 1..=steps {
        let a = forms::residual_a(disc, params, q, traj.state(m));
        let dt = traj.dt(m);
        for (o, v) in out[m].iter_mut().zip(a) {
            *o += dt * v;
        }
    }
    out[0] = initial_residual(disc, traj.state(0), initial);
    out
}

/// Scalar monolithic residual tested with a dG(0) test trajectory.
pub fn space_time_residual_tested(
    disc: &Discretization,
    params: &ModelParams,
    q: &Control,
    traj: &Trajectory,
    initial: &FieldVector,
    test: &Trajectory,
) -> f64 {
    space_time_residual(disc, params, q, traj, initial)
        .iter()
        .zip(&test.states)
        .map(|(r, t)| dot(r, t.as_slice()))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{interpolate_slit_field, uniform_times, UX, UY};

    fn params() -> ModelParams {
        ModelParams::from_engineering(1.0, 0.5, 1e-10, 1e5, 1e3, 1.0, 1e6, 0.2).unwrap()
    }

    #[test]
    fn projection_reproduces_nodal_data() {
        let disc = Discretization::with_cells(6).unwrap();
        let mut f = FieldVector::zeros(disc.mesh());
        for (k, v) in f.as_mut_slice().iter_mut().enumerate() {
            *v = ((k * 37) % 11) as f64 / 7.0 - 0.5;
        }
        let p = solve_initial(&disc, &f).unwrap();
        let diff = p.as_slice().iter().zip(f.as_slice()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(diff <= 1e-12, "{diff}");
        let zero = solve_initial(&disc, &FieldVector::zeros(disc.mesh())).unwrap();
        assert_eq!(zero.max_abs(), 0.0);
    }

    #[test]
    fn intact_unloaded_step_is_exact_root() {
        let disc = Discretization::with_cells(4).unwrap();
        let p = params();
        let prev = FieldVector::from_phase_field(&vec![1.0; disc.mesh().num_nodes()]);
        let q = Control::zeros(disc.mesh());
        let (u, rep) = step_state(&disc, &p, 1, 0.1, &q, &prev, &NewtonSettings::default()).unwrap();
        assert_eq!(u, prev);
        assert!(rep.iterations <= 1);
        assert!(rep.residual <= 1e-14);
    }

    #[test]
    fn loaded_step_converges_superlinearly() {
        let disc = Discretization::with_cells(8).unwrap();
        let p = params();
        let phi0 = interpolate_slit_field((0.5, 1.0), 0.0, disc.mesh());
        let prev = FieldVector::from_phase_field(&phi0);
        let q = Control::constant(disc.mesh(), 2000.0);
        let settings = NewtonSettings::tight();
        let (u, rep) = step_state(&disc, &p, 1, 0.05, &q, &prev, &settings).unwrap();
        assert!(rep.converged);
        assert!(rep.iterations >= 2);
        // displacement is nonzero and clamped at the bottom
        assert!(u.max_abs() > 0.0);
        for node in disc.mesh().dirichlet_nodes() {
            assert_eq!(u.get(node, UX), 0.0);
            assert_eq!(u.get(node, UY), 0.0);
        }
        let h = &rep.history;
        let n = h.len();
        if n >= 4 && h[n - 1] > 0.0 {
            // contraction factors shrink near the root
            assert!(h[n - 2] / h[n - 3] < 0.5);
        }
    }

    #[test]
    fn single_step_trajectory() {
        let disc = Discretization::with_cells(4).unwrap();
        let p = params();
        let phi0 = interpolate_slit_field((0.5, 1.0), 0.0, disc.mesh());
        let u0 = FieldVector::from_phase_field(&phi0);
        let q = Control::constant(disc.mesh(), 100.0);
        let (traj, rep) =
            solve_forward(&disc, &p, &q, &u0, &uniform_times(1, 1.0), &NewtonSettings::default()).unwrap();
        assert_eq!(traj.states.len(), 2);
        assert_eq!(rep.steps.len(), 1);
    }

    #[test]
    fn frozen_phase_field_makes_u_problem_linear() {
        // gamma, eta huge compared with dt-scaled phi forces: phi barely moves; with
        // a zero-phi-coupling (kappa irrelevant) the displacement block is linear,
        // so the second Newton iterate already satisfies the u-equations.
        let disc = Discretization::with_cells(4).unwrap();
        let mut p = params();
        p.gamma = 1e20;
        p.eta = 1e20;
        let prev = FieldVector::from_phase_field(&vec![1.0; disc.mesh().num_nodes()]);
        let q = Control::constant(disc.mesh(), 10.0);
        let (_, rep) = step_state(&disc, &p, 1, 1.0, &q, &prev, &NewtonSettings::default()).unwrap();
        assert!(rep.iterations <= 2, "{rep:?}");
    }

    #[test]
    fn rejects_bad_inputs() {
        let disc = Discretization::with_cells(4).unwrap();
        let p = params();
        let u0 = FieldVector::zeros(disc.mesh());
        let q = Control::from_vec(vec![0.0; 3]);
        assert!(solve_forward(&disc, &p, &q, &u0, &uniform_times(2, 1.0), &NewtonSettings::default()).is_err());
        let q = Control::zeros(disc.mesh());
        assert!(solve_forward(&disc, &p, &q, &u0, &[0.0, 0.5, 0.4], &NewtonSettings::default()).is_err());
    }
}

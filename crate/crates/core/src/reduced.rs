//! Reduced cost `j(q) = J(q, S(q))`, its gradient and Hessian-vector products,
//! and the outer Newton-CG loop.
//!
//! The control is constant in time, so `j(q) = 1/2 sum_m ||phi_m - phi_d||^2
//! + alpha/2 M ||q - q_d||^2_{Gamma_N}`. Gradients and Hessian products are
//! Riesz representers in the `Gamma_N` mass inner product.

use log::{info, warn};

use crate::error::{Error, Result};
use crate::forward::{solve_forward, ForwardReport, NewtonSettings};
use crate::mesh::{Control, Discretization, FieldVector, Trajectory};
use crate::model::{CostParams, ModelParams};
use crate::sensitivity::{solve_adjoint, solve_adjoint_hessian, solve_tangent, weighted_trace, AdjointContext};

/// One row of the optimizer log.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    /// CG iterations of the step that produced this iterate (0 for the start).
    pub cg_count: usize,
    pub rel_residual: f64,
    pub abs_residual: f64,
    pub cost: f64,
    pub tracking: f64,
    pub tikhonov: f64,
    pub max_force: f64,
    /// The step leading here was truncated by negative curvature.
    pub negative_curvature: bool,
}

/// Outer termination test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StopRule {
    /// Stop when the relative or the absolute residual is below the tolerance.
    #[default]
    Either,
    /// Stop only on the relative residual.
    Relative,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptSettings {
    pub newton_tol: f64,
    pub stop_rule: StopRule,
    pub max_newton: usize,
    pub cg_forcing: f64,
    pub cg_max: usize,
    pub damping: f64,
    /// Step halvings allowed when the state solver fails at a trial control.
    pub max_halvings: usize,
}

impl Default for OptSettings {
    fn default() -> Self {
        OptSettings {
            newton_tol: 1e-8,
            stop_rule: StopRule::Either,
            max_newton: 30,
            cg_forcing: 1e-2,
            cg_max: 100,
            damping: 1.0,
            max_halvings: 8,
        }
    }
}

impl OptSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.newton_tol > 0.0 && self.cg_forcing > 0.0) {
            return Err(Error::invalid("optimizer tolerances", "must be positive"));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::invalid("damping", format!("must lie in (0, 1], got {}", self.damping)));
        }
        if self.cg_max == 0 {
            return Err(Error::invalid("cg_max", "must be at least 1"));
        }
        Ok(())
    }
}

/// The optimal control problem on a fixed discretization.
#[derive(Debug, Clone)]
pub struct Problem {
    pub disc: Discretization,
    pub params: ModelParams,
    pub cost: CostParams,
    /// Initial data `(u_0, phi_0)`.
    pub initial: FieldVector,
    pub times: Vec<f64>,
    pub newton: NewtonSettings,
}

/// Result of evaluating `j` at a control.
#[derive(Debug, Clone)]
pub struct CostEval {
    pub j: f64,
    pub tracking: f64,
    pub tikhonov: f64,
    pub trajectory: Trajectory,
    pub report: ForwardReport,
}

#[derive(Debug)]
pub enum OptStatus {
    Converged,
    MaxIterations,
    /// A forward or sensitivity solve failed; the records up to that point are kept.
    Failed(Error),
}

impl std::fmt::Display for OptStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OptStatus::Converged => write!(f, "converged"),
            OptStatus::MaxIterations => write!(f, "iteration limit reached"),
            OptStatus::Failed(e) => write!(f, "failed: {e}"),
        }
    }
}

#[derive(Debug)]
pub struct OptResult {
    /// Best iterate: the last one whose gradient was evaluated.
    pub q: Control,
    pub records: Vec<IterationRecord>,
    pub status: OptStatus,
    /// State and adjoint at `q`, when available.
    pub trajectory: Option<Trajectory>,
    pub adjoint: Option<Trajectory>,
}

impl OptResult {
    pub fn converged(&self) -> bool {
        matches!(self.status, OptStatus::Converged)
    }
}

impl Problem {
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        let mesh = self.disc.mesh();
        if self.cost.phi_d.len() != mesh.num_nodes() {
            return Err(Error::DimensionMismatch {
                expected: mesh.num_nodes(),
                got: self.cost.phi_d.len(),
            });
        }
        self.cost.q_d.check_len(mesh)?;
        crate::mesh::validate_times(&self.times)
    }

    /// `||v||_{Gamma_N}`.
    pub fn control_norm(&self, v: &Control) -> f64 {
        self.disc.boundary_mass().norm(v.as_slice())
    }

    pub fn control_inner(&self, a: &Control, b: &Control) -> f64 {
        self.disc.boundary_mass().inner(a.as_slice(), b.as_slice())
    }

    /// `alpha/2 M ||q - q_d||^2_{Gamma_N}`.
    pub fn tikhonov(&self, q: &Control) -> f64 {
        let d = q.sub(&self.cost.q_d);
        0.5 * self.cost.alpha * self.steps() as f64 * self.disc.boundary_mass().inner(d.as_slice(), d.as_slice())
    }

    /// `1/2 sum_{m>=1} ||phi_m - phi_d||^2`.
    pub fn tracking(&self, traj: &Trajectory) -> f64 {
        (1..=traj.steps())
            .map(|m| {
                let diff: Vec<f64> = traj
                    .state(m)
                    .phi()
                    .iter()
                    .zip(&self.cost.phi_d)
                    .map(|(a, b)| a - b)
                    .collect();
                0.5 * self.disc.l2_inner(&diff, &diff)
            })
            .sum()
    }

    pub fn forward(&self, q: &Control) -> Result<(Trajectory, ForwardReport)> {
        solve_forward(&self.disc, &self.params, q, &self.initial, &self.times, &self.newton)
    }

    pub fn reduced_cost(&self, q: &Control) -> Result<CostEval> {
        let (trajectory, report) = self.forward(q)?;
        let tracking = self.tracking(&trajectory);
        let tikhonov = self.tikhonov(q);
        Ok(CostEval {
            j: tracking + tikhonov,
            tracking,
            tikhonov,
            trajectory,
            report,
        })
    }

    pub fn context<'a>(&'a self, q: &'a Control, traj: &'a Trajectory) -> Result<AdjointContext<'a>> {
        AdjointContext::new(&self.disc, &self.params, &self.cost, q, traj)
    }

    /// Riesz gradient `alpha M (q - q_d) + sum_m dt_m z_{u:y,m}|_{Gamma_N}`.
    pub fn reduced_gradient(&self, q: &Control, adjoint: &Trajectory) -> Control {
        let mut g = q.sub(&self.cost.q_d).scaled(self.cost.alpha * self.steps() as f64);
        g.axpy(1.0, &weighted_trace(&self.disc, adjoint));
        g
    }

    /// Riesz representer of `j''(q)(dq, .)`.
    pub fn hessian_vector(&self, ctx: &AdjointContext<'_>, adjoint: &Trajectory, dq: &Control) -> Result<Control> {
        let du = solve_tangent(ctx, dq)?;
        let dz = solve_adjoint_hessian(ctx, adjoint, &du)?;
        let mut h = dq.scaled(self.cost.alpha * self.steps() as f64);
        h.axpy(1.0, &weighted_trace(&self.disc, &dz));
        Ok(h)
    }

    /// Cost, trajectory, adjoint and gradient at `q`.
    pub fn evaluate(&self, q: &Control) -> Result<(CostEval, Trajectory, Control)> {
        let eval = self.reduced_cost(q)?;
        let ctx = self.context(q, &eval.trajectory)?;
        let z = solve_adjoint(&ctx)?;
        let g = self.reduced_gradient(q, &z);
        Ok((eval, z, g))
    }

    /// Truncated CG for `H d = -g` in the `Gamma_N` inner product.
    /// Returns `(d, iterations, negative_curvature)`.
    pub fn cg_solve(
        &self,
        ctx: &AdjointContext<'_>,
        adjoint: &Trajectory,
        g: &Control,
        settings: &OptSettings,
    ) -> Result<(Control, usize, bool)> {
        let mut d = Control::zeros(self.disc.mesh());
        let mut r = g.scaled(-1.0);
        let mut p = r.clone();
        let mut rr = self.control_inner(&r, &r);
        let tol = settings.cg_forcing * rr.sqrt();
        let mut iterations = 0;
        while iterations < settings.cg_max {
            let hp = self.hessian_vector(ctx, adjoint, &p)?;
            iterations += 1;
            let curvature = self.control_inner(&p, &hp);
            if curvature <= 0.0 {
                if iterations == 1 {
                    d = r.clone();
                }
                return Ok((d, iterations, true));
            }
            let a = rr / curvature;
            d.axpy(a, &p);
            r.axpy(-a, &hp);
            let rr_new = self.control_inner(&r, &r);
            if rr_new.sqrt() <= tol {
                break;
            }
            let beta = rr_new / rr;
            rr = rr_new;
            let mut next = r.clone();
            next.axpy(beta, &p);
            p = next;
        }
        Ok((d, iterations, false))
    }

    /// Newton-CG on `j'(q) = 0` with full (or damped) steps.
    pub fn newton_cg(&self, q0: &Control, settings: &OptSettings) -> Result<OptResult> {
        settings.validate()?;
        self.validate()?;
        q0.check_len(self.disc.mesh())?;
        let mut q = q0.clone();
        let (mut eval, mut z, mut g) = self.evaluate(&q)?;
        let mut records = Vec::new();
        let mut abs0 = 0.0;
        let mut cg_count = 0;
        let mut negative_curvature = false;
        let finish = |q, records, status, eval: CostEval, z| OptResult {
            q,
            records,
            status,
            trajectory: Some(eval.trajectory),
            adjoint: Some(z),
        };
        for iter in 0..=settings.max_newton {
            let abs = self.control_norm(&g);
            if iter == 0 {
                abs0 = abs;
            }
            let rel = if iter == 0 { 1.0 } else { abs / abs0 };
            let record = IterationRecord {
                iter,
                cg_count,
                rel_residual: rel,
                abs_residual: abs,
                cost: eval.j,
                tracking: eval.tracking,
                tikhonov: eval.tikhonov,
                max_force: q.max_abs(),
                negative_curvature,
            };
            info!(
                "iter {iter:>2}  cg {cg_count:>3}  rel {rel:.4e}  abs {abs:.4e}  cost {:.6e}  tracking {:.6e}  tikhonov {:.6e}  force {:.4}",
                record.cost, record.tracking, record.tikhonov, record.max_force
            );
            records.push(record);
            let measure = match settings.stop_rule {
                StopRule::Either => rel.min(abs),
                StopRule::Relative => rel,
            };
            if measure <= settings.newton_tol {
                return Ok(finish(q, records, OptStatus::Converged, eval, z));
            }
            if iter == settings.max_newton {
                return Ok(finish(q, records, OptStatus::MaxIterations, eval, z));
            }
            let direction = self
                .context(&q, &eval.trajectory)
                .and_then(|ctx| self.cg_solve(&ctx, &z, &g, settings));
            let (d, count, negative) = match direction {
                Ok(v) => v,
                Err(e) => return Ok(finish(q, records, OptStatus::Failed(e), eval, z)),
            };
            cg_count = count;
            negative_curvature = negative;
            // Shorten the step while the state equation has no solution at the trial control.
            let mut t = settings.damping;
            let mut halvings = 0;
            loop {
                let mut trial = q.clone();
                trial.axpy(t, &d);
                match self.evaluate(&trial) {
                    Ok((e, zt, gt)) => {
                        if halvings > 0 {
                            info!("iter {iter}: step shortened to {t:.3e} after state solver failures");
                        }
                        q = trial;
                        (eval, z, g) = (e, zt, gt);
                        break;
                    }
                    Err(err) if halvings < settings.max_halvings => {
                        warn!("iter {iter}: state solve failed at step {t:.3e} ({err}); halving");
                        t *= 0.5;
                        halvings += 1;
                    }
                    Err(err) => return Ok(finish(q, records, OptStatus::Failed(err), eval, z)),
                }
            }
        }
        unreachable!("the loop returns at iter == max_newton")
    }
}

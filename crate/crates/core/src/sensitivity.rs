//! Adjoint, tangent and adjoint-Hessian sweeps.
//!
//! All three sweeps reuse the per-step matrices of the converged state
//! trajectory, with the growth indicators frozen at their state values:
//!
//! * `K_m = B_m + dt_m A_m`, the step Jacobian (`A_m` the matrix of `a'_u(U_m)`),
//! * `B_m`, the penalty-plus-viscosity mass on the phase-field block with the
//!   indicator of `phi_m > phi_{m-1}`.
//!
//! Tangent: `K_m dU_m = B_m dU_{m-1} + dt_m f(dq)`, `dU_0 = 0`.
//! Adjoint: `K_m^T z_m = J'_m + B_{m+1}^T z_{m+1}` backwards, `z_0 = z_1`.
//! Adjoint Hessian: same operator with right-hand side
//! `M_phi dphi_m - dt_m a''_uu(U_m)(dU_m, ., z_m) + B_{m+1}^T dz_{m+1}`.

use log::debug;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forms;
use crate::forward::step_jacobian;
use crate::mesh::{Control, Discretization, FieldVector, Trajectory, DOFS_PER_NODE, PHI};
use crate::model::{CostParams, ModelParams};
use crate::sparse::{CscMatrix, Factorization};

/// Step matrices are factorized once and kept when `dofs * steps` is below this.
pub const DEFAULT_CACHE_LIMIT: usize = 2_500_000;

/// Linearization of the state equation around a converged trajectory.
pub struct AdjointContext<'a> {
    pub disc: &'a Discretization,
    pub params: &'a ModelParams,
    pub cost: &'a CostParams,
    pub q: &'a Control,
    pub trajectory: &'a Trajectory,
    /// Entry `m - 1` is the factorized `K_m`, when cached.
    factors: Option<Vec<Factorization>>,
}

impl std::fmt::Debug for AdjointContext<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AdjointContext")
            .field("steps", &self.trajectory.steps())
            .field("cached", &self.factors.is_some())
            .finish()
    }
}

impl<'a> AdjointContext<'a> {
    pub fn new(
        disc: &'a Discretization,
        params: &'a ModelParams,
        cost: &'a CostParams,
        q: &'a Control,
        trajectory: &'a Trajectory,
    ) -> Result<Self> {
        Self::with_cache_limit(disc, params, cost, q, trajectory, DEFAULT_CACHE_LIMIT)
    }

    /// Like [`AdjointContext::new`]; factorizations are cached when
    /// `dofs * steps <= cache_limit` and recomputed per sweep otherwise.
    pub fn with_cache_limit(
        disc: &'a Discretization,
        params: &'a ModelParams,
        cost: &'a CostParams,
        q: &'a Control,
        trajectory: &'a Trajectory,
        cache_limit: usize,
    ) -> Result<Self> {
        let mesh = disc.mesh();
        if cost.phi_d.len() != mesh.num_nodes() {
            return Err(Error::DimensionMismatch {
                expected: mesh.num_nodes(),
                got: cost.phi_d.len(),
            });
        }
        q.check_len(mesh)?;
        cost.q_d.check_len(mesh)?;
        if let Some(bad) = trajectory.states.iter().find(|s| s.len() != mesh.num_dofs()) {
            return Err(Error::DimensionMismatch {
                expected: mesh.num_dofs(),
                got: bad.len(),
            });
        }
        let mut ctx = AdjointContext {
            disc,
            params,
            cost,
            q,
            trajectory,
            factors: None,
        };
        if mesh.num_dofs() * trajectory.steps() <= cache_limit {
            let factors = (1..=trajectory.steps())
                .into_par_iter()
                .map(|m| ctx.step_matrix(m).factorize(m))
                .collect::<Result<Vec<_>>>()?;
            ctx.factors = Some(factors);
        }
        Ok(ctx)
    }

    pub fn steps(&self) -> usize {
        self.trajectory.steps()
    }

    /// Constrained step Jacobian `K_m`, `1 <= m <= M`.
    pub fn step_matrix(&self, m: usize) -> CscMatrix {
        let traj = self.trajectory;
        let mut k = step_jacobian(
            self.disc,
            self.params,
            traj.dt(m),
            traj.state(m),
            &traj.state(m - 1).phi(),
        );
        k.constrain_symmetric(self.disc.dirichlet_dofs(), None);
        k
    }

    /// Jump operator `B_m`, `1 <= m <= M`.
    pub fn jump_matrix(&self, m: usize) -> CscMatrix {
        let traj = self.trajectory;
        forms::penalty_matrix(self.disc, self.params, &traj.state(m).phi(), &traj.state(m - 1).phi())
    }

    fn factor(&self, m: usize) -> Result<FactorRef<'_>> {
        match &self.factors {
            Some(f) => Ok(FactorRef::Cached(&f[m - 1])),
            None => Ok(FactorRef::Fresh(Box::new(self.step_matrix(m).factorize(m)?))),
        }
    }

    /// `J'_m`: the tracking derivative `M (phi_m - phi_d)` on the phase-field block.
    pub fn tracking_derivative(&self, m: usize) -> Vec<f64> {
        let phi = self.trajectory.state(m).phi();
        let diff: Vec<f64> = phi.iter().zip(&self.cost.phi_d).map(|(a, b)| a - b).collect();
        embed_phi(&self.disc.mass().mul_vec(&diff))
    }

    /// Neumann load of a control direction, `f . Phi = (dq, Phi_{u:y})_{Gamma_N}`.
    pub fn control_load(&self, dq: &Control) -> Vec<f64> {
        forms::neumann_load(self.disc, dq)
    }

    fn backward_sweep(&self, mut data: impl FnMut(usize) -> Vec<f64>) -> Result<Trajectory> {
        let steps = self.steps();
        let mut out = vec![FieldVector::zeros(self.disc.mesh()); steps + 1];
        for m in (1..=steps).rev() {
            let mut rhs = data(m);
            if m < steps {
                self.jump_matrix(m + 1)
                    .mul_transpose_vec_add(out[m + 1].as_slice(), &mut rhs);
            }
            self.disc.zero_dirichlet(&mut rhs);
            out[m] = FieldVector::from_vec(self.factor(m)?.solve_transpose(&rhs)?);
        }
        out[0] = out[1].clone();
        Trajectory::new(self.trajectory.times.clone(), out)
    }
}

enum FactorRef<'a> {
    Cached(&'a Factorization),
    Fresh(Box<Factorization>),
}

impl std::ops::Deref for FactorRef<'_> {
    type Target = Factorization;

    fn deref(&self) -> &Factorization {
        match self {
            FactorRef::Cached(f) => f,
            FactorRef::Fresh(f) => f,
        }
    }
}

fn embed_phi(phi: &[f64]) -> Vec<f64> {
    let mut v = vec![0.0; DOFS_PER_NODE * phi.len()];
    for (node, x) in phi.iter().enumerate() {
        v[DOFS_PER_NODE * node + PHI] = *x;
    }
    v
}

/// Backward adjoint sweep.
pub fn solve_adjoint(ctx: &AdjointContext<'_>) -> Result<Trajectory> {
    debug!("adjoint sweep over {} steps", ctx.steps());
    ctx.backward_sweep(|m| ctx.tracking_derivative(m))
}

/// Forward tangent sweep in direction `dq` (constant in time).
pub fn solve_tangent(ctx: &AdjointContext<'_>, dq: &Control) -> Result<Trajectory> {
    dq.check_len(ctx.disc.mesh())?;
    let load = ctx.control_load(dq);
    let loads: Vec<Vec<f64>> = (0..=ctx.steps())
        .map(|m| {
            if m == 0 {
                vec![0.0; load.len()]
            } else {
                load.iter().map(|v| ctx.trajectory.dt(m) * v).collect()
            }
        })
        .collect();
    solve_tangent_with_load(ctx, &loads)
}

/// Forward tangent sweep with explicit control loads: `loads[m]` is
/// `-d R_m / dq (dq)` for `m >= 1` (entry 0 is ignored).
pub fn solve_tangent_with_load(ctx: &AdjointContext<'_>, loads: &[Vec<f64>]) -> Result<Trajectory> {
    let steps = ctx.steps();
    if loads.len() != steps + 1 {
        return Err(Error::DimensionMismatch {
            expected: steps + 1,
            got: loads.len(),
        });
    }
    let mut out = vec![FieldVector::zeros(ctx.disc.mesh()); steps + 1];
    for m in 1..=steps {
        let mut rhs = loads[m].clone();
        ctx.jump_matrix(m).mul_vec_add(out[m - 1].as_slice(), &mut rhs);
        ctx.disc.zero_dirichlet(&mut rhs);
        out[m] = FieldVector::from_vec(ctx.factor(m)?.solve(&rhs)?);
    }
    Trajectory::new(ctx.trajectory.times.clone(), out)
}

/// Backward adjoint-Hessian sweep for the tangent `du` and the adjoint `z`.
pub fn solve_adjoint_hessian(ctx: &AdjointContext<'_>, z: &Trajectory, du: &Trajectory) -> Result<Trajectory> {
    let steps = ctx.steps();
    for t in [z, du] {
        if t.steps() != steps {
            return Err(Error::DimensionMismatch {
                expected: steps,
                got: t.steps(),
            });
        }
    }
    ctx.backward_sweep(|m| {
        let mut rhs = embed_phi(&ctx.disc.mass().mul_vec(&du.state(m).phi()));
        let curvature =
            forms::second_derivative_vector(ctx.disc, ctx.params, ctx.trajectory.state(m), du.state(m), z.state(m));
        let dt = ctx.trajectory.dt(m);
        for (r, c) in rhs.iter_mut().zip(curvature) {
            *r -= dt * c;
        }
        rhs
    })
}

/// `sum_m dt_m tr(v_m)` over `m = 1..M`: the Riesz representer of
/// `dq -> sum_m dt_m (dq, v_{u:y,m})_{Gamma_N}`.
pub fn weighted_trace(disc: &Discretization, traj: &Trajectory) -> Control {
    let mut out = Control::zeros(disc.mesh());
    for m in 1..=traj.steps() {
        out.axpy(traj.dt(m), &disc.neumann_trace_uy(traj.state(m)));
    }
    out
}

//! Element kernels of the semilinear form `a(q, U)(Phi)` and its derivatives.
//!
//! `a` is the first variation of the regularized energy
//!
//! ```text
//! E(u, phi) = 1/2 (g(phi) C e(u), e(u)) + G_c eps/2 |grad phi|^2
//!           + G_c/(2 eps) |1 - phi|^2 - (q, u_y)_{Gamma_N}
//! ```
//!
//! so `a'_u` is its Hessian (symmetric) and `a''_uu` the third variation.
//! Everything is integrated with the 2x2 Gauss rule of [`Mesh::basis`]; the
//! penalty indicator is evaluated at the same quadrature points.
//!
//! Assembled vectors follow the convention `v . Phi = form(..)(Phi)`, i.e. the
//! entry at a dof is the form tested with that basis function.

use crate::mesh::{dof, Control, Discretization, FieldVector, Mesh, DOFS_PER_NODE, PHI, UX, UY};
use crate::model::{active_indicator, degradation, degradation_derivative, stress, ModelParams, Sym2};
use crate::sparse::CscMatrix;

const LOCAL: usize = 4 * DOFS_PER_NODE;

/// Data for one time step of the penalized dG(0) scheme.
#[derive(Debug, Clone, Copy)]
pub struct StepContext<'a> {
    /// `t_m - t_{m-1}`.
    pub dt: f64,
    /// Nodal phase-field at `t_{m-1}`.
    pub phi_prev: &'a [f64],
    pub params: &'a ModelParams,
}

/// Field quantities at one quadrature point.
#[derive(Debug, Clone, Copy, Default)]
struct Point {
    strain: Sym2,
    phi: f64,
    grad_phi: [f64; 2],
}

fn gather(field: &[f64], cell: &[usize; 4]) -> [f64; LOCAL] {
    let mut local = [0.0; LOCAL];
    for (a, &node) in cell.iter().enumerate() {
        for c in 0..DOFS_PER_NODE {
            local[DOFS_PER_NODE * a + c] = field[dof(node, c)];
        }
    }
    local
}

fn gather_scalar(field: &[f64], cell: &[usize; 4]) -> [f64; 4] {
    [field[cell[0]], field[cell[1]], field[cell[2]], field[cell[3]]]
}

fn scatter(target: &mut [f64], cell: &[usize; 4], local: &[f64; LOCAL]) {
    for (a, &node) in cell.iter().enumerate() {
        for c in 0..DOFS_PER_NODE {
            target[dof(node, c)] += local[DOFS_PER_NODE * a + c];
        }
    }
}

fn point(mesh: &Mesh, local: &[f64; LOCAL], qp: usize) -> Point {
    let b = mesh.basis();
    let mut grad_u = [[0.0; 2]; 2];
    let mut p = Point::default();
    for a in 0..4 {
        let g = b.grads[qp][a];
        let (ux, uy, ph) = (local[3 * a + UX], local[3 * a + UY], local[3 * a + PHI]);
        grad_u[0][0] += ux * g[0];
        grad_u[0][1] += ux * g[1];
        grad_u[1][0] += uy * g[0];
        grad_u[1][1] += uy * g[1];
        p.phi += ph * b.values[qp][a];
        p.grad_phi[0] += ph * g[0];
        p.grad_phi[1] += ph * g[1];
    }
    p.strain = Sym2::sym_grad(grad_u);
    p
}

fn scalar_at(mesh: &Mesh, local: &[f64; 4], qp: usize) -> f64 {
    let v = &mesh.basis().values[qp];
    local[0] * v[0] + local[1] * v[1] + local[2] * v[2] + local[3] * v[3]
}

/// `sigma . grad N`, i.e. `sigma : e(N e_d)` for `d = x, y`.
#[inline]
fn traction(sigma: &Sym2, g: [f64; 2]) -> [f64; 2] {
    [sigma.xx * g[0] + sigma.xy * g[1], sigma.xy * g[0] + sigma.yy * g[1]]
}

/// Strain of the vector basis function `N e_d`.
#[inline]
fn basis_strain(g: [f64; 2], d: usize) -> Sym2 {
    if d == UX {
        Sym2::new(g[0], 0.0, 0.5 * g[1])
    } else {
        Sym2::new(0.0, g[1], 0.5 * g[0])
    }
}

/// Vector `r` with `r . Phi = a(q, U)(Phi)`.
pub fn residual_a(disc: &Discretization, params: &ModelParams, q: &Control, u: &FieldVector) -> Vec<f64> {
    let mut r = energy_residual(disc.mesh(), params, u.as_slice());
    subtract_neumann(disc, q, 1.0, &mut r);
    r
}

/// Bulk part of `a` (everything except the boundary traction).
fn energy_residual(mesh: &Mesh, params: &ModelParams, u: &[f64]) -> Vec<f64> {
    let b = mesh.basis();
    let mut r = vec![0.0; u.len()];
    for cell in mesh.cells() {
        let local_u = gather(u, cell);
        let mut local = [0.0; LOCAL];
        for qp in 0..4 {
            let p = point(mesh, &local_u, qp);
            let w = b.weights[qp];
            let sigma = stress(&p.strain, params.mu, params.lambda);
            let g = degradation(p.phi, params.kappa);
            let source = -params.g_c / params.eps * (1.0 - p.phi)
                + (1.0 - params.kappa) * p.phi * sigma.ddot(&p.strain);
            for a in 0..4 {
                let gr = b.grads[qp][a];
                let t = traction(&sigma, gr);
                local[3 * a + UX] += w * g * t[0];
                local[3 * a + UY] += w * g * t[1];
                local[3 * a + PHI] += w
                    * (params.g_c * params.eps * (p.grad_phi[0] * gr[0] + p.grad_phi[1] * gr[1])
                        + source * b.values[qp][a]);
            }
        }
        scatter(&mut r, cell, &local);
    }
    r
}

/// Vector `f` with `f . Phi = (q, Phi_{u:y})_{Gamma_N}`.
pub fn neumann_load(disc: &Discretization, q: &Control) -> Vec<f64> {
    let mut f = vec![0.0; disc.mesh().num_dofs()];
    subtract_neumann(disc, q, -1.0, &mut f);
    f
}

fn subtract_neumann(disc: &Discretization, q: &Control, scale: f64, target: &mut [f64]) {
    let mq = disc.boundary_mass().apply(q.as_slice());
    for (node, v) in disc.mesh().neumann_nodes().into_iter().zip(mq) {
        target[dof(node, UY)] -= scale * v;
    }
}

/// Matrix `K` of `a'_u(q, U)`, with `Z^T K dU = a'_u(q, U)(dU, Z)`. Independent of `q`.
pub fn jacobian_a(disc: &Discretization, params: &ModelParams, u: &FieldVector) -> CscMatrix {
    let mesh = disc.mesh();
    let b = mesh.basis();
    let mut k = CscMatrix::zeros(disc.coupled_pattern().clone());
    let mut local = [0.0; LOCAL * LOCAL];
    for (c, cell) in mesh.cells().iter().enumerate() {
        let local_u = gather(u.as_slice(), cell);
        local.fill(0.0);
        for qp in 0..4 {
            let p = point(mesh, &local_u, qp);
            let w = b.weights[qp];
            let sigma = stress(&p.strain, params.mu, params.lambda);
            let g = degradation(p.phi, params.kappa);
            let dg = degradation_derivative(p.phi, params.kappa);
            let energy = sigma.ddot(&p.strain);
            let phi_mass = params.g_c / params.eps + (1.0 - params.kappa) * energy;
            for a in 0..4 {
                let ga = b.grads[qp][a];
                let na = b.values[qp][a];
                let ta = traction(&sigma, ga);
                for bb in 0..4 {
                    let gb = b.grads[qp][bb];
                    let nb = b.values[qp][bb];
                    let tb = traction(&sigma, gb);
                    for da in [UX, UY] {
                        let row = (3 * a + da) * LOCAL;
                        for db in [UX, UY] {
                            let sb = stress(&basis_strain(gb, db), params.mu, params.lambda);
                            local[row + 3 * bb + db] += w * g * sb.ddot(&basis_strain(ga, da));
                        }
                        local[row + 3 * bb + PHI] += w * dg * nb * ta[da];
                    }
                    let row = (3 * a + PHI) * LOCAL;
                    for db in [UX, UY] {
                        local[row + 3 * bb + db] += w * dg * na * tb[db];
                    }
                    local[row + 3 * bb + PHI] += w
                        * (params.g_c * params.eps * (ga[0] * gb[0] + ga[1] * gb[1]) + phi_mass * na * nb);
                }
            }
        }
        k.add_cell(c, &local);
    }
    k
}

/// Vector `v` with `v . Phi = a''_uu(q, U)(dU, Phi, Z)`.
pub fn second_derivative_vector(
    disc: &Discretization,
    params: &ModelParams,
    u: &FieldVector,
    du: &FieldVector,
    z: &FieldVector,
) -> Vec<f64> {
    let mesh = disc.mesh();
    let b = mesh.basis();
    let c2 = 2.0 * (1.0 - params.kappa);
    let mut v = vec![0.0; u.len()];
    for cell in mesh.cells() {
        let (lu, ld, lz) = (
            gather(u.as_slice(), cell),
            gather(du.as_slice(), cell),
            gather(z.as_slice(), cell),
        );
        let mut local = [0.0; LOCAL];
        for qp in 0..4 {
            let w = b.weights[qp];
            let (p, pd, pz) = (point(mesh, &lu, qp), point(mesh, &ld, qp), point(mesh, &lz, qp));
            let s = stress(&p.strain, params.mu, params.lambda);
            let sd = stress(&pd.strain, params.mu, params.lambda);
            let sz = stress(&pz.strain, params.mu, params.lambda);
            // u-test: 2(1-k) [phi dphi C e(z_u) + phi z_phi C e(du) + dphi z_phi C e(u)] : e(Phi_u)
            let su = sz
                .scale(p.phi * pd.phi)
                .add(&sd.scale(p.phi * pz.phi))
                .add(&s.scale(pd.phi * pz.phi))
                .scale(c2);
            // phi-test: 2(1-k) [phi C e(du):e(z_u) + dphi C e(u):e(z_u) + z_phi C e(du):e(u)] Phi_phi
            let sphi = c2
                * (p.phi * sd.ddot(&pz.strain)
                    + pd.phi * s.ddot(&pz.strain)
                    + pz.phi * sd.ddot(&p.strain));
            for a in 0..4 {
                let t = traction(&su, b.grads[qp][a]);
                local[3 * a + UX] += w * t[0];
                local[3 * a + UY] += w * t[1];
                local[3 * a + PHI] += w * sphi * b.values[qp][a];
            }
        }
        scatter(&mut v, cell, &local);
    }
    v
}

/// Vector `v` with `v . Psi = gamma (chi (phi_m - phi_prev), Psi_phi) + eta (phi_m - phi_prev, Psi_phi)`,
/// `chi` the pointwise growth indicator at the quadrature points.
pub fn penalty_vector(mesh: &Mesh, params: &ModelParams, phi_m: &[f64], phi_prev: &[f64]) -> Vec<f64> {
    let b = mesh.basis();
    let mut v = vec![0.0; DOFS_PER_NODE * mesh.num_nodes()];
    for cell in mesh.cells() {
        let (lm, lp) = (gather_scalar(phi_m, cell), gather_scalar(phi_prev, cell));
        let mut local = [0.0; LOCAL];
        for qp in 0..4 {
            let (cur, prev) = (scalar_at(mesh, &lm, qp), scalar_at(mesh, &lp, qp));
            let weight = params.gamma * active_indicator(cur, prev) + params.eta;
            let jump = cur - prev;
            for a in 0..4 {
                local[3 * a + PHI] += b.weights[qp] * weight * jump * b.values[qp][a];
            }
        }
        scatter(&mut v, cell, &local);
    }
    v
}

/// Coupled matrix `B` with `Psi^T B X = gamma (chi X_phi, Psi_phi) + eta (X_phi, Psi_phi)`,
/// where `chi` is the indicator of `phi_m > phi_prev` at the quadrature points.
///
/// `B` is both the Jacobian of [`penalty_vector`] (frozen indicator) and the
/// operator that carries the previous step's phase-field into step `m`.
pub fn penalty_matrix(disc: &Discretization, params: &ModelParams, phi_m: &[f64], phi_prev: &[f64]) -> CscMatrix {
    let mesh = disc.mesh();
    let b = mesh.basis();
    let mut m = CscMatrix::zeros(disc.coupled_pattern().clone());
    let mut local = [0.0; LOCAL * LOCAL];
    for (c, cell) in mesh.cells().iter().enumerate() {
        let (lm, lp) = (gather_scalar(phi_m, cell), gather_scalar(phi_prev, cell));
        local.fill(0.0);
        for qp in 0..4 {
            let (cur, prev) = (scalar_at(mesh, &lm, qp), scalar_at(mesh, &lp, qp));
            let weight = b.weights[qp] * (params.gamma * active_indicator(cur, prev) + params.eta);
            for a in 0..4 {
                for bb in 0..4 {
                    local[(3 * a + PHI) * LOCAL + 3 * bb + PHI] += weight * b.values[qp][a] * b.values[qp][bb];
                }
            }
        }
        m.add_cell(c, &local);
    }
    m
}

/// Number of quadrature points where `phi_m > phi_prev`.
pub fn active_points(mesh: &Mesh, phi_m: &[f64], phi_prev: &[f64]) -> usize {
    let mut count = 0;
    for cell in mesh.cells() {
        let (lm, lp) = (gather_scalar(phi_m, cell), gather_scalar(phi_prev, cell));
        for qp in 0..4 {
            if active_indicator(scalar_at(mesh, &lm, qp), scalar_at(mesh, &lp, qp)) > 0.0 {
                count += 1;
            }
        }
    }
    count
}

/// `||(phi_m - phi_prev)_+||^2` with the element quadrature.
pub fn growth_violation_sq(mesh: &Mesh, phi_m: &[f64], phi_prev: &[f64]) -> f64 {
    let b = mesh.basis();
    let mut acc = 0.0;
    for cell in mesh.cells() {
        let (lm, lp) = (gather_scalar(phi_m, cell), gather_scalar(phi_prev, cell));
        for qp in 0..4 {
            let d = (scalar_at(mesh, &lm, qp) - scalar_at(mesh, &lp, qp)).max(0.0);
            acc += b.weights[qp] * d * d;
        }
    }
    acc
}

/// `a(q, U)(Phi)`.
pub fn eval_a(disc: &Discretization, params: &ModelParams, q: &Control, u: &FieldVector, test: &FieldVector) -> f64 {
    dot(&residual_a(disc, params, q, u), test.as_slice())
}

/// `a'_u(q, U)(dU, Z)`.
pub fn eval_a_prime_u(
    disc: &Discretization,
    params: &ModelParams,
    u: &FieldVector,
    du: &FieldVector,
    z: &FieldVector,
) -> f64 {
    jacobian_a(disc, params, u).bilinear(z.as_slice(), du.as_slice())
}

/// `a'_q(dq, Phi) = -(dq, Phi_{u:y})_{Gamma_N}`.
pub fn eval_a_prime_q(disc: &Discretization, dq: &Control, test: &FieldVector) -> f64 {
    -dot(&neumann_load(disc, dq), test.as_slice())
}

/// `a''_uu(q, U)(dU, Phi, Z)`.
pub fn eval_a_second_uu(
    disc: &Discretization,
    params: &ModelParams,
    u: &FieldVector,
    du: &FieldVector,
    test: &FieldVector,
    z: &FieldVector,
) -> f64 {
    dot(&second_derivative_vector(disc, params, u, du, z), test.as_slice())
}

/// Penalty and viscous coupling of one step tested with `psi`.
pub fn eval_penalty_coupling(ctx: &StepContext<'_>, mesh: &Mesh, phi_m: &[f64], psi: &FieldVector) -> f64 {
    dot(&penalty_vector(mesh, ctx.params, phi_m, ctx.phi_prev), psi.as_slice())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Discretization;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params() -> ModelParams {
        ModelParams::from_engineering(1.0, 0.3, 1e-10, 1e5, 1e3, 1.0, 1e6, 0.2).unwrap()
    }

    fn random_field(disc: &Discretization, rng: &mut ChaCha8Rng, scale_u: f64) -> FieldVector {
        let mut f = FieldVector::zeros(disc.mesh());
        for node in 0..disc.mesh().num_nodes() {
            f.set(node, UX, scale_u * rng.gen_range(-1.0..1.0));
            f.set(node, UY, scale_u * rng.gen_range(-1.0..1.0));
            f.set(node, PHI, rng.gen_range(0.0..1.0));
        }
        f
    }

    #[test]
    fn intact_unloaded_state_has_zero_form() {
        let disc = Discretization::with_cells(4).unwrap();
        let p = params();
        let u = FieldVector::from_phase_field(&vec![1.0; disc.mesh().num_nodes()]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let test = random_field(&disc, &mut rng, 1.0);
        let q = Control::zeros(disc.mesh());
        // only round-off from the partition of unity at Gauss points
        assert!(eval_a(&disc, &p, &q, &u, &test).abs() <= 1e-14);
    }

    #[test]
    fn boundary_term_of_constant_traction() {
        let disc = Discretization::with_cells(4).unwrap();
        let p = params();
        let u = FieldVector::from_phase_field(&vec![1.0; disc.mesh().num_nodes()]);
        let mut test = FieldVector::zeros(disc.mesh());
        for (node, xy) in disc.mesh().nodes().iter().enumerate() {
            test.set(node, UY, xy[1]);
        }
        let q = Control::constant(disc.mesh(), 2.5);
        assert_relative_eq!(eval_a(&disc, &p, &q, &u, &test), -2.5, max_relative = 1e-14);
        let ones = Control::constant(disc.mesh(), 1.0);
        assert_relative_eq!(eval_a_prime_q(&disc, &ones, &test), -1.0, max_relative = 1e-14);
        assert_eq!(eval_a_prime_q(&disc, &Control::zeros(disc.mesh()), &test), 0.0);
    }

    #[test]
    fn single_cell_matches_hand_integration() {
        // u = (A x, B y), phi = c constant, test Phi = (x, 0, 1). With e(u) = diag(A, B),
        // sigma = diag(2 mu A + l (A+B), 2 mu B + l (A+B)), e(Phi_u) = diag(1, 0):
        // a = g(c) sigma_xx + G_c/eps (c - 1) + (1-k) c sigma:e(u)   (unit area, grad phi = 0)
        let disc = Discretization::with_cells(2).unwrap();
        let p = ModelParams {
            g_c: 1.3,
            eps: 0.2,
            kappa: 0.01,
            gamma: 1e3,
            eta: 10.0,
            eta0: 1.0,
            mu: 2.0,
            lambda: 3.0,
        };
        let (a_x, b_y, c) = (0.3, -0.1, 0.7);
        let mut u = FieldVector::zeros(disc.mesh());
        let mut test = FieldVector::zeros(disc.mesh());
        for (node, xy) in disc.mesh().nodes().iter().enumerate() {
            u.set(node, UX, a_x * xy[0]);
            u.set(node, UY, b_y * xy[1]);
            u.set(node, PHI, c);
            test.set(node, UX, xy[0]);
            test.set(node, PHI, 1.0);
        }
        let tr = a_x + b_y;
        let sxx = 2.0 * p.mu * a_x + p.lambda * tr;
        let syy = 2.0 * p.mu * b_y + p.lambda * tr;
        let g = (1.0 - p.kappa) * c * c + p.kappa;
        let expected = g * sxx + p.g_c / p.eps * (c - 1.0) + (1.0 - p.kappa) * c * (sxx * a_x + syy * b_y);
        let q = Control::zeros(disc.mesh());
        assert_relative_eq!(eval_a(&disc, &p, &q, &u, &test), expected, max_relative = 1e-13);
    }

    #[test]
    fn jacobian_and_second_derivative_symmetries() {
        let disc = Discretization::with_cells(4).unwrap();
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let u = random_field(&disc, &mut rng, 1e-3);
        let a = random_field(&disc, &mut rng, 1e-3);
        let bvec = random_field(&disc, &mut rng, 1e-3);
        let z = random_field(&disc, &mut rng, 1.0);
        let k = jacobian_a(&disc, &p, &u);
        let scale = k.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(k.asymmetry() <= 1e-14 * scale);
        let ab = eval_a_prime_u(&disc, &p, &u, &a, &bvec);
        let ba = eval_a_prime_u(&disc, &p, &u, &bvec, &a);
        assert_relative_eq!(ab, ba, max_relative = 1e-12);
        let s1 = eval_a_second_uu(&disc, &p, &u, &a, &bvec, &z);
        let s2 = eval_a_second_uu(&disc, &p, &u, &bvec, &a, &z);
        assert_relative_eq!(s1, s2, max_relative = 1e-12);
        let zero = FieldVector::zeros(disc.mesh());
        assert_eq!(eval_a_prime_u(&disc, &p, &u, &zero, &z), 0.0);
        assert_eq!(eval_a_second_uu(&disc, &p, &u, &zero, &a, &z), 0.0);
        assert_eq!(eval_a_second_uu(&disc, &p, &u, &a, &bvec, &zero), 0.0);
    }

    #[test]
    fn jacobian_matches_residual_differences() {
        let disc = Discretization::with_cells(4).unwrap();
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let u = random_field(&disc, &mut rng, 1e-3);
        let du = random_field(&disc, &mut rng, 1e-3);
        let q = Control::constant(disc.mesh(), 3.0);
        let k = jacobian_a(&disc, &p, &u);
        let exact = k.mul_vec(du.as_slice());
        let s = 1e-4;
        let (mut up, mut um) = (u.clone(), u.clone());
        up.axpy(s, &du);
        um.axpy(-s, &du);
        let (rp, rm) = (residual_a(&disc, &p, &q, &up), residual_a(&disc, &p, &q, &um));
        let scale = exact.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..exact.len() {
            let fd = (rp[i] - rm[i]) / (2.0 * s);
            assert!((fd - exact[i]).abs() <= 1e-7 * scale, "dof {i}: {fd} vs {}", exact[i]);
        }
        // a'_u is quadratic in U, so the central difference of K du is exact up to round-off
        let z = random_field(&disc, &mut rng, 1.0);
        let second = second_derivative_vector(&disc, &p, &u, &du, &z);
        let (kp, km) = (jacobian_a(&disc, &p, &up), jacobian_a(&disc, &p, &um));
        let mut fd = vec![0.0; second.len()];
        kp.mul_transpose_vec_add(z.as_slice(), &mut fd);
        let mut back = vec![0.0; second.len()];
        km.mul_transpose_vec_add(z.as_slice(), &mut back);
        let scale = second.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..fd.len() {
            let d = (fd[i] - back[i]) / (2.0 * s);
            assert!((d - second[i]).abs() <= 1e-6 * scale, "dof {i}: {d} vs {}", second[i]);
        }
    }

    #[test]
    fn penalty_coupling_cases() {
        let disc = Discretization::with_cells(4).unwrap();
        let p = params();
        let mesh = disc.mesh();
        let nodes = mesh.num_nodes();
        let prev: Vec<f64> = (0..nodes).map(|k| 0.3 + 0.4 * (k as f64 / nodes as f64)).collect();
        let ctx = StepContext {
            dt: 0.1,
            phi_prev: &prev,
            params: &p,
        };
        let ones = FieldVector::from_phase_field(&vec![1.0; nodes]);
        assert_eq!(eval_penalty_coupling(&ctx, mesh, &prev, &ones), 0.0);

        let c = 0.01;
        let up: Vec<f64> = prev.iter().map(|v| v + c).collect();
        assert_relative_eq!(
            eval_penalty_coupling(&ctx, mesh, &up, &ones),
            (p.gamma + p.eta) * c,
            max_relative = 1e-12
        );
        let down: Vec<f64> = prev.iter().map(|v| v - c).collect();
        assert_relative_eq!(eval_penalty_coupling(&ctx, mesh, &down, &ones), -p.eta * c, max_relative = 1e-12);
        assert_eq!(active_points(mesh, &down, &prev), 0);
        assert_eq!(active_points(mesh, &up, &prev), 4 * mesh.num_cells());
    }

    #[test]
    fn penalty_matrix_is_jacobian_of_penalty_vector() {
        let disc = Discretization::with_cells(4).unwrap();
        let p = params();
        let mesh = disc.mesh();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let prev: Vec<f64> = (0..mesh.num_nodes()).map(|_| rng.gen_range(0.0..1.0)).collect();
        let cur: Vec<f64> = prev.iter().map(|v| v + rng.gen_range(-0.2..0.2)).collect();
        let b = penalty_matrix(&disc, &p, &cur, &prev);
        // With the indicator frozen the penalty is linear in the jump.
        let diff = FieldVector::from_phase_field(&cur.iter().zip(&prev).map(|(a, b)| a - b).collect::<Vec<_>>());
        let v = penalty_vector(mesh, &p, &cur, &prev);
        let bv = b.mul_vec(diff.as_slice());
        for (x, y) in v.iter().zip(&bv) {
            assert!((x - y).abs() <= 1e-10 * (1.0 + x.abs()));
        }
    }
}

//! Acceptance criteria, one line each. Run with `cargo test --test acceptance`.
//! Set `PFFC_ACCEPT_FULL=1` to include the full-scale reference run.

use std::process::ExitCode;
use std::time::Instant;

use pffc_core::experiment::{crack_extent, trivial_forward_check, ExperimentConfig, TIP_THRESHOLD};
use pffc_core::fdcheck::{
    default_steps, duality_check, fd_check_gradient, fd_check_hessian, kernel_checks, random_control, random_field,
    residual_equivalence, FdReport,
};
use pffc_core::mesh::Discretization;
use pffc_core::{Control, OptResult, Problem, Result, Trajectory};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 20;
const KERNEL_TOL: f64 = 1e-6;
const ORDER: (f64, f64) = (1.7, 2.3);
const EQUIVALENCE_TOL: f64 = 1e-13;
const DUALITY_TOL: f64 = 1e-10;
const GRADIENT_TOL: f64 = 1e-4;
const HESSIAN_TOL: f64 = 1e-3;
const SYMMETRY_TOL: f64 = 1e-8;
const PENALTY_FACTOR: f64 = 10.0;
const REDUCED_NEWTON_TOL: f64 = 1e-8;
const FULL_FORCE: (f64, f64) = (2473.4, 0.25);
const FULL_COST: (f64, f64) = (4.4582e-3, 0.30);
const FULL_MAX_ITER: usize = 20;

struct Outcome {
    passed: bool,
    detail: String,
}

fn desk() -> ExperimentConfig {
    ExperimentConfig::preset("desk").unwrap()
}

fn small(n: usize, steps: usize) -> ExperimentConfig {
    let mut c = desk();
    c.mesh = n;
    c.steps = steps;
    c
}

fn check_control(c: &ExperimentConfig, p: &Problem) -> Control {
    c.check_control(p.disc.mesh())
}

fn directions(p: &Problem, count: usize) -> Vec<Control> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    (0..count).map(|_| random_control(&p.disc, &mut rng, 1.0)).collect()
}

fn c1() -> Result<Outcome> {
    let disc = Discretization::with_cells(2)?;
    let (first, second) = kernel_checks(&disc, &desk().model_params()?, SEED, &default_steps());
    let describe = |r: &FdReport| match (r.exact, r.order) {
        (true, _) => format!("{:.2e} (exact)", r.min_rel_error),
        (false, Some(p)) => format!("{:.2e} (order {p:.2})", r.min_rel_error),
        (false, None) => format!("{:.2e} (order n/a)", r.min_rel_error),
    };
    Ok(Outcome {
        passed: first.passes(KERNEL_TOL, Some(ORDER)) && second.passes(KERNEL_TOL, Some(ORDER)),
        detail: format!("a'_u {}, a''_uu {}", describe(&first), describe(&second)),
    })
}

fn c2() -> Result<Outcome> {
    let p = desk().build_problem()?;
    let r = trivial_forward_check(&p)?;
    Ok(Outcome {
        passed: r.passed,
        detail: r.detail,
    })
}

fn c3() -> Result<Outcome> {
    let p = small(4, 3).build_problem()?;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let states = (0..p.times.len()).map(|_| random_field(&p.disc, &mut rng, 1e-3)).collect();
        let traj = Trajectory::new(p.times.clone(), states)?;
        let q = random_control(&p.disc, &mut rng, 1e3);
        let initial = random_field(&p.disc, &mut rng, 1e-3);
        worst = worst.max(residual_equivalence(&p.disc, &p.params, &q, &traj, &initial));
    }
    Ok(Outcome {
        passed: worst <= EQUIVALENCE_TOL,
        detail: format!("max abs difference {worst:.2e} over 5 random trajectories"),
    })
}

fn c4() -> Result<Outcome> {
    let c = small(4, 3);
    let p = c.build_problem()?;
    let gaps = duality_check(&p, &check_control(&c, &p), &directions(&p, 10))?;
    let worst = gaps.iter().cloned().fold(0.0, f64::max);
    Ok(Outcome {
        passed: worst <= DUALITY_TOL,
        detail: format!("max relative gap {worst:.2e} over 10 directions"),
    })
}

fn c5() -> Result<Outcome> {
    let c = desk();
    let p = c.build_problem()?;
    let reports = fd_check_gradient(&p, &check_control(&c, &p), &directions(&p, 3), &default_steps())?;
    let errs: Vec<String> = reports.iter().map(|r| format!("{:.2e}", r.min_rel_error)).collect();
    Ok(Outcome {
        passed: reports.iter().all(|r| r.min_rel_error <= GRADIENT_TOL),
        detail: format!("min relative errors [{}]", errs.join(", ")),
    })
}

fn c6() -> Result<Outcome> {
    let c = desk();
    let p = c.build_problem()?;
    let h = fd_check_hessian(&p, &check_control(&c, &p), &directions(&p, 3), &default_steps())?;
    let errs: Vec<String> = h.reports.iter().map(|r| format!("{:.2e}", r.min_rel_error)).collect();
    Ok(Outcome {
        passed: h.reports.iter().all(|r| r.min_rel_error <= HESSIAN_TOL) && h.symmetry <= SYMMETRY_TOL,
        detail: format!("min relative errors [{}], asymmetry {:.2e}", errs.join(", "), h.symmetry),
    })
}

fn c7() -> Result<Outcome> {
    let base = desk();
    let q = check_control(&base, &base.build_problem()?);
    let mut growth = Vec::new();
    for gamma in [1e3, 1e5] {
        let mut c = base.clone();
        c.gamma = gamma;
        let (_, report) = c.build_problem()?.forward(&q)?;
        growth.push(report.max_violation_sq());
    }
    let ratio = growth[0] / growth[1];
    Ok(Outcome {
        passed: ratio >= PENALTY_FACTOR,
        detail: format!("max growth^2 {:.3e} -> {:.3e}, factor {ratio:.1}", growth[0], growth[1]),
    })
}

fn optimize(c: &ExperimentConfig) -> Result<(Problem, OptResult)> {
    let p = c.build_problem()?;
    let q0 = Control::constant(p.disc.mesh(), c.q0);
    let r = p.newton_cg(&q0, &c.opt)?;
    Ok((p, r))
}

fn reduced(preset: &str) -> ExperimentConfig {
    let mut c = ExperimentConfig::preset(preset).unwrap();
    c.mesh = 32;
    c.steps = 20;
    c.opt.newton_tol = REDUCED_NEWTON_TOL;
    c.opt.stop_rule = pffc_core::StopRule::Relative;
    c
}

fn monotone(q: &[f64], increasing: bool) -> bool {
    q.windows(2).all(|w| if increasing { w[1] >= w[0] } else { w[1] <= w[0] })
}

fn yes(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn final_phi(r: &OptResult) -> Option<Vec<f64>> {
    r.trajectory.as_ref().map(|t| t.state(t.steps()).phi())
}

fn c8() -> Result<Outcome> {
    let c = reduced("example1");
    let (p, r) = optimize(&c)?;
    let mesh = p.disc.mesh();
    let converged = r.converged();
    let head: Vec<f64> = r.records.iter().take(4).map(|x| x.cost).collect();
    let decreasing = head.len() == 4 && head.windows(2).all(|w| w[1] < w[0]);
    let rel0 = r.records.first().map(|x| x.rel_residual) == Some(1.0);
    let increasing = monotone(r.q.as_slice(), true);
    let tip = final_phi(&r).and_then(|phi| crack_extent(mesh, &phi, TIP_THRESHOLD)).map(|e| e.0);
    let tip_moved = tip.is_some_and(|x| x < 0.5);
    let q = r.q.as_slice();
    Ok(Outcome {
        passed: converged && decreasing && rel0 && increasing && tip_moved,
        detail: format!(
            "converged {} ({} outer), cost decreasing over 4 iterations {}, rel_residual(0) = 1 {}, \
             force increasing {} (q(0) {:.1}, q(1) {:.1}), final tip {:?} below 0.5 {}",
            yes(converged),
            r.records.len().saturating_sub(1),
            yes(decreasing),
            yes(rel0),
            yes(increasing),
            q[0],
            q[q.len() - 1],
            tip,
            yes(tip_moved)
        ),
    })
}

fn c9() -> Result<Outcome> {
    let c = ExperimentConfig::preset("example1")?;
    let (p, r) = optimize(&c)?;
    let last = r.records.last().expect("at least one record");
    // tables report the time-step weighted cost
    let cost = last.cost * p.times[1];
    let force_ok = (last.max_force - FULL_FORCE.0).abs() <= FULL_FORCE.1 * FULL_FORCE.0;
    let cost_ok = (cost - FULL_COST.0).abs() <= FULL_COST.1 * FULL_COST.0;
    let iters = r.records.len() - 1;
    Ok(Outcome {
        passed: r.converged() && force_ok && cost_ok && iters <= FULL_MAX_ITER,
        detail: format!(
            "max force {:.1} (target {} +-25%), dt-weighted cost {:.4e} (target {:.4e} +-30%), {} outer iterations",
            last.max_force, FULL_FORCE.0, cost, FULL_COST.0, iters
        ),
    })
}

fn c10() -> Result<Outcome> {
    let c = reduced("example2");
    let (p, r) = optimize(&c)?;
    let mesh = p.disc.mesh();
    let decreasing = monotone(r.q.as_slice(), false);
    let before = crack_extent(mesh, &p.initial.phi(), TIP_THRESHOLD);
    let after = final_phi(&r).and_then(|phi| crack_extent(mesh, &phi, TIP_THRESHOLD));
    let (one_sided, growth) = match (before, after) {
        (Some(b), Some(a)) => {
            let left = b.0 - a.0;
            let right = (a.1 - b.1).abs();
            (left > right, format!("left tip advance {left:.4}, right tip movement {right:.4}"))
        }
        _ => (false, "no crack on the centre line".to_string()),
    };
    let q = r.q.as_slice();
    Ok(Outcome {
        passed: r.converged() && decreasing && one_sided,
        detail: format!(
            "converged {}, force decreasing {} (q(0) {:.1}, q(1) {:.1}), one-sided growth {} ({growth})",
            yes(r.converged()),
            yes(decreasing),
            q[0],
            q[q.len() - 1],
            yes(one_sided)
        ),
    })
}

fn main() -> ExitCode {
    if std::env::args().any(|a| a == "--list") {
        // test harness discovery
        return ExitCode::SUCCESS;
    }
    let full = std::env::var("PFFC_ACCEPT_FULL").is_ok_and(|v| v == "1");
    type Criterion = fn() -> Result<Outcome>;
    let criteria: [(u32, &str, Criterion, bool); 10] = [
        (1, "kernel derivative consistency", c1, true),
        (2, "trivial forward exactness", c2, true),
        (3, "space-time residual equivalence", c3, true),
        (4, "gradient-tangent duality", c4, true),
        (5, "reduced gradient FD", c5, true),
        (6, "Hessian-vector FD and symmetry", c6, true),
        (7, "irreversibility penalty scaling", c7, true),
        (8, "Example 1 reduced scale", c8, true),
        (9, "Example 1 full scale (reference)", c9, full),
        (10, "Example 2 reduced scale", c10, true),
    ];
    let mut failures = 0;
    for (id, name, run, enabled) in criteria {
        if !enabled {
            println!("SKIP criterion {id} {name}: set PFFC_ACCEPT_FULL=1 to run");
            continue;
        }
        let start = Instant::now();
        let (passed, detail) = match run() {
            Ok(o) => (o.passed, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        failures += usize::from(!passed);
        println!(
            "{} criterion {id} {name}: {detail} [{:.1} s]",
            if passed { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} criteria failed");
        ExitCode::FAILURE
    }
}

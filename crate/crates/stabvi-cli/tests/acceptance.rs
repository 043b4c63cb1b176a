//! Acceptance suite: one test per criterion, each printing a pass/fail line
//! (run with `cargo test --test acceptance -- --nocapture` to see them all).
//!
//! Expected values tagged as oracle-derived were computed independently
//! before being frozen here: the scalar Riccati fixed point from its
//! quadratic formula, the admissible-error constants from the
//! reciprocal-root form (the two roots of `c^2 - (2 + k g) c + 1 = 0`
//! multiply to one) cross-checked against 60-digit decimal arithmetic, and
//! the policy-evaluation limit from the closed-form geometric series.

use std::sync::{Arc, OnceLock};
use std::time::Instant;

use stabvi_cli::config::validate_config;
use stabvi_cli::pipelines::run_pipeline;
use stabvi_cli::ExitCode;
use stabvi_core::backup::{BackupOptions, Policy};
use stabvi_core::engine_avi::{
    c_bound_evolving_policy, c_bound_fixed_policy, gamma_of, run_avi, AviConfig, AviRun,
};
use stabvi_core::engine_exact::{
    finite_horizon_oracle, policy_evaluation_quadratic, run_stabilizing_vi,
    run_stabilizing_vi_chain, LinearQuadraticParts, PolicyEvalConfig, ViConfig, ViRun,
};
use stabvi_core::problem::{
    riccati_oracle, AdmissiblePolicySpec, AdmissibilityCheck, BoxDomain, ControlSet,
    LinearFeedback, LinearSystem, Poly2System, ProblemInstance, QuadraticStateCost,
};
use stabvi_core::stability::{
    eroa_evolving_avi, eroa_evolving_exact, largest_contained_level, one_step_invariance,
    simulate_evolving_policy, SimOptions,
};
use stabvi_core::valuefn::{ErrorModel, ErrorShape, Grid, QuadraticValueFunction, ValueFunction};

/// Oracle constants, frozen from independent computation (see module docs).
const P_STAR: f64 = 1.7737707217414372;
const GAMMA_B1: f64 = 1.36 / 0.75;
const C_BOUND_FIXED_AT_GAMMA_B1: f64 = 0.10936166872326408;
const C_BOUND_EVOLVING_AT_GAMMA_B1: f64 = 0.06080557255576542;

fn verdict(criterion: &str, pass: bool, detail: &str) {
    println!("[acceptance] {criterion}: {} — {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "{criterion} failed: {detail}");
}

fn b1_problem(control: ControlSet) -> Arc<ProblemInstance> {
    Arc::new(
        ProblemInstance::new(
            Box::new(LinearSystem::scalar(1.1, 1.0)),
            Box::new(QuadraticStateCost::new(vec![1.0]).unwrap()),
            vec![1.0],
            BoxDomain::new(vec![-1.0], vec![1.0]).unwrap(),
            control,
        )
        .unwrap(),
    )
}

fn b1_spec() -> AdmissiblePolicySpec {
    AdmissiblePolicySpec {
        policy: Policy::Linear(LinearFeedback::scalar(0.6)),
        name: "b1 feedback".into(),
    }
}

fn b3_problem(control: ControlSet) -> Arc<ProblemInstance> {
    Arc::new(
        ProblemInstance::new(
            Box::new(Poly2System {
                lin: [[0.9, 0.1], [0.0, 0.7]],
                cubic_x1: [0.0, 0.1],
                gain_u: [0.0, 0.2],
            }),
            Box::new(QuadraticStateCost::new(vec![1.0, 1.0]).unwrap()),
            vec![1.0],
            BoxDomain::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap(),
            control,
        )
        .unwrap(),
    )
}

fn b3_spec() -> AdmissiblePolicySpec {
    AdmissiblePolicySpec {
        policy: Policy::Linear(LinearFeedback::new(2, 1, vec![0.5, 0.5]).unwrap()),
        name: "b3 feedback".into(),
    }
}

#[test]
fn criterion_01_monotone_non_increase_over_200_iterations() {
    let start = Instant::now();
    let forced = |adm_eps: f64| ViConfig {
        pol_eval: PolicyEvalConfig { delta: 1e-11, max_iter: 2_000_000 },
        tol: -1.0, // never stop early: exactly 200 sweeps
        max_iter: 200,
        backup: BackupOptions::default(),
        check_monotone_down: true,
        monotone_tol: 1e-9,
        admissibility: AdmissibilityCheck { eps: adm_eps, k_max: 500 },
    };

    let p1 = b1_problem(ControlSet::uniform_1d(-1.0, 1.0, 401).unwrap());
    let g1 = Arc::new(Grid::uniform(p1.domain(), &[201]).unwrap());
    let run1 = run_stabilizing_vi(&p1, &b1_spec(), &g1, &forced(1e-3), &(), None).unwrap();

    let p3 = b3_problem(ControlSet::uniform_1d(-1.0, 1.0, 101).unwrap());
    let g3 = Arc::new(Grid::uniform(p3.domain(), &[101, 101]).unwrap());
    let run3 = run_stabilizing_vi(&p3, &b3_spec(), &g3, &forced(0.05), &(), None).unwrap();

    let worst = |run: &ViRun| {
        run.trace
            .rows()
            .iter()
            .map(|r| r.max_monotonicity_residual)
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let (w1, w3) = (worst(&run1), worst(&run3));
    let elapsed = start.elapsed().as_secs_f64();
    assert_eq!(run1.trace.rows().len(), 200);
    assert_eq!(run3.trace.rows().len(), 200);
    verdict(
        "criterion 1 (monotone non-increase, 200 iterations, scalar + planar)",
        w1 <= 1e-9 && w3 <= 1e-9 && elapsed < 60.0,
        &format!("worst residuals {w1:.3e} (scalar, 201 nodes) / {w3:.3e} (planar, 101x101); {elapsed:.1} s (< 60 s)"),
    );
}

#[test]
fn criterion_02_convergence_to_riccati_solution() {
    let start = Instant::now();
    // 401 log-spaced nodes and 401 log-spaced candidates: relative pitch is
    // uniform in |x|, which is what bounds the relative error at all scales
    let p = b1_problem(ControlSet::log_symmetric_1d(1e-5, 1.0, 200).unwrap());
    assert_eq!(p.control_set().len(), 401);
    let grid = Arc::new(Grid::log_spaced(p.domain(), &[1e-4], 200).unwrap());
    assert_eq!(grid.num_nodes(), 401);
    let cfg = ViConfig {
        pol_eval: PolicyEvalConfig { delta: 1e-11, max_iter: 2_000_000 },
        tol: 1e-8,
        max_iter: 10_000,
        ..Default::default()
    };
    let run = run_stabilizing_vi(&p, &b1_spec(), &grid, &cfg, &(), None).unwrap();
    assert!(run.converged);

    let p_star = riccati_oracle(1.1, 1.0, 1.0, 1.0).unwrap();
    // quadratic-formula cross-check of the oracle, plus the frozen literal
    let formula = (1.21 + (1.21_f64 * 1.21 + 4.0).sqrt()) / 2.0;
    assert!((p_star - formula).abs() < 1e-10);
    assert!((p_star - P_STAR).abs() < 1e-12);

    let v = run.final_value();
    let mut worst = 0.0_f64;
    let mut worst_x = 0.0;
    for node in 0..grid.num_nodes() {
        let x = grid.node(node)[0];
        if x.abs() > 0.8 {
            continue;
        }
        let exact = p_star * x * x;
        let rel = (v.value_at(node) - exact).abs() / exact.max(1e-6);
        if rel > worst {
            worst = rel;
            worst_x = x;
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        "criterion 2 (limit tracks the Riccati oracle)",
        worst <= 2e-2 && elapsed < 60.0,
        &format!("sup relative error {worst:.3e} (worst at x={worst_x:.4e}, gate 2e-2); p* = {p_star:.8}; {elapsed:.1} s (< 60 s)"),
    );
}

#[test]
fn criterion_03_finite_horizon_equivalence() {
    let start = Instant::now();
    let p = b1_problem(ControlSet::uniform_1d(-1.0, 1.0, 21).unwrap());
    let lq = LinearQuadraticParts {
        n: 1,
        m: 1,
        a: vec![1.1],
        b: vec![1.0],
        q: vec![1.0],
        r: vec![1.0],
    };
    let probes: Vec<Vec<f64>> =
        (0..25).map(|j| vec![-0.9 + 1.8 * j as f64 / 24.0]).collect();
    let pol_eval = PolicyEvalConfig { delta: 1e-13, max_iter: 100_000 };
    let run = run_stabilizing_vi_chain(&p, &lq, &[0.6], 3, &pol_eval, &probes, &()).unwrap();
    let psi = &run.snapshots[0];
    let mut worst = 0.0_f64;
    for i in 0..=3usize {
        for x0 in &probes {
            let vi = run.snapshots[i].eval(x0).unwrap();
            let oracle = finite_horizon_oracle(&p, psi, x0, i, 4).unwrap();
            worst = worst.max((vi - oracle.value).abs());
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        "criterion 3 (value iterate equals finite-horizon enumeration, exact path)",
        worst <= 1e-9 && elapsed < 30.0,
        &format!("max |V_i(x0) - oracle| = {worst:.3e} over i in 0..=3 and 25 starts (gate 1e-9); {elapsed:.1} s (< 30 s)"),
    );
}

#[test]
fn criterion_04_policy_evaluation_geometric_series() {
    let start = Instant::now();
    let lq = LinearQuadraticParts {
        n: 1,
        m: 1,
        a: vec![1.1],
        b: vec![1.0],
        q: vec![1.0],
        r: vec![1.0],
    };
    // grid nodes double as the monotonicity probes
    let probes: Vec<Vec<f64>> = (0..=200).map(|k| vec![-1.0 + 0.01 * k as f64]).collect();
    let cfg = PolicyEvalConfig { delta: 1e-13, max_iter: 10_000 };
    let v0 = policy_evaluation_quadratic(&lq, &[0.6], &cfg, &probes).unwrap();
    // closed loop 0.5x: the limit is the geometric series (1 + 0.36)/(1 - 0.25)
    let expected = 1.36 / 0.75;
    let mut worst = 0.0_f64;
    for x in probes.iter().filter(|x| x[0] != 0.0) {
        let rel = (v0.eval(x) - expected * x[0] * x[0]).abs() / (expected * x[0] * x[0]);
        worst = worst.max(rel);
    }
    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        "criterion 4 (policy evaluation converges monotonically to the series limit)",
        worst <= 1e-6 && elapsed < 10.0,
        &format!("sup relative error vs 1.81333*x^2 is {worst:.3e} over 201 nodes (gate 1e-6); monotone gate held; {elapsed:.1} s (< 10 s)"),
    );
}

/// Shared approximate runs: c in {0.02, 0.05, 0.1} under both error shapes,
/// 50 iterations each, on the default scalar grids.
fn shared_avi_runs() -> &'static (Vec<(f64, &'static str, AviRun)>, f64) {
    static RUNS: OnceLock<(Vec<(f64, &'static str, AviRun)>, f64)> = OnceLock::new();
    RUNS.get_or_init(|| {
        let start = Instant::now();
        let p = b1_problem(ControlSet::uniform_1d(-1.0, 1.0, 401).unwrap());
        let grid = Arc::new(Grid::uniform(p.domain(), &[201]).unwrap());
        let cfg = AviConfig {
            pol_eval: PolicyEvalConfig { delta: 1e-11, max_iter: 2_000_000 },
            iterations: 50,
            ..Default::default()
        };
        let mut runs = Vec::new();
        for c in [0.02, 0.05, 0.1] {
            for (name, shape) in [
                ("sinusoid", ErrorShape::SignedSinusoid { frequency: 1.0, phase: 0.0 }),
                ("uniform", ErrorShape::SeededUniform),
            ] {
                let em = ErrorModel { c, shape: shape.clone(), seed: 42 };
                let run = run_avi(&p, &b1_spec(), &em, &grid, &cfg, &()).unwrap();
                runs.push((c, name, run));
            }
        }
        (runs, start.elapsed().as_secs_f64())
    })
}

#[test]
fn criterion_05_sandwich_bounds() {
    let (runs, elapsed) = shared_avi_runs();
    let mut worst = f64::INFINITY;
    let mut where_ = String::new();
    for (c, shape, run) in runs {
        let m = run
            .trace
            .iter()
            .map(|r| r.sandwich_margin)
            .fold(run.init_sandwich_margin, f64::min);
        if m < worst {
            worst = m;
            where_ = format!("c={c}, {shape}");
        }
    }
    verdict(
        "criterion 5 (exact bounding runs sandwich the approximate iterates)",
        worst >= -1e-9 && *elapsed < 120.0,
        &format!("min margin {worst:.3e} over 6 runs x 50 iterations (worst in {where_}; gate -1e-9); shared runs took {elapsed:.1} s (< 120 s)"),
    );
}

#[test]
fn criterion_06_semi_monotonicity() {
    let (runs, _) = shared_avi_runs();
    let mut worst = f64::NEG_INFINITY;
    let mut where_ = String::new();
    for (c, shape, run) in runs {
        let m = run
            .trace
            .iter()
            .map(|r| r.semi_monotonicity_margin)
            .fold(f64::NEG_INFINITY, f64::max);
        if m > worst {
            worst = m;
            where_ = format!("c={c}, {shape}");
        }
    }
    verdict(
        "criterion 6 (rollout-relaxed monotonicity of the approximate iterates)",
        worst <= 1e-9,
        &format!("max residual V_next - V - 2c*breve_V = {worst:.3e} over 6 runs (worst in {where_}; gate 1e-9)"),
    );
}

#[test]
fn criterion_07_admissible_error_constants() {
    // gamma from the scalar benchmark's closed-form seed: the ratio
    // V0(x)/U(x,0) is the constant 1.36/0.75
    let lq = LinearQuadraticParts {
        n: 1,
        m: 1,
        a: vec![1.1],
        b: vec![1.0],
        q: vec![1.0],
        r: vec![1.0],
    };
    let probes: Vec<Vec<f64>> = (0..=40).map(|k| vec![-1.0 + 0.05 * k as f64]).collect();
    let cfg = PolicyEvalConfig { delta: 1e-14, max_iter: 10_000 };
    let v0 = policy_evaluation_quadratic(&lq, &[0.6], &cfg, &probes).unwrap();
    let p = b1_problem(ControlSet::uniform_1d(-1.0, 1.0, 41).unwrap());
    let grid = Arc::new(Grid::uniform(p.domain(), &[201]).unwrap());
    let sampled = ValueFunction::Quadratic(v0).sample_on(&grid).unwrap();
    let gamma = gamma_of(&p, &sampled).unwrap();
    assert!(
        (gamma - GAMMA_B1).abs() <= 1e-9,
        "gamma {gamma} should be the constant quadratic ratio {GAMMA_B1}"
    );

    let fixed = c_bound_fixed_policy(gamma);
    let evolving = c_bound_evolving_policy(gamma);
    // independent route: the two roots of c^2 - (2 + k gamma) c + 1 = 0
    // multiply to 1, so the bound equals 1 / (larger root)
    let fixed_oracle = 1.0 / (1.0 + 2.0 * gamma + (4.0 * gamma * gamma + 4.0 * gamma).sqrt());
    let evolving_oracle =
        1.0 / (1.0 + 4.0 * gamma + (16.0 * gamma * gamma + 8.0 * gamma).sqrt());
    let ok = (fixed - fixed_oracle).abs() <= 1e-12
        && (evolving - evolving_oracle).abs() <= 1e-12
        && (fixed - C_BOUND_FIXED_AT_GAMMA_B1).abs() <= 1e-9
        && (evolving - C_BOUND_EVOLVING_AT_GAMMA_B1).abs() <= 1e-9
        && evolving < fixed
        && fixed > 0.0
        && fixed <= 1.0
        && evolving > 0.0
        && evolving <= 1.0
        && (c_bound_fixed_policy(0.0) - 1.0).abs() <= 1e-9
        && (c_bound_evolving_policy(0.0) - 1.0).abs() <= 1e-9;
    verdict(
        "criterion 7 (admissible-error constants at the benchmark gamma)",
        ok,
        &format!(
            "gamma = {gamma:.6}; fixed bound = {fixed:.8} and evolving bound = {evolving:.8} \
             match the reciprocal-root oracle to 1e-12, lie in (0,1], order strictly, and \
             tend to 1 as gamma -> 0"
        ),
    );
}

#[test]
fn criterion_08_lyapunov_decrease_and_invariance_under_bounded_error() {
    // c = 0.05 sits below the fixed-policy bound even at the conservative
    // grid gamma, so the decrease guarantee applies
    let (runs, _) = shared_avi_runs();
    let (_, _, run) = runs
        .iter()
        .find(|(c, shape, _)| *c == 0.05 && *shape == "sinusoid")
        .expect("shared run exists");
    let grid_bound = c_bound_fixed_policy(run.gamma);
    assert!(
        run.c < grid_bound,
        "c = {} must sit below the grid-gamma bound {grid_bound}",
        run.c
    );

    let sampled: Vec<usize> = (0..10).map(|j| j * 49 / 9).collect();
    let mut worst_delta = f64::NEG_INFINITY;
    let mut violations = 0usize;
    let mut checked = 0usize;
    let p = b1_problem(ControlSet::uniform_1d(-1.0, 1.0, 401).unwrap());
    for &i in &sampled {
        worst_delta = worst_delta.max(run.trace[i].lyapunov_margin);
        let (_, set) = largest_contained_level(&run.snapshots[i], 1e-6).unwrap();
        let report =
            one_step_invariance(&p, &set, &run.grid, run.policies[i].as_ref(), &run.frozen)
                .unwrap();
        checked += report.checked;
        violations += report.violations;
    }
    verdict(
        "criterion 8 (strict value decrease and sublevel invariance under bounded error)",
        worst_delta < 0.0 && violations == 0,
        &format!(
            "max Delta V_hat = {worst_delta:.3e} (< 0) and {violations} invariance violation(s) \
             over {checked} member nodes at 10 sampled iterations (c = 0.05 < {grid_bound:.4})"
        ),
    );
}

/// Shared log-grid region-of-attraction runs for criteria 9 and 10.
fn shared_eroa_runs() -> &'static (Arc<ProblemInstance>, ViRun, AviRun) {
    static RUNS: OnceLock<(Arc<ProblemInstance>, ViRun, AviRun)> = OnceLock::new();
    RUNS.get_or_init(|| {
        let p = b1_problem(ControlSet::log_symmetric_1d(1e-5, 1.0, 200).unwrap());
        let grid = Arc::new(Grid::log_spaced(p.domain(), &[1e-4], 200).unwrap());
        let cfg = ViConfig {
            pol_eval: PolicyEvalConfig { delta: 1e-11, max_iter: 2_000_000 },
            tol: 1e-8,
            max_iter: 10_000,
            ..Default::default()
        };
        let exact = run_stabilizing_vi(&p, &b1_spec(), &grid, &cfg, &(), None).unwrap();
        let avi_cfg = AviConfig {
            pol_eval: PolicyEvalConfig { delta: 1e-11, max_iter: 2_000_000 },
            iterations: 50,
            ..Default::default()
        };
        let em = ErrorModel {
            c: 0.02,
            shape: ErrorShape::SignedSinusoid { frequency: 1.0, phase: 0.0 },
            seed: 7,
        };
        let avi = run_avi(&p, &b1_spec(), &em, &grid, &avi_cfg, &()).unwrap();
        (p, exact, avi)
    })
}

#[test]
fn criterion_09_evolving_policy_convergence_from_the_estimate() {
    let (p, run, _) = shared_eroa_runs();
    let est = eroa_evolving_exact(run, 1e-6).unwrap();
    let v0 = &run.snapshots[0];
    let opts = SimOptions { k_max: 2000, eps: 1e-3 };
    let mut soft = 0usize;
    let mut sum_violations = 0usize;
    let mut total = 0usize;
    for node in est.mask.member_nodes() {
        let x0 = run.grid.node(node);
        let rec = simulate_evolving_policy(p, &run.policies, None, &x0, opts).unwrap();
        total += 1;
        if rec.exited || rec.steps_to_eps.is_none() {
            soft += 1;
        }
        let bound = v0.value_at(node) * (1.0 + 1e-6);
        if rec.cumulative_utility.iter().any(|s| *s > bound) {
            sum_violations += 1;
        }
    }
    let pass = soft == 0 && sum_violations == 0 && total > 100;
    verdict(
        "criterion 9 (every estimate node converges under the evolving policy, scalar)",
        pass,
        &format!(
            "{total} mask nodes: 0 required — got {soft} soft failure(s) (reach 1e-3 within \
             2000 steps, no exits) and {sum_violations} partial-sum violation(s) of \
             V0(x0)*(1+1e-6)"
        ),
    );

    // planar benchmark: the rate is reported, not gated
    let p3 = b3_problem(ControlSet::uniform_1d(-1.0, 1.0, 101).unwrap());
    let g3 = Arc::new(Grid::uniform(p3.domain(), &[61, 61]).unwrap());
    let cfg = ViConfig {
        pol_eval: PolicyEvalConfig { delta: 1e-11, max_iter: 2_000_000 },
        admissibility: AdmissibilityCheck { eps: 0.05, k_max: 500 },
        ..Default::default()
    };
    let run3 = run_stabilizing_vi(&p3, &b3_spec(), &g3, &cfg, &(), None).unwrap();
    let est3 = eroa_evolving_exact(&run3, 1e-6).unwrap();
    let mut soft3 = 0usize;
    let mut total3 = 0usize;
    for node in est3.mask.member_nodes() {
        let x0 = run3.grid.node(node);
        let rec = simulate_evolving_policy(&p3, &run3.policies, None, &x0, opts).unwrap();
        total3 += 1;
        if rec.exited || rec.steps_to_eps.is_none() {
            soft3 += 1;
        }
    }
    println!(
        "[acceptance] criterion 9 (planar, reported): soft-failure rate {:.4} ({soft3} of {total3})",
        soft3 as f64 / total3.max(1) as f64
    );
}

#[test]
fn criterion_10_trajectories_stay_inside_the_limit_set() {
    let (p, run, avi) = shared_eroa_runs();
    let opts = SimOptions { k_max: 2000, eps: 1e-3 };

    // exact case: the final iterate stands in for the optimal value function
    let est = eroa_evolving_exact(run, 1e-6).unwrap();
    let v_limit = run.final_value();
    let mut worst_exact = f64::NEG_INFINITY;
    let mut violations = 0usize;
    for node in est.mask.member_nodes() {
        let x0 = run.grid.node(node);
        let rec = simulate_evolving_policy(p, &run.policies, Some(v_limit), &x0, opts).unwrap();
        for v in &rec.values {
            worst_exact = worst_exact.max(v - est.level);
            if *v > est.level * (1.0 + 1e-9) {
                violations += 1;
            }
        }
    }

    // approximate case: containment is audited against the computable
    // surrogate, twice the converged lower bounding run
    let est_avi = eroa_evolving_avi(avi, 1e-6).unwrap();
    let mut worst_avi = f64::NEG_INFINITY;
    let mut violations_avi = 0usize;
    for node in est_avi.mask.member_nodes() {
        let x0 = avi.grid.node(node);
        let rec =
            simulate_evolving_policy(p, &avi.policies, Some(&avi.lower_converged), &x0, opts)
                .unwrap();
        for v in &rec.values {
            worst_avi = worst_avi.max(v - est_avi.level / 2.0);
            if *v > (est_avi.level / 2.0) * (1.0 + 1e-9) {
                violations_avi += 1;
            }
        }
    }
    verdict(
        "criterion 10 (containment in the limit sublevel set, exact and approximate)",
        violations == 0 && violations_avi == 0,
        &format!(
            "exact: worst V_limit margin {worst_exact:.3e} below r = {:.6} (0 violations); \
             approximate: worst surrogate margin {worst_avi:.3e} below r/2 = {:.6} (0 violations)",
            est.level,
            est_avi.level / 2.0
        ),
    );
}

#[test]
fn criterion_11_byte_identical_reruns() {
    let text = "pipeline = theorem_suite\ngrid_kind = log\ngrid_per_side = 60\n\
                grid_x_min = 1e-4\ncontrol_kind = log\ncontrol_per_side = 60\n\
                control_u_min = 1e-5\ndelta = 1e-11\nc = 0.02\nerror_shape = uniform\n\
                seed = 2024\navi_iterations = 25\n";
    let cfg = validate_config(text).unwrap();
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    let o1 = run_pipeline(&cfg, d1.path()).unwrap();
    let o2 = run_pipeline(&cfg, d2.path()).unwrap();
    assert_eq!(o1.exit, ExitCode::Ok);
    let mut names: Vec<String> = std::fs::read_dir(d1.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    let mut identical = true;
    for name in &names {
        let a = std::fs::read(d1.path().join(name)).unwrap();
        let b = std::fs::read(d2.path().join(name)).unwrap();
        if a != b {
            identical = false;
        }
    }
    verdict(
        "criterion 11 (reruns are byte-identical)",
        identical && !names.is_empty(),
        &format!("{} artifacts (verdict + traces + snapshots + masks + trajectories) compared byte-for-byte across two runs", names.len()),
    );
}

//! Problem construction from a validated configuration.
//!
//! Three system families are wired up: the scalar linear plant
//! `x+ = a x + b u`, the planar linear plant `x+ = A x + B u`, and the planar
//! polynomial plant `f_i = A_i x + cubic_i x1^3 + b_i u`. Stage costs are
//! diagonal quadratics and the declared initial policy is linear feedback
//! `u = -K x`; the shipped benchmark constants are the config defaults.

use std::sync::Arc;

use stabvi_core::backup::Policy;
use stabvi_core::engine_exact::LinearQuadraticParts;
use stabvi_core::problem::{
    AdmissiblePolicySpec, BoxDomain, ControlSet, LinearFeedback, LinearSystem, Poly2System,
    ProblemInstance, QuadraticStateCost,
};
use stabvi_core::valuefn::Grid;

use crate::config::{ControlKind, ExperimentConfig, GridKind, SystemKind};
use crate::HarnessError;

/// Everything the pipelines need, assembled once per run.
pub struct BuiltProblem {
    pub problem: Arc<ProblemInstance>,
    pub spec: AdmissiblePolicySpec,
    pub grid: Arc<Grid>,
    /// Present for linear systems; feeds the exact-quadratic path.
    pub lq: Option<LinearQuadraticParts>,
}

pub fn build(cfg: &ExperimentConfig) -> Result<BuiltProblem, HarnessError> {
    let domain = BoxDomain::new(cfg.omega_lo.clone(), cfg.omega_hi.clone())?;

    let control_set = match cfg.control_kind {
        ControlKind::Uniform => {
            ControlSet::uniform_1d(cfg.control_lo, cfg.control_hi, cfg.control_count)?
        }
        ControlKind::Log => {
            ControlSet::log_symmetric_1d(cfg.control_u_min, cfg.control_hi, cfg.control_per_side)?
        }
    };

    let state_cost = QuadraticStateCost::new(cfg.q.clone())?;
    let (problem, lq) = match cfg.system {
        SystemKind::ScalarLinear => {
            let sys = LinearSystem::scalar(cfg.a[0], cfg.b[0]);
            let lq = LinearQuadraticParts {
                n: 1,
                m: 1,
                a: cfg.a.clone(),
                b: cfg.b.clone(),
                q: cfg.q.clone(),
                r: vec![cfg.r],
            };
            (
                ProblemInstance::new(
                    Box::new(sys),
                    Box::new(state_cost),
                    vec![cfg.r],
                    domain,
                    control_set,
                )?,
                Some(lq),
            )
        }
        SystemKind::Linear2d => {
            let sys = LinearSystem::new(2, 1, cfg.a.clone(), cfg.b.clone())?;
            let lq = LinearQuadraticParts {
                n: 2,
                m: 1,
                a: cfg.a.clone(),
                b: cfg.b.clone(),
                q: vec![cfg.q[0], 0.0, 0.0, cfg.q[1]],
                r: vec![cfg.r],
            };
            (
                ProblemInstance::new(
                    Box::new(sys),
                    Box::new(state_cost),
                    vec![cfg.r],
                    domain,
                    control_set,
                )?,
                Some(lq),
            )
        }
        SystemKind::Poly2d => {
            let sys = Poly2System {
                lin: [[cfg.a[0], cfg.a[1]], [cfg.a[2], cfg.a[3]]],
                cubic_x1: [cfg.cubic[0], cfg.cubic[1]],
                gain_u: [cfg.b[0], cfg.b[1]],
            };
            (
                ProblemInstance::new(
                    Box::new(sys),
                    Box::new(state_cost),
                    vec![cfg.r],
                    domain,
                    control_set,
                )?,
                None,
            )
        }
    };
    let problem = Arc::new(problem);

    let n = problem.state_dim();
    let spec = AdmissiblePolicySpec {
        policy: Policy::Linear(LinearFeedback::new(n, 1, cfg.policy_gain.clone())?),
        name: format!("{:?} linear feedback", cfg.system),
    };

    let grid = match cfg.grid_kind {
        GridKind::Uniform => Grid::uniform(problem.domain(), &cfg.grid_nodes)?,
        GridKind::Log => Grid::log_spaced(problem.domain(), &cfg.grid_x_min, cfg.grid_per_side)?,
    };

    Ok(BuiltProblem { problem, spec, grid: Arc::new(grid), lq })
}

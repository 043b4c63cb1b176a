//! Control problem definition: dynamics, stage cost, domain, control set.
//!
//! A [`ProblemInstance`] bundles discrete-time dynamics `x+ = f(x,u)` with the
//! stage cost `U(x,u) = Q(x) + u'Ru`, a compact box domain containing the
//! origin, and the finite control-candidate set the backup minimizes over.
//! Everything is immutable after construction and validated up front:
//! `f(0,0) = 0`, `Q(0) = 0`, `R` symmetric positive definite, `0` in the
//! control set, origin strictly inside the box.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fmath;
use crate::linalg;

/// Hard cap on the state dimension (stack buffers in the hot loops).
pub const MAX_DIM: usize = 8;

/// Tolerance for "exactly zero" checks on constructed data.
pub const ZERO_TOL: f64 = 1e-12;

/// Axis-aligned box `[lo_j, hi_j]^n` with the origin strictly inside.
///
/// Membership uses a tiny per-axis slack (`1e-12 * max(1, |lo|, |hi|)`) so
/// that boundary images like `0.9*1 + 0.1*1` do not fall out of the domain by
/// one ulp; [`BoxDomain::clamp`] then snaps such points back onto the box.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxDomain {
    lo: Vec<f64>,
    hi: Vec<f64>,
    slack: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::ContractViolation("box bounds must have equal nonzero length".into()));
        }
        if lo.len() > MAX_DIM {
            return Err(Error::ContractViolation(format!(
                "state dimension {} exceeds supported maximum {MAX_DIM}",
                lo.len()
            )));
        }
        for j in 0..lo.len() {
            if !(lo[j].is_finite() && hi[j].is_finite()) || !(lo[j] < 0.0 && 0.0 < hi[j]) {
                return Err(Error::ContractViolation(format!(
                    "axis {j}: need finite lo < 0 < hi, got [{}, {}]",
                    lo[j], hi[j]
                )));
            }
        }
        let slack = lo
            .iter()
            .zip(&hi)
            .map(|(&l, &h)| 1e-12 * fmath::abs(l).max(fmath::abs(h)).max(1.0))
            .collect();
        Ok(Self { lo, hi, slack })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    /// Membership with the construction-time slack.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.lo.len()
            && x.iter().enumerate().all(|(j, &v)| {
                v.is_finite() && v >= self.lo[j] - self.slack[j] && v <= self.hi[j] + self.slack[j]
            })
    }

    /// Snap a point that passed [`contains`](Self::contains) onto the box.
    pub fn clamp(&self, x: &mut [f64]) {
        for j in 0..x.len() {
            x[j] = x[j].max(self.lo[j]).min(self.hi[j]);
        }
    }
}

/// Discrete-time dynamics `x+ = f(x, u)`.
pub trait Dynamics: Send + Sync {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    /// Writes `f(x,u)` into `out` (`out.len() == state_dim`).
    fn step_into(&self, x: &[f64], u: &[f64], out: &mut [f64]);
}

/// State cost `Q(x)`, continuous with `Q(0) = 0`.
pub trait StateCost: Send + Sync {
    fn state_dim(&self) -> usize;
    fn eval(&self, x: &[f64]) -> f64;
}

/// Linear dynamics `x+ = A x + B u`.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    n: usize,
    m: usize,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl LinearSystem {
    pub fn new(n: usize, m: usize, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if a.len() != n * n {
            return Err(Error::DimensionMismatch { what: "A matrix", expected: n * n, got: a.len() });
        }
        if b.len() != n * m {
            return Err(Error::DimensionMismatch { what: "B matrix", expected: n * m, got: b.len() });
        }
        if !a.iter().chain(&b).all(|v| v.is_finite()) {
            return Err(Error::ContractViolation("linear system with non-finite entries".into()));
        }
        Ok(Self { n, m, a, b })
    }

    /// Scalar system `x+ = a x + b u`.
    pub fn scalar(a: f64, b: f64) -> Self {
        Self { n: 1, m: 1, a: vec![a], b: vec![b] }
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }
}

impl Dynamics for LinearSystem {
    fn state_dim(&self) -> usize {
        self.n
    }

    fn control_dim(&self) -> usize {
        self.m
    }

    fn step_into(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        linalg::matvec(&self.a, x, self.n, self.n, out);
        let mut bu = [0.0; MAX_DIM];
        linalg::matvec(&self.b, u, self.n, self.m, &mut bu[..self.n]);
        for j in 0..self.n {
            out[j] += bu[j];
        }
    }
}

/// Planar polynomial system
/// `f_i = a_i1 x1 + a_i2 x2 + cubic_i x1^3 + b_i u` (single control input).
#[derive(Debug, Clone)]
pub struct Poly2System {
    pub lin: [[f64; 2]; 2],
    pub cubic_x1: [f64; 2],
    pub gain_u: [f64; 2],
}

impl Dynamics for Poly2System {
    fn state_dim(&self) -> usize {
        2
    }

    fn control_dim(&self) -> usize {
        1
    }

    fn step_into(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        let x1c = x[0] * x[0] * x[0];
        for i in 0..2 {
            out[i] = self.lin[i][0] * x[0] + self.lin[i][1] * x[1] + self.cubic_x1[i] * x1c
                + self.gain_u[i] * u[0];
        }
    }
}

/// Diagonal quadratic state cost `Q(x) = sum_j w_j x_j^2`.
#[derive(Debug, Clone)]
pub struct QuadraticStateCost {
    weights: Vec<f64>,
}

impl QuadraticStateCost {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || !weights.iter().all(|w| w.is_finite() && *w >= 0.0) {
            return Err(Error::ContractViolation("state-cost weights must be finite and >= 0".into()));
        }
        Ok(Self { weights })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

impl StateCost for QuadraticStateCost {
    fn state_dim(&self) -> usize {
        self.weights.len()
    }

    fn eval(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v * v).sum()
    }
}

/// Finite control-candidate set, `points` stored flat (`len = count * m`).
///
/// Candidate order is fixed at construction; ties in the backup break toward
/// the lowest index, so the order is part of the reproducibility contract.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSet {
    m: usize,
    points: Vec<f64>,
}

impl ControlSet {
    pub fn from_points(m: usize, points: Vec<f64>) -> Result<Self> {
        if m == 0 || points.is_empty() || points.len() % m != 0 {
            return Err(Error::ContractViolation("control set must hold k*m finite entries, k >= 1".into()));
        }
        if !points.iter().all(|v| v.is_finite()) {
            return Err(Error::ContractViolation("control set with non-finite entries".into()));
        }
        let set = Self { m, points };
        if !(0..set.len()).any(|i| set.candidate(i).iter().all(|&v| v == 0.0)) {
            return Err(Error::ContractViolation("control set must contain the zero control".into()));
        }
        Ok(set)
    }

    /// Uniform 1-D candidates over `[lo, hi]`; the node nearest zero is
    /// snapped to exactly `0.0`. Symmetric ranges with an odd count are built
    /// by exact mirroring, so `u` and `-u` are bit-wise negatives.
    pub fn uniform_1d(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if count < 2 || !(lo < 0.0 && 0.0 < hi) {
            return Err(Error::ContractViolation("uniform control grid needs count >= 2 and lo < 0 < hi".into()));
        }
        let pts = mirror_aware_linspace(lo, hi, count);
        Self::from_points(1, pts)
    }

    /// `{0} ∪ {±u_min r^j}` with `per_side` points per sign reaching `u_max`.
    ///
    /// Log spacing keeps the candidate pitch proportional to scale, which is
    /// what resolves the near-origin region of unstable plants.
    pub fn log_symmetric_1d(u_min: f64, u_max: f64, per_side: usize) -> Result<Self> {
        if !(u_min > 0.0 && u_max > u_min) || per_side < 2 {
            return Err(Error::ContractViolation("log control grid needs 0 < u_min < u_max, per_side >= 2".into()));
        }
        let ratio_log = fmath::ln(u_max / u_min) / (per_side - 1) as f64;
        let mut pts = Vec::with_capacity(2 * per_side + 1);
        for j in (0..per_side).rev() {
            pts.push(-u_min * fmath::exp(ratio_log * j as f64));
        }
        pts.push(0.0);
        for j in 0..per_side {
            pts.push(u_min * fmath::exp(ratio_log * j as f64));
        }
        let last = pts.len() - 1;
        pts[0] = -u_max;
        pts[last] = u_max;
        Self::from_points(1, pts)
    }

    pub fn control_dim(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.m
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn candidate(&self, i: usize) -> &[f64] {
        &self.points[i * self.m..(i + 1) * self.m]
    }
}

/// The assembled control problem.
pub struct ProblemInstance {
    dynamics: Box<dyn Dynamics>,
    state_cost: Box<dyn StateCost>,
    r: Vec<f64>,
    domain: BoxDomain,
    control_set: ControlSet,
    n: usize,
    m: usize,
}

impl ProblemInstance {
    pub fn new(
        dynamics: Box<dyn Dynamics>,
        state_cost: Box<dyn StateCost>,
        r: Vec<f64>,
        domain: BoxDomain,
        control_set: ControlSet,
    ) -> Result<Self> {
        let n = dynamics.state_dim();
        let m = dynamics.control_dim();
        if n == 0 || n > MAX_DIM {
            return Err(Error::ContractViolation(format!("state dimension {n} out of range 1..={MAX_DIM}")));
        }
        if state_cost.state_dim() != n {
            return Err(Error::DimensionMismatch { what: "state cost", expected: n, got: state_cost.state_dim() });
        }
        if domain.dim() != n {
            return Err(Error::DimensionMismatch { what: "domain", expected: n, got: domain.dim() });
        }
        if control_set.control_dim() != m {
            return Err(Error::DimensionMismatch { what: "control set", expected: m, got: control_set.control_dim() });
        }
        if r.len() != m * m {
            return Err(Error::DimensionMismatch { what: "R matrix", expected: m * m, got: r.len() });
        }
        let rmax = r.iter().fold(0.0_f64, |acc, v| acc.max(fmath::abs(*v)));
        if !linalg::is_symmetric(&r, m, ZERO_TOL * rmax.max(1.0)) {
            return Err(Error::ContractViolation("R must be symmetric".into()));
        }
        if linalg::cholesky(&r, m, 0.0).is_none() {
            return Err(Error::ContractViolation("R must be positive definite".into()));
        }

        let zeros_x = vec![0.0; n];
        let zeros_u = vec![0.0; m];
        let mut fx = vec![0.0; n];
        dynamics.step_into(&zeros_x, &zeros_u, &mut fx);
        if fx.iter().any(|v| fmath::abs(*v) > ZERO_TOL) {
            return Err(Error::ContractViolation(format!("f(0,0) = {fx:?} is not the origin")));
        }
        let q0 = state_cost.eval(&zeros_x);
        if fmath::abs(q0) > ZERO_TOL {
            return Err(Error::ContractViolation(format!("Q(0) = {q0} is not zero")));
        }

        Ok(Self { dynamics, state_cost, r, domain, control_set, n, m })
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn control_dim(&self) -> usize {
        self.m
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn control_set(&self) -> &ControlSet {
        &self.control_set
    }

    pub fn r_matrix(&self) -> &[f64] {
        &self.r
    }

    /// Stage cost `U(x,u) = Q(x) + u'Ru`; always non-negative.
    pub fn utility(&self, x: &[f64], u: &[f64]) -> Result<f64> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch { what: "utility state", expected: self.n, got: x.len() });
        }
        if u.len() != self.m {
            return Err(Error::DimensionMismatch { what: "utility control", expected: self.m, got: u.len() });
        }
        Ok(self.state_cost.eval(x) + linalg::quad_form(&self.r, u))
    }

    /// `U(x, 0) = Q(x)`, the zero-control stage cost.
    pub fn utility_zero_control(&self, x: &[f64]) -> f64 {
        self.state_cost.eval(x)
    }

    /// One dynamics step; pure and deterministic.
    pub fn step(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.n];
        self.step_into(x, u, &mut out)?;
        Ok(out)
    }

    /// Allocation-free variant of [`step`](Self::step).
    pub fn step_into(&self, x: &[f64], u: &[f64], out: &mut [f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch { what: "step state", expected: self.n, got: x.len() });
        }
        if u.len() != self.m {
            return Err(Error::DimensionMismatch { what: "step control", expected: self.m, got: u.len() });
        }
        self.dynamics.step_into(x, u, out);
        if !out.iter().all(|v| v.is_finite()) {
            return Err(Error::NumericEscape { what: "dynamics output", x: x.to_vec(), u: u.to_vec() });
        }
        Ok(())
    }
}

/// `count` points from `lo` to `hi` inclusive, endpoints exact, the point
/// nearest zero snapped to `0.0`. A symmetric range with an odd count mirrors
/// the positive half, making the set exactly negation-symmetric.
pub(crate) fn mirror_aware_linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if lo == -hi && count % 2 == 1 {
        let half = (count - 1) / 2;
        let mut pts = Vec::with_capacity(count);
        for k in (1..=half).rev() {
            pts.push(-(hi * k as f64 / half as f64));
        }
        pts.push(0.0);
        for k in 1..=half {
            pts.push(hi * k as f64 / half as f64);
        }
        let last = pts.len() - 1;
        pts[0] = lo;
        pts[last] = hi;
        return pts;
    }
    let step = (hi - lo) / (count - 1) as f64;
    let mut pts: Vec<f64> = (0..count).map(|k| lo + k as f64 * step).collect();
    *pts.last_mut().unwrap() = hi;
    let mut nearest = 0;
    for (i, p) in pts.iter().enumerate() {
        if fmath::abs(*p) < fmath::abs(pts[nearest]) {
            nearest = i;
        }
    }
    pts[nearest] = 0.0;
    pts
}

/// Linear state feedback `u = -K x` (`K` is `m x n`, row-major).
#[derive(Debug, Clone)]
pub struct LinearFeedback {
    n: usize,
    m: usize,
    gain: Vec<f64>,
}

impl LinearFeedback {
    pub fn new(n: usize, m: usize, gain: Vec<f64>) -> Result<Self> {
        if gain.len() != n * m || !gain.iter().all(|v| v.is_finite()) {
            return Err(Error::DimensionMismatch { what: "feedback gain", expected: n * m, got: gain.len() });
        }
        Ok(Self { n, m, gain })
    }

    /// Scalar gain: `u = -k x`.
    pub fn scalar(k: f64) -> Self {
        Self { n: 1, m: 1, gain: vec![k] }
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn control_dim(&self) -> usize {
        self.m
    }

    pub fn gain(&self) -> &[f64] {
        &self.gain
    }

    pub fn control_into(&self, x: &[f64], out: &mut [f64]) {
        linalg::matvec(&self.gain, x, self.m, self.n, out);
        for v in out.iter_mut() {
            *v = -*v;
        }
    }
}

/// Declared initial admissible policy plus provenance metadata.
///
/// Admissibility here follows the asymptotic-stabilization definition:
/// `h(0) = 0` and, from every state of a declared test set, the closed loop
/// reaches `||x|| <= eps` within `k_max` steps without leaving the domain.
/// The check is a finite proxy and is run, not assumed, before any engine
/// consumes the policy.
pub struct AdmissiblePolicySpec {
    pub policy: crate::backup::Policy,
    pub name: String,
}

/// Parameters of the finite admissibility proxy.
#[derive(Debug, Clone, Copy)]
pub struct AdmissibilityCheck {
    pub eps: f64,
    pub k_max: usize,
}

impl Default for AdmissibilityCheck {
    fn default() -> Self {
        Self { eps: 1e-3, k_max: 500 }
    }
}

/// Runs the Definition-2 simulation proxy from every state in `test_states`.
pub fn check_admissibility(
    p: &ProblemInstance,
    spec: &AdmissiblePolicySpec,
    cfg: AdmissibilityCheck,
    test_states: impl Iterator<Item = Vec<f64>>,
) -> Result<()> {
    let mut u = vec![0.0; p.control_dim()];
    spec.policy.control_into(&vec![0.0; p.state_dim()], &mut u);
    if fmath::norm2(&u) > ZERO_TOL {
        return Err(Error::InadmissiblePolicy {
            from: vec![0.0; p.state_dim()],
            reason: format!("h(0) = {u:?} is not zero (policy `{}`)", spec.name),
        });
    }

    let mut next = vec![0.0; p.state_dim()];
    for x0 in test_states {
        let mut x = x0.clone();
        let mut settled = false;
        for _ in 0..cfg.k_max {
            if fmath::norm2(&x) <= cfg.eps {
                settled = true;
                break;
            }
            spec.policy.control_into(&x, &mut u);
            p.step_into(&x, &u, &mut next)?;
            if !p.domain().contains(&next) {
                return Err(Error::InadmissiblePolicy {
                    from: x0,
                    reason: format!("closed loop left the domain at {next:?} (policy `{}`)", spec.name),
                });
            }
            p.domain().clamp(&mut next);
            x.copy_from_slice(&next);
        }
        if !settled && fmath::norm2(&x) > cfg.eps {
            return Err(Error::InadmissiblePolicy {
                from: x0,
                reason: format!(
                    "||x|| = {:.3e} after {} steps, above eps = {:.1e} (policy `{}`)",
                    fmath::norm2(&x),
                    cfg.k_max,
                    cfg.eps,
                    spec.name
                ),
            });
        }
    }
    Ok(())
}

/// Fixed point of the scalar discrete Riccati recursion
/// `p = q + a^2 p r / (r + b^2 p)`, iterated from `p = q`.
///
/// Serves as the independent optimal-value oracle on scalar
/// linear-quadratic instances: `V*(x) = p_star x^2`.
pub fn riccati_oracle(a: f64, b: f64, q: f64, r: f64) -> Result<f64> {
    if !(q > 0.0 && r > 0.0) {
        return Err(Error::ContractViolation("riccati oracle needs q > 0 and r > 0".to_string()));
    }
    if b == 0.0 && fmath::abs(a) >= 1.0 {
        return Err(Error::ContractViolation(
            "riccati oracle needs a stabilizable pair (b != 0 or |a| < 1)".to_string(),
        ));
    }
    let mut p = q;
    for _ in 0..1_000_000 {
        let next = q + a * a * p * r / (r + b * b * p);
        if !next.is_finite() {
            return Err(Error::OracleFailure("riccati iteration diverged".to_string()));
        }
        if fmath::abs(next - p) < 1e-12 {
            return Ok(next);
        }
        p = next;
    }
    Err(Error::OracleFailure("riccati iteration did not converge in 1e6 steps".to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backup::Policy;

    fn b1() -> ProblemInstance {
        ProblemInstance::new(
            Box::new(LinearSystem::scalar(1.1, 1.0)),
            Box::new(QuadraticStateCost::new(vec![1.0]).unwrap()),
            vec![1.0],
            BoxDomain::new(vec![-1.0], vec![1.0]).unwrap(),
            ControlSet::uniform_1d(-1.0, 1.0, 41).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn utility_origin_is_zero() {
        assert_eq!(b1().utility(&[0.0], &[0.0]).unwrap(), 0.0);
    }

    #[test]
    fn utility_scalar_lqr_values() {
        let p = b1();
        assert_eq!(p.utility(&[2.0], &[3.0]).unwrap(), 13.0);
        assert_eq!(p.utility(&[2.0], &[0.0]).unwrap(), 4.0);
    }

    #[test]
    fn utility_rejects_dimension_mismatch() {
        let p = b1();
        assert!(matches!(p.utility(&[1.0, 2.0], &[0.0]), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(p.utility(&[1.0], &[0.0, 0.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn step_equilibrium_and_b1_sample() {
        let p = b1();
        assert_eq!(p.step(&[0.0], &[0.0]).unwrap(), vec![0.0]);
        // 1.1*1 + 1*(-0.6) = 0.5 (up to one rounding of the sum)
        assert!((p.step(&[1.0], &[-0.6]).unwrap()[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn step_is_pure_bit_exact() {
        let p = b1();
        let first = p.step(&[0.3777], &[-0.211]).unwrap();
        for _ in 0..10 {
            assert_eq!(p.step(&[0.3777], &[-0.211]).unwrap(), first);
        }
    }

    #[test]
    fn poly2_sample_matches_hand_evaluation() {
        // f1 = 0.9 x1 + 0.1 x2, f2 = 0.1 x1^3 + 0.7 x2 + 0.2 u
        let sys = Poly2System {
            lin: [[0.9, 0.1], [0.0, 0.7]],
            cubic_x1: [0.0, 0.1],
            gain_u: [0.0, 0.2],
        };
        let mut out = [0.0; 2];
        sys.step_into(&[0.5, -0.25], &[0.3], &mut out);
        // hand evaluation: f1 = 0.45 - 0.025 = 0.425
        //                  f2 = 0.1*0.125 - 0.175 + 0.06 = -0.1025
        assert!((out[0] - 0.425).abs() < 1e-15);
        assert!((out[1] - (-0.1025)).abs() < 1e-15);
    }

    #[test]
    fn step_reports_numeric_escape() {
        let sys = Poly2System {
            lin: [[1e300, 0.0], [0.0, 1.0]],
            cubic_x1: [1e300, 0.0],
            gain_u: [0.0, 1.0],
        };
        let p = ProblemInstance::new(
            Box::new(sys),
            Box::new(QuadraticStateCost::new(vec![1.0, 1.0]).unwrap()),
            vec![1.0],
            BoxDomain::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap(),
            ControlSet::uniform_1d(-1.0, 1.0, 3).unwrap(),
        )
        .unwrap();
        let got = p.step(&[1e10, 0.0], &[0.0]);
        assert!(matches!(got, Err(Error::NumericEscape { .. })));
    }

    #[test]
    fn construction_rejects_broken_invariants() {
        // f(0,0) != 0
        let shifted = Poly2System {
            lin: [[0.9, 0.1], [0.0, 0.7]],
            cubic_x1: [0.0, 0.0],
            gain_u: [0.0, 0.2],
        };
        struct Shifted(Poly2System);
        impl Dynamics for Shifted {
            fn state_dim(&self) -> usize {
                2
            }
            fn control_dim(&self) -> usize {
                1
            }
            fn step_into(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
                self.0.step_into(x, u, out);
                out[0] += 0.5;
            }
        }
        let bad = ProblemInstance::new(
            Box::new(Shifted(shifted)),
            Box::new(QuadraticStateCost::new(vec![1.0, 1.0]).unwrap()),
            vec![1.0],
            BoxDomain::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap(),
            ControlSet::uniform_1d(-1.0, 1.0, 3).unwrap(),
        );
        assert!(bad.is_err());

        // R not positive definite
        let bad_r = ProblemInstance::new(
            Box::new(LinearSystem::scalar(1.1, 1.0)),
            Box::new(QuadraticStateCost::new(vec![1.0]).unwrap()),
            vec![-1.0],
            BoxDomain::new(vec![-1.0], vec![1.0]).unwrap(),
            ControlSet::uniform_1d(-1.0, 1.0, 3).unwrap(),
        );
        assert!(bad_r.is_err());

        // control set without zero
        assert!(ControlSet::from_points(1, vec![-1.0, 1.0]).is_err());

        // origin not strictly inside the box
        assert!(BoxDomain::new(vec![0.0], vec![1.0]).is_err());
    }

    #[test]
    fn riccati_oracle_matches_quadratic_formula() {
        // positive root of p^2 - 1.21 p - 1 = 0
        let expected = (1.21 + (1.21_f64 * 1.21 + 4.0).sqrt()) / 2.0;
        let got = riccati_oracle(1.1, 1.0, 1.0, 1.0).unwrap();
        assert!((got - expected).abs() < 1e-10, "got {got}, expected {expected}");
    }

    #[test]
    fn riccati_oracle_degenerate_cases() {
        assert!((riccati_oracle(0.0, 1.0, 1.0, 1.0).unwrap() - 1.0).abs() < 1e-12);
        // open-loop stable, useless control: geometric series q / (1 - a^2)
        assert!((riccati_oracle(0.5, 0.0, 1.0, 1.0).unwrap() - 4.0 / 3.0).abs() < 1e-10);
        assert!(riccati_oracle(1.1, 0.0, 1.0, 1.0).is_err());
        assert!(riccati_oracle(1.1, 1.0, 0.0, 1.0).is_err());
        assert!(riccati_oracle(1.1, 1.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn admissibility_check_accepts_b1_feedback_and_rejects_unstable() {
        let p = b1();
        let good = AdmissiblePolicySpec {
            policy: Policy::Linear(LinearFeedback::scalar(0.6)),
            name: "b1-feedback".into(),
        };
        let states = (0..21).map(|k| vec![-1.0 + 0.1 * k as f64]);
        check_admissibility(&p, &good, AdmissibilityCheck::default(), states).unwrap();

        let bad = AdmissiblePolicySpec {
            policy: Policy::Linear(LinearFeedback::scalar(0.0)),
            name: "open-loop".into(),
        };
        let states = (0..3).map(|k| vec![0.2 + 0.1 * k as f64]);
        assert!(check_admissibility(&p, &bad, AdmissibilityCheck::default(), states).is_err());
    }

    #[test]
    fn utility_lipschitz_estimate_stable_under_refinement() {
        let p = b1();
        let estimate = |nodes: usize| -> f64 {
            let mut worst = 0.0_f64;
            for i in 0..nodes {
                let x = -1.0 + 2.0 * i as f64 / (nodes - 1) as f64;
                let x2 = x + 2.0 / (nodes - 1) as f64;
                if x2 > 1.0 {
                    continue;
                }
                let du = (p.utility(&[x2], &[0.3]).unwrap() - p.utility(&[x], &[0.3]).unwrap()).abs();
                worst = worst.max(du / (x2 - x));
            }
            worst
        };
        let coarse = estimate(51);
        let fine = estimate(401);
        assert!(fine <= coarse * 1.1 + 1e-9, "Lipschitz estimate blew up: {coarse} -> {fine}");
    }
}

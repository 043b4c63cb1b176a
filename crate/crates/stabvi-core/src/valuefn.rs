//! Value-function representations and the controlled error model.
//!
//! Three representations share the [`ValueFunction`] enum:
//!
//! * [`GridValueFunction`] — node values on a rectilinear grid with
//!   multilinear interpolation. Multilinear (not cubic) on purpose: evaluation
//!   stays inside the enclosing cell's corner range, so node-wise orderings
//!   survive interpolation, which the sandwich and Lyapunov checks lean on.
//! * [`QuadraticValueFunction`] — exact `x'Px`, the zero-interpolation-error
//!   path used for linear-quadratic oracle comparisons.
//! * [`BackupChain`] — one exact Bellman backup layered over a base function,
//!   evaluated recursively on demand. Chains of depth `i` over a quadratic
//!   base realize the i-th value iterate with no grid in the loop.
//!
//! Grids always carry the origin as an exact node and store non-negative
//! values; negatives above `-1e-12` are float noise and are clamped to zero,
//! anything lower is rejected as a logic error.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::backup;
use crate::error::{Error, Result};
use crate::fmath;
use crate::linalg;
use crate::problem::{BoxDomain, ProblemInstance, MAX_DIM, ZERO_TOL};

/// Negative node values above this threshold are clamped to zero.
pub const NEGATIVE_CLAMP: f64 = -1e-12;

/// Rectilinear grid: per-axis strictly increasing node coordinates spanning
/// the domain box, with `0.0` present as an exact node on every axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    axes: Vec<Vec<f64>>,
    strides: Vec<usize>,
    origin_multi: Vec<usize>,
    slack: Vec<f64>,
    num_nodes: usize,
}

impl Grid {
    pub fn from_axes(axes: Vec<Vec<f64>>) -> Result<Self> {
        if axes.is_empty() || axes.len() > MAX_DIM {
            return Err(Error::ContractViolation(format!(
                "grid needs 1..={MAX_DIM} axes, got {}",
                axes.len()
            )));
        }
        let mut origin_multi = Vec::with_capacity(axes.len());
        for (a, coords) in axes.iter().enumerate() {
            if coords.len() < 3 {
                return Err(Error::ContractViolation(format!("axis {a} needs at least 3 nodes")));
            }
            if !coords.iter().all(|v| v.is_finite()) || coords.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::ContractViolation(format!(
                    "axis {a} must be finite and strictly increasing"
                )));
            }
            match coords.iter().position(|&v| v == 0.0) {
                Some(i) if i > 0 && i + 1 < coords.len() => origin_multi.push(i),
                _ => {
                    return Err(Error::ContractViolation(format!(
                        "axis {a} must contain 0.0 as an interior node"
                    )))
                }
            }
        }
        let nd = axes.len();
        let mut strides = vec![1usize; nd];
        for a in (0..nd - 1).rev() {
            strides[a] = strides[a + 1] * axes[a + 1].len();
        }
        let num_nodes = axes.iter().map(|c| c.len()).product();
        let slack = axes
            .iter()
            .map(|c| 1e-12 * fmath::abs(c[0]).max(fmath::abs(*c.last().unwrap())).max(1.0))
            .collect();
        Ok(Self { axes, strides, origin_multi, slack, num_nodes })
    }

    /// Uniformly spaced nodes spanning the domain, `counts[a]` per axis; the
    /// node nearest zero is snapped to exactly `0.0`.
    pub fn uniform(domain: &BoxDomain, counts: &[usize]) -> Result<Self> {
        if counts.len() != domain.dim() {
            return Err(Error::DimensionMismatch {
                what: "grid counts",
                expected: domain.dim(),
                got: counts.len(),
            });
        }
        let mut axes = Vec::with_capacity(counts.len());
        for a in 0..counts.len() {
            let (lo, hi, count) = (domain.lo()[a], domain.hi()[a], counts[a]);
            if count < 3 {
                return Err(Error::ContractViolation(format!("axis {a} needs at least 3 nodes")));
            }
            axes.push(crate::problem::mirror_aware_linspace(lo, hi, count));
        }
        Self::from_axes(axes)
    }

    /// Log-spaced nodes: `{lo} ∪ {-geometric} ∪ {0} ∪ {+geometric} ∪ {hi}`
    /// with `per_side` nodes per sign running from `x_min[a]` out to the box
    /// edge. Node pitch proportional to `|x|` keeps the relative
    /// interpolation error roughly uniform across scales.
    pub fn log_spaced(domain: &BoxDomain, x_min: &[f64], per_side: usize) -> Result<Self> {
        if x_min.len() != domain.dim() {
            return Err(Error::DimensionMismatch {
                what: "grid x_min",
                expected: domain.dim(),
                got: x_min.len(),
            });
        }
        if per_side < 2 {
            return Err(Error::ContractViolation("log grid needs per_side >= 2".into()));
        }
        let mut axes = Vec::with_capacity(domain.dim());
        for a in 0..domain.dim() {
            let (lo, hi, xmin) = (domain.lo()[a], domain.hi()[a], x_min[a]);
            if !(xmin > 0.0 && xmin < hi && xmin < -lo) {
                return Err(Error::ContractViolation(format!(
                    "axis {a}: need 0 < x_min < min(hi, -lo)"
                )));
            }
            let mut coords = Vec::with_capacity(2 * per_side + 1);
            let neg_log = fmath::ln((-lo) / xmin) / (per_side - 1) as f64;
            for j in (0..per_side).rev() {
                coords.push(-xmin * fmath::exp(neg_log * j as f64));
            }
            coords[0] = lo;
            coords.push(0.0);
            let pos_log = fmath::ln(hi / xmin) / (per_side - 1) as f64;
            for j in 0..per_side {
                coords.push(xmin * fmath::exp(pos_log * j as f64));
            }
            let last = coords.len() - 1;
            coords[last] = hi;
            axes.push(coords);
        }
        Self::from_axes(axes)
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axis(&self, a: usize) -> &[f64] {
        &self.axes[a]
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn origin_flat(&self) -> usize {
        self.origin_multi
            .iter()
            .zip(&self.strides)
            .map(|(i, s)| i * s)
            .sum()
    }

    /// Writes the coordinates of flat node `idx` into `out`.
    pub fn node_into(&self, idx: usize, out: &mut [f64]) {
        let mut rem = idx;
        for a in 0..self.axes.len() {
            let i = rem / self.strides[a];
            rem %= self.strides[a];
            out[a] = self.axes[a][i];
        }
    }

    pub fn node(&self, idx: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.node_into(idx, &mut out);
        out
    }

    /// Whether flat node `idx` lies on the boundary of the box.
    pub fn is_boundary(&self, idx: usize) -> bool {
        let mut rem = idx;
        for a in 0..self.axes.len() {
            let i = rem / self.strides[a];
            rem %= self.strides[a];
            if i == 0 || i + 1 == self.axes[a].len() {
                return true;
            }
        }
        false
    }

    /// Flat indices of the up-to-`2n` axis neighbors of `idx`.
    pub fn neighbors(&self, idx: usize, out: &mut Vec<usize>) {
        out.clear();
        let mut rem = idx;
        for a in 0..self.axes.len() {
            let i = rem / self.strides[a];
            rem %= self.strides[a];
            if i > 0 {
                out.push(idx - self.strides[a]);
            }
            if i + 1 < self.axes[a].len() {
                out.push(idx + self.strides[a]);
            }
        }
    }

    fn check_and_clamp(&self, x: &[f64], buf: &mut [f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { what: "grid point", expected: self.dim(), got: x.len() });
        }
        for a in 0..x.len() {
            let (lo, hi) = (self.axes[a][0], *self.axes[a].last().unwrap());
            if !x[a].is_finite() || x[a] < lo - self.slack[a] || x[a] > hi + self.slack[a] {
                return Err(Error::DomainExit { x: x.to_vec() });
            }
            buf[a] = x[a].max(lo).min(hi);
        }
        Ok(())
    }

    /// Writes the multilinear interpolation stencil of `x` — `2^dim` corner
    /// flat indices and weights — into the provided slices.
    pub fn interp_stencil(&self, x: &[f64], idx: &mut [usize], w: &mut [f64]) -> Result<()> {
        let nd = self.dim();
        let corners = 1usize << nd;
        debug_assert!(idx.len() == corners && w.len() == corners);
        let mut xc = [0.0; MAX_DIM];
        self.check_and_clamp(x, &mut xc[..nd])?;
        let mut base = [0usize; MAX_DIM];
        let mut t = [0.0; MAX_DIM];
        for a in 0..nd {
            let c = &self.axes[a];
            let i = c.partition_point(|v| *v <= xc[a]).saturating_sub(1).min(c.len() - 2);
            base[a] = i;
            t[a] = (xc[a] - c[i]) / (c[i + 1] - c[i]);
        }
        for corner in 0..corners {
            let mut weight = 1.0;
            let mut flat = 0;
            for a in 0..nd {
                let up = (corner >> a) & 1;
                weight *= if up == 1 { t[a] } else { 1.0 - t[a] };
                flat += (base[a] + up) * self.strides[a];
            }
            idx[corner] = flat;
            w[corner] = weight;
        }
        Ok(())
    }

    /// Flat index of the node nearest to `x` (per-axis nearest; ties go to
    /// the lower coordinate).
    pub fn nearest_node_flat(&self, x: &[f64]) -> Result<usize> {
        let mut buf = [0.0; MAX_DIM];
        self.check_and_clamp(x, &mut buf[..x.len()])?;
        let mut flat = 0;
        for a in 0..self.dim() {
            let c = &self.axes[a];
            let i = c.partition_point(|v| *v <= buf[a]).saturating_sub(1).min(c.len() - 2);
            let pick = if buf[a] - c[i] <= c[i + 1] - buf[a] { i } else { i + 1 };
            flat += pick * self.strides[a];
        }
        Ok(flat)
    }
}

/// Node values over a [`Grid`] with multilinear interpolation.
#[derive(Debug, Clone)]
pub struct GridValueFunction {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl GridValueFunction {
    /// Validates length, finiteness, non-negativity (clamping float noise in
    /// `(-1e-12, 0)`), and anchors the origin node at exactly zero.
    pub fn new(grid: Arc<Grid>, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.num_nodes() {
            return Err(Error::DimensionMismatch {
                what: "grid values",
                expected: grid.num_nodes(),
                got: values.len(),
            });
        }
        for (i, v) in values.iter_mut().enumerate() {
            if !v.is_finite() {
                return Err(Error::ContractViolation(format!("non-finite value at node {i}")));
            }
            if *v < 0.0 {
                if *v < NEGATIVE_CLAMP {
                    return Err(Error::ContractViolation(format!(
                        "negative value {v:.3e} at node {i} is below the clamp threshold"
                    )));
                }
                *v = 0.0;
            }
        }
        let og = grid.origin_flat();
        if values[og] > ZERO_TOL {
            return Err(Error::ContractViolation(format!(
                "origin node must carry value 0, got {:.3e}",
                values[og]
            )));
        }
        values[og] = 0.0;
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let values = vec![0.0; grid.num_nodes()];
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value_at(&self, flat: usize) -> f64 {
        self.values[flat]
    }

    /// Multilinear interpolation; exact (bit-for-bit) at nodes.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        let nd = self.grid.dim();
        let mut xc = [0.0; MAX_DIM];
        self.grid.check_and_clamp(x, &mut xc[..nd])?;
        let mut base = [0usize; MAX_DIM];
        let mut t = [0.0; MAX_DIM];
        for a in 0..nd {
            let c = &self.grid.axes[a];
            let i = c.partition_point(|v| *v <= xc[a]).saturating_sub(1).min(c.len() - 2);
            base[a] = i;
            t[a] = (xc[a] - c[i]) / (c[i + 1] - c[i]);
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << nd) {
            let mut w = 1.0;
            let mut flat = 0;
            for a in 0..nd {
                let up = (corner >> a) & 1;
                w *= if up == 1 { t[a] } else { 1.0 - t[a] };
                flat += (base[a] + up) * self.grid.strides[a];
            }
            if w != 0.0 {
                acc += w * self.values[flat];
            }
        }
        Ok(acc)
    }
}

/// Exact quadratic form `V(x) = x'Px`, `P` symmetric positive semidefinite.
///
/// Defined on all of state space; domain containment is the caller's job
/// (engines and simulators check the box before evaluating).
#[derive(Debug, Clone)]
pub struct QuadraticValueFunction {
    n: usize,
    p: Vec<f64>,
}

impl QuadraticValueFunction {
    pub fn new(n: usize, p: Vec<f64>) -> Result<Self> {
        if p.len() != n * n || n == 0 {
            return Err(Error::DimensionMismatch { what: "P matrix", expected: n * n, got: p.len() });
        }
        let scale = p.iter().fold(0.0_f64, |acc, v| acc.max(fmath::abs(*v))).max(1.0);
        if !linalg::is_symmetric(&p, n, ZERO_TOL * scale) {
            return Err(Error::ContractViolation("P must be symmetric".into()));
        }
        let mut jittered = p.clone();
        for i in 0..n {
            jittered[i * n + i] += 1e-12 * scale;
        }
        if linalg::cholesky(&jittered, n, 0.0).is_none() {
            return Err(Error::ContractViolation("P must be positive semidefinite".into()));
        }
        Ok(Self { n, p })
    }

    pub fn scalar(p: f64) -> Result<Self> {
        Self::new(1, vec![p])
    }

    pub fn matrix(&self) -> &[f64] {
        &self.p
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        linalg::quad_form(&self.p, x)
    }
}

/// One exact Bellman backup layered over a base value function.
///
/// `eval(x) = min_u [ U(x,u) + base(f(x,u)) ]` over the problem's control
/// set, excluding candidates whose successor leaves the domain. Evaluation
/// cost grows as `|U|^depth`, so chains are only for short horizons.
pub struct BackupChain {
    pub problem: Arc<ProblemInstance>,
    pub base: Arc<ValueFunction>,
}

/// A value function in any of the supported representations.
pub enum ValueFunction {
    Grid(GridValueFunction),
    Quadratic(QuadraticValueFunction),
    Chain(BackupChain),
}

impl ValueFunction {
    /// Evaluates the function at `x`.
    ///
    /// Grid evaluation errors with [`Error::DomainExit`] outside the grid box
    /// (simulators use that to abort trajectories); chain evaluation may
    /// report [`Error::InfeasibleBackup`].
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        match self {
            ValueFunction::Grid(g) => g.eval(x),
            ValueFunction::Quadratic(q) => Ok(q.eval(x)),
            ValueFunction::Chain(c) => {
                if !c.problem.domain().contains(x) {
                    return Err(Error::DomainExit { x: x.to_vec() });
                }
                backup::bellman_backup(&c.problem, &c.base, x, &backup::BackupOptions::default())
                    .map(|r| r.value)
            }
        }
    }

    /// Evaluates at every node of `grid`, producing a grid snapshot.
    pub fn sample_on(&self, grid: &Arc<Grid>) -> Result<GridValueFunction> {
        let mut values = vec![0.0; grid.num_nodes()];
        let mut x = vec![0.0; grid.dim()];
        for (idx, slot) in values.iter_mut().enumerate() {
            grid.node_into(idx, &mut x);
            *slot = self.eval(&x)?;
        }
        GridValueFunction::new(grid.clone(), values)
    }

    pub fn as_grid(&self) -> Option<&GridValueFunction> {
        match self {
            ValueFunction::Grid(g) => Some(g),
            _ => None,
        }
    }
}

/// Max over nodes of `|a - b|`; both functions must live on the same grid.
pub fn sup_norm_diff(a: &GridValueFunction, b: &GridValueFunction) -> Result<f64> {
    if !Arc::ptr_eq(a.grid(), b.grid()) && a.grid().as_ref() != b.grid().as_ref() {
        return Err(Error::GridMismatch);
    }
    Ok(a.values()
        .iter()
        .zip(b.values())
        .fold(0.0_f64, |acc, (x, y)| acc.max(fmath::abs(x - y))))
}

/// Shape of the per-iteration approximation error signal `s(x, i)` in
/// `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub enum ErrorShape {
    /// No error; the approximate recursion collapses to the exact one.
    Zero,
    /// `s = sin(phase + frequency * (i + sum_j x_j))`.
    SignedSinusoid { frequency: f64, phase: f64 },
    /// Deterministic per-(x, i) uniform draw in `[-1, 1]` keyed on the seed;
    /// independent of evaluation order, so reruns are bit-identical.
    SeededUniform,
}

/// Bounded multiplicative error model: `epsilon(x, i) = c * U(x,0) * s(x,i)`
/// with `|s| <= 1`, so `|epsilon| <= c * U(x,0)` holds by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorModel {
    pub c: f64,
    pub shape: ErrorShape,
    pub seed: u64,
}

impl ErrorModel {
    pub fn zero() -> Self {
        Self { c: 0.0, shape: ErrorShape::Zero, seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c >= 0.0 && self.c < 1.0) {
            return Err(Error::ContractViolation(format!(
                "error bound c = {} must lie in [0, 1)",
                self.c
            )));
        }
        if let ErrorShape::SignedSinusoid { frequency, phase } = self.shape {
            if !(frequency.is_finite() && phase.is_finite()) {
                return Err(Error::ContractViolation("sinusoid parameters must be finite".into()));
            }
        }
        Ok(())
    }

    /// The signal `s(x, i)` in `[-1, 1]`.
    pub fn signal(&self, x: &[f64], i: i64) -> f64 {
        match &self.shape {
            ErrorShape::Zero => 0.0,
            ErrorShape::SignedSinusoid { frequency, phase } => {
                let sum: f64 = x.iter().sum();
                fmath::sin(phase + frequency * (i as f64 + sum))
            }
            ErrorShape::SeededUniform => {
                let mut h = mix64(self.seed ^ 0x9e37_79b9_7f4a_7c15);
                h = mix64(h ^ (i as u64));
                for &v in x {
                    h = mix64(h ^ v.to_bits());
                }
                // 53 random bits -> [0,1), then to [-1, 1)
                2.0 * ((h >> 11) as f64 * (1.0 / 9007199254740992.0)) - 1.0
            }
        }
    }

    /// `epsilon(x, i)`, guaranteed within `[-c U(x,0), c U(x,0)]`.
    pub fn epsilon(&self, p: &ProblemInstance, x: &[f64], i: i64) -> f64 {
        if self.c == 0.0 || matches!(self.shape, ErrorShape::Zero) {
            return 0.0;
        }
        self.c * p.utility_zero_control(x) * self.signal(x, i)
    }
}

/// `v_target + epsilon(x, i)` — the additive per-state fit error of one
/// approximate-VI iteration.
pub fn inject_error(v_target: f64, x: &[f64], i: i64, em: &ErrorModel, p: &ProblemInstance) -> f64 {
    v_target + em.epsilon(p, x, i)
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{ControlSet, LinearSystem, QuadraticStateCost};
    use alloc::boxed::Box;

    fn grid_1d(nodes: Vec<f64>) -> Arc<Grid> {
        Arc::new(Grid::from_axes(vec![nodes]).unwrap())
    }

    fn b1_problem() -> Arc<ProblemInstance> {
        Arc::new(
            ProblemInstance::new(
                Box::new(LinearSystem::scalar(1.1, 1.0)),
                Box::new(QuadraticStateCost::new(vec![1.0]).unwrap()),
                vec![1.0],
                BoxDomain::new(vec![-1.0], vec![1.0]).unwrap(),
                ControlSet::uniform_1d(-1.0, 1.0, 41).unwrap(),
            )
            .unwrap(),
        )
    }

    #[test]
    fn interpolation_of_zeros_is_zero() {
        let g = grid_1d(vec![-1.0, 0.0, 1.0]);
        let v = GridValueFunction::zeros(g);
        for x in [-1.0, -0.35, 0.0, 0.8, 1.0] {
            assert_eq!(v.eval(&[x]).unwrap(), 0.0);
        }
    }

    #[test]
    fn interpolation_midpoint_1d() {
        let g = grid_1d(vec![-1.0, 0.0, 1.0]);
        let v = GridValueFunction::new(g, vec![2.0, 0.0, 2.0]).unwrap();
        assert_eq!(v.eval(&[0.5]).unwrap(), 1.0);
    }

    #[test]
    fn quadratic_eval_matches_riccati_value() {
        let p_star = crate::problem::riccati_oracle(1.1, 1.0, 1.0, 1.0).unwrap();
        let q = QuadraticValueFunction::scalar(p_star).unwrap();
        // 4 * p_star at x = 2
        assert!((q.eval(&[2.0]) - 4.0 * p_star).abs() < 1e-12);
    }

    #[test]
    fn node_evaluation_is_bit_exact() {
        let g = grid_1d(vec![-1.0, -0.3, 0.0, 0.4, 1.0]);
        let vals = vec![1.75, 0.333333333333333314, 0.0, 0.1000000000000000056, 2.5];
        let v = GridValueFunction::new(g.clone(), vals.clone()).unwrap();
        for (i, expect) in vals.iter().enumerate() {
            let x = g.node(i);
            assert_eq!(v.eval(&x).unwrap(), *expect);
        }
    }

    #[test]
    fn eval_outside_domain_carries_point() {
        let g = grid_1d(vec![-1.0, 0.0, 1.0]);
        let v = GridValueFunction::zeros(g);
        match v.eval(&[1.5]) {
            Err(Error::DomainExit { x }) => assert_eq!(x, vec![1.5]),
            other => panic!("expected DomainExit, got {other:?}"),
        }
    }

    #[test]
    fn eval_within_cell_bounds() {
        let g = grid_1d(vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        let v = GridValueFunction::new(g, vec![3.0, 1.0, 0.0, 2.0, 5.0]).unwrap();
        for k in 0..100 {
            let x = -1.0 + 2.0 * k as f64 / 99.0;
            let y = v.eval(&[x]).unwrap();
            assert!((0.0..=5.0).contains(&y));
        }
    }

    #[test]
    fn grid_requires_interior_origin_node() {
        assert!(Grid::from_axes(vec![vec![-1.0, 0.1, 1.0]]).is_err());
        assert!(Grid::from_axes(vec![vec![0.0, 0.5, 1.0]]).is_err());
    }

    #[test]
    fn negative_clamp_and_origin_anchor() {
        let g = grid_1d(vec![-1.0, 0.0, 1.0]);
        let v = GridValueFunction::new(g.clone(), vec![1.0, -5e-13, 1.0]).unwrap();
        assert_eq!(v.value_at(1), 0.0);
        assert!(GridValueFunction::new(g.clone(), vec![1.0, 0.0, -1e-9]).is_err());
        assert!(GridValueFunction::new(g, vec![1.0, 0.5, 1.0]).is_err());
    }

    #[test]
    fn sup_norm_diff_trivials() {
        let g = grid_1d(vec![-1.0, 0.0, 1.0]);
        let v1 = GridValueFunction::new(g.clone(), vec![2.0, 0.0, 2.0]).unwrap();
        assert_eq!(sup_norm_diff(&v1, &v1).unwrap(), 0.0);
        let shifted: Vec<f64> = v1.values().iter().map(|v| v + 0.5).collect();
        let v2 = GridValueFunction { grid: g.clone(), values: shifted };
        assert_eq!(sup_norm_diff(&v1, &v2).unwrap(), 0.5);
        let other = grid_1d(vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        let v3 = GridValueFunction::zeros(other);
        assert!(matches!(sup_norm_diff(&v1, &v3), Err(Error::GridMismatch)));
    }

    #[test]
    fn inject_error_zero_c_is_identity() {
        let p = b1_problem();
        let em = ErrorModel { c: 0.0, shape: ErrorShape::SeededUniform, seed: 7 };
        assert_eq!(inject_error(1.2345, &[0.3], 4, &em, &p), 1.2345);
    }

    #[test]
    fn inject_error_sinusoid_respects_bound() {
        let p = b1_problem();
        let em = ErrorModel {
            c: 0.3,
            shape: ErrorShape::SignedSinusoid { frequency: 1.0, phase: 0.0 },
            seed: 0,
        };
        for k in 0..200 {
            let x = [-1.0 + 2.0 * k as f64 / 199.0];
            for i in -1..30 {
                let eps = em.epsilon(&p, &x, i);
                assert!(eps.abs() <= 0.3 * p.utility_zero_control(&x) + 1e-15);
            }
        }
    }

    #[test]
    fn seeded_uniform_is_deterministic_and_seed_sensitive() {
        let p = b1_problem();
        let em = ErrorModel { c: 0.1, shape: ErrorShape::SeededUniform, seed: 42 };
        let a = em.epsilon(&p, &[0.7], 3);
        let b = em.epsilon(&p, &[0.7], 3);
        assert_eq!(a.to_bits(), b.to_bits());
        let em2 = ErrorModel { seed: 43, ..em };
        assert_ne!(em2.epsilon(&p, &[0.7], 3).to_bits(), a.to_bits());
    }

    #[test]
    fn nearest_node_ties_choose_lower() {
        let g = grid_1d(vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        assert_eq!(g.nearest_node_flat(&[0.25]).unwrap(), 2); // tie between 0.0 and 0.5
        assert_eq!(g.nearest_node_flat(&[0.26]).unwrap(), 3);
        assert_eq!(g.nearest_node_flat(&[-0.9]).unwrap(), 0);
    }
}

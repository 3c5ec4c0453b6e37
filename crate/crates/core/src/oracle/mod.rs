//! Brute-force ground truth: quadrature of 𝕍, rejection sampling, dense
//! determinants and point-set quality metrics.
//!
//! Nothing here calls into the closed-form path. The kernel is re-evaluated
//! from its parameters, the Gram inverse comes from an LU factorization
//! instead of the sampler's bordered updates, and every integral is numeric.

mod quadrature;
pub mod stats;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use quadrature::{integrate, Nesting, QuadMethod, QuadratureRule};

use crate::error::{DppError, Result};
use crate::kernels::{KernelFamily, KernelSpec};
use crate::state::DppState;

/// Oracles integrate over tensor grids; beyond this the cost explodes.
pub const MAX_ORACLE_DIM: usize = 3;

/// Independent kernel evaluation.
#[derive(Debug, Clone)]
struct Kern {
    family: KernelFamily,
    ls: Vec<f64>,
}

impl Kern {
    fn new(spec: &KernelSpec) -> Self {
        Self { family: spec.family(), ls: spec.lengthscales().to_vec() }
    }

    fn k1(&self, d: usize, a: f64, b: f64) -> f64 {
        let r = (a - b) / self.ls[d];
        match self.family {
            KernelFamily::SquareExponential => (-0.5 * r * r).exp(),
            KernelFamily::Exponential => (-r.abs()).exp(),
        }
    }

    fn k(&self, a: &[f64], b: &[f64]) -> f64 {
        (0..self.ls.len()).map(|d| self.k1(d, a[d], b[d])).product()
    }

    fn gram(&self, xs: &[Vec<f64>], jitter: f64) -> DMatrix<f64> {
        let n = xs.len();
        DMatrix::from_fn(n, n, |i, j| self.k(&xs[i], &xs[j]) + if i == j { jitter } else { 0.0 })
    }
}

/// Posterior variance evaluated densely from an LU inverse.
#[derive(Debug, Clone)]
pub struct DenseVariance {
    kern: Kern,
    points: Vec<Vec<f64>>,
    inv: DMatrix<f64>,
}

impl DenseVariance {
    pub fn new(spec: &KernelSpec, points: &[Vec<f64>], jitter: f64) -> Result<Self> {
        let kern = Kern::new(spec);
        let inv = if points.is_empty() {
            DMatrix::zeros(0, 0)
        } else {
            kern.gram(points, jitter)
                .lu()
                .try_inverse()
                .ok_or_else(|| DppError::Factorization("LU of the oracle Gram matrix is singular".into()))?
        };
        Ok(Self { kern, points: points.to_vec(), inv })
    }

    pub fn from_state(state: &DppState) -> Result<Self> {
        Self::new(state.spec(), state.points(), state.jitter())
    }

    pub fn dim(&self) -> usize {
        self.kern.ls.len()
    }

    /// The LU inverse of the jittered Gram matrix.
    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inv
    }

    /// `1 − k(x)ᵀ K⁻¹ k(x)`, unclamped.
    pub fn eval(&self, x: &[f64]) -> f64 {
        let kv = DVector::from_iterator(self.points.len(), self.points.iter().map(|p| self.kern.k(x, p)));
        1.0 - kv.dot(&(&self.inv * &kv))
    }
}

/// Reference marginal CDF of coordinate `d` given a prefix, by quadrature.
#[derive(Debug, Clone)]
pub struct QuadCdf {
    var: DenseVariance,
    prefix: Vec<f64>,
    d: usize,
    rule: QuadratureRule,
    /// Factored route: per-pair weight `A_ab · Π_{e<d} k k · Π_{e>d} ∫₀¹ k k`.
    pair_weights: Vec<(usize, usize, f64)>,
}

impl QuadCdf {
    pub fn new(state: &DppState, prefix: &[f64], d: usize, rule: QuadratureRule) -> Result<Self> {
        let var = DenseVariance::from_state(state)?;
        Self::from_variance(var, prefix, d, rule)
    }

    pub fn from_variance(var: DenseVariance, prefix: &[f64], d: usize, rule: QuadratureRule) -> Result<Self> {
        let rule = rule.validated()?;
        let dim = var.dim();
        if dim > MAX_ORACLE_DIM {
            return Err(DppError::DimensionCap { max: MAX_ORACLE_DIM, got: dim });
        }
        if d >= dim || prefix.len() != d {
            return Err(DppError::DimensionMismatch { expected: d.min(dim), got: prefix.len() });
        }
        let mut out = Self { var, prefix: prefix.to_vec(), d, rule, pair_weights: Vec::new() };
        if rule.nesting == Nesting::Factored {
            out.pair_weights = out.factored_weights();
        }
        Ok(out)
    }

    fn factored_weights(&self) -> Vec<(usize, usize, f64)> {
        let (kern, pts) = (&self.var.kern, &self.var.points);
        let dim = kern.ls.len();
        let mut w = Vec::new();
        for a in 0..pts.len() {
            for b in 0..=a {
                let mut c = self.var.inv[(a, b)] + self.var.inv[(b, a)];
                if a == b {
                    c *= 0.5;
                }
                for e in 0..self.d {
                    c *= kern.k1(e, self.prefix[e], pts[a][e]) * kern.k1(e, self.prefix[e], pts[b][e]);
                }
                for e in self.d + 1..dim {
                    let f = |x: f64| kern.k1(e, x, pts[a][e]) * kern.k1(e, x, pts[b][e]);
                    c *= integrate(&f, 0.0, 1.0, &[pts[a][e], pts[b][e]], scaled(self.rule.method, c * (pts.len() * (pts.len() + 1) / 2) as f64));
                }
                w.push((a, b, c));
            }
        }
        w
    }

    /// `∫₀ᵗ ∫_{[0,1]^{D−d−1}} 𝕍(prefix, x, rest) d rest dx`.
    pub fn eval(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let t = t.min(1.0);
        match self.rule.nesting {
            Nesting::Factored => self.eval_factored(t),
            Nesting::TensorGrid => self.eval_tensor(t),
        }
    }

    fn eval_factored(&self, t: f64) -> f64 {
        let (kern, pts, d) = (&self.var.kern, &self.var.points, self.d);
        let sum: f64 = self
            .pair_weights
            .iter()
            .map(|&(a, b, c)| {
                let f = |x: f64| kern.k1(d, x, pts[a][d]) * kern.k1(d, x, pts[b][d]);
                c * integrate(&f, 0.0, t, &[pts[a][d], pts[b][d]], scaled(self.rule.method, c * self.pair_weights.len() as f64))
            })
            .sum();
        t - sum
    }

    fn eval_tensor(&self, t: f64) -> f64 {
        let breaks = self.breaks(self.d);
        let f = |x: f64| {
            let mut head = self.prefix.clone();
            head.push(x);
            self.trailing(&head)
        };
        integrate(&f, 0.0, t, &breaks, self.rule.method)
    }

    fn trailing(&self, head: &[f64]) -> f64 {
        if head.len() == self.var.dim() {
            return self.var.eval(head);
        }
        let breaks = self.breaks(head.len());
        let f = |x: f64| {
            let mut next = head.to_vec();
            next.push(x);
            self.trailing(&next)
        };
        integrate(&f, 0.0, 1.0, &breaks, self.rule.method)
    }

    fn breaks(&self, e: usize) -> Vec<f64> {
        self.var.points.iter().map(|p| p[e]).collect()
    }
}

/// Tightens an adaptive tolerance for a term that is multiplied by `weight`,
/// so that large inverse-Gram entries do not amplify quadrature error.
fn scaled(method: QuadMethod, weight: f64) -> QuadMethod {
    match method {
        QuadMethod::AdaptiveSimpson { tolerance } => {
            QuadMethod::AdaptiveSimpson { tolerance: tolerance / weight.abs().max(1.0) }
        }
        QuadMethod::GaussKronrod { tolerance } => QuadMethod::GaussKronrod { tolerance: tolerance / weight.abs().max(1.0) },
        other => other,
    }
}

/// One-shot `P(t)` by quadrature.
pub fn quad_cdf(state: &DppState, prefix: &[f64], d: usize, t: f64, rule: QuadratureRule) -> Result<f64> {
    Ok(QuadCdf::new(state, prefix, d, rule)?.eval(t))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionDraws {
    pub accepted: Vec<Vec<f64>>,
    pub trials: usize,
    pub acceptance_rate: f64,
    /// Grid maximum of 𝕍 times the safety factor.
    pub bound: f64,
    /// Proposals whose 𝕍 exceeded `bound`; nonzero means the bound was unsafe.
    pub bound_violations: usize,
}

pub const REJECTION_SAFETY: f64 = 1.001;

/// Uniform-proposal rejection sampling from the unnormalised density 𝕍.
pub fn rejection_draw(state: &DppState, n_trials: usize, seed: u64) -> Result<RejectionDraws> {
    let var = DenseVariance::from_state(state)?;
    let dim = var.dim();
    if dim > MAX_ORACLE_DIM {
        return Err(DppError::DimensionCap { max: MAX_ORACLE_DIM, got: dim });
    }
    let bound = grid_max(&var) * REJECTION_SAFETY;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut accepted = Vec::new();
    let mut bound_violations = 0;
    for _ in 0..n_trials {
        let x: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
        let u: f64 = rng.random();
        let v = var.eval(&x);
        if v > bound {
            bound_violations += 1;
        }
        if u * bound < v {
            accepted.push(x);
        }
    }
    if accepted.is_empty() {
        return Err(DppError::NoAcceptance { trials: n_trials });
    }
    let acceptance_rate = accepted.len() as f64 / n_trials as f64;
    Ok(RejectionDraws { accepted, trials: n_trials, acceptance_rate, bound, bound_violations })
}

fn grid_max(var: &DenseVariance) -> f64 {
    let dim = var.dim();
    let per_dim: usize = match dim {
        1 => 4001,
        2 => 301,
        _ => 61,
    };
    let total = per_dim.pow(dim as u32);
    let mut best = 0.0f64;
    let mut x = vec![0.0; dim];
    for flat in 0..total {
        let mut r = flat;
        for xe in x.iter_mut() {
            *xe = (r % per_dim) as f64 / (per_dim - 1) as f64;
            r /= per_dim;
        }
        best = best.max(var.eval(&x));
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointDensity {
    /// `Π 𝕍ᵢ(xᵢ)` from successive dense conditionings.
    pub chain: f64,
    pub determinant: f64,
    pub log_chain: f64,
    pub log_determinant: f64,
    /// `|chain / det − 1|`; `None` when either side is not positive.
    pub relative_gap: Option<f64>,
    pub diagnosis: Option<String>,
}

/// Compares the chain of conditional variances with `det K_XX` (no jitter).
pub fn joint_density_check(points: &[Vec<f64>], spec: &KernelSpec) -> Result<JointDensity> {
    if points.is_empty() {
        return Err(DppError::EmptyRequest);
    }
    if let Some(p) = points.iter().find(|p| p.len() != spec.dim()) {
        return Err(DppError::DimensionMismatch { expected: spec.dim(), got: p.len() });
    }
    let kern = Kern::new(spec);
    let mut log_chain = 0.0;
    let mut diagnosis = None;
    for i in 0..points.len() {
        let v = if i == 0 {
            1.0
        } else {
            let k = kern.gram(&points[..i], 0.0);
            let kv = DVector::from_iterator(i, points[..i].iter().map(|p| kern.k(&points[i], p)));
            match k.lu().solve(&kv) {
                Some(z) => 1.0 - kv.dot(&z),
                None => f64::NAN,
            }
        };
        if !(v > 0.0) && diagnosis.is_none() {
            diagnosis = Some(format!("conditional variance {v:e} at point {i} is not positive; Gram is numerically singular"));
        }
        log_chain += v.ln();
    }
    let det = kern.gram(points, 0.0).lu().determinant();
    if !(det > 0.0) && diagnosis.is_none() {
        diagnosis = Some(format!("determinant {det:e} is not positive; Gram is numerically singular"));
    }
    let log_determinant = det.ln();
    let relative_gap = diagnosis.is_none().then(|| (log_chain - log_determinant).exp_m1().abs());
    Ok(JointDensity { chain: log_chain.exp(), determinant: det, log_chain, log_determinant, relative_gap, diagnosis })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub sample_size: usize,
    pub dim: usize,
    pub mean_nn: f64,
    pub min_nn: f64,
    /// Largest gap between consecutive sorted projections per coordinate,
    /// counting the gaps to 0 and 1.
    pub max_projection_gap: Vec<f64>,
    pub method: Option<String>,
    pub seeds: Vec<u64>,
}

impl CoverageReport {
    pub fn tagged(mut self, method: impl Into<String>, seeds: Vec<u64>) -> Self {
        self.method = Some(method.into());
        self.seeds = seeds;
        self
    }
}

/// Nearest-neighbour and projection statistics of a point set in [0,1]^D.
pub fn coverage_metrics(points: &[Vec<f64>]) -> Result<CoverageReport> {
    if points.len() < 2 {
        return Err(DppError::InvalidSpec(format!("coverage needs at least two points, got {}", points.len())));
    }
    let dim = points[0].len();
    if let Some(p) = points.iter().find(|p| p.len() != dim) {
        return Err(DppError::DimensionMismatch { expected: dim, got: p.len() });
    }
    let n = points.len();
    let nn: Vec<f64> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i)
                .map(|j| points[i].iter().zip(&points[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .collect();
    let max_projection_gap = (0..dim)
        .map(|d| {
            let mut xs: Vec<f64> = points.iter().map(|p| p[d]).collect();
            xs.sort_by(f64::total_cmp);
            let inner = xs.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
            inner.max(xs[0]).max(1.0 - xs[n - 1])
        })
        .collect();
    Ok(CoverageReport {
        sample_size: n,
        dim,
        mean_nn: nn.iter().sum::<f64>() / n as f64,
        min_nn: nn.iter().copied().fold(f64::INFINITY, f64::min),
        max_projection_gap,
        method: None,
        seeds: Vec::new(),
    })
}

/// The closed form for `∫_{x₀}^{x₁} e^{−|x−a|} e^{−|x−b|} dx`, `x₀ < a < b < x₁`,
/// exactly as it circulates in print (unit lengthscale). Its third term has
/// the wrong sign in the exponents; kept only so reports can show the gap.
pub fn printed_exp_integral(a: f64, b: f64, x0: f64, x1: f64) -> f64 {
    (-a - b).exp() / 2.0 * ((2.0 * a).exp() - (2.0 * x0).exp())
        + (b - a) * (a - b).exp()
        + (a + b).exp() / 2.0 * ((2.0 * x1).exp() - (2.0 * b).exp())
}

/// Numeric `∫₀ᵗ k_d(x,a) k_d(x,b) dx` with the oracle's own kernel.
pub fn quad_cross_integral(spec: &KernelSpec, d: usize, a: f64, b: f64, t: f64, method: QuadMethod) -> f64 {
    let kern = Kern::new(spec);
    let f = |x: f64| kern.k1(d, x, a) * kern.k1(d, x, b);
    integrate(&f, 0.0, t, &[a, b], method)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelFamily::{Exponential, SquareExponential};

    fn state(family: KernelFamily, ls: Vec<f64>, pts: &[Vec<f64>]) -> DppState {
        let mut s = DppState::new(KernelSpec::new(family, ls).unwrap());
        for p in pts {
            s.push_point(p).unwrap();
        }
        s
    }

    #[test]
    fn empty_state_cdf_is_identity() {
        for (dim, rule) in [(1, QuadratureRule::default()), (2, QuadratureRule::composite(20).unwrap())] {
            let s = state(SquareExponential, vec![0.2; dim], &[]);
            let prefix = vec![0.3; dim - 1];
            for t in [0.0, 0.25, 1.0] {
                let p = quad_cdf(&s, &prefix, dim - 1, t, rule).unwrap();
                assert!((p - t).abs() < 1e-12, "{p} vs {t}");
            }
        }
    }

    #[test]
    fn cdf_vanishes_at_zero() {
        let s = state(Exponential, vec![0.3, 0.1], &[vec![0.2, 0.7], vec![0.6, 0.1]]);
        assert_eq!(quad_cdf(&s, &[], 0, 0.0, QuadratureRule::default()).unwrap(), 0.0);
    }

    #[test]
    fn dimension_cap() {
        let s = state(SquareExponential, vec![0.3; 4], &[]);
        let err = quad_cdf(&s, &[], 0, 0.5, QuadratureRule::default());
        assert!(matches!(err, Err(DppError::DimensionCap { max: 3, got: 4 })));
        assert!(matches!(rejection_draw(&s, 10, 0), Err(DppError::DimensionCap { .. })));
    }

    #[test]
    fn factored_and_tensor_routes_agree() {
        let pts = vec![vec![0.2, 0.7, 0.4], vec![0.65, 0.15, 0.9], vec![0.4, 0.5, 0.1]];
        for family in [SquareExponential, Exponential] {
            let s = state(family, vec![0.25, 0.3, 0.2], &pts);
            let fact = QuadCdf::new(&s, &[0.5], 1, QuadratureRule::gauss_kronrod(1e-12).unwrap()).unwrap();
            let grid = QuadCdf::new(&s, &[0.5], 1, QuadratureRule::composite(40).unwrap()).unwrap();
            for t in [0.3, 0.8, 1.0] {
                let (a, b) = (fact.eval(t), grid.eval(t));
                assert!((a - b).abs() < 1e-7, "{family:?} t={t}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn doubling_panels_changes_little() {
        let s = state(SquareExponential, vec![0.15, 0.2], &[vec![0.3, 0.3], vec![0.7, 0.6], vec![0.5, 0.9]]);
        let rule = QuadratureRule::composite(24).unwrap();
        let coarse = QuadCdf::new(&s, &[], 0, rule).unwrap().eval(0.6);
        let fine = QuadCdf::new(&s, &[], 0, rule.refined()).unwrap().eval(0.6);
        assert!((coarse - fine).abs() < 1e-7, "{coarse} vs {fine}");
    }

    #[test]
    fn dense_variance_two_points() {
        let spec = KernelSpec::new(SquareExponential, vec![0.3]).unwrap();
        let v = DenseVariance::new(&spec, &[vec![0.2], vec![0.8]], 0.0).unwrap();
        assert!((v.eval(&[0.5]) - 0.35194572633611460).abs() < 1e-14);
        assert!(v.eval(&[0.2]).abs() < 1e-12);
    }

    #[test]
    fn rejection_empty_state_accepts_almost_everything() {
        let s = state(SquareExponential, vec![0.2], &[]);
        let r = rejection_draw(&s, 50_000, 3).unwrap();
        assert_eq!(r.bound, REJECTION_SAFETY);
        assert_eq!(r.bound_violations, 0);
        let se = (r.acceptance_rate * (1.0 - r.acceptance_rate) / 50_000.0).sqrt();
        assert!((r.acceptance_rate - 1.0 / REJECTION_SAFETY).abs() < 3.0 * se + 1e-4, "{}", r.acceptance_rate);
    }

    #[test]
    fn rejection_rate_matches_mass() {
        let s = state(SquareExponential, vec![0.2], &[vec![0.3], vec![0.7]]);
        let n = 40_000;
        let r = rejection_draw(&s, n, 11).unwrap();
        let mass = quad_cdf(&s, &[], 0, 1.0, QuadratureRule::default()).unwrap();
        let p = mass / r.bound;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert_eq!(r.bound_violations, 0);
        assert!((r.acceptance_rate - p).abs() < 2.0 * se, "{} vs {p} ± {se}", r.acceptance_rate);
    }

    #[test]
    fn rejection_histogram_passes_chi_square() {
        let s = state(SquareExponential, vec![0.2], &[vec![0.3], vec![0.7]]);
        let r = rejection_draw(&s, 60_000, 1).unwrap();
        let xs: Vec<f64> = r.accepted.iter().map(|p| p[0]).collect();
        let q = QuadCdf::new(&s, &[], 0, QuadratureRule::default()).unwrap();
        let probs: Vec<f64> = (0..20).map(|b| q.eval((b + 1) as f64 / 20.0) - q.eval(b as f64 / 20.0)).collect();
        let test = stats::chi_square(&stats::histogram(&xs, 20), &probs);
        assert!(test.p_value > 0.01, "{test:?}");
    }

    #[test]
    fn zero_acceptance_is_an_error() {
        let s = state(SquareExponential, vec![0.2], &[vec![0.5]]);
        assert!(matches!(rejection_draw(&s, 0, 0), Err(DppError::NoAcceptance { trials: 0 })));
    }

    #[test]
    fn joint_density_small_cases() {
        let spec = KernelSpec::new(SquareExponential, vec![0.3]).unwrap();
        let one = joint_density_check(&[vec![0.4]], &spec).unwrap();
        assert_eq!((one.chain, one.determinant), (1.0, 1.0));
        let (a, b) = (0.2, 0.6);
        let k: f64 = (-(a - b) * (a - b) / (2.0 * 0.09f64)).exp();
        let two = joint_density_check(&[vec![a], vec![b]], &spec).unwrap();
        assert!((two.determinant - (1.0 - k * k)).abs() < 1e-15);
        assert!((two.chain - (1.0 - k * k)).abs() < 1e-15);
        assert!(two.relative_gap.unwrap() < 1e-14);
    }

    #[test]
    fn joint_density_flags_duplicates() {
        let spec = KernelSpec::new(Exponential, vec![0.3]).unwrap();
        let r = joint_density_check(&[vec![0.4], vec![0.4]], &spec).unwrap();
        assert!(r.relative_gap.is_none());
        assert!(r.diagnosis.is_some());
    }

    #[test]
    fn coverage_hand_cases() {
        let r = coverage_metrics(&[vec![0.2], vec![0.8]]).unwrap();
        assert!((r.min_nn - 0.6).abs() < 1e-15 && (r.mean_nn - 0.6).abs() < 1e-15);
        assert!((r.max_projection_gap[0] - 0.6).abs() < 1e-15);
        let grid = vec![vec![0.25, 0.25], vec![0.25, 0.75], vec![0.75, 0.25], vec![0.75, 0.75]];
        let r = coverage_metrics(&grid).unwrap();
        assert_eq!((r.min_nn, r.mean_nn), (0.5, 0.5));
        assert_eq!(r.max_projection_gap, vec![0.5, 0.5]);
        assert!(coverage_metrics(&[vec![0.1]]).is_err());
    }

    #[test]
    fn printed_formula_third_term_is_off() {
        let quad = quad_cross_integral(
            &KernelSpec::new(Exponential, vec![1.0]).unwrap(),
            0,
            0.2,
            0.6,
            1.0,
            QuadMethod::GaussKronrod { tolerance: 1e-14 },
        );
        assert!((quad - 0.56318647643518318).abs() < 1e-12);
        let printed = printed_exp_integral(0.2, 0.6, 0.0, 1.0);
        assert!((printed - quad).abs() > 1.0, "{printed}");
    }
}

//! Exact sequential sampling by inverse transform.
//!
//! Point `i` is drawn one coordinate at a time. For coordinate `d` with the
//! earlier coordinates fixed, the unnormalized marginal CDF integrates the
//! conditional variance over `[0, t]` in dimension `d` and over the whole
//! interval in every later dimension. Because the kernel factorizes,
//!
//! ```text
//! P(t) = t - Σ_ab c_ab · ∫₀ᵗ k_d(x, x_a) k_d(x, x_b) dx
//! c_ab = [K⁻¹]_ab · Π_{r<d} k_r(x_r, x_ar) k_r(x_r, x_br) · Π_{ℓ>d} ∫₀¹ k_ℓ(x, x_aℓ) k_ℓ(x, x_bℓ) dx
//! ```
//!
//! A uniform variate is scaled by `P(1)` and the preimage is found by interval
//! bisection.
//!
//! # Variate stream
//!
//! Uniforms come from ChaCha8 seeded with [`rand::SeedableRng::seed_from_u64`],
//! converted to `f64` in `[0, 1)` by `rand`'s standard 53-bit conversion.
//! Exactly one variate is consumed per (sample, dimension) pair in
//! lexicographic order, so samplers with the same seed see the same stream.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DppError, Result};
use crate::kernels::{exp_cross_integral, se_midpoint_integral, KernelFamily, KernelSpec};
use crate::special::{erf, ErfFn};
use crate::state::{DppState, DEFAULT_JITTER};

/// Bisection stops once the bracketing interval is narrower than this.
pub const DEFAULT_EPS: f64 = 1e-12;
pub const MAX_BISECTION_STEPS: usize = 60;
/// Conditional CDFs with `P(1)` at or below this are rejected as degenerate.
pub const MIN_TOTAL_MASS: f64 = 1e-14;

/// A nondecreasing, unnormalized CDF on `[0, 1]` with `P(0) = 0`.
pub trait CumulativeDensity {
    fn eval(&self, t: f64) -> f64;
    fn total_mass(&self) -> f64;
}

/// Finds `x` with `P(x) ≈ u` by bisection on `[0, 1]`.
///
/// Returns the last midpoint once the bracket is narrower than `eps` (or after
/// [`MAX_BISECTION_STEPS`] halvings).
pub fn invert_cdf<C: CumulativeDensity + ?Sized>(cdf: &C, u: f64, eps: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut mid = 0.5;
    let mut steps = 0;
    while hi - lo > eps && steps < MAX_BISECTION_STEPS {
        mid = 0.5 * (lo + hi);
        if cdf.eval(mid) < u {
            lo = mid;
        } else {
            hi = mid;
        }
        steps += 1;
    }
    mid
}

#[derive(Debug, Clone)]
enum PairTerms {
    /// `G(t) = erf((t - m)/λ) + erf(m/λ)`, constants folded into the coefficient.
    SquareExponential { mid: Vec<f64>, offset: Vec<f64> },
    Exponential { lo: Vec<f64>, hi: Vec<f64> },
}

/// Marginal CDF of one coordinate of the next point, given the state and the
/// already drawn coordinates of that point.
#[derive(Debug, Clone)]
pub struct ConditionalCdf {
    dim: usize,
    lengthscale: f64,
    coef: Vec<f64>,
    terms: PairTerms,
    erf_fn: ErfFn,
    total_mass: f64,
}

impl ConditionalCdf {
    /// Dimension index this CDF draws.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of retained pairwise terms.
    pub fn terms(&self) -> usize {
        self.coef.len()
    }

    fn eval_raw(&self, t: f64) -> f64 {
        let l = self.lengthscale;
        let correction: f64 = match &self.terms {
            PairTerms::SquareExponential { mid, offset } => self
                .coef
                .iter()
                .zip(mid.iter().zip(offset))
                .map(|(c, (m, off))| c * ((self.erf_fn)((t - m) / l) + off))
                .sum(),
            PairTerms::Exponential { lo, hi } => self
                .coef
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(c, (a, b))| c * exp_cross_integral(l, *a, *b, t))
                .sum(),
        };
        t - correction
    }
}

impl CumulativeDensity for ConditionalCdf {
    fn eval(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        self.eval_raw(t.min(1.0))
    }

    fn total_mass(&self) -> f64 {
        self.total_mass
    }
}

/// Builds the CDF of coordinate `d` given the first `d` coordinates `prefix`.
pub fn build_cdf(state: &DppState, prefix: &[f64], d: usize) -> Result<ConditionalCdf> {
    build_cdf_with_erf(state, prefix, d, erf)
}

/// [`build_cdf`] with an injected error function, for mutation testing.
#[doc(hidden)]
pub fn build_cdf_with_erf(state: &DppState, prefix: &[f64], d: usize, erf_fn: ErfFn) -> Result<ConditionalCdf> {
    let spec = state.spec();
    let dim = spec.dim();
    if d >= dim || prefix.len() != d {
        return Err(DppError::DimensionMismatch { expected: d.min(dim), got: prefix.len() });
    }
    let n = state.len();
    let inv = state.inv_gram();
    let points = state.points();
    let pairs = n * (n + 1) / 2;
    let mut coef = Vec::with_capacity(pairs);

    let terms = match spec.family() {
        KernelFamily::SquareExponential => {
            let l_d = spec.lengthscale(d);
            let scale = 0.5 * std::f64::consts::PI.sqrt() * l_d;
            let mut mid = Vec::with_capacity(pairs);
            let mut offset = Vec::with_capacity(pairs);
            for a in 0..n {
                for b in 0..=a {
                    let m = state.midpoint(a, b).expect("SE state stores midpoints");
                    let mut e = 0.0;
                    for r in 0..d {
                        let z = (prefix[r] - m[r]) / spec.lengthscale(r);
                        e += z * z;
                    }
                    let mut c = state.cross(a, b) * inv[(a, b)] * (-e).exp() * scale;
                    for l in d + 1..dim {
                        c *= se_midpoint_integral(spec.lengthscale(l), m[l], 1.0, erf_fn);
                    }
                    if a != b {
                        c *= 2.0;
                    }
                    if c != 0.0 {
                        coef.push(c);
                        mid.push(m[d]);
                        offset.push(erf_fn(m[d] / l_d));
                    }
                }
            }
            PairTerms::SquareExponential { mid, offset }
        }
        KernelFamily::Exponential => {
            let mut lo = Vec::with_capacity(pairs);
            let mut hi = Vec::with_capacity(pairs);
            for a in 0..n {
                for b in 0..=a {
                    let (pa, pb) = (&points[a], &points[b]);
                    let mut c = inv[(a, b)];
                    for r in 0..d {
                        c *= spec.eval_1d(r, prefix[r], pa[r]) * spec.eval_1d(r, prefix[r], pb[r]);
                    }
                    for l in d + 1..dim {
                        c *= exp_cross_integral(spec.lengthscale(l), pa[l], pb[l], 1.0);
                    }
                    if a != b {
                        c *= 2.0;
                    }
                    if c != 0.0 {
                        coef.push(c);
                        lo.push(pa[d].min(pb[d]));
                        hi.push(pa[d].max(pb[d]));
                    }
                }
            }
            PairTerms::Exponential { lo, hi }
        }
    };

    let mut cdf = ConditionalCdf {
        dim: d,
        lengthscale: spec.lengthscale(d),
        coef,
        terms,
        erf_fn,
        total_mass: 0.0,
    };
    let total = cdf.eval_raw(1.0);
    if !(total > MIN_TOTAL_MASS) {
        return Err(DppError::DegenerateDensity { dim: d, total_mass: total });
    }
    cdf.total_mass = total;
    Ok(cdf)
}

/// Anything that yields per-coordinate conditional CDFs and can absorb a new point.
pub trait ConditionalModel {
    type Cdf: CumulativeDensity;

    fn dim(&self) -> usize;
    fn conditional(&self, prefix: &[f64], d: usize) -> Result<Self::Cdf>;
    fn condition_on(&mut self, x: &[f64]) -> Result<()>;
}

impl ConditionalModel for DppState {
    type Cdf = ConditionalCdf;

    fn dim(&self) -> usize {
        self.spec().dim()
    }

    fn conditional(&self, prefix: &[f64], d: usize) -> Result<ConditionalCdf> {
        build_cdf(self, prefix, d)
    }

    fn condition_on(&mut self, x: &[f64]) -> Result<()> {
        self.push_point(x)
    }
}

/// Seeded stream of standard uniforms; see the module docs for its contract.
#[derive(Debug, Clone)]
pub struct VariateStream {
    rng: ChaCha8Rng,
    consumed: u64,
}

impl VariateStream {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed), consumed: 0 }
    }

    pub fn next_uniform(&mut self) -> f64 {
        self.consumed += 1;
        self.rng.random::<f64>()
    }

    /// Number of variates handed out so far.
    pub fn consumed(&self) -> u64 {
        self.consumed
    }
}

/// Draws `n` further points from `model`, conditioning on each as it is drawn.
///
/// Errors carry the zero-based index of the failing sample, counted from
/// `first_index`.
pub fn extend_chain<M: ConditionalModel>(
    model: &mut M,
    stream: &mut VariateStream,
    n: usize,
    eps: f64,
    first_index: usize,
) -> Result<Vec<Vec<f64>>> {
    let dim = model.dim();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let index = first_index + i;
        let mut point = Vec::with_capacity(dim);
        for d in 0..dim {
            let cdf = model.conditional(&point, d).map_err(|e| e.at_sample(index))?;
            let u = cdf.total_mass() * stream.next_uniform();
            point.push(invert_cdf(&cdf, u, eps));
        }
        model.condition_on(&point).map_err(|e| e.at_sample(index))?;
        out.push(point);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    Nystrom,
    Spectral,
    Uniform,
    Rejection,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::Nystrom => "nystrom",
            Method::Spectral => "spectral",
            Method::Uniform => "uniform",
            Method::Rejection => "rejection",
        }
    }
}

/// Everything needed to reproduce a [`PointSet`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub method: Method,
    pub seed: u64,
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelSpec>,
    pub eps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jitter: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<f64>,
}

/// Ordered points in the unit cube plus provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSet {
    pub points: Vec<Vec<f64>>,
    pub meta: SampleMeta,
}

impl PointSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.meta.dim
    }

    /// Points mapped from the unit cube into the kernel's box.
    pub fn to_box(&self, spec: &KernelSpec) -> Vec<Vec<f64>> {
        self.points.iter().map(|p| spec.unit_to_box(p)).collect()
    }
}

/// Exact sampler configuration.
#[derive(Debug, Clone)]
pub struct ExactSampler {
    pub spec: KernelSpec,
    pub eps: f64,
    pub jitter: f64,
}

impl ExactSampler {
    pub fn new(spec: KernelSpec) -> Self {
        Self { spec, eps: DEFAULT_EPS, jitter: DEFAULT_JITTER }
    }

    pub fn eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }

    pub fn jitter(mut self, jitter: f64) -> Self {
        self.jitter = jitter;
        self
    }

    /// Draws `n` points and also returns the final state.
    pub fn draw_with_state(&self, n: usize, seed: u64) -> Result<(PointSet, DppState)> {
        if n == 0 {
            return Err(DppError::EmptyRequest);
        }
        let mut state = DppState::with_jitter(self.spec.clone(), self.jitter);
        let mut stream = VariateStream::new(seed);
        let points = extend_chain(&mut state, &mut stream, n, self.eps, 0)?;
        let meta = SampleMeta {
            method: Method::Exact,
            seed,
            dim: self.spec.dim(),
            kernel: Some(self.spec.clone()),
            eps: self.eps,
            jitter: Some(self.jitter),
            rank: None,
            noise: None,
        };
        Ok((PointSet { points, meta }, state))
    }

    pub fn draw(&self, n: usize, seed: u64) -> Result<PointSet> {
        self.draw_with_state(n, seed).map(|(set, _)| set)
    }
}

/// Exact DPP sample of `n` points with default tolerances.
pub fn draw(spec: &KernelSpec, n: usize, seed: u64) -> Result<PointSet> {
    ExactSampler::new(spec.clone()).draw(n, seed)
}

/// i.i.d. uniform points on `[0,1]^dim` from the same variate stream.
pub fn draw_uniform(dim: usize, n: usize, seed: u64) -> PointSet {
    let mut stream = VariateStream::new(seed);
    let points = (0..n).map(|_| (0..dim).map(|_| stream.next_uniform()).collect()).collect();
    PointSet {
        points,
        meta: SampleMeta {
            method: Method::Uniform,
            seed,
            dim,
            kernel: None,
            eps: 0.0,
            jitter: None,
            rank: None,
            noise: None,
        },
    }
}

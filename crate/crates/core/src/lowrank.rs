//! Finite-rank approximate samplers.
//!
//! A basis replaces the kernel by `k̂(a,b) = φ(a)ᵀ Σ φ(b)` with `F` feature
//! functions. Conditioning a Gaussian process with that kernel and noise `σ²`
//! on points `x_1..x_n` leaves the weight-space posterior variance
//!
//! ```text
//! 𝕍̃(x) = φ(x)ᵀ (Σ⁻¹ + σ⁻² Φ Φᵀ)⁻¹ φ(x),      Φ_{f,i} = φ_f(x_i)
//! ```
//!
//! which costs `O(F³ + nF²)` instead of `O(n³)`. Every feature is a product of
//! one-dimensional factors, so the marginal CDF again reduces to per-dimension
//! integrals of factor products:
//!
//! * Nyström features `k(x, z_f)` integrate with the kernel's cross integral;
//! * spectral features are cosines and sines whose products integrate in
//!   closed form ([`trig_product_integral`] and friends).
//!
//! Internally the weights are whitened, `ψ = Sᵀφ` with `Σ = SSᵀ`, so the
//! matrix that is factorized is `I + σ⁻² ΨΨᵀ`.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{DppError, Result};
use crate::kernels::{KernelFamily, KernelSpec};
use crate::sampler::{
    extend_chain, invert_cdf, ConditionalModel, CumulativeDensity, Method, PointSet, SampleMeta, VariateStream,
    DEFAULT_EPS, MIN_TOTAL_MASS,
};

pub const DEFAULT_NOISE: f64 = 1e-6;
/// Eigenvalues of the inducing Gram matrix below this fraction of the largest
/// are dropped from the Nyström whitening.
pub const NYSTROM_CUTOFF: f64 = 1e-6;

/// Below this frequency gap the equal-frequency branch is used.
const BRANCH_GAP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    Nystrom,
    Spectral,
}

impl BasisKind {
    pub fn method(&self) -> Method {
        match self {
            BasisKind::Nystrom => Method::Nystrom,
            BasisKind::Spectral => Method::Spectral,
        }
    }
}

/// One-dimensional factor of a feature function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Factor {
    /// `k_d(x, centre)`.
    Kernel { centre: f64 },
    /// `cos(freq · x)`; frequency zero is the constant feature.
    Cos { freq: f64 },
    /// `sin(freq · x)`.
    Sin { freq: f64 },
}

/// `∫₀ᵗ cos(a x) cos(b x) dx`.
pub fn trig_product_integral(a: f64, b: f64, t: f64) -> f64 {
    if (a - b).abs() <= BRANCH_GAP * (1.0 + a.abs().max(b.abs())) {
        let a = 0.5 * (a + b);
        if a == 0.0 {
            t
        } else {
            0.5 * t + (2.0 * a * t).sin() / (4.0 * a)
        }
    } else {
        0.5 * (sin_ratio(a - b, t) + sin_ratio(a + b, t))
    }
}

/// `∫₀ᵗ sin(a x) sin(b x) dx`.
pub fn sin_product_integral(a: f64, b: f64, t: f64) -> f64 {
    if (a - b).abs() <= BRANCH_GAP * (1.0 + a.abs().max(b.abs())) {
        let a = 0.5 * (a + b);
        if a == 0.0 {
            0.0
        } else {
            0.5 * t - (2.0 * a * t).sin() / (4.0 * a)
        }
    } else {
        0.5 * (sin_ratio(a - b, t) - sin_ratio(a + b, t))
    }
}

/// `∫₀ᵗ sin(a x) cos(b x) dx`.
pub fn sin_cos_integral(a: f64, b: f64, t: f64) -> f64 {
    0.5 * (one_minus_cos_ratio(a + b, t) + one_minus_cos_ratio(a - b, t))
}

/// `∫₀ᵗ cos(w x) dx = sin(w t)/w`.
fn sin_ratio(w: f64, t: f64) -> f64 {
    if w == 0.0 {
        t
    } else {
        (w * t).sin() / w
    }
}

/// `∫₀ᵗ sin(w x) dx = (1 - cos(w t))/w`, written without cancellation.
fn one_minus_cos_ratio(w: f64, t: f64) -> f64 {
    if w == 0.0 {
        0.0
    } else {
        let s = (0.5 * w * t).sin();
        2.0 * s * s / w
    }
}

/// Finite-rank expansion `k̂(a,b) = φ(a)ᵀ Σ φ(b)` with observation noise `σ²`.
#[derive(Debug, Clone)]
pub struct FeatureBasis {
    kind: BasisKind,
    spec: KernelSpec,
    /// `features[f][d]` is the factor of feature `f` in dimension `d`.
    features: Vec<Vec<Factor>>,
    weight_cov: DMatrix<f64>,
    /// `Σ = S Sᵀ`; may have fewer columns than features when a Nyström
    /// Gram matrix is numerically rank-deficient.
    weight_factor: DMatrix<f64>,
    noise: f64,
}

impl FeatureBasis {
    /// Nyström basis on an equispaced grid of `rank` inducing points.
    ///
    /// The grid has `q` cell centres `(j + ½)/q` per dimension with `q^D = rank`.
    pub fn nystrom(spec: &KernelSpec, rank: usize, noise: f64) -> Result<Self> {
        let dim = spec.dim();
        let q = exact_root(rank, dim).ok_or_else(|| DppError::InvalidRank {
            rank,
            dim,
            reason: "equispaced inducing grid needs rank = q^D".into(),
        })?;
        let axis: Vec<f64> = (0..q).map(|j| (j as f64 + 0.5) / q as f64).collect();
        let inducing = tensor_indices(q, dim)
            .into_iter()
            .map(|idx| idx.iter().map(|&j| axis[j]).collect())
            .collect();
        Self::nystrom_with_points(spec, inducing, noise)
    }

    /// Nyström basis on user-supplied inducing points; `Σ` is the pseudo-inverse
    /// of `K_ZZ` with eigenvalues below `NYSTROM_CUTOFF` (relative) dropped.
    pub fn nystrom_with_points(spec: &KernelSpec, inducing: Vec<Vec<f64>>, noise: f64) -> Result<Self> {
        check_noise(noise)?;
        let dim = spec.dim();
        if inducing.is_empty() {
            return Err(DppError::InvalidRank { rank: 0, dim, reason: "rank must be at least 1".into() });
        }
        if let Some(z) = inducing.iter().find(|z| z.len() != dim) {
            return Err(DppError::DimensionMismatch { expected: dim, got: z.len() });
        }
        if inducing.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(DppError::InducingPoints("inducing points must lie in the unit cube".into()));
        }
        for (i, z) in inducing.iter().enumerate() {
            if inducing[..i].contains(z) {
                return Err(DppError::InducingPoints(format!("duplicate inducing point {z:?}")));
            }
        }
        let f = inducing.len();
        let gram = DMatrix::from_fn(f, f, |i, j| spec.eval(&inducing[i], &inducing[j]));
        // Truncated eigen-whitening S = U_r Λ_r^{-1/2}: dropping directions below
        // the cutoff changes k̂ by less than the Nyström residual, and keeps the
        // rounding error of quadratic forms in S near ε / cutoff.
        let eig = SymmetricEigen::new(gram);
        let top = eig.eigenvalues.max();
        let keep: Vec<usize> = (0..f).filter(|&i| eig.eigenvalues[i] > NYSTROM_CUTOFF * top).collect();
        if keep.is_empty() {
            return Err(DppError::InducingPoints(format!("{f} inducing points span no direction")));
        }
        let s = DMatrix::from_fn(f, keep.len(), |i, j| {
            eig.eigenvectors[(i, keep[j])] / eig.eigenvalues[keep[j]].sqrt()
        });
        let weight_cov = &s * s.transpose();
        let features = inducing
            .iter()
            .map(|z| z.iter().map(|&c| Factor::Kernel { centre: c }).collect())
            .collect();
        Ok(Self {
            kind: BasisKind::Nystrom,
            spec: spec.clone(),
            features,
            weight_cov,
            weight_factor: s,
            noise,
        })
    }

    /// Trigonometric basis: lowest-frequency products of `1, cos(ωx), sin(ωx)`.
    ///
    /// Per dimension the frequencies are `ω_m = π m / L` with half-period
    /// `L = max(1, ½ + 6λ)`, weighted by the kernel's spectral density
    /// (`S(0)/(2L)` for the constant, `S(ω_m)/L` for each cosine and sine).
    /// The factor sequence per dimension is `1, cos ω₁, sin ω₁, cos ω₂, ...`;
    /// products are ranked by total frequency index and the first `rank` kept.
    pub fn spectral(spec: &KernelSpec, rank: usize, noise: f64) -> Result<Self> {
        check_noise(noise)?;
        let dim = spec.dim();
        if rank == 0 {
            return Err(DppError::InvalidRank { rank, dim, reason: "rank must be at least 1".into() });
        }
        let mut q: usize = 1;
        while q.checked_pow(dim as u32).is_some_and(|p| p < rank) {
            q += 1;
        }
        // per-dimension 1D factors with weights
        let axes: Vec<Vec<(Factor, f64, usize)>> = (0..dim)
            .map(|d| {
                let l = spec.lengthscale(d);
                let half = spectral_half_period(l);
                (0..q)
                    .map(|j: usize| {
                        let m = j.div_ceil(2);
                        let freq = std::f64::consts::PI * m as f64 / half;
                        let density = spectral_density(spec.family(), l, freq);
                        if j == 0 {
                            (Factor::Cos { freq: 0.0 }, density / (2.0 * half), 0)
                        } else if j % 2 == 1 {
                            (Factor::Cos { freq }, density / half, m)
                        } else {
                            (Factor::Sin { freq }, density / half, m)
                        }
                    })
                    .collect()
            })
            .collect();
        let mut products = tensor_indices(q, dim);
        products.sort_by_key(|idx| (idx.iter().map(|&j| j.div_ceil(2)).sum::<usize>(), idx.clone()));
        products.truncate(rank);

        let mut features = Vec::with_capacity(rank);
        let mut weights = Vec::with_capacity(rank);
        for idx in &products {
            features.push(idx.iter().enumerate().map(|(d, &j)| axes[d][j].0).collect());
            weights.push(idx.iter().enumerate().map(|(d, &j)| axes[d][j].1).product::<f64>());
        }
        let weight_cov = DMatrix::from_diagonal(&DVector::from_vec(weights.clone()));
        let weight_factor = DMatrix::from_diagonal(&DVector::from_iterator(rank, weights.iter().map(|w| w.sqrt())));
        Ok(Self { kind: BasisKind::Spectral, spec: spec.clone(), features, weight_cov, weight_factor, noise })
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn rank(&self) -> usize {
        self.features.len()
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    pub fn weight_cov(&self) -> &DMatrix<f64> {
        &self.weight_cov
    }

    pub fn features(&self) -> &[Vec<Factor>] {
        &self.features
    }

    /// Same basis with a different noise level.
    pub fn with_noise(mut self, noise: f64) -> Result<Self> {
        check_noise(noise)?;
        self.noise = noise;
        Ok(self)
    }

    fn factor_at(&self, factor: Factor, d: usize, x: f64) -> f64 {
        match factor {
            Factor::Kernel { centre } => self.spec.eval_1d(d, x, centre),
            Factor::Cos { freq } => (freq * x).cos(),
            Factor::Sin { freq } => (freq * x).sin(),
        }
    }

    /// `∫₀ᵗ a(x) b(x) dx` for two factors of dimension `d`.
    fn factor_integral(&self, a: Factor, b: Factor, d: usize, t: f64) -> f64 {
        match (a, b) {
            (Factor::Kernel { centre: p }, Factor::Kernel { centre: q }) => self.spec.cross_integral_1d(d, p, q, t),
            (Factor::Cos { freq: p }, Factor::Cos { freq: q }) => trig_product_integral(p, q, t),
            (Factor::Sin { freq: p }, Factor::Sin { freq: q }) => sin_product_integral(p, q, t),
            (Factor::Sin { freq: p }, Factor::Cos { freq: q }) | (Factor::Cos { freq: q }, Factor::Sin { freq: p }) => {
                sin_cos_integral(p, q, t)
            }
            _ => unreachable!("a basis never mixes kernel and trigonometric factors"),
        }
    }

    /// Feature vector `φ(x)`.
    pub fn features_at(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.rank(),
            self.features
                .iter()
                .map(|f| f.iter().enumerate().map(|(d, &fac)| self.factor_at(fac, d, x[d])).product::<f64>()),
        )
    }

    /// Whitened features `ψ(x) = Sᵀ φ(x)`.
    fn whitened_at(&self, x: &[f64]) -> DVector<f64> {
        self.weight_factor.tr_mul(&self.features_at(x))
    }

    /// The approximated kernel `k̂(a, b)`, noise excluded.
    pub fn kernel_approx(&self, a: &[f64], b: &[f64]) -> f64 {
        self.whitened_at(a).dot(&self.whitened_at(b))
    }
}

fn check_noise(noise: f64) -> Result<()> {
    if noise > 0.0 && noise.is_finite() {
        Ok(())
    } else {
        Err(DppError::BasisConditioning(format!("noise variance must be positive, got {noise}")))
    }
}

pub(crate) fn spectral_half_period(lengthscale: f64) -> f64 {
    (0.5 + 6.0 * lengthscale).max(1.0)
}

/// Spectral density of the unit-amplitude 1D kernel, `∫ k(r) e^{-iωr} dr`.
pub(crate) fn spectral_density(family: KernelFamily, l: f64, freq: f64) -> f64 {
    match family {
        KernelFamily::SquareExponential => {
            (2.0 * std::f64::consts::PI).sqrt() * l * (-0.5 * (l * freq).powi(2)).exp()
        }
        KernelFamily::Exponential => 2.0 * l / (1.0 + (l * freq).powi(2)),
    }
}

fn exact_root(n: usize, dim: usize) -> Option<usize> {
    (1..=n).find(|q| q.checked_pow(dim as u32) == Some(n))
}

/// All index tuples in `{0..q}^dim`, lexicographic.
fn tensor_indices(q: usize, dim: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..dim {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..q).map(move |j| {
                    let mut p = prefix.clone();
                    p.push(j);
                    p
                })
            })
            .collect();
    }
    out
}

/// Points conditioned on so far under a finite-rank model.
#[derive(Debug, Clone)]
pub struct ApproxState<'a> {
    basis: &'a FeatureBasis,
    points: Vec<Vec<f64>>,
    /// `I + σ⁻² ΨΨᵀ`.
    precision: DMatrix<f64>,
    chol: Cholesky<f64, nalgebra::Dyn>,
    /// `S (I + σ⁻²ΨΨᵀ)⁻¹ Sᵀ`, the posterior weight covariance in raw coordinates.
    posterior_cov: DMatrix<f64>,
}

impl<'a> ApproxState<'a> {
    pub fn new(basis: &'a FeatureBasis) -> Self {
        let r = basis.weight_factor.ncols();
        let precision = DMatrix::identity(r, r);
        let chol = Cholesky::new(precision.clone()).expect("identity is positive definite");
        Self { basis, points: Vec::new(), precision, chol, posterior_cov: basis.weight_cov.clone() }
    }

    /// Conditions on each of `points` in order.
    pub fn conditioned(basis: &'a FeatureBasis, points: &[Vec<f64>]) -> Result<Self> {
        let mut state = Self::new(basis);
        for p in points {
            state.push_point(p)?;
        }
        Ok(state)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn push_point(&mut self, x: &[f64]) -> Result<()> {
        let dim = self.basis.dim();
        if x.len() != dim {
            return Err(DppError::DimensionMismatch { expected: dim, got: x.len() });
        }
        let psi = self.basis.whitened_at(x);
        let mut precision = self.precision.clone();
        precision.ger(1.0 / self.basis.noise, &psi, &psi, 1.0);
        let chol = Cholesky::new(precision.clone())
            .ok_or_else(|| DppError::BasisConditioning(format!("posterior precision lost definiteness at {x:?}")))?;
        let s = &self.basis.weight_factor;
        let posterior_cov = s * chol.inverse() * s.transpose();
        self.precision = precision;
        self.chol = chol;
        self.posterior_cov = posterior_cov;
        self.points.push(x.to_vec());
        Ok(())
    }

    /// `φ(x)ᵀ (Σ⁻¹ + σ⁻² ΦΦᵀ)⁻¹ φ(x)`; nonnegative by construction.
    pub fn approx_variance_at(&self, x: &[f64]) -> f64 {
        let psi = self.basis.whitened_at(x);
        let z = self.chol.l().solve_lower_triangular(&psi).expect("Cholesky factor is nonsingular");
        z.norm_squared()
    }

    pub fn build_cdf(&self, prefix: &[f64], d: usize) -> Result<ApproxCdf<'a>> {
        let basis = self.basis;
        let dim = basis.dim();
        if d >= dim || prefix.len() != d {
            return Err(DppError::DimensionMismatch { expected: d.min(dim), got: prefix.len() });
        }
        let f = basis.rank();
        let mut coef = Vec::with_capacity(f * (f + 1) / 2);
        let mut pairs = Vec::with_capacity(f * (f + 1) / 2);
        for a in 0..f {
            for b in 0..=a {
                let (fa, fb) = (&basis.features[a], &basis.features[b]);
                let mut c = self.posterior_cov[(a, b)];
                for r in 0..d {
                    c *= basis.factor_at(fa[r], r, prefix[r]) * basis.factor_at(fb[r], r, prefix[r]);
                }
                for l in d + 1..dim {
                    c *= basis.factor_integral(fa[l], fb[l], l, 1.0);
                }
                if a != b {
                    c *= 2.0;
                }
                if c != 0.0 {
                    coef.push(c);
                    pairs.push((fa[d], fb[d]));
                }
            }
        }
        let mut cdf = ApproxCdf { basis, dim: d, coef, pairs, total_mass: 0.0 };
        let total = cdf.eval_raw(1.0);
        if !(total > MIN_TOTAL_MASS) {
            return Err(DppError::DegenerateDensity { dim: d, total_mass: total });
        }
        cdf.total_mass = total;
        Ok(cdf)
    }
}

/// Marginal CDF of one coordinate under the finite-rank model.
#[derive(Debug, Clone)]
pub struct ApproxCdf<'a> {
    basis: &'a FeatureBasis,
    dim: usize,
    coef: Vec<f64>,
    pairs: Vec<(Factor, Factor)>,
    total_mass: f64,
}

impl ApproxCdf<'_> {
    fn eval_raw(&self, t: f64) -> f64 {
        self.coef
            .iter()
            .zip(&self.pairs)
            .map(|(c, &(a, b))| c * self.basis.factor_integral(a, b, self.dim, t))
            .sum()
    }
}

impl CumulativeDensity for ApproxCdf<'_> {
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

impl<'a> ConditionalModel for ApproxState<'a> {
    type Cdf = ApproxCdf<'a>;

    fn dim(&self) -> usize {
        self.basis.dim()
    }

    fn conditional(&self, prefix: &[f64], d: usize) -> Result<ApproxCdf<'a>> {
        self.build_cdf(prefix, d)
    }

    fn condition_on(&mut self, x: &[f64]) -> Result<()> {
        self.push_point(x)
    }
}

/// Approximate DPP sample of `n` points under `basis`.
pub fn approx_draw(basis: &FeatureBasis, n: usize, seed: u64) -> Result<PointSet> {
    approx_draw_eps(basis, n, seed, DEFAULT_EPS)
}

pub fn approx_draw_eps(basis: &FeatureBasis, n: usize, seed: u64, eps: f64) -> Result<PointSet> {
    if n == 0 {
        return Err(DppError::EmptyRequest);
    }
    let mut state = ApproxState::new(basis);
    let mut stream = VariateStream::new(seed);
    let points = extend_chain(&mut state, &mut stream, n, eps, 0)?;
    Ok(PointSet { points, meta: approx_meta(basis, seed, eps) })
}

pub(crate) fn approx_meta(basis: &FeatureBasis, seed: u64, eps: f64) -> SampleMeta {
    SampleMeta {
        method: basis.kind.method(),
        seed,
        dim: basis.dim(),
        kernel: Some(basis.spec.clone()),
        eps,
        jitter: None,
        rank: Some(basis.rank()),
        noise: Some(basis.noise),
    }
}

/// Draws one coordinate from an arbitrary CDF with a caller-supplied variate.
pub fn draw_coordinate<C: CumulativeDensity + ?Sized>(cdf: &C, uniform: f64, eps: f64) -> f64 {
    invert_cdf(cdf, cdf.total_mass() * uniform, eps)
}

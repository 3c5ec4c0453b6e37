//! Factorized stationary kernels on the unit cube.
//!
//! Every kernel here is a product of one-dimensional factors, normalized so
//! that `k(x, x) = 1`. Exact sampling needs only two integrals per factor:
//!
//! * the diagonal integral `∫₀ᵗ k(x, x) dx`, which is `t` for normalized kernels;
//! * the cross integral `∫₀ᵗ k(x, a) k(x, b) dx`.
//!
//! For the square-exponential factor `exp(-(x-a)²/(2λ²))` the product of two
//! factors is again Gaussian,
//!
//! ```text
//! k(x,a) k(x,b) = exp(-(x-m)²/λ²) · exp(-(a-b)²/(4λ²)),   m = (a+b)/2
//! ```
//!
//! so the cross integral is `exp(-(a-b)²/(4λ²)) · √π λ/2 · [erf((t-m)/λ) + erf(m/λ)]`.
//! For the exponential factor `exp(-|x-a|/λ)` the integrand is piecewise
//! exponential with kinks at `a` and `b`.

use serde::{Deserialize, Serialize};

use crate::error::{DppError, Result};
use crate::special::{erf, ErfFn};

const SQRT_PI: f64 = 1.772_453_850_905_516;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    /// `exp(-(a-b)²/(2λ²))` per dimension.
    SquareExponential,
    /// `exp(-|a-b|/λ)` per dimension (Matérn ν = ½).
    Exponential,
}

impl KernelFamily {
    pub fn as_str(&self) -> &'static str {
        match self {
            KernelFamily::SquareExponential => "se",
            KernelFamily::Exponential => "exp",
        }
    }
}

/// Kernel family, per-dimension lengthscales and the user-facing domain box.
///
/// Lengthscales are measured in unit-cube coordinates, i.e. after the box
/// has been mapped onto `[0,1]^D`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawKernelSpec")]
pub struct KernelSpec {
    family: KernelFamily,
    lengthscales: Vec<f64>,
    bounds: Vec<[f64; 2]>,
}

#[derive(Deserialize)]
struct RawKernelSpec {
    family: KernelFamily,
    lengthscales: Vec<f64>,
    bounds: Vec<[f64; 2]>,
}

impl TryFrom<RawKernelSpec> for KernelSpec {
    type Error = DppError;

    fn try_from(raw: RawKernelSpec) -> Result<Self> {
        KernelSpec::with_box(raw.family, raw.lengthscales, raw.bounds)
    }
}

impl KernelSpec {
    /// Kernel on the unit cube `[0,1]^D` with `D = lengthscales.len()`.
    pub fn new(family: KernelFamily, lengthscales: Vec<f64>) -> Result<Self> {
        let bounds = vec![[0.0, 1.0]; lengthscales.len()];
        Self::with_box(family, lengthscales, bounds)
    }

    pub fn isotropic(family: KernelFamily, lengthscale: f64, dim: usize) -> Result<Self> {
        Self::new(family, vec![lengthscale; dim])
    }

    pub fn with_box(family: KernelFamily, lengthscales: Vec<f64>, bounds: Vec<[f64; 2]>) -> Result<Self> {
        if lengthscales.is_empty() {
            return Err(DppError::InvalidSpec("dimension must be at least 1".into()));
        }
        if bounds.len() != lengthscales.len() {
            return Err(DppError::InvalidSpec(format!(
                "{} lengthscales but {} box intervals",
                lengthscales.len(),
                bounds.len()
            )));
        }
        if let Some(l) = lengthscales.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(DppError::InvalidSpec(format!("lengthscale {l} is not positive")));
        }
        if let Some([a, b]) = bounds.iter().find(|[a, b]| !(a.is_finite() && b.is_finite() && a < b)) {
            return Err(DppError::InvalidSpec(format!("empty box interval [{a}, {b}]")));
        }
        Ok(Self { family, lengthscales, bounds })
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    pub fn lengthscale(&self, d: usize) -> f64 {
        self.lengthscales[d]
    }

    pub fn lengthscales(&self) -> &[f64] {
        &self.lengthscales
    }

    pub fn bounds(&self) -> &[[f64; 2]] {
        &self.bounds
    }

    /// One-dimensional factor `k_d(a, b)`.
    #[inline]
    pub fn eval_1d(&self, d: usize, a: f64, b: f64) -> f64 {
        let l = self.lengthscales[d];
        match self.family {
            KernelFamily::SquareExponential => {
                let r = (a - b) / l;
                (-0.5 * r * r).exp()
            }
            KernelFamily::Exponential => (-(a - b).abs() / l).exp(),
        }
    }

    /// Full product kernel `k(a, b) = Π_d k_d(a_d, b_d)`.
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), self.dim());
        debug_assert_eq!(b.len(), self.dim());
        match self.family {
            KernelFamily::SquareExponential => {
                let s: f64 = (0..self.dim())
                    .map(|d| {
                        let r = (a[d] - b[d]) / self.lengthscales[d];
                        r * r
                    })
                    .sum();
                (-0.5 * s).exp()
            }
            KernelFamily::Exponential => {
                let s: f64 = (0..self.dim()).map(|d| (a[d] - b[d]).abs() / self.lengthscales[d]).sum();
                (-s).exp()
            }
        }
    }

    /// `∫₀ᵗ k_d(x, a) k_d(x, b) dx`.
    pub fn cross_integral_1d(&self, d: usize, a: f64, b: f64, t: f64) -> f64 {
        self.cross_integral_1d_with(d, a, b, t, erf)
    }

    /// Same as [`cross_integral_1d`](Self::cross_integral_1d) with an injected
    /// error function. Used by mutation tests of the validation suite.
    #[doc(hidden)]
    pub fn cross_integral_1d_with(&self, d: usize, a: f64, b: f64, t: f64, erf_fn: ErfFn) -> f64 {
        let l = self.lengthscales[d];
        match self.family {
            KernelFamily::SquareExponential => se_cross_integral(l, a, b, t, erf_fn),
            KernelFamily::Exponential => exp_cross_integral(l, a, b, t),
        }
    }

    /// `∫₀ᵗ k_d(x, x) dx`, which is `t` for both normalized families.
    pub fn diag_integral_1d(&self, _d: usize, t: f64) -> f64 {
        t
    }

    /// Maps a point from the user box onto the unit cube.
    pub fn box_to_unit(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(DppError::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        if x.iter().zip(&self.bounds).any(|(v, [a, b])| !(*v >= *a && *v <= *b)) {
            return Err(DppError::OutsideDomain { point: x.to_vec() });
        }
        Ok(x.iter().zip(&self.bounds).map(|(v, [a, b])| (v - a) / (b - a)).collect())
    }

    /// Inverse of [`box_to_unit`](Self::box_to_unit); clamped so rounding
    /// never lands a point outside the box.
    pub fn unit_to_box(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.bounds).map(|(u, [a, b])| (a + u * (b - a)).clamp(*a, *b)).collect()
    }
}

/// Square-exponential cross integral, Gaussian-product form.
pub(crate) fn se_cross_integral(l: f64, a: f64, b: f64, t: f64, erf_fn: ErfFn) -> f64 {
    let gap = a - b;
    let m = 0.5 * (a + b);
    (-gap * gap / (4.0 * l * l)).exp() * se_midpoint_integral(l, m, t, erf_fn)
}

/// `∫₀ᵗ exp(-(x-m)²/λ²) dx = √π λ/2 · [erf((t-m)/λ) + erf(m/λ)]`.
#[inline]
pub(crate) fn se_midpoint_integral(l: f64, m: f64, t: f64, erf_fn: ErfFn) -> f64 {
    0.5 * SQRT_PI * l * (erf_fn((t - m) / l) + erf_fn(m / l))
}

/// Exponential cross integral by case split over `x < lo`, `lo ≤ x ≤ hi`, `x > hi`.
pub(crate) fn exp_cross_integral(l: f64, a: f64, b: f64, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    let half = 0.5 * l;
    // left of both kernels' centres: exp((2x - lo - hi)/λ)
    let s = t.min(lo);
    let mut total = if s > 0.0 { half * (((2.0 * s - lo - hi) / l).exp() - (-(lo + hi) / l).exp()) } else { 0.0 };
    if t > lo {
        // plateau between the centres
        let s = t.min(hi);
        total += (s - lo.max(0.0)) * (-(hi - lo) / l).exp();
    }
    if t > hi {
        // right of both centres: exp((lo + hi - 2x)/λ)
        let from = hi.max(0.0);
        total += half * (((lo + hi - 2.0 * from) / l).exp() - ((lo + hi - 2.0 * t) / l).exp());
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
        let h = (b - a) / panels as f64;
        let mut s = f(a) + f(b);
        for i in 1..panels {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    /// Composite Simpson split at the kernel centres so kinks sit on panel edges.
    fn quad_cross(spec: &KernelSpec, a: f64, b: f64, t0: f64, t1: f64) -> f64 {
        let mut cuts = vec![t0, t1];
        cuts.extend([a, b].iter().copied().filter(|c| *c > t0 && *c < t1));
        cuts.sort_by(f64::total_cmp);
        cuts.windows(2)
            .map(|w| simpson(|x| spec.eval_1d(0, x, a) * spec.eval_1d(0, x, b), w[0], w[1], 2000))
            .sum()
    }

    fn se(l: f64) -> KernelSpec {
        KernelSpec::new(KernelFamily::SquareExponential, vec![l]).unwrap()
    }

    fn ou(l: f64) -> KernelSpec {
        KernelSpec::new(KernelFamily::Exponential, vec![l]).unwrap()
    }

    #[test]
    fn point_values() {
        assert_eq!(se(0.5).eval_1d(0, 0.3, 0.3), 1.0);
        assert!((se(1.0).eval_1d(0, 0.0, 1.0) - 0.606530659712633).abs() < 1e-15);
        assert!((ou(1.0).eval_1d(0, 0.0, 1.0) - 0.367879441171442).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(KernelSpec::new(KernelFamily::SquareExponential, vec![]).is_err());
        assert!(KernelSpec::new(KernelFamily::SquareExponential, vec![0.0]).is_err());
        assert!(KernelSpec::new(KernelFamily::Exponential, vec![-1.0, 1.0]).is_err());
        assert!(KernelSpec::with_box(KernelFamily::Exponential, vec![1.0], vec![[1.0, 1.0]]).is_err());
        assert!(KernelSpec::with_box(KernelFamily::Exponential, vec![1.0], vec![]).is_err());
    }

    #[test]
    fn cross_integral_empty_range() {
        assert_eq!(se(0.3).cross_integral_1d(0, 0.2, 0.7, 0.0), 0.0);
        assert_eq!(ou(0.3).cross_integral_1d(0, 0.2, 0.7, 0.0), 0.0);
    }

    #[test]
    fn se_cross_integral_frozen() {
        // mpmath quadrature at 40 digits
        let v = se(0.3).cross_integral_1d(0, 0.5, 0.5, 1.0);
        assert!((v - 0.52194044511076011).abs() < 1e-14, "{v}");
        let v = se(0.2).cross_integral_1d(0, 0.1, 0.45, 0.8);
        assert!((v - 0.16056441655487596).abs() < 1e-14, "{v}");
    }

    #[test]
    fn se_cross_integral_matches_simpson() {
        for l in [0.05, 0.2, 0.3, 1.0] {
            let spec = se(l);
            let closed = spec.cross_integral_1d(0, 0.5, 0.5, 1.0);
            let quad = quad_cross(&spec, 0.5, 0.5, 0.0, 1.0);
            assert!((closed - quad).abs() < 1e-10, "λ={l}: {closed} vs {quad}");
        }
    }

    #[test]
    fn exp_cross_integral_frozen() {
        let v = ou(1.0).cross_integral_1d(0, 0.2, 0.6, 1.0);
        assert!((v - 0.56318647643518318).abs() < 1e-14, "{v}");
        let q = quad_cross(&ou(1.0), 0.2, 0.6, 0.0, 1.0);
        assert!((v - q).abs() < 1e-10);
    }

    #[test]
    fn diag_integral_is_identity() {
        let spec = se(0.4);
        for t in [0.0, 0.37, 1.0] {
            assert_eq!(spec.diag_integral_1d(0, t), t);
        }
    }

    #[test]
    fn box_mapping() {
        let spec = KernelSpec::with_box(KernelFamily::SquareExponential, vec![0.1], vec![[2.0, 4.0]]).unwrap();
        assert_eq!(spec.box_to_unit(&[3.0]).unwrap(), vec![0.5]);
        assert!(matches!(spec.box_to_unit(&[4.5]), Err(DppError::OutsideDomain { .. })));
        assert!(matches!(spec.box_to_unit(&[3.0, 1.0]), Err(DppError::DimensionMismatch { .. })));
        let unit = se(0.1);
        assert_eq!(unit.box_to_unit(&[0.25]).unwrap(), vec![0.25]);
    }

    #[test]
    fn serde_validates() {
        let spec = KernelSpec::isotropic(KernelFamily::Exponential, 0.2, 2).unwrap();
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<KernelSpec>(&json).unwrap(), spec);
        let bad = json.replace("0.2", "-0.2");
        assert!(serde_json::from_str::<KernelSpec>(&bad).is_err());
    }

    fn family() -> impl Strategy<Value = KernelFamily> {
        prop_oneof![Just(KernelFamily::SquareExponential), Just(KernelFamily::Exponential)]
    }

    proptest! {
        #[test]
        fn symmetric(fam in family(), l in 0.01f64..2.0, a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let spec = KernelSpec::new(fam, vec![l]).unwrap();
            prop_assert_eq!(spec.eval_1d(0, a, b), spec.eval_1d(0, b, a));
            prop_assert!(spec.eval_1d(0, a, b) <= 1.0);
        }

        #[test]
        fn additive_in_upper_limit(fam in family(), l in 0.05f64..1.0,
                                   a in 0.0f64..1.0, b in 0.0f64..1.0,
                                   t1 in 0.0f64..1.0, t2 in 0.0f64..1.0) {
            let (t1, t2) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let spec = KernelSpec::new(fam, vec![l]).unwrap();
            let diff = spec.cross_integral_1d(0, a, b, t2) - spec.cross_integral_1d(0, a, b, t1);
            let quad = quad_cross(&spec, a, b, t1, t2);
            prop_assert!((diff - quad).abs() < 1e-10, "{} vs {}", diff, quad);
        }

        #[test]
        fn nondecreasing_in_upper_limit(fam in family(), l in 0.01f64..1.0,
                                        a in 0.0f64..1.0, b in 0.0f64..1.0, t in 0.0f64..0.999) {
            let spec = KernelSpec::new(fam, vec![l]).unwrap();
            let lo = spec.cross_integral_1d(0, a, b, t);
            let hi = spec.cross_integral_1d(0, a, b, t + 1e-3);
            prop_assert!(hi >= lo - 1e-15);
        }

        #[test]
        fn gram_is_positive_semidefinite(fam in family(), l in 0.05f64..1.0,
                                         pts in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 2), 1..=8)) {
            let spec = KernelSpec::new(fam, vec![l, l]).unwrap();
            let n = pts.len();
            let gram = nalgebra::DMatrix::from_fn(n, n, |i, j| spec.eval(&pts[i], &pts[j]));
            let eig = gram.symmetric_eigenvalues();
            prop_assert!(eig.iter().all(|e| *e > -1e-10), "{:?}", eig);
        }

        #[test]
        fn box_round_trip(lo in -100.0f64..100.0, width in 1e-3f64..50.0, u in 0.0f64..1.0) {
            let spec = KernelSpec::with_box(KernelFamily::SquareExponential, vec![0.2], vec![[lo, lo + width]]).unwrap();
            let x = spec.unit_to_box(&[u]);
            let x = [x[0].clamp(lo, lo + width)];
            let back = spec.unit_to_box(&spec.box_to_unit(&x).unwrap());
            prop_assert!((back[0] - x[0]).abs() <= 1e-12 * x[0].abs().max(1.0));
        }
    }
}

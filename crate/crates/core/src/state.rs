//! The sample drawn so far and the statistics that make its conditional
//! density cheap to integrate.
//!
//! For `i-1` accepted points the state holds
//!
//! * pairwise midpoints `m_ab = (x_a + x_b)/2` (square-exponential only),
//! * the cross matrix `M_ab`, for the SE kernel `Π_d exp(-(x_a-x_b)²_d/(4λ_d²))`
//!   and for the exponential kernel the plateau value `Π_d exp(-|x_a-x_b|_d/λ_d)`,
//! * the inverse Gram matrix `K⁻¹` of the jittered kernel.
//!
//! `K⁻¹` is grown by the block inverse of a bordered matrix. With
//! `w = K⁻¹k` and Schur complement `s = k(x,x) + jitter - kᵀw`,
//!
//! ```text
//! [K  k]⁻¹   [K⁻¹ + wwᵀ/s   -w/s]
//! [kᵀ c]   = [  -wᵀ/s        1/s ]
//! ```
//!
//! which costs `O(i²)`. The inverse is refreshed from a Cholesky factorization
//! every [`DEFAULT_REBUILD_INTERVAL`] pushes and whenever the residual of the
//! newest column of `K⁻¹K` exceeds [`DRIFT_TOLERANCE`].

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{DppError, Result};
use crate::kernels::{KernelFamily, KernelSpec};

pub const DEFAULT_JITTER: f64 = 1e-10;
pub const DEFAULT_REBUILD_INTERVAL: usize = 64;
pub const DRIFT_TOLERANCE: f64 = 1e-6;
/// Smallest admissible Schur complement when adding a point.
pub const MIN_SCHUR: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct DppState {
    spec: KernelSpec,
    jitter: f64,
    rebuild_interval: Option<usize>,
    points: Vec<Vec<f64>>,
    /// Row `a` holds `m_ab` for `b ≤ a`, flattened `b * D + d`. Empty for non-SE kernels.
    midpoints: Vec<Vec<f64>>,
    /// Row `a` holds `M_ab` for `b ≤ a`.
    cross: Vec<Vec<f64>>,
    inv_gram: DMatrix<f64>,
    pushes_since_rebuild: usize,
    rebuilds: usize,
    last_residual: f64,
}

impl DppState {
    pub fn new(spec: KernelSpec) -> Self {
        Self::with_jitter(spec, DEFAULT_JITTER)
    }

    pub fn with_jitter(spec: KernelSpec, jitter: f64) -> Self {
        assert!(jitter >= 0.0 && jitter.is_finite(), "jitter must be nonnegative");
        Self {
            spec,
            jitter,
            rebuild_interval: Some(DEFAULT_REBUILD_INTERVAL),
            points: Vec::new(),
            midpoints: Vec::new(),
            cross: Vec::new(),
            inv_gram: DMatrix::zeros(0, 0),
            pushes_since_rebuild: 0,
            rebuilds: 0,
            last_residual: 0.0,
        }
    }

    /// Periodic refresh policy; `None` keeps only the drift-triggered refresh.
    pub fn with_rebuild_interval(mut self, interval: Option<usize>) -> Self {
        self.rebuild_interval = interval;
        self
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
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

    pub fn inv_gram(&self) -> &DMatrix<f64> {
        &self.inv_gram
    }

    /// Number of from-scratch refreshes performed so far.
    pub fn rebuilds(&self) -> usize {
        self.rebuilds
    }

    /// Residual `max |(K⁻¹K)_{·,n} - e_n|` measured after the last push.
    pub fn last_residual(&self) -> f64 {
        self.last_residual
    }

    /// Midpoint vector `m_ab`; `None` for kernels that do not use it.
    pub fn midpoint(&self, a: usize, b: usize) -> Option<&[f64]> {
        if self.midpoints.is_empty() {
            return None;
        }
        let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
        let dim = self.spec.dim();
        Some(&self.midpoints[hi][lo * dim..(lo + 1) * dim])
    }

    pub fn cross(&self, a: usize, b: usize) -> f64 {
        if a >= b {
            self.cross[a][b]
        } else {
            self.cross[b][a]
        }
    }

    /// Kernel column `k(x, x_a)` against every stored point.
    pub fn kernel_vector(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.points.len(), self.points.iter().map(|p| self.spec.eval(x, p)))
    }

    /// Unclamped posterior variance `k(x,x) - kᵀK⁻¹k`.
    pub fn variance_raw(&self, x: &[f64]) -> f64 {
        if self.points.is_empty() {
            return 1.0;
        }
        let kv = self.kernel_vector(x);
        1.0 - quadratic_form(&self.inv_gram, &kv)
    }

    /// Conditional density `𝕍ᵢ(x)`, clamped at zero.
    pub fn variance_at(&self, x: &[f64]) -> f64 {
        self.variance_raw(x).max(0.0)
    }

    /// Appends `x` and updates all statistics.
    pub fn push_point(&mut self, x: &[f64]) -> Result<()> {
        let dim = self.spec.dim();
        if x.len() != dim {
            return Err(DppError::DimensionMismatch { expected: dim, got: x.len() });
        }
        if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(DppError::OutsideDomain { point: x.to_vec() });
        }
        let n = self.points.len();
        let kv = self.kernel_vector(x);
        let w = &self.inv_gram * &kv;
        let diag = 1.0 + self.jitter;
        let schur = diag - kv.dot(&w);
        if !(schur >= MIN_SCHUR) {
            return Err(DppError::NearSingular { point: x.to_vec(), schur });
        }

        let mut inv = DMatrix::zeros(n + 1, n + 1);
        for j in 0..n {
            for i in 0..n {
                inv[(i, j)] = self.inv_gram[(i, j)] + w[i] * w[j] / schur;
            }
            inv[(n, j)] = -w[j] / schur;
            inv[(j, n)] = -w[j] / schur;
        }
        inv[(n, n)] = 1.0 / schur;

        // newest column of K⁻¹K against e_n
        let mut residual: f64 = 0.0;
        for i in 0..=n {
            let mut acc = inv[(i, n)] * diag;
            for l in 0..n {
                acc += inv[(i, l)] * kv[l];
            }
            let target = if i == n { 1.0 } else { 0.0 };
            residual = residual.max((acc - target).abs());
        }

        self.inv_gram = inv;
        self.append_statistics(x);
        self.last_residual = residual;
        self.pushes_since_rebuild += 1;

        let periodic = self.rebuild_interval.is_some_and(|k| self.pushes_since_rebuild >= k);
        if periodic || residual > DRIFT_TOLERANCE {
            self.rebuild_inverse()?;
        }
        Ok(())
    }

    fn gram_entry(&self, a: usize, b: usize) -> f64 {
        let k = self.spec.eval(&self.points[a], &self.points[b]);
        if a == b {
            k + self.jitter
        } else {
            k
        }
    }

    fn append_statistics(&mut self, x: &[f64]) {
        let dim = self.spec.dim();
        let n = self.points.len();
        let mut cross_row = Vec::with_capacity(n + 1);
        match self.spec.family() {
            KernelFamily::SquareExponential => {
                let mut mid_row = Vec::with_capacity((n + 1) * dim);
                for p in self.points.iter().chain(std::iter::once(&x.to_vec())) {
                    let mut e = 0.0;
                    for d in 0..dim {
                        mid_row.push(0.5 * (p[d] + x[d]));
                        let r = (p[d] - x[d]) / self.spec.lengthscale(d);
                        e += r * r;
                    }
                    cross_row.push((-0.25 * e).exp());
                }
                self.midpoints.push(mid_row);
            }
            KernelFamily::Exponential => {
                for p in &self.points {
                    cross_row.push(self.spec.eval(p, x));
                }
                cross_row.push(1.0);
            }
        }
        self.cross.push(cross_row);
        self.points.push(x.to_vec());
    }

    /// Dense jittered Gram matrix of the stored points.
    pub fn gram(&self) -> DMatrix<f64> {
        let n = self.points.len();
        DMatrix::from_fn(n, n, |i, j| self.gram_entry(i, j))
    }

    /// Recomputes `K⁻¹` from a Cholesky factorization of the jittered Gram matrix.
    pub fn rebuild_inverse(&mut self) -> Result<()> {
        self.pushes_since_rebuild = 0;
        if self.points.len() <= 1 {
            if !self.points.is_empty() {
                self.inv_gram = DMatrix::from_element(1, 1, 1.0 / (1.0 + self.jitter));
            }
            return Ok(());
        }
        let chol = Cholesky::new(self.gram())
            .ok_or_else(|| DppError::Factorization(format!("{} points, jitter {:e}", self.points.len(), self.jitter)))?;
        let mut inv = chol.inverse();
        // symmetrize against round-off
        let n = inv.nrows();
        for j in 0..n {
            for i in 0..j {
                let v = 0.5 * (inv[(i, j)] + inv[(j, i)]);
                inv[(i, j)] = v;
                inv[(j, i)] = v;
            }
        }
        self.inv_gram = inv;
        self.rebuilds += 1;
        Ok(())
    }
}

/// `vᵀ A v` for symmetric `A`.
pub(crate) fn quadratic_form(a: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    let n = v.len();
    let mut total = 0.0;
    for j in 0..n {
        let col = a.column(j);
        let mut s = 0.0;
        for i in 0..n {
            s += col[i] * v[i];
        }
        total += s * v[j];
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelFamily::{Exponential, SquareExponential};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn se1(l: f64) -> KernelSpec {
        KernelSpec::new(SquareExponential, vec![l]).unwrap()
    }

    fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).amax()
    }

    #[test]
    fn empty_state_has_unit_variance() {
        let state = DppState::new(KernelSpec::isotropic(SquareExponential, 0.1, 3).unwrap());
        assert_eq!(state.variance_at(&[0.1, 0.5, 0.9]), 1.0);
    }

    #[test]
    fn variance_vanishes_at_conditioning_points() {
        let mut state = DppState::new(KernelSpec::isotropic(Exponential, 0.3, 2).unwrap());
        state.push_point(&[0.2, 0.4]).unwrap();
        state.push_point(&[0.7, 0.9]).unwrap();
        assert!(state.variance_at(&[0.2, 0.4]) < 1e-8);
        assert!(state.variance_at(&[0.7, 0.9]) < 1e-8);
    }

    #[test]
    fn variance_two_point_closed_form() {
        let mut state = DppState::with_jitter(se1(0.3), 0.0);
        state.push_point(&[0.2]).unwrap();
        state.push_point(&[0.8]).unwrap();
        // analytic 2×2 inverse: 1/(1-r²) [[1,-r],[-r,1]]
        let k = |a: f64, b: f64| (-(a - b) * (a - b) / (2.0 * 0.09)).exp();
        let r = k(0.2, 0.8);
        let (k1, k2) = (k(0.5, 0.2), k(0.5, 0.8));
        let oracle = 1.0 - (k1 * k1 - 2.0 * r * k1 * k2 + k2 * k2) / (1.0 - r * r);
        let v = state.variance_at(&[0.5]);
        assert!((v - oracle).abs() < 1e-14);
        // mpmath, 40 digits
        assert!((v - 0.35194572633611460).abs() < 1e-14, "{v}");
    }

    #[test]
    fn first_push_inverse() {
        let mut state = DppState::new(se1(0.2));
        state.push_point(&[0.4]).unwrap();
        assert_eq!(state.inv_gram()[(0, 0)], 1.0 / (1.0 + DEFAULT_JITTER));
    }

    #[test]
    fn midpoint_and_cross_statistics() {
        let mut state = DppState::new(se1(0.25));
        state.push_point(&[0.2]).unwrap();
        state.push_point(&[0.6]).unwrap();
        assert!((state.midpoint(0, 1).unwrap()[0] - 0.4).abs() < 1e-15);
        assert_eq!(state.midpoint(1, 0), state.midpoint(0, 1));
        assert_eq!(state.cross(0, 0), 1.0);
        let want = (-(0.4f64 * 0.4) / (4.0 * 0.0625)).exp();
        assert!((state.cross(0, 1) - want).abs() < 1e-15);

        let mut ou = DppState::new(KernelSpec::new(Exponential, vec![0.25]).unwrap());
        ou.push_point(&[0.2]).unwrap();
        ou.push_point(&[0.6]).unwrap();
        assert!(ou.midpoint(0, 1).is_none());
        assert!((ou.cross(1, 0) - (-1.6f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn push_rejects_duplicates_and_bad_input() {
        let mut state = DppState::with_jitter(se1(0.2), 0.0);
        state.push_point(&[0.5]).unwrap();
        let err = state.push_point(&[0.5]).unwrap_err();
        assert!(matches!(err, DppError::NearSingular { ref point, .. } if point == &vec![0.5]));
        assert_eq!(state.len(), 1);
        assert!(matches!(state.push_point(&[1.5]), Err(DppError::OutsideDomain { .. })));
        assert!(matches!(state.push_point(&[0.1, 0.2]), Err(DppError::DimensionMismatch { .. })));
    }

    #[test]
    fn incremental_inverse_matches_dense() {
        let spec = KernelSpec::isotropic(SquareExponential, 0.1, 2).unwrap();
        let mut state = DppState::new(spec).with_rebuild_interval(None);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..30 {
            let x = [rng.random::<f64>(), rng.random::<f64>()];
            state.push_point(&x).unwrap();
        }
        let dense = state.gram().try_inverse().unwrap();
        assert!(max_abs_diff(state.inv_gram(), &dense) < 1e-8);
        let ident = state.inv_gram() * state.gram();
        assert!(max_abs_diff(&ident, &DMatrix::identity(30, 30)) < 1e-8);
    }

    #[test]
    fn rebuild_agrees_with_incremental() {
        let spec = KernelSpec::isotropic(Exponential, 0.2, 2).unwrap();
        let mut state = DppState::new(spec).with_rebuild_interval(None);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            state.push_point(&[rng.random(), rng.random()]).unwrap();
        }
        let mut rebuilt = state.clone();
        rebuilt.rebuild_inverse().unwrap();
        assert!(max_abs_diff(state.inv_gram(), rebuilt.inv_gram()) < 1e-10);

        let mut single = DppState::new(se1(0.3));
        single.push_point(&[0.3]).unwrap();
        let before = single.inv_gram().clone();
        single.rebuild_inverse().unwrap();
        assert_eq!(single.inv_gram(), &before);
    }

    #[test]
    fn rebuild_survives_near_duplicate_pair() {
        let spec = KernelSpec::isotropic(SquareExponential, 0.02, 2).unwrap();
        let mut state = DppState::new(spec).with_rebuild_interval(None);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        state.push_point(&[0.5, 0.5]).unwrap();
        state.push_point(&[0.5 + 1e-4, 0.5]).unwrap();
        while state.len() < 50 {
            let x = [rng.random::<f64>(), rng.random::<f64>()];
            if state.variance_at(&x) > 1e-3 {
                state.push_point(&x).unwrap();
            }
        }
        state.rebuild_inverse().unwrap();
        let ident = state.inv_gram() * state.gram();
        assert!(max_abs_diff(&ident, &DMatrix::identity(50, 50)) < 1e-6);
    }

    #[test]
    fn periodic_rebuild_fires() {
        let spec = KernelSpec::isotropic(SquareExponential, 0.05, 2).unwrap();
        let mut state = DppState::new(spec);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..130 {
            state.push_point(&[rng.random(), rng.random()]).unwrap();
        }
        assert!(state.rebuilds() >= 2);
    }

    #[test]
    fn determinant_chain_identity() {
        let spec = KernelSpec::isotropic(SquareExponential, 0.15, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<Vec<f64>> = (0..12).map(|_| vec![rng.random(), rng.random()]).collect();
        let mut state = DppState::with_jitter(spec.clone(), 0.0);
        let mut log_chain = 0.0;
        for p in &pts {
            log_chain += state.variance_raw(p).ln();
            state.push_point(p).unwrap();
        }
        let log_det = state.gram().determinant().ln();
        assert!((log_chain - log_det).exp_m1().abs() < 1e-8);

        // permutation changes the factors, not the product
        let mut perm = pts.clone();
        perm.reverse();
        let mut other = DppState::with_jitter(spec, 0.0);
        let mut log_perm = 0.0;
        for p in &perm {
            log_perm += other.variance_raw(p).ln();
            other.push_point(p).unwrap();
        }
        assert!((log_perm - log_chain).exp_m1().abs() < 1e-8);
    }

    #[test]
    fn conditioning_never_increases_variance() {
        let spec = KernelSpec::isotropic(Exponential, 0.2, 1).unwrap();
        let mut state = DppState::new(spec);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let grid: Vec<f64> = (0..=200).map(|i| i as f64 / 200.0).collect();
        let mut prev: Vec<f64> = grid.iter().map(|x| state.variance_raw(&[*x])).collect();
        for _ in 0..10 {
            state.push_point(&[rng.random()]).unwrap();
            let cur: Vec<f64> = grid.iter().map(|x| state.variance_raw(&[*x])).collect();
            for (c, p) in cur.iter().zip(&prev) {
                assert!(*c <= p + 1e-10);
                assert!(*c >= -1e-8 && *c <= 1.0 + 1e-12);
            }
            prev = cur;
        }
    }
}

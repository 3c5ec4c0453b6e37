//! Exact versus finite-rank sampling on a shared state and shared variates.
//!
//! The exact chain is drawn first. Every approximation is then judged twice:
//! by its density and normalised CDF on the final exact state, and by the
//! points it draws when it replays the same uniform variates after being
//! warm-started on the first exact points.

use serde::{Deserialize, Serialize};

use crate::error::{DppError, Result};
use crate::kernels::KernelSpec;
use crate::lowrank::{ApproxState, BasisKind, FeatureBasis, DEFAULT_NOISE};
use crate::oracle::{coverage_metrics, CoverageReport};
use crate::sampler::{build_cdf, draw_uniform, extend_chain, CumulativeDensity, ExactSampler, VariateStream, DEFAULT_EPS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareConfig {
    /// One-dimensional kernel.
    pub kernel: KernelSpec,
    pub kinds: Vec<BasisKind>,
    pub ranks: Vec<usize>,
    pub state_size: usize,
    /// Leading exact points every approximate chain is conditioned on.
    pub warm_start: usize,
    pub seed: u64,
    /// Observation noise σ² of the finite-rank models, also used as the exact
    /// sampler's jitter so both describe the same nugget model.
    pub noise: f64,
    pub grid_points: usize,
    pub eps: f64,
}

impl CompareConfig {
    /// SE kernel with λ = 0.05, F ∈ {5, 10, 15}, 100 points, 20 shared.
    pub fn standard(seed: u64) -> Self {
        Self {
            kernel: KernelSpec::new(crate::kernels::KernelFamily::SquareExponential, vec![0.05])
                .expect("valid lengthscale"),
            kinds: vec![BasisKind::Nystrom, BasisKind::Spectral],
            ranks: vec![5, 10, 15],
            state_size: 100,
            warm_start: 20,
            seed,
            noise: DEFAULT_NOISE,
            grid_points: 1001,
            eps: DEFAULT_EPS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(DppError::InvalidSpec(msg));
        if self.kernel.dim() != 1 {
            return bad(format!("comparisons are one-dimensional, kernel has dimension {}", self.kernel.dim()));
        }
        if self.kinds.is_empty() || self.ranks.is_empty() {
            return bad("comparison needs at least one basis kind and one rank".into());
        }
        if self.state_size < 2 || self.warm_start > self.state_size {
            return bad(format!("need 2 ≤ state size ({}) and warm start ≤ state size", self.state_size));
        }
        if !(self.noise > 0.0) {
            return bad(format!("noise must be positive, got {}", self.noise));
        }
        if self.grid_points < 2 {
            return bad("grid needs at least two points".into());
        }
        Ok(())
    }
}

/// Approximate density and CDF error on the final exact state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationCurve {
    pub kind: BasisKind,
    pub rank: usize,
    pub density: Vec<f64>,
    /// `P̃(t)/P̃(1) − P(t)/P(1)` on the grid.
    pub cdf_deviation: Vec<f64>,
    pub sup_deviation: f64,
    /// `sup |Ṽ − V|` on the grid.
    pub variance_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproxChain {
    pub kind: BasisKind,
    pub rank: usize,
    pub points: Vec<f64>,
    /// Largest coordinate gap to the exact chain over the replayed part.
    pub max_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub config: CompareConfig,
    pub grid: Vec<f64>,
    pub exact_density: Vec<f64>,
    pub exact_points: Vec<f64>,
    /// The shared variates, one per point.
    pub uniforms: Vec<f64>,
    pub curves: Vec<DeviationCurve>,
    pub chains: Vec<ApproxChain>,
    /// Exact, each approximation, then an i.i.d. uniform baseline.
    pub coverage: Vec<CoverageReport>,
}

impl Comparison {
    pub fn curves_of(&self, kind: BasisKind) -> impl Iterator<Item = &DeviationCurve> {
        self.curves.iter().filter(move |c| c.kind == kind)
    }

    /// Largest increase of the sup deviation between consecutive ranks
    /// (in configuration order); `≤ 0` means non-increasing.
    pub fn worst_increase(&self, kind: BasisKind) -> f64 {
        let sups: Vec<f64> = self.curves_of(kind).map(|c| c.sup_deviation).collect();
        sups.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn run_comparison(cfg: &CompareConfig) -> Result<Comparison> {
    cfg.validate()?;
    let spec = &cfg.kernel;
    let n = cfg.state_size;
    let (exact, state) = ExactSampler::new(spec.clone()).eps(cfg.eps).jitter(cfg.noise).draw_with_state(n, cfg.seed)?;
    let grid: Vec<f64> = (0..cfg.grid_points).map(|i| i as f64 / (cfg.grid_points - 1) as f64).collect();
    let exact_cdf = build_cdf(&state, &[], 0)?;
    let exact_mass = exact_cdf.total_mass();
    let exact_norm: Vec<f64> = grid.iter().map(|&t| exact_cdf.eval(t) / exact_mass).collect();
    let exact_density: Vec<f64> = grid.iter().map(|&t| state.variance_at(&[t])).collect();

    let mut stream = VariateStream::new(cfg.seed);
    let uniforms: Vec<f64> = (0..n).map(|_| stream.next_uniform()).collect();

    let mut curves = Vec::new();
    let mut chains = Vec::new();
    let mut coverage = vec![coverage_metrics(&exact.points)?.tagged("exact", vec![cfg.seed])];
    for &kind in &cfg.kinds {
        for &rank in &cfg.ranks {
            let basis = match kind {
                BasisKind::Nystrom => FeatureBasis::nystrom(spec, rank, cfg.noise)?,
                BasisKind::Spectral => FeatureBasis::spectral(spec, rank, cfg.noise)?,
            };
            let full = ApproxState::conditioned(&basis, &exact.points)?;
            let cdf = full.build_cdf(&[], 0)?;
            let mass = cdf.total_mass();
            let density: Vec<f64> = grid.iter().map(|&t| full.approx_variance_at(&[t])).collect();
            let cdf_deviation: Vec<f64> =
                grid.iter().zip(&exact_norm).map(|(&t, &p)| cdf.eval(t) / mass - p).collect();
            let sup_deviation = cdf_deviation.iter().fold(0.0f64, |m, d| m.max(d.abs()));
            let variance_gap = density.iter().zip(&exact_density).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            curves.push(DeviationCurve { kind, rank, density, cdf_deviation, sup_deviation, variance_gap });

            let mut warm = ApproxState::conditioned(&basis, &exact.points[..cfg.warm_start])?;
            let mut replay = VariateStream::new(cfg.seed);
            for _ in 0..cfg.warm_start {
                replay.next_uniform();
            }
            let tail = extend_chain(&mut warm, &mut replay, n - cfg.warm_start, cfg.eps, cfg.warm_start)?;
            let points: Vec<f64> = exact.points[..cfg.warm_start].iter().chain(&tail).map(|p| p[0]).collect();
            let max_gap = points.iter().zip(&exact.points).fold(0.0f64, |m, (a, b)| m.max((a - b[0]).abs()));
            let tag = format!("{}-{rank}", kind.method().as_str());
            let as_rows: Vec<Vec<f64>> = points.iter().map(|&x| vec![x]).collect();
            coverage.push(coverage_metrics(&as_rows)?.tagged(tag, vec![cfg.seed]));
            chains.push(ApproxChain { kind, rank, points, max_gap });
        }
    }
    coverage.push(coverage_metrics(&draw_uniform(1, n, cfg.seed).points)?.tagged("uniform", vec![cfg.seed]));

    Ok(Comparison {
        config: cfg.clone(),
        grid,
        exact_density,
        exact_points: exact.points.iter().map(|p| p[0]).collect(),
        uniforms,
        curves,
        chains,
        coverage,
    })
}

/// One row of a seed-matched coupling study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingRow {
    pub rank: usize,
    /// `sup |k − k̂|` on a 201×201 grid (first coordinate pair, 1D kernels).
    pub kernel_error: f64,
    /// Largest coordinate gap between exact and approximate draws over all seeds.
    pub max_gap: f64,
}

/// Spectral draws against exact draws (jitter = σ²) with identical seeds,
/// for increasing rank.
pub fn coupling_study(spec: &KernelSpec, ranks: &[usize], n: usize, seeds: &[u64], noise: f64) -> Result<Vec<CouplingRow>> {
    if spec.dim() != 1 {
        return Err(DppError::InvalidSpec("coupling study is one-dimensional".into()));
    }
    let exact: Vec<_> = seeds
        .iter()
        .map(|&s| ExactSampler::new(spec.clone()).jitter(noise).draw(n, s))
        .collect::<Result<_>>()?;
    ranks
        .iter()
        .map(|&rank| {
            let basis = FeatureBasis::spectral(spec, rank, noise)?;
            let mut kernel_error = 0.0f64;
            for i in 0..=200 {
                for j in 0..=200 {
                    let (a, b) = ([i as f64 / 200.0], [j as f64 / 200.0]);
                    kernel_error = kernel_error.max((basis.kernel_approx(&a, &b) - spec.eval(&a, &b)).abs());
                }
            }
            let mut max_gap = 0.0f64;
            for (&s, ex) in seeds.iter().zip(&exact) {
                let ap = crate::lowrank::approx_draw(&basis, n, s)?;
                for (p, q) in ex.points.iter().zip(&ap.points) {
                    max_gap = max_gap.max((p[0] - q[0]).abs());
                }
            }
            Ok(CouplingRow { rank, kernel_error, max_gap })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelFamily::SquareExponential;

    fn small() -> CompareConfig {
        CompareConfig {
            kernel: KernelSpec::new(SquareExponential, vec![0.1]).unwrap(),
            ranks: vec![5, 15],
            state_size: 12,
            warm_start: 4,
            grid_points: 101,
            ..CompareConfig::standard(3)
        }
    }

    #[test]
    fn warm_start_rows_are_shared() {
        let cmp = run_comparison(&small()).unwrap();
        for chain in &cmp.chains {
            assert_eq!(&chain.points[..4], &cmp.exact_points[..4]);
            assert_eq!(chain.points.len(), 12);
        }
        assert_eq!(cmp.uniforms.len(), 12);
        // the first exact point is the first variate itself
        assert!((cmp.exact_points[0] - cmp.uniforms[0]).abs() < 1e-11);
        assert_eq!(cmp.curves.len(), 4);
        assert_eq!(cmp.coverage.len(), 6);
        assert_eq!(cmp.coverage.last().unwrap().method.as_deref(), Some("uniform"));
    }

    #[test]
    fn deviation_curves_are_anchored() {
        let cmp = run_comparison(&small()).unwrap();
        for c in &cmp.curves {
            assert!(c.cdf_deviation[0].abs() < 1e-15);
            assert!(c.cdf_deviation.last().unwrap().abs() < 1e-12);
            assert!(c.sup_deviation >= 0.0 && c.variance_gap >= 0.0);
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = small();
        cfg.ranks.clear();
        assert!(run_comparison(&cfg).is_err());
        let mut cfg = small();
        cfg.kernel = KernelSpec::isotropic(SquareExponential, 0.1, 2).unwrap();
        assert!(cfg.validate().is_err());
        let mut cfg = small();
        cfg.warm_start = 13;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn coupling_tightens_with_rank() {
        let spec = KernelSpec::new(SquareExponential, vec![0.3]).unwrap();
        let rows = coupling_study(&spec, &[11, 41], 5, &[0, 1], 1e-6).unwrap();
        assert!(rows[1].kernel_error < 1e-10);
        assert!(rows[1].max_gap < 1e-4 && rows[1].max_gap < rows[0].max_gap, "{rows:?}");
    }
}

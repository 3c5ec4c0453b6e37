use dpp_core::kernels::{KernelFamily, KernelSpec};
use dpp_core::oracle::{Nesting, QuadCdf, QuadratureRule};
use dpp_core::sampler::{build_cdf, invert_cdf, CumulativeDensity};
use dpp_core::state::DppState;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_state(rng: &mut ChaCha8Rng, family: KernelFamily, n: usize, dim: usize) -> DppState {
    let ls: Vec<f64> = (0..dim).map(|_| rng.random_range(0.15..0.4)).collect();
    let mut state = DppState::new(KernelSpec::new(family, ls).unwrap());
    while state.len() < n {
        let p: Vec<f64> = (0..dim).map(|_| rng.random()).collect();
        // a rejected near-duplicate just means another draw
        let _ = state.push_point(&p);
    }
    state
}

#[test]
fn three_dimensional_cdf_matches_nested_tensor_quadrature() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for family in [KernelFamily::SquareExponential, KernelFamily::Exponential] {
        for _ in 0..3 {
            let state = random_state(&mut rng, family, 10, 3);
            let prefix = [rng.random::<f64>()];
            let cdf = build_cdf(&state, &prefix, 1).unwrap();
            let rule = QuadratureRule::composite(48).unwrap().nesting(Nesting::TensorGrid);
            let oracle = QuadCdf::new(&state, &prefix, 1, rule).unwrap();
            let mass = cdf.total_mass();
            for t in [0.13, 0.5, 0.77, 1.0] {
                let dev = (cdf.eval(t) - oracle.eval(t)).abs() / mass;
                assert!(dev <= 1e-6, "{family:?} t={t}: relative deviation {dev:e}");
            }
        }
    }
}

#[test]
fn factored_and_tensor_oracles_agree_in_three_dimensions() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let state = random_state(&mut rng, KernelFamily::SquareExponential, 8, 3);
    let tensor = QuadCdf::new(&state, &[], 0, QuadratureRule::composite(32).unwrap().nesting(Nesting::TensorGrid)).unwrap();
    let factored = QuadCdf::new(&state, &[], 0, QuadratureRule::default()).unwrap();
    for t in [0.25, 0.6, 1.0] {
        assert!((tensor.eval(t) - factored.eval(t)).abs() <= 1e-7 * factored.eval(1.0));
    }
}

#[test]
fn inversion_residual_is_bounded_by_the_slope() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let eps = 1e-12;
    for _ in 0..20 {
        let family = if rng.random() { KernelFamily::SquareExponential } else { KernelFamily::Exponential };
        let state = random_state(&mut rng, family, 6, 2);
        let prefix = [rng.random::<f64>()];
        let cdf = build_cdf(&state, &prefix, 1).unwrap();
        // P′ = 𝕍 ≤ 1, so the residual of a bracket narrower than ε is at most ε
        for _ in 0..10 {
            let u = cdf.total_mass() * rng.random::<f64>();
            let x = invert_cdf(&cdf, u, eps);
            assert!((cdf.eval(x) - u).abs() <= eps + 1e-15, "residual {:e}", cdf.eval(x) - u);
        }
    }
}

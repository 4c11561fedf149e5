use gpec::explainers::{
    coalition_value, estimate_tau, kernel_shap, shapley_exhaustive, shapley_sampling, AttributionExplainer,
    BaselineSpec, Method,
};
use gpec::models::{Activation, BlackBoxModel, DenseLayer, LogitModel, MlpModel};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Shapley values straight from the coalition formula.
fn brute_force(model: &dyn BlackBoxModel, x: &[f64], baseline: &BaselineSpec) -> Vec<f64> {
    let d = x.len();
    let fact = |n: usize| (1..=n).product::<usize>() as f64;
    let present = |mask: usize| (0..d).map(|i| mask >> i & 1 == 1).collect::<Vec<_>>();
    (0..d)
        .map(|i| {
            (0..1usize << d)
                .filter(|m| m >> i & 1 == 0)
                .map(|m| {
                    let s = m.count_ones() as usize;
                    let w = fact(s) * fact(d - s - 1) / fact(d);
                    w * (coalition_value(model, x, baseline, &present(m | 1 << i))
                        - coalition_value(model, x, baseline, &present(m)))
                })
                .sum()
        })
        .collect()
}

fn random_mlp(d: usize, seed: u64) -> MlpModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layer = |inp: usize, out: usize| DenseLayer {
        weight: (0..out)
            .map(|_| (0..inp).map(|_| rng.gen_range(-1.5..1.5)).collect())
            .collect(),
        bias: (0..out).map(|_| rng.gen_range(-0.5..0.5)).collect(),
    };
    let layers = vec![layer(d, 6), layer(6, 1)];
    MlpModel::new(layers, Activation::Softplus(2.0)).unwrap()
}

#[test]
fn exhaustive_matches_brute_force_on_mlps() {
    for (d, seed) in [(2, 1), (3, 2), (4, 3), (5, 4)] {
        let m = random_mlp(d, seed);
        let x: Vec<f64> = (0..d).map(|i| 0.3 * i as f64 - 0.4).collect();
        let base = BaselineSpec::Reference(vec![0.1; d]);
        let oracle = brute_force(&m, &x, &base);
        let exact = shapley_exhaustive(&m, &x, &base).unwrap();
        let full_kernel = kernel_shap(&m, &x, &base, 1 << d, 0).unwrap();
        for (i, o) in oracle.iter().enumerate() {
            assert!((exact.e[i] - o).abs() < 1e-10);
            assert!((full_kernel.e[i] - o).abs() < 1e-8);
        }
    }
}

#[test]
fn sampling_converges_to_exact() {
    let m = random_mlp(4, 9);
    let x = [0.5, -0.2, 0.8, 0.1];
    let base = BaselineSpec::Reference(vec![0.0; 4]);
    let exact = shapley_exhaustive(&m, &x, &base).unwrap();
    let approx = shapley_sampling(&m, &x, &base, 4000, 5).unwrap();
    for (a, b) in approx.e.iter().zip(&exact.e) {
        assert!((a - b).abs() < 0.01, "{a} vs {b}");
    }
}

#[test]
fn symmetric_features_share_credit() {
    let m = LogitModel::new(3, "sym", |x: &[f64]| x[0] * x[1] + 0.5 * (x[0] + x[1]) - x[2]);
    let base = BaselineSpec::Reference(vec![0.2, 0.2, -0.1]);
    let r = shapley_exhaustive(&m, &[0.9, 0.9, 0.4], &base).unwrap();
    assert!((r.e[0] - r.e[1]).abs() < 1e-10);
}

#[test]
fn dummy_feature_gets_nothing() {
    let m = LogitModel::new(3, "dummy", |x: &[f64]| 2.0 * x[0] - x[2]);
    let base = BaselineSpec::Background(vec![vec![0.0, 1.0, 0.0], vec![0.3, -2.0, 0.5]]);
    let r = shapley_exhaustive(&m, &[1.0, 5.0, -1.0], &base).unwrap();
    assert!(r.e[1].abs() < 1e-10);
}

#[test]
fn fewer_permutations_means_more_variance() {
    let m = random_mlp(4, 21);
    let base = BaselineSpec::Reference(vec![0.0; 4]);
    let x = [0.7, -0.6, 0.4, 0.9];
    let tau = |p: usize| {
        let ex = AttributionExplainer {
            model: &m,
            baseline: &base,
            method: Method::ShapleySampling { permutations: p },
        };
        estimate_tau(&ex, &x, 20, 77).unwrap()
    };
    let few = tau(5);
    let many = tau(200);
    assert!(few.iter().sum::<f64>() > many.iter().sum::<f64>());
    for (f, m) in few.iter().zip(&many) {
        assert!(*f >= 0.0 && *m >= 0.0);
        assert!(f > m, "{f} <= {m}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn kernel_shap_is_always_efficient(
        seed in 0u64..1000,
        d in 2usize..7,
        extra in 0usize..20,
        xs in prop::collection::vec(-1.0..1.0f64, 6),
    ) {
        let m = random_mlp(d, seed);
        let x = &xs[..d];
        let base = BaselineSpec::Reference(vec![0.0; d]);
        let r = kernel_shap(&m, x, &base, d + 2 + extra, seed).unwrap();
        let target = m.predict(x) - m.predict(&vec![0.0; d]);
        prop_assert!((r.e.iter().sum::<f64>() - target).abs() < 1e-8);
    }

    #[test]
    fn sampling_is_seed_deterministic(seed in any::<u64>(), p in 1usize..12) {
        let m = random_mlp(3, 5);
        let base = BaselineSpec::Reference(vec![0.0; 3]);
        let a = shapley_sampling(&m, &[0.2, 0.4, -0.6], &base, p, seed).unwrap();
        let b = shapley_sampling(&m, &[0.2, 0.4, -0.6], &base, p, seed).unwrap();
        prop_assert_eq!(a.e.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.e.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        // every permutation telescopes, so efficiency holds for any count
        let target = m.predict(&[0.2, 0.4, -0.6]) - m.predict(&[0.0; 3]);
        prop_assert!((a.e.iter().sum::<f64>() - target).abs() < 1e-10);
    }

    #[test]
    fn tau_is_non_negative(seed in any::<u64>(), k in 2usize..6) {
        let m = random_mlp(3, 8);
        let base = BaselineSpec::Reference(vec![0.0; 3]);
        let ex = AttributionExplainer { model: &m, baseline: &base, method: Method::ShapleySampling { permutations: 2 } };
        let v = estimate_tau(&ex, &[0.5, 0.5, 0.5], k, seed).unwrap();
        prop_assert!(v.iter().all(|t| *t >= 0.0));
    }
}

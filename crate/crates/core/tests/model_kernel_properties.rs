use std::sync::Arc;

use gpec::boundary::{sample_boundary, BoundarySet, SamplingStrategy, SearchParams};
use gpec::geodesic::build_index;
use gpec::models::{make_analytic_2d, one_vs_all, Activation, BlackBoxModel, DenseLayer, MlpModel};
use gpec::wegkernel::{CovarianceKernel, WegEvaluator, WegParams};
use gpec::Bounds;
use proptest::prelude::*;

fn mlp(w1: &[f64], w2: &[f64], outputs: usize, activation: Activation) -> MlpModel {
    let hidden = w1.len() / 3;
    let layers = vec![
        DenseLayer {
            weight: (0..hidden).map(|h| vec![w1[3 * h], w1[3 * h + 1]]).collect(),
            bias: (0..hidden).map(|h| w1[3 * h + 2]).collect(),
        },
        DenseLayer {
            weight: (0..outputs)
                .map(|o| w2[o * hidden..(o + 1) * hidden].to_vec())
                .collect(),
            bias: vec![0.0; outputs],
        },
    ];
    MlpModel::new(layers, activation).unwrap()
}

fn curve(amp: f64, freq: f64, m: usize) -> BoundarySet {
    let points = (0..m)
        .map(|i| {
            let t = i as f64 / (m - 1) as f64 * 2.0 - 1.0;
            vec![t, amp * (freq * t).sin()]
        })
        .collect();
    BoundarySet::from_points(points, "curve").unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn cosine_gradient_matches_central_differences(x1 in 1.0f64..13.0, x2 in -4.0f64..4.0) {
        let m = make_analytic_2d("cosine").unwrap();
        let g = m.gradient(&[x1, x2]).unwrap();
        let h = 1e-6;
        for k in 0..2 {
            let mut up = [x1, x2];
            let mut down = [x1, x2];
            up[k] += h;
            down[k] -= h;
            let fd = (m.predict(&up) - m.predict(&down)) / (2.0 * h);
            let scale = g[k].abs().max(1e-3);
            prop_assert!((g[k] - fd).abs() / scale <= 1e-6, "axis {k}: {} vs {fd}", g[k]);
        }
    }

    #[test]
    fn mlp_predict_is_bitwise_deterministic(
        w1 in prop::collection::vec(-2.0f64..2.0, 12),
        w2 in prop::collection::vec(-2.0f64..2.0, 4),
        beta in 0.1f64..5.0,
        x in prop::collection::vec(-3.0f64..3.0, 2),
    ) {
        let m = mlp(&w1, &w2, 1, Activation::Softplus(beta));
        let first = m.predict(&x);
        prop_assert!((0.0..=1.0).contains(&first));
        prop_assert_eq!(first.to_bits(), m.predict(&x).to_bits());
        prop_assert_eq!(first.to_bits(), m.clone().predict(&x).to_bits());
    }

    #[test]
    fn one_vs_all_side_follows_best_rival(
        w1 in prop::collection::vec(-2.0f64..2.0, 12),
        w2 in prop::collection::vec(-2.0f64..2.0, 12),
        class in 0usize..3,
        x in prop::collection::vec(-3.0f64..3.0, 2),
    ) {
        let net = mlp(&w1, &w2, 3, Activation::Relu);
        let logits = net.logits(&x);
        let rival = (0..3).filter(|&c| c != class).map(|c| logits[c]).fold(f64::NEG_INFINITY, f64::max);
        let margin = logits[class] - rival;
        let p = one_vs_all(net, class).unwrap().predict(&x);
        if margin.abs() > 1e-9 {
            prop_assert_eq!(p > 0.5, margin > 0.0);
        } else {
            prop_assert!((p - 0.5).abs() <= 1e-9);
        }
    }

    #[test]
    fn boundary_points_meet_their_residuals(
        w1 in prop::collection::vec(-2.0f64..2.0, 12),
        w2 in prop::collection::vec(-2.0f64..2.0, 4),
    ) {
        let m = mlp(&w1, &w2, 1, Activation::Softplus(2.0));
        let strategy = SamplingStrategy::Grid {
            bounds: Bounds::new(vec![-3.0, -3.0], vec![3.0, 3.0]).unwrap(),
            resolution: 12,
        };
        let params = SearchParams::default();
        let Ok(set) = sample_boundary(&m, &strategy, params) else {
            return Ok(());
        };
        prop_assert_eq!(&set, &sample_boundary(&m, &strategy, params).unwrap());
        for (p, r) in set.points.iter().zip(&set.residuals) {
            let direct = (m.predict(p) - 0.5).abs();
            prop_assert_eq!(direct, *r);
            prop_assert!(direct <= set.tolerance);
        }
    }

    #[test]
    fn weg_gram_is_a_valid_correlation_matrix(
        amp in 0.0f64..0.6,
        freq in 0.5f64..8.0,
        rho in 0.0f64..5.0,
        xs in prop::collection::vec((-1.5f64..1.5, -1.0f64..1.0), 2..20),
    ) {
        let index = Arc::new(build_index(curve(amp, freq, 60), 6).unwrap());
        let k = WegEvaluator::new(index, WegParams { lambda: 1.0, rho }).unwrap();
        let pts: Vec<Vec<f64>> = xs.iter().map(|(a, b)| vec![*a, *b]).collect();
        let g = k.cross(&pts, &pts);
        for i in 0..pts.len() {
            prop_assert_eq!(g[(i, i)], 1.0);
            for j in 0..pts.len() {
                prop_assert!((g[(i, j)] - g[(j, i)]).abs() <= 1e-12);
                prop_assert!(g[(i, j)] >= -1e-12 && g[(i, j)] <= 1.0 + 1e-12);
                if rho == 0.0 {
                    prop_assert!((g[(i, j)] - 1.0).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn zero_rho_collapses_everywhere(
        amp in 0.0f64..0.6,
        x in prop::collection::vec(-5.0f64..5.0, 2),
        y in prop::collection::vec(-5.0f64..5.0, 2),
    ) {
        let index = Arc::new(build_index(curve(amp, 3.0, 40), 5).unwrap());
        let k = WegEvaluator::new(index, WegParams { lambda: 1.0, rho: 0.0 }).unwrap();
        let base = k.weg_raw(&[0.0, 0.0], &[0.0, 0.0]);
        prop_assert!((k.weg_raw(&x, &y) - base).abs() <= 1e-12);
        prop_assert!((k.weg_normalized(&x, &y) - 1.0).abs() <= 1e-12);
    }
}

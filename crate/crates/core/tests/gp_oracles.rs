use std::sync::Arc;

use gpec::explainers::ExplanationRecord;
use gpec::gp::{fit, CI_Z};
use gpec::wegkernel::{CovarianceKernel, RbfKernel};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Kernel given by an explicit PSD table; a point's first coordinate is its row.
struct TableKernel {
    table: Vec<Vec<f64>>,
}

impl TableKernel {
    fn random(size: usize, rng: &mut ChaCha8Rng) -> Self {
        let rank = size + 2;
        let b: Vec<Vec<f64>> = (0..size)
            .map(|_| (0..rank).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let table = (0..size)
            .map(|i| {
                (0..size)
                    .map(|j| {
                        let v: f64 = b[i].iter().zip(&b[j]).map(|(a, c)| a * c).sum();
                        v + if i == j { 0.1 } else { 0.0 }
                    })
                    .collect()
            })
            .collect();
        Self { table }
    }
}

impl CovarianceKernel for TableKernel {
    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        self.table[x[0] as usize][y[0] as usize]
    }
    fn describe(&self) -> String {
        "table".into()
    }
}

/// Gauss-Jordan inverse with partial pivoting.
fn invert(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&p, &q| m[p][col].abs().total_cmp(&m[q][col].abs()))
            .unwrap();
        m.swap(col, pivot);
        let p = m[col][col];
        for v in &mut m[col] {
            *v /= p;
        }
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                let pivot_row = m[col].clone();
                for (v, pv) in m[r].iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

fn record(x: Vec<f64>, e: Vec<f64>, noise: Vec<f64>) -> ExplanationRecord {
    ExplanationRecord {
        x,
        e,
        noise_var: noise,
        explainer_id: "oracle".into(),
        seed: 0,
    }
}

/// Conditions the joint Gaussian of (noisy train labels, f(test)) by reading
/// the conditional off the joint precision matrix.
fn mvn_condition(kernel: &TableKernel, n: usize, test: usize, noise: &[f64], y: &[f64]) -> (f64, f64) {
    let ids: Vec<usize> = (0..n).chain([test]).collect();
    let joint: Vec<Vec<f64>> = ids
        .iter()
        .enumerate()
        .map(|(a, &i)| {
            ids.iter()
                .enumerate()
                .map(|(b, &j)| kernel.table[i][j] + if a == b && a < n { noise[a] } else { 0.0 })
                .collect()
        })
        .collect();
    let precision = invert(&joint);
    let p_tt = precision[n][n];
    let var = 1.0 / p_tt;
    let mean = -(0..n).map(|i| precision[n][i] * y[i]).sum::<f64>() / p_tt;
    (mean, var)
}

#[test]
fn matches_mvn_conditioning_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..50 {
        let n = rng.gen_range(1..=10);
        let d = rng.gen_range(1..=4);
        let kernel = TableKernel::random(n + 1, &mut rng);
        let train: Vec<ExplanationRecord> = (0..n)
            .map(|i| {
                let mut x = vec![i as f64];
                x.extend((1..d).map(|_| rng.gen_range(-1.0..1.0)));
                let e = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let noise = (0..d)
                    .map(|_| {
                        if rng.gen_bool(0.3) {
                            0.0
                        } else {
                            rng.gen_range(0.0..0.5)
                        }
                    })
                    .collect();
                record(x, e, noise)
            })
            .collect();
        let table = kernel.table.clone();
        let model = fit(&train, Arc::new(kernel)).unwrap();
        assert_eq!(model.jitter, 0.0);
        let oracle_kernel = TableKernel { table };
        let mut test = vec![n as f64];
        test.extend(vec![0.0; d - 1]);
        let got = model.predict(&test).unwrap();
        for j in 0..d {
            let noise: Vec<f64> = train.iter().map(|r| r.noise_var[j]).collect();
            let y: Vec<f64> = train.iter().map(|r| r.e[j]).collect();
            let (mean, var) = mvn_condition(&oracle_kernel, n, n, &noise, &y);
            assert!((got.mean[j] - mean).abs() < 1e-8, "mean {} vs {}", got.mean[j], mean);
            assert!(
                (got.variance[j] - var).abs() < 1e-8,
                "var {} vs {}",
                got.variance[j],
                var
            );
            assert!((got.ci_width[j] - 2.0 * CI_Z * var.sqrt()).abs() < 1e-7);
        }
    }
}

#[test]
fn factor_solve_matches_dense_inverse() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let xs: Vec<Vec<f64>> = (0..3)
        .map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
        .collect();
    let train: Vec<ExplanationRecord> = xs
        .iter()
        .map(|x| {
            record(
                x.clone(),
                vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
                vec![0.05, 0.0],
            )
        })
        .collect();
    let kernel = RbfKernel::new(0.7).unwrap();
    let model = fit(&train, Arc::new(kernel)).unwrap();
    let test = vec![0.2, -0.3];
    let got = model.predict(&test).unwrap();
    for j in 0..2 {
        let cov = model.covariance(j);
        let dense: Vec<Vec<f64>> = (0..3).map(|r| (0..3).map(|c| cov[(r, c)]).collect()).collect();
        let inv = invert(&dense);
        let k: Vec<f64> = xs.iter().map(|x| kernel.eval(x, &test)).collect();
        let y: Vec<f64> = train.iter().map(|r| r.e[j]).collect();
        let mut mean = 0.0;
        let mut explained = 0.0;
        for r in 0..3 {
            for c in 0..3 {
                mean += k[r] * inv[r][c] * y[c];
                explained += k[r] * inv[r][c] * k[c];
            }
        }
        assert!((got.mean[j] - mean).abs() < 1e-10);
        assert!((got.variance[j] - (1.0 - explained)).abs() < 1e-10);

        let l = model.factor(j);
        let rebuilt = &l * l.transpose();
        assert!((rebuilt - &cov).norm() / cov.norm() < 1e-8);
    }
}

#[test]
fn noise_enters_the_diagonal_only() {
    let train = vec![
        record(vec![0.0], vec![1.0], vec![0.3]),
        record(vec![0.5], vec![2.0], vec![0.0]),
    ];
    let model = fit(&train, Arc::new(RbfKernel::new(1.0).unwrap())).unwrap();
    let cov = model.covariance(0);
    let k01 = (-0.25f64).exp();
    assert_eq!(cov[(0, 0)], 1.0 + 0.3);
    assert_eq!(cov[(1, 1)], 1.0);
    assert_eq!(cov[(0, 1)], k01);
    assert_eq!(cov[(1, 0)], k01);
}

/// Training inputs with targets, two noise columns, and a test offset.
type Instance = (Vec<(f64, f64, f64)>, Vec<f64>, Vec<f64>, f64);

fn instance() -> impl Strategy<Value = Instance> {
    (1usize..8).prop_flat_map(|n| {
        (
            prop::collection::vec((-2.0..2.0f64, -2.0..2.0f64, -1.0..1.0f64), n),
            prop::collection::vec(0.0..0.5f64, n),
            prop::collection::vec(0.0..0.5f64, n),
            0.2..3.0f64,
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn more_noise_never_lowers_variance(
        (rows, noise, extra, lambda) in instance(),
        tests in prop::collection::vec((-3.0..3.0f64, -3.0..3.0f64), 1..6),
    ) {
        let kernel: Arc<dyn CovarianceKernel> = Arc::new(RbfKernel::new(lambda).unwrap());
        let build = |bump: bool| -> Vec<ExplanationRecord> {
            rows.iter().enumerate().map(|(i, (a, b, e))| {
                let v = noise[i] + if bump { extra[i] } else { 0.0 };
                record(vec![*a, *b], vec![*e, -*e], vec![v, 0.0])
            }).collect()
        };
        let base = fit(&build(false), kernel.clone()).unwrap();
        let noisy = fit(&build(true), kernel).unwrap();
        let xs: Vec<Vec<f64>> = tests.iter().map(|(a, b)| vec![*a, *b]).collect();
        let p0 = base.predict_batch(&xs).unwrap();
        let p1 = noisy.predict_batch(&xs).unwrap();
        for (a, b) in p0.iter().zip(&p1) {
            prop_assert!(b.variance[0] >= a.variance[0] - 1e-12, "{} < {}", b.variance[0], a.variance[0]);
            prop_assert_eq!(a.variance[1], b.variance[1]);
        }
    }

    #[test]
    fn posterior_never_exceeds_prior(
        (rows, noise, _extra, lambda) in instance(),
        tests in prop::collection::vec((-3.0..3.0f64, -3.0..3.0f64), 1..6),
    ) {
        let train: Vec<ExplanationRecord> = rows.iter().enumerate()
            .map(|(i, (a, b, e))| record(vec![*a, *b], vec![*e, 0.5], vec![noise[i], 0.0]))
            .collect();
        let model = fit(&train, Arc::new(RbfKernel::new(lambda).unwrap())).unwrap();
        for (a, b) in tests {
            let p = model.predict(&[a, b]).unwrap();
            for j in 0..2 {
                prop_assert!(p.variance[j] <= 1.0 + 1e-10);
                prop_assert!(p.ci_width[j] >= 0.0);
            }
        }
    }

    #[test]
    fn batch_is_order_independent(
        (rows, noise, _extra, lambda) in instance(),
        tests in prop::collection::vec((-3.0..3.0f64, -3.0..3.0f64), 2..8),
    ) {
        let train: Vec<ExplanationRecord> = rows.iter().enumerate()
            .map(|(i, (a, b, e))| record(vec![*a, *b], vec![*e, 0.0], vec![noise[i], 0.1]))
            .collect();
        let model = fit(&train, Arc::new(RbfKernel::new(lambda).unwrap())).unwrap();
        let xs: Vec<Vec<f64>> = tests.iter().map(|(a, b)| vec![*a, *b]).collect();
        let forward = model.predict_batch(&xs).unwrap();
        let mut rev = xs.clone();
        rev.reverse();
        let backward = model.predict_batch(&rev).unwrap();
        for (a, b) in forward.iter().zip(backward.iter().rev()) {
            prop_assert_eq!(a, b);
        }
    }
}

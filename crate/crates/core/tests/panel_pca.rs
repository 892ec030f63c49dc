use dlvsim::fixtures::FactorFixture;
use dlvsim::numerics::Tensor;
use dlvsim::panel::{log_returns, make_windows, reference_grid, to_log, GridLabel, LogPanel, Panel, DEFAULT_FLOOR};
use dlvsim::pca::{fit_pca, CompressionMap, DEFAULT_COMPONENTS};
use dlvsim::rng::{normal_vec, seeded};
use proptest::prelude::*;

fn labels(n: usize) -> Vec<GridLabel> {
    reference_grid()[..n].to_vec()
}

fn random_matrix(t: usize, n: usize, seed: u64) -> Tensor {
    let mut rng = seeded(seed);
    // Correlated columns with unequal scales.
    let z = normal_vec(&mut rng, t * n);
    let mut rows = vec![0.0; t * n];
    for i in 0..t {
        for j in 0..n {
            let mix: f64 = (0..=j).map(|k| z[i * n + k] / (1.0 + k as f64)).sum();
            rows[i * n + j] = mix * (1.0 + j as f64) - 0.5 * j as f64;
        }
    }
    Tensor::matrix(t, n, rows).unwrap()
}

fn max_abs_diff(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn gram(cm: &CompressionMap) -> Tensor {
    let w = cm.projection_matrix();
    w.matmul(&w.transpose().unwrap()).unwrap()
}

#[test]
fn factor_fixture_is_mostly_explained_by_five_components() {
    let lp = FactorFixture::default().generate(3);
    assert_eq!(lp.dim(), 32);
    let cm = fit_pca(lp.values(), DEFAULT_COMPONENTS).unwrap();
    let cum = cm.cumulative_ratio();
    assert!(cum[4] >= 0.96, "cumulative ratio at 5: {}", cum[4]);
    assert!((cum[31] - 1.0).abs() < 1e-10);
    for k in 1..cum.len() {
        assert!(cum[k] >= cum[k - 1] - 1e-15);
    }
    // Concave: increments are non-increasing.
    for k in 1..cum.len() - 1 {
        assert!(cum[k + 1] - cum[k] <= cum[k] - cum[k - 1] + 1e-12);
    }
}

#[test]
fn full_basis_round_trip_is_identity() {
    let x = random_matrix(200, 6, 1);
    let cm = fit_pca(&x, 6).unwrap();
    let back = cm.decompress(&cm.compress(&x).unwrap()).unwrap();
    assert!(max_abs_diff(&x, &back) < 1e-10);
}

#[test]
fn log_transform_and_returns_examples() {
    let raw = Tensor::from_rows(&[vec![0.01, 1.0], vec![0.003, 1.0], vec![0.02, 1.0]]).unwrap();
    let panel = Panel::new(vec!["a".into(), "b".into(), "c".into()], labels(2), raw, DEFAULT_FLOOR).unwrap();
    let lp = to_log(&panel, DEFAULT_FLOOR).unwrap();
    assert!((lp.values().get(0, 0) + 4.605_170_185_988_091).abs() < 1e-12);
    assert_eq!(lp.values().get(0, 1), 0.0);
    assert_eq!(lp.values().get(1, 0), 0.01f64.ln());
    let one = LogPanel::from_rows_indexed(labels(1), Tensor::matrix(3, 1, vec![0.0, 0.1, 0.3]).unwrap(), DEFAULT_FLOOR).unwrap();
    let r = log_returns(&one).unwrap();
    assert!((r.get(0, 0) - 0.1).abs() < 1e-15 && (r.get(1, 0) - 0.2).abs() < 1e-15);
    let short = LogPanel::from_rows_indexed(labels(1), Tensor::matrix(1, 1, vec![0.0]).unwrap(), DEFAULT_FLOOR).unwrap();
    assert!(log_returns(&short).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn log_of_exp_is_identity_above_floor(t in 2usize..20, n in 1usize..5, seed in any::<u64>()) {
        let x = random_matrix(t, n, seed).map(|v| v.abs() * 0.5);
        let lp = LogPanel::from_rows_indexed(labels(n), x.clone(), DEFAULT_FLOOR).unwrap();
        let raw = lp.to_panel().unwrap();
        prop_assert!(raw.values().data().iter().all(|v| *v >= DEFAULT_FLOOR - 1e-12));
        let back = to_log(&raw, DEFAULT_FLOOR).unwrap();
        prop_assert!(max_abs_diff(back.values(), &x) < 1e-12);
    }

    #[test]
    fn returns_telescope_back_to_levels(t in 2usize..40, n in 1usize..4, seed in any::<u64>()) {
        let x = random_matrix(t, n, seed);
        let lp = LogPanel::from_rows_indexed(labels(n), x.clone(), 1e-300).unwrap();
        let r = log_returns(&lp).unwrap();
        let mut acc = x.row(0).to_vec();
        for i in 0..t - 1 {
            for j in 0..n {
                acc[j] += r.get(i, j);
                prop_assert!((acc[j] - x.get(i + 1, j)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn windows_partition_admissible_times(t in 3usize..120, lags in 0usize..4, seed in any::<u64>()) {
        prop_assume!(t >= lags + 2);
        let lp = LogPanel::from_rows_indexed(labels(2), random_matrix(t, 2, seed), 1e-300).unwrap();
        let w = make_windows(&lp, lags, seed).unwrap();
        prop_assert_eq!(w.len(), t - lags - 1);
        let train = w.train_indices();
        let val = w.validation_indices();
        prop_assert_eq!(train.len() + val.len(), w.len());
        prop_assert!(train.iter().all(|i| !val.contains(i)));
        let expected = 0.85 * w.len() as f64;
        prop_assert!((train.len() as f64 - expected).abs() <= 1.0);
        for i in 0..w.len() {
            let s = w.state(i);
            let end = w.end_of(i);
            for k in 0..=lags {
                prop_assert_eq!(&s[k * 2..(k + 1) * 2], lp.values().row(end - k));
            }
            prop_assert_eq!(w.target(i), lp.values().row(end + 1));
        }
        let again = make_windows(&lp, lags, seed).unwrap();
        prop_assert_eq!(again.train_indices(), train);
    }

    #[test]
    fn pca_invariants(t in 20usize..80, n in 2usize..7, k_frac in 0.0f64..1.0, seed in any::<u64>()) {
        let x = random_matrix(t, n, seed);
        let k = 1 + ((n - 1) as f64 * k_frac) as usize;
        let cm = fit_pca(&x, k).unwrap();
        let wwt = gram(&cm);
        prop_assert!(max_abs_diff(&wwt, &Tensor::eye(k)) < 1e-10);
        prop_assert!(max_abs_diff(&cm.reconstruction_matrix(), &cm.projection_matrix().transpose().unwrap()) < 1e-12);
        let ratios = &cm.explained_variance_ratio;
        prop_assert!((ratios.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        prop_assert!(ratios.windows(2).all(|w| w[0] >= w[1] - 1e-15));

        // Mean squared reconstruction error is the discarded variance.
        let rec = cm.decompress(&cm.compress(&x).unwrap()).unwrap();
        let err: f64 = x.data().iter().zip(rec.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / t as f64;
        let total: f64 = (0..n).map(|j| {
            let c = x.column(j);
            let m = c.iter().sum::<f64>() / t as f64;
            c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / t as f64
        }).sum();
        let discarded = (1.0 - cm.cumulative_ratio()[k - 1]) * total;
        prop_assert!((err - discarded).abs() <= 1e-8 * total);

        // Idempotent projection and exact coordinate round trip.
        let twice = cm.decompress(&cm.compress(&rec).unwrap()).unwrap();
        prop_assert!(max_abs_diff(&rec, &twice) < 1e-10);
        let p = random_matrix(5, k, seed ^ 1);
        let p2 = cm.compress(&cm.decompress(&p).unwrap()).unwrap();
        prop_assert!(max_abs_diff(&p, &p2) < 1e-10);
    }
}

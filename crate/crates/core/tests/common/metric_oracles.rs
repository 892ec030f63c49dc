//! Independent oracles for the scoring functions, shared by the metric
//! tests and the acceptance suite. Each check panics on failure.

use dlvsim::fixtures::{ar1_panel, VarSvFixture};
use dlvsim::metrics::*;
use dlvsim::models::var_fit;
use dlvsim::numerics::Tensor;
use dlvsim::rng::{normal_vec, seeded};
use dlvsim::sampling::{sample_paths, SamplingConfig};
use rand::Rng as _;
use rand_distr::{Distribution, Exp};

pub fn column(values: Vec<f64>) -> Tensor {
    Tensor::matrix(values.len(), 1, values).unwrap()
}

pub fn ar1_series(phi: f64, t: usize, seed: u64) -> Vec<f64> {
    ar1_panel(phi, 0.0, 1.0, t, seed).values().column(0)
}

pub const ALL: &[(&str, fn())] = &[
    ("disjoint_uniform_epdf_puts_all_mass_in_the_last_bin", disjoint_uniform_epdf_puts_all_mass_in_the_last_bin),
    ("exponential_skewness_against_normal", exponential_skewness_against_normal),
    ("normal_excess_kurtosis_is_near_zero", normal_excess_kurtosis_is_near_zero),
    ("white_noise_acf_stays_in_band", white_noise_acf_stays_in_band),
    ("ar1_acf_decays_geometrically", ar1_acf_decays_geometrically),
    ("persistent_history_against_white_noise_paths", persistent_history_against_white_noise_paths),
    ("independent_columns_are_uncorrelated", independent_columns_are_uncorrelated),
    ("one_correlated_pair_gives_known_frobenius_distance", one_correlated_pair_gives_known_frobenius_distance),
    ("fitted_var_beats_white_noise_on_dependence_scores", fitted_var_beats_white_noise_on_dependence_scores),
];

pub fn disjoint_uniform_epdf_puts_all_mass_in_the_last_bin() {
    let mut rng = seeded(1);
    let t = 2000;
    let hist = column((0..t).map(|_| rng.random::<f64>()).collect());
    let gen = column((0..t).map(|_| 2.0 + rng.random::<f64>()).collect());
    let k = Binning::fit(&hist, 20).n_bins(0);
    assert_eq!(k, 100);
    let d = epdf_distance(&hist, &[gen], 20).unwrap();
    assert!((d - 2.0 * (1.0 - 1.0 / k as f64)).abs() < 1e-12);
}

pub fn exponential_skewness_against_normal() {
    let n = 100_000;
    let mut rng = seeded(2);
    let hist = column(normal_vec(&mut rng, n));
    let exp = Exp::new(1.0).unwrap();
    let gen = column((0..n).map(|_| exp.sample(&mut rng) - 1.0).collect());
    let s = moment_score(&hist, &[gen], Moment::Skew, MomentEstimator::Plain, true).unwrap();
    assert!((s - 2.0).abs() < 0.15, "skew score {s}");
}

pub fn normal_excess_kurtosis_is_near_zero() {
    let x = normal_vec(&mut seeded(3), 100_000);
    for est in [MomentEstimator::Plain, MomentEstimator::Adjusted] {
        let k = sample_moment(&x, Moment::Kurtosis, est).unwrap();
        assert!(k.abs() < 0.1, "{est:?}: {k}");
    }
}

pub fn white_noise_acf_stays_in_band() {
    let (t, lags, trials) = (1000, 10, 200);
    let band = 3.0 / (t as f64).sqrt();
    let mut inside = 0;
    for s in 0..trials {
        let r = acf(&normal_vec(&mut seeded(100 + s), t), lags).unwrap();
        inside += r.iter().filter(|v| v.abs() < band).count();
    }
    assert!(inside as f64 >= 0.99 * (trials as usize * lags) as f64);
}

pub fn ar1_acf_decays_geometrically() {
    let r = acf(&ar1_series(0.8, 100_000, 4), 10).unwrap();
    for (k, v) in r.iter().enumerate() {
        assert!((v - 0.8f64.powi(k as i32 + 1)).abs() < 0.02, "lag {}: {v}", k + 1);
    }
}

pub fn persistent_history_against_white_noise_paths() {
    let hist = column(ar1_series(0.9, 100_000, 5));
    let gen: Vec<Tensor> = (0..10).map(|s| column(normal_vec(&mut seeded(50 + s), 10_000))).collect();
    let s = acf_score(&hist, &gen, Target::Levels, 1, true).unwrap();
    assert!((s - 0.9).abs() < 0.02, "{s}");
}

pub fn independent_columns_are_uncorrelated() {
    let mut rng = seeded(6);
    let t = 100_000;
    let rows: Vec<f64> = normal_vec(&mut rng, 3 * t);
    let c = cross_corr(&Tensor::matrix(t, 3, rows).unwrap()).unwrap();
    for a in 0..3 {
        assert_eq!(c.get(a, a), 1.0);
        for b in 0..3 {
            assert_eq!(c.get(a, b), c.get(b, a));
            if a != b {
                assert!(c.get(a, b).abs() < 0.02);
            }
        }
    }
}

pub fn one_correlated_pair_gives_known_frobenius_distance() {
    // Mutually orthogonal zero-mean columns of equal norm.
    let a = [1.0, 1.0, -1.0, -1.0];
    let b = [1.0, -1.0, 1.0, -1.0];
    let c = [1.0, -1.0, -1.0, 1.0];
    let hist = Tensor::from_rows(&(0..4).map(|i| vec![a[i], b[i], c[i]]).collect::<Vec<_>>()).unwrap();
    let w = 0.75f64.sqrt();
    let gen = Tensor::from_rows(&(0..4).map(|i| vec![a[i], 0.5 * a[i] + w * b[i], c[i]]).collect::<Vec<_>>()).unwrap();
    let s = cross_corr_score(&hist, &[gen.clone()], Target::Levels).unwrap();
    assert!((s - 0.5f64.sqrt()).abs() < 1e-12, "{s}");
    let back = cross_corr_score(&gen, &[hist], Target::Levels).unwrap();
    assert!((s - back).abs() < 1e-15);
}

pub fn fitted_var_beats_white_noise_on_dependence_scores() {
    let hist = VarSvFixture::default().generate(8);
    let var = var_fit(hist.values(), 2).unwrap();
    let cfg = SamplingConfig { paths: 20, seed: 3, floor: None, ..Default::default() };
    let set = sample_paths(&var, None, &hist, &cfg).unwrap();
    let (t, n) = hist.values().dims2();
    let means: Vec<f64> = (0..n).map(|j| hist.values().column(j).iter().sum::<f64>() / t as f64).collect();
    let sds: Vec<f64> = (0..n)
        .map(|j| (hist.values().column(j).iter().map(|v| (v - means[j]).powi(2)).sum::<f64>() / t as f64).sqrt())
        .collect();
    let noise: Vec<Tensor> = (0..20)
        .map(|s| {
            let z = normal_vec(&mut seeded(900 + s), t * n);
            Tensor::matrix(t, n, z.iter().enumerate().map(|(k, v)| means[k % n] + sds[k % n] * v).collect()).unwrap()
        })
        .collect();
    let cfg = MetricsConfig::default();
    let a = full_report(hist.values(), &set.paths, &cfg).unwrap();
    let b = full_report(hist.values(), &noise, &cfg).unwrap();
    assert!(a.acf_x_score < b.acf_x_score);
    assert!(a.cc_x_score < b.cc_x_score);
    assert!(a.cc_r_score < b.cc_r_score);
}

use dlvsim::fixtures::simulate_var;
use dlvsim::models::*;
use dlvsim::numerics::Tensor;
use dlvsim::panel::{reference_grid, LogPanel};
use dlvsim::rng::{normal_tensor, normal_vec, seeded};
use dlvsim::sampling::{sample_paths, sample_tcn_paths, SamplingConfig};
use nalgebra::{DMatrix, DVector};

fn mat(rows: &[&[f64]]) -> Tensor {
    Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
}

/// `vec(Γ) = (I - A⊗A)⁻¹ vec(Σ)` for a VAR(1).
fn stationary_cov(a: &Tensor, sigma: &Tensor) -> DMatrix<f64> {
    let n = a.rows();
    let am = DMatrix::from_row_slice(n, n, a.data());
    let k = am.kronecker(&am);
    let lhs = DMatrix::<f64>::identity(n * n, n * n) - k;
    let s = DMatrix::from_row_slice(n, n, sigma.data());
    let v = DVector::from_iterator(n * n, s.iter().copied());
    let sol = lhs.lu().solve(&v).unwrap();
    DMatrix::from_column_slice(n, n, sol.as_slice())
}

fn covariance(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows[0].len();
    let t = rows.len() as f64;
    let mean: Vec<f64> = (0..n).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / t).collect();
    DMatrix::from_fn(n, n, |a, b| rows.iter().map(|r| (r[a] - mean[a]) * (r[b] - mean[b])).sum::<f64>() / t)
}

fn hist_panel(values: Tensor) -> LogPanel {
    let n = values.cols();
    LogPanel::from_rows_indexed(reference_grid()[..n].to_vec(), values, 1e-300).unwrap()
}

#[test]
fn var1_coefficients_are_recovered() {
    let truth = VarModel::from_parts(&[mat(&[&[0.5, 0.0], &[0.0, 0.5]])], &[0.0, 0.0], &mat(&[&[0.01, 0.0], &[0.0, 0.01]])).unwrap();
    let data = simulate_var(&truth, &Tensor::zeros(&[1, 2]), 5000, 1);
    let fit = var_fit(&data, 1).unwrap();
    let a = fit.coefficient(1);
    for i in 0..2 {
        for j in 0..2 {
            let want = if i == j { 0.5 } else { 0.0 };
            assert!((a.get(i, j) - want).abs() < 0.05, "A[{i}][{j}] = {}", a.get(i, j));
        }
    }
}

#[test]
fn var_residuals_are_orthogonal_to_regressors() {
    let truth = VarModel::from_parts(
        &[mat(&[&[0.6, 0.1], &[-0.2, 0.4]]), mat(&[&[0.1, 0.0], &[0.05, -0.1]])],
        &[0.2, -0.1],
        &mat(&[&[0.02, 0.005], &[0.005, 0.01]]),
    )
    .unwrap();
    let data = simulate_var(&truth, &Tensor::zeros(&[2, 2]), 800, 2);
    let fit = var_fit(&data, 2).unwrap();
    let t = data.rows();
    let mut dots = vec![0.0; 2 * 5];
    for r in 2..t {
        let pred = fit.var_step(&[data.row(r - 1), data.row(r - 2)], &[0.0, 0.0]).unwrap();
        let regressors = [data.get(r - 1, 0), data.get(r - 1, 1), data.get(r - 2, 0), data.get(r - 2, 1), 1.0];
        for i in 0..2 {
            let e = data.get(r, i) - pred[i];
            for (k, x) in regressors.iter().enumerate() {
                dots[i * 5 + k] += e * x;
            }
        }
    }
    for d in dots {
        assert!(d.abs() < 1e-8 * t as f64, "{d}");
    }
    let sigma = fit.sigma();
    let chol = fit.chol();
    let back = chol.matmul(&chol.transpose().unwrap()).unwrap();
    for (a, b) in sigma.data().iter().zip(back.data()) {
        assert!((a - b).abs() < 1e-8);
    }
}

#[test]
fn var_step_noise_has_the_fitted_covariance() {
    let sigma = mat(&[&[0.04, 0.01], &[0.01, 0.02]]);
    let m = VarModel::from_parts(&[mat(&[&[0.3, 0.1], &[0.0, 0.7]])], &[0.5, -0.5], &sigma).unwrap();
    let mut rng = seeded(3);
    let history = [0.2, -0.1];
    let draws: Vec<Vec<f64>> = (0..100_000).map(|_| m.var_step(&[&history], &normal_vec(&mut rng, 2)).unwrap()).collect();
    let c = covariance(&draws);
    for i in 0..2 {
        for j in 0..2 {
            let want = sigma.get(i, j);
            assert!((c[(i, j)] - want).abs() < 0.05 * want.abs(), "cov[{i}][{j}] = {}", c[(i, j)]);
        }
    }
}

#[test]
fn long_var_path_mean_converges() {
    let m = VarModel::from_parts(&[mat(&[&[0.5, 0.2], &[0.1, 0.3]])], &[0.3, -0.6], &mat(&[&[0.01, 0.0], &[0.0, 0.01]])).unwrap();
    let path = simulate_var(&m, &Tensor::zeros(&[1, 2]), 100_000, 4);
    let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.2, 0.1, 0.3]);
    let mean = (DMatrix::<f64>::identity(2, 2) - a).lu().solve(&DVector::from_vec(vec![0.3, -0.6])).unwrap();
    let analytic = m.stationary_mean().unwrap();
    for j in 0..2 {
        let emp = path.column(j).iter().sum::<f64>() / path.rows() as f64;
        assert!((emp - mean[j]).abs() < 0.05 * mean[j].abs(), "{emp} vs {}", mean[j]);
        assert!((analytic[j] - mean[j]).abs() < 1e-12);
    }
}

#[test]
fn sampled_var_paths_reach_the_stationary_covariance() {
    let a = mat(&[&[0.6, 0.2], &[-0.1, 0.5]]);
    let sigma = mat(&[&[0.02, 0.006], &[0.006, 0.01]]);
    let m = VarModel::from_parts(&[a.clone()], &[0.1, -0.1], &sigma).unwrap();
    let hist = hist_panel(simulate_var(&m, &Tensor::zeros(&[1, 2]), 500, 5));
    let cfg = SamplingConfig { paths: 5, length: Some(20_000), seed: 6, floor: None };
    let set = sample_paths(&m, None, &hist, &cfg).unwrap();
    let rows: Vec<Vec<f64>> = set.paths.iter().flat_map(|p| (0..p.rows()).map(|i| p.row(i).to_vec()).collect::<Vec<_>>()).collect();
    let c = covariance(&rows);
    let want = stationary_cov(&a, &sigma);
    for i in 0..2 {
        assert!((c[(i, i)] - want[(i, i)]).abs() < 0.05 * want[(i, i)], "var[{i}] {} vs {}", c[(i, i)], want[(i, i)]);
    }
}

#[test]
fn path_streams_are_independent_of_path_count() {
    let m = VarModel::from_parts(&[mat(&[&[0.9]])], &[0.0], &mat(&[&[0.01]])).unwrap();
    let hist = hist_panel(simulate_var(&m, &Tensor::zeros(&[1, 1]), 300, 7));
    let few = sample_paths(&m, None, &hist, &SamplingConfig { paths: 3, length: Some(50), seed: 8, floor: Some(0.01) }).unwrap();
    let many = sample_paths(&m, None, &hist, &SamplingConfig { paths: 7, length: Some(50), seed: 8, floor: Some(0.01) }).unwrap();
    for i in 0..3 {
        assert_eq!(few.paths[i], many.paths[i]);
        assert_eq!(few.info[i], many.info[i]);
    }
    let again = sample_paths(&m, None, &hist, &SamplingConfig { paths: 3, length: Some(50), seed: 8, floor: Some(0.01) }).unwrap();
    assert_eq!(few.paths, again.paths);
    for p in &many.paths {
        assert!(p.data().iter().all(|v| v.exp() >= 0.01 - 1e-12));
    }
}

#[test]
fn tcn_outputs_decorrelate_beyond_the_receptive_field() {
    let spec = TcnSpec { channels: vec![8; 4], dilations: vec![1, 2, 4, 8], activation: Activation::Tanh, ..TcnSpec::standard(1, 1, 8) };
    let model = TcnModel::new(spec, &mut seeded(9)).unwrap();
    let rf = model.receptive_field();
    assert_eq!(rf, 16);
    let set = sample_tcn_paths(&model, &reference_grid()[..1], &SamplingConfig { paths: 1, seed: 10, ..Default::default() }, 100_000).unwrap();
    let x = set.paths[0].column(0);
    let r = dlvsim::metrics::acf(&x, rf + 4).unwrap();
    for lag in rf..rf + 4 {
        assert!(r[lag].abs() < 0.02, "lag {} acf {}", lag + 1, r[lag]);
    }
    assert!(r[0].abs() > 0.05);
}

#[test]
fn power_iteration_finds_the_top_singular_value() {
    let spec = MlpSpec { input_dim: 2, output_dim: 1, hidden_widths: vec![2], activation: Activation::Softplus, spectral_norm: true };
    let mut mlp = Mlp::new(spec, &mut seeded(11)).unwrap();
    // Rotation · diag(3, 1) · rotation.
    let (c1, s1, c2, s2) = (0.6f64, 0.8f64, 0.28f64, 0.96f64);
    let w = DMatrix::from_row_slice(2, 2, &[c1, -s1, s1, c1]) * DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0])) * DMatrix::from_row_slice(2, 2, &[c2, -s2, s2, c2]);
    let w = Tensor::matrix(2, 2, w.transpose().iter().copied().collect()).unwrap();
    mlp.set_weight(0, &w).unwrap();
    mlp.power_iteration(20);
    assert!((mlp.sigma_estimate(0) - 3.0).abs() < 0.03);
    let eff = mlp.effective_weight(0);
    let top = DMatrix::from_row_slice(2, 2, eff.data()).singular_values().max();
    assert!((0.95..=1.05).contains(&top), "{top}");
}

#[test]
fn discriminator_is_finite_on_large_inputs() {
    let net = NetConfig { activation: Activation::Softplus, spectral_norm: true, ..NetConfig::default() };
    let d = Discriminator::new(&net, plain_normalizer(2, 1), &mut seeded(12)).unwrap();
    let s = vec![1e3, -1e3, 1e3, 1e3];
    assert!(d.discriminator_forward(&s, &[-1e3, 1e3]).unwrap().is_finite());
    assert!(d.discriminator_forward(&s, &[0.0]).is_err());
}

#[test]
fn generator_is_deterministic_and_checks_dimensions() {
    let g = Generator::new(&NetConfig::default(), plain_normalizer(3, 1), None, &mut seeded(13)).unwrap();
    let z = normal_vec(&mut seeded(14), 3);
    let s = normal_vec(&mut seeded(15), 6);
    assert_eq!(g.generator_forward(&z, &s).unwrap(), g.generator_forward(&z, &s).unwrap());
    assert!(g.generator_forward(&z, &s[..5]).is_err());
    let q = QmleHead::new(&NetConfig::default(), plain_normalizer(3, 1), &mut seeded(16)).unwrap();
    let (_, var) = q.qmle_forward(&s).unwrap();
    assert!(var.iter().all(|v| *v > 0.0));
    let batch = normal_tensor(&mut seeded(17), &[4, 6]);
    assert_eq!(q.forward(&batch).unwrap().0.dims2(), (4, 3));
}

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};

use sgdphaselab::spectrum::{
    build_power_law, build_torus_problem, eigendecompose, fit_power_law, gamma_for_batch, load_spectrum_csv,
    save_spectrum_csv, C0Mode,
};
use sgdphaselab::{DatasetSize, Error, FeatureProblem, PowerLawSpec, Spectrum};

#[test]
fn power_law_examples() {
    let s = build_power_law(&PowerLawSpec::new(1.0, 1.5, 1.0, 3.0, 4)).unwrap();
    assert!((s.lambdas()[3] - 0.125).abs() < 1e-15);
    assert!((s.c0()[0] - 0.875).abs() < 1e-15);
}

#[test]
fn differenced_partial_sums_follow_the_law() {
    for (nu, kappa, k_scale) in [(1.5, 3.0, 1.0), (1.2, 0.4, 2.5), (2.0, 1.0, 0.3)] {
        let spec = PowerLawSpec::new(1.0, nu, k_scale, kappa, 500);
        let s = build_power_law(&spec).unwrap();
        let total: f64 = s.lambda_c().iter().sum();
        assert!((total - k_scale).abs() <= 1e-12 * k_scale);
        let sums = s.partial_sums();
        for k in 1..=500usize {
            let law = k_scale * (k as f64).powf(-kappa);
            assert!((sums[k - 1] - law).abs() <= 1e-12 * k_scale, "k={k}: {} vs {law}", sums[k - 1]);
        }
    }
}

#[test]
fn gamma_monotone_in_batch() {
    let n = 100;
    assert_eq!(gamma_for_batch(DatasetSize::Finite(n), n).unwrap(), 0.0);
    assert_eq!(gamma_for_batch(DatasetSize::Finite(n), 1).unwrap(), 1.0);
    assert!((gamma_for_batch(DatasetSize::Finite(n), 10).unwrap() - 90.0 / 990.0).abs() < 1e-15);
    let gs: Vec<f64> = (1..=n).map(|b| gamma_for_batch(DatasetSize::Finite(n), b).unwrap()).collect();
    assert!(gs.windows(2).all(|w| w[1] < w[0]));
    assert_eq!(gamma_for_batch(DatasetSize::Infinite, 1).unwrap(), 1.0);
    assert!(matches!(gamma_for_batch(DatasetSize::Finite(5), 6), Err(Error::InvalidBatch { .. })));
}

#[test]
fn eigendecomposition_reassembles_hessian() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let psi = DMatrix::from_fn(8, 8, |_, _| rng.random_range(-1.0..1.0));
    let w_star = DVector::from_fn(8, |_, _| rng.random_range(-1.0..1.0));
    let problem = FeatureProblem::new(psi, w_star, DVector::zeros(8)).unwrap();
    let eig = eigendecompose(&problem).unwrap();
    let h = problem.hessian();
    let mut rebuilt = DMatrix::zeros(8, 8);
    for (k, l) in eig.spectrum.lambdas().iter().enumerate() {
        let u = eig.basis.column(k);
        rebuilt += u * u.transpose() * *l;
    }
    assert!((&h - rebuilt).norm() / h.norm() <= 1e-10);
    assert!((h.trace() - eig.spectrum.trace()).abs() <= 1e-10 * h.trace());
    // initial moments are the squared projections of the deviation
    let delta = problem.delta();
    let total: f64 = eig.spectrum.c0().iter().sum();
    assert!((total - delta.norm_squared()).abs() <= 1e-10 * delta.norm_squared());
}

#[test]
fn identity_features_and_zero_deviation() {
    let n = 5;
    let psi = DMatrix::identity(n, n) * (n as f64).sqrt();
    let w = DVector::from_element(n, 0.3);
    let problem = FeatureProblem::new(psi, w.clone(), w).unwrap();
    let eig = eigendecompose(&problem).unwrap();
    assert!(eig.spectrum.lambdas().iter().all(|l| (l - 1.0).abs() < 1e-12));
    assert!(eig.spectrum.c0().iter().all(|c| *c == 0.0));
    assert_eq!(eig.spectrum.dataset_size(), DatasetSize::Finite(n));
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

fn smooth_kernel(grid: &[usize]) -> Vec<f64> {
    // product of 1-D kernels with positive Fourier coefficients
    let one_d = |n: usize, i: usize| -> f64 {
        (0..n)
            .map(|k| {
                let w = (1.0 + k.min(n - k) as f64).powf(-1.7);
                w * (2.0 * std::f64::consts::PI * ((i * k) % n) as f64 / n as f64).cos()
            })
            .sum::<f64>()
            / n as f64
    };
    let total: usize = grid.iter().product();
    (0..total)
        .map(|flat| {
            let mut rest = flat;
            let mut val = 1.0;
            for &n in grid.iter().rev() {
                val *= one_d(n, rest % n);
                rest /= n;
            }
            val
        })
        .collect()
}

#[test]
fn torus_eigenvalues_match_dense_solver() {
    for grid in [vec![12], vec![4, 6], vec![3, 2, 4]] {
        let t = build_torus_problem(&grid, &smooth_kernel(&grid)).unwrap();
        let dense = SymmetricEigen::new(t.kernel_matrix()).eigenvalues;
        let a = sorted(t.eigenvalues().to_vec());
        let b = sorted(dense.iter().cloned().collect());
        let scale = a[0];
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-10 * scale, "{grid:?}: {x} vs {y}");
        }
        let trace: f64 = t.eigenvalues().iter().sum();
        assert!((trace - t.kernel_matrix().trace()).abs() <= 1e-10 * trace);
        // the synthesized features reproduce the circulant Hessian
        let p = t.problem(DVector::zeros(t.n()), DVector::zeros(t.n())).unwrap();
        assert!((p.hessian() - t.kernel_matrix()).norm() <= 1e-10 * t.kernel_matrix().norm());
    }
}

#[test]
fn torus_single_point() {
    let t = build_torus_problem(&[1], &[2.5]).unwrap();
    assert_eq!(t.eigenvalues(), &[2.5]);
}

#[test]
fn fit_exact_on_generated_data() {
    let s = build_power_law(&PowerLawSpec::new(1.0, 1.5, 1.0, 3.0, 200)).unwrap();
    let fit = fit_power_law(&s, 1).unwrap();
    assert!((fit.nu - 1.5).abs() < 1e-9);
    assert!((fit.kappa - 3.0).abs() < 1e-9);
    assert!(fit.residual <= 1e-18);

    let pw = build_power_law(&PowerLawSpec::new(2.0, 1.3, 1.0, 0.8, 300).with_mode(C0Mode::Pointwise)).unwrap();
    let fit = fit_power_law(&pw, 1).unwrap();
    assert!(fit.residual <= 1e-18, "residual {}", fit.residual);
    assert!((fit.lambda_scale - 2.0).abs() < 1e-9);
}

#[test]
fn fit_tolerates_jitter() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let jitter = LogNormal::new(0.0, 0.05).unwrap();
    let lambdas: Vec<f64> = (1..=1000).map(|k| (k as f64).powf(-1.5) * jitter.sample(&mut rng)).collect();
    let c0 = vec![1.0; 1000];
    let s = Spectrum::from_c0(lambdas, c0, DatasetSize::Infinite).unwrap();
    let fit = fit_power_law(&s, 1).unwrap();
    assert!((fit.nu - 1.5).abs() <= 0.05, "nu = {}", fit.nu);
}

#[test]
fn fit_rejects_short_tail() {
    let s = Spectrum::from_c0(vec![1.0, 0.5, 0.3, 0.2], vec![1.0; 4], DatasetSize::Infinite).unwrap();
    assert!(matches!(fit_power_law(&s, 1), Err(Error::NonLoggable(_))));
}

#[test]
fn csv_three_rows_and_bad_row() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.csv");
    std::fs::write(&good, "# test spectrum\nk,lambda,lambda_c\n1,1.0,0.5\n2,0.5,0.25\n3,0.25,0.1\n").unwrap();
    let s = load_spectrum_csv(&good).unwrap();
    assert_eq!(s.len(), 3);

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "1,1.0,0.5\n2,-0.5,0.25\n3,0.25,0.1\n").unwrap();
    match load_spectrum_csv(&bad) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn csv_round_trip_is_bitwise() {
    let s = build_power_law(&PowerLawSpec::new(0.7, 1.37, 1.3, 0.91, 64)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.csv");
    save_spectrum_csv(&s, &path).unwrap();
    let back = load_spectrum_csv(&path).unwrap();
    assert_eq!(back.lambdas(), s.lambdas());
    assert_eq!(back.lambda_c(), s.lambda_c());
}

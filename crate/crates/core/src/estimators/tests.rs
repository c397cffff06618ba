use super::*;
use crate::channel::{AngularPrior, ClusterParams};
use crate::rng::{complex_standard_normal, stream_rng};
use crate::scenario::{gen_pilots, synthesize_dataset, synthesize_record, SnrMode, SystemConfig};
use crate::vae::{ModelConfig, VaeModel};
use rand::Rng;

fn test_system(m: usize) -> SystemConfig {
    SystemConfig {
        antennas: m,
        cells: 2,
        users: 2,
        pilot_len: 4,
        snr_range_db: [-16.0, 36.0],
        train_count: 8,
        val_count: 2,
        test_count: 2,
        priors: vec![
            AngularPrior::Gaussian {
                center_deg: 45.0,
                std_deg: 30.0,
            },
            AngularPrior::Gaussian {
                center_deg: -45.0,
                std_deg: 30.0,
            },
        ],
        clusters: ClusterParams::default(),
    }
}

fn random_vec(rng: &mut impl Rng, n: usize) -> Vec<Complex64> {
    (0..n).map(|_| complex_standard_normal(rng)).collect()
}

fn zeros(n: usize) -> Vec<Complex64> {
    vec![Complex64::new(0.0, 0.0); n]
}

#[test]
fn lmmse_scalar_shrinkage() {
    // C_int = 0, C1 = I, zero means: h1_hat = y / (1 + sigma^2)
    let m = 6;
    let mut rng = stream_rng(100, 0);
    let y = random_vec(&mut rng, m);
    let c1 = CirculantSpectrum::constant(1.0, m).unwrap();
    let c0 = CirculantSpectrum::constant(0.0, m).unwrap();
    let sigma_sq = 0.25;
    let est = lmmse_core(
        &zeros(m),
        CovOperand::Circulant(&c1),
        &zeros(m),
        CovOperand::Circulant(&c0),
        sigma_sq,
        &y,
    )
    .unwrap();
    for (e, yv) in est.iter().zip(&y) {
        assert!((e - yv / (1.0 + sigma_sq)).norm() < 1e-12);
    }
}

#[test]
fn lmmse_collapses_to_prior_mean_at_huge_noise() {
    let m = 4;
    let mut rng = stream_rng(101, 0);
    let y = random_vec(&mut rng, m);
    let mu1 = random_vec(&mut rng, m);
    let c1 = CirculantSpectrum::new(vec![1.0, 0.5, 2.0, 0.2]).unwrap();
    let c2 = CirculantSpectrum::new(vec![0.3, 0.9, 0.1, 1.5]).unwrap();
    let est = lmmse_core(
        &mu1,
        CovOperand::Circulant(&c1),
        &zeros(m),
        CovOperand::Circulant(&c2),
        1e12,
        &y,
    )
    .unwrap();
    let ynorm = y.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let dev: f64 = est
        .iter()
        .zip(&mu1)
        .map(|(e, mu)| (e - mu).norm_sqr())
        .sum::<f64>()
        .sqrt();
    assert!(dev <= 1e-6 * ynorm, "deviation {dev}");
}

#[test]
fn lmmse_fast_path_matches_dense_path() {
    let mut rng = stream_rng(102, 0);
    for &m in &[4usize, 8, 16] {
        for _ in 0..8 {
            let y = random_vec(&mut rng, m);
            let mu1 = random_vec(&mut rng, m);
            let mu2 = random_vec(&mut rng, m);
            let s1: Vec<f64> = (0..m).map(|_| rng.random::<f64>() + 0.05).collect();
            let s2: Vec<f64> = (0..m).map(|_| rng.random::<f64>() + 0.05).collect();
            let c1 = CirculantSpectrum::new(s1).unwrap();
            let c2 = CirculantSpectrum::new(s2).unwrap();
            let sigma_sq = 0.3;
            let fast = lmmse_core(
                &mu1,
                CovOperand::Circulant(&c1),
                &mu2,
                CovOperand::Circulant(&c2),
                sigma_sq,
                &y,
            )
            .unwrap();
            let c1d = c1.to_dense();
            let c2d = c2.to_dense();
            let dense = lmmse_core(
                &mu1,
                CovOperand::Dense(&c1d),
                &mu2,
                CovOperand::Dense(&c2d),
                sigma_sq,
                &y,
            )
            .unwrap();
            for (a, b) in fast.iter().zip(&dense) {
                assert!((a - b).norm() < 1e-10, "m = {m}");
            }
        }
    }
}

#[test]
fn lmmse_mixed_operands_take_dense_path() {
    let m = 4;
    let mut rng = stream_rng(103, 0);
    let y = random_vec(&mut rng, m);
    let c1 = CirculantSpectrum::new(vec![1.0, 0.4, 0.8, 0.2]).unwrap();
    let dense_int = {
        let b = nalgebra::DMatrix::from_fn(m, m, |_, _| complex_standard_normal(&mut rng));
        let a = &b * b.adjoint();
        let at = a.adjoint();
        (a + at) * Complex64::new(0.5, 0.0)
    };
    let mixed = lmmse_core(
        &zeros(m),
        CovOperand::Circulant(&c1),
        &zeros(m),
        CovOperand::Dense(&dense_int),
        0.1,
        &y,
    )
    .unwrap();
    let c1d = c1.to_dense();
    let both_dense = lmmse_core(
        &zeros(m),
        CovOperand::Dense(&c1d),
        &zeros(m),
        CovOperand::Dense(&dense_int),
        0.1,
        &y,
    )
    .unwrap();
    for (a, b) in mixed.iter().zip(&both_dense) {
        assert!((a - b).norm() < 1e-10);
    }
}

#[test]
fn eq3_equals_eq2_under_uncorrelated_cells() {
    // with y = h1 + h_int + n and independent zero-mean parts, the
    // cross-covariance C_{1,y} equals C1, so the general estimator
    // mu1 + C_{1,y} C_y^{-1} (y - mu_y) coincides with the lmmse core
    let m = 4;
    let mut rng = stream_rng(104, 0);
    let mk_psd = |rng: &mut rand_chacha::ChaCha8Rng| {
        let b = nalgebra::DMatrix::from_fn(m, m, |_, _| complex_standard_normal(rng));
        let a = &b * b.adjoint();
        let at = a.adjoint();
        (a + at) * Complex64::new(0.5, 0.0)
    };
    let c1 = mk_psd(&mut rng);
    let c2 = mk_psd(&mut rng);
    let y = random_vec(&mut rng, m);
    let sigma_sq = 0.2;

    let est = lmmse_core(
        &zeros(m),
        CovOperand::Dense(&c1),
        &zeros(m),
        CovOperand::Dense(&c2),
        sigma_sq,
        &y,
    )
    .unwrap();

    // independent dense construction of Eq. 2 with C_{1,y} = C1
    let mut cy = &c1 + &c2;
    for i in 0..m {
        cy[(i, i)] += Complex64::new(sigma_sq, 0.0);
    }
    let yv = nalgebra::DVector::from_column_slice(&y);
    let sol = cy.clone().lu().solve(&yv).unwrap();
    let eq2 = &c1 * sol;
    for (a, b) in est.iter().zip(eq2.iter()) {
        assert!((a - b).norm() < 1e-8);
    }
}

#[test]
fn ls_is_identity_on_observations() {
    let mut rng = stream_rng(105, 0);
    let y = random_vec(&mut rng, 8);
    assert_eq!(ls_estimate(&y), y);
}

#[test]
fn ls_nmse_matches_analytic_value() {
    // unit-power channels and interference, 10 dB: NMSE = 1 + 0.1
    let m = 8;
    let mut rng = stream_rng(106, 0);
    let sigma_sq: f64 = 0.1;
    let n = 10_000;
    let mut acc = 0.0;
    for _ in 0..n {
        let h1 = random_vec(&mut rng, m);
        let h2 = random_vec(&mut rng, m);
        let noise: Vec<Complex64> = (0..m)
            .map(|_| complex_standard_normal(&mut rng) * sigma_sq.sqrt())
            .collect();
        let y: Vec<Complex64> = (0..m).map(|i| h1[i] + h2[i] + noise[i]).collect();
        let est = ls_estimate(&y);
        acc += est
            .iter()
            .zip(&h1)
            .map(|(e, h)| (e - h).norm_sqr())
            .sum::<f64>();
    }
    let nmse = acc / (m * n) as f64;
    let want = 1.0 + sigma_sq;
    assert!(
        (nmse - want).abs() <= 0.02 * want,
        "LS NMSE {nmse} vs analytic {want}"
    );
}

#[test]
fn ls_equals_pilot_despreading_composition() {
    // with orthonormal pilots, Y Psi (Psi^H Psi)^{-1} column k = Y psi_k
    let m = 4;
    let t_tr = 8;
    let k_users = 3;
    let pilots = gen_pilots(t_tr, k_users).unwrap();
    let mut rng = stream_rng(107, 0);
    let y_block = nalgebra::DMatrix::from_fn(m, t_tr, |_, _| complex_standard_normal(&mut rng));
    let psi = pilots.as_matrix();
    let gram = psi.adjoint() * &psi;
    let inv_gram = gram.clone().lu().try_inverse().unwrap();
    let composed = &y_block * &psi * inv_gram;
    for k in 0..k_users {
        let direct = crate::scenario::despread(&y_block, &pilots.columns[k]).unwrap();
        for i in 0..m {
            assert!((composed[(i, k)] - direct[i]).norm() < 1e-10);
        }
    }
}

#[test]
fn scov_single_sample_is_outer_product() {
    let mut rng = stream_rng(108, 0);
    let h = random_vec(&mut rng, 4);
    let stats = SampleStats::fit_from_channels(&[vec![h.clone()]]).unwrap();
    assert_eq!(stats.count, 1);
    for i in 0..4 {
        assert!((stats.cells[0].mu_hat[i] - h[i]).norm() < 1e-15);
        for j in 0..4 {
            let want = h[i] * h[j].conj();
            assert!((stats.cells[0].c_hat[(i, j)] - want).norm() < 1e-15);
        }
    }
}

#[test]
fn scov_converges_to_true_covariance() {
    let row = ToeplitzFirstRow::new(vec![
        Complex64::new(1.0, 0.0),
        Complex64::new(0.5, 0.2),
        Complex64::new(-0.1, 0.3),
        Complex64::new(0.05, -0.02),
    ])
    .unwrap();
    let truth = row.to_dense();
    let sampler = crate::linalg::GaussianSampler::from_toeplitz(&row).unwrap();
    let mut rng = stream_rng(109, 0);
    let n = 200_000;
    let channels: Vec<Vec<Complex64>> = (0..n).map(|_| sampler.sample(&mut rng)).collect();
    let stats = SampleStats::fit_from_channels(&[channels]).unwrap();
    let dev = (&stats.cells[0].c_hat - &truth).norm();
    assert!(dev <= 0.02 * truth.norm(), "relative deviation {dev}");
}

#[test]
fn scov_estimate_is_the_lmmse_composition() {
    let cfg = test_system(8);
    let ds = synthesize_dataset(&cfg, 64, SnrMode::FixedDb(10.0), 110).unwrap();
    let stats = SampleStats::fit(&ds.records).unwrap();
    let rec = &ds.records[0];
    let direct = scov_estimate(&stats, rec.sigma_sq, &rec.y).unwrap();
    let (mu_int, c_int) = stats.interference();
    let composed = lmmse_core(
        stats.cells[0].mu_hat.as_slice(),
        CovOperand::Dense(&stats.cells[0].c_hat),
        mu_int.as_slice(),
        CovOperand::Dense(&c_int),
        rec.sigma_sq,
        &rec.y,
    )
    .unwrap();
    assert_eq!(direct, composed);
}

#[test]
fn genie_cov_reduces_to_single_cell_without_interference() {
    let cfg = test_system(8);
    let mut rec = synthesize_record(&cfg, SnrMode::FixedDb(10.0), &mut stream_rng(111, 0)).unwrap();
    // zero out the interference covariance row
    let m = rec.antennas();
    if let Some(rows) = rec.ccm_rows.as_mut() {
        rows[1] = vec![Complex64::new(0.0, 0.0); m];
    }
    let est = genie_cov_estimate(&rec, rec.sigma_sq).unwrap();
    let c1 = ToeplitzFirstRow::new(rec.ccm_rows.as_ref().unwrap()[0].clone())
        .unwrap()
        .to_dense();
    let zero = nalgebra::DMatrix::<Complex64>::zeros(m, m);
    let single = lmmse_core(
        &zeros(m),
        CovOperand::Dense(&c1),
        &zeros(m),
        CovOperand::Dense(&zero),
        rec.sigma_sq,
        &rec.y,
    )
    .unwrap();
    for (a, b) in est.iter().zip(&single) {
        assert!((a - b).norm() < 1e-12);
    }
}

#[test]
fn genie_cov_is_homogeneous() {
    let cfg = test_system(8);
    let rec = synthesize_record(&cfg, SnrMode::FixedDb(5.0), &mut stream_rng(112, 0)).unwrap();
    let base = genie_cov_estimate(&rec, rec.sigma_sq).unwrap();
    let s = 2.5;
    let mut scaled = rec.clone();
    for row in scaled.ccm_rows.as_mut().unwrap() {
        for z in row.iter_mut() {
            *z *= s;
        }
    }
    for z in scaled.y.iter_mut() {
        *z *= s;
    }
    let est = genie_cov_estimate(&scaled, s * rec.sigma_sq).unwrap();
    for (a, b) in est.iter().zip(&base) {
        assert!((a - b * s).norm() < 1e-8 * (1.0 + b.norm() * s));
    }
}

#[test]
fn genie_cov_analytic_mse_matches_monte_carlo() {
    let cfg = test_system(8);
    let ds = synthesize_dataset(&cfg, 10_000, SnrMode::FixedDb(10.0), 113).unwrap();
    let mut mc = 0.0;
    let mut analytic = 0.0;
    for rec in &ds.records {
        let est = genie_cov_estimate(rec, rec.sigma_sq).unwrap();
        mc += est
            .iter()
            .zip(&rec.h1)
            .map(|(e, h)| (e - h).norm_sqr())
            .sum::<f64>()
            / rec.antennas() as f64;
        analytic += genie_cov_analytic_mse(rec, rec.sigma_sq).unwrap();
    }
    let mc = mc / ds.len() as f64;
    let analytic = analytic / ds.len() as f64;
    assert!(
        (mc - analytic).abs() <= 0.02 * analytic,
        "MC {mc} vs analytic {analytic}"
    );
}

#[test]
fn genie_cov_requires_covariance_rows() {
    let cfg = test_system(8);
    let mut rec = synthesize_record(&cfg, SnrMode::FixedDb(10.0), &mut stream_rng(114, 0)).unwrap();
    rec.ccm_rows = None;
    assert!(matches!(
        genie_cov_estimate(&rec, rec.sigma_sq),
        Err(Error::MissingCcm)
    ));
}

#[test]
fn vae_awgn_alpha_matches_interference_trace() {
    // m draws of sqrt(m) e_i give the identity sample covariance, so the
    // matched white interference level is alpha^2 = tr(I)/m = 1
    let m = 4;
    let eye: Vec<Vec<Complex64>> = (0..m)
        .map(|i| {
            let mut h = zeros(m);
            h[i] = Complex64::new((m as f64).sqrt(), 0.0);
            h
        })
        .collect();
    let h1: Vec<Vec<Complex64>> = eye.clone();
    let stats = SampleStats::fit_from_channels(&[h1, eye]).unwrap();
    let model = VaeModel::new(ModelConfig {
        antennas: m,
        num_blocks: 1,
        latent_dim: 4,
        enc_channels: vec![4],
        dec_channels: vec![4],
        kernel: 3,
        genie: false,
        init_seed: 0,
    })
    .unwrap();
    let est = Estimator::vae_awgn(model, &stats).unwrap();
    match est {
        Estimator::VaeAwgn { alpha_sq, .. } => {
            assert!((alpha_sq - 1.0).abs() < 1e-12, "alpha^2 = {alpha_sq}")
        }
        _ => unreachable!(),
    }
}

#[test]
fn vae_zero_interference_moments_equal_ignore_formula() {
    // lmmse with zero interference moments coincides with the
    // ignore-interference expression mu1 + C1 (C1 + sigma^2 I)^{-1}(y - mu1)
    let m = 4;
    let mut rng = stream_rng(115, 0);
    let y = random_vec(&mut rng, m);
    let mu1 = random_vec(&mut rng, m);
    let spec = CirculantSpectrum::new(vec![2.0, 0.7, 0.1, 1.1]).unwrap();
    let zero_spec = CirculantSpectrum::constant(0.0, m).unwrap();
    let sigma_sq = 0.4;
    let with_zero_block = lmmse_core(
        &mu1,
        CovOperand::Circulant(&spec),
        &zeros(m),
        CovOperand::Circulant(&zero_spec),
        sigma_sq,
        &y,
    )
    .unwrap();
    // hand-evaluated ignore formula in the Fourier domain
    let plan = UnitaryDft::new(m);
    let mut buf: Vec<Complex64> = (0..m).map(|i| y[i] - mu1[i]).collect();
    plan.forward_in_place(&mut buf);
    for (x, &e) in buf.iter_mut().zip(spec.eigenvalues()) {
        *x *= e / (e + sigma_sq);
    }
    plan.inverse_in_place(&mut buf);
    for (ig, &mu) in buf.iter_mut().zip(&mu1) {
        *ig += mu;
    }
    for (a, b) in with_zero_block.iter().zip(&buf) {
        assert_eq!(a, b);
    }
}

fn tiny_multicell_model(genie: bool) -> VaeModel {
    VaeModel::new(ModelConfig {
        antennas: 8,
        num_blocks: 2,
        latent_dim: 4,
        enc_channels: vec![4],
        dec_channels: vec![4],
        kernel: 3,
        genie,
        init_seed: 17,
    })
    .unwrap()
}

fn tiny_singlecell_model() -> VaeModel {
    VaeModel::new(ModelConfig {
        antennas: 8,
        num_blocks: 1,
        latent_dim: 4,
        enc_channels: vec![4],
        dec_channels: vec![4],
        kernel: 3,
        genie: false,
        init_seed: 18,
    })
    .unwrap()
}

#[test]
fn estimator_constructors_enforce_block_counts() {
    assert!(Estimator::vae(tiny_multicell_model(false)).is_ok());
    assert!(matches!(
        Estimator::vae(tiny_singlecell_model()),
        Err(Error::EstimatorInput { .. })
    ));
    assert!(matches!(
        Estimator::vae(tiny_multicell_model(true)),
        Err(Error::EstimatorInput { .. })
    ));
    assert!(Estimator::vae_genie(tiny_multicell_model(true)).is_ok());
    assert!(matches!(
        Estimator::vae_genie(tiny_multicell_model(false)),
        Err(Error::EstimatorInput { .. })
    ));
    assert!(Estimator::vae_ignore(tiny_singlecell_model()).is_ok());
    assert!(matches!(
        Estimator::vae_ignore(tiny_multicell_model(false)),
        Err(Error::EstimatorInput { .. })
    ));
}

#[test]
fn all_estimators_collapse_to_prior_mean_at_huge_noise() {
    let cfg = test_system(8);
    let ds = synthesize_dataset(&cfg, 16, SnrMode::FixedDb(10.0), 116).unwrap();
    let stats = SampleStats::fit(&ds.records).unwrap();
    let estimators: Vec<Estimator> = vec![
        Estimator::scov(stats.clone()),
        Estimator::genie_cov(),
        Estimator::vae(tiny_multicell_model(false)).unwrap(),
        Estimator::vae_genie(tiny_multicell_model(true)).unwrap(),
        Estimator::vae_ignore(tiny_singlecell_model()).unwrap(),
        Estimator::vae_awgn(tiny_singlecell_model(), &stats).unwrap(),
        Estimator::vae_scov(tiny_singlecell_model(), stats.clone()).unwrap(),
    ];
    let mut rec = ds.records[0].clone();
    rec.sigma_sq = 1e12;
    let ynorm = rec.y.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    for est in &estimators {
        let out = est.estimate(&rec).unwrap();
        // each kind's prior mean of h1
        let mu1: Vec<Complex64> = match est {
            Estimator::Scov(s) => s.cells[0].mu_hat.as_slice().to_vec(),
            Estimator::GenieCov => zeros(8),
            Estimator::Vae(m) | Estimator::VaeIgnore(m) | Estimator::VaeAwgn { model: m, .. } => {
                m.infer_moments(&rec.y).unwrap().mu1
            }
            Estimator::VaeScov { model, .. } => model.infer_moments(&rec.y).unwrap().mu1,
            Estimator::VaeGenie(m) => m.infer_moments(&rec.noiseless_observation()).unwrap().mu1,
            Estimator::Ls => unreachable!(),
        };
        let dev: f64 = out
            .iter()
            .zip(&mu1)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(
            dev <= 1e-6 * ynorm,
            "estimator {} deviates {dev}",
            est.kind()
        );
    }
}

#[test]
fn all_estimators_return_finite_vectors() {
    let cfg = test_system(8);
    let ds = synthesize_dataset(&cfg, 8, SnrMode::FixedDb(0.0), 117).unwrap();
    let stats = SampleStats::fit(&ds.records).unwrap();
    let estimators: Vec<Estimator> = vec![
        Estimator::ls(),
        Estimator::scov(stats.clone()),
        Estimator::genie_cov(),
        Estimator::vae(tiny_multicell_model(false)).unwrap(),
        Estimator::vae_genie(tiny_multicell_model(true)).unwrap(),
        Estimator::vae_ignore(tiny_singlecell_model()).unwrap(),
        Estimator::vae_awgn(tiny_singlecell_model(), &stats).unwrap(),
        Estimator::vae_scov(tiny_singlecell_model(), stats).unwrap(),
    ];
    for rec in &ds.records {
        for est in &estimators {
            let out = est.estimate(rec).unwrap();
            assert_eq!(out.len(), rec.antennas());
            assert!(out.iter().all(|z| z.re.is_finite() && z.im.is_finite()));
        }
    }
}

#[test]
fn estimator_kind_round_trips_through_strings() {
    for kind in EstimatorKind::ALL {
        let s = kind.to_string();
        let back: EstimatorKind = s.parse().unwrap();
        assert_eq!(kind, back);
    }
    assert!("bogus".parse::<EstimatorKind>().is_err());
}

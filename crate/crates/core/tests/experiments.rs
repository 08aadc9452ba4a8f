use shapestat::asymptotics::{one_sample_test, TestReport};
use shapestat::perturbation::{
    compatibility_experiment, kent_critical_eta, kent_integrals, kent_population_mean, kent_shape_scatter,
    sample, KentShape, PerturbationSpec,
};
use shapestat::rng::stream_rng;
use shapestat::{Configuration, Mat, Rho};

fn identity_mu() -> Mat {
    Mat::identity(3, 3) / 3f64.sqrt()
}

#[test]
fn sigma_hat_shrinks_like_root_n() {
    let spec = PerturbationSpec::goodall(identity_mu(), 0.1).unwrap();
    let mut ratios = Vec::new();
    for seed in 0..3 {
        let small = compatibility_experiment(&spec, 400, 10, Rho::FullProcrustes, seed).unwrap();
        let large = compatibility_experiment(&spec, 1600, 10, Rho::FullProcrustes, 100 + seed).unwrap();
        ratios.push(small.sigma_hat / large.sigma_hat);
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    assert!((2.0 / 1.5..=2.0 * 1.5).contains(&mean), "{ratios:?}");
}

#[test]
fn isotropic_identity_template_is_compatible() {
    let spec = PerturbationSpec::goodall(identity_mu(), 0.1).unwrap();
    for seed in 0..3 {
        let r = compatibility_experiment(&spec, 1000, 10, Rho::FullProcrustes, seed).unwrap();
        let ratio = r.d_hat / r.sigma_hat;
        assert!((0.3..=3.0).contains(&ratio), "seed {seed}: {ratio}");
    }
}

#[test]
fn anisotropic_template_is_incompatible() {
    let mu = Mat::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 0.3, 0.1])) / 1.1f64.sqrt();
    let spec = PerturbationSpec::goodall(mu, 0.5).unwrap();
    let r = compatibility_experiment(&spec, 2000, 10, Rho::FullProcrustes, 1).unwrap();
    assert!(r.d_hat > 3.0 * r.sigma_hat, "{r:?}");
}

#[test]
fn ziezold_and_partial_reports_are_finite() {
    let spec = PerturbationSpec::goodall(identity_mu(), 0.1).unwrap();
    for rho in [Rho::Ziezold, Rho::PartialProcrustes] {
        let r = compatibility_experiment(&spec, 200, 5, rho, 2).unwrap();
        assert!(r.d_hat.is_finite() && r.d_hat >= 0.0);
        assert!(r.sigma_hat.is_finite() && r.sigma_hat >= 0.0);
        assert_eq!(r.rho, rho);
    }
}

#[test]
fn kent_integrals_partition_one() {
    for eta in [0.01, 0.1, 1.0, 10.0] {
        let (a, b) = kent_integrals(eta).unwrap();
        assert!((a + b - 1.0).abs() < 1e-9);
    }
    let eta = kent_critical_eta().unwrap();
    let (a, _) = kent_integrals(eta).unwrap();
    assert!((a - 0.5).abs() < 1e-7);
    assert_eq!(kent_population_mean(0.1).unwrap().shape, KentShape::Top);
    assert_eq!(kent_population_mean(10.0).unwrap().shape, KentShape::Bottom);
}

#[test]
fn kent_sample_mean_follows_the_error_level() {
    let small = kent_shape_scatter(0.1, 100, 1).unwrap();
    assert!(small.mean_marker[2] > 0.49, "{:?}", small.mean_marker);
    let large = kent_shape_scatter(10.0, 100, 1).unwrap();
    assert!(large.mean_marker[2] < -0.45, "{:?}", large.mean_marker);
}

fn run_test(seed: u64, hypothesis: &Configuration, rho: Rho) -> TestReport {
    let spec = PerturbationSpec::goodall(identity_mu(), 0.05).unwrap();
    let mut rng = stream_rng(seed, 0);
    let data = sample(&spec, 60, &mut rng).unwrap().configurations().unwrap();
    one_sample_test(&data, hypothesis, rho, 0.05).unwrap()
}

#[test]
fn one_sample_test_detects_a_wrong_hypothesis() {
    let truth = Configuration::new(identity_mu()).unwrap();
    let wrong = Configuration::new(Mat::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 0.8, 0.6]))).unwrap();
    let accepted = (0..20).filter(|&s| !run_test(s, &truth, Rho::FullProcrustes).rejected).count();
    assert!(accepted >= 15);
    for s in 0..5 {
        let r = run_test(s, &wrong, Rho::FullProcrustes);
        assert!(r.rejected && r.p_value < 1e-6);
        assert_eq!(r.dof, 5);
    }
}

#[test]
fn size_and_shape_test_has_six_degrees_of_freedom() {
    // Goodall draws are normalized, so the hypothesis carries unit size
    let truth = Configuration::new(identity_mu()).unwrap();
    let r = run_test(3, &truth, Rho::PartialProcrustes);
    assert_eq!(r.dof, 6);
    assert!(r.p_value > 0.0 && r.p_value <= 1.0);
}

mod common;

use common::{max_abs_diff, min_eig};
use envcore::linalg::{complete_basis, SemiOrthBasis};
use envcore::model::ConditionalDecomposition;
use envcore::sim::{
    run_bias_sweep, run_ecm_study, run_efficiency_study, Design, DimChoice, PredictorCorr, ScenarioId, ScenarioSpec,
    StudyOptions,
};
use envcore::EnvError;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn rank(m: &DMatrix<f64>) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    let top = sv.max();
    sv.iter().filter(|&&s| s > 1e-10 * top).count()
}

/// Envelope design small enough to replicate many times.
fn small_envelope(seed: u64) -> ScenarioSpec {
    ScenarioSpec {
        scenario_id: ScenarioId::Custom,
        generator: envcore::sim::Generator::Envelope,
        n: 400,
        r: 5,
        p: 2,
        u: 2,
        q: 3,
        q1: 1,
        omega_eigs: vec![0.5, 1.5],
        omega0_eigs: vec![10.0, 10.0, 10.0],
        predictor_corr: PredictorCorr::FactorModel,
        signal_scale: 1.0,
        tail_loading: 0.0,
        seed,
    }
}

fn fixed(u: usize) -> StudyOptions {
    StudyOptions { dim: DimChoice::Fixed(u), ..StudyOptions::default() }
}

#[test]
fn presets_validate() {
    for id in [ScenarioId::S1, ScenarioId::S2, ScenarioId::EcmStar, ScenarioId::BiasSweep, ScenarioId::NullTest] {
        ScenarioSpec::preset(id, 1).unwrap().validate().unwrap();
    }
    assert!(ScenarioSpec::preset(ScenarioId::Custom, 1).is_err());
    assert_eq!("ecm-star".parse::<ScenarioId>().unwrap(), ScenarioId::EcmStar);
}

#[test]
fn invalid_specs_are_rejected() {
    let mut s = small_envelope(1);
    s.q1 = 3;
    assert!(matches!(s.validate(), Err(EnvError::InvalidSpec(_))));
    let mut s = small_envelope(1);
    s.omega_eigs = vec![1.0];
    assert!(s.validate().is_err());
    let mut s = small_envelope(1);
    s.n = 7;
    assert!(s.validate().is_err());
    let mut s = small_envelope(1);
    s.predictor_corr = PredictorCorr::CompoundSymmetric(1.0);
    assert!(s.validate().is_err());
    assert!(run_efficiency_study(&small_envelope(1), 0, &fixed(2)).is_err());
    assert!(run_ecm_study(&small_envelope(1), 1, &fixed(2)).is_err());
}

#[test]
fn envelope_truth_has_stated_structure() {
    let spec = ScenarioSpec::s1(3);
    let d = Design::new(&spec).unwrap();
    let t = &d.truth;
    let o = t.rotation.as_ref().unwrap();
    assert!(max_abs_diff(&(o.transpose() * o), &DMatrix::identity(20, 20)) < 1e-12);
    assert_eq!(rank(&t.alpha), spec.q1);
    assert!(t.alpha.rows(spec.q1, spec.q - spec.q1).amax() == 0.0);
    assert!(max_abs_diff(&(&t.design * &t.alpha), &t.beta) < 1e-10);
    assert_eq!(rank(&t.design), spec.q);
    assert_eq!(rank(&t.beta), spec.q1);
    // beta lies in span(Gamma) and Sigma is reduced by it
    let gamma = t.gamma.as_ref().unwrap();
    let pg = gamma * gamma.transpose();
    assert!(max_abs_diff(&(&pg * &t.beta), &t.beta) < 1e-10);
    assert!(max_abs_diff(&(&pg * &t.sigma), &(&t.sigma * &pg)) < 1e-9);
    assert_eq!(d.x.shape(), (spec.n, spec.p));
}

#[test]
fn conditional_truth_has_stated_structure() {
    let spec = ScenarioSpec::ecm_star(4);
    let d = Design::new(&spec).unwrap();
    let t = &d.truth;
    assert_eq!(rank(&t.alpha), spec.u);
    assert!(t.alpha.rows(spec.u, spec.q - spec.u).amax() == 0.0);
    assert!(max_abs_diff(&(&t.design * &t.alpha), &t.beta) < 1e-10);
    let u0 = complete_basis(&SemiOrthBasis::from_span(&t.design).unwrap());
    let dec = ConditionalDecomposition::decompose(&t.sigma, &t.design, &u0).unwrap();
    let phi = t.phi.as_ref().unwrap();
    let phi0 = t.phi0.as_ref().unwrap();
    let expect = phi * &t.omega * phi.transpose() + phi0 * &t.omega0 * phi0.transpose();
    assert!(max_abs_diff(&dec.sigma_d_given_s, &expect) < 1e-8);
}

#[test]
fn tail_loading_makes_last_row_nonzero() {
    let mut spec = ScenarioSpec::null_test(5);
    assert!(Design::new(&spec).unwrap().truth.alpha.row(2).amax() == 0.0);
    spec.tail_loading = 0.5;
    let t = Design::new(&spec).unwrap().truth;
    assert!(t.alpha.row(2).amax() > 0.0);
    let phi = t.phi.unwrap();
    assert!((phi.column(0).norm() - 1.0).abs() < 1e-14);
}

#[test]
fn replicates_share_the_design_and_differ_in_noise() {
    let spec = small_envelope(6);
    let a = Design::new(&spec).unwrap();
    let b = Design::new(&spec).unwrap();
    assert_eq!(a.x, b.x);
    assert_eq!(a.responses(3), b.responses(3));
    assert_ne!(a.responses(3), a.responses(4));
    let other = Design::new(&small_envelope(7)).unwrap();
    assert_ne!(a.x, other.x);
}

#[test]
fn single_replicate_study_runs() {
    let report = run_efficiency_study(&small_envelope(8), 1, &fixed(2)).unwrap();
    assert_eq!(report.reps, 1);
    for e in &report.estimators {
        assert_eq!(e.reps_ok, 1);
        assert_eq!(e.mc_variance, 0.0);
        assert!(e.mse_mean.is_finite());
    }
}

#[test]
fn serialized_report_is_deterministic() {
    let opts = fixed(2);
    let a = run_efficiency_study(&small_envelope(9), 4, &opts).unwrap();
    let b = run_efficiency_study(&small_envelope(9), 4, &opts).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    let back: envcore::sim::SimulationReport = serde_json::from_str(&serde_json::to_string(&a).unwrap()).unwrap();
    assert_eq!(serde_json::to_string(&back).unwrap(), serde_json::to_string(&a).unwrap());
}

#[test]
fn envelope_recovers_true_subspace_in_first_scenario() {
    let report = run_efficiency_study(&ScenarioSpec::s1(10), 1, &fixed(6)).unwrap();
    let em = report.estimator("em").unwrap();
    let d = em.mean_subspace_distance.unwrap();
    assert!(d < 0.1, "distance {d}");
}

#[test]
fn theoretical_order_survives_correlated_predictors() {
    for rho in [0.5, 0.85] {
        for base in [ScenarioSpec::s1(11), ScenarioSpec::s2(11)] {
            let mut spec = base;
            spec.predictor_corr = PredictorCorr::CompoundSymmetric(rho);
            let th = Design::new(&spec).unwrap().theoretical_avars().unwrap();
            assert!(th.cm <= th.um && th.envelope <= th.um, "rho {rho}: {th:?}");
        }
        let mut spec = ScenarioSpec::s1(11);
        spec.predictor_corr = PredictorCorr::CompoundSymmetric(rho);
        let th = Design::new(&spec).unwrap().theoretical_avars().unwrap();
        assert!(th.envelope < th.cm, "rho {rho}: {th:?}");
    }
}

#[test]
fn full_design_in_sweep_matches_unconstrained() {
    let spec = small_envelope(12);
    let report = run_bias_sweep(&spec, &[1, 3, 5], 5, &fixed(2)).unwrap();
    let um = report.estimator("um").unwrap().mse_mean;
    let last = report.curve.last().unwrap();
    assert_eq!(last.k, 5);
    assert!((last.mse_mean - um).abs() < 1e-10 * um);
}

#[test]
fn monte_carlo_variance_matches_theory() {
    let report = run_efficiency_study(&small_envelope(13), 400, &fixed(2)).unwrap();
    for name in ["um", "cm", "em"] {
        let e = report.estimator(name).unwrap();
        let th = e.theoretical_avar.unwrap();
        let ratio = e.mc_variance / th;
        assert!((0.8..1.25).contains(&ratio), "{name}: mc {} theory {th}", e.mc_variance);
    }
}

#[test]
fn ecm_study_reports_both_estimators() {
    let mut spec = ScenarioSpec::null_test(14);
    spec.n = 300;
    let report = run_ecm_study(&spec, 20, &fixed(1)).unwrap();
    let cm = report.estimator("cm").unwrap();
    let ecm = report.estimator("ecm").unwrap();
    assert_eq!(cm.reps_ok + ecm.reps_ok, 40);
    let th = report.theoretical.unwrap();
    assert!(th.envelope <= th.cm + 1e-12);
    assert!(ecm.mean_subspace_distance.unwrap() < 0.5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn theoretical_avars_are_ordered(seed in any::<u64>()) {
        let spec = small_envelope(seed);
        let th = Design::new(&spec).unwrap().theoretical_avars().unwrap();
        prop_assert!(th.cm <= th.um * (1.0 + 1e-12));
        prop_assert!(th.envelope <= th.um * (1.0 + 1e-12));
        let d = Design::new(&spec).unwrap();
        prop_assert!(min_eig(&d.truth.sigma) > 0.0);
    }
}

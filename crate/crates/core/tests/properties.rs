use ajd::limits::{closed_form_cov, closed_form_mean};
use ajd::linalg::min_sym_eigenvalue;
use ajd::model::{JumpComponent, JumpDist, ModelSpec};
use ajd::riccati::{
    char_fn, closed_form_oracle, semiflow_residual, solve_transform, ClosedFormModel, TransformOptions,
};
use ajd::simulate::{path_rng, sample_jump};
use ajd::stability::{
    classify, generator_apply, lyapunov_residual, solve_lyapunov, Classification, GFamily, GeneratorProbe,
};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;

/// Admissible two-factor specs with one square-root factor and jumps whose
/// intensity depends on the state.
fn two_factor() -> impl Strategy<Value = ModelSpec> {
    (
        (0.2..2.0f64, -0.5..0.5f64, 0.1..1.0f64, 0.1..1.5f64),
        (-2.0..-0.3f64, -1.0..1.0f64, -2.0..-0.3f64, 0.0..1.0f64),
        (0.0..1.0f64, 0.0..0.5f64, 1.0..4.0f64, -0.3..0.3f64, 0.01..0.2f64),
        -1.0..1.0f64,
    )
        .prop_map(
            |((a11, corr, extra, a22), (b11, b21, b22, k1), (lambda, feller_margin, rate, gmean, gvar), b2)| {
                let c = corr * a11.sqrt();
                let alpha1 = DMatrix::from_row_slice(2, 2, &[a11, c, c, c * c / a11 + extra]);
                let a = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, a22]);
                let beta = DMatrix::from_row_slice(2, 2, &[b11, 0.0, b21, b22]);
                let b = DVector::from_vec(vec![0.5 * a11 + feller_margin + 0.05, b2]);
                let jumps = JumpDist::product(vec![
                    JumpComponent::Exponential { rate },
                    JumpComponent::Gaussian { mean: gmean, variance: gvar },
                ])
                .unwrap();
                ModelSpec::new(
                    1,
                    a,
                    vec![alpha1, DMatrix::zeros(2, 2)],
                    b,
                    beta,
                    lambda,
                    DVector::from_vec(vec![k1, 0.0]),
                    jumps,
                )
                .unwrap()
            },
        )
}

fn stable_matrix() -> impl Strategy<Value = DMatrix<f64>> {
    (2usize..5).prop_flat_map(|d| {
        prop::collection::vec(-1.0..1.0f64, d * d).prop_map(move |v| {
            let m = DMatrix::from_row_slice(d, d, &v);
            let shift = ajd::stability::max_real_eigenvalue(&m) + 0.5;
            m - DMatrix::identity(d, d) * shift
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, ..ProptestConfig::default() })]

    #[test]
    fn generated_specs_are_admissible_and_round_trip(spec in two_factor()) {
        let report = spec.validate().unwrap();
        prop_assert!(report.admissible, "{:?}", report.violations);
        prop_assert!(report.feller_ok);
        let back = ModelSpec::from_json(&spec.to_json()).unwrap();
        prop_assert_eq!(back, spec);
    }

    #[test]
    fn classification_matches_effective_drift(spec in two_factor()) {
        let r = classify(&spec, 2.0).unwrap();
        let stable = ajd::stability::is_stable(&spec.effective_beta());
        prop_assert_eq!(r.classification.is_exp_ergodic(), stable);
        if stable {
            let exp = matches!(r.classification, Classification::ExpErgodic { .. });
            prop_assert!(exp);
            let h = r.h.unwrap();
            prop_assert!(lyapunov_residual(&spec.effective_beta(), &h) < 1e-8);
            let cov = closed_form_cov(&spec).unwrap();
            prop_assert!(min_sym_eigenvalue(&cov) > -1e-9 * cov.norm().max(1.0));
            let v = closed_form_mean(&spec).unwrap();
            let balance = spec.effective_beta() * &v + &spec.b + spec.jumps.mean() * spec.lambda0;
            prop_assert!(balance.norm() < 1e-10 * (1.0 + v.norm()));
        }
    }

    #[test]
    fn characteristic_function_is_bounded(
        spec in two_factor(),
        s1 in -3.0..3.0f64,
        s2 in -3.0..3.0f64,
        t in 0.05..2.0f64,
        x1 in 0.0..3.0f64,
        x2 in -2.0..2.0f64,
    ) {
        let u = [Complex64::new(0.0, s1), Complex64::new(0.0, s2)];
        let v = char_fn(&spec, &[x1, x2], t, &u).unwrap();
        prop_assert!(v.norm() <= 1.0 + 1e-9, "{v}");
        let at_zero = char_fn(&spec, &[x1, x2], t, &[Complex64::new(0.0, 0.0); 2]).unwrap();
        prop_assert!((at_zero - 1.0).norm() < 1e-12);
    }

    #[test]
    fn semiflow_holds(spec in two_factor(), s1 in -2.0..2.0f64, s2 in -2.0..2.0f64, t in 0.1..1.0f64, s in 0.1..1.0f64) {
        let u = [Complex64::new(0.0, s1), Complex64::new(0.0, s2)];
        prop_assert!(semiflow_residual(&spec, &u, t, s).unwrap() < 1e-7);
    }

    #[test]
    fn lyapunov_solution_is_positive_definite(m in stable_matrix()) {
        let h = solve_lyapunov(&m).unwrap();
        prop_assert!(lyapunov_residual(&m, &h) < 1e-8 * (1.0 + h.norm()));
        prop_assert!(min_sym_eigenvalue(&h) > 0.0);
    }

    #[test]
    fn oracle_agreement(b in 0.6..2.0f64, beta in -2.0..-0.2f64, vol in 0.1..1.0f64, s in -3.0..3.0f64, t in 0.1..3.0f64) {
        let u = Complex64::new(0.0, s);
        let opts = TransformOptions::with_dt(1e-3);
        for (model, spec) in [
            (ClosedFormModel::Ou { b, beta, a: vol }, ModelSpec::ou(b, beta, vol)),
            (ClosedFormModel::Cir { b, beta, alpha: vol }, ModelSpec::cir(b, beta, vol)),
        ] {
            let (phi, psi) = closed_form_oracle(model, u, t).unwrap();
            let sol = solve_transform(&spec, &[u], t, opts).unwrap();
            prop_assert!((sol.final_phi() - phi).norm() <= 1e-7 * phi.norm().max(1.0));
            prop_assert!((sol.final_psi()[0] - psi).norm() <= 1e-7 * psi.norm().max(1.0));
        }
    }

    /// For g = 1 + xᵀHx the generator is an explicit quadratic polynomial.
    #[test]
    fn generator_on_quadratic(spec in two_factor(), x1 in 0.0..3.0f64, x2 in -2.0..2.0f64, h12 in -0.4..0.4f64) {
        let h = DMatrix::from_row_slice(2, 2, &[1.0, h12, h12, 1.0]);
        let probe = GeneratorProbe::new(GFamily::Power { p: 2.0 }, h.clone());
        let got = generator_apply(&spec, &probe, &[x1, x2]).unwrap();
        let x = DVector::from_vec(vec![x1, x2]);
        let diffusion = 2.0 * x.dot(&(&h * spec.drift(&x))) + (&h * spec.diffusion(&x)).trace();
        let ez = spec.jumps.mean();
        let jump = spec.intensity(&x) * (2.0 * x.dot(&(&h * ez)) + (&h * spec.jumps.second_moment()).trace());
        prop_assert!((got.diffusion_part - diffusion).abs() < 1e-9 * (1.0 + diffusion.abs()));
        prop_assert!((got.jump_part - jump).abs() < 1e-8 * (1.0 + jump.abs()), "{} vs {}", got.jump_part, jump);
    }

    /// Analytic gradient and Hessian of the test functions match central differences.
    #[test]
    fn probe_derivatives(x1 in -2.0..2.0f64, x2 in -2.0..2.0f64, p in 0.5..4.0f64, log in any::<bool>()) {
        let h = DMatrix::from_row_slice(2, 2, &[1.5, 0.3, 0.3, 0.8]);
        let family = if log { GFamily::Log } else { GFamily::Power { p } };
        let probe = GeneratorProbe::new(family, h);
        let x = DVector::from_vec(vec![x1, x2]);
        let e = 1e-5;
        let grad = probe.gradient(&x);
        let hess = probe.hessian(&x);
        for i in 0..2 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += e;
            xm[i] -= e;
            let fd = (probe.value(&xp) - probe.value(&xm)) / (2.0 * e);
            prop_assert!((fd - grad[i]).abs() < 1e-6 * (1.0 + grad[i].abs()));
            let gd = (probe.gradient(&xp) - probe.gradient(&xm)) / (2.0 * e);
            for j in 0..2 {
                prop_assert!((gd[j] - hess[(j, i)]).abs() < 1e-6 * (1.0 + hess[(j, i)].abs()));
            }
        }
    }
}

#[test]
fn sampled_jumps_match_moments() {
    let dist = JumpDist::product(vec![
        JumpComponent::Exponential { rate: 2.0 },
        JumpComponent::Gaussian { mean: 0.1, variance: 0.04 },
        JumpComponent::Point { value: -0.3 },
    ])
    .unwrap();
    let mut rng = path_rng(17, 0);
    let n = 200_000;
    let draws: Vec<Vec<f64>> = (0..n).map(|_| sample_jump(&dist, &mut rng)).collect();
    for c in 0..3 {
        let m = draws.iter().map(|z| z[c]).sum::<f64>() / n as f64;
        let m2 = draws.iter().map(|z| z[c] * z[c]).sum::<f64>() / n as f64;
        let var = (m2 - m * m).max(0.0);
        let se = (var / n as f64).sqrt().max(1e-12);
        assert!((m - dist.mean()[c]).abs() <= 5.0 * se, "coordinate {c}: {m}");
        let want2 = dist.second_moment()[(c, c)];
        assert!((m2 - want2).abs() <= 0.02 * want2.max(1e-3), "coordinate {c}: {m2} vs {want2}");
    }
}

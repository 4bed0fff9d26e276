mod common;

use common::kummer;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use svshrink::matnorm::{
    diag_embedded, haar_orthogonal, sample_around, singular_values, standard_normal, Mat,
};
use svshrink::priors::{
    back_transform, check_superharmonic, default_laplacian_step, fd_laplacian, grad_log_marginal,
    grad_log_marginal_with, log_marginal_stein, log_marginal_svs, log_marginal_svs_checked,
    log_prior_mat, metric_det, sphere_average_test, sv_laplacian, sv_partials_fd, Expectation,
    GradScheme, SvPartials, FD_EPS,
};
use svshrink::stats::mean_and_stderr;
use svshrink::{MeanMatrix, ModelSpec, PriorKind, SeriesControl};

fn spec(n: usize, m: usize) -> ModelSpec {
    ModelSpec::unit(n, m).unwrap()
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn svs(x: &Mat, n: usize, m: usize) -> f64 {
    log_prior_mat(&PriorKind::Svs, &spec(n, m), x)
        .unwrap()
        .exp()
}

/// `E ||mu||^{-(d-2)}`, `mu ~ N(y, v I_d)`, as a Poisson mixture of central
/// chi-square inverse moments.
fn stein_marginal_poisson(d: usize, r: f64, v: f64) -> f64 {
    let lam = r * r / (2.0 * v);
    let s = (d as f64 - 2.0) / 2.0;
    let mut total = 0.0;
    for j in 0..5000 {
        let jf = j as f64;
        let ln_pois =
            -lam + if lam > 0.0 {
                jf * lam.ln()
            } else if j == 0 {
                0.0
            } else {
                f64::NEG_INFINITY
            } - libm::lgamma(jf + 1.0);
        let ln_moment = -s * 2f64.ln() + libm::lgamma(jf + 1.0) - libm::lgamma(d as f64 / 2.0 + jf);
        let t = (ln_pois + ln_moment).exp();
        total += t;
        if jf > lam + 50.0 && t < 1e-18 * total {
            break;
        }
    }
    v.powf(-s) * total
}

#[test]
fn log_prior_examples() {
    let s = spec(4, 2);
    let x = diag_embedded(4, 2, &[2.0, 1.0]);
    let p = log_prior_mat(&PriorKind::Svs, &s, &x).unwrap();
    assert!((p + 2f64.ln()).abs() < 1e-14);
    let mut y = Mat::zeros(4, 2);
    y[(0, 0)] = 2.0;
    let p = log_prior_mat(&PriorKind::Stein, &s, &y).unwrap();
    assert!((p + 6.0 * 2f64.ln()).abs() < 1e-14);
    assert_eq!(log_prior_mat(&PriorKind::Uniform, &s, &y).unwrap(), 0.0);

    let s5 = spec(5, 1);
    let mu = Mat::from_column_slice(5, 1, &[0.3, -1.2, 0.5, 2.0, 0.1]);
    let a = log_prior_mat(&PriorKind::Svs, &s5, &mu).unwrap();
    let b = log_prior_mat(&PriorKind::Stein, &s5, &mu).unwrap();
    assert!((a - b).abs() < 1e-13);
    assert!((a + 3.0 * mu.norm().ln()).abs() < 1e-13);
}

#[test]
fn singular_points_are_infinite() {
    let s = spec(4, 2);
    let rank1 = diag_embedded(4, 2, &[3.0, 0.0]);
    assert_eq!(
        log_prior_mat(&PriorKind::Svs, &s, &rank1).unwrap(),
        f64::INFINITY
    );
    assert_eq!(
        log_prior_mat(&PriorKind::Stein, &s, &Mat::zeros(4, 2)).unwrap(),
        f64::INFINITY
    );
    assert!(log_prior_mat(&PriorKind::RegularizedSvs(3), &s, &rank1)
        .unwrap()
        .is_finite());
    let ident = PriorKind::TransformedSvs(Mat::identity(8, 8));
    assert_eq!(
        log_prior_mat(&ident, &s, &Mat::zeros(4, 2)).unwrap(),
        f64::INFINITY
    );
}

#[test]
fn prior_kind_validation() {
    let s = spec(4, 2);
    assert!(PriorKind::RegularizedSvs(0).validate(&s).is_err());
    assert!(PriorKind::RegularizedSvs(1).validate(&s).is_ok());
    assert!(PriorKind::TransformedSvs(Mat::zeros(8, 8))
        .validate(&s)
        .is_err());
    assert!(PriorKind::TransformedSvs(Mat::identity(6, 6))
        .validate(&s)
        .is_err());
    assert!(log_prior_mat(&PriorKind::Svs, &s, &Mat::zeros(3, 2)).is_err());
}

#[test]
fn transformed_prior_scaling() {
    let s = spec(5, 3);
    let mut r = rng(3);
    let x = standard_normal(5, 3, &mut r);
    let base = log_prior_mat(&PriorKind::Svs, &s, &x).unwrap();
    let t = log_prior_mat(&PriorKind::TransformedSvs(Mat::identity(15, 15)), &s, &x).unwrap();
    assert!((t - base).abs() < 1e-12);
    let c = 2.5;
    let t = log_prior_mat(
        &PriorKind::TransformedSvs(Mat::identity(15, 15) * c),
        &s,
        &x,
    )
    .unwrap();
    // pi(M / c) = c^{m(n-m-1)} pi(M)
    assert!((t - (base + 3.0 * c.ln())).abs() < 1e-12);
    let back = back_transform(&(Mat::identity(15, 15) * c), &x).unwrap();
    assert!((back * c - &x).norm() < 1e-12);
}

#[test]
fn marginal_at_origin_is_one_half() {
    let c = SeriesControl::default();
    let v = log_marginal_svs(&spec(4, 2), &Mat::zeros(4, 2), 1.0, &c).unwrap();
    assert!((v - 0.5f64.ln()).abs() < 1e-13, "{v}");
}

#[test]
fn marginal_matches_monte_carlo_prior_expectation() {
    let s = spec(4, 2);
    let c = SeriesControl::default();
    let mut r = rng(11);
    let draws = 200_000;
    for case in 0..3 {
        let y = if case == 0 {
            Mat::zeros(4, 2)
        } else {
            standard_normal(4, 2, &mut r) * 1.5
        };
        let vals: Vec<f64> = (0..draws)
            .map(|_| svs(&sample_around(&y, 1.0, &mut r), 4, 2))
            .collect();
        let (mu, se) = mean_and_stderr(&vals);
        let exact = log_marginal_svs(&s, &y, 1.0, &c).unwrap().exp();
        assert!(
            (mu - exact).abs() < 3.0 * se,
            "case {case}: mc {mu} +- {se}, exact {exact}"
        );
    }
}

#[test]
fn one_column_marginal_matches_poisson_mixture_and_monte_carlo() {
    let s = spec(5, 1);
    let c = SeriesControl::default();
    let y = Mat::from_column_slice(5, 1, &[1.0, 0.0, 0.0, 0.0, 0.0]);
    let exact = log_marginal_svs(&s, &y, 1.0, &c).unwrap().exp();
    assert!((exact / stein_marginal_poisson(5, 1.0, 1.0) - 1.0).abs() < 1e-12);
    for (r, v) in [(0.0, 1.0), (3.0, 0.5), (12.0, 2.0)] {
        let yy = Mat::from_column_slice(5, 1, &[0.0, r, 0.0, 0.0, 0.0]);
        let a = log_marginal_svs(&s, &yy, v, &c).unwrap();
        assert!(
            (a - stein_marginal_poisson(5, r, v).ln()).abs() < 1e-11,
            "r={r} v={v}"
        );
    }
    let mut g = rng(5);
    let vals: Vec<f64> = (0..200_000)
        .map(|_| sample_around(&y, 1.0, &mut g).norm().powi(-3))
        .collect();
    let (mu, se) = mean_and_stderr(&vals);
    assert!(
        (mu - exact).abs() < 3.0 * se,
        "mc {mu} +- {se}, exact {exact}"
    );
}

#[test]
fn one_column_marginal_equals_stein_marginal() {
    let c = SeriesControl::default();
    let s = spec(6, 1);
    let y = Mat::from_column_slice(6, 1, &[0.3, 2.0, -1.0, 4.0, 0.0, 1.5]);
    let a = log_marginal_svs(&s, &y, 1.3, &c).unwrap();
    let b = log_marginal_stein(&s, &y, 1.3, &c).unwrap();
    assert!((a - b.value).abs() < 1e-14);
}

#[test]
fn marginal_finite_on_benchmark_range() {
    let c = SeriesControl::default();
    for sig in [[20.0, 20.0], [20.0, 0.0], [0.0, 0.0], [13.0, 7.0]] {
        let y = diag_embedded(4, 2, &sig);
        let r = log_marginal_svs_checked(&spec(4, 2), &y, 1.0, &c).unwrap();
        assert!(r.converged && r.value.is_finite(), "{sig:?}");
    }
    for sig in [[20.0, 5.0, 0.0], [20.0, 20.0, 20.0]] {
        let y = diag_embedded(5, 3, &sig);
        let r = log_marginal_svs_checked(&spec(5, 3), &y, 1.0, &c).unwrap();
        assert!(r.converged && r.value.is_finite(), "{sig:?}");
    }
}

#[test]
fn zero_gradient_at_origin() {
    for kind in [PriorKind::Svs, PriorKind::Stein] {
        let g = grad_log_marginal(&kind, &spec(4, 2), &Mat::zeros(4, 2), 1.0, FD_EPS).unwrap();
        assert!(g.norm() < 1e-8, "{kind:?}");
    }
}

#[test]
fn stein_gradient_matches_analytic_derivative() {
    // d/dz 1F1(1; b; z) = 1F1(2; b + 1; z) / b
    let s = spec(4, 2);
    let d = 8.0;
    let b = d / 2.0;
    let mut r = rng(8);
    for v in [1.0, 0.5] {
        let y = standard_normal(4, 2, &mut r) * 1.7;
        let rr = y.norm();
        let z = rr * rr / (2.0 * v);
        let dr = -rr / v + (rr / v) * kummer(2.0, b + 1.0, z) / (b * kummer(1.0, b, z));
        let exact = &y * (dr / rr);
        let g = grad_log_marginal(&PriorKind::Stein, &s, &y, v, FD_EPS).unwrap();
        assert!((g - exact).amax() < 1e-4);
    }
}

#[test]
fn gradient_schemes_agree() {
    let c = SeriesControl::default();
    let mut r = rng(21);
    for (n, m) in [(4, 2), (5, 3), (6, 2)] {
        let s = spec(n, m);
        for _ in 0..3 {
            let y = standard_normal(n, m, &mut r) * 3.0;
            for kind in [PriorKind::Svs, PriorKind::Stein] {
                let a =
                    grad_log_marginal_with(&kind, &s, &y, 1.0, FD_EPS, &c, GradScheme::Entrywise)
                        .unwrap();
                let b = grad_log_marginal_with(
                    &kind,
                    &s,
                    &y,
                    1.0,
                    FD_EPS,
                    &c,
                    GradScheme::SingularValue,
                )
                .unwrap();
                assert_eq!(a.evaluations, 2 * n * m);
                assert!((a.grad - b.grad).amax() < 1e-6, "{kind:?} n={n} m={m}");
            }
        }
    }
}

#[test]
fn gradient_rejects_priors_without_marginal() {
    let s = spec(4, 2);
    let y = Mat::zeros(4, 2);
    assert!(grad_log_marginal(&PriorKind::RegularizedSvs(2), &s, &y, 1.0, FD_EPS).is_err());
    assert!(grad_log_marginal(&PriorKind::Svs, &s, &y, 1.0, 0.0).is_err());
    let g = grad_log_marginal(&PriorKind::Uniform, &s, &y, 1.0, FD_EPS).unwrap();
    assert_eq!(g, Mat::zeros(4, 2));
}

#[test]
fn fd_laplacian_of_squared_norm() {
    let mut r = rng(2);
    let x = standard_normal(4, 2, &mut r);
    let l = fd_laplacian(|z: &Mat| z.norm_squared(), &x, 1e-3).unwrap();
    assert!((l - 16.0).abs() < 1e-6);
    assert!(fd_laplacian(|z: &Mat| z.norm_squared(), &x, 0.0).is_err());
    let rank1 = diag_embedded(4, 2, &[1.0, 0.0]);
    assert!(fd_laplacian(|z: &Mat| svs(z, 4, 2), &rank1, 1e-4).is_err());
}

/// FD error allowance for Laplacians of `pi_SVS`-like functions: the value
/// times its curvature scale `1 / sigma_min^2`.
fn budget(f0: f64, x: &Mat) -> f64 {
    let s = singular_values(x);
    1e-3 * f0.abs() / s.last().unwrap().powi(2)
}

#[test]
fn svs_prior_is_harmonic_and_regularized_prior_superharmonic() {
    let mut r = rng(31);
    let mut checked = 0;
    while checked < 40 {
        let x = standard_normal(4, 2, &mut r);
        if singular_values(&x)[1] < 1e-2 {
            continue;
        }
        checked += 1;
        let h = default_laplacian_step(&x);
        let f0 = svs(&x, 4, 2);
        let l = fd_laplacian(|z: &Mat| svs(z, 4, 2), &x, h).unwrap();
        assert!(l.abs() <= budget(f0, &x), "laplacian {l} at pi {f0}");
        let reg = |z: &Mat| {
            log_prior_mat(&PriorKind::RegularizedSvs(10), &spec(4, 2), z)
                .unwrap()
                .exp()
        };
        let lr = fd_laplacian(reg, &x, h).unwrap();
        assert!(lr < 0.0, "regularized laplacian {lr}");
    }
}

#[test]
fn svs_prior_is_superharmonic_column_wise() {
    let mut r = rng(41);
    for _ in 0..20 {
        let x = standard_normal(5, 3, &mut r);
        let h = default_laplacian_step(&x);
        let f0 = svs(&x, 5, 3);
        for col in 0..3 {
            let f0c = f0;
            let mut acc = 0.0;
            let mut w = x.clone();
            for i in 0..5 {
                let x0 = w[(i, col)];
                w[(i, col)] = x0 + h;
                let up = svs(&w, 5, 3);
                w[(i, col)] = x0 - h;
                let dn = svs(&w, 5, 3);
                w[(i, col)] = x0;
                acc += (up - 2.0 * f0c + dn) / (h * h);
            }
            assert!(acc <= budget(f0, &x), "column {col}: {acc}");
        }
    }
}

#[test]
fn sphere_averages_do_not_exceed_center() {
    let s = spec(4, 2);
    let c = SeriesControl::default();
    let mut r = rng(51);
    let center = diag_embedded(4, 2, &[2.0, 1.0]);
    let avg = sphere_average_test(|z: &Mat| svs(z, 4, 2), &center, 0.3, 4000, &mut r).unwrap();
    assert!(avg.average <= avg.center_value + 3.0 * avg.std_error);
    let marg = |z: &Mat| log_marginal_svs(&s, z, 1.0, &c).unwrap().exp();
    let center = diag_embedded(4, 2, &[1.0, 0.5]);
    let avg = sphere_average_test(marg, &center, 1.0, 2000, &mut r).unwrap();
    assert!(avg.average <= avg.center_value + 3.0 * avg.std_error);
    let avg = sphere_average_test(|_: &Mat| 2.5, &center, 1.0, 10, &mut r).unwrap();
    assert_eq!(avg.average, avg.center_value);
}

#[test]
fn sv_laplacian_examples() {
    let s = spec(4, 2);
    let sigma = [2.0f64, 1.0];
    let c = 1.0; // n - m - 1
    let g = sigma[0].powf(-c) * sigma[1].powf(-c);
    let exact = SvPartials {
        first: sigma.iter().map(|v| -c * g / v).collect(),
        second: sigma.iter().map(|v| c * (c + 1.0) * g / (v * v)).collect(),
    };
    assert!(sv_laplacian(&sigma, &s, &exact).unwrap().abs() < 1e-15);
    let quad = SvPartials {
        first: sigma.iter().map(|v| 2.0 * v).collect(),
        second: vec![2.0, 2.0],
    };
    assert!((sv_laplacian(&sigma, &s, &quad).unwrap() - 16.0).abs() < 1e-13);
    assert!(sv_laplacian(&[1.0, 1.0], &s, &quad).is_err());
    assert!(sv_laplacian(&[1.0, 0.0], &s, &quad).is_err());
}

#[test]
fn metric_determinant_examples() {
    assert_eq!(metric_det(&[2.0, 1.0], &spec(4, 2)), 144.0);
    assert!((metric_det(&[1.5], &spec(5, 1)) - 1.5f64.powi(8)).abs() < 1e-12);
    assert_eq!(metric_det(&[1.0, 1.0], &spec(4, 2)), 0.0);
}

/// Riemannian Laplacian `|g|^{-1/2} d_i(|g|^{1/2} d_i f)` in singular value
/// coordinates, differenced numerically.
fn riemannian_laplacian<G: Fn(&[f64]) -> f64>(g: G, sigma: &[f64], s: &ModelSpec) -> f64 {
    let h = 1e-4;
    let sq = |x: &[f64]| metric_det(x, s).sqrt();
    let flux = |x: &[f64], i: usize| {
        let mut up = x.to_vec();
        let mut dn = x.to_vec();
        up[i] += h;
        dn[i] -= h;
        sq(x) * (g(&up) - g(&dn)) / (2.0 * h)
    };
    let mut acc = 0.0;
    for i in 0..sigma.len() {
        let mut up = sigma.to_vec();
        let mut dn = sigma.to_vec();
        up[i] += h;
        dn[i] -= h;
        acc += (flux(&up, i) - flux(&dn, i)) / (2.0 * h);
    }
    acc / sq(sigma)
}

fn smooth_invariant(sig: &[f64]) -> f64 {
    let t: f64 = sig.iter().map(|v| v * v).sum();
    sig.iter().map(|v| (1.0 + v * v).ln()).sum::<f64>() + t * t / 50.0 + (-t / 7.0).exp()
}

#[test]
fn sv_laplacian_matches_riemannian_form_and_ambient_laplacian() {
    let mut r = rng(61);
    for (n, m) in [(4, 2), (5, 3), (6, 2)] {
        let s = spec(n, m);
        for _ in 0..5 {
            let x = standard_normal(n, m, &mut r) * 2.0;
            let sigma = singular_values(&x);
            let p = sv_partials_fd(smooth_invariant, &sigma, 1e-4);
            let lap = sv_laplacian(&sigma, &s, &p).unwrap();
            let amb = fd_laplacian(
                |z: &Mat| smooth_invariant(&singular_values(z)),
                &x,
                default_laplacian_step(&x),
            )
            .unwrap();
            assert!((lap - amb).abs() <= 1e-3 * lap.abs(), "{lap} vs {amb}");
            let riem = riemannian_laplacian(smooth_invariant, &sigma, &s);
            assert!(
                (lap - riem).abs() <= 1e-4 * lap.abs().max(1.0),
                "{lap} vs {riem}"
            );
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn svs_laplacian_vanishes(s1 in 0.1f64..20.0, s2 in 0.1f64..20.0, s3 in 0.1f64..20.0) {
        prop_assume!((s1 - s2).abs() > 1e-3 && (s2 - s3).abs() > 1e-3 && (s1 - s3).abs() > 1e-3);
        let (n, m) = (6usize, 3usize);
        let sigma = [s1, s2, s3];
        let c = (n - m - 1) as f64;
        let g: f64 = sigma.iter().map(|v| v.powf(-c)).product();
        let p = SvPartials {
            first: sigma.iter().map(|v| -c * g / v).collect(),
            second: sigma.iter().map(|v| c * (c + 1.0) * g / (v * v)).collect(),
        };
        let scale: f64 = p.second.iter().map(|v| v.abs()).sum();
        let l = sv_laplacian(&sigma, &spec(n, m), &p).unwrap();
        prop_assert!(l.abs() <= 1e-8 * scale.max(1e-300));
    }

    #[test]
    fn regularization_is_monotone(seed in 0u64..1000) {
        let s = spec(5, 2);
        let x = standard_normal(5, 2, &mut rng(seed));
        let mut last = f64::NEG_INFINITY;
        for k in [1u32, 2, 5, 10, 100] {
            let v = log_prior_mat(&PriorKind::RegularizedSvs(k), &s, &x).unwrap();
            prop_assert!(v >= last);
            last = v;
        }
        prop_assert!(log_prior_mat(&PriorKind::Svs, &s, &x).unwrap() >= last);
    }

    #[test]
    fn orthogonal_invariance(seed in 0u64..1000) {
        let mut g = rng(seed);
        let s = spec(5, 2);
        let y = standard_normal(5, 2, &mut g) * 2.0;
        let p = haar_orthogonal(5, &mut g);
        let q = haar_orthogonal(2, &mut g);
        let z = &p * &y * &q;
        let c = SeriesControl::default();
        let a = log_marginal_svs(&s, &y, 1.0, &c).unwrap();
        let b = log_marginal_svs(&s, &z, 1.0, &c).unwrap();
        prop_assert!((a - b).abs() < 1e-8);
        let a = log_prior_mat(&PriorKind::Svs, &s, &y).unwrap();
        let b = log_prior_mat(&PriorKind::Svs, &s, &z).unwrap();
        prop_assert!((a - b).abs() < 1e-8);
    }

    #[test]
    fn marginal_scaling_identity(seed in 0u64..1000, c in 0.3f64..3.0) {
        // m(cY; c^2 v) = c^{-m(n-m-1)} m(Y; v) follows from the integral
        // definition and the homogeneity of the prior
        let s = spec(5, 2);
        let y = standard_normal(5, 2, &mut rng(seed));
        let ctrl = SeriesControl::default();
        let a = log_marginal_svs(&s, &(&y * c), c * c, &ctrl).unwrap();
        let b = log_marginal_svs(&s, &y, 1.0, &ctrl).unwrap();
        prop_assert!((a - (b - 4.0 * c.ln())).abs() < 1e-10);
    }
}

#[test]
fn mean_matrix_checks_shape() {
    let s = spec(4, 2);
    assert!(MeanMatrix::new(&s, Mat::zeros(4, 3)).is_err());
    assert_eq!(MeanMatrix::zeros(&s).entries().shape(), (4, 2));
}

#[test]
fn superharmonic_reports() {
    let s = spec(4, 2);
    let r = check_superharmonic(&PriorKind::Svs, &s, 30, 2.0, 1, 200).unwrap();
    assert_eq!(r.expectation, Expectation::Harmonic);
    assert!(r.passed(), "{:?}", r.points.iter().find(|p| !p.passed));
    for p in &r.points {
        assert!(p.sv_laplacian.abs() <= p.budget);
    }
    let r = check_superharmonic(&PriorKind::RegularizedSvs(5), &s, 30, 2.0, 2, 200).unwrap();
    assert!(r.passed(), "{:?}", r.points.iter().find(|p| !p.passed));
    assert!(r.points.iter().all(|p| p.fd_laplacian < 0.0));
    let r = check_superharmonic(&PriorKind::Stein, &s, 30, 2.0, 3, 200).unwrap();
    assert!(r.passed(), "{:?}", r.points.iter().find(|p| !p.passed));
    let r = check_superharmonic(&PriorKind::Svs, &spec(5, 3), 10, 1.0, 4, 100).unwrap();
    assert!(r.passed());
    let a = nalgebra::DMatrix::identity(8, 8);
    assert!(check_superharmonic(&PriorKind::TransformedSvs(a), &s, 5, 1.0, 0, 10).is_err());
}

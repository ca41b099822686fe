//! Phase thresholds from state evolution and the replica potential, against
//! closed forms that can be derived independently.

use tensorspike::phase::{
    self, find_delta_alg, find_delta_c, find_delta_dyn, find_delta_it, gaussian_curve_delta, gaussian_se_spinodals,
    Family, PhaseLabel,
};
use tensorspike::model::Prior;
use tensorspike::quadrature::Integrator;

const TOL: f64 = 1e-7;

/// Turning points of `Δ(y) = g(y)^{p−1}/y` by golden-section search; an
/// oracle independent of the quadratic used by the library.
fn spinodals_by_search(mu: f64, p: usize) -> (f64, f64) {
    let f = |ly: f64| gaussian_curve_delta(ly.exp(), mu, p);
    // Scan ln y for the local max (Δ_Dyn) and the local min (Δ_Alg) of Δ(y).
    let grid: Vec<f64> = (0..4000).map(|k| -12.0 + 16.0 * k as f64 / 3999.0).collect();
    let vals: Vec<f64> = grid.iter().map(|&l| f(l)).collect();
    let mut max_at = None;
    let mut min_at = None;
    for k in 1..grid.len() - 1 {
        if vals[k] > vals[k - 1] && vals[k] > vals[k + 1] {
            max_at = Some(k);
        }
        if vals[k] < vals[k - 1] && vals[k] < vals[k + 1] {
            min_at = Some(k);
        }
    }
    let refine = |k: usize, sign: f64| {
        let (mut a, mut b) = (grid[k - 1], grid[k + 1]);
        for _ in 0..200 {
            let c = a + (b - a) / 3.0;
            let d = b - (b - a) / 3.0;
            if sign * f(c) > sign * f(d) {
                b = d;
            } else {
                a = c;
            }
        }
        f(0.5 * (a + b))
    };
    let dyn_ = refine(max_at.expect("local max"), 1.0);
    // At μ = 0 the fixed point y = 0 plays the role of the lower branch.
    let alg = min_at.map(|k| refine(k, -1.0)).unwrap_or(0.0);
    (alg, dyn_)
}

#[test]
fn rademacher_information_thresholds() {
    // Δ_IT for p = 2 is exactly 1 (continuous transition at the spectral
    // threshold); the others are pinned to published four-digit values.
    for (p, want, tol) in [(2, 1.0, 1e-4), (3, 0.2828, 5e-4), (4, 0.1902, 5e-4), (5, 0.1473, 5e-4)] {
        let got = find_delta_it(p, &Prior::Rademacher, None, TOL).unwrap();
        assert!((got - want).abs() < tol, "p={p}: Δ_IT = {got}");
    }
}

#[test]
fn matrix_case_has_no_hard_phase() {
    for prior in [Prior::Rademacher, Prior::Gaussian { mu: 0.0 }] {
        let th = phase::thresholds(2, &prior, TOL).unwrap();
        assert!(!th.has_hard_phase(), "{prior}: {th:?}");
        assert!((th.delta_it - 1.0).abs() < 1e-4);
        assert!((th.delta_c - 1.0).abs() < 1e-5);
    }
}

#[test]
fn zero_mean_cubic_priors_have_vanishing_algorithmic_threshold() {
    for prior in [Prior::Rademacher, Prior::Gaussian { mu: 0.0 }] {
        assert_eq!(find_delta_alg(3, &prior, None, TOL).unwrap(), 0.0);
    }
}

#[test]
fn gaussian_spinodals_match_independent_search() {
    for p in [3, 4] {
        for k in 0..8 {
            let mu = 0.05 * k as f64;
            if mu >= phase::gaussian_mu_tri(p) {
                continue;
            }
            let (alg, dyn_) = spinodals_by_search(mu, p);
            let prior = Prior::Gaussian { mu };
            let b_dyn = find_delta_dyn(p, &prior, None, TOL).unwrap();
            let b_alg = find_delta_alg(p, &prior, None, TOL).unwrap();
            assert!((b_dyn - dyn_).abs() < 1e-4, "p={p} μ={mu}: Δ_Dyn {b_dyn} vs {dyn_}");
            assert!((b_alg - alg).abs() < 1e-4, "p={p} μ={mu}: Δ_Alg {b_alg} vs {alg}");
            let closed = gaussian_se_spinodals(mu, p).unwrap();
            assert!((closed.delta_dyn - dyn_).abs() < 1e-8);
            assert!((closed.delta_alg - alg).abs() < 1e-8);
        }
    }
}

#[test]
fn gaussian_zero_mean_cubic_dynamic_threshold() {
    // Δ(y) = y/(1+y)² peaks at y = 1 with value 1/4.
    let got = find_delta_dyn(3, &Prior::Gaussian { mu: 0.0 }, None, 1e-9).unwrap();
    assert!((got - 0.25).abs() < 1e-7, "{got}");
}

#[test]
fn gaussian_tri_critical_closed_form() {
    for p in [3usize, 4, 5] {
        let pf = p as f64;
        let tri = phase::gaussian_tri_critical_closed(p);
        assert!((tri.param - (pf - 2.0) / (2.0 * (pf - 1.0).sqrt())).abs() < 1e-12);
        // Above μ_Tri the two spinodals no longer exist.
        assert!(gaussian_se_spinodals(tri.param * 1.01, p).is_err());
        assert!(gaussian_se_spinodals(tri.param * 0.99, p).is_ok());
    }
}

#[test]
fn bernoulli_tri_critical_point() {
    let tri = phase::tri_critical(3, Family::Bernoulli).unwrap();
    assert!((tri.param - 0.178).abs() < 0.004, "ρ_Tri = {}", tri.param);
    assert!((tri.delta / tri.param.powi(4) - 2.60).abs() < 0.05);
}

#[test]
fn cluster_critical_noise() {
    for p in 2..=5usize {
        for r in 2..=4usize {
            let want = (p as f64 - 1.0) / (r as f64).powi(2 * p as i32 - 2);
            let got = find_delta_c(p, &Prior::Clusters { r }, None, 1e-9).unwrap();
            assert!((got / want - 1.0).abs() < 1e-5, "p={p} r={r}: {got} vs {want}");
        }
    }
}

#[test]
fn cluster_transition_order() {
    use phase::TransitionOrder::*;
    assert_eq!(phase::first_order_discriminant(2, 2).unwrap().order, SecondOrder);
    assert_eq!(phase::first_order_discriminant(2, 4).unwrap().order, Marginal);
    assert_eq!(phase::first_order_discriminant(3, 4).unwrap().order, FirstOrder);
}

#[test]
fn classification_is_consistent_with_thresholds() {
    let prior = Prior::Bernoulli { rho: 0.1 };
    let th = phase::thresholds(3, &prior, TOL).unwrap();
    assert!(th.ordering_violations().is_empty(), "{:?}", th.ordering_violations());
    let integ = Integrator::default();
    let at = |d: f64| phase::classify(d, 3, &prior, &integ).unwrap();
    assert_eq!(at(0.5 * th.delta_alg), PhaseLabel::Easy);
    assert_eq!(at(0.5 * (th.delta_alg + th.delta_it)), PhaseLabel::Hard);
    assert_eq!(at(2.0 * th.delta_it), PhaseLabel::ImpossibleToImprove);
}

//! The replica potential: stationarity at SE fixed points, the I-MMSE
//! relation, convexity, and the clusters reduction.

use tensorspike::free_energy::imms_consistency;
use tensorspike::model::Prior;
use tensorspike::quadrature::Integrator;
use tensorspike::state_evolution::cluster::{ansatz_matrix, cluster_mr, cluster_se_step};
use tensorspike::state_evolution::{se_step_with_errors, LineModel, OverlapMatrix, SeInit};

fn scalar_priors() -> Vec<Prior> {
    vec![Prior::Rademacher, Prior::Gaussian { mu: 0.0 }, Prior::Gaussian { mu: 0.2 }, Prior::Bernoulli { rho: 0.3 }]
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64)).collect()
}

#[test]
fn potential_is_stationary_at_se_fixed_points() {
    for prior in scalar_priors() {
        let model = LineModel::new(&prior, 3, &Integrator::default()).unwrap();
        for delta in log_grid(0.02, 2.0, 10) {
            for init in [SeInit::Eps, SeInit::Informative] {
                let fp = model.fixed_point(delta, init).unwrap();
                assert!(fp.converged, "{prior} Δ={delta} {init:?}");
                let g = model.dphi_numeric(fp.t, delta).unwrap();
                assert!(g.abs() < 1e-6, "{prior} Δ={delta} {init:?}: dφ/dm = {g:e} at m = {}", fp.t);
            }
        }
    }
}

#[test]
fn i_mmse_relation_and_convexity() {
    for (prior, p) in [(Prior::Rademacher, 2), (Prior::Rademacher, 3), (Prior::Gaussian { mu: 0.0 }, 3)] {
        let grid = log_grid(0.05, 2.0, 24);
        let rep = imms_consistency(&grid, p, &prior).unwrap();
        assert!(rep.max_rel_violation < 1e-3, "{prior} p={p}: {}", rep.max_rel_violation);
        assert!(rep.min_second_difference >= -1e-6, "{prior} p={p}: {}", rep.min_second_difference);
        assert!(rep.points.len() >= 18);
    }
}

#[test]
fn cluster_overlap_function_small_argument_expansion() {
    for r in [2usize, 3, 4] {
        let rf = r as f64;
        for x in [0.005, 0.01, 0.02] {
            let taylor = x / (rf * rf) + x * x * (rf - 4.0) / (2.0 * rf.powi(4));
            let mc = cluster_mr(x, r, &Integrator::monte_carlo(2_000_000, 17)).unwrap();
            assert!((mc.value - taylor).abs() < 3.0 * mc.stderr, "r={r} x={x}: {mc:?} vs {taylor}");
        }
    }
}

#[test]
fn ansatz_is_closed_under_full_matrix_state_evolution() {
    let (p, delta) = (3, 0.01);
    for r in [2usize, 3] {
        for b in [0.1, 0.5, 0.9] {
            let m = OverlapMatrix(ansatz_matrix(b, r));
            let prior = Prior::Clusters { r };
            let (next, err) =
                se_step_with_errors(&m, delta, p, &prior, &Integrator::monte_carlo(400_000, 5)).unwrap();
            let b_next = cluster_se_step(b, delta, p, r, &Integrator::default()).unwrap().value;
            let want = ansatz_matrix(b_next, r);
            for i in 0..r {
                for j in 0..r {
                    let d = (next.0[(i, j)] - want[(i, j)]).abs();
                    // Symmetrization averages two entries: its error is at most the larger one.
                    let se = err[(i, j)].max(err[(j, i)]);
                    assert!(d < 3.0 * se + 1e-12, "r={r} b={b} ({i},{j}): {} vs {} ± {se}", next.0[(i, j)], want[(i, j)]);
                }
            }
        }
    }
}

//! Recipes for the three-panel phase-diagram figure.
//!
//! * left: AMP at finite `N` from both initializations against the SE branches
//!   (stable from the ε and informative starts, unstable by bisection between
//!   them), Gaussian prior, `p = 3`;
//! * central: Gaussian `(μ, Δ)` boundaries `Δ_Alg`, `Δ_IT`, `Δ_Dyn` and the
//!   tri-critical point;
//! * right: Bernoulli `(ρ, Δ/ρ⁴)` boundaries and the tri-critical point.

use crate::args::{Fig1Args, Panel};
use crate::commands::log_grid;
use crate::output::{num, opt, Output, Table};
use anyhow::Result;
use serde_json::json;
use tensorspike::amp::{amp_init, amp_run, AmpConfig, AmpInit};
use tensorspike::model::{score_tensor, Channel, Instance, ModelSpec, Prior};
use tensorspike::phase::{self, se_branches, Family, PhaseSolver};
use tensorspike::quadrature::Integrator;
use tensorspike::rng::child_seed;
use tensorspike::state_evolution::LineModel;
use tensorspike::Exec;

const P: usize = 3;

pub fn fig1(a: &Fig1Args, seed: u64) -> Result<Output> {
    match a.panel {
        Panel::Left => left(a, seed),
        Panel::Central => central(a),
        Panel::Right => right(a),
    }
}

/// Mean AMP overlaps `(uninformative, informative)` over `seeds` instances.
pub fn amp_overlaps(n: usize, mu: f64, delta: f64, seeds: usize, seed: u64, cfg: &AmpConfig) -> Result<(f64, f64)> {
    let prior = Prior::Gaussian { mu };
    let spec = ModelSpec::awgn(n, P, prior.clone(), delta);
    let (mut uninf, mut inf) = (0.0, 0.0);
    for k in 0..seeds {
        let s_k = child_seed(seed, k as u64);
        let inst = Instance::generate(&spec, s_k, cfg.exec)?;
        let x0 = inst.x0;
        let (s, d) = score_tensor(inst.y, &Channel::Awgn { delta }, cfg.exec)?;
        for (init, acc) in [(AmpInit::random(), &mut uninf), (AmpInit::Informative, &mut inf)] {
            let st = amp_init(&init, &spec, Some(&x0), child_seed(s_k, 2))?;
            let res = amp_run(&s, d, &prior, st, Some(&x0), cfg)?;
            *acc += res.overlap().map(|m| m[(0, 0)]).unwrap_or(f64::NAN) / seeds as f64;
        }
    }
    Ok((uninf, inf))
}

fn left(a: &Fig1Args, seed: u64) -> Result<Output> {
    let prior = Prior::Gaussian { mu: a.mu };
    let model = LineModel::new(&prior, P, &Integrator::default())?;
    let deltas = log_grid(a.delta_min, a.delta_max, a.points)?;
    let cfg = AmpConfig { max_iter: a.max_iter, tol: a.tol, damping: a.damping, exec: Exec::Parallel };
    let mut table = Table::new(&[
        "delta",
        "amp_overlap_uninf",
        "amp_overlap_inf",
        "se_stable_branches",
        "se_unstable_branch",
    ]);
    for &d in &deltas {
        let (u, i) = if a.n > 0 { amp_overlaps(a.n, a.mu, d, a.seeds, child_seed(seed, d.to_bits()), &cfg)? } else { (f64::NAN, f64::NAN) };
        let br = se_branches(&model, d)?;
        let stable = br.stable.iter().map(|v| num(*v)).collect::<Vec<_>>().join(";");
        table.push(vec![num(d), num(u), num(i), stable, opt(br.unstable)]);
    }
    let spin = phase::gaussian_se_spinodals(a.mu, P).ok();
    Ok(Output::Both(table, json!({ "se_spinodals": spin })))
}

fn boundaries(prior: &Prior, tol: f64) -> Result<(f64, f64, f64)> {
    let mut solver = PhaseSolver::new(prior, P, &Integrator::default())?;
    solver.tol = tol;
    let th = solver.thresholds()?;
    Ok((th.delta_alg, th.delta_it, th.delta_dyn))
}

fn central(a: &Fig1Args) -> Result<Output> {
    let tri = phase::gaussian_tri_critical_closed(P);
    let mu_max = 0.4;
    let n = a.points.max(2);
    let mus: Vec<f64> = (0..n).map(|k| mu_max * k as f64 / (n - 1) as f64).collect();
    let rows = Exec::Parallel.map(mus.len(), |k| boundaries(&Prior::Gaussian { mu: mus[k] }, a.threshold_tol));
    let mut table = Table::new(&["kind", "mu", "delta_alg", "delta_it", "delta_dyn"]);
    for (mu, r) in mus.iter().zip(rows) {
        let (alg, it, dy) = r?;
        table.push(vec!["boundary".into(), num(*mu), num(alg), num(it), num(dy)]);
    }
    let (alg, it, dy) = boundaries(&Prior::Gaussian { mu: tri.param }, a.threshold_tol)?;
    table.push(vec!["at-tri-critical".into(), num(tri.param), num(alg), num(it), num(dy)]);
    table.push(vec!["tri-critical".into(), num(tri.param), num(tri.delta), num(tri.delta), num(tri.delta)]);
    // Where the computed boundaries actually meet: the cusp of the SE
    // fixed-point curve. Its μ agrees with the closed form; its Δ does not.
    let cusp = phase::tri_critical_numeric(Family::Gaussian, P, (0.0, 0.7))?;
    table.push(vec!["tri-critical-se".into(), num(cusp.param), num(cusp.delta), num(cusp.delta), num(cusp.delta)]);
    Ok(Output::Both(table, json!({ "tri_critical": tri, "tri_critical_se": cusp })))
}

fn right(a: &Fig1Args) -> Result<Output> {
    let tri = phase::tri_critical(P, Family::Bernoulli)?;
    let (lo, hi) = (0.02, 0.3);
    let n = a.points.max(2);
    let rhos: Vec<f64> = (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect();
    let rows = Exec::Parallel.map(rhos.len(), |k| boundaries(&Prior::Bernoulli { rho: rhos[k] }, a.threshold_tol));
    let mut table = Table::new(&["kind", "rho", "delta_alg_rho4", "delta_it_rho4", "delta_dyn_rho4"]);
    for (rho, r) in rhos.iter().zip(rows) {
        let (alg, it, dy) = r?;
        let u = rho.powi(4);
        table.push(vec!["boundary".into(), num(*rho), num(alg / u), num(it / u), num(dy / u)]);
    }
    let u = tri.param.powi(4);
    let d = num(tri.delta / u);
    table.push(vec!["tri-critical".into(), num(tri.param), d.clone(), d.clone(), d]);
    Ok(Output::Both(table, json!({ "tri_critical": tri })))
}

//! Subcommand implementations.

use crate::args::*;
use crate::output::{num, opt, Output, Table};
use anyhow::{bail, Context, Result};
use serde_json::json;
use std::path::{Path, PathBuf};
use tensorspike::amp::{amp_init, amp_run, AmpConfig, AmpInit};
use tensorspike::free_energy::{maximize_on_line, mmse_label, sigma_x_power_sum, t_mmse};
use tensorspike::model::{score_tensor, Channel, Instance, ModelSpec, Prior};
use tensorspike::oracle::{exact_free_energy, nishimori_check};
use tensorspike::phase::{self, sweep_phase_diagram, Family, PhaseSolver};
use tensorspike::quadrature::Integrator;
use tensorspike::state_evolution::{se_fixed_point, LineModel, SeInit};
use tensorspike::tensor::io::{read_tensor, write_tensor};
use tensorspike::tensor::MultiVector;
use tensorspike::Exec;

/// Parses `start:stop:count` into an evenly spaced grid.
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let [a, b, n] = parts.as_slice() else {
        bail!("grid must be start:stop:count, got '{s}'");
    };
    let (a, b): (f64, f64) = (a.parse()?, b.parse()?);
    let n: usize = n.parse()?;
    if n == 0 {
        bail!("grid needs at least one point");
    }
    if n == 1 {
        return Ok(vec![a]);
    }
    Ok((0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect())
}

/// `count` log-spaced values in `[a, b]`.
pub fn log_grid(a: f64, b: f64, count: usize) -> Result<Vec<f64>> {
    if !(a > 0.0 && b >= a) || count == 0 {
        bail!("log grid needs 0 < min ≤ max and at least one point");
    }
    if count == 1 {
        return Ok(vec![a]);
    }
    Ok((0..count).map(|i| a * (b / a).powf(i as f64 / (count - 1) as f64)).collect())
}

fn truth_path(out: Option<&Path>, explicit: Option<&PathBuf>) -> Result<PathBuf> {
    if let Some(p) = explicit {
        return Ok(p.clone());
    }
    let out = out.context("gen needs --out for the tensor file")?;
    Ok(out.with_extension("x0.csv"))
}

/// Writes `X⁰` as CSV, one row per variable.
pub fn write_truth(path: &Path, x: &MultiVector, config: &serde_json::Value) -> Result<()> {
    let mut s = String::new();
    let cols: Vec<String> = (0..x.r()).map(|k| format!("x{k}")).collect();
    s.push_str(&format!("# schema: tensorspike/truth/v1 columns={}\n", cols.join(",")));
    s.push_str(&format!("# config: {}\n", serde_json::to_string(config)?));
    s.push_str(&cols.join(","));
    s.push('\n');
    for i in 0..x.n() {
        s.push_str(&x.row(i).iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(","));
        s.push('\n');
    }
    std::fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

/// Reads a truth CSV (comment lines and a header are skipped).
pub fn read_truth(path: &Path) -> Result<MultiVector> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = line.split(',').map(|c| c.trim().parse::<f64>()).collect();
        match parsed {
            Ok(v) => rows.push(v),
            Err(_) if rows.is_empty() => continue, // header
            Err(e) => bail!("{}: bad row '{line}': {e}", path.display()),
        }
    }
    let r = rows.first().map(|v| v.len()).context("truth file has no rows")?;
    if rows.iter().any(|v| v.len() != r) {
        bail!("{}: ragged rows", path.display());
    }
    Ok(MultiVector::from_rows(rows.len(), r, rows.concat())?)
}

pub fn gen(a: &GenArgs, g: &Global, config: &serde_json::Value) -> Result<Output> {
    let spec = ModelSpec::awgn(a.n, a.p, a.prior.clone(), a.delta);
    let out = g.out.as_deref().context("gen needs --out for the tensor file")?;
    let truth = truth_path(Some(out), a.truth_out.as_ref())?;
    let inst = Instance::generate(&spec, g.seed, Exec::Parallel)?;
    write_tensor(out, &inst.y)?;
    write_truth(&truth, &inst.x0, config)?;
    Ok(Output::Json(json!({
        "tensor": out.display().to_string(),
        "truth": truth.display().to_string(),
        "n": a.n,
        "p": a.p,
        "entries": inst.y.data().len(),
    })))
}

fn matrix_json(m: &nalgebra::DMatrix<f64>) -> serde_json::Value {
    json!((0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect::<Vec<_>>()).collect::<Vec<_>>())
}

pub fn amp(a: &AmpArgs, g: &Global) -> Result<Output> {
    let y = read_tensor(&a.input)?;
    let spec = ModelSpec::awgn(y.n(), y.p(), a.prior.clone(), a.delta);
    spec.validate()?;
    let truth = a.truth.as_deref().map(read_truth).transpose()?;
    let init = match a.init {
        AmpInitMode::Random => AmpInit::Random { amplitude: a.amplitude },
        AmpInitMode::Informative => AmpInit::Informative,
    };
    let state = amp_init(&init, &spec, truth.as_ref(), g.seed)?;
    let (s, delta) = score_tensor(y, &Channel::Awgn { delta: a.delta }, Exec::Parallel)?;
    let cfg = AmpConfig { max_iter: a.max_iter, tol: a.tol, damping: a.damping, exec: Exec::Parallel };
    let res = amp_run(&s, delta, &a.prior, state, truth.as_ref(), &cfg)?;

    let r = spec.r();
    let mut cols = vec!["iter".to_string()];
    cols.extend(overlap_columns(r));
    let mut table = Table::with_columns(cols);
    for (t, m) in res.overlap_trajectory.iter().enumerate() {
        let mut row = vec![t.to_string()];
        row.extend(m.iter_row_major().map(num));
        table.push(row);
    }
    let extra = json!({
        "spec": {"n": spec.n, "p": spec.p, "prior": spec.prior.to_string(), "delta": a.delta},
        "seed": g.seed,
        "iterations": res.iterations,
        "converged": res.converged,
        "overlap": res.overlap().map(matrix_json),
        "self_overlap": matrix_json(&res.state.xhat.overlap(&res.state.xhat)?),
        "mse": res.mse.map(|m| json!({"direct": m.direct, "via_overlap": m.via_overlap, "prior_form": m.prior_form})),
        "trajectory": res.overlap_trajectory.iter().map(matrix_json).collect::<Vec<_>>(),
    });
    Ok(Output::Both(table, extra))
}

fn overlap_columns(r: usize) -> Vec<String> {
    (0..r).flat_map(|k| (0..r).map(move |l| format!("m_{k}{l}"))).collect()
}

trait RowMajor {
    fn iter_row_major(&self) -> Box<dyn Iterator<Item = f64> + '_>;
}

impl RowMajor for nalgebra::DMatrix<f64> {
    fn iter_row_major(&self) -> Box<dyn Iterator<Item = f64> + '_> {
        Box::new((0..self.nrows()).flat_map(move |i| (0..self.ncols()).map(move |j| self[(i, j)])))
    }
}

pub fn se(a: &SeArgs) -> Result<Output> {
    let integ = a.integrator.clone().unwrap_or_else(|| Integrator::default_for(&a.prior));
    let init = match a.init {
        SeInitMode::Eps => SeInit::Eps,
        SeInitMode::Informative => SeInit::Informative,
    };
    let fp = se_fixed_point(a.delta, a.p, &a.prior, init, &integ, a.tol, a.max_iter)?;
    let r = a.prior.rank();
    let mut cols = vec!["iter".to_string()];
    cols.extend(overlap_columns(r));
    cols.push("mse".into());
    let sigma = a.prior.moments().sigma_x.trace();
    let mut table = Table::with_columns(cols);
    for (t, m) in fp.trajectory.iter().enumerate() {
        let mut row = vec![t.to_string()];
        row.extend(m.0.iter_row_major().map(num));
        row.push(num(sigma - m.trace()));
        table.push(row);
    }
    let extra = json!({
        "converged": fp.converged,
        "iterations": fp.iterations,
        "m_star": matrix_json(&fp.m_star.0),
        "mse": fp.mse,
        "integrator": integ.to_string(),
    });
    Ok(Output::Both(table, extra))
}

fn line_model(prior: &Prior, p: usize) -> Result<LineModel> {
    Ok(LineModel::new(prior, p, &Integrator::default())?)
}

pub fn free_energy(a: &FreeEnergyArgs) -> Result<Output> {
    let model = line_model(&a.prior, a.p)?;
    let curve = maximize_on_line(&model, a.delta, a.m_grid, Exec::Parallel)?;
    let mut table = Table::new(&["m", "phi"]);
    for (t, v) in &curve.grid {
        table.push(vec![num(*t), num(*v)]);
    }
    let extra = json!({
        "m_star": curve.t_star,
        "phi_star": curve.phi_star,
        "label": model.is_clusters().then_some("ansatz-restricted"),
    });
    Ok(Output::Both(table, extra))
}

pub fn info_curve(a: &InfoCurveArgs) -> Result<Output> {
    let model = line_model(&a.prior, a.p)?;
    let deltas = log_grid(a.delta_min, a.delta_max, a.points)?;
    let sx_p = sigma_x_power_sum(&a.prior, a.p);
    let sigma = model.sigma_trace();
    let rows = Exec::Parallel.map(deltas.len(), |i| -> tensorspike::Result<Vec<String>> {
        let d = deltas[i];
        let c = maximize_on_line(&model, d, tensorspike::free_energy::PHI_GRID_POINTS, Exec::Sequential)?;
        let tm = t_mmse(d, a.p, &a.prior, &Integrator::default()).ok();
        Ok(vec![
            num(d),
            num(sx_p / (2.0 * a.p as f64 * d) - c.phi_star),
            num(sigma - c.trace_star),
            opt(tm),
            num(c.t_star),
        ])
    });
    let mut table = Table::new(&["delta", "mi", "mmse", "tmmse", "m_star"]);
    for r in rows {
        table.push(r?);
    }
    let extra = json!({ "mmse_label": mmse_label(a.p, &a.prior) });
    Ok(Output::Both(table, extra))
}

pub fn thresholds(a: &ThresholdArgs) -> Result<Output> {
    let mut solver = PhaseSolver::new(&a.prior, a.p, &Integrator::default())?;
    solver.tol = a.tol;
    let th = solver.thresholds()?;
    let mut table = Table::new(&["delta_c", "delta_alg", "delta_dyn", "delta_it"]);
    table.push(vec![num(th.delta_c), num(th.delta_alg), num(th.delta_dyn), num(th.delta_it)]);
    let mut extra = serde_json::to_value(&th)?;
    if let Prior::Gaussian { mu } = a.prior {
        let obj = extra.as_object_mut().unwrap();
        obj.insert("closed_form".into(), json!(phase::gaussian_closed_thresholds(mu, a.p).ok()));
        obj.insert("se_spinodals".into(), json!(phase::gaussian_se_spinodals(mu, a.p).ok()));
    }
    Ok(Output::Both(table, extra))
}

pub fn phase_diagram(a: &PhaseDiagramArgs) -> Result<Output> {
    let params = parse_grid(&a.grid)?;
    let deltas = parse_grid(&a.delta_grid)?;
    let rows = sweep_phase_diagram(a.family, a.p, &params, &deltas, &Integrator::default(), a.tol)?;
    let mut table = Table::new(&["param", "delta", "label", "delta_alg", "delta_it", "delta_dyn", "delta_c"]);
    for r in rows {
        table.push(vec![
            num(r.param),
            num(r.delta),
            r.label.to_string(),
            num(r.delta_alg),
            num(r.delta_it),
            num(r.delta_dyn),
            num(r.delta_c),
        ]);
    }
    let unit = match a.family {
        Family::Gaussian => "delta",
        Family::Bernoulli => "delta/rho^4",
    };
    Ok(Output::Both(table, json!({ "delta_unit": unit })))
}

pub fn table1(a: &Table1Args) -> Result<Output> {
    let rows = phase::table1(a.tol)?;
    let mut table = Table::new(&["prior", "p", "quantity", "computed", "paper", "rel_dev", "note"]);
    for r in rows {
        table.push(vec![r.prior, r.p.to_string(), r.quantity, num(r.computed), opt(r.paper), opt(r.rel_dev), r.note]);
    }
    Ok(Output::Table(table))
}

pub fn oracle_nishimori(a: &NishimoriArgs, g: &Global) -> Result<Output> {
    let spec = ModelSpec::awgn(a.n, a.p, a.prior.clone(), a.delta);
    Output::json(&nishimori_check(&spec, a.trials, g.seed, Exec::Parallel)?)
}

pub fn oracle_free_energy(a: &OracleFreeEnergyArgs, g: &Global) -> Result<Output> {
    let spec = ModelSpec::awgn(a.n, a.p, a.prior.clone(), a.delta);
    let f = exact_free_energy(&spec, a.trials, g.seed, Exec::Parallel)?;
    let model = line_model(&a.prior, a.p)?;
    let rs = maximize_on_line(&model, a.delta, tensorspike::free_energy::PHI_GRID_POINTS, Exec::Parallel)?;
    Ok(Output::Json(json!({
        "n": a.n,
        "f_n": f.value,
        "stderr": f.stderr,
        "trials": a.trials,
        "f_rs": rs.phi_star,
    })))
}

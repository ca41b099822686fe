//! `tensorspike` command-line front end.
//!
//! Exit codes: 0 success, 2 usage error, 3 numerical failure (1 for I/O).

mod args;
mod commands;
mod output;
mod recipes;

use anyhow::{Context, Result};
use args::{Cli, Command, Format, OracleCommand};
use clap::Parser;
use serde_json::Value;
use std::ffi::OsString;
use std::process::ExitCode;
use tensorspike::Error;

const SUBCOMMANDS: [&str; 10] =
    ["gen", "amp", "se", "free-energy", "info-curve", "thresholds", "phase-diagram", "table1", "oracle", "fig1"];

/// Keys of a config file that never become flags.
const SKIPPED_KEYS: [&str; 4] = ["command", "out", "config", "threads"];

/// Splices the flags of a `--config` JSON file into `argv`, right after the
/// subcommand path; flags already present on the command line win.
fn merge_config(argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let strs: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let path = strs.iter().enumerate().find_map(|(i, a)| {
        a.strip_prefix("--config=").map(str::to_string).or_else(|| (a == "--config").then(|| strs.get(i + 1).cloned()).flatten())
    });
    let Some(path) = path else { return Ok(argv) };
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading config {path}"))?;
    let cfg = parse_config(&text).with_context(|| format!("parsing config {path}"))?;
    let obj = cfg.as_object().context("config must be a JSON object")?;

    let mut out: Vec<OsString> = argv[..1].to_vec();
    let mut rest: Vec<String> = strs[1..].to_vec();
    // Subcommand path: from the command line if given, else from the file.
    let mut path_tokens = Vec::new();
    if let Some(pos) = rest.iter().position(|a| SUBCOMMANDS.contains(&a.as_str())) {
        let mut end = pos + 1;
        if rest[pos] == "oracle" && rest.get(end).is_some_and(|a| !a.starts_with('-')) {
            end += 1;
        }
        path_tokens = rest.drain(..end).collect();
    } else if let Some(cmd) = obj.get("command").and_then(Value::as_str) {
        path_tokens = cmd.split_whitespace().map(str::to_string).collect();
    }
    out.extend(path_tokens.into_iter().map(OsString::from));

    let given = |flag: &str| rest.iter().any(|a| a == flag || a.starts_with(&format!("{flag}=")));
    for (key, val) in obj {
        if SKIPPED_KEYS.contains(&key.as_str()) {
            continue;
        }
        let flag = format!("--{}", key.replace('_', "-"));
        if given(&flag) {
            continue;
        }
        let value = match val {
            Value::Null | Value::Bool(false) => continue,
            Value::Bool(true) => {
                out.push(flag.into());
                continue;
            }
            Value::String(s) => s.clone(),
            Value::Number(n) => n.to_string(),
            Value::Object(_) if key == "prior" => {
                serde_json::from_value::<tensorspike::model::Prior>(val.clone())?.to_string()
            }
            other => anyhow::bail!("config key '{key}': unsupported value {other}"),
        };
        out.push(flag.into());
        out.push(value.into());
    }
    out.extend(rest.into_iter().map(OsString::from));
    Ok(out)
}

/// Accepts a bare JSON object, a JSON artifact (its `config` member) or a CSV
/// artifact (its `# config:` line).
fn parse_config(text: &str) -> Result<Value> {
    if let Some(line) = text.lines().find_map(|l| l.strip_prefix("# config: ")) {
        return Ok(serde_json::from_str(line)?);
    }
    let v: Value = serde_json::from_str(text)?;
    match v.get("config") {
        Some(inner @ Value::Object(_)) if v.get("schema").is_some() => Ok(inner.clone()),
        _ => Ok(v),
    }
}

/// The resolved configuration embedded in every artifact.
fn resolved_config(cli: &Cli) -> Value {
    let mut cfg = match cli.command.args_json() {
        Value::Object(m) => m,
        _ => serde_json::Map::new(),
    };
    cfg.insert("command".into(), Value::String(cli.command.name().into()));
    cfg.insert("seed".into(), cli.global.seed.into());
    Value::Object(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let config = resolved_config(&cli);
    let g = &cli.global;
    let format = g.format.unwrap_or_else(|| {
        match g.out.as_ref().and_then(|p| p.extension()).and_then(|e| e.to_str()) {
            Some("json") => Format::Json,
            Some("csv") => Format::Csv,
            _ => cli.command.default_format(),
        }
    });
    let output = match &cli.command {
        Command::Gen(a) => {
            // The tensor goes to --out; the summary goes to stdout.
            let summary = commands::gen(a, g, &config)?;
            let text = summary.render("gen", &config, Format::Json)?;
            return output::emit(None, &text);
        }
        Command::Amp(a) => commands::amp(a, g)?,
        Command::Se(a) => commands::se(a)?,
        Command::FreeEnergy(a) => commands::free_energy(a)?,
        Command::InfoCurve(a) => commands::info_curve(a)?,
        Command::Thresholds(a) => commands::thresholds(a)?,
        Command::PhaseDiagram(a) => commands::phase_diagram(a)?,
        Command::Table1(a) => commands::table1(a)?,
        Command::Oracle(OracleCommand::Nishimori(a)) => commands::oracle_nishimori(a, g)?,
        Command::Oracle(OracleCommand::FreeEnergy(a)) => commands::oracle_free_energy(a, g)?,
        Command::Fig1(a) => recipes::fig1(a, g.seed)?,
    };
    let text = output.render(cli.command.name(), &config, format)?;
    output::emit(g.out.as_deref(), &text)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(e) = err.downcast_ref::<Error>() {
        return match e {
            Error::Divergence { .. }
            | Error::Numeric(_)
            | Error::Bracket { .. }
            | Error::NonNormalizable(_)
            | Error::DegenerateChannel(_) => 3,
            Error::Io(_) | Error::Format(_) => 1,
            _ => 2,
        };
    }
    if err.downcast_ref::<std::io::Error>().is_some() {
        return 1;
    }
    2
}

fn main() -> ExitCode {
    let argv = match merge_config(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.global.threads {
        Some(t) => tensorspike::par::with_threads(t, || run(cli)),
        None => run(cli),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

//! The five subcommands. Each reads a [`RunConfig`] and writes its outputs
//! into one directory, returning the paths written.

use std::path::{Path, PathBuf};

use qmgeo::convergence::{gap_bound, gap_bound_as_printed, verify_descent_inequality, BoundParams, InstrumentedRun};
use qmgeo::flsim::{run_training, RoundMetrics};
use qmgeo::privacy::{rdp_to_dp, sweep, PrivacyParams, PrivacyReport, ScalarMechanism, SweepRow, SweepSeries};
use qmgeo::quantizer::{bin_value, clip_elementwise, klevel_output_distribution, output_distribution, quantize_vector};
use qmgeo::StreamKey;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::config::{MechanismKind, RunConfig};
use crate::error::{CliError, CliResult};
use crate::format::{eps_json, fmt_eps, fmt_f64, fmt_opt};
use crate::output::{
    write_atomic, CsvTable, SchemaTable, BOUND_SCHEMA, METRICS_SCHEMA, PMF_SCHEMA, QUANTIZED_SCHEMA,
    SWEEP_SCHEMA,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    Pmf,
    Quantize,
    Privacy,
    Simulate,
    Bound,
}

/// Flags common to every subcommand.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Invocation {
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

pub fn run(cmd: Subcommand, inv: &Invocation) -> CliResult<Vec<PathBuf>> {
    let cfg = RunConfig::load(&inv.config)?;
    let out = cfg.output_dir(inv.out.as_deref());
    match cmd {
        Subcommand::Pmf => cmd_pmf(&cfg, &out),
        Subcommand::Quantize => cmd_quantize(&cfg, inv.seed, &out),
        Subcommand::Privacy => cmd_privacy(&cfg, &out),
        Subcommand::Simulate => cmd_simulate(&cfg, inv.seed, &out),
        Subcommand::Bound => cmd_bound(&cfg, &out),
    }
}

fn json_bytes(value: &Value) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("JSON values serialize");
    s.push('\n');
    s.into_bytes()
}

/// Serializes `value` and re-inserts the epsilon-like fields in their
/// canonical form (serde_json would turn infinities into `null`).
fn with_eps_fields<T: Serialize>(value: &T, eps: &[(&str, f64)]) -> Map<String, Value> {
    let mut map = match serde_json::to_value(value).expect("serializable") {
        Value::Object(m) => m,
        _ => unreachable!("structs serialize to objects"),
    };
    for (k, v) in eps {
        map.insert((*k).to_string(), eps_json(*v));
    }
    map
}

pub fn cmd_pmf(cfg: &RunConfig, out: &Path) -> CliResult<Vec<PathBuf>> {
    let q = RunConfig::require(&cfg.quantizer, "quantizer")?;
    let block = RunConfig::require(&cfg.pmf, "pmf")?;
    let mut table = CsvTable::new(PMF_SCHEMA, &["w", "level_index", "bin_value", "mass"]);
    for &w in &block.w {
        let dist = match block.mechanism {
            MechanismKind::Qmgeo => output_distribution(w, q)?,
            MechanismKind::KLevel => klevel_output_distribution(w, q)?,
        };
        for r in 0..q.levels() {
            table.row([
                fmt_f64(w),
                r.to_string(),
                fmt_f64(bin_value(r, q)?),
                fmt_f64(dist.mass(r as i64)),
            ]);
        }
    }
    Ok(vec![write_atomic(out, "pmf.csv", &table.into_bytes())?])
}

pub fn cmd_quantize(cfg: &RunConfig, seed: Option<u64>, out: &Path) -> CliResult<Vec<PathBuf>> {
    let q = RunConfig::require(&cfg.quantizer, "quantizer")?;
    let block = RunConfig::require(&cfg.quantize, "quantize")?;
    let input = if block.clip {
        clip_elementwise(&block.values, q.w_max())
    } else {
        block.values.clone()
    };
    let key = StreamKey::new(cfg.seed(seed)).named("quantize");
    let quantized = quantize_vector(&input, q, key)?;
    let mut table = CsvTable::new(QUANTIZED_SCHEMA, &["index", "input", "clipped", "level_index", "value"]);
    for (i, ((raw, clipped), v)) in block.values.iter().zip(&input).zip(&quantized).enumerate() {
        table.row([
            i.to_string(),
            fmt_f64(*raw),
            fmt_f64(*clipped),
            v.level_index.to_string(),
            fmt_f64(v.value),
        ]);
    }
    Ok(vec![write_atomic(out, "quantized.csv", &table.into_bytes())?])
}

fn sweep_table(rows: &[SweepRow]) -> Vec<u8> {
    let mut table = CsvTable::new(SWEEP_SCHEMA, &["x", "eps_paper", "eps_oracle"]);
    for r in rows {
        table.row([
            fmt_f64(r.x),
            fmt_eps(r.eps_paper),
            r.eps_oracle.map_or_else(String::new, fmt_eps),
        ]);
    }
    table.into_bytes()
}

pub fn cmd_privacy(cfg: &RunConfig, out: &Path) -> CliResult<Vec<PathBuf>> {
    let q = RunConfig::require(&cfg.quantizer, "quantizer")?;
    let block = RunConfig::require(&cfg.privacy, "privacy")?;
    if block.alpha > 2.0 {
        return Err(CliError::Config(format!(
            "privacy.alpha = {} refused: the subsampled RDP bound is only claimed for alpha <= 2",
            block.alpha
        )));
    }
    let params = PrivacyParams::new(q.levels(), q.p(), block.d, block.kappa, block.alpha)?;
    let mech = match block.mechanism {
        MechanismKind::Qmgeo => ScalarMechanism::Qmgeo(*q),
        MechanismKind::KLevel => ScalarMechanism::KLevel(*q),
    };
    let report = PrivacyReport::build(params, &mech, block.oracle_grid)?;
    let mut map = with_eps_fields(
        &report,
        &[
            ("eps_pure_scalar", report.eps_pure_scalar),
            ("eps_pure_vector", report.eps_pure_vector),
            ("eps_rdp_scalar", report.eps_rdp_scalar),
            ("eps_rdp_vector", report.eps_rdp_vector),
            ("eps_oracle_scalar", report.eps_oracle_scalar),
            ("rdp_oracle_scalar", report.rdp_oracle_scalar),
            ("rdp_oracle_scalar_paper_literal", report.rdp_oracle_scalar_paper_literal),
        ],
    );
    if let Some(delta) = block.delta {
        let eps = rdp_to_dp(report.eps_rdp_vector, block.alpha, delta)?;
        map.insert("delta".into(), serde_json::json!(delta));
        map.insert("eps_dp_vector".into(), eps_json(eps));
    }
    map.insert("config".into(), serde_json::to_value(cfg).expect("serializable"));

    let mut written = vec![write_atomic(out, "privacy_report.json", &json_bytes(&Value::Object(map)))?];
    if !block.eps_vs_p.is_empty() {
        let rows = sweep(SweepSeries::EpsVsP, q.levels(), q.p(), &block.eps_vs_p)?;
        written.push(write_atomic(out, "sweep_eps_vs_p.csv", &sweep_table(&rows))?);
    }
    if !block.rdp_vs_alpha.is_empty() {
        let rows = sweep(SweepSeries::RdpVsAlpha, q.levels(), q.p(), &block.rdp_vs_alpha)?;
        written.push(write_atomic(out, "sweep_rdp_vs_alpha.csv", &sweep_table(&rows))?);
    }
    Ok(written)
}

/// The metrics CSV body for a run.
pub fn metrics_table(rows: &[RoundMetrics]) -> Vec<u8> {
    let mut table = CsvTable::new(
        METRICS_SCHEMA,
        &[
            "round",
            "train_loss",
            "holdout_accuracy",
            "delta_norm",
            "grad_dot_delta",
            "eps_round_pure",
            "eps_round_rdp",
            "eps_cumulative",
            "client_delta_norms",
        ],
    );
    for r in rows {
        let clients: Vec<String> = r.client_delta_norms.iter().map(|x| fmt_f64(*x)).collect();
        table.row([
            r.round.to_string(),
            fmt_f64(r.train_loss),
            fmt_opt(r.holdout_accuracy),
            fmt_f64(r.delta_norm),
            fmt_f64(r.grad_dot_delta),
            fmt_eps(r.eps_round_pure),
            fmt_eps(r.eps_round_rdp),
            fmt_eps(r.eps_cumulative),
            clients.join(";"),
        ]);
    }
    table.into_bytes()
}

pub fn cmd_simulate(cfg: &RunConfig, seed: Option<u64>, out: &Path) -> CliResult<Vec<PathBuf>> {
    let mut fl = RunConfig::require(&cfg.fl, "fl")?.clone();
    fl.master_seed = seed.or(cfg.master_seed).unwrap_or(fl.master_seed);
    let run = run_training(&fl)?;
    if let Some(bad) = run.metrics.iter().find(|r| !r.train_loss.is_finite()) {
        return Err(CliError::Numerical(format!(
            "training loss became {} at round {}",
            bad.train_loss, bad.round
        )));
    }

    let mut resolved = cfg.clone();
    resolved.master_seed = Some(fl.master_seed);
    resolved.fl = Some(fl);
    let s = &run.summary;
    let mut map = with_eps_fields(
        s,
        &[
            ("eps_round_pure", s.eps_round_pure),
            ("eps_round_rdp", s.eps_round_rdp),
            ("eps_cumulative", s.eps_cumulative),
        ],
    );
    map.insert("config".into(), serde_json::to_value(&resolved).expect("serializable"));

    Ok(vec![
        write_atomic(out, "metrics.csv", &metrics_table(&run.metrics))?,
        write_atomic(out, "summary.json", &json_bytes(&Value::Object(map)))?,
    ])
}

pub fn cmd_bound(cfg: &RunConfig, out: &Path) -> CliResult<Vec<PathBuf>> {
    let block = RunConfig::require(&cfg.bound, "bound")?;
    let f_star = block
        .f_star
        .ok_or_else(|| CliError::Config("bound.F_star is required: the bound is relative to the optimal loss".into()))?;
    let table = SchemaTable::read(&block.metrics, METRICS_SCHEMA)?;
    table.column_f64("round")?;
    let losses = table.column_f64("train_loss")?;
    let delta = table.column_f64("delta_norm")?;
    let gdd = table.column_f64("grad_dot_delta")?;
    if table.len() < 2 {
        return Err(CliError::Data(format!(
            "{}: need the initial row and at least one round",
            block.metrics.display()
        )));
    }
    let steps = table.len() - 1;
    let rounds = block.rounds.unwrap_or(steps);
    if rounds > steps {
        return Err(CliError::Config(format!("bound.T = {rounds} but the metrics hold {steps} rounds")));
    }
    let run = InstrumentedRun {
        losses: losses[..=rounds].to_vec(),
        delta_norm: delta[1..=rounds].to_vec(),
        grad_dot_delta: gdd[1..=rounds].to_vec(),
        f_star: Some(f_star),
    };
    let bp = BoundParams::new(block.smoothness, block.mu, block.eta, losses[0] - f_star, rounds)?;
    let trace = run.trace()?;
    let checks = verify_descent_inequality(&bp, &run)?;
    let bound = gap_bound(&bp, &trace)?;
    if bound.warning {
        eprintln!(
            "warning: X = {} is outside (0, 1); the recursion does not contract",
            bound.contraction
        );
    }

    let mut csv = CsvTable::new(BOUND_SCHEMA, &["round", "empirical_gap", "bound_G_t", "inequality_holds"]);
    for t in 0..=rounds {
        let holds = if t == 0 {
            String::new()
        } else {
            checks[t - 1].holds.to_string()
        };
        csv.row([t.to_string(), fmt_f64(trace.loss_gap[t]), fmt_f64(bound.values[t]), holds]);
    }
    let violations = checks.iter().filter(|c| !c.holds).count();
    let summary = serde_json::json!({
        "params": bp,
        "F_star": f_star,
        "contraction": bound.contraction,
        "warning": bound.warning,
        "violations": violations,
        "final_gap": trace.loss_gap[rounds],
        "final_bound": bound.values[rounds],
        "gap_bound_as_printed": gap_bound_as_printed(&bp, &trace)?,
        "config": cfg,
    });
    Ok(vec![
        write_atomic(out, "bound.csv", &csv.into_bytes())?,
        write_atomic(out, "bound_summary.json", &json_bytes(&summary))?,
    ])
}

//! Output files. Rates are integers in bit/s, variances use nine significant
//! digits, and every other float is written in shortest round-trip form.

use std::fs;
use std::path::Path;

use serde::Serialize;

use super::episode::EpisodeLog;
use super::experiment::{ExperimentReport, ModeCdf, ModeSummary, TradeoffRow};
use crate::agent::CurvePoint;
use crate::error::Result;

/// Column order of `episodes.csv`.
pub const EPISODE_COLUMNS: [&str; 31] = [
    "mode",
    "sensing",
    "episode",
    "seed",
    "t",
    "x",
    "v",
    "x_hat",
    "v_hat",
    "x_var",
    "v_var",
    "force",
    "eta",
    "demand_s",
    "demand_c",
    "n_s",
    "n_c",
    "range",
    "theta",
    "range_est",
    "velocity_est",
    "theta_est",
    "sigma_r",
    "sigma_theta",
    "x_var_m2",
    "xibar_sq",
    "rate",
    "rate_met",
    "x_var_met",
    "reward",
    "done",
];

fn var(v: f64) -> String {
    format!("{v:.8e}")
}

/// One row per QI of every log; `episode` is the position within `logs`
/// among logs of the same mode.
pub fn write_episodes_csv(path: &Path, logs: &[EpisodeLog]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(EPISODE_COLUMNS)?;
    let mut index = std::collections::HashMap::new();
    for log in logs {
        let episode = index.entry(log.allocator_mode).or_insert(0usize);
        for r in &log.records {
            let m = r.measurement;
            let opt = |f: fn(&crate::sensing::RadarMeasurement) -> f64| m.as_ref().map(|m| f(m).to_string()).unwrap_or_default();
            w.write_record([
                log.allocator_mode.to_string(),
                log.sensing.to_string(),
                episode.to_string(),
                log.seed.to_string(),
                r.t.to_string(),
                r.true_state.x.to_string(),
                r.true_state.v.to_string(),
                r.belief.x_hat.to_string(),
                r.belief.v_hat.to_string(),
                var(r.belief.x_var),
                var(r.belief.v_var),
                r.action.force.to_string(),
                r.action.eta.to_string(),
                r.allocation.demand_s.to_string(),
                r.allocation.demand_c.to_string(),
                r.allocation.n_s.to_string(),
                r.allocation.n_c.to_string(),
                r.range.to_string(),
                r.theta.to_string(),
                opt(|m| m.range_est),
                opt(|m| m.velocity_est),
                opt(|m| m.theta_est),
                opt(|m| m.sigma_r),
                opt(|m| m.sigma_theta),
                var(r.x_var_m2),
                var(r.xibar_sq),
                r.rate.to_string(),
                (r.rate_met as u8).to_string(),
                (r.x_var_met as u8).to_string(),
                r.reward.to_string(),
                (r.done as u8).to_string(),
            ])?;
        }
        *episode += 1;
    }
    w.flush()?;
    Ok(())
}

pub fn write_tradeoff_csv(path: &Path, rows: &[TradeoffRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["range", "n_s", "n_c", "certainty_db", "rate"])?;
    for r in rows {
        w.write_record([
            r.range.to_string(),
            r.n_s.to_string(),
            r.n_c.to_string(),
            r.certainty_db.to_string(),
            r.rate.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_cdf_csv(path: &Path, value_column: &str, cdfs: &[ModeCdf]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["mode", value_column, "cdf"])?;
    for c in cdfs {
        for p in &c.points {
            w.write_record([c.mode.to_string(), p.value.to_string(), p.cdf.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Training curve, one row per policy update.
pub fn write_curve_csv(path: &Path, curve: &[CurvePoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "env_steps",
        "episodes",
        "train_return",
        "eval_success",
        "eval_return",
        "eval_mean_eta",
        "policy_loss",
        "value_loss",
    ])?;
    for p in curve {
        w.write_record([
            p.env_steps.to_string(),
            p.episodes.to_string(),
            p.train_return.to_string(),
            p.eval_success.to_string(),
            p.eval_return.to_string(),
            p.eval_mean_eta.to_string(),
            p.policy_loss.to_string(),
            p.value_loss.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    scenario_hash: &'a str,
    sensing: super::SensingMode,
    episodes_per_mode: usize,
    modes: &'a [ModeSummary],
}

pub fn write_summary_json(path: &Path, report: &ExperimentReport) -> Result<()> {
    let file = SummaryFile {
        scenario_hash: &report.scenario_hash,
        sensing: report.sensing,
        episodes_per_mode: report.episodes_per_mode,
        modes: &report.summaries,
    };
    fs::write(path, serde_json::to_string_pretty(&file)?)?;
    Ok(())
}

/// Writes all five artifacts of an experiment into `dir`.
pub fn write_report(dir: &Path, report: &ExperimentReport) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_episodes_csv(&dir.join("episodes.csv"), &report.logs)?;
    write_summary_json(&dir.join("summary.json"), report)?;
    write_tradeoff_csv(&dir.join("tradeoff.csv"), &report.tradeoff)?;
    write_cdf_csv(&dir.join("cdf_rate.csv"), "rate", &report.rate_cdf)?;
    write_cdf_csv(&dir.join("cdf_qi.csv"), "qis_to_goal", &report.qi_cdf)?;
    Ok(())
}

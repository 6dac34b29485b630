//! Command-line front end: train, eval, inspect.

use crate::checkpoint::{self, Checkpoint};
use crate::config::{load_config, RunConfig};
use crate::error::{Error, Result};
use crate::estimator::grad_norm;
use crate::federated::{evaluate, EpochReport, EvalOutcome, Trainer};
use clap::{Parser, Subcommand};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Parser, Debug)]
#[command(
    name = "fedpg",
    about = "Federated policy-gradient training for UAV trajectory and RIS phase control"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a policy and write per-epoch reports plus checkpoints.
    Train {
        /// Path to the TOML run configuration.
        #[arg(long)]
        config: PathBuf,
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
        /// Root seed override.
        #[arg(long)]
        seed: Option<u64>,
        /// Algorithm override: fedpg_ap, fedpg_np, fedpg_fp, or svrpg.
        #[arg(long)]
        algo: Option<String>,
        /// Worker thread count (default: one per hotspot).
        #[arg(long)]
        workers: Option<usize>,
        /// Dotted-path config overrides, e.g. --set training.sigma_far=3.0.
        #[arg(long = "set")]
        set: Vec<String>,
    },
    /// Evaluate a checkpoint over freshly generated environments.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Number of independent evaluation runs.
        #[arg(long)]
        runs: Option<usize>,
        /// Evaluation seed (default: the config seed).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long = "set")]
        set: Vec<String>,
    },
    /// Print a human-readable checkpoint summary.
    Inspect {
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train {
            config,
            out,
            seed,
            algo,
            workers,
            set,
        } => cmd_train(&config, &out, seed, algo.as_deref(), workers, &set),
        Command::Eval {
            checkpoint,
            config,
            out,
            runs,
            seed,
            set,
        } => cmd_eval(&checkpoint, &config, &out, runs, seed, &set),
        Command::Inspect { checkpoint } => {
            let cp = checkpoint::load(&checkpoint)?;
            print!("{}", inspect_summary(&cp));
            Ok(())
        }
    }
}

fn resolve_config(
    config_path: &Path,
    overrides: &[String],
    seed: Option<u64>,
    algo: Option<&str>,
) -> Result<RunConfig> {
    // CLI flags become the last-applied overrides so the resolved copy
    // records them.
    let mut all = overrides.to_vec();
    if let Some(s) = seed {
        all.push(format!("seed={s}"));
    }
    if let Some(a) = algo {
        all.push(format!("training.algorithm={a}"));
    }
    load_config(config_path, &all)
}

/// Fixed-order report columns; per-node columns expand left to right by
/// node index.
pub fn report_header(nodes: usize) -> String {
    let mut h = String::from("epoch,traces_consumed");
    for n in 0..nodes {
        let _ = write!(h, ",mean_total_reward_n{n}");
    }
    h.push_str(",surrogate_loss");
    for n in 0..nodes {
        let _ = write!(h, ",grad_norm_n{n}");
    }
    h.push_str(",mean_pairwise_grad_distance,median_node");
    for n in 0..nodes {
        let _ = write!(h, ",delta_e_n{n}");
    }
    h.push_str(",inner_loop_len");
    h
}

pub fn report_row(report: &EpochReport) -> Result<String> {
    let finite = report.mean_total_reward.iter().all(|v| v.is_finite())
        && report.surrogate_loss.is_finite()
        && report.grad_norm.iter().all(|v| v.is_finite())
        && report.mean_pairwise_grad_distance.is_finite();
    if !finite {
        return Err(Error::Numeric(format!(
            "non-finite report value at epoch {}",
            report.epoch
        )));
    }
    let mut row = format!("{},{}", report.epoch, report.traces_consumed);
    for v in &report.mean_total_reward {
        let _ = write!(row, ",{v}");
    }
    let _ = write!(row, ",{}", report.surrogate_loss);
    for v in &report.grad_norm {
        let _ = write!(row, ",{v}");
    }
    let _ = write!(
        row,
        ",{},{}",
        report.mean_pairwise_grad_distance, report.median_node
    );
    for d in &report.delta_e {
        let _ = write!(row, ",{d}");
    }
    let _ = write!(row, ",{}", report.inner_loop_len);
    Ok(row)
}

pub fn cmd_train(
    config_path: &Path,
    out: &Path,
    seed: Option<u64>,
    algo: Option<&str>,
    workers: Option<usize>,
    overrides: &[String],
) -> Result<()> {
    let config = resolve_config(config_path, overrides, seed, algo)?;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("resolved.toml"), config.to_toml()?)?;

    let algorithm = config.algorithm()?;
    let template = config.template();
    let workers = workers.unwrap_or(template.hotspot_count);
    let mut trainer = Trainer::new(algorithm, template, config.hyper(), config.seed, workers)?;

    let mut report_text = report_header(trainer.nodes.len());
    report_text.push('\n');
    let every = config.training.checkpoint_every;
    while trainer.master.traces_consumed < trainer.hyper.trace_budget {
        let report = trainer.run_epoch()?;
        report_text.push_str(&report_row(&report)?);
        report_text.push('\n');
        if every > 0 && trainer.master.epoch % every == 0 {
            checkpoint::save(
                out.join(format!("checkpoint_epoch_{}.bin", report.epoch)).as_path(),
                &Checkpoint::from_trainer(&trainer),
            )?;
        }
    }
    std::fs::write(out.join("report.csv"), report_text)?;
    checkpoint::save(
        out.join("checkpoint.bin").as_path(),
        &Checkpoint::from_trainer(&trainer),
    )?;
    Ok(())
}

pub fn cmd_eval(
    checkpoint_path: &Path,
    config_path: &Path,
    out: &Path,
    runs: Option<usize>,
    seed: Option<u64>,
    overrides: &[String],
) -> Result<()> {
    let config = resolve_config(config_path, overrides, None, None)?;
    let cp = checkpoint::load(checkpoint_path)?;
    let template = config.template();
    let expected_state_dim = 3 + 4 * template.users_per_hotspot;
    if cp.spec.state_dim != expected_state_dim
        || cp.spec.ris_elements != template.ris_elements
        || cp.spec.phase_levels != template.phase_levels
    {
        return Err(Error::Checkpoint(format!(
            "architecture mismatch: checkpoint ({} state, {} elements, {} levels) vs config ({expected_state_dim}, {}, {})",
            cp.spec.state_dim,
            cp.spec.ris_elements,
            cp.spec.phase_levels,
            template.ris_elements,
            template.phase_levels
        )));
    }
    let runs = runs.unwrap_or(config.evaluation.runs);
    let seed = seed.unwrap_or(config.seed);
    let params = cp.global_params()?;
    let outcome = evaluate(
        &params,
        &template,
        &cp.spec,
        runs,
        config.evaluation.horizon,
        seed,
    )?;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("eval_runs.csv"), eval_runs_table(&outcome))?;
    std::fs::write(out.join("eval_aggregate.csv"), eval_aggregate_table(&outcome)?)?;
    Ok(())
}

pub fn eval_runs_table(outcome: &EvalOutcome) -> String {
    let mut text = String::from("run,t,rate\n");
    for (r, curve) in outcome.per_run.iter().enumerate() {
        for (t, v) in curve.iter().enumerate() {
            let _ = writeln!(text, "{r},{t},{v}");
        }
    }
    text
}

pub fn eval_aggregate_table(outcome: &EvalOutcome) -> Result<String> {
    if !outcome.mean_curve.iter().all(|v| v.is_finite())
        || !outcome.cv.iter().all(|v| v.is_finite())
        || !outcome.sd.is_finite()
    {
        return Err(Error::Numeric("non-finite evaluation aggregate".into()));
    }
    let mut text = String::from("t,mean_rate,cv,sd\n");
    for (t, (m, c)) in outcome.mean_curve.iter().zip(&outcome.cv).enumerate() {
        let _ = writeln!(text, "{t},{m},{c},{}", outcome.sd);
    }
    Ok(text)
}

pub fn inspect_summary(cp: &Checkpoint) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "checkpoint version: 1");
    let _ = writeln!(
        s,
        "architecture: state_dim={} hidden={:?} ris_elements={} phase_levels={} a_scale={}",
        cp.spec.state_dim, cp.spec.hidden, cp.spec.ris_elements, cp.spec.phase_levels, cp.spec.a_scale
    );
    let _ = writeln!(s, "seed: {}", cp.seed);
    let _ = writeln!(s, "epoch: {}", cp.epoch);
    let _ = writeln!(s, "traces consumed: {}", cp.traces_consumed);
    let _ = writeln!(s, "global param norm: {}", grad_norm(&cp.global));
    let z = cp.spec.layer_count();
    for (n, (partition, params)) in cp.nodes.iter().enumerate() {
        let _ = writeln!(
            s,
            "node {n}: e0={} delta_e={} effective_e={} param_norm={}",
            partition.e0,
            partition.delta_e,
            partition.effective(z),
            grad_norm(params)
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::EXAMPLE_CONFIG;

    fn small_overrides() -> Vec<String> {
        [
            "scenario.hotspot_count=2",
            "scenario.users_per_hotspot=2",
            "scenario.ris_elements=2",
            "scenario.phase_levels=3",
            "scenario.horizon=3",
            "training.hidden=[6]",
            "training.batch_min=2",
            "training.batch_max=2",
            "training.batch_inner=2",
            "training.inner_cap=2",
            "training.trace_budget=15",
            "evaluation.runs=2",
            "evaluation.horizon=3",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect()
    }

    fn write_config(dir: &Path) -> PathBuf {
        let path = dir.join("run.toml");
        std::fs::write(&path, EXAMPLE_CONFIG).unwrap();
        path
    }

    #[test]
    fn train_writes_artifacts_and_is_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let config = write_config(dir.path());
        let out_a = dir.path().join("a");
        let out_b = dir.path().join("b");
        cmd_train(&config, &out_a, Some(5), None, Some(1), &small_overrides()).unwrap();
        cmd_train(&config, &out_b, Some(5), None, Some(2), &small_overrides()).unwrap();
        let report_a = std::fs::read(out_a.join("report.csv")).unwrap();
        let report_b = std::fs::read(out_b.join("report.csv")).unwrap();
        assert_eq!(report_a, report_b);
        let cp_a = std::fs::read(out_a.join("checkpoint.bin")).unwrap();
        let cp_b = std::fs::read(out_b.join("checkpoint.bin")).unwrap();
        assert_eq!(cp_a, cp_b);
        assert!(out_a.join("resolved.toml").exists());
        // The report has a header and at least one epoch row.
        let text = String::from_utf8(report_a).unwrap();
        assert!(text.lines().count() >= 2);
        assert!(text.starts_with("epoch,traces_consumed,mean_total_reward_n0"));
    }

    #[test]
    fn zero_budget_writes_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let config = write_config(dir.path());
        let out = dir.path().join("out");
        let mut overrides = small_overrides();
        overrides.push("training.trace_budget=0".to_string());
        cmd_train(&config, &out, Some(5), None, Some(1), &overrides).unwrap();
        let text = std::fs::read_to_string(out.join("report.csv")).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(out.join("resolved.toml").exists());
    }

    #[test]
    fn override_recorded_in_resolved_copy() {
        let dir = tempfile::tempdir().unwrap();
        let config = write_config(dir.path());
        let out = dir.path().join("out");
        let mut overrides = small_overrides();
        overrides.push("training.sigma_far=12.5".to_string());
        overrides.push("training.trace_budget=0".to_string());
        cmd_train(&config, &out, None, None, Some(1), &overrides).unwrap();
        let resolved = std::fs::read_to_string(out.join("resolved.toml")).unwrap();
        assert!(resolved.contains("sigma_far = 12.5"));
    }

    #[test]
    fn eval_writes_tables_and_rejects_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let config = write_config(dir.path());
        let out = dir.path().join("train");
        cmd_train(&config, &out, Some(5), None, Some(1), &small_overrides()).unwrap();
        let cp_path = out.join("checkpoint.bin");
        let eval_out = dir.path().join("eval");
        cmd_eval(&cp_path, &config, &eval_out, Some(2), Some(3), &small_overrides()).unwrap();
        let runs = std::fs::read_to_string(eval_out.join("eval_runs.csv")).unwrap();
        assert!(runs.starts_with("run,t,rate"));
        // 2 runs x horizon 3 rows plus header.
        assert_eq!(runs.lines().count(), 7);
        let agg = std::fs::read_to_string(eval_out.join("eval_aggregate.csv")).unwrap();
        assert_eq!(agg.lines().count(), 4);
        // Same seed reproduces byte-identical tables.
        let eval_out2 = dir.path().join("eval2");
        cmd_eval(&cp_path, &config, &eval_out2, Some(2), Some(3), &small_overrides()).unwrap();
        assert_eq!(
            std::fs::read(eval_out.join("eval_runs.csv")).unwrap(),
            std::fs::read(eval_out2.join("eval_runs.csv")).unwrap()
        );
        // Architecture mismatch: different user count changes the state dim.
        let mut overrides = small_overrides();
        overrides.push("scenario.users_per_hotspot=3".to_string());
        let err = cmd_eval(&cp_path, &config, &eval_out, Some(1), Some(3), &overrides);
        assert!(err.is_err());
    }

    #[test]
    fn inspect_reports_fields_and_norms() {
        let dir = tempfile::tempdir().unwrap();
        let config = write_config(dir.path());
        let out = dir.path().join("train");
        cmd_train(&config, &out, Some(5), None, Some(1), &small_overrides()).unwrap();
        let cp = checkpoint::load(&out.join("checkpoint.bin")).unwrap();
        let summary = inspect_summary(&cp);
        assert!(summary.contains("epoch:"));
        assert!(summary.contains("node 0:"));
        assert!(summary.contains("node 1:"));
        // Norm matches an independent recomputation.
        let norm = grad_norm(&cp.global);
        assert!(summary.contains(&format!("global param norm: {norm}")));
    }

    #[test]
    fn fresh_init_checkpoint_inspects_cleanly() {
        let dir = tempfile::tempdir().unwrap();
        let config = write_config(dir.path());
        let out = dir.path().join("train");
        let mut overrides = small_overrides();
        overrides.push("training.trace_budget=0".to_string());
        cmd_train(&config, &out, Some(5), None, Some(1), &overrides).unwrap();
        let cp = checkpoint::load(&out.join("checkpoint.bin")).unwrap();
        assert_eq!(cp.epoch, 0);
        assert!(cp.nodes.iter().all(|(p, _)| p.delta_e == 0));
    }

    #[test]
    fn bad_schema_fails_before_compute() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.toml");
        std::fs::write(&path, "seed = 1\n[scenario]\nnope = 2\n").unwrap();
        let out = dir.path().join("out");
        assert!(cmd_train(&path, &out, None, None, Some(1), &[]).is_err());
        assert!(!out.join("report.csv").exists());
    }
}

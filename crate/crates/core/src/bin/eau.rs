use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use eau::config::Scenario;
use eau::harness::{self, Evaluator, MetricsSummary, ProgressWriter, Seeds};
use eau::learner::Trainer;
use eau::policies::PolicySpec;
use eau::qtable::QTable;

#[derive(Parser)]
#[command(
    name = "eau",
    version,
    about = "AoI/energy-aware status update simulator and learner"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Master seed; defaults to `evaluation.seed` from the scenario.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to `output.dir` from the scenario.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a Q-table and write it with its progress stream.
    Train {
        #[command(flatten)]
        common: Common,
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate policies over the configured number of runs.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Policies to evaluate (e.g. `eau`, `zero_wait`, `periodic:4`);
        /// defaults to the scenario's list.
        #[arg(long = "policy")]
        policies: Vec<String>,
        /// Trained table for `eau`; trained on the fly when absent.
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Sweep beta1 over the scenario grid for every configured policy.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Train at each horizon of the convergence grid and evaluate.
    Convergence {
        #[command(flatten)]
        common: Common,
    },
    /// Dump a per-slot trace of one evaluation run.
    Replay {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "zero_wait")]
        policy: String,
        #[arg(long)]
        table: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        run: u64,
    },
}

struct Session {
    scenario: Scenario,
    seeds: Seeds,
    out: PathBuf,
}

fn prepare(common: &Common) -> Result<Session> {
    let scenario = Scenario::load(&common.config)
        .with_context(|| format!("loading {}", common.config.display()))?;
    let seeds = Seeds::new(common.seed.unwrap_or(scenario.evaluation.seed));
    let out = common
        .out
        .clone()
        .unwrap_or_else(|| scenario.output_dir.clone());
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;

    let d = scenario.derived()?;
    eprintln!(
        "scenario {}: N={} M_max={} D={} s R={} bit/s gamma_T={} mean_snr={} P_f={:.6} E={} mJ C1={} (base {}) |SxA|={} fingerprint={:016x}",
        scenario.name,
        scenario.users(),
        scenario.max_age,
        d.slot_s,
        d.link.required_rate_bps,
        d.link.snr_threshold,
        d.link.mean_snr,
        d.link.failure_prob,
        d.energy_mj,
        d.reward_constant,
        d.reward_constant_base,
        d.state_action_pairs,
        scenario.fingerprint(),
    );
    fs::write(out.join("scenario.resolved.toml"), scenario.to_toml()?)?;
    Ok(Session {
        scenario,
        seeds,
        out,
    })
}

fn load_or_train(ctx: &Session, table: Option<&Path>) -> Result<Arc<QTable>> {
    let table = match table {
        Some(path) => QTable::load(path, ctx.scenario.fingerprint())
            .with_context(|| format!("loading {}", path.display()))?,
        None => {
            eprintln!("training {} iterations", ctx.scenario.learner.iterations);
            harness::train_table(&ctx.scenario, ctx.seeds.training(0))?
        }
    };
    Ok(Arc::new(table))
}

fn parse_policies(names: &[String], fallback: &[PolicySpec]) -> Result<Vec<PolicySpec>> {
    if names.is_empty() {
        return Ok(fallback.to_vec());
    }
    names
        .iter()
        .map(|n| n.parse::<PolicySpec>().map_err(Into::into))
        .collect()
}

fn train(common: &Common, resume: Option<&Path>) -> Result<()> {
    let ctx = prepare(common)?;
    let s = &ctx.scenario;
    let env = s.environment()?;
    let mut trainer = match resume {
        Some(path) => {
            let table = QTable::load(path, s.fingerprint())
                .with_context(|| format!("loading checkpoint {}", path.display()))?;
            if table.seed() != ctx.seeds.training(0) {
                bail!("checkpoint was trained with a different seed");
            }
            eprintln!("resuming at iteration {}", table.iterations());
            Trainer::resume(env, s.learner_params(), table)?
        }
        None => Trainer::new(
            env,
            s.learner_params(),
            s.fingerprint(),
            ctx.seeds.training(0),
        )?,
    };

    let progress_path = ctx.out.join("progress.csv");
    let mut progress = ProgressWriter::new(
        fs::File::create(&progress_path).with_context(|| progress_path.display().to_string())?,
    )?;
    let checkpoint_path = ctx.out.join("checkpoint.bin");
    harness::run_training(
        &mut trainer,
        s,
        ctx.seeds,
        |row| {
            eprintln!(
                "iter {:>12} eps {:.6} mean reward {:.4} greedy probe {:.3}",
                row.iteration, row.epsilon, row.mean_reward, row.greedy_probe
            );
            progress.write(&row)
        },
        |table| table.save(&checkpoint_path),
    )?;
    let table = trainer.into_table();
    table.save(&ctx.out.join("qtable.bin"))?;
    if checkpoint_path.exists() {
        fs::remove_file(&checkpoint_path)?;
    }
    eprintln!("wrote {}", ctx.out.join("qtable.bin").display());
    Ok(())
}

fn evaluate(common: &Common, names: &[String], table: Option<&Path>) -> Result<()> {
    let ctx = prepare(common)?;
    let s = &ctx.scenario;
    let specs = parse_policies(names, &s.evaluation.policies)?;
    let table = if specs.iter().any(PolicySpec::is_learned) {
        Some(load_or_train(&ctx, table)?)
    } else {
        None
    };
    let evaluator = Evaluator::for_scenario(s, ctx.seeds)?;
    let mut per_run = Vec::new();
    let mut summaries = Vec::new();
    for spec in specs {
        let policy = harness::instantiate(spec, table.as_ref(), s)?;
        let runs = evaluator.evaluate_runs(&policy, s.evaluation.runs);
        let summary = MetricsSummary::of(&runs);
        eprintln!(
            "{:<14} reward {:.3} ± {:.3}  aoi {:.3} s  energy {:.3} mJ",
            spec.to_string(),
            summary.reward.mean,
            summary.reward.ci95(),
            summary.aoi_s.mean,
            summary.energy_mj.mean
        );
        summaries.push((spec.to_string(), summary));
        per_run.push((spec.to_string(), runs));
    }
    harness::write_file(&ctx.out.join("evaluate.csv"), |b| {
        harness::write_summary_csv(&summaries, b)
    })?;
    harness::write_file(&ctx.out.join("evaluate_runs.csv"), |b| {
        harness::write_runs_csv(&per_run, b)
    })?;
    Ok(())
}

fn sweep(common: &Common) -> Result<()> {
    let ctx = prepare(common)?;
    let s = &ctx.scenario;
    let rows = harness::sweep_beta1(
        s,
        &s.evaluation.beta1_grid,
        &s.evaluation.policies,
        ctx.seeds,
    )?;
    harness::write_file(&ctx.out.join("sweep.csv"), |b| {
        harness::write_sweep_csv(&rows, b)
    })?;
    eprintln!(
        "wrote {} rows to {}",
        rows.len(),
        ctx.out.join("sweep.csv").display()
    );
    Ok(())
}

fn convergence(common: &Common) -> Result<()> {
    let ctx = prepare(common)?;
    let s = &ctx.scenario;
    let rows = harness::convergence_study(s, &s.evaluation.convergence_grid, ctx.seeds)?;
    harness::write_file(&ctx.out.join("convergence.csv"), |b| {
        harness::write_convergence_csv(&rows, b)
    })?;
    eprintln!(
        "wrote {} rows to {}",
        rows.len(),
        ctx.out.join("convergence.csv").display()
    );
    Ok(())
}

fn replay(common: &Common, name: &str, table: Option<&Path>, run: u64) -> Result<()> {
    let ctx = prepare(common)?;
    let s = &ctx.scenario;
    let spec: PolicySpec = name.parse()?;
    let table = if spec.is_learned() {
        Some(load_or_train(&ctx, table)?)
    } else {
        None
    };
    let policy = harness::instantiate(spec, table.as_ref(), s)?;
    let evaluator = Evaluator::for_scenario(s, ctx.seeds)?;
    let (trace, metrics) = evaluator.replay(&policy, run);
    harness::write_file(&ctx.out.join("trace.csv"), |b| {
        harness::write_trace_csv(&trace, s.users(), b)
    })?;
    eprintln!(
        "run {run}: discounted reward {:.4}, cost {:.4}",
        metrics.discounted_return, metrics.discounted_cost
    );
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train { common, resume } => train(&common, resume.as_deref()),
        Command::Evaluate {
            common,
            policies,
            table,
        } => evaluate(&common, &policies, table.as_deref()),
        Command::Sweep { common } => sweep(&common),
        Command::Convergence { common } => convergence(&common),
        Command::Replay {
            common,
            policy,
            table,
            run,
        } => replay(&common, &policy, table.as_deref(), run),
    }
}

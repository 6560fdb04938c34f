use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hilp::config::ExperimentConfig;
use hilp::harness::{
    cmd_ablate, cmd_gen, cmd_run, cmd_theory, cmd_train_repr, cmd_train_skills,
};
use hilp::report::EvalReport;
use hilp::{Error, Result};

#[derive(Parser)]
#[command(name = "hilp", version, about = "Hilbert foundation policies on small deterministic MDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment TOML file, or the name of a shipped preset.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to `runs/<name>`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run only this seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the offline datasets.
    Gen(Common),
    /// Train the state embeddings.
    TrainRepr(Common),
    /// Train the latent-conditioned skills.
    TrainSkills(Common),
    /// Evaluate every configured task (same as `run`).
    Eval(Common),
    /// Sweep the `[ablate]` axis.
    Ablate(Common),
    /// Check the greedy-optimality theorem on trained embeddings.
    Theory(Common),
    /// Run every stage and task.
    Run(Common),
}

fn summarize(report: &EvalReport) {
    for a in &report.aggregates {
        println!(
            "{:<14} {:<16} r={} n={:<6} success={:.3} (iqm {:.3}) return={:.4} oracle={:.4}",
            a.task, a.prompt_mode, a.recursions, a.n, a.success_mean, a.success_iqm, a.return_mean,
            a.oracle_return_mean
        );
    }
    for m in &report.seed_metrics {
        println!("seed {} D={} eps_e={:.4} coverage={:.3}", m.seed, m.dim, m.eps_e, m.coverage);
    }
    let checks = report.theory.len();
    if checks > 0 {
        let holds = report.theory.iter().filter(|t| t.condition_holds).count();
        println!(
            "theory: {checks} embeddings checked, condition holds on {holds}, {} defects",
            report.theory_defects()
        );
    }
}

fn execute(cmd: Command) -> Result<()> {
    let (common, which) = match cmd {
        Command::Gen(c) => (c, "gen"),
        Command::TrainRepr(c) => (c, "train-repr"),
        Command::TrainSkills(c) => (c, "train-skills"),
        Command::Eval(c) | Command::Run(c) => (c, "run"),
        Command::Ablate(c) => (c, "ablate"),
        Command::Theory(c) => (c, "theory"),
    };
    if let Some(jobs) = common.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    }
    let config = ExperimentConfig::load(&common.config)?;
    let out = common
        .out
        .unwrap_or_else(|| Path::new("runs").join(&config.name));
    std::fs::create_dir_all(&out).map_err(|e| Error::Io {
        path: out.clone(),
        source: e,
    })?;
    match which {
        "gen" => print_paths(cmd_gen(config, &out, common.seed)?),
        "train-repr" => print_paths(cmd_train_repr(config, &out, common.seed)?),
        "train-skills" => print_paths(cmd_train_skills(config, &out, common.seed)?),
        "ablate" => summarize(&cmd_ablate(config, Some(&out), common.seed)?),
        "theory" => {
            for t in cmd_theory(config, Some(&out), common.seed)? {
                println!(
                    "seed {} {:<13} eps_e={:.4} eps_d={} condition={} local={}/{} violations={}",
                    t.seed,
                    t.label,
                    t.eps_e_global,
                    t.eps_d_global.map_or("n/a".into(), |v| format!("{v:.4}")),
                    t.condition_holds,
                    t.local_condition_pairs,
                    t.pairs_checked,
                    t.violations
                );
            }
        }
        _ => summarize(&cmd_run(config, Some(&out), common.seed)?),
    }
    Ok(())
}

fn print_paths(paths: Vec<PathBuf>) {
    for p in paths {
        println!("{}", p.display());
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_theory_defect() {
                ExitCode::from(3)
            } else if e.is_validation() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

//! Full pipeline from a shipped preset: cached dataset, embedding and skill
//! stages, every configured task, and the aggregated report.

use hilp::config::{ExperimentConfig, Task};
use hilp::harness::cmd_run;
use hilp::Result;

pub fn run() -> Result<()> {
    let mut config = ExperimentConfig::preset("chain5-theory")?;
    config.eval.tasks = vec![Task::Gcrl, Task::Zeroshot, Task::Theory];
    config.repr.steps = 20_000;
    config.eval.perturbations = 3;

    let out = std::env::temp_dir().join(format!("hilp-example-run-{}", std::process::id()));
    let report = cmd_run(config, Some(&out), None)?;
    for a in &report.aggregates {
        println!("{:<12} {:<12} n={:<4} success={:.3} return={:.4} oracle={:.4}", a.task, a.prompt_mode, a.n, a.success_mean, a.return_mean, a.oracle_return_mean);
    }
    for m in &report.seed_metrics {
        println!("seed {} eps_e={:.3} coverage={:.2}", m.seed, m.eps_e, m.coverage);
    }
    println!("theory defects: {}; reports in {}", report.theory_defects(), out.display());
    std::fs::remove_dir_all(&out).ok();
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}

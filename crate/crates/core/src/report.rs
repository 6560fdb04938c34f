//! Evaluation rows, aggregates and the on-disk report formats.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const CSV_HEADER: &str = "env,task,prompt_mode,recursions,seed,success,steps,return,oracle_return";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub env: String,
    pub task: String,
    pub prompt_mode: String,
    pub recursions: usize,
    pub seed: u64,
    pub success: bool,
    pub steps: Option<usize>,
    #[serde(rename = "return")]
    pub ret: f64,
    pub oracle_return: f64,
}

impl EvalRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.env,
            self.task,
            self.prompt_mode,
            self.recursions,
            self.seed,
            self.success as u8,
            self.steps.map_or(String::new(), |s| s.to_string()),
            self.ret,
            self.oracle_return
        )
    }
}

/// Mean of the middle half: drops `floor(n / 4)` values from each end of
/// the sorted sample. `None` for an empty sample.
pub fn iqm(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let cut = sorted.len() / 4;
    let middle = &sorted[cut..sorted.len() - cut];
    Some(middle.iter().sum::<f64>() / middle.len() as f64)
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub task: String,
    pub prompt_mode: String,
    pub recursions: usize,
    pub n: usize,
    pub success_mean: f64,
    pub success_iqm: f64,
    pub return_mean: f64,
    pub return_iqm: f64,
    pub oracle_return_mean: f64,
}

/// Groups rows by `(task, prompt_mode, recursions)` in sorted key order.
pub fn aggregate(rows: &[EvalRow]) -> Vec<Aggregate> {
    let mut groups: BTreeMap<(String, String, usize), Vec<&EvalRow>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.task.clone(), r.prompt_mode.clone(), r.recursions))
            .or_default()
            .push(r);
    }
    groups
        .into_iter()
        .map(|((task, prompt_mode, recursions), rows)| {
            let success: Vec<f64> = rows.iter().map(|r| r.success as u8 as f64).collect();
            let returns: Vec<f64> = rows.iter().map(|r| r.ret).collect();
            let oracle: Vec<f64> = rows.iter().map(|r| r.oracle_return).collect();
            Aggregate {
                task,
                prompt_mode,
                recursions,
                n: rows.len(),
                success_mean: mean(&success).unwrap_or(0.0),
                success_iqm: iqm(&success).unwrap_or(0.0),
                return_mean: mean(&returns).unwrap_or(0.0),
                return_iqm: iqm(&returns).unwrap_or(0.0),
                oracle_return_mean: mean(&oracle).unwrap_or(0.0),
            }
        })
        .collect()
}

/// Per-seed training diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub seed: u64,
    pub dim: usize,
    /// Against exact step counts.
    pub eps_e: f64,
    /// Against the discounted training target.
    pub eps_e_target: f64,
    pub coverage: f64,
}

/// One theorem check, on the trained embedding or a perturbed copy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheorySummary {
    pub seed: u64,
    pub label: String,
    pub regime: String,
    pub eps_e_global: f64,
    pub eps_d_global: Option<f64>,
    pub condition_holds: bool,
    pub pairs_checked: usize,
    pub local_condition_pairs: usize,
    pub violations: usize,
    pub feasibility_tested: usize,
    pub feasibility_passed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub name: String,
    pub env: String,
    pub config_hash: String,
    pub version: String,
    pub seeds: Vec<u64>,
    pub rows: Vec<EvalRow>,
    pub aggregates: Vec<Aggregate>,
    pub seed_metrics: Vec<SeedMetrics>,
    pub theory: Vec<TheorySummary>,
}

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.csv_line());
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn theory_defects(&self) -> usize {
        self.theory
            .iter()
            .map(|t| t.violations + t.feasibility_tested - t.feasibility_passed)
            .sum()
    }

    /// Aggregate for one `(task, prompt_mode, recursions)` group.
    pub fn find(&self, task: &str, prompt_mode: &str, recursions: usize) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.task == task && a.prompt_mode == prompt_mode && a.recursions == recursions)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iqm_matches_hand_sorted_list() {
        // sorted: 1 2 3 4 5 6 7 100 -> drop two from each end -> 3 4 5 6
        let v = [7.0, 1.0, 100.0, 3.0, 5.0, 2.0, 6.0, 4.0];
        assert_eq!(iqm(&v), Some(4.5));
        assert_eq!(iqm(&[2.0, 4.0, 9.0]), Some(5.0));
        assert_eq!(iqm(&[]), None);
    }

    #[test]
    fn aggregates_recompute_from_rows() {
        let row = |seed, success: bool, ret| EvalRow {
            env: "chain5".into(),
            task: "gcrl".into(),
            prompt_mode: "goal".into(),
            recursions: 0,
            seed,
            success,
            steps: success.then_some(3),
            ret,
            oracle_return: 1.0,
        };
        let rows = vec![row(0, true, 1.0), row(1, false, 0.0), row(2, true, 0.5)];
        let agg = aggregate(&rows);
        assert_eq!(agg.len(), 1);
        assert_eq!(agg[0].n, 3);
        assert!((agg[0].success_mean - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(agg[0].return_mean, 0.5);
        assert_eq!(rows[1].csv_line(), "chain5,gcrl,goal,0,1,0,,0,1");
    }
}

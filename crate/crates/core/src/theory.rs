//! Checks of the directional-greedy optimality results on concrete
//! `(mdp, embedding)` pairs.
//!
//! For a pair `(s, g)` the optimal latent point is
//! `z'*(s, g) = phi(s) + (phi(g) - phi(s)) / ||phi(g) - phi(s)||` and the
//! greedy policy `pi_hat` moves to the neighbour within unit latent distance
//! that goes furthest toward `phi(g)`. Whenever `4 eps_e + eps_d < 1` (local
//! or global), `pi_hat` must decrease the true step count by exactly one;
//! a counterexample is a defect.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{check_state, Mdp};
use crate::oracle::DistanceMatrix;
use crate::repr::{dot, norm, sq_dist, Embedding};

/// Vector-equality tolerance for the feasibility premise.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Tolerance on the feasibility conclusion. A neighbour matching `z'*` up to
/// `FEASIBILITY_TOL` only forces the argmax to within
/// `sqrt(2 * FEASIBILITY_TOL)` of `z'*`.
pub fn feasibility_conclusion_tol() -> f64 {
    FEASIBILITY_TOL + (2.0 * FEASIBILITY_TOL).sqrt()
}

/// Point at unit latent distance from `phi(s)` toward `phi(g)`.
pub fn zprime_star(emb: &Embedding, s: usize, g: usize) -> Result<Vec<f64>> {
    let from = emb.row(s);
    let diff: Vec<f64> = emb.row(g).iter().zip(from).map(|(a, b)| a - b).collect();
    let len = norm(&diff);
    if len <= emb.norm_epsilon {
        return Err(Error::Degenerate(format!(
            "states {s} and {g} coincide in latent space"
        )));
    }
    Ok(from.iter().zip(&diff).map(|(f, d)| f + d / len).collect())
}

/// Greedy directional action, restricted to successors with
/// `||phi(s) - phi(s')|| <= 1`. `None` when no action is feasible.
/// Ties go to the lowest action index.
pub fn hat_policy(mdp: &Mdp, emb: &Embedding, s: usize, g: usize) -> Result<Option<usize>> {
    check_state(mdp, s)?;
    check_state(mdp, g)?;
    let from = emb.row(s);
    let diff: Vec<f64> = emb.row(g).iter().zip(from).map(|(a, b)| a - b).collect();
    let len = norm(&diff);
    if len <= emb.norm_epsilon {
        return Err(Error::Degenerate(format!(
            "states {s} and {g} coincide in latent space"
        )));
    }
    let dir: Vec<f64> = diff.iter().map(|d| d / len).collect();
    let mut best: Option<(usize, f64)> = None;
    for (a, &next) in mdp.successors(s).iter().enumerate() {
        let to = emb.row(next);
        if sq_dist(from, to).sqrt() > 1.0 {
            continue;
        }
        let step: Vec<f64> = to.iter().zip(from).map(|(t, f)| t - f).collect();
        let score = dot(&step, &dir);
        if best.is_none_or(|(_, b)| score > b) {
            best = Some((a, score));
        }
    }
    Ok(best.map(|(a, _)| a))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub s: usize,
    pub g: usize,
    pub distance: u32,
    /// Error over `N(s) ∪ {s}` against `g`.
    pub local_eps_e: f64,
    /// `None` when the pair is infeasible or degenerate.
    pub local_eps_d: Option<f64>,
    pub action: Option<usize>,
    pub condition: bool,
    pub greedy_optimal: bool,
    pub degenerate: bool,
}

impl PairRecord {
    pub fn is_violation(&self) -> bool {
        self.condition && !self.greedy_optimal
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonD {
    /// `None` when no pair has a feasible greedy move.
    pub global: Option<f64>,
    pub per_pair: Vec<((usize, usize), f64)>,
    pub infeasible: usize,
    pub degenerate: usize,
}

/// `sup ||z'*(s, g) - phi(p(s, pi_hat(s, g)))||` over reachable pairs
/// `s != g`; infeasible and degenerate pairs are counted separately.
pub fn epsilon_d(mdp: &Mdp, emb: &Embedding, dist: &DistanceMatrix) -> Result<EpsilonD> {
    check_shapes(mdp, emb, dist)?;
    let n = mdp.n_states();
    let mut out = EpsilonD {
        global: None,
        per_pair: Vec::new(),
        infeasible: 0,
        degenerate: 0,
    };
    for s in 0..n {
        for g in 0..n {
            if s == g || dist.get(s, g).is_none() {
                continue;
            }
            match pair_eps_d(mdp, emb, s, g)? {
                PairMove::Degenerate => out.degenerate += 1,
                PairMove::Infeasible => out.infeasible += 1,
                PairMove::Move { eps_d, .. } => {
                    out.global = Some(out.global.map_or(eps_d, |m| m.max(eps_d)));
                    out.per_pair.push(((s, g), eps_d));
                }
            }
        }
    }
    Ok(out)
}

enum PairMove {
    Degenerate,
    Infeasible,
    Move { action: usize, eps_d: f64 },
}

fn pair_eps_d(mdp: &Mdp, emb: &Embedding, s: usize, g: usize) -> Result<PairMove> {
    let star = match zprime_star(emb, s, g) {
        Ok(z) => z,
        Err(Error::Degenerate(_)) => return Ok(PairMove::Degenerate),
        Err(e) => return Err(e),
    };
    Ok(match hat_policy(mdp, emb, s, g)? {
        None => PairMove::Infeasible,
        Some(action) => PairMove::Move {
            action,
            eps_d: sq_dist(&star, emb.row(mdp.step(s, action))).sqrt(),
        },
    })
}

fn check_shapes(mdp: &Mdp, emb: &Embedding, dist: &DistanceMatrix) -> Result<()> {
    if emb.n_states() != mdp.n_states() || dist.n_states() != mdp.n_states() {
        return Err(Error::InvalidArgument(format!(
            "state counts differ: mdp {}, embedding {}, distances {}",
            mdp.n_states(),
            emb.n_states(),
            dist.n_states()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeasibilityCounts {
    /// Pairs whose premise held.
    pub tested: usize,
    pub passed: usize,
}

/// Whenever some feasible neighbour sits at `z'*(s, g)`, the greedy move
/// must land there too.
pub fn check_feasibility_theorem(mdp: &Mdp, emb: &Embedding) -> Result<FeasibilityCounts> {
    if emb.n_states() != mdp.n_states() {
        return Err(Error::InvalidArgument("embedding and MDP differ in size".into()));
    }
    let n = mdp.n_states();
    let per_state: Vec<FeasibilityCounts> = (0..n)
        .into_par_iter()
        .map(|s| {
            let mut c = FeasibilityCounts::default();
            for g in 0..n {
                if s != g {
                    if let Some(ok) = feasibility_pair(mdp, emb, s, g)? {
                        c.tested += 1;
                        c.passed += ok as usize;
                    }
                }
            }
            Ok(c)
        })
        .collect::<Result<_>>()?;
    Ok(per_state.iter().fold(FeasibilityCounts::default(), |a, c| {
        FeasibilityCounts {
            tested: a.tested + c.tested,
            passed: a.passed + c.passed,
        }
    }))
}

/// `None` when the premise fails, otherwise whether the conclusion held.
fn feasibility_pair(mdp: &Mdp, emb: &Embedding, s: usize, g: usize) -> Result<Option<bool>> {
    let star = match zprime_star(emb, s, g) {
        Ok(z) => z,
        Err(Error::Degenerate(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    let from = emb.row(s);
    let premise = mdp.successors(s).iter().any(|&next| {
        let p = emb.row(next);
        sq_dist(from, p).sqrt() <= 1.0 && sq_dist(p, &star).sqrt() <= FEASIBILITY_TOL
    });
    if !premise {
        return Ok(None);
    }
    Ok(Some(match hat_policy(mdp, emb, s, g)? {
        Some(a) => sq_dist(emb.row(mdp.step(s, a)), &star).sqrt() <= feasibility_conclusion_tol(),
        None => false,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    /// `exact` for embeddings trained on undiscounted targets,
    /// `approximate` otherwise.
    pub regime: String,
    pub eps_e_global: f64,
    pub eps_d_global: Option<f64>,
    pub condition_holds: bool,
    pub pairs_checked: usize,
    pub local_condition_pairs: usize,
    pub greedy_optimal_pairs: usize,
    pub violations: usize,
    pub infeasible_pairs: usize,
    pub degenerate_pairs: usize,
    pub unreachable_pairs: usize,
    pub feasibility_checks: FeasibilityCounts,
    pub per_pair: Vec<PairRecord>,
}

impl TheoryReport {
    pub fn has_valid_pairs(&self) -> bool {
        self.eps_d_global.is_some()
    }

    pub fn defects(&self) -> usize {
        self.violations + (self.feasibility_checks.tested - self.feasibility_checks.passed)
    }

    /// Fails with [`Error::TheoryDefect`] on any counterexample.
    pub fn ensure_no_defects(&self) -> Result<()> {
        if self.defects() == 0 {
            return Ok(());
        }
        let first = self.per_pair.iter().find(|p| p.is_violation());
        Err(Error::TheoryDefect(match first {
            Some(p) => format!(
                "{} violations (first: s={} g={} action={:?}), {} feasibility failures",
                self.violations,
                p.s,
                p.g,
                p.action,
                self.feasibility_checks.tested - self.feasibility_checks.passed
            ),
            None => format!(
                "{} feasibility failures",
                self.feasibility_checks.tested - self.feasibility_checks.passed
            ),
        }))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn per_pair_csv(&self) -> String {
        let mut out = String::from(
            "s,g,distance,local_eps_e,local_eps_d,action,condition,greedy_optimal,degenerate\n",
        );
        for p in &self.per_pair {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                p.s,
                p.g,
                p.distance,
                p.local_eps_e,
                p.local_eps_d.map_or("infeasible".to_string(), |v| v.to_string()),
                p.action.map_or("none".to_string(), |a| a.to_string()),
                p.condition,
                p.greedy_optimal,
                p.degenerate
            ));
        }
        out
    }
}

/// Evaluates the local and global conditions for every reachable pair and
/// tests greedy optimality against the exact step counts in `dist`.
pub fn check_theorem(mdp: &Mdp, emb: &Embedding, dist: &DistanceMatrix) -> Result<TheoryReport> {
    check_shapes(mdp, emb, dist)?;
    let n = mdp.n_states();
    let err = |a: usize, g: usize| -> Option<f64> {
        dist.get(a, g).map(|d| (emb.raw_distance(a, g) - d as f64).abs())
    };
    let rows: Vec<Vec<PairRecord>> = (0..n)
        .into_par_iter()
        .map(|s| {
            let mut out = Vec::new();
            for g in 0..n {
                let Some(d) = dist.get(s, g) else { continue };
                if s == g {
                    continue;
                }
                let local_eps_e = std::iter::once(s)
                    .chain(mdp.successors(s).iter().copied())
                    .filter_map(|a| err(a, g))
                    .fold(0.0f64, f64::max);
                let mut rec = PairRecord {
                    s,
                    g,
                    distance: d,
                    local_eps_e,
                    local_eps_d: None,
                    action: None,
                    condition: false,
                    greedy_optimal: false,
                    degenerate: false,
                };
                match pair_eps_d(mdp, emb, s, g)? {
                    PairMove::Degenerate => rec.degenerate = true,
                    PairMove::Infeasible => {}
                    PairMove::Move { action, eps_d } => {
                        rec.local_eps_d = Some(eps_d);
                        rec.action = Some(action);
                        rec.condition = 4.0 * local_eps_e + eps_d < 1.0;
                        rec.greedy_optimal =
                            dist.get(mdp.step(s, action), g) == Some(d - 1);
                    }
                }
                out.push(rec);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let per_pair: Vec<PairRecord> = rows.into_iter().flatten().collect();

    let mut eps_e_global: f64 = 0.0;
    for s in 0..n {
        for g in 0..n {
            if let Some(e) = err(s, g) {
                eps_e_global = eps_e_global.max(e);
            }
        }
    }
    let eps_d_global = per_pair
        .iter()
        .filter_map(|p| p.local_eps_d)
        .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))));
    let infeasible_pairs = per_pair
        .iter()
        .filter(|p| !p.degenerate && p.local_eps_d.is_none())
        .count();
    let degenerate_pairs = per_pair.iter().filter(|p| p.degenerate).count();
    let condition_holds = match eps_d_global {
        Some(eps_d) => {
            infeasible_pairs == 0 && degenerate_pairs == 0 && 4.0 * eps_e_global + eps_d < 1.0
        }
        None => false,
    };
    let greedy_optimal_pairs = per_pair.iter().filter(|p| p.greedy_optimal).count();
    let mut violations = per_pair.iter().filter(|p| p.is_violation()).count();
    if condition_holds {
        // The global condition claims every pair; local checks already
        // cover this, but count any miss that slipped past them.
        violations += per_pair
            .iter()
            .filter(|p| !p.greedy_optimal && !p.condition)
            .count();
    }
    Ok(TheoryReport {
        regime: "exact".into(),
        eps_e_global,
        eps_d_global,
        condition_holds,
        pairs_checked: per_pair.len(),
        local_condition_pairs: per_pair.iter().filter(|p| p.condition).count(),
        greedy_optimal_pairs,
        violations,
        infeasible_pairs,
        degenerate_pairs,
        unreachable_pairs: dist.unreachable_pairs(),
        feasibility_checks: check_feasibility_theorem(mdp, emb)?,
        per_pair,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{build_chain, LEFT, RIGHT};
    use crate::oracle::temporal_distances;

    fn chain_phi(n: usize) -> Embedding {
        Embedding::from_points(&(0..n).map(|i| vec![i as f64, 0.0]).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn zprime_star_examples() {
        let e = Embedding::from_points(&[vec![0.0, 0.0], vec![0.0, 2.0], vec![0.0, 0.5]]).unwrap();
        assert_eq!(zprime_star(&e, 0, 1).unwrap(), vec![0.0, 1.0]);
        assert_eq!(zprime_star(&e, 0, 2).unwrap(), vec![0.0, 1.0]);
        assert!(matches!(zprime_star(&e, 1, 1), Err(Error::Degenerate(_))));
    }

    #[test]
    fn hat_policy_examples() {
        let m = build_chain(5).unwrap();
        let e = chain_phi(5);
        assert_eq!(hat_policy(&m, &e, 1, 4).unwrap(), Some(RIGHT));
        assert_eq!(hat_policy(&m, &e, 3, 4).unwrap(), Some(RIGHT));
        assert_eq!(hat_policy(&m, &e, 3, 2).unwrap(), Some(LEFT));
    }

    #[test]
    fn exact_chain_satisfies_everything() {
        let m = build_chain(5).unwrap();
        let e = chain_phi(5);
        let dist = temporal_distances(&m);
        let r = check_theorem(&m, &e, &dist).unwrap();
        assert_eq!(r.eps_e_global, 0.0);
        assert_eq!(r.eps_d_global, Some(0.0));
        assert!(r.condition_holds);
        assert_eq!(r.pairs_checked, 20);
        assert_eq!(r.greedy_optimal_pairs, 20);
        assert_eq!(r.violations, 0);
        assert_eq!(r.feasibility_checks.tested, 20);
        assert_eq!(r.feasibility_checks.passed, 20);
        r.ensure_no_defects().unwrap();
    }

    #[test]
    fn zero_embedding_has_no_valid_pairs() {
        let m = build_chain(5).unwrap();
        let e = Embedding::from_points(&vec![vec![0.0, 0.0]; 5]).unwrap();
        let r = check_theorem(&m, &e, &temporal_distances(&m)).unwrap();
        assert!(!r.has_valid_pairs());
        assert_eq!(r.degenerate_pairs, 20);
        assert!(!r.condition_holds);
        let d = epsilon_d(&m, &e, &temporal_distances(&m)).unwrap();
        assert_eq!(d.global, None);
        assert_eq!(d.degenerate, 20);
    }

    #[test]
    fn report_serializes() {
        let m = build_chain(3).unwrap();
        let r = check_theorem(&m, &chain_phi(3), &temporal_distances(&m)).unwrap();
        let json = r.to_json().unwrap();
        let back: TheoryReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
        assert_eq!(r.per_pair_csv().lines().count(), 7);
    }
}

use serde::{Deserialize, Serialize};

use crate::collect::{explore_full, par_map, Tally};
use crate::env::{Env, EnvKind, TaskSpec};
use crate::trajectory::{PlanMode, Trajectory};
use crate::{Error, Reward, Scalar};
use crate::policy::PolicyParams;

/// Aggregate of greedy episodes over a task set. All zeros when `count` is 0.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalSummary {
    pub count: usize,
    pub avg_reward: f64,
    pub success_rate: f64,
    pub invalid_action_rate: f64,
    pub avg_turns: f64,
}

impl EvalSummary {
    pub fn from_trajectories(ts: &[Trajectory]) -> Self {
        if ts.is_empty() {
            return EvalSummary::default();
        }
        let n = ts.len();
        let total: Reward = ts.iter().map(|t| t.reward).sum();
        let avg = total / Reward::from_integer(n as i64);
        let frac = |k: usize| k as f64 / n as f64;
        EvalSummary {
            count: n,
            avg_reward: *avg.numer() as f64 / *avg.denom() as f64,
            success_rate: frac(ts.iter().filter(|t| t.reward == Reward::from_integer(1)).count()),
            invalid_action_rate: frac(ts.iter().filter(|t| t.invalid_actions() > 0).count()),
            avg_turns: frac(ts.iter().map(|t| t.rounds.len()).sum()),
        }
    }
}

/// Greedy episodes on every task, plan generated first in plan modes.
pub fn evaluate<T: Scalar>(
    params: &PolicyParams<T>,
    env: &Env,
    tasks: &[TaskSpec],
    mode: PlanMode,
) -> Result<(EvalSummary, Vec<Trajectory>), Error> {
    let runs = par_map(tasks, |s| explore_full(params, env, s, mode, 0.0))?;
    let ts: Vec<Trajectory> = runs.into_iter().map(|e| e.trajectory).collect();
    Ok((EvalSummary::from_trajectories(&ts), ts))
}

/// One line of `metrics.csv`. Iteration 0 is the supervised stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub iteration: u32,
    pub env: EnvKind,
    pub plan_mode: PlanMode,
    pub avg_reward: f64,
    pub success_rate: f64,
    pub invalid_action_rate: f64,
    pub avg_turns: f64,
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
}

impl MetricsRow {
    pub fn new(iteration: u32, env: EnvKind, plan_mode: PlanMode, eval: &EvalSummary, tally: Tally) -> Self {
        MetricsRow {
            iteration,
            env,
            plan_mode,
            avg_reward: eval.avg_reward,
            success_rate: eval.success_rate,
            invalid_action_rate: eval.invalid_action_rate,
            avg_turns: eval.avg_turns,
            wins: tally.wins,
            losses: tally.losses,
            ties: tally.ties,
        }
    }
}

pub fn write_metrics_csv(path: &std::path::Path, rows: &[MetricsRow]) -> Result<(), Error> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_metrics_csv(path: &std::path::Path) -> Result<Vec<MetricsRow>, Error> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Row with the highest average reward; the earliest wins ties.
pub fn best_row(rows: &[MetricsRow]) -> Option<&MetricsRow> {
    rows.iter()
        .fold(None, |best: Option<&MetricsRow>, r| match best {
            Some(b) if b.avg_reward >= r.avg_reward => Some(b),
            _ => Some(r),
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::TaskSet;
    use crate::harness::expert::{build_vocab, synthesize_experts};
    use crate::policy::FeatureSpec;
    use std::sync::Arc;

    #[test]
    fn empty_set_is_zero() {
        assert_eq!(EvalSummary::from_trajectories(&[]), EvalSummary::default());
    }

    #[test]
    fn expert_trajectories_summary() {
        let env = Env::bundled();
        let tasks = TaskSet::bundled(EnvKind::Household);
        let demos = synthesize_experts(&env, &tasks.heldout).unwrap();
        let ts: Vec<Trajectory> = demos.iter().map(|d| d.trajectory(PlanMode::None)).collect();
        let s = EvalSummary::from_trajectories(&ts);
        assert_eq!((s.avg_reward, s.success_rate, s.invalid_action_rate), (1.0, 1.0, 0.0));
        let mean = demos.iter().map(|d| d.rounds.len()).sum::<usize>() as f64 / demos.len() as f64;
        assert_eq!(s.avg_turns, mean);
    }

    #[test]
    fn uniform_params_fail_household() {
        let env = Env::bundled();
        let tasks = TaskSet::bundled(EnvKind::Household);
        let demos = synthesize_experts(&env, &tasks.train).unwrap();
        let vocab = Arc::new(build_vocab(&env, EnvKind::Household, &demos));
        let p = PolicyParams::<f64>::zeros(vocab, FeatureSpec::default());
        let (s, ts) = evaluate(&p, &env, &tasks.heldout, PlanMode::None).unwrap();
        assert_eq!(s.avg_reward, 0.0);
        assert_eq!(ts.len(), tasks.heldout.len());
        assert!(s.avg_turns <= 20.0);
    }

    #[test]
    fn csv_round_trip_and_best() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let mk = |i, r| MetricsRow::new(
            i,
            EnvKind::Shop,
            PlanMode::Pcode,
            &EvalSummary { count: 3, avg_reward: r, ..Default::default() },
            Tally::default(),
        );
        let rows = vec![mk(0, 0.25), mk(1, 0.5), mk(2, 0.5)];
        write_metrics_csv(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(
            "iteration,env,plan_mode,avg_reward,success_rate,invalid_action_rate,avg_turns,wins,losses,ties\n"
        ));
        assert_eq!(read_metrics_csv(&path).unwrap(), rows);
        assert_eq!(best_row(&rows).unwrap().iteration, 1);
    }
}

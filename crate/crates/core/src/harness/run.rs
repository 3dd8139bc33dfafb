use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::eval::{evaluate, write_metrics_csv, EvalSummary, MetricsRow};
use super::expert::{build_vocab, synthesize_experts, ExpertDemo};
use crate::collect::{
    build_follow_pairs, build_plan_pairs, compare_outcomes, explore_from_round1, explore_full, par_map, win_loss_tally,
    Comparison, ExpertEntry, FollowPair, FollowSettings, PlanPair, Skip, Tally,
};
use crate::env::{Env, TaskSet, TaskSpec, Worlds};
use crate::optimize::{
    follow_pair_sequences, plan_pair_sequences, pgpo_step, sft_loss, sft_sequence, LossFlags, OptimState,
    PairSequences,
};
use crate::policy::{PolicyError, ScoredSequence, Vocab};
use crate::trajectory::{read_jsonl, PlanMode, Trajectory};
use crate::{Error, Policy};

/// Environment, task split, expert demonstrations and vocabulary for one run.
#[derive(Debug, Clone)]
pub struct Lab {
    pub config: RunConfig,
    pub env: Env,
    pub heldout: Vec<TaskSpec>,
    pub experts: Vec<ExpertDemo>,
    pub vocab: Arc<Vocab>,
}

impl Lab {
    pub fn prepare(config: &RunConfig) -> Result<Lab, Error> {
        config.validate()?;
        let kind = config.env;
        let mut worlds = Worlds::bundled();
        if let Some(path) = &config.world {
            worlds = worlds.with_override(kind, path)?;
        }
        let env = Env::new(worlds);
        let tasks = match &config.tasks {
            Some(path) => TaskSet::load(path)?,
            None => TaskSet::bundled(kind),
        };
        let fit = |specs: Vec<TaskSpec>| -> Result<Vec<TaskSpec>, Error> {
            specs
                .into_iter()
                .map(|s| {
                    if s.env_kind != kind {
                        return Err(Error::Config(format!("task {} is {}, run is {kind}", s.id, s.env_kind)));
                    }
                    Ok(match config.max_turns {
                        Some(m) => s.with_max_turns(m),
                        None => s,
                    })
                })
                .collect()
        };
        let (train, heldout) = (fit(tasks.train)?, fit(tasks.heldout)?);

        let experts = match &config.expert_data {
            Some(path) => {
                if !path.exists() {
                    return Err(Error::MissingExpertData(path.display().to_string()));
                }
                let ts: Vec<Trajectory> = read_jsonl(path)?;
                ts.iter().map(ExpertDemo::from_trajectory).collect::<Result<Vec<_>, _>>()?
            }
            None => synthesize_experts(&env, &train)?,
        };
        if experts.is_empty() {
            return Err(Error::MissingExpertData(format!("no solvable {kind} training task")));
        }
        let mut lexicon = experts.clone();
        lexicon.extend(synthesize_experts(&env, &heldout)?);
        let vocab = Arc::new(build_vocab(&env, kind, &lexicon));
        Ok(Lab {
            config: config.clone(),
            env,
            heldout,
            experts,
            vocab,
        })
    }

    pub fn mode(&self) -> PlanMode {
        self.config.plan_mode()
    }

    pub fn initial_params(&self) -> Policy {
        Policy::zeros(self.vocab.clone(), self.config.feature_spec())
    }

    /// Seed for the plan-following estimate of one task; expert and agent share it.
    fn follow_settings(&self, spec_seed: u64) -> FollowSettings {
        FollowSettings {
            samples: self.config.mc_samples,
            temperature: self.config.score_temperature,
            seed: self.config.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ spec_seed.rotate_left(17),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SftReport {
    /// Full-batch loss before training.
    pub initial_loss: f64,
    /// Full-batch loss after each epoch.
    pub epoch_losses: Vec<f64>,
}

fn epoch_order(len: usize, seed: u64, salt: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ salt.wrapping_mul(0xD1B5_4A32_D192_ED03)));
    order
}

/// Supervised training on the expert demonstrations in the configured plan mode.
pub fn run_sft(lab: &Lab) -> Result<(Policy, SftReport), Error> {
    let cfg = &lab.config;
    let params = lab.initial_params();
    let seqs: Vec<ScoredSequence> = lab
        .experts
        .iter()
        .map(|d| sft_sequence(&params, &d.trajectory(lab.mode()), lab.mode()))
        .collect::<Result<_, PolicyError>>()?;
    let mut state = OptimState::new(params, cfg.beta, cfg.sft_learning_rate);
    state.momentum = cfg.momentum;
    let initial_loss = sft_loss(&state.params, &seqs).0;
    let batch = cfg.sft_batch_size.unwrap_or(seqs.len()).max(1);
    let mut epoch_losses = Vec::new();
    for epoch in 0..cfg.sft_epochs {
        let order = epoch_order(seqs.len(), cfg.seed, u64::from(epoch));
        for chunk in order.chunks(batch) {
            let batch: Vec<ScoredSequence> = chunk.iter().map(|&i| seqs[i].clone()).collect();
            let (_, grad) = sft_loss(&state.params, &batch);
            state.descend(grad);
        }
        epoch_losses.push(sft_loss(&state.params, &seqs).0);
    }
    Ok((
        state.params,
        SftReport {
            initial_loss,
            epoch_losses,
        },
    ))
}

/// Parameters carried between iterations, with the frozen scorer and the
/// experts' precomputed rewards.
#[derive(Debug, Clone)]
pub struct RunState {
    pub params: Policy,
    pub scorer: Policy,
    pub experts: Vec<ExpertEntry>,
    /// Preference steps taken so far.
    pub step: u64,
}

impl RunState {
    /// Freezes `base` as the scorer and scores the experts' plan-following reward with it.
    pub fn new(lab: &Lab, base: Policy) -> Result<Self, Error> {
        let mode = lab.mode();
        let experts = par_map(&lab.experts, |d| {
            ExpertEntry::new(d.trajectory(mode), &base, &lab.env, lab.follow_settings(d.spec.seed))
        })?;
        Ok(RunState {
            scorer: base.clone(),
            params: base,
            experts,
            step: 0,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub iteration: u32,
    pub step: u64,
    pub l_p: f64,
    pub l_f: f64,
    pub l_s: f64,
    pub total: f64,
    pub beta: f64,
    pub lr: f64,
}

/// Everything one iteration produced.
#[derive(Debug, Clone)]
pub struct IterationOutput {
    pub row: MetricsRow,
    pub eval: EvalSummary,
    pub dp: Vec<PlanPair>,
    pub df: Vec<FollowPair>,
    pub skips: Vec<Skip>,
    pub comparisons: Vec<Comparison>,
    pub losses: Vec<LossRow>,
    /// Flags actually used; `None` when both datasets were empty.
    pub flags: Option<LossFlags>,
    pub explorations: Vec<Trajectory>,
    pub evaluations: Vec<Trajectory>,
}

/// Flags for this iteration's data: a term runs only when its dataset is non-empty.
pub fn effective_flags(requested: LossFlags, dp_len: usize, df_len: usize) -> Option<LossFlags> {
    let flags = LossFlags {
        lp: requested.lp && dp_len > 0,
        lf: requested.lf && df_len > 0,
        ls: requested.ls && dp_len > 0,
        anchor_follow_winners: requested.anchor_follow_winners && df_len > 0,
    };
    (flags.lp || flags.lf || flags.ls).then_some(flags)
}

fn cycle_chunk(items: &[PairSequences], order: &[usize], batch: usize, k: usize) -> Vec<PairSequences> {
    if items.is_empty() {
        return Vec::new();
    }
    let chunks = items.len().div_ceil(batch);
    let start = (k % chunks) * batch;
    order[start..(start + batch).min(items.len())].iter().map(|&i| items[i].clone()).collect()
}

/// Explore, build both datasets, optimize, then evaluate on the held-out tasks.
pub fn run_iteration(lab: &Lab, state: RunState, iteration: u32) -> Result<(RunState, IterationOutput), Error> {
    let cfg = &lab.config;
    let mode = lab.mode();
    let base = &state.params;
    let specs: Vec<TaskSpec> = state.experts.iter().map(|e| e.trajectory.spec()).collect();

    let (explored, followed) = rayon::join(
        || par_map(&specs, |s| explore_full(base, &lab.env, s, mode, cfg.explore_temperature)),
        || {
            par_map(&state.experts, |e| {
                let follow = lab.follow_settings(e.trajectory.seed);
                explore_from_round1(base, &state.scorer, &lab.env, e, cfg.explore_temperature, follow)
            })
        },
    );
    let explored = explored?;
    let mut skips = Vec::new();
    let mut follow_runs = Vec::new();
    for f in followed? {
        match f {
            Ok(run) => follow_runs.push(run),
            Err(skip) => skips.push(skip),
        }
    }

    let comparisons = compare_outcomes(&state.experts, &explored);
    let tally: Tally = win_loss_tally(&comparisons);
    let (dp, dp_skips) = build_plan_pairs(&state.experts, &explored);
    let (df, df_skips) = build_follow_pairs(&state.experts, &follow_runs);
    skips.extend(dp_skips);
    skips.extend(df_skips);

    let dp_seqs: Vec<PairSequences> =
        dp.iter().map(|p| plan_pair_sequences(base, p)).collect::<Result<_, PolicyError>>()?;
    let df_seqs: Vec<PairSequences> =
        df.iter().map(|p| follow_pair_sequences(base, p)).collect::<Result<_, PolicyError>>()?;

    let flags = effective_flags(cfg.loss_flags(), dp_seqs.len(), df_seqs.len());
    let mut losses = Vec::new();
    let mut step = state.step;
    let mut params = base.clone();
    if let Some(flags) = flags {
        let mut opt = OptimState::new(base.clone(), cfg.beta, cfg.po_learning_rate);
        opt.momentum = cfg.momentum;
        let dp_used: &[PairSequences] = if flags.lp || flags.ls { &dp_seqs } else { &[] };
        let df_used: &[PairSequences] = if flags.lf || flags.anchor_follow_winners { &df_seqs } else { &[] };
        let batch = cfg.po_batch_size.unwrap_or(dp_used.len().max(df_used.len())).max(1);
        let steps = dp_used.len().div_ceil(batch).max(df_used.len().div_ceil(batch));
        for epoch in 0..cfg.po_epochs {
            let salt = (u64::from(iteration) << 32) | u64::from(epoch);
            let dp_order = epoch_order(dp_used.len(), cfg.seed, salt);
            let df_order = epoch_order(df_used.len(), cfg.seed, !salt);
            for k in 0..steps {
                let dp_batch = cycle_chunk(dp_used, &dp_order, batch, k);
                let df_batch = cycle_chunk(df_used, &df_order, batch, k);
                let (next, b) = pgpo_step(&opt, &dp_batch, &df_batch, flags)?;
                opt = next;
                step += 1;
                losses.push(LossRow {
                    iteration,
                    step,
                    l_p: b.l_p,
                    l_f: b.l_f,
                    l_s: b.l_s,
                    total: b.total,
                    beta: cfg.beta,
                    lr: cfg.po_learning_rate,
                });
            }
        }
        params = opt.params;
    }

    let (eval, evaluations) = evaluate(&params, &lab.env, &lab.heldout, mode)?;
    let row = MetricsRow::new(iteration, cfg.env, mode, &eval, tally);
    let explorations = explored
        .into_iter()
        .map(|e| e.trajectory)
        .chain(follow_runs.into_iter().map(|f| f.trajectory))
        .collect();
    let next = RunState {
        params,
        scorer: state.scorer,
        experts: state.experts,
        step,
    };
    Ok((
        next,
        IterationOutput {
            row,
            eval,
            dp,
            df,
            skips,
            comparisons,
            losses,
            flags,
            explorations,
            evaluations,
        },
    ))
}

#[derive(Serialize)]
struct Tagged<'a, T: Serialize> {
    iteration: u32,
    #[serde(flatten)]
    item: &'a T,
}

#[derive(Serialize)]
struct RoleTagged<'a> {
    iteration: u32,
    role: &'a str,
    #[serde(flatten)]
    trajectory: &'a Trajectory,
}

/// Single writer for every run artifact.
struct Sink {
    dir: PathBuf,
    losses: csv::Writer<File>,
    jsonl: Vec<(&'static str, BufWriter<File>)>,
}

const JSONL_FILES: [&str; 5] = ["dp.jsonl", "df.jsonl", "skips.jsonl", "trajectories.jsonl", "sft.jsonl"];

impl Sink {
    fn create(dir: &Path) -> Result<Self, Error> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let open = |name: &str| -> Result<File, Error> {
            let p = dir.join(name);
            File::create(&p).map_err(|e| Error::io(&p, e))
        };
        let jsonl = JSONL_FILES
            .iter()
            .map(|&n| Ok((n, BufWriter::new(open(n)?))))
            .collect::<Result<_, Error>>()?;
        Ok(Sink {
            dir: dir.to_path_buf(),
            losses: csv::Writer::from_writer(open("losses.csv")?),
            jsonl,
        })
    }

    fn line<T: Serialize>(&mut self, file: &str, item: &T) -> Result<(), Error> {
        let (_, w) = self.jsonl.iter_mut().find(|(n, _)| *n == file).expect("known output file");
        serde_json::to_writer(&mut *w, item)?;
        w.write_all(b"\n").map_err(|e| Error::io(&self.dir.join(file), e))
    }

    fn trajectories(&mut self, iteration: u32, role: &str, ts: &[Trajectory]) -> Result<(), Error> {
        for t in ts {
            self.line("trajectories.jsonl", &RoleTagged { iteration, role, trajectory: t })?;
        }
        Ok(())
    }

    fn iteration(&mut self, out: &IterationOutput) -> Result<(), Error> {
        let it = out.row.iteration;
        for p in &out.dp {
            self.line("dp.jsonl", &Tagged { iteration: it, item: p })?;
        }
        for p in &out.df {
            self.line("df.jsonl", &Tagged { iteration: it, item: p })?;
        }
        for s in &out.skips {
            self.line("skips.jsonl", &Tagged { iteration: it, item: s })?;
        }
        for l in &out.losses {
            self.losses.serialize(l)?;
        }
        self.trajectories(it, "explore", &out.explorations)?;
        self.trajectories(it, "eval", &out.evaluations)
    }

    fn finish(mut self) -> Result<(), Error> {
        self.losses.flush().map_err(|e| Error::io(&self.dir.join("losses.csv"), e))?;
        for (name, w) in &mut self.jsonl {
            w.flush().map_err(|e| Error::io(&self.dir.join(*name), e))?;
        }
        Ok(())
    }
}

/// Result of a full run; files are under `dir`.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub sft: SftReport,
    pub rows: Vec<MetricsRow>,
    pub params: Policy,
}

/// Supervised stage, expert scoring, then `iterations` rounds of exploration and
/// preference optimization. Writes metrics, losses, datasets and trajectories.
pub fn run(config: &RunConfig) -> Result<RunSummary, Error> {
    let lab = Lab::prepare(config)?;
    let dir = config.out_dir.clone();
    let mut sink = Sink::create(&dir)?;
    let cfg_path = dir.join("config.json");
    std::fs::write(&cfg_path, serde_json::to_string_pretty(config)? + "\n").map_err(|e| Error::io(&cfg_path, e))?;

    let mode = lab.mode();
    for d in &lab.experts {
        sink.line("sft.jsonl", &d.sft_record(mode))?;
    }
    let (base, sft) = run_sft(&lab)?;
    let (eval0, evals0) = evaluate(&base, &lab.env, &lab.heldout, mode)?;
    let mut rows = vec![MetricsRow::new(0, config.env, mode, &eval0, Tally::default())];
    let metrics_path = dir.join("metrics.csv");
    write_metrics_csv(&metrics_path, &rows)?;

    let mut state = RunState::new(&lab, base)?;
    let experts: Vec<Trajectory> = state.experts.iter().map(|e| e.trajectory.clone()).collect();
    sink.trajectories(0, "expert", &experts)?;
    sink.trajectories(0, "eval", &evals0)?;

    for iteration in 1..=config.iterations {
        let (next, out) = run_iteration(&lab, state, iteration)?;
        state = next;
        sink.iteration(&out)?;
        rows.push(out.row);
        write_metrics_csv(&metrics_path, &rows)?;
    }
    sink.finish()?;
    if config.save_params {
        let p = dir.join("params.json");
        std::fs::write(&p, serde_json::to_string(&state.params)?).map_err(|e| Error::io(&p, e))?;
    }
    Ok(RunSummary {
        dir,
        sft,
        rows,
        params: state.params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_follow_data() {
        let all = LossFlags::default();
        assert_eq!(effective_flags(all, 0, 0), None);
        let f = effective_flags(all, 0, 3).unwrap();
        assert!(!f.lp && f.lf && !f.ls);
        let f = effective_flags(LossFlags { lf: false, ..all }, 2, 3).unwrap();
        assert!(f.lp && !f.lf && f.ls);
    }

    #[test]
    fn chunks_cycle() {
        let items: Vec<PairSequences> = (0..5)
            .map(|_| PairSequences {
                chosen: ScoredSequence::default(),
                rejected: ScoredSequence::default(),
            })
            .collect();
        let order: Vec<usize> = (0..5).collect();
        assert_eq!(cycle_chunk(&items, &order, 2, 0).len(), 2);
        assert_eq!(cycle_chunk(&items, &order, 2, 2).len(), 1);
        assert_eq!(cycle_chunk(&items, &order, 2, 3).len(), 2);
        assert!(cycle_chunk(&[], &[], 2, 1).is_empty());
    }
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use pgpo::distill::{
    distill_external_batch, distill_offline_with_summary, verify_corpus, DistillRequest, LlmClientConfig, ReActRecord,
};
use pgpo::env::{EnvKind, TaskSet, TaskSpec};
use pgpo::harness::{
    best_row, evaluate, gradient_suite, read_metrics_csv, run, run_sft, synthesize_experts, write_metrics_csv, Lab,
    MetricsRow, RunConfig,
};
use pgpo::plan::render_plan;
use pgpo::trajectory::{read_jsonl, replay, write_jsonl, PlanMode, Trajectory};
use pgpo::Policy;

#[derive(Parser)]
#[command(name = "pgpo", version, about = "Plan-guided preference optimization for text agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Distill plans from ReAct records (JSONL) and verify the corpus.
    Distill(DistillArgs),
    /// Write oracle expert demonstrations for a task set.
    Experts(ExpertsArgs),
    /// Supervised stage only; writes metrics.csv with iteration 0.
    Sft(RunArgs),
    /// Supervised stage followed by the configured number of iterations.
    Run(RunArgs),
    /// Greedy evaluation of saved parameters on the held-out tasks.
    Eval(EvalArgs),
    /// Finite-difference check of every loss gradient.
    Gradcheck(GradcheckArgs),
    /// Print a metrics file and its best iteration.
    Metrics(MetricsArgs),
    /// Re-execute trajectories and report any divergence.
    Replay(ReplayArgs),
}

#[derive(Args)]
struct Overrides {
    /// TOML or JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    env: Option<EnvKind>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    iterations: Option<u32>,
    #[arg(long)]
    mc_samples: Option<u32>,
    #[arg(long)]
    plan_mode: Option<PlanMode>,
    #[arg(long)]
    no_lf: bool,
    #[arg(long)]
    no_ls: bool,
    /// World definition for the selected environment.
    #[arg(long)]
    world: Option<PathBuf>,
    #[arg(long)]
    tasks: Option<PathBuf>,
    /// Expert trajectories (JSONL); synthesized when omitted.
    #[arg(long)]
    expert_data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Overrides {
    fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.env {
            c.env = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.beta {
            c.beta = v;
        }
        if let Some(v) = self.iterations {
            c.iterations = v;
        }
        if let Some(v) = self.mc_samples {
            c.mc_samples = v;
        }
        if let Some(m) = self.plan_mode {
            c.set_plan_mode(m);
        }
        c.enable_lf &= !self.no_lf;
        c.enable_ls &= !self.no_ls;
        for (slot, v) in [(&mut c.world, &self.world), (&mut c.tasks, &self.tasks), (&mut c.expert_data, &self.expert_data)] {
            if v.is_some() {
                slot.clone_from(v);
            }
        }
        if let Some(v) = &self.out {
            c.out_dir.clone_from(v);
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    overrides: Overrides,
    /// Also write the final parameters to params.json.
    #[arg(long)]
    save_params: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    overrides: Overrides,
    /// Parameters written by `run --save-params` or `sft --save-params`.
    #[arg(long)]
    params: PathBuf,
}

#[derive(Args)]
struct DistillArgs {
    /// ReAct records, one JSON object per line.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "household")]
    env: EnvKind,
    /// Use the LLM endpoint from PGPO_LLM_ENDPOINT instead of the rule-based distiller.
    #[arg(long)]
    external: bool,
}

#[derive(Args)]
struct ExpertsArgs {
    #[arg(long, default_value = "household")]
    env: EnvKind,
    /// train, heldout or all.
    #[arg(long, default_value = "train")]
    split: String,
    /// Write full trajectories instead of ReAct records.
    #[arg(long)]
    trajectories: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value = "household")]
    env: EnvKind,
    #[arg(long, default_value_t = 5)]
    draws: u64,
    #[arg(long, default_value_t = 20)]
    coordinates: usize,
    #[arg(long, default_value_t = 1e-5)]
    tolerance: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct MetricsArgs {
    /// metrics.csv, or a run directory containing one.
    path: PathBuf,
}

#[derive(Args)]
struct ReplayArgs {
    /// Trajectory JSONL, e.g. a run's trajectories.jsonl.
    input: PathBuf,
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode> {
    match command {
        Command::Distill(a) => distill(a),
        Command::Experts(a) => experts(a),
        Command::Sft(a) => sft(a),
        Command::Run(a) => run_cmd(a),
        Command::Eval(a) => eval(a),
        Command::Gradcheck(a) => gradcheck(a),
        Command::Metrics(a) => metrics(a),
        Command::Replay(a) => replay_cmd(a),
    }
}

#[derive(Serialize)]
struct PlanLine<'a> {
    task: &'a str,
    plan: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    nl_plan: Option<String>,
}

fn distill(a: DistillArgs) -> Result<ExitCode> {
    let records: Vec<ReActRecord> = read_jsonl(&a.input)?;
    if records.is_empty() {
        bail!("{}: no records", a.input.display());
    }
    let requests: Vec<DistillRequest> = records.iter().map(|r| DistillRequest::from_record(a.env, r)).collect();
    let (plans, summaries) = if a.external {
        let cfg = LlmClientConfig::from_env().context("PGPO_LLM_ENDPOINT is not set")?;
        let demo = distill_offline_with_summary(&requests[0])?;
        let demos = vec![(requests[0].task.clone(), render_plan(&demo.plan))];
        let with_demo: Vec<DistillRequest> = requests
            .iter()
            .map(|r| DistillRequest { demonstrations: demos.clone(), ..r.clone() })
            .collect();
        let plans = distill_external_batch(&with_demo, &cfg).into_iter().collect::<Result<Vec<_>, _>>()?;
        let n = plans.len();
        (plans, vec![None; n])
    } else {
        let distilled = requests.iter().map(distill_offline_with_summary).collect::<Result<Vec<_>, _>>()?;
        distilled.into_iter().map(|d| (d.plan, Some(d.nl_plan))).unzip()
    };
    let lines: Vec<PlanLine> = records
        .iter()
        .zip(&plans)
        .zip(summaries)
        .map(|((r, p), nl)| PlanLine { task: r.task(), plan: render_plan(p), nl_plan: nl })
        .collect();
    write_jsonl(&a.out, &lines)?;
    let pairs: Vec<_> = records.into_iter().zip(plans).collect();
    let summary = verify_corpus(&pairs);
    println!("plans: {}  verified: {:.3}", pairs.len(), summary.pass_rate);
    for f in summary.failures() {
        println!("  #{}: format {} inconsistent {:?}", f.index, f.format.is_clean(), f.inconsistent_entities);
    }
    Ok(if summary.failures().next().is_none() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn experts(a: ExpertsArgs) -> Result<ExitCode> {
    let set = TaskSet::bundled(a.env);
    let specs: Vec<TaskSpec> = match a.split.as_str() {
        "train" => set.train,
        "heldout" => set.heldout,
        "all" => set.train.into_iter().chain(set.heldout).collect(),
        other => bail!("unknown split `{other}` (expected train|heldout|all)"),
    };
    let env = pgpo::env::Env::bundled();
    let demos = synthesize_experts(&env, &specs)?;
    if a.trajectories {
        let ts: Vec<Trajectory> = demos.iter().map(|d| d.trajectory(PlanMode::None)).collect();
        write_jsonl(&a.out, &ts)?;
    } else {
        let rs: Vec<ReActRecord> = demos.iter().map(|d| d.record()).collect();
        write_jsonl(&a.out, &rs)?;
    }
    println!("wrote {} of {} tasks to {}", demos.len(), specs.len(), a.out.display());
    Ok(ExitCode::SUCCESS)
}

fn print_rows(rows: &[MetricsRow]) {
    println!("iteration  avg_reward  success  invalid  turns  wins/losses/ties");
    for r in rows {
        println!(
            "{:>9}  {:>10.4}  {:>7.3}  {:>7.3}  {:>5.2}  {}/{}/{}",
            r.iteration, r.avg_reward, r.success_rate, r.invalid_action_rate, r.avg_turns, r.wins, r.losses, r.ties
        );
    }
    if let Some(b) = best_row(rows) {
        println!("best: iteration {} avg_reward {:.4}", b.iteration, b.avg_reward);
    }
}

fn sft(a: RunArgs) -> Result<ExitCode> {
    let cfg = a.overrides.resolve()?;
    let lab = Lab::prepare(&cfg)?;
    let (params, report) = run_sft(&lab)?;
    let (summary, _) = evaluate(&params, &lab.env, &lab.heldout, lab.mode())?;
    let row = MetricsRow::new(0, cfg.env, lab.mode(), &summary, Default::default());
    std::fs::create_dir_all(&cfg.out_dir).with_context(|| cfg.out_dir.display().to_string())?;
    write_metrics_csv(&cfg.out_dir.join("metrics.csv"), std::slice::from_ref(&row))?;
    if a.save_params || cfg.save_params {
        save(&cfg.out_dir.join("params.json"), &params)?;
    }
    println!("sft loss {:.4} -> {:?}", report.initial_loss, report.epoch_losses);
    print_rows(&[row]);
    Ok(ExitCode::SUCCESS)
}

fn save(path: &Path, params: &Policy) -> Result<()> {
    std::fs::write(path, serde_json::to_string(params)?).with_context(|| path.display().to_string())
}

fn run_cmd(a: RunArgs) -> Result<ExitCode> {
    let mut cfg = a.overrides.resolve()?;
    cfg.save_params |= a.save_params;
    let summary = run(&cfg)?;
    print_rows(&summary.rows);
    println!("outputs in {}", summary.dir.display());
    Ok(ExitCode::SUCCESS)
}

fn eval(a: EvalArgs) -> Result<ExitCode> {
    let cfg = a.overrides.resolve()?;
    let lab = Lab::prepare(&cfg)?;
    let text = std::fs::read_to_string(&a.params).with_context(|| a.params.display().to_string())?;
    let params: Policy = serde_json::from_str(&text)?;
    let (summary, _) = evaluate(&params, &lab.env, &lab.heldout, lab.mode())?;
    println!(
        "tasks {}  avg_reward {:.4}  success {:.3}  invalid {:.3}  turns {:.2}",
        summary.count, summary.avg_reward, summary.success_rate, summary.invalid_action_rate, summary.avg_turns
    );
    Ok(ExitCode::SUCCESS)
}

fn gradcheck(a: GradcheckArgs) -> Result<ExitCode> {
    let entries = gradient_suite(a.env, a.draws, a.coordinates, a.tolerance, a.seed)?;
    let mut ok = true;
    for e in &entries {
        ok &= e.report.passed;
        println!(
            "{} {:<13} draw {}  max rel error {:.2e}",
            if e.report.passed { "PASS" } else { "FAIL" },
            e.loss,
            e.draw,
            e.report.max_rel_error
        );
    }
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn metrics(a: MetricsArgs) -> Result<ExitCode> {
    let path = if a.path.is_dir() { a.path.join("metrics.csv") } else { a.path };
    let rows = read_metrics_csv(&path)?;
    print_rows(&rows);
    Ok(ExitCode::SUCCESS)
}

fn replay_cmd(a: ReplayArgs) -> Result<ExitCode> {
    let ts: Vec<Trajectory> = read_jsonl(&a.input)?;
    let report = replay(&pgpo::env::Env::bundled(), &ts);
    println!("trajectories {}  mismatches {}", report.trajectories, report.mismatches.len());
    for m in &report.mismatches {
        println!("  {m}");
    }
    Ok(if report.mismatches.is_empty() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use certsearch::config::ExperimentConfig;
use certsearch::experiments;
use certsearch::io::{self, JsonlWriter, Provenance};
use certsearch::model::relaxation::compile;
use certsearch::model::sdp;
use certsearch::{dump, AppError, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "certsearch",
    version,
    about = "Certified ground-energy bounds from marginal relaxations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Bound for one constraint set.
    Solve(Common),
    /// Search the constraint space with one algorithm.
    Optimize(Common),
    /// First-visit counts of rl, mc and bfs on the triplet ring.
    Benchmark(Common),
    /// Canonical patterns and the optimum across a field grid.
    Scan(Common),
    /// Warm versus cold start convergence.
    Transfer(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Replaces the seed list with this single seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, short)]
    verbose: bool,
}

impl Common {
    fn load(&self) -> Result<(ExperimentConfig, PathBuf)> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(s) = self.seed {
            cfg.search.seeds = vec![s];
        }
        let out = self
            .out
            .clone()
            .or_else(|| cfg.output.dir.clone())
            .unwrap_or_else(|| PathBuf::from("out"));
        std::fs::create_dir_all(&out).map_err(|e| AppError::io(format!("creating {}", out.display()), e))?;
        Ok((cfg, out))
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| AppError::io(format!("writing {}", path.display()), e))
}

fn say(verbose: bool, msg: impl FnOnce() -> String) {
    if verbose {
        eprintln!("{}", msg());
    }
}

fn solve(c: &Common) -> Result<()> {
    let (cfg, out) = c.load()?;
    let report = experiments::run_solve(&cfg)?;
    println!(
        "beta = {:.10}  p = {}  status = {:?}  certified = {}",
        report.beta, report.p, report.status, report.dual_certified
    );
    if let Some(e0) = report.exact_ground_energy {
        println!("exact ground energy = {e0:.10}");
    }
    write_json(&out.join("solve.json"), &report)?;

    // The same problem again with the iteration log kept, for inspection.
    let h = cfg.model.build()?;
    let opts = cfg.relaxation.options()?;
    let compiled = compile(&h, &cfg.constraint_set()?, &opts)?;
    let mut solver = opts.solver_options();
    solver.trace = true;
    let sol = sdp::solve(&compiled.problem, &solver)?;
    io::write_csv(&out.join("trace.csv"), &sol.trace)?;
    let path = out.join("problem.sdp");
    std::fs::write(&path, dump::dump_to_string(&compiled.problem))
        .map_err(|e| AppError::io(format!("writing {}", path.display()), e))?;
    say(c.verbose, || {
        format!("{} iterations, outputs in {}", sol.iterations, out.display())
    });
    Ok(())
}

fn optimize(c: &Common) -> Result<()> {
    let (cfg, out) = c.load()?;
    let init = match &cfg.output.init_weights {
        Some(p) => Some(io::load_weights(p)?.1),
        None => None,
    };
    let reports = JsonlWriter::create(&out.join("optimize.jsonl"))?;
    for &seed in &cfg.search.seeds {
        let run = experiments::run_optimize(&cfg, seed, init.clone())?;
        let r = &run.report;
        println!(
            "seed {seed}: {} beta = {:.10} p = {} reward = {:.4} ({} states)",
            r.best_state, r.best_beta, r.best_p, r.best_reward, r.distinct_states
        );
        reports.append(r)?;
        let visits = JsonlWriter::create(&out.join(format!("visits_{seed}.jsonl")))?;
        for v in &run.visits {
            visits.append(v)?;
        }
        visits.flush()?;
        if let Some(agent) = &run.agent {
            let steps = JsonlWriter::create(&out.join(format!("trajectory_{seed}.jsonl")))?;
            for s in &run.trajectory {
                steps.append(s)?;
            }
            steps.flush()?;
            let curve: Vec<EvalRow> = run
                .eval_rewards
                .iter()
                .enumerate()
                .map(|(i, &reward)| EvalRow { episode: i + 1, reward })
                .collect();
            io::write_csv(&out.join(format!("eval_{seed}.csv")), &curve)?;
            let provenance = Provenance {
                model: format!("{:?}", cfg.model.model),
                n: r.n,
                budget: r.budget,
                seed,
                episodes: run.eval_rewards.len(),
            };
            io::save_weights(&out.join(format!("weights_{seed}.bin")), agent, provenance)?;
        }
        say(c.verbose, || format!("seed {seed} took {:.2}s", r.wall_time_s));
    }
    reports.flush()
}

#[derive(serde::Serialize)]
struct EvalRow {
    episode: usize,
    reward: f64,
}

fn benchmark(c: &Common) -> Result<()> {
    let (cfg, out) = c.load()?;
    let sink = JsonlWriter::create(&out.join("benchmark.jsonl"))?;
    let (records, summary) = experiments::run_benchmark(&cfg, Some(&sink))?;
    sink.flush()?;
    io::write_csv(&out.join("benchmark_summary.csv"), &summary)?;
    for s in &summary {
        println!(
            "{:>3} n={:<3} reached {}/{}  mean {:.1}  median {:.1}",
            s.algorithm.to_string(),
            s.n,
            s.reached,
            s.runs,
            s.mean_new_states,
            s.median_new_states
        );
    }
    let failed = records.iter().filter(|r| r.error.is_some()).count();
    say(c.verbose, || format!("{} runs, {failed} failed", records.len()));
    Ok(())
}

fn scan(c: &Common) -> Result<()> {
    let (cfg, out) = c.load()?;
    let rows = experiments::run_scan(&cfg)?;
    io::write_csv(&out.join("scan.csv"), &rows)?;
    for r in rows.iter().filter(|r| r.label == "optimum") {
        println!("B/J = {:<6} {} beta = {:.8} p = {}", r.b_over_j, r.state, r.beta, r.p);
    }
    say(c.verbose, || {
        format!("{} rows written to {}", rows.len(), out.display())
    });
    Ok(())
}

fn transfer(c: &Common) -> Result<()> {
    let (cfg, out) = c.load()?;
    let (rows, runs) = experiments::run_transfer(&cfg)?;
    io::write_csv(&out.join("transfer.csv"), &rows)?;
    let sink = JsonlWriter::create(&out.join("transfer_runs.jsonl"))?;
    for r in &runs {
        sink.append(r)?;
    }
    sink.flush()?;
    for r in &rows {
        println!(
            "B/J {} -> {}: t_TL/t_0 = {:.3} ({} seeds, {} unconverged)",
            r.source, r.target, r.ratio, r.seeds, r.unconverged
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve(c) => solve(c),
        Command::Optimize(c) => optimize(c),
        Command::Benchmark(c) => benchmark(c),
        Command::Scan(c) => scan(c),
        Command::Transfer(c) => transfer(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

//! Command-line front end: validate, preprocess, and solve instances;
//! run the exhaustive oracle; reduce DIMACS formulas; generate instance
//! families; fuzz the solver against the oracle; minimize instances;
//! summarize campaign logs.
//!
//! File arguments accept `-` for stdin. Exit codes: 0 success, 1 usage or
//! I/O failure, 2 validation failure or a kernel-missed-path violation,
//! 3 a kernel-kept-dead-instance disagreement.

use clap::{Args, Parser, Subcommand, ValueEnum};
use msp_core::format::{from_json, to_json, LoadedInstance, Provenance, Route};
use msp_core::generators::{
    gen_fn_mu, gen_pigeonhole, gen_random_ksat, gen_random_msp, MspGenParams, RNG_ALGORITHM,
};
use msp_core::graph::MultiStageGraph;
use msp_core::harness::{
    classify, minimize_msp, run_campaign, AgreementClass, CampaignSummary, VerdictRecord,
};
use msp_core::kernel::{zh_solve, Decision, KernelError, Mode, ZhOptions};
use msp_core::oracle::{sigma_path_exists, OracleBudget, OracleDecision};
use msp_core::reduction::{emit_dimacs, parse_dimacs, reduce_full, reduce_plain, split_to_3cnf};
use std::io::{Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "msp",
    version,
    about = "Labeled multi-stage graphs: polynomial sigma-path kernel, exhaustive oracle, SAT reductions, differential fuzzing"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check an instance against the structural and label rules.
    Validate(ValidateArgs),
    /// Run label preprocessing and re-emit the instance.
    Preprocess(InputArgs),
    /// Decide sigma-path existence with the polynomial kernel.
    Solve(SolveArgs),
    /// Decide sigma-path existence by exhaustive search.
    Oracle(OracleArgs),
    /// Reduce a DIMACS CNF formula to an instance.
    Reduce(ReduceArgs),
    /// Generate formulas and instances.
    #[command(subcommand)]
    Gen(GenCmd),
    /// Run a differential campaign: kernel vs oracle on generated
    /// instances.
    Fuzz(FuzzArgs),
    /// Shrink an instance while a predicate keeps holding.
    Minimize(MinimizeArgs),
    /// Summarize a campaign record log.
    Report(ReportArgs),
}

#[derive(Args)]
struct InputArgs {
    /// Instance JSON file, or - for stdin.
    input: String,
}

#[derive(Args)]
struct ValidateArgs {
    /// Instance JSON file, or - for stdin.
    input: String,
    /// Also check the label hygiene properties after preprocessing.
    #[arg(long)]
    hygiene: bool,
}

#[derive(Args)]
struct SolveArgs {
    /// Instance JSON file, or - for stdin.
    input: String,
    /// Reject instances that fail validation instead of running anyway.
    #[arg(long)]
    strict: bool,
    /// Emit the full result record as JSON instead of yes/no.
    #[arg(long)]
    json: bool,
    /// Write prune/pass trace events as JSONL to this file (- for
    /// stderr).
    #[arg(long, value_name = "FILE")]
    trace: Option<String>,
}

#[derive(Args)]
struct OracleArgs {
    /// Instance JSON file, or - for stdin.
    input: String,
    /// Wall-clock budget in milliseconds.
    #[arg(long, default_value_t = 30_000)]
    budget_ms: u64,
    /// Search-node budget.
    #[arg(long, default_value_t = 10_000_000)]
    budget_nodes: u64,
}

#[derive(Args)]
struct ReduceArgs {
    /// DIMACS CNF file, or - for stdin.
    input: String,
    /// Use the one-stage-per-clause construction instead of the
    /// degree-bounded one.
    #[arg(long)]
    no_gadgets: bool,
    /// Fail instead of padding short formulas or rewriting widths.
    #[arg(long)]
    strict: bool,
}

#[derive(Subcommand)]
enum GenCmd {
    /// The minimally unsatisfiable family over n variables (DIMACS out).
    Fn { n: usize },
    /// Uniform random k-SAT (DIMACS out).
    Ksat {
        num_vars: usize,
        num_clauses: usize,
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Pigeonhole principle with the given number of holes (DIMACS out).
    Php { holes: usize },
    /// Random valid instance from the structural generator (JSON out).
    Msp {
        #[arg(long, default_value_t = 7)]
        stages: usize,
        #[arg(long, default_value_t = 3)]
        width: usize,
        #[arg(long, default_value_t = 0.9)]
        density: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FuzzFamily {
    RandomMsp,
    Ksat,
    Mixed,
}

#[derive(Args)]
struct FuzzArgs {
    /// Number of instances to run.
    #[arg(long, default_value_t = 200)]
    count: usize,
    /// First seed; instance i uses seed0 + i.
    #[arg(long, default_value_t = 0)]
    seed0: u64,
    #[arg(long, value_enum, default_value_t = FuzzFamily::Mixed)]
    family: FuzzFamily,
    /// Oracle wall-clock budget per instance, in milliseconds.
    #[arg(long, default_value_t = 30_000)]
    budget_ms: u64,
    /// Worker threads (MSP_WORKERS overrides).
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory for records, summary, and disagreement cores.
    #[arg(long, default_value = "fuzz-out")]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MinimizePredicate {
    /// Kernel and a definite oracle disagree, in either direction.
    Disagree,
    /// The kernel set comes back empty.
    ZhNo,
    /// The kernel set comes back nonempty.
    ZhYes,
}

#[derive(Args)]
struct MinimizeArgs {
    /// Instance JSON file, or - for stdin.
    input: String,
    #[arg(long, value_enum)]
    predicate: MinimizePredicate,
    /// Oracle budget for the disagree predicate, in milliseconds.
    #[arg(long, default_value_t = 10_000)]
    budget_ms: u64,
}

#[derive(Args)]
struct ReportArgs {
    /// Campaign records JSONL file, or - for stdin.
    input: String,
}

fn read_input(path: &str) -> std::io::Result<String> {
    if path == "-" {
        let mut text = String::new();
        std::io::stdin().read_to_string(&mut text)?;
        Ok(text)
    } else {
        std::fs::read_to_string(path)
    }
}

fn load_instance(path: &str) -> Result<LoadedInstance, String> {
    let text = read_input(path).map_err(|e| format!("reading {path}: {e}"))?;
    let loaded = from_json(&text).map_err(|e| format!("parsing {path}: {e}"))?;
    if !loaded.hash_matched {
        eprintln!("warning: content hash mismatch in {path}; the document was edited after it was written");
    }
    Ok(loaded)
}

fn fail(message: String) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(1)
}

fn main() -> ExitCode {
    // Rust ignores SIGPIPE, which turns `msp ... | head` into a panic on
    // the closed pipe. Die quietly instead, like any pipeline tool.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    match Cli::parse().cmd {
        Cmd::Validate(args) => cmd_validate(args),
        Cmd::Preprocess(args) => cmd_preprocess(args),
        Cmd::Solve(args) => cmd_solve(args),
        Cmd::Oracle(args) => cmd_oracle(args),
        Cmd::Reduce(args) => cmd_reduce(args),
        Cmd::Gen(args) => cmd_gen(args),
        Cmd::Fuzz(args) => cmd_fuzz(args),
        Cmd::Minimize(args) => cmd_minimize(args),
        Cmd::Report(args) => cmd_report(args),
    }
}

fn cmd_validate(args: ValidateArgs) -> ExitCode {
    let loaded = match load_instance(&args.input) {
        Ok(l) => l,
        Err(e) => return fail(e),
    };
    let mut violations = loaded.graph.validate_2msp();
    if args.hygiene {
        let pre = msp_core::kernel::preprocess(&loaded.graph);
        violations.extend(pre.check_properties());
    }
    if violations.is_empty() {
        println!("ok");
        ExitCode::SUCCESS
    } else {
        for v in &violations {
            println!("{v}");
        }
        ExitCode::from(2)
    }
}

fn cmd_preprocess(args: InputArgs) -> ExitCode {
    let loaded = match load_instance(&args.input) {
        Ok(l) => l,
        Err(e) => return fail(e),
    };
    let pre = msp_core::kernel::preprocess_for_emission(&loaded.graph);
    print!("{}", to_json(&pre, loaded.provenance));
    ExitCode::SUCCESS
}

fn cmd_solve(args: SolveArgs) -> ExitCode {
    let loaded = match load_instance(&args.input) {
        Ok(l) => l,
        Err(e) => return fail(e),
    };
    let options = ZhOptions {
        mode: if args.strict { Mode::Strict } else { Mode::Permissive },
        trace: args.trace.is_some(),
    };
    let out = match zh_solve(&loaded.graph, options) {
        Ok(out) => out,
        Err(KernelError::InvalidInstance { violations }) => {
            for v in &violations {
                eprintln!("{v}");
            }
            eprintln!("error: instance rejected in strict mode");
            return ExitCode::from(2);
        }
    };
    if let (Some(target), Some(events)) = (&args.trace, &out.trace) {
        let mut lines = String::new();
        for event in events {
            lines.push_str(&serde_json::to_string(event).expect("trace events serialize"));
            lines.push('\n');
        }
        let write_result = if target == "-" {
            std::io::stderr().write_all(lines.as_bytes())
        } else {
            std::fs::write(target, lines)
        };
        if let Err(e) = write_result {
            return fail(format!("writing trace to {target}: {e}"));
        }
    }
    if args.json {
        let record = serde_json::json!({
            "decision": out.decision,
            "kernel_size": out.stats.kernel_size,
            "passes": out.stats.passes,
            "prune_events": out.stats.prune_events,
            "initial_support": out.stats.initial_support,
            "sweep_order": out.stats.sweep_order,
            "wall_millis": out.wall_millis,
            "violations": out.violations,
        });
        println!("{}", serde_json::to_string_pretty(&record).expect("records serialize"));
    } else {
        match out.decision {
            Decision::Yes => println!("yes"),
            Decision::No => println!("no"),
        }
    }
    ExitCode::SUCCESS
}

fn cmd_oracle(args: OracleArgs) -> ExitCode {
    let loaded = match load_instance(&args.input) {
        Ok(l) => l,
        Err(e) => return fail(e),
    };
    let budget = OracleBudget {
        max_nodes: args.budget_nodes,
        max_millis: args.budget_ms,
    };
    match sigma_path_exists(&loaded.graph, budget) {
        OracleDecision::Yes => println!("yes"),
        OracleDecision::No => println!("no"),
        OracleDecision::Unknown => println!("unknown"),
    }
    ExitCode::SUCCESS
}

fn cmd_reduce(args: ReduceArgs) -> ExitCode {
    let text = match read_input(&args.input) {
        Ok(t) => t,
        Err(e) => return fail(format!("reading {}: {e}", args.input)),
    };
    let formula = match parse_dimacs(&text, args.strict) {
        Ok(f) => f,
        Err(e) => return fail(format!("parsing {}: {e}", args.input)),
    };
    let route = if args.no_gadgets { Route::Plain } else { Route::Gadget };
    let reduced = match route {
        Route::Plain => reduce_plain(&formula, args.strict).map(|(g, _)| g),
        Route::Gadget => match formula.uniform_width() {
            Some(2) | Some(3) => reduce_full(&formula, args.strict).map(|(g, _)| g),
            _ if args.strict => {
                return fail(
                    "formula width is not uniformly 2 or 3; rerun without --strict to rewrite to width 3"
                        .to_string(),
                )
            }
            _ => reduce_full(&split_to_3cnf(&formula), false).map(|(g, _)| g),
        },
    };
    match reduced {
        Ok(g) => {
            print!("{}", to_json(&g, Provenance::Dimacs { route }));
            ExitCode::SUCCESS
        }
        Err(e) => fail(format!("reduction failed: {e}")),
    }
}

fn cmd_gen(cmd: GenCmd) -> ExitCode {
    match cmd {
        GenCmd::Fn { n } => match gen_fn_mu(n) {
            Ok(f) => {
                print!("{}", emit_dimacs(&f));
                ExitCode::SUCCESS
            }
            Err(e) => fail(e.to_string()),
        },
        GenCmd::Ksat { num_vars, num_clauses, k, seed } => {
            match gen_random_ksat(num_vars, num_clauses, k, seed) {
                Ok(f) => {
                    print!("{}", emit_dimacs(&f));
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e.to_string()),
            }
        }
        GenCmd::Php { holes } => match gen_pigeonhole(holes) {
            Ok(f) => {
                print!("{}", emit_dimacs(&f));
                ExitCode::SUCCESS
            }
            Err(e) => fail(e.to_string()),
        },
        GenCmd::Msp { stages, width, density, seed } => {
            let params = MspGenParams { stages, width, density, seed };
            match gen_random_msp(&params) {
                Ok(g) => {
                    let provenance = Provenance::RandomMsp {
                        stages,
                        width,
                        density,
                        seed,
                        rng: RNG_ALGORITHM.to_string(),
                    };
                    print!("{}", to_json(&g, provenance));
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e.to_string()),
            }
        }
    }
}

/// Deterministic per-seed parameters for fuzz jobs, sweeping shape and
/// density so campaigns cover both decisions.
fn fuzz_job(family: FuzzFamily, seed: u64) -> Option<(String, Provenance, MultiStageGraph)> {
    let pick = match family {
        FuzzFamily::RandomMsp => 0,
        FuzzFamily::Ksat => 1,
        FuzzFamily::Mixed => (seed % 2) as usize,
    };
    if pick == 0 {
        let params = MspGenParams {
            stages: 5 + (seed % 5) as usize,
            width: 2 + (seed % 3) as usize,
            density: 0.78 + 0.05 * (seed % 5) as f64,
            seed,
        };
        let g = gen_random_msp(&params).ok()?;
        let provenance = Provenance::RandomMsp {
            stages: params.stages,
            width: params.width,
            density: params.density,
            seed,
            rng: RNG_ALGORITHM.to_string(),
        };
        Some((format!("random-msp-{seed}"), provenance, g))
    } else {
        let num_vars = 3 + (seed % 4) as usize;
        let num_clauses = 4 + (seed % 10) as usize;
        let f = gen_random_ksat(num_vars, num_clauses, 3, seed).ok()?;
        let (g, _) = reduce_full(&f, false).ok()?;
        let provenance = Provenance::Ksat {
            num_vars,
            num_clauses,
            k: 3,
            seed,
            rng: RNG_ALGORITHM.to_string(),
            route: Route::Gadget,
        };
        Some((format!("ksat-{seed}"), provenance, g))
    }
}

fn cmd_fuzz(args: FuzzArgs) -> ExitCode {
    let jobs: Vec<(String, Provenance, MultiStageGraph)> = (0..args.count as u64)
        .filter_map(|i| fuzz_job(args.family, args.seed0 + i))
        .collect();
    if jobs.len() < args.count {
        eprintln!(
            "warning: {} of {} jobs could not be generated",
            args.count - jobs.len(),
            args.count
        );
    }
    let budget = OracleBudget {
        max_nodes: 10_000_000,
        max_millis: args.budget_ms,
    };
    let workers = msp_core::harness::effective_workers(args.workers);
    let records = run_campaign(&jobs, budget, workers);
    let summary = CampaignSummary::tally(&records);

    if let Err(e) = std::fs::create_dir_all(&args.out) {
        return fail(format!("creating {}: {e}", args.out.display()));
    }
    let records_path = args.out.join("records.jsonl");
    let mut lines = String::new();
    for r in &records {
        lines.push_str(&serde_json::to_string(r).expect("records serialize"));
        lines.push('\n');
    }
    if let Err(e) = std::fs::write(&records_path, lines) {
        return fail(format!("writing {}: {e}", records_path.display()));
    }
    let summary_path = args.out.join("summary.json");
    let summary_text =
        serde_json::to_string_pretty(&summary).expect("summaries serialize");
    if let Err(e) = std::fs::write(&summary_path, summary_text) {
        return fail(format!("writing {}: {e}", summary_path.display()));
    }

    // Archive and shrink every disagreement.
    let mut archived = 0usize;
    for (record, (id, provenance, g)) in records.iter().zip(&jobs) {
        let bad = matches!(
            record.agreement,
            AgreementClass::NecessityViolation | AgreementClass::SufficiencyDisagreement
        );
        if !bad {
            continue;
        }
        let class = record.agreement;
        let full_path = args.out.join(format!("{id}.disagreement.json"));
        let _ = std::fs::write(&full_path, to_json(g, provenance.clone()));
        let pred = |candidate: &MultiStageGraph| {
            let zh = zh_solve(candidate, ZhOptions::default())
                .expect("permissive solve cannot reject")
                .decision;
            let oracle = sigma_path_exists(candidate, budget);
            classify(zh, oracle) == class
        };
        if let Ok(core) = minimize_msp(g, pred) {
            let core_path = args.out.join(format!("{id}.core.json"));
            let _ = std::fs::write(&core_path, to_json(&core, Provenance::Unknown));
        }
        archived += 1;
    }

    println!(
        "{} instances: {} agree-yes, {} agree-no, {} kernel-missed-path, {} kernel-kept-dead, {} oracle-unknown",
        summary.total,
        summary.agree_yes,
        summary.agree_no,
        summary.necessity_violations,
        summary.sufficiency_disagreements,
        summary.oracle_unknown
    );
    println!(
        "max solver time {} ms, max passes {}; records in {}",
        summary.max_zh_millis,
        summary.max_passes,
        records_path.display()
    );
    if archived > 0 {
        println!("{archived} disagreement cores archived in {}", args.out.display());
    }
    if summary.necessity_violations > 0 {
        ExitCode::from(2)
    } else if summary.sufficiency_disagreements > 0 {
        ExitCode::from(3)
    } else {
        ExitCode::SUCCESS
    }
}

fn cmd_minimize(args: MinimizeArgs) -> ExitCode {
    let loaded = match load_instance(&args.input) {
        Ok(l) => l,
        Err(e) => return fail(e),
    };
    let budget = OracleBudget {
        max_nodes: 10_000_000,
        max_millis: args.budget_ms,
    };
    let kernel_size = |g: &MultiStageGraph| {
        zh_solve(g, ZhOptions::default())
            .expect("permissive solve cannot reject")
            .stats
            .kernel_size
    };
    let result = match args.predicate {
        MinimizePredicate::ZhNo => minimize_msp(&loaded.graph, |g| kernel_size(g) == 0),
        MinimizePredicate::ZhYes => minimize_msp(&loaded.graph, |g| kernel_size(g) > 0),
        MinimizePredicate::Disagree => minimize_msp(&loaded.graph, |g| {
            let zh = zh_solve(g, ZhOptions::default())
                .expect("permissive solve cannot reject")
                .decision;
            matches!(
                classify(zh, sigma_path_exists(g, budget)),
                AgreementClass::NecessityViolation | AgreementClass::SufficiencyDisagreement
            )
        }),
    };
    match result {
        Ok(core) => {
            print!("{}", to_json(&core, Provenance::Unknown));
            ExitCode::SUCCESS
        }
        Err(e) => fail(e.to_string()),
    }
}

fn cmd_report(args: ReportArgs) -> ExitCode {
    let text = match read_input(&args.input) {
        Ok(t) => t,
        Err(e) => return fail(format!("reading {}: {e}", args.input)),
    };
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<VerdictRecord>(line) {
            Ok(r) => records.push(r),
            Err(e) => return fail(format!("line {}: {e}", i + 1)),
        }
    }
    let summary = CampaignSummary::tally(&records);
    println!("{}", serde_json::to_string_pretty(&summary).expect("summaries serialize"));
    for r in &records {
        if matches!(
            r.agreement,
            AgreementClass::NecessityViolation | AgreementClass::SufficiencyDisagreement
        ) {
            println!(
                "disagreement: {} ({}) kernel={:?} oracle={:?}",
                r.instance,
                r.content_hash,
                r.zh_decision,
                r.oracle_decision
            );
        }
    }
    ExitCode::SUCCESS
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use meshsync_core::report::{analyze_scenario, run_report, verify_trace, DEFAULT_CHECKS, TRACE_CHECKS};
use meshsync_core::sim::{builtin_scenario, load_scenario, run_scenario, Scenario, SimErrorKind, BUILTIN_SCENARIOS};
use meshsync_core::sync::MetadataMode;
use meshsync_core::trace::Trace;
use meshsync_core::verify::ViolationKind;

const EXIT_INPUT: u8 = 1;
const EXIT_PROTOCOL: u8 = 2;

#[derive(Parser)]
#[command(name = "meshsync", version, about = "Simulate and check interest-scoped replication")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Override the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the sync mode.
    #[arg(long, global = true, value_parser = parse_mode)]
    mode: Option<MetadataMode>,
    /// Print machine-readable JSON instead of tables.
    #[arg(long, global = true)]
    json: bool,
    /// Worker threads for seed sweeps.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Output path: the trace for `run`, the report for the others.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario, write its trace and print the final state.
    Run {
        /// Built-in scenario name or path to a scenario JSON file.
        scenario: String,
        /// Run this many consecutive seeds instead of one; `--out` names a directory.
        #[arg(long)]
        sweep: Option<u64>,
    },
    /// Check a recorded trace.
    Verify {
        trace: PathBuf,
        /// Comma-separated checks, e.g. `intersection-atomicity,convergence`.
        #[arg(long, value_delimiter = ',', value_parser = parse_check)]
        checks: Vec<ViolationKind>,
    },
    /// Static analysis of a scenario's topology and interests.
    Analyze {
        scenario: String,
        /// Use the topology and interests at this checkpoint.
        #[arg(long)]
        at: Option<String>,
    },
    /// List the built-in scenarios.
    Scenarios,
}

fn parse_mode(s: &str) -> Result<MetadataMode, String> {
    s.parse().map_err(|_| format!("expected intersection-only or metadata-everywhere, got {s:?}"))
}

fn parse_check(s: &str) -> Result<ViolationKind, String> {
    let kind: ViolationKind = s.parse().map_err(|_| {
        let names: Vec<&str> = TRACE_CHECKS.iter().map(|k| k.name()).collect();
        format!("unknown check {s:?}; expected one of {}", names.join(", "))
    })?;
    if !TRACE_CHECKS.contains(&kind) {
        return Err(format!("{s} is a static check; use `analyze`"));
    }
    Ok(kind)
}

/// Failure with the exit status it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn input(error: impl Into<anyhow::Error>) -> Self {
        Failure {
            code: EXIT_INPUT,
            error: error.into(),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Failure::input(error)
    }
}

type CmdResult = Result<u8, Failure>;

fn load(source: &str) -> Result<Scenario, Failure> {
    let path = Path::new(source);
    if path.is_file() {
        let text = fs::read_to_string(path).with_context(|| format!("reading {source}"))?;
        return load_scenario(&text).map_err(|e| Failure::input(anyhow!("{source}: {e}")));
    }
    builtin_scenario(source).ok_or_else(|| Failure::input(anyhow!("{source}: no such file or built-in scenario")))
}

fn apply_overrides(s: &mut Scenario, g: &Global) {
    if let Some(seed) = g.seed {
        s.seed = seed;
    }
    if let Some(mode) = g.mode {
        s.mode = mode;
    }
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Runs one scenario; on a protocol error the partial trace is still returned.
fn simulate(s: &Scenario) -> (Trace, Option<Failure>) {
    match run_scenario(s) {
        Ok(t) => (t, None),
        Err(e) => {
            let code = match e.kind {
                SimErrorKind::Invalid { .. } => EXIT_INPUT,
                _ => EXIT_PROTOCOL,
            };
            let error = anyhow!("{}: {e}", s.name);
            (*e.partial, Some(Failure { code, error }))
        }
    }
}

fn cmd_run(g: &Global, source: &str, sweep: Option<u64>) -> CmdResult {
    let mut s = load(source)?;
    apply_overrides(&mut s, g);
    if let Some(n) = sweep {
        return cmd_sweep(g, s, n);
    }
    let (trace, failure) = simulate(&s);
    let out = g.out.clone().unwrap_or_else(|| PathBuf::from(format!("{}.trace.jsonl", s.name)));
    write(&out, &trace.to_jsonl())?;
    if let Some(f) = failure {
        eprintln!("partial trace written to {}", out.display());
        return Err(f);
    }
    let report = run_report(&trace).map_err(Failure::input)?;
    if g.json {
        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    } else {
        print!("{}", report.render_text());
        println!("trace written to {}", out.display());
    }
    Ok(0)
}

fn cmd_sweep(g: &Global, base: Scenario, n: u64) -> CmdResult {
    let dir = g.out.clone().unwrap_or_else(|| PathBuf::from(format!("{}-sweep", base.name)));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(g.jobs.max(1))
        .build()
        .context("starting worker pool")?;
    let rows: Vec<_> = pool.install(|| {
        (0..n)
            .into_par_iter()
            .map(|i| {
                let mut s = base.clone();
                s.seed = base.seed.wrapping_add(i);
                let (trace, failure) = simulate(&s);
                let path = dir.join(format!("seed-{}.trace.jsonl", s.seed));
                let written = fs::write(&path, trace.to_jsonl()).with_context(|| format!("writing {}", path.display()));
                let violations = match (&failure, &written) {
                    (None, Ok(())) => verify_trace(&trace, &DEFAULT_CHECKS).ok().map(|r| r.summary),
                    _ => None,
                };
                (s.seed, trace.digest(), violations, failure, written)
            })
            .collect()
    });
    let mut code = 0;
    let mut listing = Vec::new();
    for (seed, digest, violations, failure, written) in rows {
        written?;
        if let Some(f) = &failure {
            eprintln!("seed {seed}: {}", f.error);
            code = code.max(f.code);
        }
        listing.push(serde_json::json!({
            "seed": seed,
            "trace_digest": digest,
            "violations": violations,
            "error": failure.map(|f| f.error.to_string()),
        }));
        if !g.json {
            let summary = match &listing.last().unwrap()["violations"] {
                serde_json::Value::Object(m) => {
                    m.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(" ")
                }
                _ => "error".to_string(),
            };
            println!("seed {seed:>6}  {}  {summary}", &digest[..12]);
        }
    }
    if g.json {
        println!("{}", serde_json::to_string_pretty(&listing).expect("listing serializes"));
    } else {
        println!("{n} trace(s) written to {}", dir.display());
    }
    Ok(code)
}

fn cmd_verify(g: &Global, path: &Path, checks: &[ViolationKind]) -> CmdResult {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let trace = Trace::from_jsonl(&text).map_err(|e| Failure::input(anyhow!("{}: {e}", path.display())))?;
    let checks = if checks.is_empty() { &DEFAULT_CHECKS[..] } else { checks };
    let report = verify_trace(&trace, checks).map_err(|e| Failure::input(anyhow!("{}: {e}", path.display())))?;
    let rendered = if g.json {
        serde_json::to_string_pretty(&report).expect("report serializes") + "\n"
    } else {
        report.render_text()
    };
    print!("{rendered}");
    if let Some(out) = &g.out {
        write(out, &rendered)?;
    }
    Ok(report.exit_code() as u8)
}

fn cmd_analyze(g: &Global, source: &str, at: Option<&str>) -> CmdResult {
    let mut s = load(source)?;
    apply_overrides(&mut s, g);
    let report = analyze_scenario(&s, at).map_err(Failure::input)?;
    let rendered = if g.json {
        serde_json::to_string_pretty(&report).expect("report serializes") + "\n"
    } else {
        report.render_text()
    };
    print!("{rendered}");
    if let Some(out) = &g.out {
        write(out, &rendered)?;
    }
    Ok(0)
}

fn cmd_scenarios(g: &Global) -> CmdResult {
    if g.json {
        let listing: Vec<_> = BUILTIN_SCENARIOS
            .iter()
            .map(|b| serde_json::json!({"name": b.name, "summary": b.summary}))
            .collect();
        println!("{}", serde_json::to_string_pretty(&listing).expect("listing serializes"));
    } else {
        for b in BUILTIN_SCENARIOS {
            println!("{:<14} {}", b.name, b.summary);
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_INPUT) } else { ExitCode::SUCCESS };
        }
    };
    let g = &cli.global;
    let result = match &cli.command {
        Command::Run { scenario, sweep } => cmd_run(g, scenario, *sweep),
        Command::Verify { trace, checks } => cmd_verify(g, trace, checks),
        Command::Analyze { scenario, at } => cmd_analyze(g, scenario, at.as_deref()),
        Command::Scenarios => cmd_scenarios(g),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use ascbs::baseline::{compare, CompareRecord};
use ascbs::bench::{format_summary, run_sweep, summarize, write_csv, BenchConfig};
use ascbs::instance::{
    generate_scenario, load_instance, load_map, parse_scen, read_file, Instance, SolutionDoc,
};
use ascbs::simulator::validate;
use ascbs::{solve, Outcome, Solution, SolverConfig, Variant};

#[derive(Parser)]
#[command(name = "ascbs", version, about = "Optimal path planning for periodic agent streams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance.
    Solve(SolveArgs),
    /// Check a solution by simulating spawned agents.
    Validate(ValidateArgs),
    /// Sweep stream counts, cycle times, seeds and variants.
    Bench(BenchArgs),
    /// Compare against unrolled conflict-based search over time horizons.
    CompareCbs(CompareArgs),
    /// Write a random scenario file for a map.
    GenScen(GenScenArgs),
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long, required_unless_present = "instance")]
    map: Option<PathBuf>,
    #[arg(long, required_unless_present = "instance")]
    scen: Option<PathBuf>,
    #[arg(long, required_unless_present = "instance")]
    streams: Option<usize>,
    #[arg(long, required_unless_present = "instance")]
    cycle: Option<u32>,
    /// Instance JSON; replaces --map/--scen/--streams/--cycle.
    #[arg(long, conflicts_with_all = ["map", "scen", "streams", "cycle"])]
    instance: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "a-nd")]
    variant: Variant,
    /// Budget in seconds.
    #[arg(long, default_value_t = 60.0)]
    timeout: f64,
    /// Where to write the solution JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    solution: PathBuf,
    /// Simulation horizon; defaults to one derived from path lengths and cycles.
    #[arg(long)]
    horizon: Option<u64>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    map: PathBuf,
    #[arg(long)]
    scen: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "2,4,6")]
    streams_list: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
    cycle_list: Vec<u32>,
    /// Number of seeds per cell (seeds 0..N).
    #[arg(long, default_value_t = 4)]
    seeds: u64,
    /// `all` or a comma-separated list of variants.
    #[arg(long, default_value = "all")]
    variants: String,
    #[arg(long, default_value_t = 60.0)]
    timeout: f64,
    #[arg(long)]
    csv: PathBuf,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Write 0 in the runtime column so reruns produce identical files.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "3,9,18")]
    horizons: Vec<u64>,
    #[arg(long, default_value_t = 60.0)]
    timeout: f64,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "a-nd")]
    variant: Variant,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct GenScenArgs {
    #[arg(long)]
    map: PathBuf,
    #[arg(long, default_value_t = 20)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

const EXIT_ERROR: u8 = 1;

fn exit_code(outcome: Outcome) -> u8 {
    match outcome {
        Outcome::Solved => 0,
        Outcome::Unsolvable => 2,
        Outcome::Timeout => 3,
    }
}

fn seconds(s: f64) -> Result<Duration, String> {
    Duration::try_from_secs_f64(s).map_err(|e| format!("invalid timeout {s}: {e}"))
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

fn load_solve_instance(args: &SolveArgs) -> Result<Instance, String> {
    if let Some(path) = &args.instance {
        return load_instance(path).map_err(|e| format!("{}: {e}", path.display()));
    }
    let (map, scen) = (args.map.as_ref().unwrap(), args.scen.as_ref().unwrap());
    let grid = load_map(map).map_err(|e| format!("{}: {e}", map.display()))?;
    let text = read_file(scen).map_err(|e| e.to_string())?;
    parse_scen(&text, Arc::new(grid), args.streams.unwrap(), args.cycle.unwrap(), args.seed)
        .map_err(|e| format!("{}: {e}", scen.display()))
}

fn cmd_solve(args: SolveArgs) -> Result<u8, String> {
    let inst = load_solve_instance(&args)?;
    let cfg = SolverConfig::new(args.variant)
        .with_timeout(seconds(args.timeout)?)
        .with_seed(args.seed);
    let report = solve(&inst, &cfg).map_err(|e| e.to_string())?;
    println!("outcome: {}", report.outcome);
    if let Some(soc) = report.soc {
        println!("soc: {soc}");
    }
    println!("runtime_ms: {:.3}", report.elapsed.as_secs_f64() * 1e3);
    println!(
        "ct_expanded: {} ct_generated: {} low_level_expansions: {}",
        report.ct_expanded, report.ct_generated, report.low_level_expansions
    );
    if let (Some(out), Some(sol)) = (&args.out, &report.solution) {
        let json = serde_json::to_string_pretty(&sol.to_doc(&inst)).map_err(|e| e.to_string())?;
        fs::write(out, json + "\n").map_err(|e| format!("{}: {e}", out.display()))?;
    }
    Ok(exit_code(report.outcome))
}

fn cmd_validate(args: ValidateArgs) -> Result<u8, String> {
    let inst = load_instance(&args.instance).map_err(|e| format!("{}: {e}", args.instance.display()))?;
    let text = read_file(&args.solution).map_err(|e| e.to_string())?;
    let doc: SolutionDoc =
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", args.solution.display()))?;
    let sol = match Solution::from_doc(&doc, inst.map()) {
        Ok(sol) => sol,
        Err((stream, e)) => {
            println!("structural error: stream {stream}: {e}");
            return Ok(EXIT_ERROR);
        }
    };
    match validate(&inst, &sol, args.horizon) {
        Err(e) => {
            println!("structural error: {e}");
            Ok(EXIT_ERROR)
        }
        Ok(v) => {
            if v.period_capped {
                log::warn!("period term of the horizon capped, horizon {}", v.horizon);
            }
            for e in &v.report.events {
                println!("{e}");
            }
            if v.is_valid() {
                println!("valid (horizon {})", v.horizon);
                Ok(0)
            } else {
                println!("invalid: {} collisions (horizon {})", v.report.events.len(), v.horizon);
                Ok(EXIT_ERROR)
            }
        }
    }
}

fn parse_variants(text: &str) -> Result<Vec<Variant>, String> {
    if text == "all" {
        return Ok(Variant::ALL.to_vec());
    }
    text.split(',').map(|s| s.trim().parse()).collect()
}

fn cmd_bench(args: BenchArgs) -> Result<u8, String> {
    let map = load_map(&args.map).map_err(|e| format!("{}: {e}", args.map.display()))?;
    let timeout = seconds(args.timeout)?;
    let cfg = BenchConfig {
        map_name: file_name(&args.map),
        scen_name: file_name(&args.scen),
        map: Arc::new(map),
        scen_text: read_file(&args.scen).map_err(|e| e.to_string())?,
        streams: args.streams_list,
        cycles: args.cycle_list,
        seeds: args.seeds,
        variants: parse_variants(&args.variants)?,
        timeout,
        jobs: args.jobs,
        record_runtime: !args.no_timing,
    };
    let rows = run_sweep(&cfg).map_err(|e| e.to_string())?;
    let file = fs::File::create(&args.csv).map_err(|e| format!("{}: {e}", args.csv.display()))?;
    write_csv(&rows, file).map_err(|e| e.to_string())?;
    print!("{}", format_summary(&summarize(&rows, timeout)));
    Ok(0)
}

fn cmd_compare(args: CompareArgs) -> Result<u8, String> {
    let inst = load_instance(&args.instance).map_err(|e| format!("{}: {e}", args.instance.display()))?;
    let timeout = seconds(args.timeout)?;
    let cfg = SolverConfig::new(args.variant)
        .with_timeout(timeout)
        .with_seed(args.seed);
    let report = solve(&inst, &cfg).map_err(|e| e.to_string())?;
    if report.outcome != Outcome::Solved {
        println!("outcome: {}", report.outcome);
        return Ok(exit_code(report.outcome));
    }
    let mut records: Vec<CompareRecord> = Vec::new();
    for &h in &args.horizons {
        let rec = compare(&inst, &report, h, Some(timeout)).map_err(|e| e.to_string())?;
        println!(
            "horizon={} agents={} cbs={} cbs_soc={} ascbs_unrolled_soc={} relative_error={} ascbs_ms={:.3} cbs_ms={:.3}",
            rec.horizon,
            rec.agents,
            rec.cbs_outcome,
            rec.cbs_soc.map_or("-".into(), |s| s.to_string()),
            rec.ascbs_unrolled_soc,
            rec.relative_error.map_or("-".into(), |e| format!("{e:.6}")),
            rec.ascbs_runtime_ms,
            rec.cbs_runtime_ms
        );
        records.push(rec);
    }
    if let Some(path) = &args.csv {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(path)
            .map_err(|e| format!("{}: {e}", path.display()))?;
        for r in &records {
            w.serialize(r).map_err(|e| e.to_string())?;
        }
        w.flush().map_err(|e| e.to_string())?;
    }
    Ok(0)
}

fn cmd_gen_scen(args: GenScenArgs) -> Result<u8, String> {
    let map = load_map(&args.map).map_err(|e| format!("{}: {e}", args.map.display()))?;
    if args.count > map.num_passable() {
        return Err(format!(
            "{} tasks requested but the map has {} passable cells",
            args.count,
            map.num_passable()
        ));
    }
    let text = generate_scenario(&map, &file_name(&args.map), args.count, args.seed);
    fs::write(&args.out, text).map_err(|e| format!("{}: {e}", args.out.display()))?;
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ASCBS_LOG", "warn")).init();
    // Usage errors share exit code 1 with other errors; 2 means unsolvable.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_ERROR } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Bench(a) => cmd_bench(a),
        Command::CompareCbs(a) => cmd_compare(a),
        Command::GenScen(a) => cmd_gen_scen(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

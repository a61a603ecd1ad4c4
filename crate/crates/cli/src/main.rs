//! `soaview`: check, build, run and bench subcommands.
//!
//! Exit status: 0 success, 1 diagnostics or runtime failure, 2 usage error.

mod report;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value as Json;

use soaview_core::backends::{emit_c, emit_kl, EmitOptions, OffloadMode};
use soaview_core::interp::{inputs_from_json, outputs_to_json};
use soaview_core::transform::rewrite_analyzed;
use soaview_core::{analyze, interpret, parse, Analysis, Program};
use soaview_sph::bench::to_csv;
use soaview_sph::{run_bench, BenchConfig, Kernel, Variant};

#[derive(Parser, Debug)]
#[command(
    name = "soaview",
    version,
    about = "AoS-to-SoA view compiler for the kernel language"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Report access sets of every annotated loop.
    Check(CheckArgs),
    /// Rewrite annotated loops and emit KL or C.
    Build(BuildArgs),
    /// Interpret an entry function on JSON inputs.
    Run(RunArgs),
    /// Time the SPH kernels.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
struct CheckArgs {
    file: PathBuf,
    /// Tab-separated output with a header row.
    #[arg(long, conflicts_with = "json")]
    tsv: bool,
    /// JSON output.
    #[arg(long)]
    json: bool,
    /// Also report per-function unions and struct record sizes.
    #[arg(long)]
    kernels: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Emit {
    Kl,
    C,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Offload {
    Off,
    Map,
    Usm,
}

#[derive(Args, Debug)]
struct BuildArgs {
    file: PathBuf,
    /// Write the rewritten KL source to standard output.
    #[arg(long)]
    dump_transformed: bool,
    /// Output language; defaults to kl.
    #[arg(long, value_enum)]
    emit: Option<Emit>,
    /// Offload lowering of C output; requires --emit=c. Defaults to off.
    #[arg(long, value_enum)]
    offload: Option<Offload>,
    /// Output file; standard output when absent.
    #[arg(short = 'o', long = "output")]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RunArgs {
    file: PathBuf,
    #[arg(long)]
    entry: String,
    /// JSON object with optional "pools" and required "args".
    #[arg(long)]
    input: PathBuf,
    /// Output file; standard output when absent.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Interpret the rewritten program instead of the source.
    #[arg(long)]
    transformed: bool,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Kernel names, comma separated or repeated, or "all".
    #[arg(long = "kernel", value_delimiter = ',', default_value = "all")]
    kernels: Vec<String>,
    /// Variant as comma-separated axis values; repeatable; "all" for every combination.
    #[arg(long = "variant")]
    variants: Vec<String>,
    /// Particles per cell, comma separated or repeated.
    #[arg(long = "ppc", value_delimiter = ',', default_value = "1024")]
    ppcs: Vec<usize>,
    /// Total particle counts, comma separated or repeated.
    #[arg(long = "particles", value_delimiter = ',', default_value = "100000")]
    particles: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    reps: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// CSV output file; standard output when absent.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Skip the per-repetition comparison with the AoS baseline.
    #[arg(long)]
    no_check: bool,
    /// Worker count; 0 uses every available core. Capped by SOAVIEW_THREADS.
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

/// Failure of a subcommand.
enum Failure {
    /// Diagnostics or runtime errors, already formatted.
    Error(String),
    Usage(String),
}

type Res = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let r = match cli.command {
        Command::Check(a) => check(&a),
        Command::Build(a) => build(&a),
        Command::Run(a) => run(&a),
        Command::Bench(a) => bench(&a),
    };
    match r {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Error(m)) => {
            eprintln!("{m}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}\n\nFor more information, try '--help'.");
            ExitCode::from(2)
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Error(format!("{}: error: {e}", path.display())))
}

fn write_out(path: Option<&Path>, text: &str) -> Res {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Error(format!("{}: error: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| Failure::Error(format!("error: {e}")))
        }
    }
}

/// Parses and analyzes `path`, rendering failures as `file:line:col` diagnostics.
fn load(path: &Path) -> Result<(Program, Analysis), Failure> {
    let src = read(path)?;
    let file = path.display().to_string();
    let prog = parse(&src).map_err(|d| Failure::Error(d.render(&file)))?;
    let a = analyze(&prog).map_err(|e| Failure::Error(e.to_diagnostic().render(&file)))?;
    Ok((prog, a))
}

fn check(a: &CheckArgs) -> Res {
    let (prog, an) = load(&a.file)?;
    let text = if a.json {
        let mut s = serde_json::to_string_pretty(&report::json(&prog, &an)).expect("serializable");
        s.push('\n');
        s
    } else if a.tsv {
        report::tsv(&prog, &an, a.kernels)
    } else {
        report::text(&prog, &an, a.kernels)
    };
    write_out(None, &text)
}

fn build(a: &BuildArgs) -> Res {
    let emit = a.emit.unwrap_or(Emit::Kl);
    if a.offload.is_some() && emit != Emit::C {
        return Err(Failure::Usage("--offload requires --emit=c".into()));
    }
    let emits = a.emit.is_some() || a.output.is_some() || !a.dump_transformed;
    if a.dump_transformed && emits && a.output.is_none() {
        return Err(Failure::Usage(
            "--dump-transformed writes to standard output; give -o for the emitted file".into(),
        ));
    }
    let (prog, an) = load(&a.file)?;
    let file = a.file.display().to_string();
    let t = rewrite_analyzed(&prog, &an)
        .map_err(|e| Failure::Error(e.to_diagnostic().render(&file)))?
        .program;
    if a.dump_transformed {
        write_out(None, &emit_kl(&t))?;
    }
    if emits {
        let text = match emit {
            Emit::Kl => emit_kl(&t),
            Emit::C => {
                let offload = match a.offload.unwrap_or(Offload::Off) {
                    Offload::Off => OffloadMode::Off,
                    Offload::Map => OffloadMode::Map,
                    Offload::Usm => OffloadMode::Usm,
                };
                let opts = EmitOptions {
                    offload,
                    ..EmitOptions::default()
                };
                emit_c(&t, &opts).map_err(|e| Failure::Error(e.to_diagnostic().render(&file)))?
            }
        };
        write_out(a.output.as_deref(), &text)?;
    }
    Ok(())
}

fn run(a: &RunArgs) -> Res {
    let (prog, an) = load(&a.file)?;
    let file = a.file.display().to_string();
    let input = a.input.display().to_string();
    let j: Json = serde_json::from_str(&read(&a.input)?)
        .map_err(|e| Failure::Error(format!("{input}:{}:{}: error: {e}", e.line(), e.column())))?;
    let inputs = inputs_from_json(&prog, &a.entry, &j).map_err(|e| Failure::Error(format!("{input}: error: {e}")))?;
    let exec = if a.transformed {
        rewrite_analyzed(&prog, &an)
            .map_err(|e| Failure::Error(e.to_diagnostic().render(&file)))?
            .program
    } else {
        prog
    };
    let out = interpret(&exec, &a.entry, &inputs).map_err(|e| Failure::Error(format!("{file}: error: {e}")))?;
    let mut text = serde_json::to_string_pretty(&outputs_to_json(&exec, &out)).expect("serializable");
    text.push('\n');
    write_out(a.output.as_deref(), &text)
}

/// Worker count after applying the `SOAVIEW_THREADS` cap.
fn threads(requested: usize) -> Result<usize, Failure> {
    let avail = std::thread::available_parallelism().map_or(1, |n| n.get());
    let want = if requested == 0 { avail } else { requested };
    match std::env::var("SOAVIEW_THREADS") {
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(cap) if cap > 0 => Ok(want.min(cap)),
            _ => Err(Failure::Usage(format!(
                "SOAVIEW_THREADS must be a positive integer, got '{s}'"
            ))),
        },
        Err(_) => Ok(want),
    }
}

fn bench(a: &BenchArgs) -> Res {
    let usage = |e: soaview_sph::SphError| Failure::Usage(e.to_string());
    let mut kernels = Vec::new();
    for k in &a.kernels {
        if k == "all" {
            kernels.extend(Kernel::ALL);
        } else {
            kernels.push(k.parse::<Kernel>().map_err(usage)?);
        }
    }
    let mut seen = std::collections::HashSet::new();
    kernels.retain(|k| seen.insert(*k));
    let mut variants = Vec::new();
    for v in &a.variants {
        if v == "all" {
            variants.extend(Variant::all());
        } else {
            variants.push(v.parse::<Variant>().map_err(usage)?);
        }
    }
    if variants.is_empty() {
        variants.push(Variant::default());
    }
    let cfg = BenchConfig {
        kernels,
        variants,
        ppcs: a.ppcs.clone(),
        particles: a.particles.clone(),
        reps: a.reps,
        seed: a.seed,
        check: !a.no_check,
        threads: threads(a.threads)?,
    };
    let recs = run_bench(&cfg).map_err(|e| match e {
        soaview_sph::SphError::Config(m) => Failure::Usage(m),
        e => Failure::Error(format!("error: {e}")),
    })?;
    let csv = to_csv(&recs);
    match &a.csv {
        Some(p) => {
            write_out(Some(p), &csv)?;
            write_out(None, &report::bench_summary(&recs))
        }
        None => write_out(None, &csv),
    }
}

//! `quake`: error sweeps, coefficient grid search, op benchmarks and batch
//! application of the approximate non-linearities.
//!
//! Exit status is 0 on success, 2 for usage or validation errors and 3 for
//! I/O errors.

use std::collections::BTreeMap;
use std::f64::consts::LOG2_E;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use quake_core::bench::{self, AblationReport, BenchConfig, BenchReport, Shape, Workload};
use quake_core::io::{self, BufferFormat};
use quake_core::lab::{self, ErrorReport, GridAxis, GridSpec, Refinement, SweepConfig};
use quake_core::nonlin::{self, KernelChoice, SoftmaxParams};
use quake_core::{par, Error, QuadCoeffs, Result};

#[derive(Parser)]
#[command(name = "quake", version, about = "Approximate exponential kernels: accuracy and speed")]
struct Cli {
    /// Seed for every randomized path.
    #[arg(long, global = true, default_value_t = 0x5eed)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Relative-error sweep of an exponential kernel against the exact one.
    Sweep(SweepArgs),
    /// Minimax grid search for the quadratic mantissa refinement.
    Gridsearch(GridArgs),
    /// Single-threaded op benchmark against the exact baseline.
    Bench(BenchArgs),
    /// Apply a non-linearity to a buffer file.
    Apply(ApplyArgs),
    /// Merge report files into one table.
    Report(ReportArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReportFormat {
    Csv,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FileFormat {
    Csv,
    Raw,
}

impl From<FileFormat> for BufferFormat {
    fn from(f: FileFormat) -> Self {
        match f {
            FileFormat::Csv => BufferFormat::Csv,
            FileFormat::Raw => BufferFormat::Raw,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Op {
    Softmax,
    Gelu,
    Logistic,
    Exp,
}

fn parse_kernel(s: &str) -> std::result::Result<KernelChoice, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_workload(s: &str) -> std::result::Result<Workload, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// `lo:hi`
fn parse_range(s: &str) -> std::result::Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(':').ok_or("expected lo:hi")?;
    let lo = lo.trim().parse::<f64>().map_err(|e| format!("lo: {e}"))?;
    let hi = hi.trim().parse::<f64>().map_err(|e| format!("hi: {e}"))?;
    Ok((lo, hi))
}

/// `lo:hi:step`
fn parse_axis(s: &str) -> std::result::Result<GridAxis, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [lo, hi, step] = parts[..] else {
        return Err("expected lo:hi:step".into());
    };
    let num = |v: &str| v.trim().parse::<f64>().map_err(|e| e.to_string());
    Ok(GridAxis::new(num(lo)?, num(hi)?, num(step)?))
}

/// `a0,a1,a2`
fn parse_quad(s: &str) -> std::result::Result<QuadCoeffs, String> {
    let v: Vec<f32> = s
        .split(',')
        .map(|t| t.trim().parse::<f32>().map_err(|e| e.to_string()))
        .collect::<std::result::Result<_, _>>()?;
    match v[..] {
        [a0, a1, a2] => Ok(QuadCoeffs::new(a0, a1, a2)),
        _ => Err("expected a0,a1,a2".into()),
    }
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_parser = parse_kernel, default_value = "quake")]
    kernel: KernelChoice,
    /// Input interval, e.g. `-80:80`.
    #[arg(long, value_parser = parse_range, allow_hyphen_values = true, default_value = "-80:80")]
    range: (f64, f64),
    /// Uniform samples over the whole range; one exhaustive mantissa period
    /// is added on top.
    #[arg(long, default_value_t = 1 << 22)]
    samples: u64,
    /// Drop the centering bias of the first-order kernel.
    #[arg(long)]
    no_bias: bool,
    /// Quadratic refinement coefficients for quake2.
    #[arg(long, value_parser = parse_quad, allow_hyphen_values = true)]
    quad: Option<QuadCoeffs>,
    #[arg(long, value_enum, default_value = "json")]
    format: ReportFormat,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct GridArgs {
    /// The step-0.001 neighbourhood of the published optimum plus a 1e-4
    /// refinement pass.
    #[arg(long, conflicts_with_all = ["a0", "a1", "a2"])]
    paper_grid: bool,
    #[arg(long, value_parser = parse_axis, allow_hyphen_values = true, required_unless_present = "paper_grid")]
    a0: Option<GridAxis>,
    #[arg(long, value_parser = parse_axis, allow_hyphen_values = true, required_unless_present = "paper_grid")]
    a1: Option<GridAxis>,
    #[arg(long, value_parser = parse_axis, allow_hyphen_values = true, required_unless_present = "paper_grid")]
    a2: Option<GridAxis>,
    #[arg(long, default_value_t = GridSpec::DEFAULT_MANTISSA_SAMPLES)]
    mantissa_samples: usize,
    /// Step of a second pass around the coarse winner.
    #[arg(long)]
    refine_step: Option<f64>,
    #[arg(long, default_value_t = 5e-3, requires = "refine_step")]
    refine_half_width: f64,
    #[arg(long, value_enum, default_value = "json")]
    format: ReportFormat,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_parser = parse_workload, default_value = "exp_vector")]
    workload: Workload,
    #[arg(long, value_parser = parse_kernel, default_value = "quake")]
    kernel: KernelChoice,
    /// Vector length.
    #[arg(long, conflicts_with_all = ["rows", "cols"])]
    n: Option<usize>,
    #[arg(long, requires = "cols")]
    rows: Option<usize>,
    #[arg(long, requires = "rows")]
    cols: Option<usize>,
    /// The 16384x16384 softmax input instead of the desk-scale default.
    #[arg(long)]
    full_scale: bool,
    #[arg(long, default_value_t = BenchConfig::MIN_WARMUP)]
    warmup: usize,
    #[arg(long, default_value_t = BenchConfig::MIN_MEASURED)]
    iters: usize,
    /// Pre-scale explicitly instead of folding the transform into the kernel.
    #[arg(long)]
    unfused: bool,
    /// Run fused and unfused and report the additional speedup.
    #[arg(long, conflicts_with = "unfused")]
    ablation: bool,
    /// Also write the reports to this file, one JSON object per line.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ApplyArgs {
    #[arg(long, value_enum)]
    op: Op,
    #[arg(long, value_parser = parse_kernel, default_value = "quake")]
    kernel: KernelChoice,
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, short)]
    output: PathBuf,
    /// Row length for softmax; defaults to the CSV row width, or the whole
    /// buffer.
    #[arg(long)]
    cols: Option<usize>,
    #[arg(long, value_enum, default_value = "csv")]
    format: FileFormat,
    #[arg(long, default_value_t = 1.0)]
    temperature: f32,
    #[arg(long)]
    no_bias: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// JSON-lines files written by `sweep` or `bench`.
    #[arg(long, required = true, num_args = 1..)]
    merge: Vec<PathBuf>,
    #[arg(long)]
    json: bool,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(io_err(path))
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("report types serialize")
}

fn sweep(a: SweepArgs) -> Result<()> {
    let (lo, hi) = a.range;
    if lo.is_nan() || hi.is_nan() || lo >= hi {
        return Err(Error::InvalidRange { lo, hi });
    }
    let quad = a.quad.unwrap_or(QuadCoeffs::CONTINUOUS);
    let kernel = a.kernel.exp_kernel(LOG2_E, 0.0, !a.no_bias, quad)?;
    let cfg = SweepConfig {
        samples_per_unit: a.samples as f64 / (hi - lo),
        ..SweepConfig::default()
    };
    let report = lab::sweep_kernel(&kernel, lo, hi, &cfg)?;
    println!(
        "kernel={} range={:.8e}:{:.8e} samples={} max_rel_err={:.8e} mean_rel_err={:.8e} argmax_input={:.8e}",
        report.kernel, report.lo, report.hi, report.samples, report.max_rel_err, report.mean_rel_err, report.argmax_input
    );
    if let Some(path) = &a.output {
        let text = match a.format {
            ReportFormat::Csv => io::error_reports_csv(std::slice::from_ref(&report))?,
            ReportFormat::Json => json(&report) + "\n",
        };
        write_text(path, &text)?;
    }
    Ok(())
}

fn gridsearch(a: GridArgs) -> Result<()> {
    let spec = if a.paper_grid {
        GridSpec {
            mantissa_samples: a.mantissa_samples,
            ..GridSpec::published()
        }
    } else {
        let (Some(a0), Some(a1), Some(a2)) = (a.a0, a.a1, a.a2) else {
            return Err(Error::InvalidConfig("--a0, --a1 and --a2 are required".into()));
        };
        GridSpec {
            mantissa_samples: a.mantissa_samples,
            refine: a.refine_step.map(|step| Refinement {
                step,
                half_width: a.refine_half_width,
            }),
            ..GridSpec::new(a0, a1, a2)
        }
    };
    if let Some(r) = spec.refine {
        if !(r.step > 0.0 && r.half_width >= 0.0) {
            return Err(Error::InvalidConfig("refinement step must be positive".into()));
        }
    }
    let r = lab::grid_search_quad(&spec)?;
    let [a0, a1, a2] = r.best_exact;
    println!(
        "best a0={a0:.8e} a1={a1:.8e} a2={a2:.8e} max_rel_err={:.8e} points={}",
        r.best_max_rel_err, r.points_evaluated
    );
    if let Some(path) = &a.output {
        let text = match a.format {
            ReportFormat::Csv => io::grid_result_csv(&r)?,
            ReportFormat::Json => json(&r) + "\n",
        };
        write_text(path, &text)?;
    }
    Ok(())
}

fn bench_cmd(a: BenchArgs, seed: u64) -> Result<()> {
    let base = if a.full_scale {
        a.workload.full_shape()
    } else {
        a.workload.default_shape()
    };
    let shape = match (a.n, a.rows, a.cols) {
        (Some(n), _, _) => Shape::vector(n),
        (None, Some(r), Some(c)) => Shape::matrix(r, c),
        _ => base,
    };
    let cfg = BenchConfig {
        shape,
        warmup_iters: a.warmup,
        measured_iters: a.iters,
        fused: !a.unfused,
        seed,
        ..BenchConfig::new(a.workload, a.kernel)
    };
    let (lines, reports) = if a.ablation {
        let r: AblationReport = bench::fusion_ablation(&cfg)?;
        println!("additional_speedup={:.8e}", r.additional_speedup);
        (vec![json(&r)], vec![r.fused, r.unfused])
    } else {
        let r = bench::run_bench(&cfg)?;
        (vec![json(&r)], vec![r])
    };
    for l in &lines {
        println!("{l}");
    }
    print!("{}", bench::format_table(&reports));
    if let Some(path) = &a.output {
        // one BenchReport per line so that `report --merge` can read it back
        let text: String = reports.iter().map(|r| json(r) + "\n").collect();
        write_text(path, &text)?;
    }
    Ok(())
}

fn apply(a: ApplyArgs) -> Result<()> {
    let format = BufferFormat::from(a.format);
    let (xs, csv_cols) = io::read_buffer(&a.input, format)?;
    if let Some(c) = a.cols {
        if c == 0 || xs.len() % c != 0 {
            return Err(Error::ShapeMismatch { len: xs.len(), cols: c });
        }
    }
    let mut out = vec![0.0f32; xs.len()];
    let cols = a.cols.or(csv_cols);
    match a.op {
        Op::Softmax => {
            let cols = cols.unwrap_or(xs.len());
            let params = SoftmaxParams::new(a.temperature)?.with_centering_bias(!a.no_bias);
            out = nonlin::softmax_rows(&xs, cols, &params, a.kernel)?.into_vec();
        }
        Op::Gelu => par::map_chunks(&xs, &mut out, |s, d| nonlin::gelu_slice_into(s, d, a.kernel)),
        Op::Logistic => par::map_chunks(&xs, &mut out, |s, d| nonlin::logistic_slice_into(s, d, a.kernel)),
        Op::Exp => par::map_chunks(&xs, &mut out, |s, d| nonlin::exp_slice_into(s, d, a.kernel)),
    }
    io::write_buffer(&a.output, &out, format, cols)
}

/// A line from any report file.
enum Record {
    Error(ErrorReport),
    Bench(BenchReport),
}

fn parse_record(line: &str) -> Option<Vec<Record>> {
    if let Ok(r) = serde_json::from_str::<ErrorReport>(line) {
        return Some(vec![Record::Error(r)]);
    }
    if let Ok(r) = serde_json::from_str::<BenchReport>(line) {
        return Some(vec![Record::Bench(r)]);
    }
    if let Ok(r) = serde_json::from_str::<AblationReport>(line) {
        return Some(vec![Record::Bench(r.fused), Record::Bench(r.unfused)]);
    }
    None
}

fn report(a: ReportArgs) -> Result<()> {
    // keyed by the serialized record: sorted and deduplicated in one go
    let mut errors: BTreeMap<(String, String), ErrorReport> = BTreeMap::new();
    let mut benches: BTreeMap<(String, String), BenchReport> = BTreeMap::new();
    for path in &a.merge {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        if text.starts_with("kernel,") {
            for r in io::parse_error_reports_csv(&text)? {
                errors.insert((r.kernel.clone(), json(&r)), r);
            }
            continue;
        }
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let records = parse_record(line).ok_or_else(|| {
                Error::Format(format!("{}:{}: not a report record", path.display(), i + 1))
            })?;
            for r in records {
                match r {
                    Record::Error(r) => {
                        errors.insert((r.kernel.clone(), json(&r)), r);
                    }
                    Record::Bench(r) => {
                        let key = format!("{} {} {}", r.workload, r.kernel, r.fused);
                        benches.insert((key, json(&r)), r);
                    }
                }
            }
        }
    }
    if a.json {
        for r in errors.values() {
            println!("{}", json(r));
        }
        for r in benches.values() {
            println!("{}", json(r));
        }
        return Ok(());
    }
    if !errors.is_empty() {
        println!(
            "{:<8} {:>16} {:>16} {:>10} {:>16} {:>16} {:>16}",
            "kernel", "lo", "hi", "samples", "max_rel_err", "mean_rel_err", "argmax_input"
        );
        for r in errors.values() {
            println!(
                "{:<8} {:>16.8e} {:>16.8e} {:>10} {:>16.8e} {:>16.8e} {:>16.8e}",
                r.kernel, r.lo, r.hi, r.samples, r.max_rel_err, r.mean_rel_err, r.argmax_input
            );
        }
    }
    if !benches.is_empty() {
        let rows: Vec<BenchReport> = benches.into_values().collect();
        print!("{}", bench::format_table(&rows));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    par::configure_from_env()?;
    match cli.command {
        Command::Sweep(a) => sweep(a),
        Command::Gridsearch(a) => gridsearch(a),
        Command::Bench(a) => bench_cmd(a, cli.seed),
        Command::Apply(a) => apply(a),
        Command::Report(a) => report(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("quake: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 3 })
        }
    }
}

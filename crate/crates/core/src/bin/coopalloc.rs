use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use coopalloc::harness::{run_monte_carlo, to_csv, to_json, Format, Scenario};
use coopalloc::{jspa, oracle, Allocation, Error, Instance};

const EXIT_INFEASIBLE: u8 = 1;
const EXIT_INVALID: u8 = 2;

#[derive(Parser)]
#[command(name = "coopalloc", version, about = "Joint spectrum and power allocation for cooperative downlink FDMA")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo comparison of JSPA, JMPC and ESP over a demand sweep.
    Sim(SimArgs),
    /// Optimal allocation for one instance file, printed as JSON.
    Solve {
        #[arg(long)]
        instance: PathBuf,
    },
    /// Structural and optimality checks of an allocation, printed as JSON.
    /// Exits with 1 when any check fails.
    Certify {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        allocation: PathBuf,
    },
}

#[derive(clap::Args)]
struct SimArgs {
    #[arg(long = "bs")]
    num_bs: usize,
    #[arg(long = "ue", default_value_t = 20)]
    num_ue: usize,
    /// Comma-separated demand scales.
    #[arg(long, value_delimiter = ',', required = true)]
    epsilon: Vec<f64>,
    #[arg(long, default_value_t = 1000)]
    snapshots: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "b0-hz", default_value_t = 1e7)]
    b0_hz: f64,
    #[arg(long = "p0-w", default_value_t = 1.0)]
    p0_w: f64,
    #[arg(long = "cell-radius-m", default_value_t = 1000.0)]
    cell_radius_m: f64,
    #[arg(long = "inner-radius-m", default_value_t = 600.0)]
    inner_radius_m: f64,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    format: Format,
}

/// Instance file. `gamma` is either an M x N nested array or a flat
/// row-major array of length M * N, in which case `num_bs` is required.
#[derive(Deserialize)]
struct InstanceFile {
    num_bs: Option<usize>,
    num_ue: Option<usize>,
    gamma: GammaField,
    rate: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum GammaField {
    Nested(Vec<Vec<f64>>),
    Flat(Vec<f64>),
}

#[derive(Deserialize)]
struct AllocationFile {
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
}

#[derive(Serialize)]
struct SolveOutput<'a> {
    feasible: bool,
    z: Option<f64>,
    x: &'a [Vec<f64>],
    y: &'a [f64],
    serving: Vec<Vec<usize>>,
}

enum Failure {
    Invalid(String),
    Infeasible,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Invalid(e.to_string())
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))
}

fn load_instance(path: &Path) -> Result<Instance, Failure> {
    let file: InstanceFile = read_json(path)?;
    let n = file.num_ue.unwrap_or(file.rate.len());
    if n != file.rate.len() {
        return Err(Failure::Invalid(format!("num_ue is {n} but rate has {} entries", file.rate.len())));
    }
    let gamma = match file.gamma {
        GammaField::Nested(rows) => {
            if let Some(m) = file.num_bs.filter(|&m| m != rows.len()) {
                return Err(Failure::Invalid(format!("num_bs is {m} but gamma has {} rows", rows.len())));
            }
            rows
        }
        GammaField::Flat(flat) => {
            let m = file
                .num_bs
                .ok_or_else(|| Failure::Invalid("flat gamma needs num_bs".into()))?;
            if n == 0 || flat.len() != m * n {
                return Err(Failure::Invalid(format!("flat gamma has {} entries, expected {m} x {n}", flat.len())));
            }
            flat.chunks(n).map(<[f64]>::to_vec).collect()
        }
    };
    Ok(Instance::new(gamma, file.rate)?)
}

fn sim(args: SimArgs) -> Result<(), Failure> {
    let sc = Scenario {
        num_bs: args.num_bs,
        num_ue: args.num_ue,
        cell_radius_m: args.cell_radius_m,
        inner_radius_m: args.inner_radius_m,
        p0_watts: args.p0_w,
        b0_hz: args.b0_hz,
        snapshots: args.snapshots,
        seed: args.seed,
        ..Scenario::default()
    };
    let summary = run_monte_carlo(&sc, &args.epsilon)?;
    let text = match args.format {
        Format::Csv => to_csv(&summary),
        Format::Json => to_json(&summary),
    };
    match args.out {
        Some(path) => std::fs::write(&path, text).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn solve(path: &Path) -> Result<(), Failure> {
    let inst = load_instance(path)?;
    let out = jspa::optimize_detailed(&inst)?;
    let alloc = &out.alloc;
    let serving = match &out.assoc {
        Some(a) => (0..inst.num_ue()).map(|j| a.serving(j)).collect(),
        None => Vec::new(),
    };
    let report = SolveOutput {
        feasible: alloc.feasible,
        z: alloc.z.is_finite().then_some(alloc.z),
        x: &alloc.x,
        y: &alloc.y,
        serving,
    };
    println!("{}", serde_json::to_string_pretty(&report).expect("output serializes"));
    if alloc.feasible {
        Ok(())
    } else {
        Err(Failure::Infeasible)
    }
}

fn certify(instance: &Path, allocation: &Path) -> Result<(), Failure> {
    let inst = load_instance(instance)?;
    let file: AllocationFile = read_json(allocation)?;
    if file.x.len() != inst.num_bs() || file.x.iter().any(|r| r.len() != inst.num_ue()) || file.y.len() != inst.num_ue() {
        return Err(Failure::Invalid("allocation dimensions do not match the instance".into()));
    }
    let alloc = Allocation::new(file.x, file.y, true);
    let report = oracle::certify(&inst, &alloc);
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    if report.all_ok() {
        Ok(())
    } else {
        Err(Failure::Infeasible)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Sim(args) => sim(args),
        Command::Solve { instance } => solve(&instance),
        Command::Certify { instance, allocation } => certify(&instance, &allocation),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Infeasible) => ExitCode::from(EXIT_INFEASIBLE),
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_INVALID)
        }
    }
}

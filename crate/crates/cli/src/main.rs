use anyhow::{Context, Result};
use ccs_core::analysis::approx::{
    expected_complexity_checks, expected_complexity_nodes, expected_surviving_approx, ptree_bound, AllocationSpec,
};
use ccs_core::analysis::exact::expected_surviving_exact_all;
use ccs_core::cs::{build_sensing_matrix, write_matrix, MatrixKind};
use ccs_core::parityopt::{optimize_allocation, OptProblem};
use ccs_core::rng::{stream, Domain};
use ccs_core::sim::{run_campaign, sweep_ebn0, sweep_ka, write_csv, SimConfig};
use ccs_core::CcsError;
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "ccs", version, about = "Coded compressed sensing simulator and analysis tools")]
struct Cli {
    /// Overrides the seed in the config (or seeds export-matrix).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Write the main output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a Monte Carlo campaign and emit its JSON report.
    Simulate { config: PathBuf },
    /// Run one campaign per grid point and emit CSV.
    Sweep(SweepArgs),
    /// Closed-form surviving paths and complexity for an allocation.
    AnalyzeApprox(AllocArgs),
    /// Exact expected surviving paths (enumerates index patterns).
    AnalyzeExact {
        #[command(flatten)]
        alloc: AllocArgs,
        /// Sub-block length J; information counts are J - l.
        #[arg(long)]
        j: usize,
    },
    /// Choose parity lengths that minimise decoding work under a tree error target.
    OptimizeParity {
        #[arg(long)]
        b: usize,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        j: usize,
        #[arg(long)]
        k: u64,
        #[arg(long)]
        eps: f64,
    },
    /// Write a random sensing matrix in the binary matrix format.
    ExportMatrix {
        #[arg(long)]
        j: u32,
        #[arg(long)]
        rows: usize,
        #[arg(long, value_enum, default_value = "antipodal")]
        kind: Kind,
        #[arg(long, default_value_t = 1.0)]
        es: f64,
    },
}

#[derive(Args)]
struct SweepArgs {
    config: PathBuf,
    /// Comma-separated Eb/N0 points in dB.
    #[arg(long, value_delimiter = ',', conflicts_with = "ka", required_unless_present = "ka")]
    ebn0: Vec<f64>,
    /// Comma-separated active-user counts.
    #[arg(long, value_delimiter = ',')]
    ka: Vec<usize>,
}

#[derive(Args)]
struct AllocArgs {
    #[arg(long)]
    k: u64,
    /// Parity counts l_1..l_{n-1}, comma-separated.
    #[arg(long, value_delimiter = ',', required = true)]
    alloc: Vec<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Antipodal,
    Gaussian,
}

enum Failure {
    Infeasible(String),
    Other(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        let e = e.into();
        match e.downcast_ref::<CcsError>() {
            Some(CcsError::Infeasible(msg)) => Failure::Infeasible(msg.clone()),
            _ => Failure::Other(e),
        }
    }
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<SimConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut cfg = SimConfig::parse(&text).with_context(|| format!("{}", path.display()))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> std::result::Result<(), Failure> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global().context("configuring threads")?;
    }
    match cli.cmd {
        Cmd::Simulate { config } => {
            let cfg = load_config(&config, cli.seed)?;
            let report = run_campaign(&cfg)?;
            eprintln!(
                "Ka={} trials={} pe={} ci=[{}, {}] mean_tree_checks={:.1} mean_cs_iters={:.1}",
                report.ka,
                report.trials,
                report.pe.map_or("undefined".into(), |p| format!("{p:.6}")),
                report.ci_lo.map_or(String::new(), |p| format!("{p:.6}")),
                report.ci_hi.map_or(String::new(), |p| format!("{p:.6}")),
                report.mean_tree_checks,
                report.mean_cs_iters
            );
            writeln!(output(&cli.out)?, "{}", report.to_json())?;
        }
        Cmd::Sweep(args) => {
            let cfg = load_config(&args.config, cli.seed)?;
            let reports = if args.ka.is_empty() { sweep_ebn0(&cfg, &args.ebn0)? } else { sweep_ka(&cfg, &args.ka)? };
            write_csv(&reports, output(&cli.out)?)?;
        }
        Cmd::AnalyzeApprox(a) => {
            let spec = AllocationSpec::new(a.k, a.alloc);
            spec.validate(None)?;
            let mut out = output(&cli.out)?;
            for (j, e) in expected_surviving_approx::<f64>(&spec).iter().enumerate() {
                writeln!(out, "E[L~_{}]={e:.4}", j + 1)?;
            }
            writeln!(out, "E[C~_tree]={:.2}", expected_complexity_nodes::<f64>(&spec))?;
            writeln!(out, "E[parity_checks]={:.2}", expected_complexity_checks::<f64>(&spec))?;
            writeln!(out, "ptree_bound={:.6}", ptree_bound(&spec))?;
        }
        Cmd::AnalyzeExact { alloc, j } => {
            if let Some(&x) = alloc.alloc.iter().find(|&&x| x > j) {
                return Err(CcsError::InvalidProfile(format!("l={x} exceeds J={j}")).into());
            }
            let l: Vec<usize> = std::iter::once(0).chain(alloc.alloc.iter().copied()).collect();
            let m: Vec<usize> = l.iter().map(|&x| j - x).collect();
            let exact: Vec<f64> = expected_surviving_exact_all(alloc.k, &m, &l)?;
            let mut out = output(&cli.out)?;
            for (idx, e) in exact.iter().enumerate() {
                writeln!(out, "E[L_{}]={e:.4}", idx + 1)?;
            }
        }
        Cmd::OptimizeParity { b, n, j, k, eps } => {
            let prob = OptProblem::new(b, n, j, k, eps)?;
            let res = optimize_allocation(&prob)?;
            if !res.feasible {
                return Err(Failure::Infeasible(format!(
                    "smallest reachable E[L~_{}] is {:.7}, above eps={eps}",
                    n - 1,
                    res.e_last
                )));
            }
            let alloc: Vec<String> = res.l.iter().map(|v| v.to_string()).collect();
            let mut out = output(&cli.out)?;
            writeln!(out, "allocation={}", alloc.join(","))?;
            writeln!(out, "E[C~_tree]={:.2}", res.objective)?;
            writeln!(out, "E[L~_{}]={:.6}", n - 1, res.e_last)?;
            writeln!(out, "slack={:.6}", res.slack(eps))?;
        }
        Cmd::ExportMatrix { j, rows, kind, es } => {
            let kind = match kind {
                Kind::Antipodal => MatrixKind::Antipodal,
                Kind::Gaussian => MatrixKind::Gaussian,
            };
            let mut rng = stream(cli.seed.unwrap_or(0), Domain::SensingMatrix, 0);
            let a = build_sensing_matrix::<f32, _>(kind, j, rows, es, &mut rng)?;
            let Some(path) = &cli.out else {
                return Err(anyhow::anyhow!("export-matrix needs --out").into());
            };
            let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            let mut w = BufWriter::new(f);
            write_matrix(&a, &mut w)?;
            w.flush()?;
            eprintln!("wrote {rows}x{} matrix to {}", a.cols(), path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Infeasible(msg)) => {
            eprintln!("infeasible: {msg}");
            println!("infeasible");
            ExitCode::from(2)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

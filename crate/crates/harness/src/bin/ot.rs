use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ot_core::{
    exact_ot, ipot, sinkhorn, sinkhorn_log, BarycenterProblem, IpotConfig, PlanSource,
    SinkhornConfig, SolverReport,
};
use ot_harness::bench::{self, Gauss1dOptions, Method, ScalingOptions};
use ot_harness::color::{color_transfer, TransferSolver};
use ot_harness::io::{self, fmt_f64, TraceOptions};
use ot_harness::ppm::PpmImage;
use ot_harness::{instances, parallelism_from_env, HarnessError, Result};

#[derive(Parser)]
#[command(name = "ot", version, about = "Discrete optimal transport solvers and experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one transport problem from text files.
    Solve(SolveArgs),
    /// Convergence traces on the 1-D Gaussian-mixture grid.
    BenchGauss1d(Gauss1dArgs),
    /// Time to a target precision against problem size.
    BenchScaling(ScalingArgs),
    /// IPOT-WB and IBP barycenters.
    Barycenter(BarycenterArgs),
    /// Per-channel palette transfer between two PPM images.
    ColorTransfer(ColorArgs),
    /// Envelope gradients against finite differences.
    Gradcheck(GradcheckArgs),
    /// Gradient-descent fit of a point cloud to a two-mode mixture.
    FitDemo(FitArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SolveMethod {
    Sinkhorn,
    SinkhornLog,
    Ipot,
    Exact,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long, value_enum)]
    method: SolveMethod,
    #[arg(long)]
    mu: PathBuf,
    #[arg(long)]
    nu: PathBuf,
    #[arg(long)]
    cost: PathBuf,
    /// Entropic regularization in cost units.
    #[arg(long, conflicts_with = "eps_rel")]
    eps: Option<f64>,
    /// Entropic regularization as a fraction of max C.
    #[arg(long)]
    eps_rel: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = 1)]
    inner_l: usize,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iters: usize,
    #[arg(long, default_value_t = 10)]
    check_every: usize,
    #[arg(long)]
    out_plan: Option<PathBuf>,
    #[arg(long)]
    out_trace: Option<PathBuf>,
    /// Write zero wall times so outputs are byte-identical across runs.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Args)]
struct Gauss1dArgs {
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iters: usize,
    #[arg(long)]
    no_timing: bool,
}

#[derive(Args)]
struct ScalingArgs {
    #[arg(long, value_delimiter = ',', default_value = "64,128,256,512")]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 6)]
    seeds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 16)]
    dim: usize,
    #[arg(long, default_value_t = 1e-4)]
    precision: f64,
    /// Sinkhorn ε as a fraction of max C.
    #[arg(long, default_value_t = 0.01)]
    eps_rel: f64,
    /// IPOT β as a fraction of max C.
    #[arg(long, default_value_t = 0.01)]
    beta_rel: f64,
    #[arg(long, default_value_t = 20_000)]
    max_iters: usize,
    /// Each timing is the fastest of this many runs.
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    /// CSV output; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BarycenterArgs {
    /// Input histograms on a shared support; random blobs when absent.
    #[arg(long, num_args = 1.., requires = "cost")]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    cost: Option<PathBuf>,
    /// Number of random blobs.
    #[arg(long, default_value_t = 4)]
    k: usize,
    #[arg(long, default_value_t = 20)]
    side: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// ε = β as a fraction of max C.
    #[arg(long, default_value_t = 0.001)]
    reg_rel: f64,
    #[arg(long, default_value_t = 50)]
    iters: usize,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long)]
    no_timing: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum TransferMethod {
    Exact,
    Ipot,
}

#[derive(Args)]
struct ColorArgs {
    #[arg(long)]
    src: PathBuf,
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "exact")]
    method: TransferMethod,
    /// IPOT β in squared-intensity units.
    #[arg(long, default_value_t = 100.0)]
    beta: f64,
    #[arg(long, default_value_t = 50_000)]
    max_iters: usize,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 20)]
    instances: usize,
    #[arg(long, default_value_t = 5)]
    points: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long, default_value_t = 50)]
    n: usize,
    #[arg(long, default_value_t = 60)]
    steps: usize,
    /// Step size; defaults to n/5, which closes 40% of each gap per step.
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    exact: bool,
    /// Loss per step as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    out_cloud: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    let parallel = parallelism_from_env()?;
    match command {
        Command::Solve(a) => solve(a, parallel),
        Command::BenchGauss1d(a) => gauss1d(a, parallel),
        Command::BenchScaling(a) => scaling(a),
        Command::Barycenter(a) => barycenter(a, parallel),
        Command::ColorTransfer(a) => color(a, parallel),
        Command::Gradcheck(a) => gradcheck(a),
        Command::FitDemo(a) => fit(a, parallel),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn write_text(path: &Path, text: String) -> Result<()> {
    fs::write(path, text).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn solve(a: SolveArgs, parallel: bool) -> Result<ExitCode> {
    let mu = io::read_histogram(&a.mu)?;
    let nu = io::read_histogram(&a.nu)?;
    let c = io::read_cost(&a.cost)?;
    let eps = match (a.eps, a.eps_rel) {
        (Some(e), _) => e,
        (None, Some(r)) => r * c.max(),
        (None, None) => 0.1,
    };
    let sk = SinkhornConfig {
        epsilon: eps,
        max_iters: a.max_iters,
        tolerance: a.tol,
        check_every: a.check_every,
        parallel,
    };
    let report: SolverReport = match a.method {
        SolveMethod::Sinkhorn => sinkhorn(&mu, &nu, &c, &sk)?,
        SolveMethod::SinkhornLog => sinkhorn_log(&mu, &nu, &c, &sk)?,
        SolveMethod::Ipot => ipot(
            &mu,
            &nu,
            &c,
            &IpotConfig {
                beta: a.beta,
                inner_iters: a.inner_l,
                max_outer_iters: a.max_iters,
                tolerance: a.tol,
                check_every: a.check_every,
                parallel,
            },
        )?,
        SolveMethod::Exact => exact_ot(&mu, &nu, &c)?,
    };
    if let Some(path) = &a.out_plan {
        io::write_matrix(path, report.plan.view())?;
    }
    if let Some(path) = &a.out_trace {
        let opts = TraceOptions {
            reference: None,
            no_timing: a.no_timing,
        };
        io::write_trace_file(path, &report.trace, opts)?;
    }
    println!("distance {}", fmt_f64(report.distance));
    println!("status {}", report.termination.as_str());
    println!("iterations {}", report.iterations);
    Ok(if report.converged { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn gauss1d(a: Gauss1dArgs, parallel: bool) -> Result<ExitCode> {
    create_dir(&a.out_dir)?;
    let g = bench::bench_gauss1d(&Gauss1dOptions {
        beta: a.beta,
        ipot_iters: a.max_iters,
        parallel,
        ..Gauss1dOptions::default()
    })?;
    println!("w_lp {}", fmt_f64(g.w_lp));
    println!("run,iterations,final_cost,rel_gap,first_iter_within_1e-6");
    for run in &g.runs {
        let path = a.out_dir.join(format!("gauss1d_{}.csv", run.label));
        let opts = TraceOptions {
            reference: Some(g.w_lp),
            no_timing: a.no_timing,
        };
        io::write_trace_file(&path, &run.report.trace, opts)?;
        let first = bench::first_within(&run.report.trace, g.w_lp, 1e-6)
            .map(|(it, _)| it.to_string())
            .unwrap_or_default();
        println!(
            "{},{},{},{},{}",
            run.label,
            run.report.iterations,
            fmt_f64(run.report.distance),
            fmt_f64((run.report.distance - g.w_lp).abs() / g.w_lp),
            first
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn scaling(a: ScalingArgs) -> Result<ExitCode> {
    let opts = ScalingOptions {
        sizes: a.sizes,
        seeds: a.seeds,
        first_seed: a.seed,
        dim: a.dim,
        precision: a.precision,
        eps_rel: a.eps_rel,
        beta_rel: a.beta_rel,
        max_iters: a.max_iters,
        repeats: a.repeats,
        methods: Method::ALL.to_vec(),
    };
    let cells = bench::bench_scaling(&opts)?;
    let out: Box<dyn std::io::Write> = match &a.out {
        Some(p) => Box::new(fs::File::create(p).map_err(|source| HarnessError::Io {
            path: p.clone(),
            source,
        })?),
        None => Box::new(std::io::stdout()),
    };
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n", "method", "seconds", "iterations"])?;
    for cell in cells {
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        w.write_record([
            cell.n.to_string(),
            cell.method.as_str().to_string(),
            opt(cell.seconds),
            opt(cell.iterations),
        ])?;
    }
    w.flush().map_err(|source| HarnessError::Io {
        path: PathBuf::from("<csv>"),
        source,
    })?;
    Ok(ExitCode::SUCCESS)
}

fn barycenter(a: BarycenterArgs, parallel: bool) -> Result<ExitCode> {
    let problem = match &a.cost {
        Some(cost) => {
            let inputs = a.inputs.iter().map(|p| io::read_histogram(p)).collect::<Result<Vec<_>>>()?;
            BarycenterProblem::uniform(inputs, io::read_cost(cost)?)?
        }
        None => instances::shifted_blobs(a.seed, a.k, a.side)?,
    };
    let reg = a.reg_rel * problem.cost().max();
    let b = bench::bench_barycenter(&problem, reg, a.iters, parallel)?;
    create_dir(&a.out_dir)?;
    let n = problem.support_size();
    let grid = |q: &[f64]| -> String {
        // square supports print as grids, others as one value per line
        let side = (n as f64).sqrt().round() as usize;
        let width = if side * side == n { side } else { 1 };
        q.chunks(width)
            .map(|row| row.iter().map(|&v| fmt_f64(v)).collect::<Vec<_>>().join(" ") + "\n")
            .collect()
    };
    write_text(&a.out_dir.join("q_ipot_wb.txt"), grid(b.ipot_wb.q.as_slice()))?;
    write_text(&a.out_dir.join("q_ibp.txt"), grid(b.ibp.q.as_slice()))?;
    let (h_wb, h_ibp) = b.entropies();
    println!("method,entropy,seconds");
    let t = |s: f64| if a.no_timing { 0.0 } else { s };
    println!("ipot_wb,{},{}", fmt_f64(h_wb), fmt_f64(t(b.seconds_ipot_wb)));
    println!("ibp,{},{}", fmt_f64(h_ibp), fmt_f64(t(b.seconds_ibp)));
    Ok(ExitCode::SUCCESS)
}

fn color(a: ColorArgs, parallel: bool) -> Result<ExitCode> {
    let src = PpmImage::read(&a.src)?;
    let reference = PpmImage::read(&a.reference)?;
    let solver = match a.method {
        TransferMethod::Exact => TransferSolver::Exact,
        TransferMethod::Ipot => TransferSolver::Ipot(IpotConfig {
            beta: a.beta,
            max_outer_iters: a.max_iters,
            tolerance: 1e-12,
            parallel,
            ..IpotConfig::default()
        }),
    };
    color_transfer(&src, &reference, &solver)?.write(&a.out)?;
    Ok(ExitCode::SUCCESS)
}

fn gradcheck(a: GradcheckArgs) -> Result<ExitCode> {
    let g = bench::gradcheck(a.seed, a.instances, a.points)?;
    println!("instances {}", g.instances);
    println!("rejected {}", g.rejected);
    println!("max_rel_err_cost {}", fmt_f64(g.max_rel_err_cost));
    println!("max_rel_err_support {}", fmt_f64(g.max_rel_err_support));
    let ok = g.max_rel_err_cost <= 1e-4 && g.max_rel_err_support <= 1e-4;
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn fit(a: FitArgs, parallel: bool) -> Result<ExitCode> {
    let source = if a.exact {
        PlanSource::Exact
    } else {
        PlanSource::Ipot(IpotConfig {
            parallel,
            ..IpotConfig::default()
        })
    };
    let lr = a.lr.unwrap_or(a.n as f64 / 5.0);
    let demo = bench::fit_demo(a.seed, a.n, a.steps, lr, source)?;
    let losses: String = std::iter::once("step,loss\n".to_string())
        .chain(demo.fit.losses.iter().enumerate().map(|(k, &l)| format!("{k},{}\n", fmt_f64(l))))
        .collect();
    match &a.out {
        Some(p) => write_text(p, losses)?,
        None => print!("{losses}"),
    }
    if let Some(p) = &a.out_cloud {
        io::write_matrix(p, demo.fit.cloud.points())?;
    }
    eprintln!(
        "loss {} -> {}; variance target {} fitted {}",
        demo.fit.losses[0],
        demo.fit.losses.last().copied().unwrap_or(f64::NAN),
        demo.target.variance(),
        demo.fit.cloud.variance()
    );
    Ok(ExitCode::SUCCESS)
}

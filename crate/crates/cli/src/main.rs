use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use airga::airga::{
    airga_run, full_error_h2, h2_distance, h2_norm, AirgaConfig, ExpansionPointSet, H2Method,
    ReducedSystem, RunTrace, SolverKind,
};
use airga::diagnostics::{build_ledger, diagnose, FrequencyGrid, ResidualLedger};
use airga::linalg::SparseMatrix;
use airga::model_io::{
    beam_generate, read_system, write_mm, write_system, IoChoice, MassModel, ModelSpec,
};
use airga::spai::SpaiOptions;
use airga::system::SecondOrderSystem;

#[derive(Parser)]
#[command(name = "airga", version, about = "Moment-matching reduction of second-order systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a chain-on-foundation benchmark model.
    Generate(GenerateArgs),
    /// Reduce a system and write the reduced model plus run tables.
    Reduce(ReduceArgs),
    /// Compare a reduced model against the full one.
    Evaluate(EvaluateArgs),
    /// Stability diagnostics from a CG run's residual ledger.
    Diagnose(DiagnoseArgs),
    /// Time solver strategies over model sizes.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum MassArg {
    Identity,
    Consistent,
}

#[derive(Clone, Copy, ValueEnum)]
enum IoArg {
    Uniform,
    Collocated,
    EndToEnd,
}

#[derive(clap::Args)]
struct GenerateArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 0.05)]
    beta: f64,
    #[arg(long, default_value_t = 1.0)]
    stiffness_scale: f64,
    #[arg(long, default_value_t = 1.0)]
    mass_scale: f64,
    #[arg(long, default_value_t = 0.2)]
    foundation: f64,
    #[arg(long, value_enum, default_value_t = MassArg::Identity)]
    mass: MassArg,
    #[arg(long, value_enum, default_value_t = IoArg::Uniform)]
    io: IoArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args, Clone)]
struct RunArgs {
    #[arg(long, default_value = "cg-spai")]
    solver: SolverKind,
    #[arg(long, default_value_t = 30)]
    rmax: usize,
    /// Initial points `a:b:l`, linearly spaced.
    #[arg(long, default_value = "1:100:3")]
    points: String,
    #[arg(long, default_value_t = 1e-6)]
    outer_tol: f64,
    #[arg(long, default_value_t = 1e-6)]
    inner_tol: f64,
    #[arg(long, default_value_t = 0.01)]
    spai_tol: f64,
    #[arg(long, default_value_t = 1e-10)]
    cg_rtol: f64,
    #[arg(long)]
    cg_maxit: Option<usize>,
    #[arg(long, default_value_t = 3)]
    update_start: usize,
    #[arg(long, default_value_t = 20)]
    max_outer: usize,
    #[arg(long, default_value = "lyapunov")]
    h2: H2Method,
}

#[derive(clap::Args)]
struct ReduceArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    run: RunArgs,
    /// Echoed into the report; the reduction itself draws no random numbers.
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EvalMethod {
    /// Lyapunov for `n <= 500`, quadrature above.
    Auto,
    Lyapunov,
    Quadrature,
}

#[derive(clap::Args)]
struct EvaluateArgs {
    #[arg(long)]
    full: PathBuf,
    #[arg(long)]
    reduced: PathBuf,
    /// Log-spaced frequencies `a:b:k`.
    #[arg(long, default_value = "0.01:10000:200")]
    grid: String,
    #[arg(long, value_enum, default_value_t = EvalMethod::Auto)]
    method: EvalMethod,
    /// Pointwise errors as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(clap::Args)]
struct DiagnoseArgs {
    /// A `reduce` output directory, or a ledger directory.
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    system: PathBuf,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = airga::diagnostics::DEFAULT_MAX_DIM)]
    max_dim: usize,
    /// Where the CSV tables go; defaults to the trace directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "200,2000")]
    sizes: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "cg-spai,cg-spai-update")]
    solvers: Vec<SolverKind>,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    run: RunArgs,
}

fn parse_triple(s: &str, what: &str) -> Result<(f64, f64, usize)> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        bail!("{what} must look like a:b:k, got '{s}'");
    }
    let a: f64 = parts[0].parse().with_context(|| format!("{what}: bad start '{}'", parts[0]))?;
    let b: f64 = parts[1].parse().with_context(|| format!("{what}: bad end '{}'", parts[1]))?;
    let k: usize = parts[2].parse().with_context(|| format!("{what}: bad count '{}'", parts[2]))?;
    if k == 0 {
        bail!("{what}: count must be at least 1");
    }
    Ok((a, b, k))
}

fn config(run: &RunArgs) -> Result<AirgaConfig> {
    let (a, b, l) = parse_triple(&run.points, "--points")?;
    let initial_points = if l == 1 {
        ExpansionPointSet::new(vec![a], airga::airga::PointOrigin::Initial)?
    } else {
        ExpansionPointSet::linspace(a, b, l)?
    };
    Ok(AirgaConfig {
        r_max: run.rmax,
        initial_points,
        outer_tol: run.outer_tol,
        inner_tol: run.inner_tol,
        solver: run.solver,
        spai: SpaiOptions {
            tol: run.spai_tol,
            ..SpaiOptions::default()
        },
        cg_rtol: run.cg_rtol,
        cg_maxit: run.cg_maxit,
        update_start_iteration: run.update_start,
        max_outer: run.max_outer,
        h2_method: run.h2,
        fixed_blocks: None,
    })
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn cmd_generate(args: &GenerateArgs) -> Result<()> {
    let spec = ModelSpec {
        n: args.n,
        alpha: args.alpha,
        beta: args.beta,
        stiffness_scale: args.stiffness_scale,
        mass_scale: args.mass_scale,
        foundation: args.foundation,
        mass: match args.mass {
            MassArg::Identity => MassModel::Identity,
            MassArg::Consistent => MassModel::Consistent,
        },
        io: match args.io {
            IoArg::Uniform => IoChoice::Uniform,
            IoArg::Collocated => IoChoice::Collocated,
            IoArg::EndToEnd => IoChoice::EndToEnd,
        },
    };
    let sys = beam_generate(&spec).context("generate: building model")?;
    write_system(&args.out, &sys).context("generate: writing system")?;
    println!("wrote n={} system to {}", sys.n(), args.out.display());
    Ok(())
}

/// The reduced matrices as a (dense-backed) system directory.
fn reduced_as_system(red: &ReducedSystem) -> Result<SecondOrderSystem> {
    Ok(SecondOrderSystem::new(
        SparseMatrix::from_dense(&red.mh),
        SparseMatrix::from_dense(&red.dh),
        SparseMatrix::from_dense(&red.kh),
        red.fh.clone(),
        red.cph.clone(),
        Some(red.cvh.clone()),
        red.alpha,
        red.beta,
    )?)
}

fn write_run(out: &Path, red: &ReducedSystem, trace: &RunTrace, header: &str) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_system(&out.join("reduced"), &reduced_as_system(red)?)?;
    if let Some(b) = &red.basis {
        write_mm(&out.join("basis.mtx"), &SparseMatrix::from_dense(&b.assembled))?;
    }
    write_file(&out.join("cells.csv"), &trace.cells_csv())?;
    write_file(&out.join("outer.csv"), &trace.outer_csv())?;
    write_file(&out.join("moment_errors.csv"), &trace.moment_errors_csv())?;
    write_file(&out.join("report.txt"), &format!("{header}{}", trace.report()))?;
    if trace.solver.is_iterative() {
        build_ledger(trace)?.write_dir(&out.join("ledger"))?;
    }
    Ok(())
}

fn cmd_reduce(args: &ReduceArgs) -> Result<()> {
    let sys = read_system(&args.input)
        .with_context(|| format!("reduce: reading system from {}", args.input.display()))?;
    let cfg = config(&args.run).context("reduce: parsing options")?;
    let (red, trace) = airga_run(&sys, &cfg).context("reduce: running reduction")?;
    let header = format!("seed: {}\ninput: {}\n", args.seed, args.input.display());
    write_run(&args.out, &red, &trace, &header).context("reduce: writing outputs")?;
    println!(
        "final r: {}  outer iterations: {}  converged: {}",
        red.r(),
        trace.outer.len(),
        trace.converged
    );
    Ok(())
}

fn frob(h: &[num_complex::Complex64]) -> f64 {
    h.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let full = read_system(&args.full).context("evaluate: reading full system")?;
    let red_sys = read_system(&args.reduced).context("evaluate: reading reduced system")?;
    if full.inputs() != red_sys.inputs() || full.outputs() != red_sys.outputs() {
        bail!(airga::Error::Validation(format!(
            "evaluate: full model is {}x{} but reduced model is {}x{}",
            full.outputs(),
            full.inputs(),
            red_sys.outputs(),
            red_sys.inputs()
        )));
    }
    let red = ReducedSystem::from_full(&red_sys);
    let (a, b, k) = parse_triple(&args.grid, "--grid")?;
    let omegas = if k == 1 {
        vec![a]
    } else {
        if !(a > 0.0 && b > a) {
            bail!("--grid needs 0 < a < b, got {a}:{b}");
        }
        (0..k)
            .map(|i| a * (b / a).powf(i as f64 / (k - 1) as f64))
            .collect()
    };
    let method = match args.method {
        EvalMethod::Auto if full.n() <= 500 => EvalMethod::Lyapunov,
        EvalMethod::Auto => EvalMethod::Quadrature,
        m => m,
    };
    let (err, norm, label) = match method {
        EvalMethod::Lyapunov => {
            let f = ReducedSystem::from_full(&full);
            let d = h2_distance(&f, &red, H2Method::Lyapunov).context("evaluate: H2 distance")?;
            let n = h2_norm(&f, H2Method::Lyapunov).context("evaluate: H2 norm")?;
            let label = if d.fell_back || n.fell_back { "lyapunov (quadrature fallback)" } else { "lyapunov" };
            (d.value, n.value, label)
        }
        _ => {
            let (e, n) = full_error_h2(&full, &red).context("evaluate: H2 quadrature")?;
            (e, n, "quadrature")
        }
    };
    let mut csv = String::from("omega,abs_error,full_norm\n");
    let (mut worst, mut worst_w, mut peak) = (0.0f64, omegas[0], 0.0f64);
    for &w in &omegas {
        let h = full.response(w).with_context(|| format!("evaluate: full response at {w}"))?;
        let hr = red.response(w).with_context(|| format!("evaluate: reduced response at {w}"))?;
        let diff: Vec<_> = h.iter().zip(&hr).map(|(x, y)| x - y).collect();
        let e = frob(&diff);
        peak = peak.max(frob(&h));
        if e > worst {
            worst = e;
            worst_w = w;
        }
        let _ = writeln!(csv, "{w:.10e},{e:.6e},{:.6e}", frob(&h));
    }
    let rel = if norm > 0.0 { err / norm } else { err };
    println!("n: {}  r: {}", full.n(), red.r());
    println!("H2 method: {label}");
    println!("absolute H2 error: {err:.6e}");
    println!("relative H2 error: {rel:.6e}");
    println!("grid points: {}", omegas.len());
    println!("max pointwise error: {worst:.6e} at omega {worst_w:.6e}");
    println!("max pointwise error / peak |H|: {:.6e}", if peak > 0.0 { worst / peak } else { worst });
    if let Some(p) = &args.csv {
        write_file(p, &csv)?;
    }
    Ok(())
}

fn cmd_diagnose(args: &DiagnoseArgs) -> Result<()> {
    let dir = if args.trace.join("ledger").is_dir() {
        args.trace.join("ledger")
    } else {
        args.trace.clone()
    };
    let ledger = ResidualLedger::read_dir(&dir).map_err(|e| match e {
        airga::Error::EmptyLedger(m) => anyhow!("diagnose: no residual ledger: {m}"),
        other => anyhow!(other).context("diagnose: reading ledger"),
    })?;
    let sys = read_system(&args.system).context("diagnose: reading system")?;
    if sys.n() != ledger.n() {
        bail!(airga::Error::Validation(format!(
            "diagnose: ledger has n = {} but the system has n = {}",
            ledger.n(),
            sys.n()
        )));
    }
    let report = diagnose(&sys, &ledger, &FrequencyGrid::default(), args.seed, args.max_dim)
        .context("diagnose: analysis")?;
    let out = args.out.clone().unwrap_or_else(|| args.trace.clone());
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    write_file(&out.join("orthogonality.csv"), &report.orthogonality_csv())?;
    write_file(&out.join("conditions.csv"), &report.conditions_csv())?;
    write_file(&out.join("diagnostics.txt"), &report.text())?;
    print!("{}", report.text());
    Ok(())
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k == 0 {
        f64::NAN
    } else if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

fn cmd_bench(args: &BenchArgs) -> Result<()> {
    if args.repeats == 0 {
        bail!("bench: --repeats must be at least 1");
    }
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut runs = String::from(
        "size,solver,repeat,status,r,outer,cg_iters,total_seconds,precond_seconds,solve_seconds,precond_seconds_from_update_start\n",
    );
    let mut cells = String::from("size,solver,repeat,");
    let mut cells_header_done = false;
    let mut totals = String::from(
        "size,solver,runs,failures,r,outer,cg_iters,median_total_seconds,median_precond_seconds,median_solve_seconds,median_precond_seconds_from_update_start\n",
    );
    for &n in &args.sizes {
        let sys = match beam_generate(&ModelSpec::with_n(n)) {
            Ok(s) => s,
            Err(e) => {
                for s in &args.solvers {
                    let _ = writeln!(totals, "{n},{},0,{},,,,,,,", s.name(), args.repeats);
                    eprintln!("bench: n={n}: {e}");
                }
                continue;
            }
        };
        for &solver in &args.solvers {
            let mut cfg = config(&args.run)?;
            cfg.solver = solver;
            let mut t_total = Vec::new();
            let mut t_pre = Vec::new();
            let mut t_solve = Vec::new();
            let mut t_upd = Vec::new();
            let mut last: Option<(usize, usize, usize)> = None;
            let mut failures = 0;
            for rep in 0..args.repeats {
                let start = Instant::now();
                match airga_run(&sys, &cfg) {
                    Ok((red, trace)) => {
                        let total = start.elapsed().as_secs_f64();
                        let pre = trace.precond_seconds_from(1);
                        let solve = trace.solve_seconds_from(1);
                        let upd = trace.precond_seconds_from(cfg.update_start_iteration);
                        let _ = writeln!(
                            runs,
                            "{n},{},{},ok,{},{},{},{total:.6},{pre:.6},{solve:.6},{upd:.6}",
                            solver.name(),
                            rep + 1,
                            red.r(),
                            trace.outer.len(),
                            trace.cg_iterations()
                        );
                        let csv = trace.cells_csv();
                        let mut lines = csv.lines();
                        let head = lines.next().unwrap_or_default();
                        if !cells_header_done {
                            cells.push_str(head);
                            cells.push('\n');
                            cells_header_done = true;
                        }
                        for l in lines {
                            let _ = writeln!(cells, "{n},{},{},{l}", solver.name(), rep + 1);
                        }
                        t_total.push(total);
                        t_pre.push(pre);
                        t_solve.push(solve);
                        t_upd.push(upd);
                        last = Some((red.r(), trace.outer.len(), trace.cg_iterations()));
                    }
                    Err(e) => {
                        failures += 1;
                        let msg = e.to_string().replace([',', '\n'], ";");
                        let _ = writeln!(runs, "{n},{},{},failed: {msg},,,,,,,", solver.name(), rep + 1);
                        eprintln!("bench: n={n} solver={} repeat {}: {e}", solver.name(), rep + 1);
                    }
                }
            }
            let (r, outer, it) = last.map_or((String::new(), String::new(), String::new()), |(a, b, c)| {
                (a.to_string(), b.to_string(), c.to_string())
            });
            let _ = writeln!(
                totals,
                "{n},{},{},{failures},{r},{outer},{it},{:.6},{:.6},{:.6},{:.6}",
                solver.name(),
                args.repeats,
                median(&mut t_total),
                median(&mut t_pre),
                median(&mut t_solve),
                median(&mut t_upd)
            );
        }
    }
    if !cells_header_done {
        cells.push_str("outer,point,shift,precond,chain_len,solves,cg_iters,unconverged,solve_seconds,precond_seconds\n");
    }
    write_file(&args.out.join("bench_runs.csv"), &runs)?;
    write_file(&args.out.join("bench_cells.csv"), &cells)?;
    write_file(&args.out.join("bench_totals.csv"), &totals)?;
    print!("{totals}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Reduce(a) => cmd_reduce(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Diagnose(a) => cmd_diagnose(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

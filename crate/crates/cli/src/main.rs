use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use nalgebra::DMatrix;

use dampopt::bench::{
    read_csv, run_campaign, test_grid, write_csv, BenchmarkSpec, CampaignOptions, ConfigResult, Family, Method,
    Overrides,
};
use dampopt::lyap::{sign_solve, solve_dense, SignOptions};
use dampopt::model::{
    build_internal_damping, modal_transform, read_system, write_system, DampingParameter, ModalRealization,
};
use dampopt::optimize::{adaptive_rbm_optimize, optimize_exact, optimize_offline_online, optimize_reduced};
use dampopt::rbm::{offline_rbm, project_reduced_model, Estimator, OfflineStart, ReducedBasis};
use dampopt::response::{exact_energy_response, quadrature_energy_response, QuadratureOptions, ResponseOptions};

#[derive(Parser, Debug)]
#[command(
    name = "dampopt",
    version,
    about = "Optimal semi-active damping gains via reduced basis methods"
)]
struct Cli {
    /// Worker threads; 0 uses every available core.
    #[arg(long, global = true, env = "DAMPOPT_THREADS", default_value_t = 0)]
    threads: usize,
    /// Directory for relative output paths.
    #[arg(long, global = true, env = "DAMPOPT_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a benchmark system file.
    Generate {
        #[command(flatten)]
        bench: BenchArgs,
        /// Place the dampers of this configuration (1-based).
        #[arg(long)]
        config: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Greedy offline phase on a test grid; writes a basis checkpoint.
    Offline {
        #[arg(long)]
        system: PathBuf,
        /// Test-grid size; defaults to 21 for four gains and 36 otherwise.
        #[arg(long)]
        grid: Option<usize>,
        /// Resume from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long, default_value = "basis.json")]
        out: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Optimize the gains of one system.
    Optimize {
        #[arg(long)]
        system: PathBuf,
        #[arg(long, value_parser = parse_method, default_value = "exact")]
        method: Method,
        /// Start gains, comma separated; defaults to `--g0` in every coordinate.
        #[arg(long, value_delimiter = ',')]
        start: Option<Vec<f64>>,
        /// Fixed basis for `rbm`; skips the offline phase.
        #[arg(long)]
        basis: Option<PathBuf>,
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long, default_value = "optimize.csv")]
        csv: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Every method on every (or the selected) damping configuration.
    Campaign {
        #[command(flatten)]
        bench: BenchArgs,
        /// 1-based configuration ids, comma separated.
        #[arg(long, value_delimiter = ',')]
        configs: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',', value_parser = parse_method, default_value = "exact,rbm,adaptive")]
        methods: Vec<Method>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Self-checks on small benchmark instances, optionally auditing a campaign CSV.
    Verify {
        /// Campaign results to audit.
        #[arg(long)]
        results: Option<PathBuf>,
        /// Gain tolerance relative to the exact optimum.
        #[arg(long, default_value_t = 1e-2)]
        gain_tol: f64,
    },
}

#[derive(Args, Debug, Clone)]
struct BenchArgs {
    #[arg(long, value_parser = parse_family)]
    family: Family,
    /// Number of masses (example1).
    #[arg(long)]
    n: Option<usize>,
    /// Masses per line (example2).
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    test_points: Option<usize>,
}

impl BenchArgs {
    fn spec(&self) -> Result<BenchmarkSpec> {
        let scale = match self.family {
            Family::Example1 => self.n.context("example1 needs --n")?,
            Family::Example2 => self.d.context("example2 needs --d")?,
        };
        Ok(BenchmarkSpec {
            overrides: Overrides {
                alpha: self.alpha,
                test_points: self.test_points,
                ..Overrides::default()
            },
            ..BenchmarkSpec::new(self.family, scale)
        })
    }
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum EstimatorArg {
    Trace,
    Frobenius,
}

#[derive(Args, Debug, Clone)]
struct SolverArgs {
    /// Estimator tolerance; defaults to the family protocol (1e-3 for example1).
    #[arg(long)]
    tol_f: Option<f64>,
    /// Nelder–Mead tolerance; defaults to the family protocol (1e-4 for example1).
    #[arg(long)]
    opt_tol: Option<f64>,
    #[arg(long, default_value_t = 2000)]
    max_evals: usize,
    #[arg(long, value_enum, default_value = "trace")]
    estimator: EstimatorArg,
    #[arg(long, default_value_t = 1e-6)]
    sign_tol: f64,
    #[arg(long, default_value_t = 10)]
    sign_iter_max: usize,
    #[arg(long, default_value_t = 1e-8)]
    trunc_tol: f64,
    /// Systems with 2n up to this size are solved densely.
    #[arg(long, default_value_t = dampopt::model::DENSE_CAP)]
    dense_cap: usize,
    #[arg(long, default_value_t = 1000.0)]
    g0: f64,
    #[arg(long, default_value_t = 100.0)]
    g0_rr: f64,
    #[arg(long, default_value_t = 30)]
    max_restarts: usize,
}

impl SolverArgs {
    fn options(&self, family: Family) -> Result<CampaignOptions> {
        let base = CampaignOptions::protocol(family);
        let opts = CampaignOptions {
            tol_f: self.tol_f.unwrap_or(base.tol_f),
            opt_tol: self.opt_tol.unwrap_or(base.opt_tol),
            max_evals: self.max_evals,
            estimator: match self.estimator {
                EstimatorArg::Trace => Estimator::Trace,
                EstimatorArg::Frobenius => Estimator::Frobenius,
            },
            response: ResponseOptions {
                sign: SignOptions {
                    tol: self.sign_tol,
                    iter_max: self.sign_iter_max,
                    trunc_tol: self.trunc_tol,
                    ..SignOptions::default()
                },
                dense_cap: self.dense_cap,
                ..ResponseOptions::default()
            },
            g0: self.g0,
            g0_rr: self.g0_rr,
            max_restarts: self.max_restarts,
            ..base
        };
        for (name, v) in [
            ("tol-f", opts.tol_f),
            ("opt-tol", opts.opt_tol),
            ("sign-tol", self.sign_tol),
            ("trunc-tol", self.trunc_tol),
        ] {
            ensure!(v > 0.0, "--{name} must be positive, got {v}");
        }
        Ok(opts)
    }
}

fn parse_family(s: &str) -> std::result::Result<Family, String> {
    s.parse().map_err(|e: dampopt::Error| e.to_string())
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    s.parse().map_err(|e: dampopt::Error| e.to_string())
}

/// Creates `dir` and proves it writable before any computation starts.
fn prepare_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    tempfile::NamedTempFile::new_in(dir).with_context(|| format!("{} is not writable", dir.display()))?;
    Ok(())
}

fn default_grid(modal: &ModalRealization) -> usize {
    if modal.num_gains() == 4 {
        21
    } else {
        36
    }
}

fn load_modal(path: &Path) -> Result<ModalRealization> {
    let sys = read_system(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(modal_transform(&sys)?)
}

fn print_rows(rows: &[ConfigResult]) {
    println!(
        "{:>4} {:>5} {:>5} {:>9} {:>14} {:>10} {:>9} {:>6} {}",
        "id", "j", "k", "method", "J", "gain err", "time s", "r", "status"
    );
    for r in rows {
        println!(
            "{:>4} {:>5} {:>5} {:>9} {:>14.6} {:>10} {:>9.2} {:>6} {}",
            r.config_id,
            r.j,
            r.k,
            r.method.as_str(),
            r.j_opt,
            r.rel_gain_err.map_or("-".into(), |e| format!("{e:.2e}")),
            r.wall_time_s,
            r.basis_r.map_or("-".into(), |v| v.to_string()),
            r.status
        );
    }
}

fn write_rows(rows: &[ConfigResult], path: &Path) -> Result<()> {
    write_csv(
        rows,
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    )?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_generate(out_dir: &Path, bench: &BenchArgs, config: Option<usize>, out: Option<PathBuf>) -> Result<bool> {
    let spec = bench.spec()?;
    let mut sys = spec.system()?;
    if let Some(id) = config {
        let (j, k) = *spec
            .all_configs()
            .get(id.wrapping_sub(1))
            .with_context(|| format!("no configuration {id}"))?;
        sys.dampers = spec.dampers(j, k);
    }
    let name = format!("{}_{}.json", bench_name(spec.family), spec.scale);
    let path = out_dir.join(out.unwrap_or_else(|| PathBuf::from(name)));
    write_system(&sys, &path)?;
    println!(
        "wrote {}: n = {}, {} gains, bounds {:?}",
        path.display(),
        sys.n(),
        sys.bounds.len(),
        sys.bounds
    );
    Ok(true)
}

fn bench_name(f: Family) -> &'static str {
    match f {
        Family::Example1 => "example1",
        Family::Example2 => "example2",
    }
}

fn cmd_offline(
    out_dir: &Path,
    system: &Path,
    grid: Option<usize>,
    resume: Option<PathBuf>,
    out: &Path,
    solver: &SolverArgs,
) -> Result<bool> {
    let modal = load_modal(system)?;
    let opts = solver.options(Family::Example1)?;
    let test = test_grid(&modal.bounds, grid.unwrap_or_else(|| default_grid(&modal)));
    let start = OfflineStart {
        basis: resume.map(ReducedBasis::load).transpose()?,
        ..OfflineStart::default()
    };
    let t0 = Instant::now();
    let result = offline_rbm(&modal, &test, &opts.rbm(), start)?;
    for (i, step) in result.history.iter().enumerate() {
        println!(
            "sweep {i}: max estimate {:.3e}, r = {}, r_err = {}, enriched at {:?} / {:?}",
            step.delta_max, step.r, step.r_err, step.g, step.g_rr
        );
    }
    let path = out_dir.join(out);
    result.basis.save(&path)?;
    println!(
        "r = {}, r_err = {} (n = {}) in {:.2} s; wrote {}",
        result.basis.r(),
        result.basis.r_err(),
        modal.n(),
        t0.elapsed().as_secs_f64(),
        path.display()
    );
    Ok(true)
}

#[allow(clippy::too_many_arguments)]
fn cmd_optimize(
    out_dir: &Path,
    system: &Path,
    method: Method,
    start: Option<Vec<f64>>,
    basis: Option<PathBuf>,
    grid: Option<usize>,
    csv: &Path,
    solver: &SolverArgs,
) -> Result<bool> {
    let modal = load_modal(system)?;
    let opts = solver.options(Family::Example1)?;
    let dim = modal.num_gains();
    let g0 = DampingParameter(start.unwrap_or_else(|| vec![opts.g0; dim])).clamped(&modal.bounds);
    ensure!(g0.len() == dim, "--start needs {dim} values");
    let test = test_grid(&modal.bounds, grid.unwrap_or_else(|| default_grid(&modal)));
    let nm = opts.nelder_mead();

    let outcome = match (method, basis) {
        (Method::Exact, _) => optimize_exact(&modal, &g0, &nm, &opts.response),
        (Method::Rbm, Some(path)) => {
            let b = ReducedBasis::load(path)?;
            project_reduced_model(&modal, &b.v1).and_then(|rm| optimize_reduced(&rm, &g0, &modal.bounds, &nm))
        }
        (Method::Rbm, None) => optimize_offline_online(&modal, &test, &g0, &opts.rbm(), &nm, None).map(|(o, _)| o),
        (Method::Adaptive, _) => {
            let g0_rr = DampingParameter(vec![opts.g0_rr; dim]);
            adaptive_rbm_optimize(&modal, &g0, &g0_rr, &test, &opts.adaptive(), None).map(|(o, _)| o)
        }
    };
    let row = match &outcome {
        Ok(o) => {
            println!(
                "{}: J = {:.8}, g = {:?}, {} evaluations, {} restarts, {:.2} s",
                method.as_str(),
                o.j_opt.value,
                o.g_opt.0,
                o.evals,
                o.restarts,
                o.wall_times.total()
            );
            ConfigResult::from_outcome(0, 0, 0, method, o)
        }
        Err(e) => {
            eprintln!("{}: {e}", method.as_str());
            ConfigResult::failed(0, 0, 0, method, dim, e)
        }
    };
    write_rows(std::slice::from_ref(&row), &out_dir.join(csv))?;
    Ok(row.converged())
}

fn cmd_campaign(
    out_dir: &Path,
    bench: &BenchArgs,
    configs: Option<Vec<usize>>,
    methods: Vec<Method>,
    out: Option<PathBuf>,
    solver: &SolverArgs,
) -> Result<bool> {
    let spec = BenchmarkSpec {
        configs,
        ..bench.spec()?
    };
    let opts = CampaignOptions {
        methods,
        ..solver.options(spec.family)?
    };
    let rows = run_campaign(&spec, &opts)?;
    print_rows(&rows);
    let name = format!("{}_{}.csv", bench_name(spec.family), spec.scale);
    write_rows(&rows, &out_dir.join(out.unwrap_or_else(|| PathBuf::from(name))))?;
    Ok(rows.iter().all(ConfigResult::converged))
}

fn check(name: &str, value: f64, bound: f64) -> bool {
    let ok = value <= bound;
    println!(
        "{} {name}: {value:.2e} (bound {bound:.0e})",
        if ok { "PASS" } else { "FAIL" }
    );
    ok
}

fn cmd_verify(results: Option<PathBuf>, gain_tol: f64) -> Result<bool> {
    let mut ok = true;
    for spec in [
        BenchmarkSpec::new(Family::Example1, 40),
        BenchmarkSpec::new(Family::Example2, 30),
    ] {
        let label = format!("{} {}", bench_name(spec.family), spec.scale);
        let sys = spec.system()?;
        let modal = modal_transform(&sys)?;
        let phi = &modal.phi;
        let n = sys.n();
        let d_int = build_internal_damping(&sys.mass, &sys.stiffness, sys.alpha)?;
        let targets = [
            (phi.transpose() * &sys.mass * phi, DMatrix::identity(n, n)),
            (
                phi.transpose() * &sys.stiffness * phi,
                DMatrix::from_diagonal(&modal.omega.map(|w| w * w)),
            ),
            (
                phi.transpose() * &d_int * phi,
                DMatrix::from_diagonal(&modal.omega.map(|w| 2.0 * sys.alpha * w)),
            ),
        ];
        let modal_err = targets
            .iter()
            .map(|(got, want)| (got - want).amax() / want.amax())
            .fold(0.0, f64::max);
        ok &= check(&format!("{label} modal identities"), modal_err, 1e-9);

        let corners: Vec<DampingParameter> = test_grid(&modal.bounds, 2);
        let mut sign_err = 0.0f64;
        let mut quad_err = 0.0f64;
        let mut reduced_err = 0.0f64;
        let full = project_reduced_model(&modal, &DMatrix::identity(n, n))?;
        for g in &corners {
            let op = modal.operator(g)?;
            let b = modal.rhs();
            let z = sign_solve(&op, &b, &SignOptions::accurate())?;
            let p = solve_dense(&op.to_dense(), &(&b * b.transpose()), usize::MAX)?;
            sign_err = sign_err.max((z.gramian() - &p).norm() / p.norm());

            let exact = exact_energy_response(&modal, g, &ResponseOptions::default())?.squared;
            let quad = quadrature_energy_response(&modal, g, &QuadratureOptions::default())?.squared;
            quad_err = quad_err.max((exact - quad).abs() / exact);
            let reduced = full.squared_response(&full.solve_gramian(g)?);
            reduced_err = reduced_err.max((exact - reduced).abs() / exact);
        }
        ok &= check(&format!("{label} sign vs dense Gramian"), sign_err, 1e-6);
        ok &= check(&format!("{label} exact vs quadrature response"), quad_err, 1e-3);
        ok &= check(&format!("{label} full-basis reduced response"), reduced_err, 1e-8);
    }

    if let Some(path) = results {
        let rows = read_csv(File::open(&path).with_context(|| format!("opening {}", path.display()))?)?;
        if rows.is_empty() {
            bail!("{} has no rows", path.display());
        }
        for r in &rows {
            let gain_ok = r.rel_gain_err.is_none_or(|e| e <= gain_tol);
            if !r.converged() || !gain_ok {
                println!(
                    "FAIL config {} {}: status {}, gain error {:?}",
                    r.config_id,
                    r.method.as_str(),
                    r.status,
                    r.rel_gain_err
                );
                ok = false;
            }
        }
        println!("audited {} rows of {}", rows.len(), path.display());
    }
    Ok(ok)
}

fn run(cli: Cli) -> Result<bool> {
    let out_dir = cli.out_dir;
    match cli.command {
        Command::Generate { bench, config, out } => {
            prepare_out_dir(&out_dir)?;
            cmd_generate(&out_dir, &bench, config, out)
        }
        Command::Offline {
            system,
            grid,
            resume,
            out,
            solver,
        } => {
            prepare_out_dir(&out_dir)?;
            cmd_offline(&out_dir, &system, grid, resume, &out, &solver)
        }
        Command::Optimize {
            system,
            method,
            start,
            basis,
            grid,
            csv,
            solver,
        } => {
            prepare_out_dir(&out_dir)?;
            cmd_optimize(&out_dir, &system, method, start, basis, grid, &csv, &solver)
        }
        Command::Campaign {
            bench,
            configs,
            methods,
            out,
            solver,
        } => {
            prepare_out_dir(&out_dir)?;
            cmd_campaign(&out_dir, &bench, configs, methods, out, &solver)
        }
        Command::Verify { results, gain_tol } => cmd_verify(results, gain_tol),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let threads = cli.threads;
    info!(
        "threads: {}",
        if threads == 0 {
            "all".into()
        } else {
            threads.to_string()
        }
    );
    match dampopt::par::with_threads(threads, move || run(cli)) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

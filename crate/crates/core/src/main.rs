use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use tentkit::harness::{
    gnuplot_script, run_convergence, run_stability, write_convergence_csv, write_stability_csv,
    HarnessError, Levels, RunConfig, Table,
};
use tentkit::mesh::{pitch_slab, Mesh1D};
use tentkit::ode::{local_order_estimate, LinearOde};
use tentkit::tableau::{builtin_sark, order_residuals, DEFAULT_ORDER_TOL};

#[derive(Parser)]
#[command(name = "tentkit", version, about = "Mapped tent pitching with structure-aware Runge-Kutta schemes in 1D")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Errors and convergence orders over a sequence of meshes.
    Converge(RunArgs),
    /// Slab stability measure for a list of substep counts.
    Stability(RunArgs),
    /// Tableau utilities.
    Tableau {
        #[command(subcommand)]
        command: TableauCommand,
    },
    /// Pitch a slab and print one line per tent.
    Pitch(RunArgs),
}

#[derive(Subcommand)]
enum TableauCommand {
    /// Order-condition residuals of a built-in SARK tableau.
    Check {
        name: String,
        #[arg(long, default_value_t = DEFAULT_ORDER_TOL)]
        tol: f64,
        /// Also estimate the local order on a random linear problem.
        #[arg(long)]
        oracle: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args, Default)]
struct RunArgs {
    /// JSON file with the same keys as the flags; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    r: Option<usize>,
    #[arg(long)]
    cmax: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    tmax: Option<f64>,
    /// Mesh levels `i0..i1`, with h = h0·2^-i.
    #[arg(long)]
    levels: Option<Levels>,
    #[arg(long)]
    h0: Option<f64>,
    /// Output CSV path (stdout if absent).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    speed: Option<f64>,
    /// `half` for u²/2 or `square` for u².
    #[arg(long)]
    burgers_flux: Option<String>,
    /// Comma-separated substep counts.
    #[arg(long, value_delimiter = ',')]
    r_list: Option<Vec<usize>>,
    /// Also write a gnuplot script for the CSV.
    #[arg(long)]
    gnuplot: Option<PathBuf>,
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig, HarnessError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_json_file(path)?,
            None => RunConfig::default(),
        };
        macro_rules! take {
            ($($field:ident),*) => {
                $(if let Some(v) = &self.$field { cfg.$field = v.clone().into(); })*
            };
        }
        take!(model, scheme, p, r, cmax, gamma, tmax, levels, h0, threads, seed, speed, burgers_flux, r_list);
        if self.out.is_some() {
            cfg.out = self.out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn with_output<F>(path: Option<&Path>, write: F) -> Result<(), HarnessError>
where
    F: FnOnce(&mut dyn Write) -> Result<(), HarnessError>,
{
    match path {
        Some(p) => {
            let mut file = std::fs::File::create(p).map_err(|source| HarnessError::Io {
                path: p.to_path_buf(),
                source,
            })?;
            write(&mut file)
        }
        None => write(&mut io::stdout().lock()),
    }
}

fn write_gnuplot(path: Option<&Path>, table: &Table<'_>, csv: Option<&Path>) -> Result<(), HarnessError> {
    let Some(path) = path else { return Ok(()) };
    let csv = csv.unwrap_or(Path::new("data.csv"));
    std::fs::write(path, gnuplot_script(table, csv)).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn converge(args: &RunArgs) -> Result<(), HarnessError> {
    let cfg = args.config()?;
    let result = run_convergence(&cfg)?;
    with_output(cfg.out.as_deref(), |w| write_convergence_csv(&result.rows, w))?;
    write_gnuplot(args.gnuplot.as_deref(), &Table::Convergence(&result.rows), cfg.out.as_deref())?;
    match result.failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn stability(args: &RunArgs) -> Result<(), HarnessError> {
    let mut cfg = args.config()?;
    if args.config.is_none() && args.model.is_none() {
        cfg.model = "advection1d".into();
    }
    let rows = run_stability(&cfg)?;
    with_output(cfg.out.as_deref(), |w| write_stability_csv(&rows, w))?;
    write_gnuplot(args.gnuplot.as_deref(), &Table::Stability(&rows), cfg.out.as_deref())
}

fn pitch(args: &RunArgs) -> Result<(), HarnessError> {
    let cfg = args.config()?;
    let model = cfg.build_model()?;
    let mesh = Mesh1D::uniform(0.0, 1.0, cfg.elements(cfg.levels.first), model.periodic())?;
    let slab = pitch_slab(&mesh, cfg.cmax, cfg.tmax, cfg.gamma)?;
    let io_err = |source| HarnessError::Io {
        path: cfg.out.clone().unwrap_or_else(|| "<stdout>".into()),
        source,
    };
    with_output(cfg.out.as_deref(), |w| slab.write_dump(w).map_err(io_err))
}

/// Exit status 0 iff the attained order equals the nominal order.
fn tableau_check(name: &str, tol: f64, oracle: bool, seed: u64) -> Result<bool, HarnessError> {
    let t = builtin_sark(name)?;
    let report = order_residuals(&t);
    let attained = report.attained_order_at(tol);
    let list = |v: &[f64]| v.iter().map(|r| format!("{r:e}")).collect::<Vec<_>>().join(" ");
    println!("scheme {} stages {}", t.name(), t.stages());
    println!("r1 {}", list(&[report.r1]));
    println!("r2 {}", list(&report.r2));
    println!("r3 {}", list(&report.r3));
    println!("attained order {attained} (tol {tol:e})");
    if oracle {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut random = || {
            let m = DMatrix::<f64>::from_fn(4, 4, |_, _| rng.gen_range(-1.0..1.0));
            let norm = m.norm().max(1.0);
            m / norm
        };
        let (l, b) = (random(), random());
        let ode = LinearOde::with_identity_mass(l, b);
        let y0 = [1.0, -0.5, 0.25, 0.75];
        let taus: Vec<f64> = (3..=8).map(|k| 0.5f64.powi(k)).collect();
        let slope = local_order_estimate(&t, &ode, &y0, &taus)
            .map_err(|e| HarnessError::Config(format!("local order oracle failed: {e}")))?;
        println!("local error slope {slope:.4} (seed {seed})");
    }
    Ok(t.nominal_order() == Some(attained))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Converge(args) => converge(args).map(|_| true),
        Command::Stability(args) => stability(args).map(|_| true),
        Command::Pitch(args) => pitch(args).map(|_| true),
        Command::Tableau {
            command: TableauCommand::Check { name, tol, oracle, seed },
        } => tableau_check(name, *tol, *oracle, *seed),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

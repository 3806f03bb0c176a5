use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sgh_rd::io::{build_run_config, convergence_csv, parse_config_text};
use sgh_rd::problems::ProblemKind;
use sgh_rd::timestepper::run;
use sgh_rd::{verify, SolverError};

#[derive(Parser)]
#[command(name = "sgh-rd", version, about = "Staggered-grid residual distribution Lagrangian hydrodynamics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one problem to its end time.
    Run(RunArgs),
    /// Taylor-Green mesh convergence study.
    Convergence(ConvergenceArgs),
    /// Run the verification suite.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct RunArgs {
    /// key=value configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    nx: Option<String>,
    #[arg(long)]
    ny: Option<String>,
    /// none | rusanov | mars
    #[arg(long)]
    viscosity: Option<String>,
    #[arg(long = "t-end")]
    t_end: Option<String>,
    #[arg(long)]
    cfl: Option<String>,
    #[arg(long = "output-dir")]
    output_dir: Option<String>,
}

#[derive(Args)]
struct ConvergenceArgs {
    #[arg(long, default_value = "taylor-green")]
    problem: String,
    /// Comma-separated cells per side
    #[arg(long, value_delimiter = ',', default_value = "8,16,32")]
    meshes: Vec<usize>,
    #[arg(long = "t-end", default_value_t = 0.5)]
    t_end: f64,
    #[arg(long, default_value_t = verify::CONVERGENCE_CFL)]
    cfl: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    Paper,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, value_enum, default_value = "paper")]
    suite: Suite,
    /// Only these criteria (comma-separated ids)
    #[arg(long, value_delimiter = ',')]
    only: Vec<usize>,
}

fn run_command(args: RunArgs) -> Result<(), SolverError> {
    let mut entries = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| SolverError::config("config", format!("cannot read {}: {e}", path.display())))?;
            parse_config_text(&text)?
        }
        None => Vec::new(),
    };
    let flags = [
        ("problem", args.problem),
        ("nx", args.nx),
        ("ny", args.ny),
        ("viscosity", args.viscosity),
        ("t_end", args.t_end),
        ("cfl", args.cfl),
        ("output_dir", args.output_dir),
    ];
    entries.extend(flags.into_iter().filter_map(|(k, v)| v.map(|v| (k.to_string(), v))));
    let cfg = build_run_config(&entries)?;
    let out = run(&cfg)?;
    let d = &out.diagnostics;
    println!("problem      {}", cfg.problem);
    println!("mesh         {}x{}", cfg.nx, cfg.ny);
    println!("steps        {}", d.steps);
    println!("final time   {}", d.final_time);
    println!("min det J    {:e}", d.min_det_j);
    println!("energy drift {:e}", out.ledger.energy_drift());
    println!("balance      {:e}", out.ledger.balance_drift());
    println!("mass drift   {:e}", out.ledger.mass_drift());
    for p in &out.snapshots {
        println!("snapshot     {}", p.display());
    }
    Ok(())
}

fn convergence_command(args: ConvergenceArgs) -> Result<(), SolverError> {
    let kind: ProblemKind = args.problem.parse()?;
    if kind != ProblemKind::TaylorGreen {
        return Err(SolverError::config("problem", "convergence studies need a reference solution; use taylor-green"));
    }
    let (_, ux, uy) = verify::taylor_green_convergence(&args.meshes, args.t_end, args.cfl)?;
    println!("# u_x\n{}", convergence_csv(&ux));
    println!("# u_y\n{}", convergence_csv(&uy));
    Ok(())
}

fn verify_command(args: VerifyArgs) -> Result<bool, SolverError> {
    let Suite::Paper = args.suite;
    let results = if args.only.is_empty() {
        verify::run_suite()
    } else {
        args.only
            .iter()
            .map(|&id| verify::criterion(id).ok_or_else(|| SolverError::Usage(format!("no criterion {id}"))))
            .collect::<Result<Vec<_>, _>>()?
    };
    for r in &results {
        println!("{r}");
    }
    Ok(results.iter().all(|r| r.passed))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(a) => run_command(a).map(|_| true),
        Command::Convergence(a) => convergence_command(a).map(|_| true),
        Command::Verify(a) => verify_command(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

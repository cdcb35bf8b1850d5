use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use dpopf::admm::AdmmConfig;
use dpopf::case::{
    build_zone_views, parse_case_json, parse_matpower, parse_partition_json, serialize_case_json,
    NetworkCase, ZonePartition, ZoneView,
};
use dpopf::harness::{self, Algorithm};
use dpopf::privacy::{self, PrivacyParams, SensitivityMode};
use dpopf::qp::QpTolerances;
use nalgebra::DVector;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_SOLVER: u8 = 3;

#[derive(Parser)]
#[command(name = "dpopf", about = "Differentially private distributed DC-OPF", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an algorithm variant and write traces and summary metrics.
    Run(RunArgs),
    /// Sweep adjacency radii and observation budgets with the inference attack.
    Attack(AttackArgs),
    /// Report the global sensitivity bound and per-zone local sensitivities.
    Sensitivity(SensitivityArgs),
    /// Convert a MATPOWER case file to the native JSON format.
    Convert(ConvertArgs),
}

#[derive(Args)]
struct CaseArgs {
    /// Network case (JSON, or MATPOWER .m).
    #[arg(long)]
    case: PathBuf,
    /// Zone partition JSON; omitted means a single zone.
    #[arg(long)]
    zones: Option<PathBuf>,
}

#[derive(Args)]
struct AdmmArgs {
    /// Penalty factor rho.
    #[arg(long, default_value_t = 100.0)]
    rho: f64,
    /// Iteration cap.
    #[arg(long, default_value_t = 300)]
    max_iters: usize,
    /// Primal residual stopping tolerance.
    #[arg(long, default_value_t = 0.5)]
    tol: f64,
}

#[derive(Args)]
struct PrivacyArgs {
    /// Privacy budget per release.
    #[arg(long, default_value_t = 1.0)]
    epsilon: f64,
    /// Adjacency radius as a fraction of each load.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Assumed number of observed iterations.
    #[arg(long, default_value_t = 1)]
    budget: usize,
    /// Scale the noise for composition over the budget.
    #[arg(long, default_value_t = false)]
    scale_composition: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    case: CaseArgs,
    /// Algorithm: admm, sp-admm or dp-admm.
    #[arg(long, default_value = "admm")]
    algo: String,
    #[command(flatten)]
    admm: AdmmArgs,
    #[command(flatten)]
    privacy: PrivacyArgs,
    /// Monte Carlo repetitions.
    #[arg(long, default_value_t = 1)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for CSV artifacts; stdout summary only if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AttackArgs {
    #[command(flatten)]
    case: CaseArgs,
    #[arg(long, default_value = "dp-admm")]
    algo: String,
    #[command(flatten)]
    admm: AdmmArgs,
    /// Privacy budget per release.
    #[arg(long, default_value_t = 1.0)]
    epsilon: f64,
    /// Zone whose load is attacked.
    #[arg(long)]
    target_zone: String,
    /// Bus whose load is inferred.
    #[arg(long)]
    target_bus: usize,
    /// Comma-separated adjacency fractions.
    #[arg(long, default_value = "0.01,0.025,0.05,0.075,0.10", value_delimiter = ',')]
    alphas: Vec<f64>,
    /// Comma-separated observation budgets.
    #[arg(long, default_value = "1,10,50", value_delimiter = ',')]
    budgets: Vec<usize>,
    /// Weight of the release-consistency penalty in the attack.
    #[arg(long, default_value_t = 1e6)]
    upsilon: f64,
    #[arg(long, default_value_t = false)]
    scale_composition: bool,
    #[arg(long, default_value_t = 3)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SensitivityArgs {
    #[command(flatten)]
    case: CaseArgs,
    #[arg(long, default_value_t = 1.0)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 100.0)]
    rho: f64,
}

#[derive(Args)]
struct ConvertArgs {
    /// MATPOWER .m input.
    #[arg(long)]
    case: PathBuf,
    /// JSON output path.
    #[arg(long)]
    out: PathBuf,
}

enum CliError {
    Data(anyhow::Error),
    Solver(anyhow::Error),
}

fn data_err(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Data(e.into())
}

fn solver_err(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Solver(e.into())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version requests are not failures.
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };

    if let Ok(threads) = std::env::var("DPOPF_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }

    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Attack(args) => cmd_attack(args),
        Command::Sensitivity(args) => cmd_sensitivity(args),
        Command::Convert(args) => cmd_convert(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_DATA)
        }
        Err(CliError::Solver(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_SOLVER)
        }
    }
}

fn load_case(path: &Path) -> Result<NetworkCase, CliError> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(CliError::Data)?;
    let case = if path.extension().is_some_and(|e| e == "m") {
        parse_matpower(&text).map_err(data_err)?
    } else {
        parse_case_json(&text).map_err(data_err)?
    };
    Ok(case)
}

fn load_zones(case: &NetworkCase, path: Option<&Path>) -> Result<Vec<ZoneView>, CliError> {
    let partition = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading {}", p.display()))
                .map_err(CliError::Data)?;
            parse_partition_json(&text).map_err(data_err)?
        }
        None => ZonePartition::single_zone(case, "all"),
    };
    build_zone_views(case, &partition).map_err(data_err)
}

fn parse_algo(s: &str) -> Result<Algorithm, CliError> {
    Algorithm::parse(s)
        .ok_or_else(|| CliError::Data(anyhow!("unknown algorithm {s:?} (admm, sp-admm, dp-admm)")))
}

fn admm_config(args: &AdmmArgs) -> AdmmConfig {
    AdmmConfig {
        rho: args.rho,
        max_iters: args.max_iters,
        tol: args.tol,
        ..AdmmConfig::default()
    }
}

fn privacy_params(args: &PrivacyArgs, algo: Algorithm) -> PrivacyParams {
    PrivacyParams {
        epsilon: args.epsilon,
        alpha_frac: args.alpha,
        attack_budget: args.budget,
        scale_composition: args.scale_composition,
        sensitivity_mode: match algo {
            Algorithm::SpAdmm => SensitivityMode::LocalMaxOverRun,
            _ => SensitivityMode::LocalPerIteration,
        },
        ..PrivacyParams::default()
    }
}

fn cmd_run(args: RunArgs) -> Result<(), CliError> {
    let case = load_case(&args.case.case)?;
    let zones = load_zones(&case, args.case.zones.as_deref())?;
    let algo = parse_algo(&args.algo)?;
    let cfg = admm_config(&args.admm);
    let privacy = privacy_params(&args.privacy, algo);

    let metrics = harness::monte_carlo(&case, &zones, algo, &cfg, &privacy, args.seed, args.runs)
        .map_err(solver_err)?;
    let first_run = harness::run_algorithm(&case, &zones, algo, &cfg, &privacy, args.seed)
        .map_err(solver_err)?;

    let converged = metrics.iter().filter(|m| m.converged).count();
    let mean_loss =
        metrics.iter().map(|m| m.optimality_loss_pct).sum::<f64>() / metrics.len() as f64;
    let mean_iters =
        metrics.iter().map(|m| m.iterations as f64).sum::<f64>() / metrics.len() as f64;
    println!("algorithm: {}", algo.name());
    println!("runs: {} (converged {converged})", metrics.len());
    println!("centralized cost: {:.6}", metrics[0].centralized_cost);
    println!("mean final cost: {:.6}", metrics.iter().map(|m| m.final_cost).sum::<f64>() / metrics.len() as f64);
    println!("mean optimality loss: {mean_loss:.4}%");
    println!("mean iterations: {mean_iters:.1}");

    if let Some(dir) = &args.out {
        // Build all artifacts before touching the filesystem so a failed
        // run leaves no partial output behind.
        let trace = harness::trace_csv(&first_run);
        let envelope = harness::envelope_csv(&metrics);
        let stats = harness::metrics_csv(&metrics);
        let sensitivity = (algo == Algorithm::DpAdmm).then(|| harness::sensitivity_csv(&first_run));
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating {}", dir.display()))
            .map_err(CliError::Data)?;
        let write = |name: &str, text: &str| {
            std::fs::write(dir.join(name), text)
                .with_context(|| format!("writing {name}"))
                .map_err(CliError::Data)
        };
        write("trace.csv", &trace)?;
        write("envelope.csv", &envelope)?;
        write("metrics.csv", &stats)?;
        if let Some(s) = &sensitivity {
            write("sensitivity.csv", s)?;
        }
        println!("artifacts written to {}", dir.display());
    }
    Ok(())
}

fn cmd_attack(args: AttackArgs) -> Result<(), CliError> {
    let case = load_case(&args.case.case)?;
    let zones = load_zones(&case, args.case.zones.as_deref())?;
    let algo = parse_algo(&args.algo)?;
    let cfg = admm_config(&args.admm);
    let privacy = PrivacyParams {
        epsilon: args.epsilon,
        scale_composition: args.scale_composition,
        sensitivity_mode: match algo {
            Algorithm::SpAdmm => SensitivityMode::LocalMaxOverRun,
            _ => SensitivityMode::LocalPerIteration,
        },
        ..PrivacyParams::default()
    };
    let matrix = harness::attack_sweep(
        &case,
        &zones,
        algo,
        &cfg,
        &privacy,
        &args.target_zone,
        args.target_bus,
        &args.alphas,
        &args.budgets,
        args.upsilon,
        args.seed,
        args.runs,
    )
    .map_err(solver_err)?;
    let csv = harness::attack_matrix_csv(&matrix);
    match &args.out {
        Some(path) => {
            std::fs::write(path, &csv)
                .with_context(|| format!("writing {}", path.display()))
                .map_err(CliError::Data)?;
            println!("attack matrix written to {}", path.display());
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn cmd_sensitivity(args: SensitivityArgs) -> Result<(), CliError> {
    let case = load_case(&args.case.case)?;
    let zones = load_zones(&case, args.case.zones.as_deref())?;
    let params = PrivacyParams {
        epsilon: args.epsilon,
        alpha_frac: args.alpha,
        ..PrivacyParams::default()
    };
    let global = privacy::global_sensitivity_bound(&case);
    println!("global sensitivity bound: {global:.6} p.u. (scale {:.6})", global / args.epsilon);
    println!("zone,local_delta,noise_scale,argmax_bus");
    for zone in &zones {
        let nb = zone.boundary.len();
        let report = privacy::local_sensitivity(
            zone,
            &DVector::zeros(nb),
            &DVector::zeros(nb),
            args.rho,
            &params,
            &QpTolerances::default(),
        )
        .map_err(solver_err)?;
        println!(
            "{},{:.6e},{:.6e},{}",
            zone.zone_id,
            report.value,
            report.value / args.epsilon,
            report.argmax_bus.map_or("-".to_string(), |b| b.to_string())
        );
    }
    Ok(())
}

fn cmd_convert(args: ConvertArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.case)
        .with_context(|| format!("reading {}", args.case.display()))
        .map_err(CliError::Data)?;
    let case = parse_matpower(&text).map_err(data_err)?;
    let json = serialize_case_json(&case);
    std::fs::write(&args.out, json)
        .with_context(|| format!("writing {}", args.out.display()))
        .map_err(CliError::Data)?;
    println!(
        "converted {} buses, {} lines, {} generators to {}",
        case.num_buses(),
        case.lines.len(),
        case.gens.len(),
        args.out.display()
    );
    Ok(())
}

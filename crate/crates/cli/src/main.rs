//! `gridcase`: complete, evaluate, and stress AC transmission test cases.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 solver failure.
//! Diagnostics go to standard error; data goes to files or standard
//! output. Every stochastic subcommand requires an explicit seed so
//! runs are reproducible from their command lines alone.

use clap::{Args, Parser, Subcommand};
use gridcase_core::{matpower, validate, Network};
use gridcase_solver::nlp::SolveOptions;
use gridcase_solver::opf::{gap_table, render_markdown, GapOptions, ModelKind};
use gridcase_solver::{check_operational, solve_pf};
use gridcase_stats::fleet::{
    fit_models, fit_tl_from_networks, read_fleet_csv, read_prices_csv, DEFAULT_MIN_MW,
};
use gridcase_stats::rng::{stream, StreamTag};
use gridcase_stats::{apply_plan, AugmentModels, AugmentPlan};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(name = "gridcase", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the generator and thermal-limit models from CSV data
    Fit(FitArgs),
    /// Complete a case with the fitted statistical models
    Augment(AugmentArgs),
    /// Check a case structurally and, optionally, operationally
    Validate(ValidateArgs),
    /// Solve AC-OPF and its relaxations, reporting optimality gaps
    GapTable(GapTableArgs),
    /// Generate the congested (demand-increase) variant of a case
    GenApi(GenApiArgs),
    /// Generate the angle-constrained variant of a case
    GenSad(GenSadArgs),
    /// Parse a case and write it back normalized
    Convert(ConvertArgs),
}

#[derive(Args)]
struct FitArgs {
    /// Fleet CSV: status, energy_source, nameplate_mw, summer_mw
    #[arg(long)]
    fleet: PathBuf,
    /// Price CSV: state, seds_label, price_per_mmbtu
    #[arg(long)]
    prices: PathBuf,
    /// Capacity floor (MW) for the capacity models
    #[arg(long, default_value_t = DEFAULT_MIN_MW)]
    min_mw: f64,
    /// Two case files with real thermal limits for the log-log fit
    #[arg(long, num_args = 1)]
    tl_case: Vec<PathBuf>,
    /// Seed for the equal-proportion resampling of the thermal fit
    #[arg(long)]
    seed: Option<u64>,
    /// Output JSON path
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct AugmentArgs {
    case: PathBuf,
    /// Plan file (TOML) selecting the models to apply
    #[arg(long)]
    plan: PathBuf,
    /// Fitted models (JSON); built-in defaults when absent
    #[arg(long)]
    models: Option<PathBuf>,
    /// Seed; overrides the plan's seed
    #[arg(long)]
    seed: Option<u64>,
    /// Output case path
    #[arg(short, long)]
    output: PathBuf,
    /// Write the per-element audit log here (JSON)
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct ValidateArgs {
    case: PathBuf,
    /// Also run a power flow and check operating limits
    #[arg(long)]
    solve: bool,
    /// Power-flow mismatch tolerance
    #[arg(long, default_value_t = 1e-8)]
    tolerance: f64,
    /// table | json
    #[arg(long, default_value = "table")]
    format: String,
}

#[derive(Args)]
struct GapTableArgs {
    cases: Vec<PathBuf>,
    /// Comma-separated relaxations: cp,nfll,soc
    #[arg(long, default_value = "cp,nfll,soc")]
    models: String,
    /// md | json
    #[arg(long, default_value = "md")]
    format: String,
    /// Worker pool size (default: logical cores)
    #[arg(long)]
    jobs: Option<usize>,
    /// Extra AC starts beyond the deterministic one
    #[arg(long, default_value_t = 0)]
    multi_start: u32,
    /// Seed for the multi-start perturbations
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; standard output when absent
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct GenApiArgs {
    case: PathBuf,
    /// Fitted models (JSON); built-in defaults when absent
    #[arg(long)]
    models: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for <name>__api.m and its JSON log
    #[arg(short, long, default_value = ".")]
    output: PathBuf,
    /// Scale only active demand, leaving power factors to drift
    #[arg(long)]
    active_only: bool,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct GenSadArgs {
    case: PathBuf,
    /// Output directory for <name>__sad.m and its JSON log
    #[arg(short, long, default_value = ".")]
    output: PathBuf,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct ConvertArgs {
    case: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long)]
    force: bool,
}

enum AppError {
    Usage(String),
    Data(String),
    Solver(String),
}

impl AppError {
    fn code(&self) -> u8 {
        match self {
            AppError::Usage(_) => 1,
            AppError::Data(_) => 2,
            AppError::Solver(_) => 3,
        }
    }
    fn message(&self) -> &str {
        match self {
            AppError::Usage(m) | AppError::Data(m) | AppError::Solver(m) => m,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version are not errors
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gridcase: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), AppError> {
    match cli.command {
        Command::Fit(args) => cmd_fit(args),
        Command::Augment(args) => cmd_augment(args),
        Command::Validate(args) => cmd_validate(args),
        Command::GapTable(args) => cmd_gap_table(args),
        Command::GenApi(args) => cmd_gen_api(args),
        Command::GenSad(args) => cmd_gen_sad(args),
        Command::Convert(args) => cmd_convert(args),
    }
}

// ---------------------------------------------------------------------------
// shared helpers

fn load_case(path: &Path) -> Result<Network, AppError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| AppError::Data(format!("{}: {e}", path.display())))?;
    let case = matpower::parse(&text)
        .map_err(|e| AppError::Data(format!("{}: {e}", path.display())))?;
    matpower::lower(&case).map_err(|e| AppError::Data(format!("{}: {e}", path.display())))
}

fn load_models(path: &Option<PathBuf>) -> Result<AugmentModels, AppError> {
    match path {
        None => Ok(AugmentModels::paper_defaults()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| AppError::Data(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| AppError::Data(format!("{}: {e}", p.display())))
        }
    }
}

/// Outputs never overwrite inputs without --force.
fn guard_overwrite(output: &Path, inputs: &[&Path], force: bool) -> Result<(), AppError> {
    if force {
        return Ok(());
    }
    let out = output.canonicalize().unwrap_or_else(|_| output.to_path_buf());
    for input in inputs {
        let inp = input.canonicalize().unwrap_or_else(|_| input.to_path_buf());
        if out == inp {
            return Err(AppError::Usage(format!(
                "{} is an input; pass --force to overwrite it",
                output.display()
            )));
        }
    }
    Ok(())
}

fn write_file(path: &Path, contents: &str) -> Result<(), AppError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)
                .map_err(|e| AppError::Data(format!("{}: {e}", dir.display())))?;
        }
    }
    std::fs::write(path, contents).map_err(|e| AppError::Data(format!("{}: {e}", path.display())))
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String, AppError> {
    serde_json::to_string_pretty(value).map_err(|e| AppError::Data(e.to_string()))
}

// ---------------------------------------------------------------------------
// subcommands

fn cmd_fit(args: FitArgs) -> Result<(), AppError> {
    let mut input_paths: Vec<&Path> = vec![&args.fleet, &args.prices];
    for p in &args.tl_case {
        input_paths.push(p);
    }
    guard_overwrite(&args.output, &input_paths, args.force)?;

    let fleet_file = std::fs::File::open(&args.fleet)
        .map_err(|e| AppError::Data(format!("{}: {e}", args.fleet.display())))?;
    let fleet = read_fleet_csv(fleet_file).map_err(|e| AppError::Data(e.to_string()))?;
    let prices_file = std::fs::File::open(&args.prices)
        .map_err(|e| AppError::Data(format!("{}: {e}", args.prices.display())))?;
    let prices = read_prices_csv(prices_file).map_err(|e| AppError::Data(e.to_string()))?;

    let mut models =
        fit_models(&fleet, &prices, args.min_mw).map_err(|e| AppError::Data(e.to_string()))?;

    match args.tl_case.len() {
        0 => {}
        2 => {
            let seed = args.seed.ok_or_else(|| {
                AppError::Usage(
                    "--seed is required with --tl-case (resampling is stochastic)".into(),
                )
            })?;
            let a = load_case(&args.tl_case[0])?;
            let b = load_case(&args.tl_case[1])?;
            let mut rng = stream(seed, StreamTag::ThermalFit, 0);
            models.tl_loglog = fit_tl_from_networks(&a, &b, &mut rng)
                .map_err(|e| AppError::Data(e.to_string()))?;
        }
        n => {
            return Err(AppError::Usage(format!(
                "--tl-case expects exactly two source cases, got {n}"
            )))
        }
    }

    write_file(&args.output, &to_json(&models)?)?;
    eprintln!("gridcase: models written to {}", args.output.display());
    Ok(())
}

fn cmd_augment(args: AugmentArgs) -> Result<(), AppError> {
    let mut inputs: Vec<&Path> = vec![args.case.as_path(), args.plan.as_path()];
    if let Some(m) = &args.models {
        inputs.push(m);
    }
    guard_overwrite(&args.output, &inputs, args.force)?;
    if let Some(log) = &args.log {
        guard_overwrite(log, &inputs, args.force)?;
    }

    let net = load_case(&args.case)?;
    let plan_text = std::fs::read_to_string(&args.plan)
        .map_err(|e| AppError::Data(format!("{}: {e}", args.plan.display())))?;
    let mut plan: AugmentPlan = toml::from_str(&plan_text)
        .map_err(|e| AppError::Data(format!("{}: {e}", args.plan.display())))?;
    if let Some(seed) = args.seed {
        plan.seed = seed;
    }
    let models = load_models(&args.models)?;

    let (out, log) = apply_plan(&net, &plan, &models).map_err(|e| AppError::Data(e.to_string()))?;
    for warning in &log.warnings {
        eprintln!("gridcase: warning: {warning}");
    }

    let mut applied = Vec::new();
    if plan.gf_stat {
        applied.push("GF-Stat");
    }
    if plan.ag_stat {
        applied.push("AG-Stat");
    }
    if let Some(model) = plan.reactive {
        applied.push(match model {
            gridcase_stats::ReactiveModel::Am50 => "RG-AM50",
            gridcase_stats::ReactiveModel::Al50 => "RG-AL50",
        });
    }
    if plan.ac_stat {
        applied.push("AC-Stat");
    }
    if plan.tl_stat {
        applied.push("TL-Stat");
    }
    if plan.tl_ub {
        applied.push("TL-UB");
    }
    let mut provenance = vec![
        format!("generated by gridcase v{VERSION}"),
        format!("source: {}", args.case.display()),
        format!("models: {}", if applied.is_empty() { "none".into() } else { applied.join(", ") }),
        format!("seed: {}", plan.seed),
    ];
    if let Some(deg) = plan.angle_bound_deg {
        provenance.push(format!("angle bound: +-{deg} deg"));
    }
    write_file(&args.output, &matpower::write(&out, &provenance))?;
    if let Some(log_path) = &args.log {
        write_file(log_path, &to_json(&log)?)?;
    }
    eprintln!(
        "gridcase: wrote {} ({} log records)",
        args.output.display(),
        log.records.len()
    );
    Ok(())
}

fn cmd_validate(args: ValidateArgs) -> Result<(), AppError> {
    let net = load_case(&args.case)?;
    let mut violations = validate(&net);
    let mut pf_summary = None;
    if args.solve {
        match solve_pf(&net, args.tolerance, 50) {
            Ok(sol) => {
                violations.extend(check_operational(&net, &sol));
                pf_summary = Some((sol.iterations, sol.mismatch_inf));
            }
            Err(e) => return Err(AppError::Solver(format!("power flow failed: {e}"))),
        }
    }
    match args.format.as_str() {
        "json" => {
            let report = serde_json::json!({
                "schema_version": 1,
                "case": net.name,
                "violations": violations,
                "power_flow": pf_summary.map(|(iters, mis)| serde_json::json!({
                    "iterations": iters,
                    "mismatch_inf": mis,
                })),
            });
            println!("{}", serde_json::to_string_pretty(&report).unwrap());
        }
        "table" => {
            if let Some((iters, mis)) = pf_summary {
                eprintln!("gridcase: power flow converged in {iters} iterations (mismatch {mis:.2e})");
            }
            if violations.is_empty() {
                println!("{}: no violations", net.name);
            } else {
                println!("{}: {} violation(s)", net.name, violations.len());
                for v in &violations {
                    println!("  {v}");
                }
            }
        }
        other => return Err(AppError::Usage(format!("unknown format `{other}`"))),
    }
    Ok(())
}

fn cmd_gap_table(args: GapTableArgs) -> Result<(), AppError> {
    if args.cases.is_empty() {
        return Err(AppError::Usage("gap-table needs at least one case file".into()));
    }
    let mut models = Vec::new();
    for token in args.models.split(',') {
        let model = ModelKind::parse(token)
            .ok_or_else(|| AppError::Usage(format!("unknown model `{token}`")))?;
        models.push(model);
    }
    if let Some(out) = &args.output {
        let inputs: Vec<&Path> = args.cases.iter().map(|p| p.as_path()).collect();
        guard_overwrite(out, &inputs, args.force)?;
    }
    if args.multi_start > 0 && args.seed.is_none() {
        return Err(AppError::Usage("--multi-start requires --seed".into()));
    }

    let options = GapOptions {
        solve: SolveOptions::default(),
        multi_start: args.multi_start,
        multi_start_seed: args.seed.unwrap_or(0),
    };
    let jobs = args.jobs.unwrap_or_else(num_cpus::get).max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| AppError::Solver(e.to_string()))?;
    let reports = pool.install(|| gap_table(&args.cases, &models, &options));

    let solver_failures = reports
        .iter()
        .any(|r| r.error.is_some() || matches!(r.ac_status, Some(gridcase_solver::opf::EntryStatus::Error(_))));
    let rendered = match args.format.as_str() {
        "json" => {
            let doc = serde_json::json!({
                "schema_version": 1,
                "models": models,
                "reports": reports,
            });
            serde_json::to_string_pretty(&doc).unwrap()
        }
        "md" => render_markdown(&reports, &models),
        other => return Err(AppError::Usage(format!("unknown format `{other}`"))),
    };
    match &args.output {
        Some(path) => write_file(path, &rendered)?,
        None => println!("{rendered}"),
    }
    if solver_failures {
        return Err(AppError::Solver("one or more cases failed to solve; see report".into()));
    }
    Ok(())
}

fn cmd_gen_api(args: GenApiArgs) -> Result<(), AppError> {
    let seed = args
        .seed
        .ok_or_else(|| AppError::Usage("--seed is required (generation is stochastic)".into()))?;
    let net = load_case(&args.case)?;
    let models = load_models(&args.models)?;
    let (out, log) =
        gridcase_scenario::api::gen_api_with(&net, &models, seed, args.active_only
        )
        .map_err(map_scenario_err)?;

    let stem = format!("{}__api", stem_of(&args.case));
    let case_path = args.output.join(format!("{stem}.m"));
    let log_path = args.output.join(format!("{stem}.json"));
    let inputs: Vec<&Path> = vec![args.case.as_path()];
    guard_overwrite(&case_path, &inputs, args.force)?;
    guard_overwrite(&log_path, &inputs, args.force)?;

    let provenance = vec![
        format!("generated by gridcase v{VERSION}"),
        format!("source: {}", args.case.display()),
        "models: demand increase, AG-Stat, RG-AL50, AC-Stat".to_string(),
        format!("seed: {seed}"),
        format!("demand scale: {}", log.alpha_star),
    ];
    write_file(&case_path, &matpower::write(&out, &provenance))?;
    write_file(&log_path, &to_json(&log)?)?;
    eprintln!(
        "gridcase: wrote {} (demand scale {:.6})",
        case_path.display(),
        log.alpha_star
    );
    Ok(())
}

fn cmd_gen_sad(args: GenSadArgs) -> Result<(), AppError> {
    let net = load_case(&args.case)?;
    let (out, log) = gridcase_scenario::gen_sad(&net).map_err(map_scenario_err)?;

    let stem = format!("{}__sad", stem_of(&args.case));
    let case_path = args.output.join(format!("{stem}.m"));
    let log_path = args.output.join(format!("{stem}.json"));
    let inputs: Vec<&Path> = vec![args.case.as_path()];
    guard_overwrite(&case_path, &inputs, args.force)?;
    guard_overwrite(&log_path, &inputs, args.force)?;

    let provenance = vec![
        format!("generated by gridcase v{VERSION}"),
        format!("source: {}", args.case.display()),
        format!("angle bound: +-{:.4} deg", log.theta_delta_deg),
    ];
    write_file(&case_path, &matpower::write(&out, &provenance))?;
    write_file(&log_path, &to_json(&log)?)?;
    eprintln!(
        "gridcase: wrote {} (angle bound {:.4} deg)",
        case_path.display(),
        log.theta_delta_deg
    );
    Ok(())
}

fn cmd_convert(args: ConvertArgs) -> Result<(), AppError> {
    guard_overwrite(&args.output, &[args.case.as_path()], args.force)?;
    let net = load_case(&args.case)?;
    let provenance = vec![
        format!("generated by gridcase v{VERSION}"),
        format!("source: {}", args.case.display()),
    ];
    write_file(&args.output, &matpower::write(&net, &provenance))?;
    Ok(())
}

fn stem_of(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "case".into())
}

fn map_scenario_err(e: gridcase_scenario::ScenarioError) -> AppError {
    use gridcase_scenario::ScenarioError::*;
    match e {
        NoFiniteLimits | InfeasibleBase | InfeasibleAtWidestAngle(_) => {
            AppError::Data(e.to_string())
        }
        Oracle(_) | Formulate(_) => AppError::Solver(e.to_string()),
        Augment(_) => AppError::Data(e.to_string()),
    }
}

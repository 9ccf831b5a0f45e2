//! Command line front end. Every command talks to the estimation service:
//! either a remote one (`--server URL`) or a private instance spawned on a
//! loopback port for the duration of the invocation.
//!
//! Exit codes: 0 success, 1 self-test/property failure (or transport
//! trouble), 2 configuration/parse errors, 3 numerical failures.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ahrs_api as api;
use ahrs_client::{Client, ClientError};
use config::FileConfig;

#[derive(Parser)]
#[command(name = "ahrs", version, about = "Attitude estimation toolkit")]
struct Cli {
    /// Base URL of a running service; when absent a private instance is
    /// spawned for this invocation.
    #[arg(long, global = true)]
    server: Option<String>,

    /// Flat key = value configuration file; flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize constant correction gains from the noise configuration.
    Tune(TuneArgs),
    /// Generate a synthetic measurement log.
    Simulate(SimulateArgs),
    /// Run one filter over a measurement log.
    Run(RunArgs),
    /// Run several filters over one log and summarize their errors.
    Compare(CompareArgs),
    /// Run the built-in property-check suite.
    Selftest,
    /// Run the HTTP service in the foreground.
    Serve(ServeArgs),
}

#[derive(Args)]
struct TuneArgs {
    /// Gain entries pinned to zero, as row:col pairs (e.g. "3:3,1:4").
    #[arg(long)]
    mask: Option<String>,
    /// Named mask preset (selective-yaw).
    #[arg(long)]
    mask_preset: Option<String>,
    /// Velocity points for the scheduled parameters; repeatable.
    #[arg(long = "omega-max")]
    omega_max: Vec<f64>,
    /// row-col (default) or col-row reading of printed gain indices.
    #[arg(long)]
    index_convention: Option<String>,
    /// Write the JSON gain report here.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Write the flat text report here (also printed to stdout).
    #[arg(long)]
    text: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Built-in trajectory case (1, 2 or 3).
    #[arg(long)]
    case: Option<u8>,
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output log path.
    #[arg(long)]
    out: PathBuf,
    /// Omit the ground-truth columns.
    #[arg(long)]
    no_truth: bool,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    filter: Option<String>,
    /// Input measurement log.
    #[arg(long)]
    log: PathBuf,
    /// Output estimates path.
    #[arg(long)]
    out: PathBuf,
    /// JSON gain report (as written by `tune --json`).
    #[arg(long)]
    gains_file: Option<PathBuf>,
    /// 36 comma-separated gain values, row-major.
    #[arg(long)]
    gains_inline: Option<String>,
    /// NCF gains as "k_p,k_i,k_1,k_2".
    #[arg(long)]
    ncf_gains: Option<String>,
    #[arg(long)]
    mask: Option<String>,
    #[arg(long)]
    mask_preset: Option<String>,
    #[arg(long)]
    index_convention: Option<String>,
    /// Initialize the filter at the logged truth state (testing).
    #[arg(long)]
    perfect_init: bool,
    /// Write the decimated gain trace here (adaptive filters).
    #[arg(long)]
    gain_trace: Option<PathBuf>,
    /// Keep every n-th gain sample (default 5).
    #[arg(long)]
    trace_every: Option<usize>,
    /// Velocity point for rincf2 scheduled gains.
    #[arg(long = "omega-max")]
    omega_max: Option<f64>,
    #[arg(long)]
    p1: Option<f64>,
    #[arg(long)]
    p2: Option<f64>,
}

#[derive(Args)]
struct CompareArgs {
    /// Comma-separated filter list.
    #[arg(long)]
    filters: Option<String>,
    #[arg(long)]
    log: PathBuf,
    /// Output CSV table path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output aligned-text table path (also printed to stdout).
    #[arg(long)]
    text_out: Option<PathBuf>,
    /// Post-convergence window start, seconds (default 2.5).
    #[arg(long)]
    window: Option<f64>,
    /// Skip per-step timing so the output is fully deterministic.
    #[arg(long)]
    no_timing: bool,
    #[arg(long)]
    mask: Option<String>,
    #[arg(long)]
    mask_preset: Option<String>,
    #[arg(long = "omega-max")]
    omega_max: Option<f64>,
}

#[derive(Args)]
struct ServeArgs {
    /// Listen address.
    #[arg(long, default_value = "127.0.0.1:8700")]
    addr: String,
}

/// Failure carrying the process exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<ClientError> for Failure {
    fn from(e: ClientError) -> Self {
        let code = match e.code() {
            Some(api::error_code::CONFIG)
            | Some(api::error_code::PARSE)
            | Some(api::error_code::NOT_FOUND) => 2,
            Some(api::error_code::NUMERICAL) => 3,
            _ => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    let file_cfg = load_config(cli.config.as_deref())?;

    if let Command::Serve(args) = &cli.command {
        return serve_foreground(&args.addr);
    }

    // Spawn a private service unless one was pointed at.
    let (client, _local) = match &cli.server {
        Some(url) => (Client::new(url), None),
        None => {
            let server = ahrs_service::spawn_local().map_err(|e| Failure {
                code: 1,
                message: format!("cannot start service: {e}"),
            })?;
            (Client::new(&server.base_url()), Some(server))
        }
    };

    match cli.command {
        Command::Tune(args) => cmd_tune(&client, &file_cfg, args),
        Command::Simulate(args) => cmd_simulate(&client, &file_cfg, args),
        Command::Run(args) => cmd_run(&client, &file_cfg, args),
        Command::Compare(args) => cmd_compare(&client, &file_cfg, args),
        Command::Selftest => cmd_selftest(&client),
        Command::Serve(_) => unreachable!("handled above"),
    }
}

fn serve_foreground(addr: &str) -> Result<(), Failure> {
    let addr: std::net::SocketAddr = addr
        .parse()
        .map_err(|_| Failure::config(format!("invalid --addr {addr:?}")))?;
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Failure {
            code: 1,
            message: e.to_string(),
        })?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| Failure {
                code: 1,
                message: format!("bind {addr}: {e}"),
            })?;
        println!("listening on {}", listener.local_addr().unwrap());
        ahrs_service::serve(listener, std::future::pending())
            .await
            .map_err(|e| Failure {
                code: 1,
                message: e.to_string(),
            })
    })
}

fn load_config(path: Option<&Path>) -> Result<FileConfig, Failure> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Failure::config(format!("cannot read {}: {e}", p.display())))?;
            config::parse_config(&text)
                .map_err(|e| Failure::config(format!("{}: {e}", p.display())))
        }
    }
}

/// Seed precedence: flag, then AHRS_SEED, then config file, then 0.
fn resolve_seed(flag: Option<u64>, file: Option<u64>) -> Result<u64, Failure> {
    if let Some(s) = flag {
        return Ok(s);
    }
    if let Ok(env) = std::env::var("AHRS_SEED") {
        return env
            .parse()
            .map_err(|_| Failure::config(format!("AHRS_SEED={env:?} is not an integer")));
    }
    Ok(file.unwrap_or(0))
}

fn mask_fields(
    flag_mask: Option<&str>,
    flag_preset: Option<&str>,
    file: &FileConfig,
) -> Result<(Vec<[usize; 2]>, Option<String>), Failure> {
    let entries = match flag_mask {
        Some(m) => config::parse_mask_entries(m).map_err(Failure::config)?,
        None => file.mask.clone().unwrap_or_default(),
    };
    let preset = flag_preset
        .map(str::to_string)
        .or_else(|| file.mask_preset.clone());
    Ok((entries, preset))
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    std::fs::write(path, contents).map_err(|e| Failure {
        code: 1,
        message: format!("cannot write {}: {e}", path.display()),
    })
}

fn cmd_tune(client: &Client, file: &FileConfig, args: TuneArgs) -> Result<(), Failure> {
    let (mask, mask_preset) = mask_fields(args.mask.as_deref(), args.mask_preset.as_deref(), file)?;
    let omega_max = if args.omega_max.is_empty() {
        file.omega_max.clone().unwrap_or_default()
    } else {
        args.omega_max
    };
    let req = api::TuneRequest {
        noise: file.noise(),
        mask,
        mask_preset,
        omega_max,
        index_convention: args
            .index_convention
            .or_else(|| file.index_convention.clone()),
    };
    let report = client.tune(&req)?;
    print!("{}", report.to_text());
    if let Some(path) = args.text {
        write_file(&path, &report.to_text())?;
    }
    if let Some(path) = args.json {
        let json = serde_json::to_string_pretty(&report).map_err(|e| Failure {
            code: 1,
            message: e.to_string(),
        })?;
        write_file(&path, &json)?;
    }
    Ok(())
}

fn cmd_simulate(client: &Client, file: &FileConfig, args: SimulateArgs) -> Result<(), Failure> {
    let mut noise = file.noise();
    if let Some(dt) = args.dt {
        noise.dt = dt;
    }
    let case = args.case.or(file.case);
    let custom = file.custom_omega;
    if case.is_none() && custom.is_none() {
        return Err(Failure::config(
            "simulate needs --case or custom_omega in the config",
        ));
    }
    let duration = args
        .duration
        .or(file.duration)
        .ok_or_else(|| Failure::config("simulate needs --duration"))?;
    let req = api::SimulateRequest {
        case,
        custom: if case.is_some() { None } else { custom },
        duration,
        seed: resolve_seed(args.seed, file.seed)?,
        noise,
        initial_euler: None,
        initial_bias: None,
        include_truth: !args.no_truth,
    };
    let csv = client.simulate(&req)?;
    write_file(&args.out, &csv)
}

fn parse_inline_gains(text: &str) -> Result<Vec<f64>, Failure> {
    let vals: Result<Vec<f64>, _> = text.split(',').map(|v| v.trim().parse::<f64>()).collect();
    let vals = vals.map_err(|_| Failure::config("gains must be comma-separated numbers"))?;
    if vals.len() != 36 {
        return Err(Failure::config(format!(
            "--gains-inline needs 36 values, got {}",
            vals.len()
        )));
    }
    Ok(vals)
}

fn gains_from_args(
    gains_file: Option<&Path>,
    gains_inline: Option<&str>,
    ncf_gains: Option<&str>,
    p1: Option<f64>,
    p2: Option<f64>,
    omega_max: Option<f64>,
    file: &FileConfig,
) -> Result<api::GainsDto, Failure> {
    let mut dto = api::GainsDto::default();
    match (gains_file, gains_inline) {
        (Some(path), None) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::config(format!("cannot read {}: {e}", path.display())))?;
            let report: api::TuneReport = serde_json::from_str(&text)
                .map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
            dto.k = Some(report.k);
            dto.p1 = report.p1;
            dto.p2 = report.p2;
        }
        (None, Some(inline)) => dto.k = Some(parse_inline_gains(inline)?),
        (None, None) => {}
        (Some(_), Some(_)) => {
            return Err(Failure::config(
                "give --gains-file or --gains-inline, not both",
            ))
        }
    }
    if let Some(text) = ncf_gains {
        let vals: Result<Vec<f64>, _> = text.split(',').map(|v| v.trim().parse()).collect();
        let vals = vals.map_err(|_| Failure::config("--ncf-gains must be k_p,k_i,k_1,k_2"))?;
        if vals.len() != 4 {
            return Err(Failure::config("--ncf-gains must be k_p,k_i,k_1,k_2"));
        }
        dto.ncf = Some(api::NcfGainsDto {
            k_p: vals[0],
            k_i: vals[1],
            k_1: vals[2],
            k_2: vals[3],
        });
    } else if let (Some(k_p), Some(k_i), Some(k_1), Some(k_2)) =
        (file.k_p, file.k_i, file.k_1, file.k_2)
    {
        dto.ncf = Some(api::NcfGainsDto { k_p, k_i, k_1, k_2 });
    }
    if p1.is_some() {
        dto.p1 = p1;
    }
    if p2.is_some() {
        dto.p2 = p2;
    }
    dto.omega_max = omega_max.or_else(|| file.omega_max.as_ref().and_then(|v| v.first().copied()));
    Ok(dto)
}

fn cmd_run(client: &Client, file: &FileConfig, args: RunArgs) -> Result<(), Failure> {
    let filter = args
        .filter
        .clone()
        .or_else(|| file.filter.clone())
        .ok_or_else(|| Failure::config("run needs --filter"))?;
    let log_csv = std::fs::read_to_string(&args.log)
        .map_err(|e| Failure::config(format!("cannot read {}: {e}", args.log.display())))?;
    let (mask, mask_preset) = mask_fields(args.mask.as_deref(), args.mask_preset.as_deref(), file)?;
    let gains = gains_from_args(
        args.gains_file.as_deref(),
        args.gains_inline.as_deref(),
        args.ncf_gains.as_deref(),
        args.p1,
        args.p2,
        args.omega_max,
        file,
    )?;
    let req = api::RunRequest {
        filter,
        noise: file.noise(),
        gains,
        mask,
        mask_preset,
        index_convention: args
            .index_convention
            .clone()
            .or_else(|| file.index_convention.clone()),
        perfect_init: args.perfect_init,
        trace_every: args.trace_every.or(file.trace_every),
        log_csv,
    };
    let resp = client.run(&req)?;
    write_file(&args.out, &resp.estimates_csv)?;
    match (&args.gain_trace, &resp.gain_trace_csv) {
        (Some(path), Some(csv)) => write_file(path, csv)?,
        (Some(_), None) => {
            eprintln!("note: {} exposes no gain trace", req.filter);
        }
        _ => {}
    }
    Ok(())
}

fn cmd_compare(client: &Client, file: &FileConfig, args: CompareArgs) -> Result<(), Failure> {
    let filters: Vec<String> = match args.filters.as_deref() {
        Some(list) => list.split(',').map(|s| s.trim().to_string()).collect(),
        None => file.filters.clone().unwrap_or_default(),
    };
    if filters.len() < 2 {
        return Err(Failure::config(
            "compare needs at least two filters (--filters a,b)",
        ));
    }
    let log_csv = std::fs::read_to_string(&args.log)
        .map_err(|e| Failure::config(format!("cannot read {}: {e}", args.log.display())))?;
    let (mask, mask_preset) = mask_fields(args.mask.as_deref(), args.mask_preset.as_deref(), file)?;
    let gains = gains_from_args(None, None, None, None, None, args.omega_max, file)?;
    let req = api::CompareRequest {
        filters,
        noise: file.noise(),
        gains,
        mask,
        mask_preset,
        window: args.window.or(file.window),
        timing: !args.no_timing,
        log_csv,
    };
    let resp = client.compare(&req)?;
    print!("{}", resp.text);
    if let Some(path) = args.out {
        write_file(&path, &resp.csv)?;
    }
    if let Some(path) = args.text_out {
        write_file(&path, &resp.text)?;
    }
    Ok(())
}

fn cmd_selftest(client: &Client) -> Result<(), Failure> {
    let resp = client.selftest()?;
    for c in &resp.checks {
        println!(
            "{} {}{}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            if c.detail.is_empty() {
                String::new()
            } else {
                format!(": {}", c.detail)
            }
        );
    }
    let passed = resp.checks.iter().filter(|c| c.passed).count();
    println!("{passed}/{} checks passed", resp.checks.len());
    if resp.passed {
        Ok(())
    } else {
        let first = resp.checks.iter().find(|c| !c.passed).unwrap();
        Err(Failure {
            code: 1,
            message: format!("selftest failed: {}", first.name),
        })
    }
}

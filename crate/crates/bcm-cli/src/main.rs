//! `bcm`: kernels, admissibility, reconstructions and checks from the command line.
//!
//! Exit status: 0 on success, 2 when the data are rejected as inadmissible,
//! 1 on usage, configuration or I/O errors.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bcm::bcp::{
    classical_kernel_from_family, singular_control_from_kernel, solve_classical, solve_eigen_target, solve_full_family,
    visualize_wave, write_rows_csv, FamilyTarget, KernelKind,
};
use bcm::forward::{
    apply_control, distance_for_time, extract_response_kernel, solve_wave, Control, ExtractConfig, FdConfig,
    ResponseKernel, WaveSystem,
};
use bcm::inverse::{
    reconstruct_from_medium, reconstruct_gl, reconstruct_krein, reconstruct_marchenko, roundtrip, Method,
    ReconstructionReport, RoundtripConfig,
};
use bcm::media::{make_test_medium, sl_solution_lambda, MediumProfile};
use bcm::numerics::{seeded_smooth_probes, SampledFunction, TimeGrid};
use bcm::operators::{assemble_connecting, check_admissibility, Admissibility};
use bcm::BcmError;
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

#[derive(Parser, Debug)]
#[command(name = "bcm", version, about = "Boundary control method inverse-problem toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// FD wave field for a control (`x,t,u` CSV)
    Forward,
    /// Synthesize the response kernel of a medium (`t,r` CSV)
    ExtractKernel,
    /// Cholesky verdict on the connecting operator
    Admissibility,
    /// Reconstruct q (gl, marchenko) or rho (krein)
    Invert { method: String },
    /// Classical kernel from the control family, checked against a direct solve
    Classical { kind: String },
    /// Control reaching the solution of -y'' + q y = lambda y
    EigenTarget,
    /// Singular controls against FD wave samples
    Visualize,
    /// Reconstruction over a grid ladder with convergence orders
    Roundtrip { method: String },
    /// Roundtrip for every method compatible with the medium
    Convergence,
}

#[derive(Args, Debug, Default)]
struct Opts {
    /// Catalog name, `user_csv:<path>` or a `.csv` path
    #[arg(long, global = true)]
    medium: Option<String>,
    /// dirichlet, neumann or scattering
    #[arg(long, global = true)]
    system: Option<String>,
    /// Horizon T
    #[arg(long = "T", global = true)]
    t: Option<f64>,
    /// Grid steps
    #[arg(long, global = true)]
    n: Option<usize>,
    /// Scattering wavenumber
    #[arg(long, global = true)]
    k: Option<f64>,
    #[arg(long, global = true)]
    lambda: Option<f64>,
    #[arg(long, global = true)]
    xi: Option<f64>,
    /// Tikhonov parameter
    #[arg(long, global = true)]
    ridge: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output CSV path
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Comma-separated grid sizes
    #[arg(long, global = true)]
    ladder: Option<String>,
    /// `key = value` file; flags take precedence
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Kernel CSV (`t,r`) instead of a synthesized one
    #[arg(long, global = true)]
    kernel: Option<PathBuf>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[arg(long, global = true)]
    beta: Option<f64>,
    /// ramp, step or smooth (forward)
    #[arg(long, global = true)]
    control: Option<String>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Bcm(BcmError),
}

impl From<BcmError> for CliError {
    fn from(e: BcmError) -> Self {
        CliError::Bcm(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Bcm(BcmError::Io(e))
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Resolved settings after merging the config file under the flags.
#[derive(Debug, Clone)]
struct RunConfig {
    medium: Option<String>,
    system: Option<String>,
    horizon: f64,
    n: usize,
    k: f64,
    lambda: f64,
    xi: Option<f64>,
    ridge: f64,
    seed: u64,
    out: Option<PathBuf>,
    ladder: Vec<usize>,
    kernel: Option<PathBuf>,
    alpha: f64,
    beta: f64,
    control: String,
}

const CONFIG_KEYS: [&str; 15] =
    ["medium", "system", "T", "n", "k", "lambda", "xi", "ridge", "seed", "out", "ladder", "kernel", "alpha", "beta", "control"];

fn read_config(path: &Path) -> CliResult<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)?;
    let mut map = BTreeMap::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("{}:{}: expected key = value", path.display(), no + 1)))?;
        let key = key.trim();
        if !CONFIG_KEYS.contains(&key) {
            return Err(CliError::Usage(format!("{}:{}: unknown key '{key}'", path.display(), no + 1)));
        }
        map.insert(key.to_string(), value.trim().to_string());
    }
    Ok(map)
}

fn parse_value<T: std::str::FromStr>(key: &str, v: &str) -> CliResult<T> {
    v.parse().map_err(|_| CliError::Usage(format!("invalid value '{v}' for {key}")))
}

fn parse_ladder(s: &str) -> CliResult<Vec<usize>> {
    s.split(',').map(|p| parse_value::<usize>("ladder", p.trim())).collect()
}

impl RunConfig {
    fn resolve(opts: Opts) -> CliResult<Self> {
        let file = match &opts.config {
            Some(p) => read_config(p)?,
            None => BTreeMap::new(),
        };
        fn pick<T: std::str::FromStr>(flag: Option<T>, file: &BTreeMap<String, String>, key: &str) -> CliResult<Option<T>> {
            match flag {
                Some(v) => Ok(Some(v)),
                None => file.get(key).map(|v| parse_value(key, v)).transpose(),
            }
        }
        let ladder = match opts.ladder.or_else(|| file.get("ladder").cloned()) {
            Some(s) => parse_ladder(&s)?,
            None => vec![128, 256, 512],
        };
        let cfg = RunConfig {
            medium: pick(opts.medium, &file, "medium")?,
            system: pick(opts.system, &file, "system")?,
            horizon: pick(opts.t, &file, "T")?.unwrap_or(1.0),
            n: pick(opts.n, &file, "n")?.unwrap_or(256),
            k: pick(opts.k, &file, "k")?.unwrap_or(1.0),
            lambda: pick(opts.lambda, &file, "lambda")?.unwrap_or(1.0),
            xi: pick(opts.xi, &file, "xi")?,
            ridge: pick(opts.ridge, &file, "ridge")?.unwrap_or(0.0),
            seed: pick(opts.seed, &file, "seed")?.unwrap_or(42),
            out: pick(opts.out, &file, "out")?,
            ladder,
            kernel: pick(opts.kernel, &file, "kernel")?,
            alpha: pick(opts.alpha, &file, "alpha")?.unwrap_or(1.0),
            beta: pick(opts.beta, &file, "beta")?.unwrap_or(0.0),
            control: pick(opts.control, &file, "control")?.unwrap_or_else(|| "smooth".into()),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> CliResult<()> {
        if !(self.horizon > 0.0) {
            return Err(CliError::Usage(format!("T must be positive, got {}", self.horizon)));
        }
        if self.n < 64 {
            return Err(CliError::Usage(format!("n must be at least 64, got {}", self.n)));
        }
        if !(self.k > 0.0) {
            return Err(CliError::Usage(format!("k must be positive, got {}", self.k)));
        }
        if !(self.ridge >= 0.0) {
            return Err(CliError::Usage(format!("ridge must be non-negative, got {}", self.ridge)));
        }
        if self.ladder.is_empty() || self.ladder.iter().any(|&n| n < 64) || self.ladder.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CliError::Usage("ladder must be increasing grid sizes of at least 64".into()));
        }
        Ok(())
    }

    fn medium(&self) -> CliResult<MediumProfile> {
        let name = self.medium.as_deref().ok_or_else(|| CliError::Usage("--medium is required".into()))?;
        make_test_medium(name).map_err(|e| match e {
            BcmError::UnknownMedium(_) => CliError::Usage(e.to_string()),
            e => CliError::Bcm(e),
        })
    }

    fn system_or(&self, default: WaveSystem) -> CliResult<WaveSystem> {
        match &self.system {
            None => Ok(default),
            Some(s) => WaveSystem::from_name(s).ok_or_else(|| CliError::Usage(format!("unknown system '{s}'"))),
        }
    }

    fn extract_config(&self) -> ExtractConfig {
        ExtractConfig::new(self.n)
    }

    /// Kernel from `--kernel` when given, otherwise synthesized from `--medium`.
    fn kernel(&self, system: WaveSystem) -> CliResult<ResponseKernel> {
        if let Some(path) = &self.kernel {
            let r = ResponseKernel::read_csv_samples(File::open(path)?)?;
            return Ok(match system {
                WaveSystem::Dirichlet => ResponseKernel::dirichlet(r, self.alpha, self.beta)?,
                WaveSystem::Neumann => ResponseKernel::neumann(r, self.alpha, self.beta)?,
                WaveSystem::Scattering => {
                    let a = 0.5 * r.grid().t_end();
                    ResponseKernel::scattering(r, a)?
                }
            });
        }
        let m = self.medium()?;
        let m = match system {
            WaveSystem::Scattering => bcm::inverse::prepare_medium(&m, Method::Marchenko)?,
            _ => m,
        };
        Ok(extract_response_kernel(system, &m, self.horizon, &self.extract_config())?)
    }

    fn roundtrip_config(&self) -> RoundtripConfig {
        RoundtripConfig { horizon: self.horizon, wavenumber: self.k, ridge: self.ridge }
    }
}

fn write_out(cfg: &RunConfig, write: impl FnOnce(BufWriter<File>) -> bcm::Result<()>) -> CliResult<()> {
    if let Some(path) = &cfg.out {
        write(BufWriter::new(File::create(path)?))?;
    }
    Ok(())
}

fn print_json(v: &Value) {
    let text = serde_json::to_string_pretty(v).expect("json values serialize");
    // a closed reader (e.g. `| head`) is not an error of ours
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn parse_method(s: &str) -> CliResult<Method> {
    Method::from_name(s).ok_or_else(|| CliError::Usage(format!("unknown method '{s}' (gl, krein, marchenko)")))
}

fn report_json(rep: &ReconstructionReport) -> Value {
    serde_json::to_value(rep.summary()).expect("report serializes")
}

fn cmd_forward(cfg: &RunConfig) -> CliResult<i32> {
    let system = cfg.system_or(WaveSystem::Dirichlet)?;
    let m = cfg.medium()?;
    let m = match system {
        WaveSystem::Scattering => bcm::inverse::prepare_medium(&m, Method::Marchenko)?,
        _ => m,
    };
    let grid = TimeGrid::new(cfg.horizon, cfg.n)?;
    let control = match cfg.control.as_str() {
        "ramp" => SampledFunction::from_fn(grid, |t| t)?,
        "step" => SampledFunction::from_fn(grid, |t| if t > 0.0 { 1.0 } else { 0.0 })?,
        "smooth" => seeded_smooth_probes(cfg.seed, 1, grid).remove(0),
        c => return Err(CliError::Usage(format!("unknown control '{c}' (ramp, step, smooth)"))),
    };
    let field = solve_wave(system, &m, &control, cfg.horizon, &FdConfig::new(cfg.horizon / cfg.n as f64))?;
    write_out(cfg, |w| field.write_csv(w))?;
    print_json(&json!({
        "command": "forward",
        "system": system.name(),
        "nx": field.nx(),
        "nt": field.nt(),
        "hx": field.hx,
        "ht": field.ht,
        "max_abs": field.max_abs(),
    }));
    Ok(0)
}

fn cmd_extract(cfg: &RunConfig) -> CliResult<i32> {
    let system = cfg.system_or(WaveSystem::Dirichlet)?;
    let k = cfg.kernel(system)?;
    write_out(cfg, |w| k.write_csv(w))?;
    print_json(&json!({
        "command": "extract-kernel",
        "system": system.name(),
        "n": k.horizon_steps(),
        "horizon": k.horizon(),
        "alpha": k.alpha(),
        "beta": k.beta(),
        "r0": k.r_index(0),
        "support_bound": k.support_bound(),
    }));
    Ok(0)
}

fn cmd_admissibility(cfg: &RunConfig) -> CliResult<i32> {
    let system = cfg.system_or(WaveSystem::Dirichlet)?;
    let k = cfg.kernel(system)?;
    let horizon = if cfg.kernel.is_some() { k.horizon() } else { cfg.horizon };
    let c = assemble_connecting(&k, horizon)?;
    let verdict = check_admissibility(&c);
    let (ok, value) = match &verdict {
        Admissibility::Admissible { min_pivot, max_pivot } => (
            true,
            json!({"command": "admissibility", "system": system.name(), "admissible": true, "min_pivot": min_pivot, "max_pivot": max_pivot, "reason": null}),
        ),
        Admissibility::Rejected { reason } => (
            false,
            json!({"command": "admissibility", "system": system.name(), "admissible": false, "min_pivot": null, "max_pivot": null, "reason": reason}),
        ),
    };
    print_json(&value);
    if !ok {
        eprintln!("rejected: {}", value["reason"].as_str().unwrap_or(""));
    }
    Ok(if ok { 0 } else { 2 })
}

fn cmd_invert(cfg: &RunConfig, method: Method) -> CliResult<i32> {
    let rep = if cfg.kernel.is_some() {
        let k = cfg.kernel(method.system())?;
        match method {
            Method::Gl => reconstruct_gl(&k, cfg.ridge)?,
            Method::Krein => reconstruct_krein(&k, cfg.ridge)?,
            Method::Marchenko => reconstruct_marchenko(&k, cfg.k, cfg.ridge)?,
        }
    } else {
        reconstruct_from_medium(&cfg.medium()?, method, cfg.n, &cfg.roundtrip_config())?
    };
    write_out(cfg, |w| rep.write_profile_csv(w))?;
    print_json(&report_json(&rep));
    Ok(0)
}

fn cmd_classical(cfg: &RunConfig, kind: KernelKind) -> CliResult<i32> {
    let k = cfg.kernel(kind.system())?;
    let fam = solve_full_family(&k, kind.family_target(cfg.k), cfg.ridge)?;
    let kernel = classical_kernel_from_family(&fam, kind)?;
    match cfg.xi {
        Some(xi) => {
            let row = kernel
                .row_at(xi)
                .ok_or_else(|| CliError::Usage(format!("xi = {xi} is outside the kernel")))?
                .clone();
            let direct = solve_classical(kind, &k, row.xi, cfg.ridge)?;
            let diff = row.max_difference(&direct)?;
            write_out(cfg, |w| write_rows_csv(std::slice::from_ref(&row), w))?;
            print_json(&json!({
                "command": "classical",
                "kind": kind.name(),
                "xi": row.xi,
                "max_abs": row.max_abs(),
                "direct_max_difference": diff,
            }));
        }
        None => {
            write_out(cfg, |w| kernel.write_csv(w))?;
            print_json(&json!({
                "command": "classical",
                "kind": kind.name(),
                "rows": kernel.rows().len(),
                "max_abs": kernel.max_abs(),
            }));
        }
    }
    Ok(0)
}

fn cmd_eigen_target(cfg: &RunConfig) -> CliResult<i32> {
    let m = cfg.medium()?;
    let k = extract_response_kernel(WaveSystem::Dirichlet, &m, cfg.horizon, &cfg.extract_config())?;
    let f = solve_eigen_target(&k, cfg.lambda, cfg.horizon, cfg.ridge)?;
    let state = apply_control(WaveSystem::Dirichlet, &m, &Control::sampled(&f), cfg.horizon, 0.5 * f.step())?;
    let oracle = sl_solution_lambda(&m, 0.0, 1.0, cfg.lambda)?;
    let x_end = 0.95 * distance_for_time(&m, cfg.horizon)?;
    let (mut err, mut peak) = (0.0f64, 0.0f64);
    for i in 0..=200 {
        let x = x_end * i as f64 / 200.0;
        let y = oracle.eval(x);
        err = err.max((state.eval(x) - y).abs());
        peak = peak.max(y.abs());
    }
    write_out(cfg, |w| f.write_csv(["t", "f"], w))?;
    print_json(&json!({
        "command": "eigen-target",
        "lambda": cfg.lambda,
        "horizon": cfg.horizon,
        "sup_rel_error": err / peak,
    }));
    Ok(0)
}

fn cmd_visualize(cfg: &RunConfig) -> CliResult<i32> {
    let m = cfg.medium()?;
    let k = extract_response_kernel(WaveSystem::Dirichlet, &m, cfg.horizon, &cfg.extract_config())?;
    let fam = solve_full_family(&k, FamilyTarget::GELFAND_LEVITAN, cfg.ridge)?;
    let l = classical_kernel_from_family(&fam, KernelKind::GelfandLevitan)?;
    let c = assemble_connecting(&k, cfg.horizon)?;
    let grid = TimeGrid::new(cfg.horizon, k.horizon_steps())?;
    let probes = seeded_smooth_probes(cfg.seed, 5, grid);
    let xis = match cfg.xi {
        Some(xi) => vec![xi],
        None => [0.25, 0.5, 0.75].iter().map(|s| s * cfg.horizon).collect(),
    };
    let mut entries = Vec::new();
    let mut worst = 0.0f64;
    for (p, f) in probes.iter().enumerate() {
        let state = apply_control(WaveSystem::Dirichlet, &m, &Control::sampled(f), cfg.horizon, 0.5 * f.step())?;
        let scale = state.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for &xi in &xis {
            let sc = singular_control_from_kernel(&fam, &l, xi)?;
            let functional = visualize_wave(&c, &sc, f)?;
            let x = distance_for_time(&m, sc.xi)?;
            let wave = state.eval(x);
            let rel = (functional - wave).abs() / scale;
            worst = worst.max(rel);
            entries.push(json!({"probe": p, "xi": sc.xi, "functional": functional, "wave": wave, "rel_error": rel}));
        }
    }
    print_json(&json!({"command": "visualize", "seed": cfg.seed, "max_rel_error": worst, "entries": entries}));
    Ok(0)
}

fn cmd_roundtrip(cfg: &RunConfig, method: Method) -> CliResult<i32> {
    let rep = roundtrip(&cfg.medium()?, method, &cfg.ladder, &cfg.roundtrip_config())?;
    write_out(cfg, |w| rep.write_profile_csv(w))?;
    print_json(&report_json(&rep));
    Ok(0)
}

fn cmd_convergence(cfg: &RunConfig) -> CliResult<i32> {
    let m = cfg.medium()?;
    let mut reports = Vec::new();
    for method in Method::ALL {
        if bcm::inverse::prepare_medium(&m, method).is_err() {
            continue;
        }
        let rep = roundtrip(&m, method, &cfg.ladder, &cfg.roundtrip_config())?;
        reports.push(report_json(&rep));
    }
    if reports.is_empty() {
        return Err(CliError::Bcm(BcmError::Incompatible("no method applies to this medium".into())));
    }
    print_json(&Value::Array(reports));
    Ok(0)
}

fn run(cli: Cli) -> CliResult<i32> {
    let cfg = RunConfig::resolve(cli.opts)?;
    match cli.command {
        Command::Forward => cmd_forward(&cfg),
        Command::ExtractKernel => cmd_extract(&cfg),
        Command::Admissibility => cmd_admissibility(&cfg),
        Command::Invert { method } => cmd_invert(&cfg, parse_method(&method)?),
        Command::Classical { kind } => {
            let kind = KernelKind::from_name(&kind)
                .ok_or_else(|| CliError::Usage(format!("unknown kernel '{kind}' (gl, krein, pariiskii, marchenko)")))?;
            cmd_classical(&cfg, kind)
        }
        Command::EigenTarget => cmd_eigen_target(&cfg),
        Command::Visualize => cmd_visualize(&cfg),
        Command::Roundtrip { method } => cmd_roundtrip(&cfg, parse_method(&method)?),
        Command::Convergence => cmd_convergence(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Bcm(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if matches!(e, BcmError::Inadmissible(_)) { 2 } else { 1 })
        }
    }
}

//! `vcbc simulate | verify | compare`.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 configuration error, 3 simulation
//! abort, 4 certificate failure. Diagnostics go to stderr and stdout carries
//! only the paths of the written files.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::{Experiment, RunConfig};
use crate::contraction::{certificate_suite, CertificateReport, CertificateSuite};
use crate::error::Error;
use crate::sim::{run_closed_loop, Metrics, TrajectoryLog};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_ABORT: i32 = 3;
pub const EXIT_UNCERTIFIED: i32 = 4;

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "VCBC_OUT";
const DEFAULT_ROOT: &str = "vcbc_runs";
const DEFAULT_SEED: u64 = 0;

#[derive(Debug, Parser)]
#[command(name = "vcbc", version, about = "Simulate and certify virtual-contraction tracking controllers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Output directory, used as is.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Integration step in seconds, overriding the config.
    #[arg(long, global = true)]
    pub dt: Option<f64>,
    /// Seed for randomized certificate sampling.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Measurement noise standard deviation, overriding the config.
    #[arg(long, global = true)]
    pub noise: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the closed loop and write the log and a report.
    Simulate { config: PathBuf },
    /// Run the certificates for the configured controller.
    Verify { config: PathBuf },
    /// Run two configurations side by side.
    Compare { config_a: PathBuf, config_b: PathBuf },
}

/// Failure carrying its exit code.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::SimulationAborted { .. } | Error::NonFinite(_) | Error::SingularInertia { .. } => EXIT_ABORT,
            _ => EXIT_CONFIG,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure {
            code: EXIT_IO,
            message: e.to_string(),
        }
    }
}

fn config_failure(message: String) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        message,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(stderr, "{text}")
            } else {
                write!(stdout, "{text}")
            };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Simulate { config } => simulate(&cli, config, stderr),
        Command::Verify { config } => verify(&cli, config),
        Command::Compare { config_a, config_b } => compare(&cli, config_a, config_b, stderr),
    };
    match result {
        Ok((paths, code)) => {
            for p in paths {
                let _ = writeln!(stdout, "{}", p.display());
            }
            code
        }
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message);
            f.code
        }
    }
}

type Outcome = Result<(Vec<PathBuf>, i32), Failure>;

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into())
}

fn load(cli: &Cli, path: &Path) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::load(path).map_err(|e| config_failure(format!("{}: {e}", path.display())))?;
    if let Some(dt) = cli.dt {
        cfg.sim.dt = dt;
    }
    if let Some(noise) = cli.noise {
        cfg.sim.noise_std = noise;
    }
    Ok(cfg)
}

fn build(cfg: &RunConfig, path: &Path) -> Result<Experiment, Failure> {
    cfg.build().map_err(|e| config_failure(format!("{}: {e}", path.display())))
}

fn output_dir(cli: &Cli, cfg: &RunConfig, label: &str) -> Result<PathBuf, Failure> {
    let dir = match &cli.out {
        Some(out) => out.clone(),
        None => {
            let root = std::env::var_os(OUT_ENV)
                .map(PathBuf::from)
                .or_else(|| cfg.output.directory.as_ref().map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from(DEFAULT_ROOT));
            let stamp = chrono::Local::now().format("%Y%m%dT%H%M%S%3f");
            root.join(format!("{label}_{stamp}"))
        }
    };
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn log_name(cfg: &RunConfig, path: &Path) -> String {
    cfg.output.name.clone().unwrap_or_else(|| stem(path))
}

fn write_csv(path: &Path, log: &TrajectoryLog) -> Result<(), Failure> {
    let mut w = BufWriter::new(File::create(path)?);
    log.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

fn fmt_rate(rate: Option<f64>) -> String {
    rate.map_or_else(|| "n/a".into(), |r| format!("{r:.6}"))
}

fn describe_run(out: &mut String, cfg: &RunConfig, exp: &Experiment) {
    let spec = &exp.spec;
    let _ = writeln!(out, "controller          {}", spec.phi_kind.label());
    let _ = writeln!(
        out,
        "derivatives         {} (filter_tau = {} s)",
        spec.derivative_mode.label(),
        spec.filter_tau
    );
    let k = exp.model.stiffness();
    let k_rows: Vec<String> = k
        .row_iter()
        .map(|r| format!("[{}]", r.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", ")))
        .collect();
    let _ = writeln!(out, "stiffness K         [{}] N*m/rad", k_rows.join(", "));
    let _ = writeln!(
        out,
        "sim                 t_end = {} s, dt = {} s, log_stride = {}, initial = {}, link_offset = {:?} rad",
        exp.sim.t_end,
        exp.sim.dt,
        exp.sim.log_stride,
        cfg.sim.initial.label(),
        cfg.sim.link_offset
    );
    let _ = writeln!(
        out,
        "noise               std = {}, seed = {}",
        exp.sim.noise_std, exp.sim.noise_seed
    );
}

fn describe_metrics(out: &mut String, m: &Metrics) {
    let _ = writeln!(out, "rms_link_error      {:.6e} rad (final 25%)", m.rms_link_error);
    let _ = writeln!(out, "rms_final_1s        {:.6e} rad", m.rms_link_error_final_1s);
    let _ = writeln!(out, "peak_control        {:.6e}", m.peak_control);
    let _ = writeln!(out, "overshoot           {:.6e}", m.overshoot);
    let _ = writeln!(out, "fitted_rate         {} 1/s", fmt_rate(m.fitted_rate));
    let _ = writeln!(out, "peak_state          {:.6e}", m.peak_state);
}

fn describe_suite(out: &mut String, suite: &CertificateSuite, fitted: Option<f64>) {
    for r in &suite.reports {
        let _ = writeln!(out, "{r}");
    }
    match &suite.rate {
        Ok(rate) => {
            let _ = writeln!(out, "certified rate      {rate}");
            if let Some(f) = fitted {
                let ok = f >= 0.5 * rate.beta;
                let _ = writeln!(
                    out,
                    "rate consistency    fitted {f:.6} vs half certified {:.6}: {}",
                    0.5 * rate.beta,
                    if ok { "pass" } else { "fail" }
                );
            }
        }
        Err(e) => {
            let _ = writeln!(out, "certified rate      unavailable ({e})");
        }
    }
}

fn seed(cli: &Cli) -> u64 {
    cli.seed.unwrap_or(DEFAULT_SEED)
}

fn simulate(cli: &Cli, path: &Path, stderr: &mut dyn Write) -> Outcome {
    let cfg = load(cli, path)?;
    let exp = build(&cfg, path)?;
    let log = run_closed_loop(&exp.model, &exp.spec, &exp.reference, &exp.sim)?;
    let suite = match &cfg.verify {
        Some(v) => Some(certificate_suite(&exp.model, &exp.spec, v, seed(cli))?),
        None => None,
    };
    let metrics = log.metrics();
    let name = log_name(&cfg, path);
    let dir = output_dir(cli, &cfg, &stem(path))?;
    let csv = dir.join(format!("{name}.csv"));
    write_csv(&csv, &log)?;
    let mut report = String::new();
    describe_run(&mut report, &cfg, &exp);
    describe_metrics(&mut report, &metrics);
    if let Some(s) = &suite {
        describe_suite(&mut report, s, metrics.fitted_rate);
        if !s.passed() {
            let _ = writeln!(stderr, "warning: certificates did not all pass");
        }
    }
    let txt = dir.join(format!("{name}.report.txt"));
    fs::write(&txt, report)?;
    Ok((vec![csv, txt], EXIT_OK))
}

fn verify(cli: &Cli, path: &Path) -> Outcome {
    let cfg = load(cli, path)?;
    let exp = build(&cfg, path)?;
    let settings = cfg.verify.clone().unwrap_or_default();
    let suite = certificate_suite(&exp.model, &exp.spec, &settings, seed(cli))?;
    let name = log_name(&cfg, path);
    let dir = output_dir(cli, &cfg, &stem(path))?;
    let csv = dir.join(format!("{name}.certificates.csv"));
    let mut rows = vec![CertificateReport::CSV_HEADER.to_string()];
    rows.extend(suite.reports.iter().map(|r| r.csv_row()));
    fs::write(&csv, rows.join("\n") + "\n")?;
    let mut text = String::new();
    describe_run(&mut text, &cfg, &exp);
    describe_suite(&mut text, &suite, None);
    let txt = dir.join(format!("{name}.certificates.txt"));
    fs::write(&txt, text)?;
    let code = if suite.passed() { EXIT_OK } else { EXIT_UNCERTIFIED };
    Ok((vec![csv, txt], code))
}

type MetricRow = (&'static str, fn(&Metrics) -> String);

/// Side-by-side metrics of two runs.
pub fn metrics_table(labels: [&str; 2], metrics: [&Metrics; 2]) -> String {
    let rows: [MetricRow; 5] = [
        ("rms_link_error", |m| format!("{:.6e}", m.rms_link_error)),
        ("rms_final_1s", |m| format!("{:.6e}", m.rms_link_error_final_1s)),
        ("overshoot", |m| format!("{:.6e}", m.overshoot)),
        ("peak_control", |m| format!("{:.6e}", m.peak_control)),
        ("fitted_rate", |m| fmt_rate(m.fitted_rate)),
    ];
    let mut out = format!("{:<16} {:>20} {:>20}\n", "metric", labels[0], labels[1]);
    for (name, f) in rows {
        let _ = writeln!(out, "{:<16} {:>20} {:>20}", name, f(metrics[0]), f(metrics[1]));
    }
    out
}

fn compare(cli: &Cli, path_a: &Path, path_b: &Path, stderr: &mut dyn Write) -> Outcome {
    let cfg_a = load(cli, path_a)?;
    let cfg_b = load(cli, path_b)?;
    if cfg_a.robot != cfg_b.robot {
        return Err(config_failure("robot sections differ between the two configs".into()));
    }
    if cfg_a.reference != cfg_b.reference {
        return Err(config_failure("reference sections differ between the two configs".into()));
    }
    if cfg_a.sim.dt != cfg_b.sim.dt {
        let _ = writeln!(
            stderr,
            "warning: dt differs ({} s vs {} s); comparison proceeds",
            cfg_a.sim.dt, cfg_b.sim.dt
        );
    }
    let exp_a = build(&cfg_a, path_a)?;
    let exp_b = build(&cfg_b, path_b)?;
    let (log_a, log_b) = std::thread::scope(|s| {
        let a = s.spawn(|| run_closed_loop(&exp_a.model, &exp_a.spec, &exp_a.reference, &exp_a.sim));
        let b = run_closed_loop(&exp_b.model, &exp_b.spec, &exp_b.reference, &exp_b.sim);
        (a.join().expect("simulation thread"), b)
    });
    let (log_a, log_b) = (log_a?, log_b?);

    let mut name_a = log_name(&cfg_a, path_a);
    let mut name_b = log_name(&cfg_b, path_b);
    if name_a == name_b {
        name_a.push_str("_a");
        name_b.push_str("_b");
    }
    let dir = output_dir(cli, &cfg_a, &format!("{}_vs_{}", stem(path_a), stem(path_b)))?;
    let csv_a = dir.join(format!("{name_a}.csv"));
    let csv_b = dir.join(format!("{name_b}.csv"));
    write_csv(&csv_a, &log_a)?;
    write_csv(&csv_b, &log_b)?;

    let combined = dir.join("compare.csv");
    let mut w = BufWriter::new(File::create(&combined)?);
    writeln!(w, "run,{}", TrajectoryLog::header(log_a.n_joints).join(","))?;
    for (name, log) in [(&name_a, &log_a), (&name_b, &log_b)] {
        for k in 0..log.len() {
            let row: Vec<String> = log.row(k).iter().map(|v| format!("{v:.14e}")).collect();
            writeln!(w, "{name},{}", row.join(","))?;
        }
    }
    w.flush()?;

    let (m_a, m_b) = (log_a.metrics(), log_b.metrics());
    let mut table = metrics_table([&name_a, &name_b], [&m_a, &m_b]);
    let rel = |a: f64, b: f64| match b.partial_cmp(&a) {
        Some(std::cmp::Ordering::Less) => "smaller",
        Some(std::cmp::Ordering::Greater) => "larger",
        _ => "equal",
    };
    let _ = writeln!(
        table,
        "\n{name_b} vs {name_a}: steady-state rms {}, peak control {}",
        rel(m_a.rms_link_error, m_b.rms_link_error),
        rel(m_a.peak_control, m_b.peak_control)
    );
    let txt = dir.join("compare.txt");
    fs::write(&txt, table)?;
    Ok((vec![csv_a, csv_b, combined, txt], EXIT_OK))
}

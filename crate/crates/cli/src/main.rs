#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};
use mfobserver::config::{ExperimentConfig, QSpec};
use mfobserver::experiment::{self, Outcome, DEFAULT_SEED};
use mfobserver::modfun::ModulatingFunction;
use mfobserver::observer::{lyapunov_solve, sym_eigenvalues, varpi};
use mfobserver::transform::activation_time;
use mfobserver::Error;
use nalgebra::{Complex, DVector};

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_CERTIFICATE: u8 = 4;

#[derive(Parser)]
#[command(
    name = "mfobs",
    version,
    about = "Modulating-function observer experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configured experiment and write trajectory.csv and summary.txt.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        run: RunFlags,
        /// Output directory (overrides [output] dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the first time at which det T_n(mu(t)) reaches eps.
    ActivationTime {
        #[arg(long)]
        n: usize,
        /// Modulating order, defaults to n.
        #[arg(long)]
        m: Option<usize>,
        #[arg(long, default_value_t = 0.01)]
        eps: f64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        t0: f64,
    },
    /// Hurwitz check, Lyapunov solution and convergence margin for a gain.
    CheckGain {
        /// Comma-separated gain vector, e.g. 30,200.
        #[arg(long, allow_hyphen_values = true)]
        gain: String,
        #[arg(long)]
        n: Option<usize>,
        /// identity | scaled <c> | diag <a,b,...>
        #[arg(long, default_value = "identity")]
        q: String,
        #[arg(long, default_value_t = 1.0)]
        m0: f64,
        #[arg(long, default_value_t = 0.0)]
        input_bound: f64,
        #[arg(long, default_value_t = 0.0)]
        gamma_f: f64,
        #[arg(long, default_value_t = 0.0)]
        gamma_g: f64,
    },
    /// Check the modulating-function properties on a time grid.
    ValidateMf {
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        t0: f64,
        /// start:end:count, defaults to t0:t0+10:1001.
        #[arg(long, conflicts_with = "times")]
        grid: Option<String>,
        /// Comma-separated explicit times.
        #[arg(long)]
        times: Option<String>,
    },
    /// Run several configs, each into <out>/<config stem>/.
    Batch {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[command(flatten)]
        run: RunFlags,
    },
}

#[derive(Args, Clone, Copy)]
struct RunFlags {
    /// Integration step (overrides [simulation] dt).
    #[arg(long)]
    dt: Option<f64>,
    /// Determinant threshold (overrides [modulating] eps).
    #[arg(long)]
    eps: Option<f64>,
    /// Seed for sampling-based Lipschitz estimation.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config { .. } | Error::Argument(_) | Error::Io(_) => EXIT_CONFIG,
            Error::CertificateUnavailable { .. } => EXIT_CERTIFICATE,
            Error::Domain(_)
            | Error::Singular { .. }
            | Error::Unstable { .. }
            | Error::Numerical(_) => EXIT_NUMERICAL,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

type CmdResult = Result<String, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { config, run, out } => simulate(&config, run, out.as_deref()),
        Command::ActivationTime { n, m, eps, t0 } => {
            cmd_activation_time(n, m.unwrap_or(n), eps, t0)
        }
        Command::CheckGain {
            gain,
            n,
            q,
            m0,
            input_bound,
            gamma_f,
            gamma_g,
        } => check_gain(&gain, n, &q, m0, input_bound, gamma_f, gamma_g),
        Command::ValidateMf { m, t0, grid, times } => {
            validate_mf(m, t0, grid.as_deref(), times.as_deref())
        }
        Command::Batch {
            configs,
            out,
            jobs,
            run,
        } => batch(&configs, &out, jobs, run),
    };
    match result {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load_config(path: &Path, flags: RunFlags) -> Result<ExperimentConfig, Failure> {
    let mut cfg = ExperimentConfig::from_file(path)?;
    if let Some(dt) = flags.dt {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Failure::config(format!("--dt {dt} must be positive")));
        }
        cfg.dt = dt;
    }
    if let Some(eps) = flags.eps {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Failure::config(format!("--eps {eps} must lie in (0, 1)")));
        }
        cfg.eps = eps;
    }
    Ok(cfg)
}

/// Run, write outputs, and map the outcome to an exit status.
fn run_one(cfg: &ExperimentConfig, seed: u64, dir: &Path) -> Result<Outcome, Failure> {
    let outcome = experiment::run(cfg, seed)?;
    outcome.write(dir)?;
    if let Some(t) = &outcome.trajectory.termination {
        return Err(Failure {
            code: EXIT_NUMERICAL,
            message: format!(
                "{}: run stopped after t = {}: {}",
                cfg.source, t.last_valid_time, t.error
            ),
        });
    }
    if cfg.require_certificate && outcome.certificate.kappa.is_none() {
        return Err(Error::CertificateUnavailable {
            varpi: outcome.certificate.varpi,
        }
        .into());
    }
    Ok(outcome)
}

fn simulate(path: &Path, flags: RunFlags, out: Option<&Path>) -> CmdResult {
    let cfg = load_config(path, flags)?;
    let dir = out
        .map(Path::to_path_buf)
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let outcome = run_one(&cfg, flags.seed, &dir)?;
    Ok(outcome.summary())
}

fn cmd_activation_time(n: usize, m: usize, eps: f64, t0: f64) -> CmdResult {
    if m < n {
        return Err(Failure::config(format!("m = {m} must be at least n = {n}")));
    }
    let mf = ModulatingFunction::exponential(m, t0)?;
    let t_a = activation_time(n, &mf, eps)?;
    Ok(format!("{t_a}\n"))
}

fn parse_list(flag: &str, s: &str) -> Result<Vec<f64>, Failure> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Failure::config(format!("{flag}: '{}' is not a number", p.trim())))
        })
        .collect()
}

fn fmt_complex(e: &Complex<f64>) -> String {
    if e.im == 0.0 {
        format!("{}", e.re)
    } else {
        format!("{}{:+}i", e.re, e.im)
    }
}

fn check_gain(
    gain: &str,
    n: Option<usize>,
    q: &str,
    m0: f64,
    input_bound: f64,
    gamma_f: f64,
    gamma_g: f64,
) -> CmdResult {
    let gain = DVector::from_vec(parse_list("--gain", gain)?);
    if let Some(n) = n {
        if n != gain.len() {
            return Err(Failure::config(format!(
                "--n {n} but the gain has {} entries",
                gain.len()
            )));
        }
    }
    let q = q
        .parse::<QSpec>()
        .map_err(Failure::config)?
        .matrix(gain.len())?;
    let sol = lyapunov_solve(&gain, &q)?;
    let p_eig = sym_eigenvalues(&sol.p);
    let w = varpi(&sol.p, &q, m0, input_bound, gamma_f, gamma_g);

    let mut s = String::new();
    let eig: Vec<String> = sol.eigenvalues.iter().map(fmt_complex).collect();
    writeln!(s, "eigenvalues = {}", eig.join(", ")).unwrap();
    writeln!(s, "hurwitz = true").unwrap();
    for i in 0..sol.p.nrows() {
        let row: Vec<String> = sol.p.row(i).iter().map(|v| format!("{v:.17e}")).collect();
        writeln!(s, "p{} = {}", i + 1, row.join(", ")).unwrap();
    }
    writeln!(s, "lyapunov_residual = {:e}", sol.residual).unwrap();
    writeln!(s, "lambda_min_p = {:.17e}", p_eig[0]).unwrap();
    writeln!(s, "lambda_max_p = {:.17e}", p_eig[p_eig.len() - 1]).unwrap();
    writeln!(s, "varpi = {w:.17e}").unwrap();
    writeln!(s, "margin_positive = {}", w > 0.0).unwrap();
    Ok(s)
}

fn validate_mf(m: usize, t0: f64, grid: Option<&str>, times: Option<&str>) -> CmdResult {
    let points = match (grid, times) {
        (_, Some(list)) => parse_list("--times", list)?,
        (Some(g), None) => {
            let parts: Vec<&str> = g.split(':').collect();
            let [a, b, c] = parts[..] else {
                return Err(Failure::config("--grid expects start:end:count"));
            };
            let a: f64 = a
                .trim()
                .parse()
                .map_err(|_| Failure::config("--grid: bad start"))?;
            let b: f64 = b
                .trim()
                .parse()
                .map_err(|_| Failure::config("--grid: bad end"))?;
            let c: usize = c
                .trim()
                .parse()
                .map_err(|_| Failure::config("--grid: bad count"))?;
            linspace(a, b, c)?
        }
        (None, None) => linspace(t0, t0 + 10.0, 1001)?,
    };
    let mf = ModulatingFunction::exponential(m, t0)?;
    let report = mf.validate(&points)?;

    let mut s = String::new();
    writeln!(s, "smooth = {}", report.smooth).unwrap();
    writeln!(s, "vanishes_at_t0 = {}", report.vanishes_at_t0).unwrap();
    for (j, v) in &report.values_at_t0 {
        writeln!(s, "mu{j}(t0) = {v:e}").unwrap();
    }
    writeln!(s, "nonvanishing = {}", report.nonvanishing()).unwrap();
    for z in &report.zero_derivatives {
        writeln!(s, "zero: mu{}({}) = {:e}", z.order, z.t, z.value).unwrap();
    }
    writeln!(s, "bounded = {}", report.bounded()).unwrap();
    for v in &report.bound_violations {
        writeln!(s, "bound violation: mu{}({}) = {:e}", v.order, v.t, v.value).unwrap();
    }
    writeln!(s, "usable = {}", report.is_usable()).unwrap();
    if !report.is_usable() {
        eprint!("{s}");
        return Err(Failure {
            code: EXIT_NUMERICAL,
            message: "modulating function fails a required property".into(),
        });
    }
    Ok(s)
}

fn linspace(a: f64, b: f64, count: usize) -> Result<Vec<f64>, Failure> {
    if count == 0 || !(b >= a) {
        return Err(Failure::config("--grid needs end >= start and count >= 1"));
    }
    if count == 1 {
        return Ok(vec![a]);
    }
    let h = (b - a) / (count - 1) as f64;
    Ok((0..count)
        .map(|k| if k + 1 == count { b } else { a + k as f64 * h })
        .collect())
}

fn batch(configs: &[PathBuf], out: &Path, jobs: usize, flags: RunFlags) -> CmdResult {
    if jobs == 0 {
        return Err(Failure::config("--jobs must be at least 1"));
    }
    let mut dirs = Vec::with_capacity(configs.len());
    let mut seen = HashSet::new();
    for c in configs {
        let stem = c
            .file_stem()
            .ok_or_else(|| Failure::config(format!("'{}' has no file name", c.display())))?;
        if !seen.insert(stem.to_owned()) {
            return Err(Failure::config(format!(
                "two configs share the name '{}'",
                stem.to_string_lossy()
            )));
        }
        dirs.push(out.join(stem));
    }

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<Outcome, Failure>>>> =
        Mutex::new((0..configs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..jobs.min(configs.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= configs.len() {
                    break;
                }
                let r = load_config(&configs[i], flags)
                    .and_then(|cfg| run_one(&cfg, flags.seed, &dirs[i]));
                results.lock().unwrap()[i] = Some(r);
            });
        }
    });

    let mut s = String::new();
    let mut worst = 0u8;
    for (i, r) in results.into_inner().unwrap().into_iter().enumerate() {
        let name = configs[i].display();
        match r.expect("every config is processed") {
            Ok(o) => {
                let kappa = o
                    .certificate
                    .kappa
                    .map_or_else(|| "unavailable".to_string(), |k| format!("{k:.17e}"));
                let sup = o.metrics.map_or_else(
                    || "unavailable".to_string(),
                    |m| format!("{:.17e}", m.sup_error),
                );
                writeln!(
                    s,
                    "{name}: ok t_a = {} kappa = {kappa} sup_error = {sup} -> {}",
                    o.certificate.activation_time,
                    dirs[i].display()
                )
                .unwrap();
            }
            Err(f) => {
                writeln!(s, "{name}: failed ({}) {}", f.code, f.message).unwrap();
                worst = worst.max(f.code);
            }
        }
    }
    if worst != 0 {
        eprint!("{s}");
        return Err(Failure {
            code: worst,
            message: "some experiments failed".into(),
        });
    }
    Ok(s)
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qpurify::feedback::PermutationMode;
use qpurify::harness::output::{self, Figure1Report};
use qpurify::harness::{self, ExperimentConfig, Mode, VerifyOptions};
use qpurify::sme::Scheme;
use qpurify::Error;

const EXIT_VALIDATION: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;
const EXIT_VERIFICATION: u8 = 3;

#[derive(Parser)]
#[command(name = "qpurify", version, about = "Continuous measurement and feedback purification simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte-Carlo ensemble; writes <out>.csv and <out>.json.
    Simulate(SimulateArgs),
    /// Speed-up lower bound table; writes <out>.csv and <out>.json.
    Figure1(Figure1Args),
    /// Run the analytic self-check suite.
    Verify(VerifyArgs),
    /// SVG line chart from a curve or figure1 CSV.
    Plot(PlotArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Flat TOML file with ExperimentConfig keys; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    t_final: Option<f64>,
    #[arg(long)]
    trajectories: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// unassisted | feedback
    #[arg(long)]
    mode: Option<String>,
    /// exhaustive | greedy
    #[arg(long)]
    perm_mode: Option<String>,
    /// milstein | euler-maruyama
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    thinning: Option<usize>,
    /// Output path stem.
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct Figure1Args {
    #[arg(long, value_delimiter = ',', default_values_t = vec![2usize, 3, 4])]
    n_list: Vec<usize>,
    /// Target impurities; defaults to 41 log-spaced values from 0.3 to 1e-8.
    #[arg(long, value_delimiter = ',')]
    targets: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value = "figure1")]
    out: String,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 4)]
    n_max: usize,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Fault injection: scale k by this factor (the suite must then fail).
    #[arg(long, default_value_t = 1.0)]
    mutate_k: f64,
    /// Also write the JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

enum Failure {
    Error(Error),
    Verification(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

fn stem(out: &str) -> PathBuf {
    let p = PathBuf::from(out);
    match p.extension().and_then(|e| e.to_str()) {
        Some("csv" | "json") => p.with_extension(""),
        _ => p,
    }
}

fn with_ext(stem: &Path, ext: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, Error> {
    let Some(path) = path else {
        return Ok(ExperimentConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn simulate(a: SimulateArgs) -> Result<(), Failure> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(v) = a.n {
        cfg.n = v;
    }
    if let Some(v) = a.gamma {
        cfg.gamma = v;
    }
    if let Some(v) = a.dt {
        cfg.dt = Some(v);
    }
    if let Some(v) = a.t_final {
        cfg.t_final = v;
    }
    if let Some(v) = a.trajectories {
        cfg.n_trajectories = v;
    }
    if let Some(v) = a.seed {
        cfg.master_seed = v;
    }
    if let Some(v) = a.mode {
        cfg.mode = v.parse::<Mode>()?;
    }
    if let Some(v) = a.perm_mode {
        cfg.permutation_mode = v.parse::<PermutationMode>()?;
    }
    if let Some(v) = a.scheme {
        cfg.scheme = v.parse::<Scheme>()?;
    }
    if let Some(v) = a.thinning {
        cfg.thinning = v;
    }
    if let Some(v) = a.out {
        cfg.output_path = v;
    }
    cfg.validate()?;

    let summary = harness::run_ensemble(&cfg)?;
    for f in &summary.failures {
        eprintln!("warning: trajectory {} failed: {}", f.index, f.message);
    }
    let base = stem(&cfg.output_path);
    let csv_path = with_ext(&base, "csv");
    let json_path = with_ext(&base, "json");
    output::write_text(&csv_path, &output::curve_csv(&summary)?)?;
    output::write_text(&json_path, &output::to_json(&summary)?)?;

    let last = summary.times.len() - 1;
    println!(
        "{} trajectories ({} failed), N = {}, {:?}: <L>({}) = {:.6e} ± {:.1e}",
        summary.completed,
        summary.failures.len(),
        cfg.n,
        cfg.mode,
        summary.times[last],
        summary.mean_impurity[last],
        summary.stderr_impurity[last]
    );
    if let Some(fb) = &summary.feedback {
        println!(
            "feedback: {} steps, {} rate violations, max L/bound = {:.6}",
            fb.steps_checked, fb.rate_violations, fb.max_bound_ratio
        );
    }
    println!("wrote {} and {}", csv_path.display(), json_path.display());
    Ok(())
}

fn figure1(a: Figure1Args) -> Result<(), Failure> {
    let targets = a.targets.unwrap_or_else(|| harness::log_targets(0.3, 1e-8, 41));
    let rows = harness::figure1_data(&a.n_list, &targets, a.gamma)?;
    let base = stem(&a.out);
    let csv_path = with_ext(&base, "csv");
    let json_path = with_ext(&base, "json");
    output::write_text(&csv_path, &output::figure1_csv(&rows)?)?;
    let report = Figure1Report::new(a.gamma, &a.n_list, &targets, rows);
    output::write_text(&json_path, &output::to_json(&report)?)?;
    for &n in &a.n_list {
        if let Some(r) = report.rows.iter().filter(|r| r.n == n).last() {
            println!(
                "N = {n}: S >= {:.4} at L = {:.1e} (limit {:.4})",
                r.speedup_lower, r.l_target, r.asymptotic_speedup
            );
        }
    }
    println!("wrote {} and {}", csv_path.display(), json_path.display());
    Ok(())
}

fn verify(a: VerifyArgs) -> Result<(), Failure> {
    let report = harness::verify_suite(&VerifyOptions {
        n_max: a.n_max,
        gamma: a.gamma,
        k_scale: a.mutate_k,
    })?;
    for c in &report.checks {
        let n = c.n.map(|n| format!(" N={n}")).unwrap_or_default();
        println!(
            "{} {}{n}: {:.3e} (tol {:.1e})",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.tolerance
        );
    }
    if let Some(path) = &a.out {
        output::write_text(path, &output::to_json(&report)?)?;
    }
    let failed = report.checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(Failure::Verification(format!(
            "{failed} of {} checks failed",
            report.checks.len()
        )));
    }
    println!("all {} checks passed", report.checks.len());
    Ok(())
}

fn plot(a: PlotArgs) -> Result<(), Failure> {
    let text = std::fs::read_to_string(&a.input)
        .map_err(|e| Error::Io(format!("cannot read {}: {e}", a.input.display())))?;
    output::write_text(&a.out, &output::plot_svg(&text)?)?;
    println!("wrote {}", a.out.display());
    Ok(())
}

/// Size the global pool, capped by QPURIFY_THREADS when set.
fn init_threads() -> Result<(), Error> {
    let available = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let threads = match std::env::var("QPURIFY_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => n,
            _ => {
                return Err(Error::Config(format!(
                    "QPURIFY_THREADS must be a positive integer, got '{v}'"
                )))
            }
        },
        Err(_) => available,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::Config(format!("cannot configure workers: {e}")))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_VALIDATION);
    }
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Figure1(a) => figure1(a),
        Command::Verify(a) => verify(a),
        Command::Plot(a) => plot(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verification(msg)) => {
            eprintln!("verification failed: {msg}");
            ExitCode::from(EXIT_VERIFICATION)
        }
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { EXIT_VALIDATION } else { EXIT_NUMERICAL })
        }
    }
}

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dihedral_mra::bench::{
    self, fit_slope, mean_errors, parse_config, read_records_csv, report_iterations, Method,
    SweepSpec,
};
use dihedral_mra::estimators::EstimatorConfig;
use dihedral_mra::inversion::{invert, InversionOptions};
use dihedral_mra::simulator::{self, NoiseLevel};
use dihedral_mra::{relative_error, Error, MomentPair, Result};

#[derive(Parser)]
#[command(name = "dmra", version, about = "Dihedral multi-reference alignment toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a signal, a distribution and a noisy dataset.
    Generate(GenerateArgs),
    /// Run one estimator on a saved dataset.
    Estimate(EstimateArgs),
    /// Monte Carlo SNR sweep written as CSV.
    Sweep(SweepArgs),
    /// Recover a random signal from its exact moments.
    Invert(InvertArgs),
    /// Summarize a sweep CSV.
    Report(ReportArgs),
}

#[derive(Args)]
struct NoiseArgs {
    /// Signal-to-noise ratio ‖x‖²/(Lσ²).
    #[arg(long, conflicts_with = "sigma")]
    snr: Option<f64>,
    /// Noise standard deviation.
    #[arg(long)]
    sigma: Option<f64>,
}

impl NoiseArgs {
    fn level(&self) -> NoiseLevel {
        match (self.snr, self.sigma) {
            (Some(snr), _) => NoiseLevel::Snr(snr),
            (None, Some(s)) => NoiseLevel::Sigma(s),
            (None, None) => NoiseLevel::Snr(1.0),
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long = "L", default_value_t = 10)]
    signal_len: usize,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[command(flatten)]
    noise: NoiseArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Binary dataset path.
    #[arg(long)]
    out: PathBuf,
    /// Also write the observations as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    /// Binary dataset path.
    input: PathBuf,
    #[arg(long, default_value = "em")]
    method: Method,
    /// Noise level assumed by the estimator; defaults to the dataset's.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    lambda: Option<f64>,
    /// Print the wall time.
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct SweepArgs {
    /// `key = value` file; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "L")]
    signal_len: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    /// `lo:hi:count` for a log grid, or a comma list.
    #[arg(long = "snr-grid", visible_alias = "snr")]
    snr_grid: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma list of sync, em, mom, invert.
    #[arg(long = "method", visible_alias = "methods", value_delimiter = ',')]
    methods: Vec<Method>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Keep sync even when n is large.
    #[arg(long)]
    force_sync: bool,
    /// Record wall times in the CSV.
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct InvertArgs {
    #[arg(long = "L", default_value_t = 8)]
    signal_len: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ReportArgs {
    /// Sweep CSV.
    input: PathBuf,
    /// SNR range for slope fits, as `lo:hi`.
    #[arg(long = "slope-range", value_parser = parse_range)]
    slope_range: Option<(f64, f64)>,
}

fn parse_range(s: &str) -> std::result::Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(':').ok_or("expected lo:hi")?;
    let lo: f64 = lo.trim().parse().map_err(|_| format!("invalid bound {lo:?}"))?;
    let hi: f64 = hi.trim().parse().map_err(|_| format!("invalid bound {hi:?}"))?;
    Ok((lo, hi))
}

fn generate(a: GenerateArgs) -> Result<()> {
    let x = simulator::sample_signal(a.signal_len, a.seed)?;
    let rho = simulator::sample_distribution(a.signal_len, a.seed)?;
    let sigma = a.noise.level().sigma_for(&x)?;
    let obs = simulator::generate(&x, &rho, a.n, sigma, a.seed)?;
    simulator::save(&obs, &a.out)?;
    if let Some(path) = &a.csv {
        simulator::export_csv(&obs, path)?;
    }
    println!(
        "wrote {} observations, L = {}, sigma = {sigma:.6e}, snr = {:.6e}",
        obs.len(),
        obs.signal_len(),
        simulator::snr_for_sigma(&x, sigma)
    );
    Ok(())
}

fn estimate(a: EstimateArgs) -> Result<()> {
    let obs = simulator::load(&a.input)?;
    let sigma = a.sigma.unwrap_or_else(|| obs.sigma());
    let config = EstimatorConfig {
        seed: a.seed,
        lambda: a.lambda,
        ..Default::default()
    };
    let start = std::time::Instant::now();
    let (x, iterations) = bench::run_method(a.method, &obs, sigma, &config)?;
    let elapsed = start.elapsed();
    let values: Vec<String> = x.as_slice().iter().map(|v| format!("{v:.10e}")).collect();
    println!("x = [{}]", values.join(", "));
    println!("iterations = {iterations}");
    if let Some(truth) = obs.true_signal() {
        println!("relative error = {:.6e}", relative_error(&x, truth)?);
    }
    if a.timing {
        println!("wall time = {:.3} ms", elapsed.as_secs_f64() * 1e3);
    }
    Ok(())
}

fn sweep(a: SweepArgs) -> Result<()> {
    let mut spec = SweepSpec::default();
    if let Some(path) = &a.config {
        spec.apply_config(&parse_config(&fs::read_to_string(path)?)?)?;
    }
    let mut overrides = bench::ConfigMap::new();
    let mut set = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            overrides.insert(k.to_string(), v);
        }
    };
    set("signal_len", a.signal_len.map(|v| v.to_string()));
    set("n", a.n.map(|v| v.to_string()));
    set("snr_grid", a.snr_grid);
    set("trials", a.trials.map(|v| v.to_string()));
    set("seed", a.seed.map(|v| v.to_string()));
    set("lambda", a.lambda.map(|v| v.to_string()));
    spec.apply_config(&overrides)?;
    if !a.methods.is_empty() {
        spec.methods = a.methods;
    }
    if a.out.is_some() {
        spec.out = a.out;
    }
    spec.force_sync |= a.force_sync;
    spec.record_wall_time |= a.timing;
    let dropped = spec.methods.len() != spec.effective_methods().len();
    if dropped {
        eprintln!("note: sync skipped for n = {} (use --force-sync)", spec.n);
    }
    let records = bench::run_sweep(&spec)?;
    if spec.out.is_none() {
        let mut out = std::io::stdout().lock();
        bench::write_records_csv(&records, spec.record_wall_time, &mut out)?;
    }
    let failures = records.iter().filter(|r| !r.is_ok()).count();
    if failures > 0 {
        eprintln!("{failures} of {} runs failed", records.len());
    }
    Ok(())
}

fn invert_demo(a: InvertArgs) -> Result<()> {
    let x = simulator::sample_signal(a.signal_len, a.seed)?;
    let rho = simulator::sample_distribution(a.signal_len, a.seed)?;
    let m = MomentPair::analytic(&x, &rho, 0.0)?;
    let (cands, sel) = invert(&m, &InversionOptions::default())?;
    println!("candidates = {}", cands.len());
    println!("selected = {}", sel.index);
    println!("moment residual = {:.3e}", sel.residual);
    println!("relative error = {:.3e}", relative_error(&sel.signal, &x)?);
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let records = read_records_csv(&fs::read_to_string(&a.input)?)?;
    let mut methods: Vec<Method> = records.iter().map(|r| r.method).collect();
    methods.sort_by_key(|m| m.name());
    methods.dedup();
    println!("method,snr,mean_rel_error");
    for &m in &methods {
        let subset: Vec<_> = records.iter().filter(|r| r.method == m).cloned().collect();
        for (snr, err) in mean_errors(&subset) {
            println!("{m},{snr:.6e},{err:.6e}");
        }
    }
    if methods.contains(&Method::Em) {
        println!();
        println!("snr,mean_em_iterations");
        for (snr, it) in report_iterations(&records)? {
            println!("{snr:.6e},{it:.2}");
        }
    }
    if let Some((lo, hi)) = a.slope_range {
        println!();
        for &m in &methods {
            let subset: Vec<_> = records.iter().filter(|r| r.method == m).cloned().collect();
            match fit_slope(&subset, (lo, hi)) {
                Ok(s) => println!("slope {m} [{lo}, {hi}] = {s:.4}"),
                Err(e) => println!("slope {m} [{lo}, {hi}] unavailable: {e}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome: std::result::Result<(), Error> = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Estimate(a) => estimate(a),
        Command::Sweep(a) => sweep(a),
        Command::Invert(a) => invert_demo(a),
        Command::Report(a) => report(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dmra: {e}");
            ExitCode::FAILURE
        }
    }
}

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use rjrfa::estimators::{EstimateOutput, Registry, RevConfig};
use rjrfa::generator::{generate_region, RegionConfig};
use rjrfa::rjmcmc::write_trace;
use rjrfa::rng::stream_rng;
use rjrfa::site::read_sites_path;
use rjrfa::study::{
    bias_c_analysis, estimator_seed, run_sensitivity, run_study, write_sensitivity_csv, SensitivityConfig,
    StudyConfig, StudyResult,
};

#[derive(Parser)]
#[command(name = "rjrfa", version, about = "Regional flood quantile estimation with reversible-jump MCMC")]
struct Cli {
    /// Seed for every random stream
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for studies (defaults to all cores)
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output file (fit) or directory (generate, study, sensitivity)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate quantiles at one site from a CSV of exceedances
    Fit(FitArgs),
    /// Simulate a homogeneous region
    Generate(GenerateArgs),
    /// Run a Monte-Carlo study over synthetic regions
    Study(ConfigArgs),
    /// Sweep the slice probability and slice shape
    Sensitivity(ConfigArgs),
}

#[derive(Args)]
struct FitArgs {
    /// CSV with columns site_id, area_km2, value
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    target: String,
    /// rev, bay or ifl
    #[arg(long, default_value = "rev")]
    estimator: String,
    #[arg(long, value_delimiter = ',', default_value = "0.75,0.95,0.995")]
    probs: Vec<f64>,
    /// JSON estimator settings (chain, nsim, p_xi, h1, xi_fix)
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    p_xi: Option<f64>,
    #[arg(long)]
    xi_fix: Option<f64>,
    #[arg(long)]
    n_iter: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    /// Write the retained chain states here
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    /// JSON region settings
    #[arg(long)]
    config: PathBuf,
    /// Override the ball radius
    #[arg(long)]
    epsilon: Option<f64>,
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    config: PathBuf,
}

/// JSON pointer of a deserialization path, e.g. `/region/site_sizes/2`.
fn json_pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut s = String::new();
    for seg in path.iter() {
        s.push('/');
        match seg {
            Segment::Seq { index } => s.push_str(&index.to_string()),
            Segment::Map { key } => s.push_str(&key.replace('~', "~0").replace('/', "~1")),
            Segment::Enum { variant } => s.push_str(variant),
            Segment::Unknown => s.push('?'),
        }
    }
    if s.is_empty() {
        s.push('/');
    }
    s
}

fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de)
        .map_err(|e| anyhow::anyhow!("{}: invalid config at {}: {}", path.display(), json_pointer(e.path()), e.inner()))
}

fn out_dir(out: &Option<PathBuf>) -> Result<PathBuf> {
    let dir = out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn write_estimates<W: Write>(out: &EstimateOutput, w: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["estimator", "p", "point", "lo", "hi"])?;
    for e in &out.estimates {
        let (lo, hi) = e.ci90.map_or((String::new(), String::new()), |(l, h)| (l.to_string(), h.to_string()));
        w.write_record([e.estimator.clone(), e.p.to_string(), e.point.to_string(), lo, hi])?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_fit(args: &FitArgs, seed: u64, out: &Option<PathBuf>) -> Result<()> {
    let sites = read_sites_path(&args.data)?;
    let mut cfg: RevConfig = match &args.config {
        Some(p) => load_json(p)?,
        None => RevConfig::default(),
    };
    if args.p_xi.is_some() {
        cfg.p_xi = args.p_xi;
    }
    if args.xi_fix.is_some() {
        cfg.xi_fix = args.xi_fix;
    }
    if let Some(n) = args.n_iter {
        cfg.chain.n_iter = n;
    }
    if let Some(b) = args.burn_in {
        cfg.chain.burn_in = b;
    }
    let registry = Registry::with_defaults(cfg);
    let est = registry.get(&args.estimator)?;
    let mut rng = stream_rng(estimator_seed(seed, est.name()), 0);
    let result = est.estimate(&sites, &args.target, &args.probs, &mut rng)?;
    log::info!("index flood {:.4}; {:?}", result.c_hat, result.diagnostics);

    match out {
        Some(p) => {
            let mut w = create(p)?;
            write_estimates(&result, &mut w)?;
            w.flush()?;
        }
        None => write_estimates(&result, io::stdout().lock())?,
    }
    if let Some(tp) = &args.trace {
        match &result.trace {
            Some(t) => {
                let mut w = create(tp)?;
                write_trace(t, &mut w)?;
                w.flush()?;
            }
            None => bail!("estimator {} has no chain to export", est.name()),
        }
    }
    Ok(())
}

fn cmd_generate(args: &GenerateArgs, seed: u64, out: &Option<PathBuf>) -> Result<()> {
    let mut cfg: RegionConfig = load_json(&args.config)?;
    if let Some(e) = args.epsilon {
        cfg.epsilon = e;
    }
    let region = generate_region(&cfg, &mut stream_rng(seed, 0))?;
    let dir = out_dir(out)?;
    let mut w = create(&dir.join("region.csv"))?;
    region.write_csv(&mut w)?;
    w.flush()?;
    let mut w = create(&dir.join("truth.json"))?;
    region.write_truth_json(&mut w)?;
    w.flush()?;
    write_json(
        &dir.join("manifest.json"),
        &serde_json::json!({ "seed": seed, "version": env!("CARGO_PKG_VERSION"), "region": cfg }),
    )
}

fn write_study(res: &StudyResult, dir: &Path) -> Result<()> {
    let mut w = create(&dir.join("results.csv"))?;
    res.write_csv(&mut w)?;
    w.flush()?;

    let mut w = csv::Writer::from_writer(create(&dir.join("replicates.csv"))?);
    w.write_record(["replicate", "estimator", "p", "truth", "point", "lo", "hi", "c_hat", "true_mean", "mass_fraction"])?;
    for r in &res.replicates {
        for q in &r.quantiles {
            let (lo, hi) = q.ci90.map_or((String::new(), String::new()), |(l, h)| (l.to_string(), h.to_string()));
            w.write_record([
                r.replicate.to_string(),
                r.estimator.clone(),
                q.p.to_string(),
                q.truth.to_string(),
                q.point.to_string(),
                lo,
                hi,
                r.c_hat.to_string(),
                r.true_mean.to_string(),
                r.mass_fraction.map_or(String::new(), |m| m.to_string()),
            ])?;
        }
    }
    w.flush()?;

    let mut manifest = res.manifest();
    if res.config.probs.contains(&0.95) && res.config.n_regions >= 2 {
        match bias_c_analysis(res, 0.95) {
            Ok(fits) => {
                let summary: Vec<_> = fits
                    .iter()
                    .map(|f| {
                        serde_json::json!({
                            "estimator": f.estimator, "slope": f.slope, "intercept": f.intercept,
                            "n": f.n, "bias_c_range": f.bias_c_range,
                        })
                    })
                    .collect();
                manifest["bias_c"] = serde_json::Value::Array(summary);
            }
            Err(e) => log::warn!("index-flood bias analysis skipped: {e}"),
        }
    }
    write_json(&dir.join("manifest.json"), &manifest)
}

fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    match &cli.command {
        Command::Fit(a) => cmd_fit(a, seed.unwrap_or(0), &cli.out),
        Command::Generate(a) => cmd_generate(a, seed.unwrap_or(0), &cli.out),
        Command::Study(a) => {
            let mut cfg: StudyConfig = load_json(&a.config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let res = run_study(&cfg)?;
            write_study(&res, &out_dir(&cli.out)?)
        }
        Command::Sensitivity(a) => {
            let mut cfg: SensitivityConfig = load_json(&a.config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let res = run_sensitivity(&cfg)?;
            let dir = out_dir(&cli.out)?;
            let mut w = create(&dir.join("sensitivity.csv"))?;
            write_sensitivity_csv(&res, &mut w)?;
            w.flush()?;
            write_json(&dir.join("manifest.json"), &res.manifest())
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.jobs {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build() {
            Ok(pool) => pool.install(|| run(cli)),
            Err(e) => Err(e.into()),
        },
        None => run(cli),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

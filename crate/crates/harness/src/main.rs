use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde_json::{Map, Value};
use vmpost_harness::config::parse_flat_value;
use vmpost_harness::emit::{emit_coverage, emit_kl, emit_predictive, emit_timing};
use vmpost_harness::experiments::{gaussian, gmm, lda, penguins};
use vmpost_harness::interchange::{aggregate, MedianKind, PosteriorFile};
use vmpost_harness::{ExperimentConfig, ExperimentKind};

#[derive(Parser)]
#[command(name = "vmpost", version, about = "Robust divide-and-conquer variational posteriors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Credible-interval coverage for a Gaussian mean under a growing outlier.
    SimulateGaussian(Common),
    /// Predictive regions of a two-component Gaussian mixture.
    SimulateGmm(Common),
    /// Topic KL divergence in LDA with a growing outlier document.
    SimulateLda(Common),
    /// Mixture analysis of the penguins bill measurements.
    Penguins {
        /// CSV file with a header row.
        csv: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Median of posteriors stored as JSON files.
    Median {
        /// Posterior files (`kind` = gaussian, gmm or discrete).
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Select the metric median instead of the geometric median.
        #[arg(long)]
        metric: bool,
        /// RBF bandwidth for discrete measures (default: median heuristic).
        #[arg(long)]
        bandwidth: Option<f64>,
        /// Output file (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    groups: Option<usize>,
    #[arg(long)]
    replications: Option<usize>,
    /// Use multipliers 1..=I.
    #[arg(long)]
    outlier_max_multiplier: Option<u32>,
    /// Comma-separated nominal levels, e.g. 0.8,0.9,0.95.
    #[arg(long)]
    levels: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Flat key=value or JSON config file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra settings as key=value.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    fn resolve(&self, kind: ExperimentKind) -> anyhow::Result<ExperimentConfig> {
        let mut flags = Map::new();
        for item in &self.set {
            let (k, v) = item
                .split_once('=')
                .with_context(|| format!("--set expects KEY=VALUE, got `{item}`"))?;
            flags.insert(k.trim().to_string(), parse_flat_value(v.trim()));
        }
        let mut put = |k: &str, v: Value| {
            flags.insert(k.to_string(), v);
        };
        if let Some(v) = self.n {
            put("n", v.into());
        }
        if let Some(v) = self.groups {
            put("groups", v.into());
        }
        if let Some(v) = self.replications {
            put("replications", v.into());
        }
        if let Some(i) = self.outlier_max_multiplier {
            put("multipliers", (1..=i).map(f64::from).collect::<Vec<_>>().into());
        }
        if let Some(levels) = &self.levels {
            let parsed = levels
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .context("--levels must be comma-separated numbers")?;
            put("levels", parsed.into());
        }
        if let Some(v) = self.seed {
            put("seed", v.into());
        }
        if let Some(v) = &self.out {
            put("out", Value::from(v.to_string_lossy().into_owned()));
        }
        Ok(ExperimentConfig::resolve(kind, self.config.as_deref(), &flags)?)
    }
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::SimulateGaussian(common) => {
            let cfg = common.resolve(ExperimentKind::Gaussian)?;
            log::info!("M-Posterior (MCMC) baselines are not part of this tool; comparing vb and vm only");
            let (rows, timing) = gaussian::run_gaussian_coverage(&cfg)?;
            emit_coverage(&cfg.out, "coverage", "Credible interval coverage", &rows)?;
            emit_timing(&cfg.out, &timing)?;
            log::info!("wrote {} coverage rows to {}", rows.len(), cfg.out.display());
        }
        Command::SimulateGmm(common) => {
            let cfg = common.resolve(ExperimentKind::Gmm)?;
            let out = gmm::run_gmm_predictive(&cfg)?;
            for r in &out.regions {
                log::info!(
                    "{} multiplier {}: {} peaks, region area {:.3}, inlier coverage {:.3}",
                    r.method.name(),
                    r.multiplier,
                    r.peaks.len(),
                    r.region.area,
                    r.coverage
                );
            }
            emit_predictive(
                &cfg.out,
                "predictive_coverage",
                "Predictive coverage of inliers",
                ("x1", "x2"),
                &out,
            )?;
        }
        Command::SimulateLda(common) => {
            let cfg = common.resolve(ExperimentKind::Lda)?;
            let (rows, timing) = lda::run_lda(&cfg)?;
            emit_kl(&cfg.out, &rows)?;
            emit_timing(&cfg.out, &timing)?;
            for t in &timing {
                log::info!("{} wall-clock: {:.3}s", t.method, t.seconds);
            }
        }
        Command::Penguins { csv, common } => {
            let cfg = common.resolve(ExperimentKind::Penguins)?;
            let out = penguins::run_penguins(&csv, &cfg)?;
            for r in &out.regions {
                log::info!(
                    "{}: {} peaks, inlier coverage {:.3}",
                    r.method.name(),
                    r.peaks.len(),
                    r.coverage
                );
            }
            let labels = (cfg.columns[0].as_str(), cfg.columns[1].as_str());
            emit_predictive(
                &cfg.out,
                "penguins_coverage",
                "Penguins predictive coverage",
                labels,
                &out,
            )?;
        }
        Command::Median {
            inputs,
            metric,
            bandwidth,
            out,
        } => {
            let posts = inputs
                .iter()
                .map(|p| PosteriorFile::read(p))
                .collect::<Result<Vec<_>, _>>()?;
            let kind = if metric {
                MedianKind::Metric
            } else {
                MedianKind::Geometric
            };
            let result = aggregate(&posts, kind, bandwidth)?;
            let text = serde_json::to_string_pretty(&result)?;
            match out {
                Some(path) => {
                    std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?
                }
                None => println!("{text}"),
            }
        }
    }
    Ok(())
}

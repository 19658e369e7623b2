//! `ufc simulate | train | calibrate | evaluate | sweep | trace`.
//!
//! Every command reads the run configuration given by `--config` (defaults
//! when omitted), applies its command-line overrides and writes below the
//! output directory:
//!
//! ```text
//! <output>/dataset/index.json        simulate
//! <output>/dataset/flights/...
//! <output>/ensemble.json             train
//! <output>/models/member_XX.json
//! <output>/threshold.json            calibrate
//! <output>/report_<domain>.{json,txt}  evaluate
//! <output>/sweep_<domain>.{json,txt}   sweep
//! <output>/traces/flight_XXXX.csv    evaluate, trace
//! ```

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use ufc_core::sim::{Domain, FlightRole};
use ufc_core::ufc::{calibrate_threshold, report_from_predictions, sweep_from_logits, ACCEPT_ALL};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::formats::{self, ReportFile, SweepFile, ThresholdFile};
use crate::pipeline;

pub fn version_text() -> String {
    format!(
        "{} (model version {}; formats {})",
        env!("CARGO_PKG_VERSION"),
        ufc_core::MODEL_FORMAT_VERSION,
        formats::format_versions()
    )
}

#[derive(Debug, Parser)]
#[command(name = "ufc", version = version_text(), about = "Quadrotor propeller fault diagnosis with uncertainty filtering")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fly the source and target flights and write the dataset directory.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Scenario seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train the ensemble members and write the ensemble manifest.
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset directory [default: <output>/dataset].
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Ensemble size N.
        #[arg(long)]
        members: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Seed of member 0; member k uses this plus k.
        #[arg(long)]
        training_seed: Option<u64>,
    },
    /// Choose the entropy threshold on the target all-healthy samples.
    Calibrate {
        #[command(flatten)]
        common: Common,
        /// Dataset directory [default: <output>/dataset].
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Ensemble manifest [default: <output>/ensemble.json].
        #[arg(long)]
        ensemble: Option<PathBuf>,
    },
    /// Report accuracy and data usage on held-out flights, with traces.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: EvalInputs,
    },
    /// Accuracy table over ensemble sizes and thresholds.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Dataset directory [default: <output>/dataset].
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Ensemble manifest [default: <output>/ensemble.json].
        #[arg(long)]
        ensemble: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = DomainArg::Target)]
        domain: DomainArg,
    },
    /// Per-step diagnosis of individual flights.
    Trace {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: EvalInputs,
        /// Flight id; repeat for several. Defaults to every held-out flight
        /// of the domain.
        #[arg(long = "flight")]
        flights: Vec<u32>,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory, overriding the configuration.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Worker threads; 0 uses every core. Results do not depend on it.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct EvalInputs {
    /// Dataset directory [default: <output>/dataset].
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Ensemble manifest [default: <output>/ensemble.json].
    #[arg(long)]
    pub ensemble: Option<PathBuf>,
    /// Threshold file written by `calibrate`.
    #[arg(long)]
    pub threshold_file: Option<PathBuf>,
    /// Threshold value in nats, or `none` to accept everything. Overrides
    /// the threshold file.
    #[arg(long, value_parser = parse_threshold)]
    pub threshold: Option<f64>,
    #[arg(long, value_enum, default_value_t = DomainArg::Target)]
    pub domain: DomainArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DomainArg {
    Source,
    Target,
}

impl From<DomainArg> for Domain {
    fn from(d: DomainArg) -> Self {
        match d {
            DomainArg::Source => Domain::Source,
            DomainArg::Target => Domain::Target,
        }
    }
}

fn parse_threshold(text: &str) -> std::result::Result<f64, String> {
    match text {
        "none" | "inf" => Ok(ACCEPT_ALL),
        _ => match text.parse::<f64>() {
            Ok(t) if t >= 0.0 => Ok(t),
            _ => Err(format!(
                "{text:?} is not a non-negative threshold or \"none\""
            )),
        },
    }
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut config = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &common.output {
        config.output_dir = out.clone();
    }
    Ok(config)
}

struct Paths {
    root: PathBuf,
}

impl Paths {
    fn new(config: &RunConfig) -> Self {
        Self {
            root: config.output_dir.clone(),
        }
    }
    fn dataset(&self, over: &Option<PathBuf>) -> PathBuf {
        over.clone().unwrap_or_else(|| self.root.join("dataset"))
    }
    fn ensemble(&self, over: &Option<PathBuf>) -> PathBuf {
        over.clone()
            .unwrap_or_else(|| self.root.join("ensemble.json"))
    }
    fn threshold(&self, over: &Option<PathBuf>) -> PathBuf {
        over.clone()
            .unwrap_or_else(|| self.root.join("threshold.json"))
    }
}

fn domain_name(domain: Domain) -> &'static str {
    match domain {
        Domain::Source => "source",
        Domain::Target => "target",
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { common, seed } => {
            let mut config = load_config(&common)?;
            if let Some(seed) = seed {
                config.scenario.seed = seed;
            }
            config.validate()?;
            simulate(&config, common.jobs)
        }
        Command::Train {
            common,
            dataset,
            members,
            epochs,
            training_seed,
        } => {
            let mut config = load_config(&common)?;
            if let Some(n) = members {
                config.members = n;
                config.member_seeds = None;
            }
            if let Some(e) = epochs {
                config.training.epochs = e;
            }
            if let Some(s) = training_seed {
                config.training_seed = s;
                config.member_seeds = None;
            }
            config.validate()?;
            let paths = Paths::new(&config);
            train(
                &config,
                &paths.dataset(&dataset),
                &paths.ensemble(&None),
                common.jobs,
            )
        }
        Command::Calibrate {
            common,
            dataset,
            ensemble,
        } => {
            let config = load_config(&common)?;
            let paths = Paths::new(&config);
            calibrate(
                &config,
                &paths.dataset(&dataset),
                &paths.ensemble(&ensemble),
                &paths.threshold(&None),
                common.jobs,
            )
        }
        Command::Evaluate { common, inputs } => {
            let config = load_config(&common)?;
            evaluate(&config, &inputs, common.jobs, None)
        }
        Command::Sweep {
            common,
            dataset,
            ensemble,
            domain,
        } => {
            let config = load_config(&common)?;
            let paths = Paths::new(&config);
            sweep(
                &config,
                &paths.dataset(&dataset),
                &paths.ensemble(&ensemble),
                domain.into(),
                common.jobs,
            )
        }
        Command::Trace {
            common,
            inputs,
            flights,
        } => {
            let config = load_config(&common)?;
            evaluate(&config, &inputs, common.jobs, Some(&flights))
        }
    }
}

fn simulate(config: &RunConfig, jobs: usize) -> Result<()> {
    let pool = pipeline::thread_pool(jobs)?;
    let pair = pipeline::simulate(&config.scenario, &pool)?;
    let logs: Vec<_> = pair.source.into_iter().chain(pair.target).collect();
    let dir = Paths::new(config).dataset(&None);
    let index =
        formats::write_dataset(&dir, &config.scenario, &logs, config.window, config.stride)?;
    log::info!("wrote {} flights to {}", index.flights.len(), dir.display());
    Ok(())
}

fn train(config: &RunConfig, dataset: &Path, manifest: &Path, jobs: usize) -> Result<()> {
    let data = formats::read_dataset(dataset)?;
    if data.index.window != config.window || data.index.stride != config.stride {
        return Err(Error::Config(format!(
            "dataset was windowed with L = {}, stride {}; the configuration asks for L = {}, stride {}",
            data.index.window, data.index.stride, config.window, config.stride
        )));
    }
    let bundle = data.bundle()?;
    log::info!(
        "datasets: A {} B {} D {} E {} samples",
        bundle.a.len(),
        bundle.b.len(),
        bundle.d.len(),
        bundle.e.len()
    );
    let pool = pipeline::thread_pool(jobs)?;
    let trained = pipeline::train_members(
        &bundle,
        &config.architecture(),
        &config.training,
        &config.member_seeds(),
        &pool,
    )?;
    let members: Vec<_> = trained
        .into_iter()
        .map(|t| (t.model, t.history.last().map(|h| h.mean)))
        .collect();
    formats::write_ensemble(manifest, &members, config.window, config.stride)?;
    log::info!("wrote {} members to {}", members.len(), manifest.display());
    Ok(())
}

fn calibrate(
    config: &RunConfig,
    dataset: &Path,
    manifest: &Path,
    out: &Path,
    jobs: usize,
) -> Result<()> {
    let data = formats::read_dataset(dataset)?;
    let (_, ensemble) = formats::read_ensemble(manifest)?;
    check_normalization(&data, &ensemble)?;
    let bundle = data.bundle()?;
    let pool = pipeline::thread_pool(jobs)?;
    let samples: Vec<_> = bundle.b.samples.iter().collect();
    let predictions = pipeline::predict(&ensemble, &samples, &pool)?;
    let calibration =
        calibrate_threshold(&predictions, &bundle.b.labels(), &config.threshold_grid)?;
    let file = ThresholdFile::new(&calibration, ensemble.len(), samples.len());
    formats::write_threshold(out, &file)?;
    log::info!(
        "threshold {} (accepted accuracy {:.4} on {} calibration samples)",
        calibration.threshold,
        calibration.accuracy,
        samples.len()
    );
    Ok(())
}

fn check_normalization(
    data: &formats::LoadedDataset,
    ensemble: &ufc_core::ensemble::Ensemble,
) -> Result<()> {
    if *ensemble.normalization() != data.index.normalization {
        return Err(Error::Config(
            "the ensemble was trained on a dataset with different normalization statistics".into(),
        ));
    }
    Ok(())
}

/// `evaluate`, or `trace` when `flights` is given.
fn evaluate(
    config: &RunConfig,
    inputs: &EvalInputs,
    jobs: usize,
    flights: Option<&[u32]>,
) -> Result<()> {
    let paths = Paths::new(config);
    let data = formats::read_dataset(&paths.dataset(&inputs.dataset))?;
    let (manifest, ensemble) = formats::read_ensemble(&paths.ensemble(&inputs.ensemble))?;
    check_normalization(&data, &ensemble)?;
    let threshold = match inputs.threshold {
        Some(t) => t,
        None => formats::read_threshold(&paths.threshold(&inputs.threshold_file))?.threshold,
    };
    let domain = Domain::from(inputs.domain);
    let bundle = data.bundle()?;
    let ensemble = pipeline::ensemble_for_domain(&ensemble, &bundle, domain)?;
    let pool = pipeline::thread_pool(jobs)?;

    let selected: Vec<_> = match flights {
        Some(ids) if !ids.is_empty() => ids
            .iter()
            .map(|&id| {
                data.flight(id)
                    .ok_or_else(|| Error::Config(format!("dataset has no flight {id}")))
            })
            .collect::<Result<_>>()?,
        _ => data.logs(domain, FlightRole::Evaluation),
    };

    if flights.is_none() {
        let held_out = data.evaluation(domain);
        let samples: Vec<_> = held_out.samples.iter().collect();
        let predictions = pipeline::predict(&ensemble, &samples, &pool)?;
        let report = report_from_predictions(&predictions, &held_out.labels(), threshold)?;
        let file = ReportFile {
            format: formats::REPORT_FORMAT.into(),
            domain,
            members: ensemble.len(),
            report,
        };
        let stem = paths.root.join(format!("report_{}", domain_name(domain)));
        formats::write_report(&stem, &file)?;
        print!("{}", formats::report_table(&file));
    }

    for log in selected {
        let rows = pipeline::trace(&ensemble, log, manifest.window, threshold, &pool)?;
        let path = paths
            .root
            .join("traces")
            .join(format!("flight_{:04}.csv", log.id));
        formats::write_trace(&path, &rows)?;
        log::info!("wrote {} trace rows to {}", rows.len(), path.display());
    }
    Ok(())
}

fn sweep(
    config: &RunConfig,
    dataset: &Path,
    manifest: &Path,
    domain: Domain,
    jobs: usize,
) -> Result<()> {
    let data = formats::read_dataset(dataset)?;
    let (_, ensemble) = formats::read_ensemble(manifest)?;
    check_normalization(&data, &ensemble)?;
    let bundle = data.bundle()?;
    let ensemble = pipeline::ensemble_for_domain(&ensemble, &bundle, domain)?;
    let held_out = data.evaluation(domain);
    let samples: Vec<_> = held_out.samples.iter().collect();
    let pool = pipeline::thread_pool(jobs)?;
    let needed = config.sweep_members.iter().copied().max().unwrap_or(1);
    let pool_logits = pipeline::member_logits(
        &ensemble.truncated(needed.min(ensemble.len()))?,
        &samples,
        &pool,
    )?;
    let thresholds: Vec<f64> = std::iter::once(ACCEPT_ALL)
        .chain(
            config
                .sweep_thresholds
                .iter()
                .copied()
                .filter(|t| t.is_finite()),
        )
        .collect();
    let table = sweep_from_logits(
        &pool_logits,
        &held_out.labels(),
        &config.sweep_members,
        &thresholds,
    )?;
    let file = SweepFile {
        format: formats::SWEEP_FORMAT.into(),
        domain,
        table,
    };
    formats::write_sweep(&paths_sweep(config, domain), &file)?;
    print!("{}", formats::sweep_table(&file));
    Ok(())
}

fn paths_sweep(config: &RunConfig, domain: Domain) -> PathBuf {
    config
        .output_dir
        .join(format!("sweep_{}", domain_name(domain)))
}

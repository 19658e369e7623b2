//! Pipeline stages shared by the command line and the tests.
//!
//! Parallel work is split per flight or per member and gathered in input
//! order, so results do not depend on the number of threads.

use rayon::prelude::*;
use ufc_core::data::{DatasetBundle, Sample};
use ufc_core::ensemble::{combine_member_logits, Ensemble, EnsemblePrediction};
use ufc_core::nn::{train_member, Architecture, TrainConfig, TrainedMember};
use ufc_core::sim::{Domain, DomainPair, FlightLog, ScenarioConfig};
use ufc_core::ufc::{trace_from_predictions, trace_windows, TraceRow};
use ufc_core::NUM_CLASSES;

use crate::error::{Error, Result};

/// Thread pool with `jobs` workers; 0 uses every available core.
pub fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {jobs} worker threads: {e}")))
}

/// Flies every flight of the scenario.
pub fn simulate(scenario: &ScenarioConfig, pool: &rayon::ThreadPool) -> Result<DomainPair> {
    let specs = scenario.flight_specs()?;
    let logs: Vec<FlightLog> = pool.install(|| {
        specs
            .par_iter()
            .map(|spec| spec.fly())
            .collect::<ufc_core::Result<_>>()
    })?;
    let (source, target) = logs.into_iter().partition(|l| l.domain == Domain::Source);
    Ok(DomainPair { source, target })
}

/// One member per seed, in seed order. A failure names the member.
pub fn train_members(
    bundle: &DatasetBundle,
    architecture: &Architecture,
    training: &TrainConfig,
    seeds: &[u64],
    pool: &rayon::ThreadPool,
) -> Result<Vec<TrainedMember>> {
    pool.install(|| {
        seeds
            .par_iter()
            .enumerate()
            .map(|(k, &seed)| {
                log::info!("training member {k} (seed {seed})");
                let trained = train_member(bundle, architecture, training, seed).map_err(|e| match e {
                    ufc_core::Error::TrainingDiverged { step, reason } => ufc_core::Error::TrainingDiverged {
                        step,
                        reason: format!("member {k} (seed {seed}): {reason}"),
                    },
                    other => other,
                })?;
                if let Some(last) = trained.history.last() {
                    log::info!(
                        "member {k}: final loss {:.6} (classification {:.6}, domain adaptation {:.6})",
                        last.mean.total,
                        last.mean.classification,
                        last.mean.domain_adaptation
                    );
                }
                Ok(trained)
            })
            .collect()
    })
}

/// Logits laid out `[member][sample]`, members evaluated in parallel.
pub fn member_logits(
    ensemble: &Ensemble,
    samples: &[&Sample],
    pool: &rayon::ThreadPool,
) -> Result<Vec<Vec<[f64; NUM_CLASSES]>>> {
    let logits = pool.install(|| {
        ensemble
            .members()
            .par_iter()
            .map(|m| m.logits(samples))
            .collect::<ufc_core::Result<Vec<_>>>()
    })?;
    Ok(logits)
}

pub fn predict(
    ensemble: &Ensemble,
    samples: &[&Sample],
    pool: &rayon::ThreadPool,
) -> Result<Vec<EnsemblePrediction>> {
    Ok(combine_member_logits(&member_logits(
        ensemble, samples, pool,
    )?)?)
}

/// Per-step diagnosis of one flight, as [`ufc_core::ufc::trace_flight`].
pub fn trace(
    ensemble: &Ensemble,
    log: &FlightLog,
    window: usize,
    threshold: f64,
    pool: &rayon::ThreadPool,
) -> Result<Vec<TraceRow>> {
    let samples = trace_windows(ensemble, log, window)?;
    let refs: Vec<_> = samples.iter().collect();
    let predictions = predict(ensemble, &refs, pool)?;
    Ok(trace_from_predictions(
        log,
        window,
        &predictions,
        threshold,
    )?)
}

/// The ensemble as used on `domain`: target data is differenced against the
/// stored target all-healthy reference, source data against the source
/// all-healthy mean.
pub fn ensemble_for_domain(
    ensemble: &Ensemble,
    bundle: &DatasetBundle,
    domain: Domain,
) -> Result<Ensemble> {
    match domain {
        Domain::Target => Ok(ensemble.clone()),
        Domain::Source => {
            let healthy: Vec<_> = bundle.d.samples.iter().collect();
            Ok(ensemble.rebased_on(&healthy)?)
        }
    }
}

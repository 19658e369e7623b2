//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.
//!
//! The synthetic experiment uses the default run configuration: dataset
//! written to and read back from disk, members trained through the same
//! pipeline as the command line.

use std::time::{Duration, Instant};

use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ufc::core::data::{DatasetBundle, Sample};
use ufc::core::ensemble::{
    combine_member_logits, soft_vote, softmax, Ensemble, EnsemblePrediction,
};
use ufc::core::nn::{
    grad_check, Architecture, MemberModel, TrainConfig, TrainingBatch, DEFAULT_GRAD_CHECK_EPSILON,
};
use ufc::core::sim::{
    fly_mission, square_waypoints, wind_contribution, Airframe, Domain, FaultConfig, MissionConfig,
    ScenarioConfig, WindField, WindParams,
};
use ufc::core::ufc::{calibrate_threshold, report_from_predictions, ACCEPT_ALL};
use ufc::core::{Label, NUM_CLASSES};
use ufc::{formats, pipeline, RunConfig};

struct Outcome {
    pass: bool,
    detail: String,
    elapsed: Duration,
    budget: Duration,
}

fn check(pass: bool, detail: String, elapsed: Duration, budget: Duration) -> Outcome {
    Outcome {
        pass: pass && elapsed < budget,
        detail,
        elapsed,
        budget,
    }
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn entropy_and_voting() -> Outcome {
    let start = Instant::now();
    let mut ok = true;
    let mut worst_mean = 0.0f64;

    let uniform = soft_vote(&[[0.7; NUM_CLASSES]]).unwrap();
    let uniform_err = (uniform.entropy - 5f64.ln()).abs();
    ok &= uniform_err <= 1e-12;
    let one_hot = soft_vote(&[[1000.0, 0.0, 0.0, 0.0, 0.0]]).unwrap();
    ok &= one_hot.entropy == 0.0 && one_hot.probs == [1.0, 0.0, 0.0, 0.0, 0.0];

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200 {
        let n = rng.random_range(1..=12);
        let scale = rng.random_range(0.1..20.0);
        let mut members: Vec<[f64; NUM_CLASSES]> = (0..n)
            .map(|_| std::array::from_fn(|_| rng.random_range(-scale..scale)))
            .collect();
        let p = soft_vote(&members).unwrap();
        let probs: Vec<_> = members.iter().map(softmax).collect();
        for c in 0..NUM_CLASSES {
            let mean = probs.iter().map(|q| q[c]).sum::<f64>() / n as f64;
            worst_mean = worst_mean.max((mean - p.probs[c]).abs());
        }
        ok &= (p.probs.iter().sum::<f64>() - 1.0).abs() <= 1e-12;
        ok &= (0.0..=5f64.ln() + 1e-12).contains(&p.entropy);
        members.shuffle(&mut rng);
        let q = soft_vote(&members).unwrap();
        ok &= q.probs.map(f64::to_bits) == p.probs.map(f64::to_bits)
            && q.entropy.to_bits() == p.entropy.to_bits()
            && q.label == p.label;
    }
    ok &= worst_mean <= 1e-12;
    check(
        ok,
        format!("uniform H error {uniform_err:.1e}, one-hot H {}, max mean deviation {worst_mean:.1e}, 200 permuted fixtures", one_hot.entropy),
        start.elapsed(),
        secs(1),
    )
}

fn gradient_check(bundle: &DatasetBundle) -> Outcome {
    let start = Instant::now();
    let arch = Architecture {
        window: 16,
        conv_channels: [4, 8],
        kernel_size: 5,
        feature_dim: 16,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut model = MemberModel::init(arch.clone(), TrainConfig::default(), 7, &mut rng).unwrap();
    model.normalization = bundle.normalization().clone();
    fn pick(samples: &[Sample], step: usize) -> Vec<&Sample> {
        samples.iter().step_by(step.max(1)).take(8).collect()
    }
    let batch = TrainingBatch {
        a: pick(&bundle.a.samples, bundle.a.len() / 8),
        b: pick(&bundle.b.samples, bundle.b.len() / 8),
        d: pick(&bundle.d.samples, bundle.d.len() / 8),
        e: pick(&bundle.e.samples, bundle.e.len() / 8),
    };
    let lambda = TrainConfig::default().lambda;
    let report = grad_check(&model, &batch, lambda, DEFAULT_GRAD_CHECK_EPSILON, 200, 3).unwrap();
    let params = arch.parameter_count();
    check(
        report.max_relative_error < 1e-5 && report.checked >= 100 && params <= 5000,
        format!(
            "max relative error {:.2e} over {} of {params} parameters (worst {}[{}])",
            report.max_relative_error, report.checked, report.worst_parameter, report.worst_offset
        ),
        start.elapsed(),
        secs(30),
    )
}

fn brute_force_threshold(preds: &[EnsemblePrediction], grid: &[f64]) -> f64 {
    let score = |t: f64| {
        let accepted: Vec<_> = preds.iter().filter(|p| p.entropy < t).collect();
        let correct = accepted.iter().filter(|p| p.label.is_healthy()).count();
        if accepted.is_empty() {
            (1, 1)
        } else {
            (correct, accepted.len())
        }
    };
    let cmp = |(a, b): (usize, usize), (c, d): (usize, usize)| (a * d).cmp(&(c * b));
    let best = grid
        .iter()
        .map(|&t| score(t))
        .max_by(|x, y| cmp(*x, *y))
        .unwrap();
    grid.iter()
        .copied()
        .filter(|&t| cmp(score(t), best).is_eq())
        .fold(f64::NEG_INFINITY, f64::max)
}

fn calibration_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut matches = 0;
    let mut empty_cases = 0;
    for fixture in 0..100 {
        let n = rng.random_range(1..60);
        let scale = rng.random_range(0.5..8.0);
        let preds: Vec<_> = (0..n)
            .map(|_| {
                let z: [f64; NUM_CLASSES] =
                    std::array::from_fn(|_| rng.random_range(-scale..scale));
                soft_vote(&[z]).unwrap()
            })
            .collect();
        let min_h = preds
            .iter()
            .map(|p| p.entropy)
            .fold(f64::INFINITY, f64::min);
        let mut grid: Vec<f64> = (0..rng.random_range(1..15))
            .map(|_| rng.random_range(0.0..1.7))
            .collect();
        // Every fourth fixture also offers thresholds that accept nothing.
        if fixture % 4 == 0 {
            grid.push(min_h * 0.5);
            grid.push(min_h);
        }
        empty_cases += grid.iter().any(|&t| t <= min_h) as usize;
        let labels = vec![Label::HEALTHY; n];
        let got = calibrate_threshold(&preds, &labels, &grid)
            .unwrap()
            .threshold;
        matches += (got == brute_force_threshold(&preds, &grid)) as usize;
    }
    check(
        matches == 100 && empty_cases > 0,
        format!("{matches}/100 fixtures agree, {empty_cases} include empty-acceptance thresholds"),
        start.elapsed(),
        secs(10),
    )
}

fn monotonicity(preds: &[EnsemblePrediction], labels: &[Label]) -> Outcome {
    let start = Instant::now();
    let mut thresholds: Vec<f64> = preds.iter().map(|p| p.entropy).collect();
    thresholds.extend(ufc::core::ufc::default_threshold_grid());
    thresholds.extend([0.0, ACCEPT_ALL]);
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let mut ok = true;
    let mut previous = 0;
    for &t in &thresholds {
        let r = report_from_predictions(preds, labels, t).unwrap();
        ok &= r.accepted >= previous;
        previous = r.accepted;
        ok &= r.accepted_matrix.plus(&r.rejected_matrix) == r.unfiltered_matrix;
        ok &= r.class_accepted.iter().sum::<u64>() == r.accepted;
    }
    check(
        ok,
        format!(
            "{} thresholds over {} stored target predictions",
            thresholds.len(),
            preds.len()
        ),
        start.elapsed(),
        secs(5),
    )
}

fn simulator_sanity() -> Outcome {
    let start = Instant::now();
    let hover = fly_mission(
        &MissionConfig::default(),
        &[[0.0, 0.0, 2.0]],
        &WindField::calm(),
        &FaultConfig::healthy(),
        30.0,
        0.5,
        1,
    )
    .unwrap();
    let max_acc = hover
        .rows
        .iter()
        .map(|r| Vector3::from(r.angular_acceleration).norm())
        .fold(0.0, f64::max);

    let airframe = Airframe::default();
    let calm = WindField::calm();
    let mut zero_force = true;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for k in 0..1000 {
        let v = Vector3::from_fn(|_, _| rng.random_range(-15.0..15.0));
        let f = wind_contribution(&airframe, &v, &calm.velocity_at(k as f64 * 0.37));
        zero_force &= f == Vector3::zeros();
    }

    let scenario = ScenarioConfig::default();
    let mut noisy = scenario.mission.clone();
    noisy.sensors.gyro_noise_std = 0.01;
    let wind = WindField::new(WindParams {
        mean: [6.0, -2.0, 0.0],
        gust_amplitude: 3.0,
        gust_period: 4.0,
        seed: 99,
    })
    .unwrap();
    let fault = FaultConfig::new(Label::new(4).unwrap(), 0.3).unwrap();
    let fly = || {
        fly_mission(
            &noisy,
            &square_waypoints(4.0, 2.0),
            &wind,
            &fault,
            60.0,
            0.5,
            42,
        )
        .unwrap()
    };
    let bits = |l: &ufc::core::sim::FlightLog| {
        l.rows
            .iter()
            .flat_map(|r| r.signals())
            .chain(l.positions.iter().flatten().copied())
            .map(f64::to_bits)
            .collect::<Vec<_>>()
    };
    let identical = bits(&fly()) == bits(&fly())
        && scenario.flight_specs().unwrap() == scenario.flight_specs().unwrap();
    check(
        max_acc < 1e-6 && zero_force && identical,
        format!("hover max |angular acceleration| {max_acc:.1e} over 30 s, zero-wind force exactly zero: {zero_force}, bit-identical reruns: {identical}"),
        start.elapsed(),
        secs(10),
    )
}

fn accuracy(preds: &[EnsemblePrediction], labels: &[Label]) -> f64 {
    report_from_predictions(preds, labels, ACCEPT_ALL)
        .unwrap()
        .unfiltered_accuracy
}

fn std_dev(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

fn main() {
    let total = Instant::now();
    let config = RunConfig::default();
    let pool = pipeline::thread_pool(0).unwrap();
    let dir = tempfile::tempdir().unwrap();

    let sim_start = Instant::now();
    let pair = pipeline::simulate(&config.scenario, &pool).unwrap();
    let logs: Vec<_> = pair.source.into_iter().chain(pair.target).collect();
    formats::write_dataset(
        dir.path(),
        &config.scenario,
        &logs,
        config.window,
        config.stride,
    )
    .unwrap();
    let data = formats::read_dataset(dir.path()).unwrap();
    let bundle = data.bundle().unwrap();
    let source_eval = data.evaluation(Domain::Source);
    let target_eval = data.evaluation(Domain::Target);
    let sim_time = sim_start.elapsed();
    let counts = bundle.a.class_counts();
    println!(
        "dataset: A {} ({:?} per class), B {}, D {}, E {}; held-out source {}, target {}; {:.1} s",
        bundle.a.len(),
        counts,
        bundle.b.len(),
        bundle.d.len(),
        bundle.e.len(),
        source_eval.len(),
        target_eval.len(),
        sim_time.as_secs_f64()
    );

    let arch = config.architecture();
    let source_samples: Vec<_> = source_eval.samples.iter().collect();
    let target_samples: Vec<_> = target_eval.samples.iter().collect();
    let b_samples: Vec<_> = bundle.b.samples.iter().collect();
    let d_samples: Vec<_> = bundle.d.samples.iter().collect();
    let source_labels = source_eval.labels();
    let target_labels = target_eval.labels();

    // Five ensembles of ten with disjoint seeds. The first member is
    // trained on its own so its cost can be timed.
    let ensembles = 5;
    let n = config.members;
    let mut pools: Vec<Vec<MemberModel>> = Vec::new();
    let mut first_member_time = Duration::ZERO;
    let mut training_time = Duration::ZERO;
    for e in 0..ensembles {
        let seeds: Vec<u64> = (0..n as u64)
            .map(|k| config.training_seed + e as u64 * n as u64 + k)
            .collect();
        let t = Instant::now();
        let mut members =
            pipeline::train_members(&bundle, &arch, &config.training, &seeds[..1], &pool).unwrap();
        if e == 0 {
            first_member_time = t.elapsed();
        }
        members.extend(
            pipeline::train_members(&bundle, &arch, &config.training, &seeds[1..], &pool).unwrap(),
        );
        training_time += t.elapsed();
        println!(
            "ensemble {e}: seeds {}..={} trained in {:.1} s",
            seeds[0],
            seeds[n - 1],
            t.elapsed().as_secs_f64()
        );
        pools.push(members.into_iter().map(|m| m.model).collect());
    }

    // Criterion 6: the first member on held-out source flights.
    let eval_start = Instant::now();
    let single = Ensemble::new(vec![pools[0][0].clone()])
        .unwrap()
        .rebased_on(&d_samples)
        .unwrap();
    let single_source = accuracy(
        &pipeline::predict(&single, &source_samples, &pool).unwrap(),
        &source_labels,
    );
    let per_class = source_eval.class_counts();
    let c6 =
        check(
            single_source >= 0.95
                && counts.iter().all(|c| *c >= 500)
                && config.window == 15
                && config.training.epochs <= 10,
            format!(
            "held-out source accuracy {:.3} after {} epochs ({} held-out samples, {:?} per class)",
            single_source, config.training.epochs, source_eval.len(), per_class
        ),
            first_member_time + eval_start.elapsed(),
            secs(300),
        );

    // Criterion 7: the first ensemble, calibrated on B.
    let exp_start = Instant::now();
    let ensemble = Ensemble::new(pools[0].clone()).unwrap();
    let source_ensemble = ensemble.rebased_on(&d_samples).unwrap();
    let source_acc = accuracy(
        &pipeline::predict(&source_ensemble, &source_samples, &pool).unwrap(),
        &source_labels,
    );
    let calibration_preds = pipeline::predict(&ensemble, &b_samples, &pool).unwrap();
    let calibration = calibrate_threshold(
        &calibration_preds,
        &bundle.b.labels(),
        &config.threshold_grid,
    )
    .unwrap();
    let target_preds = pipeline::predict(&ensemble, &target_samples, &pool).unwrap();
    let report =
        report_from_predictions(&target_preds, &target_labels, calibration.threshold).unwrap();
    let usage = report.mean_fault_usage.unwrap_or(0.0);
    let gain = report.accuracy - report.unfiltered_accuracy;
    let c7_time = sim_time + training_time + exp_start.elapsed();
    println!(
        "target confusion (unfiltered): {:?}",
        report.unfiltered_matrix.counts
    );
    println!(
        "target confusion (accepted):   {:?}",
        report.accepted_matrix.counts
    );
    println!("target data usage per class:   {:?}", report.data_usage);
    let c7_pass = report.unfiltered_accuracy < source_acc && gain >= 0.05 && usage > 0.10;
    let c7_detail = format!(
        "N={n}: source {:.3}, target unfiltered {:.3}, calibrated T {:.2}, accepted {:.3} ({:+.1} pp), mean fault usage {:.3}",
        source_acc,
        report.unfiltered_accuracy,
        calibration.threshold,
        report.accuracy,
        gain * 100.0,
        usage
    );

    // Criterion 8: spread of target accuracy, ensembles against members.
    let logits: Vec<Vec<Vec<[f64; NUM_CLASSES]>>> = pools
        .iter()
        .map(|members| {
            let e = Ensemble::new(members.clone()).unwrap();
            pipeline::member_logits(&e, &target_samples, &pool).unwrap()
        })
        .collect();
    let ensemble_acc: Vec<f64> = logits
        .iter()
        .map(|per_member| accuracy(&combine_member_logits(per_member).unwrap(), &target_labels))
        .collect();
    let member_acc: Vec<f64> = logits
        .iter()
        .flatten()
        .map(|one| {
            accuracy(
                &combine_member_logits(std::slice::from_ref(one)).unwrap(),
                &target_labels,
            )
        })
        .collect();
    let first_members: Vec<f64> = (0..ensembles).map(|e| member_acc[e * n]).collect();
    let (ens_sd, member_sd, first_sd) = (
        std_dev(&ensemble_acc),
        std_dev(&member_acc),
        std_dev(&first_members),
    );
    println!(
        "ensemble target accuracies: {:?}",
        ensemble_acc
            .iter()
            .map(|a| format!("{a:.3}"))
            .collect::<Vec<_>>()
    );
    println!(
        "member target accuracies:   {:?}",
        member_acc
            .iter()
            .map(|a| format!("{a:.3}"))
            .collect::<Vec<_>>()
    );
    let c8_time = sim_time + training_time + exp_start.elapsed();
    let c8 = check(
        ens_sd <= member_sd,
        format!(
            "std of N={n} ensemble accuracy over {ensembles} seeds {ens_sd:.4} <= std over all {} single members {member_sd:.4} (first member of each seed: {first_sd:.4})",
            member_acc.len()
        ),
        c8_time,
        secs(1800),
    );
    let c7 = check(c7_pass, c7_detail, c7_time, secs(1800));

    let stored = dir.path().join("target_predictions.json");
    std::fs::write(&stored, serde_json::to_string(&target_preds).unwrap()).unwrap();
    let stored_preds: Vec<EnsemblePrediction> =
        serde_json::from_str(&std::fs::read_to_string(&stored).unwrap()).unwrap();
    assert_eq!(stored_preds, target_preds);

    let results = [
        ("entropy and soft voting", entropy_and_voting()),
        ("gradient check", gradient_check(&bundle)),
        ("calibration oracle", calibration_oracle()),
        (
            "acceptance monotonicity",
            monotonicity(&stored_preds, &target_labels),
        ),
        ("simulator sanity", simulator_sanity()),
        ("in-domain learnability", c6),
        ("sim-to-pseudo-real trend", c7),
        ("ensemble variance", c8),
    ];
    println!();
    for (k, (name, r)) in results.iter().enumerate() {
        println!(
            "criterion {}: {} {name}: {} [{:.2} s of {} s]",
            k + 1,
            if r.pass { "PASS" } else { "FAIL" },
            r.detail,
            r.elapsed.as_secs_f64(),
            r.budget.as_secs()
        );
    }
    let failed = results.iter().filter(|(_, r)| !r.pass).count();
    println!(
        "{} of {} criteria passed in {:.1} s",
        results.len() - failed,
        results.len(),
        total.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ufc_core::data::{
    Dataset, DatasetBundle, DatasetRole, Normalization, Sample, SampleOrigin, INPUT_ROWS,
};
use ufc_core::ensemble::softmax;
use ufc_core::nn::{
    loss, median_bandwidth, mmd_squared, train_member, Architecture, MemberModel, TrainConfig,
    TrainingBatch,
};
use ufc_core::sim::Domain;
use ufc_core::{Label, NUM_CLASSES};

const COLUMNS: usize = 16;

fn arch() -> Architecture {
    Architecture {
        window: COLUMNS,
        conv_channels: [8, 16],
        kernel_size: 5,
        feature_dim: 32,
    }
}

fn sample(label: Label, domain: Domain, shift: f64, rng: &mut impl Rng) -> Sample {
    let bump = label.index() as f64 * 3.0;
    Sample {
        matrix: (0..INPUT_ROWS * COLUMNS)
            .map(|k| {
                rng.random_range(-1.0..1.0) + shift + if k / COLUMNS == 3 { bump } else { 0.0 }
            })
            .collect(),
        columns: COLUMNS,
        label,
        domain,
        origin: SampleOrigin {
            flight: 0,
            end_time: 0.0,
        },
    }
}

fn samples(
    labels: &[Label],
    per_label: usize,
    domain: Domain,
    shift: f64,
    seed: u64,
) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..per_label)
        .flat_map(|_| labels.to_vec())
        .map(|l| sample(l, domain, shift, &mut rng))
        .collect()
}

fn dataset(role: DatasetRole, samples: Vec<Sample>) -> Dataset {
    Dataset {
        role,
        samples,
        normalization: Normalization::identity(),
    }
}

/// Two linearly separable classes, healthy and label 2, with the target
/// all-healthy data slightly offset.
fn toy_bundle() -> DatasetBundle {
    let labels = [Label::HEALTHY, Label::new(2).unwrap()];
    let a = samples(&labels, 200, Domain::Source, 0.0, 1);
    let d: Vec<_> = a.iter().filter(|s| s.label.is_healthy()).cloned().collect();
    let b = samples(&[Label::HEALTHY], 100, Domain::Target, 0.2, 2);
    DatasetBundle {
        a: dataset(DatasetRole::A, a),
        b: dataset(DatasetRole::B, b.clone()),
        d: dataset(DatasetRole::D, d),
        e: dataset(DatasetRole::E, b),
    }
}

fn model(seed: u64) -> MemberModel {
    MemberModel::init(
        arch(),
        TrainConfig::default(),
        seed,
        &mut ChaCha8Rng::seed_from_u64(seed),
    )
    .unwrap()
}

fn batch(bundle: &DatasetBundle, m: usize) -> TrainingBatch<'_> {
    fn take(d: &Dataset, m: usize) -> Vec<&Sample> {
        d.samples.iter().take(m).collect()
    }
    TrainingBatch {
        a: take(&bundle.a, m),
        b: take(&bundle.b, m),
        d: take(&bundle.d, m),
        e: take(&bundle.e, m),
    }
}

#[test]
fn forward_shapes_and_centering() {
    let bundle = toy_bundle();
    let mut m = model(3);
    let inputs: Vec<_> = bundle.a.samples.iter().take(37).collect();
    let out = m.forward(&inputs).unwrap();
    assert_eq!(out.logits.shape(), &[37, NUM_CLASSES]);
    assert_eq!(out.features.shape(), &[37, 32]);
    assert_eq!(m.logits(&inputs).unwrap().len(), 37);
    assert_eq!(m.reference.len(), arch().feature_dim);

    m.set_reference_from(&inputs).unwrap();
    let features = m.forward(&inputs).unwrap().features;
    for j in 0..arch().feature_dim {
        let mean_diff = (0..37)
            .map(|i| features.row(i)[j] - m.reference[j])
            .sum::<f64>()
            / 37.0;
        assert!(mean_diff.abs() < 1e-8, "{mean_diff}");
    }
}

#[test]
fn shape_errors_name_the_layer() {
    let mut bad = toy_bundle().a.samples[0].clone();
    bad.columns = 12;
    bad.matrix.truncate(INPUT_ROWS * 12);
    let err = model(1).forward(&[&bad]).unwrap_err().to_string();
    assert!(err.contains("input") && err.contains("16"), "{err}");
}

#[test]
fn seeds_give_different_members() {
    let bundle = toy_bundle();
    let inputs: Vec<_> = bundle.a.samples.iter().take(8).collect();
    let (a, b) = (model(1), model(2));
    let la = a.logits(&inputs).unwrap();
    let lb = b.logits(&inputs).unwrap();
    let max_diff = la
        .iter()
        .flatten()
        .zip(lb.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    assert!(max_diff > 0.0);
    // Biases start at zero; every weight tensor differs.
    for ((name, ta), (_, tb)) in a.parameters.named().iter().zip(b.parameters.named()) {
        if ta.data().iter().any(|v| *v != 0.0) {
            assert_ne!(ta.data(), tb.data(), "{name}");
        }
    }
    // Inference is deterministic.
    assert_eq!(a.logits(&inputs).unwrap(), la);
}

#[test]
fn loss_components_add_up() {
    let bundle = toy_bundle();
    let m = model(5);
    let b = batch(&bundle, 32);
    let zero = loss(&m, &b, 0.0).unwrap();
    assert_eq!(zero.total, zero.classification);
    for lambda in [0.05, 1.0, 7.5] {
        let parts = loss(&m, &b, lambda).unwrap();
        assert_eq!(parts.lambda, lambda);
        assert!(parts.classification >= 0.0 && parts.domain_adaptation >= 0.0);
        assert!(
            (parts.total - (parts.classification + lambda * parts.domain_adaptation)).abs()
                <= 1e-12
        );
        assert_eq!(parts.classification, zero.classification);
    }
    assert_eq!(TrainConfig::default().lambda, 0.05);
}

/// Biased squared MMD with a Gaussian kernel whose bandwidth is the median
/// squared distance over distinct pairs of the pooled rows.
fn mmd_oracle(x: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
    let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>();
    let pooled: Vec<&Vec<f64>> = x.iter().chain(y).collect();
    let mut d: Vec<f64> = Vec::new();
    for i in 0..pooled.len() {
        for j in i + 1..pooled.len() {
            d.push(sq(pooled[i], pooled[j]));
        }
    }
    d.sort_by(f64::total_cmp);
    let h = if d.len() % 2 == 1 {
        d[d.len() / 2]
    } else {
        0.5 * (d[d.len() / 2 - 1] + d[d.len() / 2])
    };
    let k = |a: &[f64], b: &[f64]| (-sq(a, b) / h).exp();
    let mean = |p: &[Vec<f64>], q: &[Vec<f64>]| {
        p.iter()
            .flat_map(|a| q.iter().map(move |b| k(a, b)))
            .sum::<f64>()
            / (p.len() * q.len()) as f64
    };
    mean(x, x) + mean(y, y) - 2.0 * mean(x, y)
}

fn gaussian_cloud(n: usize, dim: usize, offset: f64, seed: u64) -> Vec<Vec<f64>> {
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            (0..dim)
                .map(|_| {
                    let v: f64 = StandardNormal.sample(&mut rng);
                    offset + v
                })
                .collect()
        })
        .collect()
}

#[test]
fn mmd_matches_oracle_on_gaussian_clouds() {
    let flat = |c: &[Vec<f64>]| c.concat();
    let dim = 4;
    let x = gaussian_cloud(200, dim, 0.0, 1);
    let same = gaussian_cloud(200, dim, 0.0, 2);
    let shifted = gaussian_cloud(200, dim, 1.5, 3);

    let near = mmd_squared(&flat(&x), &flat(&same), dim);
    let far = mmd_squared(&flat(&x), &flat(&shifted), dim);
    assert!((near - mmd_oracle(&x, &same)).abs() < 1e-12);
    assert!((far - mmd_oracle(&x, &shifted)).abs() < 1e-12);
    assert!((0.0..0.02).contains(&near), "{near}");
    assert!(far > 20.0 * near, "{near} vs {far}");

    let small = gaussian_cloud(10, dim, 0.0, 4);
    let small_same = gaussian_cloud(10, dim, 0.0, 5);
    assert!(mmd_squared(&flat(&small), &flat(&small_same), dim) > near);
    assert!(median_bandwidth(&flat(&x), &flat(&same), dim) > 0.0);
}

/// Plain gradient-descent logistic regression on the flattened inputs.
fn logistic_regression_accuracy(samples: &[Sample]) -> f64 {
    let dim = samples[0].matrix.len();
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let target = |s: &Sample| if s.label.is_healthy() { 0.0 } else { 1.0 };
    for _ in 0..300 {
        let mut gw = vec![0.0; dim];
        let mut gb = 0.0;
        for s in samples {
            let z: f64 = s.matrix.iter().zip(&w).map(|(x, w)| x * w).sum::<f64>() + b;
            let err = 1.0 / (1.0 + (-z).exp()) - target(s);
            gw.iter_mut()
                .zip(&s.matrix)
                .for_each(|(g, x)| *g += err * x);
            gb += err;
        }
        let n = samples.len() as f64;
        w.iter_mut().zip(&gw).for_each(|(w, g)| *w -= 0.05 * g / n);
        b -= 0.05 * gb / n;
    }
    let correct = samples
        .iter()
        .filter(|s| {
            let z: f64 = s.matrix.iter().zip(&w).map(|(x, w)| x * w).sum::<f64>() + b;
            (z > 0.0) == (target(s) == 1.0)
        })
        .count();
    correct as f64 / samples.len() as f64
}

fn toy_training() -> TrainConfig {
    TrainConfig {
        learning_rate: 1e-2,
        batch_size: 16,
        epochs: 1,
        dropout: 0.1,
        ..TrainConfig::default()
    }
}

#[test]
fn one_epoch_learns_a_separable_toy_set() {
    let bundle = toy_bundle();
    assert_eq!(logistic_regression_accuracy(&bundle.a.samples), 1.0);

    let trained = train_member(&bundle, &arch(), &toy_training(), 11).unwrap();
    assert_eq!(trained.history.len(), 1);
    assert_eq!(trained.history[0].steps, 25);
    let inputs: Vec<_> = bundle.a.samples.iter().collect();
    let logits = trained.model.logits(&inputs).unwrap();
    let correct = logits
        .iter()
        .zip(&inputs)
        .filter(|(z, s)| {
            let best = (0..NUM_CLASSES)
                .max_by(|&i, &j| z[i].total_cmp(&z[j]))
                .unwrap();
            best == s.label.index()
        })
        .count();
    let accuracy = correct as f64 / inputs.len() as f64;
    assert!(accuracy > 0.9, "{accuracy}");

    // The stored reference is the mean feature of the target healthy set.
    let healthy: Vec<_> = bundle.b.samples.iter().collect();
    assert_eq!(
        trained.model.reference,
        trained.model.mean_features(&healthy).unwrap()
    );
}

#[test]
fn training_is_reproducible_and_seed_dependent() {
    let bundle = toy_bundle();
    let run = |seed, dropout| {
        let config = TrainConfig {
            dropout,
            ..toy_training()
        };
        train_member(&bundle, &arch(), &config, seed).unwrap().model
    };
    let a = run(4, 0.1);
    let b = run(4, 0.1);
    let bits = |m: &MemberModel| {
        m.parameters
            .to_flat()
            .iter()
            .map(|v| v.to_bits())
            .collect::<Vec<_>>()
    };
    assert_eq!(bits(&a), bits(&b));
    assert_eq!(a.reference, b.reference);
    assert_ne!(bits(&a), bits(&run(5, 0.1)));
    // Dropout acts during training only.
    assert_ne!(bits(&a), bits(&run(4, 0.0)));
    let inputs: Vec<_> = bundle.b.samples.iter().take(20).collect();
    assert_eq!(a.logits(&inputs).unwrap(), a.logits(&inputs).unwrap());
}

#[test]
fn divergence_is_reported_with_its_step() {
    let bundle = toy_bundle();
    let config = TrainConfig {
        learning_rate: 1e300,
        ..toy_training()
    };
    let err = train_member(&bundle, &arch(), &config, 1).unwrap_err();
    assert!(err.is_numerical(), "{err}");
    assert!(matches!(err, ufc_core::Error::TrainingDiverged { .. }));
}

proptest! {
    // Beyond a spread of about 36 the largest probability rounds to 1.
    #[test]
    fn softmax_is_a_distribution(z in prop::array::uniform5(-15.0f64..15.0)) {
        let p = softmax(&z);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(p.iter().all(|v| *v > 0.0 && *v < 1.0));
    }
}

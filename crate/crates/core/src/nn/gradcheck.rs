use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loss::{loss, record_loss, TrainingBatch};
use super::tape::Tape;
use super::MemberModel;
use crate::Result;

/// Outcome of comparing analytic and finite-difference gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub checked: usize,
    pub worst_parameter: &'static str,
    pub worst_offset: usize,
    /// Analytic and finite-difference values at the worst parameter.
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    /// Denominator floor applied to tiny gradients.
    pub gradient_floor: f64,
    /// Parameters whose gradient magnitude fell below the floor.
    pub floored: usize,
}

/// Loss and its gradient with respect to every parameter, flattened in
/// [`Parameters::named`](super::Parameters::named) order. Dropout is off.
pub fn analytic_gradient(
    model: &MemberModel,
    batch: &TrainingBatch<'_>,
    lambda: f64,
) -> Result<(f64, Vec<f64>)> {
    let mut tape = Tape::new();
    let graph = record_loss::<ChaCha8Rng>(&mut tape, model, batch, lambda, None)?;
    let grads = tape.backward(graph.total);
    let mut flat = Vec::with_capacity(model.parameters.len());
    for (var, (_, tensor)) in graph.params.vars.iter().zip(model.parameters.named()) {
        match grads.get(*var) {
            Some(g) => flat.extend_from_slice(g),
            None => flat.resize(flat.len() + tensor.len(), 0.0),
        }
    }
    Ok((tape.value(graph.total).data()[0], flat))
}

/// `|a - n| / max(|a|, |n|, floor)`, zero when all three vanish.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(floor);
    if scale == 0.0 {
        0.0
    } else {
        (analytic - numeric).abs() / scale
    }
}

/// Gradient magnitude below which rounding in a central difference with
/// step `epsilon` exceeds one part in a million.
///
/// A central difference of a loss of size `L` carries an absolute rounding
/// error of about `machine_epsilon * L / epsilon`; gradients much smaller
/// than that cannot be resolved, so relative errors are measured against at
/// least `1e6` times this resolution.
pub fn gradient_floor(loss: f64, epsilon: f64) -> f64 {
    1e6 * f64::EPSILON * loss.abs().max(1.0) / epsilon
}

/// Compares `analytic` against central differences of the loss at the
/// flat parameter positions in `indices`.
pub fn compare_with_finite_differences(
    model: &MemberModel,
    batch: &TrainingBatch<'_>,
    lambda: f64,
    analytic: &[f64],
    epsilon: f64,
    indices: &[usize],
) -> Result<GradCheckReport> {
    let base = model.parameters.to_flat();
    let floor = gradient_floor(loss(model, batch, lambda)?.total, epsilon);
    let mut probe = model.clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        checked: 0,
        worst_parameter: "",
        worst_offset: 0,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
        gradient_floor: floor,
        floored: 0,
    };
    for &i in indices {
        let mut shifted = base.clone();
        shifted[i] = base[i] + epsilon;
        probe.parameters.set_flat(&shifted);
        let plus = loss(&probe, batch, lambda)?.total;
        shifted[i] = base[i] - epsilon;
        probe.parameters.set_flat(&shifted);
        let minus = loss(&probe, batch, lambda)?.total;
        let numeric = (plus - minus) / (2.0 * epsilon);
        let err = relative_error(analytic[i], numeric, floor);
        if analytic[i].abs().max(numeric.abs()) < floor {
            report.floored += 1;
        }
        if err > report.max_relative_error || report.checked == 0 {
            let (name, offset) = model.parameters.locate(i);
            report.max_relative_error = err;
            report.worst_parameter = name;
            report.worst_offset = offset;
            report.worst_analytic = analytic[i];
            report.worst_numeric = numeric;
        }
        report.checked += 1;
    }
    Ok(report)
}

/// Checks the gradient of the combined objective at `count` randomly chosen
/// parameters (all of them if `count` exceeds the parameter count).
pub fn grad_check(
    model: &MemberModel,
    batch: &TrainingBatch<'_>,
    lambda: f64,
    epsilon: f64,
    count: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    let (_, analytic) = analytic_gradient(model, batch, lambda)?;
    let n = analytic.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices = rand::seq::index::sample(&mut rng, n, count.min(n)).into_vec();
    indices.sort_unstable();
    compare_with_finite_differences(model, batch, lambda, &analytic, epsilon, &indices)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::data::{Sample, SampleOrigin, INPUT_ROWS};
    use crate::nn::{Architecture, TrainConfig};
    use crate::sim::Domain;
    use crate::Label;
    use rand::Rng;

    pub(crate) fn small_architecture() -> Architecture {
        Architecture {
            window: 16,
            conv_channels: [4, 8],
            kernel_size: 5,
            feature_dim: 16,
        }
    }

    pub(crate) fn random_samples(
        count: usize,
        healthy_only: bool,
        shift: f64,
        rng: &mut impl Rng,
    ) -> Vec<Sample> {
        (0..count)
            .map(|i| {
                let label = if healthy_only {
                    Label::HEALTHY
                } else {
                    Label::from_index(i % 5).unwrap()
                };
                let bump = label.index() as f64 * 0.5;
                Sample {
                    matrix: (0..INPUT_ROWS * 16)
                        .map(|k| {
                            rng.random_range(-1.0..1.0)
                                + shift
                                + if k / 16 == 2 + label.index() {
                                    bump
                                } else {
                                    0.0
                                }
                        })
                        .collect(),
                    columns: 16,
                    label,
                    domain: Domain::Source,
                    origin: SampleOrigin {
                        flight: i as u32,
                        end_time: 0.0,
                    },
                }
            })
            .collect()
    }

    struct Fixture {
        model: MemberModel,
        a: Vec<Sample>,
        d: Vec<Sample>,
        e: Vec<Sample>,
    }

    fn fixture(seed: u64) -> Fixture {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut model =
            MemberModel::init(small_architecture(), TrainConfig::default(), seed, &mut rng)
                .unwrap();
        let a = random_samples(10, false, 0.0, &mut rng);
        let d = random_samples(6, true, 0.0, &mut rng);
        let e = random_samples(6, true, 0.4, &mut rng);
        let refs: Vec<_> = d.iter().collect();
        model.set_reference_from(&refs).unwrap();
        Fixture { model, a, d, e }
    }

    fn batch(f: &Fixture) -> TrainingBatch<'_> {
        TrainingBatch {
            a: f.a.iter().collect(),
            b: f.e.iter().collect(),
            d: f.d.iter().collect(),
            e: f.e.iter().collect(),
        }
    }

    #[test]
    fn gradients_match_central_differences() {
        let f = fixture(11);
        assert!(f.model.parameters.len() <= 5000);
        let report = grad_check(&f.model, &batch(&f), 0.05, 1e-5, usize::MAX, 3).unwrap();
        assert_eq!(report.checked, f.model.parameters.len());
        assert!(report.max_relative_error < 1e-5, "{report:?}");
        assert!(report.checked - report.floored >= 100, "{report:?}");
    }

    #[test]
    fn domain_term_alone_matches_central_differences() {
        let f = fixture(5);
        let report = grad_check(&f.model, &batch(&f), 1e3, 1e-5, usize::MAX, 4).unwrap();
        assert!(report.max_relative_error < 1e-5, "{report:?}");
    }

    #[test]
    fn corrupted_gradient_is_detected() {
        let f = fixture(11);
        let b = batch(&f);
        let (_, mut analytic) = analytic_gradient(&f.model, &b, 0.05).unwrap();
        let n = analytic.len();
        let indices: Vec<usize> = (0..n).step_by(7).collect();
        for &i in &indices {
            analytic[i] = analytic[i] * 1.5 + 1e-3;
        }
        let report =
            compare_with_finite_differences(&f.model, &b, 0.05, &analytic, 1e-5, &indices).unwrap();
        assert!(report.max_relative_error > 1e-2, "{report:?}");
    }

    #[test]
    fn relative_error_edge_cases() {
        assert_eq!(relative_error(0.0, 0.0, 0.0), 0.0);
        assert_eq!(relative_error(1.0, -1.0, 0.0), 2.0);
        assert!((relative_error(1.0, 1.0 + 1e-9, 1e-6) - 1e-9).abs() < 1e-15);
        assert_eq!(relative_error(1e-12, 0.0, 1e-6), 1e-6);
        // loss 1.6, step 1e-5
        assert!((gradient_floor(1.6, 1e-5) - 3.5527e-5).abs() < 1e-8);
    }
}

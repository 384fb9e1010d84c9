//! Seeded synthetic markets: balanced scenario designs, ground-truth choice
//! data, and the recovery harness the estimators are validated against.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::design::Interval;
use crate::error::{Error, Result};
use crate::estimate::{
    fit_latent_class, fit_mixed_logit, fit_mnl, FitConfig, LatentClassConfig, MixedLogitConfig,
};
use crate::exec;
use crate::logit::simulate_choice;
use crate::model::{
    AttributeVector, ChoiceDataset, ChoiceObservation, ChoiceScenario, ParameterVector,
};
use crate::rng::CounterRng;
use crate::schema::{same_schema, AttributeSchema};

/// Stream offsets keeping scenario design and choice noise independent.
const LEVEL_STREAM: u64 = 1_000;
const CHOICE_STREAM: u64 = 2_000;

/// Recovery thresholds the estimators are held to.
const MNL_SE_MULTIPLE: f64 = 3.0;
const LCM_SHARE_TOLERANCE: f64 = 0.05;
const MIXED_TOLERANCE: f64 = 0.1;

/// The data-generating process behind a synthetic market.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum TruthModel {
    Homogeneous(ParameterVector),
    LatentClasses { class_params: Vec<ParameterVector>, shares: Vec<f64> },
    MixedNormal { mean: ParameterVector, stddev_betas: Vec<f64> },
}

/// Everything needed to generate a reproducible synthetic market.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruthSpec {
    pub schema: Arc<AttributeSchema>,
    /// Feasible level range per attribute (price included).
    pub level_bounds: Vec<Interval>,
    pub truth: TruthModel,
    /// Consecutive scenarios answered by one synthetic consumer, who draws
    /// their class or coefficients once. Heterogeneous truths need several
    /// choices per consumer before mixing shares are recoverable.
    pub choices_per_consumer: usize,
    pub population_size: f64,
    pub seed: u64,
}

impl GroundTruthSpec {
    /// The built-in virtual-traveling market. The parameter values are this
    /// crate's defaults, calibrated to the attribute units, not estimates
    /// from any survey.
    pub fn virtual_traveling_default(seed: u64) -> Self {
        let schema = AttributeSchema::virtual_traveling();
        let level_bounds = vec![
            Interval::new(0.0, 1.0).unwrap(),    // sensing accuracy
            Interval::new(10.0, 200.0).unwrap(), // downlink rate, Mbps
            Interval::new(10.0, 200.0).unwrap(), // latency, ms
            Interval::new(1.0, 5.0).unwrap(),    // hardware comfort score
            Interval::new(1.0, 30.0).unwrap(),   // subscription price
        ];
        let truth = TruthModel::Homogeneous(
            ParameterVector::new(vec![0.8, 0.01, -0.01, 0.3, -0.15], 1).unwrap(),
        );
        Self {
            schema,
            level_bounds,
            truth,
            choices_per_consumer: 1,
            population_size: 10_000.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.level_bounds.len() != self.schema.len() {
            return Err(Error::input("one level interval per schema attribute is required"));
        }
        if self.choices_per_consumer == 0 {
            return Err(Error::input("each consumer must face at least one choice"));
        }
        if self.level_bounds[self.schema.price_index()].lower < 0.0 {
            return Err(Error::input("price levels must be non-negative"));
        }
        if self.population_size.is_nan() || self.population_size < 0.0 {
            return Err(Error::input("population size must be non-negative"));
        }
        let check_params = |p: &ParameterVector| -> Result<()> {
            if p.n_betas() != self.schema.len() {
                return Err(Error::schema("true parameters must match the schema"));
            }
            Ok(())
        };
        match &self.truth {
            TruthModel::Homogeneous(p) => check_params(p)?,
            TruthModel::LatentClasses { class_params, shares } => {
                if class_params.is_empty() || class_params.len() != shares.len() {
                    return Err(Error::input("one share per latent class is required"));
                }
                for p in class_params {
                    check_params(p)?;
                }
                if shares.iter().any(|s| *s <= 0.0) {
                    return Err(Error::input("class shares must be positive"));
                }
                if ((shares.iter().sum::<f64>()) - 1.0).abs() > 1e-9 {
                    return Err(Error::input("class shares must sum to one"));
                }
            }
            TruthModel::MixedNormal { mean, stddev_betas } => {
                check_params(mean)?;
                if stddev_betas.len() != mean.n_betas() {
                    return Err(Error::input("one stddev per beta is required"));
                }
                if stddev_betas.iter().any(|s| *s < 0.0 || !s.is_finite()) {
                    return Err(Error::input("stddevs must be non-negative"));
                }
            }
        }
        Ok(())
    }

    /// A parameter vector to start recovery comparisons from.
    fn reference_params(&self) -> &ParameterVector {
        match &self.truth {
            TruthModel::Homogeneous(p) => p,
            TruthModel::LatentClasses { class_params, .. } => &class_params[0],
            TruthModel::MixedNormal { mean, .. } => mean,
        }
    }
}

/// Balanced purchase scenarios: each attribute is sampled over an equally
/// spaced grid of `levels_per_attribute` levels, each level appearing with
/// frequency 1/levels up to a count of one, independently shuffled per
/// attribute under the spec seed. Every scenario offers one service profile
/// against the no-purchase outside option, and no profile sits at the
/// maximum of every technical indicator at once.
pub fn generate_scenarios(
    spec: &GroundTruthSpec,
    n_scenarios: usize,
    levels_per_attribute: usize,
) -> Result<Vec<ChoiceScenario>> {
    spec.validate()?;
    if levels_per_attribute < 2 {
        return Err(Error::input(
            "at least two levels per attribute are needed for identification",
        ));
    }
    if n_scenarios == 0 {
        return Err(Error::input("at least one scenario must be generated"));
    }
    let n_attrs = spec.schema.len();
    let price_index = spec.schema.price_index();

    // Balanced level indices per attribute, then a seeded shuffle.
    let mut assignments: Vec<Vec<usize>> = Vec::with_capacity(n_attrs);
    for k in 0..n_attrs {
        let mut column: Vec<usize> =
            (0..n_scenarios).map(|s| s % levels_per_attribute).collect();
        let mut rng = CounterRng::with_stream(spec.seed, LEVEL_STREAM + k as u64);
        rng.shuffle(&mut column);
        assignments.push(column);
    }

    // Break any all-maximum indicator profile by swapping one assignment of
    // the first indicator with a scenario that stays informative.
    let top = levels_per_attribute - 1;
    let indicator_indices: Vec<usize> = (0..n_attrs).filter(|k| *k != price_index).collect();
    let all_max = |assignments: &[Vec<usize>], s: usize| {
        indicator_indices.iter().all(|&k| assignments[k][s] == top)
    };
    if let Some(&first_indicator) = indicator_indices.first() {
        for s in 0..n_scenarios {
            if !all_max(&assignments, s) {
                continue;
            }
            let candidate = (0..n_scenarios).find(|&t| {
                t != s
                    && assignments[first_indicator][t] != top
                    && indicator_indices[1..]
                        .iter()
                        .any(|&k| assignments[k][t] != top)
            });
            match candidate {
                Some(t) => assignments[first_indicator].swap(s, t),
                None => {
                    // Degenerate tiny designs: step the level down instead.
                    assignments[first_indicator][s] = top - 1;
                }
            }
        }
    }

    let level_value = |k: usize, idx: usize| {
        let b = spec.level_bounds[k];
        b.lower + b.width() * idx as f64 / (levels_per_attribute - 1) as f64
    };
    (0..n_scenarios)
        .map(|s| {
            let values: Vec<f64> = (0..n_attrs).map(|k| level_value(k, assignments[k][s])).collect();
            let alt = AttributeVector::new(spec.schema.clone(), values)?;
            ChoiceScenario::new(vec![alt], true)
        })
        .collect()
}

/// Parameters governing one synthetic consumer.
fn consumer_params(spec: &GroundTruthSpec, rng: &mut CounterRng) -> ParameterVector {
    match &spec.truth {
        TruthModel::Homogeneous(p) => p.clone(),
        TruthModel::LatentClasses { class_params, shares } => {
            let u = rng.uniform();
            let mut acc = 0.0;
            for (p, share) in class_params.iter().zip(shares) {
                acc += share;
                if u < acc {
                    return p.clone();
                }
            }
            class_params.last().unwrap().clone()
        }
        TruthModel::MixedNormal { mean, stddev_betas } => {
            let betas: Vec<f64> = mean
                .betas()
                .iter()
                .zip(stddev_betas)
                .map(|(m, s)| if *s > 0.0 { m + s * rng.normal() } else { *m })
                .collect();
            ParameterVector::with_constants(betas, mean.alternative_constants().to_vec())
                .expect("finite draws")
        }
    }
}

/// Simulates choices over the scenarios, one synthetic consumer per block of
/// `choices_per_consumer` consecutive scenarios. Fully reproducible from the
/// spec seed: each consumer derives their own counter stream, so generation
/// parallelizes by consumer without changing the output.
pub fn generate_dataset(
    spec: &GroundTruthSpec,
    scenarios: &[ChoiceScenario],
) -> Result<ChoiceDataset> {
    spec.validate()?;
    if scenarios.is_empty() {
        return Err(Error::input("no scenarios to generate choices for"));
    }
    for s in scenarios {
        if !same_schema(s.schema(), &spec.schema) {
            return Err(Error::schema("scenario schema does not match the spec"));
        }
    }
    let per_consumer = spec.choices_per_consumer;
    let root = CounterRng::with_stream(spec.seed, CHOICE_STREAM);
    let consumers: Vec<usize> = (0..scenarios.len().div_ceil(per_consumer)).collect();
    let blocks: Vec<Result<Vec<ChoiceObservation>>> = exec::ordered_map(&consumers, |&c| {
        let mut rng = root.split(c as u64);
        let params = consumer_params(spec, &mut rng);
        scenarios[c * per_consumer..scenarios.len().min((c + 1) * per_consumer)]
            .iter()
            .map(|scenario| {
                let chosen = simulate_choice(&params, scenario, &mut rng)?;
                ChoiceObservation::new(scenario.clone(), chosen)
            })
            .collect()
    });
    let mut observations = Vec::with_capacity(scenarios.len());
    let mut group_ids = Vec::with_capacity(scenarios.len());
    for (c, block) in blocks.into_iter().enumerate() {
        for obs in block? {
            observations.push(obs);
            group_ids.push(c);
        }
    }
    if per_consumer == 1 {
        ChoiceDataset::new(observations)
    } else {
        ChoiceDataset::with_groups(observations, group_ids)
    }
}

/// Which estimator a recovery run exercises.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum EstimatorSelection {
    Mnl,
    LatentClass { n_classes: usize },
    MixedLogit { random_coefficients: Vec<usize>, n_draws: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecoveryOptions {
    pub n_scenarios: usize,
    pub levels_per_attribute: usize,
}

impl Default for RecoveryOptions {
    fn default() -> Self {
        Self { n_scenarios: 5_000, levels_per_attribute: 4 }
    }
}

/// One parameter's truth-versus-estimate comparison.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoordinateRecovery {
    pub name: String,
    pub truth: f64,
    pub estimate: f64,
    pub std_error: Option<f64>,
    pub bias: f64,
    /// |bias| within three standard errors, when a standard error exists.
    pub within_threshold: bool,
    /// Truth inside the 95% confidence interval, when one exists.
    pub covered_95: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub estimator: EstimatorSelection,
    pub coordinates: Vec<CoordinateRecovery>,
    /// Absolute share errors per class, for latent-class runs.
    pub share_errors: Option<Vec<f64>>,
    pub log_likelihood: f64,
    pub passed: bool,
}

/// Generates a market from `spec`, fits the selected estimator, and compares
/// the estimates against the generating truth.
pub fn recovery_report(
    spec: &GroundTruthSpec,
    estimator: EstimatorSelection,
    options: &RecoveryOptions,
) -> Result<RecoveryReport> {
    let scenarios = generate_scenarios(spec, options.n_scenarios, options.levels_per_attribute)?;
    let data = generate_dataset(spec, &scenarios)?;
    let names = spec.reference_params().free_names(&spec.schema);

    match (&estimator, &spec.truth) {
        (EstimatorSelection::Mnl, TruthModel::Homogeneous(truth)) => {
            let fit = fit_mnl(&data, &FitConfig::default())?;
            let coordinates: Vec<CoordinateRecovery> = truth
                .to_free()
                .iter()
                .zip(fit.params.to_free())
                .zip(&fit.standard_errors)
                .zip(&names)
                .map(|(((t, e), se), name)| {
                    let bias = e - t;
                    CoordinateRecovery {
                        name: name.clone(),
                        truth: *t,
                        estimate: e,
                        std_error: Some(*se),
                        bias,
                        within_threshold: bias.abs() <= MNL_SE_MULTIPLE * se,
                        covered_95: Some(bias.abs() <= 1.959_963_984_540_054 * se),
                    }
                })
                .collect();
            let passed = fit.converged && coordinates.iter().all(|c| c.within_threshold);
            Ok(RecoveryReport {
                estimator,
                coordinates,
                share_errors: None,
                log_likelihood: fit.log_likelihood,
                passed,
            })
        }
        (
            EstimatorSelection::LatentClass { n_classes },
            TruthModel::LatentClasses { class_params, shares },
        ) => {
            if *n_classes != class_params.len() {
                return Err(Error::input(format!(
                    "recovery comparison needs {} classes, requested {n_classes}",
                    class_params.len()
                )));
            }
            let lc_config = LatentClassConfig { seed: spec.seed, ..LatentClassConfig::default() };
            let fit = fit_latent_class(&data, *n_classes, &lc_config)?;

            // Align truth with the fit's canonical descending-price order.
            let price = spec.schema.price_index();
            let mut order: Vec<usize> = (0..class_params.len()).collect();
            order.sort_by(|&a, &b| {
                class_params[b].betas()[price]
                    .partial_cmp(&class_params[a].betas()[price])
                    .unwrap()
            });

            let mut coordinates = Vec::new();
            let mut share_errors = Vec::new();
            let mut price_within = true;
            for (slot, &t_idx) in order.iter().enumerate() {
                share_errors.push((fit.class_shares[slot] - shares[t_idx]).abs());
                for (k, ((t, e), (se, name))) in class_params[t_idx]
                    .to_free()
                    .iter()
                    .zip(fit.class_params[slot].to_free())
                    .zip(fit.class_standard_errors[slot].iter().zip(&names))
                    .enumerate()
                {
                    let bias = e - t;
                    let within = bias.abs() <= MNL_SE_MULTIPLE * se;
                    if k == price {
                        price_within &= within;
                    }
                    coordinates.push(CoordinateRecovery {
                        name: format!("class{slot}.{name}"),
                        truth: *t,
                        estimate: e,
                        std_error: Some(*se),
                        bias,
                        within_threshold: within,
                        covered_95: Some(bias.abs() <= 1.959_963_984_540_054 * se),
                    });
                }
            }
            // The recovery gate: mixing shares within tolerance and each
            // class's price coefficient within three (conditional) standard
            // errors. Non-price coordinates stay in the report as
            // diagnostics only, since the conditional errors understate the
            // class-assignment uncertainty they carry.
            let passed = price_within
                && share_errors.iter().all(|e| *e <= LCM_SHARE_TOLERANCE);
            Ok(RecoveryReport {
                estimator,
                coordinates,
                share_errors: Some(share_errors),
                log_likelihood: fit.log_likelihood(),
                passed,
            })
        }
        (
            EstimatorSelection::MixedLogit { random_coefficients, n_draws },
            TruthModel::MixedNormal { mean, stddev_betas },
        ) => {
            let config = MixedLogitConfig { seed: spec.seed, ..MixedLogitConfig::default() };
            let fit = fit_mixed_logit(&data, random_coefficients, *n_draws, &config)?;
            let mut coordinates = Vec::new();
            for ((t, e), name) in
                mean.to_free().iter().zip(fit.mean_params.to_free()).zip(&names)
            {
                let bias = e - t;
                coordinates.push(CoordinateRecovery {
                    name: format!("mean.{name}"),
                    truth: *t,
                    estimate: e,
                    std_error: None,
                    bias,
                    within_threshold: bias.abs() <= MIXED_TOLERANCE,
                    covered_95: None,
                });
            }
            for &k in random_coefficients {
                let bias = fit.stddev_betas[k] - stddev_betas[k];
                coordinates.push(CoordinateRecovery {
                    name: format!("stddev.{}", spec.schema.attribute_names()[k]),
                    truth: stddev_betas[k],
                    estimate: fit.stddev_betas[k],
                    std_error: None,
                    bias,
                    within_threshold: bias.abs() <= MIXED_TOLERANCE,
                    covered_95: None,
                });
            }
            let passed = coordinates.iter().all(|c| c.within_threshold);
            Ok(RecoveryReport {
                estimator,
                coordinates,
                share_errors: None,
                log_likelihood: fit.simulated_log_likelihood,
                passed,
            })
        }
        _ => Err(Error::input(
            "the selected estimator does not match the spec's truth model",
        )),
    }
}

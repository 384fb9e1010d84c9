//! Machine-readable report files. Every report is a single JSON document
//! with deterministic field and key order, so identical runs produce
//! byte-identical files.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use choiceforge::estimate::{EstimationResult, LatentClassResult, MixedLogitResult};
use choiceforge::synth::GroundTruthSpec;
use choiceforge::{AttributeSchema, ParameterVector};

use crate::error::{CliError, CliResult};

/// Ground-truth record written next to a simulated dataset.
#[derive(Debug, Serialize, Deserialize)]
pub struct TruthRecord {
    pub spec: GroundTruthSpec,
    pub n_scenarios: usize,
    pub levels_per_attribute: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MnlSection {
    pub betas: BTreeMap<String, f64>,
    pub alternative_constants: Vec<f64>,
    pub standard_errors: BTreeMap<String, f64>,
    pub log_likelihood: f64,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatentClassSection {
    pub class_shares: Vec<f64>,
    pub class_betas: Vec<BTreeMap<String, f64>>,
    pub class_standard_errors: Vec<BTreeMap<String, f64>>,
    pub log_likelihood: f64,
    pub converged: bool,
    pub iterations: usize,
    pub degenerate_classes: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixedLogitSection {
    pub mean_betas: BTreeMap<String, f64>,
    pub stddev_betas: BTreeMap<String, f64>,
    pub alternative_constants: Vec<f64>,
    pub draws_per_observation: usize,
    pub simulated_log_likelihood: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Output of `choiceforge estimate`.
#[derive(Debug, Serialize, Deserialize)]
pub struct EstimateReport {
    pub model: String,
    pub attributes: Vec<String>,
    pub price_attribute: String,
    pub n_observations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mnl: Option<MnlSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub latent_class: Option<LatentClassSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mixed_logit: Option<MixedLogitSection>,
}

impl EstimateReport {
    /// Rebuilds the attribute schema the report was estimated under.
    pub fn schema(&self) -> CliResult<std::sync::Arc<AttributeSchema>> {
        let price_index = self
            .attributes
            .iter()
            .position(|a| *a == self.price_attribute)
            .ok_or_else(|| CliError::input("report names a price attribute it does not list"))?;
        AttributeSchema::new("report", self.attributes.clone(), price_index)
            .map_err(CliError::from)
    }

    /// The homogeneous parameters for downstream analysis, from whichever
    /// section is present (mixed logit contributes its means).
    pub fn point_params(&self) -> CliResult<ParameterVector> {
        let (betas_by_name, constants) = if let Some(mnl) = &self.mnl {
            (&mnl.betas, mnl.alternative_constants.clone())
        } else if let Some(mixed) = &self.mixed_logit {
            (&mixed.mean_betas, mixed.alternative_constants.clone())
        } else {
            return Err(CliError::input(
                "report carries no homogeneous parameters; analyze/optimize need an mnl or mixed fit",
            ));
        };
        let betas: Vec<f64> = self
            .attributes
            .iter()
            .map(|name| {
                betas_by_name
                    .get(name)
                    .copied()
                    .ok_or_else(|| CliError::input(format!("report is missing beta `{name}`")))
            })
            .collect::<CliResult<_>>()?;
        ParameterVector::with_constants(betas, constants).map_err(CliError::from)
    }
}

fn by_name(schema: &AttributeSchema, values: &[f64]) -> BTreeMap<String, f64> {
    schema.attribute_names().iter().cloned().zip(values.iter().copied()).collect()
}

pub fn mnl_section(schema: &AttributeSchema, fit: &EstimationResult) -> MnlSection {
    MnlSection {
        betas: by_name(schema, fit.params.betas()),
        alternative_constants: fit.params.alternative_constants().to_vec(),
        standard_errors: by_name(schema, &fit.standard_errors[..schema.len()]),
        log_likelihood: fit.log_likelihood,
        converged: fit.converged,
        iterations: fit.iterations,
        gradient_norm: fit.gradient_norm,
    }
}

pub fn latent_class_section(
    schema: &AttributeSchema,
    fit: &LatentClassResult,
) -> LatentClassSection {
    LatentClassSection {
        class_shares: fit.class_shares.clone(),
        class_betas: fit.class_params.iter().map(|p| by_name(schema, p.betas())).collect(),
        class_standard_errors: fit
            .class_standard_errors
            .iter()
            .map(|se| by_name(schema, &se[..schema.len()]))
            .collect(),
        log_likelihood: fit.log_likelihood(),
        converged: fit.converged,
        iterations: fit.iterations,
        degenerate_classes: fit.degenerate_classes.clone(),
    }
}

pub fn mixed_logit_section(schema: &AttributeSchema, fit: &MixedLogitResult) -> MixedLogitSection {
    MixedLogitSection {
        mean_betas: by_name(schema, fit.mean_params.betas()),
        stddev_betas: by_name(schema, &fit.stddev_betas),
        alternative_constants: fit.mean_params.alternative_constants().to_vec(),
        draws_per_observation: fit.draws_per_observation,
        simulated_log_likelihood: fit.simulated_log_likelihood,
        converged: fit.converged,
        iterations: fit.iterations,
    }
}

/// Output of `choiceforge analyze`.
#[derive(Debug, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub wtp: BTreeMap<String, f64>,
    pub price_coefficient: f64,
    pub reference_levels: BTreeMap<String, f64>,
    pub reference_price: f64,
    pub population_size: f64,
    pub purchase_probability: f64,
    pub price_derivative: f64,
    pub market_potential: f64,
}

/// Output of `choiceforge optimize`.
#[derive(Debug, Serialize, Deserialize)]
pub struct SolutionReport {
    pub objective: String,
    pub price: f64,
    pub attribute_levels: BTreeMap<String, f64>,
    pub purchase_probability: f64,
    pub objective_value: f64,
    pub price_bounds: [f64; 2],
    pub grid_points: usize,
}

/// Output of `choiceforge chain`.
#[derive(Debug, Serialize, Deserialize)]
pub struct ChainReport {
    pub indicators: Vec<String>,
    pub constructs: Vec<String>,
    /// `weights[construct][indicator]` of the fitted indicator-to-construct
    /// link.
    pub link_weights: Vec<Vec<f64>>,
    pub link_intercepts: Vec<f64>,
    pub link_residual_stddev: Vec<f64>,
    pub terminal_betas: BTreeMap<String, f64>,
    pub terminal_standard_errors: BTreeMap<String, f64>,
    pub terminal_log_likelihood: f64,
    pub terminal_converged: bool,
    /// Per indicator-construct path: the marginal utility effect routed
    /// through that construct.
    pub path_effects: Vec<PathEffect>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PathEffect {
    pub indicator: String,
    pub construct: String,
    pub link_weight: f64,
    pub terminal_weight: f64,
    pub path_effect: f64,
    /// Composed effect of the indicator over all constructs.
    pub total_effect: f64,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)
        .map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

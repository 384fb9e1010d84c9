//! Random-utility domain types: attribute vectors, structural parameters,
//! choice scenarios, and observed-choice datasets.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::{same_schema, AttributeSchema};

/// One alternative's attribute values under a schema.
#[derive(Debug, Clone)]
pub struct AttributeVector {
    values: Vec<f64>,
    schema: Arc<AttributeSchema>,
}

impl AttributeVector {
    pub fn new(schema: Arc<AttributeSchema>, values: Vec<f64>) -> Result<Self> {
        if values.len() != schema.len() {
            return Err(Error::schema(format!(
                "attribute vector has {} values, schema `{}` expects {}",
                values.len(),
                schema.id(),
                schema.len()
            )));
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::schema(format!(
                "attribute `{}` is not finite",
                schema.attribute_names()[bad]
            )));
        }
        if values[schema.price_index()] < 0.0 {
            return Err(Error::schema("price must be non-negative"));
        }
        Ok(Self { values, schema })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn price(&self) -> f64 {
        self.values[self.schema.price_index()]
    }

    pub fn schema(&self) -> &Arc<AttributeSchema> {
        &self.schema
    }
}

/// Structural utility weights: one beta per schema attribute plus
/// alternative-specific constants with the first normalized to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    betas: Vec<f64>,
    alternative_constants: Vec<f64>,
}

impl ParameterVector {
    /// Betas with `n_alternatives` zero constants.
    pub fn new(betas: Vec<f64>, n_alternatives: usize) -> Result<Self> {
        Self::with_constants(betas, vec![0.0; n_alternatives.max(1)])
    }

    pub fn with_constants(betas: Vec<f64>, alternative_constants: Vec<f64>) -> Result<Self> {
        if betas.iter().any(|b| !b.is_finite()) {
            return Err(Error::input("betas must be finite"));
        }
        if alternative_constants.is_empty() {
            return Err(Error::input("at least one alternative constant is required"));
        }
        if alternative_constants.iter().any(|c| !c.is_finite()) {
            return Err(Error::input("alternative constants must be finite"));
        }
        if alternative_constants[0] != 0.0 {
            return Err(Error::input(
                "the first alternative constant is the identification normalization and must be 0",
            ));
        }
        Ok(Self { betas, alternative_constants })
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alternative_constants(&self) -> &[f64] {
        &self.alternative_constants
    }

    pub fn n_betas(&self) -> usize {
        self.betas.len()
    }

    pub fn n_constants(&self) -> usize {
        self.alternative_constants.len()
    }

    /// Free (estimable) parameter count: all betas plus constants after the
    /// normalized first one.
    pub fn free_len(&self) -> usize {
        self.betas.len() + self.alternative_constants.len() - 1
    }

    /// Packs free parameters as `[betas..., constants[1..]]`.
    pub fn to_free(&self) -> Vec<f64> {
        let mut free = self.betas.clone();
        free.extend_from_slice(&self.alternative_constants[1..]);
        free
    }

    /// Rebuilds a parameter vector from packed free parameters.
    pub fn from_free(free: &[f64], n_betas: usize, n_constants: usize) -> Result<Self> {
        if free.len() != n_betas + n_constants - 1 {
            return Err(Error::input(format!(
                "expected {} free parameters, got {}",
                n_betas + n_constants - 1,
                free.len()
            )));
        }
        let betas = free[..n_betas].to_vec();
        let mut constants = vec![0.0];
        constants.extend_from_slice(&free[n_betas..]);
        Self::with_constants(betas, constants)
    }

    /// Names of the free parameters under `schema`, aligned with
    /// [`ParameterVector::to_free`].
    pub fn free_names(&self, schema: &AttributeSchema) -> Vec<String> {
        let mut names: Vec<String> = schema.attribute_names().to_vec();
        for i in 1..self.alternative_constants.len() {
            names.push(format!("const_{i}"));
        }
        names
    }
}

/// One decision situation: listed alternatives, optionally closed by a
/// no-purchase outside option with systematic utility zero.
#[derive(Debug, Clone)]
pub struct ChoiceScenario {
    alternatives: Vec<AttributeVector>,
    includes_outside_option: bool,
}

impl ChoiceScenario {
    pub fn new(alternatives: Vec<AttributeVector>, includes_outside_option: bool) -> Result<Self> {
        if alternatives.is_empty() {
            return Err(Error::input("a scenario needs at least one alternative"));
        }
        let schema = alternatives[0].schema().clone();
        for alt in &alternatives[1..] {
            if !same_schema(alt.schema(), &schema) {
                return Err(Error::schema("all alternatives in a scenario must share one schema"));
            }
        }
        let effective = alternatives.len() + usize::from(includes_outside_option);
        if effective < 2 {
            return Err(Error::input(
                "a scenario needs at least two effective alternatives (including the outside option)",
            ));
        }
        Ok(Self { alternatives, includes_outside_option })
    }

    pub fn alternatives(&self) -> &[AttributeVector] {
        &self.alternatives
    }

    pub fn includes_outside_option(&self) -> bool {
        self.includes_outside_option
    }

    /// Number of choices the consumer actually faces.
    pub fn n_effective(&self) -> usize {
        self.alternatives.len() + usize::from(self.includes_outside_option)
    }

    /// Index of the outside option in the effective list (always last).
    pub fn outside_index(&self) -> Option<usize> {
        self.includes_outside_option.then_some(self.alternatives.len())
    }

    pub fn schema(&self) -> &Arc<AttributeSchema> {
        self.alternatives[0].schema()
    }
}

/// A scenario together with the alternative the consumer picked.
#[derive(Debug, Clone)]
pub struct ChoiceObservation {
    scenario: ChoiceScenario,
    chosen_index: usize,
}

impl ChoiceObservation {
    pub fn new(scenario: ChoiceScenario, chosen_index: usize) -> Result<Self> {
        if chosen_index >= scenario.n_effective() {
            return Err(Error::input(format!(
                "chosen index {chosen_index} out of range for {} effective alternatives",
                scenario.n_effective()
            )));
        }
        Ok(Self { scenario, chosen_index })
    }

    pub fn scenario(&self) -> &ChoiceScenario {
        &self.scenario
    }

    pub fn chosen_index(&self) -> usize {
        self.chosen_index
    }
}

/// Long-format collection of observed choices under one schema.
///
/// Observations may be grouped: a group ties together the repeated choices
/// of one consumer, which latent-class estimation uses to assign class
/// membership per consumer rather than per choice. Without explicit groups
/// every observation is its own consumer.
#[derive(Debug, Clone)]
pub struct ChoiceDataset {
    observations: Vec<ChoiceObservation>,
    schema: Arc<AttributeSchema>,
    group_of: Option<Vec<usize>>,
    n_groups: usize,
}

impl ChoiceDataset {
    pub fn new(observations: Vec<ChoiceObservation>) -> Result<Self> {
        let first = observations
            .first()
            .ok_or_else(|| Error::input("dataset must contain at least one observation"))?;
        let schema = first.scenario().schema().clone();
        for obs in &observations[1..] {
            if !same_schema(obs.scenario().schema(), &schema) {
                return Err(Error::schema("all observations must share one attribute schema"));
            }
        }
        let n_groups = observations.len();
        Ok(Self { observations, schema, group_of: None, n_groups })
    }

    /// Builds a dataset with consumer groups; `group_ids[i]` names the
    /// consumer behind observation `i`. Ids are normalized to a dense
    /// 0-based range in first-appearance order.
    pub fn with_groups(
        observations: Vec<ChoiceObservation>,
        group_ids: Vec<usize>,
    ) -> Result<Self> {
        if group_ids.len() != observations.len() {
            return Err(Error::input("one group id per observation is required"));
        }
        let mut dataset = Self::new(observations)?;
        let mut remap: HashMap<usize, usize> = HashMap::new();
        let mut normalized = Vec::with_capacity(group_ids.len());
        for id in group_ids {
            let next = remap.len();
            normalized.push(*remap.entry(id).or_insert(next));
        }
        dataset.n_groups = remap.len();
        dataset.group_of = Some(normalized);
        Ok(dataset)
    }

    /// Number of consumer groups (observations, when ungrouped).
    pub fn n_groups(&self) -> usize {
        self.n_groups
    }

    /// Group of observation `i`.
    pub fn group_of(&self, i: usize) -> usize {
        self.group_of.as_ref().map_or(i, |g| g[i])
    }

    pub fn observations(&self) -> &[ChoiceObservation] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn schema(&self) -> &Arc<AttributeSchema> {
        &self.schema
    }

    /// Largest number of listed (inside) alternatives in any scenario.
    pub fn max_inside_alternatives(&self) -> usize {
        self.observations
            .iter()
            .map(|o| o.scenario().alternatives().len())
            .max()
            .unwrap_or(0)
    }

    /// Reorders observations (and their group tags); useful for
    /// permutation-invariance checks.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.observations.len() {
            return Err(Error::input("permutation length mismatch"));
        }
        let observations = order.iter().map(|&i| self.observations[i].clone()).collect();
        match &self.group_of {
            None => Self::new(observations),
            Some(groups) => {
                Self::with_groups(observations, order.iter().map(|&i| groups[i]).collect())
            }
        }
    }
}

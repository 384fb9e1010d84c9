//! Post-estimation economics: willingness-to-pay, price sensitivity, market
//! potential, and the invest/reject monetization rule.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logit::choice_probabilities;
use crate::model::{ChoiceScenario, ParameterVector};
use crate::schema::AttributeSchema;

/// Willingness-to-pay per non-price attribute: currency per unit of the
/// attribute, computed as -beta_k / beta_price.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WtpReport {
    pub per_attribute_wtp: BTreeMap<String, f64>,
    pub price_coefficient: f64,
}

fn price_beta(params: &ParameterVector, schema: &AttributeSchema) -> Result<f64> {
    if params.n_betas() != schema.len() {
        return Err(Error::schema(format!(
            "{} betas vs schema `{}` with {} attributes",
            params.n_betas(),
            schema.id(),
            schema.len()
        )));
    }
    let beta_price = params.betas()[schema.price_index()];
    if beta_price >= 0.0 {
        return Err(Error::EconomicValidity(format!(
            "price coefficient {beta_price} is not negative; demand would slope upward"
        )));
    }
    Ok(beta_price)
}

/// Monetizes each non-price coefficient against the price coefficient.
pub fn wtp(params: &ParameterVector, schema: &AttributeSchema) -> Result<WtpReport> {
    let beta_price = price_beta(params, schema)?;
    let per_attribute_wtp = schema
        .indicator_names()
        .map(|(k, name)| (name.to_string(), -params.betas()[k] / beta_price))
        .collect();
    Ok(WtpReport { per_attribute_wtp, price_coefficient: beta_price })
}

/// Own-price derivative of alternative `alt_index`'s choice probability:
/// beta_price * P * (1 - P).
pub fn price_derivative(
    params: &ParameterVector,
    scenario: &ChoiceScenario,
    alt_index: usize,
) -> Result<f64> {
    if alt_index >= scenario.alternatives().len() {
        return Err(Error::input(format!(
            "alternative index {alt_index} out of range; only the {} listed alternatives have a price",
            scenario.alternatives().len()
        )));
    }
    let beta_price = params.betas()[scenario.schema().price_index()];
    let p = choice_probabilities(params, scenario)?[alt_index];
    Ok(beta_price * p * (1.0 - p))
}

/// Expected adopters: population times the probability of not choosing the
/// outside option.
pub fn market_potential(
    params: &ParameterVector,
    scenario: &ChoiceScenario,
    population_size: f64,
) -> Result<f64> {
    let outside = scenario
        .outside_index()
        .ok_or_else(|| Error::input("market potential needs a scenario with an outside option"))?;
    let probs = choice_probabilities(params, scenario)?;
    Ok(population_size * (1.0 - probs[outside]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InvestmentAction {
    Invest,
    Reject,
}

/// The monetized comparison behind an invest/reject call.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InvestmentDecision {
    pub attribute: String,
    pub wtp_per_unit: f64,
    pub monetized_benefit: f64,
    pub price_increase: f64,
    /// monetized benefit / price increase; invest when strictly above one.
    pub ratio: f64,
    pub action: InvestmentAction,
    /// Set when the ratio is exactly one: no strict surplus either way.
    pub indifferent: bool,
}

/// Should the provider invest in raising `attribute` by `delta_attribute`
/// when doing so forces a price increase of `delta_price`?
pub fn investment_rule(
    params: &ParameterVector,
    schema: &AttributeSchema,
    attribute: usize,
    delta_attribute: f64,
    delta_price: f64,
) -> Result<InvestmentDecision> {
    if attribute >= schema.len() || attribute == schema.price_index() {
        return Err(Error::input(format!(
            "attribute index {attribute} must name a non-price attribute"
        )));
    }
    if delta_price <= 0.0 {
        return Err(Error::input("the price increase must be positive"));
    }
    let beta_price = price_beta(params, schema)?;
    let wtp_per_unit = -params.betas()[attribute] / beta_price;
    let monetized_benefit = wtp_per_unit * delta_attribute;
    let ratio = monetized_benefit / delta_price;
    // Ties break against investing: no strict surplus, no spend.
    let action = if ratio > 1.0 { InvestmentAction::Invest } else { InvestmentAction::Reject };
    Ok(InvestmentDecision {
        attribute: schema.attribute_names()[attribute].clone(),
        wtp_per_unit,
        monetized_benefit,
        price_increase: delta_price,
        ratio,
        action,
        indifferent: ratio == 1.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::AttributeVector;
    use std::sync::Arc;

    fn schema2() -> Arc<AttributeSchema> {
        AttributeSchema::new("t", vec!["quality".into(), "price".into()], 1).unwrap()
    }

    #[test]
    fn wtp_is_the_coefficient_ratio() {
        let schema = schema2();
        let params = ParameterVector::new(vec![0.5, -0.25], 1).unwrap();
        let report = wtp(&params, &schema).unwrap();
        assert_eq!(report.per_attribute_wtp["quality"], 2.0);
        assert_eq!(report.price_coefficient, -0.25);
    }

    #[test]
    fn zero_coefficient_has_zero_wtp() {
        let schema = schema2();
        let params = ParameterVector::new(vec![0.0, -0.25], 1).unwrap();
        let report = wtp(&params, &schema).unwrap();
        assert_eq!(report.per_attribute_wtp["quality"], 0.0);
    }

    #[test]
    fn wtp_is_scale_invariant() {
        let schema = schema2();
        let params = ParameterVector::new(vec![0.5, -0.25], 1).unwrap();
        let scaled = ParameterVector::new(vec![0.5 * 3.7, -0.25 * 3.7], 1).unwrap();
        let a = wtp(&params, &schema).unwrap();
        let b = wtp(&scaled, &schema).unwrap();
        assert!((a.per_attribute_wtp["quality"] - b.per_attribute_wtp["quality"]).abs() < 1e-12);
    }

    #[test]
    fn nonnegative_price_coefficient_is_rejected() {
        let schema = schema2();
        let params = ParameterVector::new(vec![0.5, 0.1], 1).unwrap();
        assert!(matches!(wtp(&params, &schema), Err(Error::EconomicValidity(_))));
        let zero = ParameterVector::new(vec![0.5, 0.0], 1).unwrap();
        assert!(wtp(&zero, &schema).is_err());
    }

    fn binary_scenario(quality: f64, price: f64) -> ChoiceScenario {
        let schema = schema2();
        let alt = AttributeVector::new(schema, vec![quality, price]).unwrap();
        ChoiceScenario::new(vec![alt], true).unwrap()
    }

    #[test]
    fn price_derivative_at_even_split() {
        // V = 0 against the outside option gives P = 1/2.
        let params = ParameterVector::new(vec![0.0, -1.0], 1).unwrap();
        let scen = binary_scenario(3.0, 0.0);
        let d = price_derivative(&params, &scen, 0).unwrap();
        assert!((d - (-0.25)).abs() < 1e-12);
    }

    #[test]
    fn price_derivative_matches_finite_differences() {
        let schema = schema2();
        let mut rng = crate::rng::CounterRng::new(14);
        for _ in 0..100 {
            let beta_q = rng.uniform_in(-1.0, 1.0);
            let beta_p = rng.uniform_in(-1.5, -0.1);
            let params = ParameterVector::new(vec![beta_q, beta_p], 1).unwrap();
            let quality = rng.uniform_in(-1.0, 1.0);
            let price = rng.uniform_in(0.5, 5.0);

            let analytic =
                price_derivative(&params, &binary_scenario(quality, price), 0).unwrap();
            let h = 1e-6;
            let p_plus = choice_probabilities(&params, &binary_scenario(quality, price + h))
                .unwrap()[0];
            let p_minus = choice_probabilities(&params, &binary_scenario(quality, price - h))
                .unwrap()[0];
            let fd = (p_plus - p_minus) / (2.0 * h);
            assert!(
                (analytic - fd).abs() / fd.abs().max(1e-12) < 1e-6,
                "analytic {analytic} vs fd {fd}"
            );
            let _ = schema;
        }
    }

    #[test]
    fn zero_price_coefficient_gives_zero_derivative() {
        let params = ParameterVector::new(vec![0.4, 0.0], 1).unwrap();
        let d = price_derivative(&params, &binary_scenario(1.0, 2.0), 0).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn derivative_is_negative_for_downward_sloping_demand() {
        let mut rng = crate::rng::CounterRng::new(25);
        for _ in 0..50 {
            let params =
                ParameterVector::new(vec![rng.uniform_in(-1.0, 1.0), rng.uniform_in(-2.0, -0.01)], 1)
                    .unwrap();
            let d = price_derivative(
                &params,
                &binary_scenario(rng.uniform_in(-1.0, 1.0), rng.uniform_in(0.0, 4.0)),
                0,
            )
            .unwrap();
            assert!(d < 0.0);
        }
    }

    #[test]
    fn outside_index_is_out_of_range_for_price_derivative() {
        let params = ParameterVector::new(vec![0.0, -1.0], 1).unwrap();
        assert!(price_derivative(&params, &binary_scenario(1.0, 1.0), 1).is_err());
    }

    #[test]
    fn market_potential_scales_purchase_probability() {
        // V = 0 splits evenly with the outside option.
        let params = ParameterVector::new(vec![0.0, 0.0], 1).unwrap();
        let scen = binary_scenario(1.0, 3.0);
        let adopters = market_potential(&params, &scen, 10_000.0).unwrap();
        assert!((adopters - 5_000.0).abs() < 1e-9);
    }

    #[test]
    fn market_potential_vanishes_at_prohibitive_prices() {
        let params = ParameterVector::new(vec![0.0, -1.0], 1).unwrap();
        let scen = binary_scenario(0.0, 700.0);
        let adopters = market_potential(&params, &scen, 10_000.0).unwrap();
        assert!(adopters < 1.0, "{adopters}");
    }

    #[test]
    fn market_potential_requires_an_outside_option() {
        let schema = schema2();
        let alts = vec![
            AttributeVector::new(schema.clone(), vec![1.0, 1.0]).unwrap(),
            AttributeVector::new(schema, vec![0.0, 2.0]).unwrap(),
        ];
        let scen = ChoiceScenario::new(alts, false).unwrap();
        let params = ParameterVector::new(vec![0.0, -1.0], 2).unwrap();
        assert!(market_potential(&params, &scen, 100.0).is_err());
    }

    #[test]
    fn market_potential_matches_the_choice_kernel() {
        // Cross-module consistency: the default market at price 15 equals
        // population times the purchase probability the choice kernel
        // reports.
        let spec = crate::synth::GroundTruthSpec::virtual_traveling_default(0);
        let truth = match &spec.truth {
            crate::synth::TruthModel::Homogeneous(p) => p.clone(),
            _ => unreachable!(),
        };
        let mut levels: Vec<f64> =
            spec.level_bounds.iter().map(|b| b.midpoint()).collect();
        levels[spec.schema.price_index()] = 15.0;
        let alt = AttributeVector::new(spec.schema.clone(), levels).unwrap();
        let scen = ChoiceScenario::new(vec![alt], true).unwrap();

        let adopters = market_potential(&truth, &scen, spec.population_size).unwrap();
        let probs = choice_probabilities(&truth, &scen).unwrap();
        let direct = spec.population_size * probs[0];
        assert!((adopters - direct).abs() < 1e-9, "{adopters} vs {direct}");
    }

    #[test]
    fn market_potential_is_monotone_in_price() {
        let params = ParameterVector::new(vec![0.3, -0.4], 1).unwrap();
        let mut last = f64::INFINITY;
        for i in 0..100 {
            let price = 0.5 + i as f64 * 0.25;
            let adopters =
                market_potential(&params, &binary_scenario(1.0, price), 10_000.0).unwrap();
            assert!(adopters <= last + 1e-12, "price {price}: {adopters} > {last}");
            last = adopters;
        }
    }

    #[test]
    fn invest_rule_examples() {
        let schema = schema2();
        // WTP_quality = 2.0.
        let params = ParameterVector::new(vec![0.5, -0.25], 1).unwrap();

        let d = investment_rule(&params, &schema, 0, 1.0, 1.0).unwrap();
        assert_eq!(d.action, InvestmentAction::Invest);
        assert!((d.ratio - 2.0).abs() < 1e-12);
        assert!(!d.indifferent);

        let d = investment_rule(&params, &schema, 0, 0.4, 1.0).unwrap();
        assert_eq!(d.action, InvestmentAction::Reject);
        assert!((d.ratio - 0.8).abs() < 1e-12);

        // Exactly break-even: reject, flagged indifferent.
        let d = investment_rule(&params, &schema, 0, 0.5, 1.0).unwrap();
        assert_eq!(d.ratio, 1.0);
        assert_eq!(d.action, InvestmentAction::Reject);
        assert!(d.indifferent);
    }

    #[test]
    fn invest_rule_rejects_bad_inputs() {
        let schema = schema2();
        let params = ParameterVector::new(vec![0.5, -0.25], 1).unwrap();
        assert!(investment_rule(&params, &schema, 1, 1.0, 1.0).is_err());
        assert!(investment_rule(&params, &schema, 0, 1.0, 0.0).is_err());
        let upward = ParameterVector::new(vec![0.5, 0.25], 1).unwrap();
        assert!(investment_rule(&upward, &schema, 0, 1.0, 1.0).is_err());
    }
}

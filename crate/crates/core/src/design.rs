//! Revenue and profit optimization over subscription price and technical
//! indicator levels, price-sweep curve generation, and premium-tier share
//! analysis.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::analytics::wtp;
use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::logit::choice_probabilities;
use crate::model::{AttributeVector, ChoiceScenario, ParameterVector};
use crate::rng::CounterRng;
use crate::schema::{same_schema, AttributeSchema};

// Tighter than the 1e-6 the solution contract asks for: the first-order
// condition residual inherits roughly the bracket width times the revenue
// curvature, so the bracket needs headroom.
const GOLDEN_TOL: f64 = 1e-9;
const CROSS_CHECK_GRID: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite()) || lower > upper {
            return Err(Error::input(format!("invalid interval [{lower}, {upper}]")));
        }
        Ok(Self { lower, upper })
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lower, self.upper)
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }
}

/// Feasible region for service design: one closed interval per schema
/// attribute (the price slot holds the price bounds) and an optional linear
/// per-user cost model over the indicator levels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignSpace {
    schema: Arc<AttributeSchema>,
    bounds: Vec<Interval>,
    cost_model: Option<Vec<f64>>,
}

impl DesignSpace {
    pub fn new(schema: Arc<AttributeSchema>, bounds: Vec<Interval>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::input("design space has no attribute bounds"));
        }
        if bounds.len() != schema.len() {
            return Err(Error::input(format!(
                "{} bounds vs schema `{}` with {} attributes",
                bounds.len(),
                schema.id(),
                schema.len()
            )));
        }
        if bounds[schema.price_index()].lower < 0.0 {
            return Err(Error::input("price bounds must be non-negative"));
        }
        Ok(Self { schema, bounds, cost_model: None })
    }

    /// Attaches linear per-user costs; one coefficient per attribute, all
    /// non-negative, with the price slot fixed at zero.
    pub fn with_cost_model(mut self, per_attribute: Vec<f64>) -> Result<Self> {
        if per_attribute.len() != self.schema.len() {
            return Err(Error::input("cost model must have one coefficient per attribute"));
        }
        if per_attribute.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::input("cost coefficients must be non-negative"));
        }
        if per_attribute[self.schema.price_index()] != 0.0 {
            return Err(Error::input("the price slot of the cost model must be zero"));
        }
        self.cost_model = Some(per_attribute);
        Ok(self)
    }

    pub fn schema(&self) -> &Arc<AttributeSchema> {
        &self.schema
    }

    pub fn bounds(&self) -> &[Interval] {
        &self.bounds
    }

    pub fn price_bounds(&self) -> Interval {
        self.bounds[self.schema.price_index()]
    }

    pub fn cost_model(&self) -> Option<&[f64]> {
        self.cost_model.as_deref()
    }

    fn unit_cost(&self, levels: &[f64]) -> f64 {
        self.cost_model.as_ref().map_or(0.0, |c| dot(c, levels))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Revenue,
    Profit,
}

/// One sample of the price sweep behind a design decision.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CurvePoint {
    pub price: f64,
    pub utility: f64,
    pub probability: f64,
    pub revenue: f64,
}

/// An optimized design: price, indicator levels, and the swept curve that
/// produced it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignSolution {
    pub price: f64,
    /// Full attribute vector with the price slot set to `price`.
    pub attribute_levels: Vec<f64>,
    pub purchase_probability: f64,
    pub objective_value: f64,
    pub curve: Vec<CurvePoint>,
}

fn require_negative_price_beta(params: &ParameterVector, schema: &AttributeSchema) -> Result<f64> {
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
            "price coefficient {beta_price} is not negative, so revenue is unbounded in price"
        )));
    }
    Ok(beta_price)
}

/// Purchase utility, probability against the outside option, and revenue at
/// one price point.
fn evaluate_price(params: &ParameterVector, levels: &[f64], price_index: usize, price: f64) -> CurvePoint {
    let mut x = levels.to_vec();
    x[price_index] = price;
    let utility = dot(params.betas(), &x);
    // Binary purchase against the zero-utility outside option.
    let m = utility.max(0.0);
    let probability = ((utility - m).exp() / ((utility - m).exp() + (-m).exp()))
        .max(f64::MIN_POSITIVE);
    CurvePoint { price, utility, probability, revenue: price * probability }
}

/// Sweeps utility, purchase probability, and revenue over a price grid at
/// fixed indicator levels. The grid must be strictly increasing.
pub fn revenue_curve(
    params: &ParameterVector,
    schema: &AttributeSchema,
    attribute_levels: &[f64],
    price_grid: &[f64],
) -> Result<Vec<CurvePoint>> {
    require_negative_price_beta(params, schema)?;
    if attribute_levels.len() != schema.len() {
        return Err(Error::schema("attribute levels must match the schema"));
    }
    if price_grid.is_empty() {
        return Err(Error::input("price grid is empty"));
    }
    if price_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::input("price grid must be strictly increasing"));
    }
    if price_grid[0] < 0.0 {
        return Err(Error::input("prices must be non-negative"));
    }
    Ok(price_grid
        .iter()
        .map(|&p| evaluate_price(params, attribute_levels, schema.price_index(), p))
        .collect())
}

/// Golden-section maximization on a closed interval. Returns the best point
/// found among the shrunken bracket and both endpoints.
fn golden_section_max<F: Fn(f64) -> f64>(f: &F, interval: Interval, tol: f64) -> (f64, f64) {
    const INVPHI: f64 = 0.618_033_988_749_894_9;
    const INVPHI2: f64 = 0.381_966_011_250_105_1;
    let (mut a, mut b) = (interval.lower, interval.upper);
    let mut h = b - a;
    if h <= tol {
        let mid = interval.midpoint();
        return (mid, f(mid));
    }
    let mut c = a + INVPHI2 * h;
    let mut d = a + INVPHI * h;
    let mut fc = f(c);
    let mut fd = f(d);
    while h > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            h = b - a;
            c = a + INVPHI2 * h;
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            h = b - a;
            d = a + INVPHI * h;
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    let candidates = [
        (mid, f(mid)),
        (interval.lower, f(interval.lower)),
        (interval.upper, f(interval.upper)),
    ];
    candidates
        .into_iter()
        .max_by(|x, y| x.1.partial_cmp(&y.1).expect("objective is finite"))
        .unwrap()
}

fn grid(interval: Interval, points: usize) -> Vec<f64> {
    if points == 1 || interval.width() == 0.0 {
        return vec![interval.midpoint()];
    }
    (0..points)
        .map(|i| interval.lower + interval.width() * i as f64 / (points - 1) as f64)
        .collect()
}

/// Revenue-maximizing price at fixed indicator levels: golden-section search
/// cross-checked against a dense grid, so the result is never worse than the
/// best grid point.
pub fn optimize_price(
    params: &ParameterVector,
    schema: &AttributeSchema,
    attribute_levels: &[f64],
    price_bounds: Interval,
) -> Result<DesignSolution> {
    require_negative_price_beta(params, schema)?;
    if attribute_levels.len() != schema.len() {
        return Err(Error::schema("attribute levels must match the schema"));
    }
    if price_bounds.lower < 0.0 {
        return Err(Error::input("price bounds must be non-negative"));
    }
    let price_index = schema.price_index();
    let revenue_at = |p: f64| evaluate_price(params, attribute_levels, price_index, p).revenue;

    let (mut best_price, mut best_revenue) = golden_section_max(&revenue_at, price_bounds, GOLDEN_TOL);
    let curve: Vec<CurvePoint> = grid(price_bounds, CROSS_CHECK_GRID)
        .into_iter()
        .map(|p| evaluate_price(params, attribute_levels, price_index, p))
        .collect();
    for point in &curve {
        if point.revenue > best_revenue {
            best_revenue = point.revenue;
            best_price = point.price;
        }
    }

    let at_best = evaluate_price(params, attribute_levels, price_index, best_price);
    let mut levels = attribute_levels.to_vec();
    levels[price_index] = best_price;
    Ok(DesignSolution {
        price: best_price,
        attribute_levels: levels,
        purchase_probability: at_best.probability,
        objective_value: at_best.revenue,
        curve,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignConfig {
    /// Seeded corner/center starting points for the coordinate ascent.
    pub multi_starts: usize,
    /// Stop a sweep cycle once the objective improves by less than this.
    pub tolerance: f64,
    pub max_sweeps: usize,
    pub seed: u64,
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self { multi_starts: 8, tolerance: 1e-8, max_sweeps: 100, seed: 0 }
    }
}

/// Jointly optimizes indicator levels and price by coordinate ascent: a
/// golden-section line search per indicator with the price re-optimized
/// inside each evaluation, repeated until the objective stops improving,
/// from several seeded starting corners.
pub fn optimize_design(
    params: &ParameterVector,
    space: &DesignSpace,
    objective: Objective,
    config: &DesignConfig,
) -> Result<DesignSolution> {
    require_negative_price_beta(params, space.schema())?;
    if objective == Objective::Profit && space.cost_model().is_none() {
        return Err(Error::input("the profit objective needs a cost model"));
    }
    let schema = space.schema();
    let price_index = schema.price_index();
    let price_bounds = space.price_bounds();

    let value_at = |levels: &[f64], price: f64| -> f64 {
        let point = evaluate_price(params, levels, price_index, price);
        match objective {
            Objective::Revenue => point.revenue,
            Objective::Profit => {
                let mut x = levels.to_vec();
                x[price_index] = price;
                (price - space.unit_cost(&x)) * point.probability
            }
        }
    };
    // Profile value of a level vector: the objective at its best price.
    let profile = |levels: &[f64]| -> (f64, f64) {
        let obj = |p: f64| value_at(levels, p);
        golden_section_max(&obj, price_bounds, GOLDEN_TOL)
    };

    let indicator_indices: Vec<usize> = (0..schema.len()).filter(|&k| k != price_index).collect();
    let mut best: Option<(f64, Vec<f64>, f64)> = None;

    for start in 0..config.multi_starts.max(1) {
        let mut levels: Vec<f64> = if start == 0 {
            space.bounds().iter().map(|b| b.midpoint()).collect()
        } else {
            let mut rng = CounterRng::with_stream(config.seed, start as u64);
            space
                .bounds()
                .iter()
                .map(|b| if rng.below(2) == 0 { b.lower } else { b.upper })
                .collect()
        };
        let (mut price, mut value) = profile(&levels);
        levels[price_index] = price;

        for _ in 0..config.max_sweeps {
            let before = value;
            for &k in &indicator_indices {
                let line = |x: f64| {
                    let mut candidate = levels.clone();
                    candidate[k] = x;
                    profile(&candidate).1
                };
                let (x_best, v_best) = golden_section_max(&line, space.bounds()[k], GOLDEN_TOL);
                if v_best > value {
                    levels[k] = x_best;
                    let (p, v) = profile(&levels);
                    price = p;
                    value = v;
                    levels[price_index] = price;
                }
            }
            if value - before < config.tolerance {
                break;
            }
        }

        let better = best.as_ref().is_none_or(|(v, _, _)| value > *v);
        if better {
            best = Some((value, levels, price));
        }
    }

    let (objective_value, levels, price) = best.expect("at least one start runs");
    let probability = evaluate_price(params, &levels, price_index, price).probability;
    let curve: Vec<CurvePoint> = grid(price_bounds, CROSS_CHECK_GRID)
        .into_iter()
        .map(|p| evaluate_price(params, &levels, price_index, p))
        .collect();
    Ok(DesignSolution {
        price,
        attribute_levels: levels,
        purchase_probability: probability,
        objective_value,
        curve,
    })
}

/// Market split between a base offer, a premium offer, and the outside
/// option, plus the willingness-to-pay for the premium's attribute deltas.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PremiumShareReport {
    pub base_probability: f64,
    pub premium_probability: f64,
    pub outside_probability: f64,
    pub base_adopters: f64,
    pub premium_adopters: f64,
    /// Sum over non-price attributes of WTP_k times the premium-minus-base
    /// delta.
    pub incremental_wtp: f64,
}

/// Evaluates a two-tier line. Both offers are scored purely from their
/// attributes (no alternative-specific constants), so identical offers split
/// the inside share exactly evenly.
pub fn premium_share(
    params: &ParameterVector,
    base_offer: &AttributeVector,
    premium_offer: &AttributeVector,
    population_size: f64,
) -> Result<PremiumShareReport> {
    if !same_schema(base_offer.schema(), premium_offer.schema()) {
        return Err(Error::schema("base and premium offers must share one schema"));
    }
    let schema = base_offer.schema().clone();
    let attribute_params = ParameterVector::new(params.betas().to_vec(), 2)?;
    let scenario =
        ChoiceScenario::new(vec![base_offer.clone(), premium_offer.clone()], true)?;
    let probs = choice_probabilities(&attribute_params, &scenario)?;

    let wtp_report = wtp(params, &schema)?;
    let incremental_wtp = schema
        .indicator_names()
        .map(|(k, name)| {
            wtp_report.per_attribute_wtp[name]
                * (premium_offer.values()[k] - base_offer.values()[k])
        })
        .sum();

    Ok(PremiumShareReport {
        base_probability: probs[0],
        premium_probability: probs[1],
        outside_probability: probs[2],
        base_adopters: population_size * probs[0],
        premium_adopters: population_size * probs[1],
        incremental_wtp,
    })
}

//! Linear causal chains from technical indicators to latent constructs:
//! per-link least-squares fits, mean propagation into the utility model, and
//! per-path effect decomposition.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ParameterVector;
use crate::schema::AttributeSchema;

/// Pivot threshold, relative to the original diagonal, below which a Gram
/// column is declared linearly dependent.
const COLLINEARITY_TOL: f64 = 1e-10;

/// Ridge added to the normal equations for numerical stability.
const RIDGE: f64 = 1e-10;

/// An affine map from named inputs to named outputs, with per-output
/// residual noise scale from the fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearCausalLink {
    pub input_names: Vec<String>,
    pub output_names: Vec<String>,
    /// Row `o` holds the input weights of output `o`.
    pub weights: Vec<Vec<f64>>,
    pub intercepts: Vec<f64>,
    pub residual_stddev: Vec<f64>,
}

impl LinearCausalLink {
    pub fn new(
        input_names: Vec<String>,
        output_names: Vec<String>,
        weights: Vec<Vec<f64>>,
        intercepts: Vec<f64>,
        residual_stddev: Vec<f64>,
    ) -> Result<Self> {
        if weights.len() != output_names.len()
            || intercepts.len() != output_names.len()
            || residual_stddev.len() != output_names.len()
        {
            return Err(Error::input("link shape mismatch on the output side"));
        }
        for row in &weights {
            if row.len() != input_names.len() {
                return Err(Error::input("link shape mismatch on the input side"));
            }
            if row.iter().any(|w| !w.is_finite()) {
                return Err(Error::input("link weights must be finite"));
            }
        }
        if intercepts.iter().any(|b| !b.is_finite()) {
            return Err(Error::input("link intercepts must be finite"));
        }
        if residual_stddev.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::input("residual stddevs must be non-negative"));
        }
        Ok(Self { input_names, output_names, weights, intercepts, residual_stddev })
    }

    /// Identity pass-through over the given labels.
    pub fn identity(names: &[String]) -> Self {
        let n = names.len();
        let weights = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self {
            input_names: names.to_vec(),
            output_names: names.to_vec(),
            weights,
            intercepts: vec![0.0; n],
            residual_stddev: vec![0.0; n],
        }
    }

    /// Mean prediction: W x + b, residual noise excluded.
    pub fn apply(&self, inputs: &[f64]) -> Result<Vec<f64>> {
        if inputs.len() != self.input_names.len() {
            return Err(Error::input(format!(
                "link expects {} inputs, got {}",
                self.input_names.len(),
                inputs.len()
            )));
        }
        Ok(self
            .weights
            .iter()
            .zip(&self.intercepts)
            .map(|(row, b)| b + row.iter().zip(inputs).map(|(w, x)| w * x).sum::<f64>())
            .collect())
    }
}

/// Ordered links (indicators -> ... -> constructs) closed by a terminal
/// utility model over the final constructs plus price.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CausalChain {
    links: Vec<LinearCausalLink>,
    terminal_params: ParameterVector,
    terminal_schema: Arc<AttributeSchema>,
}

impl CausalChain {
    /// Builds a chain; the terminal schema is the last link's outputs plus a
    /// trailing `price` attribute.
    pub fn new(links: Vec<LinearCausalLink>, terminal_params: ParameterVector) -> Result<Self> {
        if links.is_empty() {
            return Err(Error::input("a causal chain needs at least one link"));
        }
        for pair in links.windows(2) {
            if pair[0].output_names != pair[1].input_names {
                return Err(Error::input(format!(
                    "adjacent links disagree: outputs {:?} vs inputs {:?}",
                    pair[0].output_names, pair[1].input_names
                )));
            }
        }
        let constructs = &links.last().unwrap().output_names;
        let mut names = constructs.clone();
        names.push("price".to_string());
        let terminal_schema = AttributeSchema::new("chain-terminal", names, constructs.len())?;
        if terminal_params.n_betas() != terminal_schema.len() {
            return Err(Error::schema(format!(
                "terminal parameters have {} betas; constructs + price need {}",
                terminal_params.n_betas(),
                terminal_schema.len()
            )));
        }
        Ok(Self { links, terminal_params, terminal_schema })
    }

    pub fn links(&self) -> &[LinearCausalLink] {
        &self.links
    }

    pub fn terminal_params(&self) -> &ParameterVector {
        &self.terminal_params
    }

    pub fn terminal_schema(&self) -> &Arc<AttributeSchema> {
        &self.terminal_schema
    }

    pub fn indicator_names(&self) -> &[String] {
        &self.links[0].input_names
    }

    /// Collapses all links into one affine map (weights, intercepts).
    pub fn compose(&self) -> (Vec<Vec<f64>>, Vec<f64>) {
        let first = &self.links[0];
        let mut weights = first.weights.clone();
        let mut intercepts = first.intercepts.clone();
        for link in &self.links[1..] {
            let rows = link.weights.len();
            let cols = weights[0].len();
            let mut new_weights = vec![vec![0.0; cols]; rows];
            let mut new_intercepts = vec![0.0; rows];
            for o in 0..rows {
                for (m, w_om) in link.weights[o].iter().enumerate() {
                    for c in 0..cols {
                        new_weights[o][c] += w_om * weights[m][c];
                    }
                    new_intercepts[o] += w_om * intercepts[m];
                }
                new_intercepts[o] += link.intercepts[o];
            }
            weights = new_weights;
            intercepts = new_intercepts;
        }
        (weights, intercepts)
    }
}

/// Ordinary least squares with an intercept, one regression per output
/// column. `inputs` and `outputs` are row-per-observation matrices.
pub fn fit_link(
    input_names: &[String],
    inputs: &[Vec<f64>],
    output_names: &[String],
    outputs: &[Vec<f64>],
) -> Result<LinearCausalLink> {
    let n = inputs.len();
    let p = input_names.len();
    let q = output_names.len();
    if n != outputs.len() {
        return Err(Error::input("inputs and outputs must have equal row counts"));
    }
    if n < p + 1 {
        return Err(Error::input(format!(
            "least squares needs at least {} rows for {p} inputs, got {n}",
            p + 1
        )));
    }
    if inputs.iter().any(|r| r.len() != p) || outputs.iter().any(|r| r.len() != q) {
        return Err(Error::input("ragged observation matrix"));
    }

    // Gram matrix of the intercept-augmented design.
    let d = p + 1;
    let mut gram = vec![vec![0.0; d]; d];
    for row in inputs {
        let mut aug = Vec::with_capacity(d);
        aug.push(1.0);
        aug.extend_from_slice(row);
        for i in 0..d {
            for j in 0..d {
                gram[i][j] += aug[i] * aug[j];
            }
        }
    }

    // Dependent-column scan: Cholesky with failed pivots zeroed out, which
    // names every column explained by its predecessors.
    let mut dependent = Vec::new();
    {
        let mut l = vec![vec![0.0; d]; d];
        let mut dead = vec![false; d];
        for i in 0..d {
            for j in 0..=i {
                if dead[j] {
                    continue;
                }
                let mut sum = gram[i][j];
                for k in 0..j {
                    sum -= l[i][k] * l[j][k];
                }
                if i == j {
                    if sum <= COLLINEARITY_TOL * gram[i][i].max(1e-300) {
                        dead[i] = true;
                        if i > 0 {
                            dependent.push(input_names[i - 1].clone());
                        }
                    } else {
                        l[i][j] = sum.sqrt();
                    }
                } else {
                    l[i][j] = sum / l[j][j];
                }
            }
        }
    }
    if !dependent.is_empty() {
        return Err(Error::Collinearity { columns: dependent });
    }

    // Ridge-stabilized normal equations, one solve per output.
    let mut ridged = crate::linalg::SquareMatrix::zeros(d);
    for i in 0..d {
        for j in 0..d {
            ridged.set(i, j, gram[i][j] + if i == j { RIDGE } else { 0.0 });
        }
    }
    let mut weights = vec![vec![0.0; p]; q];
    let mut intercepts = vec![0.0; q];
    let mut residual_stddev = vec![0.0; q];
    for o in 0..q {
        let mut rhs = vec![0.0; d];
        for (row, out) in inputs.iter().zip(outputs) {
            rhs[0] += out[o];
            for j in 0..p {
                rhs[j + 1] += row[j] * out[o];
            }
        }
        let coef = ridged.solve_spd(&rhs)?;
        intercepts[o] = coef[0];
        weights[o].copy_from_slice(&coef[1..]);

        let rss: f64 = inputs
            .iter()
            .zip(outputs)
            .map(|(row, out)| {
                let pred =
                    coef[0] + row.iter().zip(&coef[1..]).map(|(x, w)| x * w).sum::<f64>();
                (out[o] - pred).powi(2)
            })
            .sum();
        let dof = (n - d).max(1);
        residual_stddev[o] = (rss / dof as f64).sqrt();
    }

    LinearCausalLink::new(
        input_names.to_vec(),
        output_names.to_vec(),
        weights,
        intercepts,
        residual_stddev,
    )
}

/// Runs indicators through every link (mean predictions) and evaluates the
/// terminal utility at the resulting constructs and the given price.
pub fn propagate(chain: &CausalChain, indicators: &[f64], price: f64) -> Result<f64> {
    let mut x = indicators.to_vec();
    for link in chain.links() {
        x = link.apply(&x)?;
    }
    x.push(price);
    let betas = chain.terminal_params().betas();
    let constant = chain.terminal_params().alternative_constants()[0];
    Ok(constant + betas.iter().zip(&x).map(|(b, v)| b * v).sum::<f64>())
}

/// Marginal effect of one indicator on utility through one named construct
/// path, next to the all-paths total.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EffectDecomposition {
    pub indicator: String,
    pub path: Vec<String>,
    /// The traversed weight at each link, in order.
    pub per_link_effects: Vec<f64>,
    pub terminal_weight: f64,
    /// Product of the per-link effects and the terminal weight.
    pub path_effect: f64,
    /// Composed-map coefficient of the indicator: the sum over all paths.
    pub total_effect: f64,
}

/// Decomposes the effect of `indicator` along `path`, one construct label
/// per link.
pub fn explain_effect(
    chain: &CausalChain,
    indicator: &str,
    path: &[String],
) -> Result<EffectDecomposition> {
    let indicator_index = chain
        .indicator_names()
        .iter()
        .position(|n| n == indicator)
        .ok_or_else(|| Error::input(format!("unknown indicator `{indicator}`")))?;
    if path.len() != chain.links().len() {
        return Err(Error::input(format!(
            "path names {} constructs but the chain has {} links",
            path.len(),
            chain.links().len()
        )));
    }

    let mut per_link_effects = Vec::with_capacity(path.len());
    let mut from_index = indicator_index;
    for (link, label) in chain.links().iter().zip(path) {
        let to_index = link
            .output_names
            .iter()
            .position(|n| n == label)
            .ok_or_else(|| Error::input(format!("unknown construct `{label}` on its link")))?;
        per_link_effects.push(link.weights[to_index][from_index]);
        from_index = to_index;
    }
    let terminal_weight = chain.terminal_params().betas()[from_index];
    let path_effect: f64 = per_link_effects.iter().product::<f64>() * terminal_weight;

    let (composed, _) = chain.compose();
    let total_effect: f64 = composed
        .iter()
        .enumerate()
        .map(|(c, row)| chain.terminal_params().betas()[c] * row[indicator_index])
        .sum();

    Ok(EffectDecomposition {
        indicator: indicator.to_string(),
        path: path.to_vec(),
        per_link_effects,
        terminal_weight,
        path_effect,
        total_effect,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;

    fn names(list: &[&str]) -> Vec<String> {
        list.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn noiseless_fit_recovers_the_generating_map() {
        let mut rng = CounterRng::new(31);
        let w_true = [[0.7, -0.4, 0.2], [0.1, 0.9, -0.5]];
        let b_true = [0.3, -1.1];
        let inputs: Vec<Vec<f64>> = (0..200)
            .map(|_| (0..3).map(|_| rng.uniform_in(-2.0, 2.0)).collect())
            .collect();
        let outputs: Vec<Vec<f64>> = inputs
            .iter()
            .map(|x| {
                (0..2)
                    .map(|o| {
                        b_true[o] + w_true[o].iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
                    })
                    .collect()
            })
            .collect();
        let link =
            fit_link(&names(&["a", "b", "c"]), &inputs, &names(&["s", "t"]), &outputs).unwrap();
        for o in 0..2 {
            assert!((link.intercepts[o] - b_true[o]).abs() < 1e-8);
            assert!(link.residual_stddev[o] < 1e-8);
            for j in 0..3 {
                assert!((link.weights[o][j] - w_true[o][j]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn pure_noise_outputs_give_near_zero_weights() {
        let mut rng = CounterRng::new(17);
        let inputs: Vec<Vec<f64>> = (0..10_000)
            .map(|_| (0..2).map(|_| rng.uniform_in(-1.0, 1.0)).collect())
            .collect();
        let outputs: Vec<Vec<f64>> =
            (0..10_000).map(|_| vec![rng.normal()]).collect();
        let link =
            fit_link(&names(&["a", "b"]), &inputs, &names(&["y"]), &outputs).unwrap();
        for w in &link.weights[0] {
            assert!(w.abs() < 0.05, "weight {w}");
        }
    }

    #[test]
    fn duplicated_column_is_reported_as_collinear() {
        let mut rng = CounterRng::new(9);
        let inputs: Vec<Vec<f64>> = (0..50)
            .map(|_| {
                let x = rng.uniform_in(-1.0, 1.0);
                vec![x, rng.uniform_in(-1.0, 1.0), x]
            })
            .collect();
        let outputs: Vec<Vec<f64>> = (0..50).map(|_| vec![rng.uniform()]).collect();
        match fit_link(&names(&["a", "b", "a_copy"]), &inputs, &names(&["y"]), &outputs) {
            Err(Error::Collinearity { columns }) => assert_eq!(columns, vec!["a_copy"]),
            other => panic!("expected collinearity error, got {other:?}"),
        }
    }

    #[test]
    fn too_few_rows_is_an_input_error() {
        let inputs = vec![vec![1.0, 2.0]];
        let outputs = vec![vec![1.0]];
        assert!(fit_link(&names(&["a", "b"]), &inputs, &names(&["y"]), &outputs).is_err());
    }

    fn two_link_chain() -> CausalChain {
        let l1 = LinearCausalLink::new(
            names(&["x1", "x2"]),
            names(&["s1", "s2"]),
            vec![vec![0.5, 0.3], vec![-0.2, 0.8]],
            vec![0.1, -0.4],
            vec![0.0, 0.0],
        )
        .unwrap();
        let l2 = LinearCausalLink::new(
            names(&["s1", "s2"]),
            names(&["o1"]),
            vec![vec![0.9, -0.6]],
            vec![0.25],
            vec![0.0],
        )
        .unwrap();
        let terminal = ParameterVector::new(vec![1.2, -0.45], 1).unwrap();
        CausalChain::new(vec![l1, l2], terminal).unwrap()
    }

    #[test]
    fn identity_links_reduce_to_direct_utility() {
        let labels = names(&["x1", "x2"]);
        let chain = CausalChain::new(
            vec![LinearCausalLink::identity(&labels)],
            ParameterVector::new(vec![0.7, -0.2, -0.5], 1).unwrap(),
        )
        .unwrap();
        let utility = propagate(&chain, &[1.5, -0.8], 3.0).unwrap();
        let direct = 0.7 * 1.5 + (-0.2) * (-0.8) + (-0.5) * 3.0;
        assert!((utility - direct).abs() < 1e-12);
    }

    #[test]
    fn propagation_equals_the_composed_map() {
        let chain = two_link_chain();
        let (w, b) = chain.compose();
        let mut rng = CounterRng::new(12);
        for _ in 0..100 {
            let x = [rng.uniform_in(-3.0, 3.0), rng.uniform_in(-3.0, 3.0)];
            let price = rng.uniform_in(0.0, 10.0);
            let via_links = propagate(&chain, &x, price).unwrap();
            let construct = b[0] + w[0][0] * x[0] + w[0][1] * x[1];
            let direct = 1.2 * construct + (-0.45) * price;
            assert!((via_links - direct).abs() < 1e-10, "{via_links} vs {direct}");
        }
    }

    #[test]
    fn zero_terminal_weights_leave_the_price_term() {
        let labels = names(&["x1"]);
        let chain = CausalChain::new(
            vec![LinearCausalLink::identity(&labels)],
            ParameterVector::new(vec![0.0, -0.3], 1).unwrap(),
        )
        .unwrap();
        let utility = propagate(&chain, &[42.0], 2.0).unwrap();
        assert!((utility - (-0.6)).abs() < 1e-12);
    }

    #[test]
    fn grouping_links_differently_is_associative() {
        let chain = two_link_chain();
        let (w, b) = chain.compose();
        let merged = LinearCausalLink::new(
            names(&["x1", "x2"]),
            names(&["o1"]),
            w,
            b,
            vec![0.0],
        )
        .unwrap();
        let regrouped =
            CausalChain::new(vec![merged], chain.terminal_params().clone()).unwrap();
        let mut rng = CounterRng::new(3);
        for _ in 0..50 {
            let x = [rng.uniform_in(-2.0, 2.0), rng.uniform_in(-2.0, 2.0)];
            let price = rng.uniform_in(0.0, 5.0);
            let a = propagate(&chain, &x, price).unwrap();
            let c = propagate(&regrouped, &x, price).unwrap();
            assert!((a - c).abs() < 1e-12);
        }
    }

    #[test]
    fn single_path_effect_is_the_product() {
        let l1 = LinearCausalLink::new(
            names(&["x"]),
            names(&["s"]),
            vec![vec![0.5]],
            vec![0.0],
            vec![0.0],
        )
        .unwrap();
        let l2 = LinearCausalLink::new(
            names(&["s"]),
            names(&["o"]),
            vec![vec![0.8]],
            vec![0.0],
            vec![0.0],
        )
        .unwrap();
        let chain = CausalChain::new(
            vec![l1, l2],
            ParameterVector::new(vec![1.0, -0.1], 1).unwrap(),
        )
        .unwrap();
        let effect =
            explain_effect(&chain, "x", &names(&["s", "o"])).unwrap();
        assert!((effect.path_effect - 0.4).abs() < 1e-12);
        assert_eq!(effect.per_link_effects, vec![0.5, 0.8]);
    }

    #[test]
    fn path_effects_sum_to_the_composed_coefficient() {
        let chain = two_link_chain();
        // Both paths from x1: via s1 and via s2 (single terminal construct).
        let via_s1 = explain_effect(&chain, "x1", &names(&["s1", "o1"])).unwrap();
        let via_s2 = explain_effect(&chain, "x1", &names(&["s2", "o1"])).unwrap();
        let sum = via_s1.path_effect + via_s2.path_effect;
        assert!((sum - via_s1.total_effect).abs() < 1e-12);
    }

    #[test]
    fn zero_weight_on_a_path_zeroes_its_effect() {
        let l1 = LinearCausalLink::new(
            names(&["x"]),
            names(&["s"]),
            vec![vec![0.0]],
            vec![0.3],
            vec![0.0],
        )
        .unwrap();
        let chain = CausalChain::new(
            vec![l1],
            ParameterVector::new(vec![2.0, -0.5], 1).unwrap(),
        )
        .unwrap();
        let effect = explain_effect(&chain, "x", &names(&["s"])).unwrap();
        assert_eq!(effect.path_effect, 0.0);
    }

    #[test]
    fn unknown_labels_are_rejected() {
        let chain = two_link_chain();
        assert!(explain_effect(&chain, "nope", &names(&["s1", "o1"])).is_err());
        assert!(explain_effect(&chain, "x1", &names(&["s1", "nope"])).is_err());
    }
}

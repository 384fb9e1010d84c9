//! Mixed multinomial logit: normally distributed random coefficients,
//! estimated by simulated maximum likelihood over scrambled Halton draws.

use serde::{Deserialize, Serialize};

use super::halton::{halton, PRIMES};
use super::optimizer::{maximize, OptimConfig};
use super::{check_identification, fit_mnl, FitConfig};
use crate::error::{Error, Result};
use crate::exec;
use crate::model::{ChoiceDataset, ChoiceScenario, ParameterVector};
use crate::rng::{inverse_normal_cdf, CounterRng};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixedLogitConfig {
    pub seed: u64,
    /// Leading Halton points dropped before use.
    pub halton_burn: usize,
    /// Starting standard deviation for each random coefficient.
    pub initial_stddev: f64,
    pub optim: OptimConfig,
}

impl Default for MixedLogitConfig {
    fn default() -> Self {
        Self { seed: 0, halton_burn: 50, initial_stddev: 0.1, optim: OptimConfig::default() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixedLogitResult {
    /// Means of the coefficient distribution (plus alternative constants).
    pub mean_params: ParameterVector,
    /// Standard deviation per attribute coefficient; zero for coefficients
    /// held fixed.
    pub stddev_betas: Vec<f64>,
    pub draws_per_observation: usize,
    pub simulated_log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Standard-normal draws, laid out as `draws[(obs * n_draws + r) * k + dim]`.
///
/// Each random coefficient gets its own prime-base Halton sequence; every
/// observation consumes a distinct, contiguous slice of the sequence after
/// the burn-in, and a seeded Cranley-Patterson shift scrambles each
/// dimension.
fn normal_draws(n_obs: usize, n_draws: usize, k: usize, config: &MixedLogitConfig) -> Vec<f64> {
    let shifts: Vec<f64> = (0..k)
        .map(|dim| CounterRng::with_stream(config.seed, dim as u64).uniform())
        .collect();
    let indices: Vec<usize> = (0..n_obs).collect();
    let blocks = exec::ordered_map(&indices, |&i| {
        let mut block = Vec::with_capacity(n_draws * k);
        for r in 0..n_draws {
            let index = (config.halton_burn + i * n_draws + r + 1) as u64;
            for dim in 0..k {
                let h = halton(index, PRIMES[dim % PRIMES.len()]);
                let u = (h + shifts[dim]).fract().clamp(1e-15, 1.0 - 1e-15);
                block.push(inverse_normal_cdf(u));
            }
        }
        block
    });
    blocks.into_iter().flatten().collect()
}

/// Per-draw log-probability of the chosen alternative and, optionally, the
/// score with respect to `[betas..., constants[1..]]` at the drawn betas.
fn draw_log_prob(
    betas: &[f64],
    constants: &[f64],
    scenario: &ChoiceScenario,
    chosen: usize,
    mut score: Option<&mut [f64]>,
) -> f64 {
    let alts = scenario.alternatives();
    let n_inside = alts.len();
    let mut v: Vec<f64> = (0..n_inside)
        .map(|j| {
            constants[j]
                + alts[j].values().iter().zip(betas).map(|(x, b)| x * b).sum::<f64>()
        })
        .collect();
    if scenario.includes_outside_option() {
        v.push(0.0);
    }
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    if let Some(score) = &mut score {
        let n_betas = betas.len();
        for k in 0..n_betas {
            let mean_k: f64 = (0..n_inside).map(|j| exps[j] / z * alts[j].values()[k]).sum();
            let chosen_k = if chosen < n_inside { alts[chosen].values()[k] } else { 0.0 };
            score[k] = chosen_k - mean_k;
        }
        for c in 1..n_inside {
            let indicator = if chosen == c { 1.0 } else { 0.0 };
            score[n_betas + c - 1] = indicator - exps[c] / z;
        }
    }
    (v[chosen] - m) - z.ln()
}

struct SimulatedObjective<'a> {
    data: &'a ChoiceDataset,
    random_coefficients: &'a [usize],
    n_draws: usize,
    draws: Vec<f64>,
    n_betas: usize,
    n_constants: usize,
}

impl<'a> SimulatedObjective<'a> {
    fn new(
        data: &'a ChoiceDataset,
        random_coefficients: &'a [usize],
        n_draws: usize,
        config: &MixedLogitConfig,
    ) -> Self {
        let n_betas = data.schema().len();
        let n_constants = data.max_inside_alternatives().max(1);
        let draws = normal_draws(data.len(), n_draws, random_coefficients.len(), config);
        Self { data, random_coefficients, n_draws, draws, n_betas, n_constants }
    }

    fn theta_len(&self) -> usize {
        self.n_betas + self.n_constants - 1 + self.random_coefficients.len()
    }

    /// theta = [betas..., constants[1..], stddevs of the random subset].
    fn split_theta<'t>(&self, theta: &'t [f64]) -> (&'t [f64], &'t [f64], &'t [f64]) {
        let fixed = self.n_betas + self.n_constants - 1;
        let (mean_free, sigmas) = theta.split_at(fixed);
        let (betas, consts_tail) = mean_free.split_at(self.n_betas);
        (betas, consts_tail, sigmas)
    }

    /// Simulated log-likelihood and, when requested, its gradient.
    fn evaluate(&self, theta: &[f64], with_gradient: bool) -> (f64, Vec<f64>) {
        let (mean_betas, consts_tail, sigmas) = self.split_theta(theta);
        let mut constants = vec![0.0; self.n_constants];
        constants[1..].copy_from_slice(consts_tail);
        let n_free = self.n_betas + self.n_constants - 1;
        let n_rand = self.random_coefficients.len();
        let out_len = 1 + theta.len();
        let obs = self.data.observations();
        let indices: Vec<usize> = (0..obs.len()).collect();

        let acc = exec::sum_vectors(&indices, out_len, |&i, acc| {
            let o = &obs[i];
            let mut lps = Vec::with_capacity(self.n_draws);
            let mut scores = if with_gradient {
                Some(vec![0.0; self.n_draws * n_free])
            } else {
                None
            };
            let mut betas = mean_betas.to_vec();
            for r in 0..self.n_draws {
                let eta = &self.draws
                    [(i * self.n_draws + r) * n_rand..(i * self.n_draws + r + 1) * n_rand];
                for (slot, (&coef, e)) in
                    self.random_coefficients.iter().zip(eta).enumerate()
                {
                    betas[coef] = mean_betas[coef] + sigmas[slot] * e;
                }
                let score_slice = scores
                    .as_deref_mut()
                    .map(|s| &mut s[r * n_free..(r + 1) * n_free]);
                lps.push(draw_log_prob(
                    &betas,
                    &constants,
                    o.scenario(),
                    o.chosen_index(),
                    score_slice,
                ));
            }
            // ln SP = LSE over draws - ln R.
            let m = lps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let weights: Vec<f64> = lps.iter().map(|lp| (lp - m).exp()).collect();
            let z: f64 = weights.iter().sum();
            acc[0] += m + z.ln() - (self.n_draws as f64).ln();
            if let Some(scores) = &scores {
                for r in 0..self.n_draws {
                    let w = weights[r] / z;
                    let score = &scores[r * n_free..(r + 1) * n_free];
                    for (j, s) in score.iter().enumerate() {
                        acc[1 + j] += w * s;
                    }
                    let eta = &self.draws
                        [(i * self.n_draws + r) * n_rand..(i * self.n_draws + r + 1) * n_rand];
                    for (slot, &coef) in self.random_coefficients.iter().enumerate() {
                        acc[1 + n_free + slot] += w * score[coef] * eta[slot];
                    }
                }
            }
        });
        (acc[0], acc[1..].to_vec())
    }
}

fn validate(
    data: &ChoiceDataset,
    random_coefficients: &[usize],
    n_draws: usize,
) -> Result<()> {
    if n_draws < 1 {
        return Err(Error::input("mixed logit needs at least one draw per observation"));
    }
    let n_betas = data.schema().len();
    for &c in random_coefficients {
        if c >= n_betas {
            return Err(Error::input(format!(
                "random coefficient index {c} out of range for {n_betas} attributes"
            )));
        }
    }
    for (i, &c) in random_coefficients.iter().enumerate() {
        if random_coefficients[..i].contains(&c) {
            return Err(Error::input(format!("random coefficient {c} listed twice")));
        }
    }
    if random_coefficients.len() > PRIMES.len() {
        return Err(Error::input(format!(
            "at most {} random coefficients are supported",
            PRIMES.len()
        )));
    }
    Ok(())
}

/// Simulated log-likelihood at fixed means and standard deviations.
///
/// `stddevs` is indexed like the betas; only the entries listed in
/// `random_coefficients` are used. With all stddevs zero this reproduces the
/// plain MNL log-likelihood.
pub fn simulated_log_likelihood(
    data: &ChoiceDataset,
    mean_params: &ParameterVector,
    stddevs: &[f64],
    random_coefficients: &[usize],
    n_draws: usize,
    config: &MixedLogitConfig,
) -> Result<f64> {
    validate(data, random_coefficients, n_draws)?;
    if stddevs.len() != mean_params.n_betas() {
        return Err(Error::input("stddev vector must be indexed like the betas"));
    }
    if mean_params.n_betas() != data.schema().len()
        || mean_params.n_constants() < data.max_inside_alternatives()
    {
        return Err(Error::schema("mean parameters do not align with the dataset"));
    }
    let objective = SimulatedObjective::new(data, random_coefficients, n_draws, config);
    let mut theta = mean_params.to_free();
    theta.extend(random_coefficients.iter().map(|&c| stddevs[c]));
    Ok(objective.evaluate(&theta, false).0)
}

/// Fits a mixed logit with independent normal heterogeneity on the listed
/// coefficients, by BFGS on the simulated log-likelihood. Deterministic for
/// a fixed configuration.
pub fn fit_mixed_logit(
    data: &ChoiceDataset,
    random_coefficients: &[usize],
    n_draws: usize,
    config: &MixedLogitConfig,
) -> Result<MixedLogitResult> {
    validate(data, random_coefficients, n_draws)?;
    check_identification(data)?;
    let base = fit_mnl(data, &FitConfig { optim: config.optim.clone() })?;
    let objective = SimulatedObjective::new(data, random_coefficients, n_draws, config);

    let mut names = base.params.free_names(data.schema());
    for &c in random_coefficients {
        names.push(format!("stddev_{}", data.schema().attribute_names()[c]));
    }

    let mut theta0 = base.params.to_free();
    theta0.extend(std::iter::repeat_n(config.initial_stddev, random_coefficients.len()));
    debug_assert_eq!(theta0.len(), objective.theta_len());

    let f = |theta: &[f64]| -> Result<(f64, Vec<f64>)> {
        let (value, gradient) = objective.evaluate(theta, true);
        Ok((value, gradient))
    };
    let outcome = maximize(f, theta0, &names, &config.optim)?;

    let n_betas = data.schema().len();
    let n_constants = data.max_inside_alternatives().max(1);
    let fixed = n_betas + n_constants - 1;
    let mean_params = ParameterVector::from_free(&outcome.x[..fixed], n_betas, n_constants)?;
    let mut stddev_betas = vec![0.0; n_betas];
    for (slot, &c) in random_coefficients.iter().enumerate() {
        // The likelihood depends on sigma only through |sigma|.
        stddev_betas[c] = outcome.x[fixed + slot].abs();
    }

    Ok(MixedLogitResult {
        mean_params,
        stddev_betas,
        draws_per_observation: n_draws,
        simulated_log_likelihood: outcome.value,
        iterations: outcome.iterations,
        converged: outcome.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logit;
    use crate::model::{AttributeVector, ChoiceObservation, ChoiceScenario};
    use crate::schema::AttributeSchema;
    use std::sync::Arc;

    fn schema2() -> Arc<AttributeSchema> {
        AttributeSchema::new("t", vec!["quality".into(), "price".into()], 1).unwrap()
    }

    fn fixed_coefficient_data(n: usize, seed: u64) -> ChoiceDataset {
        let schema = schema2();
        let truth = ParameterVector::new(vec![0.7, -0.5], 1).unwrap();
        let mut rng = CounterRng::new(seed);
        let obs: Vec<ChoiceObservation> = (0..n)
            .map(|_| {
                let alt = AttributeVector::new(
                    schema.clone(),
                    vec![rng.uniform_in(-1.0, 1.0), rng.uniform_in(0.0, 3.0)],
                )
                .unwrap();
                let scen = ChoiceScenario::new(vec![alt], true).unwrap();
                let chosen = logit::simulate_choice(&truth, &scen, &mut rng).unwrap();
                ChoiceObservation::new(scen, chosen).unwrap()
            })
            .collect();
        ChoiceDataset::new(obs).unwrap()
    }

    #[test]
    fn zero_draws_is_an_input_error() {
        let data = fixed_coefficient_data(30, 1);
        assert!(matches!(
            fit_mixed_logit(&data, &[1], 0, &MixedLogitConfig::default()),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn zero_stddev_reproduces_plain_mnl() {
        let data = fixed_coefficient_data(400, 3);
        let fit = fit_mnl(&data, &FitConfig::default()).unwrap();
        let sll = simulated_log_likelihood(
            &data,
            &fit.params,
            &[0.0, 0.0],
            &[1],
            64,
            &MixedLogitConfig::default(),
        )
        .unwrap();
        assert!((sll - fit.log_likelihood).abs() < 1e-10, "{sll} vs {}", fit.log_likelihood);
    }

    #[test]
    fn simulation_noise_decays_with_draws() {
        let data = fixed_coefficient_data(500, 9);
        let params = ParameterVector::new(vec![0.7, -0.5], 1).unwrap();
        let config = MixedLogitConfig::default();
        let sll_100 =
            simulated_log_likelihood(&data, &params, &[0.0, 0.2], &[1], 100, &config).unwrap();
        let sll_400 =
            simulated_log_likelihood(&data, &params, &[0.0, 0.2], &[1], 400, &config).unwrap();
        assert!(
            ((sll_100 - sll_400) / sll_400).abs() < 1e-3,
            "R=100: {sll_100}, R=400: {sll_400}"
        );
    }

    #[test]
    fn simulated_gradient_matches_finite_differences() {
        let data = fixed_coefficient_data(120, 17);
        let objective = SimulatedObjective::new(&data, &[1], 32, &MixedLogitConfig::default());
        let theta = vec![0.4, -0.3, 0.15];
        let (_, analytic) = objective.evaluate(&theta, true);
        for i in 0..theta.len() {
            let h = 1e-6;
            let mut plus = theta.clone();
            plus[i] += h;
            let mut minus = theta.clone();
            minus[i] -= h;
            let fd =
                (objective.evaluate(&plus, false).0 - objective.evaluate(&minus, false).0)
                    / (2.0 * h);
            assert!(
                (analytic[i] - fd).abs() / fd.abs().max(1.0) < 1e-5,
                "theta[{i}]: analytic {} vs fd {fd}",
                analytic[i]
            );
        }
    }

    #[test]
    fn fit_is_deterministic() {
        let data = fixed_coefficient_data(300, 21);
        let a = fit_mixed_logit(&data, &[1], 32, &MixedLogitConfig::default()).unwrap();
        let b = fit_mixed_logit(&data, &[1], 32, &MixedLogitConfig::default()).unwrap();
        assert_eq!(a.mean_params.betas(), b.mean_params.betas());
        assert_eq!(a.stddev_betas, b.stddev_betas);
        assert_eq!(
            a.simulated_log_likelihood.to_bits(),
            b.simulated_log_likelihood.to_bits()
        );
    }
}

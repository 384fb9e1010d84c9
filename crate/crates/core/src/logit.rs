//! Linear systematic utility, logit choice probabilities, likelihood,
//! analytic derivatives, and seeded choice simulation.
//!
//! The likelihood and its derivatives reduce over observations in fixed
//! block order (see [`crate::exec`]), so results are bit-identical for any
//! worker count.

use crate::error::{Error, Result};
use crate::exec;
use crate::linalg::{dot, SquareMatrix};
use crate::model::{AttributeVector, ChoiceDataset, ChoiceScenario, ParameterVector};
use crate::rng::CounterRng;

/// Step used for finite-difference cross-checks of analytic derivatives.
pub const FD_STEP: f64 = 1e-5;

/// Systematic utility of one alternative: its constant plus the linear
/// attribute index.
pub fn systematic_utility(
    params: &ParameterVector,
    alt: &AttributeVector,
    alt_index: usize,
) -> Result<f64> {
    if params.n_betas() != alt.values().len() {
        return Err(Error::schema(format!(
            "{} betas vs {} attribute values",
            params.n_betas(),
            alt.values().len()
        )));
    }
    if alt_index >= params.n_constants() {
        return Err(Error::schema(format!(
            "alternative index {alt_index} out of range for {} alternative constants",
            params.n_constants()
        )));
    }
    Ok(params.alternative_constants()[alt_index] + dot(params.betas(), alt.values()))
}

/// Checks that `params` can score every alternative of `scenario`.
fn check_alignment(params: &ParameterVector, scenario: &ChoiceScenario) -> Result<()> {
    if params.n_betas() != scenario.schema().len() {
        return Err(Error::schema(format!(
            "{} betas vs schema `{}` with {} attributes",
            params.n_betas(),
            scenario.schema().id(),
            scenario.schema().len()
        )));
    }
    if scenario.alternatives().len() > params.n_constants() {
        return Err(Error::schema(format!(
            "scenario has {} alternatives but only {} alternative constants are provided",
            scenario.alternatives().len(),
            params.n_constants()
        )));
    }
    Ok(())
}

/// Systematic utilities over the effective alternative list; the outside
/// option (last, when present) is fixed at zero.
pub fn effective_utilities(params: &ParameterVector, scenario: &ChoiceScenario) -> Result<Vec<f64>> {
    check_alignment(params, scenario)?;
    Ok(utilities_unchecked(params, scenario))
}

fn utilities_unchecked(params: &ParameterVector, scenario: &ChoiceScenario) -> Vec<f64> {
    let mut v: Vec<f64> = scenario
        .alternatives()
        .iter()
        .enumerate()
        .map(|(i, alt)| params.alternative_constants()[i] + dot(params.betas(), alt.values()))
        .collect();
    if scenario.includes_outside_option() {
        v.push(0.0);
    }
    v
}

/// Runs `f` on the effective utilities, buffered on the stack for the usual
/// small scenarios. The likelihood loops call this once per observation per
/// evaluation, so it must not allocate.
#[inline]
fn with_utilities<R>(
    params: &ParameterVector,
    scenario: &ChoiceScenario,
    f: impl FnOnce(&[f64]) -> R,
) -> R {
    let n = scenario.n_effective();
    let fill = |buf: &mut [f64]| {
        for (i, alt) in scenario.alternatives().iter().enumerate() {
            buf[i] = params.alternative_constants()[i] + dot(params.betas(), alt.values());
        }
        if scenario.includes_outside_option() {
            buf[n - 1] = 0.0;
        }
    };
    if n <= 8 {
        let mut buf = [0.0f64; 8];
        fill(&mut buf[..n]);
        f(&buf[..n])
    } else {
        let mut buf = vec![0.0f64; n];
        fill(&mut buf);
        f(&buf)
    }
}

/// Log choice probability of `chosen`, allocation-free.
#[inline]
pub(crate) fn log_prob_chosen(
    params: &ParameterVector,
    scenario: &ChoiceScenario,
    chosen: usize,
) -> f64 {
    with_utilities(params, scenario, |v| log_prob(v, chosen))
}

/// One observation's log-likelihood contribution: the log choice probability
/// of the chosen alternative.
pub fn observation_log_likelihood(
    params: &ParameterVector,
    scenario: &ChoiceScenario,
    chosen: usize,
) -> Result<f64> {
    check_alignment(params, scenario)?;
    if chosen >= scenario.n_effective() {
        return Err(Error::input(format!(
            "chosen index {chosen} out of range for {} effective alternatives",
            scenario.n_effective()
        )));
    }
    Ok(log_prob_chosen(params, scenario, chosen))
}

/// Max-shifted softmax. Entries are floored at the smallest positive double
/// so extreme utility gaps never produce exact zeros.
fn softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.iter().map(|e| (e / z).max(f64::MIN_POSITIVE)).collect()
}

/// Log-probability of alternative `chosen` without forming the probability.
fn log_prob(v: &[f64], chosen: usize) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = v.iter().map(|x| (x - m).exp()).sum();
    (v[chosen] - m) - z.ln()
}

/// Logit choice probabilities over the effective alternatives.
pub fn choice_probabilities(
    params: &ParameterVector,
    scenario: &ChoiceScenario,
) -> Result<Vec<f64>> {
    Ok(softmax(&effective_utilities(params, scenario)?))
}

fn check_dataset(params: &ParameterVector, data: &ChoiceDataset) -> Result<()> {
    if data.is_empty() {
        return Err(Error::input("dataset is empty"));
    }
    if params.n_betas() != data.schema().len() {
        return Err(Error::schema(format!(
            "{} betas vs schema `{}` with {} attributes",
            params.n_betas(),
            data.schema().id(),
            data.schema().len()
        )));
    }
    if data.max_inside_alternatives() > params.n_constants() {
        return Err(Error::schema(format!(
            "dataset has scenarios with {} alternatives but only {} alternative constants are provided",
            data.max_inside_alternatives(),
            params.n_constants()
        )));
    }
    Ok(())
}

/// Sum of log choice probabilities of the chosen alternatives.
pub fn log_likelihood(params: &ParameterVector, data: &ChoiceDataset) -> Result<f64> {
    log_likelihood_weighted(params, data, None)
}

/// Observation-weighted log-likelihood; `None` weights mean all ones.
pub fn log_likelihood_weighted(
    params: &ParameterVector,
    data: &ChoiceDataset,
    weights: Option<&[f64]>,
) -> Result<f64> {
    check_dataset(params, data)?;
    if let Some(w) = weights {
        if w.len() != data.len() {
            return Err(Error::input("weight vector length must match the dataset"));
        }
    }
    let obs = data.observations();
    Ok(match weights {
        None => exec::sum_ordered(obs, |o| {
            log_prob_chosen(params, o.scenario(), o.chosen_index())
        }),
        Some(w) => {
            let indexed: Vec<usize> = (0..obs.len()).collect();
            exec::sum_ordered(&indexed, |&i| {
                w[i] * log_prob_chosen(params, obs[i].scenario(), obs[i].chosen_index())
            })
        }
    })
}

/// Adds one observation's score contribution over the free parameters
/// `[betas..., constants[1..]]` into `acc[1..]`, and the weighted log
/// probability of the chosen alternative into `acc[0]`. Allocation-free.
fn accumulate_log_prob_and_score(
    params: &ParameterVector,
    scenario: &ChoiceScenario,
    chosen: usize,
    weight: f64,
    acc: &mut [f64],
) {
    let n_betas = params.n_betas();
    let alts = scenario.alternatives();
    with_utilities(params, scenario, |v| {
        let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = v.iter().map(|x| (x - m).exp()).sum();
        acc[0] += weight * ((v[chosen] - m) - z.ln());
        for (j, (alt, vj)) in alts.iter().zip(v).enumerate() {
            let p = (vj - m).exp() / z;
            for (k, x) in alt.values().iter().enumerate() {
                acc[1 + k] -= weight * p * x;
            }
            if j >= 1 {
                acc[1 + n_betas + j - 1] -= weight * p;
            }
        }
        if chosen < alts.len() {
            for (k, x) in alts[chosen].values().iter().enumerate() {
                acc[1 + k] += weight * x;
            }
            if chosen >= 1 {
                acc[1 + n_betas + chosen - 1] += weight;
            }
        }
    });
}

/// Log-likelihood and its gradient in one pass over the data; the workhorse
/// behind every estimator's objective.
pub fn log_likelihood_with_gradient_weighted(
    params: &ParameterVector,
    data: &ChoiceDataset,
    weights: Option<&[f64]>,
) -> Result<(f64, Vec<f64>)> {
    check_dataset(params, data)?;
    if let Some(w) = weights {
        if w.len() != data.len() {
            return Err(Error::Input("weight vector length must match the dataset".into()));
        }
    }
    let obs = data.observations();
    let indexed: Vec<usize> = (0..obs.len()).collect();
    let packed = exec::sum_vectors(&indexed, 1 + params.free_len(), |&i, acc| {
        let w = weights.map_or(1.0, |w| w[i]);
        accumulate_log_prob_and_score(params, obs[i].scenario(), obs[i].chosen_index(), w, acc);
    });
    Ok((packed[0], packed[1..].to_vec()))
}

/// Analytic gradient of the log-likelihood with respect to the free
/// parameters `[betas..., constants[1..]]`.
pub fn log_likelihood_gradient(params: &ParameterVector, data: &ChoiceDataset) -> Result<Vec<f64>> {
    log_likelihood_gradient_weighted(params, data, None)
}

pub fn log_likelihood_gradient_weighted(
    params: &ParameterVector,
    data: &ChoiceDataset,
    weights: Option<&[f64]>,
) -> Result<Vec<f64>> {
    Ok(log_likelihood_with_gradient_weighted(params, data, weights)?.1)
}

/// Free-parameter design vector of effective alternative `j`: attribute
/// values for inside alternatives (zeros for the outside option) plus the
/// one-hot encoding of its estimable constant.
fn design_vector(params: &ParameterVector, scenario: &ChoiceScenario, j: usize) -> Vec<f64> {
    let n_betas = params.n_betas();
    let mut z = vec![0.0; params.free_len()];
    if j < scenario.alternatives().len() {
        z[..n_betas].copy_from_slice(scenario.alternatives()[j].values());
        if j >= 1 {
            z[n_betas + j - 1] = 1.0;
        }
    }
    z
}

/// Analytic Hessian of the log-likelihood over the free parameters
/// (negative semidefinite).
pub fn log_likelihood_hessian(params: &ParameterVector, data: &ChoiceDataset) -> Result<SquareMatrix> {
    log_likelihood_hessian_weighted(params, data, None)
}

pub(crate) fn log_likelihood_hessian_weighted(
    params: &ParameterVector,
    data: &ChoiceDataset,
    weights: Option<&[f64]>,
) -> Result<SquareMatrix> {
    check_dataset(params, data)?;
    let obs = data.observations();
    let f = params.free_len();
    let indexed: Vec<usize> = (0..obs.len()).collect();
    let flat = exec::sum_vectors(&indexed, f * f, |&i, acc| {
        let scenario = obs[i].scenario();
        let w = weights.map_or(1.0, |w| w[i]);
        let probs = softmax(&utilities_unchecked(params, scenario));
        let designs: Vec<Vec<f64>> =
            (0..scenario.n_effective()).map(|j| design_vector(params, scenario, j)).collect();
        let mut mean = vec![0.0; f];
        for (z, p) in designs.iter().zip(&probs) {
            for (m, zv) in mean.iter_mut().zip(z) {
                *m += p * zv;
            }
        }
        // -(sum_j p_j z_j z_j' - mean mean')
        for (z, p) in designs.iter().zip(&probs) {
            for a in 0..f {
                for b in 0..f {
                    acc[a * f + b] -= w * p * z[a] * z[b];
                }
            }
        }
        for a in 0..f {
            for b in 0..f {
                acc[a * f + b] += w * mean[a] * mean[b];
            }
        }
    });
    let mut h = SquareMatrix::zeros(f);
    for a in 0..f {
        for b in 0..f {
            h.set(a, b, flat[a * f + b]);
        }
    }
    Ok(h)
}

/// Hessian by central differences of the analytic gradient; the independent
/// cross-check for [`log_likelihood_hessian`].
pub fn log_likelihood_hessian_fd(params: &ParameterVector, data: &ChoiceDataset) -> Result<SquareMatrix> {
    check_dataset(params, data)?;
    let f = params.free_len();
    let n_betas = params.n_betas();
    let n_constants = params.n_constants();
    let base = params.to_free();
    let mut h = SquareMatrix::zeros(f);
    for i in 0..f {
        let mut plus = base.clone();
        plus[i] += FD_STEP;
        let mut minus = base.clone();
        minus[i] -= FD_STEP;
        let g_plus = log_likelihood_gradient(
            &ParameterVector::from_free(&plus, n_betas, n_constants)?,
            data,
        )?;
        let g_minus = log_likelihood_gradient(
            &ParameterVector::from_free(&minus, n_betas, n_constants)?,
            data,
        )?;
        for j in 0..f {
            h.set(i, j, (g_plus[j] - g_minus[j]) / (2.0 * FD_STEP));
        }
    }
    // Symmetrize the finite-difference noise away.
    let mut sym = SquareMatrix::zeros(f);
    for i in 0..f {
        for j in 0..f {
            sym.set(i, j, 0.5 * (h.get(i, j) + h.get(j, i)));
        }
    }
    Ok(sym)
}

/// Draws a choice: argmax of systematic utility plus independent standard
/// Gumbel noise per effective alternative.
pub fn simulate_choice(
    params: &ParameterVector,
    scenario: &ChoiceScenario,
    rng: &mut CounterRng,
) -> Result<usize> {
    let v = effective_utilities(params, scenario)?;
    let mut best = 0;
    let mut best_u = f64::NEG_INFINITY;
    for (i, vi) in v.iter().enumerate() {
        let u = vi + rng.gumbel();
        if u > best_u {
            best_u = u;
            best = i;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::AttributeSchema;
    use std::sync::Arc;

    /// Schema whose first attribute carries an arbitrary utility level and
    /// whose price slot is parked at zero, so tests can pin V directly.
    fn utility_schema() -> Arc<AttributeSchema> {
        AttributeSchema::new("u", vec!["level".into(), "price".into()], 1).unwrap()
    }

    fn scenario_from_utilities(levels: &[f64], outside: bool) -> ChoiceScenario {
        let schema = utility_schema();
        let alts = levels
            .iter()
            .map(|&v| AttributeVector::new(schema.clone(), vec![v, 0.0]).unwrap())
            .collect();
        ChoiceScenario::new(alts, outside).unwrap()
    }

    fn unit_params(n_alts: usize) -> ParameterVector {
        ParameterVector::new(vec![1.0, 0.0], n_alts).unwrap()
    }

    #[test]
    fn utility_zero_weights() {
        let schema = utility_schema();
        let alt = AttributeVector::new(schema, vec![3.2, 1.5]).unwrap();
        let p = ParameterVector::new(vec![0.0, 0.0], 1).unwrap();
        assert_eq!(systematic_utility(&p, &alt, 0).unwrap(), 0.0);
    }

    #[test]
    fn utility_cancelling_dot_product() {
        let schema = utility_schema();
        let alt = AttributeVector::new(schema, vec![2.0, 4.0]).unwrap();
        let p = ParameterVector::new(vec![1.0, -0.5], 1).unwrap();
        assert_eq!(systematic_utility(&p, &alt, 0).unwrap(), 0.0);
    }

    #[test]
    fn utility_with_constant() {
        let schema = utility_schema();
        let alt = AttributeVector::new(schema, vec![1.0, 10.0]).unwrap();
        let p =
            ParameterVector::with_constants(vec![0.8, -0.3], vec![0.0, 0.5]).unwrap();
        let got = systematic_utility(&p, &alt, 1).unwrap();
        // Hand dot product: 0.8*1 - 0.3*10 + 0.5
        let oracle = 0.8 * 1.0 + (-0.3) * 10.0 + 0.5;
        assert!((got - oracle).abs() < 1e-15);
        assert!((got - (-1.7)).abs() < 1e-12);
    }

    #[test]
    fn utility_length_mismatch_is_schema_error() {
        let schema = utility_schema();
        let alt = AttributeVector::new(schema, vec![1.0, 0.0]).unwrap();
        let p = ParameterVector::new(vec![1.0], 1).unwrap();
        assert!(matches!(systematic_utility(&p, &alt, 0), Err(Error::Schema(_))));
    }

    #[test]
    fn equal_utilities_split_evenly() {
        let scen = scenario_from_utilities(&[0.0, 0.0, 0.0], false);
        let p = unit_params(3);
        let probs = choice_probabilities(&p, &scen).unwrap();
        for q in &probs {
            assert!((q - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn binary_closed_form() {
        let scen = scenario_from_utilities(&[1.0, 0.0], false);
        let probs = choice_probabilities(&unit_params(2), &scen).unwrap();
        // e/(1+e)
        assert!((probs[0] - 0.731_059).abs() < 1e-6);
        assert!((probs[1] - 0.268_941).abs() < 1e-6);
    }

    #[test]
    fn huge_utilities_do_not_overflow() {
        let scen = scenario_from_utilities(&[710.0, 709.0], false);
        let probs = choice_probabilities(&unit_params(2), &scen).unwrap();
        assert!((probs[0] - 0.731_059).abs() < 1e-6);
        assert!((probs[1] - 0.268_941).abs() < 1e-6);
        assert!(probs.iter().all(|p| p.is_finite()));
    }

    #[test]
    fn probabilities_positive_and_normalized_at_extremes() {
        for &(a, b) in &[(700.0, -700.0), (-700.0, 700.0), (700.0, 699.0), (0.0, 0.0)] {
            let scen = scenario_from_utilities(&[a, b], false);
            let probs = choice_probabilities(&unit_params(2), &scen).unwrap();
            assert!(probs.iter().all(|p| *p > 0.0), "V=({a},{b}): {probs:?}");
            assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    fn binary_obs(v: &[f64], chosen: usize) -> ChoiceObservationPair {
        ChoiceObservationPair { levels: v.to_vec(), chosen }
    }

    struct ChoiceObservationPair {
        levels: Vec<f64>,
        chosen: usize,
    }

    fn dataset(pairs: &[ChoiceObservationPair]) -> ChoiceDataset {
        let obs = pairs
            .iter()
            .map(|p| {
                crate::model::ChoiceObservation::new(
                    scenario_from_utilities(&p.levels, false),
                    p.chosen,
                )
                .unwrap()
            })
            .collect();
        ChoiceDataset::new(obs).unwrap()
    }

    #[test]
    fn log_likelihood_binary_half() {
        let data = dataset(&[binary_obs(&[0.0, 0.0], 0)]);
        let ll = log_likelihood(&unit_params(2), &data).unwrap();
        assert!((ll - 0.5f64.ln()).abs() < 1e-12);

        let data2 = dataset(&[binary_obs(&[0.0, 0.0], 0), binary_obs(&[0.0, 0.0], 1)]);
        let ll2 = log_likelihood(&unit_params(2), &data2).unwrap();
        assert!((ll2 - (-1.386_294_361_119_890_6)).abs() < 1e-12);
    }

    #[test]
    fn log_likelihood_matches_product_oracle() {
        let mut rng = CounterRng::new(77);
        let pairs: Vec<ChoiceObservationPair> = (0..50)
            .map(|_| {
                let levels = vec![rng.uniform_in(-2.0, 2.0), rng.uniform_in(-2.0, 2.0)];
                let chosen = rng.below(2);
                binary_obs(&levels, chosen)
            })
            .collect();
        let data = dataset(&pairs);
        let params = ParameterVector::new(vec![rng.uniform_in(-1.0, 1.0), 0.0], 2).unwrap();

        let ll = log_likelihood(&params, &data).unwrap();
        // Independent route: product of the chosen probabilities, then ln.
        let mut product = 1.0;
        for o in data.observations() {
            let probs = choice_probabilities(&params, o.scenario()).unwrap();
            product *= probs[o.chosen_index()];
        }
        assert!((ll - product.ln()).abs() < 1e-10);
    }

    #[test]
    fn log_likelihood_never_positive() {
        let mut rng = CounterRng::new(3);
        for _ in 0..20 {
            let pairs: Vec<ChoiceObservationPair> = (0..10)
                .map(|_| binary_obs(&[rng.uniform_in(-5.0, 5.0), 0.0], rng.below(2)))
                .collect();
            let data = dataset(&pairs);
            let params = ParameterVector::new(vec![rng.uniform_in(-2.0, 2.0), 0.0], 2).unwrap();
            assert!(log_likelihood(&params, &data).unwrap() <= 0.0);
        }
    }

    #[test]
    fn uniform_utilities_give_minus_n_ln_j() {
        let pairs: Vec<ChoiceObservationPair> =
            (0..7).map(|i| binary_obs(&[0.0, 0.0, 0.0], i % 3)).collect();
        let data = dataset(&pairs);
        let ll = log_likelihood(&unit_params(3), &data).unwrap();
        assert!((ll - (-(7.0) * 3.0f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn gradient_hand_case_binary_zero_beta() {
        // Single observation, single varying attribute, beta = 0:
        // gradient = x_chosen - 0.5 (x_1 + x_2)
        let data = dataset(&[binary_obs(&[2.0, -1.0], 0)]);
        let params = ParameterVector::new(vec![0.0, 0.0], 2).unwrap();
        let g = log_likelihood_gradient(&params, &data).unwrap();
        let oracle = 2.0 - 0.5 * (2.0 + (-1.0));
        assert!((g[0] - oracle).abs() < 1e-14);
    }

    fn fd_gradient(params: &ParameterVector, data: &ChoiceDataset) -> Vec<f64> {
        let base = params.to_free();
        let (nb, nc) = (params.n_betas(), params.n_constants());
        (0..base.len())
            .map(|i| {
                let mut plus = base.clone();
                plus[i] += FD_STEP;
                let mut minus = base.clone();
                minus[i] -= FD_STEP;
                let lp = log_likelihood(
                    &ParameterVector::from_free(&plus, nb, nc).unwrap(),
                    data,
                )
                .unwrap();
                let lm = log_likelihood(
                    &ParameterVector::from_free(&minus, nb, nc).unwrap(),
                    data,
                )
                .unwrap();
                (lp - lm) / (2.0 * FD_STEP)
            })
            .collect()
    }

    #[test]
    fn gradient_matches_finite_differences_with_constants() {
        let schema = utility_schema();
        let mut rng = CounterRng::new(41);
        let obs: Vec<crate::model::ChoiceObservation> = (0..40)
            .map(|_| {
                let alts: Vec<AttributeVector> = (0..3)
                    .map(|_| {
                        AttributeVector::new(
                            schema.clone(),
                            vec![rng.uniform_in(-1.5, 1.5), rng.uniform_in(0.0, 2.0)],
                        )
                        .unwrap()
                    })
                    .collect();
                let scen = ChoiceScenario::new(alts, true).unwrap();
                crate::model::ChoiceObservation::new(scen, rng.below(4)).unwrap()
            })
            .collect();
        let data = ChoiceDataset::new(obs).unwrap();
        let params = ParameterVector::with_constants(
            vec![0.4, -0.7],
            vec![0.0, 0.3, -0.2],
        )
        .unwrap();

        let analytic = log_likelihood_gradient(&params, &data).unwrap();
        let numeric = fd_gradient(&params, &data);
        for (a, n) in analytic.iter().zip(&numeric) {
            let denom = n.abs().max(1.0);
            assert!((a - n).abs() / denom < 1e-6, "analytic {a} vs fd {n}");
        }
    }

    #[test]
    fn analytic_hessian_matches_fd_hessian() {
        let data = dataset(&[
            binary_obs(&[1.0, -0.5], 0),
            binary_obs(&[-0.2, 0.8], 1),
            binary_obs(&[0.3, 0.1], 0),
        ]);
        let params = ParameterVector::new(vec![0.3, 0.0], 2).unwrap();
        let ha = log_likelihood_hessian(&params, &data).unwrap();
        let hf = log_likelihood_hessian_fd(&params, &data).unwrap();
        for i in 0..ha.dim() {
            for j in 0..ha.dim() {
                let (a, b) = (ha.get(i, j), hf.get(i, j));
                assert!((a - b).abs() < 1e-6 * b.abs().max(1.0), "H[{i}][{j}]: {a} vs {b}");
            }
        }
    }

    #[test]
    fn translation_invariance() {
        // Adding a constant to all utilities leaves probabilities unchanged.
        let mut rng = CounterRng::new(8);
        for _ in 0..200 {
            let base: Vec<f64> = (0..3).map(|_| rng.uniform_in(-5.0, 5.0)).collect();
            let shift = rng.uniform_in(-600.0, 600.0);
            let shifted: Vec<f64> = base.iter().map(|v| v + shift).collect();
            let p1 = choice_probabilities(&unit_params(3), &scenario_from_utilities(&base, false))
                .unwrap();
            let p2 =
                choice_probabilities(&unit_params(3), &scenario_from_utilities(&shifted, false))
                    .unwrap();
            for (a, b) in p1.iter().zip(&p2) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn simulation_is_deterministic() {
        let scen = scenario_from_utilities(&[0.4, -0.1, 0.2], false);
        let p = unit_params(3);
        let a = simulate_choice(&p, &scen, &mut CounterRng::new(123)).unwrap();
        let b = simulate_choice(&p, &scen, &mut CounterRng::new(123)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn lopsided_utilities_dominate() {
        let scen = scenario_from_utilities(&[20.0, 0.0], false);
        let p = unit_params(2);
        let mut rng = CounterRng::new(5);
        let wins = (0..10_000)
            .filter(|_| simulate_choice(&p, &scen, &mut rng).unwrap() == 0)
            .count();
        assert!(wins as f64 / 10_000.0 >= 0.999, "win rate {}", wins);
    }

    #[test]
    fn even_utilities_split_half() {
        let scen = scenario_from_utilities(&[0.0, 0.0], false);
        let p = unit_params(2);
        let mut rng = CounterRng::new(6);
        let wins = (0..10_000)
            .filter(|_| simulate_choice(&p, &scen, &mut rng).unwrap() == 0)
            .count();
        let freq = wins as f64 / 10_000.0;
        assert!((freq - 0.5).abs() < 0.015, "freq {freq}");
    }

    #[test]
    fn simulation_frequencies_match_probabilities() {
        // 100k draws against the analytic probabilities, 4/sqrt(N) band.
        let scen = scenario_from_utilities(&[0.7, -0.3, 0.1], true);
        let p = unit_params(3);
        let probs = choice_probabilities(&p, &scen).unwrap();
        let n = 100_000usize;
        let mut rng = CounterRng::new(99);
        let mut counts = vec![0usize; scen.n_effective()];
        for _ in 0..n {
            counts[simulate_choice(&p, &scen, &mut rng).unwrap()] += 1;
        }
        let tol = 4.0 / (n as f64).sqrt();
        for (c, q) in counts.iter().zip(&probs) {
            let freq = *c as f64 / n as f64;
            assert!((freq - q).abs() < tol, "freq {freq} vs prob {q}");
        }
    }

    #[test]
    fn parallel_and_sequential_likelihood_agree_bitwise() {
        let mut rng = CounterRng::new(2024);
        let pairs: Vec<ChoiceObservationPair> = (0..3000)
            .map(|_| binary_obs(&[rng.uniform_in(-3.0, 3.0), rng.uniform_in(-3.0, 3.0)], rng.below(2)))
            .collect();
        let data = dataset(&pairs);
        let params = ParameterVector::new(vec![0.37, 0.0], 2).unwrap();
        let ll = log_likelihood(&params, &data).unwrap();
        let seq = exec::sum_ordered_seq(data.observations(), |o| {
            log_prob_chosen(&params, o.scenario(), o.chosen_index())
        });
        assert_eq!(ll.to_bits(), seq.to_bits());
    }
}

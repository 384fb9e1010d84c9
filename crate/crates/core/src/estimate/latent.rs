//! Latent-class logit: a finite mixture of parameter vectors with discrete
//! class shares, estimated by EM with seeded multi-start.
//!
//! Plain EM crawls on flat mixture surfaces, so each iteration runs a
//! squared-extrapolation cycle (SQUAREM-style): two EM steps, a step-length
//! extrapolation, and one stabilizing EM step, falling back to the plain
//! double step whenever extrapolation does not improve the likelihood. Every
//! accepted state is the output of an EM step, and the recorded trace is
//! non-decreasing.

use serde::{Deserialize, Serialize};

use super::optimizer::{maximize, OptimConfig};
use super::{check_identification, fit_mnl, standard_errors_weighted, FitConfig};
use crate::error::{Error, Result};
use crate::exec;
use crate::logit;
use crate::model::{ChoiceDataset, ParameterVector};
use crate::rng::CounterRng;

/// A class is reported as degenerate when its share falls below this.
const DEGENERATE_SHARE: f64 = 1e-6;

/// Floor applied to shares when extrapolating.
const SHARE_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatentClassConfig {
    /// Seeded EM restarts; the best final likelihood wins.
    pub n_restarts: usize,
    pub max_em_iterations: usize,
    /// Stop when the log-likelihood gain per EM iteration falls below this.
    pub em_tolerance: f64,
    pub seed: u64,
    pub optim: OptimConfig,
}

impl Default for LatentClassConfig {
    fn default() -> Self {
        Self {
            n_restarts: 5,
            max_em_iterations: 2000,
            em_tolerance: 1e-8,
            seed: 0,
            optim: OptimConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatentClassResult {
    /// Class-specific parameters, sorted by descending price coefficient.
    pub class_params: Vec<ParameterVector>,
    /// Discrete mixing distribution; positive, sums to one.
    pub class_shares: Vec<f64>,
    /// Conditional (within-class, posterior-weighted) standard errors; NaN
    /// for classes whose weighted information matrix is singular.
    pub class_standard_errors: Vec<Vec<f64>>,
    /// Mixture log-likelihood after each EM iteration, starting value first.
    pub log_likelihood_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Indices of classes whose share collapsed below 1e-6.
    pub degenerate_classes: Vec<usize>,
}

impl LatentClassResult {
    pub fn log_likelihood(&self) -> f64 {
        *self.log_likelihood_trace.last().expect("trace is never empty")
    }
}

#[derive(Clone)]
struct EmState {
    class_params: Vec<ParameterVector>,
    shares: Vec<f64>,
}

struct EmEval {
    log_likelihood: f64,
    posteriors: Vec<Vec<f64>>,
}

struct EmRun {
    state: EmState,
    posteriors: Vec<Vec<f64>>,
    trace: Vec<f64>,
    iterations: usize,
    converged: bool,
}

/// Per-observation log choice probability under each class.
fn class_log_probs(data: &ChoiceDataset, classes: &[ParameterVector]) -> Vec<Vec<f64>> {
    exec::ordered_map(data.observations(), |obs| {
        classes
            .iter()
            .map(|p| logit::log_prob_chosen(p, obs.scenario(), obs.chosen_index()))
            .collect()
    })
}

/// Mixture log-likelihood and posterior class memberships per observation
/// group (the E-step). A group's log probability under a class is the sum
/// over its observations, so consumers with repeated choices carry one
/// shared membership.
fn evaluate(data: &ChoiceDataset, state: &EmState) -> EmEval {
    let k = state.class_params.len();
    let log_probs = class_log_probs(data, &state.class_params);
    let mut group_log_probs = vec![vec![0.0; k]; data.n_groups()];
    for (i, lp) in log_probs.iter().enumerate() {
        let g = data.group_of(i);
        for (acc, l) in group_log_probs[g].iter_mut().zip(lp) {
            *acc += l;
        }
    }
    let ln_shares: Vec<f64> =
        state.shares.iter().map(|s| s.max(f64::MIN_POSITIVE).ln()).collect();
    let mut total = 0.0;
    let mut posteriors = Vec::with_capacity(group_log_probs.len());
    for lp in &group_log_probs {
        let joint: Vec<f64> = lp.iter().zip(&ln_shares).map(|(l, s)| l + s).collect();
        let m = joint.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = joint.iter().map(|j| (j - m).exp()).collect();
        let z: f64 = exps.iter().sum();
        total += m + z.ln();
        posteriors.push(exps.iter().map(|e| e / z).collect());
    }
    EmEval { log_likelihood: total, posteriors }
}

/// The M-step: weighted MNL per class warm-started at the current point,
/// then the closed-form share update. Each observation inherits its group's
/// posterior as its weight.
fn em_step(
    data: &ChoiceDataset,
    state: &EmState,
    posteriors: &[Vec<f64>],
    names: &[String],
    config: &LatentClassConfig,
) -> Result<EmState> {
    let k = state.class_params.len();
    let n_betas = data.schema().len();
    let n_constants = data.max_inside_alternatives().max(1);
    let mut class_params = Vec::with_capacity(k);
    let mut shares = Vec::with_capacity(k);
    for c in 0..k {
        let weights: Vec<f64> =
            (0..data.len()).map(|i| posteriors[data.group_of(i)][c]).collect();
        let objective = |free: &[f64]| -> Result<(f64, Vec<f64>)> {
            let p = ParameterVector::from_free(free, n_betas, n_constants)?;
            logit::log_likelihood_with_gradient_weighted(&p, data, Some(&weights))
        };
        let outcome =
            maximize(objective, state.class_params[c].to_free(), names, &config.optim)?;
        class_params.push(ParameterVector::from_free(&outcome.x, n_betas, n_constants)?);
        shares
            .push(posteriors.iter().map(|w| w[c]).sum::<f64>() / posteriors.len() as f64);
    }
    Ok(EmState { class_params, shares })
}

fn flatten(state: &EmState) -> Vec<f64> {
    let mut flat = Vec::new();
    for p in &state.class_params {
        flat.extend(p.to_free());
    }
    flat.extend_from_slice(&state.shares);
    flat
}

fn unflatten(flat: &[f64], template: &EmState) -> Result<EmState> {
    let k = template.class_params.len();
    let free_len = template.class_params[0].free_len();
    let n_betas = template.class_params[0].n_betas();
    let n_constants = template.class_params[0].n_constants();
    let mut class_params = Vec::with_capacity(k);
    for c in 0..k {
        class_params.push(ParameterVector::from_free(
            &flat[c * free_len..(c + 1) * free_len],
            n_betas,
            n_constants,
        )?);
    }
    let mut shares: Vec<f64> = flat[k * free_len..].to_vec();
    for s in &mut shares {
        if !s.is_finite() {
            return Err(Error::input("extrapolated share is not finite"));
        }
        *s = s.max(SHARE_FLOOR);
    }
    let total: f64 = shares.iter().sum();
    for s in &mut shares {
        *s /= total;
    }
    Ok(EmState { class_params, shares })
}

fn em_from_state(
    data: &ChoiceDataset,
    initial: EmState,
    max_cycles: usize,
    gain_tolerance: f64,
    config: &LatentClassConfig,
) -> Result<EmRun> {
    let names = initial.class_params[0].free_names(data.schema());
    let mut state = initial;
    let mut eval = evaluate(data, &state);
    let mut trace = vec![eval.log_likelihood];
    let mut converged = false;
    let mut iterations = 0;
    // Step-length ceiling; grows while extrapolations keep being accepted.
    let mut max_step = 4.0;

    while iterations < max_cycles {
        iterations += 1;

        let s1 = em_step(data, &state, &eval.posteriors, &names, config)?;
        let e1 = evaluate(data, &s1);
        let s2 = em_step(data, &s1, &e1.posteriors, &names, config)?;
        let e2 = evaluate(data, &s2);

        // Squared extrapolation through the last two EM displacements,
        // stabilized by one more EM step; kept only when it improves on the
        // plain double step.
        let t0 = flatten(&state);
        let t1 = flatten(&s1);
        let t2 = flatten(&s2);
        let r: Vec<f64> = t1.iter().zip(&t0).map(|(a, b)| a - b).collect();
        let v: Vec<f64> =
            t2.iter().zip(&t1).zip(&r).map(|((a, b), rr)| (a - b) - rr).collect();
        let r_norm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
        let v_norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();

        let (next_state, next_eval) = if v_norm > 1e-14 {
            let alpha = -(r_norm / v_norm).clamp(1.0, max_step);
            let extrapolated: Vec<f64> = t0
                .iter()
                .zip(&r)
                .zip(&v)
                .map(|((t, rr), vv)| t - 2.0 * alpha * rr + alpha * alpha * vv)
                .collect();
            let accelerated = unflatten(&extrapolated, &state).and_then(|s| {
                let e = evaluate(data, &s);
                let stabilized = em_step(data, &s, &e.posteriors, &names, config)?;
                let e_stab = evaluate(data, &stabilized);
                Ok((stabilized, e_stab))
            });
            match accelerated {
                Ok((s3, e3)) if e3.log_likelihood >= e2.log_likelihood => {
                    if -alpha >= max_step - 1e-12 {
                        max_step *= 4.0;
                    }
                    (s3, e3)
                }
                // Separation or a likelihood drop: keep the plain EM step.
                _ => {
                    max_step = (max_step / 4.0).max(4.0);
                    (s2, e2)
                }
            }
        } else {
            (s2, e2)
        };

        let gain = next_eval.log_likelihood - eval.log_likelihood;
        state = next_state;
        eval = next_eval;
        trace.push(eval.log_likelihood);
        if gain < gain_tolerance {
            converged = true;
            break;
        }
    }

    Ok(EmRun { posteriors: eval.posteriors, state, trace, iterations, converged })
}

/// Fits a `n_classes`-component latent-class logit by EM.
///
/// Starts from the plain MNL solution: unperturbed for a single class;
/// otherwise each class fans the price coefficient out over [0.5x, 1.5x]
/// and adds seeded +/-10% multiplicative noise, which breaks class symmetry.
/// Classes are sorted by descending price coefficient to resolve label
/// switching.
pub fn fit_latent_class(
    data: &ChoiceDataset,
    n_classes: usize,
    config: &LatentClassConfig,
) -> Result<LatentClassResult> {
    if n_classes < 1 {
        return Err(Error::input("latent-class estimation needs at least one class"));
    }
    check_identification(data)?;
    let base = fit_mnl(data, &FitConfig { optim: config.optim.clone() })?;
    let n_betas = data.schema().len();
    let n_constants = data.max_inside_alternatives().max(1);

    let restarts = if n_classes == 1 { 1 } else { config.n_restarts.max(1) };
    let mut best: Option<EmRun> = None;
    let mut first_error: Option<Error> = None;

    // Restarts are screened at a loose tolerance; only the winner is run to
    // the full stopping rule, which is where EM spends most of its time.
    let screening_tolerance = config.em_tolerance.max(1e-4);
    let screening_cycles = config.max_em_iterations.min(50);

    let price_index = data.schema().price_index();
    for restart in 0..restarts {
        let starts: Vec<ParameterVector> = (0..n_classes)
            .map(|c| {
                if n_classes == 1 {
                    return Ok(base.params.clone());
                }
                let mut rng =
                    CounterRng::with_stream(config.seed, restart as u64).split(c as u64);
                // Fan the price coefficient out across classes (factors in
                // [0.5, 1.5]); +/-10% noise alone leaves the start too close
                // to the symmetric saddle for EM to escape quickly.
                let spread = 0.5 + c as f64 / (n_classes - 1) as f64;
                let free: Vec<f64> = base
                    .params
                    .to_free()
                    .iter()
                    .enumerate()
                    .map(|(i, b)| {
                        let fan = if i == price_index { spread } else { 1.0 };
                        b * fan * (1.0 + 0.1 * rng.uniform_in(-1.0, 1.0))
                    })
                    .collect();
                ParameterVector::from_free(&free, n_betas, n_constants)
            })
            .collect::<Result<_>>()?;
        let initial =
            EmState { class_params: starts, shares: vec![1.0 / n_classes as f64; n_classes] };

        match em_from_state(data, initial, screening_cycles, screening_tolerance, config) {
            Ok(run) => {
                let better = match &best {
                    None => true,
                    Some(b) => run.trace.last().unwrap() > b.trace.last().unwrap(),
                };
                if better {
                    best = Some(run);
                }
            }
            // A restart can wander into separation territory; keep the rest.
            Err(e @ Error::Separation { .. }) => {
                first_error.get_or_insert(e);
            }
            Err(e) => return Err(e),
        }
    }

    let screened = match best {
        Some(run) => run,
        None => return Err(first_error.expect("no run and no error is impossible")),
    };
    let polish = em_from_state(
        data,
        screened.state,
        config.max_em_iterations.saturating_sub(screened.iterations),
        config.em_tolerance,
        config,
    )?;
    // The polish resumes exactly where screening stopped, so the traces
    // concatenate into one monotone sequence.
    let mut trace = screened.trace;
    trace.extend_from_slice(&polish.trace[1..]);
    let run = EmRun {
        state: polish.state,
        posteriors: polish.posteriors,
        trace,
        iterations: screened.iterations + polish.iterations,
        converged: polish.converged,
    };

    // Label-switching canonicalization: descending price coefficient.
    let mut order: Vec<usize> = (0..n_classes).collect();
    order.sort_by(|&a, &b| {
        run.state.class_params[b].betas()[price_index]
            .partial_cmp(&run.state.class_params[a].betas()[price_index])
            .expect("betas are finite")
    });

    let class_params: Vec<ParameterVector> =
        order.iter().map(|&c| run.state.class_params[c].clone()).collect();
    let share_sum: f64 = run.state.shares.iter().sum();
    let class_shares: Vec<f64> =
        order.iter().map(|&c| run.state.shares[c] / share_sum).collect();
    let class_standard_errors: Vec<Vec<f64>> = order
        .iter()
        .map(|&c| {
            let weights: Vec<f64> =
                (0..data.len()).map(|i| run.posteriors[data.group_of(i)][c]).collect();
            standard_errors_weighted(&run.state.class_params[c], data, &weights)
                .unwrap_or_else(|_| vec![f64::NAN; run.state.class_params[c].free_len()])
        })
        .collect();
    let degenerate_classes: Vec<usize> = class_shares
        .iter()
        .enumerate()
        .filter(|(_, s)| **s < DEGENERATE_SHARE)
        .map(|(i, _)| i)
        .collect();

    Ok(LatentClassResult {
        class_params,
        class_shares,
        class_standard_errors,
        log_likelihood_trace: run.trace,
        iterations: run.iterations,
        converged: run.converged,
        degenerate_classes,
    })
}

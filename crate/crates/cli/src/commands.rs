//! The five pipeline commands: simulate, estimate, analyze, optimize, chain.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use choiceforge::analytics;
use choiceforge::chain::{explain_effect, fit_link, CausalChain};
use choiceforge::design::{
    optimize_design, optimize_price, CurvePoint, DesignConfig, DesignSpace, Interval, Objective,
};
use choiceforge::estimate::{
    fit_latent_class, fit_mixed_logit, fit_mnl, FitConfig, LatentClassConfig, MixedLogitConfig,
};
use choiceforge::model::{AttributeVector, ChoiceObservation, ChoiceScenario};
use choiceforge::synth::{generate_dataset, generate_scenarios, GroundTruthSpec};
use choiceforge::ChoiceDataset;

use crate::args::{AnalyzeArgs, ChainArgs, EstimateArgs, OptimizeArgs, SimulateArgs};
use crate::config::{resolve_seed, RunConfig};
use crate::csvio::{read_dataset, write_dataset};
use crate::error::{CliError, CliResult};
use crate::report::{
    latent_class_section, mixed_logit_section, mnl_section, read_json, write_json,
    AnalysisReport, ChainReport, EstimateReport, PathEffect, SolutionReport, TruthRecord,
};

fn load_config(path: &Option<PathBuf>) -> CliResult<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

/// `simulate`: write a synthetic choice dataset and its ground-truth record.
pub fn cmd_simulate(args: &SimulateArgs) -> CliResult<()> {
    let config = load_config(&args.config)?;
    config.check_known_keys(
        "simulate",
        &["spec", "n", "levels", "seed", "out-dataset", "out-truth"],
    )?;

    let spec_name = args
        .spec
        .clone()
        .or(config.raw("simulate", "spec").map(String::from))
        .ok_or_else(|| CliError::input("missing --spec (try `virtual-traveling-default`)"))?;
    let n = args
        .n
        .or(config.get("simulate", "n")?)
        .ok_or_else(|| CliError::input("missing --n (number of scenarios)"))?;
    if n == 0 {
        return Err(CliError::input("--n must be at least 1"));
    }
    let levels = args.levels.or(config.get("simulate", "levels")?).unwrap_or(4);
    let seed = resolve_seed(args.seed, &config, "simulate")?;
    let out_dataset = args
        .out_dataset
        .clone()
        .or(config.raw("simulate", "out-dataset").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("dataset.csv"));
    let out_truth = args
        .out_truth
        .clone()
        .or(config.raw("simulate", "out-truth").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("truth.json"));

    let spec = match spec_name.as_str() {
        "virtual-traveling-default" => GroundTruthSpec::virtual_traveling_default(seed),
        other => {
            return Err(CliError::input(format!(
                "unknown spec `{other}`; available: virtual-traveling-default"
            )))
        }
    };

    let scenarios = generate_scenarios(&spec, n, levels)?;
    let data = generate_dataset(&spec, &scenarios)?;
    write_dataset(&out_dataset, &data)?;
    write_json(&out_truth, &TruthRecord { spec, n_scenarios: n, levels_per_attribute: levels })?;

    println!("simulate: wrote {n} observations to {}", out_dataset.display());
    println!("simulate: ground truth in {}", out_truth.display());
    Ok(())
}

/// `estimate`: fit a choice model to a dataset CSV and write a report.
pub fn cmd_estimate(args: &EstimateArgs) -> CliResult<()> {
    let config = load_config(&args.config)?;
    config.check_known_keys(
        "estimate",
        &["dataset", "model", "classes", "draws", "random", "seed", "out"],
    )?;

    let dataset_path = args
        .dataset
        .clone()
        .or(config.raw("estimate", "dataset").map(PathBuf::from))
        .ok_or_else(|| CliError::input("missing --dataset"))?;
    let model = args
        .model
        .clone()
        .or(config.raw("estimate", "model").map(String::from))
        .unwrap_or_else(|| "mnl".to_string());
    let classes = args.classes.or(config.get("estimate", "classes")?).unwrap_or(2);
    let draws = args.draws.or(config.get("estimate", "draws")?).unwrap_or(200);
    let random = args
        .random
        .clone()
        .or(config.raw("estimate", "random").map(String::from))
        .unwrap_or_else(|| "price".to_string());
    let seed = resolve_seed(args.seed, &config, "estimate")?;
    let out = args
        .out
        .clone()
        .or(config.raw("estimate", "out").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("estimate.json"));

    let long = read_dataset(&dataset_path)?;
    let data = long.dataset;
    let schema = data.schema().clone();

    let mut report = EstimateReport {
        model: model.clone(),
        attributes: schema.attribute_names().to_vec(),
        price_attribute: schema.attribute_names()[schema.price_index()].clone(),
        n_observations: data.len(),
        mnl: None,
        latent_class: None,
        mixed_logit: None,
    };

    let converged = match model.as_str() {
        "mnl" => {
            let fit = fit_mnl(&data, &FitConfig::default())?;
            println!(
                "estimate: mnl log-likelihood {:.6}, {} iterations, converged: {}",
                fit.log_likelihood, fit.iterations, fit.converged
            );
            for (name, (b, se)) in schema
                .attribute_names()
                .iter()
                .zip(fit.params.betas().iter().zip(&fit.standard_errors))
            {
                println!("  {name:>12}: {b:>12.6}  (se {se:.6})");
            }
            let ok = fit.converged;
            report.mnl = Some(mnl_section(&schema, &fit));
            ok
        }
        "lcm" => {
            let lc_config = LatentClassConfig { seed, ..LatentClassConfig::default() };
            let fit = fit_latent_class(&data, classes, &lc_config)?;
            println!(
                "estimate: {classes}-class log-likelihood {:.6}, {} EM iterations, converged: {}",
                fit.log_likelihood(),
                fit.iterations,
                fit.converged
            );
            for (c, (share, params)) in
                fit.class_shares.iter().zip(&fit.class_params).enumerate()
            {
                println!("  class {c}: share {share:.4}");
                for (name, b) in schema.attribute_names().iter().zip(params.betas()) {
                    println!("    {name:>12}: {b:>12.6}");
                }
            }
            let ok = fit.converged;
            report.latent_class = Some(latent_class_section(&schema, &fit));
            ok
        }
        "mixed" => {
            let random_coefficients: Vec<usize> = random
                .split(',')
                .map(|name| {
                    schema.position(name.trim()).ok_or_else(|| {
                        CliError::input(format!("unknown random coefficient `{name}`"))
                    })
                })
                .collect::<CliResult<_>>()?;
            let mx_config = MixedLogitConfig { seed, ..MixedLogitConfig::default() };
            let fit = fit_mixed_logit(&data, &random_coefficients, draws, &mx_config)?;
            println!(
                "estimate: mixed simulated log-likelihood {:.6} ({} draws), converged: {}",
                fit.simulated_log_likelihood, draws, fit.converged
            );
            for (name, (m, s)) in schema
                .attribute_names()
                .iter()
                .zip(fit.mean_params.betas().iter().zip(&fit.stddev_betas))
            {
                println!("  {name:>12}: mean {m:>12.6}  stddev {s:.6}");
            }
            let ok = fit.converged;
            report.mixed_logit = Some(mixed_logit_section(&schema, &fit));
            ok
        }
        other => {
            return Err(CliError::input(format!(
                "unknown model `{other}`; available: mnl, lcm, mixed"
            )))
        }
    };

    write_json(&out, &report)?;
    println!("estimate: report written to {}", out.display());
    if !converged {
        return Err(CliError::NonConvergence(
            "estimation did not converge within the iteration budget".into(),
        ));
    }
    Ok(())
}

/// Built-in reference levels when the report uses the virtual-traveling
/// schema: attribute-range midpoints.
fn default_reference(schema: &choiceforge::AttributeSchema) -> Option<(Vec<f64>, f64)> {
    let default = GroundTruthSpec::virtual_traveling_default(0);
    if schema.attribute_names() != default.schema.attribute_names() {
        return None;
    }
    let levels: Vec<f64> = default.level_bounds.iter().map(|b| b.midpoint()).collect();
    let price = default.level_bounds[default.schema.price_index()].midpoint();
    Some((levels, price))
}

fn parse_levels(text: &str, expected: usize) -> CliResult<Vec<f64>> {
    let values: Vec<f64> = text
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| CliError::input(format!("`{t}` is not a number in --levels")))
        })
        .collect::<CliResult<_>>()?;
    if values.len() != expected {
        return Err(CliError::input(format!(
            "--levels needs {expected} comma-separated values (non-price attributes in schema order), got {}",
            values.len()
        )));
    }
    Ok(values)
}

/// Full-length level vector from indicator levels plus a price.
fn assemble_levels(
    schema: &choiceforge::AttributeSchema,
    indicators: &[f64],
    price: f64,
) -> Vec<f64> {
    let mut levels = Vec::with_capacity(schema.len());
    let mut it = indicators.iter();
    for k in 0..schema.len() {
        if k == schema.price_index() {
            levels.push(price);
        } else {
            levels.push(*it.next().expect("indicator count checked"));
        }
    }
    levels
}

/// `analyze`: WTP, price derivative, and market potential from a fitted
/// report.
pub fn cmd_analyze(args: &AnalyzeArgs) -> CliResult<()> {
    let config = load_config(&args.config)?;
    config.check_known_keys("analyze", &["report", "levels", "price", "population", "out"])?;

    let report_path = args
        .report
        .clone()
        .or(config.raw("analyze", "report").map(PathBuf::from))
        .ok_or_else(|| CliError::input("missing --report"))?;
    let estimate: EstimateReport = read_json(&report_path)?;
    let schema = estimate.schema()?;
    let params = estimate.point_params()?;

    let defaults = default_reference(&schema);
    let indicator_levels: Vec<f64> = match args
        .levels
        .clone()
        .or(config.raw("analyze", "levels").map(String::from))
    {
        Some(text) => parse_levels(&text, schema.len() - 1)?,
        None => match &defaults {
            Some((levels, _)) => {
                let mut v = levels.clone();
                v.remove(schema.price_index());
                v
            }
            None => {
                return Err(CliError::input(
                    "missing --levels (reference indicator levels for this schema)",
                ))
            }
        },
    };
    let price = match args.price.or(config.get("analyze", "price")?) {
        Some(p) => p,
        None => {
            defaults
                .as_ref()
                .map(|(_, p)| *p)
                .ok_or_else(|| CliError::input("missing --price (reference price)"))?
        }
    };
    let population =
        args.population.or(config.get("analyze", "population")?).unwrap_or(10_000.0);
    let out = args
        .out
        .clone()
        .or(config.raw("analyze", "out").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("analysis.json"));

    let wtp_report = analytics::wtp(&params, &schema)?;
    let levels = assemble_levels(&schema, &indicator_levels, price);
    let alt = AttributeVector::new(schema.clone(), levels)?;
    let scenario = ChoiceScenario::new(vec![alt], true)?;
    let probs = choiceforge::logit::choice_probabilities(&params, &scenario)?;
    let derivative = analytics::price_derivative(&params, &scenario, 0)?;
    let potential = analytics::market_potential(&params, &scenario, population)?;

    let reference_levels: BTreeMap<String, f64> = schema
        .indicator_names()
        .zip(&indicator_levels)
        .map(|((_, name), v)| (name.to_string(), *v))
        .collect();
    let analysis = AnalysisReport {
        wtp: wtp_report.per_attribute_wtp.clone(),
        price_coefficient: wtp_report.price_coefficient,
        reference_levels,
        reference_price: price,
        population_size: population,
        purchase_probability: probs[0],
        price_derivative: derivative,
        market_potential: potential,
    };
    write_json(&out, &analysis)?;

    println!("analyze: willingness to pay (currency per attribute unit)");
    for (name, value) in &analysis.wtp {
        println!("  {name:>12}: {value:.6}");
    }
    println!("analyze: purchase probability at reference: {:.6}", analysis.purchase_probability);
    println!("analyze: own-price derivative: {:.6}", analysis.price_derivative);
    println!(
        "analyze: market potential: {:.1} of {} consumers",
        analysis.market_potential, analysis.population_size
    );
    println!("analyze: report written to {}", out.display());
    Ok(())
}

/// Rounds through the 9-decimal curve format.
fn round9(x: f64) -> f64 {
    format!("{x:.9}").parse().expect("formatted float parses")
}

/// Writes the `price,utility,probability,revenue` curve CSV. Values carry
/// nine decimal places and the revenue cell is the rounded product of the
/// rounded price and probability columns, so the file is self-consistent.
fn write_curve(path: &Path, curve: &[CurvePoint]) -> CliResult<()> {
    let mut out = String::from("price,utility,probability,revenue\n");
    for point in curve {
        let price = round9(point.price);
        let probability = round9(point.probability);
        let revenue = price * probability;
        out.push_str(&format!(
            "{:.9},{:.9},{:.9},{:.9}\n",
            point.price, point.utility, point.probability, revenue
        ));
    }
    std::fs::write(path, out)
        .map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))
}

/// `optimize`: revenue- or profit-optimal price (optionally jointly with
/// indicator levels) plus the swept curve.
pub fn cmd_optimize(args: &OptimizeArgs) -> CliResult<()> {
    let config = load_config(&args.config)?;
    config.check_known_keys(
        "optimize",
        &[
            "report",
            "objective",
            "levels",
            "price-min",
            "price-max",
            "optimize-levels",
            "bounds",
            "costs",
            "grid",
            "out",
            "out-curve",
        ],
    )?;

    let report_path = args
        .report
        .clone()
        .or(config.raw("optimize", "report").map(PathBuf::from))
        .ok_or_else(|| CliError::input("missing --report"))?;
    let estimate: EstimateReport = read_json(&report_path)?;
    let schema = estimate.schema()?;
    let params = estimate.point_params()?;

    let objective_name = args
        .objective
        .clone()
        .or(config.raw("optimize", "objective").map(String::from))
        .unwrap_or_else(|| "revenue".to_string());
    let objective = match objective_name.as_str() {
        "revenue" => Objective::Revenue,
        "profit" => Objective::Profit,
        other => {
            return Err(CliError::input(format!(
                "unknown objective `{other}`; available: revenue, profit"
            )))
        }
    };

    let defaults = default_reference(&schema);
    let default_price_bounds = GroundTruthSpec::virtual_traveling_default(0).level_bounds
        [GroundTruthSpec::virtual_traveling_default(0).schema.price_index()];
    let price_min = args
        .price_min
        .or(config.get("optimize", "price-min")?)
        .unwrap_or(if defaults.is_some() { default_price_bounds.lower } else { 0.0 });
    let price_max = args
        .price_max
        .or(config.get("optimize", "price-max")?)
        .unwrap_or(if defaults.is_some() { default_price_bounds.upper } else { 50.0 });
    let price_bounds = Interval::new(price_min, price_max)?;
    let grid_points = args.grid.or(config.get("optimize", "grid")?).unwrap_or(1000);
    let optimize_levels = args.optimize_levels
        || config.get::<bool>("optimize", "optimize-levels")?.unwrap_or(false);
    let out = args
        .out
        .clone()
        .or(config.raw("optimize", "out").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("solution.json"));
    let out_curve = args
        .out_curve
        .clone()
        .or(config.raw("optimize", "out-curve").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("curve.csv"));

    let solution = if optimize_levels {
        let bounds_text = args
            .bounds
            .clone()
            .or(config.raw("optimize", "bounds").map(String::from))
            .ok_or_else(|| {
                CliError::input("--optimize-levels needs --bounds lo:hi,... per indicator")
            })?;
        let mut bounds: Vec<Interval> = Vec::new();
        let mut parsed = bounds_text
            .split(',')
            .map(|pair| -> CliResult<Interval> {
                let (lo, hi) = pair
                    .split_once(':')
                    .ok_or_else(|| CliError::input(format!("bad bound `{pair}`, want lo:hi")))?;
                let lo: f64 = lo.trim().parse().map_err(|_| {
                    CliError::input(format!("`{lo}` is not a number in --bounds"))
                })?;
                let hi: f64 = hi.trim().parse().map_err(|_| {
                    CliError::input(format!("`{hi}` is not a number in --bounds"))
                })?;
                Interval::new(lo, hi).map_err(CliError::from)
            })
            .collect::<CliResult<Vec<_>>>()?
            .into_iter();
        for k in 0..schema.len() {
            if k == schema.price_index() {
                bounds.push(price_bounds);
            } else {
                bounds.push(parsed.next().ok_or_else(|| {
                    CliError::input("--bounds needs one lo:hi pair per non-price attribute")
                })?);
            }
        }
        if parsed.next().is_some() {
            return Err(CliError::input("--bounds has more pairs than non-price attributes"));
        }
        let mut space = DesignSpace::new(schema.clone(), bounds)?;
        if let Some(costs_text) =
            args.costs.clone().or(config.raw("optimize", "costs").map(String::from))
        {
            let indicator_costs = parse_levels(&costs_text, schema.len() - 1)?;
            space = space.with_cost_model(assemble_levels(&schema, &indicator_costs, 0.0))?;
        }
        optimize_design(&params, &space, objective, &DesignConfig::default())?
    } else {
        let indicator_levels: Vec<f64> = match args
            .levels
            .clone()
            .or(config.raw("optimize", "levels").map(String::from))
        {
            Some(text) => parse_levels(&text, schema.len() - 1)?,
            None => match &defaults {
                Some((levels, _)) => {
                    let mut v = levels.clone();
                    v.remove(schema.price_index());
                    v
                }
                None => {
                    return Err(CliError::input(
                        "missing --levels (indicator levels for this schema)",
                    ))
                }
            },
        };
        let levels = assemble_levels(&schema, &indicator_levels, price_bounds.lower);
        if objective == Objective::Profit {
            return Err(CliError::input(
                "the profit objective needs --optimize-levels with --costs",
            ));
        }
        optimize_price(&params, &schema, &levels, price_bounds)?
    };

    // Resample the emitted curve at the configured grid size.
    let grid: Vec<f64> = if grid_points <= 1 {
        vec![price_bounds.midpoint()]
    } else {
        (0..grid_points)
            .map(|i| {
                price_bounds.lower
                    + price_bounds.width() * i as f64 / (grid_points - 1) as f64
            })
            .collect()
    };
    let curve = choiceforge::design::revenue_curve(
        &params,
        &schema,
        &solution.attribute_levels,
        &grid,
    )?;
    write_curve(&out_curve, &curve)?;

    let attribute_levels: BTreeMap<String, f64> = schema
        .attribute_names()
        .iter()
        .cloned()
        .zip(solution.attribute_levels.iter().copied())
        .collect();
    let report = SolutionReport {
        objective: objective_name,
        price: solution.price,
        attribute_levels,
        purchase_probability: solution.purchase_probability,
        objective_value: solution.objective_value,
        price_bounds: [price_bounds.lower, price_bounds.upper],
        grid_points,
    };
    write_json(&out, &report)?;

    println!(
        "optimize: best price {:.4} with purchase probability {:.4} and {} {:.6}",
        report.price, report.purchase_probability, report.objective, report.objective_value
    );
    println!("optimize: solution written to {}", out.display());
    println!("optimize: curve written to {}", out_curve.display());
    Ok(())
}

/// `chain`: fit indicator-to-construct links and a construct-level choice
/// model, then decompose indicator effects per construct path.
pub fn cmd_chain(args: &ChainArgs) -> CliResult<()> {
    let config = load_config(&args.config)?;
    config.check_known_keys("chain", &["dataset", "out"])?;

    let dataset_path = args
        .dataset
        .clone()
        .or(config.raw("chain", "dataset").map(PathBuf::from))
        .ok_or_else(|| CliError::input("missing --dataset"))?;
    let out = args
        .out
        .clone()
        .or(config.raw("chain", "out").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("chain.json"));

    let long = read_dataset(&dataset_path)?;
    if long.construct_names.is_empty() {
        return Err(CliError::input(format!(
            "{}: no construct: columns; the chain command needs observed construct scores",
            dataset_path.display()
        )));
    }
    let data = long.dataset;
    let schema = data.schema().clone();
    let indicator_names: Vec<String> =
        schema.indicator_names().map(|(_, n)| n.to_string()).collect();

    // Stage 1: indicators -> constructs, by least squares over inside rows.
    let mut inputs: Vec<Vec<f64>> = Vec::new();
    let mut outputs: Vec<Vec<f64>> = Vec::new();
    for (obs, scores) in data.observations().iter().zip(&long.construct_scores) {
        for (alt, row) in obs.scenario().alternatives().iter().zip(scores) {
            inputs.push(
                schema.indicator_names().map(|(k, _)| alt.values()[k]).collect(),
            );
            outputs.push(row.clone());
        }
    }
    let link = fit_link(&indicator_names, &inputs, &long.construct_names, &outputs)?;

    // Stage 2: choice model over constructs + price.
    let mut construct_names_price = long.construct_names.clone();
    construct_names_price.push("price".to_string());
    let terminal_schema = choiceforge::AttributeSchema::new(
        "constructs",
        construct_names_price,
        long.construct_names.len(),
    )?;
    let observations: Vec<ChoiceObservation> = data
        .observations()
        .iter()
        .zip(&long.construct_scores)
        .map(|(obs, scores)| {
            let alts: Vec<AttributeVector> = obs
                .scenario()
                .alternatives()
                .iter()
                .zip(scores)
                .map(|(alt, row)| {
                    let mut values = row.clone();
                    values.push(alt.price());
                    AttributeVector::new(terminal_schema.clone(), values)
                })
                .collect::<choiceforge::Result<_>>()?;
            let scenario =
                ChoiceScenario::new(alts, obs.scenario().includes_outside_option())?;
            ChoiceObservation::new(scenario, obs.chosen_index())
        })
        .collect::<choiceforge::Result<_>>()?;
    let terminal_data = ChoiceDataset::new(observations)?;
    let terminal_fit = fit_mnl(&terminal_data, &FitConfig::default())?;

    // Decompose each indicator's effect through each construct.
    let causal = CausalChain::new(vec![link.clone()], terminal_fit.params.clone())?;
    let mut path_effects = Vec::new();
    for indicator in &indicator_names {
        for construct in &long.construct_names {
            let effect = explain_effect(&causal, indicator, &[construct.clone()])?;
            path_effects.push(PathEffect {
                indicator: indicator.clone(),
                construct: construct.clone(),
                link_weight: effect.per_link_effects[0],
                terminal_weight: effect.terminal_weight,
                path_effect: effect.path_effect,
                total_effect: effect.total_effect,
            });
        }
    }

    let by_name = |values: &[f64]| -> BTreeMap<String, f64> {
        terminal_schema.attribute_names().iter().cloned().zip(values.iter().copied()).collect()
    };
    let report = ChainReport {
        indicators: indicator_names.clone(),
        constructs: long.construct_names.clone(),
        link_weights: link.weights.clone(),
        link_intercepts: link.intercepts.clone(),
        link_residual_stddev: link.residual_stddev.clone(),
        terminal_betas: by_name(terminal_fit.params.betas()),
        terminal_standard_errors: by_name(
            &terminal_fit.standard_errors[..terminal_schema.len()],
        ),
        terminal_log_likelihood: terminal_fit.log_likelihood,
        terminal_converged: terminal_fit.converged,
        path_effects,
    };
    write_json(&out, &report)?;

    println!("chain: {} indicators -> {} constructs -> choice", report.indicators.len(), report.constructs.len());
    for effect in &report.path_effects {
        println!(
            "  {} -> {} -> utility: {:.6} (total for {}: {:.6})",
            effect.indicator, effect.construct, effect.path_effect, effect.indicator,
            effect.total_effect
        );
    }
    println!("chain: report written to {}", out.display());
    if !terminal_fit.converged {
        return Err(CliError::NonConvergence(
            "the construct-level choice model did not converge".into(),
        ));
    }
    Ok(())
}

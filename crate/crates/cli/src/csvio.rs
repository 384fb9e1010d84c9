//! Long-format choice data CSV.
//!
//! Header: `obs_id,alt_id,chosen,<attr1>,...,price[,construct:<name>...]`.
//! One row per effective alternative, sorted by (obs_id, alt_id) ascending.
//! `alt_id 0` denotes the no-purchase outside option; its attribute cells
//! are written as zeros and ignored on read. Exactly one row per obs_id has
//! `chosen = 1`. UTF-8, `.` decimal separator.

use std::path::Path;
use std::sync::Arc;

use choiceforge::model::{AttributeVector, ChoiceObservation, ChoiceScenario};
use choiceforge::{AttributeSchema, ChoiceDataset};

use crate::error::{CliError, CliResult};

const CONSTRUCT_PREFIX: &str = "construct:";

/// A parsed dataset plus any construct-score columns it carried.
#[derive(Debug)]
pub struct LongDataset {
    pub dataset: ChoiceDataset,
    pub construct_names: Vec<String>,
    /// Construct scores per observation, per inside alternative (aligned
    /// with each scenario's alternative order).
    pub construct_scores: Vec<Vec<Vec<f64>>>,
}

pub fn write_dataset(path: &Path, data: &ChoiceDataset) -> CliResult<()> {
    let schema = data.schema();
    let mut out = String::new();
    out.push_str("obs_id,alt_id,chosen");
    for name in schema.attribute_names() {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');

    for (i, obs) in data.observations().iter().enumerate() {
        let obs_id = i + 1;
        let scenario = obs.scenario();
        // The outside option (alt_id 0) sorts first.
        if let Some(outside) = scenario.outside_index() {
            let chosen = u8::from(obs.chosen_index() == outside);
            out.push_str(&format!("{obs_id},0,{chosen}"));
            for _ in 0..schema.len() {
                out.push_str(",0");
            }
            out.push('\n');
        }
        for (j, alt) in scenario.alternatives().iter().enumerate() {
            let chosen = u8::from(obs.chosen_index() == j);
            out.push_str(&format!("{obs_id},{},{chosen}", j + 1));
            for v in alt.values() {
                out.push(',');
                out.push_str(&format!("{v}"));
            }
            out.push('\n');
        }
    }
    std::fs::write(path, out)
        .map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))
}

struct RawRow {
    obs_id: u64,
    alt_id: u64,
    chosen: bool,
    attrs: Vec<f64>,
    constructs: Vec<f64>,
}

pub fn read_dataset(path: &Path) -> CliResult<LongDataset> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines().enumerate();

    let (_, header) = lines
        .next()
        .ok_or_else(|| CliError::input(format!("{}: empty file", path.display())))?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    if columns.len() < 4 || columns[0] != "obs_id" || columns[1] != "alt_id" || columns[2] != "chosen"
    {
        return Err(CliError::input(format!(
            "{}: header must start with obs_id,alt_id,chosen and carry at least one attribute",
            path.display()
        )));
    }
    let mut attr_names: Vec<String> = Vec::new();
    let mut construct_names: Vec<String> = Vec::new();
    for &col in &columns[3..] {
        if let Some(name) = col.strip_prefix(CONSTRUCT_PREFIX) {
            construct_names.push(name.to_string());
        } else {
            if !construct_names.is_empty() {
                return Err(CliError::input(format!(
                    "{}: attribute column `{col}` appears after construct columns",
                    path.display()
                )));
            }
            attr_names.push(col.to_string());
        }
    }
    let price_positions: Vec<usize> =
        attr_names.iter().enumerate().filter(|(_, n)| *n == "price").map(|(i, _)| i).collect();
    if price_positions.len() != 1 {
        return Err(CliError::input(format!(
            "{}: exactly one `price` attribute column is required",
            path.display()
        )));
    }
    let schema = AttributeSchema::new("csv", attr_names.clone(), price_positions[0])
        .map_err(CliError::from)?;

    let n_attrs = attr_names.len();
    let n_constructs = construct_names.len();
    let mut rows: Vec<RawRow> = Vec::new();
    for (line_no, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let row_no = line_no + 1;
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != columns.len() {
            return Err(CliError::input(format!(
                "row {row_no}: expected {} cells, found {}",
                columns.len(),
                cells.len()
            )));
        }
        let parse_int = |idx: usize| -> CliResult<u64> {
            cells[idx].parse::<u64>().map_err(|_| {
                CliError::input(format!(
                    "row {row_no}, column `{}`: `{}` is not a non-negative integer",
                    columns[idx], cells[idx]
                ))
            })
        };
        let parse_float = |idx: usize| -> CliResult<f64> {
            cells[idx].parse::<f64>().map_err(|_| {
                CliError::input(format!(
                    "row {row_no}, column `{}`: `{}` is not a number",
                    columns[idx], cells[idx]
                ))
            })
        };
        let obs_id = parse_int(0)?;
        let alt_id = parse_int(1)?;
        let chosen_val = parse_int(2)?;
        if chosen_val > 1 {
            return Err(CliError::input(format!(
                "row {row_no}, column `chosen`: `{chosen_val}` must be 0 or 1"
            )));
        }
        let mut attrs = Vec::with_capacity(n_attrs);
        for k in 0..n_attrs {
            attrs.push(parse_float(3 + k)?);
        }
        let mut constructs = Vec::with_capacity(n_constructs);
        for k in 0..n_constructs {
            constructs.push(parse_float(3 + n_attrs + k)?);
        }
        rows.push(RawRow { obs_id, alt_id, chosen: chosen_val == 1, attrs, constructs });
    }
    if rows.is_empty() {
        return Err(CliError::input(format!("{}: no data rows", path.display())));
    }

    build_dataset(schema, rows, construct_names)
}

fn build_dataset(
    schema: Arc<AttributeSchema>,
    rows: Vec<RawRow>,
    construct_names: Vec<String>,
) -> CliResult<LongDataset> {
    let mut observations = Vec::new();
    let mut construct_scores = Vec::new();
    let mut i = 0;
    let mut last_obs: Option<u64> = None;

    while i < rows.len() {
        let obs_id = rows[i].obs_id;
        if let Some(prev) = last_obs {
            if obs_id <= prev {
                return Err(CliError::input(format!(
                    "observation {obs_id}: obs_id must be strictly ascending"
                )));
            }
        }
        last_obs = Some(obs_id);

        let mut group_end = i;
        while group_end < rows.len() && rows[group_end].obs_id == obs_id {
            group_end += 1;
        }
        let group = &rows[i..group_end];
        for pair in group.windows(2) {
            if pair[1].alt_id <= pair[0].alt_id {
                return Err(CliError::input(format!(
                    "observation {obs_id}: alt_id must be strictly ascending"
                )));
            }
        }

        let has_outside = group[0].alt_id == 0;
        let inside: &[RawRow] = if has_outside { &group[1..] } else { group };
        if inside.is_empty() && !has_outside {
            unreachable!("group is non-empty");
        }

        let alternatives: Vec<AttributeVector> = inside
            .iter()
            .map(|r| {
                AttributeVector::new(schema.clone(), r.attrs.clone())
                    .map_err(|e| CliError::input(format!("observation {obs_id}: {e}")))
            })
            .collect::<CliResult<_>>()?;
        let scenario = ChoiceScenario::new(alternatives, has_outside)
            .map_err(|e| CliError::input(format!("observation {obs_id}: {e}")))?;

        // Effective index order: inside alternatives first, outside last.
        let chosen_rows: Vec<usize> =
            group.iter().enumerate().filter(|(_, r)| r.chosen).map(|(j, _)| j).collect();
        if chosen_rows.len() != 1 {
            return Err(CliError::input(format!(
                "observation {obs_id}: exactly one chosen=1 row is required, found {}",
                chosen_rows.len()
            )));
        }
        let chosen_index = if has_outside {
            if chosen_rows[0] == 0 {
                scenario.outside_index().unwrap()
            } else {
                chosen_rows[0] - 1
            }
        } else {
            chosen_rows[0]
        };
        observations.push(
            ChoiceObservation::new(scenario, chosen_index)
                .map_err(|e| CliError::input(format!("observation {obs_id}: {e}")))?,
        );
        construct_scores.push(inside.iter().map(|r| r.constructs.clone()).collect());
        i = group_end;
    }

    let dataset = ChoiceDataset::new(observations).map_err(CliError::from)?;
    Ok(LongDataset { dataset, construct_names, construct_scores })
}

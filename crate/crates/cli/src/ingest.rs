//! CSV input and output.
//!
//! One row per operator: `lab,operator,item,...` with 1-based item indices.
//! The `lab` column may be left out, in which case every row belongs to a
//! single pooled dataset.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use ilc_core::one_stage::{Dataset, Observation};
use ilc_core::two_stage::{GroupedDataset, Lab};
use ilc_core::{GroundSet, Subset};

use crate::error::CliError;

/// Parsed input: pooled when there is a single lab (or none at all).
#[derive(Debug, Clone, PartialEq)]
pub enum Input {
    Pooled(Dataset),
    Grouped(GroupedDataset),
}

impl Input {
    pub fn universe(&self) -> usize {
        match self {
            Input::Pooled(d) => d.universe(),
            Input::Grouped(d) => d.universe(),
        }
    }

    pub fn n(&self) -> usize {
        match self {
            Input::Pooled(d) => d.n(),
            Input::Grouped(d) => d.n(),
        }
    }

    /// All operators as one dataset; grouped operator ids become `lab/operator`.
    pub fn pooled(&self) -> Dataset {
        match self {
            Input::Pooled(d) => d.clone(),
            Input::Grouped(d) => d.pooled(),
        }
    }

    pub fn grouped(&self) -> Option<&GroupedDataset> {
        match self {
            Input::Grouped(d) => Some(d),
            Input::Pooled(_) => None,
        }
    }

    pub fn num_observations(&self) -> usize {
        match self {
            Input::Pooled(d) => d.len(),
            Input::Grouped(d) => d.lab_sizes().iter().sum(),
        }
    }
}

fn parse_error(line: u64, message: impl Into<String>) -> CliError {
    CliError::Parse {
        line,
        message: message.into(),
    }
}

pub fn read_csv(path: &Path, universe: usize, n: usize) -> Result<Input, CliError> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::Input(format!("cannot open {}: {e}", path.display())))?;
    parse_csv(file, universe, n)
}

pub fn parse_csv<R: Read>(reader: R, universe: usize, n: usize) -> Result<Input, CliError> {
    let ground = GroundSet::new(universe)?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| parse_error(1, e.to_string()))?,
        None => return Err(CliError::Input("the data file is empty".into())),
    };
    let has_lab = match header.get(0).map(str::to_ascii_lowercase).as_deref() {
        Some("lab") => true,
        Some("operator") => false,
        _ => {
            return Err(parse_error(
                header.position().map_or(1, |p| p.line()),
                "header must start with `lab,operator` or `operator`",
            ))
        }
    };
    let id_columns = if has_lab { 2 } else { 1 };

    // labs in order of first appearance
    let mut labs: Vec<(String, Vec<Observation>, HashSet<String>)> = Vec::new();
    for record in records {
        let record = record.map_err(|e| {
            parse_error(e.position().map_or(0, |p| p.line()), e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != id_columns + n {
            return Err(parse_error(
                line,
                format!(
                    "expected {} columns ({} id, {n} items), found {}",
                    id_columns + n,
                    id_columns,
                    record.len()
                ),
            ));
        }
        let lab_id = if has_lab { record[0].to_string() } else { String::new() };
        let operator = record[id_columns - 1].to_string();
        if operator.is_empty() || (has_lab && lab_id.is_empty()) {
            return Err(parse_error(line, "empty lab or operator id"));
        }
        let mut items = Vec::with_capacity(n);
        for field in record.iter().skip(id_columns) {
            let item: usize = field
                .parse()
                .map_err(|_| parse_error(line, format!("item {field:?} is not a positive integer")))?;
            if item == 0 || item > universe {
                return Err(parse_error(
                    line,
                    format!("unknown item {item}; items are numbered 1..={universe}"),
                ));
            }
            if items.contains(&(item - 1)) {
                return Err(parse_error(line, format!("duplicate item {item} in selection")));
            }
            items.push(item - 1);
        }
        let subset = Subset::from_indices(universe, &items)?;
        let pos = match labs.iter().position(|l| l.0 == lab_id) {
            Some(p) => p,
            None => {
                labs.push((lab_id.clone(), Vec::new(), HashSet::new()));
                labs.len() - 1
            }
        };
        let lab = &mut labs[pos];
        if !lab.2.insert(operator.clone()) {
            return Err(parse_error(line, format!("duplicate operator id {operator:?}")));
        }
        lab.1.push(Observation {
            id: operator,
            subset,
        });
    }
    match labs.len() {
        0 => Err(CliError::Input("the data file has no observations".into())),
        1 => {
            let (_, observations, _) = labs.pop().unwrap();
            Ok(Input::Pooled(Dataset::new(ground, n, observations)?))
        }
        _ => {
            let labs = labs
                .into_iter()
                .map(|(id, observations, _)| Lab { id, observations })
                .collect();
            Ok(Input::Grouped(GroupedDataset::new(ground, n, labs)?))
        }
    }
}

/// Writes `input` in the format read by [`parse_csv`].
pub fn write_csv<W: Write>(writer: W, input: &Input) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(writer);
    let n = input.n();
    let mut header = vec!["lab".to_string(), "operator".to_string()];
    header.extend((1..=n).map(|i| format!("item{i}")));
    w.write_record(&header)?;
    let mut row = |lab: &str, obs: &Observation| -> Result<(), CliError> {
        let mut fields = vec![lab.to_string(), obs.id.clone()];
        fields.extend(obs.subset.indices().map(|i| (i + 1).to_string()));
        w.write_record(&fields)?;
        Ok(())
    };
    match input {
        Input::Pooled(d) => {
            for obs in d.observations() {
                row("L1", obs)?;
            }
        }
        Input::Grouped(d) => {
            for lab in d.labs() {
                for obs in &lab.observations {
                    row(&lab.id, obs)?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

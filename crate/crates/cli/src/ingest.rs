//! Long-format measurement CSV: `dim_id,value,lsl,usl,nominal`, one row per
//! measurement. Limits may be empty but must agree across a dimension's rows.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use uccap_core::capability::{DimensionSample, SpecLimits};

use crate::error::{CliError, CliResult};

const COLUMNS: [&str; 5] = ["dim_id", "value", "lsl", "usl", "nominal"];

type Limits = [Option<f64>; 3];

struct Group {
    limits: Limits,
    first_line: u64,
    values: Vec<f64>,
}

fn parse_opt(field: &str, name: &str, line: u64) -> CliResult<Option<f64>> {
    let field = field.trim();
    if field.is_empty() {
        return Ok(None);
    }
    field.parse::<f64>().map(Some).map_err(|_| CliError::ParseError {
        line,
        message: format!("{name} {field:?} is not a number"),
    })
}

fn same(a: &Limits, b: &Limits) -> bool {
    a.iter().zip(b).all(|(x, y)| x.map(f64::to_bits) == y.map(f64::to_bits))
}

pub fn ingest_csv(path: &Path) -> CliResult<Vec<DimensionSample>> {
    ingest_reader(std::fs::File::open(path)?)
}

/// Samples sorted by `dim_id`, values in file order.
///
/// A row with an empty `value` declares a dimension without adding a
/// measurement; a dimension that never receives one is an error.
pub fn ingest_reader(reader: impl Read) -> CliResult<Vec<DimensionSample>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    let col = |name: &str| -> CliResult<usize> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::ParseError {
                line: 1,
                message: format!("header is missing column {name:?} (expected {})", COLUMNS.join(",")),
            })
    };
    let mut idx = [0usize; 5];
    for (slot, name) in idx.iter_mut().zip(COLUMNS) {
        *slot = col(name)?;
    }
    let [i_dim, i_val, i_lsl, i_usl, i_nom] = idx;

    let mut groups: BTreeMap<String, Group> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::ParseError {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let get = |i: usize| rec.get(i).unwrap_or("");
        let dim = get(i_dim);
        if dim.is_empty() {
            return Err(CliError::ParseError {
                line,
                message: "empty dim_id".into(),
            });
        }
        let limits = [
            parse_opt(get(i_lsl), "lsl", line)?,
            parse_opt(get(i_usl), "usl", line)?,
            parse_opt(get(i_nom), "nominal", line)?,
        ];
        let value = parse_opt(get(i_val), "value", line)?;
        let g = groups.entry(dim.to_string()).or_insert_with(|| Group {
            limits,
            first_line: line,
            values: Vec::new(),
        });
        if !same(&g.limits, &limits) {
            return Err(CliError::InconsistentSpec {
                dim_id: dim.to_string(),
                line,
            });
        }
        g.values.extend(value);
    }

    groups
        .into_iter()
        .map(|(dim, g)| {
            if g.values.is_empty() {
                return Err(CliError::EmptyDimension(dim));
            }
            let [lsl, usl, nominal] = g.limits;
            let spec = SpecLimits::new(lsl, usl, nominal).map_err(|e| CliError::ParseError {
                line: g.first_line,
                message: format!("dimension {dim:?}: {e}"),
            })?;
            Ok(DimensionSample::new(dim, g.values, spec)?)
        })
        .collect()
}

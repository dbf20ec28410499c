//! TOML run configs with `a.b.c=value` overrides.

use std::path::Path;

use greenfl_core::runner::RunConfig;
use serde::Deserialize;
use toml::{Table, Value};

use crate::{io_err, Error, Result};

/// Parses an override value as a TOML literal, falling back to a bare
/// string so that `selection.strategy=repclust` needs no quotes.
fn parse_value(raw: &str) -> Value {
    let wrapped = format!("v = {raw}");
    match wrapped.parse::<Table>() {
        Ok(mut t) => t
            .remove("v")
            .unwrap_or_else(|| Value::String(raw.to_owned())),
        Err(_) => Value::String(raw.to_owned()),
    }
}

/// Sets `path` (dot separated, case-insensitive) to `value` inside `table`,
/// creating intermediate tables as needed.
pub fn apply_override(table: &mut Table, path: &str, value: &str) -> Result<()> {
    let keys: Vec<String> = path
        .split('.')
        .map(|k| k.trim().to_ascii_lowercase())
        .collect();
    if keys.iter().any(String::is_empty) {
        return Err(Error::Invalid(format!("bad override key `{path}`")));
    }
    let (last, parents) = keys.split_last().expect("split yields at least one key");
    let mut cur = table;
    for k in parents {
        let entry = cur
            .entry(k.clone())
            .or_insert_with(|| Value::Table(Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Invalid(format!("override `{path}`: `{k}` is not a table")))?;
    }
    cur.insert(last.clone(), parse_value(value));
    Ok(())
}

/// Splits `key=value`.
pub fn split_override(arg: &str) -> Result<(&str, &str)> {
    arg.split_once('=')
        .ok_or_else(|| Error::Invalid(format!("override `{arg}` is not key=value")))
}

/// Builds a config from TOML text and overrides, then validates it.
pub fn config_from_str(text: &str, overrides: &[(String, String)]) -> Result<RunConfig> {
    let mut table: Table = text.parse()?;
    lowercase_selection_keys(&mut table);
    for (k, v) in overrides {
        apply_override(&mut table, k, v)?;
    }
    let cfg = RunConfig::deserialize(Value::Table(table))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Reads `path` (or starts from defaults when `None`) and applies overrides.
pub fn load_config(path: Option<&Path>, overrides: &[(String, String)]) -> Result<RunConfig> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(io_err(p))?,
        None => String::new(),
    };
    config_from_str(&text, overrides)
}

/// `K`, `G` and `D` are accepted in files; overrides are lowercased, so the
/// file keys are normalized too to keep one spelling per field.
fn lowercase_selection_keys(table: &mut Table) {
    if let Some(Value::Table(sel)) = table.get_mut("selection") {
        for key in ["K", "G", "D"] {
            if let Some(v) = sel.remove(key) {
                sel.insert(key.to_ascii_lowercase(), v);
            }
        }
    }
}

//! Config file loading and dotted-key overrides.
//!
//! The config file is TOML with the same sections as [`PipelineConfig`].
//! Overrides are `section.key=value` pairs applied to the parsed table
//! before it is turned into a config, so unknown keys are rejected the same
//! way whether they come from the file or the command line.

use std::fs;
use std::path::Path;

use hera_core::PipelineConfig;
use toml::{Table, Value};

use crate::error::CliError;

/// Parses `raw` as a TOML value; anything that is not valid TOML is taken
/// as a bare string, so `reorder.strategy=chain_order` needs no quotes.
pub fn parse_value(raw: &str) -> Value {
    toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

/// Sets `dotted` (e.g. `packaging.k`) in `table`, creating sections as needed.
pub fn set_path(table: &mut Table, dotted: &str, value: Value) -> Result<(), CliError> {
    let parts: Vec<&str> = dotted.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("malformed key {dotted:?}")));
    }
    let (last, sections) = parts.split_last().expect("split yields at least one part");
    let mut cursor = table;
    for section in sections {
        let entry = cursor
            .entry(section.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        cursor = match entry {
            Value::Table(t) => t,
            _ => return Err(CliError::Config(format!("{section} in {dotted:?} is not a section"))),
        };
    }
    cursor.insert(last.to_string(), value);
    Ok(())
}

/// Splits a `key=value` override.
pub fn split_override(raw: &str) -> Result<(&str, &str), CliError> {
    raw.split_once('=')
        .map(|(k, v)| (k.trim(), v.trim()))
        .filter(|(k, _)| !k.is_empty())
        .ok_or_else(|| CliError::Config(format!("override {raw:?} is not key=value")))
}

pub fn read_table(path: &Path) -> Result<Table, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Builds the effective configuration: file (if any), then overrides in order.
pub fn resolve(file: Option<&Path>, overrides: &[(String, Value)]) -> Result<PipelineConfig, CliError> {
    let mut table = match file {
        Some(path) => read_table(path)?,
        None => Table::new(),
    };
    for (key, value) in overrides {
        set_path(&mut table, key, value.clone())?;
    }
    let config: PipelineConfig = Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
    config.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(config)
}

/// Rewrites `--section.key=value` and `--section.key value` into
/// `--set section.key=value` so clap sees one generic override flag.
pub fn expand_dotted_flags<I: IntoIterator<Item = String>>(args: I) -> Vec<String> {
    let mut out = Vec::new();
    let mut iter = args.into_iter().peekable();
    if let Some(program) = iter.next() {
        out.push(program);
    }
    while let Some(arg) = iter.next() {
        if arg == "--" {
            out.push(arg);
            out.extend(iter);
            break;
        }
        let Some(body) = arg.strip_prefix("--") else {
            out.push(arg);
            continue;
        };
        let key = body.split_once('=').map_or(body, |(k, _)| k);
        if !key.contains('.') {
            out.push(arg);
            continue;
        }
        out.push("--set".into());
        if body.contains('=') {
            out.push(body.to_string());
        } else {
            let value = iter.next_if(|next| !next.starts_with("--")).unwrap_or_else(|| "true".into());
            out.push(format!("{key}={value}"));
        }
    }
    out
}

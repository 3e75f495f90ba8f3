//! Flat `key = value` configuration files merged under command-line flags.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::Path;

use crate::error::{Error, Result};

/// Parses `key = value` lines. `#` starts a comment; blank lines are skipped.
/// Keys are long flag names without the leading dashes.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or_default().trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::parse(
                i + 1,
                format!("expected key=value, got `{line}`"),
            ));
        };
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        if key.is_empty() {
            return Err(Error::parse(i + 1, "empty key"));
        }
        if out.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(Error::parse(i + 1, format!("duplicate key `{key}`")));
        }
    }
    Ok(out)
}

fn flag_given(args: &[OsString], key: &str) -> bool {
    let long = format!("--{key}");
    let prefix = format!("{long}=");
    args.iter().any(|a| {
        let a = a.to_string_lossy();
        a == long || a.starts_with(&prefix)
    })
}

fn config_path(args: &[OsString]) -> Result<Option<OsString>> {
    let mut iter = args.iter();
    while let Some(a) = iter.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return iter
                .next()
                .cloned()
                .map(Some)
                .ok_or_else(|| Error::invalid("--config needs a path"));
        }
        if let Some(rest) = s.strip_prefix("--config=") {
            return Ok(Some(OsString::from(rest)));
        }
    }
    Ok(None)
}

/// Appends config-file entries as flags unless the same flag is already on
/// the command line. Boolean entries are written `key = true`.
pub fn merge_config_args(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(path) = config_path(&args)? else {
        return Ok(args);
    };
    let path = Path::new(&path);
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::invalid(format!("cannot read config {}: {e}", path.display())))?;
    let entries = parse_config(&text)?;
    let mut merged = args.clone();
    for (key, value) in entries {
        if key == "config" || flag_given(&args, &key) {
            continue;
        }
        match value.as_str() {
            "true" => merged.push(format!("--{key}").into()),
            "false" => {}
            _ => merged.push(format!("--{key}={value}").into()),
        }
    }
    Ok(merged)
}

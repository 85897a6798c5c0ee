//! `--config FILE` support: the file's keys become flags placed before the
//! ones typed on the command line, so typed flags win.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde_json::Value;

use crate::UsageError;

fn config_path(argv: &[OsString]) -> Result<Option<PathBuf>> {
    let mut found = None;
    let mut it = argv.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            let v = it.next().ok_or_else(|| UsageError("--config needs a file".into()))?;
            found = Some(PathBuf::from(v));
        } else if let Some(v) = s.strip_prefix("--config=") {
            found = Some(PathBuf::from(v));
        }
    }
    Ok(found)
}

/// Flags encoded by a JSON object. A run manifest contributes its `config`
/// member.
pub fn flags_from_json(value: &Value) -> Result<Vec<OsString>> {
    let obj = match value {
        Value::Object(m) => match m.get("config") {
            Some(Value::Object(inner)) if m.contains_key("command") => inner,
            _ => m,
        },
        _ => bail!(UsageError("config file must hold a JSON object".into())),
    };
    let mut out = Vec::new();
    for (key, v) in obj {
        if key == "config" {
            continue;
        }
        let flag = format!("--{}", key.replace('_', "-"));
        let text = match v {
            Value::Null | Value::Bool(false) => continue,
            Value::Bool(true) => {
                out.push(flag.into());
                continue;
            }
            Value::String(s) => s.clone(),
            Value::Number(n) => n.to_string(),
            Value::Array(items) => items
                .iter()
                .map(|i| match i {
                    Value::String(s) => s.clone(),
                    other => other.to_string(),
                })
                .collect::<Vec<_>>()
                .join(","),
            Value::Object(_) => bail!(UsageError(format!("config key {key:?} holds an object"))),
        };
        out.push(flag.into());
        out.push(text.into());
    }
    Ok(out)
}

fn load(path: &Path) -> Result<Vec<OsString>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let value: Value = serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
    flags_from_json(&value)
}

/// Inserts flags from `--config` right after the subcommand name.
pub fn expand(argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(path) = config_path(&argv)? else {
        return Ok(argv);
    };
    let Some(pos) = argv.iter().skip(1).position(|a| !a.to_string_lossy().starts_with('-')) else {
        return Ok(argv);
    };
    let at = pos + 2;
    let mut out: Vec<OsString> = argv[..at].to_vec();
    out.extend(load(&path)?);
    out.extend_from_slice(&argv[at..]);
    Ok(out)
}

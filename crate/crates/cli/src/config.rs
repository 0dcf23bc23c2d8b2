//! `--config FILE` support.
//!
//! The file is a JSON object. Top-level scalar keys are global flags; an
//! object under a subcommand name holds that subcommand's flags. Values are
//! turned into ordinary command-line flags and inserted after the subcommand,
//! skipping any flag the user already passed, so explicit flags always win.

use std::collections::HashSet;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde_json::Value;

const SUBCOMMANDS: &[&str] = &[
    "fingerprint",
    "launder",
    "train",
    "score",
    "eval",
    "fuse",
    "calibrate",
    "selftest",
];

/// Flag whose default comes from the environment; the environment beats the file.
const ENV_FLAGS: &[(&str, &str)] = &[("threads", "SYNTHPRINT_THREADS")];

fn config_path(argv: &[String]) -> Result<Option<String>> {
    let mut it = argv.iter().skip(1);
    while let Some(a) = it.next() {
        if a == "--" {
            break;
        }
        if a == "--config" {
            return match it.next() {
                Some(p) => Ok(Some(p.clone())),
                None => bail!("--config requires a file path"),
            };
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Ok(Some(p.to_string()));
        }
    }
    Ok(None)
}

fn given_flags(argv: &[String]) -> HashSet<String> {
    argv.iter()
        .skip(1)
        .take_while(|a| a.as_str() != "--")
        .filter_map(|a| a.strip_prefix("--"))
        .map(|a| a.split('=').next().unwrap_or(a).to_string())
        .collect()
}

fn flag_name(key: &str) -> String {
    key.replace('_', "-")
}

fn scalar_text(key: &str, v: &Value) -> Result<String> {
    Ok(match v {
        Value::String(s) => s.clone(),
        Value::Number(n) => n.to_string(),
        Value::Bool(b) => b.to_string(),
        _ => bail!("config key `{key}` must be a string, number or boolean"),
    })
}

fn push_flag(out: &mut Vec<String>, key: &str, v: &Value) -> Result<()> {
    let name = format!("--{}", flag_name(key));
    match v {
        Value::Null => {}
        Value::Array(items) => {
            out.push(name);
            for item in items {
                out.push(scalar_text(key, item)?);
            }
        }
        other => {
            out.push(name);
            out.push(scalar_text(key, other)?);
        }
    }
    Ok(())
}

/// Flags contributed by the config file for `subcommand`.
pub fn config_flags(config: &Value, subcommand: &str, given: &HashSet<String>) -> Result<Vec<String>> {
    let obj = config
        .as_object()
        .context("config file must contain a JSON object")?;
    let mut out = Vec::new();
    let add = |key: &str, v: &Value, out: &mut Vec<String>| -> Result<()> {
        let name = flag_name(key);
        if name == "config" || given.contains(&name) {
            return Ok(());
        }
        if ENV_FLAGS
            .iter()
            .any(|(f, env)| *f == name && std::env::var_os(env).is_some())
        {
            return Ok(());
        }
        push_flag(out, key, v)
    };
    for (key, v) in obj {
        if SUBCOMMANDS.contains(&key.as_str()) {
            continue;
        }
        if v.is_object() {
            bail!("config section `{key}` is not a subcommand");
        }
        add(key, v, &mut out)?;
    }
    if let Some(section) = obj.get(subcommand) {
        let section = section
            .as_object()
            .with_context(|| format!("config section `{subcommand}` must be an object"))?;
        for (key, v) in section {
            add(key, v, &mut out)?;
        }
    }
    Ok(out)
}

/// Rewrites `argv` with the values of the `--config` file merged in.
pub fn expand_config(argv: Vec<String>) -> Result<Vec<String>> {
    let Some(path) = config_path(&argv)? else {
        return Ok(argv);
    };
    let Some(pos) = argv
        .iter()
        .skip(1)
        .position(|a| SUBCOMMANDS.contains(&a.as_str()))
        .map(|p| p + 1)
    else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(Path::new(&path))
        .with_context(|| format!("cannot read config file {path}"))?;
    let config: Value =
        serde_json::from_str(&text).with_context(|| format!("invalid JSON in config file {path}"))?;
    let extra = config_flags(&config, &argv[pos], &given_flags(&argv))?;
    let mut out = argv[..=pos].to_vec();
    out.extend(extra);
    out.extend_from_slice(&argv[pos + 1..]);
    Ok(out)
}

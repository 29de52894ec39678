//! Plain-text `key=value` run configuration.
//!
//! Keys are the long flag names of the subcommand. A file value is used only
//! when the flag is absent from the command line.

use std::collections::BTreeSet;

use clap::Command;
use serde::Serialize;

use crate::Failure;

/// Parses `key=value` lines. Blank lines and lines starting with `#` are skipped.
pub fn parse(text: &str) -> Result<Vec<(String, String)>, String> {
    let mut entries: Vec<(String, String)> = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .filter(|(k, _)| !k.is_empty())
            .ok_or_else(|| format!("line {}: expected key=value, got '{line}'", no + 1))?;
        if entries.iter().any(|(k, _)| k == key) {
            return Err(format!("line {}: duplicate key '{key}'", no + 1));
        }
        entries.push((key.to_string(), value.to_string()));
    }
    Ok(entries)
}

/// Long flag names given on the command line after the subcommand.
fn given_flags(args: &[String]) -> BTreeSet<String> {
    args.iter()
        .filter_map(|a| a.strip_prefix("--"))
        .map(|a| a.split_once('=').map_or(a, |(k, _)| k).to_string())
        .collect()
}

fn flag_value(args: &[String], name: &str) -> Option<String> {
    let long = format!("--{name}");
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if *a == long {
            return it.next().cloned();
        }
        if let Some(v) = a.strip_prefix(&format!("{long}=")) {
            return Some(v.to_string());
        }
    }
    None
}

/// Splices the values of `--config FILE` into the argument list, ahead of the
/// explicit flags.
pub fn expand(args: Vec<String>, command: &Command) -> Result<Vec<String>, Failure> {
    let Some(sub_name) = args.get(1) else { return Ok(args) };
    let Some(sub) = command.find_subcommand(sub_name) else { return Ok(args) };
    let rest = &args[2..];
    let Some(path) = flag_value(rest, "config") else { return Ok(args) };
    let text =
        std::fs::read_to_string(&path).map_err(|e| Failure::Usage(format!("cannot read config file {path}: {e}")))?;
    let entries = parse(&text).map_err(|e| Failure::Usage(format!("{path}: {e}")))?;
    let given = given_flags(rest);
    let mut out = args[..2].to_vec();
    for (key, value) in entries {
        let arg = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(key.as_str()) && key != "config")
            .ok_or_else(|| Failure::Usage(format!("{path}: unknown key '{key}' for '{sub_name}'")))?;
        if given.contains(&key) {
            continue;
        }
        let takes_value = arg.get_num_args().is_none_or(|r| r.takes_values());
        if takes_value {
            out.push(format!("--{key}={value}"));
        } else {
            match value.as_str() {
                "true" => out.push(format!("--{key}")),
                "false" => {}
                _ => return Err(Failure::Usage(format!("{path}: '{key}' expects true or false"))),
            }
        }
    }
    out.extend_from_slice(rest);
    Ok(out)
}

/// Renders resolved options as `key=value` lines that parse back to the same run.
pub fn render<S: Serialize>(options: &S) -> String {
    let value = serde_json::to_value(options).expect("options serialize");
    let mut out = String::new();
    let serde_json::Value::Object(map) = value else { unreachable!("options are a struct") };
    for (key, v) in map {
        let text = match v {
            serde_json::Value::Null => continue,
            serde_json::Value::String(s) => s,
            serde_json::Value::Array(items) => {
                if items.is_empty() {
                    continue;
                }
                items.iter().map(scalar_text).collect::<Vec<_>>().join(",")
            }
            other => scalar_text(&other),
        };
        out.push_str(&key.replace('_', "-"));
        out.push('=');
        out.push_str(&text);
        out.push('\n');
    }
    out
}

fn scalar_text(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_blanks() {
        let e = parse("# run\n\nresponse = y\nnu=0.05\n").unwrap();
        assert_eq!(e, vec![("response".into(), "y".into()), ("nu".into(), "0.05".into())]);
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(parse("response y\n").is_err());
        assert!(parse("=3\n").is_err());
        assert!(parse("nu=1\nnu=2\n").is_err());
    }

    #[test]
    fn flags_on_the_command_line() {
        let args: Vec<String> = ["--nu", "0.2", "--seed=3", "x.csv"].iter().map(|s| s.to_string()).collect();
        assert_eq!(given_flags(&args), ["nu", "seed"].iter().map(|s| s.to_string()).collect());
        assert_eq!(flag_value(&args, "seed").as_deref(), Some("3"));
    }
}

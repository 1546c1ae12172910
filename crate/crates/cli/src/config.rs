//! `key=value` config files.
//!
//! A key names an option of some subcommand as `<command path>.<option>`
//! (`patlak.t-star`, `phantom.generate.noise-scale`) or a global option by
//! its bare name. Values for the running command are appended to the
//! command line unless the option was given there, so clap validates them
//! exactly like typed flags.

use std::collections::BTreeMap;
use std::path::Path;

use clap::{ArgMatches, Command};

use crate::CliError;

/// Globals that may appear in a config file.
const GLOBAL_KEYS: [&str; 3] = ["workers", "log-level", "seed"];
/// Globals that change results and so belong in a snapshot.
const SNAPSHOT_GLOBALS: [&str; 1] = ["seed"];

/// Long options of `cmd`, without help/version and the globals.
fn options(cmd: &Command) -> Vec<String> {
    cmd.get_arguments()
        .filter(|a| !a.is_global_set())
        .filter_map(|a| a.get_long().map(str::to_string))
        .filter(|l| l != "help" && l != "version" && l != "config")
        .collect()
}

/// Every valid `<path>.<option>` key.
pub fn all_keys(root: &Command) -> Vec<String> {
    fn walk(cmd: &Command, prefix: &str, out: &mut Vec<String>) {
        for sub in cmd.get_subcommands() {
            let path = if prefix.is_empty() {
                sub.get_name().to_string()
            } else {
                format!("{prefix}.{}", sub.get_name())
            };
            for o in options(sub) {
                out.push(format!("{path}.{o}"));
            }
            walk(sub, &path, out);
        }
    }
    let mut out: Vec<String> = GLOBAL_KEYS.iter().map(|s| s.to_string()).collect();
    walk(root, "", &mut out);
    out
}

pub fn parse_config(text: &str, root: &Command) -> Result<BTreeMap<String, String>, CliError> {
    let known = all_keys(root);
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |msg: String| CliError::Usage(format!("config line {}: {msg}", n + 1));
        let (k, v) = line.split_once('=').ok_or_else(|| bad(format!("expected key=value, found `{line}`")))?;
        let (k, v) = (k.trim(), v.trim());
        if !known.iter().any(|x| x == k) {
            return Err(bad(format!("unknown key `{k}`")));
        }
        if out.insert(k.to_string(), v.to_string()).is_some() {
            return Err(bad(format!("duplicate key `{k}`")));
        }
    }
    Ok(out)
}

/// Global options that take a value, so their value is skipped when looking
/// for the subcommand.
fn global_takes_value(flag: &str) -> bool {
    matches!(flag, "--config" | "--workers" | "--log-level" | "--seed")
}

/// The subcommand path named on the command line (`["phantom", "generate"]`).
fn command_path(args: &[String], root: &Command) -> Vec<String> {
    let mut path = vec![];
    let mut cmd = root;
    let mut i = 1;
    while i < args.len() {
        let a = &args[i];
        if a.starts_with('-') {
            if global_takes_value(a) {
                i += 1;
            }
            i += 1;
            continue;
        }
        match cmd.find_subcommand(a) {
            Some(sub) => {
                path.push(a.clone());
                cmd = sub;
            }
            None => break,
        }
        i += 1;
    }
    path
}

fn config_path(args: &[String]) -> Option<String> {
    args.iter().enumerate().find_map(|(i, a)| {
        if a == "--config" {
            args.get(i + 1).cloned()
        } else {
            a.strip_prefix("--config=").map(str::to_string)
        }
    })
}

fn given(args: &[String], long: &str) -> bool {
    let flag = format!("--{long}");
    let eq = format!("{flag}=");
    args.iter().any(|a| *a == flag || a.starts_with(&eq))
}

/// Append config-file values for the running command to `args`.
pub fn expand_args(mut args: Vec<String>, root: &Command) -> Result<Vec<String>, CliError> {
    let Some(file) = config_path(&args) else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(Path::new(&file)).map_err(|e| CliError::Usage(format!("config {file}: {e}")))?;
    let values = parse_config(&text, root)?;
    let path = command_path(&args, root);
    let mut cmd = root;
    for p in &path {
        cmd = cmd.find_subcommand(p).expect("path found above");
    }
    let prefix = path.join(".");
    let mut extra = vec![];
    for (key, value) in &values {
        let long = if GLOBAL_KEYS.contains(&key.as_str()) {
            key.as_str()
        } else {
            match key.strip_prefix(&prefix).and_then(|r| r.strip_prefix('.')) {
                Some(l) if !prefix.is_empty() && !l.contains('.') => l,
                _ => continue,
            }
        };
        if given(&args, long) {
            continue;
        }
        let arg = cmd
            .get_arguments()
            .chain(root.get_arguments())
            .find(|a| a.get_long() == Some(long))
            .expect("key validated against the command tree");
        if arg.get_action().takes_values() {
            extra.push(format!("--{long}={value}"));
        } else {
            match value.as_str() {
                "true" => extra.push(format!("--{long}")),
                "false" => {}
                _ => return Err(CliError::Usage(format!("config key `{key}` expects true or false"))),
            }
        }
    }
    args.extend(extra);
    Ok(args)
}

/// The resolved, result-affecting settings of the leaf command: every
/// option (defaults included) plus the seed, as `key=value`. Thread count and
/// log level are left out because they do not change outputs.
pub fn snapshot(root: &Command, matches: &ArgMatches) -> Vec<(String, String)> {
    let mut path = vec![];
    let mut cmd = root;
    let mut m = matches;
    while let Some((name, sub)) = m.subcommand() {
        path.push(name.to_string());
        cmd = cmd.find_subcommand(name).expect("matched subcommand exists");
        m = sub;
    }
    let prefix = path.join(".");
    let mut out = vec![];
    for g in SNAPSHOT_GLOBALS {
        if let Some(v) = raw(m, g) {
            out.push((g.to_string(), v));
        }
    }
    for a in cmd.get_arguments().filter(|a| !a.is_global_set()) {
        let Some(long) = a.get_long() else { continue };
        if long == "help" {
            continue;
        }
        if let Some(v) = raw(m, a.get_id().as_str()) {
            out.push((format!("{prefix}.{long}"), v));
        }
    }
    out
}

fn raw(m: &ArgMatches, id: &str) -> Option<String> {
    let vals = m.get_raw(id)?;
    Some(vals.map(|v| v.to_string_lossy().into_owned()).collect::<Vec<_>>().join(","))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::Cli;
    use clap::CommandFactory;

    fn argv(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn keys_cover_nested_commands() {
        let keys = all_keys(&Cli::command());
        assert!(keys.contains(&"patlak.t-star".to_string()));
        assert!(keys.contains(&"phantom.generate.noise-scale".to_string()));
        assert!(keys.contains(&"workers".to_string()));
        assert!(!keys.iter().any(|k| k.ends_with(".help")));
    }

    #[test]
    fn unknown_and_malformed_keys_rejected() {
        let root = Cli::command();
        assert!(parse_config("patlak.t-star=30\n# comment\n", &root).is_ok());
        assert!(parse_config("patlak.tstar=30\n", &root).is_err());
        assert!(parse_config("patlak.t-star\n", &root).is_err());
        assert!(parse_config("seed=1\nseed=2\n", &root).is_err());
    }

    #[test]
    fn path_skips_global_values() {
        let root = Cli::command();
        let p = command_path(&argv("dpet --workers 4 phantom generate --out x"), &root);
        assert_eq!(p, ["phantom", "generate"]);
        let p = command_path(&argv("dpet --seed 3 patlak --input a"), &root);
        assert_eq!(p, ["patlak"]);
    }
}

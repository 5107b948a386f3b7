//! `--config` files: one `key=value` per line, where `key` is a long flag
//! name. `#` starts a comment. Values from the command line win.

use std::fs;

use crate::commands::CliError;

const GLOBAL_WITH_VALUE: [&str; 3] = ["--seed", "--config", "--threads"];

fn is_global_with_value(arg: &str) -> bool {
    GLOBAL_WITH_VALUE.contains(&arg)
}

pub fn parse_config(text: &str) -> Result<Vec<String>, CliError> {
    let mut args = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::Usage(format!("config line {}: expected key=value, got {raw:?}", i + 1))
        })?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || key == "config" {
            return Err(CliError::Usage(format!("config line {}: invalid key {key:?}", i + 1)));
        }
        match value {
            "true" => args.push(format!("--{key}")),
            "false" => {}
            _ => {
                args.push(format!("--{key}"));
                args.push(value.to_string());
            }
        }
    }
    Ok(args)
}

/// Rewrites argv so config-file options come first after the subcommand
/// and every explicit option follows them.
pub fn expand_config(argv: Vec<String>) -> Result<Vec<String>, CliError> {
    let mut config_path = None;
    let mut leading_globals = Vec::new();
    let mut sub_index = None;
    let mut i = 1;
    while i < argv.len() {
        let arg = &argv[i];
        if is_global_with_value(arg) && i + 1 < argv.len() {
            if sub_index.is_none() {
                leading_globals.push(arg.clone());
                leading_globals.push(argv[i + 1].clone());
            }
            if arg == "--config" {
                config_path = Some(argv[i + 1].clone());
            }
            i += 2;
            continue;
        }
        if let Some(path) = arg.strip_prefix("--config=") {
            config_path = Some(path.to_string());
        }
        if sub_index.is_none() {
            if arg.starts_with('-') {
                leading_globals.push(arg.clone());
            } else {
                sub_index = Some(i);
            }
        }
        i += 1;
    }

    let (Some(path), Some(sub)) = (config_path, sub_index) else {
        return Ok(argv);
    };
    let text = fs::read_to_string(&path).map_err(|e| CliError::Io(format!("config {path}: {e}")))?;
    let from_file = parse_config(&text)?;

    let mut out = vec![argv[0].clone(), argv[sub].clone()];
    out.extend(from_file);
    out.extend(argv[sub + 1..].iter().cloned());
    out.extend(leading_globals);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strings(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn parses_pairs_flags_and_comments() {
        let args = parse_config("# comment\nlr = 0.1\n\ngt-boxes=true\nall-point=false\nepochs=3 # trailing\n").unwrap();
        assert_eq!(args, strings(&["--lr", "0.1", "--gt-boxes", "--epochs", "3"]));
        assert!(parse_config("lr 0.1\n").is_err());
        assert!(parse_config("=3\n").is_err());
    }

    #[test]
    fn cli_values_follow_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.cfg");
        fs::write(&cfg, "lr=0.5\nseed=3\n").unwrap();
        let argv = strings(&["wsfl", "--seed", "9", "--config", cfg.to_str().unwrap(), "train-head", "--lr", "0.2"]);
        let out = expand_config(argv).unwrap();
        assert_eq!(
            out,
            strings(&["wsfl", "train-head", "--lr", "0.5", "--seed", "3", "--lr", "0.2", "--seed", "9", "--config", cfg.to_str().unwrap()])
        );
    }

    #[test]
    fn without_config_argv_is_untouched() {
        let argv = strings(&["wsfl", "--threads", "2", "predict", "--head", "h"]);
        assert_eq!(expand_config(argv.clone()).unwrap(), argv);
    }
}

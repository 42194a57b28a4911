//! `--config FILE` support.
//!
//! A config file holds `key = value` lines whose keys are long flag names
//! (`_` and `-` are interchangeable). The file's entries are spliced in front
//! of the command-line flags, so with last-one-wins parsing the command line
//! overrides the file. `true` turns a switch on and `false` leaves it off.

use std::ffi::OsString;
use std::path::Path;

use crate::error::{CliError, Result};
use crate::formats::read_text;

/// Converts config text into flag arguments.
pub fn config_args(text: &str, path: &Path) -> Result<Vec<OsString>> {
    let mut args = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::format(path, format!("line {}: expected key=value", n + 1)))?;
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        if key.is_empty() || key == "config" {
            return Err(CliError::format(path, format!("line {}: invalid key {key:?}", n + 1)));
        }
        match value {
            "true" => args.push(format!("--{key}").into()),
            "false" => {}
            v => {
                args.push(format!("--{key}").into());
                args.push(v.into());
            }
        }
    }
    Ok(args)
}

/// Removes `--config FILE` from `args` (program name, subcommand, flags) and
/// inserts the file's flags right after the subcommand.
pub fn expand_config_args(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut rest = Vec::with_capacity(args.len());
    let mut config = None;
    let mut iter = args.into_iter();
    while let Some(arg) = iter.next() {
        let s = arg.to_string_lossy();
        if s == "--config" {
            let path = iter.next().ok_or_else(|| CliError::Usage("--config needs a file".into()))?;
            config = Some(path);
        } else if let Some(p) = s.strip_prefix("--config=") {
            config = Some(p.into());
        } else {
            rest.push(arg);
        }
    }
    let Some(path) = config else { return Ok(rest) };
    if rest.len() < 2 {
        return Err(CliError::Usage("--config must follow a subcommand".into()));
    }
    let path = Path::new(&path);
    let extra = config_args(&read_text(path)?, path)?;
    let tail = rest.split_off(2);
    rest.extend(extra);
    rest.extend(tail);
    Ok(rest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strings(v: Vec<OsString>) -> Vec<String> {
        v.into_iter().map(|s| s.into_string().unwrap()).collect()
    }

    #[test]
    fn lines_become_flags() {
        let text = "# comment\nk = 5\nsigma_prime=0.2\nresume=true\nplots=false\n";
        let args = strings(config_args(text, Path::new("c")).unwrap());
        assert_eq!(args, ["--k", "5", "--sigma-prime", "0.2", "--resume"]);
        assert!(config_args("no equals sign", Path::new("c")).is_err());
    }

    #[test]
    fn file_flags_precede_command_line_flags() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.cfg");
        std::fs::write(&cfg, "k=5\nseed=3\n").unwrap();
        let args = vec!["tempseg".into(), "cluster".into(), "--config".into(), cfg.into_os_string(), "--k".into(), "2".into()];
        let out = strings(expand_config_args(args).unwrap());
        assert_eq!(out, ["tempseg", "cluster", "--k", "5", "--seed", "3", "--k", "2"]);
    }
}

//! Flat `key = value` run manifests.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::ArgMatches;

pub const SUBCOMMAND_KEY: &str = "subcommand";
const ARG_PREFIX: &str = "arg.";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Manifest {
    pub entries: Vec<(String, String)>,
}

impl Manifest {
    /// Starts a manifest with the build metadata and every argument clap
    /// resolved for `sub` (explicit or default), keyed by its long flag.
    pub fn for_command(cmd: &clap::Command, sub: &str, matches: &ArgMatches) -> Self {
        let mut m = Manifest::default();
        m.push("version", env!("CARGO_PKG_VERSION"));
        m.push("rng", critlab_core::rng::RNG_ALGORITHM);
        m.push(SUBCOMMAND_KEY, sub);
        if let Some(sc) = cmd.find_subcommand(sub) {
            for arg in sc.get_arguments() {
                let Some(long) = arg.get_long() else { continue };
                let id = arg.get_id().as_str();
                if id == "help" {
                    continue;
                }
                if let Ok(Some(raw)) = matches.try_get_raw(id) {
                    let vals: Vec<String> = raw.map(|v| v.to_string_lossy().into_owned()).collect();
                    m.push(format!("{ARG_PREFIX}{long}"), vals.join(","));
                }
            }
        }
        m
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.push((key.into(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut m = Manifest::default();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once(" = ")
                .ok_or_else(|| format!("manifest line {}: expected `key = value`", no + 1))?;
            m.push(k.trim(), v.trim());
        }
        Ok(m)
    }

    /// Command line that reproduces the run, optionally with another output.
    pub fn argv(&self, out_override: Option<&Path>) -> Result<Vec<String>, String> {
        let sub = self.get(SUBCOMMAND_KEY).ok_or("manifest has no subcommand")?;
        let mut argv = vec!["critlab".to_string(), sub.to_string()];
        for (k, v) in &self.entries {
            if let Some(flag) = k.strip_prefix(ARG_PREFIX) {
                let v = match (flag, out_override) {
                    ("out", Some(o)) => o.to_string_lossy().into_owned(),
                    _ => v.clone(),
                };
                argv.push(format!("--{flag}"));
                argv.push(v);
            }
        }
        Ok(argv)
    }
}

/// Manifest location: `<out>.manifest` next to a file, `<dir>/manifest` inside a directory.
pub fn manifest_path(out: &Path, is_dir: bool) -> PathBuf {
    if is_dir {
        out.join("manifest")
    } else {
        sibling(out, "manifest")
    }
}

/// `<path>.<ext>`, keeping the original extension.
pub fn sibling(path: &Path, ext: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

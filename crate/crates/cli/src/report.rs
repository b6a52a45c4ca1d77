use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::error::CliError;

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Result of one command. Field order and map ordering are fixed so the
/// same command and seed give the same bytes.
#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub command: Vec<String>,
    pub checks: Vec<Check>,
    pub values: BTreeMap<String, Value>,
    pub seed: Option<u64>,
    pub pass: bool,
}

impl Report {
    pub fn new(command: Vec<String>) -> Self {
        Self { command, checks: Vec::new(), values: BTreeMap::new(), seed: None, pass: true }
    }

    /// Passes when `residual <= tolerance`.
    pub fn check(&mut self, name: impl Into<String>, residual: f64, tolerance: f64) -> bool {
        let pass = residual <= tolerance;
        self.checks.push(Check { name: name.into(), residual, tolerance, pass });
        self.pass &= pass;
        pass
    }

    pub fn value(&mut self, key: &str, v: impl Serialize) {
        let v = serde_json::to_value(v).expect("report values serialize");
        self.values.insert(key.to_string(), v);
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let mark = if c.pass { "ok  " } else { "FAIL" };
            writeln!(s, "{mark} {:<32} {:>11.3e} (tol {:.1e})", c.name, c.residual, c.tolerance).unwrap();
        }
        for (k, v) in &self.values {
            writeln!(s, "{k} = {v}").unwrap();
        }
        if let Some(seed) = self.seed {
            writeln!(s, "seed = {seed}").unwrap();
        }
        writeln!(s, "{}", if self.pass { "PASS" } else { "FAIL" }).unwrap();
        s
    }

    /// Print to stdout, or write JSON to `path` (`-` for stdout).
    pub fn emit(&self, json: Option<&Path>) -> Result<(), CliError> {
        match json {
            Some(p) if p.as_os_str() == "-" => print!("{}", self.to_json()),
            Some(p) => {
                fs::write(p, self.to_json()).map_err(|e| CliError::io(p, e))?;
                print!("{}", self.to_text());
            }
            None => print!("{}", self.to_text()),
        }
        Ok(())
    }
}

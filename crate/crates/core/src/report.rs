//! Structured check summaries rendered as `key: value` lines or a text table.

use std::fmt::Write as _;

use crate::certificates::{ConditionResult, VerificationReport};

#[derive(Debug, Clone, PartialEq)]
pub struct ReportEntry {
    pub name: String,
    pub pass: bool,
    pub checked: usize,
    pub worst_margin: f64,
    pub witness: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub scenario: String,
    pub entries: Vec<ReportEntry>,
    /// Scalar results that are not pass/fail checks.
    pub values: Vec<(String, String)>,
    pub regions: Vec<String>,
}

impl Report {
    pub fn new(scenario: impl Into<String>) -> Self {
        Report {
            scenario: scenario.into(),
            ..Default::default()
        }
    }

    pub fn check(&mut self, name: impl Into<String>, pass: bool, checked: usize, worst_margin: f64, witness: impl Into<String>) {
        self.entries.push(ReportEntry {
            name: name.into(),
            pass,
            checked,
            worst_margin,
            witness: witness.into(),
        });
    }

    pub fn condition(&mut self, prefix: &str, c: &ConditionResult) {
        let witness = c.witness.as_ref().map(|w| w.to_string()).unwrap_or_default();
        self.check(format!("{prefix}.{}", c.name), c.pass, c.checked, c.worst_margin, witness);
    }

    pub fn verification(&mut self, prefix: &str, v: &VerificationReport) {
        for c in &v.conditions {
            self.condition(prefix, c);
        }
        if !v.region.is_empty() && !self.regions.contains(&v.region) {
            self.regions.push(v.region.clone());
        }
    }

    pub fn value(&mut self, key: impl Into<String>, value: impl ToString) {
        self.values.push((key.into(), value.to_string()));
    }

    pub fn get_value(&self, key: &str) -> Option<&str> {
        self.values.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn entry(&self, name: &str) -> Option<&ReportEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn first_failure(&self) -> Option<&ReportEntry> {
        self.entries.iter().find(|e| !e.pass)
    }

    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "scenario: {}", self.scenario);
        let _ = writeln!(out, "pass: {}", self.pass());
        for (i, r) in self.regions.iter().enumerate() {
            let _ = writeln!(out, "region.{i}: {r}");
        }
        for e in &self.entries {
            let _ = writeln!(out, "check.{}.pass: {}", e.name, e.pass);
            let _ = writeln!(out, "check.{}.checked: {}", e.name, e.checked);
            let _ = writeln!(out, "check.{}.worst_margin: {:e}", e.name, e.worst_margin);
            if !e.witness.is_empty() {
                let _ = writeln!(out, "check.{}.witness: {}", e.name, e.witness);
            }
        }
        for (k, v) in &self.values {
            let _ = writeln!(out, "value.{k}: {v}");
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "scenario {}: {}", self.scenario, if self.pass() { "PASS" } else { "FAIL" });
        for r in &self.regions {
            let _ = writeln!(out, "sampled region: {r}");
        }
        if !self.entries.is_empty() {
            let width = self.entries.iter().map(|e| e.name.len()).max().unwrap_or(0).max(5);
            let _ = writeln!(out);
            let _ = writeln!(out, "{:<width$}  {:<6}  {:>8}  {:>13}  witness", "check", "status", "checked", "worst margin");
            for e in &self.entries {
                let _ = writeln!(
                    out,
                    "{:<width$}  {:<6}  {:>8}  {:>13.5e}  {}",
                    e.name,
                    if e.pass { "pass" } else { "FAIL" },
                    e.checked,
                    e.worst_margin,
                    e.witness
                );
            }
        }
        if !self.values.is_empty() {
            let width = self.values.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
            let _ = writeln!(out);
            for (k, v) in &self.values {
                let _ = writeln!(out, "{k:<width$}  {v}");
            }
        }
        out
    }
}

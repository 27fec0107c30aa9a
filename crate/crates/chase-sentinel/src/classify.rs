//! Combined verdicts: an acyclicity check as the termination side and the cyclicity notions
//! as the non-termination side.

use crate::cyclicity::{check, CheckOptions, CyclicityError, CyclicityResult, Notion, Verdict};
use crate::model::RuleSet;
use crate::termination::{check_acyclic, AcyclicBudget, AcyclicMode, AcyclicResult, AcyclicityVerdict, TerminationError};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::fmt;
use std::time::{Duration, Instant};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error(transparent)]
    Cyclicity(#[from] CyclicityError),
    #[error(transparent)]
    Termination(#[from] TerminationError),
    #[error("soundness violation: rule set is both terminating ({0}) and never-terminating ({1})")]
    SoundnessViolation(String, String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Combined {
    Terminating,
    NeverTerminating,
    Unknown,
}

impl fmt::Display for Combined {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Combined::Terminating => "terminating",
            Combined::NeverTerminating => "never-terminating",
            Combined::Unknown => "unknown",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Check {
    Acyclic,
    Cyclicity(Notion),
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Check::Acyclic => f.write_str("acyclic"),
            Check::Cyclicity(n) => write!(f, "{n}"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ClassifyOptions {
    /// Checks to run, in order.
    pub checks: Vec<Check>,
    /// Keep going after a definitive verdict.
    pub exhaustive: bool,
    pub k: u32,
    pub acyclic_mode: AcyclicMode,
    pub timeout: Option<Duration>,
    pub term_depth: u32,
    pub injectivity: bool,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions {
            checks: vec![Check::Acyclic, Check::Cyclicity(Notion::Drpc), Check::Cyclicity(Notion::RpcS)],
            exhaustive: false,
            k: 2,
            acyclic_mode: AcyclicMode::RmfaLike,
            timeout: None,
            term_depth: CheckOptions::default().max_term_depth,
            injectivity: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ClassificationReport {
    pub file: String,
    pub acyclic: Option<AcyclicityVerdict>,
    pub cyclicity: Vec<Verdict>,
    pub combined: Combined,
    pub wall_ms: u64,
}

impl ClassificationReport {
    pub fn cyclicity_result(&self, notion: Notion) -> Option<CyclicityResult> {
        self.cyclicity.iter().find(|v| v.notion == notion).map(|v| v.result)
    }

    pub fn witness(&self) -> Option<&Verdict> {
        self.cyclicity.iter().find(|v| v.witness.is_some())
    }

    pub fn to_json(&self, rules: &RuleSet) -> Value {
        let mut results: Vec<Value> = Vec::new();
        if let Some(a) = &self.acyclic {
            results.push(a.to_json());
        }
        results.extend(self.cyclicity.iter().map(|v| v.to_json(rules)));
        json!({
            "schema": SCHEMA_VERSION,
            "file": self.file,
            "notionResults": results,
            "combined": self.combined,
            "timings": { "totalMs": self.wall_ms },
        })
    }

    pub fn render(&self, rules: &RuleSet) -> String {
        let mut out = format!("{}: {}\n", self.file, self.combined);
        if let Some(a) = &self.acyclic {
            out.push_str(&format!("  acyclic ({}, k={}): {}\n", a.mode, a.k, a.result));
        }
        for v in &self.cyclicity {
            out.push_str(&format!("  {}: {}\n", v.notion, v.result));
        }
        if let Some(w) = self.witness().and_then(|v| v.witness.as_ref()) {
            out.push_str("witness:\n");
            for line in w.render(rules).lines() {
                out.push_str("  ");
                out.push_str(line);
                out.push('\n');
            }
        }
        out
    }
}

fn remaining(deadline: Option<Instant>) -> Option<Duration> {
    deadline.map(|d| d.saturating_duration_since(Instant::now()))
}

/// Runs the configured checks and combines them.
pub fn classify(file: &str, rules: &RuleSet, opts: &ClassifyOptions) -> Result<ClassificationReport, ClassifyError> {
    let start = Instant::now();
    let deadline = opts.timeout.map(|d| start + d);
    let mut acyclic = None;
    let mut cyclicity = Vec::new();
    for check_kind in &opts.checks {
        let definitive = match check_kind {
            Check::Acyclic => {
                let budget = AcyclicBudget { timeout: remaining(deadline), ..AcyclicBudget::default() };
                let v = check_acyclic(rules, opts.k, opts.acyclic_mode, &budget)?;
                let done = v.result == AcyclicResult::Terminating;
                acyclic = Some(v);
                done
            }
            Check::Cyclicity(notion) => {
                let copts = CheckOptions {
                    max_term_depth: opts.term_depth,
                    timeout: remaining(deadline),
                    injectivity: opts.injectivity,
                    ..CheckOptions::default()
                };
                let v = check(rules, *notion, &copts)?;
                let done = v.result == CyclicityResult::Cyclic;
                cyclicity.push(v);
                done
            }
        };
        if definitive && !opts.exhaustive {
            break;
        }
    }
    let terminating = acyclic.as_ref().filter(|a| a.result == AcyclicResult::Terminating);
    let cyclic = cyclicity.iter().find(|v| v.result == CyclicityResult::Cyclic);
    let combined = match (terminating, cyclic) {
        (Some(a), Some(c)) => {
            return Err(ClassifyError::SoundnessViolation(format!("acyclic {} k={}", a.mode, a.k), c.notion.to_string()))
        }
        (Some(_), None) => Combined::Terminating,
        (None, Some(_)) => Combined::NeverTerminating,
        (None, None) => Combined::Unknown,
    };
    Ok(ClassificationReport { file: file.to_owned(), acyclic, cyclicity, combined, wall_ms: start.elapsed().as_millis() as u64 })
}

/// Row label grouping rule sets by kind and number of generating rules.
pub fn bucket(rules: &RuleSet) -> String {
    let kind = if rules.iter().all(|r| r.is_deterministic()) { "det" } else { "disj" };
    let n = rules.iter().filter(|r| r.is_generating()).count();
    let range = match n {
        0 => "0",
        1..=19 => "1-19",
        20..=99 => "20-99",
        100..=999 => "100-999",
        _ => "1000+",
    };
    format!("{kind}/{range}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{rules, BIKE, COLOURS};

    #[test]
    fn example_verdicts() {
        let opts = ClassifyOptions::default();
        assert_eq!(classify("bike", &rules(BIKE), &opts).unwrap().combined, Combined::Terminating);
        let pair = classify("pair", &rules(BIKE).subset(&[1, 2]), &opts).unwrap();
        assert_eq!(pair.combined, Combined::NeverTerminating);
        assert_eq!(pair.cyclicity_result(Notion::Drpc), Some(CyclicityResult::NotDetected));
        assert_eq!(pair.cyclicity_result(Notion::RpcS), Some(CyclicityResult::Cyclic));
        assert_eq!(classify("colours", &rules(COLOURS), &opts).unwrap().combined, Combined::Unknown);
    }

    #[test]
    fn stops_at_first_definitive_verdict() {
        let r = classify("bike", &rules(BIKE), &ClassifyOptions::default()).unwrap();
        assert!(r.cyclicity.is_empty());
        let all = ClassifyOptions { exhaustive: true, ..ClassifyOptions::default() };
        let r = classify("bike", &rules(BIKE), &all).unwrap();
        assert_eq!(r.cyclicity.len(), 2);
        assert_eq!(r.combined, Combined::Terminating);
    }

    #[test]
    fn json_has_schema() {
        let r = rules(BIKE).subset(&[1, 2]);
        let rep = classify("pair", &r, &ClassifyOptions::default()).unwrap();
        let v = rep.to_json(&r);
        assert_eq!(v["schema"], 1);
        assert_eq!(v["combined"], "never-terminating");
        assert!(rep.render(&r).contains("witness:"));
    }

    #[test]
    fn buckets() {
        assert_eq!(bucket(&rules(BIKE)), "disj/1-19");
        assert_eq!(bucket(&rules("A(X) -> B(X).")), "det/0");
        assert_eq!(bucket(&RuleSet::default()), "det/0");
    }
}

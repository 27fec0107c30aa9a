//! A sufficient condition for termination: saturate the critical instance with the skolemized
//! rules, every disjunct at once, and fail as soon as a k-cyclic term shows up.
//!
//! In `RmfaLike` mode a generating trigger is skipped when it is obsolete for the facts that
//! any restricted chase must already contain when a matching trigger is applied. Those are
//! computed on a generic copy of the trigger in which every `⋆` occurrence is a distinct fresh
//! constant: its body, the outputs and bodies of the triggers that created its terms, and the
//! closure of all that under the datalog rules. Each fact of a real chase maps onto this set,
//! so an obsolete generic trigger means an obsolete real one.

use crate::matcher::{rule_is_obsolete, FactSet, TriggerDiscovery};
use crate::model::{Atom, ModelError, RuleSet, Term, TermKind, Trigger};
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TerminationError {
    #[error("k must be at least 1")]
    InvalidK,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AcyclicMode {
    /// Plain skolem saturation.
    Mfa,
    /// Saturation that skips triggers known to be obsolete.
    #[default]
    RmfaLike,
}

impl fmt::Display for AcyclicMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AcyclicMode::Mfa => "mfa",
            AcyclicMode::RmfaLike => "rmfa-like",
        })
    }
}

impl FromStr for AcyclicMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mfa" => Ok(AcyclicMode::Mfa),
            "rmfa-like" | "rmfa" => Ok(AcyclicMode::RmfaLike),
            other => Err(format!("unknown acyclicity mode {other:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AcyclicBudget {
    pub max_facts: usize,
    pub timeout: Option<Duration>,
}

impl Default for AcyclicBudget {
    fn default() -> Self {
        AcyclicBudget { max_facts: 500_000, timeout: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AcyclicResult {
    Terminating,
    NotDetected,
    ResourceExhausted,
}

impl fmt::Display for AcyclicResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AcyclicResult::Terminating => "terminating",
            AcyclicResult::NotDetected => "not-detected",
            AcyclicResult::ResourceExhausted => "resource-exhausted",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AcyclicityVerdict {
    pub k: u32,
    pub mode: AcyclicMode,
    pub result: AcyclicResult,
    pub cyclic_term: Option<Term>,
    pub facts: usize,
    pub wall_ms: u64,
}

impl AcyclicityVerdict {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "notion": "acyclic",
            "k": self.k,
            "mode": self.mode,
            "result": self.result,
            "cyclicTerm": self.cyclic_term.map(|t| t.to_string()),
            "facts": self.facts,
            "wallMs": self.wall_ms,
        })
    }
}

/// All facts over the predicates of `rules` with `⋆` in every position.
pub fn critical_instance(rules: &RuleSet) -> FactSet {
    rules
        .predicates()
        .into_iter()
        .map(|p| Atom::with_pred(p, SmallVec::from_elem(Term::star(), p.arity as usize)))
        .collect()
}

fn freshen(t: Term, next: &mut usize) -> Term {
    match t.kind() {
        TermKind::Functional(f, args) => {
            let args: Vec<Term> = args.iter().map(|&a| freshen(a, next)).collect();
            Term::functional(*f, &args)
        }
        _ if t == Term::star() => {
            *next += 1;
            Term::constant(&format!("__fresh_{next}"))
        }
        _ => t,
    }
}

/// Facts every restricted chase contains, up to renaming, when it applies a trigger whose
/// `⋆`-collapse is `trigger`, together with the generic copy of `trigger` they refer to.
pub fn necessary_facts(rules: &RuleSet, trigger: &Trigger) -> Result<(Trigger, FactSet), ModelError> {
    let rule = rules.get(trigger.rule).ok_or(ModelError::UnknownRule(trigger.rule))?;
    let mut next = 0usize;
    let args: Vec<Term> = trigger.args.iter().map(|&t| freshen(t, &mut next)).collect();
    let generic = Trigger::new(trigger.rule, &args);
    let s = generic.substitution(rule);
    let mut facts: FactSet = rule.body().iter().map(|a| a.substitute(&s)).collect();
    let mut seen = std::collections::HashSet::new();
    for &a in &args {
        for sub in a.subterms() {
            let Some(f) = sub.root_symbol() else { continue };
            if !seen.insert(sub) {
                continue;
            }
            let creator = rules.owner_of(f).ok_or_else(|| ModelError::SymbolNotInRuleSet(f.to_string()))?;
            let mut cargs: Vec<Term> = Vec::with_capacity(creator.body_vars().len());
            for _ in 0..creator.body_vars().len() {
                next += 1;
                cargs.push(Term::constant(&format!("__fresh_{next}")));
            }
            for (&slot, &x) in creator.frontier_slots().iter().zip(sub.args()) {
                cargs[slot as usize] = x;
            }
            let cs = Trigger::new(creator.id(), &cargs).substitution(creator);
            facts.extend(creator.body().iter().map(|b| b.substitute(&cs)));
            facts.extend(creator.out(f.disjunct() as usize, &cargs));
        }
    }
    let mut discovery = TriggerDiscovery::new();
    loop {
        let mut pending = Vec::new();
        discovery.discover(rules, &facts, &mut |t| {
            if rules.rule(t.rule).is_datalog() {
                pending.push(t);
            }
        });
        if pending.is_empty() {
            break;
        }
        for t in pending {
            facts.extend(t.out(rules, 1));
        }
    }
    Ok((generic, facts))
}

/// Saturates the critical instance and looks for a k-cyclic term.
pub fn check_acyclic(rules: &RuleSet, k: u32, mode: AcyclicMode, budget: &AcyclicBudget) -> Result<AcyclicityVerdict, TerminationError> {
    if k == 0 {
        return Err(TerminationError::InvalidK);
    }
    let start = Instant::now();
    let deadline = budget.timeout.map(|d| start + d);
    let mut facts = critical_instance(rules);
    let mut discovery = TriggerDiscovery::new();
    let finish = |result, cyclic_term, facts: &FactSet| AcyclicityVerdict {
        k,
        mode,
        result,
        cyclic_term,
        facts: facts.len(),
        wall_ms: start.elapsed().as_millis() as u64,
    };
    let mut steps = 0usize;
    loop {
        let mut pending = Vec::new();
        discovery.discover(rules, &facts, &mut |t| pending.push(t));
        if pending.is_empty() {
            return Ok(finish(AcyclicResult::Terminating, None, &facts));
        }
        pending.sort();
        for t in pending {
            steps += 1;
            if facts.len() > budget.max_facts || (steps.is_multiple_of(64) && deadline.is_some_and(|d| Instant::now() >= d)) {
                return Ok(finish(AcyclicResult::ResourceExhausted, None, &facts));
            }
            let rule = rules.rule(t.rule);
            if mode == AcyclicMode::RmfaLike && !rule.is_datalog() {
                let (generic, needed) = necessary_facts(rules, &t)?;
                if rule_is_obsolete(rule, &generic.args, &needed) {
                    continue;
                }
            }
            for i in 1..=rule.branching() {
                for a in rule.out(i, &t.args) {
                    if let Some(bad) = a.args.iter().copied().find(|x| x.is_k_cyclic(k)) {
                        facts.insert(a);
                        return Ok(finish(AcyclicResult::NotDetected, Some(bad), &facts));
                    }
                    facts.insert(a);
                }
            }
        }
    }
}

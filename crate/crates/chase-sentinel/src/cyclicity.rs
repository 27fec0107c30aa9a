//! Non-termination checks based on cyclicity prefixes.
//!
//! Each check starts from the rule database of a generating rule `ρ` (its body with every
//! variable replaced by a fresh constant), applies `ρ` once, and then keeps adding the
//! head-choice output of every loaded trigger that passes a fixed set of filters. Deriving a
//! term rooted in a skolem symbol of `ρ` that contains another symbol of `ρ` proves that the
//! rule set admits no finite chase tree for some database, and the derivation that produced
//! it is returned as a witness.

use crate::approx::{check_reversible, is_star_unblockable, is_uc_unblockable, ApproxError};
use crate::chase::{replay, HeadChoice};
use crate::matcher::{FactSet, TriggerDiscovery};
use crate::model::{
    is_rho_cyclic, skeleton, Atom, ConstantMapping, ModelError, Rule, RuleId, RuleSet, Substitution, Term, TermKind,
    Trigger, DB_PREFIX,
};
use crate::ruleio::{parse_term, render_rule};
use dashmap::DashMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CyclicityError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Approx(#[from] ApproxError),
    #[error("rule {0} is not deterministic")]
    NotDeterministic(RuleId),
    #[error("internal inconsistency: {0}")]
    InternalInconsistency(String),
    #[error("malformed witness: {0}")]
    MalformedWitness(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Notion {
    #[serde(rename = "RPC")]
    Rpc,
    #[serde(rename = "RPC_s")]
    RpcS,
    #[serde(rename = "DRPC")]
    Drpc,
}

impl fmt::Display for Notion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Notion::Rpc => "RPC",
            Notion::RpcS => "RPC_s",
            Notion::Drpc => "DRPC",
        })
    }
}

impl FromStr for Notion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rpc" => Ok(Notion::Rpc),
            "rpcs" | "rpc_s" => Ok(Notion::RpcS),
            "drpc" => Ok(Notion::Drpc),
            other => Err(format!("unknown notion {other:?}")),
        }
    }
}

/// The body of a rule over fresh constants `c_x`, one per body variable.
#[derive(Clone, Debug)]
pub struct RuleDatabase {
    pub rule: RuleId,
    pub facts: FactSet,
    pub sigma_uc: Substitution,
    /// `⟨ρ, σ_uc⟩`.
    pub trigger: Trigger,
}

pub fn rule_database(rule: &Rule) -> RuleDatabase {
    let args: Vec<Term> = rule.body_vars().iter().map(|&v| Term::db_constant(v)).collect();
    let trigger = Trigger::new(rule.id(), &args);
    let sigma_uc = trigger.substitution(rule);
    let facts = rule.body().iter().map(|a| a.substitute(&sigma_uc)).collect();
    RuleDatabase { rule: rule.id(), facts, sigma_uc, trigger }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UnblockCheck {
    Uc,
    Star,
    /// Treat every trigger as unblockable. Only meaningful for testing the search itself.
    AssumeTrue,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SearchOptions {
    /// Require the trigger substitution to be injective when the trigger uses `ρ`.
    pub injectivity: bool,
    pub unblock: UnblockCheck,
    pub deterministic_only: bool,
    pub stop_at_cyclic: bool,
}

impl SearchOptions {
    pub fn rpc() -> Self {
        SearchOptions { injectivity: true, unblock: UnblockCheck::Uc, deterministic_only: false, stop_at_cyclic: true }
    }

    pub fn drpc() -> Self {
        SearchOptions { injectivity: true, unblock: UnblockCheck::Star, deterministic_only: true, stop_at_cyclic: true }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SearchBudget {
    pub max_term_depth: u32,
    pub max_triggers: usize,
    pub deadline: Option<Instant>,
}

impl Default for SearchBudget {
    fn default() -> Self {
        SearchBudget { max_term_depth: 8, max_triggers: 1_000_000, deadline: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchStatus {
    Cyclic,
    Saturated,
    /// Saturated, but some triggers were skipped for exceeding the term-depth cap.
    Truncated,
    /// Trigger budget or deadline reached.
    Exhausted,
}

/// The outcome of one prefix search for a fixed head-choice and rule.
#[derive(Clone, Debug)]
pub struct SearchRun {
    pub rho: RuleId,
    pub hc: HeadChoice,
    pub unblock: UnblockCheck,
    pub injectivity: bool,
    pub database: RuleDatabase,
    pub facts: FactSet,
    /// Applied triggers in order; the first one is `⟨ρ, σ_uc⟩`.
    pub log: Vec<Trigger>,
    /// Log index of the first trigger that derived each non-database fact.
    pub producers: HashMap<Atom, usize>,
    /// Log index of the trigger that first produced a `ρ`-cyclic term, and that term.
    pub cyclic: Option<(usize, Term)>,
    pub status: SearchStatus,
    pub triggers_explored: usize,
}

/// Cache of unblockability answers keyed by a tag for the head-choice and the trigger with
/// its constants renamed canonically.
#[derive(Default)]
pub struct UnblockMemo {
    map: DashMap<(u32, Trigger), bool>,
}

impl UnblockMemo {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Renames constants to `__canon_i` in order of first occurrence.
fn canonical(trigger: &Trigger) -> Trigger {
    let mut g = ConstantMapping::new();
    let mut next = 0usize;
    for t in &trigger.args {
        t.for_each_constant(&mut |c| {
            if !g.contains(c) {
                g.insert(c, Term::constant(&format!("__canon_{next}")));
                next += 1;
            }
        });
    }
    trigger.map_constants(&g)
}

fn unblockable(
    rules: &RuleSet,
    hc: &HeadChoice,
    check: UnblockCheck,
    trigger: &Trigger,
    memo: &UnblockMemo,
    tag: u32,
) -> Result<bool, CyclicityError> {
    if check == UnblockCheck::AssumeTrue || rules.rule(trigger.rule).is_datalog() {
        return Ok(true);
    }
    let key = (if check == UnblockCheck::Star { u32::MAX } else { tag }, canonical(trigger));
    if let Some(v) = memo.map.get(&key) {
        return Ok(*v);
    }
    let v = match check {
        UnblockCheck::Uc => is_uc_unblockable(rules, hc, &key.1)?,
        UnblockCheck::Star => is_star_unblockable(rules, &key.1)?,
        UnblockCheck::AssumeTrue => true,
    };
    memo.map.insert(key, v);
    Ok(v)
}

fn first_rho_cyclic(out: &[Atom], rho: &Rule) -> Option<Term> {
    out.iter().flat_map(|a| a.args.iter().copied()).find(|&t| is_rho_cyclic(t, rho))
}

/// The prefix search for rule `rho` under `hc`.
pub fn prefix_search(
    rules: &RuleSet,
    hc: &HeadChoice,
    rho: RuleId,
    opts: &SearchOptions,
    budget: &SearchBudget,
    memo: &UnblockMemo,
    memo_tag: u32,
) -> Result<SearchRun, CyclicityError> {
    let rho_rule = rules.get(rho).ok_or(ModelError::UnknownRule(rho))?;
    if opts.deterministic_only && !rho_rule.is_deterministic() {
        return Err(CyclicityError::NotDeterministic(rho));
    }
    let database = rule_database(rho_rule);
    let mut facts = database.facts.clone();
    let mut producers = HashMap::new();
    let mut log = vec![database.trigger.clone()];
    for a in hc.out(rules, &database.trigger) {
        if facts.insert(a.clone()) {
            producers.insert(a, 0);
        }
    }
    let mut discovery = TriggerDiscovery::new();
    discovery.mark_seen(database.trigger.clone());
    let mut run = SearchRun {
        rho,
        hc: hc.clone(),
        unblock: opts.unblock,
        injectivity: opts.injectivity,
        database,
        facts: FactSet::new(),
        log: Vec::new(),
        producers: HashMap::new(),
        cyclic: None,
        status: SearchStatus::Saturated,
        triggers_explored: 0,
    };
    let mut truncated = false;
    let mut explored = 0usize;
    let status = 'search: loop {
        let mut round = Vec::new();
        discovery.discover(rules, &facts, &mut |t| round.push(t));
        if round.is_empty() {
            break if truncated { SearchStatus::Truncated } else { SearchStatus::Saturated };
        }
        round.sort();
        for t in round {
            let rule = rules.rule(t.rule);
            if opts.deterministic_only && !rule.is_deterministic() {
                continue;
            }
            if t.args.iter().any(|a| a.is_cyclic()) {
                continue;
            }
            if opts.injectivity && t.rule == rho && !t.is_injective() {
                continue;
            }
            explored += 1;
            if explored > budget.max_triggers {
                break 'search SearchStatus::Exhausted;
            }
            if explored.is_multiple_of(64) && budget.deadline.is_some_and(|d| Instant::now() >= d) {
                break 'search SearchStatus::Exhausted;
            }
            let out = hc.out(rules, &t);
            if out.iter().all(|a| facts.contains(a)) {
                continue;
            }
            if out.iter().flat_map(|a| a.args.iter()).any(|x| x.depth() > budget.max_term_depth) {
                truncated = true;
                continue;
            }
            if !unblockable(rules, hc, opts.unblock, &t, memo, memo_tag)? {
                continue;
            }
            let idx = log.len();
            let cyclic = first_rho_cyclic(&out, rho_rule);
            for a in out {
                if facts.insert(a.clone()) {
                    producers.insert(a, idx);
                }
            }
            log.push(t);
            if let Some(term) = cyclic {
                if run.cyclic.is_none() {
                    run.cyclic = Some((idx, term));
                }
                if opts.stop_at_cyclic {
                    break 'search SearchStatus::Cyclic;
                }
            }
        }
    };
    run.status = if run.cyclic.is_some() { SearchStatus::Cyclic } else { status };
    run.facts = facts;
    run.log = log;
    run.producers = producers;
    run.triggers_explored = explored;
    Ok(run)
}

/// The RPC fact set for `rho` under `hc`, stopping at the first `ρ`-cyclic term.
pub fn rpc_fact_set(rules: &RuleSet, hc: &HeadChoice, rho: RuleId, budget: &SearchBudget) -> Result<SearchRun, CyclicityError> {
    prefix_search(rules, hc, rho, &SearchOptions::rpc(), budget, &UnblockMemo::new(), 0)
}

/// The DRPC fact set: deterministic triggers only, star-unblockability, first disjuncts.
pub fn drpc_fact_set(rules: &RuleSet, rho: RuleId, budget: &SearchBudget) -> Result<SearchRun, CyclicityError> {
    let hc = HeadChoice::uniform(rules, 1);
    prefix_search(rules, &hc, rho, &SearchOptions::drpc(), budget, &UnblockMemo::new(), 0)
}

/// Which checkable conditions a prefix passed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PrefixValidation {
    pub replays_loaded: bool,
    pub unblockable: bool,
    pub cyclic_output: bool,
    pub composition: bool,
    /// Reversibility of `g_Λ` on the skeleton of every trigger after the first. Higher powers
    /// of `g_Λ` follow from the search filters and are not checked.
    pub reversible: bool,
}

impl PrefixValidation {
    pub fn all(&self) -> bool {
        self.replays_loaded && self.unblockable && self.cyclic_output && self.composition && self.reversible
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CyclicityPrefix {
    pub rule: RuleId,
    pub hc: HeadChoice,
    /// `⟨ρ, σ_uc⟩` first, the re-application of `ρ` last.
    pub triggers: Vec<Trigger>,
    pub g_lambda: ConstantMapping,
    pub cyclic_term: Term,
    pub validation: PrefixValidation,
}

fn inconsistent(msg: impl Into<String>) -> CyclicityError {
    CyclicityError::InternalInconsistency(msg.into())
}

/// Cuts the derivation of the first `ρ`-cyclic term out of a search log and validates it.
///
/// Reversibility failures are only fatal when the run used the injectivity filter; without it
/// the search is known to produce invalid prefixes.
pub fn extract_prefix(rules: &RuleSet, run: &SearchRun) -> Result<CyclicityPrefix, CyclicityError> {
    let (last, cyclic_term) = run.cyclic.ok_or_else(|| inconsistent("no cyclic term in run"))?;
    let mut keep = vec![false; run.log.len()];
    keep[0] = true;
    keep[last] = true;
    let mut stack = vec![last];
    while let Some(i) = stack.pop() {
        let t = run.log.get(i).ok_or_else(|| inconsistent("log index out of range"))?;
        let rule = rules.get(t.rule).ok_or_else(|| inconsistent("unknown rule in log"))?;
        let s = t.substitution(rule);
        for a in rule.body() {
            let fact = a.substitute(&s);
            if let Some(&p) = run.producers.get(&fact) {
                if p >= i {
                    return Err(inconsistent(format!("fact {fact} produced after its use")));
                }
                if !keep[p] {
                    keep[p] = true;
                    stack.push(p);
                }
            }
        }
    }
    let triggers: Vec<Trigger> = run.log.iter().zip(&keep).filter(|(_, k)| **k).map(|(t, _)| t.clone()).collect();
    let rho = rules.rule(run.rho);
    let first = &triggers[0];
    let last_t = triggers.last().expect("non-empty");
    if first != &run.database.trigger || last_t.rule != run.rho {
        return Err(inconsistent("prefix does not start and end with the pivot rule"));
    }
    let mut g = ConstantMapping::new();
    for (&x, &c) in rho.body_vars().iter().zip(first.args.iter()) {
        let cx = c.as_constant().ok_or_else(|| inconsistent("non-constant in rule database"))?;
        g.insert(cx, last_t.substitution(rho).get(x).expect("body variable"));
    }
    let prefix = CyclicityPrefix { rule: run.rho, hc: run.hc.clone(), triggers, g_lambda: g, cyclic_term, validation: PrefixValidation {
        replays_loaded: false, unblockable: false, cyclic_output: false, composition: false, reversible: false,
    } };
    let validation = validate_prefix(rules, &prefix, &run.database.facts, run.unblock)?;
    let prefix = CyclicityPrefix { validation, ..prefix };
    let required = PrefixValidation { reversible: validation.reversible || !run.injectivity, ..validation };
    if !required.all() {
        return Err(inconsistent(format!("prefix failed validation: {validation:?}")));
    }
    Ok(prefix)
}

/// Re-checks the conditions of a prefix that can be decided on the finite sequence.
pub fn validate_prefix(
    rules: &RuleSet,
    prefix: &CyclicityPrefix,
    database: &FactSet,
    unblock: UnblockCheck,
) -> Result<PrefixValidation, CyclicityError> {
    let rho = rules.get(prefix.rule).ok_or(ModelError::UnknownRule(prefix.rule))?;
    let replays_loaded = replay(rules, database, &prefix.hc, &prefix.triggers).is_ok();
    let memo = UnblockMemo::new();
    let mut unblockable_all = true;
    for t in &prefix.triggers[1..] {
        if !unblockable(rules, &prefix.hc, unblock, t, &memo, 0)? {
            unblockable_all = false;
        }
    }
    let last = prefix.triggers.last().expect("non-empty");
    let out = prefix.hc.out(rules, last);
    let cyclic_output = last.rule == prefix.rule && first_rho_cyclic(&out, rho).is_some();
    let composition = prefix.triggers[0].map_constants(&prefix.g_lambda) == *last;
    let mut reversible = true;
    for t in &prefix.triggers[1..] {
        let skel = skeleton(t, rules)?;
        if !check_reversible(&prefix.g_lambda, &skel).is_reversible() {
            reversible = false;
        }
    }
    Ok(PrefixValidation { replays_loaded, unblockable: unblockable_all, cyclic_output, composition, reversible })
}

/// The first `n·repetitions + 1` triggers of the infinite sequence generated by a prefix of
/// length `n + 1`: the first trigger, then the remaining `n` triggers under `g^0, g^1, …`.
pub fn unroll_prefix(prefix: &CyclicityPrefix, repetitions: usize) -> Vec<Trigger> {
    let mut out = vec![prefix.triggers[0].clone()];
    let mut block: Vec<Trigger> = prefix.triggers[1..].to_vec();
    for j in 0..repetitions {
        if j > 0 {
            block = block.iter().map(|t| t.map_constants(&prefix.g_lambda)).collect();
        }
        out.extend(block.iter().cloned());
    }
    out
}

/// Term rendering with short skolem names and `c_x` for rule-database constants.
pub fn pretty_term(t: Term, rules: &RuleSet) -> String {
    match t.kind() {
        TermKind::Constant(c) => match c.as_str().strip_prefix(DB_PREFIX) {
            Some(x) => format!("c_{x}"),
            None => c.to_string(),
        },
        TermKind::Variable(v) => v.to_string(),
        TermKind::Functional(f, args) => {
            let inner: Vec<String> = args.iter().map(|a| pretty_term(*a, rules)).collect();
            format!("{}({})", rules.short_name(*f), inner.join(","))
        }
    }
}

fn pretty_trigger(t: &Trigger, rules: &RuleSet) -> String {
    let rule = rules.rule(t.rule);
    let parts: Vec<String> = rule
        .body_vars()
        .iter()
        .zip(&t.args)
        .map(|(v, a)| format!("{v}/{}", pretty_term(*a, rules)))
        .collect();
    format!("<r{}, [{}]>", t.rule, parts.join(", "))
}

fn term_from_str(s: &str) -> Result<Term, CyclicityError> {
    parse_term(s).map_err(|e| CyclicityError::MalformedWitness(format!("{s}: {e}")))
}

fn malformed(msg: &str) -> CyclicityError {
    CyclicityError::MalformedWitness(msg.to_owned())
}

impl CyclicityPrefix {
    pub fn render(&self, rules: &RuleSet) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "rule r{}: {}", self.rule, render_rule(rules.rule(self.rule)));
        let _ = writeln!(out, "head-choice: {}", self.hc);
        for (i, t) in self.triggers.iter().enumerate() {
            let _ = writeln!(out, "  {i}: {}", pretty_trigger(t, rules));
        }
        for (c, t) in self.g_lambda.iter() {
            let _ = writeln!(out, "g: {} -> {}", pretty_term(Term::constant_sym(c), rules), pretty_term(t, rules));
        }
        let _ = writeln!(out, "cyclic term: {}", pretty_term(self.cyclic_term, rules));
        out
    }

    pub fn to_json(&self, rules: &RuleSet) -> Value {
        let hc: Map<String, Value> = self.hc.iter().map(|(r, i)| (r.to_string(), json!(i))).collect();
        let triggers: Vec<Value> = self
            .triggers
            .iter()
            .map(|t| {
                let s: Map<String, Value> = t
                    .substitution(rules.rule(t.rule))
                    .iter()
                    .map(|(v, x)| (v.to_string(), json!(x.to_string())))
                    .collect();
                json!({ "rule": t.rule, "substitution": s })
            })
            .collect();
        let g: Map<String, Value> = self.g_lambda.iter().map(|(c, t)| (c.to_string(), json!(t.to_string()))).collect();
        json!({
            "rule": self.rule,
            "ruleText": render_rule(rules.rule(self.rule)),
            "headChoice": hc,
            "triggers": triggers,
            "gLambda": g,
            "cyclicTerm": self.cyclic_term.to_string(),
            "validation": serde_json::to_value(self.validation).expect("plain struct"),
        })
    }

    pub fn from_json(v: &Value, rules: &RuleSet) -> Result<CyclicityPrefix, CyclicityError> {
        let rule = v["rule"].as_u64().ok_or_else(|| malformed("rule"))? as RuleId;
        rules.get(rule).ok_or(ModelError::UnknownRule(rule))?;
        let mut hc = HeadChoice::default();
        for (k, i) in v["headChoice"].as_object().ok_or_else(|| malformed("headChoice"))? {
            let r: RuleId = k.parse().map_err(|_| malformed("headChoice key"))?;
            hc.set(r, i.as_u64().ok_or_else(|| malformed("headChoice value"))? as usize);
        }
        let mut triggers = Vec::new();
        for t in v["triggers"].as_array().ok_or_else(|| malformed("triggers"))? {
            let id = t["rule"].as_u64().ok_or_else(|| malformed("trigger rule"))? as RuleId;
            let r = rules.get(id).ok_or(ModelError::UnknownRule(id))?;
            let mut s = Substitution::new();
            for (x, term) in t["substitution"].as_object().ok_or_else(|| malformed("substitution"))? {
                s.insert(crate::model::Sym::new(x), term_from_str(term.as_str().ok_or_else(|| malformed("term"))?)?);
            }
            triggers.push(Trigger::from_substitution(r, &s)?);
        }
        if triggers.is_empty() {
            return Err(malformed("empty trigger list"));
        }
        let mut g = ConstantMapping::new();
        for (c, term) in v["gLambda"].as_object().ok_or_else(|| malformed("gLambda"))? {
            g.insert(crate::model::Sym::new(c), term_from_str(term.as_str().ok_or_else(|| malformed("term"))?)?);
        }
        let cyclic_term = term_from_str(v["cyclicTerm"].as_str().ok_or_else(|| malformed("cyclicTerm"))?)?;
        let validation =
            serde_json::from_value(v["validation"].clone()).map_err(|e| CyclicityError::MalformedWitness(e.to_string()))?;
        Ok(CyclicityPrefix { rule, hc, triggers, g_lambda: g, cyclic_term, validation })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CyclicityResult {
    Cyclic,
    NotDetected,
    ResourceExhausted,
}

impl fmt::Display for CyclicityResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CyclicityResult::Cyclic => "cyclic",
            CyclicityResult::NotDetected => "not-detected",
            CyclicityResult::ResourceExhausted => "resource-exhausted",
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SearchStats {
    pub searches: usize,
    pub triggers_explored: usize,
    pub terms_created: usize,
    pub wall_ms: u64,
}

#[derive(Clone, Debug)]
pub struct Verdict {
    pub notion: Notion,
    pub result: CyclicityResult,
    pub witness: Option<CyclicityPrefix>,
    pub stats: SearchStats,
}

impl Verdict {
    pub fn to_json(&self, rules: &RuleSet) -> Value {
        json!({
            "notion": self.notion,
            "result": self.result,
            "witness": self.witness.as_ref().map(|w| w.to_json(rules)),
            "stats": self.stats,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CheckOptions {
    pub max_term_depth: u32,
    pub max_triggers: usize,
    pub timeout: Option<Duration>,
    /// Turning this off makes the checks unsound; it exists to demonstrate why the filter is
    /// needed.
    pub injectivity: bool,
}

impl Default for CheckOptions {
    fn default() -> Self {
        let b = SearchBudget::default();
        CheckOptions { max_term_depth: b.max_term_depth, max_triggers: b.max_triggers, timeout: None, injectivity: true }
    }
}

/// The head-choices tried by a notion, in order.
pub fn head_choices(rules: &RuleSet, notion: Notion) -> Vec<HeadChoice> {
    match notion {
        Notion::Rpc => HeadChoice::enumerate(rules),
        Notion::RpcS => {
            let mut out: Vec<HeadChoice> = (1..=rules.branching().max(1)).map(|i| HeadChoice::uniform(rules, i)).collect();
            out.dedup();
            out
        }
        Notion::Drpc => vec![HeadChoice::uniform(rules, 1)],
    }
}

/// Runs the searches of a notion over every candidate rule and head-choice.
///
/// Searches run in parallel; the witness is always taken from the first cyclic search in
/// head-choice-major, rule-id-minor order, so results do not depend on scheduling.
pub fn check(rules: &RuleSet, notion: Notion, opts: &CheckOptions) -> Result<Verdict, CyclicityError> {
    let start = Instant::now();
    let budget = SearchBudget {
        max_term_depth: opts.max_term_depth,
        max_triggers: opts.max_triggers,
        deadline: opts.timeout.map(|d| start + d),
    };
    let mut search = match notion {
        Notion::Drpc => SearchOptions::drpc(),
        _ => SearchOptions::rpc(),
    };
    search.injectivity = opts.injectivity;
    let hcs = head_choices(rules, notion);
    let rhos: Vec<RuleId> = rules
        .iter()
        .filter(|r| r.is_generating() && (notion != Notion::Drpc || r.is_deterministic()))
        .map(|r| r.id())
        .collect();
    let tasks: Vec<(usize, RuleId)> = (0..hcs.len()).flat_map(|h| rhos.iter().map(move |&r| (h, r))).collect();
    let memo = UnblockMemo::new();
    let found = AtomicUsize::new(usize::MAX);
    let runs: Vec<Option<Result<SearchRun, CyclicityError>>> = tasks
        .par_iter()
        .enumerate()
        .map(|(k, &(h, rho))| {
            if found.load(Ordering::Relaxed) < k {
                return None;
            }
            let run = prefix_search(rules, &hcs[h], rho, &search, &budget, &memo, h as u32);
            if matches!(&run, Ok(r) if r.status == SearchStatus::Cyclic) {
                found.fetch_min(k, Ordering::Relaxed);
            }
            Some(run)
        })
        .collect();
    let mut stats = SearchStats::default();
    let mut exhausted = false;
    let mut witness = None;
    for run in runs.into_iter().flatten() {
        let run = run?;
        stats.searches += 1;
        stats.triggers_explored += run.triggers_explored;
        stats.terms_created += run.facts.terms().len();
        match run.status {
            SearchStatus::Cyclic if witness.is_none() => witness = Some(extract_prefix(rules, &run)?),
            SearchStatus::Truncated | SearchStatus::Exhausted => exhausted = true,
            _ => {}
        }
    }
    stats.wall_ms = start.elapsed().as_millis() as u64;
    let result = if witness.is_some() {
        CyclicityResult::Cyclic
    } else if exhausted {
        CyclicityResult::ResourceExhausted
    } else {
        CyclicityResult::NotDetected
    };
    log::debug!("{notion}: {result} after {} searches", stats.searches);
    Ok(Verdict { notion, result, witness, stats })
}

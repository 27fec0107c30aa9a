//! The restricted disjunctive chase.
//!
//! Each branch keeps two FIFO queues of loaded triggers, one for datalog rules and one for the
//! rest. Datalog triggers are always drained first, and every dequeued trigger is checked for
//! obsoleteness again before it is applied. A trigger that is applied with a rule of `n`
//! disjuncts gives its vertex `n` children; branches are explored depth first, first child first.

use crate::matcher::{for_each_match, rule_is_loaded, rule_is_obsolete, Binding, FactSet, TriggerDiscovery};
use crate::model::{compile_conjunction, Atom, RuleId, RuleSet, Term, Trigger};
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use std::collections::{BTreeMap, VecDeque};
use std::fmt::{self, Write as _};
use std::ops::ControlFlow;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChaseError {
    #[error("budget limits must be positive")]
    InvalidBudget,
    #[error("database fact {0} is not function-free")]
    NonDatabaseFact(String),
    #[error("the chase tree is incomplete")]
    IncompleteTree,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChaseBudget {
    pub max_vertices: usize,
    pub max_depth: usize,
    pub max_term_depth: u32,
}

impl Default for ChaseBudget {
    fn default() -> Self {
        ChaseBudget { max_vertices: 100_000, max_depth: 10_000, max_term_depth: 64 }
    }
}

impl ChaseBudget {
    pub fn with_max_depth(max_depth: usize) -> Self {
        ChaseBudget { max_depth, ..Self::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChaseStatus {
    Complete,
    BudgetExhausted,
}

/// A function from rules to one of their head disjuncts (1-based). Rules without an entry
/// choose their first disjunct.
#[derive(Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct HeadChoice(BTreeMap<RuleId, u32>);

impl HeadChoice {
    /// `hc_i`: every rule picks disjunct `min(i, branching)`.
    pub fn uniform(rules: &RuleSet, i: usize) -> HeadChoice {
        HeadChoice(rules.iter().map(|r| (r.id(), i.clamp(1, r.branching()) as u32)).collect())
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (RuleId, usize)>) -> HeadChoice {
        HeadChoice(pairs.into_iter().map(|(r, i)| (r, i as u32)).collect())
    }

    pub fn get(&self, rule: RuleId) -> usize {
        self.0.get(&rule).map_or(1, |&i| i as usize)
    }

    pub fn set(&mut self, rule: RuleId, i: usize) {
        self.0.insert(rule, i as u32);
    }

    pub fn iter(&self) -> impl Iterator<Item = (RuleId, usize)> + '_ {
        self.0.iter().map(|(r, i)| (*r, *i as usize))
    }

    /// Every head-choice that differs on disjunctive rules, in lexicographic order of rule ids.
    pub fn enumerate(rules: &RuleSet) -> Vec<HeadChoice> {
        let mut out = vec![HeadChoice::uniform(rules, 1)];
        for r in rules.iter().filter(|r| r.branching() > 1) {
            let mut next = Vec::with_capacity(out.len() * r.branching());
            for hc in &out {
                for i in 1..=r.branching() {
                    let mut h = hc.clone();
                    h.set(r.id(), i);
                    next.push(h);
                }
            }
            out = next;
        }
        out
    }

    pub fn out(&self, rules: &RuleSet, trigger: &Trigger) -> Vec<Atom> {
        trigger.out(rules, self.get(trigger.rule))
    }
}

impl fmt::Display for HeadChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (r, d)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "r{r}:{d}")?;
        }
        f.write_str("}")
    }
}

#[derive(Clone, Debug)]
pub struct Vertex {
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub trigger: Option<Trigger>,
    /// Which disjunct of the parent's trigger produced this vertex (1-based; 0 for the root).
    pub disjunct: usize,
    /// Facts of this vertex's label that are not in the parent's label.
    pub new_facts: Vec<Atom>,
    pub depth: usize,
    /// Expansion stopped here because of the budget.
    pub truncated: bool,
}

#[derive(Clone, Debug)]
pub struct ChaseTree {
    pub vertices: Vec<Vertex>,
    pub status: ChaseStatus,
}

pub const ROOT: usize = 0;

impl ChaseTree {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn is_complete(&self) -> bool {
        self.status == ChaseStatus::Complete
    }

    pub fn leaves(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.vertices.len()).filter(|&v| self.vertices[v].children.is_empty())
    }

    /// Root path to `v`, root first.
    pub fn path(&self, v: usize) -> Vec<usize> {
        let mut out = vec![v];
        let mut cur = v;
        while let Some(p) = self.vertices[cur].parent {
            out.push(p);
            cur = p;
        }
        out.reverse();
        out
    }

    /// The fact label of a vertex.
    pub fn label(&self, v: usize) -> FactSet {
        let mut out = FactSet::new();
        for u in self.path(v) {
            out.extend(self.vertices[u].new_facts.iter().cloned());
        }
        out
    }

    /// Line-oriented trace: one line per vertex with its trigger and new facts.
    pub fn trace(&self, rules: &RuleSet) -> String {
        let mut out = String::new();
        for (id, v) in self.vertices.iter().enumerate() {
            let _ = write!(out, "v{id}");
            if let (Some(p), Some(t)) = (v.parent, &v.trigger) {
                let _ = write!(out, " parent=v{p} trigger={} disjunct={}", t.display(rules), v.disjunct);
            }
            let facts: Vec<String> = v.new_facts.iter().map(|a| a.to_string()).collect();
            let _ = write!(out, " new={{{}}}", facts.join(", "));
            if v.truncated {
                out.push_str(" truncated");
            }
            out.push('\n');
        }
        out
    }

    /// GraphViz rendering of the tree.
    pub fn to_dot(&self, rules: &RuleSet) -> String {
        let mut out = String::from("digraph chase {\n  node [shape=box, fontname=monospace];\n");
        for (id, v) in self.vertices.iter().enumerate() {
            let facts: Vec<String> = v.new_facts.iter().map(|a| a.to_string()).collect();
            let mut label = facts.join("\\n");
            if let Some(t) = &v.trigger {
                label = format!("{}\\n{label}", t.display(rules));
            }
            let style = if v.truncated { ", style=dashed" } else { "" };
            let _ = writeln!(out, "  v{id} [label=\"{}\"{style}];", label.replace('"', "\\\""));
            for c in &v.children {
                let _ = writeln!(out, "  v{id} -> v{c};");
            }
        }
        out.push_str("}\n");
        out
    }
}

struct BranchState {
    vertex: usize,
    facts: FactSet,
    discovery: TriggerDiscovery,
    datalog: VecDeque<Trigger>,
    other: VecDeque<Trigger>,
}

impl BranchState {
    fn refresh(&mut self, rules: &RuleSet) {
        let (datalog, other) = (&mut self.datalog, &mut self.other);
        self.discovery.discover(rules, &self.facts, &mut |t| {
            if rules.rule(t.rule).is_datalog() {
                datalog.push_back(t);
            } else {
                other.push_back(t);
            }
        });
    }

    fn next_trigger(&mut self, rules: &RuleSet) -> Option<Trigger> {
        for queue in [&mut self.datalog, &mut self.other] {
            while let Some(t) = queue.pop_front() {
                if !rule_is_obsolete(rules.rule(t.rule), &t.args, &self.facts) {
                    return Some(t);
                }
            }
        }
        None
    }
}

/// Runs the chase on a knowledge base and returns its tree.
pub fn run_chase(rules: &RuleSet, database: &FactSet, budget: ChaseBudget) -> Result<ChaseTree, ChaseError> {
    if budget.max_vertices == 0 || budget.max_depth == 0 || budget.max_term_depth == 0 {
        return Err(ChaseError::InvalidBudget);
    }
    if let Some(f) = database.iter().find(|a| a.args.iter().any(|t| !t.is_constant())) {
        return Err(ChaseError::NonDatabaseFact(f.to_string()));
    }
    let mut vertices = vec![Vertex {
        parent: None,
        children: Vec::new(),
        trigger: None,
        disjunct: 0,
        new_facts: database.iter().cloned().collect(),
        depth: 0,
        truncated: false,
    }];
    let mut status = ChaseStatus::Complete;
    let mut stack = vec![BranchState {
        vertex: ROOT,
        facts: database.clone(),
        discovery: TriggerDiscovery::new(),
        datalog: VecDeque::new(),
        other: VecDeque::new(),
    }];
    'branches: while let Some(mut st) = stack.pop() {
        loop {
            st.refresh(rules);
            let Some(trigger) = st.next_trigger(rules) else { break };
            let rule = rules.rule(trigger.rule);
            let n = rule.branching();
            let depth = vertices[st.vertex].depth;
            let outs: Vec<Vec<Atom>> = (1..=n).map(|i| rule.out(i, &trigger.args)).collect();
            let too_deep_terms = outs.iter().flatten().flat_map(|a| a.args.iter()).any(|t| t.depth() > budget.max_term_depth);
            if vertices.len() + n > budget.max_vertices {
                vertices[st.vertex].truncated = true;
                status = ChaseStatus::BudgetExhausted;
                stack.clear();
                break 'branches;
            }
            if depth + 1 > budget.max_depth || too_deep_terms {
                vertices[st.vertex].truncated = true;
                status = ChaseStatus::BudgetExhausted;
                continue 'branches;
            }
            let first_child = vertices.len();
            let mut pending = Vec::with_capacity(n.saturating_sub(1));
            for (i, out) in outs.into_iter().enumerate() {
                let id = first_child + i;
                let mut facts = if i + 1 == n { std::mem::take(&mut st.facts) } else { st.facts.clone() };
                let new_facts: Vec<Atom> = out.into_iter().filter(|a| facts.insert(a.clone())).collect();
                vertices.push(Vertex {
                    parent: Some(st.vertex),
                    children: Vec::new(),
                    trigger: Some(trigger.clone()),
                    disjunct: i + 1,
                    new_facts,
                    depth: depth + 1,
                    truncated: false,
                });
                vertices[st.vertex].children.push(id);
                pending.push((id, facts));
            }
            // Continue with the first child; later children wait on the stack.
            let mut rest = pending.into_iter();
            let (first_id, first_facts) = rest.next().expect("rules have at least one disjunct");
            let siblings: Vec<(usize, FactSet)> = rest.collect();
            for (id, facts) in siblings.into_iter().rev() {
                stack.push(BranchState {
                    vertex: id,
                    facts,
                    discovery: st.discovery.clone(),
                    datalog: st.datalog.clone(),
                    other: st.other.clone(),
                });
            }
            st.vertex = first_id;
            st.facts = first_facts;
        }
    }
    log::debug!("chase finished with {} vertices, status {:?}", vertices.len(), status);
    Ok(ChaseTree { vertices, status })
}

/// One fact set per branch: the label of each leaf. Equal sets are reported once.
pub fn results(tree: &ChaseTree) -> Result<Vec<FactSet>, ChaseError> {
    if !tree.is_complete() {
        return Err(ChaseError::IncompleteTree);
    }
    let mut out: Vec<FactSet> = Vec::new();
    for leaf in tree.leaves() {
        let label = tree.label(leaf);
        if !out.contains(&label) {
            out.push(label);
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Entailment {
    Yes,
    No,
    Unknown,
}

impl fmt::Display for Entailment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Entailment::Yes => "yes",
            Entailment::No => "no",
            Entailment::Unknown => "unknown",
        })
    }
}

/// Whether some substitution maps the query atoms into `facts`. Query variables are
/// existential.
pub fn query_holds(query: &[Atom], facts: &FactSet) -> bool {
    let mut vars = Vec::new();
    let pattern = compile_conjunction(query, &mut vars);
    let mut binding: Binding = SmallVec::from_elem(None, vars.len());
    for_each_match(&pattern, &mut binding, facts, &mut |_| ControlFlow::Break(())).is_break()
}

/// Boolean conjunctive query entailment: yes iff every chase result satisfies the query.
pub fn entails(rules: &RuleSet, database: &FactSet, query: &[Atom], budget: ChaseBudget) -> Result<Entailment, ChaseError> {
    let tree = run_chase(rules, database, budget)?;
    if !tree.is_complete() {
        return Ok(Entailment::Unknown);
    }
    let all = results(&tree)?.iter().all(|f| query_holds(query, f));
    Ok(if all { Entailment::Yes } else { Entailment::No })
}

/// The branch that, at every expansion, follows the child of the disjunct chosen by `hc`.
pub fn hc_branch(tree: &ChaseTree, hc: &HeadChoice) -> Vec<usize> {
    let mut out = vec![ROOT];
    let mut cur = ROOT;
    loop {
        let v = &tree.vertices[cur];
        let Some(&first) = v.children.first() else { break };
        let rule = tree.vertices[first].trigger.as_ref().expect("children carry triggers").rule;
        let want = hc.get(rule);
        match v.children.iter().find(|&&c| tree.vertices[c].disjunct == want) {
            Some(&c) => {
                out.push(c);
                cur = c;
            }
            None => break,
        }
    }
    out
}

/// Applies `out_hc` of each trigger in turn starting from `database`, checking that every
/// trigger is loaded when it is reached. Returns the final fact set or the index of the first
/// trigger that is not loaded.
pub fn replay(rules: &RuleSet, database: &FactSet, hc: &HeadChoice, triggers: &[Trigger]) -> Result<FactSet, usize> {
    let mut facts = database.clone();
    for (i, t) in triggers.iter().enumerate() {
        let Some(rule) = rules.get(t.rule) else { return Err(i) };
        if t.args.len() != rule.body_vars().len() || !rule_is_loaded(rule, &t.args, &facts) {
            return Err(i);
        }
        facts.extend(hc.out(rules, t));
    }
    Ok(facts)
}

/// Largest depth of a term in a fact set.
pub fn max_term_depth(facts: &FactSet) -> u32 {
    facts.iter().flat_map(|a| a.args.iter()).map(|t: &Term| t.depth()).max().unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcher::satisfies_all;
    use crate::model::{SkolemSymbol, Sym};
    use crate::ruleio::parse;

    const BIKE: &str = "Engine(X) -> IsIn(X,V), Bike(V) | Spare(X).
        Bike(X) -> Has(X,W), Engine(W).
        IsIn(X,Y) -> Has(Y,X).
        Has(X,Y) -> IsIn(Y,X).";

    fn bike(ids: &[u32]) -> RuleSet {
        parse(BIKE).unwrap().rule_set().unwrap().subset(ids)
    }

    fn d() -> Term {
        Term::constant("d")
    }

    fn fv(t: Term) -> Term {
        Term::functional(SkolemSymbol::new(1, 1, Sym::new("V")), &[t])
    }

    fn engine_d() -> FactSet {
        [Atom::new("Engine", &[d()])].into_iter().collect()
    }

    #[test]
    fn bike_tree_has_four_vertices() {
        let tree = run_chase(&bike(&[1, 2, 3, 4]), &engine_d(), ChaseBudget::default()).unwrap();
        assert!(tree.is_complete());
        assert_eq!(tree.len(), 4);
        let rules = bike(&[1, 2, 3, 4]);
        for leaf in tree.leaves() {
            assert!(satisfies_all(&tree.label(leaf), &rules));
        }
    }

    #[test]
    fn bike_results() {
        let tree = run_chase(&bike(&[1, 2, 3, 4]), &engine_d(), ChaseBudget::default()).unwrap();
        let got = results(&tree).unwrap();
        let m1: FactSet = [Atom::new("Engine", &[d()]), Atom::new("Spare", &[d()])].into_iter().collect();
        let m2: FactSet = [
            Atom::new("Engine", &[d()]),
            Atom::new("IsIn", &[d(), fv(d())]),
            Atom::new("Bike", &[fv(d())]),
            Atom::new("Has", &[fv(d()), d()]),
        ]
        .into_iter()
        .collect();
        assert_eq!(got.len(), 2);
        assert!(got.contains(&m1) && got.contains(&m2));
    }

    #[test]
    fn empty_rule_set_gives_single_vertex() {
        let tree = run_chase(&RuleSet::default(), &engine_d(), ChaseBudget::default()).unwrap();
        assert_eq!(tree.len(), 1);
        assert_eq!(results(&tree).unwrap(), vec![engine_d()]);
    }

    #[test]
    fn never_terminating_pair_exhausts_budget() {
        for depth in [10, 20, 40] {
            let tree = run_chase(&bike(&[1, 2]), &engine_d(), ChaseBudget::with_max_depth(depth)).unwrap();
            assert_eq!(tree.status, ChaseStatus::BudgetExhausted);
            assert!(matches!(results(&tree), Err(ChaseError::IncompleteTree)));
        }
    }

    #[test]
    fn entailment() {
        let rules = bike(&[1, 2, 3, 4]);
        let q = |s: &str| crate::ruleio::parse_query(s).unwrap().atoms;
        let b = ChaseBudget::default();
        assert_eq!(entails(&rules, &engine_d(), &q("Spare(d)"), b).unwrap(), Entailment::No);
        assert_eq!(entails(&rules, &engine_d(), &q("Engine(d)"), b).unwrap(), Entailment::Yes);
        assert_eq!(entails(&rules, &engine_d(), &q("Has(X,Y)"), b).unwrap(), Entailment::No);
        let small = ChaseBudget::with_max_depth(5);
        assert_eq!(entails(&bike(&[1, 2]), &engine_d(), &q("Spare(d)"), small).unwrap(), Entailment::Unknown);
    }

    #[test]
    fn head_choice_branches() {
        let rules = bike(&[1, 2, 3, 4]);
        let tree = run_chase(&rules, &engine_d(), ChaseBudget::default()).unwrap();
        let b1 = hc_branch(&tree, &HeadChoice::uniform(&rules, 1));
        assert_eq!(b1.len(), 3);
        assert!(tree.label(*b1.last().unwrap()).contains(&Atom::new("Has", &[fv(d()), d()])));
        let b2 = hc_branch(&tree, &HeadChoice::uniform(&rules, 2));
        assert_eq!(b2.len(), 2);
        assert!(tree.label(b2[1]).contains(&Atom::new("Spare", &[d()])));
        let single = run_chase(&RuleSet::default(), &engine_d(), ChaseBudget::default()).unwrap();
        assert_eq!(hc_branch(&single, &HeadChoice::default()), vec![ROOT]);
    }

    #[test]
    fn datalog_priority_holds_on_every_vertex() {
        let rules = bike(&[1, 2, 3, 4]);
        let tree = run_chase(&rules, &engine_d(), ChaseBudget::default()).unwrap();
        for (id, v) in tree.vertices.iter().enumerate() {
            if let (Some(p), Some(t)) = (v.parent, &v.trigger) {
                if !rules.rule(t.rule).is_datalog() {
                    let parent_label = tree.label(p);
                    for r in rules.iter().filter(|r| r.is_datalog()) {
                        assert!(crate::matcher::satisfies(&parent_label, r), "vertex {id}");
                    }
                }
            }
        }
    }

    #[test]
    fn deterministic_runs() {
        let rules = bike(&[1, 2, 3, 4]);
        let a = run_chase(&rules, &engine_d(), ChaseBudget::default()).unwrap();
        let b = run_chase(&rules, &engine_d(), ChaseBudget::default()).unwrap();
        assert_eq!(a.trace(&rules), b.trace(&rules));
    }

    #[test]
    fn rejects_bad_input() {
        let zero = ChaseBudget { max_vertices: 0, ..ChaseBudget::default() };
        assert_eq!(run_chase(&bike(&[1]), &engine_d(), zero).unwrap_err(), ChaseError::InvalidBudget);
        let bad: FactSet = [Atom::new("Engine", &[fv(d())])].into_iter().collect();
        assert!(matches!(run_chase(&bike(&[1]), &bad, ChaseBudget::default()), Err(ChaseError::NonDatabaseFact(_))));
    }

    #[test]
    fn head_choice_enumeration() {
        let rules = parse("A(X) -> B(X) | C(X).\nB(X) -> D(X).\nC(X) -> A(X) | D(X) | E(X).").unwrap().rule_set().unwrap();
        let all = HeadChoice::enumerate(&rules);
        assert_eq!(all.len(), 6);
        assert_eq!(HeadChoice::uniform(&rules, 3).get(1), 2);
        assert_eq!(HeadChoice::uniform(&rules, 3).get(3), 3);
    }

    #[test]
    fn dot_and_trace_mention_triggers() {
        let rules = bike(&[1, 2, 3, 4]);
        let tree = run_chase(&rules, &engine_d(), ChaseBudget::default()).unwrap();
        assert!(tree.to_dot(&rules).contains("v0 -> v1"));
        assert!(tree.trace(&rules).contains("trigger=<r1, [X/d]>"));
    }
}

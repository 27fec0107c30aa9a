//! Indexed fact sets and homomorphism search.

use crate::model::{compile_conjunction, Atom, PatAtom, Predicate, Rule, RuleSet, Slot, Substitution, Term, Trigger};
use indexmap::IndexSet;
use smallvec::SmallVec;
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::ops::ControlFlow;

/// A set of facts with insertion-order iteration and lookup by predicate and by
/// (predicate, position, term).
#[derive(Clone, Default)]
pub struct FactSet {
    facts: IndexSet<Atom>,
    by_pred: HashMap<Predicate, Vec<u32>>,
    by_arg: HashMap<(Predicate, u8, Term), Vec<u32>>,
}

const EMPTY: &[u32] = &[];

impl FactSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, fact: Atom) -> bool {
        if self.facts.contains(&fact) {
            return false;
        }
        let idx = self.facts.len() as u32;
        self.by_pred.entry(fact.pred).or_default().push(idx);
        for (i, t) in fact.args.iter().enumerate() {
            self.by_arg.entry((fact.pred, i as u8, *t)).or_default().push(idx);
        }
        self.facts.insert(fact);
        true
    }

    pub fn contains(&self, fact: &Atom) -> bool {
        self.facts.contains(fact)
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn iter(&self) -> indexmap::set::Iter<'_, Atom> {
        self.facts.iter()
    }

    pub fn get(&self, idx: usize) -> &Atom {
        &self.facts[idx]
    }

    pub fn with_pred(&self, pred: Predicate) -> &[u32] {
        self.by_pred.get(&pred).map_or(EMPTY, Vec::as_slice)
    }

    pub fn with_arg(&self, pred: Predicate, pos: usize, term: Term) -> &[u32] {
        self.by_arg.get(&(pred, pos as u8, term)).map_or(EMPTY, Vec::as_slice)
    }

    /// Terms occurring as arguments of facts, in order of first occurrence.
    pub fn terms(&self) -> IndexSet<Term> {
        self.facts.iter().flat_map(|a| a.args.iter().copied()).collect()
    }

    pub fn is_subset(&self, other: &FactSet) -> bool {
        self.facts.iter().all(|f| other.contains(f))
    }

    /// Facts sorted in structural order, for stable printing.
    pub fn sorted(&self) -> Vec<&Atom> {
        let mut v: Vec<&Atom> = self.facts.iter().collect();
        v.sort();
        v
    }
}

impl PartialEq for FactSet {
    fn eq(&self, other: &Self) -> bool {
        self.len() == other.len() && self.is_subset(other)
    }
}

impl Eq for FactSet {}

impl FromIterator<Atom> for FactSet {
    fn from_iter<I: IntoIterator<Item = Atom>>(iter: I) -> Self {
        let mut s = FactSet::new();
        s.extend(iter);
        s
    }
}

impl Extend<Atom> for FactSet {
    fn extend<I: IntoIterator<Item = Atom>>(&mut self, iter: I) {
        for a in iter {
            self.insert(a);
        }
    }
}

impl<'a> IntoIterator for &'a FactSet {
    type Item = &'a Atom;
    type IntoIter = indexmap::set::Iter<'a, Atom>;
    fn into_iter(self) -> Self::IntoIter {
        self.facts.iter()
    }
}

impl fmt::Debug for FactSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.sorted()).finish()
    }
}

pub type Binding = SmallVec<[Option<Term>; 8]>;

fn candidates<'a>(p: &PatAtom, binding: &[Option<Term>], facts: &'a FactSet) -> &'a [u32] {
    let mut best = facts.with_pred(p.pred);
    for (i, s) in p.args.iter().enumerate() {
        let bound = match *s {
            Slot::Term(t) => Some(t),
            Slot::Var(v) => binding[v as usize],
        };
        if let Some(t) = bound {
            let c = facts.with_arg(p.pred, i, t);
            if c.len() < best.len() {
                best = c;
            }
        }
    }
    best
}

/// Binds `p` against `fact`, pushing newly bound slots onto `trail`. Leaves partial bindings on
/// failure; callers undo through the trail.
fn unify(p: &PatAtom, fact: &Atom, binding: &mut [Option<Term>], trail: &mut SmallVec<[u16; 8]>) -> bool {
    for (s, &t) in p.args.iter().zip(fact.args.iter()) {
        match *s {
            Slot::Term(u) => {
                if u != t {
                    return false;
                }
            }
            Slot::Var(v) => match binding[v as usize] {
                Some(u) => {
                    if u != t {
                        return false;
                    }
                }
                None => {
                    binding[v as usize] = Some(t);
                    trail.push(v);
                }
            },
        }
    }
    true
}

fn search(
    pattern: &[PatAtom],
    done: &mut SmallVec<[bool; 8]>,
    remaining: usize,
    binding: &mut [Option<Term>],
    facts: &FactSet,
    visit: &mut dyn FnMut(&[Option<Term>]) -> ControlFlow<()>,
) -> ControlFlow<()> {
    if remaining == 0 {
        return visit(binding);
    }
    // Most selective atom first; ties go to the earlier atom.
    let mut pick = usize::MAX;
    let mut pick_cands: &[u32] = EMPTY;
    for (i, p) in pattern.iter().enumerate() {
        if done[i] {
            continue;
        }
        let c = candidates(p, binding, facts);
        if pick == usize::MAX || c.len() < pick_cands.len() {
            pick = i;
            pick_cands = c;
            if c.is_empty() {
                return ControlFlow::Continue(());
            }
        }
    }
    done[pick] = true;
    let mut trail: SmallVec<[u16; 8]> = SmallVec::new();
    for &idx in pick_cands {
        let ok = unify(&pattern[pick], facts.get(idx as usize), binding, &mut trail);
        let flow = if ok {
            search(pattern, done, remaining - 1, binding, facts, visit)
        } else {
            ControlFlow::Continue(())
        };
        for v in trail.drain(..) {
            binding[v as usize] = None;
        }
        if flow.is_break() {
            done[pick] = false;
            return flow;
        }
    }
    done[pick] = false;
    ControlFlow::Continue(())
}

/// Enumerates every extension of `binding` mapping `pattern` into `facts`. The visitor sees
/// each complete binding once and may stop the search early.
pub fn for_each_match(
    pattern: &[PatAtom],
    binding: &mut [Option<Term>],
    facts: &FactSet,
    visit: &mut dyn FnMut(&[Option<Term>]) -> ControlFlow<()>,
) -> ControlFlow<()> {
    let mut done: SmallVec<[bool; 8]> = SmallVec::from_elem(false, pattern.len());
    search(pattern, &mut done, pattern.len(), binding, facts, visit)
}

/// Whether some extension of `binding` maps `pattern` into `facts`.
pub fn has_match(pattern: &[PatAtom], binding: &mut [Option<Term>], facts: &FactSet) -> bool {
    for_each_match(pattern, binding, facts, &mut |_| ControlFlow::Break(())).is_break()
}

/// All extensions of `base` mapping the conjunction into `facts`.
pub fn match_conjunction(pattern: &[Atom], base: &Substitution, facts: &FactSet) -> Vec<Substitution> {
    let mut vars = Vec::new();
    let compiled = compile_conjunction(pattern, &mut vars);
    let mut binding: Binding = vars.iter().map(|v| base.get(*v)).collect();
    let mut out = Vec::new();
    let _ = for_each_match(&compiled, &mut binding, facts, &mut |b| {
        let mut s = base.clone();
        for (v, t) in vars.iter().zip(b) {
            s.insert(*v, t.expect("complete binding"));
        }
        out.push(s);
        ControlFlow::Continue(())
    });
    out
}

pub fn rule_is_loaded(rule: &Rule, args: &[Term], facts: &FactSet) -> bool {
    rule.body_pattern().iter().all(|p| {
        let binding: Binding = args.iter().map(|t| Some(*t)).collect();
        facts.contains(&p.instantiate(&binding))
    })
}

/// Whether some head disjunct of `rule` can be mapped into `facts` extending the body image.
pub fn rule_is_obsolete(rule: &Rule, args: &[Term], facts: &FactSet) -> bool {
    rule.heads().iter().any(|h| disjunct_is_satisfied(h.pattern(), h.existentials().len(), args, facts))
}

fn disjunct_is_satisfied(pattern: &[PatAtom], n_exist: usize, args: &[Term], facts: &FactSet) -> bool {
    let mut binding: Binding = args.iter().map(|t| Some(*t)).collect();
    binding.extend(std::iter::repeat_n(None, n_exist));
    has_match(pattern, &mut binding, facts)
}

/// Whether disjunct `i` (1-based) is satisfied by an extension of the trigger.
pub fn disjunct_is_obsolete(rule: &Rule, i: usize, args: &[Term], facts: &FactSet) -> bool {
    let h = rule.head(i);
    disjunct_is_satisfied(h.pattern(), h.existentials().len(), args, facts)
}

pub fn is_loaded(trigger: &Trigger, rules: &RuleSet, facts: &FactSet) -> bool {
    rule_is_loaded(rules.rule(trigger.rule), &trigger.args, facts)
}

pub fn is_obsolete(trigger: &Trigger, rules: &RuleSet, facts: &FactSet) -> bool {
    rule_is_obsolete(rules.rule(trigger.rule), &trigger.args, facts)
}

/// Every loaded trigger of `rule` for `facts`, in match order.
pub fn loaded_triggers(rule: &Rule, facts: &FactSet) -> Vec<Trigger> {
    let mut binding: Binding = SmallVec::from_elem(None, rule.body_vars().len());
    let mut out = Vec::new();
    let _ = for_each_match(rule.body_pattern(), &mut binding, facts, &mut |b| {
        out.push(Trigger { rule: rule.id(), args: b.iter().map(|t| t.expect("bound")).collect() });
        ControlFlow::Continue(())
    });
    out
}

/// Whether every loaded trigger of `rule` is obsolete.
pub fn satisfies(facts: &FactSet, rule: &Rule) -> bool {
    let mut binding: Binding = SmallVec::from_elem(None, rule.body_vars().len());
    for_each_match(rule.body_pattern(), &mut binding, facts, &mut |b| {
        let args: SmallVec<[Term; 8]> = b.iter().map(|t| t.expect("bound")).collect();
        if rule_is_obsolete(rule, &args, facts) {
            ControlFlow::Continue(())
        } else {
            ControlFlow::Break(())
        }
    })
    .is_continue()
}

pub fn satisfies_all(facts: &FactSet, rules: &RuleSet) -> bool {
    rules.iter().all(|r| satisfies(facts, r))
}

/// Semi-naive discovery of loaded triggers: each call only looks at facts added since the
/// previous call, and each trigger is reported once over the lifetime of the value.
#[derive(Clone, Default)]
pub struct TriggerDiscovery {
    seen: HashSet<Trigger>,
    cursor: usize,
}

impl TriggerDiscovery {
    pub fn new() -> Self {
        Self::default()
    }

    /// Marks a trigger as already reported.
    pub fn mark_seen(&mut self, t: Trigger) -> bool {
        self.seen.insert(t)
    }

    pub fn is_seen(&self, t: &Trigger) -> bool {
        self.seen.contains(t)
    }

    pub fn discover(&mut self, rules: &RuleSet, facts: &FactSet, emit: &mut dyn FnMut(Trigger)) {
        let end = facts.len();
        for idx in self.cursor..end {
            let fact = facts.get(idx);
            for rule in rules.iter() {
                let n = rule.body_vars().len();
                for (j, p) in rule.body_pattern().iter().enumerate() {
                    if p.pred != fact.pred {
                        continue;
                    }
                    let mut binding: Binding = SmallVec::from_elem(None, n);
                    let mut trail = SmallVec::new();
                    if !unify(p, fact, &mut binding, &mut trail) {
                        continue;
                    }
                    let mut done: SmallVec<[bool; 8]> = SmallVec::from_elem(false, rule.body_pattern().len());
                    done[j] = true;
                    let seen = &mut self.seen;
                    let _ = search(rule.body_pattern(), &mut done, rule.body_pattern().len() - 1, &mut binding, facts, &mut |b| {
                        let t = Trigger { rule: rule.id(), args: b.iter().map(|t| t.expect("bound")).collect() };
                        if seen.insert(t.clone()) {
                            emit(t);
                        }
                        ControlFlow::Continue(())
                    });
                }
            }
        }
        self.cursor = end;
    }
}

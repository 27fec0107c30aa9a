//! Random rule sets and brute-force reference implementations for the integration tests.
#![allow(dead_code)]

use chase_sentinel::chase::HeadChoice;
use chase_sentinel::matcher::FactSet;
use chase_sentinel::model::{birth_facts, skeleton, Atom, Rule, RuleSet, SkolemSymbol, Sym, Term, Trigger};
use chase_sentinel::ruleio::parse;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet, HashSet};

pub fn rules_from(text: &str) -> RuleSet {
    parse(text).unwrap_or_else(|e| panic!("{e}\n{text}")).rule_set().unwrap()
}

/// A random rule set with at most four rules, predicates of arity at most three and at most
/// two disjuncts per rule, as `.drls` text.
pub fn random_rules_text(seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let arities: Vec<usize> = (0..4).map(|_| rng.gen_range(1..=3)).collect();
    let atom = |rng: &mut ChaCha8Rng, pool: &[&str]| {
        let p = rng.gen_range(0..arities.len());
        let args: Vec<&str> = (0..arities[p]).map(|_| *pool.choose(rng).unwrap()).collect();
        format!("P{p}({})", args.join(","))
    };
    let n = rng.gen_range(1..=4);
    let mut text = String::new();
    for _ in 0..n {
        let body_pool = ["X0", "X1", "X2"];
        let body: Vec<String> = (0..rng.gen_range(1..=2)).map(|_| atom(&mut rng, &body_pool)).collect();
        let mut body_vars: Vec<&str> = body_pool.iter().copied().filter(|v| body.iter().any(|a| a.contains(v))).collect();
        body_vars.sort();
        let mut head_pool: Vec<&str> = body_vars.clone();
        head_pool.extend(["Y0", "Y1"]);
        let branching = if rng.gen_bool(0.3) { 2 } else { 1 };
        let heads: Vec<String> = (0..branching)
            .map(|_| {
                let atoms: Vec<String> = (0..rng.gen_range(1..=2)).map(|_| atom(&mut rng, &head_pool)).collect();
                atoms.join(", ")
            })
            .collect();
        text.push_str(&format!("{} -> {}.\n", body.join(", "), heads.join(" | ")));
    }
    text
}

pub fn random_rules(seed: u64) -> RuleSet {
    rules_from(&random_rules_text(seed))
}

/// A random ground term of depth at most `depth` over the skolem symbols of `rules`.
pub fn random_term(rng: &mut ChaCha8Rng, rules: &RuleSet, depth: u32, constants: &[Term]) -> Term {
    let symbols: Vec<(SkolemSymbol, usize)> =
        rules.iter().flat_map(|r| r.skolem_symbols().map(move |f| (f, r.frontier_slots().len()))).collect();
    if depth <= 1 || symbols.is_empty() || rng.gen_bool(0.35) {
        return *constants.choose(rng).unwrap();
    }
    let (f, arity) = *symbols.choose(rng).unwrap();
    let args: Vec<Term> = (0..arity).map(|_| random_term(rng, rules, depth - 1, constants)).collect();
    Term::functional(f, &args)
}

// ---------------------------------------------------------------------------
// Reference implementations. They avoid the library's pattern compiler and indexes and
// enumerate substitutions exhaustively.

pub type Subst = BTreeMap<Sym, Term>;

fn vars_of(atoms: &[Atom]) -> Vec<Sym> {
    let mut out = Vec::new();
    for a in atoms {
        for t in &a.args {
            if let Some(v) = t.as_variable() {
                if !out.contains(&v) {
                    out.push(v);
                }
            }
        }
    }
    out
}

fn apply(a: &Atom, s: &Subst) -> Atom {
    a.map_terms(|t| t.as_variable().and_then(|v| s.get(&v).copied()).unwrap_or(t))
}

/// Body variables that occur in some head disjunct, in order of first body occurrence.
pub fn naive_frontier(rule: &Rule) -> Vec<Sym> {
    let head_vars: HashSet<Sym> = rule.heads().iter().flat_map(|h| vars_of(h.atoms())).collect();
    vars_of(rule.body()).into_iter().filter(|v| head_vars.contains(v)).collect()
}

pub fn naive_out(rule: &Rule, i: usize, s: &Subst) -> Vec<Atom> {
    let body: HashSet<Sym> = vars_of(rule.body()).into_iter().collect();
    let frontier: Vec<Term> = naive_frontier(rule).iter().map(|v| s[v]).collect();
    let mut full = s.clone();
    for v in vars_of(rule.heads()[i - 1].atoms()) {
        if !body.contains(&v) {
            full.insert(v, Term::functional(SkolemSymbol::new(rule.id(), i as u32, v), &frontier));
        }
    }
    rule.heads()[i - 1].atoms().iter().map(|a| apply(a, &full)).collect()
}

/// Every assignment of `vars` to `terms`.
pub fn assignments(vars: &[Sym], terms: &[Term], base: &Subst) -> Vec<Subst> {
    let mut out = vec![base.clone()];
    for v in vars {
        out = out
            .into_iter()
            .flat_map(|s| {
                terms.iter().map(move |t| {
                    let mut s = s.clone();
                    s.insert(*v, *t);
                    s
                })
            })
            .collect();
    }
    out
}

fn term_list(facts: &FactSet) -> Vec<Term> {
    let set: BTreeSet<Term> = facts.iter().flat_map(|a| a.args.iter().copied()).collect();
    set.into_iter().collect()
}

pub fn naive_loaded(rule: &Rule, s: &Subst, facts: &FactSet) -> bool {
    rule.body().iter().all(|a| facts.contains(&apply(a, s)))
}

pub fn naive_obsolete(rule: &Rule, s: &Subst, facts: &FactSet) -> bool {
    let terms = term_list(facts);
    let body: HashSet<Sym> = vars_of(rule.body()).into_iter().collect();
    rule.heads().iter().any(|h| {
        let ex: Vec<Sym> = vars_of(h.atoms()).into_iter().filter(|v| !body.contains(v)).collect();
        assignments(&ex, &terms, s).iter().any(|e| h.atoms().iter().all(|a| facts.contains(&apply(a, e))))
    })
}

/// All loaded triggers of `rule` for `facts`, by enumeration over the terms of `facts`.
pub fn naive_triggers(rule: &Rule, facts: &FactSet) -> Vec<Subst> {
    let terms = term_list(facts);
    assignments(&vars_of(rule.body()), &terms, &Subst::new())
        .into_iter()
        .filter(|s| naive_loaded(rule, s, facts))
        .collect()
}

pub fn subst_of(rule: &Rule, t: &Trigger) -> Subst {
    rule.body_vars().iter().copied().zip(t.args.iter().copied()).collect()
}

pub fn trigger_of(rule: &Rule, s: &Subst) -> Trigger {
    let args: Vec<Term> = rule.body_vars().iter().map(|v| s[v]).collect();
    Trigger::new(rule.id(), &args)
}

fn naive_abstract(unique: bool, skel: &HashSet<Term>, t: Term) -> Term {
    if skel.contains(&t) {
        return t;
    }
    if let Some(f) = t.root_symbol() {
        if unique {
            return Term::uc_constant(f);
        }
    } else if unique && t.as_constant().is_some_and(|c| c.as_str().starts_with("__uc_")) {
        return t;
    }
    Term::star()
}

fn sorted(mut v: Vec<Atom>) -> Vec<Atom> {
    v.sort();
    v.dedup();
    v
}

/// Over-approximation by exhaustive enumeration. `hc = None` merges all disjuncts.
pub fn naive_over_approx(rules: &RuleSet, pivot: &Trigger, unique: bool, hc: Option<&HeadChoice>) -> FactSet {
    let skel: HashSet<Term> = skeleton(pivot, rules).unwrap().into_iter().collect();
    let mut consts: Vec<Term> = skel.iter().copied().filter(|t| t.is_constant()).collect();
    consts.push(Term::star());
    let mut facts = FactSet::new();
    for p in rules.predicates() {
        let vars: Vec<Sym> = (0..p.arity).map(|i| Sym::new(&format!("V{i}"))).collect();
        for s in assignments(&vars, &consts, &Subst::new()) {
            facts.insert(Atom::with_pred(p, vars.iter().map(|v| s[v]).collect()));
        }
    }
    facts.extend(birth_facts(pivot, rules).unwrap());
    let rho = rules.rule(pivot.rule);
    let ps = subst_of(rho, pivot);
    loop {
        let before = facts.len();
        let snapshot = facts.clone();
        for rule in rules.iter() {
            for s in naive_triggers(rule, &snapshot) {
                let derived = match hc {
                    Some(hc) => {
                        let out = sorted(naive_out(rule, hc.get(rule.id()), &s));
                        if out == sorted(naive_out(rho, hc.get(rho.id()), &ps)) {
                            continue;
                        }
                        out
                    }
                    None => {
                        let n = rule.heads().len();
                        if rule.id() == rho.id()
                            && (1..=n).all(|i| sorted(naive_out(rule, i, &s)) == sorted(naive_out(rho, i, &ps)))
                        {
                            continue;
                        }
                        (1..=n).flat_map(|i| naive_out(rule, i, &s)).collect()
                    }
                };
                for a in derived {
                    facts.insert(a.map_terms(|t| naive_abstract(unique, &skel, t)));
                }
            }
        }
        if facts.len() == before {
            return facts;
        }
    }
}

/// The prefix-search fact set with every trigger treated as unblockable and no injectivity
/// filter, saturated without stopping at cyclic terms.
pub fn naive_rpc_set(rules: &RuleSet, hc: &HeadChoice, rho: u32, cap: u32) -> FactSet {
    let r = rules.rule(rho);
    let s0: Subst = vars_of(r.body()).into_iter().map(|v| (v, Term::db_constant(v))).collect();
    let mut facts: FactSet = r.body().iter().map(|a| apply(a, &s0)).collect();
    facts.extend(naive_out(r, hc.get(rho), &s0));
    loop {
        let before = facts.len();
        let snapshot = facts.clone();
        for rule in rules.iter() {
            for s in naive_triggers(rule, &snapshot) {
                if s.values().any(|t| t.max_nesting() >= 2) {
                    continue;
                }
                let out = naive_out(rule, hc.get(rule.id()), &s);
                if out.iter().flat_map(|a| a.args.iter()).any(|t| t.depth() > cap) {
                    continue;
                }
                facts.extend(out);
            }
        }
        if facts.len() == before {
            return facts;
        }
    }
}

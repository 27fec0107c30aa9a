//! Finite over-approximations of what a chase may derive before a given trigger, and the
//! unblockability and reversibility checks built on them.

use crate::chase::HeadChoice;
use crate::matcher::{rule_is_obsolete, FactSet, TriggerDiscovery};
use crate::model::{
    birth_facts, skeleton, Atom, ConstantMapping, ModelError, RuleSet, Term, Trigger, UC_PREFIX,
};
use crate::ruleio::render_facts;
use std::collections::{HashMap, HashSet};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ApproxError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("constant mapping is not reversible (condition {0} fails)")]
    NotReversible(u8),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AbstractionKind {
    /// Every term outside the skeleton becomes `⋆`.
    Star,
    /// Functional terms outside the skeleton become `c_f` for their root symbol `f`.
    UniqueConstants,
}

/// A term mapping anchored on the skeleton of a pivot trigger.
#[derive(Clone, Debug)]
pub struct TermAbstraction {
    kind: AbstractionKind,
    skeleton: HashSet<Term>,
}

fn is_uc_constant(t: Term) -> bool {
    t.as_constant().is_some_and(|c| c.as_str().starts_with(UC_PREFIX))
}

impl TermAbstraction {
    pub fn new(kind: AbstractionKind, skeleton: impl IntoIterator<Item = Term>) -> Self {
        TermAbstraction { kind, skeleton: skeleton.into_iter().collect() }
    }

    pub fn for_trigger(kind: AbstractionKind, rules: &RuleSet, pivot: &Trigger) -> Result<Self, ModelError> {
        Ok(Self::new(kind, skeleton(pivot, rules)?))
    }

    pub fn kind(&self) -> AbstractionKind {
        self.kind
    }

    pub fn skeleton(&self) -> &HashSet<Term> {
        &self.skeleton
    }

    pub fn apply(&self, t: Term) -> Term {
        if self.skeleton.contains(&t) {
            return t;
        }
        match self.kind {
            AbstractionKind::Star => Term::star(),
            AbstractionKind::UniqueConstants => match t.root_symbol() {
                Some(f) => Term::uc_constant(f),
                None if is_uc_constant(t) => t,
                None => Term::star(),
            },
        }
    }

    pub fn apply_atom(&self, a: &Atom) -> Atom {
        a.map_terms(|t| self.apply(t))
    }
}

/// Free-function form of [`TermAbstraction::apply`].
pub fn abstract_term(h: &TermAbstraction, t: Term) -> Term {
    h.apply(t)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ApproxMode {
    WithHeadChoice(HeadChoice),
    /// Every disjunct of a rule is added at once.
    DisjunctionAsConjunction,
}

#[derive(Clone, Debug)]
pub struct OverApproximation {
    pub facts: FactSet,
    pub pivot: Trigger,
    pub mode: ApproxMode,
}

impl OverApproximation {
    /// The fact set in `.drls` fact syntax, one fact per line.
    pub fn dump(&self) -> String {
        render_facts(self.facts.sorted())
    }
}

fn out_key(mut atoms: Vec<Atom>) -> Vec<Atom> {
    atoms.sort();
    atoms.dedup();
    atoms
}

/// Every fact over the predicates of `rules` and the given constants.
fn dense_block(rules: &RuleSet, constants: &[Term], out: &mut FactSet) {
    for pred in rules.predicates() {
        let arity = pred.arity as usize;
        let mut idx = vec![0usize; arity];
        loop {
            out.insert(Atom::with_pred(pred, idx.iter().map(|&i| constants[i]).collect()));
            let mut pos = 0;
            while pos < arity {
                idx[pos] += 1;
                if idx[pos] < constants.len() {
                    break;
                }
                idx[pos] = 0;
                pos += 1;
            }
            if pos == arity {
                break;
            }
        }
    }
}

/// The least fact set containing the dense constant block and the birth facts of `pivot` and
/// closed under abstracted outputs of loaded triggers, excluding those whose output coincides
/// with the pivot's.
pub fn build_over_approx(
    rules: &RuleSet,
    pivot: &Trigger,
    h: &TermAbstraction,
    mode: ApproxMode,
) -> Result<OverApproximation, ApproxError> {
    let rho = rules.get(pivot.rule).ok_or(ModelError::UnknownRule(pivot.rule))?;
    let mut constants: Vec<Term> = h.skeleton.iter().copied().filter(|t| t.is_constant()).collect();
    constants.sort();
    constants.push(Term::star());
    let mut facts = FactSet::new();
    dense_block(rules, &constants, &mut facts);
    facts.extend(birth_facts(pivot, rules)?);

    let pivot_outs: Vec<Vec<Atom>> = match &mode {
        ApproxMode::WithHeadChoice(hc) => vec![out_key(hc.out(rules, pivot))],
        ApproxMode::DisjunctionAsConjunction => {
            (1..=rho.branching()).map(|i| out_key(rho.out(i, &pivot.args))).collect()
        }
    };

    let mut discovery = TriggerDiscovery::new();
    loop {
        let mut pending = Vec::new();
        discovery.discover(rules, &facts, &mut |t| pending.push(t));
        if pending.is_empty() {
            break;
        }
        for t in pending {
            let rule = rules.rule(t.rule);
            let derived: Vec<Atom> = match &mode {
                ApproxMode::WithHeadChoice(hc) => {
                    let out = out_key(hc.out(rules, &t));
                    if out == pivot_outs[0] {
                        continue;
                    }
                    out
                }
                ApproxMode::DisjunctionAsConjunction => {
                    let outs: Vec<Vec<Atom>> = (1..=rule.branching()).map(|i| out_key(rule.out(i, &t.args))).collect();
                    if t.rule == pivot.rule && outs == pivot_outs {
                        continue;
                    }
                    outs.into_iter().flatten().collect()
                }
            };
            facts.extend(derived.iter().map(|a| h.apply_atom(a)));
        }
    }
    Ok(OverApproximation { facts, pivot: pivot.clone(), mode })
}

/// Datalog triggers, and triggers not obsolete for the `⋆` over-approximation with all
/// disjuncts merged.
pub fn is_star_unblockable(rules: &RuleSet, trigger: &Trigger) -> Result<bool, ApproxError> {
    unblockable(rules, trigger, AbstractionKind::Star, ApproxMode::DisjunctionAsConjunction)
}

/// Datalog triggers, and triggers not obsolete for the unique-constant over-approximation
/// under `hc`.
pub fn is_uc_unblockable(rules: &RuleSet, hc: &HeadChoice, trigger: &Trigger) -> Result<bool, ApproxError> {
    unblockable(rules, trigger, AbstractionKind::UniqueConstants, ApproxMode::WithHeadChoice(hc.clone()))
}

fn unblockable(rules: &RuleSet, trigger: &Trigger, kind: AbstractionKind, mode: ApproxMode) -> Result<bool, ApproxError> {
    let rule = rules.get(trigger.rule).ok_or(ModelError::UnknownRule(trigger.rule))?;
    if rule.is_datalog() {
        return Ok(true);
    }
    let h = TermAbstraction::for_trigger(kind, rules, trigger)?;
    let o = build_over_approx(rules, trigger, &h, mode)?;
    Ok(!rule_is_obsolete(rule, &trigger.args, &o.facts))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReversibilityCertificate {
    pub mapping: ConstantMapping,
    pub domain: Vec<Term>,
    /// The first of the three conditions that fails, if any.
    pub violated: Option<u8>,
}

impl ReversibilityCertificate {
    pub fn is_reversible(&self) -> bool {
        self.violated.is_none()
    }
}

impl fmt::Display for ReversibilityCertificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.violated {
            None => write!(f, "{} is reversible on {} terms", self.mapping, self.domain.len()),
            Some(c) => write!(f, "{} violates condition {c}", self.mapping),
        }
    }
}

fn first_violation(g: &ConstantMapping, domain: &[Term]) -> Option<u8> {
    let consts: Vec<Term> = domain.iter().copied().filter(|t| t.is_constant()).collect();
    if consts.iter().any(|t| !g.contains(t.as_constant().expect("constant"))) {
        return Some(1);
    }
    let mut images: HashMap<Term, Term> = HashMap::new();
    for &t in domain {
        if let Some(prev) = images.insert(g.apply(t), t) {
            if prev != t {
                return Some(2);
            }
        }
    }
    let functional_images: HashSet<Term> = domain.iter().filter(|t| t.is_functional()).map(|&u| g.apply(u)).collect();
    for c in consts {
        if g.apply(c).subterms().iter().any(|s| functional_images.contains(s)) {
            return Some(3);
        }
    }
    None
}

/// Checks the three reversibility conditions of `g` on the subterm-closed set `domain`.
pub fn check_reversible<'a>(g: &ConstantMapping, domain: impl IntoIterator<Item = &'a Term>) -> ReversibilityCertificate {
    let mut domain: Vec<Term> = domain.into_iter().copied().collect();
    domain.sort();
    domain.dedup();
    let violated = first_violation(g, &domain);
    ReversibilityCertificate { mapping: g.clone(), domain, violated }
}

/// `⟨ρ, g∘σ⟩`, provided `g` is reversible on the skeleton of the trigger.
pub fn transport_trigger(rules: &RuleSet, trigger: &Trigger, g: &ConstantMapping) -> Result<Trigger, ApproxError> {
    let skel = skeleton(trigger, rules)?;
    match check_reversible(g, &skel).violated {
        Some(c) => Err(ApproxError::NotReversible(c)),
        None => Ok(trigger.map_constants(g)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{c, f, rules, sk, BIKE, INJECTIVITY, REV3, UC_STAR};
    use crate::model::Predicate;
    use proptest::prelude::*;

    fn star() -> Term {
        Term::star()
    }

    /// Pivot `⟨(2), [X/f_v(d)]⟩` over the first two bike rules.
    fn bike_pivot() -> (RuleSet, Trigger, Term) {
        let r = rules(BIKE).subset(&[1, 2]);
        let fv = f(sk(&r, 1, "V"), &[c("d")]);
        (r, Trigger::new(2, &[fv]), fv)
    }

    fn bike_golden(r: &RuleSet, fv: Term, disjunctive: bool, kind: AbstractionKind) -> FactSet {
        let (cv, cw) = match kind {
            AbstractionKind::UniqueConstants => (Term::uc_constant(sk(r, 1, "V")), Term::uc_constant(sk(r, 2, "W"))),
            AbstractionKind::Star => (star(), star()),
        };
        let d = c("d");
        let mut out = FactSet::new();
        for s in [star(), d] {
            for p in ["Engine", "Bike", "Spare"] {
                out.insert(Atom::new(p, &[s]));
            }
            for t in [star(), d] {
                out.insert(Atom::new("IsIn", &[s, t]));
                out.insert(Atom::new("Has", &[s, t]));
            }
        }
        out.insert(Atom::new("IsIn", &[d, fv]));
        out.insert(Atom::new("Bike", &[fv]));
        for a in [
            Atom::new("IsIn", &[star(), cv]),
            Atom::new("Bike", &[cv]),
            Atom::new("Has", &[star(), cw]),
            Atom::new("Has", &[d, cw]),
            Atom::new("Engine", &[cw]),
            Atom::new("IsIn", &[cw, cv]),
            Atom::new("Has", &[cv, cw]),
        ] {
            out.insert(a);
        }
        if disjunctive {
            out.insert(Atom::new("Spare", &[cw]));
        }
        out
    }

    #[test]
    fn abstraction_examples() {
        let (r, pivot, fv) = bike_pivot();
        let uc = TermAbstraction::for_trigger(AbstractionKind::UniqueConstants, &r, &pivot).unwrap();
        let st = TermAbstraction::for_trigger(AbstractionKind::Star, &r, &pivot).unwrap();
        let fw = f(sk(&r, 2, "W"), &[fv]);
        assert_eq!(uc.apply(fw), Term::uc_constant(sk(&r, 2, "W")));
        assert_eq!(uc.apply(fv), fv);
        assert_eq!(st.apply(fv), fv);
        assert_eq!(st.apply(c("e")), star());
        assert_eq!(uc.apply(c("e")), star());
        assert_eq!(st.apply(fw), star());
        let cw = Term::uc_constant(sk(&r, 2, "W"));
        assert_eq!(uc.apply(cw), cw);
        assert_eq!(abstract_term(&st, star()), star());
    }

    #[test]
    fn frontier_images_are_fixed() {
        for (text, ids) in [(BIKE, vec![1, 2]), (UC_STAR, vec![1, 2, 3, 4])] {
            let r = rules(text).subset(&ids);
            let (_, pivot, _) = bike_pivot();
            let pivot = if text == BIKE { pivot } else {
                let cy = c("c_y");
                Trigger::new(1, &[cy, f(sk(&r, 1, "U"), &[cy])])
            };
            for kind in [AbstractionKind::Star, AbstractionKind::UniqueConstants] {
                let h = TermAbstraction::for_trigger(kind, &r, &pivot).unwrap();
                for t in pivot.frontier_args(r.rule(pivot.rule)) {
                    assert_eq!(h.apply(t), t);
                }
            }
        }
    }

    #[test]
    fn bike_over_approximations() {
        let (r, pivot, fv) = bike_pivot();
        let hc1 = ApproxMode::WithHeadChoice(HeadChoice::uniform(&r, 1));
        for kind in [AbstractionKind::UniqueConstants, AbstractionKind::Star] {
            let h = TermAbstraction::for_trigger(kind, &r, &pivot).unwrap();
            let o = build_over_approx(&r, &pivot, &h, hc1.clone()).unwrap();
            assert_eq!(o.facts, bike_golden(&r, fv, false, kind), "{kind:?}");
            let o = build_over_approx(&r, &pivot, &h, ApproxMode::DisjunctionAsConjunction).unwrap();
            assert_eq!(o.facts, bike_golden(&r, fv, true, kind), "{kind:?}");
        }
        let h = TermAbstraction::for_trigger(AbstractionKind::UniqueConstants, &r, &pivot).unwrap();
        let o = build_over_approx(&r, &pivot, &h, hc1).unwrap();
        let cv = Term::uc_constant(sk(&r, 1, "V"));
        let cw = Term::uc_constant(sk(&r, 2, "W"));
        assert!(!o.facts.contains(&Atom::new("IsIn", &[c("d"), cv])));
        assert!(!o.facts.contains(&Atom::new("Has", &[fv, cw])));
        assert!(o.dump().contains("Bike("));
    }

    #[test]
    fn unblockability_examples() {
        let (r, pivot, _) = bike_pivot();
        let hc1 = HeadChoice::uniform(&r, 1);
        assert!(is_uc_unblockable(&r, &hc1, &pivot).unwrap());
        assert!(is_star_unblockable(&r, &pivot).unwrap());
        let r3 = rules(BIKE).subset(&[1, 2, 3]);
        assert!(!is_uc_unblockable(&r3, &HeadChoice::uniform(&r3, 1), &pivot).unwrap());

        let r = rules(UC_STAR);
        let cy = c("c_y");
        let t = Trigger::new(1, &[cy, f(sk(&r, 1, "U"), &[cy])]);
        assert!(!is_star_unblockable(&r, &t).unwrap());
        assert!(is_uc_unblockable(&r, &HeadChoice::uniform(&r, 1), &t).unwrap());

        let datalog = Trigger::new(4, &[c("a"), c("b")]);
        assert!(is_star_unblockable(&r, &datalog).unwrap());
    }

    #[test]
    fn reversibility_examples() {
        let r = rules(INJECTIVITY);
        let (cx, cy) = (c("c_x"), c("c_y"));
        let fu = f(sk(&r, 1, "U"), &[cx, cy]);
        let img = f(sk(&r, 2, "V"), &[fu]);
        let t = Trigger::new(2, &[cx, fu]);
        let g = ConstantMapping::from_pairs([(cx, img), (cy, img)]);
        let cert = check_reversible(&g, &skeleton(&t, &r).unwrap());
        assert_eq!(cert.violated, Some(2));
        assert_eq!(transport_trigger(&r, &t, &g), Err(ApproxError::NotReversible(2)));

        let r = rules(REV3);
        let (cc, d) = (c("c"), c("d"));
        let fu = f(sk(&r, 1, "U"), &[d]);
        let t = Trigger::new(5, &[cc, fu]);
        let g = ConstantMapping::from_pairs([(cc, f(sk(&r, 3, "W"), &[f(sk(&r, 2, "V"), &[fu])])), (d, d)]);
        assert_eq!(check_reversible(&g, &skeleton(&t, &r).unwrap()).violated, Some(3));

        let id = ConstantMapping::from_pairs([(cc, cc), (d, d)]);
        assert!(check_reversible(&id, &[cc, d]).is_reversible());
        let partial = ConstantMapping::from_pairs([(cc, cc)]);
        assert_eq!(check_reversible(&partial, &[cc, d]).violated, Some(1));
    }

    #[test]
    fn transport_examples() {
        let r = rules(BIKE).subset(&[1, 2]);
        let cx = c("c_x");
        let g = ConstantMapping::from_pairs([(cx, f(sk(&r, 2, "W"), &[f(sk(&r, 1, "V"), &[cx])]))]);
        let t = Trigger::new(1, &[cx]);
        let moved = transport_trigger(&r, &t, &g).unwrap();
        assert_eq!(moved.args[0], f(sk(&r, 2, "W"), &[f(sk(&r, 1, "V"), &[cx])]));
        let id = ConstantMapping::from_pairs([(cx, cx)]);
        assert_eq!(transport_trigger(&r, &t, &id).unwrap(), t);
    }

    #[test]
    fn head_choice_approximation_is_contained() {
        for text in [BIKE, UC_STAR, INJECTIVITY, REV3] {
            let r = rules(text);
            for rule in r.iter().filter(|x| !x.is_datalog()) {
                let args: Vec<Term> = rule.body_vars().iter().map(|v| Term::db_constant(*v)).collect();
                let t = Trigger::new(rule.id(), &args);
                for kind in [AbstractionKind::Star, AbstractionKind::UniqueConstants] {
                    let h = TermAbstraction::for_trigger(kind, &r, &t).unwrap();
                    let all = build_over_approx(&r, &t, &h, ApproxMode::DisjunctionAsConjunction).unwrap();
                    for hc in HeadChoice::enumerate(&r) {
                        let one = build_over_approx(&r, &t, &h, ApproxMode::WithHeadChoice(hc)).unwrap();
                        assert!(one.facts.is_subset(&all.facts));
                    }
                }
            }
        }
    }

    #[test]
    fn dense_block_size() {
        let r = rules("P(X,Y,Z) -> Q(X).");
        let mut out = FactSet::new();
        dense_block(&r, &[c("a"), c("b"), star()], &mut out);
        assert_eq!(out.len(), 27 + 3);
        assert_eq!(out.with_pred(Predicate::new("Q", 1)).len(), 3);
    }

    proptest! {
        #[test]
        fn star_unblockable_implies_uc_unblockable(depth in 1usize..4, pick in 0usize..64) {
            // Triggers over the bike rules with a chain of alternating skolem terms.
            let r = rules(BIKE).subset(&[1, 2]);
            let (fv, fw) = (sk(&r, 1, "V"), sk(&r, 2, "W"));
            let mut t = c("d");
            for i in 0..depth {
                t = if (pick >> i) & 1 == 0 { f(fv, &[t]) } else { f(fw, &[t]) };
            }
            for id in [1, 2] {
                let trig = Trigger::new(id, &[t]);
                if is_star_unblockable(&r, &trig).unwrap() {
                    for hc in HeadChoice::enumerate(&r) {
                        prop_assert!(is_uc_unblockable(&r, &hc, &trig).unwrap());
                    }
                }
            }
        }
    }
}

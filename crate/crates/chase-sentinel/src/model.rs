//! Terms, atoms, rules, substitutions and skolemization.
//!
//! Terms are hash-consed: every structurally distinct term is allocated once and lives for the
//! rest of the process, so [`Term`] is a `Copy` handle compared by pointer.

use crate::symbol::stable_hash;
use dashmap::DashMap;
use indexmap::{IndexMap, IndexSet};
use smallvec::SmallVec;
use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::OnceLock;
use thiserror::Error;

pub use crate::symbol::Sym;

/// Prefix of the abstraction constant used for every term outside a skeleton.
pub const STAR: &str = "__star";
/// Prefix of the per-skolem-symbol fresh constants.
pub const UC_PREFIX: &str = "__uc_";
/// Prefix of the constants of a rule database.
pub const DB_PREFIX: &str = "__db_";

pub fn is_reserved_name(name: &str) -> bool {
    name == STAR || name.starts_with(UC_PREFIX) || name.starts_with(DB_PREFIX) || name.starts_with("__")
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("rule has an empty body")]
    EmptyBody,
    #[error("rule has an empty head disjunct")]
    EmptyHead,
    #[error("rule contains the non-variable term {0}")]
    NonVariableInRule(String),
    #[error("skolem symbol {0} refers to a rule that is not in the rule set")]
    SymbolNotInRuleSet(String),
    #[error("duplicate rule id {0}")]
    DuplicateRuleId(u32),
    #[error("substitution does not cover body variable {0}")]
    IncompleteSubstitution(String),
    #[error("trigger refers to unknown rule id {0}")]
    UnknownRule(u32),
    #[error("predicate {name} used with arities {first} and {second}")]
    ArityMismatch { name: String, first: usize, second: usize },
}

// ---------------------------------------------------------------------------
// Skolem symbols

struct SkolemData {
    rule: u32,
    disjunct: u32,
    var: Sym,
    name: &'static str,
    hash: u64,
}

/// A skolem function symbol, unique per (rule, disjunct, existential variable).
#[derive(Clone, Copy)]
pub struct SkolemSymbol(&'static SkolemData);

fn skolem_table() -> &'static DashMap<(u32, u32, Sym), &'static SkolemData> {
    static TABLE: OnceLock<DashMap<(u32, u32, Sym), &'static SkolemData>> = OnceLock::new();
    TABLE.get_or_init(DashMap::new)
}

impl SkolemSymbol {
    pub fn new(rule: u32, disjunct: u32, var: Sym) -> SkolemSymbol {
        let key = (rule, disjunct, var);
        if let Some(found) = skolem_table().get(&key) {
            return SkolemSymbol(*found);
        }
        let data = *skolem_table().entry(key).or_insert_with(|| {
            let name: &'static str =
                Box::leak(format!("f_{rule}_{disjunct}_{var}").into_boxed_str());
            Box::leak(Box::new(SkolemData {
                rule,
                disjunct,
                var,
                name,
                hash: stable_hash(name),
            }))
        });
        SkolemSymbol(data)
    }

    pub fn rule(self) -> u32 {
        self.0.rule
    }

    /// 1-based index of the head disjunct.
    pub fn disjunct(self) -> u32 {
        self.0.disjunct
    }

    pub fn var(self) -> Sym {
        self.0.var
    }

    /// Canonical printed name `f_{rule}_{disjunct}_{var}`.
    pub fn name(self) -> &'static str {
        self.0.name
    }

    /// Parses a canonical name back into a symbol.
    pub fn parse_name(name: &str) -> Option<SkolemSymbol> {
        let rest = name.strip_prefix("f_")?;
        let mut parts = rest.splitn(3, '_');
        let rule = parts.next()?.parse().ok()?;
        let disjunct: u32 = parts.next()?.parse().ok()?;
        let var = parts.next()?;
        if var.is_empty() || disjunct == 0 {
            return None;
        }
        Some(SkolemSymbol::new(rule, disjunct, Sym::new(var)))
    }
}

impl PartialEq for SkolemSymbol {
    fn eq(&self, other: &Self) -> bool {
        std::ptr::eq(self.0, other.0)
    }
}

impl Eq for SkolemSymbol {}

impl Hash for SkolemSymbol {
    fn hash<H: Hasher>(&self, state: &mut H) {
        state.write_u64(self.0.hash);
    }
}

impl PartialOrd for SkolemSymbol {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SkolemSymbol {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.0.rule, self.0.disjunct, self.0.var).cmp(&(other.0.rule, other.0.disjunct, other.0.var))
    }
}

impl fmt::Display for SkolemSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.0.name)
    }
}

impl fmt::Debug for SkolemSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.0.name)
    }
}

// ---------------------------------------------------------------------------
// Terms

#[derive(Debug)]
pub enum TermKind {
    Constant(Sym),
    Variable(Sym),
    Functional(SkolemSymbol, Box<[Term]>),
}

pub struct TermNode {
    kind: TermKind,
    hash: u64,
    depth: u32,
    ground: bool,
    /// For every function symbol in the term, the largest number of occurrences on one
    /// root-to-leaf path. Sorted by symbol.
    nesting: Box<[(SkolemSymbol, u32)]>,
}

/// A hash-consed term handle.
#[derive(Clone, Copy)]
pub struct Term(&'static TermNode);

#[derive(PartialEq, Eq, Hash)]
enum TermKey {
    Constant(Sym),
    Variable(Sym),
    Functional(SkolemSymbol, SmallVec<[Term; 4]>),
}

fn term_table() -> &'static DashMap<TermKey, Term> {
    static TABLE: OnceLock<DashMap<TermKey, Term>> = OnceLock::new();
    TABLE.get_or_init(DashMap::new)
}

fn intern(key: TermKey) -> Term {
    if let Some(found) = term_table().get(&key) {
        return *found;
    }
    let node = match &key {
        TermKey::Constant(s) => TermNode {
            kind: TermKind::Constant(*s),
            hash: stable_hash(&(0u8, s.stable_hash())),
            depth: 1,
            ground: true,
            nesting: Box::new([]),
        },
        TermKey::Variable(s) => TermNode {
            kind: TermKind::Variable(*s),
            hash: stable_hash(&(1u8, s.stable_hash())),
            depth: 1,
            ground: false,
            nesting: Box::new([]),
        },
        TermKey::Functional(f, args) => {
            let mut nest: BTreeMap<SkolemSymbol, u32> = BTreeMap::new();
            for a in args {
                for &(g, n) in a.0.nesting.iter() {
                    let e = nest.entry(g).or_insert(0);
                    *e = (*e).max(n);
                }
            }
            *nest.entry(*f).or_insert(0) += 1;
            let arg_hashes: Vec<u64> = args.iter().map(|a| a.0.hash).collect();
            TermNode {
                kind: TermKind::Functional(*f, args.iter().copied().collect()),
                hash: stable_hash(&(2u8, f.0.hash, arg_hashes)),
                depth: 1 + args.iter().map(|a| a.depth()).max().unwrap_or(1),
                ground: args.iter().all(|a| a.is_ground()),
                nesting: nest.into_iter().collect(),
            }
        }
    };
    *term_table().entry(key).or_insert_with(|| Term(Box::leak(Box::new(node))))
}

impl Term {
    pub fn constant(name: &str) -> Term {
        intern(TermKey::Constant(Sym::new(name)))
    }

    pub fn constant_sym(name: Sym) -> Term {
        intern(TermKey::Constant(name))
    }

    pub fn variable(name: &str) -> Term {
        intern(TermKey::Variable(Sym::new(name)))
    }

    pub fn variable_sym(name: Sym) -> Term {
        intern(TermKey::Variable(name))
    }

    pub fn functional(f: SkolemSymbol, args: &[Term]) -> Term {
        intern(TermKey::Functional(f, args.iter().copied().collect()))
    }

    /// The abstraction constant `⋆`.
    pub fn star() -> Term {
        Term::constant(STAR)
    }

    /// The fresh constant `c_f` of a skolem symbol.
    pub fn uc_constant(f: SkolemSymbol) -> Term {
        Term::constant(&format!("{UC_PREFIX}{}", f.name()))
    }

    /// The rule-database constant `c_x` of a variable.
    pub fn db_constant(var: Sym) -> Term {
        Term::constant(&format!("{DB_PREFIX}{var}"))
    }

    pub fn kind(self) -> &'static TermKind {
        &self.0.kind
    }

    pub fn as_constant(self) -> Option<Sym> {
        match self.0.kind {
            TermKind::Constant(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_variable(self) -> Option<Sym> {
        match self.0.kind {
            TermKind::Variable(s) => Some(s),
            _ => None,
        }
    }

    pub fn is_constant(self) -> bool {
        matches!(self.0.kind, TermKind::Constant(_))
    }

    pub fn is_functional(self) -> bool {
        matches!(self.0.kind, TermKind::Functional(..))
    }

    pub fn root_symbol(self) -> Option<SkolemSymbol> {
        match self.0.kind {
            TermKind::Functional(f, _) => Some(f),
            _ => None,
        }
    }

    pub fn args(self) -> &'static [Term] {
        match &self.0.kind {
            TermKind::Functional(_, args) => args,
            _ => &[],
        }
    }

    pub fn is_ground(self) -> bool {
        self.0.ground
    }

    /// 1 for constants and variables, one more than the deepest argument otherwise.
    pub fn depth(self) -> u32 {
        self.0.depth
    }

    /// Largest number of occurrences of one function symbol along a root-to-leaf path.
    pub fn max_nesting(self) -> u32 {
        self.0.nesting.iter().map(|&(_, n)| n).max().unwrap_or(0)
    }

    /// Whether some subterm `f(s)` has `f` occurring again inside `s`.
    pub fn is_cyclic(self) -> bool {
        self.max_nesting() >= 2
    }

    /// Whether the term has `k + 1` nested occurrences of one function symbol.
    pub fn is_k_cyclic(self, k: u32) -> bool {
        self.max_nesting() > k
    }

    /// Whether `f` occurs anywhere in the term.
    pub fn contains_symbol(self, f: SkolemSymbol) -> bool {
        self.0.nesting.binary_search_by(|(g, _)| g.cmp(&f)).is_ok()
    }

    /// Function symbols occurring in the term, in symbol order.
    pub fn symbols(self) -> impl Iterator<Item = SkolemSymbol> {
        self.0.nesting.iter().map(|&(g, _)| g)
    }

    /// All subterms including the term itself, each once, parents before children.
    pub fn subterms(self) -> Vec<Term> {
        let mut seen = IndexSet::new();
        let mut stack = vec![self];
        while let Some(t) = stack.pop() {
            if seen.insert(t) {
                stack.extend(t.args().iter().rev().copied());
            }
        }
        seen.into_iter().collect()
    }

    /// Replaces every constant in the domain of `g` by its image.
    pub fn map_constants(self, g: &ConstantMapping) -> Term {
        match &self.0.kind {
            TermKind::Constant(c) => g.get(*c).unwrap_or(self),
            TermKind::Variable(_) => self,
            TermKind::Functional(f, args) => {
                let mapped: SmallVec<[Term; 4]> = args.iter().map(|a| a.map_constants(g)).collect();
                if mapped.iter().zip(args.iter()).all(|(a, b)| a == b) {
                    self
                } else {
                    intern(TermKey::Functional(*f, mapped))
                }
            }
        }
    }

    /// Applies a variable substitution.
    pub fn substitute(self, s: &Substitution) -> Term {
        match &self.0.kind {
            TermKind::Variable(v) => s.get(*v).unwrap_or(self),
            TermKind::Constant(_) => self,
            TermKind::Functional(f, args) => {
                if self.is_ground() {
                    return self;
                }
                let mapped: SmallVec<[Term; 4]> = args.iter().map(|a| a.substitute(s)).collect();
                intern(TermKey::Functional(*f, mapped))
            }
        }
    }

    /// Visits every constant leaf, left to right.
    pub fn for_each_constant(self, visit: &mut impl FnMut(Sym)) {
        match &self.0.kind {
            TermKind::Constant(c) => visit(*c),
            TermKind::Variable(_) => {}
            TermKind::Functional(_, args) => args.iter().for_each(|a| a.for_each_constant(visit)),
        }
    }

    fn tag(self) -> u8 {
        match self.0.kind {
            TermKind::Constant(_) => 0,
            TermKind::Variable(_) => 1,
            TermKind::Functional(..) => 2,
        }
    }
}

impl PartialEq for Term {
    fn eq(&self, other: &Self) -> bool {
        std::ptr::eq(self.0, other.0)
    }
}

impl Eq for Term {}

impl Hash for Term {
    fn hash<H: Hasher>(&self, state: &mut H) {
        state.write_u64(self.0.hash);
    }
}

impl PartialOrd for Term {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Term {
    /// Structural order: constants, then variables, then functional terms by depth, symbol and
    /// arguments.
    fn cmp(&self, other: &Self) -> Ordering {
        if self == other {
            return Ordering::Equal;
        }
        match (&self.0.kind, &other.0.kind) {
            (TermKind::Constant(a), TermKind::Constant(b)) => a.cmp(b),
            (TermKind::Variable(a), TermKind::Variable(b)) => a.cmp(b),
            (TermKind::Functional(f, xs), TermKind::Functional(g, ys)) => self
                .depth()
                .cmp(&other.depth())
                .then_with(|| f.cmp(g))
                .then_with(|| xs.iter().cmp(ys.iter())),
            _ => self.tag().cmp(&other.tag()),
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.0.kind {
            TermKind::Constant(s) | TermKind::Variable(s) => f.write_str(s.as_str()),
            TermKind::Functional(g, args) => {
                write!(f, "{g}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

impl fmt::Debug for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

// ---------------------------------------------------------------------------
// Predicates and atoms

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct Predicate {
    pub name: Sym,
    pub arity: u32,
}

impl Predicate {
    pub fn new(name: &str, arity: usize) -> Predicate {
        Predicate { name: Sym::new(name), arity: arity as u32 }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.name, self.arity)
    }
}

pub type Args = SmallVec<[Term; 3]>;

/// An atom; a fact when every argument is ground.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Atom {
    pub pred: Predicate,
    pub args: Args,
}

pub type Fact = Atom;

impl Atom {
    pub fn new(pred: &str, args: &[Term]) -> Atom {
        Atom { pred: Predicate::new(pred, args.len()), args: args.iter().copied().collect() }
    }

    pub fn with_pred(pred: Predicate, args: Args) -> Atom {
        debug_assert_eq!(pred.arity as usize, args.len());
        Atom { pred, args }
    }

    pub fn is_ground(&self) -> bool {
        self.args.iter().all(|t| t.is_ground())
    }

    pub fn substitute(&self, s: &Substitution) -> Atom {
        Atom { pred: self.pred, args: self.args.iter().map(|t| t.substitute(s)).collect() }
    }

    pub fn map_constants(&self, g: &ConstantMapping) -> Atom {
        Atom { pred: self.pred, args: self.args.iter().map(|t| t.map_constants(g)).collect() }
    }

    pub fn map_terms(&self, mut h: impl FnMut(Term) -> Term) -> Atom {
        Atom { pred: self.pred, args: self.args.iter().map(|&t| h(t)).collect() }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.pred.name)?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str(")")
    }
}

impl fmt::Debug for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

// ---------------------------------------------------------------------------
// Substitutions and constant mappings

/// A map from variables to ground terms.
#[derive(Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct Substitution(BTreeMap<Sym, Term>);

impl Substitution {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, Term)>) -> Self {
        Substitution(pairs.into_iter().map(|(v, t)| (Sym::new(v), t)).collect())
    }

    pub fn insert(&mut self, var: Sym, term: Term) -> Option<Term> {
        self.0.insert(var, term)
    }

    pub fn get(&self, var: Sym) -> Option<Term> {
        self.0.get(&var).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Sym, Term)> + '_ {
        self.0.iter().map(|(v, t)| (*v, *t))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `g ∘ self`: apply `self`, then `g`.
    pub fn compose_constants(&self, g: &ConstantMapping) -> Substitution {
        Substitution(self.0.iter().map(|(v, t)| (*v, t.map_constants(g))).collect())
    }
}

impl fmt::Display for Substitution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, (v, t)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{v}/{t}")?;
        }
        f.write_str("]")
    }
}

/// A partial map from constants to ground terms, applied to every syntactic occurrence.
#[derive(Clone, Default, PartialEq, Eq, Hash, Debug)]
pub struct ConstantMapping(BTreeMap<Sym, Term>);

impl ConstantMapping {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (Term, Term)>) -> Self {
        let mut g = ConstantMapping::new();
        for (c, t) in pairs {
            g.insert(c.as_constant().expect("constant mapping domain must be constants"), t);
        }
        g
    }

    pub fn insert(&mut self, c: Sym, t: Term) -> Option<Term> {
        self.0.insert(c, t)
    }

    pub fn get(&self, c: Sym) -> Option<Term> {
        self.0.get(&c).copied()
    }

    pub fn contains(&self, c: Sym) -> bool {
        self.0.contains_key(&c)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Sym, Term)> + '_ {
        self.0.iter().map(|(c, t)| (*c, *t))
    }

    pub fn apply(&self, t: Term) -> Term {
        t.map_constants(self)
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &ConstantMapping) -> ConstantMapping {
        let mut out = ConstantMapping(other.0.iter().map(|(c, t)| (*c, t.map_constants(self))).collect());
        for (c, t) in self.iter() {
            out.0.entry(c).or_insert(t);
        }
        out
    }
}

impl fmt::Display for ConstantMapping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (c, t)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{c} -> {t}")?;
        }
        f.write_str("}")
    }
}

// ---------------------------------------------------------------------------
// Rules

pub type RuleId = u32;

/// Argument of a compiled pattern atom: a variable slot or a fixed ground term.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum Slot {
    Var(u16),
    Term(Term),
}

/// An atom whose variables are replaced by slot indexes.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct PatAtom {
    pub pred: Predicate,
    pub args: SmallVec<[Slot; 3]>,
}

impl PatAtom {
    pub fn instantiate(&self, binding: &[Option<Term>]) -> Atom {
        Atom {
            pred: self.pred,
            args: self
                .args
                .iter()
                .map(|s| match *s {
                    Slot::Var(i) => binding[i as usize].expect("unbound slot"),
                    Slot::Term(t) => t,
                })
                .collect(),
        }
    }
}

/// Compiles a conjunction of atoms into slot patterns; variables get slots in order of first
/// occurrence after the ones already in `vars`.
pub fn compile_conjunction(atoms: &[Atom], vars: &mut Vec<Sym>) -> Vec<PatAtom> {
    atoms
        .iter()
        .map(|a| PatAtom {
            pred: a.pred,
            args: a
                .args
                .iter()
                .map(|t| match t.as_variable() {
                    Some(v) => {
                        let idx = match vars.iter().position(|w| *w == v) {
                            Some(i) => i,
                            None => {
                                vars.push(v);
                                vars.len() - 1
                            }
                        };
                        Slot::Var(idx as u16)
                    }
                    None => Slot::Term(*t),
                })
                .collect(),
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct HeadDisjunct {
    existentials: Vec<Sym>,
    atoms: Vec<Atom>,
    pattern: Vec<PatAtom>,
    skolems: Vec<SkolemSymbol>,
}

impl HeadDisjunct {
    pub fn existentials(&self) -> &[Sym] {
        &self.existentials
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    /// Pattern over the rule's body slots followed by this disjunct's existential slots.
    pub fn pattern(&self) -> &[PatAtom] {
        &self.pattern
    }

    pub fn skolems(&self) -> &[SkolemSymbol] {
        &self.skolems
    }
}

/// A disjunctive existential rule `body → head_1 ∨ … ∨ head_n`.
#[derive(Clone, Debug)]
pub struct Rule {
    id: RuleId,
    body: Vec<Atom>,
    heads: Vec<HeadDisjunct>,
    body_vars: Vec<Sym>,
    frontier: Vec<u16>,
    body_pattern: Vec<PatAtom>,
}

impl Rule {
    /// Builds a rule; head variables that do not occur in the body are existential.
    pub fn new(id: RuleId, body: Vec<Atom>, heads: Vec<Vec<Atom>>) -> Result<Rule, ModelError> {
        if body.is_empty() {
            return Err(ModelError::EmptyBody);
        }
        if heads.is_empty() || heads.iter().any(|h| h.is_empty()) {
            return Err(ModelError::EmptyHead);
        }
        for a in body.iter().chain(heads.iter().flatten()) {
            if let Some(t) = a.args.iter().find(|t| t.as_variable().is_none()) {
                return Err(ModelError::NonVariableInRule(t.to_string()));
            }
        }
        let mut body_vars = Vec::new();
        let body_pattern = compile_conjunction(&body, &mut body_vars);
        let n_body = body_vars.len();
        let mut in_head = vec![false; n_body];
        let mut compiled_heads = Vec::with_capacity(heads.len());
        for (i, atoms) in heads.into_iter().enumerate() {
            let mut vars = body_vars.clone();
            let pattern = compile_conjunction(&atoms, &mut vars);
            for p in &pattern {
                for s in &p.args {
                    if let Slot::Var(v) = *s {
                        if (v as usize) < n_body {
                            in_head[v as usize] = true;
                        }
                    }
                }
            }
            let existentials: Vec<Sym> = vars[n_body..].to_vec();
            let skolems = existentials.iter().map(|y| SkolemSymbol::new(id, i as u32 + 1, *y)).collect();
            compiled_heads.push(HeadDisjunct { existentials, atoms, pattern, skolems });
        }
        let frontier = (0..n_body).filter(|&i| in_head[i]).map(|i| i as u16).collect();
        Ok(Rule { id, body, heads: compiled_heads, body_vars, frontier, body_pattern })
    }

    pub fn id(&self) -> RuleId {
        self.id
    }

    pub fn body(&self) -> &[Atom] {
        &self.body
    }

    pub fn heads(&self) -> &[HeadDisjunct] {
        &self.heads
    }

    /// Head disjunct `i`, 1-based.
    pub fn head(&self, i: usize) -> &HeadDisjunct {
        &self.heads[i - 1]
    }

    pub fn branching(&self) -> usize {
        self.heads.len()
    }

    /// Body variables in order of first occurrence; trigger arguments follow this order.
    pub fn body_vars(&self) -> &[Sym] {
        &self.body_vars
    }

    /// Slot indexes of the frontier variables, in body order.
    pub fn frontier_slots(&self) -> &[u16] {
        &self.frontier
    }

    pub fn frontier(&self) -> Vec<Sym> {
        self.frontier.iter().map(|&i| self.body_vars[i as usize]).collect()
    }

    pub fn body_pattern(&self) -> &[PatAtom] {
        &self.body_pattern
    }

    pub fn is_deterministic(&self) -> bool {
        self.heads.len() == 1
    }

    pub fn is_generating(&self) -> bool {
        self.heads.iter().any(|h| !h.existentials.is_empty())
    }

    pub fn is_datalog(&self) -> bool {
        self.is_deterministic() && !self.is_generating()
    }

    /// Whether `f` is a skolem symbol of this rule's skolemization.
    pub fn owns_symbol(&self, f: SkolemSymbol) -> bool {
        f.rule() == self.id
            && (f.disjunct() as usize) <= self.heads.len()
            && self.heads[f.disjunct() as usize - 1].skolems.contains(&f)
    }

    pub fn skolem_symbols(&self) -> impl Iterator<Item = SkolemSymbol> + '_ {
        self.heads.iter().flat_map(|h| h.skolems.iter().copied())
    }

    /// Binding for the skolemized disjunct `i`: body slots from `args`, existential slots as
    /// skolem terms over the frontier images.
    pub fn head_binding(&self, i: usize, args: &[Term]) -> SmallVec<[Option<Term>; 8]> {
        let head = self.head(i);
        let mut binding: SmallVec<[Option<Term>; 8]> = args.iter().map(|t| Some(*t)).collect();
        if !head.skolems.is_empty() {
            let frontier: SmallVec<[Term; 4]> = self.frontier.iter().map(|&s| args[s as usize]).collect();
            for f in &head.skolems {
                binding.push(Some(Term::functional(*f, &frontier)));
            }
        }
        binding
    }

    /// `out_i` of the trigger with body image `args`.
    pub fn out(&self, i: usize, args: &[Term]) -> Vec<Atom> {
        let binding = self.head_binding(i, args);
        self.head(i).pattern.iter().map(|p| p.instantiate(&binding)).collect()
    }

    pub fn predicates(&self) -> impl Iterator<Item = Predicate> + '_ {
        self.body.iter().chain(self.heads.iter().flat_map(|h| h.atoms.iter())).map(|a| a.pred)
    }
}

/// The skolemization of a rule: body unchanged, existentials replaced by skolem terms over
/// the frontier variables.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SkolemizedRule {
    pub id: RuleId,
    pub body: Vec<Atom>,
    pub heads: Vec<Vec<Atom>>,
}

pub fn skolemize(rule: &Rule) -> SkolemizedRule {
    let args: Vec<Term> = rule.body_vars.iter().map(|v| Term::variable_sym(*v)).collect();
    SkolemizedRule {
        id: rule.id,
        body: rule.body.clone(),
        heads: (1..=rule.branching()).map(|i| rule.out(i, &args)).collect(),
    }
}

/// An ordered rule set with unique ids.
#[derive(Clone, Debug, Default)]
pub struct RuleSet {
    rules: Vec<Rule>,
    index: IndexMap<RuleId, usize>,
}

impl RuleSet {
    pub fn new(rules: Vec<Rule>) -> Result<RuleSet, ModelError> {
        let mut index = IndexMap::new();
        let mut arities: IndexMap<Sym, u32> = IndexMap::new();
        for (i, r) in rules.iter().enumerate() {
            if index.insert(r.id, i).is_some() {
                return Err(ModelError::DuplicateRuleId(r.id));
            }
            for p in r.predicates() {
                let first = *arities.entry(p.name).or_insert(p.arity);
                if first != p.arity {
                    return Err(ModelError::ArityMismatch {
                        name: p.name.to_string(),
                        first: first as usize,
                        second: p.arity as usize,
                    });
                }
            }
        }
        Ok(RuleSet { rules, index })
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Rule> {
        self.rules.iter()
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn get(&self, id: RuleId) -> Option<&Rule> {
        self.index.get(&id).map(|&i| &self.rules[i])
    }

    pub fn rule(&self, id: RuleId) -> &Rule {
        self.get(id).unwrap_or_else(|| panic!("unknown rule id {id}"))
    }

    /// Sub-rule-set with the given ids, keeping their ids (and hence their skolem symbols).
    pub fn subset(&self, ids: &[RuleId]) -> RuleSet {
        let rules = self.rules.iter().filter(|r| ids.contains(&r.id)).cloned().collect();
        RuleSet::new(rules).expect("subset of a valid rule set is valid")
    }

    /// Predicates in order of first occurrence.
    pub fn predicates(&self) -> Vec<Predicate> {
        let mut out = IndexSet::new();
        for r in &self.rules {
            out.extend(r.predicates());
        }
        out.into_iter().collect()
    }

    /// Largest branching of any rule; 1 for the empty set.
    pub fn branching(&self) -> usize {
        self.rules.iter().map(Rule::branching).max().unwrap_or(1)
    }

    pub fn owner_of(&self, f: SkolemSymbol) -> Option<&Rule> {
        self.get(f.rule()).filter(|r| r.owns_symbol(f))
    }

    /// Abbreviated name `f_y` for a skolem symbol when `y` names a single existential in the set.
    pub fn short_name(&self, f: SkolemSymbol) -> String {
        let clashes = self
            .rules
            .iter()
            .flat_map(|r| r.skolem_symbols())
            .filter(|g| g.var() == f.var())
            .count();
        if clashes == 1 {
            format!("f_{}", f.var())
        } else {
            f.name().to_owned()
        }
    }
}

// ---------------------------------------------------------------------------
// Triggers

/// A rule id with the images of the rule's body variables, in body-variable order.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct Trigger {
    pub rule: RuleId,
    pub args: SmallVec<[Term; 4]>,
}

impl Trigger {
    pub fn new(rule: RuleId, args: &[Term]) -> Trigger {
        Trigger { rule, args: args.iter().copied().collect() }
    }

    pub fn from_substitution(rule: &Rule, s: &Substitution) -> Result<Trigger, ModelError> {
        let args = rule
            .body_vars()
            .iter()
            .map(|v| s.get(*v).ok_or_else(|| ModelError::IncompleteSubstitution(v.to_string())))
            .collect::<Result<_, _>>()?;
        Ok(Trigger { rule: rule.id(), args })
    }

    pub fn substitution(&self, rule: &Rule) -> Substitution {
        Substitution(rule.body_vars().iter().copied().zip(self.args.iter().copied()).collect())
    }

    pub fn frontier_args(&self, rule: &Rule) -> SmallVec<[Term; 4]> {
        rule.frontier_slots().iter().map(|&s| self.args[s as usize]).collect()
    }

    pub fn out(&self, rules: &RuleSet, i: usize) -> Vec<Atom> {
        rules.rule(self.rule).out(i, &self.args)
    }

    pub fn map_constants(&self, g: &ConstantMapping) -> Trigger {
        Trigger { rule: self.rule, args: self.args.iter().map(|t| t.map_constants(g)).collect() }
    }

    /// Whether distinct body variables get distinct terms.
    pub fn is_injective(&self) -> bool {
        let set: IndexSet<Term> = self.args.iter().copied().collect();
        set.len() == self.args.len()
    }

    pub fn display<'a>(&'a self, rules: &'a RuleSet) -> TriggerDisplay<'a> {
        TriggerDisplay { trigger: self, rules }
    }
}

pub struct TriggerDisplay<'a> {
    trigger: &'a Trigger,
    rules: &'a RuleSet,
}

impl fmt::Display for TriggerDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.rules.get(self.trigger.rule) {
            Some(rule) => write!(f, "<r{}, {}>", self.trigger.rule, self.trigger.substitution(rule)),
            None => write!(f, "<r{}, {:?}>", self.trigger.rule, self.trigger.args),
        }
    }
}

// ---------------------------------------------------------------------------
// Birth facts and skeletons

fn collect_birth(
    t: Term,
    rules: &RuleSet,
    visited: &mut IndexSet<Term>,
    out: &mut IndexSet<Atom>,
) -> Result<(), ModelError> {
    let Some(f) = t.root_symbol() else { return Ok(()) };
    if !visited.insert(t) {
        return Ok(());
    }
    for &a in t.args() {
        collect_birth(a, rules, visited, out)?;
    }
    let rule = rules.owner_of(f).ok_or_else(|| ModelError::SymbolNotInRuleSet(f.to_string()))?;
    // out_i only depends on the frontier images.
    let mut args: SmallVec<[Term; 4]> = SmallVec::from_elem(Term::star(), rule.body_vars().len());
    if rule.frontier_slots().len() != t.args().len() {
        return Err(ModelError::SymbolNotInRuleSet(f.to_string()));
    }
    for (&slot, &a) in rule.frontier_slots().iter().zip(t.args()) {
        args[slot as usize] = a;
    }
    out.extend(rule.out(f.disjunct() as usize, &args));
    Ok(())
}

/// Birth facts of a term: the outputs along which each of its functional subterms was created.
pub fn birth_facts_of_term(t: Term, rules: &RuleSet) -> Result<IndexSet<Atom>, ModelError> {
    let mut out = IndexSet::new();
    collect_birth(t, rules, &mut IndexSet::new(), &mut out)?;
    Ok(out)
}

/// Birth facts of a trigger: the union over its frontier images.
pub fn birth_facts(trigger: &Trigger, rules: &RuleSet) -> Result<IndexSet<Atom>, ModelError> {
    let rule = rules.get(trigger.rule).ok_or(ModelError::UnknownRule(trigger.rule))?;
    let mut out = IndexSet::new();
    let mut visited = IndexSet::new();
    for t in trigger.frontier_args(rule) {
        collect_birth(t, rules, &mut visited, &mut out)?;
    }
    Ok(out)
}

/// Terms of the birth facts plus the constant frontier images, closed under subterms.
pub fn skeleton(trigger: &Trigger, rules: &RuleSet) -> Result<IndexSet<Term>, ModelError> {
    let rule = rules.get(trigger.rule).ok_or(ModelError::UnknownRule(trigger.rule))?;
    let mut out = IndexSet::new();
    for t in trigger.frontier_args(rule) {
        if t.is_constant() {
            out.insert(t);
        }
    }
    for a in birth_facts(trigger, rules)? {
        for t in a.args {
            out.extend(t.subterms());
        }
    }
    Ok(out)
}

/// Whether `t` is rooted in a skolem symbol of `rho` and some argument contains one as well.
pub fn is_rho_cyclic(t: Term, rho: &Rule) -> bool {
    match t.root_symbol() {
        Some(f) if rho.owns_symbol(f) => t
            .args()
            .iter()
            .any(|a| a.symbols().any(|g| rho.owns_symbol(g))),
        _ => false,
    }
}


#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    fn arb_term() -> impl Strategy<Value = Term> {
        let leaf = prop_oneof![Just(Term::constant("a")), Just(Term::constant("b"))];
        leaf.prop_recursive(4, 16, 2, |inner| {
            (0u32..3, prop::collection::vec(inner, 1..3)).prop_map(|(f, args)| {
                let sym = SkolemSymbol::new(90, 1, Sym::new(&format!("P{f}_{}", args.len())));
                Term::functional(sym, &args)
            })
        })
    }

    proptest! {
        #[test]
        fn cyclic_implies_one_cyclic(t in arb_term()) {
            prop_assert_eq!(t.is_cyclic(), t.is_k_cyclic(1));
        }

        #[test]
        fn k_cyclicity_is_antitone(t in arb_term(), k in 2u32..5) {
            if t.is_k_cyclic(k) {
                prop_assert!(t.is_k_cyclic(k - 1));
            }
        }

        #[test]
        fn subterms_are_closed(t in arb_term()) {
            let subs = t.subterms();
            for s in &subs {
                for a in s.args() {
                    prop_assert!(subs.contains(a));
                }
            }
        }

        #[test]
        fn depth_matches_definition(t in arb_term()) {
            fn depth(t: Term) -> u32 {
                if t.is_functional() { 1 + t.args().iter().map(|a| depth(*a)).max().unwrap_or(1) } else { 1 }
            }
            prop_assert_eq!(t.depth(), depth(t));
        }
    }
}

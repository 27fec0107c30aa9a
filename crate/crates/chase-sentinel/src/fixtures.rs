//! Rule sets shared by the unit tests.

use crate::model::{RuleSet, SkolemSymbol, Term};
use crate::ruleio::parse;

/// Rules 1 to 4 are the motorbike rules.
pub const BIKE: &str = "Engine(X) -> IsIn(X,V), Bike(V) | Spare(X).
Bike(X) -> Has(X,W), Engine(W).
IsIn(X,Y) -> Has(Y,X).
Has(X,Y) -> IsIn(Y,X).";

/// Rule 1 is not star-unblockable on its cyclic trigger but is uc-unblockable.
pub const UC_STAR: &str = "R(X,Y) -> R(Y,U).
R(X,Y) -> S(Y,V).
R(X,Y) -> T(Y,W).
S(X,Y), T(X,Y) -> R(X,Y).";

/// Injectivity matters for rule 2.
pub const INJECTIVITY: &str = "P(X,Y) -> R(X,U), S(Y,U).
R(X,Y) -> T(Y,V).
R(X,Y), S(X,Y) -> T(Y,X).
T(X,Y) -> P(Y,Y).";

/// Rule 5 with `[X/c, Y/f_u(d)]` admits a mapping that breaks the subterm condition.
pub const REV3: &str = "A(X) -> P(X,U).
B(X) -> Q(X,V).
C(X) -> S(X,W).
Q(X,Y) -> T(X).
P(X,Y) -> T(Y) | R(X,Y,Z).";

/// Two-colour rule set that the k-cyclicity check handles and the prefix search does not.
pub const COLOURS: &str = "Cl1(X), Cl2(Y) -> Red(X,U), Red(Y,U).
Cl1(X), Red(X,Z) -> Gr(X,V), Blu(Z,V).
Red(Y,Z), Blu(Z,W), Gr(X,W) -> Gr(Y,Y).
Red(Y,Z), Blu(Z,W), Gr(X,W) -> Blu(Z,Y).
Red(Y,Z), Blu(Z,W), Gr(X,W) -> Cl1(Y).
Cl2(Y), Gr(Y,W) -> Cl2(W).";

pub fn rules(text: &str) -> RuleSet {
    parse(text).unwrap().rule_set().unwrap()
}

/// The skolem symbol of existential `var` in rule `id`.
pub fn sk(rules: &RuleSet, id: u32, var: &str) -> SkolemSymbol {
    rules
        .rule(id)
        .heads()
        .iter()
        .flat_map(|h| h.skolems().iter().copied())
        .find(|f| f.var().as_str() == var)
        .unwrap_or_else(|| panic!("rule {id} has no existential {var}"))
}

pub fn f(sym: SkolemSymbol, args: &[Term]) -> Term {
    Term::functional(sym, args)
}

pub fn c(name: &str) -> Term {
    Term::constant(name)
}

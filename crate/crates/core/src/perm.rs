//! Permissions, static state knowledge, and the reference-type lattice.
//!
//! A [`RefType`] fuses ownership with typestate: `Bond@Sold` is an owned
//! reference known to be in `Sold`, `Bond@Unowned` carries no ownership and no
//! state knowledge. The ordering is the product of the ownership chain
//! `Owned ⊑ Shared ⊑ Unowned` with state knowledge ordered by set inclusion
//! (`Unknown` on top). [`satisfies`] is that order and [`join`] its least upper
//! bound; the checker uses `join` to merge facts at the end of a branch.
//!
//! Branch merging has no counterpart in the surface language's documentation,
//! so the join here is a conservative reconstruction: whenever an owning
//! reference to an asset merges with a non-owning one the result loses
//! ownership and the merge is reported.

use std::collections::BTreeSet;
use std::fmt;

use crate::diag::{Code, Diagnostic, Span};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Ownership {
    Owned,
    Shared,
    Unowned,
}

impl Ownership {
    pub const ALL: [Ownership; 3] = [Ownership::Owned, Ownership::Shared, Ownership::Unowned];

    fn rank(self) -> u8 {
        match self {
            Ownership::Owned => 0,
            Ownership::Shared => 1,
            Ownership::Unowned => 2,
        }
    }

    /// `self` may stand where `required` is expected.
    pub fn satisfies(self, required: Ownership) -> bool {
        self.rank() <= required.rank()
    }

    pub fn join(self, other: Ownership) -> Ownership {
        if self.rank() >= other.rank() {
            self
        } else {
            other
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Ownership::Owned => "Owned",
            Ownership::Shared => "Shared",
            Ownership::Unowned => "Unowned",
        }
    }
}

impl fmt::Display for Ownership {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What is statically known about the dynamic state of the referenced object.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StateKnowledge {
    Unknown,
    /// Nonempty set of possible states.
    Known(BTreeSet<String>),
}

impl StateKnowledge {
    pub fn single(state: impl Into<String>) -> Self {
        StateKnowledge::Known(BTreeSet::from([state.into()]))
    }

    /// Builds `Known` from a list; an empty list yields `Unknown`.
    pub fn from_states<I, S>(states: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let set: BTreeSet<String> = states.into_iter().map(Into::into).collect();
        if set.is_empty() {
            StateKnowledge::Unknown
        } else {
            StateKnowledge::Known(set)
        }
    }

    pub fn is_known(&self) -> bool {
        matches!(self, StateKnowledge::Known(_))
    }

    pub fn known(&self) -> Option<&BTreeSet<String>> {
        match self {
            StateKnowledge::Known(s) => Some(s),
            StateKnowledge::Unknown => None,
        }
    }

    /// The single known state, if knowledge is exactly one state.
    pub fn singleton(&self) -> Option<&str> {
        match self {
            StateKnowledge::Known(s) if s.len() == 1 => s.iter().next().map(String::as_str),
            _ => None,
        }
    }

    pub fn satisfies(&self, required: &StateKnowledge) -> bool {
        match (self, required) {
            (_, StateKnowledge::Unknown) => true,
            (StateKnowledge::Unknown, StateKnowledge::Known(_)) => false,
            (StateKnowledge::Known(a), StateKnowledge::Known(b)) => a.is_subset(b),
        }
    }

    pub fn join(&self, other: &StateKnowledge) -> StateKnowledge {
        match (self, other) {
            (StateKnowledge::Known(a), StateKnowledge::Known(b)) => {
                StateKnowledge::Known(a.union(b).cloned().collect())
            }
            _ => StateKnowledge::Unknown,
        }
    }
}

impl fmt::Display for StateKnowledge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StateKnowledge::Unknown => f.write_str("?"),
            StateKnowledge::Known(s) => {
                let v: Vec<&str> = s.iter().map(String::as_str).collect();
                f.write_str(&v.join(" | "))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RefType {
    pub contract: String,
    pub ownership: Ownership,
    pub states: StateKnowledge,
}

impl RefType {
    pub fn new(contract: impl Into<String>, ownership: Ownership, states: StateKnowledge) -> Self {
        RefType { contract: contract.into(), ownership, states }
    }

    pub fn owned(contract: impl Into<String>) -> Self {
        RefType::new(contract, Ownership::Owned, StateKnowledge::Unknown)
    }

    pub fn unowned(contract: impl Into<String>) -> Self {
        RefType::new(contract, Ownership::Unowned, StateKnowledge::Unknown)
    }

    pub fn shared(contract: impl Into<String>) -> Self {
        RefType::new(contract, Ownership::Shared, StateKnowledge::Unknown)
    }

    pub fn in_states<I, S>(contract: impl Into<String>, states: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        RefType::new(contract, Ownership::Owned, StateKnowledge::from_states(states))
    }

    pub fn with_ownership(&self, ownership: Ownership) -> Self {
        RefType { ownership, ..self.clone() }
    }

    pub fn with_states(&self, states: StateKnowledge) -> Self {
        RefType { states, ..self.clone() }
    }

    /// The type a reference has after ownership has been moved out of it.
    pub fn consumed(&self) -> Self {
        RefType::unowned(self.contract.clone())
    }
}

impl fmt::Display for RefType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.ownership, &self.states) {
            (Ownership::Owned, StateKnowledge::Known(_)) => write!(f, "{}@{}", self.contract, self.states),
            (o, StateKnowledge::Unknown) => write!(f, "{}@{}", self.contract, o),
            (o, StateKnowledge::Known(_)) => write!(f, "{}@{} (in {})", self.contract, o, self.states),
        }
    }
}

/// True iff the reference carries ownership of its object.
pub fn is_owning(t: &RefType) -> bool {
    t.ownership == Ownership::Owned
}

/// `actual` may be used where `required` is expected. Both must name the same
/// contract; a contract mismatch is never satisfied.
pub fn satisfies(actual: &RefType, required: &RefType) -> bool {
    actual.contract == required.contract
        && actual.ownership.satisfies(required.ownership)
        && actual.states.satisfies(&required.states)
}

/// Least upper bound of two types of the same contract.
///
/// `asset` says whether the contract is an asset; an owning reference merged
/// with a non-owning one then yields [`Code::AssetLossBranch`]. Mismatched
/// contracts are a caller bug and yield [`Code::Internal`] with `a` returned
/// unchanged.
pub fn join(a: &RefType, b: &RefType, asset: bool, span: Span) -> (RefType, Vec<Diagnostic>) {
    if a.contract != b.contract {
        let d = Diagnostic::new(
            Code::Internal,
            span,
            format!("internal: cannot join `{}` with `{}`", a, b),
        );
        return (a.clone(), vec![d]);
    }
    let ownership = a.ownership.join(b.ownership);
    let states = a.states.join(&b.states);
    let mut diags = Vec::new();
    if asset && ownership != Ownership::Owned && (is_owning(a) || is_owning(b)) {
        diags.push(
            Diagnostic::new(
                Code::AssetLossBranch,
                span,
                format!(
                    "asset `{}` is owned on one branch but {} on the other; ownership would be lost where the branches meet",
                    a.contract,
                    if is_owning(a) { b.ownership } else { a.ownership }
                ),
            )
            .with_note("release or store the asset on every branch before they merge"),
        );
    }
    (RefType { contract: a.contract.clone(), ownership, states }, diags)
}

/// Type of an actual argument (or receiver) after a call whose formal is
/// declared `pre >> post`.
///
/// A formal whose pre is not owning can neither take nor hand back ownership,
/// so the actual keeps its own. An owning pre with an owning post leaves the
/// caller owning; with a non-owning post ownership is consumed. States come
/// from `post` when it names them; otherwise the callee may have transitioned
/// the object, unless it only held it Unowned.
pub fn rewrite(actual: &RefType, pre: &RefType, post: &RefType) -> RefType {
    let ownership = if pre.ownership != Ownership::Owned || post.ownership == Ownership::Owned {
        actual.ownership
    } else {
        post.ownership
    };
    let states = match (&post.states, pre.ownership) {
        (StateKnowledge::Known(_), _) => post.states.clone(),
        (StateKnowledge::Unknown, Ownership::Unowned) => actual.states.clone(),
        (StateKnowledge::Unknown, _) => StateKnowledge::Unknown,
    };
    RefType { contract: actual.contract.clone(), ownership, states }
}

/// Narrowing by a dynamic test `x in state`. Returns the subject's type in
/// the then-branch and in the else-branch; `None` marks a branch that cannot
/// execute.
pub fn narrow(t: &RefType, state: &str) -> (Option<RefType>, Option<RefType>) {
    let then_t = match &t.states {
        StateKnowledge::Known(a) if !a.contains(state) => None,
        _ => Some(t.with_states(StateKnowledge::single(state))),
    };
    let else_t = match &t.states {
        StateKnowledge::Unknown => Some(t.clone()),
        StateKnowledge::Known(a) => {
            let rest: BTreeSet<String> = a.iter().filter(|s| s.as_str() != state).cloned().collect();
            if rest.is_empty() {
                None
            } else {
                Some(t.with_states(StateKnowledge::Known(rest)))
            }
        }
    };
    (then_t, else_t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rewrite_follows_signature() {
        let owned = RefType::owned("Coin");
        let unowned = RefType::unowned("Coin");
        // `Coin @ Owned >> Unowned coin`
        assert_eq!(rewrite(&owned, &owned, &unowned), unowned);
        // a non-owning formal leaves an owned actual owned
        assert_eq!(rewrite(&owned, &unowned, &unowned), owned);
        // `TVM @ Empty >> Full this`
        let empty = t(Ownership::Owned, &["Empty"]);
        let full = t(Ownership::Owned, &["Full"]);
        assert_eq!(rewrite(&empty, &empty, &full), full);
        // shared formals forget states but keep the caller's ownership
        let shared = RefType::shared("TVM");
        assert_eq!(rewrite(&full, &shared, &shared), RefType::owned("TVM"));
        // unowned formals cannot transition, so states survive
        let u = RefType::unowned("TVM");
        assert_eq!(rewrite(&full, &u, &u), full);
    }

    #[test]
    fn narrowing_by_state_test() {
        let both = t(Ownership::Owned, &["Full", "Empty"]);
        let (th, el) = narrow(&both, "Full");
        assert_eq!(th, Some(t(Ownership::Owned, &["Full"])));
        assert_eq!(el, Some(t(Ownership::Owned, &["Empty"])));
        let (_, el) = narrow(&t(Ownership::Owned, &["Full"]), "Full");
        assert_eq!(el, None);
        let sh = RefType::shared("TVM");
        let (th, el) = narrow(&sh, "Full");
        assert_eq!(th.unwrap().states, StateKnowledge::single("Full"));
        assert_eq!(el, Some(sh));
    }

    fn t(o: Ownership, s: &[&str]) -> RefType {
        RefType::new("TVM", o, StateKnowledge::from_states(s.iter().copied()))
    }

    #[test]
    fn join_of_disjoint_known_states_unions_them() {
        let (j, d) = join(&t(Ownership::Owned, &["Full"]), &t(Ownership::Owned, &["Empty"]), true, Span::default());
        assert_eq!(j, t(Ownership::Owned, &["Full", "Empty"]));
        assert!(d.is_empty());
    }

    #[test]
    fn owned_unowned_join_reports_only_for_assets() {
        let owned = RefType::owned("Money");
        let unowned = RefType::unowned("Money");
        let (j, d) = join(&owned, &unowned, true, Span::default());
        assert_eq!(j, unowned);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].code, Code::AssetLossBranch);

        let (j, d) = join(&owned, &unowned, false, Span::default());
        assert_eq!(j, unowned);
        assert!(d.is_empty());
    }

    #[test]
    fn join_with_unknown_forgets_states() {
        let (j, _) = join(&t(Ownership::Owned, &["Full"]), &t(Ownership::Owned, &[]), false, Span::default());
        assert_eq!(j.states, StateKnowledge::Unknown);
    }

    #[test]
    fn contract_mismatch_is_internal() {
        let (_, d) = join(&RefType::owned("A"), &RefType::owned("B"), false, Span::default());
        assert_eq!(d[0].code, Code::Internal);
    }

    #[test]
    fn narrowed_owned_satisfies_plain_owned() {
        assert!(satisfies(&t(Ownership::Owned, &["Full"]), &t(Ownership::Owned, &[])));
        assert!(!satisfies(&t(Ownership::Shared, &[]), &t(Ownership::Owned, &[])));
        assert!(!satisfies(&t(Ownership::Owned, &[]), &t(Ownership::Owned, &["Full"])));
        assert!(satisfies(&t(Ownership::Owned, &[]), &t(Ownership::Shared, &[])));
        assert!(satisfies(&t(Ownership::Shared, &[]), &t(Ownership::Unowned, &[])));
        assert!(!satisfies(&t(Ownership::Unowned, &[]), &t(Ownership::Shared, &[])));
    }

    #[test]
    fn is_owning_follows_ownership() {
        assert!(is_owning(&RefType::owned("C")));
        assert!(is_owning(&t(Ownership::Owned, &["Full"])));
        assert!(!is_owning(&RefType::unowned("C")));
        assert!(!is_owning(&RefType::shared("C")));
    }

    #[test]
    fn display_uses_surface_notation() {
        assert_eq!(t(Ownership::Owned, &["Full", "Empty"]).to_string(), "TVM@Empty | Full");
        assert_eq!(RefType::shared("A").to_string(), "A@Shared");
    }
}

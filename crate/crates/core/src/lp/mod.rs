//! Linear programs over LCST events: the base relaxation, Sherali-Adams
//! lifting, an exact simplex, and queryable lifted points.

mod lift;
mod lifted;
mod simplex;

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use num_traits::{One, Zero};
use thiserror::Error;

use crate::lcst::{Label, LcstInstance, NodeId, NormalizedLcst};
use crate::rational::{format_rational, Rational};

pub use lift::{
    check_sa_membership, first_sa_violation, implied_pairs, lift, sa_property_violations, solve_lifted,
    LiftBudget, LiftedLp, LiftedPoint,
};
pub use lifted::{integral_events, DistributionBacked, LiftedSolution, SaLpSolution};
pub use simplex::{solve_lp, verify_certificate, LpSolution};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LpError {
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("lift budget exceeded: {what} would reach {needed}, limit {limit}")]
    Budget { what: &'static str, needed: usize, limit: usize },
    #[error("event set of size {size} exceeds the {rounds} remaining rounds")]
    TooManyEvents { size: usize, rounds: usize },
    #[error("cannot condition on {0}: probability zero")]
    ZeroProbability(Event),
    #[error("no rounds left for conditioning")]
    RoundsExhausted,
    #[error("support weights must be positive and sum to 1 (sum is {0})")]
    WeightSum(String),
    #[error("support point {index} violates the base relaxation at row {row}")]
    NotInPolytope { index: usize, row: usize },
    #[error("optimality certificate rejected: {0}")]
    Certificate(String),
}

/// `sum coeffs . x <= rhs`, coefficients sorted by variable.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Row {
    pub coeffs: Vec<(usize, Rational)>,
    pub rhs: Rational,
}

impl Row {
    /// Merges duplicate variables and drops zero coefficients.
    pub fn new(coeffs: impl IntoIterator<Item = (usize, Rational)>, rhs: Rational) -> Row {
        let mut map: BTreeMap<usize, Rational> = BTreeMap::new();
        for (j, a) in coeffs {
            *map.entry(j).or_insert_with(Rational::zero) += a;
        }
        Row { coeffs: map.into_iter().filter(|(_, a)| !a.is_zero()).collect(), rhs }
    }

    pub fn lhs(&self, x: &[Rational]) -> Rational {
        self.coeffs.iter().map(|(j, a)| a * &x[*j]).sum()
    }

    pub fn holds(&self, x: &[Rational]) -> bool {
        self.lhs(x) <= self.rhs
    }
}

/// Minimize `objective . x` subject to `rows` and `x >= 0`. Bounds
/// `0 <= x <= 1` are ordinary rows.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LinearProgram {
    pub names: Vec<String>,
    pub rows: Vec<Row>,
    pub objective: Vec<(usize, Rational)>,
}

impl LinearProgram {
    pub fn new(names: Vec<String>) -> Self {
        LinearProgram { names, rows: Vec::new(), objective: Vec::new() }
    }

    pub fn num_vars(&self) -> usize {
        self.names.len()
    }

    pub fn push(&mut self, row: Row) {
        debug_assert!(row.coeffs.iter().all(|(j, _)| *j < self.names.len()));
        self.rows.push(row);
    }

    /// Adds `lhs = rhs` as two rows.
    pub fn push_eq(&mut self, coeffs: Vec<(usize, Rational)>, rhs: Rational) {
        let neg: Vec<_> = coeffs.iter().map(|(j, a)| (*j, -a.clone())).collect();
        self.push(Row::new(coeffs, rhs.clone()));
        self.push(Row::new(neg, -rhs));
    }

    pub fn push_box(&mut self, j: usize) {
        self.push(Row::new([(j, Rational::one())], Rational::one()));
        self.push(Row::new([(j, -Rational::one())], Rational::zero()));
    }

    pub fn objective_value(&self, x: &[Rational]) -> Rational {
        self.objective.iter().map(|(j, c)| c * &x[*j]).sum()
    }

    pub fn first_violated(&self, x: &[Rational]) -> Option<usize> {
        self.rows.iter().position(|r| !r.holds(x))
    }

    pub fn is_feasible(&self, x: &[Rational]) -> bool {
        self.first_violated(x).is_none()
    }

    /// Canonical text: variables, objective, then rows sorted by text.
    pub fn to_text(&self) -> String {
        let term = |(j, a): &(usize, Rational)| format!("{}*{}", format_rational(a), self.names[*j]);
        let mut out = format!("lp {} {}\n", self.names.len(), self.rows.len());
        for (j, name) in self.names.iter().enumerate() {
            out.push_str(&format!("var {j} {name}\n"));
        }
        let obj: Vec<String> = self.objective.iter().map(term).collect();
        out.push_str(&format!("min {}\n", obj.join(" + ")));
        let mut rows: Vec<String> = self
            .rows
            .iter()
            .map(|r| {
                let lhs: Vec<String> = r.coeffs.iter().map(term).collect();
                format!("row {} <= {}\n", lhs.join(" + "), format_rational(&r.rhs))
            })
            .collect();
        rows.sort();
        out.extend(rows);
        out
    }
}

/// `u` (node selected) or `(u, l)` (label `l` served below `u`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Event {
    Node(NodeId),
    Label(NodeId, Label),
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Event::Node(u) => write!(f, "x[{u}]"),
            Event::Label(u, l) => write!(f, "x[{u},{l}]"),
        }
    }
}

/// Indexed events. For an LCST instance only `(u, l)` pairs with `l`
/// servable below `u`, demanded by `u`, or global at the root are kept;
/// every other label event is zero at every feasible point.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EventSpace {
    events: Vec<Event>,
    index: HashMap<Event, usize>,
}

impl EventSpace {
    pub fn new(events: impl IntoIterator<Item = Event>) -> Self {
        let mut events: Vec<Event> = events.into_iter().collect();
        events.sort_unstable();
        events.dedup();
        let index = events.iter().enumerate().map(|(i, e)| (*e, i)).collect();
        EventSpace { events, index }
    }

    pub fn for_instance(inst: &LcstInstance) -> Self {
        let servable = inst.servable();
        let mut events = Vec::new();
        for u in 0..inst.len() {
            events.push(Event::Node(u));
            let mut labels: Vec<Label> = servable[u].clone();
            labels.extend(inst.dem(u).iter().copied());
            if u == inst.root() {
                labels.extend(0..inst.k());
            }
            events.extend(labels.into_iter().map(|l| Event::Label(u, l)));
        }
        EventSpace::new(events)
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn event(&self, i: usize) -> Event {
        self.events[i]
    }

    pub fn index_of(&self, e: Event) -> Option<usize> {
        self.index.get(&e).copied()
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }
}

/// The base relaxation with its event indexing.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BaseLp {
    pub lp: LinearProgram,
    pub space: EventSpace,
}

impl BaseLp {
    /// Value of event `e` in the base point `x`; events outside the space
    /// are zero.
    pub fn value(&self, x: &[Rational], e: Event) -> Rational {
        self.space.index_of(e).map(|i| x[i].clone()).unwrap_or_else(Rational::zero)
    }
}

/// The base LCST relaxation:
/// child below parent, label below node, demanded labels equal to their
/// node, a leaf serves its label, label mass splits over children, leaves
/// serve no other label, globals served at the root; boxes on every event.
/// Objective: node costs.
pub fn build_base_lp(inst: &NormalizedLcst) -> BaseLp {
    let space = EventSpace::for_instance(inst);
    let names = space.events().iter().map(Event::to_string).collect();
    let mut lp = LinearProgram::new(names);
    let one = Rational::one;
    let id = |e: Event| space.index_of(e);
    let node = |u: NodeId| id(Event::Node(u)).expect("node events exist");
    let labels_at = |u: NodeId| {
        space.events().iter().filter_map(move |e| match *e {
            Event::Label(w, l) if w == u => Some(l),
            _ => None,
        })
    };

    for u in 0..inst.len() {
        for &v in inst.children(u) {
            lp.push(Row::new([(node(v), one()), (node(u), -one())], Rational::zero()));
        }
        for l in labels_at(u) {
            let ul = id(Event::Label(u, l)).expect("listed");
            lp.push(Row::new([(ul, one()), (node(u), -one())], Rational::zero()));
            if inst.dem(u).contains(&l) {
                lp.push_eq(vec![(ul, one()), (node(u), -one())], Rational::zero());
            }
            if inst.is_leaf(u) {
                if inst.a(u) == Some(l) {
                    lp.push_eq(vec![(ul, one()), (node(u), -one())], Rational::zero());
                } else {
                    lp.push(Row::new([(ul, one())], Rational::zero()));
                }
            } else {
                let mut coeffs = vec![(ul, one())];
                for &v in inst.children(u) {
                    if let Some(vl) = id(Event::Label(v, l)) {
                        coeffs.push((vl, -one()));
                    }
                }
                lp.push_eq(coeffs, Rational::zero());
            }
        }
    }
    for l in 0..inst.k() {
        let rl = id(Event::Label(inst.root(), l)).expect("globals exist at the root");
        lp.push_eq(vec![(rl, one())], one());
    }
    for j in 0..space.len() {
        lp.push_box(j);
    }
    lp.objective = (0..inst.len())
        .filter(|&u| !inst.cost(u).is_zero())
        .map(|u| (node(u), inst.cost(u).clone()))
        .collect();
    BaseLp { lp, space }
}

/// Whether the label mass at `u` equals the sum over its leaf descendants.
pub fn check_sum_leaf_identity(inst: &LcstInstance, base: &BaseLp, x: &[Rational], u: NodeId, l: Label) -> bool {
    let below: Rational = inst.leaf_descendants(u).into_iter().map(|v| base.value(x, Event::Label(v, l))).sum();
    below == base.value(x, Event::Label(u, l))
}

/// Rounds of lifting that suffice for rounding: `s (h+2) (h+1) + 1`.
pub fn required_rounds(s: usize, h: usize) -> usize {
    s * (h + 2) * (h + 1) + 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lcst::{normalize, LcstInstance};
    use crate::rational::int;
    use std::collections::BTreeSet;

    fn chain() -> NormalizedLcst {
        // 0 -> 1 -> 2 (leaf serving global 0)
        let inst = LcstInstance::new(
            vec![None, Some(0), Some(1)],
            vec![int(1), int(2), int(3)],
            vec![BTreeSet::new(); 3],
            vec![BTreeSet::new(), BTreeSet::new(), BTreeSet::from([0])],
            1,
        )
        .unwrap();
        NormalizedLcst::from_normal(inst).unwrap()
    }

    #[test]
    fn forced_chain() {
        let base = build_base_lp(&chain());
        let s = solve_lp(&base.lp).unwrap();
        assert_eq!(s.value, int(6));
        assert!(s.x.iter().all(|v| *v == int(1)));
    }

    #[test]
    fn root_only() {
        let inst = LcstInstance::new(vec![None], vec![int(0)], vec![BTreeSet::new()], vec![BTreeSet::new()], 0).unwrap();
        let norm = normalize(&inst).norm;
        let base = build_base_lp(&norm);
        assert_eq!(base.space.events(), &[Event::Node(0)]);
        assert_eq!(base.lp.rows.len(), 2);
    }

    #[test]
    fn counts_and_text() {
        assert_eq!(required_rounds(1, 1), 7);
        assert_eq!(required_rounds(2, 2), 25);
        assert_eq!(required_rounds(0, 5), 1);
        let base = build_base_lp(&chain());
        let t = base.lp.to_text();
        assert!(t.starts_with("lp 6 "));
        assert_eq!(t, build_base_lp(&chain()).lp.to_text());
    }

    #[test]
    fn leaf_identity() {
        let n = chain();
        let base = build_base_lp(&n);
        let x = solve_lp(&base.lp).unwrap().x;
        assert!(check_sum_leaf_identity(&n, &base, &x, 0, 0));
        assert!(check_sum_leaf_identity(&n, &base, &x, 2, 0));
        let mut bad = x.clone();
        bad[base.space.index_of(Event::Label(1, 0)).unwrap()] = int(0);
        assert!(!check_sum_leaf_identity(&n, &base, &bad, 1, 0));
    }
}

//! The queryable, conditionable lifted-solution capability.

use std::collections::BTreeSet;
use std::sync::Arc;

use num_traits::{One, Signed, Zero};

use super::{BaseLp, Event, EventSpace, LiftedPoint, LpError};
use crate::lcst::{LcstSolution, NormalizedLcst};
use crate::rational::{format_rational, Rational};

/// A point of some lifted relaxation, seen as pseudo-probabilities of
/// event sets.
pub trait LiftedSolution: Clone {
    /// Remaining rounds; `None` when unlimited.
    fn rounds(&self) -> Option<usize>;

    /// Pseudo-probability that every event of `s` holds.
    fn query(&self, s: &[Event]) -> Result<Rational, LpError>;

    /// The point conditioned on `e`, with one round fewer.
    fn condition(&self, e: Event) -> Result<Self, LpError>;

    fn query_one(&self, e: Event) -> Result<Rational, LpError> {
        self.query(&[e])
    }

    /// Explicit values for all subsets of `space` up to `r` events.
    fn materialize(&self, space: &EventSpace, r: usize) -> Result<LiftedPoint, LpError> {
        let mut err = None;
        let point = LiftedPoint::from_fn(space.len(), r, |s| {
            let events: Vec<Event> = s.iter().map(|&i| space.event(i)).collect();
            self.query(&events).unwrap_or_else(|e| {
                err.get_or_insert(e);
                Rational::zero()
            })
        });
        match err {
            Some(e) => Err(e),
            None => Ok(point),
        }
    }
}

/// A solved lifted program. Conditioning is kept symbolic:
/// `x'_S = x_{S + C} / x_C` for the set `C` conditioned on so far.
#[derive(Clone, Debug)]
pub struct SaLpSolution {
    space: Arc<EventSpace>,
    point: Arc<LiftedPoint>,
    cond: Vec<usize>,
    mass: Rational,
    rounds: usize,
}

impl SaLpSolution {
    pub fn new(space: Arc<EventSpace>, point: LiftedPoint) -> Self {
        let rounds = point.rounds();
        SaLpSolution { space, point: Arc::new(point), cond: vec![], mass: Rational::one(), rounds }
    }

    pub fn point(&self) -> &LiftedPoint {
        &self.point
    }
}

impl LiftedSolution for SaLpSolution {
    fn rounds(&self) -> Option<usize> {
        Some(self.rounds)
    }

    fn query(&self, s: &[Event]) -> Result<Rational, LpError> {
        let distinct: BTreeSet<Event> = s.iter().copied().collect();
        if distinct.len() > self.rounds {
            return Err(LpError::TooManyEvents { size: distinct.len(), rounds: self.rounds });
        }
        let mut ids = self.cond.clone();
        for e in distinct {
            match self.space.index_of(e) {
                Some(i) => ids.push(i),
                None => return Ok(Rational::zero()),
            }
        }
        let v = self.point.get(&ids).expect("within rounds");
        Ok(v / &self.mass)
    }

    fn condition(&self, e: Event) -> Result<Self, LpError> {
        if self.rounds < 2 {
            return Err(LpError::RoundsExhausted);
        }
        let i = self.space.index_of(e).ok_or(LpError::ZeroProbability(e))?;
        let mut cond = self.cond.clone();
        cond.push(i);
        cond.sort_unstable();
        cond.dedup();
        let mass = self.point.get(&cond).expect("within rounds").clone();
        if !mass.is_positive() {
            return Err(LpError::ZeroProbability(e));
        }
        Ok(SaLpSolution { space: self.space.clone(), point: self.point.clone(), cond, mass, rounds: self.rounds - 1 })
    }
}

/// A finite distribution over integral points of the base relaxation.
/// Conditioning filters the support and renormalizes.
#[derive(Clone, Debug)]
pub struct DistributionBacked {
    support: Arc<Vec<(Vec<Event>, Rational)>>,
    active: Arc<Vec<usize>>,
    mass: Rational,
}

/// Events that hold for an integral selection: its nodes, and `(u, l)` for
/// every selected `u` above a selected leaf serving `l`.
pub fn integral_events(inst: &NormalizedLcst, sol: &LcstSolution) -> Vec<Event> {
    let mut out = BTreeSet::new();
    for &v in &sol.nodes {
        out.insert(Event::Node(v));
        if inst.is_leaf(v) {
            if let Some(l) = inst.a(v) {
                let mut cur = Some(v);
                while let Some(u) = cur {
                    out.insert(Event::Label(u, l));
                    cur = inst.parent(u);
                }
            }
        }
    }
    out.into_iter().collect()
}

impl DistributionBacked {
    /// Support points as sorted event lists; each must satisfy the base
    /// relaxation as a 0/1 vector.
    pub fn new(base: &BaseLp, support: Vec<(Vec<Event>, Rational)>) -> Result<Self, LpError> {
        let total: Rational = support.iter().map(|(_, w)| w.clone()).sum();
        if !total.is_one() || support.iter().any(|(_, w)| !w.is_positive()) {
            return Err(LpError::WeightSum(format_rational(&total)));
        }
        let mut points = Vec::with_capacity(support.len());
        for (index, (events, w)) in support.into_iter().enumerate() {
            let mut x = vec![Rational::zero(); base.space.len()];
            for &e in &events {
                match base.space.index_of(e) {
                    Some(i) => x[i] = Rational::one(),
                    None => return Err(LpError::NotInPolytope { index, row: usize::MAX }),
                }
            }
            if let Some(row) = base.lp.first_violated(&x) {
                return Err(LpError::NotInPolytope { index, row });
            }
            let mut events = events;
            events.sort_unstable();
            events.dedup();
            points.push((events, w));
        }
        let active = (0..points.len()).collect();
        Ok(DistributionBacked { support: Arc::new(points), active: Arc::new(active), mass: Rational::one() })
    }

    /// Support from LCST solutions; surplus serving leaves are dropped first.
    pub fn from_solutions(
        inst: &NormalizedLcst,
        base: &BaseLp,
        support: Vec<(LcstSolution, Rational)>,
    ) -> Result<Self, LpError> {
        let points = support
            .into_iter()
            .map(|(sol, w)| (integral_events(inst, &inst.canonicalize_service(&sol)), w))
            .collect();
        DistributionBacked::new(base, points)
    }

    /// Active support points with their conditional weights.
    pub fn atoms(&self) -> Vec<(&[Event], Rational)> {
        self.active.iter().map(|&i| (self.support[i].0.as_slice(), &self.support[i].1 / &self.mass)).collect()
    }

    /// The distribution conditioned on `e` failing.
    pub fn condition_not(&self, e: Event) -> Result<Self, LpError> {
        let active: Vec<usize> =
            self.active.iter().copied().filter(|&i| !Self::holds(&self.support[i].0, &[e])).collect();
        let mass: Rational = active.iter().map(|&i| self.support[i].1.clone()).sum();
        if !mass.is_positive() {
            return Err(LpError::ZeroProbability(e));
        }
        Ok(DistributionBacked { support: self.support.clone(), active: Arc::new(active), mass })
    }

    pub fn support_len(&self) -> usize {
        self.active.len()
    }

    fn holds(point: &[Event], s: &[Event]) -> bool {
        s.iter().all(|e| point.binary_search(e).is_ok())
    }
}

impl LiftedSolution for DistributionBacked {
    fn rounds(&self) -> Option<usize> {
        None
    }

    fn query(&self, s: &[Event]) -> Result<Rational, LpError> {
        let hit: Rational = self
            .active
            .iter()
            .filter(|&&i| Self::holds(&self.support[i].0, s))
            .map(|&i| self.support[i].1.clone())
            .sum();
        Ok(hit / &self.mass)
    }

    fn condition(&self, e: Event) -> Result<Self, LpError> {
        let active: Vec<usize> =
            self.active.iter().copied().filter(|&i| Self::holds(&self.support[i].0, &[e])).collect();
        let mass: Rational = active.iter().map(|&i| self.support[i].1.clone()).sum();
        if !mass.is_positive() {
            return Err(LpError::ZeroProbability(e));
        }
        Ok(DistributionBacked { support: self.support.clone(), active: Arc::new(active), mass })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lcst::LcstInstance;
    use crate::lp::{build_base_lp, check_sa_membership};
    use crate::rational::{int, ratio};

    /// Root with two leaves, each serving global 0.
    fn fork() -> NormalizedLcst {
        let inst = LcstInstance::new(
            vec![None, Some(0), Some(0)],
            vec![int(0), int(1), int(2)],
            vec![BTreeSet::new(); 3],
            vec![BTreeSet::new(), BTreeSet::from([0]), BTreeSet::from([0])],
            1,
        )
        .unwrap();
        NormalizedLcst::from_normal(inst).unwrap()
    }

    #[test]
    fn two_atoms() {
        let n = fork();
        let base = build_base_lp(&n);
        let d = DistributionBacked::from_solutions(
            &n,
            &base,
            vec![(LcstSolution::new(&n, [0, 1]), ratio(1, 2)), (LcstSolution::new(&n, [0, 2]), ratio(1, 2))],
        )
        .unwrap();
        assert_eq!(d.query(&[Event::Node(0)]).unwrap(), int(1));
        assert_eq!(d.query(&[Event::Node(1)]).unwrap(), ratio(1, 2));
        assert_eq!(d.query(&[Event::Node(1), Event::Node(2)]).unwrap(), int(0));
        let c = d.condition(Event::Node(1)).unwrap();
        assert_eq!(c.query(&[Event::Node(1)]).unwrap(), int(1));
        assert_eq!(c.atoms().len(), 1);
        assert!(matches!(c.condition(Event::Node(2)), Err(LpError::ZeroProbability(_))));
        let p = d.materialize(&base.space, 3).unwrap();
        assert!(check_sa_membership(&p, &base.lp, 3));
    }

    #[test]
    fn rejects_bad_support() {
        let n = fork();
        let base = build_base_lp(&n);
        let bad = DistributionBacked::from_solutions(&n, &base, vec![(LcstSolution::new(&n, [0]), int(1))]);
        assert!(matches!(bad, Err(LpError::NotInPolytope { .. })));
        let heavy = DistributionBacked::from_solutions(&n, &base, vec![(LcstSolution::new(&n, [0, 1]), int(2))]);
        assert!(matches!(heavy, Err(LpError::WeightSum(_))));
    }

    #[test]
    fn sa_backed_conditioning_is_symbolic() {
        let n = fork();
        let base = build_base_lp(&n);
        let d = DistributionBacked::from_solutions(
            &n,
            &base,
            vec![(LcstSolution::new(&n, [0, 1]), ratio(1, 3)), (LcstSolution::new(&n, [0, 2]), ratio(2, 3))],
        )
        .unwrap();
        let space = Arc::new(base.space.clone());
        let sa = SaLpSolution::new(space.clone(), d.materialize(&space, 3).unwrap());
        let e = Event::Node(2);
        let c = sa.condition(e).unwrap();
        assert_eq!(c.rounds(), Some(2));
        assert_eq!(c.query(&[e]).unwrap(), int(1));
        assert_eq!(c.query(&[Event::Node(1)]).unwrap(), int(0));
        assert_eq!(c.query(&[Event::Label(0, 0)]).unwrap(), int(1));
        assert!(matches!(c.query(&[Event::Node(0), Event::Node(1), Event::Node(2)]), Err(LpError::TooManyEvents { .. })));
    }
}

//! Sherali-Adams lifting, explicit lifted points and their checks.

use std::collections::{HashMap, HashSet};

use num_traits::{One, Signed, Zero};

use super::{solve_lp, verify_certificate, LinearProgram, LpError, LpSolution, Row};
use crate::rational::{format_rational, Rational};

/// Size limits for [`lift`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LiftBudget {
    pub max_vars: usize,
    pub max_rows: usize,
}

impl Default for LiftBudget {
    fn default() -> Self {
        LiftBudget { max_vars: 20_000, max_rows: 400_000 }
    }
}

/// Sorted subsets of `0..n` with at most `r` elements, by size then
/// lexicographically.
fn subsets_upto(n: usize, r: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    let mut layer = vec![vec![]];
    for _ in 0..r.min(n) {
        let mut next = Vec::new();
        for s in &layer {
            let start = s.last().map_or(0, |&x| x + 1);
            for i in start..n {
                let mut t = s.clone();
                t.push(i);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        layer = next;
    }
    out
}

fn count_upto(n: usize, r: usize, weight: impl Fn(usize) -> usize) -> Option<usize> {
    let mut total = 0usize;
    let mut binom = 1usize;
    for j in 0..=r.min(n) {
        if j > 0 {
            binom = binom.checked_mul(n - j + 1)? / j;
        }
        total = total.checked_add(binom.checked_mul(weight(j))?)?;
    }
    Some(total)
}

fn union(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut u: Vec<usize> = a.iter().chain(b).copied().collect();
    u.sort_unstable();
    u.dedup();
    u
}

/// Terms of the linearization of `(b - a.x) * prod_{S} x_i * prod_{T} (1 - x_j) >= 0`,
/// written as `sum coeff * x_set <= 0`.
fn lifted_terms(row: &Row, s: &[usize], t: &[usize]) -> HashMap<Vec<usize>, Rational> {
    let mut terms: HashMap<Vec<usize>, Rational> = HashMap::new();
    for mask in 0u32..(1 << t.len()) {
        let sub: Vec<usize> = t.iter().enumerate().filter(|(b, _)| mask >> b & 1 == 1).map(|(_, &j)| j).collect();
        let sign = if sub.len() % 2 == 1 { -Rational::one() } else { Rational::one() };
        let base = union(s, &sub);
        for (i, a) in &row.coeffs {
            *terms.entry(union(&base, &[*i])).or_insert_with(Rational::zero) += &sign * a;
        }
        *terms.entry(base).or_insert_with(Rational::zero) -= &sign * &row.rhs;
    }
    terms.retain(|_, v| !v.is_zero());
    terms
}

/// Every disjoint `(S, T)` with `|S| + |T| <= r - 1`.
fn splits(n: usize, r: usize) -> impl Iterator<Item = (Vec<usize>, Vec<usize>)> {
    subsets_upto(n, r.saturating_sub(1)).into_iter().flat_map(|u| {
        (0u32..(1 << u.len())).map(move |mask| {
            let (mut s, mut t) = (Vec::new(), Vec::new());
            for (b, &j) in u.iter().enumerate() {
                if mask >> b & 1 == 1 {
                    s.push(j);
                } else {
                    t.push(j);
                }
            }
            (s, t)
        })
    })
}

/// A lifted program: one variable per event subset of size at most
/// `rounds`.
#[derive(Clone, Debug)]
pub struct LiftedLp {
    pub lp: LinearProgram,
    pub base_vars: usize,
    pub rounds: usize,
    pub subsets: Vec<Vec<usize>>,
    index: HashMap<Vec<usize>, usize>,
    /// Rows coming from `S = T = {}` plus the normalization rows; they are
    /// the first `seed_rows` rows.
    seed_rows: usize,
}

impl LiftedLp {
    pub fn var(&self, s: &[usize]) -> Option<usize> {
        self.index.get(&union(s, &[])).copied()
    }
}

/// Lifts `lp` to `r` rounds: for every row and disjoint `S`, `T` with
/// `|S| + |T| <= r - 1` the linearized product row, plus `x_{} = 1`.
/// Duplicate rows are dropped; order is canonical.
pub fn lift(lp: &LinearProgram, r: usize, budget: &LiftBudget) -> Result<LiftedLp, LpError> {
    assert!(r >= 1, "at least one round");
    let n = lp.num_vars();
    let nvars = count_upto(n, r, |_| 1).unwrap_or(usize::MAX);
    if nvars > budget.max_vars {
        return Err(LpError::Budget { what: "variables", needed: nvars, limit: budget.max_vars });
    }
    let per_row = count_upto(n, r - 1, |j| 1usize << j.min(60)).unwrap_or(usize::MAX);
    let nrows = per_row.saturating_mul(lp.rows.len());
    if nrows > budget.max_rows {
        return Err(LpError::Budget { what: "rows", needed: nrows, limit: budget.max_rows });
    }
    let subsets = subsets_upto(n, r);
    let index: HashMap<Vec<usize>, usize> = subsets.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
    let names = subsets
        .iter()
        .map(|s| format!("{{{}}}", s.iter().map(|&i| lp.names[i].as_str()).collect::<Vec<_>>().join(",")))
        .collect();
    let mut out = LinearProgram::new(names);
    out.push_eq(vec![(0, Rational::one())], Rational::one());
    let mut seen: HashSet<Row> = HashSet::new();
    let mut seed_rows = 2;
    for (s, t) in splits(n, r) {
        let seed = s.is_empty() && t.is_empty();
        for row in &lp.rows {
            let terms = lifted_terms(row, &s, &t);
            if terms.is_empty() {
                continue;
            }
            let lifted = Row::new(terms.into_iter().map(|(set, c)| (index[&set], c)), Rational::zero());
            if seen.insert(lifted.clone()) {
                out.push(lifted);
                seed_rows += usize::from(seed);
            }
        }
    }
    out.objective = lp.objective.iter().map(|(j, c)| (index[&vec![*j]], c.clone())).collect();
    Ok(LiftedLp { lp: out, base_vars: n, rounds: r, subsets, index, seed_rows })
}

/// Solves a lifted program by row generation: start from the unlifted
/// rows, add every violated lifted row, repeat. The returned certificate is
/// checked against the full program.
pub fn solve_lifted(lifted: &LiftedLp) -> Result<(LpSolution, LiftedPoint), LpError> {
    let full = &lifted.lp;
    let mut working: Vec<usize> = (0..lifted.seed_rows).collect();
    loop {
        let mut sub = LinearProgram::new(full.names.clone());
        sub.objective = full.objective.clone();
        for &i in &working {
            sub.push(full.rows[i].clone());
        }
        let sol = solve_lp(&sub)?;
        let mut in_set = vec![false; full.rows.len()];
        for &i in &working {
            in_set[i] = true;
        }
        let violated: Vec<usize> =
            (0..full.rows.len()).filter(|&i| !in_set[i] && !full.rows[i].holds(&sol.x)).collect();
        if violated.is_empty() {
            let mut duals = vec![Rational::zero(); full.rows.len()];
            for (k, &i) in working.iter().enumerate() {
                duals[i] = sol.duals[k].clone();
            }
            let whole = LpSolution { duals, ..sol };
            verify_certificate(full, &whole)?;
            let point = LiftedPoint {
                n: lifted.base_vars,
                rounds: lifted.rounds,
                values: lifted.subsets.iter().cloned().zip(whole.x.iter().cloned()).collect(),
            };
            return Ok((whole, point));
        }
        working.extend(violated);
        working.sort_unstable();
    }
}

/// Explicit values `x_S` for every subset `S` of `0..n` with `|S| <= rounds`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LiftedPoint {
    n: usize,
    rounds: usize,
    values: HashMap<Vec<usize>, Rational>,
}

impl LiftedPoint {
    pub fn from_fn(n: usize, rounds: usize, mut f: impl FnMut(&[usize]) -> Rational) -> Self {
        let values = subsets_upto(n, rounds).into_iter().map(|s| {
            let v = f(&s);
            (s, v)
        });
        LiftedPoint { n, rounds, values: values.collect() }
    }

    /// Product extension of a 0/1 vector.
    pub fn integral(x: &[bool], rounds: usize) -> Self {
        LiftedPoint::from_fn(x.len(), rounds, |s| {
            if s.iter().all(|&i| x[i]) {
                Rational::one()
            } else {
                Rational::zero()
            }
        })
    }

    pub fn base_len(&self) -> usize {
        self.n
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }

    /// `x_S`; `None` when `|S|` exceeds the rounds.
    pub fn get(&self, s: &[usize]) -> Option<&Rational> {
        self.values.get(&union(s, &[]))
    }

    pub fn set(&mut self, s: &[usize], v: Rational) {
        self.values.insert(union(s, &[]), v);
    }

    /// `x'_S = x_{S + i} / x_i` on one round fewer.
    pub fn condition(&self, i: usize) -> Result<LiftedPoint, LpError> {
        if self.rounds < 2 {
            return Err(LpError::RoundsExhausted);
        }
        let xi = self.get(&[i]).cloned().unwrap_or_else(Rational::zero);
        if !xi.is_positive() {
            return Err(LpError::ZeroProbability(super::Event::Node(i)));
        }
        Ok(LiftedPoint::from_fn(self.n, self.rounds - 1, |s| {
            self.get(&union(s, &[i])).expect("within rounds") / &xi
        }))
    }

    /// `(i j k) = num/den` lines in canonical subset order.
    pub fn to_text(&self) -> String {
        subsets_upto(self.n, self.rounds)
            .into_iter()
            .map(|s| {
                let ids: Vec<String> = s.iter().map(usize::to_string).collect();
                format!("({}) = {}\n", ids.join(" "), format_rational(&self.values[&s]))
            })
            .collect()
    }
}

/// First lifted row of `lp` at `r` rounds that `x` violates.
pub fn first_sa_violation(x: &LiftedPoint, lp: &LinearProgram, r: usize) -> Option<String> {
    if r > x.rounds {
        return Some(format!("point has {} rounds, {r} requested", x.rounds));
    }
    if x.get(&[]) != Some(&Rational::one()) {
        return Some("x_{} != 1".into());
    }
    for (s, t) in splits(lp.num_vars(), r) {
        for (k, row) in lp.rows.iter().enumerate() {
            let lhs: Rational = lifted_terms(row, &s, &t).iter().map(|(set, c)| c * &x.values[set]).sum();
            if lhs.is_positive() {
                return Some(format!("row {k} lifted by S={s:?} T={t:?} exceeds by {lhs}"));
            }
        }
    }
    None
}

pub fn check_sa_membership(x: &LiftedPoint, lp: &LinearProgram, r: usize) -> bool {
    first_sa_violation(x, lp, r).is_none()
}

/// Pairs `(i, j)` with a row `x_i - x_j <= 0`.
pub fn implied_pairs(lp: &LinearProgram) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = lp
        .rows
        .iter()
        .filter(|r| r.rhs.is_zero() && r.coeffs.len() == 2)
        .filter_map(|r| {
            let (a, b) = (&r.coeffs[0], &r.coeffs[1]);
            if a.1.is_one() && b.1 == -Rational::one() {
                Some((a.0, b.0))
            } else if b.1.is_one() && a.1 == -Rational::one() {
                Some((b.0, a.0))
            } else {
                None
            }
        })
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Checks the structural properties every lifted point must have:
/// values in `[0, 1]` and monotone under inclusion; `x_i = 1` makes `i`
/// redundant in pairs; implied inequalities `x_i <= x_j` give
/// `x_{ij} = x_i`; conditioning on `i` sets it to 1, stays in the lift
/// with one round fewer, and keeps 0/1 coordinates.
pub fn sa_property_violations(x: &LiftedPoint, lp: &LinearProgram) -> Vec<String> {
    let mut out = Vec::new();
    let n = x.n;
    let r = x.rounds;
    for s in subsets_upto(n, r) {
        let v = &x.values[&s];
        if v.is_negative() || *v > Rational::one() {
            out.push(format!("x{s:?} = {v} outside [0,1]"));
        }
        if s.len() < r {
            for i in 0..n {
                if !s.contains(&i) && x.values[&union(&s, &[i])] > *v {
                    out.push(format!("monotonicity fails for {s:?} + {i}"));
                }
            }
        }
    }
    let single = |i: usize| x.values[&vec![i]].clone();
    if r >= 2 {
        for i in 0..n {
            if single(i).is_one() {
                for j in 0..n {
                    if x.values[&union(&[i], &[j])] != single(j) {
                        out.push(format!("x_{i} = 1 but x_{{{i},{j}}} != x_{j}"));
                    }
                }
            }
        }
        for (i, j) in implied_pairs(lp) {
            if x.values[&union(&[i], &[j])] != single(i) {
                out.push(format!("implied x_{i} <= x_{j} but x_{{{i},{j}}} != x_{i}"));
            }
        }
        for i in 0..n {
            if !single(i).is_positive() {
                continue;
            }
            let c = match x.condition(i) {
                Ok(c) => c,
                Err(e) => {
                    out.push(format!("conditioning on {i} failed: {e}"));
                    continue;
                }
            };
            if !c.values[&vec![i]].is_one() {
                out.push(format!("conditioning on {i} does not fix it"));
            }
            if let Some(v) = first_sa_violation(&c, lp, r - 1) {
                out.push(format!("conditioned on {i}: {v}"));
            }
            for j in 0..n {
                let before = single(j);
                if (before.is_zero() || before.is_one()) && c.values[&vec![j]] != before {
                    out.push(format!("conditioning on {i} moved 0/1 coordinate {j}"));
                }
            }
        }
    }
    out
}

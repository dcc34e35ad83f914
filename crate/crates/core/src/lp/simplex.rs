//! Exact two-phase tableau simplex with Bland's rule on sparse rows.

use num_traits::{One, Signed, Zero};

use super::{LinearProgram, LpError, Row};
use crate::rational::Rational;

type SparseRow = Vec<(usize, Rational)>;

fn entry(row: &SparseRow, col: usize) -> Option<&Rational> {
    row.binary_search_by_key(&col, |e| e.0).ok().map(|i| &row[i].1)
}

/// `target - f * src`, both sorted by column.
fn axpy(target: &SparseRow, f: &Rational, src: &SparseRow) -> SparseRow {
    let mut out = Vec::with_capacity(target.len() + src.len());
    let (mut i, mut j) = (0, 0);
    while i < target.len() || j < src.len() {
        let ti = target.get(i).map(|e| e.0).unwrap_or(usize::MAX);
        let sj = src.get(j).map(|e| e.0).unwrap_or(usize::MAX);
        if ti < sj {
            out.push(target[i].clone());
            i += 1;
        } else if sj < ti {
            out.push((sj, -(f * &src[j].1)));
            j += 1;
        } else {
            let v = &target[i].1 - f * &src[j].1;
            if !v.is_zero() {
                out.push((ti, v));
            }
            i += 1;
            j += 1;
        }
    }
    out
}

struct Tableau {
    rows: Vec<SparseRow>,
    rhs: Vec<Rational>,
    basis: Vec<usize>,
    /// Reduced costs, dense.
    obj: Vec<Rational>,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let p = entry(&self.rows[r], c).expect("pivot on a nonzero").clone();
        if !p.is_one() {
            for e in self.rows[r].iter_mut() {
                e.1 /= &p;
            }
            self.rhs[r] /= &p;
        }
        let prow = self.rows[r].clone();
        let prhs = self.rhs[r].clone();
        for i in 0..self.rows.len() {
            if i == r {
                continue;
            }
            if let Some(f) = entry(&self.rows[i], c).cloned() {
                self.rows[i] = axpy(&self.rows[i], &f, &prow);
                self.rhs[i] -= &f * &prhs;
            }
        }
        let f = self.obj[c].clone();
        if !f.is_zero() {
            for (j, v) in &prow {
                self.obj[*j] -= &f * v;
            }
        }
        self.basis[r] = c;
    }

    /// Bland's rule until optimal over columns `< limit`. `Err(col)` names
    /// an unbounded entering column.
    fn run(&mut self, limit: usize) -> Result<(), usize> {
        loop {
            let Some(c) = (0..limit).find(|&j| self.obj[j].is_negative()) else {
                return Ok(());
            };
            let mut best: Option<(Rational, usize, usize)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                if let Some(a) = entry(row, c) {
                    if a.is_positive() {
                        let ratio = &self.rhs[i] / a;
                        let better = match &best {
                            None => true,
                            Some((br, _, bb)) => ratio < *br || (ratio == *br && self.basis[i] < *bb),
                        };
                        if better {
                            best = Some((ratio, i, self.basis[i]));
                        }
                    }
                }
            }
            match best {
                Some((_, r, _)) => self.pivot(r, c),
                None => return Err(c),
            }
        }
    }
}

/// Optimum of `min c.y` subject to `rows`, `y >= 0`, together with row
/// multipliers `z >= 0` satisfying `c + M^T z >= 0` and `c.y = -q.z`.
pub(crate) struct Optimum {
    pub y: Vec<Rational>,
    pub z: Vec<Rational>,
    pub basis: Vec<usize>,
}

pub(crate) enum Outcome {
    Optimal(Optimum),
    Infeasible,
    Unbounded,
}

pub(crate) fn simplex_min(n: usize, c: &[Rational], rows: &[Row]) -> Outcome {
    let m = rows.len();
    let mut art = 0;
    let mut t = Tableau { rows: Vec::with_capacity(m), rhs: Vec::with_capacity(m), basis: Vec::with_capacity(m), obj: vec![] };
    let mut art_rows = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        let flip = row.rhs.is_negative();
        let mut sparse: SparseRow = row
            .coeffs
            .iter()
            .map(|(j, a)| (*j, if flip { -a.clone() } else { a.clone() }))
            .collect();
        sparse.push((n + i, if flip { -Rational::one() } else { Rational::one() }));
        if flip {
            sparse.push((n + m + art, Rational::one()));
            t.basis.push(n + m + art);
            art_rows.push(i);
            art += 1;
        } else {
            t.basis.push(n + i);
        }
        t.rows.push(sparse);
        t.rhs.push(if flip { -row.rhs.clone() } else { row.rhs.clone() });
    }
    let total = n + m + art;

    if art > 0 {
        t.obj = vec![Rational::zero(); total];
        for &i in &art_rows {
            for (j, a) in &t.rows[i] {
                if *j < n + m {
                    t.obj[*j] -= a;
                }
            }
        }
        if t.run(n + m).is_err() {
            unreachable!("phase one is bounded below by zero");
        }
        let infeas: Rational = (0..m).filter(|&i| t.basis[i] >= n + m).map(|i| t.rhs[i].clone()).sum();
        if infeas.is_positive() {
            return Outcome::Infeasible;
        }
        // Drive zero-level artificials out of the basis.
        for r in 0..m {
            if t.basis[r] >= n + m {
                if let Some(&(c, _)) = t.rows[r].iter().find(|(j, _)| *j < n + m) {
                    t.pivot(r, c);
                }
            }
        }
        let keep: Vec<usize> = (0..m).filter(|&r| t.basis[r] < n + m).collect();
        t.rows = keep.iter().map(|&r| t.rows[r].iter().filter(|e| e.0 < n + m).cloned().collect()).collect();
        t.rhs = keep.iter().map(|&r| t.rhs[r].clone()).collect();
        t.basis = keep.iter().map(|&r| t.basis[r]).collect();
    }

    t.obj = vec![Rational::zero(); n + m];
    for (j, cj) in c.iter().enumerate() {
        t.obj[j] = cj.clone();
    }
    for r in 0..t.rows.len() {
        let b = t.basis[r];
        if b < n && !c[b].is_zero() {
            let cb = c[b].clone();
            for (j, a) in &t.rows[r] {
                t.obj[*j] -= &cb * a;
            }
        }
    }
    if t.run(n + m).is_err() {
        return Outcome::Unbounded;
    }
    let mut y = vec![Rational::zero(); n];
    for (r, &b) in t.basis.iter().enumerate() {
        if b < n {
            y[b] = t.rhs[r].clone();
        }
    }
    let z = (0..m).map(|i| t.obj[n + i].clone()).collect();
    let mut basis = t.basis.clone();
    basis.sort_unstable();
    Outcome::Optimal(Optimum { y, z, basis })
}

/// Exact optimum of a minimization LP with `x >= 0`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LpSolution {
    pub x: Vec<Rational>,
    pub value: Rational,
    /// Nonnegative row multipliers proving optimality.
    pub duals: Vec<Rational>,
    /// Sorted basic columns of the final tableau (of the dual problem).
    pub basis: Vec<usize>,
}

/// Rows `-a x_j <= 0` with `a > 0` only restate `x_j >= 0`.
fn is_sign_row(row: &Row) -> bool {
    row.rhs.is_zero() && row.coeffs.len() == 1 && row.coeffs[0].1.is_negative()
}

/// Solves `lp` exactly. The simplex runs on the dual program, which has
/// one row per variable and, for nonnegative objectives, starts feasible.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    let n = lp.num_vars();
    let kept: Vec<usize> = (0..lp.rows.len()).filter(|&i| !is_sign_row(&lp.rows[i])).collect();
    // Dual: min b.y  s.t.  -A^T y <= c, y >= 0.
    let mut cols: Vec<Vec<(usize, Rational)>> = vec![Vec::new(); n];
    for (k, &i) in kept.iter().enumerate() {
        for (j, a) in &lp.rows[i].coeffs {
            cols[*j].push((k, -a.clone()));
        }
    }
    let mut c = vec![Rational::zero(); n];
    for (j, v) in &lp.objective {
        c[*j] += v;
    }
    let dual_rows: Vec<Row> = cols.into_iter().zip(c.iter()).map(|(coeffs, cj)| Row { coeffs, rhs: cj.clone() }).collect();
    let b: Vec<Rational> = kept.iter().map(|&i| lp.rows[i].rhs.clone()).collect();
    let opt = match simplex_min(kept.len(), &b, &dual_rows) {
        Outcome::Optimal(o) => o,
        Outcome::Infeasible | Outcome::Unbounded => return Err(LpError::Infeasible),
    };
    let mut duals = vec![Rational::zero(); lp.rows.len()];
    for (k, &i) in kept.iter().enumerate() {
        duals[i] = opt.y[k].clone();
    }
    let x = opt.z;
    let value = lp.objective_value(&x);
    let sol = LpSolution { x, value, duals, basis: opt.basis };
    verify_certificate(lp, &sol)?;
    Ok(sol)
}

/// Checks primal feasibility, dual feasibility and equal objectives.
pub fn verify_certificate(lp: &LinearProgram, sol: &LpSolution) -> Result<(), LpError> {
    if let Some(i) = lp.first_violated(&sol.x) {
        return Err(LpError::Certificate(format!("row {i} violated")));
    }
    if sol.x.iter().any(Signed::is_negative) || sol.duals.iter().any(Signed::is_negative) {
        return Err(LpError::Certificate("negative entry".into()));
    }
    let mut reduced = vec![Rational::zero(); lp.num_vars()];
    for (j, v) in &lp.objective {
        reduced[*j] += v;
    }
    let mut dual_value = Rational::zero();
    for (row, y) in lp.rows.iter().zip(&sol.duals) {
        if y.is_zero() {
            continue;
        }
        for (j, a) in &row.coeffs {
            reduced[*j] += a * y;
        }
        dual_value -= &row.rhs * y;
    }
    if reduced.iter().any(Signed::is_negative) {
        return Err(LpError::Certificate("dual infeasible".into()));
    }
    if dual_value != sol.value {
        return Err(LpError::Certificate(format!("gap between {} and {}", sol.value, dual_value)));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, ratio};

    fn row(coeffs: &[(usize, i64)], rhs: Rational) -> Row {
        Row::new(coeffs.iter().map(|&(j, a)| (j, int(a))), rhs)
    }

    fn boxed(n: usize, obj: &[(usize, i64)], rows: Vec<Row>) -> LinearProgram {
        let mut lp = LinearProgram::new((0..n).map(|i| format!("x{i}")).collect());
        for r in rows {
            lp.push(r);
        }
        for j in 0..n {
            lp.push(row(&[(j, 1)], int(1)));
            lp.push(row(&[(j, -1)], int(0)));
        }
        lp.objective = obj.iter().map(|&(j, a)| (j, int(a))).collect();
        lp
    }

    #[test]
    fn lower_bound_by_negated_row() {
        let lp = boxed(1, &[(0, 1)], vec![row(&[(0, -1)], ratio(-1, 3))]);
        let s = solve_lp(&lp).unwrap();
        assert_eq!(s.x, vec![ratio(1, 3)]);
        assert_eq!(s.value, ratio(1, 3));
    }

    #[test]
    fn maximization_through_negative_costs() {
        // max x + y, x + 2y <= 2 -> x = 1, y = 1/2.
        let lp = boxed(2, &[(0, -1), (1, -1)], vec![row(&[(0, 1), (1, 2)], int(2))]);
        let s = solve_lp(&lp).unwrap();
        assert_eq!(s.value, ratio(-3, 2));
        assert_eq!(s.x, vec![int(1), ratio(1, 2)]);
    }

    #[test]
    fn infeasible() {
        let lp = boxed(1, &[(0, 1)], vec![row(&[(0, -1)], int(-2))]);
        assert_eq!(solve_lp(&lp), Err(LpError::Infeasible));
    }

    #[test]
    fn equality_pairs() {
        // x0 + x1 = 1, min 2x0 + 3x1.
        let lp = boxed(
            2,
            &[(0, 2), (1, 3)],
            vec![row(&[(0, 1), (1, 1)], int(1)), row(&[(0, -1), (1, -1)], int(-1))],
        );
        let s = solve_lp(&lp).unwrap();
        assert_eq!(s.value, int(2));
        assert_eq!(solve_lp(&lp).unwrap(), s);
    }

    #[test]
    fn axpy_cancels() {
        let a = vec![(0, int(1)), (2, int(3))];
        let b = vec![(0, int(1)), (1, int(1))];
        assert_eq!(axpy(&a, &int(1), &b), vec![(1, int(-1)), (2, int(3))]);
    }
}

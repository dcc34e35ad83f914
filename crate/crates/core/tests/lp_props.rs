use dstq::gen::{random_feasible_lcst, random_lcst_solution};
use dstq::lcst::exact_lcst;
use dstq::lp::{build_base_lp, check_sum_leaf_identity, integral_events, solve_lp, verify_certificate, Event, LinearProgram, Row};
use dstq::rational::Rational;
use num_traits::{One, Zero};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn int(v: i64) -> Rational {
    Rational::from_integer(v.into())
}

/// Random program with a known feasible point `x0` in the unit box.
fn random_lp(rng: &mut ChaCha8Rng, n: usize) -> LinearProgram {
    let x0: Vec<Rational> = (0..n).map(|_| Rational::new(rng.gen_range(0..=4).into(), 4.into())).collect();
    let mut lp = LinearProgram::new((0..n).map(|i| format!("v{i}")).collect());
    for j in 0..n {
        lp.push_box(j);
        lp.objective.push((j, int(rng.gen_range(-3..=5))));
    }
    for _ in 0..rng.gen_range(1..=4) {
        let coeffs: Vec<(usize, Rational)> = (0..n).map(|j| (j, int(rng.gen_range(-2..=2)))).collect();
        let lhs: Rational = coeffs.iter().map(|(j, c)| c * &x0[*j]).sum();
        lp.push(Row::new(coeffs, lhs + Rational::new(rng.gen_range(0..=2).into(), 2.into())));
    }
    lp
}

/// Cheapest feasible vertex of the unit cube; the LP minimum is at most
/// this.
fn best_integral(lp: &LinearProgram) -> Option<Rational> {
    let n = lp.num_vars();
    (0u32..1 << n)
        .map(|mask| (0..n).map(|j| if mask >> j & 1 == 1 { Rational::one() } else { Rational::zero() }).collect::<Vec<_>>())
        .filter(|x| lp.is_feasible(x))
        .map(|x| lp.objective_value(&x))
        .min()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn simplex_optimum_is_certified(seed in any::<u64>(), n in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lp = random_lp(&mut rng, n);
        let sol = solve_lp(&lp).unwrap();
        prop_assert!(verify_certificate(&lp, &sol).is_ok());
        prop_assert!(lp.is_feasible(&sol.x));
        prop_assert_eq!(lp.objective_value(&sol.x), sol.value.clone());
        if let Some(best) = best_integral(&lp) {
            prop_assert!(sol.value <= best);
        }
    }

    #[test]
    fn integral_solutions_lie_in_the_base_relaxation(seed in any::<u64>(), n in 3usize..14, k in 1usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let norm = random_feasible_lcst(&mut rng, n, k, 2, 3);
        let base = build_base_lp(&norm);
        let value = solve_lp(&base.lp).unwrap().value;
        prop_assert!(value <= exact_lcst(&norm).unwrap().0);
        for _ in 0..4 {
            let Some(sol) = random_lcst_solution(&mut rng, &norm) else { continue };
            let mut x = vec![Rational::zero(); base.space.len()];
            for e in integral_events(&norm, &sol) {
                x[base.space.index_of(e).unwrap()] = Rational::one();
            }
            prop_assert_eq!(base.lp.first_violated(&x), None);
            prop_assert_eq!(base.lp.objective_value(&x), sol.cost.clone());
            for &e in base.space.events() {
                if let Event::Label(u, l) = e {
                    prop_assert!(check_sum_leaf_identity(&norm, &base, &x, u, l));
                }
            }
        }
    }
}

use std::cmp::Ordering;

use proptest::prelude::*;
use raresim::chance_opt::{check_rare_constraint, rank_cmp, ChanceConstraint, Direction, Estimator, Ranked};
use raresim::flight::{gust_velocity, GustProfile};
use raresim::orthopoly::{basis_size, total_degree_indices};
use raresim::pce::PceModel;
use raresim::rsm::{fit, RsmModel};
use raresim::sbss::PiecewiseSurrogate;
use raresim::sus::{select_seeds, SusConfig};
use raresim::uncertainty::{MarginalDistribution, UncertainVector};

#[derive(Debug, Clone)]
struct Design {
    feasible: bool,
    objective: f64,
    violation: f64,
}

impl Ranked for Design {
    fn feasible(&self) -> bool {
        self.feasible
    }

    fn objective_value(&self) -> f64 {
        self.objective
    }

    fn violation(&self) -> f64 {
        self.violation
    }
}

fn design() -> impl Strategy<Value = Design> {
    (any::<bool>(), 0.0..1.0f64, 0.0..10.0f64).prop_map(|(feasible, objective, violation)| Design {
        feasible,
        objective,
        violation,
    })
}

fn marginal() -> impl Strategy<Value = MarginalDistribution<f64>> {
    prop_oneof![
        (-5.0..5.0f64, 0.1..3.0f64).prop_map(|(m, s)| MarginalDistribution::Gaussian { mean: m, std_dev: s }),
        (-5.0..5.0f64, 0.1..3.0f64).prop_map(|(l, w)| MarginalDistribution::Uniform { lower: l, upper: l + w }),
    ]
}

proptest! {
    #[test]
    fn seeds_are_the_smallest_values(values in prop::collection::vec(-100.0..100.0f64, 1..200), frac in 0.01..1.0f64) {
        let count = ((values.len() as f64 * frac).ceil() as usize).clamp(1, values.len());
        let (seeds, b) = select_seeds(&values, count);
        prop_assert_eq!(seeds.len(), count);
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), count);
        prop_assert!(seeds.iter().all(|&i| values[i] <= b));
        let outside = (0..values.len()).filter(|i| !seeds.contains(i));
        prop_assert!(outside.into_iter().all(|i| values[i] >= b));
    }

    #[test]
    fn direction_decides_violation(h in -50.0..50.0f64, limit in -50.0..50.0f64) {
        let mut c = ChanceConstraint {
            index: 1,
            direction: Direction::Below,
            limit,
            beta: 0.1,
            estimator: Estimator::SurrogateMcs,
            inflate: false,
        };
        prop_assert_eq!(c.violated(h), h < limit);
        c.direction = Direction::Above;
        prop_assert_eq!(c.violated(h), h > limit);
        prop_assert_eq!(c.canonical(h), limit - h);
    }

    #[test]
    fn rare_check_is_monotone(p in 0.0..1e-5f64, cov in 0.0..2.0f64, dp in 0.0..1.0f64, dc in 0.0..1.0f64) {
        if check_rare_constraint(p, cov, 1e-6) {
            prop_assert!(check_rare_constraint(p * dp, cov * dc, 1e-6));
            prop_assert!(p < 1e-6);
        }
    }

    #[test]
    fn ranking_is_a_total_order(a in design(), b in design(), c in design()) {
        prop_assert_eq!(rank_cmp(&a, &b), rank_cmp(&b, &a).reverse());
        if rank_cmp(&a, &b) != Ordering::Greater && rank_cmp(&b, &c) != Ordering::Greater {
            prop_assert_ne!(rank_cmp(&a, &c), Ordering::Greater);
        }
        if a.feasible && !b.feasible {
            prop_assert_eq!(rank_cmp(&a, &b), Ordering::Less);
        }
    }

    #[test]
    fn gust_is_monotone_and_bounded(length in 1.0..500.0f64, amplitude in 0.0..30.0f64, x in -10.0..600.0f64, dx in 0.0..50.0f64) {
        let g = GustProfile { length, amplitude };
        let (a, b) = (gust_velocity(&g, x), gust_velocity(&g, x + dx));
        prop_assert!(a <= b + 1e-12);
        prop_assert!((0.0..=amplitude).contains(&a));
    }

    #[test]
    fn standard_transform_round_trips(marginals in prop::collection::vec(marginal(), 1..5), seed in prop::collection::vec(-1.0..1.0f64, 5)) {
        let uv = UncertainVector::new(marginals).unwrap();
        let xi = &seed[..uv.dim()];
        let theta = uv.from_standard(xi).unwrap();
        let back = uv.to_standard(&theta).unwrap();
        for (a, b) in xi.iter().zip(&back) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn basis_size_counts_indices(p in 1usize..6, order in 0usize..7) {
        let indices = total_degree_indices(p, order).unwrap();
        prop_assert_eq!(basis_size(p, order), Some(indices.len()));
        prop_assert!(indices.iter().all(|i| i.total_degree() <= order && i.dim() == p));
    }

    #[test]
    fn pce_is_linear_in_coefficients(c in prop::collection::vec(-2.0..2.0f64, 10), d in prop::collection::vec(-2.0..2.0f64, 10), t in prop::collection::vec(-3.0..3.0f64, 3)) {
        let uv = UncertainVector::<f64>::standard_normal(3).unwrap();
        let sum: Vec<f64> = c.iter().zip(&d).map(|(a, b)| a + b).collect();
        let eval = |k: &[f64]| PceModel::from_coefficients(&uv, 2, k.to_vec()).unwrap().evaluate(&t).unwrap();
        prop_assert!((eval(&sum) - eval(&c) - eval(&d)).abs() < 1e-9);
    }

    #[test]
    fn piecewise_switches_only_below_threshold(c in prop::collection::vec(-2.0..2.0f64, 4), b in -2.0..2.0f64, t in prop::collection::vec(-3.0..3.0f64, 3)) {
        let uv = UncertainVector::<f64>::standard_normal(3).unwrap();
        let initial = PceModel::from_coefficients(&uv, 1, c).unwrap();
        let local = RsmModel::from_parts(0, vec![-7.0], vec![0.0; 3], vec![1.0; 3]).unwrap();
        let mut s = PiecewiseSurrogate::new(initial.clone());
        s.refine(b, local).unwrap();
        let base = initial.evaluate(&t).unwrap();
        let v = s.evaluate(&t).unwrap();
        prop_assert_eq!(v, if base <= b { -7.0 } else { base });
    }

    #[test]
    fn sus_config_requires_integer_seed_split(n in 1usize..5000, p0 in 0.01..0.99f64) {
        let cfg = SusConfig::new(n, p0);
        let ns = p0 * n as f64;
        let integral = (ns - ns.round()).abs() <= 1e-9 * n as f64 && ns.round() >= 1.0;
        let ok = integral && n % (ns.round() as usize) == 0;
        prop_assert_eq!(cfg.validate().is_ok(), ok);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn regression_reproduces_polynomials_of_its_order(coeffs in prop::collection::vec(-3.0..3.0f64, 10), points in prop::collection::vec(prop::collection::vec(-2.0..2.0f64, 3), 30)) {
        let truth = RsmModel::from_parts(2, coeffs, vec![0.0; 3], vec![1.0; 3]).unwrap();
        let ys: Vec<f64> = points.iter().map(|x| truth.evaluate(x).unwrap()).collect();
        let spread = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max) - ys.iter().copied().fold(f64::INFINITY, f64::min);
        prop_assume!(spread > 1e-3);
        if let Ok((model, diag)) = fit(&points, &ys, 2) {
            let scale = ys.iter().map(|y| y.abs()).fold(1.0, f64::max);
            prop_assert!(diag.eps_emp.sqrt() < 1e-8 * scale);
            for x in &points {
                prop_assert!((model.evaluate(x).unwrap() - truth.evaluate(x).unwrap()).abs() < 1e-7 * scale);
            }
        }
    }
}

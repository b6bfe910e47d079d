use approx::assert_relative_eq;
use infocost::bayes::{atomic_decision_rule, AtomState};
use infocost::{
    mixture_weights, noise_cost, optimize_width, posterior, restricted_garble, w_eval, ApproxGrid,
    DecisionProblem, MixedDistribution, NoiseCostFunction, NoiseDistribution, RestrictedKernelSpec, Utility,
};
use proptest::prelude::*;

fn law() -> impl Strategy<Value = NoiseDistribution> {
    prop_oneof![
        (0.05..2.0f64).prop_map(|r| NoiseDistribution::uniform(r).unwrap()),
        (0.05..2.0f64).prop_map(|r| NoiseDistribution::tent(r).unwrap()),
        (0.05..2.0f64, 0.1..0.9f64, 0.1..0.9f64)
            .prop_map(|(r, w, s)| NoiseDistribution::mixture(vec![w, 1.0 - w], vec![r, r * s], 0.0).unwrap()),
    ]
}

fn cost() -> impl Strategy<Value = NoiseCostFunction> {
    prop_oneof![
        (0.1..3.0f64, 0.1..3.0f64).prop_map(|(s, r)| NoiseCostFunction::exp_decay(s, r).unwrap()),
        (0.1..3.0f64, 0.5..4.0f64).prop_map(|(h, w)| NoiseCostFunction::tent(h, w).unwrap()),
        (0.1..3.0f64).prop_map(|s| NoiseCostFunction::cauchy(s).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cost_is_linear_in_mixtures(a in law(), b in law(), alpha in 0.0..1.0f64, c in cost()) {
        let mixed = noise_cost(&c, &a.mix(&b, alpha).unwrap());
        let want = alpha * noise_cost(&c, &a) + (1.0 - alpha) * noise_cost(&c, &b);
        assert_relative_eq!(mixed, want, epsilon = 1e-12, max_relative = 1e-12);
    }

    #[test]
    fn laws_have_unit_mass(p in law()) {
        assert_relative_eq!(p.total_mass(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(p.cdf(0.0), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn uniform_noise_cost_matches_closed_form(d in 0.01..3.0f64, c in cost()) {
        let law = NoiseDistribution::uniform(d).unwrap();
        assert_relative_eq!(noise_cost(&c, &law), infocost::costs::uniform_cost(&c, d), max_relative = 1e-12);
    }

    #[test]
    fn restricted_garble_keeps_mass_and_lowers_cost(
        p in law(), f0 in 0.0..0.5f64, f1 in 0.55..0.95f64, f2 in 0.05..1.0f64, alpha in 0.05..0.95f64, c in cost()
    ) {
        let r = p.radius();
        let spec = RestrictedKernelSpec::new(r * f0, r * f1, r + f2, alpha).unwrap();
        let q = restricted_garble(&p, &spec).unwrap();
        assert_relative_eq!(q.total_mass(), 1.0, epsilon = 1e-12);
        for x in [0.1, 0.3, 0.7, 1.1] {
            prop_assert_eq!(q.density(x * r), q.density(-x * r));
        }
        prop_assert!(noise_cost(&c, &q) < noise_cost(&c, &p));
    }

    #[test]
    fn approximation_stays_below_and_meets_grid(r in 0.3..1.4f64, n in 1u32..=4) {
        let target = NoiseDistribution::tent(r).unwrap();
        let grid = ApproxGrid::new(n).unwrap();
        let approx = mixture_weights(&target, grid).unwrap();
        prop_assert!(approx.weight_sum() <= 1.0 + 1e-12);
        for i in 0..500 {
            let x = 2.0 * i as f64 / 499.0 - 1.0;
            prop_assert!(approx.density(x * 1.6) <= target.density(x * 1.6) + 1e-12);
        }
        for j in 1..=grid.k() {
            let x = grid.width(j);
            assert_relative_eq!(approx.density(x), target.density(x), epsilon = 1e-9);
        }
    }

    #[test]
    fn posterior_sums_to_one(
        m in 0.05..0.95f64, d0 in 0.1..1.5f64, d1 in 0.1..1.5f64, t in 0.0..1.0f64
    ) {
        let prior = MixedDistribution::atomic(&[(0.0, 1.0 - m), (1.0, m)]).unwrap();
        let exp = infocost::make_uniform_experiment(&[(0.0, d0), (1.0, d1)], infocost::SignalFunction::Additive, 2.0).unwrap();
        let s = -d0 + t * (1.0 + d1 + d0);
        if let Ok(p) = posterior(&prior, &exp, s) {
            let total: f64 = p.distribution.atoms().iter().map(|a| a.mass).sum();
            assert_relative_eq!(total, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn optimize_width_beats_every_sampled_width(
        d0 in 0.1..1.5f64, d1 in 0.1..1.5f64, m in 0.2..0.8f64, scale in 0.01..0.5f64
    ) {
        let problem = DecisionProblem::new(vec![0.0, 0.5, 1.0], Utility::QuadraticLoss { scale: 1.0 }).unwrap();
        let cost = NoiseCostFunction::exp_decay(scale, 1.0).unwrap();
        let states = [
            AtomState { theta: 0.0, mass: 1.0 - m, noise: Some(NoiseDistribution::uniform(d0).unwrap()) },
            AtomState { theta: 1.0, mass: m, noise: Some(NoiseDistribution::uniform(d1).unwrap()) },
        ];
        let rule = atomic_decision_rule(&states, &problem).unwrap();
        for theta in [0.0, 1.0] {
            let best = optimize_width(theta, &rule, &problem, &cost, 2.0, 1e-10).unwrap();
            for i in 1..=400 {
                let d = 2.0 * i as f64 / 400.0;
                prop_assert!(w_eval(d, theta, &rule, &problem, &cost) <= best.value + 1e-9);
            }
        }
    }
}

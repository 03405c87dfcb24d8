use proptest::collection::vec;
use proptest::prelude::*;
use xpi_core::concentrability::{coefficient_report, d_kappa_matrix, d_pi_star_kappa};
use xpi_core::garnet::{generate_garnet, GarnetSpec};
use xpi_core::kappa::{apply_t_kappa, apply_t_kappa_pi, h_greedy_policy, kappa_greedy_policy, q_kappa, xi};
use xpi_core::mdp::{
    apply_bellman, apply_optimal_bellman, evaluate_policy, mix_policies, q_of_policy, solve_optimal_exact, Mdp,
    Policy, QFunction, StateDistribution, ValueFunction,
};
use xpi_core::mixture::{improvement_report, GreedyMode};
use xpi_core::online::{online_update, OnlineState, StepSchedule, Transition};

fn mdp_strategy(max_states: usize, max_actions: usize) -> impl Strategy<Value = Mdp> {
    (2..=max_states, 1..=max_actions, any::<u64>(), 0.5..0.95f64, 1..=max_states).prop_map(
        |(n_s, n_a, seed, gamma, b)| {
            let spec = GarnetSpec::new(n_s, n_a, seed).with_gamma(gamma).with_branching(b.min(n_s));
            generate_garnet(&spec).unwrap()
        },
    )
}

fn policy_strategy(n_s: usize, n_a: usize) -> impl Strategy<Value = Policy> {
    vec(vec(0.001..1.0f64, n_a), n_s).prop_map(|rows| {
        Policy::new(
            rows.into_iter()
                .map(|r| {
                    let sum: f64 = r.iter().sum();
                    let mut p: Vec<f64> = r.iter().map(|x| x / sum).collect();
                    let rest: f64 = p[1..].iter().sum();
                    p[0] = 1.0 - rest;
                    p
                })
                .collect(),
        )
        .unwrap()
    })
}

fn value_strategy(n: usize) -> impl Strategy<Value = ValueFunction> {
    vec(-10.0..10.0f64, n).prop_map(ValueFunction::new)
}

fn distribution_strategy(n: usize) -> impl Strategy<Value = StateDistribution> {
    vec(0.05..1.0f64, n).prop_map(|w| {
        let sum: f64 = w.iter().sum();
        let mut p: Vec<f64> = w.iter().map(|x| x / sum).collect();
        let rest: f64 = p[1..].iter().sum();
        p[0] = 1.0 - rest;
        StateDistribution::new(p).unwrap()
    })
}

/// An MDP with two policies and two value vectors of matching shape.
fn instance() -> impl Strategy<Value = (Mdp, Policy, Policy, ValueFunction, ValueFunction)> {
    mdp_strategy(6, 3).prop_flat_map(|mdp| {
        let (n_s, n_a) = (mdp.n_states(), mdp.n_actions());
        (
            Just(mdp),
            policy_strategy(n_s, n_a),
            policy_strategy(n_s, n_a),
            value_strategy(n_s),
            value_strategy(n_s),
        )
    })
}

fn diff(a: &ValueFunction, b: &ValueFunction) -> f64 {
    a.max_abs_diff(b)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn policy_value_is_a_fixed_point((mdp, pi, _, _, _) in instance()) {
        let v = evaluate_policy(&mdp, &pi).unwrap();
        prop_assert!(diff(&apply_bellman(&mdp, &pi, &v).unwrap(), &v) <= 1e-9);
    }

    #[test]
    fn bellman_operators_contract((mdp, pi, _, v1, v2) in instance()) {
        let g = mdp.gamma() * diff(&v1, &v2) + 1e-12;
        prop_assert!(diff(&apply_bellman(&mdp, &pi, &v1).unwrap(), &apply_bellman(&mdp, &pi, &v2).unwrap()) <= g);
        let (t1, _) = apply_optimal_bellman(&mdp, &v1).unwrap();
        let (t2, _) = apply_optimal_bellman(&mdp, &v2).unwrap();
        prop_assert!(diff(&t1, &t2) <= g);
    }

    #[test]
    fn bellman_operators_are_monotone((mdp, pi, _, v1, v2) in instance()) {
        let lo = ValueFunction::new(v1.as_slice().iter().zip(v2.as_slice()).map(|(a, b)| a.min(*b)).collect());
        let hi = ValueFunction::new(v1.as_slice().iter().zip(v2.as_slice()).map(|(a, b)| a.max(*b)).collect());
        let (tl, _) = apply_optimal_bellman(&mdp, &lo).unwrap();
        let (th, _) = apply_optimal_bellman(&mdp, &hi).unwrap();
        let pl = apply_bellman(&mdp, &pi, &lo).unwrap();
        let ph = apply_bellman(&mdp, &pi, &hi).unwrap();
        for s in 0..mdp.n_states() {
            prop_assert!(tl[s] <= th[s] + 1e-12);
            prop_assert!(pl[s] <= ph[s] + 1e-12);
        }
    }

    #[test]
    fn value_is_lipschitz_in_policy((mdp, p1, p2, _, _) in instance()) {
        let gap = diff(&evaluate_policy(&mdp, &p1).unwrap(), &evaluate_policy(&mdp, &p2).unwrap());
        let l1 = (0..mdp.n_states())
            .map(|s| p1.row(s).iter().zip(p2.row(s)).map(|(a, b)| (a - b).abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let bound = mdp.r_max() / (1.0 - mdp.gamma()).powi(2) * l1 + 1e-9;
        prop_assert!(gap <= bound);
    }

    #[test]
    fn kappa_operators_contract_at_xi(
        (mdp, pi, _, v1, v2) in instance(),
        kappa in 0.0..=1.0f64,
    ) {
        let x = xi(mdp.gamma(), kappa).unwrap();
        let d = diff(&v1, &v2);
        let a = apply_t_kappa_pi(&mdp, &pi, kappa, &v1).unwrap();
        let b = apply_t_kappa_pi(&mdp, &pi, kappa, &v2).unwrap();
        prop_assert!(diff(&a, &b) <= x * d + 1e-12);
        let (ta, _) = apply_t_kappa(&mdp, kappa, &v1, 1e-12).unwrap();
        let (tb, _) = apply_t_kappa(&mdp, kappa, &v2, 1e-12).unwrap();
        prop_assert!(diff(&ta, &tb) <= x * d + 1e-9);
    }

    #[test]
    fn kappa_greedy_attains_t_kappa_everywhere(
        (mdp, _, _, v, _) in instance(),
        kappa in 0.0..=1.0f64,
    ) {
        let (tv, _) = apply_t_kappa(&mdp, kappa, &v, 1e-12).unwrap();
        let pi = kappa_greedy_policy(&mdp, &v, kappa, 1e-12).unwrap();
        let attained = apply_t_kappa_pi(&mdp, &pi, kappa, &v).unwrap();
        for s in 0..mdp.n_states() {
            prop_assert!((attained[s] - tv[s]).abs() <= 1e-9);
        }
        if kappa == 0.0 {
            let (tv0, _) = apply_optimal_bellman(&mdp, &v).unwrap();
            prop_assert!(diff(&tv, &tv0) <= 1e-9);
        }
    }

    #[test]
    fn greedy_policies_strictly_improve(
        (mdp, pi, _, _, _) in instance(),
        kappa in 0.0..=1.0f64,
        h in 1usize..=4,
    ) {
        let v = evaluate_policy(&mdp, &pi).unwrap();
        let (v_star, _) = solve_optimal_exact(&mdp).unwrap();
        let suboptimal = diff(&v, &v_star) > 1e-6;
        for next in [
            kappa_greedy_policy(&mdp, &v, kappa, 1e-12).unwrap(),
            h_greedy_policy(&mdp, &v, h).unwrap(),
        ] {
            let vn = evaluate_policy(&mdp, &next).unwrap();
            let gains: Vec<f64> = (0..mdp.n_states()).map(|s| vn[s] - v[s]).collect();
            prop_assert!(gains.iter().all(|g| *g >= -1e-9));
            if suboptimal {
                prop_assert!(gains.iter().any(|g| *g > 1e-12));
            }
        }
    }

    #[test]
    fn q_kappa_at_zero_is_policy_q((mdp, pi, _, _, _) in instance()) {
        let a = q_kappa(&mdp, &pi, 0.0, 1e-12).unwrap();
        let b = q_of_policy(&mdp, &pi).unwrap();
        prop_assert!(a.max_abs_diff(&b) <= 1e-9);
    }

    #[test]
    fn one_step_soft_updates_always_improve(
        (mdp, pi, _, _, _) in instance(),
        alpha in 0.01..=1.0f64,
    ) {
        let rep = improvement_report(&mdp, &pi, alpha, GreedyMode::Kappa(0.0), 1e-12).unwrap();
        prop_assert!(rep.improved_everywhere, "min delta {}", rep.min_delta());
    }

    #[test]
    fn soft_updates_improve_when_step_reaches_kappa(
        (mdp, pi, _, _, _) in instance(),
        kappa in 0.0..=1.0f64,
        u in 0.0..=1.0f64,
    ) {
        let alpha = (kappa + u * (1.0 - kappa)).max(1e-6);
        let rep = improvement_report(&mdp, &pi, alpha, GreedyMode::Kappa(kappa), 1e-12).unwrap();
        prop_assert!(rep.improved_everywhere, "min delta {}", rep.min_delta());
    }

    #[test]
    fn mixtures_stay_on_the_simplex((mdp, p1, p2, _, _) in instance(), alpha in 0.0..=1.0f64) {
        let m = mix_policies(&p1, &p2, alpha).unwrap();
        for s in 0..mdp.n_states() {
            prop_assert!(m.row(s).iter().all(|p| *p >= 0.0));
            prop_assert!((m.row(s).iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn discounted_kernels_are_stochastic((mdp, pi, _, _, _) in instance(), kappa in 0.0..=1.0f64) {
        let d = d_kappa_matrix(&mdp, &pi, kappa).unwrap();
        for r in 0..mdp.n_states() {
            let row: Vec<f64> = (0..mdp.n_states()).map(|c| d[(r, c)]).collect();
            prop_assert!(row.iter().all(|x| *x >= -1e-12));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
        }
    }
}

fn online_instance() -> impl Strategy<Value = (Mdp, Vec<(usize, usize, usize)>, f64)> {
    mdp_strategy(5, 3).prop_flat_map(|mdp| {
        let (n_s, n_a) = (mdp.n_states(), mdp.n_actions());
        (Just(mdp), vec((0..n_s, 0..n_a, 0..n_s), 1..300), 0.0..=1.0f64)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn online_updates_keep_rows_stochastic_and_counts_consistent((mdp, steps, kappa) in online_instance()) {
        let mut st = OnlineState::optimistic(&mdp);
        let sched = StepSchedule::default();
        for (s, a, sp) in steps {
            let t = Transition { s, a, r: mdp.reward(s, a), s_next: sp };
            online_update(&mdp, &mut st, &t, &sched, kappa).unwrap();
            prop_assert!(st.counters_consistent());
            for x in 0..mdp.n_states() {
                prop_assert!(st.pi.row(x).iter().all(|p| (0.0..=1.0 + 1e-12).contains(p)));
                prop_assert!((st.pi.row(x).iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn kappa_one_fast_update_is_q_learning((mdp, steps, _) in online_instance()) {
        let mut st = OnlineState::new(mdp.n_states(), mdp.n_actions());
        let sched = StepSchedule::default();
        let g = mdp.gamma();
        for (s, a, sp) in steps {
            let before = st.q_kappa.clone();
            let t = Transition { s, a, r: mdp.reward(s, a), s_next: sp };
            online_update(&mdp, &mut st, &t, &sched, 1.0).unwrap();
            let step = sched.fast(st.sa_count(s, a));
            let want = before.get(s, a) + step * (t.r + g * before.max_at(sp) - before.get(s, a));
            prop_assert!((st.q_kappa.get(s, a) - want).abs() <= 1e-12);
        }
    }

    #[test]
    fn occupancy_sums_to_one(
        (mdp, mu) in mdp_strategy(6, 3).prop_flat_map(|m| { let n = m.n_states(); (Just(m), distribution_strategy(n)) }),
        kappa in 0.0..=1.0f64,
    ) {
        let (_, pi_star) = solve_optimal_exact(&mdp).unwrap();
        let d = d_pi_star_kappa(&mdp, &pi_star, kappa, &mu).unwrap();
        prop_assert!((d.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
        prop_assert!(d.iter().all(|x| *x >= -1e-12));
    }

    #[test]
    fn coefficient_ordering(
        (mdp, mu, nu) in mdp_strategy(5, 3).prop_flat_map(|m| {
            let n = m.n_states();
            (Just(m), distribution_strategy(n), distribution_strategy(n))
        }),
    ) {
        let (_, pi_star) = solve_optimal_exact(&mdp).unwrap();
        let rep = coefficient_report(&mdp, &pi_star, &mu, &nu, &[0.0, 0.5, 1.0], &[1, 2, 5], 200).unwrap();
        let s = &rep.series;
        prop_assert!(rep.c_pi_star <= s.c_pi_star_1.upper() + 1e-12);
        prop_assert!(s.c_pi_star_1.value <= s.c1.value + 1e-12);
        let c = &rep.c_seq.values;
        if c.windows(2).all(|w| w[1] >= w[0]) {
            prop_assert!(s.c1.value <= s.c2.value + 1e-12);
        }
        if c.windows(2).all(|w| w[1] <= w[0]) {
            let v = |k| s.c2k(k).unwrap().upper();
            prop_assert!(v(5) <= v(2) + 1e-12 && v(2) <= v(1) + 1e-12);
        }
        // κ = 0 recovers C^{π*}, κ = 1 recovers c(0).
        prop_assert!((rep.kappa(0.0).unwrap().c_pi_star_kappa - rep.c_pi_star).abs() <= 1e-9);
        prop_assert!((rep.kappa(1.0).unwrap().c_pi_star_kappa - rep.c0()).abs() <= 1e-9);
    }
}

#[test]
fn q_function_shape_is_checked() {
    let mdp = generate_garnet(&GarnetSpec::new(3, 2, 0)).unwrap();
    let mut st = OnlineState::new(3, 2);
    st.q = QFunction::zeros(2, 2);
    let t = Transition { s: 0, a: 0, r: 0.0, s_next: 1 };
    assert!(online_update(&mdp, &mut st, &t, &StepSchedule::default(), 0.5).is_err());
}

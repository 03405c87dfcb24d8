//! Library results against independent computations: plain loops, power
//! series, exhaustive policy enumeration and long value iteration.

#![allow(clippy::needless_range_loop, clippy::manual_memcpy)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xpi_core::approx::{approx_kappa_greedy, loss, CorruptionMode, GreedyOracleConfig};
use xpi_core::concentrability::{c_pi_star_seq, c_seq, d_kappa_matrix, series_coefficients};
use xpi_core::garnet::{generate_garnet, random_policy, GarnetSpec};
use xpi_core::kappa::{apply_t_kappa, exact_kappa_pi, h_greedy_policy, kappa_greedy_policy, q_kappa, xi};
use xpi_core::mdp::{
    apply_bellman, apply_optimal_bellman, evaluate_policy, q_of_policy, solve_optimal, solve_optimal_exact, Mdp,
    Policy, QFunction, StateDistribution, ValueFunction,
};
use xpi_core::mixture::{hesitant_policy, tightrope_mdp, tightrope_optimal_policy, S0, S1, S2, S3};
use xpi_core::online::{apply_h, online_update, sample_step, OnlineState, StepSchedule, Transition};

/// `Σ_t β^t (P^π)^t r` by repeated naive matrix-vector products, with
/// per-state reward `r` and kernel `p[s][s']`, until `β^t` is negligible.
fn power_series(p: &[Vec<f64>], r: &[f64], beta: f64) -> Vec<f64> {
    let n = r.len();
    let mut term = r.to_vec();
    let mut total = r.to_vec();
    let mut scale = 1.0;
    while scale > 1e-17 {
        let mut next = vec![0.0; n];
        for s in 0..n {
            for sp in 0..n {
                next[s] += p[s][sp] * term[sp];
            }
        }
        scale *= beta;
        for s in 0..n {
            term[s] = next[s];
            total[s] += scale * next[s];
        }
    }
    total
}

fn kernel(mdp: &Mdp, pi: &Policy) -> Vec<Vec<f64>> {
    (0..mdp.n_states())
        .map(|s| {
            let mut row = vec![0.0; mdp.n_states()];
            for a in 0..mdp.n_actions() {
                for (sp, p) in mdp.transition(s, a).iter().enumerate() {
                    row[sp] += pi.prob(s, a) * p;
                }
            }
            row
        })
        .collect()
}

fn reward(mdp: &Mdp, pi: &Policy) -> Vec<f64> {
    (0..mdp.n_states())
        .map(|s| (0..mdp.n_actions()).map(|a| pi.prob(s, a) * mdp.reward(s, a)).sum())
        .collect()
}

fn series_value(mdp: &Mdp, pi: &Policy) -> Vec<f64> {
    power_series(&kernel(mdp, pi), &reward(mdp, pi), mdp.gamma())
}

fn all_deterministic(n_s: usize, n_a: usize) -> Vec<Policy> {
    let total = n_a.pow(n_s as u32);
    (0..total)
        .map(|mut code| {
            let actions: Vec<usize> = (0..n_s)
                .map(|_| {
                    let a = code % n_a;
                    code /= n_a;
                    a
                })
                .collect();
            Policy::deterministic(n_a, &actions).unwrap()
        })
        .collect()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// The κ-surrogate as an explicit MDP: reward `r + (1-κ)γPv`, discount `κγ`.
fn surrogate_value(mdp: &Mdp, pi: &Policy, kappa: f64, v: &[f64]) -> Vec<f64> {
    let p = kernel(mdp, pi);
    let r: Vec<f64> = (0..mdp.n_states())
        .map(|s| {
            (0..mdp.n_actions())
                .map(|a| {
                    let ev: f64 = mdp.transition(s, a).iter().zip(v).map(|(p, x)| p * x).sum();
                    pi.prob(s, a) * (mdp.reward(s, a) + (1.0 - kappa) * mdp.gamma() * ev)
                })
                .sum()
        })
        .collect();
    power_series(&p, &r, kappa * mdp.gamma())
}

#[test]
fn tightrope_hesitant_value_matches_power_series() {
    let mdp = tightrope_mdp(2.0, 0.9).unwrap();
    let v = evaluate_policy(&mdp, &hesitant_policy()).unwrap();
    let oracle = series_value(&mdp, &hesitant_policy());
    assert!(max_diff(v.as_slice(), &oracle) < 1e-9);
    for (s, want) in [(S0, 0.0), (S1, -18.0), (S2, 10.0), (S3, -20.0)] {
        assert!((v[s] - want).abs() < 1e-9, "state {s}: {}", v[s]);
    }
}

#[test]
fn evaluation_matches_power_series_on_random_mdps() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for seed in 0..30 {
        let mdp = generate_garnet(&GarnetSpec::new(5, 3, seed)).unwrap();
        let pi = random_policy(5, 3, &mut rng);
        let v = evaluate_policy(&mdp, &pi).unwrap();
        assert!(max_diff(v.as_slice(), &series_value(&mdp, &pi)) < 1e-9);
    }
}

#[test]
fn tightrope_q_at_s1_a1() {
    let mdp = tightrope_mdp(2.0, 0.9).unwrap();
    let q = q_of_policy(&mdp, &hesitant_policy()).unwrap();
    assert!((q.get(S1, 1) - 9.0).abs() < 1e-9);
    let v = evaluate_policy(&mdp, &hesitant_policy()).unwrap();
    for s in 0..4 {
        assert!((q.policy_average(&hesitant_policy(), s) - v[s]).abs() < 1e-9);
    }
}

#[test]
fn bellman_matches_naive_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for seed in 0..20 {
        let mdp = generate_garnet(&GarnetSpec::new(3, 2, seed)).unwrap();
        let pi = random_policy(3, 2, &mut rng);
        let v: Vec<f64> = (0..3).map(|_| rng.random_range(-5.0..5.0)).collect();
        let got = apply_bellman(&mdp, &pi, &ValueFunction::new(v.clone())).unwrap();
        let mut want = vec![0.0; 3];
        for (s, w) in want.iter_mut().enumerate() {
            for a in 0..2 {
                let mut ev = 0.0;
                for sp in 0..3 {
                    ev += mdp.transition(s, a)[sp] * v[sp];
                }
                *w += pi.prob(s, a) * (mdp.reward(s, a) + mdp.gamma() * ev);
            }
        }
        assert!(max_diff(got.as_slice(), &want) < 1e-12);
    }
}

#[test]
fn greedy_on_hesitant_value_takes_a1_at_s1() {
    let mdp = tightrope_mdp(2.0, 0.9).unwrap();
    let v = evaluate_policy(&mdp, &hesitant_policy()).unwrap();
    let (_, pi) = apply_optimal_bellman(&mdp, &v).unwrap();
    // 0 + 0.9·10 against 0 + 0.9·(−20).
    assert_eq!(pi.mode_action(S1), 1);
}

#[test]
fn solve_optimal_matches_policy_enumeration() {
    let mut cases = vec![tightrope_mdp(2.0, 0.9).unwrap()];
    for seed in 0..40 {
        let n_s = 2 + (seed % 3) as usize;
        let n_a = 1 + (seed % 2) as usize;
        cases.push(generate_garnet(&GarnetSpec::new(n_s, n_a, seed)).unwrap());
    }
    for mdp in &cases {
        let mut best = vec![f64::NEG_INFINITY; mdp.n_states()];
        for pi in all_deterministic(mdp.n_states(), mdp.n_actions()) {
            for (b, x) in best.iter_mut().zip(series_value(mdp, &pi)) {
                *b = b.max(x);
            }
        }
        let (v, _) = solve_optimal(mdp, 1e-10).unwrap();
        assert!(max_diff(v.as_slice(), &best) < 1e-8);
        let (ve, pe) = solve_optimal_exact(mdp).unwrap();
        assert!(max_diff(ve.as_slice(), &best) < 1e-9);
        assert!(max_diff(&series_value(mdp, &pe), &best) < 1e-9);
    }
    let (v, pi) = solve_optimal_exact(&cases[0]).unwrap();
    for (s, want) in [(S0, 8.1), (S1, 9.0), (S2, 10.0), (S3, -20.0)] {
        assert!((v[s] - want).abs() < 1e-9);
    }
    assert_eq!(pi.mode_action(S0), 1);
    assert_eq!(pi.mode_action(S1), 1);
}

/// Optimal surrogate values by enumerating deterministic policies.
fn surrogate_optimum(mdp: &Mdp, kappa: f64, v: &[f64]) -> Vec<f64> {
    let mut best = vec![f64::NEG_INFINITY; mdp.n_states()];
    for pi in all_deterministic(mdp.n_states(), mdp.n_actions()) {
        for (b, x) in best.iter_mut().zip(surrogate_value(mdp, &pi, kappa, v)) {
            *b = b.max(x);
        }
    }
    best
}

#[test]
fn kappa_one_greedy_on_tightrope_is_optimal() {
    let mdp = tightrope_mdp(2.0, 0.9).unwrap();
    let v = evaluate_policy(&mdp, &hesitant_policy()).unwrap();
    let pi = kappa_greedy_policy(&mdp, &v, 1.0, 1e-12).unwrap();
    assert_eq!(pi.mode_action(S0), 1);
    assert_eq!(pi.mode_action(S1), 1);
    let best = surrogate_optimum(&mdp, 1.0, v.as_slice());
    assert!(max_diff(&surrogate_value(&mdp, &pi, 1.0, v.as_slice()), &best) < 1e-9);
}

#[test]
fn small_penalty_makes_half_kappa_greedy_optimal() {
    // c = 0.1 ≤ κ/(1−κ) = 1.
    let mdp = tightrope_mdp(0.1, 0.9).unwrap();
    let v = evaluate_policy(&mdp, &hesitant_policy()).unwrap();
    let pi = kappa_greedy_policy(&mdp, &v, 0.5, 1e-12).unwrap();
    assert_eq!(pi, tightrope_optimal_policy());
    let best = surrogate_optimum(&mdp, 0.5, v.as_slice());
    assert!(max_diff(&surrogate_value(&mdp, &pi, 0.5, v.as_slice()), &best) < 1e-9);
}

#[test]
fn t_kappa_matches_surrogate_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for seed in 0..25 {
        let mdp = generate_garnet(&GarnetSpec::new(3, 2, seed)).unwrap();
        let v: Vec<f64> = (0..3).map(|_| rng.random_range(-5.0..5.0)).collect();
        let kappa = rng.random_range(0.0..1.0);
        let (tv, pi) = apply_t_kappa(&mdp, kappa, &ValueFunction::new(v.clone()), 1e-12).unwrap();
        let best = surrogate_optimum(&mdp, kappa, &v);
        assert!(max_diff(tv.as_slice(), &best) < 1e-9);
        // The greedy policy attains the optimum in every state.
        assert!(max_diff(&surrogate_value(&mdp, &pi, kappa, &v), &best) < 1e-9);
    }
}

#[test]
fn q_kappa_matches_long_surrogate_value_iteration() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for seed in 0..10 {
        let mdp = generate_garnet(&GarnetSpec::new(3, 2, seed)).unwrap();
        let pi = random_policy(3, 2, &mut rng);
        let kappa = 0.5;
        let v_pi = series_value(&mdp, &pi);
        let (g, beta) = (mdp.gamma(), kappa * mdp.gamma());
        let mut q = [[0.0f64; 2]; 3];
        for _ in 0..10_000 {
            let vmax: Vec<f64> = q.iter().map(|row| row[0].max(row[1])).collect();
            let mut next = [[0.0; 2]; 3];
            for s in 0..3 {
                for a in 0..2 {
                    let p = mdp.transition(s, a);
                    let shaped: f64 = (0..3).map(|sp| p[sp] * v_pi[sp]).sum();
                    let cont: f64 = (0..3).map(|sp| p[sp] * vmax[sp]).sum();
                    next[s][a] = mdp.reward(s, a) + (1.0 - kappa) * g * shaped + beta * cont;
                }
            }
            q = next;
        }
        let got = q_kappa(&mdp, &pi, kappa, 1e-12).unwrap();
        for s in 0..3 {
            for a in 0..2 {
                assert!((got.get(s, a) - q[s][a]).abs() < 1e-8);
            }
        }
    }
}

#[test]
fn two_step_greedy_on_tightrope_by_tree_expansion() {
    let mdp = tightrope_mdp(5.0, 0.9).unwrap();
    let v = evaluate_policy(&mdp, &hesitant_policy()).unwrap();
    let g = mdp.gamma();
    let backup = |s: usize, a: usize, leaf: &dyn Fn(usize) -> f64| -> f64 {
        mdp.reward(s, a) + g * mdp.transition(s, a).iter().enumerate().map(|(sp, p)| p * leaf(sp)).sum::<f64>()
    };
    let one = |s: usize| (0..2).map(|a| backup(s, a, &|sp| v[sp])).fold(f64::NEG_INFINITY, f64::max);
    let pi = h_greedy_policy(&mdp, &v, 2).unwrap();
    for s in 0..4 {
        let scores: Vec<f64> = (0..2).map(|a| backup(s, a, &one)).collect();
        let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!((scores[pi.mode_action(s)] - best).abs() < 1e-12);
    }
    assert_eq!(pi.mode_action(S0), 1);
    assert_eq!(pi.mode_action(S1), 1);
}

#[test]
fn kappa_pi_error_decays_at_xi_rate() {
    let mdp = generate_garnet(&GarnetSpec::new(6, 3, 7)).unwrap();
    let (v_star, _) = solve_optimal_exact(&mdp).unwrap();
    let kappa = 0.5;
    let out = exact_kappa_pi(&mdp, kappa, 1e-12, 200, Some(&v_star)).unwrap();
    let errs: Vec<f64> = out.records.iter().map(|r| r.error_to_optimal.unwrap()).collect();
    let rate = xi(mdp.gamma(), kappa).unwrap() + 0.05;
    let mut prev = evaluate_policy(&mdp, &Policy::uniform(6, 3)).unwrap().max_abs_diff(&v_star);
    for e in errs {
        if prev > 1e-10 {
            assert!(e <= rate * prev + 1e-12, "{e} after {prev}");
        }
        prev = e;
    }
}

#[test]
fn sampling_frequencies_match_product_distribution() {
    let mdp = generate_garnet(&GarnetSpec::new(3, 2, 4).with_branching(3)).unwrap();
    let nu = StateDistribution::new(vec![0.2, 0.3, 0.5]).unwrap();
    let pi = Policy::new(vec![vec![0.3, 0.7], vec![0.5, 0.5], vec![0.9, 0.1]]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let n = 100_000;
    let mut counts = [0usize; 18];
    for _ in 0..n {
        let t = sample_step(&mdp, &nu, &pi, &mut rng).unwrap();
        assert_eq!(t.r, mdp.reward(t.s, t.a));
        counts[(t.s * 2 + t.a) * 3 + t.s_next] += 1;
    }
    for s in 0..3 {
        for a in 0..2 {
            for sp in 0..3 {
                let p = nu.as_slice()[s] * pi.prob(s, a) * mdp.transition(s, a)[sp];
                let sd = (n as f64 * p * (1.0 - p)).sqrt();
                let got = counts[(s * 2 + a) * 3 + sp] as f64;
                assert!((got - n as f64 * p).abs() <= 3.0 * sd + 1e-9, "cell ({s},{a},{sp})");
            }
        }
    }
}

#[test]
fn averaged_update_direction_is_h_minus_identity() {
    let mdp = generate_garnet(&GarnetSpec::new(4, 2, 12).with_branching(4)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pi = random_policy(4, 2, &mut rng);
    let rand_q = |rng: &mut ChaCha8Rng| {
        QFunction::from_flat(4, 2, (0..8).map(|_| rng.random_range(-3.0..3.0)).collect()).unwrap()
    };
    let (q, qk) = (rand_q(&mut rng), rand_q(&mut rng));
    let kappa = 0.4;
    let (h1, h2) = apply_h(&mdp, &pi, kappa, &q, &qk).unwrap();
    let sched = StepSchedule::default();
    for s in 0..4 {
        for a in 0..2 {
            let (mut d1, mut d2) = (0.0, 0.0);
            for (sp, p) in mdp.transition(s, a).iter().enumerate() {
                let mut st = OnlineState::new(4, 2);
                st.q = q.clone();
                st.q_kappa = qk.clone();
                st.pi = pi.clone();
                let t = Transition { s, a, r: mdp.reward(s, a), s_next: sp };
                // First visit: μ_f(1) = 1, so the move equals the full δ.
                online_update(&mdp, &mut st, &t, &sched, kappa).unwrap();
                d1 += p * (st.q.get(s, a) - q.get(s, a));
                d2 += p * (st.q_kappa.get(s, a) - qk.get(s, a));
            }
            assert!((d1 - (h1.get(s, a) - q.get(s, a))).abs() < 1e-12);
            assert!((d2 - (h2.get(s, a) - qk.get(s, a))).abs() < 1e-12);
        }
    }
}

#[test]
fn discounted_kernel_rows_match_neumann_series() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for seed in 0..10 {
        let mdp = generate_garnet(&GarnetSpec::new(4, 2, seed)).unwrap();
        let pi = random_policy(4, 2, &mut rng);
        let kappa = rng.random_range(0.0..1.0);
        let d = d_kappa_matrix(&mdp, &pi, kappa).unwrap();
        let p = kernel(&mdp, &pi);
        let beta = kappa * mdp.gamma();
        for col in 0..4 {
            let e: Vec<f64> = (0..4).map(|i| if i == col { 1.0 } else { 0.0 }).collect();
            let series = power_series(&p, &e, beta);
            for row in 0..4 {
                assert!((d[(row, col)] - (1.0 - beta) * series[row]).abs() < 1e-10);
            }
        }
        for row in 0..4 {
            assert!(((0..4).map(|c| d[(row, c)]).sum::<f64>() - 1.0).abs() < 1e-10);
        }
    }
}

#[test]
fn two_state_chain_ratios_by_hand() {
    // s0 → s1 surely, s1 absorbing; one action.
    let mdp = Mdp::new(0.9, vec![vec![0.0], vec![1.0]], vec![vec![vec![0.0, 1.0]], vec![vec![0.0, 1.0]]]).unwrap();
    let mu = StateDistribution::new(vec![0.6, 0.4]).unwrap();
    let nu = StateDistribution::uniform(2);
    let c = c_seq(&mdp, &mu, &nu, 5).unwrap();
    // μP^0 = (0.6, 0.4), then (0, 1) forever.
    assert!((c.raw[0] - 1.2).abs() < 1e-15);
    for i in 1..=5 {
        assert!((c.raw[i] - 2.0).abs() < 1e-15);
    }
    let cps = c_pi_star_seq(&mdp, &Policy::uniform(2, 1), &mu, &nu, 5).unwrap();
    assert_eq!(cps.raw, c.raw);
}

#[test]
fn optimal_policy_ratios_never_exceed_the_sup_over_sequences() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for seed in 0..20 {
        let mdp = generate_garnet(&GarnetSpec::new(5, 3, seed)).unwrap();
        let (_, pi_star) = solve_optimal_exact(&mdp).unwrap();
        let w: Vec<f64> = (0..5).map(|_| rng.random::<f64>() + 0.1).collect();
        let sum: f64 = w.iter().sum();
        let nu = StateDistribution::new(w.iter().map(|x| x / sum).collect()).unwrap();
        let mu = StateDistribution::uniform(5);
        let c = c_seq(&mdp, &mu, &nu, 30).unwrap();
        let cps = c_pi_star_seq(&mdp, &pi_star, &mu, &nu, 30).unwrap();
        for (a, b) in cps.raw.iter().zip(&c.raw) {
            assert!(a <= &(b + 1e-12));
        }
    }
}

#[test]
fn geometric_ratio_sequence_has_closed_form_series() {
    let (gamma, rho) = (0.9_f64, 1.05_f64);
    let c: Vec<f64> = (0..3000).map(|i| rho.powi(i)).collect();
    let s = series_coefficients(&c, &c, gamma, &[0, 3], None).unwrap();
    let x = gamma * rho;
    let c1 = (1.0 - gamma) / (1.0 - x);
    let c2k = |k: i32| (1.0 - gamma).powi(2) * rho.powi(k) / (1.0 - x).powi(2);
    assert!((s.c1.value - c1).abs() < 1e-10);
    assert!((s.c2.value - c2k(0)).abs() < 1e-10);
    assert!((s.c2k(3).unwrap().value - c2k(3)).abs() < 1e-10);
    assert!((s.c_pi_star_1.value - c1).abs() < 1e-10);
}

#[test]
fn oracle_slack_on_tightrope_by_direct_enumeration() {
    let mdp = tightrope_mdp(2.0, 0.9).unwrap();
    let v = evaluate_policy(&mdp, &hesitant_policy()).unwrap();
    let nu = StateDistribution::uniform(4);
    let cfg = GreedyOracleConfig::new(100.0, nu, CorruptionMode::WorstStateSwap, 0).unwrap();
    let out = approx_kappa_greedy(&mdp, &v, 1.0, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert_ne!(out.policy.mode_action(S1), tightrope_optimal_policy().mode_action(S1));
    // At κ = 1 the surrogate is the MDP itself: T_κ v = v*, T_κ^π v = v^π.
    let (v_star, _) = solve_optimal_exact(&mdp).unwrap();
    let v_pi = series_value(&mdp, &out.policy);
    let slack: f64 = (0..4).map(|s| 0.25 * (v_star[s] - v_pi[s])).sum();
    assert!((out.achieved_slack - slack).abs() < 1e-9);
    assert!(out.achieved_slack <= 100.0);
}

#[test]
fn uniform_loss_on_tightrope() {
    let mdp = tightrope_mdp(2.0, 0.9).unwrap();
    let (v_star, _) = solve_optimal_exact(&mdp).unwrap();
    let v = evaluate_policy(&mdp, &hesitant_policy()).unwrap();
    let l = loss(&StateDistribution::uniform(4), &v_star, &v).unwrap();
    assert!((l - 8.775).abs() < 1e-9);
}

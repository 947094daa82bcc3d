mod common;

use cdmfg::digraphon::{ColorWeightSchedule, KDigraphon};
use cdmfg::environments::{Sis, SisParams};
use cdmfg::meanfield::{forward, AgentPolicy, IndexGrid, MeanFieldEnsemble};
use cdmfg::solver::{exploitability, q_values};
use common::*;

fn sis_t2() -> Sis {
    Sis::new(SisParams { horizon: 2, ..SisParams::default() }, false).unwrap()
}

#[test]
fn forward_matches_brute_force_recursion() {
    let w = KDigraphon::combined_uniform_ranked();
    let sched = ColorWeightSchedule::linear(3);
    for horizon in 1..=3 {
        for m_len in 1..=3 {
            let toy = Toy::new(horizon);
            let table = varied_policy(m_len, horizon, 3, 2, horizon as u64 + 5 * m_len as u64);
            let expected = oracle_forward_toy(&toy, m_len, &table);
            let got = forward(&toy, &w, &sched, &to_ensemble(&table)).unwrap();
            for t in 0..=horizon {
                for m in 0..m_len {
                    for x in 0..3 {
                        let (a, b) = (got.get(t, m)[x], expected[t][m][x]);
                        assert!((a - b).abs() <= 1e-12, "T={horizon} M={m_len} t={t} m={m} x={x}: {a} vs {b}");
                    }
                }
            }
        }
    }
}

#[test]
fn q_values_match_trajectory_enumeration() {
    let env = sis_t2();
    let oracle = SisOracle { horizon: 2 };
    let w = KDigraphon::rotated_uniform();
    let sched = ColorWeightSchedule::linear(2);
    let m_len = 3;
    let table = varied_policy(m_len, 2, 2, 2, 1);
    let mu_table = oracle.forward(m_len, &table);
    let mu = forward(&env, &w, &sched, &to_ensemble(&table)).unwrap();

    for alpha in [0.0, 0.1, 0.5, 0.77, 1.0] {
        let w_in: Vec<f64> = (0..2).map(|t| oracle.w_in(&mu_table[t], alpha)).collect();
        for pi in varied_policy(2, 2, 2, 2, 9) {
            let flat: Vec<f64> = pi.iter().flatten().flatten().copied().collect();
            let policy = AgentPolicy::from_probs(2, 2, 2, flat).unwrap();
            let (q, j) = q_values(&env, &w, &sched, &mu, alpha, &policy).unwrap();
            for t in 0..2 {
                for x in 0..2 {
                    for u in 0..2 {
                        let expected = oracle.enumerate_q(t, x, u, &w_in, &pi);
                        assert!((q.get(t, x, u) - expected).abs() <= 1e-12, "alpha={alpha} t={t} x={x} u={u}");
                    }
                }
            }
            assert!((j - oracle.value(&w_in, &pi)).abs() <= 1e-12);
        }
    }
}

#[test]
fn exploitability_matches_exhaustive_policy_search() {
    let env = sis_t2();
    let oracle = SisOracle { horizon: 2 };
    let w = KDigraphon::rotated_uniform();
    let sched = ColorWeightSchedule::linear(2);
    let m_len = 10;
    let table = varied_policy(m_len, 2, 2, 2, 3);
    let mu_table = oracle.forward(m_len, &table);
    let candidates = oracle.deterministic_policies();

    let mut gap = 0.0;
    for (m, pi) in table.iter().enumerate() {
        let alpha = (m as f64 + 0.5) / m_len as f64;
        let w_in: Vec<f64> = (0..2).map(|t| oracle.w_in(&mu_table[t], alpha)).collect();
        let best = candidates
            .iter()
            .map(|c| oracle.value(&w_in, c))
            .fold(f64::NEG_INFINITY, f64::max);
        gap += best - oracle.value(&w_in, pi);
    }
    gap /= m_len as f64;
    let got = exploitability(&env, &w, &sched, &to_ensemble(&table)).unwrap();
    assert!((got - gap).abs() <= 1e-12, "{got} vs {gap}");
    assert!(got > 0.0);
}

#[test]
fn neighborhood_of_uniform_meanfield_has_closed_form() {
    // Incoming infected mass under W = 1 - x(1 - y) and mu(I) = 1/2 at every
    // index: (1/2) * int_0^1 (1 - x(1 - a)) dx = (1/2)(1 - (1 - a)/2). The
    // midpoint rule is exact for integrands linear in x.
    let w = KDigraphon::rotated_uniform();
    let sched = ColorWeightSchedule::linear(2);
    let mu = MeanFieldEnsemble::constant(IndexGrid::new(7).unwrap(), 3, &[0.5, 0.5]);
    for alpha in [0.0, 0.3, 1.0] {
        let path = cdmfg::meanfield::neighborhood_path(&w, &sched, &mu, alpha);
        let expected = 0.5 * (1.0 - (1.0 - alpha) / 2.0);
        assert!((path[0].weighted_in()[1] - expected).abs() < 1e-14);
    }
}

//! Reference implementations written independently of the library code paths:
//! plain nested loops over explicit formulas, no shared helpers.
#![allow(dead_code)]

use cdmfg::environments::{Environment, NeighborhoodAggregate};
use cdmfg::Result;

/// Closed-form kernels of the combined uniform / ranked scenario, colors 1..=3.
pub fn combined_kernels(x: f64, y: f64) -> [f64; 3] {
    let unif = 1.0 - x * (1.0 - y);
    let rank = 1.0 - x.max(1.0 - y);
    [1.0 - 0.5 * unif - 0.5 * rank, 0.5 * unif, 0.5 * rank]
}

pub fn rotated_kernels(x: f64, y: f64) -> [f64; 2] {
    let w = 1.0 - x * (1.0 - y);
    [1.0 - w, w]
}

/// Weighted incoming and outgoing measures of `alpha` by midpoint
/// quadrature: `sum_h c_h (1/M) sum_m W^h(., .) mu[m]`.
pub fn oracle_weighted<const K: usize>(
    kernels: fn(f64, f64) -> [f64; K],
    weights: &[f64; K],
    mu_t: &[Vec<f64>],
    alpha: f64,
) -> (Vec<f64>, Vec<f64>) {
    let m_len = mu_t.len();
    let nx = mu_t[0].len();
    let mut w_in = vec![0.0; nx];
    let mut w_out = vec![0.0; nx];
    for (m, mu) in mu_t.iter().enumerate() {
        let beta = (m as f64 + 0.5) / m_len as f64;
        let k_out = kernels(alpha, beta);
        let k_in = kernels(beta, alpha);
        for h in 0..K {
            for x in 0..nx {
                w_out[x] += weights[h] * k_out[h] * mu[x] / m_len as f64;
                w_in[x] += weights[h] * k_in[h] * mu[x] / m_len as f64;
            }
        }
    }
    (w_in, w_out)
}

/// A three-state, two-action game whose dynamics read both weighted
/// measures and the time index.
pub struct Toy {
    pub horizon: usize,
    pub mu0: Vec<f64>,
    states: Vec<String>,
    actions: Vec<String>,
}

impl Toy {
    pub fn new(horizon: usize) -> Self {
        Self {
            horizon,
            mu0: vec![0.5, 0.3, 0.2],
            states: vec!["a".into(), "b".into(), "c".into()],
            actions: vec!["l".into(), "r".into()],
        }
    }
}

pub fn toy_row(x: usize, u: usize, w_in: &[f64], w_out: &[f64], t: usize) -> [f64; 3] {
    let s = (0.4 * w_in[2] + 0.25 * w_out[0] + 0.05 * t as f64).min(1.0);
    let base = match (x, u) {
        (0, 0) => [0.7, 0.2, 0.1],
        (0, _) => [0.1, 0.6, 0.3],
        (1, 0) => [0.3, 0.3, 0.4],
        (1, _) => [0.0, 0.5, 0.5],
        (_, 0) => [0.2, 0.0, 0.8],
        _ => [0.6, 0.3, 0.1],
    };
    let pull = [0.0, 0.0, 1.0];
    [0, 1, 2].map(|i| (1.0 - s) * base[i] + s * pull[i])
}

pub fn toy_reward(x: usize, u: usize, w_in: &[f64], w_out: &[f64]) -> f64 {
    [1.0, 0.0, -1.0][x] - 0.3 * u as f64 - w_in[x] + 0.5 * w_out[1]
}

impl Environment for Toy {
    fn name(&self) -> &str {
        "toy"
    }
    fn state_labels(&self) -> &[String] {
        &self.states
    }
    fn action_labels(&self) -> &[String] {
        &self.actions
    }
    fn horizon(&self) -> usize {
        self.horizon
    }
    fn mu0(&self) -> &[f64] {
        &self.mu0
    }
    fn transition(&self, x: usize, u: usize, agg: &NeighborhoodAggregate, out: &mut [f64]) -> Result<()> {
        out.copy_from_slice(&toy_row(x, u, agg.weighted_in(), agg.weighted_out(), agg.t()));
        Ok(())
    }
    fn reward(&self, x: usize, u: usize, agg: &NeighborhoodAggregate) -> f64 {
        toy_reward(x, u, agg.weighted_in(), agg.weighted_out())
    }
}

/// `policy[m][t][x][u]`.
pub type TablePolicy = Vec<Vec<Vec<Vec<f64>>>>;

/// Brute-force forward recursion for [`Toy`] on the combined scenario with
/// weights `c_h = h - 1`. Returns `mu[t][m][x]`.
pub fn oracle_forward_toy(toy: &Toy, m_len: usize, policy: &TablePolicy) -> Vec<Vec<Vec<f64>>> {
    let weights = [0.0, 1.0, 2.0];
    let mut mu = vec![vec![toy.mu0.clone(); m_len]];
    for t in 0..toy.horizon {
        let mut next = vec![vec![0.0; 3]; m_len];
        for m in 0..m_len {
            let alpha = (m as f64 + 0.5) / m_len as f64;
            let (w_in, w_out) = oracle_weighted(combined_kernels, &weights, &mu[t], alpha);
            for x in 0..3 {
                for u in 0..2 {
                    let row = toy_row(x, u, &w_in, &w_out, t);
                    for y in 0..3 {
                        next[m][y] += mu[t][m][x] * policy[m][t][x][u] * row[y];
                    }
                }
            }
        }
        mu.push(next);
    }
    mu
}

/// SIS with the default constants and weights `c = (0, 1)` on the rotated
/// uniform digraphon.
pub struct SisOracle {
    pub horizon: usize,
}

impl SisOracle {
    pub fn infection(&self, w_in_i: f64, u: usize) -> f64 {
        if u == 0 {
            (0.8 * w_in_i).clamp(0.0, 1.0)
        } else {
            0.0
        }
    }

    pub fn row(&self, x: usize, u: usize, w_in_i: f64) -> [f64; 2] {
        if x == 0 {
            let p = self.infection(w_in_i, u);
            [1.0 - p, p]
        } else {
            [0.2, 0.8]
        }
    }

    pub fn reward(&self, x: usize, u: usize) -> f64 {
        -2.0 * x as f64 - 0.5 * u as f64
    }

    /// `mu[t][m][x]` for a table policy.
    pub fn forward(&self, m_len: usize, policy: &TablePolicy) -> Vec<Vec<Vec<f64>>> {
        let mut mu = vec![vec![vec![0.5, 0.5]; m_len]];
        for t in 0..self.horizon {
            let mut next = vec![vec![0.0; 2]; m_len];
            for m in 0..m_len {
                let alpha = (m as f64 + 0.5) / m_len as f64;
                let w_in = self.w_in(&mu[t], alpha);
                for x in 0..2 {
                    for u in 0..2 {
                        let row = self.row(x, u, w_in);
                        for y in 0..2 {
                            next[m][y] += mu[t][m][x] * policy[m][t][x][u] * row[y];
                        }
                    }
                }
            }
            mu.push(next);
        }
        mu
    }

    pub fn w_in(&self, mu_t: &[Vec<f64>], alpha: f64) -> f64 {
        oracle_weighted(rotated_kernels, &[0.0, 1.0], mu_t, alpha).0[1]
    }

    /// Expected return from `(t, x)` after taking `u`, by enumerating every
    /// continuation trajectory. `w_in[t]` is the infected incoming mass.
    pub fn enumerate_q(&self, t: usize, x: usize, u: usize, w_in: &[f64], pi: &[Vec<Vec<f64>>]) -> f64 {
        let mut total = self.reward(x, u);
        if t + 1 == self.horizon {
            return total;
        }
        let row = self.row(x, u, w_in[t]);
        for y in 0..2 {
            for v in 0..2 {
                let p = row[y] * pi[t + 1][y][v];
                if p > 0.0 {
                    total += p * self.enumerate_q(t + 1, y, v, w_in, pi);
                }
            }
        }
        total
    }

    pub fn value(&self, w_in: &[f64], pi: &[Vec<Vec<f64>>]) -> f64 {
        let mut j = 0.0;
        for x in 0..2 {
            for u in 0..2 {
                j += 0.5 * pi[0][x][u] * self.enumerate_q(0, x, u, w_in, pi);
            }
        }
        j
    }

    /// All `2^(T |X|)` deterministic Markov policies.
    pub fn deterministic_policies(&self) -> Vec<Vec<Vec<Vec<f64>>>> {
        let cells = self.horizon * 2;
        (0..1usize << cells)
            .map(|bits| {
                (0..self.horizon)
                    .map(|t| {
                        (0..2)
                            .map(|x| {
                                let u = (bits >> (t * 2 + x)) & 1;
                                if u == 0 { vec![1.0, 0.0] } else { vec![0.0, 1.0] }
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect()
    }
}

/// A deterministic-seeded table policy in the interior of the simplex.
pub fn varied_policy(m_len: usize, horizon: usize, nx: usize, nu: usize, salt: u64) -> TablePolicy {
    (0..m_len)
        .map(|m| {
            (0..horizon)
                .map(|t| {
                    (0..nx)
                        .map(|x| {
                            let raw: Vec<f64> = (0..nu)
                                .map(|u| {
                                    let h = (m as u64 * 31 + t as u64 * 17 + x as u64 * 7 + u as u64 * 3 + salt) % 11;
                                    1.0 + h as f64
                                })
                                .collect();
                            let s: f64 = raw.iter().sum();
                            raw.into_iter().map(|r| r / s).collect()
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

pub fn to_ensemble(policy: &TablePolicy) -> cdmfg::meanfield::PolicyEnsemble {
    use cdmfg::meanfield::{AgentPolicy, IndexGrid, PolicyEnsemble};
    let horizon = policy[0].len();
    let nx = policy[0][0].len();
    let nu = policy[0][0][0].len();
    let pols = policy
        .iter()
        .map(|p| {
            let flat: Vec<f64> = p.iter().flatten().flatten().copied().collect();
            AgentPolicy::from_probs(horizon, nx, nu, flat).unwrap()
        })
        .collect();
    PolicyEnsemble::new(IndexGrid::new(policy.len()).unwrap(), pols).unwrap()
}

//! Best responses, policy evaluation, exploitability and online mirror
//! descent on the discretized index space.
//!
//! Everything per index is computed on a [`LocalModel`]: the rewards and
//! transition rows an agent faces when the mean field is frozen. With the
//! mean field fixed the problem decouples into one finite-horizon MDP per
//! grid point, solved by backward induction.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::digraphon::{ColorWeightSchedule, KDigraphon};
use crate::environments::{Environment, NeighborhoodAggregate};
use crate::meanfield::{
    neighborhood_path, propagate, AgentPolicy, GridOperator, IndexGrid, MeanFieldEnsemble,
    PolicyEnsemble,
};
use crate::{Error, Result};

/// Finite-horizon MDP of one index under a frozen mean field.
#[derive(Clone, Debug)]
pub struct LocalModel {
    horizon: usize,
    nx: usize,
    nu: usize,
    mu0: Vec<f64>,
    rewards: Vec<f64>,
    transitions: Vec<f64>,
}

impl LocalModel {
    /// Tabulates `r(x, u, G_t)` and `P(. | x, u, G_t)` along a neighborhood path.
    pub fn build(env: &dyn Environment, path: &[NeighborhoodAggregate]) -> Result<Self> {
        let (horizon, nx, nu) = (env.horizon(), env.num_states(), env.num_actions());
        if path.len() != horizon {
            return Err(Error::arg(format!(
                "neighborhood path has {} steps, horizon is {horizon}",
                path.len()
            )));
        }
        let mut rewards = Vec::with_capacity(horizon * nx * nu);
        let mut transitions = vec![0.0; horizon * nx * nu * nx];
        for (t, agg) in path.iter().enumerate() {
            for x in 0..nx {
                for u in 0..nu {
                    rewards.push(env.reward(x, u, agg));
                    let start = ((t * nx + x) * nu + u) * nx;
                    env.transition_checked(x, u, agg, &mut transitions[start..start + nx])?;
                }
            }
        }
        Ok(Self {
            horizon,
            nx,
            nu,
            mu0: env.mu0().to_vec(),
            rewards,
            transitions,
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    #[inline]
    pub fn reward(&self, t: usize, x: usize, u: usize) -> f64 {
        self.rewards[(t * self.nx + x) * self.nu + u]
    }

    #[inline]
    pub fn transition(&self, t: usize, x: usize, u: usize) -> &[f64] {
        let start = ((t * self.nx + x) * self.nu + u) * self.nx;
        &self.transitions[start..start + self.nx]
    }

    fn continuation(&self, t: usize, x: usize, u: usize, next_value: &[f64]) -> f64 {
        self.reward(t, x, u)
            + self
                .transition(t, x, u)
                .iter()
                .zip(next_value)
                .map(|(p, v)| p * v)
                .sum::<f64>()
    }

    /// Policy evaluation: the Q-table of `policy` and its value
    /// `J = sum_x mu0(x) sum_u pi_0(u|x) Q_0(x, u)`.
    pub fn evaluate(&self, policy: &AgentPolicy) -> (QTable, f64) {
        let (nx, nu) = (self.nx, self.nu);
        let mut q = QTable::zeros(self.horizon, nx, nu);
        // V_T = 0: no terminal reward.
        let mut next_value = vec![0.0; nx];
        for t in (0..self.horizon).rev() {
            let mut value = vec![0.0; nx];
            for x in 0..nx {
                for u in 0..nu {
                    let qv = self.continuation(t, x, u, &next_value);
                    q.values[(t * nx + x) * nu + u] = qv;
                    value[x] += policy.probs(t, x)[u] * qv;
                }
            }
            next_value = value;
        }
        let j = self.mu0.iter().zip(&next_value).map(|(m, v)| m * v).sum();
        (q, j)
    }

    /// Backward induction. Ties are broken toward the lowest action index.
    pub fn optimize(&self) -> (AgentPolicy, f64) {
        let (nx, nu) = (self.nx, self.nu);
        let mut actions = vec![0usize; self.horizon * nx];
        let mut next_value = vec![0.0; nx];
        for t in (0..self.horizon).rev() {
            let mut value = vec![0.0; nx];
            for x in 0..nx {
                let mut best = (0, f64::NEG_INFINITY);
                for u in 0..nu {
                    let qv = self.continuation(t, x, u, &next_value);
                    if qv > best.1 {
                        best = (u, qv);
                    }
                }
                actions[t * nx + x] = best.0;
                value[x] = best.1;
            }
            next_value = value;
        }
        let v = self.mu0.iter().zip(&next_value).map(|(m, v)| m * v).sum();
        let policy = AgentPolicy::deterministic(self.horizon, nx, nu, &actions)
            .expect("argmax actions are in range");
        (policy, v)
    }
}

/// State-action values `Q_t(x, u)` for `t < T`.
#[derive(Clone, Debug, PartialEq)]
pub struct QTable {
    horizon: usize,
    nx: usize,
    nu: usize,
    values: Vec<f64>,
}

impl QTable {
    fn zeros(horizon: usize, nx: usize, nu: usize) -> Self {
        Self {
            horizon,
            nx,
            nu,
            values: vec![0.0; horizon * nx * nu],
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn get(&self, t: usize, x: usize, u: usize) -> f64 {
        self.values[(t * self.nx + x) * self.nu + u]
    }

    pub fn row(&self, t: usize, x: usize) -> &[f64] {
        let start = (t * self.nx + x) * self.nu;
        &self.values[start..start + self.nu]
    }

    pub fn raw(&self) -> &[f64] {
        &self.values
    }
}

/// Q-values and value of `policy` for index `alpha` against the frozen
/// mean field `mu`.
pub fn q_values(
    env: &dyn Environment,
    w: &KDigraphon,
    schedule: &ColorWeightSchedule,
    mu: &MeanFieldEnsemble,
    alpha: f64,
    policy: &AgentPolicy,
) -> Result<(QTable, f64)> {
    let model = LocalModel::build(env, &neighborhood_path(w, schedule, mu, alpha))?;
    Ok(model.evaluate(policy))
}

/// Deterministic best response of index `alpha` to `mu` and its value.
pub fn best_response(
    env: &dyn Environment,
    w: &KDigraphon,
    schedule: &ColorWeightSchedule,
    mu: &MeanFieldEnsemble,
    alpha: f64,
) -> Result<(AgentPolicy, f64)> {
    let model = LocalModel::build(env, &neighborhood_path(w, schedule, mu, alpha))?;
    Ok(model.optimize())
}

/// Per-grid-point evaluation of an ensemble against its induced mean field.
#[derive(Clone, Debug)]
pub struct EnsembleEvaluation {
    pub meanfield: MeanFieldEnsemble,
    /// `Q`-table of `pi^{alpha_m}` for every grid point.
    pub q_tables: Vec<QTable>,
    /// `J_alpha(pi^alpha)` per grid point.
    pub values: Vec<f64>,
    /// `sup_pi J_alpha(pi)` per grid point.
    pub best_values: Vec<f64>,
}

impl EnsembleEvaluation {
    /// Grid average of `V*_alpha - J_alpha(pi^alpha)`.
    pub fn exploitability(&self) -> f64 {
        let n = self.values.len() as f64;
        self.best_values
            .iter()
            .zip(&self.values)
            .map(|(b, v)| b - v)
            .sum::<f64>()
            / n
    }
}

fn evaluate_with(
    env: &dyn Environment,
    op: &GridOperator,
    schedule: &ColorWeightSchedule,
    pi: &PolicyEnsemble,
) -> Result<EnsembleEvaluation> {
    let prop = propagate(env, op, schedule, pi)?;
    let per_index: Vec<(QTable, f64, f64)> = prop
        .neighborhoods
        .par_iter()
        .enumerate()
        .map(|(m, path)| {
            let model = LocalModel::build(env, path)?;
            let (q, j) = model.evaluate(pi.policy(m));
            let (_, v) = model.optimize();
            Ok((q, j, v))
        })
        .collect::<Result<_>>()?;
    let mut q_tables = Vec::with_capacity(per_index.len());
    let mut values = Vec::with_capacity(per_index.len());
    let mut best_values = Vec::with_capacity(per_index.len());
    for (q, j, v) in per_index {
        q_tables.push(q);
        values.push(j);
        best_values.push(v);
    }
    Ok(EnsembleEvaluation {
        meanfield: prop.meanfield,
        q_tables,
        values,
        best_values,
    })
}

/// Forward-propagates `pi` and evaluates it and the best response at every
/// grid point.
pub fn evaluate_ensemble(
    env: &dyn Environment,
    w: &KDigraphon,
    schedule: &ColorWeightSchedule,
    pi: &PolicyEnsemble,
) -> Result<EnsembleEvaluation> {
    check_schedule(w, schedule)?;
    evaluate_with(env, &GridOperator::new(w, pi.grid()), schedule, pi)
}

/// Approximate exploitability: grid average of `sup J^{Psi(pi)}_alpha - J^{Psi(pi)}_alpha(pi^alpha)`.
pub fn exploitability(
    env: &dyn Environment,
    w: &KDigraphon,
    schedule: &ColorWeightSchedule,
    pi: &PolicyEnsemble,
) -> Result<f64> {
    Ok(evaluate_ensemble(env, w, schedule, pi)?.exploitability())
}

/// Best-response ensemble against `mu`, one deterministic policy per grid point.
pub fn best_response_ensemble(
    env: &dyn Environment,
    w: &KDigraphon,
    schedule: &ColorWeightSchedule,
    mu: &MeanFieldEnsemble,
) -> Result<PolicyEnsemble> {
    check_schedule(w, schedule)?;
    let grid = mu.grid();
    let policies = (0..grid.len())
        .into_par_iter()
        .map(|m| best_response(env, w, schedule, mu, grid.point(m)).map(|(p, _)| p))
        .collect::<Result<Vec<_>>>()?;
    PolicyEnsemble::new(grid, policies)
}

fn check_schedule(w: &KDigraphon, schedule: &ColorWeightSchedule) -> Result<()> {
    if w.k() != schedule.k() {
        return Err(Error::arg(format!(
            "color schedule has {} colors, digraphon '{}' has {}",
            schedule.k(),
            w.name(),
            w.k()
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OmdConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    /// Number of index grid points `M`.
    pub grid: usize,
    /// Record exploitability every this many iterations (and at the last).
    pub probe_interval: usize,
    pub seed: u64,
}

impl Default for OmdConfig {
    fn default() -> Self {
        Self {
            iterations: 100,
            learning_rate: 0.1,
            grid: 50,
            probe_interval: 1,
            seed: 0,
        }
    }
}

impl OmdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("solver.iterations must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "solver.learning_rate = {} must be positive",
                self.learning_rate
            )));
        }
        if self.grid == 0 || self.probe_interval == 0 {
            return Err(Error::Config("solver.grid and solver.probe_interval must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExploitabilityPoint {
    /// 0-based iteration; iteration 0 is the uniform initial policy.
    pub iteration: usize,
    pub exploitability: f64,
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    /// Policy of the last iteration.
    pub policy: PolicyEnsemble,
    /// Mean field induced by [`SolveReport::policy`].
    pub meanfield: MeanFieldEnsemble,
    pub exploitability_history: Vec<ExploitabilityPoint>,
    pub config: OmdConfig,
}

impl SolveReport {
    pub fn final_exploitability(&self) -> f64 {
        self.exploitability_history
            .last()
            .map(|p| p.exploitability)
            .unwrap_or(f64::NAN)
    }
}

/// Softmax of each `(t, x)` row of `scores` with log-sum-exp stabilization.
fn softmax_policy(scores: &[f64], horizon: usize, nx: usize, nu: usize) -> Result<AgentPolicy> {
    let mut probs = vec![0.0; scores.len()];
    for (row_in, row_out) in scores.chunks(nu).zip(probs.chunks_mut(nu)) {
        let max = row_in.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::Numeric(format!("non-finite mirror descent scores {row_in:?}")));
        }
        let mut total = 0.0;
        for (o, s) in row_out.iter_mut().zip(row_in) {
            *o = (s - max).exp();
            total += *o;
        }
        row_out.iter_mut().for_each(|o| *o /= total);
    }
    AgentPolicy::from_probs(horizon, nx, nu, probs)
}

/// Online mirror descent.
///
/// Starting from the uniform policy, each iteration propagates the current
/// ensemble, evaluates its Q-values under the induced mean field, adds
/// `learning_rate * Q` to cumulative scores and sets the next policy to the
/// per-`(t, x)` softmax of the scores. The exploitability of each evaluated
/// iterate is recorded; the returned policy is the last evaluated one.
pub fn solve_omd(
    env: &dyn Environment,
    w: &KDigraphon,
    schedule: &ColorWeightSchedule,
    cfg: &OmdConfig,
) -> Result<SolveReport> {
    cfg.validate()?;
    check_schedule(w, schedule)?;
    let grid = IndexGrid::new(cfg.grid)?;
    let op = GridOperator::new(w, grid);
    let (horizon, nx, nu) = (env.horizon(), env.num_states(), env.num_actions());

    let mut scores = vec![vec![0.0; horizon * nx * nu]; grid.len()];
    let mut pi = PolicyEnsemble::uniform_for(env, grid);
    let mut history = Vec::new();

    for n in 0..cfg.iterations {
        let eval = evaluate_with(env, &op, schedule, &pi)?;
        let last = n + 1 == cfg.iterations;
        if n % cfg.probe_interval == 0 || last {
            history.push(ExploitabilityPoint {
                iteration: n,
                exploitability: eval.exploitability(),
            });
        }
        if last {
            return Ok(SolveReport {
                policy: pi,
                meanfield: eval.meanfield,
                exploitability_history: history,
                config: cfg.clone(),
            });
        }
        let policies = scores
            .par_iter_mut()
            .zip(&eval.q_tables)
            .map(|(y, q)| {
                for (s, qv) in y.iter_mut().zip(q.raw()) {
                    *s += cfg.learning_rate * qv;
                }
                softmax_policy(y, horizon, nx, nu)
            })
            .collect::<Result<Vec<_>>>()?;
        pi = PolicyEnsemble::new(grid, policies)?;
    }
    unreachable!("the last iteration returns")
}

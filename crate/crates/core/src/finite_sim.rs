//! N-agent simulation on sampled colored digraphs.
//!
//! Finite agents receive the limit policy of their index via
//! [`discretize_policy`], interact through empirical neighborhood measures
//! and update synchronously. [`delta_mu`] measures how far the empirical
//! state histogram is from the index-averaged limiting mean field;
//! [`deviation_gap`] estimates how much a single agent gains by switching to
//! its mean-field best response.

use rand::Rng;
use rayon::prelude::*;

use crate::digraphon::{ColorWeightSchedule, KDigraphon, SampledColoredDigraph};
use crate::environments::{Environment, NeighborhoodAggregate};
use crate::meanfield::{forward, AgentPolicy, PolicyEnsemble};
use crate::rng::{derive_seed, sample_index, stream_rng, StreamRng};
use crate::solver::best_response;
use crate::stats;
use crate::{Error, Result};

/// Policies of `N` finite agents taken from a policy ensemble.
#[derive(Clone, Debug)]
pub struct AgentPolicySet {
    alphas: Vec<f64>,
    grid_index: Vec<usize>,
    policies: Vec<AgentPolicy>,
}

impl AgentPolicySet {
    pub fn len(&self) -> usize {
        self.policies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.policies.is_empty()
    }

    /// Index `alpha_i = i / N` of agent `i` (0-based here, so `(i + 1) / N`).
    pub fn alpha(&self, i: usize) -> f64 {
        self.alphas[i]
    }

    pub fn grid_index(&self, i: usize) -> usize {
        self.grid_index[i]
    }

    pub fn policy(&self, i: usize) -> &AgentPolicy {
        &self.policies[i]
    }

    /// The same set with agent `i` switched to `policy`.
    pub fn with_replaced(&self, i: usize, policy: AgentPolicy) -> Self {
        let mut next = self.clone();
        next.policies[i] = policy;
        next
    }
}

/// Assigns agent `i` (1-based) the ensemble policy at the grid point nearest
/// to `i / N`.
pub fn discretize_policy(pi: &PolicyEnsemble, n: usize) -> Result<AgentPolicySet> {
    if n == 0 {
        return Err(Error::arg("need at least one agent"));
    }
    let grid = pi.grid();
    let alphas: Vec<f64> = (1..=n).map(|i| i as f64 / n as f64).collect();
    let grid_index: Vec<usize> = alphas.iter().map(|&a| grid.nearest(a)).collect();
    let policies = grid_index.iter().map(|&m| pi.policy(m).clone()).collect();
    Ok(AgentPolicySet {
        alphas,
        grid_index,
        policies,
    })
}

/// Fills `out[i]` with the empirical neighborhood of agent `i`:
/// `G_{h,out}^i = (1/N) sum_j 1{i->j has color h} delta_{X_j}` and the
/// incoming analogue, followed by the schedule weights at time `t`.
fn fill_neighborhoods(
    graph: &SampledColoredDigraph,
    incoming: &[u8],
    states: &[u16],
    schedule: &ColorWeightSchedule,
    t: usize,
    out: &mut [NeighborhoodAggregate],
) {
    let n = graph.n();
    let inv = 1.0 / n as f64;
    let outgoing = graph.color_matrix();
    for (i, agg) in out.iter_mut().enumerate() {
        agg.clear(t);
        let nx = agg.num_states();
        let (g_out, g_in) = agg.raw_mut();
        let (row_out, row_in) = (&outgoing[i * n..(i + 1) * n], &incoming[i * n..(i + 1) * n]);
        for j in 0..n {
            let x = states[j] as usize;
            g_out[row_out[j] as usize * nx + x] += inv;
            g_in[row_in[j] as usize * nx + x] += inv;
        }
        agg.apply_weights(schedule);
    }
}

/// Per-agent empirical neighborhoods of a state profile at time `t`.
pub fn empirical_neighborhood(
    graph: &SampledColoredDigraph,
    states: &[usize],
    nx: usize,
    schedule: &ColorWeightSchedule,
    t: usize,
) -> Result<Vec<NeighborhoodAggregate>> {
    if states.len() != graph.n() || states.iter().any(|&x| x >= nx) {
        return Err(Error::arg("state profile does not match the graph or state space"));
    }
    if schedule.k() != graph.k() {
        return Err(Error::arg("color schedule and graph disagree on k"));
    }
    let compact: Vec<u16> = states.iter().map(|&x| x as u16).collect();
    let mut out = vec![NeighborhoodAggregate::zeros(graph.k(), nx, t); graph.n()];
    fill_neighborhoods(graph, &graph.incoming_color_matrix(), &compact, schedule, t, &mut out);
    Ok(out)
}

/// One simulated episode.
#[derive(Clone, Debug, PartialEq)]
pub struct Run {
    n: usize,
    /// `(t, i)`-ordered states for `t = 0..=T`.
    states: Vec<u16>,
    /// Realized `sum_t r(X_t^i, U_t^i, G_t^i)` per agent.
    pub returns: Vec<f64>,
}

impl Run {
    pub fn states_at(&self, t: usize) -> &[u16] {
        &self.states[t * self.n..(t + 1) * self.n]
    }

    /// Empirical state histogram `(1/N) sum_i delta_{X_t^i}`.
    pub fn histogram(&self, t: usize, nx: usize) -> Vec<f64> {
        let mut counts = vec![0usize; nx];
        for &x in self.states_at(t) {
            counts[x as usize] += 1;
        }
        counts.into_iter().map(|c| c as f64 / self.n as f64).collect()
    }
}

fn check_sim_inputs(
    env: &dyn Environment,
    graph: &SampledColoredDigraph,
    policies: &AgentPolicySet,
    schedule: &ColorWeightSchedule,
) -> Result<()> {
    if graph.n() != policies.len() {
        return Err(Error::arg(format!(
            "graph has {} nodes but {} policies were given",
            graph.n(),
            policies.len()
        )));
    }
    if schedule.k() != graph.k() {
        return Err(Error::arg("color schedule and graph disagree on k"));
    }
    let p = policies.policy(0);
    if (p.horizon(), p.num_states(), p.num_actions())
        != (env.horizon(), env.num_states(), env.num_actions())
    {
        return Err(Error::arg("agent policies do not match the environment"));
    }
    if env.num_states() > u16::MAX as usize {
        return Err(Error::arg("too many states"));
    }
    Ok(())
}

fn simulate_unchecked(
    env: &dyn Environment,
    graph: &SampledColoredDigraph,
    incoming: &[u8],
    policies: &AgentPolicySet,
    schedule: &ColorWeightSchedule,
    seed: u64,
) -> Result<Run> {
    let (n, nx, horizon) = (graph.n(), env.num_states(), env.horizon());
    // One stream per agent: a deviation by one agent leaves every other
    // agent's random draws unchanged.
    let mut rngs: Vec<StreamRng> = (0..n).map(|i| stream_rng(seed, i as u64)).collect();
    let mut states = Vec::with_capacity((horizon + 1) * n);
    for rng in rngs.iter_mut() {
        states.push(sample_index(env.mu0(), rng.gen()) as u16);
    }
    let mut returns = vec![0.0; n];
    let mut aggs = vec![NeighborhoodAggregate::zeros(graph.k(), nx, 0); n];
    let mut row = vec![0.0; nx];
    for t in 0..horizon {
        let current = states[t * n..(t + 1) * n].to_vec();
        fill_neighborhoods(graph, incoming, &current, schedule, t, &mut aggs);
        for i in 0..n {
            let x = current[i] as usize;
            let rng = &mut rngs[i];
            let u = sample_index(policies.policy(i).probs(t, x), rng.gen());
            returns[i] += env.reward(x, u, &aggs[i]);
            env.transition_checked(x, u, &aggs[i], &mut row)?;
            states.push(sample_index(&row, rng.gen()) as u16);
        }
    }
    Ok(Run { n, states, returns })
}

/// Simulates one episode: `X_0^i ~ mu0`, then at each step all actions are
/// drawn, all neighborhoods are computed from the time-`t` states and all
/// next states are drawn.
pub fn simulate(
    env: &dyn Environment,
    graph: &SampledColoredDigraph,
    policies: &AgentPolicySet,
    schedule: &ColorWeightSchedule,
    seed: u64,
) -> Result<Run> {
    check_sim_inputs(env, graph, policies, schedule)?;
    simulate_unchecked(env, graph, &graph.incoming_color_matrix(), policies, schedule, seed)
}

/// `Delta mu` estimate at one population size.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceRecord {
    pub n: usize,
    pub delta_mu_mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub samples: usize,
}

/// `sum_{t < T, x} |empirical_t(x) - int mu_t^alpha(x) d alpha|` of one run.
pub fn run_deviation(run: &Run, limit: &[Vec<f64>], nx: usize) -> f64 {
    limit
        .iter()
        .enumerate()
        .map(|(t, avg)| {
            run.histogram(t, nx)
                .iter()
                .zip(avg)
                .map(|(e, m)| (e - m).abs())
                .sum::<f64>()
        })
        .sum()
}

/// Per-sample `Delta mu` values for one `N`, each on a freshly sampled graph.
pub fn delta_mu_samples(
    env: &dyn Environment,
    w: &KDigraphon,
    schedule: &ColorWeightSchedule,
    pi: &PolicyEnsemble,
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let limit_mf = forward(env, w, schedule, pi)?;
    let limit: Vec<Vec<f64>> = (0..env.horizon()).map(|t| limit_mf.average(t)).collect();
    deviation_samples(env, w, schedule, pi, &limit, n, 0..samples as u64, seed)
}

#[allow(clippy::too_many_arguments)]
fn deviation_samples(
    env: &dyn Environment,
    w: &KDigraphon,
    schedule: &ColorWeightSchedule,
    pi: &PolicyEnsemble,
    limit: &[Vec<f64>],
    n: usize,
    sample_ids: std::ops::Range<u64>,
    seed: u64,
) -> Result<Vec<f64>> {
    let policies = discretize_policy(pi, n)?;
    let nx = env.num_states();
    sample_ids
        .into_par_iter()
        .map(|s| {
            let graph = w.sample_graph(n, derive_seed(seed, &[1, n as u64, s]))?;
            check_sim_inputs(env, &graph, &policies, schedule)?;
            let run = simulate_unchecked(
                env,
                &graph,
                &graph.incoming_color_matrix(),
                &policies,
                schedule,
                derive_seed(seed, &[2, n as u64, s]),
            )?;
            Ok(run_deviation(&run, limit, nx))
        })
        .collect()
}

/// `Delta mu` mean and normal 95% confidence interval for each `N`.
pub fn delta_mu(
    env: &dyn Environment,
    w: &KDigraphon,
    schedule: &ColorWeightSchedule,
    pi: &PolicyEnsemble,
    n_list: &[usize],
    samples: usize,
    seed: u64,
) -> Result<Vec<ConvergenceRecord>> {
    if samples < 2 {
        return Err(Error::arg("delta_mu needs at least 2 samples"));
    }
    let limit_mf = forward(env, w, schedule, pi)?;
    let limit: Vec<Vec<f64>> = (0..env.horizon()).map(|t| limit_mf.average(t)).collect();
    n_list
        .iter()
        .map(|&n| {
            let values = deviation_samples(env, w, schedule, pi, &limit, n, 0..samples as u64, seed)?;
            let (mean, lo, hi) = stats::mean_ci95(&values);
            Ok(ConvergenceRecord {
                n,
                delta_mu_mean: mean,
                ci_low: lo,
                ci_high: hi,
                samples,
            })
        })
        .collect()
}

/// Deviation gain estimate for one probed agent.
#[derive(Clone, Debug, PartialEq)]
pub struct GapEntry {
    /// 1-based agent index.
    pub agent: usize,
    pub alpha: f64,
    /// `max(0, J(best response) - J(assigned policy))`.
    pub gap: f64,
    /// Standard error of the paired difference.
    pub std_error: f64,
    pub base_value: f64,
    pub deviation_value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GapReport {
    pub n: usize,
    pub runs: usize,
    pub entries: Vec<GapEntry>,
}

impl GapReport {
    pub fn gaps(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.gap).collect()
    }

    pub fn median_gap(&self) -> f64 {
        stats::median(&self.gaps())
    }

    /// Fraction of probed agents whose estimated gain exceeds `epsilon`.
    pub fn fraction_above(&self, epsilon: f64) -> f64 {
        let above = self.entries.iter().filter(|e| e.gap > epsilon).count();
        above as f64 / self.entries.len() as f64
    }
}

/// `probes` evenly spaced 1-based agent indices `ceil((2j + 1) N / (2 probes))`.
pub fn probe_agents(n: usize, probes: usize) -> Vec<usize> {
    let probes = probes.clamp(1, n);
    let mut agents: Vec<usize> = (0..probes)
        .map(|j| ((2 * j + 1) * n).div_ceil(2 * probes).clamp(1, n))
        .collect();
    agents.dedup();
    agents
}

/// Monte Carlo estimate of the unilateral deviation gain of `probes` agents.
///
/// One graph is sampled for the `N`-agent game. Every probed agent `i` is
/// compared under its assigned policy and under the mean-field best response
/// at index `i / N`, with all other agents fixed. Both arms share graph and
/// run seeds (common random numbers).
#[allow(clippy::too_many_arguments)]
pub fn deviation_gap(
    env: &dyn Environment,
    w: &KDigraphon,
    schedule: &ColorWeightSchedule,
    pi: &PolicyEnsemble,
    n: usize,
    runs: usize,
    probes: usize,
    seed: u64,
) -> Result<GapReport> {
    if runs < 2 {
        return Err(Error::arg("deviation_gap needs at least 2 runs"));
    }
    let mu = forward(env, w, schedule, pi)?;
    let base = discretize_policy(pi, n)?;
    // One graph per run, shared by the base and deviated arms.
    let arms: Vec<(SampledColoredDigraph, Vec<u8>, u64)> = (0..runs as u64)
        .into_par_iter()
        .map(|r| {
            let graph = w.sample_graph(n, derive_seed(seed, &[3, n as u64, r]))?;
            let incoming = graph.incoming_color_matrix();
            Ok((graph, incoming, derive_seed(seed, &[4, n as u64, r])))
        })
        .collect::<Result<_>>()?;
    check_sim_inputs(env, &arms[0].0, &base, schedule)?;

    let batch = |policies: &AgentPolicySet| -> Result<Vec<Run>> {
        arms.par_iter()
            .map(|(graph, incoming, s)| simulate_unchecked(env, graph, incoming, policies, schedule, *s))
            .collect()
    };

    let agents = probe_agents(n, probes);
    let base_runs = batch(&base)?;

    let mut entries = Vec::with_capacity(agents.len());
    for &agent in &agents {
        let i = agent - 1;
        let alpha = base.alpha(i);
        let (response, _) = best_response(env, w, schedule, &mu, alpha)?;
        let deviated: Vec<f64> = batch(&base.with_replaced(i, response))?.iter().map(|r| r.returns[i]).collect();
        let base_returns: Vec<f64> = base_runs.iter().map(|r| r.returns[i]).collect();
        let diffs: Vec<f64> = deviated.iter().zip(&base_returns).map(|(d, b)| d - b).collect();
        entries.push(GapEntry {
            agent,
            alpha,
            gap: stats::mean(&diffs).max(0.0),
            std_error: stats::std_error(&diffs),
            base_value: stats::mean(&base_returns),
            deviation_value: stats::mean(&deviated),
        });
    }
    Ok(GapReport { n, runs, entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::{sis, Sis, SingleState};
    use crate::meanfield::IndexGrid;

    #[test]
    fn discretization_uses_right_endpoints() {
        let grid = IndexGrid::new(8).unwrap();
        let pols: Vec<AgentPolicy> = (0..8)
            .map(|m| AgentPolicy::from_probs(1, 1, 2, vec![m as f64 / 8.0, 1.0 - m as f64 / 8.0]).unwrap())
            .collect();
        let pi = PolicyEnsemble::new(grid, pols).unwrap();
        let set = discretize_policy(&pi, 4).unwrap();
        assert_eq!((0..4).map(|i| set.alpha(i)).collect::<Vec<_>>(), vec![0.25, 0.5, 0.75, 1.0]);
        // 0.25 sits between 0.1875 and 0.3125: tie goes to the lower index.
        assert_eq!((0..4).map(|i| set.grid_index(i)).collect::<Vec<_>>(), vec![1, 3, 5, 7]);
        assert_eq!(set.policy(3), pi.policy(7));
        assert!(discretize_policy(&pi, 0).is_err());
    }

    #[test]
    fn constant_ensemble_gives_identical_agents() {
        let pi = PolicyEnsemble::uniform(IndexGrid::new(5).unwrap(), 3, 2, 2);
        let set = discretize_policy(&pi, 17).unwrap();
        assert!((0..17).all(|i| set.policy(i) == set.policy(0)));
    }

    #[test]
    fn two_agent_neighborhood() {
        // Edge 2 -> 1 has color 2, everything else color 1.
        let g = SampledColoredDigraph::from_colors(2, &[vec![1, 1], vec![2, 1]]).unwrap();
        let aggs = empirical_neighborhood(&g, &[sis::SUSCEPTIBLE, sis::INFECTED], 2, &ColorWeightSchedule::linear(2), 0).unwrap();
        assert_eq!(aggs[0].g_in(1), &[0.0, 0.5]);
        assert_eq!(aggs[0].weighted_in(), &[0.0, 0.5]);
        assert_eq!(aggs[1].g_out(1), &[0.5, 0.0]);
        assert_eq!(aggs[1].g_in(0), &[0.5, 0.5]);
        assert_eq!(aggs[1].weighted_in(), &[0.0, 0.0]);
    }

    #[test]
    fn all_complement_edges_give_zero_weighted_measures() {
        let g = KDigraphon::constant(0.0).unwrap().sample_graph(6, 1).unwrap();
        let aggs = empirical_neighborhood(&g, &[0, 1, 1, 0, 1, 0], 2, &ColorWeightSchedule::linear(2), 3).unwrap();
        for a in &aggs {
            assert_eq!(a.weighted_in(), &[0.0, 0.0]);
            assert_eq!(a.weighted_out(), &[0.0, 0.0]);
        }
    }

    #[test]
    fn incoming_mass_counts_other_agents() {
        let g = KDigraphon::combined_uniform_ranked().sample_graph(13, 4).unwrap();
        let states: Vec<usize> = (0..13).map(|i| i % 2).collect();
        let aggs = empirical_neighborhood(&g, &states, 2, &ColorWeightSchedule::linear(3), 0).unwrap();
        for a in &aggs {
            assert!((a.total_in_mass() - 1.0).abs() < 1e-12);
            // Self-edges are color 1: the non-complement mass excludes the agent itself.
            let others: f64 = (1..3).map(|h| a.g_in(h).iter().sum::<f64>()).sum();
            assert!(others <= 12.0 / 13.0 + 1e-12);
        }
    }

    #[test]
    fn degenerate_chain_returns_horizon_times_reward() {
        let env = SingleState::new(7, 2, -0.5);
        let g = KDigraphon::rotated_uniform().sample_graph(5, 2).unwrap();
        let pi = PolicyEnsemble::uniform_for(&env, IndexGrid::new(3).unwrap());
        let set = discretize_policy(&pi, 5).unwrap();
        let run = simulate(&env, &g, &set, &ColorWeightSchedule::linear(2), 11).unwrap();
        assert!(run.returns.iter().all(|&r| r == -3.5));
        assert!((0..=7).all(|t| run.states_at(t).iter().all(|&x| x == 0)));
    }

    #[test]
    fn simulation_is_seed_deterministic() {
        let env = Sis::standard(false);
        let w = KDigraphon::rotated_uniform();
        let g = w.sample_graph(20, 3).unwrap();
        let pi = PolicyEnsemble::uniform_for(&env, IndexGrid::new(4).unwrap());
        let set = discretize_policy(&pi, 20).unwrap();
        let sched = ColorWeightSchedule::linear(2);
        let a = simulate(&env, &g, &set, &sched, 1).unwrap();
        assert_eq!(a, simulate(&env, &g, &set, &sched, 1).unwrap());
        assert_ne!(a, simulate(&env, &g, &set, &sched, 2).unwrap());
    }

    #[test]
    fn probe_agents_are_evenly_spaced() {
        assert_eq!(probe_agents(20, 10), vec![1, 3, 5, 7, 9, 11, 13, 15, 17, 19]);
        assert_eq!(probe_agents(200, 10)[0], 10);
        assert_eq!(probe_agents(3, 10), vec![1, 2, 3]);
    }

    #[test]
    fn single_state_has_no_deviation() {
        let env = SingleState::new(5, 1, 1.0);
        let pi = PolicyEnsemble::uniform_for(&env, IndexGrid::new(4).unwrap());
        let recs = delta_mu(&env, &KDigraphon::rotated_uniform(), &ColorWeightSchedule::linear(2), &pi, &[1, 3, 9], 4, 0).unwrap();
        assert!(recs.iter().all(|r| r.delta_mu_mean == 0.0 && r.ci_low == 0.0 && r.ci_high == 0.0));
        assert!(delta_mu(&env, &KDigraphon::rotated_uniform(), &ColorWeightSchedule::linear(2), &pi, &[3], 1, 0).is_err());
    }
}

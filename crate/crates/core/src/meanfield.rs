//! Mean-field and policy ensembles on a discretized index space, the
//! neighborhood integrals and the forward map from policies to mean fields.

use rayon::prelude::*;

use crate::digraphon::{ColorWeightSchedule, KDigraphon};
use crate::environments::{Environment, NeighborhoodAggregate};
use crate::{Error, Result};

/// Tolerance for normalization checks on ensembles.
pub const NORM_TOL: f64 = 1e-10;

/// Midpoint grid `alpha_m = (m + 1/2) / M`, `m = 0..M`, on the index space.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IndexGrid {
    m: usize,
}

impl IndexGrid {
    pub fn new(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::arg("index grid needs at least one point"));
        }
        Ok(Self { m })
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    pub fn point(&self, i: usize) -> f64 {
        (i as f64 + 0.5) / self.m as f64
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.m).map(|i| self.point(i))
    }

    /// Index of the grid point nearest to `alpha`; ties go to the lower index.
    pub fn nearest(&self, alpha: f64) -> usize {
        let pos = alpha * self.m as f64 - 0.5;
        let idx = (pos - 0.5).ceil();
        idx.clamp(0.0, (self.m - 1) as f64) as usize
    }
}

/// `mu_t^{alpha_m}` for `t = 0..=T` on every grid point, stored densely.
#[derive(Clone, Debug, PartialEq)]
pub struct MeanFieldEnsemble {
    grid: IndexGrid,
    horizon: usize,
    nx: usize,
    data: Vec<f64>,
}

impl MeanFieldEnsemble {
    /// Every slice equal to `mu`.
    pub fn constant(grid: IndexGrid, horizon: usize, mu: &[f64]) -> Self {
        let mut data = Vec::with_capacity((horizon + 1) * grid.len() * mu.len());
        for _ in 0..(horizon + 1) * grid.len() {
            data.extend_from_slice(mu);
        }
        Self {
            grid,
            horizon,
            nx: mu.len(),
            data,
        }
    }

    /// Builds an ensemble from raw `(t, m, x)`-ordered values and checks it.
    pub fn from_raw(grid: IndexGrid, horizon: usize, nx: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != (horizon + 1) * grid.len() * nx {
            return Err(Error::arg("mean-field data has the wrong length"));
        }
        let mf = Self {
            grid,
            horizon,
            nx,
            data,
        };
        mf.validate()?;
        Ok(mf)
    }

    pub fn grid(&self) -> IndexGrid {
        self.grid
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.nx
    }

    /// `mu_t^{alpha_m}`.
    pub fn get(&self, t: usize, m: usize) -> &[f64] {
        let start = (t * self.grid.len() + m) * self.nx;
        &self.data[start..start + self.nx]
    }

    /// All grid points at time `t`, `(m, x)`-ordered.
    pub fn slice(&self, t: usize) -> &[f64] {
        let len = self.grid.len() * self.nx;
        &self.data[t * len..(t + 1) * len]
    }

    /// Grid average `int mu_t^alpha d alpha`.
    pub fn average(&self, t: usize) -> Vec<f64> {
        let mut avg = vec![0.0; self.nx];
        for m in 0..self.grid.len() {
            for (a, v) in avg.iter_mut().zip(self.get(t, m)) {
                *a += v;
            }
        }
        let inv = 1.0 / self.grid.len() as f64;
        avg.iter_mut().for_each(|a| *a *= inv);
        avg
    }

    pub fn validate(&self) -> Result<()> {
        for t in 0..=self.horizon {
            for m in 0..self.grid.len() {
                let mu = self.get(t, m);
                let sum: f64 = mu.iter().sum();
                if mu.iter().any(|p| !(*p >= -NORM_TOL)) || (sum - 1.0).abs() > NORM_TOL {
                    return Err(Error::Numeric(format!(
                        "mean field at t={t}, alpha={} is not a distribution: {mu:?}",
                        self.grid.point(m)
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Time-dependent Markov policy of a single agent, `pi_t(u | x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentPolicy {
    horizon: usize,
    nx: usize,
    nu: usize,
    probs: Vec<f64>,
}

impl AgentPolicy {
    pub fn uniform(horizon: usize, nx: usize, nu: usize) -> Self {
        Self {
            horizon,
            nx,
            nu,
            probs: vec![1.0 / nu as f64; horizon * nx * nu],
        }
    }

    /// Deterministic policy from a `(t, x)`-ordered table of action indices.
    pub fn deterministic(horizon: usize, nx: usize, nu: usize, actions: &[usize]) -> Result<Self> {
        if actions.len() != horizon * nx || actions.iter().any(|&u| u >= nu) {
            return Err(Error::arg("deterministic policy needs one valid action per (t, x)"));
        }
        let mut probs = vec![0.0; horizon * nx * nu];
        for (i, &u) in actions.iter().enumerate() {
            probs[i * nu + u] = 1.0;
        }
        Ok(Self {
            horizon,
            nx,
            nu,
            probs,
        })
    }

    /// Policy from raw `(t, x, u)`-ordered probabilities.
    pub fn from_probs(horizon: usize, nx: usize, nu: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != horizon * nx * nu {
            return Err(Error::arg("policy table has the wrong length"));
        }
        let p = Self {
            horizon,
            nx,
            nu,
            probs,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.nx
    }

    pub fn num_actions(&self) -> usize {
        self.nu
    }

    /// `pi_t(. | x)`.
    #[inline]
    pub fn probs(&self, t: usize, x: usize) -> &[f64] {
        let start = (t * self.nx + x) * self.nu;
        &self.probs[start..start + self.nu]
    }

    pub fn probs_mut(&mut self, t: usize, x: usize) -> &mut [f64] {
        let start = (t * self.nx + x) * self.nu;
        &mut self.probs[start..start + self.nu]
    }

    pub fn raw(&self) -> &[f64] {
        &self.probs
    }

    pub fn validate(&self) -> Result<()> {
        for t in 0..self.horizon {
            for x in 0..self.nx {
                let p = self.probs(t, x);
                let sum: f64 = p.iter().sum();
                if p.iter().any(|v| !(*v >= 0.0)) || (sum - 1.0).abs() > NORM_TOL {
                    return Err(Error::arg(format!("pi_{t}(.|{x}) is not a distribution: {p:?}")));
                }
            }
        }
        Ok(())
    }
}

/// One [`AgentPolicy`] per grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyEnsemble {
    grid: IndexGrid,
    policies: Vec<AgentPolicy>,
}

impl PolicyEnsemble {
    pub fn new(grid: IndexGrid, policies: Vec<AgentPolicy>) -> Result<Self> {
        if policies.len() != grid.len() {
            return Err(Error::arg("policy ensemble needs one policy per grid point"));
        }
        let first = &policies[0];
        let shape = (first.horizon, first.nx, first.nu);
        if policies.iter().any(|p| (p.horizon, p.nx, p.nu) != shape) {
            return Err(Error::arg("policies in an ensemble must share their shape"));
        }
        Ok(Self { grid, policies })
    }

    pub fn uniform(grid: IndexGrid, horizon: usize, nx: usize, nu: usize) -> Self {
        Self::constant(grid, AgentPolicy::uniform(horizon, nx, nu))
    }

    pub fn constant(grid: IndexGrid, policy: AgentPolicy) -> Self {
        Self {
            grid,
            policies: vec![policy; grid.len()],
        }
    }

    pub fn uniform_for(env: &dyn Environment, grid: IndexGrid) -> Self {
        Self::uniform(grid, env.horizon(), env.num_states(), env.num_actions())
    }

    pub fn grid(&self) -> IndexGrid {
        self.grid
    }

    pub fn policy(&self, m: usize) -> &AgentPolicy {
        &self.policies[m]
    }

    pub fn policies(&self) -> &[AgentPolicy] {
        &self.policies
    }

    pub fn horizon(&self) -> usize {
        self.policies[0].horizon
    }

    pub fn num_states(&self) -> usize {
        self.policies[0].nx
    }

    pub fn num_actions(&self) -> usize {
        self.policies[0].nu
    }

    pub fn validate(&self) -> Result<()> {
        self.policies.iter().try_for_each(AgentPolicy::validate)
    }

    fn check_env(&self, env: &dyn Environment) -> Result<()> {
        if (self.horizon(), self.num_states(), self.num_actions())
            != (env.horizon(), env.num_states(), env.num_actions())
        {
            return Err(Error::arg(format!(
                "policy shape (T={}, |X|={}, |U|={}) does not match environment '{}'",
                self.horizon(),
                self.num_states(),
                self.num_actions(),
                env.name()
            )));
        }
        Ok(())
    }
}

/// Quadrature weights linking one index `alpha` to every grid point:
/// `W^h(alpha, alpha_m) / M` (outgoing) and `W^h(alpha_m, alpha) / M` (incoming).
#[derive(Clone, Debug)]
pub struct IndexKernel {
    k: usize,
    m: usize,
    outgoing: Vec<f64>,
    incoming: Vec<f64>,
}

impl IndexKernel {
    pub fn new(w: &KDigraphon, grid: IndexGrid, alpha: f64) -> Self {
        let (k, m) = (w.k(), grid.len());
        let mut outgoing = vec![0.0; k * m];
        let mut incoming = vec![0.0; k * m];
        let inv = 1.0 / m as f64;
        for (h, kernel) in w.kernels().iter().enumerate() {
            for (j, beta) in grid.points().enumerate() {
                outgoing[h * m + j] = kernel.eval(alpha, beta) * inv;
                incoming[h * m + j] = kernel.eval(beta, alpha) * inv;
            }
        }
        Self {
            k,
            m,
            outgoing,
            incoming,
        }
    }

    /// Neighborhood aggregate of this index against the slice `mu_t`
    /// (`(m, x)`-ordered).
    pub fn aggregate(
        &self,
        mu_t: &[f64],
        nx: usize,
        schedule: &ColorWeightSchedule,
        t: usize,
    ) -> NeighborhoodAggregate {
        debug_assert_eq!(mu_t.len(), self.m * nx);
        let mut agg = NeighborhoodAggregate::zeros(self.k, nx, t);
        for h in 0..self.k {
            let (w_out, w_in) = (
                &self.outgoing[h * self.m..(h + 1) * self.m],
                &self.incoming[h * self.m..(h + 1) * self.m],
            );
            {
                let g = agg.g_out_mut(h);
                for (j, &w) in w_out.iter().enumerate() {
                    for (gx, mx) in g.iter_mut().zip(&mu_t[j * nx..(j + 1) * nx]) {
                        *gx += w * mx;
                    }
                }
            }
            let g = agg.g_in_mut(h);
            for (j, &w) in w_in.iter().enumerate() {
                for (gx, mx) in g.iter_mut().zip(&mu_t[j * nx..(j + 1) * nx]) {
                    *gx += w * mx;
                }
            }
        }
        agg.apply_weights(schedule);
        agg
    }
}

/// Neighborhood aggregate of index `alpha` at time `t`, integrating the
/// kernels against `mu_t` with the midpoint rule on `grid`.
pub fn neighborhood(
    w: &KDigraphon,
    schedule: &ColorWeightSchedule,
    grid: IndexGrid,
    mu_t: &[f64],
    nx: usize,
    alpha: f64,
    t: usize,
) -> Result<NeighborhoodAggregate> {
    if mu_t.len() != grid.len() * nx {
        return Err(Error::arg("mean-field slice does not match the grid"));
    }
    if schedule.k() != w.k() {
        return Err(Error::arg("color schedule and digraphon disagree on k"));
    }
    Ok(IndexKernel::new(w, grid, alpha).aggregate(mu_t, nx, schedule, t))
}

/// The forward map evaluated with precomputed quadrature weights for every
/// grid point. Reused across solver iterations.
#[derive(Clone, Debug)]
pub struct GridOperator {
    grid: IndexGrid,
    kernels: Vec<IndexKernel>,
}

impl GridOperator {
    pub fn new(w: &KDigraphon, grid: IndexGrid) -> Self {
        Self {
            grid,
            kernels: grid.points().map(|a| IndexKernel::new(w, grid, a)).collect(),
        }
    }

    pub fn grid(&self) -> IndexGrid {
        self.grid
    }

    pub fn kernel(&self, m: usize) -> &IndexKernel {
        &self.kernels[m]
    }
}

/// A propagated mean field together with the neighborhood path of every grid
/// point (`neighborhoods[m][t]` for `t < T`).
#[derive(Clone, Debug)]
pub struct Propagation {
    pub meanfield: MeanFieldEnsemble,
    pub neighborhoods: Vec<Vec<NeighborhoodAggregate>>,
}

/// Runs `mu_{t+1}^alpha(x) = sum_{x', u} mu_t^alpha(x') pi_t^alpha(u|x') P(x | x', u, G_t^alpha)`
/// from `mu_0^alpha = mu_0`, recomputing neighborhoods from each slice.
pub fn propagate(
    env: &dyn Environment,
    op: &GridOperator,
    schedule: &ColorWeightSchedule,
    pi: &PolicyEnsemble,
) -> Result<Propagation> {
    pi.check_env(env)?;
    if pi.grid() != op.grid() {
        return Err(Error::arg("policy ensemble and operator use different grids"));
    }
    let (grid, horizon, nx) = (op.grid(), env.horizon(), env.num_states());
    let mut meanfield = MeanFieldEnsemble::constant(grid, horizon, env.mu0());
    let mut neighborhoods: Vec<Vec<NeighborhoodAggregate>> =
        (0..grid.len()).map(|_| Vec::with_capacity(horizon)).collect();
    let slice_len = grid.len() * nx;

    for t in 0..horizon {
        let mu_t = meanfield.slice(t).to_vec();
        let steps: Vec<(NeighborhoodAggregate, Vec<f64>)> = (0..grid.len())
            .into_par_iter()
            .map(|m| {
                let agg = op.kernel(m).aggregate(&mu_t, nx, schedule, t);
                let mu = &mu_t[m * nx..(m + 1) * nx];
                let policy = pi.policy(m);
                let mut next = vec![0.0; nx];
                let mut row = vec![0.0; nx];
                for (x, &mass) in mu.iter().enumerate() {
                    for (u, &p) in policy.probs(t, x).iter().enumerate() {
                        if p == 0.0 {
                            continue;
                        }
                        env.transition_checked(x, u, &agg, &mut row)?;
                        for (n, r) in next.iter_mut().zip(&row) {
                            *n += mass * p * r;
                        }
                    }
                }
                Ok((agg, next))
            })
            .collect::<Result<_>>()?;
        let start = (t + 1) * slice_len;
        for (m, (agg, next)) in steps.into_iter().enumerate() {
            meanfield.data[start + m * nx..start + (m + 1) * nx].copy_from_slice(&next);
            neighborhoods[m].push(agg);
        }
    }
    Ok(Propagation {
        meanfield,
        neighborhoods,
    })
}

/// The forward map: the mean-field ensemble induced by `pi`.
pub fn forward(
    env: &dyn Environment,
    w: &KDigraphon,
    schedule: &ColorWeightSchedule,
    pi: &PolicyEnsemble,
) -> Result<MeanFieldEnsemble> {
    if schedule.k() != w.k() {
        return Err(Error::arg("color schedule and digraphon disagree on k"));
    }
    let op = GridOperator::new(w, pi.grid());
    Ok(propagate(env, &op, schedule, pi)?.meanfield)
}

/// Neighborhood path `G_0^alpha .. G_{T-1}^alpha` of an arbitrary index
/// against a fixed mean field.
pub fn neighborhood_path(
    w: &KDigraphon,
    schedule: &ColorWeightSchedule,
    mu: &MeanFieldEnsemble,
    alpha: f64,
) -> Vec<NeighborhoodAggregate> {
    let kernel = IndexKernel::new(w, mu.grid(), alpha);
    (0..mu.horizon())
        .map(|t| kernel.aggregate(mu.slice(t), mu.num_states(), schedule, t))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::{sis, Sis, SingleState};

    #[test]
    fn grid_points_and_nearest() {
        let g = IndexGrid::new(4).unwrap();
        let pts: Vec<f64> = g.points().collect();
        assert_eq!(pts, vec![0.125, 0.375, 0.625, 0.875]);
        assert_eq!(g.nearest(0.25), 0);
        assert_eq!(g.nearest(0.5), 1);
        assert_eq!(g.nearest(0.75), 2);
        assert_eq!(g.nearest(1.0), 3);
        assert_eq!(g.nearest(0.0), 0);
        assert_eq!(g.nearest(0.63), 2);
        assert!(IndexGrid::new(0).is_err());
    }

    #[test]
    fn constant_kernel_neighborhoods() {
        let grid = IndexGrid::new(5).unwrap();
        let mu: Vec<f64> = (0..5).flat_map(|m| [1.0 - 0.1 * m as f64, 0.1 * m as f64]).collect();
        let sched = ColorWeightSchedule::linear(2);
        let full = KDigraphon::constant(1.0).unwrap();
        let agg = neighborhood(&full, &sched, grid, &mu, 2, 0.3, 0).unwrap();
        assert!((agg.g_in(1)[1] - 0.2).abs() < 1e-15);
        assert!((agg.g_in(1)[0] - 0.8).abs() < 1e-15);
        assert_eq!(agg.g_in(0), &[0.0, 0.0]);
        let empty = KDigraphon::constant(0.0).unwrap();
        let agg = neighborhood(&empty, &sched, grid, &mu, 2, 0.3, 0).unwrap();
        assert_eq!(agg.g_in(1), &[0.0, 0.0]);
        assert_eq!(agg.weighted_in(), &[0.0, 0.0]);
    }

    #[test]
    fn rotated_uniform_incoming_integral() {
        // int_0^1 (1 - 0.5 beta) d beta = 0.75 against a point mass on S.
        for m in [1, 4, 16, 64] {
            let grid = IndexGrid::new(m).unwrap();
            let mu: Vec<f64> = (0..m).flat_map(|_| [1.0, 0.0]).collect();
            let agg = neighborhood(
                &KDigraphon::rotated_uniform(),
                &ColorWeightSchedule::linear(2),
                grid,
                &mu,
                2,
                0.5,
                0,
            )
            .unwrap();
            assert!((agg.g_in(1)[0] - 0.75).abs() <= 1.0 / m as f64);
        }
    }

    #[test]
    fn identity_dynamics_keep_initial_law() {
        let env = SingleState::new(4, 2, 1.0);
        let grid = IndexGrid::new(3).unwrap();
        let pi = PolicyEnsemble::uniform_for(&env, grid);
        let mf = forward(&env, &KDigraphon::rotated_uniform(), &ColorWeightSchedule::linear(2), &pi).unwrap();
        for t in 0..=4 {
            for m in 0..3 {
                assert_eq!(mf.get(t, m), &[1.0]);
            }
        }
    }

    #[test]
    fn sis_one_step_under_full_graph() {
        let env = Sis::standard(false);
        let grid = IndexGrid::new(7).unwrap();
        let expose = AgentPolicy::deterministic(50, 2, 2, &vec![sis::EXPOSE; 100]).unwrap();
        let pi = PolicyEnsemble::constant(grid, expose);
        let mf = forward(&env, &KDigraphon::constant(1.0).unwrap(), &ColorWeightSchedule::linear(2), &pi).unwrap();
        for m in 0..7 {
            assert!((mf.get(1, m)[sis::INFECTED] - 0.6).abs() < 1e-15);
        }
        mf.validate().unwrap();
    }

    #[test]
    fn single_point_grid_uses_center_kernel_value() {
        let env = Sis::standard(false);
        let grid = IndexGrid::new(1).unwrap();
        let pi = PolicyEnsemble::constant(
            grid,
            AgentPolicy::deterministic(50, 2, 2, &vec![sis::EXPOSE; 100]).unwrap(),
        );
        let mf = forward(&env, &KDigraphon::rotated_uniform(), &ColorWeightSchedule::linear(2), &pi).unwrap();
        // Classical MFG with coupling W(1/2, 1/2) = 0.75.
        let mut infected = 0.5;
        for t in 0..50 {
            assert!((mf.get(t, 0)[1] - infected).abs() < 1e-14, "t={t}");
            infected = infected * 0.8 + (1.0 - infected) * 0.8 * 0.75 * infected;
        }
    }

    #[test]
    fn policy_shape_mismatch_is_rejected() {
        let env = Sis::standard(false);
        let grid = IndexGrid::new(3).unwrap();
        let pi = PolicyEnsemble::uniform(grid, 10, 2, 2);
        let r = forward(&env, &KDigraphon::rotated_uniform(), &ColorWeightSchedule::linear(2), &pi);
        assert!(matches!(r, Err(Error::Argument(_))));
    }

    #[test]
    fn policy_constructors_validate() {
        assert!(AgentPolicy::from_probs(1, 1, 2, vec![0.5, 0.6]).is_err());
        assert!(AgentPolicy::from_probs(1, 1, 2, vec![0.25, 0.75]).is_ok());
        assert!(AgentPolicy::deterministic(1, 1, 2, &[2]).is_err());
    }
}

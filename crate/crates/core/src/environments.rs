//! Game primitives: SIS epidemics, Beach and Systemic Risk.
//!
//! Every environment reads neighborhoods only through a
//! [`NeighborhoodAggregate`], which holds the `2k` unnormalized per-color
//! neighborhood measures plus their color-weighted sums.

use serde::{Deserialize, Serialize};

use crate::digraphon::ColorWeightSchedule;
use crate::{Error, Result};

/// Slack allowed when checking that a transition row is a distribution.
pub const ROW_TOL: f64 = 1e-12;

/// Neighborhood measures of one agent at one time step.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborhoodAggregate {
    k: usize,
    nx: usize,
    t: usize,
    g_out: Vec<f64>,
    g_in: Vec<f64>,
    weighted_out: Vec<f64>,
    weighted_in: Vec<f64>,
}

impl NeighborhoodAggregate {
    pub fn zeros(k: usize, nx: usize, t: usize) -> Self {
        Self {
            k,
            nx,
            t,
            g_out: vec![0.0; k * nx],
            g_in: vec![0.0; k * nx],
            weighted_out: vec![0.0; nx],
            weighted_in: vec![0.0; nx],
        }
    }

    /// An aggregate carrying only the weighted measures, for probing
    /// environments directly.
    pub fn weighted(weighted_in: Vec<f64>, weighted_out: Vec<f64>, t: usize) -> Self {
        assert_eq!(weighted_in.len(), weighted_out.len());
        Self {
            k: 0,
            nx: weighted_in.len(),
            t,
            g_out: Vec::new(),
            g_in: Vec::new(),
            weighted_out,
            weighted_in,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn num_states(&self) -> usize {
        self.nx
    }

    pub fn t(&self) -> usize {
        self.t
    }

    /// Out-neighborhood measure of 0-based color `h`.
    pub fn g_out(&self, h: usize) -> &[f64] {
        &self.g_out[h * self.nx..(h + 1) * self.nx]
    }

    pub fn g_in(&self, h: usize) -> &[f64] {
        &self.g_in[h * self.nx..(h + 1) * self.nx]
    }

    pub fn g_out_mut(&mut self, h: usize) -> &mut [f64] {
        &mut self.g_out[h * self.nx..(h + 1) * self.nx]
    }

    pub fn g_in_mut(&mut self, h: usize) -> &mut [f64] {
        &mut self.g_in[h * self.nx..(h + 1) * self.nx]
    }

    pub fn weighted_out(&self) -> &[f64] {
        &self.weighted_out
    }

    pub fn weighted_in(&self) -> &[f64] {
        &self.weighted_in
    }

    /// Raw `(h, x)`-ordered outgoing and incoming measures.
    pub(crate) fn raw_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.g_out, &mut self.g_in)
    }

    /// Total unnormalized incoming mass over all colors and states.
    pub fn total_in_mass(&self) -> f64 {
        self.g_in.iter().sum()
    }

    /// Resets all measures to zero and moves the aggregate to time `t`.
    pub fn clear(&mut self, t: usize) {
        self.t = t;
        self.g_out.fill(0.0);
        self.g_in.fill(0.0);
        self.weighted_out.fill(0.0);
        self.weighted_in.fill(0.0);
    }

    /// Recomputes the weighted measures from the per-color ones.
    pub fn apply_weights(&mut self, schedule: &ColorWeightSchedule) {
        self.weighted_out.fill(0.0);
        self.weighted_in.fill(0.0);
        for h in 0..self.k {
            let (co, ci) = (schedule.out_weight(h, self.t), schedule.in_weight(h, self.t));
            for x in 0..self.nx {
                self.weighted_out[x] += co * self.g_out[h * self.nx + x];
                self.weighted_in[x] += ci * self.g_in[h * self.nx + x];
            }
        }
    }
}

/// A finite-state, finite-action game with neighborhood-dependent dynamics.
pub trait Environment: Send + Sync {
    fn name(&self) -> &str;

    fn state_labels(&self) -> &[String];

    fn action_labels(&self) -> &[String];

    fn horizon(&self) -> usize;

    fn mu0(&self) -> &[f64];

    /// Writes `P(. | x, u, G)` into `out`. The time index is `agg.t()`.
    fn transition(&self, x: usize, u: usize, agg: &NeighborhoodAggregate, out: &mut [f64]) -> Result<()>;

    fn reward(&self, x: usize, u: usize, agg: &NeighborhoodAggregate) -> f64;

    fn num_states(&self) -> usize {
        self.state_labels().len()
    }

    fn num_actions(&self) -> usize {
        self.action_labels().len()
    }

    /// [`Environment::transition`] followed by a distribution check.
    fn transition_checked(
        &self,
        x: usize,
        u: usize,
        agg: &NeighborhoodAggregate,
        out: &mut [f64],
    ) -> Result<()> {
        self.transition(x, u, agg, out)?;
        check_row(out).map_err(|msg| {
            Error::ModelConsistency(format!(
                "{}: P(.|x={x}, u={u}, t={}) {msg}: {out:?}",
                self.name(),
                agg.t()
            ))
        })
    }
}

fn check_row(row: &[f64]) -> std::result::Result<(), String> {
    if row.iter().any(|p| !p.is_finite() || *p < -ROW_TOL || *p > 1.0 + ROW_TOL) {
        return Err("has an entry outside [0, 1]".into());
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > ROW_TOL {
        return Err(format!("sums to {sum}"));
    }
    Ok(())
}

fn labels(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn clamp01(p: f64) -> f64 {
    p.clamp(0.0, 1.0)
}

// ── SIS ─────────────────────────────────────────────────────────

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SisParams {
    pub horizon: usize,
    pub initial_infected: f64,
    /// Infection coefficient on the weighted incoming infected mass.
    pub infection_rate: f64,
    pub adaptive_infection_rate: f64,
    pub recovery: f64,
    pub infection_cost: f64,
    pub protection_cost: f64,
}

impl Default for SisParams {
    fn default() -> Self {
        Self {
            horizon: 50,
            initial_infected: 0.5,
            infection_rate: 0.8,
            adaptive_infection_rate: 1.6,
            recovery: 0.2,
            infection_cost: 2.0,
            protection_cost: 0.5,
        }
    }
}

pub mod sis {
    pub const SUSCEPTIBLE: usize = 0;
    pub const INFECTED: usize = 1;
    /// Do not protect.
    pub const EXPOSE: usize = 0;
    pub const PROTECT: usize = 1;
}

/// Susceptible-infected-susceptible epidemic with optional protection.
#[derive(Clone, Debug)]
pub struct Sis {
    params: SisParams,
    adaptive: bool,
    name: String,
    mu0: Vec<f64>,
    states: Vec<String>,
    actions: Vec<String>,
}

impl Sis {
    pub fn new(params: SisParams, adaptive: bool) -> Result<Self> {
        let p = &params;
        for (label, v) in [
            ("initial_infected", p.initial_infected),
            ("recovery", p.recovery),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("sis.{label} = {v} outside [0, 1]")));
            }
        }
        if p.horizon == 0 {
            return Err(Error::Config("sis.horizon must be positive".into()));
        }
        for (label, v) in [
            ("infection_rate", p.infection_rate),
            ("adaptive_infection_rate", p.adaptive_infection_rate),
            ("infection_cost", p.infection_cost),
            ("protection_cost", p.protection_cost),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("sis.{label} = {v} must be finite and nonnegative")));
            }
        }
        Ok(Self {
            mu0: vec![1.0 - p.initial_infected, p.initial_infected],
            name: if adaptive { "sis-adaptive" } else { "sis" }.into(),
            params,
            adaptive,
            states: labels(&["S", "I"]),
            actions: labels(&["Dbar", "D"]),
        })
    }

    pub fn standard(adaptive: bool) -> Self {
        Self::new(SisParams::default(), adaptive).expect("default parameters are valid")
    }

    pub fn params(&self) -> &SisParams {
        &self.params
    }

    /// `P(I | S, u, G)`, clamped to `[0, 1]`.
    pub fn infection_probability(&self, u: usize, agg: &NeighborhoodAggregate) -> f64 {
        if u == sis::PROTECT {
            return 0.0;
        }
        let rate = if self.adaptive {
            self.params.adaptive_infection_rate
        } else {
            self.params.infection_rate
        };
        clamp01(rate * agg.weighted_in()[sis::INFECTED])
    }
}

impl Environment for Sis {
    fn name(&self) -> &str {
        &self.name
    }

    fn state_labels(&self) -> &[String] {
        &self.states
    }

    fn action_labels(&self) -> &[String] {
        &self.actions
    }

    fn horizon(&self) -> usize {
        self.params.horizon
    }

    fn mu0(&self) -> &[f64] {
        &self.mu0
    }

    fn transition(&self, x: usize, u: usize, agg: &NeighborhoodAggregate, out: &mut [f64]) -> Result<()> {
        if x == sis::INFECTED {
            out[sis::SUSCEPTIBLE] = self.params.recovery;
            out[sis::INFECTED] = 1.0 - self.params.recovery;
        } else {
            let p = self.infection_probability(u, agg);
            out[sis::SUSCEPTIBLE] = 1.0 - p;
            out[sis::INFECTED] = p;
        }
        Ok(())
    }

    fn reward(&self, x: usize, u: usize, _agg: &NeighborhoodAggregate) -> f64 {
        let mut r = 0.0;
        if x == sis::INFECTED {
            r -= self.params.infection_cost;
        }
        if u == sis::PROTECT {
            r -= self.params.protection_cost;
        }
        r
    }
}

// ── Beach ───────────────────────────────────────────────────────

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BeachParams {
    pub horizon: usize,
    pub locations: usize,
    pub bar: usize,
    pub distance_cost: f64,
    pub move_cost: f64,
    /// Weight on the incoming neighborhood mass at the agent's location.
    pub crowd_aversion: f64,
    /// Probability of each of the two unit noise displacements.
    pub noise: f64,
}

impl Default for BeachParams {
    fn default() -> Self {
        Self {
            horizon: 30,
            locations: 10,
            bar: 5,
            distance_cost: 0.2,
            move_cost: 0.2,
            crowd_aversion: 1.0,
            noise: 0.05,
        }
    }
}

/// Agents on a line of locations moving towards a bar while avoiding
/// incoming neighbors.
#[derive(Clone, Debug)]
pub struct Beach {
    params: BeachParams,
    mu0: Vec<f64>,
    states: Vec<String>,
    actions: Vec<String>,
}

impl Beach {
    pub fn new(params: BeachParams) -> Result<Self> {
        if params.locations < 2 || params.bar >= params.locations {
            return Err(Error::Config(format!(
                "beach needs at least 2 locations and bar < locations (got {} and {})",
                params.locations, params.bar
            )));
        }
        if params.horizon == 0 {
            return Err(Error::Config("beach.horizon must be positive".into()));
        }
        if !(0.0..=0.5).contains(&params.noise) {
            return Err(Error::Config(format!("beach.noise = {} outside [0, 0.5]", params.noise)));
        }
        let n = params.locations;
        Ok(Self {
            mu0: vec![1.0 / n as f64; n],
            states: (0..n).map(|x| x.to_string()).collect(),
            actions: labels(&["-1", "0", "1"]),
            params,
        })
    }

    pub fn standard() -> Self {
        Self::new(BeachParams::default()).expect("default parameters are valid")
    }

    pub fn params(&self) -> &BeachParams {
        &self.params
    }

    /// Signed displacement of action index `u`.
    pub fn displacement(u: usize) -> i64 {
        u as i64 - 1
    }
}

impl Environment for Beach {
    fn name(&self) -> &str {
        "beach"
    }

    fn state_labels(&self) -> &[String] {
        &self.states
    }

    fn action_labels(&self) -> &[String] {
        &self.actions
    }

    fn horizon(&self) -> usize {
        self.params.horizon
    }

    fn mu0(&self) -> &[f64] {
        &self.mu0
    }

    fn transition(&self, x: usize, u: usize, _agg: &NeighborhoodAggregate, out: &mut [f64]) -> Result<()> {
        out.fill(0.0);
        let last = self.params.locations as i64 - 1;
        let target = x as i64 + Self::displacement(u);
        let eps = self.params.noise;
        for (shift, p) in [(-1, eps), (0, 1.0 - 2.0 * eps), (1, eps)] {
            out[(target + shift).clamp(0, last) as usize] += p;
        }
        Ok(())
    }

    fn reward(&self, x: usize, u: usize, agg: &NeighborhoodAggregate) -> f64 {
        let p = &self.params;
        -p.distance_cost * (p.bar as f64 - x as f64).abs()
            - p.move_cost * Self::displacement(u).abs() as f64
            - p.crowd_aversion * agg.weighted_in()[x]
    }
}

// ── Systemic risk ───────────────────────────────────────────────

pub mod systemic {
    pub const HIGH: usize = 0;
    pub const LOW: usize = 1;
    pub const BANKRUPT: usize = 2;
    pub const KEEP: usize = 0;
    pub const RAISE: usize = 1;
    pub const DECREASE: usize = 2;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemicRiskParams {
    pub horizon: usize,
    /// Shock parameter.
    pub beta: f64,
    /// Mixing rate of the raise/decrease actions.
    pub lambda: f64,
    pub k_h: f64,
    pub k_b: f64,
    /// Capital endowments `(xi_h, xi_l, xi_b)`.
    pub xi: [f64; 3],
    /// State weights `(w_h, w_l, w_b)`.
    pub w: [f64; 3],
    /// Initial distribution over `(h, l, b)`.
    pub mu0: [f64; 3],
}

impl Default for SystemicRiskParams {
    fn default() -> Self {
        Self {
            horizon: 50,
            beta: 0.6,
            lambda: 0.1,
            k_h: 0.04,
            k_b: 0.4,
            xi: [1.0, 0.0, -1.0],
            w: [1.0, 0.0, -1.0],
            mu0: [0.5, 0.5, 0.0],
        }
    }
}

impl SystemicRiskParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::Config(format!("systemic_risk.beta = {} outside (0, 1)", self.beta)));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!("systemic_risk.lambda = {} outside [0, 1]", self.lambda)));
        }
        if !(self.k_b > self.k_h && self.k_h > 0.0) {
            return Err(Error::Config(format!(
                "systemic_risk needs k_b > k_h > 0 (got k_h={}, k_b={})",
                self.k_h, self.k_b
            )));
        }
        let sum: f64 = self.mu0.iter().sum();
        if self.mu0.iter().any(|p| *p < 0.0) || (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Config("systemic_risk.mu0 must be a probability vector".into()));
        }
        if self.horizon == 0 {
            return Err(Error::Config("systemic_risk.horizon must be positive".into()));
        }
        Ok(())
    }
}

/// Liquidity `c_x` of a bank in state `x` and its clamp to `[-1, 1]`.
pub fn liquidity(x: usize, agg: &NeighborhoodAggregate, params: &SystemicRiskParams) -> (f64, f64) {
    let flow: f64 = (0..3)
        .map(|s| agg.weighted_in()[s] * params.w[s] - agg.weighted_out()[s] * (3.0 - params.w[s]))
        .sum();
    let c = params.xi[x] + flow;
    (c, c.clamp(-1.0, 1.0))
}

fn keep_row(i: usize, sigma: &[f64; 3], beta: f64) -> [f64; 3] {
    let s = sigma[i];
    let shock = if i == systemic::HIGH { beta } else { 0.0 };
    [
        (1.0 + s) / 4.0,
        (1.0 - 0.25 * s + shock) / 4.0,
        (2.0 - 0.75 * s - shock) / 4.0,
    ]
}

fn mix(lambda: f64, a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        (1.0 - lambda) * a[0] + lambda * b[0],
        (1.0 - lambda) * a[1] + lambda * b[1],
        (1.0 - lambda) * a[2] + lambda * b[2],
    ]
}

/// Row `M_{x, .}(u)` of the systemic-risk transition matrix given the
/// clamped liquidities of all three states.
pub fn systemic_transition_row(
    x: usize,
    u: usize,
    sigma: &[f64; 3],
    params: &SystemicRiskParams,
) -> Result<[f64; 3]> {
    use systemic::*;
    let (beta, lambda) = (params.beta, params.lambda);
    let keep = |i| keep_row(i, sigma, beta);
    let row = match (u, x) {
        (KEEP, _) | (RAISE, HIGH) | (DECREASE, BANKRUPT) => keep(x),
        (RAISE, LOW) => {
            let h = keep(HIGH);
            mix(lambda, keep(LOW), [h[0], h[1] - beta, h[2] + beta])
        }
        (RAISE, BANKRUPT) => mix(lambda, keep(BANKRUPT), keep(LOW)),
        (DECREASE, LOW) => mix(lambda, keep(LOW), keep(BANKRUPT)),
        (DECREASE, HIGH) => {
            let l = mix(lambda, keep(LOW), keep(BANKRUPT));
            mix(lambda, keep(HIGH), [l[0], l[1] + beta, l[2] - beta])
        }
        _ => return Err(Error::arg(format!("systemic risk has no state {x} / action {u}"))),
    };
    if row.iter().any(|p| !p.is_finite() || *p < -ROW_TOL) {
        return Err(Error::ModelConsistency(format!(
            "systemic risk row x={x} u={u} has a negative entry {row:?} (sigma={sigma:?}, beta={beta}, lambda={lambda})"
        )));
    }
    Ok(row.map(|p| p.max(0.0)))
}

/// Interbank lending game with states high / low liquidity / bankrupt and
/// actions keep / raise / decrease.
#[derive(Clone, Debug)]
pub struct SystemicRisk {
    params: SystemicRiskParams,
    name: String,
    states: Vec<String>,
    actions: Vec<String>,
}

impl SystemicRisk {
    pub fn new(params: SystemicRiskParams, adaptive: bool) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            name: if adaptive { "systemic-risk-adaptive" } else { "systemic-risk" }.into(),
            states: labels(&["h", "l", "b"]),
            actions: labels(&["k", "r", "d"]),
        })
    }

    pub fn standard(adaptive: bool) -> Self {
        Self::new(SystemicRiskParams::default(), adaptive).expect("default parameters are valid")
    }

    pub fn params(&self) -> &SystemicRiskParams {
        &self.params
    }

    pub fn sigmas(&self, agg: &NeighborhoodAggregate) -> [f64; 3] {
        [0, 1, 2].map(|x| liquidity(x, agg, &self.params).1)
    }
}

impl Environment for SystemicRisk {
    fn name(&self) -> &str {
        &self.name
    }

    fn state_labels(&self) -> &[String] {
        &self.states
    }

    fn action_labels(&self) -> &[String] {
        &self.actions
    }

    fn horizon(&self) -> usize {
        self.params.horizon
    }

    fn mu0(&self) -> &[f64] {
        &self.params.mu0
    }

    fn transition(&self, x: usize, u: usize, agg: &NeighborhoodAggregate, out: &mut [f64]) -> Result<()> {
        let row = systemic_transition_row(x, u, &self.sigmas(agg), &self.params)?;
        out.copy_from_slice(&row);
        Ok(())
    }

    fn reward(&self, x: usize, _u: usize, _agg: &NeighborhoodAggregate) -> f64 {
        match x {
            systemic::HIGH => -self.params.k_h,
            systemic::BANKRUPT => -self.params.k_b,
            _ => 0.0,
        }
    }
}

// ── Debug environment ───────────────────────────────────────────

/// One state, `actions` actions with identical constant reward. Every
/// policy is optimal and every mean field is a point mass.
#[derive(Clone, Debug)]
pub struct SingleState {
    horizon: usize,
    reward: f64,
    mu0: Vec<f64>,
    states: Vec<String>,
    actions: Vec<String>,
}

impl SingleState {
    pub fn new(horizon: usize, actions: usize, reward: f64) -> Self {
        Self {
            horizon,
            reward,
            mu0: vec![1.0],
            states: labels(&["x"]),
            actions: (0..actions.max(1)).map(|u| format!("u{u}")).collect(),
        }
    }
}

impl Environment for SingleState {
    fn name(&self) -> &str {
        "single-state"
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

    fn transition(&self, _x: usize, _u: usize, _agg: &NeighborhoodAggregate, out: &mut [f64]) -> Result<()> {
        out[0] = 1.0;
        Ok(())
    }

    fn reward(&self, _x: usize, _u: usize, _agg: &NeighborhoodAggregate) -> f64 {
        self.reward
    }
}

/// Color weights for the adaptive scenarios: colors 2 and 3 are active in
/// the first and second half of the horizon respectively, color 1 never.
pub fn adaptive_schedule(horizon: usize, k: usize) -> ColorWeightSchedule {
    ColorWeightSchedule::half_horizon(k, horizon)
}

/// Schedule for a scenario: half-horizon switching when adaptive, the
/// linear weights `c_h = h - 1` otherwise.
pub fn scenario_schedule(adaptive: bool, horizon: usize, k: usize) -> ColorWeightSchedule {
    if adaptive {
        adaptive_schedule(horizon, k)
    } else {
        ColorWeightSchedule::linear(k)
    }
}

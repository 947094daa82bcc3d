//! Experiment configuration and the subcommands of the `cdmfg` binary.
//!
//! A config is a TOML file with four optional tables and two top-level keys:
//!
//! ```toml
//! seed = 7
//! output = "runs/sis"
//!
//! [scenario]
//! env = "sis"                   # sis | sis-adaptive | beach | systemic-risk | systemic-risk-adaptive | single-state
//! digraphon = "rotated-uniform"
//!
//! [solver]
//! iterations = 200
//! grid = 20
//!
//! [sim]
//! n_list = [4, 16, 64, 256]
//! ```
//!
//! Unknown keys anywhere are rejected. Environment constants can be
//! overridden in `[scenario.sis]`, `[scenario.beach]`,
//! `[scenario.systemic_risk]` and `[scenario.single_state]`.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use cdmfg::digraphon::{ColorWeightSchedule, KDigraphon};
use cdmfg::environments::{
    scenario_schedule, Beach, BeachParams, Environment, SingleState, Sis, SisParams, SystemicRisk,
    SystemicRiskParams,
};
use cdmfg::export;
use cdmfg::finite_sim::{delta_mu, deviation_gap, ConvergenceRecord, GapReport};
use cdmfg::meanfield::PolicyEnsemble;
use cdmfg::solver::{solve_omd, OmdConfig, SolveReport};
use cdmfg::{Error, Result};
use serde::Deserialize;

pub const ENV_NAMES: &[&str] = &[
    "sis",
    "sis-adaptive",
    "beach",
    "systemic-risk",
    "systemic-risk-adaptive",
    "single-state",
];

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output: PathBuf,
    pub scenario: ScenarioConfig,
    pub solver: SolverConfig,
    pub sim: SimConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output: PathBuf::from("out"),
            scenario: ScenarioConfig::default(),
            solver: SolverConfig::default(),
            sim: SimConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub env: String,
    pub digraphon: String,
    /// Half-horizon color switching. Implied by the `-adaptive` env names.
    pub adaptive: bool,
    /// Static color strengths `c_{h,out}`, `c_{h,in}`; default `c_h = h - 1`.
    pub color_weights: Option<ColorWeights>,
    pub sis: SisParams,
    pub beach: BeachParams,
    pub systemic_risk: SystemicRiskParams,
    pub single_state: SingleStateParams,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            env: "sis".into(),
            digraphon: "rotated-uniform".into(),
            adaptive: false,
            color_weights: None,
            sis: SisParams::default(),
            beach: BeachParams::default(),
            systemic_risk: SystemicRiskParams::default(),
            single_state: SingleStateParams::default(),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColorWeights {
    pub out: Vec<f64>,
    #[serde(rename = "in")]
    pub inc: Vec<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SingleStateParams {
    pub horizon: usize,
    pub actions: usize,
    pub reward: f64,
}

impl Default for SingleStateParams {
    fn default() -> Self {
        Self {
            horizon: 10,
            actions: 2,
            reward: 0.0,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub grid: usize,
    pub probe_interval: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = OmdConfig::default();
        Self {
            iterations: d.iterations,
            learning_rate: d.learning_rate,
            grid: d.grid,
            probe_interval: d.probe_interval,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Population sizes for `converge`.
    pub n_list: Vec<usize>,
    /// Independent graphs and runs per population size.
    pub samples: usize,
    /// Number of probed agents for `gap`.
    pub deviation_agents: usize,
    /// Population size for `gap`.
    pub gap_n: usize,
    /// Monte Carlo runs per probed agent and arm.
    pub gap_runs: usize,
    /// Node count for `sample-graph`.
    pub graph_n: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_list: vec![4, 16, 64, 256],
            samples: 100,
            deviation_agents: 10,
            gap_n: 100,
            gap_runs: 200,
            graph_n: 500,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.omd().validate()?;
        let sim = &self.sim;
        let bad = |key: &str, why: &str| Err(Error::Config(format!("sim.{key} {why}")));
        if sim.n_list.is_empty() || sim.n_list.contains(&0) {
            return bad("n_list", "must be a nonempty list of positive sizes");
        }
        if sim.samples < 2 {
            return bad("samples", "must be at least 2");
        }
        if sim.deviation_agents == 0 {
            return bad("deviation_agents", "must be positive");
        }
        if sim.gap_n == 0 {
            return bad("gap_n", "must be positive");
        }
        if sim.gap_runs < 2 {
            return bad("gap_runs", "must be at least 2");
        }
        if sim.graph_n == 0 {
            return bad("graph_n", "must be positive");
        }
        self.build()?;
        Ok(())
    }

    pub fn omd(&self) -> OmdConfig {
        OmdConfig {
            iterations: self.solver.iterations,
            learning_rate: self.solver.learning_rate,
            grid: self.solver.grid,
            probe_interval: self.solver.probe_interval,
            seed: self.seed,
        }
    }

    /// Environment, digraphon and color schedule of the scenario.
    pub fn build(&self) -> Result<Scenario> {
        let sc = &self.scenario;
        let adaptive = sc.adaptive || sc.env.ends_with("-adaptive");
        let env: Box<dyn Environment> = match sc.env.as_str() {
            "sis" | "sis-adaptive" => Box::new(Sis::new(sc.sis.clone(), adaptive)?),
            "systemic-risk" | "systemic-risk-adaptive" => {
                Box::new(SystemicRisk::new(sc.systemic_risk.clone(), adaptive)?)
            }
            "beach" => {
                if adaptive {
                    return Err(Error::Config("scenario.adaptive: beach has no adaptive variant".into()));
                }
                Box::new(Beach::new(sc.beach.clone())?)
            }
            "single-state" => {
                let p = &sc.single_state;
                if p.horizon == 0 || p.actions == 0 || !p.reward.is_finite() {
                    return Err(Error::Config("scenario.single_state needs positive horizon and actions".into()));
                }
                Box::new(SingleState::new(p.horizon, p.actions, p.reward))
            }
            other => {
                return Err(Error::Config(format!(
                    "scenario.env: unknown environment '{other}' (expected one of {})",
                    ENV_NAMES.join(", ")
                )))
            }
        };
        let w = KDigraphon::builtin(&sc.digraphon)
            .map_err(|e| Error::Config(format!("scenario.digraphon: {e}")))?;
        let schedule = match &sc.color_weights {
            Some(_) if adaptive => {
                return Err(Error::Config(
                    "scenario.color_weights cannot be combined with an adaptive scenario".into(),
                ))
            }
            Some(cw) => {
                let s = ColorWeightSchedule::fixed(cw.out.clone(), cw.inc.clone())
                    .map_err(|e| Error::Config(format!("scenario.color_weights: {e}")))?;
                if s.k() != w.k() {
                    return Err(Error::Config(format!(
                        "scenario.color_weights has {} colors but '{}' has {}",
                        s.k(),
                        w.name(),
                        w.k()
                    )));
                }
                s
            }
            None => scenario_schedule(adaptive, env.horizon(), w.k()),
        };
        Ok(Scenario { env, w, schedule })
    }
}

pub struct Scenario {
    pub env: Box<dyn Environment>,
    pub w: KDigraphon,
    pub schedule: ColorWeightSchedule,
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

/// Runs mirror descent and writes `exploitability.csv`, `policy.csv` and
/// `meanfield.csv` to `out`.
pub fn cmd_solve(cfg: &ExperimentConfig, out: &Path) -> Result<SolveReport> {
    let sc = cfg.build()?;
    let report = solve_omd(sc.env.as_ref(), &sc.w, &sc.schedule, &cfg.omd())?;
    export::write_exploitability(create(out, "exploitability.csv")?, &report.exploitability_history)?;
    export::write_policy(create(out, "policy.csv")?, sc.env.as_ref(), &report.policy)?;
    export::write_meanfield(create(out, "meanfield.csv")?, sc.env.as_ref(), &report.meanfield)?;
    Ok(report)
}

/// Loads the policy from `policy`, or from `out/policy.csv` written by an
/// earlier `solve`.
pub fn load_policy(env: &dyn Environment, policy: Option<&Path>, out: &Path) -> Result<PolicyEnsemble> {
    let path = policy.map(Path::to_path_buf).unwrap_or_else(|| out.join("policy.csv"));
    if !path.exists() {
        return Err(Error::Argument(format!(
            "no policy at {}: run `solve` first or pass --policy",
            path.display()
        )));
    }
    let pi = export::read_policy(File::open(&path)?, env)?;
    Ok(pi)
}

/// Writes `convergence.csv` with one row per population size.
pub fn cmd_converge(cfg: &ExperimentConfig, out: &Path, policy: Option<&Path>) -> Result<Vec<ConvergenceRecord>> {
    let sc = cfg.build()?;
    let pi = load_policy(sc.env.as_ref(), policy, out)?;
    let records = delta_mu(
        sc.env.as_ref(),
        &sc.w,
        &sc.schedule,
        &pi,
        &cfg.sim.n_list,
        cfg.sim.samples,
        cfg.seed,
    )?;
    export::write_convergence(create(out, "convergence.csv")?, &records)?;
    Ok(records)
}

/// Writes `gap.csv` with one row per probed agent.
pub fn cmd_gap(cfg: &ExperimentConfig, out: &Path, policy: Option<&Path>) -> Result<GapReport> {
    let sc = cfg.build()?;
    let pi = load_policy(sc.env.as_ref(), policy, out)?;
    let report = deviation_gap(
        sc.env.as_ref(),
        &sc.w,
        &sc.schedule,
        &pi,
        cfg.sim.gap_n,
        cfg.sim.gap_runs,
        cfg.sim.deviation_agents,
        cfg.seed,
    )?;
    export::write_gap(create(out, "gap.csv")?, &report)?;
    Ok(report)
}

/// Samples one `sim.graph_n`-node graph and writes `edges.csv` and `nodes.csv`.
pub fn cmd_sample_graph(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let w = KDigraphon::builtin(&cfg.scenario.digraphon)
        .map_err(|e| Error::Config(format!("scenario.digraphon: {e}")))?;
    let graph = w.sample_graph(cfg.sim.graph_n, cfg.seed)?;
    graph.write_edges_csv(create(out, "edges.csv")?)?;
    graph.write_nodes_csv(create(out, "nodes.csv")?)?;
    Ok(())
}

/// Process exit status for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Argument(_) => 2,
        Error::ModelConsistency(_) => 3,
        _ => 1,
    }
}

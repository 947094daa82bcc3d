//! CSV output shared by the library and the command line tool.
//!
//! Floats are written with 17 significant digits so that values round-trip
//! exactly. Schemas:
//!
//! | file                | columns                                        |
//! |---------------------|------------------------------------------------|
//! | `exploitability.csv`| `iteration,exploitability`                     |
//! | `policy.csv`        | `t,alpha,state,action,probability`             |
//! | `meanfield.csv`     | `t,alpha,state,probability`                    |
//! | `convergence.csv`   | `N,delta_mu_mean,ci_low,ci_high,samples`       |
//! | `gap.csv`           | `agent_index,alpha,gap_estimate,std_error`     |
//! | `edges.csv`         | `i,j,color`                                    |
//! | `nodes.csv`         | `i,position`                                   |

use std::collections::HashMap;
use std::io::{Read, Write};

use crate::environments::Environment;
use crate::finite_sim::{ConvergenceRecord, GapReport};
use crate::meanfield::{AgentPolicy, IndexGrid, MeanFieldEnsemble, PolicyEnsemble};
use crate::solver::ExploitabilityPoint;
use crate::{Error, Result};

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_exploitability<W: Write>(out: W, history: &[ExploitabilityPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iteration", "exploitability"])?;
    for p in history {
        w.write_record([p.iteration.to_string(), fmt_f64(p.exploitability)])?;
    }
    w.flush()?;
    Ok(())
}

/// One row per `(t, alpha_m, x, u)` with `t < T`.
pub fn write_policy<W: Write>(out: W, env: &dyn Environment, pi: &PolicyEnsemble) -> Result<()> {
    let (states, actions) = (env.state_labels(), env.action_labels());
    let grid = pi.grid();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "alpha", "state", "action", "probability"])?;
    for t in 0..pi.horizon() {
        for m in 0..grid.len() {
            let alpha = fmt_f64(grid.point(m));
            for (x, sx) in states.iter().enumerate() {
                for (u, su) in pi.policy(m).probs(t, x).iter().zip(actions) {
                    w.write_record([t.to_string(), alpha.clone(), sx.to_string(), su.to_string(), fmt_f64(*u)])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a `policy.csv` back into an ensemble for `env`.
///
/// The grid size is inferred from the distinct `alpha` values, which must be
/// the midpoints of a uniform grid; every `(t, alpha, state, action)` cell
/// must appear exactly once.
pub fn read_policy<R: Read>(input: R, env: &dyn Environment) -> Result<PolicyEnsemble> {
    let states: HashMap<String, usize> = env
        .state_labels()
        .iter()
        .enumerate()
        .map(|(i, s)| (s.to_string(), i))
        .collect();
    let actions: HashMap<String, usize> = env
        .action_labels()
        .iter()
        .enumerate()
        .map(|(i, s)| (s.to_string(), i))
        .collect();
    let (horizon, nx, nu) = (env.horizon(), env.num_states(), env.num_actions());

    let mut rows = Vec::new();
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["t", "alpha", "state", "action", "probability"] {
        return Err(Error::arg(format!("unexpected policy header {headers:?}")));
    }
    for rec in rdr.records() {
        let rec = rec?;
        let bad = |what: &str| Error::arg(format!("bad {what} in policy row {rec:?}"));
        let t: usize = rec[0].parse().map_err(|_| bad("t"))?;
        let alpha: f64 = rec[1].parse().map_err(|_| bad("alpha"))?;
        let x = *states.get(&rec[2]).ok_or_else(|| bad("state"))?;
        let u = *actions.get(&rec[3]).ok_or_else(|| bad("action"))?;
        let p: f64 = rec[4].parse().map_err(|_| bad("probability"))?;
        if t >= horizon {
            return Err(bad("t"));
        }
        rows.push((t, alpha, x, u, p));
    }
    let cells = horizon * nx * nu;
    if rows.is_empty() || rows.len() % cells != 0 {
        return Err(Error::arg(format!(
            "policy has {} rows, not a multiple of T*|X|*|U| = {cells}",
            rows.len()
        )));
    }
    let grid = IndexGrid::new(rows.len() / cells)?;
    let mut probs = vec![vec![f64::NAN; cells]; grid.len()];
    for (t, alpha, x, u, p) in rows {
        let m = grid.nearest(alpha);
        if (grid.point(m) - alpha).abs() > 1e-9 {
            return Err(Error::arg(format!("alpha {alpha} is not a midpoint of a {}-point grid", grid.len())));
        }
        let slot = &mut probs[m][(t * nx + x) * nu + u];
        if !slot.is_nan() {
            return Err(Error::arg(format!("duplicate policy entry t={t} alpha={alpha}")));
        }
        *slot = p;
    }
    let policies = probs
        .into_iter()
        .map(|p| AgentPolicy::from_probs(horizon, nx, nu, p))
        .collect::<Result<Vec<_>>>()?;
    PolicyEnsemble::new(grid, policies)
}

/// One row per `(t, alpha_m, x)` for `t = 0..=T`.
pub fn write_meanfield<W: Write>(out: W, env: &dyn Environment, mu: &MeanFieldEnsemble) -> Result<()> {
    let labels = env.state_labels();
    let grid = mu.grid();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "alpha", "state", "probability"])?;
    for t in 0..=mu.horizon() {
        for m in 0..grid.len() {
            let alpha = fmt_f64(grid.point(m));
            for (p, label) in mu.get(t, m).iter().zip(labels) {
                w.write_record([t.to_string(), alpha.clone(), label.to_string(), fmt_f64(*p)])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_convergence<W: Write>(out: W, records: &[ConvergenceRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["N", "delta_mu_mean", "ci_low", "ci_high", "samples"])?;
    for r in records {
        w.write_record([
            r.n.to_string(),
            fmt_f64(r.delta_mu_mean),
            fmt_f64(r.ci_low),
            fmt_f64(r.ci_high),
            r.samples.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_gap<W: Write>(out: W, report: &GapReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["agent_index", "alpha", "gap_estimate", "std_error"])?;
    for e in &report.entries {
        w.write_record([e.agent.to_string(), fmt_f64(e.alpha), fmt_f64(e.gap), fmt_f64(e.std_error)])?;
    }
    w.flush()?;
    Ok(())
}

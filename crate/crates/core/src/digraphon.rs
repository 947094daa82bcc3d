//! k-colored digraphons.
//!
//! A [`KDigraphon`] is a tuple of `k` kernels `W^1..W^k : [0,1]^2 -> [0,1]`
//! summing pointwise to one. `W^h(x, y)` is the probability that the directed
//! edge from a node at position `x` to a node at position `y` has color `h`.
//! Color 1 plays the "no edge" role in all builtin scenarios.
//!
//! Public entry points use 1-based colors (`1..=k`) as in CSV exports;
//! internal slices are 0-based.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;

use crate::rng::{sample_index, stream_rng};
use crate::{Error, Result};

type KernelFn = dyn Fn(f64, f64) -> f64 + Send + Sync;

/// Tolerance for the partition constraint `sum_h W^h = 1`.
pub const PARTITION_TOL: f64 = 1e-12;

/// Piecewise-constant kernel on an `n x n` partition of the unit square into
/// cells `((i-1)/n, i/n] x ((j-1)/n, j/n]`.
#[derive(Clone, Debug, PartialEq)]
pub struct StepKernel {
    n: usize,
    cells: Vec<f64>,
}

impl StepKernel {
    pub fn new(n: usize, cells: Vec<f64>) -> Result<Self> {
        if n == 0 || cells.len() != n * n {
            return Err(Error::arg(format!(
                "step kernel needs n*n cells, got n={n} and {} cells",
                cells.len()
            )));
        }
        if cells.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::arg("step kernel values must lie in [0, 1]"));
        }
        Ok(Self { n, cells })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.cells[cell_index(x, self.n) * self.n + cell_index(y, self.n)]
    }
}

/// Index of the interval `((i-1)/n, i/n]` (0-based) containing `x`; `x = 0`
/// belongs to the first interval.
pub fn cell_index(x: f64, n: usize) -> usize {
    ((x * n as f64).ceil() as usize).saturating_sub(1).min(n - 1)
}

/// A single kernel: either a closed-form evaluator or a step table.
#[derive(Clone)]
pub enum Kernel {
    Closed(Arc<KernelFn>),
    Step(StepKernel),
}

impl Kernel {
    pub fn closed(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Kernel::Closed(Arc::new(f))
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            Kernel::Closed(f) => f(x, y),
            Kernel::Step(s) => s.eval(x, y),
        }
    }
}

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kernel::Closed(_) => f.write_str("Kernel::Closed(..)"),
            Kernel::Step(s) => write!(f, "Kernel::Step(n={})", s.n),
        }
    }
}

/// Rotated uniform attachment kernel `1 - x(1 - y)`.
pub fn rotated_uniform_kernel(x: f64, y: f64) -> f64 {
    1.0 - x * (1.0 - y)
}

/// Left-rotated uniform attachment kernel `1 - (1 - x)y`.
pub fn left_uniform_kernel(x: f64, y: f64) -> f64 {
    1.0 - (1.0 - x) * y
}

/// Rotated ranked attachment kernel `1 - max(x, 1 - y)`.
pub fn rotated_ranked_kernel(x: f64, y: f64) -> f64 {
    1.0 - x.max(1.0 - y)
}

/// Names of the builtin scenarios accepted by [`KDigraphon::builtin`].
pub const BUILTIN_NAMES: &[&str] = &[
    "rotated-uniform",
    "double-rotated-uniform",
    "combined-uniform-ranked",
    "constant:<p>",
];

#[derive(Clone, Debug)]
pub struct KDigraphon {
    name: String,
    kernels: Vec<Kernel>,
}

impl KDigraphon {
    /// Builds a k-digraphon and checks the partition constraint on a
    /// 101 x 101 grid.
    pub fn new(name: impl Into<String>, kernels: Vec<Kernel>) -> Result<Self> {
        if kernels.is_empty() {
            return Err(Error::arg("a k-digraphon needs at least one color"));
        }
        let w = Self {
            name: name.into(),
            kernels,
        };
        let err = w.partition_error(101);
        if !(err <= PARTITION_TOL) {
            return Err(Error::arg(format!(
                "kernels of '{}' do not sum to one (max deviation {err:e})",
                w.name
            )));
        }
        Ok(w)
    }

    /// Two colors with `W^2 = p` and `W^1 = 1 - p` everywhere.
    pub fn constant(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::arg(format!("constant digraphon needs p in [0,1], got {p}")));
        }
        Self::new(
            format!("constant:{p}"),
            vec![
                Kernel::closed(move |_, _| 1.0 - p),
                Kernel::closed(move |_, _| p),
            ],
        )
    }

    /// `W^2 = W_r-unif`, `W^1 = 1 - W^2`.
    pub fn rotated_uniform() -> Self {
        Self::new(
            "rotated-uniform",
            vec![
                Kernel::closed(|x, y| 1.0 - rotated_uniform_kernel(x, y)),
                Kernel::closed(rotated_uniform_kernel),
            ],
        )
        .expect("builtin satisfies the partition constraint")
    }

    /// `W^2 = W_r-unif / 2`, `W^3 = W_l-unif / 2`, `W^1` the complement.
    pub fn double_rotated_uniform() -> Self {
        Self::new(
            "double-rotated-uniform",
            vec![
                Kernel::closed(|x, y| {
                    1.0 - 0.5 * rotated_uniform_kernel(x, y) - 0.5 * left_uniform_kernel(x, y)
                }),
                Kernel::closed(|x, y| 0.5 * rotated_uniform_kernel(x, y)),
                Kernel::closed(|x, y| 0.5 * left_uniform_kernel(x, y)),
            ],
        )
        .expect("builtin satisfies the partition constraint")
    }

    /// `W^2 = W_r-unif / 2`, `W^3 = W_r-rank / 2`, `W^1` the complement.
    pub fn combined_uniform_ranked() -> Self {
        Self::new(
            "combined-uniform-ranked",
            vec![
                Kernel::closed(|x, y| {
                    1.0 - 0.5 * rotated_uniform_kernel(x, y) - 0.5 * rotated_ranked_kernel(x, y)
                }),
                Kernel::closed(|x, y| 0.5 * rotated_uniform_kernel(x, y)),
                Kernel::closed(|x, y| 0.5 * rotated_ranked_kernel(x, y)),
            ],
        )
        .expect("builtin satisfies the partition constraint")
    }

    /// Looks up a builtin scenario by its config name.
    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "rotated-uniform" => Ok(Self::rotated_uniform()),
            "double-rotated-uniform" => Ok(Self::double_rotated_uniform()),
            "combined-uniform-ranked" => Ok(Self::combined_uniform_ranked()),
            other => {
                if let Some(p) = other.strip_prefix("constant:") {
                    let p: f64 = p.trim().parse().map_err(|_| {
                        Error::Config(format!("cannot parse constant digraphon value '{p}'"))
                    })?;
                    Self::constant(p).map_err(|e| Error::Config(e.to_string()))
                } else {
                    Err(Error::Config(format!(
                        "unknown digraphon '{other}' (expected one of {})",
                        BUILTIN_NAMES.join(", ")
                    )))
                }
            }
        }
    }

    /// Step digraphon of a colored digraph: `W^h = 1` on `I_i x I_j` iff edge
    /// `i -> j` has color `h`.
    pub fn step(graph: &SampledColoredDigraph) -> Self {
        let n = graph.n();
        let kernels = (0..graph.k())
            .map(|h| {
                let cells = graph
                    .colors
                    .iter()
                    .map(|&c| if c as usize == h { 1.0 } else { 0.0 })
                    .collect();
                Kernel::Step(StepKernel { n, cells })
            })
            .collect();
        Self {
            name: format!("step(N={n})"),
            kernels,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn k(&self) -> usize {
        self.kernels.len()
    }

    pub fn kernels(&self) -> &[Kernel] {
        &self.kernels
    }

    /// `W^h(x, y)` for a 1-based color `h`.
    pub fn eval(&self, h: usize, x: f64, y: f64) -> Result<f64> {
        if h == 0 || h > self.k() {
            return Err(Error::arg(format!("color {h} outside 1..={}", self.k())));
        }
        check_unit("x", x)?;
        check_unit("y", y)?;
        Ok(self.kernels[h - 1].eval(x, y))
    }

    /// Writes all `k` kernel values at `(x, y)` into `out` (0-based colors).
    pub fn probs_into(&self, x: f64, y: f64, out: &mut [f64]) {
        for (o, w) in out.iter_mut().zip(&self.kernels) {
            *o = w.eval(x, y);
        }
    }

    /// Largest deviation from the partition constraint, or from `[0, 1]`, on
    /// a `grid x grid` lattice including the boundary.
    pub fn partition_error(&self, grid: usize) -> f64 {
        let mut worst: f64 = 0.0;
        let mut probs = vec![0.0; self.k()];
        let step = 1.0 / (grid.max(2) - 1) as f64;
        for i in 0..grid.max(2) {
            for j in 0..grid.max(2) {
                self.probs_into(i as f64 * step, j as f64 * step, &mut probs);
                let sum: f64 = probs.iter().sum();
                worst = worst.max((sum - 1.0).abs());
                for &p in &probs {
                    if !(0.0..=1.0).contains(&p) {
                        worst = worst.max(if p < 0.0 { -p } else { p - 1.0 });
                    }
                    if p.is_nan() {
                        return f64::NAN;
                    }
                }
            }
        }
        worst
    }

    /// Samples an `n`-node colored digraph.
    ///
    /// Positions are i.i.d. uniform and nodes are labeled in increasing
    /// position order, so node `i` (1-based) sits near `i/n`. Each directed
    /// edge `i -> j` with `i != j` gets color `h` with probability
    /// `W^h(x_i, x_j)` independently; self-edges get color 1.
    pub fn sample_graph(&self, n: usize, seed: u64) -> Result<SampledColoredDigraph> {
        if n == 0 {
            return Err(Error::arg("sample_graph needs n >= 1"));
        }
        let mut pos_rng = stream_rng(seed, 0);
        let mut positions: Vec<f64> = (0..n).map(|_| pos_rng.gen::<f64>()).collect();
        positions.sort_by(|a, b| a.total_cmp(b));

        let k = self.k();
        let rows: Vec<Vec<u8>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream_rng(seed, i as u64 + 1);
                let mut probs = vec![0.0; k];
                (0..n)
                    .map(|j| {
                        if i == j {
                            return 0;
                        }
                        self.probs_into(positions[i], positions[j], &mut probs);
                        sample_index(&probs, rng.gen::<f64>()) as u8
                    })
                    .collect()
            })
            .collect();

        Ok(SampledColoredDigraph {
            k,
            positions,
            colors: rows.concat(),
            self_loop_color: Some(0),
        })
    }
}

fn check_unit(label: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::arg(format!("{label} = {v} outside [0, 1]")))
    }
}

/// A finite digraph whose every ordered pair carries one of `k` colors.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledColoredDigraph {
    k: usize,
    positions: Vec<f64>,
    /// Row-major `n x n`, entry `(i, j)` is the 0-based color of `i -> j`.
    colors: Vec<u8>,
    /// `Some(c)` when self-edges were assigned color `c` by convention.
    self_loop_color: Option<u8>,
}

impl SampledColoredDigraph {
    /// Builds a graph from an explicit 1-based color matrix; positions are
    /// set to the interval right endpoints `i/n`.
    pub fn from_colors(k: usize, colors: &[Vec<usize>]) -> Result<Self> {
        let n = colors.len();
        if n == 0 || k == 0 || k > u8::MAX as usize {
            return Err(Error::arg("graph needs n >= 1 and 1 <= k <= 255"));
        }
        let mut flat = Vec::with_capacity(n * n);
        for row in colors {
            if row.len() != n {
                return Err(Error::arg("color matrix must be square"));
            }
            for &c in row {
                if c == 0 || c > k {
                    return Err(Error::arg(format!("color {c} outside 1..={k}")));
                }
                flat.push((c - 1) as u8);
            }
        }
        Ok(Self {
            k,
            positions: (1..=n).map(|i| i as f64 / n as f64).collect(),
            colors: flat,
            self_loop_color: None,
        })
    }

    pub fn n(&self) -> usize {
        self.positions.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn self_loop_color(&self) -> Option<usize> {
        self.self_loop_color.map(usize::from)
    }

    /// 0-based color of the edge `i -> j` (0-based nodes).
    #[inline]
    pub fn color(&self, i: usize, j: usize) -> usize {
        self.colors[i * self.n() + j] as usize
    }

    /// Row-major 0-based color matrix.
    pub fn color_matrix(&self) -> &[u8] {
        &self.colors
    }

    /// Transposed color matrix: entry `(i, j)` is the color of `j -> i`.
    pub fn incoming_color_matrix(&self) -> Vec<u8> {
        let n = self.n();
        let mut t = vec![0u8; n * n];
        for i in 0..n {
            for j in 0..n {
                t[j * n + i] = self.colors[i * n + j];
            }
        }
        t
    }

    /// Fraction of off-diagonal edges carrying each color (0-based).
    pub fn color_frequencies(&self) -> Vec<f64> {
        let n = self.n();
        let mut counts = vec![0usize; self.k];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    counts[self.color(i, j)] += 1;
                }
            }
        }
        let total = (n * n.saturating_sub(1)).max(1) as f64;
        counts.into_iter().map(|c| c as f64 / total).collect()
    }

    /// Writes the off-diagonal edge list `(i, j, color)` with 1-based nodes and colors.
    pub fn write_edges_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["i", "j", "color"])?;
        let n = self.n();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    w.write_record([
                        (i + 1).to_string(),
                        (j + 1).to_string(),
                        (self.color(i, j) + 1).to_string(),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Writes node positions `(i, position)` with 1-based nodes.
    pub fn write_nodes_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["i", "position"])?;
        for (i, x) in self.positions.iter().enumerate() {
            w.write_record([(i + 1).to_string(), crate::export::fmt_f64(*x)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Options for the cut-norm and operator-norm heuristics.
#[derive(Clone, Copy, Debug)]
pub struct CutNormOptions {
    /// Resolution `m` of the `m x m` discretization.
    pub grid: usize,
    pub restarts: usize,
    /// Sub-samples per axis used to average each discretization cell.
    pub subsamples: usize,
    pub seed: u64,
}

impl Default for CutNormOptions {
    fn default() -> Self {
        Self {
            grid: 100,
            restarts: 20,
            subsamples: 4,
            seed: 0,
        }
    }
}

/// Cell averages of `A^h - B^h` for every color on an `m x m` grid.
fn difference_tables(a: &KDigraphon, b: &KDigraphon, opts: &CutNormOptions) -> Result<Vec<Vec<f64>>> {
    if a.k() != b.k() {
        return Err(Error::arg(format!(
            "color count mismatch: {} vs {}",
            a.k(),
            b.k()
        )));
    }
    if opts.grid < 2 {
        return Err(Error::arg("cut norm grid must be at least 2"));
    }
    let m = opts.grid;
    let s = opts.subsamples.max(1);
    let offsets: Vec<f64> = (0..s).map(|q| (q as f64 + 0.5) / s as f64).collect();
    let tables = (0..a.k())
        .map(|h| {
            let (wa, wb) = (&a.kernels[h], &b.kernels[h]);
            (0..m * m)
                .into_par_iter()
                .map(|cell| {
                    let (i, j) = (cell / m, cell % m);
                    let mut acc = 0.0;
                    for &ox in &offsets {
                        let x = (i as f64 + ox) / m as f64;
                        for &oy in &offsets {
                            let y = (j as f64 + oy) / m as f64;
                            acc += wa.eval(x, y) - wb.eval(x, y);
                        }
                    }
                    acc / (s * s) as f64
                })
                .collect()
        })
        .collect();
    Ok(tables)
}

fn random_subset<R: Rng>(rng: &mut R, m: usize) -> Vec<bool> {
    (0..m).map(|_| rng.gen::<bool>()).collect()
}

/// Greedy lower bound on `max_{S,T} |sum_{S x T} d| / m^2` for one table.
fn matrix_cut_norm<R: Rng>(d: &[f64], m: usize, restarts: usize, rng: &mut R) -> f64 {
    let total: f64 = d.iter().sum();
    let mut best = total.abs();
    for _ in 0..restarts {
        let start = random_subset(rng, m);
        for sign in [1.0, -1.0] {
            let mut rows = start.clone();
            for _ in 0..100 {
                let mut col_sum = vec![0.0; m];
                for (i, _) in rows.iter().enumerate().filter(|(_, &r)| r) {
                    for (c, v) in col_sum.iter_mut().zip(&d[i * m..(i + 1) * m]) {
                        *c += sign * v;
                    }
                }
                let cols: Vec<bool> = col_sum.iter().map(|&c| c > 0.0).collect();
                let row_sum: Vec<f64> = (0..m)
                    .map(|i| {
                        d[i * m..(i + 1) * m]
                            .iter()
                            .zip(&cols)
                            .filter(|(_, &c)| c)
                            .map(|(v, _)| sign * v)
                            .sum()
                    })
                    .collect();
                let next: Vec<bool> = row_sum.iter().map(|&r| r > 0.0).collect();
                let value: f64 = row_sum.iter().filter(|&&r| r > 0.0).sum();
                best = best.max(value);
                if next == rows {
                    break;
                }
                rows = next;
            }
        }
    }
    best / (m * m) as f64
}

/// Heuristic lower bound on `sum_h ||A^h - B^h||_cut`.
///
/// Each color difference is discretized to an `m x m` table of cell averages
/// and the indicator sets `S, T` are optimized by alternating maximization
/// from random starts (for both signs of the difference). The exact cut norm
/// is intractable; the estimate is a convergence diagnostic. It is symmetric
/// in its arguments and zero for identical inputs.
pub fn cut_norm_estimate(a: &KDigraphon, b: &KDigraphon, opts: &CutNormOptions) -> Result<f64> {
    let tables = difference_tables(a, b, opts)?;
    let mut rng = stream_rng(opts.seed, 0);
    Ok(tables
        .iter()
        .map(|d| matrix_cut_norm(d, opts.grid, opts.restarts, &mut rng))
        .sum())
}

/// Heuristic lower bound on `sum_h ||A^h - B^h||_{L_inf -> L_1}`, maximizing
/// over sign vectors `f` by alternating `g = sign(D f)`, `f = sign(D^T g)`.
pub fn linf_l1_estimate(a: &KDigraphon, b: &KDigraphon, opts: &CutNormOptions) -> Result<f64> {
    let tables = difference_tables(a, b, opts)?;
    let m = opts.grid;
    let mut rng = stream_rng(opts.seed, 1);
    let mut total = 0.0;
    for d in &tables {
        let mut best: f64 = 0.0;
        for r in 0..opts.restarts.max(1) {
            let mut f: Vec<f64> = if r == 0 {
                vec![1.0; m]
            } else {
                (0..m).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect()
            };
            for _ in 0..100 {
                let df: Vec<f64> = (0..m)
                    .map(|i| d[i * m..(i + 1) * m].iter().zip(&f).map(|(v, s)| v * s).sum())
                    .collect();
                best = best.max(df.iter().map(|v: &f64| v.abs()).sum());
                let g: Vec<f64> = df.iter().map(|&v| if v >= 0.0 { 1.0 } else { -1.0 }).collect();
                let next: Vec<f64> = (0..m)
                    .map(|j| {
                        let s: f64 = (0..m).map(|i| d[i * m + j] * g[i]).sum();
                        if s >= 0.0 {
                            1.0
                        } else {
                            -1.0
                        }
                    })
                    .collect();
                if next == f {
                    break;
                }
                f = next;
            }
        }
        total += best / (m * m) as f64;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_builtins() -> Vec<KDigraphon> {
        vec![
            KDigraphon::rotated_uniform(),
            KDigraphon::double_rotated_uniform(),
            KDigraphon::combined_uniform_ranked(),
            KDigraphon::constant(0.3).unwrap(),
        ]
    }

    #[test]
    fn eval_matches_closed_forms() {
        let ru = KDigraphon::builtin("rotated-uniform").unwrap();
        assert_eq!(ru.eval(2, 0.5, 0.5).unwrap(), 0.75);
        assert_eq!(ru.eval(2, 1.0, 0.0).unwrap(), 0.0);
        assert_eq!(ru.eval(1, 1.0, 0.0).unwrap(), 1.0);

        let comb = KDigraphon::builtin("combined-uniform-ranked").unwrap();
        assert!((comb.eval(3, 0.2, 0.9).unwrap() - 0.4).abs() < 1e-15);
        assert_eq!(comb.eval(2, 0.0, 1.0).unwrap(), 0.5);
        assert_eq!(comb.eval(3, 0.0, 1.0).unwrap(), 0.5);
        assert_eq!(comb.eval(1, 0.0, 1.0).unwrap(), 0.0);

        let dr = KDigraphon::builtin("double-rotated-uniform").unwrap();
        assert_eq!(dr.eval(2, 0.0, 0.0).unwrap(), 0.5);
        assert_eq!(dr.eval(3, 0.0, 0.0).unwrap(), 0.5);
        assert_eq!(dr.eval(1, 0.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn eval_rejects_bad_arguments() {
        let w = KDigraphon::rotated_uniform();
        assert!(matches!(w.eval(0, 0.5, 0.5), Err(Error::Argument(_))));
        assert!(matches!(w.eval(3, 0.5, 0.5), Err(Error::Argument(_))));
        assert!(matches!(w.eval(1, -0.1, 0.5), Err(Error::Argument(_))));
        assert!(matches!(w.eval(1, 0.5, 1.5), Err(Error::Argument(_))));
    }

    #[test]
    fn builtin_names() {
        assert_eq!(KDigraphon::builtin("constant:0.25").unwrap().k(), 2);
        assert_eq!(KDigraphon::builtin("double-rotated-uniform").unwrap().k(), 3);
        assert!(matches!(KDigraphon::builtin("erdos"), Err(Error::Config(_))));
        assert!(matches!(KDigraphon::builtin("constant:abc"), Err(Error::Config(_))));
        assert!(matches!(KDigraphon::builtin("constant:1.5"), Err(Error::Config(_))));
    }

    #[test]
    fn partition_holds_for_builtins() {
        for w in all_builtins() {
            assert!(w.partition_error(101) <= PARTITION_TOL, "{}", w.name());
        }
    }

    #[test]
    fn new_rejects_non_partition() {
        let bad = KDigraphon::new(
            "bad",
            vec![Kernel::closed(|_, _| 0.5), Kernel::closed(|_, _| 0.4)],
        );
        assert!(bad.is_err());
    }

    #[test]
    fn cell_index_uses_left_open_intervals() {
        assert_eq!(cell_index(0.0, 2), 0);
        assert_eq!(cell_index(0.5, 2), 0);
        assert_eq!(cell_index(0.500_001, 2), 1);
        assert_eq!(cell_index(1.0, 2), 1);
    }

    #[test]
    fn step_digraphon_single_node() {
        let g = SampledColoredDigraph::from_colors(2, &[vec![1]]).unwrap();
        let w = KDigraphon::step(&g);
        for &(x, y) in &[(0.0, 0.0), (0.3, 0.9), (1.0, 1.0)] {
            assert_eq!(w.eval(1, x, y).unwrap(), 1.0);
            assert_eq!(w.eval(2, x, y).unwrap(), 0.0);
        }
    }

    #[test]
    fn step_digraphon_two_nodes() {
        let g = SampledColoredDigraph::from_colors(2, &[vec![1, 2], vec![1, 1]]).unwrap();
        let w = KDigraphon::step(&g);
        assert_eq!(w.eval(2, 0.25, 0.75).unwrap(), 1.0);
        assert_eq!(w.eval(2, 0.5, 1.0).unwrap(), 1.0);
        assert_eq!(w.eval(2, 0.0, 0.51).unwrap(), 1.0);
        assert_eq!(w.eval(2, 0.5, 0.5).unwrap(), 0.0);
        assert_eq!(w.eval(2, 0.75, 0.25).unwrap(), 0.0);
        assert_eq!(w.eval(1, 0.75, 0.75).unwrap(), 1.0);
        assert!(w.partition_error(101) <= PARTITION_TOL);
    }

    #[test]
    fn sampling_degenerate_and_deterministic() {
        let w = KDigraphon::constant(1.0).unwrap();
        let g = w.sample_graph(30, 5).unwrap();
        for i in 0..30 {
            for j in 0..30 {
                assert_eq!(g.color(i, j), if i == j { 0 } else { 1 });
            }
        }
        let w = KDigraphon::combined_uniform_ranked();
        assert_eq!(w.sample_graph(40, 9).unwrap(), w.sample_graph(40, 9).unwrap());
        assert_ne!(w.sample_graph(40, 9).unwrap(), w.sample_graph(40, 10).unwrap());
        assert!(w.sample_graph(0, 1).is_err());
    }

    #[test]
    fn sampled_positions_sorted_in_unit_interval() {
        let g = KDigraphon::rotated_uniform().sample_graph(200, 3).unwrap();
        assert!(g.positions().windows(2).all(|p| p[0] <= p[1]));
        assert!(g.positions().iter().all(|x| (0.0..=1.0).contains(x)));
        assert_eq!(g.self_loop_color(), Some(0));
    }

    #[test]
    fn edge_csv_lists_off_diagonal_pairs() {
        let g = KDigraphon::constant(1.0).unwrap().sample_graph(5, 1).unwrap();
        let mut buf = Vec::new();
        g.write_edges_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "i,j,color");
        assert_eq!(lines.len(), 21);
        assert!(lines[1..].iter().all(|l| l.ends_with(",2")));
    }

    #[test]
    fn cut_norm_of_constants() {
        let a = KDigraphon::constant(0.5).unwrap();
        let b = KDigraphon::constant(0.3).unwrap();
        let opts = CutNormOptions { grid: 20, ..Default::default() };
        assert!((cut_norm_estimate(&a, &b, &opts).unwrap() - 0.4).abs() < 1e-12);
        assert!((linf_l1_estimate(&a, &b, &opts).unwrap() - 0.4).abs() < 1e-12);
        assert_eq!(cut_norm_estimate(&a, &a, &opts).unwrap(), 0.0);
    }

    #[test]
    fn cut_norm_symmetric_and_nonnegative() {
        let a = KDigraphon::rotated_uniform();
        let b = KDigraphon::step(&a.sample_graph(30, 2).unwrap());
        let opts = CutNormOptions { grid: 30, restarts: 5, ..Default::default() };
        let ab = cut_norm_estimate(&a, &b, &opts).unwrap();
        let ba = cut_norm_estimate(&b, &a, &opts).unwrap();
        assert!(ab > 0.0);
        assert_eq!(ab, ba);
    }

    #[test]
    fn cut_norm_rejects_mismatched_colors() {
        let opts = CutNormOptions::default();
        let r = cut_norm_estimate(&KDigraphon::rotated_uniform(), &KDigraphon::double_rotated_uniform(), &opts);
        assert!(matches!(r, Err(Error::Argument(_))));
        let small = CutNormOptions { grid: 1, ..opts };
        assert!(cut_norm_estimate(&KDigraphon::rotated_uniform(), &KDigraphon::rotated_uniform(), &small).is_err());
    }

    #[test]
    fn operator_norm_dominates_cut_norm_on_rectangle() {
        // D = 0.5 on [0, 1/2)^2, zero elsewhere: cut norm 1/8 per color, operator norm 1/8.
        let a = KDigraphon::new(
            "block",
            vec![
                Kernel::closed(|x, y| if x < 0.5 && y < 0.5 { 0.5 } else { 1.0 }),
                Kernel::closed(|x, y| if x < 0.5 && y < 0.5 { 0.5 } else { 0.0 }),
            ],
        )
        .unwrap();
        let b = KDigraphon::constant(0.0).unwrap();
        let opts = CutNormOptions { grid: 20, subsamples: 1, ..Default::default() };
        let cut = cut_norm_estimate(&a, &b, &opts).unwrap();
        let op = linf_l1_estimate(&a, &b, &opts).unwrap();
        assert!((cut - 0.25).abs() < 1e-12, "{cut}");
        assert!(op >= cut - 1e-12);
    }
}

/// Color strengths `c_{h,out}(t)` and `c_{h,in}(t)` used to collapse the `k`
/// per-color neighborhood measures into one weighted measure each.
#[derive(Clone, Debug, PartialEq)]
pub enum ColorWeightSchedule {
    /// Time-independent weights (0-based colors).
    Static { out: Vec<f64>, inc: Vec<f64> },
    /// Color `h` (1-based) has weight one for `t` in `[(h-2)T/2, (h-1)T/2)`
    /// and zero otherwise, for both directions.
    HalfHorizon { k: usize, horizon: usize },
}

impl ColorWeightSchedule {
    /// The default scenario weights `c_h = h - 1`.
    pub fn linear(k: usize) -> Self {
        let w: Vec<f64> = (0..k).map(|h| h as f64).collect();
        ColorWeightSchedule::Static { out: w.clone(), inc: w }
    }

    pub fn fixed(out: Vec<f64>, inc: Vec<f64>) -> Result<Self> {
        if out.len() != inc.len() || out.is_empty() {
            return Err(Error::arg("color weights need one entry per color in both directions"));
        }
        if out.iter().chain(&inc).any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::arg("color weights must be finite and nonnegative"));
        }
        Ok(ColorWeightSchedule::Static { out, inc })
    }

    pub fn half_horizon(k: usize, horizon: usize) -> Self {
        ColorWeightSchedule::HalfHorizon { k, horizon }
    }

    pub fn k(&self) -> usize {
        match self {
            ColorWeightSchedule::Static { out, .. } => out.len(),
            ColorWeightSchedule::HalfHorizon { k, .. } => *k,
        }
    }

    /// Outgoing weight of 0-based color `h` at time `t`.
    pub fn out_weight(&self, h: usize, t: usize) -> f64 {
        match self {
            ColorWeightSchedule::Static { out, .. } => out[h],
            ColorWeightSchedule::HalfHorizon { horizon, .. } => half_horizon_weight(h, t, *horizon),
        }
    }

    /// Incoming weight of 0-based color `h` at time `t`.
    pub fn in_weight(&self, h: usize, t: usize) -> f64 {
        match self {
            ColorWeightSchedule::Static { inc, .. } => inc[h],
            ColorWeightSchedule::HalfHorizon { horizon, .. } => half_horizon_weight(h, t, *horizon),
        }
    }

    pub fn description(&self) -> String {
        match self {
            ColorWeightSchedule::Static { out, inc } => {
                format!("static out={out:?} in={inc:?}")
            }
            ColorWeightSchedule::HalfHorizon { k, horizon } => {
                format!("half-horizon switch at t={}/2 over {k} colors", horizon)
            }
        }
    }
}

fn half_horizon_weight(h: usize, t: usize, horizon: usize) -> f64 {
    // 0-based color c is active on [(c-1)T/2, cT/2), compared in doubled units.
    let (c, t2, horizon) = (h as i64, 2 * t as i64, horizon as i64);
    if t2 >= (c - 1) * horizon && t2 < c * horizon {
        1.0
    } else {
        0.0
    }
}

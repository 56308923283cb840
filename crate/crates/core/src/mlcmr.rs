//! MLCM-r: consensus over a bipartite graph between instances and
//! (model, label) group nodes.
//!
//! Instance `i` is linked to group node `(k, j)` whenever model `k` predicts
//! label `j` on it. Every group node carries a distribution over labels that
//! is pulled towards the average of its neighbours and anchored (with weight
//! `alpha`) to its own label. The closed form is a damped random walk between
//! group nodes:
//!
//! ```text
//! S  = Dv^-1 A' Dn^-1 A
//! Q* = (I - D_lambda S)^-1 D_(1-lambda) B,   lambda_j = d_j / (alpha + d_j)
//! U* = Dn^-1 A Q*
//! ```
//!
//! Group nodes that never receive an edge and instances that receive none are
//! removed before solving (their degree would make `Dv` or `Dn` singular).
//! Removed instances get the uniform score row `1 / l`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{MlcmError, Result};
use crate::types::{ConsensusConfig, PredictionSet, ScoreMatrix};

/// Default cap for [`solve_group_distributions_iterative`].
pub const DEFAULT_MAX_ITERS: usize = 10_000;

/// Instance/group-node graph after the zero-degree policy has been applied.
#[derive(Clone, Debug)]
pub struct ConsensusGraph {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    d_n: DVector<f64>,
    d_v: DVector<f64>,
    alpha: f64,
    /// Original instance index of each retained row.
    instances: Vec<usize>,
    /// Original group-node index of each retained column.
    groups: Vec<usize>,
    n_instances: usize,
}

impl ConsensusGraph {
    /// Builds a graph from a connection matrix `a` (instances x group nodes)
    /// and a label indicator `b` (group nodes x labels) exactly as given.
    /// Zero-degree nodes are kept, so [`transition_matrix`] and the solvers
    /// will refuse such a graph.
    pub fn from_parts(a: DMatrix<f64>, b: DMatrix<f64>, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if a.ncols() != b.nrows() {
            return Err(MlcmError::InvalidConfig(format!(
                "connection matrix has {} group columns but label indicator has {} rows",
                a.ncols(),
                b.nrows()
            )));
        }
        let d_n = row_sums(&a);
        let d_v = col_sums(&a);
        let n_instances = a.nrows();
        Ok(Self {
            instances: (0..a.nrows()).collect(),
            groups: (0..a.ncols()).collect(),
            a,
            b,
            d_n,
            d_v,
            alpha,
            n_instances,
        })
    }

    /// Like [`ConsensusGraph::from_parts`] but drops zero-degree group nodes
    /// and zero-degree instances first.
    pub fn pruned(a: DMatrix<f64>, b: DMatrix<f64>, alpha: f64) -> Result<Self> {
        let full = Self::from_parts(a, b, alpha)?;
        let rows: Vec<usize> = (0..full.a.nrows()).filter(|&i| full.d_n[i] > 0.0).collect();
        let cols: Vec<usize> = (0..full.a.ncols()).filter(|&j| full.d_v[j] > 0.0).collect();
        if rows.len() == full.a.nrows() && cols.len() == full.a.ncols() {
            return Ok(full);
        }
        let a = full.a.select_rows(&rows).select_columns(&cols);
        let b = full.b.select_rows(&cols);
        Ok(Self {
            d_n: row_sums(&a),
            d_v: col_sums(&a),
            a,
            b,
            alpha,
            instances: rows,
            groups: cols,
            n_instances: full.n_instances,
        })
    }

    /// Connection matrix over retained nodes.
    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    /// Label indicator over retained group nodes.
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn instance_degrees(&self) -> &DVector<f64> {
        &self.d_n
    }

    pub fn group_degrees(&self) -> &DVector<f64> {
        &self.d_v
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Continuation probability `d_j / (alpha + d_j)` of each group node.
    pub fn lambda(&self) -> DVector<f64> {
        self.d_v.map(|d| d / (self.alpha + d))
    }

    /// Settling probability `alpha / (alpha + d_j)`, computed directly so it
    /// stays accurate for very large `alpha`.
    pub fn settle(&self) -> DVector<f64> {
        self.d_v.map(|d| self.alpha / (self.alpha + d))
    }

    pub fn retained_instances(&self) -> &[usize] {
        &self.instances
    }

    pub fn retained_groups(&self) -> &[usize] {
        &self.groups
    }

    /// Instance count before pruning.
    pub fn n_instances(&self) -> usize {
        self.n_instances
    }

    pub fn n_labels(&self) -> usize {
        self.b.ncols()
    }

    fn check_degrees(&self) -> Result<()> {
        if let Some(i) = self.d_n.iter().position(|&d| d <= 0.0) {
            return Err(MlcmError::SingularDegree {
                kind: "instance",
                index: self.instances[i] + 1,
            });
        }
        if let Some(j) = self.d_v.iter().position(|&d| d <= 0.0) {
            return Err(MlcmError::SingularDegree {
                kind: "group",
                index: self.groups[j] + 1,
            });
        }
        Ok(())
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(MlcmError::InvalidConfig(format!(
            "alpha must be positive and finite, got {alpha}"
        )))
    }
}

fn row_sums(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_fn(m.nrows(), |i, _| m.row(i).sum())
}

fn col_sums(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_fn(m.ncols(), |j, _| m.column(j).sum())
}

/// Full (unpruned) connection matrix `A` (n x m*l) and label indicator `B`
/// (m*l x l). Column `k*l + j` is the group node for label `j` of model `k`.
pub fn connection_matrix(set: &PredictionSet) -> (DMatrix<f64>, DMatrix<f64>) {
    let (n, l, m) = (set.n(), set.l(), set.m());
    let mut a = DMatrix::zeros(n, m * l);
    for (k, y) in set.models().iter().enumerate() {
        for i in 0..n {
            for j in 0..l {
                if y.get(i, j) {
                    a[(i, k * l + j)] = 1.0;
                }
            }
        }
    }
    let b = DMatrix::from_fn(m * l, l, |g, j| if g % l == j { 1.0 } else { 0.0 });
    (a, b)
}

pub fn build_graph(set: &PredictionSet, alpha: f64) -> Result<ConsensusGraph> {
    let (a, b) = connection_matrix(set);
    ConsensusGraph::pruned(a, b, alpha)
}

/// Row-stochastic group-to-group transition matrix `Dv^-1 A' Dn^-1 A`.
pub fn transition_matrix(graph: &ConsensusGraph) -> Result<DMatrix<f64>> {
    graph.check_degrees()?;
    Ok(transition_unchecked(graph))
}

fn transition_unchecked(graph: &ConsensusGraph) -> DMatrix<f64> {
    let mut an = graph.a.clone();
    for (i, mut row) in an.row_iter_mut().enumerate() {
        row /= graph.d_n[i];
    }
    let mut s = graph.a.tr_mul(&an);
    for (j, mut row) in s.row_iter_mut().enumerate() {
        row /= graph.d_v[j];
    }
    s
}

/// Label distribution of every retained group node: `Q[j, l]` is the
/// probability that a walk started at node `j` settles on a node of label `l`.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupDistribution {
    q: DMatrix<f64>,
}

impl GroupDistribution {
    pub fn new(q: DMatrix<f64>) -> Self {
        Self { q }
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.q
    }
}

/// `D_lambda S` and `D_(1-lambda) B`, the two pieces of the fixed point
/// `Q = D_lambda S Q + D_(1-lambda) B`.
fn walk_operator(graph: &ConsensusGraph) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let mut p = transition_matrix(graph)?;
    let lambda = graph.lambda();
    for (j, mut row) in p.row_iter_mut().enumerate() {
        row *= lambda[j];
    }
    let settle = graph.settle();
    let mut rhs = graph.b.clone();
    for (j, mut row) in rhs.row_iter_mut().enumerate() {
        row *= settle[j];
    }
    Ok((p, rhs))
}

/// Closed-form group distributions: solves `(I - D_lambda S) Q = D_(1-lambda) B`
/// with one LU factorisation and `l` right-hand sides.
pub fn solve_group_distributions(graph: &ConsensusGraph) -> Result<GroupDistribution> {
    if graph.a.ncols() == 0 {
        return Ok(GroupDistribution::new(DMatrix::zeros(0, graph.n_labels())));
    }
    let s = transition_matrix(graph)?;
    let lambda = graph.lambda();
    let settle = graph.settle();
    // I - D_lambda S assembled as D_(1-lambda) + D_lambda (I - S): no
    // cancellation in 1 - lambda_j when lambda_j is close to 1
    let v = s.nrows();
    let mut system = s * -1.0;
    for j in 0..v {
        system[(j, j)] += 1.0;
        let mut row = system.row_mut(j);
        row *= lambda[j];
        row[j] += settle[j];
    }
    let mut rhs = graph.b.clone();
    for (j, mut row) in rhs.row_iter_mut().enumerate() {
        row *= settle[j];
    }
    let q = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| MlcmError::SolverFailure("I - D_lambda S is singular".into()))?;
    Ok(GroupDistribution::new(q))
}

/// Result of the fixed-point iteration.
#[derive(Clone, Debug)]
pub struct IterativeSolution {
    pub distribution: GroupDistribution,
    pub iterations: usize,
    pub last_change: f64,
}

/// Power-series evaluation of the same fixed point: iterates
/// `Q <- D_lambda S Q + D_(1-lambda) B` from `Q = D_(1-lambda) B` until the
/// max-abs change drops below `tol`.
pub fn solve_group_distributions_iterative(
    graph: &ConsensusGraph,
    tol: f64,
    max_iters: usize,
) -> Result<IterativeSolution> {
    if !(tol > 0.0) {
        return Err(MlcmError::InvalidConfig(format!("tol must be positive, got {tol}")));
    }
    if graph.a.ncols() == 0 {
        return Ok(IterativeSolution {
            distribution: GroupDistribution::new(DMatrix::zeros(0, graph.n_labels())),
            iterations: 0,
            last_change: 0.0,
        });
    }
    let (p, rhs) = walk_operator(graph)?;
    let mut q = rhs.clone();
    let mut last_change = f64::INFINITY;
    for t in 1..=max_iters {
        let next = &p * &q + &rhs;
        last_change = (&next - &q).amax();
        q = next;
        if last_change < tol {
            return Ok(IterativeSolution {
                distribution: GroupDistribution::new(q),
                iterations: t,
                last_change,
            });
        }
    }
    Err(MlcmError::NonConvergence {
        iters: max_iters,
        last_change,
    })
}

/// Instance relevance scores `U = Dn^-1 A Q` expanded back to all `n`
/// instances; pruned instances get `1 / l` for every label.
pub fn instance_scores(graph: &ConsensusGraph, q: &GroupDistribution) -> Result<ScoreMatrix> {
    let q = q.as_matrix();
    let l = graph.n_labels();
    if q.nrows() != graph.a.ncols() || q.ncols() != l {
        return Err(MlcmError::InvalidConfig(format!(
            "group distribution is {}x{}, graph expects {}x{}",
            q.nrows(),
            q.ncols(),
            graph.a.ncols(),
            l
        )));
    }
    let mut u = DMatrix::from_element(graph.n_instances, l, 1.0 / l as f64);
    if graph.a.ncols() > 0 {
        let aq = &graph.a * q;
        for (r, &i) in graph.instances.iter().enumerate() {
            let d = graph.d_n[r];
            for j in 0..l {
                u[(i, j)] = aq[(r, j)] / d;
            }
        }
    }
    ScoreMatrix::new(u)
}

/// MLCM-r: build the graph, solve for group distributions, score instances.
pub fn mlcm_r(set: &PredictionSet, config: &ConsensusConfig) -> Result<ScoreMatrix> {
    config.validate()?;
    let graph = build_graph(set, config.alpha)?;
    let q = solve_group_distributions(&graph)?;
    instance_scores(&graph, &q)
}

/// Two-class consensus graph for a single label: model `k` contributes a
/// negative node `2k` and a positive node `2k + 1`, and every instance links
/// to exactly one of them.
pub fn binary_label_graph(set: &PredictionSet, label: usize, alpha: f64) -> Result<ConsensusGraph> {
    let (n, m) = (set.n(), set.m());
    let mut a = DMatrix::zeros(n, 2 * m);
    for (k, y) in set.models().iter().enumerate() {
        for i in 0..n {
            let class = usize::from(y.get(i, label));
            a[(i, 2 * k + class)] = 1.0;
        }
    }
    let b = DMatrix::from_fn(2 * m, 2, |g, c| if g % 2 == c { 1.0 } else { 0.0 });
    ConsensusGraph::pruned(a, b, alpha)
}

/// `n x 2` matrix of (negative, positive) class probabilities for one label.
pub fn binary_label_probabilities(set: &PredictionSet, label: usize, alpha: f64) -> Result<ScoreMatrix> {
    let graph = binary_label_graph(set, label, alpha)?;
    let q = solve_group_distributions(&graph)?;
    instance_scores(&graph, &q)
}

/// BGCM applied label by label (binary relevance); returns the positive-class
/// probability of every (instance, label).
pub fn bgcm_binary_relevance(set: &PredictionSet, config: &ConsensusConfig) -> Result<ScoreMatrix> {
    config.validate()?;
    let columns: Vec<DVector<f64>> = (0..set.l())
        .into_par_iter()
        .map(|label| {
            binary_label_probabilities(set, label, config.alpha).map(|p| p.column(1).into_owned())
        })
        .collect::<Result<_>>()?;
    ScoreMatrix::new(DMatrix::from_columns(&columns))
}

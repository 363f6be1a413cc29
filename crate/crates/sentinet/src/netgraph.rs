//! Digraphs, strong connectivity, structural-rank and coverage checks, and
//! row-stochastic fusion-matrix construction.
//!
//! Edge convention: an edge (u, v) means u influences v, i.e. u is an
//! in-neighbor of v and the matrix entry (v, u) is structurally nonzero.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::matcore::{kron, numeric_rank, GaussianSampler, Mat, MatError};

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("node index {index} out of range for {nodes} nodes")]
    NodeOutOfRange { index: usize, nodes: usize },
    #[error("graph must have at least one node")]
    Empty,
    #[error("sensing pattern assigns state {state} outside [0, {nodes})")]
    SensedStateOutOfRange { state: usize, nodes: usize },
    #[error("structural full-rank precondition fails: coverage check is inapplicable")]
    Lemma1Inapplicable,
    #[error("instance too large: {dim} exceeds the observability-check cap {cap}")]
    InstanceTooLarge { dim: usize, cap: usize },
    #[error(transparent)]
    Mat(#[from] MatError),
}

/// Directed graph on nodes 0..n. Duplicate edges are collapsed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Digraph {
    nodes: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl Digraph {
    pub fn new(nodes: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        if nodes == 0 {
            return Err(GraphError::Empty);
        }
        let mut set = BTreeSet::new();
        for &(u, v) in edges {
            if u >= nodes {
                return Err(GraphError::NodeOutOfRange { index: u, nodes });
            }
            if v >= nodes {
                return Err(GraphError::NodeOutOfRange { index: v, nodes });
            }
            set.insert((u, v));
        }
        Ok(Self { nodes, edges: set })
    }

    /// Directed cycle 0 -> 1 -> ... -> n-1 -> 0.
    pub fn cycle(nodes: usize) -> Self {
        let edges: Vec<_> = (0..nodes).map(|i| (i, (i + 1) % nodes)).collect();
        Self::new(nodes, &edges).expect("cycle is always valid")
    }

    pub fn with_self_loops(&self) -> Self {
        let mut g = self.clone();
        for i in 0..self.nodes {
            g.edges.insert((i, i));
        }
        g
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.edges.contains(&(u, v))
    }

    pub fn out_neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes];
        for &(u, v) in &self.edges {
            adj[u].push(v);
        }
        adj
    }

    pub fn in_neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes];
        for &(u, v) in &self.edges {
            adj[v].push(u);
        }
        adj
    }

    /// Parse the edge-list text format: one `from to` pair per line; blank
    /// lines and `#` comments allowed. Node count is 1 + max index unless a
    /// leading `nodes <n>` line is present.
    pub fn from_edge_list(text: &str) -> Result<Self, GraphError> {
        let mut edges: Vec<(usize, usize)> = Vec::new();
        let mut declared = None;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() == 2 && parts[0] == "nodes" {
                declared = parts[1].parse::<usize>().ok();
                continue;
            }
            if parts.len() == 2 {
                if let (Ok(u), Ok(v)) = (parts[0].parse(), parts[1].parse()) {
                    edges.push((u, v));
                    continue;
                }
            }
            return Err(GraphError::Empty);
        }
        let max = edges.iter().map(|&(u, v)| u.max(v)).max();
        let nodes = declared.unwrap_or(max.map_or(0, |m| m + 1));
        Self::new(nodes, &edges)
    }

    pub fn to_edge_list(&self) -> String {
        let mut out = format!("nodes {}\n", self.nodes);
        for &(u, v) in &self.edges {
            out.push_str(&format!("{u} {v}\n"));
        }
        out
    }
}

/// One sensed state per sensor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensingPattern {
    sensed_states: Vec<usize>,
}

impl SensingPattern {
    pub fn new(sensed_states: Vec<usize>, state_count: usize) -> Result<Self, GraphError> {
        for &s in &sensed_states {
            if s >= state_count {
                return Err(GraphError::SensedStateOutOfRange {
                    state: s,
                    nodes: state_count,
                });
            }
        }
        Ok(Self { sensed_states })
    }

    pub fn sensor_count(&self) -> usize {
        self.sensed_states.len()
    }

    pub fn sensed_state(&self, sensor: usize) -> usize {
        self.sensed_states[sensor]
    }

    pub fn sensed_states(&self) -> &[usize] {
        &self.sensed_states
    }
}

/// SCC partition in Tarjan discovery order; `component_of[v]` indexes into
/// `components`.
#[derive(Debug, Clone)]
pub struct SccPartition {
    pub components: Vec<Vec<usize>>,
    pub component_of: Vec<usize>,
}

pub fn tarjan_scc(g: &Digraph) -> SccPartition {
    struct State {
        index: Vec<Option<usize>>,
        lowlink: Vec<usize>,
        on_stack: Vec<bool>,
        stack: Vec<usize>,
        next: usize,
        components: Vec<Vec<usize>>,
    }

    fn strongconnect(v: usize, adj: &[Vec<usize>], st: &mut State) {
        st.index[v] = Some(st.next);
        st.lowlink[v] = st.next;
        st.next += 1;
        st.stack.push(v);
        st.on_stack[v] = true;
        for &w in &adj[v] {
            if st.index[w].is_none() {
                strongconnect(w, adj, st);
                st.lowlink[v] = st.lowlink[v].min(st.lowlink[w]);
            } else if st.on_stack[w] {
                st.lowlink[v] = st.lowlink[v].min(st.index[w].unwrap());
            }
        }
        if st.lowlink[v] == st.index[v].unwrap() {
            let mut comp = Vec::new();
            loop {
                let w = st.stack.pop().unwrap();
                st.on_stack[w] = false;
                comp.push(w);
                if w == v {
                    break;
                }
            }
            comp.sort_unstable();
            st.components.push(comp);
        }
    }

    let n = g.nodes();
    let adj = g.out_neighbors();
    let mut st = State {
        index: vec![None; n],
        lowlink: vec![0; n],
        on_stack: vec![false; n],
        stack: Vec::new(),
        next: 0,
        components: Vec::new(),
    };
    for v in 0..n {
        if st.index[v].is_none() {
            strongconnect(v, &adj, &mut st);
        }
    }
    let mut component_of = vec![0; n];
    for (ci, comp) in st.components.iter().enumerate() {
        for &v in comp {
            component_of[v] = ci;
        }
    }
    SccPartition {
        components: st.components,
        component_of,
    }
}

/// Structural full rank: the bipartite row/column graph of the sparsity
/// pattern admits a perfect matching (Hopcroft-Karp).
pub fn is_structurally_full_rank(g: &Digraph) -> bool {
    let n = g.nodes();
    // row i can match column j iff entry (i, j) is structurally nonzero,
    // i.e. there is an edge j -> i
    let adj: Vec<Vec<usize>> = {
        let mut a = vec![Vec::new(); n];
        for (u, v) in g.edges() {
            a[v].push(u);
        }
        a
    };
    hopcroft_karp(n, n, &adj) == n
}

fn hopcroft_karp(left: usize, right: usize, adj: &[Vec<usize>]) -> usize {
    const NIL: usize = usize::MAX;
    let mut match_l = vec![NIL; left];
    let mut match_r = vec![NIL; right];
    let mut dist = vec![0usize; left];

    let bfs = |match_l: &[usize], match_r: &[usize], dist: &mut [usize]| -> bool {
        let mut queue = std::collections::VecDeque::new();
        for u in 0..left {
            if match_l[u] == NIL {
                dist[u] = 0;
                queue.push_back(u);
            } else {
                dist[u] = usize::MAX;
            }
        }
        let mut found = false;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                let w = match_r[v];
                if w == NIL {
                    found = true;
                } else if dist[w] == usize::MAX {
                    dist[w] = dist[u] + 1;
                    queue.push_back(w);
                }
            }
        }
        found
    };

    fn dfs(
        u: usize,
        adj: &[Vec<usize>],
        match_l: &mut [usize],
        match_r: &mut [usize],
        dist: &mut [usize],
    ) -> bool {
        const NIL: usize = usize::MAX;
        for i in 0..adj[u].len() {
            let v = adj[u][i];
            let w = match_r[v];
            if w == NIL || (dist[w] == dist[u] + 1 && dfs(w, adj, match_l, match_r, dist)) {
                match_l[u] = v;
                match_r[v] = u;
                return true;
            }
        }
        dist[u] = usize::MAX;
        false
    }

    let mut matching = 0;
    while bfs(&match_l, &match_r, &mut dist) {
        for u in 0..left {
            if match_l[u] == NIL && dfs(u, adj, &mut match_l, &mut match_r, &mut dist) {
                matching += 1;
            }
        }
    }
    matching
}

/// Outcome of the SCC-coverage check: does every SCC contain a sensed state?
#[derive(Debug, Clone)]
pub struct CoverageReport {
    pub holds: bool,
    /// SCCs (node lists) containing no sensed state.
    pub uncovered: Vec<Vec<usize>>,
}

/// Every SCC of the state digraph must contain at least one sensed state.
/// Requires the pattern to be structurally full rank first.
pub fn check_lemma1(g: &Digraph, sp: &SensingPattern) -> Result<CoverageReport, GraphError> {
    if !is_structurally_full_rank(g) {
        return Err(GraphError::Lemma1Inapplicable);
    }
    let part = tarjan_scc(g);
    let sensed: BTreeSet<usize> = sp.sensed_states().iter().copied().collect();
    let uncovered: Vec<Vec<usize>> = part
        .components
        .iter()
        .filter(|comp| comp.iter().all(|v| !sensed.contains(v)))
        .cloned()
        .collect();
    Ok(CoverageReport {
        holds: uncovered.is_empty(),
        uncovered,
    })
}

/// The sensor network must be strongly connected (fusion matrix irreducible).
pub fn check_lemma2(gn: &Digraph) -> bool {
    tarjan_scc(gn).components.len() == 1
}

/// Fusion weight rule for `build_row_stochastic_w`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightRule {
    /// Equal weight over in-neighbors including self.
    Uniform,
    /// Weights drawn from (0, 1] then normalized per row.
    Random,
}

/// Row-stochastic W on the sparsity of `gn` plus self-loops. Row i holds the
/// fusion weights sensor i applies to its in-neighbors.
pub fn build_row_stochastic_w(
    gn: &Digraph,
    rule: WeightRule,
    sampler: &mut GaussianSampler,
) -> Mat {
    let g = gn.with_self_loops();
    let n = g.nodes();
    let inn = g.in_neighbors();
    let mut w = Mat::zeros(n, n);
    for i in 0..n {
        let mut weights: Vec<f64> = match rule {
            WeightRule::Uniform => vec![1.0; inn[i].len()],
            WeightRule::Random => inn[i].iter().map(|_| sampler.next_uniform()).collect(),
        };
        let total: f64 = weights.iter().sum();
        for x in &mut weights {
            *x /= total;
        }
        for (&j, &x) in inn[i].iter().zip(&weights) {
            w.set(i, j, x);
        }
    }
    w
}

/// Size cap for the dense observability rank check.
pub const OBSV_DIM_CAP: usize = 64;

/// Build D_H = diag[H_iᵀH_i] (Nn x Nn) from unit-selector sensing.
pub fn selector_dh(sp: &SensingPattern, n: usize) -> Mat {
    let nn = sp.sensor_count() * n;
    let mut dh = Mat::zeros(nn, nn);
    for i in 0..sp.sensor_count() {
        let s = i * n + sp.sensed_state(i);
        dh.set(s, s, 1.0);
    }
    dh
}

/// Numeric rank test of the stacked observability matrix
/// [D_H; D_H·M; ...; D_H·M^{Nn-1}] for M = W⊗A.
pub fn verify_distributed_observability(a: &Mat, w: &Mat, dh: &Mat) -> Result<bool, GraphError> {
    let dim = w.rows() * a.rows();
    if dh.rows() != dim || dh.cols() != dim {
        return Err(GraphError::Lemma1Inapplicable);
    }
    if dim > OBSV_DIM_CAP {
        return Err(GraphError::InstanceTooLarge {
            dim,
            cap: OBSV_DIM_CAP,
        });
    }
    let m = kron(w, a)?;
    // Stack rows of D_H·M^k for k = 0..dim-1, skipping all-zero rows of D_H
    let mut stacked_rows: Vec<Vec<f64>> = Vec::new();
    let mut block = dh.clone();
    for _ in 0..dim {
        for r in 0..dim {
            if block.row(r).iter().any(|&x| x != 0.0) {
                stacked_rows.push(block.row(r).to_vec());
            }
        }
        block = block.matmul(&m);
    }
    let stacked = Mat::from_rows(&stacked_rows)?;
    Ok(numeric_rank(&stacked, 1e-8) == dim)
}

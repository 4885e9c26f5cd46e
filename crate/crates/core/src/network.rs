//! Social-network game description and its compilation into a Hopfield
//! system.
//!
//! Every node plays the Prisoner's Dilemma with each neighbor. The discrete
//! threshold game works directly on binary states; the continuous model
//! replaces the threshold by a saturating activation `g_i` and yields
//! `u^Δ = -B u + A g(u) + J` with
//!
//! ```text
//! A_ii = -k_i c / C_i,   A_ij = b d_ij / C_i,   B_ii = 1 / (R_i C_i).
//! ```

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Simple undirected graph on nodes `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    adj: Vec<Vec<usize>>,
}

impl Graph {
    /// Builds a graph from an edge list. Duplicate edges are ignored,
    /// self-loops are rejected.
    pub fn from_edges(n: usize, edges: &[[usize; 2]]) -> Result<Self> {
        let mut adj = vec![Vec::new(); n];
        for &[i, j] in edges {
            for x in [i, j] {
                if x >= n {
                    return Err(Error::NodeOutOfRange { index: x, n });
                }
            }
            if i == j {
                return Err(Error::InvalidParameter(format!("self-loop at node {i}")));
            }
            adj[i].push(j);
            adj[j].push(i);
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        Ok(Graph { n, adj })
    }

    pub fn empty(n: usize) -> Self {
        Graph { n, adj: vec![Vec::new(); n] }
    }

    pub fn ring(n: usize) -> Self {
        let edges: Vec<[usize; 2]> = if n < 2 { Vec::new() } else { (0..n).map(|i| [i, (i + 1) % n]).collect() };
        Self::from_edges(n, &edges).expect("ring edges are valid")
    }

    pub fn complete(n: usize) -> Self {
        let edges: Vec<[usize; 2]> = (0..n).flat_map(|i| (i + 1..n).map(move |j| [i, j])).collect();
        Self::from_edges(n, &edges).expect("complete edges are valid")
    }

    /// Star with node 0 at the center.
    pub fn star(n: usize) -> Self {
        let edges: Vec<[usize; 2]> = (1..n).map(|j| [0, j]).collect();
        Self::from_edges(n, &edges).expect("star edges are valid")
    }

    /// G(n, p) with a ChaCha8 stream seeded by `seed`.
    pub fn erdos_renyi(n: usize, p: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter(format!("edge probability {p} outside [0, 1]")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.gen::<f64>() < p {
                    edges.push([i, j]);
                }
            }
        }
        Self::from_edges(n, &edges)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adj[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adj[i].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adj.iter().map(Vec::len).collect()
    }

    pub fn max_degree(&self) -> usize {
        self.adj.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn edges(&self) -> Vec<[usize; 2]> {
        (0..self.n)
            .flat_map(|i| self.adj[i].iter().filter(move |&&j| j > i).map(move |&j| [i, j]))
            .collect()
    }

    pub fn adjacency(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.n, self.n);
        for (i, list) in self.adj.iter().enumerate() {
            for &j in list {
                d[(i, j)] = 1.0;
            }
        }
        d
    }
}

/// Prisoner's Dilemma constants: benefit `b` given to the co-player and cost
/// `c` of cooperating.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PayoffSpec {
    pub b: f64,
    pub c: f64,
}

impl PayoffSpec {
    pub fn new(b: f64, c: f64) -> Result<Self> {
        let p = PayoffSpec { b, c };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.b.is_finite() && self.c.is_finite() && self.c > 0.0 && self.b > self.c) {
            return Err(Error::InvalidParameter(format!(
                "payoff requires b > c > 0, got b = {}, c = {}",
                self.b, self.c
            )));
        }
        Ok(())
    }

    /// Rows: focal strategy C then D; columns: co-player C then D.
    pub fn matrix(&self) -> Result<[[f64; 2]; 2]> {
        self.validate()?;
        Ok([[self.b - self.c, self.b], [-self.c, 0.0]])
    }
}

/// Label of a node as given in the input file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NodeId {
    Num(u64),
    Str(String),
}

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NodeId::Num(n) => write!(f, "{n}"),
            NodeId::Str(s) => f.write_str(s),
        }
    }
}

/// Physical and behavioral parameters of one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<NodeId>,
    /// Capacitance (inertia).
    #[serde(rename = "C")]
    pub capacitance: f64,
    #[serde(rename = "R")]
    pub resistance: f64,
    /// Lipschitz constant (and peak slope) of the activation.
    pub lambda: f64,
    /// Saturation bound of the activation.
    #[serde(rename = "M")]
    pub bound: f64,
    #[serde(rename = "J", default)]
    pub input: f64,
    #[serde(default)]
    pub theta: f64,
    /// Payoff threshold for cooperating in the discrete game.
    #[serde(rename = "U", default)]
    pub threshold: f64,
}

impl NodeParams {
    pub fn new(capacitance: f64, resistance: f64, lambda: f64, bound: f64) -> Self {
        NodeParams { id: None, capacitance, resistance, lambda, bound, input: 0.0, theta: 0.0, threshold: 0.0 }
    }

    fn validate(&self, i: usize) -> Result<()> {
        let positive = [("C", self.capacitance), ("R", self.resistance), ("lambda", self.lambda), ("M", self.bound)];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("node {i}: {name} must be positive and finite, got {v}")));
            }
        }
        for (name, v) in [("J", self.input), ("theta", self.theta), ("U", self.threshold)] {
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("node {i}: {name} must be finite, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    /// `g(u) = M tanh(λ (u - θ) / M)`, range `(-M, M)`.
    #[default]
    Tanh,
    /// `g(u) = M / (1 + exp(-4 λ (u - θ) / M))`, range `(0, M)`.
    Logistic,
    /// `g(u) = clamp(λ (u - θ), -M, M)`.
    Pwl,
}

/// Per-node activation functions. Parametrized so that `M_i` is the exact
/// supremum of `|g_i|` and `λ_i` the exact Lipschitz constant.
///
/// A shifted family evaluates `h_i(z) = g_i(z + s_i) - g_i(s_i)` instead; it
/// is produced by [`HopfieldSystem::shifted`].
#[derive(Debug, Clone, PartialEq)]
pub struct Activation {
    pub kind: ActivationKind,
    pub bound: Vec<f64>,
    pub lipschitz: Vec<f64>,
    pub offset: Vec<f64>,
    pub shift: Option<Vec<f64>>,
}

impl Activation {
    pub fn new(kind: ActivationKind, bound: Vec<f64>, lipschitz: Vec<f64>, offset: Vec<f64>) -> Result<Self> {
        let n = bound.len();
        for len in [lipschitz.len(), offset.len()] {
            if len != n {
                return Err(Error::DimensionMismatch { expected: n, got: len });
            }
        }
        for i in 0..n {
            if !(bound[i] > 0.0 && bound[i].is_finite() && lipschitz[i] > 0.0 && lipschitz[i].is_finite()) {
                return Err(Error::InvalidParameter(format!("activation {i}: M and lambda must be positive")));
            }
        }
        Ok(Activation { kind, bound, lipschitz, offset, shift: None })
    }

    pub fn len(&self) -> usize {
        self.bound.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bound.is_empty()
    }

    fn base(&self, i: usize, u: f64) -> f64 {
        let (m, l, x) = (self.bound[i], self.lipschitz[i], u - self.offset[i]);
        match self.kind {
            ActivationKind::Tanh => m * (l * x / m).tanh(),
            ActivationKind::Logistic => m / (1.0 + (-4.0 * l * x / m).exp()),
            ActivationKind::Pwl => (l * x).clamp(-m, m),
        }
    }

    fn base_slope(&self, i: usize, u: f64) -> f64 {
        let (m, l, x) = (self.bound[i], self.lipschitz[i], u - self.offset[i]);
        match self.kind {
            ActivationKind::Tanh => {
                let th = (l * x / m).tanh();
                l * (1.0 - th * th)
            }
            ActivationKind::Logistic => {
                let s = 1.0 / (1.0 + (-4.0 * l * x / m).exp());
                4.0 * l * s * (1.0 - s)
            }
            ActivationKind::Pwl => {
                if (l * x).abs() < m {
                    l
                } else {
                    0.0
                }
            }
        }
    }

    fn base_inverse(&self, i: usize, s: f64) -> Result<f64> {
        let (m, l, th) = (self.bound[i], self.lipschitz[i], self.offset[i]);
        let (lo, hi) = match self.kind {
            ActivationKind::Logistic => (0.0, m),
            _ => (-m, m),
        };
        if !(s > lo && s < hi) {
            return Err(Error::OutsideActivationRange { s, bound: m });
        }
        Ok(match self.kind {
            ActivationKind::Tanh => th + m / l * (s / m).atanh(),
            ActivationKind::Logistic => th + m / (4.0 * l) * (s / (m - s)).ln(),
            ActivationKind::Pwl => th + s / l,
        })
    }

    /// `g_i(u)`, or `h_i(u)` for a shifted family.
    pub fn eval(&self, i: usize, u: f64) -> f64 {
        match &self.shift {
            None => self.base(i, u),
            Some(s) => self.base(i, u + s[i]) - self.base(i, s[i]),
        }
    }

    pub fn slope(&self, i: usize, u: f64) -> f64 {
        match &self.shift {
            None => self.base_slope(i, u),
            Some(s) => self.base_slope(i, u + s[i]),
        }
    }

    pub fn inverse(&self, i: usize, s: f64) -> Result<f64> {
        match &self.shift {
            None => self.base_inverse(i, s),
            Some(sh) => Ok(self.base_inverse(i, s + self.base(i, sh[i]))? - sh[i]),
        }
    }

    /// Bound on `|g_i|`; doubled for a shifted family.
    pub fn sup_bound(&self, i: usize) -> f64 {
        match self.shift {
            None => self.bound[i],
            Some(_) => 2.0 * self.bound[i],
        }
    }

    pub fn lipschitz_max(&self) -> f64 {
        self.lipschitz.iter().copied().fold(0.0, f64::max)
    }

    pub fn apply(&self, u: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(u.len(), |i, _| self.eval(i, u[i]))
    }
}

/// `u^Δ = -B u + A g(u) + J` with diagonal `B`.
#[derive(Debug, Clone, PartialEq)]
pub struct HopfieldSystem {
    pub a: DMatrix<f64>,
    /// Diagonal of `B`.
    pub b: DVector<f64>,
    pub j: DVector<f64>,
    pub activation: Activation,
}

impl HopfieldSystem {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>, j: DVector<f64>, activation: Activation) -> Result<Self> {
        let n = b.len();
        for got in [a.nrows(), a.ncols(), j.len(), activation.len()] {
            if got != n {
                return Err(Error::DimensionMismatch { expected: n, got });
            }
        }
        if let Some(i) = b.iter().position(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::InvalidParameter(format!("b_{i} must be positive, got {}", b[i])));
        }
        if a.iter().chain(j.iter()).any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("A and J must be finite".into()));
        }
        Ok(HopfieldSystem { a, b, j, activation })
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    /// `b̄ = max b_i`.
    pub fn b_max(&self) -> f64 {
        self.b.max()
    }

    /// `b̲ = min b_i`.
    pub fn b_min(&self) -> f64 {
        self.b.min()
    }

    /// `L = max λ_i`.
    pub fn lipschitz_max(&self) -> f64 {
        self.activation.lipschitz_max()
    }

    pub fn rhs(&self, u: &DVector<f64>) -> DVector<f64> {
        let g = self.activation.apply(u);
        let mut out = &self.a * g + &self.j;
        for i in 0..self.dim() {
            out[i] -= self.b[i] * u[i];
        }
        out
    }

    /// Jacobian of the right-hand side, `-B + A diag(g'(u))`.
    pub fn jacobian(&self, u: &DVector<f64>) -> DMatrix<f64> {
        let n = self.dim();
        let mut jac = DMatrix::from_fn(n, n, |r, c| self.a[(r, c)] * self.activation.slope(c, u[c]));
        for i in 0..n {
            jac[(i, i)] -= self.b[i];
        }
        jac
    }

    /// The system in `z = u - u*`: `z^Δ = -B z + A h(z)` with
    /// `h(z) = g(z + u*) - g(u*)`. The origin is an equilibrium whenever
    /// `u*` is one of the original system.
    pub fn shifted(&self, u_star: &DVector<f64>) -> Result<HopfieldSystem> {
        if u_star.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: u_star.len() });
        }
        if u_star.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("equilibrium must be finite".into()));
        }
        if self.activation.shift.is_some() {
            return Err(Error::InvalidParameter("system is already shifted".into()));
        }
        let mut activation = self.activation.clone();
        activation.shift = Some(u_star.iter().copied().collect());
        Ok(HopfieldSystem { a: self.a.clone(), b: self.b.clone(), j: DVector::zeros(self.dim()), activation })
    }
}

/// A full network description: graph, node parameters, payoff and activation.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub graph: Graph,
    pub nodes: Vec<NodeParams>,
    pub payoff: PayoffSpec,
    pub activation: ActivationKind,
}

/// Network JSON layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkFile {
    pub nodes: Vec<NodeParams>,
    #[serde(default)]
    pub edges: Vec<[usize; 2]>,
    pub payoff: PayoffSpec,
    #[serde(default)]
    pub activation: ActivationKind,
}

impl NetworkSpec {
    pub fn new(graph: Graph, nodes: Vec<NodeParams>, payoff: PayoffSpec, activation: ActivationKind) -> Result<Self> {
        if nodes.len() != graph.len() {
            return Err(Error::DimensionMismatch { expected: graph.len(), got: nodes.len() });
        }
        if nodes.is_empty() {
            return Err(Error::InvalidParameter("network has no nodes".into()));
        }
        payoff.validate()?;
        for (i, node) in nodes.iter().enumerate() {
            node.validate(i)?;
        }
        Ok(NetworkSpec { graph, nodes, payoff, activation })
    }

    /// Same parameters on every node.
    pub fn uniform(graph: Graph, node: NodeParams, payoff: PayoffSpec, activation: ActivationKind) -> Result<Self> {
        let nodes = vec![node; graph.len()];
        Self::new(graph, nodes, payoff, activation)
    }

    pub fn from_file(file: NetworkFile) -> Result<Self> {
        let graph = Graph::from_edges(file.nodes.len(), &file.edges)?;
        Self::new(graph, file.nodes, file.payoff, file.activation)
    }

    pub fn to_file(&self) -> NetworkFile {
        NetworkFile {
            nodes: self.nodes.clone(),
            edges: self.graph.edges(),
            payoff: self.payoff,
            activation: self.activation,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn label(&self, i: usize) -> String {
        match &self.nodes[i].id {
            Some(id) => id.to_string(),
            None => i.to_string(),
        }
    }

    pub fn thresholds(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.threshold).collect()
    }

    /// `C_*`, the smallest capacitance.
    pub fn min_capacitance(&self) -> f64 {
        self.nodes.iter().map(|n| n.capacitance).fold(f64::INFINITY, f64::min)
    }

    /// `max_i k_i / C_i`.
    pub fn max_relative_degree(&self) -> f64 {
        self.nodes
            .iter()
            .enumerate()
            .map(|(i, n)| self.graph.degree(i) as f64 / n.capacitance)
            .fold(0.0, f64::max)
    }

    pub fn activation_family(&self) -> Activation {
        Activation {
            kind: self.activation,
            bound: self.nodes.iter().map(|n| n.bound).collect(),
            lipschitz: self.nodes.iter().map(|n| n.lambda).collect(),
            offset: self.nodes.iter().map(|n| n.theta).collect(),
            shift: None,
        }
    }

    /// Assembles `A`, `B` and `J`.
    pub fn build_system(&self) -> HopfieldSystem {
        let n = self.len();
        let PayoffSpec { b, c } = self.payoff;
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            let cap = self.nodes[i].capacitance;
            a[(i, i)] = -(self.graph.degree(i) as f64) * c / cap;
            for &j in self.graph.neighbors(i) {
                a[(i, j)] = b / cap;
            }
        }
        let bdiag = DVector::from_iterator(n, self.nodes.iter().map(|p| 1.0 / (p.resistance * p.capacitance)));
        let j = DVector::from_iterator(n, self.nodes.iter().map(|p| p.input));
        HopfieldSystem { a, b: bdiag, j, activation: self.activation_family() }
    }
}

/// Binary strategy profile; 1 = cooperate, 0 = defect.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GameState {
    pub step: u64,
    pub states: Vec<u8>,
}

impl GameState {
    pub fn new(states: Vec<u8>) -> Result<Self> {
        if let Some(&bad) = states.iter().find(|&&s| s > 1) {
            return Err(Error::InvalidParameter(format!("game state entries must be 0 or 1, got {bad}")));
        }
        Ok(GameState { step: 0, states })
    }

    pub fn all_defect(n: usize) -> Self {
        GameState { step: 0, states: vec![0; n] }
    }

    pub fn all_cooperate(n: usize) -> Self {
        GameState { step: 0, states: vec![1; n] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpdateMode {
    /// All nodes respond to the previous state.
    #[default]
    Sync,
    /// Nodes update in index order and see earlier updates of the same step.
    Seq,
}

/// `-k_i c S_i + Σ_{j ∈ Ω_i} b S_j`.
pub fn total_payoff(graph: &Graph, payoff: &PayoffSpec, states: &[u8], i: usize) -> Result<f64> {
    if i >= graph.len() {
        return Err(Error::NodeOutOfRange { index: i, n: graph.len() });
    }
    if states.len() != graph.len() {
        return Err(Error::DimensionMismatch { expected: graph.len(), got: states.len() });
    }
    Ok(node_payoff(graph, payoff, states, i))
}

fn node_payoff(graph: &Graph, payoff: &PayoffSpec, states: &[u8], i: usize) -> f64 {
    let cooperating: f64 = graph.neighbors(i).iter().map(|&j| f64::from(states[j])).sum();
    -(graph.degree(i) as f64) * payoff.c * f64::from(states[i]) + payoff.b * cooperating
}

/// One application of the threshold rule: node `i` cooperates iff its total
/// payoff reaches `thresholds[i]`.
pub fn threshold_step(
    graph: &Graph,
    payoff: &PayoffSpec,
    state: &GameState,
    thresholds: &[f64],
    mode: UpdateMode,
) -> Result<GameState> {
    let n = graph.len();
    for got in [state.states.len(), thresholds.len()] {
        if got != n {
            return Err(Error::DimensionMismatch { expected: n, got });
        }
    }
    let mut next = state.states.clone();
    for i in 0..n {
        let seen = match mode {
            UpdateMode::Sync => &state.states,
            UpdateMode::Seq => &next,
        };
        let cooperate = node_payoff(graph, payoff, seen, i) >= thresholds[i];
        next[i] = u8::from(cooperate);
    }
    Ok(GameState { step: state.step + 1, states: next })
}

/// `steps` applications of the threshold rule, initial state included.
pub fn run_game(
    graph: &Graph,
    payoff: &PayoffSpec,
    initial: GameState,
    thresholds: &[f64],
    mode: UpdateMode,
    steps: u64,
) -> Result<Vec<GameState>> {
    let mut out = vec![initial];
    for _ in 0..steps {
        let next = threshold_step(graph, payoff, out.last().expect("nonempty"), thresholds, mode)?;
        out.push(next);
    }
    Ok(out)
}

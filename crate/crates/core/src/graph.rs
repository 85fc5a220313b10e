//! Undirected networks, weight matrices and random network generators.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::io::Read;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Hop count reported for pairs in different components.
pub const UNREACHABLE: u32 = u32::MAX;

/// Maximum number of regeneration attempts when a connected network is required.
pub const MAX_CONNECT_ATTEMPTS: usize = 1000;

/// Simple undirected network on nodes `0..n`.
///
/// Edges are stored once as `(i, j)` with `i < j`, sorted and deduplicated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Network {
    n: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

impl Network {
    /// Builds a network from unordered pairs. Duplicates (in either
    /// orientation) collapse to one edge; self-loops and out-of-range
    /// endpoints are rejected.
    pub fn new(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("network needs at least one node".into()));
        }
        let mut set = BTreeSet::new();
        for (a, b) in pairs {
            if a >= n || b >= n {
                return Err(Error::InvalidParameter(format!(
                    "edge ({a}, {b}) has an endpoint outside 0..{n}"
                )));
            }
            if a == b {
                return Err(Error::InvalidParameter(format!("self-loop on node {a}")));
            }
            set.insert((a.min(b), a.max(b)));
        }
        let edges: Vec<_> = set.into_iter().collect();
        let mut neighbors = vec![Vec::new(); n];
        for &(i, j) in &edges {
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        for nb in &mut neighbors {
            nb.sort_unstable();
        }
        Ok(Network { n, edges, neighbors })
    }

    pub fn complete(n: usize) -> Self {
        let pairs = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j)));
        Network::new(n, pairs).expect("complete graph is valid")
    }

    pub fn path(n: usize) -> Self {
        Network::new(n, (1..n).map(|i| (i - 1, i))).expect("path graph is valid")
    }

    /// Star with node 0 at the center.
    pub fn star(n: usize) -> Self {
        Network::new(n, (1..n).map(|i| (0, i))).expect("star graph is valid")
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].binary_search(&j).is_ok()
    }

    /// Node degrees; they sum to twice the edge count.
    pub fn degrees(&self) -> Vec<usize> {
        self.neighbors.iter().map(Vec::len).collect()
    }

    /// Binary adjacency as a dense matrix.
    pub fn adjacency_matrix(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n, self.n);
        for &(i, j) in &self.edges {
            a[(i, j)] = 1.0;
            a[(j, i)] = 1.0;
        }
        a
    }

    /// Component label per node, numbered in order of first appearance.
    pub fn components(&self) -> Vec<usize> {
        let mut label = vec![usize::MAX; self.n];
        let mut next = 0;
        let mut queue = VecDeque::new();
        for s in 0..self.n {
            if label[s] != usize::MAX {
                continue;
            }
            label[s] = next;
            queue.push_back(s);
            while let Some(u) = queue.pop_front() {
                for &v in &self.neighbors[u] {
                    if label[v] == usize::MAX {
                        label[v] = next;
                        queue.push_back(v);
                    }
                }
            }
            next += 1;
        }
        label
    }

    pub fn is_connected(&self) -> bool {
        self.components().iter().all(|&c| c == 0)
    }

    /// All-pairs hop counts by breadth-first search from every node.
    pub fn geodesic_distances(&self) -> DistanceMatrix {
        let n = self.n;
        let mut d = vec![UNREACHABLE; n * n];
        let mut queue = VecDeque::new();
        for s in 0..n {
            let row = &mut d[s * n..(s + 1) * n];
            row[s] = 0;
            queue.push_back(s);
            while let Some(u) = queue.pop_front() {
                let du = row[u];
                for &v in &self.neighbors[u] {
                    if row[v] == UNREACHABLE {
                        row[v] = du + 1;
                        queue.push_back(v);
                    }
                }
            }
        }
        DistanceMatrix { n, d }
    }
}

/// Row-major hop counts; [`UNREACHABLE`] marks pairs with no path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceMatrix {
    n: usize,
    d: Vec<u32>,
}

impl DistanceMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Raw entry, possibly the [`UNREACHABLE`] sentinel.
    pub fn raw(&self, i: usize, j: usize) -> u32 {
        self.d[i * self.n + j]
    }

    pub fn get(&self, i: usize, j: usize) -> Option<u32> {
        match self.raw(i, j) {
            UNREACHABLE => None,
            h => Some(h),
        }
    }
}

/// Nonnegative weights with a zero diagonal and at least one positive entry.
///
/// The nonzero entries are cached so statistics cost O(nnz) rather than O(n²).
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    dense: DMatrix<f64>,
    nonzero: Vec<(usize, usize, f64)>,
}

impl WeightMatrix {
    pub fn new(dense: DMatrix<f64>) -> Result<Self> {
        if dense.nrows() != dense.ncols() {
            return Err(Error::InvalidWeights(format!(
                "matrix is {}x{}, expected square",
                dense.nrows(),
                dense.ncols()
            )));
        }
        let n = dense.nrows();
        let mut nonzero = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let w = dense[(i, j)];
                if !w.is_finite() || w < 0.0 {
                    return Err(Error::InvalidWeights(format!("entry ({i}, {j}) = {w}")));
                }
                if i == j && w != 0.0 {
                    return Err(Error::InvalidWeights(format!("diagonal entry ({i}, {i}) = {w}")));
                }
                if w > 0.0 {
                    nonzero.push((i, j, w));
                }
            }
        }
        if nonzero.is_empty() {
            return Err(Error::NoTies);
        }
        Ok(WeightMatrix { dense, nonzero })
    }

    /// `w_ij = 1` for every tie.
    pub fn adjacency(net: &Network) -> Result<Self> {
        if net.edge_count() == 0 {
            return Err(Error::NoTies);
        }
        WeightMatrix::new(net.adjacency_matrix())
    }

    /// `w_ij = d(i,j)^-gamma`, zero for unreachable pairs.
    pub fn inverse_geodesic(net: &Network, gamma: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::InvalidParameter(format!("gamma must be positive, got {gamma}")));
        }
        let dist = net.geodesic_distances();
        let n = net.node_count();
        let w = DMatrix::from_fn(n, n, |i, j| match dist.get(i, j) {
            Some(h) if h > 0 => f64::from(h).powf(-gamma),
            _ => 0.0,
        });
        WeightMatrix::new(w)
    }

    pub fn n(&self) -> usize {
        self.dense.nrows()
    }

    pub fn dense(&self) -> &DMatrix<f64> {
        &self.dense
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.dense[(i, j)]
    }

    /// Positive entries as `(row, col, weight)` in row-major order.
    pub fn nonzero(&self) -> &[(usize, usize, f64)] {
        &self.nonzero
    }

    /// Sum of all weights, i.e. `Σ_i Σ_j (w_ij + w_ji) / 2`.
    pub fn s0(&self) -> f64 {
        self.nonzero.iter().map(|e| e.2).sum()
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        WeightMatrix::new(&self.dense * c)
    }

    pub fn symmetrized(&self) -> Self {
        let sym = (&self.dense + self.dense.transpose()) * 0.5;
        WeightMatrix::new(sym).expect("symmetrizing keeps a valid matrix")
    }
}

/// Network with the original node labels from an edge list.
#[derive(Debug, Clone)]
pub struct LabeledNetwork {
    pub network: Network,
    pub labels: Vec<String>,
}

impl LabeledNetwork {
    /// Labels nodes `"0"`, `"1"`, ... for generated networks.
    pub fn with_index_labels(network: Network) -> Self {
        let labels = (0..network.node_count()).map(|i| i.to_string()).collect();
        LabeledNetwork { network, labels }
    }

    pub fn label_map(&self) -> HashMap<&str, usize> {
        self.labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect()
    }

    /// Writes the edge list back out in `src,dst` form.
    pub fn write_edge_list<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["src", "dst"])?;
        for &(i, j) in self.network.edges() {
            w.write_record([&self.labels[i], &self.labels[j]])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Reads a `src,dst` edge list. Labels become indices in order of first
/// appearance; row numbers in errors count data rows from 1.
pub fn load_edge_list<R: Read>(source: R) -> Result<LabeledNetwork> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let headers = reader.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "src" || &headers[1] != "dst" {
        if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
            return Err(Error::Empty("edge list has no header".into()));
        }
        return Err(Error::MalformedRow {
            row: 0,
            msg: format!("expected header `src,dst`, found `{}`", headers.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut labels: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut pairs = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let row = k + 1;
        let rec = rec.map_err(|e| Error::MalformedRow { row, msg: e.to_string() })?;
        if rec.len() != 2 || rec[0].is_empty() || rec[1].is_empty() {
            return Err(Error::MalformedRow { row, msg: "expected two non-empty fields".into() });
        }
        if rec[0] == rec[1] {
            return Err(Error::SelfLoop { row, label: rec[0].to_string() });
        }
        let mut id = |s: &str| {
            *index.entry(s.to_string()).or_insert_with(|| {
                labels.push(s.to_string());
                labels.len() - 1
            })
        };
        let a = id(&rec[0]);
        let b = id(&rec[1]);
        pairs.push((a, b));
    }
    if pairs.is_empty() {
        return Err(Error::Empty("edge list has no rows".into()));
    }
    let network = Network::new(labels.len(), pairs)?;
    Ok(LabeledNetwork { network, labels })
}

/// Random network families used by the simulations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum RandomModel {
    /// Each pair is tied independently with probability `p`.
    ErdosRenyi { p: f64 },
    /// Ring lattice with `k` neighbors per node (k even), each edge rewired
    /// with probability `rewire`.
    SmallWorld { k: usize, rewire: f64 },
}

impl RandomModel {
    /// Erdős–Rényi with the given expected degree.
    pub fn erdos_renyi_mean_degree(n: usize, mean_degree: f64) -> Self {
        RandomModel::ErdosRenyi { p: mean_degree / (n as f64 - 1.0) }
    }

    fn validate(&self, n: usize) -> Result<()> {
        match *self {
            RandomModel::ErdosRenyi { p } if !(0.0..=1.0).contains(&p) => {
                Err(Error::InvalidParameter(format!("edge probability {p} outside [0, 1]")))
            }
            RandomModel::SmallWorld { k, rewire } => {
                if k == 0 || k % 2 != 0 || k >= n {
                    Err(Error::InvalidParameter(format!("small-world k = {k} must be even and in [2, n)")))
                } else if !(0.0..=1.0).contains(&rewire) {
                    Err(Error::InvalidParameter(format!("rewire probability {rewire} outside [0, 1]")))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    fn sample(&self, n: usize, rng: &mut impl Rng) -> Network {
        match *self {
            RandomModel::ErdosRenyi { p } => {
                let mut pairs = Vec::new();
                for i in 0..n {
                    for j in i + 1..n {
                        if rng.random::<f64>() < p {
                            pairs.push((i, j));
                        }
                    }
                }
                Network::new(n, pairs).expect("sampled pairs are valid")
            }
            RandomModel::SmallWorld { k, rewire } => {
                let mut set: BTreeSet<(usize, usize)> = BTreeSet::new();
                let key = |a: usize, b: usize| (a.min(b), a.max(b));
                for i in 0..n {
                    for s in 1..=k / 2 {
                        set.insert(key(i, (i + s) % n));
                    }
                }
                for s in 1..=k / 2 {
                    for i in 0..n {
                        let j = (i + s) % n;
                        if rng.random::<f64>() >= rewire || !set.contains(&key(i, j)) {
                            continue;
                        }
                        // Node i saturated: leave the edge alone.
                        if set.iter().filter(|&&(a, b)| a == i || b == i).count() >= n - 1 {
                            continue;
                        }
                        let target = loop {
                            let t = rng.random_range(0..n);
                            if t != i && !set.contains(&key(i, t)) {
                                break t;
                            }
                        };
                        set.remove(&key(i, j));
                        set.insert(key(i, target));
                    }
                }
                Network::new(n, set).expect("lattice pairs are valid")
            }
        }
    }
}

/// Draws a network from `model`. Attempt `t` uses the stream `(seed, t)`,
/// so output is a pure function of `(n, model, seed, require_connected)`.
pub fn generate_random_network(
    n: usize,
    model: RandomModel,
    seed: u64,
    require_connected: bool,
) -> Result<Network> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("need n >= 2, got {n}")));
    }
    model.validate(n)?;
    let attempts = if require_connected { MAX_CONNECT_ATTEMPTS } else { 1 };
    for attempt in 0..attempts {
        let mut rng = rng::stream(seed, &[rng::tag::NETWORK, attempt as u64]);
        let net = model.sample(n, &mut rng);
        if !require_connected || net.is_connected() {
            return Ok(net);
        }
    }
    Err(Error::CouldNotConnect { attempts })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edge_list_maps_labels_in_order() {
        let ln = load_edge_list("src,dst\na,b\nb,c\n".as_bytes()).unwrap();
        assert_eq!(ln.labels, vec!["a", "b", "c"]);
        assert_eq!(ln.network.node_count(), 3);
        assert_eq!(ln.network.edges(), &[(0, 1), (1, 2)]);
    }

    #[test]
    fn edge_list_dedups_reversed_rows() {
        let ln = load_edge_list("src,dst\na,b\nb,a\n".as_bytes()).unwrap();
        assert_eq!(ln.network.edge_count(), 1);
    }

    #[test]
    fn edge_list_rejects_self_loop_with_row() {
        let err = load_edge_list("src,dst\na,a\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::SelfLoop { row: 1, .. }), "{err}");
    }

    #[test]
    fn edge_list_rejects_empty_and_malformed() {
        assert!(matches!(load_edge_list("".as_bytes()), Err(Error::Empty(_))));
        assert!(matches!(load_edge_list("src,dst\n".as_bytes()), Err(Error::Empty(_))));
        let err = load_edge_list("src,dst\na,b\nc\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::MalformedRow { row: 2, .. }), "{err}");
        assert!(load_edge_list("from,to\na,b\n".as_bytes()).is_err());
    }

    #[test]
    fn adjacency_of_small_graphs() {
        let w = WeightMatrix::adjacency(&Network::path(3)).unwrap();
        let expect = DMatrix::from_row_slice(3, 3, &[0., 1., 0., 1., 0., 1., 0., 1., 0.]);
        assert_eq!(w.dense(), &expect);
        let k3 = WeightMatrix::adjacency(&Network::complete(3)).unwrap();
        assert_eq!(k3.dense(), &DMatrix::from_fn(3, 3, |i, j| if i == j { 0.0 } else { 1.0 }));
        let edgeless = Network::new(5, []).unwrap();
        assert!(matches!(WeightMatrix::adjacency(&edgeless), Err(Error::NoTies)));
    }

    #[test]
    fn weight_matrix_validation() {
        let mut m = DMatrix::zeros(2, 2);
        m[(0, 1)] = -1.0;
        assert!(WeightMatrix::new(m).is_err());
        let mut m = DMatrix::zeros(2, 2);
        m[(0, 0)] = 1.0;
        assert!(WeightMatrix::new(m).is_err());
        assert!(matches!(WeightMatrix::new(DMatrix::zeros(3, 3)), Err(Error::NoTies)));
    }

    #[test]
    fn geodesics() {
        let d = Network::path(3).geodesic_distances();
        assert_eq!(d.get(0, 2), Some(2));
        let d = Network::complete(4).geodesic_distances();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(d.get(i, j), Some(u32::from(i != j)));
            }
        }
        let d = Network::new(3, [(0, 1)]).unwrap().geodesic_distances();
        assert_eq!(d.get(0, 2), None);
        assert_eq!(d.raw(0, 2), UNREACHABLE);
    }

    #[test]
    fn degree_vectors() {
        assert_eq!(Network::path(3).degrees(), vec![1, 2, 1]);
        assert_eq!(Network::complete(4).degrees(), vec![3; 4]);
        assert_eq!(Network::star(5).degrees(), vec![4, 1, 1, 1, 1]);
    }

    #[test]
    fn inverse_geodesic_weights() {
        let w = WeightMatrix::inverse_geodesic(&Network::path(3), 1.0).unwrap();
        assert_eq!(w.get(0, 2), 0.5);
        assert_eq!(w.get(0, 1), 1.0);
        let w = WeightMatrix::inverse_geodesic(&Network::new(3, [(0, 1)]).unwrap(), 2.0).unwrap();
        assert_eq!(w.get(0, 2), 0.0);
    }

    #[test]
    fn generator_edge_cases() {
        let k5 = generate_random_network(5, RandomModel::ErdosRenyi { p: 1.0 }, 3, false).unwrap();
        assert_eq!(k5, Network::complete(5));
        let err = generate_random_network(5, RandomModel::ErdosRenyi { p: 0.0 }, 3, true).unwrap_err();
        assert!(matches!(err, Error::CouldNotConnect { attempts: MAX_CONNECT_ATTEMPTS }));
        assert!(generate_random_network(1, RandomModel::ErdosRenyi { p: 0.5 }, 0, false).is_err());
        assert!(generate_random_network(10, RandomModel::SmallWorld { k: 3, rewire: 0.1 }, 0, false).is_err());
    }

    #[test]
    fn small_world_keeps_edge_count() {
        let net = generate_random_network(50, RandomModel::SmallWorld { k: 4, rewire: 0.2 }, 9, false).unwrap();
        assert_eq!(net.edge_count(), 100);
        let ring = generate_random_network(10, RandomModel::SmallWorld { k: 2, rewire: 0.0 }, 9, true).unwrap();
        assert_eq!(ring.degrees(), vec![2; 10]);
    }

    /// Two-sided 99% band for a Binomial(N, p) count, computed from the
    /// exact CDF by summing the pmf in log space.
    fn binomial_band(trials: u64, p: f64, level: f64) -> (u64, u64) {
        use statrs::distribution::{Binomial, DiscreteCDF};
        let b = Binomial::new(p, trials).unwrap();
        let tail = (1.0 - level) / 2.0;
        let lo = (0..=trials).find(|&k| b.cdf(k) > tail).unwrap();
        let hi = (0..=trials).find(|&k| b.cdf(k) >= 1.0 - tail).unwrap();
        (lo, hi)
    }

    #[test]
    fn erdos_renyi_edge_count_in_binomial_band() {
        let n = 200;
        let p = 0.03;
        let net = generate_random_network(n, RandomModel::ErdosRenyi { p }, 1, true).unwrap();
        assert!(net.is_connected());
        let pairs = (n * (n - 1) / 2) as u64;
        let (lo, hi) = binomial_band(pairs, p, 0.99);
        let m = net.edge_count() as u64;
        assert!((lo..=hi).contains(&m), "{m} edges outside [{lo}, {hi}]");
    }
}

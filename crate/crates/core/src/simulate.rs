//! Generators for network-dependent node values.
//!
//! Direct transmission: starting from iid standard normals, each step mixes
//! a node's value with its neighbors' values and adds fresh noise,
//!
//! ```text
//! Y(t) = P Y(t-1) + sigma ε(t)
//! P = (1 - a) I + a D⁻¹ A      (neighbor mean, the default)
//! P = (1 - a) I + a A          (neighbor sum)
//! ```
//!
//! Under the mean rule isolated nodes use their own value as the neighbor
//! mean (so `P` is row-stochastic). Either way `Y(κ) = P^κ Y(0) + sigma
//! Σ_{s<κ} P^s ε(κ-s)` and `Cov Y(κ) = P^κ P^κᵀ + sigma² Σ_{s=0}^{κ-1} P^s P^sᵀ`.
//!
//! The mean rule keeps variances bounded, so the shared component it builds
//! is mostly the network-wide average. The sum rule amplifies the leading
//! eigenvector of `A` instead, which survives centring; it is the rule to
//! use when looking at correlations between two independent outcomes.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::deptest::NodeValues;
use crate::error::{Error, Result};
use crate::graph::Network;
use crate::rng::{self, StreamRng};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransmissionRule {
    #[default]
    NeighborMean,
    NeighborSum,
}

impl std::str::FromStr for TransmissionRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "neighbor-mean" | "mean" => Ok(TransmissionRule::NeighborMean),
            "neighbor-sum" | "sum" => Ok(TransmissionRule::NeighborSum),
            _ => Err(Error::InvalidParameter(format!("unknown transmission rule '{s}' (expected neighbor-mean or neighbor-sum)"))),
        }
    }
}

/// Parameters of the transmission process, without horizon or seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transmission {
    #[serde(default)]
    pub rule: TransmissionRule,
    /// Weight on the neighbor term, in `[0, 1]`.
    pub a: f64,
    /// Scale of the per-step noise.
    pub sigma: f64,
}

impl Default for Transmission {
    fn default() -> Self {
        Transmission { rule: TransmissionRule::NeighborMean, a: 0.5, sigma: 0.5 }
    }
}

impl Transmission {
    pub fn new(a: f64, sigma: f64) -> Self {
        Transmission { rule: TransmissionRule::NeighborMean, a, sigma }
    }

    pub fn with_rule(self, rule: TransmissionRule) -> Self {
        Transmission { rule, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.a) {
            return Err(Error::InvalidParameter(format!("a = {} outside [0, 1]", self.a)));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::InvalidParameter(format!("sigma = {} must be >= 0", self.sigma)));
        }
        Ok(())
    }

    /// One transmission step without noise.
    fn step(&self, net: &Network, prev: &[f64]) -> Vec<f64> {
        let a = self.a;
        (0..net.node_count())
            .map(|i| {
                let nb = net.neighbors(i);
                let pulled = match self.rule {
                    TransmissionRule::NeighborMean if nb.is_empty() => prev[i],
                    TransmissionRule::NeighborMean => nb.iter().map(|&j| prev[j]).sum::<f64>() / nb.len() as f64,
                    TransmissionRule::NeighborSum => nb.iter().map(|&j| prev[j]).sum::<f64>(),
                };
                (1.0 - a) * prev[i] + a * pulled
            })
            .collect()
    }

    /// States `Y(0), ..., Y(max_kappa)` of one run drawn from `rng`.
    ///
    /// Draw order is `Y(0)` then `ε(1)`, `ε(2)`, ..., so runs to different
    /// horizons from the same stream share their prefix.
    pub fn path(&self, net: &Network, max_kappa: usize, rng: &mut StreamRng) -> Vec<Vec<f64>> {
        let n = net.node_count();
        let mut states = Vec::with_capacity(max_kappa + 1);
        states.push(normals(rng, n));
        for _ in 0..max_kappa {
            let mut next = self.step(net, states.last().unwrap());
            for (v, e) in next.iter_mut().zip(normals(rng, n)) {
                *v += self.sigma * e;
            }
            states.push(next);
        }
        states
    }

    /// The one-step operator `P`.
    pub fn operator(&self, net: &Network) -> DMatrix<f64> {
        let n = net.node_count();
        let a = self.a;
        let mut p = DMatrix::identity(n, n) * (1.0 - a);
        for i in 0..n {
            let nb = net.neighbors(i);
            match self.rule {
                TransmissionRule::NeighborMean if nb.is_empty() => p[(i, i)] += a,
                TransmissionRule::NeighborMean => {
                    let share = a / nb.len() as f64;
                    for &j in nb {
                        p[(i, j)] += share;
                    }
                }
                TransmissionRule::NeighborSum => {
                    for &j in nb {
                        p[(i, j)] += a;
                    }
                }
            }
        }
        p
    }

    /// Exact covariance of `Y(κ)`.
    pub fn covariance(&self, net: &Network, kappa: usize) -> DMatrix<f64> {
        let n = net.node_count();
        let p = self.operator(net);
        let mut power = DMatrix::identity(n, n);
        let mut noise = DMatrix::zeros(n, n);
        for _ in 0..kappa {
            noise += &power * power.transpose();
            power = &p * &power;
        }
        &power * power.transpose() + noise * (self.sigma * self.sigma)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransmissionConfig {
    #[serde(flatten)]
    pub process: Transmission,
    /// Number of transmission steps.
    pub kappa: usize,
    pub seed: u64,
}

impl Default for TransmissionConfig {
    fn default() -> Self {
        TransmissionConfig { process: Transmission::default(), kappa: 3, seed: 0 }
    }
}

fn normals(rng: &mut StreamRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Values after `cfg.kappa` transmission steps; `E[Y_i] = 0` for every node.
pub fn direct_transmission(net: &Network, cfg: &TransmissionConfig) -> Result<NodeValues> {
    cfg.process.validate()?;
    let mut rng = rng::stream(cfg.seed, &[rng::tag::OUTCOME]);
    let mut path = cfg.process.path(net, cfg.kappa, &mut rng);
    NodeValues::new(path.pop().unwrap())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatentConfig {
    /// Geodesic decay length of the kernel.
    pub length_scale: f64,
    /// Scale of the idiosyncratic noise.
    pub noise: f64,
    pub seed: u64,
}

/// Smooths iid latent traits with the kernel `exp(-d(i,j)/ℓ)` over each
/// node's component, then adds noise.
pub fn latent_variable_outcome(net: &Network, cfg: &LatentConfig) -> Result<NodeValues> {
    if !(cfg.length_scale.is_finite() && cfg.length_scale > 0.0) {
        return Err(Error::InvalidParameter(format!("length scale {} must be > 0", cfg.length_scale)));
    }
    if !(cfg.noise.is_finite() && cfg.noise >= 0.0) {
        return Err(Error::InvalidParameter(format!("noise {} must be >= 0", cfg.noise)));
    }
    let n = net.node_count();
    let mut rng = rng::stream(cfg.seed, &[rng::tag::OUTCOME]);
    let z = normals(&mut rng, n);
    let eps = normals(&mut rng, n);
    let dist = net.geodesic_distances();
    let y = (0..n)
        .map(|i| {
            let (mut num, mut den) = (0.0, 0.0);
            for (j, zj) in z.iter().enumerate() {
                if let Some(d) = dist.get(i, j) {
                    let k = (-f64::from(d) / cfg.length_scale).exp();
                    num += k * zj;
                    den += k;
                }
            }
            num / den + cfg.noise * eps[i]
        })
        .collect();
    NodeValues::new(y)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfoundConfig {
    /// Effect of standardized degree on the mean.
    pub b: f64,
    pub noise: f64,
    pub seed: u64,
}

/// `(deg_i - mean) / sd` with the sample standard deviation.
pub fn standardized_degree(net: &Network) -> Result<Vec<f64>> {
    let deg: Vec<f64> = net.degrees().into_iter().map(|d| d as f64).collect();
    if deg.len() < 2 || deg.iter().all(|&d| d == deg[0]) {
        return Err(Error::DegenerateDegrees);
    }
    let m = stats::mean(&deg);
    let sd = stats::sample_sd(&deg);
    Ok(deg.iter().map(|d| (d - m) / sd).collect())
}

/// `X_i = b·stddeg_i + noise·ε_i`: a covariate whose mean rises with degree.
pub fn degree_confounded_covariate(net: &Network, cfg: &ConfoundConfig) -> Result<NodeValues> {
    if !(cfg.noise.is_finite() && cfg.noise > 0.0) {
        return Err(Error::InvalidParameter(format!("noise {} must be > 0", cfg.noise)));
    }
    let s = standardized_degree(net)?;
    let mut rng = rng::stream(cfg.seed, &[rng::tag::COVARIATE]);
    NodeValues::new(s.iter().map(|si| cfg.b * si + cfg.noise * rng.sample::<f64, _>(StandardNormal)).collect())
}

/// Outcome driven by degree, `Y_i = c·stddeg_i + noise·η_i`, for the
/// confounding study where degree is a common cause of X and Y.
pub fn degree_driven_outcome(net: &Network, effect: f64, noise: f64, seed: u64) -> Result<NodeValues> {
    let s = standardized_degree(net)?;
    let mut rng = rng::stream(seed, &[rng::tag::OUTCOME]);
    NodeValues::new(s.iter().map(|si| effect * si + noise * rng.sample::<f64, _>(StandardNormal)).collect())
}

/// Two ramps in unit index, `x_i = s_x·i/n` and `y_i = s_y·i/n` for
/// `i = 1..=n`, with independent fair-coin signs. They are perfectly
/// correlated or anti-correlated although generated independently.
pub fn monotone_pair(n: usize, seed: u64) -> Result<(NodeValues, NodeValues)> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("monotone pair needs n >= 2, got {n}")));
    }
    let mut rng = rng::stream(seed, &[rng::tag::OUTCOME]);
    let sx = if rng.random::<bool>() { 1.0 } else { -1.0 };
    let sy = if rng.random::<bool>() { 1.0 } else { -1.0 };
    let ramp = |s: f64| NodeValues::new((1..=n).map(|i| s * i as f64 / n as f64).collect());
    Ok((ramp(sx)?, ramp(sy)?))
}

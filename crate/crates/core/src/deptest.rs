//! Moran's I and Geary's c on network weights, with randomization-null
//! moments and a seeded permutation test.
//!
//! All statistics work on the centered values `z = y - ȳ`. The denominator
//! `Σ z²` is invariant under relabeling, so a permutation only changes the
//! cross-product numerator, which is evaluated over the nonzero weights.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::graph::WeightMatrix;
use crate::rng;

/// Largest `n` accepted by [`enumerate_null`].
pub const MAX_ENUMERATION_N: usize = 8;

/// Default permutation count.
pub const DEFAULT_PERMUTATIONS: usize = 500;

/// Below this size the normal approximation is reported as unreliable.
pub const NORMAL_APPROX_MIN_N: usize = 30;

/// Finite node values, one per node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeValues(Vec<f64>);

impl NodeValues {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(NodeValues(values))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn mean(&self) -> f64 {
        self.0.iter().sum::<f64>() / self.0.len() as f64
    }

    /// `a + b·y`.
    pub fn affine(&self, a: f64, b: f64) -> Result<Self> {
        NodeValues::new(self.0.iter().map(|v| a + b * v).collect())
    }
}

impl From<NodeValues> for Vec<f64> {
    fn from(v: NodeValues) -> Self {
        v.0
    }
}

impl std::ops::Index<usize> for NodeValues {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Centered values plus the relabeling-invariant pieces of each statistic.
struct Centered {
    z: Vec<f64>,
    m2: f64,
    s0: f64,
}

impl Centered {
    fn new(y: &NodeValues, w: &WeightMatrix) -> Result<Self> {
        if y.len() != w.n() {
            return Err(Error::DimensionMismatch { expected: w.n(), got: y.len() });
        }
        let mean = y.mean();
        let z: Vec<f64> = y.as_slice().iter().map(|v| v - mean).collect();
        let m2: f64 = z.iter().map(|v| v * v).sum();
        // Relative test: values like (c, c, c) can leave O(eps·c) residue after centering.
        let scale = y.as_slice().iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if m2 <= (scale * f64::EPSILON).powi(2) * y.len() as f64 * 16.0 {
            return Err(Error::ZeroVariance);
        }
        Ok(Centered { z, m2, s0: w.s0() })
    }

    fn n(&self) -> f64 {
        self.z.len() as f64
    }

    /// Multiplier turning a cross-product sum into I.
    fn moran_scale(&self) -> f64 {
        self.n() / (self.s0 * self.m2)
    }
}

fn cross_product(z: &[f64], w: &WeightMatrix) -> f64 {
    w.nonzero().iter().map(|&(i, j, wij)| wij * z[i] * z[j]).sum()
}

fn squared_contrast(z: &[f64], w: &WeightMatrix) -> f64 {
    w.nonzero()
        .iter()
        .map(|&(i, j, wij)| {
            let d = z[i] - z[j];
            wij * d * d
        })
        .sum()
}

/// Moran's I: `n Σ_ij w_ij z_i z_j / (S0 Σ_i z_i²)`.
pub fn morans_i(y: &NodeValues, w: &WeightMatrix) -> Result<f64> {
    let c = Centered::new(y, w)?;
    Ok(cross_product(&c.z, w) * c.moran_scale())
}

/// Geary's c: `(n-1) Σ_ij w_ij (y_i - y_j)² / (2 S0 Σ_i z_i²)`.
pub fn gearys_c(y: &NodeValues, w: &WeightMatrix) -> Result<f64> {
    let c = Centered::new(y, w)?;
    Ok((c.n() - 1.0) * squared_contrast(&c.z, w) / (2.0 * c.s0 * c.m2))
}

/// First two moments of Moran's I under random relabeling of the values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NullMoments {
    pub mean_i: f64,
    pub var_i: f64,
    pub s0: f64,
    pub s1: f64,
    pub s2: f64,
    /// Sample kurtosis `n Σ z⁴ / (Σ z²)²`.
    pub b2: f64,
}

impl NullMoments {
    /// Standardized statistic, or `None` when the null variance vanishes
    /// (for example on a complete graph, where I is relabeling-invariant).
    pub fn standardize(&self, i_stat: f64) -> Option<f64> {
        let floor = 64.0 * f64::EPSILON * self.mean_i.powi(2).max(1e-300);
        (self.var_i > floor).then(|| (i_stat - self.mean_i) / self.var_i.sqrt())
    }
}

/// Closed-form randomization moments (kurtosis-corrected variance).
pub fn null_moments(y: &NodeValues, w: &WeightMatrix) -> Result<NullMoments> {
    if y.len() != w.n() {
        return Err(Error::DimensionMismatch { expected: w.n(), got: y.len() });
    }
    let n_us = y.len();
    if n_us < 4 {
        return Err(Error::MomentsUnavailable(n_us));
    }
    let c = Centered::new(y, w)?;
    let n = c.n();
    let dense = w.dense();
    let s0 = c.s0;
    let mut s1 = 0.0;
    for i in 0..n_us {
        for j in 0..n_us {
            let t = dense[(i, j)] + dense[(j, i)];
            s1 += t * t;
        }
    }
    s1 *= 0.5;
    let s2: f64 = (0..n_us)
        .map(|i| {
            let t = dense.row(i).sum() + dense.column(i).sum();
            t * t
        })
        .sum();
    let m4: f64 = c.z.iter().map(|v| v.powi(4)).sum();
    let b2 = n * m4 / (c.m2 * c.m2);
    let mean_i = -1.0 / (n - 1.0);
    let second = (n * ((n * n - 3.0 * n + 3.0) * s1 - n * s2 + 3.0 * s0 * s0)
        - b2 * ((n * n - n) * s1 - 2.0 * n * s2 + 6.0 * s0 * s0))
        / ((n - 1.0) * (n - 2.0) * (n - 3.0) * s0 * s0);
    let var_i = (second - mean_i * mean_i).max(0.0);
    Ok(NullMoments { mean_i, var_i, s0, s1, s2, b2 })
}

/// Exact relabeling distribution of Moran's I.
#[derive(Debug, Clone, PartialEq)]
pub struct NullEnumeration {
    pub mean: f64,
    /// Population variance over all `n!` relabelings.
    pub variance: f64,
    /// One statistic per relabeling, in Heap's-algorithm order.
    pub values: Vec<f64>,
}

/// Evaluates Moran's I over every permutation of `y` (`n <= 8`).
pub fn enumerate_null(y: &NodeValues, w: &WeightMatrix) -> Result<NullEnumeration> {
    if y.len() > MAX_ENUMERATION_N {
        return Err(Error::TooLargeForEnumeration(y.len()));
    }
    let c = Centered::new(y, w)?;
    let scale = c.moran_scale();
    let mut z = c.z.clone();
    let n = z.len();
    let mut values = Vec::with_capacity((1..=n).product());
    values.push(cross_product(&z, w) * scale);
    // Heap's algorithm, iterative form.
    let mut counters = vec![0usize; n];
    let mut i = 1;
    while i < n {
        if counters[i] < i {
            if i % 2 == 0 {
                z.swap(0, i);
            } else {
                z.swap(counters[i], i);
            }
            values.push(cross_product(&z, w) * scale);
            counters[i] += 1;
            i = 1;
        } else {
            counters[i] = 0;
            i += 1;
        }
    }
    let count = values.len() as f64;
    let mean = values.iter().sum::<f64>() / count;
    let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / count;
    Ok(NullEnumeration { mean, variance, values })
}

/// Which tail counts as evidence against independence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Alternative {
    /// Positive dependence: large I (small c).
    #[default]
    Greater,
    TwoSided,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PermutationConfig {
    pub m: usize,
    pub seed: u64,
    #[serde(default)]
    pub alternative: Alternative,
}

impl PermutationConfig {
    pub fn new(m: usize, seed: u64) -> Self {
        PermutationConfig { m, seed, alternative: Alternative::Greater }
    }

    fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::InvalidParameter("permutation count must be >= 1".into()));
        }
        Ok(())
    }
}

impl Default for PermutationConfig {
    fn default() -> Self {
        PermutationConfig::new(DEFAULT_PERMUTATIONS, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoranResult {
    pub i_stat: f64,
    pub i_std: Option<f64>,
    pub moments: Option<NullMoments>,
    pub p_normal: Option<f64>,
    pub p_perm: Option<f64>,
    pub m_used: usize,
    pub n: usize,
    pub alternative: Alternative,
}

/// Upper-tail probability of a standard normal.
pub fn normal_upper_tail(x: f64) -> f64 {
    Normal::standard().sf(x)
}

fn normal_p(z: f64, alternative: Alternative) -> f64 {
    match alternative {
        Alternative::Greater => normal_upper_tail(z),
        Alternative::TwoSided => (2.0 * normal_upper_tail(z.abs())).min(1.0),
    }
}

/// Counts relabelings whose statistic is at least as extreme as the
/// observed one. Replicate `k` shuffles with its own stream, so the count is
/// independent of the thread pool size.
fn count_extreme<F>(z: &[f64], cfg: &PermutationConfig, stat: F, is_extreme: impl Fn(f64) -> bool + Sync) -> usize
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    (0..cfg.m)
        .into_par_iter()
        .map_init(
            || z.to_vec(),
            |buf, k| {
                buf.copy_from_slice(z);
                let mut rng = rng::stream(cfg.seed, &[rng::tag::PERMUTE, k as u64]);
                buf.shuffle(&mut rng);
                usize::from(is_extreme(stat(buf)))
            },
        )
        .sum()
}

/// Slack for treating two cross-product sums as tied: a bound on the
/// rounding error of summing `nnz` terms of magnitude at most `S0·max z²`.
fn tie_slack(z: &[f64], w: &WeightMatrix) -> f64 {
    let zmax = z.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    4.0 * w.nonzero().len() as f64 * f64::EPSILON * w.s0() * zmax * zmax
}

/// Moran's I with a permutation p-value `(1 + #extreme) / (M + 1)`; the
/// analytic moments and normal p-value are filled in when `n >= 4`.
pub fn permutation_test(y: &NodeValues, w: &WeightMatrix, cfg: &PermutationConfig) -> Result<MoranResult> {
    cfg.validate()?;
    let c = Centered::new(y, w)?;
    let observed = cross_product(&c.z, w);
    let slack = tie_slack(&c.z, w);
    let n = c.z.len();
    // I = E[I] + (num - num_mean)·scale; compare on the numerator scale.
    let centre = -1.0 / (c.n() - 1.0) / c.moran_scale();
    let count = match cfg.alternative {
        Alternative::Greater => {
            count_extreme(&c.z, cfg, |z| cross_product(z, w), |v| v >= observed - slack)
        }
        Alternative::TwoSided => {
            let dev = (observed - centre).abs();
            count_extreme(&c.z, cfg, |z| cross_product(z, w), |v| (v - centre).abs() >= dev - slack)
        }
    };
    let i_stat = observed * c.moran_scale();
    let p_perm = (1 + count) as f64 / (cfg.m + 1) as f64;
    let (moments, i_std, p_normal) = if n >= 4 {
        let m = null_moments(y, w)?;
        let z = m.standardize(i_stat);
        (Some(m), z, z.map(|z| normal_p(z, cfg.alternative)))
    } else {
        (None, None, None)
    };
    Ok(MoranResult {
        i_stat,
        i_std,
        moments,
        p_normal,
        p_perm: Some(p_perm),
        m_used: cfg.m,
        n,
        alternative: cfg.alternative,
    })
}

/// Moran's I with the normal-approximation p-value only.
pub fn normal_test(y: &NodeValues, w: &WeightMatrix, alternative: Alternative) -> Result<MoranResult> {
    let moments = null_moments(y, w)?;
    let i_stat = morans_i(y, w)?;
    let i_std = moments.standardize(i_stat);
    Ok(MoranResult {
        i_stat,
        i_std,
        moments: Some(moments),
        p_normal: i_std.map(|z| normal_p(z, alternative)),
        p_perm: None,
        m_used: 0,
        n: y.len(),
        alternative,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GearyResult {
    pub c_stat: f64,
    pub p_perm: f64,
    pub m_used: usize,
}

/// Permutation test for Geary's c. Positive dependence shows up as small c,
/// so the one-sided test counts `c* <= c_obs`; two-sided measures distance from 1.
pub fn geary_permutation_test(y: &NodeValues, w: &WeightMatrix, cfg: &PermutationConfig) -> Result<GearyResult> {
    cfg.validate()?;
    let c = Centered::new(y, w)?;
    let observed = squared_contrast(&c.z, w);
    let slack = tie_slack(&c.z, w) * 4.0;
    let to_c = (c.n() - 1.0) / (2.0 * c.s0 * c.m2);
    let one = 1.0 / to_c;
    let count = match cfg.alternative {
        Alternative::Greater => {
            count_extreme(&c.z, cfg, |z| squared_contrast(z, w), |v| v <= observed + slack)
        }
        Alternative::TwoSided => {
            let dev = (observed - one).abs();
            count_extreme(&c.z, cfg, |z| squared_contrast(z, w), |v| (v - one).abs() >= dev - slack)
        }
    };
    Ok(GearyResult {
        c_stat: observed * to_c,
        p_perm: (1 + count) as f64 / (cfg.m + 1) as f64,
        m_used: cfg.m,
    })
}

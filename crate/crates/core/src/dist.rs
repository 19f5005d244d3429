//! Finite discrete speed distributions and their independent compositions.
//!
//! Every rate and bandwidth in the simulator is an [`EmpiricalDistribution`]:
//! a probability mass over strictly positive, strictly ascending speed
//! values. Compositions (max, min, mean of independent draws) are computed by
//! exact joint enumeration and then rebinned so the support never grows past
//! a bin cap.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_BIN_CAP: usize = 64;

/// Allowed deviation of the total mass from one.
pub const MASS_TOLERANCE: f64 = 1e-9;

/// Support values closer than this (relative) are treated as the same point.
const MERGE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDistribution", into = "RawDistribution")]
pub struct EmpiricalDistribution {
    support: Vec<f64>,
    mass: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawDistribution {
    support: Vec<f64>,
    mass: Vec<f64>,
}

impl TryFrom<RawDistribution> for EmpiricalDistribution {
    type Error = Error;

    fn try_from(raw: RawDistribution) -> Result<Self> {
        Self::new(raw.support, raw.mass)
    }
}

impl From<EmpiricalDistribution> for RawDistribution {
    fn from(d: EmpiricalDistribution) -> Self {
        RawDistribution { support: d.support, mass: d.mass }
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidDistribution(msg.into())
}

impl EmpiricalDistribution {
    /// Builds a distribution from an already canonical support/mass pair.
    pub fn new(support: Vec<f64>, mass: Vec<f64>) -> Result<Self> {
        if support.is_empty() {
            return Err(invalid("empty support"));
        }
        if support.len() != mass.len() {
            return Err(invalid(format!(
                "support has {} points but mass has {}",
                support.len(),
                mass.len()
            )));
        }
        for w in support.windows(2) {
            if w[1] <= w[0] {
                return Err(invalid("support must be strictly ascending"));
            }
        }
        if let Some(v) = support.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(invalid(format!("support value {v} is not strictly positive")));
        }
        if let Some(p) = mass.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(invalid(format!("mass {p} is negative or not finite")));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(invalid(format!("masses sum to {total}")));
        }
        Ok(Self { support, mass })
    }

    /// Builds a distribution from unordered `(value, mass)` pairs whose masses
    /// already sum to one. Repeated values are merged.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let pairs: Vec<(f64, f64)> = pairs.into_iter().collect();
        check_pairs(&pairs)?;
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(invalid(format!("masses sum to {total}")));
        }
        Ok(Self::canonical(pairs))
    }

    /// Like [`from_pairs`](Self::from_pairs) but normalizes arbitrary
    /// non-negative weights.
    pub fn from_weights(pairs: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let pairs: Vec<(f64, f64)> = pairs.into_iter().collect();
        check_pairs(&pairs)?;
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        if total <= 0.0 {
            return Err(invalid("weights sum to zero"));
        }
        Ok(Self::canonical(pairs))
    }

    pub fn point(value: f64) -> Result<Self> {
        if !(value.is_finite() && value > 0.0) {
            return Err(invalid(format!("point mass at {value}")));
        }
        Ok(Self { support: vec![value], mass: vec![1.0] })
    }

    /// Uniform mass over the given values.
    pub fn uniform(values: &[f64]) -> Result<Self> {
        let w = 1.0 / values.len().max(1) as f64;
        Self::from_weights(values.iter().map(|&v| (v, w)))
    }

    /// Equal-mass histogram of observed samples: the sorted samples are split
    /// into at most `cap` groups of (nearly) equal count, each represented by
    /// its mean.
    pub fn from_samples(samples: &[f64], cap: usize) -> Result<Self> {
        if samples.is_empty() {
            return Err(invalid("no samples"));
        }
        if let Some(v) = samples.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(invalid(format!("sample {v} is not strictly positive")));
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let groups = n.min(cap.max(1));
        let mut pairs = Vec::with_capacity(groups);
        for g in 0..groups {
            let lo = g * n / groups;
            let hi = (g + 1) * n / groups;
            let chunk = &sorted[lo..hi];
            let mean = chunk.iter().sum::<f64>() / chunk.len() as f64;
            pairs.push((mean, chunk.len() as f64 / n as f64));
        }
        Ok(Self::canonical(pairs))
    }

    /// Normal density discretized into `bins` equal-width bins over
    /// `[max(floor, mean - 3sd), mean + 3sd]`, mass taken from the density at
    /// each bin centre and renormalized after truncation.
    pub fn discretized_normal(mean: f64, sd: f64, bins: usize, floor: f64) -> Result<Self> {
        if !(mean.is_finite() && mean > 0.0) {
            return Err(invalid(format!("normal mean {mean}")));
        }
        if !(sd.is_finite() && sd > 0.0) || bins < 2 {
            return Self::point(mean);
        }
        let lo = (mean - 3.0 * sd).max(floor.max(f64::MIN_POSITIVE));
        let hi = mean + 3.0 * sd;
        if hi <= lo {
            return Self::point(mean.max(lo));
        }
        let width = (hi - lo) / bins as f64;
        let pairs: Vec<(f64, f64)> = (0..bins)
            .map(|i| {
                let centre = lo + (i as f64 + 0.5) * width;
                let z = (centre - mean) / sd;
                (centre, (-0.5 * z * z).exp())
            })
            .collect();
        Self::from_weights(pairs)
    }

    /// Sorts, merges near-equal values, drops zero masses and renormalizes.
    /// Callers guarantee positive finite values and non-negative masses.
    fn canonical(mut pairs: Vec<(f64, f64)>) -> Self {
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut support: Vec<f64> = Vec::with_capacity(pairs.len());
        let mut mass: Vec<f64> = Vec::with_capacity(pairs.len());
        for (v, p) in pairs {
            if p <= 0.0 {
                continue;
            }
            match support.last_mut() {
                Some(last) if (v - *last).abs() <= MERGE_TOLERANCE * v.abs().max(last.abs()) => {
                    let m = mass.last_mut().expect("parallel vectors");
                    // Averaging identical values can drift by an ulp.
                    if v != *last {
                        *last = (*last * *m + v * p) / (*m + p);
                    }
                    *m += p;
                }
                _ => {
                    support.push(v);
                    mass.push(p);
                }
            }
        }
        let total: f64 = mass.iter().sum();
        for m in &mut mass {
            *m /= total;
        }
        Self { support, mass }
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.support.iter().copied().zip(self.mass.iter().copied())
    }

    pub fn min_value(&self) -> f64 {
        self.support[0]
    }

    pub fn max_value(&self) -> f64 {
        self.support[self.support.len() - 1]
    }

    pub fn expectation(&self) -> f64 {
        self.iter().map(|(v, p)| v * p).sum()
    }

    /// P(X <= v).
    pub fn cdf(&self, v: f64) -> f64 {
        self.iter().take_while(|(x, _)| *x <= v).map(|(_, p)| p).sum::<f64>().min(1.0)
    }

    /// Mass at exactly `v` (zero when `v` is not a support point).
    pub fn mass_at(&self, v: f64) -> f64 {
        match self.support.binary_search_by(|x| x.total_cmp(&v)) {
            Ok(i) => self.mass[i],
            Err(_) => 0.0,
        }
    }

    /// Inverse-CDF draw for a uniform `u` in `[0, 1)`.
    pub fn sample_with(&self, u: f64) -> f64 {
        let mut acc = 0.0;
        for (v, p) in self.iter() {
            acc += p;
            if u < acc {
                return v;
            }
        }
        self.max_value()
    }

    /// Multiplies every support value by `factor` (> 0).
    pub fn scaled(&self, factor: f64) -> Self {
        debug_assert!(factor > 0.0);
        Self {
            support: self.support.iter().map(|v| v * factor).collect(),
            mass: self.mass.clone(),
        }
    }

    /// Distribution of `max(X, Y)` for independent `X ~ self`, `Y ~ other`.
    /// The result CDF is the product of the input CDFs.
    pub fn max_compose(&self, other: &Self, cap: usize) -> Self {
        let values = merged_support(&self.support, &other.support);
        let (mut ia, mut ib) = (0, 0);
        let (mut fa, mut fb) = (0.0_f64, 0.0_f64);
        let mut prev = 0.0;
        let mut pairs = Vec::with_capacity(values.len());
        for &v in &values {
            while ia < self.len() && self.support[ia] <= v {
                fa += self.mass[ia];
                ia += 1;
            }
            while ib < other.len() && other.support[ib] <= v {
                fb += other.mass[ib];
                ib += 1;
            }
            let ca = if ia == self.len() { 1.0 } else { fa };
            let cb = if ib == other.len() { 1.0 } else { fb };
            let joint = ca * cb;
            pairs.push((v, (joint - prev).max(0.0)));
            prev = joint;
        }
        Self::canonical(pairs).rebin(cap)
    }

    /// Distribution of `min(X, Y)` for independent draws. The result survival
    /// function `P(. >= v)` is the product of the input survival functions.
    pub fn min_compose(&self, other: &Self, cap: usize) -> Self {
        let values = merged_support(&self.support, &other.support);
        let (mut ia, mut ib) = (self.len(), other.len());
        let (mut sa, mut sb) = (0.0_f64, 0.0_f64);
        let mut prev = 0.0;
        let mut pairs = Vec::with_capacity(values.len());
        for &v in values.iter().rev() {
            while ia > 0 && self.support[ia - 1] >= v {
                ia -= 1;
                sa += self.mass[ia];
            }
            while ib > 0 && other.support[ib - 1] >= v {
                ib -= 1;
                sb += other.mass[ib];
            }
            let ga = if ia == 0 { 1.0 } else { sa };
            let gb = if ib == 0 { 1.0 } else { sb };
            let joint = ga * gb;
            pairs.push((v, (joint - prev).max(0.0)));
            prev = joint;
        }
        Self::canonical(pairs).rebin(cap)
    }

    /// Distribution of the arithmetic mean of one independent draw from each
    /// input. Partial sums are rebinned to `cap` as they grow.
    pub fn mean_compose(ds: &[Self], cap: usize) -> Result<Self> {
        let (first, rest) = ds.split_first().ok_or(Error::NoInputLocations)?;
        let mut sum = first.clone();
        for d in rest {
            let mut pairs = Vec::with_capacity(sum.len() * d.len());
            for (x, p) in sum.iter() {
                for (y, q) in d.iter() {
                    pairs.push((x + y, p * q));
                }
            }
            sum = Self::canonical(pairs).rebin(cap);
        }
        let n = ds.len() as f64;
        let support = sum.support.iter().map(|v| v / n).collect();
        Ok(Self { support, mass: sum.mass }.rebin(cap))
    }

    /// Reduces the support to at most `cap` points. The range is cut into
    /// `cap` equal-width bins and each non-empty bin collapses to its
    /// conditional mean, which preserves the expectation.
    pub fn rebin(&self, cap: usize) -> Self {
        let cap = cap.max(1);
        if self.len() <= cap {
            return self.clone();
        }
        let lo = self.min_value();
        let width = (self.max_value() - lo) / cap as f64;
        let mut weight = vec![0.0; cap];
        let mut moment = vec![0.0; cap];
        for (v, p) in self.iter() {
            let idx = (((v - lo) / width) as usize).min(cap - 1);
            weight[idx] += p;
            moment[idx] += p * v;
        }
        let pairs = weight
            .into_iter()
            .zip(moment)
            .filter(|(w, _)| *w > 0.0)
            .map(|(w, m)| (m / w, w));
        Self::canonical(pairs.collect())
    }

    /// Largest per-point mass difference against `other` over the union of
    /// both supports.
    pub fn max_mass_diff(&self, other: &Self) -> f64 {
        merged_support(&self.support, &other.support)
            .into_iter()
            .map(|v| (self.mass_at(v) - other.mass_at(v)).abs())
            .fold(0.0, f64::max)
    }
}

fn check_pairs(pairs: &[(f64, f64)]) -> Result<()> {
    if pairs.is_empty() {
        return Err(invalid("empty support"));
    }
    for &(v, p) in pairs {
        if !(v.is_finite() && v > 0.0) {
            return Err(invalid(format!("support value {v} is not strictly positive")));
        }
        if !(p.is_finite() && p >= 0.0) {
            return Err(invalid(format!("mass {p} is negative or not finite")));
        }
    }
    Ok(())
}

fn merged_support(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => match x.total_cmp(&y) {
                Ordering::Less => {
                    i += 1;
                    x
                }
                Ordering::Greater => {
                    j += 1;
                    y
                }
                Ordering::Equal => {
                    i += 1;
                    j += 1;
                    x
                }
            },
            (Some(&x), None) => {
                i += 1;
                x
            }
            (None, Some(&y)) => {
                j += 1;
                y
            }
            (None, None) => unreachable!(),
        };
        out.push(next);
    }
    out
}

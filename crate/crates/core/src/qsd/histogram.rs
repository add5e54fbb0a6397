use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CylindricalDomain, KineticState};
use crate::numeric::CompensatedSum;

pub const DEFAULT_BINS: usize = 40;

/// Uniform binning of a phase-space window `[q_lo, q_hi] x [p_lo, p_hi]`.
/// Bin indices run over the `2d` axes in order `(q_1..q_d, p_1..p_d)`, last
/// axis fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistogramSpec {
    pub q_lo: Vec<f64>,
    pub q_hi: Vec<f64>,
    pub p_lo: Vec<f64>,
    pub p_hi: Vec<f64>,
    #[serde(default = "default_bins")]
    pub bins: usize,
}

fn default_bins() -> usize {
    DEFAULT_BINS
}

impl HistogramSpec {
    pub fn new(q_lo: Vec<f64>, q_hi: Vec<f64>, p_lo: Vec<f64>, p_hi: Vec<f64>, bins: usize) -> Result<Self> {
        let s = Self {
            q_lo,
            q_hi,
            p_lo,
            p_hi,
            bins,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.q_lo.len();
        if d == 0 || [self.q_hi.len(), self.p_lo.len(), self.p_hi.len()].iter().any(|&n| n != d) {
            return Err(Error::param("histogram", "window bounds must share one dimension"));
        }
        if self.lo().iter().zip(self.hi()).any(|(a, b)| !(*a < b)) {
            return Err(Error::param("histogram", "window bounds must satisfy lo < hi"));
        }
        if self.bins == 0 {
            return Err(Error::param("bins", "must be positive"));
        }
        if (self.bins as f64).powi(2 * d as i32) > 5e7 {
            return Err(Error::param("bins", "too many bins for this dimension"));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.q_lo.len()
    }

    pub fn n_bins(&self) -> usize {
        self.bins.pow(2 * self.dim() as u32)
    }

    fn lo(&self) -> Vec<f64> {
        self.q_lo.iter().chain(&self.p_lo).copied().collect()
    }

    fn hi(&self) -> Vec<f64> {
        self.q_hi.iter().chain(&self.p_hi).copied().collect()
    }

    /// Bin of `(q, p)`, or `None` outside the window. Upper edges belong to
    /// the last bin.
    pub fn bin_index(&self, q: &[f64], p: &[f64]) -> Option<usize> {
        let d = self.dim();
        let mut idx = 0usize;
        for k in 0..2 * d {
            let (x, lo, hi) = if k < d {
                (q[k], self.q_lo[k], self.q_hi[k])
            } else {
                (p[k - d], self.p_lo[k - d], self.p_hi[k - d])
            };
            if !(x >= lo && x <= hi) {
                return None;
            }
            let j = (((x - lo) / (hi - lo)) * self.bins as f64) as usize;
            idx = idx * self.bins + j.min(self.bins - 1);
        }
        Some(idx)
    }

    /// Lower and upper corners of bin `idx` as `2d` phase coordinates.
    pub fn bin_bounds(&self, idx: usize) -> (Vec<f64>, Vec<f64>) {
        let (lo, hi) = (self.lo(), self.hi());
        let n = lo.len();
        let mut digits = vec![0usize; n];
        let mut r = idx;
        for k in (0..n).rev() {
            digits[k] = r % self.bins;
            r /= self.bins;
        }
        let mut a = Vec::with_capacity(n);
        let mut b = Vec::with_capacity(n);
        for k in 0..n {
            let w = (hi[k] - lo[k]) / self.bins as f64;
            a.push(lo[k] + w * digits[k] as f64);
            b.push(lo[k] + w * (digits[k] + 1) as f64);
        }
        (a, b)
    }

    pub fn bin_center(&self, idx: usize) -> Vec<f64> {
        let (a, b) = self.bin_bounds(idx);
        a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect()
    }

    /// Default window: the bounding box of `O` (clipped to `[-r_q, r_q]`) times
    /// `[-r_p, r_p]^d`.
    pub fn for_domain(domain: &CylindricalDomain, r_q: f64, r_p: f64, bins: usize) -> Result<Self> {
        let d = domain.dim();
        let (mut lo, mut hi) = (vec![-r_q; d], vec![r_q; d]);
        if let Some((blo, bhi)) = domain.bounding_box() {
            for i in 0..d {
                lo[i] = lo[i].max(blo[i]);
                hi[i] = hi[i].min(bhi[i]);
            }
        }
        Self::new(lo, hi, vec![-r_p; d], vec![r_p; d], bins)
    }
}

/// Raw weighted counts on a [`HistogramSpec`], plus an overflow bin.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramAccumulator {
    pub spec: HistogramSpec,
    counts: Vec<f64>,
    overflow: f64,
}

impl HistogramAccumulator {
    pub fn new(spec: HistogramSpec) -> Self {
        Self {
            counts: vec![0.0; spec.n_bins()],
            overflow: 0.0,
            spec,
        }
    }

    pub fn add(&mut self, q: &[f64], p: &[f64], w: f64) {
        match self.spec.bin_index(q, p) {
            Some(i) => self.counts[i] += w,
            None => self.overflow += w,
        }
    }

    pub fn add_bin(&mut self, bin: Option<usize>, w: f64) {
        match bin {
            Some(i) => self.counts[i] += w,
            None => self.overflow += w,
        }
    }

    pub fn total(&self) -> f64 {
        let mut s = CompensatedSum::new();
        for &c in &self.counts {
            s.add(c);
        }
        s.add(self.overflow);
        s.value()
    }

    pub fn finish(&self) -> Result<Histogram> {
        let total = self.total();
        if !(total > 0.0) {
            return Err(Error::EmptyHistogram);
        }
        Ok(Histogram {
            spec: self.spec.clone(),
            weights: self.counts.iter().map(|c| c / total).collect(),
            overflow: self.overflow / total,
            mass: total,
        })
    }
}

/// Normalized histogram: `sum(weights) + overflow = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub spec: HistogramSpec,
    pub weights: Vec<f64>,
    /// Mass outside the window.
    pub overflow: f64,
    /// Un-normalized total weight that was accumulated.
    pub mass: f64,
}

impl Histogram {
    pub fn from_states(spec: &HistogramSpec, states: &[KineticState]) -> Result<Self> {
        let mut acc = HistogramAccumulator::new(spec.clone());
        for s in states {
            acc.add(&s.q, &s.p, 1.0);
        }
        acc.finish()
    }

    /// Total variation distance `(1/2) (sum |w - v| + |o - o'|)` on the common binning.
    pub fn total_variation(&self, other: &Histogram) -> Result<f64> {
        if self.spec != other.spec {
            return Err(Error::param("histogram", "binnings differ"));
        }
        let mut s = CompensatedSum::new();
        for (a, b) in self.weights.iter().zip(&other.weights) {
            s.add((a - b).abs());
        }
        s.add((self.overflow - other.overflow).abs());
        Ok(0.5 * s.value())
    }

    /// `sum_bins w f(center)` over the window, normalized by in-window mass.
    pub fn expectation(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        let mut s = CompensatedSum::new();
        let mut m = CompensatedSum::new();
        for (i, &w) in self.weights.iter().enumerate() {
            if w > 0.0 {
                s.add(w * f(&self.spec.bin_center(i)));
                m.add(w);
            }
        }
        s.value() / m.value()
    }

    /// Mean and variance of each phase coordinate under the bin-uniform
    /// density (bin-center mean, variance including the `w^2/12` bin spread).
    pub fn moments(&self) -> (Vec<f64>, Vec<f64>) {
        let n = 2 * self.spec.dim();
        let mut mean = vec![0.0; n];
        let mut second = vec![0.0; n];
        let mut mass = 0.0;
        for (i, &w) in self.weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let (a, b) = self.spec.bin_bounds(i);
            for k in 0..n {
                let c = 0.5 * (a[k] + b[k]);
                let h = b[k] - a[k];
                mean[k] += w * c;
                second[k] += w * (c * c + h * h / 12.0);
            }
            mass += w;
        }
        let mean: Vec<f64> = mean.iter().map(|m| m / mass).collect();
        let var = second.iter().zip(&mean).map(|(s, m)| s / mass - m * m).collect();
        (mean, var)
    }

    pub fn in_window_mass(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Draws states from a histogram: a bin by weight, then uniformly inside it.
#[derive(Debug, Clone)]
pub struct HistogramSampler {
    hist: Histogram,
    bins: Vec<usize>,
    index: WeightedIndex<f64>,
}

impl HistogramSampler {
    pub fn new(hist: &Histogram) -> Result<Self> {
        let bins: Vec<usize> = (0..hist.weights.len()).filter(|&i| hist.weights[i] > 0.0).collect();
        if bins.is_empty() {
            return Err(Error::EmptyHistogram);
        }
        let index = WeightedIndex::new(bins.iter().map(|&i| hist.weights[i])).map_err(|_| Error::EmptyHistogram)?;
        Ok(Self {
            hist: hist.clone(),
            bins,
            index,
        })
    }

    pub fn histogram(&self) -> &Histogram {
        &self.hist
    }

    /// One draw; bins straddling `partial O` are resampled until the position
    /// falls inside the domain.
    pub fn sample<R: Rng + ?Sized>(&self, domain: &CylindricalDomain, rng: &mut R) -> Result<KineticState> {
        let d = self.hist.spec.dim();
        for _ in 0..1000 {
            let bin = self.bins[self.index.sample(rng)];
            let (a, b) = self.hist.spec.bin_bounds(bin);
            let x: Vec<f64> = a.iter().zip(&b).map(|(lo, hi)| rng.gen_range(*lo..*hi)).collect();
            if domain.contains(&x[..d]) {
                return KineticState::new(x[..d].to_vec(), x[d..].to_vec());
            }
        }
        Err(Error::Construction("histogram support lies outside the domain".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn spec() -> HistogramSpec {
        HistogramSpec::new(vec![-2.0], vec![2.0], vec![-4.0], vec![4.0], 40).unwrap()
    }

    #[test]
    fn binning_and_bounds_agree() {
        let s = spec();
        let i = s.bin_index(&[0.05], &[-3.9]).unwrap();
        let (a, b) = s.bin_bounds(i);
        assert!(a[0] <= 0.05 && 0.05 <= b[0] && a[1] <= -3.9 && -3.9 <= b[1]);
        assert_eq!(s.bin_index(&[2.0], &[4.0]), Some(s.n_bins() - 1));
        assert_eq!(s.bin_index(&[2.1], &[0.0]), None);
    }

    #[test]
    fn weights_sum_to_one_with_overflow() {
        let mut acc = HistogramAccumulator::new(spec());
        for i in 0..1000 {
            let x = (i as f64 * 0.37).sin() * 3.0;
            acc.add(&[x], &[x * 1.7], 1.0);
        }
        let h = acc.finish().unwrap();
        assert!((h.in_window_mass() + h.overflow - 1.0).abs() < 1e-12);
        assert!(h.overflow > 0.0);
        assert_eq!(h.total_variation(&h).unwrap(), 0.0);
    }

    #[test]
    fn empty_histogram_is_an_error() {
        assert!(matches!(HistogramAccumulator::new(spec()).finish(), Err(Error::EmptyHistogram)));
    }

    #[test]
    fn single_bin_sampling_stays_in_bin() {
        let s = spec();
        let mut acc = HistogramAccumulator::new(s.clone());
        acc.add(&[0.33], &[1.01], 1.0);
        let h = acc.finish().unwrap();
        let sampler = HistogramSampler::new(&h).unwrap();
        let bin = s.bin_index(&[0.33], &[1.01]);
        let dom = CylindricalDomain::interval(-2.0, 2.0).unwrap();
        let mut rng = stream(1, 1);
        for _ in 0..1000 {
            let x = sampler.sample(&dom, &mut rng).unwrap();
            assert_eq!(s.bin_index(&x.q, &x.p), bin);
        }
    }

    #[test]
    fn two_equal_bins_split_evenly() {
        let s = spec();
        let mut acc = HistogramAccumulator::new(s.clone());
        acc.add(&[-1.0], &[0.0], 1.0);
        acc.add(&[1.0], &[0.0], 1.0);
        let sampler = HistogramSampler::new(&acc.finish().unwrap()).unwrap();
        let dom = CylindricalDomain::interval(-2.0, 2.0).unwrap();
        let mut rng = stream(2, 0);
        let n = 10_000;
        let left = (0..n).filter(|_| sampler.sample(&dom, &mut rng).unwrap().q[0] < 0.0).count();
        let frac = left as f64 / n as f64;
        assert!((frac - 0.5).abs() < 4.0 * (0.25f64 / n as f64).sqrt());
    }
}

//! Streaming mean and standard-error accumulators with associative merging.

use serde::{Deserialize, Serialize};

/// Welford accumulator for one scalar observable.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    /// Chan's parallel combination.
    pub fn merge(&mut self, other: &RunningStats) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let (na, nb) = (self.count as f64, other.count as f64);
        let delta = other.mean - self.mean;
        self.mean += delta * nb / n;
        self.m2 += other.m2 + delta * delta * na * nb / n;
        self.count += other.count;
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            f64::NAN
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    /// `sqrt(M2 / (count (count - 1)))`.
    pub fn stderr(&self) -> f64 {
        if self.count < 2 {
            f64::NAN
        } else {
            (self.m2 / (self.count as f64 * (self.count - 1) as f64)).sqrt()
        }
    }
}

/// One accumulator per bin of a fixed-length series.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SeriesStats {
    pub bins: Vec<RunningStats>,
}

impl SeriesStats {
    pub fn new(len: usize) -> Self {
        Self { bins: vec![RunningStats::default(); len] }
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    /// Adds one sample per bin; an empty accumulator adopts the series length.
    pub fn push(&mut self, xs: &[f64]) {
        if self.bins.is_empty() {
            self.bins = vec![RunningStats::default(); xs.len()];
        }
        assert_eq!(xs.len(), self.bins.len(), "series length mismatch");
        for (b, &x) in self.bins.iter_mut().zip(xs) {
            b.push(x);
        }
    }

    pub fn merge(&mut self, other: &SeriesStats) {
        if other.bins.is_empty() {
            return;
        }
        if self.bins.is_empty() {
            *self = other.clone();
            return;
        }
        assert_eq!(self.bins.len(), other.bins.len(), "series length mismatch");
        for (a, b) in self.bins.iter_mut().zip(&other.bins) {
            a.merge(b);
        }
    }

    pub fn means(&self) -> Vec<f64> {
        self.bins.iter().map(|b| b.mean).collect()
    }

    pub fn stderrs(&self) -> Vec<f64> {
        self.bins.iter().map(|b| b.stderr()).collect()
    }

    pub fn count(&self) -> u64 {
        self.bins.first().map_or(0, |b| b.count)
    }
}

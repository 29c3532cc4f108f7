use crate::error::{Error, Result};

pub const DEFAULT_BINS: usize = 16;

/// Equal-width binning of ROI values over their own `[min, max]`.
///
/// Bin of `v` is `floor(nbins * (v - min) / (max - min)) + 1`, clamped to
/// `1..=nbins`, so the maximum lands in the last bin.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizedRoi {
    pub min: f64,
    pub max: f64,
    pub nbins: usize,
    /// One bin index (1-based) per input value, in input order.
    pub bins: Vec<u16>,
    /// All values equal; every voxel sits in bin 1.
    pub degenerate: bool,
}

impl DiscretizedRoi {
    pub fn width(&self) -> f64 {
        (self.max - self.min) / self.nbins as f64
    }

    pub fn edges(&self) -> Vec<f64> {
        (0..=self.nbins).map(|k| self.min + k as f64 * self.width()).collect()
    }

    pub fn bin_of(&self, v: f64) -> u16 {
        if self.degenerate {
            return 1;
        }
        let b = (self.nbins as f64 * (v - self.min) / (self.max - self.min)).floor() as i64 + 1;
        b.clamp(1, self.nbins as i64) as u16
    }

    /// Voxel counts per bin (index 0 is bin 1).
    pub fn histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.nbins];
        for &b in &self.bins {
            h[b as usize - 1] += 1;
        }
        h
    }
}

pub fn discretize(values: &[f64], nbins: usize) -> Result<DiscretizedRoi> {
    if values.is_empty() {
        return Err(Error::empty("ROI (discretization)"));
    }
    if nbins < 2 || nbins > u16::MAX as usize {
        return Err(Error::invalid(format!("bin count {nbins} outside 2..=65535")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite ROI value"));
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut d = DiscretizedRoi { min, max, nbins, bins: Vec::new(), degenerate: !(max > min) };
    d.bins = values.iter().map(|&v| d.bin_of(v)).collect();
    Ok(d)
}

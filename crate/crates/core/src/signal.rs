use crate::error::{Error, Result};
use num_complex::Complex64;

/// A uniformly sampled complex baseband stream.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSignal {
    pub samples: Vec<Complex64>,
    pub sample_interval: f64,
    pub start_time: f64,
}

impl ComplexSignal {
    pub fn new(samples: Vec<Complex64>, sample_interval: f64, start_time: f64) -> Result<Self> {
        if !(sample_interval > 0.0 && sample_interval.is_finite()) {
            return Err(Error::invalid(format!(
                "sample interval must be positive and finite, got {sample_interval}"
            )));
        }
        if samples.is_empty() {
            return Err(Error::invalid("signal must contain at least one sample"));
        }
        if !start_time.is_finite() {
            return Err(Error::invalid("start time must be finite"));
        }
        if let Some(k) = samples.iter().position(|s| !(s.re.is_finite() && s.im.is_finite())) {
            return Err(Error::invalid(format!("non-finite sample at index {k}")));
        }
        Ok(Self {
            samples,
            sample_interval,
            start_time,
        })
    }

    pub fn zeros(len: usize, sample_interval: f64, start_time: f64) -> Result<Self> {
        Self::new(vec![Complex64::new(0.0, 0.0); len], sample_interval, start_time)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_rate(&self) -> f64 {
        1.0 / self.sample_interval
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 * self.sample_interval
    }

    /// Time of sample `k`.
    pub fn time_of(&self, k: usize) -> f64 {
        self.start_time + k as f64 * self.sample_interval
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s.norm_sqr()).sum()
    }

    /// True when `other` uses the same sampling grid spacing, to a relative tolerance.
    pub fn same_interval(&self, interval: f64) -> bool {
        ((self.sample_interval - interval) / interval).abs() <= 1e-9
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_signals() {
        assert!(ComplexSignal::new(vec![], 1.0, 0.0).is_err());
        assert!(ComplexSignal::new(vec![Complex64::new(0.0, 0.0)], 0.0, 0.0).is_err());
        assert!(ComplexSignal::new(vec![Complex64::new(f64::NAN, 0.0)], 1.0, 0.0).is_err());
    }

    #[test]
    fn time_axis() {
        let s = ComplexSignal::zeros(4, 0.5, 1.0).unwrap();
        assert_eq!(s.time_of(3), 2.5);
        assert_eq!(s.duration(), 2.0);
    }
}

use crate::error::{Error, Result};

/// Slack absorbed when turning a decimal threshold into a patient count, so
/// that e.g. `0.7 * 10` still needs 7 patients and not 8.
const EPS: f64 = 1e-9;

/// A support threshold in `(0, 1]`. Comparisons against supports are
/// inclusive and done on integer patient counts.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Threshold(f64);

impl Threshold {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && value > 0.0 && value <= 1.0 + EPS {
            Ok(Threshold(value.min(1.0)))
        } else {
            Err(Error::InvalidThreshold(value))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Smallest patient count `c` with `c / total >= threshold`.
    pub fn min_count(self, total: usize) -> usize {
        let exact = self.0 * total as f64 - EPS;
        let count = libm_ceil(exact);
        count.max(1)
    }

    pub fn admits(self, count: usize, total: usize) -> bool {
        total > 0 && count >= self.min_count(total)
    }
}

/// Rounds away floating noise accumulated by repeated subtraction of a step.
pub(crate) fn snap(value: f64) -> f64 {
    let scaled = value * 1e9;
    let rounded = if scaled >= 0.0 {
        (scaled + 0.5) as i64
    } else {
        (scaled - 0.5) as i64
    };
    rounded as f64 / 1e9
}

fn libm_ceil(x: f64) -> usize {
    if x <= 0.0 {
        return 0;
    }
    let t = x as usize;
    if (t as f64) < x {
        t + 1
    } else {
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn min_count_is_inclusive_on_exact_boundaries() {
        let t = Threshold::new(0.8).unwrap();
        assert_eq!(t.min_count(15), 12);
        assert!(t.admits(12, 15));
        assert!(!t.admits(11, 15));
        assert_eq!(Threshold::new(0.7).unwrap().min_count(10), 7);
        assert_eq!(Threshold::new(1.0).unwrap().min_count(3), 3);
        assert_eq!(Threshold::new(2.0 / 3.0).unwrap().min_count(3), 2);
        assert_eq!(Threshold::new(0.05).unwrap().min_count(15), 1);
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(Threshold::new(0.0).is_err());
        assert!(Threshold::new(1.5).is_err());
        assert!(Threshold::new(f64::NAN).is_err());
    }

    #[test]
    fn snap_removes_step_noise() {
        let mut t = 1.0;
        for _ in 0..4 {
            t -= 0.05;
        }
        assert_eq!(snap(t), 0.8);
        assert_eq!(snap(1.0 - 3.0 * 0.1), 0.7);
    }
}

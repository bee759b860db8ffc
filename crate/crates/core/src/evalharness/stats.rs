use serde::{Deserialize, Serialize};

/// Quantile by linear interpolation between closest ranks (`h = (n-1) p`).
/// `NaN` for an empty sample.
pub fn quantile(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// Five-number summary for box-and-whisker plots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        Self {
            min: quantile(values, 0.0),
            q1: quantile(values, 0.25),
            median: quantile(values, 0.5),
            q3: quantile(values, 0.75),
            max: quantile(values, 1.0),
        }
    }

    pub fn as_array(&self) -> [f64; 5] {
        [self.min, self.q1, self.median, self.q3, self.max]
    }

    pub const LABELS: [&'static str; 5] = ["min", "q1", "median", "q3", "max"];
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn one_to_ten() {
        let v: Vec<f64> = (1..=10).rev().map(f64::from).collect();
        assert_eq!(Summary::of(&v).as_array(), [1.0, 3.25, 5.5, 7.75, 10.0]);
    }

    #[test]
    fn single_value() {
        let s = Summary::of(&[0.3]);
        assert!(s.as_array().iter().all(|&v| v == 0.3));
        assert!(quantile(&[], 0.5).is_nan());
    }

    proptest! {
        #[test]
        fn ordered_and_bounded(v in prop::collection::vec(-1e6f64..1e6, 1..40)) {
            let s = Summary::of(&v).as_array();
            prop_assert!(s.windows(2).all(|w| w[0] <= w[1]));
            let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(s[0], lo);
            prop_assert_eq!(s[4], hi);
        }
    }
}

//! Confusion counts and micro-averaged precision / recall / F1 in percent.

use std::iter::Sum;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Counts {
    pub fn new(tp: u64, fp: u64, fn_: u64) -> Self {
        Self { tp, fp, fn_ }
    }

    /// Counts for a one-to-one matching of `matched` pairs.
    pub fn from_matching(n_pred: usize, n_gold: usize, matched: usize) -> Self {
        Self::new(matched as u64, (n_pred - matched) as u64, (n_gold - matched) as u64)
    }

    pub fn prf(&self) -> Prf {
        Prf::from_counts(*self)
    }
}

impl Add for Counts {
    type Output = Counts;

    fn add(self, o: Counts) -> Counts {
        Counts::new(self.tp + o.tp, self.fp + o.fp, self.fn_ + o.fn_)
    }
}

impl AddAssign for Counts {
    fn add_assign(&mut self, o: Counts) {
        *self = *self + o;
    }
}

impl Sum for Counts {
    fn sum<I: Iterator<Item = Counts>>(iter: I) -> Counts {
        iter.fold(Counts::default(), Add::add)
    }
}

/// Percent-scale scores. `degenerate` marks a zero denominator somewhere.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub degenerate: bool,
}

impl Prf {
    pub fn from_counts(c: Counts) -> Self {
        let tp = c.tp as f64;
        let p_den = (c.tp + c.fp) as f64;
        let r_den = (c.tp + c.fn_) as f64;
        let precision = if p_den > 0.0 { 100.0 * tp / p_den } else { 0.0 };
        let recall = if r_den > 0.0 { 100.0 * tp / r_den } else { 0.0 };
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        let degenerate = p_den == 0.0 || r_den == 0.0;
        if degenerate {
            log::warn!("degenerate confusion counts {c:?}; zero denominator scored as 0");
        }
        Self { precision, recall, f1, degenerate }
    }

    /// Micro average: pool the counts, then score.
    pub fn micro<'a>(counts: impl IntoIterator<Item = &'a Counts>) -> Self {
        Self::from_counts(counts.into_iter().copied().sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_tp_one_fp_three_fn() {
        let s = Counts::new(1, 1, 3).prf();
        assert!((s.precision - 50.0).abs() < 1e-9);
        assert!((s.recall - 25.0).abs() < 1e-9);
        assert_eq!(format!("{:.2}", s.f1), "33.33");
        assert!(!s.degenerate);
    }

    #[test]
    fn perfect_and_degenerate() {
        let s = Prf::micro(&[Counts::new(2, 0, 0), Counts::new(5, 0, 0)]);
        assert_eq!((s.precision, s.recall, s.f1), (100.0, 100.0, 100.0));
        let d = Prf::micro(&[Counts::default(), Counts::default()]);
        assert!(d.degenerate);
        assert_eq!(d.f1, 0.0);
    }

    #[test]
    fn micro_is_order_free() {
        let a = [Counts::new(1, 2, 0), Counts::new(4, 0, 3), Counts::new(0, 1, 1)];
        let mut b = a;
        b.reverse();
        assert_eq!(Prf::micro(&a), Prf::micro(&b));
    }
}

use serde::{Deserialize, Serialize};

use super::cdf::CdfModel;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Right-continuous empirical distribution function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ecdf<T> {
    sorted: Vec<T>,
}

impl<T: Scalar> Ecdf<T> {
    pub fn new(mut samples: Vec<T>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("ecdf needs at least one sample"));
        }
        if !samples.iter().all(Scalar::is_finite_value) {
            return Err(Error::invalid("ecdf samples must be finite"));
        }
        samples.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
        Ok(Ecdf { sorted: samples })
    }

    pub fn from_sorted(sorted: Vec<T>) -> Result<Self> {
        if sorted.is_empty() {
            return Err(Error::invalid("ecdf needs at least one sample"));
        }
        if sorted.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::invalid("samples are not sorted"));
        }
        Ok(Ecdf { sorted })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn sorted(&self) -> &[T] {
        &self.sorted
    }

    /// Number of samples `<= t`.
    pub fn count_le(&self, t: &T) -> usize {
        self.sorted.partition_point(|x| x <= t)
    }

    pub fn eval(&self, t: &T) -> f64 {
        self.count_le(t) as f64 / self.len() as f64
    }
}

/// `sup_t |F_n(t) - F(t)|`, exact for continuous `F`.
pub fn ks_statistic(e: &Ecdf<f64>, f: &CdfModel) -> f64 {
    ks_statistic_with(e, |x| f.cdf(x))
}

pub fn ks_statistic_with(e: &Ecdf<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    ks_sorted(e.sorted(), cdf)
}

pub(crate) fn ks_sorted(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    sorted.iter().enumerate().fold(0.0f64, |acc, (i, &x)| {
        let fx = cdf(x);
        let above = (i + 1) as f64 / n - fx;
        let below = fx - i as f64 / n;
        acc.max(above).max(below)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counting() {
        let e = Ecdf::new(vec![3.0, 1.0, 2.0]).unwrap();
        assert_eq!(e.eval(&2.0), 2.0 / 3.0);
        assert_eq!(e.eval(&0.5), 0.0);
        assert_eq!(e.eval(&3.0), 1.0);
    }

    #[test]
    fn single_atom_and_ties() {
        let e = Ecdf::new(vec![5.0]).unwrap();
        assert_eq!(e.eval(&4.9), 0.0);
        assert_eq!(e.eval(&5.0), 1.0);
        let t = Ecdf::new(vec![1.0, 2.0, 2.0, 4.0]).unwrap();
        assert_eq!(t.eval(&2.0), 0.75);
        assert_eq!(t.eval(&1.999), 0.25);
    }

    #[test]
    fn empty_is_rejected() {
        assert!(Ecdf::<f64>::new(vec![]).is_err());
        assert!(Ecdf::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn ks_at_median() {
        let e = Ecdf::new(vec![0.5]).unwrap();
        assert_eq!(ks_statistic(&e, &CdfModel::standard_uniform()), 0.5);
    }

    #[test]
    fn ks_on_midpoint_quantiles() {
        // Brute-force sup over a fine grid serves as the oracle.
        for n in [1usize, 3, 10, 37] {
            let f = CdfModel::beta(2.0, 5.0).unwrap();
            let xs: Vec<f64> = (1..=n).map(|i| f.quantile((i as f64 - 0.5) / n as f64)).collect();
            let e = Ecdf::new(xs).unwrap();
            let d = ks_statistic(&e, &f);
            assert!((d - 0.5 / n as f64).abs() < 1e-9, "n={n}: {d}");
            let brute = (0..=200_000)
                .map(|k| {
                    let t = k as f64 / 200_000.0;
                    (e.eval(&t) - f.cdf(t)).abs()
                })
                .fold(0.0f64, f64::max);
            assert!(brute <= d + 1e-12 && d - brute < 1e-3);
        }
        let n = 10;
        let u = CdfModel::standard_uniform();
        let e = Ecdf::new((1..=n).map(|i| (i as f64 - 0.5) / n as f64).collect()).unwrap();
        assert!((ks_statistic(&e, &u) - 0.05).abs() < 1e-12);
    }
}

//! Exact integer combinations of `p^E`-th roots of unity.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// `sum_m c_m zeta^m` with `zeta = exp(2 pi i / p^E)`, stored sparsely by
/// exponent `m mod p^E`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CyclotomicSum {
    p: u64,
    e: u32,
    modulus: u128,
    coeffs: BTreeMap<u128, i128>,
}

impl CyclotomicSum {
    pub fn new(p: u64, e: u32) -> Result<Self> {
        let modulus = (p as u128)
            .checked_pow(e)
            .filter(|m| *m <= 1u128 << 100)
            .ok_or_else(|| Error::TruncationTooDeep(format!("{p}^{e} exceeds the cyclotomic modulus guard")))?;
        Ok(CyclotomicSum { p, e, modulus, coeffs: BTreeMap::new() })
    }

    pub fn modulus(&self) -> u128 {
        self.modulus
    }

    pub fn add(&mut self, m: u128, c: i128) -> Result<()> {
        let slot = self.coeffs.entry(m % self.modulus).or_insert(0);
        *slot = slot.checked_add(c).ok_or_else(|| Error::Numerical("cyclotomic coefficient overflow".into()))?;
        Ok(())
    }

    pub fn merge(&mut self, other: &CyclotomicSum) -> Result<()> {
        debug_assert_eq!((self.p, self.e), (other.p, other.e));
        for (&m, &c) in &other.coeffs {
            self.add(m, c)?;
        }
        Ok(())
    }

    /// Sum of all coefficients: the value at the trivial character.
    pub fn total(&self) -> i128 {
        self.coeffs.values().sum()
    }

    /// The minimal relations among `p^E`-th roots of unity are the sums over
    /// cosets of the order-`p` subgroup, so the sum vanishes iff every fibre
    /// `{t + j p^{E-1} : 0 <= j < p}` carries a constant coefficient.
    pub fn is_zero(&self) -> bool {
        if self.e == 0 {
            return self.total() == 0;
        }
        let step = self.modulus / self.p as u128;
        let mut fibres: BTreeMap<u128, Vec<i128>> = BTreeMap::new();
        for (&m, &c) in self.coeffs.iter().filter(|(_, &c)| c != 0) {
            fibres.entry(m % step).or_default().push(c);
        }
        fibres.values().all(|cs| cs.len() as u64 == self.p && cs.iter().all(|&c| c == cs[0]))
    }

    /// The sum as a rational integer, or `None` if it is irrational.
    pub fn as_integer(&self) -> Option<i128> {
        if self.e == 0 {
            return Some(self.total());
        }
        let step = self.modulus / self.p as u128;
        let c0 = self.coeffs.get(&0).copied().unwrap_or(0);
        let c1 = self.coeffs.get(&step).copied().unwrap_or(0);
        let n = c0 - c1;
        let mut shifted = self.clone();
        shifted.add(0, -n).ok()?;
        shifted.is_zero().then_some(n)
    }

    pub fn to_complex(&self) -> Complex64 {
        let m = self.modulus as f64;
        self.coeffs
            .iter()
            .map(|(&k, &c)| Complex64::from_polar(c as f64, 2.0 * std::f64::consts::PI * (k as f64) / m))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_residue_system_vanishes() {
        for (p, e) in [(2u64, 1u32), (3, 2), (5, 2), (2, 4)] {
            let mut s = CyclotomicSum::new(p, e).unwrap();
            for m in 0..s.modulus() {
                s.add(m, 1).unwrap();
            }
            assert!(s.is_zero());
            assert_eq!(s.as_integer(), Some(0));
        }
    }

    #[test]
    fn units_sum_to_ramanujan_values() {
        // sum over (Z/p^E)^* of zeta^m is -1 for E = 1 and 0 for E >= 2
        for (p, e, expected) in [(3u64, 1u32, -1i128), (7, 1, -1), (3, 2, 0), (2, 3, 0)] {
            let mut s = CyclotomicSum::new(p, e).unwrap();
            for m in (0..s.modulus()).filter(|m| m % p as u128 != 0) {
                s.add(m, 1).unwrap();
            }
            assert_eq!(s.as_integer(), Some(expected));
            assert!((s.to_complex().re - expected as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn single_root_is_irrational() {
        let mut s = CyclotomicSum::new(5, 1).unwrap();
        s.add(1, 1).unwrap();
        assert!(!s.is_zero());
        assert_eq!(s.as_integer(), None);
        let mut s = CyclotomicSum::new(2, 2).unwrap();
        s.add(1, 1).unwrap();
        assert_eq!(s.as_integer(), None);
    }

    #[test]
    fn modulus_guard() {
        assert!(matches!(CyclotomicSum::new(2, 101), Err(Error::TruncationTooDeep(_))));
    }
}

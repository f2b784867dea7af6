//! Exact rational arithmetic and the truncated coefficient ring Q[h]/(h^{N+1}).
//!
//! `Rat` is an arbitrary-precision rational kept in lowest terms with a
//! positive denominator (the `num` crate maintains both invariants).
//! `HSeries` is a dense vector of `Rat` of length `order + 1`; binary
//! operations truncate to the minimum order of the operands and record it.

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, Zero};
use thiserror::Error;

pub type Rat = BigRational;

/// `n` as an exact rational.
pub fn rat_int(n: i64) -> Rat {
    BigRational::from_integer(BigInt::from(n))
}

/// `n/d` as an exact rational.
pub fn rat(n: i64, d: i64) -> Rat {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

#[derive(Debug, Error, PartialEq, Eq, Clone)]
pub enum NumError {
    #[error("exponent has non-zero constant term")]
    NonNilpotentExponent,
    #[error("root base must have constant term 1")]
    RootBaseNotUnit,
    #[error("series with zero constant term is not invertible")]
    NotInvertible,
    #[error("leading rational {0} has no exact {1}-th root")]
    NoExactRoot(String, u32),
    #[error("series is not divisible by h^{0}")]
    NotDivisible(usize),
}

/// Truncated power series in h with exact rational coefficients.
///
/// Index k holds the coefficient of h^k; the vector always has length
/// `order + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HSeries {
    coeffs: Vec<Rat>,
}

impl HSeries {
    pub fn zero(order: usize) -> Self {
        HSeries {
            coeffs: vec![Rat::zero(); order + 1],
        }
    }

    pub fn one(order: usize) -> Self {
        Self::constant(Rat::one(), order)
    }

    pub fn constant(c: Rat, order: usize) -> Self {
        let mut s = Self::zero(order);
        s.coeffs[0] = c;
        s
    }

    /// c * h^k, zero if k exceeds the order.
    pub fn monomial(c: Rat, k: usize, order: usize) -> Self {
        let mut s = Self::zero(order);
        if k <= order {
            s.coeffs[k] = c;
        }
        s
    }

    pub fn from_coeffs(coeffs: Vec<Rat>) -> Self {
        assert!(!coeffs.is_empty());
        HSeries { coeffs }
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeff(&self, k: usize) -> Rat {
        self.coeffs.get(k).cloned().unwrap_or_else(Rat::zero)
    }

    pub fn coeffs(&self) -> &[Rat] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_zero())
    }

    pub fn is_one(&self) -> bool {
        self.coeffs[0].is_one() && self.coeffs[1..].iter().all(|c| c.is_zero())
    }

    /// Lowest power of h with a non-zero coefficient, if any.
    pub fn h_valuation(&self) -> Option<usize> {
        self.coeffs.iter().position(|c| !c.is_zero())
    }

    /// Re-truncate to `order` (shrinking only; extending pads with zeros).
    pub fn truncate(&self, order: usize) -> Self {
        let mut coeffs = self.coeffs.clone();
        coeffs.resize(order + 1, Rat::zero());
        HSeries { coeffs }
    }

    pub fn add(&self, rhs: &Self) -> Self {
        let order = self.order().min(rhs.order());
        let mut coeffs = Vec::with_capacity(order + 1);
        for k in 0..=order {
            coeffs.push(self.coeffs[k].clone() + &rhs.coeffs[k]);
        }
        HSeries { coeffs }
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        self.add(&rhs.neg())
    }

    pub fn neg(&self) -> Self {
        HSeries {
            coeffs: self.coeffs.iter().map(|c| -c.clone()).collect(),
        }
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        let order = self.order().min(rhs.order());
        let mut coeffs = vec![Rat::zero(); order + 1];
        for (i, a) in self.coeffs.iter().enumerate().take(order + 1) {
            if a.is_zero() {
                continue;
            }
            for (j, b) in rhs.coeffs.iter().enumerate().take(order + 1 - i) {
                if b.is_zero() {
                    continue;
                }
                coeffs[i + j] += a * b;
            }
        }
        HSeries { coeffs }
    }

    pub fn scale(&self, c: &Rat) -> Self {
        HSeries {
            coeffs: self.coeffs.iter().map(|a| a * c).collect(),
        }
    }

    /// Multiply by h^k, truncating at the order.
    pub fn shift_up(&self, k: usize) -> Self {
        let order = self.order();
        let mut coeffs = vec![Rat::zero(); order + 1];
        for i in 0..=order.saturating_sub(k) {
            coeffs[i + k] = self.coeffs[i].clone();
        }
        HSeries { coeffs }
    }

    /// Exact division by h^k; errors unless the first k coefficients vanish.
    /// The order drops by k so the result never claims unknown precision.
    pub fn div_h(&self, k: usize) -> Result<Self, NumError> {
        if self.coeffs.iter().take(k).any(|c| !c.is_zero()) {
            return Err(NumError::NotDivisible(k));
        }
        if k > self.order() {
            return Ok(Self::zero(0));
        }
        Ok(HSeries {
            coeffs: self.coeffs[k..].to_vec(),
        })
    }

    /// exp of a nilpotent series (constant term must vanish).
    pub fn exp(&self) -> Result<Self, NumError> {
        if !self.coeffs[0].is_zero() {
            return Err(NumError::NonNilpotentExponent);
        }
        let order = self.order();
        let mut result = Self::one(order);
        let mut power = Self::one(order);
        let mut fact = Rat::one();
        for k in 1..=order {
            power = power.mul(self);
            fact *= rat_int(k as i64);
            result = result.add(&power.scale(&(Rat::one() / &fact)));
            if power.is_zero() {
                break;
            }
        }
        Ok(result)
    }

    /// log of a series with constant term 1.
    pub fn log(&self) -> Result<Self, NumError> {
        if !self.coeffs[0].is_one() {
            return Err(NumError::RootBaseNotUnit);
        }
        let order = self.order();
        let u = self.sub(&Self::one(order));
        let mut result = Self::zero(order);
        let mut power = Self::one(order);
        for k in 1..=order {
            power = power.mul(&u);
            if power.is_zero() {
                break;
            }
            let sign = if k % 2 == 1 { 1 } else { -1 };
            result = result.add(&power.scale(&rat(sign, k as i64)));
        }
        Ok(result)
    }

    /// Multiplicative inverse; the constant term must be non-zero.
    pub fn inv(&self) -> Result<Self, NumError> {
        if self.coeffs[0].is_zero() {
            return Err(NumError::NotInvertible);
        }
        let order = self.order();
        let inv0 = Rat::one() / &self.coeffs[0];
        let mut coeffs = vec![Rat::zero(); order + 1];
        coeffs[0] = inv0.clone();
        for n in 1..=order {
            let mut acc = Rat::zero();
            for k in 1..=n {
                if self.coeffs[k].is_zero() {
                    continue;
                }
                acc += &self.coeffs[k] * &coeffs[n - k];
            }
            coeffs[n] = -acc * &inv0;
        }
        Ok(HSeries { coeffs })
    }

    /// Unique n-th root with constant term 1, via exp(log(a)/n).
    pub fn nth_root(&self, n: u32) -> Result<Self, NumError> {
        if !self.coeffs[0].is_one() {
            return Err(NumError::RootBaseNotUnit);
        }
        assert!(n > 0, "root index must be positive");
        let log = self.log()?;
        log.scale(&rat(1, n as i64)).exp()
    }

    /// Square root allowing an arbitrary rational leading coefficient, as long
    /// as that coefficient is an exact square.
    pub fn sqrt_rational_lead(&self) -> Result<Self, NumError> {
        let c0 = self.coeffs[0].clone();
        if c0.is_zero() || c0.is_negative() {
            return Err(NumError::NoExactRoot(c0.to_string(), 2));
        }
        let num_sqrt = c0.numer().sqrt();
        let den_sqrt = c0.denom().sqrt();
        if &num_sqrt * &num_sqrt != *c0.numer() || &den_sqrt * &den_sqrt != *c0.denom() {
            return Err(NumError::NoExactRoot(c0.to_string(), 2));
        }
        let lead = BigRational::new(num_sqrt, den_sqrt);
        let unit = self.scale(&(Rat::one() / &c0));
        Ok(unit.nth_root(2)?.scale(&lead))
    }

    /// Ring power with non-negative integer exponent.
    pub fn pow(&self, e: u32) -> Self {
        let mut result = Self::one(self.order());
        for _ in 0..e {
            result = result.mul(self);
        }
        result
    }
}

impl std::fmt::Display for HSeries {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut first = true;
        for (k, c) in self.coeffs.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            if k == 0 {
                write!(f, "{}", c)?;
            } else {
                write!(f, "({})*h^{}", c, k)?;
            }
        }
        if first {
            write!(f, "0")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn h(order: usize) -> HSeries {
        HSeries::monomial(Rat::one(), 1, order)
    }

    #[test]
    fn difference_of_squares() {
        let one = HSeries::one(2);
        let a = one.add(&h(2));
        let b = one.sub(&h(2));
        let mut expect = HSeries::one(2);
        expect.coeffs[2] = rat_int(-1);
        assert_eq!(a.mul(&b), expect);
    }

    #[test]
    fn mul_identity_and_add_zero() {
        let a = HSeries::from_coeffs(vec![rat_int(2), rat(1, 3), rat_int(0), rat_int(5)]);
        assert_eq!(a.mul(&HSeries::one(3)), a);
        assert_eq!(a.add(&HSeries::zero(3)), a);
    }

    #[test]
    fn mixed_order_truncates_to_min() {
        let a = HSeries::one(4);
        let b = HSeries::one(2);
        assert_eq!(a.add(&b).order(), 2);
        assert_eq!(a.mul(&b).order(), 2);
    }

    #[test]
    fn exp_h_at_order_3() {
        let e = h(3).exp().unwrap();
        assert_eq!(
            e.coeffs,
            vec![rat_int(1), rat_int(1), rat(1, 2), rat(1, 6)]
        );
    }

    #[test]
    fn exp_zero_is_one() {
        assert_eq!(HSeries::zero(4).exp().unwrap(), HSeries::one(4));
    }

    // Oracle: multiply the two truncated expansions sum h^k/k! and
    // sum (-h)^k/k! directly.
    #[test]
    fn exp_times_exp_neg_is_one() {
        let order = 6;
        let mut pos = HSeries::zero(order);
        let mut neg = HSeries::zero(order);
        let mut fact = Rat::one();
        for k in 0..=order {
            if k > 0 {
                fact *= rat_int(k as i64);
            }
            pos.coeffs[k] = Rat::one() / &fact;
            neg.coeffs[k] = rat_int(if k % 2 == 0 { 1 } else { -1 }) / &fact;
        }
        assert_eq!(pos.mul(&neg), HSeries::one(order));
        let e = h(order).exp().unwrap();
        let en = h(order).neg().exp().unwrap();
        assert_eq!(e, pos);
        assert_eq!(en, neg);
        assert_eq!(e.mul(&en), HSeries::one(order));
    }

    #[test]
    fn exp_rejects_non_nilpotent() {
        assert_eq!(
            HSeries::one(2).exp(),
            Err(NumError::NonNilpotentExponent)
        );
    }

    // Oracle: binomial series (1+x)^{1/2} = sum binom(1/2, k) x^k with the
    // coefficients computed by the falling-factorial product formula.
    #[test]
    fn sqrt_one_plus_h_matches_binomial_series() {
        let order = 5;
        let a = HSeries::one(order).add(&h(order));
        let r = a.nth_root(2).unwrap();
        let mut expect = HSeries::zero(order);
        let half = rat(1, 2);
        let mut c = Rat::one();
        for k in 0..=order {
            if k > 0 {
                c = c * (&half - rat_int(k as i64 - 1)) / rat_int(k as i64);
            }
            expect.coeffs[k] = c.clone();
        }
        assert_eq!(r, expect);
        assert_eq!(r.coeff(1), rat(1, 2));
        assert_eq!(r.coeff(2), rat(-1, 8));
    }

    #[test]
    fn nth_root_of_one() {
        for n in 1..5 {
            assert_eq!(HSeries::one(4).nth_root(n).unwrap(), HSeries::one(4));
        }
    }

    #[test]
    fn sqrt_round_trip() {
        let a = HSeries::from_coeffs(vec![rat_int(1), rat_int(1), rat_int(1), rat_int(0), rat_int(0)]);
        let r = a.nth_root(2).unwrap();
        assert_eq!(r.mul(&r), a);
    }

    #[test]
    fn geometric_inverse() {
        let a = HSeries::one(2).sub(&h(2));
        let inv = a.inv().unwrap();
        assert_eq!(inv.coeffs, vec![rat_int(1), rat_int(1), rat_int(1)]);
    }

    #[test]
    fn scalar_inverse() {
        let two = HSeries::constant(rat_int(2), 3);
        assert_eq!(two.inv().unwrap(), HSeries::constant(rat(1, 2), 3));
    }

    #[test]
    fn inverse_is_involutive() {
        let a = HSeries::one(2).add(&h(2));
        assert_eq!(a.inv().unwrap().inv().unwrap(), a);
    }

    #[test]
    fn inv_rejects_zero_constant() {
        assert_eq!(h(2).inv(), Err(NumError::NotInvertible));
    }

    #[test]
    fn sqrt_rational_lead_factors_out_squares() {
        // (1/4)(1 + h)  ->  (1/2) sqrt(1+h)
        let a = HSeries::one(4).add(&h(4)).scale(&rat(1, 4));
        let r = a.sqrt_rational_lead().unwrap();
        assert_eq!(r.mul(&r), a);
        assert_eq!(r.coeff(0), rat(1, 2));
        let bad = HSeries::constant(rat_int(2), 3);
        assert!(bad.sqrt_rational_lead().is_err());
    }

    fn arb_hseries(order: usize) -> impl Strategy<Value = HSeries> {
        proptest::collection::vec((-20i64..20, 1i64..8), order + 1).prop_map(move |v| {
            HSeries::from_coeffs(v.into_iter().map(|(n, d)| rat(n, d)).collect())
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn ring_axioms(a in arb_hseries(4), b in arb_hseries(4), c in arb_hseries(4)) {
            prop_assert_eq!(a.mul(&b).mul(&c), a.mul(&b.mul(&c)));
            prop_assert_eq!(a.mul(&b.add(&c)), a.mul(&b).add(&a.mul(&c)));
            prop_assert_eq!(a.mul(&b), b.mul(&a));
            prop_assert_eq!(a.add(&b).add(&c), a.add(&b.add(&c)));
        }

        #[test]
        fn exp_is_additive_on_nilpotents(a in arb_hseries(4), b in arb_hseries(4)) {
            let mut a = a; a.coeffs[0] = Rat::zero();
            let mut b = b; b.coeffs[0] = Rat::zero();
            let lhs = a.exp().unwrap().mul(&b.exp().unwrap());
            let rhs = a.add(&b).exp().unwrap();
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn inv_and_root_round_trip(a in arb_hseries(4)) {
            let mut a = a;
            a.coeffs[0] = Rat::one();
            let inv = a.inv().unwrap();
            prop_assert_eq!(a.mul(&inv), HSeries::one(4));
            let r3 = a.nth_root(3).unwrap();
            prop_assert_eq!(r3.pow(3), a);
        }
    }
}

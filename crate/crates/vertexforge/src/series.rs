//! Windowed Laurent series in one and two formal variables over `HSeries`.
//!
//! A `ZSeries` stores exact coefficients for every exponent up to a soundness
//! cap `hi`; coefficients above the cap are unknown (truncated away), while
//! everything below the lowest stored exponent is exactly zero. Binary
//! operations compute the cap of the result from the caps and support floors
//! of the operands, so a value can never silently claim more precision than
//! it has. Bivariate series track one cap per variable plus a total-degree
//! cap, which is what the iota-embeddings of f(z1 - z2) actually provide.

use crate::exactnum::{rat_int, HSeries, NumError, Rat};
use num::{One, Zero};
use std::collections::BTreeMap;
use thiserror::Error;

/// Soundness cap meaning "exact at every exponent".
pub const HI_INF: i64 = i64::MAX / 4;
/// Support floor of the zero series.
pub const LO_INF: i64 = i64::MAX / 4;

fn cap_add(a: i64, b: i64) -> i64 {
    if a >= HI_INF || b >= HI_INF {
        HI_INF
    } else {
        (a + b).min(HI_INF)
    }
}

#[derive(Debug, Error, PartialEq, Eq, Clone)]
pub enum SeriesError {
    #[error("sound result window is empty (cap {hi} below support floor {lo})")]
    EmptyWindow { hi: i64, lo: i64 },
    #[error("shift amount has non-zero constant term")]
    NonNilpotentShift,
    #[error("exponent -1 is outside the sound window (cap {0})")]
    WindowMiss(i64),
    #[error("series has no invertible leading term")]
    NonUnitBase,
    #[error("log z coefficient is not a constant integer")]
    NonIntegerLogPower,
    #[error("exponential of a series with non-zero h^0 z^0 term diverges")]
    ExponentialDiverges,
    #[error("substitution requires a regular series (support floor {0} < 0)")]
    SingularSubstitution(i64),
    #[error(transparent)]
    Num(#[from] NumError),
}

/// Truncated Laurent series in z with `HSeries` coefficients.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ZSeries {
    coeffs: BTreeMap<i64, HSeries>,
    hi: i64,
    order: usize,
}

impl ZSeries {
    pub fn zero(order: usize) -> Self {
        ZSeries {
            coeffs: BTreeMap::new(),
            hi: HI_INF,
            order,
        }
    }

    pub fn one(order: usize) -> Self {
        Self::monomial(0, HSeries::one(order))
    }

    /// c * z^n, exact everywhere.
    pub fn monomial(n: i64, c: HSeries) -> Self {
        let order = c.order();
        let mut s = Self::zero(order);
        if !c.is_zero() {
            s.coeffs.insert(n, c);
        }
        s
    }

    pub fn constant(c: HSeries) -> Self {
        Self::monomial(0, c)
    }

    pub fn from_coeffs<I: IntoIterator<Item = (i64, HSeries)>>(
        iter: I,
        hi: i64,
        order: usize,
    ) -> Self {
        let mut s = ZSeries {
            coeffs: BTreeMap::new(),
            hi,
            order,
        };
        for (n, c) in iter {
            if n <= hi && !c.is_zero() {
                s.coeffs.insert(n, c.truncate(order));
            }
        }
        s
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn hi(&self) -> i64 {
        self.hi
    }

    /// Lowest exponent with a non-zero coefficient (`LO_INF` when zero).
    pub fn support_lo(&self) -> i64 {
        self.coeffs.keys().next().copied().unwrap_or(LO_INF)
    }

    pub fn support_hi(&self) -> Option<i64> {
        self.coeffs.keys().next_back().copied()
    }

    pub fn coeff(&self, n: i64) -> HSeries {
        self.coeffs
            .get(&n)
            .cloned()
            .unwrap_or_else(|| HSeries::zero(self.order))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&i64, &HSeries)> {
        self.coeffs.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// True when nothing at all is known about the value.
    pub fn is_vacuous(&self) -> bool {
        self.hi < self.support_lo() && self.hi < HI_INF && !self.coeffs.is_empty()
    }

    fn drop_unsound(mut self) -> Self {
        let hi = self.hi;
        self.coeffs.retain(|n, _| *n <= hi);
        self
    }

    pub fn with_cap(mut self, hi: i64) -> Self {
        self.hi = self.hi.min(hi);
        self.drop_unsound()
    }

    pub fn truncate_order(&self, order: usize) -> Self {
        let order = order.min(self.order);
        ZSeries::from_coeffs(
            self.coeffs.iter().map(|(n, c)| (*n, c.truncate(order))),
            self.hi,
            order,
        )
    }

    pub fn add(&self, rhs: &Self) -> Self {
        let order = self.order.min(rhs.order);
        let hi = self.hi.min(rhs.hi);
        let mut coeffs = BTreeMap::new();
        for (n, c) in self.coeffs.iter().chain(rhs.coeffs.iter()) {
            if *n > hi {
                continue;
            }
            let e = coeffs
                .entry(*n)
                .or_insert_with(|| HSeries::zero(order));
            *e = e.add(c);
        }
        coeffs.retain(|_, c: &mut HSeries| !c.is_zero());
        ZSeries { coeffs, hi, order }
    }

    pub fn neg(&self) -> Self {
        ZSeries {
            coeffs: self.coeffs.iter().map(|(n, c)| (*n, c.neg())).collect(),
            hi: self.hi,
            order: self.order,
        }
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        self.add(&rhs.neg())
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        let order = self.order.min(rhs.order);
        let hi = cap_add(self.hi, rhs.support_lo()).min(cap_add(rhs.hi, self.support_lo()));
        let mut coeffs: BTreeMap<i64, HSeries> = BTreeMap::new();
        for (n1, c1) in &self.coeffs {
            for (n2, c2) in &rhs.coeffs {
                let n = n1 + n2;
                if n > hi {
                    continue;
                }
                let p = c1.mul(c2);
                if p.is_zero() {
                    continue;
                }
                let e = coeffs.entry(n).or_insert_with(|| HSeries::zero(order));
                *e = e.add(&p);
            }
        }
        coeffs.retain(|_, c| !c.is_zero());
        ZSeries { coeffs, hi, order }
    }

    /// Multiplication that reports an empty sound window as an error.
    pub fn mul_checked(&self, rhs: &Self) -> Result<Self, SeriesError> {
        let r = self.mul(rhs);
        if r.is_vacuous() {
            return Err(SeriesError::EmptyWindow {
                hi: r.hi,
                lo: r.support_lo(),
            });
        }
        Ok(r)
    }

    pub fn scale(&self, c: &HSeries) -> Self {
        let order = self.order.min(c.order());
        let mut coeffs: BTreeMap<i64, HSeries> = BTreeMap::new();
        for (n, a) in &self.coeffs {
            let p = a.mul(c);
            if !p.is_zero() {
                coeffs.insert(*n, p);
            }
        }
        ZSeries {
            coeffs,
            hi: self.hi,
            order,
        }
    }

    pub fn scale_rat(&self, c: &Rat) -> Self {
        if c.is_zero() {
            return ZSeries::zero(self.order);
        }
        ZSeries {
            coeffs: self.coeffs.iter().map(|(n, a)| (*n, a.scale(c))).collect(),
            hi: self.hi,
            order: self.order,
        }
    }

    /// Multiply by z^k.
    pub fn shift_exp(&self, k: i64) -> Self {
        ZSeries {
            coeffs: self.coeffs.iter().map(|(n, c)| (n + k, c.clone())).collect(),
            hi: cap_add(self.hi, k),
            order: self.order,
        }
    }

    /// Term-wise d/dz.
    pub fn d_dz(&self) -> Self {
        let mut coeffs = BTreeMap::new();
        for (n, c) in &self.coeffs {
            if *n == 0 {
                continue;
            }
            coeffs.insert(n - 1, c.scale(&rat_int(*n)));
        }
        ZSeries {
            coeffs,
            hi: if self.hi >= HI_INF { HI_INF } else { self.hi - 1 },
            order: self.order,
        }
    }

    pub fn d_dz_iter(&self, k: usize) -> Self {
        let mut s = self.clone();
        for _ in 0..k {
            s = s.d_dz();
        }
        s
    }

    /// sum_k c^k/k! (d/dz)^k  for nilpotent c; exact substitution z -> z + c.
    pub fn taylor_shift(&self, c: &HSeries) -> Result<Self, SeriesError> {
        if !c.coeff(0).is_zero() {
            return Err(SeriesError::NonNilpotentShift);
        }
        let order = self.order.min(c.order());
        let kmax = match c.h_valuation() {
            None => return Ok(self.truncate_order(order)),
            Some(v) => order / v.max(1),
        };
        let mut result = self.truncate_order(order);
        let mut deriv = self.truncate_order(order);
        let mut cpow = HSeries::one(order);
        let mut fact = Rat::one();
        for k in 1..=kmax {
            deriv = deriv.d_dz();
            cpow = cpow.mul(c);
            fact *= rat_int(k as i64);
            if cpow.is_zero() {
                break;
            }
            result = result.add(&deriv.scale(&cpow.scale(&(Rat::one() / &fact))));
        }
        Ok(result)
    }

    /// Coefficient of z^{-1}.
    pub fn residue(&self) -> Result<HSeries, SeriesError> {
        if self.hi < -1 {
            return Err(SeriesError::WindowMiss(self.hi));
        }
        Ok(self.coeff(-1))
    }

    /// Split into (exponents < 0, exponents >= 0). The singular part is exact
    /// everywhere once the cap reaches -1.
    pub fn split_sing(&self) -> (Self, Self) {
        let mut sing = ZSeries {
            coeffs: BTreeMap::new(),
            hi: if self.hi >= -1 { HI_INF } else { self.hi },
            order: self.order,
        };
        let mut reg = ZSeries {
            coeffs: BTreeMap::new(),
            hi: self.hi,
            order: self.order,
        };
        for (n, c) in &self.coeffs {
            if *n < 0 {
                sing.coeffs.insert(*n, c.clone());
            } else {
                reg.coeffs.insert(*n, c.clone());
            }
        }
        (sing, reg)
    }

    /// Substitute z -> -z.
    pub fn negate_var(&self) -> Self {
        ZSeries {
            coeffs: self
                .coeffs
                .iter()
                .map(|(n, c)| (*n, if n.rem_euclid(2) == 0 { c.clone() } else { c.neg() }))
                .collect(),
            hi: self.hi,
            order: self.order,
        }
    }

    /// Layer of a fixed power of h, as a series with rational coefficients
    /// placed in h^0.
    pub fn h_layer(&self, k: usize) -> Self {
        let mut coeffs = BTreeMap::new();
        for (n, c) in &self.coeffs {
            let v = c.coeff(k);
            if !v.is_zero() {
                coeffs.insert(*n, HSeries::constant(v, self.order));
            }
        }
        ZSeries {
            coeffs,
            hi: self.hi,
            order: self.order,
        }
    }

    /// Inverse of a series of the form z^c * (unit + h-corrections).
    pub fn inv(&self) -> Result<Self, SeriesError> {
        let layer0 = self.h_layer(0);
        let c = if layer0.is_zero() {
            return Err(SeriesError::NonUnitBase);
        } else {
            layer0.support_lo()
        };
        let u = self.shift_exp(-c);
        // Invert the h^0 layer as an ordinary power series.
        let u0 = u.h_layer(0);
        let lead = u0.coeff(0).coeff(0);
        if lead.is_zero() {
            return Err(SeriesError::NonUnitBase);
        }
        let hi = u.hi;
        if hi < 0 {
            return Err(SeriesError::EmptyWindow {
                hi,
                lo: 0,
            });
        }
        let inv_lead = Rat::one() / &lead;
        let mut inv0 = BTreeMap::new();
        inv0.insert(0, HSeries::constant(inv_lead.clone(), self.order));
        let top = if hi >= HI_INF {
            u0.support_hi().unwrap_or(0).max(0)
        } else {
            hi
        };
        for n in 1..=top {
            let mut acc = Rat::zero();
            for k in 1..=n {
                let a = u0.coeff(k).coeff(0);
                if a.is_zero() {
                    continue;
                }
                if let Some(b) = inv0.get(&(n - k)) {
                    acc += a * b.coeff(0);
                }
            }
            if !acc.is_zero() {
                inv0.insert(n, HSeries::constant(-acc * &inv_lead, self.order));
            }
        }
        let inv0 = ZSeries {
            coeffs: inv0,
            hi,
            order: self.order,
        };
        // Geometric correction for the h-divisible remainder v = u - u0.
        let v = u.sub(&u0);
        let mut result = inv0.clone();
        let mut term = inv0.clone();
        for _ in 0..self.order {
            term = term.mul(&v.neg()).mul(&inv0);
            if term.is_zero() {
                break;
            }
            result = result.add(&term);
        }
        Ok(result.shift_exp(-c))
    }

    /// Integer power; negative exponents go through `inv`.
    pub fn powi(&self, e: i64) -> Result<Self, SeriesError> {
        let base = if e < 0 { self.inv()? } else { self.clone() };
        let mut result = ZSeries::one(self.order);
        for _ in 0..e.unsigned_abs() {
            result = result.mul(&base);
        }
        Ok(result)
    }

    /// Exponential of a series whose h^0 layer has only positive exponents.
    pub fn exp(&self) -> Result<Self, SeriesError> {
        let layer0 = self.h_layer(0);
        if layer0.support_lo() < 1 && !layer0.is_zero() {
            return Err(SeriesError::ExponentialDiverges);
        }
        let rest = self.sub(&layer0);
        // exp(layer0): each power raises the support floor, so the loop is
        // bounded by the cap.
        let mut e0 = ZSeries::one(self.order);
        if !layer0.is_zero() {
            let mut term = ZSeries::one(self.order);
            let bound = if self.hi >= HI_INF {
                // exact polynomial-like input: grows with stored support
                (layer0.support_hi().unwrap_or(0).max(1) * 64).max(64)
            } else {
                self.hi.max(0)
            };
            let mut k: i64 = 0;
            loop {
                k += 1;
                term = term.mul(&layer0).scale_rat(&rat_int(k).recip());
                if term.is_zero() || k > bound {
                    break;
                }
                e0 = e0.add(&term);
            }
        }
        // exp(rest): nilpotent in h.
        let mut er = ZSeries::one(self.order);
        let mut term = ZSeries::one(self.order);
        for k in 1..=self.order as i64 {
            term = term.mul(&rest).scale_rat(&rat_int(k).recip());
            if term.is_zero() {
                break;
            }
            er = er.add(&term);
        }
        Ok(e0.mul(&er))
    }

    /// Substitute z = c*h for a regular series; exact because h is nilpotent.
    pub fn eval_at_h(&self, c: &Rat) -> Result<HSeries, SeriesError> {
        let lo = self.support_lo();
        if lo < 0 {
            return Err(SeriesError::SingularSubstitution(lo));
        }
        if self.hi < self.order as i64 && self.hi < HI_INF {
            return Err(SeriesError::WindowMiss(self.hi));
        }
        let mut acc = HSeries::zero(self.order);
        for (n, a) in &self.coeffs {
            let n = *n as usize;
            if n > self.order {
                continue;
            }
            let mut p = num::pow::pow(c.clone(), n);
            if p.is_zero() && n > 0 {
                continue;
            }
            if c.is_zero() && n > 0 {
                continue;
            }
            if n == 0 {
                p = Rat::one();
            }
            acc = acc.add(&a.scale(&p).shift_up(n));
        }
        Ok(acc)
    }

    /// First exponent (within `rect`) where the two values provably differ.
    pub fn first_discrepancy(&self, rhs: &Self, lo: i64, hi: i64) -> Option<(i64, HSeries)> {
        let mut cap = self.hi.min(rhs.hi).min(hi);
        if cap >= HI_INF {
            // exact on both sides: beyond the stored supports everything is zero
            cap = self
                .support_hi()
                .unwrap_or(lo)
                .max(rhs.support_hi().unwrap_or(lo));
        }
        for n in lo..=cap {
            let d = self.coeff(n).sub(&rhs.coeff(n));
            if !d.is_zero() {
                return Some((n, d));
            }
        }
        None
    }

    /// Sound comparison window for asserting equality against `rhs`.
    pub fn common_cap(&self, rhs: &Self) -> i64 {
        self.hi.min(rhs.hi)
    }
}

impl std::fmt::Display for ZSeries {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut first = true;
        for (n, c) in &self.coeffs {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "[{}]*z^{}", c, n)?;
        }
        if first {
            write!(f, "0")?;
        }
        if self.hi < HI_INF {
            write!(f, " (+O(z^{}))", self.hi + 1)?;
        }
        Ok(())
    }
}

/// A series plus an integer multiple of log z.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogZSeries {
    pub log_coeff: HSeries,
    pub body: ZSeries,
}

impl LogZSeries {
    pub fn new(log_coeff: HSeries, body: ZSeries) -> Self {
        LogZSeries { log_coeff, body }
    }

    pub fn add(&self, rhs: &Self) -> Self {
        LogZSeries {
            log_coeff: self.log_coeff.add(&rhs.log_coeff),
            body: self.body.add(&rhs.body),
        }
    }

    pub fn scale_rat(&self, c: &Rat) -> Self {
        LogZSeries {
            log_coeff: self.log_coeff.scale(c),
            body: self.body.scale_rat(c),
        }
    }

    /// z^c * exp(body); the log z coefficient must be a constant integer.
    pub fn exp(&self) -> Result<ZSeries, SeriesError> {
        let c0 = self.log_coeff.coeff(0);
        if !c0.denom().is_one()
            || self
                .log_coeff
                .coeffs()
                .iter()
                .skip(1)
                .any(|c| !c.is_zero())
        {
            return Err(SeriesError::NonIntegerLogPower);
        }
        let c: i64 = match c0.numer().try_into() {
            Ok(v) => v,
            Err(_) => return Err(SeriesError::NonIntegerLogPower),
        };
        let constant = self.body.coeff(0).coeff(0);
        if !constant.is_zero() {
            return Err(SeriesError::ExponentialDiverges);
        }
        Ok(self.body.exp()?.shift_exp(c))
    }
}

/// One unexplored region: every coefficient with n1 > v1, n2 > v2 and
/// n1 + n2 > tot is unknown. `-HI_INF` entries impose no constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Unsound {
    pub v1: i64,
    pub v2: i64,
    pub tot: i64,
}

impl Unsound {
    /// self's unknown region contains other's.
    pub fn covers(&self, other: &Unsound) -> bool {
        self.v1 <= other.v1 && self.v2 <= other.v2 && self.tot <= other.tot
    }

    pub fn hits(&self, n1: i64, n2: i64) -> bool {
        n1 > self.v1 && n2 > self.v2 && n1 + n2 > self.tot
    }
}

/// Bivariate windowed series; the complement of the sound region is a union
/// of corner regions, which stays exact under multiplication (each factor's
/// unknown corner shifts by the other factor's support minima).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BiSeries {
    coeffs: BTreeMap<(i64, i64), HSeries>,
    unsound: Vec<Unsound>,
    // exact lower bounds valid for known and unknown content alike
    flo1: i64,
    flo2: i64,
    flotot: i64,
    order: usize,
}

pub(crate) fn sat_add(a: i64, b: i64) -> i64 {
    a.saturating_add(b).clamp(-HI_INF, HI_INF)
}

/// Smallest possible coordinate sum of a point in the unknown corner `u`,
/// given content floors.
pub(crate) fn min_unsound_sum(u: &Unsound, flo1: i64, flo2: i64, flotot: i64) -> i64 {
    let per_coord = sat_add(u.v1.saturating_add(1).max(flo1), u.v2.saturating_add(1).max(flo2));
    sat_add(u.tot, 1).max(per_coord).max(flotot)
}

impl BiSeries {
    pub fn zero(order: usize) -> Self {
        BiSeries {
            coeffs: BTreeMap::new(),
            unsound: Vec::new(),
            flo1: -HI_INF,
            flo2: -HI_INF,
            flotot: -HI_INF,
            order,
        }
    }

    /// Declare exact support floors (raises the current bounds).
    pub fn declare_floors(&mut self, f1: i64, f2: i64, ftot: i64) {
        self.flo1 = self.flo1.max(f1);
        self.flo2 = self.flo2.max(f2);
        self.flotot = self.flotot.max(ftot);
    }

    pub fn floors(&self) -> (i64, i64, i64) {
        (self.flo1, self.flo2, self.flotot)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn coeff(&self, n1: i64, n2: i64) -> HSeries {
        self.coeffs
            .get(&(n1, n2))
            .cloned()
            .unwrap_or_else(|| HSeries::zero(self.order))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(i64, i64), &HSeries)> {
        self.coeffs.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn is_sound_at(&self, n1: i64, n2: i64) -> bool {
        !self.unsound.iter().any(|u| u.hits(n1, n2))
    }

    pub fn unsound_regions(&self) -> &[Unsound] {
        &self.unsound
    }

    pub fn add_unsound(&mut self, u: Unsound) {
        if self.unsound.iter().any(|have| have.covers(&u)) {
            return;
        }
        self.unsound.retain(|have| !u.covers(have));
        self.unsound.push(u);
        let us = std::mem::take(&mut self.unsound);
        self.coeffs.retain(|(n1, n2), _| !us.iter().any(|u| u.hits(*n1, *n2)));
        self.unsound = us;
    }

    /// Coefficients with n1 above the cap are unknown.
    pub fn cap_var1(&mut self, h: i64) {
        if h < HI_INF {
            self.add_unsound(Unsound {
                v1: h,
                v2: -HI_INF,
                tot: -HI_INF,
            });
        }
    }

    pub fn cap_var2(&mut self, h: i64) {
        if h < HI_INF {
            self.add_unsound(Unsound {
                v1: -HI_INF,
                v2: h,
                tot: -HI_INF,
            });
        }
    }

    pub fn cap_tot(&mut self, h: i64) {
        if h < HI_INF {
            self.add_unsound(Unsound {
                v1: -HI_INF,
                v2: -HI_INF,
                tot: h,
            });
        }
    }

    fn insert(&mut self, n1: i64, n2: i64, c: HSeries) {
        if !self.is_sound_at(n1, n2) || c.is_zero() {
            return;
        }
        let e = self
            .coeffs
            .entry((n1, n2))
            .or_insert_with(|| HSeries::zero(self.order));
        *e = e.add(&c);
        if e.is_zero() {
            self.coeffs.remove(&(n1, n2));
        }
    }

    pub fn lo1(&self) -> i64 {
        self.coeffs.keys().map(|k| k.0).min().unwrap_or(LO_INF)
    }

    pub fn lo2(&self) -> i64 {
        self.coeffs.keys().map(|k| k.1).min().unwrap_or(LO_INF)
    }

    pub fn lotot(&self) -> i64 {
        self.coeffs.keys().map(|k| k.0 + k.1).min().unwrap_or(LO_INF)
    }

    pub fn add(&self, rhs: &Self) -> Self {
        let mut out = BiSeries {
            coeffs: self.coeffs.clone(),
            unsound: self.unsound.clone(),
            flo1: self.flo1.min(rhs.flo1),
            flo2: self.flo2.min(rhs.flo2),
            flotot: self.flotot.min(rhs.flotot),
            order: self.order.min(rhs.order),
        };
        for u in &rhs.unsound {
            out.add_unsound(*u);
        }
        for ((n1, n2), c) in &rhs.coeffs {
            out.insert(*n1, *n2, c.clone());
        }
        out
    }

    pub fn neg(&self) -> Self {
        BiSeries {
            coeffs: self.coeffs.iter().map(|(k, c)| (*k, c.neg())).collect(),
            ..self.clone()
        }
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        self.add(&rhs.neg())
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        let mut out = BiSeries::zero(self.order.min(rhs.order));
        // each unknown corner of one factor, shifted by the support minima of
        // the other, bounds where the product is still exact
        for u in &self.unsound {
            out.add_unsound(Unsound {
                v1: cap_add(u.v1, rhs.lo1()),
                v2: cap_add(u.v2, rhs.lo2()),
                tot: cap_add(u.tot, rhs.lotot()),
            });
        }
        for u in &rhs.unsound {
            out.add_unsound(Unsound {
                v1: cap_add(u.v1, self.lo1()),
                v2: cap_add(u.v2, self.lo2()),
                tot: cap_add(u.tot, self.lotot()),
            });
        }
        for ((a1, a2), c1) in &self.coeffs {
            for ((b1, b2), c2) in &rhs.coeffs {
                let p = c1.mul(c2);
                out.insert(a1 + b1, a2 + b2, p);
            }
        }
        out
    }

    pub fn scale(&self, c: &HSeries) -> Self {
        let mut coeffs = BTreeMap::new();
        for (k, a) in &self.coeffs {
            let p = a.mul(c);
            if !p.is_zero() {
                coeffs.insert(*k, p);
            }
        }
        BiSeries {
            coeffs,
            order: self.order.min(c.order()),
            ..self.clone()
        }
    }

    /// Sum over the anti-diagonal n1 + n2 = d (the substitution z2 = z1),
    /// `None` when the anti-diagonal meets an unknown region within the
    /// possible support.
    pub fn diag_coeff(&self, d: i64) -> Option<HSeries> {
        for u in &self.unsound {
            let crosses = d >= min_unsound_sum(u, self.flo1, self.flo2, self.flotot);
            if crosses {
                return None;
            }
        }
        let mut acc = HSeries::zero(self.order);
        for ((n1, n2), c) in &self.coeffs {
            if n1 + n2 == d {
                acc = acc.add(c);
            }
        }
        Some(acc)
    }

    pub fn first_discrepancy(
        &self,
        rhs: &Self,
        rect: (i64, i64, i64, i64),
    ) -> Option<(i64, i64, HSeries)> {
        let (lo1, hi1, lo2, hi2) = rect;
        for n1 in lo1..=hi1 {
            for n2 in lo2..=hi2 {
                if !self.is_sound_at(n1, n2) || !rhs.is_sound_at(n1, n2) {
                    continue;
                }
                let d = self.coeff(n1, n2).sub(&rhs.coeff(n1, n2));
                if !d.is_zero() {
                    return Some((n1, n2, d));
                }
            }
        }
        None
    }

    /// True when the comparison rectangle has no sound points at all.
    pub fn comparison_vacuous(&self, rhs: &Self, rect: (i64, i64, i64, i64)) -> bool {
        let (lo1, hi1, lo2, hi2) = rect;
        for n1 in lo1..=hi1 {
            for n2 in lo2..=hi2 {
                if self.is_sound_at(n1, n2) && rhs.is_sound_at(n1, n2) {
                    return false;
                }
            }
        }
        true
    }
}

/// Argument of a univariate series being placed into two variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IotaArg {
    /// z1 - z2 expanded in non-negative powers of z2.
    Z1MinusZ2,
    /// z1 + z2 expanded in non-negative powers of z2.
    Z1PlusZ2,
    /// z2 - z1 expanded in non-negative powers of z1 (the opposite region).
    Z2MinusZ1,
    Z1Alone,
    Z2Alone,
}

/// Generalized binomial coefficient binom(n, m) for integer n (possibly
/// negative) and m >= 0.
pub fn binom_i64(n: i64, m: i64) -> Rat {
    let mut acc = Rat::one();
    for j in 0..m {
        acc = acc * rat_int(n - j) / rat_int(j + 1);
    }
    acc
}

/// Embed a univariate series into two variables under the stated convention,
/// storing expansion exponents of the small variable up to `small_cap`.
pub fn iota_embed(a: &ZSeries, arg: IotaArg, small_cap: i64) -> BiSeries {
    let order = a.order();
    let mut out = BiSeries::zero(order);
    let floor = a.support_lo().min(if a.hi() < HI_INF { a.hi() + 1 } else { LO_INF });
    match arg {
        IotaArg::Z1Alone => {
            out.cap_var1(a.hi());
            out.declare_floors(floor, 0, floor);
            for (n, c) in a.iter() {
                out.insert(*n, 0, c.clone());
            }
        }
        IotaArg::Z2Alone => {
            out.cap_var2(a.hi());
            out.declare_floors(0, floor, floor);
            for (n, c) in a.iter() {
                out.insert(0, *n, c.clone());
            }
        }
        IotaArg::Z1MinusZ2 | IotaArg::Z1PlusZ2 => {
            out.cap_tot(a.hi());
            out.cap_var2(small_cap);
            out.declare_floors(-HI_INF, 0, floor);
            let sign_neg = matches!(arg, IotaArg::Z1MinusZ2);
            for (n, c) in a.iter() {
                for m in 0..=small_cap {
                    let mut b = binom_i64(*n, m);
                    if sign_neg && m % 2 == 1 {
                        b = -b;
                    }
                    if b.is_zero() {
                        continue;
                    }
                    out.insert(n - m, m, c.scale(&b));
                }
            }
        }
        IotaArg::Z2MinusZ1 => {
            out.cap_tot(a.hi());
            out.cap_var1(small_cap);
            out.declare_floors(0, -HI_INF, floor);
            for (n, c) in a.iter() {
                for m in 0..=small_cap {
                    let mut b = binom_i64(*n, m);
                    if m % 2 == 1 {
                        b = -b;
                    }
                    if b.is_zero() {
                        continue;
                    }
                    out.insert(m, n - m, c.scale(&b));
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exactnum::rat;
    use crate::qcalc;
    use proptest::prelude::*;

    fn hs(c: i64, order: usize) -> HSeries {
        HSeries::constant(rat_int(c), order)
    }

    #[test]
    fn laurent_product() {
        // (z^-1 + 1) * z = 1 + z
        let a = ZSeries::monomial(-1, hs(1, 2)).add(&ZSeries::one(2));
        let b = ZSeries::monomial(1, hs(1, 2));
        let p = a.mul(&b);
        assert_eq!(p.coeff(0), hs(1, 2));
        assert_eq!(p.coeff(1), hs(1, 2));
        assert_eq!(p.coeff(-1), hs(0, 2));
    }

    #[test]
    fn add_zero_identity() {
        let a = ZSeries::monomial(-3, hs(7, 2));
        assert_eq!(a.add(&ZSeries::zero(2)), a);
    }

    #[test]
    fn derivative_basics() {
        let z2 = ZSeries::monomial(2, hs(1, 1));
        assert_eq!(z2.d_dz(), ZSeries::monomial(1, hs(2, 1)));
        let zm1 = ZSeries::monomial(-1, hs(1, 1));
        assert_eq!(zm1.d_dz(), ZSeries::monomial(-2, hs(-1, 1)));
    }

    // Oracle: geometric expansion of 1/(z + 2h) truncated at h^2.
    #[test]
    fn shift_of_inverse_power() {
        let order = 2;
        let zm1 = ZSeries::monomial(-1, hs(1, order));
        let c = HSeries::monomial(rat_int(2), 1, order);
        let shifted = zm1.taylor_shift(&c).unwrap();
        assert_eq!(shifted.coeff(-1), hs(1, order));
        assert_eq!(shifted.coeff(-2), HSeries::monomial(rat_int(-2), 1, order));
        assert_eq!(shifted.coeff(-3), HSeries::monomial(rat_int(4), 2, order));
    }

    #[test]
    fn shift_by_zero_is_identity() {
        let a = ZSeries::monomial(-2, hs(5, 3)).add(&ZSeries::monomial(4, hs(1, 3)));
        assert_eq!(a.taylor_shift(&HSeries::zero(3)).unwrap(), a);
    }

    #[test]
    fn shift_group_law() {
        let order = 3;
        let a = ZSeries::monomial(-1, hs(1, order)).add(&ZSeries::monomial(2, hs(3, order)));
        let c = HSeries::monomial(rat_int(1), 1, order);
        let there = a.taylor_shift(&c).unwrap();
        let back = there.taylor_shift(&c.neg()).unwrap();
        let cap = back.common_cap(&a);
        assert!(back.first_discrepancy(&a, -10, cap).is_none());
    }

    #[test]
    fn residue_picks_minus_one() {
        let a = ZSeries::monomial(-1, hs(1, 2));
        assert_eq!(a.residue().unwrap(), hs(1, 2));
        let b = ZSeries::monomial(2, hs(1, 2));
        assert_eq!(b.residue().unwrap(), hs(0, 2));
    }

    #[test]
    fn split_and_recompose() {
        let a = ZSeries::monomial(-2, hs(1, 2))
            .add(&ZSeries::constant(hs(3, 2)))
            .add(&ZSeries::monomial(1, hs(1, 2)));
        let (s, r) = a.split_sing();
        assert_eq!(s, ZSeries::monomial(-2, hs(1, 2)));
        assert_eq!(s.add(&r), a);
        let b = ZSeries::monomial(3, hs(1, 2));
        let (s2, r2) = b.split_sing();
        assert!(s2.is_zero());
        assert_eq!(r2, b);
    }

    #[test]
    fn inverse_of_f_on_window() {
        let order = 3;
        let f = qcalc::f_series(10, order);
        let finv = f.inv().unwrap();
        let p = f.mul(&finv);
        let cap = p.common_cap(&ZSeries::one(order));
        assert!(cap >= 2);
        assert!(p.first_discrepancy(&ZSeries::one(order), -2, cap.min(2)).is_none());
    }

    #[test]
    fn iota_of_inverse_is_geometric() {
        // iota(z^-1, z1 - z2) = z1^-1 + z2 z1^-2 + z2^2 z1^-3 + ...
        let a = ZSeries::monomial(-1, hs(1, 1));
        let b = iota_embed(&a, IotaArg::Z1MinusZ2, 2);
        assert_eq!(b.coeff(-1, 0), hs(1, 1));
        assert_eq!(b.coeff(-2, 1), hs(1, 1));
        assert_eq!(b.coeff(-3, 2), hs(1, 1));
    }

    #[test]
    fn iota_of_square_is_binomial() {
        let a = ZSeries::monomial(2, hs(1, 1));
        let b = iota_embed(&a, IotaArg::Z1PlusZ2, 4);
        assert_eq!(b.coeff(2, 0), hs(1, 1));
        assert_eq!(b.coeff(1, 1), hs(2, 1));
        assert_eq!(b.coeff(0, 2), hs(1, 1));
        assert_eq!(b.coeff(0, 3), hs(0, 1));
    }

    #[test]
    fn delta_function_from_opposite_expansions() {
        // iota_{z1,z2}(1/(z1-z2)) - iota_{z2,z1}(1/(z1-z2)) = delta kernel
        // sum_n z1^{-n-1} z2^n.
        let a = ZSeries::monomial(-1, hs(1, 1));
        let cap = 5;
        let one_way = iota_embed(&a, IotaArg::Z1MinusZ2, cap);
        // 1/(z1 - z2) = -1/(z2 - z1): embed -(z^-1) in the opposite region.
        let other = iota_embed(&a.neg(), IotaArg::Z2MinusZ1, cap);
        let d = one_way.sub(&other);
        for n in 0..=3 {
            assert_eq!(d.coeff(-n - 1, n), hs(1, 1), "delta coefficient at {}", n);
            assert_eq!(d.coeff(-n - 2, n), hs(0, 1));
        }
    }

    #[test]
    fn exp_log_of_pure_power() {
        let l = LogZSeries::new(hs(2, 2), ZSeries::zero(2));
        assert_eq!(l.exp().unwrap(), ZSeries::monomial(2, HSeries::one(2)));
    }

    #[test]
    fn mul_soundness_window() {
        // A series known only up to z^1, times z^-2: cap must drop to -1.
        let mut a = ZSeries::one(3);
        a.hi = 1;
        let b = ZSeries::monomial(-2, hs(1, 3));
        let p = a.mul(&b);
        assert_eq!(p.hi, -1);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn iota_is_ring_homomorphism(
            e1 in -3i64..3, e2 in -3i64..3,
            c1 in -5i64..5, c2 in -5i64..5,
        ) {
            let order = 1;
            let a = ZSeries::monomial(e1, hs(c1, order)).add(&ZSeries::one(order));
            let b = ZSeries::monomial(e2, hs(c2, order));
            let lhs = iota_embed(&a.mul(&b), IotaArg::Z1MinusZ2, 6);
            let rhs = iota_embed(&a, IotaArg::Z1MinusZ2, 6)
                .mul(&iota_embed(&b, IotaArg::Z1MinusZ2, 6));
            prop_assert!(lhs.first_discrepancy(&rhs, (-8, 4, 0, 4)).is_none());
        }

        #[test]
        fn residue_of_derivative_vanishes(exps in proptest::collection::vec((-4i64..5, -9i64..9), 1..6)) {
            let order = 2;
            let mut a = ZSeries::zero(order);
            for (e, c) in exps {
                a = a.add(&ZSeries::monomial(e, hs(c, order)));
            }
            prop_assert!(a.d_dz().residue().unwrap().is_zero());
        }

        #[test]
        fn split_parts_recompose(exps in proptest::collection::vec((-5i64..6, -9i64..9), 1..7)) {
            let order = 1;
            let mut a = ZSeries::zero(order);
            for (e, c) in exps {
                a = a.add(&ZSeries::monomial(e, hs(c, order)));
            }
            let (s, r) = a.split_sing();
            prop_assert_eq!(s.add(&r), a);
        }
    }
}

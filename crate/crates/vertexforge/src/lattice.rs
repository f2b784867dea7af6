//! Classical lattice vertex algebra on a weight-truncated Fock space.
//!
//! States are Heisenberg creation monomials attached to a lattice point; the
//! vertex operators of the generators and of arbitrary states are computed by
//! the standard free-field formulas (E^+ E^- e_alpha z^alpha for lattice
//! vectors, normal-ordered mode insertion for Heisenberg modes). All series
//! of states reuse the windowed soundness bookkeeping of `series`.

use crate::exactnum::{rat_int, HSeries, Rat};
use crate::series::{binom_i64, ZSeries, HI_INF, LO_INF};
use num::{One, Zero};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq, Clone)]
pub enum LatticeError {
    #[error("gram matrix is not square")]
    NotSquare,
    #[error("gram matrix is not symmetric")]
    NotSymmetric,
    #[error("gram diagonal entry {0} is odd")]
    OddDiagonal(i64),
    #[error("gram matrix is degenerate")]
    Degenerate,
    #[error("rank {0} out of supported range 1..={1}")]
    BadRank(usize, usize),
}

pub const MAX_RANK: usize = 8;

/// Even non-degenerate lattice presented by its Gram matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatticeData {
    rank: usize,
    gram: Vec<Vec<i64>>,
}

impl LatticeData {
    pub fn new(gram: Vec<Vec<i64>>) -> Result<Self, LatticeError> {
        let rank = gram.len();
        if rank == 0 || rank > MAX_RANK {
            return Err(LatticeError::BadRank(rank, MAX_RANK));
        }
        if gram.iter().any(|row| row.len() != rank) {
            return Err(LatticeError::NotSquare);
        }
        for i in 0..rank {
            for j in 0..rank {
                if gram[i][j] != gram[j][i] {
                    return Err(LatticeError::NotSymmetric);
                }
            }
            if gram[i][i].rem_euclid(2) != 0 {
                return Err(LatticeError::OddDiagonal(gram[i][i]));
            }
        }
        if det_rat(&gram).is_zero() {
            return Err(LatticeError::Degenerate);
        }
        Ok(LatticeData { rank, gram })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn gram(&self, i: usize, j: usize) -> i64 {
        self.gram[i][j]
    }

    pub fn pairing(&self, a: &[i64], b: &[i64]) -> i64 {
        let mut acc = 0;
        for i in 0..self.rank {
            for j in 0..self.rank {
                acc += a[i] * self.gram[i][j] * b[j];
            }
        }
        acc
    }

    /// Basis vector as a coordinate vector.
    pub fn basis(&self, i: usize) -> Vec<i64> {
        let mut v = vec![0; self.rank];
        v[i] = 1;
        v
    }

    /// Cocycle sign: bimultiplicative extension of the basis table
    /// eps(b_i, b_j) = 1 for i <= j and (-1)^{<b_i,b_j>} for i > j.
    pub fn cocycle(&self, a: &[i64], b: &[i64]) -> i64 {
        let mut exponent = 0i64;
        for i in 0..self.rank {
            for j in 0..i {
                exponent += a[i] * b[j] * self.gram[i][j];
            }
        }
        if exponent.rem_euclid(2) == 0 {
            1
        } else {
            -1
        }
    }
}

fn det_rat(m: &[Vec<i64>]) -> Rat {
    let n = m.len();
    let mut a: Vec<Vec<Rat>> = m
        .iter()
        .map(|row| row.iter().map(|&x| rat_int(x)).collect())
        .collect();
    let mut det = Rat::one();
    for col in 0..n {
        let pivot = (col..n).find(|&r| !a[r][col].is_zero());
        let pivot = match pivot {
            Some(p) => p,
            None => return Rat::zero(),
        };
        if pivot != col {
            a.swap(pivot, col);
            det = -det;
        }
        let p = a[col][col].clone();
        det *= &p;
        for r in col + 1..n {
            let factor = &a[r][col] / &p;
            for c in col..n {
                let sub = &factor * &a[col][c];
                a[r][c] -= sub;
            }
        }
    }
    det
}

/// Basis state: creation multiset (index, mode) with mode >= 1, tensor a
/// lattice point in basis coordinates.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FockState {
    pub modes: Vec<(u8, u32)>,
    pub lam: Vec<i64>,
}

impl FockState {
    pub fn vacuum(rank: usize) -> Self {
        FockState {
            modes: Vec::new(),
            lam: vec![0; rank],
        }
    }

    pub fn point(lam: Vec<i64>) -> Self {
        FockState {
            modes: Vec::new(),
            lam,
        }
    }

    pub fn with_mode(&self, j: u8, n: u32) -> Self {
        let mut modes = self.modes.clone();
        let pos = modes.partition_point(|m| *m <= (j, n));
        modes.insert(pos, (j, n));
        FockState {
            modes,
            lam: self.lam.clone(),
        }
    }

    pub fn mode_weight(&self) -> i64 {
        self.modes.iter().map(|(_, n)| *n as i64).sum()
    }

    /// Conformal weight: sum of modes plus <lam, lam>/2.
    pub fn weight(&self, data: &LatticeData) -> i64 {
        self.mode_weight() + data.pairing(&self.lam, &self.lam) / 2
    }

    pub fn is_vacuum(&self) -> bool {
        self.modes.is_empty() && self.lam.iter().all(|&x| x == 0)
    }
}

/// Finitely supported linear combination of states with `HSeries`
/// coefficients. `lost` records the minimal h-valuation of content dropped
/// by the weight cap; once an h-multiple pushes that valuation past the
/// truncation order, nothing real was lost and the flag clears itself.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vector<K: Ord + Clone> {
    terms: BTreeMap<K, HSeries>,
    lost: Option<usize>,
    order: usize,
}

impl<K: Ord + Clone> Vector<K> {
    pub fn zero(order: usize) -> Self {
        Vector {
            terms: BTreeMap::new(),
            lost: None,
            order,
        }
    }

    /// True when weight-capped content may still matter at this order.
    pub fn truncated(&self) -> bool {
        self.lost.is_some()
    }

    /// Record lost content whose coefficient has the given h-valuation.
    pub fn mark_lost(&mut self, hval: Option<usize>) {
        if let Some(h) = hval {
            if h <= self.order {
                self.lost = Some(self.lost.map_or(h, |cur| cur.min(h)));
            }
        }
    }

    pub fn merge_lost_from(&mut self, other: &Self) {
        self.mark_lost(other.lost);
    }

    pub fn lost_val(&self) -> Option<usize> {
        self.lost
    }

    pub fn clear_lost(&mut self) {
        self.lost = None;
    }

    fn shift_lost(&mut self, by: Option<usize>) {
        // multiplying by a coefficient of h-valuation `by` pushes lost
        // content deeper; `None` (zero multiplier) clears it
        self.lost = match (self.lost, by) {
            (Some(l), Some(b)) if l + b <= self.order => Some(l + b),
            _ => None,
        };
    }

    pub fn singleton(k: K, c: HSeries) -> Self {
        let order = c.order();
        let mut v = Vector::zero(order);
        if !c.is_zero() {
            v.terms.insert(k, c);
        }
        v
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn insert(&mut self, k: K, c: HSeries) {
        if c.is_zero() {
            return;
        }
        let order = self.order;
        let e = self.terms.entry(k).or_insert_with(|| HSeries::zero(order));
        *e = e.add(&c);
        if e.is_zero() {
            let key = self
                .terms
                .iter()
                .find(|(_, v)| v.is_zero())
                .map(|(k, _)| k.clone());
            if let Some(key) = key {
                self.terms.remove(&key);
            }
        }
    }

    pub fn add(&self, rhs: &Self) -> Self {
        let mut out = Vector {
            terms: self.terms.clone(),
            lost: None,
            order: self.order.min(rhs.order),
        };
        out.mark_lost(self.lost);
        out.mark_lost(rhs.lost);
        for (k, c) in &rhs.terms {
            out.insert(k.clone(), c.clone());
        }
        out
    }

    pub fn neg(&self) -> Self {
        Vector {
            terms: self.terms.iter().map(|(k, c)| (k.clone(), c.neg())).collect(),
            lost: self.lost,
            order: self.order,
        }
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        self.add(&rhs.neg())
    }

    pub fn scale(&self, c: &HSeries) -> Self {
        let mut out = Vector::zero(self.order.min(c.order()));
        out.lost = self.lost;
        out.shift_lost(c.h_valuation());
        for (k, a) in &self.terms {
            out.insert(k.clone(), a.mul(c));
        }
        out
    }

    pub fn scale_rat(&self, c: &Rat) -> Self {
        let mut out = Vector::zero(self.order);
        if !c.is_zero() {
            out.lost = self.lost;
        }
        for (k, a) in &self.terms {
            out.insert(k.clone(), a.scale(c));
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&K, &HSeries)> {
        self.terms.iter()
    }

    pub fn coeff(&self, k: &K) -> HSeries {
        self.terms
            .get(k)
            .cloned()
            .unwrap_or_else(|| HSeries::zero(self.order))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn map_states<K2: Ord + Clone, F: Fn(&K) -> K2>(&self, f: F) -> Vector<K2> {
        let mut out = Vector::zero(self.order);
        out.lost = self.lost;
        for (k, c) in &self.terms {
            out.insert(f(k), c.clone());
        }
        out
    }

    pub fn truncate_order(&self, order: usize) -> Self {
        let order = order.min(self.order);
        let mut out = Vector::zero(order);
        out.mark_lost(self.lost);
        for (k, c) in &self.terms {
            out.insert(k.clone(), c.truncate(order));
        }
        out
    }

    /// Reduce mod h: keep only the h^0 layer.
    pub fn h_layer0(&self) -> Self {
        let mut out = Vector::zero(self.order);
        out.lost = self.lost.filter(|l| *l == 0);
        for (k, c) in &self.terms {
            out.insert(k.clone(), HSeries::constant(c.coeff(0), self.order));
        }
        out
    }

    /// Exact division by h^k (order drops accordingly).
    pub fn div_h(&self, k: usize) -> Result<Self, crate::exactnum::NumError> {
        let mut out = Vector::zero(self.order.saturating_sub(k));
        out.mark_lost(self.lost.map(|l| l.saturating_sub(k)));
        for (key, c) in &self.terms {
            out.insert(key.clone(), c.div_h(k)?);
        }
        Ok(out)
    }
}

/// z-series of vectors with the same soundness cap semantics as `ZSeries`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VSeries<K: Ord + Clone> {
    pub coeffs: BTreeMap<i64, Vector<K>>,
    pub hi: i64,
    pub order: usize,
}

impl<K: Ord + Clone> VSeries<K> {
    pub fn zero(order: usize) -> Self {
        VSeries {
            coeffs: BTreeMap::new(),
            hi: HI_INF,
            order,
        }
    }

    pub fn support_lo(&self) -> i64 {
        self.coeffs.keys().next().copied().unwrap_or(LO_INF)
    }

    pub fn insert(&mut self, n: i64, v: Vector<K>) {
        if n > self.hi {
            return;
        }
        if v.is_zero() && !v.truncated() {
            return;
        }
        let order = self.order;
        let e = self.coeffs.entry(n).or_insert_with(|| Vector::zero(order));
        *e = e.add(&v);
        if e.is_zero() && !e.truncated() {
            self.coeffs.remove(&n);
        }
    }

    pub fn coeff(&self, n: i64) -> Vector<K> {
        self.coeffs
            .get(&n)
            .cloned()
            .unwrap_or_else(|| Vector::zero(self.order))
    }

    pub fn add(&self, rhs: &Self) -> Self {
        let mut out = VSeries {
            coeffs: BTreeMap::new(),
            hi: self.hi.min(rhs.hi),
            order: self.order.min(rhs.order),
        };
        for (n, v) in self.coeffs.iter().chain(rhs.coeffs.iter()) {
            out.insert(*n, v.clone());
        }
        out
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        self.add(&rhs.neg())
    }

    pub fn neg(&self) -> Self {
        VSeries {
            coeffs: self.coeffs.iter().map(|(n, v)| (*n, v.neg())).collect(),
            hi: self.hi,
            order: self.order,
        }
    }

    pub fn with_cap(mut self, hi: i64) -> Self {
        self.hi = self.hi.min(hi);
        let cap = self.hi;
        self.coeffs.retain(|n, _| *n <= cap);
        self
    }

    pub fn shift_exp(&self, k: i64) -> Self {
        VSeries {
            coeffs: self.coeffs.iter().map(|(n, v)| (n + k, v.clone())).collect(),
            hi: if self.hi >= HI_INF { HI_INF } else { self.hi + k },
            order: self.order,
        }
    }

    pub fn d_dz(&self) -> Self {
        let mut coeffs = BTreeMap::new();
        for (n, v) in &self.coeffs {
            if *n == 0 {
                continue;
            }
            coeffs.insert(n - 1, v.scale_rat(&rat_int(*n)));
        }
        VSeries {
            coeffs,
            hi: if self.hi >= HI_INF { HI_INF } else { self.hi - 1 },
            order: self.order,
        }
    }

    /// Multiply by a scalar series, convolving exponents.
    pub fn scale_z(&self, s: &ZSeries) -> Self {
        let hi = cap(self.hi, s.support_lo()).min(cap(s.hi(), self.support_lo()));
        let mut out = VSeries {
            coeffs: BTreeMap::new(),
            hi,
            order: self.order.min(s.order()),
        };
        for (n1, v) in &self.coeffs {
            for (n2, c) in s.iter() {
                if n1 + n2 > hi {
                    continue;
                }
                out.insert(n1 + n2, v.scale(c));
            }
        }
        out
    }

    pub fn scale_h(&self, c: &HSeries) -> Self {
        VSeries {
            coeffs: self.coeffs.iter().map(|(n, v)| (*n, v.scale(c))).collect(),
            hi: self.hi,
            order: self.order.min(c.order()),
        }
    }

    /// Split into (exponents < 0, exponents >= 0).
    pub fn split_sing(&self) -> (Self, Self) {
        let mut sing = VSeries {
            coeffs: BTreeMap::new(),
            hi: if self.hi >= -1 { HI_INF } else { self.hi },
            order: self.order,
        };
        let mut reg = VSeries {
            coeffs: BTreeMap::new(),
            hi: self.hi,
            order: self.order,
        };
        for (n, v) in &self.coeffs {
            if *n < 0 {
                sing.coeffs.insert(*n, v.clone());
            } else {
                reg.coeffs.insert(*n, v.clone());
            }
        }
        (sing, reg)
    }

    pub fn negate_var(&self) -> Self {
        VSeries {
            coeffs: self
                .coeffs
                .iter()
                .map(|(n, v)| (*n, if n.rem_euclid(2) == 0 { v.clone() } else { v.neg() }))
                .collect(),
            hi: self.hi,
            order: self.order,
        }
    }

    /// Substitute z = c*h for a regular series of vectors.
    pub fn eval_at_h(&self, c: &Rat) -> Option<Vector<K>> {
        if self.support_lo() < 0 {
            return None;
        }
        if self.hi < self.order as i64 && self.hi < HI_INF {
            return None;
        }
        let mut acc = Vector::zero(self.order);
        for (n, v) in &self.coeffs {
            let n = *n as usize;
            if n > self.order {
                continue;
            }
            if c.is_zero() && n > 0 {
                continue;
            }
            let p = num::pow::pow(c.clone(), n);
            acc = acc.add(&v.scale(&HSeries::monomial(p, n, self.order)));
        }
        Some(acc)
    }

    /// Mode u_m = coefficient of z^{-m-1}.
    pub fn mode(&self, m: i64) -> Option<Vector<K>> {
        let n = -m - 1;
        if n > self.hi {
            return None;
        }
        Some(self.coeff(n))
    }

    pub fn is_zero_within(&self, lo: i64, hi: i64) -> bool {
        let cap = self.hi.min(hi);
        (lo..=cap).all(|n| self.coeff(n).is_zero())
    }

    pub fn truncated_anywhere(&self) -> bool {
        self.coeffs.values().any(|v| v.truncated())
    }
}

fn cap(a: i64, b: i64) -> i64 {
    if a >= HI_INF || b >= HI_INF {
        HI_INF
    } else {
        (a + b).min(HI_INF)
    }
}

pub use crate::series::Unsound;

/// Full-content support floor of a z-series of vectors: the stored floor, or
/// just past the cap when nothing is stored.
pub fn full_floor<K: Ord + Clone>(v: &VSeries<K>) -> i64 {
    let lo = v.support_lo();
    if lo < LO_INF {
        lo
    } else if v.hi < HI_INF {
        v.hi + 1
    } else {
        HI_INF
    }
}

/// Stack an outer field application over the coefficients of an inner
/// series, producing a bivariate series with exact soundness corners and
/// content floors. `transposed = false` puts the inner exponent in the
/// second variable. `global_drop` bounds how far any outer application can
/// reach below zero (from the weight caps).
pub fn stack_product<K: Ord + Clone, E, F>(
    inner: &VSeries<K>,
    order: usize,
    transposed: bool,
    global_drop: i64,
    mut outer: F,
) -> Result<BiVSeries<K>, E>
where
    F: FnMut(&Vector<K>) -> Result<VSeries<K>, E>,
{
    use crate::series::sat_add;
    let mut out = BiVSeries::zero(order);
    if transposed {
        out.cap_var1(inner.hi);
    } else {
        out.cap_var2(inner.hi);
    }
    let mut flo_known = HI_INF;
    let mut ftot_known = HI_INF;
    for (d, x) in &inner.coeffs {
        let o = outer(x)?;
        if transposed {
            out.cap_var2(o.hi);
        } else {
            out.cap_var1(o.hi);
        }
        let olo = full_floor(&o);
        flo_known = flo_known.min(olo);
        ftot_known = ftot_known.min(sat_add(olo, *d));
        for (e, y) in &o.coeffs {
            if transposed {
                out.insert(*d, *e, y.clone());
            } else {
                out.insert(*e, *d, y.clone());
            }
        }
    }
    // content in the unknown inner region is still bounded below by the
    // global reach of a field application
    let flo_outer = if inner.hi >= HI_INF {
        flo_known
    } else {
        flo_known.min(-global_drop)
    };
    let inner_floor = full_floor(inner);
    let ftot = if inner.hi >= HI_INF {
        ftot_known
    } else {
        ftot_known.min(sat_add(inner.hi + 1, -global_drop))
    };
    if transposed {
        out.declare_floors(inner_floor, flo_outer, ftot);
    } else {
        out.declare_floors(flo_outer, inner_floor, ftot);
    }
    Ok(out)
}

/// Bivariate series of vectors; the complement of the sound region is a
/// union of corner regions, as for scalar `BiSeries`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BiVSeries<K: Ord + Clone> {
    pub coeffs: BTreeMap<(i64, i64), Vector<K>>,
    unsound: Vec<Unsound>,
    flo1: i64,
    flo2: i64,
    flotot: i64,
    pub order: usize,
}

impl<K: Ord + Clone> BiVSeries<K> {
    pub fn zero(order: usize) -> Self {
        BiVSeries {
            coeffs: BTreeMap::new(),
            unsound: Vec::new(),
            flo1: -HI_INF,
            flo2: -HI_INF,
            flotot: -HI_INF,
            order,
        }
    }

    pub fn declare_floors(&mut self, f1: i64, f2: i64, ftot: i64) {
        self.flo1 = self.flo1.max(f1);
        self.flo2 = self.flo2.max(f2);
        self.flotot = self.flotot.max(ftot);
    }

    pub fn floors(&self) -> (i64, i64, i64) {
        (self.flo1, self.flo2, self.flotot)
    }

    pub fn is_sound_at(&self, n1: i64, n2: i64) -> bool {
        !self.unsound.iter().any(|u| u.hits(n1, n2))
    }

    pub fn unsound(&self) -> &[Unsound] {
        &self.unsound
    }

    pub fn add_unsound(&mut self, u: Unsound) {
        if self.unsound.iter().any(|have| have.covers(&u)) {
            return;
        }
        self.unsound.retain(|have| !u.covers(have));
        self.unsound.push(u);
        let us = std::mem::take(&mut self.unsound);
        self.coeffs
            .retain(|(n1, n2), _| !us.iter().any(|u| u.hits(*n1, *n2)));
        self.unsound = us;
    }

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

    pub fn insert(&mut self, n1: i64, n2: i64, v: Vector<K>) {
        if !self.is_sound_at(n1, n2) || (v.is_zero() && !v.truncated()) {
            return;
        }
        let order = self.order;
        let e = self
            .coeffs
            .entry((n1, n2))
            .or_insert_with(|| Vector::zero(order));
        *e = e.add(&v);
        if e.is_zero() && !e.truncated() {
            self.coeffs.remove(&(n1, n2));
        }
    }

    pub fn coeff(&self, n1: i64, n2: i64) -> Vector<K> {
        self.coeffs
            .get(&(n1, n2))
            .cloned()
            .unwrap_or_else(|| Vector::zero(self.order))
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
        let mut out = BiVSeries {
            coeffs: BTreeMap::new(),
            unsound: self.unsound.clone(),
            flo1: self.flo1.min(rhs.flo1),
            flo2: self.flo2.min(rhs.flo2),
            flotot: self.flotot.min(rhs.flotot),
            order: self.order.min(rhs.order),
        };
        for u in &rhs.unsound {
            out.add_unsound(*u);
        }
        for (k, v) in self.coeffs.iter().chain(rhs.coeffs.iter()) {
            out.insert(k.0, k.1, v.clone());
        }
        out
    }

    pub fn neg(&self) -> Self {
        BiVSeries {
            coeffs: self.coeffs.iter().map(|(k, v)| (*k, v.neg())).collect(),
            unsound: self.unsound.clone(),
            flo1: self.flo1,
            flo2: self.flo2,
            flotot: self.flotot,
            order: self.order,
        }
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        self.add(&rhs.neg())
    }

    /// Multiply by a scalar bivariate series.
    pub fn scale_bi(&self, s: &crate::series::BiSeries) -> Self {
        use crate::series::{min_unsound_sum, sat_add};
        let mut out = BiVSeries::zero(self.order.min(s.order()));
        let (sf1, sf2, sftot) = s.floors();
        out.declare_floors(
            sat_add(self.flo1, sf1),
            sat_add(self.flo2, sf2),
            sat_add(self.flotot, sftot),
        );
        for u in &self.unsound {
            out.add_unsound(Unsound {
                v1: sat_add(u.v1, sf1),
                v2: sat_add(u.v2, sf2),
                tot: sat_add(
                    min_unsound_sum(u, self.flo1, self.flo2, self.flotot),
                    sat_add(sftot, -1),
                ),
            });
        }
        for u in s.unsound_regions() {
            out.add_unsound(Unsound {
                v1: sat_add(u.v1, self.flo1),
                v2: sat_add(u.v2, self.flo2),
                tot: sat_add(
                    min_unsound_sum(u, sf1, sf2, sftot),
                    sat_add(self.flotot, -1),
                ),
            });
        }
        for ((a1, a2), v) in &self.coeffs {
            for ((b1, b2), c) in s.iter() {
                out.insert(a1 + b1, a2 + b2, v.scale(c));
            }
        }
        out
    }

    /// A point is comparable when it lies in both sound regions and neither
    /// side lost terms to the weight cap there.
    fn comparable_at(&self, rhs: &Self, n1: i64, n2: i64) -> bool {
        self.is_sound_at(n1, n2)
            && rhs.is_sound_at(n1, n2)
            && !self.coeff(n1, n2).truncated()
            && !rhs.coeff(n1, n2).truncated()
    }

    pub fn first_discrepancy(
        &self,
        rhs: &Self,
        rect: (i64, i64, i64, i64),
    ) -> Option<(i64, i64)> {
        let (lo1, hi1, lo2, hi2) = rect;
        for n1 in lo1..=hi1 {
            for n2 in lo2..=hi2 {
                if !self.comparable_at(rhs, n1, n2) {
                    continue;
                }
                let mut a = self.coeff(n1, n2);
                let mut b = rhs.coeff(n1, n2);
                a.clear_lost();
                b.clear_lost();
                if a != b {
                    return Some((n1, n2));
                }
            }
        }
        None
    }

    pub fn comparison_vacuous(&self, rhs: &Self, rect: (i64, i64, i64, i64)) -> bool {
        let (lo1, hi1, lo2, hi2) = rect;
        for n1 in lo1..=hi1 {
            for n2 in lo2..=hi2 {
                if self.comparable_at(rhs, n1, n2) {
                    return false;
                }
            }
        }
        true
    }

    /// Anti-diagonal sum (substitution z2 = z1), `None` when the line meets
    /// an unknown region or a weight-truncated coefficient.
    pub fn diag_coeff(&self, d: i64) -> Option<Vector<K>> {
        for u in &self.unsound {
            let crosses =
                d >= crate::series::min_unsound_sum(u, self.flo1, self.flo2, self.flotot);
            if crosses {
                return None;
            }
        }
        let mut acc = Vector::zero(self.order);
        for ((n1, n2), v) in &self.coeffs {
            if n1 + n2 == d {
                if v.truncated() {
                    return None;
                }
                acc = acc.add(v);
            }
        }
        Some(acc)
    }
}

pub type FockVector = Vector<FockState>;
pub type FockVSeries = VSeries<FockState>;

/// Evaluation context: lattice data plus truncation configuration.
#[derive(Debug, Clone)]
pub struct LatticeCtx {
    pub data: LatticeData,
    pub order: usize,
    pub w_max: i64,
    pub z_lo: i64,
    pub z_hi: i64,
}

impl LatticeCtx {
    pub fn new(data: LatticeData, order: usize, w_max: i64, z_lo: i64, z_hi: i64) -> Self {
        LatticeCtx {
            data,
            order,
            w_max,
            z_lo,
            z_hi,
        }
    }

    pub fn rank(&self) -> usize {
        self.data.rank()
    }

    pub fn vacuum_vec(&self) -> FockVector {
        Vector::singleton(FockState::vacuum(self.rank()), HSeries::one(self.order))
    }

    pub fn state_vec(&self, s: FockState) -> FockVector {
        Vector::singleton(s, HSeries::one(self.order))
    }

    /// h_j as a state: beta_j(-1) vac.
    pub fn h_state(&self, j: usize) -> FockState {
        FockState::vacuum(self.rank()).with_mode(j as u8, 1)
    }

    /// e_{sign * beta_j} as a state.
    pub fn e_state(&self, j: usize, sign: i64) -> FockState {
        let mut lam = vec![0; self.rank()];
        lam[j] = sign;
        FockState::point(lam)
    }

    fn weight_ok(&self, s: &FockState) -> bool {
        s.weight(&self.data) <= self.w_max
    }

    /// Heisenberg mode action beta_j(m).
    pub fn heis_act(&self, j: usize, m: i64, v: &FockVector) -> FockVector {
        let mut out = Vector::zero(v.order());
        out.merge_lost_from(v);
        for (s, c) in v.iter() {
            match m.cmp(&0) {
                std::cmp::Ordering::Less => {
                    let ns = s.with_mode(j as u8, (-m) as u32);
                    if self.weight_ok(&ns) {
                        out.insert(ns, c.clone());
                    } else {
                        out.mark_lost(c.h_valuation());
                    }
                }
                std::cmp::Ordering::Equal => {
                    let eig = self.data.pairing(&self.data.basis(j), &s.lam);
                    if eig != 0 {
                        out.insert(s.clone(), c.scale(&rat_int(eig)));
                    }
                }
                std::cmp::Ordering::Greater => {
                    // [a(m), b(-n)] = m delta_{m,n} <a,b>: contract against each
                    // matching creation mode.
                    let mut seen: Vec<(u8, u32)> = Vec::new();
                    for (pos, &(bj, bn)) in s.modes.iter().enumerate() {
                        if bn as i64 != m || seen.contains(&(bj, bn)) {
                            continue;
                        }
                        seen.push((bj, bn));
                        let mult = s.modes.iter().filter(|&&x| x == (bj, bn)).count() as i64;
                        let pair = self.data.gram(j, bj as usize);
                        if pair == 0 {
                            continue;
                        }
                        let mut modes = s.modes.clone();
                        modes.remove(pos);
                        let ns = FockState {
                            modes,
                            lam: s.lam.clone(),
                        };
                        out.insert(ns, c.scale(&rat_int(m * pair * mult)));
                    }
                }
            }
        }
        out
    }

    /// Multiplication by e_alpha: cocycle sign and lattice translation.
    pub fn e_mult(&self, alpha: &[i64], v: &FockVector) -> FockVector {
        let mut out = Vector::zero(v.order());
        out.merge_lost_from(v);
        for (s, c) in v.iter() {
            let sign = self.data.cocycle(alpha, &s.lam);
            let mut lam = s.lam.clone();
            for (i, a) in alpha.iter().enumerate() {
                lam[i] += a;
            }
            let ns = FockState {
                modes: s.modes.clone(),
                lam,
            };
            if self.weight_ok(&ns) {
                out.insert(ns, c.scale(&rat_int(sign)));
            } else {
                out.mark_lost(c.h_valuation());
            }
        }
        out
    }

    /// Translation operator: derivation with d(beta(-n)) = n beta(-n-1) and
    /// d e_lam = lam(-1) e_lam.
    pub fn translate(&self, v: &FockVector) -> FockVector {
        let mut out = Vector::zero(v.order());
        out.merge_lost_from(v);
        for (s, c) in v.iter() {
            for (pos, &(j, n)) in s.modes.iter().enumerate() {
                if pos > 0 && s.modes[pos - 1] == (j, n) {
                    continue; // handle each distinct mode once with multiplicity
                }
                let mult = s.modes.iter().filter(|&&x| x == (j, n)).count() as i64;
                let mut modes = s.modes.clone();
                modes.remove(pos);
                let base = FockState {
                    modes,
                    lam: s.lam.clone(),
                };
                let ns = base.with_mode(j, n + 1);
                if self.weight_ok(&ns) {
                    out.insert(ns, c.scale(&rat_int(n as i64 * mult)));
                } else {
                    out.mark_lost(c.h_valuation());
                }
            }
            for i in 0..self.rank() {
                if s.lam[i] == 0 {
                    continue;
                }
                let ns = s.with_mode(i as u8, 1);
                if self.weight_ok(&ns) {
                    out.insert(ns, c.scale(&rat_int(s.lam[i])));
                } else {
                    out.mark_lost(c.h_valuation());
                }
            }
        }
        out
    }

    /// Apply a symbol u(t), t = h * translate, to a vector:
    /// sum_k u_k h^k d^k v. Used for the shift operators q^{a d}.
    pub fn apply_hd_symbol(&self, sym: &HSeries, v: &FockVector) -> FockVector {
        let order = v.order().min(sym.order());
        let mut out = Vector::zero(order);
        let mut deriv = v.truncate_order(order);
        for k in 0..=order {
            let c = sym.coeff(k);
            if !c.is_zero() {
                out = out.add(&deriv.scale(&HSeries::monomial(c, k, order)));
            }
            if k < order {
                deriv = self.translate(&deriv);
            }
        }
        out
    }

    /// E^+(alpha, z) v: exponential of creation modes, coefficients of z^d for
    /// 0 <= d <= z_hi.
    pub fn e_plus(&self, alpha: &[i64], v: &FockVector) -> FockVSeries {
        let mut out = VSeries::zero(v.order());
        // P_0 = 1; d P_d = sum_{n=1}^{d} alpha(-n) P_{d-n}
        let mut p: Vec<FockVector> = vec![v.clone()];
        for d in 1..=self.z_hi.max(0) {
            let mut acc = Vector::zero(v.order());
            for n in 1..=d {
                let mut term = p[(d - n) as usize].clone();
                term = self.heis_vec_act(alpha, -n, &term);
                acc = acc.add(&term);
            }
            p.push(acc.scale_rat(&(Rat::one() / rat_int(d))));
        }
        for (d, vec) in p.into_iter().enumerate() {
            out.insert(d as i64, vec);
        }
        out.hi = self.z_hi;
        out
    }

    /// E^-(alpha, z) v: exponential of annihilation modes; finite.
    pub fn e_minus(&self, alpha: &[i64], v: &FockVector) -> FockVSeries {
        let mut out = VSeries::zero(v.order());
        let max_depth: i64 = v
            .iter()
            .map(|(s, _)| s.mode_weight())
            .max()
            .unwrap_or(0);
        let mut p: Vec<FockVector> = vec![v.clone()];
        for d in 1..=max_depth {
            let mut acc = Vector::zero(v.order());
            for n in 1..=d {
                let mut term = p[(d - n) as usize].clone();
                term = self.heis_vec_act(alpha, n, &term).neg();
                acc = acc.add(&term);
            }
            p.push(acc.scale_rat(&(Rat::one() / rat_int(d))));
        }
        for (d, vec) in p.into_iter().enumerate() {
            out.insert(-(d as i64), vec);
        }
        out
    }

    /// alpha(m) for a composite lattice vector alpha.
    pub fn heis_vec_act(&self, alpha: &[i64], m: i64, v: &FockVector) -> FockVector {
        let mut out = Vector::zero(v.order());
        out.merge_lost_from(v);
        for (j, a) in alpha.iter().enumerate() {
            if *a == 0 {
                continue;
            }
            out = out.add(&self.heis_act(j, m, v).scale_rat(&rat_int(*a)));
        }
        out
    }

    /// Classical vertex operator of e_alpha:
    /// Y(e_alpha, z) = E^+(alpha,z) E^-(alpha,z) e_alpha z^alpha.
    ///
    /// If the lattice translation overflows the weight cap, the dropped state
    /// would have fed annihilation terms at arbitrary lower exponents, so the
    /// whole application is marked truncated.
    pub fn y_exp(&self, alpha: &[i64], v: &FockVector) -> FockVSeries {
        // Stage 1: e_alpha z^alpha, a per-state exponent shift.
        let mut staged = VSeries::zero(v.order());
        staged.hi = HI_INF;
        let mut overflowed: Option<usize> = v.lost_val();
        for (s, c) in v.iter() {
            let shift = self.data.pairing(alpha, &s.lam);
            let moved = self.e_mult(alpha, &Vector::singleton(s.clone(), c.clone()));
            overflowed = match (overflowed, moved.lost_val()) {
                (Some(a), Some(b)) => Some(a.min(b)),
                (a, b) => a.or(b),
            };
            staged.insert(shift, moved);
        }
        // Stage 2: E^-(alpha, z), convolved coefficient-wise.
        let staged = self.apply_field_stage(staged, |w| self.e_minus(alpha, w));
        // Stage 3: E^+(alpha, z).
        let mut out = self
            .apply_field_stage(staged, |w| self.e_plus(alpha, w))
            .with_cap(self.z_hi);
        if let Some(hval) = overflowed {
            let floor = out.support_lo().min(0) - self.w_max - 1;
            for n in floor..=out.hi.min(self.z_hi) {
                let order = out.order;
                let e = out.coeffs.entry(n).or_insert_with(|| Vector::zero(order));
                e.mark_lost(Some(hval));
            }
        }
        out
    }

    fn apply_field_stage<F: Fn(&FockVector) -> FockVSeries>(
        &self,
        input: FockVSeries,
        f: F,
    ) -> FockVSeries {
        let mut out = VSeries::zero(input.order);
        out.hi = input.hi;
        for (n, v) in &input.coeffs {
            let fv = f(v);
            out.hi = out.hi.min(cap(fv.hi, *n));
            for (m, w) in &fv.coeffs {
                out.insert(n + m, w.clone());
            }
        }
        let capv = out.hi;
        out.coeffs.retain(|n, _| *n <= capv);
        out
    }

    /// Classical vertex operator of the Heisenberg generator h = sum a_j b_j:
    /// Y(h, z) = sum_m h(m) z^{-m-1}.
    pub fn y_heis(&self, alpha: &[i64], v: &FockVector) -> FockVSeries {
        let mut out = VSeries::zero(v.order());
        out.hi = self.z_hi;
        // creation part: m < 0, exponent -m-1 in [0, z_hi]
        for e in 0..=self.z_hi {
            let m = -e - 1;
            out.insert(e, self.heis_vec_act(alpha, m, v));
        }
        // annihilation and zero modes: m >= 0, exponent -m-1 < 0
        let max_m: i64 = v.iter().map(|(s, _)| s.mode_weight()).max().unwrap_or(0);
        for m in 0..=max_m {
            out.insert(-m - 1, self.heis_vec_act(alpha, m, v));
        }
        out
    }

    /// Classical vertex operator of an arbitrary basis state, by normal-ordered
    /// insertion of the Heisenberg modes around Y(e_lam, z).
    pub fn y_state(&self, modes: &[(u8, u32)], lam: &[i64], v: &FockVector) -> FockVSeries {
        if modes.is_empty() {
            if lam.iter().all(|&x| x == 0) {
                // Y(vac, z) = identity
                let mut out = VSeries::zero(v.order());
                out.insert(0, v.clone());
                return out;
            }
            return self.y_exp(lam, v);
        }
        let (j, n) = modes[modes.len() - 1];
        let rest = &modes[..modes.len() - 1];
        let inner = self.y_state(rest, lam, v);
        // Insert (1/(n-1)!) d^{n-1} beta_j(z) normal-ordered around `inner`:
        // creation side acts after, annihilation side acts before (on v, which
        // requires recomputing the inner series on the contracted vector).
        let mut out = VSeries::zero(v.order());
        out.hi = inner.hi;
        // creation part: modes m <= -1 contribute at z-exponent e = -m-n >= 1-n
        for (d, w) in &inner.coeffs {
            for e in (1 - (n as i64))..=(self.z_hi - d) {
                let m = -(n as i64) - e;
                debug_assert!(m <= -1);
                let b = binom_i64(-m - 1, n as i64 - 1);
                if b.is_zero() {
                    continue;
                }
                out.insert(d + e, self.heis_act(j as usize, m, w).scale_rat(&b));
            }
        }
        // annihilation part: modes m >= 0 at z-exponent e = -m-n
        let max_m: i64 = v.iter().map(|(s, _)| s.mode_weight()).max().unwrap_or(0);
        for m in 0..=max_m {
            let contracted = self.heis_act(j as usize, m, v);
            let has_zero_mode = m == 0;
            if contracted.is_zero() && !has_zero_mode {
                continue;
            }
            if contracted.is_zero() {
                continue;
            }
            let b = binom_i64(-m - 1, n as i64 - 1);
            if b.is_zero() {
                continue;
            }
            let inner2 = self.y_state(rest, lam, &contracted);
            let e = -m - n as i64;
            out.hi = out.hi.min(cap(inner2.hi, e));
            for (d, w) in &inner2.coeffs {
                out.insert(d + e, w.scale_rat(&b));
            }
        }
        let capv = out.hi;
        out.coeffs.retain(|e, _| *e <= capv);
        out
    }

    /// Classical Y extended linearly to vectors.
    pub fn y_vector(&self, u: &FockVector, v: &FockVector) -> FockVSeries {
        let mut out = VSeries::zero(u.order().min(v.order()));
        for (s, c) in u.iter() {
            let y = self.y_state(&s.modes, &s.lam, v).scale_h(c);
            out = out.add(&y);
        }
        if let Some(l) = u.lost_val() {
            for vv in out.coeffs.values_mut() {
                vv.mark_lost(Some(l));
            }
        }
        out
    }

    /// All basis states of weight at most w (and |lam_i| bounded by the weight
    /// cap through the quadratic form; positive-definite lattices only).
    pub fn states_up_to_weight(&self, w: i64) -> Vec<FockState> {
        let rank = self.rank();
        let mut lams: Vec<Vec<i64>> = vec![vec![]];
        for _ in 0..rank {
            let mut next = Vec::new();
            for base in &lams {
                for x in -w..=w {
                    let mut v = base.clone();
                    v.push(x);
                    next.push(v);
                }
            }
            lams = next;
        }
        let mut out = Vec::new();
        for lam in lams {
            let q = self.data.pairing(&lam, &lam);
            if q < 0 || q / 2 > w {
                continue;
            }
            let budget = w - q / 2;
            let mut stacks: Vec<Vec<(u8, u32)>> = vec![vec![]];
            // enumerate multisets of modes with total weight <= budget
            fn extend(
                rank: usize,
                budget: i64,
                min: (u8, u32),
                cur: &mut Vec<(u8, u32)>,
                all: &mut Vec<Vec<(u8, u32)>>,
            ) {
                for j in 0..rank as u8 {
                    for n in 1..=budget as u32 {
                        if (j, n) < min {
                            continue;
                        }
                        cur.push((j, n));
                        all.push(cur.clone());
                        extend(rank, budget - n as i64, (j, n), cur, all);
                        cur.pop();
                    }
                }
            }
            let mut cur = Vec::new();
            let mut all = Vec::new();
            extend(rank, budget, (0, 0), &mut cur, &mut all);
            stacks.extend(all);
            for modes in stacks {
                out.push(FockState {
                    modes,
                    lam: lam.clone(),
                });
            }
        }
        out.sort();
        out.dedup();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exactnum::rat;

    fn rank1() -> LatticeCtx {
        // Q = Z a with <a,a> = 2
        LatticeCtx::new(LatticeData::new(vec![vec![2]]).unwrap(), 3, 6, -8, 8)
    }

    #[test]
    fn lattice_validation() {
        assert!(LatticeData::new(vec![vec![2, 0], vec![0, 2]]).is_ok());
        assert_eq!(
            LatticeData::new(vec![vec![1]]),
            Err(LatticeError::OddDiagonal(1))
        );
        assert_eq!(
            LatticeData::new(vec![vec![2, 1], vec![0, 2]]),
            Err(LatticeError::NotSymmetric)
        );
        assert_eq!(
            LatticeData::new(vec![vec![2, 2], vec![2, 2]]),
            Err(LatticeError::Degenerate)
        );
    }

    #[test]
    fn heisenberg_commutator_on_vacuum() {
        // a(1) a(-1) vac = <a,a> vac
        let ctx = rank1();
        let vac = ctx.vacuum_vec();
        let created = ctx.heis_act(0, -1, &vac);
        let back = ctx.heis_act(0, 1, &created);
        assert_eq!(back, vac.scale_rat(&rat_int(2)));
        // a(2) vac = 0
        assert!(ctx.heis_act(0, 2, &vac).is_zero());
    }

    #[test]
    fn zero_mode_eigenvalue() {
        let ctx = rank1();
        let e = ctx.state_vec(ctx.e_state(0, 1));
        let acted = ctx.heis_act(0, 0, &e);
        assert_eq!(acted, e.scale_rat(&rat_int(2)));
    }

    #[test]
    fn heisenberg_relations_on_weighted_states() {
        // [a(m), a(n)] = m delta_{m+n,0} <a,a> on every state of weight <= 3.
        let ctx = rank1();
        for s in ctx.states_up_to_weight(3) {
            let v = ctx.state_vec(s);
            for m in -3i64..=3 {
                for n in -3i64..=3 {
                    let lhs = ctx
                        .heis_act(0, m, &ctx.heis_act(0, n, &v))
                        .sub(&ctx.heis_act(0, n, &ctx.heis_act(0, m, &v)));
                    let expect = if m + n == 0 {
                        v.scale_rat(&rat_int(2 * m))
                    } else {
                        Vector::zero(v.order())
                    };
                    if lhs.truncated() || expect.truncated() {
                        continue;
                    }
                    assert_eq!(lhs, expect, "[a({}),a({})]", m, n);
                }
            }
        }
    }

    // Oracle: the bimultiplicative extension of the basis table computed from
    // the defining exponent sum.
    #[test]
    fn cocycle_properties() {
        let data = LatticeData::new(vec![vec![2, -1], vec![-1, 2]]).unwrap();
        let b0 = data.basis(0);
        let b1 = data.basis(1);
        assert_eq!(data.cocycle(&b0, &b0), 1); // i <= j branch
        assert_eq!(data.cocycle(&b0, &b1), 1);
        assert_eq!(data.cocycle(&b1, &b0), -1); // (-1)^{<b1,b0>} = (-1)^{-1}
        // skew: eps(a,b) eps(b,a)^{-1} = (-1)^{<a,b>}
        for a in [&b0, &b1] {
            for b in [&b0, &b1] {
                let lhs = data.cocycle(a, b) * data.cocycle(b, a);
                let rhs = if data.pairing(a, b).rem_euclid(2) == 0 {
                    1
                } else {
                    -1
                };
                assert_eq!(lhs, rhs);
            }
        }
        // rank-1 even case: eps(b, -b) = 1
        let r1 = LatticeData::new(vec![vec![2]]).unwrap();
        assert_eq!(r1.cocycle(&[1], &[-1]), 1);
    }

    #[test]
    fn e_mult_identity_and_translation() {
        let ctx = rank1();
        let v = ctx.state_vec(ctx.e_state(0, -1));
        assert_eq!(ctx.e_mult(&[0], &v), v);
        let moved = ctx.e_mult(&[1], &v);
        let vac = ctx.vacuum_vec();
        assert_eq!(moved, vac);
    }

    #[test]
    fn y_heis_creation_property() {
        // coefficient of z^0 in Y(h, z) vac is h(-1) vac
        let ctx = rank1();
        let vac = ctx.vacuum_vec();
        let y = ctx.y_heis(&[1], &vac);
        assert_eq!(y.coeff(0), ctx.state_vec(ctx.h_state(0)));
        assert!(y.coeff(-1).is_zero());
    }

    #[test]
    fn y_exp_leading_coefficient() {
        // coefficient of z^{<a,b>} in Y(e_a, z) e_b is eps(a,b) e_{a+b}
        let ctx = rank1();
        let eb = ctx.state_vec(ctx.e_state(0, 1));
        let y = ctx.y_exp(&[1], &eb);
        // <a, b> = 2
        let lead = y.coeff(2);
        let mut expect_state = FockState::point(vec![2]);
        expect_state.modes.clear();
        assert_eq!(lead, ctx.state_vec(expect_state));
        // everything below the leading power vanishes
        assert!(y.coeff(1).is_zero());
        assert!(y.coeff(-1).is_zero());
    }

    #[test]
    fn y_exp_annihilates_as_expected() {
        // (e_a)_{-1} e_{-a}: coefficient of z^0... for <a,a>=2 the z-exponent
        // of the leading term on e_{-a} is <a,-a> = -2.
        let ctx = rank1();
        let em = ctx.state_vec(ctx.e_state(0, -1));
        let y = ctx.y_exp(&[1], &em);
        assert_eq!(y.coeff(-2), ctx.vacuum_vec());
    }

    // Borcherds commutator for generator pairs on all states of weight <= 4:
    // [Y(h,z1), Y(h',z2)] = <h,h'> d_{z2} z1^{-1} delta(z2/z1), i.e. mode
    // commutators [h(m), h'(n)] = m delta <h,h'>.
    #[test]
    fn borcherds_hh_via_modes() {
        let ctx = rank1();
        for s in ctx.states_up_to_weight(4) {
            let v = ctx.state_vec(s);
            for m in -2i64..=2 {
                for n in -2i64..=2 {
                    let ab = ctx.heis_act(0, m, &ctx.heis_act(0, n, &v));
                    let ba = ctx.heis_act(0, n, &ctx.heis_act(0, m, &v));
                    let comm = ab.sub(&ba);
                    let expect = if m + n == 0 {
                        v.scale_rat(&rat_int(2 * m))
                    } else {
                        Vector::zero(v.order())
                    };
                    if comm.truncated() || ab.truncated() || ba.truncated() {
                        continue;
                    }
                    assert_eq!(comm, expect);
                }
            }
        }
    }

    // [h(m), Y(e_a, z)] = <h,a> z^m Y(e_a, z): checked coefficient-wise.
    #[test]
    fn borcherds_h_e_cross() {
        let ctx = rank1();
        let v = ctx.state_vec(ctx.e_state(0, -1));
        let y = ctx.y_exp(&[1], &v);
        for m in -2i64..=2 {
            for e in -3i64..=3 {
                // [h(m), Y]_e = h(m) y_e - (Y h(m) v)_e
                let lhs1 = ctx.heis_act(0, m, &y.coeff(e));
                let lhs2 = ctx.y_exp(&[1], &ctx.heis_act(0, m, &v)).coeff(e);
                let comm = lhs1.sub(&lhs2);
                // expect <h,a> * coefficient at e - m
                let expect = y.coeff(e - m).scale_rat(&rat_int(2));
                if comm.truncated() || expect.truncated() {
                    continue;
                }
                assert_eq!(comm, expect, "m={} e={}", m, e);
            }
        }
    }

    #[test]
    fn y_state_matches_y_heis_for_generator() {
        let ctx = rank1();
        for s in ctx.states_up_to_weight(3) {
            let v = ctx.state_vec(s);
            let a = ctx.y_heis(&[1], &v);
            let b = ctx.y_state(&[(0, 1)], &vec![0], &v);
            let capn = a.hi.min(b.hi);
            for e in -5..=capn {
                assert_eq!(a.coeff(e), b.coeff(e), "exponent {}", e);
            }
        }
    }

    #[test]
    fn translation_covariance_on_generators() {
        // Y(d u, z) = d/dz Y(u, z) for u = h and u = e_a.
        let ctx = rank1();
        let vac = ctx.vacuum_vec();
        let h = ctx.state_vec(ctx.h_state(0));
        let dh = ctx.translate(&h);
        let lhs = ctx.y_vector(&dh, &vac);
        let rhs = ctx.y_heis(&[1], &vac).d_dz();
        let capn = lhs.hi.min(rhs.hi);
        for e in -4..=capn {
            assert_eq!(lhs.coeff(e), rhs.coeff(e), "h case at {}", e);
        }
        let ea = ctx.state_vec(ctx.e_state(0, 1));
        let dea = ctx.translate(&ea);
        let target = ctx.state_vec(ctx.e_state(0, -1));
        let lhs = ctx.y_vector(&dea, &target);
        let rhs = ctx.y_exp(&[1], &target).d_dz();
        let capn = lhs.hi.min(rhs.hi).min(4);
        for e in -4..=capn {
            let l = lhs.coeff(e);
            let r = rhs.coeff(e);
            if l.truncated() || r.truncated() {
                continue;
            }
            assert_eq!(l, r, "e_a case at {}", e);
        }
    }

    #[test]
    fn skew_symmetry_sign_on_leading_terms() {
        // Y(e_a, z) e_b and Y(e_b, z) e_a leading coefficients differ by the
        // cocycle ratio (-1)^{<a,b>}.
        let data = LatticeData::new(vec![vec![2, -1], vec![-1, 2]]).unwrap();
        let ctx = LatticeCtx::new(data, 2, 6, -8, 8);
        let a = ctx.data.basis(0);
        let b = ctx.data.basis(1);
        let yab = ctx.y_exp(&a, &ctx.state_vec(FockState::point(b.clone())));
        let yba = ctx.y_exp(&b, &ctx.state_vec(FockState::point(a.clone())));
        let lead = ctx.data.pairing(&a, &b); // -1
        let ca = yab.coeff(lead);
        let cb = yba.coeff(lead);
        // both are multiples of e_{a+b}; ratio of signs is (-1)^{<a,b>} = -1
        let state = FockState::point(vec![1, 1]);
        assert_eq!(ca.coeff(&state), cb.coeff(&state).neg());
    }

    #[test]
    fn weight_cap_sets_flag() {
        let ctx = LatticeCtx::new(LatticeData::new(vec![vec![2]]).unwrap(), 2, 1, -4, 4);
        let v = ctx.state_vec(ctx.h_state(0));
        let pushed = ctx.heis_act(0, -3, &v);
        assert!(pushed.truncated());
        assert!(pushed.is_zero());
    }

    #[test]
    fn state_enumeration_counts() {
        let ctx = rank1();
        let states = ctx.states_up_to_weight(2);
        // weight 0: vac; weight 1: a(-1)vac, e_{±a}; weight 2: a(-2)vac,
        // a(-1)^2 vac, a(-1)e_{±a}... <±a,±a>/2 = 1, so e_{±a} has weight 1
        // and a(-1) e_{±a} weight 2.
        assert!(states.contains(&FockState::vacuum(1)));
        assert!(states.contains(&FockState::point(vec![1])));
        assert!(states.contains(&FockState::vacuum(1).with_mode(0, 2)));
        assert!(states
            .iter()
            .all(|s| s.weight(&ctx.data) <= 2));
        assert_eq!(
            states.len(),
            states.iter().collect::<std::collections::BTreeSet<_>>().len()
        );
    }
}

//! Quantum parafermion generators W(z) inside the level-l realization:
//! construction, regularity, commutant membership, S-invariance, and the
//! classical cross-checks against the generators of the classical
//! parafermion algebra.
//!
//! W(z) itself never divides by q - q^{-1}: the counterterms are purely
//! singular in z, so all of W(z) sits in the regular part of the exponential
//! factor times Y(x+, z) x-; the singular cancellation is verified in the
//! multiplied-through form.

use crate::exactnum::{rat, rat_int, HSeries, Rat};
use crate::lattice::{VSeries, Vector};
use crate::qaffine::{inv_z_plus_ch, AffGen, Realization, TVSeries, TVector};
use crate::qcalc::{self, QLaurentPoly};
use crate::qlattice::QlError;
use crate::report::CheckOutcome;
use crate::series::ZSeries;
use num::{One, Zero};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq, Clone)]
pub enum WError {
    #[error("level must be non-zero")]
    ZeroLevel,
    #[error(transparent)]
    Ql(#[from] QlError),
}

/// The assembled W field: the full exponential-dressed product (whose
/// singular part must cancel against the counterterms) plus the regular
/// coefficients that constitute W(z).
pub struct WField {
    pub ell: i64,
    /// exp((G h)_{-1}) Y(x+, z) x-: the full series including singular part.
    pub main: TVSeries,
    /// Regular part of `main`: the coefficients of W(z) itself.
    pub w: TVSeries,
}

/// Coefficients of the z-dependent exponent vector
/// G(d, z) h = ((1 - e^{z d})/(d [l]_{q^{d}})) h  (sl2: r_i = r = 1), as a
/// z-series of tensor vectors; the entry at z^e collects all d^k h pieces.
fn exponent_vector(r: &Realization) -> TVSeries {
    let order = r.order();
    let z_hi = r.ql.lat.z_hi;
    // B(s) = sinh(h s)/sinh(l h s): coefficients b_j h^j s^j
    let b = qcalc::sym_sinh_ratio(1, r.ell, order);
    // A(s) = (1 - e^{z s})/s = -sum_{a>=0} z^{a+1} s^a/(a+1)!
    // G(s) = A(s) B(s): coefficient of s^k is -sum_{a+j=k} z^{a+1}/(a+1)! b_j h^j
    let mut out: TVSeries = VSeries::zero(order);
    out.hi = z_hi;
    let mut dk_h: Vec<TVector> = vec![r.gen(AffGen::H).clone()];
    let kmax = (z_hi.max(0) as usize) + order;
    for _ in 0..kmax {
        dk_h.push(r.translate(dk_h.last().unwrap()));
    }
    let mut fact = Rat::one();
    for a in 0..z_hi.max(1) as usize {
        fact *= rat_int(a as i64 + 1);
        let e = a as i64 + 1; // z-exponent carried by this derivative order
        if e > z_hi {
            break;
        }
        for j in 0..=order {
            let bj = b.coeff(j);
            if bj.is_zero() {
                continue;
            }
            let k = a + j;
            if k >= dk_h.len() {
                continue;
            }
            let c = HSeries::monomial(-&bj / &fact, j, order);
            out.insert(e, dk_h[k].scale(&c));
        }
    }
    out
}

/// Build the W field in the given realization.
pub fn build_w(r: &Realization) -> Result<WField, WError> {
    if r.ell == 0 {
        return Err(WError::ZeroLevel);
    }
    let order = r.order();
    let base = r.y(r.gen(AffGen::Xp), r.gen(AffGen::Xm))?;
    let expo = exponent_vector(r);
    // exp((expo)_{-1}) base: each application raises the minimum z-exponent,
    // so the loop is bounded by the window.
    let mut acc = base.clone();
    let mut term = base;
    let mut m = 0i64;
    loop {
        m += 1;
        let mut next: TVSeries = VSeries::zero(order);
        next.hi = term.hi;
        for (e1, g) in &expo.coeffs {
            for (e2, x) in &term.coeffs {
                if e1 + e2 > next.hi {
                    continue;
                }
                let moved = r.mode(g, -1, x)?;
                next.insert(e1 + e2, moved);
            }
        }
        if next.coeffs.values().all(|v| v.is_zero()) || m > r.ql.lat.z_hi.max(1) {
            break;
        }
        let inv = Rat::one() / rat_int(m);
        next.coeffs = next
            .coeffs
            .iter()
            .map(|(n, v)| (*n, v.scale_rat(&inv)))
            .collect();
        term = next;
        acc = acc.add(&term);
        if term.coeffs.is_empty() {
            break;
        }
    }
    let (_, reg) = acc.split_sing();
    Ok(WField {
        ell: r.ell,
        main: acc,
        w: reg,
    })
}

impl WField {
    /// W(0): the z^0 coefficient (the counterterms are purely singular).
    pub fn at_zero(&self) -> TVector {
        self.w.coeff(0)
    }

    /// W(-2 l h): evaluate the regular series at z = -2 l h.
    pub fn at_minus_2lh(&self) -> Option<TVector> {
        self.w.eval_at_h(&rat_int(-2 * self.ell))
    }
}

/// f0(2(1+l)h)^{1/2} f0(2(1-l)h)^{-1/2}: the counterterm normalization.
fn counterterm_norm(ell: i64, order: usize) -> HSeries {
    qcalc::sym_f0(2 * (1 + ell), order)
        .mul(&qcalc::sym_f0(2 * (1 - ell), order).inv().expect("f0 unit"))
        .nth_root(2)
        .expect("f0 ratio is a unit square")
}

/// Regularity Sing_z W(z) = 0, in the multiplied-through form
/// (q - q^{-1}) Sing(main) = vac z^{-1} - norm vac (z + 2 l h)^{-1}.
pub fn check_regularity(r: &Realization, w: &WField) -> CheckOutcome {
    let order = r.order();
    let qdiff = QLaurentPoly::monomial(1, 1)
        .sub(&QLaurentPoly::monomial(-1, 1))
        .to_scalar(order);
    let (sing, _) = w.main.split_sing();
    let norm = counterterm_norm(w.ell, order);
    let mut expect: TVSeries = VSeries::zero(order);
    expect.insert(-1, r.vac());
    let geom = inv_z_plus_ch(2 * w.ell, order);
    for (n, c) in geom.iter() {
        expect.insert(*n, r.vac().scale(&c.mul(&norm)).neg());
    }
    let mut lhs: TVSeries = VSeries::zero(order);
    lhs.hi = sing.hi;
    for (n, v) in &sing.coeffs {
        lhs.insert(*n, v.scale(&qdiff));
    }
    let diff = lhs.sub(&expect);
    for n in -(order as i64) - 3..0 {
        if n > diff.hi {
            break;
        }
        if !diff.coeff(n).is_zero() {
            return CheckOutcome::fail(format!("Sing_z W(z) survives at z^{}", n));
        }
    }
    CheckOutcome::pass()
}

/// Commutant membership: Y(h, z)^- v = 0.
pub fn check_commutant(r: &Realization, v: &TVector) -> Result<CheckOutcome, WError> {
    let sing = r.y_minus(r.gen(AffGen::H), v)?;
    for (n, x) in &sing.coeffs {
        if !x.is_zero() {
            return Ok(CheckOutcome::fail(format!(
                "Y(h,z)^- does not vanish at z^{}",
                n
            )));
        }
    }
    Ok(CheckOutcome::pass())
}

/// S-invariance: the composite twisting against a level-1 partner generator
/// fixes v (x) u for u in {h, x+, x-}.
pub fn check_s_invariance(
    r: &Realization,
    v: &TVector,
    partner: AffGen,
) -> Result<CheckOutcome, WError> {
    let r1 = Realization::level1(r.order(), r.ql.lat.w_max, r.ql.lat.z_lo, r.ql.lat.z_hi)?;
    let partner_states: Vec<_> = r1.gen(partner).iter().map(|(s, _)| s[0].clone()).collect();
    for p in partner_states {
        let rows = r.s_composite(v, &p)?;
        let mut acc: std::collections::BTreeMap<
            (Vec<crate::lattice::FockState>, crate::lattice::FockState),
            ZSeries,
        > = std::collections::BTreeMap::new();
        for (head, pp, g) in rows {
            let e = acc
                .entry((head, pp))
                .or_insert_with(|| ZSeries::zero(r.order()));
            *e = e.add(&g);
        }
        for ((head, pp), g) in &acc {
            let expect = if pp == &p {
                ZSeries::constant(v.coeff(head))
            } else {
                ZSeries::zero(r.order())
            };
            let d = g.sub(&expect);
            let cap = d.hi().min(4);
            for n in r.ql.lat.z_lo..=cap {
                if !d.coeff(n).is_zero() {
                    return Ok(CheckOutcome::fail(format!(
                        "S moves the W coefficient against {:?} at z^{}",
                        partner, n
                    )));
                }
            }
        }
    }
    Ok(CheckOutcome::pass())
}

/// Classical parafermion generator W^2 = (x+)_{-1} x- - (1/2) dh
/// - (1/2l) h_{-1} h, computed from the realized modes.
pub fn classical_w2(r: &Realization) -> Result<TVector, WError> {
    let h = r.gen(AffGen::H);
    let x1 = r.mode(r.gen(AffGen::Xp), -1, r.gen(AffGen::Xm))?;
    let dh = r.translate(h);
    let hh = r.mode(h, -1, h)?;
    Ok(x1
        .sub(&dh.scale_rat(&rat(1, 2)))
        .sub(&hh.scale_rat(&rat(1, 2 * r.ell))))
}

/// Classical W^3 = (x+)_{-2}x- - (x+)_{-1} d x- - (2/l) h_{-1}(x+)_{-1}x-
/// + (1/6) d^2 h + (1/l) h_{-1} d h + (2/3l^2) h_{-1}^2 h   (sl2 values).
pub fn classical_w3(r: &Realization) -> Result<TVector, WError> {
    let h = r.gen(AffGen::H);
    let xp = r.gen(AffGen::Xp);
    let xm = r.gen(AffGen::Xm);
    let ell = r.ell;
    let t1 = r.mode(xp, -2, xm)?;
    let t2 = r.mode(xp, -1, &r.translate(xm))?;
    let t3 = r.mode(h, -1, &r.mode(xp, -1, xm)?)?;
    let t4 = r.translate(&r.translate(h));
    let t5 = r.mode(h, -1, &r.translate(h))?;
    let t6 = r.mode(h, -1, &r.mode(h, -1, h)?)?;
    Ok(t1
        .sub(&t2)
        .sub(&t3.scale_rat(&rat(2, ell)))
        .add(&t4.scale_rat(&rat(1, 6)))
        .add(&t5.scale_rat(&rat(1, ell)))
        .add(&t6.scale_rat(&rat(2, 3 * ell * ell))))
}

/// pi(W(0)) = W^2 at h = 0.
pub fn check_classical_w2(r: &Realization, w: &WField) -> Result<CheckOutcome, WError> {
    let lhs = w.at_zero().h_layer0();
    let rhs = classical_w2(r)?.h_layer0();
    if lhs.sub(&rhs).is_zero() {
        Ok(CheckOutcome::pass())
    } else {
        Ok(CheckOutcome::fail("pi(W(0)) differs from W^2"))
    }
}

/// pi((W(0) - W(-2 l h)) / (l h)) = d W^2 + W^3 at h = 0.
pub fn check_classical_w3(r: &Realization, w: &WField) -> Result<CheckOutcome, WError> {
    let at0 = w.at_zero();
    let at_shift = match w.at_minus_2lh() {
        Some(v) => v,
        None => return Ok(CheckOutcome::inconclusive("window too small for W(-2lh)")),
    };
    let num = at0.sub(&at_shift);
    let quotient = match num.div_h(1) {
        Ok(v) => v.scale_rat(&rat(1, r.ell)),
        Err(_) => return Ok(CheckOutcome::fail("W(0) - W(-2lh) is not O(h)")),
    };
    let lhs = quotient.h_layer0();
    let rhs = r
        .translate(&classical_w2(r)?)
        .add(&classical_w3(r)?)
        .h_layer0()
        .truncate_order(lhs.order());
    if lhs.sub(&rhs.truncate_order(lhs.order())).is_zero() {
        Ok(CheckOutcome::pass())
    } else {
        Ok(CheckOutcome::fail(
            "difference quotient does not reduce to dW^2 + W^3",
        ))
    }
}

/// Closed form of W(0) (multiplied through by q - q^{-1}):
/// (q - q^{-1})(W(0) - (x+)_{-1}x-) =
/// -(E_l(h) - norm vac)/(2 l h) - ([l]_{q^d})^{-1} h.
pub fn check_w0_closed_form(r: &Realization, w: &WField) -> Result<CheckOutcome, WError> {
    let order = r.order();
    let qdiff = QLaurentPoly::monomial(1, 1)
        .sub(&QLaurentPoly::monomial(-1, 1))
        .to_scalar(order);
    let x1 = r.mode(r.gen(AffGen::Xp), -1, r.gen(AffGen::Xm))?;
    let lhs = w.at_zero().sub(&x1).scale(&qdiff);
    let norm = counterterm_norm(r.ell, order);
    let e = r.e_ell_vec()?.clone();
    let num = e.sub(&r.vac().scale(&norm));
    let first = match num.div_h(1) {
        Ok(v) => v.scale_rat(&rat(-1, 2 * r.ell)),
        Err(_) => return Ok(CheckOutcome::fail("E_l(h) - norm vac is not O(h)")),
    };
    // ([l]_{q^d})^{-1} h: the inverse q-integer symbol applied to h
    let inv_qint = qcalc::sym_sinh_ratio(1, r.ell, order);
    let second = r.apply_symbol(&inv_qint, r.gen(AffGen::H), r.factors());
    let rhs = first.sub(&second.truncate_order(first.order()));
    let diff = lhs.truncate_order(rhs.order()).sub(&rhs);
    if diff.is_zero() {
        Ok(CheckOutcome::pass())
    } else {
        Ok(CheckOutcome::fail(format!(
            "W(0) closed form differs in {} terms",
            diff.iter().count()
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::Status;

    #[test]
    fn w_field_level1() {
        let r = Realization::level1(3, 6, -8, 8).unwrap();
        let w = build_w(&r).unwrap();
        let out = check_regularity(&r, &w);
        assert_eq!(out.status, Status::Pass, "{:?}", out.detail);
        for n in 0..=2 {
            let v = w.w.coeff(n);
            if v.is_zero() {
                continue;
            }
            let out = check_commutant(&r, &v).unwrap();
            assert_eq!(out.status, Status::Pass, "coefficient {}: {:?}", n, out.detail);
        }
        // control: h itself is not in the commutant
        let out = check_commutant(&r, r.gen(AffGen::H)).unwrap();
        assert_eq!(out.status, Status::Fail);
        let out = check_commutant(&r, &r.vac()).unwrap();
        assert_eq!(out.status, Status::Pass);
    }

    #[test]
    fn w_classical_limit_level1() {
        let r = Realization::level1(3, 6, -8, 8).unwrap();
        let w = build_w(&r).unwrap();
        let out = check_classical_w2(&r, &w).unwrap();
        assert_eq!(out.status, Status::Pass, "{:?}", out.detail);
    }

    #[test]
    fn w0_closed_form_level1() {
        let r = Realization::level1(4, 6, -8, 8).unwrap();
        let w = build_w(&r).unwrap();
        let out = check_w0_closed_form(&r, &w).unwrap();
        assert_eq!(out.status, Status::Pass, "{:?}", out.detail);
    }
}

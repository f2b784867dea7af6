//! Higher verification suites on the level realization: coproduct identities,
//! q-binomial expansions, composite twisting closed forms, normal-ordered
//! products and the lattice-embedding axioms.

use super::realization::{transpose_bi, Realization, TBiVSeries, TState, TVSeries, TVector};
use super::AffGen;
use crate::exactnum::{rat_int, HSeries, Rat};
use crate::lattice::{BiVSeries, FockState, VSeries, Vector};
use crate::qcalc::{self, QLaurentPoly};
use crate::qlattice::QlError;
use crate::report::CheckOutcome;
use crate::series::{iota_embed, BiSeries, IotaArg, ZSeries, HI_INF};
use num::{One, Zero};
use std::collections::BTreeMap;

/// The scalar of Prop. delta-int-: the coefficient of the t-th term of
/// (Delta(x^-))_{-1}^k (vac (x) vac), in the product form that stays
/// well-defined at t = k:
/// prod_{a=1}^{k-1} f0(2 a h) prod_{a=1}^{t-1} f0(2 a h)^{-1}
/// prod_{a=1}^{k-t-1} f0(2 a h)^{-1} binom(k, t)_q.
pub fn qbinom_scalar_product_form(k: u32, t: u32, order: usize) -> HSeries {
    let mut acc = HSeries::one(order);
    for a in 1..k as i64 {
        acc = acc.mul(&qcalc::sym_f0(2 * a, order));
    }
    for a in 1..t as i64 {
        acc = acc.mul(&qcalc::sym_f0(2 * a, order).inv().expect("f0 unit"));
    }
    for a in 1..(k - t) as i64 {
        acc = acc.mul(&qcalc::sym_f0(2 * a, order).inv().expect("f0 unit"));
    }
    acc.mul(&qcalc::q_binom(k as i64, t, 1, order))
}

/// The displayed closed form f0(2 t h) binom(k-1,t)_q binom(k,t)_q
/// binom(k-1,t)^{-1}, defined for t < k.
pub fn qbinom_scalar_displayed(k: u32, t: u32, order: usize) -> HSeries {
    let b_plain = crate::series::binom_i64(k as i64 - 1, t as i64);
    qcalc::sym_f0(2 * t as i64, order)
        .mul(&qcalc::q_binom(k as i64 - 1, t, 1, order))
        .mul(&qcalc::q_binom(k as i64, t, 1, order))
        .scale(&(Rat::one() / b_plain))
}

impl Realization {
    /// (x^-)_{-1}^k vac in a single level-1 factor, as a lattice vector.
    fn xm_power_level1(&self, k: u32) -> Result<Vector<FockState>, QlError> {
        let mut acc = self.ql.lat.vacuum_vec();
        let xm = self.ql.lat.state_vec(self.ql.lat.e_state(0, -1));
        for _ in 0..k {
            let y = self.ql.y_eta_vector(&xm, &acc)?;
            acc = y.coeff(0);
        }
        Ok(acc)
    }

    /// q-binomial expansion (criterion: Prop. delta-int-):
    /// (Delta(x^-))_{-1}^k (vac (x) vac) = sum_t (x^-)_{-1}^{k-t} vac (x)
    /// q^{2(k-t) d}(x^-)_{-1}^t vac * scalar(k, t), at l = l' = 1.
    pub fn check_qbinom(&self, k: u32) -> Result<CheckOutcome, QlError> {
        assert_eq!(self.ell, 2, "qbinom expansion is stated on the 2-factor split");
        let order = self.order();
        // sub-check: the displayed scalar equals the product form for t < k
        for t in 0..k {
            let a = qbinom_scalar_displayed(k, t, order);
            let b = qbinom_scalar_product_form(k, t, order);
            if a != b {
                return Ok(CheckOutcome::fail(format!(
                    "displayed q-binomial scalar differs from product form at (k,t)=({},{})",
                    k, t
                )));
            }
        }
        let lhs = self.minus_one_power(self.gen(AffGen::Xm), k)?;
        let mut rhs: TVector = Vector::zero(order);
        for t in 0..=k {
            let scal = qbinom_scalar_product_form(k, t, order);
            let left = self.xm_power_level1(k - t)?;
            let right = self.xm_power_level1(t)?;
            let r1 = Realization::level1(order, self.ql.lat.w_max, self.ql.lat.z_lo, self.ql.lat.z_hi)?;
            let right_t: TVector = right.map_states(|s| vec![s.clone()]);
            let shifted = r1.apply_symbol(
                &qcalc::sym_exp(2 * (k - t) as i64, order),
                &right_t,
                1,
            );
            for (ls, lc) in left.iter() {
                for (rs, rc) in shifted.iter() {
                    let mut state: TState = vec![ls.clone()];
                    state.extend(rs.clone());
                    rhs.insert(state, lc.mul(rc).mul(&scal));
                }
            }
        }
        let diff = lhs.sub(&rhs);
        if diff.is_zero() {
            Ok(CheckOutcome::pass())
        } else {
            Ok(CheckOutcome::fail(format!(
                "q-binomial expansion defect at k = {} ({} terms differ)",
                k,
                diff.iter().count()
            )))
        }
    }

    /// Coassociativity: building level l+2 by extending twice must agree with
    /// the generator images of (1 (x) Delta) composed with Delta, computed
    /// directly from the split formulas.
    pub fn check_coassoc(&self) -> Result<CheckOutcome, QlError> {
        let order = self.order();
        let (w_max, z_lo, z_hi) = (self.ql.lat.w_max, self.ql.lat.z_lo, self.ql.lat.z_hi);
        // left-nested: (Delta (x) 1) Delta on X^3 -> (X^1 (x) X^1) (x) X^1
        let left = Realization::level(3, order, w_max, z_lo, z_hi)?;
        // right-nested: (1 (x) Delta) Delta: realize the level-2 block on the
        // right. Delta_{1,2}(h) = q^{-2d} h (x) vacvac + vac (x) q^{d} h_{(2)},
        // and similarly for x^pm with E_1 in the left slot.
        let r1 = Realization::level1(order, w_max, z_lo, z_hi)?;
        let r2 = Realization::level(2, order, w_max, z_lo, z_hi)?;
        let join = |a: &Vector<FockState>, b: &TVector| -> TVector {
            let mut out = Vector::zero(order);
            for (sa, ca) in a.iter() {
                for (sb, cb) in b.iter() {
                    let mut t: TState = vec![sa.clone()];
                    t.extend(sb.clone());
                    out.insert(t, ca.mul(cb));
                }
            }
            out
        };
        let unwrap1 = |v: &TVector| -> Vector<FockState> {
            let mut out = Vector::zero(order);
            for (s, c) in v.iter() {
                out.insert(s[0].clone(), c.clone());
            }
            out
        };
        let vac1 = self.ql.lat.vacuum_vec();
        let vac2 = r2.vac();
        // h: q^{-r l' d} h (x) vac + vac (x) q^{r l d} h, with l = 1, l' = 2
        let h_a = join(
            &unwrap1(&r1.apply_symbol(&qcalc::sym_exp(-2, order), r1.gen(AffGen::H), 1)),
            &vac2,
        );
        let h_b = join(
            &vac1,
            &r2.apply_symbol(&qcalc::sym_exp(1, order), r2.gen(AffGen::H), 2),
        );
        let h_right = h_a.add(&h_b);
        // x+: x+ (x) vacvac + q^{2d} E_1(h) (x) q^{2d} x+^{(2)}
        let e1 = unwrap1(r1.e_ell_vec()?);
        let xp_a = join(&unwrap1(r1.gen(AffGen::Xp)), &vac2);
        let xp_b = join(
            &unwrap1(&{
                let t: TVector = e1.map_states(|s| vec![s.clone()]);
                r1.apply_symbol(&qcalc::sym_exp(2, order), &t, 1)
            }),
            &r2.apply_symbol(&qcalc::sym_exp(2, order), r2.gen(AffGen::Xp), 2),
        );
        let xp_right = xp_a.add(&xp_b);
        // x-: x- (x) vacvac + vac (x) x-^{(2)}
        let xm_right = join(&unwrap1(r1.gen(AffGen::Xm)), &vac2)
            .add(&join(&vac1, r2.gen(AffGen::Xm)));
        for (name, lhs, rhs) in [
            ("h", left.gen(AffGen::H).clone(), h_right),
            ("x+", left.gen(AffGen::Xp).clone(), xp_right),
            ("x-", left.gen(AffGen::Xm).clone(), xm_right),
        ] {
            if !lhs.sub(&rhs).is_zero() {
                return Ok(CheckOutcome::fail(format!(
                    "coassociativity defect on generator {}",
                    name
                )));
            }
        }
        Ok(CheckOutcome::pass())
    }

    /// E-factorization: E_{l+1}(Delta(h)) = q^{-2 r l' d_left} E_l(h) (x) E_1(h)
    /// at l' = 1 (left block shift only).
    pub fn check_e_factorization(&self) -> Result<CheckOutcome, QlError> {
        let order = self.order();
        let (w_max, z_lo, z_hi) = (self.ql.lat.w_max, self.ql.lat.z_lo, self.ql.lat.z_hi);
        let big = Realization::level(self.ell + 1, order, w_max, z_lo, z_hi)?;
        let lhs = big.e_ell_vec()?.clone();
        let small = Realization::level(self.ell, order, w_max, z_lo, z_hi)?;
        let r1 = Realization::level1(order, w_max, z_lo, z_hi)?;
        let e_small = small.e_ell_vec()?.clone();
        let e_one = r1.e_ell_vec()?.clone();
        // q^{-2 r l' d} acting on the left block only (l' = 1)
        let shifted = small.apply_symbol(&qcalc::sym_exp(-2, order), &e_small, small.factors());
        let mut rhs: TVector = Vector::zero(order);
        for (ls, lc) in shifted.iter() {
            for (rs, rc) in e_one.iter() {
                let mut t = ls.clone();
                t.extend(rs.clone());
                rhs.insert(t, lc.mul(rc));
            }
        }
        if lhs.sub(&rhs).is_zero() {
            Ok(CheckOutcome::pass())
        } else {
            Ok(CheckOutcome::fail("E-factorization defect"))
        }
    }

    /// Closed-form scalar of S_{l,l'} on generator pairs (sl2):
    /// kind 0 (h,h): d^2 log f^{[2]_q [l]_q [l']_q (q - q^{-1})};
    /// kind 1 (x^e (x) h): +- d log f^{[2]_q [l']_q (q - q^{-1})};
    /// kind 2 (h (x) x^e): -+ d log f^{[2]_q [l]_q (q - q^{-1})};
    /// kind 3 (x^{e1} (x) x^{e2}): f^{q^{-2 e1 e2} - q^{2 e1 e2}}.
    pub fn s_levels_scalar(
        &self,
        kind: u8,
        ell: i64,
        ellp: i64,
        signs: (i64, i64),
        hi: i64,
    ) -> ZSeries {
        let order = self.order();
        let qdiff = QLaurentPoly::monomial(1, 1).sub(&QLaurentPoly::monomial(-1, 1));
        match kind {
            0 => {
                let g = QLaurentPoly::qint(2, 1)
                    .mul(&QLaurentPoly::qint(ell, 1))
                    .mul(&QLaurentPoly::qint(ellp, 1))
                    .mul(&qdiff);
                qcalc::d2log_f_power(&g, hi, order)
            }
            1 => {
                let g = QLaurentPoly::qint(2, 1)
                    .mul(&QLaurentPoly::qint(ellp, 1))
                    .mul(&qdiff);
                qcalc::dlog_f_power(&g, hi, order).scale_rat(&rat_int(signs.0))
            }
            2 => {
                let g = QLaurentPoly::qint(2, 1)
                    .mul(&QLaurentPoly::qint(ell, 1))
                    .mul(&qdiff);
                qcalc::dlog_f_power(&g, hi, order).scale_rat(&rat_int(-signs.1))
            }
            3 => {
                let m = 2 * signs.0 * signs.1;
                let g = QLaurentPoly::monomial(-m, 1).sub(&QLaurentPoly::monomial(m, 1));
                let f = qcalc::f_series(hi + order as i64 + 2, order);
                qcalc::power_qexp_mult(&f, &g)
                    .expect("f-power")
                    .with_cap(hi)
            }
            _ => unreachable!(),
        }
    }

    /// Rows of the composite pairwise S applied to (v (x) partner state),
    /// collapsed per (tensor-state, partner-state).
    fn s_rows_collapsed(
        &self,
        v: &TVector,
        partner: &FockState,
    ) -> Result<BTreeMap<(TState, FockState), ZSeries>, QlError> {
        let mut acc: BTreeMap<(TState, FockState), ZSeries> = BTreeMap::new();
        for (head, p, g) in self.s_composite(v, partner)? {
            let e = acc
                .entry((head, p))
                .or_insert_with(|| ZSeries::zero(self.order()));
            *e = e.add(&g);
        }
        acc.retain(|_, g| !g.is_zero());
        Ok(acc)
    }

    /// Compare composite S rows against "identity + scalar * (a (x) b)" rows.
    fn compare_rows(
        &self,
        rows: &BTreeMap<(TState, FockState), ZSeries>,
        expect: &BTreeMap<(TState, FockState), ZSeries>,
        label: &str,
    ) -> CheckOutcome {
        let zero = ZSeries::zero(self.order());
        let mut keys: Vec<_> = rows.keys().chain(expect.keys()).collect();
        keys.sort();
        keys.dedup();
        for k in keys {
            let l = rows.get(k).unwrap_or(&zero);
            let r = expect.get(k).unwrap_or(&zero);
            let cap = l.common_cap(r).min(4);
            if let Some((n, d)) = l.first_discrepancy(r, self.ql.lat.z_lo, cap) {
                return CheckOutcome::fail(format!("{label}: defect at z^{}: {}", n, d));
            }
        }
        CheckOutcome::pass()
    }

    fn expect_rows(
        &self,
        base: &TVector,
        partner: &FockState,
        extra: Option<(&TVector, &FockState, ZSeries)>,
    ) -> BTreeMap<(TState, FockState), ZSeries> {
        let mut out: BTreeMap<(TState, FockState), ZSeries> = BTreeMap::new();
        for (s, c) in base.iter() {
            let e = out
                .entry((s.clone(), partner.clone()))
                .or_insert_with(|| ZSeries::zero(self.order()));
            *e = e.add(&ZSeries::constant(c.clone()));
        }
        if let Some((v, p, g)) = extra {
            for (s, c) in v.iter() {
                let e = out
                    .entry((s.clone(), p.clone()))
                    .or_insert_with(|| ZSeries::zero(self.order()));
                *e = e.add(&g.scale(c));
            }
        }
        out.retain(|_, g| !g.is_zero());
        out
    }

    /// Composite S on realized generator pairs against the closed
    /// S_{l,1} table: the Delta-compatibility of the twisting operators.
    pub fn check_s_delta_compat(&self) -> Result<CheckOutcome, QlError> {
        let order = self.order();
        let r1 = Realization::level1(order, self.ql.lat.w_max, self.ql.lat.z_lo, self.ql.lat.z_hi)?;
        let hi = self.ql.lat.z_hi;
        let part_h = r1.gen(AffGen::H).iter().next().unwrap().0[0].clone();
        let part_xp = r1.gen(AffGen::Xp).iter().next().unwrap().0[0].clone();
        let part_xm = r1.gen(AffGen::Xm).iter().next().unwrap().0[0].clone();
        let vac_p = FockState::vacuum(1);
        let _ = vac_p;
        let mut out = CheckOutcome::pass();
        // (h (x) h)
        let rows = self.s_rows_collapsed(self.gen(AffGen::H), &part_h)?;
        let scal = self.s_levels_scalar(0, self.ell, 1, (0, 0), hi);
        let expect = self.expect_rows(
            self.gen(AffGen::H),
            &part_h,
            Some((&self.vac(), &FockState::vacuum(1), scal)),
        );
        out = out.merge(self.compare_rows(&rows, &expect, "S(h,h)"));
        // (x^e (x) h)
        for (sign, x) in [(1i64, AffGen::Xp), (-1, AffGen::Xm)] {
            let rows = self.s_rows_collapsed(self.gen(x), &part_h)?;
            let scal = self.s_levels_scalar(1, self.ell, 1, (sign, 0), hi);
            let expect = self.expect_rows(
                self.gen(x),
                &part_h,
                Some((self.gen(x), &FockState::vacuum(1), scal)),
            );
            out = out.merge(self.compare_rows(&rows, &expect, "S(x,h)"));
        }
        // (h (x) x^e)
        for (sign, p) in [(1i64, &part_xp), (-1, &part_xm)] {
            let rows = self.s_rows_collapsed(self.gen(AffGen::H), p)?;
            let scal = self.s_levels_scalar(2, self.ell, 1, (0, sign), hi);
            let expect = self.expect_rows(
                self.gen(AffGen::H),
                p,
                Some((&self.vac(), p, scal)),
            );
            out = out.merge(self.compare_rows(&rows, &expect, "S(h,x)"));
        }
        // (x^{e1} (x) x^{e2})
        for (s1, x) in [(1i64, AffGen::Xp), (-1, AffGen::Xm)] {
            for (s2, p) in [(1i64, &part_xp), (-1, &part_xm)] {
                let rows = self.s_rows_collapsed(self.gen(x), p)?;
                let scal = self.s_levels_scalar(3, self.ell, 1, (s1, s2), hi);
                let mut expect: BTreeMap<(TState, FockState), ZSeries> = BTreeMap::new();
                for (s, c) in self.gen(x).iter() {
                    expect.insert((s.clone(), p.clone()), scal.scale(c));
                }
                out = out.merge(self.compare_rows(&rows, &expect, "S(x,x)"));
            }
        }
        Ok(out)
    }

    /// Composite S on (E_l(h) (x) h) against the derived closed form:
    /// E (x) h + E (x) vac (x) d log f^{-[2]_q [1]_q [l]_q (q-q^{-1})^2 q^{-l}}.
    pub fn check_s_composite_e(&self) -> Result<CheckOutcome, QlError> {
        let order = self.order();
        let r1 = Realization::level1(order, self.ql.lat.w_max, self.ql.lat.z_lo, self.ql.lat.z_hi)?;
        let part_h = r1.gen(AffGen::H).iter().next().unwrap().0[0].clone();
        let e = self.e_ell_vec()?.clone();
        let rows = self.s_rows_collapsed(&e, &part_h)?;
        let g = QLaurentPoly::qint(2, 1)
            .mul(&QLaurentPoly::qint(1, 1))
            .mul(&QLaurentPoly::qint(self.ell, 1))
            .mul(&{
                let d = QLaurentPoly::monomial(1, 1).sub(&QLaurentPoly::monomial(-1, 1));
                d.mul(&d)
            })
            .mul(&QLaurentPoly::monomial(-self.ell, 1))
            .neg();
        let scal = qcalc::dlog_f_power(&g, self.ql.lat.z_hi, order);
        let expect = self.expect_rows(&e, &part_h, Some((&e, &FockState::vacuum(1), scal)));
        Ok(self.compare_rows(&rows, &expect, "S(E_l, h)"))
    }

    /// Composite S on (f_1^pm (x) h): the derived closed form
    /// f (x) h +- f (x) vac (x) d log f^{[2]_q [l]_q (q - q^{-1})}.
    pub fn check_s_composite_f1_h(&self, sign: i64) -> Result<CheckOutcome, QlError> {
        let order = self.order();
        let r1 = Realization::level1(order, self.ql.lat.w_max, self.ql.lat.z_lo, self.ql.lat.z_hi)?;
        let part_h = r1.gen(AffGen::H).iter().next().unwrap().0[0].clone();
        let f1 = self.f1(sign, true)?;
        let rows = self.s_rows_collapsed(&f1, &part_h)?;
        let g = QLaurentPoly::qint(2, 1)
            .mul(&QLaurentPoly::qint(self.ell, 1))
            .mul(&QLaurentPoly::monomial(1, 1).sub(&QLaurentPoly::monomial(-1, 1)));
        let scal = qcalc::dlog_f_power(&g, self.ql.lat.z_hi, order).scale_rat(&rat_int(sign));
        let expect = self.expect_rows(&f1, &part_h, Some((&f1, &FockState::vacuum(1), scal)));
        Ok(self.compare_rows(&rows, &expect, "S(f1, h)"))
    }

    /// Composite S on (f_1^- (x) x^+): scalar
    /// f(z)^{q^{l+1} + q^{l-1} - q^{1-l} - q^{-l-1}}.
    pub fn check_s_composite_f1_f1(&self) -> Result<CheckOutcome, QlError> {
        let order = self.order();
        let r1 = Realization::level1(order, self.ql.lat.w_max, self.ql.lat.z_lo, self.ql.lat.z_hi)?;
        // the level-1 partner f_1^+ is x_1^+ itself up to normalization, so
        // the scalar can be checked against the bare generator
        let part = r1.gen(AffGen::Xp).iter().next().unwrap().0[0].clone();
        let f1 = self.f1(-1, true)?;
        let rows = self.s_rows_collapsed(&f1, &part)?;
        let ell = self.ell;
        let g = QLaurentPoly::monomial(ell + 1, 1)
            .add(&QLaurentPoly::monomial(ell - 1, 1))
            .sub(&QLaurentPoly::monomial(1 - ell, 1))
            .sub(&QLaurentPoly::monomial(-ell - 1, 1));
        let f = qcalc::f_series(self.ql.lat.z_hi + order as i64 + 2, order);
        let scal = qcalc::power_qexp_mult(&f, &g)
            .map_err(QlError::Series)?
            .with_cap(self.ql.lat.z_hi);
        let mut expect: BTreeMap<(TState, FockState), ZSeries> = BTreeMap::new();
        for (s, c) in f1.iter() {
            expect.insert((s.clone(), part.clone()), scal.scale(c));
        }
        Ok(self.compare_rows(&rows, &expect, "S(f1-, x+)"))
    }

    /// h-tilde-plus at z = c h: the creation half of the E_l exponent,
    /// -q^{-l dz} 2h f0(2h dz) [1]_{q^{dz}} h^+(z), evaluated at z = c h.
    fn h_tilde_plus_at(&self, c: &Rat, v: &TVector) -> Result<TVector, QlError> {
        let order = self.order();
        let hv = self.y(self.gen(AffGen::H), v)?;
        let (_, reg) = hv.split_sing();
        let sym = qcalc::sym_exp(-self.ell, order)
            .mul(&qcalc::sym_f0(2, order))
            .mul(&qcalc::sym_sinh_ratio(1, 1, order));
        // apply the symbol in h d/dz to the regular series, then evaluate
        let mut applied: TVSeries = VSeries::zero(order);
        applied.hi = reg.hi;
        let mut deriv = reg;
        for k in 0..=order {
            let ck = sym.coeff(k);
            if !ck.is_zero() {
                let mut part: TVSeries = VSeries::zero(order);
                part.hi = deriv.hi;
                for (n, w) in &deriv.coeffs {
                    part.insert(*n, w.scale(&HSeries::monomial(ck.clone(), k, order)));
                }
                applied = applied.add(&part);
            }
            if k < order {
                deriv = deriv.d_dz();
            }
        }
        let out = applied
            .eval_at_h(c)
            .ok_or(QlError::Series(crate::series::SeriesError::WindowMiss(0)))?;
        Ok(out
            .scale(&HSeries::monomial(rat_int(-2), 1, order)))
    }

    fn exp_h_tilde_plus_at(&self, c: &Rat, v: &TVector) -> Result<TVector, QlError> {
        let mut acc = v.clone();
        let mut term = v.clone();
        for m in 1..=self.order() as i64 {
            term = self
                .h_tilde_plus_at(c, &term)?
                .scale_rat(&(Rat::one() / rat_int(m)));
            if term.is_zero() {
                break;
            }
            acc = acc.add(&term);
        }
        Ok(acc)
    }

    /// Coproduct of the embedding vector (level l -> l+1 induction):
    /// Delta(f_1^+) = q^d exp(h~_1^+((l-1)h)) f_1^+ (x) q^{l d} f_1^+ * scalar,
    /// Delta(f_1^-) = q^{-d} f_1^- (x) q^{l d} f_1^- * scalar, with
    /// scalar = f0(2(l-1)h)^{1/4} f0(2lh)^{1/2} f0(2(l+1)h)^{1/4} / f0(2h)^{1/2}.
    pub fn check_delta_f(&self, sign: i64) -> Result<CheckOutcome, QlError> {
        let order = self.order();
        let ell = self.ell;
        let big = Realization::level(ell + 1, order, self.ql.lat.w_max, self.ql.lat.z_lo, self.ql.lat.z_hi)?;
        let lhs = big.f1(sign, true)?;
        let r1 = Realization::level1(order, self.ql.lat.w_max, self.ql.lat.z_lo, self.ql.lat.z_hi)?;
        let f_small = self.f1(sign, true)?;
        let f_one = r1.f1(sign, true)?;
        let left = if sign > 0 {
            let dressed = self.exp_h_tilde_plus_at(&rat_int(ell - 1), &f_small)?;
            self.apply_symbol(&qcalc::sym_exp(1, order), &dressed, self.factors())
        } else {
            self.apply_symbol(&qcalc::sym_exp(-1, order), &f_small, self.factors())
        };
        let right = r1.apply_symbol(&qcalc::sym_exp(ell, order), &f_one, 1);
        let scal = qcalc::sym_f0(2 * (ell - 1), order)
            .nth_root(4)
            .expect("unit")
            .mul(&qcalc::sym_f0(2 * ell, order).nth_root(2).expect("unit"))
            .mul(&qcalc::sym_f0(2 * (ell + 1), order).nth_root(4).expect("unit"))
            .mul(
                &qcalc::sym_f0(2, order)
                    .nth_root(2)
                    .expect("unit")
                    .inv()
                    .expect("unit"),
            );
        let mut rhs: TVector = Vector::zero(order);
        for (ls, lc) in left.iter() {
            for (rs, rc) in right.iter() {
                let mut t = ls.clone();
                t.extend(rs.clone());
                rhs.insert(t, lc.mul(rc).mul(&scal));
            }
        }
        if lhs.sub(&rhs).is_zero() {
            Ok(CheckOutcome::pass())
        } else {
            Ok(CheckOutcome::fail(format!(
                "Delta(f_1^{}) factorization defect",
                if sign > 0 { "+" } else { "-" }
            )))
        }
    }

    /// E^+(h, z) vac as a z-series, built from the creation modes of the
    /// realized Cartan field: exp(sum_{n>0} h(-n) z^n / n) vac.
    pub fn eplus_vac_series(&self) -> Result<TVSeries, QlError> {
        let order = self.order();
        let z_hi = self.ql.lat.z_hi;
        let mut p: Vec<TVector> = vec![self.vac()];
        let h = self.gen(AffGen::H);
        for d in 1..=z_hi {
            let mut acc: TVector = Vector::zero(order);
            for n in 1..=d {
                let moved = self.mode(h, -n, &p[(d - n) as usize])?;
                acc = acc.add(&moved);
            }
            p.push(acc.scale_rat(&(Rat::one() / rat_int(d))));
        }
        let mut out: TVSeries = VSeries::zero(order);
        out.hi = z_hi;
        for (d, v) in p.into_iter().enumerate() {
            out.insert(d as i64, v);
        }
        Ok(out)
    }

    /// Coproduct of E^+(h,z)vac:
    /// Delta(E^+(h,z)vac) = q^{-d} E^+(h,z)vac (x) q^{l d} E^+(h,z)vac.
    pub fn check_delta_eplus(&self) -> Result<CheckOutcome, QlError> {
        let order = self.order();
        let ell = self.ell;
        let big = Realization::level(ell + 1, order, self.ql.lat.w_max, self.ql.lat.z_lo, self.ql.lat.z_hi)?;
        let lhs = big.eplus_vac_series()?;
        let r1 = Realization::level1(order, self.ql.lat.w_max, self.ql.lat.z_lo, self.ql.lat.z_hi)?;
        let left_series = self.eplus_vac_series()?;
        let right_series = r1.eplus_vac_series()?;
        let cap = lhs.hi.min(left_series.hi).min(right_series.hi).min(4);
        for d in 0..=cap {
            // coefficient of z^d on the right: sum over d1 + d2 = d of the
            // shifted factors
            let mut rhs: TVector = Vector::zero(order);
            for d1 in 0..=d {
                let d2 = d - d1;
                let l = self.apply_symbol(
                    &qcalc::sym_exp(-1, order),
                    &left_series.coeff(d1),
                    self.factors(),
                );
                let r = r1.apply_symbol(&qcalc::sym_exp(ell, order), &right_series.coeff(d2), 1);
                for (ls, lc) in l.iter() {
                    for (rs, rc) in r.iter() {
                        let mut t = ls.clone();
                        t.extend(rs.clone());
                        rhs.insert(t, lc.mul(rc));
                    }
                }
            }
            let diff = lhs.coeff(d).sub(&rhs);
            if !diff.is_zero() {
                return Ok(CheckOutcome::fail(format!(
                    "Delta(E^+) defect at z^{}",
                    d
                )));
            }
        }
        Ok(CheckOutcome::pass())
    }

    /// Normal-ordered product identity (k-fold, recursive two-variable form):
    /// Y((x)_{-1}^k vac, z) = prod_{a=1}^{k-1} f0(2 a h) N_k(z), where
    /// N_k(z) = [iota (f(u - 2(k-1)h)/f(u)) Y(x, z1) N_{k-1}(z)]|_{z1 = z + 2(k-1)h}.
    pub fn check_normal_ordering(&self, k: u32, sign: i64) -> Result<CheckOutcome, QlError> {
        let order = self.order();
        let x = if sign > 0 { AffGen::Xp } else { AffGen::Xm };
        let vec = self.minus_one_power(self.gen(x), k)?;
        let lhs = self.y(&vec, &self.vac())?;
        let mut norm = HSeries::one(order);
        for a in 1..k as i64 {
            norm = norm.mul(&qcalc::sym_f0(2 * a, order));
        }
        let nk = self.normal_ordered_power(k, x, &self.vac())?;
        let mut rhs: TVSeries = VSeries::zero(order);
        rhs.hi = nk.hi;
        for (n, v) in &nk.coeffs {
            rhs.insert(*n, v.scale(&norm));
        }
        let diff = lhs.sub(&rhs);
        let cap = diff.hi.min(2);
        for n in self.ql.lat.z_lo..=cap {
            let v = diff.coeff(n);
            if v.truncated() {
                continue;
            }
            if !v.is_zero() {
                return Ok(CheckOutcome::fail(format!(
                    "normal-ordering defect at k={} z^{}",
                    k, n
                )));
            }
        }
        Ok(CheckOutcome::pass())
    }

    /// N_k(z) v: the regularized k-fold product at the equal-spaced shifts.
    fn normal_ordered_power(&self, k: u32, x: AffGen, v: &TVector) -> Result<TVSeries, QlError> {
        let order = self.order();
        if k == 0 {
            let mut out: TVSeries = VSeries::zero(order);
            out.insert(0, v.clone());
            return Ok(out);
        }
        let inner = self.normal_ordered_power(k - 1, x, v)?;
        // kernel f(u - 2(k-1)h)/f(u), u = z1 - z2-block variable
        let hi = self.ql.lat.z_hi + order as i64 + 4;
        let f = qcalc::f_series(hi, order);
        let shifted = f
            .taylor_shift(&HSeries::monomial(rat_int(-2 * (k as i64 - 1)), 1, order))
            .map_err(QlError::Series)?;
        let kernel = shifted.mul(&f.inv().map_err(QlError::Series)?);
        let emb = iota_embed(&kernel, IotaArg::Z1MinusZ2, self.ql.lat.z_hi + 4);
        // bivariate: z1 for the new factor, z2 for the block
        let prod = crate::lattice::stack_product(&inner, order, false, self.global_drop(), |w| {
            self.y(self.gen(x), w)
        })?;
        let dressed = prod.scale_bi(&emb);
        // substitute z1 = z + 2(k-1) h, z2 = z
        bi_substitute(self, &dressed, &rat_int(2 * (k as i64 - 1)), &Rat::zero())
    }

    /// Rational-part extraction (two-variable case):
    /// (z1 - 2h)(z2 - 0h) Rat Y(x,z1) Y(x,z2) vac =
    /// z1 z2 ... reduced to: Rat part weighted by prod z_a/(z_a - 2(k-a)h)
    /// recovers (x)_{-1}^2 vac; checked multiplied through at k = 2.
    pub fn check_rat_extraction(&self, sign: i64) -> Result<CheckOutcome, QlError> {
        let order = self.order();
        let x = if sign > 0 { AffGen::Xp } else { AffGen::Xm };
        let xv = self.gen(x);
        // product Y(x,z1) Y(x,z2) vac, restricted to its regular (Rat) part
        let inner = self.y(xv, &self.vac())?;
        let full = crate::lattice::stack_product(&inner, order, false, self.global_drop(), |w| {
            self.y(xv, w)
        })?;
        let mut prod: TBiVSeries = BiVSeries::zero(order);
        for u in full.unsound() {
            prod.add_unsound(*u);
        }
        prod.declare_floors(0, 0, 0);
        for ((d1, d2), y) in &full.coeffs {
            if *d1 < 0 || *d2 < 0 {
                continue;
            }
            prod.insert(*d1, *d2, y.clone());
        }
        // multiplied-through: (z1 - 2h) z2 Rat[...] = z1 z2 (x)_{-1}^2 vac
        // at (z1, z2) -> evaluate both sides as bivariate series.
        let z1 = iota_embed(
            &ZSeries::monomial(1, HSeries::one(order)),
            IotaArg::Z1Alone,
            self.ql.lat.z_hi,
        );
        let z2 = iota_embed(
            &ZSeries::monomial(1, HSeries::one(order)),
            IotaArg::Z2Alone,
            self.ql.lat.z_hi,
        );
        let two_h = iota_embed(
            &ZSeries::constant(HSeries::monomial(rat_int(2), 1, order)),
            IotaArg::Z1Alone,
            self.ql.lat.z_hi,
        );
        let lhs = prod.scale_bi(&z1.sub(&two_h).mul(&z2));
        let target = self.minus_one_power(xv, 2)?;
        let mut rhs: TBiVSeries = BiVSeries::zero(order);
        rhs.insert(0, 0, target);
        let rhs = rhs.scale_bi(&z1.mul(&z2));
        let rect = (0, 3, 0, 3);
        if lhs.comparison_vacuous(&rhs, rect) {
            return Ok(CheckOutcome::inconclusive("empty sound window"));
        }
        match lhs.first_discrepancy(&rhs, rect) {
            None => Ok(CheckOutcome::pass()),
            Some((n1, n2)) => Ok(CheckOutcome::fail(format!(
                "Rat-extraction defect at z1^{} z2^{}",
                n1, n2
            ))),
        }
    }

    // -- the lattice-embedding axioms (AQ-sp) ----------------------------

    /// (AQ-sp1): [h(z1), h(z2)] equals the Cartan kernel; identical to the
    /// first M_{wl} relation.
    pub fn check_aqsp1(&self, v: &TVector) -> Result<CheckOutcome, QlError> {
        self.check_mwl_hh(v)
    }

    /// (AQ-sp2): [h(z1), Y(f^pm, z2)] = pm Y(f^pm, z2) * full Cartan kernel
    /// (the [2][l]-weighted first-order kernel).
    pub fn check_aqsp2(&self, sign: i64, v: &TVector, normalized: bool) -> Result<CheckOutcome, QlError> {
        let order = self.order();
        let f1 = self.f1(sign, normalized)?;
        let lhs = self.op_commutator(self.gen(AffGen::H), &f1, v)?;
        let ff = self.y(&f1, v)?;
        let mut fbi: TBiVSeries = BiVSeries::zero(order);
        fbi.cap_var2(ff.hi);
        let flo = crate::lattice::full_floor(&ff);
        fbi.declare_floors(0, flo, flo);
        for (d, w) in &ff.coeffs {
            fbi.insert(0, *d, w.clone());
        }
        let kernel = self.aqsp_cartan_kernel();
        let rhs = fbi.scale_bi(&kernel);
        let rhs = if sign > 0 { rhs } else { rhs.neg() };
        Ok(self.compare_bi_pub(&lhs, &rhs, "aqsp2"))
    }

    fn aqsp_cartan_kernel(&self) -> BiSeries {
        // [2]_{q^{d2}} [l]_{q^{d2}} (iota12 q^{-l d2} - iota21 q^{l d2})
        // d_{z1} log f(z1-z2)
        let order = self.order();
        let hi = self.ql.lat.z_hi + order as i64 + 4;
        let base = qcalc::dlog_f(hi, order);
        let sym = qcalc::sym_sinh_ratio(2, 1, order).mul(&qcalc::sym_sinh_ratio(self.ell, 1, order));
        let applied = qcalc::hdz_apply(&sym, &base);
        let plus = applied
            .taylor_shift(&HSeries::monomial(rat_int(self.ell), 1, order))
            .expect("nilpotent");
        let minus = applied
            .taylor_shift(&HSeries::monomial(rat_int(-self.ell), 1, order))
            .expect("nilpotent");
        let cap2 = self.ql.lat.z_hi + 4;
        iota_embed(&plus, IotaArg::Z1MinusZ2, cap2)
            .sub(&iota_embed(&minus.negate_var(), IotaArg::Z2MinusZ1, cap2))
    }

    pub fn compare_bi_pub(&self, lhs: &TBiVSeries, rhs: &TBiVSeries, label: &str) -> CheckOutcome {
        let rect = (self.ql.lat.z_lo, 3, self.ql.lat.z_lo, 3);
        if lhs.comparison_vacuous(rhs, rect) {
            return CheckOutcome::inconclusive(format!("{label}: empty sound window"));
        }
        match lhs.first_discrepancy(rhs, rect) {
            None => CheckOutcome::pass(),
            Some((n1, n2)) => CheckOutcome::fail(format!("{label}: defect at z1^{} z2^{}", n1, n2)),
        }
    }

    /// (AQ-sp3)/(AQ-sp4)/(AQ-sp6): kernel-multiplied exchange of two
    /// embedding fields, with the f-power kernels of the embedding lemma.
    pub fn check_aqsp_exchange(
        &self,
        axiom: u8,
        signs: (i64, i64),
        v: &TVector,
        normalized: bool,
    ) -> Result<CheckOutcome, QlError> {
        let order = self.order();
        let ell = self.ell;
        let lcount = QLaurentPoly::qint(ell, 1);
        // exponents (sl2, i = j = 1, a_11 = 2):
        let (gl, gr) = match axiom {
            3 => (
                QLaurentPoly::monomial(-2 * signs.0 * signs.1, 1)
                    .mul(&lcount)
                    .mul(&lcount),
                QLaurentPoly::monomial(2 * signs.0 * signs.1, 1)
                    .mul(&lcount)
                    .mul(&lcount),
            ),
            4 => {
                let base = QLaurentPoly::monomial(2, 1)
                    .add(&QLaurentPoly::one())
                    .add(&QLaurentPoly::monomial(2 * ell, 1));
                let based = QLaurentPoly::monomial(-2, 1)
                    .add(&QLaurentPoly::one())
                    .add(&QLaurentPoly::monomial(2 * ell, 1));
                (base.mul(&lcount).mul(&lcount), based.mul(&lcount).mul(&lcount))
            }
            6 => (
                QLaurentPoly::monomial(ell, 1)
                    .mul(&QLaurentPoly::qint(2, 1))
                    .mul(&lcount),
                QLaurentPoly::monomial(-ell, 1)
                    .mul(&QLaurentPoly::qint(2, 1))
                    .mul(&lcount),
            ),
            _ => unreachable!(),
        };
        let f = qcalc::f_series(self.ql.lat.z_hi + order as i64 + 6, order);
        let kl = qcalc::power_qexp_mult(&f, &gl).map_err(QlError::Series)?;
        let kr = qcalc::power_qexp_mult(&f, &gr).map_err(QlError::Series)?;
        let fa = self.f1(signs.0, normalized)?;
        let fb = self.f1(signs.1, normalized)?;
        let cap2 = self.ql.lat.z_hi + 4;
        let lhs = {
            let inner = self.y(&fb, v)?;
            let prod =
                crate::lattice::stack_product(&inner, order, false, self.global_drop(), |w| {
                    self.y(&fa, w)
                })?;
            prod.scale_bi(&iota_embed(&kl, IotaArg::Z1MinusZ2, cap2))
        };
        let rhs = {
            let inner = self.y(&fa, v)?;
            let prod =
                crate::lattice::stack_product(&inner, order, true, self.global_drop(), |w| {
                    self.y(&fb, w)
                })?;
            prod.scale_bi(&iota_embed(&kr.negate_var(), IotaArg::Z2MinusZ1, cap2))
        };
        let label = format!("aqsp{}", axiom);
        Ok(self.compare_bi_pub(&lhs, &rhs, &label))
    }

    /// (AQ-sp5) in the mode form of the alternative lemma:
    /// d f_1^pm = pm (h)_{-1} f_1^pm - (d/dz log f0^{[2]_q [l]_q q^l})|_0 f_1^pm.
    pub fn check_aqsp5(&self, sign: i64, normalized: bool) -> Result<CheckOutcome, QlError> {
        let order = self.order();
        let f1 = self.f1(sign, normalized)?;
        let lhs = self.translate(&f1);
        let hm = self.mode(self.gen(AffGen::H), -1, &f1)?;
        let g = QLaurentPoly::qint(2, 1)
            .mul(&QLaurentPoly::qint(self.ell, 1))
            .mul(&QLaurentPoly::monomial(self.ell, 1));
        // (d/dz log f0^{g})|_0: apply g(q^{dz}) to dlog_f and drop the shifted
        // poles sum_m a_m (z + m h)^{-1}, then take the z^0 coefficient.
        let hi = order as i64 + 2;
        let mut tail = qcalc::dlog_f_power(&g, hi, order);
        for (m, a) in g.iter() {
            let pole = crate::qaffine::inv_z_plus_ch(*m, order).scale_rat(&rat_int(*a));
            tail = tail.sub(&pole);
        }
        let constant = tail.coeff(0);
        let rhs = hm
            .scale_rat(&rat_int(sign))
            .sub(&f1.scale(&constant));
        if lhs.sub(&rhs).is_zero() {
            Ok(CheckOutcome::pass())
        } else {
            Ok(CheckOutcome::fail("(AQ-sp5) mode-form defect"))
        }
    }

    /// (AQ-sp7): the unit limit of the kernel-multiplied product
    /// f(z1-z2)^{q^l [2]_q [l]_q} e^+(z1) e^-(z2) at z2 = z1 on the vacuum,
    /// for the chosen normalization. Returns the constant the limit produces.
    pub fn aqsp7_limit(&self, normalized: bool) -> Result<Option<HSeries>, QlError> {
        let order = self.order();
        let ell = self.ell;
        let g = QLaurentPoly::monomial(ell, 1)
            .mul(&QLaurentPoly::qint(2, 1))
            .mul(&QLaurentPoly::qint(ell, 1));
        let f = qcalc::f_series(self.ql.lat.z_hi + order as i64 + 6, order);
        let kernel = qcalc::power_qexp_mult(&f, &g).map_err(QlError::Series)?;
        let fp = self.f1(1, normalized)?;
        let fm = self.f1(-1, normalized)?;
        let v = self.vac();
        let inner = self.y(&fm, &v)?;
        let prod = crate::lattice::stack_product(&inner, order, false, self.global_drop(), |w| {
            self.y(&fp, w)
        })?;
        let dressed = prod.scale_bi(&iota_embed(&kernel, IotaArg::Z1MinusZ2, self.ql.lat.z_hi + 4));
        // all diagonals above 0 must vanish and the 0-diagonal must be a
        // multiple of the vacuum; return that multiple
        let mut unit = None;
        for d in 0..=2 {
            match dressed.diag_coeff(d) {
                None => return Ok(None),
                Some(x) => {
                    if d == 0 {
                        let c = x.coeff(&self.vac_state());
                        let rest = x.sub(&self.vac().scale(&c));
                        if !rest.is_zero() {
                            return Ok(None);
                        }
                        unit = Some(c);
                    } else if !x.is_zero() {
                        return Ok(None);
                    }
                }
            }
        }
        Ok(unit)
    }

    /// Adjudicate the (AQ-sp7) normalization: evaluate the unit limit with
    /// both candidate normalizations and report which (if either) gives 1.
    pub fn adjudicate_normalization(&self) -> Result<CheckOutcome, QlError> {
        let with_norm = self.aqsp7_limit(true)?;
        let without = self.aqsp7_limit(false)?;
        let describe = |v: &Option<HSeries>| match v {
            None => "no scalar limit".to_string(),
            Some(c) => format!("{}", c),
        };
        let is_one = |v: &Option<HSeries>| matches!(v, Some(c) if c.is_one());
        let detail = format!(
            "level {}: sqrt(c)-normalized limit = {}; unnormalized limit = {}",
            self.ell,
            describe(&with_norm),
            describe(&without)
        );
        if is_one(&with_norm) == is_one(&without) && is_one(&with_norm) {
            return Ok(CheckOutcome::fail(format!(
                "both normalizations satisfy the unit limit: {}",
                detail
            )));
        }
        if is_one(&with_norm) || is_one(&without) {
            Ok(CheckOutcome {
                status: crate::report::Status::Pass,
                detail: Some(format!(
                    "{} -> {} satisfies (AQ-sp7)",
                    detail,
                    if is_one(&with_norm) {
                        "sqrt(c_{1,l})"
                    } else {
                        "unnormalized"
                    }
                )),
            })
        } else {
            Ok(CheckOutcome::fail(format!(
                "neither normalization yields the unit limit: {}",
                detail
            )))
        }
    }
}

/// Substitute z1 = z + c1 h, z2 = z + c2 h into a bivariate vector series,
/// returning a univariate series in z with a conservative soundness cap.
pub fn bi_substitute(
    r: &Realization,
    b: &TBiVSeries,
    c1: &Rat,
    c2: &Rat,
) -> Result<TVSeries, QlError> {
    let order = r.order();
    let n_budget = order as i64;
    let (f1, f2, ftot) = b.floors();
    // the target degree d draws on lattice points with n1 + n2 in
    // [d, d + order]; d is sound when none of those points can be unknown
    let mut cap = HI_INF;
    for u in b.unsound() {
        let first_unsafe_sum = crate::series::min_unsound_sum(u, f1, f2, ftot);
        cap = cap.min(first_unsafe_sum - n_budget - 1);
    }
    let mut out: TVSeries = VSeries::zero(order);
    out.hi = cap;
    for ((n1, n2), v) in &b.coeffs {
        // (z + c h)^n = sum_j binom(n, j) (c h)^j z^{n-j}
        for j1 in 0..=order as i64 {
            let b1 = crate::series::binom_i64(*n1, j1);
            if b1.is_zero() && j1 > 0 {
                continue;
            }
            let p1 = num::pow::pow(c1.clone(), j1 as usize) * b1;
            if p1.is_zero() && j1 > 0 {
                continue;
            }
            for j2 in 0..=(order as i64 - j1) {
                let b2 = crate::series::binom_i64(*n2, j2);
                if b2.is_zero() && j2 > 0 {
                    continue;
                }
                let p2 = num::pow::pow(c2.clone(), j2 as usize) * b2;
                if p2.is_zero() && j2 > 0 {
                    continue;
                }
                let e = n1 - j1 + n2 - j2;
                if e > cap {
                    continue;
                }
                let coeff = HSeries::monomial(&p1 * &p2, (j1 + j2) as usize, order);
                out.insert(e, v.scale(&coeff));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::Status;

    #[test]
    fn qbinom_scalars_agree() {
        for k in 1..=4u32 {
            for t in 0..k {
                assert_eq!(
                    qbinom_scalar_displayed(k, t, 4),
                    qbinom_scalar_product_form(k, t, 4),
                    "(k,t)=({},{})",
                    k,
                    t
                );
            }
        }
    }

    #[test]
    fn qbinom_expansion_k1() {
        let r = Realization::level(2, 3, 4, -6, 6).unwrap();
        let out = r.check_qbinom(1).unwrap();
        assert_eq!(out.status, Status::Pass, "{:?}", out.detail);
    }
}

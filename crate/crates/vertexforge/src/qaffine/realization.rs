//! Concrete level-l realization of quantum affine sl2 on twisted tensor
//! powers of the level-1 lattice realization.
//!
//! Level 1 is V^{eta_1} on the lattice Z a with <a,a> = 2 (h_1 -> a,
//! x_1^pm -> e_{pm a}). Higher levels are reached by iterating the coproduct
//! into the twisted tensor product; the pairwise twisting operators between
//! factors are the full-mode Yang-Baxter operators of the level-1 algebra,
//! and the tensor vertex map is (Y (x) Y) S^{23}(-z) sigma, applied
//! recursively over factors.

use super::CartanData;
use crate::exactnum::{rat_int, HSeries, Rat};
use crate::lattice::{BiVSeries, FockState, VSeries, Vector};
use crate::qcalc::{self, QLaurentPoly};
use crate::qlattice::{QlCtx, QlError, QlMutation};
use crate::report::CheckOutcome;
use crate::series::{iota_embed, BiSeries, IotaArg, ZSeries, HI_INF};
use num::{One, Zero};
use std::collections::HashMap;
use std::sync::Mutex;

pub type TState = Vec<FockState>;
pub type TVector = Vector<TState>;
pub type TVSeries = VSeries<TState>;
pub type TBiVSeries = BiVSeries<TState>;

/// The three generators of the affine algebra.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum AffGen {
    H,
    Xp,
    Xm,
}

type SRow = Vec<(FockState, FockState, ZSeries)>;

/// Level-l realization: l level-1 factors plus the realized generators.
pub struct Realization {
    pub ell: i64,
    pub ql: QlCtx,
    h: TVector,
    xp: TVector,
    xm: TVector,
    e_ell: std::cell::OnceCell<TVector>,
    s_memo: Mutex<HashMap<(FockState, FockState), SRow>>,
    y1_memo: Mutex<HashMap<(FockState, FockState), VSeries<FockState>>>,
}

impl Realization {
    /// Level-1: the lattice realization h -> a(-1)vac, x^pm -> e_{pm a}.
    pub fn level1(order: usize, w_max: i64, z_lo: i64, z_hi: i64) -> Result<Self, QlError> {
        let ql = QlCtx::for_cartan(&CartanData::a1(), 1, order, w_max, z_lo, z_hi)?;
        let wrap = |s: FockState| Vector::singleton(vec![s], HSeries::one(order));
        let h = wrap(ql.lat.h_state(0));
        let xp = wrap(ql.lat.e_state(0, 1));
        let xm = wrap(ql.lat.e_state(0, -1));
        Ok(Realization {
            ell: 1,
            ql,
            h,
            xp,
            xm,
            e_ell: std::cell::OnceCell::new(),
            s_memo: Mutex::new(HashMap::new()),
            y1_memo: Mutex::new(HashMap::new()),
        })
    }

    /// Build level l by iterating the coproduct, left-nested.
    pub fn level(ell: i64, order: usize, w_max: i64, z_lo: i64, z_hi: i64) -> Result<Self, QlError> {
        let mut r = Self::level1(order, w_max, z_lo, z_hi)?;
        for _ in 1..ell {
            r = r.extend()?;
        }
        Ok(r)
    }

    pub fn order(&self) -> usize {
        self.ql.order()
    }

    pub fn factors(&self) -> usize {
        self.ell as usize
    }

    pub fn gen(&self, g: AffGen) -> &TVector {
        match g {
            AffGen::H => &self.h,
            AffGen::Xp => &self.xp,
            AffGen::Xm => &self.xm,
        }
    }

    pub fn vac_state(&self) -> TState {
        vec![FockState::vacuum(1); self.factors()]
    }

    pub fn vac(&self) -> TVector {
        Vector::singleton(self.vac_state(), HSeries::one(self.order()))
    }

    /// Negative control: perturb the underlying eta datum.
    pub fn mutate(&mut self, m: QlMutation) {
        crate::qlattice::apply_mutation(&mut self.ql, m);
        self.s_memo.lock().unwrap().clear();
        self.y1_memo.lock().unwrap().clear();
    }

    // -- tensor-space linear algebra ------------------------------------

    pub fn translate(&self, v: &TVector) -> TVector {
        self.translate_block(v, self.factors())
    }

    /// Translation restricted to the leading `upto` factors (the left block
    /// of an iterated coproduct).
    pub fn translate_block(&self, v: &TVector, upto: usize) -> TVector {
        let mut out = Vector::zero(v.order());
        out.merge_lost_from(v);
        for (s, c) in v.iter() {
            for slot in 0..upto.min(s.len()) {
                let part = self
                    .ql
                    .lat
                    .translate(&Vector::singleton(s[slot].clone(), c.clone()));
                out.mark_lost(part.lost_val());
                for (ns, nc) in part.iter() {
                    let mut t = s.clone();
                    t[slot] = ns.clone();
                    out.insert(t, nc.clone());
                }
            }
        }
        out
    }

    /// Apply a symbol u(t), t = h * d, with d the tensor translation (or the
    /// block translation when `upto < factors`). The h factors are folded
    /// into the derivative chain so that terms dying at the h-truncation
    /// never reach the weight cap.
    pub fn apply_symbol(&self, sym: &HSeries, v: &TVector, upto: usize) -> TVector {
        self.apply_symbol_pre(sym, &HSeries::one(v.order()), v, upto)
    }

    /// As `apply_symbol`, with an extra prefactor folded in from the start.
    pub fn apply_symbol_pre(
        &self,
        sym: &HSeries,
        pre: &HSeries,
        v: &TVector,
        upto: usize,
    ) -> TVector {
        let order = v.order().min(sym.order());
        let h = HSeries::monomial(Rat::one(), 1, order);
        let mut out = Vector::zero(order);
        // deriv carries h^k d^k v (times the prefactor)
        let mut deriv = v.truncate_order(order).scale(pre);
        for k in 0..=order {
            let c = sym.coeff(k);
            if !c.is_zero() {
                out = out.add(&deriv.scale_rat(&c));
            }
            if k < order {
                deriv = self.translate_block(&deriv.scale(&h), upto);
            }
            if deriv.is_zero() && !deriv.truncated() {
                break;
            }
        }
        out
    }

    // -- twisting operators and the tensor vertex map --------------------

    fn s_full_states(&self, a: &FockState, b: &FockState) -> Result<SRow, QlError> {
        if let Some(hit) = self.s_memo.lock().unwrap().get(&(a.clone(), b.clone())) {
            return Ok(hit.clone());
        }
        let rows = self.ql.s_full(
            &self.ql.lat.state_vec(a.clone()),
            &self.ql.lat.state_vec(b.clone()),
        )?;
        let row: SRow = rows
            .pairs
            .into_iter()
            .map(|((l, r), s)| (l, r, s))
            .collect();
        self.s_memo
            .lock()
            .unwrap()
            .insert((a.clone(), b.clone()), row.clone());
        Ok(row)
    }

    fn y1(&self, u: &FockState, v: &FockState) -> Result<VSeries<FockState>, QlError> {
        if let Some(hit) = self.y1_memo.lock().unwrap().get(&(u.clone(), v.clone())) {
            return Ok(hit.clone());
        }
        let y = self.ql.y_eta_vector(
            &self.ql.lat.state_vec(u.clone()),
            &self.ql.lat.state_vec(v.clone()),
        )?;
        self.y1_memo
            .lock()
            .unwrap()
            .insert((u.clone(), v.clone()), y.clone());
        Ok(y)
    }

    /// Composite twisting S_{K,last}(z)(head (x) u): pairwise full-mode S of
    /// each head factor against the running right slot, factor 1 first.
    pub fn s_block(
        &self,
        head: &[FockState],
        u: &FockState,
    ) -> Result<Vec<(TState, FockState, ZSeries)>, QlError> {
        let order = self.order();
        let mut rows: Vec<(TState, FockState, ZSeries)> =
            vec![(Vec::new(), u.clone(), ZSeries::one(order))];
        for slot_state in head {
            let mut next = Vec::new();
            for (acc_head, cur_u, scal) in &rows {
                for (l, r, g) in self.s_full_states(slot_state, cur_u)? {
                    let mut nh = acc_head.clone();
                    nh.push(l.clone());
                    next.push((nh, r.clone(), scal.mul(&g)));
                }
            }
            rows = next;
        }
        Ok(rows)
    }

    /// Composite S applied to a tensor vector against a level-1 partner
    /// state, as rows (tensor-state, partner-state, scalar).
    pub fn s_composite(
        &self,
        v: &TVector,
        partner: &FockState,
    ) -> Result<Vec<(TState, FockState, ZSeries)>, QlError> {
        let mut out = Vec::new();
        for (s, c) in v.iter() {
            for (head, p, g) in self.s_block(s, partner)? {
                out.push((head, p, g.scale(c)));
            }
        }
        Ok(out)
    }

    /// The twisted tensor vertex operator Y(u, z) v over all factors.
    pub fn y(&self, u: &TVector, v: &TVector) -> Result<TVSeries, QlError> {
        let order = u.order().min(v.order());
        let mut out: TVSeries = VSeries::zero(order);
        for (us, uc) in u.iter() {
            for (vs, vc) in v.iter() {
                let part = self.y_states(us, vs)?;
                let c = uc.mul(vc);
                let mut scaled: TVSeries = VSeries::zero(order);
                scaled.hi = part.hi;
                for (n, w) in &part.coeffs {
                    scaled.insert(*n, w.scale(&c));
                }
                out = out.add(&scaled);
            }
        }
        let in_lost = match (u.lost_val(), v.lost_val()) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        if let Some(l) = in_lost {
            for w in out.coeffs.values_mut() {
                w.mark_lost(Some(l));
            }
        }
        Ok(out)
    }

    fn y_states(&self, u: &TState, v: &TState) -> Result<TVSeries, QlError> {
        let order = self.order();
        let k = u.len();
        assert_eq!(v.len(), k);
        if k == 1 {
            let y = self.y1(&u[0], &v[0])?;
            let mut out: TVSeries = VSeries::zero(order);
            out.hi = y.hi;
            for (n, w) in &y.coeffs {
                out.insert(*n, w.map_states(|s| vec![s.clone()]));
            }
            return Ok(out);
        }
        let (uh, ul) = (u[..k - 1].to_vec(), &u[k - 1]);
        let (vh, vl) = (v[..k - 1].to_vec(), &v[k - 1]);
        let mut out: TVSeries = VSeries::zero(order);
        for (vh2, ul2, g) in self.s_block(&vh, ul)? {
            // g is the scalar of S(z'); the vertex map uses S^{23}(-z).
            let g_neg = g.negate_var();
            let left = self.y_states(&uh, &vh2)?;
            let right = self.y1(&ul2, vl)?;
            if left.coeffs.is_empty() || right.coeffs.is_empty() {
                continue;
            }
            let pair_hi = add_cap(left.hi, right.support_lo())
                .min(add_cap(right.hi, left.support_lo()));
            let hi = add_cap(pair_hi, g_neg.support_lo()).min(add_cap(
                g_neg.hi(),
                add_cap(left.support_lo(), right.support_lo()),
            ));
            let mut prod: TVSeries = VSeries::zero(order);
            prod.hi = hi;
            let trunc: Option<usize> = left
                .coeffs
                .values()
                .filter_map(|w| w.lost_val())
                .chain(right.coeffs.values().filter_map(|w| w.lost_val()))
                .min();
            for (n1, w1) in &left.coeffs {
                for (n2, w2) in &right.coeffs {
                    for (gm, gc) in g_neg.iter() {
                        let n = n1 + n2 + gm;
                        if n > hi {
                            continue;
                        }
                        for (s1, c1) in w1.iter() {
                            for (s2, c2) in w2.iter() {
                                let mut t = s1.clone();
                                t.push(s2.clone());
                                prod.insert(n, Vector::singleton(t, c1.mul(c2).mul(gc)));
                            }
                        }
                    }
                }
            }
            if trunc.is_some() {
                for w in prod.coeffs.values_mut() {
                    w.mark_lost(trunc);
                }
            }
            out = out.add(&prod);
        }
        Ok(out)
    }

    /// Mode u_m v = coefficient of z^{-m-1} in Y(u, z) v.
    pub fn mode(&self, u: &TVector, m: i64, v: &TVector) -> Result<TVector, QlError> {
        let y = self.y(u, v)?;
        let n = -m - 1;
        if n > y.hi {
            let mut out = Vector::zero(self.order());
            out.mark_lost(Some(0));
            return Ok(out);
        }
        Ok(y.coeff(n))
    }

    /// Iterated (-1)-mode power applied to the vacuum: (u)_{-1}^k vac.
    pub fn minus_one_power(&self, u: &TVector, k: u32) -> Result<TVector, QlError> {
        let mut acc = self.vac();
        for _ in 0..k {
            acc = self.mode(u, -1, &acc)?;
        }
        Ok(acc)
    }

    // -- coproduct ------------------------------------------------------

    /// Extend by one level-1 factor on the right via
    /// Delta: X^{l+1} -> X^l (x) X^1.
    pub fn extend(&self) -> Result<Self, QlError> {
        let order = self.order();
        let ell = self.ell;
        let r1 = Realization::level1(order, self.ql.lat.w_max, self.ql.lat.z_lo, self.ql.lat.z_hi)?;
        let vac1 = FockState::vacuum(1);
        let append = |left: &TVector, right: &FockState| -> TVector {
            let mut out = Vector::zero(order);
            out.merge_lost_from(left);
            for (s, c) in left.iter() {
                let mut t = s.clone();
                t.push(right.clone());
                out.insert(t, c.clone());
            }
            out
        };
        // Delta(h) = q^{-r l' d} h (x) vac + vac (x) q^{r l d} h  (l' = 1)
        let h_left = append(
            &self.apply_symbol(&qcalc::sym_exp(-1, order), &self.h, self.factors()),
            &vac1,
        );
        let h1_shift = r1.apply_symbol(&qcalc::sym_exp(ell, order), &r1.h, 1);
        let h_right = prepend_vac(&h1_shift, self.factors(), order);
        // Delta(x+) = x+ (x) vac + q^{2 r l d} E_l(h) (x) q^{2 r l d} x+
        let xp_left = append(&self.xp, &vac1);
        let e_shift =
            self.apply_symbol(&qcalc::sym_exp(2 * ell, order), self.e_ell_vec()?, self.factors());
        let xp1_shift = r1.apply_symbol(&qcalc::sym_exp(2 * ell, order), &r1.xp, 1);
        let xp_right = tensor_join(&e_shift, &xp1_shift, order);
        // Delta(x-) = x- (x) vac + vac (x) x-
        let xm_left = append(&self.xm, &vac1);
        let xm_right = prepend_vac(&r1.xm, self.factors(), order);
        Ok(Realization {
            ell: ell + 1,
            ql: self.ql.clone(),
            h: h_left.add(&h_right),
            xp: xp_left.add(&xp_right),
            xm: xm_left.add(&xm_right),
            e_ell: std::cell::OnceCell::new(),
            s_memo: Mutex::new(HashMap::new()),
            y1_memo: Mutex::new(HashMap::new()),
        })
    }

    /// The group-like state E_l(h):
    /// (f0(2(1+l)h)/f0(2(1-l)h))^{1/2} exp((-q^{-l d} 2h f0(2h d)[1]_{q^d} h)_{-1}) vac.
    pub fn e_ell_vec(&self) -> Result<&TVector, QlError> {
        if let Some(v) = self.e_ell.get() {
            return Ok(v);
        }
        let order = self.order();
        let ell = self.ell;
        let sym = qcalc::sym_exp(-ell, order)
            .mul(&qcalc::sym_f0(2, order))
            .mul(&qcalc::sym_sinh_ratio(1, 1, order));
        // fold the -2h prefactor in so the top derivative dies at the
        // h-truncation instead of tripping the weight cap
        let arg = self.apply_symbol_pre(
            &sym,
            &HSeries::monomial(rat_int(-2), 1, order),
            &self.h,
            self.factors(),
        );
        // exp of the (-1)-mode, nilpotent because the argument is O(h)
        let mut acc = self.vac();
        let mut term = self.vac();
        for m in 1..=order as i64 {
            term = self
                .mode(&arg, -1, &term)?
                .scale_rat(&(Rat::one() / rat_int(m)));
            if term.is_zero() && !term.truncated() {
                break;
            }
            acc = acc.add(&term);
        }
        let norm = qcalc::sym_f0(2 * (1 + ell), order)
            .mul(&qcalc::sym_f0(2 * (1 - ell), order).inv().expect("f0 unit"))
            .nth_root(2)
            .expect("f0 ratio has constant term 1");
        let result = acc.scale(&norm);
        let _ = self.e_ell.set(result);
        Ok(self.e_ell.get().unwrap())
    }

    /// c_{1,l} = f0(2lh)^{1/2} f0(2(l-1)h)^{-1/2} / (([l]_q!)^2 f0(2h)^l).
    pub fn c_norm(&self) -> HSeries {
        let order = self.order();
        let ell = self.ell;
        let num = qcalc::sym_f0(2 * ell, order)
            .mul(&qcalc::sym_f0(2 * (ell - 1), order).inv().expect("f0 unit"))
            .nth_root(2)
            .expect("unit");
        let fact = qcalc::q_factorial(ell as u32, 1, order);
        let den = fact.mul(&fact).mul(&qcalc::sym_f0(2, order).pow(ell as u32));
        num.mul(&den.inv().expect("denominator is a unit"))
    }

    /// The lattice-embedding vector f_1^pm = sqrt(c) q^{(1-l)d}(x^pm)_{-1}^l vac;
    /// `normalized` = false drops the sqrt(c) factor (the alternative
    /// normalization the adjudication suite reports on).
    pub fn f1(&self, sign: i64, normalized: bool) -> Result<TVector, QlError> {
        let order = self.order();
        let base = self.minus_one_power(
            if sign > 0 { &self.xp } else { &self.xm },
            self.ell as u32,
        )?;
        let shifted =
            self.apply_symbol(&qcalc::sym_exp(1 - self.ell, order), &base, self.factors());
        if !normalized {
            return Ok(shifted);
        }
        let c = self.c_norm();
        let root = c
            .sqrt_rational_lead()
            .expect("c_{1,l} has an exact square root");
        Ok(shifted.scale(&root))
    }

    /// Singular (z-negative) part of Y(u, z) v.
    pub fn y_minus(&self, u: &TVector, v: &TVector) -> Result<TVSeries, QlError> {
        Ok(self.y(u, v)?.split_sing().0)
    }
}

fn add_cap(a: i64, b: i64) -> i64 {
    if a >= HI_INF || b >= HI_INF {
        HI_INF
    } else {
        (a + b).min(HI_INF)
    }
}

fn prepend_vac(v: &TVector, extra: usize, order: usize) -> TVector {
    let mut out = Vector::zero(order);
    out.merge_lost_from(v);
    for (s, c) in v.iter() {
        let mut t = vec![FockState::vacuum(1); extra];
        t.extend(s.clone());
        out.insert(t, c.clone());
    }
    out
}

fn tensor_join(left: &TVector, right: &TVector, order: usize) -> TVector {
    let mut out = Vector::zero(order);
    out.merge_lost_from(left);
    out.merge_lost_from(right);
    for (ls, lc) in left.iter() {
        for (rs, rc) in right.iter() {
            let mut t = ls.clone();
            t.extend(rs.clone());
            out.insert(t, lc.mul(rc));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Verification suites on the realization.
// ---------------------------------------------------------------------------

impl Realization {
    /// Tensor states of total weight at most w.
    pub fn states_up_to_weight(&self, w: i64) -> Vec<TState> {
        let singles = self.ql.lat.states_up_to_weight(w);
        let mut out: Vec<TState> = vec![Vec::new()];
        for _ in 0..self.factors() {
            let mut next = Vec::new();
            for base in &out {
                let used: i64 = base.iter().map(|s| s.weight(&self.ql.lat.data)).sum();
                for s in &singles {
                    if used + s.weight(&self.ql.lat.data) <= w {
                        let mut t = base.clone();
                        t.push(s.clone());
                        next.push(t);
                    }
                }
            }
            out = next;
        }
        out
    }

    pub fn state_vec(&self, s: TState) -> TVector {
        Vector::singleton(s, HSeries::one(self.order()))
    }

    /// Global lower bound on the reach of a field application, from the
    /// weight caps.
    pub fn global_drop(&self) -> i64 {
        4 * self.ql.lat.w_max + 8
    }

    /// Bivariate operator product Y(a,z1) Y(b,z2) v.
    pub fn op_product(&self, a: &TVector, b: &TVector, v: &TVector) -> Result<TBiVSeries, QlError> {
        let inner = self.y(b, v)?;
        crate::lattice::stack_product(&inner, self.order(), false, self.global_drop(), |x| {
            self.y(a, x)
        })
    }

    pub fn op_commutator(&self, a: &TVector, b: &TVector, v: &TVector) -> Result<TBiVSeries, QlError> {
        let fwd = self.op_product(a, b, v)?;
        let rev = transpose_bi(&self.op_product(b, a, v)?);
        Ok(fwd.sub(&rev))
    }

    fn rect(&self) -> (i64, i64, i64, i64) {
        (self.ql.lat.z_lo, 3, self.ql.lat.z_lo, 3)
    }

    fn compare_bi(&self, lhs: &TBiVSeries, rhs: &TBiVSeries, label: &str) -> CheckOutcome {
        let rect = self.rect();
        if lhs.comparison_vacuous(rhs, rect) {
            return CheckOutcome::inconclusive(format!("{label}: empty sound window"));
        }
        match lhs.first_discrepancy(rhs, rect) {
            None => CheckOutcome::pass(),
            Some((n1, n2)) => CheckOutcome::fail(format!("{label}: defect at z1^{} z2^{}", n1, n2)),
        }
    }

    /// The shift-difference Cartan kernel of the M_{wl} relations,
    /// specialised to sl2 (a_11 = 2, r = r_1 = 1):
    /// [2]_{q^{d2}} ([l]_{q^{d2}}) (iota12 q^{-l d2} - iota21 q^{l d2})
    /// applied to d1 (d2) log f(z1 - z2).
    fn cartan_kernel(&self, second_order: bool) -> BiSeries {
        let order = self.order();
        let hi = self.ql.lat.z_hi + order as i64 + 4;
        let base = if second_order {
            // d_{z1} d_{z2} log f(z1 - z2) = -(d^2 log f)(u)
            qcalc::d2log_f(hi, order).neg()
        } else {
            // d_{z1} log f(z1 - z2) = (d log f)(u)
            qcalc::dlog_f(hi, order)
        };
        let sym = if second_order {
            qcalc::sym_sinh_ratio(2, 1, order).mul(&qcalc::sym_sinh_ratio(self.ell, 1, order))
        } else {
            qcalc::sym_sinh_ratio(2, 1, order)
        };
        let applied = qcalc::hdz_apply(&sym, &base);
        // q^{-l d_{z2}} shifts u = z1 - z2 by +l h; the opposite-region term
        // is a function of u embedded in the z1-small region, which requires
        // rewriting it in w = z2 - z1 first (negate the variable).
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

    /// M_{wl} relation 1: [h(z1), h(z2)] = second-order Cartan kernel.
    pub fn check_mwl_hh(&self, v: &TVector) -> Result<CheckOutcome, QlError> {
        let lhs = self.op_commutator(&self.h, &self.h, v)?;
        let mut idv: TBiVSeries = BiVSeries::zero(self.order());
        idv.declare_floors(0, 0, 0);
        idv.insert(0, 0, v.clone());
        let rhs = idv.scale_bi(&self.cartan_kernel(true));
        Ok(self.compare_bi(&lhs, &rhs, "mwl-hh"))
    }

    /// M_{wl} relation 2: [h(z1), x^pm(z2)] = pm x^pm(z2) * first-order kernel.
    pub fn check_mwl_hx(&self, sign: i64, v: &TVector) -> Result<CheckOutcome, QlError> {
        let x = if sign > 0 { &self.xp } else { &self.xm };
        let lhs = self.op_commutator(&self.h, x, v)?;
        let xf = self.y(x, v)?;
        let mut xbi: TBiVSeries = BiVSeries::zero(self.order());
        xbi.cap_var2(xf.hi);
        let flo = crate::lattice::full_floor(&xf);
        xbi.declare_floors(0, flo, flo);
        for (d, w) in &xf.coeffs {
            xbi.insert(0, *d, w.clone());
        }
        let rhs = xbi.scale_bi(&self.cartan_kernel(false));
        let rhs = if sign > 0 { rhs } else { rhs.neg() };
        Ok(self.compare_bi(&lhs, &rhs, "mwl-hx"))
    }

    /// M_{wl} relation 3 (same-sign exchange, i = j for sl2):
    /// iota12 f(u)^{-1+q^{-2}} x(z1)x(z2) = iota21 f(u)^{-1+q^{2}} x(z2)x(z1).
    pub fn check_mwl_xx_same(&self, sign: i64, v: &TVector) -> Result<CheckOutcome, QlError> {
        let order = self.order();
        let x = if sign > 0 { &self.xp } else { &self.xm };
        let hi = self.ql.lat.z_hi + order as i64 + 6;
        let f = qcalc::f_series(hi, order);
        let kl = qcalc::power_qexp_mult(
            &f,
            &QLaurentPoly::monomial(-2, 1).sub(&QLaurentPoly::monomial(0, 1)),
        )
        .map_err(QlError::Series)?;
        let kr = qcalc::power_qexp_mult(
            &f,
            &QLaurentPoly::monomial(2, 1).sub(&QLaurentPoly::monomial(0, 1)),
        )
        .map_err(QlError::Series)?;
        let cap2 = self.ql.lat.z_hi + 4;
        let lhs = self
            .op_product(x, x, v)?
            .scale_bi(&iota_embed(&kl, IotaArg::Z1MinusZ2, cap2));
        let rhs = transpose_bi(&self.op_product(x, x, v)?)
            .scale_bi(&iota_embed(&kr.negate_var(), IotaArg::Z2MinusZ1, cap2));
        Ok(self.compare_bi(&lhs, &rhs, "mwl-xx-same"))
    }

    /// M_{wl} relation 4 (x+ against x-, i = j for sl2):
    /// iota12 f^{1+q^{2l}} x+(z1)x-(z2) = iota21 f^{1+q^{2l}+q^{-2}-q^{2}} x-(z2)x+(z1).
    pub fn check_mwl_xpxm(&self, v: &TVector) -> Result<CheckOutcome, QlError> {
        let order = self.order();
        let hi = self.ql.lat.z_hi + order as i64 + 6;
        let f = qcalc::f_series(hi, order);
        let gl = QLaurentPoly::monomial(0, 1).add(&QLaurentPoly::monomial(2 * self.ell, 1));
        let gr = gl
            .add(&QLaurentPoly::monomial(-2, 1))
            .sub(&QLaurentPoly::monomial(2, 1));
        let kl = qcalc::power_qexp_mult(&f, &gl).map_err(QlError::Series)?;
        let kr = qcalc::power_qexp_mult(&f, &gr).map_err(QlError::Series)?;
        let cap2 = self.ql.lat.z_hi + 4;
        let lhs = self
            .op_product(&self.xp, &self.xm, v)?
            .scale_bi(&iota_embed(&kl, IotaArg::Z1MinusZ2, cap2));
        let rhs = transpose_bi(&self.op_product(&self.xm, &self.xp, v)?)
            .scale_bi(&iota_embed(&kr.negate_var(), IotaArg::Z2MinusZ1, cap2));
        Ok(self.compare_bi(&lhs, &rhs, "mwl-xpxm"))
    }

    /// Ideal relation A_1(z) = 0 in mode form: the z^{-1} and z^{-2}
    /// coefficients of the singular series
    /// (q - q^{-1}) Y(x+,z)^- x- = vac z^{-1} - E_l(h)(z + 2lh)^{-1}:
    /// (q - q^{-1})(x+)_0 x- = vac - E_l(h),
    /// (q - q^{-1})(x+)_1 x- = +2 l h E_l(h).
    pub fn check_ideal_modes(&self) -> Result<CheckOutcome, QlError> {
        let order = self.order();
        let qdiff = QLaurentPoly::monomial(1, 1)
            .sub(&QLaurentPoly::monomial(-1, 1))
            .to_scalar(order);
        let e = self.e_ell_vec()?.clone();
        let m0 = self.mode(&self.xp, 0, &self.xm)?.scale(&qdiff);
        let want0 = self.vac().sub(&e);
        if !m0.sub(&want0).is_zero() {
            return Ok(CheckOutcome::fail("(x+)_0 x- relation defect"));
        }
        let m1 = self.mode(&self.xp, 1, &self.xm)?.scale(&qdiff);
        let want1 = e.scale(&HSeries::monomial(rat_int(2 * self.ell), 1, order));
        if !m1.sub(&want1).is_zero() {
            return Ok(CheckOutcome::fail("(x+)_1 x- relation defect"));
        }
        Ok(CheckOutcome::pass())
    }

    /// Full singular series: (q - q^{-1}) Y(x+, z)^- x- =
    /// vac z^{-1} - E_l(h) (z + 2 l h)^{-1}.
    pub fn check_ideal_series(&self) -> Result<CheckOutcome, QlError> {
        let order = self.order();
        let qdiff = QLaurentPoly::monomial(1, 1)
            .sub(&QLaurentPoly::monomial(-1, 1))
            .to_scalar(order);
        let lhs = self.y_minus(&self.xp, &self.xm)?;
        let geom = inv_z_plus_ch(2 * self.ell, order);
        let mut rhs: TVSeries = VSeries::zero(order);
        rhs.insert(-1, self.vac());
        for (n, c) in geom.iter() {
            rhs.insert(*n, self.e_ell_vec()?.scale(c).neg());
        }
        let mut lhs_scaled: TVSeries = VSeries::zero(order);
        lhs_scaled.hi = lhs.hi;
        for (n, w) in &lhs.coeffs {
            lhs_scaled.insert(*n, w.scale(&qdiff));
        }
        let diff = lhs_scaled.sub(&rhs);
        for n in -(order as i64) - 3..0 {
            if n > diff.hi {
                break;
            }
            if !diff.coeff(n).is_zero() {
                return Ok(CheckOutcome::fail(format!("A_1(z) defect at z^{}", n)));
            }
        }
        Ok(CheckOutcome::pass())
    }

    /// Integrability: (x^pm)_{-1}^{l} x^pm = 0 in the level-l realization.
    pub fn check_integrability(&self, sign: i64) -> Result<CheckOutcome, QlError> {
        let x = if sign > 0 { &self.xp } else { &self.xm };
        let mut acc = x.clone();
        for _ in 0..self.ell {
            acc = self.mode(x, -1, &acc)?;
        }
        if acc.is_zero() {
            Ok(CheckOutcome::pass())
        } else {
            Ok(CheckOutcome::fail(format!(
                "integrability vector has {} surviving terms",
                acc.iter().count()
            )))
        }
    }
}

/// (z + c h)^{-1} = z^{-1} sum (-c h / z)^k.
pub fn inv_z_plus_ch(c: i64, order: usize) -> ZSeries {
    let mut out = ZSeries::zero(order);
    let mut pow = Rat::one();
    for k in 0..=order as i64 {
        if k > 0 {
            pow *= rat_int(-c);
        }
        out = out.add(&ZSeries::monomial(
            -1 - k,
            HSeries::monomial(pow.clone(), k as usize, order),
        ));
        if c == 0 {
            break;
        }
    }
    out
}

/// Swap the two variables of a bivariate vector series.
pub fn transpose_bi<K: Ord + Clone>(b: &BiVSeries<K>) -> BiVSeries<K> {
    let mut out: BiVSeries<K> = BiVSeries::zero(b.order);
    let (f1, f2, ftot) = b.floors();
    out.declare_floors(f2, f1, ftot);
    for u in b.unsound() {
        out.add_unsound(crate::lattice::Unsound {
            v1: u.v2,
            v2: u.v1,
            tot: u.tot,
        });
    }
    for ((n1, n2), v) in &b.coeffs {
        out.insert(*n2, *n1, v.clone());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::Status;

    fn lvl1(order: usize) -> Realization {
        Realization::level1(order, 4, -8, 8).unwrap()
    }

    #[test]
    fn creation_property_of_modes() {
        // (u)_{-1} vac = u for generators, and Y(u,z)vac -> u as z -> 0
        let r = lvl1(3);
        for g in [AffGen::H, AffGen::Xp, AffGen::Xm] {
            let u = r.gen(g).clone();
            let m = r.mode(&u, -1, &r.vac()).unwrap();
            assert_eq!(m, u, "({:?})_(-1) vac", g);
            let y = r.y(&u, &r.vac()).unwrap();
            assert!(y.coeff(-1).is_zero());
            assert_eq!(y.coeff(0), u);
        }
    }

    #[test]
    fn vacuum_property_tensor() {
        let r = Realization::level(2, 2, 4, -6, 6).unwrap();
        let y = r.y(&r.vac(), &r.gen(AffGen::H).clone()).unwrap();
        assert_eq!(y.coeff(0), *r.gen(AffGen::H));
        for n in 1..=3 {
            assert!(y.coeff(n).is_zero());
            assert!(y.coeff(-n).is_zero());
        }
    }

    #[test]
    fn level1_iso_y_xp_on_xm() {
        // Y(e_a, z) e_{-a} = f(z)^{-1-q^2} E^+(a, z) vac
        let r = lvl1(4);
        let order = 4;
        let lhs = r.y(r.gen(AffGen::Xp), r.gen(AffGen::Xm)).unwrap();
        let g = QLaurentPoly::monomial(0, -1).sub(&QLaurentPoly::monomial(2, 1));
        let f = qcalc::f_series(16, order);
        let scal = qcalc::power_qexp_mult(&f, &g).unwrap();
        let eplus = r.ql.lat.e_plus(&[1], &r.ql.lat.vacuum_vec());
        let mut rhs: TVSeries = VSeries::zero(order);
        rhs.hi = add_cap(eplus.hi, scal.support_lo()).min(scal.hi());
        for (d, x) in &eplus.coeffs {
            for (m, c) in scal.iter() {
                if d + m > rhs.hi {
                    continue;
                }
                rhs.insert(d + m, x.map_states(|s| vec![s.clone()]).scale(c));
            }
        }
        let cap = lhs.hi.min(rhs.hi).min(3);
        for n in -4..=cap {
            assert_eq!(lhs.coeff(n), rhs.coeff(n), "z^{}", n);
        }
    }

    #[test]
    fn level1_iso_nilpotency() {
        // (e_a)_{-1} e_a = 0
        let r = lvl1(4);
        let m = r.mode(r.gen(AffGen::Xp), -1, r.gen(AffGen::Xp)).unwrap();
        assert!(m.is_zero(), "got {} terms", m.iter().count());
    }

    #[test]
    fn level1_e1_closed_form() {
        // E_1(h) = E^+(a, -2h) vac
        let r = lvl1(4);
        let e = r.e_ell_vec().unwrap().clone();
        let eplus = r.ql.lat.e_plus(&[1], &r.ql.lat.vacuum_vec());
        let closed = eplus
            .eval_at_h(&rat_int(-2))
            .expect("regular series evaluates")
            .map_states(|s| vec![s.clone()]);
        assert_eq!(e, closed);
    }

    #[test]
    fn ideal_relations_level1() {
        let r = lvl1(4);
        let out = r.check_ideal_modes().unwrap();
        assert_eq!(out.status, Status::Pass, "{:?}", out.detail);
        let out = r.check_ideal_series().unwrap();
        assert_eq!(out.status, Status::Pass, "{:?}", out.detail);
    }

    #[test]
    fn integrability_level1() {
        let r = lvl1(3);
        for sign in [1, -1] {
            let out = r.check_integrability(sign).unwrap();
            assert_eq!(out.status, Status::Pass, "{:?}", out.detail);
        }
    }

    #[test]
    fn mwl_relations_level1_on_vacuum() {
        let r = lvl1(3);
        let v = r.vac();
        let o = r.check_mwl_hh(&v).unwrap();
        assert_eq!(o.status, Status::Pass, "hh {:?}", o.detail);
        let o = r.check_mwl_hx(1, &v).unwrap();
        assert_eq!(o.status, Status::Pass, "hx {:?}", o.detail);
        // the x x products climb through weight ~ 2 + |exponent| states, so
        // they need more weight headroom than the Cartan relations
        let r = Realization::level1(3, 8, -8, 8).unwrap();
        let v = r.vac();
        let o = r.check_mwl_xx_same(1, &v).unwrap();
        assert_eq!(o.status, Status::Pass, "xx {:?}", o.detail);
        let o = r.check_mwl_xpxm(&v).unwrap();
        assert_eq!(o.status, Status::Pass, "xpxm {:?}", o.detail);
    }
}

#[cfg(test)]
mod probe {
    use super::*;

    #[test]
    fn probe_hx_coefficient() {
        let r = Realization::level1(3, 4, -8, 8).unwrap();
        let v = r.vac();
        let x = r.gen(AffGen::Xp);
        let lhs = r.op_commutator(r.gen(AffGen::H), x, &v).unwrap();
        let xf = r.y(x, &v).unwrap();
        let mut xbi: TBiVSeries = BiVSeries::zero(r.order());
        xbi.cap_var2(xf.hi);
        let flo = crate::lattice::full_floor(&xf);
        xbi.declare_floors(0, flo, flo);
        for (d, w) in &xf.coeffs {
            xbi.insert(0, *d, w.clone());
        }
        let kernel = r.cartan_kernel(false);
        let rhs = xbi.scale_bi(&kernel);
        let rect = (r.ql.lat.z_lo, 3i64, r.ql.lat.z_lo, 3i64);
        if let Some((a, b)) = lhs.first_discrepancy(&rhs, rect) {
            println!("FIRST DISCREPANCY at ({}, {})", a, b);
            let d = lhs.coeff(a, b).sub(&rhs.coeff(a, b));
            for (s, c) in d.iter() {
                println!("  diff {:?} -> {}", s, c);
            }
        } else {
            println!("no discrepancy in rect");
        }
        for (n1, n2) in [(3i64, -4i64)] {
            println!("== ({}, {}) sound l/r: {} {} trunc l/r: {} {}", n1, n2,
                lhs.is_sound_at(n1, n2), rhs.is_sound_at(n1, n2),
                lhs.coeff(n1, n2).truncated(), rhs.coeff(n1, n2).truncated());
            // trace the rev term directly
            let inner_a = r.y(r.gen(AffGen::H), &v).unwrap();
            println!("inner_a coeff(3) trunc {} len {}", inner_a.coeff(3).truncated(), inner_a.coeff(3).len());
            let outer = r.y(x, &inner_a.coeff(3)).unwrap();
            println!("outer hi {} coeff(-4) trunc {} len {}", outer.hi, outer.coeff(-4).truncated(), outer.coeff(-4).len());
            for (e, w) in &outer.coeffs {
                println!("  outer[{}] trunc {} len {}", e, w.truncated(), w.len());
            }
        }
    }
}

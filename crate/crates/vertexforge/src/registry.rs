//! Identity registry: every machine-checkable identity with its stable id,
//! suite, and source anchor, dispatched against a run configuration.

use crate::config::RunConfig;
use crate::parafermion;
use crate::qaffine::{AffGen, CartanData, Realization};
use crate::qcalc::{self, ScalarMutation};
use crate::qlattice::{self, QlCtx, QlGen, QlMutation};
use crate::report::{CheckOutcome, IdentityRecord, Report, Status};
use rayon::prelude::*;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Module {
    Scalar,
    Qlattice,
    Qaffine,
    Parafermion,
}

impl Module {
    pub fn parse(s: &str) -> Option<Module> {
        match s.to_ascii_lowercase().as_str() {
            "scalar" | "qcalc" => Some(Module::Scalar),
            "qlattice" => Some(Module::Qlattice),
            "qaffine" => Some(Module::Qaffine),
            "parafermion" => Some(Module::Parafermion),
            _ => None,
        }
    }
}

pub struct IdentityEntry {
    pub id: &'static str,
    pub suite: &'static str,
    pub module: Module,
    pub anchor: &'static str,
}

/// The registry rows; runners are dispatched by id in `run_identity`.
pub fn entries() -> Vec<IdentityEntry> {
    use Module::*;
    let rows: Vec<(&'static str, &'static str, Module, &'static str)> = vec![
        // scalar layer
        ("lem-special-tau-1", "scalar", Scalar,
         "2h f0(2h dz)[r_j]_{q^dz} w{l,l'}_{ij}(z) = (q^{-rl dz}-q^{rl dz}) w{l,l'}^{1,+}_{ij}(z)"),
        ("lem-special-tau-2", "scalar", Scalar,
         "2h f0(2h dz)[r_i]_{q^dz} w{l,l'}_{ij}(z) = (q^{-rl' dz}-q^{rl' dz}) w{l,l'}^{2,+}_{ij}(z)"),
        ("lem-special-tau-3", "scalar", Scalar,
         "2h f0(2h dz)[r_i]_{q^dz} w{l,l'}^{1,pm} = log f(z)^{(q^{r_i a_ij}-q^{-r_i a_ij})(q^{rl'}-q^{-rl'})}"),
        ("lem-special-tau-4", "scalar", Scalar,
         "2h f0(2h dz)[r_j]_{q^dz} w{l,l'}^{2,pm} = log f(z)^{(q^{r_i a_ij}-q^{-r_i a_ij})(q^{rl}-q^{-rl})}"),
        ("control-scalar", "scalar", Scalar,
         "negative control: perturbed shift must fail"),
        // quantum lattice
        ("qybe", "qlattice", Qlattice,
         "S^{12}(z_1)S^{13}(z_1+z_2)S^{23}(z_2) = S^{23}(z_2)S^{13}(z_1+z_2)S^{12}(z_1)"),
        ("unitarity", "qlattice", Qlattice, "S^{21}(z)S(-z)=1"),
        ("shift", "qlattice", Qlattice, "[d (x) 1, S(z)] = -d/dz S(z)"),
        ("hexagon", "qlattice", Qlattice,
         "S(z_1)Y^{12}(z_2) = Y^{12}(z_2)S^{23}(z_1)S^{13}(z_1+z_2)"),
        ("s-locality", "qlattice", Qlattice,
         "Y(u,z_1)Y(v,z_2) ~ Y(z_2)(1 (x) Y(z_1))S(z_2-z_1)(v (x) u)"),
        ("s-table-vs-full", "qlattice", Qlattice,
         "S(z)(v (x) u) = sum tau(u_(2),-z)v_(1) (x) tau^{-1}(v_(2),z)u_(1)"),
        ("vacuum-property", "qlattice", Qlattice, "S(z)(vac (x) v) = vac (x) v"),
        ("eta-invariants", "qlattice", Qlattice,
         "eta_0(b_i,z) in h (x) zC[[z]]; eta(b_i,z)^- in h (x) hC[z^{-1}][[h]]"),
        ("eta-pairing", "qlattice", Qlattice,
         "<eta_l(b_i,z),b_j> = log f(z)^{[a_ij]_{q^{r_i}}[rl/r_j]_{q^{r_j}}q^{rl}} - a_ij rl/r_j log z"),
        ("aq1", "qlattice", Qlattice,
         "[b_i(z1),b_j(z2)] = <b_i,b_j> d delta - <eta''(b_i,z1-z2),b_j> + <eta''(b_j,z2-z1),b_i>"),
        ("aq2", "qlattice", Qlattice,
         "[b_i(z1),e_j^pm(z2)] = pm<b_i,b_j>e_j^pm delta + eta'-corrections"),
        ("aq3", "qlattice", Qlattice,
         "iota12 e^{-<eta,b>}P(z1-z2) e^pm e^pm = iota21 e^{-<eta,b>}P e^pm e^pm"),
        ("aq4", "qlattice", Qlattice,
         "iota12 e^{<eta,b>}Q(z1-z2) e^pm e^mp = iota21 e^{<eta,b>}Q e^mp e^pm"),
        ("aq5", "qlattice", Qlattice,
         "d/dz e^pm(z) = pm b(z)^+ e^pm pm e^pm b(z)^- - <eta'(b,0)^+,b> e^pm"),
        ("aq6", "qlattice", Qlattice,
         "exchange for e^+ e^- with (z1-z2)^{<b,b>} kernel, and (...)|_{z1=z2}=1"),
        ("control-qlattice", "qlattice", Qlattice,
         "negative control: perturbed eta must fail"),
        // quantum affine
        ("mwl-hh", "qaffine", Qaffine,
         "[h(z1),h(z2)] = [a]_{q^{r_i d2}}[rl/r_j]_{q^{r_j d2}}(iota12 q^{-rl d2}-iota21 q^{rl d2}) d1 d2 log f"),
        ("mwl-hx", "qaffine", Qaffine,
         "[h(z1),x^pm(z2)] = pm x^pm(z2)[a]_{q^{r_i d2}}(iota12 q^{-rl d2}-iota21 q^{rl d2}) d1 log f"),
        ("mwl-xx", "qaffine", Qaffine,
         "iota12 f^{-d+q^{-r_i a}} x^pm x^pm = iota21 f^{-d+q^{r_i a}} x^pm x^pm"),
        ("mwl-xpxm", "qaffine", Qaffine,
         "iota12 f^{d+dq^{2rl}} x^+ x^- = iota21 f^{d+dq^{2rl}+q^{-r_i a}-q^{r_i a}} x^- x^+"),
        ("ideal-a1-modes", "qaffine", Qaffine,
         "(x+)_0 x- = (vac - E_l(h))/(q-q^{-1}); (x+)_1 x- = -2rlh E_l(h)/(q-q^{-1})"),
        ("ideal-a1-series", "qaffine", Qaffine,
         "A_1(z) = Y(x+,z)^- x- - (vac/z - E_l(h)/(z+2rlh))/(q-q^{-1}) = 0"),
        ("integrability", "qaffine", Qaffine, "(x^pm)_{-1}^{rl/r_i} x^pm = 0"),
        ("qbinom", "qaffine", Qaffine,
         "(Delta(x^-))_{-1}^k (vacvac) = sum_t ... f0(2tr_ih) binom(k-1,t)_q binom(k,t)_q binom(k-1,t)^{-1}"),
        ("coassoc", "qaffine", Qaffine, "(Delta (x) 1)Delta = (1 (x) Delta)Delta"),
        ("e-factorization", "qaffine", Qaffine,
         "E_{l+l'}(Delta(h)) = q^{-2rl' d}E_l(h) (x) E_{l'}(h)"),
        ("s-delta-compat", "qaffine", Qaffine,
         "S_{{l,l'},l''}(z) o (Delta (x) 1) = (Delta (x) 1) o S_{l+l',l''}(z)"),
        ("s-composite-e", "qaffine", Qaffine,
         "S_{l,l'}(z)(E_l(h_j) (x) h_i) closed form"),
        ("s-composite-f1-h", "qaffine", Qaffine,
         "S_{l,1}(z)(f_1^pm (x) h_1) = f (x) h pm f (x) vac (x) dlog f^{[2]_q[l]_q(q-q^{-1})}"),
        ("s-composite-f1-f1", "qaffine", Qaffine,
         "S_{l,1}(z)(f_1^- (x) f_1^+) = f_1^- (x) f_1^+ (x) f(z)^{q^{l+1}+q^{l-1}-q^{1-l}-q^{-l-1}}"),
        ("level1-iso", "qaffine", Qaffine,
         "Y(e_a,z)e_{-a} = f(z)^{-1-q^2}E^+(a,z)vac; (e_a)_{-1}e_a = 0; E_1(h) = E^+(a,-2h)vac"),
        ("induction-delta-f", "qaffine", Qaffine,
         "Delta(f_1^+) = q^d exp(h~_1^+((l-1)h)) f_1^+ (x) q^{l d} f_1^+ * f0-scalar"),
        ("induction-delta-eplus", "qaffine", Qaffine,
         "Delta(E^+(h_1,z)vac) = q^{-d}E^+(h_1,z)vac (x) q^{l d}E^+(h_1,z)vac"),
        ("normal-ordering-k", "qaffine", Qaffine,
         "Y((x)_{-1}^k vac, z) = prod_{a=1}^{k-1} f0(2 a r_i h) :Y(x,z+2(k-1)r_ih)...Y(x,z):"),
        ("rat-extraction", "qaffine", Qaffine,
         "Rat Y(x,z1)Y(x,z2)vac = prod z_a/(z_a - 2(k-a)r_ih) (x)_{-1}^2 vac"),
        ("aqsp-exchange", "qaffine", Qaffine,
         "(AQ-sp1)-(AQ-sp6) for the fields (Y(h_1,z), Y(f_1^pm,z)) with eta_l"),
        ("aqsp7-normalization", "qaffine", Qaffine,
         "(AQ-sp7) unit limit adjudication for sqrt(c_{1,l}) vs 1"),
        ("control-qaffine", "qaffine", Qaffine,
         "negative control: perturbed eta must break the ideal relation"),
        // parafermion
        ("w-regularity", "parafermion", Parafermion, "Sing_z W_i(z) = 0"),
        ("w-commutant", "parafermion", Parafermion, "Y(h_i,z)^- W_j(z_1) = 0"),
        ("w-s-invariance", "parafermion", Parafermion,
         "S_{l,l'}(z_1)(W_i(z) (x) u) = W_i(z) (x) u"),
        ("w-classical-w2", "parafermion", Parafermion, "pi(W_i(0)) = W_i^2"),
        ("w-classical-w3", "parafermion", Parafermion,
         "pi((W_i(0) - W_i(-2rlh))/rlh) = dW_i^2 + W_i^3"),
        ("w0-closed-form", "parafermion", Parafermion,
         "W_i(0) = (x_i^+)_{-1}x_i^- - counterterms (closed form)"),
        ("control-parafermion", "parafermion", Parafermion,
         "negative control: perturbed eta must break W regularity"),
    ];
    rows.into_iter()
        .map(|(id, suite, module, anchor)| IdentityEntry {
            id,
            suite,
            module,
            anchor,
        })
        .collect()
}

/// Render the registry listing for the CLI.
pub fn listing() -> String {
    let mut out = String::new();
    for e in entries() {
        out.push_str(&format!("{:<24} [{}]  {}\n", e.id, e.suite, e.anchor));
    }
    out
}

fn scalar_levels() -> [(i64, i64); 4] {
    [(1, 1), (1, 2), (2, 1), (2, 2)]
}

fn run_scalar_identity(display: u8, cfg: &RunConfig) -> CheckOutcome {
    let cartan = match cfg.cartan_data() {
        Ok(c) => c,
        Err(e) => return CheckOutcome::fail(format!("config: {}", e)),
    };
    let order = cfg.hbar_order;
    let mutation = match cfg.mutant.as_deref() {
        Some("drop-shift") => Some(ScalarMutation::DropShift),
        _ => None,
    };
    let mut acc = CheckOutcome::pass();
    for (ell, ellp) in scalar_levels() {
        for i in 0..cartan.rank() {
            for j in 0..cartan.rank() {
                let res = qcalc::check_kernel_identity(
                    display, &cartan, i, j, ell, ellp, cfg.z_max, order, mutation,
                );
                let out = if res.vacuous {
                    CheckOutcome::inconclusive("empty sound window")
                } else if res.pass {
                    CheckOutcome::pass()
                } else {
                    CheckOutcome::fail(format!(
                        "display {} at (i,j,l,l') = ({},{},{},{}): {}",
                        display,
                        i,
                        j,
                        ell,
                        ellp,
                        res.discrepancy
                            .map(|(n, d)| format!("z^{}: {}", n, d))
                            .unwrap_or_default()
                    ))
                };
                acc = acc.merge(out);
            }
        }
    }
    acc
}

fn qlattice_ctx(cfg: &RunConfig) -> Result<QlCtx, CheckOutcome> {
    let cartan = cfg
        .cartan_data()
        .map_err(|e| CheckOutcome::fail(format!("config: {}", e)))?;
    let mut ctx = QlCtx::for_cartan(
        &cartan,
        cfg.level,
        cfg.hbar_order,
        cfg.weight_max,
        cfg.z_min,
        cfg.z_max,
    )
    .map_err(|e| CheckOutcome::fail(format!("build: {}", e)))?;
    if cfg.mutant.as_deref() == Some("perturb-eta") {
        qlattice::apply_mutation(&mut ctx, QlMutation::PerturbEta);
    }
    Ok(ctx)
}

fn on_states(
    ctx: &QlCtx,
    w: i64,
    mut f: impl FnMut(&crate::lattice::FockVector) -> Result<CheckOutcome, qlattice::QlError>,
) -> CheckOutcome {
    let mut acc = CheckOutcome::pass();
    for s in ctx.lat.states_up_to_weight(w) {
        let v = ctx.lat.state_vec(s);
        match f(&v) {
            Ok(out) => acc = acc.merge(out),
            Err(e) => return CheckOutcome::fail(format!("{}", e)),
        }
        if acc.status == Status::Fail {
            break;
        }
    }
    acc
}

fn run_qlattice(id: &str, cfg: &RunConfig) -> CheckOutcome {
    let ctx = match qlattice_ctx(cfg) {
        Ok(c) => c,
        Err(out) => return out,
    };
    let gens = ctx.generators();
    let wrap = |r: Result<CheckOutcome, qlattice::QlError>| match r {
        Ok(o) => o,
        Err(e) => CheckOutcome::fail(format!("{}", e)),
    };
    match id {
        "qybe" => {
            let mut acc = CheckOutcome::pass();
            for &a in &gens {
                for &b in &gens {
                    for &c in &gens {
                        acc = acc.merge(wrap(ctx.check_qybe(a, b, c)));
                        if acc.status == Status::Fail {
                            return acc;
                        }
                    }
                }
            }
            acc
        }
        "unitarity" => {
            let mut acc = CheckOutcome::pass();
            for &a in &gens {
                for &b in &gens {
                    acc = acc.merge(wrap(ctx.check_unitarity(a, b)));
                }
            }
            acc
        }
        "shift" => {
            let mut acc = CheckOutcome::pass();
            for &a in &gens {
                for &b in &gens {
                    acc = acc.merge(wrap(ctx.check_shift(a, b)));
                }
            }
            acc
        }
        "s-table-vs-full" => {
            let mut acc = CheckOutcome::pass();
            for &a in &gens {
                for &b in &gens {
                    acc = acc.merge(wrap(ctx.check_table_vs_full(a, b)));
                }
            }
            acc
        }
        "vacuum-property" => {
            let mut acc = CheckOutcome::pass();
            for &a in &gens {
                acc = acc.merge(wrap(ctx.check_table_vs_full(a, QlGen::Vac)));
                acc = acc.merge(wrap(ctx.check_table_vs_full(QlGen::Vac, a)));
            }
            acc
        }
        "hexagon" => {
            let mut acc = CheckOutcome::pass();
            let states = ctx.lat.states_up_to_weight(cfg.weight_max.min(4));
            for &u in &gens {
                for &v in &gens {
                    for s in &states {
                        let w = ctx.lat.state_vec(s.clone());
                        acc = acc.merge(wrap(ctx.check_hexagon(u, v, &w)));
                        if acc.status == Status::Fail {
                            return acc;
                        }
                    }
                }
            }
            acc
        }
        "s-locality" => {
            let mut acc = CheckOutcome::pass();
            let k = 2 * ctx.lat.data.gram(0, 0).abs() + 2;
            let states = ctx.lat.states_up_to_weight(cfg.weight_max.min(4));
            for &u in &gens {
                for &v in &gens {
                    for s in &states {
                        let w = ctx.lat.state_vec(s.clone());
                        acc = acc.merge(wrap(ctx.check_s_locality(u, v, &w, k)));
                        if acc.status == Status::Fail {
                            return acc;
                        }
                    }
                }
            }
            acc
        }
        "eta-invariants" => match ctx.eta.check_invariants() {
            Ok(()) => CheckOutcome::pass(),
            Err(e) => CheckOutcome::fail(e),
        },
        "eta-pairing" => {
            let cartan = cfg.cartan_data().expect("validated");
            let mut acc = CheckOutcome::pass();
            for i in 0..ctx.rank() {
                for j in 0..ctx.rank() {
                    acc = acc.merge(ctx.check_eta_pairing(&cartan, cfg.level, i, j, -4, 6));
                }
            }
            acc
        }
        "aq1" => on_states(&ctx, cfg.weight_max.min(4), |v| ctx.check_aq1(0, 0, v)),
        "aq2" => {
            let mut acc = on_states(&ctx, cfg.weight_max.min(4), |v| ctx.check_aq2(0, 0, 1, v));
            acc = acc.merge(on_states(&ctx, cfg.weight_max.min(4), |v| {
                ctx.check_aq2(0, 0, -1, v)
            }));
            acc
        }
        "aq3" => on_states(&ctx, cfg.weight_max.min(4), |v| {
            Ok(ctx
                .check_aq_exchange(3, 0, 0, 1, v)?
                .merge(ctx.check_aq_exchange(3, 0, 0, -1, v)?))
        }),
        "aq4" => on_states(&ctx, cfg.weight_max.min(4), |v| {
            Ok(ctx
                .check_aq_exchange(4, 0, 0, 1, v)?
                .merge(ctx.check_aq_exchange(4, 0, 0, -1, v)?))
        }),
        "aq5" => on_states(&ctx, cfg.weight_max.min(4), |v| {
            Ok(ctx.check_aq5(0, 1, v)?.merge(ctx.check_aq5(0, -1, v)?))
        }),
        "aq6" => on_states(&ctx, cfg.weight_max.min(4), |v| {
            ctx.check_aq_exchange(6, 0, 0, 1, v)
        }),
        "control-qlattice" => {
            // two documented mutants: a table perturbation breaks the
            // structural suite (unitarity), an eta perturbation breaks the
            // closed-form suite (eta-pairing)
            let mut t_ctx = match qlattice_ctx(cfg) {
                Ok(c) => c,
                Err(out) => return out,
            };
            qlattice::apply_mutation(&mut t_ctx, QlMutation::PerturbTable);
            let t_out = match t_ctx.check_unitarity(QlGen::E(0, 1), QlGen::E(0, -1)) {
                Ok(o) => o,
                Err(e) => return CheckOutcome::fail(format!("{}", e)),
            };
            let mut e_ctx = match qlattice_ctx(cfg) {
                Ok(c) => c,
                Err(out) => return out,
            };
            qlattice::apply_mutation(&mut e_ctx, QlMutation::PerturbEta);
            let cartan = cfg.cartan_data().expect("validated");
            let e_out = e_ctx.check_eta_pairing(&cartan, cfg.level, 0, 0, -4, 6);
            if t_out.status == Status::Fail && e_out.status == Status::Fail {
                CheckOutcome {
                    status: Status::Pass,
                    detail: Some(format!(
                        "mutants failed as required: table -> {}; eta -> {}",
                        t_out.detail.unwrap_or_default(),
                        e_out.detail.unwrap_or_default()
                    )),
                }
            } else {
                CheckOutcome::fail("a mutant did not produce a failure")
            }
        }
        other => CheckOutcome::fail(format!("unknown qlattice identity {}", other)),
    }
}

fn realization(cfg: &RunConfig) -> Result<Realization, CheckOutcome> {
    let mut r = Realization::level(cfg.level, cfg.hbar_order, cfg.weight_max, cfg.z_min, cfg.z_max)
        .map_err(|e| CheckOutcome::fail(format!("build: {}", e)))?;
    if cfg.mutant.as_deref() == Some("perturb-eta") {
        r.mutate(QlMutation::PerturbEta);
    }
    Ok(r)
}

fn on_tensor_states(
    r: &Realization,
    w: i64,
    mut f: impl FnMut(&crate::qaffine::TVector) -> Result<CheckOutcome, qlattice::QlError>,
) -> CheckOutcome {
    let mut acc = CheckOutcome::pass();
    for s in r.states_up_to_weight(w) {
        let v = r.state_vec(s);
        match f(&v) {
            Ok(out) => acc = acc.merge(out),
            Err(e) => return CheckOutcome::fail(format!("{}", e)),
        }
        if acc.status == Status::Fail {
            break;
        }
    }
    acc
}

fn run_qaffine(id: &str, cfg: &RunConfig) -> CheckOutcome {
    let wrap = |r: Result<CheckOutcome, qlattice::QlError>| match r {
        Ok(o) => o,
        Err(e) => CheckOutcome::fail(format!("{}", e)),
    };
    let r = match realization(cfg) {
        Ok(r) => r,
        Err(out) => return out,
    };
    let wcap = cfg.weight_max.min(4);
    match id {
        "mwl-hh" => on_tensor_states(&r, wcap, |v| r.check_mwl_hh(v)),
        "mwl-hx" => on_tensor_states(&r, wcap, |v| {
            Ok(r.check_mwl_hx(1, v)?.merge(r.check_mwl_hx(-1, v)?))
        }),
        "mwl-xx" => on_tensor_states(&r, wcap, |v| {
            Ok(r.check_mwl_xx_same(1, v)?.merge(r.check_mwl_xx_same(-1, v)?))
        }),
        "mwl-xpxm" => on_tensor_states(&r, wcap, |v| r.check_mwl_xpxm(v)),
        "ideal-a1-modes" => wrap(r.check_ideal_modes()),
        "ideal-a1-series" => wrap(r.check_ideal_series()),
        "integrability" => wrap(
            r.check_integrability(1)
                .and_then(|a| Ok(a.merge(r.check_integrability(-1)?))),
        ),
        "qbinom" => {
            let r2 = match Realization::level(2, cfg.hbar_order, cfg.weight_max, cfg.z_min, cfg.z_max) {
                Ok(r) => r,
                Err(e) => return CheckOutcome::fail(format!("{}", e)),
            };
            let mut acc = CheckOutcome::pass();
            for k in 1..=3u32 {
                acc = acc.merge(wrap(r2.check_qbinom(k)));
            }
            acc
        }
        "coassoc" => wrap(r.check_coassoc()),
        "e-factorization" => wrap(r.check_e_factorization()),
        "s-delta-compat" => wrap(r.check_s_delta_compat()),
        "s-composite-e" => wrap(r.check_s_composite_e()),
        "s-composite-f1-h" => wrap(
            r.check_s_composite_f1_h(1)
                .and_then(|a| Ok(a.merge(r.check_s_composite_f1_h(-1)?))),
        ),
        "s-composite-f1-f1" => wrap(r.check_s_composite_f1_f1()),
        "level1-iso" => {
            let r1 = match Realization::level1(cfg.hbar_order, cfg.weight_max, cfg.z_min, cfg.z_max)
            {
                Ok(r) => r,
                Err(e) => return CheckOutcome::fail(format!("{}", e)),
            };
            wrap(check_level1_iso(&r1))
        }
        "induction-delta-f" => wrap(
            r.check_delta_f(1)
                .and_then(|a| Ok(a.merge(r.check_delta_f(-1)?))),
        ),
        "induction-delta-eplus" => wrap(r.check_delta_eplus()),
        "normal-ordering-k" => {
            let mut acc = CheckOutcome::pass();
            for k in 2..=3u32 {
                acc = acc.merge(wrap(r.check_normal_ordering(k, 1)));
                acc = acc.merge(wrap(r.check_normal_ordering(k, -1)));
            }
            acc
        }
        "rat-extraction" => wrap(r.check_rat_extraction(1)),
        "aqsp-exchange" => {
            let mut acc = wrap(r.check_aqsp5(1, true)).merge(wrap(r.check_aqsp5(-1, true)));
            let states = r.states_up_to_weight(wcap);
            for s in states {
                let v = r.state_vec(s);
                acc = acc.merge(wrap(r.check_aqsp1(&v)));
                acc = acc.merge(wrap(r.check_aqsp2(1, &v, true)));
                acc = acc.merge(wrap(r.check_aqsp2(-1, &v, true)));
                acc = acc.merge(wrap(r.check_aqsp_exchange(3, (1, 1), &v, true)));
                acc = acc.merge(wrap(r.check_aqsp_exchange(3, (-1, -1), &v, true)));
                acc = acc.merge(wrap(r.check_aqsp_exchange(4, (1, -1), &v, true)));
                acc = acc.merge(wrap(r.check_aqsp_exchange(6, (1, -1), &v, true)));
                if acc.status == Status::Fail {
                    break;
                }
            }
            acc
        }
        "aqsp7-normalization" => wrap(r.adjudicate_normalization()),
        "control-qaffine" => {
            let mut mr = match realization(cfg) {
                Ok(r) => r,
                Err(out) => return out,
            };
            mr.mutate(QlMutation::PerturbEta);
            match mr.check_ideal_series() {
                Ok(out) if out.status == Status::Fail => CheckOutcome {
                    status: Status::Pass,
                    detail: Some(format!(
                        "mutant failed as required: {}",
                        out.detail.unwrap_or_default()
                    )),
                },
                Ok(_) => CheckOutcome::fail("mutant did not produce a failure"),
                Err(e) => CheckOutcome::fail(format!("{}", e)),
            }
        }
        other => CheckOutcome::fail(format!("unknown qaffine identity {}", other)),
    }
}

/// Level-1 isomorphism content: the three closed-form identities.
fn check_level1_iso(r: &Realization) -> Result<CheckOutcome, qlattice::QlError> {
    use crate::qcalc::QLaurentPoly;
    let order = r.order();
    // 1: Y(x+, z) x- = f(z)^{-1-q^2} E^+(a, z) vac
    let lhs = r.y(r.gen(AffGen::Xp), r.gen(AffGen::Xm))?;
    let g = QLaurentPoly::monomial(0, -1).sub(&QLaurentPoly::monomial(2, 1));
    let f = qcalc::f_series(r.ql.lat.z_hi + order as i64 + 6, order);
    let scal = qcalc::power_qexp_mult(&f, &g).map_err(qlattice::QlError::Series)?;
    let eplus = r.ql.lat.e_plus(&[1], &r.ql.lat.vacuum_vec());
    let mut ok = CheckOutcome::pass();
    let cap = lhs.hi.min(3);
    for n in -4..=cap {
        let mut want: crate::qaffine::TVector = crate::lattice::Vector::zero(order);
        for (d, x) in &eplus.coeffs {
            let c = scal.coeff(n - d);
            if !c.is_zero() {
                for (s, cc) in x.iter() {
                    want.insert(vec![s.clone()], cc.mul(&c));
                }
            }
        }
        if n - eplus.hi > scal.hi() {
            continue;
        }
        if lhs.coeff(n) != want {
            ok = ok.merge(CheckOutcome::fail(format!(
                "Y(x+,z)x- closed form defect at z^{}",
                n
            )));
        }
    }
    // 2: (x+)_{-1} x+ = 0
    let m = r.mode(r.gen(AffGen::Xp), -1, r.gen(AffGen::Xp))?;
    if !m.is_zero() {
        ok = ok.merge(CheckOutcome::fail("(e_a)_{-1} e_a does not vanish"));
    }
    // 3: E_1(h) = E^+(a, -2h) vac
    let e = r.e_ell_vec()?.clone();
    let closed = r
        .ql
        .lat
        .e_plus(&[1], &r.ql.lat.vacuum_vec())
        .eval_at_h(&crate::exactnum::rat_int(-2))
        .expect("regular")
        .map_states(|s| vec![s.clone()]);
    if !e.sub(&closed).is_zero() {
        ok = ok.merge(CheckOutcome::fail("E_1(h) closed form defect"));
    }
    Ok(ok)
}

fn run_parafermion(id: &str, cfg: &RunConfig) -> CheckOutcome {
    let r = match realization(cfg) {
        Ok(r) => r,
        Err(out) => return out,
    };
    let w = match parafermion::build_w(&r) {
        Ok(w) => w,
        Err(e) => return CheckOutcome::fail(format!("{}", e)),
    };
    let wrap = |r: Result<CheckOutcome, parafermion::WError>| match r {
        Ok(o) => o,
        Err(e) => CheckOutcome::fail(format!("{}", e)),
    };
    match id {
        "w-regularity" => parafermion::check_regularity(&r, &w),
        "w-commutant" => {
            let mut acc = CheckOutcome::pass();
            for n in 0..=3 {
                if n > w.w.hi {
                    break;
                }
                let v = w.w.coeff(n);
                if v.is_zero() {
                    continue;
                }
                acc = acc.merge(wrap(parafermion::check_commutant(&r, &v)));
            }
            acc
        }
        "w-s-invariance" => {
            let mut acc = CheckOutcome::pass();
            let w0 = w.at_zero();
            for g in [AffGen::H, AffGen::Xp, AffGen::Xm] {
                acc = acc.merge(wrap(parafermion::check_s_invariance(&r, &w0, g)));
            }
            if let Some(wshift) = w.at_minus_2lh() {
                acc = acc.merge(wrap(parafermion::check_s_invariance(&r, &wshift, AffGen::H)));
            }
            acc
        }
        "w-classical-w2" => wrap(parafermion::check_classical_w2(&r, &w)),
        "w-classical-w3" => wrap(parafermion::check_classical_w3(&r, &w)),
        "w0-closed-form" => wrap(parafermion::check_w0_closed_form(&r, &w)),
        "control-parafermion" => {
            let mut mr = match realization(cfg) {
                Ok(r) => r,
                Err(out) => return out,
            };
            mr.mutate(QlMutation::PerturbEta);
            let mw = match parafermion::build_w(&mr) {
                Ok(w) => w,
                Err(e) => return CheckOutcome::fail(format!("{}", e)),
            };
            let out = parafermion::check_regularity(&mr, &mw);
            if out.status == Status::Fail {
                CheckOutcome {
                    status: Status::Pass,
                    detail: Some(format!(
                        "mutant failed as required: {}",
                        out.detail.unwrap_or_default()
                    )),
                }
            } else {
                CheckOutcome::fail("mutant did not produce a failure")
            }
        }
        other => CheckOutcome::fail(format!("unknown parafermion identity {}", other)),
    }
}

pub fn run_identity(id: &str, cfg: &RunConfig) -> CheckOutcome {
    match id {
        "lem-special-tau-1" => run_scalar_identity(1, cfg),
        "lem-special-tau-2" => run_scalar_identity(2, cfg),
        "lem-special-tau-3" => run_scalar_identity(3, cfg),
        "lem-special-tau-4" => run_scalar_identity(4, cfg),
        "control-scalar" => {
            let mut mcfg = cfg.clone();
            mcfg.mutant = Some("drop-shift".to_string());
            let out = run_scalar_identity(1, &mcfg);
            if out.status == Status::Fail {
                CheckOutcome {
                    status: Status::Pass,
                    detail: Some(format!(
                        "mutant failed as required: {}",
                        out.detail.unwrap_or_default()
                    )),
                }
            } else {
                CheckOutcome::fail("mutant did not produce a failure")
            }
        }
        _ => {
            let entry_module = entries()
                .into_iter()
                .find(|e| e.id == id)
                .map(|e| e.module);
            match entry_module {
                Some(Module::Qlattice) => run_qlattice(id, cfg),
                Some(Module::Qaffine) => run_qaffine(id, cfg),
                Some(Module::Parafermion) => run_parafermion(id, cfg),
                Some(Module::Scalar) => CheckOutcome::fail("unhandled scalar id"),
                None => CheckOutcome::fail(format!("unknown identity {}", id)),
            }
        }
    }
}

/// Run the selected suites (or every suite of a module) and assemble the
/// report; execution is order-stable regardless of the work pool.
pub fn run(module: Module, cfg: &RunConfig) -> Report {
    let selected: Vec<IdentityEntry> = entries()
        .into_iter()
        .filter(|e| e.module == module)
        .filter(|e| {
            cfg.suites.is_empty()
                || cfg.suites.iter().any(|s| s == e.id || s == e.suite)
        })
        .collect();
    let mut records: Vec<IdentityRecord> = selected
        .par_iter()
        .map(|e| {
            let start = Instant::now();
            let out = run_identity(e.id, cfg);
            IdentityRecord {
                suite: e.suite.to_string(),
                identity_id: e.id.to_string(),
                paper_anchor: e.anchor.to_string(),
                status: out.status,
                discrepancy: out.detail,
                wall_time_ms: start.elapsed().as_millis(),
            }
        })
        .collect();
    records.sort_by(|a, b| a.identity_id.cmp(&b.identity_id));
    Report { records }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_has_enough_identities() {
        let all = entries();
        assert!(all.len() >= 25, "only {} identities registered", all.len());
        for e in &all {
            assert!(!e.anchor.is_empty(), "{} lacks an anchor", e.id);
        }
        let listing = listing();
        assert!(listing.contains("qybe"));
        assert!(listing.contains("w-regularity"));
    }

    #[test]
    fn unknown_identity_fails_cleanly() {
        let cfg = RunConfig::default();
        let out = run_identity("no-such-identity", &cfg);
        assert_eq!(out.status, Status::Fail);
    }
}

//! Successive decimation and finite-precision unit-root trivialization.

use std::cmp::Ordering;

use crate::dmodule::{matrix_inverse, DModule};
use crate::error::{Error, Result};
use crate::monoval::Sublattice;
use crate::residue::{as_reduce, as_solve_exact, ASReduction, ResidueSeries};
use crate::series::{FakeSeries, SeriesMatrix};

/// One unsolvable residue entry at the obstruction level.
#[derive(Clone, Debug)]
pub struct ObstructionEntry {
    pub row: usize,
    pub col: usize,
    pub reduction: ASReduction,
}

#[derive(Clone, Debug)]
pub struct Obstruction {
    pub level: i32,
    pub entries: Vec<ObstructionEntry>,
}

/// Outcome of a solver run.
#[derive(Clone, Debug)]
pub struct GaugeReport {
    pub u: SeriesMatrix,
    /// certified lower bound on w of the defect of the claimed identity
    pub residual_valuation: i32,
    /// w(U − I)
    pub floor: i32,
    /// the output is supported on the intersection of these sublattices
    pub support: Vec<Sublattice>,
    pub complete: bool,
    pub obstruction: Option<Obstruction>,
    pub iterations: usize,
    /// working radius r = a/b with certified w_r > 0, when relevant
    pub radius: Option<(i128, i128)>,
    /// gauge-transformed connection matrix (decimate_mu)
    pub transformed: Option<SeriesMatrix>,
    /// gauge-transformed module (decimate_full, trivialize_unit_root)
    pub module: Option<DModule>,
    pub notes: Vec<String>,
}

impl GaugeReport {
    fn new(u: SeriesMatrix) -> Self {
        GaugeReport {
            u,
            residual_valuation: 0,
            floor: 0,
            support: Vec::new(),
            complete: false,
            obstruction: None,
            iterations: 0,
            radius: None,
            transformed: None,
            module: None,
            notes: Vec::new(),
        }
    }
}

fn w_minus_identity(u: &SeriesMatrix) -> Result<i32> {
    let id = SeriesMatrix::identity(u.ctx(), u.dim(), u.prec());
    Ok(u.sub(&id)?.w())
}

fn off_kernel(m: &SeriesMatrix, mu: &[i64], p: u64) -> SeriesMatrix {
    let val = m.ctx().valuation().clone();
    m.map(|e| e.filter_terms(|z, _| !val.in_kernel_mod_p(z, mu, p)))
}

/// True when every stored term of every matrix lies in all listed sublattices.
pub fn supported_on(ms: &[&SeriesMatrix], support: &[Sublattice]) -> bool {
    ms.iter().all(|m| {
        let val = m.ctx().valuation().clone();
        m.entries().iter().all(|e| {
            e.terms()
                .keys()
                .all(|z| support.iter().all(|s| val.sublattice_test(z, s)))
        })
    })
}

/// Largest r = 1/t (t ≤ 64) with certified w_r > 0 on every nonzero entry.
pub fn working_radius(ms: &[&SeriesMatrix]) -> Option<(i128, i128)> {
    'outer: for t in 1..=64i128 {
        for m in ms {
            let val = m.ctx().valuation().clone();
            for e in m.entries() {
                if e.is_zero() {
                    continue;
                }
                match e.gauss_valuation(1, t) {
                    Ok(g) if g.certified && val.sign(&g.value) == Ordering::Greater => {}
                    _ => continue 'outer,
                }
            }
        }
        return Some((1, t));
    }
    None
}

/// Gauge N_μ onto L_μ = {z : μ(z) ∈ pZ} by U_{j+1} = U_j(I − X_j).
pub fn decimate_mu(n_mu: &SeriesMatrix, mu: &[i64], budget: usize) -> Result<GaugeReport> {
    let ctx = n_mu.ctx().clone();
    let ring = ctx.ring().clone();
    let p = ring.p();
    let val = ctx.valuation().clone();
    let prec = n_mu.prec();
    if !n_mu.is_zero() && n_mu.w() < 1 {
        return Err(Error::Precondition(format!(
            "w(N_mu) = {} must be positive",
            n_mu.w()
        )));
    }
    let radius = working_radius(&[n_mu]);
    if radius.is_none() && !n_mu.is_zero() {
        return Err(Error::Precondition(
            "no working radius with w_r(N_mu) > 0".into(),
        ));
    }
    let n = n_mu.dim();
    let id = SeriesMatrix::identity(&ctx, n, prec);
    let mut report = GaugeReport::new(id.clone());
    report.radius = radius;
    report.support = vec![Sublattice::Kernel { mu: mu.to_vec(), p }];
    let mut u = id.clone();
    let mut cur = n_mu.clone();
    let mut last_measure: Option<(i32, usize)> = None;
    while report.iterations < budget {
        let off = off_kernel(&cur, mu, p);
        if off.is_zero() {
            break;
        }
        // lexicographic progress: (digit, −off-support size)
        let size: usize = off.entries().iter().map(|e| e.len()).sum();
        let measure = (off.w(), usize::MAX - size);
        if last_measure.is_some_and(|prev| measure <= prev) {
            report
                .notes
                .push("support reduction stagnated inside the window".into());
            break;
        }
        last_measure = Some(measure);
        // X = Σ c_z/μ(z) {z} over off-kernel terms; μ(z) is a p-adic unit there
        let x = off.try_map(|e| {
            let terms = e
                .terms()
                .iter()
                .map(|(z, c)| {
                    let inv = ring.from_rational(1, val.pair(mu, z) as i128, prec + ring.cap())?;
                    Ok((z.clone(), ring.mul(c, &inv)))
                })
                .collect::<Result<Vec<_>>>()?;
            let s = FakeSeries::from_terms(&ctx, terms, e.prec());
            Ok(if e.lambda_hi().is_finite() {
                s.truncate_lambda(e.lambda_hi())
            } else {
                s
            })
        })?;
        let v = id.sub(&x)?;
        let vinv = matrix_inverse(&v)?;
        // N' = V⁻¹NV + V⁻¹∂_μV with ∂_μV = −off
        cur = vinv.mul(&cur.mul(&v)?.sub(&off)?)?.truncate_prec(prec);
        u = u.mul(&v)?.truncate_prec(prec);
        report.iterations += 1;
    }
    let off = off_kernel(&cur, mu, p);
    report.complete = off.is_zero();
    if !report.complete && report.iterations >= budget {
        report
            .notes
            .push(format!("window budget of {budget} passes exhausted"));
    }
    report.residual_valuation = off.w();
    report.floor = w_minus_identity(&u)?;
    report.u = u;
    report.transformed = Some(cur);
    Ok(report)
}

/// Decimate N_1..N_m in turn so that the conjugated A ends up supported on pL.
pub fn decimate_full(m: &DModule, budget: usize) -> Result<GaugeReport> {
    let ns = m
        .connection()
        .ok_or_else(|| Error::Precondition("decimation needs a connection".into()))?;
    let ctx = m.ctx().clone();
    let p = ctx.ring().p();
    let prec = m.prec();
    let rank = m.rank();
    let id = SeriesMatrix::identity(&ctx, rank, prec);
    if !m.a().sub(&id)?.is_zero() && m.a().sub(&id)?.w() < 1 {
        return Err(Error::Precondition("w(A − I) must be positive".into()));
    }
    for (i, ni) in ns.iter().enumerate() {
        if !ni.is_zero() && ni.w() < 1 {
            return Err(Error::Precondition(format!(
                "w(N_{}) must be positive",
                i + 1
            )));
        }
    }
    let min_wn = ns.iter().map(|x| x.w()).min().unwrap_or(prec);
    let comp = m.check_compatibility()?;
    if !comp.pass {
        return Err(Error::Precondition(format!(
            "module is not compatible (residual valuation {})",
            comp.valuation
        )));
    }
    let mut report = GaugeReport::new(id.clone());
    let refs: Vec<&SeriesMatrix> = ns.iter().collect();
    report.radius = working_radius(&refs);
    let mut cur = m.clone();
    let mut u = id;
    let mut support: Vec<Sublattice> = Vec::new();
    for i in 0..ctx.rank() {
        let mut mu = vec![0i64; ctx.rank()];
        mu[i] = 1;
        let ni = cur.connection().expect("connection present")[i].clone();
        let step = decimate_mu(&ni, &mu, budget).map_err(|e| match e {
            Error::Precondition(s) => Error::Precondition(format!("stage {}: {s}", i + 1)),
            other => other,
        })?;
        report.iterations += step.iterations;
        report
            .notes
            .extend(step.notes.iter().map(|s| format!("stage {}: {s}", i + 1)));
        cur = cur.gauge_change(&step.u)?;
        u = u.mul(&step.u)?.truncate_prec(prec);
        support.push(Sublattice::Kernel { mu: mu.clone(), p });
        let mut mats: Vec<&SeriesMatrix> = vec![cur.a()];
        mats.extend(cur.connection().expect("connection present").iter());
        if !step.complete || !supported_on(&mats, &support) {
            report
                .notes
                .push(format!("stage {}: support not reached at precision", i + 1));
            support.pop();
            report.support = support;
            report.complete = false;
            report.floor = w_minus_identity(&u)?;
            report.residual_valuation = step.residual_valuation;
            report.u = u;
            report.module = Some(cur);
            return Ok(report);
        }
    }
    report.floor = w_minus_identity(&u)?;
    if report.floor < min_wn {
        report.notes.push(format!(
            "floor {} below min w(N_i) = {min_wn}",
            report.floor
        ));
    }
    report.support = vec![Sublattice::QPowerMultiple { q: p, j: 1 }];
    report.complete = supported_on(&[cur.a()], &report.support);
    report.residual_valuation = prec;
    report.u = u;
    report.module = Some(cur);
    Ok(report)
}

/// Hensel-style digit lifting of U with AU^σ ≡ U mod π^target, solving
/// C^q − C = −B̄ entrywise at each level; an unsolvable entry is returned as
/// an obstruction.
pub fn trivialize_unit_root(m: &DModule, target: i32) -> Result<GaugeReport> {
    let ctx = m.ctx().clone();
    let ring = ctx.ring().clone();
    let p = ring.p();
    if !m.lift().is_standard() {
        return Err(Error::Precondition(
            "trivialization uses a standard lift".into(),
        ));
    }
    let prec = m.a().prec().min(target);
    let rank = m.rank();
    let a = m.a().truncate_prec(prec);
    let id = SeriesMatrix::identity(&ctx, rank, prec);
    let e0 = a.sub(&id)?;
    let h = e0.w();
    let h_min = if p == 2 { 2 } else { 1 };
    if !e0.is_zero() && h < h_min {
        return Err(Error::Precondition(format!(
            "w(A − I) = {h} is below the required {h_min}"
        )));
    }
    let mut report = GaugeReport::new(id.clone());
    let lift = m.lift().clone();
    let mut u = id.clone();
    loop {
        let uinv = matrix_inverse(&u)?;
        let e = uinv
            .mul(&a)?
            .mul(&lift.apply_matrix(&u)?)?
            .sub(&id)?
            .truncate_prec(prec);
        if e.is_zero() {
            break;
        }
        let k = e.w();
        if k >= prec {
            break;
        }
        let b = e.map(|x| x.shift_pi(-k));
        let mut c_entries = Vec::with_capacity(rank * rank);
        let mut obstructions = Vec::new();
        for r in 0..rank {
            for c in 0..rank {
                let bbar = ResidueSeries::reduce(b.get(r, c))?;
                if bbar.is_zero() {
                    c_entries.push(FakeSeries::zero(&ctx, prec - k));
                    continue;
                }
                if let Some(y) = as_solve_exact(&bbar)? {
                    c_entries.push(y.lift(prec - k));
                    continue;
                }
                let red = as_reduce(&bbar)?;
                if red.canonical.is_zero() {
                    report.notes.push(format!(
                        "level {k}: entry ({r},{c}) solved only inside a λ-window"
                    ));
                    c_entries.push(red.certificate.lift(prec - k));
                } else {
                    obstructions.push(ObstructionEntry {
                        row: r,
                        col: c,
                        reduction: red,
                    });
                    c_entries.push(FakeSeries::zero(&ctx, prec - k));
                }
            }
        }
        if !obstructions.is_empty() {
            report.obstruction = Some(Obstruction {
                level: k,
                entries: obstructions,
            });
            break;
        }
        let cm = SeriesMatrix::from_rows(c_entries.chunks(rank).map(|r| r.to_vec()).collect())?;
        let step = id.add(&cm.map(|x| x.shift_pi(k)))?;
        u = u.mul(&step)?.truncate_prec(prec);
        report.iterations += 1;
        if report.iterations > 4 * prec as usize + 8 {
            return Err(Error::PrecisionExhausted(
                "digit lifting did not converge".into(),
            ));
        }
    }
    let defect = a.mul(&lift.apply_matrix(&u)?)?.sub(&u)?.truncate_prec(prec);
    report.residual_valuation = if defect.is_zero() { prec } else { defect.w() };
    report.complete = report.obstruction.is_none() && defect.is_zero();
    report.floor = w_minus_identity(&u)?;
    report.u = u;
    Ok(report)
}

/// Trivialization after extending the residue field to degree s.
pub fn trivialize_extended(m: &DModule, target: i32, s: usize) -> Result<(DModule, GaugeReport)> {
    let (big, _) = m.extend_residue(s)?;
    let rep = trivialize_unit_root(&big, target)?;
    Ok((big, rep))
}

/// ∇v = 0: Δ_i(v) vanishes at precision for every i.
pub fn horizontal_check(m: &DModule, v: &[FakeSeries]) -> Result<bool> {
    let rank = m.ctx().rank();
    for i in 0..rank {
        let mut mu = vec![0i64; rank];
        mu[i] = 1;
        if m.delta_action(&mu, v)?.iter().any(|x| !x.is_zero()) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// F(v) = v: A·v^σ ≡ v at precision.
pub fn f_invariant_check(m: &DModule, v: &[FakeSeries]) -> Result<bool> {
    let vs = v
        .iter()
        .map(|x| m.lift().apply(x))
        .collect::<Result<Vec<_>>>()?;
    let fv = m.a().mul_vec(&vs)?;
    for (x, y) in fv.iter().zip(v) {
        if !x.sub(y)?.is_zero() {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffring::CoeffRing;
    use crate::frobenius::FrobeniusLift;
    use crate::monoval::{point, MonomialValuation};
    use crate::residue::positioning_bound_of;
    use crate::series::Context;
    use std::sync::Arc;

    fn ctx(prec: i32) -> Arc<Context> {
        Context::new(
            CoeffRing::prime_field(5, prec).unwrap(),
            Arc::new(MonomialValuation::sqrt2_plane()),
        )
    }

    fn mono(ctx: &Arc<Context>, c: i64, z: &[i64]) -> FakeSeries {
        FakeSeries::monomial(ctx, z, ctx.ring().from_int(c, ctx.prec()))
    }

    #[test]
    fn decimate_rank_one() {
        let ctx = ctx(6);
        let n = SeriesMatrix::from_rows(vec![vec![mono(&ctx, 5, &[1, 0])]]).unwrap();
        let r = decimate_mu(&n, &[1, 0], 32).unwrap();
        assert!(r.complete);
        assert!(r.floor >= 1);
        let t = r.transformed.unwrap();
        assert!(supported_on(&[&t], &r.support));
        let kernel = SeriesMatrix::from_rows(vec![vec![mono(&ctx, 5, &[5, 1])]]).unwrap();
        let r = decimate_mu(&kernel, &[1, 0], 32).unwrap();
        assert_eq!(r.iterations, 0);
    }

    #[test]
    fn synthesized_gauge_is_recovered() {
        let ctx = ctx(6);
        let s = FrobeniusLift::standard(&ctx);
        let v = SeriesMatrix::from_rows(vec![
            vec![
                FakeSeries::one(&ctx, 6)
                    .add(&mono(&ctx, 25, &[1, -1]))
                    .unwrap(),
                mono(&ctx, 50, &[0, 1]),
            ],
            vec![mono(&ctx, 25, &[-1, 0]), FakeSeries::one(&ctx, 6)],
        ])
        .unwrap();
        let a = v
            .mul(&matrix_inverse(&s.apply_matrix(&v).unwrap()).unwrap())
            .unwrap();
        let m = DModule::new(s.clone(), a, None).unwrap();
        let r = trivialize_unit_root(&m, 6).unwrap();
        assert!(r.obstruction.is_none());
        assert!(r.residual_valuation >= 6);
        for j in 0..2 {
            assert!(f_invariant_check(&m, &r.u.column(j)).unwrap());
        }
    }

    #[test]
    fn obstruction_for_negative_off_lattice_term() {
        let ctx = ctx(6);
        let s = FrobeniusLift::standard(&ctx);
        let a = SeriesMatrix::from_rows(vec![vec![FakeSeries::one(&ctx, 6)
            .add(&mono(&ctx, 5, &[-1, 0]))
            .unwrap()]])
        .unwrap();
        let m = DModule::new(s, a, None).unwrap();
        let r = trivialize_unit_root(&m, 6).unwrap();
        let ob = r.obstruction.unwrap();
        assert_eq!(ob.level, 1);
        let can = &ob.entries[0].reduction.canonical;
        assert_eq!(can.residue_terms()[0].0, point(&[-1, 0]));
        let pb = positioning_bound_of(can).unwrap();
        assert_eq!(pb.c, ctx.valuation().lambda(&[1, 0]));
    }

    #[test]
    fn trivial_module_checks() {
        let ctx = ctx(6);
        let s = FrobeniusLift::standard(&ctx);
        let t = DModule::trivial(&s, 2, 6);
        let e1 = vec![FakeSeries::one(&ctx, 6), FakeSeries::zero(&ctx, 6)];
        assert!(horizontal_check(&t, &e1).unwrap());
        assert!(f_invariant_check(&t, &e1).unwrap());
        assert!(!f_invariant_check(&t.twist(1), &e1).unwrap());
        let r = decimate_full(&t, 8).unwrap();
        assert!(r.complete);
        assert_eq!(r.floor, 6);
    }
}

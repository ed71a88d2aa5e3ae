//! The residue monomial field E = k((L))_λ at truncation, Artin–Schreier
//! reduction and the positioning bound.

use std::cmp::Ordering;
use std::sync::Arc;

use crate::coeffring::{CoeffRing, Digits, RingEmbedding};
use crate::error::{Error, Result};
use crate::monoval::{LambdaBound, LambdaValue, Point};
use crate::series::{Context, FakeSeries};

/// A series with coefficients in the residue field (stored at precision 1).
#[derive(Clone, Debug, PartialEq)]
pub struct ResidueSeries(FakeSeries);

impl ResidueSeries {
    /// Reduction mod π of an integral series.
    pub fn reduce(x: &FakeSeries) -> Result<Self> {
        if x.terms().values().any(|c| c.val_bound() < 0) {
            return Err(Error::Domain(
                "reduction of a series with negative π-exponents".into(),
            ));
        }
        if x.prec() < 1 {
            return Err(Error::PrecisionExhausted(
                "no residue digit is known".into(),
            ));
        }
        Ok(ResidueSeries(x.truncate_prec(1)))
    }

    pub fn zero(ctx: &Arc<Context>) -> Self {
        ResidueSeries(FakeSeries::zero(ctx, 1))
    }

    /// c{z} with c in F_q.
    pub fn monomial(ctx: &Arc<Context>, z: &[i64], c: &[u64]) -> Self {
        ResidueSeries(FakeSeries::monomial(ctx, z, ctx.ring().lift_residue(c, 1)))
    }

    pub fn from_terms(ctx: &Arc<Context>, terms: &[(Point, Digits)]) -> Self {
        let ring = ctx.ring();
        let v = terms
            .iter()
            .map(|(z, c)| (z.clone(), ring.lift_residue(c, 1)))
            .collect();
        ResidueSeries(FakeSeries::from_terms(ctx, v, 1))
    }

    pub fn series(&self) -> &FakeSeries {
        &self.0
    }

    pub fn ctx(&self) -> &Arc<Context> {
        self.0.ctx()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn lambda_hi(&self) -> &LambdaBound {
        self.0.lambda_hi()
    }

    /// Residue coefficient at z.
    pub fn coeff(&self, z: &[i64]) -> Digits {
        let ring = self.0.ring();
        ring.residue(&self.0.coeff(z)).expect("integral")
    }

    /// Terms as (z, residue coefficient), λ-increasing.
    pub fn residue_terms(&self) -> Vec<(Point, Digits)> {
        let ring = self.0.ring();
        self.0
            .sorted_terms()
            .into_iter()
            .map(|(z, c)| (z, ring.residue(&c).expect("integral")))
            .collect()
    }

    /// Lift with coefficient digits in [0, p) at precision `prec`.
    pub fn lift(&self, prec: i32) -> FakeSeries {
        let ring = self.0.ring().clone();
        let terms = self
            .residue_terms()
            .into_iter()
            .map(|(z, c)| (z, ring.lift_residue(&c, prec)))
            .collect();
        let x = FakeSeries::from_terms(self.ctx(), terms, prec);
        match self.0.lambda_hi() {
            LambdaBound::PosInf => x,
            hi => {
                let hi = hi.clone();
                x.truncate_lambda(&hi)
            }
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        Ok(ResidueSeries(self.0.add(&other.0)?))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        Ok(ResidueSeries(self.0.sub(&other.0)?))
    }

    pub fn neg(&self) -> Self {
        ResidueSeries(self.0.neg())
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        Ok(ResidueSeries(self.0.mul(&other.0)?))
    }

    pub fn truncate_lambda(&self, hi: &LambdaBound) -> Self {
        ResidueSeries(self.0.truncate_lambda(hi))
    }

    pub fn decompose_by_sign(&self) -> (Self, Self, Self) {
        let (a, b, c) = self.0.decompose_by_sign();
        (ResidueSeries(a), ResidueSeries(b), ResidueSeries(c))
    }

    /// Least λ over the support.
    pub fn v_lambda(&self) -> LambdaBound {
        self.0.v_lambda()
    }

    /// x ↦ x^(q^steps) (forward) or its inverse (negative steps).
    pub fn frobenius(&self, steps: i64) -> Result<Self> {
        let ring = self.0.ring().clone();
        let q = ring.q() as i64;
        let qs = q
            .checked_pow(steps.unsigned_abs() as u32)
            .ok_or_else(|| Error::Domain("Frobenius power overflows".into()))?;
        if steps >= 0 {
            return Ok(ResidueSeries(self.0.map_terms(
                |z| z.iter().map(|c| c * qs).collect(),
                |c| ring.lift_residue(&ring.fq_qpow(&ring.residue(c).expect("integral"), steps), 1),
                qs as i128,
                1,
            )));
        }
        if let Some(z) = self
            .0
            .terms()
            .keys()
            .find(|z| z.iter().any(|c| c % qs != 0))
        {
            return Err(Error::Domain(format!(
                "support point {} is not divisible by q^{}",
                FakeSeries::format_point(z),
                -steps
            )));
        }
        Ok(ResidueSeries(self.0.map_terms(
            |z| z.iter().map(|c| c / qs).collect(),
            |c| ring.lift_residue(&ring.fq_qpow(&ring.residue(c).expect("integral"), steps), 1),
            1,
            qs as i128,
        )))
    }

    /// Move into the context of a residue field extension.
    pub fn extend(&self, ctx: &Arc<Context>, emb: &RingEmbedding) -> Self {
        ResidueSeries(
            self.0
                .change_ring(ctx, |c| emb.target().truncate(&emb.apply(c), 1)),
        )
    }

    pub fn to_text(&self) -> String {
        self.0.to_text()
    }
}

/// Canonical forms for t ↦ t^q − t on the residue field, by F_p-linear algebra.
struct ConstantSolver {
    p: u64,
    /// (image row with pivot coordinate 1, preimage, pivot)
    rows: Vec<(Vec<u64>, Vec<u64>, usize)>,
}

impl ConstantSolver {
    fn new(ring: &CoeffRing) -> Self {
        let p = ring.p();
        let f = ring.degree();
        let mut rows: Vec<(Vec<u64>, Vec<u64>, usize)> = Vec::new();
        for j in 0..f {
            let mut e = ring.fq_zero();
            e[j] = 1;
            let img = ring.fq_sub(&ring.fq_qpow(&e, 1), &e);
            let mut v: Vec<u64> = img.to_vec();
            let mut pre = vec![0u64; f];
            pre[j] = 1;
            for (row, rpre, piv) in &rows {
                let c = v[*piv];
                if c != 0 {
                    sub_scaled(&mut v, row, c, p);
                    sub_scaled(&mut pre, rpre, c, p);
                }
            }
            if let Some(piv) = v.iter().position(|&c| c != 0) {
                let inv = crate::coeffring::inv_mod(v[piv], p).expect("nonzero mod p");
                scale_in_place(&mut v, inv, p);
                scale_in_place(&mut pre, inv, p);
                rows.push((v, pre, piv));
            }
        }
        ConstantSolver { p, rows }
    }

    /// Returns (canonical representative, a) with c + a^q − a = representative.
    fn reduce(&self, c: &[u64]) -> (Vec<u64>, Vec<u64>) {
        let p = self.p;
        let mut v: Vec<u64> = c.iter().map(|&x| x % p).collect();
        let mut pre = vec![0u64; v.len()];
        for (row, rpre, piv) in &self.rows {
            let k = v[*piv];
            if k != 0 {
                sub_scaled(&mut v, row, k, p);
                // accumulate −k·pre so that T(a) = rep − c
                sub_scaled(&mut pre, rpre, k, p);
            }
        }
        (v, pre)
    }
}

fn sub_scaled(v: &mut [u64], row: &[u64], k: u64, p: u64) {
    for (a, &b) in v.iter_mut().zip(row) {
        *a = (*a + p - (k * b) % p) % p;
    }
}

fn scale_in_place(v: &mut [u64], k: u64, p: u64) {
    for a in v.iter_mut() {
        *a = (*a * k) % p;
    }
}

/// Result of Artin–Schreier reduction: x − y + y^q = canonical.
#[derive(Clone, Debug)]
pub struct ASReduction {
    pub canonical: ResidueSeries,
    pub certificate: ResidueSeries,
    pub solvable_constant: bool,
    pub obstruction_note: Option<String>,
}

/// Window used when the input is exact: one Frobenius step past its positive part.
fn default_window(x: &ResidueSeries) -> LambdaBound {
    if x.lambda_hi().is_finite() {
        return x.lambda_hi().clone();
    }
    let (_, _, plus) = x.decompose_by_sign();
    let val = x.ctx().valuation().clone();
    let q = x.ctx().ring().q() as i128;
    match plus
        .series()
        .terms()
        .keys()
        .max_by(|a, b| val.compare_points(a, b))
    {
        Some(z) => LambdaBound::Finite(val.lambda(z).scale(q, 1)),
        None => LambdaBound::PosInf,
    }
}

/// Artin–Schreier reduction with the window taken from `x` (or one Frobenius
/// step beyond its positive support when `x` is exact).
pub fn as_reduce(x: &ResidueSeries) -> Result<ASReduction> {
    let window = default_window(x);
    as_reduce_within(x, &window)
}

pub fn as_reduce_within(x: &ResidueSeries, window: &LambdaBound) -> Result<ASReduction> {
    let ctx = x.ctx().clone();
    let ring = ctx.ring().clone();
    let val = ctx.valuation().clone();
    let window = val.min_bound(window, x.lambda_hi());
    let x = x.truncate_lambda(&window);
    let (minus, zero, plus) = x.decompose_by_sign();

    // positive part: y+ = x+ + x+^q + ... until the support leaves the window
    let mut y_plus = ResidueSeries::zero(&ctx);
    let mut t = plus.clone();
    while !t.is_zero() {
        y_plus = y_plus.add(&t)?;
        t = t.frobenius(1)?.truncate_lambda(&window);
    }
    if !plus.is_zero() {
        y_plus = ResidueSeries(y_plus.0.truncate_lambda(&window));
    }

    // negative part: move terms on q^I L \ q^(I+1) L down to L \ qL
    let q = ring.q() as i64;
    let mut canonical_terms: Vec<(Point, Digits)> = Vec::new();
    let mut y_minus_terms: Vec<(Point, Digits)> = Vec::new();
    for (z, c) in minus.residue_terms() {
        let mut level = 0i64;
        let mut zr = z.clone();
        while zr.iter().all(|&v| v % q == 0) {
            zr = zr.iter().map(|&v| v / q).collect();
            level += 1;
        }
        let c0 = ring.fq_qpow(&c, -level);
        for k in 0..level {
            let zk: Point = zr.iter().map(|&v| v * q.pow(k as u32)).collect();
            y_minus_terms.push((zk, ring.fq_neg(&ring.fq_qpow(&c0, k))));
        }
        canonical_terms.push((zr, c0));
    }

    // constant part
    let solver = ConstantSolver::new(&ring);
    let c = zero.coeff(&ctx.zero_point());
    let (rep, a) = solver.reduce(&c);
    let solvable_constant = rep.iter().all(|&v| v == 0);
    if !solvable_constant {
        canonical_terms.push((ctx.zero_point(), rep.iter().copied().collect()));
    }
    let a: Digits = a.into_iter().collect();

    let mut certificate = y_plus.add(&ResidueSeries::from_terms(&ctx, &y_minus_terms))?;
    if !ring.fq_is_zero(&a) {
        certificate = certificate.add(&ResidueSeries::monomial(&ctx, &ctx.zero_point(), &a))?;
    }
    let canonical = ResidueSeries(
        ResidueSeries::from_terms(&ctx, &canonical_terms)
            .0
            .truncate_lambda(&window),
    );
    let canonical = if window.is_finite() {
        canonical
    } else {
        ResidueSeries(canonical.0.assume_exact())
    };

    // re-verify x − y + y^q = canonical inside the window
    let lhs = x
        .sub(&certificate)?
        .add(&certificate.frobenius(1)?)?
        .truncate_lambda(&window);
    let diff = lhs.sub(&canonical)?;
    if !diff.is_zero() {
        return Err(Error::Precondition(format!(
            "Artin-Schreier certificate failed to verify: residual {}",
            diff.to_text()
        )));
    }
    let obstruction_note = if canonical.is_zero() {
        None
    } else if solvable_constant {
        Some("negative support off qL survives".into())
    } else {
        Some("constant term is not of the form t^q - t over the residue field".into())
    };
    Ok(ASReduction {
        canonical,
        certificate,
        solvable_constant,
        obstruction_note,
    })
}

/// Finite solution of x − y + y^q = 0, found by moving the λ-extreme term of
/// the remainder one Frobenius step towards λ = 0. `None` when no finite
/// (polynomial) y exists, e.g. when an extreme term lies off qL.
pub fn as_solve_exact(x: &ResidueSeries) -> Result<Option<ResidueSeries>> {
    let ctx = x.ctx().clone();
    let ring = ctx.ring().clone();
    let val = ctx.valuation().clone();
    let q = ring.q() as i64;
    let origin = ctx.zero_point();
    let mut r = x.clone();
    let mut y = ResidueSeries::zero(&ctx);
    loop {
        let terms = r.residue_terms();
        let pick = terms
            .iter()
            .filter(|(z, _)| *z != origin)
            .map(|(z, c)| {
                let l = val.lambda(z);
                let abs = if val.sign(&l) == Ordering::Less {
                    l.neg()
                } else {
                    l
                };
                (z, c, abs)
            })
            .max_by(|a, b| val.compare(&a.2, &b.2));
        let Some((z, c, _)) = pick else { break };
        if z.iter().any(|v| v % q != 0) {
            return Ok(None);
        }
        let zp: Point = z.iter().map(|v| v / q).collect();
        let a = ring.fq_neg(&ring.fq_qpow(c, -1));
        let ya = ResidueSeries::monomial(&ctx, &zp, &a);
        r = r.sub(&ya)?.add(&ya.frobenius(1)?)?;
        y = y.add(&ya)?;
    }
    let (rep, a) = ConstantSolver::new(&ring).reduce(&r.coeff(&origin));
    if rep.iter().any(|&v| v != 0) {
        return Ok(None);
    }
    let a: Digits = a.into_iter().collect();
    if !ring.fq_is_zero(&a) {
        y = y.add(&ResidueSeries::monomial(&ctx, &origin, &a))?;
    }
    let check = x.sub(&y)?.add(&y.frobenius(1)?)?;
    if !check.is_zero() {
        return Err(Error::Precondition(format!(
            "exact Artin-Schreier solution failed to verify: residual {}",
            check.to_text()
        )));
    }
    Ok(Some(y))
}

/// Artin–Schreier reduction after extending the residue field to degree `s`.
pub fn as_reduce_extended(x: &ResidueSeries, s: usize) -> Result<(Arc<Context>, ASReduction)> {
    let emb = x.ctx().ring().extension(s)?;
    let ctx = Context::new(emb.target().clone(), x.ctx().valuation().clone());
    let xe = x.extend(&ctx, &emb);
    Ok((ctx, as_reduce(&xe)?))
}

/// c = −λ(z) for the λ-least z in the negative canonical support.
#[derive(Clone, Debug, PartialEq)]
pub struct PositioningBound {
    pub c: LambdaValue,
    pub witness: Point,
}

pub fn positioning_bound(x: &ResidueSeries) -> Result<PositioningBound> {
    let red = as_reduce(x)?;
    positioning_bound_of(&red.canonical)
}

/// Positioning bound of an already canonical series.
pub fn positioning_bound_of(canonical: &ResidueSeries) -> Result<PositioningBound> {
    let val = canonical.ctx().valuation().clone();
    let witness = canonical
        .series()
        .terms()
        .keys()
        .filter(|z| val.sign(&val.lambda(z)) == Ordering::Less)
        .min_by(|a, b| val.compare_points(a, b))
        .cloned()
        .ok_or_else(|| Error::NoObstruction("canonical form has no negative support".into()))?;
    Ok(PositioningBound {
        c: val.lambda(&witness).neg(),
        witness,
    })
}

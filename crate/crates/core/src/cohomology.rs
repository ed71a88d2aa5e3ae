//! Rank-1 H⁰ and the explicit H¹ reduction for the twists Γ(d).
//!
//! A class is a pair (a, ω = Σ x_i dlog{z_i}) with x_i + ∂_i(a) = π^d q x_i^σ;
//! coboundaries are (F(w) − w, ∇w) with F(w) = π^d w^σ.

use std::cmp::Ordering;

use crate::coeffring::Padic;
use crate::error::{Error, Result};
use crate::frobenius::FrobeniusLift;
use crate::monoval::{LambdaBound, Point};
use crate::series::{same_ctx, FakeSeries};

#[derive(Clone, Debug)]
pub struct H1Class {
    pub d: i32,
    pub a: FakeSeries,
    pub omega: Vec<FakeSeries>,
}

/// A coboundary applied during reduction.
#[derive(Clone, Debug)]
pub struct ReductionStep {
    pub label: String,
    pub w: FakeSeries,
}

#[derive(Clone, Debug)]
pub struct H1Reduction {
    pub class: H1Class,
    pub transcript: Vec<ReductionStep>,
    pub complete: bool,
    pub notes: Vec<String>,
}

#[derive(Clone, Debug)]
pub enum H1FinalForm {
    /// the class is the coboundary of `w`
    ZeroWitness {
        w: FakeSeries,
    },
    /// d = −w(q): coordinates of ω in J·dlog{z_1} ⊕ … ⊕ J·dlog{z_m}
    JCoordinates(Vec<Padic>),
    NontrivialAtPrecision {
        reason: String,
    },
}

/// log_p q, i.e. w(q) for π = p.
fn w_q(lift: &FrobeniusLift) -> i32 {
    let p = lift.ctx().ring().p() as i64;
    let mut q = lift.q_total();
    let mut n = 0;
    while q > 1 {
        q /= p;
        n += 1;
    }
    n
}

fn coeff_q(lift: &FrobeniusLift, prec: i32) -> Padic {
    lift.ctx().ring().from_int(lift.q_total(), prec + 1)
}

impl H1Class {
    pub fn new(d: i32, a: FakeSeries, omega: Vec<FakeSeries>) -> Result<Self> {
        if omega.len() != a.ctx().rank() {
            return Err(Error::InvalidParams(format!(
                "{} components of omega for a rank {} lattice",
                omega.len(),
                a.ctx().rank()
            )));
        }
        for x in &omega {
            same_ctx(a.ctx(), x.ctx())?;
        }
        Ok(H1Class { d, a, omega })
    }

    /// F(x) = π^d σ(x).
    fn frob(&self, lift: &FrobeniusLift, x: &FakeSeries) -> Result<FakeSeries> {
        Ok(lift.apply(x)?.shift_pi(self.d))
    }

    /// x_i + ∂_i(a) − π^d q σ(x_i), one entry per coordinate.
    pub fn cocycle_residual(&self, lift: &FrobeniusLift) -> Result<Vec<FakeSeries>> {
        let q = coeff_q(lift, self.a.prec());
        self.omega
            .iter()
            .enumerate()
            .map(|(i, x)| {
                x.add(&self.a.partial(i))?
                    .sub(&self.frob(lift, x)?.scale(&q))
            })
            .collect()
    }

    pub fn is_cocycle(&self, lift: &FrobeniusLift) -> Result<bool> {
        Ok(self.cocycle_residual(lift)?.iter().all(|r| r.is_zero()))
    }

    /// (a + F(w) − w, ω + ∇w).
    pub fn add_coboundary(&self, lift: &FrobeniusLift, w: &FakeSeries) -> Result<Self> {
        let a = self.a.add(&self.frob(lift, w)?)?.sub(w)?;
        let omega = self
            .omega
            .iter()
            .enumerate()
            .map(|(i, x)| x.add(&w.partial(i)))
            .collect::<Result<Vec<_>>>()?;
        Ok(H1Class {
            d: self.d,
            a,
            omega,
        })
    }

    pub fn is_zero(&self) -> bool {
        self.a.is_zero() && self.omega.iter().all(|x| x.is_zero())
    }

    pub fn approx_eq(&self, other: &Self) -> bool {
        self.d == other.d
            && self.a.approx_eq(&other.a)
            && self.omega.len() == other.omega.len()
            && self
                .omega
                .iter()
                .zip(&other.omega)
                .all(|(x, y)| x.approx_eq(y))
    }
}

/// The cocycle with potential a: x_i = −Σ_g (π^d q)^g σ^g(∂_i a), for d > −w(q).
pub fn cocycle_from_potential(lift: &FrobeniusLift, d: i32, a: &FakeSeries) -> Result<H1Class> {
    let n = w_q(lift);
    if d + n <= 0 {
        return Err(Error::Domain(format!(
            "π^d q does not contract for d = {d}"
        )));
    }
    let prec = a.prec();
    let q = coeff_q(lift, prec);
    let mut omega = Vec::with_capacity(a.ctx().rank());
    for i in 0..a.ctx().rank() {
        let mut term = a.partial(i);
        let mut acc = FakeSeries::zero(a.ctx(), prec);
        while !term.is_zero() {
            acc = acc.sub(&term)?;
            term = lift.apply(&term)?.shift_pi(d).scale(&q).truncate_prec(prec);
        }
        omega.push(acc);
    }
    H1Class::new(d, a.clone(), omega)
}

/// H⁰ of Γ(d): the constant 1 for d = 0, nothing otherwise (w(π^d x^σ) = w(x) + d).
pub fn h0_rank1(lift: &FrobeniusLift, d: i32, prec: i32) -> Vec<FakeSeries> {
    let one = FakeSeries::one(lift.ctx(), prec);
    let f1 = one.shift_pi(d);
    if f1
        .truncate_prec(prec)
        .sub(&one)
        .map(|x| x.is_zero())
        .unwrap_or(false)
        && d == 0
    {
        vec![one]
    } else {
        Vec::new()
    }
}

fn record(
    cls: &H1Class,
    lift: &FrobeniusLift,
    w: FakeSeries,
    label: String,
    transcript: &mut Vec<ReductionStep>,
) -> Result<H1Class> {
    let next = cls.add_coboundary(lift, &w)?;
    transcript.push(ReductionStep { label, w });
    Ok(next)
}

/// Reduce (a, ω) to an equivalent pair with a supported on (L∖qL) ∪ {0}
/// and λ ≤ 0 (d ≤ 0), or to a = 0 (d > 0).
pub fn h1_reduce(lift: &FrobeniusLift, cls: &H1Class, window: &LambdaBound) -> Result<H1Reduction> {
    if !lift.is_standard() {
        return Err(Error::Precondition(
            "H1 reduction assumes a standard lift".into(),
        ));
    }
    same_ctx(lift.ctx(), cls.a.ctx())?;
    if !cls.is_cocycle(lift)? {
        return Err(Error::Precondition("input pair is not a cocycle".into()));
    }
    let ctx = lift.ctx().clone();
    let ring = ctx.ring().clone();
    let val = ctx.valuation().clone();
    let q = lift.q_total();
    let d = cls.d;
    let mut cur = cls.clone();
    let mut transcript = Vec::new();
    let mut notes = Vec::new();
    let prec = cls.a.prec();

    if d > 0 {
        // y = Σ π^{gd} a^{σ^g}, so that a + F(y) − y = 0
        let mut y = FakeSeries::zero(&ctx, prec);
        let mut term = cur.a.clone();
        while !term.is_zero() {
            y = y.add(&term)?;
            term = lift.apply(&term)?.shift_pi(d).truncate_prec(prec);
        }
        cur = record(
            &cur,
            lift,
            y,
            "contraction series for d > 0".into(),
            &mut transcript,
        )?;
        let complete = cur.a.is_zero();
        return Ok(H1Reduction {
            class: cur,
            transcript,
            complete,
            notes,
        });
    }

    // kill a_+: y = Σ π^{id} a_+^{σ^i}, truncated to the window
    let (_, _, plus) = cur.a.decompose_by_sign();
    if !plus.is_zero() {
        let hi = val.min_bound(window, cur.a.lambda_hi());
        if !hi.is_finite() {
            return Err(Error::PrecisionExhausted(
                "killing the positive part needs a finite λ-window".into(),
            ));
        }
        let mut y = FakeSeries::zero(&ctx, prec).truncate_lambda(&hi);
        let mut term = plus.truncate_lambda(&hi);
        let mut steps = 0;
        while !term.is_zero() {
            if term.prec() <= 0 {
                return Err(Error::PrecisionExhausted(format!(
                    "π-precision exhausted after {steps} Frobenius steps of the positive part"
                )));
            }
            y = y.add(&term)?;
            term = lift.apply(&term)?.shift_pi(d).truncate_lambda(&hi);
            steps += 1;
        }
        cur = record(
            &cur,
            lift,
            y,
            format!("kill positive part ({steps} steps)"),
            &mut transcript,
        )?;
        cur.a = cur.a.truncate_lambda(&hi);
        cur.omega = cur.omega.iter().map(|x| x.truncate_lambda(&hi)).collect();
    }

    // move c{z}, z ∈ qL, λ(z) < 0 down to z/q
    let qi = q;
    loop {
        let pick = cur
            .a
            .terms()
            .iter()
            .filter(|(z, _)| {
                val.sign(&val.lambda(z)) == Ordering::Less && z.iter().all(|&v| v % qi == 0)
            })
            .min_by(|a, b| val.compare_points(a.0, b.0))
            .map(|(z, c)| (z.clone(), c.clone()));
        let Some((z, c)) = pick else { break };
        let zq: Point = z.iter().map(|v| v / qi).collect();
        // F(w) − w = −c{z} + π^{-d}σ⁻¹(c){z/q} for w = −π^{-d}σ⁻¹(c){z/q}
        let coeff = ring.shift(&ring.neg(&ring.sigma_pow(&c, -(lift.power() as i64))), -d);
        let w = FakeSeries::monomial(&ctx, &zq, coeff);
        let label = format!(
            "move {} to {}",
            FakeSeries::format_point(&z),
            FakeSeries::format_point(&zq)
        );
        cur = record(&cur, lift, w, label, &mut transcript)?;
    }

    let off = cur
        .a
        .terms()
        .keys()
        .filter(|z| z.iter().any(|&v| v != 0))
        .count();
    let complete = if d < 0 {
        off == 0
    } else {
        cur.a
            .terms()
            .keys()
            .all(|z| z.iter().all(|&v| v == 0) || z.iter().any(|&v| v % qi != 0))
    };
    if d < 0 && off > 0 {
        notes.push(format!("{off} non-constant terms survive on L \\ qL"));
    }
    if d == 0 && off > 0 {
        notes.push(
            "d = 0: surviving support on L \\ qL is reported without a triviality claim".into(),
        );
    }
    Ok(H1Reduction {
        class: cur,
        transcript,
        complete,
        notes,
    })
}

/// Replay a transcript on the input and compare with the reduced class.
pub fn verify_transcript(lift: &FrobeniusLift, input: &H1Class, red: &H1Reduction) -> Result<bool> {
    let mut cur = input.clone();
    for step in &red.transcript {
        cur = cur.add_coboundary(lift, &step.w)?;
    }
    Ok(cur.approx_eq(&red.class))
}

/// Final form of a reduced class with a constant.
pub fn h1_final_form(
    lift: &FrobeniusLift,
    cls: &H1Class,
) -> Result<(H1FinalForm, Vec<ReductionStep>)> {
    let ctx = lift.ctx().clone();
    let ring = ctx.ring().clone();
    let d = cls.d;
    let n = w_q(lift);
    let prec = cls.a.prec();
    if cls.a.terms().keys().any(|z| z.iter().any(|&v| v != 0)) {
        return Err(Error::Precondition(
            "class is not reduced: a is not constant".into(),
        ));
    }
    let mut transcript = Vec::new();
    let mut cur = cls.clone();
    let c = cur.a.constant_term();
    if !c.is_zero() {
        let beta =
            match d.cmp(&0) {
                // β = Σ_{k≥0} π^{kd} σ^k(c)
                Ordering::Greater => {
                    let mut acc = ring.zero(prec);
                    let mut t = c.clone();
                    let mut k = 0i64;
                    while !t.is_zero() {
                        acc = ring.add(&acc, &t);
                        k += 1;
                        t = ring.truncate(
                            &ring.shift(&ring.sigma_pow(&c, k * lift.power() as i64), k as i32 * d),
                            prec,
                        );
                    }
                    acc
                }
                // β = −Σ_{k≥1} π^{−kd} σ^{−k}(c)
                Ordering::Less => {
                    let mut acc = ring.zero(prec);
                    let mut k = 1i64;
                    loop {
                        let t = ring.truncate(
                            &ring.shift(
                                &ring.sigma_pow(&c, -k * lift.power() as i64),
                                -(k as i32) * d,
                            ),
                            prec,
                        );
                        if t.is_zero() {
                            break;
                        }
                        acc = ring.sub(&acc, &t);
                        k += 1;
                    }
                    acc
                }
                Ordering::Equal => return Ok((
                    H1FinalForm::NontrivialAtPrecision {
                        reason:
                            "d = 0: a constant survives; the splitting argument is not implemented"
                                .into(),
                    },
                    transcript,
                )),
            };
        let w = FakeSeries::constant(&ctx, beta);
        cur = record(&cur, lift, w, "kill constant".into(), &mut transcript)?;
    }
    if !cur.a.is_zero() {
        return Ok((
            H1FinalForm::NontrivialAtPrecision {
                reason: format!("constant {} could not be removed at precision", cur.a),
            },
            transcript,
        ));
    }
    if cur.omega.iter().all(|x| x.is_zero()) {
        let mut w = FakeSeries::zero(&ctx, prec);
        for s in &transcript {
            w = w.add(&s.w)?;
        }
        return Ok((H1FinalForm::ZeroWitness { w: w.neg() }, transcript));
    }
    if d == -n
        && cur
            .omega
            .iter()
            .all(|x| x.terms().keys().all(|z| z.iter().all(|&v| v == 0)))
    {
        let coords: Vec<Padic> = cur.omega.iter().map(|x| x.constant_term()).collect();
        if coords.iter().all(|x| {
            ring.sub(x, &ring.sigma_pow(x, lift.power() as i64))
                .is_zero()
        }) {
            return Ok((H1FinalForm::JCoordinates(coords), transcript));
        }
    }
    Ok((
        H1FinalForm::NontrivialAtPrecision {
            reason: "the recursion c_{j+1} = π^d q c_j^σ does not close at this precision".into(),
        },
        transcript,
    ))
}

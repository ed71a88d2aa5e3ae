//! Frobenius lifts on Γ^λ, the substitution homomorphism, and Teichmüller
//! digits over finite perfection levels.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::sync::Arc;

use crate::coeffring::Padic;
use crate::error::{Error, Result};
use crate::monoval::{LambdaBound, LambdaValue, Point};
use crate::residue::ResidueSeries;
use crate::series::{same_ctx, Context, FakeSeries, SeriesMatrix};

/// Powers (1+u_i)^a = Σ_j binom(a, j) u_i^j for w(u_i) ≥ 1, cached per exponent.
struct BinomialPowers {
    ctx: Arc<Context>,
    prec: i32,
    u: Vec<FakeSeries>,
    u_pows: Vec<Vec<FakeSeries>>,
    cache: HashMap<(usize, i64), FakeSeries>,
}

impl BinomialPowers {
    fn new(ctx: &Arc<Context>, u: Vec<FakeSeries>, prec: i32) -> Result<Self> {
        for (i, ui) in u.iter().enumerate() {
            if !ui.is_zero() && (ui.w() < 1) {
                return Err(Error::Precondition(format!(
                    "w(u_{}) = {} < 1",
                    i + 1,
                    ui.w()
                )));
            }
        }
        let mut u_pows = Vec::with_capacity(u.len());
        for ui in &u {
            let mut pows = vec![FakeSeries::one(ctx, prec)];
            if !ui.is_zero() {
                loop {
                    let next = pows.last().expect("nonempty").mul(ui)?.truncate_prec(prec);
                    if next.is_zero() || pows.len() as i32 > prec + 1 {
                        break;
                    }
                    pows.push(next);
                }
            }
            u_pows.push(pows);
        }
        Ok(BinomialPowers {
            ctx: ctx.clone(),
            prec,
            u,
            u_pows,
            cache: HashMap::new(),
        })
    }

    fn power(&mut self, i: usize, a: i64) -> Result<FakeSeries> {
        if let Some(v) = self.cache.get(&(i, a)) {
            return Ok(v.clone());
        }
        let ring = self.ctx.ring().clone();
        let work = self.prec + ring.cap();
        let mut acc = FakeSeries::one(&self.ctx, self.prec);
        let mut binom = ring.one(work);
        for (j, uj) in self.u_pows[i].iter().enumerate().skip(1) {
            let j = j as i64;
            binom = ring.mul(
                &binom,
                &ring.from_rational((a - j + 1) as i128, j as i128, work)?,
            );
            if binom.is_zero() {
                break;
            }
            acc = acc.add(&uj.scale(&binom))?;
        }
        let acc = acc.truncate_prec(self.prec);
        self.cache.insert((i, a), acc.clone());
        Ok(acc)
    }

    /// Π_i (1+u_i)^(z_i)
    fn monomial(&mut self, z: &[i64]) -> Result<FakeSeries> {
        let mut acc = FakeSeries::one(&self.ctx, self.prec);
        for (i, &a) in z.iter().enumerate() {
            if a != 0 && !self.u[i].is_zero() {
                acc = acc.mul(&self.power(i, a)?)?;
            }
        }
        Ok(acc)
    }

    /// λ-loss bound: each negative-λ factor costs π-weight ≥ 1.
    fn window_loss(&self) -> LambdaValue {
        let val = self.ctx.valuation();
        let mut worst = val.zero_value();
        for ui in &self.u {
            if let LambdaBound::Finite(v) = ui.v_lambda() {
                if val.compare(&v, &worst) == Ordering::Less {
                    worst = v;
                }
            }
        }
        worst.scale((self.prec - 1).max(0) as i128, 1)
    }
}

/// Image of x under c{z} ↦ coeff(c)·{point(z)}·(Π (1+u_i)^{z_i}).
fn binomial_image<F, G>(
    x: &FakeSeries,
    powers: &mut BinomialPowers,
    point_map: F,
    coeff_map: G,
    window_scale: i128,
) -> Result<FakeSeries>
where
    F: Fn(&[i64]) -> Point,
    G: Fn(&Padic) -> Padic,
{
    let ctx = x.ctx().clone();
    let val = ctx.valuation().clone();
    let loss = powers.window_loss();
    let hi = x.lambda_hi().scale(window_scale, 1).offset(&loss);
    let mut acc = FakeSeries::zero(&ctx, x.prec());
    for (z, c) in x.terms() {
        let unit = powers.monomial(z)?;
        let term = unit.shift_point(&point_map(z)).scale(&coeff_map(c));
        acc = acc.add(&term)?;
    }
    let acc = acc.truncate_prec(x.prec());
    let acc = if hi.is_finite() {
        acc.assume_exact().truncate_lambda(&hi)
    } else {
        acc
    };
    let _ = val;
    Ok(acc)
}

#[derive(Clone, Debug)]
enum LiftKind {
    Standard,
    /// units v_i with t_i = {q z_i}·v_i
    Images(Vec<FakeSeries>),
}

/// A Frobenius lift σ (applied `power` times), standard or given by images t_i.
#[derive(Clone, Debug)]
pub struct FrobeniusLift {
    ctx: Arc<Context>,
    kind: LiftKind,
    power: u32,
}

impl FrobeniusLift {
    pub fn standard(ctx: &Arc<Context>) -> Self {
        FrobeniusLift {
            ctx: ctx.clone(),
            kind: LiftKind::Standard,
            power: 1,
        }
    }

    /// Lift with σ({z_i}) = t_i; each t_i must be ≡ {q z_i} mod π.
    pub fn from_images(ctx: &Arc<Context>, images: Vec<FakeSeries>) -> Result<Self> {
        if images.len() != ctx.rank() {
            return Err(Error::InvalidParams(format!(
                "{} images for a rank {} lattice",
                images.len(),
                ctx.rank()
            )));
        }
        let q = ctx.ring().q() as i64;
        let mut units = Vec::with_capacity(images.len());
        let mut standard = true;
        for (i, t) in images.iter().enumerate() {
            same_ctx(ctx, t.ctx())?;
            let qz: Point = ctx.basis_point(i).iter().map(|c| c * q).collect();
            let lead = FakeSeries::monomial(ctx, &qz, ctx.ring().one(t.prec()));
            let diff = t.sub(&lead)?;
            if !diff.is_zero() && (diff.w() < 1) {
                return Err(Error::InvalidParams(format!(
                    "image t_{} does not reduce to {{z_{}}}^q mod p",
                    i + 1,
                    i + 1
                )));
            }
            if !diff.is_zero() {
                standard = false;
            }
            let neg: Point = qz.iter().map(|c| -c).collect();
            units.push(t.shift_point(&neg));
        }
        if standard {
            return Ok(Self::standard(ctx));
        }
        Ok(FrobeniusLift {
            ctx: ctx.clone(),
            kind: LiftKind::Images(units),
            power: 1,
        })
    }

    /// Lift with t_i = c_i·{q z_i} for constants c_i ≡ 1 mod p.
    pub fn scaled_standard(ctx: &Arc<Context>, scalars: &[Padic]) -> Result<Self> {
        let q = ctx.ring().q() as i64;
        let images = scalars
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let qz: Point = ctx.basis_point(i).iter().map(|v| v * q).collect();
                FakeSeries::monomial(ctx, &qz, c.clone())
            })
            .collect();
        Self::from_images(ctx, images)
    }

    /// σ^a as a lift in its own right.
    pub fn iterate(&self, a: u32) -> Self {
        FrobeniusLift {
            power: self.power * a,
            ..self.clone()
        }
    }

    /// σ^(power/a); the power must be divisible by a.
    pub fn root(&self, a: u32) -> Result<Self> {
        if a == 0 || !self.power.is_multiple_of(a) {
            return Err(Error::Domain(format!(
                "lift power {} is not divisible by {a}",
                self.power
            )));
        }
        Ok(FrobeniusLift {
            power: self.power / a,
            ..self.clone()
        })
    }

    pub fn ctx(&self) -> &Arc<Context> {
        &self.ctx
    }

    pub fn power(&self) -> u32 {
        self.power
    }

    pub fn is_standard(&self) -> bool {
        matches!(self.kind, LiftKind::Standard)
    }

    /// q^power, the degree of σ on the residue field.
    pub fn q_total(&self) -> i64 {
        (self.ctx.ring().q() as i64).pow(self.power)
    }

    /// t_i = σ({z_i}) for the base map (power 1).
    pub fn images(&self, prec: i32) -> Vec<FakeSeries> {
        let q = self.ctx.ring().q() as i64;
        (0..self.ctx.rank())
            .map(|i| {
                let qz: Point = self.ctx.basis_point(i).iter().map(|c| c * q).collect();
                match &self.kind {
                    LiftKind::Standard => {
                        FakeSeries::monomial(&self.ctx, &qz, self.ctx.ring().one(prec))
                    }
                    LiftKind::Images(v) => v[i].shift_point(&qz),
                }
            })
            .collect()
    }

    fn apply_base(&self, x: &FakeSeries) -> Result<FakeSeries> {
        same_ctx(&self.ctx, x.ctx())?;
        let ring = self.ctx.ring().clone();
        let q = ring.q() as i64;
        match &self.kind {
            LiftKind::Standard => Ok(x.map_terms(
                |z| z.iter().map(|c| c * q).collect(),
                |c| ring.sigma(c),
                q as i128,
                1,
            )),
            LiftKind::Images(units) => {
                let one = ring.one(x.prec());
                let u = units
                    .iter()
                    .map(|v| v.sub(&FakeSeries::constant(&self.ctx, one.clone())))
                    .collect::<Result<Vec<_>>>()?;
                let mut powers = BinomialPowers::new(&self.ctx, u, x.prec())?;
                binomial_image(
                    x,
                    &mut powers,
                    |z| z.iter().map(|c| c * q).collect(),
                    |c| ring.sigma(c),
                    q as i128,
                )
            }
        }
    }

    /// σ^power(x).
    pub fn apply(&self, x: &FakeSeries) -> Result<FakeSeries> {
        if let LiftKind::Standard = self.kind {
            same_ctx(&self.ctx, x.ctx())?;
            let ring = self.ctx.ring().clone();
            let qa = self.q_total();
            let power = self.power as i64;
            return Ok(x.map_terms(
                |z| z.iter().map(|c| c * qa).collect(),
                |c| ring.sigma_pow(c, power),
                qa as i128,
                1,
            ));
        }
        let mut y = x.clone();
        for _ in 0..self.power {
            y = self.apply_base(&y)?;
        }
        Ok(y)
    }

    /// σ^(power·k)(x).
    pub fn apply_times(&self, x: &FakeSeries, k: u32) -> Result<FakeSeries> {
        self.iterate(k).apply(x)
    }

    pub fn apply_matrix(&self, m: &SeriesMatrix) -> Result<SeriesMatrix> {
        m.try_map(|e| self.apply(e))
    }

    /// Inverse of σ^(power·steps) for standard lifts.
    pub fn apply_inverse(&self, x: &FakeSeries, steps: u32) -> Result<FakeSeries> {
        if !self.is_standard() {
            return Err(Error::Precondition(
                "σ^-1 is only available for standard lifts".into(),
            ));
        }
        same_ctx(&self.ctx, x.ctx())?;
        let ring = self.ctx.ring().clone();
        let qa = self
            .q_total()
            .checked_pow(steps)
            .ok_or_else(|| Error::Domain("q-power overflows".into()))?;
        if let Some(z) = x.terms().keys().find(|z| z.iter().any(|c| c % qa != 0)) {
            return Err(Error::Domain(format!(
                "support point {} is not divisible by {qa}",
                FakeSeries::format_point(z)
            )));
        }
        let k = -((self.power * steps) as i64);
        Ok(x.map_terms(
            |z| z.iter().map(|c| c / qa).collect(),
            |c| ring.sigma_pow(c, k),
            1,
            qa as i128,
        ))
    }

    /// Matrix (a_hi) with ∂_i(x^σ) = Σ_h a_hi (∂_h x)^σ, for σ^power.
    /// Indexed as `a[h][i]`.
    pub fn log_derivative_matrix(&self, prec: i32) -> Result<Vec<Vec<FakeSeries>>> {
        let m = self.ctx.rank();
        let ring = self.ctx.ring().clone();
        let q = ring.q() as i64;
        let diag = |c: i64| -> Vec<Vec<FakeSeries>> {
            (0..m)
                .map(|h| {
                    (0..m)
                        .map(|i| {
                            if h == i {
                                FakeSeries::from_int(&self.ctx, c, prec)
                            } else {
                                FakeSeries::zero(&self.ctx, prec)
                            }
                        })
                        .collect()
                })
                .collect()
        };
        let base: Vec<Vec<FakeSeries>> = match &self.kind {
            LiftKind::Standard => return Ok(diag(self.q_total())),
            LiftKind::Images(units) => {
                let mut a = diag(q);
                for (h, v) in units.iter().enumerate() {
                    let v = v.truncate_prec(prec);
                    let vinv = v.inverse()?;
                    for (i, row_entry) in a[h].iter_mut().enumerate() {
                        let extra = v.partial(i).mul(&vinv)?;
                        *row_entry = row_entry.add(&extra)?.truncate_prec(prec);
                    }
                }
                a
            }
        };
        let mut acc = base.clone();
        for _ in 1..self.power {
            // a^{σ∘τ}_{ki} = Σ_h a^σ_{hi} σ(a^τ_{kh})
            let mut next = diag(0);
            for (k, row) in next.iter_mut().enumerate() {
                for (i, entry) in row.iter_mut().enumerate() {
                    let mut s = FakeSeries::zero(&self.ctx, prec);
                    for h in 0..m {
                        let t = base[h][i].mul(&self.apply_base(&acc[k][h])?)?;
                        s = s.add(&t)?;
                    }
                    *entry = s.truncate_prec(prec);
                }
            }
            acc = next;
        }
        Ok(acc)
    }
}

/// f(x) = Σ_J U^J (1/J!)∂^J(x), i.e. f({z}) = {z}·Π(1+u_i)^{μ_i(z)}.
pub fn substitution_hom(u: &[FakeSeries], x: &FakeSeries) -> Result<FakeSeries> {
    let ctx = x.ctx().clone();
    if u.len() != ctx.rank() {
        return Err(Error::InvalidParams(
            "one u_i per lattice generator is required".into(),
        ));
    }
    for ui in u {
        same_ctx(&ctx, ui.ctx())?;
    }
    let mut powers = BinomialPowers::new(&ctx, u.to_vec(), x.prec())?;
    binomial_image(
        x,
        &mut powers,
        |z| z.iter().copied().collect(),
        |c| c.clone(),
        1,
    )
}

/// Teichmüller digits x̄_0..x̄_n on the perfection level (1/q^s)L, s = n.
///
/// Points of the level lattice are stored scaled by q^s; `level_ctx` carries
/// the correspondingly scaled valuation, so λ-values agree with the base.
#[derive(Clone, Debug)]
pub struct TeichmullerExpansion {
    pub level: u32,
    pub level_ctx: Arc<Context>,
    pub digits: Vec<ResidueSeries>,
    pub window: LambdaBound,
}

impl TeichmullerExpansion {
    /// v_n = min_{i ≤ n} v_λ(x̄_i); +inf when all digits vanish in the window.
    pub fn partial_valuation(&self, n: usize) -> LambdaBound {
        let val = self.level_ctx.valuation().clone();
        self.digits
            .iter()
            .take(n + 1)
            .map(|d| d.v_lambda())
            .fold(LambdaBound::PosInf, |a, b| val.min_bound(&a, &b))
    }

    /// Σ [x̄_i] π^i modulo π^(n+1), in the level context.
    pub fn reassemble(&self) -> Result<FakeSeries> {
        let n = self.digits.len() as i32 - 1;
        let mut acc = FakeSeries::zero(&self.level_ctx, n + 1);
        for (i, d) in self.digits.iter().enumerate() {
            if d.is_zero() {
                continue;
            }
            let k = n as u32 - i as u32;
            let t = teichmuller_series(d, k, n + 1 - i as i32, &self.window)?;
            acc = acc.add(&t.shift_pi(i as i32))?.truncate_prec(n + 1);
        }
        Ok(acc.truncate_lambda(&self.window))
    }
}

/// Context for the perfection level s: same ring, valuation scaled by q^-s.
pub fn level_context(ctx: &Arc<Context>, s: u32) -> Result<Arc<Context>> {
    let qs = (ctx.ring().q() as i64)
        .checked_pow(s)
        .ok_or_else(|| Error::Domain("perfection level too deep".into()))?;
    Ok(Context::new(
        ctx.ring().clone(),
        Arc::new(ctx.valuation().scaled(1, qs as i128)),
    ))
}

/// Embed a base series into the level context (points scaled by q^s).
pub fn embed_in_level(x: &FakeSeries, level_ctx: &Arc<Context>, s: u32) -> FakeSeries {
    let qs = (x.ring().q() as i64).pow(s);
    x.transport(
        level_ctx,
        |z| z.iter().map(|c| c * qs).collect(),
        x.lambda_hi().clone(),
        x.lambda_lo().clone(),
    )
}

const TEICHMULLER_TERM_BUDGET: usize = 200_000;

/// [d] modulo π^prec (prec = k + 1): lift the q^k-th root of d and raise it
/// back to the q^k-th power, truncating at λ ≤ window after every step.
fn teichmuller_series(
    d: &ResidueSeries,
    k: u32,
    prec: i32,
    window: &LambdaBound,
) -> Result<FakeSeries> {
    let ctx = d.ctx().clone();
    let ring = ctx.ring().clone();
    let val = ctx.valuation().clone();
    // λ-increasing, so every Y_t below has λ > 0
    let terms = d.residue_terms();
    let Some((z0, c0)) = terms.first().cloned() else {
        return Ok(FakeSeries::zero(&ctx, prec));
    };
    let q = ring.q() as i64;
    let qk = q.pow(k);
    let c0_inv = ring.fq_inv(&c0).expect("nonzero residue");
    // 1 + Σ Y_t, Y_t = lift((c_t/c0)^(q^-k)) {(z_t − z0)/q^k}
    let mut body = vec![(ctx.zero_point(), ring.one(prec))];
    for (z, c) in terms.iter().skip(1) {
        let diff: Point = z.iter().zip(&z0).map(|(a, b)| a - b).collect();
        if diff.iter().any(|v| v % qk != 0) {
            return Err(Error::Precondition(format!(
                "digit support point {} is not on the expected perfection level",
                FakeSeries::format_point(z)
            )));
        }
        let root: Point = diff.iter().map(|v| v / qk).collect();
        let coeff = ring.fq_qpow(&ring.fq_mul(c, &c0_inv), -(k as i64));
        body.push((root, ring.lift_residue(&coeff, prec)));
    }
    let budget = window
        .finite()
        .map(|w| LambdaBound::Finite(w.sub(&val.lambda(&z0))));
    let clip = |x: FakeSeries| match &budget {
        Some(b) => x.truncate_lambda(b),
        None => x,
    };
    let mut s = clip(FakeSeries::from_terms(&ctx, body, prec));
    for _ in 0..k {
        s = clip(s.pow(q as u32)?.truncate_prec(prec));
        if s.len() > TEICHMULLER_TERM_BUDGET {
            return Err(Error::PrecisionExhausted(
                "Teichmüller expansion exceeds the term budget; narrow the λ-window".into(),
            ));
        }
    }
    let lead = ring.teichmuller(&c0, prec);
    let t = s.shift_point(&z0).scale(&lead).truncate_prec(prec);
    Ok(if window.is_finite() {
        t.truncate_lambda(window)
    } else {
        t
    })
}

/// Teichmüller digits of x up to index n, known for λ ≤ min(x's window, cap).
pub fn teichmuller_expand(
    lift: &FrobeniusLift,
    x: &FakeSeries,
    n: u32,
    cap: &LambdaBound,
) -> Result<TeichmullerExpansion> {
    if !lift.is_standard() {
        return Err(Error::Precondition(
            "Teichmüller digits require a standard lift".into(),
        ));
    }
    same_ctx(lift.ctx(), x.ctx())?;
    if n as i32 >= x.prec() {
        return Err(Error::PrecisionExhausted(format!(
            "digit {n} requested at coefficient precision {}",
            x.prec()
        )));
    }
    if x.lambda_lo().is_finite() {
        return Err(Error::Domain(
            "Teichmüller digits of an analytic-class window".into(),
        ));
    }
    if x.terms().values().any(|c| c.val_bound() < 0) {
        return Err(Error::Domain(
            "Teichmüller digits of a series with negative π-exponents".into(),
        ));
    }
    let val = x.valuation().clone();
    let window = val.min_bound(x.lambda_hi(), cap);
    let level_ctx = level_context(x.ctx(), n)?;
    let prec = n as i32 + 1;
    let mut r = embed_in_level(x, &level_ctx, n).truncate_prec(prec);
    if window.is_finite() {
        r = r.truncate_lambda(&window);
    }
    let mut digits = Vec::with_capacity(n as usize + 1);
    for i in 0..=n as i32 {
        if r.terms().values().any(|c| c.val_bound() < i) {
            return Err(Error::Precondition(
                "digit extraction lost π-divisibility".into(),
            ));
        }
        let d = ResidueSeries::reduce(&r.shift_pi(-i))?;
        if !d.is_zero() {
            let t = teichmuller_series(&d, n - i as u32, prec - i, &window)?;
            r = r.sub(&t.shift_pi(i))?.truncate_prec(prec);
            if window.is_finite() {
                r = r.truncate_lambda(&window);
            }
        }
        let d = if window.is_finite() {
            d.truncate_lambda(&window)
        } else {
            d
        };
        digits.push(d);
    }
    Ok(TeichmullerExpansion {
        level: n,
        level_ctx,
        digits,
        window,
    })
}

/// Frobenius-based v_n(x) = min_{i ≤ n} v_λ(x̄_i).
pub fn frobenius_partial_valuation(
    lift: &FrobeniusLift,
    x: &FakeSeries,
    n: u32,
    cap: &LambdaBound,
) -> Result<LambdaBound> {
    let exp = teichmuller_expand(lift, x, n, cap)?;
    let v = exp.partial_valuation(n as usize);
    if !v.is_finite() && exp.window.is_finite() {
        return Err(Error::PrecisionExhausted(format!(
            "v_{n} lies beyond the λ-window"
        )));
    }
    Ok(v)
}

/// min_{j ≤ n} (s·v_j + j) for a list of partial valuations.
fn truncated_min(
    vals: &[LambdaBound],
    s: (i128, i128),
    val: &crate::monoval::MonomialValuation,
) -> LambdaBound {
    let mut best = LambdaBound::PosInf;
    for (j, v) in vals.iter().enumerate() {
        if let LambdaBound::Finite(x) = v {
            let c = LambdaBound::Finite(x.scale(s.0, s.1).add_int(j as i128));
            best = val.min_bound(&best, &c);
        }
    }
    best
}

/// Compare min_{j≤n} v_{j,s} computed from Teichmüller digits with the naive one.
pub fn naive_compare_check(
    lift: &FrobeniusLift,
    x: &FakeSeries,
    n: u32,
    s: (i128, i128),
) -> Result<bool> {
    if s.0 <= 0 || s.1 <= 0 {
        return Err(Error::Domain("s must be a positive rational".into()));
    }
    let val = x.valuation().clone();
    let naive: Vec<LambdaBound> = (0..=n as i32)
        .map(|j| x.naive_partial_valuation(j))
        .collect::<Result<_>>()?;
    let m_naive = truncated_min(&naive, s, &val);
    let cap = match &m_naive {
        LambdaBound::Finite(m) => LambdaBound::Finite(m.scale(s.1, s.0)),
        _ => LambdaBound::Finite(val.zero_value()),
    };
    let exp = teichmuller_expand(lift, x, n, &cap)?;
    let frob: Vec<LambdaBound> = (0..=n as usize).map(|j| exp.partial_valuation(j)).collect();
    let m_frob = truncated_min(&frob, s, &val);
    if !m_naive.is_finite() {
        return Ok(exp.digits.iter().all(|d| d.is_zero()));
    }
    Ok(val.compare_bound(&m_frob, &m_naive) == Ordering::Equal)
}

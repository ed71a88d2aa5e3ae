//! Truncated lattice-indexed series `Σ c_z {z}` over the coefficient ring.
//!
//! A series stores the coefficients it knows: every coefficient modulo
//! `p^prec`, and every monomial with `lo <= λ(z) <= hi`.  Integral-class
//! elements have `lo = -inf`; analytic-class elements carry a finite `lo`.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use crate::coeffring::{CoeffRing, Padic};
use crate::error::{Error, Result};
use crate::monoval::{LambdaBound, LambdaValue, MonomialValuation, Point};

/// Coefficient ring plus lattice valuation shared by related series.
#[derive(Debug)]
pub struct Context {
    ring: Arc<CoeffRing>,
    valuation: Arc<MonomialValuation>,
}

impl Context {
    pub fn new(ring: Arc<CoeffRing>, valuation: Arc<MonomialValuation>) -> Arc<Context> {
        Arc::new(Context { ring, valuation })
    }

    pub fn ring(&self) -> &Arc<CoeffRing> {
        &self.ring
    }

    pub fn valuation(&self) -> &Arc<MonomialValuation> {
        &self.valuation
    }

    pub fn rank(&self) -> usize {
        self.valuation.rank()
    }

    pub fn prec(&self) -> i32 {
        self.ring.prec()
    }

    pub fn zero_point(&self) -> Point {
        Point::from_elem(0, self.rank())
    }

    pub fn basis_point(&self, i: usize) -> Point {
        let mut z = self.zero_point();
        z[i] = 1;
        z
    }
}

pub(crate) fn same_ctx(a: &Arc<Context>, b: &Arc<Context>) -> Result<()> {
    if Arc::ptr_eq(a, b) {
        Ok(())
    } else {
        Err(Error::ContextMismatch(
            "series belong to different contexts".into(),
        ))
    }
}

fn add_points(a: &[i64], b: &[i64]) -> Point {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// Result of a Gauss valuation computation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GaussValue {
    /// min over terms of r·λ(z) + w(c_z)
    pub value: LambdaValue,
    /// smallest π-digit attaining the minimum
    pub digit: i32,
    pub certified: bool,
}

/// An element of Γ^λ (or its π-inverted/analytic variants) at finite precision.
#[derive(Clone, Debug)]
pub struct FakeSeries {
    ctx: Arc<Context>,
    terms: BTreeMap<Point, Padic>,
    prec: i32,
    lo_exp: i32,
    hi: LambdaBound,
    lo: LambdaBound,
}

impl PartialEq for FakeSeries {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.ctx, &other.ctx)
            && self.prec == other.prec
            && self.hi == other.hi
            && self.lo == other.lo
            && self.terms == other.terms
    }
}

impl FakeSeries {
    // ---- construction -------------------------------------------------

    pub fn zero(ctx: &Arc<Context>, prec: i32) -> Self {
        FakeSeries {
            ctx: ctx.clone(),
            terms: BTreeMap::new(),
            prec,
            lo_exp: prec,
            hi: LambdaBound::PosInf,
            lo: LambdaBound::NegInf,
        }
    }

    pub fn one(ctx: &Arc<Context>, prec: i32) -> Self {
        Self::constant(ctx, ctx.ring.one(prec))
    }

    pub fn constant(ctx: &Arc<Context>, c: Padic) -> Self {
        Self::monomial(ctx, &ctx.zero_point(), c)
    }

    pub fn from_int(ctx: &Arc<Context>, n: i64, prec: i32) -> Self {
        Self::constant(ctx, ctx.ring.from_int(n, prec))
    }

    pub fn monomial(ctx: &Arc<Context>, z: &[i64], c: Padic) -> Self {
        let prec = c.prec();
        Self::from_terms(ctx, vec![(z.iter().copied().collect(), c)], prec)
    }

    /// Exact polynomial (hi = +inf) from terms; repeated points are summed.
    pub fn from_terms(ctx: &Arc<Context>, terms: Vec<(Point, Padic)>, prec: i32) -> Self {
        let ring = &ctx.ring;
        let mut map: BTreeMap<Point, Padic> = BTreeMap::new();
        for (z, c) in terms {
            assert_eq!(z.len(), ctx.rank(), "lattice point has wrong rank");
            let c = ring.truncate(&c, prec);
            match map.get_mut(&z) {
                Some(old) => *old = ring.add(old, &c),
                None => {
                    map.insert(z, c);
                }
            }
        }
        let mut s = FakeSeries {
            ctx: ctx.clone(),
            terms: map,
            prec,
            lo_exp: prec,
            hi: LambdaBound::PosInf,
            lo: LambdaBound::NegInf,
        };
        s.normalize_coeffs();
        s.lo_exp = s.min_stored_valuation().unwrap_or(prec);
        s
    }

    fn raw(
        ctx: &Arc<Context>,
        terms: BTreeMap<Point, Padic>,
        prec: i32,
        lo_exp: i32,
        hi: LambdaBound,
        lo: LambdaBound,
    ) -> Self {
        let mut s = FakeSeries {
            ctx: ctx.clone(),
            terms,
            prec,
            lo_exp,
            hi,
            lo,
        };
        s.normalize_coeffs();
        s.prune_window();
        if let Some(v) = s.min_stored_valuation() {
            s.lo_exp = s.lo_exp.min(v);
        }
        s.lo_exp = s.lo_exp.min(s.prec);
        if !s.hi.is_finite() && !s.lo.is_finite() {
            // no unknown λ-tail: the stored terms determine w up to precision
            s.lo_exp = s.min_stored_valuation().unwrap_or(s.prec).min(s.prec);
        }
        s
    }

    fn normalize_coeffs(&mut self) {
        let ring = self.ctx.ring.clone();
        let prec = self.prec;
        self.terms.retain(|_, c| {
            if c.prec() > prec {
                *c = ring.truncate(c, prec);
            }
            !c.is_zero()
        });
    }

    fn prune_window(&mut self) {
        if !self.hi.is_finite() && !self.lo.is_finite() {
            return;
        }
        let val = self.ctx.valuation.clone();
        let hi = self.hi.clone();
        let lo = self.lo.clone();
        self.terms.retain(|z, _| {
            val.compare_point_bound(z, &hi) != Ordering::Greater
                && val.compare_point_bound(z, &lo) != Ordering::Less
        });
    }

    /// Same data with a different window (tightened only).
    pub fn truncate_lambda(&self, hi: &LambdaBound) -> Self {
        let val = &self.ctx.valuation;
        let new_hi = val.min_bound(&self.hi, hi);
        Self::raw(
            &self.ctx,
            self.terms.clone(),
            self.prec,
            self.lo_exp,
            new_hi,
            self.lo.clone(),
        )
    }

    /// Restrict to the analytic window [lo, hi].
    pub fn restrict_window(&self, lo: &LambdaBound, hi: &LambdaBound) -> Self {
        let val = &self.ctx.valuation;
        let new_hi = val.min_bound(&self.hi, hi);
        let new_lo = val.max_bound(&self.lo, lo);
        Self::raw(
            &self.ctx,
            self.terms.clone(),
            self.prec,
            self.lo_exp,
            new_hi,
            new_lo,
        )
    }

    pub fn truncate_prec(&self, prec: i32) -> Self {
        if prec >= self.prec {
            return self.clone();
        }
        Self::raw(
            &self.ctx,
            self.terms.clone(),
            prec,
            self.lo_exp.min(prec),
            self.hi.clone(),
            self.lo.clone(),
        )
    }

    /// Declare the series exact beyond its stored terms (used for inputs known to be polynomials).
    pub fn assume_exact(mut self) -> Self {
        self.hi = LambdaBound::PosInf;
        self.lo = LambdaBound::NegInf;
        self
    }

    // ---- accessors ----------------------------------------------------

    pub fn ctx(&self) -> &Arc<Context> {
        &self.ctx
    }

    pub fn ring(&self) -> &Arc<CoeffRing> {
        &self.ctx.ring
    }

    pub fn valuation(&self) -> &Arc<MonomialValuation> {
        &self.ctx.valuation
    }

    pub fn prec(&self) -> i32 {
        self.prec
    }

    pub fn lo_exp(&self) -> i32 {
        self.lo_exp
    }

    pub fn lambda_hi(&self) -> &LambdaBound {
        &self.hi
    }

    pub fn lambda_lo(&self) -> &LambdaBound {
        &self.lo
    }

    pub fn is_integral_class(&self) -> bool {
        !self.lo.is_finite()
    }

    pub fn terms(&self) -> &BTreeMap<Point, Padic> {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// True when no known coefficient is nonzero.
    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, z: &[i64]) -> Padic {
        self.terms
            .get(z)
            .cloned()
            .unwrap_or_else(|| self.ctx.ring.zero(self.prec))
    }

    pub fn constant_term(&self) -> Padic {
        self.coeff(&self.ctx.zero_point())
    }

    /// Minimal coefficient valuation among stored terms (w of the known part).
    pub fn min_stored_valuation(&self) -> Option<i32> {
        self.terms.values().filter_map(|c| c.valuation()).min()
    }

    /// w(x): the minimal π-adic valuation, or the precision for zero.
    pub fn w(&self) -> i32 {
        self.min_stored_valuation().unwrap_or(self.prec)
    }

    /// v_λ of the known part: least λ over stored support.
    pub fn v_lambda(&self) -> LambdaBound {
        match self.lambda_min_point() {
            Some(z) => LambdaBound::Finite(self.ctx.valuation.lambda(&z)),
            None => LambdaBound::PosInf,
        }
    }

    fn lambda_min_point(&self) -> Option<Point> {
        let val = &self.ctx.valuation;
        self.terms
            .keys()
            .min_by(|a, b| val.compare_points(a, b))
            .cloned()
    }

    fn lambda_max_point(&self) -> Option<Point> {
        let val = &self.ctx.valuation;
        self.terms
            .keys()
            .max_by(|a, b| val.compare_points(a, b))
            .cloned()
    }

    /// Stored terms sorted by increasing λ.
    pub fn sorted_terms(&self) -> Vec<(Point, Padic)> {
        let val = &self.ctx.valuation;
        let mut v: Vec<(Point, Padic)> = self
            .terms
            .iter()
            .map(|(z, c)| (z.clone(), c.clone()))
            .collect();
        v.sort_by(|a, b| val.compare_points(&a.0, &b.0));
        v
    }

    // ---- ring operations ----------------------------------------------

    pub fn add(&self, other: &Self) -> Result<Self> {
        same_ctx(&self.ctx, &other.ctx)?;
        let ring = &self.ctx.ring;
        let val = &self.ctx.valuation;
        let prec = self.prec.min(other.prec);
        let mut terms = self.terms.clone();
        for (z, c) in &other.terms {
            match terms.get_mut(z) {
                Some(old) => *old = ring.add(old, c),
                None => {
                    terms.insert(z.clone(), c.clone());
                }
            }
        }
        Ok(Self::raw(
            &self.ctx,
            terms,
            prec,
            self.lo_exp.min(other.lo_exp),
            val.min_bound(&self.hi, &other.hi),
            val.max_bound(&self.lo, &other.lo),
        ))
    }

    pub fn neg(&self) -> Self {
        let ring = &self.ctx.ring;
        let terms = self
            .terms
            .iter()
            .map(|(z, c)| (z.clone(), ring.neg(c)))
            .collect();
        FakeSeries {
            terms,
            ..self.clone()
        }
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.neg())
    }

    /// Product window: unknown parts of either factor taint the product
    /// above min(hi_x + v(y), hi_y + v(x), hi_x + hi_y).
    fn product_hi(&self, other: &Self) -> LambdaBound {
        let val = &self.ctx.valuation;
        let vx = self.v_lambda();
        let vy = other.v_lambda();
        let mut hi = LambdaBound::PosInf;
        if let LambdaBound::Finite(hx) = &self.hi {
            if let LambdaBound::Finite(v) = &vy {
                hi = val.min_bound(&hi, &LambdaBound::Finite(hx.add(v)));
            }
            if let LambdaBound::Finite(hy) = &other.hi {
                hi = val.min_bound(&hi, &LambdaBound::Finite(hx.add(hy)));
            }
        }
        if let LambdaBound::Finite(hy) = &other.hi {
            if let LambdaBound::Finite(v) = &vx {
                hi = val.min_bound(&hi, &LambdaBound::Finite(hy.add(v)));
            }
        }
        hi
    }

    fn product_lo(&self, other: &Self) -> Result<LambdaBound> {
        if !self.lo.is_finite() && !other.lo.is_finite() {
            return Ok(LambdaBound::NegInf);
        }
        if (self.lo.is_finite() && other.hi.is_finite())
            || (other.lo.is_finite() && self.hi.is_finite())
        {
            return Err(Error::PrecisionExhausted(
                "product of a two-sided window with an upper-truncated series is unknown everywhere".into(),
            ));
        }
        let val = &self.ctx.valuation;
        let mut lo = LambdaBound::NegInf;
        let mx = self.lambda_max_point().map(|z| val.lambda(&z));
        let my = other.lambda_max_point().map(|z| val.lambda(&z));
        if let (LambdaBound::Finite(l), Some(m)) = (&self.lo, &my) {
            lo = val.max_bound(&lo, &LambdaBound::Finite(l.add(m)));
        }
        if let (LambdaBound::Finite(l), Some(m)) = (&other.lo, &mx) {
            lo = val.max_bound(&lo, &LambdaBound::Finite(l.add(m)));
        }
        if let (LambdaBound::Finite(a), LambdaBound::Finite(b)) = (&self.lo, &other.lo) {
            lo = val.max_bound(&lo, &LambdaBound::Finite(a.add(b)));
        }
        Ok(lo)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        same_ctx(&self.ctx, &other.ctx)?;
        let hi = self.product_hi(other);
        let lo = self.product_lo(other)?;
        let prec = (self.prec + other.lo_exp).min(other.prec + self.lo_exp);
        let lo_exp = self.lo_exp + other.lo_exp;
        let terms = self.convolve(other, prec, &hi, &lo);
        Ok(Self::raw(&self.ctx, terms, prec, lo_exp, hi, lo))
    }

    /// Raw convolution of stored terms, keeping products inside [lo, hi] and
    /// below precision `prec`.
    fn convolve(
        &self,
        other: &Self,
        prec: i32,
        hi: &LambdaBound,
        lo: &LambdaBound,
    ) -> BTreeMap<Point, Padic> {
        let ring = &self.ctx.ring;
        let val = &self.ctx.valuation;
        let hi_approx = hi.finite().map(|h| val.approx(h));
        let lo_approx = lo.finite().map(|l| val.approx(l));
        let ys: Vec<(&Point, &Padic, f64)> = other
            .terms
            .iter()
            .map(|(z, c)| (z, c, val.lambda_approx(z)))
            .collect();
        let mut acc: HashMap<Point, Padic> = HashMap::new();
        for (zx, cx) in &self.terms {
            let lx = val.lambda_approx(zx);
            let vx = cx.val_bound();
            for (zy, cy, ly) in &ys {
                if vx + cy.val_bound() >= prec {
                    continue;
                }
                let l = lx + ly;
                if let Some(h) = hi_approx {
                    let margin = 1e-9 * (1.0 + l.abs() + h.abs());
                    if l > h + margin {
                        continue;
                    }
                    if l > h - margin {
                        let z = add_points(zx, zy);
                        if val.compare_point_bound(&z, hi) == Ordering::Greater {
                            continue;
                        }
                    }
                }
                if let Some(lw) = lo_approx {
                    let margin = 1e-9 * (1.0 + l.abs() + lw.abs());
                    if l < lw - margin {
                        continue;
                    }
                    if l < lw + margin {
                        let z = add_points(zx, zy);
                        if val.compare_point_bound(&z, lo) == Ordering::Less {
                            continue;
                        }
                    }
                }
                let z = add_points(zx, zy);
                let prod = ring.truncate(&ring.mul(cx, cy), prec);
                match acc.get_mut(&z) {
                    Some(old) => *old = ring.add(old, &prod),
                    None => {
                        acc.insert(z, prod);
                    }
                }
            }
        }
        acc.into_iter().filter(|(_, c)| !c.is_zero()).collect()
    }

    /// Multiply by a scalar.
    pub fn scale(&self, c: &Padic) -> Self {
        let ring = &self.ctx.ring;
        let prec = (self.prec + c.val_bound()).min(c.prec() + self.lo_exp);
        let terms = self
            .terms
            .iter()
            .map(|(z, x)| (z.clone(), ring.mul(x, c)))
            .collect();
        let lo_exp = if c.is_zero() {
            prec
        } else {
            self.lo_exp + c.val_bound()
        };
        Self::raw(
            &self.ctx,
            terms,
            prec,
            lo_exp,
            self.hi.clone(),
            self.lo.clone(),
        )
    }

    pub fn scale_int(&self, k: i64) -> Self {
        let c = self.ctx.ring.from_int(k, self.prec + self.ctx.ring.cap());
        self.scale(&c)
    }

    /// Multiply by p^e exactly.
    pub fn shift_pi(&self, e: i32) -> Self {
        let ring = &self.ctx.ring;
        let terms = self
            .terms
            .iter()
            .map(|(z, x)| (z.clone(), ring.shift(x, e)))
            .collect();
        Self::raw(
            &self.ctx,
            terms,
            self.prec + e,
            self.lo_exp + e,
            self.hi.clone(),
            self.lo.clone(),
        )
    }

    /// Multiply by the monomial {z} exactly.
    pub fn shift_point(&self, z: &[i64]) -> Self {
        let lz = self.ctx.valuation.lambda(z);
        let terms = self
            .terms
            .iter()
            .map(|(y, c)| (add_points(y, z), c.clone()))
            .collect();
        Self::raw(
            &self.ctx,
            terms,
            self.prec,
            self.lo_exp,
            self.hi.offset(&lz),
            self.lo.offset(&lz),
        )
    }

    pub fn pow(&self, e: u32) -> Result<Self> {
        let mut result = Self::one(&self.ctx, self.prec.max(self.ctx.ring.cap()));
        let mut base = self.clone();
        let mut e = e;
        while e > 0 {
            if e & 1 == 1 {
                result = result.mul(&base)?;
            }
            e >>= 1;
            if e > 0 {
                base = base.mul(&base)?;
            }
        }
        Ok(result)
    }

    /// Apply a linear map to lattice points and a map to coefficients, with the
    /// window scaled by the positive rational a/b (λ(T z) = (a/b) λ(z)).
    pub(crate) fn map_terms<F, G>(&self, point_map: F, coeff_map: G, a: i128, b: i128) -> Self
    where
        F: Fn(&[i64]) -> Point,
        G: Fn(&Padic) -> Padic,
    {
        let ring = &self.ctx.ring;
        let mut terms: BTreeMap<Point, Padic> = BTreeMap::new();
        for (z, c) in &self.terms {
            let nz = point_map(z);
            let nc = coeff_map(c);
            match terms.get_mut(&nz) {
                Some(old) => *old = ring.add(old, &nc),
                None => {
                    terms.insert(nz, nc);
                }
            }
        }
        Self::raw(
            &self.ctx,
            terms,
            self.prec,
            self.lo_exp,
            self.hi.scale(a, b),
            self.lo.scale(a, b),
        )
    }

    /// Move the series into another context with the same ring and rank
    /// (used for finite perfection levels), mapping points by `point_map`.
    pub(crate) fn transport<F>(
        &self,
        ctx: &Arc<Context>,
        point_map: F,
        hi: LambdaBound,
        lo: LambdaBound,
    ) -> Self
    where
        F: Fn(&[i64]) -> Point,
    {
        let terms = self
            .terms
            .iter()
            .map(|(z, c)| (point_map(z), c.clone()))
            .collect();
        Self::raw(ctx, terms, self.prec, self.lo_exp, hi, lo)
    }

    /// Image under a coefficient ring map into another context of equal rank.
    pub fn change_ring<G>(&self, ctx: &Arc<Context>, coeff_map: G) -> Self
    where
        G: Fn(&Padic) -> Padic,
    {
        let terms = self
            .terms
            .iter()
            .map(|(z, c)| (z.clone(), coeff_map(c)))
            .collect();
        Self::raw(
            ctx,
            terms,
            self.prec,
            self.lo_exp,
            self.hi.clone(),
            self.lo.clone(),
        )
    }

    pub fn filter_terms<F>(&self, keep: F) -> Self
    where
        F: Fn(&[i64], &Padic) -> bool,
    {
        let terms = self
            .terms
            .iter()
            .filter(|(z, c)| keep(z, c))
            .map(|(z, c)| (z.clone(), c.clone()))
            .collect();
        Self::raw(
            &self.ctx,
            terms,
            self.prec,
            self.lo_exp,
            self.hi.clone(),
            self.lo.clone(),
        )
    }

    /// Equality of known data at the common precision and window.
    pub fn approx_eq(&self, other: &Self) -> bool {
        match self.sub(other) {
            Ok(d) => d.is_zero(),
            Err(_) => false,
        }
    }

    // ---- valuations -----------------------------------------------------

    /// v_n^naive(x) = min{λ(z) : w(c_z) <= n}.
    pub fn naive_partial_valuation(&self, n: i32) -> Result<LambdaBound> {
        if n >= self.prec {
            return Err(Error::PrecisionExhausted(format!(
                "digit {n} not known at coefficient precision {}",
                self.prec
            )));
        }
        if self.lo.is_finite() {
            return Err(Error::PrecisionExhausted(
                "naive partial valuation of an analytic-class window is not certifiable".into(),
            ));
        }
        let val = &self.ctx.valuation;
        let best = self
            .terms
            .iter()
            .filter(|(_, c)| c.val_bound() <= n)
            .map(|(z, _)| z)
            .min_by(|a, b| val.compare_points(a, b));
        match best {
            Some(z) => Ok(LambdaBound::Finite(val.lambda(z))),
            None if !self.hi.is_finite() => Ok(LambdaBound::PosInf),
            None => Err(Error::PrecisionExhausted(format!(
                "no term with w <= {n} inside the window; v_{n} lies beyond lambdaHi"
            ))),
        }
    }

    /// w_r(x) = min_n (r·v_n + n) for r = a/b > 0.
    pub fn gauss_valuation(&self, a: i128, b: i128) -> Result<GaussValue> {
        if a <= 0 || b <= 0 {
            return Err(Error::Domain("radius must be a positive rational".into()));
        }
        if self.terms.is_empty() {
            return Err(Error::PrecisionExhausted(
                "series is zero at current precision".into(),
            ));
        }
        let val = &self.ctx.valuation;
        let mut best: Option<(LambdaValue, i32)> = None;
        for (z, c) in &self.terms {
            let n = c.val_bound();
            let v = val.lambda(z).scale(a, b).add_int(n as i128);
            best = match best {
                None => Some((v, n)),
                Some((bv, bn)) => match val.compare(&v, &bv) {
                    Ordering::Less => Some((v, n)),
                    Ordering::Equal if n < bn => Some((v, n)),
                    _ => Some((bv, bn)),
                },
            };
        }
        let (value, digit) = best.expect("nonempty");
        let mut certified = digit < self.prec && !self.lo.is_finite();
        if let LambdaBound::Finite(h) = &self.hi {
            let bound = h.scale(a, b).add_int(self.lo_exp as i128);
            if val.compare(&value, &bound) == Ordering::Greater {
                certified = false;
            }
        }
        Ok(GaussValue {
            value,
            digit,
            certified,
        })
    }

    // ---- decompositions -------------------------------------------------

    /// Split by the sign of λ(z): (negative, zero, positive).
    pub fn decompose_by_sign(&self) -> (Self, Self, Self) {
        let val = self.ctx.valuation.clone();
        let minus = self.filter_terms(|z, _| val.sign(&val.lambda(z)) == Ordering::Less);
        let zero = self.filter_terms(|z, _| z.iter().all(|&c| c == 0));
        let plus = self.filter_terms(|z, _| val.sign(&val.lambda(z)) == Ordering::Greater);
        (minus, zero, plus)
    }

    /// x = p^c · u with u reducing to a nonzero residue series.
    pub fn pi_power_decompose(&self) -> Result<(i32, Self)> {
        let c = self.min_stored_valuation().ok_or_else(|| {
            Error::PrecisionExhausted("series is zero at current precision".into())
        })?;
        if self.hi.is_finite() && self.lo_exp < c {
            return Err(Error::PrecisionExhausted(format!(
                "truncated tail may have valuation {} < {c}",
                self.lo_exp
            )));
        }
        Ok((c, self.shift_pi(-c)))
    }

    /// ∂_μ: multiply the coefficient of {z} by μ(z).
    pub fn derivation(&self, mu: &[i64]) -> Self {
        let ring = &self.ctx.ring;
        let val = &self.ctx.valuation;
        let terms = self
            .terms
            .iter()
            .map(|(z, c)| {
                (
                    z.clone(),
                    ring.truncate(&ring.mul_int(c, val.pair(mu, z)), self.prec),
                )
            })
            .collect();
        Self::raw(
            &self.ctx,
            terms,
            self.prec,
            self.lo_exp,
            self.hi.clone(),
            self.lo.clone(),
        )
    }

    /// ∂_i for the dual basis vector μ_i.
    pub fn partial(&self, i: usize) -> Self {
        let mut mu = vec![0i64; self.ctx.rank()];
        mu[i] = 1;
        self.derivation(&mu)
    }

    // ---- units ----------------------------------------------------------

    /// Leading term: λ-minimal among the terms of minimal valuation.
    pub fn leading_term(&self) -> Option<(Point, Padic)> {
        let c = self.min_stored_valuation()?;
        let val = &self.ctx.valuation;
        self.terms
            .iter()
            .filter(|(_, x)| x.val_bound() == c)
            .min_by(|a, b| val.compare_points(a.0, b.0))
            .map(|(z, x)| (z.clone(), x.clone()))
    }

    /// Inverse by the geometric series, known up to `target_hi`.
    pub fn invert_unit(&self, target_hi: &LambdaBound) -> Result<Self> {
        if self.lo.is_finite() {
            return Err(Error::NotAUnit(
                "analytic-class inversion is not supported".into(),
            ));
        }
        let (z0, c0) = self
            .leading_term()
            .ok_or_else(|| Error::NotAUnit("series is zero at current precision".into()))?;
        if self.hi.is_finite() && self.lo_exp < c0.val_bound() {
            return Err(Error::NotAUnit(
                "leading π-digit not certified inside the window".into(),
            ));
        }
        let ring = &self.ctx.ring;
        let val = &self.ctx.valuation;
        let lz0 = val.lambda(&z0);
        let neg_z0: Point = z0.iter().map(|c| -c).collect();
        let c0_inv = ring.inv(&c0)?;
        // x = c0 {z0} (1 - u)
        let normalized = self.shift_point(&neg_z0).scale(&c0_inv);
        let one = Self::one(&self.ctx, normalized.prec);
        let u = one.sub(&normalized)?;
        let work_prec = normalized.prec;
        let u_hi = u.hi.clone();
        let u_exact = FakeSeries {
            hi: LambdaBound::PosInf,
            ..u.clone()
        };
        let has_slow_terms = u_exact.terms.iter().any(|(_, c)| c.val_bound() <= 0);
        let zero_lam = val.zero_value();
        let neg_part = u_exact
            .terms
            .keys()
            .map(|z| val.lambda(z))
            .filter(|l| val.sign(l) == Ordering::Less)
            .min_by(|a, b| val.compare(a, b));
        let s_target = target_hi.offset(&lz0);
        let work_hi = match (&s_target, &neg_part) {
            (LambdaBound::Finite(t), Some(n)) => {
                LambdaBound::Finite(t.sub(&n.scale((work_prec - 1).max(0) as i128, 1)))
            }
            (LambdaBound::Finite(t), None) => LambdaBound::Finite(t.clone()),
            _ => {
                if has_slow_terms {
                    return Err(Error::PrecisionExhausted(
                        "geometric tail is infinite; a finite target window is required".into(),
                    ));
                }
                LambdaBound::PosInf
            }
        };
        let _ = zero_lam;
        let mut s = Self::one(&self.ctx, work_prec);
        let max_iter = 100_000;
        let mut converged = false;
        for _ in 0..max_iter {
            let prod_terms = u_exact.convolve(&s, work_prec, &work_hi, &LambdaBound::NegInf);
            let prod = Self::raw(
                &self.ctx,
                prod_terms,
                work_prec,
                0,
                LambdaBound::PosInf,
                LambdaBound::NegInf,
            );
            let next = Self::one(&self.ctx, work_prec).add(&prod)?;
            if next.terms == s.terms {
                converged = true;
                break;
            }
            s = next;
        }
        if !converged {
            return Err(Error::PrecisionExhausted(
                "geometric series did not stabilise".into(),
            ));
        }
        // Window of the geometric sum: the requested target, reduced by any
        // truncation of u (δs = s·δu·s).
        let mut s_hi = s_target.clone();
        if let LambdaBound::Finite(h) = &u_hi {
            let vs = match s.v_lambda() {
                LambdaBound::Finite(v) if val.sign(&v) == Ordering::Less => v,
                _ => val.zero_value(),
            };
            s_hi = val.min_bound(&s_hi, &LambdaBound::Finite(h.add(&vs.scale(2, 1))));
        }
        let s = FakeSeries {
            hi: LambdaBound::PosInf,
            ..s
        }
        .truncate_lambda(&s_hi);
        let s = FakeSeries {
            hi: s_hi.clone(),
            ..s
        };
        let y = s.shift_point(&neg_z0).scale(&c0_inv);
        Ok(y)
    }

    /// Inverse when the result is an exact polynomial up to precision.
    pub fn inverse(&self) -> Result<Self> {
        self.invert_unit(&LambdaBound::PosInf)
    }

    // ---- text -----------------------------------------------------------

    pub fn format_point(z: &[i64]) -> String {
        let parts: Vec<String> = z.iter().map(|c| c.to_string()).collect();
        format!("{{({})}}", parts.join(","))
    }

    /// Body text: `<coeff> * {(a1,...,am)}` terms joined by ` + `, λ-increasing.
    pub fn to_text(&self) -> String {
        if self.terms.is_empty() {
            return "0".into();
        }
        let ring = &self.ctx.ring;
        let mut parts = Vec::new();
        for (z, c) in self.sorted_terms() {
            let cs = ring.format_compact(&c);
            if z.iter().all(|&v| v == 0) {
                parts.push(cs);
            } else {
                parts.push(format!("{cs} * {}", Self::format_point(&z)));
            }
        }
        parts.join(" + ")
    }

    pub fn header(&self) -> String {
        let val = &self.ctx.valuation;
        format!(
            "prec{{N={}, lambdaHi={}, lambdaLo={}}}",
            self.prec,
            val.format_bound(&self.hi),
            val.format_bound(&self.lo)
        )
    }

    pub fn to_text_with_header(&self) -> String {
        format!("{} {}", self.header(), self.to_text())
    }
}

impl fmt::Display for FakeSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// Square matrices of series.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesMatrix {
    n: usize,
    entries: Vec<FakeSeries>,
}

impl SeriesMatrix {
    pub fn from_rows(rows: Vec<Vec<FakeSeries>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidParams(
                "matrix must be square and nonempty".into(),
            ));
        }
        let ctx = rows[0][0].ctx.clone();
        for r in &rows {
            for e in r {
                same_ctx(&ctx, &e.ctx)?;
            }
        }
        Ok(SeriesMatrix {
            n,
            entries: rows.into_iter().flatten().collect(),
        })
    }

    pub fn from_fn<F: FnMut(usize, usize) -> FakeSeries>(n: usize, mut f: F) -> Self {
        let mut entries = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                entries.push(f(i, j));
            }
        }
        SeriesMatrix { n, entries }
    }

    pub fn identity(ctx: &Arc<Context>, n: usize, prec: i32) -> Self {
        Self::from_fn(n, |i, j| {
            if i == j {
                FakeSeries::one(ctx, prec)
            } else {
                FakeSeries::zero(ctx, prec)
            }
        })
    }

    pub fn zeros(ctx: &Arc<Context>, n: usize, prec: i32) -> Self {
        Self::from_fn(n, |_, _| FakeSeries::zero(ctx, prec))
    }

    pub fn scalar(ctx: &Arc<Context>, n: usize, c: &FakeSeries) -> Self {
        let prec = c.prec();
        Self::from_fn(n, |i, j| {
            if i == j {
                c.clone()
            } else {
                FakeSeries::zero(ctx, prec)
            }
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn ctx(&self) -> &Arc<Context> {
        self.entries[0].ctx()
    }

    pub fn get(&self, i: usize, j: usize) -> &FakeSeries {
        &self.entries[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: FakeSeries) {
        self.entries[i * self.n + j] = v;
    }

    pub fn entries(&self) -> &[FakeSeries] {
        &self.entries
    }

    pub fn rows(&self) -> Vec<Vec<FakeSeries>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j).clone()).collect())
            .collect()
    }

    pub fn map<F: FnMut(&FakeSeries) -> FakeSeries>(&self, f: F) -> Self {
        SeriesMatrix {
            n: self.n,
            entries: self.entries.iter().map(f).collect(),
        }
    }

    pub fn try_map<F: FnMut(&FakeSeries) -> Result<FakeSeries>>(&self, f: F) -> Result<Self> {
        Ok(SeriesMatrix {
            n: self.n,
            entries: self.entries.iter().map(f).collect::<Result<_>>()?,
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a.add(b))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a.sub(b))
    }

    fn zip<F: Fn(&FakeSeries, &FakeSeries) -> Result<FakeSeries>>(
        &self,
        other: &Self,
        f: F,
    ) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::InvalidParams("matrix size mismatch".into()));
        }
        Ok(SeriesMatrix {
            n: self.n,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(a, b)| f(a, b))
                .collect::<Result<_>>()?,
        })
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::InvalidParams("matrix size mismatch".into()));
        }
        let n = self.n;
        let mut entries = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let mut acc: Option<FakeSeries> = None;
                for k in 0..n {
                    let a = self.get(i, k);
                    let b = other.get(k, j);
                    let prod = a.mul(b)?;
                    acc = Some(match acc {
                        None => prod,
                        Some(s) => s.add(&prod)?,
                    });
                }
                entries.push(acc.expect("n > 0"));
            }
        }
        Ok(SeriesMatrix { n, entries })
    }

    pub fn scale(&self, c: &FakeSeries) -> Result<Self> {
        self.try_map(|e| c.mul(e))
    }

    pub fn scale_scalar(&self, c: &Padic) -> Self {
        self.map(|e| e.scale(c))
    }

    pub fn neg(&self) -> Self {
        self.map(|e| e.neg())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.n, |i, j| self.get(j, i).clone())
    }

    pub fn partial(&self, i: usize) -> Self {
        self.map(|e| e.partial(i))
    }

    pub fn derivation(&self, mu: &[i64]) -> Self {
        self.map(|e| e.derivation(mu))
    }

    /// min w over entries (precision for the zero matrix).
    pub fn w(&self) -> i32 {
        self.entries.iter().map(|e| e.w()).min().unwrap_or(i32::MAX)
    }

    pub fn prec(&self) -> i32 {
        self.entries
            .iter()
            .map(|e| e.prec())
            .min()
            .unwrap_or(i32::MAX)
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|e| e.is_zero())
    }

    pub fn approx_eq(&self, other: &Self) -> bool {
        self.n == other.n
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|(a, b)| a.approx_eq(b))
    }

    pub fn truncate_prec(&self, prec: i32) -> Self {
        self.map(|e| e.truncate_prec(prec))
    }

    pub fn truncate_lambda(&self, hi: &LambdaBound) -> Self {
        self.map(|e| e.truncate_lambda(hi))
    }

    /// Narrowest upper window over the entries.
    pub fn lambda_hi(&self) -> LambdaBound {
        let val = self.ctx().valuation().clone();
        self.entries.iter().fold(LambdaBound::PosInf, |acc, e| {
            val.min_bound(&acc, e.lambda_hi())
        })
    }

    pub fn kronecker(&self, other: &Self) -> Result<Self> {
        let (n1, n2) = (self.n, other.n);
        let n = n1 * n2;
        let mut entries = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let a = self.get(i / n2, j / n2);
                let b = other.get(i % n2, j % n2);
                entries.push(a.mul(b)?);
            }
        }
        Ok(SeriesMatrix { n, entries })
    }

    /// Determinant by permutation expansion for small n, elimination otherwise.
    pub fn det(&self) -> Result<FakeSeries> {
        if self.n <= 4 {
            return self.det_expansion();
        }
        self.det_elimination()
    }

    fn det_expansion(&self) -> Result<FakeSeries> {
        let n = self.n;
        let mut perm: Vec<usize> = (0..n).collect();
        let prec = self.prec();
        let ctx = self.ctx().clone();
        let mut total = FakeSeries::zero(&ctx, prec);
        let mut first = true;
        permute(&mut perm, 0, &mut |p, sign| -> Result<()> {
            let mut prod = self.get(0, p[0]).clone();
            for (i, &pi) in p.iter().enumerate().skip(1) {
                prod = prod.mul(self.get(i, pi))?;
            }
            if sign < 0 {
                prod = prod.neg();
            }
            total = if first { prod } else { total.add(&prod)? };
            first = false;
            Ok(())
        })?;
        Ok(total)
    }

    fn det_elimination(&self) -> Result<FakeSeries> {
        let n = self.n;
        let mut m = self.rows();
        let ctx = self.ctx().clone();
        let mut det = FakeSeries::one(&ctx, self.prec());
        for col in 0..n {
            let piv = (col..n)
                .filter(|&r| !m[r][col].is_zero())
                .min_by_key(|&r| m[r][col].w())
                .ok_or_else(|| Error::PrecisionExhausted("singular at current precision".into()))?;
            if piv != col {
                m.swap(piv, col);
                det = det.neg();
            }
            let pivot = m[col][col].clone();
            det = det.mul(&pivot)?;
            let inv = pivot.invert_unit(&pivot.lambda_hi().clone())?;
            for r in col + 1..n {
                if m[r][col].is_zero() {
                    continue;
                }
                let factor = m[r][col].mul(&inv)?;
                for c in col..n {
                    let t = factor.mul(&m[col][c])?;
                    m[r][c] = m[r][c].sub(&t)?;
                }
            }
        }
        Ok(det)
    }

    /// Inverse by Gauss-Jordan elimination with minimal-valuation pivots.
    pub fn inverse(&self, target_hi: &LambdaBound) -> Result<Self> {
        let n = self.n;
        let ctx = self.ctx().clone();
        let mut m = self.rows();
        let prec = self.prec();
        let mut inv = SeriesMatrix::identity(&ctx, n, prec).rows();
        for col in 0..n {
            let piv = (col..n)
                .filter(|&r| !m[r][col].is_zero())
                .min_by_key(|&r| m[r][col].w())
                .ok_or_else(|| Error::PrecisionExhausted("singular at current precision".into()))?;
            m.swap(piv, col);
            inv.swap(piv, col);
            let pinv = m[col][col].invert_unit(target_hi)?;
            for c in 0..n {
                m[col][c] = m[col][c].mul(&pinv)?;
                inv[col][c] = inv[col][c].mul(&pinv)?;
            }
            for r in 0..n {
                if r == col || m[r][col].is_zero() {
                    continue;
                }
                let factor = m[r][col].clone();
                for c in 0..n {
                    let t = factor.mul(&m[col][c])?;
                    m[r][c] = m[r][c].sub(&t)?;
                    let t = factor.mul(&inv[col][c])?;
                    inv[r][c] = inv[r][c].sub(&t)?;
                }
            }
        }
        SeriesMatrix::from_rows(inv)
    }

    /// Inverse of I - X by the Neumann series when w(X) > 0, exact at precision.
    pub fn inverse_near_identity(&self) -> Result<Self> {
        let ctx = self.ctx().clone();
        let n = self.n;
        let prec = self.prec();
        let id = SeriesMatrix::identity(&ctx, n, prec);
        let x = id.sub(self)?;
        if x.w() <= 0 && !x.is_zero() {
            return self.inverse(&LambdaBound::PosInf);
        }
        let mut sum = id.clone();
        let mut power = id;
        for _ in 0..(prec.max(1) as usize * 2 + 2) {
            power = power.mul(&x)?.truncate_prec(prec);
            if power.is_zero() {
                return Ok(sum);
            }
            sum = sum.add(&power)?;
        }
        if power.is_zero() {
            Ok(sum)
        } else {
            Err(Error::PrecisionExhausted(
                "Neumann series did not terminate".into(),
            ))
        }
    }

    pub fn column(&self, j: usize) -> Vec<FakeSeries> {
        (0..self.n).map(|i| self.get(i, j).clone()).collect()
    }

    pub fn from_columns(cols: Vec<Vec<FakeSeries>>) -> Result<Self> {
        let n = cols.len();
        let rows = (0..n)
            .map(|i| cols.iter().map(|c| c[i].clone()).collect())
            .collect();
        Self::from_rows(rows)
    }

    pub fn mul_vec(&self, v: &[FakeSeries]) -> Result<Vec<FakeSeries>> {
        (0..self.n)
            .map(|i| {
                let mut acc = self.get(i, 0).mul(&v[0])?;
                for (k, vk) in v.iter().enumerate().skip(1) {
                    acc = acc.add(&self.get(i, k).mul(vk)?)?;
                }
                Ok(acc)
            })
            .collect()
    }
}

fn permute<F: FnMut(&[usize], i32) -> Result<()>>(
    perm: &mut Vec<usize>,
    k: usize,
    f: &mut F,
) -> Result<()> {
    fn rec<F: FnMut(&[usize], i32) -> Result<()>>(
        perm: &mut Vec<usize>,
        k: usize,
        sign: i32,
        f: &mut F,
    ) -> Result<()> {
        if k == perm.len() {
            return f(perm, sign);
        }
        for i in k..perm.len() {
            perm.swap(k, i);
            rec(perm, k + 1, if i == k { sign } else { -sign }, f)?;
            perm.swap(k, i);
        }
        Ok(())
    }
    rec(perm, k, 1, f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::monoval::point;

    fn ctx2(prec: i32) -> Arc<Context> {
        let ring = CoeffRing::prime_field(5, prec).unwrap();
        Context::new(ring, Arc::new(MonomialValuation::sqrt2_plane()))
    }

    fn mono(ctx: &Arc<Context>, c: i64, z: &[i64]) -> FakeSeries {
        FakeSeries::monomial(ctx, z, ctx.ring().from_int(c, ctx.prec()))
    }

    #[test]
    fn monomial_inverse() {
        let ctx = ctx2(6);
        let z = mono(&ctx, 1, &[2, -1]);
        let w = mono(&ctx, 1, &[-2, 1]);
        assert!(z.mul(&w).unwrap().approx_eq(&FakeSeries::one(&ctx, 6)));
        assert!(z.inverse().unwrap().approx_eq(&w));
    }

    #[test]
    fn difference_of_squares() {
        let ctx = ctx2(6);
        let one = FakeSeries::one(&ctx, 6);
        let z = mono(&ctx, 1, &[1, 0]);
        let lhs = one.add(&z).unwrap().mul(&one.sub(&z).unwrap()).unwrap();
        let rhs = one.sub(&mono(&ctx, 1, &[2, 0])).unwrap();
        assert!(lhs.approx_eq(&rhs));
    }

    #[test]
    fn square_by_convolution() {
        let ctx = ctx2(6);
        let x = mono(&ctx, 2, &[1, 0]).add(&mono(&ctx, 5, &[0, 1])).unwrap();
        let sq = x.mul(&x).unwrap();
        assert_eq!(sq.coeff(&[2, 0]), ctx.ring().from_int(4, 6));
        assert_eq!(sq.coeff(&[1, 1]), ctx.ring().from_int(20, 6));
        assert_eq!(sq.coeff(&[0, 2]), ctx.ring().from_int(25, 6));
        assert_eq!(sq.len(), 3);
    }

    #[test]
    fn naive_valuations() {
        let ctx = ctx2(6);
        let x = mono(&ctx, 3, &[1, 0]).add(&mono(&ctx, 5, &[0, 1])).unwrap();
        let val = ctx.valuation();
        assert_eq!(
            x.naive_partial_valuation(0).unwrap(),
            LambdaBound::Finite(val.lambda(&[1, 0]))
        );
        assert_eq!(
            x.naive_partial_valuation(1).unwrap(),
            LambdaBound::Finite(val.lambda(&[1, 0]))
        );
        let y = mono(&ctx, 5, &[0, 1]);
        assert_eq!(y.naive_partial_valuation(0).unwrap(), LambdaBound::PosInf);
        assert_eq!(
            y.naive_partial_valuation(1).unwrap(),
            LambdaBound::Finite(val.lambda(&[0, 1]))
        );
    }

    #[test]
    fn gauss_two_terms() {
        let ring = CoeffRing::prime_field(5, 6).unwrap();
        let ctx = Context::new(ring, Arc::new(MonomialValuation::rank_one()));
        let x = FakeSeries::from_int(&ctx, 5, 6)
            .add(&mono(&ctx, 1, &[1]))
            .unwrap();
        // w_r = min(r, 1)
        let g = x.gauss_valuation(1, 2).unwrap();
        assert_eq!(g.value, LambdaValue::from_parts(&[1], 2));
        let g = x.gauss_valuation(3, 1).unwrap();
        assert_eq!(g.value, LambdaValue::from_int(1, 1));
        assert_eq!(g.digit, 1);
        // tie at r = 1: smallest digit wins
        let g = x.gauss_valuation(1, 1).unwrap();
        assert_eq!(g.digit, 0);
        assert!(g.certified);
    }

    #[test]
    fn geometric_inverses() {
        let ctx = ctx2(6);
        let one = FakeSeries::one(&ctx, 6);
        let z = mono(&ctx, 1, &[1, 0]);
        let hi = LambdaBound::Finite(ctx.valuation().int_value(5));
        let inv = one.sub(&z).unwrap().invert_unit(&hi).unwrap();
        assert_eq!(inv.len(), 6);
        for j in 0..=5 {
            assert_eq!(inv.coeff(&[j, 0]), ctx.ring().one(6));
        }
        let x = one.sub(&mono(&ctx, 5, &[-1, 0])).unwrap();
        let inv = x.inverse().unwrap();
        assert_eq!(inv.len(), 6);
        assert!(inv.mul(&x).unwrap().approx_eq(&one));
    }

    #[test]
    fn derivation_examples() {
        let ctx = ctx2(6);
        let x = mono(&ctx, 3, &[2, 3]);
        assert_eq!(x.partial(0).coeff(&[2, 3]), ctx.ring().from_int(6, 6));
        assert!(FakeSeries::from_int(&ctx, 7, 6).partial(1).is_zero());
    }

    #[test]
    fn sign_split_and_pi_power() {
        let ctx = ctx2(6);
        let x = mono(&ctx, 1, &[1, 0])
            .add(&mono(&ctx, 1, &[-1, 0]))
            .unwrap()
            .add(&FakeSeries::one(&ctx, 6))
            .unwrap();
        let (m, z, p) = x.decompose_by_sign();
        assert_eq!(m.terms().keys().next().unwrap(), &point(&[-1, 0]));
        assert_eq!(z.len(), 1);
        assert_eq!(p.len(), 1);
        let y = mono(&ctx, 25, &[1, 0]);
        let (c, u) = y.pi_power_decompose().unwrap();
        assert_eq!(c, 2);
        assert_eq!(u.coeff(&[1, 0]), ctx.ring().one(4));
    }
}

//! Lattices `Z^m` with an irrational real functional λ taking values in a
//! real number field `Q(α)`, and exact comparison of those values.

use std::cmp::Ordering;
use std::fmt;
use std::sync::Mutex;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use smallvec::SmallVec;

use crate::error::{Error, Result};

/// A lattice point, in coordinates with respect to the basis z_1..z_m.
pub type Point = SmallVec<[i64; 4]>;

pub fn point(coords: &[i64]) -> Point {
    coords.iter().copied().collect()
}

/// An element of Q(α): `Σ num[k] α^k / den`, `den > 0`, reduced.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LambdaValue {
    num: SmallVec<[i128; 2]>,
    den: i128,
}

fn gcd_i128(a: i128, b: i128) -> i128 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl LambdaValue {
    pub fn zero(degree: usize) -> Self {
        LambdaValue {
            num: SmallVec::from_elem(0, degree),
            den: 1,
        }
    }

    pub fn from_int(degree: usize, n: i128) -> Self {
        let mut v = Self::zero(degree);
        v.num[0] = n;
        v
    }

    pub fn from_parts(num: &[i128], den: i128) -> Self {
        assert!(den != 0);
        let mut v = LambdaValue {
            num: num.iter().copied().collect(),
            den,
        };
        v.reduce();
        v
    }

    pub fn from_rationals(coords: &[BigRational]) -> Result<Self> {
        let mut den = BigInt::one();
        for c in coords {
            den = den.lcm(c.denom());
        }
        let num: Option<SmallVec<[i128; 2]>> = coords
            .iter()
            .map(|c| (c.numer() * (&den / c.denom())).to_i128())
            .collect();
        let num = num.ok_or_else(|| Error::InvalidParams("lambda value too large".into()))?;
        let den = den
            .to_i128()
            .ok_or_else(|| Error::InvalidParams("lambda denominator too large".into()))?;
        Ok(Self::from_parts(&num, den))
    }

    fn reduce(&mut self) {
        if self.den < 0 {
            self.den = -self.den;
            for c in self.num.iter_mut() {
                *c = -*c;
            }
        }
        let mut g = self.den;
        for &c in &self.num {
            g = gcd_i128(g, c);
        }
        if g > 1 {
            self.den /= g;
            for c in self.num.iter_mut() {
                *c /= g;
            }
        }
    }

    pub fn degree(&self) -> usize {
        self.num.len()
    }

    pub fn numerators(&self) -> &[i128] {
        &self.num
    }

    pub fn denominator(&self) -> i128 {
        self.den
    }

    pub fn is_zero(&self) -> bool {
        self.num.iter().all(|&c| c == 0)
    }

    pub fn coords(&self) -> Vec<BigRational> {
        self.num
            .iter()
            .map(|&c| BigRational::new(BigInt::from(c), BigInt::from(self.den)))
            .collect()
    }

    pub fn add(&self, other: &Self) -> Self {
        let den = self.den / gcd_i128(self.den, other.den) * other.den;
        let (a, b) = (den / self.den, den / other.den);
        let num: SmallVec<[i128; 2]> = self
            .num
            .iter()
            .zip(other.num.iter())
            .map(|(&x, &y)| x * a + y * b)
            .collect();
        let mut v = LambdaValue { num, den };
        v.reduce();
        v
    }

    pub fn neg(&self) -> Self {
        LambdaValue {
            num: self.num.iter().map(|&c| -c).collect(),
            den: self.den,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    /// Multiply by the rational a/b.
    pub fn scale(&self, a: i128, b: i128) -> Self {
        assert!(b != 0);
        let mut v = LambdaValue {
            num: self.num.iter().map(|&c| c * a).collect(),
            den: self.den * b,
        };
        v.reduce();
        v
    }

    pub fn add_int(&self, n: i128) -> Self {
        self.add(&LambdaValue::from_int(self.degree(), n))
    }

    fn approx_with(&self, powers: &[f64]) -> f64 {
        let mut s = 0.0;
        for (c, p) in self.num.iter().zip(powers) {
            s += *c as f64 * p;
        }
        s / self.den as f64
    }
}

/// λ values extended by ±∞, used for window bounds.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum LambdaBound {
    NegInf,
    Finite(LambdaValue),
    PosInf,
}

impl LambdaBound {
    pub fn is_finite(&self) -> bool {
        matches!(self, LambdaBound::Finite(_))
    }

    pub fn finite(&self) -> Option<&LambdaValue> {
        match self {
            LambdaBound::Finite(v) => Some(v),
            _ => None,
        }
    }

    /// Sum with a finite value (infinities absorb).
    pub fn offset(&self, by: &LambdaValue) -> LambdaBound {
        match self {
            LambdaBound::Finite(v) => LambdaBound::Finite(v.add(by)),
            other => other.clone(),
        }
    }

    /// Multiply by a positive rational a/b.
    pub fn scale(&self, a: i128, b: i128) -> LambdaBound {
        assert!(a > 0 && b > 0);
        match self {
            LambdaBound::Finite(v) => LambdaBound::Finite(v.scale(a, b)),
            other => other.clone(),
        }
    }
}

fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn parse_rational(s: &str) -> Result<BigRational> {
    let s = s.trim();
    let bad = || Error::Parse(format!("bad rational `{s}`"));
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| bad())?;
        let d: BigInt = d.trim().parse().map_err(|_| bad())?;
        if d.is_zero() {
            return Err(bad());
        }
        Ok(BigRational::new(n, d))
    } else {
        let n: BigInt = s.parse().map_err(|_| bad())?;
        Ok(BigRational::from_integer(n))
    }
}

pub fn parse_rational_str(s: &str) -> Result<BigRational> {
    parse_rational(s)
}

/// Integer polynomial helpers over Q, lowest degree first.
mod qpoly {
    use num_rational::BigRational;
    use num_traits::{Signed, Zero};

    pub fn trim(v: &mut Vec<BigRational>) {
        while v.last().is_some_and(|c| c.is_zero()) {
            v.pop();
        }
    }

    pub fn eval(p: &[BigRational], x: &BigRational) -> BigRational {
        let mut acc = BigRational::zero();
        for c in p.iter().rev() {
            acc = acc * x + c;
        }
        acc
    }

    pub fn rem(a: &[BigRational], b: &[BigRational]) -> Vec<BigRational> {
        let mut r = a.to_vec();
        trim(&mut r);
        let lead = b.last().expect("nonzero divisor").clone();
        while r.len() >= b.len() && !r.is_empty() {
            let shift = r.len() - b.len();
            let c = r.last().unwrap().clone() / &lead;
            for (i, bi) in b.iter().enumerate() {
                r[shift + i] = &r[shift + i] - &c * bi;
            }
            r.pop();
            trim(&mut r);
        }
        r
    }

    pub fn gcd(a: &[BigRational], b: &[BigRational]) -> Vec<BigRational> {
        let mut x = a.to_vec();
        let mut y = b.to_vec();
        trim(&mut x);
        trim(&mut y);
        while !y.is_empty() {
            let r = rem(&x, &y);
            x = y;
            y = r;
        }
        x
    }

    pub fn derivative(p: &[BigRational]) -> Vec<BigRational> {
        p.iter()
            .enumerate()
            .skip(1)
            .map(|(i, c)| c * BigRational::from_integer((i as i64).into()))
            .collect()
    }

    fn sign_changes(seq: &[Vec<BigRational>], x: &BigRational) -> usize {
        let mut last = 0i32;
        let mut count = 0;
        for p in seq {
            let v = eval(p, x);
            let s = if v.is_positive() {
                1
            } else if v.is_negative() {
                -1
            } else {
                0
            };
            if s != 0 {
                if last != 0 && s != last {
                    count += 1;
                }
                last = s;
            }
        }
        count
    }

    /// Number of distinct real roots in the half-open interval (lo, hi].
    pub fn sturm_count(p: &[BigRational], lo: &BigRational, hi: &BigRational) -> usize {
        let mut p = p.to_vec();
        trim(&mut p);
        if p.len() <= 1 {
            return 0;
        }
        let mut seq = vec![p.clone(), derivative(&p)];
        loop {
            let n = seq.len();
            let r = rem(&seq[n - 2], &seq[n - 1]);
            if r.is_empty() {
                break;
            }
            seq.push(r.into_iter().map(|c| -c).collect());
        }
        let a = sign_changes(&seq, lo);
        let b = sign_changes(&seq, hi);
        a.saturating_sub(b)
    }
}

/// A real algebraic number given by an integer minimal polynomial and a
/// rational isolating interval.
#[derive(Debug)]
pub struct AlgebraicReal {
    minpoly: Vec<BigInt>,
    interval: (BigRational, BigRational),
    powers: Vec<f64>,
    refined: Mutex<(BigRational, BigRational)>,
}

impl Clone for AlgebraicReal {
    fn clone(&self) -> Self {
        AlgebraicReal {
            minpoly: self.minpoly.clone(),
            interval: self.interval.clone(),
            powers: self.powers.clone(),
            refined: Mutex::new(self.refined.lock().expect("cache").clone()),
        }
    }
}

impl AlgebraicReal {
    pub fn new(minpoly: Vec<i64>, lo: &str, hi: &str) -> Result<Self> {
        let minpoly: Vec<BigInt> = minpoly.into_iter().map(BigInt::from).collect();
        Self::from_big(minpoly, parse_rational(lo)?, parse_rational(hi)?)
    }

    pub fn from_big(minpoly: Vec<BigInt>, lo: BigRational, hi: BigRational) -> Result<Self> {
        let mut qp: Vec<BigRational> = minpoly
            .iter()
            .cloned()
            .map(BigRational::from_integer)
            .collect();
        qpoly::trim(&mut qp);
        if qp.len() < 2 {
            return Err(Error::InvalidParams(
                "minimal polynomial must have degree >= 1".into(),
            ));
        }
        if qp.len() != minpoly.len() {
            return Err(Error::InvalidParams(
                "leading coefficient must be nonzero".into(),
            ));
        }
        if lo >= hi {
            return Err(Error::InvalidParams("empty isolating interval".into()));
        }
        let mut count = qpoly::sturm_count(&qp, &lo, &hi);
        if qpoly::eval(&qp, &lo).is_zero() {
            count += 1;
        }
        if count != 1 {
            return Err(Error::InvalidParams(format!(
                "interval contains {count} roots of the minimal polynomial, expected 1"
            )));
        }
        if qpoly::eval(&qp, &lo).is_zero() || qpoly::eval(&qp, &hi).is_zero() {
            return Err(Error::InvalidParams(
                "root at an interval endpoint; α is rational".into(),
            ));
        }
        let mut a = AlgebraicReal {
            minpoly,
            interval: (lo.clone(), hi.clone()),
            powers: Vec::new(),
            refined: Mutex::new((lo, hi)),
        };
        let approx = a.approximate(1e-18);
        let d = a.degree();
        a.powers = (0..d).map(|k| approx.powi(k as i32)).collect();
        Ok(a)
    }

    /// sqrt(n) for a positive non-square n.
    pub fn sqrt(n: i64) -> Result<Self> {
        let r = (n as f64).sqrt().floor() as i64;
        if r * r == n || n <= 0 {
            return Err(Error::InvalidParams(format!(
                "{n} is not a positive non-square"
            )));
        }
        Self::from_big(
            vec![BigInt::from(-n), BigInt::zero(), BigInt::one()],
            rat(r, 1),
            rat(r + 1, 1),
        )
    }

    pub fn degree(&self) -> usize {
        self.minpoly.len() - 1
    }

    pub fn minpoly(&self) -> &[BigInt] {
        &self.minpoly
    }

    pub fn interval(&self) -> &(BigRational, BigRational) {
        &self.interval
    }

    fn qpoly(&self) -> Vec<BigRational> {
        self.minpoly
            .iter()
            .cloned()
            .map(BigRational::from_integer)
            .collect()
    }

    /// Bisect the cached interval once.
    fn bisect(&self) {
        let p = self.qpoly();
        let mut guard = self.refined.lock().expect("cache");
        let (lo, hi) = guard.clone();
        let mid = (&lo + &hi) / rat(2, 1);
        let pm = qpoly::eval(&p, &mid);
        if pm.is_zero() {
            *guard = (mid.clone(), mid);
            return;
        }
        let plo = qpoly::eval(&p, &lo);
        if plo.is_positive() == pm.is_positive() {
            *guard = (mid, hi);
        } else {
            *guard = (lo, mid);
        }
    }

    fn current(&self) -> (BigRational, BigRational) {
        self.refined.lock().expect("cache").clone()
    }

    /// Midpoint approximation after refining to relative width `tol`.
    pub fn approximate(&self, tol: f64) -> f64 {
        loop {
            let (lo, hi) = self.current();
            let width = (&hi - &lo).to_f64().unwrap_or(f64::INFINITY);
            let scale = lo.abs().to_f64().unwrap_or(1.0).max(1.0);
            if width <= tol * scale {
                return ((lo + hi) / rat(2, 1)).to_f64().unwrap_or(f64::NAN);
            }
            self.bisect();
        }
    }

    /// Exact sign of `Σ num[k] α^k`.
    pub fn sign_of(&self, num: &[i128]) -> Ordering {
        if num.iter().all(|&c| c == 0) {
            return Ordering::Equal;
        }
        // floating fast path with a generous error margin
        let big = self.powers.get(1).map_or(1.0, |a| a.abs().max(1.0));
        let mut v = 0.0f64;
        let mut scale = 0.0f64;
        for (k, &c) in num.iter().enumerate() {
            v += c as f64 * self.powers[k];
            scale += (c as f64).abs() * big.powi(k as i32);
        }
        if v.abs() > 1e-9 * scale {
            return if v > 0.0 {
                Ordering::Greater
            } else {
                Ordering::Less
            };
        }
        self.exact_sign(num)
    }

    fn exact_sign(&self, num: &[i128]) -> Ordering {
        let g: Vec<BigRational> = num
            .iter()
            .map(|&c| BigRational::from_integer(BigInt::from(c)))
            .collect();
        let p = self.qpoly();
        let common = qpoly::gcd(&p, &g);
        if common.len() >= 2 {
            let (lo, hi) = self.interval.clone();
            let mut n = qpoly::sturm_count(&common, &lo, &hi);
            if qpoly::eval(&common, &lo).is_zero() {
                n += 1;
            }
            if n > 0 {
                return Ordering::Equal;
            }
        }
        loop {
            let (lo, hi) = self.current();
            if lo == hi {
                let v = qpoly::eval(&g, &lo);
                return v.cmp(&BigRational::zero());
            }
            let (a, b) = interval_eval(&g, &lo, &hi);
            if a.is_positive() {
                return Ordering::Greater;
            }
            if b.is_negative() {
                return Ordering::Less;
            }
            self.bisect();
        }
    }
}

/// Enclosure of the polynomial's range on [lo, hi] by interval Horner.
fn interval_eval(
    g: &[BigRational],
    lo: &BigRational,
    hi: &BigRational,
) -> (BigRational, BigRational) {
    let mut a = BigRational::zero();
    let mut b = BigRational::zero();
    for c in g.iter().rev() {
        let cands = [&a * lo, &a * hi, &b * lo, &b * hi];
        let mut mn = cands[0].clone();
        let mut mx = cands[0].clone();
        for x in &cands[1..] {
            if *x < mn {
                mn = x.clone();
            }
            if *x > mx {
                mx = x.clone();
            }
        }
        a = mn + c;
        b = mx + c;
    }
    (a, b)
}

/// Which sublattice predicate to test.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Sublattice {
    /// all coordinates divisible by q^j
    QPowerMultiple { q: u64, j: u32 },
    /// μ(z) ≡ 0 mod p
    Kernel { mu: Vec<i64>, p: u64 },
    /// λ(z) ≥ 0
    Nonnegative,
}

/// A lattice `Z^m` with an irrational functional λ valued in Q(α).
#[derive(Debug, Clone)]
pub struct MonomialValuation {
    m: usize,
    alpha: Option<AlgebraicReal>,
    weights: Vec<LambdaValue>,
    weight_approx: Vec<f64>,
}

impl MonomialValuation {
    /// The true-annulus case: m = 1, α absent, λ(z) = z.
    pub fn rank_one() -> Self {
        MonomialValuation {
            m: 1,
            alpha: None,
            weights: vec![LambdaValue::from_int(1, 1)],
            weight_approx: vec![1.0],
        }
    }

    /// λ(z_i) given as coordinate vectors in the power basis of Q(α).
    pub fn new(alpha: Option<AlgebraicReal>, weights: Vec<Vec<BigRational>>) -> Result<Self> {
        let degree = alpha.as_ref().map_or(1, |a| a.degree());
        let m = weights.len();
        if m == 0 {
            return Err(Error::InvalidParams("lattice rank must be positive".into()));
        }
        for w in &weights {
            if w.len() > degree {
                return Err(Error::InvalidParams(
                    "weight has more coordinates than [Q(α):Q]".into(),
                ));
            }
        }
        let padded: Vec<Vec<BigRational>> = weights
            .into_iter()
            .map(|mut w| {
                w.resize(degree, BigRational::zero());
                w
            })
            .collect();
        if rational_rank(&padded) != m {
            return Err(Error::InvalidParams(
                "weights are linearly dependent over Q; λ is not irrational".into(),
            ));
        }
        let weights: Vec<LambdaValue> = padded
            .iter()
            .map(|w| LambdaValue::from_rationals(w))
            .collect::<Result<_>>()?;
        let mut v = MonomialValuation {
            m,
            alpha,
            weights,
            weight_approx: Vec::new(),
        };
        v.weight_approx = v.weights.iter().map(|w| v.approx(w)).collect();
        Ok(v)
    }

    /// Stock family λ(z) = Σ z_i α^{i-1}; independence holds when deg α ≥ m.
    pub fn power_weights(alpha: AlgebraicReal, m: usize) -> Result<Self> {
        let d = alpha.degree();
        if d < m {
            return Err(Error::InvalidParams(format!("deg α = {d} < m = {m}")));
        }
        let weights = (0..m)
            .map(|i| {
                let mut w = vec![BigRational::zero(); d];
                w[i] = BigRational::one();
                w
            })
            .collect();
        Self::new(Some(alpha), weights)
    }

    /// λ = (1, √2) on Z^2.
    pub fn sqrt2_plane() -> Self {
        Self::power_weights(AlgebraicReal::sqrt(2).expect("sqrt 2"), 2).expect("independent")
    }

    /// The valuation λ·(a/b) on the same lattice (a/b > 0); used for the
    /// finite perfection levels (1/q^s)L read in scaled coordinates.
    pub fn scaled(&self, a: i128, b: i128) -> Self {
        assert!(a > 0 && b > 0);
        let weights: Vec<LambdaValue> = self.weights.iter().map(|w| w.scale(a, b)).collect();
        let mut v = MonomialValuation {
            m: self.m,
            alpha: self.alpha.clone(),
            weights,
            weight_approx: Vec::new(),
        };
        v.weight_approx = v.weights.iter().map(|w| v.approx(w)).collect();
        v
    }

    pub fn rank(&self) -> usize {
        self.m
    }

    pub fn field_degree(&self) -> usize {
        self.alpha.as_ref().map_or(1, |a| a.degree())
    }

    pub fn alpha(&self) -> Option<&AlgebraicReal> {
        self.alpha.as_ref()
    }

    pub fn weights(&self) -> &[LambdaValue] {
        &self.weights
    }

    pub fn zero_value(&self) -> LambdaValue {
        LambdaValue::zero(self.field_degree())
    }

    pub fn int_value(&self, n: i128) -> LambdaValue {
        LambdaValue::from_int(self.field_degree(), n)
    }

    pub fn lambda(&self, z: &[i64]) -> LambdaValue {
        assert_eq!(z.len(), self.m, "lattice point has wrong rank");
        let mut acc = self.zero_value();
        for (zi, w) in z.iter().zip(&self.weights) {
            if *zi != 0 {
                acc = acc.add(&w.scale(*zi as i128, 1));
            }
        }
        acc
    }

    pub fn lambda_approx(&self, z: &[i64]) -> f64 {
        z.iter()
            .zip(&self.weight_approx)
            .map(|(&a, &w)| a as f64 * w)
            .sum()
    }

    pub fn approx(&self, x: &LambdaValue) -> f64 {
        match &self.alpha {
            None => x.num[0] as f64 / x.den as f64,
            Some(a) => x.approx_with(&a.powers),
        }
    }

    pub fn sign(&self, x: &LambdaValue) -> Ordering {
        match &self.alpha {
            None => x.num[0].cmp(&0),
            Some(a) => a.sign_of(&x.num),
        }
    }

    pub fn compare(&self, a: &LambdaValue, b: &LambdaValue) -> Ordering {
        self.sign(&a.sub(b))
    }

    pub fn compare_bound(&self, a: &LambdaBound, b: &LambdaBound) -> Ordering {
        use LambdaBound::*;
        match (a, b) {
            (NegInf, NegInf) | (PosInf, PosInf) => Ordering::Equal,
            (NegInf, _) | (_, PosInf) => Ordering::Less,
            (_, NegInf) | (PosInf, _) => Ordering::Greater,
            (Finite(x), Finite(y)) => self.compare(x, y),
        }
    }

    pub fn min_bound(&self, a: &LambdaBound, b: &LambdaBound) -> LambdaBound {
        if self.compare_bound(a, b) == Ordering::Greater {
            b.clone()
        } else {
            a.clone()
        }
    }

    pub fn max_bound(&self, a: &LambdaBound, b: &LambdaBound) -> LambdaBound {
        if self.compare_bound(a, b) == Ordering::Less {
            b.clone()
        } else {
            a.clone()
        }
    }

    /// Compare λ(z) against a bound, using the float fast path when decisive.
    pub fn compare_point_bound(&self, z: &[i64], bound: &LambdaBound) -> Ordering {
        match bound {
            LambdaBound::NegInf => Ordering::Greater,
            LambdaBound::PosInf => Ordering::Less,
            LambdaBound::Finite(b) => {
                let x = self.lambda_approx(z);
                let y = self.approx(b);
                let scale = 1.0 + x.abs() + y.abs();
                if (x - y).abs() > 1e-9 * scale {
                    if x < y {
                        Ordering::Less
                    } else {
                        Ordering::Greater
                    }
                } else {
                    self.compare(&self.lambda(z), b)
                }
            }
        }
    }

    /// Exact order on lattice points by λ (a total order since λ is injective).
    pub fn compare_points(&self, a: &[i64], b: &[i64]) -> Ordering {
        let x = self.lambda_approx(a);
        let y = self.lambda_approx(b);
        let scale = 1.0 + x.abs() + y.abs();
        if (x - y).abs() > 1e-9 * scale {
            return x.partial_cmp(&y).expect("finite");
        }
        self.compare(&self.lambda(a), &self.lambda(b))
    }

    /// μ_i(z), the i-th dual-basis coordinate.
    pub fn dual(&self, i: usize, z: &[i64]) -> i64 {
        z[i]
    }

    pub fn pair(&self, mu: &[i64], z: &[i64]) -> i64 {
        mu.iter().zip(z).map(|(a, b)| a * b).sum()
    }

    pub fn sublattice_test(&self, z: &[i64], kind: &Sublattice) -> bool {
        match kind {
            Sublattice::QPowerMultiple { q, j } => {
                let d = (*q as i128).pow(*j);
                z.iter().all(|&c| (c as i128) % d == 0)
            }
            Sublattice::Kernel { mu, p } => self.pair(mu, z).rem_euclid(*p as i64) == 0,
            Sublattice::Nonnegative => self.sign(&self.lambda(z)) != Ordering::Less,
        }
    }

    pub fn in_qj_lattice(&self, z: &[i64], q: u64, j: u32) -> bool {
        self.sublattice_test(z, &Sublattice::QPowerMultiple { q, j })
    }

    pub fn in_kernel_mod_p(&self, z: &[i64], mu: &[i64], p: u64) -> bool {
        self.sublattice_test(z, &Sublattice::Kernel { mu: mu.to_vec(), p })
    }

    pub fn in_positive_cone(&self, z: &[i64]) -> bool {
        self.sublattice_test(z, &Sublattice::Nonnegative)
    }

    /// Text form `c_0 + c_1*alpha + ...` with rational coefficients.
    pub fn format_value(&self, x: &LambdaValue) -> String {
        let mut out = String::new();
        for (k, c) in x.coords().iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let a = c.abs();
            let cs = if a.is_integer() {
                a.numer().to_string()
            } else {
                format!("{}/{}", a.numer(), a.denom())
            };
            let body = match k {
                0 => cs,
                1 => format!("{cs}*alpha"),
                _ => format!("{cs}*alpha^{k}"),
            };
            if out.is_empty() {
                if c.is_negative() {
                    out.push('-');
                }
            } else {
                out.push_str(if c.is_negative() { " - " } else { " + " });
            }
            out.push_str(&body);
        }
        if out.is_empty() {
            "0".into()
        } else {
            out
        }
    }

    pub fn format_bound(&self, b: &LambdaBound) -> String {
        match b {
            LambdaBound::NegInf => "-inf".into(),
            LambdaBound::PosInf => "inf".into(),
            LambdaBound::Finite(x) => self.format_value(x),
        }
    }

    /// Parse `c_0 + c_1*alpha + c_2*alpha^2`, `inf` or `-inf`.
    pub fn parse_bound(&self, s: &str) -> Result<LambdaBound> {
        let t = s.trim();
        match t {
            "inf" | "+inf" => return Ok(LambdaBound::PosInf),
            "-inf" => return Ok(LambdaBound::NegInf),
            _ => {}
        }
        Ok(LambdaBound::Finite(self.parse_value(t)?))
    }

    pub fn parse_value(&self, s: &str) -> Result<LambdaValue> {
        let d = self.field_degree();
        let mut coords = vec![BigRational::zero(); d];
        let cleaned = s.replace(' ', "");
        if cleaned.is_empty() {
            return Err(Error::Parse("empty lambda expression".into()));
        }
        let mut terms = Vec::new();
        let mut cur = String::new();
        for (i, ch) in cleaned.chars().enumerate() {
            if (ch == '+' || ch == '-') && i > 0 && !cur.ends_with('^') && !cur.ends_with('*') {
                if cur == "+" {
                    cur.clear();
                } else {
                    terms.push(std::mem::take(&mut cur));
                }
            }
            cur.push(ch);
        }
        terms.push(cur);
        for term in terms {
            let term = term.trim_start_matches('+');
            let (coef, power) = if let Some(idx) = term.find("alpha") {
                let head = term[..idx].trim_end_matches('*');
                let tail = &term[idx + 5..];
                let power: usize = if let Some(e) = tail.strip_prefix('^') {
                    e.parse()
                        .map_err(|_| Error::Parse(format!("bad exponent in `{term}`")))?
                } else if tail.is_empty() {
                    1
                } else {
                    return Err(Error::Parse(format!("bad term `{term}`")));
                };
                let coef = match head {
                    "" => BigRational::one(),
                    "-" => -BigRational::one(),
                    h => parse_rational(h)?,
                };
                (coef, power)
            } else {
                (parse_rational(term)?, 0)
            };
            if power >= d {
                return Err(Error::Parse(format!("power α^{power} outside the basis")));
            }
            coords[power] += coef;
        }
        LambdaValue::from_rationals(&coords)
    }
}

fn rational_rank(rows: &[Vec<BigRational>]) -> usize {
    let mut m: Vec<Vec<BigRational>> = rows.to_vec();
    let ncols = m.first().map_or(0, |r| r.len());
    let mut rank = 0;
    for col in 0..ncols {
        let Some(piv) = (rank..m.len()).find(|&r| !m[r][col].is_zero()) else {
            continue;
        };
        m.swap(rank, piv);
        for r in 0..m.len() {
            if r != rank && !m[r][col].is_zero() {
                let factor = &m[r][col] / &m[rank][col];
                for c in col..ncols {
                    let sub = &factor * &m[rank][c];
                    m[r][c] -= sub;
                }
            }
        }
        rank += 1;
    }
    rank
}

impl fmt::Display for LambdaValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.num.iter().map(|c| c.to_string()).collect();
        write!(f, "[{}]/{}", parts.join(","), self.den)
    }
}

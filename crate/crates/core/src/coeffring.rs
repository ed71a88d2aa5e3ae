//! Truncated arithmetic in the unramified extension `Z_q` of the p-adic integers.
//!
//! Elements are stored as `p^val * unit` where the unit is a coordinate
//! vector in the basis `1, a, ..., a^{f-1}` (with `a` a root of the monic
//! modulus polynomial), known modulo `p^(prec - val)`.  Precision is
//! absolute and propagated pessimistically.

use std::fmt::Write as _;
use std::sync::Arc;

use smallvec::{smallvec, SmallVec};

use crate::error::{Error, Result};

pub type Digits = SmallVec<[u64; 2]>;

#[inline]
fn mulmod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

#[inline]
fn addmod(a: u64, b: u64, m: u64) -> u64 {
    let s = a + b;
    if s >= m {
        s - m
    } else {
        s
    }
}

#[inline]
fn submod(a: u64, b: u64, m: u64) -> u64 {
    if a >= b {
        a - b
    } else {
        a + m - b
    }
}

fn reduce_i128(x: i128, m: u64) -> u64 {
    x.rem_euclid(m as i128) as u64
}

pub(crate) fn inv_mod(a: u64, m: u64) -> Option<u64> {
    let (mut r0, mut r1) = (m as i128, (a % m) as i128);
    let (mut t0, mut t1) = (0i128, 1i128);
    while r1 != 0 {
        let q = r0 / r1;
        (r0, r1) = (r1, r0 - q * r1);
        (t0, t1) = (t1, t0 - q * t1);
    }
    if r0 != 1 {
        return None;
    }
    Some(reduce_i128(t0, m))
}

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2u64;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

/// p-adic valuation of a nonzero integer.
pub fn vp_int(mut n: i128, p: u64) -> u32 {
    assert!(n != 0);
    let p = p as i128;
    let mut v = 0;
    while n % p == 0 {
        n /= p;
        v += 1;
    }
    v
}

/// Dense polynomials over F_p, lowest degree first.
pub(crate) mod fp_poly {
    use super::{addmod, inv_mod, mulmod, submod};

    pub fn trim(v: &mut Vec<u64>) {
        while v.last() == Some(&0) {
            v.pop();
        }
    }

    pub fn sub(a: &[u64], b: &[u64], p: u64) -> Vec<u64> {
        let n = a.len().max(b.len());
        let mut out: Vec<u64> = (0..n)
            .map(|i| submod(*a.get(i).unwrap_or(&0), *b.get(i).unwrap_or(&0), p))
            .collect();
        trim(&mut out);
        out
    }

    pub fn mul(a: &[u64], b: &[u64], p: u64) -> Vec<u64> {
        if a.is_empty() || b.is_empty() {
            return Vec::new();
        }
        let mut out = vec![0u64; a.len() + b.len() - 1];
        for (i, &x) in a.iter().enumerate() {
            if x == 0 {
                continue;
            }
            for (j, &y) in b.iter().enumerate() {
                out[i + j] = addmod(out[i + j], mulmod(x, y, p), p);
            }
        }
        trim(&mut out);
        out
    }

    pub fn divrem(a: &[u64], b: &[u64], p: u64) -> (Vec<u64>, Vec<u64>) {
        let mut r = a.to_vec();
        trim(&mut r);
        let mut b = b.to_vec();
        trim(&mut b);
        assert!(!b.is_empty(), "division by zero polynomial");
        let lead_inv = inv_mod(*b.last().unwrap(), p).expect("field");
        if r.len() < b.len() {
            return (Vec::new(), r);
        }
        let mut q = vec![0u64; r.len() - b.len() + 1];
        while r.len() >= b.len() && !r.is_empty() {
            let shift = r.len() - b.len();
            let c = mulmod(*r.last().unwrap(), lead_inv, p);
            q[shift] = c;
            for (i, &bi) in b.iter().enumerate() {
                r[shift + i] = submod(r[shift + i], mulmod(c, bi, p), p);
            }
            trim(&mut r);
        }
        trim(&mut q);
        (q, r)
    }

    pub fn rem(a: &[u64], b: &[u64], p: u64) -> Vec<u64> {
        divrem(a, b, p).1
    }

    pub fn mulmod_poly(a: &[u64], b: &[u64], m: &[u64], p: u64) -> Vec<u64> {
        rem(&mul(a, b, p), m, p)
    }

    pub fn pow_mod(base: &[u64], mut e: u128, m: &[u64], p: u64) -> Vec<u64> {
        let mut result = vec![1u64];
        let mut b = rem(base, m, p);
        while e > 0 {
            if e & 1 == 1 {
                result = mulmod_poly(&result, &b, m, p);
            }
            b = mulmod_poly(&b, &b, m, p);
            e >>= 1;
        }
        rem(&result, m, p)
    }

    pub fn gcd(a: &[u64], b: &[u64], p: u64) -> Vec<u64> {
        let mut x = a.to_vec();
        let mut y = b.to_vec();
        trim(&mut x);
        trim(&mut y);
        while !y.is_empty() {
            let r = rem(&x, &y, p);
            x = y;
            y = r;
        }
        if let Some(&l) = x.last() {
            let li = inv_mod(l, p).expect("field");
            for c in x.iter_mut() {
                *c = mulmod(*c, li, p);
            }
        }
        x
    }

    /// Inverse of `a` modulo the irreducible `m`.
    pub fn inv_mod_poly(a: &[u64], m: &[u64], p: u64) -> Option<Vec<u64>> {
        let mut r0 = m.to_vec();
        let mut r1 = rem(a, m, p);
        let mut s0: Vec<u64> = Vec::new();
        let mut s1: Vec<u64> = vec![1];
        trim(&mut r0);
        if r1.is_empty() {
            return None;
        }
        while !r1.is_empty() {
            let (q, r) = divrem(&r0, &r1, p);
            let s2 = sub(&s0, &mul(&q, &s1, p), p);
            r0 = r1;
            r1 = r;
            s0 = s1;
            s1 = s2;
        }
        if r0.len() != 1 {
            return None;
        }
        let c = inv_mod(r0[0], p)?;
        Some(s0.iter().map(|&x| mulmod(x, c, p)).collect())
    }

    /// Rabin-style test: `m` monic of degree f is irreducible iff
    /// gcd(m, x^{p^i} - x) = 1 for i <= f/2.
    pub fn is_irreducible(m: &[u64], p: u64) -> bool {
        let mut m = m.to_vec();
        trim(&mut m);
        let f = m.len().saturating_sub(1);
        if f == 0 {
            return false;
        }
        if f == 1 {
            return true;
        }
        let x = vec![0u64, 1];
        let mut xp = x.clone();
        for _ in 1..=f / 2 {
            xp = pow_mod(&xp, p as u128, &m, p);
            let g = gcd(&m, &sub(&xp, &x, p), p);
            if g.len() > 1 {
                return false;
            }
        }
        true
    }

    /// Lexicographically first monic irreducible polynomial of degree f.
    pub fn first_irreducible(f: usize, p: u64) -> Vec<u64> {
        if f == 1 {
            return vec![0, 1];
        }
        let total = (p as u128).pow(f as u32);
        for idx in 0..total {
            let mut coeffs = Vec::with_capacity(f + 1);
            let mut t = idx;
            for _ in 0..f {
                coeffs.push((t % p as u128) as u64);
                t /= p as u128;
            }
            coeffs.push(1);
            if coeffs[0] != 0 && is_irreducible(&coeffs, p) {
                return coeffs;
            }
        }
        unreachable!("irreducible polynomials exist in every degree")
    }
}

/// Parameters of the coefficient ring.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoeffRingParams {
    pub p: u64,
    /// Monic modulus, lowest degree first; its degree is the residue degree f.
    pub modulus: Vec<i64>,
    /// Default working precision N.
    pub prec: i32,
    /// sigma_K is the lift of x -> x^(p^frobenius_power); `None` means p^f.
    pub frobenius_power: Option<u32>,
}

impl CoeffRingParams {
    pub fn prime_field(p: u64, prec: i32) -> Self {
        CoeffRingParams {
            p,
            modulus: vec![0, 1],
            prec,
            frobenius_power: None,
        }
    }

    /// Degree-f extension with the first irreducible modulus found.
    pub fn unramified(p: u64, f: usize, prec: i32) -> Self {
        let m = fp_poly::first_irreducible(f, p);
        CoeffRingParams {
            p,
            modulus: m.iter().map(|&c| c as i64).collect(),
            prec,
            frobenius_power: None,
        }
    }

    pub fn degree(&self) -> usize {
        self.modulus.len().saturating_sub(1)
    }
}

/// An element `p^val * unit` known modulo `p^prec`.
///
/// Zero at precision `prec` is represented with `val == prec`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Padic {
    val: i32,
    prec: i32,
    unit: Digits,
}

impl Padic {
    pub fn is_zero(&self) -> bool {
        self.val >= self.prec
    }

    /// w(x); `None` for zero at current precision.
    pub fn valuation(&self) -> Option<i32> {
        if self.is_zero() {
            None
        } else {
            Some(self.val)
        }
    }

    /// Lower bound for w(x): the valuation, or the precision for zero.
    pub fn val_bound(&self) -> i32 {
        self.val
    }

    pub fn prec(&self) -> i32 {
        self.prec
    }

    pub fn rel_prec(&self) -> i32 {
        self.prec - self.val
    }

    /// Unit coordinates modulo `p^rel_prec`.
    pub fn unit(&self) -> &[u64] {
        &self.unit
    }
}

/// Ring map `Z_q -> Z_{q^s}` sending the generator to a root of its modulus.
#[derive(Clone, Debug)]
pub struct RingEmbedding {
    source: Arc<CoeffRing>,
    target: Arc<CoeffRing>,
    gen_image: Padic,
}

impl RingEmbedding {
    pub fn source(&self) -> &Arc<CoeffRing> {
        &self.source
    }

    pub fn target(&self) -> &Arc<CoeffRing> {
        &self.target
    }

    pub fn apply(&self, x: &Padic) -> Padic {
        let t = &self.target;
        if x.is_zero() {
            return t.zero(x.prec);
        }
        let rel = x.rel_prec();
        let mut acc = t.zero(rel);
        let mut power = t.one(rel);
        for (i, &c) in x.unit.iter().enumerate() {
            if c != 0 {
                acc = t.add(&acc, &t.mul_int(&power, c as i64));
            }
            if i + 1 < x.unit.len() {
                power = t.truncate(&t.mul(&power, &self.gen_image), rel);
            }
        }
        t.shift(&t.truncate(&acc, rel), x.val)
    }
}

/// The ring `Z_q` truncated at a per-value precision, with its Frobenius.
#[derive(Debug)]
pub struct CoeffRing {
    p: u64,
    degree: usize,
    frob_power: u32,
    modulus: Vec<u64>,
    modulus_input: Vec<i64>,
    cap: i32,
    pows: Vec<u64>,
    prec: i32,
    /// `phi[j][i]` holds the coordinates of phi^j(a^i) modulo p^cap, where phi
    /// is the lift of the absolute p-power Frobenius.
    phi: Vec<Vec<Digits>>,
}

impl CoeffRing {
    pub fn new(params: CoeffRingParams) -> Result<Arc<CoeffRing>> {
        let p = params.p;
        if !is_prime(p) {
            return Err(Error::InvalidParams(format!("{p} is not prime")));
        }
        let f = params.degree();
        if f == 0 || params.modulus.last() != Some(&1) {
            return Err(Error::InvalidParams(
                "modulus must be monic of positive degree".into(),
            ));
        }
        let mut cap = 0i32;
        let mut pw: u128 = 1;
        let mut pows = vec![1u64];
        while pw * (p as u128) < (1u128 << 62) {
            pw *= p as u128;
            cap += 1;
            pows.push(pw as u64);
        }
        if params.prec < 1 || params.prec > cap {
            return Err(Error::InvalidParams(format!(
                "precision {} outside 1..={cap} supported for p={p}",
                params.prec
            )));
        }
        let big = pows[cap as usize];
        let modulus: Vec<u64> = params
            .modulus
            .iter()
            .map(|&c| reduce_i128(c as i128, big))
            .collect();
        let m_bar: Vec<u64> = modulus.iter().map(|&c| c % p).collect();
        if !fp_poly::is_irreducible(&m_bar, p) {
            return Err(Error::InvalidParams(
                "modulus is not irreducible mod p".into(),
            ));
        }
        let frob_power = params.frobenius_power.unwrap_or(f as u32);
        if frob_power == 0 {
            return Err(Error::InvalidParams(
                "frobenius power must be positive".into(),
            ));
        }
        if (p as f64).powi(frob_power as i32) > 1e15 {
            return Err(Error::InvalidParams(
                "q = p^frobenius_power too large".into(),
            ));
        }
        let mut ring = CoeffRing {
            p,
            degree: f,
            frob_power,
            modulus,
            modulus_input: params.modulus.clone(),
            cap,
            pows,
            prec: params.prec,
            phi: Vec::new(),
        };
        ring.phi = ring.compute_frobenius_table();
        Ok(Arc::new(ring))
    }

    pub fn prime_field(p: u64, prec: i32) -> Result<Arc<CoeffRing>> {
        CoeffRing::new(CoeffRingParams::prime_field(p, prec))
    }

    pub fn params(&self) -> CoeffRingParams {
        CoeffRingParams {
            p: self.p,
            modulus: self.modulus_input.clone(),
            prec: self.prec,
            frobenius_power: Some(self.frob_power),
        }
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    /// Residue degree f.
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn frobenius_power(&self) -> u32 {
        self.frob_power
    }

    /// q = p^frobenius_power.
    pub fn q(&self) -> u64 {
        self.p.pow(self.frob_power)
    }

    /// Number of elements of the residue field, p^f.
    pub fn residue_size(&self) -> u128 {
        (self.p as u128).pow(self.degree as u32)
    }

    pub fn prec(&self) -> i32 {
        self.prec
    }

    /// Largest supported relative precision.
    pub fn cap(&self) -> i32 {
        self.cap
    }

    pub fn modulus(&self) -> &[i64] {
        &self.modulus_input
    }

    pub fn p_pow(&self, e: i32) -> u64 {
        self.pows[e as usize]
    }

    fn modulus_at(&self, r: i32) -> u64 {
        self.pows[r as usize]
    }

    // ---- construction -------------------------------------------------

    pub fn zero(&self, prec: i32) -> Padic {
        Padic {
            val: prec,
            prec,
            unit: smallvec![0; self.degree],
        }
    }

    pub fn one(&self, prec: i32) -> Padic {
        self.from_int(1, prec)
    }

    pub fn from_int(&self, n: i64, prec: i32) -> Padic {
        self.from_rational(n as i128, 1, prec).expect("integer")
    }

    /// num/den; fails when den = 0.
    pub fn from_rational(&self, num: i128, den: i128, prec: i32) -> Result<Padic> {
        if den == 0 {
            return Err(Error::Domain("zero denominator".into()));
        }
        if num == 0 {
            return Ok(self.zero(prec));
        }
        let vn = vp_int(num, self.p) as i32;
        let vd = vp_int(den, self.p) as i32;
        let val = vn - vd;
        if val >= prec {
            return Ok(self.zero(prec));
        }
        let prec = prec.min(val + self.cap);
        let rel = prec - val;
        let m = self.modulus_at(rel);
        let pn = (self.p as i128).pow(vn as u32);
        let pd = (self.p as i128).pow(vd as u32);
        let n = reduce_i128(num / pn, m);
        let d = reduce_i128(den / pd, m);
        let u = mulmod(n, inv_mod(d, m).expect("unit denominator"), m);
        let mut unit: Digits = smallvec![0; self.degree];
        unit[0] = u;
        Ok(Padic { val, prec, unit })
    }

    /// p^shift * (c_0 + c_1 a + ... ) at absolute precision `prec`.
    pub fn from_coords_shifted(&self, shift: i32, coords: &[i64], prec: i32) -> Padic {
        let rel = (prec - shift).min(self.cap);
        if rel <= 0 {
            return self.zero(prec);
        }
        let m = self.modulus_at(rel);
        let mut unit: Digits = smallvec![0; self.degree];
        for (i, &c) in coords.iter().enumerate() {
            if i < self.degree {
                unit[i] = reduce_i128(c as i128, m);
            } else {
                // reduce higher powers of a through the modulus
                let mut power: Digits = smallvec![0; self.degree];
                let extra = self.gen_power(i, rel);
                for k in 0..self.degree {
                    power[k] = mulmod(extra[k], reduce_i128(c as i128, m), m);
                }
                for k in 0..self.degree {
                    unit[k] = addmod(unit[k], power[k], m);
                }
            }
        }
        self.normalize(unit, rel, shift, shift + rel)
    }

    pub fn from_coords(&self, coords: &[i64], prec: i32) -> Padic {
        self.from_coords_shifted(0, coords, prec)
    }

    /// The class `a` of the modulus variable.
    pub fn gen(&self, prec: i32) -> Padic {
        if self.degree == 1 {
            return self.from_int(-self.modulus_input[0], prec);
        }
        self.from_coords(&[0, 1], prec)
    }

    fn gen_power(&self, i: usize, rel: i32) -> Digits {
        let mut x: Digits = smallvec![0; self.degree];
        let m = self.modulus_at(rel);
        if self.degree == 1 {
            let a = reduce_i128(-(self.modulus[0] as i128), m);
            let mut acc = 1u64 % m;
            for _ in 0..i {
                acc = mulmod(acc, a, m);
            }
            x[0] = acc;
            return x;
        }
        let mut g: Digits = smallvec![0; self.degree];
        g[1] = 1;
        x[0] = 1 % m;
        for _ in 0..i {
            x = self.unit_mul(&x, &g, rel);
        }
        x
    }

    /// Build `p^val * unit` from raw coordinates modulo p^rel, normalizing so the
    /// unit has a coordinate prime to p.
    fn normalize(&self, mut coords: Digits, rel: i32, val: i32, prec: i32) -> Padic {
        if rel <= 0 {
            return self.zero(prec);
        }
        let mut t = rel;
        for &c in coords.iter() {
            if c != 0 {
                let mut v = 0;
                let mut c = c;
                while c % self.p == 0 {
                    c /= self.p;
                    v += 1;
                }
                t = t.min(v);
            }
        }
        if t >= rel {
            return self.zero(prec);
        }
        let new_rel = rel - t;
        let m = self.modulus_at(new_rel);
        let d = self.pows[t as usize];
        for c in coords.iter_mut() {
            *c = (*c / d) % m;
        }
        Padic {
            val: val + t,
            prec,
            unit: coords,
        }
    }

    // ---- arithmetic ---------------------------------------------------

    fn unit_mul(&self, x: &[u64], y: &[u64], rel: i32) -> Digits {
        let m = self.modulus_at(rel);
        let f = self.degree;
        if f == 1 {
            return smallvec![mulmod(x[0] % m, y[0] % m, m)];
        }
        let mut prod = vec![0u64; 2 * f - 1];
        for i in 0..f {
            let xi = x[i] % m;
            if xi == 0 {
                continue;
            }
            for j in 0..f {
                prod[i + j] = addmod(prod[i + j], mulmod(xi, y[j] % m, m), m);
            }
        }
        for k in (f..2 * f - 1).rev() {
            let c = prod[k];
            if c == 0 {
                continue;
            }
            for i in 0..f {
                let mi = self.modulus[i] % m;
                prod[k - f + i] = submod(prod[k - f + i], mulmod(c, mi, m), m);
            }
        }
        prod.truncate(f);
        prod.into_iter().collect()
    }

    fn scaled_unit(&self, x: &Padic, shift: i32, rel: i32) -> Digits {
        let m = self.modulus_at(rel);
        if shift >= rel {
            return smallvec![0; self.degree];
        }
        let s = self.pows[shift as usize];
        x.unit.iter().map(|&c| mulmod(c % m, s, m)).collect()
    }

    pub fn add(&self, x: &Padic, y: &Padic) -> Padic {
        let prec = x.prec.min(y.prec);
        let vmin = x.val.min(y.val);
        if vmin >= prec {
            return self.zero(prec);
        }
        let rel = prec - vmin;
        let m = self.modulus_at(rel);
        let a = self.scaled_unit(x, x.val - vmin, rel);
        let b = self.scaled_unit(y, y.val - vmin, rel);
        let sum: Digits = a
            .iter()
            .zip(b.iter())
            .map(|(&u, &v)| addmod(u, v, m))
            .collect();
        self.normalize(sum, rel, vmin, prec)
    }

    pub fn neg(&self, x: &Padic) -> Padic {
        if x.is_zero() {
            return x.clone();
        }
        let m = self.modulus_at(x.rel_prec());
        Padic {
            val: x.val,
            prec: x.prec,
            unit: x
                .unit
                .iter()
                .map(|&c| if c == 0 { 0 } else { m - c })
                .collect(),
        }
    }

    pub fn sub(&self, x: &Padic, y: &Padic) -> Padic {
        self.add(x, &self.neg(y))
    }

    pub fn mul(&self, x: &Padic, y: &Padic) -> Padic {
        let val = x.val + y.val;
        let prec = (x.prec + y.val).min(y.prec + x.val);
        if x.is_zero() || y.is_zero() || val >= prec {
            return self.zero(prec);
        }
        let rel = prec - val;
        let unit = self.unit_mul(&x.unit, &y.unit, rel);
        Padic { val, prec, unit }
    }

    pub fn mul_int(&self, x: &Padic, k: i64) -> Padic {
        if k == 0 {
            return self.zero(x.prec);
        }
        let c = self
            .from_rational(k as i128, 1, x.prec + self.cap)
            .expect("integer");
        self.mul(x, &c)
    }

    /// Multiply by p^e (e may be negative); exact.
    pub fn shift(&self, x: &Padic, e: i32) -> Padic {
        if x.is_zero() {
            return self.zero(x.prec + e);
        }
        Padic {
            val: x.val + e,
            prec: x.prec + e,
            unit: x.unit.clone(),
        }
    }

    fn unit_inverse(&self, u: &[u64], rel: i32) -> Result<Digits> {
        let p = self.p;
        let ubar: Vec<u64> = u.iter().map(|&c| c % p).collect();
        let y0: Digits = if self.degree == 1 {
            smallvec![inv_mod(ubar[0], p).ok_or_else(|| Error::NotAUnit("residue is zero".into()))?]
        } else {
            let mbar: Vec<u64> = self.modulus.iter().map(|&c| c % p).collect();
            let mut inv = fp_poly::inv_mod_poly(&ubar, &mbar, p)
                .ok_or_else(|| Error::NotAUnit("residue is zero".into()))?;
            inv.resize(self.degree, 0);
            inv.into_iter().collect()
        };
        let mut y = y0;
        let mut k = 1;
        while k < rel {
            k = (2 * k).min(rel);
            let m = self.modulus_at(k);
            let uy = self.unit_mul(u, &y, k);
            let mut two_minus: Digits =
                uy.iter().map(|&c| if c == 0 { 0 } else { m - c }).collect();
            two_minus[0] = addmod(two_minus[0], 2 % m, m);
            y = self.unit_mul(&y, &two_minus, k);
        }
        Ok(y)
    }

    pub fn inv(&self, x: &Padic) -> Result<Padic> {
        if x.is_zero() {
            return Err(Error::PrecisionExhausted(format!(
                "inverting a value indistinguishable from 0 mod p^{}",
                x.prec
            )));
        }
        let rel = x.rel_prec();
        let unit = self.unit_inverse(&x.unit, rel)?;
        Ok(Padic {
            val: -x.val,
            prec: rel - x.val,
            unit,
        })
    }

    pub fn div(&self, x: &Padic, y: &Padic) -> Result<Padic> {
        Ok(self.mul(x, &self.inv(y)?))
    }

    pub fn pow(&self, x: &Padic, e: i64) -> Result<Padic> {
        if e < 0 {
            return self.pow(&self.inv(x)?, -e);
        }
        let mut result = self.one(self.cap);
        let mut base = x.clone();
        let mut e = e as u64;
        if e == 0 {
            return Ok(result);
        }
        while e > 0 {
            if e & 1 == 1 {
                result = self.mul(&result, &base);
            }
            e >>= 1;
            if e > 0 {
                base = self.mul(&base, &base);
            }
        }
        Ok(result)
    }

    /// Reduce the absolute precision to `prec` (never increases it).
    pub fn truncate(&self, x: &Padic, prec: i32) -> Padic {
        if prec >= x.prec {
            return x.clone();
        }
        if x.val >= prec {
            return self.zero(prec);
        }
        let rel = prec - x.val;
        let m = self.modulus_at(rel);
        Padic {
            val: x.val,
            prec,
            unit: x.unit.iter().map(|&c| c % m).collect(),
        }
    }

    /// Equality modulo the smaller of the two precisions.
    pub fn eq_at_prec(&self, x: &Padic, y: &Padic) -> bool {
        self.sub(x, y).is_zero()
    }

    // ---- Frobenius ----------------------------------------------------

    fn compute_frobenius_table(&self) -> Vec<Vec<Digits>> {
        let f = self.degree;
        let cap = self.cap;
        let mut table: Vec<Vec<Digits>> = Vec::with_capacity(f);
        let mut ident = Vec::with_capacity(f);
        for i in 0..f {
            let mut v: Digits = smallvec![0; f];
            v[i] = 1;
            ident.push(v);
        }
        table.push(ident);
        if f == 1 {
            return table;
        }
        // phi(a): the root of the modulus congruent to a^p, by Newton iteration.
        let a: Digits = {
            let mut v: Digits = smallvec![0; f];
            v[1] = 1;
            v
        };
        let mut y = self.unit_pow_raw(&a, self.p as u128, cap);
        let mbig = self.modulus_at(cap);
        for _ in 0..(2 * cap + 4) {
            let (val, deriv) = self.eval_modulus_and_derivative(&y, cap);
            if val.iter().all(|&c| c == 0) {
                break;
            }
            let dinv = self.unit_inverse(&deriv, cap).expect("separable modulus");
            let step = self.unit_mul(&val, &dinv, cap);
            y = y
                .iter()
                .zip(step.iter())
                .map(|(&u, &s)| submod(u, s, mbig))
                .collect();
        }
        // phi^j(a^i) = (phi^j(a))^i with phi^j(a) = phi(phi^{j-1}(a)).
        let mut phi_a = a.clone();
        for _ in 1..f {
            phi_a = self.substitute_gen(&phi_a, cap, &y);
            let mut row = Vec::with_capacity(f);
            let mut acc: Digits = smallvec![0; f];
            acc[0] = 1;
            for _ in 0..f {
                row.push(acc.clone());
                acc = self.unit_mul(&acc, &phi_a, cap);
            }
            table.push(row);
        }
        table
    }

    /// Substitute `a -> image` in the polynomial `x` (ring homomorphism sending a to image).
    fn substitute_gen(&self, x: &[u64], rel: i32, image: &[u64]) -> Digits {
        let m = self.modulus_at(rel);
        let f = self.degree;
        let mut out: Digits = smallvec![0; f];
        let mut power: Digits = smallvec![0; f];
        power[0] = 1 % m;
        for i in 0..f {
            let c = x[i] % m;
            if c != 0 {
                for k in 0..f {
                    out[k] = addmod(out[k], mulmod(c, power[k], m), m);
                }
            }
            power = self.unit_mul(&power, image, rel);
        }
        out
    }

    fn eval_modulus_and_derivative(&self, y: &[u64], rel: i32) -> (Digits, Digits) {
        let m = self.modulus_at(rel);
        let f = self.degree;
        let mut val: Digits = smallvec![0; f];
        let mut der: Digits = smallvec![0; f];
        for k in (0..=f).rev() {
            // Horner for m(y) and m'(y)
            der = self.unit_mul(&der, y, rel);
            for i in 0..f {
                der[i] = addmod(der[i], val[i], m);
            }
            val = self.unit_mul(&val, y, rel);
            val[0] = addmod(val[0], self.modulus[k] % m, m);
        }
        (val, der)
    }

    fn unit_pow_raw(&self, x: &[u64], mut e: u128, rel: i32) -> Digits {
        let mut result: Digits = smallvec![0; self.degree];
        result[0] = 1 % self.modulus_at(rel);
        let mut b: Digits = x.iter().copied().collect();
        while e > 0 {
            if e & 1 == 1 {
                result = self.unit_mul(&result, &b, rel);
            }
            e >>= 1;
            if e > 0 {
                b = self.unit_mul(&b, &b, rel);
            }
        }
        result
    }

    /// phi^j for the absolute Frobenius lift phi (a -> root congruent to a^p).
    pub fn phi_pow(&self, x: &Padic, j: i64) -> Padic {
        let f = self.degree as i64;
        let j = j.rem_euclid(f) as usize;
        if j == 0 || x.is_zero() {
            return x.clone();
        }
        let rel = x.rel_prec();
        let m = self.modulus_at(rel);
        let mut out: Digits = smallvec![0; self.degree];
        for (i, &c) in x.unit.iter().enumerate() {
            if c == 0 {
                continue;
            }
            for k in 0..self.degree {
                out[k] = addmod(out[k], mulmod(c, self.phi[j][i][k] % m, m), m);
            }
        }
        self.normalize(out, rel, x.val, x.prec)
    }

    /// sigma_K: the lift of the q-power map, q = p^frobenius_power.
    pub fn sigma(&self, x: &Padic) -> Padic {
        self.sigma_pow(x, 1)
    }

    /// sigma_K^k for any integer k (negative k gives the inverse).
    pub fn sigma_pow(&self, x: &Padic, k: i64) -> Padic {
        self.phi_pow(x, k * self.frob_power as i64)
    }

    pub fn sigma_is_identity(&self) -> bool {
        (self.frob_power as usize).is_multiple_of(self.degree)
    }

    // ---- residue field F_q --------------------------------------------

    /// Reduction mod p of an integral value.
    pub fn residue(&self, x: &Padic) -> Result<Digits> {
        if x.val < 0 && !x.is_zero() {
            return Err(Error::Domain("residue of a non-integral value".into()));
        }
        if x.prec < 1 {
            return Err(Error::PrecisionExhausted(
                "residue needs precision >= 1".into(),
            ));
        }
        if x.is_zero() || x.val > 0 {
            return Ok(smallvec![0; self.degree]);
        }
        Ok(x.unit.iter().map(|&c| c % self.p).collect())
    }

    /// The lift of a residue class with coordinates in [0, p).
    pub fn lift_residue(&self, c: &[u64], prec: i32) -> Padic {
        let coords: Vec<i64> = c.iter().map(|&x| x as i64).collect();
        self.from_coords(&coords, prec)
    }

    pub fn teichmuller(&self, c: &[u64], prec: i32) -> Padic {
        if c.iter().all(|&x| x % self.p == 0) {
            return self.zero(prec);
        }
        let size = self.residue_size();
        let mut x = self.lift_residue(c, prec);
        for _ in 0..=prec {
            let next = Padic {
                val: 0,
                prec,
                unit: self.unit_pow_raw(&x.unit, size, prec),
            };
            if next == x {
                break;
            }
            x = next;
        }
        x
    }

    pub fn fq_zero(&self) -> Digits {
        smallvec![0; self.degree]
    }

    pub fn fq_one(&self) -> Digits {
        let mut v = self.fq_zero();
        v[0] = 1;
        v
    }

    pub fn fq_is_zero(&self, a: &[u64]) -> bool {
        a.iter().all(|&c| c % self.p == 0)
    }

    pub fn fq_add(&self, a: &[u64], b: &[u64]) -> Digits {
        a.iter()
            .zip(b)
            .map(|(&x, &y)| addmod(x % self.p, y % self.p, self.p))
            .collect()
    }

    pub fn fq_sub(&self, a: &[u64], b: &[u64]) -> Digits {
        a.iter()
            .zip(b)
            .map(|(&x, &y)| submod(x % self.p, y % self.p, self.p))
            .collect()
    }

    pub fn fq_neg(&self, a: &[u64]) -> Digits {
        self.fq_sub(&self.fq_zero(), a)
    }

    pub fn fq_scale(&self, a: &[u64], k: i64) -> Digits {
        let k = reduce_i128(k as i128, self.p);
        a.iter().map(|&x| mulmod(x, k, self.p)).collect()
    }

    pub fn fq_mul(&self, a: &[u64], b: &[u64]) -> Digits {
        self.unit_mul(a, b, 1)
    }

    pub fn fq_inv(&self, a: &[u64]) -> Option<Digits> {
        if self.fq_is_zero(a) {
            return None;
        }
        self.unit_inverse(a, 1).ok()
    }

    pub fn fq_pow(&self, a: &[u64], e: u128) -> Digits {
        self.unit_pow_raw(a, e, 1)
    }

    /// a^(p^k) for any integer k (Frobenius is bijective on F_q).
    pub fn fq_frobenius(&self, a: &[u64], k: i64) -> Digits {
        let j = k.rem_euclid(self.degree as i64) as u32;
        if j == 0 {
            return a.iter().map(|&c| c % self.p).collect();
        }
        self.fq_pow(a, (self.p as u128).pow(j))
    }

    /// a^(q^k), q the Frobenius exponent.
    pub fn fq_qpow(&self, a: &[u64], k: i64) -> Digits {
        self.fq_frobenius(a, k * self.frob_power as i64)
    }

    /// All elements of F_q (only sensible for small fields).
    pub fn fq_elements(&self) -> Vec<Digits> {
        let size = self.residue_size() as u64;
        (0..size)
            .map(|mut idx| {
                let mut v = self.fq_zero();
                for c in v.iter_mut() {
                    *c = idx % self.p;
                    idx /= self.p;
                }
                v
            })
            .collect()
    }

    // ---- extensions ---------------------------------------------------

    /// Unramified extension of degree `s` (residue field of size p^(f·s)) with
    /// the same Frobenius exponent, together with the embedding of `self`.
    pub fn extension(self: &Arc<Self>, s: usize) -> Result<RingEmbedding> {
        if s == 0 {
            return Err(Error::InvalidParams(
                "extension degree must be positive".into(),
            ));
        }
        let f = self.degree * s;
        let big = CoeffRing::new(CoeffRingParams {
            p: self.p,
            modulus: fp_poly::first_irreducible(f, self.p)
                .iter()
                .map(|&c| c as i64)
                .collect(),
            prec: self.prec,
            frobenius_power: Some(self.frob_power),
        })?;
        let prec = big.cap;
        let eval = |r: &Padic| -> (Padic, Padic) {
            let mut val = big.zero(prec);
            let mut der = big.zero(prec);
            let mut power = big.one(prec);
            for (i, &c) in self.modulus_input.iter().enumerate() {
                val = big.add(&val, &big.mul_int(&power, c));
                if i + 1 < self.modulus_input.len() {
                    let next = big.mul(&power, r);
                    let d = self.modulus_input[i + 1];
                    der = big.add(&der, &big.mul_int(&power, d * (i as i64 + 1)));
                    power = next;
                }
            }
            (val, der)
        };
        let root_bar = big
            .fq_elements_limited(1 << 20)?
            .into_iter()
            .find(|c| {
                let r = big.lift_residue(c, 1);
                let mut acc = big.zero(1);
                let mut power = big.one(1);
                for &m in &self.modulus_input {
                    acc = big.add(&acc, &big.mul_int(&power, m));
                    power = big.mul(&power, &r);
                }
                acc.is_zero()
            })
            .ok_or_else(|| {
                Error::InvalidParams("no residue root of the modulus in the extension".into())
            })?;
        let mut r = big.lift_residue(&root_bar, prec);
        for _ in 0..64 {
            let (v, d) = eval(&r);
            if v.is_zero() {
                break;
            }
            r = big.sub(&r, &big.div(&v, &d)?);
            r = big.truncate(&r, prec);
        }
        Ok(RingEmbedding {
            source: self.clone(),
            target: big,
            gen_image: r,
        })
    }

    fn fq_elements_limited(&self, limit: u128) -> Result<Vec<Digits>> {
        if self.residue_size() > limit {
            return Err(Error::InvalidParams(
                "residue field too large to enumerate".into(),
            ));
        }
        Ok(self.fq_elements())
    }

    // ---- text -----------------------------------------------------------

    fn unit_poly_string(&self, unit: &[u64]) -> String {
        let mut parts = Vec::new();
        for (i, &c) in unit.iter().enumerate() {
            if c == 0 {
                continue;
            }
            parts.push(match i {
                0 => format!("{c}"),
                1 => format!("{c}*a"),
                _ => format!("{c}*a^{i}"),
            });
        }
        if parts.is_empty() {
            "0".into()
        } else {
            parts.join(" + ")
        }
    }

    /// `p^e * (d_0 + d_1*a + ...) mod p^N`
    pub fn format(&self, x: &Padic) -> String {
        if x.is_zero() {
            return format!("0 mod {}^{}", self.p, x.prec);
        }
        format!(
            "{}^{} * ({}) mod {}^{}",
            self.p,
            x.val,
            self.unit_poly_string(&x.unit),
            self.p,
            x.prec
        )
    }

    /// Compact coefficient form used inside series text (precision omitted).
    pub fn format_compact(&self, x: &Padic) -> String {
        if x.is_zero() {
            return "0".into();
        }
        if self.degree == 1 && x.val >= 0 {
            let modulus = (self.p as i128).pow(x.rel_prec() as u32);
            let mut u = x.unit[0] as i128;
            if 2 * u > modulus {
                u -= modulus;
            }
            let v = (self.p as i128).pow(x.val as u32) * u;
            return format!("{v}");
        }
        let mut s = String::new();
        if x.val != 0 {
            let _ = write!(s, "{}^{} * ", self.p, x.val);
        }
        let _ = write!(s, "({})", self.unit_poly_string(&x.unit));
        s
    }
}

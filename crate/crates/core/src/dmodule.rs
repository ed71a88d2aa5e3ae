//! (F,∇)-modules presented by a Frobenius matrix A and connection matrices
//! N_1..N_m in the dlog{z_i} basis.

use std::collections::HashMap;
use std::sync::Arc;

use num_rational::Rational64;

use crate::error::{Error, Result};
use crate::frobenius::FrobeniusLift;
use crate::monoval::Point;
use crate::series::{same_ctx, Context, FakeSeries, SeriesMatrix};

/// Outcome of a residual check: `valuation` is the least w over residual
/// entries (the precision when all vanish).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResidualReport {
    pub pass: bool,
    pub valuation: i32,
    pub precision: i32,
}

impl ResidualReport {
    fn from_residuals(res: &[SeriesMatrix]) -> Self {
        let precision = res.iter().map(|m| m.prec()).min().unwrap_or(i32::MAX);
        let pass = res.iter().all(|m| m.is_zero());
        let valuation = res
            .iter()
            .flat_map(|m| m.entries().iter())
            .filter(|e| !e.is_zero())
            .map(|e| e.w())
            .min()
            .unwrap_or(precision);
        ResidualReport {
            pass,
            valuation,
            precision,
        }
    }
}

/// Inverse of a matrix: Neumann series near the identity, elimination otherwise.
pub fn matrix_inverse(u: &SeriesMatrix) -> Result<SeriesMatrix> {
    let id = SeriesMatrix::identity(u.ctx(), u.dim(), u.prec());
    let diff = u.sub(&id)?;
    if diff.is_zero() || diff.w() >= 1 {
        u.inverse_near_identity()
    } else {
        u.inverse(&u.lambda_hi())
    }
}

fn factorial(n: usize) -> i128 {
    (1..=n as i128).product()
}

#[derive(Clone, Debug)]
pub struct DModule {
    lift: FrobeniusLift,
    a: SeriesMatrix,
    n: Option<Vec<SeriesMatrix>>,
    verified: bool,
}

impl DModule {
    pub fn new(lift: FrobeniusLift, a: SeriesMatrix, n: Option<Vec<SeriesMatrix>>) -> Result<Self> {
        same_ctx(lift.ctx(), a.ctx())?;
        if let Some(ns) = &n {
            if ns.len() != lift.ctx().rank() {
                return Err(Error::InvalidParams(format!(
                    "{} connection matrices for a rank {} lattice",
                    ns.len(),
                    lift.ctx().rank()
                )));
            }
            for m in ns {
                same_ctx(lift.ctx(), m.ctx())?;
                if m.dim() != a.dim() {
                    return Err(Error::InvalidParams(
                        "connection matrix size differs from A".into(),
                    ));
                }
            }
        }
        Ok(DModule {
            lift,
            a,
            n,
            verified: false,
        })
    }

    /// The unit object: A = I, N = 0.
    pub fn trivial(lift: &FrobeniusLift, rank: usize, prec: i32) -> Self {
        let ctx = lift.ctx();
        DModule {
            lift: lift.clone(),
            a: SeriesMatrix::identity(ctx, rank, prec),
            n: Some(vec![SeriesMatrix::zeros(ctx, rank, prec); ctx.rank()]),
            verified: true,
        }
    }

    pub fn rank(&self) -> usize {
        self.a.dim()
    }

    pub fn ctx(&self) -> &Arc<Context> {
        self.lift.ctx()
    }

    pub fn lift(&self) -> &FrobeniusLift {
        &self.lift
    }

    pub fn a(&self) -> &SeriesMatrix {
        &self.a
    }

    pub fn connection(&self) -> Option<&[SeriesMatrix]> {
        self.n.as_deref()
    }

    pub fn is_verified(&self) -> bool {
        self.verified
    }

    pub fn prec(&self) -> i32 {
        let np = self
            .n
            .iter()
            .flatten()
            .map(|m| m.prec())
            .min()
            .unwrap_or(i32::MAX);
        self.a.prec().min(np)
    }

    pub fn with_connection(&self, n: Vec<SeriesMatrix>) -> Result<Self> {
        DModule::new(self.lift.clone(), self.a.clone(), Some(n))
    }

    /// Run both checks; on success the module is flagged as verified.
    pub fn verify(mut self) -> Result<(Self, ResidualReport, ResidualReport)> {
        let c = self.check_compatibility()?;
        let i = self.check_integrability()?;
        self.verified = c.pass && i.pass;
        Ok((self, c, i))
    }

    fn nmats(&self) -> Result<&[SeriesMatrix]> {
        self.n
            .as_deref()
            .ok_or_else(|| Error::Precondition("module has no connection".into()))
    }

    /// Residuals N_iA + ∂_iA − A·Σ_h a_hi N_h^σ.
    pub fn compatibility_residuals(&self) -> Result<Vec<SeriesMatrix>> {
        let ns = self.nmats()?;
        let prec = self.prec();
        let a_log = self.lift.log_derivative_matrix(prec + 1)?;
        let n_sigma = ns
            .iter()
            .map(|m| self.lift.apply_matrix(m))
            .collect::<Result<Vec<_>>>()?;
        let mut out = Vec::with_capacity(ns.len());
        for i in 0..ns.len() {
            let mut rhs: Option<SeriesMatrix> = None;
            for (h, nh) in n_sigma.iter().enumerate() {
                if a_log[h][i].is_zero() {
                    continue;
                }
                let t = nh.scale(&a_log[h][i])?;
                rhs = Some(match rhs {
                    None => t,
                    Some(r) => r.add(&t)?,
                });
            }
            let rhs = match rhs {
                Some(r) => self.a.mul(&r)?,
                None => SeriesMatrix::zeros(self.ctx(), self.rank(), prec),
            };
            let lhs = ns[i].mul(&self.a)?.add(&self.a.partial(i))?;
            out.push(lhs.sub(&rhs)?);
        }
        Ok(out)
    }

    pub fn check_compatibility(&self) -> Result<ResidualReport> {
        Ok(ResidualReport::from_residuals(
            &self.compatibility_residuals()?,
        ))
    }

    /// Residuals ∂_i N_j − ∂_j N_i + N_iN_j − N_jN_i for i < j.
    pub fn integrability_residuals(&self) -> Result<Vec<SeriesMatrix>> {
        let ns = self.nmats()?;
        let mut out = Vec::new();
        for i in 0..ns.len() {
            for j in i + 1..ns.len() {
                let r = ns[j]
                    .partial(i)
                    .sub(&ns[i].partial(j))?
                    .add(&ns[i].mul(&ns[j])?)?
                    .sub(&ns[j].mul(&ns[i])?)?;
                out.push(r);
            }
        }
        Ok(out)
    }

    pub fn check_integrability(&self) -> Result<ResidualReport> {
        let res = self.integrability_residuals()?;
        if res.is_empty() {
            let p = self.prec();
            return Ok(ResidualReport {
                pass: true,
                valuation: p,
                precision: p,
            });
        }
        Ok(ResidualReport::from_residuals(&res))
    }

    /// A′ = U⁻¹AU^σ, N′ = U⁻¹NU + U⁻¹∂U.
    pub fn gauge_change(&self, u: &SeriesMatrix) -> Result<Self> {
        let uinv = matrix_inverse(u)?;
        self.gauge_change_with_inverse(u, &uinv)
    }

    pub fn gauge_change_with_inverse(&self, u: &SeriesMatrix, uinv: &SeriesMatrix) -> Result<Self> {
        let a = uinv.mul(&self.a)?.mul(&self.lift.apply_matrix(u)?)?;
        let n = match &self.n {
            Some(ns) => Some(
                ns.iter()
                    .enumerate()
                    .map(|(i, ni)| uinv.mul(&ni.mul(u)?)?.add(&uinv.mul(&u.partial(i))?))
                    .collect::<Result<Vec<_>>>()?,
            ),
            None => None,
        };
        DModule::new(self.lift.clone(), a, n)
    }

    /// Frobenius multiplied by π^c.
    pub fn twist(&self, c: i32) -> Self {
        DModule {
            a: self.a.map(|e| e.shift_pi(c)),
            verified: false,
            ..self.clone()
        }
    }

    /// [a]_*: Frobenius replaced by its a-th power.
    pub fn pushforward(&self, a: u32) -> Result<Self> {
        if a == 0 {
            return Err(Error::Domain("pushforward needs a ≥ 1".into()));
        }
        let mut acc = self.a.clone();
        let mut cur = self.a.clone();
        for _ in 1..a {
            cur = self.lift.apply_matrix(&cur)?;
            acc = acc.mul(&cur)?;
        }
        DModule::new(self.lift.iterate(a), acc, self.n.clone())
    }

    /// [a]^*: block companion module over the a-th root of the lift.
    pub fn pullback(&self, a: u32) -> Result<Self> {
        if a == 0 || !self.lift.power().is_multiple_of(a) {
            return Err(Error::Domain(format!(
                "lift power {} is not divisible by {a}",
                self.lift.power()
            )));
        }
        let root = self.lift.root(a)?;
        let n = self.rank();
        let a_us = a as usize;
        let big = n * a_us;
        let ctx = self.ctx().clone();
        let prec = self.a.prec();
        let mut m = SeriesMatrix::zeros(&ctx, big, prec);
        for j in 0..a_us - 1 {
            for k in 0..n {
                m.set((j + 1) * n + k, j * n + k, FakeSeries::one(&ctx, prec));
            }
        }
        for r in 0..n {
            for c in 0..n {
                m.set(r, (a_us - 1) * n + c, self.a.get(r, c).clone());
            }
        }
        let conn = match &self.n {
            None => None,
            Some(ns) => {
                if !root.is_standard() {
                    return Err(Error::Precondition(
                        "pullback of a connection needs a standard lift".into(),
                    ));
                }
                let q = root.q_total();
                let mut out = Vec::with_capacity(ns.len());
                for ni in ns {
                    let mut blocks = vec![ni.clone()];
                    for _ in 1..a_us {
                        let next = root
                            .apply_matrix(blocks.last().expect("nonempty"))?
                            .map(|e| e.scale_int(q));
                        blocks.push(next);
                    }
                    let mut bm = SeriesMatrix::zeros(&ctx, big, ni.prec());
                    for (j, b) in blocks.iter().enumerate() {
                        for r in 0..n {
                            for c in 0..n {
                                bm.set(j * n + r, j * n + c, b.get(r, c).clone());
                            }
                        }
                    }
                    out.push(bm);
                }
                Some(out)
            }
        };
        DModule::new(root, m, conn)
    }

    fn same_lift(&self, other: &Self) -> Result<()> {
        same_ctx(self.ctx(), other.ctx())?;
        if self.lift.power() != other.lift.power()
            || self.lift.is_standard() != other.lift.is_standard()
        {
            return Err(Error::ContextMismatch(
                "modules use different Frobenius lifts".into(),
            ));
        }
        Ok(())
    }

    pub fn tensor(&self, other: &Self) -> Result<Self> {
        self.same_lift(other)?;
        let a = self.a.kronecker(&other.a)?;
        let n = match (&self.n, &other.n) {
            (Some(n1), Some(n2)) => {
                let ctx = self.ctx();
                let i1 = SeriesMatrix::identity(ctx, self.rank(), self.prec());
                let i2 = SeriesMatrix::identity(ctx, other.rank(), other.prec());
                Some(
                    n1.iter()
                        .zip(n2)
                        .map(|(x, y)| x.kronecker(&i2)?.add(&i1.kronecker(y)?))
                        .collect::<Result<Vec<_>>>()?,
                )
            }
            _ => None,
        };
        DModule::new(self.lift.clone(), a, n)
    }

    /// A* = (Aᵀ)⁻¹, N* = −Nᵀ.
    pub fn dual(&self) -> Result<Self> {
        let a = self.a.transpose().inverse(&self.a.lambda_hi())?;
        let n = self
            .n
            .as_ref()
            .map(|ns| ns.iter().map(|m| m.transpose().neg()).collect());
        DModule::new(self.lift.clone(), a, n)
    }

    /// d-th exterior power in the basis e_S, S increasing.
    pub fn wedge(&self, d: usize) -> Result<Self> {
        let n = self.rank();
        if d == 0 || d > n {
            return Err(Error::Domain(format!("wedge degree {d} for rank {n}")));
        }
        let subsets = increasing_subsets(n, d);
        let index: HashMap<Vec<usize>, usize> = subsets
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, s)| (s, i))
            .collect();
        let ctx = self.ctx().clone();
        let prec = self.prec();
        let k = subsets.len();
        let mut a = SeriesMatrix::zeros(&ctx, k, prec);
        for (r, rs) in subsets.iter().enumerate() {
            for (c, cs) in subsets.iter().enumerate() {
                let minor = SeriesMatrix::from_fn(d, |i, j| self.a.get(rs[i], cs[j]).clone());
                a.set(r, c, minor.det()?);
            }
        }
        let conn = match &self.n {
            None => None,
            Some(ns) => {
                let mut out = Vec::with_capacity(ns.len());
                for ni in ns {
                    let mut m = SeriesMatrix::zeros(&ctx, k, prec);
                    for (c, cs) in subsets.iter().enumerate() {
                        for pos in 0..d {
                            for r in 0..n {
                                if cs.iter().enumerate().any(|(q, &s)| q != pos && s == r) {
                                    continue;
                                }
                                let entry = ni.get(r, cs[pos]);
                                if entry.is_zero() {
                                    continue;
                                }
                                let mut t = cs.clone();
                                t[pos] = r;
                                let sign = sort_sign(&mut t);
                                let row = index[&t];
                                let v = if sign < 0 { entry.neg() } else { entry.clone() };
                                let cur = m.get(row, c).add(&v)?;
                                m.set(row, c, cur);
                            }
                        }
                    }
                    out.push(m);
                }
                Some(out)
            }
        };
        DModule::new(self.lift.clone(), a, conn)
    }

    /// (deg, slope) from det A = π^deg · unit.
    pub fn degree_slope(&self) -> Result<(i32, Rational64)> {
        let det = self.a.det()?;
        let (c, _) = det.pi_power_decompose().map_err(|e| match e {
            Error::PrecisionExhausted(m) => Error::NotInScope(format!(
                "det A is not a certified unit times a π-power: {m}"
            )),
            other => other,
        })?;
        if c >= det.prec() {
            return Err(Error::NotInScope(
                "det A vanishes at current precision".into(),
            ));
        }
        Ok((c, Rational64::new(c as i64, self.rank() as i64)))
    }

    /// N_μ = Σ μ_i N_i.
    pub fn n_mu(&self, mu: &[i64]) -> Result<SeriesMatrix> {
        let ns = self.nmats()?;
        let mut acc = SeriesMatrix::zeros(self.ctx(), self.rank(), self.prec());
        for (ni, &c) in ns.iter().zip(mu) {
            if c != 0 {
                acc = acc.add(&ni.map(|e| e.scale_int(c)))?;
            }
        }
        Ok(acc)
    }

    /// Δ_μ(v) = N_μ v + ∂_μ v on a coefficient column.
    pub fn delta_action(&self, mu: &[i64], v: &[FakeSeries]) -> Result<Vec<FakeSeries>> {
        let nm = self.n_mu(mu)?;
        let nv = nm.mul_vec(v)?;
        nv.iter()
            .zip(v)
            .map(|(a, b)| a.add(&b.derivation(mu)))
            .collect()
    }

    /// Δ_i applied to every column of V.
    pub fn delta_matrix(&self, i: usize, v: &SeriesMatrix) -> Result<SeriesMatrix> {
        let ns = self.nmats()?;
        ns[i].mul(v)?.add(&v.partial(i))
    }

    /// Δ^J(v) = Π_i Π_{l<j_i} (Δ_i − l) v.
    pub fn delta_falling(&self, j: &[usize], v: &[FakeSeries]) -> Result<Vec<FakeSeries>> {
        let m = self.ctx().rank();
        let mut cur = v.to_vec();
        for i in (0..m).rev() {
            let mut mu = vec![0i64; m];
            mu[i] = 1;
            for l in 0..j.get(i).copied().unwrap_or(0) {
                let d = self.delta_action(&mu, &cur)?;
                cur = d
                    .iter()
                    .zip(&cur)
                    .map(|(a, b)| a.sub(&b.scale_int(l as i64)))
                    .collect::<Result<_>>()?;
            }
        }
        Ok(cur)
    }

    /// Unique connection for a unit-root Frobenius matrix, by the fixed point
    /// N_i ← (A·Σ_h a_hi N_h^σ − ∂_i A)A⁻¹.
    pub fn derive_connection(&self) -> Result<Self> {
        let ctx = self.ctx().clone();
        let prec = self.a.prec();
        let ainv = matrix_inverse(&self.a)?;
        if ainv.entries().iter().any(|e| !e.is_zero() && e.w() < 0) {
            return Err(Error::Precondition(
                "A is not invertible over the integral ring (not unit-root)".into(),
            ));
        }
        let m = ctx.rank();
        let a_log = self.lift.log_derivative_matrix(prec + 1)?;
        let da: Vec<SeriesMatrix> = (0..m).map(|i| self.a.partial(i)).collect();
        let mut n: Vec<SeriesMatrix> = match &self.n {
            Some(start) => start.clone(),
            None => vec![SeriesMatrix::zeros(&ctx, self.rank(), prec); m],
        };
        let max_iter = 4 * prec.max(1) as usize + 8;
        for _ in 0..max_iter {
            let ns: Vec<SeriesMatrix> = n
                .iter()
                .map(|x| self.lift.apply_matrix(x))
                .collect::<Result<_>>()?;
            let mut next = Vec::with_capacity(m);
            for i in 0..m {
                let mut acc = da[i].neg();
                for (h, nh) in ns.iter().enumerate() {
                    if a_log[h][i].is_zero() {
                        continue;
                    }
                    acc = acc.add(&self.a.mul(&nh.scale(&a_log[h][i])?)?)?;
                }
                next.push(acc.mul(&ainv)?.truncate_prec(prec));
            }
            let stable = next
                .iter()
                .zip(&n)
                .all(|(x, y)| x.approx_eq(y) && x.prec() == y.prec());
            n = next;
            if stable {
                return DModule::new(self.lift.clone(), self.a.clone(), Some(n));
            }
        }
        Err(Error::PrecisionExhausted(
            "connection fixed point did not stabilise".into(),
        ))
    }

    /// Transport the Frobenius structure to another lift σ₂:
    /// A₂ = Σ_J U^J·A·((1/J!)Δ^J)^{σ₁}, u_i = {z_i}^{σ₂}/{z_i}^{σ₁} − 1.
    pub fn change_frobenius(&self, sigma2: &FrobeniusLift) -> Result<Self> {
        let ns = self.nmats()?;
        same_ctx(self.ctx(), sigma2.ctx())?;
        if sigma2.power() != self.lift.power() {
            return Err(Error::InvalidParams(
                "lifts must have the same Frobenius power".into(),
            ));
        }
        let ctx = self.ctx().clone();
        let ring = ctx.ring().clone();
        let p = ring.p();
        let prec = self.prec();
        let m = ctx.rank();
        let mut u = Vec::with_capacity(m);
        for i in 0..m {
            let e = FakeSeries::monomial(&ctx, &ctx.basis_point(i), ring.one(prec));
            let t1 = self.lift.apply(&e)?;
            let t2 = sigma2.apply(&e)?;
            let target = t1.lambda_hi().clone();
            let ui = t2
                .mul(&t1.invert_unit(&target)?)?
                .sub(&FakeSeries::one(&ctx, prec))?
                .truncate_prec(prec);
            if !ui.is_zero() && ui.w() < 1 {
                return Err(Error::Precondition(format!(
                    "w(u_{}) = {} < 1",
                    i + 1,
                    ui.w()
                )));
            }
            u.push(ui);
        }
        // Per-coordinate weight w_i; the J-th term has w ≥ Σ (w_i j_i − v_p(j_i!)).
        let weights: Vec<Option<i32>> = u
            .iter()
            .map(|x| if x.is_zero() { None } else { Some(x.w()) })
            .collect();
        let slack = |w: i32, j: usize| -> i64 { w as i64 * j as i64 - legendre(j, p) as i64 };
        let mut ranges = Vec::with_capacity(m);
        for w in &weights {
            match w {
                None => ranges.push(0usize),
                Some(w) => {
                    if p == 2 && *w < 2 {
                        return Err(Error::Precondition(
                            "p = 2 needs w(u_i) ≥ 2 for the Taylor series to converge".into(),
                        ));
                    }
                    // slack(j) ≥ j(w − 1/(p−1)), so larger j cannot reach below prec
                    let denom = (*w as i64) * (p as i64 - 1) - 1;
                    let j = ((prec.max(0) as i64) * (p as i64 - 1) + denom - 1) / denom;
                    ranges.push(j as usize);
                }
            }
        }
        let mut js: Vec<Vec<usize>> = vec![vec![]];
        for (i, &r) in ranges.iter().enumerate() {
            let mut next = Vec::new();
            for partial in &js {
                let used: i64 = partial
                    .iter()
                    .enumerate()
                    .map(|(k, &j)| weights[k].map_or(0, |w| slack(w, j)))
                    .sum();
                for j in 0..=r {
                    let s = weights[i].map_or(0, |w| slack(w, j));
                    if used + s < prec as i64 {
                        let mut v = partial.clone();
                        v.push(j);
                        next.push(v);
                    }
                }
            }
            js = next;
        }
        js.sort_by_key(|j| j.iter().sum::<usize>());
        // D_J = Δ^J(I), built from D_{J − e_k} with k the first nonzero index.
        let extra = js
            .iter()
            .map(|j| j.iter().map(|&x| legendre(x, p) as i32).sum::<i32>())
            .max()
            .unwrap_or(0);
        let work = prec + extra;
        let a_work = self.a.clone();
        let n_work: Vec<SeriesMatrix> = ns.to_vec();
        let mut cache: HashMap<Vec<usize>, SeriesMatrix> = HashMap::new();
        let zero_j = vec![0usize; m];
        cache.insert(
            zero_j.clone(),
            SeriesMatrix::identity(&ctx, self.rank(), work),
        );
        let mut u_pows: Vec<Vec<FakeSeries>> = u
            .iter()
            .map(|_| vec![FakeSeries::one(&ctx, prec)])
            .collect();
        let mut total = SeriesMatrix::zeros(&ctx, self.rank(), prec);
        for j in &js {
            let d = match cache.get(j) {
                Some(d) => d.clone(),
                None => {
                    let k = j.iter().position(|&x| x > 0).expect("J ≠ 0");
                    let mut prev_j = j.clone();
                    prev_j[k] -= 1;
                    let prev = cache
                        .get(&prev_j)
                        .cloned()
                        .ok_or_else(|| Error::Precondition("missing Taylor coefficient".into()))?;
                    let l = (j[k] - 1) as i64;
                    let d = n_work[k]
                        .mul(&prev)?
                        .add(&prev.partial(k))?
                        .sub(&prev.map(|e| e.scale_int(l)))?;
                    cache.insert(j.clone(), d.clone());
                    d
                }
            };
            let jf: i128 = j.iter().map(|&x| factorial(x)).product();
            let inv = ring.from_rational(1, jf, work + ring.cap())?;
            let dj = d.scale_scalar(&inv);
            let mut coeff = FakeSeries::one(&ctx, prec);
            for (i, &ji) in j.iter().enumerate() {
                while u_pows[i].len() <= ji {
                    let next = u_pows[i]
                        .last()
                        .expect("nonempty")
                        .mul(&u[i])?
                        .truncate_prec(prec);
                    u_pows[i].push(next);
                }
                if ji > 0 {
                    coeff = coeff.mul(&u_pows[i][ji])?;
                }
            }
            if coeff.is_zero() {
                continue;
            }
            let term = a_work.mul(&self.lift.apply_matrix(&dj)?)?.scale(&coeff)?;
            total = total.add(&term.truncate_prec(prec))?;
        }
        DModule::new(sigma2.clone(), total.truncate_prec(prec), Some(ns.to_vec()))
    }

    /// Replace the coefficient ring by its degree-s unramified extension.
    pub fn extend_residue(&self, s: usize) -> Result<(Self, crate::coeffring::RingEmbedding)> {
        let emb = self.ctx().ring().extension(s)?;
        let big = Context::new(emb.target().clone(), self.ctx().valuation().clone());
        let move_s = |x: &FakeSeries| x.change_ring(&big, |c| emb.apply(c));
        let move_m = |m: &SeriesMatrix| m.map(move_s);
        let lift = if self.lift.is_standard() {
            FrobeniusLift::standard(&big).iterate(self.lift.power())
        } else {
            let images = self.lift.images(self.prec()).iter().map(move_s).collect();
            FrobeniusLift::from_images(&big, images)?.iterate(self.lift.power())
        };
        let n = self.n.as_ref().map(|ns| ns.iter().map(move_m).collect());
        Ok((DModule::new(lift, move_m(&self.a), n)?, emb))
    }
}

/// v_p(n!) by Legendre's formula.
pub fn legendre(n: usize, p: u64) -> u32 {
    let mut n = n as u64;
    let mut v = 0u32;
    while n > 0 {
        n /= p;
        v += n as u32;
    }
    v
}

fn increasing_subsets(n: usize, d: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, d: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == d {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, d, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, d, &mut Vec::new(), &mut out);
    out
}

/// Sort in place, returning the sign of the permutation.
fn sort_sign(v: &mut [usize]) -> i32 {
    let mut sign = 1;
    for i in 0..v.len() {
        for j in 0..v.len() - 1 - i {
            if v[j] > v[j + 1] {
                v.swap(j, j + 1);
                sign = -sign;
            }
        }
    }
    sign
}

/// Rank-1 module with A = {z}, N_i = μ_i(z)/(q−1) (scaled by q^power).
pub fn monomial_module(lift: &FrobeniusLift, z: &[i64], prec: i32) -> Result<DModule> {
    let ctx = lift.ctx().clone();
    let ring = ctx.ring().clone();
    let q = lift.q_total() as i128;
    let a = SeriesMatrix::from_rows(vec![vec![FakeSeries::monomial(&ctx, z, ring.one(prec))]])?;
    let n = (0..ctx.rank())
        .map(|i| {
            let c = ring.from_rational(z[i] as i128, q - 1, prec)?;
            SeriesMatrix::from_rows(vec![vec![FakeSeries::constant(&ctx, c)]])
        })
        .collect::<Result<Vec<_>>>()?;
    DModule::new(lift.clone(), a, Some(n))
}

/// Lattice points of a matrix's support.
pub fn matrix_support(m: &SeriesMatrix) -> Vec<Point> {
    let mut pts: Vec<Point> = m
        .entries()
        .iter()
        .flat_map(|e| e.terms().keys().cloned())
        .collect();
    pts.sort();
    pts.dedup();
    pts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffring::CoeffRing;
    use crate::monoval::MonomialValuation;

    fn ctx(prec: i32) -> Arc<Context> {
        Context::new(
            CoeffRing::prime_field(5, prec).unwrap(),
            Arc::new(MonomialValuation::sqrt2_plane()),
        )
    }

    fn scalar_mat(ctx: &Arc<Context>, s: FakeSeries) -> SeriesMatrix {
        let _ = ctx;
        SeriesMatrix::from_rows(vec![vec![s]]).unwrap()
    }

    #[test]
    fn trivial_and_monomial_pass() {
        let ctx = ctx(6);
        let s = FrobeniusLift::standard(&ctx);
        let t = DModule::trivial(&s, 2, 6);
        assert!(t.check_compatibility().unwrap().pass);
        let m = monomial_module(&s, &[1, -2], 6).unwrap();
        assert!(m.check_compatibility().unwrap().pass);
        assert!(m.check_integrability().unwrap().pass);
    }

    #[test]
    fn scalar_fail_fixture() {
        let ctx = ctx(6);
        let s = FrobeniusLift::standard(&ctx);
        let a = scalar_mat(&ctx, FakeSeries::from_int(&ctx, 5, 6));
        let n = vec![scalar_mat(&ctx, FakeSeries::from_int(&ctx, 1, 6)); 2];
        let m = DModule::new(s, a, Some(n)).unwrap();
        let r = m.check_compatibility().unwrap();
        assert!(!r.pass);
        assert_eq!(r.valuation, 1);
    }

    #[test]
    fn derived_connection_of_monomial() {
        let ctx = ctx(6);
        let s = FrobeniusLift::standard(&ctx);
        let a = scalar_mat(&ctx, FakeSeries::monomial(&ctx, &[2, 1], ctx.ring().one(6)));
        let m = DModule::new(s.clone(), a, None)
            .unwrap()
            .derive_connection()
            .unwrap();
        let expect = monomial_module(&s, &[2, 1], 6).unwrap();
        for (x, y) in m
            .connection()
            .unwrap()
            .iter()
            .zip(expect.connection().unwrap())
        {
            assert!(x.approx_eq(y));
        }
    }

    #[test]
    fn change_of_frobenius_binomial() {
        let ctx = ctx(6);
        let r = ctx.ring().clone();
        let s1 = FrobeniusLift::standard(&ctx);
        let s2 =
            FrobeniusLift::scaled_standard(&ctx, &[r.from_int(6, 6), r.from_int(6, 6)]).unwrap();
        let a = scalar_mat(&ctx, FakeSeries::from_int(&ctx, 3, 6));
        let n = vec![
            scalar_mat(&ctx, FakeSeries::from_int(&ctx, 2, 6)),
            scalar_mat(&ctx, FakeSeries::from_int(&ctx, -1, 6)),
        ];
        let m = DModule::new(s1.clone(), a, Some(n)).unwrap();
        let m2 = m.change_frobenius(&s2).unwrap();
        // 3·6²·6⁻¹ = 18
        assert!(m2
            .a()
            .get(0, 0)
            .approx_eq(&FakeSeries::from_int(&ctx, 18, 6)));
        assert!(m2
            .a()
            .get(0, 0)
            .approx_eq(&FakeSeries::from_int(&ctx, 18, 6)));
        let back = m2.change_frobenius(&s1).unwrap();
        assert!(back.a().approx_eq(m.a()));
        let mm = monomial_module(&s1, &[1, -1], 6).unwrap();
        let mm2 = mm.change_frobenius(&s2).unwrap();
        assert!(mm2.check_compatibility().unwrap().pass);
        assert!(mm2.change_frobenius(&s1).unwrap().a().approx_eq(mm.a()));
    }

    #[test]
    fn pushforward_pullback_adjunction() {
        let ctx = ctx(6);
        let s = FrobeniusLift::standard(&ctx);
        let m = monomial_module(&s, &[1, 0], 6).unwrap();
        let m2 = m.pushforward(2).unwrap();
        assert!(m2.check_compatibility().unwrap().pass);
        let back = m2.pullback(2).unwrap();
        assert!(back.check_compatibility().unwrap().pass);
        let round = back.pushforward(2).unwrap();
        assert!(round.a().get(0, 0).approx_eq(m2.a().get(0, 0)));
    }

    #[test]
    fn wedge_and_dual() {
        let ctx = ctx(6);
        let s = FrobeniusLift::standard(&ctx);
        let a1 = monomial_module(&s, &[1, 0], 6).unwrap();
        let a2 = monomial_module(&s, &[0, 1], 6).unwrap();
        let t = a1.tensor(&a2).unwrap();
        assert!(t.check_compatibility().unwrap().pass);
        let d = t.dual().unwrap();
        assert!(d.check_compatibility().unwrap().pass);
        let big = a1.twist(1).tensor(&DModule::trivial(&s, 2, 6)).unwrap();
        let w = big.wedge(2).unwrap();
        assert_eq!(w.rank(), 1);
        assert_eq!(w.degree_slope().unwrap().0, 2);
    }

    #[test]
    fn falling_factorial_binomials() {
        let ctx = ctx(6);
        let s = FrobeniusLift::standard(&ctx);
        let a = scalar_mat(&ctx, FakeSeries::one(&ctx, 6));
        let n = vec![
            scalar_mat(&ctx, FakeSeries::from_int(&ctx, 7, 6)),
            scalar_mat(&ctx, FakeSeries::from_int(&ctx, 4, 6)),
        ];
        let m = DModule::new(s, a, Some(n)).unwrap();
        let v = vec![FakeSeries::one(&ctx, 6)];
        let d = m.delta_falling(&[2, 3], &v).unwrap();
        // 7·6·4·3·2
        assert!(d[0].approx_eq(&FakeSeries::from_int(&ctx, 7 * 6 * 4 * 3 * 2, 6)));
        assert_eq!(legendre(25, 5), 6);
    }
}

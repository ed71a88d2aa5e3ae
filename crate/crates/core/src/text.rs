//! Parsing of scalar and series text.
//!
//! Scalars: integers, rationals `n/d`, powers `p^e` (negative `e` allowed),
//! the generator `a`, parentheses, `+ - *`, and an optional `mod p^N` suffix.
//! Series: terms `<scalar> * {(z1,...,zm)}` or bare scalars, joined by `+`/`-`,
//! optionally preceded by `prec{N=.., lambdaHi=.., lambdaLo=..}`.

use std::sync::Arc;

use crate::coeffring::{CoeffRing, Padic};
use crate::error::{Error, Result};
use crate::monoval::{LambdaBound, Point};
use crate::series::{Context, FakeSeries};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(i128),
    Gen,
    Mod,
    Sym(char),
}

fn tokenize(s: &str) -> Result<Vec<Tok>> {
    let mut out = Vec::new();
    let chars: Vec<char> = s.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            let n = text
                .parse::<i128>()
                .map_err(|_| Error::Parse(format!("integer `{text}` out of range")))?;
            out.push(Tok::Num(n));
        } else if c.is_ascii_alphabetic() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_alphanumeric() {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            match word.as_str() {
                "a" => out.push(Tok::Gen),
                "mod" => out.push(Tok::Mod),
                _ => return Err(Error::Parse(format!("unknown identifier `{word}`"))),
            }
        } else if "+-*/^(){},".contains(c) {
            out.push(Tok::Sym(c));
            i += 1;
        } else {
            return Err(Error::Parse(format!("unexpected character `{c}`")));
        }
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<Tok>,
    pos: usize,
    ring: &'a CoeffRing,
    prec: i32,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn peek2(&self) -> Option<&Tok> {
        self.toks.get(self.pos + 1)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Sym(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(Error::Parse(format!(
                "expected `{c}` at token {}",
                self.pos
            )))
        }
    }

    fn int(&mut self) -> Result<i128> {
        let neg = self.eat('-');
        match self.next() {
            Some(Tok::Num(n)) => Ok(if neg { -n } else { n }),
            _ => Err(Error::Parse("expected integer".into())),
        }
    }

    fn work_prec(&self) -> i32 {
        self.prec + self.ring.cap()
    }

    /// expr := ['-'] prod (('+'|'-') prod)*
    fn expr(&mut self) -> Result<Padic> {
        let neg = self.eat('-');
        let mut acc = self.prod()?;
        if neg {
            acc = self.ring.neg(&acc);
        }
        loop {
            if self.eat('+') {
                let neg = self.eat('-');
                let t = self.prod()?;
                acc = if neg {
                    self.ring.sub(&acc, &t)
                } else {
                    self.ring.add(&acc, &t)
                };
            } else if self.eat('-') {
                let t = self.prod()?;
                acc = self.ring.sub(&acc, &t);
            } else {
                return Ok(acc);
            }
        }
    }

    /// prod := factor ('*' factor)*, stopping before `* {`.
    fn prod(&mut self) -> Result<Padic> {
        let mut acc = self.factor()?;
        while self.peek() == Some(&Tok::Sym('*')) && self.peek2() != Some(&Tok::Sym('{')) {
            self.pos += 1;
            let f = self.factor()?;
            acc = self.ring.mul(&acc, &f);
        }
        Ok(acc)
    }

    fn factor(&mut self) -> Result<Padic> {
        let prec = self.work_prec();
        let base = match self.next() {
            Some(Tok::Num(n)) => {
                if self.eat('/') {
                    let d = match self.next() {
                        Some(Tok::Num(d)) if d != 0 => d,
                        _ => return Err(Error::Parse("bad denominator".into())),
                    };
                    return self.ring.from_rational(n, d, prec);
                }
                if self.eat('^') {
                    let e = self.int()?;
                    return self.int_power(n, e);
                }
                self.ring.from_rational(n, 1, prec)?
            }
            Some(Tok::Gen) => self.ring.gen(prec),
            Some(Tok::Sym('(')) => {
                let v = self.expr()?;
                self.expect(')')?;
                v
            }
            Some(Tok::Sym('-')) => {
                let v = self.factor()?;
                return Ok(self.ring.neg(&v));
            }
            other => return Err(Error::Parse(format!("unexpected token {other:?}"))),
        };
        if self.eat('^') {
            let e = self.int()?;
            let e = i64::try_from(e).map_err(|_| Error::Parse("exponent out of range".into()))?;
            return self.ring.pow(&base, e);
        }
        Ok(base)
    }

    fn int_power(&self, n: i128, e: i128) -> Result<Padic> {
        let prec = self.work_prec();
        let e = i32::try_from(e).map_err(|_| Error::Parse("exponent out of range".into()))?;
        if n == self.ring.p() as i128 {
            return Ok(self.ring.shift(&self.ring.one(prec), e));
        }
        let b = self.ring.from_rational(n, 1, prec)?;
        self.ring.pow(&b, e as i64)
    }

    /// Optional `mod p^N`; returns N.
    fn modulus(&mut self) -> Result<Option<i32>> {
        if self.peek() != Some(&Tok::Mod) {
            return Ok(None);
        }
        self.pos += 1;
        let p = self.int()?;
        if p != self.ring.p() as i128 {
            return Err(Error::Parse(format!(
                "modulus base {p} is not the residue characteristic"
            )));
        }
        self.expect('^')?;
        let n = self.int()?;
        Ok(Some(i32::try_from(n).map_err(|_| {
            Error::Parse("precision out of range".into())
        })?))
    }

    fn monomial(&mut self, m: usize) -> Result<Point> {
        self.expect('{')?;
        self.expect('(')?;
        let mut z = Point::new();
        loop {
            let c = self.int()?;
            z.push(i64::try_from(c).map_err(|_| Error::Parse("exponent out of range".into()))?);
            if self.eat(')') {
                break;
            }
            self.expect(',')?;
        }
        self.expect('}')?;
        if z.len() != m {
            return Err(Error::Parse(format!(
                "lattice point of rank {} in a rank {m} context",
                z.len()
            )));
        }
        Ok(z)
    }

    fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }
}

/// Parse a scalar at absolute precision `prec` (a `mod p^N` suffix can lower it).
pub fn parse_scalar(ring: &Arc<CoeffRing>, s: &str, prec: i32) -> Result<Padic> {
    let mut p = Parser {
        toks: tokenize(s)?,
        pos: 0,
        ring,
        prec,
    };
    let v = p.expr()?;
    let n = p.modulus()?.map_or(prec, |n| n.min(prec));
    if !p.at_end() {
        return Err(Error::Parse(format!("trailing input in `{s}`")));
    }
    Ok(ring.truncate(&v, n))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeriesHeader {
    pub prec: Option<i32>,
    pub hi: Option<LambdaBound>,
    pub lo: Option<LambdaBound>,
}

fn split_header(ctx: &Context, s: &str) -> Result<(SeriesHeader, String)> {
    let t = s.trim_start();
    let mut header = SeriesHeader {
        prec: None,
        hi: None,
        lo: None,
    };
    let Some(rest) = t.strip_prefix("prec{") else {
        return Ok((header, s.to_string()));
    };
    let close = rest
        .find('}')
        .ok_or_else(|| Error::Parse("unterminated header".into()))?;
    for field in rest[..close].split(',') {
        let (k, v) = field
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("bad header field `{field}`")))?;
        match k.trim() {
            "N" => {
                header.prec = Some(
                    v.trim()
                        .parse()
                        .map_err(|_| Error::Parse(format!("bad N `{v}`")))?,
                )
            }
            "lambdaHi" => header.hi = Some(ctx.valuation().parse_bound(v)?),
            "lambdaLo" => header.lo = Some(ctx.valuation().parse_bound(v)?),
            other => return Err(Error::Parse(format!("unknown header field `{other}`"))),
        }
    }
    Ok((header, rest[close + 1..].to_string()))
}

/// Parse a series.  Header values override `prec`; without a header the
/// series is exact (λ-window unbounded).
pub fn parse_series(ctx: &Arc<Context>, s: &str, prec: i32) -> Result<FakeSeries> {
    let (header, body) = split_header(ctx, s)?;
    let prec = header.prec.unwrap_or(prec);
    let ring = ctx.ring().clone();
    let mut p = Parser {
        toks: tokenize(&body)?,
        pos: 0,
        ring: &ring,
        prec,
    };
    let mut terms: Vec<(Point, Padic)> = Vec::new();
    let mut term_prec = prec;
    if !p.at_end() {
        let mut neg = p.eat('-');
        loop {
            let (z, c) = if p.peek() == Some(&Tok::Sym('{')) {
                (p.monomial(ctx.rank())?, ring.one(p.work_prec()))
            } else {
                let c = p.prod()?;
                if let Some(n) = p.modulus()? {
                    term_prec = term_prec.min(n);
                }
                let z = if p.eat('*') {
                    p.monomial(ctx.rank())?
                } else {
                    ctx.zero_point()
                };
                (z, c)
            };
            terms.push((z, if neg { ring.neg(&c) } else { c }));
            if p.eat('+') {
                neg = p.eat('-');
            } else if p.eat('-') {
                neg = true;
            } else {
                break;
            }
        }
    }
    if !p.at_end() {
        return Err(Error::Parse(format!(
            "trailing input in series `{}`",
            s.trim()
        )));
    }
    let mut x = FakeSeries::from_terms(ctx, terms, term_prec);
    let hi = header.hi.unwrap_or(LambdaBound::PosInf);
    let lo = header.lo.unwrap_or(LambdaBound::NegInf);
    if hi.is_finite() || lo.is_finite() {
        x = x.restrict_window(&lo, &hi);
    }
    Ok(x)
}

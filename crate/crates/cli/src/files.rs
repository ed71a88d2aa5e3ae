//! Problem-file schema and conversion to library objects.

use std::sync::Arc;

use fake_annulus::monoval::parse_rational_str;
use fake_annulus::text::parse_series;
use fake_annulus::{
    AlgebraicReal, CoeffRing, CoeffRingParams, Context, DModule, FakeSeries, FrobeniusLift,
    H1Class, MonomialValuation, SeriesMatrix,
};
use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoeffSpec {
    pub p: u64,
    pub prec: i32,
    /// residue degree; ignored when `modulus` is given
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<usize>,
    /// monic modulus, lowest degree first
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modulus: Option<Vec<i64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frobenius_power: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlphaSpec {
    pub minpoly: Vec<i64>,
    pub interval: [String; 2],
}

/// One λ(z_i): either `[["1","0"]]` or the flat `["1","0"]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightSpec {
    Nested(Vec<Vec<String>>),
    Flat(Vec<String>),
}

impl WeightSpec {
    fn coords(&self) -> Result<Vec<String>, CliError> {
        match self {
            WeightSpec::Flat(v) => Ok(v.clone()),
            WeightSpec::Nested(v) if v.len() == 1 => Ok(v[0].clone()),
            WeightSpec::Nested(_) => Err(CliError::Schema(
                "nested weight must hold exactly one coordinate list".into(),
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValuationSpec {
    pub m: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<AlphaSpec>,
    pub weights: Vec<WeightSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LiftSpec {
    Standard { standard: bool },
    Images { images: Vec<String> },
}

impl Default for LiftSpec {
    fn default() -> Self {
        LiftSpec::Standard { standard: true }
    }
}

/// Union of the module, class and element file layouts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub coeff: CoeffSpec,
    pub valuation: ValuationSpec,
    #[serde(default)]
    pub lift: LiftSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    #[serde(rename = "A", default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<Vec<String>>>,
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub n: Option<Vec<Vec<Vec<String>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub element: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_lift: Option<LiftSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<i64>>,
    /// Gauss radii "a/b" for `valuate`
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radii: Option<Vec<String>>,
}

/// Everything built from a parsed file.
pub struct Loaded {
    pub file: ProblemFile,
    pub ctx: Arc<Context>,
    pub lift: FrobeniusLift,
}

fn require<'a, T>(v: &'a Option<T>, field: &str) -> Result<&'a T, CliError> {
    v.as_ref()
        .ok_or_else(|| CliError::Schema(format!("missing field \"{field}\"")))
}

pub fn parse_file(text: &str) -> Result<ProblemFile, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::Schema(e.to_string()))
}

pub fn build_ring(
    spec: &CoeffSpec,
    prec_override: Option<i32>,
) -> Result<Arc<CoeffRing>, CliError> {
    let prec = prec_override.unwrap_or(spec.prec);
    let mut params = match (&spec.modulus, spec.f) {
        (Some(m), _) => CoeffRingParams {
            p: spec.p,
            modulus: m.clone(),
            prec,
            frobenius_power: None,
        },
        (None, Some(f)) => CoeffRingParams::unramified(spec.p, f, prec),
        (None, None) => CoeffRingParams::prime_field(spec.p, prec),
    };
    params.frobenius_power = spec.frobenius_power;
    CoeffRing::new(params).map_err(CliError::input)
}

pub fn build_valuation(spec: &ValuationSpec) -> Result<MonomialValuation, CliError> {
    if spec.weights.len() != spec.m {
        return Err(CliError::Schema(format!(
            "valuation has m = {} but {} weights",
            spec.m,
            spec.weights.len()
        )));
    }
    let alpha = match &spec.alpha {
        Some(a) => Some(
            AlgebraicReal::new(a.minpoly.clone(), &a.interval[0], &a.interval[1])
                .map_err(CliError::input)?,
        ),
        None => None,
    };
    let mut weights = Vec::with_capacity(spec.m);
    for w in &spec.weights {
        let coords: Vec<BigRational> = w
            .coords()?
            .iter()
            .map(|s| parse_rational_str(s))
            .collect::<Result<_, _>>()
            .map_err(CliError::input)?;
        weights.push(coords);
    }
    MonomialValuation::new(alpha, weights).map_err(CliError::input)
}

pub fn build_lift(ctx: &Arc<Context>, spec: &LiftSpec) -> Result<FrobeniusLift, CliError> {
    match spec {
        LiftSpec::Standard { standard: true } => Ok(FrobeniusLift::standard(ctx)),
        LiftSpec::Standard { standard: false } => Err(CliError::Schema(
            "lift must be standard or give images".into(),
        )),
        LiftSpec::Images { images } => {
            let imgs = images
                .iter()
                .map(|s| series(ctx, s))
                .collect::<Result<Vec<_>, _>>()?;
            FrobeniusLift::from_images(ctx, imgs).map_err(CliError::input)
        }
    }
}

pub fn load(file: ProblemFile, prec_override: Option<i32>) -> Result<Loaded, CliError> {
    let ring = build_ring(&file.coeff, prec_override)?;
    let val = build_valuation(&file.valuation)?;
    let ctx = Context::new(ring, Arc::new(val));
    let lift = build_lift(&ctx, &file.lift)?;
    Ok(Loaded { file, ctx, lift })
}

pub fn series(ctx: &Arc<Context>, s: &str) -> Result<FakeSeries, CliError> {
    parse_series(ctx, s, ctx.prec()).map_err(CliError::input)
}

fn matrix(
    ctx: &Arc<Context>,
    rows: &[Vec<String>],
    rank: usize,
    what: &str,
) -> Result<SeriesMatrix, CliError> {
    if rows.len() != rank || rows.iter().any(|r| r.len() != rank) {
        return Err(CliError::Schema(format!("{what} must be {rank}×{rank}")));
    }
    let parsed = rows
        .iter()
        .map(|r| {
            r.iter()
                .map(|s| series(ctx, s))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    SeriesMatrix::from_rows(parsed).map_err(CliError::input)
}

impl Loaded {
    pub fn element(&self) -> Result<FakeSeries, CliError> {
        series(&self.ctx, require(&self.file.element, "element")?)
    }

    /// The module without running the compatibility checks.
    pub fn module(&self) -> Result<DModule, CliError> {
        let rank = *require(&self.file.rank, "rank")?;
        let a = matrix(&self.ctx, require(&self.file.a, "A")?, rank, "A")?;
        let n = match &self.file.n {
            Some(ns) => {
                if ns.len() != self.ctx.rank() {
                    return Err(CliError::Schema(format!(
                        "N must list {} matrices, one per lattice coordinate",
                        self.ctx.rank()
                    )));
                }
                Some(
                    ns.iter()
                        .map(|m| matrix(&self.ctx, m, rank, "N_i"))
                        .collect::<Result<Vec<_>, _>>()?,
                )
            }
            None => None,
        };
        DModule::new(self.lift.clone(), a, n).map_err(CliError::input)
    }

    pub fn require_connection(&self) -> Result<(), CliError> {
        require(&self.file.n, "N").map(|_| ())
    }

    pub fn class(&self) -> Result<H1Class, CliError> {
        let d = *require(&self.file.d, "d")?;
        let a = matrix(&self.ctx, require(&self.file.a, "A")?, 1, "A")?;
        let omega = require(&self.file.omega, "omega")?
            .iter()
            .map(|s| series(&self.ctx, s))
            .collect::<Result<Vec<_>, _>>()?;
        H1Class::new(d, a.get(0, 0).clone(), omega).map_err(CliError::input)
    }

    pub fn target_lift(&self) -> Result<FrobeniusLift, CliError> {
        build_lift(&self.ctx, require(&self.file.target_lift, "target_lift")?)
    }
}

/// Series text with its precision and finite window bounds.
pub fn series_text(x: &FakeSeries) -> String {
    let val = x.valuation();
    let mut fields = vec![format!("N={}", x.prec())];
    if x.lambda_hi().is_finite() {
        fields.push(format!("lambdaHi={}", val.format_bound(x.lambda_hi())));
    }
    if x.lambda_lo().is_finite() {
        fields.push(format!("lambdaLo={}", val.format_bound(x.lambda_lo())));
    }
    format!("prec{{{}}} {}", fields.join(", "), x.to_text())
}

pub fn matrix_text(m: &SeriesMatrix) -> Vec<Vec<String>> {
    m.rows()
        .iter()
        .map(|r| r.iter().map(series_text).collect())
        .collect()
}

fn rational_text(r: &BigRational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub fn coeff_spec(ring: &CoeffRing) -> CoeffSpec {
    let params = ring.params();
    CoeffSpec {
        p: params.p,
        prec: params.prec,
        f: None,
        modulus: Some(params.modulus),
        frobenius_power: params.frobenius_power,
    }
}

pub fn valuation_spec(v: &MonomialValuation) -> ValuationSpec {
    let degree = v.field_degree();
    let alpha = v.alpha().map(|a| {
        let (lo, hi) = a.interval();
        AlphaSpec {
            minpoly: a
                .minpoly()
                .iter()
                .map(|c| i64::try_from(c).expect("minimal polynomial coefficient fits i64"))
                .collect(),
            interval: [rational_text(lo), rational_text(hi)],
        }
    });
    let weights = v
        .weights()
        .iter()
        .map(|w| {
            let mut c: Vec<String> = w.coords().iter().map(rational_text).collect();
            c.resize(degree, "0".into());
            WeightSpec::Nested(vec![c])
        })
        .collect();
    ValuationSpec {
        m: v.rank(),
        alpha,
        weights,
    }
}

pub fn lift_spec(lift: &FrobeniusLift, prec: i32) -> LiftSpec {
    if lift.is_standard() {
        LiftSpec::default()
    } else {
        LiftSpec::Images {
            images: lift.images(prec).iter().map(series_text).collect(),
        }
    }
}

/// Module file for `m` in the same context.
pub fn module_file(m: &DModule) -> ProblemFile {
    let ctx = m.ctx();
    ProblemFile {
        coeff: coeff_spec(ctx.ring()),
        valuation: valuation_spec(ctx.valuation()),
        lift: lift_spec(m.lift(), ctx.prec()),
        rank: Some(m.rank()),
        a: Some(matrix_text(m.a())),
        n: m.connection()
            .map(|ns| ns.iter().map(matrix_text).collect()),
        d: None,
        omega: None,
        element: None,
        target_lift: None,
        mu: None,
        radii: None,
    }
}

/// Canonical form: every field parsed and re-serialized.
pub fn canonicalize(file: &ProblemFile) -> Result<ProblemFile, CliError> {
    let loaded = load(file.clone(), None)?;
    let ctx = &loaded.ctx;
    let prec = ctx.prec();
    let reprint = |rows: &Vec<Vec<String>>| -> Result<Vec<Vec<String>>, CliError> {
        rows.iter()
            .map(|r| {
                r.iter()
                    .map(|s| series(ctx, s).map(|x| series_text(&x)))
                    .collect()
            })
            .collect()
    };
    Ok(ProblemFile {
        coeff: coeff_spec(ctx.ring()),
        valuation: valuation_spec(ctx.valuation()),
        lift: lift_spec(&loaded.lift, prec),
        rank: file.rank,
        a: file.a.as_ref().map(reprint).transpose()?,
        n: file
            .n
            .as_ref()
            .map(|ns| ns.iter().map(reprint).collect::<Result<Vec<_>, _>>())
            .transpose()?,
        d: file.d,
        omega: file
            .omega
            .as_ref()
            .map(|v| {
                v.iter()
                    .map(|s| series(ctx, s).map(|x| series_text(&x)))
                    .collect()
            })
            .transpose()?,
        element: file
            .element
            .as_ref()
            .map(|s| series(ctx, s).map(|x| series_text(&x)))
            .transpose()?,
        target_lift: file
            .target_lift
            .as_ref()
            .map(|l| build_lift(ctx, l).map(|l| lift_spec(&l, prec)))
            .transpose()?,
        mu: file.mu.clone(),
        radii: file.radii.clone(),
    })
}

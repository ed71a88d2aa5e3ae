//! Command dispatch.

use fake_annulus::cohomology::{h1_final_form, h1_reduce, verify_transcript, H1Reduction};
use fake_annulus::dmodule::DModule;
use fake_annulus::residue::{
    as_reduce, as_reduce_extended, as_reduce_within, positioning_bound_of, ASReduction,
};
use fake_annulus::solver::{decimate_full, decimate_mu, trivialize_extended, trivialize_unit_root};
use fake_annulus::{Error, GaugeReport, H1FinalForm, LambdaBound, ResidualReport, ResidueSeries};
use serde::Serialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::error::CliError;
use crate::files::{self, matrix_text, module_file, series_text, Loaded};

/// Iteration budget handed to the decimation solvers.
pub const DECIMATE_BUDGET: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Valuate,
    Check,
    DeriveConnection,
    ChangeFrobenius,
    Decimate,
    Trivialize,
    AsReduce,
    H1Reduce,
    Slope,
}

#[derive(Clone, Debug, Default)]
pub struct JobOptions {
    pub prec: Option<i32>,
    pub lambda_hi: Option<String>,
    pub seed: Option<u64>,
    pub extend_residue: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Ok,
    Obstruction,
    PrecisionExhausted,
    Error,
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub command: Command,
    pub version: &'static str,
    pub input: String,
    pub input_sha256: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub status: Status,
    /// computed fields; partial when status is precision-exhausted
    pub result: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip)]
    pub exit_code: i32,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Runs one command on the contents of one input file.
pub fn run_job(command: Command, input_name: &str, input: &str, opts: &JobOptions) -> Report {
    let mut out = Map::new();
    let outcome = dispatch(command, input, opts, &mut out);
    let (status, error, exit_code) = match outcome {
        Ok(s) => (s, None, 0),
        Err(e) => {
            let status = if e.exit_code() == 3 {
                Status::PrecisionExhausted
            } else {
                Status::Error
            };
            (status, Some(e.to_string()), e.exit_code())
        }
    };
    Report {
        command,
        version: fake_annulus::VERSION,
        input: input_name.to_string(),
        input_sha256: sha256_hex(input.as_bytes()),
        seed: opts.seed,
        status,
        result: Value::Object(out),
        error,
        exit_code,
    }
}

fn dispatch(
    command: Command,
    input: &str,
    opts: &JobOptions,
    out: &mut Map<String, Value>,
) -> Result<Status, CliError> {
    let file = files::parse_file(input)?;
    let loaded = files::load(file, opts.prec)?;
    out.insert("prec".into(), json!(loaded.ctx.prec()));
    match command {
        Command::Valuate => valuate(&loaded, opts, out),
        Command::Check => check(&loaded, out),
        Command::DeriveConnection => derive(&loaded, out),
        Command::ChangeFrobenius => change_frobenius(&loaded, out),
        Command::Decimate => decimate(&loaded, out),
        Command::Trivialize => trivialize(&loaded, opts, out),
        Command::AsReduce => reduce(&loaded, opts, out),
        Command::H1Reduce => h1(&loaded, opts, out),
        Command::Slope => slope(&loaded, out),
    }
}

fn window(loaded: &Loaded, opts: &JobOptions) -> Result<LambdaBound, CliError> {
    match &opts.lambda_hi {
        Some(s) => loaded
            .ctx
            .valuation()
            .parse_bound(s)
            .map_err(CliError::input),
        None => Ok(LambdaBound::PosInf),
    }
}

fn residual_json(r: &ResidualReport) -> Value {
    json!({"pass": r.pass, "valuation": r.valuation, "precision": r.precision})
}

fn checks(m: &DModule, out: &mut Map<String, Value>) -> Result<bool, CliError> {
    let c = m.check_compatibility()?;
    out.insert("compatibility".into(), residual_json(&c));
    let i = m.check_integrability()?;
    out.insert("integrability".into(), residual_json(&i));
    Ok(c.pass && i.pass)
}

fn valuate(
    loaded: &Loaded,
    opts: &JobOptions,
    out: &mut Map<String, Value>,
) -> Result<Status, CliError> {
    let x = loaded.element()?;
    let val = loaded.ctx.valuation();
    let x = match &opts.lambda_hi {
        Some(_) => x.truncate_lambda(&window(loaded, opts)?),
        None => x,
    };
    out.insert("element".into(), json!(series_text(&x)));
    out.insert("w".into(), json!(x.w()));
    out.insert("v_lambda".into(), json!(val.format_bound(&x.v_lambda())));
    let radii = loaded
        .file
        .radii
        .clone()
        .unwrap_or_else(|| vec!["1".into()]);
    let mut gauss = Vec::new();
    for r in &radii {
        let (a, b) = parse_ratio(r)?;
        let g = x.gauss_valuation(a, b)?;
        gauss.push(json!({
            "radius": r,
            "value": val.format_value(&g.value),
            "digit": g.digit,
            "certified": g.certified,
        }));
        out.insert("gauss".into(), Value::Array(gauss.clone()));
    }
    let mut naive = Vec::new();
    for n in 0..x.prec() {
        let v = x.naive_partial_valuation(n)?;
        naive.push(json!({"n": n, "value": val.format_bound(&v)}));
        out.insert(
            "naive_partial_valuations".into(),
            Value::Array(naive.clone()),
        );
    }
    Ok(Status::Ok)
}

fn parse_ratio(s: &str) -> Result<(i128, i128), CliError> {
    let bad = || CliError::Schema(format!("radius \"{s}\" is not a positive rational a/b"));
    let (a, b) = match s.split_once('/') {
        Some((a, b)) => (a.trim(), b.trim()),
        None => (s.trim(), "1"),
    };
    let a: i128 = a.parse().map_err(|_| bad())?;
    let b: i128 = b.parse().map_err(|_| bad())?;
    if a <= 0 || b <= 0 {
        return Err(bad());
    }
    Ok((a, b))
}

fn check(loaded: &Loaded, out: &mut Map<String, Value>) -> Result<Status, CliError> {
    loaded.require_connection()?;
    let m = loaded.module()?;
    let pass = checks(&m, out)?;
    out.insert("pass".into(), json!(pass));
    Ok(Status::Ok)
}

fn derive(loaded: &Loaded, out: &mut Map<String, Value>) -> Result<Status, CliError> {
    let m = loaded.module()?.derive_connection()?;
    out.insert("module".into(), to_value(&module_file(&m)));
    let pass = checks(&m, out)?;
    out.insert("pass".into(), json!(pass));
    Ok(Status::Ok)
}

fn change_frobenius(loaded: &Loaded, out: &mut Map<String, Value>) -> Result<Status, CliError> {
    loaded.require_connection()?;
    let target = loaded.target_lift()?;
    let m = loaded.module()?.change_frobenius(&target)?;
    out.insert("module".into(), to_value(&module_file(&m)));
    let pass = checks(&m, out)?;
    out.insert("pass".into(), json!(pass));
    Ok(Status::Ok)
}

fn decimate(loaded: &Loaded, out: &mut Map<String, Value>) -> Result<Status, CliError> {
    loaded.require_connection()?;
    let m = loaded.module()?;
    let report = match &loaded.file.mu {
        Some(mu) => {
            out.insert("mu".into(), json!(mu));
            decimate_mu(&m.n_mu(mu)?, mu, DECIMATE_BUDGET)?
        }
        None => decimate_full(&m, DECIMATE_BUDGET)?,
    };
    out.insert("gauge".into(), gauge_json(&report));
    Ok(gauge_status(&report))
}

fn trivialize(
    loaded: &Loaded,
    opts: &JobOptions,
    out: &mut Map<String, Value>,
) -> Result<Status, CliError> {
    let m = loaded.module()?;
    let target = m.prec();
    out.insert("target".into(), json!(target));
    let report = match opts.extend_residue {
        Some(s) => {
            out.insert("extend_residue".into(), json!(s));
            let (big, r) = trivialize_extended(&m, target, s)?;
            out.insert(
                "extended_coeff".into(),
                to_value(&files::coeff_spec(big.ctx().ring())),
            );
            r
        }
        None => trivialize_unit_root(&m, target)?,
    };
    out.insert("gauge".into(), gauge_json(&report));
    Ok(gauge_status(&report))
}

fn reduce(
    loaded: &Loaded,
    opts: &JobOptions,
    out: &mut Map<String, Value>,
) -> Result<Status, CliError> {
    let x = ResidueSeries::reduce(&loaded.element()?)?;
    out.insert("input".into(), json!(x.to_text()));
    let red = match opts.extend_residue {
        Some(s) => {
            let (ctx, red) = as_reduce_extended(&x, s)?;
            out.insert("extend_residue".into(), json!(s));
            out.insert(
                "extended_coeff".into(),
                to_value(&files::coeff_spec(ctx.ring())),
            );
            red
        }
        None => match &opts.lambda_hi {
            Some(_) => as_reduce_within(&x, &window(loaded, opts)?)?,
            None => as_reduce(&x)?,
        },
    };
    out.insert(
        "unchanged".into(),
        json!(opts.extend_residue.is_none() && red.canonical == x),
    );
    out.insert("reduction".into(), reduction_json(&red)?);
    Ok(Status::Ok)
}

fn reduction_json(red: &ASReduction) -> Result<Value, CliError> {
    let val = red.canonical.ctx().valuation();
    let bound = match positioning_bound_of(&red.canonical) {
        Ok(pb) => json!({"c": val.format_value(&pb.c), "witness": pb.witness.to_vec()}),
        Err(Error::NoObstruction(_)) => Value::Null,
        Err(e) => return Err(e.into()),
    };
    Ok(json!({
        "canonical": red.canonical.to_text(),
        "certificate": red.certificate.to_text(),
        "solvable_constant": red.solvable_constant,
        "note": red.obstruction_note,
        "positioning_bound": bound,
    }))
}

fn h1(
    loaded: &Loaded,
    opts: &JobOptions,
    out: &mut Map<String, Value>,
) -> Result<Status, CliError> {
    let cls = loaded.class()?;
    out.insert("cocycle".into(), json!(cls.is_cocycle(&loaded.lift)?));
    let red = h1_reduce(&loaded.lift, &cls, &window(loaded, opts)?)?;
    let verified = verify_transcript(&loaded.lift, &cls, &red)?;
    out.insert("reduction".into(), h1_json(&red, verified));
    match h1_final_form(&loaded.lift, &red.class) {
        Ok((form, tail)) => {
            let ring = loaded.ctx.ring();
            let form = match form {
                H1FinalForm::ZeroWitness { w } => json!({"kind": "zero", "w": series_text(&w)}),
                H1FinalForm::JCoordinates(cs) => {
                    json!({"kind": "j-coordinates", "coordinates": cs.iter().map(|c| ring.format(c)).collect::<Vec<_>>()})
                }
                H1FinalForm::NontrivialAtPrecision { reason } => {
                    json!({"kind": "nontrivial", "reason": reason})
                }
            };
            out.insert("final_form".into(), form);
            out.insert("final_steps".into(), steps_json(&tail));
        }
        Err(Error::Precondition(msg)) => {
            out.insert(
                "final_form".into(),
                json!({"kind": "unavailable", "reason": msg}),
            );
        }
        Err(e) => return Err(e.into()),
    }
    Ok(Status::Ok)
}

fn steps_json(steps: &[fake_annulus::cohomology::ReductionStep]) -> Value {
    steps
        .iter()
        .map(|s| json!({"label": s.label, "w": series_text(&s.w)}))
        .collect()
}

fn h1_json(red: &H1Reduction, verified: bool) -> Value {
    json!({
        "class": {
            "d": red.class.d,
            "a": series_text(&red.class.a),
            "omega": red.class.omega.iter().map(series_text).collect::<Vec<_>>(),
        },
        "transcript": steps_json(&red.transcript),
        "transcript_verified": verified,
        "complete": red.complete,
        "notes": red.notes,
    })
}

fn slope(loaded: &Loaded, out: &mut Map<String, Value>) -> Result<Status, CliError> {
    let m = loaded.module()?;
    let (deg, slope) = m.degree_slope()?;
    out.insert("rank".into(), json!(m.rank()));
    out.insert("degree".into(), json!(deg));
    out.insert("slope".into(), json!(slope.to_string()));
    Ok(Status::Ok)
}

fn gauge_status(r: &GaugeReport) -> Status {
    if r.obstruction.is_some() {
        Status::Obstruction
    } else {
        Status::Ok
    }
}

fn gauge_json(r: &GaugeReport) -> Value {
    let obstruction = r.obstruction.as_ref().map(|o| {
        let entries: Vec<Value> = o
            .entries
            .iter()
            .map(|e| {
                let red = reduction_json(&e.reduction)
                    .unwrap_or_else(|err| json!({"error": err.to_string()}));
                json!({"row": e.row, "col": e.col, "reduction": red})
            })
            .collect();
        json!({"level": o.level, "entries": entries})
    });
    json!({
        "u": matrix_text(&r.u),
        "residual_valuation": r.residual_valuation,
        "floor": r.floor,
        "support": r.support.iter().map(|s| format!("{s:?}")).collect::<Vec<_>>(),
        "complete": r.complete,
        "iterations": r.iterations,
        "radius": r.radius.map(|(a, b)| format!("{a}/{b}")),
        "transformed": r.transformed.as_ref().map(matrix_text),
        "module": r.module.as_ref().map(|m| to_value(&module_file(m))),
        "obstruction": obstruction,
        "notes": r.notes,
    })
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report fields serialize")
}

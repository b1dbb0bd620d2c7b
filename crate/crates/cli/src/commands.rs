use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, ValueEnum};
use k3lattice::borcherds::{
    flat_point_of_tube, lambert_log_derivative, line_restriction_qproduct, model_determinant, theta_kernel_eval,
    tube_frame,
};
use k3lattice::orbit::{canonicalize_root, sample_root};
use k3lattice::projection::{classify_wall, make_polarized_frame, mirror_picard};
use k3lattice::roots::{counting_series, enumerate_roots_with_pairing};
use k3lattice::{
    CountingSeries, FlatPoint, Frame, FrameU, LambertRate, Lattice, LatticeVector, ProductSeries, Root,
    SiegelParameter, WallLabel,
};
use nalgebra::DMatrix;
use num_bigint::BigInt;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::output::{int, ints, num, write_series_csv, RunReport};
use crate::{emit_series_csv, read_series_csv, Command, Failure, Settings, K3_SPEC};

/// Comma-separated integers.
#[derive(Debug, Clone, Serialize)]
#[serde(transparent)]
pub struct Ints(Vec<i64>);

/// Comma-separated reals.
#[derive(Debug, Clone, Serialize)]
#[serde(transparent)]
pub struct Reals(Vec<f64>);

fn coords(s: &str) -> Result<Ints, String> {
    s.split(',')
        .map(|t| t.trim().parse::<i64>().map_err(|e| format!("bad coordinate {t:?}: {e}")))
        .collect::<Result<_, _>>()
        .map(Ints)
}

fn pair_f64(s: &str) -> Result<(f64, f64), String> {
    match s.split(',').map(|t| t.trim().parse::<f64>()).collect::<Result<Vec<_>, _>>() {
        Ok(v) if v.len() == 2 => Ok((v[0], v[1])),
        _ => Err(format!("expected x,y but got {s:?}")),
    }
}

fn floats(s: &str) -> Result<Reals, String> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("bad number {t:?}: {e}")))
        .collect::<Result<_, _>>()
        .map(Reals)
}

#[derive(Debug, Args, Serialize)]
pub struct RootsArgs {
    #[arg(long)]
    lattice: String,
    /// Polarization coordinates, comma separated.
    #[arg(long, value_parser = coords, allow_hyphen_values = true)]
    l: Ints,
    #[arg(long, allow_hyphen_values = true)]
    n: i64,
    /// Include the roots themselves.
    #[arg(long)]
    emit_vectors: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct CountArgs {
    #[arg(long)]
    lattice: String,
    #[arg(long, value_parser = coords, allow_hyphen_values = true)]
    l: Ints,
    #[arg(long)]
    n_max: u64,
    /// Also write the series as CSV to this path.
    #[arg(long)]
    series_out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct CanonizeArgs {
    #[arg(long, default_value = K3_SPEC)]
    lattice: String,
    /// Root coordinates; without it a root is sampled from `--seed`.
    #[arg(long, value_parser = coords, allow_hyphen_values = true)]
    root: Option<Ints>,
    /// Word length bound for sampled roots.
    #[arg(long, default_value_t = 6)]
    max_len: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct GramDetArgs {
    #[arg(long)]
    p: usize,
    #[arg(long)]
    q: usize,
    /// JSON file holding the `p x q` matrix `tau`.
    #[arg(long)]
    tau: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ActArgs {
    #[arg(long, default_value = K3_SPEC)]
    lattice: String,
    /// JSON file holding the integral matrix of `gamma` (acting on columns).
    #[arg(long)]
    gamma: PathBuf,
    /// JSON file holding `tau` in the orthonormal frame of the lattice.
    #[arg(long)]
    tau: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ThetaArgs {
    #[arg(long)]
    lattice: String,
    /// JSON file holding `tau` in the orthonormal frame of the lattice.
    #[arg(long)]
    tau: PathBuf,
    /// `x,y` with `rho = x + i y`.
    #[arg(long, value_parser = pair_f64, allow_hyphen_values = true)]
    rho: (f64, f64),
    /// Majorant cutoff; overrides the shell cutoff of the config.
    #[arg(long)]
    cutoff: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct SeriesArgs {
    /// Series as CSV (`n,a_n`) or JSON (`{"a": {...}}` or a count report).
    #[arg(long)]
    series: PathBuf,
    #[arg(long)]
    t: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rate {
    TwoPi,
    Unit,
}

#[derive(Debug, Args, Serialize)]
pub struct LambertArgs {
    #[command(flatten)]
    #[serde(flatten)]
    series: SeriesArgs,
    #[arg(long, value_enum, default_value_t = Rate::TwoPi)]
    rate: Rate,
}

#[derive(Debug, Args, Serialize)]
pub struct ModelDetArgs {
    /// The lattice `L'` of the tube domain.
    #[arg(long)]
    lattice: String,
    #[arg(long, value_parser = coords, allow_hyphen_values = true)]
    l: Ints,
    #[arg(long, value_parser = floats, allow_hyphen_values = true)]
    re: Reals,
    #[arg(long, value_parser = floats, allow_hyphen_values = true)]
    im: Reals,
}

#[derive(Debug, Args, Serialize)]
pub struct ProjectArgs {
    #[arg(long)]
    n: i64,
    /// Root coordinates in `U^3 + E8(-1)^2`; without it a root is sampled from `--seed`.
    #[arg(long, value_parser = coords, allow_hyphen_values = true)]
    delta: Option<Ints>,
}

#[derive(Debug, Args, Serialize)]
pub struct MirrorArgs {
    #[arg(long, default_value = K3_SPEC)]
    lattice: String,
    /// JSON file holding a basis of `M` as a list of integer vectors.
    #[arg(long)]
    m: PathBuf,
    #[arg(long, value_parser = coords, allow_hyphen_values = true)]
    u1: Ints,
    #[arg(long, value_parser = coords, allow_hyphen_values = true)]
    u2: Ints,
}

pub(crate) fn run(cmd: &Command, s: &Settings) -> Result<String, Failure> {
    let mut s = *s;
    if let Command::Theta(ThetaArgs { cutoff: Some(r), .. }) = cmd {
        s.cfg.shell_cutoff = *r;
        s.cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    }
    let s = &s;
    let csv_ok = matches!(cmd, Command::Roots(_) | Command::Count(_));
    if s.csv && !csv_ok {
        return Err(Failure::Usage(format!("--csv is not available for {}", cmd.name())));
    }
    let name = cmd.name();
    let mut inputs = match cmd {
        Command::Roots(a) => serde_json::to_value(a),
        Command::Count(a) => serde_json::to_value(a),
        Command::Canonize(a) => serde_json::to_value(a),
        Command::GramDet(a) => serde_json::to_value(a),
        Command::Act(a) => serde_json::to_value(a),
        Command::Theta(a) => serde_json::to_value(a),
        Command::Qproduct(a) => serde_json::to_value(a),
        Command::Lambert(a) => serde_json::to_value(a),
        Command::ModelDet(a) => serde_json::to_value(a),
        Command::Project(a) | Command::Classify(a) => serde_json::to_value(a),
        Command::Mirror(a) => serde_json::to_value(a),
    }?;
    if let Some(seed) = s.seed {
        inputs["seed"] = json!(seed);
    }
    if matches!(cmd, Command::Theta(_) | Command::Qproduct(_) | Command::Lambert(_) | Command::ModelDet(_)) {
        inputs["truncation"] = serde_json::to_value(s.cfg)?;
    }
    let mut diag = Vec::new();
    let result = match cmd {
        Command::Roots(a) => {
            let (result, csv) = roots(a)?;
            if s.csv {
                return Ok(csv);
            }
            result
        }
        Command::Count(a) => {
            let cs = count(a)?;
            if let Some(p) = &a.series_out {
                emit_series_csv(&cs, p).with_context(|| format!("cannot write {}", p.display()))?;
            }
            if s.csv {
                let mut buf = Vec::new();
                write_series_csv(&cs, &mut buf)?;
                return Ok(String::from_utf8(buf)?);
            }
            json!({ "a": series_json(&cs) })
        }
        Command::Canonize(a) => canonize(a, s)?,
        Command::GramDet(a) => {
            let tau = read_matrix(&a.tau, a.p, a.q)?;
            let pt = FlatPoint::new(Arc::new(Frame::standard(a.p, a.q)), tau)?;
            json!({ "gram_det": pt.gram_det() })
        }
        Command::Act(a) => act(a)?,
        Command::Theta(a) => theta(a, s, &mut diag)?,
        Command::Qproduct(a) => {
            let (cs, cfg) = line_series(a, s, &mut diag)?;
            json!({ "value": line_restriction_qproduct(&cs, a.t, &cfg)? })
        }
        Command::Lambert(a) => {
            let (cs, cfg) = line_series(&a.series, s, &mut diag)?;
            let rate = match a.rate {
                Rate::TwoPi => LambertRate::TwoPi,
                Rate::Unit => LambertRate::Unit,
            };
            json!({ "value": lambert_log_derivative(&cs, a.series.t, &cfg, rate)? })
        }
        Command::ModelDet(a) => model_det(a, s)?,
        Command::Project(a) => project(a, s)?,
        Command::Classify(a) => classify(a, s, &mut diag)?,
        Command::Mirror(a) => mirror(a)?,
    };
    Ok(RunReport::new(name, inputs, result, diag).to_json())
}

fn lattice(spec: &str) -> Result<Lattice, Failure> {
    Lattice::from_spec(spec).map_err(|e| Failure::Usage(format!("bad lattice {spec:?}: {e}")))
}

fn vector(l: &Lattice, xs: &Ints, what: &str) -> Result<LatticeVector, Failure> {
    if xs.0.len() > l.rank() {
        return Err(Failure::Usage(format!("{what} has {} coordinates, lattice rank is {}", xs.0.len(), l.rank())));
    }
    // omitted trailing coordinates are zero
    let mut v = xs.0.clone();
    v.resize(l.rank(), 0);
    Ok(LatticeVector::from_i64(&v))
}

fn vec_json(v: &LatticeVector) -> Value {
    ints(&v.0)
}

fn read_json(path: &Path) -> anyhow::Result<Value> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("bad JSON in {}", path.display()))
}

fn read_matrix(path: &Path, rows: usize, cols: usize) -> anyhow::Result<DMatrix<f64>> {
    let m: Vec<Vec<f64>> = serde_json::from_value(read_json(path)?)
        .with_context(|| format!("{} is not a matrix of numbers", path.display()))?;
    if m.len() != rows || m.iter().any(|r| r.len() != cols) {
        bail!("{} must be a {rows} x {cols} matrix", path.display());
    }
    Ok(DMatrix::from_fn(rows, cols, |i, j| m[i][j]))
}

fn read_int_rows(path: &Path) -> anyhow::Result<Vec<Vec<BigInt>>> {
    let m: Vec<Vec<i64>> = serde_json::from_value(read_json(path)?)
        .with_context(|| format!("{} is not a list of integer vectors", path.display()))?;
    Ok(m.into_iter().map(|r| r.into_iter().map(BigInt::from).collect()).collect())
}

fn matrix_json(m: &DMatrix<f64>) -> Value {
    Value::Array((0..m.nrows()).map(|i| Value::Array((0..m.ncols()).map(|j| num(m[(i, j)])).collect())).collect())
}

fn series_json(cs: &CountingSeries) -> Value {
    Value::Object(cs.counts.iter().map(|(n, a)| (n.to_string(), json!(a))).collect())
}

fn rng(s: &Settings, what: &str) -> Result<ChaCha8Rng, Failure> {
    match s.seed {
        Some(seed) => Ok(ChaCha8Rng::seed_from_u64(seed)),
        None => Err(Failure::Usage(format!("give {what} or --seed"))),
    }
}

fn roots(a: &RootsArgs) -> Result<(Value, String), Failure> {
    let l = lattice(&a.lattice)?;
    let pol = vector(&l, &a.l, "--l")?;
    let rs = enumerate_roots_with_pairing(&l, &pol, a.n)?;
    let mut result = json!({ "n": a.n, "count": rs.len() });
    let mut csv = String::new();
    if a.emit_vectors {
        result["roots"] = Value::Array(rs.iter().map(|r| vec_json(r.vec())).collect());
    }
    let header: Vec<String> = (0..l.rank()).map(|i| format!("x{i}")).collect();
    csv.push_str(&header.join(","));
    csv.push('\n');
    for r in &rs {
        let row: Vec<String> = r.vec().0.iter().map(BigInt::to_string).collect();
        csv.push_str(&row.join(","));
        csv.push('\n');
    }
    Ok((result, csv))
}

fn count(a: &CountArgs) -> Result<CountingSeries, Failure> {
    let l = lattice(&a.lattice)?;
    let pol = vector(&l, &a.l, "--l")?;
    Ok(counting_series(&l, &pol, a.n_max)?)
}

fn sampled_root(l: &Lattice, s: &Settings, max_len: usize, what: &str) -> Result<Root, Failure> {
    let frame = FrameU::last(l)?;
    let mut r = rng(s, what)?;
    Ok(sample_root(l, &frame, max_len, &mut r).0)
}

fn canonize(a: &CanonizeArgs, s: &Settings) -> Result<Value, Failure> {
    let l = lattice(&a.lattice)?;
    let root = match &a.root {
        Some(xs) => Root::new(&l, vector(&l, xs, "--root")?)?,
        None => sampled_root(&l, s, a.max_len, "--root")?,
    };
    let frame = FrameU::last(&l)?;
    let (can, word) = canonicalize_root(&l, &root, &frame)?;
    Ok(json!({
        "root": vec_json(root.vec()),
        "canonical": vec_json(can.vec()),
        "word": serde_json::to_value(&word)?,
        "word_length": word.len(),
    }))
}

fn act(a: &ActArgs) -> Result<Value, Failure> {
    let l = lattice(&a.lattice)?;
    let sig = l.signature();
    let gamma = read_int_rows(&a.gamma)?;
    let n = l.rank();
    if gamma.len() != n || gamma.iter().any(|r| r.len() != n) {
        return Err(Failure::Usage(format!("gamma must be {n} x {n}")));
    }
    let tau = read_matrix(&a.tau, sig.pos, sig.neg)?;
    let pt = FlatPoint::new(Arc::new(Frame::orthonormal(&l)), tau)?;
    let (img, c) = pt.act(&l, &gamma)?;
    Ok(json!({ "tau_prime": matrix_json(img.tau()), "mu": matrix_json(&c.mu), "det_mu": c.det_mu() }))
}

fn theta(a: &ThetaArgs, s: &Settings, diag: &mut Vec<String>) -> Result<Value, Failure> {
    let l = lattice(&a.lattice)?;
    let sig = l.signature();
    let tau = read_matrix(&a.tau, sig.pos, sig.neg)?;
    let pt = FlatPoint::new(Arc::new(Frame::orthonormal(&l)), tau)?;
    let cfg = s.cfg;
    let v = theta_kernel_eval(&l, &pt, SiegelParameter::new(a.rho.0, a.rho.1)?, &cfg)?;
    if v.truncated {
        diag.push(format!("theta tail bound {} exceeds tail_tol {}", crate::fixed15(v.tail_bound), cfg.tail_tol));
    }
    Ok(json!({
        "re": v.re,
        "im": v.im,
        "terms": v.terms,
        "tail_bound": v.tail_bound,
        "truncated": v.truncated,
    }))
}

fn read_series(path: &Path) -> anyhow::Result<CountingSeries> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        return read_series_csv(path);
    }
    let v = read_json(path)?;
    let a = v.get("a").or_else(|| v.get("result").and_then(|r| r.get("a")));
    let Some(a) = a else {
        bail!("{} has no \"a\" object", path.display());
    };
    let counts: BTreeMap<u64, u64> =
        serde_json::from_value(a.clone()).with_context(|| format!("bad series in {}", path.display()))?;
    Ok(CountingSeries::from_counts(counts))
}

fn line_series(
    a: &SeriesArgs,
    s: &Settings,
    diag: &mut Vec<String>,
) -> Result<(CountingSeries, k3lattice::TruncationConfig), Failure> {
    let cs = read_series(&a.series)?;
    let mut cfg = s.cfg;
    if !s.product_cutoff_given {
        cfg.product_cutoff = cs.n_max.max(1);
        diag.push(format!("product truncated at n = {}", cfg.product_cutoff));
    }
    Ok((cs, cfg))
}

fn model_det(a: &ModelDetArgs, s: &Settings) -> Result<Value, Failure> {
    let lp = lattice(&a.lattice)?;
    let pol = vector(&lp, &a.l, "--l")?;
    if a.re.0.len() != lp.rank() || a.im.0.len() != lp.rank() {
        return Err(Failure::Usage(format!("--re and --im need {} coordinates", lp.rank())));
    }
    let ps = ProductSeries::from_roots(lp.clone(), pol, s.cfg.product_cutoff)?;
    let frame = Arc::new(tube_frame(&lp));
    let pt = flat_point_of_tube(frame, &lp, &a.re.0, &a.im.0)?;
    let d = model_determinant(&pt, &ps, &s.cfg)?;
    Ok(json!({ "gram_det": pt.gram_det(), "model_det": d }))
}

fn polarized_root(a: &ProjectArgs, s: &Settings) -> Result<(k3lattice::PolarizedFrame, Root), Failure> {
    let pf = make_polarized_frame(a.n)?;
    let root = match &a.delta {
        Some(xs) => Root::new(&pf.lattice, vector(&pf.lattice, xs, "--delta")?)?,
        None => sampled_root(&pf.lattice, s, 6, "--delta")?,
    };
    Ok((pf, root))
}

fn project(a: &ProjectArgs, s: &Settings) -> Result<Value, Failure> {
    let pf = make_polarized_frame(a.n)?;
    let delta = match &a.delta {
        Some(xs) => vector(&pf.lattice, xs, "--delta")?,
        None => sampled_root(&pf.lattice, s, 6, "--delta")?.into_vec(),
    };
    let p = pf.parts(&delta)?;
    Ok(json!({
        "delta": vec_json(&delta),
        "m1": int(&p.m1),
        "m2": int(&p.m2),
        "prU_l": int(&p.k),
        "prU_lstar": int(&p.c),
        "mu_norm": int(&p.mu_norm),
    }))
}

fn classify(a: &ProjectArgs, s: &Settings, diag: &mut Vec<String>) -> Result<Value, Failure> {
    let (pf, root) = polarized_root(a, s)?;
    let c = classify_wall(&pf, &root)?;
    let mut out = json!({ "delta": vec_json(root.vec()), "wall": c.label.kind(), "word_length": 0 });
    if let WallLabel::RootWall { delta } = &c.label {
        out["root"] = vec_json(delta.vec());
    }
    if let Some(cert) = &c.certificate {
        out["word_length"] = json!(cert.reduction.word.len());
        out["reduced"] = vec_json(cert.reduction.root.vec());
        out["mu_norm"] = int(&cert.reduction.mu_norm);
        out["proportional"] = json!(cert.proportional);
        out["measures"] = ints(&cert.reduction.measures);
        if !cert.proportional {
            diag.push(format!(
                "reduction stopped at mu-norm {}; projection not proportional to l*",
                cert.reduction.mu_norm
            ));
        }
    }
    Ok(out)
}

fn mirror(a: &MirrorArgs) -> Result<Value, Failure> {
    let l = lattice(&a.lattice)?;
    let m: Vec<LatticeVector> = read_int_rows(&a.m)?.into_iter().map(LatticeVector).collect();
    if m.iter().any(|v| v.len() != l.rank()) {
        return Err(Failure::Usage(format!("basis vectors of M need {} coordinates", l.rank())));
    }
    let u1 = vector(&l, &a.u1, "--u1")?;
    let u2 = vector(&l, &a.u2, "--u2")?;
    let mp = mirror_picard(&l, &m, (&u1, &u2))?;
    let gram = |x: &Lattice| Value::Array(x.gram().iter().map(|r| ints(r)).collect());
    Ok(json!({
        "m_gram": gram(&mp.m),
        "m1_basis": Value::Array(mp.m1_basis.iter().map(vec_json).collect()),
        "m1_gram": gram(&mp.m1),
        "t_y_gram": gram(&mp.t_y),
        "ranks": { "m": mp.m.rank(), "m1": mp.m1.rank(), "t_y": mp.t_y.rank() },
    }))
}

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use k3lattice::CountingSeries;
use num_bigint::BigInt;
use serde::Serialize;
use serde_json::Value;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// What a successful run prints on standard output.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub command: String,
    pub inputs: Value,
    pub result: Value,
    pub diagnostics: Vec<String>,
    pub version: String,
}

impl RunReport {
    pub fn new(command: &str, mut inputs: Value, mut result: Value, diagnostics: Vec<String>) -> Self {
        fix_floats(&mut inputs);
        fix_floats(&mut result);
        Self { command: command.to_string(), inputs, result, diagnostics, version: VERSION.to_string() }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes") + "\n"
    }
}

/// What a failed run prints on standard error.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorReport {
    pub command: String,
    pub error: String,
    pub version: String,
}

/// Fixed-point text with 15 significant digits.
pub fn fixed15(x: f64) -> String {
    if x == 0.0 {
        return format!("{:.14}", 0.0);
    }
    let sci = format!("{:.14e}", x);
    let exp: i32 = sci.rsplit('e').next().and_then(|e| e.parse().ok()).unwrap_or(0);
    let decimals = (14 - exp).clamp(0, 400) as usize;
    format!("{x:.decimals$}")
}

/// A JSON number carrying `fixed15(x)`, or null when `x` is not finite.
pub fn num(x: f64) -> Value {
    if x.is_finite() {
        serde_json::from_str(&fixed15(x)).expect("fixed-point text is valid JSON")
    } else {
        Value::Null
    }
}

/// A JSON integer of any size.
pub fn int(x: &BigInt) -> Value {
    serde_json::from_str(&x.to_string()).expect("integer text is valid JSON")
}

pub fn ints(xs: &[BigInt]) -> Value {
    Value::Array(xs.iter().map(int).collect())
}

// rewrite every non-integer number in fixed 15-digit form
fn fix_floats(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => *v = num(n.as_f64().unwrap_or(f64::NAN)),
        Value::Array(xs) => xs.iter_mut().for_each(fix_floats),
        Value::Object(m) => m.values_mut().for_each(fix_floats),
        _ => {}
    }
}

/// Writes `n,a_n` rows with LF line endings.
pub fn write_series_csv<W: Write>(cs: &CountingSeries, w: W) -> io::Result<()> {
    let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    out.write_record(["n", "a_n"])?;
    for (n, a) in &cs.counts {
        out.write_record([n.to_string(), a.to_string()])?;
    }
    out.flush()
}

/// Writes the series to `path` as CSV with header `n,a_n`.
pub fn emit_series_csv(cs: &CountingSeries, path: &Path) -> io::Result<()> {
    write_series_csv(cs, File::create(path)?)
}

/// Reads a series written by [`emit_series_csv`].
pub fn read_series_csv(path: &Path) -> anyhow::Result<CountingSeries> {
    let mut rd = csv::Reader::from_path(path)?;
    let headers = rd.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["n", "a_n"] {
        anyhow::bail!("expected header n,a_n in {}", path.display());
    }
    let mut counts = BTreeMap::new();
    for rec in rd.deserialize::<(u64, u64)>() {
        let (n, a) = rec?;
        counts.insert(n, a);
    }
    Ok(CountingSeries::from_counts(counts))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_format_has_fifteen_digits() {
        assert_eq!(fixed15(1.0), "1.00000000000000");
        assert_eq!(fixed15(0.0), "0.00000000000000");
        assert_eq!(fixed15(-2.5e-3), "-0.00250000000000000");
        assert_eq!(fixed15(123456.789), "123456.789000000");
        assert_eq!(fixed15(9.999999999999999), "10.0000000000000");
        assert_eq!(fixed15(1e20), "100000000000000000000");
    }

    #[test]
    fn floats_are_rewritten_and_integers_kept() {
        let mut v = serde_json::json!({"a": 0.5, "b": [1, 2.0], "c": 7});
        fix_floats(&mut v);
        assert_eq!(v.to_string(), r#"{"a":0.500000000000000,"b":[1,2.00000000000000],"c":7}"#);
    }

    #[test]
    fn big_integers_stay_exact() {
        let b: BigInt = "123456789012345678901234567890".parse().unwrap();
        assert_eq!(int(&b).to_string(), "123456789012345678901234567890");
    }

    #[test]
    fn series_csv_text() {
        let mut buf = Vec::new();
        write_series_csv(&CountingSeries::from_counts(BTreeMap::new()), &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "n,a_n\n");
        let mut buf = Vec::new();
        write_series_csv(&CountingSeries::from_counts([(1, 480)].into_iter().collect()), &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "n,a_n\n1,480\n");
    }
}

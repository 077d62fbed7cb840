//! Deterministic text output: CSV with full double precision and JSON sidecars
//! carrying a SHA-256 content hash.

use std::io::{self, Write};

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Formats a float with 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".to_owned()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_owned()
    } else {
        format!("{v:.16e}")
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// CSV writer: optional `#` comment line, header row, `\n` line endings.
pub struct CsvWriter<W: Write> {
    out: W,
    columns: usize,
}

impl<W: Write> CsvWriter<W> {
    pub fn new(mut out: W, comment: Option<&str>, header: &[&str]) -> io::Result<Self> {
        if let Some(c) = comment {
            for line in c.lines() {
                writeln!(out, "# {line}")?;
            }
        }
        writeln!(out, "{}", header.join(","))?;
        Ok(Self {
            out,
            columns: header.len(),
        })
    }

    pub fn row(&mut self, values: &[f64]) -> io::Result<()> {
        debug_assert_eq!(values.len(), self.columns);
        let mut line = String::with_capacity(values.len() * 24);
        for (i, v) in values.iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            line.push_str(&fmt_f64(*v));
        }
        line.push('\n');
        self.out.write_all(line.as_bytes())
    }

    pub fn into_inner(mut self) -> io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

/// Renders rows into an in-memory CSV document.
pub fn csv_string(comment: Option<&str>, header: &[&str], rows: &[Vec<f64>]) -> String {
    let mut w = CsvWriter::new(Vec::new(), comment, header).expect("writing to memory");
    for r in rows {
        w.row(r).expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("writing to memory")).expect("ASCII output")
}

/// Metadata written next to a data file.
#[derive(Debug, Clone, Serialize)]
pub struct Sidecar<P: Serialize> {
    pub kind: String,
    pub data_file: String,
    pub sha256: String,
    pub payload: P,
}

impl<P: Serialize> Sidecar<P> {
    pub fn new(kind: &str, data_file: &str, data: &[u8], payload: P) -> Self {
        Self {
            kind: kind.to_owned(),
            data_file: data_file.to_owned(),
            sha256: sha256_hex(data),
            payload,
        }
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn float_format() {
        assert_eq!(fmt_f64(1.0), "1.0000000000000000e0");
        assert_eq!(fmt_f64(-0.1), "-1.0000000000000001e-1");
        assert_eq!(fmt_f64(f64::NAN), "nan");
        assert_eq!(fmt_f64(f64::NEG_INFINITY), "-inf");
    }

    #[test]
    fn csv_layout() {
        let s = csv_string(Some("run=abc"), &["a", "b"], &[vec![1.0, 2.0]]);
        assert_eq!(s, "# run=abc\na,b\n1.0000000000000000e0,2.0000000000000000e0\n");
    }

    #[test]
    fn hash_is_stable() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    proptest! {
        #[test]
        fn round_trips(v in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
            prop_assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }
}

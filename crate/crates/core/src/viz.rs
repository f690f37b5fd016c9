//! Heatmap rasterization and CSV helpers for output bundles.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::sketch::pnm;

/// Min-max normalize to `0..=255`; a constant input maps to mid-gray 128.
pub fn heatmap_bytes(values: &[f64]) -> Result<Vec<u8>> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("heatmap input".into()));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if values.is_empty() || lo == hi {
        return Ok(vec![128; values.len()]);
    }
    Ok(values.iter().map(|v| ((v - lo) / (hi - lo) * 255.0).round() as u8).collect())
}

pub fn render_heatmap(values: &[f64], (height, width): (usize, usize), path: &Path) -> Result<()> {
    if values.len() != height * width {
        return Err(Error::MaskLengthMismatch { expected: height * width, got: values.len() });
    }
    pnm::write_pgm(path, width, height, &heatmap_bytes(values)?)
}

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// Quote a CSV field when it contains a delimiter, quote or newline.
pub fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// `index,token,value` table.
pub fn profile_csv<'a>(rows: impl IntoIterator<Item = (usize, &'a str, f64)>) -> String {
    let mut out = String::from("index,token,value\n");
    for (i, tok, v) in rows {
        let _ = writeln!(out, "{i},{},{}", csv_field(tok), fmt_f64(v));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_is_mid_gray() {
        assert_eq!(heatmap_bytes(&[0.3; 5]).unwrap(), vec![128; 5]);
    }

    #[test]
    fn endpoints() {
        assert_eq!(heatmap_bytes(&[0.0, 1.0, 1.0, 0.0]).unwrap(), vec![0, 255, 255, 0]);
        assert_eq!(heatmap_bytes(&[-2.0, 0.0, 2.0]).unwrap(), vec![0, 128, 255]);
    }

    #[test]
    fn rejects_non_finite() {
        assert!(matches!(heatmap_bytes(&[0.0, f64::NAN]), Err(Error::NonFinite(_))));
    }

    #[test]
    fn header_order_is_width_height() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.pgm");
        render_heatmap(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0], (2, 3), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert!(bytes.starts_with(b"P5 3 2 255\n"));
        assert_eq!(bytes.len(), "P5 3 2 255\n".len() + 6);
        assert!(render_heatmap(&[0.0; 5], (2, 3), &path).is_err());
    }

    #[test]
    fn float_format_roundtrips() {
        for v in [0.1, 1.0 / 3.0, 1e-300, 12345.678, -0.0, 2.5] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }

    #[test]
    fn csv_quoting() {
        let csv = profile_csv([(0, "<bos>", 1.0), (1, "a,b", 0.5)]);
        assert_eq!(csv, "index,token,value\n0,<bos>,1\n1,\"a,b\",0.5\n");
    }
}

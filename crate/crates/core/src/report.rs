//! Output artifacts: JSON with 17 significant digits and CSV with a
//! commented header carrying the run configuration.

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};
use std::io::{self, Write};

pub const FORMAT_VERSION: &str = "circlaw-report/1";

/// Pretty JSON whose floats carry 17 significant digits; non-finite
/// values become `null`.
pub struct FullPrecision<'a>(PrettyFormatter<'a>);

impl Default for FullPrecision<'_> {
    fn default() -> Self {
        Self(PrettyFormatter::with_indent(b"  "))
    }
}

pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

impl Formatter for FullPrecision<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            write!(w, "{value:.16e}")
        } else {
            w.write_all(b"null")
        }
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Single-line variant of [`FullPrecision`].
#[derive(Default)]
pub struct CompactFullPrecision;

impl Formatter for CompactFullPrecision {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            write!(w, "{value:.16e}")
        } else {
            w.write_all(b"null")
        }
    }
}

pub fn to_json_line<T: Serialize + ?Sized>(value: &T) -> Result<String, serde_json::Error> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, CompactFullPrecision);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> Result<String, serde_json::Error> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FullPrecision::default());
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

/// A report: the run configuration, the format version and a payload.
#[derive(Debug, Serialize)]
pub struct Envelope<'a, C: Serialize, P: Serialize> {
    pub format_version: &'static str,
    pub config: &'a C,
    pub result: P,
}

impl<'a, C: Serialize, P: Serialize> Envelope<'a, C, P> {
    pub fn new(config: &'a C, result: P) -> Self {
        Self { format_version: FORMAT_VERSION, config, result }
    }
}

/// CSV text: `#` lines with the format version and the configuration as
/// one-line JSON, then a header row and the data rows.
pub fn csv_string<C: Serialize>(config: &C, header: &[&str], rows: &[Vec<String>]) -> Result<String, io::Error> {
    let mut out = Vec::new();
    writeln!(out, "# format_version: {FORMAT_VERSION}")?;
    let cfg = to_json_line(config).map_err(io::Error::other)?;
    writeln!(out, "# config: {cfg}")?;
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
    }
    Ok(String::from_utf8(out).expect("csv output is UTF-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_with_seventeen_digits() {
        let x = 0.1 + 0.2;
        let s = to_json_string(&vec![x, f64::NAN, 1.0]).unwrap();
        assert!(s.contains("3.0000000000000004e-1"), "{s}");
        assert!(s.contains("null"));
        let back: Vec<Option<f64>> = serde_json::from_str(&s).unwrap();
        assert_eq!(back[0], Some(x));
        assert_eq!(back[1], None);
    }

    #[test]
    fn csv_has_commented_header() {
        #[derive(Serialize)]
        struct C {
            n: usize,
        }
        let s = csv_string(&C { n: 3 }, &["a", "b"], &[vec![fmt_f64(0.5), "x".into()]]).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "# format_version: circlaw-report/1");
        assert_eq!(lines[1], "# config: {\"n\":3}");
        assert_eq!(lines[2], "a,b");
        assert_eq!(lines[3], "5.0000000000000000e-1,x");
    }
}

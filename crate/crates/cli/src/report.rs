//! JSON and CSV output with fixed 17-significant-digit floats.

use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::error::{CliError, CliResult};

/// Pretty JSON whose floats always carry 17 significant digits, so values
/// round-trip exactly and identical runs give identical bytes.
struct ExactFloats<'a>(PrettyFormatter<'a>);

impl Formatter for ExactFloats<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{}", format_f64(value))
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, f64::from(value))
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn format_f64(value: f64) -> String {
    format!("{value:.16e}")
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, ExactFloats(PrettyFormatter::new()));
    value.serialize(&mut ser).expect("reports serialize");
    buf.push(b'\n');
    String::from_utf8(buf).expect("JSON is UTF-8")
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Write {
            path: dir.display().to_string(),
            source,
        })?;
    }
    std::fs::write(path, contents).map_err(|source| CliError::Write {
        path: path.display().to_string(),
        source,
    })
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> CliResult<PathBuf> {
    let path = dir.join(name);
    write_file(&path, &to_json(value))?;
    Ok(path)
}

/// Writes `header` and `rows` as comma-separated text with LF endings.
pub fn write_csv(dir: &Path, name: &str, header: &[&str], rows: &[Vec<f64>]) -> CliResult<PathBuf> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let to_io = io::Error::other;
    let mut run = || -> io::Result<Vec<u8>> {
        w.write_record(header).map_err(to_io)?;
        for row in rows {
            w.write_record(row.iter().map(|&x| format_f64(x))).map_err(to_io)?;
        }
        w.flush()?;
        Ok(w.get_ref().clone())
    };
    let path = dir.join(name);
    let bytes = run().map_err(|source| CliError::Write {
        path: path.display().to_string(),
        source,
    })?;
    write_file(&path, &String::from_utf8(bytes).expect("CSV is UTF-8"))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_have_seventeen_digits() {
        let json = to_json(&serde_json::json!({"x": 0.1, "y": [2.0 / 3.0, 1e-300], "n": 3}));
        assert!(json.contains("1.0000000000000001e-1"));
        assert!(json.contains("6.6666666666666663e-1"));
        assert!(json.contains("\"n\": 3"));
        let back: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(back["x"].as_f64(), Some(0.1));
        assert_eq!(back["y"][0].as_f64(), Some(2.0 / 3.0));
    }

    #[test]
    fn non_finite_values_become_null() {
        let json = to_json(&vec![f64::NAN, 1.0]);
        assert!(json.contains("null"));
    }

    #[test]
    fn csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_csv(
            dir.path(),
            "c.csv",
            &["z", "zeta", "r"],
            &[vec![0.5, 0.5, 1.0], vec![1.0, 1.0, 1.0]],
        )
        .unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        assert!(!text.contains('\r'));
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "z,zeta,r");
        assert_eq!(lines.len(), 3);
    }
}

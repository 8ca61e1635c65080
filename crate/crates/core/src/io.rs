//! File helpers shared by the text formats: transparent gzip and `# key=value` headers.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use crate::error::{Error, Result};

fn is_gzip(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("gz"))
}

/// Opens a file for buffered reading, decompressing when the name ends in `.gz`.
pub fn open_reader(path: &Path) -> Result<Box<dyn BufRead>> {
    let file = File::open(path)?;
    if is_gzip(path) {
        Ok(Box::new(BufReader::new(MultiGzDecoder::new(file))))
    } else {
        Ok(Box::new(BufReader::new(file)))
    }
}

/// Creates a file for buffered writing, compressing when the name ends in `.gz`.
pub fn create_writer(path: &Path) -> Result<Box<dyn Write>> {
    let file = File::create(path)?;
    if is_gzip(path) {
        Ok(Box::new(BufWriter::new(GzEncoder::new(
            file,
            Compression::default(),
        ))))
    } else {
        Ok(Box::new(BufWriter::new(file)))
    }
}

/// Reads a whole (possibly gzipped) text file.
pub fn read_to_string(path: &Path) -> Result<String> {
    let mut reader = open_reader(path)?;
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    Ok(text)
}

/// Writes `text` to `path`, gzipping by extension.
pub fn write_string(path: &Path, text: &str) -> Result<()> {
    let mut w = create_writer(path)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

/// Parses `# n=<count>` comment headers; returns `None` for other comments.
pub(crate) fn header_item_count(line: &str, lineno: usize) -> Result<Option<usize>> {
    let body = line.trim_start_matches('#').trim();
    match body.strip_prefix("n=") {
        Some(v) => v
            .trim()
            .parse::<usize>()
            .map(Some)
            .map_err(|_| Error::parse(lineno, format!("bad item count header {line:?}"))),
        None => Ok(None),
    }
}

/// Parses a comma separated list of 1-based item ids into 0-based indices.
pub(crate) fn parse_items(field: &str, lineno: usize) -> Result<Vec<usize>> {
    field
        .split(',')
        .map(|tok| {
            let v: usize = tok
                .trim()
                .parse()
                .map_err(|_| Error::parse(lineno, format!("bad item id {tok:?}")))?;
            if v == 0 {
                return Err(Error::parse(lineno, "item ids are 1-based"));
            }
            Ok(v - 1)
        })
        .collect()
}

pub(crate) fn join_items(items: &[usize]) -> String {
    let parts: Vec<String> = items.iter().map(|i| (i + 1).to_string()).collect();
    parts.join(",")
}

/// Formats a float with 17 significant digits, which round-trips every `f64`.
pub(crate) fn fmt_prob(x: f64) -> String {
    format!("{x:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gzip_round_trip_by_extension() {
        let dir = tempfile::tempdir().unwrap();
        let plain = dir.path().join("a.txt");
        let packed = dir.path().join("a.txt.gz");
        write_string(&plain, "hello\n").unwrap();
        write_string(&packed, "hello\n").unwrap();
        assert_eq!(read_to_string(&plain).unwrap(), "hello\n");
        assert_eq!(read_to_string(&packed).unwrap(), "hello\n");
        let raw = std::fs::read(&packed).unwrap();
        assert_eq!(&raw[..2], &[0x1f, 0x8b]);
    }

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [0.1, 1.0 / 3.0, 0.85, 1e-300, 0.999_999_999_999_999_9] {
            let s = fmt_prob(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
    }
}

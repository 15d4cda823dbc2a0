//! The on-disk dataset format: one pattern per line as two whitespace-
//! separated binary strings, optionally preceded by an id column. `#` lines
//! are comments. All lines must agree on the number of sites.

use std::path::Path;

use hairpin_core::{Dataset, MethylationPattern};

use crate::error::{CliError, Result};
use crate::io_util::atomic_write;

fn parse_strand(field: &str, lineno: usize) -> Result<Vec<bool>> {
    field
        .chars()
        .map(|ch| match ch {
            '0' => Ok(false),
            '1' => Ok(true),
            other => Err(CliError::data(format!(
                "line {lineno}: invalid character '{other}' in strand (want 0/1)"
            ))),
        })
        .collect()
}

pub fn parse_dataset_text(text: &str, source: &str) -> Result<Dataset> {
    let mut patterns = Vec::new();
    let mut first_sites: Option<(usize, usize)> = None; // (line, S)
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let (id, a, b) = match fields.as_slice() {
            [a, b] => (format!("p{}", patterns.len() + 1), *a, *b),
            [id, a, b] => (id.to_string(), *a, *b),
            _ => {
                return Err(CliError::data(format!(
                    "line {lineno}: expected 'strand strand' or 'id strand strand', got {} fields",
                    fields.len()
                )))
            }
        };
        let strand_a = parse_strand(a, lineno)?;
        let strand_b = parse_strand(b, lineno)?;
        if strand_a.len() != strand_b.len() {
            return Err(CliError::data(format!(
                "line {lineno}: strand lengths differ ({} vs {})",
                strand_a.len(),
                strand_b.len()
            )));
        }
        match first_sites {
            None => first_sites = Some((lineno, strand_a.len())),
            Some((first_line, s)) if strand_a.len() != s => {
                return Err(CliError::data(format!(
                    "line {lineno}: {} sites but line {first_line} has {s}",
                    strand_a.len()
                )))
            }
            _ => {}
        }
        patterns.push(
            MethylationPattern::new(strand_a, strand_b, id)
                .map_err(|e| CliError::data(format!("line {lineno}: {e}")))?,
        );
    }
    if patterns.is_empty() {
        return Err(CliError::data(format!("{source}: no patterns found")));
    }
    Dataset::new(patterns, source).map_err(|e| CliError::data(e.to_string()))
}

pub fn parse_dataset(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("cannot read dataset {}: {e}", path.display())))?;
    parse_dataset_text(&text, &path.display().to_string())
}

fn strand_string(strand: &[bool]) -> String {
    strand.iter().map(|&x| if x { '1' } else { '0' }).collect()
}

pub fn dataset_to_text(data: &Dataset) -> String {
    let mut out = String::new();
    out.push_str(&format!("# methylation patterns: N={} S={}\n", data.n_patterns(), data.n_sites()));
    out.push_str("# columns: id strand_a strand_b\n");
    for pat in data.patterns() {
        out.push_str(&format!(
            "{} {} {}\n",
            pat.id,
            strand_string(&pat.strand_a),
            strand_string(&pat.strand_b)
        ));
    }
    out
}

pub fn write_dataset(path: &Path, data: &Dataset) -> Result<()> {
    atomic_write(path, dataset_to_text(data).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_plain_and_id_lines() {
        let data = parse_dataset_text("110 100\npat9 011 010\n", "test").unwrap();
        assert_eq!(data.n_patterns(), 2);
        assert_eq!(data.n_sites(), 3);
        assert_eq!(data.patterns()[0].id, "p1");
        assert_eq!(data.patterns()[1].id, "pat9");
        assert_eq!(data.patterns()[0].strand_a, vec![true, true, false]);
    }

    #[test]
    fn reports_both_lines_on_length_mismatch() {
        let err = parse_dataset_text("# c\n11 10\n111 101\n", "test").unwrap_err();
        assert!(err.message.contains("line 3") && err.message.contains("line 2"), "{}", err.message);
        assert_eq!(err.kind.code(), 3);
    }

    #[test]
    fn reports_ragged_strands_and_bad_chars() {
        let err = parse_dataset_text("110 10\n", "test").unwrap_err();
        assert!(err.message.contains("line 1"), "{}", err.message);
        let err = parse_dataset_text("1x0 100\n", "test").unwrap_err();
        assert!(err.message.contains("'x'"), "{}", err.message);
    }

    #[test]
    fn empty_input_is_an_error() {
        let err = parse_dataset_text("# nothing here\n", "test").unwrap_err();
        assert!(err.message.contains("no patterns"));
    }

    #[test]
    fn round_trips_bytewise() {
        let text = "# methylation patterns: N=2 S=3\n# columns: id strand_a strand_b\np1 110 100\np2 011 011\n";
        let data = parse_dataset_text(text, "test").unwrap();
        assert_eq!(dataset_to_text(&data), text);
    }

    #[test]
    fn real_assay_sized_file() {
        let mut text = String::new();
        for i in 0..169 {
            let a: String = (0..22).map(|j| if (i + j) % 3 == 0 { '0' } else { '1' }).collect();
            let b: String = (0..22).map(|j| if (i + j) % 5 == 0 { '0' } else { '1' }).collect();
            text.push_str(&format!("{a} {b}\n"));
        }
        let data = parse_dataset_text(&text, "assay-sized").unwrap();
        assert_eq!(data.n_patterns(), 169);
        assert_eq!(data.n_sites(), 22);
    }
}

//! CSV dataset ingestion.
//!
//! The expected layout is one study per row under the header
//! `study,r_ctrl,n_ctrl,r_trt,n_trt`.

use bnhm::{MetaDataset, Study, StudyArm};
use std::collections::HashSet;
use std::path::Path;
use thiserror::Error;

pub const HEADER: [&str; 5] = ["study", "r_ctrl", "n_ctrl", "r_trt", "n_trt"];

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line 1: expected header `{}`, found `{found}`", HEADER.join(","))]
    Header { found: String },
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },
    #[error("dataset must contain at least 1 study")]
    Empty,
}

fn row_error(line: u64, message: impl Into<String>) -> DatasetError {
    DatasetError::Row {
        line,
        message: message.into(),
    }
}

pub fn parse_dataset(path: &Path) -> Result<MetaDataset, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_dataset_str(&text)
}

pub fn parse_dataset_str(text: &str) -> Result<MetaDataset, DatasetError> {
    if text.trim().is_empty() {
        return Err(DatasetError::Empty);
    }
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| row_error(1, e.to_string()))?
        .clone();
    if header.iter().collect::<Vec<_>>() != HEADER {
        return Err(DatasetError::Header {
            found: header.iter().collect::<Vec<_>>().join(","),
        });
    }

    let mut studies = Vec::new();
    let mut seen = HashSet::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            row_error(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != HEADER.len() {
            return Err(row_error(
                line,
                format!("expected {} fields, found {}", HEADER.len(), record.len()),
            ));
        }
        let label = record[0].to_string();
        if label.is_empty() {
            return Err(row_error(line, "study label must not be empty"));
        }
        let mut counts = [0u64; 4];
        for (j, slot) in counts.iter_mut().enumerate() {
            let field = &record[j + 1];
            if field.is_empty() {
                return Err(row_error(line, format!("missing value for {}", HEADER[j + 1])));
            }
            *slot = field.parse().map_err(|_| {
                row_error(
                    line,
                    format!("{} must be a non-negative integer, found `{field}`", HEADER[j + 1]),
                )
            })?;
        }
        let [rc, nc, rt, nt] = counts;
        let control = StudyArm::new(rc, nc)
            .map_err(|e| row_error(line, format!("control arm (r_ctrl={rc}, n_ctrl={nc}): {e}")))?;
        let experimental = StudyArm::new(rt, nt)
            .map_err(|e| row_error(line, format!("treatment arm (r_trt={rt}, n_trt={nt}): {e}")))?;
        if !seen.insert(label.clone()) {
            return Err(row_error(line, format!("duplicate study label `{label}`")));
        }
        studies.push(Study::new(label, control, experimental));
    }
    if studies.is_empty() {
        return Err(DatasetError::Empty);
    }
    MetaDataset::new(studies).map_err(|e| row_error(0, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const DEATH: &str = "study,r_ctrl,n_ctrl,r_trt,n_trt\n\
        Heffron,3,20,4,61\nGanschow,3,54,1,54\nSpada,3,36,4,36\nGras,3,34,2,50\n";

    #[test]
    fn crins_death_totals() {
        let d = parse_dataset_str(DEATH).unwrap();
        let totals: Vec<(u64, u64)> = d
            .studies()
            .iter()
            .map(|s| (s.control.total(), s.experimental.total()))
            .collect();
        assert_eq!(totals, vec![(20, 61), (54, 54), (36, 36), (34, 50)]);
        assert_eq!(d, bnhm::data::crins_death());
    }

    #[test]
    fn events_above_total_names_line_and_invariant() {
        let text = "study,r_ctrl,n_ctrl,r_trt,n_trt\na,1,10,2,20\nb,3,10,5,4\n";
        let msg = parse_dataset_str(text).unwrap_err().to_string();
        assert!(msg.starts_with("line 3:"), "{msg}");
        assert!(msg.contains("events <= total"), "{msg}");
    }

    #[test]
    fn empty_inputs() {
        for text in ["", "study,r_ctrl,n_ctrl,r_trt,n_trt\n"] {
            let msg = parse_dataset_str(text).unwrap_err().to_string();
            assert!(msg.contains("at least 1 study"), "{msg}");
        }
    }

    #[test]
    fn malformed_rows() {
        let missing = "study,r_ctrl,n_ctrl,r_trt,n_trt\na,1,10\n";
        assert!(parse_dataset_str(missing).unwrap_err().to_string().starts_with("line 2:"));
        let blank = "study,r_ctrl,n_ctrl,r_trt,n_trt\na,1,10,,20\n";
        assert!(parse_dataset_str(blank).unwrap_err().to_string().contains("missing value for r_trt"));
        let negative = "study,r_ctrl,n_ctrl,r_trt,n_trt\na,-1,10,2,20\n";
        assert!(parse_dataset_str(negative).unwrap_err().to_string().contains("non-negative integer"));
        let zero_total = "study,r_ctrl,n_ctrl,r_trt,n_trt\na,0,0,2,20\n";
        assert!(parse_dataset_str(zero_total).unwrap_err().to_string().contains("total >= 1"));
        let dup = "study,r_ctrl,n_ctrl,r_trt,n_trt\na,1,10,2,20\na,1,10,2,20\n";
        assert!(parse_dataset_str(dup).unwrap_err().to_string().contains("line 3: duplicate"));
        let header = "trial,a,b,c,d\nx,1,2,1,2\n";
        assert!(matches!(parse_dataset_str(header), Err(DatasetError::Header { .. })));
    }
}

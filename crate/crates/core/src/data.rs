//! Two-arm binary outcome data.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

/// Event count and number of patients in one treatment arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawArm")]
pub struct StudyArm {
    events: u64,
    total: u64,
}

#[derive(Deserialize)]
struct RawArm {
    events: u64,
    total: u64,
}

impl TryFrom<RawArm> for StudyArm {
    type Error = Error;

    fn try_from(raw: RawArm) -> Result<Self> {
        StudyArm::new(raw.events, raw.total)
    }
}

impl StudyArm {
    pub fn new(events: u64, total: u64) -> Result<Self> {
        if total < 1 {
            return Err(Error::InvalidArm(format!(
                "total >= 1 violated (total = {total})"
            )));
        }
        if events > total {
            return Err(Error::InvalidArm(format!(
                "events <= total violated ({events} > {total})"
            )));
        }
        Ok(Self { events, total })
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn non_events(&self) -> u64 {
        self.total - self.events
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Study {
    pub label: String,
    pub control: StudyArm,
    pub experimental: StudyArm,
}

impl Study {
    pub fn new(label: impl Into<String>, control: StudyArm, experimental: StudyArm) -> Self {
        Self {
            label: label.into(),
            control,
            experimental,
        }
    }

    /// Exactly one arm without events.
    pub fn is_single_zero(&self) -> bool {
        (self.control.events == 0) != (self.experimental.events == 0)
    }

    pub fn is_double_zero(&self) -> bool {
        self.control.events == 0 && self.experimental.events == 0
    }

    /// The same study with control and experimental arms exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            label: self.label.clone(),
            control: self.experimental,
            experimental: self.control,
        }
    }
}

/// An ordered, non-empty collection of studies with unique labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Study>", into = "Vec<Study>")]
pub struct MetaDataset {
    studies: Vec<Study>,
}

impl TryFrom<Vec<Study>> for MetaDataset {
    type Error = Error;

    fn try_from(studies: Vec<Study>) -> Result<Self> {
        MetaDataset::new(studies)
    }
}

impl From<MetaDataset> for Vec<Study> {
    fn from(d: MetaDataset) -> Self {
        d.studies
    }
}

impl MetaDataset {
    pub fn new(studies: Vec<Study>) -> Result<Self> {
        if studies.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut seen = HashSet::new();
        for s in &studies {
            if !seen.insert(s.label.as_str()) {
                return Err(Error::DuplicateLabel(s.label.clone()));
            }
        }
        Ok(Self { studies })
    }

    /// Builds a dataset from `(r_ctrl, n_ctrl, r_trt, n_trt)` rows labelled `study1..`.
    pub fn from_counts(rows: &[(u64, u64, u64, u64)]) -> Result<Self> {
        let studies = rows
            .iter()
            .enumerate()
            .map(|(i, &(rc, nc, rt, nt))| {
                Ok(Study::new(
                    format!("study{}", i + 1),
                    StudyArm::new(rc, nc)?,
                    StudyArm::new(rt, nt)?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(studies)
    }

    pub fn studies(&self) -> &[Study] {
        &self.studies
    }

    pub fn len(&self) -> usize {
        self.studies.len()
    }

    /// Always false: a dataset holds at least one study.
    pub fn is_empty(&self) -> bool {
        self.studies.is_empty()
    }

    pub fn swapped(&self) -> Self {
        Self {
            studies: self.studies.iter().map(Study::swapped).collect(),
        }
    }
}

/// Patient deaths in the paediatric liver transplantation review of IL-2
/// receptor antibodies (Crins et al. 2014).
pub fn crins_death() -> MetaDataset {
    let rows = [
        ("Heffron", (3, 20), (4, 61)),
        ("Ganschow", (3, 54), (1, 54)),
        ("Spada", (3, 36), (4, 36)),
        ("Gras", (3, 34), (2, 50)),
    ];
    from_table(&rows)
}

/// Post-transplant lymphoproliferative disease in the same review.
pub fn crins_ptld() -> MetaDataset {
    let rows = [
        ("Schuller", (0, 12), (0, 18)),
        ("Ganschow", (0, 54), (1, 54)),
        ("Spada", (1, 36), (1, 36)),
    ];
    from_table(&rows)
}

fn from_table(rows: &[(&str, (u64, u64), (u64, u64))]) -> MetaDataset {
    let studies = rows
        .iter()
        .map(|&(label, (rc, nc), (rt, nt))| {
            Study::new(
                label,
                StudyArm::new(rc, nc).expect("valid table"),
                StudyArm::new(rt, nt).expect("valid table"),
            )
        })
        .collect();
    MetaDataset::new(studies).expect("valid table")
}

//! Likert questionnaire tables and their CSV form.
//!
//! CSV header: `participant,workflow,measure,score`, one rating per row.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::session::{Measure, WorkflowKind};

#[derive(Debug, Error)]
pub enum LikertError {
    #[error("csv row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Deserialize)]
struct CsvRecord {
    participant: String,
    workflow: String,
    measure: String,
    score: i64,
}

/// Participants by workflows for one measure; cells are 1-7 or missing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LikertTable {
    pub measure: Measure,
    pub workflows: Vec<WorkflowKind>,
    pub participants: Vec<String>,
    pub cells: Vec<Vec<Option<u8>>>,
}

impl LikertTable {
    pub fn new(measure: Measure, workflows: Vec<WorkflowKind>) -> Self {
        LikertTable {
            measure,
            workflows,
            participants: Vec::new(),
            cells: Vec::new(),
        }
    }

    pub fn push_row(&mut self, participant: impl Into<String>, row: Vec<Option<u8>>) {
        assert_eq!(row.len(), self.workflows.len(), "row width must match workflows");
        self.participants.push(participant.into());
        self.cells.push(row);
    }

    /// Rows without missing cells, as numeric values (listwise deletion).
    pub fn complete_rows(&self) -> Vec<Vec<f64>> {
        self.cells
            .iter()
            .filter_map(|row| row.iter().map(|c| c.map(f64::from)).collect::<Option<Vec<f64>>>())
            .collect()
    }

    pub fn column_index(&self, workflow: WorkflowKind) -> Option<usize> {
        self.workflows.iter().position(|w| *w == workflow)
    }
}

/// Reads the long-format CSV into one table per measure. Workflow columns
/// are the sorted set of workflows seen anywhere in the file; participants
/// keep first-appearance order.
pub fn read_csv(reader: impl Read) -> Result<BTreeMap<Measure, LikertTable>, LikertError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut records = Vec::new();
    for (i, rec) in rdr.deserialize::<CsvRecord>().enumerate() {
        // header is row 1
        let row = i + 2;
        let rec = rec.map_err(|e| LikertError::Row {
            row,
            message: e.to_string(),
        })?;
        let bad = |message: String| LikertError::Row { row, message };
        let workflow: WorkflowKind = rec.workflow.parse().map_err(bad)?;
        let measure: Measure = rec.measure.parse().map_err(bad)?;
        if !(1..=7).contains(&rec.score) {
            return Err(bad(format!("score {} outside 1..=7", rec.score)));
        }
        records.push((row, rec.participant, workflow, measure, rec.score as u8));
    }

    let workflows: Vec<WorkflowKind> = records.iter().map(|r| r.2).collect::<BTreeSet<_>>().into_iter().collect();
    let mut participants: Vec<String> = Vec::new();
    for r in &records {
        if !participants.contains(&r.1) {
            participants.push(r.1.clone());
        }
    }

    let mut tables: BTreeMap<Measure, LikertTable> = BTreeMap::new();
    for (row, participant, workflow, measure, score) in records {
        let table = tables.entry(measure).or_insert_with(|| {
            let mut t = LikertTable::new(measure, workflows.clone());
            for p in &participants {
                t.push_row(p.clone(), vec![None; workflows.len()]);
            }
            t
        });
        let p = participants.iter().position(|p| *p == participant).expect("participant indexed");
        let c = table.column_index(workflow).expect("workflow indexed");
        if table.cells[p][c].is_some() {
            return Err(LikertError::Row {
                row,
                message: format!("duplicate rating for {participant}/{workflow}/{measure}"),
            });
        }
        table.cells[p][c] = Some(score);
    }
    // Drop participants with no ratings at all for a measure.
    for table in tables.values_mut() {
        let keep: Vec<bool> = table.cells.iter().map(|r| r.iter().any(Option::is_some)).collect();
        let mut i = 0;
        table.participants.retain(|_| {
            i += 1;
            keep[i - 1]
        });
        table.cells.retain(|r| r.iter().any(Option::is_some));
    }
    Ok(tables)
}

#[cfg(test)]
mod tests {
    use super::*;

    const CSV: &str = "participant,workflow,measure,score
p1,W1,ownership,3
p1,W2,ownership,4
p1,W3,ownership,6
p2,W1,ownership,2
p2,W3,ownership,5
p2,W2,ownership,2
p3,W1,ownership,4
p3,W3,ownership,7
p1,W3,art,5
";

    #[test]
    fn parses_long_format() {
        let tables = read_csv(CSV.as_bytes()).unwrap();
        let own = &tables[&Measure::Ownership];
        assert_eq!(own.workflows, vec![WorkflowKind::W1, WorkflowKind::W2, WorkflowKind::W3]);
        assert_eq!(own.participants, vec!["p1", "p2", "p3"]);
        assert_eq!(own.cells[2], vec![Some(4), None, Some(7)]);
        assert_eq!(own.complete_rows(), vec![vec![3.0, 4.0, 6.0], vec![2.0, 2.0, 5.0]]);
        let art = &tables[&Measure::Art];
        assert_eq!(art.participants, vec!["p1"]);
    }

    #[test]
    fn rejects_bad_rows() {
        let dup = "participant,workflow,measure,score\np1,W1,art,3\np1,W1,art,4\n";
        assert!(matches!(read_csv(dup.as_bytes()), Err(LikertError::Row { row: 3, .. })));
        let range = "participant,workflow,measure,score\np1,W1,art,9\n";
        assert!(matches!(read_csv(range.as_bytes()), Err(LikertError::Row { row: 2, .. })));
        let wf = "participant,workflow,measure,score\np1,W7,art,3\n";
        assert!(read_csv(wf.as_bytes()).is_err());
    }
}

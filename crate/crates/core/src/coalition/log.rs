use std::io;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PassKind {
    Merge,
    Split,
    Cluster,
}

/// One evaluated candidate of a merge, split or clustering step; values a step
/// does not produce (or a failed solve) are left empty.
///
/// `part_a`/`part_b` are the standalone optima of the two sides, `share_a`/`share_b`
/// their catch inside the merged coalition, and `margin` is
/// `merged - (part_a + part_b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub day: usize,
    pub epoch: usize,
    pub pass: PassKind,
    pub incumbent: String,
    pub candidate: String,
    pub merged_objective: Option<f64>,
    pub part_a: Option<f64>,
    pub part_b: Option<f64>,
    pub share_a: Option<f64>,
    pub share_b: Option<f64>,
    pub margin: Option<f64>,
    pub accepted: bool,
    pub note: String,
}

/// Append-only record of every structure decision in a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DecisionLog {
    records: Vec<DecisionRecord>,
}

impl DecisionLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, record: DecisionRecord) {
        self.records.push(record);
    }

    pub fn extend(&mut self, other: DecisionLog) {
        self.records.extend(other.records);
    }

    pub fn records(&self) -> &[DecisionRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn accepted(&self) -> impl Iterator<Item = &DecisionRecord> {
        self.records.iter().filter(|r| r.accepted)
    }

    pub fn write_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_header_and_rows() {
        let mut log = DecisionLog::new();
        log.push(DecisionRecord {
            day: 30,
            epoch: 1,
            pass: PassKind::Merge,
            incumbent: "{1}{2}".into(),
            candidate: "{1,2}".into(),
            merged_objective: Some(10.0),
            part_a: Some(4.0),
            part_b: Some(5.0),
            share_a: Some(4.5),
            share_b: Some(5.5),
            margin: None,
            accepted: true,
            note: String::new(),
        });
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("day,epoch,pass,incumbent"));
        assert!(lines.next().unwrap().starts_with("30,1,merge,{1}{2},\"{1,2}\",10.0"));
    }
}

//! Machine-readable verification reports: one JSON line per identity plus a
//! summary record.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Inconclusive,
}

/// Result of a single identity check, before it is wrapped in a record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckOutcome {
    pub status: Status,
    pub detail: Option<String>,
}

impl CheckOutcome {
    pub fn pass() -> Self {
        CheckOutcome {
            status: Status::Pass,
            detail: None,
        }
    }

    pub fn fail(detail: impl Into<String>) -> Self {
        CheckOutcome {
            status: Status::Fail,
            detail: Some(detail.into()),
        }
    }

    pub fn inconclusive(detail: impl Into<String>) -> Self {
        CheckOutcome {
            status: Status::Inconclusive,
            detail: Some(detail.into()),
        }
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }

    /// Combine sequentially checked sub-identities: any failure wins, then
    /// any inconclusive, otherwise pass.
    pub fn merge(self, other: CheckOutcome) -> CheckOutcome {
        match (self.status, other.status) {
            (Status::Fail, _) => self,
            (_, Status::Fail) => other,
            (Status::Inconclusive, _) => self,
            (_, Status::Inconclusive) => other,
            _ => self,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdentityRecord {
    pub suite: String,
    pub identity_id: String,
    pub paper_anchor: String,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub discrepancy: Option<String>,
    pub wall_time_ms: u128,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    pub total: usize,
    pub pass: usize,
    pub fail: usize,
    pub inconclusive: usize,
}

#[derive(Debug, Clone, Default)]
pub struct Report {
    pub records: Vec<IdentityRecord>,
}

impl Report {
    pub fn new() -> Self {
        Report::default()
    }

    pub fn push(&mut self, record: IdentityRecord) {
        self.records.push(record);
    }

    /// Order-stable: sorted by identity id.
    pub fn sorted(mut self) -> Self {
        self.records
            .sort_by(|a, b| a.identity_id.cmp(&b.identity_id));
        self
    }

    pub fn summary(&self) -> Summary {
        Summary {
            total: self.records.len(),
            pass: self
                .records
                .iter()
                .filter(|r| r.status == Status::Pass)
                .count(),
            fail: self
                .records
                .iter()
                .filter(|r| r.status == Status::Fail)
                .count(),
            inconclusive: self
                .records
                .iter()
                .filter(|r| r.status == Status::Inconclusive)
                .count(),
        }
    }

    pub fn has_failures(&self) -> bool {
        self.records.iter().any(|r| r.status == Status::Fail)
    }

    /// JSON lines: every record, then the summary.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out.push_str(
            &serde_json::to_string(&serde_json::json!({ "summary": self.summary() }))
                .expect("summary serializes"),
        );
        out.push('\n');
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_lines_shape() {
        let mut r = Report::new();
        r.push(IdentityRecord {
            suite: "qlattice".into(),
            identity_id: "unitarity".into(),
            paper_anchor: "S^{21}(z)S(-z)=1".into(),
            status: Status::Pass,
            discrepancy: None,
            wall_time_ms: 3,
        });
        r.push(IdentityRecord {
            suite: "qlattice".into(),
            identity_id: "qybe".into(),
            paper_anchor: "S^{12}S^{13}S^{23}".into(),
            status: Status::Fail,
            discrepancy: Some("at (h^1, z1^0 z2^0)".into()),
            wall_time_ms: 5,
        });
        let r = r.sorted();
        assert_eq!(r.records[0].identity_id, "qybe");
        assert!(r.has_failures());
        let text = r.to_json_lines();
        assert_eq!(text.lines().count(), 3);
        let summary: serde_json::Value =
            serde_json::from_str(text.lines().last().unwrap()).unwrap();
        assert_eq!(summary["summary"]["fail"], 1);
    }
}

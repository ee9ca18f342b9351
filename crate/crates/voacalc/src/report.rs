use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    ExactPass,
    TolPass,
    Fail,
    Skipped,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Entry {
    pub check: String,
    pub subject: String,
    pub status: Status,
    pub residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Report {
    pub entries: Vec<Entry>,
}

impl Report {
    pub fn new() -> Self {
        Report::default()
    }

    pub fn push(&mut self, check: &str, subject: impl Into<String>, status: Status, residual: f64) {
        self.entries.push(Entry { check: check.into(), subject: subject.into(), status, residual, detail: None });
    }

    pub fn push_detail(&mut self, check: &str, subject: impl Into<String>, status: Status, residual: f64, detail: impl Into<String>) {
        self.entries.push(Entry { check: check.into(), subject: subject.into(), status, residual, detail: Some(detail.into()) });
    }

    /// Exact comparison result: pass iff the residual vanishes.
    pub fn exact(&mut self, check: &str, subject: impl Into<String>, residual: f64) {
        let st = if residual == 0.0 { Status::ExactPass } else { Status::Fail };
        self.push(check, subject, st, residual);
    }

    pub fn tol(&mut self, check: &str, subject: impl Into<String>, residual: f64, tol: f64) {
        let st = if residual <= tol { Status::TolPass } else { Status::Fail };
        self.push(check, subject, st, residual);
    }

    /// Records exact or tolerance result depending on the backend.
    pub fn backend(&mut self, exact_backend: bool, check: &str, subject: impl Into<String>, residual: f64, tol: f64) {
        if exact_backend {
            self.exact(check, subject, residual)
        } else {
            self.tol(check, subject, residual, tol)
        }
    }

    pub fn skip(&mut self, check: &str, subject: impl Into<String>, why: &str) {
        self.push_detail(check, subject, Status::Skipped, 0.0, why);
    }

    pub fn extend(&mut self, o: Report) {
        self.entries.extend(o.entries);
    }

    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.status != Status::Fail)
    }

    pub fn failures(&self) -> Vec<&Entry> {
        self.entries.iter().filter(|e| e.status == Status::Fail).collect()
    }

    pub fn count(&self, st: Status) -> usize {
        self.entries.iter().filter(|e| e.status == st).count()
    }

    pub fn max_residual(&self) -> f64 {
        self.entries.iter().filter(|e| e.status != Status::Skipped).map(|e| e.residual).fold(0.0, f64::max)
    }

    /// Deterministic order: by check, then subject.
    pub fn sorted(mut self) -> Self {
        self.entries.sort_by(|a, b| (a.check.as_str(), a.subject.as_str()).cmp(&(b.check.as_str(), b.subject.as_str())));
        self
    }

    pub fn summary(&self) -> String {
        format!(
            "{} exact, {} tolerance, {} failed, {} skipped",
            self.count(Status::ExactPass),
            self.count(Status::TolPass),
            self.count(Status::Fail),
            self.count(Status::Skipped)
        )
    }
}

//! Result rows shared by the evaluators and the command-line reports.

use serde::{Deserialize, Serialize};

/// Version of the row and summary layout.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Skipped,
    Refused,
}

impl Verdict {
    pub fn from_pass(pass: bool) -> Self {
        if pass {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Skipped => "skipped",
            Verdict::Refused => "refused",
        }
    }

    pub fn is_failure(self) -> bool {
        self == Verdict::Fail
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub scenario: String,
    pub op: String,
    pub p: Option<f64>,
    pub q: Option<f64>,
    pub t: Option<f64>,
    pub s: Option<f64>,
    pub value: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
}

impl Row {
    pub const HEADER: [&'static str; 9] = ["scenario", "op", "p", "q", "t", "s", "value", "tolerance", "verdict"];

    pub fn new(scenario: &str, op: &str, value: f64, tolerance: f64, verdict: Verdict) -> Self {
        Self { scenario: scenario.to_string(), op: op.to_string(), p: None, q: None, t: None, s: None, value, tolerance, verdict }
    }

    pub fn with_p(mut self, p: f64) -> Self {
        self.p = Some(p);
        self
    }

    pub fn with_q(mut self, q: f64) -> Self {
        self.q = Some(q);
        self
    }

    pub fn with_times(mut self, t: f64, s: f64) -> Self {
        self.t = Some(t);
        self.s = Some(s);
        self
    }

    /// CSV fields in header order; absent values are empty.
    pub fn fields(&self) -> [String; 9] {
        let opt = |v: Option<f64>| v.map(fmt_num).unwrap_or_default();
        [
            self.scenario.clone(),
            self.op.clone(),
            opt(self.p),
            opt(self.q),
            opt(self.t),
            opt(self.s),
            fmt_num(self.value),
            fmt_num(self.tolerance),
            self.verdict.to_string(),
        ]
    }
}

/// Shortest round-trip representation, so identical runs give identical bytes.
pub fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{v:e}")
    }
}

/// Pass/fail counts over a set of rows.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Tally {
    pub pass: usize,
    pub fail: usize,
    pub skipped: usize,
    pub refused: usize,
}

impl Tally {
    pub fn of(rows: &[Row]) -> Self {
        let mut t = Tally::default();
        for r in rows {
            match r.verdict {
                Verdict::Pass => t.pass += 1,
                Verdict::Fail => t.fail += 1,
                Verdict::Skipped => t.skipped += 1,
                Verdict::Refused => t.refused += 1,
            }
        }
        t
    }

    pub fn all_pass(&self) -> bool {
        self.fail == 0
    }
}

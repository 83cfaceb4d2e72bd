//! One-line verdict records: `CHECK <name> <empirical> <bound> <PASS|FAIL>`.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckRecord {
    /// Whitespace-free identifier.
    pub name: String,
    pub empirical: f64,
    pub bound: f64,
    pub verdict: Verdict,
}

impl CheckRecord {
    /// Passes when `empirical <= bound + slack`.
    pub fn at_most(name: impl Into<String>, empirical: f64, bound: f64, slack: f64) -> Self {
        let verdict = Verdict::from_bool(empirical <= bound + slack);
        Self::new(name, empirical, bound, verdict)
    }

    pub fn new(name: impl Into<String>, empirical: f64, bound: f64, verdict: Verdict) -> Self {
        let name: String = name.into();
        let name = name.split_whitespace().collect::<Vec<_>>().join("_");
        Self { name, empirical, bound, verdict }
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    /// Inverse of the `Display` form.
    pub fn parse(line: &str) -> Option<Self> {
        let mut parts = line.split_whitespace();
        if parts.next()? != "CHECK" {
            return None;
        }
        let name = parts.next()?.to_string();
        let empirical = parts.next()?.parse().ok()?;
        let bound = parts.next()?.parse().ok()?;
        let verdict = match parts.next()? {
            "PASS" => Verdict::Pass,
            "FAIL" => Verdict::Fail,
            _ => return None,
        };
        parts.next().is_none().then_some(Self { name, empirical, bound, verdict })
    }
}

impl fmt::Display for CheckRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CHECK {} {} {} {}", self.name, self.empirical, self.bound, self.verdict)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_text() {
        let rec = CheckRecord::at_most("utility bound n=10", 1234.5678901234567, 40557.86, 0.0);
        let line = rec.to_string();
        assert_eq!(line, "CHECK utility_bound_n=10 1234.5678901234567 40557.86 PASS");
        assert_eq!(CheckRecord::parse(&line), Some(rec));
        assert!(CheckRecord::parse("CHECK a 1 2").is_none());
        assert!(!CheckRecord::at_most("x", 2.0, 1.0, 0.5).passed());
    }
}

use std::fmt::Write;

use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    /// Not evaluated because a prerequisite check failed.
    Skip,
}

/// One named property with its measured value and threshold.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    /// Plain statement of the property under test.
    pub anchor: String,
    pub status: Status,
    pub value: f64,
    pub tolerance: f64,
    /// `true` when the value must stay below the tolerance, `false` when it
    /// must exceed it.
    pub upper_bound: bool,
    pub detail: String,
}

impl Check {
    /// `value < tolerance` passes.
    pub fn below(name: &str, anchor: &str, value: f64, tolerance: f64) -> Self {
        let ok = value < tolerance;
        Self::make(name, anchor, ok, value, tolerance, true)
    }

    /// `value > tolerance` passes.
    pub fn above(name: &str, anchor: &str, value: f64, tolerance: f64) -> Self {
        let ok = value > tolerance;
        Self::make(name, anchor, ok, value, tolerance, false)
    }

    /// `lo <= value <= hi`; the tolerance field keeps the half-width.
    pub fn within(name: &str, anchor: &str, value: f64, lo: f64, hi: f64) -> Self {
        let mut c = Self::make(name, anchor, (lo..=hi).contains(&value), value, 0.5 * (hi - lo), true);
        c.detail = format!("range [{lo}, {hi}]");
        c
    }

    pub fn skipped(name: &str, anchor: &str, why: &str) -> Self {
        Self {
            name: name.into(),
            anchor: anchor.into(),
            status: Status::Skip,
            value: f64::NAN,
            tolerance: f64::NAN,
            upper_bound: true,
            detail: why.into(),
        }
    }

    pub fn failed(name: &str, anchor: &str, why: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            anchor: anchor.into(),
            status: Status::Fail,
            value: f64::NAN,
            tolerance: f64::NAN,
            upper_bound: true,
            detail: why.into(),
        }
    }

    fn make(name: &str, anchor: &str, ok: bool, value: f64, tolerance: f64, upper_bound: bool) -> Self {
        Self {
            name: name.into(),
            anchor: anchor.into(),
            status: if ok { Status::Pass } else { Status::Fail },
            value,
            tolerance,
            upper_bound,
            detail: String::new(),
        }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct PropertyReport {
    pub checks: Vec<Check>,
}

impl PropertyReport {
    pub fn push(&mut self, c: Check) {
        self.checks.push(c);
    }

    pub fn extend(&mut self, other: PropertyReport) {
        self.checks.extend(other.checks);
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| c.status == Status::Fail)
    }

    /// True iff no check failed. Skipped checks do not count as failures on
    /// their own; the check that caused the skip already does.
    pub fn all_passed(&self) -> bool {
        self.failures().next().is_none()
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "passed": self.all_passed(),
            "failures": self.failures().count(),
            // NaN is not valid JSON; skipped checks carry null instead
            "checks": self.checks.iter().map(|c| serde_json::json!({
                "name": c.name,
                "anchor": c.anchor,
                "status": c.status,
                "value": finite(c.value),
                "tolerance": finite(c.tolerance),
                "relation": if c.upper_bound { "<" } else { ">" },
                "detail": c.detail,
            })).collect::<Vec<_>>(),
        })
    }

    pub fn to_text(&self) -> String {
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(4).max(4);
        let mut s = String::new();
        for c in &self.checks {
            let tag = match c.status {
                Status::Pass => "PASS",
                Status::Fail => "FAIL",
                Status::Skip => "SKIP",
            };
            let rel = if c.upper_bound { "<" } else { ">" };
            let _ = write!(s, "{tag}  {:<width$}  {:>12.4e} {rel} {:<10.3e}", c.name, c.value, c.tolerance);
            if !c.detail.is_empty() {
                let _ = write!(s, "  {}", c.detail);
            }
            let _ = writeln!(s, "\n      {}", c.anchor);
        }
        let _ = writeln!(
            s,
            "{} checks, {} failed, {} skipped",
            self.checks.len(),
            self.failures().count(),
            self.checks.iter().filter(|c| c.status == Status::Skip).count()
        );
        s
    }
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relations() {
        assert!(Check::below("a", "", 1e-12, 1e-10).passed());
        assert!(!Check::below("a", "", 1e-9, 1e-10).passed());
        assert!(Check::above("a", "", 0.1, 1e-3).passed());
        assert!(Check::within("a", "", -0.5, -0.55, -0.45).passed());
        assert!(!Check::within("a", "", -0.6, -0.55, -0.45).passed());
        // a NaN measurement never passes
        assert!(!Check::below("a", "", f64::NAN, 1.0).passed());
    }

    #[test]
    fn skips_do_not_fail_a_report() {
        let mut r = PropertyReport::default();
        r.push(Check::below("a", "", 0.0, 1.0));
        r.push(Check::skipped("b", "", "prerequisite failed"));
        assert!(r.all_passed());
        r.push(Check::failed("c", "", "boom"));
        assert!(!r.all_passed());
        let j = r.to_json();
        assert_eq!(j["failures"], 1);
        assert!(j["checks"][1]["value"].is_null());
        assert!(r.to_text().contains("SKIP"));
    }
}

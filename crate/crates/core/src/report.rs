//! Structured results for geometry and identity checks: named residuals with
//! tolerances, aggregated over sample points, serializable as JSON.

use serde::{Deserialize, Serialize};

/// One named check: the largest residual seen, the point where it peaked,
/// and whether it stayed within tolerance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckEntry {
    pub name: String,
    pub max_residual: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// Reduced coordinates `(x, f̃)` of the worst sample.
    pub worst_point: Vec<f64>,
}

/// All checks for one model run, in insertion order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckReport {
    pub model: String,
    pub samples: usize,
    pub seed: u64,
    pub pass: bool,
    pub entries: Vec<CheckEntry>,
}

impl CheckReport {
    pub fn new(model: impl Into<String>, samples: usize, seed: u64) -> Self {
        CheckReport {
            model: model.into(),
            samples,
            seed,
            pass: true,
            entries: Vec::new(),
        }
    }

    /// Folds one observation into the named entry, creating it on first use.
    /// The entry keeps the maximum residual and the point producing it.
    pub fn record(&mut self, name: &str, tolerance: f64, residual: f64, point: &[f64]) {
        match self.entries.iter_mut().find(|e| e.name == name) {
            Some(e) => {
                if residual > e.max_residual {
                    e.max_residual = residual;
                    e.worst_point = point.to_vec();
                }
                e.tolerance = tolerance;
                e.pass = e.max_residual <= e.tolerance;
            }
            None => self.entries.push(CheckEntry {
                name: name.to_string(),
                max_residual: residual,
                tolerance,
                pass: residual <= tolerance,
                worst_point: point.to_vec(),
            }),
        }
        self.pass = self.entries.iter().all(|e| e.pass);
    }

    /// Merges another report's entries into this one (same record semantics).
    pub fn absorb(&mut self, other: &CheckReport) {
        for e in &other.entries {
            self.record(&e.name, e.tolerance, e.max_residual, &e.worst_point);
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialization");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> Result<Self, crate::error::CoreError> {
        serde_json::from_str(s)
            .map_err(|e| crate::error::CoreError::Parse(format!("check report: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_keeps_worst_point_and_pass_state() {
        let mut r = CheckReport::new("demo", 2, 7);
        r.record("alpha", 1e-8, 1e-10, &[0.0, 1.0]);
        assert!(r.pass);
        r.record("alpha", 1e-8, 3e-8, &[2.0, 3.0]);
        r.record("beta", 1e-6, 1e-9, &[4.0]);
        assert!(!r.pass);
        let e = &r.entries[0];
        assert_eq!(e.name, "alpha");
        assert_eq!(e.worst_point, vec![2.0, 3.0]);
        assert!(!e.pass);
        assert!(r.entries[1].pass);
    }

    #[test]
    fn json_round_trip() {
        let mut r = CheckReport::new("demo", 1, 1);
        r.record("alpha", 1e-8, 1e-10, &[0.5]);
        let s = r.to_json();
        let back = CheckReport::from_json(&s).unwrap();
        assert_eq!(back.entries.len(), 1);
        assert_eq!(back.model, "demo");
        assert_eq!(back.entries[0].worst_point, vec![0.5]);
    }
}

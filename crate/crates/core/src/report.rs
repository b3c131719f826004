//! Common JSON report shape emitted by the analyses.

use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub test: String,
    pub parameters: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stderr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expected: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z_score: Option<f64>,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub details: Option<serde_json::Value>,
}

impl AnalysisReport {
    pub fn new(test: impl Into<String>, parameters: serde_json::Value, pass: bool) -> Self {
        Self {
            test: test.into(),
            parameters,
            estimate: None,
            stderr: None,
            expected: None,
            z_score: None,
            pass,
            details: None,
        }
    }

    pub fn with_estimate(mut self, estimate: f64, stderr: Option<f64>) -> Self {
        self.estimate = Some(estimate);
        self.stderr = stderr;
        self
    }

    pub fn with_expected(mut self, expected: f64) -> Self {
        self.expected = Some(expected);
        self
    }

    pub fn with_z(mut self, z: f64) -> Self {
        self.z_score = Some(z);
        self
    }

    pub fn with_details(mut self, details: serde_json::Value) -> Self {
        self.details = Some(details);
        self
    }
}

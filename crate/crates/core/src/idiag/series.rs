//! Parameterised time-series forms for cash flows and other per-period
//! quantities.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeriesForm {
    /// `amount` every period.
    Constant,
    /// `initial + increment·k`.
    LinearRamp,
    /// `base·(1 + rate)^k`.
    GeometricGrowth,
    /// `amount` in the start period only.
    SinglePulse,
    /// Rises linearly to `peak` over `ramp` periods, then holds.
    RampThenFlat,
}

impl SeriesForm {
    pub const ALL: [SeriesForm; 5] = [
        SeriesForm::Constant,
        SeriesForm::LinearRamp,
        SeriesForm::GeometricGrowth,
        SeriesForm::SinglePulse,
        SeriesForm::RampThenFlat,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SeriesForm::Constant => "constant",
            SeriesForm::LinearRamp => "linear-ramp",
            SeriesForm::GeometricGrowth => "geometric-growth",
            SeriesForm::SinglePulse => "single-pulse",
            SeriesForm::RampThenFlat => "ramp-then-flat",
        }
    }

    pub fn from_name(name: &str) -> Option<SeriesForm> {
        Self::ALL.into_iter().find(|f| f.name() == name)
    }

    pub fn parameters(self) -> &'static [&'static str] {
        match self {
            SeriesForm::Constant => &["amount"],
            SeriesForm::LinearRamp => &["initial", "increment"],
            SeriesForm::GeometricGrowth => &["base", "rate"],
            SeriesForm::SinglePulse => &["amount"],
            SeriesForm::RampThenFlat => &["peak", "ramp"],
        }
    }

    /// Whether a parameter carries the series' own unit (as opposed to a
    /// dimensionless rate or a period count).
    pub fn parameter_is_amount(self, param: &str) -> bool {
        !matches!((self, param), (SeriesForm::GeometricGrowth, "rate") | (SeriesForm::RampThenFlat, "ramp"))
    }

    fn value_at(self, k: u32, p: &dyn Fn(&str) -> f64) -> f64 {
        let k = f64::from(k);
        match self {
            SeriesForm::Constant => p("amount"),
            SeriesForm::LinearRamp => p("initial") + p("increment") * k,
            SeriesForm::GeometricGrowth => p("base") * (1.0 + p("rate")).powf(k),
            SeriesForm::SinglePulse => {
                if k == 0.0 {
                    p("amount")
                } else {
                    0.0
                }
            }
            SeriesForm::RampThenFlat => {
                let ramp = p("ramp").max(1.0);
                if k + 1.0 < ramp {
                    p("peak") * (k + 1.0) / ramp
                } else {
                    p("peak")
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParamSource {
    Fixed(f64),
    /// Value of a Parameter node that precedes the owning node.
    Node(NodeId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub form: SeriesForm,
    pub params: BTreeMap<String, ParamSource>,
    /// First period with a nonzero entry (1-based).
    pub start: u32,
    pub duration: u32,
    /// When set, the effective start is the end of that node's series
    /// (sequenced tasks).
    pub follows: Option<NodeId>,
}

impl TimeSeries {
    pub fn new(form: SeriesForm, start: u32, duration: u32) -> Self {
        let duration = if form == SeriesForm::SinglePulse { 1 } else { duration };
        TimeSeries { form, params: BTreeMap::new(), start, duration, follows: None }
    }

    pub fn with(mut self, name: &str, source: ParamSource) -> Self {
        self.params.insert(name.to_string(), source);
        self
    }

    pub fn with_fixed(self, name: &str, value: f64) -> Self {
        self.with(name, ParamSource::Fixed(value))
    }

    pub fn parameter_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.params.values().filter_map(|p| match p {
            ParamSource::Node(id) => Some(*id),
            ParamSource::Fixed(_) => None,
        })
    }
}

/// Per-period amounts, index 0 holding period 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CashFlowVector(pub Vec<f64>);

impl CashFlowVector {
    pub fn zeros(horizon: usize) -> Self {
        CashFlowVector(vec![0.0; horizon])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SeriesError {
    #[error("parameter `{0}` has no value")]
    Unresolved(String),
    #[error("series must start at period 1 or later (got {0})")]
    StartBeforeFirstPeriod(u32),
    #[error("series duration must be at least one period")]
    EmptyDuration,
    #[error("parameter `{0}` is not finite")]
    NonFinite(String),
}

/// Expand a series over `horizon` periods. Node-valued parameters are read
/// from `node_values`.
pub fn expand_time_series(
    ts: &TimeSeries,
    node_values: &BTreeMap<NodeId, f64>,
    horizon: u32,
) -> Result<CashFlowVector, SeriesError> {
    if ts.start < 1 {
        return Err(SeriesError::StartBeforeFirstPeriod(ts.start));
    }
    if ts.duration < 1 {
        return Err(SeriesError::EmptyDuration);
    }
    let mut resolved = BTreeMap::new();
    for name in ts.form.parameters() {
        let value = match ts.params.get(*name) {
            Some(ParamSource::Fixed(v)) => *v,
            Some(ParamSource::Node(id)) => *node_values
                .get(id)
                .ok_or_else(|| SeriesError::Unresolved((*name).to_string()))?,
            None => return Err(SeriesError::Unresolved((*name).to_string())),
        };
        if !value.is_finite() {
            return Err(SeriesError::NonFinite((*name).to_string()));
        }
        resolved.insert(*name, value);
    }
    let lookup = |n: &str| resolved[n];
    let mut out = CashFlowVector::zeros(horizon as usize);
    for k in 0..ts.duration {
        let period = ts.start + k;
        if period > horizon {
            break;
        }
        out.0[(period - 1) as usize] = ts.form.value_at(k, &lookup);
    }
    Ok(out)
}

//! The `branchflow/1` JSON documents.
//!
//! Every document is an object whose `"format"` field is [`FORMAT`]; anything
//! else is rejected before the body is read.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::certify::StarInstance;
use crate::config::StarConfiguration;
use crate::cost::CostModel;
use crate::error::{Error, Result};
use crate::fermat::WeightedPoints;
use crate::model::{Atom, AtomicMeasure, Flow, TransportInstance};
use crate::tolerance::Tolerances;
use crate::vector::Point;

pub const FORMAT: &str = "branchflow/1";

/// Serialized form of a [`TransportInstance`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSpec {
    pub dimension: usize,
    pub sources: Vec<Atom>,
    pub sinks: Vec<Atom>,
    pub cost: CostModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<Tolerances>,
}

impl InstanceSpec {
    pub fn from_instance(instance: &TransportInstance) -> Self {
        Self {
            dimension: instance.dimension(),
            sources: instance.sources().atoms().to_vec(),
            sinks: instance.sinks().atoms().to_vec(),
            cost: instance.cost().clone(),
            tolerances: None,
        }
    }

    pub fn build(self) -> Result<(TransportInstance, Tolerances)> {
        let tol = self.tolerances.unwrap_or_default();
        let inst = TransportInstance::with_tolerances(
            self.dimension,
            AtomicMeasure::new(self.sources)?,
            AtomicMeasure::new(self.sinks)?,
            checked_cost(self.cost)?,
            &tol,
        )?;
        Ok((inst, tol))
    }
}

/// Re-runs the constructor checks on a deserialized cost model.
pub fn checked_cost(cost: CostModel) -> Result<CostModel> {
    match cost {
        CostModel::Power { p } => CostModel::power(p),
        table => Ok(table),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BundleBody {
    instance: InstanceSpec,
    flow: Flow,
}

/// A star given either by `"p"` or by a full `"cost"` model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StarBody {
    origin: Point,
    sinks: Vec<Atom>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source: Option<Point>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cost: Option<CostModel>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigBody {
    #[serde(default)]
    dimension: Option<usize>,
    directions: Vec<Point>,
    masses: Vec<f64>,
    #[serde(default)]
    p: Option<f64>,
    #[serde(default)]
    cost: Option<CostModel>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct PointsBody {
    points: Vec<Point>,
    weights: Vec<f64>,
}

fn cost_from(p: Option<f64>, cost: Option<CostModel>) -> Result<CostModel> {
    match (p, cost) {
        (Some(p), None) => CostModel::power(p),
        (None, Some(c)) => checked_cost(c),
        (None, None) => Err(Error::invalid("document needs \"p\" or \"cost\"")),
        (Some(_), Some(_)) => Err(Error::invalid("give either \"p\" or \"cost\", not both")),
    }
}

/// Parses `text`, checks the format tag and returns the remaining fields.
pub fn parse_document(text: &str) -> Result<Map<String, Value>> {
    let value: Value = serde_json::from_str(text)?;
    let Value::Object(mut map) = value else {
        return Err(Error::Format("document is not a JSON object".into()));
    };
    match map.remove("format") {
        Some(Value::String(f)) if f == FORMAT => Ok(map),
        Some(Value::String(f)) => Err(Error::Format(format!("unsupported format {f:?}, expected {FORMAT:?}"))),
        Some(_) => Err(Error::Format("\"format\" must be a string".into())),
        None => Err(Error::Format(format!("missing \"format\": {FORMAT:?}"))),
    }
}

fn body<T: DeserializeOwned>(map: Map<String, Value>) -> Result<T> {
    Ok(serde_json::from_value(Value::Object(map))?)
}

fn with_format<T: Serialize>(body: &T) -> Value {
    let mut map = Map::new();
    map.insert("format".into(), Value::String(FORMAT.into()));
    if let Value::Object(fields) = serde_json::to_value(body).expect("serializable") {
        map.extend(fields);
    }
    Value::Object(map)
}

/// Pretty-printed JSON with a trailing newline.
pub fn to_pretty(value: &Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

pub fn parse_instance(text: &str) -> Result<(TransportInstance, Tolerances)> {
    body::<InstanceSpec>(parse_document(text)?)?.build()
}

pub fn instance_to_json(instance: &TransportInstance) -> Value {
    with_format(&InstanceSpec::from_instance(instance))
}

pub fn parse_flow(text: &str) -> Result<Flow> {
    body(parse_document(text)?)
}

pub fn flow_to_json(flow: &Flow) -> Value {
    with_format(flow)
}

/// `{"format", "instance": {...}, "flow": {...}}`
pub fn parse_bundle(text: &str) -> Result<(TransportInstance, Flow, Tolerances)> {
    let b: BundleBody = body(parse_document(text)?)?;
    let (inst, tol) = b.instance.build()?;
    Ok((inst, b.flow, tol))
}

pub fn bundle_to_json(instance: &TransportInstance, flow: &Flow) -> Value {
    with_format(&BundleBody {
        instance: InstanceSpec::from_instance(instance),
        flow: flow.clone(),
    })
}

/// `{"format", "origin", "sinks": [{"point", "mass"}], "source"?, "p" | "cost"}`
pub fn parse_star(text: &str) -> Result<(StarInstance, CostModel)> {
    let b: StarBody = body(parse_document(text)?)?;
    let cost = cost_from(b.p, b.cost)?;
    Ok((StarInstance::new(b.origin, b.sinks, b.source)?, cost))
}

pub fn star_to_json(star: &StarInstance, cost: &CostModel) -> Value {
    let (p, cost) = match cost.exponent() {
        Some(p) => (Some(p), None),
        None => (None, Some(cost.clone())),
    };
    with_format(&StarBody {
        origin: star.origin.clone(),
        sinks: star.sinks.clone(),
        source: star.source.clone(),
        p,
        cost,
    })
}

/// `{"format", "dimension"?, "directions", "masses", "p" | "cost"}`
pub fn parse_config(text: &str) -> Result<(StarConfiguration, CostModel)> {
    let b: ConfigBody = body(parse_document(text)?)?;
    let cost = cost_from(b.p, b.cost)?;
    let d = b
        .dimension
        .or_else(|| b.directions.first().map(Vec::len))
        .ok_or_else(|| Error::invalid("configuration has no directions"))?;
    Ok((StarConfiguration::new(d, b.directions, b.masses)?, cost))
}

pub fn config_to_json(config: &StarConfiguration, cost: &CostModel) -> Value {
    let mut v = with_format(config);
    if let Value::Object(map) = &mut v {
        let c = serde_json::to_value(cost).expect("serializable");
        match cost.exponent() {
            Some(p) => map.insert("p".into(), p.into()),
            None => map.insert("cost".into(), c),
        };
    }
    v
}

/// `{"format", "points": [[...]], "weights": [...]}`
pub fn parse_weighted_points(text: &str) -> Result<WeightedPoints> {
    let b: PointsBody = body(parse_document(text)?)?;
    WeightedPoints::new(b.points, b.weights)
}

/// Any serializable result, tagged with the format.
pub fn report_to_json<T: Serialize>(report: &T) -> Value {
    with_format(report)
}

//! File formats: structure and decision CSVs, synthetic decision
//! generation, and the versioned JSON model file.

use std::collections::BTreeSet;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::behavior::{BehaviorError, BehaviorModel, ModelKind, Policy, TrainingFingerprint};
use crate::features::{FeatureSchema, SCHEMA_VERSION};
use crate::fewa::FewaParams;
use crate::game::{validate_decisions, Action, DecisionError, DecisionRecord, GameStructure, StructureError};
use crate::glm::FittedGlm;
use crate::simulator::{derive_seed, interaction_rng, simulate_interaction, SimulationConfig};

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const STRUCTURES_HEADER: [&str; 10] =
    ["id", "error", "delta", "infinity", "continuous", "risk", "r1", "r2", "cooperation", "dataset"];
pub const DECISIONS_HEADER: [&str; 6] =
    ["structure_id", "interaction_id", "player_id", "period", "action", "partner_action"];

/// The thirty experimental structures, as published.
pub const BUNDLED_STRUCTURES_CSV: &str = include_str!("../data/structures.csv");

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("header mismatch: expected [{expected}], found [{found}]")]
    HeaderMismatch { expected: String, found: String },
    #[error("row {row}, column {column}: {message}")]
    ParseError { row: usize, column: String, message: String },
    #[error("row {row}: {source}")]
    DomainError {
        row: usize,
        #[source]
        source: StructureError,
    },
    #[error("duplicate structure id {0}")]
    DuplicateId(String),
    #[error(transparent)]
    Decisions(#[from] DecisionError),
    #[error("model file schema mismatch: {0}")]
    SchemaVersionMismatch(String),
    #[error("corrupt model file: {0}")]
    CorruptFile(String),
    #[error(transparent)]
    Behavior(#[from] BehaviorError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn file_error(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::File { path: path.display().to_string(), source }
}

pub(crate) fn read_text(path: &Path) -> Result<String, IoError> {
    let mut s = String::new();
    fs::File::open(path).and_then(|mut f| f.read_to_string(&mut s)).map_err(file_error(path))?;
    Ok(s)
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    fs::File::create(path).and_then(|mut f| f.write_all(bytes)).map_err(file_error(path))
}

fn check_header(found: &csv::StringRecord, expected: &[&str]) -> Result<(), IoError> {
    if found.iter().map(str::trim).ne(expected.iter().copied()) {
        return Err(IoError::HeaderMismatch {
            expected: expected.join(","),
            found: found.iter().collect::<Vec<_>>().join(","),
        });
    }
    Ok(())
}

fn field<'a>(rec: &'a csv::StringRecord, row: usize, header: &[&str], col: usize) -> Result<&'a str, IoError> {
    rec.get(col).map(str::trim).ok_or_else(|| IoError::ParseError {
        row,
        column: header[col].to_string(),
        message: "missing field".into(),
    })
}

fn parse_field<T: std::str::FromStr>(
    rec: &csv::StringRecord,
    row: usize,
    header: &[&str],
    col: usize,
) -> Result<T, IoError>
where
    T::Err: std::fmt::Display,
{
    let raw = field(rec, row, header, col)?;
    raw.parse().map_err(|e: T::Err| IoError::ParseError {
        row,
        column: header[col].to_string(),
        message: format!("cannot parse {raw:?}: {e}"),
    })
}

fn parse_flag(rec: &csv::StringRecord, row: usize, col: usize) -> Result<bool, IoError> {
    match field(rec, row, &STRUCTURES_HEADER, col)? {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(IoError::ParseError {
            row,
            column: STRUCTURES_HEADER[col].to_string(),
            message: format!("expected 0 or 1, found {other:?}"),
        }),
    }
}

/// Parses and validates a structures CSV. Rows are numbered from 1
/// (the header is row 0).
pub fn parse_structures<R: Read>(reader: R) -> Result<Vec<GameStructure>, IoError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    check_header(rdr.headers()?, &STRUCTURES_HEADER)?;
    let h = &STRUCTURES_HEADER;
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec?;
        let coop_raw = field(&rec, row, h, 8)?;
        let observed_cooperation = if coop_raw.is_empty() { None } else { Some(parse_field(&rec, row, h, 8)?) };
        let s = GameStructure {
            id: field(&rec, row, h, 0)?.to_string(),
            error: parse_field(&rec, row, h, 1)?,
            delta: parse_field(&rec, row, h, 2)?,
            infinite: parse_flag(&rec, row, 3)?,
            continuous: parse_flag(&rec, row, 4)?,
            risk: parse_flag(&rec, row, 5)?,
            r1: parse_field(&rec, row, h, 6)?,
            r2: parse_field(&rec, row, h, 7)?,
            observed_cooperation,
            dataset: field(&rec, row, h, 9)?.to_string(),
        }
        .validate()
        .map_err(|source| IoError::DomainError { row, source })?;
        if !seen.insert(s.id.clone()) {
            return Err(IoError::DuplicateId(s.id));
        }
        out.push(s);
    }
    Ok(out)
}

pub fn load_structures(path: &Path) -> Result<Vec<GameStructure>, IoError> {
    parse_structures(read_text(path)?.as_bytes())
}

/// The bundled experimental structures.
pub fn bundled_structures() -> Vec<GameStructure> {
    parse_structures(BUNDLED_STRUCTURES_CSV.as_bytes()).expect("bundled fixture is valid")
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

pub fn structures_to_csv(structures: &[GameStructure]) -> Result<Vec<u8>, IoError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(STRUCTURES_HEADER)?;
    for s in structures {
        w.write_record([
            s.id.clone(),
            s.error.to_string(),
            s.delta.to_string(),
            flag(s.infinite).into(),
            flag(s.continuous).into(),
            flag(s.risk).into(),
            s.r1.to_string(),
            s.r2.to_string(),
            s.observed_cooperation.map(|c| c.to_string()).unwrap_or_default(),
            s.dataset.clone(),
        ])?;
    }
    w.into_inner().map_err(|e| IoError::Io(e.into_error()))
}

pub fn write_structures(path: &Path, structures: &[GameStructure]) -> Result<(), IoError> {
    write_bytes(path, &structures_to_csv(structures)?)
}

pub fn parse_decisions<R: Read>(reader: R) -> Result<Vec<DecisionRecord>, IoError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    check_header(rdr.headers()?, &DECISIONS_HEADER)?;
    let h = &DECISIONS_HEADER;
    let action = |rec: &csv::StringRecord, row: usize, col: usize| {
        let raw = field(rec, row, h, col)?;
        Action::parse(raw).ok_or_else(|| IoError::ParseError {
            row,
            column: h[col].to_string(),
            message: format!("expected C or D, found {raw:?}"),
        })
    };
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec?;
        out.push(DecisionRecord {
            structure_id: field(&rec, row, h, 0)?.to_string(),
            interaction_id: parse_field(&rec, row, h, 1)?,
            player_id: parse_field(&rec, row, h, 2)?,
            period: parse_field(&rec, row, h, 3)?,
            action: action(&rec, row, 4)?,
            partner_action: action(&rec, row, 5)?,
        });
    }
    Ok(out)
}

/// Loads decisions and checks them against `structures`.
pub fn load_decisions(path: &Path, structures: &[GameStructure]) -> Result<Vec<DecisionRecord>, IoError> {
    let decisions = parse_decisions(read_text(path)?.as_bytes())?;
    validate_decisions(structures, &decisions)?;
    Ok(decisions)
}

pub fn decisions_to_csv(decisions: &[DecisionRecord]) -> Result<Vec<u8>, IoError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(DECISIONS_HEADER)?;
    for d in decisions {
        w.write_record([
            d.structure_id.as_str(),
            &d.interaction_id.to_string(),
            &d.player_id.to_string(),
            &d.period.to_string(),
            d.action.code(),
            d.partner_action.code(),
        ])?;
    }
    w.into_inner().map_err(|e| IoError::Io(e.into_error()))
}

pub fn write_decisions(path: &Path, decisions: &[DecisionRecord]) -> Result<(), IoError> {
    write_bytes(path, &decisions_to_csv(decisions)?)
}

/// Simulated decisions under the default simulation settings.
pub fn generate_synthetic<P: Policy + ?Sized>(
    truth: &P,
    structures: &[GameStructure],
    interactions_per_structure: usize,
    seed: u64,
) -> Result<Vec<DecisionRecord>, BehaviorError> {
    generate_synthetic_with(truth, structures, &SimulationConfig::new(interactions_per_structure, seed))
}

/// Plays `config.n_interactions` interactions per structure and records the
/// implemented actions from both players' perspectives. Interaction `i` of
/// every structure uses player ids `2i` and `2i + 1`.
pub fn generate_synthetic_with<P: Policy + ?Sized>(
    truth: &P,
    structures: &[GameStructure],
    config: &SimulationConfig,
) -> Result<Vec<DecisionRecord>, BehaviorError> {
    let mut out = Vec::new();
    for (k, game) in structures.iter().enumerate() {
        let structure_seed = derive_seed(config.seed, k as u64);
        for i in 0..config.n_interactions as u64 {
            let mut rng = interaction_rng(structure_seed, i);
            let trace = simulate_interaction(truth, game, config, &mut rng)?;
            for (t, joint) in trace.implemented.iter().enumerate() {
                for p in 0..2 {
                    out.push(DecisionRecord {
                        structure_id: game.id.clone(),
                        interaction_id: i,
                        player_id: 2 * i + p as u64,
                        period: t as u32 + 1,
                        action: joint[p],
                        partner_action: joint[1 - p],
                    });
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GlmDoc {
    names: Vec<String>,
    weights: Vec<f64>,
    /// `null` marks a coefficient dropped as aliased.
    standard_errors: Vec<Option<f64>>,
    log_likelihood: f64,
    converged: bool,
    iterations: usize,
    n_rows: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    schema_version: String,
    toolkit_version: String,
    kind: ModelKind,
    static_component: Option<GlmDoc>,
    dynamic_component: Option<GlmDoc>,
    baseline_rate: Option<f64>,
    fewa: Option<FewaParams<f64>>,
    training: Option<TrainingFingerprint>,
}

impl From<&FittedGlm<f64>> for GlmDoc {
    fn from(g: &FittedGlm<f64>) -> Self {
        GlmDoc {
            names: g.names.clone(),
            weights: g.weights.clone(),
            standard_errors: g.standard_errors.iter().map(|&v| (!v.is_nan()).then_some(v)).collect(),
            log_likelihood: g.log_likelihood,
            converged: g.converged,
            iterations: g.iterations,
            n_rows: g.n_rows,
        }
    }
}

impl GlmDoc {
    fn into_glm(self, expected: FeatureSchema) -> Result<FittedGlm<f64>, IoError> {
        if self.names.iter().map(String::as_str).ne(expected.names().iter().copied()) {
            return Err(IoError::SchemaVersionMismatch(format!(
                "feature names [{}] do not match the {} schema",
                self.names.join(", "),
                SCHEMA_VERSION
            )));
        }
        if self.weights.len() != self.names.len() || self.standard_errors.len() != self.names.len() {
            return Err(IoError::CorruptFile("weight and name counts differ".into()));
        }
        Ok(FittedGlm {
            names: self.names,
            weights: self.weights,
            standard_errors: self.standard_errors.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect(),
            log_likelihood: self.log_likelihood,
            converged: self.converged,
            iterations: self.iterations,
            n_rows: self.n_rows,
            trace: Vec::new(),
        })
    }
}

/// Writes `value` as JSON with sorted keys, two-space indentation, and
/// every float in 17-significant-digit scientific notation.
pub fn canonical_json(value: &Value) -> String {
    let mut out = String::new();
    write_value(value, 0, &mut out);
    out.push('\n');
    out
}

fn write_value(v: &Value, indent: usize, out: &mut String) {
    let pad = |n: usize, out: &mut String| out.extend(std::iter::repeat_n(' ', n));
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_f64() {
                out.push_str(&format!("{:.16e}", n.as_f64().expect("f64")));
            } else {
                out.push_str(&n.to_string());
            }
        }
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(items) if items.is_empty() => out.push_str("[]"),
        Value::Array(items) => {
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                pad(indent + 2, out);
                write_value(item, indent + 2, out);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            pad(indent, out);
            out.push(']');
        }
        Value::Object(map) if map.is_empty() => out.push_str("{}"),
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (i, k) in keys.iter().enumerate() {
                pad(indent + 2, out);
                out.push_str(&Value::String((*k).clone()).to_string());
                out.push_str(": ");
                write_value(&map[*k], indent + 2, out);
                out.push_str(if i + 1 < keys.len() { ",\n" } else { "\n" });
            }
            pad(indent, out);
            out.push('}');
        }
    }
}

/// Canonical model file contents.
pub fn model_to_json(model: &BehaviorModel) -> String {
    let doc = ModelDoc {
        schema_version: SCHEMA_VERSION.to_string(),
        toolkit_version: TOOLKIT_VERSION.to_string(),
        kind: model.kind,
        static_component: model.static_glm.as_ref().map(GlmDoc::from),
        dynamic_component: model.dynamic_glm.as_ref().map(GlmDoc::from),
        baseline_rate: model.baseline_rate,
        fewa: model.fewa,
        training: model.training.clone(),
    };
    canonical_json(&serde_json::to_value(doc).expect("model document serializes"))
}

pub fn model_from_json(text: &str) -> Result<BehaviorModel, IoError> {
    let value: Value = serde_json::from_str(text).map_err(|e| IoError::CorruptFile(e.to_string()))?;
    match value.get("schema_version").and_then(Value::as_str) {
        Some(SCHEMA_VERSION) => {}
        Some(other) => {
            return Err(IoError::SchemaVersionMismatch(format!("expected {SCHEMA_VERSION}, found {other}")));
        }
        None => return Err(IoError::CorruptFile("missing schema_version".into())),
    }
    let doc: ModelDoc = serde_json::from_value(value).map_err(|e| IoError::CorruptFile(e.to_string()))?;
    let model = BehaviorModel {
        kind: doc.kind,
        static_glm: doc.static_component.map(|g| g.into_glm(FeatureSchema::STATIC)).transpose()?,
        dynamic_glm: doc.dynamic_component.map(|g| g.into_glm(FeatureSchema::DYNAMIC)).transpose()?,
        baseline_rate: doc.baseline_rate,
        fewa: doc.fewa,
        training: doc.training,
    };
    Ok(model.validate()?)
}

pub fn save_model(model: &BehaviorModel, path: &Path) -> Result<(), IoError> {
    write_bytes(path, model_to_json(model).as_bytes())
}

pub fn load_model(path: &Path) -> Result<BehaviorModel, IoError> {
    model_from_json(&read_text(path)?)
}

/// Hex SHA-256 of the canonical model file.
pub fn model_fingerprint(model: &BehaviorModel) -> String {
    sha256_hex(model_to_json(model).as_bytes())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_fixture_has_thirty_rows() {
        let s = bundled_structures();
        assert_eq!(s.len(), 30);
        assert_eq!(s[0].dataset, "BR");
        assert_eq!(s[0].observed_cooperation, Some(0.60));
    }

    #[test]
    fn r1_not_below_r2_is_a_domain_error() {
        let csv = "id,error,delta,infinity,continuous,risk,r1,r2,cooperation,dataset\nx,0,0.9,0,0,0,0.6,0.6,,Z\n";
        let err = parse_structures(csv.as_bytes()).unwrap_err();
        assert!(matches!(err, IoError::DomainError { row: 1, source: StructureError::RatioOrder { .. } }), "{err}");
        assert!(err.to_string().contains("r1 < r2"), "{err}");
    }

    #[test]
    fn parse_errors_are_located() {
        let csv = "id,error,delta,infinity,continuous,risk,r1,r2,cooperation,dataset\na,0,0.9,0,0,0,0.2,0.6,,Z\nb,0,zz,0,0,0,0.2,0.6,,Z\n";
        match parse_structures(csv.as_bytes()).unwrap_err() {
            IoError::ParseError { row, column, .. } => assert_eq!((row, column.as_str()), (2, "delta")),
            e => panic!("{e}"),
        }
        let dup = "id,error,delta,infinity,continuous,risk,r1,r2,cooperation,dataset\na,0,0.9,0,0,0,0.2,0.6,,Z\na,0,0.9,0,0,0,0.2,0.6,,Z\n";
        assert!(matches!(parse_structures(dup.as_bytes()), Err(IoError::DuplicateId(_))));
        let bad_header = "id,error\n";
        assert!(matches!(parse_structures(bad_header.as_bytes()), Err(IoError::HeaderMismatch { .. })));
    }

    #[test]
    fn canonical_json_sorts_and_formats() {
        let v = serde_json::json!({"b": 0.1, "a": [1, true, null], "c": "x\"y"});
        assert_eq!(
            canonical_json(&v),
            "{\n  \"a\": [\n    1,\n    true,\n    null\n  ],\n  \"b\": 1.0000000000000001e-1,\n  \"c\": \"x\\\"y\"\n}\n"
        );
    }
}

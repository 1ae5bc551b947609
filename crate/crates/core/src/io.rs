//! File formats: JSONL prediction logs, JSON policy and synthetic configs,
//! JSONL question files and curve CSV.

use std::fs;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::cascade::{validate_layout, validate_policy, CascadeOutcome, CascadePolicy, StageSpec};
use crate::cost::{CostMode, CostModel};
use crate::curves::CurvePoint;
use crate::error::{Error, Result};
use crate::live::LiveQuestion;
use crate::prediction::{ConfidenceMethod, PredictionRecord, TokenProbs};
use crate::records::PredictionLog;

pub const CURVE_CSV_HEADER: [&str; 3] = ["cost_flops", "accuracy", "thresholds"];

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Splits raw bytes into `(line number, text)` pairs, skipping blank lines.
/// Invalid UTF-8 is rejected rather than replaced.
fn text_lines(bytes: &[u8], file: &Path) -> Result<Vec<(usize, String)>> {
    let mut out = Vec::new();
    for (i, raw) in bytes.split(|b| *b == b'\n').enumerate() {
        let line = i + 1;
        let raw = raw.strip_suffix(b"\r").unwrap_or(raw);
        let text = std::str::from_utf8(raw).map_err(|e| Error::MalformedLine {
            file: file.to_path_buf(),
            line,
            message: format!("invalid UTF-8: {e}"),
        })?;
        if !text.trim().is_empty() {
            out.push((line, text.to_string()));
        }
    }
    Ok(out)
}

struct Fields<'a> {
    map: &'a Map<String, Value>,
    file: &'a Path,
    line: usize,
}

impl Fields<'_> {
    fn violation(&self, field: &str, message: impl Into<String>) -> Error {
        Error::SchemaViolation {
            file: self.file.to_path_buf(),
            line: self.line,
            field: field.to_string(),
            message: message.into(),
        }
    }

    fn string(&self, field: &str, non_empty: bool) -> Result<String> {
        match self.map.get(field) {
            None => Err(self.violation(field, "missing")),
            Some(Value::String(s)) if non_empty && s.is_empty() => {
                Err(self.violation(field, "must be non-empty"))
            }
            Some(Value::String(s)) => Ok(s.clone()),
            Some(_) => Err(self.violation(field, "expected a string")),
        }
    }

    fn token_probs(&self) -> Result<TokenProbs> {
        let field = "token_probs";
        let values = match self.map.get(field) {
            None => return Err(self.violation(field, "missing")),
            Some(Value::Array(a)) => a
                .iter()
                .map(|v| v.as_f64().ok_or_else(|| self.violation(field, "expected numbers")))
                .collect::<Result<Vec<f64>>>()?,
            Some(_) => return Err(self.violation(field, "expected an array of numbers")),
        };
        TokenProbs::new(values).map_err(|e| self.violation(field, e.to_string()))
    }

    fn passages(&self) -> Result<u32> {
        let field = "n_passages";
        match self.map.get(field) {
            None => Err(self.violation(field, "missing")),
            Some(v) => v
                .as_u64()
                .and_then(|n| u32::try_from(n).ok())
                .ok_or_else(|| self.violation(field, "expected a non-negative integer")),
        }
    }

    fn gold(&self) -> Result<Option<Vec<String>>> {
        let field = "gold";
        match self.map.get(field) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::Array(a)) => a
                .iter()
                .map(|v| {
                    v.as_str()
                        .map(str::to_string)
                        .ok_or_else(|| self.violation(field, "expected strings"))
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
            Some(_) => Err(self.violation(field, "expected an array of strings")),
        }
    }
}

fn parse_record(text: &str, file: &Path, line: usize) -> Result<PredictionRecord> {
    let value: Value = serde_json::from_str(text).map_err(|e| Error::MalformedLine {
        file: file.to_path_buf(),
        line,
        message: e.to_string(),
    })?;
    let Value::Object(map) = &value else {
        return Err(Error::MalformedLine {
            file: file.to_path_buf(),
            line,
            message: "expected a JSON object".into(),
        });
    };
    let f = Fields { map, file, line };
    Ok(PredictionRecord {
        qid: f.string("qid", true)?,
        stage: f.string("stage", true)?,
        question: f.string("question", false)?,
        prediction: f.string("prediction", false)?,
        token_probs: f.token_probs()?,
        n_passages: f.passages()?,
        gold: f.gold()?,
    })
}

/// Parses JSONL prediction records, tagging errors with `file`.
pub fn parse_records(mut reader: impl Read, file: &Path) -> Result<Vec<(usize, PredictionRecord)>> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes).map_err(|e| io_err(file, e))?;
    text_lines(&bytes, file)?
        .into_iter()
        .map(|(line, text)| parse_record(&text, file, line).map(|r| (line, r)))
        .collect()
}

/// Reads and merges prediction log files, grouping records by stage.
pub fn parse_logs<P: AsRef<Path>>(paths: &[P]) -> Result<PredictionLog> {
    let mut log = PredictionLog::new();
    for path in paths {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
        let records = parse_records(file, path)?;
        log::debug!("{}: {} records", path.display(), records.len());
        for (line, record) in records {
            log.insert(record).map_err(|e| match e {
                Error::DuplicateRecord { qid, stage } => Error::DuplicateRecordAt {
                    file: path.to_path_buf(),
                    line,
                    qid,
                    stage,
                },
                other => other,
            })?;
        }
    }
    Ok(log)
}

/// One JSON object per line, keys in schema order.
pub fn write_records<'a>(
    mut writer: impl Write,
    records: impl IntoIterator<Item = &'a PredictionRecord>,
) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut writer, r)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_outcomes<'a>(
    mut writer: impl Write,
    outcomes: impl IntoIterator<Item = &'a CascadeOutcome>,
) -> std::io::Result<()> {
    for o in outcomes {
        serde_json::to_writer(&mut writer, o)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    /// FLOPs per closed-book inference.
    pub c_cb: f64,
    /// FLOPs per passage per open-book inference.
    pub c_ob_per_passage: f64,
    #[serde(default)]
    pub mode: CostMode,
}

/// On-disk policy: `{method, cost: {c_cb, c_ob_per_passage, mode}, stages}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    pub method: ConfidenceMethod,
    pub cost: CostConfig,
    pub stages: Vec<StageSpec>,
}

impl PolicyConfig {
    fn build(self) -> Result<CascadePolicy> {
        let cost = CostModel::new(self.cost.c_cb, self.cost.c_ob_per_passage, self.cost.mode)?;
        Ok(CascadePolicy {
            stages: self.stages,
            method: self.method,
            cost,
        })
    }

    /// Fully validated policy.
    pub fn into_policy(self) -> Result<CascadePolicy> {
        let policy = self.build()?;
        validate_policy(&policy)?;
        Ok(policy)
    }

    /// Policy used only for its stage layout and costs (sweeps and
    /// baselines); thresholds may be absent.
    pub fn into_template(self) -> Result<CascadePolicy> {
        let policy = self.build()?;
        validate_layout(&policy.stages)?;
        Ok(policy)
    }
}

impl From<&CascadePolicy> for PolicyConfig {
    fn from(p: &CascadePolicy) -> Self {
        PolicyConfig {
            method: p.method,
            cost: CostConfig {
                c_cb: p.cost.c_cb,
                c_ob_per_passage: p.cost.c_ob,
                mode: p.cost.mode,
            },
            stages: p.stages.clone(),
        }
    }
}

/// Reads a single JSON document, reporting syntax errors with their line.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let text = std::str::from_utf8(&bytes).map_err(|e| Error::MalformedLine {
        file: path.to_path_buf(),
        line: 1 + bytes[..e.valid_up_to()].iter().filter(|b| **b == b'\n').count(),
        message: format!("invalid UTF-8: {e}"),
    })?;
    serde_json::from_str(text).map_err(|e| Error::MalformedLine {
        file: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

pub fn load_policy(path: &Path) -> Result<CascadePolicy> {
    read_json::<PolicyConfig>(path)?.into_policy()
}

pub fn load_policy_template(path: &Path) -> Result<CascadePolicy> {
    read_json::<PolicyConfig>(path)?.into_template()
}

/// Reads a JSONL file of serde-deserializable rows.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    text_lines(&bytes, path)?
        .into_iter()
        .map(|(line, text)| {
            serde_json::from_str(&text).map_err(|e| Error::MalformedLine {
                file: path.to_path_buf(),
                line,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Questions with passages for live runs.
pub fn load_questions(path: &Path) -> Result<Vec<LiveQuestion>> {
    read_jsonl(path)
}

/// Writes `cost_flops,accuracy,thresholds` rows.
pub fn write_curve_csv<'a>(
    writer: impl Write,
    points: impl IntoIterator<Item = &'a CurvePoint>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let wrap = |e: csv::Error| Error::invalid(format!("cannot write curve CSV: {e}"));
    w.write_record(CURVE_CSV_HEADER).map_err(wrap)?;
    for p in points {
        let thresholds = p
            .thresholds
            .iter()
            .map(|t| t.to_string())
            .collect::<Vec<_>>()
            .join(";");
        w.write_record([format!("{:e}", p.cost), format!("{:.6}", p.accuracy), thresholds])
            .map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::invalid(format!("cannot write curve CSV: {e}")))?;
    Ok(())
}

pub fn parse_curve_csv(reader: impl Read, file: &Path) -> Result<Vec<CurvePoint>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let malformed = |line: usize, message: String| Error::MalformedLine {
        file: file.to_path_buf(),
        line,
        message,
    };
    let headers = r.headers().map_err(|e| malformed(1, e.to_string()))?.clone();
    let names: Vec<&str> = headers.iter().map(str::trim).collect();
    if names.len() < 2 || names[0] != CURVE_CSV_HEADER[0] || names[1] != CURVE_CSV_HEADER[1] {
        return Err(malformed(
            1,
            format!("expected header {:?}, got {names:?}", CURVE_CSV_HEADER.join(",")),
        ));
    }
    let mut points = Vec::new();
    for row in r.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            malformed(line, e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let num = |i: usize, what: &str| -> Result<f64> {
            row.get(i)
                .map(str::trim)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| malformed(line, format!("cannot parse {what}")))
        };
        let thresholds = match row.get(2).map(str::trim) {
            None | Some("") => Vec::new(),
            Some(s) => s
                .split(';')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| malformed(line, format!("cannot parse thresholds: {e}")))?,
        };
        points.push(CurvePoint {
            cost: num(0, "cost_flops")?,
            accuracy: num(1, "accuracy")?,
            thresholds,
        });
    }
    Ok(points)
}

pub fn read_curve_csv(path: &Path) -> Result<Vec<CurvePoint>> {
    let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    parse_curve_csv(BufReader::new(file), path)
}

/// Writes `bytes` to `path`, or to stdout when `path` is `None` or `-`.
pub fn write_output(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) if p != Path::new("-") => fs::write(p, bytes).map_err(|e| io_err(p, e)),
        _ => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            lock.write_all(bytes)
                .and_then(|_| lock.flush())
                .map_err(|e| io_err(Path::new("<stdout>"), e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Vec<(usize, PredictionRecord)>> {
        parse_records(text.as_bytes(), Path::new("test.jsonl"))
    }

    const LINE: &str = r#"{"qid":"q1","stage":"cb","question":"who?","prediction":"me","token_probs":[0.5,0.25],"n_passages":0,"gold":["me"]}"#;

    #[test]
    fn parses_valid_lines() {
        let text = format!("{LINE}\n{}\n", LINE.replace("\"cb\"", "\"ob\"").replace("\"n_passages\":0", "\"n_passages\":5"));
        let recs = parse(&text).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[1].1.n_passages, 5);
        assert_eq!(recs[0].1.gold.as_deref(), Some(&["me".to_string()][..]));
    }

    #[test]
    fn empty_file_is_empty() {
        assert!(parse("").unwrap().is_empty());
        assert!(parse("\n  \n").unwrap().is_empty());
    }

    #[test]
    fn missing_token_probs() {
        let text = format!("{LINE}\n{}", LINE.replace(r#""token_probs":[0.5,0.25],"#, ""));
        match parse(&text).unwrap_err() {
            Error::SchemaViolation { field, line, file, .. } => {
                assert_eq!(field, "token_probs");
                assert_eq!(line, 2);
                assert_eq!(file, Path::new("test.jsonl"));
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn schema_errors() {
        let bad = [
            (LINE.replace("\"q1\"", "\"\""), "qid"),
            (LINE.replace("[0.5,0.25]", "[0.5,0]"), "token_probs"),
            (LINE.replace("[0.5,0.25]", "[]"), "token_probs"),
            (LINE.replace("[0.5,0.25]", "\"0.5\""), "token_probs"),
            (LINE.replace("\"n_passages\":0", "\"n_passages\":-1"), "n_passages"),
            (LINE.replace("\"n_passages\":0", "\"n_passages\":1.5"), "n_passages"),
            (LINE.replace("[\"me\"]", "\"me\""), "gold"),
            (LINE.replace("\"stage\":\"cb\",", ""), "stage"),
        ];
        for (text, want) in bad {
            match parse(&text).unwrap_err() {
                Error::SchemaViolation { field, line, .. } => {
                    assert_eq!(field, want, "{text}");
                    assert_eq!(line, 1);
                }
                e => panic!("unexpected {e:?} for {text}"),
            }
        }
        assert!(parse(&LINE.replace(",\"gold\":[\"me\"]", "")).unwrap()[0].1.gold.is_none());
        assert!(parse(&LINE.replace("[\"me\"]", "null")).unwrap()[0].1.gold.is_none());
    }

    #[test]
    fn malformed_lines() {
        assert!(matches!(
            parse(&format!("{LINE}\n{{not json")).unwrap_err(),
            Error::MalformedLine { line: 2, .. }
        ));
        assert!(matches!(parse("[1,2]").unwrap_err(), Error::MalformedLine { line: 1, .. }));
        let mut bytes = LINE.as_bytes().to_vec();
        bytes.extend_from_slice(b"\n\xff\xfe\n");
        assert!(matches!(
            parse_records(&bytes[..], Path::new("x")).unwrap_err(),
            Error::MalformedLine { line: 2, .. }
        ));
    }

    #[test]
    fn writes_schema_key_order() {
        let recs = parse(LINE).unwrap();
        let mut out = Vec::new();
        write_records(&mut out, recs.iter().map(|(_, r)| r)).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), format!("{LINE}\n"));
    }

    #[test]
    fn policy_config() {
        let json = r#"{
            "method": "ppa",
            "cost": {"c_cb": 6.15e9, "c_ob_per_passage": 2.02e10, "mode": "encoder_reuse"},
            "stages": [
                {"name": "cb", "kind": "cb", "threshold": 0.5},
                {"name": "ob20", "kind": "ob", "passages": 20, "threshold": 0.4},
                {"name": "ob100", "kind": "ob", "passages": 100}
            ]
        }"#;
        let cfg: PolicyConfig = serde_json::from_str(json).unwrap();
        let policy = cfg.clone().into_policy().unwrap();
        assert_eq!(policy.iterations(), 2);
        assert_eq!(policy.cost.mode, CostMode::EncoderReuse);
        assert_eq!(policy.ob_passages(), vec![20, 100]);
        assert_eq!(PolicyConfig::from(&policy), cfg);

        let template = json.replace(", \"threshold\": 0.5", "").replace(", \"threshold\": 0.4", "");
        let cfg: PolicyConfig = serde_json::from_str(&template).unwrap();
        assert!(cfg.clone().into_policy().is_err());
        assert!(cfg.into_template().is_ok());

        let unknown = json.replace("\"method\"", "\"methd\"");
        assert!(serde_json::from_str::<PolicyConfig>(&unknown).is_err());
    }

    #[test]
    fn curve_csv() {
        let points = vec![
            CurvePoint {
                cost: 6.15e9,
                accuracy: 1.0 / 3.0,
                thresholds: vec![0.0],
            },
            CurvePoint {
                cost: 2.0261500000000002e12,
                accuracy: 0.5,
                thresholds: vec![0.25, 1.0000000000000002],
            },
        ];
        let mut out = Vec::new();
        write_curve_csv(&mut out, &points).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(
            text,
            "cost_flops,accuracy,thresholds\n6.15e9,0.333333,0\n2.0261500000000002e12,0.500000,0.25;1.0000000000000002\n"
        );
        let back = parse_curve_csv(text.as_bytes(), Path::new("c.csv")).unwrap();
        assert_eq!(back[1].cost, points[1].cost);
        assert_eq!(back[1].thresholds, points[1].thresholds);
        assert_eq!(back[0].accuracy, 0.333333);

        let plain = "cost_flops,accuracy,thresholds\n0,0.4,\n2,0.6,\n";
        let back = parse_curve_csv(plain.as_bytes(), Path::new("c.csv")).unwrap();
        assert_eq!(back.len(), 2);
        assert!(back[0].thresholds.is_empty());

        let err = parse_curve_csv("cost_flops,accuracy\n1,x\n".as_bytes(), Path::new("c.csv")).unwrap_err();
        assert!(matches!(err, Error::MalformedLine { line: 2, .. }), "{err:?}");
        assert!(parse_curve_csv("a,b\n".as_bytes(), Path::new("c.csv")).is_err());
    }
}

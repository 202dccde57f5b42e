use std::path::Path;

use serde_json::Value;

use super::{AlbedoMap, Relation, ReflectanceJudgment};
use crate::error::{Error, Result};

fn entry_error(path: &Path, index: usize, message: impl Into<String>) -> Error {
    Error::ParseEntry {
        path: path.to_path_buf(),
        index,
        message: message.into(),
    }
}

fn point(v: Option<&Value>) -> Option<[f64; 2]> {
    let arr = v?.as_array()?;
    if arr.len() != 2 {
        return None;
    }
    Some([arr[0].as_f64()?, arr[1].as_f64()?])
}

/// Parses the judgments JSON text:
/// `[{"p1": [x, y], "p2": [x, y], "darker": "1"|"2"|"E", "weight": w}, ...]`.
pub fn parse_judgments(text: &str, source: &Path) -> Result<Vec<ReflectanceJudgment>> {
    let root: Value = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: source.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })?;
    let entries = root
        .as_array()
        .ok_or_else(|| entry_error(source, 0, "top level must be a list"))?;
    let mut out = Vec::with_capacity(entries.len());
    for (index, entry) in entries.iter().enumerate() {
        let p1 = point(entry.get("p1")).ok_or_else(|| entry_error(source, index, "bad `p1`"))?;
        let p2 = point(entry.get("p2")).ok_or_else(|| entry_error(source, index, "bad `p2`"))?;
        let relation = match entry.get("darker").and_then(Value::as_str) {
            Some("1") => Relation::Point1Darker,
            Some("2") => Relation::Point2Darker,
            Some("E") => Relation::Equal,
            Some(other) => {
                return Err(entry_error(source, index, format!("unknown relation `{other}`")))
            }
            None => return Err(entry_error(source, index, "missing `darker`")),
        };
        let weight = entry
            .get("weight")
            .and_then(Value::as_f64)
            .ok_or_else(|| entry_error(source, index, "missing `weight`"))?;
        let judgment = ReflectanceJudgment {
            point1: p1,
            point2: p2,
            relation,
            weight,
        };
        judgment.validate().map_err(|e| match e {
            Error::Validation(msg) => {
                Error::Validation(format!("{}: entry {index}: {msg}", source.display()))
            }
            other => other,
        })?;
        out.push(judgment);
    }
    Ok(out)
}

pub fn load_judgments(path: &Path) -> Result<Vec<ReflectanceJudgment>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_judgments(&text, path)
}

/// Rec. 601 luma weights used to reduce albedo to a reflectance intensity.
pub const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

/// In-bounds pixels of the `(2r+1)²` square centered on a normalized point.
pub fn patch_pixels(point: [f64; 2], radius: usize, height: usize, width: usize) -> Vec<(usize, usize)> {
    let (cy, cx) = ReflectanceJudgment::pixel(point, height, width);
    let r = radius as isize;
    let mut out = Vec::with_capacity((2 * radius + 1).pow(2));
    for dy in -r..=r {
        for dx in -r..=r {
            let (y, x) = (cy as isize + dy, cx as isize + dx);
            if y >= 0 && x >= 0 && (y as usize) < height && (x as usize) < width {
                out.push((y as usize, x as usize));
            }
        }
    }
    out
}

/// Mean albedo luminance over the patch around `point`.
pub fn patch_luminance(albedo: &AlbedoMap, point: [f64; 2], radius: usize) -> f64 {
    let px = patch_pixels(point, radius, albedo.height(), albedo.width());
    let sum: f64 = px
        .iter()
        .map(|&(y, x)| (0..3).map(|c| LUMA[c] * albedo.pixels()[[y, x, c]]).sum::<f64>())
        .sum();
    sum / px.len() as f64
}

/// Serializes judgments in the on-disk format.
pub fn judgments_to_json(judgments: &[ReflectanceJudgment]) -> String {
    let list: Vec<Value> = judgments
        .iter()
        .map(|j| {
            serde_json::json!({
                "p1": j.point1,
                "p2": j.point2,
                "darker": match j.relation {
                    Relation::Point1Darker => "1",
                    Relation::Point2Darker => "2",
                    Relation::Equal => "E",
                },
                "weight": j.weight,
            })
        })
        .collect();
    serde_json::to_string_pretty(&list).expect("judgments serialize")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Vec<ReflectanceJudgment>> {
        parse_judgments(text, Path::new("j.json"))
    }

    #[test]
    fn maps_fields() {
        let js = parse(
            r#"[{"p1":[0.1,0.2],"p2":[0.3,0.4],"darker":"1","weight":1.2},
                {"p1":[0.5,0.5],"p2":[0.6,0.6],"darker":"E","weight":0.5},
                {"p1":[0.5,0.5],"p2":[0.6,0.6],"darker":"2","weight":0.0}]"#,
        )
        .unwrap();
        assert_eq!(js[0].relation, Relation::Point1Darker);
        assert_eq!(js[0].weight, 1.2);
        assert_eq!(js[0].point2, [0.3, 0.4]);
        assert_eq!(js[1].relation, Relation::Equal);
        assert_eq!(js[2].relation, Relation::Point2Darker);
    }

    #[test]
    fn malformed_entry_is_named() {
        let text = r#"[
            {"p1":[0.1,0.2],"p2":[0.3,0.4],"darker":"1","weight":1},
            {"p1":[0.1,0.2],"p2":[0.3,0.4],"darker":"2","weight":1},
            {"p1":[0.1,0.2],"p2":[0.3,0.4],"darker":"E","weight":1},
            {"p1":[0.1],"p2":[0.3,0.4],"darker":"1","weight":1},
            {"p1":[0.1,0.2],"p2":[0.3,0.4],"darker":"1","weight":1}
        ]"#;
        match parse(text) {
            Err(Error::ParseEntry { index, .. }) => assert_eq!(index, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_relation_is_parse_error() {
        let text = r#"[{"p1":[0.1,0.2],"p2":[0.3,0.4],"darker":"X","weight":1}]"#;
        assert!(matches!(parse(text), Err(Error::ParseEntry { index: 0, .. })));
    }

    #[test]
    fn negative_weight_is_validation_error() {
        let text = r#"[{"p1":[0.1,0.2],"p2":[0.3,0.4],"darker":"1","weight":-1}]"#;
        assert!(matches!(parse(text), Err(Error::Validation(_))));
    }

    #[test]
    fn json_roundtrip() {
        let text = r#"[{"p1":[0.1,0.2],"p2":[0.3,0.4],"darker":"E","weight":0.75}]"#;
        let js = parse(text).unwrap();
        assert_eq!(parse(&judgments_to_json(&js)).unwrap(), js);
    }
}

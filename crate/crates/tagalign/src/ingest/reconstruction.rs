//! SfM reconstruction JSON: a list of reconstructions, each with a `points`
//! map of track id to `{"coordinates": [x, y, z], "color": [r, g, b]}`.
//! Other keys (cameras, shots, ...) are ignored.

use std::collections::BTreeMap;

use serde_json::{json, Map, Value};
use tagalign_core::Point3;

use super::IngestError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SfmPoint {
    pub coord: Point3,
    pub color: Option<[u8; 3]>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SfmReconstruction {
    pub points: BTreeMap<String, SfmPoint>,
    /// Track ids seen again in a later reconstruction and dropped.
    pub duplicates: usize,
}

fn triple<'a>(
    obj: &'a Map<String, Value>,
    track_id: &str,
    field: &'static str,
) -> Result<Option<&'a Vec<Value>>, IngestError> {
    match obj.get(field) {
        None => Ok(None),
        Some(Value::Array(a)) if a.len() == 3 => Ok(Some(a)),
        Some(Value::Array(a)) => Err(IngestError::BadArity {
            track_id: track_id.into(),
            field,
            found: a.len(),
        }),
        Some(_) => Err(IngestError::MalformedJson(format!(
            "point `{track_id}`: `{field}` is not an array"
        ))),
    }
}

fn number(v: &Value, track_id: &str, field: &str) -> Result<f64, IngestError> {
    v.as_f64()
        .ok_or_else(|| IngestError::MalformedJson(format!("point `{track_id}`: `{field}` holds a non-number")))
}

fn parse_point(track_id: &str, value: &Value) -> Result<SfmPoint, IngestError> {
    let obj = value
        .as_object()
        .ok_or_else(|| IngestError::MalformedJson(format!("point `{track_id}` is not an object")))?;
    let coords = triple(obj, track_id, "coordinates")?.ok_or_else(|| IngestError::MissingField {
        track_id: track_id.into(),
        field: "coordinates",
    })?;
    let c = coords
        .iter()
        .map(|v| number(v, track_id, "coordinates"))
        .collect::<Result<Vec<_>, _>>()?;
    let coord = Point3::try_new(c[0], c[1], c[2])
        .map_err(|_| IngestError::NonFinite(format!("point `{track_id}` coordinates")))?;
    let color = match triple(obj, track_id, "color")? {
        None => None,
        Some(rgb) => {
            let mut out = [0u8; 3];
            for (slot, v) in out.iter_mut().zip(rgb) {
                *slot = number(v, track_id, "color")?.round().clamp(0.0, 255.0) as u8;
            }
            Some(out)
        }
    };
    Ok(SfmPoint { coord, color })
}

pub fn parse_reconstruction(json_text: &str) -> Result<SfmReconstruction, IngestError> {
    let root: Value = serde_json::from_str(json_text).map_err(|e| IngestError::MalformedJson(e.to_string()))?;
    let list = root
        .as_array()
        .ok_or_else(|| IngestError::MalformedJson("top level is not a list".into()))?;
    let mut out = SfmReconstruction::default();
    for (r, rec) in list.iter().enumerate() {
        let points = rec
            .get("points")
            .ok_or_else(|| IngestError::MalformedJson(format!("reconstruction {r} has no `points`")))?
            .as_object()
            .ok_or_else(|| IngestError::MalformedJson(format!("reconstruction {r}: `points` is not an object")))?;
        for (track_id, value) in points {
            let point = parse_point(track_id, value)?;
            if out.points.contains_key(track_id) {
                out.duplicates += 1;
            } else {
                out.points.insert(track_id.clone(), point);
            }
        }
    }
    Ok(out)
}

/// Writes a single-reconstruction list with keys in sorted order.
pub fn write_reconstruction(rec: &SfmReconstruction) -> String {
    let mut points = Map::new();
    for (id, p) in &rec.points {
        let mut obj = Map::new();
        obj.insert("coordinates".into(), json!(p.coord.to_array()));
        if let Some(c) = p.color {
            obj.insert("color".into(), json!(c));
        }
        points.insert(id.clone(), Value::Object(obj));
    }
    let doc = json!([{ "points": points }]);
    let mut text = serde_json::to_string_pretty(&doc).expect("JSON values serialize");
    text.push('\n');
    text
}

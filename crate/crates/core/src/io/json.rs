//! Canonical JSON output and the pose record format.

use std::path::Path;

use nalgebra::Vector3;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::geometry::{Pose, Rotation};

/// Rounds every float to 9 significant digits; object keys come out sorted.
pub fn canonicalize(value: &Value) -> Value {
    match value {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().unwrap_or(0.0);
            let rounded: f64 = format!("{x:.8e}").parse().unwrap_or(x);
            serde_json::Number::from_f64(rounded).map_or(Value::Null, Value::Number)
        }
        Value::Array(items) => Value::Array(items.iter().map(canonicalize).collect()),
        Value::Object(map) => Value::Object(map.iter().map(|(k, v)| (k.clone(), canonicalize(v))).collect()),
        other => other.clone(),
    }
}

pub fn to_canonical_string<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value).map_err(|e| Error::invalid(format!("serialization failed: {e}")))?;
    let mut s = serde_json::to_string_pretty(&canonicalize(&v)).expect("values serialize");
    s.push('\n');
    Ok(s)
}

pub fn write_canonical<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, to_canonical_string(value)?).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

/// `{quat: [w, x, y, z], t: [x, y, z]}`; translation in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseJson {
    pub quat: [f64; 4],
    pub t: [f64; 3],
}

impl From<&Pose> for PoseJson {
    fn from(p: &Pose) -> Self {
        PoseJson {
            quat: p.rotation.to_wxyz(),
            t: [p.translation.x, p.translation.y, p.translation.z],
        }
    }
}

impl From<Pose> for PoseJson {
    fn from(p: Pose) -> Self {
        PoseJson::from(&p)
    }
}

impl TryFrom<PoseJson> for Pose {
    type Error = Error;
    fn try_from(j: PoseJson) -> Result<Pose> {
        j.to_pose()
    }
}

impl PoseJson {
    pub fn to_pose(&self) -> Result<Pose> {
        let [w, x, y, z] = self.quat;
        let r = Rotation::from_wxyz(w, x, y, z)?;
        Pose::try_new(r, Vector3::from(self.t))
    }
}

/// One line of a pose file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub frame: usize,
    pub quat: [f64; 4],
    pub t: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<String>,
}

impl PoseRecord {
    pub fn new(frame: usize, pose: &Pose) -> Self {
        let j = PoseJson::from(pose);
        PoseRecord {
            frame,
            quat: j.quat,
            t: j.t,
            status: None,
        }
    }

    pub fn pose(&self) -> Result<Pose> {
        PoseJson {
            quat: self.quat,
            t: self.t,
        }
        .to_pose()
    }
}

pub fn read_pose_records(path: &Path) -> Result<Vec<PoseRecord>> {
    read_json(path)
}

pub fn write_pose_records(path: &Path, records: &[PoseRecord]) -> Result<()> {
    write_canonical(path, &records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn canonical_rounds_and_sorts() {
        let v = json!({"b": 0.1234567891234, "a": [1, 2.0, 1e-20]});
        let s = serde_json::to_string(&canonicalize(&v)).unwrap();
        assert_eq!(s, r#"{"a":[1,2.0,1e-20],"b":0.123456789}"#);
    }

    #[test]
    fn pose_record_canonicalizes_double_cover() {
        let r = Rotation::from_wxyz(-0.5, 0.5, 0.5, 0.5).unwrap();
        let rec = PoseRecord::new(3, &Pose::new(r, Vector3::new(0.1, 0.2, 0.3)));
        assert_eq!(rec.quat, [0.5, -0.5, -0.5, -0.5]);
        let back = rec.pose().unwrap();
        assert!(back.rotation.angle_to(&r) < 1e-12);
    }
}

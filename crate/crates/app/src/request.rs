//! The versioned scene request accepted by `generate` and `POST /generate`.
//!
//! ```json
//! {
//!   "version": 1,
//!   "entities": [
//!     {"class": "car", "bbox": {"x": 0.5, "y": 0.6, "w": 0.1, "h": 0.08}, "color": "red"}
//!   ],
//!   "time_of_day": "14:30",
//!   "seed": 7,
//!   "variant": "discrete"
//! }
//! ```
//!
//! `color` is a palette name or a cluster object `{"centers": [[r,g,b] x5], "weights": [x5]}`
//! with channels in `[0, 1]`. `seed` defaults to 0; `variant`, when given, must match the
//! loaded model.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use trafficgen::scene::{
    encode_time, parse_clock_time, BBox, ColorClusters, ColorFeature, EntityClass, GraphVariant,
    PaletteColor, SceneEntity, TimeEncoding,
};

pub const REQUEST_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntityRequest {
    pub class: String,
    pub bbox: Value,
    pub color: Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneRequest {
    pub version: u32,
    #[serde(default)]
    pub entities: Vec<EntityRequest>,
    pub time_of_day: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

/// A request that passed validation.
#[derive(Clone, Debug, PartialEq)]
pub struct ValidScene {
    pub entities: Vec<SceneEntity>,
    pub time: TimeEncoding,
    pub seed: u64,
}

fn palette_names() -> String {
    PaletteColor::ALL.map(|c| c.name()).join(", ")
}

fn color_feature(value: &Value, variant: GraphVariant) -> Result<ColorFeature, String> {
    match value {
        Value::String(name) => {
            let color: PaletteColor = name
                .parse()
                .map_err(|_| format!("unknown color {name:?}; the palette is {}", palette_names()))?;
            match variant {
                GraphVariant::Discrete => Ok(ColorFeature::Discrete(color)),
                GraphVariant::Cluster => {
                    ColorFeature::solid(color.rgb(), variant).map_err(|e| e.to_string())
                }
            }
        }
        Value::Object(_) => {
            if variant == GraphVariant::Discrete {
                return Err(format!(
                    "the model uses palette colors; use one of {}",
                    palette_names()
                ));
            }
            let c: ColorClusters = serde_json::from_value(value.clone()).map_err(|e| e.to_string())?;
            let channels_ok = c.centers.iter().flatten().all(|v| (0.0..=1.0).contains(v));
            let weights_ok = c.weights.iter().all(|w| w.is_finite() && *w >= 0.0)
                && (c.weights.iter().sum::<f64>() - 1.0).abs() < 1e-6;
            if !channels_ok {
                return Err("cluster centers must lie in [0, 1]".into());
            }
            if !weights_ok {
                return Err("cluster weights must be non-negative and sum to 1".into());
            }
            Ok(ColorFeature::Clusters(c))
        }
        _ => Err(format!(
            "expected a palette name ({}) or a cluster object",
            palette_names()
        )),
    }
}

impl SceneRequest {
    /// Checks every field against the model's graph variant and collects all problems.
    pub fn validate(&self, model_variant: GraphVariant) -> Result<ValidScene, Vec<FieldError>> {
        let mut errors = Vec::new();
        let mut err = |field: String, message: String| errors.push(FieldError { field, message });
        if self.version != REQUEST_VERSION {
            err(
                "version".into(),
                format!("unsupported version {}; expected {REQUEST_VERSION}", self.version),
            );
        }
        if let Some(v) = &self.variant {
            match v.parse::<GraphVariant>() {
                Ok(v) if v == model_variant => {}
                Ok(v) => err("variant".into(), format!("model uses {model_variant}, request asks for {v}")),
                Err(e) => err("variant".into(), e.to_string()),
            }
        }
        let time = match parse_clock_time(&self.time_of_day).and_then(encode_time) {
            Ok(t) => Some(t),
            Err(e) => {
                err("time_of_day".into(), e.to_string());
                None
            }
        };
        let mut entities = Vec::with_capacity(self.entities.len());
        for (i, e) in self.entities.iter().enumerate() {
            let class = match e.class.parse::<EntityClass>() {
                Ok(EntityClass::Grid) => {
                    err(format!("entities[{i}].class"), "grid is not an entity class".into());
                    None
                }
                Ok(c) => Some(c),
                Err(x) => {
                    err(format!("entities[{i}].class"), x.to_string());
                    None
                }
            };
            let bbox = match serde_json::from_value::<BBox>(e.bbox.clone()) {
                Ok(b) => Some(b),
                Err(x) => {
                    err(format!("entities[{i}].bbox"), x.to_string());
                    None
                }
            };
            let color = match color_feature(&e.color, model_variant) {
                Ok(c) => Some(c),
                Err(x) => {
                    err(format!("entities[{i}].color"), x);
                    None
                }
            };
            if let (Some(class), Some(bbox), Some(color)) = (class, bbox, color) {
                match SceneEntity::new(class, bbox, color) {
                    Ok(s) => entities.push(s),
                    Err(x) => err(format!("entities[{i}]"), x.to_string()),
                }
            }
        }
        match (time, errors.is_empty()) {
            (Some(time), true) => Ok(ValidScene {
                entities,
                time,
                seed: self.seed.unwrap_or(0),
            }),
            _ => Err(errors),
        }
    }

    /// Request describing `entities` at `seconds` past midnight, colors in the form the
    /// variant expects.
    pub fn from_entities(entities: &[SceneEntity], seconds: f64, seed: Option<u64>) -> Self {
        let secs = seconds.round() as u64 % 86_400;
        SceneRequest {
            version: REQUEST_VERSION,
            entities: entities
                .iter()
                .map(|e| EntityRequest {
                    class: e.entity_class.name().to_string(),
                    bbox: serde_json::to_value(e.bbox).expect("bbox serializes"),
                    color: match &e.color {
                        ColorFeature::Discrete(p) => Value::String(p.name().to_string()),
                        ColorFeature::Clusters(c) => serde_json::to_value(c).expect("clusters serialize"),
                    },
                })
                .collect(),
            time_of_day: format!("{:02}:{:02}:{:02}", secs / 3600, secs / 60 % 60, secs % 60),
            seed,
            variant: entities.first().map(|e| e.color.variant().to_string()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn request(color: Value) -> SceneRequest {
        serde_json::from_value(json!({
            "version": 1,
            "entities": [{"class": "car", "bbox": {"x": 0.5, "y": 0.5, "w": 0.1, "h": 0.1}, "color": color}],
            "time_of_day": "14:00"
        }))
        .unwrap()
    }

    #[test]
    fn palette_color_accepted() {
        let ok = request(json!("red")).validate(GraphVariant::Discrete).unwrap();
        assert_eq!(ok.entities[0].color, ColorFeature::Discrete(PaletteColor::Red));
        assert_eq!(ok.seed, 0);
    }

    #[test]
    fn unknown_color_names_palette() {
        let errs = request(json!("purple")).validate(GraphVariant::Discrete).unwrap_err();
        assert_eq!(errs[0].field, "entities[0].color");
        assert!(errs[0].message.contains("white"), "{}", errs[0].message);
    }

    #[test]
    fn all_errors_collected() {
        let mut r = request(json!(3));
        r.version = 9;
        r.time_of_day = "25:00".into();
        r.entities[0].class = "tram".into();
        let errs = r.validate(GraphVariant::Cluster).unwrap_err();
        let fields: Vec<&str> = errs.iter().map(|e| e.field.as_str()).collect();
        assert_eq!(fields, ["version", "time_of_day", "entities[0].class", "entities[0].color"]);
    }

    #[test]
    fn round_trip_through_entities() {
        let ok = request(json!("blue")).validate(GraphVariant::Cluster).unwrap();
        let again = SceneRequest::from_entities(&ok.entities, 50_400.0, Some(3));
        assert_eq!(again.time_of_day, "14:00:00");
        let back = again.validate(GraphVariant::Cluster).unwrap();
        assert_eq!(back.entities, ok.entities);
    }
}

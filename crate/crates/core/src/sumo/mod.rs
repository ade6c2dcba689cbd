//! Simulator vehicle states → image-frame boxes → scene entities.
//!
//! Every lane is a cubic spline in normalized image coordinates. Waypoint pairs tie
//! offsets along the simulator lane (meters) to normalized arclength along the spline;
//! offsets in between are interpolated linearly and offsets outside are clamped. Box
//! sizes come from a spatial histogram of real detections.

mod histogram;
mod spline;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_domain, Error, Result};
use crate::scene::{ColorFeature, EntityClass, GraphVariant, PaletteColor, SceneEntity, TimeEncoding};

pub use histogram::{centered_box, BBoxHistogram, BinSource, SizeDraw};
pub use spline::CubicSpline;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaypointPair {
    /// Meters along the simulator lane.
    pub sim_offset: f64,
    /// Normalized arclength along the image spline, in `[0, 1]`.
    pub image_arclength: f64,
}

/// A lane's image-frame spline plus its waypoint pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct Lane {
    pub spline: CubicSpline,
    pub waypoints: Vec<WaypointPair>,
}

impl Lane {
    pub fn new(control_points: &[[f64; 2]], waypoints: Vec<WaypointPair>) -> Result<Self> {
        let spline = CubicSpline::fit(control_points)?;
        ensure_domain!(waypoints.len() >= 2, "a lane needs at least 2 waypoints, got {}", waypoints.len());
        for (i, w) in waypoints.iter().enumerate() {
            ensure_domain!(
                w.sim_offset.is_finite() && (0.0..=1.0).contains(&w.image_arclength),
                "waypoint {i} must have a finite offset and arclength in [0, 1]"
            );
        }
        for (i, pair) in waypoints.windows(2).enumerate() {
            ensure_domain!(
                pair[1].sim_offset > pair[0].sim_offset && pair[1].image_arclength > pair[0].image_arclength,
                "waypoints {i} and {} are not strictly increasing",
                i + 1
            );
        }
        Ok(Self { spline, waypoints })
    }

    /// Normalized image arclength for a simulator offset; clamped outside the waypoints.
    pub fn arclength_for(&self, sim_offset: f64) -> f64 {
        let w = &self.waypoints;
        let first = w[0];
        let last = w[w.len() - 1];
        if sim_offset <= first.sim_offset {
            return first.image_arclength;
        }
        if sim_offset >= last.sim_offset {
            return last.image_arclength;
        }
        let i = w.partition_point(|p| p.sim_offset <= sim_offset) - 1;
        let (a, b) = (w[i], w[i + 1]);
        if sim_offset == a.sim_offset {
            return a.image_arclength;
        }
        let f = (sim_offset - a.sim_offset) / (b.sim_offset - a.sim_offset);
        a.image_arclength + f * (b.image_arclength - a.image_arclength)
    }

    pub fn point_for(&self, sim_offset: f64) -> [f64; 2] {
        self.spline.point_at_fraction(self.arclength_for(sim_offset))
    }
}

/// All lanes of one junction, keyed by simulator lane id.
#[derive(Clone, Debug, PartialEq)]
pub struct LaneCorrespondence {
    pub lanes: BTreeMap<String, Lane>,
}

#[derive(Serialize, Deserialize)]
struct LaneRecord {
    control_points: Vec<[f64; 2]>,
    waypoints: Vec<WaypointPair>,
}

#[derive(Serialize, Deserialize)]
struct CorrespondenceFile {
    lanes: BTreeMap<String, LaneRecord>,
}

impl Serialize for LaneCorrespondence {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        CorrespondenceFile {
            lanes: self
                .lanes
                .iter()
                .map(|(id, lane)| {
                    (
                        id.clone(),
                        LaneRecord {
                            control_points: lane.spline.control_points().to_vec(),
                            waypoints: lane.waypoints.clone(),
                        },
                    )
                })
                .collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for LaneCorrespondence {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let file = CorrespondenceFile::deserialize(deserializer)?;
        let mut lanes = BTreeMap::new();
        for (id, rec) in file.lanes {
            let lane = Lane::new(&rec.control_points, rec.waypoints)
                .map_err(|e| serde::de::Error::custom(format!("lane {id}: {e}")))?;
            lanes.insert(id, lane);
        }
        Ok(Self { lanes })
    }
}

impl LaneCorrespondence {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn lane(&self, lane_id: &str) -> Result<&Lane> {
        self.lanes
            .get(lane_id)
            .ok_or_else(|| Error::domain(format!("unknown lane {lane_id:?}")))
    }
}

/// Image point of a vehicle `sim_offset` meters along `lane_id`.
pub fn map_lane_position(corr: &LaneCorrespondence, lane_id: &str, sim_offset: f64) -> Result<[f64; 2]> {
    ensure_domain!(sim_offset.is_finite(), "offset must be finite");
    Ok(corr.lane(lane_id)?.point_for(sim_offset))
}

/// Color declared by the simulator: a palette name or an RGB triple.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SimColor {
    Named(PaletteColor),
    Rgb([u8; 3]),
}

impl SimColor {
    pub fn to_feature(&self, variant: GraphVariant) -> Result<ColorFeature> {
        match (self, variant) {
            (SimColor::Named(p), GraphVariant::Discrete) => Ok(ColorFeature::Discrete(*p)),
            (SimColor::Named(p), GraphVariant::Cluster) => ColorFeature::solid(p.rgb(), variant),
            (SimColor::Rgb(rgb), _) => ColorFeature::solid(*rgb, variant),
        }
    }
}

/// One vehicle in a simulator snapshot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub lane_id: String,
    /// Meters from the lane start.
    pub offset: f64,
    pub class: EntityClass,
    pub color: SimColor,
    /// Seconds since midnight.
    pub time: f64,
}

/// Vehicles sharing one timestamp.
#[derive(Clone, Debug, PartialEq)]
pub struct SimFrame {
    pub time: f64,
    pub vehicles: Vec<VehicleState>,
}

/// Reads a JSON list of vehicle states.
pub fn read_vehicle_states(path: &Path) -> Result<Vec<VehicleState>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

/// Groups states by timestamp, in ascending time; vehicle order is preserved.
pub fn group_frames(states: Vec<VehicleState>) -> Vec<SimFrame> {
    let mut frames: Vec<SimFrame> = Vec::new();
    let mut sorted = states;
    sorted.sort_by(|a, b| a.time.total_cmp(&b.time));
    for s in sorted {
        match frames.last_mut() {
            Some(f) if f.time == s.time => f.vehicles.push(s),
            _ => frames.push(SimFrame {
                time: s.time,
                vehicles: vec![s],
            }),
        }
    }
    frames
}

#[derive(Clone, Debug, PartialEq)]
pub struct VehicleError {
    pub index: usize,
    pub id: Option<String>,
    pub message: String,
}

/// Result of converting one frame: the vehicles that mapped and those that did not.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameScene {
    pub entities: Vec<SceneEntity>,
    pub time: TimeEncoding,
    pub errors: Vec<VehicleError>,
}

/// Converts a frame. Failures are collected per vehicle; the rest still convert.
///
/// With `SizeDraw::Seeded(s)`, vehicle `i` draws with seed `s + i`.
pub fn sim_frame_to_scene(
    frame: &SimFrame,
    corr: &LaneCorrespondence,
    hist: &BBoxHistogram,
    variant: GraphVariant,
    draw: SizeDraw,
) -> Result<FrameScene> {
    let time = crate::scene::encode_time(frame.time)?;
    let mut entities = Vec::new();
    let mut errors = Vec::new();
    for (i, v) in frame.vehicles.iter().enumerate() {
        let draw = match draw {
            SizeDraw::Median => SizeDraw::Median,
            SizeDraw::Seeded(s) => SizeDraw::Seeded(s.wrapping_add(i as u64)),
        };
        let converted = (|| {
            ensure_domain!(v.class != EntityClass::Grid, "vehicle class cannot be grid");
            let point = map_lane_position(corr, &v.lane_id, v.offset)?;
            let bbox = hist.sample_bbox(point, v.class, draw)?;
            SceneEntity::new(v.class, bbox, v.color.to_feature(variant)?)
        })();
        match converted {
            Ok(e) => entities.push(e),
            Err(e) => errors.push(VehicleError {
                index: i,
                id: v.id.clone(),
                message: e.to_string(),
            }),
        }
    }
    Ok(FrameScene { entities, time, errors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::BBox;

    fn straight_lane() -> Lane {
        Lane::new(
            &[[0.1, 0.5], [0.3, 0.5], [0.6, 0.5], [0.9, 0.5]],
            vec![
                WaypointPair { sim_offset: 0.0, image_arclength: 0.0 },
                WaypointPair { sim_offset: 40.0, image_arclength: 0.5 },
                WaypointPair { sim_offset: 80.0, image_arclength: 1.0 },
            ],
        )
        .unwrap()
    }

    #[test]
    fn midpoint_and_clamping() {
        let lane = straight_lane();
        let p = lane.point_for(20.0);
        assert!((p[0] - 0.3).abs() < 1e-6 && (p[1] - 0.5).abs() < 1e-9);
        assert_eq!(lane.point_for(500.0), lane.point_for(80.0));
        assert_eq!(lane.point_for(-3.0), lane.point_for(0.0));
    }

    #[test]
    fn waypoints_must_increase() {
        let pts = [[0.1, 0.5], [0.3, 0.5], [0.6, 0.5], [0.9, 0.5]];
        let bad = vec![
            WaypointPair { sim_offset: 0.0, image_arclength: 0.5 },
            WaypointPair { sim_offset: 10.0, image_arclength: 0.2 },
        ];
        assert!(Lane::new(&pts, bad).is_err());
        let one = vec![WaypointPair { sim_offset: 0.0, image_arclength: 0.5 }];
        assert!(Lane::new(&pts, one).is_err());
    }

    #[test]
    fn unknown_lane_is_per_vehicle() {
        let corr = LaneCorrespondence {
            lanes: BTreeMap::from([("a".to_string(), straight_lane())]),
        };
        let b = BBox::new(0.5, 0.5, 0.1, 0.05).unwrap();
        let hist = BBoxHistogram::fit([(EntityClass::Car, &b)], 8).unwrap();
        let vehicle = |lane: &str| VehicleState {
            id: None,
            lane_id: lane.into(),
            offset: 40.0,
            class: EntityClass::Car,
            color: SimColor::Named(PaletteColor::Red),
            time: 3600.0,
        };
        let frame = SimFrame {
            time: 3600.0,
            vehicles: vec![vehicle("a"), vehicle("missing"), vehicle("a")],
        };
        let out = sim_frame_to_scene(&frame, &corr, &hist, GraphVariant::Discrete, SizeDraw::Median).unwrap();
        assert_eq!(out.entities.len(), 2);
        assert_eq!(out.errors.len(), 1);
        assert_eq!(out.errors[0].index, 1);
    }

    #[test]
    fn correspondence_json_round_trip() {
        let corr = LaneCorrespondence {
            lanes: BTreeMap::from([("e0_0".to_string(), straight_lane())]),
        };
        let text = serde_json::to_string(&corr).unwrap();
        let back: LaneCorrespondence = serde_json::from_str(&text).unwrap();
        assert_eq!(back, corr);
    }

    #[test]
    fn frames_grouped_by_time() {
        let v = |t: f64| VehicleState {
            id: None,
            lane_id: "a".into(),
            offset: 0.0,
            class: EntityClass::Car,
            color: SimColor::Rgb([1, 2, 3]),
            time: t,
        };
        let frames = group_frames(vec![v(2.0), v(1.0), v(2.0)]);
        assert_eq!(frames.len(), 2);
        assert_eq!(frames[1].vehicles.len(), 2);
    }
}

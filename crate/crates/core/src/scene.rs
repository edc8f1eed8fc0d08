//! Synthetic front-camera view: pinhole projection of world boxes into
//! pixel boxes, and the scene summary sent with each slow request.

use crate::geometry::{OrientedBox, Pose2D};
use crate::simulator::scenario::Camera;
use crate::slow::{ImageBox, SceneObject, Signal};

/// Points closer than this along the optical axis are not projected.
pub const NEAR_PLANE: f64 = 0.5;

/// Objects farther than this are left out of the summary.
pub const SUMMARY_RANGE: f64 = 80.0;

/// Projects a box of `height` standing on the ground. The camera sits at
/// the ego center, `mount_height` above ground, looking along the heading.
/// `None` when any corner is behind the near plane or the box misses the
/// image entirely.
pub fn project_box(camera: &Camera, ego: &Pose2D, bbox: &OrientedBox, height: f64) -> Option<ImageBox> {
    let cx = camera.width as f64 / 2.0;
    let cy = camera.height as f64 / 2.0;
    let mut u = (f64::INFINITY, f64::NEG_INFINITY);
    let mut v = (f64::INFINITY, f64::NEG_INFINITY);
    for corner in bbox.corners() {
        let rel = (corner - ego.position()).rotate(-ego.heading);
        if rel.x < NEAR_PLANE {
            return None;
        }
        let px = cx - camera.focal * rel.y / rel.x;
        u = (u.0.min(px), u.1.max(px));
        for z in [0.0, height] {
            let py = cy + camera.focal * (camera.mount_height - z) / rel.x;
            v = (v.0.min(py), v.1.max(py));
        }
    }
    let (w, h) = (camera.width as f64, camera.height as f64);
    if u.1 < 0.0 || u.0 > w || v.1 < 0.0 || v.0 > h {
        return None;
    }
    let b = ImageBox {
        x_min: u.0.clamp(0.0, w).round() as i32,
        y_min: v.0.clamp(0.0, h).round() as i32,
        x_max: u.1.clamp(0.0, w).round() as i32,
        y_max: v.1.clamp(0.0, h).round() as i32,
    };
    b.is_valid().then_some(b)
}

/// One agent as the camera sees it.
#[derive(Debug, Clone)]
pub struct Sighting<'a> {
    pub id: &'a str,
    pub description: String,
    pub bbox: OrientedBox,
    pub height: f64,
    pub signal: Option<Signal>,
}

/// Visible objects within [`SUMMARY_RANGE`], nearest first, ties by id.
pub fn scene_summary<'a>(camera: &Camera, ego: &Pose2D, sightings: impl IntoIterator<Item = Sighting<'a>>) -> Vec<SceneObject> {
    let mut objects: Vec<SceneObject> = sightings
        .into_iter()
        .filter_map(|s| {
            let distance = s.bbox.center.position().distance(ego.position());
            if distance > SUMMARY_RANGE {
                return None;
            }
            let image_box = project_box(camera, ego, &s.bbox, s.height)?;
            Some(SceneObject {
                id: s.id.to_string(),
                description: s.description,
                image_box,
                distance: (distance * 100.0).round() / 100.0,
                signal: s.signal,
            })
        })
        .collect();
    objects.sort_by(|a, b| a.distance.total_cmp(&b.distance).then_with(|| a.id.cmp(&b.id)));
    objects
}

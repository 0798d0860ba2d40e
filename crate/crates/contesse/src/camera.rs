use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{v2, v3, V2, V3};

/// Perspective camera. Projection goes through a perspective divide onto a
/// unit-focal plane followed by pixel scaling; pixel coordinates have x
/// right and y down, with the origin at the top-left image corner.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Camera {
    pub center: [f64; 3],
    pub look_at: [f64; 3],
    pub up: [f64; 3],
    pub fov_deg: f64,
    pub image_width_px: u32,
    pub image_height_px: u32,
}

impl Camera {
    pub fn from_json(text: &str) -> Result<Camera> {
        let cam: Camera = serde_json::from_str(text)?;
        cam.frame()?;
        Ok(cam)
    }

    pub fn load(path: &std::path::Path) -> Result<Camera> {
        Camera::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn position(&self) -> V3 {
        v3(self.center[0], self.center[1], self.center[2])
    }

    /// Orthonormal frame (right, up, forward). Depth is measured along
    /// `forward`; all projected points must have positive depth.
    pub fn frame(&self) -> Result<CameraFrame> {
        let c = self.position();
        let target = v3(self.look_at[0], self.look_at[1], self.look_at[2]);
        let up_hint = v3(self.up[0], self.up[1], self.up[2]);
        let w = target - c;
        if w.norm() < 1e-12 {
            return Err(Error::InvalidCamera("look_at coincides with center".into()));
        }
        let w = w.normalize();
        let r = w.cross(&up_hint);
        if r.norm() < 1e-9 {
            return Err(Error::InvalidCamera("up is parallel to view direction".into()));
        }
        let r = r.normalize();
        let u = r.cross(&w);
        if !(self.fov_deg > 0.0 && self.fov_deg < 180.0) {
            return Err(Error::InvalidCamera(format!("fov_deg {} out of range", self.fov_deg)));
        }
        let half = (self.fov_deg.to_radians() * 0.5).tan();
        Ok(CameraFrame {
            center: c,
            right: r,
            up: u,
            forward: w,
            focal_px: 0.5 * self.image_height_px as f64 / half,
            cx: 0.5 * self.image_width_px as f64,
            cy: 0.5 * self.image_height_px as f64,
            width: self.image_width_px as f64,
            height: self.image_height_px as f64,
        })
    }
}

/// Resolved projection frame derived from a `Camera`.
#[derive(Debug, Clone, Copy)]
pub struct CameraFrame {
    pub center: V3,
    pub right: V3,
    pub up: V3,
    pub forward: V3,
    /// Pixels per unit of the unit-focal image plane (vertical fov).
    pub focal_px: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: f64,
    pub height: f64,
}

impl CameraFrame {
    /// Depth of `p` along the view direction.
    pub fn depth(&self, p: V3) -> f64 {
        (p - self.center).dot(&self.forward)
    }

    /// Project to pixels; the depth must be positive.
    pub fn project(&self, p: V3) -> Result<(V2, f64)> {
        let rel = p - self.center;
        let d = rel.dot(&self.forward);
        if d <= 0.0 {
            return Err(Error::BehindCamera(d));
        }
        let x = rel.dot(&self.right) / d;
        let y = rel.dot(&self.up) / d;
        Ok((
            v2(self.cx + self.focal_px * x, self.cy - self.focal_px * y),
            d,
        ))
    }
}

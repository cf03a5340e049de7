use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reference line for one edge. Arc length along the polyline plus `offset`
/// is the longitudinal position of every point projected onto it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeLine {
    pub id: String,
    #[serde(default)]
    pub offset: f64,
    /// Declared length; checked against the polyline when given.
    #[serde(default)]
    pub length: Option<f64>,
    pub polyline: Vec<[f64; 2]>,
}

impl EdgeLine {
    pub fn polyline_length(&self) -> f64 {
        self.polyline
            .windows(2)
            .map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]))
            .sum()
    }

    /// `(arc length + offset, signed lateral offset)` of the closest point;
    /// lateral is positive to the left of the direction of travel.
    pub fn project(&self, px: f64, py: f64) -> (f64, f64) {
        let mut best = (f64::INFINITY, 0.0, 0.0);
        let mut arc = 0.0;
        for w in self.polyline.windows(2) {
            let (ax, ay) = (w[0][0], w[0][1]);
            let (dx, dy) = (w[1][0] - ax, w[1][1] - ay);
            let len2 = dx * dx + dy * dy;
            let seg_len = len2.sqrt();
            let u = if len2 > 0.0 {
                (((px - ax) * dx + (py - ay) * dy) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let (cx, cy) = (ax + u * dx, ay + u * dy);
            let dist = (px - cx).hypot(py - cy);
            if dist < best.0 {
                let side = if seg_len > 0.0 {
                    (dx * (py - ay) - dy * (px - ax)) / seg_len
                } else {
                    0.0
                };
                best = (dist, arc + u * seg_len, side);
            }
            arc += seg_len;
        }
        (self.offset + best.1, best.2)
    }
}

/// Corridor configuration: the reference line of every edge.
///
/// ```toml
/// [[edge]]
/// id = "2_1"
/// offset = 0.0
/// polyline = [[0.0, 0.0], [122.2, 0.0]]
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Corridor {
    #[serde(rename = "edge")]
    pub edges: Vec<EdgeLine>,
}

impl Corridor {
    pub fn parse(text: &str) -> Result<Self> {
        let c: Corridor = toml::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.edges.is_empty() {
            return Err(Error::Config("corridor has no edges".into()));
        }
        for e in &self.edges {
            if e.polyline.len() < 2 {
                return Err(Error::Config(format!("edge {} needs >= 2 polyline points", e.id)));
            }
            if let Some(len) = e.length {
                let actual = e.polyline_length();
                if (len - actual).abs() > 1e-3 * actual.max(1.0) {
                    return Err(Error::Config(format!(
                        "edge {}: declared length {len} differs from polyline length {actual}",
                        e.id
                    )));
                }
            }
        }
        Ok(())
    }

    /// Edge by id; with no id (or an unknown one) a single-edge corridor
    /// falls back to its only edge.
    pub fn edge(&self, id: Option<&str>) -> Result<&EdgeLine> {
        if let Some(id) = id {
            if let Some(e) = self.edges.iter().find(|e| e.id == id) {
                return Ok(e);
            }
        }
        if self.edges.len() == 1 {
            return Ok(&self.edges[0]);
        }
        Err(Error::Config(format!(
            "no reference line for edge {}",
            id.unwrap_or("<none>")
        )))
    }

    pub fn project(&self, edge: Option<&str>, x: f64, y: f64) -> Result<(f64, f64)> {
        Ok(self.edge(edge)?.project(x, y))
    }
}

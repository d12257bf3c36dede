//! Axis-aligned boxes in continuous pixel coordinates.
//!
//! Corner convention is `[xmin, ymin, xmax, ymax]` with a 0-based origin at
//! the top-left pixel corner. Formats using width/height or 1-based pixel
//! indices are converted at ingestion.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoxError {
    #[error("non-finite coordinate in box [{0}, {1}, {2}, {3}]")]
    NonFinite(f64, f64, f64, f64),
    #[error("degenerate box [{0}, {1}, {2}, {3}]: min corner must be strictly below max corner")]
    Degenerate(f64, f64, f64, f64),
}

/// An axis-aligned rectangle with strictly positive area.
///
/// Construction validates the invariants, so every `BoundingBox` in the
/// program has finite coordinates with `xmin < xmax` and `ymin < ymax`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    xmin: f64,
    ymin: f64,
    xmax: f64,
    ymax: f64,
}

impl BoundingBox {
    pub fn new(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Result<Self, BoxError> {
        if !(xmin.is_finite() && ymin.is_finite() && xmax.is_finite() && ymax.is_finite()) {
            return Err(BoxError::NonFinite(xmin, ymin, xmax, ymax));
        }
        if xmin >= xmax || ymin >= ymax {
            return Err(BoxError::Degenerate(xmin, ymin, xmax, ymax));
        }
        Ok(Self {
            xmin,
            ymin,
            xmax,
            ymax,
        })
    }

    /// Builds a box from a top-left corner plus width and height.
    pub fn from_xywh(x: f64, y: f64, width: f64, height: f64) -> Result<Self, BoxError> {
        Self::new(x, y, x + width, y + height)
    }

    pub fn xmin(&self) -> f64 {
        self.xmin
    }

    pub fn ymin(&self) -> f64 {
        self.ymin
    }

    pub fn xmax(&self) -> f64 {
        self.xmax
    }

    pub fn ymax(&self) -> f64 {
        self.ymax
    }

    pub fn width(&self) -> f64 {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> f64 {
        self.ymax - self.ymin
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.xmin, self.ymin, self.xmax, self.ymax]
    }

    /// Area of the overlap with `other`; zero when the boxes only touch.
    pub fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let w = self.xmax.min(other.xmax) - self.xmin.max(other.xmin);
        let h = self.ymax.min(other.ymax) - self.ymin.max(other.ymin);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    /// Intersection over union, in `[0, 1]`.
    pub fn iou(&self, other: &BoundingBox) -> f64 {
        let inter = self.intersection_area(other);
        if inter == 0.0 {
            return 0.0;
        }
        let union = self.area() + other.area() - inter;
        (inter / union).clamp(0.0, 1.0)
    }

    /// Clips the box into `[0, width] x [0, height]`.
    ///
    /// Fails with [`BoxError::Degenerate`] when nothing of positive area is
    /// left inside the image.
    pub fn clamp_to_image(&self, width: f64, height: f64) -> Result<Self, BoxError> {
        Self::new(
            self.xmin.clamp(0.0, width),
            self.ymin.clamp(0.0, height),
            self.xmax.clamp(0.0, width),
            self.ymax.clamp(0.0, height),
        )
    }

    /// True when the box lies inside `[0, width] x [0, height]`.
    pub fn is_inside(&self, width: f64, height: f64) -> bool {
        self.xmin >= 0.0 && self.ymin >= 0.0 && self.xmax <= width && self.ymax <= height
    }
}

/// Free-function form of [`BoundingBox::iou`].
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    a.iou(b)
}

impl Serialize for BoundingBox {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_array().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for BoundingBox {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let [xmin, ymin, xmax, ymax] = <[f64; 4]>::deserialize(deserializer)?;
        BoundingBox::new(xmin, ymin, xmax, ymax).map_err(serde::de::Error::custom)
    }
}

//! Axis-aligned boxes in pixel space (top-left origin, `[x, y, w, h]`).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoxError {
    #[error("box has non-positive size (w={w}, h={h})")]
    Degenerate { w: f64, h: f64 },
    #[error("box origin ({x}, {y}) is negative")]
    NegativeOrigin { x: f64, y: f64 },
    #[error("box [{x}, {y}, {w}, {h}] exceeds image bounds {width}x{height}")]
    OutOfBounds {
        x: f64,
        y: f64,
        w: f64,
        h: f64,
        width: u32,
        height: u32,
    },
    #[error("box coordinate is not finite")]
    NonFinite,
}

/// Box with top-left corner `(x, y)` and size `(w, h)`.
///
/// Construction through [`BBox::new`] guarantees `w > 0`, `h > 0` and a
/// non-negative origin; [`BBox::within`] additionally checks image bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "[T; 4]", try_from = "[T; 4]")]
#[serde(bound(
    serialize = "T: Scalar + Serialize",
    deserialize = "T: Scalar + Deserialize<'de>"
))]
pub struct BBox<T> {
    x: T,
    y: T,
    w: T,
    h: T,
}

impl<T: Scalar> BBox<T> {
    pub fn new(x: T, y: T, w: T, h: T) -> Result<Self, BoxError> {
        let finite = [x, y, w, h].iter().all(|v| v.as_f64().is_finite());
        if !finite {
            return Err(BoxError::NonFinite);
        }
        if w <= T::zero() || h <= T::zero() {
            return Err(BoxError::Degenerate {
                w: w.as_f64(),
                h: h.as_f64(),
            });
        }
        if x < T::zero() || y < T::zero() {
            return Err(BoxError::NegativeOrigin {
                x: x.as_f64(),
                y: y.as_f64(),
            });
        }
        Ok(Self { x, y, w, h })
    }

    /// Like [`BBox::new`] but also requires the box to lie inside a
    /// `width` x `height` image.
    pub fn within(x: T, y: T, w: T, h: T, width: u32, height: u32) -> Result<Self, BoxError> {
        let b = Self::new(x, y, w, h)?;
        b.check_bounds(width, height)?;
        Ok(b)
    }

    pub fn check_bounds(&self, width: u32, height: u32) -> Result<(), BoxError> {
        let max_x = T::from_u32(width).expect("image width representable");
        let max_y = T::from_u32(height).expect("image height representable");
        if self.right() > max_x || self.bottom() > max_y {
            return Err(BoxError::OutOfBounds {
                x: self.x.as_f64(),
                y: self.y.as_f64(),
                w: self.w.as_f64(),
                h: self.h.as_f64(),
                width,
                height,
            });
        }
        Ok(())
    }

    pub fn x(&self) -> T {
        self.x
    }

    pub fn y(&self) -> T {
        self.y
    }

    pub fn w(&self) -> T {
        self.w
    }

    pub fn h(&self) -> T {
        self.h
    }

    pub fn right(&self) -> T {
        self.x + self.w
    }

    pub fn bottom(&self) -> T {
        self.y + self.h
    }

    pub fn area(&self) -> T {
        self.w * self.h
    }

    pub fn to_array(&self) -> [T; 4] {
        [self.x, self.y, self.w, self.h]
    }

    /// Multiplies every coordinate by `factor` (must be positive).
    pub fn scaled(&self, factor: T) -> Result<Self, BoxError> {
        Self::new(
            self.x * factor,
            self.y * factor,
            self.w * factor,
            self.h * factor,
        )
    }

    pub fn intersection_area(&self, other: &Self) -> T {
        let ix = self.right().min_of(other.right()) - self.x.max_of(other.x);
        let iy = self.bottom().min_of(other.bottom()) - self.y.max_of(other.y);
        if ix > T::zero() && iy > T::zero() {
            ix * iy
        } else {
            T::zero()
        }
    }

    /// Intersection over union in `[0, 1]`; `0` for disjoint or merely
    /// touching boxes.
    pub fn iou(&self, other: &Self) -> T {
        let inter = self.intersection_area(other);
        if inter == T::zero() {
            return T::zero();
        }
        let union = self.area() + other.area() - inter;
        inter / union
    }
}

impl<T: Scalar> From<BBox<T>> for [T; 4] {
    fn from(b: BBox<T>) -> Self {
        b.to_array()
    }
}

impl<T: Scalar> TryFrom<[T; 4]> for BBox<T> {
    type Error = BoxError;

    fn try_from(v: [T; 4]) -> Result<Self, Self::Error> {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

/// Free-function form of [`BBox::iou`].
pub fn iou<T: Scalar>(a: &BBox<T>, b: &BBox<T>) -> T {
    a.iou(b)
}

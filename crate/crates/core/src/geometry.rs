//! Axis-aligned boxes, upright ellipses, and the overlap measures built on them.
//!
//! Coordinates are real-valued pixels with the origin at the top-left corner.
//! Whenever a region has to be turned into a set of pixels, pixel `(i, j)` is
//! represented by its center `(i + 0.5, j + 0.5)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Vertical extension applied to square detections before they are compared
/// against elliptical face annotations.
pub const DEFAULT_VERTICAL_EXTENSION: f64 = 0.40;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        let b = BoundingBox { x, y, w, h };
        b.validate()?;
        Ok(b)
    }

    /// Checks the invariants; useful after deserializing.
    pub fn validate(&self) -> Result<()> {
        let reason = if ![self.x, self.y, self.w, self.h].iter().all(|v| v.is_finite()) {
            Some("non-finite coordinate")
        } else if self.w <= 0.0 {
            Some("width must be positive")
        } else if self.h <= 0.0 {
            Some("height must be positive")
        } else {
            None
        };
        match reason {
            Some(reason) => Err(Error::InvalidBox {
                x: self.x,
                y: self.y,
                w: self.w,
                h: self.h,
                reason,
            }),
            None => Ok(()),
        }
    }

    pub fn square(x: f64, y: f64, side: f64) -> Result<Self> {
        Self::new(x, y, side, side)
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let iw = self.right().min(other.right()) - self.x.max(other.x);
        let ih = self.bottom().min(other.bottom()) - self.y.max(other.y);
        if iw <= 0.0 || ih <= 0.0 {
            0.0
        } else {
            iw * ih
        }
    }

    /// Integer pixels whose centers fall inside the box, clipped to a
    /// `width` x `height` grid. `None` when no pixel center is covered.
    pub fn pixel_span(&self, width: usize, height: usize) -> Option<PixelSpan> {
        let (x0, x1) = axis_span(self.x, self.w, width);
        let (y0, y1) = axis_span(self.y, self.h, height);
        if x0 >= x1 || y0 >= y1 {
            None
        } else {
            Some(PixelSpan { x0, x1, y0, y1 })
        }
    }

    pub fn contains_point(&self, px: f64, py: f64) -> bool {
        px >= self.x && px < self.right() && py >= self.y && py < self.bottom()
    }
}

fn axis_span(origin: f64, len: f64, limit: usize) -> (usize, usize) {
    // center i + 0.5 in [origin, origin + len)
    let lo = (origin - 0.5).ceil().max(0.0);
    let hi = (origin + len - 0.5).ceil().clamp(0.0, limit as f64);
    (lo.min(limit as f64) as usize, hi as usize)
}

/// Half-open range of pixel indices `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelSpan {
    pub x0: usize,
    pub x1: usize,
    pub y0: usize,
    pub y1: usize,
}

impl PixelSpan {
    pub fn count(&self) -> usize {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }
}

/// Integer-aligned rectangle, used for tiles and image crops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PixelRect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl PixelRect {
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        PixelRect { x, y, w, h }
    }

    pub fn to_box(&self) -> BoundingBox {
        BoundingBox {
            x: self.x as f64,
            y: self.y as f64,
            w: self.w as f64,
            h: self.h as f64,
        }
    }

    /// Smallest pixel rectangle covering `b`, clipped to the image.
    pub fn covering(b: &BoundingBox, width: u32, height: u32) -> Option<PixelRect> {
        let x0 = b.x.floor().max(0.0);
        let y0 = b.y.floor().max(0.0);
        let x1 = b.right().ceil().min(width as f64);
        let y1 = b.bottom().ceil().min(height as f64);
        if x1 <= x0 || y1 <= y0 {
            return None;
        }
        Some(PixelRect {
            x: x0 as u32,
            y: y0 as u32,
            w: (x1 - x0) as u32,
            h: (y1 - y0) as u32,
        })
    }
}

/// Ellipse with semi-axis `ra` along y and `rb` along x before rotation by
/// `angle` (radians, counter-clockwise in image coordinates).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub cx: f64,
    pub cy: f64,
    pub ra: f64,
    pub rb: f64,
    pub angle: f64,
}

impl Ellipse {
    pub fn new(cx: f64, cy: f64, ra: f64, rb: f64, angle: f64) -> Result<Self> {
        let e = Ellipse { cx, cy, ra, rb, angle };
        e.validate()?;
        Ok(e)
    }

    pub fn upright(cx: f64, cy: f64, ra: f64, rb: f64) -> Result<Self> {
        Self::new(cx, cy, ra, rb, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.cx, self.cy, self.ra, self.rb, self.angle]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(Error::InvalidEllipse("non-finite parameter"));
        }
        if self.ra <= 0.0 || self.rb <= 0.0 {
            return Err(Error::InvalidEllipse("semi-axes must be positive"));
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        std::f64::consts::PI * self.ra * self.rb
    }

    pub fn contains_point(&self, px: f64, py: f64) -> bool {
        let (s, c) = self.angle.sin_cos();
        let dx = px - self.cx;
        let dy = py - self.cy;
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        (u / self.rb).powi(2) + (v / self.ra).powi(2) <= 1.0
    }

    /// Half extents of the axis-aligned bounding box.
    fn half_extents(&self) -> (f64, f64) {
        let (s, c) = self.angle.sin_cos();
        let ex = ((self.rb * c).powi(2) + (self.ra * s).powi(2)).sqrt();
        let ey = ((self.rb * s).powi(2) + (self.ra * c).powi(2)).sqrt();
        (ex, ey)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Region {
    Box(BoundingBox),
    Ellipse(Ellipse),
}

impl Region {
    pub fn contains_point(&self, px: f64, py: f64) -> bool {
        match self {
            Region::Box(b) => b.contains_point(px, py),
            Region::Ellipse(e) => e.contains_point(px, py),
        }
    }

    /// `(x0, y0, x1, y1)` of the axis-aligned extent.
    pub fn extent(&self) -> (f64, f64, f64, f64) {
        match self {
            Region::Box(b) => (b.x, b.y, b.right(), b.bottom()),
            Region::Ellipse(e) => {
                let (ex, ey) = e.half_extents();
                (e.cx - ex, e.cy - ey, e.cx + ex, e.cy + ey)
            }
        }
    }
}

impl From<BoundingBox> for Region {
    fn from(b: BoundingBox) -> Self {
        Region::Box(b)
    }
}

impl From<Ellipse> for Region {
    fn from(e: Ellipse) -> Self {
        Region::Ellipse(e)
    }
}

/// Pixel grid the regions are rasterized on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Canvas {
    pub width: u32,
    pub height: u32,
}

impl Canvas {
    pub fn new(width: u32, height: u32) -> Self {
        Canvas { width, height }
    }

    /// Smallest canvas anchored at the origin that holds every region.
    pub fn enclosing<'a>(regions: impl IntoIterator<Item = &'a Region>) -> Canvas {
        let (mut w, mut h) = (1.0f64, 1.0f64);
        for r in regions {
            let (_, _, x1, y1) = r.extent();
            w = w.max(x1.ceil());
            h = h.max(y1.ceil());
        }
        Canvas {
            width: w as u32,
            height: h as u32,
        }
    }
}

/// Intersection over union of two boxes, by exact area arithmetic.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Keeps the box center fixed and scales the height by `1 + factor`.
pub fn extend_box_vertical(b: &BoundingBox, factor: f64) -> Result<BoundingBox> {
    if !(factor >= 0.0 && factor.is_finite()) {
        return Err(Error::invalid(format!("extension factor {factor} must be >= 0")));
    }
    let (_, cy) = b.center();
    let h = b.h * (1.0 + factor);
    Ok(BoundingBox {
        x: b.x,
        y: cy - h / 2.0,
        w: b.w,
        h,
    })
}

/// Largest upright ellipse inside `b`.
pub fn inscribe_ellipse(b: &BoundingBox) -> Ellipse {
    let (cx, cy) = b.center();
    Ellipse {
        cx,
        cy,
        ra: b.h / 2.0,
        rb: b.w / 2.0,
        angle: 0.0,
    }
}

/// IoU of two regions measured by counting rasterized pixel centers on `canvas`.
pub fn region_iou(a: &Region, b: &Region, canvas: Canvas) -> Result<f64> {
    let counts = rasterized_overlap(a, b, canvas);
    if counts.a == 0 || counts.b == 0 {
        return Err(Error::EmptyRegion {
            width: canvas.width,
            height: canvas.height,
        });
    }
    let union = counts.a + counts.b - counts.both;
    Ok(counts.both as f64 / union as f64)
}

/// Number of canvas pixels whose centers lie in the region.
pub fn rasterized_area(r: &Region, canvas: Canvas) -> usize {
    rasterized_overlap(r, r, canvas).a
}

struct OverlapCounts {
    a: usize,
    b: usize,
    both: usize,
}

fn rasterized_overlap(a: &Region, b: &Region, canvas: Canvas) -> OverlapCounts {
    let (ax0, ay0, ax1, ay1) = a.extent();
    let (bx0, by0, bx1, by1) = b.extent();
    let span = |lo: f64, hi: f64, limit: u32| -> (u32, u32) {
        let lo = (lo - 0.5).floor().max(0.0).min(limit as f64) as u32;
        let hi = (hi + 0.5).ceil().max(0.0).min(limit as f64) as u32;
        (lo, hi)
    };
    let (x0, x1) = span(ax0.min(bx0), ax1.max(bx1), canvas.width);
    let (y0, y1) = span(ay0.min(by0), ay1.max(by1), canvas.height);

    let mut counts = OverlapCounts { a: 0, b: 0, both: 0 };
    for j in y0..y1 {
        let py = j as f64 + 0.5;
        for i in x0..x1 {
            let px = i as f64 + 0.5;
            let in_a = a.contains_point(px, py);
            let in_b = b.contains_point(px, py);
            counts.a += in_a as usize;
            counts.b += in_b as usize;
            counts.both += (in_a && in_b) as usize;
        }
    }
    counts
}

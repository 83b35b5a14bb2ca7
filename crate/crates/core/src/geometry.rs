//! Center-form boxes in continuous source-pixel coordinates.

use serde::{Deserialize, Serialize};

use crate::raster::PixelRect;

/// Axis-aligned box given by its center and size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self { cx, cy, w, h }
    }

    pub fn from_rect(r: PixelRect) -> Self {
        Self {
            cx: r.x0 as f64 + r.w as f64 / 2.0,
            cy: r.y0 as f64 + r.h as f64 / 2.0,
            w: r.w as f64,
            h: r.h as f64,
        }
    }

    pub fn left(&self) -> f64 {
        self.cx - self.w / 2.0
    }

    pub fn right(&self) -> f64 {
        self.cx + self.w / 2.0
    }

    pub fn top(&self) -> f64 {
        self.cy - self.h / 2.0
    }

    pub fn bottom(&self) -> f64 {
        self.cy + self.h / 2.0
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn aspect(&self) -> f64 {
        self.w / self.h
    }

    /// Same center, both sides multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self::new(self.cx, self.cy, self.w * factor, self.h * factor)
    }

    /// Integer footprint: edges rounded half-up (`floor(v + 0.5)`) and
    /// clamped to the `width x height` image. `None` when nothing remains.
    pub fn rasterize(&self, width: usize, height: usize) -> Option<PixelRect> {
        let edge = |v: f64, n: usize| (v + 0.5).floor().clamp(0.0, n as f64) as usize;
        let (x0, x1) = (edge(self.left(), width), edge(self.right(), width));
        let (y0, y1) = (edge(self.top(), height), edge(self.bottom(), height));
        (x1 > x0 && y1 > y0).then(|| PixelRect::new(x0, y0, x1 - x0, y1 - y0))
    }

    /// True when the unclamped footprint already lies inside the image.
    pub fn rasterizes_inside(&self, width: usize, height: usize) -> bool {
        let edge = |v: f64| (v + 0.5).floor();
        edge(self.left()) >= 0.0
            && edge(self.top()) >= 0.0
            && edge(self.right()) <= width as f64
            && edge(self.bottom()) <= height as f64
            && edge(self.right()) > edge(self.left())
            && edge(self.bottom()) > edge(self.top())
    }
}

/// Intersection over union in continuous coordinates.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let ix = (a.right().min(b.right()) - a.left().max(b.left())).max(0.0);
    let iy = (a.bottom().min(b.bottom()) - a.top().max(b.top())).max(0.0);
    let inter = ix * iy;
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Fits `b` inside `rect`: sizes are capped at the rect's, then the center
/// moves the minimum distance needed.
pub fn clip_to_rect(b: &BBox, rect: PixelRect) -> BBox {
    let w = b.w.min(rect.w as f64);
    let h = b.h.min(rect.h as f64);
    let (x0, x1) = (rect.x0 as f64, rect.x1() as f64);
    let (y0, y1) = (rect.y0 as f64, rect.y1() as f64);
    BBox {
        cx: b.cx.clamp(x0 + w / 2.0, x1 - w / 2.0),
        cy: b.cy.clamp(y0 + h / 2.0, y1 - h / 2.0),
        w,
        h,
    }
}

/// Clips to the `source_w x source_h` image.
pub fn clip_box(b: &BBox, source_w: usize, source_h: usize) -> BBox {
    clip_to_rect(b, PixelRect::new(0, 0, source_w, source_h))
}

//! Bounding-box algebra in center form.
//!
//! Frame-space boxes (`GlobalBox`) and crop-space boxes (`LocalBox`) are both
//! stored as `(center x, center y, width, height)`. Local coordinates use the
//! crop center as origin and are scaled so that the crop spans `C` localizer
//! pixels, i.e. `global = local * s / C + crop_center`.

/// Axis-aligned box in frame pixels, center form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlobalBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

/// Axis-aligned box in localizer pixels relative to a crop center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

/// Square frame region `[cx - s/2, cx + s/2] x [cy - s/2, cy + s/2]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crop {
    pub cx: f64,
    pub cy: f64,
    pub s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FrameDims {
    pub width: u32,
    pub height: u32,
}

impl FrameDims {
    pub fn new(width: u32, height: u32) -> Self {
        Self { width, height }
    }

    pub fn contains(&self, b: &GlobalBox) -> bool {
        let (l, t, r, bt) = b.ltrb();
        l >= 0.0 && t >= 0.0 && r <= self.width as f64 && bt <= self.height as f64
    }
}

impl GlobalBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    /// Builds a box from MOTChallenge-style top-left geometry.
    pub fn from_tlwh(left: f64, top: f64, w: f64, h: f64) -> Self {
        Self { x: left + w / 2.0, y: top + h / 2.0, w, h }
    }

    pub fn to_tlwh(&self) -> [f64; 4] {
        [self.x - self.w / 2.0, self.y - self.h / 2.0, self.w, self.h]
    }

    /// `(left, top, right, bottom)`.
    pub fn ltrb(&self) -> (f64, f64, f64, f64) {
        ltrb(self.x, self.y, self.w, self.h)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn is_valid(&self) -> bool {
        self.x.is_finite()
            && self.y.is_finite()
            && self.w.is_finite()
            && self.h.is_finite()
            && self.w > 0.0
            && self.h > 0.0
    }
}

impl LocalBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn is_valid(&self) -> bool {
        self.x.is_finite()
            && self.y.is_finite()
            && self.w.is_finite()
            && self.h.is_finite()
            && self.w > 0.0
            && self.h > 0.0
    }

    /// Intersects the box with the crop window `[-C/2, C/2]^2`.
    ///
    /// Returns `None` when the overlap has no area.
    pub fn clip_to_window(&self, resolution: f64) -> Option<LocalBox> {
        let half = resolution / 2.0;
        let (l, t, r, b) = ltrb(self.x, self.y, self.w, self.h);
        let (l, t) = (l.max(-half), t.max(-half));
        let (r, b) = (r.min(half), b.min(half));
        if r > l && b > t {
            Some(LocalBox::new((l + r) / 2.0, (t + b) / 2.0, r - l, b - t))
        } else {
            None
        }
    }
}

impl Crop {
    pub fn new(cx: f64, cy: f64, s: f64) -> Self {
        Self { cx, cy, s }
    }

    pub fn as_box(&self) -> GlobalBox {
        GlobalBox::new(self.cx, self.cy, self.s, self.s)
    }

    pub fn contains(&self, b: &GlobalBox) -> bool {
        let (cl, ct, cr, cb) = ltrb(self.cx, self.cy, self.s, self.s);
        let (l, t, r, bt) = b.ltrb();
        l >= cl && t >= ct && r <= cr && bt <= cb
    }

    /// True if the box and the crop share a region of positive area.
    pub fn intersects(&self, b: &GlobalBox) -> bool {
        intersection(&self.as_box(), b) > 0.0
    }
}

fn ltrb(x: f64, y: f64, w: f64, h: f64) -> (f64, f64, f64, f64) {
    (x - w / 2.0, y - h / 2.0, x + w / 2.0, y + h / 2.0)
}

fn overlap_area(a: (f64, f64, f64, f64), b: (f64, f64, f64, f64)) -> f64 {
    let iw = (a.2.min(b.2) - a.0.max(b.0)).max(0.0);
    let ih = (a.3.min(b.3) - a.1.max(b.1)).max(0.0);
    iw * ih
}

fn iou_raw(a: (f64, f64, f64, f64), b: (f64, f64, f64, f64)) -> f64 {
    let (ra, rb) = (ltrb(a.0, a.1, a.2, a.3), ltrb(b.0, b.1, b.2, b.3));
    let inter = overlap_area(ra, rb);
    if inter <= 0.0 {
        return 0.0;
    }
    // areas from the same corners as the overlap, so identical boxes give exactly 1
    let area = |r: (f64, f64, f64, f64)| (r.2 - r.0) * (r.3 - r.1);
    let union = area(ra) + area(rb) - inter;
    (inter / union).clamp(0.0, 1.0)
}

fn intersection(a: &GlobalBox, b: &GlobalBox) -> f64 {
    overlap_area(a.ltrb(), b.ltrb())
}

/// Intersection over union of two frame boxes.
pub fn iou(a: &GlobalBox, b: &GlobalBox) -> f64 {
    iou_raw((a.x, a.y, a.w, a.h), (b.x, b.y, b.w, b.h))
}

/// Intersection over union of two crop-space boxes.
pub fn local_iou(a: &LocalBox, b: &LocalBox) -> f64 {
    iou_raw((a.x, a.y, a.w, a.h), (b.x, b.y, b.w, b.h))
}

/// Euclidean distance between box centers.
pub fn center_distance(a: &GlobalBox, b: &GlobalBox) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

pub fn local_center_distance(a: &LocalBox, b: &LocalBox) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

/// Square crop centered on the box with side `max(w, h) * beta`.
pub fn make_crop(b: &GlobalBox, beta: f64) -> Crop {
    Crop::new(b.x, b.y, b.w.max(b.h) * beta)
}

pub fn local_to_global(lb: &LocalBox, crop: &Crop, resolution: f64) -> GlobalBox {
    let scale = crop.s / resolution;
    GlobalBox::new(
        lb.x * scale + crop.cx,
        lb.y * scale + crop.cy,
        lb.w * scale,
        lb.h * scale,
    )
}

pub fn global_to_local(gb: &GlobalBox, crop: &Crop, resolution: f64) -> LocalBox {
    let scale = resolution / crop.s;
    LocalBox::new(
        (gb.x - crop.cx) * scale,
        (gb.y - crop.cy) * scale,
        gb.w * scale,
        gb.h * scale,
    )
}

/// Moves a crop inside the frame with the smallest translation, shrinking it
/// first if it is larger than the frame's smaller side.
pub fn clip_crop(crop: &Crop, dims: &FrameDims) -> Crop {
    let (fw, fh) = (dims.width as f64, dims.height as f64);
    let s = crop.s.min(fw).min(fh);
    let half = s / 2.0;
    Crop::new(crop.cx.clamp(half, fw - half), crop.cy.clamp(half, fh - half), s)
}

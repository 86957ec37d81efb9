/// Integer pixel position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Point {
    pub x: i64,
    pub y: i64,
}

impl Point {
    pub const fn new(x: i64, y: i64) -> Self {
        Self { x, y }
    }
}

/// Axis-aligned rectangle; `(x, y)` is the top-left pixel, `w`/`h` extents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BoundingBox {
    pub x: i64,
    pub y: i64,
    pub w: i64,
    pub h: i64,
}

impl BoundingBox {
    pub const fn new(x: i64, y: i64, w: i64, h: i64) -> Self {
        Self { x, y, w, h }
    }

    /// Square box of side `side` whose top-left corner is `(x, y)`.
    pub const fn square(x: i64, y: i64, side: i64) -> Self {
        Self::new(x, y, side, side)
    }

    pub fn is_valid(&self) -> bool {
        self.w > 0 && self.h > 0
    }

    pub fn area(&self) -> i64 {
        self.w.max(0) * self.h.max(0)
    }

    pub fn right(&self) -> i64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> i64 {
        self.y + self.h
    }

    pub fn intersection_area(&self, other: &Self) -> i64 {
        let w = (self.right().min(other.right()) - self.x.max(other.x)).max(0);
        let h = (self.bottom().min(other.bottom()) - self.y.max(other.y)).max(0);
        w * h
    }

    /// True when `other` lies entirely inside `self`.
    pub fn contains(&self, other: &Self) -> bool {
        other.x >= self.x
            && other.y >= self.y
            && other.right() <= self.right()
            && other.bottom() <= self.bottom()
    }

    /// Whether the box overlaps the `width × height` image.
    pub fn intersects_image(&self, width: u32, height: u32) -> bool {
        self.is_valid()
            && self.intersection_area(&Self::new(0, 0, i64::from(width), i64::from(height))) > 0
    }

    /// Box centre `(x + w/2, y + h/2)`, rounded half to even.
    pub fn center(&self) -> Point {
        let cx = self.x as f64 + self.w as f64 / 2.0;
        let cy = self.y as f64 + self.h as f64 / 2.0;
        Point::new(cx.round_ties_even() as i64, cy.round_ties_even() as i64)
    }
}

/// Alias used by the extraction code.
pub fn bbox_to_square_center(bb: &BoundingBox) -> Point {
    bb.center()
}

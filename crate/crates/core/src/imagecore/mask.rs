/// A binary raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

/// Inclusive-exclusive pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelRect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl PixelRect {
    pub fn width(&self) -> usize {
        self.x1 - self.x0
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0
    }

    pub fn diagonal(&self) -> f64 {
        ((self.width() * self.width() + self.height() * self.height()) as f64).sqrt()
    }

    /// Grows by one pixel per step until `grow` steps or the outer bounds.
    pub fn expanded(&self, grow: usize, width: usize, height: usize) -> PixelRect {
        PixelRect {
            x0: self.x0.saturating_sub(grow),
            y0: self.y0.saturating_sub(grow),
            x1: (self.x1 + grow).min(width),
            y1: (self.y1 + grow).min(height),
        }
    }

    pub fn include(&mut self, x: usize, y: usize) {
        self.x0 = self.x0.min(x);
        self.y0 = self.y0.min(y);
        self.x1 = self.x1.max(x + 1);
        self.y1 = self.y1.max(y + 1);
    }

    pub fn point(x: usize, y: usize) -> PixelRect {
        PixelRect { x0: x, y0: y, x1: x + 1, y1: y + 1 }
    }
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![false; width * height] }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<bool>) -> Option<Self> {
        (data.len() == width * height).then_some(Self { width, height, data })
    }

    /// Builds a mask from rows of `#` (set) and `.` (clear).
    pub fn from_ascii(rows: &[&str]) -> Self {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.len());
        let data = rows.iter().flat_map(|r| r.chars().map(|c| c == '#')).collect();
        Self { width, height, data }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    /// Out-of-bounds coordinates read as clear.
    #[inline]
    pub fn get_signed(&self, x: isize, y: isize) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height && self.get(x as usize, y as usize)
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    pub fn bbox(&self) -> Option<PixelRect> {
        let mut rect: Option<PixelRect> = None;
        for (i, _) in self.data.iter().enumerate().filter(|(_, &b)| b) {
            let (x, y) = (i % self.width, i / self.width);
            match rect.as_mut() {
                Some(r) => r.include(x, y),
                None => rect = Some(PixelRect::point(x, y)),
            }
        }
        rect
    }

    pub fn crop(&self, r: PixelRect) -> Mask {
        let mut out = Mask::new(r.width(), r.height());
        for y in r.y0..r.y1 {
            for x in r.x0..r.x1 {
                out.set(x - r.x0, y - r.y0, self.get(x, y));
            }
        }
        out
    }
}

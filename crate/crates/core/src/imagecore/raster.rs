use serde::{Deserialize, Serialize};

/// An 8-bit image with one (gray) or three (RGB) interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Raster8 {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<u8>,
}

impl Raster8 {
    /// Creates a raster filled with `value` on every channel.
    ///
    /// Panics if a dimension is zero or `channels` is not 1 or 3.
    pub fn filled(width: usize, height: usize, channels: usize, value: u8) -> Self {
        assert!(width >= 1 && height >= 1, "raster dimensions must be positive");
        assert!(channels == 1 || channels == 3, "raster must have 1 or 3 channels");
        Self { width, height, channels, data: vec![value; width * height * channels] }
    }

    /// Wraps existing interleaved samples. Returns `None` when the length or
    /// channel count is inconsistent.
    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Option<Self> {
        if width == 0 || height == 0 || !(channels == 1 || channels == 3) {
            return None;
        }
        if data.len() != width * height * channels {
            return None;
        }
        Some(Self { width, height, channels, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> u8 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: u8) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    /// Writes `v` to every channel of pixel (x, y).
    #[inline]
    pub fn set_all(&mut self, x: usize, y: usize, v: u8) {
        let base = (y * self.width + x) * self.channels;
        self.data[base..base + self.channels].fill(v);
    }

    /// Writes a colour; gray rasters receive the channel mean.
    pub fn set_rgb(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        if self.channels == 3 {
            let base = (y * self.width + x) * 3;
            self.data[base..base + 3].copy_from_slice(&rgb);
        } else {
            let mean = (rgb[0] as u16 + rgb[1] as u16 + rgb[2] as u16) / 3;
            self.data[y * self.width + x] = mean as u8;
        }
    }

    /// Copies one channel into a contiguous plane.
    pub fn channel(&self, c: usize) -> Vec<u8> {
        assert!(c < self.channels);
        self.data.iter().skip(c).step_by(self.channels).copied().collect()
    }

    /// Integer luma (BT.601 weights) for RGB, identity for gray.
    pub fn to_gray(&self) -> Raster8 {
        if self.channels == 1 {
            return self.clone();
        }
        let data = self
            .data
            .chunks_exact(3)
            .map(|p| ((p[0] as u32 * 299 + p[1] as u32 * 587 + p[2] as u32 * 114 + 500) / 1000) as u8)
            .collect();
        Raster8 { width: self.width, height: self.height, channels: 1, data }
    }

    /// Replicates a gray raster into three channels.
    pub fn to_rgb(&self) -> Raster8 {
        if self.channels == 3 {
            return self.clone();
        }
        let data = self.data.iter().flat_map(|&v| [v, v, v]).collect();
        Raster8 { width: self.width, height: self.height, channels: 3, data }
    }

    /// Copies the rectangle (x, y, w, h), which must lie inside the raster.
    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Raster8 {
        assert!(x + w <= self.width && y + h <= self.height && w > 0 && h > 0);
        let mut data = Vec::with_capacity(w * h * self.channels);
        for row in y..y + h {
            let start = (row * self.width + x) * self.channels;
            data.extend_from_slice(&self.data[start..start + w * self.channels]);
        }
        Raster8 { width: w, height: h, channels: self.channels, data }
    }

    /// Mirrors the raster left-to-right.
    pub fn flip_horizontal(&self) -> Raster8 {
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                for c in 0..self.channels {
                    out.set(self.width - 1 - x, y, c, self.get(x, y, c));
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_inconsistent_lengths() {
        assert!(Raster8::from_vec(2, 2, 1, vec![0; 3]).is_none());
        assert!(Raster8::from_vec(2, 2, 2, vec![0; 8]).is_none());
        assert!(Raster8::from_vec(0, 2, 1, vec![]).is_none());
        assert!(Raster8::from_vec(2, 2, 3, vec![0; 12]).is_some());
    }

    #[test]
    fn channel_extraction_and_crop() {
        let mut r = Raster8::filled(4, 3, 3, 0);
        r.set(2, 1, 1, 77);
        assert_eq!(r.channel(1)[6], 77);
        assert_eq!(r.channel(0)[6], 0);
        let c = r.crop(1, 1, 2, 2);
        assert_eq!(c.get(1, 0, 1), 77);
        assert_eq!(r.flip_horizontal().get(1, 1, 1), 77);
    }
}

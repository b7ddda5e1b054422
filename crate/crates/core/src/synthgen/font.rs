//! A 5×7 bitmap font covering scale-bar labels.

/// Glyph rows top to bottom; bit 4 is the leftmost column.
fn glyph(c: char) -> Option<[u8; 7]> {
    Some(match c {
        '0' => [0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E],
        '1' => [0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E],
        '2' => [0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F],
        '3' => [0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E],
        '4' => [0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02],
        '5' => [0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E],
        '6' => [0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E],
        '7' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08],
        '8' => [0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E],
        '9' => [0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C],
        '.' => [0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C],
        ' ' => [0x00; 7],
        'n' => [0x00, 0x00, 0x16, 0x19, 0x11, 0x11, 0x11],
        'm' => [0x00, 0x00, 0x1A, 0x15, 0x15, 0x11, 0x11],
        'u' => [0x00, 0x00, 0x11, 0x11, 0x11, 0x13, 0x0D],
        // micro sign and Greek mu share a glyph
        'µ' | 'μ' => [0x00, 0x00, 0x12, 0x12, 0x12, 0x1D, 0x10],
        'c' => [0x00, 0x00, 0x0E, 0x10, 0x10, 0x11, 0x0E],
        'A' => [0x0E, 0x11, 0x11, 0x11, 0x1F, 0x11, 0x11],
        'Å' => [0x04, 0x0A, 0x0E, 0x11, 0x1F, 0x11, 0x11],
        _ => return None,
    })
}

pub const GLYPH_W: usize = 5;
pub const GLYPH_H: usize = 7;

/// Pixel size of `text` at integer `scale`, or `None` for unsupported chars.
pub fn text_size(text: &str, scale: usize) -> Option<(usize, usize)> {
    let n = text.chars().count();
    if n == 0 || text.chars().any(|c| glyph(c).is_none()) {
        return None;
    }
    Some(((n * (GLYPH_W + 1) - 1) * scale, GLYPH_H * scale))
}

/// Calls `put(x, y)` for every set pixel of `text` drawn at (x0, y0).
pub fn render_text(text: &str, scale: usize, x0: usize, y0: usize, mut put: impl FnMut(usize, usize)) {
    for (k, c) in text.chars().enumerate() {
        let Some(rows) = glyph(c) else { continue };
        let gx = x0 + k * (GLYPH_W + 1) * scale;
        for (row, bits) in rows.iter().enumerate() {
            for col in 0..GLYPH_W {
                if bits & (0x10 >> col) == 0 {
                    continue;
                }
                for sy in 0..scale {
                    for sx in 0..scale {
                        put(gx + col * scale + sx, y0 + row * scale + sy);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes() {
        assert_eq!(text_size("5 µm", 1), Some((23, 7)));
        assert_eq!(text_size("200 nm", 3), Some((105, 21)));
        assert_eq!(text_size("5 kx", 1), None);
        assert_eq!(text_size("", 1), None);
    }

    #[test]
    fn glyph_strokes_are_short() {
        // no glyph run exceeds the cell width, so text never looks like a bar
        let mut max_run = 0;
        for c in "0123456789.nmuµcAÅ".chars() {
            for bits in glyph(c).unwrap() {
                let mut run = 0;
                for col in 0..GLYPH_W {
                    run = if bits & (0x10 >> col) != 0 { run + 1 } else { 0 };
                    max_run = max_run.max(run);
                }
            }
        }
        assert!(max_run <= GLYPH_W);
    }

    #[test]
    fn renders_inside_box() {
        let (w, h) = text_size("10 nm", 2).unwrap();
        let mut n = 0;
        render_text("10 nm", 2, 3, 4, |x, y| {
            assert!(x >= 3 && x < 3 + w && y >= 4 && y < 4 + h);
            n += 1;
        });
        assert!(n > 0);
    }
}

//! Box outlines and rank digits burned into an RGB copy of a grayscale image.

use image::{Rgb, RgbImage};

use roiaug_core::raster::GrayImage;
use roiaug_core::roibank::RoiBank;

/// 3x5 glyphs for 0-9, one row per byte, bit 2 = leftmost column.
const DIGITS: [[u8; 5]; 10] = [
    [0b111, 0b101, 0b101, 0b101, 0b111],
    [0b010, 0b110, 0b010, 0b010, 0b111],
    [0b111, 0b001, 0b111, 0b100, 0b111],
    [0b111, 0b001, 0b111, 0b001, 0b111],
    [0b101, 0b101, 0b111, 0b001, 0b001],
    [0b111, 0b100, 0b111, 0b001, 0b111],
    [0b111, 0b100, 0b111, 0b101, 0b111],
    [0b111, 0b001, 0b010, 0b010, 0b010],
    [0b111, 0b101, 0b111, 0b101, 0b111],
    [0b111, 0b101, 0b111, 0b001, 0b111],
];

/// Rank colors, best first; ranks past the table reuse the last entry.
const PALETTE: [[u8; 3]; 5] = [
    [255, 48, 48],
    [255, 160, 0],
    [240, 230, 40],
    [60, 200, 80],
    [60, 140, 255],
];

pub fn to_rgb(img: &GrayImage) -> RgbImage {
    let bytes = img.to_u8();
    RgbImage::from_fn(img.width() as u32, img.height() as u32, |x, y| {
        let v = bytes[y as usize * img.width() + x as usize];
        Rgb([v, v, v])
    })
}

fn put(canvas: &mut RgbImage, x: i64, y: i64, color: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < canvas.width() && (y as u32) < canvas.height() {
        canvas.put_pixel(x as u32, y as u32, color);
    }
}

/// Rectangle outline `thickness` pixels wide, inset from `[x0, x1) x [y0, y1)`.
pub fn draw_rect(canvas: &mut RgbImage, x0: i64, y0: i64, x1: i64, y1: i64, thickness: i64, color: Rgb<u8>) {
    for t in 0..thickness {
        for x in x0..x1 {
            put(canvas, x, y0 + t, color);
            put(canvas, x, y1 - 1 - t, color);
        }
        for y in y0..y1 {
            put(canvas, x0 + t, y, color);
            put(canvas, x1 - 1 - t, y, color);
        }
    }
}

/// Decimal number with its top-left corner at `(x, y)`.
pub fn draw_number(canvas: &mut RgbImage, x: i64, y: i64, value: usize, scale: i64, color: Rgb<u8>) {
    for (i, ch) in value.to_string().bytes().enumerate() {
        let glyph = DIGITS[(ch - b'0') as usize];
        let gx = x + i as i64 * 4 * scale;
        for (row, bits) in glyph.iter().enumerate() {
            for col in 0..3 {
                if bits >> (2 - col) & 1 == 1 {
                    for dy in 0..scale {
                        for dx in 0..scale {
                            put(canvas, gx + col * scale + dx, y + row as i64 * scale + dy, color);
                        }
                    }
                }
            }
        }
    }
}

/// Outlines every bank box (rank 1 = best) and labels it with its rank.
pub fn render_overlay(img: &GrayImage, bank: &RoiBank) -> RgbImage {
    let mut canvas = to_rgb(img);
    let short = img.width().min(img.height()) as i64;
    let thickness = (short / 256).max(1);
    let scale = (short / 128).max(1);
    for (rank, sb) in bank.boxes.iter().enumerate() {
        let Some(r) = sb.bbox.rasterize(img.width(), img.height()) else {
            continue;
        };
        let color = Rgb(PALETTE[rank.min(PALETTE.len() - 1)]);
        let (x0, y0, x1, y1) = (r.x0 as i64, r.y0 as i64, r.x1() as i64, r.y1() as i64);
        draw_rect(&mut canvas, x0, y0, x1, y1, thickness, color);
        draw_number(&mut canvas, x0 + thickness + scale, y0 + thickness + scale, rank + 1, scale, color);
    }
    canvas
}

#[cfg(test)]
mod tests {
    use super::*;
    use roiaug_core::geometry::BBox;
    use roiaug_core::ScoredBox;

    fn colored(c: &RgbImage) -> usize {
        c.pixels().filter(|p| !(p[0] == p[1] && p[1] == p[2])).count()
    }

    #[test]
    fn outline_pixel_count() {
        let mut c = RgbImage::new(20, 20);
        draw_rect(&mut c, 2, 3, 12, 9, 1, Rgb([255, 0, 0]));
        // perimeter of a 10x6 rectangle
        assert_eq!(colored(&c), 2 * 10 + 2 * 6 - 4);
    }

    #[test]
    fn digits_render() {
        let mut c = RgbImage::new(20, 10);
        draw_number(&mut c, 0, 0, 8, 1, Rgb([0, 255, 0]));
        assert_eq!(colored(&c), 13);
        let mut c = RgbImage::new(20, 10);
        draw_number(&mut c, 0, 0, 10, 1, Rgb([0, 255, 0]));
        assert_eq!(colored(&c), 8 + 12);
    }

    #[test]
    fn one_outline_color_per_box() {
        let img = GrayImage::filled(256, 256, 0.5);
        let boxes: Vec<ScoredBox> = (0..5)
            .map(|i| ScoredBox::new(BBox::new(30.0 + 45.0 * i as f64, 128.0, 40.0, 40.0), 1.0 - 0.1 * i as f64))
            .collect();
        let bank = RoiBank {
            image_id: "x".into(),
            source_w: 256,
            source_h: 256,
            boxes,
            maskless: false,
            k: 5,
            config_hash: String::new(),
        };
        let out = render_overlay(&img, &bank);
        for color in PALETTE {
            assert!(out.pixels().any(|p| p.0 == color));
        }
        assert_eq!(out, render_overlay(&img, &bank));
    }
}

//! Summed-area tables and border reflection shared by the filters.

use crate::raster::PixelRect;

/// Summed-area table with a zero first row/column, so the sum over
/// `[x0, x1) x [y0, y1)` needs four lookups.
#[derive(Debug, Clone)]
pub struct IntegralImage {
    stride: usize,
    table: Vec<f64>,
}

impl IntegralImage {
    pub fn new(width: usize, height: usize, values: &[f64]) -> Self {
        Self::from_iter(width, height, values.iter().copied())
    }

    pub fn from_bools(width: usize, height: usize, bits: &[bool]) -> Self {
        Self::from_iter(width, height, bits.iter().map(|&b| if b { 1.0 } else { 0.0 }))
    }

    pub fn from_squares(width: usize, height: usize, values: &[f64]) -> Self {
        Self::from_iter(width, height, values.iter().map(|v| v * v))
    }

    fn from_iter(width: usize, height: usize, values: impl Iterator<Item = f64>) -> Self {
        let stride = width + 1;
        let mut table = vec![0.0; stride * (height + 1)];
        let mut it = values;
        for y in 0..height {
            let mut row_sum = 0.0;
            let (prev, cur) = table.split_at_mut((y + 1) * stride);
            let prev = &prev[y * stride..];
            let cur = &mut cur[..stride];
            for x in 0..width {
                row_sum += it.next().expect("value count matches dimensions");
                cur[x + 1] = prev[x + 1] + row_sum;
            }
        }
        Self { stride, table }
    }

    #[inline]
    pub fn sum(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> f64 {
        let s = self.stride;
        self.table[y1 * s + x1] - self.table[y0 * s + x1] - self.table[y1 * s + x0]
            + self.table[y0 * s + x0]
    }
}

/// Maps a possibly out-of-range coordinate into `0..n` by mirror reflection
/// including the edge sample (`... b a | a b c ... c b a | a b ...`).
#[inline]
pub fn reflect_index(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

/// Copies `data` into a `(w + 2 pad) x (h + 2 pad)` buffer with reflected borders.
pub fn reflect_pad(data: &[f64], width: usize, height: usize, pad: usize) -> Vec<f64> {
    reflect_pad_region(data, width, height, PixelRect::new(0, 0, width, height), pad, 0.0)
}

/// Like [`reflect_pad`] for the sub-rectangle `rect`: neighbors come from
/// the image itself and reflection applies only past the image border.
/// `shift` is subtracted from every sample.
pub fn reflect_pad_region(
    data: &[f64],
    width: usize,
    height: usize,
    rect: PixelRect,
    pad: usize,
    shift: f64,
) -> Vec<f64> {
    let pw = rect.w + 2 * pad;
    let ph = rect.h + 2 * pad;
    let xmap: Vec<usize> = (0..pw)
        .map(|px| reflect_index((rect.x0 + px) as isize - pad as isize, width))
        .collect();
    let mut out = Vec::with_capacity(pw * ph);
    for py in 0..ph {
        let sy = reflect_index((rect.y0 + py) as isize - pad as isize, height);
        let row = &data[sy * width..(sy + 1) * width];
        out.extend(xmap.iter().map(|&sx| row[sx] - shift));
    }
    out
}

/// Sums over every `win x win` window of a `width x height` buffer, as a
/// `(width - win + 1) x (height - win + 1)` buffer. Running column sums keep
/// the cost at a few operations per pixel.
pub fn box_sums(data: &[f64], width: usize, height: usize, win: usize) -> Vec<f64> {
    assert!(win >= 1 && win <= width && win <= height, "window must fit the buffer");
    let (ow, oh) = (width - win + 1, height - win + 1);
    let mut cols = vec![0.0; width];
    for row in data.chunks_exact(width).take(win) {
        for (c, &v) in cols.iter_mut().zip(row) {
            *c += v;
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        let dst = &mut out[y * ow..(y + 1) * ow];
        let mut s: f64 = cols[..win].iter().sum();
        dst[0] = s;
        for x in 1..ow {
            s += cols[x + win - 1] - cols[x - 1];
            dst[x] = s;
        }
        if y + 1 < oh {
            let old = &data[y * width..(y + 1) * width];
            let new = &data[(y + win) * width..(y + win + 1) * width];
            for ((c, &a), &b) in cols.iter_mut().zip(new).zip(old) {
                *c += a - b;
            }
        }
    }
    out
}

//! PNG figures: heatmap overlays, image strips and montages, accuracy
//! curves and scatter plots.

use image::{Rgb, RgbImage};
use ndarray::Array2;

use crate::image::ImageTensor;
use crate::interpret::ActivationMap;

const VIRIDIS: [[f32; 3]; 9] = [
    [68.0, 1.0, 84.0],
    [71.0, 44.0, 122.0],
    [59.0, 81.0, 139.0],
    [44.0, 113.0, 142.0],
    [33.0, 144.0, 141.0],
    [39.0, 173.0, 129.0],
    [92.0, 200.0, 99.0],
    [170.0, 220.0, 50.0],
    [253.0, 231.0, 37.0],
];

/// Viridis color for `t` in `[0, 1]` (clamped), as 0–255 floats.
pub fn viridis(t: f32) -> [f32; 3] {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let pos = t * (VIRIDIS.len() - 1) as f32;
    let i = (pos.floor() as usize).min(VIRIDIS.len() - 2);
    let f = pos - i as f32;
    let (a, b) = (VIRIDIS[i], VIRIDIS[i + 1]);
    [a[0] + (b[0] - a[0]) * f, a[1] + (b[1] - a[1]) * f, a[2] + (b[2] - a[2]) * f]
}

/// Ten well-separated categorical colors.
pub const PALETTE: [[u8; 3]; 10] = [
    [31, 119, 180],
    [255, 127, 14],
    [44, 160, 44],
    [214, 39, 40],
    [148, 103, 189],
    [140, 86, 75],
    [227, 119, 194],
    [127, 127, 127],
    [188, 189, 34],
    [23, 190, 207],
];

pub fn palette(i: usize) -> Rgb<u8> {
    Rgb(PALETTE[i % PALETTE.len()])
}

/// Min-max scales a map into `[0, 1]`; a constant map becomes all zeros.
pub fn min_max(map: &Array2<f32>) -> Array2<f32> {
    let lo = map.iter().copied().fold(f32::INFINITY, f32::min);
    let hi = map.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    if !(hi > lo) {
        return Array2::zeros(map.dim());
    }
    map.mapv(|v| (v - lo) / (hi - lo))
}

pub const OVERLAY_OPACITY: f32 = 0.5;
const MARGIN: u32 = 9;

/// Blends the min-max-scaled, upsampled map over `image` at fixed opacity
/// and prints `caption` in a margin below. `scale` enlarges the result
/// (nearest neighbour) so that small inputs stay legible.
pub fn render_overlay(image: &ImageTensor, map: &ActivationMap, caption: &str, scale: u32) -> RgbImage {
    let (h, w) = (image.height(), image.width());
    let heat = min_max(&map.upsampled(h, w));
    let scale = scale.max(1);
    let (ow, oh) = (w as u32 * scale, h as u32 * scale);
    let mut out = RgbImage::from_pixel(ow, oh + MARGIN * scale.min(2), Rgb([255, 255, 255]));
    for y in 0..h {
        for x in 0..w {
            let c = viridis(heat[[y, x]]);
            let px = Rgb(std::array::from_fn(|ch| {
                let base = image.get(y, x, ch) * 255.0;
                (base * (1.0 - OVERLAY_OPACITY) + c[ch] * OVERLAY_OPACITY).round().clamp(0.0, 255.0) as u8
            }));
            for dy in 0..scale {
                for dx in 0..scale {
                    out.put_pixel(x as u32 * scale + dx, y as u32 * scale + dy, px);
                }
            }
        }
    }
    draw_text(&mut out, 1, oh + 2, caption, Rgb([0, 0, 0]), scale.min(2));
    out
}

/// Enlarges an image by an integer factor.
pub fn upscale(img: &RgbImage, scale: u32) -> RgbImage {
    let scale = scale.max(1);
    RgbImage::from_fn(img.width() * scale, img.height() * scale, |x, y| *img.get_pixel(x / scale, y / scale))
}

/// Tiles images row-major into `cols` columns with `pad` pixels of white
/// between them. Tiles may differ in size; cells take the largest.
pub fn montage(tiles: &[RgbImage], cols: usize, pad: u32) -> RgbImage {
    let cols = cols.max(1);
    let rows = tiles.len().div_ceil(cols).max(1);
    let cw = tiles.iter().map(|t| t.width()).max().unwrap_or(1);
    let ch = tiles.iter().map(|t| t.height()).max().unwrap_or(1);
    let width = cols as u32 * cw + (cols as u32 + 1) * pad;
    let height = rows as u32 * ch + (rows as u32 + 1) * pad;
    let mut out = RgbImage::from_pixel(width, height, Rgb([255, 255, 255]));
    for (i, t) in tiles.iter().enumerate() {
        let x0 = pad + (i % cols) as u32 * (cw + pad);
        let y0 = pad + (i / cols) as u32 * (ch + pad);
        image::imageops::replace(&mut out, t, x0 as i64, y0 as i64);
    }
    out
}

/// One row of images, each captioned (e.g. the alpha used).
pub fn strip(images: &[ImageTensor], captions: &[String], scale: u32) -> RgbImage {
    let tiles: Vec<RgbImage> = images
        .iter()
        .zip(captions)
        .map(|(img, cap)| {
            let big = upscale(&img.to_rgb8(), scale);
            let mut tile = RgbImage::from_pixel(big.width(), big.height() + 2 * MARGIN, Rgb([255, 255, 255]));
            image::imageops::replace(&mut tile, &big, 0, 0);
            draw_text(&mut tile, 1, big.height() + 2, cap, Rgb([0, 0, 0]), 2);
            tile
        })
        .collect();
    montage(&tiles, tiles.len(), 4)
}

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub values: Vec<f64>,
}

const PLOT_W: u32 = 480;
const PLOT_H: u32 = 300;
const PLOT_LEFT: u32 = 40;
const PLOT_BOTTOM: u32 = 24;

/// Line chart of series over their index, y axis fixed to `[0, 1]`.
pub fn line_chart(series: &[Series], title: &str) -> RgbImage {
    let mut img = RgbImage::from_pixel(PLOT_W, PLOT_H, Rgb([255, 255, 255]));
    let (x0, y0) = (PLOT_LEFT, PLOT_H - PLOT_BOTTOM);
    let (pw, ph) = (PLOT_W - PLOT_LEFT - 10, PLOT_H - PLOT_BOTTOM - 20);
    axes(&mut img, x0, y0, pw, ph);
    draw_text(&mut img, PLOT_LEFT, 4, title, Rgb([0, 0, 0]), 2);
    for (si, s) in series.iter().enumerate() {
        let color = palette(si);
        let n = s.values.len();
        let px = |i: usize| x0 as f64 + if n > 1 { i as f64 / (n - 1) as f64 } else { 0.5 } * pw as f64;
        let py = |v: f64| y0 as f64 - v.clamp(0.0, 1.0) * ph as f64;
        for i in 1..n {
            draw_line(&mut img, (px(i - 1), py(s.values[i - 1])), (px(i), py(s.values[i])), color);
        }
        if n == 1 {
            draw_marker(&mut img, px(0), py(s.values[0]), color, false);
        }
        let ly = 24 + 10 * si as u32;
        draw_rect(&mut img, PLOT_W - 110, ly, 6, 6, color);
        draw_text(&mut img, PLOT_W - 100, ly, &s.label, Rgb([0, 0, 0]), 1);
    }
    img
}

/// Scatter of 2-D points colored by class; `crossed` points get an x glyph.
pub fn scatter(points: &Array2<f64>, classes: &[usize], crossed: &[bool], title: &str) -> RgbImage {
    let mut img = RgbImage::from_pixel(PLOT_W, PLOT_H, Rgb([255, 255, 255]));
    draw_text(&mut img, 8, 4, title, Rgb([0, 0, 0]), 2);
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for row in points.rows() {
        for d in 0..2 {
            lo[d] = lo[d].min(row[d]);
            hi[d] = hi[d].max(row[d]);
        }
    }
    let (w, h) = ((PLOT_W - 30) as f64, (PLOT_H - 40) as f64);
    for i in 0..points.nrows() {
        let nx = if hi[0] > lo[0] { (points[[i, 0]] - lo[0]) / (hi[0] - lo[0]) } else { 0.5 };
        let ny = if hi[1] > lo[1] { (points[[i, 1]] - lo[1]) / (hi[1] - lo[1]) } else { 0.5 };
        draw_marker(&mut img, 15.0 + nx * w, 25.0 + (1.0 - ny) * h, palette(classes[i]), crossed[i]);
    }
    img
}

fn axes(img: &mut RgbImage, x0: u32, y0: u32, pw: u32, ph: u32) {
    let grey = Rgb([160, 160, 160]);
    draw_line(img, (x0 as f64, y0 as f64), ((x0 + pw) as f64, y0 as f64), Rgb([0, 0, 0]));
    draw_line(img, (x0 as f64, y0 as f64), (x0 as f64, (y0 - ph) as f64), Rgb([0, 0, 0]));
    for k in 0..=4 {
        let y = y0 as f64 - ph as f64 * k as f64 / 4.0;
        draw_line(img, (x0 as f64 + 1.0, y), ((x0 + pw) as f64, y), if k == 0 { Rgb([0, 0, 0]) } else { grey });
        draw_text(img, 4, (y as u32).saturating_sub(3), &format!("{:.2}", k as f64 / 4.0), Rgb([0, 0, 0]), 1);
    }
}

fn put(img: &mut RgbImage, x: i64, y: i64, c: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, c);
    }
}

fn draw_line(img: &mut RgbImage, a: (f64, f64), b: (f64, f64), c: Rgb<u8>) {
    let steps = ((b.0 - a.0).abs().max((b.1 - a.1).abs()).ceil() as usize).max(1);
    for s in 0..=steps {
        let t = s as f64 / steps as f64;
        put(img, (a.0 + (b.0 - a.0) * t).round() as i64, (a.1 + (b.1 - a.1) * t).round() as i64, c);
    }
}

fn draw_rect(img: &mut RgbImage, x: u32, y: u32, w: u32, h: u32, c: Rgb<u8>) {
    for dy in 0..h {
        for dx in 0..w {
            put(img, (x + dx) as i64, (y + dy) as i64, c);
        }
    }
}

fn draw_marker(img: &mut RgbImage, x: f64, y: f64, c: Rgb<u8>, crossed: bool) {
    let (x, y) = (x.round() as i64, y.round() as i64);
    for d in -2i64..=2 {
        if crossed {
            put(img, x + d, y + d, c);
            put(img, x + d, y - d, c);
        } else {
            for e in -2i64..=2 {
                put(img, x + d, y + e, c);
            }
        }
    }
}

/// 3×5 glyphs, one row per 3 bits, top row in the high bits.
fn glyph(ch: char) -> u16 {
    match ch.to_ascii_uppercase() {
        '0' => 0b111_101_101_101_111,
        '1' => 0b010_110_010_010_111,
        '2' => 0b111_001_111_100_111,
        '3' => 0b111_001_111_001_111,
        '4' => 0b101_101_111_001_001,
        '5' => 0b111_100_111_001_111,
        '6' => 0b111_100_111_101_111,
        '7' => 0b111_001_010_010_010,
        '8' => 0b111_101_111_101_111,
        '9' => 0b111_101_111_001_111,
        'A' => 0b010_101_111_101_101,
        'B' => 0b110_101_110_101_110,
        'C' => 0b011_100_100_100_011,
        'D' => 0b110_101_101_101_110,
        'E' => 0b111_100_110_100_111,
        'F' => 0b111_100_110_100_100,
        'G' => 0b011_100_101_101_011,
        'H' => 0b101_101_111_101_101,
        'I' => 0b111_010_010_010_111,
        'J' => 0b001_001_001_101_010,
        'K' => 0b101_101_110_101_101,
        'L' => 0b100_100_100_100_111,
        'M' => 0b101_111_111_101_101,
        'N' => 0b110_101_101_101_101,
        'O' => 0b010_101_101_101_010,
        'P' => 0b110_101_110_100_100,
        'Q' => 0b010_101_101_110_011,
        'R' => 0b110_101_110_101_101,
        'S' => 0b011_100_010_001_110,
        'T' => 0b111_010_010_010_010,
        'U' => 0b101_101_101_101_111,
        'V' => 0b101_101_101_101_010,
        'W' => 0b101_101_111_111_101,
        'X' => 0b101_101_010_101_101,
        'Y' => 0b101_101_010_010_010,
        'Z' => 0b111_001_010_100_111,
        '.' => 0b000_000_000_000_010,
        ',' => 0b000_000_000_010_100,
        ':' => 0b000_010_000_010_000,
        '-' => 0b000_000_111_000_000,
        '_' => 0b000_000_000_000_111,
        '=' => 0b000_111_000_111_000,
        '/' => 0b001_001_010_100_100,
        '(' => 0b010_100_100_100_010,
        ')' => 0b010_001_001_001_010,
        '%' => 0b101_001_010_100_101,
        '+' => 0b000_010_111_010_000,
        _ => 0,
    }
}

/// Draws `text` with the built-in 3×5 font, each font pixel `size`×`size`.
pub fn draw_text(img: &mut RgbImage, x: u32, y: u32, text: &str, c: Rgb<u8>, size: u32) {
    let size = size.max(1);
    for (i, ch) in text.chars().enumerate() {
        let bits = glyph(ch);
        let gx = x + i as u32 * 4 * size;
        for row in 0..5u32 {
            for col in 0..3u32 {
                if bits >> (14 - (row * 3 + col)) & 1 == 1 {
                    draw_rect(img, gx + col * size, y + row * size, size, size, c);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::style::Alpha;

    fn map(data: Array2<f32>) -> ActivationMap {
        ActivationMap { data, class_id: 0, alpha: Alpha::ONE, style_id: "none".into(), score: 0.5 }
    }

    #[test]
    fn viridis_endpoints() {
        assert_eq!(viridis(0.0), VIRIDIS[0]);
        assert_eq!(viridis(1.0), VIRIDIS[8]);
        assert_eq!(viridis(0.5), VIRIDIS[4]);
        assert_eq!(viridis(f32::NAN), VIRIDIS[0]);
    }

    #[test]
    fn zero_map_blends_zero_color() {
        let img = ImageTensor::filled(32, 32, [0.2, 0.4, 0.6]).unwrap();
        let out = render_overlay(&img, &map(Array2::zeros((4, 4))), "", 1);
        let z = VIRIDIS[0];
        let expect: [u8; 3] = std::array::from_fn(|c| {
            ([0.2f32, 0.4, 0.6][c] * 255.0 * 0.5 + z[c] * 0.5).round() as u8
        });
        for y in 0..32 {
            for x in 0..32 {
                assert_eq!(out.get_pixel(x, y).0, expect);
            }
        }
    }

    #[test]
    fn single_hot_map_peaks_at_its_location() {
        let img = ImageTensor::filled(32, 32, [0.0, 0.0, 0.0]).unwrap();
        let mut m = Array2::zeros((4, 4));
        m[[1, 2]] = 1.0;
        let out = render_overlay(&img, &map(m.clone()), "", 1);
        let stored = m.clone();
        // brightest green channel marks the hottest color
        let (mut best, mut at) = (0u8, (0, 0));
        for y in 0..32 {
            for x in 0..32 {
                let g = out.get_pixel(x, y).0[1];
                if g > best {
                    best = g;
                    at = (x, y);
                }
            }
        }
        // cell (1, 2) of a 4×4 map covers rows 8..16 and columns 16..24
        assert!((8..16).contains(&at.1) && (16..24).contains(&at.0), "{at:?}");
        assert_eq!(m, stored);
    }

    #[test]
    fn montage_size() {
        let tile = RgbImage::new(10, 8);
        let m = montage(&vec![tile; 5], 2, 2);
        assert_eq!((m.width(), m.height()), (2 * 10 + 3 * 2, 3 * 8 + 4 * 2));
    }

    #[test]
    fn chart_and_scatter_render() {
        let s = vec![Series { label: "sa".into(), values: vec![0.9, 0.5, 0.2] }];
        assert_eq!(line_chart(&s, "acc").dimensions(), (PLOT_W, PLOT_H));
        let pts = Array2::from_shape_fn((4, 2), |(i, d)| (i * (d + 1)) as f64);
        let img = scatter(&pts, &[0, 1, 2, 3], &[false, true, false, true], "tsne");
        assert_eq!(img.dimensions(), (PLOT_W, PLOT_H));
    }
}

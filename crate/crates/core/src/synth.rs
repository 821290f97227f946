//! Procedural stand-ins for a labeled image folder and a style corpus, so
//! the full pipeline can run without downloading data.
//!
//! The dataset has ten shape classes drawn at random position, scale,
//! rotation and colors over a noisy gradient background. Style images are
//! colored textures (stripes, checkers, plaid, dots, blobs).

use std::f32::consts::PI;
use std::fs;
use std::path::Path;

use ndarray::Array3;
use rand::Rng;

use crate::error::{io_err, Result};
use crate::image::ImageTensor;
use crate::seed;

pub const SHAPE_CLASSES: [&str; 10] =
    ["bars", "circle", "cross", "diamond", "dots", "ell", "frame", "ring", "square", "triangle"];

fn inside(class: usize, u: f32, v: f32) -> bool {
    let (au, av) = (u.abs(), v.abs());
    match SHAPE_CLASSES[class] {
        "bars" => au <= 0.9 && av <= 1.0 && (((v + 1.0) / 0.4).floor() as i32) % 2 == 0,
        "circle" => u * u + v * v <= 0.85,
        "cross" => (au <= 0.28 && av <= 1.0) || (av <= 0.28 && au <= 1.0),
        "diamond" => au + av <= 1.05,
        "dots" => {
            let d = |cx: f32, cy: f32| (u - cx).powi(2) + (v - cy).powi(2) <= 0.13;
            d(0.5, 0.5) || d(-0.5, 0.5) || d(0.5, -0.5) || d(-0.5, -0.5)
        }
        "ell" => ((-0.85..=-0.35).contains(&u) && av <= 0.85) || ((0.35..=0.85).contains(&v) && au <= 0.85),
        "frame" => au.max(av) <= 0.85 && au.max(av) >= 0.55,
        "ring" => {
            let r2 = u * u + v * v;
            (0.36..=1.0).contains(&r2)
        }
        "square" => au.max(av) <= 0.75,
        "triangle" => v <= 0.7 && v >= -0.8 + 1.73 * au - 0.2,
        _ => unreachable!(),
    }
}

fn luminance(c: [f32; 3]) -> f32 {
    0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2]
}

fn random_color(rng: &mut impl Rng) -> [f32; 3] {
    [rng.random(), rng.random(), rng.random()]
}

/// Renders one sample of `class` at `side`×`side`.
pub fn shape_image(class: usize, side: usize, seed: u64) -> ImageTensor {
    let mut rng = seed::rng(seed);
    let bg0 = random_color(&mut rng);
    let bg1: [f32; 3] = std::array::from_fn(|c| (bg0[c] + rng.random_range(-0.2..0.2)).clamp(0.0, 1.0));
    // one side of the mean background luminance always leaves room for this gap
    let bg_lum = 0.5 * (luminance(bg0) + luminance(bg1));
    let mut fg = random_color(&mut rng);
    while (luminance(fg) - bg_lum).abs() < 0.35 {
        fg = random_color(&mut rng);
    }
    let grad_angle: f32 = rng.random_range(0.0..2.0 * PI);
    let radius = rng.random_range(0.26..0.4) * side as f32;
    let margin = radius * 1.05;
    let cx = rng.random_range(margin..side as f32 - margin);
    let cy = rng.random_range(margin..side as f32 - margin);
    let theta: f32 = rng.random_range(-PI..PI);
    let (s, c) = theta.sin_cos();
    let noise_amp = 0.04;
    let mut data = Array3::zeros((3, side, side));
    for y in 0..side {
        for x in 0..side {
            // 2x2 supersampling for soft edges
            let mut cover = 0.0;
            for (oy, ox) in [(0.25, 0.25), (0.25, 0.75), (0.75, 0.25), (0.75, 0.75)] {
                let dx = (x as f32 + ox - cx) / radius;
                let dy = (y as f32 + oy - cy) / radius;
                let u = c * dx + s * dy;
                let v = -s * dx + c * dy;
                if inside(class, u, v) {
                    cover += 0.25;
                }
            }
            let t = ((x as f32 / side as f32 - 0.5) * grad_angle.cos() + (y as f32 / side as f32 - 0.5) * grad_angle.sin())
                .clamp(-0.5, 0.5)
                + 0.5;
            for ch in 0..3 {
                let bg = bg0[ch] * (1.0 - t) + bg1[ch] * t;
                let n: f32 = rng.random_range(-noise_amp..noise_amp);
                data[[ch, y, x]] = (bg * (1.0 - cover) + fg[ch] * cover + n).clamp(0.0, 1.0);
            }
        }
    }
    ImageTensor::new(data).expect("valid synthetic image")
}

/// Renders one texture image.
pub fn style_image(side: usize, seed: u64) -> ImageTensor {
    let mut rng = seed::rng(seed);
    let palette: Vec<[f32; 3]> = (0..3).map(|_| random_color(&mut rng)).collect();
    let kind = rng.random_range(0..5u32);
    let freq = rng.random_range(2.0..9.0f32);
    let angle: f32 = rng.random_range(0.0..PI);
    let (sa, ca) = angle.sin_cos();
    let blobs: Vec<(f32, f32, f32)> = (0..12)
        .map(|_| (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), rng.random_range(0.05..0.2)))
        .collect();
    let data = Array3::from_shape_fn((3, side, side), |(ch, y, x)| {
        let u = x as f32 / side as f32;
        let v = y as f32 / side as f32;
        let r = u * ca + v * sa;
        let q = -u * sa + v * ca;
        let t = match kind {
            0 => 0.5 + 0.5 * (2.0 * PI * freq * r).sin(),
            1 => ((((freq * r).floor() + (freq * q).floor()) as i32).rem_euclid(2)) as f32,
            2 => 0.5 + 0.25 * ((2.0 * PI * freq * r).sin() + (2.0 * PI * freq * 0.7 * q).sin()),
            3 => {
                let fu = (freq * u).fract() - 0.5;
                let fv = (freq * v).fract() - 0.5;
                if fu * fu + fv * fv < 0.09 { 1.0 } else { 0.0 }
            }
            _ => blobs
                .iter()
                .map(|&(bx, by, br)| (-((u - bx).powi(2) + (v - by).powi(2)) / (br * br)).exp())
                .sum::<f32>()
                .min(1.0),
        };
        let accent = 0.5 + 0.5 * (2.0 * PI * (u + v) * 1.3).sin();
        let base = palette[0][ch] * (1.0 - t) + palette[1][ch] * t;
        (base * 0.8 + palette[2][ch] * 0.2 * accent).clamp(0.0, 1.0)
    });
    ImageTensor::new(data).expect("valid texture")
}

/// Writes `<out>/{train,test}/<class>/<index>.png`.
pub fn write_shape_dataset(out: &Path, train: usize, test: usize, side: usize, seed: u64) -> Result<()> {
    let classes = SHAPE_CLASSES.len();
    for (split, count, stream) in [("train", train, 1u64), ("test", test, 2u64)] {
        let per_class = count.div_ceil(classes);
        for (ci, name) in SHAPE_CLASSES.iter().enumerate() {
            let dir = out.join(split).join(name);
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
            for i in 0..per_class {
                let s = seed::derive(seed::derive(seed, stream), (ci * 1_000_000 + i) as u64);
                shape_image(ci, side, s).save(&dir.join(format!("{i:05}.png")))?;
            }
        }
    }
    Ok(())
}

/// Writes `<out>/style_<index>.png`.
pub fn write_style_corpus(out: &Path, count: usize, side: usize, seed: u64) -> Result<()> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    for i in 0..count {
        style_image(side, seed::derive(seed, i as u64)).save(&out.join(format!("style_{i:04}.png")))?;
    }
    Ok(())
}

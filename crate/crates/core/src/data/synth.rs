//! Synthetic images whose factors sit at different levels of abstraction: a glyph
//! (shape), its stroke thickness, its colour, and the background brightness.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::data::dataset::Dataset;
use crate::error::{Error, Result};

pub const FACTOR_NAMES: [&str; 4] = ["shape", "thickness", "hue", "background"];
pub const NUM_GLYPHS: usize = 4;
pub const MAX_THICKNESS: usize = 3;

/// Cardinalities and geometry of the synthetic dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FactorSpec {
    /// Cross, square outline, diagonal bar, disc (in that order).
    pub shapes: usize,
    pub thicknesses: usize,
    pub hues: usize,
    pub backgrounds: usize,
    pub height: usize,
    pub width: usize,
    /// Maximum absolute glyph offset in pixels along each axis.
    pub jitter: usize,
}

impl Default for FactorSpec {
    fn default() -> Self {
        FactorSpec {
            shapes: 4,
            thicknesses: 2,
            hues: 4,
            backgrounds: 2,
            height: 16,
            width: 16,
            jitter: 1,
        }
    }
}

impl FactorSpec {
    pub const CHANNELS: usize = 3;

    /// Four glyphs in four hues on a fixed background with a fixed stroke.
    pub fn shapes_and_hues() -> Self {
        FactorSpec {
            thicknesses: 1,
            backgrounds: 1,
            ..Self::default()
        }
    }

    pub fn cardinalities(&self) -> [usize; 4] {
        [self.shapes, self.thicknesses, self.hues, self.backgrounds]
    }

    pub fn x_dim(&self) -> usize {
        self.height * self.width * Self::CHANNELS
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(1..=NUM_GLYPHS).contains(&self.shapes) {
            return bad(format!("shapes must be in 1..={NUM_GLYPHS}, got {}", self.shapes));
        }
        if !(1..=MAX_THICKNESS).contains(&self.thicknesses) {
            return bad(format!("thicknesses must be in 1..={MAX_THICKNESS}, got {}", self.thicknesses));
        }
        if self.hues == 0 || self.backgrounds == 0 {
            return bad("hues and backgrounds must be at least 1".into());
        }
        if self.height < 8 || self.width < 8 {
            return bad(format!("images must be at least 8x8, got {}x{}", self.height, self.width));
        }
        if 2 * self.jitter + 8 > self.height.min(self.width) {
            return bad(format!("jitter {} too large for {}x{}", self.jitter, self.height, self.width));
        }
        Ok(())
    }

    fn label_channels(&self) -> Vec<(String, usize)> {
        FACTOR_NAMES
            .iter()
            .zip(self.cardinalities())
            .map(|(n, k)| (n.to_string(), k))
            .collect()
    }
}

/// Foreground mask (`H × W`, row-major) of a glyph at the given offset.
pub fn glyph_mask(spec: &FactorSpec, shape: usize, thickness: usize, offset: (i32, i32)) -> Vec<bool> {
    let (h, w) = (spec.height, spec.width);
    let cy = (h as f64 - 1.0) / 2.0 + offset.0 as f64;
    let cx = (w as f64 - 1.0) / 2.0 + offset.1 as f64;
    let r = 0.3 * h.min(w) as f64;
    let half = 0.5 + thickness as f64;
    let mut mask = vec![false; h * w];
    for row in 0..h {
        for col in 0..w {
            let dy = row as f64 - cy;
            let dx = col as f64 - cx;
            let box_dist = dx.abs().max(dy.abs());
            mask[row * w + col] = match shape {
                0 => (dx.abs() <= half || dy.abs() <= half) && box_dist <= r,
                1 => box_dist <= r && box_dist > r - 2.0 * half,
                2 => (dx - dy).abs() / std::f64::consts::SQRT_2 <= half && box_dist <= r,
                _ => (dx * dx + dy * dy).sqrt() <= 0.55 * r + half,
            };
        }
    }
    mask
}

/// RGB colour of hue index `i` of `n`, evenly spaced around the colour wheel.
pub fn hue_rgb(i: usize, n: usize) -> [f64; 3] {
    let h = 6.0 * i as f64 / n as f64;
    let x = 1.0 - (h % 2.0 - 1.0).abs();
    match h as usize {
        0 => [1.0, x, 0.0],
        1 => [x, 1.0, 0.0],
        2 => [0.0, 1.0, x],
        3 => [0.0, x, 1.0],
        4 => [x, 0.0, 1.0],
        _ => [1.0, 0.0, x],
    }
}

pub fn background_level(i: usize, n: usize) -> f64 {
    if n <= 1 {
        0.0
    } else {
        0.35 * i as f64 / (n - 1) as f64
    }
}

/// Renders one image (`H × W × 3`, values in `[0, 1]`) for a factor tuple
/// `[shape, thickness, hue, background]`.
pub fn render(spec: &FactorSpec, factors: [usize; 4], offset: (i32, i32)) -> Vec<f64> {
    let [shape, thickness, hue, background] = factors;
    let mask = glyph_mask(spec, shape, thickness, offset);
    let colour = hue_rgb(hue, spec.hues);
    let bg = background_level(background, spec.backgrounds);
    let mut out = Vec::with_capacity(mask.len() * 3);
    for &m in &mask {
        for c in colour {
            out.push(if m { c } else { bg });
        }
    }
    out
}

fn quantise(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// `n` images with independent, uniformly drawn factors; labels follow
/// [`FACTOR_NAMES`].
pub fn synth_generate(spec: &FactorSpec, n: usize, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::invalid("dataset size must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cards = spec.cardinalities();
    let j = spec.jitter as i32;
    let mut pixels = Vec::with_capacity(n * spec.x_dim());
    let mut labels = Vec::with_capacity(n * 4);
    for _ in 0..n {
        let factors = cards.map(|k| rng.random_range(0..k));
        let offset = (rng.random_range(-j..=j), rng.random_range(-j..=j));
        pixels.extend(render(spec, factors, offset).into_iter().map(quantise));
        labels.extend(factors.iter().map(|&f| f as u16));
    }
    Dataset::new(spec.height, spec.width, FactorSpec::CHANNELS, spec.label_channels(), pixels, labels)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson's chi-square test of independence between two label sequences.
pub fn chi_square_independence(a: &[usize], b: &[usize]) -> Result<ChiSquareTest> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::invalid("label sequences must be non-empty and of equal length"));
    }
    let ka = a.iter().max().unwrap() + 1;
    let kb = b.iter().max().unwrap() + 1;
    let mut table = vec![0.0; ka * kb];
    for (&i, &j) in a.iter().zip(b) {
        table[i * kb + j] += 1.0;
    }
    let n = a.len() as f64;
    let rows: Vec<f64> = (0..ka).map(|i| table[i * kb..(i + 1) * kb].iter().sum()).collect();
    let cols: Vec<f64> = (0..kb).map(|j| (0..ka).map(|i| table[i * kb + j]).sum()).collect();
    let mut statistic = 0.0;
    for i in 0..ka {
        for j in 0..kb {
            let e = rows[i] * cols[j] / n;
            if e > 0.0 {
                statistic += (table[i * kb + j] - e).powi(2) / e;
            }
        }
    }
    let nonzero = |v: &[f64]| v.iter().filter(|&&x| x > 0.0).count();
    let dof = (nonzero(&rows).saturating_sub(1)) * (nonzero(&cols).saturating_sub(1));
    let p_value = if dof == 0 {
        1.0
    } else {
        let dist = ChiSquared::new(dof as f64).map_err(|e| Error::invalid(e.to_string()))?;
        1.0 - dist.cdf(statistic)
    };
    Ok(ChiSquareTest { statistic, dof, p_value })
}

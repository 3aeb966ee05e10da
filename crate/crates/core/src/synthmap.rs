//! Deterministic generator of map-styled synthetic scenes with exact
//! ground truth.
//!
//! Scenes emulate scanned topographic sheets: paper-toned background,
//! urban footprints stamped in near-black or red, and non-urban ink
//! (contour lines, text glyphs, roads, field hatching) that shares the
//! urban radiometry but contributes nothing to the truth mask. Because
//! distractor ink and urban ink overlap radiometrically, no luminance
//! threshold separates them, which is what makes the corpus non-trivial
//! for radiometric baselines.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, Geotransform, Raster};
use crate::seed;

const SCENE_STREAM: u64 = 0x5343454e;
const TILE_STREAM: u64 = 0x54494c45;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UrbanStyle {
    SolidBlock,
    HatchedBlock,
    ScatteredUnits,
    RedOverprint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Distractor {
    ContourLines,
    TextGlyphs,
    RoadLines,
    FieldTexture,
    HueDrift,
}

/// Base colors; every stamped pixel jitters around these.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Palette {
    pub paper: [u8; 3],
    pub ink: [u8; 3],
    pub red_ink: [u8; 3],
    pub contour_ink: [u8; 3],
}

impl Default for Palette {
    fn default() -> Self {
        Palette {
            paper: [233, 226, 206],
            ink: [45, 40, 36],
            red_ink: [198, 44, 40],
            contour_ink: [96, 64, 48],
        }
    }
}

#[derive(Debug, Clone)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    /// Target fraction of truth pixels, in [0, 0.5].
    pub urban_fraction: f64,
    pub styles: Vec<UrbanStyle>,
    pub distractors: Vec<Distractor>,
    pub palette: Palette,
}

impl SceneSpec {
    /// Moderate corpus: bulky urban shapes, light distractor load.
    pub fn easy(size: usize, seed: u64) -> Self {
        SceneSpec {
            width: size,
            height: size,
            seed,
            urban_fraction: 0.18,
            styles: vec![UrbanStyle::SolidBlock, UrbanStyle::ScatteredUnits, UrbanStyle::RedOverprint],
            distractors: vec![Distractor::ContourLines, Distractor::TextGlyphs],
            palette: Palette::default(),
        }
    }

    /// Distractor-dense corpus: every style and every confusion source.
    pub fn hard(size: usize, seed: u64) -> Self {
        SceneSpec {
            width: size,
            height: size,
            seed,
            urban_fraction: 0.16,
            styles: vec![
                UrbanStyle::SolidBlock,
                UrbanStyle::HatchedBlock,
                UrbanStyle::ScatteredUnits,
                UrbanStyle::RedOverprint,
            ],
            distractors: vec![
                Distractor::ContourLines,
                Distractor::TextGlyphs,
                Distractor::RoadLines,
                Distractor::FieldTexture,
                Distractor::HueDrift,
            ],
            palette: Palette::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 32 || self.height < 32 {
            return Err(Error::Argument("scene must be at least 32x32".into()));
        }
        if !(0.0..=0.5).contains(&self.urban_fraction) {
            return Err(Error::Argument(format!(
                "urban fraction {} outside [0, 0.5]",
                self.urban_fraction
            )));
        }
        if self.urban_fraction > 0.0 && self.styles.is_empty() {
            return Err(Error::Argument("positive urban fraction needs at least one style".into()));
        }
        Ok(())
    }
}

/// One stamped element: kind, top-left, and footprint extent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlacedElement {
    pub kind: &'static str,
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

#[derive(Debug, Clone)]
pub struct ScenePair {
    pub image: Raster,
    pub truth: BinaryMask,
    pub manifest: Vec<PlacedElement>,
}

impl ScenePair {
    pub fn manifest_text(&self) -> String {
        let mut out = String::new();
        for e in &self.manifest {
            writeln!(out, "{} {} {} {} {}", e.kind, e.x, e.y, e.w, e.h).expect("write to string");
        }
        out
    }
}

struct Canvas {
    w: usize,
    h: usize,
    img: Vec<u8>,
    truth: Vec<u8>,
}

impl Canvas {
    fn new(w: usize, h: usize) -> Self {
        Canvas { w, h, img: vec![0; w * h * 3], truth: vec![0; w * h] }
    }

    #[inline]
    fn stamp(&mut self, x: usize, y: usize, color: [u8; 3], rng: &mut ChaCha8Rng, urban: bool) {
        let i = (y * self.w + x) * 3;
        for c in 0..3 {
            let jitter = rng.random_range(-4i16..=4);
            self.img[i + c] = (i16::from(color[c]) + jitter).clamp(0, 255) as u8;
        }
        if urban {
            self.truth[y * self.w + x] = 1;
        }
    }

    fn fill_rect(&mut self, x0: usize, y0: usize, rw: usize, rh: usize, color: [u8; 3], rng: &mut ChaCha8Rng, urban: bool) {
        for y in y0..(y0 + rh).min(self.h) {
            for x in x0..(x0 + rw).min(self.w) {
                self.stamp(x, y, color, rng, urban);
            }
        }
    }

    /// Marks truth over a rect without touching the image.
    fn mark_truth_rect(&mut self, x0: usize, y0: usize, rw: usize, rh: usize) {
        for y in y0..(y0 + rh).min(self.h) {
            for x in x0..(x0 + rw).min(self.w) {
                self.truth[y * self.w + x] = 1;
            }
        }
    }

    fn segment(&mut self, x0: f64, y0: f64, x1: f64, y1: f64, thickness: usize, color: [u8; 3], rng: &mut ChaCha8Rng, urban: bool) {
        let len = ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt().max(1e-6);
        let steps = (len * 2.0).ceil() as usize + 1;
        for s in 0..=steps {
            let t = s as f64 / steps as f64;
            let cx = x0 + (x1 - x0) * t;
            let cy = y0 + (y1 - y0) * t;
            for dy in 0..thickness {
                for dx in 0..thickness {
                    let px = cx.round() as isize + dx as isize;
                    let py = cy.round() as isize + dy as isize;
                    if px >= 0 && py >= 0 && (px as usize) < self.w && (py as usize) < self.h {
                        self.stamp(px as usize, py as usize, color, rng, urban);
                    }
                }
            }
        }
    }

    fn ones(&self) -> usize {
        self.truth.iter().filter(|v| **v == 1).count()
    }
}

/// Stroke font for distractor text: segments in a unit box.
const GLYPHS: &[&[(f64, f64, f64, f64)]] = &[
    // A
    &[(0.0, 1.0, 0.5, 0.0), (0.5, 0.0, 1.0, 1.0), (0.25, 0.55, 0.75, 0.55)],
    // C
    &[(1.0, 0.0, 0.0, 0.0), (0.0, 0.0, 0.0, 1.0), (0.0, 1.0, 1.0, 1.0)],
    // E
    &[(0.0, 0.0, 0.0, 1.0), (0.0, 0.0, 1.0, 0.0), (0.0, 0.5, 0.7, 0.5), (0.0, 1.0, 1.0, 1.0)],
    // H
    &[(0.0, 0.0, 0.0, 1.0), (1.0, 0.0, 1.0, 1.0), (0.0, 0.5, 1.0, 0.5)],
    // I
    &[(0.5, 0.0, 0.5, 1.0), (0.2, 0.0, 0.8, 0.0), (0.2, 1.0, 0.8, 1.0)],
    // L
    &[(0.0, 0.0, 0.0, 1.0), (0.0, 1.0, 1.0, 1.0)],
    // N
    &[(0.0, 0.0, 0.0, 1.0), (0.0, 0.0, 1.0, 1.0), (1.0, 0.0, 1.0, 1.0)],
    // T
    &[(0.0, 0.0, 1.0, 0.0), (0.5, 0.0, 0.5, 1.0)],
    // U
    &[(0.0, 0.0, 0.0, 1.0), (0.0, 1.0, 1.0, 1.0), (1.0, 1.0, 1.0, 0.0)],
    // V
    &[(0.0, 0.0, 0.5, 1.0), (0.5, 1.0, 1.0, 0.0)],
];

fn place_urban(canvas: &mut Canvas, style: UrbanStyle, palette: &Palette, rng: &mut ChaCha8Rng, manifest: &mut Vec<PlacedElement>) {
    let min_dim = canvas.w.min(canvas.h);
    match style {
        UrbanStyle::SolidBlock | UrbanStyle::RedOverprint => {
            let bw = rng.random_range(min_dim / 12..=min_dim / 6).max(4);
            let bh = rng.random_range(min_dim / 12..=min_dim / 6).max(4);
            let x0 = rng.random_range(0..canvas.w.saturating_sub(bw).max(1));
            let y0 = rng.random_range(0..canvas.h.saturating_sub(bh).max(1));
            let (color, kind) = match style {
                UrbanStyle::RedOverprint => (palette.red_ink, "red_overprint"),
                _ => (palette.ink, "solid_block"),
            };
            canvas.fill_rect(x0, y0, bw, bh, color, rng, true);
            manifest.push(PlacedElement { kind, x: x0, y: y0, w: bw, h: bh });
        }
        UrbanStyle::HatchedBlock => {
            let bw = rng.random_range(min_dim / 10..=min_dim / 6).max(6);
            let bh = rng.random_range(min_dim / 10..=min_dim / 6).max(6);
            let x0 = rng.random_range(0..canvas.w.saturating_sub(bw).max(1));
            let y0 = rng.random_range(0..canvas.h.saturating_sub(bh).max(1));
            // Outline, then horizontal hatch every second interior row;
            // the whole block footprint is urban.
            canvas.mark_truth_rect(x0, y0, bw, bh);
            for x in x0..(x0 + bw).min(canvas.w) {
                for y in [y0, (y0 + bh - 1).min(canvas.h - 1)] {
                    canvas.stamp(x, y, palette.ink, rng, true);
                }
            }
            for y in y0..(y0 + bh).min(canvas.h) {
                for x in [x0, (x0 + bw - 1).min(canvas.w - 1)] {
                    canvas.stamp(x, y, palette.ink, rng, true);
                }
            }
            let mut y = y0 + 2;
            while y + 1 < y0 + bh && y < canvas.h {
                for x in x0..(x0 + bw).min(canvas.w) {
                    canvas.stamp(x, y, palette.ink, rng, true);
                }
                y += 2;
            }
            manifest.push(PlacedElement { kind: "hatched_block", x: x0, y: y0, w: bw, h: bh });
        }
        UrbanStyle::ScatteredUnits => {
            let radius = (min_dim / 8).max(6);
            let cx = rng.random_range(radius..canvas.w - radius);
            let cy = rng.random_range(radius..canvas.h - radius);
            let count = rng.random_range(6..=12);
            for _ in 0..count {
                let s = rng.random_range(2..=4usize);
                let dx = rng.random_range(0..2 * radius) as isize - radius as isize;
                let dy = rng.random_range(0..2 * radius) as isize - radius as isize;
                let x0 = (cx as isize + dx).clamp(0, canvas.w as isize - s as isize) as usize;
                let y0 = (cy as isize + dy).clamp(0, canvas.h as isize - s as isize) as usize;
                canvas.fill_rect(x0, y0, s, s, palette.ink, rng, true);
                manifest.push(PlacedElement { kind: "scattered_unit", x: x0, y: y0, w: s, h: s });
            }
        }
    }
}

fn place_distractor(canvas: &mut Canvas, kind: Distractor, palette: &Palette, rng: &mut ChaCha8Rng, manifest: &mut Vec<PlacedElement>) {
    let (w, h) = (canvas.w as f64, canvas.h as f64);
    match kind {
        Distractor::ContourLines => {
            // Thin smooth random walk across the sheet.
            let mut x = rng.random_range(0.0..w);
            let mut y = if rng.random_range(0..2) == 0 { 0.0 } else { h - 1.0 };
            let mut heading = rng.random_range(0.0..std::f64::consts::TAU);
            let (x0, y0) = (x, y);
            for _ in 0..rng.random_range(60..140) {
                let step = rng.random_range(2.0..4.0);
                let nx = x + heading.cos() * step;
                let ny = y + heading.sin() * step;
                canvas.segment(x, y, nx, ny, 1, palette.contour_ink, rng, false);
                x = nx;
                y = ny;
                heading += rng.random_range(-0.35..0.35);
                if x < 0.0 || y < 0.0 || x >= w || y >= h {
                    break;
                }
            }
            manifest.push(PlacedElement {
                kind: "contour_line",
                x: x0.min(x).max(0.0) as usize,
                y: y0.min(y).max(0.0) as usize,
                w: (x0 - x).abs() as usize + 1,
                h: (y0 - y).abs() as usize + 1,
            });
        }
        Distractor::TextGlyphs => {
            let size = rng.random_range(6.0..12.0);
            let letters = rng.random_range(3..=6usize);
            let x0 = rng.random_range(0.0..(w - size * 1.2 * letters as f64).max(1.0));
            let y0 = rng.random_range(0.0..(h - size).max(1.0));
            for li in 0..letters {
                let glyph = GLYPHS[rng.random_range(0..GLYPHS.len())];
                let gx = x0 + li as f64 * size * 1.2;
                for (sx, sy, ex, ey) in glyph {
                    canvas.segment(
                        gx + sx * size,
                        y0 + sy * size,
                        gx + ex * size,
                        y0 + ey * size,
                        1,
                        palette.ink,
                        rng,
                        false,
                    );
                }
            }
            manifest.push(PlacedElement {
                kind: "text_glyphs",
                x: x0 as usize,
                y: y0 as usize,
                w: (size * 1.2 * letters as f64) as usize,
                h: size as usize,
            });
        }
        Distractor::RoadLines => {
            // Long double line crossing the sheet with a gentle bow.
            let horizontal = rng.random_range(0..2) == 0;
            let (ax, ay, bx, by) = if horizontal {
                (0.0, rng.random_range(0.0..h), w - 1.0, rng.random_range(0.0..h))
            } else {
                (rng.random_range(0.0..w), 0.0, rng.random_range(0.0..w), h - 1.0)
            };
            let mx = (ax + bx) / 2.0 + rng.random_range(-0.15..0.15) * w;
            let my = (ay + by) / 2.0 + rng.random_range(-0.15..0.15) * h;
            // Normal offset for the second carriage line.
            let (dx, dy) = (bx - ax, by - ay);
            let norm = (dx * dx + dy * dy).sqrt().max(1e-6);
            let (nx, ny) = (-dy / norm * 2.5, dx / norm * 2.5);
            let steps = 48;
            let mut prev = (ax, ay);
            for s in 1..=steps {
                let t = s as f64 / steps as f64;
                let qx = (1.0 - t) * (1.0 - t) * ax + 2.0 * (1.0 - t) * t * mx + t * t * bx;
                let qy = (1.0 - t) * (1.0 - t) * ay + 2.0 * (1.0 - t) * t * my + t * t * by;
                canvas.segment(prev.0, prev.1, qx, qy, 1, palette.ink, rng, false);
                canvas.segment(prev.0 + nx, prev.1 + ny, qx + nx, qy + ny, 1, palette.ink, rng, false);
                prev = (qx, qy);
            }
            manifest.push(PlacedElement {
                kind: "road_line",
                x: ax.min(bx) as usize,
                y: ay.min(by) as usize,
                w: (ax - bx).abs() as usize + 1,
                h: (ay - by).abs() as usize + 1,
            });
        }
        Distractor::FieldTexture => {
            // Parallel hatching with no outline: same stroke family as a
            // hatched block interior, but non-urban.
            let min_dim = canvas.w.min(canvas.h);
            let rw = rng.random_range(min_dim / 8..=min_dim / 4);
            let rh = rng.random_range(min_dim / 8..=min_dim / 4);
            let x0 = rng.random_range(0..canvas.w.saturating_sub(rw).max(1));
            let y0 = rng.random_range(0..canvas.h.saturating_sub(rh).max(1));
            let mut y = y0;
            while y < y0 + rh && y < canvas.h {
                let mut x = x0;
                while x < x0 + rw && x < canvas.w {
                    let dash_end = (x + 4).min((x0 + rw).min(canvas.w));
                    for px in x..dash_end {
                        canvas.stamp(px, y, palette.ink, rng, false);
                    }
                    x += 6;
                }
                y += 3;
            }
            manifest.push(PlacedElement { kind: "field_texture", x: x0, y: y0, w: rw, h: rh });
        }
        Distractor::HueDrift => {
            // Handled during background synthesis; records the seam only.
            manifest.push(PlacedElement { kind: "hue_drift", x: 0, y: 0, w: canvas.w, h: canvas.h });
        }
    }
}

/// Generates one scene. Deterministic: identical spec (including seed)
/// yields bit-identical output.
pub fn generate_scene(spec: &SceneSpec) -> Result<ScenePair> {
    spec.validate()?;
    let mut rng = seed::rng(seed::derive(spec.seed, SCENE_STREAM));
    let mut canvas = Canvas::new(spec.width, spec.height);
    let mut manifest = Vec::new();

    // Paper background, optionally with a radiometric seam.
    let drift = spec.distractors.contains(&Distractor::HueDrift);
    let seam = if drift {
        rng.random_range(spec.width / 3..2 * spec.width / 3)
    } else {
        spec.width
    };
    let tinted = |c: [u8; 3]| {
        [
            (i16::from(c[0]) - 9).clamp(0, 255) as u8,
            (i16::from(c[1]) + 3).clamp(0, 255) as u8,
            (i16::from(c[2]) + 12).clamp(0, 255) as u8,
        ]
    };
    for y in 0..spec.height {
        for x in 0..spec.width {
            let base = if x < seam { spec.palette.paper } else { tinted(spec.palette.paper) };
            canvas.stamp(x, y, base, &mut rng, false);
        }
    }

    // Urban elements until the target fraction is met.
    let target = (spec.urban_fraction * (spec.width * spec.height) as f64) as usize;
    let mut attempts = 0usize;
    while canvas.ones() < target {
        attempts += 1;
        if attempts > 1000 {
            return Err(Error::Placement(format!(
                "urban fraction {} unreachable after {attempts} placements",
                spec.urban_fraction
            )));
        }
        let style = spec.styles[rng.random_range(0..spec.styles.len())];
        place_urban(&mut canvas, style, &spec.palette, &mut rng, &mut manifest);
    }

    // Distractors, density proportional to sheet area.
    let area_scale = ((spec.width * spec.height) as f64 / (128.0 * 128.0)).max(0.25);
    for kind in &spec.distractors {
        let count = match kind {
            Distractor::ContourLines => (3.0 * area_scale).ceil() as usize,
            Distractor::TextGlyphs => (4.0 * area_scale).ceil() as usize,
            Distractor::RoadLines => (2.0 * area_scale).ceil() as usize,
            Distractor::FieldTexture => (2.0 * area_scale).ceil() as usize,
            Distractor::HueDrift => 1,
        };
        for _ in 0..count {
            place_distractor(&mut canvas, *kind, &spec.palette, &mut rng, &mut manifest);
        }
    }

    let image = Raster::new(spec.width, spec.height, 3, canvas.img, None, None)?;
    let truth = BinaryMask::new(spec.width, spec.height, canvas.truth, None, None)?;
    Ok(ScenePair { image, truth, manifest })
}

/// On-disk corpus layout produced by [`generate_corpus`].
#[derive(Debug, Clone)]
pub struct CorpusLayout {
    pub root: PathBuf,
    pub images_dir: PathBuf,
    pub masks_dir: PathBuf,
    pub manifests_dir: PathBuf,
    pub tiles_dir: PathBuf,
    pub tile_truth_dir: PathBuf,
}

/// Writes `n` scenes in the images/masks directory-pair layout (per-scene
/// seeds `seed + i`), plus `tile_count` georeferenced tiles (double the
/// scene edge, 5 world-units per pixel, horizontally adjacent) with ground
/// truth for inference and mosaic tests.
pub fn generate_corpus(
    n: usize,
    base_spec: &SceneSpec,
    seed_value: u64,
    tile_count: usize,
    out: impl AsRef<Path>,
) -> Result<CorpusLayout> {
    if n < 1 {
        return Err(Error::Argument("corpus needs at least one scene".into()));
    }
    base_spec.validate()?;
    let root = out.as_ref().to_path_buf();
    let layout = CorpusLayout {
        images_dir: root.join("images"),
        masks_dir: root.join("masks"),
        manifests_dir: root.join("manifests"),
        tiles_dir: root.join("tiles"),
        tile_truth_dir: root.join("tiles_truth"),
        root,
    };
    for dir in [&layout.images_dir, &layout.masks_dir, &layout.manifests_dir] {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    if tile_count > 0 {
        for dir in [&layout.tiles_dir, &layout.tile_truth_dir] {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }

    for i in 0..n {
        let spec = SceneSpec { seed: seed_value + i as u64, ..base_spec.clone() };
        let scene = generate_scene(&spec)?;
        let stem = format!("scene_{i:04}");
        scene.image.write(layout.images_dir.join(format!("{stem}.ppm")))?;
        scene.truth.write(layout.masks_dir.join(format!("{stem}.pgm")))?;
        let mpath = layout.manifests_dir.join(format!("{stem}.txt"));
        fs::write(&mpath, scene.manifest_text()).map_err(|e| Error::io(&mpath, e))?;
    }

    let tile_edge = 2 * base_spec.width.max(base_spec.height);
    for i in 0..tile_count {
        let spec = SceneSpec {
            width: tile_edge,
            height: tile_edge,
            seed: seed::derive(seed_value, TILE_STREAM + i as u64),
            ..base_spec.clone()
        };
        let mut scene = generate_scene(&spec)?;
        let geo = Geotransform::north_up(
            650_000.0 + (i * tile_edge) as f64 * 5.0,
            6_860_000.0,
            5.0,
            -5.0,
        );
        scene.image.geo = Some(geo);
        scene.image.crs = Some("EPSG:2154".into());
        scene.truth.geo = Some(geo);
        scene.truth.crs = Some("EPSG:2154".into());
        let stem = format!("tile_{i:02}");
        scene.image.write(layout.tiles_dir.join(format!("{stem}.ppm")))?;
        scene.truth.write(layout.tile_truth_dir.join(format!("{stem}.pgm")))?;
    }
    Ok(layout)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenes_are_bit_identical_per_seed() {
        let spec = SceneSpec::hard(96, 7);
        let a = generate_scene(&spec).unwrap();
        let b = generate_scene(&spec).unwrap();
        assert_eq!(a.image, b.image);
        assert_eq!(a.truth, b.truth);
        assert_eq!(a.manifest, b.manifest);
        let c = generate_scene(&SceneSpec { seed: 8, ..spec }).unwrap();
        assert_ne!(a.image.data, c.image.data);
    }

    #[test]
    fn zero_urban_fraction_gives_empty_truth() {
        let spec = SceneSpec { urban_fraction: 0.0, ..SceneSpec::hard(64, 3) };
        let scene = generate_scene(&spec).unwrap();
        assert_eq!(scene.truth.count_ones(), 0);
        // Distractor ink is present even with empty truth.
        let dark = scene
            .image
            .data
            .chunks(3)
            .filter(|px| u32::from(px[0]) + u32::from(px[1]) + u32::from(px[2]) < 300)
            .count();
        assert!(dark > 50, "expected distractor ink, found {dark} dark pixels");
    }

    #[test]
    fn urban_fraction_achieved_within_tolerance() {
        for seed in [1u64, 9, 33] {
            let spec = SceneSpec { urban_fraction: 0.2, ..SceneSpec::easy(128, seed) };
            let scene = generate_scene(&spec).unwrap();
            let frac = scene.truth.count_ones() as f64 / (128.0 * 128.0);
            assert!((frac - 0.2).abs() <= 0.05, "seed {seed}: fraction {frac}");
        }
    }

    #[test]
    fn urban_manifest_footprints_are_truth_and_distractors_are_not() {
        let spec = SceneSpec::hard(128, 21);
        let scene = generate_scene(&spec).unwrap();
        let urban_kinds = ["solid_block", "hatched_block", "scattered_unit", "red_overprint"];
        let mut saw_urban = false;
        for e in &scene.manifest {
            if urban_kinds.contains(&e.kind) {
                saw_urban = true;
                for y in e.y..(e.y + e.h).min(128) {
                    for x in e.x..(e.x + e.w).min(128) {
                        assert_eq!(scene.truth.at(x, y), 1, "{} footprint hole at ({x},{y})", e.kind);
                    }
                }
            }
        }
        assert!(saw_urban);
        // Rebuild truth from urban manifest entries alone: must match exactly.
        let mut rebuilt = vec![0u8; 128 * 128];
        for e in scene.manifest.iter().filter(|e| urban_kinds.contains(&e.kind)) {
            for y in e.y..(e.y + e.h).min(128) {
                for x in e.x..(e.x + e.w).min(128) {
                    rebuilt[y * 128 + x] = 1;
                }
            }
        }
        assert_eq!(rebuilt, scene.truth.data);
    }

    #[test]
    fn distractor_ink_overlaps_urban_radiometry() {
        let spec = SceneSpec::hard(128, 5);
        let scene = generate_scene(&spec).unwrap();
        // Luminance distribution of road/text ink matches urban ink closely
        // enough that no threshold separates them: compare channel means of
        // non-urban dark pixels vs urban dark pixels.
        let mut urban_lum = Vec::new();
        let mut other_lum = Vec::new();
        for (i, px) in scene.image.data.chunks(3).enumerate() {
            let lum = 0.299 * f64::from(px[0]) + 0.587 * f64::from(px[1]) + 0.114 * f64::from(px[2]);
            if lum < 90.0 {
                if scene.truth.data[i] == 1 {
                    urban_lum.push(lum);
                } else {
                    other_lum.push(lum);
                }
            }
        }
        assert!(!urban_lum.is_empty() && !other_lum.is_empty());
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!((mean(&urban_lum) - mean(&other_lum)).abs() < 25.0);
    }

    #[test]
    fn corpus_layout_pairs_and_mask_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let layout = generate_corpus(4, &SceneSpec::easy(64, 0), 100, 2, dir.path()).unwrap();
        let pairs = crate::data::discover_pairs(&layout.images_dir, &layout.masks_dir).unwrap();
        assert_eq!(pairs.len(), 4);
        // Masks contain only {0, 255} bytes.
        for pair in &pairs {
            let bytes = std::fs::read(&pair.mask_path).unwrap();
            let header_end = bytes.len() - 64 * 64;
            assert!(bytes[header_end..].iter().all(|b| *b == 0 || *b == 255));
        }
        // Two adjacent georeferenced tiles.
        let t0 = Raster::read(layout.tiles_dir.join("tile_00.ppm")).unwrap();
        let t1 = Raster::read(layout.tiles_dir.join("tile_01.ppm")).unwrap();
        let g0 = t0.geo.unwrap();
        let g1 = t1.geo.unwrap();
        assert_eq!(g1.origin_x - g0.origin_x, (t0.width as f64) * 5.0);
        assert_eq!(t0.crs.as_deref(), Some("EPSG:2154"));
        assert_eq!(t0.width, 128);
    }

    #[test]
    fn infeasible_fraction_is_a_placement_error() {
        // A fraction no sequence of capped elements can reach on a canvas
        // this small within the attempt budget cannot occur for valid specs,
        // so force it with an out-of-range fraction instead.
        let spec = SceneSpec { urban_fraction: 0.6, ..SceneSpec::easy(64, 0) };
        assert!(matches!(generate_scene(&spec), Err(Error::Argument(_))));
    }
}

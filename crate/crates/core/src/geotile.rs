//! Patch decomposition and two-step mosaicking.
//!
//! Large rasters are cut into fixed-size square patches for independent
//! prediction, then reassembled: patches back into a tile-sized mask, and
//! georeferenced tile masks into one seamless mosaic. Both steps preserve
//! the source geotransform and CRS untouched.

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, Geotransform, Raster};

/// Border fill for patches that extend past the source.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PadMode {
    /// Mirror interior pixels about the edge (edge pixel not repeated).
    Reflect,
    /// Fill with zeros.
    Zero,
}

/// Geometry of a patch decomposition.
///
/// With `overlap = 0` (the default mode) patches tile the source exactly:
/// `cols = ceil(source_w / patch)` and `pad_right = cols*patch - source_w`.
/// With `overlap > 0` patch top-left corners step by `patch - 2*overlap`
/// and only the center region of each patch is used at merge time;
/// `pad_right`/`pad_bottom` then record the padding beyond the last patch
/// and every patch additionally hangs `overlap` pixels past the top/left.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchGrid {
    pub source_w: usize,
    pub source_h: usize,
    pub channels: usize,
    pub patch: usize,
    pub overlap: usize,
    pub cols: usize,
    pub rows: usize,
    pub pad_right: usize,
    pub pad_bottom: usize,
    pub pad_mode: PadMode,
}

impl PatchGrid {
    pub fn compute(
        source_w: usize,
        source_h: usize,
        channels: usize,
        patch: usize,
        overlap: usize,
        pad_mode: PadMode,
    ) -> Result<Self> {
        if source_w == 0 || source_h == 0 {
            return Err(Error::Argument("cannot split an empty raster".into()));
        }
        if patch < 16 {
            return Err(Error::Argument(format!("patch size {patch} below minimum 16")));
        }
        if patch > 4 * source_w.max(source_h) {
            return Err(Error::Argument(format!(
                "patch size {patch} larger than 4x source dims {source_w}x{source_h}"
            )));
        }
        if 2 * overlap >= patch {
            return Err(Error::Argument(format!("overlap {overlap} too large for patch {patch}")));
        }
        let stride = patch - 2 * overlap;
        let cols = source_w.div_ceil(stride);
        let rows = source_h.div_ceil(stride);
        let pad_right = (cols - 1) * stride + patch - overlap - source_w;
        let pad_bottom = (rows - 1) * stride + patch - overlap - source_h;
        Ok(PatchGrid {
            source_w,
            source_h,
            channels,
            patch,
            overlap,
            cols,
            rows,
            pad_right,
            pad_bottom,
            pad_mode,
        })
    }

    pub fn stride(&self) -> usize {
        self.patch - 2 * self.overlap
    }

    pub fn patch_count(&self) -> usize {
        self.cols * self.rows
    }
}

/// One patch with its grid position.
#[derive(Debug, Clone)]
pub struct Patch<T> {
    pub grid_col: usize,
    pub grid_row: usize,
    pub pixels: T,
}

/// Pixel containers that can be split into patches and reassembled.
pub trait PixelGrid: Sized + Clone {
    fn dims(&self) -> (usize, usize);
    fn channel_count(&self) -> usize;
    fn bytes(&self) -> &[u8];
    fn geo(&self) -> Option<&Geotransform>;
    fn crs(&self) -> Option<&str>;
    fn from_parts(
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<u8>,
        geo: Option<Geotransform>,
        crs: Option<String>,
    ) -> Result<Self>;
}

impl PixelGrid for Raster {
    fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
    fn channel_count(&self) -> usize {
        self.channels
    }
    fn bytes(&self) -> &[u8] {
        &self.data
    }
    fn geo(&self) -> Option<&Geotransform> {
        self.geo.as_ref()
    }
    fn crs(&self) -> Option<&str> {
        self.crs.as_deref()
    }
    fn from_parts(
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<u8>,
        geo: Option<Geotransform>,
        crs: Option<String>,
    ) -> Result<Self> {
        Raster::new(width, height, channels, data, geo, crs)
    }
}

impl PixelGrid for BinaryMask {
    fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
    fn channel_count(&self) -> usize {
        1
    }
    fn bytes(&self) -> &[u8] {
        &self.data
    }
    fn geo(&self) -> Option<&Geotransform> {
        self.geo.as_ref()
    }
    fn crs(&self) -> Option<&str> {
        self.crs.as_deref()
    }
    fn from_parts(
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<u8>,
        geo: Option<Geotransform>,
        crs: Option<String>,
    ) -> Result<Self> {
        if channels != 1 {
            return Err(Error::Argument("mask patches must be single-channel".into()));
        }
        BinaryMask::new(width, height, data, geo, crs)
    }
}

/// Mirror a possibly out-of-range coordinate into `[0, size)`.
#[inline]
fn mirror(c: isize, size: usize) -> usize {
    let size = size as isize;
    if size == 1 {
        return 0;
    }
    let period = 2 * (size - 1);
    let mut c = c.rem_euclid(period);
    if c >= size {
        c = period - c;
    }
    c as usize
}

/// Splits into non-overlapping patches in row-major grid order.
pub fn split<T: PixelGrid>(img: &T, patch: usize, pad_mode: PadMode) -> Result<(PatchGrid, Vec<Patch<T>>)> {
    split_with_overlap(img, patch, 0, pad_mode)
}

/// Splits with an overlap margin; only patch centers are used on merge.
pub fn split_with_overlap<T: PixelGrid>(
    img: &T,
    patch: usize,
    overlap: usize,
    pad_mode: PadMode,
) -> Result<(PatchGrid, Vec<Patch<T>>)> {
    let (w, h) = img.dims();
    let ch = img.channel_count();
    let grid = PatchGrid::compute(w, h, ch, patch, overlap, pad_mode)?;
    let stride = grid.stride();
    let src = img.bytes();
    let mut patches = Vec::with_capacity(grid.patch_count());
    for gr in 0..grid.rows {
        for gc in 0..grid.cols {
            let x0 = (gc * stride) as isize - overlap as isize;
            let y0 = (gr * stride) as isize - overlap as isize;
            let mut data = vec![0u8; patch * patch * ch];
            for py in 0..patch {
                let sy = y0 + py as isize;
                let row_in_range = sy >= 0 && (sy as usize) < h;
                let sy_m = mirror(sy, h);
                for px in 0..patch {
                    let sx = x0 + px as isize;
                    let (ok, sx_use, sy_use) = if row_in_range && sx >= 0 && (sx as usize) < w {
                        (true, sx as usize, sy as usize)
                    } else {
                        match pad_mode {
                            PadMode::Zero => (false, 0, 0),
                            PadMode::Reflect => (true, mirror(sx, w), sy_m),
                        }
                    };
                    if ok {
                        let s = (sy_use * w + sx_use) * ch;
                        let d = (py * patch + px) * ch;
                        data[d..d + ch].copy_from_slice(&src[s..s + ch]);
                    }
                }
            }
            let pixels = T::from_parts(patch, patch, ch, data, None, None)?;
            patches.push(Patch { grid_col: gc, grid_row: gr, pixels });
        }
    }
    Ok((grid, patches))
}

/// Reassembles patches into the source-sized image, cropping all padding.
///
/// Patches may arrive in any order; grid coordinates key the placement.
/// `geo` and `crs` are attached to the output unchanged.
pub fn merge_patches<T: PixelGrid>(
    grid: &PatchGrid,
    patches: &[Patch<T>],
    geo: Option<Geotransform>,
    crs: Option<String>,
) -> Result<T> {
    if patches.len() != grid.patch_count() {
        return Err(Error::Assembly(format!(
            "expected {} patches, got {}",
            grid.patch_count(),
            patches.len()
        )));
    }
    let ch = grid.channels;
    let stride = grid.stride();
    let mut seen = vec![false; grid.patch_count()];
    let mut out = vec![0u8; grid.source_w * grid.source_h * ch];
    for p in patches {
        if p.grid_col >= grid.cols || p.grid_row >= grid.rows {
            return Err(Error::Assembly(format!(
                "patch ({}, {}) outside {}x{} grid",
                p.grid_col, p.grid_row, grid.cols, grid.rows
            )));
        }
        let cell = p.grid_row * grid.cols + p.grid_col;
        if seen[cell] {
            return Err(Error::Assembly(format!(
                "duplicate patch for cell ({}, {})",
                p.grid_col, p.grid_row
            )));
        }
        seen[cell] = true;
        let (pw, ph) = p.pixels.dims();
        if pw != grid.patch || ph != grid.patch || p.pixels.channel_count() != ch {
            return Err(Error::Assembly(format!(
                "patch ({}, {}) has shape {}x{}x{}, expected {}x{}x{}",
                p.grid_col,
                p.grid_row,
                pw,
                ph,
                p.pixels.channel_count(),
                grid.patch,
                grid.patch,
                ch
            )));
        }
        // Copy the center region (whole patch when overlap = 0).
        let dst_x0 = p.grid_col * stride;
        let dst_y0 = p.grid_row * stride;
        let src = p.pixels.bytes();
        let copy_w = stride.min(grid.source_w.saturating_sub(dst_x0));
        let copy_h = stride.min(grid.source_h.saturating_sub(dst_y0));
        for y in 0..copy_h {
            let sy = y + grid.overlap;
            let s = (sy * grid.patch + grid.overlap) * ch;
            let d = ((dst_y0 + y) * grid.source_w + dst_x0) * ch;
            out[d..d + copy_w * ch].copy_from_slice(&src[s..s + copy_w * ch]);
        }
    }
    if let Some(cell) = seen.iter().position(|s| !s) {
        return Err(Error::Assembly(format!(
            "missing patch for cell ({}, {})",
            cell % grid.cols,
            cell / grid.cols
        )));
    }
    T::from_parts(grid.source_w, grid.source_h, ch, out, geo, crs)
}

/// Merges georeferenced tile masks into one mosaic.
///
/// All tiles must share pixel size, zero rotation, and CRS, and sit on a
/// common pixel lattice. Overlapping pixels combine by logical OR; the
/// background is 0.
pub fn mosaic_tiles(tiles: &[BinaryMask]) -> Result<BinaryMask> {
    if tiles.is_empty() {
        return Err(Error::Argument("mosaic requires at least one tile".into()));
    }
    let first_geo = tiles[0]
        .geo
        .ok_or_else(|| Error::Alignment("tile 0 has no geotransform".into()))?;
    let crs = tiles[0].crs.clone();
    for (i, t) in tiles.iter().enumerate() {
        let geo = t.geo.ok_or_else(|| Error::Alignment(format!("tile {i} has no geotransform")))?;
        if geo.rot_xy != 0.0 || geo.rot_yx != 0.0 {
            return Err(Error::Alignment(format!("tile {i} has rotated geotransform")));
        }
        if geo.pixel_w != first_geo.pixel_w || geo.pixel_h != first_geo.pixel_h {
            return Err(Error::Alignment(format!(
                "tile {i} resolution {}x{} differs from {}x{}",
                geo.pixel_w, geo.pixel_h, first_geo.pixel_w, first_geo.pixel_h
            )));
        }
        if t.crs != crs {
            return Err(Error::Crs(format!("tile {i} CRS differs from tile 0")));
        }
    }
    // Integer pixel offset of each tile origin relative to tile 0.
    let mut offsets = Vec::with_capacity(tiles.len());
    for (i, t) in tiles.iter().enumerate() {
        let geo = t.geo.unwrap();
        let dc = (geo.origin_x - first_geo.origin_x) / first_geo.pixel_w;
        let dr = (geo.origin_y - first_geo.origin_y) / first_geo.pixel_h;
        if (dc - dc.round()).abs() > 1e-6 || (dr - dr.round()).abs() > 1e-6 {
            return Err(Error::Alignment(format!(
                "tile {i} origin is not an integer pixel offset ({dc}, {dr})"
            )));
        }
        offsets.push((dc.round() as i64, dr.round() as i64));
    }
    let min_c = offsets.iter().map(|o| o.0).min().unwrap();
    let min_r = offsets.iter().map(|o| o.1).min().unwrap();
    let max_c = offsets
        .iter()
        .zip(tiles)
        .map(|(o, t)| o.0 + t.width as i64)
        .max()
        .unwrap();
    let max_r = offsets
        .iter()
        .zip(tiles)
        .map(|(o, t)| o.1 + t.height as i64)
        .max()
        .unwrap();
    let out_w = (max_c - min_c) as usize;
    let out_h = (max_r - min_r) as usize;
    let mut data = vec![0u8; out_w * out_h];
    for (t, (oc, or)) in tiles.iter().zip(&offsets) {
        let x0 = (oc - min_c) as usize;
        let y0 = (or - min_r) as usize;
        for y in 0..t.height {
            let src = &t.data[y * t.width..(y + 1) * t.width];
            let dst = &mut data[(y0 + y) * out_w + x0..(y0 + y) * out_w + x0 + t.width];
            for (d, s) in dst.iter_mut().zip(src) {
                *d |= *s;
            }
        }
    }
    let origin = first_geo.pixel_to_world(min_c as f64, min_r as f64);
    let geo = Geotransform { origin_x: origin.0, origin_y: origin.1, ..first_geo };
    BinaryMask::new(out_w, out_h, data, Some(geo), crs)
}

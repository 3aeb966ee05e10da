//! In-memory rasters and bit-exact file I/O.
//!
//! Images travel as binary PPM (P6, 3-channel) or PGM (P5, 1-channel) with
//! maxval 255. Georeferencing rides in two optional sidecars next to the
//! image: a six-line ASCII world file (`.wld`) and a verbatim CRS text file
//! (`.crs`). The CRS is carried as an opaque string and never interpreted.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Affine map from pixel indices to world coordinates.
///
/// `(origin_x, origin_y)` is the world position of the **center** of pixel
/// (0, 0). Pixel (col, row) maps to
/// `(origin_x + col*pixel_w + row*rot_xy, origin_y + col*rot_yx + row*pixel_h)`.
/// `pixel_h` is negative for north-up rasters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geotransform {
    pub origin_x: f64,
    pub origin_y: f64,
    pub pixel_w: f64,
    pub pixel_h: f64,
    pub rot_xy: f64,
    pub rot_yx: f64,
}

impl Geotransform {
    /// North-up transform without rotation terms.
    pub fn north_up(origin_x: f64, origin_y: f64, pixel_w: f64, pixel_h: f64) -> Self {
        Geotransform { origin_x, origin_y, pixel_w, pixel_h, rot_xy: 0.0, rot_yx: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.pixel_w == 0.0 || self.pixel_h == 0.0 {
            return Err(Error::Argument("geotransform pixel size must be nonzero".into()));
        }
        if self.det() == 0.0 {
            return Err(Error::Argument("geotransform is not invertible".into()));
        }
        Ok(())
    }

    fn det(&self) -> f64 {
        self.pixel_w * self.pixel_h - self.rot_xy * self.rot_yx
    }

    pub fn pixel_to_world(&self, col: f64, row: f64) -> (f64, f64) {
        (
            self.origin_x + col * self.pixel_w + row * self.rot_xy,
            self.origin_y + col * self.rot_yx + row * self.pixel_h,
        )
    }

    /// Analytic inverse of [`pixel_to_world`](Self::pixel_to_world).
    pub fn world_to_pixel(&self, x: f64, y: f64) -> (f64, f64) {
        let dx = x - self.origin_x;
        let dy = y - self.origin_y;
        let det = self.det();
        ((dx * self.pixel_h - dy * self.rot_xy) / det, (dy * self.pixel_w - dx * self.rot_yx) / det)
    }

    /// World-file line order: pixel_w, rot_yx, rot_xy, pixel_h, origin_x, origin_y.
    fn to_world_file(&self) -> String {
        format!(
            "{}\n{}\n{}\n{}\n{}\n{}\n",
            self.pixel_w, self.rot_yx, self.rot_xy, self.pixel_h, self.origin_x, self.origin_y
        )
    }

    fn from_world_file(text: &str, path: &Path) -> Result<Self> {
        let vals: Vec<f64> = text
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| Error::format(path, format!("bad number {t:?}"))))
            .collect::<Result<_>>()?;
        if vals.len() != 6 {
            return Err(Error::format(path, format!("expected 6 values, found {}", vals.len())));
        }
        let geo = Geotransform {
            pixel_w: vals[0],
            rot_yx: vals[1],
            rot_xy: vals[2],
            pixel_h: vals[3],
            origin_x: vals[4],
            origin_y: vals[5],
        };
        geo.validate()?;
        Ok(geo)
    }
}

/// 8-bit raster, 1 (gray) or 3 (RGB) interleaved channels, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<u8>,
    pub geo: Option<Geotransform>,
    pub crs: Option<String>,
}

impl Raster {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<u8>,
        geo: Option<Geotransform>,
        crs: Option<String>,
    ) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::Argument(format!("raster channels must be 1 or 3, got {channels}")));
        }
        if data.len() != width * height * channels {
            return Err(Error::Argument(format!(
                "raster data length {} does not match {width}x{height}x{channels}",
                data.len()
            )));
        }
        if let Some(g) = &geo {
            g.validate()?;
        }
        Ok(Raster { width, height, channels, data, geo, crs })
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[u8] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    /// Reads a binary PPM/PGM plus any `.wld`/`.crs` sidecars.
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let (width, height, channels, data) = parse_pnm(&bytes, path)?;
        let (geo, crs) = read_sidecars(path)?;
        Raster::new(width, height, channels, data, geo, crs)
    }

    /// Writes P6 (3-channel) or P5 (1-channel) plus sidecars when present.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        write_pnm(path, self.width, self.height, self.channels, &self.data)?;
        write_sidecars(path, self.geo.as_ref(), self.crs.as_deref())
    }
}

/// Per-pixel {0,1} mask. Stored on disk as PGM with 1 -> 255, 0 -> 0.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
    pub geo: Option<Geotransform>,
    pub crs: Option<String>,
}

impl BinaryMask {
    pub fn new(
        width: usize,
        height: usize,
        data: Vec<u8>,
        geo: Option<Geotransform>,
        crs: Option<String>,
    ) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Argument(format!(
                "mask data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| **v > 1) {
            return Err(Error::Argument(format!("mask values must be 0 or 1, found {v}")));
        }
        if let Some(g) = &geo {
            g.validate()?;
        }
        Ok(BinaryMask { width, height, data, geo, crs })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        BinaryMask { width, height, data: vec![0; width * height], geo: None, crs: None }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|v| **v == 1).count()
    }

    /// Reads a PGM and binarizes stored bytes by the `> 128` rule.
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let (width, height, channels, data) = parse_pnm(&bytes, path)?;
        if channels != 1 {
            return Err(Error::format(path, "mask must be single-channel (P5)"));
        }
        let data = data.into_iter().map(|v| u8::from(v > 128)).collect();
        let (geo, crs) = read_sidecars(path)?;
        BinaryMask::new(width, height, data, geo, crs)
    }

    /// Writes P5 with values {0, 255} plus sidecars when present.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes: Vec<u8> = self.data.iter().map(|v| v * 255).collect();
        write_pnm(path, self.width, self.height, 1, &bytes)?;
        write_sidecars(path, self.geo.as_ref(), self.crs.as_deref())
    }
}

fn parse_pnm(bytes: &[u8], path: &Path) -> Result<(usize, usize, usize, Vec<u8>)> {
    let channels = match bytes.get(0..2) {
        Some(b"P6") => 3,
        Some(b"P5") => 1,
        _ => return Err(Error::format(path, "not a binary PPM (P6) or PGM (P5)")),
    };
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        *field = next_header_int(bytes, &mut pos, path)?;
    }
    let (width, height, maxval) = (fields[0], fields[1], fields[2]);
    if maxval != 255 {
        return Err(Error::Unsupported(format!("{}: maxval {maxval}, only 255 supported", path.display())));
    }
    // Exactly one whitespace byte separates the header from the payload.
    pos += 1;
    let need = width * height * channels;
    let payload = bytes.get(pos..pos + need).ok_or_else(|| {
        Error::io(path, std::io::Error::new(std::io::ErrorKind::UnexpectedEof, "truncated pixel payload"))
    })?;
    Ok((width, height, channels, payload.to_vec()))
}

/// Parses the next decimal header field, skipping whitespace and `#` comments.
fn next_header_int(bytes: &[u8], pos: &mut usize, path: &Path) -> Result<usize> {
    loop {
        match bytes.get(*pos) {
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(b'#') => {
                while let Some(b) = bytes.get(*pos) {
                    *pos += 1;
                    if *b == b'\n' {
                        break;
                    }
                }
            }
            Some(b) if b.is_ascii_digit() => break,
            _ => return Err(Error::format(path, "malformed header")),
        }
    }
    let mut value = 0usize;
    let mut any = false;
    while let Some(b) = bytes.get(*pos) {
        if !b.is_ascii_digit() {
            break;
        }
        value = value
            .checked_mul(10)
            .and_then(|v| v.checked_add((b - b'0') as usize))
            .ok_or_else(|| Error::format(path, "header value overflow"))?;
        any = true;
        *pos += 1;
    }
    if !any {
        return Err(Error::format(path, "malformed header"));
    }
    Ok(value)
}

fn write_pnm(path: &Path, width: usize, height: usize, channels: usize, data: &[u8]) -> Result<()> {
    let magic = if channels == 3 { "P6" } else { "P5" };
    let mut out = Vec::with_capacity(data.len() + 32);
    write!(out, "{magic}\n{width} {height}\n255\n").expect("write to vec");
    out.extend_from_slice(data);
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn sidecar(path: &Path, ext: &str) -> std::path::PathBuf {
    path.with_extension(ext)
}

fn read_sidecars(path: &Path) -> Result<(Option<Geotransform>, Option<String>)> {
    let wld = sidecar(path, "wld");
    let geo = if wld.exists() {
        let text = fs::read_to_string(&wld).map_err(|e| Error::io(&wld, e))?;
        Some(Geotransform::from_world_file(&text, &wld)?)
    } else {
        None
    };
    let crs_path = sidecar(path, "crs");
    let crs = if crs_path.exists() {
        Some(fs::read_to_string(&crs_path).map_err(|e| Error::io(&crs_path, e))?)
    } else {
        None
    };
    Ok((geo, crs))
}

fn write_sidecars(path: &Path, geo: Option<&Geotransform>, crs: Option<&str>) -> Result<()> {
    if let Some(geo) = geo {
        let wld = sidecar(path, "wld");
        fs::write(&wld, geo.to_world_file()).map_err(|e| Error::io(&wld, e))?;
    }
    if let Some(crs) = crs {
        let crs_path = sidecar(path, "crs");
        fs::write(&crs_path, crs).map_err(|e| Error::io(&crs_path, e))?;
    }
    Ok(())
}

//! Occupancy grid map.
//!
//! Every cell keeps a saturating counter in `[-127, 127]`. Beams passing
//! through a cell push it down (free), the beam endpoint pushes it up
//! (occupied). The map value `M = 0.5 + c / 254` therefore lives in
//! `[0, 1]`, with never-observed cells at exactly 0.5.
//!
//! Continuous queries use bilinear interpolation between cell centers.

use crate::geom::{Point2, Pose2};
use crate::world::LidarScan;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;
use thiserror::Error;

pub const DEFAULT_RESOLUTION: f64 = 0.05;
const COUNTER_LIMIT: i16 = 127;
const HYSTERESIS: f64 = 0.1;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("grid resolution must be positive, got {0}")]
    BadResolution(f64),
    #[error("grid must have at least one cell")]
    Empty,
    #[error("map file: {0}")]
    Io(#[from] std::io::Error),
    #[error("map header: {0}")]
    Header(#[from] toml::de::Error),
    #[error("map file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellState {
    Occupied,
    Free,
    Unexplored,
}

impl CellState {
    pub fn classify(m: f64) -> Self {
        if m > 0.5 + HYSTERESIS {
            CellState::Occupied
        } else if m < 0.5 - HYSTERESIS {
            CellState::Free
        } else {
            CellState::Unexplored
        }
    }
}

/// Counter increments applied per observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UpdateSteps {
    pub hit: i16,
    pub miss: i16,
}

impl Default for UpdateSteps {
    fn default() -> Self {
        Self { hit: 28, miss: 7 }
    }
}

/// Interpolated map value at a continuous point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interp {
    pub value: f64,
    /// `(dM/dx, dM/dy)` in the world frame, 1/m.
    pub gradient: [f64; 2],
    pub in_map: bool,
    /// All four supporting cells were never observed.
    pub unknown: bool,
}

impl Interp {
    const OUTSIDE: Interp = Interp {
        value: 0.5,
        gradient: [0.0, 0.0],
        in_map: false,
        unknown: true,
    };
}

/// Anything the scan matcher can align against.
pub trait MapField {
    fn sample(&self, p: Point2) -> Interp;
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    origin: Pose2,
    delta: f64,
    width: usize,
    height: usize,
    cells: Vec<i8>,
    steps: UpdateSteps,
}

impl OccupancyGrid {
    /// All-unknown grid whose cell `(0, 0)` corner sits at `origin`.
    pub fn new(origin: Pose2, delta: f64, width: usize, height: usize) -> Result<Self, GridError> {
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(GridError::BadResolution(delta));
        }
        if width == 0 || height == 0 {
            return Err(GridError::Empty);
        }
        Ok(Self {
            origin,
            delta,
            width,
            height,
            cells: vec![0; width * height],
            steps: UpdateSteps::default(),
        })
    }

    /// Axis-aligned grid covering `[min, max]` (rounded outwards to whole cells).
    pub fn covering(min: Point2, max: Point2, delta: f64) -> Result<Self, GridError> {
        let w = ((max.x - min.x) / delta).ceil().max(1.0) as usize;
        let h = ((max.y - min.y) / delta).ceil().max(1.0) as usize;
        Self::new(Pose2::new(min.x, min.y, 0.0), delta, w, h)
    }

    pub fn with_steps(mut self, steps: UpdateSteps) -> Self {
        self.steps = steps;
        self
    }

    pub fn origin(&self) -> &Pose2 {
        &self.origin
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn counter(&self, i: usize, j: usize) -> i8 {
        self.cells[j * self.width + i]
    }

    pub fn set_counter(&mut self, i: usize, j: usize, c: i8) {
        let c = c.max(-(COUNTER_LIMIT as i8));
        self.cells[j * self.width + i] = c;
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        counter_to_value(self.counter(i, j))
    }

    pub fn state(&self, i: usize, j: usize) -> CellState {
        CellState::classify(self.value(i, j))
    }

    /// World position of a cell center.
    pub fn cell_center(&self, i: usize, j: usize) -> Point2 {
        self.origin.apply(Point2::new(
            (i as f64 + 0.5) * self.delta,
            (j as f64 + 0.5) * self.delta,
        ))
    }

    /// Integer cell coordinates (possibly outside the grid) of a world point.
    pub fn cell_coords(&self, p: Point2) -> (i64, i64) {
        let local = self.origin.inverse_apply(p);
        (
            (local.x / self.delta).floor() as i64,
            (local.y / self.delta).floor() as i64,
        )
    }

    pub fn cell_of(&self, p: Point2) -> Option<(usize, usize)> {
        let (i, j) = self.cell_coords(p);
        self.in_grid(i, j).then_some((i as usize, j as usize))
    }

    pub fn state_at(&self, p: Point2) -> Option<CellState> {
        self.cell_of(p).map(|(i, j)| self.state(i, j))
    }

    #[inline]
    fn in_grid(&self, i: i64, j: i64) -> bool {
        i >= 0 && j >= 0 && (i as usize) < self.width && (j as usize) < self.height
    }

    #[inline]
    fn counter_or_unknown(&self, i: i64, j: i64) -> i8 {
        if self.in_grid(i, j) {
            self.cells[j as usize * self.width + i as usize]
        } else {
            0
        }
    }

    fn bump(&mut self, i: usize, j: usize, step: i16) {
        let c = &mut self.cells[j * self.width + i];
        *c = (*c as i16 + step).clamp(-COUNTER_LIMIT, COUNTER_LIMIT) as i8;
    }

    /// Fuses one scan taken at `sensor_pose`.
    ///
    /// Cells on the Bresenham line from the sensor cell up to (excluding) the
    /// endpoint cell get a free update; the endpoint cell gets an occupied
    /// update. Beams leaving the grid are clipped at the border and their
    /// endpoint is dropped.
    pub fn integrate_scan(&mut self, sensor_pose: &Pose2, scan: &LidarScan) {
        let (si, sj) = self.cell_coords(sensor_pose.position());
        if !self.in_grid(si, sj) {
            return;
        }
        let (hit, miss) = (self.steps.hit, self.steps.miss);
        for ep in scan.endpoints() {
            let (ei, ej) = self.cell_coords(sensor_pose.apply(ep));
            let mut clipped = false;
            for (i, j) in BresenhamLine::new((si, sj), (ei, ej)) {
                if !self.in_grid(i, j) {
                    clipped = true;
                    break;
                }
                self.bump(i as usize, j as usize, -miss);
            }
            if !clipped && self.in_grid(ei, ej) {
                self.bump(ei as usize, ej as usize, hit);
            }
        }
    }

    /// Bilinear interpolation of `M` at `p`; 0.5 and `in_map = false` outside.
    pub fn interp_value(&self, p: Point2) -> (f64, bool) {
        let s = self.interp(p);
        (s.value, s.in_map)
    }

    /// Analytic gradient of the bilinear surface at `p`, world frame, 1/m.
    pub fn interp_gradient(&self, p: Point2) -> ([f64; 2], bool) {
        let s = self.interp(p);
        (s.gradient, s.in_map)
    }

    pub fn interp(&self, p: Point2) -> Interp {
        let local = self.origin.inverse_apply(p);
        let ext_x = self.width as f64 * self.delta;
        let ext_y = self.height as f64 * self.delta;
        if !(local.x >= 0.0 && local.x <= ext_x && local.y >= 0.0 && local.y <= ext_y) {
            return Interp::OUTSIDE;
        }
        let gx = local.x / self.delta - 0.5;
        let gy = local.y / self.delta - 0.5;
        let i0 = gx.floor();
        let j0 = gy.floor();
        let (fx, fy) = (gx - i0, gy - j0);
        let (i0, j0) = (i0 as i64, j0 as i64);
        let c00 = self.counter_or_unknown(i0, j0);
        let c10 = self.counter_or_unknown(i0 + 1, j0);
        let c01 = self.counter_or_unknown(i0, j0 + 1);
        let c11 = self.counter_or_unknown(i0 + 1, j0 + 1);
        let unknown = c00 == 0 && c10 == 0 && c01 == 0 && c11 == 0;
        let (value, gl) = bilinear(
            counter_to_value(c00),
            counter_to_value(c10),
            counter_to_value(c01),
            counter_to_value(c11),
            fx,
            fy,
        );
        let gl = [gl[0] / self.delta, gl[1] / self.delta];
        let (s, c) = self.origin.psi.sin_cos();
        Interp {
            value,
            gradient: [c * gl[0] - s * gl[1], s * gl[0] + c * gl[1]],
            in_map: true,
            unknown,
        }
    }

    /// Half-resolution copy sharing the same origin. A coarse cell takes the
    /// strongest occupied child if it has one, otherwise its most free child.
    pub fn downsample(&self) -> OccupancyGrid {
        let w = self.width.div_ceil(2);
        let h = self.height.div_ceil(2);
        let mut cells = vec![0i8; w * h];
        for jj in 0..h {
            for ii in 0..w {
                let mut hi = i8::MIN;
                let mut lo = i8::MAX;
                for j in 2 * jj..(2 * jj + 2).min(self.height) {
                    for i in 2 * ii..(2 * ii + 2).min(self.width) {
                        let c = self.cells[j * self.width + i];
                        hi = hi.max(c);
                        lo = lo.min(c);
                    }
                }
                let occupied = CellState::classify(counter_to_value(hi)) == CellState::Occupied;
                cells[jj * w + ii] = if occupied { hi } else { lo };
            }
        }
        OccupancyGrid {
            origin: self.origin,
            delta: 2.0 * self.delta,
            width: w,
            height: h,
            cells,
            steps: self.steps,
        }
    }

    /// Number of cells in each state.
    pub fn census(&self) -> (usize, usize, usize) {
        let mut occ = 0;
        let mut free = 0;
        for &c in &self.cells {
            match CellState::classify(counter_to_value(c)) {
                CellState::Occupied => occ += 1,
                CellState::Free => free += 1,
                CellState::Unexplored => {}
            }
        }
        (occ, free, self.cells.len() - occ - free)
    }

    /// Binary greyscale image (P5 PGM): 0 free, 255 occupied, 128 unknown.
    /// The first image row is the top (highest `j`) row of the grid.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.reserve(self.cells.len());
        for j in (0..self.height).rev() {
            for i in 0..self.width {
                out.push(match self.state(i, j) {
                    CellState::Free => PIXEL_FREE,
                    CellState::Occupied => PIXEL_OCCUPIED,
                    CellState::Unexplored => PIXEL_UNKNOWN,
                });
            }
        }
        out
    }

    pub fn header(&self, image: &str) -> MapHeader {
        MapHeader {
            version: MAP_FORMAT_VERSION,
            image: image.to_string(),
            origin: [self.origin.px, self.origin.py, self.origin.psi],
            delta: self.delta,
            width: self.width,
            height: self.height,
        }
    }

    /// Writes `<stem>.pgm` and the `<stem>.toml` sidecar into `dir`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<(), GridError> {
        let image = format!("{stem}.pgm");
        std::fs::File::create(dir.join(&image))?.write_all(&self.to_pgm())?;
        let header = toml::to_string(&self.header(&image))
            .map_err(|e| GridError::Format(e.to_string()))?;
        std::fs::write(dir.join(format!("{stem}.toml")), header)?;
        Ok(())
    }

    /// Loads a map from its sidecar header path.
    pub fn load(header_path: &Path) -> Result<Self, GridError> {
        let header: MapHeader = toml::from_str(&std::fs::read_to_string(header_path)?)?;
        let dir = header_path.parent().unwrap_or(Path::new("."));
        let bytes = std::fs::read(dir.join(&header.image))?;
        Self::from_pgm(&header, &bytes)
    }

    pub fn from_pgm(header: &MapHeader, bytes: &[u8]) -> Result<Self, GridError> {
        if header.version != MAP_FORMAT_VERSION {
            return Err(GridError::Format(format!("unsupported map version {}", header.version)));
        }
        let (w, h, data) = parse_pgm(bytes)?;
        if w != header.width || h != header.height {
            return Err(GridError::Format(format!(
                "image is {w}x{h}, header says {}x{}",
                header.width, header.height
            )));
        }
        let [x, y, psi] = header.origin;
        let mut grid = Self::new(Pose2::new(x, y, psi), header.delta, w, h)?;
        for (k, &px) in data.iter().enumerate() {
            let (i, j) = (k % w, h - 1 - k / w);
            let c = match px {
                PIXEL_FREE => -(COUNTER_LIMIT as i8),
                PIXEL_OCCUPIED => COUNTER_LIMIT as i8,
                PIXEL_UNKNOWN => 0,
                other => return Err(GridError::Format(format!("unexpected pixel value {other}"))),
            };
            grid.cells[j * w + i] = c;
        }
        Ok(grid)
    }
}

impl MapField for OccupancyGrid {
    fn sample(&self, p: Point2) -> Interp {
        self.interp(p)
    }
}

pub const MAP_FORMAT_VERSION: u32 = 1;
const PIXEL_FREE: u8 = 0;
const PIXEL_OCCUPIED: u8 = 255;
const PIXEL_UNKNOWN: u8 = 128;

/// Sidecar metadata for an exported map image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapHeader {
    pub version: u32,
    pub image: String,
    /// `[x, y, psi]` of the cell (0, 0) corner.
    pub origin: [f64; 3],
    pub delta: f64,
    pub width: usize,
    pub height: usize,
}

fn parse_pgm(bytes: &[u8]) -> Result<(usize, usize, &[u8]), GridError> {
    let bad = |m: &str| GridError::Format(format!("pgm: {m}"));
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header is not ascii"))?);
    }
    if fields[0] != "P5" {
        return Err(bad("not a binary greymap"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad number"));
    let (w, h, maxval) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
    if maxval != 255 {
        return Err(bad("only 8-bit maps are supported"));
    }
    // exactly one whitespace byte separates the header from the raster
    let data = &bytes[pos + 1..];
    if data.len() != w * h {
        return Err(bad("raster size does not match dimensions"));
    }
    Ok((w, h, data))
}

#[inline]
pub fn counter_to_value(c: i8) -> f64 {
    0.5 + c as f64 / (2.0 * COUNTER_LIMIT as f64)
}

/// Value and `(d/dfx, d/dfy)` of the bilinear patch with corner values
/// `v00, v10, v01, v11` at fractional offsets `(fx, fy)`.
#[inline]
pub(crate) fn bilinear(v00: f64, v10: f64, v01: f64, v11: f64, fx: f64, fy: f64) -> (f64, [f64; 2]) {
    let value = (1.0 - fy) * ((1.0 - fx) * v00 + fx * v10) + fy * ((1.0 - fx) * v01 + fx * v11);
    let dx = (1.0 - fy) * (v10 - v00) + fy * (v11 - v01);
    let dy = (1.0 - fx) * (v01 - v00) + fx * (v11 - v10);
    (value, [dx, dy])
}

/// Integer Bresenham line over all octants. Yields the start cell and every
/// cell up to, but not including, the end cell.
#[derive(Debug, Clone)]
pub struct BresenhamLine {
    x: i64,
    y: i64,
    end: (i64, i64),
    dx: i64,
    dy: i64,
    sx: i64,
    sy: i64,
    err: i64,
    done: bool,
}

impl BresenhamLine {
    pub fn new(start: (i64, i64), end: (i64, i64)) -> Self {
        let dx = (end.0 - start.0).abs();
        let dy = -(end.1 - start.1).abs();
        Self {
            x: start.0,
            y: start.1,
            end,
            dx,
            dy,
            sx: if start.0 < end.0 { 1 } else { -1 },
            sy: if start.1 < end.1 { 1 } else { -1 },
            err: dx + dy,
            done: false,
        }
    }
}

impl Iterator for BresenhamLine {
    type Item = (i64, i64);

    fn next(&mut self) -> Option<(i64, i64)> {
        if self.done {
            return None;
        }
        let cur = (self.x, self.y);
        if cur == self.end {
            self.done = true;
            return None;
        }
        let e2 = 2 * self.err;
        if e2 >= self.dy {
            self.err += self.dy;
            self.x += self.sx;
        }
        if e2 <= self.dx {
            self.err += self.dx;
            self.y += self.sy;
        }
        Some(cur)
    }
}

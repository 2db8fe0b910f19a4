//! Uniform Cartesian grids on `[-W, W]^d` and scalar fields sampled at cell centers.
//!
//! Values are stored row-major with axis 0 varying slowest. Points are
//! `[f64; 3]` regardless of dimension; unused trailing components are zero.

use std::fmt;
use std::io::Write;

use crate::error::{Error, Result};

pub type Point = [f64; 3];

pub const MIN_CELLS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    dim: usize,
    cells: usize,
    half_width: f64,
}

impl GridSpec {
    pub fn new(dim: usize, cells: usize, half_width: f64) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::config("grid.dimension", format!("{dim} is not in 1..=3")));
        }
        if cells < MIN_CELLS {
            return Err(Error::config(
                "grid.cells",
                format!("{cells} is below the minimum of {MIN_CELLS}"),
            ));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::config("grid.half_width", format!("{half_width} must be positive")));
        }
        Ok(GridSpec {
            dim,
            cells,
            half_width,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells_per_axis(&self) -> usize {
        self.cells
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    /// Cell size `h = 2W / n`.
    pub fn cell_size(&self) -> f64 {
        2.0 * self.half_width / self.cells as f64
    }

    /// `h^d`.
    pub fn cell_volume(&self) -> f64 {
        self.cell_size().powi(self.dim as i32)
    }

    /// Volume of the whole box, `(2W)^d`.
    pub fn domain_volume(&self) -> f64 {
        (2.0 * self.half_width).powi(self.dim as i32)
    }

    pub fn len(&self) -> usize {
        self.cells.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Coordinate of the center of cell `i` along any axis.
    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        -self.half_width + (i as f64 + 0.5) * self.cell_size()
    }

    /// Splits a flat index into per-axis indices.
    #[inline]
    pub fn unravel(&self, mut index: usize) -> [usize; 3] {
        let mut out = [0; 3];
        for axis in (0..self.dim).rev() {
            out[axis] = index % self.cells;
            index /= self.cells;
        }
        out
    }

    #[inline]
    pub fn ravel(&self, multi: [usize; 3]) -> usize {
        (0..self.dim).fold(0, |acc, axis| acc * self.cells + multi[axis])
    }

    #[inline]
    pub fn center(&self, index: usize) -> Point {
        let multi = self.unravel(index);
        let mut p = [0.0; 3];
        for axis in 0..self.dim {
            p[axis] = self.coord(multi[axis]);
        }
        p
    }

    /// Iterator over all cell centers in storage order.
    pub fn centers(&self) -> impl Iterator<Item = Point> + '_ {
        (0..self.len()).map(move |i| self.center(i))
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "d={} n={} W={}", self.dim, self.cells, self.half_width)
    }
}

/// A field sampled at the cell centers of a grid.
///
/// Activity fields (the iterates of the process) live in `[0, 1]`; use
/// [`ScalarField::clamped`] when constructing them. Convolution outputs are
/// stored in the same type without clamping.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    spec: GridSpec,
    values: Vec<f64>,
    time: usize,
}

impl ScalarField {
    pub fn zeros(spec: GridSpec) -> Self {
        ScalarField {
            spec,
            values: vec![0.0; spec.len()],
            time: 0,
        }
    }

    pub fn from_values(spec: GridSpec, values: Vec<f64>, time: usize) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::config(
                "values",
                format!("expected {} values for {spec}, got {}", spec.len(), values.len()),
            ));
        }
        Ok(ScalarField { spec, values, time })
    }

    /// Samples `f` at every cell center and clamps the result to `[0, 1]`.
    pub fn from_fn(spec: GridSpec, f: impl Fn(&Point) -> f64) -> Self {
        let values = spec.centers().map(|p| clamp_unit(f(&p))).collect();
        ScalarField {
            spec,
            values,
            time: 0,
        }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn time(&self) -> usize {
        self.time
    }

    pub fn with_time(mut self, time: usize) -> Self {
        self.time = time;
        self
    }

    pub fn clamped(mut self) -> Self {
        for v in &mut self.values {
            *v = clamp_unit(*v);
        }
        self
    }

    /// `h^d * sum(values)`.
    pub fn mass(&self) -> f64 {
        self.spec.cell_volume() * self.values.iter().sum::<f64>()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `h^d * sum |a - b|`.
    pub fn l1_distance(&self, other: &ScalarField) -> f64 {
        let sum: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .sum();
        sum * self.spec.cell_volume()
    }

    /// Radius of the smallest origin-centered ball containing every cell center
    /// with a nonzero value.
    pub fn support_radius(&self) -> f64 {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, _)| norm(&self.spec.center(i)))
            .fold(0.0, f64::max)
    }

    /// Value at a multi-index, zero outside the grid.
    #[inline]
    pub fn get(&self, multi: [isize; 3]) -> f64 {
        let n = self.spec.cells as isize;
        let mut index = 0usize;
        for &m in multi.iter().take(self.spec.dim) {
            if m < 0 || m >= n {
                return 0.0;
            }
            index = index * self.spec.cells + m as usize;
        }
        self.values[index]
    }

    /// Multilinear interpolation between cell centers. Cells beyond the grid
    /// read as zero.
    pub fn interpolate(&self, p: &Point) -> f64 {
        let h = self.spec.cell_size();
        let w = self.spec.half_width;
        let dim = self.spec.dim;
        let mut base = [0isize; 3];
        let mut frac = [0.0; 3];
        for axis in 0..dim {
            let q = (p[axis] + w) / h - 0.5;
            let fl = q.floor();
            if fl < -1.0 || fl > self.spec.cells as f64 {
                return 0.0;
            }
            base[axis] = fl as isize;
            frac[axis] = q - fl;
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << dim) {
            let mut weight = 1.0;
            let mut multi = [0isize; 3];
            for axis in 0..dim {
                let bit = (corner >> axis) & 1;
                multi[axis] = base[axis] + bit as isize;
                weight *= if bit == 1 { frac[axis] } else { 1.0 - frac[axis] };
            }
            if weight != 0.0 {
                acc += weight * self.get(multi);
            }
        }
        acc
    }

    /// Writes the binary dump: one ASCII header line followed by
    /// little-endian `f64` values in storage order.
    pub fn write_dump<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "{DUMP_MAGIC} d={} n={} W={} t={}",
            self.spec.dim, self.spec.cells, self.spec.half_width, self.time
        )?;
        let mut bytes = Vec::with_capacity(self.values.len() * 8);
        for v in &self.values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&bytes)?;
        Ok(())
    }

    pub fn read_dump(bytes: &[u8]) -> Result<Self> {
        let newline = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| malformed(bytes.len(), "header line is not terminated"))?;
        let header = std::str::from_utf8(&bytes[..newline])
            .map_err(|e| malformed(e.valid_up_to(), "header is not UTF-8"))?;
        let mut fields = header.split(' ');
        let magic = format!("{} {}", fields.next().unwrap_or(""), fields.next().unwrap_or(""));
        if magic != DUMP_MAGIC {
            return Err(malformed(0, format!("expected `{DUMP_MAGIC}`")));
        }
        let mut dim = None;
        let mut cells = None;
        let mut half_width = None;
        let mut time = None;
        let mut offset = DUMP_MAGIC.len() + 1;
        for field in fields {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| malformed(offset, format!("expected key=value, got `{field}`")))?;
            let bad = || malformed(offset, format!("bad value for `{key}`"));
            match key {
                "d" => dim = Some(value.parse::<usize>().map_err(|_| bad())?),
                "n" => cells = Some(value.parse::<usize>().map_err(|_| bad())?),
                "W" => half_width = Some(value.parse::<f64>().map_err(|_| bad())?),
                "t" => time = Some(value.parse::<usize>().map_err(|_| bad())?),
                _ => return Err(malformed(offset, format!("unknown header key `{key}`"))),
            }
            offset += field.len() + 1;
        }
        let missing = |k: &str| malformed(newline, format!("header lacks `{k}`"));
        let spec = GridSpec::new(
            dim.ok_or_else(|| missing("d"))?,
            cells.ok_or_else(|| missing("n"))?,
            half_width.ok_or_else(|| missing("W"))?,
        )
        .map_err(|e| malformed(0, e.to_string()))?;
        let time = time.ok_or_else(|| missing("t"))?;

        let body = &bytes[newline + 1..];
        let expected = spec.len() * 8;
        if body.len() != expected {
            let at = newline + 1 + body.len().min(expected);
            return Err(malformed(
                at,
                format!("expected {expected} data bytes, found {}", body.len()),
            ));
        }
        let values = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        ScalarField::from_values(spec, values, time)
    }

    /// CSV with one row per cell: per-axis indices then the value.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let names = ["i", "j", "k"];
        let header: Vec<&str> = names[..self.spec.dim].to_vec();
        writeln!(out, "{},value", header.join(","))?;
        for (index, v) in self.values.iter().enumerate() {
            let multi = self.spec.unravel(index);
            for m in multi.iter().take(self.spec.dim) {
                write!(out, "{m},")?;
            }
            writeln!(out, "{v}")?;
        }
        Ok(())
    }
}

pub const DUMP_MAGIC: &str = "alphacap-grid v1";

fn malformed(offset: usize, reason: impl Into<String>) -> Error {
    Error::MalformedDump {
        offset,
        reason: reason.into(),
    }
}

#[inline]
pub fn clamp_unit(v: f64) -> f64 {
    if v.is_nan() {
        v
    } else {
        v.clamp(0.0, 1.0)
    }
}

#[inline]
pub fn norm(p: &Point) -> f64 {
    (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
}

#[inline]
pub fn dist(a: &Point, b: &Point) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    norm(&d)
}

#[inline]
pub fn dot(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Volume of the unit ball in `R^dim`.
pub fn unit_ball_volume(dim: usize) -> f64 {
    match dim {
        1 => 2.0,
        2 => std::f64::consts::PI,
        3 => 4.0 / 3.0 * std::f64::consts::PI,
        _ => panic!("dimension {dim} unsupported"),
    }
}

/// Radius of the ball in `R^dim` with the given volume.
pub fn ball_radius_for_volume(dim: usize, volume: f64) -> f64 {
    (volume / unit_ball_volume(dim)).powf(1.0 / dim as f64)
}

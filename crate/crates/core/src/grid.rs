//! Periodic torus grids, sampled fields and their discrete Fourier transforms.
//!
//! The torus `[-L/2, L/2)^d` stands in for the whole space; experiments keep
//! supports inside a ball of diameter `L/4` so that wrap-around is negligible.
//!
//! Transform convention: the forward transform carries the factor `1/N^d`,
//!
//! ```text
//! F[k] = N^{-d} * sum_j f[j] * exp(-2 pi i k.j / N),
//! ```
//!
//! so a constant field `c` has `F[0] = c` and Parseval reads
//! `sum_j |f[j]|^2 h^d = L^d * sum_k |F[k]|^2`.

use crate::error::{Error, Result};
use crate::fft;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::{Read, Write};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    n: usize,
    length: f64,
}

impl Grid {
    pub fn new(dim: usize, n: usize, length: f64) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dimension {dim} not in {{1, 2}}")));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "points per axis must be a power of two >= 8, got {n}"
            )));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidGrid(format!("box length must be positive, got {length}")));
        }
        Ok(Self { dim, n, length })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Points per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Total number of lattice points, `N^d`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn shape(&self) -> Vec<usize> {
        vec![self.n; self.dim]
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.n as f64
    }

    /// Quadrature weight of one cell, `(L/N)^d`.
    pub fn cell_weight(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    pub fn total_weight(&self) -> f64 {
        self.cell_weight() * self.len() as f64
    }

    pub fn frequency_spacing(&self) -> f64 {
        2.0 * PI / self.length
    }

    /// Coordinate of lattice index `k` along one axis.
    pub fn coordinate(&self, k: usize) -> f64 {
        -0.5 * self.length + k as f64 * self.spacing()
    }

    pub fn axis_points(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.coordinate(k)).collect()
    }

    /// Axis frequencies in ascending order, `2 pi k / L` for `k = -N/2 .. N/2-1`.
    pub fn frequencies(&self) -> Vec<f64> {
        let n = self.n as i64;
        (-n / 2..n / 2).map(|k| k as f64 * self.frequency_spacing()).collect()
    }

    /// Angular frequency of FFT-ordered index `k` along one axis.
    pub fn wavenumber(&self, k: usize) -> f64 {
        fft::signed_index(k, self.n) as f64 * self.frequency_spacing()
    }

    /// Per-axis lattice indices of a flat row-major index.
    pub fn unravel(&self, flat: usize) -> [usize; 2] {
        match self.dim {
            1 => [flat, 0],
            _ => [flat / self.n, flat % self.n],
        }
    }

    pub fn ravel(&self, idx: [usize; 2]) -> usize {
        match self.dim {
            1 => idx[0],
            _ => idx[0] * self.n + idx[1],
        }
    }

    /// Position of a flat lattice index (unused trailing component is 0).
    pub fn position(&self, flat: usize) -> [f64; 2] {
        let [i, j] = self.unravel(flat);
        match self.dim {
            1 => [self.coordinate(i), 0.0],
            _ => [self.coordinate(i), self.coordinate(j)],
        }
    }

    /// Wave vector of a flat FFT-ordered index.
    pub fn wavevector(&self, flat: usize) -> [f64; 2] {
        let [i, j] = self.unravel(flat);
        match self.dim {
            1 => [self.wavenumber(i), 0.0],
            _ => [self.wavenumber(i), self.wavenumber(j)],
        }
    }

    pub fn wavevector_norm(&self, flat: usize) -> f64 {
        let [a, b] = self.wavevector(flat);
        a.hypot(b)
    }

    /// True for modes carrying an axis Nyquist index; odd-order derivatives zero these.
    pub fn is_nyquist(&self, flat: usize) -> bool {
        let [i, j] = self.unravel(flat);
        i == self.n / 2 || (self.dim == 2 && j == self.n / 2)
    }

    /// Largest axis frequency magnitude, `pi N / L`.
    pub fn nyquist(&self) -> f64 {
        PI * self.n as f64 / self.length
    }

    /// Largest |xi| over the full d-dimensional frequency set.
    pub fn max_wavevector_norm(&self) -> f64 {
        self.nyquist() * (self.dim as f64).sqrt()
    }

    /// Periodic lattice offset of `flat` by `shift` (per-axis, in cells).
    pub fn shifted(&self, flat: usize, shift: [i64; 2]) -> usize {
        let n = self.n as i64;
        let [i, j] = self.unravel(flat);
        let a = (i as i64 + shift[0]).rem_euclid(n) as usize;
        match self.dim {
            1 => a,
            _ => a * self.n + (j as i64 + shift[1]).rem_euclid(n) as usize,
        }
    }

    /// Minimum-image offsets `(-N/2..N/2-1)^d` in cells, in flat order.
    pub fn offsets(&self) -> Vec<[i64; 2]> {
        let n = self.n as i64;
        let axis: Vec<i64> = (-n / 2..n / 2).collect();
        match self.dim {
            1 => axis.iter().map(|&a| [a, 0]).collect(),
            _ => axis
                .iter()
                .flat_map(|&a| axis.iter().map(move |&b| [a, b]))
                .collect(),
        }
    }
}

/// Real-valued samples on a grid, optionally stamped with a time.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
    time: Option<f64>,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch { expected: grid.len(), got: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("field values"));
        }
        Ok(Self { grid, values, time: None })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self { grid, values: vec![0.0; grid.len()], time: None }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self { grid, values: vec![c; grid.len()], time: None }
    }

    /// Samples `f` at every lattice point (second coordinate is 0 in 1-D).
    pub fn from_fn(grid: Grid, f: impl Fn([f64; 2]) -> f64) -> Result<Self> {
        let values = (0..grid.len()).map(|k| f(grid.position(k))).collect();
        Self::new(grid, values)
    }

    pub fn with_time(mut self, t: f64) -> Self {
        self.time = Some(t);
        self
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn time(&self) -> Option<f64> {
        self.time
    }

    /// Pointwise map; fails if the result is not finite.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let mut out = Self::new(self.grid, self.values.iter().map(|&v| f(v)).collect())?;
        out.time = self.time;
        Ok(out)
    }

    pub fn zip_with(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        let mut out = Self::new(self.grid, values)?;
        out.time = self.time;
        Ok(out)
    }

    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_weight()
    }

    pub fn lp_norm(&self, p: f64) -> f64 {
        if p.is_infinite() {
            return self.sup_norm();
        }
        (self.values.iter().map(|v| v.abs().powf(p)).sum::<f64>() * self.grid.cell_weight())
            .powf(1.0 / p)
    }

    pub fn l1_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum::<f64>() * self.grid.cell_weight()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `<self, other>` with the cell quadrature weight.
    pub fn inner(&self, other: &Field) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum::<f64>()
            * self.grid.cell_weight())
    }

    /// CSV export, one row per lattice point: `x[,y],value`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        match self.grid.dim {
            1 => writeln!(w, "x,value")?,
            _ => writeln!(w, "x,y,value")?,
        }
        for (k, v) in self.values.iter().enumerate() {
            let [x, y] = self.grid.position(k);
            match self.grid.dim {
                1 => writeln!(w, "{x:.17e},{v:.17e}")?,
                _ => writeln!(w, "{x:.17e},{y:.17e},{v:.17e}")?,
            }
        }
        Ok(())
    }

    /// Binary layout (little endian): magic `FPMF`, u32 version, u32 d, u32 N,
    /// f64 L, u8 has_time, f64 time, then `N^d` f64 values in row-major order.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(FIELD_MAGIC)?;
        w.write_all(&FIELD_VERSION.to_le_bytes())?;
        w.write_all(&(self.grid.dim as u32).to_le_bytes())?;
        w.write_all(&(self.grid.n as u32).to_le_bytes())?;
        w.write_all(&self.grid.length.to_le_bytes())?;
        w.write_all(&[self.time.is_some() as u8])?;
        w.write_all(&self.time.unwrap_or(0.0).to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != FIELD_MAGIC {
            return Err(Error::Format("bad field magic".into()));
        }
        let version = read_u32(&mut r)?;
        if version != FIELD_VERSION {
            return Err(Error::Format(format!("unsupported field version {version}")));
        }
        let dim = read_u32(&mut r)? as usize;
        let n = read_u32(&mut r)? as usize;
        let length = read_f64(&mut r)?;
        let mut flag = [0u8; 1];
        r.read_exact(&mut flag)?;
        let time = read_f64(&mut r)?;
        let grid = Grid::new(dim, n, length)?;
        let values = (0..grid.len()).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>()?;
        let field = Self::new(grid, values)?;
        Ok(if flag[0] != 0 { field.with_time(time) } else { field })
    }
}

const FIELD_MAGIC: &[u8; 4] = b"FPMF";
const FIELD_VERSION: u32 = 1;

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// Fourier coefficients of a field in FFT order, forward-normalized by `1/N^d`.
#[derive(Clone, Debug)]
pub struct Spectrum {
    grid: Grid,
    coeffs: Vec<Complex64>,
}

impl Spectrum {
    pub fn new(grid: Grid, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(Error::ShapeMismatch { expected: grid.len(), got: coeffs.len() });
        }
        Ok(Self { grid, coeffs })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    /// Multiplies every coefficient by `m(xi)`.
    pub fn apply_multiplier(&mut self, m: impl Fn([f64; 2]) -> Complex64) {
        let grid = self.grid;
        for (k, c) in self.coeffs.iter_mut().enumerate() {
            *c *= m(grid.wavevector(k));
        }
    }
}

pub fn transform_forward(f: &Field) -> Spectrum {
    let coeffs = fft::forward_real(&f.values, &f.grid.shape());
    Spectrum { grid: f.grid, coeffs }
}

pub fn transform_inverse(s: &Spectrum, grid: &Grid) -> Result<Field> {
    if s.grid != *grid {
        return Err(Error::GridMismatch);
    }
    let values = fft::inverse_real(&s.coeffs, &grid.shape());
    Field::new(*grid, values)
}

/// Spectral partial derivative along `axis` (0 or 1). Nyquist modes are dropped.
pub fn spectral_derivative(f: &Field, axis: usize) -> Result<Field> {
    let mut s = transform_forward(f);
    let grid = *f.grid();
    for (k, c) in s.coeffs.iter_mut().enumerate() {
        if grid.is_nyquist(k) {
            *c = Complex64::default();
        } else {
            *c *= Complex64::new(0.0, grid.wavevector(k)[axis]);
        }
    }
    let mut out = transform_inverse(&s, &grid)?;
    out.time = f.time;
    Ok(out)
}

/// `|grad f|^2` via spectral differentiation.
pub fn gradient_norm_sq(f: &Field) -> Result<Field> {
    let mut acc = vec![0.0; f.grid.len()];
    for axis in 0..f.grid.dim {
        let g = spectral_derivative(f, axis)?;
        acc.iter_mut().zip(g.values()).for_each(|(a, v)| *a += v * v);
    }
    Field::new(f.grid, acc)
}

/// Spectral Laplacian.
pub fn spectral_laplacian(f: &Field) -> Result<Field> {
    let mut s = transform_forward(f);
    let grid = *f.grid();
    for (k, c) in s.coeffs.iter_mut().enumerate() {
        let xi = grid.wavevector_norm(k);
        *c *= -xi * xi;
    }
    transform_inverse(&s, &grid)
}

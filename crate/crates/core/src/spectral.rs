//! Periodic grid, discrete Fourier analysis and Fourier-multiplier operators.
//!
//! Conventions used throughout the crate:
//!
//! * nodes `x_j = -L/2 + j dx`, `j = 0..n`;
//! * forward transform `û_k = Σ_j u_j exp(-2πi jk/n)` (unnormalized), inverse
//!   carries the `1/n`; Parseval reads `∫u² = (L/n²) Σ|û_k|²`;
//! * wavenumbers `ξ_k = 2πk/L` with `k ∈ {-n/2, …, n/2-1}` stored in FFT order;
//! * Hilbert transform symbol `i·sgn(ξ)` so that `H∂ₓ = -Dₓ`;
//! * multipliers with an odd (purely imaginary) symbol zero the Nyquist mode.

use std::f64::consts::PI;
use std::fmt;
use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Human-readable statement of the numerical conventions, embedded in reports.
pub const CONVENTIONS: &str = "hilbert_symbol = i*sgn(xi) (H d/dx = -|D|, sigma_H(0) = 0)\n\
transform = forward unnormalized exp(-2 pi i jk/n), inverse scaled by 1/n\n\
parseval = int u^2 dx = (L/n^2) sum |u_k|^2\n\
nyquist = zeroed by odd-symbol multipliers\n\
dealias = 2/3 rule, modes with |k| > n/3 removed from the quadratic term\n";

/// Uniform periodic grid on `[-L/2, L/2)`.
pub struct Grid {
    n: usize,
    length: f64,
    dx: f64,
    nodes: Vec<f64>,
    wavenumbers: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("n", &self.n)
            .field("length", &self.length)
            .field("dx", &self.dx)
            .finish()
    }
}

impl Grid {
    /// Builds a grid with `n` nodes (a power of two, at least 16) on a box of length `length`.
    pub fn new(n: usize, length: f64) -> Result<Arc<Grid>> {
        if n < 16 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "node count must be a power of two >= 16, got {n}"
            )));
        }
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "domain length must be positive and finite, got {length}"
            )));
        }
        let dx = length / n as f64;
        let nodes = (0..n).map(|j| -0.5 * length + j as f64 * dx).collect();
        let base = 2.0 * PI / length;
        let wavenumbers = (0..n).map(|j| base * mode_number(j, n) as f64).collect();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        Ok(Arc::new(Grid {
            n,
            length,
            dx,
            nodes,
            wavenumbers,
            forward,
            inverse,
        }))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Wavenumbers in FFT order (`0, 1, …, n/2-1, -n/2, …, -1` times `2π/L`).
    pub fn wavenumbers(&self) -> &[f64] {
        &self.wavenumbers
    }

    /// Wavenumbers sorted ascending, `-n/2 … n/2-1` times `2π/L`.
    pub fn wavenumbers_ascending(&self) -> Vec<f64> {
        let mut xi = self.wavenumbers.clone();
        xi.sort_by(|a, b| a.partial_cmp(b).unwrap());
        xi
    }

    /// Signed integer mode number of FFT slot `index`.
    pub fn mode(&self, index: usize) -> i64 {
        mode_number(index, self.n)
    }

    pub fn nyquist_index(&self) -> usize {
        self.n / 2
    }

    /// Largest mode number kept by the 2/3 rule.
    pub fn dealias_cutoff(&self) -> i64 {
        (self.n / 3) as i64
    }

    /// `true` for slots retained by the 2/3 rule.
    pub fn dealias_mask(&self) -> Vec<bool> {
        let cut = self.dealias_cutoff();
        (0..self.n).map(|j| self.mode(j).abs() <= cut).collect()
    }

    pub fn same_as(&self, other: &Grid) -> bool {
        self.n == other.n && self.length == other.length
    }

    pub fn scratch_len(&self) -> usize {
        self.forward
            .get_inplace_scratch_len()
            .max(self.inverse.get_inplace_scratch_len())
    }

    /// Unnormalized forward transform of real samples.
    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        assert_eq!(values.len(), self.n);
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward.process(&mut buf);
        buf
    }

    /// Inverse transform (with the `1/n` factor), keeping the real part.
    pub fn inverse(&self, spectrum: &[Complex64]) -> Vec<f64> {
        assert_eq!(spectrum.len(), self.n);
        let mut buf = spectrum.to_vec();
        self.inverse.process(&mut buf);
        let scale = 1.0 / self.n as f64;
        buf.iter().map(|z| z.re * scale).collect()
    }

    /// In-place forward transform with caller-owned scratch.
    pub fn forward_in_place(&self, buf: &mut [Complex64], scratch: &mut [Complex64]) {
        self.forward.process_with_scratch(buf, scratch);
    }

    /// In-place inverse transform with caller-owned scratch; includes the `1/n` factor.
    pub fn inverse_in_place(&self, buf: &mut [Complex64], scratch: &mut [Complex64]) {
        self.inverse.process_with_scratch(buf, scratch);
        let scale = 1.0 / self.n as f64;
        for z in buf.iter_mut() {
            *z *= scale;
        }
    }

    /// Wraps `x` into `[-L/2, L/2)`.
    pub fn wrap(&self, x: f64) -> f64 {
        let l = self.length;
        let y = (x + 0.5 * l).rem_euclid(l) - 0.5 * l;
        if y >= 0.5 * l {
            y - l
        } else {
            y
        }
    }

    /// Periodic distance-preserving offset `x - center` wrapped into `[-L/2, L/2)`.
    pub fn periodic_offset(&self, x: f64, center: f64) -> f64 {
        self.wrap(x - center)
    }
}

fn mode_number(index: usize, n: usize) -> i64 {
    if index < n / 2 {
        index as i64
    } else {
        index as i64 - n as i64
    }
}

/// Real grid function with a lazily computed spectrum.
#[derive(Clone)]
pub struct Field {
    grid: Arc<Grid>,
    values: Vec<f64>,
    spectrum: OnceLock<Vec<Complex64>>,
}

impl fmt::Debug for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Field")
            .field("grid", &self.grid)
            .field("sup", &self.sup())
            .finish()
    }
}

/// Norms available through [`Field::norm`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Norm {
    L2,
    H1,
    H2,
    /// `‖D^{1/2} u‖_{L²}`.
    HalfSeminorm,
    Linf,
    /// Sup over nodes inside `[a, b]`.
    LinfRestricted { a: f64, b: f64 },
}

impl Field {
    /// Wraps samples; rejects non-finite values and length mismatches.
    pub fn new(grid: &Arc<Grid>, values: Vec<f64>) -> Result<Field> {
        if values.len() != grid.n() {
            return Err(Error::InvalidArgument(format!(
                "expected {} samples, got {}",
                grid.n(),
                values.len()
            )));
        }
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite sample at node {j}"
            )));
        }
        Ok(Field {
            grid: Arc::clone(grid),
            values,
            spectrum: OnceLock::new(),
        })
    }

    pub fn zeros(grid: &Arc<Grid>) -> Field {
        Field {
            grid: Arc::clone(grid),
            values: vec![0.0; grid.n()],
            spectrum: OnceLock::new(),
        }
    }

    /// Samples `f` at the grid nodes.
    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(f64) -> f64) -> Result<Field> {
        Field::new(grid, grid.nodes().iter().map(|&x| f(x)).collect())
    }

    /// Builds a real field from arbitrary spectral data; the stored spectrum is the
    /// Hermitian part, i.e. exactly the transform of the real samples.
    pub fn from_spectrum(grid: &Arc<Grid>, spectrum: Vec<Complex64>) -> Field {
        assert_eq!(spectrum.len(), grid.n());
        let n = grid.n();
        let mut sym = vec![Complex64::new(0.0, 0.0); n];
        for k in 0..n {
            let mirror = (n - k) % n;
            sym[k] = 0.5 * (spectrum[k] + spectrum[mirror].conj());
        }
        let values = grid.inverse(&sym);
        let cache = OnceLock::new();
        let _ = cache.set(sym);
        Field {
            grid: Arc::clone(grid),
            values,
            spectrum: cache,
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn spectrum(&self) -> &[Complex64] {
        self.spectrum.get_or_init(|| self.grid.forward(&self.values))
    }

    fn check_grid(&self, other: &Field) {
        assert!(
            self.grid.same_as(&other.grid),
            "fields live on different grids"
        );
    }

    /// Applies a Fourier multiplier. `odd` marks purely imaginary symbols, for
    /// which the Nyquist mode is zeroed.
    pub fn apply_symbol(&self, odd: bool, symbol: impl Fn(f64) -> Complex64) -> Field {
        let xi = self.grid.wavenumbers();
        let mut spec: Vec<Complex64> = self
            .spectrum()
            .iter()
            .zip(xi)
            .map(|(&c, &k)| c * symbol(k))
            .collect();
        if odd {
            spec[self.grid.nyquist_index()] = Complex64::new(0.0, 0.0);
        }
        Field::from_spectrum(&self.grid, spec)
    }

    /// Spectral derivative of order 1, 2 or 3 (symbol `(iξ)^k`).
    pub fn derivative(&self, order: u32) -> Result<Field> {
        if !(1..=3).contains(&order) {
            return Err(Error::InvalidArgument(format!(
                "derivative order must be 1, 2 or 3, got {order}"
            )));
        }
        Ok(self.derivative_unchecked(order))
    }

    pub(crate) fn derivative_unchecked(&self, order: u32) -> Field {
        let i = Complex64::new(0.0, 1.0);
        self.apply_symbol(order % 2 == 1, |xi| (i * xi).powu(order))
    }

    /// Hilbert transform, symbol `i·sgn(ξ)`.
    pub fn hilbert(&self) -> Field {
        self.apply_symbol(true, |xi| {
            if xi > 0.0 {
                Complex64::new(0.0, 1.0)
            } else if xi < 0.0 {
                Complex64::new(0.0, -1.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }

    /// `Dₓ^s`, symbol `|ξ|^s`; `s = 0` is the identity.
    pub fn fractional_derivative(&self, s: f64) -> Result<Field> {
        if !(s >= 0.0) || !s.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "fractional order must be finite and >= 0, got {s}"
            )));
        }
        if s == 0.0 {
            return Ok(self.clone());
        }
        Ok(self.apply_symbol(false, |xi| Complex64::new(xi.abs().powf(s), 0.0)))
    }

    /// 2/3-rule truncation: modes with `|k| > n/3` are removed.
    pub fn dealias(&self) -> Field {
        let mask = self.grid.dealias_mask();
        let spec = self
            .spectrum()
            .iter()
            .zip(&mask)
            .map(|(&c, &keep)| if keep { c } else { Complex64::new(0.0, 0.0) })
            .collect();
        Field::from_spectrum(&self.grid, spec)
    }

    /// Periodic translate `u(· - s)` by spectral phase shift.
    pub fn shift(&self, s: f64) -> Field {
        let nyq = self.grid.nyquist_index();
        let xi = self.grid.wavenumbers();
        let mut spec: Vec<Complex64> = self
            .spectrum()
            .iter()
            .zip(xi)
            .map(|(&c, &k)| c * Complex64::from_polar(1.0, -k * s))
            .collect();
        spec[nyq] = self.spectrum()[nyq] * (xi[nyq] * s).cos();
        Field::from_spectrum(&self.grid, spec)
    }

    /// Trigonometric interpolant evaluated at an arbitrary point (periodic).
    pub fn eval_at(&self, x: f64) -> f64 {
        let spec = self.spectrum();
        let grid = &self.grid;
        let offset = x + 0.5 * grid.length();
        let nyq = grid.nyquist_index();
        let mut acc = 0.0;
        for (k, (&c, &xi)) in spec.iter().zip(grid.wavenumbers()).enumerate() {
            if k == nyq {
                acc += c.re * (xi * offset).cos();
            } else {
                acc += (c * Complex64::from_polar(1.0, xi * offset)).re;
            }
        }
        acc / grid.n() as f64
    }

    /// Trapezoidal quadrature `∫u`.
    pub fn integral(&self) -> f64 {
        self.grid.dx() * self.values.iter().sum::<f64>()
    }

    /// `∫ u v`.
    pub fn inner(&self, other: &Field) -> f64 {
        self.check_grid(other);
        self.grid.dx()
            * self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a * b)
                .sum::<f64>()
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// `(L/n²) Σ w(ξ) |û|²`, the spectral quadratic form with weight `w`.
    pub(crate) fn spectral_quadratic(&self, weight: impl Fn(f64) -> f64) -> f64 {
        let n = self.grid.n() as f64;
        let scale = self.grid.length() / (n * n);
        scale
            * self
                .spectrum()
                .iter()
                .zip(self.grid.wavenumbers())
                .map(|(c, &xi)| weight(xi) * c.norm_sqr())
                .sum::<f64>()
    }

    pub fn norm(&self, kind: Norm) -> Result<f64> {
        let l2sq = || self.inner(self);
        Ok(match kind {
            Norm::L2 => l2sq().sqrt(),
            Norm::H1 => (l2sq() + self.spectral_quadratic(|xi| xi * xi)).sqrt(),
            Norm::H2 => {
                (l2sq() + self.spectral_quadratic(|xi| xi * xi + xi.powi(4))).sqrt()
            }
            Norm::HalfSeminorm => self.spectral_quadratic(|xi| xi.abs()).sqrt(),
            Norm::Linf => self.sup(),
            Norm::LinfRestricted { a, b } => {
                let half = 0.5 * self.grid.length();
                if !(a <= b) || a < -half || b > half {
                    return Err(Error::InvalidArgument(format!(
                        "restriction [{a}, {b}] is not inside the domain [{}, {}]",
                        -half, half
                    )));
                }
                self.grid
                    .nodes()
                    .iter()
                    .zip(&self.values)
                    .filter(|(&x, _)| x >= a && x <= b)
                    .fold(0.0_f64, |m, (_, v)| m.max(v.abs()))
            }
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            grid: Arc::clone(&self.grid),
            values: self.values.iter().map(|&v| f(v)).collect(),
            spectrum: OnceLock::new(),
        }
    }

    pub fn zip_with(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        self.check_grid(other);
        Field {
            grid: Arc::clone(&self.grid),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            spectrum: OnceLock::new(),
        }
    }

    pub fn add(&self, other: &Field) -> Field {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Field {
        self.zip_with(other, |a, b| a - b)
    }

    /// Pointwise product.
    pub fn mul(&self, other: &Field) -> Field {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn scale(&self, a: f64) -> Field {
        self.map(|v| a * v)
    }

    /// Reflection `u(-x)` on the symmetric grid (node `j` ↔ node `n-j`).
    pub fn reflect(&self) -> Field {
        let n = self.grid.n();
        let values = (0..n).map(|j| self.values[(n - j) % n]).collect();
        Field {
            grid: Arc::clone(&self.grid),
            values,
            spectrum: OnceLock::new(),
        }
    }
}

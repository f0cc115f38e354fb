//! Smooth cutoff χ, moving weights Ψ, localized mass/energy functionals, the
//! R-sweeps measuring their almost-monotonicity defects, and numerical probes
//! of the Hilbert-transform commutator estimates.

use std::sync::{Arc, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{mass, energy, TimeSeries, Trajectory};
use crate::modulation::smoothed_derivative;
use crate::spectral::{Field, Grid, Norm};

/// Default width exponent of the moving cutoff.
pub const THETA: f64 = 0.75;
/// Default drift of the moving cutoff.
pub const VARTHETA: f64 = 0.5;
/// Default localization radius for the (loc) hypothesis check.
pub const R0: f64 = 10.0;
/// Smallness threshold of the (loc) hypothesis, `2⁻⁶`.
pub const LOC_THRESHOLD: f64 = 1.0 / 64.0;
/// Lower bound on `ẋ` assumed by the monotonicity statements.
pub const MIN_SPEED: f64 = 5.0 / 6.0;

// 8-point Gauss–Legendre on [−1, 1]
const GL_NODES: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329_0,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL_WEIGHTS: [f64; 4] = [
    0.362_683_783_378_362_0,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

fn gauss_legendre(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc = 0.0;
    for (x, w) in GL_NODES.iter().zip(GL_WEIGHTS) {
        acc += w * (f(mid - half * x) + f(mid + half * x));
    }
    half * acc
}

fn bump(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        0.0
    } else {
        (-1.0 / (x * (1.0 - x))).exp()
    }
}

/// Smooth step `χ` with `χ′ = c·exp(−1/(x(1−x)))` on `(0, 1)`.
#[derive(Debug, Clone)]
pub struct Chi {
    norm: f64,
    // cumulative integrals of the unnormalized bump at the table nodes
    table: Vec<f64>,
}

const CHI_CELLS: usize = 2048;

impl Chi {
    fn build() -> Chi {
        let h = 1.0 / CHI_CELLS as f64;
        let mut table = Vec::with_capacity(CHI_CELLS + 1);
        let mut acc = 0.0;
        table.push(0.0);
        for i in 0..CHI_CELLS {
            acc += gauss_legendre(bump, i as f64 * h, (i + 1) as f64 * h);
            table.push(acc);
        }
        Chi { norm: 1.0 / acc, table }
    }

    /// Normalization constant `c` with `∫₀¹ χ′ = 1`.
    pub fn normalization(&self) -> f64 {
        self.norm
    }

    pub fn value(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x >= 1.0 {
            return 1.0;
        }
        let h = 1.0 / CHI_CELLS as f64;
        let i = ((x / h) as usize).min(CHI_CELLS - 1);
        let left = i as f64 * h;
        (self.table[i] + gauss_legendre(bump, left, x)) * self.norm
    }

    /// `χ^{(k)}(x)` for `k ≤ 3` (`k = 0` is the value); `χ′ = e^g` with `g = −1/(x(1−x))`.
    pub fn derivative(&self, x: f64, k: u32) -> f64 {
        if k == 0 {
            return self.value(x);
        }
        if x <= 0.0 || x >= 1.0 {
            return 0.0;
        }
        // b = e^{g}, g = −1/p, p = x(1−x)
        let p = x * (1.0 - x);
        let dp = 1.0 - 2.0 * x;
        let g1 = dp / (p * p);
        let g2 = (-2.0 * p * p - 2.0 * p * dp * dp) / p.powi(4);
        let b = bump(x) * self.norm;
        match k {
            1 => b,
            2 => b * g1,
            3 => b * (g1 * g1 + g2),
            _ => panic!("derivative order {k} not supported"),
        }
    }
}

/// The shared cutoff table.
pub fn make_chi() -> &'static Chi {
    static CHI: OnceLock<Chi> = OnceLock::new();
    CHI.get_or_init(Chi::build)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// Transition starting at `x₀ + R`.
    Right,
    /// Transition starting at `x₀ − 2R`.
    Left,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffRecord {
    pub radius: f64,
    pub vartheta: f64,
    pub t0: f64,
    pub x0: f64,
    pub theta: f64,
    pub side: Side,
}

impl CutoffRecord {
    pub fn new(radius: f64, vartheta: f64, t0: f64, x0: f64, side: Side) -> Result<CutoffRecord> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::InvalidArgument(format!("radius must be positive, got {radius}")));
        }
        if !(0.375..=0.625).contains(&vartheta) {
            return Err(Error::InvalidArgument(format!(
                "drift must lie in [3/8, 5/8], got {vartheta}"
            )));
        }
        if !t0.is_finite() || !x0.is_finite() {
            return Err(Error::InvalidArgument("t0 and x0 must be finite".into()));
        }
        Ok(CutoffRecord {
            radius,
            vartheta,
            t0,
            x0,
            theta: THETA,
            side,
        })
    }

    /// Exploratory override of the width exponent (default 3/4).
    pub fn with_theta(mut self, theta: f64) -> Result<CutoffRecord> {
        if !(theta > 0.5 && theta < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "width exponent must lie in (1/2, 1), got {theta}"
            )));
        }
        self.theta = theta;
        Ok(self)
    }

    pub fn width(&self, t: f64) -> f64 {
        (self.radius + (self.t0 - t).abs() / 8.0).powf(self.theta)
    }

    pub fn center(&self, t: f64) -> f64 {
        let base = match self.side {
            Side::Right => self.x0 + self.radius,
            Side::Left => self.x0 - 2.0 * self.radius,
        };
        base + self.vartheta * (t - self.t0)
    }
}

/// `Ψ(t, x) = χ((x − center(t)) / (R + |t₀ − t|/8)^θ)`.
pub fn eval_psi(cut: &CutoffRecord, t: f64, x: f64) -> f64 {
    make_chi().value((x - cut.center(t)) / cut.width(t))
}

/// `Ψ(t, ·)` at the nodes of `grid`, whose origin sits at lab position `origin`.
/// The box is treated as a window of the line (no wrapping).
pub fn psi_on_grid(cut: &CutoffRecord, t: f64, grid: &Grid, origin: f64) -> Vec<f64> {
    let chi = make_chi();
    let (c, w) = (cut.center(t), cut.width(t));
    grid.nodes().iter().map(|&x| chi.value((x + origin - c) / w)).collect()
}

/// Pointwise `½u_x² − (γ/2)uHu_x − u³/6`, with `Hu_x` evaluated globally.
pub fn energy_density(u: &Field, gamma: f64) -> Vec<f64> {
    let ux = u.derivative_unchecked(1);
    let hux = ux.hilbert();
    u.values()
        .iter()
        .zip(ux.values().iter().zip(hux.values()))
        .map(|(&v, (&d, &h))| 0.5 * d * d - 0.5 * gamma * v * h - v * v * v / 6.0)
        .collect()
}

fn weighted(dx: f64, density: impl Iterator<Item = f64>, weight: &[f64]) -> f64 {
    dx * density.zip(weight).map(|(d, w)| d * w).sum::<f64>()
}

/// `½∫u²Ψ(t, ·)`.
pub fn functional_i(u: &Field, cut: &CutoffRecord, t: f64, origin: f64) -> f64 {
    let w = psi_on_grid(cut, t, u.grid(), origin);
    0.5 * weighted(u.grid().dx(), u.values().iter().map(|v| v * v), &w)
}

/// `∫(½u_x² − (γ/2)uHu_x − u³/6)Ψ(t, ·)`.
pub fn functional_j(u: &Field, cut: &CutoffRecord, gamma: f64, t: f64, origin: f64) -> f64 {
    let w = psi_on_grid(cut, t, u.grid(), origin);
    weighted(u.grid().dx(), energy_density(u, gamma).into_iter(), &w)
}

/// `H^{R,r}` (weight `χ((x + 2R)/R^{3/4})`) or `H^{R,l}` (the complement),
/// evaluated on `u(· + xshift)`; the offset is wrapped around the box.
pub fn functional_h(
    u: &Field,
    radius: f64,
    side: Side,
    theta0: f64,
    gamma: f64,
    xshift: f64,
) -> Result<f64> {
    if theta0 < 4.0 {
        return Err(Error::InvalidArgument(format!("theta0 must be >= 4, got {theta0}")));
    }
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument(format!("radius must be positive, got {radius}")));
    }
    let grid = u.grid();
    let chi = make_chi();
    let width = radius.powf(THETA);
    let weight: Vec<f64> = grid
        .nodes()
        .iter()
        .map(|&x| {
            let r = chi.value((grid.wrap(x - xshift) + 2.0 * radius) / width);
            match side {
                Side::Right => r,
                Side::Left => 1.0 - r,
            }
        })
        .collect();
    let density = energy_density(u, gamma)
        .into_iter()
        .zip(u.values())
        .map(|(e, v)| e + theta0 * v * v);
    Ok(weighted(grid.dx(), density, &weight))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalRecord {
    pub t: f64,
    pub radius: f64,
    pub i_val: f64,
    pub j_val: f64,
    pub h_right: f64,
    pub h_left: f64,
    pub theta0: f64,
    /// `H_r + H_l − (2θ₀M + E)`, zero up to round-off.
    pub partition_defect: f64,
}

/// All functionals of `u` at time `t` for one cutoff; `xshift` locates the
/// wave inside the field's own coordinates for `H`.
pub fn functional_record(
    u: &Field,
    cut: &CutoffRecord,
    gamma: f64,
    t: f64,
    origin: f64,
    theta0: f64,
    xshift: f64,
) -> Result<FunctionalRecord> {
    let h_right = functional_h(u, cut.radius, Side::Right, theta0, gamma, xshift)?;
    let h_left = functional_h(u, cut.radius, Side::Left, theta0, gamma, xshift)?;
    Ok(FunctionalRecord {
        t,
        radius: cut.radius,
        i_val: functional_i(u, cut, t, origin),
        j_val: functional_j(u, cut, gamma, t, origin),
        h_right,
        h_left,
        theta0,
        partition_defect: h_right + h_left - (2.0 * theta0 * mass(u) + energy(u, gamma)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Functional {
    /// `I^{+R}(t₀) − I^{+R}(t)`, `t ≤ t₀`.
    IRight,
    /// `I^{−2R}(t) − I^{−2R}(t₀)`, `t ≥ t₀`.
    ILeft,
    /// `(4I + J)^{+R}(t₀) − (4I + J)^{+R}(t)`, `t ≤ t₀`.
    #[serde(rename = "combo4ij")]
    Combo4IJ,
    /// `H^{R,r}(u(t, · + x(t))) − H^{R,r}(u(t₀, · + x(t₀)))`, `t ≥ t₀`.
    HRight,
}

impl Functional {
    pub fn name(self) -> &'static str {
        match self {
            Functional::IRight => "I_right",
            Functional::ILeft => "I_left",
            Functional::Combo4IJ => "combo4IJ",
            Functional::HRight => "H_right",
        }
    }

    // whether t₀ is the last (backward-in-time statement) or first sample
    fn looks_backward(self) -> bool {
        matches!(self, Functional::IRight | Functional::Combo4IJ)
    }
}

#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub vartheta: f64,
    /// Override of `t₀`; defaults to the last record for backward statements
    /// and the first for forward ones.
    pub t0: Option<f64>,
    /// Weight in `H`; defaults to `4 + sup_t‖u(t)‖_{H¹}`.
    pub theta0: Option<f64>,
    pub theta: f64,
    pub r0: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            vartheta: VARTHETA,
            t0: None,
            theta0: None,
            theta: THETA,
            r0: R0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub radius: f64,
    pub t: f64,
    pub t0: f64,
    pub value: f64,
    pub defect: f64,
}

#[derive(Debug, Clone)]
pub struct HypothesisReport {
    pub min_speed: f64,
    pub speed_ok: bool,
    /// `sup_t ‖u(t)‖_{L∞(|x − x(t)| > R₀)}`.
    pub loc_sup: f64,
    pub loc_ok: bool,
    pub gamma_ok: bool,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub functional: Functional,
    pub t0: f64,
    pub theta0: f64,
    pub rows: Vec<SweepRow>,
    /// `(R, max_t defect⁺)`.
    pub max_defects: Vec<(f64, f64)>,
    /// Least-squares slope of `log defect⁺` against `log R` (needs two positive defects).
    pub slope: Option<f64>,
    /// Smallest `K` with `defect⁺ ≤ K·R^{−1/4}` over the sweep.
    pub k_min: f64,
    pub hypotheses: HypothesisReport,
}

impl SweepReport {
    /// Fitted exponent no larger than `−1/4 + slack`, or no positive defect at all.
    pub fn slope_within(&self, slack: f64) -> bool {
        self.slope.map_or(true, |s| s <= -0.25 + slack)
    }
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

struct Sample<'a> {
    t: f64,
    origin: f64,
    field: &'a Field,
    x: f64,
}

fn check_hypotheses(samples: &[Sample<'_>], x_of_t: &TimeSeries, gamma: f64, r0: f64) -> Result<HypothesisReport> {
    let times = x_of_t.times();
    let speeds = smoothed_derivative(times, x_of_t.values());
    let min_speed = if times.len() < 2 {
        f64::NAN
    } else {
        speeds.iter().cloned().fold(f64::INFINITY, f64::min)
    };
    let mut loc_sup = 0.0_f64;
    for s in samples {
        let grid = s.field.grid();
        for (&x, &v) in grid.nodes().iter().zip(s.field.values()) {
            if (x + s.origin - s.x).abs() > r0 {
                loc_sup = loc_sup.max(v.abs());
            }
        }
    }
    let speed_ok = !(min_speed < MIN_SPEED);
    let loc_ok = loc_sup <= LOC_THRESHOLD;
    let gamma_ok = gamma.abs() <= 0.5;
    let mut warnings = Vec::new();
    if !speed_ok {
        warnings.push(format!("min x'(t) = {min_speed:.4} is below 5/6"));
    }
    if !loc_ok {
        warnings.push(format!(
            "sup |u| outside |x - x(t)| > {r0} is {loc_sup:.3e}, above 2^-6"
        ));
    }
    if !gamma_ok {
        warnings.push(format!("|gamma| = {} exceeds 1/2", gamma.abs()));
    }
    Ok(HypothesisReport {
        min_speed,
        speed_ok,
        loc_sup,
        loc_ok,
        gamma_ok,
        warnings,
    })
}

/// Measures the almost-monotonicity defect of `functional` over `radii`.
///
/// `x_of_t` is the lab-frame position of the wave; snapshots are placed on the
/// line using each record's `frame_shift`.
pub fn monotonicity_sweep(
    trajectory: &Trajectory,
    x_of_t: &TimeSeries,
    radii: &[f64],
    functional: Functional,
    opts: &SweepOptions,
) -> Result<SweepReport> {
    let samples: Vec<Sample<'_>> = trajectory
        .records
        .iter()
        .map(|r| {
            r.snapshot
                .as_ref()
                .map(|f| Sample {
                    t: r.t,
                    origin: r.frame_shift,
                    field: f,
                    x: x_of_t.eval(r.t),
                })
                .ok_or_else(|| Error::InvalidArgument("trajectory has no snapshots".into()))
        })
        .collect::<Result<_>>()?;
    if samples.is_empty() {
        return Err(Error::InvalidArgument("trajectory has no records".into()));
    }
    let gamma = trajectory.gamma;
    let hypotheses = check_hypotheses(&samples, x_of_t, gamma, opts.r0)?;
    let backward = functional.looks_backward();
    let t0 = opts.t0.unwrap_or(if backward {
        samples[samples.len() - 1].t
    } else {
        samples[0].t
    });
    let anchor = samples
        .iter()
        .min_by(|a, b| (a.t - t0).abs().total_cmp(&(b.t - t0).abs()))
        .expect("non-empty");
    let t0 = anchor.t;
    let theta0 = match opts.theta0 {
        Some(v) => v,
        None => {
            let mut sup = 0.0_f64;
            for s in &samples {
                sup = sup.max(s.field.norm(Norm::H1)?);
            }
            4.0 + sup
        }
    };
    let x0 = x_of_t.eval(t0);

    let side = if functional == Functional::ILeft { Side::Left } else { Side::Right };
    let value = |s: &Sample<'_>, radius: f64| -> Result<f64> {
        let cut = CutoffRecord::new(radius, opts.vartheta, t0, x0, side)?.with_theta(opts.theta)?;
        Ok(match functional {
            Functional::IRight | Functional::ILeft => functional_i(s.field, &cut, s.t, s.origin),
            Functional::Combo4IJ => {
                4.0 * functional_i(s.field, &cut, s.t, s.origin)
                    + functional_j(s.field, &cut, gamma, s.t, s.origin)
            }
            Functional::HRight => {
                functional_h(s.field, radius, Side::Right, theta0, gamma, s.x - s.origin)?
            }
        })
    };

    let in_range = |s: &Sample<'_>| if backward { s.t <= t0 } else { s.t >= t0 };
    let mut rows = Vec::new();
    let mut max_defects = Vec::new();
    for &radius in radii {
        let v0 = value(anchor, radius)?;
        let values: Vec<Result<(f64, f64)>> = samples
            .par_iter()
            .filter(|s| in_range(s))
            .map(|s| value(s, radius).map(|v| (s.t, v)))
            .collect();
        let mut worst = 0.0_f64;
        for r in values {
            let (t, v) = r?;
            let defect = match functional {
                Functional::IRight | Functional::Combo4IJ => v0 - v,
                Functional::ILeft | Functional::HRight => v - v0,
            };
            worst = worst.max(defect);
            rows.push(SweepRow {
                radius,
                t,
                t0,
                value: v,
                defect,
            });
        }
        max_defects.push((radius, worst));
    }
    let slope = log_log_slope(&max_defects);
    let k_min = max_defects
        .iter()
        .map(|(r, d)| d * r.powf(0.25))
        .fold(0.0, f64::max);
    Ok(SweepReport {
        functional,
        t0,
        theta0,
        rows,
        max_defects,
        slope,
        k_min,
        hypotheses,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommutatorRatios {
    /// `‖[H, f]u_x‖_{L²}`.
    pub hilbert: f64,
    /// `‖[H∂ₓ, f]u‖_{L²}`.
    pub hilbert_derivative: f64,
    pub f_prime_sup: f64,
    pub u_l2: f64,
    /// `(hilbert + hilbert_derivative) / (‖f′‖_∞‖u‖_{L²})`, zero for a vanishing numerator.
    pub ratio: f64,
}

fn check_pair(f: &Field, u: &Field) -> Result<()> {
    if f.grid().same_as(u.grid()) {
        Ok(())
    } else {
        Err(Error::InvalidArgument("f and u live on different grids".into()))
    }
}

// `[H, f]g = H(fg) − fHg`
fn hilbert_commutator(f: &Field, g: &Field) -> Field {
    f.mul(g).hilbert().sub(&f.mul(&g.hilbert()))
}

fn hilbert_derivative(g: &Field) -> Field {
    g.derivative_unchecked(1).hilbert()
}

/// Both commutators of the first estimate and their ratio to `‖f′‖_∞‖u‖`.
pub fn commutator_defect(f: &Field, u: &Field) -> Result<CommutatorRatios> {
    check_pair(f, u)?;
    let ux = u.derivative_unchecked(1);
    let c1 = hilbert_commutator(f, &ux).norm(Norm::L2)?;
    let c2 = hilbert_derivative(&f.mul(u))
        .sub(&f.mul(&hilbert_derivative(u)))
        .norm(Norm::L2)?;
    let f_prime_sup = f.derivative_unchecked(1).sup();
    let u_l2 = u.norm(Norm::L2)?;
    let denom = f_prime_sup * u_l2;
    // round-off level of the two products
    let floor = 1e-12 * f.sup() * (ux.norm(Norm::L2)? + u_l2) + f64::MIN_POSITIVE;
    let ratio = if c1 + c2 <= floor {
        0.0
    } else if denom > 0.0 {
        (c1 + c2) / denom
    } else {
        return Err(Error::DegenerateInput(format!(
            "commutator norm {:.3e} with vanishing ‖f'‖‖u‖",
            c1 + c2
        )));
    };
    Ok(CommutatorRatios {
        hilbert: c1,
        hilbert_derivative: c2,
        f_prime_sup,
        u_l2,
        ratio,
    })
}

/// `∂ₓ([H, f]u_x)`.
pub fn besov_operator(f: &Field, u: &Field) -> Field {
    hilbert_commutator(f, &u.derivative_unchecked(1)).derivative_unchecked(1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BesovRatio {
    /// `‖∂ₓ([H, f]u_x)‖_{L²}`.
    pub lhs: f64,
    /// `(‖D^{2−ε}f‖_∞ + ‖D^{2+ε}f‖_∞)‖u‖_{L²}`.
    pub rhs: f64,
    pub ratio: f64,
}

/// Both sides of the second commutator estimate for one pair `(f, u)`.
pub fn commutator_derivative_defect(f: &Field, u: &Field, eps: f64) -> Result<BesovRatio> {
    check_pair(f, u)?;
    if !(eps > 0.0 && eps <= 0.5) {
        return Err(Error::InvalidArgument(format!("eps must lie in (0, 1/2], got {eps}")));
    }
    let lhs = besov_operator(f, u).norm(Norm::L2)?;
    let rhs = (f.fractional_derivative(2.0 - eps)?.sup() + f.fractional_derivative(2.0 + eps)?.sup())
        * u.norm(Norm::L2)?;
    let floor = 1e-12 * f.sup() * u.norm(Norm::H2)? + f64::MIN_POSITIVE;
    let ratio = if lhs <= floor {
        0.0
    } else if rhs > 0.0 {
        lhs / rhs
    } else {
        return Err(Error::DegenerateInput(format!(
            "left side {lhs:.3e} with a vanishing right side"
        )));
    };
    Ok(BesovRatio { lhs, rhs, ratio })
}

/// Operator norm of `u ↦ ∂ₓ([H, f]u_x)` on 2/3-band-limited `u`, by power
/// iteration (the operator is self-adjoint).
pub fn besov_operator_norm(f: &Field, iterations: usize, seed: u64) -> Result<f64> {
    use rand::{Rng, SeedableRng};
    let grid = f.grid();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut u = Field::new(grid, (0..grid.n()).map(|_| rng.gen_range(-1.0..1.0)).collect())?.dealias();
    let mut estimate = 0.0;
    for _ in 0..iterations.max(1) {
        let norm = u.norm(Norm::L2)?;
        if norm == 0.0 {
            return Ok(0.0);
        }
        u = u.scale(1.0 / norm);
        let tu = besov_operator(f, &u).dealias();
        let next = besov_operator(f, &tu).dealias();
        let value = u.inner(&next).max(0.0).sqrt();
        if (value - estimate).abs() <= 1e-10 * value {
            return Ok(value);
        }
        estimate = value;
        u = next;
    }
    Ok(estimate)
}

/// `Ψ` at `t = t₀` made periodic: the cutoff centered at 0 followed by a slow
/// ramp back to 0 over `[ramp_start, ramp_start + ramp_width]`.
pub fn periodized_psi(grid: &Arc<Grid>, radius: f64, ramp_start: f64, ramp_width: f64) -> Result<Field> {
    let chi = make_chi();
    let w = radius.powf(THETA);
    Field::from_fn(grid, |x| {
        chi.value((x + 0.5 * w) / w) * (1.0 - chi.value((x - ramp_start) / ramp_width))
    })
}

/// `‖Ψ_x(t, ·)‖_∞ = χ′(1/2) / width(t)`.
pub fn psi_slope_sup(cut: &CutoffRecord, t: f64) -> f64 {
    make_chi().derivative(0.5, 1) / cut.width(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::{evolve, EvolutionConfig};
    use crate::solitary::{petviashvili_solve, PetviashviliOptions, WaveParams};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
            let (flm, frm) = (f(lm), f(rm));
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                left + right + (left + right - whole) / 15.0
            } else {
                rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                    + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
            }
        }
        let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        rec(f, a, b, fa, fm, fb, whole, tol, 50)
    }

    fn band_limited(grid: &Arc<Grid>, modes: usize, seed: u64) -> Field {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l = grid.length();
        let coeffs: Vec<(f64, f64)> = (0..modes)
            .map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        Field::from_fn(grid, |x| {
            coeffs
                .iter()
                .enumerate()
                .map(|(k, (a, b))| {
                    let w = 2.0 * PI * (k + 1) as f64 / l;
                    a * (w * x).cos() + b * (w * x).sin()
                })
                .sum()
        })
        .unwrap()
    }

    #[test]
    fn chi_examples() {
        let chi = make_chi();
        assert_eq!(chi.value(-1.0), 0.0);
        assert_eq!(chi.value(2.0), 1.0);
        assert!((chi.value(0.5) - 0.5).abs() < 1e-14);
        let c = chi.normalization();
        let integral = adaptive_simpson(&|x| c * bump(x), 0.0, 1.0, 1e-15);
        assert!((integral - 1.0).abs() < 1e-12, "{integral}");
        let mut prev = 0.0;
        for i in 0..=1000 {
            let v = chi.value(i as f64 / 1000.0);
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn chi_derivatives_match_differences() {
        let chi = make_chi();
        let h = 1e-5;
        for &x in &[0.1, 0.3, 0.5, 0.77, 0.9] {
            for k in 1..=3 {
                let fd = (chi.derivative(x + h, k - 1) - chi.derivative(x - h, k - 1)) / (2.0 * h);
                let exact = chi.derivative(x, k);
                assert!((fd - exact).abs() < 1e-6 * (1.0 + exact.abs()), "k={k} x={x}");
            }
        }
        // all one-sided derivatives vanish at the ends
        for k in 1..=3 {
            assert!(chi.derivative(1e-3, k).abs() < 1e-300);
        }
    }

    #[test]
    fn psi_plateaus() {
        for &r in &[1.0, 10.0, 40.0] {
            let cut = CutoffRecord::new(r, 0.5, 3.0, 7.0, Side::Right).unwrap();
            assert_eq!(eval_psi(&cut, 3.0, 7.0 + 2.0 * r), 1.0);
            for &t in &[-20.0, 0.0, 2.9] {
                let edge = 7.0 + r + 0.5 * (t - 3.0);
                assert_eq!(eval_psi(&cut, t, edge), 0.0);
                assert_eq!(eval_psi(&cut, t, edge - 5.0), 0.0);
                let top = edge + r.powf(0.75) + (3.0 - t).powf(0.75);
                assert_eq!(eval_psi(&cut, t, top), 1.0);
            }
            let mut prev = 0.0;
            for i in 0..4000 {
                let v = eval_psi(&cut, -5.0, -50.0 + i as f64 * 0.05);
                assert!((0.0..=1.0).contains(&v) && v >= prev);
                prev = v;
            }
        }
        let left = CutoffRecord::new(10.0, 0.5, 0.0, 0.0, Side::Left).unwrap();
        assert!((left.center(4.0) - (-18.0)).abs() < 1e-15);
        assert!(CutoffRecord::new(10.0, 0.7, 0.0, 0.0, Side::Right).is_err());
        assert!(CutoffRecord::new(0.0, 0.5, 0.0, 0.0, Side::Right).is_err());
    }

    #[test]
    fn psi_slope_matches_derivative_formula() {
        let g = Grid::new(4096, 400.0).unwrap();
        let cut = CutoffRecord::new(40.0, 0.5, 0.0, -60.0, Side::Right).unwrap();
        let psi = Field::new(&g, psi_on_grid(&cut, -8.0, &g, 0.0)).unwrap();
        // the window is not periodic; compare away from the seam with central differences
        let dx = g.dx();
        let p = psi.values();
        let (w, center) = (cut.width(-8.0), cut.center(-8.0));
        let chi = make_chi();
        let mut worst: f64 = 0.0;
        let mut sup: f64 = 0.0;
        for j in 2..g.n() - 2 {
            let fd = (p[j - 2] - 8.0 * p[j - 1] + 8.0 * p[j + 1] - p[j + 2]) / (12.0 * dx);
            let exact = chi.derivative((g.nodes()[j] - center) / w, 1) / w;
            worst = worst.max((fd - exact).abs());
            sup = sup.max(fd);
        }
        let bound = psi_slope_sup(&cut, -8.0);
        assert!(worst < 1e-6 * bound, "{worst}");
        // grid maximum undershoots the continuous sup by O((dx/w)²)
        assert!(sup <= bound * (1.0 + 1e-9) && sup > bound * (1.0 - 1e-3));
    }

    #[test]
    fn functional_examples() {
        let g = Grid::new(1024, 200.0).unwrap();
        let z = Field::zeros(&g);
        let cut = CutoffRecord::new(10.0, 0.5, 0.0, 0.0, Side::Right).unwrap();
        assert_eq!(functional_i(&z, &cut, -3.0, 0.0), 0.0);
        assert_eq!(functional_j(&z, &cut, 0.2, -3.0, 0.0), 0.0);
        for side in [Side::Right, Side::Left] {
            assert_eq!(functional_h(&z, 10.0, side, 4.0, 0.2, 0.0).unwrap(), 0.0);
        }
        assert!(functional_h(&z, 10.0, Side::Right, 3.0, 0.2, 0.0).is_err());

        let u = Field::from_fn(&g, |x| 2.0 * (-x * x / 4.0).exp()).unwrap();
        let far = CutoffRecord::new(80.0, 0.5, 0.0, 0.0, Side::Right).unwrap();
        assert!(functional_i(&u, &far, 0.0, 0.0) < 1e-100);
        // weight ≡ 1 on the support of u
        let everywhere = CutoffRecord::new(1.0, 0.5, 0.0, -90.0, Side::Right).unwrap();
        assert!((functional_i(&u, &everywhere, 0.0, 0.0) - mass(&u)).abs() < 1e-12);
        let j = functional_j(&u, &everywhere, 0.0, 0.0, 0.0);
        assert!((j - energy(&u, 0.0)).abs() < 1e-12);
    }

    #[test]
    fn origin_shifts_the_window() {
        let g = Grid::new(1024, 200.0).unwrap();
        let u = Field::from_fn(&g, |x| (-x * x / 4.0).exp()).unwrap();
        let cut = CutoffRecord::new(5.0, 0.5, 0.0, 30.0, Side::Right).unwrap();
        let shift = 190.0 * g.dx();
        let moved = u.shift(shift);
        let a = functional_i(&u, &cut, 0.0, shift);
        let b = functional_i(&moved, &cut, 0.0, 0.0);
        assert!(a > 0.1);
        assert!((a - b).abs() < 1e-12 * a, "{a} {b}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn partition_identity(seed in 0u64..10_000, radius in 1.0f64..80.0, shift in -100.0f64..100.0, gamma in -0.5f64..0.5) {
            let g = Grid::new(512, 200.0).unwrap();
            let u = band_limited(&g, 40, seed);
            let theta0 = 4.0 + u.norm(Norm::H1).unwrap();
            let cut = CutoffRecord::new(radius, 0.5, 0.0, 0.0, Side::Right).unwrap();
            let rec = functional_record(&u, &cut, gamma, 0.0, 0.0, theta0, shift).unwrap();
            let scale = 2.0 * theta0 * mass(&u) + energy(&u, gamma).abs();
            prop_assert!(rec.partition_defect.abs() <= 1e-10 * scale);
        }

        #[test]
        fn psi_is_a_weight(t in -50.0f64..50.0, x in -300.0f64..300.0, radius in 0.1f64..100.0) {
            let cut = CutoffRecord::new(radius, 0.4, 1.0, -2.0, Side::Left).unwrap();
            let v = eval_psi(&cut, t, x);
            prop_assert!((0.0..=1.0).contains(&v));
        }

        #[test]
        fn commutator_ratio_is_scale_invariant(seed in 0u64..10_000, lambda in 0.01f64..100.0) {
            let g = Grid::new(256, 2.0 * PI * 8.0).unwrap();
            let u = band_limited(&g, 60, seed);
            let f = band_limited(&g, 6, seed + 1);
            let a = commutator_defect(&f, &u).unwrap();
            let b = commutator_defect(&f.scale(lambda), &u).unwrap();
            prop_assert!((a.ratio - b.ratio).abs() <= 1e-10 * a.ratio);
            prop_assert!((b.hilbert - lambda * a.hilbert).abs() <= 1e-10 * b.hilbert);
        }
    }

    #[test]
    fn commutators_vanish_for_constants() {
        let g = Grid::new(512, 100.0).unwrap();
        let u = band_limited(&g, 80, 9);
        let f = Field::from_fn(&g, |_| 2.5).unwrap();
        let c = commutator_defect(&f, &u).unwrap();
        assert!(c.hilbert < 1e-12 && c.hilbert_derivative < 1e-12);
        assert_eq!(c.ratio, 0.0);
        let b = commutator_derivative_defect(&f, &u, 0.1).unwrap();
        assert!(b.lhs < 1e-12 * u.norm(Norm::H2).unwrap());
        assert_eq!(b.ratio, 0.0);
        assert!(commutator_derivative_defect(&f, &u, 0.0).is_err());
    }

    /// f = sin x, u = cos 3x: the Hilbert commutator vanishes (no mode changes
    /// sign), while `[H∂ₓ, f]u = −½(sin 4x + sin 2x)` has norm `√(π/2)`.
    #[test]
    fn commutator_of_single_modes() {
        let g = Grid::new(64, 2.0 * PI).unwrap();
        let f = Field::from_fn(&g, f64::sin).unwrap();
        let u = Field::from_fn(&g, |x| (3.0 * x).cos()).unwrap();
        let c = commutator_defect(&f, &u).unwrap();
        assert!(c.hilbert < 1e-12);
        assert!((c.hilbert_derivative - (PI / 2.0).sqrt()).abs() < 1e-12);
        assert!((c.u_l2 - PI.sqrt()).abs() < 1e-12);
        assert!((c.ratio - c.hilbert_derivative / PI.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn commutator_ensemble_is_bounded() {
        let mut worst: [f64; 2] = [0.0; 2];
        for (slot, n) in [256usize, 512].into_iter().enumerate() {
            let g = Grid::new(n, 100.0).unwrap();
            let f = Field::from_fn(&g, |x| (2.0 * PI * x / 100.0).sin()).unwrap();
            for seed in 0..50 {
                let u = band_limited(&g, 40, seed);
                let c = commutator_defect(&f, &u).unwrap();
                assert!(c.ratio.is_finite());
                worst[slot] = worst[slot].max(c.ratio);
            }
        }
        assert!((worst[0] - worst[1]).abs() < 1e-8 * worst[0], "{worst:?}");
    }

    #[test]
    fn besov_operator_is_self_adjoint() {
        let g = Grid::new(256, 50.0).unwrap();
        let f = periodized_psi(&g, 10.0, 5.0, 12.0).unwrap();
        let u = band_limited(&g, 40, 1);
        let v = band_limited(&g, 40, 2);
        let a = besov_operator(&f, &u).inner(&v);
        let b = u.inner(&besov_operator(&f, &v));
        assert!((a - b).abs() < 1e-10 * a.abs().max(b.abs()));
        let norm = besov_operator_norm(&f, 200, 3).unwrap();
        let direct = besov_operator(&f, &u.dealias()).norm(Norm::L2).unwrap()
            / u.dealias().norm(Norm::L2).unwrap();
        assert!(norm >= direct * (1.0 - 1e-9));
    }

    fn traveling_run(gamma: f64) -> (Trajectory, TimeSeries) {
        let g = Grid::new(1024, 200.0).unwrap();
        let w = petviashvili_solve(
            WaveParams::new(gamma, 1.0).unwrap(),
            &g,
            None,
            PetviashviliOptions::default(),
        )
        .unwrap();
        let cfg = EvolutionConfig {
            dt: 2e-3,
            t_final: 10.0,
            record_every: 250,
            snapshots: true,
            frame_speed: 1.0,
            ..Default::default()
        };
        let tr = evolve(&w.profile, gamma, &cfg).unwrap();
        let times: Vec<f64> = tr.records.iter().map(|r| r.t).collect();
        let x = TimeSeries::new(times.clone(), times).unwrap();
        (tr, x)
    }

    #[test]
    fn sweep_of_exact_soliton() {
        let (tr, x) = traveling_run(0.0);
        let radii = [10.0, 20.0, 40.0, 80.0];
        let rep = monotonicity_sweep(&tr, &x, &radii, Functional::IRight, &SweepOptions::default()).unwrap();
        assert!(rep.hypotheses.speed_ok && rep.hypotheses.loc_ok && rep.hypotheses.gamma_ok);
        assert_eq!(rep.t0, 10.0);
        assert_eq!(rep.max_defects.len(), 4);
        assert!(rep.k_min < 1e-3, "{}", rep.k_min);
        for w in rep.max_defects.windows(2) {
            assert!(w[1].1 <= w[0].1);
        }
        assert!(rep.rows.iter().all(|r| r.t <= rep.t0));
    }

    #[test]
    fn sweep_of_zero_solution() {
        let (mut tr, x) = traveling_run(0.0);
        for r in tr.records.iter_mut() {
            r.snapshot = Some(Field::zeros(r.snapshot.as_ref().unwrap().grid()));
        }
        for which in [Functional::IRight, Functional::ILeft, Functional::Combo4IJ, Functional::HRight] {
            let rep = monotonicity_sweep(&tr, &x, &[10.0, 20.0], which, &SweepOptions::default()).unwrap();
            assert!(rep.rows.iter().all(|r| r.defect == 0.0));
            assert_eq!(rep.k_min, 0.0);
            assert!(rep.slope.is_none());
        }
    }

    #[test]
    fn sweep_flags_slow_fronts() {
        let (tr, _) = traveling_run(0.0);
        let times: Vec<f64> = tr.records.iter().map(|r| r.t).collect();
        let slow = TimeSeries::new(times.clone(), times.iter().map(|t| 0.5 * t).collect()).unwrap();
        let rep = monotonicity_sweep(&tr, &slow, &[10.0], Functional::IRight, &SweepOptions::default()).unwrap();
        assert!(!rep.hypotheses.speed_ok);
        assert!(!rep.hypotheses.warnings.is_empty());
    }

    #[test]
    fn slope_fit() {
        let pts: Vec<(f64, f64)> = [10.0, 20.0, 40.0].iter().map(|&r: &f64| (r, 3.0 * r.powf(-1.5))).collect();
        assert!((log_log_slope(&pts).unwrap() + 1.5).abs() < 1e-12);
        assert!(log_log_slope(&[(1.0, 1.0)]).is_none());
    }
}

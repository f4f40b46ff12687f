//! Current-density relation in the thermodynamic limit and the boundary-induced
//! phase diagram from the extremal-current principle.
//!
//! The curve is parametrized by the log-fugacity `u = ln x`; since `rho(u)` is
//! strictly increasing, zeros and extrema of `j(rho)` are located in `u` and
//! mapped back. Every value reported is evaluated from the exact current, the
//! sampled grid only brackets the roots.

use crate::error::{GklsError, Result};
use crate::exec::Exec;
use crate::ising::{current_limit, fugacity_for_density, spectrum};
use crate::model::{BulkKinetics, MeasureParams};

pub const MIN_CURVE_POINTS: usize = 100;
/// Default fugacity window of [`build_curve`].
pub const FUGACITY_WINDOW: (f64, f64) = (1e-4, 1e4);
/// Relative tolerance for ties between candidate extremal currents.
pub const TIE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub x: f64,
    pub rho: f64,
    pub j: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtremumKind {
    Max,
    Min,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extremum {
    pub rho: f64,
    pub j: f64,
    pub kind: ExtremumKind,
}

/// Sampled `j(rho)` with its zeros and interior extrema.
#[derive(Debug, Clone, PartialEq)]
pub struct CurrentDensityCurve {
    kin: BulkKinetics,
    y: f64,
    samples: Vec<CurvePoint>,
    zeros: Vec<f64>,
    extrema: Vec<Extremum>,
    scale: f64,
    flat: bool,
}

fn point(kin: &BulkKinetics, y: f64, u: f64) -> Result<CurvePoint> {
    let m = MeasureParams::new(u.exp(), y)?;
    let s = spectrum(&m);
    Ok(CurvePoint {
        x: m.x,
        rho: s.density_limit(),
        j: current_limit(kin, &s)?,
    })
}

/// `dj/du` by a Richardson-extrapolated central difference.
fn slope(kin: &BulkKinetics, y: f64, u: f64) -> Result<f64> {
    let h = 1e-3;
    let d = |h: f64| -> Result<f64> { Ok((point(kin, y, u + h)?.j - point(kin, y, u - h)?.j) / (2.0 * h)) };
    let (d1, d2) = (d(h)?, d(0.5 * h)?);
    Ok((4.0 * d2 - d1) / 3.0)
}

/// Bisection for a sign change of `f` on `[lo, hi]`.
fn bisect<F: Fn(f64) -> Result<f64>>(f: F, mut lo: f64, mut hi: f64) -> Result<f64> {
    let mut flo = f(lo)?;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid)?;
        if fm == 0.0 {
            return Ok(mid);
        }
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Sample `j(rho)` at `n_points` log-uniform fugacities in [`FUGACITY_WINDOW`].
pub fn build_curve(kin: &BulkKinetics, n_points: usize, exec: Exec) -> Result<CurrentDensityCurve> {
    build_curve_in(kin, n_points, FUGACITY_WINDOW, exec)
}

pub fn build_curve_in(
    kin: &BulkKinetics,
    n_points: usize,
    window: (f64, f64),
    exec: Exec,
) -> Result<CurrentDensityCurve> {
    kin.validate()?;
    if n_points < MIN_CURVE_POINTS {
        return Err(GklsError::InvalidParameter(format!(
            "a curve needs at least {MIN_CURVE_POINTS} points, got {n_points}"
        )));
    }
    if !(window.0 > 0.0 && window.1 > window.0 && window.1.is_finite()) {
        return Err(GklsError::InvalidParameter(format!("bad fugacity window {window:?}")));
    }
    let y = kin.interaction();
    let (u0, u1) = (window.0.ln(), window.1.ln());
    let us: Vec<f64> = (0..n_points)
        .map(|i| u0 + (u1 - u0) * i as f64 / (n_points - 1) as f64)
        .collect();
    let samples: Vec<CurvePoint> = exec
        .map(&us, |&u| point(kin, y, u))
        .into_iter()
        .collect::<Result<_>>()?;
    if let Some(w) = samples.windows(2).find(|w| !(w[1].rho > w[0].rho)) {
        return Err(GklsError::NonMonotone { x: w[1].x });
    }
    let c = kin.bulk_constants();
    let scale = c.c0.abs().max(c.c1.abs()).max(c.c2.abs());
    let jmax = samples.iter().map(|p| p.j.abs()).fold(0.0, f64::max);
    let flat = scale == 0.0 || jmax <= 1e-13 * scale;

    let mut zeros = Vec::new();
    let mut extrema = Vec::new();
    if !flat {
        let ju = |u: f64| -> Result<f64> { Ok(point(kin, y, u)?.j) };
        for i in 0..n_points - 1 {
            let (a, b) = (samples[i].j, samples[i + 1].j);
            if a == 0.0 && i > 0 && samples[i - 1].j * b < 0.0 {
                zeros.push(samples[i].rho);
            } else if a * b < 0.0 {
                let u = bisect(ju, us[i], us[i + 1])?;
                zeros.push(point(kin, y, u)?.rho);
            }
        }
        let du = |u: f64| slope(kin, y, u);
        for i in 1..n_points - 1 {
            let (a, b, d) = (samples[i - 1].j, samples[i].j, samples[i + 1].j);
            let kind = if b > a && b >= d {
                ExtremumKind::Max
            } else if b < a && b <= d {
                ExtremumKind::Min
            } else {
                continue;
            };
            let (lo, hi) = (us[i - 1], us[i + 1]);
            let u = if du(lo)? * du(hi)? < 0.0 {
                bisect(du, lo, hi)?
            } else {
                us[i]
            };
            let p = point(kin, y, u)?;
            if !extrema.iter().any(|e: &Extremum| (e.rho - p.rho).abs() < 1e-12) {
                extrema.push(Extremum {
                    rho: p.rho,
                    j: p.j,
                    kind,
                });
            }
        }
    }
    Ok(CurrentDensityCurve {
        kin: *kin,
        y,
        samples,
        zeros,
        extrema,
        scale,
        flat,
    })
}

impl CurrentDensityCurve {
    pub fn kinetics(&self) -> &BulkKinetics {
        &self.kin
    }

    pub fn samples(&self) -> &[CurvePoint] {
        &self.samples
    }

    /// `j` vanishes identically (no bias in the bulk rates).
    pub fn is_flat(&self) -> bool {
        self.flat
    }

    /// Exact current at density `rho` in `(0, 1)`.
    pub fn current_at(&self, rho: f64) -> Result<f64> {
        let x = fugacity_for_density(rho, self.y)?;
        current_limit(&self.kin, &spectrum(&MeasureParams { x, y: self.y }))
    }

    /// Interior densities where `j` changes sign, in increasing order.
    pub fn zero_crossings(&self) -> &[f64] {
        &self.zeros
    }

    /// Interior local extrema, in increasing density.
    pub fn extrema(&self) -> &[Extremum] {
        &self.extrema
    }

    /// `max |j|` over the samples and the refined extrema.
    pub fn max_abs_current(&self) -> f64 {
        let s = self.samples.iter().map(|p| p.j.abs()).fold(0.0, f64::max);
        self.extrema.iter().map(|e| e.j.abs()).fold(s, f64::max)
    }

    fn tie_tol(&self) -> f64 {
        TIE_TOL * self.samples.iter().map(|p| p.j.abs()).fold(self.scale * 1e-3, f64::max)
    }
}

pub fn zero_crossing(curve: &CurrentDensityCurve) -> Vec<f64> {
    curve.zero_crossings().to_vec()
}

pub fn extrema(curve: &CurrentDensityCurve) -> Vec<Extremum> {
    curve.extrema().to_vec()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    /// Bulk density set by the left reservoir.
    LowDensity,
    /// Bulk density set by the right reservoir.
    HighDensity,
    MaximalCurrent,
    MinimalCurrent,
    /// Both reservoir densities give the same extremal current.
    Coexistence,
}

impl Phase {
    pub fn code(&self) -> &'static str {
        match self {
            Phase::LowDensity => "LD",
            Phase::HighDensity => "HD",
            Phase::MaximalCurrent => "MAX",
            Phase::MinimalCurrent => "MIN",
            Phase::Coexistence => "COEX",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseLabel {
    pub phase: Phase,
    /// For coexistence, the mean of the two boundary densities.
    pub bulk_density: f64,
    pub bulk_current: f64,
    /// An interior extremum tied with an endpoint within [`TIE_TOL`]; labelled as
    /// the extremal-current phase.
    pub tie: bool,
}

/// Extremal-current principle: minimize `j` over `[rho_minus, rho_plus]` when
/// `rho_minus < rho_plus`, maximize over `[rho_plus, rho_minus]` otherwise.
pub fn classify(rho_minus: f64, rho_plus: f64, curve: &CurrentDensityCurve) -> Result<PhaseLabel> {
    for r in [rho_minus, rho_plus] {
        if !(r > 0.0 && r < 1.0) {
            return Err(GklsError::InvalidParameter(format!(
                "boundary density {r} outside (0, 1)"
            )));
        }
    }
    if curve.flat {
        return Err(GklsError::Degenerate(
            "the current vanishes at every density, so the extremal-current principle selects no bulk density".into(),
        ));
    }
    let jm = curve.current_at(rho_minus)?;
    if rho_minus == rho_plus {
        return Ok(PhaseLabel {
            phase: Phase::LowDensity,
            bulk_density: rho_minus,
            bulk_current: jm,
            tie: false,
        });
    }
    let jp = curve.current_at(rho_plus)?;
    let minimize = rho_minus < rho_plus;
    let (lo, hi) = if minimize {
        (rho_minus, rho_plus)
    } else {
        (rho_plus, rho_minus)
    };
    let want = if minimize { ExtremumKind::Min } else { ExtremumKind::Max };
    // signed so that larger is better
    let sign = if minimize { -1.0 } else { 1.0 };
    let tol = curve.tie_tol();

    let interior = curve
        .extrema
        .iter()
        .filter(|e| e.kind == want && e.rho > lo && e.rho < hi)
        .max_by(|a, b| (sign * a.j).total_cmp(&(sign * b.j)));
    let (best_end, best_end_j, other_j) = if sign * jm >= sign * jp {
        (rho_minus, jm, jp)
    } else {
        (rho_plus, jp, jm)
    };

    if let Some(e) = interior {
        if sign * e.j >= sign * best_end_j - tol {
            let phase = if minimize {
                Phase::MinimalCurrent
            } else {
                Phase::MaximalCurrent
            };
            let tie = (e.j - best_end_j).abs() <= tol;
            return Ok(PhaseLabel {
                phase,
                bulk_density: e.rho,
                bulk_current: e.j,
                tie,
            });
        }
    }
    if (best_end_j - other_j).abs() <= tol {
        return Ok(PhaseLabel {
            phase: Phase::Coexistence,
            bulk_density: 0.5 * (rho_minus + rho_plus),
            bulk_current: best_end_j,
            tie: false,
        });
    }
    let phase = if best_end == rho_minus {
        Phase::LowDensity
    } else {
        Phase::HighDensity
    };
    Ok(PhaseLabel {
        phase,
        bulk_density: best_end,
        bulk_current: best_end_j,
        tie: false,
    })
}

/// Current flows against the boundary density gradient.
pub fn is_uphill(rho_minus: f64, rho_plus: f64, bulk_current: f64) -> bool {
    bulk_current * (rho_minus - rho_plus) < 0.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCell {
    pub rho_minus: f64,
    pub rho_plus: f64,
    pub label: PhaseLabel,
    pub uphill: bool,
}

/// `n x n` cells centred at `((i + 1/2)/n, (k + 1/2)/n)`; cell `(i, k)` is stored at `k * n + i`
/// with `i` indexing `rho_minus`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseGrid {
    pub n: usize,
    pub cells: Vec<GridCell>,
}

impl PhaseGrid {
    pub fn cell(&self, i: usize, k: usize) -> &GridCell {
        &self.cells[k * self.n + i]
    }

    pub fn count(&self, phase: Phase) -> usize {
        self.cells.iter().filter(|c| c.label.phase == phase).count()
    }

    /// Every grid edge between a cell of `phase` and a cell of another phase is
    /// crossed by the line `rho = rho_star` in the coordinate that changes.
    pub fn bounded_by_lines(&self, phase: Phase, rho_star: f64) -> bool {
        let n = self.n;
        let inside = |i: usize, k: usize| self.cell(i, k).label.phase == phase;
        let between = |a: f64, b: f64| (a.min(b)..=a.max(b)).contains(&rho_star);
        for k in 0..n {
            for i in 0..n {
                if i + 1 < n
                    && inside(i, k) != inside(i + 1, k)
                    && !between(self.cell(i, k).rho_minus, self.cell(i + 1, k).rho_minus)
                {
                    return false;
                }
                if k + 1 < n
                    && inside(i, k) != inside(i, k + 1)
                    && !between(self.cell(i, k).rho_plus, self.cell(i, k + 1).rho_plus)
                {
                    return false;
                }
            }
        }
        true
    }
}

pub fn phase_grid(curve: &CurrentDensityCurve, n: usize, exec: Exec) -> Result<PhaseGrid> {
    if n < 2 {
        return Err(GklsError::InvalidParameter(format!("grid size {n} must be at least 2")));
    }
    let centre = |i: usize| (i as f64 + 0.5) / n as f64;
    let cells = exec
        .map_range(n * n, |idx| {
            let (i, k) = (idx % n, idx / n);
            let (rm, rp) = (centre(i), centre(k));
            let label = classify(rm, rp, curve)?;
            Ok(GridCell {
                rho_minus: rm,
                rho_plus: rp,
                label,
                uphill: is_uphill(rm, rp, label.bulk_current),
            })
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(PhaseGrid { n, cells })
}

/// Points `(rho_minus, rho_plus)` on first-order lines, found by bisecting
/// `j(rho_minus) - j(rho_plus)` wherever neighbouring cells of one grid row
/// switch between low and high density.
pub fn coexistence_line(curve: &CurrentDensityCurve, grid: &PhaseGrid) -> Result<Vec<(f64, f64)>> {
    let n = grid.n;
    let mut out = Vec::new();
    let endpoint = |p: Phase| matches!(p, Phase::LowDensity | Phase::HighDensity | Phase::Coexistence);
    for k in 0..n {
        let rp = grid.cell(0, k).rho_plus;
        let jp = curve.current_at(rp)?;
        let f = |rm: f64| -> Result<f64> { Ok(curve.current_at(rm)? - jp) };
        let mut i = 0;
        while i + 1 < n {
            let (a, b) = (grid.cell(i, k), grid.cell(i + 1, k));
            let (pa, pb) = (a.label.phase, b.label.phase);
            if pa == Phase::Coexistence {
                out.push((a.rho_minus, rp));
                i += 1;
                continue;
            }
            let mut j = i + 1;
            let mut pj = pb;
            // skip over a coexistence cell sitting exactly on the line
            if pj == Phase::Coexistence && j + 1 < n {
                j += 1;
                pj = grid.cell(j, k).label.phase;
            }
            if endpoint(pa) && endpoint(pj) && pa != pj && pa != Phase::Coexistence && pj != Phase::Coexistence {
                let (lo, hi) = (a.rho_minus, grid.cell(j, k).rho_minus);
                if f(lo)? * f(hi)? < 0.0 {
                    out.push((bisect(f, lo, hi)?, rp));
                }
            }
            i += 1;
        }
    }
    Ok(out)
}

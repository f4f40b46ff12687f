//! Closed-form transfer-matrix evaluation of the one-dimensional Ising measure.
//!
//! The transfer matrix is `T = [[1, x], [x, x^2 y]]`, i.e. each bond carries
//! `x^(eta + eta') y^(eta eta')`. Powers are formed from the spectral
//! decomposition scaled by `lambda_max^n`, so that nothing overflows and
//! finite-size terms appear only through `c^n` with `|c| < 1`.

use crate::error::{GklsError, Result};
use crate::model::{BulkKinetics, Configuration, MeasureParams, Topology};

type Mat2 = [[f64; 2]; 2];

fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

/// Eigen-decomposition of the transfer matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferSpectrum {
    pub x: f64,
    pub y: f64,
    pub lambda_max: f64,
    /// Negative whenever `y < 1` (the determinant is `x^2 (y - 1)`).
    pub lambda_min: f64,
    /// Unit eigenvector `(v_0, v_1)` of `lambda_max`; both components positive.
    pub v_max: [f64; 2],
    /// Unit eigenvector of `lambda_min`, oriented with `v_1 > 0`.
    pub v_min: [f64; 2],
}

pub fn spectrum(m: &MeasureParams) -> TransferSpectrum {
    let (x, y) = (m.x, m.y);
    let x2 = x * x;
    let a = 1.0 - x2 * y;
    let d = a.hypot(2.0 * x);
    let lambda_max = 0.5 * (1.0 + x2 * y + d);
    let lambda_min = x2 * (y - 1.0) / lambda_max;
    // lambda - x^2 y for both roots, avoiding cancellation in a +- d
    let u_max = if a >= 0.0 { 0.5 * (a + d) } else { 2.0 * x2 / (d - a) };
    let u_min = if a <= 0.0 { 0.5 * (a - d) } else { -2.0 * x2 / (a + d) };
    let n_max = u_max.hypot(x);
    let n_min = u_min.hypot(x);
    TransferSpectrum {
        x,
        y,
        lambda_max,
        lambda_min,
        v_max: [u_max / n_max, x / n_max],
        v_min: [u_min / n_min, x / n_min],
    }
}

impl TransferSpectrum {
    /// `c = lambda_min / lambda_max`, always in `(-1, 1)`.
    pub fn ratio(&self) -> f64 {
        self.x * self.x * (self.y - 1.0) / (self.lambda_max * self.lambda_max)
    }

    /// `b = v_1(min) / v_1(max)`.
    pub fn b(&self) -> f64 {
        self.v_min[1] / self.v_max[1]
    }

    /// Density in the thermodynamic limit, `v_1(max)^2`.
    pub fn density_limit(&self) -> f64 {
        self.v_max[1] * self.v_max[1]
    }

    pub fn transfer_matrix(&self) -> Mat2 {
        let x = self.x;
        [[1.0, x], [x, x * x * self.y]]
    }

    /// `c^n`, with `c^0 = 1` even when `c = 0`.
    fn c_pow(&self, n: usize) -> f64 {
        self.ratio().powi(n as i32)
    }

    /// `T^n / lambda_max^n`.
    pub fn power_scaled(&self, n: usize) -> Mat2 {
        let cn = self.c_pow(n);
        let (p, q) = (self.v_max, self.v_min);
        let mut out = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                out[i][j] = p[i] * p[j] + cn * q[i] * q[j];
            }
        }
        out
    }

    /// `Y_n / lambda_max^n` where `Y_n = <1|T^n|1>`.
    pub fn y_scaled(&self, n: usize) -> f64 {
        let p0 = self.v_max[1] * self.v_max[1];
        let p1 = self.v_min[1] * self.v_min[1];
        p0 + p1 * self.c_pow(n)
    }

    pub fn y_n(&self, n: usize) -> f64 {
        self.y_scaled(n) * self.lambda_max.powi(n as i32)
    }

    pub fn ln_y_n(&self, n: usize) -> f64 {
        self.y_scaled(n).ln() + n as f64 * self.lambda_max.ln()
    }
}

/// `ln Z_L` for the ring; finite for every `L`.
pub fn ln_partition_periodic(len: usize, spec: &TransferSpectrum) -> f64 {
    (1.0 + spec.c_pow(len)).ln() + len as f64 * spec.lambda_max.ln()
}

/// `Z_L = Tr T^L = lambda_max^L + lambda_min^L`. Overflows to infinity for very
/// long rings; use [`ln_partition_periodic`] there.
pub fn partition_periodic(len: usize, spec: &TransferSpectrum) -> f64 {
    if len <= 512 {
        spec.lambda_max.powi(len as i32) * (1.0 + spec.c_pow(len))
    } else {
        ln_partition_periodic(len, spec).exp()
    }
}

pub fn density_periodic(len: usize, spec: &TransferSpectrum) -> f64 {
    spec.y_scaled(len) / (1.0 + spec.c_pow(len))
}

/// Local correlations that enter the stationary current, all translation invariant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correlations {
    pub density: f64,
    /// `<eta_k (1 - eta_{k+1})>`
    pub nn_10: f64,
    /// `<eta_k (1 - eta_{k+1}) eta_{k+2}>`
    pub nnn_101: f64,
    /// `<eta_k eta_{k+1} (1 - eta_{k+2})>`
    pub nnn_110: f64,
}

/// Ring correlations, `L >= 3`.
pub fn correlations_periodic(len: usize, spec: &TransferSpectrum) -> Result<Correlations> {
    if len < 3 {
        return Err(GklsError::InvalidParameter(format!(
            "three-site correlations need L >= 3, got {len}"
        )));
    }
    let (x, y, lam) = (spec.x, spec.y, spec.lambda_max);
    let z = 1.0 + spec.c_pow(len);
    // <0|T^n|1> / lambda^n = v0 v1 (1 - c^n) since the eigenvectors are orthonormal
    let w = |n: usize| spec.v_max[0] * spec.v_max[1] * (1.0 - spec.c_pow(n));
    Ok(Correlations {
        density: spec.y_scaled(len) / z,
        nn_10: x * w(len - 1) / (lam * z),
        nnn_101: x * x * spec.y_scaled(len - 2) / (lam * lam * z),
        nnn_110: x * x * x * y * w(len - 2) / (lam * lam * z),
    })
}

/// `<eta_k eta_{k+r}>` on a ring of length `L`, `0 <= r <= L`.
pub fn pair_correlation_periodic(len: usize, r: usize, spec: &TransferSpectrum) -> Result<f64> {
    if r > len {
        return Err(GklsError::InvalidParameter(format!(
            "separation {r} exceeds ring length {len}"
        )));
    }
    if r == 0 || r == len {
        return Ok(density_periodic(len, spec));
    }
    Ok(spec.y_scaled(r) * spec.y_scaled(len - r) / (1.0 + spec.c_pow(len)))
}

pub fn correlations_limit(spec: &TransferSpectrum) -> Correlations {
    let (x, y, lam) = (spec.x, spec.y, spec.lambda_max);
    let rho = spec.density_limit();
    let w = spec.v_max[0] * spec.v_max[1];
    Correlations {
        density: rho,
        nn_10: x * w / lam,
        nnn_101: x * x * rho / (lam * lam),
        nnn_110: x * x * x * y * w / (lam * lam),
    }
}

/// Stationary current `c0 <10> + c2 <110> - c1 <101>` for given correlations.
pub fn current_from_correlations(kin: &BulkKinetics, corr: &Correlations) -> f64 {
    let c = kin.bulk_constants();
    c.c0 * corr.nn_10 + c.c2 * corr.nnn_110 - c.c1 * corr.nnn_101
}

fn require_bound(kin: &BulkKinetics, spec: &TransferSpectrum) -> Result<()> {
    kin.validate()?;
    let y = kin.interaction();
    if (spec.y - y).abs() > 1e-12 * y.max(1.0) {
        return Err(GklsError::InvalidParameter(format!(
            "measure interaction y = {} does not match (1 - eps)/(1 + eps) = {y}",
            spec.y
        )));
    }
    Ok(())
}

/// Exact stationary current on a ring of length `L >= 4`.
pub fn current_periodic(len: usize, kin: &BulkKinetics, spec: &TransferSpectrum) -> Result<f64> {
    require_bound(kin, spec)?;
    if len < 4 {
        return Err(GklsError::InvalidParameter(format!(
            "the current needs L >= 4, got {len}"
        )));
    }
    Ok(current_from_correlations(kin, &correlations_periodic(len, spec)?))
}

/// Stationary current in the thermodynamic limit at the density `spec.density_limit()`.
pub fn current_limit(kin: &BulkKinetics, spec: &TransferSpectrum) -> Result<f64> {
    require_bound(kin, spec)?;
    Ok(current_from_correlations(kin, &correlations_limit(spec)))
}

/// Range of `ln x` searched by [`fugacity_for_density`].
pub const LN_FUGACITY_RANGE: (f64, f64) = (-250.0, 250.0);

/// Limit density at transfer fugacity `x = exp(u)`.
pub fn density_at_log_fugacity(u: f64, y: f64) -> f64 {
    spectrum(&MeasureParams { x: u.exp(), y }).density_limit()
}

/// Invert the strictly increasing map `x -> rho(x)` at fixed `y` by bisection in `ln x`.
pub fn fugacity_for_density(rho: f64, y: f64) -> Result<f64> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(GklsError::InvalidParameter(format!("density {rho} outside (0, 1)")));
    }
    if !(y > 0.0 && y.is_finite()) {
        return Err(GklsError::InvalidParameter(format!(
            "interaction y = {y} must be positive"
        )));
    }
    let (mut lo, mut hi) = LN_FUGACITY_RANGE;
    if density_at_log_fugacity(lo, y) > rho || density_at_log_fugacity(hi, y) < rho {
        return Err(GklsError::Domain(format!("density {rho} is not reachable at y = {y}")));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if density_at_log_fugacity(mid, y) < rho {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

/// Single-site fields at the chain ends. The weight of an open chain is
/// `exp(-J sum eta_k eta_{k+1} + phi sum_{1<k<L} eta_k + phi_minus eta_1 + phi_plus eta_L)`
/// with `phi = 2 ln x` taken from the spectrum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryFields {
    pub phi_minus: f64,
    pub phi_plus: f64,
}

impl BoundaryFields {
    pub fn new(phi_minus: f64, phi_plus: f64) -> Result<Self> {
        if !(phi_minus.is_finite() && phi_plus.is_finite()) {
            return Err(GklsError::InvalidParameter("boundary fields must be finite".into()));
        }
        Ok(BoundaryFields { phi_minus, phi_plus })
    }

    /// Half fields `phi/2`: the bond-product weight of [`boltzmann_weight`] on an open chain.
    pub fn half(spec: &TransferSpectrum) -> Self {
        let phi = 2.0 * spec.x.ln();
        BoundaryFields {
            phi_minus: 0.5 * phi,
            phi_plus: 0.5 * phi,
        }
    }

    /// Full fields `phi`: every site carries the same fugacity, as in [`invariant_weight`].
    pub fn uniform(spec: &TransferSpectrum) -> Self {
        let phi = 2.0 * spec.x.ln();
        BoundaryFields {
            phi_minus: phi,
            phi_plus: phi,
        }
    }

    /// `exp(phi_minus - phi/2)` and `exp(phi_plus - phi/2)`.
    fn end_weights(&self, spec: &TransferSpectrum) -> (f64, f64) {
        ((self.phi_minus).exp() / spec.x, (self.phi_plus).exp() / spec.x)
    }

    /// `(a_-^(0), a_-^(1), a_+^(0), a_+^(1))`.
    pub fn coefficients(&self, spec: &TransferSpectrum) -> [f64; 4] {
        let (sm, sp) = self.end_weights(spec);
        let a = |s: f64, v: [f64; 2]| v[0] + s * v[1];
        [
            a(sm, spec.v_max),
            a(sm, spec.v_min),
            a(sp, spec.v_max),
            a(sp, spec.v_min),
        ]
    }
}

/// Occupation constraint used by the product expectations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Occ {
    Filled,
    Empty,
}

impl Occ {
    fn projector(self) -> [f64; 2] {
        match self {
            Occ::Filled => [0.0, 1.0],
            Occ::Empty => [1.0, 0.0],
        }
    }
}

/// Sorted, deduplicated constraints; a site asked to be both filled and empty
/// gives a zero projector.
fn normalise_pattern(len: usize, pattern: &[(usize, Occ)]) -> Result<Vec<(usize, [f64; 2])>> {
    let mut sites: Vec<(usize, [f64; 2])> = Vec::with_capacity(pattern.len());
    let mut sorted = pattern.to_vec();
    sorted.sort_by_key(|&(k, _)| k);
    for (k, o) in sorted {
        if k == 0 || k > len {
            return Err(GklsError::Index { index: k, len });
        }
        let p = o.projector();
        match sites.last_mut() {
            Some((last, q)) if *last == k => {
                q[0] *= p[0];
                q[1] *= p[1];
            }
            _ => sites.push((k, p)),
        }
    }
    Ok(sites)
}

fn apply_diag(m: &Mat2, d: [f64; 2]) -> Mat2 {
    [[m[0][0] * d[0], m[0][1] * d[1]], [m[1][0] * d[0], m[1][1] * d[1]]]
}

/// Expectation of a product of occupation constraints (1-based sites) on a ring.
pub fn expectation_periodic(len: usize, spec: &TransferSpectrum, pattern: &[(usize, Occ)]) -> Result<f64> {
    if len == 0 {
        return Err(GklsError::InvalidParameter("empty ring".into()));
    }
    let sites = normalise_pattern(len, pattern)?;
    if sites.is_empty() {
        return Ok(1.0);
    }
    // Tr(P_1 T^{d_1} P_2 T^{d_2} ... ) with the last gap wrapping around
    let mut acc: Mat2 = [[1.0, 0.0], [0.0, 1.0]];
    for (idx, &(k, p)) in sites.iter().enumerate() {
        let next = if idx + 1 < sites.len() {
            sites[idx + 1].0
        } else {
            sites[0].0 + len
        };
        let step = apply_diag(&[[1.0, 0.0], [0.0, 1.0]], p);
        acc = mat_mul(&acc, &step);
        acc = mat_mul(&acc, &spec.power_scaled(next - k));
    }
    Ok((acc[0][0] + acc[1][1]) / (1.0 + spec.c_pow(len)))
}

/// `Z_L / lambda_max^(L-1)` for the open chain.
fn partition_open_scaled(len: usize, spec: &TransferSpectrum, bf: &BoundaryFields) -> f64 {
    let [m0, m1, p0, p1] = bf.coefficients(spec);
    m0 * p0 + m1 * p1 * spec.c_pow(len - 1)
}

fn require_len(len: usize) -> Result<()> {
    if len == 0 {
        Err(GklsError::InvalidParameter("open chain needs L >= 1".into()))
    } else {
        Ok(())
    }
}

/// `Z_L = <s_-|T^(L-1)|s_+>`.
pub fn partition_open(len: usize, spec: &TransferSpectrum, bf: &BoundaryFields) -> Result<f64> {
    require_len(len)?;
    Ok(partition_open_scaled(len, spec, bf) * spec.lambda_max.powi(len as i32 - 1))
}

pub fn ln_partition_open(len: usize, spec: &TransferSpectrum, bf: &BoundaryFields) -> Result<f64> {
    require_len(len)?;
    Ok(partition_open_scaled(len, spec, bf).ln() + (len as f64 - 1.0) * spec.lambda_max.ln())
}

/// Expectation of a product of occupation constraints on an open chain.
pub fn expectation_open(
    len: usize,
    spec: &TransferSpectrum,
    bf: &BoundaryFields,
    pattern: &[(usize, Occ)],
) -> Result<f64> {
    require_len(len)?;
    let sites = normalise_pattern(len, pattern)?;
    let (sm, sp) = bf.end_weights(spec);
    let mut row = [1.0, sm];
    let mut pos = 1;
    for &(k, p) in &sites {
        let t = spec.power_scaled(k - pos);
        row = [row[0] * t[0][0] + row[1] * t[1][0], row[0] * t[0][1] + row[1] * t[1][1]];
        row = [row[0] * p[0], row[1] * p[1]];
        pos = k;
    }
    let t = spec.power_scaled(len - pos);
    let num = (row[0] * t[0][0] + row[1] * t[1][0]) + sp * (row[0] * t[0][1] + row[1] * t[1][1]);
    Ok(num / partition_open_scaled(len, spec, bf))
}

/// Density `rho_k(L)` of the open chain, `1 <= k <= L`.
pub fn density_profile_open(k: usize, len: usize, spec: &TransferSpectrum, bf: &BoundaryFields) -> Result<f64> {
    require_len(len)?;
    if k == 0 || k > len {
        return Err(GklsError::Index { index: k, len });
    }
    let [m0, m1, p0, p1] = bf.coefficients(spec);
    let (q0, q1) = (spec.v_max[1], spec.v_min[1]);
    let cl = |n: usize| spec.c_pow(n);
    let left = [m0 * q0, m1 * q1 * cl(k - 1)];
    let right = [p0 * q0, p1 * q1 * cl(len - k)];
    let num = (left[0] + left[1]) * (right[0] + right[1]);
    Ok(num / partition_open_scaled(len, spec, bf))
}

/// Unnormalized weight `prod_bonds y^(eta eta') x^(eta + eta')`; an open chain
/// omits the bond `(L, 1)`.
pub fn boltzmann_weight(cfg: &Configuration, m: &MeasureParams) -> f64 {
    let occ = cfg.occupations();
    let n = occ.len();
    let bonds = match cfg.topology() {
        Topology::Periodic => n,
        Topology::Open => n - 1,
    };
    let (mut pairs, mut ends) = (0i32, 0i32);
    for i in 0..bonds {
        let (a, b) = (occ[i] as i32, occ[(i + 1) % n] as i32);
        pairs += a * b;
        ends += a + b;
    }
    m.y.powi(pairs) * m.x.powi(ends)
}

/// Unnormalized weight of the invariant Ising measure: [`boltzmann_weight`] on a
/// ring, `x^N y^(#nearest-neighbour pairs)` on an open chain.
pub fn invariant_weight(cfg: &Configuration, m: &MeasureParams) -> f64 {
    match cfg.topology() {
        Topology::Periodic => boltzmann_weight(cfg, m),
        Topology::Open => {
            let occ = cfg.occupations();
            let pairs = occ.windows(2).filter(|w| w[0] == 1 && w[1] == 1).count() as i32;
            m.y.powi(pairs) * m.x.powi(cfg.particles() as i32)
        }
    }
}

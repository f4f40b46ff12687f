//! Model parameters, lattice configurations and the exact jump and reservoir
//! rates of the generalized KLS process.
//!
//! Public operations address sites and bonds with the 1-based convention
//! `1..=L` (bond `k` joins sites `k` and `k+1`). Storage and the crate-internal
//! fast paths are 0-based.

use std::fmt;

use crate::error::{GklsError, Result};

/// Bulk hopping parameters `(r, ell, kappa, lambda, epsilon)`.
///
/// `r` and `ell` set the right and left hopping scales; `kappa` and `lambda`
/// are the kinetic interactions for right and left jumps; `epsilon` is the
/// static interaction shared by both directions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BulkKinetics {
    pub r: f64,
    pub ell: f64,
    pub kappa: f64,
    pub lambda: f64,
    pub epsilon: f64,
}

/// The three bulk combinations `c0, c1, c2` that enter the current and the
/// open-boundary invariance conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BulkConstants {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
}

/// Which fugacities admit an invariant open Ising measure for given bulk rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OpenFugacity {
    /// `c1 = c2 = 0`: every `x > 0` works.
    Any,
    /// The unique admissible fugacity.
    Fixed(f64),
    /// No positive fugacity satisfies `c1 = x y c2`.
    None,
}

impl BulkKinetics {
    pub fn new(r: f64, ell: f64, kappa: f64, lambda: f64, epsilon: f64) -> Result<Self> {
        let kin = BulkKinetics {
            r,
            ell,
            kappa,
            lambda,
            epsilon,
        };
        kin.validate()?;
        Ok(kin)
    }

    /// Totally asymmetric exclusion with unit rate.
    pub fn tasep() -> Self {
        BulkKinetics {
            r: 1.0,
            ell: 0.0,
            kappa: 0.0,
            lambda: 0.0,
            epsilon: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("r", self.r), ("ell", self.ell)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(GklsError::InvalidParameter(format!(
                    "{name} = {v} must be a finite rate >= 0"
                )));
            }
        }
        for (name, v) in [
            ("kappa", self.kappa),
            ("lambda", self.lambda),
            ("epsilon", self.epsilon),
        ] {
            if !(v > -1.0 && v < 1.0) {
                return Err(GklsError::InvalidParameter(format!(
                    "{name} = {v} must lie in the open interval (-1, 1)"
                )));
            }
        }
        Ok(())
    }

    /// Nearest-neighbour Boltzmann factor `y = (1 - eps) / (1 + eps)` tied to the dynamics.
    pub fn interaction(&self) -> f64 {
        (1.0 - self.epsilon) / (1.0 + self.epsilon)
    }

    pub fn bulk_constants(&self) -> BulkConstants {
        let (r, l) = (self.r, self.ell);
        BulkConstants {
            c0: r * (1.0 + self.kappa) - l * (1.0 + self.lambda),
            c1: r * (self.epsilon + self.kappa) - l * (self.epsilon + self.lambda),
            c2: r * (self.epsilon - self.kappa) - l * (self.epsilon - self.lambda),
        }
    }

    /// The Ising measure parameters at fugacity `x`, with `y` derived from `epsilon`.
    pub fn measure(&self, x: f64) -> Result<MeasureParams> {
        MeasureParams::new(x, self.interaction())
    }

    /// No hopping bias and equal kinetic interactions (conventional symmetric KLS).
    pub fn is_symmetric(&self) -> bool {
        self.r == self.ell && self.kappa == self.lambda
    }

    /// Solve the bulk invariance condition `c1 = x y c2` of the open model for `x`.
    pub fn open_fugacity(&self) -> OpenFugacity {
        let BulkConstants { c1, c2, .. } = self.bulk_constants();
        let y = self.interaction();
        let scale = self.r.max(self.ell).max(1.0);
        if c1.abs() <= 1e-15 * scale && c2.abs() <= 1e-15 * scale {
            return OpenFugacity::Any;
        }
        if c2 == 0.0 {
            return OpenFugacity::None;
        }
        let x = c1 / (y * c2);
        if x > 0.0 && x.is_finite() {
            OpenFugacity::Fixed(x)
        } else {
            OpenFugacity::None
        }
    }

    /// Left hopping scale that makes `c1 = x y c2` hold for the other parameters
    /// and a prescribed fugacity `x`. `None` when no nonnegative value exists.
    pub fn ell_for_open_fugacity(r: f64, kappa: f64, lambda: f64, epsilon: f64, x: f64) -> Option<f64> {
        let y = (1.0 - epsilon) / (1.0 + epsilon);
        let num = r * ((epsilon + kappa) - x * y * (epsilon - kappa));
        let den = (epsilon + lambda) - x * y * (epsilon - lambda);
        if den == 0.0 {
            return None;
        }
        let ell = num / den;
        (ell.is_finite() && ell >= 0.0).then_some(ell)
    }
}

/// Fugacity `x = exp(phi/2)` and nearest-neighbour factor `y = exp(-J)` of the
/// Ising weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasureParams {
    pub x: f64,
    pub y: f64,
}

impl MeasureParams {
    pub fn new(x: f64, y: f64) -> Result<Self> {
        if !(x > 0.0 && x.is_finite()) || !(y > 0.0 && y.is_finite()) {
            return Err(GklsError::InvalidParameter(format!(
                "measure needs x > 0 and y > 0, got x = {x}, y = {y}"
            )));
        }
        Ok(MeasureParams { x, y })
    }

    /// From chemical potential `phi` and static coupling `J` (with beta = 1).
    pub fn from_chemical(phi: f64, coupling: f64) -> Result<Self> {
        Self::new((0.5 * phi).exp(), (-coupling).exp())
    }

    pub fn phi(&self) -> f64 {
        2.0 * self.x.ln()
    }

    pub fn coupling(&self) -> f64 {
        -self.y.ln()
    }

    /// Whether `y` matches `(1 - eps) / (1 + eps)` for the given kinetics.
    pub fn is_bound_to(&self, kin: &BulkKinetics) -> bool {
        let y = kin.interaction();
        (self.y - y).abs() <= 1e-12 * y.max(1.0)
    }

    /// Transfer-matrix parameters of the invariant measure of the open model.
    ///
    /// The open invariant weight is `x^N y^(#nn pairs)`, a fugacity of `x` per
    /// particle, whereas the periodic transfer matrix carries `x^2` per particle.
    /// The bulk of the open chain is therefore the periodic measure at `sqrt(x)`.
    pub fn open_bulk_equivalent(&self) -> MeasureParams {
        MeasureParams {
            x: self.x.sqrt(),
            y: self.y,
        }
    }
}

/// Reservoir rates `alpha_i, gamma_i` (left) and `beta_i, delta_i` (right);
/// index 1 applies when the neighbouring site is empty, index 2 when occupied.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BoundaryRates {
    pub alpha1: f64,
    pub alpha2: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub delta1: f64,
    pub delta2: f64,
}

impl BoundaryRates {
    pub const NAMES: [&'static str; 8] = [
        "alpha1", "alpha2", "gamma1", "gamma2", "beta1", "beta2", "delta1", "delta2",
    ];

    /// No particle exchange with the reservoirs.
    pub fn closed() -> Self {
        Self::default()
    }

    /// From `[alpha1, alpha2, gamma1, gamma2, beta1, beta2, delta1, delta2]`.
    pub fn from_array(v: [f64; 8]) -> Result<Self> {
        let b = BoundaryRates {
            alpha1: v[0],
            alpha2: v[1],
            gamma1: v[2],
            gamma2: v[3],
            beta1: v[4],
            beta2: v[5],
            delta1: v[6],
            delta2: v[7],
        };
        b.validate()?;
        Ok(b)
    }

    pub fn to_array(&self) -> [f64; 8] {
        [
            self.alpha1,
            self.alpha2,
            self.gamma1,
            self.gamma2,
            self.beta1,
            self.beta2,
            self.delta1,
            self.delta2,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in Self::NAMES.iter().zip(self.to_array()) {
            if !(v.is_finite() && v >= 0.0) {
                return Err(GklsError::InvalidParameter(format!(
                    "{name} = {v} must be a finite rate >= 0"
                )));
            }
        }
        Ok(())
    }

    pub fn is_closed(&self) -> bool {
        self.to_array().iter().all(|&v| v == 0.0)
    }
}

/// Bulk and boundary combinations entering the open invariance conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedConstants {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c1m: f64,
    pub c2m: f64,
    pub c1p: f64,
    pub c2p: f64,
}

pub fn derived_constants(kin: &BulkKinetics, b: &BoundaryRates, m: &MeasureParams) -> DerivedConstants {
    let BulkConstants { c0, c1, c2 } = kin.bulk_constants();
    let xi = 1.0 / m.x;
    DerivedConstants {
        c0,
        c1,
        c2,
        c1m: b.alpha1 * xi - b.gamma1,
        c2m: b.alpha2 * xi - b.gamma2 * m.y,
        c1p: b.beta1 - b.delta1 * xi,
        c2p: b.beta2 * m.y - b.delta2 * xi,
    }
}

/// Outcome of checking the open-boundary invariance conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvarianceReport {
    pub satisfied: bool,
    /// `|c1m - c0/(1+x)|, |c2m - ..|, |c1p - ..|, |c2p - ..|, |c1 - x y c2|`.
    pub residuals: [f64; 5],
    pub tolerance: f64,
}

/// Relative tolerance applied by [`invariance_conditions_check`].
pub const INVARIANCE_CONDITION_TOL: f64 = 1e-12;

pub fn invariance_conditions_check(dc: &DerivedConstants, m: &MeasureParams) -> InvarianceReport {
    let target = dc.c0 / (1.0 + m.x);
    let residuals = [
        (dc.c1m - target).abs(),
        (dc.c2m - target).abs(),
        (dc.c1p - target).abs(),
        (dc.c2p - target).abs(),
        (dc.c1 - m.x * m.y * dc.c2).abs(),
    ];
    let scale = [dc.c0, dc.c1, dc.c2, dc.c1m, dc.c2m, dc.c1p, dc.c2p]
        .iter()
        .fold(1.0_f64, |acc, v| acc.max(v.abs()));
    let tolerance = INVARIANCE_CONDITION_TOL * scale;
    InvarianceReport {
        satisfied: residuals.iter().all(|&r| r <= tolerance),
        residuals,
        tolerance,
    }
}

/// Free constants `omega_i^-` (left) and `omega_i^+` (right) of the
/// boundary-rate parametrization.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Omegas {
    pub minus: [f64; 2],
    pub plus: [f64; 2],
}

/// Boundary rates satisfying the four boundary invariance equalities for any
/// choice of the free constants.
pub fn boundary_rates_from_omegas(kin: &BulkKinetics, m: &MeasureParams, omegas: &Omegas) -> Result<BoundaryRates> {
    let right = kin.r * (1.0 + kin.kappa);
    let left = kin.ell * (1.0 + kin.lambda);
    let floor = -right.min(left);
    for (name, w) in [
        ("omega1-", omegas.minus[0]),
        ("omega2-", omegas.minus[1]),
        ("omega1+", omegas.plus[0]),
        ("omega2+", omegas.plus[1]),
    ] {
        if !(w.is_finite() && w >= floor) {
            return Err(GklsError::InvalidParameter(format!(
                "{name} = {w} is below the positivity bound {floor}"
            )));
        }
    }
    let (x, y) = (m.x, m.y);
    let inner = 1.0 + 1.0 / x;
    let outer = 1.0 + x;
    // y^(1-i): 1 for i = 1, 1/y for i = 2
    let yp = [1.0, 1.0 / y];
    let [wm1, wm2] = omegas.minus;
    let [wp1, wp2] = omegas.plus;
    Ok(BoundaryRates {
        alpha1: (right + wm1) / inner,
        alpha2: (right + wm2) / inner,
        gamma1: yp[0] * (left + wm1) / outer,
        gamma2: yp[1] * (left + wm2) / outer,
        beta1: yp[0] * (right + wp1) / outer,
        beta2: yp[1] * (right + wp2) / outer,
        delta1: (left + wp1) / inner,
        delta2: (left + wp2) / inner,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Topology {
    Periodic,
    Open,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

/// Coefficient of `eta_{L-2}` in the right boundary's left-jump rate.
///
/// `VacuumExtended` uses `1 - eps`, the bulk rate with an empty site `L+1`;
/// this is the choice for which the open Ising measure is invariant.
/// `AsWritten` uses `1 + eps`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum BoundaryVariant {
    AsWritten,
    #[default]
    VacuumExtended,
}

/// Smallest lattice admitted by [`Configuration`] and [`Model`].
pub const MIN_LATTICE: usize = 4;

/// Occupation vector on a ring or an open segment.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Configuration {
    occ: Vec<u8>,
    topology: Topology,
}

impl Configuration {
    pub fn new(occ: Vec<u8>, topology: Topology) -> Result<Self> {
        if occ.len() < MIN_LATTICE {
            return Err(GklsError::InvalidParameter(format!(
                "lattice length {} is below the minimum {MIN_LATTICE}",
                occ.len()
            )));
        }
        if let Some(bad) = occ.iter().find(|&&v| v > 1) {
            return Err(GklsError::InvalidParameter(format!("occupation {bad} is not 0 or 1")));
        }
        Ok(Configuration { occ, topology })
    }

    /// Parse a string such as `"0110"`; the first character is site 1.
    pub fn parse(s: &str, topology: Topology) -> Result<Self> {
        let occ = s
            .chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                other => Err(GklsError::InvalidParameter(format!(
                    "unexpected character {other:?} in configuration"
                ))),
            })
            .collect::<Result<Vec<u8>>>()?;
        Self::new(occ, topology)
    }

    pub fn empty(len: usize, topology: Topology) -> Result<Self> {
        Self::new(vec![0; len], topology)
    }

    /// Configuration encoded by the bits of `index`: site `k` is bit `k - 1`.
    pub fn from_index(index: usize, len: usize, topology: Topology) -> Result<Self> {
        Self::new(decode_state(index, len), topology)
    }

    pub fn index(&self) -> usize {
        encode_state(&self.occ)
    }

    pub fn len(&self) -> usize {
        self.occ.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occ.is_empty()
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    pub fn occupations(&self) -> &[u8] {
        &self.occ
    }

    /// Occupation of site `k` (1-based). Periodic lattices accept any `k >= 1`
    /// and reduce it modulo `L`.
    pub fn occupation(&self, k: usize) -> Result<u8> {
        let i = self.site_index(k)?;
        Ok(self.occ[i])
    }

    pub fn particles(&self) -> usize {
        self.occ.iter().map(|&v| v as usize).sum()
    }

    /// The configuration with site `l` inverted.
    pub fn flip(&self, l: usize) -> Result<Configuration> {
        if l == 0 || l > self.len() {
            return Err(GklsError::Index {
                index: l,
                len: self.len(),
            });
        }
        let mut occ = self.occ.clone();
        occ[l - 1] ^= 1;
        Ok(Configuration {
            occ,
            topology: self.topology,
        })
    }

    /// The configuration with the occupations of `l` and `l + 1` exchanged.
    pub fn swap(&self, l: usize) -> Result<Configuration> {
        let (a, b) = self.bond_sites(l)?;
        let mut occ = self.occ.clone();
        occ.swap(a, b);
        Ok(Configuration {
            occ,
            topology: self.topology,
        })
    }

    fn site_index(&self, k: usize) -> Result<usize> {
        let n = self.len();
        match self.topology {
            Topology::Periodic if k >= 1 => Ok((k - 1) % n),
            Topology::Open if (1..=n).contains(&k) => Ok(k - 1),
            _ => Err(GklsError::Index { index: k, len: n }),
        }
    }

    /// 0-based endpoints of bond `l`.
    fn bond_sites(&self, l: usize) -> Result<(usize, usize)> {
        let n = self.len();
        let valid = match self.topology {
            Topology::Periodic => (1..=n).contains(&l),
            Topology::Open => (1..n).contains(&l),
        };
        if !valid {
            return Err(GklsError::Index { index: l, len: n });
        }
        Ok((l - 1, l % n))
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &v in &self.occ {
            f.write_str(if v == 1 { "1" } else { "0" })?;
        }
        Ok(())
    }
}

pub(crate) fn decode_state(index: usize, len: usize) -> Vec<u8> {
    (0..len).map(|i| ((index >> i) & 1) as u8).collect()
}

pub(crate) fn encode_state(occ: &[u8]) -> usize {
    occ.iter().enumerate().fold(0, |acc, (i, &v)| acc | ((v as usize) << i))
}

// Rate multipliers indexed by the two flanking occupations (left, right) of a bond.

#[inline]
fn right_factor(kin: &BulkKinetics, left: u8, right: u8) -> f64 {
    match (left, right) {
        (0, 0) => 1.0 + kin.kappa,
        (1, 0) => 1.0 + kin.epsilon,
        (0, _) => 1.0 - kin.epsilon,
        _ => 1.0 - kin.kappa,
    }
}

#[inline]
fn left_factor(kin: &BulkKinetics, left: u8, right: u8) -> f64 {
    match (left, right) {
        (0, 0) => 1.0 + kin.lambda,
        (1, 0) => 1.0 - kin.epsilon,
        (0, _) => 1.0 + kin.epsilon,
        _ => 1.0 - kin.lambda,
    }
}

/// Right- and left-jump rates across the bulk bond `(i, i+1)` (0-based) with
/// flanking occupations `before = eta_{i-1}` and `after = eta_{i+2}`.
#[inline]
pub(crate) fn bulk_pair_rates(kin: &BulkKinetics, a: u8, b: u8, before: u8, after: u8) -> (f64, f64) {
    match (a, b) {
        (1, 0) => (kin.r * right_factor(kin, before, after), 0.0),
        (0, 1) => (0.0, kin.ell * left_factor(kin, before, after)),
        _ => (0.0, 0.0),
    }
}

#[inline]
pub(crate) fn left_boundary_pair_rates(kin: &BulkKinetics, occ: &[u8]) -> (f64, f64) {
    let third = occ[2];
    match (occ[0], occ[1]) {
        (1, 0) => (
            kin.r * if third == 0 { 1.0 + kin.kappa } else { 1.0 - kin.epsilon },
            0.0,
        ),
        (0, 1) => (
            0.0,
            kin.ell
                * if third == 0 {
                    1.0 + kin.lambda
                } else {
                    1.0 + kin.epsilon
                },
        ),
        _ => (0.0, 0.0),
    }
}

#[inline]
pub(crate) fn right_boundary_pair_rates(kin: &BulkKinetics, variant: BoundaryVariant, occ: &[u8]) -> (f64, f64) {
    let n = occ.len();
    let third = occ[n - 3];
    match (occ[n - 2], occ[n - 1]) {
        (1, 0) => (
            kin.r * if third == 0 { 1.0 + kin.kappa } else { 1.0 + kin.epsilon },
            0.0,
        ),
        (0, 1) => {
            let occupied = match variant {
                BoundaryVariant::AsWritten => 1.0 + kin.epsilon,
                BoundaryVariant::VacuumExtended => 1.0 - kin.epsilon,
            };
            (0.0, kin.ell * if third == 0 { 1.0 + kin.lambda } else { occupied })
        }
        _ => (0.0, 0.0),
    }
}

/// (insert, remove) rates at one boundary site.
#[inline]
pub(crate) fn reservoir_pair(b: &BoundaryRates, side: Side, occ: &[u8]) -> (f64, f64) {
    let n = occ.len();
    match side {
        Side::Left => {
            let (site, nb) = (occ[0], occ[1]);
            if site == 0 {
                (if nb == 0 { b.alpha1 } else { b.alpha2 }, 0.0)
            } else {
                (0.0, if nb == 0 { b.gamma1 } else { b.gamma2 })
            }
        }
        Side::Right => {
            let (site, nb) = (occ[n - 1], occ[n - 2]);
            if site == 0 {
                (if nb == 0 { b.delta1 } else { b.delta2 }, 0.0)
            } else {
                (0.0, if nb == 0 { b.beta1 } else { b.beta2 })
            }
        }
    }
}

fn bulk_bond(cfg: &Configuration, k: usize) -> Result<(u8, u8, u8, u8)> {
    let n = cfg.len();
    let occ = cfg.occupations();
    match cfg.topology() {
        Topology::Open => {
            if !(2..=n - 2).contains(&k) {
                return Err(GklsError::Domain(format!(
                    "bond {k} is not a bulk bond of an open lattice of length {n} (bulk bonds are 2..={})",
                    n - 2
                )));
            }
            let i = k - 1;
            Ok((occ[i], occ[i + 1], occ[i - 1], occ[i + 2]))
        }
        Topology::Periodic => {
            if k == 0 {
                return Err(GklsError::Index { index: k, len: n });
            }
            let i = (k - 1) % n;
            Ok((occ[i], occ[(i + 1) % n], occ[(i + n - 1) % n], occ[(i + 2) % n]))
        }
    }
}

/// Rate at which a particle at site `k` jumps to `k + 1` (bulk bonds only).
pub fn bulk_right_rate(cfg: &Configuration, k: usize, kin: &BulkKinetics) -> Result<f64> {
    let (a, b, before, after) = bulk_bond(cfg, k)?;
    Ok(bulk_pair_rates(kin, a, b, before, after).0)
}

/// Rate at which a particle at site `k + 1` jumps to `k` (bulk bonds only).
pub fn bulk_left_rate(cfg: &Configuration, k: usize, kin: &BulkKinetics) -> Result<f64> {
    let (a, b, before, after) = bulk_bond(cfg, k)?;
    Ok(bulk_pair_rates(kin, a, b, before, after).1)
}

fn require_open(cfg: &Configuration) -> Result<()> {
    match cfg.topology() {
        Topology::Open => Ok(()),
        Topology::Periodic => Err(GklsError::Domain("boundary rates need an open lattice".into())),
    }
}

/// `(right, left)` jump rates across the boundary bond `(1, 2)` or `(L-1, L)`.
pub fn boundary_jump_rates(
    cfg: &Configuration,
    side: Side,
    kin: &BulkKinetics,
    variant: BoundaryVariant,
) -> Result<(f64, f64)> {
    require_open(cfg)?;
    Ok(match side {
        Side::Left => left_boundary_pair_rates(kin, cfg.occupations()),
        Side::Right => right_boundary_pair_rates(kin, variant, cfg.occupations()),
    })
}

/// `(insert, remove)` rates at the boundary site on `side`.
pub fn reservoir_rates(cfg: &Configuration, side: Side, b: &BoundaryRates) -> Result<(f64, f64)> {
    require_open(cfg)?;
    Ok(reservoir_pair(b, side, cfg.occupations()))
}

/// Net rightward jump rate `r_k - l_{k+1}` across bond `k`.
pub fn instantaneous_current(
    cfg: &Configuration,
    k: usize,
    kin: &BulkKinetics,
    variant: BoundaryVariant,
) -> Result<f64> {
    let n = cfg.len();
    let (right, left) = match cfg.topology() {
        Topology::Open if k == 1 => left_boundary_pair_rates(kin, cfg.occupations()),
        Topology::Open if k + 1 == n => right_boundary_pair_rates(kin, variant, cfg.occupations()),
        Topology::Open if k == 0 || k >= n => return Err(GklsError::Index { index: k, len: n }),
        _ => {
            let (a, b, before, after) = bulk_bond(cfg, k)?;
            bulk_pair_rates(kin, a, b, before, after)
        }
    };
    Ok(right - left)
}

/// A fully specified lattice dynamics: length, topology, bulk kinetics and,
/// for open lattices, the reservoir rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Model {
    len: usize,
    topology: Topology,
    kin: BulkKinetics,
    boundary: BoundaryRates,
    variant: BoundaryVariant,
}

impl Model {
    pub fn periodic(len: usize, kin: BulkKinetics) -> Result<Self> {
        Self::build(len, Topology::Periodic, kin, BoundaryRates::closed())
    }

    pub fn open(len: usize, kin: BulkKinetics, boundary: BoundaryRates) -> Result<Self> {
        Self::build(len, Topology::Open, kin, boundary)
    }

    fn build(len: usize, topology: Topology, kin: BulkKinetics, boundary: BoundaryRates) -> Result<Self> {
        kin.validate()?;
        boundary.validate()?;
        if len < MIN_LATTICE {
            return Err(GklsError::InvalidParameter(format!(
                "lattice length {len} is below the minimum {MIN_LATTICE}"
            )));
        }
        Ok(Model {
            len,
            topology,
            kin,
            boundary,
            variant: BoundaryVariant::default(),
        })
    }

    pub fn with_variant(mut self, variant: BoundaryVariant) -> Self {
        self.variant = variant;
        self
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    pub fn kinetics(&self) -> &BulkKinetics {
        &self.kin
    }

    /// Reservoir rates; all zero on a ring.
    pub fn boundary(&self) -> &BoundaryRates {
        &self.boundary
    }

    pub fn variant(&self) -> BoundaryVariant {
        self.variant
    }

    pub fn bond_count(&self) -> usize {
        match self.topology {
            Topology::Periodic => self.len,
            Topology::Open => self.len - 1,
        }
    }

    pub fn has_reservoirs(&self) -> bool {
        self.topology == Topology::Open && !self.boundary.is_closed()
    }

    /// `(right, left)` rates across bond `i` (0-based, joining `i` and `i+1 mod L`).
    #[inline]
    pub(crate) fn bond_rates(&self, occ: &[u8], i: usize) -> (f64, f64) {
        let n = self.len;
        match self.topology {
            Topology::Open if i == 0 => left_boundary_pair_rates(&self.kin, occ),
            Topology::Open if i + 2 == n => right_boundary_pair_rates(&self.kin, self.variant, occ),
            Topology::Open => bulk_pair_rates(&self.kin, occ[i], occ[i + 1], occ[i - 1], occ[i + 2]),
            Topology::Periodic => {
                let (prev, next, next2) = ((i + n - 1) % n, (i + 1) % n, (i + 2) % n);
                bulk_pair_rates(&self.kin, occ[i], occ[next], occ[prev], occ[next2])
            }
        }
    }

    /// Total flip rate of the boundary site on `side` (zero on a ring).
    #[inline]
    pub(crate) fn reservoir_rate(&self, occ: &[u8], side: Side) -> f64 {
        if self.topology == Topology::Periodic {
            return 0.0;
        }
        let (ins, rem) = reservoir_pair(&self.boundary, side, occ);
        ins + rem
    }

    /// Net rightward jump rate across bond `i` (0-based).
    #[inline]
    pub(crate) fn bond_current(&self, occ: &[u8], i: usize) -> f64 {
        let (r, l) = self.bond_rates(occ, i);
        r - l
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn per(s: &str) -> Configuration {
        Configuration::parse(s, Topology::Periodic).unwrap()
    }

    fn open(s: &str) -> Configuration {
        Configuration::parse(s, Topology::Open).unwrap()
    }

    fn kin(r: f64, ell: f64, kappa: f64, lambda: f64, epsilon: f64) -> BulkKinetics {
        BulkKinetics::new(r, ell, kappa, lambda, epsilon).unwrap()
    }

    #[test]
    fn flip_and_swap_examples() {
        let c = per("0110");
        assert_eq!(c.flip(1).unwrap().to_string(), "1110");
        assert_eq!(c.flip(2).unwrap().to_string(), "0010");
        assert_eq!(c.swap(1).unwrap().to_string(), "1010");
        assert_eq!(c.swap(2).unwrap(), c);
        // the periodic bond (L, 1) wraps around
        assert_eq!(per("1000").swap(4).unwrap().to_string(), "0001");
    }

    #[test]
    fn index_errors() {
        let c = open("0110");
        assert!(matches!(c.flip(0), Err(GklsError::Index { .. })));
        assert!(matches!(c.flip(5), Err(GklsError::Index { .. })));
        assert!(matches!(c.swap(4), Err(GklsError::Index { .. })));
        assert!(per("0110").swap(4).is_ok());
        assert!(Configuration::parse("011", Topology::Open).is_err());
        assert!(Configuration::parse("01a0", Topology::Open).is_err());
    }

    #[test]
    fn state_index_roundtrip() {
        let c = open("10110");
        assert_eq!(c.index(), 0b01101);
        assert_eq!(Configuration::from_index(c.index(), 5, Topology::Open).unwrap(), c);
    }

    #[test]
    fn parameter_validation() {
        assert!(BulkKinetics::new(1.0, 0.0, 1.0, 0.0, 0.0).is_err());
        assert!(BulkKinetics::new(1.0, 0.0, 0.0, 0.0, -1.0).is_err());
        assert!(BulkKinetics::new(-1.0, 0.0, 0.0, 0.0, 0.0).is_err());
        assert!(MeasureParams::new(0.0, 1.0).is_err());
        assert!(BoundaryRates::from_array([0.0, 0.0, -0.1, 0.0, 0.0, 0.0, 0.0, 0.0]).is_err());
        assert!(Model::open(3, BulkKinetics::tasep(), BoundaryRates::closed()).is_err());
    }

    #[test]
    fn bulk_rate_examples() {
        let k = kin(1.0, 0.0, 0.3, 0.0, 0.0);
        assert_relative_eq!(bulk_right_rate(&per("0100"), 2, &k).unwrap(), 1.3);
        assert_eq!(bulk_right_rate(&per("1110"), 2, &k).unwrap(), 0.0);
        let k = kin(1.0, 0.0, 0.3, 0.0, 0.5);
        assert_relative_eq!(bulk_right_rate(&per("1100"), 2, &k).unwrap(), 1.5);
        let k = kin(0.0, 1.0, 0.0, 0.2, 0.0);
        assert_relative_eq!(bulk_left_rate(&per("0010"), 2, &k).unwrap(), 1.2);
        let k = kin(0.0, 1.0, 0.0, 0.0, 0.4);
        assert_relative_eq!(bulk_left_rate(&per("1010"), 2, &k).unwrap(), 0.6);
        assert_eq!(bulk_left_rate(&per("0110"), 2, &k).unwrap(), 0.0);
    }

    #[test]
    fn bulk_rates_reject_boundary_bonds_on_open_lattices() {
        let k = BulkKinetics::tasep();
        assert!(matches!(
            bulk_right_rate(&open("10000"), 1, &k),
            Err(GklsError::Domain(_))
        ));
        assert!(matches!(
            bulk_left_rate(&open("00001"), 4, &k),
            Err(GklsError::Domain(_))
        ));
        assert!(bulk_right_rate(&open("01000"), 2, &k).is_ok());
    }

    #[test]
    fn eight_pictorial_rates() {
        let (r, l, ka, la, ep) = (1.7, 0.6, 0.3, -0.4, 0.25);
        let k = kin(r, l, ka, la, ep);
        let right = [
            ("0100", r * (1.0 + ka)),
            ("1100", r * (1.0 + ep)),
            ("0101", r * (1.0 - ep)),
            ("1101", r * (1.0 - ka)),
        ];
        for (s, want) in right {
            assert_relative_eq!(bulk_right_rate(&per(s), 2, &k).unwrap(), want, max_relative = 1e-15);
            assert_eq!(bulk_left_rate(&per(s), 2, &k).unwrap(), 0.0);
        }
        let left = [
            ("0010", l * (1.0 + la)),
            ("1010", l * (1.0 - ep)),
            ("0011", l * (1.0 + ep)),
            ("1011", l * (1.0 - la)),
        ];
        for (s, want) in left {
            assert_relative_eq!(bulk_left_rate(&per(s), 2, &k).unwrap(), want, max_relative = 1e-15);
            assert_eq!(bulk_right_rate(&per(s), 2, &k).unwrap(), 0.0);
        }
    }

    #[test]
    fn boundary_jump_examples() {
        let k = kin(1.0, 1.0, 0.3, 0.2, 0.4);
        let (rm, lm) = boundary_jump_rates(&open("1000"), Side::Left, &k, BoundaryVariant::AsWritten).unwrap();
        assert_relative_eq!(rm, 1.3);
        assert_eq!(lm, 0.0);
        let left_only = kin(0.0, 1.0, 0.3, 0.2, 0.4);
        let (rp, lp) = boundary_jump_rates(&open("0110"), Side::Right, &left_only, BoundaryVariant::AsWritten).unwrap();
        assert_eq!((rp, lp), (0.0, 0.0));
        let (rp, _) = boundary_jump_rates(&open("0110"), Side::Right, &k, BoundaryVariant::AsWritten).unwrap();
        assert_relative_eq!(rp, 1.4);
        // eta_{L-2} = 1 picks the occupied coefficient of the right boundary
        let cfg = open("0101");
        let (_, lp) = boundary_jump_rates(&cfg, Side::Right, &k, BoundaryVariant::AsWritten).unwrap();
        assert_relative_eq!(lp, 1.4);
        let (_, lp) = boundary_jump_rates(&cfg, Side::Right, &k, BoundaryVariant::VacuumExtended).unwrap();
        assert_relative_eq!(lp, 0.6);
        let (_, lp) = boundary_jump_rates(&open("0001"), Side::Right, &k, BoundaryVariant::AsWritten).unwrap();
        assert_relative_eq!(lp, 1.2);
        for side in [Side::Left, Side::Right] {
            assert_eq!(
                boundary_jump_rates(&open("0000"), side, &k, BoundaryVariant::AsWritten).unwrap(),
                (0.0, 0.0)
            );
        }
        assert!(matches!(
            boundary_jump_rates(&per("1000"), Side::Left, &k, BoundaryVariant::AsWritten),
            Err(GklsError::Domain(_))
        ));
    }

    #[test]
    fn vacuum_extended_matches_bulk_rate_with_empty_outer_site() {
        let k = kin(1.3, 0.8, 0.2, -0.3, 0.45);
        for idx in 0..16 {
            let cfg = Configuration::from_index(idx, 4, Topology::Open).unwrap();
            let occ = cfg.occupations();
            let (_, left) = right_boundary_pair_rates(&k, BoundaryVariant::VacuumExtended, occ);
            // bulk rate across bond (3,4) with a phantom empty site 5
            let (_, bulk_left) = bulk_pair_rates(&k, occ[2], occ[3], occ[1], 0);
            assert_relative_eq!(left, bulk_left);
            let (right, _) = left_boundary_pair_rates(&k, occ);
            let (bulk_right, _) = bulk_pair_rates(&k, occ[0], occ[1], 0, occ[2]);
            assert_relative_eq!(right, bulk_right);
        }
    }

    #[test]
    fn reservoir_examples() {
        let b = BoundaryRates {
            alpha1: 0.5,
            alpha2: 0.7,
            gamma1: 0.2,
            gamma2: 0.3,
            ..Default::default()
        };
        assert_eq!(reservoir_rates(&open("00000"), Side::Left, &b).unwrap(), (0.5, 0.0));
        assert_eq!(reservoir_rates(&open("11111"), Side::Left, &b).unwrap(), (0.0, 0.3));
        assert_eq!(reservoir_rates(&open("01000"), Side::Left, &b).unwrap(), (0.7, 0.0));
        for s in ["10000", "11000", "10110"] {
            assert_eq!(reservoir_rates(&open(s), Side::Left, &b).unwrap().0, 0.0);
        }
        let b = BoundaryRates {
            beta1: 0.4,
            beta2: 0.9,
            delta1: 0.1,
            delta2: 0.6,
            ..Default::default()
        };
        assert_eq!(reservoir_rates(&open("00001"), Side::Right, &b).unwrap(), (0.0, 0.4));
        assert_eq!(reservoir_rates(&open("00011"), Side::Right, &b).unwrap(), (0.0, 0.9));
        assert_eq!(reservoir_rates(&open("00010"), Side::Right, &b).unwrap(), (0.6, 0.0));
        assert!(reservoir_rates(&per("0000"), Side::Left, &b).is_err());
    }

    #[test]
    fn derived_constant_examples() {
        let m = MeasureParams::new(1.3, 0.7).unwrap();
        let dc = derived_constants(&kin(0.9, 0.9, 0.2, 0.2, 0.3), &BoundaryRates::closed(), &m);
        assert_eq!((dc.c0, dc.c1, dc.c2), (0.0, 0.0, 0.0));
        let dc = derived_constants(&BulkKinetics::tasep(), &BoundaryRates::closed(), &m);
        assert_eq!((dc.c0, dc.c1, dc.c2), (1.0, 0.0, 0.0));
        let b = BoundaryRates {
            alpha1: 0.5,
            ..Default::default()
        };
        let dc = derived_constants(&BulkKinetics::tasep(), &b, &MeasureParams::new(1.0, 1.0).unwrap());
        assert_eq!(dc.c1m, 0.5);
    }

    #[test]
    fn omega_parametrization_examples() {
        let m = MeasureParams::new(1.0, 1.0).unwrap();
        let b = boundary_rates_from_omegas(&BulkKinetics::tasep(), &m, &Omegas::default()).unwrap();
        assert_eq!(b.to_array(), [0.5, 0.5, 0.0, 0.0, 0.5, 0.5, 0.0, 0.0]);
        let bad = Omegas {
            minus: [0.0, -0.5],
            plus: [0.0, 0.0],
        };
        assert!(boundary_rates_from_omegas(&BulkKinetics::tasep(), &m, &bad).is_err());
    }

    #[test]
    fn invariance_check_detects_perturbation() {
        let (r, ka, la, ep, x) = (1.2, 0.3, 0.2, 0.4, 0.8);
        let ell = BulkKinetics::ell_for_open_fugacity(r, ka, la, ep, x).unwrap();
        let k = kin(r, ell, ka, la, ep);
        assert!(matches!(k.open_fugacity(), OpenFugacity::Fixed(v) if (v - x).abs() < 1e-12));
        let m = k.measure(x).unwrap();
        let omegas = Omegas {
            minus: [0.1, 0.4],
            plus: [0.0, 0.25],
        };
        let b = boundary_rates_from_omegas(&k, &m, &omegas).unwrap();
        let report = invariance_conditions_check(&derived_constants(&k, &b, &m), &m);
        assert!(report.satisfied, "{report:?}");

        let perturbed = BoundaryRates {
            alpha1: b.alpha1 + 0.1,
            ..b
        };
        let report = invariance_conditions_check(&derived_constants(&k, &perturbed, &m), &m);
        assert!(!report.satisfied);
        assert_relative_eq!(report.residuals[0], 0.1 / x, max_relative = 1e-12);

        let closed = invariance_conditions_check(
            &derived_constants(&kin(0.7, 0.7, 0.1, 0.1, 0.2), &BoundaryRates::closed(), &m),
            &m,
        );
        assert!(closed.satisfied);
    }

    #[test]
    fn instantaneous_current_examples() {
        let k = kin(1.0, 1.0, 0.0, 0.0, 0.0);
        let v = BoundaryVariant::default();
        assert_eq!(instantaneous_current(&per("0100"), 2, &k, v).unwrap(), 1.0);
        assert_eq!(instantaneous_current(&per("0000"), 2, &k, v).unwrap(), 0.0);
        let k = kin(0.8, 0.8, 0.35, 0.35, -0.3);
        let cfg = per("110100");
        let mirrored = per("001011");
        // bond k maps to bond L - k under reflection
        for b in 1..=6 {
            let j = instantaneous_current(&cfg, b, &k, v).unwrap();
            let jm = instantaneous_current(&mirrored, (6 - b + 6 - 1) % 6 + 1, &k, v).unwrap();
            assert_relative_eq!(j, -jm, epsilon = 1e-15);
        }
        assert!(instantaneous_current(&open("0100"), 4, &k, v).is_err());
        assert_relative_eq!(
            instantaneous_current(&open("1000"), 1, &kin(1.0, 0.0, 0.3, 0.0, 0.0), v).unwrap(),
            1.3
        );
    }
}

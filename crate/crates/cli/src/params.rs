//! Parameter resolution: a `key = value` config file overlaid by command-line flags.

use std::collections::BTreeMap;
use std::path::Path;

use gkls_core::model::{
    boundary_rates_from_omegas, BoundaryRates, BoundaryVariant, BulkKinetics, MeasureParams, Model, Omegas,
    OpenFugacity, Topology,
};

use crate::CliError;

pub const KINETIC_KEYS: [&str; 5] = ["r", "ell", "kappa", "lambda", "epsilon"];
pub const OMEGA_KEYS: [&str; 4] = ["omega1m", "omega2m", "omega1p", "omega2p"];

/// Resolved parameters, keyed by canonical names.
#[derive(Debug, Clone, Default)]
pub struct Params {
    map: BTreeMap<String, String>,
}

fn canonical(key: &str) -> String {
    match key.trim() {
        "eps" => "epsilon".into(),
        "l" => "ell".into(),
        "len" => "L".into(),
        k => k.to_string(),
    }
}

impl Params {
    /// Merge a config file (if any) with flags; flags win.
    pub fn resolve(config: Option<&Path>, flags: Vec<(&str, Option<String>)>) -> Result<Self, CliError> {
        let mut map = BTreeMap::new();
        if let Some(path) = config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
            for (no, line) in text.lines().enumerate() {
                let line = line.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let Some((k, v)) = line.split_once('=') else {
                    return Err(CliError::Usage(format!(
                        "{}:{}: expected key = value",
                        path.display(),
                        no + 1
                    )));
                };
                map.insert(canonical(k), v.trim().to_string());
            }
        }
        for (k, v) in flags {
            if let Some(v) = v {
                map.insert(canonical(k), v);
            }
        }
        Ok(Params { map })
    }

    pub fn map(&self) -> &BTreeMap<String, String> {
        &self.map
    }

    pub fn has(&self, key: &str) -> bool {
        self.map.contains_key(key)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.map.insert(key.to_string(), value.to_string());
    }

    pub fn str(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    pub fn f64(&self, key: &str) -> Result<Option<f64>, CliError> {
        self.map
            .get(key)
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| CliError::Usage(format!("{key} = {v:?} is not a number")))
            })
            .transpose()
    }

    pub fn need_f64(&self, key: &str) -> Result<f64, CliError> {
        self.f64(key)?
            .ok_or_else(|| CliError::Usage(format!("missing required parameter --{key}")))
    }

    pub fn u64(&self, key: &str) -> Result<Option<u64>, CliError> {
        self.map
            .get(key)
            .map(|v| {
                // accept 1e6 style counts
                v.parse::<u64>().or_else(|_| match v.parse::<f64>() {
                    Ok(f) if f >= 0.0 && f.fract() == 0.0 && f < 1.8e19 => Ok(f as u64),
                    _ => Err(CliError::Usage(format!("{key} = {v:?} is not a nonnegative integer"))),
                })
            })
            .transpose()
    }

    pub fn usize(&self, key: &str) -> Result<Option<usize>, CliError> {
        Ok(self.u64(key)?.map(|v| v as usize))
    }

    pub fn need_usize(&self, key: &str) -> Result<usize, CliError> {
        self.usize(key)?
            .ok_or_else(|| CliError::Usage(format!("missing required parameter --{key}")))
    }

    pub fn any_kinetic(&self) -> bool {
        KINETIC_KEYS.iter().any(|k| self.has(k))
    }

    /// `r`, `ell` and `epsilon` are required; `kappa` and `lambda` default to zero.
    pub fn kinetics(&self) -> Result<BulkKinetics, CliError> {
        let kin = BulkKinetics::new(
            self.need_f64("r")?,
            self.need_f64("ell")?,
            self.f64("kappa")?.unwrap_or(0.0),
            self.f64("lambda")?.unwrap_or(0.0),
            self.need_f64("epsilon")?,
        )?;
        Ok(kin)
    }

    /// Fugacity from `x` or `phi` (`x = exp(phi/2)`).
    pub fn fugacity(&self) -> Result<Option<f64>, CliError> {
        match (self.f64("x")?, self.f64("phi")?) {
            (Some(_), Some(_)) => Err(CliError::Usage("give either x or phi, not both".into())),
            (Some(x), None) => Ok(Some(x)),
            (None, Some(phi)) => Ok(Some((0.5 * phi).exp())),
            (None, None) => Ok(None),
        }
    }

    /// Nearest-neighbour factor from `y` or `J` (`y = exp(-J)`), for pure Ising use.
    pub fn interaction(&self) -> Result<Option<f64>, CliError> {
        match (self.f64("y")?, self.f64("J")?) {
            (Some(_), Some(_)) => Err(CliError::Usage("give either y or J, not both".into())),
            (Some(y), None) => Ok(Some(y)),
            (None, Some(j)) => Ok(Some((-j).exp())),
            (None, None) => Ok(None),
        }
    }

    /// Measure bound to the kinetics; `y` is derived from `epsilon` and may not be set.
    pub fn bound_measure(&self, kin: &BulkKinetics, x: f64) -> Result<MeasureParams, CliError> {
        if self.interaction()?.is_some() {
            return Err(CliError::Usage(
                "y (or J) is fixed by epsilon once dynamics are given".into(),
            ));
        }
        Ok(kin.measure(x)?)
    }

    pub fn topology(&self) -> Result<Topology, CliError> {
        match self.str("topology") {
            None if BoundaryRates::NAMES.iter().chain(&OMEGA_KEYS).any(|k| self.has(k)) => Ok(Topology::Open),
            None | Some("periodic") | Some("ring") => Ok(Topology::Periodic),
            Some("open") => Ok(Topology::Open),
            Some(t) => Err(CliError::Usage(format!("unknown topology {t:?} (periodic or open)"))),
        }
    }

    pub fn variant(&self) -> Result<BoundaryVariant, CliError> {
        match self.str("variant") {
            None | Some("vacuum") | Some("vacuum-extended") => Ok(BoundaryVariant::VacuumExtended),
            Some("as-written") => Ok(BoundaryVariant::AsWritten),
            Some(v) => Err(CliError::Usage(format!(
                "unknown boundary variant {v:?} (vacuum-extended or as-written)"
            ))),
        }
    }

    /// Fugacity of the open model: `x` if given, else the one forced by the bulk rates.
    pub fn open_fugacity(&self, kin: &BulkKinetics) -> Result<f64, CliError> {
        if let Some(x) = self.fugacity()? {
            return Ok(x);
        }
        match kin.open_fugacity() {
            OpenFugacity::Fixed(x) => Ok(x),
            OpenFugacity::Any => Err(CliError::Usage("the bulk rates leave x free; set --x".into())),
            OpenFugacity::None => Err(CliError::Usage(
                "no positive fugacity solves c1 = x y c2 for these rates; set --x".into(),
            )),
        }
    }

    /// Reservoir rates: all eight given explicitly, or the omega parametrization
    /// (omegas default to zero) with any explicitly given rate overriding it.
    pub fn boundary(&mut self, kin: &BulkKinetics) -> Result<BoundaryRates, CliError> {
        let given: Vec<Option<f64>> = BoundaryRates::NAMES
            .iter()
            .map(|k| self.f64(k))
            .collect::<Result<_, _>>()?;
        if given.iter().all(Option::is_some) {
            if OMEGA_KEYS.iter().any(|k| self.has(k)) {
                return Err(CliError::Usage(
                    "all eight reservoir rates given; omegas would be ignored".into(),
                ));
            }
            let v: [f64; 8] = std::array::from_fn(|i| given[i].unwrap_or(0.0));
            return Ok(BoundaryRates::from_array(v)?);
        }
        let x = self.open_fugacity(kin)?;
        let m = kin.measure(x)?;
        let mut w = [0.0; 4];
        for (slot, name) in w.iter_mut().zip(OMEGA_KEYS) {
            *slot = self.f64(name)?.unwrap_or(0.0);
        }
        let base = boundary_rates_from_omegas(
            kin,
            &m,
            &Omegas {
                minus: [w[0], w[1]],
                plus: [w[2], w[3]],
            },
        )?;
        let v: [f64; 8] = std::array::from_fn(|i| given[i].unwrap_or(base.to_array()[i]));
        let b = BoundaryRates::from_array(v)?;
        self.set("x", x);
        for (name, v) in BoundaryRates::NAMES.iter().zip(v) {
            self.set(name, v);
        }
        Ok(b)
    }

    pub fn model(&mut self, len: usize) -> Result<Model, CliError> {
        let kin = self.kinetics()?;
        Ok(match self.topology()? {
            Topology::Periodic => Model::periodic(len, kin)?,
            Topology::Open => {
                let b = self.boundary(&kin)?;
                Model::open(len, kin, b)?.with_variant(self.variant()?)
            }
        })
    }
}

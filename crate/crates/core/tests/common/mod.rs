//! Brute-force oracles shared by the integration tests. Nothing here goes
//! through the transfer matrix or the sparse generator.

#![allow(dead_code)]

use gkls_core::model::{boundary_rates_from_omegas, BoundaryRates, BulkKinetics, MeasureParams, Omegas};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo.ln()..hi.ln()).exp()
}

pub fn bit(state: usize, site: usize) -> usize {
    (state >> (site - 1)) & 1
}

/// Ring weights `x^(2N) y^(#pairs)` for every state, site `k` at bit `k - 1`.
pub fn ring_weights(len: usize, x: f64, y: f64) -> Vec<f64> {
    (0..1usize << len)
        .map(|s| {
            let n = s.count_ones() as i32;
            let pairs = (1..=len)
                .filter(|&k| bit(s, k) == 1 && bit(s, k % len + 1) == 1)
                .count() as i32;
            x.powi(2 * n) * y.powi(pairs)
        })
        .collect()
}

/// Open chain with interior fugacity `x^2` per particle and end fields `phi_-`, `phi_+`.
pub fn chain_weights(len: usize, x: f64, y: f64, phi_minus: f64, phi_plus: f64) -> Vec<f64> {
    (0..1usize << len)
        .map(|s| {
            let mut w = 1.0;
            for k in 1..=len {
                if bit(s, k) == 1 {
                    w *= if len > 1 && k == 1 {
                        phi_minus.exp()
                    } else if len > 1 && k == len {
                        phi_plus.exp()
                    } else if len == 1 {
                        (phi_minus + phi_plus - 2.0 * x.ln()).exp()
                    } else {
                        x * x
                    };
                }
                if k < len && bit(s, k) == 1 && bit(s, k + 1) == 1 {
                    w *= y;
                }
            }
            w
        })
        .collect()
}

/// Open-model invariant weights `x^N y^(#pairs)`.
pub fn open_invariant_weights(len: usize, x: f64, y: f64) -> Vec<f64> {
    (0..1usize << len)
        .map(|s| {
            let pairs = (1..len).filter(|&k| bit(s, k) == 1 && bit(s, k + 1) == 1).count() as i32;
            x.powi(s.count_ones() as i32) * y.powi(pairs)
        })
        .collect()
}

pub fn normalized(w: &[f64]) -> Vec<f64> {
    let z: f64 = w.iter().sum();
    w.iter().map(|v| v / z).collect()
}

/// `sum_s w(s) f(s) / sum_s w(s)`.
pub fn average<F: Fn(usize) -> f64>(w: &[f64], f: F) -> f64 {
    let z: f64 = w.iter().sum();
    w.iter().enumerate().map(|(s, &v)| v * f(s)).sum::<f64>() / z
}

/// Right and left jump rates across a bond given the outer neighbours, from the
/// rate pictures.
pub fn pair_rates(kin: &BulkKinetics, before: usize, after: usize) -> (f64, f64) {
    let (e, k, l) = (kin.epsilon, kin.kappa, kin.lambda);
    let right = match (before, after) {
        (0, 0) => 1.0 + k,
        (1, 0) => 1.0 + e,
        (0, 1) => 1.0 - e,
        _ => 1.0 - k,
    };
    let left = match (before, after) {
        (0, 0) => 1.0 + l,
        (1, 0) => 1.0 - e,
        (0, 1) => 1.0 + e,
        _ => 1.0 - l,
    };
    (kin.r * right, kin.ell * left)
}

/// Dense intensity matrix, `q[i][j]` the rate from state `i` to state `j`.
///
/// The open chain sees empty phantom sites `0` and `L + 1`; `as_written`
/// replaces the right-boundary left-jump factor for an occupied site `L - 2`
/// by `1 + eps`.
pub fn dense_generator(len: usize, kin: &BulkKinetics, open: Option<(&BoundaryRates, bool)>) -> Vec<Vec<f64>> {
    let dim = 1usize << len;
    let mut q = vec![vec![0.0; dim]; dim];
    let occ = |s: usize, k: isize| -> usize {
        match open {
            None => bit(s, ((k - 1).rem_euclid(len as isize)) as usize + 1),
            Some(_) if k < 1 || k > len as isize => 0,
            Some(_) => bit(s, k as usize),
        }
    };
    let bonds = if open.is_some() { len - 1 } else { len };
    for s in 0..dim {
        for k in 1..=bonds as isize {
            let (a, b) = (occ(s, k), occ(s, k + 1));
            if a == b {
                continue;
            }
            let (before, after) = (occ(s, k - 1), occ(s, k + 2));
            let (right, mut left) = pair_rates(kin, before, after);
            if let Some((_, true)) = open {
                if k as usize == len - 1 && before == 1 {
                    left = kin.ell * (1.0 + kin.epsilon);
                }
            }
            let kk = (k - 1) as usize;
            let kn = (k as usize) % len;
            let target = s ^ (1 << kk) ^ (1 << kn);
            if a == 1 {
                q[s][target] += right;
            } else {
                q[s][target] += left;
            }
        }
        if let Some((br, _)) = open {
            let (n2, nl1) = (occ(s, 2), occ(s, len as isize - 1));
            let t1 = s ^ 1;
            q[s][t1] += if bit(s, 1) == 0 {
                if n2 == 0 {
                    br.alpha1
                } else {
                    br.alpha2
                }
            } else if n2 == 0 {
                br.gamma1
            } else {
                br.gamma2
            };
            let tl = s ^ (1 << (len - 1));
            q[s][tl] += if bit(s, len) == 0 {
                if nl1 == 0 {
                    br.delta1
                } else {
                    br.delta2
                }
            } else if nl1 == 0 {
                br.beta1
            } else {
                br.beta2
            };
        }
    }
    for (s, row) in q.iter_mut().enumerate() {
        row[s] = 0.0;
    }
    q
}

/// `max_j |sum_i mu_i q_ij - mu_j sum_i q_ji|`.
pub fn dense_invariance_residual(q: &[Vec<f64>], mu: &[f64]) -> f64 {
    let dim = q.len();
    (0..dim)
        .map(|j| {
            let inflow: f64 = (0..dim).map(|i| mu[i] * q[i][j]).sum();
            let out: f64 = q[j].iter().sum();
            (inflow - mu[j] * out).abs()
        })
        .fold(0.0, f64::max)
}

/// Random bulk kinetics with rates of order one.
pub fn random_kinetics(rng: &mut ChaCha8Rng) -> BulkKinetics {
    BulkKinetics::new(
        rng.random_range(0.1..3.0),
        rng.random_range(0.1..3.0),
        rng.random_range(-0.95..0.95),
        rng.random_range(-0.95..0.95),
        rng.random_range(-0.95..0.95),
    )
    .unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max)
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs())
}

/// Kinetics, measure and boundary rates satisfying the open invariance conditions.
pub fn random_open(g: &mut ChaCha8Rng) -> (BulkKinetics, MeasureParams, BoundaryRates) {
    loop {
        let (r, kappa, lambda, eps) = (
            g.random_range(0.2..3.0),
            g.random_range(-0.9..0.9),
            g.random_range(-0.9..0.9),
            g.random_range(-0.9..0.9),
        );
        let x = log_uniform(g, 0.3, 3.0);
        let Some(ell) = BulkKinetics::ell_for_open_fugacity(r, kappa, lambda, eps, x) else {
            continue;
        };
        if !(0.05..10.0).contains(&ell) {
            continue;
        }
        let kin = BulkKinetics::new(r, ell, kappa, lambda, eps).unwrap();
        let m = kin.measure(x).unwrap();
        let floor = -(r * (1.0 + kappa)).min(ell * (1.0 + lambda));
        let mut w = || floor + g.random_range(0.05..2.0);
        let om = Omegas {
            minus: [w(), w()],
            plus: [w(), w()],
        };
        let b = boundary_rates_from_omegas(&kin, &m, &om).unwrap();
        return (kin, m, b);
    }
}

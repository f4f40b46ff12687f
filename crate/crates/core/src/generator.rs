//! Full intensity matrices on `{0,1}^L` for small lattices, exact stationary
//! laws, and numerical invariance certificates.
//!
//! The rate matrix `Q` has rows indexed by the source state; state `i` encodes
//! site `k` in bit `k - 1`. A measure `mu` (column vector) is invariant iff
//! `mu^T Q = 0`; the quantum-Hamiltonian form of the generator is `H = -Q^T`.

use nalgebra::{DMatrix, DVector};
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;

use crate::error::{GklsError, Result};
use crate::exec::Exec;
use crate::ising::invariant_weight;
use crate::model::{decode_state, derived_constants, Configuration, MeasureParams, Model, Side, Topology};

/// Lattice lengths accepted by [`build_generator`].
pub const MIN_EXACT_LEN: usize = 4;
pub const MAX_EXACT_LEN: usize = 14;
/// Largest state space solved by dense LU; larger ones use restarted GMRES.
pub const DENSE_SOLVE_LIMIT: usize = 1024;
/// Largest lattice for which measure vectors are materialized.
pub const MAX_MEASURE_LEN: usize = 20;

/// Rate matrix stored by rows: off-diagonal `(target, rate)` pairs plus the
/// total exit rate of each state (the diagonal is `-exit`).
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGenerator {
    len: usize,
    topology: Topology,
    rows: Vec<Vec<(usize, f64)>>,
    exit: Vec<f64>,
}

impl SparseGenerator {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    pub fn dimension(&self) -> usize {
        self.rows.len()
    }

    /// Off-diagonal transitions out of state `i`.
    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn exit_rate(&self, i: usize) -> f64 {
        self.exit[i]
    }

    /// `Q(i -> j)`, including the diagonal.
    pub fn rate(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return -self.exit[i];
        }
        self.rows[i].iter().filter(|&&(t, _)| t == j).map(|&(_, q)| q).sum()
    }

    /// Largest absolute row sum; zero up to rounding.
    pub fn max_row_sum(&self) -> f64 {
        self.rows
            .iter()
            .zip(&self.exit)
            .map(|(row, &e)| (row.iter().map(|&(_, q)| q).sum::<f64>() - e).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dimension();
        let mut q = DMatrix::zeros(n, n);
        for (i, row) in self.rows.iter().enumerate() {
            q[(i, i)] = -self.exit[i];
            for &(j, v) in row {
                q[(i, j)] += v;
            }
        }
        q
    }

    /// `mu^T Q` as a vector.
    pub fn left_apply(&self, mu: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dimension()];
        for (i, row) in self.rows.iter().enumerate() {
            let w = mu[i];
            if w == 0.0 {
                continue;
            }
            out[i] -= w * self.exit[i];
            for &(j, q) in row {
                out[j] += w * q;
            }
        }
        out
    }

    /// Closed communicating classes of the transition graph, each sorted.
    pub fn closed_classes(&self) -> Vec<Vec<usize>> {
        let n = self.dimension();
        let mut g = DiGraph::<(), ()>::with_capacity(n, self.rows.iter().map(Vec::len).sum());
        let nodes: Vec<_> = (0..n).map(|_| g.add_node(())).collect();
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, q) in row {
                if q > 0.0 {
                    g.add_edge(nodes[i], nodes[j], ());
                }
            }
        }
        let sccs = tarjan_scc(&g);
        let mut comp = vec![0usize; n];
        for (c, scc) in sccs.iter().enumerate() {
            for v in scc {
                comp[v.index()] = c;
            }
        }
        let mut classes: Vec<Vec<usize>> = sccs
            .iter()
            .enumerate()
            .filter(|(c, scc)| {
                scc.iter()
                    .all(|v| self.rows[v.index()].iter().all(|&(j, q)| q == 0.0 || comp[j] == *c))
            })
            .map(|(_, scc)| {
                let mut states: Vec<usize> = scc.iter().map(|v| v.index()).collect();
                states.sort_unstable();
                states
            })
            .collect();
        classes.sort();
        classes
    }
}

fn check_exact_len(len: usize) -> Result<()> {
    if !(MIN_EXACT_LEN..=MAX_EXACT_LEN).contains(&len) {
        return Err(GklsError::Resource {
            requested: len,
            min: MIN_EXACT_LEN,
            max: MAX_EXACT_LEN,
        });
    }
    Ok(())
}

/// Assemble `Q` for the model: one swap per bond plus flips of the two
/// boundary sites on open lattices.
pub fn build_generator(model: &Model, exec: Exec) -> Result<SparseGenerator> {
    let n = model.len();
    check_exact_len(n)?;
    let dim = 1usize << n;
    let rows: Vec<(Vec<(usize, f64)>, f64)> = exec.map_range(dim, |i| {
        let occ = decode_state(i, n);
        let mut row = Vec::with_capacity(n + 2);
        for b in 0..model.bond_count() {
            let (r, l) = model.bond_rates(&occ, b);
            let q = r + l;
            if q > 0.0 {
                let j = i ^ (1 << b) ^ (1 << ((b + 1) % n));
                row.push((j, q));
            }
        }
        if model.topology() == Topology::Open {
            for (side, bit) in [(Side::Left, 0), (Side::Right, n - 1)] {
                let q = model.reservoir_rate(&occ, side);
                if q > 0.0 {
                    row.push((i ^ (1 << bit), q));
                }
            }
        }
        let exit = row.iter().map(|&(_, q)| q).sum();
        (row, exit)
    });
    let (rows, exit) = rows.into_iter().unzip();
    Ok(SparseGenerator {
        len: n,
        topology: model.topology(),
        rows,
        exit,
    })
}

/// Weight vector over all `2^L` configurations.
pub fn weight_vector<F>(len: usize, topology: Topology, exec: Exec, weight: F) -> Result<Vec<f64>>
where
    F: Fn(&Configuration) -> f64 + Sync + Send,
{
    if len > MAX_MEASURE_LEN {
        return Err(GklsError::Resource {
            requested: len,
            min: 1,
            max: MAX_MEASURE_LEN,
        });
    }
    Configuration::empty(len, topology)?;
    Ok(exec.map_range(1usize << len, |i| {
        let cfg = Configuration::from_index(i, len, topology).expect("length validated");
        weight(&cfg)
    }))
}

/// Unnormalized (or normalized) invariant Ising weights, see [`invariant_weight`].
pub fn ising_measure_vector(len: usize, topology: Topology, m: &MeasureParams, normalize: bool) -> Result<Vec<f64>> {
    let mut v = weight_vector(len, topology, Exec::Sequential, |c| invariant_weight(c, m))?;
    if normalize {
        normalize_in_place(&mut v);
    }
    Ok(v)
}

pub fn normalize_in_place(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|w| *w /= s);
}

/// Unique stationary probability vector of an ergodic generator.
///
/// Fails with [`GklsError::Reducible`] when the chain has more than one closed
/// class. Transient states receive zero mass.
pub fn stationary_distribution(q: &SparseGenerator) -> Result<Vec<f64>> {
    let classes = q.closed_classes();
    if classes.len() != 1 {
        return Err(GklsError::Reducible { classes });
    }
    let pi = if q.dimension() <= DENSE_SOLVE_LIMIT {
        dense_solve(q)?
    } else {
        gmres_solve(q)?
    };
    // normwise backward error: ||pi^T Q|| against ||Q|| ||pi||_1 with ||pi||_1 = 1
    let residual = invariance_residual(q, &pi);
    let scale = q.exit.iter().fold(0.0_f64, |a, &e| a.max(e));
    if !(residual <= 1e-12 * scale.max(1e-300)) {
        return Err(GklsError::NotConverged { residual });
    }
    Ok(pi)
}

fn finish(mut pi: Vec<f64>) -> Vec<f64> {
    // tiny negative round-off on transient states
    pi.iter_mut().for_each(|p| *p = p.max(0.0));
    normalize_in_place(&mut pi);
    pi
}

/// Solve `Q^T pi = 0` with the first equation replaced by `sum(pi) = 1`.
fn dense_solve(q: &SparseGenerator) -> Result<Vec<f64>> {
    let n = q.dimension();
    let mut a = q.to_dense().transpose();
    a.row_mut(0).fill(1.0);
    let mut rhs = DVector::zeros(n);
    rhs[0] = 1.0;
    let x = a.lu().solve(&rhs).ok_or(GklsError::NotConverged {
        residual: f64::INFINITY,
    })?;
    Ok(finish(x.iter().copied().collect()))
}

/// Same system as [`dense_solve`] by restarted GMRES with a Jacobi right preconditioner.
fn gmres_solve(q: &SparseGenerator) -> Result<Vec<f64>> {
    let n = q.dimension();
    let apply = |v: &[f64]| -> Vec<f64> {
        let mut out = q.left_apply(v);
        out[0] = v.iter().sum();
        out
    };
    let diag: Vec<f64> = (0..n)
        .map(|j| {
            if j == 0 {
                1.0
            } else if q.exit[j] > 0.0 {
                -q.exit[j]
            } else {
                1.0
            }
        })
        .collect();
    let precond = |v: &[f64]| -> Vec<f64> { v.iter().zip(&diag).map(|(a, d)| a / d).collect() };
    let mut b = vec![0.0; n];
    b[0] = 1.0;
    let x = gmres(&apply, &precond, &b, vec![1.0 / n as f64; n], 80, 400, 1e-15)?;
    Ok(finish(x))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Right-preconditioned restarted GMRES for `A x = b`.
fn gmres<A, P>(
    apply: &A,
    precond: &P,
    b: &[f64],
    mut x: Vec<f64>,
    restart: usize,
    max_cycles: usize,
    rtol: f64,
) -> Result<Vec<f64>>
where
    A: Fn(&[f64]) -> Vec<f64>,
    P: Fn(&[f64]) -> Vec<f64>,
{
    let n = b.len();
    let bnorm = norm(b).max(1e-300);
    let mut last = f64::INFINITY;
    for _ in 0..max_cycles {
        let ax = apply(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let beta = norm(&r);
        last = beta / bnorm;
        if last <= rtol {
            return Ok(x);
        }
        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut h = vec![vec![0.0; restart]; restart + 1];
        let (mut cs, mut sn) = (vec![0.0; restart], vec![0.0; restart]);
        let mut g = vec![0.0; restart + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..restart {
            let mut w = apply(&precond(&basis[k]));
            for (i, v) in basis.iter().enumerate() {
                h[i][k] = dot(&w, v);
                w.iter_mut().zip(v).for_each(|(a, b)| *a -= h[i][k] * b);
            }
            let hn = norm(&w);
            h[k + 1][k] = hn;
            for i in 0..k {
                let t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let rho = h[k][k].hypot(h[k + 1][k]);
            if rho == 0.0 {
                break;
            }
            cs[k] = h[k][k] / rho;
            sn[k] = h[k + 1][k] / rho;
            h[k][k] = rho;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k_used = k + 1;
            if g[k + 1].abs() / bnorm <= rtol || hn == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / hn).collect());
        }
        // back substitution for the Krylov coefficients
        let mut coef = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let s: f64 = (i + 1..k_used).map(|j| h[i][j] * coef[j]).sum();
            coef[i] = (g[i] - s) / h[i][i];
        }
        let mut update = vec![0.0; n];
        for (c, v) in coef.iter().zip(&basis) {
            update.iter_mut().zip(v).for_each(|(u, vi)| *u += c * vi);
        }
        let update = precond(&update);
        x.iter_mut().zip(&update).for_each(|(a, u)| *a += u);
    }
    if last <= 1e-12 {
        Ok(x)
    } else {
        Err(GklsError::NotConverged { residual: last })
    }
}

/// `||mu^T Q||_inf`.
pub fn invariance_residual(q: &SparseGenerator, mu: &[f64]) -> f64 {
    q.left_apply(mu).iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

/// Largest probability outflow `mu(i) * exit(i)`, the natural scale of the residual.
pub fn invariance_scale(q: &SparseGenerator, mu: &[f64]) -> f64 {
    mu.iter().zip(&q.exit).map(|(m, e)| m * e).fold(0.0, f64::max)
}

/// Invariance residual relative to [`invariance_scale`].
pub fn relative_invariance_residual(q: &SparseGenerator, mu: &[f64]) -> f64 {
    let s = invariance_scale(q, mu);
    if s == 0.0 {
        0.0
    } else {
        invariance_residual(q, mu) / s
    }
}

/// `max |mu(i) Q(i->j) - mu(j) Q(j->i)|` over all ordered pairs.
pub fn detailed_balance_residual(q: &SparseGenerator, mu: &[f64]) -> Result<f64> {
    if let Some(i) = mu.iter().position(|&m| !(m > 0.0)) {
        return Err(GklsError::Domain(format!(
            "detailed balance needs a strictly positive measure (entry {i})"
        )));
    }
    let mut worst = 0.0_f64;
    for (i, row) in q.rows.iter().enumerate() {
        for &(j, qij) in row {
            let qji = q.rate(j, i);
            worst = worst.max((mu[i] * qij - mu[j] * qji).abs());
        }
    }
    Ok(worst)
}

/// Stationary expectation of the net current across bond `k` (1-based).
pub fn stationary_current(model: &Model, pi: &[f64], k: usize) -> Result<f64> {
    let n = model.len();
    if k == 0 || k > model.bond_count() || pi.len() != 1 << n {
        return Err(GklsError::Index { index: k, len: n });
    }
    Ok(pi
        .iter()
        .enumerate()
        .filter(|(_, &p)| p != 0.0)
        .map(|(i, &p)| p * model.bond_current(&decode_state(i, n), k - 1))
        .sum())
}

/// Residuals of the five block identities satisfied by the open Ising measure
/// for arbitrary rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LemmaResiduals {
    pub bulk_sum: f64,
    pub h_minus: f64,
    pub h_plus: f64,
    pub b_minus: f64,
    pub b_plus: f64,
}

impl LemmaResiduals {
    pub fn max(&self) -> f64 {
        [self.bulk_sum, self.h_minus, self.h_plus, self.b_minus, self.b_plus]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

/// Compare the action of each generator block on the open Ising measure with
/// its closed-form diagonal image. Requires an open lattice with `5 <= L <= 12`.
///
/// Every residual is an `inf`-norm normalized by the largest block outflow.
pub fn lemma_identity_residuals(model: &Model, m: &MeasureParams) -> Result<LemmaResiduals> {
    let n = model.len();
    if model.topology() != Topology::Open {
        return Err(GklsError::Domain(
            "the block identities concern the open lattice".into(),
        ));
    }
    if !(5..=12).contains(&n) {
        return Err(GklsError::Resource {
            requested: n,
            min: 5,
            max: 12,
        });
    }
    let dc = derived_constants(model.kinetics(), model.boundary(), m);
    let (x, y) = (m.x, m.y);
    let dim = 1usize << n;
    let mu = ising_measure_vector(n, Topology::Open, m, true)?;

    // block action (mu^T Q_block)(s) for a transition set
    let block = |moves: &dyn Fn(&[u8], usize) -> Vec<(usize, f64)>| -> (Vec<f64>, f64) {
        let mut out = vec![0.0; dim];
        let mut scale = 0.0_f64;
        for i in 0..dim {
            let occ = decode_state(i, n);
            let mut exit = 0.0;
            for (j, q) in moves(&occ, i) {
                out[j] += mu[i] * q;
                exit += q;
            }
            out[i] -= mu[i] * exit;
            scale = scale.max(mu[i] * exit);
        }
        (out, scale)
    };
    let swap = |i: usize, b: usize| i ^ (1 << b) ^ (1 << (b + 1));
    let bonds = |range: std::ops::Range<usize>| {
        move |occ: &[u8], i: usize| -> Vec<(usize, f64)> {
            range
                .clone()
                .filter_map(|b| {
                    let (r, l) = model.bond_rates(occ, b);
                    (r + l > 0.0).then(|| (swap(i, b), r + l))
                })
                .collect()
        }
    };
    let flip = |side: Side, bit: usize| {
        move |occ: &[u8], i: usize| -> Vec<(usize, f64)> {
            let q = model.reservoir_rate(occ, side);
            if q > 0.0 {
                vec![(i ^ (1 << bit), q)]
            } else {
                Vec::new()
            }
        }
    };

    // closed-form images; n(k), v(k) use 1-based sites
    let image = |f: &dyn Fn(&dyn Fn(usize) -> f64) -> f64| -> Vec<f64> {
        (0..dim)
            .map(|i| {
                let occ = decode_state(i, n);
                let nk = |k: usize| occ[k - 1] as f64;
                f(&nk) * mu[i]
            })
            .collect()
    };
    let l = n;
    let rhs_h_minus = image(&|nk| {
        let v = |k| 1.0 - nk(k);
        dc.c0 * (nk(2) - nk(1)) + dc.c1 * nk(1) * v(2) * nk(3) + dc.c2 * v(1) * nk(2) * nk(3)
    });
    let rhs_h_plus = image(&|nk| {
        let v = |k| 1.0 - nk(k);
        -(dc.c0 * (nk(l - 1) - nk(l)) + dc.c1 * nk(l - 2) * v(l - 1) * nk(l) + dc.c2 * nk(l - 2) * nk(l - 1) * v(l))
    });
    let rhs_bulk = image(&|nk| {
        let v = |k| 1.0 - nk(k);
        -(dc.c0 * nk(2) + dc.c1 * nk(1) * v(2) * nk(3) + dc.c2 * nk(2) * (1.0 - v(1) * v(3)))
            + (dc.c0 * nk(l - 1) + dc.c1 * nk(l - 2) * v(l - 1) * nk(l) + dc.c2 * nk(l - 1) * (1.0 - v(l - 2) * v(l)))
    });
    let rhs_b_minus = image(&|nk| {
        let (a, b) = (dc.c1m, dc.c2m);
        -a * x + a * (1.0 + x) * nk(1) + (a - b) * x * nk(2) - (a * (1.0 + x) - b * (x + 1.0 / y)) * nk(1) * nk(2)
    });
    let rhs_b_plus = image(&|nk| {
        let (a, b) = (dc.c1p, dc.c2p);
        a * x - (a - b) * x * nk(l - 1) - a * (1.0 + x) * nk(l)
            + (a * (1.0 + x) - b * (x + 1.0 / y)) * nk(l - 1) * nk(l)
    });

    let diff = |(lhs, scale): (Vec<f64>, f64), rhs: &[f64]| -> f64 {
        let d = lhs.iter().zip(rhs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        d / scale.max(f64::MIN_POSITIVE)
    };
    Ok(LemmaResiduals {
        bulk_sum: diff(block(&bonds(1..n - 2)), &rhs_bulk),
        h_minus: diff(block(&bonds(0..1)), &rhs_h_minus),
        h_plus: diff(block(&bonds(n - 2..n - 1)), &rhs_h_plus),
        b_minus: diff(block(&flip(Side::Left, 0)), &rhs_b_minus),
        b_plus: diff(block(&flip(Side::Right, n - 1)), &rhs_b_plus),
    })
}

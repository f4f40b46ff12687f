mod common;

use common::*;
use gkls_core::model::BulkKinetics;
use gkls_core::phase::*;
use gkls_core::Exec;
use rand::Rng;

fn curve(kin: &BulkKinetics) -> CurrentDensityCurve {
    build_curve(kin, 400, Exec::Parallel).unwrap()
}

fn eps0_rho0(k: &BulkKinetics) -> f64 {
    0.5 * (k.r * (1.0 + k.kappa) - k.ell * (1.0 + k.lambda)) / (k.r * k.kappa - k.ell * k.lambda)
}

fn eps0_current(k: &BulkKinetics, rho: f64) -> f64 {
    rho * (1.0 - rho) * (k.r - k.ell + (k.r * k.kappa - k.ell * k.lambda) * (1.0 - 2.0 * rho))
}

#[test]
fn eps0_curve_matches_closed_form() {
    let mut g = rng(31);
    for _ in 0..20 {
        let kin = BulkKinetics::new(
            g.random_range(0.1..3.0),
            g.random_range(0.1..3.0),
            g.random_range(-0.9..0.9),
            g.random_range(-0.9..0.9),
            0.0,
        )
        .unwrap();
        for p in curve(&kin).samples() {
            assert!((p.j - eps0_current(&kin, p.rho)).abs() < 1e-10);
        }
    }
}

#[test]
fn zero_crossing_matches_eps0_formula() {
    let mut g = rng(32);
    let (mut inside, mut outside) = (0, 0);
    while inside < 100 || outside < 100 {
        let kin = BulkKinetics::new(
            g.random_range(0.1..3.0),
            g.random_range(0.1..3.0),
            g.random_range(-0.95..0.95),
            g.random_range(-0.95..0.95),
            0.0,
        )
        .unwrap();
        let b = kin.r * kin.kappa - kin.ell * kin.lambda;
        let d = kin.r - kin.ell;
        // stay clear of the window edges where rho0 touches 0 or 1
        let margin = 1e-3 * b.abs().max(1e-3);
        if (d.abs() - b.abs()).abs() < margin {
            continue;
        }
        let zeros = curve(&kin).zero_crossings().to_vec();
        if d.abs() < b.abs() {
            if inside == 100 {
                continue;
            }
            inside += 1;
            assert_eq!(zeros.len(), 1, "{kin:?}");
            assert!(
                (zeros[0] - eps0_rho0(&kin)).abs() < 1e-10,
                "{} vs {}",
                zeros[0],
                eps0_rho0(&kin)
            );
        } else {
            if outside == 100 {
                continue;
            }
            outside += 1;
            assert!(zeros.is_empty(), "{kin:?}: {zeros:?}");
        }
    }
}

#[test]
fn classify_brute_force() {
    let kins = [
        BulkKinetics::tasep(),
        BulkKinetics::new(1.0, 1.0, 0.5, 0.0, 0.0).unwrap(),
        BulkKinetics::new(4.3, 4.5, -0.697, -7.0 / 9.0, -2.0 / 3.0).unwrap(),
    ];
    let mut g = rng(33);
    for kin in kins {
        let c = curve(&kin);
        let grid: Vec<(f64, f64)> = (1..100_000)
            .map(|i| i as f64 / 100_000.0)
            .map(|r| (r, c.current_at(r).unwrap()))
            .collect();
        for _ in 0..20 {
            let (a, b) = (g.random_range(0.01..0.99), g.random_range(0.01..0.99));
            let l = classify(a, b, &c).unwrap();
            let (lo, hi) = (a.min(b), a.max(b));
            let inside = grid.iter().filter(|p| p.0 >= lo && p.0 <= hi).map(|p| p.1);
            let ends = [c.current_at(a).unwrap(), c.current_at(b).unwrap()];
            let want = if a < b {
                inside.chain(ends).fold(f64::INFINITY, f64::min)
            } else {
                inside.chain(ends).fold(f64::NEG_INFINITY, f64::max)
            };
            assert!((l.bulk_current - want).abs() < 1e-8, "{a} {b}: {l:?} vs {want}");
            assert!(
                (c.current_at(l.bulk_density).unwrap() - l.bulk_current).abs() < 1e-12 || l.phase == Phase::Coexistence
            );
            assert!(l.bulk_current.abs() <= c.max_abs_current());
        }
    }
}

#[test]
fn tasep_labels_are_particle_hole_symmetric() {
    let c = curve(&BulkKinetics::tasep());
    let mut g = rng(34);
    for _ in 0..100 {
        let (a, b) = (g.random_range(0.01..0.99), g.random_range(0.01..0.99));
        let (l, m) = (classify(a, b, &c).unwrap(), classify(1.0 - b, 1.0 - a, &c).unwrap());
        let mirrored = match l.phase {
            Phase::LowDensity => Phase::HighDensity,
            Phase::HighDensity => Phase::LowDensity,
            p => p,
        };
        assert_eq!(m.phase, mirrored);
        assert!((l.bulk_current - m.bulk_current).abs() < 1e-12);
    }
}

#[test]
fn tasep_grid_has_three_phases_and_first_order_line() {
    let c = curve(&BulkKinetics::tasep());
    let grid = phase_grid(&c, 40, Exec::Parallel).unwrap();
    for cell in &grid.cells {
        let (a, b) = (cell.rho_minus, cell.rho_plus);
        let want = if a == b {
            // degenerate interval: the bulk takes the common boundary density
            assert_eq!(cell.label.bulk_density, a);
            cell.label.phase
        } else if a >= 0.5 && b <= 0.5 {
            Phase::MaximalCurrent
        } else if a < 0.5 && a + b < 1.0 {
            Phase::LowDensity
        } else if b > 0.5 && a + b > 1.0 {
            Phase::HighDensity
        } else {
            Phase::Coexistence
        };
        assert_eq!(cell.label.phase, want, "({a}, {b})");
        // no reversal: the uphill region rho- < rho+ < rho0 extends to rho0 = 1
        assert_eq!(cell.uphill, a < b);
    }
    assert_eq!(grid.count(Phase::MinimalCurrent), 0);
    let line = coexistence_line(&c, &grid).unwrap();
    assert!(!line.is_empty());
    for (a, b) in line {
        assert!((a - (1.0 - b)).abs() < 1e-6, "({a}, {b})");
    }
}

#[test]
fn reversal_grid_has_both_extremal_phases_and_uphill_regions() {
    let kin = BulkKinetics::new(4.3, 4.5, -0.697, -7.0 / 9.0, -2.0 / 3.0).unwrap();
    let c = curve(&kin);
    let ext = c.extrema().to_vec();
    assert_eq!(ext.len(), 2);
    let rho0 = c.zero_crossings()[0];
    let grid = phase_grid(&c, 60, Exec::Parallel).unwrap();
    assert!(grid.count(Phase::MaximalCurrent) > 0);
    assert!(grid.count(Phase::MinimalCurrent) > 0);
    assert!(grid.bounded_by_lines(Phase::MaximalCurrent, ext[0].rho));
    assert!(grid.bounded_by_lines(Phase::MinimalCurrent, ext[1].rho));
    for cell in &grid.cells {
        let (a, b) = (cell.rho_minus, cell.rho_plus);
        let region = (a > b && b > rho0) || (a < b && b < rho0);
        if cell.label.tie || cell.label.phase == Phase::Coexistence {
            continue;
        }
        assert_eq!(cell.uphill, region, "({a}, {b}) {:?}", cell.label);
    }
}

#[test]
fn sequential_and_parallel_grids_agree() {
    let c = curve(&BulkKinetics::new(1.0, 1.0, 0.5, 0.0, 0.0).unwrap());
    assert_eq!(
        phase_grid(&c, 12, Exec::Sequential).unwrap(),
        phase_grid(&c, 12, Exec::Parallel).unwrap()
    );
}

use gkls_core::model::*;
use proptest::prelude::*;

fn kinetics() -> impl Strategy<Value = BulkKinetics> {
    (0.0..5.0f64, 0.0..5.0f64, -1.0..=1.0f64, -1.0..=1.0f64, -0.99..0.99f64)
        .prop_map(|(r, l, k, la, e)| BulkKinetics::new(r, l, k, la, e).unwrap())
}

fn configuration(top: Topology) -> impl Strategy<Value = Configuration> {
    prop::collection::vec(0u8..=1, 4..24).prop_map(move |v| Configuration::new(v, top).unwrap())
}

proptest! {
    #[test]
    fn bulk_rates_are_nonnegative(kin in kinetics(), cfg in configuration(Topology::Periodic)) {
        for k in 1..=cfg.len() {
            prop_assert!(bulk_right_rate(&cfg, k, &kin).unwrap() >= 0.0);
            prop_assert!(bulk_left_rate(&cfg, k, &kin).unwrap() >= 0.0);
        }
    }

    #[test]
    fn open_rates_are_nonnegative(kin in kinetics(), cfg in configuration(Topology::Open)) {
        for side in [Side::Left, Side::Right] {
            for v in [BoundaryVariant::AsWritten, BoundaryVariant::VacuumExtended] {
                let (r, l) = boundary_jump_rates(&cfg, side, &kin, v).unwrap();
                prop_assert!(r >= 0.0 && l >= 0.0);
            }
        }
    }

    #[test]
    fn flip_and_swap_are_involutions(cfg in configuration(Topology::Periodic), k in 1usize..24) {
        let k = (k - 1) % cfg.len() + 1;
        prop_assert_eq!(cfg.flip(k).unwrap().flip(k).unwrap(), cfg.clone());
        prop_assert_eq!(cfg.swap(k).unwrap().swap(k).unwrap(), cfg.clone());
        prop_assert_eq!(cfg.swap(k).unwrap().particles(), cfg.particles());
    }

    #[test]
    fn index_roundtrip(cfg in configuration(Topology::Open)) {
        let back = Configuration::from_index(cfg.index(), cfg.len(), Topology::Open).unwrap();
        prop_assert_eq!(back, cfg);
    }

    #[test]
    fn omega_rates_meet_the_invariance_equalities(
        kin in kinetics(),
        x in 0.05..20.0f64,
        w in prop::array::uniform4(0.0..3.0f64),
    ) {
        let m = kin.measure(x).unwrap();
        let floor = -(kin.r * (1.0 + kin.kappa)).min(kin.ell * (1.0 + kin.lambda));
        let om = Omegas { minus: [floor + w[0], floor + w[1]], plus: [floor + w[2], floor + w[3]] };
        let b = boundary_rates_from_omegas(&kin, &m, &om).unwrap();
        prop_assert!(b.validate().is_ok());
        let dc = derived_constants(&kin, &b, &m);
        let target = dc.c0 / (1.0 + x);
        let scale = [dc.c0, dc.c1m, dc.c2m, dc.c1p, dc.c2p].iter().fold(1.0f64, |a, v| a.max(v.abs()));
        for c in [dc.c1m, dc.c2m, dc.c1p, dc.c2p] {
            prop_assert!((c - target).abs() < 1e-14 * scale, "{} vs {}", c, target);
        }
    }

    #[test]
    fn ring_current_reverses_under_mirror(kin in kinetics(), cfg in configuration(Topology::Periodic)) {
        // swapping the roles of r/ell and kappa/lambda mirrors the lattice
        let mirror = BulkKinetics::new(kin.ell, kin.r, kin.lambda, kin.kappa, kin.epsilon).unwrap();
        let n = cfg.len();
        let rev: Vec<u8> = cfg.occupations().iter().rev().copied().collect();
        let rev = Configuration::new(rev, Topology::Periodic).unwrap();
        for k in 1..=n {
            let j = instantaneous_current(&cfg, k, &kin, BoundaryVariant::VacuumExtended).unwrap();
            let kk = (n - k + n - 1) % n + 1;
            let jm = instantaneous_current(&rev, kk, &mirror, BoundaryVariant::VacuumExtended).unwrap();
            prop_assert!((j + jm).abs() < 1e-12);
        }
    }
}

use proptest::prelude::*;

use hrtf_core::datamodel::{build_cipic_grid, Direction, Side, HRIR_LEN};
use hrtf_core::grouping::{build_router, DeMask, Strategy as Grouping, DE_BAND_HZ};
use hrtf_core::pipeline::lsd;
use hrtf_core::preproc::{SpectrumAnalyzer, N_BINS};

fn spectrum() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-80.0f64..20.0, N_BINS)
}

fn mask_with(energy: &[f64], threshold: f64) -> DeMask {
    let grid = build_cipic_grid();
    DeMask {
        threshold,
        band_hz: DE_BAND_HZ,
        source: vec!["s".into()],
        band_energy: grid
            .directions
            .iter()
            .enumerate()
            .map(|(i, d)| (d.side() == Side::Contralateral).then(|| energy[i % energy.len()]))
            .collect(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lsd_is_a_nonnegative_symmetric_rms(a in spectrum(), b in spectrum()) {
        let d = lsd(&a, &b, None).unwrap();
        prop_assert!(d >= 0.0);
        prop_assert_eq!(d, lsd(&b, &a, None).unwrap());
        prop_assert_eq!(lsd(&a, &a, None).unwrap(), 0.0);
        let max = a.iter().zip(&b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        prop_assert!(d <= max + 1e-12);
    }

    #[test]
    fn lsd_shift_invariance(a in spectrum(), b in spectrum(), c in -30.0f64..30.0) {
        let a2: Vec<f64> = a.iter().map(|v| v + c).collect();
        let b2: Vec<f64> = b.iter().map(|v| v + c).collect();
        let d = lsd(&a, &b, None).unwrap();
        prop_assert!((lsd(&a2, &b2, None).unwrap() - d).abs() <= 1e-12 * d.max(1.0));
    }

    #[test]
    fn spectrum_scale_equivariance(
        hrir in prop::collection::vec(-1.0f64..1.0, HRIR_LEN),
        c in 0.01f64..100.0,
    ) {
        prop_assume!(hrir.iter().any(|v| v.abs() > 1e-3));
        let analyzer = SpectrumAnalyzer::standard();
        let base = analyzer.hrtf_db(&hrir).unwrap();
        let scaled: Vec<f64> = hrir.iter().map(|v| v * c).collect();
        let shift = 20.0 * c.log10();
        for (s, b) in analyzer.hrtf_db(&scaled).unwrap().iter().zip(&base) {
            prop_assert!((s - b - shift).abs() <= 1e-9);
        }
    }

    #[test]
    fn hybrid_router_partitions_grid(
        energy in prop::collection::vec(0.0f64..1.0, 1..40),
        threshold in 0.05f64..0.95,
    ) {
        let grid = build_cipic_grid();
        let mask = mask_with(&energy, threshold);
        let router = build_router(Grouping::Hybrid, &grid, Some(&mask)).unwrap();
        prop_assert!(router.check_partition().is_ok());
        prop_assert_eq!(router.domain().len(), grid.len());
        for (i, d) in grid.directions.iter().enumerate() {
            let g = router.route(i).unwrap();
            let label = g.id.label.as_str();
            if d.side() == Side::Ipsilateral {
                prop_assert!(label.starts_with("left_"));
            } else {
                prop_assert_eq!(label == "inner", mask.is_inner(i) == Some(true));
            }
        }
    }

    #[test]
    fn directions_lie_on_the_sphere(az in -90.0f64..=90.0, el in -90.0f64..270.0, r in 0.1f64..5.0) {
        let d = Direction::new(az, el, r).unwrap();
        let norm = d.cartesian.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!((norm - r).abs() <= 1e-12 * r);
    }
}

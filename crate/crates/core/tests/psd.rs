use granulab_core::psd::binned_quantiles;
use granulab_core::{compute_psd, PsdTargets, QuantileConvention};
use proptest::prelude::*;

/// Linear interpolation between order statistics at zero-based rank p(n-1).
fn oracle_number(sizes: &[f64], p: f64) -> f64 {
    let mut s = sizes.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = p * (s.len() as f64 - 1.0);
    let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
    s[lo] + (h - lo as f64) * (s[hi] - s[lo])
}

/// Smallest listed size whose cumulative size³ share reaches p, by direct sums.
fn oracle_mass(sizes: &[f64], p: f64) -> f64 {
    let total: f64 = sizes.iter().map(|x| x.powi(3)).sum();
    sizes
        .iter()
        .copied()
        .filter(|&s| sizes.iter().filter(|&&x| x <= s).map(|x| x.powi(3)).sum::<f64>() >= p * total * (1.0 - 1e-12))
        .fold(f64::INFINITY, f64::min)
}

proptest! {
    #[test]
    fn matches_brute_force(sizes in prop::collection::vec(0.1f64..20.0, 1..300)) {
        let n = compute_psd(&sizes, QuantileConvention::NumberWeighted).unwrap();
        let m = compute_psd(&sizes, QuantileConvention::MassWeighted).unwrap();
        for (k, p) in [0.1, 0.5, 0.9].into_iter().enumerate() {
            prop_assert!((n.as_array()[k] - oracle_number(&sizes, p)).abs() <= 1e-9);
            prop_assert!((m.as_array()[k] - oracle_mass(&sizes, p)).abs() <= 1e-9);
        }
        prop_assert!(n.is_ordered() && m.is_ordered());
    }

    #[test]
    fn permutation_and_scale(mut sizes in prop::collection::vec(0.1f64..20.0, 1..200), k in 0.1f64..10.0) {
        let base = compute_psd(&sizes, QuantileConvention::NumberWeighted).unwrap();
        sizes.reverse();
        prop_assert_eq!(compute_psd(&sizes, QuantileConvention::NumberWeighted).unwrap(), base);
        let scaled: Vec<f64> = sizes.iter().map(|s| s * k).collect();
        let t = compute_psd(&scaled, QuantileConvention::NumberWeighted).unwrap();
        for (a, b) in t.as_array().iter().zip(base.scaled(k).as_array()) {
            prop_assert!((a - b).abs() <= 1e-9 * b.max(1.0));
        }
    }

    #[test]
    fn mass_weighting_never_lowers_quantiles(sizes in prop::collection::vec(0.1f64..20.0, 2..200)) {
        // Upweighting large sizes can only move the cumulative curve right,
        // up to the interpolation slack between order statistics.
        let n = compute_psd(&sizes, QuantileConvention::NumberWeighted).unwrap();
        let m = compute_psd(&sizes, QuantileConvention::MassWeighted).unwrap();
        let mut s = sizes.clone();
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (k, p) in [0.1, 0.5, 0.9].into_iter().enumerate() {
            let floor = s[(p * (s.len() - 1) as f64).floor() as usize];
            prop_assert!(m.as_array()[k] >= floor, "{:?} vs {:?}", m, n);
        }
    }

    #[test]
    fn binned_quantiles_lie_in_support(weights in prop::collection::vec(0.0f64..5.0, 1..30)) {
        prop_assume!(weights.iter().sum::<f64>() > 0.0);
        let edges: Vec<f64> = (0..=weights.len()).map(|i| 1.0 + i as f64 * 0.5).collect();
        let t = binned_quantiles(&edges, &weights).unwrap();
        prop_assert!(t.is_ordered());
        prop_assert!(t.d10 >= edges[0] && t.d90 <= *edges.last().unwrap());
    }
}

#[test]
fn known_lists() {
    let ten: Vec<f64> = (1..=10).map(f64::from).collect();
    let t = compute_psd(&ten, QuantileConvention::NumberWeighted).unwrap();
    for (a, b) in t.as_array().iter().zip([1.9, 5.5, 9.1]) {
        assert!((a - b).abs() < 1e-12);
    }
    assert_eq!(compute_psd(&[5.0; 100], QuantileConvention::MassWeighted).unwrap(), PsdTargets::new(5.0, 5.0, 5.0));
}

use granulab_core::sampler::{sample_scene_spec, sample_trunc_normal, scene_rng, GenerationConfig};
use granulab_core::TruncNormalParams;
use proptest::prelude::*;

fn phi(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

fn trunc_cdf(p: &TruncNormalParams, x: f64) -> f64 {
    let lo = phi((p.a - p.mu) / p.sigma);
    let hi = phi((p.b - p.mu) / p.sigma);
    ((phi((x - p.mu) / p.sigma) - lo) / (hi - lo)).clamp(0.0, 1.0)
}

fn ks(p: &TruncNormalParams, mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = trunc_cdf(p, x);
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn sizes_follow_the_truncated_law() {
    let sets = [(0.1, 20.0, 10.5, 7.2), (0.1, 20.0, 6.0, 6.0), (0.1, 20.0, 12.0, 8.0), (2.0, 3.0, 0.0, 1.0)];
    for (i, &(a, b, mu, sigma)) in sets.iter().enumerate() {
        let p = TruncNormalParams::new(a, b, mu, sigma).unwrap();
        let xs = sample_trunc_normal(&p, 10_000, &mut scene_rng(100 + i as u64)).unwrap();
        let d = ks(&p, xs.clone());
        assert!(d < 0.02, "{p:?}: KS {d}");
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64).sqrt();
        assert!((mean - p.mean()).abs() < 4.0 * sd / 100.0, "{p:?}: mean {mean} vs {}", p.mean());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn draws_stay_in_bounds(a in 0.01f64..10.0, width in 0.01f64..20.0, mu in -20.0f64..40.0, sigma in 0.05f64..15.0, seed in any::<u64>()) {
        let p = TruncNormalParams::new(a, a + width, mu, sigma).unwrap();
        if let Ok(xs) = sample_trunc_normal(&p, 500, &mut scene_rng(seed)) {
            prop_assert!(xs.iter().all(|&x| x >= p.a && x <= p.b));
        }
    }

    #[test]
    fn scene_specs_respect_config(id in 0u64..1_000_000, seed in any::<u64>()) {
        let cfg = GenerationConfig { count_range: (5, 40), ..GenerationConfig::default() };
        let spec = sample_scene_spec(&cfg, id, seed).unwrap();
        prop_assert!((6.0..=12.0).contains(&spec.params.mu) && (6.0..=8.0).contains(&spec.params.sigma));
        prop_assert!((5..=40).contains(&spec.count) && spec.sizes.len() == spec.count);
        prop_assert!(spec.sizes.iter().all(|&s| (0.1..=20.0).contains(&s)));
        let half = 150.0 - 10.0;
        prop_assert!(spec.drop_positions.iter().all(|p| p[0].abs() <= half && p[1].abs() <= half && p[2] >= 20.0));
        prop_assert_eq!(sample_scene_spec(&cfg, id, seed).unwrap(), spec);
    }
}

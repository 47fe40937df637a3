mod common;

use cluster_contrast::datagen::{generate, parse_tsv, to_tsv, GenParams};
use cluster_contrast::eval::{class_distance_stats, distance_stats};
use cluster_contrast::linalg::seeded_rng;
use cluster_contrast::Encoder;
use common::{dot, unit};
use proptest::prelude::*;
use rand::Rng;
use std::path::Path;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tsv_round_trip_is_exact(
        n_ids in 1usize..6,
        per_id in 1usize..6,
        d_in in 4usize..8,
        noise in 0.0f64..2.0,
        n_cameras in 1usize..4,
        shift in 0.0f64..1.0,
        seed in any::<u64>(),
    ) {
        let d = generate(&GenParams { n_ids, per_id, d_in, noise_sigma: noise, n_cameras, camera_shift_sigma: shift, seed }).unwrap();
        let back = parse_tsv(&to_tsv(&d), Path::new("mem.tsv")).unwrap();
        prop_assert_eq!(back.instances(), d.instances());
    }
}

#[test]
fn distance_stats_match_pairwise_reference() {
    let mut rng = seeded_rng(9);
    for _ in 0..30 {
        let n = rng.random_range(1..60);
        let d = rng.random_range(2..6);
        let feats: Vec<_> = (0..n).map(|_| unit(&mut rng, d)).collect();
        let ids: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
        let (mut intra, mut inter) = (Vec::new(), Vec::new());
        for i in 0..n {
            for j in 0..n {
                if i < j {
                    let dist = 1.0 - dot(feats[i].values(), feats[j].values());
                    if ids[i] == ids[j] {
                        intra.push(dist)
                    } else {
                        inter.push(dist)
                    }
                }
            }
        }
        let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
        let got = distance_stats(&feats, &ids).unwrap();
        assert_eq!((got.intra_pairs, got.inter_pairs), (intra.len(), inter.len()));
        let close = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(a), Some(b)) => (a - b).abs() < 1e-12,
            (None, None) => true,
            _ => false,
        };
        assert!(close(got.intra_mean, mean(&intra)) && close(got.inter_mean, mean(&inter)));
    }
}

#[test]
fn class_distances_separate_on_clean_data() {
    let d = generate(&GenParams {
        n_ids: 5,
        per_id: 6,
        d_in: 8,
        noise_sigma: 0.05,
        n_cameras: 2,
        camera_shift_sigma: 0.0,
        seed: 2,
    })
    .unwrap();
    let mut params = vec![0.0; 8 * 8 + 8];
    for i in 0..8 {
        params[i * 8 + i] = 1.0;
    }
    let identity = Encoder::from_parts(params[..64].to_vec(), params[64..].to_vec(), 8).unwrap();
    let s = class_distance_stats(&identity, &d).unwrap();
    assert!(s.intra_mean.unwrap() < 0.05);
    assert!(s.inter_mean.unwrap() > 0.5);
}

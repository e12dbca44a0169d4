use cassist_core::assist::SpectralAttentionMask;
use cassist_core::edge::{low_encoder_features, multi_res_forward, single_res_forward, EdgeModelConfig};
use cassist_core::sim::{init_model_weights, synthetic_clips, ScenarioConfig};
use cassist_core::wavelet::{low_resolution, refine_bands, Wavelet};

#[test]
fn heads_emit_distributions() {
    let sc = ScenarioConfig::scenario1();
    let weights = init_model_weights(&sc, 3).unwrap();
    let e = &sc.edge;
    for clip in synthetic_clips(4, 16_384, 3).unwrap() {
        for start in 0..=e.patches - e.k {
            let mask = SpectralAttentionMask::window(e.patches, start, e.k).unwrap();
            let input = refine_bands(&clip, &mask, e.r_l, e.r_h, e.t_l, e.t_h, Wavelet::Db4).unwrap();
            let scores = multi_res_forward(&input, &weights, e).unwrap();
            assert_eq!(scores.probs.len(), e.classes);
            let sum: f32 = scores.probs.iter().sum();
            assert!((sum - 1.0).abs() < 1e-5, "sum {sum}");
            assert!(scores.probs.iter().all(|p| *p >= 0.0));
            assert!(scores.predicted() < e.classes);
        }
        let low = low_resolution(&clip, e.r_l, e.t_l, Wavelet::Db4).unwrap();
        let single = single_res_forward(&low, &weights, e).unwrap();
        assert!((single.probs.iter().sum::<f32>() - 1.0).abs() < 1e-5);
    }
}

#[test]
fn low_branch_ignores_the_mask() {
    let sc = ScenarioConfig::scenario1();
    let weights = init_model_weights(&sc, 4).unwrap();
    let e = &sc.edge;
    let clip = &synthetic_clips(1, 16_384, 4).unwrap()[0];
    let a = refine_bands(
        clip,
        &SpectralAttentionMask::window(8, 0, 2).unwrap(),
        e.r_l,
        e.r_h,
        e.t_l,
        e.t_h,
        Wavelet::Db4,
    )
    .unwrap();
    let b = refine_bands(
        clip,
        &SpectralAttentionMask::window(8, 6, 2).unwrap(),
        e.r_l,
        e.r_h,
        e.t_l,
        e.t_h,
        Wavelet::Db4,
    )
    .unwrap();
    assert_eq!(a.low, b.low);
    assert_ne!(a.high, b.high);
    assert_eq!(
        low_encoder_features(&a.low, &weights, e).unwrap(),
        low_encoder_features(&b.low, &weights, e).unwrap()
    );
}

#[test]
fn missing_weights_are_reported() {
    let sc = ScenarioConfig::scenario1();
    let mut weights = init_model_weights(&sc, 5).unwrap();
    let clip = &synthetic_clips(1, 16_384, 5).unwrap()[0];
    let e = EdgeModelConfig::default();
    let low = low_resolution(clip, e.r_l, e.t_l, Wavelet::Db4).unwrap();
    weights = weights.iter().filter(|(n, _)| !n.starts_with("edge.single")).fold(
        cassist_core::tensor::WeightStore::new(),
        |mut w, (n, t)| {
            w.insert(n, t.clone()).unwrap();
            w
        },
    );
    assert!(single_res_forward(&low, &weights, &e).is_err());
}

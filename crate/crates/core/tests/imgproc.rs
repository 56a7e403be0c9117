mod oracles;

use proptest::prelude::*;
use prostapipe::imgproc::{
    clahe, clip_redistribute, median_filter, preprocess, BorderPolicy, ClaheParams, GrayImage, Histogram, MedianParams,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures");

fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> GrayImage {
    let pixels = (0..w * h).map(|_| rng.gen_range(0..256u16)).collect();
    GrayImage::new(w, h, 256, pixels).unwrap()
}

#[test]
fn classic_median_matches_sorted_windows() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let img = random_image(&mut rng, 32, 32);
        for r in [1, 2] {
            for (border, mirror) in [(BorderPolicy::Replicate, false), (BorderPolicy::Reflect, true)] {
                let got = median_filter(&img, &MedianParams::classic(r, border)).unwrap();
                let want = oracles::median_by_sorting(img.pixels(), 32, 32, r, mirror);
                assert_eq!(got.pixels(), &want[..], "r={r} border={border:?}");
            }
        }
    }
}

#[test]
fn decision_median_with_zero_threshold_is_classic() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..20 {
        let w = rng.gen_range(1..20);
        let h = rng.gen_range(1..20);
        let img = random_image(&mut rng, w, h);
        for border in [BorderPolicy::Replicate, BorderPolicy::Reflect] {
            let a = median_filter(&img, &MedianParams::classic(2, border)).unwrap();
            let b = median_filter(&img, &MedianParams::decision(2, border, 0)).unwrap();
            assert_eq!(a, b);
        }
    }
}

#[test]
fn single_tile_unbounded_clip_is_global_equalization() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let params = ClaheParams::new(1, 1, 1e6, 256).unwrap();
    for _ in 0..100 {
        let w = rng.gen_range(1..48);
        let h = rng.gen_range(1..48);
        // A narrow band of levels exercises sparse histograms.
        let lo = rng.gen_range(0..200u16);
        let span = rng.gen_range(1..56u16);
        let pixels: Vec<u16> = (0..w * h).map(|_| lo + rng.gen_range(0..span)).collect();
        let img = GrayImage::new(w, h, 256, pixels).unwrap();
        let got = clahe(&img, &params).unwrap();
        assert_eq!(got.pixels(), &oracles::equalize_globally(img.pixels(), 256)[..]);
    }
}

#[test]
fn golden_fixture_is_reproduced_byte_for_byte() {
    let input = GrayImage::read(&format!("{FIXTURES}/golden_in.pgm").as_ref()).unwrap();
    let want = std::fs::read(format!("{FIXTURES}/golden_out.pgm")).unwrap();
    let out = preprocess(
        &input,
        &MedianParams::classic(1, BorderPolicy::Replicate),
        &ClaheParams::new(1, 1, 1e6, 256).unwrap(),
    )
    .unwrap();
    assert_eq!(out.encode_pgm().unwrap(), want);
}

#[test]
fn constant_images_pass_through_unchanged() {
    for v in [0u16, 77, 255] {
        let img = GrayImage::filled(17, 9, 256, v).unwrap();
        let out = preprocess(&img, &MedianParams::default(), &ClaheParams::new(4, 3, 2.0, 256).unwrap()).unwrap();
        assert_eq!(out, img);
    }
}

fn histogram() -> impl Strategy<Value = Vec<u64>> {
    (1usize..=64).prop_flat_map(|bins| prop::collection::vec(prop_oneof![0u64..5, 0u64..1000, Just(0u64)], bins))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn clipping_preserves_mass(counts in histogram(), clip in 0.0f64..8.0) {
        let h = Histogram::from_counts(counts);
        let clipped = clip_redistribute(&h, clip);
        prop_assert_eq!(clipped.total(), h.total());
        prop_assert_eq!(clipped.bins(), h.bins());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn clahe_output_stays_in_range(seed in any::<u64>(), tx in 1usize..5, ty in 1usize..5, clip in 1.0f64..6.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let img = random_image(&mut rng, 24, 20);
        let out = clahe(&img, &ClaheParams::new(tx, ty, clip, 256).unwrap()).unwrap();
        prop_assert_eq!((out.width(), out.height()), (24, 20));
        prop_assert!(out.pixels().iter().all(|&p| p < 256));
    }
}

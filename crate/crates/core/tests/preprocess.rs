//! Invariants of frame sampling and of the shared frame/map augmentation.

use egoms_core::preprocess::{
    crop_map, mirror, preprocess, sample_frames, test_frames, Augmentation, CropPos, Geometry, Mode, Sample, SCALES,
};
use egoms_tensor::rng::stream;
use proptest::prelude::*;

fn augmentation() -> impl Strategy<Value = Augmentation> {
    (0..CropPos::ALL.len(), 0..SCALES.len()).prop_map(|(p, s)| Augmentation {
        pos: CropPos::ALL[p],
        scale: SCALES[s],
        flip: false,
    })
}

proptest! {
    #[test]
    fn train_sampling_takes_one_frame_per_segment(t in 1usize..200, n in 1usize..40, seed in any::<u64>()) {
        prop_assume!(n <= t);
        let mut rng = stream(seed, "test.sampling");
        let ids = sample_frames(t, n, Mode::Train, &mut rng).unwrap();
        prop_assert_eq!(ids.len(), n);
        for (k, &i) in ids.iter().enumerate() {
            prop_assert!(k * t / n <= i && i < (k + 1) * t / n);
        }
        prop_assert!(ids.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn test_sampling_is_centred_and_increasing(t in 1usize..200, n in 1usize..40) {
        prop_assume!(n <= t);
        let ids = test_frames(t, n).unwrap();
        prop_assert!(ids.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(*ids.last().unwrap() < t);
        for (k, &i) in ids.iter().enumerate() {
            // The real-valued midpoint lies inside segment k; its floor may
            // equal the first integer of the next segment.
            prop_assert!(i * n < (k + 1) * t && (i + 1) * n > k * t);
            prop_assert_eq!(i, (2 * k * t + t) / (2 * n));
        }
    }

    #[test]
    fn flipping_twice_is_the_identity(
        frames in prop::collection::vec(0.0f32..1.0, 2 * 3 * 16),
        maps in prop::collection::vec(0.0f32..1.0, 2 * 9),
        label in 0usize..4,
    ) {
        let sample = Sample { frames, maps, label, size: 4, map_side: 3 };
        let swap = [1, 0, 2, 3];
        let once = sample.flipped(&swap);
        prop_assert_eq!(once.label, swap[label]);
        prop_assert_eq!(once.flipped(&swap), sample);
    }

    #[test]
    fn flip_commutes_with_crop_for_frames_and_maps(
        aug in augmentation(),
        pixels in prop::collection::vec(any::<u8>(), 3 * 40 * 30),
        mask in prop::collection::vec(0u8..2, 40 * 30),
    ) {
        let geom = Geometry::new(40, 30, 24, 16).unwrap();
        let plain = geom.crop(&aug);
        let flipped = geom.crop(&Augmentation { flip: true, ..aug });
        let a = preprocess(&pixels, &geom, &plain).unwrap();
        let b = preprocess(&pixels, &geom, &flipped).unwrap();
        let mirrored: Vec<f32> = a.chunks(16 * 16).flat_map(|p| mirror(p, 16)).collect();
        prop_assert_eq!(b, mirrored);
        let s = 4;
        let ma = crop_map(&mask, &geom, &plain, s);
        let mb = crop_map(&mask, &geom, &flipped, s);
        prop_assert_eq!(mb, mirror(&ma, s));
        prop_assert!(ma.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn map_of_a_full_mask_is_one_everywhere(aug in augmentation(), flip in any::<bool>()) {
        let geom = Geometry::new(40, 30, 24, 16).unwrap();
        let crop = geom.crop(&Augmentation { flip, ..aug });
        let map = crop_map(&vec![1u8; 40 * 30], &geom, &crop, 4);
        prop_assert!(map.iter().all(|&v| (v - 1.0).abs() < 1e-5), "{:?}", map);
    }
}

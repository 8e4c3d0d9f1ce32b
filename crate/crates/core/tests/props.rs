//! Property tests for the algebraic invariants.

use asc_core::budget::{
    dequantize, f16_bits_to_f64, quantize_f16, quantize_value, weights_from_bytes,
    weights_to_bytes_f32, LoadedWeights,
};
use asc_core::frontend::{feature_from_bytes, feature_to_bytes, frame_count, FeatureMap};
use asc_core::model::layers::{
    channel_shuffle, conv2d_same, depthwise_conv1d_freq, depthwise_conv1d_time, pointwise_conv,
};
use asc_core::model::WeightStore;
use asc_core::numerics::{argmax, softmax, Tensor};
use proptest::prelude::*;

fn tensor_strategy(shape: Vec<usize>) -> impl Strategy<Value = Tensor> {
    let len: usize = shape.iter().product();
    proptest::collection::vec(-10.0f64..10.0, len)
        .prop_map(move |data| Tensor::from_vec(&shape, data).unwrap())
}

proptest! {
    #[test]
    fn matmul_matches_triple_loop(
        m in 1usize..=8, k in 1usize..=8, n in 1usize..=8,
        seed in any::<u64>(),
    ) {
        let mut rng = asc_core::rng::RngStream::new(seed);
        let a = Tensor::from_vec(&[m, k], (0..m * k).map(|_| rng.normal()).collect()).unwrap();
        let b = Tensor::from_vec(&[k, n], (0..k * n).map(|_| rng.normal()).collect()).unwrap();
        let fast = a.matmul(&b).unwrap();
        for i in 0..m {
            for j in 0..n {
                let mut acc = 0.0;
                for p in 0..k {
                    acc += a.get(&[i, p]) * b.get(&[p, j]);
                }
                prop_assert!((fast.get(&[i, j]) - acc).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn softmax_is_a_distribution_preserving_argmax(
        // modest spread: beyond ~37 an entry saturates to exactly 1.0 in f64
        data in proptest::collection::vec(-15.0f64..15.0, 2..16),
    ) {
        let x = Tensor::from_vec(&[data.len()], data.clone()).unwrap();
        let y = softmax(&x).unwrap();
        let sum: f64 = y.data().iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-12);
        prop_assert!(y.data().iter().all(|&p| p > 0.0 && p < 1.0));
        prop_assert_eq!(argmax(y.data()), argmax(&data));
    }

    #[test]
    fn softmax_saturates_gracefully_on_huge_spreads(
        data in proptest::collection::vec(-1e6f64..1e6, 1..16),
    ) {
        let x = Tensor::from_vec(&[data.len()], data.clone()).unwrap();
        let y = softmax(&x).unwrap();
        prop_assert!(y.data().iter().all(|p| p.is_finite() && (0.0..=1.0).contains(p)));
        prop_assert!((y.data().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert_eq!(argmax(y.data()), argmax(&data));
    }

    #[test]
    fn channel_shuffle_round_trips(
        g in 1usize..=4, per in 1usize..=4, f in 1usize..=3, t in 1usize..=3,
        seed in any::<u64>(),
    ) {
        let c = g * per;
        let mut rng = asc_core::rng::RngStream::new(seed);
        let x = Tensor::from_vec(&[c, f, t], (0..c * f * t).map(|_| rng.normal()).collect()).unwrap();
        let y = channel_shuffle(&x, g).unwrap();
        let back = channel_shuffle(&y, c / g).unwrap();
        prop_assert_eq!(back, x.clone());
        // permutation preserves the multiset of channel slices
        let mut xs: Vec<&[f64]> = (0..c).map(|ci| &x.data()[ci * f * t..(ci + 1) * f * t]).collect();
        let mut ys: Vec<&[f64]> = (0..c).map(|ci| &y.data()[ci * f * t..(ci + 1) * f * t]).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ys.sort_by(|a, b| a.partial_cmp(b).unwrap());
        prop_assert_eq!(xs, ys);
    }

    #[test]
    fn convolutions_are_linear(
        x in tensor_strategy(vec![2, 4, 4]),
        y in tensor_strategy(vec![2, 4, 4]),
        scale in -3.0f64..3.0,
        seed in any::<u64>(),
    ) {
        let mut rng = asc_core::rng::RngStream::new(seed);
        let w2 = Tensor::from_vec(&[3, 2, 3, 3], (0..54).map(|_| rng.normal()).collect()).unwrap();
        let b0 = Tensor::zeros(&[3]).unwrap();
        let wp = Tensor::from_vec(&[3, 2], (0..6).map(|_| rng.normal()).collect()).unwrap();
        let wt = Tensor::from_vec(&[2, 3], (0..6).map(|_| rng.normal()).collect()).unwrap();
        let wf = Tensor::from_vec(&[4, 3], (0..12).map(|_| rng.normal()).collect()).unwrap();

        let close = |a: &Tensor, b: &Tensor| -> bool {
            a.data().iter().zip(b.data()).all(|(p, q)| (p - q).abs() <= 1e-9)
        };

        let sum = x.add(&y).unwrap();
        // conv2d
        prop_assert!(close(
            &conv2d_same(&x.scaled(scale), &w2, &b0).unwrap(),
            &conv2d_same(&x, &w2, &b0).unwrap().scaled(scale)
        ));
        prop_assert!(close(
            &conv2d_same(&sum, &w2, &b0).unwrap(),
            &conv2d_same(&x, &w2, &b0).unwrap().add(&conv2d_same(&y, &w2, &b0).unwrap()).unwrap()
        ));
        // pointwise
        prop_assert!(close(
            &pointwise_conv(&sum, &wp, None).unwrap(),
            &pointwise_conv(&x, &wp, None).unwrap().add(&pointwise_conv(&y, &wp, None).unwrap()).unwrap()
        ));
        // depthwise time
        prop_assert!(close(
            &depthwise_conv1d_time(&x.scaled(scale), &wt).unwrap(),
            &depthwise_conv1d_time(&x, &wt).unwrap().scaled(scale)
        ));
        // depthwise frequency with stride and multiplier
        prop_assert!(close(
            &depthwise_conv1d_freq(&sum, &wf, 2, 2).unwrap(),
            &depthwise_conv1d_freq(&x, &wf, 2, 2).unwrap()
                .add(&depthwise_conv1d_freq(&y, &wf, 2, 2).unwrap()).unwrap()
        ));
    }

    #[test]
    fn f16_quantize_is_idempotent(values in proptest::collection::vec(-60000.0f64..60000.0, 1..32)) {
        let mut store = WeightStore::new();
        store.put("w", Tensor::from_vec(&[values.len()], values).unwrap());
        let q1 = quantize_f16(&store).unwrap();
        let q2 = quantize_f16(&dequantize(&q1)).unwrap();
        prop_assert_eq!(q1, q2);
    }

    #[test]
    fn f16_round_trip_bound_on_normals(mag in -13.0f64..15.0, frac in 1.0f64..2.0, neg in any::<bool>()) {
        let x = if neg { -1.0 } else { 1.0 } * frac * 2f64.powf(mag);
        prop_assume!(x.abs() <= 65504.0 && x.abs() >= 2f64.powi(-14));
        let rt = f16_bits_to_f64(quantize_value(x).unwrap());
        prop_assert!(((rt - x) / x).abs() <= 2f64.powi(-11));
    }

    #[test]
    fn weights_file_round_trips_bitwise(
        n_tensors in 0usize..4,
        seed in any::<u64>(),
    ) {
        let mut rng = asc_core::rng::RngStream::new(seed);
        let mut store = WeightStore::new();
        for i in 0..n_tensors {
            let rank = 1 + rng.below(3);
            let shape: Vec<usize> = (0..rank).map(|_| 1 + rng.below(4)).collect();
            let len: usize = shape.iter().product();
            // values representable in f32 so narrowing is lossless
            let data: Vec<f64> = (0..len).map(|_| (rng.normal() as f32) as f64).collect();
            store.put(format!("t{i}.w"), Tensor::from_vec(&shape, data).unwrap());
        }
        let bytes = weights_to_bytes_f32(&store).unwrap();
        match weights_from_bytes(&bytes).unwrap() {
            LoadedWeights::F32(loaded) => {
                prop_assert_eq!(&loaded, &store);
                prop_assert_eq!(weights_to_bytes_f32(&loaded).unwrap(), bytes);
            }
            _ => prop_assert!(false, "wrong precision"),
        }
    }

    #[test]
    fn frame_count_law_holds(n in 1usize..100_000, hop in 1usize..5000) {
        prop_assert_eq!(frame_count(n, hop), 1 + n / hop);
    }

    #[test]
    fn melf_round_trips_bitwise(
        n_mels in 1usize..8, n_frames in 1usize..8,
        seed in any::<u64>(),
    ) {
        let mut rng = asc_core::rng::RngStream::new(seed);
        let len = n_mels * n_frames;
        let data: Vec<f64> = (0..len).map(|_| (rng.normal() as f32) as f64).collect();
        let feat = FeatureMap::new(Tensor::from_vec(&[n_mels, n_frames], data).unwrap(), None).unwrap();
        let bytes = feature_to_bytes(&feat);
        let back = feature_from_bytes(&bytes).unwrap();
        prop_assert_eq!(&back, &feat);
        prop_assert_eq!(feature_to_bytes(&back), bytes);
    }
}

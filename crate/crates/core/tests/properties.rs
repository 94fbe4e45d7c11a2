use proptest::prelude::*;

use sparsedeploy::csc::CscTensor;
use sparsedeploy::model::{toy_cnn_layers, TOY_INPUT};
use sparsedeploy::pruner::prune_level;
use sparsedeploy::quantizer::{quantize_layer, AffineParams};
use sparsedeploy::sparse::{fc_sparse, forward_sparse};
use sparsedeploy::trainer::init_model;
use sparsedeploy::{CompressedModel, TensorF32};

/// Mostly zeros with runs long enough to need padding entries.
fn sparse_vec() -> impl Strategy<Value = Vec<f32>> {
    prop::collection::vec(
        prop_oneof![
            8 => Just(0.0f32),
            1 => any::<f32>().prop_filter("finite", |v| v.is_finite()),
            1 => (0usize..600).prop_map(|n| -(n as f32)),
        ],
        1..3000,
    )
    .prop_flat_map(|v| {
        let len = v.len();
        (Just(v), 0..len, 0usize..700)
    })
    .prop_map(|(mut v, at, gap)| {
        let end = (at + gap).min(v.len());
        v[at..end].iter_mut().for_each(|x| *x = 0.0);
        v
    })
}

proptest! {
    #[test]
    fn csc_round_trip(flat in sparse_vec()) {
        let t = CscTensor::encode(&flat, 0);
        prop_assert!(t.index_deltas().iter().skip(1).all(|&d| d >= 1));
        let back = t.decode().unwrap();
        prop_assert_eq!(back.len(), flat.len());
        prop_assert!(back.iter().zip(&flat).all(|(a, b)| a.to_bits() == b.to_bits()));
        prop_assert_eq!(t.nonzeros(), flat.iter().filter(|v| v.to_bits() != 0).count());
    }

    #[test]
    fn csc_round_trip_i8(flat in prop::collection::vec(prop_oneof![6 => Just(0i8), 1 => any::<i8>()], 1..2000)) {
        prop_assert_eq!(CscTensor::encode(&flat, 0).decode().unwrap(), flat);
    }

    #[test]
    fn weight_quantization_is_odd(w in prop::collection::vec(-100.0f32..100.0, 1..500)) {
        let neg: Vec<f32> = w.iter().map(|v| -v).collect();
        let (q, s) = quantize_layer(&w);
        let (qn, sn) = quantize_layer(&neg);
        prop_assert_eq!(s, sn);
        prop_assert!(q.iter().zip(&qn).all(|(a, b)| *a as i32 == -(*b as i32)));
        prop_assert!(q.iter().all(|v| (-127..=127).contains(v)));
    }

    #[test]
    fn affine_levels_round_trip(lo in -50.0f32..0.0, width in 1e-3f32..100.0) {
        let p = AffineParams::from_range(lo, lo + width);
        prop_assert_eq!(p.quantize(0.0), p.zero_point);
        for q in -128i32..=127 {
            let level = p.dequantize(q as i8);
            if level >= p.min && level <= p.max {
                prop_assert_eq!(p.quantize(level) as i32, q);
            }
        }
    }

    #[test]
    fn pruning_is_idempotent(seed in 0u64..1000, sparsity in 0.0f64..0.99) {
        let m = init_model(TOY_INPUT, toy_cnn_layers(4), seed).unwrap();
        let (once, mask) = prune_level(&m, sparsity).unwrap();
        let (twice, mask2) = prune_level(&once, sparsity).unwrap();
        prop_assert_eq!(&once, &twice);
        prop_assert_eq!(mask.layers(), mask2.layers());
    }

    #[test]
    fn fc_stream_matches_dense(
        (r, c, w, x) in (1usize..40, 1usize..12).prop_flat_map(|(r, c)| (
            Just(r),
            Just(c),
            prop::collection::vec(prop_oneof![3 => Just(0.0f32), 1 => -1.0f32..1.0], r * c),
            prop::collection::vec(-1.0f32..1.0, r),
        ))
    ) {
        let t = CscTensor::encode(&w, 0);
        let bias = vec![0.25; c];
        let out = fc_sparse(&t, &x, &bias, r, c).unwrap();
        for i in 0..c {
            let mut s = 0.0f32;
            for j in 0..r {
                s += w[i * r + j] * x[j];
            }
            prop_assert!((s + 0.25 - out[i]).abs() < 1e-6);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn sparse_forward_matches_dense(seed in 0u64..500, sparsity in 0.0f64..0.95) {
        let m = init_model(TOY_INPUT, toy_cnn_layers(4), seed).unwrap();
        let (p, _) = prune_level(&m, sparsity).unwrap();
        let c = CompressedModel::from_float(&p).unwrap();
        let x: Vec<f32> = (0..144).map(|i| ((i as u64 * 31 + seed) % 17) as f32 / 8.0 - 1.0).collect();
        let x = TensorF32::new(vec![1, 12, 12], x).unwrap();
        let dense = sparsedeploy::dense::forward_dense(&p, &x).unwrap();
        let sparse = forward_sparse(&c, &x).unwrap();
        prop_assert_eq!(dense.data(), sparse.data());
    }
}

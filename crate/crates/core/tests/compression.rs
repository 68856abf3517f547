mod oracles;

use desklm_core::compress::*;
use desklm_core::corpus::{IdStream, Markers};
use desklm_core::eval::{hit_rate, RnnPredictor};
use desklm_core::linalg::Matrix;
use desklm_core::ngram::{count_ngrams, estimate_kn};
use desklm_core::rnn::*;
use desklm_core::trainer::{NoClock, TrainConfig, TrainMode, Trainer};
use oracles::kn::random_corpus;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const M: Markers = Markers {
    unk: 0,
    bos: 1,
    eos: 2,
};

fn words(v: usize) -> Vec<String> {
    (0..v).map(|i| format!("w{i}")).collect()
}

/// Bit `i` of code `j` goes to global bit `j·bits + i`, byte-little-endian.
fn pack_bitwise(codes: &[u16], bits: u8) -> Vec<u8> {
    let total = codes.len() * bits as usize;
    let mut out = vec![0u8; total.div_ceil(8)];
    for (j, &c) in codes.iter().enumerate() {
        for i in 0..bits as usize {
            if c >> i & 1 == 1 {
                let g = j * bits as usize + i;
                out[g / 8] |= 1 << (g % 8);
            }
        }
    }
    out
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f32) -> Matrix<f32> {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-scale..scale) + 0.3)
}

#[test]
fn deployment_configuration_counts() {
    let net = build_bottleneck(10_000, DEFAULT_HIDDEN, DEFAULT_BOTTLENECK, 1).unwrap();
    assert_eq!(net.param_count(), 7_217_152);
    assert!(net.param_count() < param_count(10_000, 1024));
    let q = quantize(&net, 8, words(10_000)).unwrap();
    let size = model_size_bytes(&q);
    assert!(size > 7_217_152 && size < 7_217_152 + 100_000, "{size}");
    assert!(build_bottleneck(10, 4, 5, 0).is_err());
}

proptest! {
    #[test]
    fn error_bound_and_code_range(seed in 0u64..5000, bits in 1u8..=16, rows in 1usize..9, cols in 1usize..9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_matrix(&mut rng, rows, cols, 2.0);
        let q = QuantizedMatrix::quantize(&m, bits).unwrap();
        let bound = (q.max as f64 - q.min as f64) / (2.0 * ((1u32 << bits) - 1) as f64);
        let deq = q.dequantize();
        for (i, (&w, &c)) in m.as_slice().iter().zip(&q.codes).enumerate() {
            prop_assert!((c as u32) < 1u32 << bits);
            prop_assert!((w as f64 - q.value(c)).abs() <= bound * (1.0 + 1e-12));
            // storing the grid value as f32 adds at most half an ulp
            let d = deq.as_slice()[i];
            prop_assert!((w as f64 - d as f64).abs() <= bound + f32::EPSILON as f64 * 2.5);
            prop_assert!(d >= q.min && d <= q.max);
        }
        prop_assert_eq!(q.pack(), pack_bitwise(&q.codes, bits));
    }
}

#[test]
fn quantized_values_round_trip_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for bits in 1..=16 {
        let m = random_matrix(&mut rng, 13, 7, 1.0);
        let once = QuantizedMatrix::quantize(&m, bits).unwrap();
        let twice = QuantizedMatrix::quantize(&once.dequantize(), bits).unwrap();
        assert_eq!(twice.dequantize(), once.dequantize(), "bits {bits}");
        assert_eq!(twice.codes, once.codes);
    }
}

#[test]
fn constant_matrix_reconstructs_exactly() {
    let m = Matrix::from_vec(2, 3, vec![0.25f32; 6]);
    let q = QuantizedMatrix::quantize(&m, 5).unwrap();
    assert!(q.codes.iter().all(|&c| c == 0));
    assert_eq!(q.dequantize(), m);
}

#[test]
fn bit_width_is_validated() {
    let m = Matrix::from_vec(1, 2, vec![0.0f32, 1.0]);
    assert!(QuantizedMatrix::quantize(&m, 0).is_err());
    assert!(QuantizedMatrix::quantize(&m, 17).is_err());
    let bad = Matrix::from_vec(1, 2, vec![0.0f32, f32::NAN]);
    assert!(QuantizedMatrix::quantize(&bad, 8).is_err());
}

#[test]
fn file_image_round_trips_and_matches_reported_size() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let net = BottleneckParams::<f32>::random(21, 7, 3, 0.5, &mut rng).unwrap();
    for bits in [1, 3, 7, 8, 11, 16] {
        let q = quantize(&net, bits, words(21)).unwrap();
        let bytes = q.to_bytes();
        assert_eq!(bytes.len() as u64, model_size_bytes(&q));
        assert_eq!(&bytes[..4], b"RNQZ");
        assert_eq!(QuantizedModel::from_bytes(&bytes).unwrap(), q);
    }
    let mixed = quantize_per_matrix(&net, [2, 9, 16, 5], words(21)).unwrap();
    assert_eq!(QuantizedModel::from_bytes(&mixed.to_bytes()).unwrap(), mixed);
}

#[test]
fn doubling_bits_doubles_the_payload() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    // every matrix has an even number of weights
    let net = BottleneckParams::<f32>::random(20, 8, 4, 0.5, &mut rng).unwrap();
    for bits in [1u8, 2, 4, 8] {
        let a = quantize(&net, bits, words(20)).unwrap();
        let b = quantize(&net, 2 * bits, words(20)).unwrap();
        let pa: usize = a.matrices.iter().map(|m| m.payload_bytes()).sum();
        let pb: usize = b.matrices.iter().map(|m| m.payload_bytes()).sum();
        assert_eq!(pb, 2 * pa);
        assert_eq!(model_size_bytes(&b) - model_size_bytes(&a), pa as u64);
    }
}

#[test]
fn corrupt_images_are_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let net = BottleneckParams::<f32>::random(9, 4, 2, 0.5, &mut rng).unwrap();
    let bytes = quantize(&net, 6, words(9)).unwrap().to_bytes();
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(QuantizedModel::from_bytes(&bad).is_err());
    assert!(QuantizedModel::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(QuantizedModel::from_bytes(&extra).is_err());
    let mut bits = bytes.clone();
    bits[21] = 0;
    assert!(QuantizedModel::from_bytes(&bits).is_err());
    assert!(quantize(&net, 6, words(8)).is_err());
}

#[test]
fn tying_is_structural_after_quantization() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let net = BottleneckParams::<f32>::random(9, 4, 2, 0.5, &mut rng).unwrap();
    let q = quantize(&net, 16, words(9)).unwrap();
    assert_eq!(q.param_count(), bottleneck_param_count(9, 4, 2));
    let d = q.dequantize();
    assert!(std::ptr::eq(d.output_table(), &d.e));
}

#[test]
fn sweep_on_a_trained_model() {
    let vocab = 33;
    let train = IdStream::new(random_corpus(1, 20_000, 30), vocab, M).unwrap();
    let test = IdStream::new(random_corpus(2, 3000, 30), vocab, M).unwrap();
    let ngram = estimate_kn(&count_ngrams(&train, 3).unwrap()).unwrap();
    let cfg = TrainConfig {
        hidden: 16,
        noffset: 8,
        minibatch: 4,
        unroll: 8,
        k: 8,
        max_epochs: 3,
        eta: 3e-3,
        mode: TrainMode::Nce,
        ..TrainConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let net = BottleneckParams::<f32>::random(vocab, 16, 8, 0.1, &mut rng).unwrap();
    let mut t = Trainer::with_network(cfg, net, rng, &train, &test).unwrap();
    t.run(&train, &test, &NoClock, |_, _| Ok(())).unwrap();
    let net = t.into_network();

    let base = hit_rate(&mut RnnPredictor::new(&net), &test, &ngram, 3, 10).unwrap().percent();
    let rows = quantized_hit_rate_sweep(&net, &words(vocab), &[1, 4, 16], &test, &ngram, 3, 10).unwrap();
    assert_eq!(rows.len(), 3);
    assert!((rows[2].hit_rate.percent() - base).abs() < 0.5);
    assert!(rows[0].hit_rate.percent() <= rows[2].hit_rate.percent() + 1.0);
    assert!(rows[0].size_bytes < rows[1].size_bytes && rows[1].size_bytes < rows[2].size_bytes);
    let csv = sweep_csv(&rows);
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.starts_with("bits,size_bytes,hit_rate\n1,"));
}

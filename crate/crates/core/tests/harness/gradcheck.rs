use desklm_core::linalg::Scalar;
use desklm_core::rnn::{
    bptt_grads, initial_state, Activation, BottleneckParams, BpttConfig, Gradients, NceConfig,
    Network, Objective, RnnParams,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::oracles::rnn::{finite_differences, relative_error, window_loss, Arch, Loss, Mat};

/// Denominator floor of the relative error; below it the comparison is
/// effectively absolute.
pub const REL_FLOOR: f64 = 1e-3;
pub const F32_DELTA: f64 = 1e-3;
pub const F32_TOL: f64 = 1e-2;
pub const F64_DELTA: f64 = 1e-6;
pub const F64_TOL: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct GradConfig {
    pub arch: Arch,
    pub nce: bool,
    pub vocab: usize,
    pub hidden: usize,
    pub bottleneck: usize,
    pub steps: Vec<usize>,
    pub k: usize,
    pub tanh: bool,
    pub seed: u64,
}

impl GradConfig {
    pub fn random(arch: Arch, nce: bool, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hidden = rng.random_range(2..=7);
        let batch = rng.random_range(1..=3);
        GradConfig {
            arch,
            nce,
            vocab: rng.random_range(3..=9),
            hidden,
            bottleneck: rng.random_range(1..=hidden),
            steps: (0..batch).map(|_| rng.random_range(1..=5)).collect(),
            k: rng.random_range(1..=5),
            tanh: rng.random_bool(0.3),
            seed,
        }
    }
}

fn to_mats<F: Scalar>(blocks: Vec<&desklm_core::linalg::Matrix<F>>) -> Vec<Mat> {
    blocks
        .into_iter()
        .map(|m| Mat {
            rows: m.rows(),
            cols: m.cols(),
            data: m.as_slice().iter().map(|x| x.as_f64()).collect(),
        })
        .collect()
}

/// Largest relative error between library gradients in precision `F` and
/// oracle finite differences.
pub fn max_error<F: Scalar>(cfg: &GradConfig, delta: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xdead_beef);
    let act = if cfg.tanh {
        Activation::Tanh
    } else {
        Activation::Sigmoid
    };
    let scale = 0.8;
    let v = cfg.vocab;
    let windows: Vec<Vec<u32>> = cfg
        .steps
        .iter()
        .map(|&t| (0..=t).map(|_| rng.random_range(0..v as u32)).collect())
        .collect();
    let samples: Vec<Vec<u32>> = cfg
        .steps
        .iter()
        .map(|&t| {
            (0..t * cfg.k)
                .map(|_| rng.random_range(0..v as u32))
                .collect()
        })
        .collect();
    let q: Vec<f64> = (0..v).map(|_| rng.random_range(0.05..1.0)).collect();
    let nce = NceConfig::new(q, cfg.k).unwrap();
    let wins: Vec<&[u32]> = windows.iter().map(|w| w.as_slice()).collect();
    match cfg.arch {
        Arch::Standard => {
            let net = RnnParams::<F>::random(v, cfg.hidden, scale, &mut rng).with_activation(act);
            compare(&net, cfg, &wins, &samples, &nce, delta, &mut rng)
        }
        Arch::Bottleneck => {
            let mut net =
                BottleneckParams::<F>::random(v, cfg.hidden, cfg.bottleneck, scale, &mut rng)
                    .unwrap();
            net.activation = act;
            compare(&net, cfg, &wins, &samples, &nce, delta, &mut rng)
        }
    }
}

fn compare<F: Scalar, N: Network<F>>(
    net: &N,
    cfg: &GradConfig,
    wins: &[&[u32]],
    samples: &[Vec<u32>],
    nce: &NceConfig,
    delta: f64,
    rng: &mut ChaCha8Rng,
) -> f64 {
    // random, non-resting initial states
    let h0: Vec<Vec<F>> = wins
        .iter()
        .map(|_| {
            let mut h = initial_state(net);
            for x in &mut h {
                *x += F::lit(rng.random_range(-0.3..0.3));
            }
            h
        })
        .collect();
    let h0_refs: Vec<&[F]> = h0.iter().map(|h| h.as_slice()).collect();
    let objective = if cfg.nce {
        Objective::Nce { cfg: nce, samples }
    } else {
        Objective::Softmax
    };
    let bcfg = BpttConfig {
        clip: f64::INFINITY,
        skip_target: None,
    };
    let mut grads = Gradients::for_network(net);
    bptt_grads(net, wins, &h0_refs, &objective, &bcfg, &mut grads).unwrap();

    let blocks = to_mats(net.blocks());
    let h0_f64: Vec<Vec<f64>> = h0
        .iter()
        .map(|h| h.iter().map(|x| x.as_f64()).collect())
        .collect();
    let loss = if cfg.nce {
        Loss::Nce {
            q: nce.q(),
            k: nce.k,
            ln_z: nce.ln_z,
            samples,
        }
    } else {
        Loss::Softmax
    };
    let fd = finite_differences(&blocks, delta, |b| {
        window_loss(cfg.arch, b, cfg.tanh, wins, &h0_f64, &loss, None)
    });
    let mut worst: f64 = 0.0;
    for (g, n) in grads.blocks.iter().zip(&fd) {
        for (a, &num) in g.matrix().as_slice().iter().zip(n) {
            worst = worst.max(relative_error(a.as_f64(), num, REL_FLOOR));
        }
    }
    worst
}

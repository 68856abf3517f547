//! Scalar f64 forward pass and losses written directly from the model
//! equations, for finite-difference and loss cross-checks.

/// A matrix as plain row-major data.
#[derive(Clone, Debug)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Arch {
    /// blocks: W_in (V×H), W_rec (H×H), W_out word-major (V×H)
    Standard,
    /// blocks: E (V×P), U (P×H), W_rec (H×H), D (H×P)
    Bottleneck,
}

pub enum Loss<'a> {
    Softmax,
    Nce {
        q: &'a [f64],
        k: usize,
        ln_z: f64,
        samples: &'a [Vec<u32>],
    },
}

/// Neumaier-compensated sum; keeps finite-difference quotients clean.
pub fn ksum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for x in xs {
        let t = s + x;
        c += if s.abs() >= x.abs() {
            (s - t) + x
        } else {
            (x - t) + s
        };
        s = t;
    }
    s + c
}

fn act(tanh: bool, x: f64) -> f64 {
    if tanh {
        x.tanh()
    } else {
        1.0 / (1.0 + (-x).exp())
    }
}

/// Hidden state after reading `word` from `h`.
pub fn step(arch: Arch, blocks: &[Mat], tanh: bool, h: &[f64], word: u32) -> Vec<f64> {
    let w = word as usize;
    let hn = h.len();
    (0..hn)
        .map(|j| {
            let (input, rec) = match arch {
                Arch::Standard => (blocks[0].at(w, j), &blocks[1]),
                Arch::Bottleneck => {
                    let p = blocks[0].cols;
                    (
                        ksum((0..p).map(|q| blocks[1].at(q, j) * blocks[0].at(w, q))),
                        &blocks[2],
                    )
                }
            };
            let r = ksum((0..hn).map(|i| rec.at(j, i) * h[i]));
            act(tanh, input + r)
        })
        .collect()
}

/// Score of every word for hidden state `h`.
pub fn scores(arch: Arch, blocks: &[Mat], h: &[f64]) -> Vec<f64> {
    match arch {
        Arch::Standard => {
            let out = &blocks[2];
            (0..out.rows)
                .map(|w| ksum((0..h.len()).map(|j| out.at(w, j) * h[j])))
                .collect()
        }
        Arch::Bottleneck => {
            let (e, d) = (&blocks[0], &blocks[3]);
            let f: Vec<f64> = (0..e.cols)
                .map(|p| ksum((0..h.len()).map(|j| d.at(j, p) * h[j])))
                .collect();
            (0..e.rows)
                .map(|w| ksum((0..e.cols).map(|p| e.at(w, p) * f[p])))
                .collect()
        }
    }
}

/// The NCE objective evaluated literally:
/// `−ln(p̃(t)/(p̃(t)+k·q(t))) − Σ_j ln(k·q(n_j)/(p̃(n_j)+k·q(n_j)))`.
pub fn nce_formula(
    scores: &[f64],
    target: u32,
    noise: &[u32],
    q: &[f64],
    k: usize,
    ln_z: f64,
) -> f64 {
    let pt = |w: u32| (scores[w as usize] - ln_z).exp();
    let kq = |w: u32| k as f64 * q[w as usize];
    let mut terms = vec![-(pt(target) / (pt(target) + kq(target))).ln()];
    for &n in noise {
        terms.push(-(kq(n) / (pt(n) + kq(n))).ln());
    }
    ksum(terms)
}

pub fn softmax_xent(scores: &[f64], target: u32) -> f64 {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z = ksum(scores.iter().map(|s| (s - max).exp()));
    max + z.ln() - scores[target as usize]
}

/// Summed loss over a batch of windows.
pub fn window_loss(
    arch: Arch,
    blocks: &[Mat],
    tanh: bool,
    windows: &[&[u32]],
    h_init: &[Vec<f64>],
    loss: &Loss,
    skip: Option<u32>,
) -> f64 {
    let mut terms = Vec::new();
    for (b, win) in windows.iter().enumerate() {
        let mut h = h_init[b].clone();
        for t in 0..win.len() - 1 {
            h = step(arch, blocks, tanh, &h, win[t]);
            let target = win[t + 1];
            if Some(target) == skip {
                continue;
            }
            let s = scores(arch, blocks, &h);
            terms.push(match loss {
                Loss::Softmax => softmax_xent(&s, target),
                Loss::Nce {
                    q,
                    k,
                    ln_z,
                    samples,
                } => nce_formula(&s, target, &samples[b][t * k..(t + 1) * k], q, *k, *ln_z),
            });
        }
    }
    ksum(terms)
}

/// Central finite-difference gradient of `f` with respect to every entry of
/// every block.
pub fn finite_differences(
    blocks: &[Mat],
    delta: f64,
    mut f: impl FnMut(&[Mat]) -> f64,
) -> Vec<Vec<f64>> {
    let mut work = blocks.to_vec();
    let mut out = Vec::new();
    for bi in 0..blocks.len() {
        let mut g = vec![0.0; blocks[bi].data.len()];
        for i in 0..g.len() {
            let orig = work[bi].data[i];
            work[bi].data[i] = orig + delta;
            let up = f(&work);
            work[bi].data[i] = orig - delta;
            let down = f(&work);
            work[bi].data[i] = orig;
            g[i] = (up - down) / (2.0 * delta);
        }
        out.push(g);
    }
    out
}

/// `|a − n| / max(|a|, |n|, floor)`
pub fn relative_error(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}

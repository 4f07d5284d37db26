//! Exhaustive-loop reference implementations, written straight from the operator
//! definitions with no shared code path to the library, plus randomized comparison
//! drivers. Shared by the oracle tests and the acceptance runner.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use siamese::attention::{AttentionBlock, AttentionConfig, AttentionRegistry};
use siamese::nn::{Dense, Mode, ParamStore, Session};
use siamese::tensor::{ConvGeometry, Tape, Tensor};

pub const ORACLE_TOLERANCE: f64 = 1e-6;
pub const ORACLE_CASES: usize = 100;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch");
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Row-major NCHW index.
fn at(shape: [usize; 4], n: usize, c: usize, h: usize, w: usize) -> usize {
    ((n * shape[1] + c) * shape[2] + h) * shape[3] + w
}

/// "Same" cross-correlation: `ceil(extent/stride)` outputs, odd padding goes after.
pub fn conv2d_oracle(
    x: &[f64],
    xs: [usize; 4],
    w: &[f64],
    ws: [usize; 4],
    bias: Option<&[f64]>,
    stride: usize,
) -> (Vec<f64>, [usize; 4]) {
    let [n, ci, h, wd] = xs;
    let [co, _, kh, kw] = ws;
    let ho = (h + stride - 1) / stride;
    let wo = (wd + stride - 1) / stride;
    let pad_top = ((ho - 1) * stride + kh).saturating_sub(h) / 2;
    let pad_left = ((wo - 1) * stride + kw).saturating_sub(wd) / 2;
    let os = [n, co, ho, wo];
    let mut out = vec![0.0; n * co * ho * wo];
    for b in 0..n {
        for o in 0..co {
            for i in 0..ho {
                for j in 0..wo {
                    let mut acc = bias.map_or(0.0, |bv| bv[o]);
                    for c in 0..ci {
                        for u in 0..kh {
                            for v in 0..kw {
                                let y = (i * stride + u) as isize - pad_top as isize;
                                let xx = (j * stride + v) as isize - pad_left as isize;
                                if y >= 0 && xx >= 0 && (y as usize) < h && (xx as usize) < wd {
                                    acc += x[at(xs, b, c, y as usize, xx as usize)] * w[at(ws, o, c, u, v)];
                                }
                            }
                        }
                    }
                    out[at(os, b, o, i, j)] = acc;
                }
            }
        }
    }
    (out, os)
}

pub fn max_pool_oracle(x: &[f64], xs: [usize; 4]) -> Vec<f64> {
    let [n, c, h, w] = xs;
    let os = [n, c, h / 2, w / 2];
    let mut out = vec![0.0; n * c * (h / 2) * (w / 2)];
    for b in 0..n {
        for ch in 0..c {
            for i in 0..h / 2 {
                for j in 0..w / 2 {
                    let mut m = f64::NEG_INFINITY;
                    for u in 0..2 {
                        for v in 0..2 {
                            m = m.max(x[at(xs, b, ch, 2 * i + u, 2 * j + v)]);
                        }
                    }
                    out[at(os, b, ch, i, j)] = m;
                }
            }
        }
    }
    out
}

/// 3×3 mean over a zero-padded neighbourhood, stride 1.
pub fn avg_pool3_oracle(x: &[f64], xs: [usize; 4]) -> Vec<f64> {
    let [n, c, h, w] = xs;
    let mut out = vec![0.0; x.len()];
    for b in 0..n {
        for ch in 0..c {
            for i in 0..h as isize {
                for j in 0..w as isize {
                    let mut acc = 0.0;
                    for u in -1..=1 {
                        for v in -1..=1 {
                            let (y, xx) = (i + u, j + v);
                            if y >= 0 && xx >= 0 && y < h as isize && xx < w as isize {
                                acc += x[at(xs, b, ch, y as usize, xx as usize)];
                            }
                        }
                    }
                    out[at(xs, b, ch, i as usize, j as usize)] = acc / 9.0;
                }
            }
        }
    }
    out
}

pub fn gap_oracle(x: &[f64], xs: [usize; 4]) -> Vec<f64> {
    let [n, c, h, w] = xs;
    let mut out = vec![0.0; n * c];
    for b in 0..n {
        for ch in 0..c {
            let mut acc = 0.0;
            for i in 0..h {
                for j in 0..w {
                    acc += x[at(xs, b, ch, i, j)];
                }
            }
            out[b * c + ch] = acc / (h * w) as f64;
        }
    }
    out
}

/// `y[b][o] = Σ_i x[b][i] W[o][i] + bias[o]`.
pub fn dense_oracle(x: &[f64], n: usize, f_in: usize, w: &[f64], bias: &[f64]) -> Vec<f64> {
    let f_out = bias.len();
    let mut out = vec![0.0; n * f_out];
    for b in 0..n {
        for o in 0..f_out {
            let mut acc = bias[o];
            for i in 0..f_in {
                acc += x[b * f_in + i] * w[o * f_in + i];
            }
            out[b * f_out + o] = acc;
        }
    }
    out
}

/// Softmax along `axis` of a row-major tensor, by the textbook formula.
pub fn softmax_oracle(x: &[f64], shape: &[usize], axis: usize) -> Vec<f64> {
    let outer: usize = shape[..axis].iter().product();
    let len = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let mut out = vec![0.0; x.len()];
    for o in 0..outer {
        for i in 0..inner {
            let idx = |k: usize| (o * len + k) * inner + i;
            let total: f64 = (0..len).map(|k| x[idx(k)].exp()).sum();
            for k in 0..len {
                out[idx(k)] = x[idx(k)].exp() / total;
            }
        }
    }
    out
}

fn scale_channels(x: &[f64], xs: [usize; 4], gate: &[f64]) -> Vec<f64> {
    let [n, c, h, w] = xs;
    let mut out = x.to_vec();
    for b in 0..n {
        for ch in 0..c {
            for i in 0..h {
                for j in 0..w {
                    out[at(xs, b, ch, i, j)] *= gate[b * c + ch];
                }
            }
        }
    }
    out
}

fn relu(v: Vec<f64>) -> Vec<f64> {
    v.into_iter().map(|x| x.max(0.0)).collect()
}

/// Parameters of a block, fetched by name from its store.
pub struct Params<'a>(pub &'a ParamStore<f64>, pub &'a str);

impl Params<'_> {
    pub fn get(&self, suffix: &str) -> Vec<f64> {
        let name = format!("{}.{}", self.1, suffix);
        let id = self.0.id(&name).unwrap_or_else(|| panic!("no parameter {name}"));
        self.0.get(id).data().to_vec()
    }
}

pub fn se_oracle(x: &[f64], xs: [usize; 4], p: &Params) -> Vec<f64> {
    let (n, c) = (xs[0], xs[1]);
    let z = gap_oracle(x, xs);
    let b1 = p.get("fc1.bias");
    let h = relu(dense_oracle(&z, n, c, &p.get("fc1.weight"), &b1));
    let e = dense_oracle(&h, n, b1.len(), &p.get("fc2.weight"), &p.get("fc2.bias"));
    let gate: Vec<f64> = e.into_iter().map(sigmoid).collect();
    scale_channels(x, xs, &gate)
}

pub fn eca_oracle(x: &[f64], xs: [usize; 4], p: &Params) -> Vec<f64> {
    let (n, c) = (xs[0], xs[1]);
    let z = gap_oracle(x, xs);
    let k = p.get("conv.weight");
    let half = (k.len() / 2) as isize;
    let mut gate = vec![0.0; n * c];
    for b in 0..n {
        for ch in 0..c as isize {
            let mut acc = 0.0;
            for (j, kv) in k.iter().enumerate() {
                let src = ch + j as isize - half;
                if src >= 0 && src < c as isize {
                    acc += kv * z[b * c + src as usize];
                }
            }
            gate[b * c + ch as usize] = sigmoid(acc);
        }
    }
    scale_channels(x, xs, &gate)
}

pub fn sk_oracle(x: &[f64], xs: [usize; 4], p: &Params) -> Vec<f64> {
    let (n, c) = (xs[0], xs[1]);
    let branch = |k: usize, tag: &str| {
        let w = p.get(&format!("{tag}.weight"));
        let b = p.get(&format!("{tag}.bias"));
        relu(conv2d_oracle(x, xs, &w, [c, c, k, k], Some(&b), 1).0)
    };
    let u3 = branch(3, "conv3");
    let u5 = branch(5, "conv5");
    let fused: Vec<f64> = u3.iter().zip(&u5).map(|(a, b)| a + b).collect();
    let s = gap_oracle(&fused, xs);
    let bz = p.get("fc.bias");
    let z = relu(dense_oracle(&s, n, c, &p.get("fc.weight"), &bz));
    let l3 = dense_oracle(&z, n, bz.len(), &p.get("fc3.weight"), &p.get("fc3.bias"));
    let l5 = dense_oracle(&z, n, bz.len(), &p.get("fc5.weight"), &p.get("fc5.bias"));
    let mut a3 = vec![0.0; n * c];
    let mut a5 = vec![0.0; n * c];
    for i in 0..n * c {
        let (e3, e5) = (l3[i].exp(), l5[i].exp());
        a3[i] = e3 / (e3 + e5);
        a5[i] = e5 / (e3 + e5);
    }
    let y3 = scale_channels(&u3, xs, &a3);
    let y5 = scale_channels(&u5, xs, &a5);
    y3.iter().zip(&y5).map(|(a, b)| a + b).collect()
}

pub fn sge_oracle(x: &[f64], xs: [usize; 4], p: &Params, groups: usize, eps: f64) -> Vec<f64> {
    let [n, c, h, w] = xs;
    let cg = c / groups;
    let hw = h * w;
    let (scale, shift) = (p.get("weight"), p.get("bias"));
    let mut out = x.to_vec();
    for b in 0..n {
        for g in 0..groups {
            let chans: Vec<usize> = (g * cg..(g + 1) * cg).collect();
            let val = |ch: usize, pos: usize| x[at(xs, b, ch, pos / w, pos % w)];
            let gap: Vec<f64> = chans.iter().map(|&ch| (0..hw).map(|q| val(ch, q)).sum::<f64>() / hw as f64).collect();
            let sim: Vec<f64> = (0..hw)
                .map(|q| chans.iter().zip(&gap).map(|(&ch, m)| val(ch, q) * m).sum())
                .collect();
            let mean = sim.iter().sum::<f64>() / hw as f64;
            let std = (sim.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / hw as f64).sqrt();
            for q in 0..hw {
                let gate = sigmoid(scale[g] * (sim[q] - mean) / (std + eps) + shift[g]);
                for &ch in &chans {
                    out[at(xs, b, ch, q / w, q % w)] *= gate;
                }
            }
        }
    }
    out
}

fn tensor(shape: &[usize], data: Vec<f64>) -> Tensor<f64> {
    Tensor::new(shape.to_vec(), data).expect("consistent shape")
}

/// Randomized conv2d cases: kernels 1/3/5, strides 1/2, extents 1..=8, with and without bias.
pub fn conv_cases(seed: u64, cases: usize) -> f64 {
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let xs = [r.gen_range(1..=3), r.gen_range(1..=4), r.gen_range(1..=8), r.gen_range(1..=8)];
        let k = [1, 3, 5][r.gen_range(0..3)];
        let ws = [r.gen_range(1..=4), xs[1], k, k];
        let stride = r.gen_range(1..=2);
        let x = uniform(&mut r, xs.iter().product());
        let w = uniform(&mut r, ws.iter().product());
        let bias = r.gen_bool(0.5).then(|| uniform(&mut r, ws[0]));
        let (expect, os) = conv2d_oracle(&x, xs, &w, ws, bias.as_deref(), stride);
        let mut t = Tape::new();
        let xv = t.constant(tensor(&xs, x));
        let wv = t.constant(tensor(&ws, w));
        let bv = bias.map(|b| t.constant(tensor(&[ws[0]], b)));
        let y = t
            .conv2d(xv, wv, bv, ConvGeometry::same((xs[2], xs[3]), (k, k), stride))
            .expect("conv forward");
        assert_eq!(t.shape(y), &os);
        worst = worst.max(max_abs_diff(t.value(y).data(), &expect));
    }
    worst
}

/// Max pool (even extents), 3×3 average pool and global average pool.
pub fn pool_cases(seed: u64, cases: usize) -> f64 {
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let xs = [r.gen_range(1..=3), r.gen_range(1..=4), 2 * r.gen_range(1..=4), 2 * r.gen_range(1..=4)];
        let x = uniform(&mut r, xs.iter().product());
        let mut t = Tape::new();
        let xv = t.constant(tensor(&xs, x.clone()));
        let m = t.max_pool2x2(xv).expect("max pool");
        worst = worst.max(max_abs_diff(t.value(m).data(), &max_pool_oracle(&x, xs)));

        let ys = [xs[0], xs[1], r.gen_range(1..=8), r.gen_range(1..=8)];
        let y = uniform(&mut r, ys.iter().product());
        let yv = t.constant(tensor(&ys, y.clone()));
        let a = t.avg_pool3x3(yv).expect("avg pool");
        worst = worst.max(max_abs_diff(t.value(a).data(), &avg_pool3_oracle(&y, ys)));
        let g = t.global_avg_pool(yv).expect("gap");
        worst = worst.max(max_abs_diff(t.value(g).data(), &gap_oracle(&y, ys)));
    }
    worst
}

fn randomise(store: &mut ParamStore<f64>, r: &mut ChaCha8Rng) {
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let n = store.get(id).len();
        let v = uniform(r, n);
        store.get_mut(id).data_mut().copy_from_slice(&v);
    }
}

pub fn dense_cases(seed: u64, cases: usize) -> f64 {
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let (n, f_in, f_out) = (r.gen_range(1..=4), r.gen_range(1..=8), r.gen_range(1..=8));
        let mut store = ParamStore::<f64>::new();
        let layer = Dense::new(&mut store, "fc", f_in, f_out).expect("dense");
        randomise(&mut store, &mut r);
        let x = uniform(&mut r, n * f_in);
        let p = Params(&store, "fc");
        let expect = dense_oracle(&x, n, f_in, &p.get("weight"), &p.get("bias"));
        let mut s = Session::new(&mut store, Mode::Eval, false);
        let xv = s.input(tensor(&[n, f_in], x));
        let y = layer.forward(&mut s, xv).expect("dense forward");
        worst = worst.max(max_abs_diff(s.tape.value(y).data(), &expect));
    }
    worst
}

pub fn softmax_cases(seed: u64, cases: usize) -> f64 {
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let rank = r.gen_range(1..=3);
        let shape: Vec<usize> = (0..rank).map(|_| r.gen_range(1..=8)).collect();
        let axis = r.gen_range(0..rank);
        let x: Vec<f64> = uniform(&mut r, shape.iter().product()).into_iter().map(|v| 4.0 * v).collect();
        let mut t = Tape::new();
        let xv = t.constant(tensor(&shape, x.clone()));
        let y = t.softmax(xv, axis).expect("softmax");
        worst = worst.max(max_abs_diff(t.value(y).data(), &softmax_oracle(&x, &shape, axis)));
    }
    worst
}

/// Builds `kind` for a random shape with random parameters and compares it with `oracle`.
pub fn attention_cases(
    kind: &str,
    seed: u64,
    cases: usize,
    oracle: impl Fn(&[f64], [usize; 4], &Params, &AttentionConfig) -> Vec<f64>,
) -> f64 {
    let mut r = rng(seed);
    let registry = AttentionRegistry::<f64>::builtin();
    let cfg = AttentionConfig::of_kind(kind);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let xs = [r.gen_range(1..=3), 4 * r.gen_range(1..=2), r.gen_range(1..=8), r.gen_range(1..=8)];
        let mut store = ParamStore::<f64>::new();
        let block: Box<dyn AttentionBlock<f64>> = registry
            .build(&cfg, xs[1], "att", &mut store)
            .expect("build attention")
            .expect("a real attention kind");
        randomise(&mut store, &mut r);
        let x = uniform(&mut r, xs.iter().product());
        let expect = oracle(&x, xs, &Params(&store, "att"), &cfg);
        let mut s = Session::new(&mut store, Mode::Eval, false);
        let xv = s.input(tensor(&xs, x));
        let y = block.forward(&mut s, xv).expect("attention forward");
        worst = worst.max(max_abs_diff(s.tape.value(y).data(), &expect));
    }
    worst
}

pub fn se_cases(seed: u64, cases: usize) -> f64 {
    attention_cases("se", seed, cases, |x, xs, p, _| se_oracle(x, xs, p))
}

pub fn sk_cases(seed: u64, cases: usize) -> f64 {
    attention_cases("sk", seed, cases, |x, xs, p, _| sk_oracle(x, xs, p))
}

pub fn eca_cases(seed: u64, cases: usize) -> f64 {
    attention_cases("eca", seed, cases, |x, xs, p, _| eca_oracle(x, xs, p))
}

pub fn sge_cases(seed: u64, cases: usize) -> f64 {
    attention_cases("sge", seed, cases, |x, xs, p, cfg| sge_oracle(x, xs, p, cfg.sge_groups, cfg.sge_eps))
}

/// Every oracle family with its worst deviation over `cases` random draws.
pub fn all_oracles(seed: u64, cases: usize) -> Vec<(&'static str, f64)> {
    vec![
        ("conv2d", conv_cases(seed, cases)),
        ("pooling", pool_cases(seed + 1, cases)),
        ("dense", dense_cases(seed + 2, cases)),
        ("softmax", softmax_cases(seed + 3, cases)),
        ("se", se_cases(seed + 4, cases)),
        ("sk", sk_cases(seed + 5, cases)),
        ("eca", eca_cases(seed + 6, cases)),
        ("sge", sge_cases(seed + 7, cases)),
    ]
}

//! Finite-difference verification of every primitive, layer, attention block and the
//! end-to-end contrastive objective, in 64-bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attention::{AttentionConfig, AttentionRegistry};
use crate::backbone::BackboneSpec;
use crate::error::{Error, Result};
use crate::nn::{BatchNorm2d, Conv2d, Conv2dSpec, Dense, Mode, ParamStore, Session};
use crate::seed::derive;
use crate::siamese::{ModelConfig, SiameseModel};
use crate::tensor::{
    central_difference, grad_check, BinaryKind, Broadcast, ConvGeometry, GradCheckReport, NormMode, Tape, Tensor, Var, DEFAULT_STEP,
};

pub const TOLERANCE: f64 = 1e-4;

/// Coordinates sampled per parameter tensor in model-level checks.
const PARAM_SAMPLES: usize = 3;

pub struct CaseOutcome {
    pub name: String,
    pub group: &'static str,
    pub report: Result<GradCheckReport>,
}

impl CaseOutcome {
    pub fn passed(&self) -> bool {
        matches!(&self.report, Ok(r) if r.max_rel_error < TOLERANCE)
    }
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(lo..hi)).collect();
    Tensor::new(shape.to_vec(), data).expect("valid shape")
}

/// `Σ y ⊙ r` for a fixed random `r`, turning any output into a scalar with a
/// non-degenerate gradient.
fn project(t: &mut Tape<f64>, y: Var, r: &Tensor<f64>) -> Result<Var> {
    let rv = t.constant(r.clone().reshape(t.shape(y).to_vec())?);
    let prod = t.mul(y, rv)?;
    Ok(t.sum(prod))
}

/// Checks a tape function of `x`, where `out_len` is the length of its (pre-projection) output.
fn check_tape<F>(x: &Tensor<f64>, out_len: usize, rng: &mut ChaCha8Rng, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, Var) -> Result<Var>,
{
    let r = uniform(rng, &[out_len], -1.0, 1.0);
    grad_check(|t, v| {
        let y = f(t, v)?;
        project(t, y, &r)
    }, x, DEFAULT_STEP)
}

/// Checks a session-level scalar function against central differences in every input
/// coordinate and in `PARAM_SAMPLES` coordinates of each trainable parameter.
pub fn check_session<F>(store: &mut ParamStore<f64>, x: &Tensor<f64>, mode: Mode, seed: u64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Session<f64>, Var) -> Result<Var>,
{
    check_session_step(store, x, mode, seed, DEFAULT_STEP, f)
}

/// [`check_session`] with an explicit difference step.
pub fn check_session_step<F>(
    store: &mut ParamStore<f64>,
    x: &Tensor<f64>,
    mode: Mode,
    seed: u64,
    h: f64,
    f: F,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Session<f64>, Var) -> Result<Var>,
{
    let eval = |store: &mut ParamStore<f64>, x: &Tensor<f64>| -> Result<(f64, Option<u64>)> {
        let mut s = Session::new(store, mode, false);
        s.tape.track_branches();
        let xv = s.input(x.clone());
        let y = f(&mut s, xv)?;
        Ok((s.tape.value(y).item()?, s.tape.branch_signature()))
    };
    let (gx, grads, branch) = {
        let mut s = Session::new(store, mode, true);
        s.tape.track_branches();
        let xv = s.tape.leaf(x.clone(), true);
        let root = f(&mut s, xv)?;
        let branch = s.tape.branch_signature();
        s.backward(root)?;
        let gx = s.tape.grad(xv).map(|g| g.data().to_vec()).unwrap_or_else(|| vec![0.0; x.len()]);
        (gx, s.param_grads(), branch)
    };
    let mut report = GradCheckReport::default();
    let mut index = 0usize;
    let mut compare = |report: &mut GradCheckReport, analytic: f64, numeric: Option<f64>| -> Result<()> {
        index += 1;
        match numeric {
            Some(n) => report.record(index - 1, analytic, n),
            None => {
                report.skipped += 1;
                Ok(())
            }
        }
    };
    for i in 0..x.len() {
        let numeric = central_difference(|off| {
            let mut p = x.clone();
            p.data_mut()[i] += off;
            eval(store, &p)
        }, branch, h)?;
        compare(&mut report, gx[i], numeric)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<_> = store.trainable().collect();
    for id in ids {
        let len = store.get(id).len();
        let analytic = grads.iter().find(|(g, _)| *g == id).map(|(_, t)| t.data().to_vec());
        let picks: Vec<usize> = if len <= PARAM_SAMPLES {
            (0..len).collect()
        } else {
            (0..PARAM_SAMPLES).map(|_| rng.gen_range(0..len)).collect()
        };
        for k in picks {
            let orig = store.get(id).data()[k];
            let numeric = central_difference(|off| {
                store.get_mut(id).data_mut()[k] = orig + off;
                let r = eval(store, x);
                store.get_mut(id).data_mut()[k] = orig;
                r
            }, branch, h)?;
            compare(&mut report, analytic.as_ref().map_or(0.0, |g| g[k]), numeric)?;
        }
    }
    Ok(report)
}

type CaseFn = Box<dyn Fn(&mut ChaCha8Rng) -> Result<GradCheckReport>>;

struct Case {
    group: &'static str,
    name: String,
    run: CaseFn,
}

fn case(group: &'static str, name: impl Into<String>, run: impl Fn(&mut ChaCha8Rng) -> Result<GradCheckReport> + 'static) -> Case {
    Case {
        group,
        name: name.into(),
        run: Box::new(run),
    }
}

fn binary_cases(out: &mut Vec<Case>) {
    let kinds = [
        (BinaryKind::Add, "add"),
        (BinaryKind::Sub, "sub"),
        (BinaryKind::Mul, "mul"),
        (BinaryKind::Div, "div"),
    ];
    let layouts: [(Broadcast, &[usize], &[usize]); 4] = [
        (Broadcast::Same, &[2, 3, 2, 2], &[2, 3, 2, 2]),
        (Broadcast::Channel, &[2, 3, 2, 2], &[3]),
        (Broadcast::Leading, &[2, 3, 2, 2], &[2, 3]),
        (Broadcast::AcrossChannels, &[2, 3, 2, 2], &[2, 1, 2, 2]),
    ];
    for (kind, kname) in kinds {
        for (bcast, sa, sb) in layouts {
            let (sa, sb) = (sa.to_vec(), sb.to_vec());
            let n: usize = sa.iter().product();
            let lo = if kind == BinaryKind::Div { 0.5 } else { -1.0 };
            let (sa2, sb2) = (sa.clone(), sb.clone());
            out.push(case("primitive", format!("{kname}/{bcast:?}/lhs"), move |rng| {
                let a = uniform(rng, &sa, -1.0, 1.0);
                let b = uniform(rng, &sb, lo, 1.5);
                check_tape(&a, n, rng, move |t, v| {
                    let bv = t.constant(b.clone());
                    t.binary(kind, v, bv, bcast)
                })
            }));
            out.push(case("primitive", format!("{kname}/{bcast:?}/rhs"), move |rng| {
                let a = uniform(rng, &sa2, -1.0, 1.0);
                let b = uniform(rng, &sb2, lo, 1.5);
                check_tape(&b, n, rng, move |t, v| {
                    let av = t.constant(a.clone());
                    t.binary(kind, av, v, bcast)
                })
            }));
        }
    }
}

fn unary_cases(out: &mut Vec<Case>) {
    type Unary = fn(&mut Tape<f64>, Var) -> Var;
    let cases: [(&str, f64, f64, Unary); 8] = [
        ("relu", -1.0, 1.0, |t, v| t.relu(v)),
        ("sigmoid", -1.0, 1.0, |t, v| t.sigmoid(v)),
        ("scale", -1.0, 1.0, |t, v| t.scale(v, -1.7)),
        ("offset", -1.0, 1.0, |t, v| t.offset(v, 0.3)),
        ("square", -1.0, 1.0, |t, v| t.square(v)),
        ("sqrt", 0.1, 1.0, |t, v| t.sqrt(v)),
        ("ln", 0.1, 1.0, |t, v| t.ln(v)),
        ("clamp_min", -1.0, 1.0, |t, v| t.clamp_min(v, -0.25)),
    ];
    for (name, lo, hi, f) in cases {
        out.push(case("primitive", name, move |rng| {
            let x = uniform(rng, &[3, 4], lo, hi);
            check_tape(&x, 12, rng, move |t, v| Ok(f(t, v)))
        }));
    }
}

fn linalg_cases(out: &mut Vec<Case>) {
    out.push(case("primitive", "matmul/lhs", |rng| {
        let a = uniform(rng, &[3, 4], -1.0, 1.0);
        let b = uniform(rng, &[4, 2], -1.0, 1.0);
        check_tape(&a, 6, rng, move |t, v| {
            let bv = t.constant(b.clone());
            t.matmul(v, bv)
        })
    }));
    out.push(case("primitive", "matmul/rhs", |rng| {
        let a = uniform(rng, &[3, 4], -1.0, 1.0);
        let b = uniform(rng, &[4, 2], -1.0, 1.0);
        check_tape(&b, 6, rng, move |t, v| {
            let av = t.constant(a.clone());
            t.matmul(av, v)
        })
    }));
    out.push(case("primitive", "transpose", |rng| {
        let x = uniform(rng, &[3, 5], -1.0, 1.0);
        check_tape(&x, 15, rng, |t, v| t.transpose(v))
    }));
    for axis in 0..3 {
        out.push(case("primitive", format!("softmax/axis{axis}"), move |rng| {
            let x = uniform(rng, &[2, 3, 4], -1.0, 1.0);
            check_tape(&x, 24, rng, move |t, v| t.softmax(v, axis))
        }));
    }
    out.push(case("primitive", "sum", |rng| {
        let x = uniform(rng, &[2, 5], -1.0, 1.0);
        grad_check(|t, v| Ok(t.sum(v)), &x, DEFAULT_STEP)
    }));
    out.push(case("primitive", "mean", |rng| {
        let x = uniform(rng, &[2, 5], -1.0, 1.0);
        grad_check(|t, v| Ok(t.mean(v)), &x, DEFAULT_STEP)
    }));
    out.push(case("primitive", "sum_axis", |rng| {
        let x = uniform(rng, &[2, 3, 4], -1.0, 1.0);
        check_tape(&x, 8, rng, |t, v| t.sum_axis(v, 1))
    }));
    out.push(case("primitive", "reshape", |rng| {
        let x = uniform(rng, &[2, 6], -1.0, 1.0);
        check_tape(&x, 12, rng, |t, v| t.reshape(v, &[3, 4]))
    }));
    out.push(case("primitive", "concat", |rng| {
        let x = uniform(rng, &[2, 3, 2], -1.0, 1.0);
        let other = uniform(rng, &[2, 1, 2], -1.0, 1.0);
        check_tape(&x, 28, rng, move |t, v| {
            let o = t.constant(other.clone());
            let sq = t.square(v);
            t.concat(&[v, o, sq], 1)
        })
    }));
    out.push(case("primitive", "slice", |rng| {
        let x = uniform(rng, &[2, 5, 2], -1.0, 1.0);
        check_tape(&x, 8, rng, |t, v| t.slice(v, 1, 1, 2))
    }));
}

fn spatial_cases(out: &mut Vec<Case>) {
    let convs: [((usize, usize), usize, (usize, usize)); 7] = [
        ((1, 1), 1, (5, 5)),
        ((3, 3), 1, (5, 4)),
        ((5, 5), 1, (4, 4)),
        ((3, 3), 2, (6, 6)),
        ((3, 3), 2, (5, 3)),
        ((1, 1), 2, (4, 4)),
        ((1, 3), 1, (4, 5)),
    ];
    for (k, stride, (h, w)) in convs {
        let label = format!("conv2d/{}x{}/s{}/{}x{}", k.0, k.1, stride, h, w);
        let geom = ConvGeometry::same((h, w), k, stride);
        let (ho, wo) = (h.div_ceil(stride), w.div_ceil(stride));
        let out_len = 2 * 3 * ho * wo;
        for target in ["x", "weight", "bias"] {
            out.push(case("primitive", format!("{label}/{target}"), move |rng| {
                let x = uniform(rng, &[2, 2, h, w], -1.0, 1.0);
                let wt = uniform(rng, &[3, 2, k.0, k.1], -1.0, 1.0);
                let b = uniform(rng, &[3], -1.0, 1.0);
                let (x2, w2, b2) = (x.clone(), wt.clone(), b.clone());
                let point = match target {
                    "x" => x,
                    "weight" => wt,
                    _ => b,
                };
                check_tape(&point, out_len, rng, move |t, v| {
                    let xv = if target == "x" { v } else { t.constant(x2.clone()) };
                    let wv = if target == "weight" { v } else { t.constant(w2.clone()) };
                    let bv = if target == "bias" { v } else { t.constant(b2.clone()) };
                    t.conv2d(xv, wv, Some(bv), geom)
                })
            }));
        }
    }
    for target in ["x", "gamma", "beta"] {
        out.push(case("primitive", format!("batch_norm/train/{target}"), move |rng| {
            let x = uniform(rng, &[3, 2, 3, 3], -1.0, 1.0);
            let g = uniform(rng, &[2], 0.5, 1.5);
            let b = uniform(rng, &[2], -1.0, 1.0);
            let (x2, g2, b2) = (x.clone(), g.clone(), b.clone());
            let point = match target {
                "x" => x,
                "gamma" => g,
                _ => b,
            };
            check_tape(&point, 54, rng, move |t, v| {
                let xv = if target == "x" { v } else { t.constant(x2.clone()) };
                let gv = if target == "gamma" { v } else { t.constant(g2.clone()) };
                let bv = if target == "beta" { v } else { t.constant(b2.clone()) };
                Ok(t.batch_norm(xv, gv, bv, NormMode::Batch, 1e-5)?.0)
            })
        }));
    }
    out.push(case("primitive", "batch_norm/eval/x", |rng| {
        let x = uniform(rng, &[1, 2, 3, 3], -1.0, 1.0);
        let g = uniform(rng, &[2], 0.5, 1.5);
        let b = uniform(rng, &[2], -1.0, 1.0);
        check_tape(&x, 18, rng, move |t, v| {
            let gv = t.constant(g.clone());
            let bv = t.constant(b.clone());
            Ok(t.batch_norm(v, gv, bv, NormMode::Running { mean: &[0.2, -0.1], var: &[0.5, 2.0] }, 1e-5)?.0)
        })
    }));
    out.push(case("primitive", "max_pool2x2", |rng| {
        let x = uniform(rng, &[2, 2, 4, 4], -1.0, 1.0);
        check_tape(&x, 16, rng, |t, v| t.max_pool2x2(v))
    }));
    out.push(case("primitive", "global_avg_pool", |rng| {
        let x = uniform(rng, &[2, 3, 3, 2], -1.0, 1.0);
        check_tape(&x, 6, rng, |t, v| t.global_avg_pool(v))
    }));
    out.push(case("primitive", "avg_pool3x3", |rng| {
        let x = uniform(rng, &[1, 2, 4, 5], -1.0, 1.0);
        check_tape(&x, 40, rng, |t, v| t.avg_pool3x3(v))
    }));
    for target in ["x", "weight"] {
        out.push(case("primitive", format!("channel_conv1d/{target}"), move |rng| {
            let x = uniform(rng, &[2, 6], -1.0, 1.0);
            let w = uniform(rng, &[3], -1.0, 1.0);
            let (x2, w2) = (x.clone(), w.clone());
            let point = if target == "x" { x } else { w };
            check_tape(&point, 12, rng, move |t, v| {
                let (xv, wv) = if target == "x" {
                    (v, t.constant(w2.clone()))
                } else {
                    (t.constant(x2.clone()), v)
                };
                t.channel_conv1d(xv, wv)
            })
        }));
    }
}

fn session_case<B>(rng: &mut ChaCha8Rng, x_shape: &[usize], mode: Mode, build: B) -> Result<GradCheckReport>
where
    B: Fn(&mut ParamStore<f64>) -> Result<Box<dyn Fn(&mut Session<f64>, Var) -> Result<Var>>>,
{
    let mut store = ParamStore::new();
    let f = build(&mut store)?;
    store.init_parameters(rng.gen());
    let x = uniform(rng, x_shape, -1.0, 1.0);
    let out_len = {
        let mut s = Session::new(&mut store, mode, false);
        let xv = s.input(x.clone());
        let y = f(&mut s, xv)?;
        s.tape.value(y).len()
    };
    let r = uniform(rng, &[out_len], -1.0, 1.0);
    check_session(&mut store, &x, mode, rng.gen(), |s, v| {
        let y = f(s, v)?;
        project(&mut s.tape, y, &r)
    })
}

fn layer_cases(out: &mut Vec<Case>) {
    out.push(case("layer", "conv2d_layer", |rng| {
        session_case(rng, &[2, 2, 5, 5], Mode::Train, |store| {
            let conv = Conv2d::new(store, "c", Conv2dSpec::square(2, 3, 3, 1).with_bias())?;
            Ok(Box::new(move |s, x| conv.forward(s, x)))
        })
    }));
    out.push(case("layer", "conv2d_layer/stride2", |rng| {
        session_case(rng, &[2, 2, 6, 6], Mode::Train, |store| {
            let conv = Conv2d::new(store, "c", Conv2dSpec::square(2, 3, 3, 2))?;
            Ok(Box::new(move |s, x| conv.forward(s, x)))
        })
    }));
    out.push(case("layer", "batchnorm2d_layer/train", |rng| {
        session_case(rng, &[3, 2, 3, 3], Mode::Train, |store| {
            let bn = BatchNorm2d::new(store, "bn", 2)?;
            Ok(Box::new(move |s, x| bn.forward(s, x)))
        })
    }));
    out.push(case("layer", "batchnorm2d_layer/eval", |rng| {
        session_case(rng, &[1, 2, 3, 3], Mode::Eval, |store| {
            let bn = BatchNorm2d::new(store, "bn", 2)?;
            Ok(Box::new(move |s, x| bn.forward(s, x)))
        })
    }));
    out.push(case("layer", "dense_layer", |rng| {
        session_case(rng, &[3, 5], Mode::Train, |store| {
            let d = Dense::new(store, "fc", 5, 4)?;
            Ok(Box::new(move |s, x| d.forward(s, x)))
        })
    }));
}

fn attention_cases(out: &mut Vec<Case>) {
    for kind in ["se", "sk", "eca", "sge"] {
        out.push(case("attention", kind, move |rng| {
            session_case(rng, &[2, 8, 5, 5], Mode::Train, move |store| {
                let block = AttentionRegistry::<f64>::builtin()
                    .build(&AttentionConfig::of_kind(kind), 8, "att", store)?
                    .ok_or_else(|| Error::config("attention kind none"))?;
                Ok(Box::new(move |s, x| block.forward(s, x)))
            })
        }));
    }
}

/// The full contrastive objective: twin forward, 512-d heads, distance and loss,
/// differentiated w.r.t. both input batches and sampled parameters.
/// Batch norm uses batch statistics, coupling every image in the batch.
fn end_to_end_cases(out: &mut Vec<Case>) {
    let combos = [
        ("resnet_tiny", "none"),
        ("resnet_tiny", "se"),
        ("resnet_tiny", "sk"),
        ("resnet_tiny", "sge"),
        ("inception_tiny", "eca"),
        ("inception_tiny", "sge"),
    ];
    for (family, attention) in combos {
        out.push(case("end_to_end", format!("contrastive/{family}/{attention}"), move |rng| {
            let spec = BackboneSpec::new(family, attention).with_input_size(8);
            let mut model = SiameseModel::<f64>::new(ModelConfig::new(spec, 4), rng.gen())?;
            let labels = [0u8, 1, 1];
            let x = uniform(rng, &[6, 1, 8, 8], 0.0, 1.0);
            let margin = model.config().margin;
            let (net, store) = model.parts_mut();
            check_session(store, &x, Mode::Train, rng.gen(), |s, v| {
                Ok(net.contrastive_objective(s, v, &labels, margin)?.0)
            })
        }));
    }
}

fn all_cases() -> Vec<Case> {
    let mut out = Vec::new();
    binary_cases(&mut out);
    unary_cases(&mut out);
    linalg_cases(&mut out);
    spatial_cases(&mut out);
    layer_cases(&mut out);
    attention_cases(&mut out);
    end_to_end_cases(&mut out);
    out
}

pub fn case_names() -> Vec<String> {
    all_cases().into_iter().map(|c| c.name).collect()
}

/// Runs every case whose name contains `filter` (all when empty).
pub fn run_suite(seed: u64, filter: &str) -> Vec<CaseOutcome> {
    all_cases()
        .into_iter()
        .filter(|c| c.name.contains(filter))
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, &c.name, 0));
            CaseOutcome {
                report: (c.run)(&mut rng),
                name: c.name,
                group: c.group,
            }
        })
        .collect()
}

//! Straight-line reference computations over nested `Vec`s. Nothing here
//! calls into the crate's graph or tensor arithmetic; parameters are read
//! out of the store and every product is an explicit loop.

#![allow(dead_code)]

use iavc::{ParameterStore, Tensor};

pub type M = Vec<Vec<f64>>;

pub fn rows(t: &Tensor) -> M {
    let c = *t.shape().last().unwrap_or(&1);
    t.data().chunks(c).map(<[f64]>::to_vec).collect()
}

pub fn p(store: &ParameterStore, name: &str) -> M {
    rows(store.value(name).unwrap())
}

pub fn v(store: &ParameterStore, name: &str) -> Vec<f64> {
    store.value(name).unwrap().data().to_vec()
}

pub fn tensor(m: &M) -> Tensor {
    Tensor::from_rows(m).unwrap()
}

pub fn max_diff(a: &M, b: &M) -> f64 {
    assert_eq!(a.len(), b.len(), "row count");
    let mut worst: f64 = 0.0;
    for (ra, rb) in a.iter().zip(b) {
        assert_eq!(ra.len(), rb.len(), "column count");
        for (x, y) in ra.iter().zip(rb) {
            worst = worst.max((x - y).abs());
        }
    }
    worst
}

pub fn mm(a: &M, b: &M) -> M {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        assert_eq!(a[i].len(), k);
        for j in 0..m {
            let mut s = 0.0;
            for t in 0..k {
                s += a[i][t] * b[t][j];
            }
            out[i][j] = s;
        }
    }
    out
}

pub fn add(a: &M, b: &M) -> M {
    a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + q).collect()).collect()
}

pub fn add_bias(a: &M, b: &[f64]) -> M {
    a.iter().map(|r| r.iter().zip(b).map(|(x, y)| x + y).collect()).collect()
}

pub fn linear(store: &ParameterStore, prefix: &str, x: &M) -> M {
    let y = mm(x, &p(store, &format!("{prefix}.w")));
    let b = format!("{prefix}.b");
    if store.contains(&b) {
        add_bias(&y, &v(store, &b))
    } else {
        y
    }
}

pub fn softmax_row(r: &[f64]) -> Vec<f64> {
    let m = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = r.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / 2f64.sqrt()))
}

pub fn map(a: &M, f: impl Fn(f64) -> f64) -> M {
    a.iter().map(|r| r.iter().map(|&x| f(x)).collect()).collect()
}

pub fn layer_norm(x: &M, gain: &[f64], bias: &[f64]) -> M {
    x.iter()
        .map(|r| {
            let n = r.len() as f64;
            let mean = r.iter().sum::<f64>() / n;
            let var = r.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let sd = (var + 1e-5).sqrt();
            r.iter().enumerate().map(|(c, v)| (v - mean) / sd * gain[c] + bias[c]).collect()
        })
        .collect()
}

pub fn ln(store: &ParameterStore, prefix: &str, x: &M) -> M {
    layer_norm(x, &v(store, &format!("{prefix}.gain")), &v(store, &format!("{prefix}.bias")))
}

/// Multi-head attention by explicit loops over heads, query rows, key rows
/// and feature columns.
pub fn attention(
    store: &ParameterStore,
    prefix: &str,
    xq: &M,
    xkv: &M,
    heads: usize,
    out_proj: bool,
    mask: Option<&M>,
) -> M {
    let q = mm(xq, &p(store, &format!("{prefix}.wq")));
    let k = mm(xkv, &p(store, &format!("{prefix}.wk")));
    let val = mm(xkv, &p(store, &format!("{prefix}.wv")));
    let d = q[0].len();
    let hw = d / heads;
    let mut merged = vec![vec![0.0; d]; q.len()];
    for h in 0..heads {
        let off = h * hw;
        for i in 0..q.len() {
            let mut scores = vec![0.0; k.len()];
            for j in 0..k.len() {
                let mut s = 0.0;
                for c in 0..hw {
                    s += q[i][off + c] * k[j][off + c];
                }
                scores[j] = s / (hw as f64).sqrt();
                if let Some(m) = mask {
                    scores[j] += m[i][j];
                }
            }
            let w = softmax_row(&scores);
            for c in 0..hw {
                let mut s = 0.0;
                for j in 0..k.len() {
                    s += w[j] * val[j][off + c];
                }
                merged[i][off + c] = s;
            }
        }
    }
    if out_proj {
        mm(&merged, &p(store, &format!("{prefix}.wo")))
    } else {
        merged
    }
}

pub fn positions(n: usize, d: usize) -> M {
    (0..n)
        .map(|pos| {
            (0..d)
                .map(|c| {
                    let i = (c / 2) as f64;
                    let a = pos as f64 / 10000f64.powf(2.0 * i / d as f64);
                    if c % 2 == 0 {
                        a.sin()
                    } else {
                        a.cos()
                    }
                })
                .collect()
        })
        .collect()
}

pub fn mean_rows(x: &M) -> M {
    let n = x.len() as f64;
    let mut out = vec![0.0; x[0].len()];
    for r in x {
        for (o, v) in out.iter_mut().zip(r) {
            *o += v / n;
        }
    }
    vec![out]
}

/// Interaction module: paired self attention, shared bottleneck norms,
/// crossed attention, up projection and a residual MLP stage per branch.
pub fn bsim(store: &ParameterStore, heads: usize, video: &M, players: &M) -> (M, M) {
    let v1 = attention(store, "bsim.msa1", &ln(store, "bsim.ln1", video), &ln(store, "bsim.ln1", video), heads, true, None);
    let f1 = attention(store, "bsim.msa2", &ln(store, "bsim.ln2", players), &ln(store, "bsim.ln2", players), heads, true, None);
    let vd = ln(store, "bsim.ln3", &mm(&v1, &p(store, "bsim.down1.w")));
    let fd = ln(store, "bsim.ln4", &mm(&f1, &p(store, "bsim.down2.w")));
    let v2 = mm(&attention(store, "bsim.mca_ev", &vd, &fd, heads, true, None), &p(store, "bsim.up1.w"));
    let f2 = mm(&attention(store, "bsim.mca_ve", &fd, &vd, heads, true, None), &p(store, "bsim.up2.w"));
    let out = |x: &M, mlp: &str, norm: &str| {
        let h = linear(store, &format!("bsim.{mlp}.fc1"), &map(x, gelu));
        let h = linear(store, &format!("bsim.{mlp}.fc2"), &h);
        ln(store, &format!("bsim.{norm}"), &add(&h, x))
    };
    (out(&v2, "mlp1", "ln5"), out(&f2, "mlp2", "ln6"))
}

/// Context queries: self attention over θ, cross attention into the
/// position-shifted video, then MLP and FFN, single head, no residual.
pub fn vclm(store: &ParameterStore, video: &M) -> M {
    let theta = p(store, "vclm.theta");
    let v_self = attention(store, "vclm.self", &theta, &theta, 1, false, None);
    let v_pv = add(&positions(video.len(), video[0].len()), video);
    let v_cross = attention(store, "vclm.cross", &v_self, &v_pv, 1, false, None);
    let h = linear(store, "vclm.mlp.fc2", &map(&linear(store, "vclm.mlp.fc1", &v_cross), gelu));
    linear(store, "vclm.ffn.fc2", &map(&linear(store, "vclm.ffn.fc1", &h), gelu))
}

/// Player sequence feature: projection, positions, residual self attention,
/// mean over frames.
pub fn pin_encode(store: &ParameterStore, heads: usize, frames: &M) -> M {
    let h = linear(store, "pin.in", frames);
    let h = add(&h, &positions(h.len(), h[0].len()));
    let a = attention(store, "pin.attn", &h, &h, heads, true, None);
    mean_rows(&add(&h, &a))
}

/// Decoder logits for every token position, built row by row.
pub fn decoder(store: &ParameterStore, heads: usize, layers: usize, prompt: &M, slots: &[(usize, usize)], tokens: &[usize]) -> M {
    let table = p(store, "dec.tok");
    let d = table[0].len();
    let mut prompt = prompt.clone();
    if store.contains("dec.slot") {
        let slot = p(store, "dec.slot");
        for &(start, len) in slots {
            for r in 0..len {
                for c in 0..d {
                    prompt[start + r][c] += slot[r][c];
                }
            }
        }
    }
    let pos = positions(tokens.len(), d);
    let mut h = prompt.clone();
    for (t, &id) in tokens.iter().enumerate() {
        h.push((0..d).map(|c| table[id][c] + pos[t][c]).collect());
    }
    let np = prompt.len();
    let n = h.len();
    let mask: M = (0..n)
        .map(|i| (0..n).map(|j| if (i < np && j >= np) || (i >= np && j > i) { -1e30 } else { 0.0 }).collect())
        .collect();
    for l in 0..layers {
        let x = ln(store, &format!("dec.l{l}.ln1"), &h);
        h = add(&h, &attention(store, &format!("dec.l{l}.attn"), &x, &x, heads, true, Some(&mask)));
        let x = ln(store, &format!("dec.l{l}.ln2"), &h);
        let f = map(&linear(store, &format!("dec.l{l}.ff.fc1"), &x), gelu);
        h = add(&h, &linear(store, &format!("dec.l{l}.ff.fc2"), &f));
    }
    let h = ln(store, "dec.ln_f", &h[np..].to_vec());
    let bias = v(store, "dec.out.b");
    h.iter()
        .map(|r| (0..table.len()).map(|id| (0..d).map(|c| r[c] * table[id][c]).sum::<f64>() + bias[id]).collect())
        .collect()
}

pub fn random_matrix(rng: &mut impl rand::Rng, r: usize, c: usize) -> M {
    (0..r).map(|_| (0..c).map(|_| rng.gen_range(-1.5..1.5)).collect()).collect()
}

/// Replace every value in the store with a fresh uniform draw, so layer
/// norm gains and biases are not trivially one and zero.
pub fn perturb(store: &mut ParameterStore, rng: &mut impl rand::Rng, scale: f64) {
    for e in store.iter_mut() {
        for x in e.value.data_mut() {
            *x = rng.gen_range(-scale..scale);
        }
    }
}

//! Instrumented naive forward pass: computes logits with nested-`Vec`
//! arithmetic, materialized zero padding, and a counter bump beside every
//! multiply that the MAC convention includes. Elementwise gate products,
//! pooling, activations, normalization scaling, and bias additions are not
//! multiply-accumulates.

use asc_core::frontend::FeatureMap;
use asc_core::model::{ConvTSpec, HeadFusion, ModelConfig, WeightStore, SE_BLOCK_SITES};
use asc_core::numerics::Tensor;

type Grid = Vec<Vec<Vec<f64>>>; // [channel][freq][time]

/// Result of one instrumented pass.
pub struct OracleRun {
    pub logits: Vec<f64>,
    pub macs: u64,
    pub stage_shapes: Vec<(String, Vec<usize>)>,
}

struct Oracle<'a> {
    weights: &'a WeightStore,
    macs: u64,
    shapes: Vec<(String, Vec<usize>)>,
}

fn zeros(c: usize, f: usize, t: usize) -> Grid {
    vec![vec![vec![0.0; t]; f]; c]
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl<'a> Oracle<'a> {
    fn tensor(&self, name: &str) -> Tensor {
        self.weights.get(name).unwrap().clone()
    }

    fn record(&mut self, name: impl Into<String>, shape: Vec<usize>) {
        self.shapes.push((name.into(), shape));
    }

    fn pad_spatial(x: &Grid, pf: usize, pt: usize) -> Grid {
        let (c, f, t) = (x.len(), x[0].len(), x[0][0].len());
        let mut out = zeros(c, f + 2 * pf, t + 2 * pt);
        for ci in 0..c {
            for fi in 0..f {
                for ti in 0..t {
                    out[ci][fi + pf][ti + pt] = x[ci][fi][ti];
                }
            }
        }
        out
    }

    fn stem(&mut self, x: &Grid, cfg: &ModelConfig) -> Grid {
        let w = self.tensor("stem.weight");
        let b = self.tensor("stem.bias");
        let (f, t) = (x[0].len(), x[0][0].len());
        let cout = cfg.stem_out_channels;
        let xp = Self::pad_spatial(x, 1, 1);
        let mut y = zeros(cout, f, t);
        for o in 0..cout {
            for fi in 0..f {
                for ti in 0..t {
                    let mut acc = 0.0;
                    for i in 0..x.len() {
                        for u in 0..3 {
                            for v in 0..3 {
                                acc += w.get(&[o, i, u, v]) * xp[i][fi + u][ti + v];
                                self.macs += 1;
                            }
                        }
                    }
                    y[o][fi][ti] = (acc + b.get(&[o])).max(0.0);
                }
            }
        }
        self.record("stem", vec![cout, f, t]);
        y
    }

    fn pool(&mut self, x: &Grid, name: &str) -> Grid {
        let (c, f, t) = (x.len(), x[0].len(), x[0][0].len());
        let (fo, to) = (f / 2, t / 2);
        let mut y = zeros(c, fo, to);
        for ci in 0..c {
            for fi in 0..fo {
                for ti in 0..to {
                    let w = [
                        x[ci][2 * fi][2 * ti],
                        x[ci][2 * fi][2 * ti + 1],
                        x[ci][2 * fi + 1][2 * ti],
                        x[ci][2 * fi + 1][2 * ti + 1],
                    ];
                    let mx = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let avg = w.iter().sum::<f64>() / 4.0;
                    y[ci][fi][ti] = 0.5 * (mx + avg);
                }
            }
        }
        self.record(name, vec![c, fo, to]);
        y
    }

    fn se(&mut self, x: &Grid, prefix: &str) -> Grid {
        let w1 = self.tensor(&format!("{prefix}.w1"));
        let b1 = self.tensor(&format!("{prefix}.b1"));
        let w2 = self.tensor(&format!("{prefix}.w2"));
        let b2 = self.tensor(&format!("{prefix}.b2"));
        let (c, f, t) = (x.len(), x[0].len(), x[0][0].len());
        let mid = w1.shape()[0];
        let mean: Vec<f64> = x
            .iter()
            .map(|ch| ch.iter().flatten().sum::<f64>() / (f * t) as f64)
            .collect();
        let mut hidden = vec![0.0; mid];
        for i in 0..mid {
            let mut acc = 0.0;
            for ci in 0..c {
                acc += w1.get(&[i, ci]) * mean[ci];
                self.macs += 1;
            }
            hidden[i] = (acc + b1.get(&[i])).max(0.0);
        }
        let mut y = x.clone();
        for ci in 0..c {
            let mut acc = 0.0;
            for i in 0..mid {
                acc += w2.get(&[ci, i]) * hidden[i];
                self.macs += 1;
            }
            let gate = sigmoid(acc + b2.get(&[ci]));
            for row in &mut y[ci] {
                for v in row {
                    *v *= gate; // elementwise scaling: not a MAC
                }
            }
        }
        self.record(prefix, vec![c, f, t]);
        y
    }

    fn block(&mut self, x: &Grid, i: usize, spec: &ConvTSpec, cfg: &ModelConfig) -> Grid {
        let (cin, f, t) = (x.len(), x[0].len(), x[0][0].len());
        let cp = spec.expanded_channels();

        let pw = self.tensor(&format!("block{i}.pw.weight"));
        let pb = self.tensor(&format!("block{i}.pw.bias"));
        let mut y = zeros(cp, f, t);
        for o in 0..cp {
            for fi in 0..f {
                for ti in 0..t {
                    let mut acc = 0.0;
                    for ci in 0..cin {
                        acc += pw.get(&[o, ci]) * x[ci][fi][ti];
                        self.macs += 1;
                    }
                    y[o][fi][ti] = (acc + pb.get(&[o])).max(0.0);
                }
            }
        }
        self.record(format!("block{i}.pw"), vec![cp, f, t]);

        let g = cfg.shuffle_groups;
        let per = cp / g;
        let mut shuffled = zeros(cp, f, t);
        for c in 0..cp {
            shuffled[(c % per) * g + c / per] = y[c].clone();
        }
        self.record(format!("block{i}.shuffle"), vec![cp, f, t]);

        let dwt = self.tensor(&format!("block{i}.dw_time.weight"));
        let kt = spec.time_kernel;
        let xp = Self::pad_spatial(&shuffled, 0, (kt - 1) / 2);
        let mut y = zeros(cp, f, t);
        for c in 0..cp {
            for fi in 0..f {
                for ti in 0..t {
                    let mut acc = 0.0;
                    for u in 0..kt {
                        acc += dwt.get(&[c, u]) * xp[c][fi][ti + u];
                        self.macs += 1;
                    }
                    y[c][fi][ti] = acc.max(0.0);
                }
            }
        }
        self.record(format!("block{i}.dw_time"), vec![cp, f, t]);

        let dwf = self.tensor(&format!("block{i}.dw_freq.weight"));
        let kf = spec.freq_kernel;
        let s = spec.freq_stride;
        let m = spec.dw_multiplier;
        let fo = f.div_ceil(s);
        let xp = Self::pad_spatial(&y, (kf - 1) / 2, 0);
        let mut y = zeros(cp * m, fo, t);
        for c in 0..cp {
            for j in 0..m {
                let oc = c * m + j;
                for fi in 0..fo {
                    for ti in 0..t {
                        let mut acc = 0.0;
                        for u in 0..kf {
                            acc += dwf.get(&[oc, u]) * xp[c][fi * s + u][ti];
                            self.macs += 1;
                        }
                        y[oc][fi][ti] = acc.max(0.0);
                    }
                }
            }
        }
        self.record(format!("block{i}.dw_freq"), vec![cp * m, fo, t]);
        y
    }

    fn run(&mut self, cfg: &ModelConfig, feat: &FeatureMap) -> Vec<f64> {
        let mut x = zeros(1, cfg.input_mels, cfg.input_frames);
        for f in 0..cfg.input_mels {
            for t in 0..cfg.input_frames {
                x[0][f][t] = feat.values().get(&[f, t]);
            }
        }
        // input standardization: elementwise scaling, zero MACs
        let n = (cfg.input_mels * cfg.input_frames) as f64;
        let mean: f64 = x[0].iter().flatten().sum::<f64>() / n;
        let var: f64 = x[0].iter().flatten().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let denom = var.sqrt().max(1e-6);
        for row in &mut x[0] {
            for v in row {
                *v = (*v - mean) / denom;
            }
        }

        let x = self.stem(&x, cfg);
        let x = self.pool(&x, "stem_pool");
        let mut x = self.se(&x, "stem_se");
        for (i, spec) in cfg.block_specs.iter().enumerate() {
            x = self.block(&x, i, spec, cfg);
            if i < SE_BLOCK_SITES {
                x = self.se(&x, &format!("block{i}.se"));
            }
        }

        let (c, f, t) = (x.len(), x[0].len(), x[0][0].len());
        let seq: Vec<Vec<f64>> = (0..c)
            .map(|ci| {
                (0..f)
                    .map(|fi| x[ci][fi].iter().sum::<f64>() / t as f64)
                    .collect()
            })
            .collect();
        self.record("collapse", vec![c, f]);

        let h = cfg.gru_hidden;
        let mats: Vec<(Tensor, Tensor, Tensor)> = ["z", "r", "h"]
            .iter()
            .map(|n| {
                (
                    self.tensor(&format!("gru.w_{n}")),
                    self.tensor(&format!("gru.u_{n}")),
                    self.tensor(&format!("gru.b_{n}")),
                )
            })
            .collect();
        let mut hidden = vec![0.0; h];
        let mut gru_out = Vec::with_capacity(c);
        for xt in &seq {
            let mut pre = vec![vec![0.0; h]; 3];
            for (gi, (wm, _, bm)) in mats.iter().enumerate() {
                for row in 0..h {
                    let mut acc = 0.0;
                    for (col, &xv) in xt.iter().enumerate() {
                        acc += wm.get(&[row, col]) * xv;
                        self.macs += 1;
                    }
                    pre[gi][row] = acc + bm.get(&[row]);
                }
            }
            let mut zp = pre[0].clone();
            let mut rp = pre[1].clone();
            for row in 0..h {
                for col in 0..h {
                    zp[row] += mats[0].1.get(&[row, col]) * hidden[col];
                    self.macs += 1;
                    rp[row] += mats[1].1.get(&[row, col]) * hidden[col];
                    self.macs += 1;
                }
            }
            let z: Vec<f64> = zp.iter().map(|&v| sigmoid(v)).collect();
            let r: Vec<f64> = rp.iter().map(|&v| sigmoid(v)).collect();
            let rh: Vec<f64> = (0..h).map(|i| r[i] * hidden[i]).collect(); // gate product: not a MAC
            let mut cand = pre[2].clone();
            for row in 0..h {
                for col in 0..h {
                    cand[row] += mats[2].1.get(&[row, col]) * rh[col];
                    self.macs += 1;
                }
            }
            for i in 0..h {
                hidden[i] = (1.0 - z[i]) * hidden[i] + z[i] * cand[i].tanh();
            }
            gru_out.push(hidden.clone());
        }
        self.record("gru", vec![c, h]);

        let pw = self.tensor("parallel.weight");
        let mut par = vec![vec![0.0; h]; c];
        for (t, xt) in seq.iter().enumerate() {
            for row in 0..h {
                let mut acc = 0.0;
                for (col, &xv) in xt.iter().enumerate() {
                    acc += pw.get(&[row, col]) * xv;
                    self.macs += 1;
                }
                par[t][row] = acc;
            }
        }
        self.record("parallel", vec![c, h]);

        let width = cfg.head_width();
        let fused: Vec<Vec<f64>> = match cfg.head_fusion {
            HeadFusion::Add => (0..c)
                .map(|t| (0..h).map(|i| gru_out[t][i] + par[t][i]).collect())
                .collect(),
            HeadFusion::Concat => (0..c)
                .map(|t| {
                    let mut row = gru_out[t].clone();
                    row.extend_from_slice(&par[t]);
                    row
                })
                .collect(),
        };
        self.record("fusion", vec![c, width]);
        let pooled: Vec<f64> = (0..width)
            .map(|i| fused.iter().map(|row| row[i]).sum::<f64>() / c as f64)
            .collect();
        self.record("step_pool", vec![width]);

        let hw = self.tensor("head.weight");
        let hb = self.tensor("head.bias");
        let mut logits = vec![0.0; cfg.n_classes];
        for k in 0..cfg.n_classes {
            let mut acc = 0.0;
            for (i, &p) in pooled.iter().enumerate() {
                acc += hw.get(&[k, i]) * p;
                self.macs += 1;
            }
            logits[k] = acc + hb.get(&[k]);
        }
        self.record("head", vec![cfg.n_classes]);
        logits
    }
}

/// Run the instrumented pass.
pub fn instrumented_forward(cfg: &ModelConfig, weights: &WeightStore, feat: &FeatureMap) -> OracleRun {
    let mut oracle = Oracle {
        weights,
        macs: 0,
        shapes: Vec::new(),
    };
    let logits = oracle.run(cfg, feat);
    OracleRun {
        logits,
        macs: oracle.macs,
        stage_shapes: oracle.shapes,
    }
}

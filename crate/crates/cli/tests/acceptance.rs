//! Acceptance suite. Runs every criterion at its pinned tolerance, prints one
//! PASS/FAIL line each and exits nonzero if any fails.
//!
//! Criteria 5 to 8 share one set of desk-scale generator runs (128x128,
//! 800 iterations), so the whole suite takes a few CPU hours.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sparsect::classical::{fbp, FbpFilter, Sart, SartConfig};
use sparsect::data::shepp_logan;
use sparsect::dgr::DgrConfig;
use sparsect::objective::{
    image_tensor, psnr, ssim, ssim_node, total_loss, tv_loss, LossWeights, ObjectiveInputs, ProjectionOp, SsimParams,
};
use sparsect::projection::{back_project, forward_project, Geometry, Image2D, Sinogram};
use sparsect_cli::config::ExperimentConfig;
use sparsect_cli::experiment::{prepare, run_method, Instance, Method, RunResult};
use sparsect_neural::{grad_check, GradCheckOptions, SkipNet, SkipNetConfig, Tape, Tensor, UpsampleMode, Var};

type Verdict = (bool, String);

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn rand_image(n: usize, r: &mut ChaCha8Rng) -> Image2D {
    Image2D::from_fn(n, |_, _| r.random_range(0.0..1.0))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn median(v: &[usize]) -> f64 {
    let mut s = v.to_vec();
    s.sort_unstable();
    let m = s.len();
    if m % 2 == 1 {
        s[m / 2] as f64
    } else {
        (s[m / 2 - 1] + s[m / 2]) as f64 / 2.0
    }
}

// ---------------------------------------------------------------- criterion 1

/// Dense system matrix from the interpolation weights written per pixel:
/// the ray crosses the pixel's row (or column) at one point, and the pixel
/// receives a hat-function share of the step length.
fn dense_matrix(geom: &Geometry) -> Vec<Vec<f64>> {
    let n = geom.image_size();
    let c = (n as f64 - 1.0) / 2.0;
    let r2 = (n as f64 / 2.0).powi(2);
    let mut rows = Vec::new();
    for &th in geom.angles() {
        let (s, co) = th.sin_cos();
        for d in 0..geom.num_detectors() {
            let t = d as f64 - c;
            let mut row = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    let (x, y) = (j as f64 - c, c - i as f64);
                    if x * x + y * y > r2 {
                        continue;
                    }
                    row[i * n + j] = if co.abs() >= s.abs() {
                        let xc = (t - y * s) / co;
                        (1.0 - (x - xc).abs()).max(0.0) / co.abs()
                    } else {
                        let yc = (t - x * co) / s;
                        (1.0 - (y - yc).abs()).max(0.0) / s.abs()
                    };
                }
            }
            rows.push(row);
        }
    }
    rows
}

fn criterion_1() -> anyhow::Result<Verdict> {
    let t = Instant::now();
    let mut worst_adj = 0.0f64;
    let mut r = rng(1);
    for n in [16, 32, 64] {
        let geom = Geometry::new(n, n / 2 + 3)?;
        for _ in 0..100 {
            let x = rand_image(n, &mut r);
            let y = Sinogram::new(
                geom.num_angles(),
                n,
                (0..geom.num_measurements()).map(|_| r.random_range(-1.0..1.0)).collect(),
            )?;
            let ax = forward_project(&x, &geom)?;
            let aty = back_project(&y, &geom)?;
            let lhs: f64 = ax.values().iter().zip(y.values()).map(|(a, b)| a * b).sum();
            let rhs: f64 = x.values().iter().zip(aty.values()).map(|(a, b)| a * b).sum();
            worst_adj = worst_adj.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()));
        }
    }
    let geom = Geometry::new(8, 4)?;
    let m = dense_matrix(&geom);
    let mut worst_mat = 0.0f64;
    for k in 0..64 {
        let mut e = vec![0.0; 64];
        e[k] = 1.0;
        let col = forward_project(&Image2D::new(8, e)?, &geom)?;
        for (row, v) in m.iter().zip(col.values()) {
            worst_mat = worst_mat.max((row[k] - v).abs());
        }
    }
    for q in 0..m.len() {
        let mut e = vec![0.0; m.len()];
        e[q] = 1.0;
        let bp = back_project(&Sinogram::new(4, 8, e)?, &geom)?;
        for (p, v) in bp.values().iter().enumerate() {
            worst_mat = worst_mat.max((m[q][p] - v).abs());
        }
    }
    let secs = t.elapsed().as_secs_f64();
    let ok = worst_adj < 1e-10 && worst_mat < 1e-12 && secs < 10.0;
    Ok((
        ok,
        format!("adjoint rel err {worst_adj:.2e} (< 1e-10), matrix err {worst_mat:.2e} (< 1e-12), {secs:.1} s (< 10 s)"),
    ))
}

// ---------------------------------------------------------------- criterion 2

fn uniform(shape: &[usize], lo: f64, hi: f64, r: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::uniform(shape, lo, hi, r)
}

/// Values bounded away from the leaky-relu kink at zero.
fn off_kink(shape: &[usize], r: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| {
        let v: f64 = r.random_range(0.1..1.0);
        if r.random::<bool>() {
            v
        } else {
            -v
        }
    })
}

fn weighted(t: &mut Tape<f64>, x: Var, w: &Tensor<f64>) -> Var {
    let wv = t.constant(w.clone());
    let p = t.mul(x, wv).unwrap();
    t.sum(p)
}

/// Central differences on `per_input` random coordinates of every input of
/// the graph. Returns `|a - n| / max(|a|, |n|)` over the vector of sampled
/// coordinates, and the worst single-coordinate error with a 1e-5 floor for
/// reference. Biases ahead of a normalization have an identically zero
/// gradient, so their single-coordinate error is pure roundoff.
fn vector_check(
    f: &dyn Fn(&mut Tape<f64>, &[Var]) -> sparsect_neural::Result<Var>,
    inputs: &[Tensor<f64>],
    h: f64,
    per_input: usize,
    seed: u64,
) -> anyhow::Result<(f64, f64)> {
    let eval = |xs: &[Tensor<f64>]| -> anyhow::Result<f64> {
        let mut t = Tape::new();
        let v: Vec<Var> = xs.iter().map(|x| t.leaf(x.clone())).collect();
        let o = f(&mut t, &v)?;
        Ok(t.value(o).item())
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let grads = tape.backward(out)?;
    let mut r = rng(seed);
    let mut probe = inputs.to_vec();
    let (mut diff2, mut a2, mut n2, mut worst) = (0.0, 0.0, 0.0, 0.0f64);
    for (i, v) in vars.iter().enumerate() {
        let analytic = grads.get(*v);
        for _ in 0..per_input {
            let j = r.random_range(0..inputs[i].len());
            let orig = inputs[i].data()[j];
            probe[i].data_mut()[j] = orig + h;
            let plus = eval(&probe)?;
            probe[i].data_mut()[j] = orig - h;
            let minus = eval(&probe)?;
            probe[i].data_mut()[j] = orig;
            let num = (plus - minus) / (2.0 * h);
            let a = analytic.data()[j];
            diff2 += (a - num).powi(2);
            a2 += a * a;
            n2 += num * num;
            worst = worst.max((a - num).abs() / a.abs().max(num.abs()).max(1e-5));
        }
    }
    Ok((diff2.sqrt() / a2.sqrt().max(n2.sqrt()), worst))
}

fn criterion_2() -> anyhow::Result<Verdict> {
    let t0 = Instant::now();
    let mut r = rng(2);
    let opts = GradCheckOptions::default();
    let mut results: Vec<(&str, f64)> = Vec::new();
    let mut check = |name: &'static str,
                     f: &dyn Fn(&mut Tape<f64>, &[Var]) -> sparsect_neural::Result<Var>,
                     inputs: Vec<Tensor<f64>>,
                     o: &GradCheckOptions| {
        let e = grad_check(f, &inputs, o).unwrap_or(f64::INFINITY);
        results.push((name, e));
    };

    let x = uniform(&[2, 3, 6, 6], -1.0, 1.0, &mut r);
    let w = uniform(&[4, 3, 3, 3], -0.5, 0.5, &mut r);
    let b = uniform(&[4], -0.5, 0.5, &mut r);
    for stride in [1usize, 2] {
        let out = if stride == 1 { [2, 4, 6, 6] } else { [2, 4, 3, 3] };
        let wt = uniform(&out, -1.0, 1.0, &mut r);
        check(
            if stride == 1 { "conv2d" } else { "conv2d/stride2" },
            &|t, v| {
                let y = t.conv2d(v[0], v[1], Some(v[2]), stride)?;
                Ok(weighted(t, y, &wt))
            },
            vec![x.clone(), w.clone(), b.clone()],
            &opts,
        );
    }
    let xn = uniform(&[1, 3, 5, 5], -1.0, 2.0, &mut r);
    let g = uniform(&[3], 0.5, 1.5, &mut r);
    let be = uniform(&[3], -0.5, 0.5, &mut r);
    let wn = uniform(&[1, 3, 5, 5], -1.0, 1.0, &mut r);
    check(
        "channel_norm",
        &|t, v| {
            let y = t.channel_norm(v[0], v[1], v[2], 1e-5)?;
            Ok(weighted(t, y, &wn))
        },
        vec![xn, g, be],
        &opts,
    );
    let xk = off_kink(&[1, 2, 4, 4], &mut r);
    let wk = uniform(&[1, 2, 4, 4], -1.0, 1.0, &mut r);
    check(
        "leaky_relu",
        &|t, v| {
            let y = t.leaky_relu(v[0], 0.2);
            Ok(weighted(t, y, &wk))
        },
        vec![xk.clone()],
        &opts,
    );
    check(
        "sigmoid",
        &|t, v| {
            let y = t.sigmoid(v[0]);
            Ok(weighted(t, y, &wk))
        },
        vec![xk.clone()],
        &opts,
    );
    let wu = uniform(&[1, 2, 8, 8], -1.0, 1.0, &mut r);
    for mode in [UpsampleMode::Nearest, UpsampleMode::Bilinear] {
        check(
            if mode == UpsampleMode::Nearest { "upsample2x/nearest" } else { "upsample2x/bilinear" },
            &|t, v| {
                let y = t.upsample2x(v[0], mode)?;
                Ok(weighted(t, y, &wu))
            },
            vec![xk.clone()],
            &opts,
        );
    }
    let xa = uniform(&[1, 2, 4, 4], -1.0, 1.0, &mut r);
    let xb = uniform(&[1, 3, 4, 4], 0.5, 1.5, &mut r);
    let wc = uniform(&[1, 5, 4, 4], -1.0, 1.0, &mut r);
    check(
        "concat",
        &|t, v| {
            let y = t.concat(&[v[0], v[1]])?;
            Ok(weighted(t, y, &wc))
        },
        vec![xa.clone(), xb.clone()],
        &opts,
    );
    let xb2 = uniform(&[1, 2, 4, 4], 0.5, 1.5, &mut r);
    type Binary = fn(&mut Tape<f64>, Var, Var) -> sparsect_neural::Result<Var>;
    let binaries: [(&str, Binary); 4] = [
        ("add", |t, a, b| t.add(a, b)),
        ("sub", |t, a, b| t.sub(a, b)),
        ("mul", |t, a, b| t.mul(a, b)),
        ("div", |t, a, b| t.div(a, b)),
    ];
    for (name, op) in binaries {
        check(
            name,
            &|t, v| {
                let y = op(t, v[0], v[1])?;
                Ok(weighted(t, y, &wk))
            },
            vec![xa.clone(), xb2.clone()],
            &opts,
        );
    }
    check(
        "square",
        &|t, v| {
            let y = t.square(v[0]);
            Ok(weighted(t, y, &wk))
        },
        vec![xa.clone()],
        &opts,
    );
    check(
        "sqrt",
        &|t, v| {
            let y = t.sqrt(v[0]);
            Ok(weighted(t, y, &wk))
        },
        vec![xb2.clone()],
        &opts,
    );
    check(
        "mean",
        &|t, v| {
            let y = t.square(v[0]);
            Ok(t.mean(y))
        },
        vec![xa.clone()],
        &opts,
    );
    let geom = Geometry::new(16, 8)?;
    let op = Arc::new(ProjectionOp::new(&geom));
    let wp = uniform(&[1, 1, 8, 16], -1.0, 1.0, &mut r);
    let xi = uniform(&[1, 1, 16, 16], 0.0, 1.0, &mut r);
    check(
        "projection",
        &|t, v| {
            let y = sparsect::objective::projection_node(t, v[0], &op).unwrap();
            Ok(weighted(t, y, &wp))
        },
        vec![xi.clone()],
        &opts,
    );
    let xr = uniform(&[1, 1, 16, 16], 0.0, 1.0, &mut r);
    check(
        "ssim",
        &|t, v| {
            let rv = t.constant(xr.clone());
            Ok(ssim_node(t, v[0], rv, &SsimParams::default()).unwrap())
        },
        vec![xi.clone()],
        &opts,
    );
    check("tv", &|t, v| Ok(tv_loss(t, v[0]).unwrap()), vec![xi.clone()], &opts);

    // the whole objective through the generator, at 32x32 with v3
    let n = 32;
    let cfg = SkipNetConfig {
        seed: 11,
        ..SkipNetConfig::v3()
    };
    let (net, params) = SkipNet::build::<f64>(&cfg)?;
    let z = uniform(&net.input_shape(n, n), -1.0, 1.0, &mut r);
    let geom = Geometry::new(n, 12)?;
    let op = Arc::new(ProjectionOp::new(&geom));
    let truth = sparsect::data::random_ellipses(n, 5, (3, 6))?;
    let y = forward_project(&truth, &geom)?;
    let y_t = Tensor::new(&[1, 1, 12, n], y.values().to_vec())?;
    let x0 = image_tensor::<f64>(&rand_image(n, &mut r));
    let mask = Tensor::from_fn(&[1, 1, n, n], |p| if geom.support_mask()[p] { 1.0 } else { 0.0 });
    let mut inputs: Vec<Tensor<f64>> = params.iter().map(|(_, t)| t.clone()).collect();
    let np = inputs.len();
    inputs.push(z);
    let objective = |t: &mut Tape<f64>, v: &[Var]| -> sparsect_neural::Result<Var> {
        let out = net.forward(t, &v[..np], v[np], None)?;
        let m = t.constant(mask.clone());
        let x = t.mul(out, m)?;
        let inp = ObjectiveInputs {
            op: &op,
            y: t.constant(y_t.clone()),
            x0: t.constant(x0.clone()),
            weights: LossWeights::normalized(1.0, 1.0, 1.0).unwrap(),
            ssim: SsimParams::default(),
        };
        Ok(total_loss(t, x, &inp).unwrap().total)
    };
    let (vector_err, coord_err) = vector_check(&objective, &inputs, 1e-7, 4, 3)?;
    results.push(("objective through v3", vector_err));
    let secs = t0.elapsed().as_secs_f64();
    let worst = results.iter().cloned().fold(("", 0.0f64), |a, b| if b.1 > a.1 { b } else { a });
    let failing: Vec<String> = results
        .iter()
        .filter(|(_, e)| !(*e < 1e-4))
        .map(|(n, e)| format!("{n} {e:.2e}"))
        .collect();
    let ok = failing.is_empty() && secs < 60.0;
    let mut detail = format!(
        "{} checks, worst {} {:.2e} (< 1e-4), {secs:.1} s (< 60 s)",
        results.len(),
        worst.0,
        worst.1
    );
    detail.push_str(&format!("; objective worst single coordinate {coord_err:.2e}"));
    if !failing.is_empty() {
        detail.push_str(&format!("; failing: {}", failing.join(", ")));
    }
    Ok((ok, detail))
}

// ---------------------------------------------------------------- criterion 3

/// SSIM from the full 2-D Gaussian window at every valid position.
fn direct_ssim(x: &Image2D, y: &Image2D) -> f64 {
    let n = x.size();
    let w = 11;
    let mut k = vec![0.0; w * w];
    for a in 0..w {
        for b in 0..w {
            let (da, db) = (a as f64 - 5.0, b as f64 - 5.0);
            k[a * w + b] = (-(da * da + db * db) / 4.5).exp();
        }
    }
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    let (c1, c2) = (1e-4, 9e-4);
    let m = n - w + 1;
    let mut acc = 0.0;
    for i in 0..m {
        for j in 0..m {
            let (mut mx, mut my, mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for a in 0..w {
                for b in 0..w {
                    let kw = k[a * w + b];
                    let (u, v) = (x.get(i + a, j + b), y.get(i + a, j + b));
                    mx += kw * u;
                    my += kw * v;
                    xx += kw * u * u;
                    yy += kw * v * v;
                    xy += kw * u * v;
                }
            }
            let (vx, vy, cxy) = (xx - mx * mx, yy - my * my, xy - mx * my);
            acc += (2.0 * mx * my + c1) * (2.0 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        }
    }
    acc / (m * m) as f64
}

fn criterion_3() -> anyhow::Result<Verdict> {
    let p = SsimParams::default();
    let mut r = rng(3);
    let mut worst = 0.0f64;
    let mut exact = true;
    for _ in 0..50 {
        let n = r.random_range(11..=40);
        let x = rand_image(n, &mut r);
        let mix: f64 = r.random_range(0.0..1.0);
        let noise = rand_image(n, &mut r);
        let y = Image2D::from_fn(n, |i, j| mix * x.get(i, j) + (1.0 - mix) * noise.get(i, j));
        worst = worst.max((ssim(&x, &y, &p)? - direct_ssim(&x, &y)).abs());
        exact &= ssim(&x, &x, &p)? == 1.0;
    }
    Ok((
        worst < 1e-6 && exact,
        format!("max |ssim - direct| {worst:.2e} (< 1e-6), ssim(x, x) == 1 exactly: {exact}"),
    ))
}

// ---------------------------------------------------------------- criterion 4

fn criterion_4() -> anyhow::Result<Verdict> {
    let n = 128;
    let truth = shepp_logan(n)?;
    let geom = Geometry::new(n, 64)?;
    let y = forward_project(&truth, &geom)?;
    let cfg = SartConfig::default();
    assert_eq!((cfg.iterations, cfg.relaxation), (40, 0.15));
    let mut s = Sart::new(&y, &geom, &cfg)?;
    let start = s.residual_rms();
    for _ in 0..cfg.iterations {
        s.sweep();
    }
    let ratio = start / s.residual_rms();
    let mut ps = Vec::new();
    for views in [32, 64, 100] {
        let g = Geometry::new(n, views)?;
        let yv = forward_project(&truth, &g)?;
        ps.push(psnr(&fbp(&yv, &g, FbpFilter::Ramp)?.clipped(), &truth, 1.0)?);
    }
    let mono = ps.windows(2).all(|w| w[1] > w[0]);
    Ok((
        ratio >= 5.0 && mono,
        format!(
            "SART residual reduced {ratio:.1}x (>= 5x); FBP PSNR 32/64/100 views {:.2} / {:.2} / {:.2} dB (increasing)",
            ps[0], ps[1], ps[2]
        ),
    ))
}

// ---------------------------------------------------- shared desk-scale runs

const SEEDS: u64 = 10;

struct Desk {
    cfg: ExperimentConfig,
    /// Per seed at 64 views / 39 dB: fbp, sart, sart_tv, and DGR by weights.
    fbp: Vec<RunResult>,
    sart: Vec<RunResult>,
    sart_tv: Vec<RunResult>,
    dgr: BTreeMap<&'static str, Vec<RunResult>>,
    /// Time spent on the runs criterion 5 needs.
    c5_secs: f64,
}

fn dgr_method(cfg: &ExperimentConfig, weights: LossWeights, net: SkipNetConfig) -> Method {
    Method::Dgr {
        dgr: DgrConfig {
            weights,
            net,
            ..cfg.dgr.clone()
        },
        reference: cfg.sart.clone(),
    }
}

fn log(msg: &str) {
    eprintln!("  .. {msg}");
}

fn instances(cfg: &ExperimentConfig, snr: f64) -> anyhow::Result<Vec<Instance>> {
    (0..SEEDS).map(|s| prepare(cfg, s, 64, snr)).collect()
}

fn run_all(insts: &[Instance], m: &Method, label: &str) -> anyhow::Result<Vec<RunResult>> {
    insts
        .iter()
        .map(|inst| {
            let r = run_method(inst, m)?;
            log(&format!(
                "{label} seed {}: psnr {:.2} ssim {:.4} best iter {:?} ({:.0} s)",
                inst.seed,
                r.metrics.psnr,
                r.metrics.ssim,
                r.argmax_psnr(),
                r.metrics.runtime_s
            ));
            Ok(r)
        })
        .collect()
}

impl Desk {
    fn build() -> anyhow::Result<Self> {
        let cfg = ExperimentConfig::default();
        let t = Instant::now();
        let insts = instances(&cfg, 39.0)?;
        let fbp = run_all(&insts, &Method::Fbp(cfg.fbp_filter), "fbp")?;
        let sart = run_all(&insts, &Method::Sart(cfg.sart.clone()), "sart")?;
        let sart_tv = run_all(&insts, &Method::SartTv(cfg.sart_tv.clone()), "sart_tv")?;
        let mut dgr = BTreeMap::new();
        for (key, w) in [("0.9/0/0.1", (0.9, 0.0, 0.1)), ("1/0/0", (1.0, 0.0, 0.0))] {
            let m = dgr_method(&cfg, LossWeights::new(w.0, w.1, w.2)?, cfg.dgr.net.clone());
            dgr.insert(key, run_all(&insts, &m, &format!("dgr {key}"))?);
        }
        let c5_secs = t.elapsed().as_secs_f64();
        Ok(Self {
            cfg,
            fbp,
            sart,
            sart_tv,
            dgr,
            c5_secs,
        })
    }

    fn dgr_runs(&mut self, key: &'static str, w: (f64, f64, f64)) -> anyhow::Result<&Vec<RunResult>> {
        if !self.dgr.contains_key(key) {
            let insts = instances(&self.cfg, 39.0)?;
            let m = dgr_method(&self.cfg, LossWeights::new(w.0, w.1, w.2)?, self.cfg.dgr.net.clone());
            let runs = run_all(&insts, &m, &format!("dgr {key}"))?;
            self.dgr.insert(key, runs);
        }
        Ok(&self.dgr[key])
    }
}

fn mean_of(runs: &[RunResult], f: impl Fn(&RunResult) -> f64) -> f64 {
    mean(&runs.iter().map(f).collect::<Vec<_>>())
}

fn criterion_5(d: &Desk) -> anyhow::Result<Verdict> {
    let s = |runs: &[RunResult]| mean_of(runs, |r| r.metrics.ssim);
    let p = |runs: &[RunResult]| mean_of(runs, |r| r.metrics.psnr);
    let (s_dgr, s_tv, s_sart, s_fbp) = (s(&d.dgr["0.9/0/0.1"]), s(&d.sart_tv), s(&d.sart), s(&d.fbp));
    let (p_dgr, p_sart) = (p(&d.dgr["1/0/0"]), p(&d.sart));
    let order = s_dgr > s_tv && s_tv > s_sart && s_sart > s_fbp;
    let psnr_ok = p_dgr > p_sart;
    let budget = d.c5_secs <= 7200.0;
    Ok((
        order && psnr_ok && budget,
        format!(
            "mean SSIM DGR(0.9/0/0.1) {s_dgr:.4} > SART+TV {s_tv:.4} > SART {s_sart:.4} > FBP {s_fbp:.4}: {order}; \
             mean PSNR DGR(1/0/0) {p_dgr:.2} > SART {p_sart:.2}: {psnr_ok}; {:.0} s (<= 7200 s)",
            d.c5_secs
        ),
    ))
}

fn criterion_6(d: &mut Desk) -> anyhow::Result<Verdict> {
    let ssim_only = mean_of(d.dgr_runs("0/1/0", (0.0, 1.0, 0.0))?, |r| r.metrics.ssim);
    let a = mean_of(&d.dgr["0.9/0/0.1"], |r| r.metrics.ssim);
    let b = mean_of(&d.dgr["1/0/0"], |r| r.metrics.ssim);
    Ok((
        ssim_only < a && ssim_only < b,
        format!("mean SSIM DGR(0/1/0) {ssim_only:.4} < DGR(0.9/0/0.1) {a:.4} and DGR(1/0/0) {b:.4}"),
    ))
}

fn criterion_7(d: &Desk) -> anyhow::Result<Verdict> {
    let insts = instances(&d.cfg, 30.0)?;
    let m = dgr_method(&d.cfg, LossWeights::new(0.9, 0.0, 0.1)?, d.cfg.dgr.net.clone());
    let low = run_all(&insts, &m, "dgr 30 dB")?;
    let last = d.cfg.dgr.iterations - 1;
    let peaks_30: Vec<usize> = low.iter().map(|r| r.argmax_psnr().unwrap_or(last)).collect();
    let peaks_39: Vec<usize> = d.dgr["0.9/0/0.1"].iter().map(|r| r.argmax_psnr().unwrap_or(last)).collect();
    let early = peaks_30.iter().filter(|&&p| p < last).count();
    let (m30, m39) = (median(&peaks_30), median(&peaks_39));
    Ok((
        early >= 8 && m39 > m30,
        format!(
            "30 dB peak before final iteration on {early}/10 seeds (>= 8); median peak 39 dB {m39} > 30 dB {m30}: {}; \
             30 dB peaks {peaks_30:?}",
            m39 > m30
        ),
    ))
}

fn criterion_8(d: &Desk) -> anyhow::Result<Verdict> {
    let last = d.cfg.dgr.iterations - 1;
    let insts: Vec<Instance> = instances(&d.cfg, 39.0)?.into_iter().take(5).collect();
    let v3 = SkipNetConfig {
        upsample: d.cfg.dgr.net.upsample,
        ..SkipNetConfig::v3()
    };
    let m = dgr_method(&d.cfg, LossWeights::new(0.9, 0.0, 0.1)?, v3);
    let v3_runs = run_all(&insts, &m, "dgr v3")?;
    let p1: Vec<usize> = d.dgr["0.9/0/0.1"][..5].iter().map(|r| r.argmax_psnr().unwrap_or(last)).collect();
    let p3: Vec<usize> = v3_runs.iter().map(|r| r.argmax_psnr().unwrap_or(last)).collect();
    let (m1, m3) = (median(&p1), median(&p3));
    Ok((
        m1 < m3,
        format!("median peak iteration v1 {m1} < v3 {m3}; v1 {p1:?}, v3 {p3:?}"),
    ))
}

// ---------------------------------------------------------------- criterion 9

fn cli(args: &[&str], out: &Path) -> anyhow::Result<()> {
    let status = Command::new(env!("CARGO_BIN_EXE_sparsect"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env("SPARSECT_THREADS", "1")
        .output()?;
    if !status.status.success() {
        anyhow::bail!("sparsect {args:?} failed: {}", String::from_utf8_lossy(&status.stderr));
    }
    Ok(())
}

/// Every file under `dir` with run times removed from JSON-lines records.
fn snapshot(dir: &Path) -> anyhow::Result<BTreeMap<String, Vec<u8>>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d)? {
            let p = e?.path();
            if p.is_dir() {
                stack.push(p);
                continue;
            }
            let mut bytes = std::fs::read(&p)?;
            if p.extension().is_some_and(|e| e == "jsonl") {
                let text = String::from_utf8(bytes)?;
                let lines: Vec<String> = text
                    .lines()
                    .map(|l| {
                        let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
                        v.as_object_mut().unwrap().remove("runtime_s");
                        v.to_string()
                    })
                    .collect();
                bytes = lines.join("\n").into_bytes();
            }
            out.insert(p.strip_prefix(dir)?.display().to_string(), bytes);
        }
    }
    Ok(out)
}

fn criterion_9() -> anyhow::Result<Verdict> {
    let tmp = tempfile::tempdir()?;
    let small = ["--image-size", "32", "--seeds", "0..2"];
    let dgr_small = ["--iterations", "8", "--net", "v3"];
    let mut commands: Vec<(String, Vec<&str>)> = vec![
        ("phantom".into(), vec!["phantom"]),
        ("project".into(), vec!["project", "--views", "16"]),
        ("benchmark".into(), vec!["benchmark", "--views", "8,16", "--rows", "fbp,sart,sart_tv,dgr:0.9/0/0.1"]),
        ("curves".into(), vec!["curves", "--views", "16", "--snr-db", "30,39", "--archs", "v3"]),
    ];
    for m in ["fbp", "sart", "sart_tv", "dgr"] {
        commands.push((format!("reconstruct {m}"), vec!["reconstruct", "--method", m, "--views", "16"]));
    }
    let mut mismatched = Vec::new();
    for (name, args) in &commands {
        let mut full: Vec<&str> = args.clone();
        full.extend(small);
        if matches!(args[0], "benchmark" | "curves" | "reconstruct") {
            full.extend(dgr_small);
        }
        let slug = name.replace(' ', "_");
        let (a, b) = (tmp.path().join(format!("{slug}_a")), tmp.path().join(format!("{slug}_b")));
        cli(&full, &a)?;
        cli(&full, &b)?;
        if snapshot(&a)? != snapshot(&b)? {
            mismatched.push(name.clone());
        }
    }
    // profile runs on files written above
    let rc = tmp.path().join("reconstruct_sart_a/seed_0");
    let img = |m: &str| format!("p:{m}={}", rc.join(format!("{m}.bin")).display());
    let prof = [
        "profile",
        "--image",
        &img("truth"),
        "--image",
        &img("recon"),
        "--row",
        "16",
        "--feature",
        "12,12,6,6",
        "--background",
        "2,12,4,6",
    ];
    let (a, b) = (tmp.path().join("profile_a"), tmp.path().join("profile_b"));
    cli(&prof, &a)?;
    cli(&prof, &b)?;
    if snapshot(&a)? != snapshot(&b)? {
        mismatched.push("profile".into());
    }
    let total = commands.len() + 1;
    Ok((
        mismatched.is_empty(),
        format!("{}/{total} commands reproduced bitwise with one thread{}", total - mismatched.len(), if mismatched.is_empty() {
            String::new()
        } else {
            format!("; differing: {}", mismatched.join(", "))
        }),
    ))
}

// ---------------------------------------------------------------------- main

fn report(id: usize, name: &str, t: Instant, r: anyhow::Result<Verdict>) -> bool {
    let secs = t.elapsed().as_secs_f64();
    let (ok, detail) = match r {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e:#}")),
    };
    println!("criterion {id} [{}] {name} ({secs:.1} s): {detail}", if ok { "PASS" } else { "FAIL" });
    ok
}

fn main() -> ExitCode {
    // `cargo test` passes harness flags such as `--nocapture`; a name filter
    // that excludes this suite skips it.
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if !filters.is_empty() && !filters.iter().any(|f| "acceptance".contains(f.as_str())) {
        return ExitCode::SUCCESS;
    }
    // ACCEPTANCE_ONLY=1,3,9 restricts the run to the listed criteria.
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let want = |id: usize| only.as_ref().is_none_or(|o| o.contains(&id));
    let mut passed = Vec::new();
    type Quick = fn() -> anyhow::Result<Verdict>;
    let quick: [(usize, &str, Quick); 4] = [
        (1, "operator correctness", criterion_1),
        (2, "autodiff correctness", criterion_2),
        (3, "SSIM oracle equivalence", criterion_3),
        (4, "classical baselines", criterion_4),
    ];
    for (id, name, f) in quick {
        if want(id) {
            let t = Instant::now();
            passed.push(report(id, name, t, f()));
        }
    }
    if (5..=8).any(want) {
        let t = Instant::now();
        match Desk::build() {
            Ok(mut desk) => {
                passed.push(report(5, "method ordering", t, criterion_5(&desk)));
                if want(6) {
                    let t = Instant::now();
                    passed.push(report(6, "weight-grid sanity", t, criterion_6(&mut desk)));
                }
                if want(7) {
                    let t = Instant::now();
                    passed.push(report(7, "overfitting signature", t, criterion_7(&desk)));
                }
                if want(8) {
                    let t = Instant::now();
                    passed.push(report(8, "architecture study", t, criterion_8(&desk)));
                }
            }
            Err(e) => {
                for (id, name) in [(5, "method ordering"), (6, "weight-grid sanity"), (7, "overfitting signature"), (8, "architecture study")] {
                    passed.push(report(id, name, t, Err(anyhow::anyhow!("desk runs failed: {e:#}"))));
                }
            }
        }
    }
    if want(9) {
        let t = Instant::now();
        passed.push(report(9, "determinism", t, criterion_9()));
    }
    let n_pass = passed.iter().filter(|&&p| p).count();
    println!("acceptance: {n_pass}/{} criteria passed", passed.len());
    if n_pass == passed.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

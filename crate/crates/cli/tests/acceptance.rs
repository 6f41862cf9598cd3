//! Acceptance checks, one PASS/FAIL line per criterion.
//!
//! Run with `cargo test --test acceptance`; exits non-zero if any check fails.

use std::process::Command;
use std::time::{Duration, Instant};

use seistex::clbp::ClbpConfig;
use seistex::curvelet::{num_orientations, num_scales, CurveletConfig, CurveletPlan};
use seistex::descriptor::{kld, squared_chord, DistanceKind, Histogram, Method, KLD_EPSILON};
use seistex::image::{DatasetManifest, ManifestEntry};
use seistex::lri::LriConfig;
use seistex::pipeline::PipelineConfig;
use seistex::retrieval::{
    auc, evaluate_metrics, images_similarity, mean_average_precision, mean_precision_at_n, rank_all,
    retrieval_accuracy, Metric, SimilarityMatrix,
};
use seistex::seisim::{seisim, SeisimConfig};
use seistex::steerable::{build_pyramid, reconstruct, SteerableConfig};
use seistex::synth::{generate_dataset, DatasetSpec, Rng};
use seistex::GrayImage;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_budget(start: Instant, budget: Duration) -> Result<f64, String> {
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < budget.as_secs_f64(), || format!("took {secs:.1}s, budget {}s", budget.as_secs()))?;
    Ok(secs)
}

fn random_image(h: usize, w: usize, rng: &mut Rng) -> GrayImage {
    GrayImage::from_fn(h, w, |_, _| rng.uniform(0.0, 255.0))
}

fn distance_oracle() -> Check {
    let start = Instant::now();
    let mut rng = Rng::new(1);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let bins = rng.int_range(2, 64);
        let mut draw = || {
            let c: Vec<f64> = (0..bins)
                .map(|_| if rng.next_f64() < 0.2 { 0.0 } else { rng.next_f64() })
                .collect();
            let c = if c.iter().all(|&v| v == 0.0) { vec![1.0; bins] } else { c };
            Histogram::from_counts(c).unwrap()
        };
        let (p, q) = (draw(), draw());
        let direct_scd: f64 = p.bins().iter().zip(q.bins()).map(|(a, b)| (a.sqrt() - b.sqrt()).powi(2)).sum();
        let smooth = |h: &[f64]| {
            let t: f64 = h.iter().map(|v| v + KLD_EPSILON).sum();
            h.iter().map(|v| (v + KLD_EPSILON) / t).collect::<Vec<_>>()
        };
        let (ps, qs) = (smooth(p.bins()), smooth(q.bins()));
        let direct_kld: f64 = ps.iter().zip(&qs).map(|(a, b)| (a - b) * (a / b).ln()).sum();
        worst = worst
            .max((squared_chord(&p, &q).map_err(|e| e.to_string())? - direct_scd).abs())
            .max((kld(&p, &q).map_err(|e| e.to_string())? - direct_kld).abs());
    }
    ensure(worst <= 1e-12, || format!("max deviation {worst:e}"))?;
    let a = Histogram::from_counts(vec![1.0, 0.0]).unwrap();
    let b = Histogram::from_counts(vec![0.0, 1.0]).unwrap();
    let d = squared_chord(&a, &b).unwrap();
    ensure(d == 2.0, || format!("SCD of disjoint bins is {d}"))?;
    let secs = within_budget(start, Duration::from_secs(5))?;
    Ok(format!("max deviation {worst:.1e}, {secs:.2}s"))
}

fn round_trips() -> Check {
    let start = Instant::now();
    let mut rng = Rng::new(2);
    let sp = SteerableConfig::default();
    let plan = CurveletPlan::new(64, 64, CurveletConfig::default()).map_err(|e| e.to_string())?;
    let rel = |a: &GrayImage, b: &GrayImage| {
        let d: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum();
        (d / a.energy()).sqrt()
    };
    let (mut sp_err, mut ct_err): (f64, f64) = (0.0, 0.0);
    for _ in 0..20 {
        let img = random_image(64, 64, &mut rng);
        let back = reconstruct(&build_pyramid(&img, &sp).unwrap(), &sp).unwrap();
        sp_err = sp_err.max(rel(&img, &back));
        let back = plan.inverse(&plan.forward(&img).unwrap()).unwrap();
        ct_err = ct_err.max(rel(&img, &back));
    }
    ensure(sp_err <= 1e-4, || format!("SP error {sp_err:e}"))?;
    ensure(ct_err <= 1e-6, || format!("CT error {ct_err:e}"))?;
    let mut pou: f64 = 0.0;
    for (h, w) in [(64, 64), (150, 300)] {
        let p = CurveletPlan::new(h, w, CurveletConfig::default()).unwrap();
        pou = p.window_energy().iter().fold(pou, |m, s| m.max((s - 1.0).abs()));
    }
    ensure(pou <= 1e-10, || format!("partition of unity off by {pou:e}"))?;
    let secs = within_budget(start, Duration::from_secs(30))?;
    Ok(format!("SP {sp_err:.1e}, CT {ct_err:.1e}, unity {pou:.1e}, {secs:.1}s"))
}

fn formula_checks() -> Check {
    let scales = num_scales(150, 300).map_err(|e| e.to_string())?;
    ensure(scales == 5, || format!("num_scales(150,300) = {scales}"))?;
    let k: Vec<usize> = (1..=4).map(num_orientations).collect();
    ensure(k == [16, 32, 32, 64], || format!("orientations {k:?}"))?;
    let pyr = build_pyramid(&GrayImage::zeros(150, 300), &SteerableConfig::default()).map_err(|e| e.to_string())?;
    ensure(pyr.subband_count() == 34, || format!("{} SP subbands", pyr.subband_count()))?;
    let clbp = ClbpConfig::default().descriptor_len();
    ensure(clbp == 46, || format!("CLBP length {clbp}"))?;
    let lri = LriConfig::default().descriptor_len();
    ensure(lri == 112, || format!("LRI length {lri}"))?;
    Ok("J=5, K={16,32,32,64}, 34 subbands, 46, 112".into())
}

struct RandomCorpus {
    labels: Vec<String>,
    sim: Vec<f64>,
}

fn random_corpus(rng: &mut Rng) -> RandomCorpus {
    let classes = rng.int_range(2, 4);
    let mut labels: Vec<usize> = (0..classes).flat_map(|c| [c, c]).collect();
    for _ in 0..rng.int_range(0, 20 - labels.len()) {
        labels.push(rng.int_range(0, classes - 1));
    }
    for i in (1..labels.len()).rev() {
        labels.swap(i, rng.int_range(0, i));
    }
    let n = labels.len();
    let coarse = rng.next_f64() < 0.5;
    let mut sim = vec![1.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v = rng.next_f64();
            let v = if coarse { (v * 4.0).floor() / 4.0 } else { v };
            sim[i * n + j] = v;
            sim[j * n + i] = v;
        }
    }
    RandomCorpus {
        labels: labels.into_iter().map(|c| format!("c{c}")).collect(),
        sim,
    }
}

/// Definitions evaluated directly: `(P@1, AP, P@(C-1), AUC)` of query `q`.
fn brute_force(c: &RandomCorpus, q: usize) -> (f64, f64, f64, f64) {
    let n = c.labels.len();
    let s = |i: usize| c.sim[q * n + i];
    let mut order: Vec<usize> = (0..n).filter(|&i| i != q).collect();
    // insertion sort by descending score, ascending id
    for k in 1..order.len() {
        let mut j = k;
        while j > 0 && (s(order[j]) > s(order[j - 1]) || (s(order[j]) == s(order[j - 1]) && order[j] < order[j - 1])) {
            order.swap(j, j - 1);
            j -= 1;
        }
    }
    let rel: Vec<bool> = order.iter().map(|&i| c.labels[i] == c.labels[q]).collect();
    let p_at = |m: usize| rel[..m].iter().filter(|&&r| r).count() as f64 / m as f64;
    let ranks: Vec<usize> = (0..rel.len()).filter(|&k| rel[k]).collect();
    let ap = ranks.iter().enumerate().map(|(i, &k)| (i + 1) as f64 / (k + 1) as f64).sum::<f64>() / ranks.len() as f64;
    let class = c.labels.iter().filter(|l| **l == c.labels[q]).count();
    let (mut credit, mut pairs) = (0.0, 0.0);
    for &i in order.iter().filter(|&&i| c.labels[i] == c.labels[q]) {
        for &j in order.iter().filter(|&&j| c.labels[j] != c.labels[q]) {
            pairs += 1.0;
            credit += if s(i) > s(j) {
                1.0
            } else if s(i) == s(j) {
                0.5
            } else {
                0.0
            };
        }
    }
    (p_at(1), ap, p_at(class - 1), credit / pairs)
}

fn metric_oracle() -> Check {
    let mut rng = Rng::new(4);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let c = random_corpus(&mut rng);
        let n = c.labels.len();
        let manifest = DatasetManifest::from_entries(
            "",
            c.labels
                .iter()
                .enumerate()
                .map(|(i, l)| ManifestEntry {
                    path: format!("{i}"),
                    label: l.clone(),
                })
                .collect(),
        )
        .map_err(|e| e.to_string())?;
        let sim = SimilarityMatrix::new(n, c.sim.clone()).map_err(|e| e.to_string())?;
        let rs = rank_all(&sim, &c.labels).map_err(|e| e.to_string())?;
        let oracle: Vec<_> = (0..n).map(|q| brute_force(&c, q)).collect();
        let mean = |f: fn(&(f64, f64, f64, f64)) -> f64| oracle.iter().map(f).sum::<f64>() / n as f64;
        let engine = [
            mean_precision_at_n(&rs, 1),
            mean_average_precision(&rs),
            retrieval_accuracy(&rs, &manifest),
            auc(&rs),
        ];
        let want = [mean(|o| o.0), mean(|o| o.1), mean(|o| o.2), mean(|o| o.3)];
        for (e, w) in engine.into_iter().zip(want) {
            worst = worst.max((e.map_err(|e| e.to_string())? - w).abs());
        }
        let squared = rank_all(&sim.map(|v| v * v), &c.labels).map_err(|e| e.to_string())?;
        let a = evaluate_metrics(&rs, &manifest, &Metric::ALL).map_err(|e| e.to_string())?;
        let b = evaluate_metrics(&squared, &manifest, &Metric::ALL).map_err(|e| e.to_string())?;
        ensure(a == b, || "report changed under s -> s^2".into())?;
    }
    ensure(worst <= 1e-12, || format!("max deviation {worst:e}"))?;
    Ok(format!("200 corpora, max deviation {worst:.1e}, s^2 invariant"))
}

fn synthetic_retrieval() -> Check {
    let start = Instant::now();
    let spec = DatasetSpec {
        classes: 4,
        per_class: 25,
        height: 150,
        width: 300,
        seed: 7,
    };
    let data = generate_dataset(&spec).map_err(|e| e.to_string())?;
    let labels: Vec<String> = data.iter().map(|d| d.0.clone()).collect();
    let images: Vec<GrayImage> = data.into_iter().map(|d| d.1).collect();
    let cfg = PipelineConfig::default();
    let mut summary = Vec::new();
    let mut failures = Vec::new();
    for method in Method::ALL {
        let sim = images_similarity(&images, method, DistanceKind::Scd, &cfg).map_err(|e| e.to_string())?;
        let rs = rank_all(&sim, &labels).map_err(|e| e.to_string())?;
        let map = mean_average_precision(&rs).map_err(|e| e.to_string())?;
        let p5 = mean_precision_at_n(&rs, 5).map_err(|e| e.to_string())?;
        summary.push(format!("{method} MAP {map:.3} P@5 {p5:.3}"));
        let p5_required = method != Method::Seisim;
        if map < 0.80 || (p5_required && p5 < 0.95) {
            failures.push(format!("{method} MAP {map:.3} P@5 {p5:.3}"));
        }
    }
    ensure(failures.is_empty(), || format!("below threshold: {}", failures.join("; ")))?;
    let secs = within_budget(start, Duration::from_secs(600))?;
    Ok(format!("{}; {secs:.0}s", summary.join(", ")))
}

fn seisim_identities() -> Check {
    let cfg = SeisimConfig::default();
    let mut rng = Rng::new(6);
    let images: Vec<GrayImage> = (0..100).map(|_| random_image(64, 64, &mut rng)).collect();
    let (mut self_err, mut sym_err): (f64, f64) = (0.0, 0.0);
    for i in 0..images.len() {
        let (a, b) = (&images[i], &images[(i + 1) % images.len()]);
        self_err = self_err.max((seisim(a, a, &cfg).map_err(|e| e.to_string())? - 1.0).abs());
        let ab = seisim(a, b, &cfg).map_err(|e| e.to_string())?;
        let ba = seisim(b, a, &cfg).map_err(|e| e.to_string())?;
        sym_err = sym_err.max((ab - ba).abs());
    }
    ensure(self_err <= 1e-9, || format!("self-similarity off by {self_err:e}"))?;
    ensure(sym_err <= 1e-12, || format!("asymmetry {sym_err:e}"))?;
    Ok(format!("self {self_err:.1e}, symmetry {sym_err:.1e}"))
}

fn run_cli(args: &[&str], workers: &str) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_seistex"))
        .args(args)
        .env("SEISTEX_WORKERS", workers)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!("`seistex {}` failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr))
    })?;
    Ok(out.stdout)
}

fn parse_timings(csv: &[u8]) -> Result<Vec<(String, f64, usize)>, String> {
    let text = String::from_utf8(csv.to_vec()).map_err(|e| e.to_string())?;
    let mut lines = text.lines();
    ensure(lines.next() == Some("method,seconds_per_pair,reps"), || "bad header".into())?;
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            ensure(f.len() == 3, || format!("bad row {l:?}"))?;
            let secs: f64 = f[1].parse().map_err(|_| format!("bad seconds in {l:?}"))?;
            let reps: usize = f[2].parse().map_err(|_| format!("bad reps in {l:?}"))?;
            Ok((f[0].to_string(), secs, reps))
        })
        .collect()
}

fn timing_harness() -> Check {
    let args = ["bench-time", "--size", "150x300", "--reps", "5", "--seed", "7"];
    let first = parse_timings(&run_cli(&args, "1")?)?;
    let second = parse_timings(&run_cli(&args, "1")?)?;
    let names: Vec<&str> = first.iter().map(|r| r.0.as_str()).collect();
    ensure(names == ["sp", "ct", "clbp", "lri", "seisim"], || format!("methods {names:?}"))?;
    for (name, secs, reps) in first.iter().chain(&second) {
        ensure(secs.is_finite() && *secs > 0.0, || format!("{name}: {secs} s"))?;
        ensure(*reps >= 5, || format!("{name}: {reps} reps"))?;
    }
    let rows: Vec<String> = first
        .iter()
        .zip(&second)
        .map(|(a, b)| format!("{} {:.4}s (rerun x{:.2})", a.0, a.1, b.1 / a.1))
        .collect();
    let fastest = first
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|r| r.0.clone())
        .unwrap_or_default();
    Ok(format!("{}; fastest {fastest}", rows.join(", ")))
}

fn determinism() -> Check {
    let args = [
        "evaluate", "--seed", "7", "--classes", "4", "--per-class", "10", "--size", "150x300",
    ];
    let one = run_cli(&args, "1")?;
    let many = run_cli(&args, "4")?;
    ensure(!one.is_empty(), || "empty report".into())?;
    ensure(one == many, || "reports differ between 1 and 4 workers".into())?;
    Ok(format!("{} identical bytes with 1 and 4 workers", one.len()))
}

fn main() {
    let checks: [(&str, fn() -> Check); 8] = [
        ("distance oracle", distance_oracle),
        ("transform round trips", round_trips),
        ("formula checks", formula_checks),
        ("metric oracle", metric_oracle),
        ("synthetic retrieval", synthetic_retrieval),
        ("seisim self-similarity", seisim_identities),
        ("timing harness", timing_harness),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        match check() {
            Ok(detail) => println!("criterion {} [PRIMARY] {name}: PASS ({detail})", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} [PRIMARY] {name}: FAIL ({why})", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", checks.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs in-process against the library and the command layer.

use std::path::Path;
use std::time::{Duration, Instant};

use clap::Parser;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use roiaug_cli::commands::stats::{compare, render};
use roiaug_cli::{Cli, StatsArgs};
use roiaug_core::augment::{augment_one, jitter_box, SamplerConfig};
use roiaug_core::cohort::{assign_folds, verify_no_leakage, FoldRow};
use roiaug_core::evalstats::{bootstrap_ci, fold_mean_sd, pr_auc, roc_auc, wilcoxon_signed_rank, Metric, Prediction};
use roiaug_core::geometry::BBox;
use roiaug_core::integral::reflect_index;
use roiaug_core::raster::GrayImage;
use roiaug_core::roibank::{nms, score_window, RoiBank, ScoredBox};
use roiaug_core::saliency::{local_variance, log_energy, log_radius, SaliencyMap};
use roiaug_core::synth::{gaussian_cohort, synthetic_records, write_phantom_tree};
use roiaug_core::tissue::BinaryMask;
use roiaug_core::DrawStream;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || format!("took {elapsed:.2?}, limit {limit:?}"))
}

const FULL: [f64; 4] = [0.9189, 0.9228, 0.9056, 0.9103];
const ROI: [f64; 4] = [0.9157, 0.9249, 0.9247, 0.9072];

fn round4(v: f64) -> f64 {
    (v * 1e4).round() / 1e4
}

fn c1_fold_summary() -> Check {
    let t = Instant::now();
    let (fm, fs) = fold_mean_sd(&FULL).map_err(|e| e.to_string())?;
    let (rm, rs) = fold_mean_sd(&ROI).map_err(|e| e.to_string())?;
    ensure((round4(fm), round4(fs)) == (0.9144, 0.0079), || format!("Full {fm:.6} ± {fs:.6}"))?;
    ensure((round4(rm), round4(rs)) == (0.9181, 0.0085), || format!("ROI {rm:.6} ± {rs:.6}"))?;
    let args = StatsArgs {
        a: ROI.to_vec(),
        b: FULL.to_vec(),
        a_name: "ROI".into(),
        b_name: "Full".into(),
        metric: "ROC-AUC".into(),
    };
    let report = compare(&args).map_err(|e| e.to_string())?;
    let text = render(&report);
    ensure(text.contains("Δ (ROI - Full) +0.0037"), || format!("stats output:\n{text}"))?;
    within(t.elapsed(), Duration::from_secs(1))?;
    Ok(format!("Full 0.9144 ± 0.0079, ROI 0.9181 ± 0.0085, delta {:+.4}", report.delta))
}

/// Two-sided p by listing all 2^n sign patterns of the ranks 1..=n (no ties).
fn enumeration_p(ranks: &[f64], w_plus: f64) -> f64 {
    let n = ranks.len();
    let total: f64 = ranks.iter().sum();
    let observed = w_plus.min(total - w_plus);
    let mut hits = 0u64;
    for mask in 0u64..(1 << n) {
        let wp: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        if wp.min(total - wp) <= observed + 1e-9 {
            hits += 1;
        }
    }
    (hits as f64 / (1u64 << n) as f64).min(1.0)
}

fn c2_wilcoxon() -> Check {
    let t = Instant::now();
    let r = wilcoxon_signed_rank(&ROI, &FULL).map_err(|e| e.to_string())?;
    ensure(r.w_plus == 5.0 && r.w_minus == 5.0, || format!("W+ {} W- {}", r.w_plus, r.w_minus))?;
    ensure(r.exact && r.p_value == 1.0, || format!("p {} exact {}", r.p_value, r.exact))?;
    // |d| = .0032 .0021 .0191 .0031 -> ranks 3 1 4 2, positives 1 and 4
    let oracle = enumeration_p(&[1.0, 2.0, 3.0, 4.0], 5.0);
    ensure(oracle == r.p_value, || format!("oracle p {oracle}"))?;
    let pos = wilcoxon_signed_rank(&[0.5, 0.6, 0.7, 0.8], &[0.4, 0.4, 0.4, 0.4]).map_err(|e| e.to_string())?;
    ensure(pos.p_value == 0.125, || format!("all-positive p {}", pos.p_value))?;
    ensure(enumeration_p(&[1.0, 2.0, 3.0, 4.0], 10.0) == 0.125, || "oracle disagrees".into())?;
    within(t.elapsed(), Duration::from_secs(1))?;
    Ok("W+ = W- = 5, p = 1.0 (2^4 enumeration agrees); all-positive p = 0.125".into())
}

fn pairwise_auc(p: &[Prediction]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for a in p.iter().filter(|x| x.label == 1) {
        for b in p.iter().filter(|x| x.label == 0) {
            den += 1.0;
            num += if a.score > b.score {
                1.0
            } else if a.score == b.score {
                0.5
            } else {
                0.0
            };
        }
    }
    num / den
}

fn sweep_ap(p: &[Prediction]) -> f64 {
    let n_pos = p.iter().filter(|x| x.label == 1).count() as f64;
    let mut thresholds: Vec<f64> = p.iter().map(|x| x.score).collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let (mut ap, mut prev) = (0.0, 0.0);
    for t in thresholds {
        let tp = p.iter().filter(|x| x.score >= t && x.label == 1).count() as f64;
        let all = p.iter().filter(|x| x.score >= t).count() as f64;
        let recall = tp / n_pos;
        ap += (recall - prev) * (tp / all);
        prev = recall;
    }
    ap
}

fn c3_roc_pr_oracles() -> Check {
    let t = Instant::now();
    let mut rng = DrawStream::new(3);
    let (mut tied, mut worst) = (0usize, 0.0f64);
    for inst in 0..200 {
        let n = 2 + rng.index(29);
        let with_ties = inst % 2 == 0;
        let mut preds: Vec<Prediction> = (0..n)
            .map(|i| {
                let s = if with_ties { rng.index(5) as f64 / 4.0 } else { rng.next_f64() };
                Prediction::new(format!("u{i}"), s, u8::from(rng.next_f64() < 0.4))
            })
            .collect();
        preds[0].label = 1;
        preds[1].label = 0;
        let mut scores: Vec<f64> = preds.iter().map(|p| p.score).collect();
        scores.sort_by(f64::total_cmp);
        if scores.windows(2).any(|w| w[0] == w[1]) {
            tied += 1;
        }
        let auc = roc_auc(&preds).map_err(|e| e.to_string())?;
        let ap = pr_auc(&preds).map_err(|e| e.to_string())?;
        let (oa, op) = (pairwise_auc(&preds), sweep_ap(&preds));
        worst = worst.max((auc - oa).abs()).max((ap - op).abs());
        ensure((auc - oa).abs() <= 1e-12, || format!("instance {inst}: AUC {auc} vs {oa}"))?;
        ensure((ap - op).abs() <= 1e-12, || format!("instance {inst}: AP {ap} vs {op}"))?;
    }
    ensure(tied >= 50, || format!("only {tied} instances with ties"))?;
    within(t.elapsed(), Duration::from_secs(5))?;
    Ok(format!("200 instances, {tied} with ties, max |diff| {worst:.1e}"))
}

fn ref_iou(a: &BBox, b: &BBox) -> f64 {
    let (ax0, ax1, ay0, ay1) = (a.cx - a.w / 2.0, a.cx + a.w / 2.0, a.cy - a.h / 2.0, a.cy + a.h / 2.0);
    let (bx0, bx1, by0, by1) = (b.cx - b.w / 2.0, b.cx + b.w / 2.0, b.cy - b.h / 2.0, b.cy + b.h / 2.0);
    let iw = (ax1.min(bx1) - ax0.max(bx0)).max(0.0);
    let ih = (ay1.min(by1) - ay0.max(by0)).max(0.0);
    let inter = iw * ih;
    if inter == 0.0 {
        return 0.0;
    }
    inter / (a.w * a.h + b.w * b.h - inter)
}

fn ref_nms(cands: &[ScoredBox], thresh: f64) -> Vec<ScoredBox> {
    let mut order: Vec<usize> = (0..cands.len()).collect();
    order.sort_by(|&i, &j| {
        let (a, b) = (&cands[i], &cands[j]);
        b.score
            .partial_cmp(&a.score)
            .unwrap()
            .then(a.bbox.cy.partial_cmp(&b.bbox.cy).unwrap())
            .then(a.bbox.cx.partial_cmp(&b.bbox.cx).unwrap())
            .then(a.bbox.w.partial_cmp(&b.bbox.w).unwrap())
    });
    let mut suppressed = vec![false; cands.len()];
    let mut kept = Vec::new();
    for (pos, &i) in order.iter().enumerate() {
        if suppressed[i] {
            continue;
        }
        kept.push(cands[i]);
        for &j in &order[pos + 1..] {
            if ref_iou(&cands[i].bbox, &cands[j].bbox) > thresh {
                suppressed[j] = true;
            }
        }
    }
    kept
}

fn c4_nms_oracle() -> Check {
    let t = Instant::now();
    let mut rng = DrawStream::new(4);
    let mut total_kept = 0;
    for set in 0..500 {
        let n = 1 + rng.index(20);
        let cands: Vec<ScoredBox> = (0..n)
            .map(|_| {
                // integer geometry and coarse scores force exact IoU and score ties
                let b = BBox::new(
                    8.0 + rng.index(16) as f64,
                    8.0 + rng.index(16) as f64,
                    2.0 + 2.0 * rng.index(6) as f64,
                    2.0 + 2.0 * rng.index(6) as f64,
                );
                ScoredBox::new(b, rng.index(6) as f64 / 5.0)
            })
            .collect();
        let thresh = [0.3, 0.5, 0.7][rng.index(3)];
        let got = nms(&cands, thresh);
        let want = ref_nms(&cands, thresh);
        ensure(got == want, || format!("set {set}: {got:?} vs {want:?}"))?;
        total_kept += got.len();
    }
    within(t.elapsed(), Duration::from_secs(5))?;
    Ok(format!("500 sets agree exactly ({total_kept} boxes kept)"))
}

fn c5_jitter_contract() -> Check {
    let t = Instant::now();
    let mut shapes = DrawStream::new(50);
    for alpha in [0.1, 0.2] {
        let mut rng = DrawStream::new(5);
        for i in 0..100_000 {
            let b = BBox::new(
                shapes.uniform(0.0, 1000.0),
                shapes.uniform(0.0, 1000.0),
                shapes.uniform(1.0, 400.0),
                shapes.uniform(1.0, 400.0),
            );
            let j = jitter_box(&b, alpha, &mut rng);
            let tol = 1e-12;
            let ok = (j.w / b.w - 1.0).abs() <= alpha + tol
                && (j.h / b.h - 1.0).abs() <= alpha + tol
                && ((j.cx - b.cx) / b.w).abs() <= alpha + tol
                && ((j.cy - b.cy) / b.h).abs() <= alpha + tol;
            ensure(ok, || format!("alpha {alpha}, draw {i}: {b:?} -> {j:?}"))?;
        }
    }
    let mut rng = DrawStream::new(5);
    for _ in 0..100_000 {
        let b = BBox::new(shapes.uniform(0.0, 1000.0), shapes.next_f64(), shapes.uniform(1.0, 400.0), 3.3);
        let j = jitter_box(&b, 0.0, &mut rng);
        let same = [j.cx, j.cy, j.w, j.h]
            .iter()
            .zip([b.cx, b.cy, b.w, b.h])
            .all(|(x, y)| x.to_bits() == y.to_bits());
        ensure(same, || format!("alpha 0 changed {b:?} into {j:?}"))?;
    }
    within(t.elapsed(), Duration::from_secs(5))?;
    Ok("2 x 10^5 draws inside ±alpha; alpha = 0 bit-exact".into())
}

fn c6_replacement_rate() -> Check {
    let t = Instant::now();
    let img = GrayImage::from_fn(32, 32, |x, y| ((x * 7 + y * 3) % 32) as f64 / 31.0);
    let mask = BinaryMask::from_fn(32, 32, |_, _| true);
    let bank = RoiBank {
        image_id: "probe".into(),
        source_w: 32,
        source_h: 32,
        boxes: vec![ScoredBox::new(BBox::new(16.0, 16.0, 12.0, 12.0), 1.0)],
        maskless: false,
        k: 1,
        config_hash: String::new(),
    };
    let rate = |p_roi: f64| -> Result<f64, String> {
        let cfg = SamplerConfig {
            p_roi,
            out_size: 8,
            ..SamplerConfig::default()
        };
        let mut rng = DrawStream::new(6);
        let mut hits = 0usize;
        for _ in 0..10_000 {
            hits += augment_one(&img, &mask, &bank, &cfg, &mut rng).map_err(|e| e.to_string())?.used_roi as usize;
        }
        Ok(hits as f64 / 10_000.0)
    };
    let r = rate(0.10)?;
    ensure((r - 0.10).abs() <= 0.009, || format!("rate {r}"))?;
    let (r0, r1) = (rate(0.0)?, rate(1.0)?);
    ensure(r0 == 0.0 && r1 == 1.0, || format!("endpoints {r0} {r1}"))?;
    within(t.elapsed(), Duration::from_secs(10))?;
    Ok(format!("rate {r:.4} at p_roi = 0.10; endpoints exact"))
}

fn c7_leakage() -> Check {
    let t = Instant::now();
    let records = synthetic_records(2414, 0.3, 7);
    let assignment = assign_folds(&records, 4, 7).map_err(|e| e.to_string())?;
    let rows = assignment.rows();
    let report = verify_no_leakage(&records, &rows);
    ensure(report.passed(), || format!("clean split flagged: {report:?}"))?;
    let mut sizes = assignment.fold_sizes();
    sizes.sort();
    ensure(sizes == [603, 603, 604, 604], || format!("fold sizes {sizes:?}"))?;

    let mut planted = rows.clone();
    let moved = planted[10].clone();
    planted.push(FoldRow {
        patient_id: moved.patient_id.clone(),
        fold: (moved.fold + 1) % 4,
    });
    let dropped = planted.remove(20);
    let bad = verify_no_leakage(&records, &planted);
    ensure(
        bad.multi_fold_patients.iter().any(|(p, _)| *p == moved.patient_id),
        || format!("duplicate patient {} not detected", moved.patient_id),
    )?;
    let orphans = records.iter().filter(|r| r.patient_id == dropped.patient_id).count();
    ensure(bad.unassigned_images.len() == orphans && orphans > 0, || {
        format!("{} unassigned images reported, {orphans} expected", bad.unassigned_images.len())
    })?;
    within(t.elapsed(), Duration::from_secs(5))?;
    Ok(format!("2414 patients, folds {sizes:?}, planted duplicate and orphan detected"))
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let cli = Cli::try_parse_from(std::iter::once("roiaug").chain(args.iter().copied())).map_err(|e| e.to_string())?;
    let outcome = roiaug_cli::run(cli).map_err(|e| format!("{e:#}"))?;
    ensure(outcome.errors.is_empty(), || format!("{:?}", outcome.errors))
}

fn oracle_variance(img: &GrayImage, window: usize) -> Vec<f64> {
    let (w, h) = (img.width(), img.height());
    let r = (window / 2) as isize;
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let vals: Vec<f64> = (-r..=r)
                .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
                .map(|(dx, dy)| img.get(reflect_index(x + dx, w), reflect_index(y + dy, h)))
                .collect();
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            out.push(vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / vals.len() as f64);
        }
    }
    out
}

fn oracle_log(img: &GrayImage, sigma: f64) -> Vec<f64> {
    let (w, h) = (img.width(), img.height());
    let r = log_radius(sigma) as isize;
    let s2 = sigma * sigma;
    let mut kernel = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            let q = (dx * dx + dy * dy) as f64;
            kernel.push((q - 2.0 * s2) / (2.0 * std::f64::consts::PI * s2 * s2 * s2) * (-q / (2.0 * s2)).exp());
        }
    }
    let mean = kernel.iter().sum::<f64>() / kernel.len() as f64;
    let side = (2 * r + 1) as usize;
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut acc = 0.0;
            for dy in -r..=r {
                for dx in -r..=r {
                    let k = kernel[(dy + r) as usize * side + (dx + r) as usize] - mean;
                    acc += k * img.get(reflect_index(x + dx, w), reflect_index(y + dy, h));
                }
            }
            out.push(acc * acc);
        }
    }
    out
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn c8_bank_determinism(tree: &Path, scratch: &Path) -> Check {
    let t = Instant::now();
    let (a, b) = (scratch.join("run_a"), scratch.join("run_b"));
    for out in [&a, &b] {
        run_cli(&["--out", out.to_str().unwrap(), "bank", "--manifest", tree.to_str().unwrap()])?;
    }
    let (fa, fb) = (
        std::fs::read(a.join("banks.jsonl")).map_err(|e| e.to_string())?,
        std::fs::read(b.join("banks.jsonl")).map_err(|e| e.to_string())?,
    );
    let lines = fa.iter().filter(|&&c| c == b'\n').count();
    ensure(lines == 100, || format!("{lines} banks written"))?;
    ensure(fa == fb, || "bank files differ between runs".into())?;

    let mut rng = DrawStream::new(8);
    let mut worst = 0.0f64;
    for trial in 0..20 {
        let img = GrayImage::from_fn(16, 16, |_, _| rng.next_f64());
        for window in [3, 5, 7, 31] {
            let got = local_variance(&img, window).map_err(|e| e.to_string())?;
            let d = max_diff(got.values(), &oracle_variance(&img, window));
            worst = worst.max(d);
            ensure(d <= 1e-9, || format!("trial {trial}: variance window {window} off by {d:e}"))?;
        }
        for sigma in [0.8, 1.5, 2.5] {
            let got = log_energy(&img, sigma).map_err(|e| e.to_string())?;
            let d = max_diff(got.values(), &oracle_log(&img, sigma));
            worst = worst.max(d);
            ensure(d <= 1e-9, || format!("trial {trial}: LoG sigma {sigma} off by {d:e}"))?;
        }
        let smap = SaliencyMap::new(16, 16, (0..256).map(|_| rng.next_f64()).collect()).map_err(|e| e.to_string())?;
        for _ in 0..20 {
            let bx = BBox::new(rng.uniform(0.0, 16.0), rng.uniform(0.0, 16.0), rng.uniform(1.0, 16.0), rng.uniform(1.0, 16.0));
            let Some(r) = bx.rasterize(16, 16) else { continue };
            let mut sum = 0.0;
            for y in r.y0..r.y1() {
                for x in r.x0..r.x1() {
                    sum += smap.get(x, y);
                }
            }
            let want = sum / r.area() as f64;
            let got = score_window(&smap, &bx).map_err(|e| e.to_string())?;
            worst = worst.max((got - want).abs());
            ensure((got - want).abs() <= 1e-9, || format!("window {bx:?}: {got} vs {want}"))?;
        }
    }
    within(t.elapsed(), Duration::from_secs(60))?;
    Ok(format!(
        "100 banks byte-identical across runs; filter/score oracles max |diff| {worst:.1e}; {:.1?}",
        t.elapsed()
    ))
}

fn c9_throughput(tree: &Path, scratch: &Path) -> Check {
    let out = scratch.join("single");
    let t = Instant::now();
    run_cli(&["--workers", "1", "--out", out.to_str().unwrap(), "bank", "--manifest", tree.to_str().unwrap()])?;
    let per_image = t.elapsed().as_secs_f64() * 1e3 / 100.0;
    ensure(per_image <= 50.0, || format!("{per_image:.1} ms/image single-worker"))?;
    Ok(format!("{per_image:.1} ms/image single-worker, 1024x1024, including decode and I/O"))
}

fn c10_bootstrap_coverage() -> Check {
    let t = Instant::now();
    let truth = 0.914;
    let normal = Normal::standard();
    let shift = std::f64::consts::SQRT_2 * normal.inverse_cdf(truth);
    let trial = |i: u64| -> Result<(f64, f64), String> {
        let cohort = gaussian_cohort(300, 100, shift, 1000 + i);
        let ci = bootstrap_ci(&cohort, Metric::RocAuc, 1000, 0.95, 77 + i).map_err(|e| e.to_string())?;
        Ok((ci.low, ci.high))
    };
    let intervals = (0..200u64).into_par_iter().map(trial).collect::<Result<Vec<_>, _>>()?;
    let covered = intervals.iter().filter(|(lo, hi)| *lo <= truth && truth <= *hi).count();
    let coverage = covered as f64 / 200.0;
    ensure(coverage >= 0.90, || format!("coverage {coverage:.3}"))?;
    for i in [0u64, 17, 199] {
        let again = trial(i)?;
        ensure(again == intervals[i as usize], || format!("trial {i} not reproducible"))?;
    }
    within(t.elapsed(), Duration::from_secs(300))?;
    Ok(format!("coverage {coverage:.3} over 200 trials (true AUC {truth}); seeds reproduce; {:.1?}", t.elapsed()))
}

fn main() {
    let scratch = tempfile::tempdir().expect("scratch dir");
    let tree = scratch.path().join("phantoms");
    let t = Instant::now();
    write_phantom_tree(&tree, 25, 2024).expect("phantom tree");
    println!("setup: 100 phantoms written in {:.1?}", t.elapsed());

    let criteria: Vec<(&str, Box<dyn Fn() -> Check>)> = vec![
        ("1 fold mean/sd and delta", Box::new(c1_fold_summary)),
        ("2 exact wilcoxon", Box::new(c2_wilcoxon)),
        ("3 roc/pr oracles", Box::new(c3_roc_pr_oracles)),
        ("4 nms oracle", Box::new(c4_nms_oracle)),
        ("5 jitter contract", Box::new(c5_jitter_contract)),
        ("6 replacement rate", Box::new(c6_replacement_rate)),
        ("7 leakage suite", Box::new(c7_leakage)),
        ("8 bank determinism and filter oracles", Box::new(|| c8_bank_determinism(&tree, scratch.path()))),
        ("9 bank throughput", Box::new(|| c9_throughput(&tree, scratch.path()))),
        ("10 bootstrap coverage", Box::new(c10_bootstrap_coverage)),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        let t = Instant::now();
        match check() {
            Ok(detail) => println!("PASS  criterion {name}: {detail} [{:.2?}]", t.elapsed()),
            Err(why) => {
                failed += 1;
                println!("FAIL  criterion {name}: {why} [{:.2?}]", t.elapsed());
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

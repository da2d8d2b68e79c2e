//! Acceptance suite: one line per criterion, non-zero exit if any fails.

// `!(x < tol)` is deliberate: a NaN measurement must fail its check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use artembed::eval::{accuracy_at_1, confusion_matrix, macro_metrics};
use artembed::knn::ReferenceIndex;
use artembed::probe::{loss_and_grad, train_samples, LinearProbe, Samples, TrainConfig};
use artembed::retrieval::RetrievalIndex;
use artembed::simcore::{top_k, UnitMatrix};
use artembed::store::{decode, encode, read_store, write_store, EmbeddingSet, LabelSpace, RowMeta};
use artembed::zeroshot::{classify_zero_shot, PromptBank, STYLE_TEMPLATE};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};

type Outcome = Result<String, String>;
type Check = Box<dyn Fn() -> Outcome>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn gaussian(rng: &mut impl Rng, d: usize) -> Vec<f32> {
    (0..d)
        .map(|_| {
            let x: f64 = StandardNormal.sample(rng);
            x as f32
        })
        .collect()
}

fn naive_cosine(a: &[f32], b: &[f32]) -> f64 {
    let (mut ab, mut aa, mut bb) = (0.0f64, 0.0f64, 0.0f64);
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (*x as f64, *y as f64);
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    ab / (aa.sqrt() * bb.sqrt())
}

/// Indices of all rows sorted by naive cosine, descending, ties by index.
fn exhaustive_order(rows: &[Vec<f32>], q: &[f32]) -> Vec<(usize, f64)> {
    let mut scored: Vec<(usize, f64)> = rows.iter().enumerate().map(|(i, r)| (i, naive_cosine(q, r))).collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored
}

fn classes(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

fn knn_oracle() -> Outcome {
    let mut rng = StdRng::seed_from_u64(1);
    let (n, d, n_classes) = (200, 16, 4);
    let rows: Vec<Vec<f32>> = (0..n).map(|_| gaussian(&mut rng, d)).collect();
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..n_classes)).collect();
    let names = classes("c", n_classes);
    let set = EmbeddingSet::from_rows(
        d,
        rows.iter().enumerate().map(|(i, r)| {
            (
                RowMeta::new(format!("r{i}")).with_label("style", names[labels[i]].clone()),
                r.clone(),
            )
        }),
    )
    .map_err(|e| e.to_string())?;
    let space = LabelSpace::new("style", names).map_err(|e| e.to_string())?;
    let queries: Vec<Vec<f32>> = (0..50).map(|_| gaussian(&mut rng, d)).collect();

    let started = Instant::now();
    let index = ReferenceIndex::build(&set, &space).map_err(|e| e.to_string())?;
    let mut got = Vec::new();
    for k in [1, 3, 5] {
        for q in &queries {
            got.push(index.classify(q, k).map_err(|e| e.to_string())?.class);
        }
    }
    let elapsed = started.elapsed();

    let mut want = Vec::new();
    for k in [1usize, 3, 5] {
        for q in &queries {
            let mut votes = vec![None::<f64>; n_classes];
            for &(i, s) in exhaustive_order(&rows, q).iter().take(k) {
                *votes[labels[i]].get_or_insert(0.0) += s;
            }
            let mut best: Option<(usize, f64)> = None;
            for (c, v) in votes.iter().enumerate() {
                if let Some(v) = *v {
                    if best.is_none_or(|(_, bv)| v > bv) {
                        best = Some((c, v));
                    }
                }
            }
            want.push(best.unwrap().0);
        }
    }
    let mismatches = got.iter().zip(&want).filter(|(a, b)| a != b).count();
    ensure!(
        mismatches == 0,
        "{mismatches} of 150 predictions differ from brute force"
    );
    ensure!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
    Ok(format!("150/150 identical, {elapsed:.2?}"))
}

fn zero_shot_top1() -> Outcome {
    let mut rng = StdRng::seed_from_u64(2);
    for instance in 0..100 {
        let n_classes = rng.random_range(2..12);
        let d = rng.random_range(2..48);
        let raw: Vec<f32> = (0..n_classes).flat_map(|_| gaussian(&mut rng, d)).collect();
        let space = LabelSpace::new("style", classes("s", n_classes)).map_err(|e| e.to_string())?;
        let bank = PromptBank::new(space, STYLE_TEMPLATE, d, raw.clone()).map_err(|e| e.to_string())?;
        let image = gaussian(&mut rng, d);
        let zs = classify_zero_shot(&image, &bank).map_err(|e| e.to_string())?;
        let matrix = UnitMatrix::from_rows(d, &raw).map_err(|e| e.to_string())?;
        let top = top_k(&image, &matrix, 1).map_err(|e| e.to_string())?[0];
        ensure!(
            zs.class == top.row_index,
            "instance {instance}: {} vs {}",
            zs.class,
            top.row_index
        );
    }
    Ok("100/100 exact".into())
}

fn space(n: usize) -> LabelSpace {
    LabelSpace::new("task", classes("class", n)).unwrap()
}

fn gradient_check() -> Outcome {
    let (n, d, batch, h) = (4, 8, 16, 1e-4);
    let started = Instant::now();
    let mut worst = 0.0f64;
    for seed in 0..20 {
        let mut rng = StdRng::seed_from_u64(100 + seed);
        let w: Vec<f64> = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let f: Vec<f32> = (0..batch * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<usize> = (0..batch).map(|_| rng.random_range(0..n)).collect();
        let loss = |w: &[f64], b: &[f64]| {
            let p = LinearProbe::from_parts(space(n), d, w.to_vec(), b.to_vec()).unwrap();
            loss_and_grad(&p, &f, &y).unwrap().loss
        };
        let p = LinearProbe::from_parts(space(n), d, w.clone(), b.clone()).map_err(|e| e.to_string())?;
        let g = loss_and_grad(&p, &f, &y).map_err(|e| e.to_string())?;
        let analytic: Vec<f64> = g.grad_w.iter().chain(&g.grad_b).copied().collect();
        for (i, a) in analytic.iter().enumerate() {
            let (mut wp, mut bp, mut wm, mut bm) = (w.clone(), b.clone(), w.clone(), b.clone());
            if i < n * d {
                wp[i] += h;
                wm[i] -= h;
            } else {
                bp[i - n * d] += h;
                bm[i - n * d] -= h;
            }
            let numeric = (loss(&wp, &bp) - loss(&wm, &bm)) / (2.0 * h);
            // Denominator floored at 1e-6 so vanishing entries compare absolutely.
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
            ensure!(rel < 1e-5, "probe {seed} entry {i}: {a} vs {numeric} (rel {rel:.2e})");
        }
    }
    let elapsed = started.elapsed();
    ensure!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    Ok(format!("worst relative error {worst:.2e}, {elapsed:.2?}"))
}

fn zero_init_loss() -> Outcome {
    let mut rng = StdRng::seed_from_u64(3);
    let mut details = Vec::new();
    for n in [2usize, 4, 27] {
        let d = 8;
        let f: Vec<f32> = (0..16 * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<usize> = (0..16).map(|_| rng.random_range(0..n)).collect();
        let loss = loss_and_grad(&LinearProbe::zeros(space(n), d), &f, &y)
            .map_err(|e| e.to_string())?
            .loss;
        let err = (loss - (n as f64).ln()).abs();
        ensure!(err < 1e-6, "N={n}: loss {loss}, ln N {}", (n as f64).ln());
        details.push(format!("N={n} err {err:.1e}"));
    }
    Ok(details.join(", "))
}

/// Four blobs in 64 dimensions, noise σ, class means on disjoint coordinate
/// blocks at distance 6σ from the origin. Draws nearer another mean are
/// redrawn so the set is linearly separable.
fn blobs(rng: &mut impl Rng, n: usize, sigma: f64) -> Samples {
    let (k, d) = (4, 64);
    let mut features = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % k;
        let row = loop {
            let row: Vec<f64> = (0..d)
                .map(|j| {
                    let noise: f64 = StandardNormal.sample(rng);
                    (if j / 16 == c { 1.5 * sigma } else { 0.0 }) + sigma * noise
                })
                .collect();
            let block = |b: usize| row[16 * b..16 * b + 16].iter().sum::<f64>();
            if (0..k).filter(|&b| b != c).all(|b| block(b) < block(c)) {
                break row;
            }
        };
        features.extend(row.iter().map(|&x| x as f32));
        labels.push(c);
    }
    Samples::new(d, features, labels, k).unwrap()
}

fn accuracy(p: &LinearProbe, s: &Samples) -> f64 {
    let hits = (0..s.len())
        .filter(|&i| p.predict(s.row(i)).unwrap() == s.labels()[i])
        .count();
    hits as f64 / s.len() as f64
}

fn separable_blobs() -> Outcome {
    let cfg = TrainConfig::default();
    let mut details = Vec::new();
    for seed in [2024u64, 1, 2, 3, 4] {
        let mut rng = StdRng::seed_from_u64(seed);
        let train = blobs(&mut rng, 500, 10.0);
        let val = blobs(&mut rng, 100, 10.0);
        let started = Instant::now();
        let (probe, history) = train_samples(&train, &val, &space(4), &cfg).map_err(|e| e.to_string())?;
        let elapsed = started.elapsed();
        let (tr, va) = (accuracy(&probe, &train), accuracy(&probe, &val));
        let first_perfect = history.epochs.iter().find(|e| e.train_accuracy == 1.0).map(|e| e.epoch);
        ensure!(tr == 1.0, "seed {seed}: train accuracy {tr}");
        ensure!(va >= 0.99, "seed {seed}: val accuracy {va}");
        ensure!(
            first_perfect.is_some_and(|e| e < 100),
            "seed {seed}: first fully separating epoch {first_perfect:?}"
        );
        ensure!(elapsed < Duration::from_secs(30), "seed {seed}: took {elapsed:?}");
        details.push(format!("epoch {}", first_perfect.unwrap()));
    }
    Ok(format!("5 data seeds, 100% train reached at {}", details.join("/")))
}

fn early_stopping() -> Outcome {
    // Validation rows coincide with class-0 training rows but are labelled 1.
    let train = Samples::new(2, vec![1.0, 0.0, 1.0, 0.1, 1.0, -0.1], vec![0, 0, 0], 2).unwrap();
    let val = Samples::new(2, vec![1.0, 0.0, 1.0, 0.05], vec![1, 1], 2).unwrap();
    let cfg = TrainConfig::default();
    let (probe, history) = train_samples(&train, &val, &space(2), &cfg).map_err(|e| e.to_string())?;
    let losses: Vec<f64> = history.epochs.iter().map(|e| e.val_loss).collect();
    ensure!(
        losses.windows(2).all(|w| w[1] > w[0]),
        "validation loss not increasing: {losses:?}"
    );
    ensure!(
        history.epochs_run() == cfg.patience + 1,
        "ran {} epochs, expected {}",
        history.epochs_run(),
        cfg.patience + 1
    );
    ensure!(history.best_epoch == 1, "best epoch {}", history.best_epoch);
    let one = TrainConfig {
        max_epochs: 1,
        patience: 1,
        ..cfg
    };
    let (first, _) = train_samples(&train, &val, &space(2), &one).map_err(|e| e.to_string())?;
    ensure!(probe == first, "returned probe is not the epoch-1 checkpoint");
    Ok(format!(
        "stopped after {} epochs, epoch-1 weights returned",
        history.epochs_run()
    ))
}

fn metric_oracle() -> Outcome {
    let cm = [[2u64, 1, 0], [0, 3, 0], [1, 0, 3]];
    let (mut preds, mut golds) = (Vec::new(), Vec::new());
    for (g, row) in cm.iter().enumerate() {
        for (p, &count) in row.iter().enumerate() {
            for _ in 0..count {
                preds.push(p);
                golds.push(g);
            }
        }
    }
    // Scalar oracle over the literal matrix.
    let (mut p_sum, mut r_sum, mut f_sum) = (0.0, 0.0, 0.0);
    for (c, row) in cm.iter().enumerate() {
        let tp = row[c] as f64;
        let col: f64 = cm.iter().map(|r| r[c] as f64).sum();
        let row: f64 = row.iter().map(|&x| x as f64).sum();
        let (p, r) = (tp / col, tp / row);
        p_sum += p;
        r_sum += r;
        f_sum += 2.0 * p * r / (p + r);
    }
    let m = macro_metrics(&confusion_matrix(&preds, &golds, 3).map_err(|e| e.to_string())?);
    for (name, got, want) in [
        ("P", m.precision, p_sum / 3.0),
        ("R", m.recall, r_sum / 3.0),
        ("F1", m.f1, f_sum / 3.0),
    ] {
        ensure!((got - want).abs() <= 1e-12, "{name}: {got} vs {want}");
    }
    let acc = accuracy_at_1(&preds, &golds).map_err(|e| e.to_string())?;
    ensure!((acc - 0.8).abs() <= 1e-12, "acc@1 {acc}");
    Ok(format!(
        "P {:.6} R {:.6} F1 {:.6} acc@1 {acc}",
        m.precision, m.recall, m.f1
    ))
}

fn retrieval_self_hit() -> Outcome {
    let mut rng = StdRng::seed_from_u64(4);
    let d = 24;
    let rows: Vec<Vec<f32>> = (0..100).map(|_| gaussian(&mut rng, d)).collect();
    let set = EmbeddingSet::from_rows(
        d,
        rows.iter()
            .enumerate()
            .map(|(i, r)| (RowMeta::new(format!("a{i}")), r.clone())),
    )
    .map_err(|e| e.to_string())?;
    let index = RetrievalIndex::build(&set).map_err(|e| e.to_string())?;
    for (i, r) in rows.iter().enumerate() {
        let hits = index.retrieve(r, 5, None).map_err(|e| e.to_string())?;
        ensure!(hits[0].row_index == i, "row {i}: first hit is {}", hits[0].row_index);
        ensure!(
            (hits[0].score - 1.0).abs() <= 1e-6,
            "row {i}: self score {}",
            hits[0].score
        );
        let want: Vec<usize> = exhaustive_order(&rows, r).iter().take(5).map(|x| x.0).collect();
        let got: Vec<usize> = hits.iter().map(|h| h.row_index).collect();
        ensure!(got == want, "row {i}: {got:?} vs {want:?}");
    }
    Ok("100/100 self-first, top-5 identical".into())
}

fn split_determinism(dir: &Path) -> Outcome {
    let set = EmbeddingSet::from_rows(
        4,
        (0..1000).map(|i| {
            (
                RowMeta::new(format!("p{i:04}")).with_label("style", "Baroque"),
                [1.0f32, i as f32, (i % 7) as f32, -2.0],
            )
        }),
    )
    .map_err(|e| e.to_string())?;
    let input = dir.join("synthetic.emb");
    write_store(&set, &input).map_err(|e| e.to_string())?;
    let mut assignments = Vec::new();
    for run in ["run1", "run2"] {
        let out = dir.join(run);
        let status = Command::new(env!("CARGO_BIN_EXE_artembed"))
            .args([
                "split",
                "--ratios",
                "0.8,0.1,0.1",
                "--seed",
                "42",
                "--task",
                "style",
                "--out",
            ])
            .arg(&out)
            .arg(&input)
            .output()
            .map_err(|e| e.to_string())?;
        ensure!(status.status.success(), "{run} exited with {}", status.status);
        assignments.push(std::fs::read(out.join("split.json")).map_err(|e| e.to_string())?);
        let sizes: Vec<usize> = ["train", "val", "test"]
            .iter()
            .map(|p| read_store(&out.join(format!("{p}.emb"))).map(|s| s.len()))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        ensure!(sizes == [800, 100, 100], "{run}: sizes {sizes:?}");
    }
    ensure!(assignments[0] == assignments[1], "assignments differ between processes");
    Ok("two processes, identical assignment, sizes (800,100,100)".into())
}

fn roundtrip() -> Outcome {
    let mut rng = StdRng::seed_from_u64(5);
    for case in 0..50 {
        let d = rng.random_range(1..40);
        let n = rng.random_range(1..60);
        let set = EmbeddingSet::from_rows(
            d,
            (0..n).map(|i| {
                let mut v: Vec<f32> = (0..d).map(|_| rng.random_range(-1e6f32..1e6)).collect();
                // Keep rows non-zero and exercise subnormals and extremes.
                v[0] = [1.0, f32::MIN_POSITIVE / 4.0, f32::MAX, -3.5][i % 4];
                let meta = RowMeta::new(format!("id-{case}-{i} é")).with_label("style", ["Baroque", "Pop Art"][i % 2]);
                (meta, v)
            }),
        )
        .map_err(|e| e.to_string())?;
        let (back, _) = decode(&encode(&set, None).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let bits = |s: &EmbeddingSet| s.vectors().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        ensure!(bits(&back) == bits(&set), "case {case}: payload bits differ");
        ensure!(
            back.meta() == set.meta() && back.dim() == set.dim(),
            "case {case}: metadata differs"
        );
    }
    Ok("50/50 bit-exact".into())
}

fn main() {
    let dir = tempfile::tempdir().expect("temporary directory");
    let path = dir.path().to_path_buf();
    let criteria: Vec<(&str, Check)> = vec![
        ("k-NN oracle equivalence", Box::new(knn_oracle)),
        ("zero-shot = top-1 equivalence", Box::new(zero_shot_top1)),
        ("gradient check", Box::new(gradient_check)),
        ("zero-init loss", Box::new(zero_init_loss)),
        ("separable-blob training", Box::new(separable_blobs)),
        ("early-stopping contract", Box::new(early_stopping)),
        ("metric oracle", Box::new(metric_oracle)),
        ("retrieval self-hit and oracle", Box::new(retrieval_self_hit)),
        ("split determinism", Box::new(move || split_determinism(&path))),
        ("store roundtrip", Box::new(roundtrip)),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("[PASS] {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {name}: {detail}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

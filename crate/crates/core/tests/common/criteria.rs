//! Acceptance criteria as functions, shared by the acceptance report and
//! the regular test targets.

use std::time::{Duration, Instant};

use harforge_core::config::{ModelConfig, Toggles, MIN_WINDOW};
use harforge_core::data::synthetic::{self, SyntheticConfig};
use harforge_core::data::{make_batches, mix_pairs, mixup_batch, stack_segments, LabelSpace, Segment};
use harforge_core::eval::{mean_f1, misalignment, predict_segments};
use harforge_core::model::{backbone_forward, cie_forward, model_forward, ForwardOptions, ModelParams};
use harforge_core::rng::seeded;
use harforge_core::tensor::{Tape, Tensor};
use harforge_core::trainer::{
    fit, read_history, write_history, Checkpoint, EpochMetrics, Trainer, TrainConfig, Validation,
};
use rand::Rng;

use super::grad_cases::{self, PRIMITIVES};
use super::oracles::{brute_f1, brute_taxonomy, naive_cie, perturb, run_stream, taxonomy_fixtures};
use super::{simplex_rows, uniform};

pub struct Verdict {
    pub passed: bool,
    pub detail: String,
}

impl Verdict {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self {
            passed,
            detail: detail.into(),
        }
    }
}

/// Random draws per primitive in the gradient suite.
pub const GRADIENT_CASES: u64 = 20;

pub fn gradient_suite() -> Verdict {
    let started = Instant::now();
    let mut failures = Vec::new();
    let mut checked = 0;
    for (i, name) in PRIMITIVES.iter().enumerate() {
        for case in 0..GRADIENT_CASES {
            let stats = grad_cases::check(name, 1000 * i as u64 + case);
            checked += stats.checked;
            if !stats.passed() {
                failures.push(format!("{name} case {case}: {}", stats.describe()));
            }
        }
    }
    let model = grad_cases::full_model(7);
    checked += model.checked;
    if !model.passed() {
        failures.push(format!("full model: {}", model.describe()));
    }
    let elapsed = started.elapsed();
    let in_time = elapsed < Duration::from_secs(120);
    Verdict::new(
        failures.is_empty() && in_time,
        format!(
            "{} primitives × {GRADIENT_CASES} draws plus the full model, {checked} partials, full-model worst {:.2e}, {:.1} s{}",
            PRIMITIVES.len(),
            model.worst,
            elapsed.as_secs_f64(),
            if failures.is_empty() {
                String::new()
            } else {
                format!("; failures: {}", failures.join("; "))
            }
        ),
    )
}

pub fn shape_theorem() -> Verdict {
    let mut bad = Vec::new();
    for w in MIN_WINDOW..=40 {
        let mut cfg = ModelConfig::new(2, w, 3, Toggles::all_on());
        cfg.feature_maps = 3;
        cfg.hidden = 4;
        let p = ModelParams::init(&cfg, w as u64).unwrap();
        let mut tape = Tape::new();
        let bound = p.bind(&mut tape);
        let x = tape.constant(uniform(&[2, 2, w], -1.0, 1.0, &mut seeded(w as u64)));
        let fm = backbone_forward(&mut tape, &bound, x).unwrap();
        let expected = [2, w - 16, 2, 3];
        if tape.shape(fm) != expected || cfg.time_steps() != w - 16 {
            bad.push(format!("W={w} gave {:?}", tape.shape(fm)));
        }
    }
    let at24 = ModelConfig::new(2, 24, 3, Toggles::all_on()).time_steps();
    Verdict::new(
        bad.is_empty() && at24 == 8,
        format!("T = W − 16 for W in {MIN_WINDOW}..=40, T = {at24} at W = 24 {}", bad.join(", ")),
    )
}

fn cie_model(seed: u64, d: usize, c: usize, bias: bool) -> ModelParams {
    let mut cfg = ModelConfig::new(d, 24, 3, Toggles::all_on());
    cfg.feature_maps = c;
    cfg.hidden = 4;
    cfg.cie_bias = bias;
    let mut p = ModelParams::init(&cfg, seed).unwrap();
    // nonzero output embedding and biases, so every term is exercised
    super::jitter(&mut p, 0.2, seed + 1);
    p
}

pub fn cie_oracle() -> Verdict {
    let (mut worst, mut worst_row) = (0.0f64, 0.0f64);
    for case in 0..50u64 {
        let mut rng = seeded(case);
        let (b, t, d, c) = (
            rng.random_range(1..3),
            rng.random_range(1..4),
            rng.random_range(1..7),
            rng.random_range(1..9),
        );
        let p = cie_model(case, d, c, case % 2 == 1);
        let fm = uniform(&[b, t, d, c], -2.0, 2.0, &mut rng);
        let mut tape = Tape::new();
        let bound = p.bind(&mut tape);
        let x = tape.constant(fm.clone());
        let (refined, attention) = cie_forward(&mut tape, &bound, x).unwrap();
        let (want_r, want_a) = naive_cie(&p, &fm);
        for (a, b) in tape.value(refined).data().iter().zip(&want_r) {
            worst = worst.max((a - b).abs());
        }
        for (a, b) in tape.value(attention).data().iter().zip(&want_a) {
            worst = worst.max((a - b).abs());
        }
        for row in tape.value(attention).data().chunks(d) {
            worst_row = worst_row.max((row.iter().sum::<f64>() - 1.0).abs());
        }
    }
    Verdict::new(
        worst < 1e-9 && worst_row < 1e-6,
        format!("50 maps: max deviation {worst:.2e} (< 1e-9), max |row sum − 1| {worst_row:.2e} (< 1e-6)"),
    )
}

pub fn residual_identity() -> Verdict {
    let mut equal = 0;
    for seed in 0..5u64 {
        let mut on = ModelConfig::new(5, 24, 4, Toggles::all_on());
        on.feature_maps = 8;
        on.hidden = 16;
        let mut off = on.clone();
        off.toggles.cie = false;
        let windows = uniform(&[4, 5, 24], -1.0, 1.0, &mut seeded(seed));
        let logits = |cfg: &ModelConfig| {
            let p = ModelParams::init(cfg, seed).unwrap();
            let f = model_forward(&p, &windows, &ForwardOptions::inference(), &mut seeded(0)).unwrap();
            f.trace().logits
        };
        if logits(&on).data() == logits(&off).data() {
            equal += 1;
        }
    }
    Verdict::new(equal == 5, format!("{equal}/5 seeds give bit-identical logits with and without the encoder"))
}

fn soft_batch(rows: usize, classes: usize, rng: &mut impl Rng) -> harforge_core::data::Batch {
    let segments: Vec<Segment> = (0..rows)
        .map(|i| Segment {
            window: uniform(&[2, 5], -1.0, 1.0, rng),
            label: simplex_rows(1, classes, rng).data().to_vec(),
            origin: harforge_core::data::Origin { sequence: 0, start: i },
        })
        .collect();
    let refs: Vec<&Segment> = segments.iter().collect();
    stack_segments(&refs).unwrap()
}

/// Mixing ratios observed through the labels: with one-hot class `i` on row
/// `i`, a row mixed with another row keeps mass `λ` on its own class.
pub fn observed_lambdas(draws: usize, alpha: f64, seed: u64) -> Vec<f64> {
    let rows = 4;
    let segments: Vec<Segment> = (0..rows)
        .map(|i| Segment {
            window: Tensor::zeros(&[1, 1]),
            label: harforge_core::data::one_hot(i, rows),
            origin: harforge_core::data::Origin { sequence: 0, start: i },
        })
        .collect();
    let refs: Vec<&Segment> = segments.iter().collect();
    let batch = stack_segments(&refs).unwrap();
    let mut rng = seeded(seed);
    let mut out = Vec::with_capacity(draws);
    while out.len() < draws {
        let mixed = mixup_batch(&batch, alpha, &mut rng).unwrap();
        for i in 0..rows {
            let row = &mixed.labels.data()[i * rows..(i + 1) * rows];
            let partnered = row.iter().enumerate().any(|(k, &v)| k != i && v != 0.0) || row[i] != 1.0;
            if partnered && out.len() < draws {
                out.push(row[i]);
            }
        }
    }
    out
}

pub fn mixup() -> Verdict {
    let mut rng = seeded(42);
    let mut identity = true;
    let mut simplex_err = 0.0f64;
    for _ in 0..200 {
        let b = rng.random_range(1..9);
        let batch = soft_batch(b, 4, &mut rng);
        let partners: Vec<usize> = (0..b).map(|_| rng.random_range(0..b)).collect();
        identity &= mix_pairs(&batch, &vec![1.0; b], &partners).unwrap() == batch;
        let mixed = mixup_batch(&batch, 0.8, &mut rng).unwrap();
        for row in mixed.labels.data().chunks(4) {
            simplex_err = simplex_err.max((row.iter().sum::<f64>() - 1.0).abs());
            if row.iter().any(|&v| v < 0.0) {
                simplex_err = f64::INFINITY;
            }
        }
    }
    let lambdas = observed_lambdas(100_000, 0.8, 7);
    let mean = lambdas.iter().sum::<f64>() / lambdas.len() as f64;
    Verdict::new(
        identity && simplex_err < 1e-9 && (mean - 0.5).abs() <= 0.01,
        format!(
            "λ = 1 identity {identity}, max |label row sum − 1| {simplex_err:.1e}, mean λ over 1e5 draws at α = 0.8 {mean:.4}"
        ),
    )
}

/// Training setup of the synthetic end-to-end run.
pub fn synthetic_config() -> TrainConfig {
    TrainConfig {
        epochs: 50,
        gamma: 0.3,
        ..TrainConfig::default()
    }
}

pub struct SyntheticData {
    pub cfg: SyntheticConfig,
    pub train: Vec<Segment>,
    pub test: Vec<Segment>,
}

pub fn synthetic_data(seed: u64) -> SyntheticData {
    let cfg = SyntheticConfig::default();
    let mut rng = seeded(seed);
    let train = synthetic::windows(&cfg, 600, &mut rng);
    let test = synthetic::windows(&cfg, 200, &mut rng);
    SyntheticData { cfg, train, test }
}

fn window_fm(params: &ModelParams, segments: &[Segment], classes: usize) -> f64 {
    let truth: Vec<usize> = segments.iter().map(Segment::hard_label).collect();
    let pred = predict_segments(params, segments).unwrap();
    mean_f1(&truth, &pred, classes).unwrap()
}

pub fn synthetic_end_to_end() -> Verdict {
    let started = Instant::now();
    let data = synthetic_data(2024);
    let classes = data.cfg.classes;
    let mut trainer = Trainer::new(synthetic_config(), data.cfg.channels, classes).unwrap();
    let mut history: Vec<EpochMetrics> = Vec::new();
    for _ in 0..synthetic_config().epochs {
        history.push(trainer.train_epoch(&data.train).unwrap());
    }
    let train_fm = window_fm(trainer.params(), &data.train, classes);
    let test_fm = window_fm(trainer.params(), &data.test, classes);
    let (first, fiftieth) = (history[0].center_loss, history[49].center_loss);
    let elapsed = started.elapsed();
    Verdict::new(
        train_fm >= 0.99 && test_fm >= 0.95 && fiftieth < first && elapsed < Duration::from_secs(600),
        format!(
            "after {} epochs: train F_m {train_fm:.4} (≥ 0.99), test F_m {test_fm:.4} (≥ 0.95), center loss epoch 1 {first:.4} → epoch 50 {fiftieth:.4}, {:.0} s",
            history.len(),
            elapsed.as_secs_f64()
        ),
    )
}

pub fn misalignment_oracle() -> Verdict {
    let mut fixture_misses = Vec::new();
    let fixtures = taxonomy_fixtures();
    for f in &fixtures {
        let got = misalignment(&f.truth, &f.pred, Some(f.null)).unwrap();
        if got != f.expected {
            fixture_misses.push(f.name.clone());
        }
    }
    let mut rng = seeded(99);
    let mut disagreements = 0;
    for _ in 0..1000 {
        let len = rng.random_range(1..200);
        let classes = rng.random_range(2..6);
        let truth = run_stream(len, classes, 12, &mut rng);
        let edits = rng.random_range(0..8);
        let pred = perturb(&truth, classes, edits, &mut rng);
        let null = rng.random_range(0..classes);
        let got = misalignment(&truth, &pred, Some(null)).unwrap();
        if got.total() != len as u64 || got != brute_taxonomy(&truth, &pred, null) {
            disagreements += 1;
        }
    }
    Verdict::new(
        fixture_misses.is_empty() && disagreements == 0 && !fixtures.is_empty(),
        format!(
            "{}/{} fixtures match, {disagreements}/1000 random pairs disagree with the run-scanning reference or miss frames {}",
            fixtures.len() - fixture_misses.len(),
            fixtures.len(),
            fixture_misses.join(", ")
        ),
    )
}

pub fn f1_oracle() -> Verdict {
    let mut rng = seeded(5);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let classes = rng.random_range(1..8);
        let len = rng.random_range(1..300);
        let truth: Vec<usize> = (0..len).map(|_| rng.random_range(0..classes)).collect();
        let pred: Vec<usize> = (0..len)
            .map(|i| if rng.random::<f64>() < 0.6 { truth[i] } else { rng.random_range(0..classes) })
            .collect();
        let got = mean_f1(&truth, &pred, classes).unwrap();
        worst = worst.max((got - brute_f1(&truth, &pred, classes)).abs());
    }
    let all: Vec<usize> = (0..60).map(|i| i % 6).collect();
    let perfect = mean_f1(&all, &all, 6).unwrap();
    Verdict::new(
        worst < 1e-12 && perfect == 1.0,
        format!("1000 cases: max deviation {worst:.1e} (< 1e-12); perfect prediction gives {perfect}"),
    )
}

fn small_train_config(toggles: Toggles, epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 32,
        feature_maps: 8,
        hidden: 16,
        gamma: 0.3,
        toggles,
        seed: 11,
        ..TrainConfig::default()
    }
}

pub fn ablation_accounting() -> Verdict {
    let (c, h) = (8usize, 16usize);
    let count = |t: Toggles| {
        let mut cfg = ModelConfig::new(6, 24, 3, t);
        cfg.feature_maps = c;
        cfg.hidden = h;
        ModelParams::init(&cfg, 0).unwrap().num_parameters()
    };
    let mut count_errors = Vec::new();
    for t in Toggles::combinations() {
        if t.cie {
            let mut off = t;
            off.cie = false;
            if count(t) - count(off) != 4 * c * c {
                count_errors.push(format!("cie {t:?}"));
            }
        }
        if t.age_attention {
            let mut off = t;
            off.age_attention = false;
            if count(t) - count(off) != h + 1 {
                count_errors.push(format!("age {t:?}"));
            }
        }
    }
    let data = synthetic_data(3);
    let train = &data.train[..96];
    let mut trained = 0;
    let mut failures = Vec::new();
    for t in Toggles::combinations().filter(|t| t.mixup) {
        let run = Trainer::new(small_train_config(t, 2), data.cfg.channels, data.cfg.classes).and_then(|mut tr| {
            let a = tr.train_epoch(train)?;
            let b = tr.train_epoch(train)?;
            Ok((a, b))
        });
        match run {
            Ok((a, b)) if a.total_loss.is_finite() && b.total_loss.is_finite() => trained += 1,
            Ok(_) => failures.push(format!("{t:?}: non-finite loss")),
            Err(e) => failures.push(format!("{t:?}: {e}")),
        }
    }
    Verdict::new(
        count_errors.is_empty() && trained == 8,
        format!(
            "parameter deltas 4·C² = {} and H + 1 = {} hold over 16 combinations{}; {trained}/8 combinations train 2 epochs {}",
            4 * c * c,
            h + 1,
            if count_errors.is_empty() { String::new() } else { format!(" except {}", count_errors.join(", ")) },
            failures.join("; ")
        ),
    )
}

/// History CSV bytes of a short seeded run.
pub fn history_bytes(seed: u64, dir: &std::path::Path) -> Vec<u8> {
    let data = synthetic_data(seed);
    let labels = LabelSpace::numbered(data.cfg.classes);
    let mut cfg = small_train_config(Toggles::all_on(), 3);
    cfg.seed = seed;
    let mut trainer = Trainer::new(cfg, data.cfg.channels, data.cfg.classes).unwrap();
    let out = fit(&mut trainer, &data.train[..120], &Validation::Windows(&data.test[..60]), &labels, |_| {}).unwrap();
    let path = dir.join(format!("history_{seed}.csv"));
    write_history(&path, &out.history).unwrap();
    assert_eq!(read_history(&path).unwrap(), out.history);
    std::fs::read(&path).unwrap()
}

/// Largest loss difference between an uninterrupted run and one stopped
/// after `split` epochs, serialized, reloaded and continued.
pub fn resume_gap(total: usize, split: usize) -> f64 {
    let data = synthetic_data(8);
    let train = &data.train[..120];
    let cfg = small_train_config(Toggles::all_on(), total);
    let mut straight = Trainer::new(cfg.clone(), data.cfg.channels, data.cfg.classes).unwrap();
    let a: Vec<EpochMetrics> = (0..total).map(|_| straight.train_epoch(train).unwrap()).collect();

    let mut first = Trainer::new(cfg, data.cfg.channels, data.cfg.classes).unwrap();
    let mut b: Vec<EpochMetrics> = (0..split).map(|_| first.train_epoch(train).unwrap()).collect();
    let bytes = first.checkpoint(None).to_bytes().unwrap();
    let mut resumed = Trainer::from_checkpoint(Checkpoint::from_bytes(&bytes).unwrap()).unwrap();
    b.extend((split..total).map(|_| resumed.train_epoch(train).unwrap()));

    let mut gap = 0.0f64;
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.epoch, y.epoch);
        gap = gap
            .max((x.total_loss - y.total_loss).abs())
            .max((x.ce_loss - y.ce_loss).abs())
            .max((x.center_loss - y.center_loss).abs());
    }
    gap
}

pub fn determinism_and_resume() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let first = history_bytes(21, dir.path());
    let other = tempfile::tempdir().unwrap();
    let second = history_bytes(21, other.path());
    let identical = first == second;
    let gap = resume_gap(4, 2);
    Verdict::new(
        identical && gap <= 1e-12,
        format!("history CSVs bit-identical: {identical}; resume vs uninterrupted max loss gap {gap:.1e} (≤ 1e-12)"),
    )
}

pub type Criterion = (&'static str, fn() -> Verdict);

/// Name and check of every criterion, in report order.
pub fn all() -> Vec<Criterion> {
    vec![
        ("gradient suite", gradient_suite),
        ("shape theorem", shape_theorem),
        ("cross-channel encoder oracle", cie_oracle),
        ("residual identity at init", residual_identity),
        ("mixup", mixup),
        ("synthetic end-to-end", synthetic_end_to_end),
        ("misalignment oracle", misalignment_oracle),
        ("F1 oracle", f1_oracle),
        ("ablation accounting", ablation_accounting),
        ("determinism and resume", determinism_and_resume),
    ]
}

/// Batches of a stream, flattened, for determinism comparisons.
pub fn batch_fingerprint(segments: &[Segment], batch_size: usize, seed: u64) -> Vec<f64> {
    make_batches(segments, batch_size, seed)
        .unwrap()
        .flat_map(|b| b.windows.into_data())
        .collect()
}

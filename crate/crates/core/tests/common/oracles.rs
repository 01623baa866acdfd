//! Straightforward reference implementations, written without the library
//! code they are compared against.

use std::path::{Path, PathBuf};

use harforge_core::eval::{EvalError, Taxonomy, WindowClassifier};
use harforge_core::model::ModelParams;
use harforge_core::tensor::Tensor;
use rand::Rng;

/// Cross-channel attention with explicit loops over time-steps and channel
/// pairs. `fm` is `[B, T, D, C]`; returns refined maps (same layout) and
/// the attention `[B·T, D, D]`, both flattened.
pub fn naive_cie(params: &ModelParams, fm: &Tensor) -> (Vec<f64>, Vec<f64>) {
    let s = fm.shape();
    let (b, t, d, c) = (s[0], s[1], s[2], s[3]);
    let weight = |name: &str| params.get(&format!("cie.{name}.weight")).unwrap();
    let bias = |name: &str| params.get(&format!("cie.{name}.bias"));
    // row vector times [C, C] matrix, plus optional bias
    let embed = |x: &[f64], name: &str| -> Vec<f64> {
        let w = weight(name);
        (0..c)
            .map(|j| {
                let mut acc = bias(name).map_or(0.0, |bb| bb.data()[j]);
                for (i, xi) in x.iter().enumerate() {
                    acc += xi * w.at(&[i, j]);
                }
                acc
            })
            .collect()
    };
    let mut refined = Vec::with_capacity(fm.len());
    let mut attention = Vec::with_capacity(b * t * d * d);
    for bi in 0..b {
        for ti in 0..t {
            let x: Vec<Vec<f64>> = (0..d)
                .map(|di| (0..c).map(|ci| fm.at(&[bi, ti, di, ci])).collect())
                .collect();
            let f: Vec<Vec<f64>> = x.iter().map(|r| embed(r, "f")).collect();
            let g: Vec<Vec<f64>> = x.iter().map(|r| embed(r, "g")).collect();
            let h: Vec<Vec<f64>> = x.iter().map(|r| embed(r, "h")).collect();
            for i in 0..d {
                let scores: Vec<f64> = (0..d)
                    .map(|j| f[i].iter().zip(&g[j]).map(|(a, b)| a * b).sum())
                    .collect();
                let top = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = scores.iter().map(|s| (s - top).exp()).collect();
                let z: f64 = e.iter().sum();
                let a: Vec<f64> = e.iter().map(|v| v / z).collect();
                let mut mixed = vec![0.0; c];
                for j in 0..d {
                    for k in 0..c {
                        mixed[k] += a[j] * h[j][k];
                    }
                }
                let o = embed(&mixed, "v");
                refined.extend(o.iter().zip(&x[i]).map(|(o, x)| o + x));
                attention.extend(a);
            }
        }
    }
    (refined, attention)
}

/// Macro F1 from per-class true positive, false positive and false negative
/// counts, `F1_k = 2·tp / (2·tp + fp + fn)` and 0 when the class is absent.
pub fn brute_f1(truth: &[usize], pred: &[usize], classes: usize) -> f64 {
    let mut total = 0.0;
    for k in 0..classes {
        let (mut tp, mut fp, mut fneg) = (0u64, 0u64, 0u64);
        for (&t, &p) in truth.iter().zip(pred) {
            match (t == k, p == k) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fneg += 1,
                _ => {}
            }
        }
        let den = 2 * tp + fp + fneg;
        if den > 0 {
            total += 2.0 * tp as f64 / den as f64;
        }
    }
    total / classes as f64
}

/// Bounds `[lo, hi)` of the constant run of `stream` holding `i`.
fn run_around(stream: &[usize], i: usize) -> (usize, usize) {
    let mut lo = i;
    while lo > 0 && stream[lo - 1] == stream[i] {
        lo -= 1;
    }
    let mut hi = i + 1;
    while hi < stream.len() && stream[hi] == stream[i] {
        hi += 1;
    }
    (lo, hi)
}

/// Frame taxonomy by scanning the surrounding runs of every frame.
pub fn brute_taxonomy(truth: &[usize], pred: &[usize], null: usize) -> Taxonomy {
    let mut tax = Taxonomy::default();
    for i in 0..truth.len() {
        let (t, p) = (truth[i], pred[i]);
        if t == p {
            tax.true_positive += 1;
        } else if t == null {
            let (lo, hi) = run_around(pred, i);
            if (lo..hi).any(|j| truth[j] == p) {
                tax.overfill += 1;
            } else {
                tax.insertion += 1;
            }
        } else if p == null {
            let (lo, hi) = run_around(truth, i);
            if (lo..hi).any(|j| pred[j] == t) {
                tax.underfill += 1;
            } else {
                tax.deletion += 1;
            }
        } else {
            tax.substitution += 1;
        }
    }
    tax
}

/// A label stream built from runs of random length, so that streams have
/// the segment structure of real recordings.
pub fn run_stream(len: usize, classes: usize, max_run: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut out = Vec::with_capacity(len);
    while out.len() < len {
        let label = rng.random_range(0..classes);
        let run = rng.random_range(1..=max_run).min(len - out.len());
        out.extend(std::iter::repeat_n(label, run));
    }
    out
}

/// Copy of `stream` with random runs overwritten, which produces the
/// boundary shifts, insertions and deletions of a real recognizer.
pub fn perturb(stream: &[usize], classes: usize, edits: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut out = stream.to_vec();
    for _ in 0..edits {
        let start = rng.random_range(0..out.len());
        let len = rng.random_range(1..=6).min(out.len() - start);
        let label = rng.random_range(0..classes);
        out[start..start + len].fill(label);
    }
    out
}

/// Classifier stub that reads the class of every sample from channel 0 and
/// answers the majority class of the window, with ties to the lowest class.
pub struct MajorityOracle {
    pub window: usize,
    pub classes: usize,
}

impl WindowClassifier for MajorityOracle {
    fn window(&self) -> usize {
        self.window
    }

    fn logits(&self, windows: &Tensor) -> Result<Tensor, EvalError> {
        let s = windows.shape();
        let (b, w) = (s[0], s[2]);
        let mut out = Tensor::zeros(&[b, self.classes]);
        for i in 0..b {
            for n in 0..w {
                let class = windows.at(&[i, 0, n]) as usize;
                out.data_mut()[i * self.classes + class] += 1.0;
            }
        }
        Ok(out)
    }
}

pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/taxonomy")
}

/// One annotated taxonomy case: streams as label indices, null index and
/// expected counts.
pub struct TaxonomyFixture {
    pub name: String,
    pub truth: Vec<usize>,
    pub pred: Vec<usize>,
    pub null: usize,
    pub expected: Taxonomy,
}

pub fn taxonomy_fixtures() -> Vec<TaxonomyFixture> {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(fixtures_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    dirs.into_iter()
        .map(|dir| {
            let meta: serde_json::Value =
                serde_json::from_str(&std::fs::read_to_string(dir.join("expected.json")).unwrap()).unwrap();
            let labels: Vec<String> = meta["labels"]
                .as_array()
                .unwrap()
                .iter()
                .map(|v| v.as_str().unwrap().to_string())
                .collect();
            let index = |name: &str| labels.iter().position(|l| l == name).unwrap();
            let column = |file: &str| -> Vec<usize> {
                let mut rdr = csv::Reader::from_path(dir.join(file)).unwrap();
                rdr.records().map(|r| index(&r.unwrap()[1])).collect()
            };
            let counts = &meta["counts"];
            let count = |k: &str| counts[k].as_u64().unwrap();
            TaxonomyFixture {
                name: dir.file_name().unwrap().to_string_lossy().into_owned(),
                truth: column("truth.csv"),
                pred: column("pred.csv"),
                null: index(meta["null_label"].as_str().unwrap()),
                expected: Taxonomy {
                    true_positive: count("true_positive"),
                    deletion: count("deletion"),
                    insertion: count("insertion"),
                    overfill: count("overfill"),
                    underfill: count("underfill"),
                    substitution: count("substitution"),
                },
            }
        })
        .collect()
}

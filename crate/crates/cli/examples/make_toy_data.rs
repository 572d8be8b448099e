//! Regenerates the bundled datasets in `crates/cli/data/`.
//!
//! `cargo run -p zoh-cli --example make_toy_data [-- <out-dir>]`

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use zoh_core::objectives::Dataset;
use zoh_core::Mlp;

const DIM: usize = 64;
/// Informative pixels per class.
const BLOCK: usize = 4;
const CLASSES: usize = 3;
const MARGIN: (f64, f64) = (1.5, 3.0);

fn round4(v: f64) -> f64 {
    (v * 1e4).round() / 1e4
}

fn center(j: usize, c: usize) -> f64 {
    if j / BLOCK == c {
        1.0
    } else {
        0.0
    }
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Class `c` lights up pixels `c*BLOCK..(c+1)*BLOCK`; the rest is noise.
fn blobs(rng: &mut ChaCha8Rng, n: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % CLASSES;
        let x = (0..DIM)
            .map(|j| round4(center(j, c) + 0.7 * gauss(rng)))
            .collect();
        xs.push(x);
        ys.push(c);
    }
    (xs, ys)
}

/// Multinomial logistic regression by full-batch gradient descent.
fn train_softmax(xs: &[Vec<f64>], ys: &[usize]) -> Mlp {
    let mut w = vec![0.0; CLASSES * DIM];
    let mut b = vec![0.0; CLASSES];
    let n = xs.len() as f64;
    for _ in 0..2000 {
        let mut gw = vec![0.0; CLASSES * DIM];
        let mut gb = vec![0.0; CLASSES];
        for (x, &y) in xs.iter().zip(ys) {
            let z: Vec<f64> = (0..CLASSES)
                .map(|c| b[c] + (0..DIM).map(|j| w[c * DIM + j] * x[j]).sum::<f64>())
                .collect();
            let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
            let s: f64 = e.iter().sum();
            for c in 0..CLASSES {
                let r = e[c] / s - if c == y { 1.0 } else { 0.0 };
                gb[c] += r / n;
                for j in 0..DIM {
                    gw[c * DIM + j] += r * x[j] / n;
                }
            }
        }
        for (wi, g) in w.iter_mut().zip(&gw) {
            *wi -= 0.5 * (g + 2e-2 * *wi);
        }
        for (bi, g) in b.iter_mut().zip(&gb) {
            *bi -= 0.5 * g;
        }
    }
    let w = w.into_iter().map(round4).collect();
    let b = b.into_iter().map(round4).collect();
    Mlp::new(vec![DIM, CLASSES], vec![w], vec![b]).expect("valid classifier")
}

fn margin(mlp: &Mlp, x: &[f64], y: usize) -> f64 {
    let z = mlp.logits(x);
    let rival = (0..CLASSES)
        .filter(|&c| c != y)
        .map(|c| z[c])
        .fold(f64::NEG_INFINITY, f64::max);
    z[y] - rival
}

fn main() {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data"));
    std::fs::create_dir_all(&out).expect("create output dir");
    let mut rng = ChaCha8Rng::seed_from_u64(20_241_015);

    let (xs, ys) = blobs(&mut rng, 600);
    let mlp = train_softmax(&xs, &ys);
    let correct = xs
        .iter()
        .zip(&ys)
        .filter(|(x, y)| mlp.predict(x) == **y)
        .count();
    eprintln!("classifier training accuracy {}/{}", correct, xs.len());
    std::fs::write(out.join("toy_classifier.json"), mlp.to_json()).expect("write classifier");

    // Fresh class-0 points the classifier gets right with a moderate margin.
    let mut features = Vec::new();
    let mut labels = Vec::new();
    while labels.len() < 10 {
        let x: Vec<f64> = (0..DIM)
            .map(|j| round4(center(j, 0) + 0.7 * gauss(&mut rng)))
            .collect();
        let m = margin(&mlp, &x, 0);
        if (MARGIN.0..=MARGIN.1).contains(&m) {
            features.extend_from_slice(&x);
            labels.push(0.0);
        }
    }
    let images = Dataset::new(features, labels, DIM).expect("valid images");
    std::fs::write(out.join("toy_images.csv"), images.to_csv()).expect("write images");

    // Binary problem for logistic regression: labels ±1 from a noisy hyperplane.
    let d = 10;
    let w: Vec<f64> = (0..d).map(|_| gauss(&mut rng)).collect();
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..200 {
        let x: Vec<f64> = (0..d).map(|_| round4(gauss(&mut rng))).collect();
        let s: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + 0.5 * gauss(&mut rng);
        labels.push(if s >= 0.0 { 1.0 } else { -1.0 });
        features.extend(x);
    }
    let data = Dataset::new(features, labels, d).expect("valid dataset");
    std::fs::write(out.join("logistic.csv"), data.to_csv()).expect("write logistic data");
    eprintln!("wrote {}", out.display());
}

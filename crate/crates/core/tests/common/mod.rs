//! Brute-force reference implementations shared by the integration tests.
//! None of them call into the code they check.

#![allow(dead_code)]

use std::f64::consts::PI;

use aquascan::forest::{ForestModel, Node};
use aquascan::mrf::ProbabilityVolume;
use rand::Rng;

/// O(m²) DFT magnitudes, DC dropped, ℓ1-normalised.
pub fn naive_descriptor(x: &[f64]) -> Vec<f64> {
    let m = x.len();
    let mut mags: Vec<f64> = (0..m)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (j, &v) in x.iter().enumerate() {
                let ang = -2.0 * PI * ((j * k) % m) as f64 / m as f64;
                re += v * ang.cos();
                im += v * ang.sin();
            }
            (re * re + im * im).sqrt()
        })
        .collect();
    mags[0] = 0.0;
    let total: f64 = mags.iter().sum();
    if total < 1e-12 {
        return vec![0.0; m];
    }
    mags.iter().map(|v| v / total).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn random_signal<R: Rng>(rng: &mut R, m: usize) -> Vec<f64> {
    (0..m).map(|_| rng.gen_range(0.0..255.0)).collect()
}

/// Mean over an n×n×m box, one pixel at a time.
pub fn box_mean(
    frames: &[Vec<u8>],
    width: usize,
    x: usize,
    y: usize,
    t0: usize,
    n: usize,
    m: usize,
) -> Vec<f64> {
    let r = n / 2;
    (t0..t0 + m)
        .map(|t| {
            let mut s = 0.0;
            for yy in y - r..=y + r {
                for xx in x - r..=x + r {
                    s += frames[t][yy * width + xx] as f64;
                }
            }
            s / (n * n) as f64
        })
        .collect()
}

/// LBP code from explicit signed differences; neighbours listed from east,
/// counter-clockwise.
pub fn lbp_direct(center: u8, neighbors: [u8; 8]) -> u8 {
    let mut v = 0u32;
    for (p, &g) in neighbors.iter().enumerate() {
        if g as i32 - center as i32 >= 0 {
            v += 1 << p;
        }
    }
    v as u8
}

/// Neighbours of (x, y) in image coordinates (y grows downwards).
pub fn neighbors_of(frame: &[u8], width: usize, x: usize, y: usize) -> [u8; 8] {
    let at =
        |dx: i64, dy: i64| frame[((y as i64 + dy) as usize) * width + (x as i64 + dx) as usize];
    [
        at(1, 0),
        at(1, -1),
        at(0, -1),
        at(-1, -1),
        at(-1, 0),
        at(-1, 1),
        at(0, 1),
        at(1, 1),
    ]
}

/// Normalised histogram of codes over the region interior.
pub fn lbp_histogram_oracle(
    frame: &[u8],
    width: usize,
    rx: usize,
    ry: usize,
    rw: usize,
    rh: usize,
) -> Vec<f64> {
    let mut counts = vec![0u64; 256];
    let mut total = 0u64;
    for y in ry + 1..ry + rh - 1 {
        for x in rx + 1..rx + rw - 1 {
            let code = lbp_direct(frame[y * width + x], neighbors_of(frame, width, x, y));
            counts[code as usize] += 1;
            total += 1;
        }
    }
    counts.iter().map(|&c| c as f64 / total as f64).collect()
}

pub fn scott_oracle(history: &[f64]) -> f64 {
    let t = history.len() as f64;
    let mean = history.iter().sum::<f64>() / t;
    let var = history.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (t - 1.0);
    if var == 0.0 {
        1.0
    } else {
        var.sqrt() * t.powf(-0.2)
    }
}

/// (1/t) Σ_j K_h(i − I_j) with a Gaussian kernel, at every integer i.
pub fn kde_densities(history: &[u8], h: f64) -> Vec<f64> {
    let norm = 1.0 / (h * (2.0 * PI).sqrt());
    (0..256)
        .map(|i| {
            let mut s = 0.0;
            for &v in history {
                let d = (i as f64 - v as f64) / h;
                s += norm * (-0.5 * d * d).exp();
            }
            s / history.len() as f64
        })
        .collect()
}

/// Smallest index whose value is within a relative 1e-12 of the maximum.
pub fn argmax_tie_smallest(values: &[f64]) -> usize {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    values
        .iter()
        .position(|&v| v >= max - 1e-12 * max.abs())
        .unwrap()
}

pub fn direct_mode(history: &[u8]) -> u8 {
    let mut counts = [0usize; 256];
    for &v in history {
        counts[v as usize] += 1;
    }
    let best = *counts.iter().max().unwrap();
    counts.iter().position(|&c| c == best).unwrap() as u8
}

/// 6-neighbourhood edges of a w×h×t grid, t-major, row-major.
pub fn grid_edges(w: usize, h: usize, t: usize) -> Vec<(usize, usize)> {
    let idx = |tt: usize, y: usize, x: usize| (tt * h + y) * w + x;
    let mut e = Vec::new();
    for tt in 0..t {
        for y in 0..h {
            for x in 0..w {
                if x + 1 < w {
                    e.push((idx(tt, y, x), idx(tt, y, x + 1)));
                }
                if y + 1 < h {
                    e.push((idx(tt, y, x), idx(tt, y + 1, x)));
                }
                if tt + 1 < t {
                    e.push((idx(tt, y, x), idx(tt + 1, y, x)));
                }
            }
        }
    }
    e
}

pub fn energy_oracle(probs: &[f64], edges: &[(usize, usize)], labels: &[u8], lambda: f64) -> f64 {
    let unary: f64 = probs
        .iter()
        .zip(labels)
        .map(|(&p, &l)| if l == 1 { 1.0 - p } else { p })
        .sum();
    let cuts = edges
        .iter()
        .filter(|&&(a, b)| labels[a] != labels[b])
        .count();
    unary + lambda * cuts as f64
}

/// Minimum energy over all 2^N labelings for each λ. Labelings are visited
/// in Gray-code order so the cut count updates exactly by one flip; the
/// unary sum comes from two directly summed half tables, so it never drifts.
pub fn brute_force_minima(pv: &ProbabilityVolume, lambdas: &[f64]) -> Vec<f64> {
    let g = &pv.geometry;
    let n = pv.probs.len();
    assert!(n <= 20);
    let edges = grid_edges(g.grid_w, g.grid_h, g.grid_t);
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in &edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    // Labeling a node water changes its unary from P to 1 − P.
    let lo_bits = n / 2;
    let half_table = |bits: std::ops::Range<usize>| -> Vec<f64> {
        (0..1usize << bits.len())
            .map(|mask| {
                bits.clone()
                    .enumerate()
                    .filter(|(k, _)| mask >> k & 1 == 1)
                    .map(|(_, p)| 1.0 - 2.0 * pv.probs[p])
                    .sum()
            })
            .collect()
    };
    let lo = half_table(0..lo_bits);
    let hi = half_table(lo_bits..n);
    let base: f64 = pv.probs.iter().sum();
    let mut labels = vec![0u8; n];
    let mut cuts: i64 = 0;
    let mut best = vec![f64::INFINITY; lambdas.len()];
    let mut gray = 0usize;
    for step in 0u64..(1u64 << n) {
        if step > 0 {
            let p = step.trailing_zeros() as usize;
            let before = adj[p].iter().filter(|&&q| labels[q] != labels[p]).count() as i64;
            labels[p] ^= 1;
            gray ^= 1 << p;
            cuts += adj[p].len() as i64 - 2 * before;
        }
        let unary = base + lo[gray & ((1 << lo_bits) - 1)] + hi[gray >> lo_bits];
        for (b, &l) in best.iter_mut().zip(lambdas) {
            *b = b.min(unary + l * cuts as f64);
        }
    }
    best
}

/// Walks every tree by hand and averages the leaf values.
pub fn forest_oracle(model: &ForestModel, x: &[f64]) -> f64 {
    let mut sum = 0.0;
    for tree in &model.trees {
        let mut i = 0;
        loop {
            match &tree.nodes[i] {
                Node::Leaf { water } => {
                    sum += water;
                    break;
                }
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }
    sum / model.trees.len() as f64
}

/// Average ranks, ties sharing the mean rank.
pub fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

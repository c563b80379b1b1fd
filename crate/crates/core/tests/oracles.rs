//! Hand-computed and brute-force checks of the individual stages.

mod common;

use std::collections::BTreeMap;

use aquascan::descriptors::lbp::{lbp_histogram, lbp_volume_histogram, FrameView, Region};
use aquascan::descriptors::{
    euclidean, extract_signal, fuse_early, patch_trace, FourierDescriber, LbpHistogram,
};
use aquascan::eval::{detection_fit, per_class_report, percent, ClassTable};
use aquascan::forest::{self, Dataset, ForestConfig, Provenance, Sample};
use aquascan::mrf::{self, GridGeometry, LabelVolume, ProbabilityVolume};
use aquascan::pipeline::{self, LabeledVideo, PipelineConfig};
use aquascan::residual::{self, KdeConfig};
use aquascan::synth::{self, Manifest, NonWaterKind, SynthConfig, WaterParams};
use aquascan::video_io::{FrameSequence, MaskSequence};
use aquascan::Label;
use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn random_video(rng: &mut ChaCha8Rng, w: usize, h: usize, t: usize) -> FrameSequence {
    let frames = (0..t)
        .map(|_| (0..w * h).map(|_| rng.gen()).collect())
        .collect();
    FrameSequence::new(w, h, frames).unwrap()
}

fn sample(values: Vec<f64>, label: Label) -> Sample {
    Sample {
        values,
        label,
        provenance: Provenance {
            video: "v".into(),
            x: 0,
            y: 0,
            t0: 0,
        },
    }
}

#[test]
fn patch_signal_matches_triple_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let res = random_video(&mut rng, 32, 32, 210);
    for &(x, y, t0) in &[(2, 2, 0), (16, 9, 10), (29, 29, 7), (10, 20, 3)] {
        let sig = extract_signal(&res, x, y, t0, 5, 200).unwrap();
        let want = box_mean(res.frames(), 32, x, y, t0, 5, 200);
        assert!(max_abs_diff(&sig.values, &want) < 1e-12);
        assert_eq!(sig.origin, (x, y, t0));
    }
    // Patches leaving the frame are refused.
    assert!(patch_trace(&res, 1, 5, 5).is_err());
    assert!(patch_trace(&res, 30, 5, 5).is_err());
    assert!(extract_signal(&res, 5, 5, 11, 5, 200).is_err());
}

#[test]
fn sinusoid_spectrum() {
    let m = 64;
    let d = FourierDescriber::new(m).unwrap();
    let x: Vec<f64> = (0..m)
        .map(|j| 100.0 + 20.0 * (2.0 * std::f64::consts::PI * 5.0 * j as f64 / m as f64).cos())
        .collect();
    let bins = d.describe(&x).unwrap().bins;
    assert!((bins[5] - 0.5).abs() < 1e-12);
    assert!((bins[m - 5] - 0.5).abs() < 1e-12);
    let rest: f64 = bins
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != 5 && *k != m - 5)
        .map(|(_, v)| v)
        .sum();
    assert!(rest < 1e-12);

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for m in [2, 7, 64, 200] {
        let d = FourierDescriber::new(m).unwrap();
        let x = random_signal(&mut rng, m);
        assert!(max_abs_diff(&d.describe(&x).unwrap().bins, &naive_descriptor(&x)) < 1e-9);
    }
}

#[test]
fn lbp_region_matches_direct_codes() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let res = random_video(&mut rng, 20, 20, 4);
    let region = Region {
        x: 4,
        y: 6,
        width: 11,
        height: 11,
    };
    let got = lbp_histogram(&FrameView::of_sequence(&res, 0), &region).unwrap();
    let want = lbp_histogram_oracle(res.frame(0), 20, 4, 6, 11, 11);
    assert_eq!(got.bins, want);

    // Pooling over frames is the count-weighted mean of per-frame histograms.
    let pooled = lbp_volume_histogram(&res, &region, 0, 4).unwrap();
    let mut mean = vec![0.0; 256];
    for t in 0..4 {
        for (a, b) in mean
            .iter_mut()
            .zip(lbp_histogram_oracle(res.frame(t), 20, 4, 6, 11, 11))
        {
            *a += b / 4.0;
        }
    }
    assert!(max_abs_diff(&pooled.bins, &mean) < 1e-12);

    // A flat region codes every pixel as 255.
    let flat = FrameSequence::new(8, 8, vec![vec![9; 64]]).unwrap();
    let h = lbp_histogram(
        &FrameView::of_sequence(&flat, 0),
        &Region::centered(4, 4, 5).unwrap(),
    )
    .unwrap();
    assert_eq!(h.bins[255], 1.0);
}

#[test]
fn kde_modes() {
    // Half the history at 100 and half at 104 with h = 10: one bump at 102.
    let hist: Vec<u8> = (0..40)
        .map(|i| if i % 2 == 0 { 100 } else { 104 })
        .collect();
    let seq = FrameSequence::new(1, 1, hist.iter().map(|&v| vec![v]).collect()).unwrap();
    let mode = residual::temporal_mode_kde(
        &seq,
        &KdeConfig {
            bandwidth: Some(10.0),
        },
    )
    .unwrap();
    assert_eq!(mode.values, vec![102]);
    assert_eq!(argmax_tie_smallest(&kde_densities(&hist, 10.0)), 102);

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let hist: Vec<u8> = (0..50).map(|_| rng.gen_range(40..200)).collect();
        let seq = FrameSequence::new(1, 1, hist.iter().map(|&v| vec![v]).collect()).unwrap();
        let h = scott_oracle(&hist.iter().map(|&v| v as f64).collect::<Vec<_>>());
        let got = residual::temporal_mode_kde(&seq, &KdeConfig::default()).unwrap();
        assert_eq!(
            got.values[0] as usize,
            argmax_tie_smallest(&kde_densities(&hist, h))
        );
        assert_eq!(
            residual::temporal_mode_direct(&seq).values[0],
            direct_mode(&hist)
        );
    }
}

#[test]
fn scott_bandwidth_of_symmetric_sample() {
    let a = 10.0 / (32.0f64 / 31.0).sqrt();
    let hist: Vec<f64> = (0..32)
        .map(|i| if i % 2 == 0 { 100.0 + a } else { 100.0 - a })
        .collect();
    let h = residual::scott_bandwidth(&hist).unwrap();
    assert!((h - 10.0 * 32f64.powf(-0.2)).abs() < 1e-12);
    assert!((h - 5.0).abs() < 1e-12);
    assert!((h - scott_oracle(&hist)).abs() < 1e-12);
}

fn min_energy(pv: &ProbabilityVolume, lambda: f64) -> (LabelVolume, f64) {
    let lv = mrf::regularize(pv, lambda).unwrap();
    let e = mrf::energy(pv, &lv, lambda).unwrap();
    (lv, e)
}

#[test]
fn mrf_small_grids_match_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let lambdas = [0.0, 0.1, 0.5, 1.0, 3.0];
    for _ in 0..10 {
        let probs: Vec<f64> = (0..18).map(|_| rng.gen_range(0.0..1.0)).collect();
        let pv = ProbabilityVolume::from_grid(3, 3, 2, probs).unwrap();
        let best = brute_force_minima(&pv, &lambdas);
        for (&l, &b) in lambdas.iter().zip(&best) {
            let (lv, e) = min_energy(&pv, l);
            let edges = grid_edges(3, 3, 2);
            assert!((energy_oracle(&pv.probs, &edges, &lv.labels, l) - e).abs() < 1e-12);
            assert!(e <= b + 1e-9, "lambda {}: {} vs optimum {}", l, e, b);
        }
    }

    // One unsure node among confident water neighbours joins them.
    let mut probs = vec![0.9; 18];
    probs[4] = 0.3;
    let pv = ProbabilityVolume::from_grid(3, 3, 2, probs).unwrap();
    let (lv, _) = min_energy(&pv, 1.0);
    assert!(lv.labels.iter().all(|&l| l == 1));
    // With no smoothing it keeps its own opinion.
    let (lv, _) = min_energy(&pv, 0.0);
    assert_eq!(lv.labels[4], 0);
    assert_eq!(lv.labels, mrf::threshold(&pv).labels);
}

#[test]
fn masks_take_nearest_node() {
    let (gw, gh) = (4, 3);
    let g = GridGeometry {
        grid_w: gw,
        grid_h: gh,
        grid_t: 2,
        stride: 11,
        origin: (2, 2),
    };
    let labels: Vec<u8> = (0..2 * gh * gw)
        .map(|i| {
            let (t, y, x) = (i / (gw * gh), i / gw % gh, i % gw);
            ((t + y + x) % 2) as u8
        })
        .collect();
    let lv = LabelVolume {
        geometry: g.clone(),
        labels: labels.clone(),
    };
    let (fw, fh) = (40, 30);
    let masks = mrf::labels_to_masks(&lv, fw, fh).unwrap();
    assert_eq!(masks.len(), 2);
    let nearest = |p: usize, n: usize| {
        (0..n)
            .min_by_key(|&k| (p as i64 - (2 + 11 * k) as i64).abs())
            .unwrap()
    };
    for t in 0..2 {
        for y in 0..fh {
            for x in 0..fw {
                let want = labels[(t * gh + nearest(y, gh)) * gw + nearest(x, gw)];
                assert_eq!(masks.get(t, x, y), want, "t {} x {} y {}", t, x, y);
            }
        }
    }
}

#[test]
fn fit_matches_double_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (w, h, t) = (9, 7, 5);
    let mk = |rng: &mut ChaCha8Rng| {
        let m: Vec<Vec<u8>> = (0..t)
            .map(|_| (0..w * h).map(|_| rng.gen_range(0..2)).collect())
            .collect();
        MaskSequence::new(w, h, m).unwrap()
    };
    let (a, b) = (mk(&mut rng), mk(&mut rng));
    let mut total = 0.0;
    for f in 0..t {
        let mut same = 0;
        for y in 0..h {
            for x in 0..w {
                if a.get(f, x, y) == b.get(f, x, y) {
                    same += 1;
                }
            }
        }
        total += same as f64 / (w * h) as f64;
    }
    assert!((detection_fit(&a, &b).unwrap() - total / t as f64).abs() < 1e-12);

    // Half-water prediction against an all-water truth.
    let half: Vec<u8> = (0..w * h).map(|i| (i % w >= 4) as u8).collect();
    let pred = MaskSequence::new(w, h, vec![half; t]).unwrap();
    let truth = MaskSequence::constant(w, h, true);
    let frac = (5 * h) as f64 / (w * h) as f64;
    assert!((detection_fit(&pred, &truth).unwrap() - frac).abs() < 1e-12);
}

#[test]
fn forest_walk_matches_predict() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let rows: Vec<Sample> = (0..200)
        .map(|i| {
            let label = if i % 2 == 0 {
                Label::Water
            } else {
                Label::NonWater
            };
            let v: Vec<f64> = (0..6)
                .map(|_| rng.gen_range(0.0..1.0) + (i % 2) as f64 * 0.3)
                .collect();
            sample(v, label)
        })
        .collect();
    let ds = Dataset::from_rows(rows).unwrap();
    let cfg = ForestConfig {
        n_trees: 15,
        seed: 3,
        ..ForestConfig::default()
    };
    let model = forest::train(&ds, &cfg).unwrap();
    for _ in 0..100 {
        let x: Vec<f64> = (0..6).map(|_| rng.gen_range(-0.2..1.5)).collect();
        let p = forest::predict_proba(&model, &x).unwrap();
        assert!((p - forest_oracle(&model, &x)).abs() < 1e-12);
    }
}

#[test]
fn forest_separates_two_gaussians() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let mut draw = |n: usize| -> Vec<Sample> {
        (0..n)
            .map(|i| {
                let water = i % 2 == 0;
                let c = if water { 1.5 } else { -1.5 };
                let v = vec![c + noise.sample(&mut rng), c + noise.sample(&mut rng)];
                sample(v, if water { Label::Water } else { Label::NonWater })
            })
            .collect()
    };
    let train = Dataset::from_rows(draw(500)).unwrap();
    let test = draw(500);
    let model = forest::train(
        &train,
        &ForestConfig {
            n_trees: 30,
            seed: 1,
            ..ForestConfig::default()
        },
    )
    .unwrap();
    let correct = test
        .iter()
        .filter(|s| {
            let p = forest::predict_proba(&model, &s.values).unwrap();
            (p > 0.5) == (s.label == Label::Water)
        })
        .count();
    assert!(
        correct as f64 / test.len() as f64 >= 0.9,
        "accuracy {}",
        correct
    );
}

#[test]
fn unconstrained_forest_memorises() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let rows: Vec<Sample> = (0..100)
        .map(|_| {
            let v: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..1.0)).collect();
            let label = if rng.gen_bool(0.5) {
                Label::Water
            } else {
                Label::NonWater
            };
            sample(v, label)
        })
        .collect();
    let ds = Dataset::from_rows(rows.clone()).unwrap();
    let cfg = ForestConfig {
        n_trees: 3,
        max_depth: None,
        min_leaf: 1,
        features_per_split: Some(4),
        bootstrap: false,
        laplace: false,
        seed: 0,
    };
    let model = forest::train(&ds, &cfg).unwrap();
    for s in &rows {
        let want = if s.label == Label::Water { 1.0 } else { 0.0 };
        assert_eq!(forest::predict_proba(&model, &s.values).unwrap(), want);
    }
}

#[test]
fn model_round_trip_predicts_identically() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let rows: Vec<Sample> = (0..120)
        .map(|i| {
            let v: Vec<f64> = (0..5).map(|_| rng.gen_range(0.0..1.0)).collect();
            sample(
                v,
                if i % 3 == 0 {
                    Label::Water
                } else {
                    Label::NonWater
                },
            )
        })
        .collect();
    let model = forest::train(
        &Dataset::from_rows(rows).unwrap(),
        &ForestConfig {
            n_trees: 10,
            ..ForestConfig::default()
        },
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    forest::save_model(&model, &path).unwrap();
    let back = forest::load_model(&path).unwrap();
    assert_eq!(back, model);
    for _ in 0..100 {
        let x: Vec<f64> = (0..5).map(|_| rng.gen_range(0.0..1.0)).collect();
        assert_eq!(
            forest::predict_proba(&model, &x).unwrap().to_bits(),
            forest::predict_proba(&back, &x).unwrap().to_bits()
        );
    }
}

fn no_downsample(m: usize) -> PipelineConfig {
    PipelineConfig {
        m,
        downsample: false,
        ..PipelineConfig::default()
    }
}

fn quiet(width: usize, height: usize, frames: usize, seed: u64) -> SynthConfig {
    SynthConfig {
        width,
        height,
        frames,
        seed,
        sensor_noise: 0.0,
        ..SynthConfig::default()
    }
}

#[test]
fn single_wave_peaks_at_its_frequency() {
    let m = 200;
    let cfg = SynthConfig {
        water: WaterParams {
            waves: 1,
            frequency_range: (0.1, 0.1),
            amplitude_range: (10.0, 10.0),
            ..WaterParams::default()
        },
        ..quiet(40, 40, m, 12)
    };
    let (video, mask) = synth::generate_water(&cfg).unwrap();
    assert!(mask.masks().iter().flatten().all(|&v| v == 1));
    let pre = pipeline::preprocess(&video, &no_downsample(m)).unwrap();
    let d = FourierDescriber::new(m).unwrap();
    for &(x, y) in &[(3, 3), (20, 20), (31, 12), (7, 35)] {
        let trace = patch_trace(&pre.residual, x, y, 1).unwrap();
        let bins = d.describe(&trace).unwrap().bins;
        let peak = argmax_tie_smallest(&bins[..m / 2 + 1]);
        assert_eq!(
            peak,
            (0.1 * m as f64).round() as usize,
            "pixel ({}, {})",
            x,
            y
        );
    }

    // Zero amplitude leaves a static video that the residual removes.
    let flat = SynthConfig {
        water: WaterParams {
            waves: 1,
            amplitude_range: (0.0, 0.0),
            ..WaterParams::default()
        },
        ..quiet(24, 24, 20, 3)
    };
    let (video, _) = synth::generate_water(&flat).unwrap();
    let pre = pipeline::preprocess(&video, &no_downsample(10)).unwrap();
    assert!(pre.residual.frames().iter().flatten().all(|&v| v == 0));
}

#[test]
fn noise_has_flat_spectrum_and_static_has_no_residual() {
    let m = 200;
    let cfg = SynthConfig {
        nonwater_kind: NonWaterKind::Noise,
        ..quiet(40, 40, m, 13)
    };
    let (video, _) = synth::generate_nonwater(&cfg).unwrap();
    let pre = pipeline::preprocess(&video, &no_downsample(m)).unwrap();
    let d = FourierDescriber::new(m).unwrap();
    let bins = d
        .describe(&patch_trace(&pre.residual, 20, 20, 5).unwrap())
        .unwrap()
        .bins;
    let mean = 1.0 / (m - 1) as f64;
    let top = bins.iter().cloned().fold(0.0, f64::max);
    assert!(top < 3.0 * mean, "peak {} vs mean {}", top, mean);

    let cfg = SynthConfig {
        nonwater_kind: NonWaterKind::Static,
        ..SynthConfig::default()
    };
    let (video, mask) = synth::generate_nonwater(&SynthConfig { frames: 30, ..cfg }).unwrap();
    assert!(mask.masks().iter().flatten().all(|&v| v == 0));
    let pre = pipeline::preprocess(&video, &PipelineConfig::default()).unwrap();
    assert!(pre.residual.frames().iter().flatten().all(|&v| v == 0));
}

#[test]
fn dataset_layout_and_regeneration() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let template = quiet(24, 24, 8, 0);
    let manifest = synth::generate_dataset(a.path(), 2, &template, 77).unwrap();
    synth::generate_dataset(b.path(), 2, &template, 77).unwrap();
    assert_eq!(manifest.videos.len(), 4);
    assert_eq!(Manifest::load(a.path()).unwrap(), manifest);

    let mut dirs: Vec<String> = std::fs::read_dir(a.path())
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    dirs.sort();
    let mut ids: Vec<String> = manifest.videos.iter().map(|v| v.id.clone()).collect();
    ids.sort();
    assert_eq!(dirs, ids);
    for v in &manifest.videos {
        assert!(v.id.starts_with(v.label.as_str()));
        assert!(v.category.starts_with(v.label.as_str()));
    }

    let tree = |root: &std::path::Path| -> BTreeMap<String, Vec<u8>> {
        let mut out = BTreeMap::new();
        let mut stack = vec![root.to_path_buf()];
        while let Some(p) = stack.pop() {
            for e in std::fs::read_dir(&p).unwrap() {
                let e = e.unwrap().path();
                if e.is_dir() {
                    stack.push(e);
                } else {
                    let rel = e.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                    out.insert(rel, std::fs::read(&e).unwrap());
                }
            }
        }
        out
    };
    assert_eq!(tree(a.path()), tree(b.path()));
}

#[test]
fn water_and_flag_descriptors_separate() {
    let m = 64;
    let cfg = no_downsample(m);
    let describe = |video: FrameSequence, rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
        let res = pipeline::preprocess(&video, &cfg).unwrap().residual;
        let d = FourierDescriber::new(m).unwrap();
        (0..60)
            .map(|_| {
                let (x, y) = (rng.gen_range(2..38), rng.gen_range(2..38));
                let t0 = rng.gen_range(0..=res.frame_count() - m);
                d.describe(&extract_signal(&res, x, y, t0, 5, m).unwrap().values)
                    .unwrap()
                    .bins
            })
            .collect()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut water = Vec::new();
    let mut flag = Vec::new();
    for s in 0..2 {
        water.extend(describe(
            synth::generate_water(&quiet(40, 40, 128, 100 + s))
                .unwrap()
                .0,
            &mut rng,
        ));
        let c = SynthConfig {
            nonwater_kind: NonWaterKind::Flag,
            ..quiet(40, 40, 128, 200 + s)
        };
        flag.extend(describe(synth::generate_nonwater(&c).unwrap().0, &mut rng));
    }
    assert!(water.len() >= 100 && flag.len() >= 100);
    let mean_dist = |a: &[Vec<f64>], b: &[Vec<f64>], same: bool| {
        let mut s = 0.0;
        let mut n = 0;
        for (i, x) in a.iter().enumerate() {
            for (j, y) in b.iter().enumerate() {
                if same && i == j {
                    continue;
                }
                s += euclidean(x, y);
                n += 1;
            }
        }
        s / n as f64
    };
    let inter = mean_dist(&water, &flag, false);
    let intra = (mean_dist(&water, &water, true) + mean_dist(&flag, &flag, true)) / 2.0;
    assert!(inter > intra, "inter {} intra {}", inter, intra);
}

#[test]
fn hybrid_is_200_plus_256() {
    let td = FourierDescriber::new(200)
        .unwrap()
        .describe(&vec![1.0; 200])
        .unwrap();
    let sd = LbpHistogram {
        bins: vec![0.0; 256],
    };
    assert_eq!(fuse_early(&td, &sd).values.len(), 456);
    assert_eq!(PipelineConfig::default().hybrid_len(), 456);
}

#[test]
fn reference_table_formats() {
    let results = [
        (Label::Water, 0.92),
        (Label::Water, 0.926),
        (Label::NonWater, 0.95),
    ];
    let table: ClassTable = per_class_report(&results);
    assert_eq!(percent(table.water.unwrap()), 92.3);
    assert_eq!(percent(table.nonwater.unwrap()), 95.0);
    assert_eq!(percent(table.average.unwrap()), 93.7);
    let text = table.to_text();
    assert!(text.contains("92.3") && text.contains("95.0") && text.contains("93.7"));

    let t = per_class_report(&[
        (Label::Water, 0.9),
        (Label::Water, 0.94),
        (Label::NonWater, 0.95),
    ]);
    assert_eq!(
        (
            percent(t.water.unwrap()),
            percent(t.nonwater.unwrap()),
            percent(t.average.unwrap())
        ),
        (92.0, 95.0, 93.5)
    );
}

#[test]
fn sample_count_scales_with_windows() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let cfg = PipelineConfig {
        m: 20,
        downsample: false,
        ..PipelineConfig::default()
    };
    let res = random_video(&mut rng, 16, 16, 29);
    let video = LabeledVideo {
        id: "v".into(),
        label: Label::Water,
        residual: res,
        truth: MaskSequence::constant(16, 16, true),
    };
    let ds = pipeline::sample_training_set(&[video.clone(), video], &cfg).unwrap();
    assert_eq!(ds.len(), 2 * 10 * 10);
    assert_eq!(ds.descriptor_len(), 20 + 256);
    // At full scale: about 150 videos, 500 windows each, 10 per window.
    let rows_per_video =
        |windows: usize| windows * PipelineConfig::default().per_frame_train_samples;
    assert_eq!(150 * rows_per_video(500), 750_000);
}

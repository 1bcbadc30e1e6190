//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use tractscope::analytics::correlation::{community_order, cov_corr};
use tractscope::analytics::louvain::louvain;
use tractscope::analytics::tsne::tsne;
use tractscope::analytics::TsneParams;
use tractscope::atlas::{Atlas, AtlasRegion};
use tractscope::features::{
    build_all_matrices, extract_scan, tensor_features, tract_features, FeatureConfig, ScanInput, TensorWeighting,
};
use tractscope::geometry::{Point3, Streamline};
use tractscope::io::metadata::{Group, ScanRecord, Sex};
use tractscope::io::tck::{parse_tck, write_tck, TckError};
use tractscope::io::volume::{Grid, LabelVolume, ScalarVolume};
use tractscope::matrix::FeatureMatrix;
use tractscope::ml::metrics::roc_curve;
use tractscope::ml::pipeline::{fold_stats, subjects_of};
use tractscope::ml::stats::{mann_whitney_u, mann_whitney_u_with, PMethod};
use tractscope::ml::svm::{fit_linear_svm, train_svm, SvmParams};
use tractscope::ml::{make_fold_plan, run_all_regions, PipelineConfig, RunOptions, SaliencyReport, VisitRows};
use tractscope::synth::{synth_matrices, Effect, SynthConfig};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("cv-structure", cv_structure),
        ("leakage-guard", leakage_guard),
        ("mann-whitney", mann_whitney),
        ("saliency-recovery", saliency_recovery),
        ("svm", svm),
        ("louvain", louvain_blocks),
        ("projection", projection),
        ("feature-extraction", feature_extraction),
        ("parser", parser),
        ("determinism", determinism),
        ("runtime-envelope", runtime_envelope),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            Err(e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("PASS {name} ({secs:.1}s): {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL {name} ({secs:.1}s): {d}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}

fn synth(seed: u64) -> Vec<FeatureMatrix> {
    synth_matrices(&SynthConfig { seed, ..SynthConfig::default() }).unwrap().2
}

fn cv_structure() -> Outcome {
    let t = Instant::now();
    let m = synth_matrices(&SynthConfig { n_regions: 2, ..SynthConfig::default() }).unwrap().2.remove(0);
    let subjects = subjects_of(&m);
    assert_eq!(subjects.len(), 136);
    let (k, c) = (5, 10);
    let plan = make_fold_plan(&subjects, k, c, 0).unwrap();
    let index = plan.subject_index();
    let d = subjects.iter().filter(|s| s.1 == Group::Disease).count();
    let mut tested = vec![0usize; subjects.len()];
    let mut worst_balance: f64 = 0.0;
    for r in 0..c {
        for f in 0..k {
            let test = plan.test_subjects(r, f);
            for &s in &test {
                tested[s] += 1;
            }
            let nd = test.iter().filter(|&&s| plan.subjects[s].1 == Group::Disease).count();
            worst_balance = worst_balance.max((nd as f64 - d as f64 / k as f64).abs());
            worst_balance = worst_balance.max(((test.len() - nd) as f64 - (136 - d) as f64 / k as f64).abs());
            // all scans of a subject fall on the same side
            let mut side: BTreeMap<&str, bool> = BTreeMap::new();
            for row in &m.rows {
                let in_test = plan.fold_of(r, index[row.meta.subject_id.as_str()]) == f;
                if *side.entry(&row.meta.subject_id).or_insert(in_test) != in_test {
                    return Err(format!("subject {} split across train and test", row.meta.subject_id));
                }
            }
        }
    }
    let elapsed = t.elapsed();
    check(
        tested.iter().all(|&n| n == c) && worst_balance <= 1.0 && elapsed < Duration::from_secs(1),
        format!(
            "{} subjects, {} scans, test counts in {:?}, worst class imbalance {worst_balance:.2}, {elapsed:?}",
            subjects.len(),
            m.rows.len(),
            (tested.iter().min().unwrap(), tested.iter().max().unwrap())
        ),
    )
}

fn leakage_guard() -> Outcome {
    let m = synth_matrices(&SynthConfig { n_regions: 2, ..SynthConfig::default() }).unwrap().2.remove(0);
    let plan = make_fold_plan(&subjects_of(&m), 5, 10, 1).unwrap();
    let mut checked = 0;
    for visit_rows in [VisitRows::Each, VisitRows::SubjectMean] {
        for r in 0..10 {
            for f in 0..5 {
                let before = fold_stats(&m, &plan, visit_rows, r, f).unwrap();
                let test: Vec<&str> = plan.test_subjects(r, f).into_iter().map(|s| plan.subjects[s].0.as_str()).collect();
                let mut poisoned = m.clone();
                for row in poisoned.rows.iter_mut().filter(|row| test.contains(&row.meta.subject_id.as_str())) {
                    row.values.iter_mut().for_each(|v| *v = 1e12);
                }
                if fold_stats(&poisoned, &plan, visit_rows, r, f).unwrap() != before {
                    return Err(format!("{visit_rows:?} repetition {r} fold {f}: statistics changed"));
                }
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} folds unchanged under test-fold sentinels"))
}

fn enumerate_u(na: usize, nb: usize) -> Vec<u32> {
    let n = na + nb;
    (0u32..(1 << n))
        .filter(|m| m.count_ones() as usize == na)
        .map(|mask| (0..n).filter(|i| mask & (1 << i) != 0).map(|i| (0..i).filter(|j| mask & (1 << j) == 0).count() as u32).sum())
        .collect()
}

fn enumeration_p(u: u32, null: &[u32]) -> f64 {
    let lower = null.iter().filter(|&&v| v <= u).count() as f64;
    let upper = null.iter().filter(|&&v| v >= u).count() as f64;
    (2.0 * lower.min(upper) / null.len() as f64).min(1.0)
}

fn split(mask: u32, n: usize) -> (Vec<f64>, Vec<f64>) {
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for i in 0..n {
        if mask & (1 << i) != 0 { a.push(i as f64) } else { b.push(i as f64) }
    }
    (a, b)
}

fn mann_whitney() -> Outcome {
    let mut cases = 0;
    let mut worst_exact: f64 = 0.0;
    for n in 2..=12usize {
        for na in 1..n {
            let null = enumerate_u(na, n - na);
            for mask in (0u32..(1 << n)).filter(|m| m.count_ones() as usize == na) {
                let (a, b) = split(mask, n);
                let want = a.iter().map(|x| b.iter().filter(|y| x > y).count()).sum::<usize>() as u32;
                let r = mann_whitney_u(&a, &b).unwrap();
                if r.u != f64::from(want) {
                    return Err(format!("U {} != {want} for {a:?} vs {b:?}", r.u));
                }
                worst_exact = worst_exact.max((r.p - enumeration_p(want, &null)).abs());
                cases += 1;
            }
        }
    }
    let null = enumerate_u(8, 8);
    let mut worst_normal: f64 = 0.0;
    let mut worst_at = 0.0;
    for mask in (0u32..(1 << 16)).filter(|m| m.count_ones() == 8) {
        let (a, b) = split(mask, 16);
        let r = mann_whitney_u_with(&a, &b, Some(PMethod::Normal)).unwrap();
        let diff = (r.p - enumeration_p(r.u as u32, &null)).abs();
        if diff > worst_normal {
            worst_normal = diff;
            worst_at = r.u;
        }
    }
    check(
        worst_exact < 1e-12 && worst_normal <= 0.01,
        format!(
            "{cases} tie-free splits, max exact |dp| {worst_exact:.1e}; 8+8 normal approximation max |dp| {worst_normal:.4} at U={worst_at} (tolerance 0.01)"
        ),
    )
}

fn saliency_recovery() -> Outcome {
    let planted: Vec<String> = (0..5).map(|i| format!("f{i:02}")).collect();
    let t = Instant::now();
    let mut recovered = 0;
    let mut accuracies = Vec::new();
    let mut noise = Vec::new();
    for seed in 0..20u64 {
        let cfg = SynthConfig {
            n_disease: 60,
            n_control: 60,
            n_regions: 2,
            features_per_region: 40,
            effect: Effect { regions: vec![1], features: planted.clone(), shift_sd: 1.0 },
            seed,
            followup_fraction: 0.0,
            block_correlation: 0.0,
            ..SynthConfig::default()
        };
        let matrices = synth_matrices(&cfg).unwrap().2;
        let config = PipelineConfig { seed, ..PipelineConfig::default() };
        let plan = make_fold_plan(&subjects_of(&matrices[0]), config.k, config.c, config.seed).unwrap();
        let report = run_all_regions(&matrices, &plan, &config, &RunOptions { parallel: true, progress: None }).unwrap();
        let region = report.regions.iter().find(|r| r.region == 1).unwrap();
        let mut ranked = region.features.clone();
        ranked.sort_by(|a, b| b.importance_mean.total_cmp(&a.importance_mean));
        let m = (ranked.len() as f64).sqrt().ceil() as usize;
        let top: Vec<&str> = ranked[..m].iter().map(|f| f.name.as_str()).collect();
        recovered += usize::from(planted.iter().all(|p| top.contains(&p.as_str())));
        accuracies.push(region.performance.accuracy.mean);
        noise.extend(report.regions.iter().filter(|r| r.region != 1).map(|r| r.performance.accuracy.mean));
    }
    let elapsed = t.elapsed();
    let mean_acc = accuracies.iter().sum::<f64>() / accuracies.len() as f64;
    let (lo, hi) = noise.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &a| (l.min(a), h.max(a)));
    check(
        recovered >= 18 && mean_acc >= 0.85 && lo >= 0.35 && hi <= 0.65 && elapsed < Duration::from_secs(60),
        format!(
            "planted features in top ranks {recovered}/20 (need 18); mean accuracy {mean_acc:.4} (need 0.85); noise accuracy in [{lo:.3}, {hi:.3}]; {:.1}s for 20 seeds",
            elapsed.as_secs_f64()
        ),
    )
}

fn blobs(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let c = if i % 2 == 0 { 3.0 } else { -3.0 };
            let a: f64 = rng.sample(StandardNormal);
            let b: f64 = rng.sample(StandardNormal);
            (vec![c + 0.5 * a, c + 0.5 * b], i % 2 == 0)
        })
        .unzip()
}

fn svm() -> Outcome {
    let (x, y) = blobs(200, 21);
    let fit = fit_linear_svm(&x, &y, &SvmParams::default()).unwrap();
    let d: Vec<f64> = x.iter().map(|r| fit.model.decision(r)).collect();
    let train_acc = d.iter().zip(&y).filter(|(&v, &l)| (v > 0.0) == l).count() as f64 / y.len() as f64;
    let auc = roc_curve(&d, &y).unwrap().auc;

    let model = train_svm(&x, &y, &[0, 1], &SvmParams::default(), 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut probe: Vec<(f64, f64)> = (0..2000)
        .map(|_| {
            let p = [rng.random_range(-8.0..8.0), rng.random_range(-8.0..8.0)];
            (model.decision(&p), model.probability(&p))
        })
        .collect();
    probe.sort_by(|a, b| a.0.total_cmp(&b.0));
    let monotone = probe.windows(2).all(|w| w[0].1 <= w[1].1);

    let (half, _) = blobs(60, 22);
    let mut mx = Vec::new();
    let mut my = Vec::new();
    for r in &half {
        let p = vec![r[0].abs() + 0.1, r[1]];
        mx.push(p.iter().map(|v| -v).collect());
        my.push(false);
        mx.push(p);
        my.push(true);
    }
    let bias = fit_linear_svm(&mx, &my, &SvmParams::default()).unwrap().model.bias;
    check(
        train_acc == 1.0 && (auc - 1.0).abs() <= 1e-9 && monotone && bias.abs() < 1e-6,
        format!("training accuracy {train_acc}, AUC {auc}, probability monotone {monotone}, mirrored bias {bias:.1e}"),
    )
}

fn louvain_blocks() -> Outcome {
    let mut recovered = 0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cols = vec![Vec::with_capacity(500); 10];
        for _ in 0..500 {
            let z: [f64; 2] = [rng.sample(StandardNormal), rng.sample(StandardNormal)];
            for (j, col) in cols.iter_mut().enumerate() {
                let e: f64 = rng.sample(StandardNormal);
                col.push(0.8f64.sqrt() * z[j / 5] + 0.2f64.sqrt() * e);
            }
        }
        let (_, corr) = cov_corr(&cols);
        let (order, communities, passes) = community_order(&corr, 0.1);
        if passes.windows(2).any(|w| w[1] < w[0]) {
            return Err(format!("seed {seed}: modularity decreased {passes:?}"));
        }
        let mut of = [0; 10];
        for (pos, &f) in order.iter().enumerate() {
            of[f] = communities[pos];
        }
        if of[0] != of[5] && of[..5].iter().all(|&c| c == of[0]) && of[5..].iter().all(|&c| c == of[5]) {
            recovered += 1;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..200 {
        let n = rng.random_range(3..20);
        let mut w = vec![vec![0.0; n]; n];
        for a in 0..n {
            for b in a + 1..n {
                let v = if rng.random_bool(0.4) { rng.random::<f64>() } else { 0.0 };
                w[a][b] = v;
                w[b][a] = v;
            }
        }
        let p = louvain(&w);
        if p.modularity_per_pass.windows(2).any(|x| x[1] < x[0]) {
            return Err(format!("random graph: modularity decreased {:?}", p.modularity_per_pass));
        }
    }
    check(recovered >= 19, format!("two blocks recovered in {recovered}/20 seeds; modularity nondecreasing on 220 graphs"))
}

fn projection() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut x = Vec::new();
    let mut labels = Vec::new();
    for c in 0..2 {
        for _ in 0..50 {
            x.push((0..10).map(|d| rng.sample::<f64, _>(StandardNormal) + if d == 0 { 10.0 * c as f64 } else { 0.0 }).collect::<Vec<f64>>());
            labels.push(c);
        }
    }
    let params = TsneParams { seed: 17, ..TsneParams::default() };
    let (points, _, _) = tsne(&x, &params).unwrap();
    let (again, _, _) = tsne(&x, &params).unwrap();
    let dist = |a: &[f64; 2], b: &[f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    let mut total = 0.0;
    for (i, p) in points.iter().enumerate() {
        let mean_to = |c: usize| {
            let d: Vec<f64> = points.iter().enumerate().filter(|&(j, _)| j != i && labels[j] == c).map(|(_, q)| dist(p, q)).collect();
            d.iter().sum::<f64>() / d.len() as f64
        };
        let (a, b) = (mean_to(labels[i]), mean_to(1 - labels[i]));
        total += (b - a) / a.max(b);
    }
    let s = total / points.len() as f64;
    check(s > 0.5 && points == again, format!("silhouette {s:.3}, repeat identical {}", points == again))
}

const NX: usize = 20;

fn grid() -> Grid {
    let mut affine = [0.0; 16];
    for d in [0, 5, 10, 15] {
        affine[d] = 1.0;
    }
    affine[3] = -9.5;
    Grid::new([NX, 4, 4], [1.0; 3], affine).unwrap()
}

fn labels() -> LabelVolume {
    let g = grid();
    let mut data = vec![0u32; g.len()];
    for k in 0..4 {
        for j in 0..4 {
            for i in 0..NX {
                data[g.index(i, j, k)] = match i {
                    1..=4 => 3,
                    8..=11 => 5,
                    15..=18 => 17,
                    _ => 0,
                };
            }
        }
    }
    let atlas = Atlas::new(
        [(3, "Left-A"), (5, "Mid"), (17, "Right-A")]
            .into_iter()
            .map(|(label, name)| AtlasRegion { label, name: name.into(), hemisphere: None, pair: None })
            .collect(),
    );
    LabelVolume::new(g, data, atlas).unwrap()
}

fn record(id: &str) -> ScanRecord {
    ScanRecord {
        subject_id: id.into(),
        scan_id: id.into(),
        visit_date: NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(),
        age_at_scan: 60.0,
        sex: Sex::F,
        group: Group::Control,
        files: Default::default(),
    }
}

fn volumes(fa: Vec<f64>) -> BTreeMap<String, ScalarVolume> {
    let md: Vec<f64> = fa.iter().map(|v| 1.0 - v).collect();
    BTreeMap::from([
        ("FA".to_string(), ScalarVolume::new(grid(), fa, "FA").unwrap()),
        ("MD".to_string(), ScalarVolume::new(grid(), md, "MD").unwrap()),
    ])
}

fn line(points: &[Point3]) -> Streamline {
    Streamline::new(points.to_vec()).unwrap()
}

fn random_fibers(rng: &mut ChaCha8Rng, n: usize) -> Vec<Streamline> {
    (0..n)
        .map(|_| {
            let len = rng.random_range(2..6);
            let pts: Vec<Point3> =
                (0..len).map(|_| [rng.random_range(-9.4..9.4), rng.random_range(0.0..3.0), rng.random_range(0.0..3.0)]).collect();
            line(&pts)
        })
        .collect()
}

fn feature_extraction() -> Outcome {
    let a = line(&[[0.0, 0.0, 0.0], [3.0, 0.0, 0.0], [3.0, 4.0, 0.0]]);
    let b = line(&[[0.0, 0.0, 0.0], [0.0, 0.0, 3.0]]);
    let afl = tract_features(&[&a, &b])["AFL"].value;

    let constant = ScalarVolume::new(grid(), vec![0.375; grid().len()], "FA").unwrap();
    let c = line(&[[-8.0, 1.0, 1.0], [-2.3, 1.7, 2.2], [6.1, 0.4, 1.9]]);
    let means: Vec<f64> = [TensorWeighting::Vertex, TensorWeighting::Fiber]
        .into_iter()
        .map(|w| tensor_features(&[&c, &b], &[&constant], w)["MFA"].value)
        .collect();

    let config = FeatureConfig { measures: vec!["FA".into(), "MD".into()], weighting: TensorWeighting::Vertex };
    let labels = labels();
    let g = grid();
    let rec = record("s");
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.random_range(0..25);
        let fibers = random_fibers(&mut rng, n);
        let mirrored: Vec<Streamline> = fibers.iter().map(|s| s.map_points(|[x, y, z]| [-x, y, z])).collect();
        let fa: Vec<f64> = (0..g.len()).map(|_| rng.random()).collect();
        let mut flipped = vec![0.0; fa.len()];
        for k in 0..4 {
            for j in 0..4 {
                for i in 0..NX {
                    flipped[g.index(NX - 1 - i, j, k)] = fa[g.index(i, j, k)];
                }
            }
        }
        let (va, vb) = (volumes(fa), volumes(flipped));
        let x = extract_scan(&ScanInput { record: &rec, streamlines: &fibers, labels: &labels, volumes: &va }, &config).unwrap();
        let y = extract_scan(&ScanInput { record: &rec, streamlines: &mirrored, labels: &labels, volumes: &vb }, &config).unwrap();
        for name in x[&3].values.keys().filter(|n| n.starts_with("dLR_")) {
            let (v, w) = (x[&3].get(name).unwrap(), y[&3].get(name).unwrap());
            if v.flag != w.flag {
                return Err(format!("{name}: flag {:?} vs {:?}", v.flag, w.flag));
            }
            worst = worst.max((v.value + w.value).abs());
        }
    }

    let records: Vec<ScanRecord> = (0..8).map(|i| record(&format!("s{i}"))).collect();
    let inputs: Vec<(Vec<Streamline>, BTreeMap<String, ScalarVolume>)> = (0..8)
        .map(|_| {
            let fibers = random_fibers(&mut rng, 40);
            let fa = (0..g.len()).map(|_| rng.random()).collect();
            (fibers, volumes(fa))
        })
        .collect();
    let scans: Vec<ScanInput<'_>> = records
        .iter()
        .zip(&inputs)
        .map(|(record, (streamlines, volumes))| ScanInput { record, streamlines, labels: &labels, volumes })
        .collect();
    let serial = build_all_matrices(&scans, &config, false).unwrap();
    let parallel = build_all_matrices(&scans, &config, true).unwrap();
    let same = serial.len() == parallel.len() && serial.iter().zip(&parallel).all(|(a, b)| a.to_csv() == b.to_csv());

    check(
        afl == 5.0 && means == [0.375, 0.375] && worst < 1e-6 && same,
        format!("AFL {afl}; constant-field means {means:?}; max |dLR + mirrored dLR| {worst:.1e}; parallel == serial {same}"),
    )
}

fn fixture(name: &str) -> Vec<u8> {
    std::fs::read(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/tck").join(name)).unwrap()
}

fn parser() -> Outcome {
    let empty = parse_tck(&fixture("empty.tck")).unwrap().is_empty();
    let single = parse_tck(&fixture("single.tck")).unwrap();
    let multi = parse_tck(&fixture("multi.tck")).unwrap();
    let lens: Vec<usize> = multi.iter().map(Streamline::len).collect();
    let truncated = matches!(parse_tck(&fixture("truncated.tck")), Err(TckError::TruncatedStream { .. }));
    let bad_header = matches!(parse_tck(&fixture("bad_header.tck")), Err(TckError::MalformedHeader(_)));
    let fixtures_ok = empty && single.len() == 1 && single[0].arc_length() == 7.0 && lens == [2, 3, 4] && truncated && bad_header;

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut round_trips = 0;
    for _ in 0..300 {
        let tracks: Vec<Streamline> = (0..rng.random_range(0..12))
            .map(|_| {
                let pts: Vec<Point3> = (0..rng.random_range(2..20))
                    .map(|_| [0; 3].map(|_| f64::from(rng.random_range(-500.0f32..500.0))))
                    .collect();
                line(&pts)
            })
            .collect();
        if parse_tck(&write_tck(&tracks)).unwrap() != tracks {
            return Err("round trip changed a track".into());
        }
        round_trips += 1;
    }
    check(
        fixtures_ok,
        format!("empty {empty}, single {}, multi {lens:?}, truncated {truncated}, bad header {bad_header}; {round_trips} exact round trips", single.len()),
    )
}

fn full_run(matrices: &[FeatureMatrix], threads: usize, parallel: bool) -> (SaliencyReport, Duration) {
    let config = PipelineConfig::default();
    let plan = make_fold_plan(&subjects_of(&matrices[0]), config.k, config.c, config.seed).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    let t = Instant::now();
    let report = pool.install(|| run_all_regions(matrices, &plan, &config, &RunOptions { parallel, progress: None })).unwrap();
    (report, t.elapsed())
}

fn determinism() -> Outcome {
    let matrices = synth(11);
    let (serial, _) = full_run(&matrices, 1, false);
    let (parallel, _) = full_run(&synth(11), 4, true);
    let (a, b) = (serial.to_json(), parallel.to_json());
    check(a == b, format!("{} regions, {} bytes of report JSON, serial == 4-thread parallel {}", serial.regions.len(), a.len(), a == b))
}

fn runtime_envelope() -> Outcome {
    let matrices = synth(0);
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    let (report, elapsed) = full_run(&matrices, threads, true);
    check(
        report.regions.len() == 42 && report.errors.is_empty() && elapsed < Duration::from_secs(120),
        format!(
            "42 regions x {} subjects, 150 trees, k=5, c=10 on {threads} thread(s): {:.1}s (limit 120s)",
            subjects_of(&matrices[0]).len(),
            elapsed.as_secs_f64()
        ),
    )
}

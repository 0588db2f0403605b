//! Acceptance suite. Each criterion prints one PASS/FAIL line with its
//! running time; a criterion that misses its time budget fails.
//!
//! Run with `cargo test --test acceptance` (add `--release` for headroom on
//! slow machines).

use std::collections::HashMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use isn_core::eval::{ap_by_scale_report, evaluate, EvalConfig};
use isn_core::fusion::soft_nms;
use isn_core::pyramid::{stage_histogram, FpnAssignConfig};
use isn_core::sampling::{
    isn_partition, resized_scale_distributions, snip_partition, Binning, SamplingPolicy,
    SnipRangeTable,
};
use isn_core::search::{greedy_range_search, LookupOracle, SearchSpace};
use isn_core::sim::{
    apply_strategy, generate_dataset, lognormal_population, simulate_detections, DetectorProfile,
    Strategy, SyntheticConfig,
};
use isn_core::{instance_scale, BBox, Instance, PyramidSpec, ScaleRange};
use isn_testkit::random::{clustered_detections, micro_eval_problem, random_soft_nms_config, rng};
use isn_testkit::reference::{brute_force_eval, canonical, iterative_soft_nms, Scored};
use rand::Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn range(lo: f64, hi: f64) -> ScaleRange {
    ScaleRange::new(lo, hi).expect("valid range")
}

fn published_search_table() -> Vec<((f64, f64), f64)> {
    vec![
        ((0.0, 640.0), 37.4),
        ((16.0, 640.0), 38.2),
        ((32.0, 640.0), 38.1),
        ((16.0, 560.0), 38.7),
        ((16.0, 496.0), 37.9),
        ((16.0, 320.0), 37.2),
        ((32.0, 560.0), 38.4),
    ]
}

fn greedy_search_reproduction() -> Outcome {
    let pairs = published_search_table();
    let mut oracle = LookupOracle::from_pairs(&pairs).map_err(|e| e.to_string())?;
    let out =
        greedy_range_search(&SearchSpace::default(), &mut oracle).map_err(|e| e.to_string())?;
    check(out.best == range(16.0, 560.0), || {
        format!("best {}", out.best)
    })?;
    check(out.best_ap == 38.7, || format!("best AP {}", out.best_ap))?;
    let mut probed: Vec<ScaleRange> = out.trace.iter().map(|t| t.range).collect();
    let mut expected: Vec<ScaleRange> = pairs.iter().map(|&((l, h), _)| range(l, h)).collect();
    let key = |r: &ScaleRange| (r.lower().to_bits(), r.upper().to_bits());
    probed.sort_by_key(key);
    expected.sort_by_key(key);
    check(probed == expected, || format!("probed {probed:?}"))?;
    Ok(format!(
        "best {} AP {}, {} probes",
        out.best,
        out.best_ap,
        out.trace.len()
    ))
}

fn square(side: f64) -> Instance {
    Instance {
        id: 1,
        image_id: 1,
        category_id: 1,
        bbox: BBox::new(0.0, 0.0, side, side).expect("positive side"),
        iscrowd: false,
    }
}

fn per_resolution_decisions() -> Outcome {
    let table = SnipRangeTable::two_level_default();
    let high = snip_partition(&[square(73.0)], 0, &table).map_err(|e| e.to_string())?;
    check(high.valid.len() == 1 && high.ignored.is_empty(), || {
        "scale 73 should be valid at (800, 1200)".into()
    })?;
    let low = snip_partition(&[square(107.0)], 1, &table).map_err(|e| e.to_string())?;
    check(low.valid.is_empty() && low.ignored.len() == 1, || {
        "scale 107 should be ignored at (480, 800)".into()
    })?;
    Ok("73 valid at (800,1200); 107 ignored at (480,800)".into())
}

fn isn_consistency() -> Outcome {
    const PAIRS: usize = 100_000;
    let isn_range = ScaleRange::default();
    let pyramid = PyramidSpec::default();
    let mut r = rng(2024);
    // Label seen for each resized scale, keyed by its bit pattern.
    let mut labels: HashMap<u64, bool> = HashMap::new();
    let mut collisions = 0usize;
    let mut record = |scale: f64, valid: bool| -> Result<(), String> {
        match labels.insert(scale.to_bits(), valid) {
            Some(prev) if prev != valid => Err(format!("scale {scale} labelled both ways")),
            Some(_) => {
                collisions += 1;
                Ok(())
            }
            None => Ok(()),
        }
    };
    let boundary = [16.0, 560.0, 16f64.next_down(), 560f64.next_up(), 100.0];
    for i in 0..PAIRS {
        // Half the pairs aim at a shared resized scale from a random level, so
        // equal scales recur across different (instance, omega) pairs; the
        // factors are powers of two, which keeps `omega * side` exact.
        let omega = pyramid.omegas()[r.random_range(0..pyramid.len())];
        let inst = if i % 2 == 0 {
            let target = if r.random_bool(0.2) {
                boundary[r.random_range(0..boundary.len())]
            } else {
                f64::from(r.random_range(1u32..=1200))
            };
            square(target / omega)
        } else {
            let w = r.random_range(1.0..800.0);
            let h = r.random_range(1.0..800.0);
            Instance {
                bbox: BBox::new(0.0, 0.0, w, h).expect("positive extent"),
                ..square(1.0)
            }
        };
        let scale = instance_scale(&inst.bbox, omega);
        let valid = isn_partition(std::slice::from_ref(&inst), omega, &isn_range, 0)
            .valid
            .len()
            == 1;
        record(scale, valid)?;
    }
    check(collisions > 10_000, || {
        format!("only {collisions} repeated scales")
    })?;

    let population =
        lognormal_population(PAIRS / pyramid.len(), 64.0, 1.0, 7).map_err(|e| e.to_string())?;
    let isn = resized_scale_distributions(
        &population,
        &SamplingPolicy::Isn {
            pyramid: pyramid.clone(),
            range: isn_range,
        },
        &Binning::default(),
    );
    check(isn.overlap() == 0.0, || {
        format!("ISN overlap {}", isn.overlap())
    })?;
    let snip = resized_scale_distributions(
        &population,
        &SamplingPolicy::Snip {
            table: SnipRangeTable::two_level_default(),
        },
        &Binning::default(),
    );
    check(snip.overlap() > 0.05, || {
        format!("SNIP overlap {}", snip.overlap())
    })?;
    Ok(format!(
        "{PAIRS} pairs, {collisions} repeated scales agree; overlap ISN {} SNIP {:.3}",
        isn.overlap(),
        snip.overlap()
    ))
}

fn soft_nms_equivalence() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..1000u64 {
        let mut r = rng(seed);
        let dets = clustered_detections(&mut r, 200);
        let cfg = random_soft_nms_config(&mut r);
        let ours: Vec<Scored> = soft_nms(&dets, &cfg)
            .iter()
            .map(|d| (d.image_id, d.category_id, d.bbox.to_array(), d.score()))
            .collect();
        let (ours, reference) = (canonical(ours), canonical(iterative_soft_nms(&dets, &cfg)));
        check(ours.len() == reference.len(), || {
            format!(
                "seed {seed}: {} kept vs {} in reference",
                ours.len(),
                reference.len()
            )
        })?;
        for (a, b) in ours.iter().zip(&reference) {
            check(a.0 == b.0 && a.1 == b.1 && a.2 == b.2, || {
                format!("seed {seed}: different boxes kept")
            })?;
            worst = worst.max((a.3 - b.3).abs());
        }
        check(worst <= 1e-9, || {
            format!("seed {seed}: score gap {worst:e}")
        })?;
    }
    Ok(format!("1000 instances, max score gap {worst:e}"))
}

fn ap_equivalence() -> Outcome {
    let mut worst = 0.0f64;
    let (mut crowd, mut restricted) = (0, 0);
    for seed in 0..500u64 {
        let (gts, dets, cfg) = micro_eval_problem(&mut rng(seed));
        crowd += usize::from(gts.iter().any(|g| g.iscrowd));
        restricted += usize::from(cfg.scale_restriction.is_some());
        let ours = evaluate(&gts, &dets, &cfg).map_err(|e| format!("seed {seed}: {e}"))?;
        let reference = brute_force_eval(&gts, &dets, &cfg);
        let mut values = vec![
            (ours.ap, reference.ap),
            (ours.ap50, reference.ap50),
            (ours.ap75, reference.ap75),
            (ours.ap_s, reference.ap_s),
            (ours.ap_m, reference.ap_m),
            (ours.ap_l, reference.ap_l),
            (ours.ar, reference.ar),
        ];
        check(
            ours.per_category.len() == reference.per_category.len(),
            || format!("seed {seed}: category count differs"),
        )?;
        for (c, r) in ours.per_category.iter().zip(&reference.per_category) {
            check(c.category_id == r.0, || {
                format!("seed {seed}: category order differs")
            })?;
            values.extend([(c.ap, r.1), (c.ap50, r.2), (c.ap75, r.3), (c.ar, r.4)]);
        }
        for (a, b) in values {
            worst = worst.max((a - b).abs());
        }
        check(worst <= 1e-9, || {
            format!("seed {seed}: metric gap {worst:e}")
        })?;
    }
    Ok(format!(
        "500 instances ({crowd} with crowd, {restricted} scale-restricted), max gap {worst:e}"
    ))
}

fn end_to_end_ordering() -> Outcome {
    let pyramid = PyramidSpec::default();
    let isn_range = ScaleRange::default();
    let soft = isn_core::fusion::SoftNmsConfig::default();
    let mut isn_wins = 0;
    let mut lines = Vec::new();
    for seed in 1..=10u64 {
        let dataset =
            generate_dataset(&SyntheticConfig::default(), seed).map_err(|e| e.to_string())?;
        let profile = DetectorProfile {
            seed,
            ..DetectorProfile::default()
        };
        let per_res =
            simulate_detections(&dataset, &pyramid, &profile).map_err(|e| e.to_string())?;
        let cfg = EvalConfig {
            category_ids: Some(dataset.category_ids()),
            ..EvalConfig::default()
        };
        let fused = |strategy| {
            apply_strategy(&per_res, &isn_range, strategy, &soft, Some(100))
                .map_err(|e| e.to_string())
        };
        let isn_dets = fused(Strategy::Isn)?;
        let naive_dets = fused(Strategy::NaiveMultiScale)?;
        let (isn, isn_restricted) =
            ap_by_scale_report(dataset.instances(), &isn_dets, &cfg, &isn_range)
                .map_err(|e| e.to_string())?;
        let naive = evaluate(dataset.instances(), &naive_dets, &cfg).map_err(|e| e.to_string())?;
        isn_wins += usize::from(isn.ap >= naive.ap);
        check(isn_restricted.ap >= isn.ap, || {
            format!(
                "seed {seed}: AP[16,560] {} < AP {}",
                isn_restricted.ap, isn.ap
            )
        })?;
        lines.push(format!("{:.3}/{:.3}", isn.ap, naive.ap));
    }
    check(isn_wins >= 9, || {
        format!("ISN ahead on {isn_wins}/10 seeds: {}", lines.join(" "))
    })?;
    Ok(format!(
        "ISN >= naive on {isn_wins}/10 seeds (ISN/naive AP {})",
        lines.join(" ")
    ))
}

fn monotone_shrinkage() -> Outcome {
    let dataset = generate_dataset(&SyntheticConfig::default(), 42).map_err(|e| e.to_string())?;
    let pyramid = PyramidSpec::default();
    let cfg = FpnAssignConfig::default();
    let has_band = dataset.instances().iter().filter(|i| !i.iscrowd).any(|i| {
        pyramid.omegas().iter().any(|&w| {
            let s = instance_scale(&i.bbox, w);
            s > 496.0 && s <= 560.0
        })
    });
    check(has_band, || "no resized scale in (496, 560]".into())?;
    let hists: Vec<_> = [(0.0, 640.0), (16.0, 560.0), (16.0, 496.0)]
        .iter()
        .map(|&(lo, hi)| stage_histogram(dataset.instances(), &pyramid, &range(lo, hi), &cfg))
        .collect();
    for pair in hists.windows(2) {
        for level in cfg.levels() {
            check(pair[1][&level] <= pair[0][&level], || {
                format!("P{level} grew: {pair:?}")
            })?;
        }
    }
    check(hists[2][&5] < hists[1][&5], || {
        format!("P5 did not drop: {hists:?}")
    })?;
    let p5: Vec<usize> = hists.iter().map(|h| h[&5]).collect();
    Ok(format!("P5 counts {p5:?}"))
}

fn isn_cli(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_isn"))
        .args(args)
        .current_dir(dir)
        .output()
        .map_err(|e| e.to_string())?;
    check(out.status.success(), || {
        format!(
            "isn {}: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr).trim()
        )
    })
}

fn pipeline(dir: &Path, lookup: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let lookup = lookup.to_str().expect("utf-8 path");
    let steps: [&[&str]; 8] = [
        &["simulate", "--seed", "7", "--images", "60", "--out", "sim"],
        &[
            "fuse",
            "--detections",
            "sim/detections.json",
            "--out",
            "isn.json",
        ],
        &[
            "fuse",
            "--naive",
            "--detections",
            "sim/detections.json",
            "--out",
            "naive.json",
        ],
        &[
            "eval",
            "--annotations",
            "sim/annotations.json",
            "--detections",
            "isn.json",
            "--scale-range",
            "16,560",
            "--out",
            "eval_isn.json",
        ],
        &[
            "stage-hist",
            "--annotations",
            "sim/annotations.json",
            "--out",
            "stages.csv",
        ],
        &[
            "partition",
            "--annotations",
            "sim/annotations.json",
            "--policy",
            "snip",
            "--out",
            "snip.json",
        ],
        &["analyze-snip", "--seed", "7", "--out", "analysis.json"],
        &["search", "--lookup", lookup, "--out", "search.json"],
    ];
    for step in steps {
        isn_cli(dir, step)?;
    }
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).map_err(|e| e.to_string())? {
            let path = entry.map_err(|e| e.to_string())?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path
                    .strip_prefix(dir)
                    .expect("under dir")
                    .display()
                    .to_string();
                files.push((rel, std::fs::read(&path).map_err(|e| e.to_string())?));
            }
        }
    }
    files.sort();
    Ok(files)
}

fn determinism() -> Outcome {
    let lookup =
        Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/range_search_lookup.json");
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let first = pipeline(a.path(), &lookup)?;
    let second = pipeline(b.path(), &lookup)?;
    let names: Vec<&str> = first.iter().map(|(n, _)| n.as_str()).collect();
    check(first.len() >= 12, || format!("too few outputs: {names:?}"))?;
    check(first == second, || {
        let differing: Vec<&str> = first
            .iter()
            .zip(&second)
            .filter(|(x, y)| x != y)
            .map(|(x, _)| x.0.as_str())
            .collect();
        format!("outputs differ: {differing:?}")
    })?;
    Ok(format!(
        "{} files byte-identical across two runs",
        first.len()
    ))
}

fn main() {
    type Criterion = (u32, &'static str, u64, fn() -> Outcome);
    let criteria: [Criterion; 8] = [
        (
            1,
            "greedy range search reproduces the published search",
            1,
            greedy_search_reproduction,
        ),
        (
            2,
            "per-resolution range decisions for scales 73 and 107",
            1,
            per_resolution_decisions,
        ),
        (
            3,
            "ISN labels depend only on resized scale",
            5,
            isn_consistency,
        ),
        (
            4,
            "Soft-NMS matches the quadratic reference",
            10,
            soft_nms_equivalence,
        ),
        (5, "AP matches the brute-force oracle", 30, ap_equivalence),
        (
            6,
            "ISN fusion beats naive multi-scale fusion",
            60,
            end_to_end_ordering,
        ),
        (
            7,
            "stage histograms shrink as the range narrows",
            5,
            monotone_shrinkage,
        ),
        (
            8,
            "CLI pipelines are byte-for-byte reproducible",
            60,
            determinism,
        ),
    ];
    let mut failed = 0;
    for (id, name, budget, run) in criteria {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > Duration::from_secs(budget) => {
                Err(format!("{detail}; over the {budget} s budget"))
            }
            other => other,
        };
        let secs = elapsed.as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {id}: {name} [{secs:.2} s] {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {id}: {name} [{secs:.2} s] {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 8 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

//! Acceptance criteria, one pass/fail line each.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use mdim::estimate::{
    mdim_hausdorff_estimate, mdim_metric_estimate, CountOptions, Flavor, HausdorffOptions,
    MetricPost,
};
use mdim::metric::bowen_commutes_with_transform;
use mdim::systems::system_metric;
use mdim::verify::{
    fullshift_sweep, hybrid_sweep, product_sweep, random_finite_system, sandwich_sweep,
    transform_sweep, CheckOutcome, CheckStatus, SuiteOptions,
};
use mdim::{CountMode, FiniteWindow, GSystem, MetricTransform};
use mdim_cli::commands::build;
use mdim_cli::ExperimentConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

const SEED: u64 = 20_240_601;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run_cli(sub: &str, config: &str, out: &Path) -> i32 {
    let cfg = configs().join(config);
    mdim_cli::main_with_args([
        "mdim",
        sub,
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ])
}

fn summary(dir: &Path) -> Value {
    let text = fs::read_to_string(dir.join("summary.json")).expect("summary written");
    serde_json::from_str::<Value>(&text).expect("summary parses")["result"].clone()
}

fn budget() -> u64 {
    SuiteOptions::default().node_budget
}

/// Zero failures and zero skipped instances.
fn clean(o: &CheckOutcome, expected: usize) -> bool {
    o.status != CheckStatus::Fail
        && o.details.get("skipped").copied().unwrap_or(0.0) == 0.0
        && o.instances == expected
}

fn describe(o: &CheckOutcome) -> String {
    format!(
        "{} {} instances, status {}, margin {:.3e}{}",
        o.name,
        o.instances,
        o.status.label(),
        o.margin,
        if o.note.is_empty() {
            String::new()
        } else {
            format!(" ({})", o.note)
        }
    )
}

fn sandwich() -> Verdict {
    let o = sandwich_sweep(SEED, 200, budget()).unwrap();
    verdict(clean(&o, 200), describe(&o))
}

fn product() -> Verdict {
    let o = product_sweep(SEED ^ 1, 50, budget()).unwrap();
    verdict(clean(&o, 50), describe(&o))
}

fn transforms() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 2);
    let mut worst = 0.0_f64;
    let mut pairs = 0;
    while pairs < 10_000 {
        let sys = Arc::new(random_finite_system(&mut rng, 10));
        let d = system_metric(sys.clone());
        let w = FiniteWindow::cube(1, rng.gen_range(1..=4)).unwrap();
        let t = match rng.gen_range(0..3) {
            0 => MetricTransform::Power {
                a: rng.gen_range(0.05..1.0),
            },
            1 => MetricTransform::LogPower {
                a: rng.gen_range(0.05..1.0),
            },
            _ => MetricTransform::Hybrid {
                alpha: rng.gen_range(0.1..1.0),
                eps: rng.gen_range(0.05..0.5),
            },
        };
        let act = |g: &mdim::Element, x: &usize| sys.act(g, x);
        for _ in 0..100 {
            let (x, y) = (rng.gen_range(0..sys.len()), rng.gen_range(0..sys.len()));
            let (lhs, rhs) = bowen_commutes_with_transform(&t, &d, act, &w, &x, &y).unwrap();
            worst = worst.max((lhs - rhs).abs());
            pairs += 1;
        }
    }
    let mut pass = worst <= 1e-12;
    let mut parts = vec![format!("commutation gap {worst:.1e} over {pairs} pairs")];
    for (i, a) in [0.3, 0.5, 0.9].into_iter().enumerate() {
        let o = transform_sweep(
            SEED ^ (10 + i as u64),
            &MetricTransform::Power { a },
            30,
            budget(),
        )
        .unwrap();
        pass &= clean(&o, 30);
        parts.push(describe(&o));
    }
    verdict(pass, parts.join("; "))
}

fn hybrid() -> Verdict {
    let mut pass = true;
    let mut worst = f64::INFINITY;
    let mut k = 0;
    for alpha in [0.3, 0.5, 0.8] {
        for eps in [0.05, 0.1, 0.2] {
            let o = hybrid_sweep(SEED ^ (20 + k), alpha, eps, 30, budget()).unwrap();
            k += 1;
            if !clean(&o, 30) {
                pass = false;
                println!("    {}", describe(&o));
            }
            worst = worst.min(o.margin);
        }
    }
    verdict(
        pass,
        format!("9 grid points × 30 instances, smallest margin {worst:.3e}"),
    )
}

fn fullshift() -> Verdict {
    let opts = SuiteOptions::default();
    let o = fullshift_sweep(opts.config_budget, opts.node_budget).unwrap();
    verdict(clean(&o, o.instances) && o.instances > 0, describe(&o))
}

struct Slopes {
    metric: f64,
    minkowski: f64,
}

fn slopes(config: &str, root: &Path) -> Slopes {
    let est = root.join(format!("{config}-estimate"));
    let mink = root.join(format!("{config}-minkowski"));
    assert_eq!(run_cli("estimate", &format!("{config}.toml"), &est), 0);
    assert_eq!(run_cli("minkowski", &format!("{config}.toml"), &mink), 0);
    Slopes {
        metric: summary(&est)["metric"]["upper"].as_f64().unwrap(),
        minkowski: summary(&mink)["fit"]["slope"].as_f64().unwrap(),
    }
}

fn desk_fullshift(root: &Path) -> (Verdict, Slopes) {
    let s = slopes("fullshift", root);
    let pass = (0.8..=1.2).contains(&s.metric) && (0.9..=1.1).contains(&s.minkowski);
    let v = verdict(
        pass,
        format!(
            "upper metric slope {:.4} in [0.8, 1.2], alphabet box slope {:.4} in [0.9, 1.1]",
            s.metric, s.minkowski
        ),
    );
    (v, s)
}

fn snowflake(root: &Path, base: &Slopes) -> Verdict {
    let s = slopes("fullshift_snowflake", root);
    let rel = |x: f64, b: f64| (x / (2.0 * b) - 1.0).abs();
    let (rm, rk) = (rel(s.metric, base.metric), rel(s.minkowski, base.minkowski));
    verdict(
        rm <= 0.05 && rk <= 0.05,
        format!(
            "metric {:.4} → {:.4} (off by {:.2}%), box {:.4} → {:.4} (off by {:.2}%)",
            base.metric,
            s.metric,
            100.0 * rm,
            base.minkowski,
            s.minkowski,
            100.0 * rk
        ),
    )
}

fn random_subshift(rng: &mut ChaCha8Rng, k: usize) -> String {
    let m = rng.gen_range(2..=3);
    let mut grid: Vec<u32> = (0..=20).collect();
    rand::seq::SliceRandom::shuffle(grid.as_mut_slice(), rng);
    let mut values: Vec<f64> = grid[..m].iter().map(|&v| v as f64 / 20.0).collect();
    values.sort_by(f64::total_cmp);
    let mut pairs: Vec<(usize, usize)> = (0..m)
        .flat_map(|a| (0..m).map(move |b| (a, b)))
        .filter(|(a, b)| a != b)
        .collect();
    rand::seq::SliceRandom::shuffle(pairs.as_mut_slice(), rng);
    let forbidden: Vec<String> = pairs[..rng.gen_range(1..=2)]
        .iter()
        .map(|(a, b)| format!("{{ offsets = [[0], [1]], symbols = [{a}, {b}] }}"))
        .collect();
    let floor = rng.gen_range(0.005..0.04);
    format!(
        "[experiment]\nname = \"subshift{k}\"\nmode = \"exact\"\n\n\
         [system]\nkind = \"shift\"\nalphabet = {{ kind = \"points\", values = {values:?} }}\nlambda = 0.5\n\
         forbidden = [{}]\n\n\
         [folner]\nshape = \"boxes\"\nrank = 1\nn_min = 1\nn_max = 4\n\n\
         [grid]\nhi = 0.5\nlo = 0.05\ncount = 5\n\n\
         [hausdorff]\nenabled = true\nfloor = {floor}\n",
        forbidden.join(", ")
    )
}

fn hausdorff_ordering() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 3);
    let mut worst = f64::INFINITY;
    let mut slope_worst = f64::INFINITY;
    let mut slope_misses = 0;
    for k in 0..20 {
        let config = ExperimentConfig::from_toml(&random_subshift(&mut rng, k)).unwrap();
        let folner = config.folner().unwrap();
        let grid = config.grid(&folner).unwrap();
        let sys = config.system().unwrap();
        let exact = build(
            sys,
            "system",
            &config,
            &folner,
            CountMode::Exact,
            MetricPost::default(),
        )
        .unwrap();
        let greedy = build(
            sys,
            "system",
            &config,
            &folner,
            CountMode::Greedy,
            MetricPost::default(),
        )
        .unwrap();
        let opts = CountOptions {
            node_budget: config.budgets.nodes,
            ..CountOptions::for_mode(CountMode::Exact)
        };
        let metric = mdim_metric_estimate(exact.source.as_ref(), &grid, &opts).unwrap();
        let h = &config.hausdorff;
        let haus = mdim_hausdorff_estimate(
            greedy.source.as_ref(),
            &grid,
            &HausdorffOptions {
                floor: h.floor,
                phi: h.phi,
                balls: false,
            },
        )
        .unwrap();
        let at_scale = metric.flavor(Flavor::Cov).unwrap().upper_ratio;
        worst = worst.min(at_scale + 0.05 - haus.upper);
        let slack = metric.upper + 0.05 - haus.upper;
        slope_worst = slope_worst.min(slack);
        if slack < 0.0 {
            slope_misses += 1;
        }
    }
    verdict(
        worst >= 0.0,
        format!(
            "20 subshifts, smallest slack {worst:.4} against the scale-matched metric estimate \
             (against the slope estimate: smallest slack {slope_worst:.4}, {slope_misses} below zero)"
        ),
    )
}

const SUITE: [(&str, &str); 8] = [
    ("estimate", "fullshift.toml"),
    ("minkowski", "fullshift.toml"),
    ("estimate", "fullshift_snowflake.toml"),
    ("minkowski", "fullshift_snowflake.toml"),
    ("estimate", "golden_mean.toml"),
    ("scan-metrics", "scan.toml"),
    ("product", "product.toml"),
    ("verify", "verify.toml"),
];

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for (i, (sub, cfg)) in SUITE.iter().enumerate() {
        let d = dir.join(format!("{i}-{sub}-{cfg}"));
        let mut names: Vec<_> = fs::read_dir(&d)
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .filter(|n| n.ends_with(".csv"))
            .collect();
        names.sort();
        for n in names {
            out.push((
                format!("{}/{n}", d.file_name().unwrap().to_string_lossy()),
                fs::read(d.join(&n)).unwrap(),
            ));
        }
    }
    out
}

fn determinism(root: &Path) -> Verdict {
    let mut codes = Vec::new();
    for run in ["first", "second"] {
        for (i, (sub, cfg)) in SUITE.iter().enumerate() {
            codes.push(run_cli(
                sub,
                cfg,
                &root.join(run).join(format!("{i}-{sub}-{cfg}")),
            ));
        }
    }
    if codes.iter().any(|&c| c != 0) {
        return verdict(false, format!("exit codes {codes:?}"));
    }
    let (a, b) = (
        csv_files(&root.join("first")),
        csv_files(&root.join("second")),
    );
    let differing: Vec<&str> = a
        .iter()
        .zip(&b)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.as_str())
        .collect();
    verdict(
        a.len() == b.len() && differing.is_empty() && !a.is_empty(),
        format!(
            "{} CSV files compared, {} differ {differing:?}",
            a.len(),
            differing.len()
        ),
    )
}

fn main() {
    let root = tempfile::tempdir().unwrap();
    let mut failures = 0;
    let mut report = |id: usize, name: &str, limit: f64, f: &mut dyn FnMut() -> Verdict| {
        let start = Instant::now();
        let v = f();
        let secs = start.elapsed().as_secs_f64();
        let pass = v.pass && secs <= limit;
        if !pass {
            failures += 1;
        }
        println!(
            "[{}] criterion {id} {name}: {} ({secs:.1} s, limit {limit:.0} s)",
            if pass { "PASS" } else { "FAIL" },
            v.detail
        );
    };
    report(1, "sandwich chain", 60.0, &mut sandwich);
    report(2, "product counts", 120.0, &mut product);
    report(3, "transform exactness", 120.0, &mut transforms);
    report(4, "hybrid metric", 60.0, &mut hybrid);
    report(5, "full-shift bounds", 300.0, &mut fullshift);
    let mut base = None;
    report(6, "full-shift slope", 600.0, &mut || {
        let (v, s) = desk_fullshift(root.path());
        base = Some(s);
        v
    });
    let base = base.unwrap();
    report(7, "snowflake scaling", 600.0, &mut || {
        snowflake(root.path(), &base)
    });
    report(8, "Hausdorff below metric", 300.0, &mut hausdorff_ordering);
    report(9, "determinism", f64::INFINITY, &mut || {
        determinism(root.path())
    });
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
}

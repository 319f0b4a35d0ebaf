use std::path::Path;

use mdim::estimate::{
    katok_profile, mdim_hausdorff_estimate, mdim_metric_estimate, minkowski_dim_estimate,
    CountOptions, DimensionReport, FixedSource, HausdorffOptions, MetricPost, PeriodicShiftSource,
    ProductSource, ScaleGrid, ScaleSource,
};
use mdim::metric::{exponent_range, geometric_grid, DEFAULT_VALIDATION_PAIRS};
use mdim::report::{self, fmt_f64};
use mdim::systems::{Alphabet, FiniteSystem, Pattern, WeightFamily};
use mdim::verify::{desk_suite, CheckStatus};
use mdim::{CountMode, DistanceMatrix, Element, FolnerSequence, MetricTransform};
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, FiniteSection, ShiftSection, SystemSection};
use crate::{CliError, Run};

/// Offset applied before a transform so that `ρ < 1`.
pub const RESCALE_PAD: f64 = 1e-9;

/// A ready-to-sample system with its diameter bound and alphabet step.
pub struct Built {
    pub source: Box<dyn ScaleSource>,
    pub rho: f64,
    pub step: Option<f64>,
    pub alphabet: Option<Alphabet>,
}

fn cfg_err(key: &str) -> impl Fn(mdim::Error) -> CliError + '_ {
    move |e| CliError::at(key, e)
}

fn io_err(out: &Path) -> impl Fn(mdim::Error) -> CliError + '_ {
    move |e| CliError::Config {
        key: "output.dir".into(),
        message: format!("{}: {e}", out.display()),
    }
}

pub fn build(
    sys: &SystemSection,
    key: &str,
    config: &ExperimentConfig,
    folner: &FolnerSequence,
    mode: CountMode,
    post: MetricPost,
) -> Result<Built, CliError> {
    match sys {
        SystemSection::Shift(ShiftSection {
            alphabet,
            lambda,
            radius,
            tail_tol,
            forbidden,
        }) => {
            let alphabet =
                Alphabet::new(alphabet.clone()).map_err(cfg_err(&format!("{key}.alphabet")))?;
            let weights = WeightFamily::new(
                folner.rank(),
                *lambda,
                *radius,
                *tail_tol,
                alphabet.diameter(),
            )
            .map_err(cfg_err(key))?;
            let forbidden = forbidden
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let k = format!("{key}.forbidden[{i}]");
                    if p.offsets.iter().any(|o| o.len() != folner.rank()) {
                        return Err(CliError::Config {
                            key: k,
                            message: "offset rank differs from the Følner rank".into(),
                        });
                    }
                    if p.symbols.iter().any(|&s| s as usize >= alphabet.len()) {
                        return Err(CliError::Config {
                            key: k,
                            message: "symbol outside the alphabet".into(),
                        });
                    }
                    Pattern::new(
                        p.offsets.iter().map(|o| Element::new(o.clone())).collect(),
                        p.symbols.clone(),
                    )
                    .map_err(cfg_err(&k))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let rho = weights.total() * alphabet.diameter();
            let step = alphabet.step();
            let source = PeriodicShiftSource {
                alphabet: alphabet.clone(),
                weights,
                folner: folner.clone(),
                forbidden,
                mode,
                enumeration_budget: config.budgets.configurations as u128,
                post,
            };
            // surface window and domain errors before the grid runs
            source.system(folner.n_min()).map_err(cfg_err("folner"))?;
            Ok(Built {
                source: Box::new(source),
                rho,
                step,
                alphabet: Some(alphabet),
            })
        }
        SystemSection::Finite(FiniteSection { metric, generators }) => {
            let m = DistanceMatrix::from_rows(metric).map_err(cfg_err(&format!("{key}.metric")))?;
            let system = FiniteSystem::new(m, generators.clone())
                .map_err(cfg_err(&format!("{key}.generators")))?;
            if mdim::GSystem::rank(&system) != folner.rank() {
                return Err(CliError::Config {
                    key: format!("{key}.generators"),
                    message: "one generator per Følner rank required".into(),
                });
            }
            let rho = system.metric().diameter();
            let points = system.points();
            Ok(Built {
                source: Box::new(FixedSource {
                    system,
                    points,
                    folner: folner.clone(),
                    mode,
                    post,
                }),
                rho,
                step: None,
                alphabet: None,
            })
        }
    }
}

/// Rescale factor and grid mapping for a transform on a space of diameter bound `rho`.
fn transform_setup(
    t: &MetricTransform,
    rescale: bool,
    rho: f64,
    grid: &ScaleGrid,
    key: &str,
) -> Result<(MetricPost, ScaleGrid, f64), CliError> {
    let c = if rescale && rho >= 1.0 {
        1.0 / (rho + RESCALE_PAD)
    } else {
        1.0
    };
    t.validate(c * rho, DEFAULT_VALIDATION_PAIRS)
        .map_err(cfg_err(key))?;
    let mapped = grid.mapped_by(|e| t.eval(c * e)).map_err(cfg_err(key))?;
    let post = MetricPost {
        scale: (c != 1.0).then_some(c),
        transform: Some(t.clone()),
    };
    Ok((post, mapped, c))
}

fn count_options(config: &ExperimentConfig, mode: CountMode) -> CountOptions {
    CountOptions {
        node_budget: config.budgets.nodes,
        ..CountOptions::for_mode(mode)
    }
}

fn headline(label: &str, r: &DimensionReport) {
    println!(
        "{label}: upper {:.4}  lower {:.4}  primary {}  direction {}{}",
        r.upper,
        r.lower,
        r.primary.label(),
        r.direction.label(),
        if r.flags.is_empty() {
            String::new()
        } else {
            format!("  flags {}", r.flags.join("; "))
        }
    );
}

fn echo(config: &ExperimentConfig) -> Value {
    serde_json::to_value(config).expect("config serializes")
}

fn write(out: &Path, name: &str, text: &str) -> Result<(), CliError> {
    report::write_file(out, name, text).map_err(io_err(out))
}

pub fn estimate(run: &Run) -> Result<(), CliError> {
    let config = &run.config;
    let folner = config.folner()?;
    let grid = config.grid(&folner)?;
    let mode = config.mode();
    let system = config.system()?;
    let probe = build(
        system,
        "system",
        config,
        &folner,
        mode,
        MetricPost::default(),
    )?;
    grid.check_resolution(probe.step)
        .map_err(cfg_err("grid.epsilons"))?;
    let (built, grid_used, scale) = match &config.metric.transform {
        None => (probe, grid.clone(), 1.0),
        Some(t) => {
            let (post, mapped, c) = transform_setup(
                t,
                config.metric.rescale,
                probe.rho,
                &grid,
                "metric.transform",
            )?;
            (
                build(system, "system", config, &folner, mode, post)?,
                mapped,
                c,
            )
        }
    };
    let source = built.source.as_ref();
    let metric = mdim_metric_estimate(source, &grid_used, &count_options(config, mode))
        .map_err(cfg_err("grid"))?;
    headline("metric mean dimension", &metric);
    write(
        &run.out,
        "cells.csv",
        &report::cells_csv(&metric.cells).map_err(io_err(&run.out))?,
    )?;
    let mut result = json!({
        "grid_scale": scale,
        "grid_used": grid_used,
        "metric": report::report_summary(&metric),
    });
    if config.hausdorff.enabled {
        let h = &config.hausdorff;
        let opts = HausdorffOptions {
            floor: h.floor,
            phi: h.phi,
            balls: h.balls,
        };
        let rep =
            mdim_hausdorff_estimate(source, &grid_used, &opts).map_err(cfg_err("hausdorff"))?;
        headline("mean Hausdorff dimension", &rep);
        write(
            &run.out,
            "hausdorff.csv",
            &report::hausdorff_csv(&rep.cells, h.phi, h.floor).map_err(io_err(&run.out))?,
        )?;
        result["hausdorff"] = report::report_summary(&rep);
    }
    if config.katok.enabled {
        let k = &config.katok;
        let rep = katok_profile(source, &grid_used, k.measure, k.delta, config.budgets.nodes)
            .map_err(cfg_err("katok"))?;
        headline("Katok profile", &rep);
        write(
            &run.out,
            "katok.csv",
            &report::cells_csv(&rep.cells).map_err(io_err(&run.out))?,
        )?;
        result["katok"] = report::report_summary(&rep);
    }
    write(
        &run.out,
        "summary.json",
        &report::summary_json(&echo(config), &result).map_err(io_err(&run.out))?,
    )?;
    Ok(())
}

pub fn verify(run: &Run) -> Result<(), CliError> {
    let config = &run.config;
    let opts = config.verify.clone().unwrap_or_default();
    let rows = desk_suite(config.experiment.seed, &opts).map_err(cfg_err("verify"))?;
    println!(
        "{:<40} {:<15} {:>12}  statement",
        "check", "status", "margin"
    );
    for r in &rows {
        println!(
            "{:<40} {:<15} {:>12.4e}  {}",
            r.name,
            r.status.label(),
            r.margin,
            r.statement
        );
    }
    write(
        &run.out,
        "checks.csv",
        &report::checks_csv(&rows).map_err(io_err(&run.out))?,
    )?;
    write(
        &run.out,
        "summary.json",
        &report::summary_json(&echo(config), &rows).map_err(io_err(&run.out))?,
    )?;
    let failed: Vec<_> = rows
        .iter()
        .enumerate()
        .filter(|(_, r)| r.status == CheckStatus::Fail)
        .collect();
    for (i, r) in &failed {
        let body = json!({"check": r.name, "statement": r.statement, "note": r.note, "instance": r.witness});
        let text = serde_json::to_string_pretty(&body).expect("witness serializes");
        write(&run.out, &format!("counterexample_{i:02}.json"), &text)?;
    }
    if failed.is_empty() {
        Ok(())
    } else {
        let names: Vec<&str> = failed.iter().map(|(_, r)| r.name.as_str()).collect();
        Err(CliError::HardFailure(names.join(", ")))
    }
}

pub fn scan_metrics(run: &Run) -> Result<(), CliError> {
    let config = &run.config;
    let scan = config.scan.as_ref().ok_or_else(|| CliError::Config {
        key: "scan".into(),
        message: "missing section".into(),
    })?;
    let folner = config.folner()?;
    let grid = config.grid(&folner)?;
    let mode = config.mode();
    let system = config.system()?;
    let base = build(
        system,
        "system",
        config,
        &folner,
        mode,
        MetricPost::default(),
    )?;
    grid.check_resolution(base.step)
        .map_err(cfg_err("grid.epsilons"))?;
    let first = grid.indices[0];
    let plain = base.source.sample(first).map_err(cfg_err("system"))?.matrix;
    let opts = count_options(config, mode);
    let base_report =
        mdim_metric_estimate(base.source.as_ref(), &grid, &opts).map_err(cfg_err("grid"))?;
    headline("base", &base_report);

    let kgrid = geometric_grid(0.1, 1e-12, 24);
    let header = [
        "transform",
        "k_closed_form",
        "k_min",
        "k_max",
        "scale",
        "uniform_distance_lb",
        "upper",
        "lower",
        "bound_direction",
    ];
    let mut rows = vec![vec![
        "identity".to_string(),
        fmt_f64(1.0),
        fmt_f64(1.0),
        fmt_f64(1.0),
        fmt_f64(1.0),
        fmt_f64(0.0),
        fmt_f64(base_report.upper),
        fmt_f64(base_report.lower),
        base_report.direction.label().into(),
    ]];
    let mut members =
        vec![json!({"transform": "identity", "metric": report::report_summary(&base_report)})];
    for (i, t) in scan.transforms.iter().enumerate() {
        let key = format!("scan.transforms[{i}]");
        let (post, mapped, c) = transform_setup(t, config.metric.rescale, base.rho, &grid, &key)?;
        let built = build(system, "system", config, &folner, mode, post)?;
        let rep =
            mdim_metric_estimate(built.source.as_ref(), &mapped, &opts).map_err(cfg_err(&key))?;
        headline(&t.label(), &rep);
        let k = exponent_range(t, &kgrid).map_err(cfg_err(&key))?;
        // D(d, ζ∘d) over the sampled pairs at the first window bounds the true D from below
        let d_lb = plain
            .map(|v| c * v)
            .uniform_distance(&plain.map(|v| t.eval(c * v)));
        rows.push(vec![
            t.label(),
            t.closed_form_exponent().map(fmt_f64).unwrap_or_default(),
            fmt_f64(k.k_min),
            fmt_f64(k.k_max),
            fmt_f64(c),
            fmt_f64(d_lb),
            fmt_f64(rep.upper),
            fmt_f64(rep.lower),
            rep.direction.label().into(),
        ]);
        members.push(json!({
            "transform": t,
            "scale": c,
            "exponents": k,
            "uniform_distance_lb": d_lb,
            "metric": report::report_summary(&rep),
        }));
    }
    write(
        &run.out,
        "scan.csv",
        &report::rows_csv(&header, &rows).map_err(io_err(&run.out))?,
    )?;
    write(
        &run.out,
        "summary.json",
        &report::summary_json(&echo(config), &members).map_err(io_err(&run.out))?,
    )?;
    Ok(())
}

pub fn product(run: &Run) -> Result<(), CliError> {
    let config = &run.config;
    let section = config.product.as_ref().ok_or_else(|| CliError::Config {
        key: "product".into(),
        message: "missing section".into(),
    })?;
    let folner = config.folner()?;
    let grid = config.grid(&folner)?;
    let (mode_a, mode_b) = match config.mode() {
        CountMode::Sampled { seed, .. } => (
            CountMode::Sampled {
                n: section.factor_points,
                seed,
            },
            CountMode::Sampled {
                n: section.factor_points,
                seed: seed.wrapping_add(1),
            },
        ),
        m => (m, m),
    };
    let a = build(
        config.system()?,
        "system",
        config,
        &folner,
        mode_a,
        MetricPost::default(),
    )?;
    let b = build(
        &section.second,
        "product.second",
        config,
        &folner,
        mode_b,
        MetricPost::default(),
    )?;
    let prod = ProductSource {
        first: a.source.as_ref(),
        second: b.source.as_ref(),
    };
    let opts = count_options(config, mode_a);
    let ra = mdim_metric_estimate(a.source.as_ref(), &grid, &opts).map_err(cfg_err("system"))?;
    let rb =
        mdim_metric_estimate(b.source.as_ref(), &grid, &opts).map_err(cfg_err("product.second"))?;
    let rp = mdim_metric_estimate(&prod, &grid, &opts).map_err(cfg_err("product"))?;
    headline("first", &ra);
    headline("second", &rb);
    headline("product", &rp);
    let upper_margin = ra.upper + rb.upper - rp.upper;
    let lower_margin = rp.lower - (ra.lower + rb.lower);
    println!("upper(M×L) ≤ upper(M) + upper(L): margin {upper_margin:.4}");
    println!("lower(M×L) ≥ lower(M) + lower(L): margin {lower_margin:.4}");
    for (name, r) in [
        ("cells_first.csv", &ra),
        ("cells_second.csv", &rb),
        ("cells_product.csv", &rp),
    ] {
        write(
            &run.out,
            name,
            &report::cells_csv(&r.cells).map_err(io_err(&run.out))?,
        )?;
    }
    let result = json!({
        "first": report::report_summary(&ra),
        "second": report::report_summary(&rb),
        "product": report::report_summary(&rp),
        "upper_margin": upper_margin,
        "lower_margin": lower_margin,
    });
    write(
        &run.out,
        "summary.json",
        &report::summary_json(&echo(config), &result).map_err(io_err(&run.out))?,
    )?;
    Ok(())
}

pub fn minkowski(run: &Run) -> Result<(), CliError> {
    let config = &run.config;
    let eps = config.minkowski_scales()?;
    let matrix = match config.system()? {
        SystemSection::Shift(ShiftSection { alphabet, .. }) => Alphabet::new(alphabet.clone())
            .map_err(cfg_err("system.alphabet"))?
            .matrix()
            .clone(),
        SystemSection::Finite(FiniteSection { metric, .. }) => {
            DistanceMatrix::from_rows(metric).map_err(cfg_err("system.metric"))?
        }
    };
    let (matrix, eps) = match &config.metric.transform {
        None => (matrix, eps),
        Some(t) => {
            let rho = matrix.diameter();
            let c = if config.metric.rescale && rho >= 1.0 {
                1.0 / (rho + RESCALE_PAD)
            } else {
                1.0
            };
            t.validate(c * rho, DEFAULT_VALIDATION_PAIRS)
                .map_err(cfg_err("metric.transform"))?;
            let post = MetricPost {
                scale: (c != 1.0).then_some(c),
                transform: Some(t.clone()),
            };
            (
                post.apply(matrix),
                eps.iter().map(|&e| t.eval(c * e)).collect(),
            )
        }
    };
    let rep = minkowski_dim_estimate(&matrix, &eps, config.budgets.nodes)
        .map_err(cfg_err("minkowski"))?;
    println!(
        "box dimension: slope {:.4} (all scales {:.4}), ratio range [{:.4}, {:.4}]",
        rep.fit.slope, rep.full_fit.slope, rep.lower_ratio, rep.upper_ratio
    );
    write(
        &run.out,
        "minkowski.csv",
        &report::minkowski_csv(&rep).map_err(io_err(&run.out))?,
    )?;
    write(
        &run.out,
        "summary.json",
        &report::summary_json(&echo(config), &rep).map_err(io_err(&run.out))?,
    )?;
    Ok(())
}

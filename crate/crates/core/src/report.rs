//! Tabular and summary exports.
//!
//! Floats are written as `{:.16e}` (17 significant digits), which parses back
//! to the identical `f64`. Missing values are empty fields. Column orders:
//!
//! - cells: `epsilon,n,window_size,s,r,cov,katok,bound_direction,mode,seed`
//! - hausdorff: `epsilon,n,s_at_phi,phi,floor,mode,bisection_width`
//! - minkowski: `epsilon,count,bound_direction`
//! - checks: `name,status,margin,instances,statement,note`

use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::estimate::{Cell, CountCell, DimensionReport, MinkowskiReport};
use crate::packing::BoundDirection;
use crate::verify::CheckOutcome;
use crate::VERSION;

pub const CELLS_HEADER: [&str; 10] = [
    "epsilon",
    "n",
    "window_size",
    "s",
    "r",
    "cov",
    "katok",
    "bound_direction",
    "mode",
    "seed",
];
pub const HAUSDORFF_HEADER: [&str; 7] = [
    "epsilon",
    "n",
    "s_at_phi",
    "phi",
    "floor",
    "mode",
    "bisection_width",
];
pub const MINKOWSKI_HEADER: [&str; 3] = ["epsilon", "count", "bound_direction"];
pub const CHECKS_HEADER: [&str; 6] = ["name", "status", "margin", "instances", "statement", "note"];

pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:.16e}")
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn count(c: &Option<CountCell>) -> String {
    c.as_ref().map(|c| c.value.to_string()).unwrap_or_default()
}

/// Weakest direction over the counts present in a cell; `mixed` when both bounds occur.
pub fn cell_direction(cell: &Cell) -> &'static str {
    let dirs: Vec<BoundDirection> = [&cell.s, &cell.r, &cell.cov, &cell.katok]
        .iter()
        .filter_map(|c| c.as_ref().map(|c| c.direction))
        .collect();
    let lower = dirs.contains(&BoundDirection::Lower);
    let upper = dirs.contains(&BoundDirection::Upper);
    match (lower, upper) {
        (true, true) => "mixed",
        (true, false) => "lower",
        (false, true) => "upper",
        (false, false) => "exact",
    }
}

pub fn cells_csv(cells: &[Cell]) -> Result<String> {
    table(
        &CELLS_HEADER,
        cells.iter().map(|c| {
            vec![
                fmt_f64(c.epsilon),
                c.n.to_string(),
                c.window_size.to_string(),
                count(&c.s),
                count(&c.r),
                count(&c.cov),
                count(&c.katok),
                cell_direction(c).into(),
                c.mode.label().into(),
                c.seed.map(|s| s.to_string()).unwrap_or_default(),
            ]
        }),
    )
}

pub fn hausdorff_csv(cells: &[Cell], phi: f64, floor: f64) -> Result<String> {
    table(
        &HAUSDORFF_HEADER,
        cells.iter().filter_map(|c| {
            c.hausdorff.as_ref().map(|h| {
                vec![
                    fmt_f64(c.epsilon),
                    c.n.to_string(),
                    fmt_f64(h.value),
                    fmt_f64(phi),
                    fmt_f64(floor),
                    c.mode.label().into(),
                    fmt_f64(h.width),
                ]
            })
        }),
    )
}

pub fn minkowski_csv(m: &MinkowskiReport) -> Result<String> {
    table(
        &MINKOWSKI_HEADER,
        m.epsilons
            .iter()
            .zip(&m.counts)
            .zip(&m.directions)
            .map(|((e, c), d)| vec![fmt_f64(*e), c.to_string(), d.label().into()]),
    )
}

pub fn checks_csv(rows: &[CheckOutcome]) -> Result<String> {
    table(
        &CHECKS_HEADER,
        rows.iter().map(|o| {
            vec![
                o.name.clone(),
                o.status.label().into(),
                fmt_f64(o.margin),
                o.instances.to_string(),
                o.statement.clone(),
                o.note.clone(),
            ]
        }),
    )
}

/// Generic table with float columns formatted like the others.
pub fn rows_csv(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    table(header, rows.iter().cloned())
}

#[derive(Serialize)]
struct Summary<'a, T: Serialize> {
    tool: &'a str,
    version: &'a str,
    config: &'a Value,
    result: &'a T,
}

/// Pretty JSON with the config echo and tool version; no timestamps.
pub fn summary_json<T: Serialize>(config: &Value, result: &T) -> Result<String> {
    let s = Summary {
        tool: "mdim",
        version: VERSION,
        config,
        result,
    };
    let mut out =
        serde_json::to_string_pretty(&s).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    out.push('\n');
    Ok(out)
}

/// Summary block of a dimension report without the per-cell rows.
pub fn report_summary(r: &DimensionReport) -> Value {
    serde_json::json!({
        "kind": r.kind,
        "grid": r.grid,
        "primary": r.primary,
        "upper": r.upper,
        "lower": r.lower,
        "direction": r.direction,
        "flavor_spread": r.flavor_spread,
        "flags": r.flags,
        "flavors": r.flavors,
    })
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), contents)?;
    Ok(())
}

/// Parses a float field written by [`fmt_f64`].
pub fn parse_f64(field: &str) -> Option<f64> {
    match field {
        "" => None,
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        other => other.parse().ok(),
    }
}

/// Reads a CSV produced here back into header and string rows.
pub fn read_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(String::from)
        .collect();
    let rows = r
        .records()
        .map(|rec| {
            rec.map(|r| r.iter().map(String::from).collect())
                .map_err(csv_err)
        })
        .collect::<Result<_>>()?;
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimate::DimCell;
    use crate::packing::CountMode;

    fn cell(eps: f64, n: usize) -> Cell {
        let c = |v| {
            Some(CountCell {
                value: v,
                direction: BoundDirection::Exact,
                resolved: true,
            })
        };
        Cell {
            epsilon: eps,
            epsilon_used: eps,
            n,
            window_size: n,
            points: 10,
            s: c(4),
            r: c(3),
            cov: c(5),
            katok: None,
            hausdorff: Some(DimCell {
                value: 0.1 + eps,
                width: 1e-6,
                capped: false,
                direction: BoundDirection::Exact,
            }),
            hausdorff_ball: None,
            mode: CountMode::Exact,
            seed: None,
            errors: vec![],
        }
    }

    #[test]
    fn empty_grid_is_header_only() {
        assert_eq!(
            cells_csv(&[]).unwrap(),
            format!("{}\n", CELLS_HEADER.join(","))
        );
        assert_eq!(
            hausdorff_csv(&[], 1.0, 0.0).unwrap(),
            format!("{}\n", HAUSDORFF_HEADER.join(","))
        );
    }

    #[test]
    fn floats_round_trip() {
        let cells = vec![
            cell(0.1, 1),
            cell(1.0 / 3.0, 2),
            cell(std::f64::consts::PI / 10.0, 3),
        ];
        let (header, rows) = read_csv(&cells_csv(&cells).unwrap()).unwrap();
        assert_eq!(header, CELLS_HEADER);
        for (c, row) in cells.iter().zip(&rows) {
            assert_eq!(parse_f64(&row[0]), Some(c.epsilon));
            assert_eq!(row[6], "");
            assert_eq!(row[7], "exact");
        }
        let (_, rows) = read_csv(&hausdorff_csv(&cells, 1.0, 0.01).unwrap()).unwrap();
        for (c, row) in cells.iter().zip(&rows) {
            assert_eq!(
                parse_f64(&row[2]),
                Some(c.hausdorff.as_ref().unwrap().value)
            );
        }
    }

    #[test]
    fn mixed_direction() {
        let mut c = cell(0.1, 1);
        c.s.as_mut().unwrap().direction = BoundDirection::Lower;
        c.r.as_mut().unwrap().direction = BoundDirection::Upper;
        assert_eq!(cell_direction(&c), "mixed");
    }

    #[test]
    fn summary_has_version_and_echo() {
        let cfg = serde_json::json!({"seed": 3});
        let s = summary_json(&cfg, &vec![1, 2]).unwrap();
        let v: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["version"], VERSION);
        assert_eq!(v["config"]["seed"], 3);
    }
}

//! File formats. Numeric tables are CSV with a header row; metadata and
//! configs are JSON. Floats are written in Rust's shortest round-trip
//! form, so every value reads back bit-for-bit.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::chernoff::{ArgminConfig, CalibrationTable};
use crate::error::{Error, Result};
use crate::inverse::{EvaluationGrid, PosteriorDrawSet};
use crate::isotonic::StepCdf;
use crate::kernels::{load_tabulated, NoiseKernel};
use crate::measures::{DiscreteMeasure, DpPrior};
use crate::simulate::FigureBundle;
use crate::volterra::{RenewalEstimate, ResolventTable};

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    Ok(csv::Writer::from_path(path)?)
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    Ok(csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?)
}

fn parse_f64(field: &str, path: &Path, line: usize) -> Result<f64> {
    field.trim().parse().map_err(|_| {
        Error::input(format!(
            "{}:{line}: '{field}' is not a number",
            path.display()
        ))
    })
}

/// Reads every record as floats, checking the column count.
fn read_numeric(path: &Path, columns: usize) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut rdr = reader(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header.len() < columns {
        return Err(Error::input(format!(
            "{}: expected at least {columns} columns, found {}",
            path.display(),
            header.len()
        )));
    }
    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row = record
            .iter()
            .map(|f| parse_f64(f, path, i + 2))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path)?;
    serde_json::to_writer_pretty(file, value)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

/// `path` with `suffix` appended to its file name.
pub fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path
        .file_name()
        .map(|s| s.to_os_string())
        .unwrap_or_default();
    name.push(suffix);
    path.with_file_name(name)
}

/// One observation per line; an optional non-numeric header line and blank
/// lines are skipped. Only the first comma-separated field is read.
pub fn read_observations(path: &Path) -> Result<Vec<f64>> {
    let file = BufReader::new(File::open(path)?);
    let mut data = Vec::new();
    for (i, line) in file.lines().enumerate() {
        let line = line?;
        let field = line.split(',').next().unwrap_or("").trim();
        if field.is_empty() {
            continue;
        }
        match field.parse::<f64>() {
            Ok(v) => data.push(v),
            Err(_) if i == 0 => continue,
            Err(_) => {
                return Err(Error::input(format!(
                    "{}:{}: '{field}' is not a number",
                    path.display(),
                    i + 1
                )))
            }
        }
    }
    if data.is_empty() {
        return Err(Error::input(format!("{}: no observations", path.display())));
    }
    Ok(data)
}

pub fn write_observations(path: &Path, data: &[f64]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["z"])?;
    for z in data {
        w.write_record([z.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Two-column `(x, k)` table.
pub fn read_kernel_csv(path: &Path) -> Result<NoiseKernel> {
    let (_, rows) = read_numeric(path, 2)?;
    let (grid, values) = rows.iter().map(|r| (r[0], r[1])).unzip();
    load_tabulated(grid, values)
}

/// `x,p` and, with an oracle, `p_renewal`.
pub fn write_resolvent_csv(
    path: &Path,
    table: &ResolventTable,
    oracle: Option<&[RenewalEstimate]>,
) -> Result<()> {
    if let Some(o) = oracle {
        if o.len() != table.len() {
            return Err(Error::input(
                "oracle column does not match the resolvent grid",
            ));
        }
    }
    let mut w = writer(path)?;
    match oracle {
        Some(_) => w.write_record(["x", "p", "p_renewal"])?,
        None => w.write_record(["x", "p"])?,
    }
    for (n, p) in table.values().iter().enumerate() {
        let x = table.abscissa(n).to_string();
        match oracle {
            Some(o) => w.write_record([x, p.to_string(), o[n].value.to_string()])?,
            None => w.write_record([x, p.to_string()])?,
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a resolvent table written by [`write_resolvent_csv`]; the grid must
/// start at 0 and be uniform.
pub fn read_resolvent_csv(path: &Path) -> Result<ResolventTable> {
    let (_, rows) = read_numeric(path, 2)?;
    if rows.len() < 2 {
        return Err(Error::input(format!(
            "{}: resolvent needs two rows",
            path.display()
        )));
    }
    let horizon = rows.last().unwrap()[0];
    let step = horizon / (rows.len() - 1) as f64;
    for (n, row) in rows.iter().enumerate() {
        if (row[0] - n as f64 * step).abs() > 1e-9 * horizon.max(1.0) {
            return Err(Error::input(format!(
                "{}: resolvent grid is not uniform from 0 (row {})",
                path.display(),
                n + 2
            )));
        }
    }
    ResolventTable::from_values(horizon, rows.into_iter().map(|r| r[1]).collect())
}

/// `x,level` at every grid abscissa.
pub fn write_step_csv(path: &Path, step: &StepCdf) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["x", "level"])?;
    for (x, v) in step.xs().iter().zip(step.grid_values()) {
        w.write_record([x.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Sidecar metadata for a set of posterior draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawMeta {
    pub seed: u64,
    pub precision: f64,
    pub base_shape: f64,
    pub base_rate: f64,
    pub n: usize,
    pub draws: usize,
    pub grid_horizon: f64,
    pub grid_points: usize,
    pub kernel: Option<String>,
}

impl DrawMeta {
    pub fn for_set(set: &PosteriorDrawSet, kernel: Option<&NoiseKernel>) -> Self {
        DrawMeta {
            seed: set.seed,
            precision: set.prior.precision,
            base_shape: set.prior.base_shape,
            base_rate: set.prior.base_rate,
            n: set.sample_size,
            draws: set.draws.len(),
            grid_horizon: set.grid.horizon(),
            grid_points: set.grid.len(),
            kernel: kernel.map(|k| k.to_string()),
        }
    }
}

/// Draw matrix: header `draw,x₀,…,x_m`, one row per draw holding the
/// draw's value at every grid abscissa.
pub fn write_draws_csv(path: &Path, set: &PosteriorDrawSet) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["draw".to_string()];
    header.extend(set.grid.points().iter().map(|x| x.to_string()));
    w.write_record(&header)?;
    for (b, draw) in set.draws.iter().enumerate() {
        let mut row = vec![b.to_string()];
        row.extend(draw.grid_values().iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a draw matrix and its JSON sidecar back into a draw set.
pub fn read_draws_csv(path: &Path, meta: &DrawMeta) -> Result<PosteriorDrawSet> {
    let (header, rows) = read_numeric(path, 3)?;
    let xs = header[1..]
        .iter()
        .map(|h| parse_f64(h, path, 1))
        .collect::<Result<Vec<_>>>()?;
    let grid = EvaluationGrid::uniform(*xs.last().unwrap(), xs.len())?;
    if grid
        .points()
        .iter()
        .zip(&xs)
        .any(|(a, b)| (a - b).abs() > 1e-12 * grid.horizon())
    {
        return Err(Error::input(format!(
            "{}: header grid is not uniform from 0",
            path.display()
        )));
    }
    let draws = rows
        .iter()
        .map(|row| {
            if row.len() != xs.len() + 1 {
                return Err(Error::input(format!("{}: ragged draw row", path.display())));
            }
            StepCdf::new(grid.points().to_vec(), row[1..row.len() - 1].to_vec())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PosteriorDrawSet {
        grid,
        draws,
        seed: meta.seed,
        prior: DpPrior::new(meta.precision, meta.base_shape, meta.base_rate)?,
        sample_size: meta.n,
    })
}

/// `x,value` pairs.
pub fn write_curve_csv(path: &Path, xs: &[f64], values: &[f64], column: &str) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["x", column])?;
    for (x, v) in xs.iter().zip(values) {
        w.write_record([x.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Sidecar for persisted measures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureMeta {
    pub seed: u64,
    pub precision: f64,
    pub base_shape: f64,
    pub base_rate: f64,
    pub n: usize,
}

/// Long layout `draw,atom,weight` plus a `.json` sidecar.
pub fn write_measures_csv(
    path: &Path,
    measures: &[DiscreteMeasure],
    meta: &MeasureMeta,
) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["draw", "atom", "weight"])?;
    for (b, m) in measures.iter().enumerate() {
        for (a, wt) in m.atoms().iter().zip(m.weights()) {
            w.write_record([b.to_string(), a.to_string(), wt.to_string()])?;
        }
    }
    w.flush()?;
    write_json(&sidecar(path, ".json"), meta)
}

pub fn read_measures_csv(path: &Path) -> Result<(Vec<DiscreteMeasure>, MeasureMeta)> {
    let (_, rows) = read_numeric(path, 3)?;
    let mut measures = Vec::new();
    let mut current: Option<(usize, Vec<f64>, Vec<f64>)> = None;
    for row in rows {
        let draw = row[0] as usize;
        match current.as_mut() {
            Some((d, atoms, weights)) if *d == draw => {
                atoms.push(row[1]);
                weights.push(row[2]);
            }
            _ => {
                if let Some((_, atoms, weights)) = current.take() {
                    measures.push(DiscreteMeasure::new(atoms, weights)?);
                }
                current = Some((draw, vec![row[1]], vec![row[2]]));
            }
        }
    }
    if let Some((_, atoms, weights)) = current {
        measures.push(DiscreteMeasure::new(atoms, weights)?);
    }
    Ok((measures, read_json(&sidecar(path, ".json"))?))
}

/// Metadata written next to a calibration table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationMeta {
    pub seed: u64,
    pub config: ArgminConfig,
    pub samples: usize,
    pub mean: Option<f64>,
    /// Levels that appear in the published reference table.
    pub reference_levels: Vec<f64>,
}

/// `v,ainv` on the dense level grid.
pub fn write_calibration_csv(path: &Path, table: &CalibrationTable) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["v", "ainv"])?;
    for (v, q) in table.levels().iter().zip(table.quantiles()) {
        w.write_record([v.to_string(), q.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `v,ainv`; the sample count comes from the `.meta.json` sidecar
/// when present.
pub fn read_calibration_csv(path: &Path) -> Result<CalibrationTable> {
    let (_, rows) = read_numeric(path, 2)?;
    let (levels, quantiles) = rows.iter().map(|r| (r[0], r[1])).unzip();
    let meta = sidecar(path, ".meta.json");
    let count = if meta.exists() {
        read_json::<CalibrationMeta>(&meta)?.samples
    } else {
        0
    };
    let mut table = CalibrationTable::from_pairs(levels, quantiles, count)?;
    if meta.exists() {
        table.mean = read_json::<CalibrationMeta>(&meta)?.mean;
    }
    Ok(table)
}

/// Writes `<kernel>.csv` in long form (`role,draw,x,value`, roles
/// `prior_draw`, `posterior_draw`, `posterior_mean`, `iie`, `truth`) and
/// `<kernel>_bands.csv` (`x,truth,iie,posterior_mean,band_lower,band_upper`).
pub fn write_figure_bundle(dir: &Path, bundle: &FigureBundle) -> Result<(PathBuf, PathBuf)> {
    let stem: String = bundle
        .kernel
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect();
    let curves = dir.join(format!("{stem}.csv"));
    let bands = dir.join(format!("{stem}_bands.csv"));

    let mut w = writer(&curves)?;
    w.write_record(["role", "draw", "x", "value"])?;
    let mut emit = |role: &str, draw: usize, values: &[f64]| -> Result<()> {
        for (x, v) in bundle.xs.iter().zip(values) {
            w.write_record([role, &draw.to_string(), &x.to_string(), &v.to_string()])?;
        }
        Ok(())
    };
    for (b, d) in bundle.prior_draws.iter().enumerate() {
        emit("prior_draw", b, d)?;
    }
    for (b, d) in bundle.posterior_draws.iter().enumerate() {
        emit("posterior_draw", b, d)?;
    }
    emit("posterior_mean", 0, &bundle.posterior_mean)?;
    emit("iie", 0, &bundle.iie)?;
    emit("truth", 0, &bundle.truth)?;
    w.flush()?;

    let mut w = writer(&bands)?;
    w.write_record([
        "x",
        "truth",
        "iie",
        "posterior_mean",
        "band_lower",
        "band_upper",
    ])?;
    for j in 0..bundle.xs.len() {
        w.write_record([
            bundle.xs[j].to_string(),
            bundle.truth[j].to_string(),
            bundle.iie[j].to_string(),
            bundle.posterior_mean[j].to_string(),
            bundle.band_lower[j].to_string(),
            bundle.band_upper[j].to_string(),
        ])?;
    }
    w.flush()?;
    Ok((curves, bands))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inverse::iip_draws;
    use crate::kernels::builtin_kernel;
    use crate::measures::{draw_dp_posterior, empirical_measure};
    use crate::rng::stream;
    use crate::volterra::solve_resolvent;
    use proptest::prelude::*;
    use std::io::Write;

    #[test]
    fn observations_with_and_without_header() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.csv");
        std::fs::write(&a, "z\n1.5\n\n2.25\n").unwrap();
        assert_eq!(read_observations(&a).unwrap(), vec![1.5, 2.25]);
        let b = dir.path().join("b.txt");
        std::fs::write(&b, "0.5\n3\n").unwrap();
        assert_eq!(read_observations(&b).unwrap(), vec![0.5, 3.0]);
        let c = dir.path().join("c.txt");
        std::fs::write(&c, "1\nfoo\n").unwrap();
        assert!(read_observations(&c).is_err());
        let d = dir.path().join("d.txt");
        std::fs::write(&d, "z\n").unwrap();
        assert!(read_observations(&d).is_err());
    }

    #[test]
    fn resolvent_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let table = solve_resolvent(&builtin_kernel("halfnormal", &[]).unwrap(), 3.0, 301).unwrap();
        write_resolvent_csv(&path, &table, None).unwrap();
        let back = read_resolvent_csv(&path).unwrap();
        assert_eq!(back.values(), table.values());
        assert!((back.horizon() - 3.0).abs() < 1e-15);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("x,p\n0,"));
    }

    #[test]
    fn kernel_table_from_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("k.csv");
        let mut f = File::create(&path).unwrap();
        writeln!(f, "x,k\n0,2\n2,0").unwrap();
        let k = read_kernel_csv(&path).unwrap();
        assert_eq!(k.density(1.0), 1.0);
    }

    #[test]
    fn draw_matrix_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("draws.csv");
        let kernel = builtin_kernel("exp", &[]).unwrap();
        let p = solve_resolvent(&kernel, 6.0, 3001).unwrap();
        let data = [0.4, 1.1, 2.5, 3.3, 0.9];
        let grid = EvaluationGrid::for_data(&data, p.horizon(), 41).unwrap();
        let set = iip_draws(&data, &DpPrior::default(), &p, &grid, 5, 3).unwrap();
        write_draws_csv(&path, &set).unwrap();
        let meta = DrawMeta::for_set(&set, Some(&kernel));
        let back = read_draws_csv(&path, &meta).unwrap();
        assert_eq!(back.draws.len(), 5);
        for (a, b) in back.draws.iter().zip(&set.draws) {
            assert_eq!(a.levels(), b.levels());
        }
    }

    #[test]
    fn measures_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.csv");
        let data = [0.5, 1.0, 4.0];
        let ms: Vec<_> = (0..3)
            .map(|b| draw_dp_posterior(&DpPrior::default(), &data, &mut stream(1, &[b])).unwrap())
            .chain(std::iter::once(empirical_measure(&data).unwrap()))
            .collect();
        let meta = MeasureMeta {
            seed: 1,
            precision: 10.0,
            base_shape: 2.0,
            base_rate: 2.0,
            n: 3,
        };
        write_measures_csv(&path, &ms, &meta).unwrap();
        let (back, m) = read_measures_csv(&path).unwrap();
        assert_eq!(back, ms);
        assert_eq!(m, meta);
    }

    proptest! {
        #[test]
        fn calibration_csv_round_trip(mut samples in prop::collection::vec(0.0f64..=1.0, 1..200)) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("calib.csv");
            samples.push(0.5);
            let table = CalibrationTable::from_samples(&samples).unwrap();
            write_calibration_csv(&path, &table).unwrap();
            let back = read_calibration_csv(&path).unwrap();
            prop_assert_eq!(back.quantiles(), table.quantiles());
            prop_assert_eq!(back.levels(), table.levels());
        }
    }
}

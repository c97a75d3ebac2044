//! Sensitivity, landscape, and sample-complexity studies, each emitting a
//! CSV of plot-ready numbers.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use echoshape::error::{Error, Result};
use echoshape::forward::{frechet_columns, solve_forward, ScatterConfig};
use echoshape::geometry::StarCoeffs;
use echoshape::neural::{predict, train, TrainConfig};
use echoshape::rng;

use crate::bench::relative_error;
use crate::dataset::{generate, sample_coeffs};
use crate::presets::arch_for;

/// The reference trefoil-like shape r(t) = 1 + 0.3 cos(3t).
pub fn reference_shape() -> StarCoeffs {
    StarCoeffs::new(vec![1.0, 0.0, 0.0, 0.3, 0.0, 0.0, 0.0]).expect("reference shape is valid")
}

/// Norm of the measurement derivative along cos(j t) for j = 1..j_max,
/// scaled so the largest equals one. Illustrates which radius modes the
/// measurements can still see at a given wavenumber.
pub fn frechet_decay(k: f64, j_max: usize, n_t: usize, n_d: usize) -> Result<Vec<f64>> {
    if j_max == 0 {
        return Err(Error::Config("need at least one mode".into()));
    }
    let c = reference_shape();
    let cfg = ScatterConfig::full(k, n_t, n_d);
    let (_, psi) = solve_forward(&c, &cfg)?;
    let n = psi.nodes();
    let deltas: Vec<Vec<f64>> = (1..=j_max)
        .map(|j| {
            (0..n)
                .map(|i| (j as f64 * std::f64::consts::TAU * i as f64 / n as f64).cos())
                .collect()
        })
        .collect();
    let cols = frechet_columns(&c, &cfg, &psi, &deltas)?;
    let mut norms: Vec<f64> = (0..j_max)
        .map(|l| {
            (0..cols.rows()).map(|r| cols.at(r, l).norm_sqr()).sum::<f64>().sqrt()
        })
        .collect();
    let peak = norms.iter().cloned().fold(0.0, f64::max);
    if peak == 0.0 {
        return Err(Error::Domain("all derivative columns vanished".into()));
    }
    for v in &mut norms {
        *v /= peak;
    }
    Ok(norms)
}

pub fn write_frechet_csv(norms: &[f64], path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "j,scaled_magnitude")?;
    for (i, v) in norms.iter().enumerate() {
        writeln!(w, "{},{}", i + 1, v)?;
    }
    w.flush()?;
    Ok(())
}

/// One cell of the objective cross-section; `value` is empty where the
/// perturbed curve left the valid shape space.
#[derive(Clone, Copy, Debug)]
pub struct LandscapeCell {
    pub alpha: f64,
    pub beta: f64,
    pub value: Option<f64>,
}

/// Tabulates the data misfit along a random two-dimensional slice through
/// shape space around the reference shape. Higher wavenumbers produce
/// visibly rougher surfaces.
pub fn landscape(
    k: f64,
    grid: usize,
    extent: f64,
    seed: u64,
    n_t: usize,
    n_d: usize,
) -> Result<Vec<LandscapeCell>> {
    if grid < 2 {
        return Err(Error::Config("landscape grid needs at least 2 points per side".into()));
    }
    let cfg = ScatterConfig::full(k, n_t, n_d);
    // lift the reference shape into the M = 5 coefficient space
    let mut base = vec![0.0; 11];
    base[0] = 1.0;
    base[3] = 0.3;
    let c_meas = StarCoeffs::new(base.clone())?;
    let (u_base, _) = solve_forward(&c_meas, &cfg)?;
    let target = u_base.stacked();

    // two random slice directions; the constant term is zeroed so the
    // slice explores shape rather than overall scale
    let mut r = rng::stream(seed, "landscape-directions");
    let mut dirs = Vec::with_capacity(2);
    for _ in 0..2 {
        let mut v = sample_coeffs(5, &mut r)?.coeffs().to_vec();
        v[0] = 0.0;
        dirs.push(v);
    }

    let coord = |i: usize| -extent + 2.0 * extent * i as f64 / (grid - 1) as f64;
    let mut cells = Vec::with_capacity(grid * grid);
    for bi in 0..grid {
        let beta = coord(bi);
        for ai in 0..grid {
            let alpha = coord(ai);
            let perturbed: Vec<f64> = base
                .iter()
                .enumerate()
                .map(|(l, v)| v + alpha * dirs[0][l] + beta * dirs[1][l])
                .collect();
            let value = match StarCoeffs::new(perturbed) {
                Ok(c) if c.is_valid() => match solve_forward(&c, &cfg) {
                    Ok((u, _)) => {
                        let misfit: f64 = u
                            .stacked()
                            .iter()
                            .zip(&target)
                            .map(|(a, b)| (a - b).norm_sqr())
                            .sum::<f64>()
                            .sqrt();
                        Some(misfit)
                    }
                    Err(_) => None,
                },
                _ => None,
            };
            cells.push(LandscapeCell { alpha, beta, value });
        }
    }
    Ok(cells)
}

pub fn write_landscape_csv(cells: &[LandscapeCell], path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "alpha,beta,misfit")?;
    for cell in cells {
        match cell.value {
            Some(v) => writeln!(w, "{},{},{}", cell.alpha, cell.beta, v)?,
            None => writeln!(w, "{},{},", cell.alpha, cell.beta)?,
        }
    }
    w.flush()?;
    Ok(())
}

/// Settings for the sample-complexity sweep.
#[derive(Clone, Debug)]
pub struct ScalingOptions {
    /// Validation error target (relative coefficient error).
    pub eps_v: f64,
    pub seed: u64,
    pub n_val: usize,
    pub n_epoch: usize,
    pub batch_size: usize,
    /// Training set sizes to try, in increasing order.
    pub train_grid: Vec<usize>,
    /// Receivers and directions per side.
    pub dims: usize,
}

impl Default for ScalingOptions {
    fn default() -> Self {
        ScalingOptions {
            eps_v: 0.05,
            seed: 1,
            n_val: 500,
            n_epoch: 150,
            batch_size: 100,
            train_grid: vec![8, 16, 32, 64, 128, 256],
            dims: 100,
        }
    }
}

/// Result of one wavenumber's sweep: the smallest training set size that
/// met the validation target, or None if the budget ran out first.
#[derive(Clone, Debug)]
pub struct ScalingRow {
    pub k: f64,
    pub m: usize,
    pub threshold: Option<usize>,
    /// (train size, validation error) for every size tried.
    pub trace: Vec<(usize, f64)>,
}

/// For each wavenumber, grows the training set until a fixed-architecture
/// network meets the validation target. The mode count is tied to the
/// wavenumber as M = k - 10, matching the resolvable Fourier content.
pub fn scaling(k_list: &[f64], opt: &ScalingOptions) -> Result<Vec<ScalingRow>> {
    if opt.train_grid.is_empty() {
        return Err(Error::Config("the training size grid is empty".into()));
    }
    let mut rows = Vec::with_capacity(k_list.len());
    for &k in k_list {
        let m = (k - 10.0).round();
        if m < 1.0 || (k - 10.0 - m).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "wavenumber {k} does not give an integral mode count k - 10"
            )));
        }
        let m = m as usize;
        let cfg = ScatterConfig::full(k, opt.dims, opt.dims);
        let arch = arch_for(m, opt.dims, opt.dims, cfg.aperture);
        arch.validate()?;

        log::info!("scaling: k = {k}, M = {m}, generating {} validation samples", opt.n_val);
        let val = generate(&cfg, m, opt.n_val, opt.seed.wrapping_add(m as u64))?;

        let mut trace = Vec::new();
        let mut threshold = None;
        for &n_train in &opt.train_grid {
            let train_set =
                generate(&cfg, m, n_train, opt.seed.wrapping_add(1000 + n_train as u64))?;
            let set = train_set.training_set()?;
            let tc = TrainConfig {
                n_epoch: opt.n_epoch,
                batch_size: opt.batch_size,
                seed: opt.seed,
                ..TrainConfig::default()
            };
            let model = train(&set, &arch, &tc)?;

            let mut err_sum = 0.0;
            for (c_true, u) in &val.samples {
                let est = predict(&model, u)?;
                err_sum += relative_error(&est, c_true)?;
            }
            let err = err_sum / val.len() as f64;
            log::info!("scaling: k = {k}, N_train = {n_train} -> validation error {err:.4}");
            trace.push((n_train, err));
            if err <= opt.eps_v {
                threshold = Some(n_train);
                break;
            }
        }
        rows.push(ScalingRow { k, m, threshold, trace });
    }
    Ok(rows)
}

/// Writes the per-wavenumber thresholds, with the trace rows alongside.
/// A threshold above the budget is marked with a `>` prefix.
pub fn write_scaling_csv(rows: &[ScalingRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "M,k,n_train_threshold")?;
    for row in rows {
        match row.threshold {
            Some(t) => writeln!(w, "{},{},{}", row.m, row.k, t)?,
            None => {
                let cap = row.trace.last().map(|(n, _)| *n).unwrap_or(0);
                writeln!(w, "{},{},>{}", row.m, row.k, cap)?;
            }
        }
    }
    w.flush()?;

    let trace_path = path.with_extension("trace.csv");
    let mut w = BufWriter::new(File::create(trace_path)?);
    writeln!(w, "M,k,n_train,validation_error")?;
    for row in rows {
        for (n, e) in &row.trace {
            writeln!(w, "{},{},{},{}", row.m, row.k, n, e)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frechet_decay_is_normalized_and_sized() {
        let norms = frechet_decay(2.0, 6, 12, 12).unwrap();
        assert_eq!(norms.len(), 6);
        let max = norms.iter().cloned().fold(0.0, f64::max);
        assert_eq!(max, 1.0);
        assert!(norms.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn landscape_has_a_root_at_the_origin() {
        let cells = landscape(2.0, 5, 0.4, 3, 10, 10).unwrap();
        assert_eq!(cells.len(), 25);
        let origin = cells
            .iter()
            .find(|c| c.alpha == 0.0 && c.beta == 0.0)
            .expect("odd grid contains the origin");
        assert_eq!(origin.value, Some(0.0));
        for c in &cells {
            if let Some(v) = c.value {
                assert!(v >= 0.0);
            }
        }
    }

    #[test]
    fn scaling_rejects_bad_wavenumbers() {
        let opt = ScalingOptions::default();
        assert!(scaling(&[10.0], &opt).is_err());
        assert!(scaling(&[11.5], &opt).is_err());
    }

    #[test]
    fn scaling_trivial_target_stops_at_the_first_size() {
        // with a 100% error target the very first grid point qualifies
        let opt = ScalingOptions {
            eps_v: 1.0,
            n_val: 3,
            n_epoch: 2,
            batch_size: 4,
            train_grid: vec![4, 8],
            dims: 8,
            seed: 5,
        };
        let rows = scaling(&[11.0], &opt).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].m, 1);
        assert_eq!(rows[0].threshold, Some(4));
        assert_eq!(rows[0].trace.len(), 1);
    }
}

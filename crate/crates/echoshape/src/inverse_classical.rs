//! Classical reconstruction methods: regularized Gauss-Newton iteration on
//! the boundary coefficients and an adapted linear sampling method.
//!
//! Gauss-Newton linearizes the forward map around the current curve and
//! solves a stacked real least-squares problem for the coefficient update;
//! updates that would produce a self-intersecting radius are smoothed by a
//! Gaussian filter of decreasing width before being accepted. The linear
//! sampling method never linearizes: it tabulates an indicator function on
//! a sampling grid from one regularized solve per grid point, extracts a
//! family of level sets, and picks the level at which the sets stabilize.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::forward::{self, ScatterConfig, ScatterData};
use crate::geometry::{self, PointCloud, StarCoeffs};
use crate::linalg::{self, CMat, Mat};
use crate::specfun;

/// Gauss-Newton stopping and filtering parameters.
#[derive(Clone, Debug)]
pub struct GnParams {
    /// Maximum number of coefficient updates.
    pub n_max: usize,
    /// Update tolerance: stop once the previous step had norm below this.
    pub eps_s: f64,
    /// Residual tolerance in the stacked measurement norm.
    pub eps_r: f64,
    /// Gaussian filter retries for updates that break curve validity.
    pub max_filter_attempts: usize,
}

impl Default for GnParams {
    fn default() -> Self {
        GnParams { n_max: 20, eps_s: 5e-8, eps_r: 1e-6, max_filter_attempts: 10 }
    }
}

/// Why the Gauss-Newton loop stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    ResidualMet,
    UpdateSmall,
    MaxIters,
    FilterFailed,
}

/// Final iterate plus convergence diagnostics.
#[derive(Clone, Debug)]
pub struct GnResult {
    pub c_final: StarCoeffs,
    /// Number of coefficient updates applied.
    pub iterations: usize,
    /// Residual norm at each iterate, including the starting guess.
    pub residual_history: Vec<f64>,
    pub termination: Termination,
}

fn stacked_residual(target: &[Complex64], current: &[Complex64]) -> f64 {
    target
        .iter()
        .zip(current)
        .map(|(t, c)| (t - c).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// Solves the stacked real least-squares system for one update. Column
/// pivoted QR, falling back to a truncated SVD when the system is rank
/// deficient or too ill-conditioned for QR alone.
fn gn_step(jac: &CMat, target: &[Complex64], current: &[Complex64]) -> Vec<f64> {
    let rows = jac.rows();
    let cols = jac.cols();
    let a = Mat::from_fn(2 * rows, cols, |i, j| {
        if i < rows {
            jac.at(i, j).re
        } else {
            jac.at(i - rows, j).im
        }
    });
    let b: Vec<f64> = (0..2 * rows)
        .map(|i| {
            if i < rows {
                (target[i] - current[i]).re
            } else {
                (target[i - rows] - current[i - rows]).im
            }
        })
        .collect();
    match linalg::lstsq(&a, &b) {
        Ok(sol) if sol.cond < 1e12 => sol.x,
        _ => linalg::lstsq_svd(&a, &b, 1e-12),
    }
}

/// Applies the update, filtering it with progressively narrower Gaussian
/// windows while the resulting curve is invalid. Each attempt filters the
/// original update, not the previously filtered one. Returns the accepted
/// iterate, or None when every attempt leaves the curve invalid.
fn filtered_update(c: &StarCoeffs, dc: &[f64], attempts: usize) -> Option<StarCoeffs> {
    let m = c.max_mode();
    let apply = |delta: &[f64]| -> StarCoeffs {
        let coeffs: Vec<f64> = c.coeffs().iter().zip(delta).map(|(a, b)| a + b).collect();
        StarCoeffs::new(coeffs).expect("coefficient count preserved")
    };
    let direct = apply(dc);
    if direct.is_valid() {
        return Some(direct);
    }
    let mut sigma = 1.0;
    for _ in 0..attempts {
        let softened = geometry::gaussian_filter(dc, sigma, m);
        let candidate = apply(&softened);
        if candidate.is_valid() {
            return Some(candidate);
        }
        sigma /= 10.0;
    }
    None
}

/// Gauss-Newton iteration for the boundary coefficients, starting from
/// `c0`. Stops on a small residual, a small previous update, the iteration
/// cap, or an update that cannot be filtered into a valid curve.
pub fn gauss_newton(
    u_meas: &ScatterData,
    cfg: &ScatterConfig,
    c0: &StarCoeffs,
    p: &GnParams,
) -> Result<GnResult> {
    if u_meas.n_receivers() != cfg.n_receivers() || u_meas.n_directions() != cfg.n_directions() {
        return Err(Error::Dimension(format!(
            "measurements are {}x{} but the configuration is {}x{}",
            u_meas.n_receivers(),
            u_meas.n_directions(),
            cfg.n_receivers(),
            cfg.n_directions()
        )));
    }
    if !c0.is_valid() {
        return Err(Error::InvalidCurve("initial guess is not a valid curve".into()));
    }
    let target = u_meas.stacked();
    let mut c = c0.clone();
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut last_step = f64::INFINITY;
    let termination = loop {
        let (f_c, psi, system) = forward::solve_forward_full(&c, cfg)?;
        let current = f_c.stacked();
        let res = stacked_residual(&target, &current);
        history.push(res);
        if res <= p.eps_r {
            break Termination::ResidualMet;
        }
        if last_step <= p.eps_s {
            break Termination::UpdateSmall;
        }
        if iterations >= p.n_max {
            break Termination::MaxIters;
        }
        let jac = forward::frechet_matrix_cached(&system, cfg, &psi, c.max_mode())?;
        let dc = gn_step(&jac.0, &target, &current);
        last_step = dc.iter().map(|v| v * v).sum::<f64>().sqrt();
        match filtered_update(&c, &dc, p.max_filter_attempts) {
            Some(next) => {
                c = next;
                iterations += 1;
            }
            None => break Termination::FilterFailed,
        }
    };
    Ok(GnResult { c_final: c, iterations, residual_history: history, termination })
}

/// Linear sampling parameters: sampling grid, regularization, and the
/// level-selection schedule.
#[derive(Clone, Debug)]
pub struct LsmParams {
    /// Points per grid side.
    pub grid_size: usize,
    /// Half-width of the square sampling region.
    pub extent: f64,
    /// Tikhonov regularization parameter.
    pub alpha: f64,
    /// Candidate indicator levels, scanned in order.
    pub levels: Vec<f64>,
    /// Chamfer-spacing jump that marks the level where sets stabilize.
    pub jump_threshold: f64,
}

impl Default for LsmParams {
    fn default() -> Self {
        LsmParams {
            grid_size: 200,
            extent: 3.0,
            alpha: 1e-4,
            levels: (0..16).map(|j| 7.0 - 0.2 * j as f64).collect(),
            jump_threshold: 0.1,
        }
    }
}

/// Indicator values tabulated on a square uniform grid, x index fastest.
#[derive(Clone, Debug)]
pub struct IndicatorGrid {
    n: usize,
    extent: f64,
    values: Vec<f64>,
}

impl IndicatorGrid {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    /// Coordinate of the i-th grid line, shared by both axes.
    pub fn coord(&self, i: usize) -> f64 {
        -self.extent + 2.0 * self.extent * i as f64 / (self.n - 1) as f64
    }

    #[inline]
    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.n + ix]
    }
}

/// Tabulates the linear sampling indicator over the sampling grid. One SVD
/// of the scaled measurement matrix serves every grid point; the grid is
/// processed in column blocks so the per-point solves become matrix-matrix
/// products.
pub fn lsm_indicator(
    u_meas: &ScatterData,
    cfg: &ScatterConfig,
    p: &LsmParams,
) -> Result<IndicatorGrid> {
    if u_meas.n_receivers() != cfg.n_receivers() || u_meas.n_directions() != cfg.n_directions() {
        return Err(Error::Dimension(format!(
            "measurements are {}x{} but the configuration is {}x{}",
            u_meas.n_receivers(),
            u_meas.n_directions(),
            cfg.n_receivers(),
            cfg.n_directions()
        )));
    }
    if u_meas.n_receivers() < 2 || u_meas.n_directions() < 2 {
        return Err(Error::Dimension("need at least 2 receivers and 2 directions".into()));
    }
    let n_d = u_meas.n_directions();
    let mut a = u_meas.as_cmat().clone();
    a.scale(Complex64::new(std::f64::consts::TAU / n_d as f64, 0.0));
    let svd = linalg::svd(&a, false);
    let sigma_max = svd.sigma.first().copied().unwrap_or(0.0);
    if sigma_max == 0.0 {
        return Err(Error::Domain("measurement matrix is identically zero".into()));
    }
    let kept = svd.sigma.iter().take_while(|s| **s >= 1e-12 * sigma_max).count();
    // rows of U^H for the retained singular directions
    let ut = CMat::from_fn(kept, u_meas.n_receivers(), |i, j| svd.u.at(j, i).conj());
    let weights: Vec<f64> = svd.sigma[..kept]
        .iter()
        .map(|s| s / (s * s + p.alpha * p.alpha))
        .collect();

    let k = cfg.k;
    let amp = Complex64::from_polar(
        (std::f64::consts::PI * k / 2.0).sqrt(),
        std::f64::consts::FRAC_PI_4,
    );
    let n = p.grid_size;
    let total = n * n;
    let mut values = vec![0.0; total];
    let coord =
        |i: usize| -> f64 { -p.extent + 2.0 * p.extent * i as f64 / (n - 1) as f64 };

    const CHUNK: usize = 256;
    let mut start = 0;
    while start < total {
        let width = CHUNK.min(total - start);
        let phi = CMat::from_fn(cfg.n_receivers(), width, |r, c| {
            let idx = start + c;
            let x = coord(idx % n);
            let y = coord(idx / n);
            let rx = cfg.receivers[r];
            let dist = ((x - rx[0]).powi(2) + (y - rx[1]).powi(2)).sqrt();
            amp * specfun::h0_fast(k * dist)
        });
        let proj = ut.matmul(&phi);
        for c in 0..width {
            let mut norm_sq = 0.0;
            for (i, w) in weights.iter().enumerate() {
                norm_sq += (w * proj.at(i, c)).norm_sqr();
            }
            values[start + c] = 0.5 * norm_sq.ln();
        }
        start += width;
    }
    Ok(IndicatorGrid { n, extent: p.extent, values })
}

/// Extracts the set h = level by marching squares: every grid edge whose
/// endpoints straddle the level contributes one linearly interpolated
/// crossing point. Exact hits are not counted, so a constant grid yields
/// an empty cloud.
pub fn extract_level(grid: &IndicatorGrid, level: f64) -> PointCloud {
    let n = grid.n();
    let mut points = Vec::new();
    for iy in 0..n {
        for ix in 0..n {
            let a = grid.at(ix, iy) - level;
            if ix + 1 < n {
                let b = grid.at(ix + 1, iy) - level;
                if a * b < 0.0 {
                    let f = a / (a - b);
                    points.push([
                        grid.coord(ix) + f * (grid.coord(ix + 1) - grid.coord(ix)),
                        grid.coord(iy),
                    ]);
                }
            }
            if iy + 1 < n {
                let b = grid.at(ix, iy + 1) - level;
                if a * b < 0.0 {
                    let f = a / (a - b);
                    points.push([
                        grid.coord(ix),
                        grid.coord(iy) + f * (grid.coord(iy + 1) - grid.coord(iy)),
                    ]);
                }
            }
        }
    }
    PointCloud(points)
}

/// Angular bins used when a level set is reduced to its outer contour.
const OUTER_BINS: usize = 256;

/// Reduces a level-set cloud to the outermost point in each angular bin.
///
/// The indicator grows monotonically away from the obstacle, so within the
/// scanned level range every spurious component (interior resonance blobs,
/// ridge flanks) lies strictly inside the outermost crossing. Keeping one
/// outermost point per angle isolates the boundary contour and leaves a
/// cloud that is star-shaped by construction.
fn outer_contour(cloud: &PointCloud) -> PointCloud {
    let mut best: Vec<Option<[f64; 2]>> = vec![None; OUTER_BINS];
    for p in &cloud.0 {
        let theta = p[1].atan2(p[0]);
        let frac = (theta + std::f64::consts::PI) / std::f64::consts::TAU;
        let bin = ((frac * OUTER_BINS as f64) as usize).min(OUTER_BINS - 1);
        let r2 = p[0] * p[0] + p[1] * p[1];
        let keep = match best[bin] {
            Some(q) => r2 > q[0] * q[0] + q[1] * q[1],
            None => true,
        };
        if keep {
            best[bin] = Some(*p);
        }
    }
    PointCloud(best.into_iter().flatten().collect())
}

/// Full linear sampling reconstruction: tabulate the indicator, extract the
/// candidate level sets, reduce each to its outer contour, fit a star-shaped
/// boundary to every candidate, and keep the fit whose predicted scattered
/// field best matches the measurements.
///
/// The Chamfer spacing of consecutive contours bounds the candidate window:
/// a spacing jump larger than the threshold means the deeper contours
/// collapsed inward (the level dropped below the indicator valley that marks
/// the boundary), so deeper sets are excluded. Within the window, each valid
/// fit costs one forward solve and the smallest data misfit wins; fits that
/// self-intersect or whose forward problem fails are skipped. Empty level
/// sets are dropped.
pub fn lsm_reconstruct(
    u_meas: &ScatterData,
    cfg: &ScatterConfig,
    m: usize,
    p: &LsmParams,
) -> Result<StarCoeffs> {
    let grid = lsm_indicator(u_meas, cfg, p)?;
    let clouds: Vec<PointCloud> = p
        .levels
        .iter()
        .map(|c| extract_level(&grid, *c))
        .filter(|pc| !pc.is_empty())
        .map(|pc| outer_contour(&pc))
        .collect();
    if clouds.is_empty() {
        return Err(Error::NoLevelSet("every candidate level set is empty".into()));
    }
    let mut last = clouds.len() - 1;
    for (j, w) in clouds.windows(3).enumerate() {
        let d01 = geometry::chamfer(&w[0], &w[1])?;
        let d12 = geometry::chamfer(&w[1], &w[2])?;
        if (d01 - d12).abs() > p.jump_threshold && d12 > d01 {
            last = j + 1;
            break;
        }
    }
    let meas = u_meas.stacked();
    let mut best: Option<(f64, StarCoeffs)> = None;
    for cloud in &clouds[..=last] {
        let Ok(fit) = geometry::fit_star(cloud, m) else {
            continue;
        };
        if !fit.is_valid() {
            continue;
        }
        let Ok((u_fit, _)) = forward::solve_forward(&fit, cfg) else {
            continue;
        };
        let misfit = meas
            .iter()
            .zip(u_fit.stacked())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        if best.as_ref().is_none_or(|(b, _)| misfit < *b) {
            best = Some((misfit, fit));
        }
    }
    best.map(|(_, c)| c).ok_or_else(|| {
        Error::NoLevelSet("no candidate level produced a valid boundary".into())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn filter_keeps_benign_updates_untouched() {
        let c = StarCoeffs::unit_circle(2);
        let dc = vec![0.05, 0.01, -0.02, 0.03, 0.0];
        let out = filtered_update(&c, &dc, 10).unwrap();
        for (got, want) in out.coeffs().iter().zip([1.05, 0.01, -0.02, 0.03, 0.0]) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn filter_softens_a_recoverable_update() {
        // large high-mode update breaks validity; filtering shrinks modes
        // but never the constant term
        let c = StarCoeffs::unit_circle(3);
        let dc = vec![0.0, 0.0, 0.0, 2.5, 0.0, 0.0, 0.0];
        assert!(filtered_update(&c, &dc, 0).is_none());
        let out = filtered_update(&c, &dc, 10).unwrap();
        let coeffs = out.coeffs();
        assert!((coeffs[0] - 1.0).abs() < 1e-15, "constant term must not move");
        assert!(coeffs[3] < 2.5, "mode 3 must shrink");
        assert!(out.is_valid());
    }

    #[test]
    fn filter_gives_up_on_constant_collapse() {
        // the filter never attenuates the constant term, so an update that
        // drives the mean radius negative can never be repaired
        let c = StarCoeffs::unit_circle(2);
        let dc = vec![-2.0, 0.0, 0.0, 0.0, 0.0];
        assert!(filtered_update(&c, &dc, 10).is_none());
    }

    #[test]
    fn marching_squares_on_a_cone_finds_the_circle() {
        let n = 101;
        let extent = 2.0;
        let values: Vec<f64> = (0..n * n)
            .map(|idx| {
                let x = -extent + 2.0 * extent * (idx % n) as f64 / (n - 1) as f64;
                let y = -extent + 2.0 * extent * (idx / n) as f64 / (n - 1) as f64;
                (x * x + y * y).sqrt()
            })
            .collect();
        let grid = IndicatorGrid { n, extent, values };
        let cloud = extract_level(&grid, 1.0);
        assert!(cloud.len() > 50);
        let spacing = 2.0 * extent / (n - 1) as f64;
        for p in &cloud.0 {
            let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
            assert!((r - 1.0).abs() < spacing, "point at radius {r}");
        }
    }

    #[test]
    fn marching_squares_ignores_flat_grids() {
        let grid = IndicatorGrid { n: 10, extent: 1.0, values: vec![3.0; 100] };
        assert!(extract_level(&grid, 3.0).is_empty());
        assert!(extract_level(&grid, 2.0).is_empty());
    }
}

//! Exterior Helmholtz Dirichlet solver on star-shaped boundaries.
//!
//! The scattered field is computed from combined-field integral equations
//! discretized with the global trigonometric quadrature for logarithmic
//! kernels on smooth closed curves, which converges spectrally. Two
//! formulations share one assembly pass:
//!
//! * a direct equation whose unknown is the normal derivative of the total
//!   field, used for the measurements themselves, and
//! * an indirect (combined double plus single layer) equation used to solve
//!   the boundary value problems behind the shape-derivative matrix.
//!
//! Each system matrix is inverted once per boundary and reused across all
//! incident directions and derivative columns.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::{DiscretizedCurve, StarCoeffs};
use crate::linalg::CMat;
use crate::specfun;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Receiver/direction layout: a full ring or the upper half circle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Aperture {
    Full,
    Half,
}

/// Measurement geometry: wavenumber, receiver positions, and incident
/// plane-wave directions.
#[derive(Clone, Debug)]
pub struct ScatterConfig {
    pub k: f64,
    pub receivers: Vec<[f64; 2]>,
    pub directions: Vec<[f64; 2]>,
    pub aperture: Aperture,
}

impl ScatterConfig {
    /// Receivers on a full ring of the given radius and directions on the
    /// full unit circle, both at angles 2*pi*j/N for j = 1..N.
    pub fn full_with_radius(k: f64, n_t: usize, n_d: usize, radius: f64) -> Self {
        let ring = |count: usize, r: f64| -> Vec<[f64; 2]> {
            (1..=count)
                .map(|j| {
                    let a = std::f64::consts::TAU * j as f64 / count as f64;
                    [r * a.cos(), r * a.sin()]
                })
                .collect()
        };
        ScatterConfig {
            k,
            receivers: ring(n_t, radius),
            directions: ring(n_d, 1.0),
            aperture: Aperture::Full,
        }
    }

    /// Standard full-aperture setup with receivers at radius 10.
    pub fn full(k: f64, n_t: usize, n_d: usize) -> Self {
        Self::full_with_radius(k, n_t, n_d, 10.0)
    }

    /// Limited-aperture setup: receivers and directions on the upper half
    /// circle at angles pi*j/N for j = 1..N, receivers at radius 10.
    pub fn half(k: f64, n_t: usize, n_d: usize) -> Self {
        Self::half_with_radius(k, n_t, n_d, 10.0)
    }

    /// As `half` with an explicit receiver radius.
    pub fn half_with_radius(k: f64, n_t: usize, n_d: usize, radius: f64) -> Self {
        let arc = |count: usize, r: f64| -> Vec<[f64; 2]> {
            (1..=count)
                .map(|j| {
                    let a = std::f64::consts::PI * j as f64 / count as f64;
                    [r * a.cos(), r * a.sin()]
                })
                .collect()
        };
        ScatterConfig {
            k,
            receivers: arc(n_t, radius),
            directions: arc(n_d, 1.0),
            aperture: Aperture::Half,
        }
    }

    pub fn n_receivers(&self) -> usize {
        self.receivers.len()
    }

    pub fn n_directions(&self) -> usize {
        self.directions.len()
    }

    fn validate(&self) -> Result<()> {
        if !(self.k > 0.0) || !self.k.is_finite() {
            return Err(Error::Config(format!("wavenumber must be positive, got {}", self.k)));
        }
        if self.receivers.is_empty() || self.directions.is_empty() {
            return Err(Error::Config("receivers and directions must be nonempty".into()));
        }
        for d in &self.directions {
            let len = (d[0] * d[0] + d[1] * d[1]).sqrt();
            if (len - 1.0).abs() > 1e-12 {
                return Err(Error::Config(format!(
                    "incident directions must be unit vectors, got length {len}"
                )));
            }
        }
        Ok(())
    }

    /// Geometry checks against a specific obstacle: receivers strictly
    /// outside the bounding circle (error), and ideally several wavelengths
    /// away from it (warning only, to keep long-wavelength runs usable).
    fn validate_against(&self, r_max: f64) -> Result<()> {
        let wavelength = std::f64::consts::TAU / self.k;
        let mut tightest = f64::INFINITY;
        for x in &self.receivers {
            let dist = (x[0] * x[0] + x[1] * x[1]).sqrt() - r_max;
            if dist <= 0.0 {
                return Err(Error::Config(format!(
                    "receiver ({}, {}) is not outside the obstacle bounding circle (r_max = {r_max:.3})",
                    x[0], x[1]
                )));
            }
            tightest = tightest.min(dist);
        }
        if tightest < 5.0 * wavelength {
            log::warn!(
                "receivers only {tightest:.2} from the bounding circle; less than 5 wavelengths ({:.2}) at k = {}",
                5.0 * wavelength,
                self.k
            );
        }
        Ok(())
    }
}

/// Scattered-field measurements, receivers along rows and incident
/// directions along columns.
#[derive(Clone, Debug)]
pub struct ScatterData(CMat);

impl ScatterData {
    pub fn new(m: CMat) -> Self {
        ScatterData(m)
    }

    pub fn from_fn(n_t: usize, n_d: usize, f: impl FnMut(usize, usize) -> Complex64) -> Self {
        ScatterData(CMat::from_fn(n_t, n_d, f))
    }

    pub fn n_receivers(&self) -> usize {
        self.0.rows()
    }

    pub fn n_directions(&self) -> usize {
        self.0.cols()
    }

    #[inline]
    pub fn at(&self, receiver: usize, direction: usize) -> Complex64 {
        self.0.at(receiver, direction)
    }

    pub fn as_cmat(&self) -> &CMat {
        &self.0
    }

    /// Column-major flattening (receiver index fastest), the layout used
    /// for residual vectors and derivative matrix rows.
    pub fn stacked(&self) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(self.0.rows() * self.0.cols());
        for d in 0..self.0.cols() {
            for r in 0..self.0.rows() {
                out.push(self.0.at(r, d));
            }
        }
        out
    }

    pub fn max_abs_diff(&self, other: &ScatterData) -> f64 {
        assert_eq!(self.0.rows(), other.0.rows());
        assert_eq!(self.0.cols(), other.0.cols());
        let mut worst = 0.0_f64;
        for r in 0..self.0.rows() {
            for d in 0..self.0.cols() {
                worst = worst.max((self.at(r, d) - other.at(r, d)).norm());
            }
        }
        worst
    }
}

/// Normal derivative of the total field at the quadrature nodes, one column
/// per incident direction.
#[derive(Clone, Debug)]
pub struct BoundarySolution {
    psi: CMat,
}

impl BoundarySolution {
    pub fn nodes(&self) -> usize {
        self.psi.rows()
    }

    pub fn n_directions(&self) -> usize {
        self.psi.cols()
    }

    #[inline]
    pub fn at(&self, node: usize, direction: usize) -> Complex64 {
        self.psi.at(node, direction)
    }
}

/// Shape-derivative matrix: (N_t * N_d) stacked measurement rows by 2M+1
/// coefficient columns.
#[derive(Clone, Debug)]
pub struct FrechetMatrix(pub CMat);

/// Quadrature node count for a boundary of maximal radius `r_max`: at least
/// 16 points per wavelength along the circumscribing circle, floor of 256.
pub(crate) fn quadrature_size(k: f64, r_max: f64) -> usize {
    let by_frequency = 2 * (8.0 * k * r_max).ceil() as usize;
    by_frequency.max(256)
}

/// Quadrature weights R_d for the logarithmic kernel ln(4 sin^2((t-s)/2))
/// on an n-point uniform periodic grid; the weight for the pair (i, j) is
/// index (i - j) mod n.
fn kress_weights(n: usize) -> Vec<f64> {
    let half = n / 2;
    let mut r = Vec::with_capacity(n);
    for d in 0..n {
        let mut sum = 0.0;
        for m in 1..half {
            sum += (std::f64::consts::TAU * (m * d) as f64 / n as f64).cos() / m as f64;
        }
        let alt = if d % 2 == 0 { 1.0 } else { -1.0 };
        r.push(-2.0 * std::f64::consts::TAU / n as f64 * sum
            - std::f64::consts::TAU * 2.0 / (n * n) as f64 * alt);
    }
    r
}

/// Which boundary systems a `NystromSystem` should factor.
#[derive(Clone, Copy, PartialEq, Eq)]
pub(crate) enum Factor {
    Direct,
    Indirect,
    Both,
}

/// Assembled and factored boundary integral systems for one curve at one
/// wavenumber, plus the machinery to evaluate fields at receivers.
pub(crate) struct NystromSystem {
    pub curve: DiscretizedCurve,
    pub k: f64,
    eta: f64,
    direct_inv: Option<CMat>,
    indirect_inv: Option<CMat>,
}

impl NystromSystem {
    pub fn new(c: &StarCoeffs, k: f64, parts: Factor) -> Result<Self> {
        let n = quadrature_size(k, c.max_radius());
        Self::with_nodes(c, k, n, parts)
    }

    pub fn with_nodes(c: &StarCoeffs, k: f64, n: usize, parts: Factor) -> Result<Self> {
        let curve = c.discretize(n)?;
        let eta = k;
        let rw = kress_weights(n);
        let scale = std::f64::consts::TAU / n as f64;

        let want_direct = parts != Factor::Indirect;
        let want_indirect = parts != Factor::Direct;
        let mut a_dir = CMat::zeros(n, n);
        let mut a_ind = CMat::zeros(n, n);

        for i in 0..n {
            let zi = curve.points[i];
            let nu_i = curve.normals[i];
            for j in 0..n {
                let spj = curve.speed[j];
                if i == j {
                    let sp = spj;
                    // diagonal limits of the split kernels
                    let m1 = -sp / (4.0 * std::f64::consts::PI);
                    let m2 = Complex64::new(
                        -(EULER_GAMMA + (0.5 * k * sp).ln()) / std::f64::consts::TAU * sp,
                        0.25 * sp,
                    );
                    let d2 = curve.d2[i];
                    let l2 = (d2[0] * nu_i[0] + d2[1] * nu_i[1])
                        / (2.0 * std::f64::consts::TAU * sp);
                    let ieta = Complex64::new(0.0, eta);
                    let diag = Complex64::new(0.5, 0.0)
                        + rw[0] * (Complex64::new(0.0, 0.0) - ieta * m1)
                        + scale * (Complex64::new(l2, 0.0) - ieta * m2);
                    if want_direct {
                        a_dir.set(i, i, diag);
                    }
                    if want_indirect {
                        a_ind.set(i, i, diag);
                    }
                    continue;
                }
                let zj = curve.points[j];
                let dx = zi[0] - zj[0];
                let dy = zi[1] - zj[1];
                let rho = (dx * dx + dy * dy).sqrt();
                let (j0, j1, y0, y1) = specfun::jy01_fast(k * rho);

                // single layer, with the source arclength factor folded in
                let m1 = -j0 / (4.0 * std::f64::consts::PI) * spj;
                let m_full = Complex64::new(-0.25 * y0, 0.25 * j0) * spj;
                let dt = curve.t(i) - curve.t(j);
                let log_term = (4.0 * (0.5 * dt).sin().powi(2)).ln();
                let m2 = m_full - log_term * m1;

                let ieta_m1 = Complex64::new(0.0, eta * m1);
                let ieta_m2 = Complex64::new(0.0, eta) * m2;
                let rwij = rw[(i + n - j) % n];

                if want_indirect {
                    // double layer: source normal, unnormalized (carries speed)
                    let geom_src = (dx * curve.d1[j][1] - dy * curve.d1[j][0]) / rho;
                    let l1 = -k / (4.0 * std::f64::consts::PI) * j1 * geom_src;
                    let l_full = Complex64::new(-0.25 * k * y1, 0.25 * k * j1) * geom_src;
                    let l2 = l_full - log_term * l1;
                    a_ind.set(
                        i,
                        j,
                        rwij * (Complex64::new(l1, 0.0) - ieta_m1)
                            + scale * (l2 - ieta_m2),
                    );
                }
                if want_direct {
                    // adjoint double layer: target normal, source speed explicit
                    let geom_tgt = (dx * nu_i[0] + dy * nu_i[1]) / rho * spj;
                    let lp1 = k / (4.0 * std::f64::consts::PI) * j1 * geom_tgt;
                    let lp_full = Complex64::new(0.25 * k * y1, -0.25 * k * j1) * geom_tgt;
                    let lp2 = lp_full - log_term * lp1;
                    a_dir.set(
                        i,
                        j,
                        rwij * (Complex64::new(lp1, 0.0) - ieta_m1)
                            + scale * (lp2 - ieta_m2),
                    );
                }
            }
        }

        let direct_inv = if want_direct { Some(a_dir.invert()?) } else { None };
        let indirect_inv = if want_indirect { Some(a_ind.invert()?) } else { None };
        Ok(NystromSystem { curve, k, eta, direct_inv, indirect_inv })
    }

    /// Solves the direct equation for all incident directions; returns the
    /// node-by-direction matrix of normal derivatives of the total field.
    pub fn boundary_solution(&self, directions: &[[f64; 2]]) -> BoundarySolution {
        let n = self.curve.n;
        let rhs = CMat::from_fn(n, directions.len(), |i, l| {
            let d = directions[l];
            let z = self.curve.points[i];
            let nu = self.curve.normals[i];
            let phase = self.k * (z[0] * d[0] + z[1] * d[1]);
            let inc = Complex64::new(0.0, 1.0) * Complex64::from_polar(1.0, phase);
            inc * Complex64::new(self.k * (d[0] * nu[0] + d[1] * nu[1]) - self.eta, 0.0)
        });
        let psi = self
            .direct_inv
            .as_ref()
            .expect("direct system was factored")
            .matmul(&rhs);
        BoundarySolution { psi }
    }

    /// Single-layer evaluation matrix mapping psi to scattered field values
    /// at the receivers (the representation's minus sign included).
    pub fn eval_single(&self, receivers: &[[f64; 2]]) -> CMat {
        let n = self.curve.n;
        let scale = std::f64::consts::TAU / n as f64;
        CMat::from_fn(receivers.len(), n, |r, j| {
            let x = receivers[r];
            let z = self.curve.points[j];
            let rho = ((x[0] - z[0]).powi(2) + (x[1] - z[1]).powi(2)).sqrt();
            let h0 = specfun::h0_fast(self.k * rho);
            Complex64::new(0.25 * h0.im, -0.25 * h0.re) * (scale * self.curve.speed[j])
        })
    }

    /// Combined double-minus-single layer evaluation matrix mapping an
    /// indirect density to field values at the receivers.
    pub fn eval_combined(&self, receivers: &[[f64; 2]]) -> CMat {
        let n = self.curve.n;
        let scale = std::f64::consts::TAU / n as f64;
        CMat::from_fn(receivers.len(), n, |r, j| {
            let x = receivers[r];
            let z = self.curve.points[j];
            let dx = x[0] - z[0];
            let dy = x[1] - z[1];
            let rho = (dx * dx + dy * dy).sqrt();
            let w = self.k * rho;
            let (j0, j1, y0, y1) = specfun::jy01_fast(w);
            let nu = self.curve.normals[j];
            let geom = (dx * nu[0] + dy * nu[1]) / rho;
            let dl = Complex64::new(-0.25 * self.k * y1, 0.25 * self.k * j1) * geom;
            let sl = Complex64::new(-0.25 * y0, 0.25 * j0);
            (dl - Complex64::new(0.0, self.eta) * sl) * (scale * self.curve.speed[j])
        })
    }

    /// Solves the indirect boundary equation for a block of right-hand
    /// sides and evaluates the resulting fields at the receivers.
    pub fn radiate_dirichlet(&self, receivers: &[[f64; 2]], rhs: &CMat) -> CMat {
        let density = self
            .indirect_inv
            .as_ref()
            .expect("indirect system was factored")
            .matmul(rhs);
        self.eval_combined(receivers).matmul(&density)
    }
}

/// Computes scattered-field measurements for every receiver/direction pair
/// along with the boundary normal derivatives of the total field.
pub fn solve_forward(
    c: &StarCoeffs,
    cfg: &ScatterConfig,
) -> Result<(ScatterData, BoundarySolution)> {
    let n = quadrature_size(cfg.k, c.max_radius());
    solve_forward_sized(c, cfg, n)
}

/// As `solve_forward` with an explicit quadrature size, for convergence
/// studies.
pub fn solve_forward_sized(
    c: &StarCoeffs,
    cfg: &ScatterConfig,
    n: usize,
) -> Result<(ScatterData, BoundarySolution)> {
    cfg.validate()?;
    cfg.validate_against(c.max_radius())?;
    let system = NystromSystem::with_nodes(c, cfg.k, n, Factor::Direct)?;
    let psi = system.boundary_solution(&cfg.directions);
    let u = system.eval_single(&cfg.receivers).matmul(&psi.psi);
    Ok((ScatterData(u), psi))
}

/// As `solve_forward`, but assembles both factorizations and hands the
/// system back so the caller can reuse it for derivatives at the same
/// shape without paying for a second kernel assembly.
pub(crate) fn solve_forward_full(
    c: &StarCoeffs,
    cfg: &ScatterConfig,
) -> Result<(ScatterData, BoundarySolution, NystromSystem)> {
    cfg.validate()?;
    cfg.validate_against(c.max_radius())?;
    let system = NystromSystem::new(c, cfg.k, Factor::Both)?;
    let psi = system.boundary_solution(&cfg.directions);
    let u = system.eval_single(&cfg.receivers).matmul(&psi.psi);
    Ok((ScatterData(u), psi, system))
}

/// Derivative of the measurements with respect to each of the 2M+1 radius
/// coefficients, stacked in the measurement flattening order.
pub fn frechet_matrix(
    c: &StarCoeffs,
    cfg: &ScatterConfig,
    psi: &BoundarySolution,
) -> Result<FrechetMatrix> {
    let deltas = fourier_deltas(c.max_mode(), psi.nodes());
    Ok(FrechetMatrix(frechet_columns(c, cfg, psi, &deltas)?))
}

/// As `frechet_matrix` on an already assembled system.
pub(crate) fn frechet_matrix_cached(
    system: &NystromSystem,
    cfg: &ScatterConfig,
    psi: &BoundarySolution,
    max_mode: usize,
) -> Result<FrechetMatrix> {
    let deltas = fourier_deltas(max_mode, psi.nodes());
    Ok(FrechetMatrix(frechet_columns_on(system, cfg, psi, &deltas)?))
}

/// The trigonometric radius basis sampled at the quadrature nodes, one
/// perturbation per coefficient.
fn fourier_deltas(m: usize, n: usize) -> Vec<Vec<f64>> {
    (0..=2 * m)
        .map(|col| {
            (0..n)
                .map(|i| {
                    let t = std::f64::consts::TAU * i as f64 / n as f64;
                    if col == 0 {
                        1.0
                    } else if col <= m {
                        (col as f64 * t).cos()
                    } else {
                        ((col - m) as f64 * t).sin()
                    }
                })
                .collect()
        })
        .collect()
}

/// Fréchet derivative of the measurements along arbitrary radius
/// perturbations given by their node values; one output column per
/// perturbation, rows in measurement flattening order.
pub fn frechet_columns(
    c: &StarCoeffs,
    cfg: &ScatterConfig,
    psi: &BoundarySolution,
    deltas: &[Vec<f64>],
) -> Result<CMat> {
    cfg.validate()?;
    cfg.validate_against(c.max_radius())?;
    let n = quadrature_size(cfg.k, c.max_radius());
    if psi.nodes() != n {
        return Err(Error::Dimension(format!(
            "boundary solution has {} nodes, expected {n}",
            psi.nodes()
        )));
    }
    let system = NystromSystem::with_nodes(c, cfg.k, n, Factor::Indirect)?;
    frechet_columns_on(&system, cfg, psi, deltas)
}

/// Core of the Fréchet evaluation, shared by the assembling and cached
/// entry points.
fn frechet_columns_on(
    system: &NystromSystem,
    cfg: &ScatterConfig,
    psi: &BoundarySolution,
    deltas: &[Vec<f64>],
) -> Result<CMat> {
    let n = system.curve.n;
    if system.indirect_inv.is_none() {
        return Err(Error::Config(
            "system was assembled without the indirect factor".into(),
        ));
    }
    if psi.nodes() != n || psi.n_directions() != cfg.n_directions() {
        return Err(Error::Dimension(format!(
            "boundary solution is {}x{}, expected {}x{}",
            psi.nodes(),
            psi.n_directions(),
            n,
            cfg.n_directions()
        )));
    }
    for d in deltas {
        if d.len() != n {
            return Err(Error::Dimension(format!(
                "perturbation sampled at {} nodes, expected {n}",
                d.len()
            )));
        }
    }
    let n_d = cfg.n_directions();
    let n_t = cfg.n_receivers();
    let n_cols = deltas.len();

    // radial component of the outward normal at each node
    let radial: Vec<f64> = (0..n)
        .map(|i| {
            let t = system.curve.t(i);
            let nu = system.curve.normals[i];
            nu[0] * t.cos() + nu[1] * t.sin()
        })
        .collect();

    // boundary data for every (direction, perturbation) pair
    let rhs = CMat::from_fn(n, n_d * n_cols, |i, col| {
        let (d, l) = (col / n_cols, col % n_cols);
        -deltas[l][i] * radial[i] * psi.at(i, d)
    });
    let fields = system.radiate_dirichlet(&cfg.receivers, &rhs);

    let mut out = CMat::zeros(n_t * n_d, n_cols);
    for d in 0..n_d {
        for r in 0..n_t {
            for l in 0..n_cols {
                out.set(d * n_t + r, l, fields.at(r, d * n_cols + l));
            }
        }
    }
    Ok(out)
}

/// Analytic scattered field of a sound-soft disk of the given radius
/// centered at the origin, via the Fourier-Bessel series.
pub fn mie_circle(radius: f64, k: f64, cfg: &ScatterConfig) -> Result<ScatterData> {
    if !(radius > 0.0) {
        return Err(Error::Domain(format!("disk radius must be positive, got {radius}")));
    }
    cfg.validate()?;
    cfg.validate_against(radius)?;
    let n_terms = (k * radius).ceil() as u32 + 40;
    // ratio J_m(ka)/H_m(ka) for each mode
    let mut ratios = Vec::with_capacity(n_terms as usize + 1);
    for m in 0..=n_terms {
        let jm = specfun::bessel_j(m, k * radius)?;
        let hm = specfun::hankel1(m, k * radius)?;
        ratios.push(jm / hm);
    }
    let mut data = CMat::zeros(cfg.n_receivers(), cfg.n_directions());
    for (r, x) in cfg.receivers.iter().enumerate() {
        let rr = (x[0] * x[0] + x[1] * x[1]).sqrt();
        let phi = x[1].atan2(x[0]);
        let mut hanks = Vec::with_capacity(n_terms as usize + 1);
        for m in 0..=n_terms {
            hanks.push(specfun::hankel1(m, k * rr)?);
        }
        for (l, d) in cfg.directions.iter().enumerate() {
            let theta = d[1].atan2(d[0]);
            let mut sum = Complex64::new(0.0, 0.0);
            let mut i_pow = Complex64::new(1.0, 0.0);
            for m in 0..=n_terms as usize {
                let eps = if m == 0 { 1.0 } else { 2.0 };
                sum += eps * i_pow * ratios[m] * hanks[m] * (m as f64 * (phi - theta)).cos();
                i_pow *= Complex64::new(0.0, 1.0);
            }
            data.set(r, l, -sum);
        }
    }
    Ok(ScatterData(data))
}

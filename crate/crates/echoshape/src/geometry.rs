//! Star-shaped boundary curves: radius functions from truncated Fourier
//! coefficients, discretization with analytic derivatives, coefficient
//! filtering, Chamfer distance, and least-squares star fitting.

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};

/// Fourier coefficients of a star-shaped radius function, laid out as
/// `[c_0, c_1..c_M (cosine), c_{M+1}..c_{2M} (sine)]` so that
/// r(t) = c_0 + sum_m c_m cos(mt) + c_{m+M} sin(mt).
#[derive(Clone, Debug, PartialEq)]
pub struct StarCoeffs {
    m: usize,
    c: Vec<f64>,
}

impl StarCoeffs {
    /// Wraps a coefficient vector; the length must be odd (2M+1).
    pub fn new(c: Vec<f64>) -> Result<Self> {
        if c.is_empty() || c.len() % 2 == 0 {
            return Err(Error::Dimension(format!(
                "coefficient vector length must be odd (2M+1), got {}",
                c.len()
            )));
        }
        let m = (c.len() - 1) / 2;
        Ok(StarCoeffs { m, c })
    }

    /// Unit circle embedded in the mode-M coefficient space.
    pub fn unit_circle(m: usize) -> Self {
        let mut c = vec![0.0; 2 * m + 1];
        c[0] = 1.0;
        StarCoeffs { m, c }
    }

    /// Highest Fourier mode M.
    pub fn max_mode(&self) -> usize {
        self.m
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.c
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.c
    }

    /// Radius r(t; c), 2-pi periodic.
    pub fn radius(&self, t: f64) -> f64 {
        let mut r = self.c[0];
        for mode in 1..=self.m {
            let (s, co) = (mode as f64 * t).sin_cos();
            r += self.c[mode] * co + self.c[mode + self.m] * s;
        }
        r
    }

    /// First derivative r'(t).
    pub fn radius_d1(&self, t: f64) -> f64 {
        let mut r = 0.0;
        for mode in 1..=self.m {
            let mf = mode as f64;
            let (s, co) = (mf * t).sin_cos();
            r += mf * (-self.c[mode] * s + self.c[mode + self.m] * co);
        }
        r
    }

    /// Second derivative r''(t).
    pub fn radius_d2(&self, t: f64) -> f64 {
        let mut r = 0.0;
        for mode in 1..=self.m {
            let mf = mode as f64;
            let (s, co) = (mf * t).sin_cos();
            r -= mf * mf * (self.c[mode] * co + self.c[mode + self.m] * s);
        }
        r
    }

    /// Positivity of the radius on a 1024-point grid. Band-limited radius
    /// functions at the mode counts used here cannot slip a sign change
    /// between samples this dense.
    pub fn is_valid(&self) -> bool {
        self.min_radius() > 0.0
    }

    /// Minimum radius over the validation grid.
    pub fn min_radius(&self) -> f64 {
        const GRID: usize = 1024;
        (0..GRID)
            .map(|j| self.radius(std::f64::consts::TAU * j as f64 / GRID as f64))
            .fold(f64::INFINITY, f64::min)
    }

    /// Maximum radius over the validation grid.
    pub fn max_radius(&self) -> f64 {
        const GRID: usize = 1024;
        (0..GRID)
            .map(|j| self.radius(std::f64::consts::TAU * j as f64 / GRID as f64))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Evaluates the boundary at n equispaced parameter values with analytic
    /// first and second derivatives. n must be even and at least 16.
    pub fn discretize(&self, n: usize) -> Result<DiscretizedCurve> {
        if n < 16 || n % 2 != 0 {
            return Err(Error::Dimension(format!(
                "discretization size must be even and >= 16, got {n}"
            )));
        }
        if !self.is_valid() {
            return Err(Error::InvalidCurve(
                "radius function is not strictly positive".into(),
            ));
        }
        let mut points = Vec::with_capacity(n);
        let mut speed = Vec::with_capacity(n);
        let mut normals = Vec::with_capacity(n);
        let mut d1 = Vec::with_capacity(n);
        let mut d2 = Vec::with_capacity(n);
        for j in 0..n {
            let t = std::f64::consts::TAU * j as f64 / n as f64;
            let (s, co) = t.sin_cos();
            let r = self.radius(t);
            let r1 = self.radius_d1(t);
            let r2 = self.radius_d2(t);
            points.push([r * co, r * s]);
            let dx = r1 * co - r * s;
            let dy = r1 * s + r * co;
            let sp = (dx * dx + dy * dy).sqrt();
            d1.push([dx, dy]);
            d2.push([(r2 - r) * co - 2.0 * r1 * s, (r2 - r) * s + 2.0 * r1 * co]);
            speed.push(sp);
            // curve runs counterclockwise, so this rotation points outward
            normals.push([dy / sp, -dx / sp]);
        }
        Ok(DiscretizedCurve { n, points, speed, normals, d1, d2 })
    }
}

/// Boundary nodes at t_j = 2 pi j / n with derivative data.
#[derive(Clone, Debug)]
pub struct DiscretizedCurve {
    pub n: usize,
    pub points: Vec<[f64; 2]>,
    /// |Gamma'(t_j)|, the parametrization speed.
    pub speed: Vec<f64>,
    /// Unit outward normals.
    pub normals: Vec<[f64; 2]>,
    pub(crate) d1: Vec<[f64; 2]>,
    pub(crate) d2: Vec<[f64; 2]>,
}

impl DiscretizedCurve {
    /// Parameter value of node j.
    #[inline]
    pub fn t(&self, j: usize) -> f64 {
        std::f64::consts::TAU * j as f64 / self.n as f64
    }
}

/// Damps the Fourier modes of a coefficient update, leaving the constant
/// term alone: component m picks up the factor exp(-m^2 / (sigma^2 M^2)).
pub fn gaussian_filter(dc: &[f64], sigma: f64, m: usize) -> Vec<f64> {
    assert_eq!(dc.len(), 2 * m + 1, "filter input must have length 2M+1");
    assert!(sigma > 0.0, "filter width must be positive");
    if m == 0 {
        return dc.to_vec();
    }
    let denom = sigma * sigma * (m * m) as f64;
    let mut out = dc.to_vec();
    for mode in 1..=m {
        let factor = (-((mode * mode) as f64) / denom).exp();
        out[mode] *= factor;
        out[mode + m] *= factor;
    }
    out
}

/// An unordered set of 2D points.
#[derive(Clone, Debug, Default)]
pub struct PointCloud(pub Vec<[f64; 2]>);

impl PointCloud {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Symmetric Chamfer distance between two point clouds:
/// the average nearest-neighbor distance in each direction, halved.
pub fn chamfer(s1: &PointCloud, s2: &PointCloud) -> Result<f64> {
    if s1.is_empty() || s2.is_empty() {
        return Err(Error::Domain("Chamfer distance of an empty point cloud".into()));
    }
    let one_sided = |a: &PointCloud, b: &PointCloud| -> f64 {
        let mut total = 0.0;
        for p in &a.0 {
            let mut best = f64::INFINITY;
            for q in &b.0 {
                let (dx, dy) = (p[0] - q[0], p[1] - q[1]);
                let d = dx * dx + dy * dy;
                if d < best {
                    best = d;
                }
            }
            total += best.sqrt();
        }
        total / (2.0 * a.len() as f64)
    };
    Ok(one_sided(s1, s2) + one_sided(s2, s1))
}

/// Least-squares fit of a mode-M radius function to a point cloud:
/// minimizes sum_l (|p_l| - r(arg p_l; c))^2.
pub fn fit_star(points: &PointCloud, m: usize) -> Result<StarCoeffs> {
    let ncoef = 2 * m + 1;
    if points.len() < ncoef {
        return Err(Error::RankDeficient(format!(
            "{} points cannot determine {} coefficients",
            points.len(),
            ncoef
        )));
    }
    let mut radii = Vec::with_capacity(points.len());
    let mut angles = Vec::with_capacity(points.len());
    for p in &points.0 {
        let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
        if r == 0.0 {
            return Err(Error::Domain("cannot fit a star through the origin".into()));
        }
        radii.push(r);
        angles.push(p[1].atan2(p[0]));
    }
    let design = Mat::from_fn(points.len(), ncoef, |row, col| {
        if col == 0 {
            1.0
        } else if col <= m {
            (col as f64 * angles[row]).cos()
        } else {
            ((col - m) as f64 * angles[row]).sin()
        }
    });
    let sol = linalg::lstsq(&design, &radii)?;
    if sol.cond > 1e12 {
        return Err(Error::RankDeficient(format!(
            "angular samples leave the fit ill-determined (cond ~ {:.1e})",
            sol.cond
        )));
    }
    StarCoeffs::new(sol.x)
}

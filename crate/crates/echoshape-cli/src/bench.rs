//! Reconstruction dispatch, error metrics, and the five-method benchmark.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use echoshape::error::{Error, Result};
use echoshape::forward::{solve_forward, Aperture, ScatterConfig, ScatterData};
use echoshape::geometry::StarCoeffs;
use echoshape::inverse_classical::{gauss_newton, lsm_reconstruct, GnParams, LsmParams};
use echoshape::neural::{predict, CnnModel};
use echoshape::rng;

use crate::dataset::{add_noise, sample_coeffs};

/// Relative coefficient error in the Euclidean norm.
pub fn relative_error(est: &StarCoeffs, truth: &StarCoeffs) -> Result<f64> {
    let (a, b) = (est.coeffs(), truth.coeffs());
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "coefficient lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let norm: f64 = b.iter().map(|y| y * y).sum();
    if norm == 0.0 {
        return Err(Error::Domain("reference coefficients are all zero".into()));
    }
    Ok((diff / norm).sqrt())
}

/// The unit disk, the generic starting guess for plain Gauss-Newton.
pub fn unit_disk(m: usize) -> StarCoeffs {
    let mut c = vec![0.0; 2 * m + 1];
    c[0] = 1.0;
    StarCoeffs::new(c).expect("unit disk coefficients are valid")
}

/// The five reconstruction approaches under comparison.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Gn,
    Lsm,
    LsmRefined,
    Dl,
    DlRefined,
}

pub const ALL_METHODS: [Method; 5] =
    [Method::Gn, Method::Lsm, Method::LsmRefined, Method::Dl, Method::DlRefined];

impl Method {
    /// Column label used in report headers.
    pub fn label(self) -> &'static str {
        match self {
            Method::Gn => "GN",
            Method::Lsm => "LSM prediction",
            Method::LsmRefined => "LSM refined",
            Method::Dl => "DL prediction",
            Method::DlRefined => "DL refined",
        }
    }

    pub fn needs_model(self) -> bool {
        matches!(self, Method::Dl | Method::DlRefined)
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "gn" => Ok(Method::Gn),
            "lsm" => Ok(Method::Lsm),
            "lsm-refined" => Ok(Method::LsmRefined),
            "dl" => Ok(Method::Dl),
            "dl-refined" => Ok(Method::DlRefined),
            other => Err(format!(
                "unknown method '{other}' (expected gn, lsm, lsm-refined, dl, or dl-refined)"
            )),
        }
    }
}

/// Everything `reconstruct` needs besides the measurements.
pub struct ReconstructSettings<'a> {
    pub m: usize,
    pub gn: GnParams,
    pub lsm: LsmParams,
    pub model: Option<&'a CnnModel>,
}

impl<'a> ReconstructSettings<'a> {
    pub fn new(m: usize) -> Self {
        ReconstructSettings { m, gn: GnParams::default(), lsm: LsmParams::default(), model: None }
    }

    pub fn with_model(mut self, model: &'a CnnModel) -> Self {
        self.model = Some(model);
        self
    }
}

/// Runs one reconstruction method on one set of measurements. The refined
/// variants feed the predictor's estimate to Gauss-Newton as the starting
/// guess.
pub fn reconstruct(
    method: Method,
    u: &ScatterData,
    cfg: &ScatterConfig,
    s: &ReconstructSettings,
) -> Result<StarCoeffs> {
    let refine = |c0: &StarCoeffs| gauss_newton(u, cfg, c0, &s.gn).map(|r| r.c_final);
    match method {
        Method::Gn => refine(&unit_disk(s.m)),
        Method::Lsm => lsm_reconstruct(u, cfg, s.m, &s.lsm),
        Method::LsmRefined => {
            let c = lsm_reconstruct(u, cfg, s.m, &s.lsm)?;
            refine(&c)
        }
        Method::Dl => {
            let model = s.model.ok_or_else(|| Error::Config("method needs a model".into()))?;
            predict(model, u)
        }
        Method::DlRefined => {
            let model = s.model.ok_or_else(|| Error::Config("method needs a model".into()))?;
            let c = predict(model, u)?;
            refine(&c)
        }
    }
}

/// Benchmark configuration: scattering setup, test set size, and noise.
#[derive(Clone, Debug)]
pub struct BenchmarkParams {
    pub k: f64,
    pub m: usize,
    pub n_cases: usize,
    pub seed: u64,
    /// Mean multiplicative noise amplitude; 0 for noiseless data.
    pub noise_sigma: f64,
    pub aperture: Aperture,
    /// Receiver and direction count for the classical methods.
    pub classical_n: usize,
    pub radius: f64,
}

impl BenchmarkParams {
    pub fn new(k: f64, m: usize) -> Self {
        BenchmarkParams {
            k,
            m,
            n_cases: 50,
            seed: 1,
            noise_sigma: 0.0,
            aperture: Aperture::Full,
            classical_n: 200,
            radius: 10.0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CaseRecord {
    pub case: usize,
    pub truth: Vec<f64>,
    /// Relative errors in `ALL_METHODS` order; failures recorded as 1.0.
    pub errors: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchmarkReport {
    pub k: f64,
    pub m: usize,
    pub n_cases: usize,
    pub seed: u64,
    pub noise_sigma: f64,
    pub aperture: String,
    pub methods: Vec<String>,
    pub mean_relative_error: Vec<f64>,
    pub fraction_below_one_percent: Vec<f64>,
    pub cases: Vec<CaseRecord>,
}

/// Builds the measurement geometry for the requested aperture.
pub fn config_for(k: f64, n_t: usize, n_d: usize, aperture: Aperture, radius: f64) -> ScatterConfig {
    match aperture {
        Aperture::Full => ScatterConfig::full_with_radius(k, n_t, n_d, radius),
        Aperture::Half => ScatterConfig::half_with_radius(k, n_t, n_d, radius),
    }
}

/// Samples fresh test shapes and scores all five methods on each. The
/// classical methods run on a dense measurement grid; the network runs at
/// its training dimensions, so each case is solved forward twice. The
/// model must have been trained noiselessly; noise applies to the test
/// measurements only.
pub fn benchmark(p: &BenchmarkParams, model: &CnnModel) -> Result<BenchmarkReport> {
    if model.arch.m != p.m {
        return Err(Error::Config(format!(
            "model predicts {} modes but the benchmark asks for {}",
            model.arch.m, p.m
        )));
    }
    let cfg_class = config_for(p.k, p.classical_n, p.classical_n, p.aperture, p.radius);
    let cfg_dl = config_for(p.k, model.arch.n_t, model.arch.n_d, p.aperture, p.radius);
    let settings = ReconstructSettings::new(p.m).with_model(model);

    let mut shapes = rng::stream(p.seed, "benchmark-shapes");
    let mut cases = Vec::with_capacity(p.n_cases);
    for case in 0..p.n_cases {
        let truth = sample_coeffs(p.m, &mut shapes)?;
        let (mut u_class, _) = solve_forward(&truth, &cfg_class)?;
        let (mut u_dl, _) = solve_forward(&truth, &cfg_dl)?;
        if p.noise_sigma > 0.0 {
            let mut r = rng::stream(p.seed, &format!("benchmark-noise-{case}"));
            u_class = add_noise(&u_class, p.noise_sigma, &mut r);
            u_dl = add_noise(&u_dl, p.noise_sigma, &mut r);
        }

        let errors: Vec<f64> = ALL_METHODS
            .iter()
            .map(|&method| {
                let run = match method {
                    Method::Dl => predict(model, &u_dl),
                    // predicts from the network-sized data, then refines
                    // against the dense classical data
                    Method::DlRefined => predict(model, &u_dl).and_then(|c0| {
                        gauss_newton(&u_class, &cfg_class, &c0, &settings.gn).map(|r| r.c_final)
                    }),
                    _ => reconstruct(method, &u_class, &cfg_class, &settings),
                };
                match run.and_then(|c| relative_error(&c, &truth)) {
                    Ok(err) => err,
                    Err(e) => {
                        log::warn!("case {case}, {}: {e}; recording 100% error", method.label());
                        1.0
                    }
                }
            })
            .collect();
        cases.push(CaseRecord { case, truth: truth.coeffs().to_vec(), errors });
    }

    let n = p.n_cases.max(1) as f64;
    let mut mean = vec![0.0; ALL_METHODS.len()];
    let mut frac = vec![0.0; ALL_METHODS.len()];
    for rec in &cases {
        for (i, e) in rec.errors.iter().enumerate() {
            mean[i] += e / n;
            if *e < 0.01 {
                frac[i] += 1.0 / n;
            }
        }
    }
    Ok(BenchmarkReport {
        k: p.k,
        m: p.m,
        n_cases: p.n_cases,
        seed: p.seed,
        noise_sigma: p.noise_sigma,
        aperture: format!("{:?}", p.aperture).to_lowercase(),
        methods: ALL_METHODS.iter().map(|m| m.label().to_string()).collect(),
        mean_relative_error: mean,
        fraction_below_one_percent: frac,
        cases,
    })
}

/// Writes `cases.csv`, `summary.csv`, and `report.json` into `dir`.
pub fn write_report(report: &BenchmarkReport, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;

    let header: Vec<&str> = ALL_METHODS.iter().map(|m| m.label()).collect();

    let mut cases = BufWriter::new(File::create(dir.join("cases.csv"))?);
    writeln!(cases, "case,{}", header.join(","))?;
    for rec in &report.cases {
        let row: Vec<String> = rec.errors.iter().map(|e| e.to_string()).collect();
        writeln!(cases, "{},{}", rec.case, row.join(","))?;
    }
    cases.flush()?;

    let mut summary = BufWriter::new(File::create(dir.join("summary.csv"))?);
    writeln!(summary, "metric,{}", header.join(","))?;
    let means: Vec<String> = report.mean_relative_error.iter().map(|v| v.to_string()).collect();
    writeln!(summary, "mean relative error,{}", means.join(","))?;
    let fracs: Vec<String> =
        report.fraction_below_one_percent.iter().map(|v| v.to_string()).collect();
    writeln!(summary, "fraction below 1%,{}", fracs.join(","))?;
    summary.flush()?;

    let json = File::create(dir.join("report.json"))?;
    serde_json::to_writer_pretty(BufWriter::new(json), report)
        .map_err(|e| Error::Format(format!("could not encode the report: {e}")))?;
    Ok(())
}

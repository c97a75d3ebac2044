//! Shape sampling, forward dataset generation, multiplicative noise, and
//! the binary dataset file format.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use rand_core::RngCore;

use echoshape::error::{Error, Result};
use echoshape::forward::{solve_forward, Aperture, ScatterConfig, ScatterData};
use echoshape::geometry::StarCoeffs;
use echoshape::linalg::{CMat, Mat};
use echoshape::neural::TrainingSet;
use echoshape::rng;

const MAGIC: &[u8; 5] = b"ISDS1";
const VERSION: u32 = 1;
const REJECTION_CAP: usize = 10_000;

/// Draws one random shape: constant term uniform on [1, 1.2], each mode
/// pair a uniformly random phase with amplitude uniform on [0, 0.1].
/// Resamples until the radius stays positive.
pub fn sample_coeffs(m: usize, r: &mut impl RngCore) -> Result<StarCoeffs> {
    for _ in 0..REJECTION_CAP {
        let mut c = vec![0.0; 2 * m + 1];
        c[0] = rng::uniform(r, 1.0, 1.2);
        for j in 1..=m {
            let amp = rng::uniform(r, 0.0, 0.1);
            let theta = rng::uniform(r, 0.0, std::f64::consts::TAU);
            c[j] = amp * theta.cos();
            c[j + m] = amp * theta.sin();
        }
        if let Ok(sc) = StarCoeffs::new(c) {
            if sc.is_valid() {
                return Ok(sc);
            }
        }
    }
    Err(Error::Domain(format!(
        "no valid shape with M = {m} found in {REJECTION_CAP} attempts"
    )))
}

/// Multiplicative noise: each measurement entry is scaled by 1 + xi*e^{i chi}
/// with xi uniform on [0, 2 sigma] and chi uniform on [0, 2 pi], so the mean
/// relative amplitude is sigma.
#[derive(Clone, Copy, Debug)]
pub struct NoiseParams {
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0) {
            return Err(Error::Config(format!(
                "noise amplitude must be nonnegative, got {}",
                self.sigma
            )));
        }
        if self.sigma >= 1.0 {
            log::warn!("noise amplitude {} is at or above 1; entries can change sign", self.sigma);
        }
        Ok(())
    }

    pub fn apply(&self, data: &ScatterData) -> Result<ScatterData> {
        self.validate()?;
        let mut r = rng::stream(self.seed, "noise");
        Ok(add_noise(data, self.sigma, &mut r))
    }
}

/// Applies the multiplicative noise model with an externally managed rng.
/// Draw order follows the file layout: direction outer, receiver fastest.
pub fn add_noise(data: &ScatterData, sigma: f64, r: &mut impl RngCore) -> ScatterData {
    let (n_t, n_d) = (data.n_receivers(), data.n_directions());
    let mut out = CMat::zeros(n_t, n_d);
    for d in 0..n_d {
        for t in 0..n_t {
            let xi = rng::uniform(r, 0.0, 2.0 * sigma);
            let chi = rng::uniform(r, 0.0, std::f64::consts::TAU);
            let mult = Complex64::new(1.0, 0.0) + Complex64::from_polar(xi, chi);
            out.set(t, d, data.at(t, d) * mult);
        }
    }
    ScatterData::new(out)
}

/// Geometry and shape-space metadata stored alongside the samples.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetHeader {
    pub k: f64,
    pub m: usize,
    pub n_t: usize,
    pub n_d: usize,
    pub aperture: Aperture,
    pub radius: f64,
}

impl DatasetHeader {
    pub fn from_config(cfg: &ScatterConfig, m: usize) -> DatasetHeader {
        let r0 = cfg.receivers[0];
        DatasetHeader {
            k: cfg.k,
            m,
            n_t: cfg.n_receivers(),
            n_d: cfg.n_directions(),
            aperture: cfg.aperture,
            radius: (r0[0] * r0[0] + r0[1] * r0[1]).sqrt(),
        }
    }

    /// Rebuilds the measurement geometry the samples were generated with.
    pub fn config(&self) -> ScatterConfig {
        match self.aperture {
            Aperture::Full => ScatterConfig::full_with_radius(self.k, self.n_t, self.n_d, self.radius),
            Aperture::Half => ScatterConfig::half_with_radius(self.k, self.n_t, self.n_d, self.radius),
        }
    }
}

/// A list of (shape, measurements) pairs under one shared geometry.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub samples: Vec<(StarCoeffs, ScatterData)>,
}

/// Samples `count` shapes and solves the forward problem for each.
pub fn generate(cfg: &ScatterConfig, m: usize, count: usize, seed: u64) -> Result<Dataset> {
    let mut shapes = rng::stream(seed, "shapes");
    let mut samples = Vec::with_capacity(count);
    for idx in 0..count {
        let c = sample_coeffs(m, &mut shapes)?;
        let (u, _) = solve_forward(&c, cfg)
            .map_err(|e| Error::Domain(format!("forward solve failed at sample {idx}: {e}")))?;
        samples.push((c, u));
    }
    Ok(Dataset { header: DatasetHeader::from_config(cfg, m), samples })
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    /// Repackages the samples for the trainer: real parts of the
    /// measurements as inputs, coefficient vectors as targets.
    pub fn training_set(&self) -> Result<TrainingSet> {
        let raw: Vec<Mat> = self
            .samples
            .iter()
            .map(|(_, u)| {
                Mat::from_fn(u.n_receivers(), u.n_directions(), |i, j| u.at(i, j).re)
            })
            .collect();
        let targets = self.samples.iter().map(|(c, _)| c.coeffs().to_vec()).collect();
        TrainingSet::from_raw(&raw, targets)
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn save(&self, w: &mut impl Write) -> io::Result<()> {
        let h = &self.header;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&h.k.to_le_bytes())?;
        for v in [h.m as u32, h.n_t as u32, h.n_d as u32, self.samples.len() as u32] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&[match h.aperture {
            Aperture::Full => 0u8,
            Aperture::Half => 1u8,
        }])?;
        w.write_all(&h.radius.to_le_bytes())?;
        for (c, u) in &self.samples {
            for v in c.coeffs() {
                w.write_all(&v.to_le_bytes())?;
            }
            for d in 0..h.n_d {
                for t in 0..h.n_t {
                    let z = u.at(t, d);
                    w.write_all(&z.re.to_le_bytes())?;
                    w.write_all(&z.im.to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn save_to(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = BufWriter::new(File::create(path)?);
        self.save(&mut f)?;
        Ok(())
    }

    pub fn load(r: &mut impl Read) -> Result<Dataset> {
        let mut magic = [0u8; 5];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad magic; not a dataset file".into()));
        }
        let version = read_u32(r)?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported dataset version {version}")));
        }
        let k = read_f64(r)?;
        let m = read_u32(r)? as usize;
        let n_t = read_u32(r)? as usize;
        let n_d = read_u32(r)? as usize;
        let count = read_u32(r)? as usize;
        let mut ap = [0u8; 1];
        r.read_exact(&mut ap)?;
        let aperture = match ap[0] {
            0 => Aperture::Full,
            1 => Aperture::Half,
            other => return Err(Error::Format(format!("unknown aperture tag {other}"))),
        };
        let radius = read_f64(r)?;
        if !(k > 0.0) || n_t == 0 || n_d == 0 || !(radius > 0.0) {
            return Err(Error::Format("dataset header fails basic sanity checks".into()));
        }
        let header = DatasetHeader { k, m, n_t, n_d, aperture, radius };

        let mut samples = Vec::with_capacity(count);
        for idx in 0..count {
            let mut coeffs = vec![0.0; 2 * m + 1];
            for v in &mut coeffs {
                *v = read_f64(r)?;
            }
            let c = StarCoeffs::new(coeffs)
                .map_err(|e| Error::Format(format!("sample {idx} has bad coefficients: {e}")))?;
            if !c.is_valid() {
                return Err(Error::Format(format!("sample {idx} is not a valid curve")));
            }
            let mut u = CMat::zeros(n_t, n_d);
            for d in 0..n_d {
                for t in 0..n_t {
                    let re = read_f64(r)?;
                    let im = read_f64(r)?;
                    u.set(t, d, Complex64::new(re, im));
                }
            }
            samples.push((c, ScatterData::new(u)));
        }
        // the declared count must account for the entire payload
        let mut probe = [0u8; 1];
        match r.read(&mut probe)? {
            0 => Ok(Dataset { header, samples }),
            _ => Err(Error::Format("trailing data after the declared sample count".into())),
        }
    }

    pub fn load_from(path: impl AsRef<Path>) -> Result<Dataset> {
        let mut f = BufReader::new(File::open(path)?);
        Dataset::load(&mut f)
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampled_shapes_respect_the_distribution_bounds() {
        let mut r = rng::stream(3, "shape-test");
        for _ in 0..50 {
            let c = sample_coeffs(4, &mut r).unwrap();
            let v = c.coeffs();
            assert!((1.0..=1.2).contains(&v[0]));
            for j in 1..=4 {
                let amp = (v[j] * v[j] + v[j + 4] * v[j + 4]).sqrt();
                assert!(amp <= 0.1 + 1e-15, "mode {j} amplitude {amp}");
            }
            assert!(c.is_valid());
        }
        // M = 0 leaves only the constant term
        let c = sample_coeffs(0, &mut r).unwrap();
        assert_eq!(c.coeffs().len(), 1);
    }

    #[test]
    fn same_seed_reproduces_the_sample() {
        let a = sample_coeffs(6, &mut rng::stream(11, "s")).unwrap();
        let b = sample_coeffs(6, &mut rng::stream(11, "s")).unwrap();
        assert_eq!(a.coeffs(), b.coeffs());
    }

    #[test]
    fn zero_noise_is_the_identity() {
        let data = ScatterData::from_fn(5, 4, |t, d| Complex64::new(t as f64, d as f64 - 1.5));
        let np = NoiseParams { sigma: 0.0, seed: 9 };
        let noisy = np.apply(&data).unwrap();
        assert_eq!(noisy.max_abs_diff(&data), 0.0);
    }

    #[test]
    fn noise_amplitude_concentrates_at_sigma() {
        let sigma = 0.07;
        let data = ScatterData::from_fn(1000, 1000, |_, _| Complex64::new(1.0, 0.0));
        let mut r = rng::stream(21, "noise-conc");
        let noisy = add_noise(&data, sigma, &mut r);
        let n = 1_000_000.0;
        let mean: f64 = (0..1000)
            .map(|d| (0..1000).map(|t| (noisy.at(t, d) - data.at(t, d)).norm()).sum::<f64>())
            .sum::<f64>()
            / n;
        // E|mult - 1| = E xi = sigma, sd(xi) = sigma/sqrt(3)
        let band = 3.0 * sigma / 3.0_f64.sqrt() / 1e3;
        assert!(
            (mean - sigma).abs() < band,
            "empirical mean {mean} outside {sigma} +- {band}"
        );
    }

    #[test]
    fn same_noise_seed_reproduces_noise() {
        let data = ScatterData::from_fn(8, 8, |t, d| Complex64::new(0.3 * t as f64, -(d as f64)));
        let np = NoiseParams { sigma: 0.1, seed: 5 };
        let a = np.apply(&data).unwrap();
        let b = np.apply(&data).unwrap();
        assert_eq!(a.max_abs_diff(&b), 0.0);
        assert!(np.apply(&a).unwrap().max_abs_diff(&a) > 0.0);
    }

    #[test]
    fn negative_sigma_is_rejected() {
        let data = ScatterData::from_fn(2, 2, |_, _| Complex64::new(1.0, 0.0));
        assert!(NoiseParams { sigma: -0.1, seed: 0 }.apply(&data).is_err());
    }

    #[test]
    fn dataset_roundtrip_is_bitwise() {
        let cfg = ScatterConfig::full(2.0, 6, 5);
        let set = generate(&cfg, 2, 3, 42).unwrap();
        let mut buf = Vec::new();
        set.save(&mut buf).unwrap();
        let back = Dataset::load(&mut buf.as_slice()).unwrap();
        assert_eq!(back.header, set.header);
        assert_eq!(back.len(), 3);
        for ((c_a, u_a), (c_b, u_b)) in set.samples.iter().zip(&back.samples) {
            assert_eq!(c_a.coeffs(), c_b.coeffs());
            assert_eq!(u_a.max_abs_diff(u_b), 0.0);
            for (x, y) in u_a.stacked().iter().zip(u_b.stacked()) {
                assert!(x.re.to_bits() == y.re.to_bits() && x.im.to_bits() == y.im.to_bits());
            }
        }
        // header geometry reconstructs the generating config
        let rebuilt = back.header.config();
        assert_eq!(rebuilt.receivers, cfg.receivers);
        assert_eq!(rebuilt.directions, cfg.directions);
    }

    #[test]
    fn empty_dataset_roundtrips() {
        let cfg = ScatterConfig::half(3.0, 4, 4);
        let set = generate(&cfg, 1, 0, 1).unwrap();
        let mut buf = Vec::new();
        set.save(&mut buf).unwrap();
        let back = Dataset::load(&mut buf.as_slice()).unwrap();
        assert!(back.is_empty());
        assert_eq!(back.header.aperture, Aperture::Half);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let cfg = ScatterConfig::full(2.0, 4, 4);
        let set = generate(&cfg, 1, 2, 7).unwrap();
        let mut buf = Vec::new();
        set.save(&mut buf).unwrap();

        let mut bad_magic = buf.clone();
        bad_magic[0] = b'Z';
        assert!(Dataset::load(&mut bad_magic.as_slice()).is_err());

        // truncated payload: header promises more samples than present
        let short = &buf[..buf.len() - 16];
        assert!(Dataset::load(&mut &short[..]).is_err());

        // trailing garbage after the declared count
        let mut long = buf.clone();
        long.extend_from_slice(&[0u8; 8]);
        assert!(Dataset::load(&mut long.as_slice()).is_err());
    }
}

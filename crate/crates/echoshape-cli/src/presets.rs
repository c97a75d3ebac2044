//! Network and dataset hyperparameters per maximal Fourier mode.

use echoshape::forward::Aperture;
use echoshape::neural::{CnnArch, PadMode};

/// One row of the hyperparameter table: measurement grid, training set
/// size, schedule length, and network widths.
#[derive(Clone, Copy, Debug)]
pub struct Preset {
    pub n_t: usize,
    pub n_d: usize,
    pub n_train: usize,
    pub n_epoch: usize,
    pub n_c: usize,
    pub p: usize,
    pub n1: usize,
    pub n2: usize,
}

/// Reference hyperparameters for a given mode count. The three studied
/// configurations are tabulated; other mode counts fall back to the same
/// scaling rules (channels track M, hidden widths are 50M and 10M).
pub fn preset(m: usize) -> Preset {
    match m {
        5 => Preset { n_t: 48, n_d: 48, n_train: 500, n_epoch: 1000, n_c: 5, p: 2, n1: 250, n2: 50 },
        10 => {
            Preset { n_t: 48, n_d: 48, n_train: 2000, n_epoch: 1000, n_c: 10, p: 2, n1: 500, n2: 100 }
        }
        20 => Preset {
            n_t: 100,
            n_d: 100,
            n_train: 80_000,
            n_epoch: 2000,
            n_c: 20,
            p: 4,
            n1: 1000,
            n2: 200,
        },
        other => {
            let c = other.max(1);
            Preset {
                n_t: if other <= 10 { 48 } else { 100 },
                n_d: if other <= 10 { 48 } else { 100 },
                n_train: 500,
                n_epoch: 1000,
                n_c: c,
                p: if other <= 10 { 2 } else { 4 },
                n1: 50 * c,
                n2: 10 * c,
            }
        }
    }
}

/// Network architecture for a dataset's mode count and measurement grid.
/// Full-aperture data is periodic in both angles, so it pads periodically;
/// half aperture pads with zeros.
pub fn arch_for(m: usize, n_t: usize, n_d: usize, aperture: Aperture) -> CnnArch {
    let p = preset(m);
    CnnArch {
        n_t,
        n_d,
        m,
        n_c: p.n_c,
        p: p.p,
        n1: p.n1,
        n2: p.n2,
        pad_mode: match aperture {
            Aperture::Full => PadMode::Periodic,
            Aperture::Half => PadMode::Zero,
        },
    }
}

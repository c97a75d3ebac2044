//! Forward solver checks against closed-form and structural oracles: the
//! analytic disk series, grid self-convergence, rotation equivariance,
//! reciprocity, far-field decay, and finite differences of the derivative
//! matrix.

use num_complex::Complex64;

use echoshape::forward::{
    frechet_matrix, mie_circle, solve_forward, solve_forward_sized, ScatterConfig,
};
use echoshape::geometry::StarCoeffs;

fn trefoil() -> StarCoeffs {
    let mut c = vec![0.0; 11];
    c[0] = 1.0;
    c[3] = 0.3;
    StarCoeffs::new(c).unwrap()
}

#[test]
fn disk_measurements_match_analytic_series() {
    let cfg = ScatterConfig::full(5.0, 16, 6);
    let disk = StarCoeffs::unit_circle(0);
    let (numeric, _) = solve_forward(&disk, &cfg).unwrap();
    let exact = mie_circle(1.0, 5.0, &cfg).unwrap();
    let diff = numeric.max_abs_diff(&exact);
    assert!(diff < 1e-8, "disk mismatch {diff:.3e}");
}

#[test]
fn measurements_converge_in_quadrature_size() {
    let cfg = ScatterConfig::full(7.5, 12, 4);
    let c = trefoil();
    let (coarse, _) = solve_forward_sized(&c, &cfg, 256).unwrap();
    let (fine, _) = solve_forward_sized(&c, &cfg, 512).unwrap();
    let diff = coarse.max_abs_diff(&fine);
    assert!(diff < 1e-10, "self-convergence gap {diff:.3e}");
}

#[test]
fn rotating_receivers_and_directions_together_is_invariant() {
    // the disk is rotationally symmetric, so measurements depend only on
    // the angle between receiver and incident direction
    let k = 5.0;
    let disk = StarCoeffs::unit_circle(0);
    let shift = 0.7_f64;
    let base = ScatterConfig::full(k, 10, 5);
    let rotated = ScatterConfig {
        k,
        receivers: base
            .receivers
            .iter()
            .map(|x| {
                [
                    shift.cos() * x[0] - shift.sin() * x[1],
                    shift.sin() * x[0] + shift.cos() * x[1],
                ]
            })
            .collect(),
        directions: base
            .directions
            .iter()
            .map(|d| {
                [
                    shift.cos() * d[0] - shift.sin() * d[1],
                    shift.sin() * d[0] + shift.cos() * d[1],
                ]
            })
            .collect(),
        aperture: base.aperture,
    };
    let (u_base, _) = solve_forward(&disk, &base).unwrap();
    let (u_rot, _) = solve_forward(&disk, &rotated).unwrap();
    let diff = u_base.max_abs_diff(&u_rot);
    assert!(diff < 1e-10, "rotation equivariance broken by {diff:.3e}");
}

#[test]
fn reciprocity_holds_to_finite_radius_accuracy() {
    // with receivers at R d_j the far-field reciprocity relation
    // u(R d_j; d_l) = u(-R d_l; -d_j) holds up to O(1/(kR)) corrections;
    // on an N-point full ring negating a direction shifts its index by N/2
    let k = 5.0;
    let n = 8;
    let cfg = ScatterConfig::full_with_radius(k, n, n, 100.0);
    let mut coeffs = vec![0.0; 7];
    coeffs[0] = 1.0;
    coeffs[3] = 0.2;
    coeffs[5] = 0.1;
    let c = StarCoeffs::new(coeffs).unwrap();
    let (u, _) = solve_forward(&c, &cfg).unwrap();
    let mut scale = 0.0_f64;
    for j in 0..n {
        for l in 0..n {
            scale = scale.max(u.at(j, l).norm());
        }
    }
    let mut worst = 0.0_f64;
    for j in 0..n {
        for l in 0..n {
            let lhs = u.at(j, l);
            let rhs = u.at((l + n / 2) % n, (j + n / 2) % n);
            worst = worst.max((lhs - rhs).norm() / scale);
        }
    }
    assert!(worst < 0.01, "reciprocity violated at {worst:.3e} relative");
}

#[test]
fn scattered_field_decays_like_inverse_square_root() {
    let k = 5.0;
    let c = trefoil();
    let near = ScatterConfig::full_with_radius(k, 12, 4, 10.0);
    let far = ScatterConfig::full_with_radius(k, 12, 4, 40.0);
    let (u_near, _) = solve_forward(&c, &near).unwrap();
    let (u_far, _) = solve_forward(&c, &far).unwrap();
    let norm = |u: &echoshape::forward::ScatterData| {
        let mut s = 0.0;
        for r in 0..u.n_receivers() {
            for d in 0..u.n_directions() {
                s += u.at(r, d).norm_sqr();
            }
        }
        s.sqrt()
    };
    // amplitude should scale by (10/40)^{1/2} = 0.5 between the two rings
    let ratio = norm(&u_far) / norm(&u_near);
    assert!(
        (ratio - 0.5).abs() < 0.01,
        "far-field decay ratio {ratio:.4} (expected 0.5 within 2%)"
    );
}

#[test]
fn frechet_columns_match_central_differences() {
    let k = 5.0;
    let cfg = ScatterConfig::full(k, 16, 4);
    let mut coeffs = vec![0.0; 11];
    coeffs[0] = 1.05;
    coeffs[2] = 0.06;
    coeffs[7] = -0.04;
    let c = StarCoeffs::new(coeffs.clone()).unwrap();
    let (_, psi) = solve_forward(&c, &cfg).unwrap();
    let jac = frechet_matrix(&c, &cfg, &psi).unwrap().0;

    let h = 1e-5;
    for col in [0usize, 3, 8] {
        let mut plus = coeffs.clone();
        plus[col] += h;
        let mut minus = coeffs.clone();
        minus[col] -= h;
        let (up, _) = solve_forward(&StarCoeffs::new(plus).unwrap(), &cfg).unwrap();
        let (um, _) = solve_forward(&StarCoeffs::new(minus).unwrap(), &cfg).unwrap();
        let fd: Vec<Complex64> = up
            .stacked()
            .iter()
            .zip(um.stacked())
            .map(|(p, m)| (p - m) / (2.0 * h))
            .collect();
        let mut num = 0.0;
        let mut den = 0.0;
        for (row, fd_val) in fd.iter().enumerate() {
            num += (jac.at(row, col) - fd_val).norm_sqr();
            den += fd_val.norm_sqr();
        }
        let rel = (num / den).sqrt();
        assert!(rel < 1e-4, "column {col}: finite-difference gap {rel:.3e}");
    }
}

#[test]
fn psi_dimensions_follow_config() {
    let cfg = ScatterConfig::half(5.0, 9, 3);
    let c = trefoil();
    let (u, psi) = solve_forward(&c, &cfg).unwrap();
    assert_eq!(u.n_receivers(), 9);
    assert_eq!(u.n_directions(), 3);
    assert_eq!(psi.n_directions(), 3);
    assert_eq!(psi.nodes(), 256);
    let stacked = u.stacked();
    assert_eq!(stacked.len(), 27);
    assert_eq!(stacked[9], u.at(0, 1));
}

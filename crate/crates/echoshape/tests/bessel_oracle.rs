//! Checks the Bessel implementations against frozen high-precision
//! reference values (see tools/gen_bessel_reference.py).

use echoshape::specfun::{bessel_j, bessel_y};

struct Row {
    kind: char,
    n: u32,
    x: f64,
    value: f64,
}

fn load_reference() -> Vec<Row> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/bessel_reference.csv");
    let text = std::fs::read_to_string(path).expect("reference csv present");
    let mut rows = Vec::new();
    for line in text.lines().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let kind = parts.next().unwrap().chars().next().unwrap();
        let n: u32 = parts.next().unwrap().parse().unwrap();
        let x: f64 = parts.next().unwrap().parse().unwrap();
        let value: f64 = parts.next().unwrap().parse().unwrap();
        rows.push(Row { kind, n, x, value });
    }
    assert!(rows.len() > 4000, "reference table looks truncated");
    rows
}

/// Error metric: absolute error relative to the larger of the reference
/// magnitude and the oscillation envelope sqrt(2/(pi x)), so zeros of the
/// oscillatory functions do not demand unattainable relative accuracy.
#[test]
fn matches_frozen_reference_to_1e12() {
    let rows = load_reference();
    let mut worst = 0.0_f64;
    let mut worst_row = String::new();
    for row in &rows {
        let got = match row.kind {
            'J' => bessel_j(row.n, row.x).unwrap(),
            'Y' => bessel_y(row.n, row.x).unwrap(),
            other => panic!("unknown kind {other}"),
        };
        let envelope = (2.0 / (std::f64::consts::PI * row.x)).sqrt();
        let scale = row.value.abs().max(envelope);
        let rel = (got - row.value).abs() / scale;
        if rel > worst {
            worst = rel;
            worst_row = format!(
                "{} n={} x={} ref={} got={}",
                row.kind, row.n, row.x, row.value, got
            );
        }
    }
    assert!(worst < 1e-12, "worst scaled error {worst:.3e} at {worst_row}");
}

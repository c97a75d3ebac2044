#!/usr/bin/env python3
"""Generate frozen reference values for the Bessel implementations.

Writes crates/echoshape/tests/data/bessel_reference.csv with rows
    kind,n,x,value
where kind is J or Y, x is printed with repr() so the exact f64 the Rust
tests parse is the same binary value handed to mpmath, and value carries
20 significant digits computed at 50-digit working precision.

Run from the repository root:
    python3 tools/gen_bessel_reference.py
"""

import math
import os

import mpmath

mpmath.mp.dps = 50

OUT = os.path.join(
    os.path.dirname(__file__), "..", "crates", "echoshape", "tests", "data",
    "bessel_reference.csv",
)

# Saturation guard: skip reference rows whose magnitude leaves the range the
# Rust side promises to represent faithfully (Y_n blows up for small x).
MAG_LO = 1e-280
MAG_HI = 1e280


def log_grid(lo, hi, count):
    la, lb = math.log(lo), math.log(hi)
    return [math.exp(la + (lb - la) * i / (count - 1)) for i in range(count)]


def main():
    rows = []

    # dense sweep for the workhorse orders 0 and 1
    for x in log_grid(1e-3, 500.0, 1000):
        for n in (0, 1):
            jv = mpmath.besselj(n, mpmath.mpf(x))
            yv = mpmath.bessely(n, mpmath.mpf(x))
            rows.append(("J", n, x, jv))
            rows.append(("Y", n, x, yv))

    # spot grid for higher orders, including the turning-point region x ~ n
    orders = [2, 3, 5, 10, 20, 50, 100, 200]
    fixed_x = [1e-3, 1e-2, 0.1, 0.5, 1.0, 2.0, 5.0, 7.5, 10.0, 15.0, 18.0,
               25.0, 50.0, 100.0, 200.0, 350.0, 500.0]
    for n in orders:
        xs = set(fixed_x)
        for scale in (0.5, 0.9, 1.0, 1.1, 1.5, 2.0):
            xs.add(float(n) * scale)
        for x in sorted(xs):
            if x <= 0.0 or x > 500.0:
                continue
            jv = mpmath.besselj(n, mpmath.mpf(x))
            yv = mpmath.bessely(n, mpmath.mpf(x))
            for kind, val in (("J", jv), ("Y", yv)):
                mag = abs(val)
                if mag != 0 and (mag < MAG_LO or mag > MAG_HI):
                    continue
                rows.append((kind, n, x, val))

    os.makedirs(os.path.dirname(OUT), exist_ok=True)
    with open(OUT, "w") as f:
        f.write("kind,n,x,value\n")
        for kind, n, x, val in rows:
            f.write("%s,%d,%s,%s\n" % (kind, n, repr(x), mpmath.nstr(val, 20)))
    print("wrote %d rows to %s" % (len(rows), OUT))


if __name__ == "__main__":
    main()

"""Regenerate ``src/nhflow/data/cat_lookalike.csv``.

The bundled tracking scenario refers to a closed "cat face" outline whose
defining equations live in an external reference. This script builds a
documented substitute with a similar character (a closed, non-convex planar
curve with two ear lobes, radius of a few hundred units, parameter
``s in [0, 2 pi]``) and tabulates it together with its first and second
derivatives, its unwrapped tangent heading and the heading rate.

Columns: s, c1, c2, dc1, dc2, ddc1, ddc2, heading, dheading.
"""

import sys
from pathlib import Path

import numpy as np

N = 4096


def radius(s):
    lobes = np.zeros_like(s)
    for centre in (np.pi / 2 - 0.6, np.pi / 2 + 0.6):
        w = np.angle(np.exp(1j * (s - centre)))
        lobes += 0.45 * np.exp(-(w / 0.22) ** 2)
    # slightly flattened chin and cheeks
    return 300.0 * (1.0 + lobes + 0.08 * np.cos(2.0 * s) - 0.05 * np.sin(s))


def main(out):
    s = np.linspace(0.0, 2.0 * np.pi, N + 1)
    fine = np.linspace(0.0, 2.0 * np.pi, 16 * N + 1)[:-1]
    r = radius(fine)
    c1, c2 = r * np.cos(fine), r * np.sin(fine)
    # spectral derivatives of the periodic samples
    k = np.fft.fftfreq(fine.size, d=1.0 / fine.size)
    def deriv(v, order):
        return np.real(np.fft.ifft((1j * k) ** order * np.fft.fft(v)))
    cols = [c1, c2, deriv(c1, 1), deriv(c2, 1), deriv(c1, 2), deriv(c2, 2)]
    cols = [np.append(c, c[0])[:: 16] for c in cols]
    c1, c2, d1, d2, dd1, dd2 = cols
    heading = np.unwrap(np.arctan2(d2, d1))
    dheading = (d1 * dd2 - d2 * dd1) / (d1**2 + d2**2)
    table = np.column_stack([s, c1, c2, d1, d2, dd1, dd2, heading, dheading])
    np.savetxt(out, table, delimiter=",", fmt="%.17g",
               header="s,c1,c2,dc1,dc2,ddc1,ddc2,heading,dheading", comments="")


if __name__ == "__main__":
    default = Path(__file__).resolve().parents[1] / "src" / "nhflow" / "data" / "cat_lookalike.csv"
    main(sys.argv[1] if len(sys.argv) > 1 else default)

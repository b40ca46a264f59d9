"""Pure-Python reference versions of the compiled kernels in ``_kernels.pyx``.

Operation order matches the Cython code so both backends agree to rounding.
"""

import math

import numpy as np


def unicycle_hold(x0, t_start, eps, substeps, a1, a2, a12, kappa):
    """RK4 across one hold interval of the unicycle with frozen coefficients.

    Returns the ``(substeps + 1, 3)`` array of states at
    ``t_start + i * eps / substeps``.
    """
    h = eps / substeps
    w = 2.0 * math.pi * kappa / eps
    amp = 2.0 * math.sqrt(math.pi * kappa * abs(a12) / eps)
    sgn = 1.0 if a12 > 0 else (-1.0 if a12 < 0 else 0.0)
    ac = amp * sgn
    out = np.empty((substeps + 1, 3))
    x1, x2, x3 = float(x0[0]), float(x0[1]), float(x0[2])
    out[0, 0] = x1
    out[0, 1] = x2
    out[0, 2] = x3
    cos, sin = math.cos, math.sin
    for i in range(substeps):
        ta = t_start + i * h
        tb = t_start + (i + 0.5) * h
        tc = t_start + (i + 1) * h
        ua1 = a1 + ac * cos(w * ta)
        ua2 = a2 + amp * sin(w * ta)
        ub1 = a1 + ac * cos(w * tb)
        ub2 = a2 + amp * sin(w * tb)
        uc1 = a1 + ac * cos(w * tc)
        uc2 = a2 + amp * sin(w * tc)

        k1x = ua1 * cos(x3)
        k1y = ua1 * sin(x3)
        k1t = ua2
        th = x3 + 0.5 * h * k1t
        k2x = ub1 * cos(th)
        k2y = ub1 * sin(th)
        k2t = ub2
        th = x3 + 0.5 * h * k2t
        k3x = ub1 * cos(th)
        k3y = ub1 * sin(th)
        k3t = ub2
        th = x3 + h * k3t
        k4x = uc1 * cos(th)
        k4y = uc1 * sin(th)
        k4t = uc2

        x1 = x1 + h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        x2 = x2 + h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
        x3 = x3 + h / 6.0 * (k1t + 2.0 * k2t + 2.0 * k3t + k4t)
        out[i + 1, 0] = x1
        out[i + 1, 1] = x2
        out[i + 1, 2] = x3
    return out

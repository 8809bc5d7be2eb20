"""The twelve quartic box-spline basis functions of a regular Loop patch.

Control points are numbered as in the usual regular-patch figure::

          1   2
        3   4   5
      6   7   8   9
        10  11  12

The patch triangle is (4, 7, 8), counterclockwise, with barycentric weights
(u, v, w) attached to those corners; the parameters are (v, w) and
u = 1 - v - w.
"""

import numpy as np

# exponents (i, j, k) of u^i v^j w^k
MONOMIALS = [(i, j, 4 - i - j) for i in range(4, -1, -1) for j in range(4 - i, -1, -1)]
_MIDX = {m: n for n, m in enumerate(MONOMIALS)}

_TERMS = [
    {(4, 0, 0): 1, (3, 1, 0): 2},
    {(4, 0, 0): 1, (3, 0, 1): 2},
    {(4, 0, 0): 1, (3, 0, 1): 2, (3, 1, 0): 6, (2, 1, 1): 6, (2, 2, 0): 12,
     (1, 2, 1): 6, (1, 3, 0): 6, (0, 3, 1): 2, (0, 4, 0): 1},
    {(4, 0, 0): 6, (3, 0, 1): 24, (2, 0, 2): 24, (1, 0, 3): 8, (0, 0, 4): 1,
     (3, 1, 0): 24, (2, 1, 1): 60, (1, 1, 2): 36, (0, 1, 3): 6, (2, 2, 0): 24,
     (1, 2, 1): 36, (0, 2, 2): 12, (1, 3, 0): 8, (0, 3, 1): 6, (0, 4, 0): 1},
    {(4, 0, 0): 1, (3, 0, 1): 6, (2, 0, 2): 12, (1, 0, 3): 6, (0, 0, 4): 1,
     (3, 1, 0): 2, (2, 1, 1): 6, (1, 1, 2): 6, (0, 1, 3): 2},
    {(1, 3, 0): 2, (0, 4, 0): 1},
    {(4, 0, 0): 1, (3, 0, 1): 6, (2, 0, 2): 12, (1, 0, 3): 6, (0, 0, 4): 1,
     (3, 1, 0): 8, (2, 1, 1): 36, (1, 1, 2): 36, (0, 1, 3): 8, (2, 2, 0): 24,
     (1, 2, 1): 60, (0, 2, 2): 24, (1, 3, 0): 24, (0, 3, 1): 24, (0, 4, 0): 6},
    {(4, 0, 0): 1, (3, 0, 1): 8, (2, 0, 2): 24, (1, 0, 3): 24, (0, 0, 4): 6,
     (3, 1, 0): 6, (2, 1, 1): 36, (1, 1, 2): 60, (0, 1, 3): 24, (2, 2, 0): 12,
     (1, 2, 1): 36, (0, 2, 2): 24, (1, 3, 0): 6, (0, 3, 1): 8, (0, 4, 0): 1},
    {(1, 0, 3): 2, (0, 0, 4): 1},
    {(0, 3, 1): 2, (0, 4, 0): 1},
    {(1, 0, 3): 2, (0, 0, 4): 1, (1, 1, 2): 6, (0, 1, 3): 6, (1, 2, 1): 6,
     (0, 2, 2): 12, (1, 3, 0): 2, (0, 3, 1): 6, (0, 4, 0): 1},
    {(0, 0, 4): 1, (0, 1, 3): 2},
]

COEFFS = np.zeros((12, len(MONOMIALS)))
for _row, _terms in enumerate(_TERMS):
    for _m, _c in _terms.items():
        COEFFS[_row, _MIDX[_m]] = _c / 12.0

_EXP = np.array(MONOMIALS, dtype=float)


def _powers(u, v, w):
    e = _EXP
    return u ** e[:, 0] * v ** e[:, 1] * w ** e[:, 2]


def _dpowers(u, v, w, axis):
    e = _EXP.copy()
    factor = e[:, axis].copy()
    e[:, axis] = np.maximum(e[:, axis] - 1, 0)
    return factor * u ** e[:, 0] * v ** e[:, 1] * w ** e[:, 2]


def basis(v, w):
    """Values of the 12 basis functions at (v, w)."""
    return COEFFS @ _powers(1.0 - v - w, v, w)


def basis_derivatives(v, w):
    """d/dv and d/dw of the 12 basis functions (u = 1 - v - w eliminated)."""
    u = 1.0 - v - w
    du = COEFFS @ _dpowers(u, v, w, 0)
    dv = COEFFS @ _dpowers(u, v, w, 1)
    dw = COEFFS @ _dpowers(u, v, w, 2)
    return dv - du, dw - du

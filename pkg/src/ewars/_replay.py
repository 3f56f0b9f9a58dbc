"""Compiled inner loop for re-summing the weighted objective at off-grid areas."""

import numba
import numpy as np


@numba.njit(cache=True)
def weighted_objective(v0, rate, offset, weights, areas, coef):
    """
    sum_r weights[r] * (Q(v0[r] + rate[r] * a) + offset[r])^2 for each area a.

    Q is the piecewise cubic blowdown table addressed in cell units; row i of
    `coef` holds the cubic of cell i, constant term first.
    """
    last = coef.shape[0] - 1
    out = np.empty(areas.size)
    for j in range(areas.size):
        a = areas[j]
        acc = 0.0
        for r in range(v0.size):
            v = v0[r] + rate[r] * a
            i = int(v)
            if i > last:
                i = last
            elif i < 0:
                i = 0
            u = v - i
            if u > 1.0:
                u = 1.0
            res = coef[i, 0] + u * (coef[i, 1] + u * (coef[i, 2] + u * coef[i, 3])) + offset[r]
            acc += weights[r] * res * res
        out[j] = acc
    return out

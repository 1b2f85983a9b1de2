"""Pure-Python versions of the compiled loops in ``_kernels.pyx``.

Same signatures and bit-identical results; used when the extension is not built.
"""
import numpy as np


def sdm_loop(u, A, bu, bv, c, du, limit, x):
    n = len(u)
    m = len(x)
    A = [list(map(float, row)) for row in np.asarray(A)]
    bu = [float(b) for b in bu]
    bv = [float(b) for b in bv]
    c = [float(b) for b in c]
    du = float(du)
    state = [float(v) for v in x]
    out = np.empty(n, dtype=np.int8)
    resets = []
    rng_m = range(m)
    for k in range(n):
        uk = float(u[k])
        y = du * uk
        for j in rng_m:
            y += c[j] * state[j]
        v = 1.0 if y >= 0.0 else -1.0
        out[k] = 1 if v > 0 else -1
        new = []
        reset = False
        for i in rng_m:
            s = bu[i] * uk + bv[i] * v
            row = A[i]
            for j in rng_m:
                s += row[j] * state[j]
            new.append(s)
            if abs(s) > limit:
                reset = True
        if reset:
            state = [0.0] * m
            resets.append(k)
        else:
            state = new
    x[:] = state
    return out, resets

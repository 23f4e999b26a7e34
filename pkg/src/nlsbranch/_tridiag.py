import numpy as np
from scipy.linalg import lapack

from .errors import SolveFailure


def tridiag_solve(sub, diag, sup, rhs):
    """Solve a (possibly complex) tridiagonal system with LAPACK gtsv."""
    cplx = (np.iscomplexobj(sub) or np.iscomplexobj(diag)
            or np.iscomplexobj(sup) or np.iscomplexobj(rhs))
    fn = lapack.zgtsv if cplx else lapack.dgtsv
    dt = complex if cplx else float
    *_, x, info = fn(np.asarray(sub, dt), np.asarray(diag, dt),
                     np.asarray(sup, dt), np.asarray(rhs, dt))
    if info != 0:
        raise SolveFailure(f"tridiagonal solve failed (info={info})")
    return x


def tridiag_apply(sub, diag, sup, x):
    out = diag * x
    out[:-1] += sup * x[1:]
    out[1:] += sub * x[:-1]
    return out

"""Reference integrals computed with adaptive scipy quadrature.

The values printed here are frozen in tests/test_oracles.py.  Only the model
density and test-function values are taken from the package; the integration
itself is independent of the package's Gauss-Legendre rules.
"""

import numpy as np
from scipy.integrate import dblquad

from mpcs.config import load_config
from mpcs.fixtures import Frame, base_functions, chaos_functions, nonpositive_function

cfg = load_config(None)
model = cfg.build_model()
fr = Frame(0.0, 1.0)


def integral(f, xr, sr):
    def g(s, x):
        X, S = np.array([[x]]), np.array([s])
        return float(f(X, S)[0] * model.q(X, S)[0])

    val, err = dblquad(g, xr[0], xr[1], sr[0], sr[1], epsabs=1e-12, epsrel=1e-11)
    return val, err


def main():
    phi = nonpositive_function(fr)
    a, b = chaos_functions(fr)
    p1 = base_functions(fr)[0]
    out = {
        "laplace_exponent": integral(lambda x, s: np.expm1(phi.value(x, s)), (0.1, 0.9), (0.15, 3.0)),
        "chaos_phi_sq": integral(lambda x, s: a.value(x, s) ** 2, (0.0, 1.0), (0.01, 6.0)),
        "chaos_phi_psi": integral(lambda x, s: a.value(x, s) * b.value(x, s), (0.05, 1.0), (0.02, 4.0)),
        "p1_sq": integral(lambda x, s: p1.value(x, s) ** 2, (0.1, 0.7), (0.2, 2.5)),
    }
    for k, (v, e) in out.items():
        print(f"{k} = {v!r}  # err {e:.1e}")


if __name__ == "__main__":
    main()

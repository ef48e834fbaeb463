"""Independent high-precision oracle for Blaschke data of a parametrized hypersurface.

The affine metric comes from the determinant form ``H_ij = det(F_1, F_2, F_3, F_ij)``,
``h = |det H|^{-1/5} H``; the affine normal is ``xi = (1/3) Laplacian_h F``.
No transversal field is chosen. Derivatives of ``h`` and ``xi`` are taken with
``mpmath.diff`` at 40 digits; ``F`` and its second jet are exact (sympy).

``python3 tests/oracles/blaschke_mp.py`` prints the values frozen in the tests.
"""

import mpmath as mp
import sympy as sp

mp.mp.dps = 40
X = sp.symbols("x0:3", real=True)


def _lambdify(F):
    F = sp.Matrix(F)
    d1 = [sp.lambdify(X, F.diff(a), "mpmath") for a in X]
    d2 = [[sp.lambdify(X, F.diff(a, b), "mpmath") for b in X] for a in X]
    return d1, d2


def make(F, sign=1):
    d1f, d2f = _lambdify(F)

    def frame(p):
        return [mp.matrix(f(*p)) for f in d1f]

    def metric(*p):
        cols = frame(p)
        H = mp.matrix(3, 3)
        for i in range(3):
            for j in range(3):
                M = mp.matrix(4, 4)
                vecs = cols + [mp.matrix(d2f[i][j](*p))]
                for c, vec in enumerate(vecs):
                    for r in range(4):
                        M[r, c] = vec[r]
                H[i, j] = sign * mp.det(M)
        return H / abs(mp.det(H)) ** mp.mpf(0.2)

    def dmetric(p):
        # dh[a][i, j] = d_a h_ij
        out = []
        for a in range(3):
            n = [0, 0, 0]
            n[a] = 1
            D = mp.matrix(3, 3)
            for i in range(3):
                for j in range(i, 3):
                    D[i, j] = D[j, i] = mp.diff(lambda *q: metric(*q)[i, j], p, tuple(n))
            out.append(D)
        return out

    def xi(*p):
        h = metric(*p)
        hi = h ** -1
        dh = dmetric(p)
        cols = frame(p)
        lap = mp.matrix(4, 1)
        for i in range(3):
            for j in range(3):
                v = mp.matrix(d2f[i][j](*p))
                for k in range(3):
                    g = sum(hi[k, l] * (dh[j][l, i] + dh[i][l, j] - dh[l][i, j]) for l in range(3)) / 2
                    v -= g * cols[k]
                lap += hi[i, j] * v
        return lap / 3

    return frame, metric, dmetric, xi, d2f


def blaschke(F, point, sign=1):
    frame, metric, dmetric, xi, d2f = make(F, sign)
    p = [mp.mpf(c) for c in point]
    cols = frame(p)
    x0 = xi(*p)
    B = mp.matrix(4, 4)
    for c, vec in enumerate(cols + [x0]):
        for r in range(4):
            B[r, c] = vec[r]
    Bi = B ** -1
    S = mp.matrix(3, 3)
    for i in range(3):
        n = [0, 0, 0]
        n[i] = 1
        dxi = mp.matrix([mp.diff(lambda *q: xi(*q)[r], p, tuple(n)) for r in range(4)])
        c = Bi * dxi
        for k in range(3):
            S[k, i] = -c[k]
    h = metric(*p)
    hi = h ** -1
    dh = dmetric(p)
    gam = {}
    for i in range(3):
        for j in range(3):
            c = Bi * mp.matrix(d2f[i][j](*p))
            for k in range(3):
                gam[i, j, k] = c[k]
    nh = {}
    for i in range(3):
        for j in range(3):
            for k in range(3):
                nh[i, j, k] = dh[i][j, k] - sum(gam[i, j, l] * h[l, k] + gam[i, k, l] * h[j, l] for l in range(3))
    c2 = mp.mpf(0)
    for i in range(3):
        for j in range(3):
            for k in range(3):
                for a in range(3):
                    for b in range(3):
                        for c in range(3):
                            c2 += hi[i, a] * hi[j, b] * hi[k, c] * nh[i, j, k] * nh[a, b, c]
    ev = sorted(float(mp.re(e)) for e in mp.eig(S)[0])
    return {
        "h": [[float(h[i, j]) for j in range(3)] for i in range(3)],
        "xi": [float(v) for v in x0],
        "S": [[float(S[i, j]) for j in range(3)] for i in range(3)],
        "S_eigenvalues": ev,
        "nabla_h_norm2": float(c2),
    }


CASES = {
    "z2z2": (
        lambda t, u, v: [sp.exp(t) + 2 * v**2, sp.exp(-t) + 2 * u**2, 2 * v, 2 * u],
        ("0.3", "-0.2", "0.5"),
        -1,
    ),
    "generic_graph": (
        lambda t, u, v: [t, u, v, sp.exp(t) * sp.cos(u) + u**2 + v**2
                         + sp.Rational(3, 10) * t * u * v + sp.sin(v) * t / 5],
        ("0.1", "-0.2", "0.3"),
        1,
    ),
}


if __name__ == "__main__":
    for name, (F, p, sign) in CASES.items():
        print(name, p)
        for k, val in blaschke(F(*X), p, sign).items():
            print(" ", k, repr(val))

"""SO(3) canonicalization of a trace-free cubic ``C`` and a symmetric ``S``.

Conventions
-----------
A rotation ``R`` acts by ``C'_ijk = R_pi R_qj R_rk C_pqr`` and ``S' = Rᵀ S R``;
the columns of ``R`` are the new basis vectors written in the old frame, so
``cubic_eval(C', v) == cubic_eval(C, R v)``.

Canonical components (``f = Σ C_ijk x_i x_j x_k``)::

    ROT_SO2    C111 = 2λ, C122 = C133 = -λ            f = λ(2x³ - 3xy² - 3xz²)
    TETRA_A4   C123 = λ                               f = 6λxyz
    TRI_S3     C111 = λ, C122 = -λ                    f = λ(x³ - 3xy²)
    Z2_GENERIC SO2 part plus C123 = μ                 f = ... + 6μxyz
    Z3_GENERIC SO2 part plus C222 = μ, C233 = -μ      f = ... + μ(y³ - 3yz²)

Report parameters are ``(λ, μ, a, b, c, d)`` with ``a, b, c, d`` the canonical
entries ``S11, S22, S33, S23``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.optimize import minimize_scalar

__all__ = [
    "CubicLabel",
    "Group",
    "CubicClass",
    "SymmetryReport",
    "ResidualSet",
    "ClassificationError",
    "DEFAULT_TOL",
    "cubic_eval",
    "t_operator",
    "classify_cubic",
    "stabilizer_pair",
    "conjugate",
    "symmetry_residual",
    "generator_residual",
    "group_generators",
    "canonical_cubic",
    "canonical_pair",
    "sphere_maximize",
    "rotation_about",
    "P1",
    "P2",
    "P3",
    "R1",
    "R3",
    "Q",
]

DEFAULT_TOL = 1e-7
SQRT2 = math.sqrt(2.0)
SQRT3 = math.sqrt(3.0)


class ClassificationError(ValueError):
    pass


class CubicLabel(str, Enum):
    ZERO = "ZERO"
    ROT_SO2 = "ROT_SO2"
    TETRA_A4 = "TETRA_A4"
    TRI_S3 = "TRI_S3"
    Z2_GENERIC = "Z2_GENERIC"
    Z3_GENERIC = "Z3_GENERIC"
    TRIVIAL = "TRIVIAL"


class Group(str, Enum):
    SO3 = "SO3"
    Z2xSO2 = "Z2xSO2"
    SO2 = "SO2"
    A4 = "A4"
    S3 = "S3"
    Z2xZ2 = "Z2xZ2"
    Z3 = "Z3"
    Z2 = "Z2"
    TRIVIAL = "TRIVIAL"


# --------------------------------------------------------------------------
# rotations


def rotation_about(axis, angle: float) -> np.ndarray:
    """Right-handed rotation by ``angle`` about ``axis`` (Rodrigues)."""
    k = np.asarray(axis, dtype=float)
    k = k / np.linalg.norm(k)
    K = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
    return np.eye(3) + math.sin(angle) * K + (1.0 - math.cos(angle)) * (K @ K)


P1 = np.diag([1.0, -1.0, -1.0])
P2 = np.diag([-1.0, 1.0, -1.0])
P3 = np.diag([-1.0, -1.0, 1.0])
R1 = rotation_about([1, 0, 0], 2 * math.pi / 3)
R3 = rotation_about([0, 0, 1], 2 * math.pi / 3)
# Cyclic permutation e1 -> e2 -> e3 -> e1: rotation by 2π/3 about (1,1,1).
Q = np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
# Columns: a 3-fold axis of the xyz cubic followed by a completing frame.
T_Q = np.array(
    [
        [1 / SQRT3, 2 / math.sqrt(6.0), 0.0],
        [1 / SQRT3, -1 / math.sqrt(6.0), 1 / SQRT2],
        [1 / SQRT3, -1 / math.sqrt(6.0), -1 / SQRT2],
    ]
)


def _rot1(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _closure(gens) -> list[np.ndarray]:
    """All elements of the finite group generated by ``gens``."""
    elems = [np.eye(3)]
    frontier = [np.eye(3)]
    while frontier:
        new = []
        for a in frontier:
            for g in gens:
                b = a @ g
                if not any(np.allclose(b, e, atol=1e-9) for e in elems):
                    elems.append(b)
                    new.append(b)
        frontier = new
    return elems


_FINITE = {
    Group.A4: _closure([P1, P2, Q]),
    Group.S3: _closure([P1, R3]),
    Group.Z2xZ2: _closure([P1, P2]),
    Group.Z3: _closure([R1]),
    Group.Z2: _closure([P1]),
    Group.TRIVIAL: [np.eye(3)],
}
_CUBIC_FINITE = {
    CubicLabel.TETRA_A4: _FINITE[Group.A4],
    CubicLabel.TRI_S3: _FINITE[Group.S3],
    CubicLabel.Z3_GENERIC: _FINITE[Group.Z3],
    CubicLabel.Z2_GENERIC: _FINITE[Group.Z2],
    CubicLabel.TRIVIAL: [np.eye(3)],
}


def _check_rotation(R: np.ndarray, tol: float = 1e-10) -> None:
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        raise ValueError("rotation must be 3x3")
    if np.abs(R.T @ R - np.eye(3)).max() > tol or abs(np.linalg.det(R) - 1.0) > tol:
        raise ValueError("matrix is not special-orthogonal")


def _cubic_conj(C: np.ndarray, R: np.ndarray) -> np.ndarray:
    return np.einsum("pi,qj,rk,pqr->ijk", R, R, R, C)


def conjugate(C, S, R) -> tuple[np.ndarray, np.ndarray]:
    """Express ``(C, S)`` in the basis given by the columns of ``R``."""
    R = np.asarray(R, dtype=float)
    _check_rotation(R)
    C = np.asarray(C, dtype=float)
    S = np.asarray(S, dtype=float)
    return _cubic_conj(C, R), R.T @ S @ R


# --------------------------------------------------------------------------
# cubic basics


def cubic_eval(C, v) -> float | np.ndarray:
    """``Σ C_ijk v_i v_j v_k``; ``v`` may be a stack of vectors."""
    v = np.asarray(v, dtype=float)
    return np.einsum("ijk,...i,...j,...k->...", np.asarray(C, dtype=float), v, v, v)


def t_operator(C) -> np.ndarray:
    """``T_il = Σ_jk C_ijk C_ljk``; symmetric, PSD and rotation-equivariant."""
    C = np.asarray(C, dtype=float)
    return np.einsum("ijk,ljk->il", C, C)


def _sym3(entries: dict[tuple[int, int, int], float]) -> np.ndarray:
    C = np.zeros((3, 3, 3))
    for idx, val in entries.items():
        for p in set(itertools.permutations(idx)):
            C[p] = val
    return C


def _z2_cubic(lam: float, mu: float) -> np.ndarray:
    return _sym3({(0, 0, 0): 2 * lam, (0, 1, 1): -lam, (0, 2, 2): -lam, (0, 1, 2): mu})


def _z3_cubic(lam: float, mu: float) -> np.ndarray:
    return _sym3({(0, 0, 0): 2 * lam, (0, 1, 1): -lam, (0, 2, 2): -lam, (1, 1, 1): mu, (1, 2, 2): -mu})


def canonical_cubic(label: CubicLabel | str, lam: float = 0.0, mu: float = 0.0) -> np.ndarray:
    """Normal-form cubic for a label (``mu`` is ignored where it has no role)."""
    label = CubicLabel(label)
    if label in (CubicLabel.ZERO, CubicLabel.TRIVIAL):
        return np.zeros((3, 3, 3))
    if label is CubicLabel.ROT_SO2:
        return _z2_cubic(lam, 0.0)
    if label is CubicLabel.TETRA_A4:
        return _sym3({(0, 1, 2): lam})
    if label is CubicLabel.TRI_S3:
        return _sym3({(0, 0, 0): lam, (0, 1, 1): -lam})
    if label is CubicLabel.Z2_GENERIC:
        return _z2_cubic(lam, mu)
    return _z3_cubic(lam, mu)


_GROUP_CUBIC = {
    Group.SO3: CubicLabel.ZERO,
    Group.Z2xSO2: CubicLabel.ZERO,
    Group.SO2: CubicLabel.ROT_SO2,
    Group.A4: CubicLabel.TETRA_A4,
    Group.S3: CubicLabel.TRI_S3,
    Group.Z2xZ2: CubicLabel.TETRA_A4,
    Group.Z3: CubicLabel.Z3_GENERIC,
    Group.Z2: CubicLabel.Z2_GENERIC,
}


def canonical_pair(group: Group | str, params: dict) -> tuple[np.ndarray, np.ndarray]:
    """Canonical ``(C, S)`` for ``group`` from ``λ, μ, a, b, c, d``."""
    group = Group(group)
    if group is Group.TRIVIAL:
        raise ValueError("the trivial group has no canonical pair")
    p = {k: (0.0 if params.get(k) is None else float(params[k])) for k in ("lambda", "mu", "a", "b", "c", "d")}
    C = canonical_cubic(_GROUP_CUBIC[group], p["lambda"], p["mu"])
    S = np.array([[p["a"], 0.0, 0.0], [0.0, p["b"], p["d"]], [0.0, p["d"], p["c"]]])
    return C, S


# --------------------------------------------------------------------------
# sphere maximization


def _fibonacci_sphere(n: int) -> np.ndarray:
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    r = np.sqrt(1.0 - z * z)
    phi = math.pi * (1.0 + math.sqrt(5.0)) * i
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=-1)


def _newton_sphere(C: np.ndarray, v: np.ndarray, iters: int = 4) -> np.ndarray:
    """Polish a critical point of ``f`` restricted to the unit sphere."""
    for _ in range(iters):
        g = 3.0 * np.einsum("ijk,j,k->i", C, v, v)
        mult = 0.5 * v @ g
        H = 6.0 * np.einsum("ijk,k->ij", C, v) - 2.0 * mult * np.eye(3)
        J = np.zeros((4, 4))
        J[:3, :3] = H
        J[:3, 3] = -2.0 * v
        J[3, :3] = 2.0 * v
        rhs = -np.concatenate([g - 2.0 * mult * v, [v @ v - 1.0]])
        try:
            step = np.linalg.solve(J, rhs)
        except np.linalg.LinAlgError:
            break
        v = v + step[:3]
        v = v / np.linalg.norm(v)
    return v


def sphere_maximize(C, starts: int = 32, iters: int = 80) -> tuple[float, np.ndarray]:
    """Maximize ``cubic_eval(C, ·)`` on the unit sphere.

    Projected gradient ascent ``v ← normalize(∇f(v) + α v)`` from deterministic
    Fibonacci starts, with ``α`` large enough for monotone ascent, followed by
    a Newton polish of the best candidate.
    """
    C = np.asarray(C, dtype=float)
    scale = float(np.sqrt(np.sum(C * C)))
    if scale == 0.0:
        return 0.0, np.array([1.0, 0.0, 0.0])
    V = _fibonacci_sphere(starts)
    M = 3.0 * C.reshape(3, 9).T
    alpha = 6.0 * scale
    for _ in range(iters):
        VV = (V[:, :, None] * V[:, None, :]).reshape(-1, 9)
        V = VV @ M + alpha * V
        V /= np.sqrt(np.sum(V * V, axis=1))[:, None]
    vals = cubic_eval(C, V)
    best = V[int(np.argmax(vals))]
    polished = _newton_sphere(C, best)
    if cubic_eval(C, polished) >= vals.max():
        best = polished
    return float(cubic_eval(C, best)), best


_PROFILE_X = np.linspace(-1.0, 1.0, 401)


def _profile_max(fun) -> tuple[float, float]:
    """Max and argmax of a smooth function on [-1, 1] (grid, then bounded refine)."""
    y = fun(_PROFILE_X)
    k = int(np.argmax(y))
    lo, hi = _PROFILE_X[max(k - 1, 0)], _PROFILE_X[min(k + 1, _PROFILE_X.size - 1)]
    res = minimize_scalar(lambda s: -float(fun(np.array(s))), bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-12})
    if -res.fun >= y[k]:
        return float(-res.fun), float(res.x)
    return float(y[k]), float(_PROFILE_X[k])


def _normal_form_max(label: CubicLabel, lam: float, mu: float) -> tuple[float, np.ndarray] | None:
    """Maximum of the normal-form cubic on the sphere and a maximizer.

    Closed forms for the one-parameter types; for Z3 and Z2 the in-plane
    angle is fixed analytically and the remaining height is a 1D problem.
    """
    e1 = np.array([1.0, 0.0, 0.0])
    if label is CubicLabel.ZERO:
        return 0.0, e1
    if label is CubicLabel.ROT_SO2:
        return 2.0 * lam, e1
    if label is CubicLabel.TETRA_A4:
        return 2.0 * lam / SQRT3, np.full(3, 1.0 / SQRT3)
    if label is CubicLabel.TRI_S3:
        return lam, e1
    if label is CubicLabel.Z3_GENERIC:
        # The y³ - 3yz² term peaks along +y in the orthogonal plane.
        val, x = _profile_max(lambda x: 5 * lam * x**3 - 3 * lam * x + mu * np.clip(1 - x * x, 0, None) ** 1.5)
        return val, np.array([x, math.sqrt(max(1 - x * x, 0.0)), 0.0])
    if label is CubicLabel.Z2_GENERIC:
        # 6μxyz is largest with y = ±z = ρ/√2, sign matching x.
        val, x = _profile_max(lambda x: 5 * lam * x**3 - 3 * lam * x + 3 * mu * np.abs(x) * (1 - x * x))
        r = math.sqrt(max(1 - x * x, 0.0) / 2.0)
        return val, np.array([x, r, math.copysign(r, x) if x != 0 else r])
    return None


# --------------------------------------------------------------------------
# cubic classification


@dataclass
class CubicClass:
    """Orbit type of a cubic with the rotation to its normal form.

    ``conjugate(C, S, rotation)`` puts ``C`` into :func:`canonical_cubic` form.
    """

    label: CubicLabel
    lam: float
    mu: float
    rotation: np.ndarray
    residual: float = 0.0
    norm: float = 0.0
    t_eigenvalues: tuple[float, float, float] = (0.0, 0.0, 0.0)
    margins: dict[str, float] = field(default_factory=dict)
    tests: list[tuple[str, float]] = field(default_factory=list)

    @property
    def canonical(self) -> np.ndarray:
        return canonical_cubic(self.label, self.lam, self.mu) * 1.0


def _complete_frame(n: np.ndarray) -> np.ndarray:
    """Right-handed frame ``[n, u, w]`` with ``u`` built from the axis least aligned with ``n``."""
    n = n / np.linalg.norm(n)
    a = np.zeros(3)
    a[int(np.argmin(np.abs(n)))] = 1.0
    u = a - (a @ n) * n
    u /= np.linalg.norm(u)
    return np.column_stack([n, u, np.cross(n, u)])


def _modes(Cf: np.ndarray) -> dict[str, float]:
    """Axial Fourier modes of a cubic about ``e1`` (``Cf`` in a frame ``[n, u, w]``)."""
    return {
        "lam": 0.5 * Cf[0, 0, 0],
        "m1": math.hypot(Cf[0, 0, 1], Cf[0, 0, 2]),
        "p": 0.5 * (Cf[0, 1, 1] - Cf[0, 2, 2]),
        "q": Cf[0, 1, 2],
        "nu1": 0.25 * (Cf[1, 1, 1] - 3.0 * Cf[1, 2, 2]),
        "nu2": 0.25 * (3.0 * Cf[1, 1, 2] - Cf[2, 2, 2]),
    }


def _axial_frame(C: np.ndarray, n: np.ndarray):
    """Frame about ``n`` with ``λ = f(e1)/2 ≥ 0`` and the modes in that frame."""
    R = _complete_frame(n)
    md = _modes(_cubic_conj(C, R))
    if md["lam"] < 0:
        R = R @ P3
        md = _modes(_cubic_conj(C, R))
    return R, md


def _align_phase(R: np.ndarray, re: float, im: float, freq: int, target: float) -> np.ndarray:
    """Rotate about ``e1`` so the mode ``re - i im`` of frequency ``freq`` has argument ``target``.

    Among the ``freq`` solutions modulo 2π the smallest non-negative angle is used.
    """
    phi = math.atan2(-im, re)
    theta = ((target - phi) / freq) % (2.0 * math.pi / freq)
    return R @ _rot1(theta)


def _closest_to_identity(R: np.ndarray, elements) -> np.ndarray:
    best, score = R, -np.inf
    for g in elements:
        cand = R @ g
        tr = float(np.trace(cand))
        if tr > score + 1e-12:
            best, score = cand, tr
    return best


def _best_axial_rotation(R: np.ndarray, with_flip: bool = False) -> np.ndarray:
    """``R @ g`` closest to the identity for ``g`` rotations about ``e1`` (optionally times ``P2``)."""
    cands = [R] + ([R @ P2] if with_flip else [])
    best, score = R, -np.inf
    for base in cands:
        a0 = np.trace(base @ _rot1(0.0))
        api = np.trace(base @ _rot1(math.pi))
        ahalf = np.trace(base @ _rot1(0.5 * math.pi))
        A, B = 0.5 * (a0 + api), 0.5 * (a0 - api)
        Cc = ahalf - A
        theta = math.atan2(Cc, B)
        cand = base @ _rot1(theta)
        tr = float(np.trace(cand))
        if tr > score:
            best, score = cand, tr
    return best


def _canonicalize_z2_axis(C: np.ndarray, n: np.ndarray):
    """Generic Z2 normal form about axis ``n``: ``λ ≥ 0``, ``C122 = C133``, ``C123 = μ ≥ 0``."""
    R, md = _axial_frame(C, n)
    R = _align_phase(R, md["p"], md["q"], 2, -0.5 * math.pi)
    md = _modes(_cubic_conj(C, R))
    return R, md


def _canonicalize_z3_axis(C: np.ndarray, n: np.ndarray):
    R, md = _axial_frame(C, n)
    R = _align_phase(R, md["nu1"], md["nu2"], 3, 0.0)
    return R, _modes(_cubic_conj(C, R))


def _cubic_residual(C: np.ndarray, R: np.ndarray, label: CubicLabel, lam: float, mu: float) -> float:
    return float(np.abs(_cubic_conj(C, R) - canonical_cubic(label, lam, mu)).max())


def _a4_from_max(Cn: np.ndarray):
    """A4 frame from the sphere maximizer (a 3-fold axis of ``6λxyz``)."""
    _, v = sphere_maximize(Cn)
    R, md = _canonicalize_z3_axis(Cn, v)
    R = R @ T_Q.T
    lam = float(_cubic_conj(Cn, R)[0, 1, 2])
    return R, lam, md


def classify_cubic(C, tol: float = DEFAULT_TOL, cross_check: bool = True) -> CubicClass:
    """Orbit type of a trace-free cubic under SO(3).

    The eigenstructure of :func:`t_operator` on the normalized cubic selects a
    distinguished axis; axial Fourier modes about it confirm the type and fix
    the in-plane angle. Parameters satisfy ``λ ≥ 0`` and ``μ ≥ 0``.

    Raises:
        ClassificationError: when the normal-form residual or the sphere
            maximum disagree with the chosen type beyond tolerance.
    """
    C = np.asarray(C, dtype=float)
    norm = float(np.sqrt(np.sum(C * C)))
    tests: list[tuple[str, float]] = [("norm_C", norm)]
    if norm <= tol:
        return CubicClass(CubicLabel.ZERO, 0.0, 0.0, np.eye(3), 0.0, norm, margins={"norm_C": norm}, tests=tests)
    Cn = C / norm
    w, V = np.linalg.eigh(t_operator(Cn))
    g_low, g_high = float(w[1] - w[0]), float(w[2] - w[1])
    tests += [("t_gap_low", g_low), ("t_gap_high", g_high)]
    margins = {"norm_C": norm, "t_gap_low": g_low, "t_gap_high": g_high}
    label, R, lam, mu = CubicLabel.TRIVIAL, None, 0.0, 0.0

    if g_low <= tol and g_high <= tol:
        Ra, la, md = _a4_from_max(Cn)
        res = _cubic_residual(Cn, Ra, CubicLabel.TETRA_A4, la, 0.0)
        tests.append(("a4_form", res))
        if res <= tol:
            label, R, lam = CubicLabel.TETRA_A4, Ra, la
    elif g_low <= tol or g_high <= tol:
        axis = V[:, 2] if g_low <= tol else V[:, 0]
        Ra, md = _axial_frame(Cn, axis)
        off = max(md["m1"], math.hypot(md["p"], md["q"]))
        tests.append(("axial_off_modes", off))
        if off <= tol:
            nu = math.hypot(md["nu1"], md["nu2"])
            tests += [("lambda_n", abs(md["lam"])), ("nu_n", nu)]
            if abs(md["lam"]) <= tol:
                Rz, _ = _canonicalize_z3_axis(Cn, axis)
                R = Rz[:, [1, 2, 0]]
                label, lam = CubicLabel.TRI_S3, float(_cubic_conj(Cn, R)[0, 0, 0])
            elif nu <= tol:
                label, R, lam = CubicLabel.ROT_SO2, Ra, md["lam"]
            else:
                R, md = _canonicalize_z3_axis(Cn, axis)
                label, lam, mu = CubicLabel.Z3_GENERIC, md["lam"], md["nu1"]
    if R is None:
        best = None
        for k in range(3):
            Rk, md = _canonicalize_z2_axis(Cn, V[:, k])
            off = max(md["m1"], math.hypot(md["nu1"], md["nu2"]))
            if best is None or off < best[0]:
                best = (off, Rk, md)
        tests.append(("z2_off_modes", best[0]))
        if best[0] <= tol and (g_low > tol and g_high > tol):
            label, R = CubicLabel.Z2_GENERIC, best[1]
            lam, mu = best[2]["lam"], best[2]["q"]
        else:
            label, R = CubicLabel.TRIVIAL, V[:, ::-1] * np.array([1.0, 1.0, np.linalg.det(V[:, ::-1])])

    if label is CubicLabel.ROT_SO2:
        R = _best_axial_rotation(R)
    else:
        R = _closest_to_identity(R, _CUBIC_FINITE[label])
    if label is not CubicLabel.TRIVIAL:
        Cc = _cubic_conj(Cn, R)
        lam, mu = _extract_lam_mu(label, Cc)
        residual = float(np.abs(Cc - canonical_cubic(label, lam, mu)).max())
    else:
        residual = 0.0
    lam *= norm
    mu *= norm
    if label in (CubicLabel.Z3_GENERIC, CubicLabel.Z2_GENERIC):
        margins["mu_minus_sqrt2_lambda"] = mu - SQRT2 * lam
        margins["lambda_minus_mu"] = lam - mu
    if label is not CubicLabel.TRIVIAL and residual > 10 * tol:
        raise ClassificationError(f"classification unstable at tol={tol:g}: normal-form residual {residual:.3e}")
    if cross_check and label is not CubicLabel.TRIVIAL:
        _max_cross_check(C, R, label, lam, mu, tol)
    return CubicClass(label, float(lam), float(mu), R, residual, norm, tuple(map(float, w)), margins, tests)


def _extract_lam_mu(label: CubicLabel, Cc: np.ndarray) -> tuple[float, float]:
    if label is CubicLabel.TETRA_A4:
        return float(Cc[0, 1, 2]), 0.0
    if label is CubicLabel.TRI_S3:
        return float(Cc[0, 0, 0]), 0.0
    if label is CubicLabel.ROT_SO2:
        return float(0.5 * Cc[0, 0, 0]), 0.0
    if label is CubicLabel.Z3_GENERIC:
        return float(0.5 * Cc[0, 0, 0]), float(Cc[1, 1, 1])
    if label is CubicLabel.Z2_GENERIC:
        return float(0.5 * Cc[0, 0, 0]), float(Cc[0, 1, 2])
    return 0.0, 0.0


def _max_cross_check(C, R, label, lam, mu, tol) -> None:
    """Sphere maximum of ``C`` must agree with the normal form's maximum."""
    norm = float(np.sqrt(np.sum(C * C)))
    ref, arg = _normal_form_max(label, lam, mu)
    found, _ = sphere_maximize(C)
    # The ascent may stop at a local maximum; only an overshoot is conclusive.
    if found > ref + 1e3 * tol * norm:
        raise ClassificationError(
            f"classification unstable at tol={tol:g}: sphere maximum {found:.6g} exceeds normal-form value {ref:.6g}"
        )
    if abs(float(cubic_eval(C, R @ arg)) - ref) > 1e3 * tol * norm:
        raise ClassificationError(f"classification unstable at tol={tol:g}: maximizer mismatch")


# --------------------------------------------------------------------------
# pair classification


@dataclass
class SymmetryReport:
    """Stabilizer of ``(C, S)`` with the canonicalizing rotation.

    ``conjugate(C, S, rotation)`` equals ``canonical_pair(group, params)`` up to
    the reported ``residual``.
    """

    group: Group
    rotation: np.ndarray
    params: dict[str, float | None]
    margins: dict[str, float]
    cubic: CubicClass
    residual: float = 0.0
    ambiguous: bool = False
    tol: float = DEFAULT_TOL
    tests: list[tuple[str, float]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "group": self.group.value,
            "cubic_label": self.cubic.label.value,
            "rotation": [[float(x) for x in row] for row in self.rotation],
            "params": {k: (None if v is None else float(v)) for k, v in self.params.items()},
            "margins": {k: float(v) for k, v in self.margins.items()},
            "residual": float(self.residual),
            "ambiguous": bool(self.ambiguous),
        }


def _s_scale(S: np.ndarray) -> float:
    n = float(np.sqrt(np.sum(S * S)))
    return n if n > 1e-9 else 1.0


def _block_aniso(B: np.ndarray) -> float:
    return math.hypot(0.5 * (B[0, 0] - B[1, 1]), B[0, 1])


def _commutator(S: np.ndarray, g: np.ndarray) -> float:
    return float(np.abs(S @ g - g @ S).max())


def _eigen_frame(S: np.ndarray):
    w, V = np.linalg.eigh(S)
    if np.linalg.det(V) < 0:
        V[:, 2] *= -1.0
    return w, V


def stabilizer_pair(C, S, tol: float = DEFAULT_TOL, cross_check: bool = True) -> SymmetryReport:
    """Stabilizer of the pair ``(C, S)`` inside SO(3) and its canonical form.

    The cubic is classified first; the stabilizer of ``S`` is then intersected
    with the cubic's stabilizer. Comparisons use ``C`` and ``S`` scaled to unit
    norm. Quantities within a factor 10 of ``tol`` set ``ambiguous``.
    """
    C = np.asarray(C, dtype=float)
    S = np.asarray(S, dtype=float)
    sS = _s_scale(S)
    asym = float(np.abs(S - S.T).max()) / sS
    if asym > tol:
        raise ValueError(f"S not symmetric (relative asymmetry {asym:.3e})")
    S = 0.5 * (S + S.T)
    cub = classify_cubic(C, tol, cross_check=cross_check)
    tests = list(cub.tests)
    margins = dict(cub.margins)
    Sc = cub.rotation.T @ S @ cub.rotation
    Sn = Sc / sS
    label = cub.label
    lam, mu = cub.lam, cub.mu
    R = cub.rotation
    group = Group.TRIVIAL

    def record(name, value):
        tests.append((name, float(value)))
        return value

    if label is CubicLabel.ZERO:
        w, V = _eigen_frame(S / sS)
        g01, g12 = record("s_gap_low", w[1] - w[0]), record("s_gap_high", w[2] - w[1])
        if g01 <= tol and g12 <= tol:
            group, R = Group.SO3, np.eye(3)
        elif g01 <= tol or g12 <= tol:
            k = 2 if g01 <= tol else 0
            others = [i for i in range(3) if i != k]
            R = np.column_stack([V[:, k], V[:, others[0]], V[:, others[1]]])
            if np.linalg.det(R) < 0:
                R[:, 2] *= -1.0
            group = Group.Z2xSO2
            R = _best_axial_rotation(R, with_flip=True)
        else:
            R = V[:, ::-1].copy()
            if np.linalg.det(R) < 0:
                R[:, 2] *= -1.0
            group = Group.Z2xZ2
            R = _closest_to_identity(R, _FINITE[Group.Z2xZ2])
    elif label is CubicLabel.ROT_SO2:
        coup = record("s_axis_coupling", float(np.abs(Sn[0, 1:]).max()))
        if coup <= tol:
            an = record("s_block_aniso", _block_aniso(Sn[1:, 1:]))
            if an <= tol:
                group = Group.SO2
                R = _best_axial_rotation(R)
            else:
                w, U = np.linalg.eigh(Sc[1:, 1:])
                e2 = R[:, 1:] @ U[:, 1]
                R = np.column_stack([R[:, 0], e2, np.cross(R[:, 0], e2)])
                group = Group.Z2
                R = _closest_to_identity(R, _FINITE[Group.Z2])
    elif label is CubicLabel.Z3_GENERIC:
        coup = record("s_axis_coupling", float(np.abs(Sn[0, 1:]).max()))
        an = record("s_block_aniso", _block_aniso(Sn[1:, 1:]))
        if coup <= tol and an <= tol:
            group = Group.Z3
    elif label is CubicLabel.TETRA_A4:
        group, R, lam, mu = _a4_branch(Sc, Sn, R, lam, tol, record)
    elif label is CubicLabel.TRI_S3:
        coup = record("s_axis_coupling", float(np.abs(Sn[2, :2]).max()))
        an = record("s_block_aniso", _block_aniso(Sn[:2, :2]))
        if coup <= tol and an <= tol:
            group = Group.S3
        else:
            comms = []
            for alpha in (0.0, math.pi / 3, 2 * math.pi / 3):
                axis = np.array([math.cos(alpha), math.sin(alpha), 0.0])
                comms.append((_commutator(Sn, rotation_about(axis, math.pi)), axis))
            val, axis = min(comms, key=lambda c: c[0])
            record("s3_two_fold_commutator", val)
            if val <= tol:
                Cunit = _cubic_conj(C, R) / cub.norm
                Rz, md = _canonicalize_z2_axis(Cunit, axis)
                R = _closest_to_identity(R @ Rz, _FINITE[Group.Z2])
                group = Group.Z2
                lam = mu = 0.5 * cub.lam
    elif label is CubicLabel.Z2_GENERIC:
        coup = record("s_axis_coupling", float(np.abs(Sn[0, 1:]).max()))
        if coup <= tol:
            group = Group.Z2

    if group is Group.TRIVIAL:
        params: dict[str, float | None] = {"lambda": None, "mu": None, "a": None, "b": None, "c": None, "d": None}
        Cr, Sr = _cubic_conj(C, R), R.T @ S @ R
        residual = 0.0
    else:
        Cr, Sr = _cubic_conj(C, R), R.T @ S @ R
        lam, mu = _group_lam_mu(group, Cr, lam, mu)
        params = {
            "lambda": float(lam),
            "mu": float(mu),
            "a": float(Sr[0, 0]),
            "b": float(Sr[1, 1]),
            "c": float(Sr[2, 2]),
            "d": float(Sr[1, 2]),
        }
        if group in (Group.SO2, Group.Z3, Group.Z2xSO2):
            params["b"] = params["c"] = 0.5 * (Sr[1, 1] + Sr[2, 2])
            params["d"] = 0.0
        elif group in (Group.SO3, Group.A4):
            params["a"] = params["b"] = params["c"] = float(np.trace(Sr) / 3.0)
            params["d"] = 0.0
        elif group is Group.S3:
            params["a"] = params["b"] = 0.5 * (Sr[0, 0] + Sr[1, 1])
            params["d"] = 0.0
        elif group is Group.Z2xZ2:
            params["d"] = 0.0
        params = {k: float(v) for k, v in params.items()}
        Cref, Sref = canonical_pair(group, params)
        cn = max(cub.norm, 1e-300) if cub.norm > tol else 1.0
        residual = max(float(np.abs(Cr - Cref).max()) / cn, float(np.abs(Sr - Sref).max()) / sS)
        if residual > 10 * tol:
            raise ClassificationError(
                f"classification unstable at tol={tol:g}: canonical residual {residual:.3e} for {group.value}"
            )
    margins.update(_pair_margins(group, params))
    ambiguous = any(0.1 * tol < abs(v) < 10 * tol for _, v in tests)
    return SymmetryReport(group, R, params, margins, cub, residual, ambiguous, tol, tests)


def _group_lam_mu(group: Group, Cr: np.ndarray, lam: float, mu: float) -> tuple[float, float]:
    if group in (Group.SO3, Group.Z2xSO2):
        return 0.0, 0.0
    if group in (Group.A4, Group.Z2xZ2):
        return float(Cr[0, 1, 2]), 0.0
    if group is Group.S3:
        return float(Cr[0, 0, 0]), 0.0
    if group is Group.SO2:
        return float(0.5 * Cr[0, 0, 0]), 0.0
    if group is Group.Z3:
        return float(0.5 * Cr[0, 0, 0]), float(Cr[1, 1, 1])
    return float(0.5 * Cr[0, 0, 0]), float(Cr[0, 1, 2])


def _a4_branch(Sc, Sn, R, lam, tol, record):
    """Intersect the A4 stabilizer of ``6λxyz`` with the stabilizer of ``S``."""
    w = np.linalg.eigvalsh(Sn)
    spread = record("s_spread", w[2] - w[0])
    if spread <= tol:
        return Group.A4, _closest_to_identity(R, _FINITE[Group.A4]), lam, 0.0
    off = record("s_offdiag", float(max(abs(Sn[0, 1]), abs(Sn[0, 2]), abs(Sn[1, 2]))))
    if off <= tol:
        # Only cyclic relabellings preserve 6λxyz; choose the representative.
        diag = np.diag(Sc)
        cyc = [np.eye(3), Q, Q @ Q]
        pick = _z2z2_order(diag, tol * _s_scale(Sc))
        return Group.Z2xZ2, R @ cyc[pick], lam, 0.0
    comm = [record(f"s_commutes_P{i + 1}", _commutator(Sn, P)) for i, P in enumerate((P1, P2, P3))]
    ok = [i for i, c in enumerate(comm) if c <= tol]
    if len(ok) == 1:
        i = ok[0]
        # Bring axis i to e1 with a cyclic relabelling (an element of A4).
        Rn = R @ [np.eye(3), Q @ Q, Q][i]
        Sr = Rn.T @ (R @ Sc @ R.T) @ Rn
        if Sr[1, 2] < 0:
            # P2 preserves xyz and flips the sign of S23.
            Rn = Rn @ P2
        return Group.Z2, Rn, 0.0, lam
    axes = [np.array(v) / SQRT3 for v in ((1, 1, 1), (1, -1, -1), (-1, 1, -1), (-1, -1, 1))]
    flips = [np.eye(3), P1, P2, P3]
    vals = [_commutator(Sn, rotation_about(m, 2 * math.pi / 3)) for m in axes]
    k = int(np.argmin(vals))
    record("s_three_fold_commutator", vals[k])
    if vals[k] <= tol:
        Rz = R @ flips[k] @ T_Q
        return Group.Z3, _closest_to_identity(Rz, _FINITE[Group.Z3]), lam / SQRT3, SQRT2 * lam / SQRT3
    return Group.TRIVIAL, R, lam, 0.0


def _z2z2_order(diag: np.ndarray, atol: float) -> int:
    """Index of the cyclic shift putting the canonical representative first.

    With exactly two equal entries the odd one leads; otherwise the largest does.
    """
    shifts = [np.roll(diag, -k) for k in range(3)]
    eq = [abs(diag[i] - diag[j]) <= atol for i, j in ((0, 1), (1, 2), (2, 0))]
    if sum(eq) == 1:
        odd = [2, 0, 1][eq.index(True)]
        return odd
    return int(np.argmax([s[0] for s in shifts]))


def _pair_margins(group: Group, params: dict) -> dict[str, float]:
    if group is Group.TRIVIAL:
        return {}
    a, b, c, d = (params[k] for k in ("a", "b", "c", "d"))
    lam, mu = params["lambda"], params["mu"]
    out = {"a_minus_b": a - b, "b_minus_c": b - c, "a_minus_c": a - c, "d": d}
    if group in (Group.Z3, Group.Z2):
        out["mu_minus_sqrt2_lambda"] = mu - SQRT2 * lam
    if group is Group.Z2:
        out["lambda_minus_mu"] = lam - mu
        out["s3_defect"] = math.hypot(b - c, b + c - 2 * a - 2 * d)
    return out


# --------------------------------------------------------------------------
# residuals


def group_generators(group: Group | str, samples: int = 8, seed: int = 0) -> dict[str, np.ndarray]:
    """Generators of ``group`` in its canonical frame; continuous parts are sampled."""
    group = Group(group)
    rng = np.random.default_rng(seed)
    angles = np.linspace(0.0, 2 * math.pi, samples, endpoint=False)[1:] + 0.1
    if group is Group.SO3:
        from scipy.spatial.transform import Rotation

        mats = Rotation.random(samples, random_state=rng).as_matrix()
        return {f"random_{i}": m for i, m in enumerate(mats)}
    if group is Group.Z2xSO2:
        out = {f"rot_{i}": _rot1(t) for i, t in enumerate(angles)}
        out["P2"] = P2
        return out
    if group is Group.SO2:
        return {f"rot_{i}": _rot1(t) for i, t in enumerate(angles)}
    table = {
        Group.A4: {"P1": P1, "P2": P2, "Q": Q},
        Group.S3: {"P1": P1, "R3": R3},
        Group.Z2xZ2: {"P1": P1, "P2": P2},
        Group.Z3: {"R1": R1},
        Group.Z2: {"P1": P1},
        Group.TRIVIAL: {},
    }
    return table[group]


def generator_residual(C, S, g) -> tuple[float, float]:
    """Max-abs change of ``C`` and ``S`` under the rotation ``g``."""
    Cg, Sg = conjugate(C, S, g)
    return float(np.abs(Cg - C).max()), float(np.abs(Sg - S).max())


@dataclass
class ResidualSet:
    per_generator: dict[str, tuple[float, float]]
    max_raw: float
    max_normalized: float

    def passed(self, tol: float) -> bool:
        return self.max_normalized <= tol


def symmetry_residual(report: SymmetryReport, C, S, samples: int = 8, seed: int = 0) -> ResidualSet:
    """Invariance defect of ``(C, S)`` under every generator of the reported group.

    Generators are transported from the canonical frame with ``R g Rᵀ``.
    Normalized values divide by ``‖C‖`` and ``‖S‖`` when these exceed 1e-9.
    """
    C = np.asarray(C, dtype=float)
    S = np.asarray(S, dtype=float)
    R = report.rotation
    cn = float(np.sqrt(np.sum(C * C)))
    cn = cn if cn > 1e-9 else 1.0
    sn = _s_scale(S)
    per, raw, nrm = {}, 0.0, 0.0
    for name, g in group_generators(report.group, samples, seed).items():
        rc, rs = generator_residual(C, S, R @ g @ R.T)
        per[name] = (rc, rs)
        raw = max(raw, rc, rs)
        nrm = max(nrm, rc / cn, rs / sn)
    return ResidualSet(per, raw, nrm)

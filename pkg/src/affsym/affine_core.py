"""Blaschke apparatus of a parametrized hypersurface ``F: U ⊂ R^3 -> R^4``.

Index conventions used throughout the package:

* ``d1[..., i, :] = F_i``, ``d2[..., i, j, :] = F_ij`` and so on.
* Connection arrays store ``gamma[..., i, j, k] = Γ^k_ij`` (lower, lower, upper).
* ``dh[..., a, i, j] = ∂_a h_ij``.
* The shape operator in coordinates is ``Sc[..., k, i] = S^k_i`` so that
  ``D_i ξ = -Sc[k, i] F_k``.

The engine works on batches of points. The public per-point functions
(:func:`jet`, :func:`apparatus`, ...) are thin wrappers over it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .numerics import combine_stencil, default_step, stencil_points

__all__ = [
    "GeometryError",
    "DomainError",
    "NotImmersionError",
    "DegenerateHypersurfaceError",
    "IndefiniteMetricError",
    "InconsistentNormalError",
    "Jet",
    "TentativeSplit",
    "PointApparatus",
    "CoordinateFields",
    "DEFAULT_TOLERANCES",
    "jet",
    "tentative_split",
    "affine_metric",
    "blaschke_normal",
    "apparatus",
    "apparatus_batch",
    "orthonormalize",
    "gram_schmidt_coefficients",
    "coordinate_fields",
    "levi_civita",
]

DIM = 3
AMBIENT = DIM + 1

# Tangency of Dξ is the only diagnostic that raises; the rest are reported.
DEFAULT_TOLERANCES = {
    "tangency": 1e-6,
    "volume": 1e-8,
    "apolarity": 1e-8,
    "apolarity_abs": 1e-10,
    "c_symmetry": 1e-10,
    "s_symmetry": 1e-8,
    "metric_consistency": 1e-9,
}


class GeometryError(ValueError):
    """Base class for pointwise geometric failures."""


class DomainError(GeometryError):
    pass


class NotImmersionError(GeometryError):
    pass


class DegenerateHypersurfaceError(GeometryError):
    pass


class IndefiniteMetricError(GeometryError):
    pass


class InconsistentNormalError(GeometryError):
    pass


_ERROR_TYPES = {
    1: DegenerateHypersurfaceError,
    2: IndefiniteMetricError,
    3: NotImmersionError,
}


# --------------------------------------------------------------------------
# jets


@dataclass(frozen=True)
class Jet:
    """Partial derivatives of ``F`` at one parameter point.

    ``partials[k]`` has shape ``(3,)*k + (4,)``; ``partials[0]`` is the position.
    ``step`` is ``None`` for exact jets and the finite-difference step otherwise.
    """

    point: np.ndarray
    partials: tuple[np.ndarray, ...]
    method: str = "analytic"
    step: float | None = None

    @property
    def position(self) -> np.ndarray:
        return self.partials[0]

    @property
    def order(self) -> int:
        return len(self.partials) - 1

    def partial(self, *idx: int) -> np.ndarray:
        """``F_{idx}`` for a multi-index of coordinate numbers 0, 1, 2."""
        if len(idx) > self.order:
            raise ValueError(f"jet only carries order {self.order}")
        return self.partials[len(idx)][tuple(idx)]


def _surface_jets(surface, points: np.ndarray, order: int, method: str = "analytic"):
    if method == "analytic":
        return surface.jets(points, order)
    if method == "fd":
        return surface.fd_jets(points, order)
    raise ValueError(f"unknown jet method {method!r}")


def _check_domain(surface, points: np.ndarray, what: str = "point") -> None:
    inside = np.asarray(surface.contains(points))
    if not np.all(inside):
        bad = np.asarray(points)[~inside][0]
        raise DomainError(f"{what} outside surface domain: {tuple(float(x) for x in bad)}")


def _immersion_ok(d1: np.ndarray) -> np.ndarray:
    sv = np.linalg.svd(d1, compute_uv=False)
    return sv[..., -1] > 1e-10 * np.maximum(sv[..., 0], 1e-300)


def jet(surface, point, order: int = 3, method: str = "analytic") -> Jet:
    """Jet of ``surface`` at ``point`` up to ``order`` (at most 4)."""
    if not 0 <= order <= 4:
        raise ValueError("jet order must lie in 0..4")
    p = np.asarray(point, dtype=float).reshape(1, DIM)
    _check_domain(surface, p)
    parts = _surface_jets(surface, p, order, method)
    if order >= 1 and not _immersion_ok(parts[1])[0]:
        raise NotImmersionError("not an immersion here")
    step = None if method == "analytic" else float(surface.fd_step(order))
    return Jet(p[0].copy(), tuple(a[0] for a in parts), method, step)


# --------------------------------------------------------------------------
# batched engine


def _transversal_order(d1: np.ndarray) -> np.ndarray:
    """Coordinate axes sorted from least to most aligned with the tangent space.

    Ties go to the higher axis (e4 before e3 before e2 before e1).
    """
    q, _ = np.linalg.qr(np.swapaxes(d1, -1, -2))
    resid = np.round(1.0 - np.sum(q * q, axis=-1), 12)
    order = np.argsort(-resid[..., ::-1], axis=-1, kind="stable")
    return d1.shape[-1] - 1 - order


def _split(d1: np.ndarray, d2: np.ndarray, e: np.ndarray):
    """Decompose ``F_ij = Σ_k c^k_ij F_k + g_ij e`` for a batch of transversals."""
    n = d1.shape[-2]
    mat = np.concatenate([d1, e[..., None, :]], axis=-2)
    inv = np.linalg.inv(mat)
    coef = d2 @ inv[..., None, :, :]
    return coef[..., :n], coef[..., n], np.linalg.det(mat), inv


def _tentative_batch(d1, d2, d3=None, transversal=None):
    n, dim, amb = d1.shape
    if transversal is None:
        order = _transversal_order(d1)
        e = np.zeros((n, amb))
        e[np.arange(n), order[:, 0]] = 1.0
        # Fall back along the ranked axes if the system is numerically singular.
        for rank in range(1, amb):
            mat = np.concatenate([d1, e[:, None, :]], axis=-2)
            sv = np.linalg.svd(mat, compute_uv=False)
            bad = sv[:, -1] < 1e-12 * sv[:, 0]
            if not np.any(bad):
                break
            e[bad] = 0.0
            e[np.flatnonzero(bad), order[bad, rank]] = 1.0
    else:
        e = np.broadcast_to(np.asarray(transversal, dtype=float), (n, amb)).copy()
    gam, G, D, inv = _split(d1, d2, e)
    out = {"gamma": gam, "G": G, "det": D, "transversal": e}
    if d3 is not None:
        w = inv[..., :, dim]
        dG = np.einsum("nijam,nm->naij", d3, w) - np.einsum("nka,nijk->naij", G, gam)
        out["dG"] = dG
        out["dlogdet"] = np.einsum("nkak->na", gam)
    return out


def _definiteness(G: np.ndarray):
    """Return per-point sign (+1/-1) and an error code (0 ok, 1 degenerate, 2 indefinite)."""
    ev = np.linalg.eigvalsh(G)
    scale = np.max(np.abs(ev), axis=-1)
    small = np.min(np.abs(ev), axis=-1) <= 1e-12 * np.maximum(scale, 1e-300)
    pos = np.all(ev > 0, axis=-1)
    neg = np.all(ev < 0, axis=-1)
    code = np.where(small, 1, np.where(pos | neg, 0, 2))
    sign = np.where(neg, -1.0, 1.0)
    return sign, code


_ERROR_MESSAGES = {
    1: "degenerate hypersurface",
    2: "metric not definite: outside positive-definite scope",
    3: "not an immersion here",
}


def _raise_code(code: int) -> None:
    if code:
        raise _ERROR_TYPES[code](_ERROR_MESSAGES[code])


def levi_civita(h: np.ndarray, dh: np.ndarray) -> np.ndarray:
    """Christoffel symbols ``Γ̂[..., i, j, k]`` of ``h`` from its partials ``dh[..., a, i, j]``."""
    # first[i, j, l] = (∂_i h_jl + ∂_j h_il - ∂_l h_ij) / 2
    first = 0.5 * (dh + np.swapaxes(dh, -3, -2) - np.moveaxis(dh, -3, -1))
    return first @ np.linalg.inv(h)[..., None, :, :]


def _metric_batch(d1, d2):
    """Affine metric from second-order jets only (no derivatives)."""
    t = _tentative_batch(d1, d2)
    sign, code = _definiteness(t["G"])
    G = sign[:, None, None] * t["G"]
    D = np.abs(t["det"])
    detG = np.linalg.det(G)
    with np.errstate(invalid="ignore", divide="ignore"):
        rho = (D * D / detG) ** (1.0 / (d1.shape[-2] + 2))
    return rho[:, None, None] * G, code


@dataclass
class CoordinateFields:
    """Batched coordinate-level Blaschke data (first axis runs over points)."""

    points: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    h: np.ndarray
    dh: np.ndarray
    gamma_hat: np.ndarray
    gamma: np.ndarray
    K: np.ndarray
    C: np.ndarray
    xi: np.ndarray
    basis_inverse: np.ndarray
    h_from_split: np.ndarray
    transversal: np.ndarray
    error: np.ndarray
    S: np.ndarray | None = None
    tau: np.ndarray | None = None
    dxi: np.ndarray | None = None
    extras: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.points.shape[0]


def _fields_from_jets(points, d1, d2, d3, dh_override=None, transversal=None) -> CoordinateFields:
    dim, amb = d1.shape[-2:]
    err = np.where(_immersion_ok(d1), 0, 3)
    # Placeholder geometry for broken points keeps the batch linear algebra finite.
    safe = err == 0
    if not np.all(safe):
        d1 = d1.copy()
        d1[~safe] = np.eye(dim, amb)
    t = _tentative_batch(d1, d2, d3, transversal)
    sign, code = _definiteness(t["G"])
    err = np.where(err == 0, code, err)
    good = err == 0
    G = sign[:, None, None] * t["G"]
    G[~good] = np.eye(dim)
    D = np.abs(t["det"])
    D[~good] = 1.0
    detG = np.linalg.det(G)
    rho = (D * D / detG) ** (1.0 / (dim + 2))
    h = rho[:, None, None] * G
    if dh_override is not None:
        dh = dh_override
    else:
        dG = sign[:, None, None, None] * t["dG"]
        Ginv = np.linalg.inv(G)
        dlogrho = (2.0 * t["dlogdet"] - np.einsum("nij,naji->na", Ginv, dG)) / (dim + 2)
        dh = rho[:, None, None, None] * (dG + G[:, None] * dlogrho[:, :, None, None])
    dh = np.where(good[:, None, None, None], dh, 0.0)
    hinv = np.linalg.inv(h)
    ghat = levi_civita(h, dh)
    lap = np.einsum("nij,nijm->nm", hinv, d2) - np.einsum("nij,nijk,nkm->nm", hinv, ghat, d1)
    xi = lap / dim
    gamma, h_split, _, inv = _split(d1, d2, xi)
    K = gamma - ghat
    C = np.einsum("nijl,nlk->nijk", K, h)
    return CoordinateFields(
        points=points,
        d1=d1,
        d2=d2,
        h=h,
        dh=dh,
        gamma_hat=ghat,
        gamma=gamma,
        K=K,
        C=C,
        xi=xi,
        basis_inverse=inv,
        h_from_split=h_split,
        transversal=t["transversal"],
        error=err,
    )


def _metric_derivative_fd(surface, points, method, step_scale=1.0):
    steps = default_step(points, 1.0 / 3.0, step_scale)
    n = points.shape[0]
    pts = stencil_points(points, steps).reshape(n * DIM * 4, DIM)
    j = _surface_jets(surface, pts, 2, method)
    hs, _ = _metric_batch(j[1], j[2])
    return combine_stencil(hs.reshape(n, DIM, 4, DIM, DIM), steps)


def coordinate_fields(
    surface,
    points,
    *,
    with_shape: bool = True,
    derivatives: str = "analytic",
    jet_method: str = "analytic",
    step_scale: float = 1.0,
    check_domain: bool = True,
) -> CoordinateFields:
    """Batched coordinate-level apparatus at ``points`` of shape ``(N, 3)``.

    ``derivatives`` selects how ``∂h`` is obtained: ``"analytic"`` uses third
    order jets, ``"fd"`` differentiates the metric numerically. When
    ``with_shape`` is set, ``S`` is computed from a Richardson-extrapolated
    central difference of ``ξ`` with step ``eps**(1/3) (1+|x|)``.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if check_domain:
        _check_domain(surface, points)
    if derivatives not in ("analytic", "fd"):
        raise ValueError(f"unknown derivative mode {derivatives!r}")
    order = 3 if derivatives == "analytic" else 2
    j = _surface_jets(surface, points, order, jet_method)
    dh = None
    if derivatives == "fd":
        dh = _metric_derivative_fd(surface, points, jet_method, step_scale)
    f = _fields_from_jets(points, j[1], j[2], j[3] if order == 3 else None, dh)
    if not with_shape:
        return f
    steps = default_step(points, 1.0 / 3.0, step_scale)
    n = points.shape[0]
    pts = stencil_points(points, steps).reshape(n * DIM * 4, DIM)
    if check_domain:
        _check_domain(surface, pts, "finite-difference stencil")
    sub = coordinate_fields(
        surface,
        pts,
        with_shape=False,
        derivatives=derivatives,
        jet_method=jet_method,
        step_scale=step_scale,
        check_domain=False,
    )
    dxi = combine_stencil(sub.xi.reshape(n, DIM, 4, AMBIENT), steps)
    sub_err = sub.error.reshape(n, DIM * 4).max(axis=1)
    f.error = np.where(f.error == 0, sub_err, f.error)
    coef = dxi @ f.basis_inverse
    f.S = -np.swapaxes(coef[..., :DIM], -1, -2)
    f.tau = coef[..., DIM]
    f.dxi = dxi
    f.extras["xi_step"] = steps
    return f


# --------------------------------------------------------------------------
# public per-point operations


@dataclass(frozen=True)
class TentativeSplit:
    """``F_ij = Γ̃^k_ij F_k + G_ij ξ̃`` for the transversal ``ξ̃``."""

    christoffel: np.ndarray
    G: np.ndarray
    transversal: np.ndarray
    determinant: float


def tentative_split(j: Jet, transversal=None) -> TentativeSplit:
    """Split the second partials of ``j`` along a constant transversal.

    Without an explicit transversal, the coordinate axis least aligned with the
    tangent space is used.
    """
    if j.order < 2:
        raise ValueError("tentative split needs a jet of order >= 2")
    d1 = j.partials[1][None]
    if not _immersion_ok(d1)[0]:
        raise NotImmersionError("not an immersion here")
    if transversal is not None:
        mat = np.vstack([j.partials[1], np.asarray(transversal, dtype=float)])
        sv = np.linalg.svd(mat, compute_uv=False)
        if sv[-1] < 1e-12 * sv[0]:
            transversal = None
    t = _tentative_batch(d1, j.partials[2][None], None, transversal)
    G = 0.5 * (t["G"][0] + t["G"][0].T)
    _, code = _definiteness(G[None])
    if code[0] == 1:
        _raise_code(1)
    return TentativeSplit(t["gamma"][0], G, t["transversal"][0], float(t["det"][0]))


def affine_metric(G, orientation: int | None = None, volume: float = 1.0) -> np.ndarray:
    """Blaschke metric ``h = (volume^2 / det G)^(1/5) G`` for a definite ``G``.

    ``volume`` is ``|det(F_1, F_2, F_3, ξ̃)|`` for the transversal that produced
    ``G``; the default 1 covers unimodular frames. A negative definite ``G`` is
    flipped; ``orientation`` may force the sign instead.
    """
    G = np.asarray(G, dtype=float)
    sign, code = _definiteness(G[None])
    _raise_code(int(code[0]))
    s = float(sign[0]) if orientation is None else float(np.sign(orientation))
    Gs = s * G
    detG = np.linalg.det(Gs)
    if detG <= 0:
        raise IndefiniteMetricError("metric not definite: orientation sign leaves G negative")
    return (volume * volume / detG) ** (1.0 / (DIM + 2)) * Gs


def blaschke_normal(surface, point, derivatives: str = "analytic") -> np.ndarray:
    """Affine normal ``ξ = Δ_h F / 3`` at ``point``.

    Raises the same degeneracy errors as :func:`tentative_split`.
    """
    f = coordinate_fields(surface, [point], with_shape=False, derivatives=derivatives)
    _raise_code(int(f.error[0]))
    return f.xi[0]


def gram_schmidt_coefficients(h) -> np.ndarray:
    """Lower-triangular ``E`` with ``E h Eᵀ = I`` (Gram-Schmidt in order 1, 2, 3)."""
    h = np.asarray(h, dtype=float)
    L = np.linalg.cholesky(0.5 * (h + np.swapaxes(h, -1, -2)))
    eye = np.broadcast_to(np.eye(h.shape[-1]), h.shape)
    return np.linalg.solve(L, eye)


def orthonormalize(h, basis=None) -> np.ndarray:
    """h-orthonormal frame obtained from ``basis`` by Gram-Schmidt.

    ``h`` is the Gram matrix of ``basis`` (rows). Returns the frame vectors as
    rows. Without a basis, the coefficient matrix itself is returned.
    """
    E = gram_schmidt_coefficients(h)
    if basis is None:
        return E
    return E @ np.asarray(basis, dtype=float)


@dataclass
class PointApparatus:
    """Blaschke data at one point in an h-orthonormal frame.

    ``frame`` rows are tangent vectors ``f_a = Σ_i E[a, i] F_i``. ``C`` and ``S``
    are frame components; ``h`` is the coordinate metric.
    """

    jet: Jet
    frame: np.ndarray
    coefficients: np.ndarray
    xi: np.ndarray
    h: np.ndarray
    C: np.ndarray
    S: np.ndarray
    diagnostics: dict[str, float]
    coordinate: dict[str, Any] = field(default_factory=dict, repr=False)

    @property
    def point(self) -> np.ndarray:
        return self.jet.point


def _frame_data(f: CoordinateFields):
    """Orthonormal-frame components and diagnostics for every point of ``f``."""
    E = gram_schmidt_coefficients(f.h)
    frame = E @ f.d1
    orient = np.linalg.det(np.concatenate([frame, f.xi[:, None, :]], axis=1))
    flip = orient < 0
    E[flip, DIM - 1] *= -1.0
    frame[flip, DIM - 1] *= -1.0
    Craw = np.einsum("nai,nbj,nck,nijk->nabc", E, E, E, f.C)
    perms = [(0, 1, 2, 3), (0, 1, 3, 2), (0, 2, 1, 3), (0, 2, 3, 1), (0, 3, 1, 2), (0, 3, 2, 1)]
    Csym = sum(np.transpose(Craw, p) for p in perms) / 6.0
    Einv = np.linalg.inv(E)
    S = None
    if f.S is not None:
        S = np.swapaxes(Einv, -1, -2) @ f.S @ np.swapaxes(E, -1, -2)
    return E, frame, Craw, Csym, S


def _diagnostics(f: CoordinateFields, Craw, Csym, S, frame):
    normC = np.sqrt(np.sum(Csym**2, axis=(1, 2, 3)))
    trace = np.abs(np.einsum("nkki->ni", Csym)).max(axis=1)
    apol = np.where(normC >= 1e-6, trace / np.maximum(normC, 1e-300), trace)
    sym = np.abs(Craw - Csym).max(axis=(1, 2, 3))
    vol = np.linalg.det(np.concatenate([f.d1, f.xi[:, None, :]], axis=1))
    sq = np.sqrt(np.linalg.det(f.h))
    out = {
        "volume": np.abs(np.abs(vol) - sq) / sq,
        "apolarity": apol,
        "c_symmetry": sym,
        "metric_consistency": np.abs(f.h_from_split - f.h).max(axis=(1, 2))
        / np.abs(f.h).max(axis=(1, 2)),
        "norm_C": normC,
    }
    if S is not None:
        nS = np.sqrt(np.sum(S**2, axis=(1, 2)))
        out["s_symmetry"] = np.abs(S - np.swapaxes(S, 1, 2)).max(axis=(1, 2)) / (1.0 + nS)
        dscale = 1.0 + np.abs(f.dxi).max(axis=(1, 2))
        out["tangency"] = np.abs(f.tau).max(axis=1) / dscale
    return out


def apparatus_batch(
    surface,
    points,
    *,
    derivatives: str = "analytic",
    tolerances: dict | None = None,
    step_scale: float = 1.0,
) -> list[PointApparatus | GeometryError]:
    """Apparatus at many points; failing points yield the exception instead."""
    tol = dict(DEFAULT_TOLERANCES)
    tol.update(tolerances or {})
    points = np.atleast_2d(np.asarray(points, dtype=float))
    # Domain problems are reported per point rather than aborting the batch.
    n = points.shape[0]
    steps = default_step(points, 1.0 / 3.0, step_scale)
    stencil_in = np.asarray(surface.contains(stencil_points(points, steps).reshape(-1, DIM)))
    ok_dom = np.asarray(surface.contains(points)) & stencil_in.reshape(n, -1).all(axis=1)
    results: list[PointApparatus | GeometryError] = [None] * n  # type: ignore[list-item]
    idx = np.flatnonzero(ok_dom)
    for i in np.flatnonzero(~ok_dom):
        results[i] = DomainError(
            f"point or stencil outside surface domain: {tuple(float(x) for x in points[i])}"
        )
    if idx.size == 0:
        return results
    f = coordinate_fields(
        surface, points[idx], derivatives=derivatives, step_scale=step_scale, check_domain=False
    )
    E, frame, Craw, Csym, S = _frame_data(f)
    diag = _diagnostics(f, Craw, Csym, S, frame)
    j = _surface_jets(surface, points[idx], 3, "analytic")
    for pos, i in enumerate(idx):
        code = int(f.error[pos])
        if code:
            results[i] = _ERROR_TYPES[code](_ERROR_MESSAGES[code])
            continue
        d = {k: float(v[pos]) for k, v in diag.items()}
        if d["tangency"] > tol["tangency"]:
            results[i] = InconsistentNormalError(
                f"inconsistent normal: tangency residual {d['tangency']:.3e}"
            )
            continue
        d["xi_step"] = float(f.extras["xi_step"][pos].max())
        jt = Jet(points[i].copy(), tuple(a[pos] for a in j), "analytic", None)
        results[i] = PointApparatus(
            jet=jt,
            frame=frame[pos],
            coefficients=E[pos],
            xi=f.xi[pos],
            h=f.h[pos],
            C=Csym[pos],
            S=0.5 * (S[pos] + S[pos].T),
            diagnostics=d,
            coordinate={
                "gamma": f.gamma[pos],
                "gamma_hat": f.gamma_hat[pos],
                "K": f.K[pos],
                "Sc": f.S[pos],
                "dh": f.dh[pos],
                "S_raw": S[pos],
                "transversal": f.transversal[pos],
            },
        )
    return results


def apparatus(
    surface,
    point,
    *,
    derivatives: str = "analytic",
    tolerances: dict | None = None,
    step_scale: float = 1.0,
) -> PointApparatus:
    """Full Blaschke apparatus at ``point`` in an h-orthonormal frame."""
    res = apparatus_batch(
        surface, [point], derivatives=derivatives, tolerances=tolerances, step_scale=step_scale
    )[0]
    if isinstance(res, Exception):
        raise res
    return res

"""Residual suites for the structure equations, adapted frames and grid scans.

Derivatives of apparatus fields (Christoffel symbols, difference tensor,
shape operator, metric, frames) are Richardson-extrapolated central
differences on the parameter grid. Tolerances widen by one decade per
finite-difference layer.
"""

from __future__ import annotations

import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .affine_core import (
    AMBIENT,
    DIM,
    DomainError,
    GeometryError,
    apparatus_batch,
    coordinate_fields,
)
from .numerics import combine_stencil, stencil_points
from .symmetry import (
    DEFAULT_TOL,
    ClassificationError,
    Group,
    SymmetryReport,
    _FINITE,
    stabilizer_pair,
    symmetry_residual,
)

__all__ = [
    "ResidualRecord",
    "Fault",
    "FIELD_STEP",
    "RESIDUAL_TOLERANCES",
    "check_fundamental",
    "fundamental_batch",
    "random_faults",
    "AdaptedFrame",
    "adapted_frame",
    "adapted_frames",
    "check_structure",
    "StructureReport",
    "WarpedCase",
    "WarpedCaseReport",
    "warped_case",
    "PointRecord",
    "GridScan",
    "scan",
    "parse_grid",
    "grid_points",
    "t_line",
]

# Relative step for the outer difference layer; the shape operator itself
# already uses an inner eps**(1/3) layer.
FIELD_STEP = 1e-3

# One entry per named identity. Algebraic checks sit at the base level,
# each finite-difference layer adds a decade.
RESIDUAL_TOLERANCES = {
    "gauss_formula": 1e-8,
    "weingarten": 1e-7,
    "volume": 1e-8,
    "apolarity": 1e-8,
    "c_symmetry": 1e-8,
    "s_symmetry": 1e-7,
    "cubic_form": 1e-7,
    "levi_civita": 1e-7,
    "gauss": 1e-6,
    "codazzi_c": 1e-6,
    "gauss_hat": 1e-6,
    "codazzi_s": 1e-5,
}
_FD_LAYERS = {
    "gauss_formula": 0,
    "weingarten": 1,
    "volume": 0,
    "apolarity": 0,
    "c_symmetry": 0,
    "s_symmetry": 1,
    "cubic_form": 1,
    "levi_civita": 1,
    "gauss": 1,
    "codazzi_c": 1,
    "gauss_hat": 1,
    "codazzi_s": 2,
}


@dataclass(frozen=True)
class ResidualRecord:
    """A named residual; ``passed`` is ``value <= tolerance``."""

    name: str
    value: float
    scale: float
    tolerance: float
    fd_layers: int = 0

    @property
    def passed(self) -> bool:
        return bool(self.value <= self.tolerance)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "value": float(self.value),
            "scale": float(self.scale),
            "tolerance": float(self.tolerance),
            "pass": self.passed,
        }


@dataclass(frozen=True)
class Fault:
    """Additive corruption of one entry of one apparatus component.

    ``component`` is one of ``gamma``, ``gamma_hat``, ``K``, ``S``, ``h``, ``xi``.
    """

    component: str
    index: tuple[int, ...]
    delta: float


_FAULT_SHAPES = {
    "gamma": (DIM, DIM, DIM),
    "gamma_hat": (DIM, DIM, DIM),
    "K": (DIM, DIM, DIM),
    "S": (DIM, DIM),
    "h": (DIM, DIM),
    "xi": (AMBIENT,),
}


def random_faults(count: int, seed: int = 0, magnitude=(0.05, 0.5)) -> list[Fault]:
    """Deterministic sample of single-entry faults over every component."""
    rng = np.random.default_rng(seed)
    names = sorted(_FAULT_SHAPES)
    out = []
    for i in range(count):
        comp = names[i % len(names)]
        idx = tuple(int(rng.integers(0, s)) for s in _FAULT_SHAPES[comp])
        delta = float(rng.uniform(*magnitude) * rng.choice([-1.0, 1.0]))
        out.append(Fault(comp, idx, delta))
    return out


# --------------------------------------------------------------------------
# fundamental equations


def _field_steps(points: np.ndarray, step: float) -> np.ndarray:
    return step * (1.0 + np.abs(points))


def _fields_with_derivatives(surface, points: np.ndarray, step: float):
    """Apparatus fields at ``points`` plus their coordinate derivatives."""
    n = points.shape[0]
    steps = _field_steps(points, step)
    pts = stencil_points(points, steps).reshape(n * DIM * 4, DIM)
    f = coordinate_fields(surface, np.concatenate([points, pts]), derivatives="analytic")
    bad = f.error != 0
    center = {
        "gamma": f.gamma[:n],
        "gamma_hat": f.gamma_hat[:n],
        "K": f.K[:n],
        "S": f.S[:n],
        "h": f.h[:n],
        "xi": f.xi[:n],
        "d1": f.d1[:n],
        "d2": f.d2[:n],
        "dxi": f.dxi[:n],
    }
    deriv = {}
    for key in ("gamma", "gamma_hat", "K", "S", "h"):
        arr = {"S": f.S, "h": f.h}.get(key, getattr(f, key))[n:]
        deriv[key] = combine_stencil(arr.reshape((n, DIM, 4) + arr.shape[1:]), steps)
    err = bad[:n] | bad[n:].reshape(n, -1).any(axis=1)
    return center, deriv, err, f.error


def _apply_fault(center: dict, fault: Fault | None) -> dict:
    if fault is None:
        return center
    out = dict(center)
    arr = out[fault.component].copy()
    arr[(slice(None),) + tuple(fault.index)] += fault.delta
    out[fault.component] = arr
    return out


def _rel(diff: np.ndarray, *terms: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Max-abs residual over trailing axes divided by ``1 + max|terms|``."""
    axes = tuple(range(1, diff.ndim))
    scale = 1.0 + np.max([np.abs(t).max(axis=tuple(range(1, t.ndim))) for t in terms], axis=0)
    return np.abs(diff).max(axis=axes) / scale, scale


def _curvature(G: np.ndarray, dG: np.ndarray) -> np.ndarray:
    """``R[a,b,c,d]``: component ``d`` of ``R(∂a,∂b)∂c`` for Christoffels ``G[i,j,k] = Γ^k_ij``."""
    lin = dG - np.swapaxes(dG, 1, 2)
    quad = np.einsum("nbce,naed->nabcd", G, G) - np.einsum("nace,nbed->nabcd", G, G)
    return lin + quad


def _fundamental_values(c: dict, d: dict) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    G, Gh, K, S, h = c["gamma"], c["gamma_hat"], c["K"], c["S"], c["h"]
    eye = np.eye(DIM)
    hS = np.einsum("neb,new->nbw", S, h)  # h(S∂b, ∂w)
    out = {}

    # D_{∂i}∂j = Γ^k_ij ∂k + h_ij ξ and D_{∂a}ξ = -S^k_a ∂k.
    split = c["d2"] - np.einsum("nijk,nkm->nijm", G, c["d1"]) - h[..., None] * c["xi"][:, None, None, :]
    out["gauss_formula"] = _rel(split, c["d2"])
    wein = c["dxi"] + np.einsum("nka,nkm->nam", S, c["d1"])
    out["weingarten"] = _rel(wein, c["dxi"])

    vol = np.abs(np.linalg.det(np.concatenate([c["d1"], c["xi"][:, None, :]], axis=1)))
    sq = np.sqrt(np.abs(np.linalg.det(h)))
    out["volume"] = (np.abs(vol - sq) / sq, sq)

    trace = np.einsum("najj->na", K)
    out["apolarity"] = _rel(trace, K)

    Cc = np.einsum("nijl,nlk->nijk", K, h)
    out["c_symmetry"] = _rel(
        np.stack([Cc - np.swapaxes(Cc, 1, 2), Cc - np.swapaxes(Cc, 2, 3)], axis=1), Cc
    )
    out["s_symmetry"] = _rel(hS - np.swapaxes(hS, 1, 2), hS)

    # ∇h must equal the cubic form -2 h(K·,·).
    nab_h = d["h"] - np.einsum("nabe,nec->nabc", G, h) - np.einsum("nace,nbe->nabc", G, h)
    out["cubic_form"] = _rel(nab_h + 2.0 * Cc, d["h"], Cc)
    nab_hat = d["h"] - np.einsum("nabe,nec->nabc", Gh, h) - np.einsum("nace,nbe->nabc", Gh, h)
    out["levi_civita"] = _rel(nab_hat, d["h"])

    R = _curvature(G, d["gamma"])
    rhs = np.einsum("nbc,nda->nabcd", h, S) - np.einsum("nac,ndb->nabcd", h, S)
    out["gauss"] = _rel(R - rhs, d["gamma"], rhs)

    Rh = _curvature(Gh, d["gamma_hat"])
    comm = np.einsum("nbce,naed->nabcd", K, K) - np.einsum("nace,nbed->nabcd", K, K)
    rhs_h = 0.5 * (
        np.einsum("nbc,nda->nabcd", h, S)
        - np.einsum("nac,ndb->nabcd", h, S)
        + np.einsum("nbc,ad->nabcd", hS, eye)
        - np.einsum("nac,bd->nabcd", hS, eye)
    ) - comm
    out["gauss_hat"] = _rel(Rh - rhs_h, d["gamma_hat"], rhs_h)

    # (∇̂_a C)(b,c,w) - (∇̂_b C)(a,c,w) against the S/h right-hand side, C = -2h(K·,·).
    Cp = -2.0 * Cc
    dCp = -2.0 * (np.einsum("naijl,nlk->naijk", d["K"], h) + np.einsum("nijl,nalk->naijk", K, d["h"]))
    cov = (
        dCp
        - np.einsum("nabe,necw->nabcw", Gh, Cp)
        - np.einsum("nace,nbew->nabcw", Gh, Cp)
        - np.einsum("nawe,nbce->nabcw", Gh, Cp)
    )
    lhs = cov - np.swapaxes(cov, 1, 2)
    rhs_c = (
        np.einsum("nac,nbw->nabcw", h, hS)
        - np.einsum("nbc,naw->nabcw", h, hS)
        + np.einsum("nbc,naw->nabcw", hS, h)
        - np.einsum("nac,nbw->nabcw", hS, h)
    )
    out["codazzi_c"] = _rel(lhs - rhs_c, dCp, rhs_c)

    # (∇_a S)∂b - (∇_b S)∂a with (∇_a S)^d_b = ∂_a S^d_b + Γ^d_ae S^e_b - S^d_e Γ^e_ab.
    nab_S = np.einsum("nadb->nabd", d["S"]) + np.einsum("naed,neb->nabd", G, S) - np.einsum(
        "nde,nabe->nabd", S, G
    )
    out["codazzi_s"] = _rel(nab_S - np.swapaxes(nab_S, 1, 2), d["S"])
    return out


def fundamental_batch(
    surface,
    points,
    *,
    step: float = FIELD_STEP,
    tolerances: dict | None = None,
    fault: Fault | None = None,
) -> list[list[ResidualRecord] | GeometryError]:
    """:func:`check_fundamental` over many points; failing points yield the exception."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    tol = dict(RESIDUAL_TOLERANCES)
    tol.update(tolerances or {})
    steps = _field_steps(points, step)
    pts = stencil_points(points, steps).reshape(-1, DIM)
    inside = np.asarray(surface.contains(points)) & np.asarray(surface.contains(pts)).reshape(
        points.shape[0], -1
    ).all(axis=1)
    out: list = [None] * points.shape[0]
    for i in np.flatnonzero(~inside):
        out[i] = DomainError("finite-difference stencil leaves the surface domain")
    idx = np.flatnonzero(inside)
    if idx.size:
        try:
            c, d, err, _ = _fields_with_derivatives(surface, points[idx], step)
        except DomainError as exc:
            for i in idx:
                out[i] = exc
            return out
        vals = _fundamental_values(_apply_fault(c, fault), d)
        for pos, i in enumerate(idx):
            if err[pos]:
                out[i] = GeometryError("apparatus undefined on the stencil")
                continue
            out[i] = [
                ResidualRecord(name, float(v[0][pos]), float(v[1][pos]), tol[name], _FD_LAYERS[name])
                for name, v in vals.items()
            ]
    return out


def check_fundamental(
    surface,
    point,
    *,
    step: float = FIELD_STEP,
    tolerances: dict | None = None,
    fault: Fault | None = None,
) -> list[ResidualRecord]:
    """Residuals of the structure equations at one point.

    Covers the Gauss equations for the induced connection and for the
    Levi-Civita connection, the Codazzi equations for the cubic form and for
    the shape operator, h-symmetry of ``S``, apolarity, the volume condition,
    and the compatibility ``∇h = -2h(K·,·)``.

    Raises:
        DomainError: if the stencil leaves the surface domain.
    """
    res = fundamental_batch(surface, [point], step=step, tolerances=tolerances, fault=fault)[0]
    if isinstance(res, Exception):
        raise res
    return res


# --------------------------------------------------------------------------
# adapted frames


_FRAME_GROUPS = (Group.SO2, Group.Z3, Group.Z2xZ2)


@dataclass
class AdaptedFrame:
    """Canonical frame ``e_i = coefficients[i, j] ∂_j`` and its Levi-Civita coefficients.

    ``connection[i, j, k]`` is ``φ_ij^k = h(∇̂_{e_i} e_j, e_k)``.
    """

    point: np.ndarray
    group: Group
    coefficients: np.ndarray
    connection: np.ndarray
    fields: dict[str, float]
    metric: np.ndarray | None = None

    @property
    def frame(self) -> np.ndarray:
        return self.coefficients

    def phi(self, i: int, j: int, k: int) -> float:
        """One-based access ``φ_ij^k``."""
        return float(self.connection[i - 1, j - 1, k - 1])

    def antisymmetry(self) -> float:
        return float(np.abs(self.connection + np.swapaxes(self.connection, 1, 2)).max())


def _canonical_coefficients(app, report: SymmetryReport) -> np.ndarray:
    return report.rotation.T @ app.coefficients


def _align(coef: np.ndarray, ref: np.ndarray, group: Group) -> np.ndarray:
    """Pick the stabilizer gauge of ``coef`` closest to ``ref`` (rows are frame vectors)."""
    if group is Group.SO2:
        # In-plane rotation about e1 minimizing the distance (2D Procrustes).
        M = coef[1:] @ ref[1:].T
        theta = math.atan2(M[0, 1] - M[1, 0], M[0, 0] + M[1, 1])
        c, s = math.cos(theta), math.sin(theta)
        rot = np.array([[c, s], [-s, c]])
        out = coef.copy()
        out[1:] = rot.T @ coef[1:]
        return out
    best, dist = coef, np.inf
    for g in _FINITE[group]:
        cand = g.T @ coef
        dd = float(np.abs(cand - ref).max())
        if dd < dist:
            best, dist = cand, dd
    return best


def _reports(apps, tol, n_centre):
    reps = []
    for i, a in enumerate(apps):
        if isinstance(a, Exception):
            reps.append(a)
            continue
        try:
            reps.append(stabilizer_pair(a.C, a.S, tol, cross_check=i < n_centre))
        except ClassificationError as exc:
            reps.append(exc)
    return reps


def adapted_frames(
    surface,
    points,
    *,
    step: float = FIELD_STEP,
    tol: float = DEFAULT_TOL,
) -> list[AdaptedFrame | Exception]:
    """Adapted frames at many points (see :func:`adapted_frame`)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n = points.shape[0]
    steps = _field_steps(points, step)
    pts = np.concatenate([points, stencil_points(points, steps).reshape(-1, DIM)])
    apps = apparatus_batch(surface, pts)
    reps = _reports(apps, tol, n)
    out: list = []
    for i in range(n):
        app, rep = apps[i], reps[i]
        if isinstance(app, Exception) or isinstance(rep, Exception):
            out.append(app if isinstance(app, Exception) else rep)
            continue
        if rep.group not in _FRAME_GROUPS:
            out.append(ValueError(f"no adapted-frame procedure for group {rep.group.value}"))
            continue
        ref = _canonical_coefficients(app, rep)
        nb = []
        failed = None
        for k in range(DIM * 4):
            j = n + i * DIM * 4 + k
            a_, r_ = apps[j], reps[j]
            if isinstance(a_, Exception) or isinstance(r_, Exception):
                failed = a_ if isinstance(a_, Exception) else r_
                break
            if r_.group is not rep.group:
                failed = ValueError("symmetry group changes across the stencil")
                break
            nb.append(_align(_canonical_coefficients(a_, r_), ref, rep.group))
        if failed is not None:
            out.append(failed)
            continue
        nb = np.array(nb).reshape(1, DIM, 4, DIM, DIM)
        dE = combine_stencil(nb, steps[i : i + 1])[0]  # dE[a, i, b] = ∂_a E[i, b]
        Gh = app.coordinate["gamma_hat"]
        v = np.einsum("ia,ajc->ijc", ref, dE) + np.einsum("ia,jb,abc->ijc", ref, ref, Gh)
        phi = np.einsum("ijc,cd,kd->ijk", v, app.h, ref)
        fields = {k: rep.params[k] for k in ("lambda", "mu", "a", "b", "c", "d")}
        fields["eta"] = float(phi[1, 0, 1])
        if rep.group is Group.Z2xZ2:
            fields["alpha"] = float(phi[0, 2, 1])
            fields["beta"] = float(phi[2, 1, 0])
            fields["gamma"] = float(phi[1, 0, 2])
        out.append(AdaptedFrame(points[i].copy(), rep.group, ref, phi, fields, app.h.copy()))
    return out


def adapted_frame(surface, point, *, step: float = FIELD_STEP, tol: float = DEFAULT_TOL) -> AdaptedFrame:
    """Canonical frame field at ``point`` with connection coefficients.

    Neighbouring canonical frames are gauge-aligned to the centre before
    differencing: SO2 frames by an in-plane rotation, finite groups by the
    stabilizer element closest to the centre frame.

    Raises:
        ValueError: if the pointwise group is not SO2, Z3 or Z2xZ2.
    """
    res = adapted_frames(surface, [point], step=step, tol=tol)[0]
    if isinstance(res, Exception):
        raise res
    return res


# --------------------------------------------------------------------------
# structure equations along a line


def t_line(surface, count: int = 21, at=None, interval=None) -> np.ndarray:
    """Points along the first coordinate with the others fixed (default: box centre)."""
    box = np.asarray(surface.domain, dtype=float)
    lo, hi = interval if interval is not None else box[0]
    rest = np.asarray(at, dtype=float) if at is not None else box[1:].mean(axis=1)
    t = np.linspace(lo, hi, int(count))
    return np.column_stack([t, np.tile(rest, (t.size, 1))])


@dataclass
class StructureReport:
    """Residuals along a line plus the sampled scalar fields."""

    records: list[ResidualRecord]
    t: np.ndarray
    fields: dict[str, np.ndarray]
    warping: np.ndarray
    curvature: np.ndarray

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.records)


_LINE_FIELDS = ("lambda", "mu", "a", "b", "eta")


def _frames_with_gradients(surface, points, step, tol):
    """Adapted frames at ``points`` and the coordinate gradients of their scalar fields."""
    n = points.shape[0]
    steps = _field_steps(points, step)
    pts = np.concatenate([points, stencil_points(points, steps).reshape(-1, DIM)])
    frames = adapted_frames(surface, pts, step=step, tol=tol)
    for fr in frames:
        if isinstance(fr, Exception):
            raise ValueError(f"adapted frame unavailable: {fr}") from fr
    centre = frames[:n]
    grads = {}
    for key in _LINE_FIELDS:
        vals = np.array([fr.fields[key] for fr in frames[n:]]).reshape(n, DIM, 4)
        grads[key] = combine_stencil(vals, steps)
    speed = np.array([_e1_dt(fr) for fr in frames[n:]]).reshape(n, DIM, 4)
    grads["e1_dt"] = combine_stencil(speed, steps)
    return centre, grads


def _e1_dt(fr: AdaptedFrame) -> float:
    """``h(e1, ∂t)``."""
    return float(fr.coefficients[0] @ fr.metric[:, 0])


def _integrate(t: np.ndarray, g: np.ndarray, dg: np.ndarray) -> np.ndarray:
    """Cumulative integral by the trapezoid rule with endpoint-derivative correction (O(h⁴))."""
    dt = np.diff(t)
    panels = 0.5 * dt * (g[1:] + g[:-1]) + dt**2 / 12.0 * (dg[:-1] - dg[1:])
    return np.concatenate([[0.0], np.cumsum(panels)])


def check_structure(
    surface,
    line=None,
    *,
    count: int = 21,
    step: float = FIELD_STEP,
    tol: float = DEFAULT_TOL,
    ode_tol: float = 1e-4,
    curvature_tol: float = 1e-4,
) -> StructureReport:
    """ODE residuals of the SO2/Z3 structure equations along a t-line.

    Checks ``e1(b) = (λ-η)(b-a)``, ``e1(η) = -η² - 3λ² - (a+b)/2``,
    ``e1(λ) = -4λη - (a-b)/2`` and ``e1(μ) = -μη``; the vanishing of
    ``e2, e3`` derivatives of ``λ, μ, a, b, η``; and the t-independence of
    ``e^{2f}(b - λ² + 2μ² + η²)`` with ``∂f/∂t = η h(e1, ∂t)`` and ``f = 0``
    at the first point.

    Raises:
        ValueError: if an adapted frame is unavailable on the line.
    """
    pts = t_line(surface, count) if line is None else np.atleast_2d(np.asarray(line, dtype=float))
    frames, grads = _frames_with_gradients(surface, pts, step, tol)
    E = np.array([fr.coefficients for fr in frames])
    F = {k: np.array([fr.fields[k] for fr in frames]) for k in _LINE_FIELDS}
    e = {k: np.einsum("nia,na->ni", E, grads[k]) for k in _LINE_FIELDS}  # e[k][:, i] = e_{i+1}(F)
    lam, mu, a, b, eta = (F[k] for k in _LINE_FIELDS)
    rhs = {
        "ode_b": (lam - eta) * (b - a),
        "ode_eta": -eta**2 - 3 * lam**2 - 0.5 * (a + b),
        "ode_lambda": -4 * lam * eta - 0.5 * (a - b),
        "ode_mu": -mu * eta,
    }
    lhs = {"ode_b": e["b"][:, 0], "ode_eta": e["eta"][:, 0], "ode_lambda": e["lambda"][:, 0], "ode_mu": e["mu"][:, 0]}
    records = []
    for name in rhs:
        scale = 1.0 + max(float(np.abs(rhs[name]).max()), float(np.abs(lhs[name]).max()))
        val = float(np.abs(lhs[name] - rhs[name]).max()) / scale
        records.append(ResidualRecord(name, val, scale, ode_tol, 2))
    transverse = max(float(np.abs(e[k][:, 1:]).max()) for k in _LINE_FIELDS)
    tscale = 1.0 + max(float(np.abs(e[k]).max()) for k in _LINE_FIELDS)
    records.append(ResidualRecord("transverse_constancy", transverse / tscale, tscale, ode_tol, 2))

    # Warping function from ∂f/∂t = η h(e1, ∂t).
    t = pts[:, 0]
    w = np.array([_e1_dt(fr) for fr in frames])
    dg = grads["eta"][:, 0] * w + eta * grads["e1_dt"][:, 0]
    f = _integrate(t, eta * w, dg)
    core = b - lam**2 + 2 * mu**2 + eta**2
    curv = np.exp(2 * f) * core
    mean = float(np.mean(curv))
    # For ν ≡ 0 the invariant vanishes; its size is then measured against the summands.
    scale = max(abs(mean), float(np.max(np.exp(2 * f) * (np.abs(b) + lam**2 + 2 * mu**2 + eta**2))) * 1e-3, 1e-300)
    records.append(ResidualRecord("curvature_constancy", float(np.std(curv)) / scale, scale, curvature_tol, 2))
    return StructureReport(records, t, F, f, curv)


# --------------------------------------------------------------------------
# warped-product case analysis


class WarpedCase(str, Enum):
    NU_NONZERO = "NU_NONZERO"
    NU_ZERO_LAMBDA_NEQ_ETA = "NU_ZERO_LAMBDA_NEQ_ETA"
    NU_ZERO_LAMBDA_EQ_ETA = "NU_ZERO_LAMBDA_EQ_ETA"


@dataclass
class WarpedCaseReport:
    label: WarpedCase
    nu_min: float
    nu_max: float
    gap_min: float
    gap_max: float
    dichotomy_violated: bool

    def to_dict(self) -> dict:
        return {
            "label": self.label.value,
            "nu_min_abs": self.nu_min,
            "nu_max_abs": self.nu_max,
            "lambda_eta_gap_min": self.gap_min,
            "lambda_eta_gap_max": self.gap_max,
            "dichotomy_violated": self.dichotomy_violated,
        }


def warped_case(
    surface,
    grid=None,
    *,
    step: float = FIELD_STEP,
    tol: float = DEFAULT_TOL,
    zero_tol: float = 1e-6,
) -> WarpedCaseReport:
    """Classify by ``ν = b + η² - λ²`` over the grid.

    ``ν`` must vanish everywhere or nowhere: values at or below ``zero_tol``
    count as zero and nonzero values must exceed ``100 * zero_tol``. Any
    other mix sets ``dichotomy_violated``; the same rule separates
    ``λ = η`` from ``λ ≠ η`` when ``ν ≡ 0``.
    """
    pts = surface.grid((3,) * DIM) if grid is None else np.atleast_2d(np.asarray(grid, dtype=float))
    frames = adapted_frames(surface, pts, step=step, tol=tol)
    for fr in frames:
        if isinstance(fr, Exception):
            raise ValueError(f"adapted frame unavailable: {fr}") from fr
    lam = np.array([fr.fields["lambda"] for fr in frames])
    eta = np.array([fr.fields["eta"] for fr in frames])
    b = np.array([fr.fields["b"] for fr in frames])
    nu = np.abs(b + eta**2 - lam**2)
    gap = np.abs(lam - eta)

    def verdict(x):
        if x.max() <= zero_tol:
            return True, False
        if x.min() >= 100 * zero_tol:
            return False, False
        return bool(np.mean(x <= zero_tol) > 0.5), True

    nu_zero, bad_nu = verdict(nu)
    bad_gap = False
    if not nu_zero:
        label = WarpedCase.NU_NONZERO
    else:
        eq, bad_gap = verdict(gap)
        label = WarpedCase.NU_ZERO_LAMBDA_EQ_ETA if eq else WarpedCase.NU_ZERO_LAMBDA_NEQ_ETA
    return WarpedCaseReport(
        label, float(nu.min()), float(nu.max()), float(gap.min()), float(gap.max()), bad_nu or bad_gap
    )


# --------------------------------------------------------------------------
# grid scans


_AXIS_NAMES = (("t", "u", "v"), ("x", "y", "z"), ("0", "1", "2"))


def parse_grid(text: str) -> tuple[tuple[float, float, int], ...]:
    """Parse ``"t=a:b:n,u=a:b:n,v=a:b:n"`` into per-axis ``(start, stop, count)``.

    Axis names may be ``t,u,v``, ``x,y,z`` or ``0,1,2``; order is free.
    """
    axes: dict[int, tuple[float, float, int]] = {}
    for part in filter(None, (p.strip() for p in text.split(","))):
        if "=" not in part:
            raise ValueError(f"grid entry {part!r} lacks '='")
        name, spec = (x.strip() for x in part.split("=", 1))
        pos = next((names.index(name) for names in _AXIS_NAMES if name in names), None)
        if pos is None:
            raise ValueError(f"unknown grid axis {name!r}")
        if pos in axes:
            raise ValueError(f"grid axis {name!r} given twice")
        bits = spec.split(":")
        if len(bits) != 3:
            raise ValueError(f"grid axis {name!r} needs start:stop:count")
        start, stop = float(bits[0]), float(bits[1])
        count = int(bits[2])
        if count < 1:
            raise ValueError("grid counts must be >= 1")
        if not (math.isfinite(start) and math.isfinite(stop)):
            raise ValueError("grid bounds must be finite")
        axes[pos] = (start, stop, count)
    if sorted(axes) != list(range(DIM)):
        raise ValueError(f"grid must specify all {DIM} axes")
    return tuple(axes[i] for i in range(DIM))


def grid_points(axes: Sequence[tuple[float, float, int]]) -> np.ndarray:
    """Lattice in C order (last axis fastest); a single count uses ``start``."""
    lines = [np.linspace(a, b, n) if n > 1 else np.array([float(a)]) for a, b, n in axes]
    mesh = np.meshgrid(*lines, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


@dataclass
class PointRecord:
    point: np.ndarray
    group: str | None = None
    cubic_label: str | None = None
    params: dict = field(default_factory=dict)
    margins: dict = field(default_factory=dict)
    ambiguous: bool = False
    symmetry_residual: float | None = None
    diagnostics: dict = field(default_factory=dict)
    residuals: list[ResidualRecord] = field(default_factory=list)
    error: str | None = None

    @property
    def passed(self) -> bool:
        return self.error is None and all(r.passed for r in self.residuals)

    def to_dict(self) -> dict:
        return {
            "point": [float(x) for x in self.point],
            "group": self.group,
            "cubic_label": self.cubic_label,
            "params": dict(self.params),
            "margins": dict(self.margins),
            "ambiguous": self.ambiguous,
            "symmetry_residual": self.symmetry_residual,
            "diagnostics": dict(self.diagnostics),
            "residuals": [r.to_dict() for r in self.residuals],
            "error": self.error,
        }


@dataclass
class GridScan:
    surface: str
    points: list[PointRecord]
    summary: dict

    @property
    def passed(self) -> bool:
        return all(p.passed for p in self.points)


def _scan_chunk(surface, pts, tol, residuals, seed, tolerances):
    apps = apparatus_batch(surface, pts)
    res = fundamental_batch(surface, pts, tolerances=tolerances) if residuals else [None] * len(pts)
    out = []
    for p, app, rr in zip(pts, apps, res):
        rec = PointRecord(np.array(p, dtype=float))
        if isinstance(app, Exception):
            rec.error = f"{type(app).__name__}: {app}"
            out.append(rec)
            continue
        rec.diagnostics = {k: float(v) for k, v in sorted(app.diagnostics.items())}
        try:
            rep = stabilizer_pair(app.C, app.S, tol)
        except (ClassificationError, ValueError) as exc:
            rec.error = f"{type(exc).__name__}: {exc}"
            out.append(rec)
            continue
        rec.group = rep.group.value
        rec.cubic_label = rep.cubic.label.value
        rec.params = {k: (None if v is None else float(v)) for k, v in rep.params.items()}
        rec.margins = {k: float(v) for k, v in sorted(rep.margins.items())}
        rec.ambiguous = rep.ambiguous
        rec.symmetry_residual = symmetry_residual(rep, app.C, app.S, seed=seed).max_normalized
        if isinstance(rr, Exception):
            rec.error = f"{type(rr).__name__}: {rr}"
        elif rr is not None:
            rec.residuals = rr
        out.append(rec)
    return out


def _summarize(points: list[PointRecord]) -> dict:
    hist = Counter(p.group for p in points if p.group is not None)
    worst: dict[str, float] = {}
    for p in points:
        for r in p.residuals:
            worst[r.name] = max(worst.get(r.name, 0.0), r.value)
    margins: dict[str, float] = {}
    for p in points:
        for k, v in p.margins.items():
            margins[k] = min(margins.get(k, math.inf), abs(v))
    stats = {}
    for key in ("lambda", "mu", "a", "b", "c", "d"):
        vals = np.array([p.params[key] for p in points if p.params.get(key) is not None], dtype=float)
        if vals.size:
            lo, hi = float(vals.min()), float(vals.max())
            stats[key] = {
                "min": lo,
                "max": hi,
                "mean": float(vals.mean()),
                "relative_spread": (hi - lo) / max(abs(hi), abs(lo), 1e-300) if hi != lo else 0.0,
            }
    sym = [p.symmetry_residual for p in points if p.symmetry_residual is not None]
    return {
        "points": len(points),
        "failures": sum(p.error is not None for p in points),
        "residual_failures": sum(any(not r.passed for r in p.residuals) for p in points),
        "ambiguous": sum(p.ambiguous for p in points),
        "histogram": {k: hist[k] for k in sorted(hist)},
        "worst_residuals": {k: worst[k] for k in sorted(worst)},
        "worst_margins": {k: margins[k] for k in sorted(margins)},
        "max_symmetry_residual": max(sym) if sym else None,
        "field_stats": stats,
    }


def scan(
    surface,
    grid,
    *,
    tol: float = DEFAULT_TOL,
    residuals: bool = True,
    threads: int | None = None,
    chunk: int = 64,
    seed: int = 0,
    tolerances: dict | None = None,
) -> GridScan:
    """Apparatus, stabilizer and residuals at every grid point.

    Per-point failures are recorded and the scan continues. Points are split
    into fixed chunks; with ``threads > 1`` chunks run concurrently but the
    output keeps grid order, so results do not depend on the thread count.
    """
    pts = np.atleast_2d(np.asarray(grid, dtype=float))
    chunks = [pts[i : i + chunk] for i in range(0, pts.shape[0], chunk)]
    work = lambda c: _scan_chunk(surface, c, tol, residuals, seed, tolerances)  # noqa: E731
    if threads and threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, chunks))
    else:
        parts = [work(c) for c in chunks]
    records = [r for part in parts for r in part]
    return GridScan(getattr(surface, "id", str(surface)), records, _summarize(records))

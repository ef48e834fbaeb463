"""Closed-form hypersurfaces: the Z2xZ2 model, test quadrics and warped products.

Every surface carries exact jets to order 4 through :class:`SeparableMap`.
Surfaces built from an arbitrary callable fall back to finite-difference jets.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from . import affine_core as core
from .functions import (
    Cos,
    Exp,
    Power,
    SeparableMap,
    Sin,
    Term,
    Univariate,
    curve_from_coefficients,
)
from .numerics import EPS, richardson_gradient

__all__ = [
    "DefinitenessError",
    "SurfaceSpec",
    "CurveSpec",
    "SphereKind",
    "SphereSpec",
    "SignReport",
    "make_z2z2",
    "primitive",
    "make_proper_warped",
    "make_improper_warped",
    "validate_definiteness",
    "curve_sign_report",
    "default_proper_curve",
    "default_improper_curve",
    "affine_sphere_data",
    "build_surface",
    "SURFACE_IDS",
    "lattice",
]

Box = tuple[tuple[float, float], ...]


class DefinitenessError(ValueError):
    """A construction violates the sign condition that makes it definite."""


def lattice(box: Box, counts: Sequence[int]) -> np.ndarray:
    """Tensor-product grid in ``box`` with ``counts[a]`` samples per axis (C order)."""
    axes = []
    for (lo, hi), n in zip(box, counts):
        n = int(n)
        if n < 1:
            raise ValueError("grid counts must be >= 1")
        axes.append(np.array([0.5 * (lo + hi)]) if n == 1 else np.linspace(lo, hi, n))
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def _pad(box: Box, margin: float) -> Box:
    return tuple((lo - margin, hi + margin) for lo, hi in box)


# 1D central stencils (offset, weight) for derivative orders 0..4.
_STENCILS = {
    0: ((0, 1.0),),
    1: ((-1, -0.5), (1, 0.5)),
    2: ((-1, 1.0), (0, -2.0), (1, 1.0)),
    3: ((-2, -0.5), (-1, 1.0), (1, -1.0), (2, 0.5)),
    4: ((-2, 1.0), (-1, -4.0), (0, 6.0), (1, -4.0), (2, 1.0)),
}


def _fd_partial(func, x: np.ndarray, counts: tuple[int, ...], h: np.ndarray) -> np.ndarray:
    """Tensor-product central difference for one multi-index, with Richardson."""
    def once(hh):
        acc = 0.0
        per_axis = [_STENCILS[k] for k in counts]
        for combo in itertools.product(*per_axis):
            w = 1.0
            shift = np.zeros_like(x)
            for a, (off, wt) in enumerate(combo):
                w *= wt
                shift[:, a] = off * hh[:, a]
            acc = acc + w * func(x + shift)
        scale = np.prod(hh ** np.array(counts), axis=1)
        return acc / scale[:, None]

    return (4.0 * once(h) - once(2.0 * h)) / 3.0


@dataclass(frozen=True)
class SurfaceSpec:
    """A parametrized immersion ``U ⊂ R^d -> R^(d+1)`` with a sampling box.

    ``domain`` is the default sampling box; ``validity`` is a larger box on
    which the map is known to be a definite immersion, so finite-difference
    stencils centred in ``domain`` stay valid.
    """

    id: str
    mapping: SeparableMap | Callable
    domain: Box
    validity: Box
    params: dict = field(default_factory=dict)
    expected_group: str | None = None
    family: str = "generic"
    curve: "CurveSpec | None" = None
    sphere: "SphereSpec | None" = None

    @property
    def dim(self) -> int:
        return len(self.domain)

    @property
    def analytic(self) -> bool:
        return isinstance(self.mapping, SeparableMap)

    def position(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.asarray(self.mapping(pts), dtype=float)

    def contains(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        lo = np.array([b[0] for b in self.validity])
        hi = np.array([b[1] for b in self.validity])
        return np.all((pts >= lo) & (pts <= hi), axis=-1)

    def fd_step(self, order: int) -> float:
        """Relative step used by :meth:`fd_jets` for derivatives of ``order``."""
        return EPS ** (1.0 / (max(order, 1) + 4))

    def fd_jets(self, points, order: int) -> list[np.ndarray]:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        n, d = pts.shape
        out = [self.position(pts)]
        m = out[0].shape[1]
        for k in range(1, order + 1):
            h = self.fd_step(k) * (1.0 + np.abs(pts))
            arr = np.zeros((n,) + (d,) * k + (m,))
            for idx in itertools.combinations_with_replacement(range(d), k):
                counts = tuple(idx.count(a) for a in range(d))
                val = _fd_partial(self.position, pts, counts, h)
                for perm in set(itertools.permutations(idx)):
                    arr[(slice(None),) + perm] = val
            out.append(arr)
        return out

    def jets(self, points, order: int) -> list[np.ndarray]:
        if self.analytic:
            return self.mapping.jets(points, order)
        return self.fd_jets(points, order)

    def grid(self, counts: Sequence[int]) -> np.ndarray:
        return lattice(self.domain, counts)

    def with_domain(self, domain: Box) -> "SurfaceSpec":
        return replace(self, domain=tuple(tuple(map(float, b)) for b in domain))


@dataclass(frozen=True)
class CurveSpec:
    """Plane curve ``γ = (γ1, γ2)`` on ``domain``; components are univariate functions."""

    gamma1: Univariate
    gamma2: Univariate
    domain: tuple[float, float]
    coefficients: tuple[tuple[float, ...], tuple[float, ...]] | None = None

    @classmethod
    def from_coefficients(cls, c1: Sequence[float], c2: Sequence[float], domain) -> "CurveSpec":
        """Curve from coordinates in the basis ``1, t, t², t³, eᵗ, e⁻ᵗ, cosh t, sinh t``."""
        return cls(
            curve_from_coefficients(c1),
            curve_from_coefficients(c2),
            (float(domain[0]), float(domain[1])),
            (tuple(map(float, c1)), tuple(map(float, c2))),
        )

    def derivatives(self, t, k: int = 0) -> tuple[np.ndarray, np.ndarray]:
        t = np.asarray(t, dtype=float)
        return self.gamma1(t, k), self.gamma2(t, k)


def default_proper_curve(kind: "SphereKind | str" = "proper_elliptic") -> CurveSpec:
    """Default curve for the proper warped family.

    Elliptic spheres use ``(cosh t, sinh t + 2)``; hyperbolic spheres need the
    opposite sign of ``γ1γ1'(γ2''γ1' − γ1''γ2')`` and use ``(sinh t, cosh t + 2)``.
    """
    kind = SphereKind(kind)
    c_cosh = [0, 0, 0, 0, 0, 0, 1, 0]
    c_sinh = [0, 0, 0, 0, 0, 0, 0, 1]
    if kind is SphereKind.PROPER_HYPERBOLIC:
        return CurveSpec.from_coefficients(c_sinh, [2, 0, 0, 0, 0, 0, 1, 0], (0.2, 1.2))
    return CurveSpec.from_coefficients(c_cosh, [2, 0, 0, 0, 0, 0, 0, 1], (0.2, 1.2))


def default_improper_curve(translation_only: bool = False) -> CurveSpec:
    """``(t + 2, t²)`` on ``[0.5, 1.5]``; ``(t + 2, t³)`` for the translation form.

    With ``γ2 = t²`` the translation form is a paraboloid of R^4, so it
    switches to a cubic to stay off the quadrics.
    """
    c2 = [0, 0, 0, 1, 0, 0, 0, 0] if translation_only else [0, 0, 1, 0, 0, 0, 0, 0]
    return CurveSpec.from_coefficients([2, 1, 0, 0, 0, 0, 0, 0], c2, (0.5, 1.5))


class SphereKind(str, Enum):
    PROPER_ELLIPTIC = "proper_elliptic"
    PROPER_HYPERBOLIC = "proper_hyperbolic"
    IMPROPER_GRAPH = "improper_graph"


@dataclass(frozen=True)
class SphereSpec:
    """Two-dimensional affine sphere.

    Proper kinds store ``φ(u, v) ∈ R^3`` centred at the origin with
    ``|mean curvature| = 1``; the improper kind stores a graph function ``f``.
    ``quadric`` records whether the surface is an ellipsoid/hyperboloid/paraboloid.
    """

    name: str
    kind: SphereKind
    mapping: SeparableMap
    domain: Box
    validity: Box
    quadric: bool
    mean_curvature_normalized: bool = True
    scale: float = 1.0

    def surface(self) -> SurfaceSpec:
        """The sphere as a 2D immersion (graphs are lifted to ``(u, v, f)``)."""
        m = self.mapping
        if self.kind is SphereKind.IMPROPER_GRAPH:
            m = SeparableMap(
                2,
                [
                    [Term(1.0, (Power(1), None))],
                    [Term(1.0, (None, Power(1)))],
                    list(self.mapping.components[0]),
                ],
            )
        return SurfaceSpec(self.name, m, self.domain, self.validity, family="sphere2")


# --------------------------------------------------------------------------
# primitives

_SQRT3 = math.sqrt(3.0)


def make_z2z2() -> SurfaceSpec:
    """``F = (eᵗ + 2v², e⁻ᵗ + 2u², 2v, 2u)`` on ``[-1, 1]^3``."""
    et, emt, p2, p1 = Exp(1.0), Exp(-1.0), Power(2), Power(1)
    m = SeparableMap(
        3,
        [
            [Term(1.0, (et, None, None)), Term(2.0, (None, None, p2))],
            [Term(1.0, (emt, None, None)), Term(2.0, (None, p2, None))],
            [Term(2.0, (None, None, p1))],
            [Term(2.0, (None, p1, None))],
        ],
    )
    box = ((-1.0, 1.0),) * 3
    return SurfaceSpec("z2z2", m, box, _pad(box, 0.5), expected_group="Z2xZ2", family="z2z2")


def _unit_sphere3() -> SurfaceSpec:
    c, s = Cos(), Sin()
    m = SeparableMap(
        3,
        [
            [Term(1.0, (c, c, c))],
            [Term(1.0, (c, c, s))],
            [Term(1.0, (c, s, None))],
            [Term(1.0, (s, None, None))],
        ],
    )
    box = ((-1.0, 1.0),) * 3
    validity = ((-1.4, 1.4), (-1.4, 1.4), (-4.0, 4.0))
    return SurfaceSpec("unit_sphere3", m, box, validity, expected_group="SO3", family="quadric")


def _paraboloid_graph3() -> SurfaceSpec:
    p1, p2 = Power(1), Power(2)
    m = SeparableMap(
        3,
        [
            [Term(1.0, (p1, None, None))],
            [Term(1.0, (None, p1, None))],
            [Term(1.0, (None, None, p1))],
            [Term(0.5, (p2, None, None)), Term(0.5, (None, p2, None)), Term(0.5, (None, None, p2))],
        ],
    )
    box = ((-1.0, 1.0),) * 3
    return SurfaceSpec(
        "paraboloid_graph3", m, box, _pad(box, 1.0), expected_group="SO3", family="quadric"
    )


def _unit_sphere2() -> SphereSpec:
    c, s = Cos(), Sin()
    m = SeparableMap(2, [[Term(1.0, (c, c))], [Term(1.0, (c, s))], [Term(1.0, (s, None))]])
    return SphereSpec(
        "unit_sphere2",
        SphereKind.PROPER_ELLIPTIC,
        m,
        ((-1.0, 1.0), (-1.5, 1.5)),
        ((-1.4, 1.4), (-3.0, 3.0)),
        quadric=True,
    )


def _xyz_map(scale: float) -> SeparableMap:
    eu, emu = Exp(1.0), Exp(-1.0)
    return SeparableMap(
        2,
        [[Term(scale, (eu, None))], [Term(scale, (None, eu))], [Term(scale, (emu, emu))]],
    )


def affine_sphere_data(surface: SurfaceSpec, points) -> dict[str, np.ndarray]:
    """Blaschke normal and affine mean curvature of a 2D surface in ``R^3``.

    Mean curvature is read off ``S`` as ``tr(S)/2``; the anisotropy
    ``|S - H I|`` is returned as well.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))

    def xi_of(p):
        j = surface.jets(p, 3)
        f = core._fields_from_jets(p, j[1], j[2], j[3])
        return f.xi

    j = surface.jets(pts, 3)
    f = core._fields_from_jets(pts, j[1], j[2], j[3])
    dxi = richardson_gradient(xi_of, pts)
    coef = dxi @ f.basis_inverse
    S = -np.swapaxes(coef[..., :2], -1, -2)
    H = 0.5 * np.trace(S, axis1=-2, axis2=-1)
    aniso = np.abs(S - H[:, None, None] * np.eye(2)).max(axis=(1, 2))
    return {"xi": f.xi, "S": S, "H": H, "anisotropy": aniso, "error": f.error}


def _hyperbolic_xyz() -> SphereSpec:
    # |H| scales like scale^(-3/2); measure H at scale 1 and renormalize.
    domain = ((-0.5, 0.5), (-0.5, 0.5))
    validity = ((-1.0, 1.0), (-1.0, 1.0))
    probe = SurfaceSpec("xyz_probe", _xyz_map(1.0), domain, validity)
    H1 = float(affine_sphere_data(probe, [[0.0, 0.0]])["H"][0])
    scale = abs(H1) ** (2.0 / 3.0)
    return SphereSpec(
        "hyperbolic_xyz",
        SphereKind.PROPER_HYPERBOLIC,
        _xyz_map(scale),
        domain,
        validity,
        quadric=False,
        scale=scale,
    )


def _elliptic_paraboloid() -> SphereSpec:
    p2 = Power(2)
    m = SeparableMap(2, [[Term(0.5, (p2, None)), Term(0.5, (None, p2))]])
    return SphereSpec(
        "elliptic_paraboloid",
        SphereKind.IMPROPER_GRAPH,
        m,
        ((-1.0, 1.0), (-1.0, 1.0)),
        ((-2.0, 2.0), (-2.0, 2.0)),
        quadric=True,
    )


_PRIMITIVES: dict[str, Callable] = {
    "unit_sphere2": _unit_sphere2,
    "hyperbolic_xyz": _hyperbolic_xyz,
    "elliptic_paraboloid": _elliptic_paraboloid,
    "unit_sphere3": _unit_sphere3,
    "paraboloid_graph3": _paraboloid_graph3,
}
_CACHE: dict[str, object] = {}


def primitive(name: str) -> SphereSpec | SurfaceSpec:
    """Catalog primitive by name (spheres in R^3 or test quadrics in R^4)."""
    if name not in _PRIMITIVES:
        raise KeyError(f"unknown primitive {name!r}; choose from {sorted(_PRIMITIVES)}")
    if name not in _CACHE:
        _CACHE[name] = _PRIMITIVES[name]()
    return _CACHE[name]


# --------------------------------------------------------------------------
# definiteness


@dataclass(frozen=True)
class SignReport:
    """Sampled sign condition of a construction.

    ``passed`` is true when the expression keeps the required sign everywhere
    and every auxiliary non-vanishing condition holds.
    """

    family: str
    condition: str
    required_sign: int
    min_value: float
    max_value: float
    min_abs: float
    consistent: bool
    passed: bool
    sign_change_at: float | None = None
    failures: tuple[str, ...] = ()


_FAMILY_CONDITIONS = {
    "proper_warped": "g1*g1'*(g2''*g1' - g1''*g2')",
    "improper_warped": "g1*g1'*(g2''*g1' - g1''*g2')",
    "translation_warped": "g1'*(g2''*g1' - g1''*g2')",
}


def curve_sign_report(
    curve: CurveSpec,
    family: str,
    sphere_kind: SphereKind | str | None = None,
    samples: int = 201,
    interval: tuple[float, float] | None = None,
) -> SignReport:
    """Evaluate the definiteness expression of a warped family along ``curve``."""
    if family not in _FAMILY_CONDITIONS:
        raise ValueError(f"no sign condition for family {family!r}")
    lo, hi = interval or curve.domain
    t = np.linspace(lo, hi, samples)
    g1, g2 = curve.derivatives(t, 0)
    d1, d2 = curve.derivatives(t, 1)
    s1, s2 = curve.derivatives(t, 2)
    wedge = s2 * d1 - s1 * d2
    failures = []
    if family == "translation_warped":
        expr = d1 * wedge
        required = 1
    else:
        expr = g1 * d1 * wedge
        if family == "improper_warped":
            required = 1
        else:
            kind = SphereKind(sphere_kind or SphereKind.PROPER_ELLIPTIC)
            required = -1 if kind is SphereKind.PROPER_ELLIPTIC else 1
            if np.any(np.abs(g2) <= 1e-12 * (1 + np.abs(g2).max())) or np.any(np.sign(g2) != np.sign(g2[0])):
                failures.append("g2 != 0")
    signs = np.sign(expr)
    consistent = bool(np.all(signs == signs[0]) and signs[0] != 0)
    change = None
    if not consistent:
        flips = np.flatnonzero(signs[1:] != signs[:-1])
        k = int(flips[0]) if flips.size else int(np.argmin(np.abs(expr)))
        change = float(t[k] if abs(expr[k]) <= abs(expr[min(k + 1, samples - 1)]) else t[k + 1])
    if not (consistent and signs[0] == required):
        failures.insert(0, f"{_FAMILY_CONDITIONS[family]} {'<' if required < 0 else '>'} 0")
    return SignReport(
        family=family,
        condition=_FAMILY_CONDITIONS[family],
        required_sign=required,
        min_value=float(expr.min()),
        max_value=float(expr.max()),
        min_abs=float(np.abs(expr).min()),
        consistent=consistent,
        passed=not failures,
        sign_change_at=change,
        failures=tuple(failures),
    )


def validate_definiteness(spec: SurfaceSpec, samples: int = 201) -> SignReport:
    """Sign report for a catalog surface.

    Warped families use their closed-form curve condition; other surfaces fall
    back to the eigenvalues of the tentative second fundamental form on a grid.
    """
    if spec.family in _FAMILY_CONDITIONS and spec.curve is not None:
        kind = spec.sphere.kind if spec.sphere is not None else None
        t_box = spec.validity[0]
        return curve_sign_report(spec.curve, spec.family, kind, samples, interval=t_box)
    pts = lattice(spec.domain, (5,) * spec.dim)
    j = spec.jets(pts, 2)
    t = core._tentative_batch(j[1], j[2])
    ev = np.linalg.eigvalsh(t["G"])
    # Definite iff eigenvalues share a sign; the product of extremes measures it.
    expr = ev[:, 0] * ev[:, -1]
    consistent = bool(np.all(expr > 0))
    return SignReport(
        family=spec.family,
        condition="min_eig(G)*max_eig(G)",
        required_sign=1,
        min_value=float(expr.min()),
        max_value=float(expr.max()),
        min_abs=float(np.abs(expr).min()),
        consistent=consistent,
        passed=consistent,
        failures=() if consistent else ("tentative form G definite",),
    )


# --------------------------------------------------------------------------
# warped constructions


def _require(report: SignReport) -> None:
    if not report.passed:
        raise DefinitenessError(
            "definiteness violated: " + "; ".join(report.failures)
            + (f" (sign change near t={report.sign_change_at:.6g})" if report.sign_change_at is not None else "")
        )


def _t_validity(curve: CurveSpec) -> tuple[float, float]:
    lo, hi = curve.domain
    pad = 0.15 * (hi - lo)
    return (lo - pad, hi + pad)


def make_proper_warped(sphere: SphereSpec | str, curve: CurveSpec | None = None) -> SurfaceSpec:
    """``F(t, u, v) = (γ1(t), γ2(t) φ(u, v))`` over a proper affine sphere ``φ``."""
    if isinstance(sphere, str):
        sphere = primitive(sphere)
    if sphere.kind is SphereKind.IMPROPER_GRAPH:
        raise ValueError("proper warped construction needs a proper affine sphere")
    curve = curve or default_proper_curve(sphere.kind)
    _require(curve_sign_report(curve, "proper_warped", sphere.kind, interval=_t_validity(curve)))
    comps = [[Term(1.0, (curve.gamma1, None, None))]]
    for comp in sphere.mapping.components:
        comps.append([Term(tm.coeff, (curve.gamma2,) + tm.factors) for tm in comp])
    m = SeparableMap(3, comps)
    domain = (curve.domain,) + sphere.domain
    validity = (_t_validity(curve),) + sphere.validity
    return SurfaceSpec(
        f"proper_warped:{sphere.name}",
        m,
        domain,
        validity,
        expected_group="SO2" if sphere.quadric else "Z3",
        family="proper_warped",
        curve=curve,
        sphere=sphere,
    )


def make_improper_warped(
    sphere: SphereSpec | str,
    curve: CurveSpec | None = None,
    translation_only: bool = False,
) -> SurfaceSpec:
    """Warped product over an improper affine sphere given as a graph ``f``.

    Scaling form: ``(γ1 u, γ1 v, γ1 f + γ2, γ1)``; translation form:
    ``(u, v, f + γ2, γ1)``.
    """
    if isinstance(sphere, str):
        sphere = primitive(sphere)
    if sphere.kind is not SphereKind.IMPROPER_GRAPH:
        raise ValueError("improper warped construction needs a graph affine sphere")
    curve = curve or default_improper_curve(translation_only)
    family = "translation_warped" if translation_only else "improper_warped"
    _require(curve_sign_report(curve, family, interval=_t_validity(curve)))
    g1, g2 = curve.gamma1, curve.gamma2
    f_terms = sphere.mapping.components[0]
    p1 = Power(1)
    if translation_only:
        comps = [
            [Term(1.0, (None, p1, None))],
            [Term(1.0, (None, None, p1))],
            [Term(tm.coeff, (None,) + tm.factors) for tm in f_terms] + [Term(1.0, (g2, None, None))],
            [Term(1.0, (g1, None, None))],
        ]
    else:
        comps = [
            [Term(1.0, (g1, p1, None))],
            [Term(1.0, (g1, None, p1))],
            [Term(tm.coeff, (g1,) + tm.factors) for tm in f_terms] + [Term(1.0, (g2, None, None))],
            [Term(1.0, (g1, None, None))],
        ]
    m = SeparableMap(3, comps)
    return SurfaceSpec(
        f"{family}:{sphere.name}",
        m,
        (curve.domain,) + sphere.domain,
        (_t_validity(curve),) + sphere.validity,
        expected_group="SO2" if sphere.quadric else "Z3",
        family=family,
        curve=curve,
        sphere=sphere,
    )


SURFACE_IDS = (
    "z2z2",
    "unit_sphere3",
    "paraboloid_graph3",
    "proper_warped:unit_sphere2",
    "proper_warped:hyperbolic_xyz",
    "improper_warped:elliptic_paraboloid",
    "translation_warped:elliptic_paraboloid",
)


def build_surface(name: str, curve: CurveSpec | None = None, domain: Box | None = None) -> SurfaceSpec:
    """Resolve a catalog id such as ``z2z2`` or ``proper_warped:unit_sphere2``."""
    family, _, base = name.partition(":")
    if not base:
        if family == "z2z2":
            spec = make_z2z2()
        elif family in ("unit_sphere3", "paraboloid_graph3"):
            spec = primitive(family)
        else:
            raise KeyError(f"unknown surface {name!r}; choose from {', '.join(SURFACE_IDS)}")
        if curve is not None:
            raise ValueError(f"surface {name!r} takes no curve")
    elif family == "proper_warped":
        spec = make_proper_warped(base, curve)
    elif family == "improper_warped":
        spec = make_improper_warped(base, curve, translation_only=False)
    elif family == "translation_warped":
        spec = make_improper_warped(base, curve, translation_only=True)
    else:
        raise KeyError(f"unknown surface family {family!r}")
    if domain is not None:
        spec = spec.with_domain(domain)
        if not np.all(spec.contains(lattice(spec.domain, (2,) * spec.dim))):
            raise core.DomainError(f"requested domain leaves the validity box of {name!r}")
    return spec


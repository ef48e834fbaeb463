"""Random canonical pairs for each nontrivial stabilizer stratum.

Draws respect the canonical sign and ordering conventions of
:func:`affsym.symmetry.stabilizer_pair`, so a round trip must return the
drawn parameters exactly (up to floating point).
"""

import math

import numpy as np
from scipy.spatial.transform import Rotation

from affsym.symmetry import Group, canonical_pair

STRATA = (
    Group.SO3,
    Group.Z2xSO2,
    Group.SO2,
    Group.A4,
    Group.S3,
    Group.Z2xZ2,
    Group.Z3,
    Group.Z2,
)

# Margins that must clear the tolerance band for each stratum.
REQUIRED_MARGINS = {
    Group.SO3: (),
    Group.Z2xSO2: ("a_minus_b",),
    Group.SO2: ("norm_C",),
    Group.A4: ("norm_C",),
    Group.S3: ("norm_C",),
    Group.Z2xZ2: ("a_minus_b", "b_minus_c"),
    Group.Z3: ("norm_C", "mu_minus_sqrt2_lambda"),
    Group.Z2: ("norm_C", "mu_minus_sqrt2_lambda", "lambda_minus_mu", "s3_defect"),
}

_GAP = 0.1


def _distinct(rng, count, lo=-2.0, hi=2.0):
    while True:
        v = rng.uniform(lo, hi, count)
        if count < 2 or np.min(np.abs(np.subtract.outer(v, v))[np.triu_indices(count, 1)]) > _GAP:
            return v


def _ratio(rng):
    # Stay away from the λ = μ and μ = √2 λ boundaries.
    while True:
        r = rng.uniform(0.2, 3.0)
        if abs(r - 1.0) > _GAP and abs(r - math.sqrt(2.0)) > _GAP:
            return r


def draw_params(group: Group, rng) -> dict:
    """Canonical parameters for ``group``, well inside its stratum."""
    lam = float(rng.uniform(0.3, 2.0))
    p = dict.fromkeys(("lambda", "mu", "a", "b", "c", "d"), 0.0)
    if group is Group.SO3:
        p["a"] = p["b"] = p["c"] = float(rng.uniform(-2, 2))
    elif group is Group.Z2xSO2:
        a, b = _distinct(rng, 2)
        p.update(a=a, b=b, c=b)
    elif group is Group.SO2:
        a, b = rng.uniform(-2, 2, 2)
        p.update(**{"lambda": lam}, a=a, b=b, c=b)
    elif group is Group.A4:
        a = rng.uniform(-2, 2)
        p.update(**{"lambda": lam}, a=a, b=a, c=a)
    elif group is Group.S3:
        a, c = rng.uniform(-2, 2, 2)
        p.update(**{"lambda": lam}, a=a, b=a, c=c)
    elif group is Group.Z2xZ2:
        v = np.sort(_distinct(rng, 3))[::-1]
        if rng.uniform() < 0.2:
            # Vanishing cubic: eigenvalues in decreasing order.
            p.update(a=v[0], b=v[1], c=v[2])
        else:
            # Cubic present: cyclic relabellings only, so the largest leads.
            b, c = (v[1], v[2]) if rng.uniform() < 0.5 else (v[2], v[1])
            p.update(**{"lambda": lam}, a=v[0], b=b, c=c)
    elif group is Group.Z3:
        a, b = rng.uniform(-2, 2, 2)
        p.update(**{"lambda": lam, "mu": lam * _ratio(rng)}, a=a, b=b, c=b)
    elif group is Group.Z2:
        while True:
            a, b, c, d = rng.uniform(-2, 2, 4)
            if math.hypot(b - c, b + c - 2 * a - 2 * d) > _GAP:
                break
        p.update(**{"lambda": lam, "mu": lam * _ratio(rng)}, a=a, b=b, c=c, d=d)
    else:
        raise ValueError(group)
    return {k: float(v) for k, v in p.items()}


def random_rotation(rng) -> np.ndarray:
    return Rotation.random(random_state=rng).as_matrix()


def conjugated_pair(group: Group, rng):
    """``(params, C, S, R)`` with ``(C, S)`` the canonical pair moved by ``R``."""
    params = draw_params(group, rng)
    C0, S0 = canonical_pair(group, params)
    R = random_rotation(rng)
    # conjugate(C, S, R) maps the moved pair back to the canonical one.
    C = np.einsum("pi,qj,rk,ijk->pqr", R, R, R, C0)
    S = R @ S0 @ R.T
    return params, C, S, R


def margins_clear(report, tol: float) -> bool:
    if report.ambiguous:
        return False
    keys = REQUIRED_MARGINS[report.group]
    if report.group is Group.Z2xZ2 and report.params["lambda"] > 0:
        keys = ("norm_C",)
    return all(abs(report.margins[k]) > 10 * tol for k in keys)

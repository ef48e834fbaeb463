import math

import numpy as np
import pytest
from strata import STRATA, conjugated_pair, draw_params, margins_clear, random_rotation

from affsym.symmetry import (
    DEFAULT_TOL,
    P1,
    P2,
    P3,
    Q,
    R1,
    R3,
    ClassificationError,
    CubicLabel,
    Group,
    canonical_cubic,
    canonical_pair,
    classify_cubic,
    conjugate,
    cubic_eval,
    group_generators,
    rotation_about,
    sphere_maximize,
    stabilizer_pair,
    symmetry_residual,
    t_operator,
)

SQRT2 = math.sqrt(2.0)


def moved(C, S, R):
    """Inverse of ``conjugate``: the pair that ``R`` brings back to ``(C, S)``."""
    return np.einsum("pi,qj,rk,ijk->pqr", R, R, R, C), R @ S @ R.T


# -- cubic_eval / t_operator -------------------------------------------------


def test_cubic_eval_rot_so2_on_axis():
    assert cubic_eval(canonical_cubic("ROT_SO2", 1.0), [1, 0, 0]) == pytest.approx(2.0)


def test_cubic_eval_tetra_at_diagonal():
    assert cubic_eval(canonical_cubic("TETRA_A4", 1.0), [1, 1, 1]) == pytest.approx(6.0)


def test_cubic_eval_zero_vector():
    C = canonical_cubic("Z3_GENERIC", 0.7, 1.3)
    assert cubic_eval(C, np.zeros(3)) == 0.0


def test_cubic_eval_matches_polynomials():
    rng = np.random.default_rng(1)
    lam, mu = 0.8, 1.7
    for _ in range(10):
        x, y, z = rng.normal(size=3)
        z3 = lam * (2 * x**3 - 3 * x * y**2 - 3 * x * z**2) + mu * (y**3 - 3 * y * z**2)
        z2 = lam * (2 * x**3 - 3 * x * y**2 - 3 * x * z**2) + 6 * mu * x * y * z
        s3 = lam * (x**3 - 3 * x * y**2)
        assert cubic_eval(canonical_cubic("Z3_GENERIC", lam, mu), [x, y, z]) == pytest.approx(z3)
        assert cubic_eval(canonical_cubic("Z2_GENERIC", lam, mu), [x, y, z]) == pytest.approx(z2)
        assert cubic_eval(canonical_cubic("TRI_S3", lam), [x, y, z]) == pytest.approx(s3)


def test_canonical_cubics_are_apolar():
    for label in CubicLabel:
        C = canonical_cubic(label, 1.1, 0.6)
        assert np.allclose(np.einsum("kki->i", C), 0.0, atol=1e-15)


def test_t_operator_z3_unit():
    # Direct contraction of the (λ, μ) = (1, 1) component table.
    np.testing.assert_allclose(t_operator(canonical_cubic("Z3_GENERIC", 1, 1)), np.diag([6.0, 4.0, 4.0]), atol=1e-14)


def test_t_operator_s3_kernel():
    np.testing.assert_allclose(t_operator(canonical_cubic("TRI_S3", 1)), np.diag([2.0, 2.0, 0.0]), atol=1e-14)


def test_t_operator_zero():
    assert np.all(t_operator(np.zeros((3, 3, 3))) == 0.0)


def test_t_operator_equivariant():
    rng = np.random.default_rng(2)
    C = canonical_cubic("Z2_GENERIC", 0.9, 0.4)
    R = random_rotation(rng)
    Cm, _ = moved(C, np.eye(3), R)
    np.testing.assert_allclose(t_operator(Cm), R @ t_operator(C) @ R.T, atol=1e-13)


# -- conjugate -----------------------------------------------------------------


def test_conjugate_identity():
    C, S = canonical_pair("Z2", {"lambda": 1, "mu": 0.5, "a": 1, "b": 2, "c": 3, "d": 0.1})
    C2, S2 = conjugate(C, S, np.eye(3))
    assert np.array_equal(C2, C) and np.array_equal(S2, S)


def test_conjugate_r1_preserves_z3():
    C = canonical_cubic("Z3_GENERIC", 1.0, 1.0)
    C2, _ = conjugate(C, np.eye(3), R1)
    np.testing.assert_allclose(C2, C, atol=1e-12)


def test_conjugate_p1_flips_mu():
    C = canonical_cubic("Z3_GENERIC", 1.0, 1.0)
    C2, _ = conjugate(C, np.eye(3), P1)
    np.testing.assert_allclose(C2, canonical_cubic("Z3_GENERIC", 1.0, -1.0), atol=1e-14)


def test_conjugate_pullback_identity():
    rng = np.random.default_rng(3)
    C = canonical_cubic("Z2_GENERIC", 0.3, 1.2)
    R = random_rotation(rng)
    C2, _ = conjugate(C, np.eye(3), R)
    for v in rng.normal(size=(5, 3)):
        assert cubic_eval(C2, v) == pytest.approx(cubic_eval(C, R @ v), abs=1e-12)


@pytest.mark.parametrize("R", [np.diag([1.0, 1.0, -1.0]), 2 * np.eye(3), np.ones((3, 3))])
def test_conjugate_rejects_non_rotations(R):
    with pytest.raises(ValueError):
        conjugate(np.zeros((3, 3, 3)), np.eye(3), R)


def test_generator_relations():
    I = np.eye(3)
    for P in (P1, P2, P3):
        np.testing.assert_allclose(P @ P, I, atol=1e-12)
    for G in (R1, R3, Q):
        np.testing.assert_allclose(G @ G @ G, I, atol=1e-12)
    np.testing.assert_allclose(rotation_about([1, 0, 0], 2 * math.pi / 3), R1, atol=1e-15)


# -- classify_cubic ------------------------------------------------------------


def test_classify_z3_canonical_identity():
    cc = classify_cubic(canonical_cubic("Z3_GENERIC", 1.0, 1.0))
    assert cc.label is CubicLabel.Z3_GENERIC
    np.testing.assert_allclose(cc.rotation, np.eye(3), atol=1e-12)
    assert (cc.lam, cc.mu) == pytest.approx((1.0, 1.0), abs=1e-12)


def test_classify_z2_at_lambda_eq_mu_becomes_s3():
    cc = classify_cubic(canonical_cubic("Z2_GENERIC", 1.0, 1.0))
    assert cc.label is CubicLabel.TRI_S3
    Cc, _ = conjugate(canonical_cubic("Z2_GENERIC", 1.0, 1.0), np.eye(3), cc.rotation)
    np.testing.assert_allclose(Cc, canonical_cubic("TRI_S3", cc.lam), atol=1e-10)
    assert cc.lam == pytest.approx(2.0, abs=1e-10)


def test_classify_z3_at_sqrt2_becomes_a4():
    cc = classify_cubic(canonical_cubic("Z3_GENERIC", 1.0, SQRT2))
    assert cc.label is CubicLabel.TETRA_A4
    assert cc.lam == pytest.approx(math.sqrt(3.0), abs=1e-10)


def test_classify_tetra_round_trip():
    rng = np.random.default_rng(4)
    C0 = canonical_cubic("TETRA_A4", 2.0)
    for _ in range(100):
        C, _ = moved(C0, np.eye(3), random_rotation(rng))
        cc = classify_cubic(C)
        assert cc.label is CubicLabel.TETRA_A4
        assert abs(cc.lam - 2.0) <= 1e-9
        assert abs(np.linalg.det(cc.rotation) - 1.0) < 1e-12
        np.testing.assert_allclose(cc.rotation.T @ cc.rotation, np.eye(3), atol=1e-12)


@pytest.mark.parametrize(
    "label,lam,mu",
    [("ROT_SO2", 1.3, 0), ("TRI_S3", 0.7, 0), ("Z2_GENERIC", 0.5, 1.9), ("Z3_GENERIC", 1.2, 0.4)],
)
def test_classify_round_trip(label, lam, mu):
    rng = np.random.default_rng(5)
    for _ in range(20):
        C, _ = moved(canonical_cubic(label, lam, mu), np.eye(3), random_rotation(rng))
        cc = classify_cubic(C)
        assert cc.label.value == label
        assert (cc.lam, cc.mu) == pytest.approx((lam, mu), abs=1e-9)
        assert cc.residual <= 1e-10


def test_classify_zero_and_trivial():
    assert classify_cubic(np.zeros((3, 3, 3))).label is CubicLabel.ZERO
    rng = np.random.default_rng(6)
    C = rng.normal(size=(3, 3, 3))
    C = sum(np.transpose(C, p) for p in ((0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0))) / 6
    tr = np.einsum("kki->i", C)
    for i in range(3):
        # Remove the trace part: C_ijk -= (δ_ij t_k + δ_ik t_j + δ_jk t_i) / 5
        for j in range(3):
            C[i, j, j] -= tr[i] / 5
            C[j, i, j] -= tr[i] / 5
            C[j, j, i] -= tr[i] / 5
    assert np.allclose(np.einsum("kki->i", C), 0, atol=1e-14)
    assert classify_cubic(C).label is CubicLabel.TRIVIAL


def test_sphere_maximize_matches_normal_form():
    lam, mu = 0.8, 0.5
    val, v = sphere_maximize(canonical_cubic("ROT_SO2", lam))
    assert val == pytest.approx(2 * lam, abs=1e-10)
    assert abs(np.linalg.norm(v) - 1) < 1e-12
    val, _ = sphere_maximize(canonical_cubic("Z3_GENERIC", lam, mu))
    assert val >= 2 * lam - 1e-12


def test_classification_error_is_value_error():
    assert issubclass(ClassificationError, ValueError)


# -- stabilizer_pair -----------------------------------------------------------


def test_pair_zero_cubic_axial():
    r = stabilizer_pair(np.zeros((3, 3, 3)), np.diag([3.0, 1.0, 1.0]))
    assert r.group is Group.Z2xSO2
    assert (r.params["a"], r.params["b"]) == pytest.approx((3.0, 1.0))


def test_pair_tetra_with_distinct_diagonal():
    r = stabilizer_pair(canonical_cubic("TETRA_A4", 1.0), np.diag([1.0, 2.0, 3.0]))
    assert r.group is Group.Z2xZ2
    # Cyclic relabelling puts the largest eigenvalue first.
    assert (r.params["a"], r.params["b"], r.params["c"]) == pytest.approx((3.0, 1.0, 2.0))


def test_pair_z3_boundary_scalar_s_is_a4():
    r = stabilizer_pair(canonical_cubic("Z3_GENERIC", 1.0, SQRT2), 0.7 * np.eye(3))
    assert r.group is Group.A4
    assert r.params["lambda"] == pytest.approx(math.sqrt(3.0), abs=1e-10)
    assert r.margins["norm_C"] > 0


def test_pair_so2_cubic_anisotropic_s_is_z2():
    r = stabilizer_pair(canonical_cubic("ROT_SO2", 1.0), np.diag([0.5, 2.0, 1.0]))
    assert r.group is Group.Z2
    assert r.params["mu"] == pytest.approx(0.0, abs=1e-12)


def test_pair_s3_cubic_with_broken_block_is_z2():
    C = canonical_cubic("TRI_S3", 2.0)
    S = np.diag([1.0, 3.0, -1.0])
    r = stabilizer_pair(C, S)
    assert r.group is Group.Z2
    assert r.params["lambda"] == pytest.approx(r.params["mu"], abs=1e-10)
    assert r.params["lambda"] == pytest.approx(1.0, abs=1e-10)


def test_pair_tetra_one_commuting_flip_is_z2():
    C = canonical_cubic("TETRA_A4", 1.0)
    S = np.array([[1.0, 0, 0], [0, 2.0, 0.3], [0, 0.3, -1.0]])
    r = stabilizer_pair(C, S)
    assert r.group is Group.Z2
    assert r.params["lambda"] == pytest.approx(0.0, abs=1e-12)
    assert r.params["mu"] == pytest.approx(1.0, abs=1e-10)
    assert r.params["d"] >= 0


def test_pair_trivial():
    r = stabilizer_pair(canonical_cubic("Z3_GENERIC", 1.0, 0.3), np.diag([1.0, 2.0, 3.0]))
    assert r.group is Group.TRIVIAL
    assert all(v is None for v in r.params.values())


def test_pair_rejects_asymmetric_s():
    S = np.array([[1.0, 0.5, 0], [0, 1.0, 0], [0, 0, 1.0]])
    with pytest.raises(ValueError):
        stabilizer_pair(np.zeros((3, 3, 3)), S)


def test_pair_ambiguous_band():
    # S anisotropy inside the [0.1, 10] × tol band.
    r = stabilizer_pair(np.zeros((3, 3, 3)), np.diag([1.0, 1.0, 1.0 + 1e-6]))
    assert r.ambiguous


def test_pair_canonical_input_returns_identity():
    for i, group in enumerate(STRATA):
        p = draw_params(group, np.random.default_rng(i))
        C, S = canonical_pair(group, p)
        r = stabilizer_pair(C, S)
        assert r.group is group
        np.testing.assert_allclose(r.rotation, np.eye(3), atol=1e-10)


@pytest.mark.parametrize("group", STRATA, ids=lambda g: g.value)
def test_pair_round_trip_and_equivariance(group):
    rng = np.random.default_rng(11)
    for _ in range(100):
        p, C, S, _ = conjugated_pair(group, rng)
        r = stabilizer_pair(C, S)
        assert r.group is group
        assert margins_clear(r, DEFAULT_TOL)
        for k in p:
            assert abs(r.params[k] - p[k]) <= 1e-9, (k, p, r.params)
        assert r.params["lambda"] >= 0 and r.params["mu"] >= 0
        R2 = random_rotation(rng)
        C2, S2 = moved(C, S, R2)
        r2 = stabilizer_pair(C2, S2)
        assert r2.group is group
        assert (r2.params["lambda"], r2.params["mu"]) == pytest.approx((r.params["lambda"], r.params["mu"]), abs=1e-9)


def test_report_rotation_brings_to_canonical():
    rng = np.random.default_rng(12)
    _, C, S, _ = conjugated_pair(Group.Z2, rng)
    r = stabilizer_pair(C, S)
    Cc, Sc = conjugate(C, S, r.rotation)
    C0, S0 = canonical_pair(r.group, r.params)
    np.testing.assert_allclose(Cc, C0, atol=1e-10)
    np.testing.assert_allclose(Sc, S0, atol=1e-10)


def test_margin_mu_minus_sqrt2_lambda_value():
    r = stabilizer_pair(canonical_cubic("Z3_GENERIC", 1.0, 0.5), np.diag([1.0, 2.0, 2.0]))
    assert r.group is Group.Z3
    assert r.margins["mu_minus_sqrt2_lambda"] == pytest.approx(0.5 - SQRT2, abs=1e-12)


def test_report_to_dict_serializable():
    import json

    r = stabilizer_pair(canonical_cubic("ROT_SO2", 1.0), np.eye(3))
    d = json.loads(json.dumps(r.to_dict()))
    assert d["group"] == "SO2" and d["cubic_label"] == "ROT_SO2"


# -- symmetry_residual ---------------------------------------------------------


def test_residual_so3():
    S = 1.7 * np.eye(3)
    r = stabilizer_pair(np.zeros((3, 3, 3)), S)
    res = symmetry_residual(r, np.zeros((3, 3, 3)), S, samples=10)
    assert len(res.per_generator) == 10
    assert res.max_raw <= 1e-12


def test_residual_z2z2_members():
    C, S = canonical_cubic("TETRA_A4", 1.0), np.diag([3.0, 1.0, 2.0])
    r = stabilizer_pair(C, S)
    assert r.group is Group.Z2xZ2
    res = symmetry_residual(r, C, S)
    assert set(res.per_generator) == {"P1", "P2"}
    assert res.max_raw <= 1e-12


def test_residual_z3_member_and_witness():
    C, S = canonical_pair("Z3", {"lambda": 1.0, "mu": 1.0, "a": 1.0, "b": 2.0, "c": 2.0})
    r = stabilizer_pair(C, S)
    assert r.group is Group.Z3
    assert symmetry_residual(r, C, S).max_raw <= 1e-12
    rc, _ = (np.abs(x - y).max() for x, y in zip(conjugate(C, S, P1), (C, S)))
    assert rc > 0.1


@pytest.mark.parametrize("group", STRATA, ids=lambda g: g.value)
def test_residual_small_for_conjugated_pairs(group):
    rng = np.random.default_rng(13)
    for _ in range(10):
        _, C, S, _ = conjugated_pair(group, rng)
        r = stabilizer_pair(C, S)
        assert symmetry_residual(r, C, S).passed(1e-10)


def test_group_generators_cover_all():
    for g in Group:
        gens = group_generators(g)
        for m in gens.values():
            np.testing.assert_allclose(m @ m.T, np.eye(3), atol=1e-12)
            assert np.linalg.det(m) == pytest.approx(1.0)
    assert group_generators(Group.TRIVIAL) == {}

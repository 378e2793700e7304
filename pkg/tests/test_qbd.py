"""Level-independent QBD solvers against hand values and the dense reference."""

import numpy as np
import pytest

from mctails.errors import Reducible, Unstable, ValidationError
from mctails.matkernel import inf_norm, inverse
from mctails.oracle import truncate_and_solve
from mctails.qbd import (
    QbdModel,
    boundary_solve,
    factorize,
    rate_matrix_radius,
    reconstruction_residual,
    solve_G,
    solve_R,
    solve_tails,
    tails_lu,
    tails_matrix_geometric,
    tails_ul,
)

# M/M/1 with arrival rate 1 and service rate 2, written as 1x1 blocks.  Its
# stationary law is x_k = 0.5^(k+1), so R = 0.5 and the tails are 0.5^k.
MM1 = QbdModel([[-1.0]], [[1.0]], [[2.0]], [[1.0]], [[-3.0]], [[2.0]])

# Two-phase chain: phase-dependent arrivals (1 and 0.5), common service 2,
# phase switching at 0.3 / 0.4.
TWOPHASE = QbdModel(
    [[-1.3, 0.3], [0.4, -0.9]],
    [[1.0, 0.0], [0.0, 0.5]],
    [[2.0, 0.0], [0.0, 2.0]],
    [[1.0, 0.0], [0.0, 0.5]],
    [[-3.3, 0.3], [0.4, -2.9]],
    [[2.0, 0.0], [0.0, 2.0]],
)


def test_mm1_rate_matrix_is_one_half():
    r = solve_R(MM1.a0, MM1.a1, MM1.a2).matrix
    assert abs(float(r[0, 0]) - 0.5) < 1e-10


def test_mm1_boundary_pair():
    r = solve_R(MM1.a0, MM1.a1, MM1.a2).matrix
    boundary = boundary_solve(MM1, r)
    assert abs(float(boundary.x0[0]) - 0.5) < 1e-10
    assert abs(float(boundary.x1[0]) - 0.25) < 1e-10


def test_mm1_censored_boundary_block_is_minus_one():
    r = solve_R(MM1.a0, MM1.a1, MM1.a2).matrix
    phi0 = (MM1.a0 + MM1.a1) + r @ MM1.a2
    assert abs(float(phi0[0, 0]) + 1.0) < 1e-10


def test_solve_r_residual_is_reported_small():
    result = solve_R(MM1.a0, MM1.a1, MM1.a2)
    assert result.residual < 1e-11
    assert result.iterations > 1


def test_rate_matrix_is_zero_without_upward_flow():
    model = QbdModel([[-1.0]], [[1.0]], [[2.0]], [[0.0]], [[-2.0]], [[2.0]])
    r = solve_R(model.a0, model.a1, model.a2).matrix
    assert inf_norm(r) == 0.0
    boundary = boundary_solve(model, r)
    assert abs(float(boundary.x0[0]) - 2.0 / 3.0) < 1e-12
    assert abs(float(boundary.x1[0]) - 1.0 / 3.0) < 1e-12


def test_boundary_without_entry_to_level_one_is_reducible():
    model = QbdModel([[0.0]], [[0.0]], [[2.0]], [[1.0]], [[-3.0]], [[2.0]])
    r = solve_R(model.a0, model.a1, model.a2).matrix
    with pytest.raises(Reducible):
        boundary_solve(model, r)


def test_unstable_chain_is_refused():
    # arrival 2, service 1: load 2
    model = QbdModel([[-2.0]], [[2.0]], [[1.0]], [[2.0]], [[-3.0]], [[1.0]])
    r = solve_R(model.a0, model.a1, model.a2).matrix
    with pytest.raises(Unstable):
        boundary_solve(model, r)


def test_rate_matrix_survives_newton_polish():
    """Repairable-server blocks: one kron-linearized Newton step must leave
    the fixed point in place, or the iteration stopped short of the root."""
    lam, mu, alpha, beta = 0.25, 1.0, 0.5, 1.0
    c = lam * np.eye(2)
    a = np.array([[-(lam + mu + alpha), alpha], [beta, -(lam + beta)]])
    b = np.array([[mu, 0.0], [0.0, 0.0]])
    result = solve_R(c, a, b)
    assert result.residual < 1e-10
    r = result.matrix
    eye = np.eye(2)
    step = None
    for _ in range(3):
        resid = c + r @ a + r @ r @ b
        jac = np.kron(a.T, eye) + np.kron((r @ b).T, eye) + np.kron(b.T, r)
        step = np.linalg.solve(jac, -resid.reshape(-1, order="F"))
        r = r + step.reshape(2, 2, order="F")
    assert inf_norm(c + r @ a + r @ r @ b) < 1e-13
    assert float(np.abs(step).max()) < 1e-10


def test_rate_matrix_agrees_with_passage_identity():
    """R must equal A0 (-U)^-1 with U = A1 + A0 G, an independent route
    through the downward-passage matrix."""
    for model in (MM1, TWOPHASE):
        r = solve_R(model.a0, model.a1, model.a2).matrix
        g = solve_G(model.a0, model.a1, model.a2).matrix
        u = model.a1 + model.a0 @ g
        r_alt = model.a0 @ inverse(-u)
        assert inf_norm(r - r_alt) < 1e-10


def test_passage_matrix_is_stochastic_when_stable():
    for model in (MM1, TWOPHASE):
        g = solve_G(model.a0, model.a1, model.a2).matrix
        assert inf_norm(g.sum(axis=1) - 1.0) < 1e-9


def test_passage_matrix_without_upward_flow_is_one_jump():
    """With A0 = 0 the first passage down is a single exit, so G is exactly
    (-A1)^-1 A2."""
    a1 = np.array([[-3.0, 1.0], [0.5, -2.0]])
    a2 = np.array([[2.0, 0.0], [0.5, 1.0]])
    g = solve_G(np.zeros((2, 2)), a1, a2).matrix
    assert inf_norm(g - inverse(-a1) @ a2) < 1e-12


def test_rate_matrix_radius_is_below_one():
    for model in (MM1, TWOPHASE):
        r = solve_R(model.a0, model.a1, model.a2).matrix
        assert rate_matrix_radius(r) < 1.0


def test_three_routes_agree_with_each_other():
    for model in (MM1, TWOPHASE):
        series = {m: solve_tails(model, 15, method=m) for m in ("mg", "ul", "lu")}
        for name in ("ul", "lu"):
            gap = max(
                inf_norm(series["mg"].level(k) - series[name].level(k))
                for k in range(1, 16)
            )
            assert gap < 1e-8, f"{name} route drifted by {gap}"


def test_tails_agree_with_dense_truncation():
    for model in (MM1, TWOPHASE):
        series = solve_tails(model, 20, method="mg")
        reference = truncate_and_solve(model, 400)
        gap = max(inf_norm(series.level(k) - reference.level(k)) for k in range(1, 21))
        assert gap < 1e-8
        assert inf_norm(series.x0 - reference.x0) < 1e-8


def test_tail_levels_decrease_and_balance_total_mass():
    series = solve_tails(TWOPHASE, 30, method="mg")
    for k in range(1, 30):
        assert np.all(series.level(k) - series.level(k + 1) > -1e-12)
    assert abs(float(series.level(1).sum()) - (1.0 - float(series.x0.sum()))) < 1e-9


def test_ul_route_reports_its_identity_residual():
    r = solve_R(TWOPHASE.a0, TWOPHASE.a1, TWOPHASE.a2).matrix
    boundary = boundary_solve(TWOPHASE, r)
    series = tails_ul(TWOPHASE, r, boundary.x0, 10)
    assert series.truncation_report["identity_residual"] < 1e-8


def test_lu_route_matches_geometric_tail_shape():
    r = solve_R(MM1.a0, MM1.a1, MM1.a2).matrix
    boundary = boundary_solve(MM1, r)
    series = tails_lu(MM1, boundary.x0, 12)
    for k in range(1, 13):
        assert abs(float(series.level(k)[0]) - 0.5 ** k) < 1e-9


def test_geometric_route_accepts_explicit_head():
    series = tails_matrix_geometric(np.array([0.25]), np.array([[0.5]]), 5)
    assert abs(float(series.level(1)[0]) - 0.5) < 1e-12
    assert abs(float(series.level(5)[0]) - 0.03125) < 1e-12


def test_lu_factorization_reconstructs_the_generator():
    fact = factorize(TWOPHASE, "LU", 4)
    res = reconstruction_residual(TWOPHASE, fact)
    assert res["interior_residual"] < 1e-12
    assert res["last_level_residual"] < 1e-12


def test_ul_factorization_reconstructs_except_last_window_row():
    fact = factorize(TWOPHASE, "UL", 4)
    res = reconstruction_residual(TWOPHASE, fact)
    assert res["interior_residual"] < 1e-12
    r = solve_R(TWOPHASE.a0, TWOPHASE.a1, TWOPHASE.a2).matrix
    expected = float(np.max(np.abs(r @ TWOPHASE.a2)))
    assert abs(res["last_level_residual"] - expected) < 1e-10


def test_model_validation_rejects_bad_sign_patterns():
    with pytest.raises(ValidationError):
        QbdModel([[-1.0]], [[-1.0]], [[2.0]], [[1.0]], [[-3.0]], [[2.0]])
    with pytest.raises(ValidationError):
        QbdModel([[-1.0]], [[1.0]], [[2.0]], [[1.0]], [[-4.0]], [[2.0]])


def test_unknown_method_is_rejected():
    with pytest.raises(ValidationError):
        solve_tails(MM1, 5, method="qr")

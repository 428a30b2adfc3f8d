import math

import numpy as np
import pytest

from ralm import alm, expr
from ralm import inner_solver as inner
from ralm import manifold as mf
from ralm import problem as pb


XYZ = ("x", "y", "z")
SQ2 = math.sqrt(2.0) / 2.0


def sphere_problem(objective, equalities=(), inequalities=(), name="fixture"):
    return pb.make_problem(
        name,
        mf.sphere(3),
        expr.parse(objective, XYZ),
        [expr.parse(s, XYZ) for s in equalities],
        [expr.parse(s, XYZ) for s in inequalities],
    )


def pt(*coords):
    return mf.make_point(mf.sphere(len(coords)), np.array(coords, dtype=float))


EQUATOR = sphere_problem("z", inequalities=("-z",), name="equator")
UNREACHABLE = sphere_problem("x", equalities=("z - 2",), name="unreachable")


# ---------------------------------------------------------- step pieces


def test_update_multipliers_equality_shift():
    mult = pb.MultiplierEstimate(np.array([1.0]), np.zeros(0))
    out = alm.update_multipliers(mult, 10.0, np.array([0.2]), np.zeros(0))
    assert np.array_equal(out.lam, [3.0])


def test_update_multipliers_clamps_inequality():
    mult = pb.MultiplierEstimate(np.zeros(0), np.array([1.0]))
    out = alm.update_multipliers(mult, 10.0, np.zeros(0), np.array([-0.5]))
    assert np.array_equal(out.mu, [0.0])


def test_update_multipliers_feasible_fixed_point():
    mult = pb.MultiplierEstimate(np.array([2.0, -1.0]), np.array([0.5]))
    out = alm.update_multipliers(mult, 100.0, np.zeros(2), np.zeros(1))
    assert np.array_equal(out.lam, mult.lam)
    assert np.array_equal(out.mu, mult.mu)


def test_penalty_update_first_iteration_keeps_rho():
    assert alm.penalty_update(None, (5.0, 5.0), 3.0, 0.5, 10.0, 1) == 3.0


def test_penalty_update_sufficient_decrease_keeps_rho():
    assert alm.penalty_update((1.0, 0.3), (0.4, 0.1), 2.0, 0.5, 10.0, 2) == 2.0


def test_penalty_update_insufficient_decrease_scales():
    assert alm.penalty_update((1.0, 0.3), (0.9, 0.1), 2.0, 0.5, 10.0, 2) == 20.0


def test_safeguard_in_box_unchanged():
    cfg = alm.AlmConfig()
    mult = pb.MultiplierEstimate(np.array([-5.0, 7.0]), np.array([3.0]))
    out = alm.safeguard(mult, cfg)
    assert np.array_equal(out.lam, mult.lam)
    assert np.array_equal(out.mu, mult.mu)


def test_safeguard_clamps_to_box():
    cfg = alm.AlmConfig(lambda_min=-1e3, lambda_max=1e3, mu_max=1e3)
    mult = pb.MultiplierEstimate(np.array([1e6, -1e6]), np.array([1e6]))
    out = alm.safeguard(mult, cfg)
    assert np.array_equal(out.lam, [1e3, -1e3])
    assert np.array_equal(out.mu, [1e3])


def test_safeguard_normalizes_negative_zero():
    cfg = alm.AlmConfig()
    mult = pb.MultiplierEstimate(np.array([-0.0]), np.array([-0.0]))
    out = alm.safeguard(mult, cfg)
    assert not np.signbit(out.mu[0])
    assert out.mu[0] == 0.0


# ------------------------------------------------------------ schedules


def test_geometric_schedule_values():
    sched = alm.GeometricSchedule(0.1, 0.5)
    assert sched.eps(1) == 0.1
    assert sched.eps(2) == 0.05
    assert sched.eps(5) == pytest.approx(0.1 * 0.5 ** 4)


def test_fixed_schedule_saturates():
    sched = alm.FixedSchedule((1e-2, 1e-4))
    assert sched.eps(1) == 1e-2
    assert sched.eps(2) == 1e-4
    assert sched.eps(9) == 1e-4
    with pytest.raises(ValueError):
        alm.FixedSchedule(())


def test_config_validation():
    for bad in (
        dict(tau=1.0),
        dict(tau=-0.1),
        dict(gamma=1.0),
        dict(lambda_min=2.0, lambda_max=1.0),
        dict(mu_max=0.0),
        dict(rho1=0.0),
        dict(max_outer=0),
        dict(kkt_tol=0.0),
    ):
        with pytest.raises(ValueError):
            alm.AlmConfig(**bad)


# ------------------------------------------------------------ full runs


def test_equator_run_reaches_kkt():
    trace, verdict = alm.run(EQUATOR, alm.AlmConfig(), pt(SQ2, 0.0, SQ2))
    assert verdict == alm.KKT_APPROX
    last = trace.last
    assert abs(last.point.coords[2]) <= 1e-6
    assert abs(last.mu[0] - 1.0) <= 1e-4


def test_unreachable_height_reaches_infeasible_stationary():
    trace, verdict = alm.run(UNREACHABLE, alm.AlmConfig(), pt(1.0, 0.0, 0.0))
    assert verdict == alm.INFEASIBLE_STATIONARY
    pole = np.array([0.0, 0.0, 1.0])
    assert np.linalg.norm(trace.last.point.coords - pole) <= 1e-6


def test_exact_seed_terminates_immediately():
    seed = pb.MultiplierEstimate(np.zeros(0), np.array([1.0]))
    trace, verdict = alm.run(EQUATOR, alm.AlmConfig(), pt(1.0, 0.0, 0.0), seed)
    assert verdict == alm.KKT_APPROX
    assert len(trace) <= 2


def test_iter_limit_verdict():
    trace, verdict = alm.run(EQUATOR, alm.AlmConfig(max_outer=1), pt(SQ2, 0.0, SQ2))
    assert verdict == alm.ITER_LIMIT
    assert len(trace) == 1


def test_inner_failure_verdict():
    cfg = alm.AlmConfig(inner=inner.InnerConfig(max_iters=0))
    trace, verdict = alm.run(EQUATOR, alm.AlmConfig(inner=cfg.inner), pt(SQ2, 0.0, SQ2))
    assert verdict == alm.INNER_FAILURE
    assert trace.last.inner_status == inner.ITER_LIMIT


def test_run_validates_inputs():
    with pytest.raises(ValueError):
        alm.run(EQUATOR, alm.AlmConfig(), pt(1.0, 0.0, 0.0),
                pb.MultiplierEstimate(np.array([1.0]), np.array([1.0])))
    with pytest.raises(ValueError):
        alm.run(EQUATOR, alm.AlmConfig(),
                mf.make_point(mf.sphere(4), np.array([1.0, 0.0, 0.0, 0.0])))


# ------------------------------------------------------- trace invariants


def run_equator(**cfg_kwargs):
    cfg = alm.AlmConfig(**cfg_kwargs)
    return cfg, *alm.run(EQUATOR, cfg, pt(SQ2, 0.0, SQ2))


def test_trace_multipliers_stay_in_boxes():
    cfg, trace, _ = run_equator(lambda_min=-10.0, lambda_max=10.0, mu_max=0.5)
    for r in trace:
        assert np.all(r.lam_bar >= cfg.lambda_min) and np.all(r.lam_bar <= cfg.lambda_max)
        assert np.all(r.mu_bar >= 0.0) and np.all(r.mu_bar <= cfg.mu_max)


def test_trace_rho_nondecreasing_and_justified():
    cfg, trace, _ = run_equator()
    rhos = [r.rho for r in trace]
    assert all(b >= a for a, b in zip(rhos, rhos[1:]))
    # rho may only grow when the feasibility-and-complementarity measure
    # failed to decrease by the factor tau at the previous iteration.
    pairs = [(r.h_norm, float(np.linalg.norm(r.v))) for r in trace]
    for i in range(1, len(trace)):
        if trace.records[i].rho > trace.records[i - 1].rho:
            assert i >= 2
            assert max(pairs[i - 1]) > cfg.tau * max(pairs[i - 2])


def test_trace_v_definition_and_eps_floor():
    cfg, trace, _ = run_equator()
    for r in trace:
        expected_v = (r.mu - r.mu_bar) / r.rho
        assert np.allclose(r.v, expected_v, atol=1e-15)
        assert r.eps >= cfg.kkt_tol / 10.0
        assert r.eps == max(cfg.eps_schedule.eps(r.k), cfg.kkt_tol / 10.0)


def test_eps_floor_binds_for_tiny_schedule():
    # The requested 1e-12 is floored at kkt_tol / 10 so the inner solver is
    # never asked for more accuracy than termination can use.
    prob = sphere_problem("z", name="height")
    cfg = alm.AlmConfig(eps_schedule=alm.FixedSchedule((1e-12,)))
    trace, verdict = alm.run(prob, cfg, pt(0.6, 0.0, 0.8))
    assert all(r.eps == cfg.kkt_tol / 10.0 for r in trace)
    assert verdict == alm.KKT_APPROX


def test_akkt_realization_along_kkt_run():
    # Multiplier estimates realize the approximate-KKT property along the
    # trace: the Lagrangian gradient at (p_k, lam_k, mu_k) is controlled by
    # the inner tolerance that produced p_k.
    cfg, trace, verdict = run_equator()
    assert verdict == alm.KKT_APPROX
    for r in trace:
        grad = pb.lagrangian_gradient(EQUATOR, r.point, pb.MultiplierEstimate(r.lam, r.mu))
        assert mf.norm(grad) <= r.eps + cfg.kkt_tol


def test_limit_inactive_multiplier_vanishes():
    # Constraint x <= 0.5 is strictly inactive at the south-pole limit, so
    # its multiplier estimate must die out even when seeded positive.
    prob = sphere_problem("z", inequalities=("x - 0.5",), name="slack")
    seed = pb.MultiplierEstimate(np.zeros(0), np.array([5.0]))
    trace, verdict = alm.run(prob, alm.AlmConfig(), pt(0.6, 0.0, 0.8), seed)
    assert verdict == alm.KKT_APPROX
    tail = trace.records[-max(1, len(trace) // 3):]
    assert all(r.mu[0] == 0.0 for r in tail)


def test_run_is_deterministic():
    _, t1, v1 = run_equator()
    _, t2, v2 = run_equator()
    assert v1 == v2 and len(t1) == len(t2)
    for a, b in zip(t1, t2):
        assert np.array_equal(a.point.coords, b.point.coords)
        assert np.array_equal(a.mu, b.mu)
        assert a.rho == b.rho and a.inner_iters == b.inner_iters


# ------------------------------------------------------- serialization


def test_trace_round_trip_exact(tmp_path):
    _, trace, _ = run_equator()
    path = tmp_path / "equator-trace.csv"
    alm.write_trace(trace, path)
    back = alm.read_trace(path, EQUATOR)
    assert len(back) == len(trace)
    for a, b in zip(trace, back):
        assert a.k == b.k
        assert np.array_equal(a.point.coords, b.point.coords)
        assert np.array_equal(a.lam, b.lam) and np.array_equal(a.mu, b.mu)
        assert np.array_equal(a.lam_bar, b.lam_bar)
        assert np.array_equal(a.mu_bar, b.mu_bar)
        assert a.rho == b.rho and a.eps == b.eps
        assert np.array_equal(a.v, b.v)
        assert a.h_norm == b.h_norm
        assert a.inner_status == b.inner_status
        assert a.inner_iters == b.inner_iters
        assert a.aug_grad_norm == b.aug_grad_norm


def test_write_trace_is_byte_stable(tmp_path):
    _, trace, _ = run_equator()
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    alm.write_trace(trace, p1)
    alm.write_trace(trace, p2)
    assert p1.read_bytes() == p2.read_bytes()


def trace_lines(tmp_path):
    _, trace, _ = run_equator()
    path = tmp_path / "t.csv"
    alm.write_trace(trace, path)
    return path, path.read_text().splitlines(keepends=True)


def test_read_trace_rejects_bad_header(tmp_path):
    path, lines = trace_lines(tmp_path)
    path.write_text("nope,nope\n" + "".join(lines[1:]))
    with pytest.raises(alm.TraceFormatError):
        alm.read_trace(path, EQUATOR)


def test_read_trace_rejects_short_row(tmp_path):
    path, lines = trace_lines(tmp_path)
    path.write_text(lines[0] + "1,2,3\n")
    with pytest.raises(alm.TraceFormatError):
        alm.read_trace(path, EQUATOR)


def test_read_trace_rejects_wrong_vector_length(tmp_path):
    path, lines = trace_lines(tmp_path)
    row = lines[1].split(",")
    row[1] = "0.5;0.5"  # point on sphere:3 needs three coordinates
    path.write_text(lines[0] + ",".join(row))
    with pytest.raises(alm.TraceFormatError):
        alm.read_trace(path, EQUATOR)


def test_read_trace_rejects_unknown_status(tmp_path):
    path, lines = trace_lines(tmp_path)
    bad = lines[1].replace("Converged", "Exploded")
    path.write_text(lines[0] + bad)
    with pytest.raises(alm.TraceFormatError):
        alm.read_trace(path, EQUATOR)


def test_read_trace_rejects_non_numeric(tmp_path):
    path, lines = trace_lines(tmp_path)
    row = lines[1].split(",")
    row[6] = "fast"
    path.write_text(lines[0] + ",".join(row))
    with pytest.raises(alm.TraceFormatError):
        alm.read_trace(path, EQUATOR)


def test_read_trace_rejects_empty(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("")
    with pytest.raises(alm.TraceFormatError):
        alm.read_trace(path, EQUATOR)
    path.write_text(",".join(alm._COLUMNS) + "\n")
    with pytest.raises(alm.TraceFormatError):
        alm.read_trace(path, EQUATOR)


def test_read_trace_rejects_mismatched_problem(tmp_path):
    path, _ = trace_lines(tmp_path)
    with pytest.raises(alm.TraceFormatError):
        alm.read_trace(path, UNREACHABLE)

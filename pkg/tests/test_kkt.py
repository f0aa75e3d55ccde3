from dataclasses import replace

import numpy as np
import pytest

from dsoled.config import BigMMode
from dsoled.const import PK_BG, PK_SGC, PK_SGE
from dsoled.kkt import (
    BigM,
    NonConvex,
    audit_kkt_against_reference,
    big_m_linearize,
    certify_big_m,
    derive_kkt,
    detect_big_m_saturation,
)
from dsoled.program import ProgramBuilder, RowTag
from dsoled.transmission import build_tn_program, solve_tn_direct

_ZERO = {(PK_BG, 3): [0.0], (PK_SGC, 3): [0.0], (PK_SGE, 3): [0.0]}


def test_dimensions(three_bus):
    tn, _adns, cfg = three_bus
    prog = build_tn_program(tn, cfg)
    kkt = derive_kkt(prog)

    n_lb = int(np.sum(np.isfinite(prog.lb)))
    n_ub = int(np.sum(np.isfinite(prog.ub)))
    assert kkt.n_pairs == prog.n_ineq + n_lb + n_ub
    assert kkt.n_duals == prog.n_eq + prog.n_ineq + n_lb + n_ub
    assert kkt.stationarity.shape == (prog.n_vars, prog.n_vars + kkt.n_duals)
    assert len(kkt.stationarity_tags) == prog.n_vars
    assert np.all(kkt.dual_lower_bounds()[: prog.n_eq] == -np.inf)
    assert np.all(kkt.dual_lower_bounds()[prog.n_eq :] == 0.0)


def test_direct_solution_satisfies_conditions(three_bus):
    tn, _adns, cfg = three_bus
    prog = build_tn_program(tn, cfg, boundary_fixing=_ZERO)
    kkt = derive_kkt(prog)
    sol = solve_tn_direct(prog)
    duals = kkt.dual_vector(sol.eq_duals, sol.ineq_duals, sol.lb_duals, sol.ub_duals)

    assert np.max(np.abs(kkt.stationarity_residual(sol.x, duals))) <= 1e-6
    assert kkt.complementarity_residual(sol.x, duals) <= 1e-5
    assert np.all(kkt.slacks(sol.x) >= -1e-7)


def test_non_convex_rejected():
    builder = ProgramBuilder()
    x = builder.add_variable("x", (0,), "t")
    builder.add_quadratic(x, -1.0)

    with pytest.raises(NonConvex):
        derive_kkt(builder.build())


def test_binaries_rejected():
    builder = ProgramBuilder()
    builder.add_variable("y", (0,), "t", ub=1.0, binary=True)

    with pytest.raises(AssertionError):
        derive_kkt(builder.build())


def test_uniform_big_m():
    big_m = BigM.uniform(3, 5.0)

    assert big_m.slack.tolist() == [5.0, 5.0, 5.0]
    assert big_m.dual.tolist() == [5.0, 5.0, 5.0]
    assert big_m.shrunk(0.5).slack.tolist() == [2.5, 2.5, 2.5]
    with pytest.raises(AssertionError):
        BigM.uniform(3, 0.0)


def test_certified_constants(three_bus):
    tn, _adns, cfg = three_bus
    prog = build_tn_program(tn, cfg)
    kkt = derive_kkt(prog)
    tags = [str(tag) for tag in kkt.pair_tags]

    big_m = certify_big_m(kkt, cfg, dual_scale=500.0)
    pg_ub = tags.index("tn.pg_ub[1,0]")
    flow_ub = tags.index("tn.flow_ub[1,2,0]")
    assert big_m.certified[pg_ub]
    assert big_m.slack[pg_ub] == pytest.approx(100.0, rel=1e-5)
    assert not big_m.certified[flow_ub]
    assert big_m.slack[flow_ub] == cfg.big_m_tso
    assert np.all(big_m.dual == 5000.0)

    assert np.all(certify_big_m(kkt, cfg, dual_scale=1.0).dual == 1e3)

    uniform = certify_big_m(kkt, replace(cfg, big_m_mode=BigMMode.UNIFORM))
    assert np.all(uniform.slack == cfg.big_m_tso)


def test_saturation(three_bus):
    tn, _adns, cfg = three_bus
    prog = build_tn_program(tn, cfg, boundary_fixing=_ZERO)
    kkt = derive_kkt(prog)
    sol = solve_tn_direct(prog)
    lin = big_m_linearize(kkt, BigM.uniform(kkt.n_pairs, 1.0))

    duals = np.zeros(kkt.n_duals)
    duals[kkt.pair_dual[0]] = 1.0
    report = detect_big_m_saturation(lin, sol.x, duals)

    assert report.saturated
    assert report.dual_saturated == (str(kkt.pair_tags[0]),)
    # flow limit 100 with 30 MW on the line
    assert "tn.flow_ub[1,2,0]" in report.slack_saturated


def test_reference_audit(three_bus):
    tn, _adns, cfg = three_bus
    kkt = derive_kkt(build_tn_program(tn, cfg))
    report = audit_kkt_against_reference(kkt, tn, cfg)

    for name in ("tn.pg[1,0]", "tn.theta[2,0]", "tn.pk_bg[3,0]", "tn.pk_sgc[3,0]", "tn.pk_sge[3,0]"):
        assert name in report.matched

    # sending-bus multipliers and unscaled reactance in the hand-written flow rows
    mismatch = report.mismatch_for("tn.flow[1,2,0]")
    assert mismatch is not None
    assert "lambda2[1,0]" in mismatch.reference
    assert report.mismatch_for("tn.pg[1,0]") is None
    assert "tn.pg[1,0]" in report.bound_terms


def test_linearized_rows(three_bus):
    tn, _adns, cfg = three_bus
    prog = build_tn_program(tn, cfg)
    kkt = derive_kkt(prog)
    lin = big_m_linearize(kkt, BigM.uniform(kkt.n_pairs, 10.0))

    builder = ProgramBuilder()
    x_cols = builder.add_program(prog)
    dual_cols = np.array(
        [builder.add_variable("dual", (k,), "kkt") for k in range(kkt.n_duals)]
    )
    alpha_cols = np.array(
        [builder.add_variable("alpha", (k,), "kkt", ub=1.0, binary=True) for k in range(kkt.n_pairs)]
    )
    lin.add_to(builder, x_cols, dual_cols, alpha_cols)
    built = builder.build()

    counts = built.row_counts()
    assert counts["complementarity_slack"] == kkt.n_pairs
    assert counts["complementarity_dual"] == kkt.n_pairs
    assert RowTag("complementarity_slack", (str(kkt.pair_tags[0]),), "kkt") in built.ineq_tags

import pytest

from dsoled.config import BigMMode, DecisionSequence, ScenarioConfig, Tolerances
from dsoled.const import DEFAULT_BIG_M_TSO, DEFAULT_GAP_TOL


def test_scalars_broadcast_to_horizon():
    cfg = ScenarioConfig.from_dict(
        {"horizon": 3, "price_bgc": 20, "price_bge": [40, 41, 42], "price_sg": 15}
    )

    assert cfg.price_bgc == (20.0, 20.0, 20.0)
    assert cfg.price_bge == (40.0, 41.0, 42.0)
    assert cfg.pv_availability_tn == (0.0, 0.0, 0.0)
    assert list(cfg.periods) == [0, 1, 2]


def test_defaults():
    cfg = ScenarioConfig.from_dict({"horizon": 1, "price_bgc": 1, "price_bge": 2, "price_sg": 0})

    assert cfg.step_hours == 1.0
    assert cfg.big_m_tso == DEFAULT_BIG_M_TSO
    assert cfg.big_m_p2p is None
    assert cfg.big_m_mode == BigMMode.INDIVIDUAL
    assert cfg.decision_sequence == DecisionSequence.DSO_FIRST
    assert cfg.tolerances.gap == DEFAULT_GAP_TOL
    assert not cfg.cyclic_soc
    assert not cfg.leader_stationarity


def test_missing_price_raises():
    with pytest.raises(KeyError):
        ScenarioConfig.from_dict({"horizon": 2, "price_bgc": 1, "price_sg": 0})


def test_enums_parse_from_strings():
    cfg = ScenarioConfig.from_dict(
        {
            "horizon": 1,
            "price_bgc": 1,
            "price_bge": 2,
            "price_sg": 0,
            "big_m_mode": "uniform",
            "decision_sequence": "tso_first",
        }
    )

    assert cfg.big_m_mode == BigMMode.UNIFORM
    assert cfg.decision_sequence == DecisionSequence.TSO_FIRST


def test_to_dict_reloads_equal():
    cfg = ScenarioConfig.from_dict(
        {
            "horizon": 2,
            "price_bgc": [20, 21],
            "price_bge": [40, 45],
            "price_sg": 15,
            "big_m_p2p": 7.5,
            "tolerances": {"cone": 1e-4},
            "seed": 3,
        }
    )

    assert ScenarioConfig.from_dict(cfg.to_dict()) == cfg
    assert cfg.tolerances.cone == 1e-4


def test_with_prices_keeps_other_series():
    cfg = ScenarioConfig.from_dict({"horizon": 2, "price_bgc": 20, "price_bge": 40, "price_sg": 15})
    equal = cfg.with_prices(price_bge=cfg.price_bgc)

    assert equal.price_bge == (20.0, 20.0)
    assert equal.price_bgc == cfg.price_bgc
    assert equal.price_sg == cfg.price_sg


def test_tolerances_from_partial_dict():
    tol = Tolerances.from_dict({"feasibility": 1e-6})

    assert tol.feasibility == 1e-6
    assert tol.to_dict()["gap"] == DEFAULT_GAP_TOL

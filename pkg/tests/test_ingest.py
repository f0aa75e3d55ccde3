import json

import pytest

from dsoled.config import DecisionSequence
from dsoled.ingest import (
    AdnSizing,
    AllocationError,
    BatteryDefaults,
    CaseBundle,
    MissingBatterySpec,
    ParseError,
    SchemaError,
    SizingReport,
    embedded_cases,
    load_bundle,
    load_case,
    load_scenario,
    placement_sites,
    read_case,
    read_distribution,
    read_json,
    read_scenario,
    resolve_case,
    save_scenario,
    scale_adn,
    sizing_report,
)
from dsoled.micro import micro_scenario
from dsoled.network import Scenario
from dsoled.profiles import ProfileSpec, synthesize_profiles


def _bus(bus_id, bus_type, pd, qd=0.0, vmax=1.1, vmin=0.9, base_kv=135.0):
    return [bus_id, bus_type, pd, qd, 0, 0, 1, 1.0, 0, base_kv, 1, vmax, vmin]


def _gen(bus_id, pmax, qmin=0.0, qmax=0.0):
    return [bus_id, 0, 0, qmax, qmin, 1.0, 100, 1, pmax, 0]


def _branch(f, t, r, x, rate):
    return [f, t, r, x, 0, rate, rate, rate, 0, 0, 1, -360, 360]


TN_CASE = {
    "baseMVA": 100.0,
    "bus": [_bus(1, 3, 0.0), _bus(2, 1, 30.0), _bus(3, 1, 0.0)],
    "gen": [_gen(1, 100.0)],
    "gencost": [[2, 0, 0, 3, 0.01, 10.0, 0.0]],
    "branch": [_branch(1, 2, 0.0, 0.1, 100.0), _branch(2, 3, 0.0, 0.1, 50.0)],
    "boundary": [3],
}

DN_CASE = {
    "baseMVA": 10.0,
    "bus": [
        _bus(1, 3, 0.0, base_kv=12.66),
        _bus(2, 1, 1.0, 0.3, base_kv=12.66),
        _bus(3, 1, 1.0, 0.3, base_kv=12.66),
    ],
    "gen": [_gen(1, 0.0, qmin=-5.0, qmax=5.0)],
    "gencost": [[2, 0, 0, 2, 0.0, 0.0]],
    "branch": [_branch(1, 2, 0.01, 0.01, 0.0), _branch(2, 3, 0.01, 0.01, 0.0)],
}


@pytest.fixture
def case_dir(tmp_path):
    (tmp_path / "tn.json").write_text(json.dumps(TN_CASE), encoding="utf-8")
    (tmp_path / "dn.json").write_text(json.dumps(DN_CASE), encoding="utf-8")
    return tmp_path


def _bundle(case_dir, **scenario):
    return CaseBundle.from_dict(
        {
            "tn_case": "tn.json",
            "adn_template": "dn.json",
            "attachments": {"3": {"peak_mw": 2.0, "pv_mw": 1.0, "bess_mwh": 1.0}},
            "battery": {},
            "profiles": {"n_profiles": 2, "seed": 0},
            "scenario": {"horizon": 1, **scenario},
        },
        base_dir=str(case_dir),
    )


def test_bundle_requires_cases():
    with pytest.raises(SchemaError):
        CaseBundle.from_dict({"adn_template": "ieee33"})

    with pytest.raises(SchemaError):
        CaseBundle.from_dict({"tn_case": "ieee30"})


def test_bundle_round_trip(case_dir):
    bundle = _bundle(case_dir)

    assert CaseBundle.from_dict(bundle.to_dict(), base_dir=str(case_dir)) == bundle
    assert bundle.with_scenario(horizon=None).scenario == bundle.scenario
    assert bundle.with_scenario(horizon=4).scenario["horizon"] == 4


def test_read_json_reports_position(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{\n  "a": 1,\n  "b": \n}\n', encoding="utf-8")

    with pytest.raises(ParseError) as info:
        read_json(path)

    assert info.value.line == 4
    assert info.value.path == str(path)


def test_read_case_schema(tmp_path):
    for missing in ("baseMVA", "bus", "branch"):
        case = {k: v for k, v in TN_CASE.items() if k != missing}
        path = tmp_path / f"no_{missing}.json"
        path.write_text(json.dumps(case), encoding="utf-8")
        with pytest.raises(SchemaError, match=missing):
            read_case(path)

    short = dict(TN_CASE, branch=[[1, 2, 0.0, 0.1]])
    path = tmp_path / "short.json"
    path.write_text(json.dumps(short), encoding="utf-8")
    with pytest.raises(SchemaError, match="column"):
        read_case(path)


def test_resolve_case(case_dir):
    assert resolve_case("tn.json", str(case_dir)) == case_dir / "tn.json"
    assert resolve_case("ieee30").name == "ieee30.json"
    with pytest.raises(FileNotFoundError):
        resolve_case("nowhere")


def test_embedded_cases():
    assert embedded_cases() == ["ieee30", "ieee33", "study_fixture"]

    bundle = load_bundle("study_fixture")
    assert bundle.boundary == (3, 4, 7, 12, 18)
    assert sorted(bundle.attachments) == [3, 4, 7, 12, 18]
    assert bundle.replace_thermal
    assert bundle.td_peak_mw == 213.46


def test_read_distribution():
    profiles = synthesize_profiles(ProfileSpec(n_profiles=2), 1)
    dn = read_distribution(DN_CASE, 9, profiles, cap_factor=2.0)

    assert dn.id == 9
    assert dn.boundary_bus_ids == (1,)
    assert dn.agent_bus_ids == (2, 3)
    assert dn.bus(2).demand == (1.0,)
    assert dn.bus(1).qg_max == 5.0
    assert dn.bus(2).v_max == pytest.approx(1.21)
    assert dn.k_bgc == (4.0,)
    assert placement_sites(dn) == [2]


def test_scale_adn():
    profiles = synthesize_profiles(ProfileSpec(n_profiles=2), 1)
    template = read_distribution(DN_CASE, 3, profiles)
    dn = scale_adn(template, 4.0, 1.0, 2.0, battery=BatteryDefaults())

    assert dn.peak_load() == pytest.approx(4.0)
    assert dn.bus(2).pv_capacity_ratio == 1.0
    assert dn.bus(2).battery.capacity == 2.0
    assert dn.bus(2).battery.soc_initial == pytest.approx(0.2)
    assert dn.bus(3).battery is None
    assert dn.k_sg == (1.0,)
    assert dn.k_bge == (6.0,)


def test_scale_adn_errors():
    profiles = synthesize_profiles(ProfileSpec(n_profiles=2), 1)
    template = read_distribution(DN_CASE, 3, profiles)

    with pytest.raises(MissingBatterySpec):
        scale_adn(template, 2.0, 0.0, 1.0)

    # one placement site with a capacity ratio of at most 1
    with pytest.raises(AllocationError):
        scale_adn(template, 2.0, 5.0, 0.0)

    with pytest.raises(AllocationError):
        scale_adn(template, 0.0, 0.0, 0.0)


@pytest.mark.parametrize(
    "targets, pv_percent, bess_percent",
    [((3.53, 4.39, 4.39), 124, 124), ((2.28, 1.02, 0.816), 45, 36)],
)
def test_sizing_ratios(three_bus, targets, pv_percent, bess_percent):
    tn, _adns, cfg = three_bus
    profiles = synthesize_profiles(ProfileSpec(n_profiles=2), 1)
    template = read_distribution(DN_CASE, 3, profiles)
    dn = scale_adn(template, *targets, battery=BatteryDefaults(), pv_site_limit=5.0)

    sizing = sizing_report(Scenario(tn, (dn,), cfg))
    (adn,) = sizing.adns
    assert adn.peak_mw == pytest.approx(targets[0])
    assert adn.pv_mw == pytest.approx(targets[1])
    assert round(100 * adn.pv_share) == pv_percent
    assert round(100 * adn.bess_share) == bess_percent
    assert sizing.interior_peak_mw == pytest.approx(30.0)

    frame = sizing.to_frame()
    assert frame.adn.tolist() == [3]
    assert frame.pv_share.tolist() == [pytest.approx(adn.pv_share)]


def test_sizing_without_pv():
    profiles = synthesize_profiles(ProfileSpec(n_profiles=2), 1)
    dn = scale_adn(read_distribution(DN_CASE, 3, profiles), 2.0, 0.0, 0.0)

    assert all(bus.pv_capacity_ratio == 0.0 for bus in dn.buses)
    assert dn.installed_pv(1.0) == 0.0


def test_adn_peak_share():
    peaks = (2.28, 3.72, 3.53, 3.42, 3.01)
    sizing = SizingReport(
        adns=tuple(AdnSizing(k, peak, 0.0, 0.0) for k, peak in enumerate(peaks)),
        interior_peak_mw=213.46,
    )

    assert sizing.adn_peak_mw == pytest.approx(15.96, abs=1e-6)
    assert sizing.system_peak_mw == pytest.approx(229.42, abs=1e-6)
    assert 100 * sizing.adn_peak_share == pytest.approx(6.96, abs=0.01)


def test_load_case(case_dir):
    tn, adns, cfg = load_case(_bundle(case_dir, price_bge=40.0))

    assert tn.boundary_bus_ids == (3,)
    assert tn.reference_bus_ids == (1,)
    assert tn.bus(1).gen_cost == (0.01, 10.0, 0.0)
    assert tn.bus(2).demand == (30.0,)
    assert tn.bus(3).kt_bg_limit == pytest.approx(3.0)
    assert [dn.id for dn in adns] == [3]
    assert adns[0].bus(2).battery is not None
    assert cfg.price_bgc == (0.5,)
    assert cfg.price_sg == (pytest.approx(0.4),)
    assert cfg.price_bge == (40.0,)


def test_reference_expensive_price(case_dir):
    _tn, _adns, cfg = load_case(_bundle(case_dir))

    # ADN demand served as thermal energy: 32 MW from the only unit
    assert cfg.price_bge[0] == pytest.approx(0.02 * 32.0 + 10.0, abs=1e-4)


def test_attachment_outside_boundary(case_dir):
    bundle = _bundle(case_dir)
    stray = CaseBundle.from_dict({**bundle.to_dict(), "attachments": {"2": {"peak_mw": 1.0}}}, str(case_dir))

    with pytest.raises(SchemaError):
        load_case(stray)


def test_scenario_file(tmp_path):
    scenario = micro_scenario(2)
    path = tmp_path / "micro.json"
    save_scenario(scenario, path)

    assert read_scenario(path) == scenario
    reloaded = load_scenario(str(path), decision_sequence="tso_first", horizon=None)
    assert reloaded.cfg.decision_sequence == DecisionSequence.TSO_FIRST
    assert reloaded.tn == scenario.tn


def test_malformed_scenario_file(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"tn": {}, "adns": [], "cfg": {}}), encoding="utf-8")

    with pytest.raises(SchemaError):
        load_scenario(str(path))


@pytest.mark.slow
def test_study_fixture():
    tn, adns, cfg = load_scenario("study_fixture", horizon=2, price_bge=40.0)

    assert cfg.horizon == 2
    assert tn.boundary_bus_ids == (3, 4, 7, 12, 18)
    assert [dn.id for dn in adns] == [3, 4, 7, 12, 18]
    # PV plants replace the thermal units at their buses
    assert [bus.id for bus in tn.buses if bus.has_generation] == [1, 2, 5, 8]
    interior_peak = sum(max(tn.bus(b).demand) for b in tn.interior_bus_ids)
    assert interior_peak == pytest.approx(213.46, rel=1e-6)

    sizing = sizing_report(Scenario(tn, adns, cfg))
    assert sizing.interior_peak_mw == pytest.approx(213.46, rel=1e-6)
    assert sizing.adn_peak_mw == pytest.approx(15.96, abs=1e-6)
    assert 100 * sizing.adn_peak_share == pytest.approx(6.96, abs=0.01)
    shares = {s.adn_id: s for s in sizing.adns}
    assert round(100 * shares[7].pv_share) == 124
    assert round(100 * shares[3].pv_share) == 45
    assert round(100 * shares[3].bess_share) == 36

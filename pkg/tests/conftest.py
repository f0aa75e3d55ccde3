import pytest

from dsoled.config import ScenarioConfig
from dsoled.micro import micro_scenario
from dsoled.network import Scenario, TnBus, TnLine, TransmissionNetwork


@pytest.fixture
def three_bus() -> Scenario:
    """Generator at bus 1, 30 MW load at bus 2, boundary leaf at bus 3"""
    tn = TransmissionNetwork(
        buses=(
            TnBus(id=1, demand=(0.0,), gen_cost=(0.01, 10.0, 0.0), pg_max=(100.0,)),
            TnBus(id=2, demand=(30.0,)),
            TnBus(id=3, demand=(0.0,), kt_bg_limit=50.0),
        ),
        lines=(
            TnLine(from_bus=1, to_bus=2, reactance=0.1, flow_limit=100.0),
            TnLine(from_bus=2, to_bus=3, reactance=0.1, flow_limit=50.0),
        ),
        boundary_bus_ids=(3,),
        reference_bus_ids=(1,),
    )
    cfg = ScenarioConfig.from_dict(
        {"horizon": 1, "price_bgc": 20.0, "price_bge": 40.0, "price_sg": 15.0}
    )
    return Scenario(tn, (), cfg)


@pytest.fixture
def micro() -> Scenario:
    return micro_scenario(0)


@pytest.fixture
def output_dir(tmp_path, monkeypatch):
    out = tmp_path / "runs"
    monkeypatch.setenv("DSOLED_OUTPUT_DIR", str(out))
    return out

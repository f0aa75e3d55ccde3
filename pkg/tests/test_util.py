import math

import pytest

from dsoled.file_hash import get_config_hash, get_file_hash
from dsoled.util import fit_power_law, parse_counts, relative_gap


@pytest.mark.parametrize(
    "text, expected",
    [("3", [3]), ("1..3,5", [1, 2, 3, 5]), ("0, 2,4", [0, 2, 4]), ("", [])],
)
def test_parse_counts(text, expected):
    assert parse_counts(text) == expected


def test_fit_power_law():
    assert fit_power_law([100, 200, 400], [1, 4, 16]) == pytest.approx(2.0)
    assert math.isnan(fit_power_law([100], [1]))


def test_relative_gap():
    assert relative_gap(200.0, 150.0) == pytest.approx(0.25)
    assert relative_gap(0.5, 0.0) == pytest.approx(0.5)
    assert relative_gap(1.0, 2.0) == 0.0


def test_file_hash(tmp_path):
    a = tmp_path / "a.txt"
    b = tmp_path / "b.txt"
    a.write_text("same", encoding="utf-8")
    b.write_text("same", encoding="utf-8")

    assert get_file_hash(a) == get_file_hash(b)
    assert len(get_file_hash(a)) == 32

    b.write_text("other", encoding="utf-8")
    assert get_file_hash(a) != get_file_hash(b)


def test_config_hash_ignores_key_order():
    assert get_config_hash({"a": 1, "b": [1, 2]}) == get_config_hash({"b": [1, 2], "a": 1})
    assert len(get_config_hash({"a": 1})) == 12
    assert get_config_hash({"a": 1}) != get_config_hash({"a": 2})

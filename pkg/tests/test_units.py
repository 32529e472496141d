import json
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from esglens.errors import UnitError
from esglens.units import (
    default_table,
    fold_unit,
    is_recognized_unit,
    load_unit_table,
    normalize_unit_value,
)


def test_fold_unit_handles_scripts_case_and_separators():
    assert fold_unit("tCO₂e") == "tco2e"
    assert fold_unit("m³") == "m3"
    assert fold_unit("Tonnes CO2e") == "tonnesco2e"
    assert fold_unit("kilo-litres") == "kilolitres"


def test_worked_conversions():
    assert normalize_unit_value(2.5, "GWh") == (2500.0, "MWh")
    assert normalize_unit_value(3.6, "GJ") == (1.0, "MWh")
    assert normalize_unit_value(12, "million litres") == (12000.0, "m3")
    assert normalize_unit_value(1000, "tCO₂e") == (1000.0, "tCO2e")


def test_every_alias_round_trips_to_a_fixed_point():
    table = default_table()
    for alias, rule in table.aliases.items():
        value, unit = normalize_unit_value(7.0, alias, table)
        assert unit == rule.canonical
        again = normalize_unit_value(value, unit, table)
        assert again == (value, unit)


def test_magnitude_words_scale_and_vanish():
    assert normalize_unit_value(1.5, "million") == (1500000.0, "")
    assert normalize_unit_value(2, "bn") == (2e9, "")


def test_currency_with_magnitude():
    value, unit = normalize_unit_value(1.2, "million USD")
    assert unit == "USD"
    assert math.isclose(value, 1200000.0, rel_tol=1e-12)
    assert normalize_unit_value(340, "usd") == (340.0, "USD")


def test_unknown_unit_passes_through_lowercased():
    assert normalize_unit_value(5, "Gallons Per Llama") == (5.0, "gallons per llama")


def test_empty_unit_passes_value_through():
    assert normalize_unit_value(5, " ") == (5.0, "")


def test_non_finite_values_are_refused():
    with pytest.raises(UnitError):
        normalize_unit_value(float("nan"), "MWh")
    with pytest.raises(UnitError):
        normalize_unit_value(float("inf"), "%")


def test_is_recognized_unit():
    assert is_recognized_unit("%")
    assert is_recognized_unit("million litres")
    assert is_recognized_unit("USD")
    assert not is_recognized_unit("million")
    assert not is_recognized_unit("widgets per fortnight")
    assert not is_recognized_unit("")


def test_duplicate_alias_rejected(tmp_path):
    table = {
        "families": [
            {
                "family": "energy",
                "canonical": "MWh",
                "units": [{"alias": "MWh"}, {"alias": "mwh"}],
            }
        ]
    }
    path = tmp_path / "units.json"
    path.write_text(json.dumps(table), encoding="utf-8")
    with pytest.raises(UnitError, match="duplicate unit alias"):
        load_unit_table(str(path))


@given(st.floats(min_value=-1e12, max_value=1e12, allow_nan=False))
def test_normalization_is_idempotent(value):
    table = default_table()
    for unit in ("GWh", "kg CO2e", "litres", "%", "unknown-unit"):
        out_value, out_unit = normalize_unit_value(value, unit, table)
        assert normalize_unit_value(out_value, out_unit, table) == (out_value, out_unit)

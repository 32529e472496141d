"""Unit recognition and conversion to per-family canonical units.

The conversion table ships as package data.  Each family row lists the
canonical unit plus aliases with explicit ``multiply``/``divide`` factors,
which keeps common conversions exact in float arithmetic (3.6 GJ becomes
exactly 1.0 MWh because the factor is applied as a division).
"""

from __future__ import annotations

import json
import math
import unicodedata
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

from esglens.errors import UnitError

__all__ = [
    "UnitRule",
    "UnitTable",
    "default_table",
    "fold_unit",
    "is_recognized_unit",
    "load_unit_table",
    "normalize_unit_value",
]


def fold_unit(text: str) -> str:
    """Collapse a unit spelling to its lookup key.

    NFKC folds sub- and superscripts (tCO₂e and m³ become tCO2e and m3),
    then case, spaces, and hyphens are discarded.
    """
    folded = unicodedata.normalize("NFKC", text).lower()
    return "".join(ch for ch in folded if ch not in " \t-")


@dataclass(frozen=True)
class UnitRule:
    family: str
    canonical: str
    multiply: float = 1.0
    divide: float = 1.0

    def apply(self, value: float) -> float:
        return value * self.multiply / self.divide


@dataclass(frozen=True)
class UnitTable:
    aliases: dict[str, UnitRule]
    magnitudes: dict[str, float]
    currencies: frozenset[str]
    canonical_by_family: dict[str, str] = field(default_factory=dict)

    def rule_for(self, unit: str) -> UnitRule | None:
        return self.aliases.get(fold_unit(unit))


def _parse_table(obj: dict) -> UnitTable:
    aliases: dict[str, UnitRule] = {}
    canonical_by_family: dict[str, str] = {}
    for fam in obj.get("families", []):
        family = fam["family"]
        canonical = fam["canonical"]
        canonical_by_family[family] = canonical
        for row in fam["units"]:
            rule = UnitRule(
                family=family,
                canonical=canonical,
                multiply=float(row.get("multiply", 1.0)),
                divide=float(row.get("divide", 1.0)),
            )
            key = fold_unit(row["alias"])
            if key in aliases:
                raise UnitError(f"duplicate unit alias {row['alias']!r}")
            aliases[key] = rule
    magnitudes = {fold_unit(k): float(v) for k, v in obj.get("magnitudes", {}).items()}
    currencies = frozenset(c.upper() for c in obj.get("currencies", []))
    return UnitTable(
        aliases=aliases,
        magnitudes=magnitudes,
        currencies=currencies,
        canonical_by_family=canonical_by_family,
    )


def load_unit_table(path: str) -> UnitTable:
    with open(path, encoding="utf-8") as fh:
        return _parse_table(json.load(fh))


@lru_cache(maxsize=1)
def default_table() -> UnitTable:
    text = resources.files("esglens.data").joinpath("units.json").read_text("utf-8")
    return _parse_table(json.loads(text))


def _split_magnitudes(unit: str, table: UnitTable) -> tuple[float, str]:
    """Pull magnitude words out of a unit phrase.

    Returns the combined multiplier and the remaining phrase, so both
    "million litres" and "USD million" reduce to a base unit plus a factor.
    """
    multiplier = 1.0
    rest: list[str] = []
    for word in unit.split():
        factor = table.magnitudes.get(fold_unit(word))
        if factor is not None:
            multiplier *= factor
        else:
            rest.append(word)
    return multiplier, " ".join(rest)


def normalize_unit_value(
    value: float, unit: str, table: UnitTable | None = None
) -> tuple[float, str]:
    """Convert a value to its family's canonical unit.

    Unknown units leave the value untouched and report the unit lowercased;
    the operation is idempotent either way.  Non-finite values are refused.
    """
    if not math.isfinite(value):
        raise UnitError(f"cannot normalize non-finite value {value!r}")
    table = table or default_table()
    raw = unit.strip()
    if not raw:
        return value, ""
    multiplier, base = _split_magnitudes(raw, table)
    if not base:
        # Pure magnitude phrase such as "million": scale, no unit remains.
        return value * multiplier, ""
    rule = table.rule_for(base)
    if rule is not None:
        return rule.apply(value * multiplier), rule.canonical
    if " " not in base and base.upper() in table.currencies:
        return value * multiplier, base.upper()
    return value, raw.lower()


def is_recognized_unit(unit: str, table: UnitTable | None = None) -> bool:
    """True when the phrase resolves to a table alias or a currency code."""
    table = table or default_table()
    raw = unit.strip()
    if not raw:
        return False
    _, base = _split_magnitudes(raw, table)
    if not base:
        return False
    if table.rule_for(base) is not None:
        return True
    return " " not in base and base.upper() in table.currencies

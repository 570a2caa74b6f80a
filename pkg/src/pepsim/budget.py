"""Sensitivity budget: improvement factors of VIP2 over VIP and the projected limit.

Gains are intervals ``(lo, hi)``; a point gain has lo == hi. Signal-side
("linear") gains multiply the sensitivity directly, background reductions
enter as a square root, the counting-statistics scaling of a limit when the
background dominates.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

from pepsim.config import parse_text
from pepsim.errors import ConfigError


class Category(enum.Enum):
    Linear = "linear"
    Background = "background"


@dataclass(frozen=True)
class BudgetEntry:
    name: str
    gain: tuple[float, float]
    category: Category
    old_value: str = ""
    new_value: str = ""

    def __post_init__(self):
        lo, hi = self.gain
        if not (0 < lo <= hi):
            raise ConfigError(f"budget entry {self.name!r}: need 0 < lo <= hi, got {self.gain}")

    @property
    def lo(self):
        return self.gain[0]

    @property
    def hi(self):
        return self.gain[1]


def default_budget() -> list[BudgetEntry]:
    """Table of VIP2 improvements over VIP. The current gain is stored as
    [2, 2.5]: 100 A / 40 A = 2.5, quoted conservatively as "> 2"."""
    lin, bkg = Category.Linear, Category.Background
    return [
        BudgetEntry("acceptance", (12.0, 12.0), lin, "", "12 %"),
        BudgetEntry("increase current", (2.0, 2.5), lin, "40 A", "100 A"),
        BudgetEntry("reduced length", (1 / 3, 1 / 3), lin, "8.8 cm", "3 cm"),
        BudgetEntry("energy resolution", (4.0, 4.0), bkg, "320 eV @ 8 keV", "170 eV @ 8 keV"),
        BudgetEntry("reduced active area", (20.0, 20.0), bkg, "114 cm2", "6 cm2"),
        BudgetEntry("better shielding and veto", (5.0, 10.0), bkg),
        BudgetEntry("higher SDD efficiency", (0.5, 0.5), bkg),
    ]


def _select(entries, category):
    chosen = [e for e in entries if e.category is category]
    if not chosen:
        raise ValueError(f"no {category.value} entries")
    return chosen


def linear_factor(entries, edge: str = "lo") -> float:
    """Product of the signal-side gains, taking the ``lo`` (default) or ``hi`` edge."""
    chosen = _select(entries, Category.Linear)
    return math.prod(e.lo if edge == "lo" else e.hi for e in chosen)


def background_factor(entries) -> tuple[float, float]:
    chosen = _select(entries, Category.Background)
    return math.prod(e.lo for e in chosen), math.prod(e.hi for e in chosen)


def overall_improvement(linear: float, background: tuple[float, float],
                        combination: str = "sqrt") -> tuple[float, float]:
    """``linear * sqrt(background)``; ``combination="product"`` multiplies plainly."""
    if linear <= 0 or min(background) <= 0:
        raise ValueError("improvement factors must be positive")
    if combination == "sqrt":
        return linear * math.sqrt(background[0]), linear * math.sqrt(background[1])
    if combination == "product":
        return linear * background[0], linear * background[1]
    raise ValueError(f"unknown combination {combination!r}")


def project_limit(reference_limit: float, improvement: tuple[float, float]) -> tuple[float, float]:
    """(best, worst) projected limit; the larger improvement gives the smaller limit."""
    if reference_limit <= 0:
        raise ValueError("reference limit must be positive")
    lo, hi = improvement
    return reference_limit / hi, reference_limit / lo


def _parse_gain(text: str) -> tuple[float, float]:
    lo, sep, hi = text.partition("..")
    lo_v = float(Fraction(lo.strip()))
    hi_v = float(Fraction(hi.strip())) if sep else lo_v
    return lo_v, hi_v


def parse_budget(text: str, source: str = "<string>") -> list[BudgetEntry]:
    """Budget file: ``linear.<name> = gain`` or ``background.<name> = lo..hi``;
    optional ``<category>.<name>.old_value`` / ``.new_value`` annotations.
    Underscores in names become spaces. Gains may be fractions such as ``1/3``."""
    raw = parse_text(text, source)
    gains: dict[tuple[str, str], str] = {}
    notes: dict[tuple[str, str], dict[str, str]] = {}
    for key, value in raw.items():
        parts = key.split(".")
        if parts[0] not in ("linear", "background") or len(parts) not in (2, 3):
            raise ConfigError(f"{source}: unknown budget key {key!r}")
        ident = (parts[0], parts[1])
        if len(parts) == 2:
            gains[ident] = value
        elif parts[2] in ("old_value", "new_value"):
            notes.setdefault(ident, {})[parts[2]] = value
        else:
            raise ConfigError(f"{source}: unknown budget key {key!r}")
    entries = []
    for ident, value in gains.items():
        try:
            gain = _parse_gain(value)
        except (ValueError, ZeroDivisionError):
            raise ConfigError(f"{source}: {ident[0]}.{ident[1]}: bad gain {value!r}") from None
        entries.append(BudgetEntry(ident[1].replace("_", " "), gain, Category(ident[0]),
                                   **notes.get(ident, {})))
    for ident in notes:
        if ident not in gains:
            raise ConfigError(f"{source}: annotation for undefined entry {'.'.join(ident)}")
    return entries


def load_budget(path) -> list[BudgetEntry]:
    return parse_budget(Path(path).read_text(), str(path))


def dump_budget(entries) -> str:
    lines = []
    for e in entries:
        key = f"{e.category.value}.{e.name.replace(' ', '_')}"
        gain = repr(e.lo) if e.lo == e.hi else f"{e.lo!r}..{e.hi!r}"
        lines.append(f"{key} = {gain}")
        if e.old_value:
            lines.append(f"{key}.old_value = {e.old_value}")
        if e.new_value:
            lines.append(f"{key}.new_value = {e.new_value}")
    return "\n".join(lines) + "\n"


def _fmt_gain(lo, hi):
    def one(x):
        frac = Fraction(x).limit_denominator(10)
        if x < 1 and abs(float(frac) - x) < 1e-12:
            return str(frac)
        return f"{x:.4g}"

    return one(lo) if lo == hi else f"{one(lo)} - {one(hi)}"


def budget_report(entries, reference_limit: float = 4.7e-29, combination: str = "sqrt") -> str:
    """Aligned text table: entries, subtotals, overall improvement, projected limit."""
    lin = linear_factor(entries)
    lin_hi = linear_factor(entries, "hi")
    bkg = background_factor(entries)
    overall = overall_improvement(lin, bkg, combination)
    best, worst = project_limit(reference_limit, overall)
    rows = [("change", "value new (old)", "expected gain")]
    for cat, total_label, total in (
        (Category.Linear, "total linear factor", _fmt_gain(lin, lin)
         + (f" (up to {lin_hi:.4g})" if lin_hi != lin else "")),
        (Category.Background, "background reduction", _fmt_gain(*bkg)),
    ):
        for e in entries:
            if e.category is cat:
                value = e.new_value + (f" ({e.old_value})" if e.old_value else "")
                rows.append((e.name, value, _fmt_gain(e.lo, e.hi)))
        rows.append(None)
        rows.append((total_label, "", total))
        rows.append(None)
    rows.append((f"overall improvement [{combination}]", "", f"{overall[0]:.1f} - {overall[1]:.1f}"))
    rows.append(None)
    rows.append((f"projected limit from {reference_limit:.3g}", "", f"{best:.3g} - {worst:.3g}"))
    widths = [max(len(r[i]) for r in rows if r) for i in range(3)]
    rule = "-" * (sum(widths) + 4)
    out = [rule]
    for r in rows:
        out.append(rule if r is None else
                   f"{r[0]:<{widths[0]}}  {r[1]:<{widths[1]}}  {r[2]:>{widths[2]}}")
    if out[-1] != rule:
        out.append(rule)
    return "\n".join(out) + "\n"

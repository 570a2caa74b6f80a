import itertools

import pytest
from hypothesis import given
from hypothesis import strategies as st

from pepsim.budget import (BudgetEntry, Category, background_factor, budget_report,
                           default_budget, dump_budget, linear_factor, load_budget,
                           overall_improvement, parse_budget, project_limit)
from pepsim.errors import ConfigError

LIN, BKG = Category.Linear, Category.Background


def entries(category, gains):
    return [BudgetEntry(f"e{i}", g if isinstance(g, tuple) else (g, g), category)
            for i, g in enumerate(gains)]


def test_linear_examples():
    assert linear_factor(entries(LIN, [12, 2, 1 / 3])) == pytest.approx(8.0, rel=1e-15)
    assert linear_factor(entries(LIN, [12, 2.5, 1 / 3])) == pytest.approx(10.0, rel=1e-15)
    assert linear_factor(entries(LIN, [1])) == 1


def test_background_examples():
    assert background_factor(entries(BKG, [4, 20, (5, 10), 0.5])) == (200.0, 400.0)
    assert background_factor(entries(BKG, [4, 20, (5, 10), 1])) == (400.0, 800.0)
    assert background_factor(entries(BKG, [1, 1])) == (1, 1)


def test_overall_and_projection():
    lo, hi = overall_improvement(8, (200, 400))
    assert lo == pytest.approx(113.137, abs=1e-3)
    assert hi == pytest.approx(160.0, abs=1e-12)
    assert overall_improvement(1, (1, 1)) == (1, 1)
    best, worst = project_limit(4.7e-29, (113.0, 160.0))
    assert best == pytest.approx(2.9375e-31)
    assert worst == pytest.approx(4.159e-31, rel=1e-3)
    assert project_limit(4.5e-28, (10, 10)) == pytest.approx((4.5e-29, 4.5e-29))
    assert project_limit(3.0, (1, 1)) == (3.0, 3.0)


def test_product_combination():
    assert overall_improvement(8, (200, 400), "product") == (1600, 3200)


def test_default_budget_aggregates():
    budget = default_budget()
    assert linear_factor(budget) == pytest.approx(8.0, rel=1e-15)
    assert linear_factor(budget, "hi") == pytest.approx(10.0, rel=1e-15)
    assert background_factor(budget) == pytest.approx((200.0, 400.0), rel=1e-15)
    lo, hi = overall_improvement(linear_factor(budget), background_factor(budget))
    assert lo <= 120 <= hi


def test_invalid_gain():
    with pytest.raises(ConfigError):
        BudgetEntry("x", (2.0, 1.0), LIN)
    with pytest.raises(ConfigError):
        BudgetEntry("x", (0.0, 1.0), LIN)


def test_permutation_invariance():
    budget = default_budget()
    ref = (linear_factor(budget), background_factor(budget))
    for perm in itertools.permutations(budget, len(budget)):
        perm = list(perm)
        assert linear_factor(perm) == pytest.approx(ref[0], rel=1e-14)
        assert background_factor(perm) == pytest.approx(ref[1], rel=1e-14)


gain = st.floats(0.01, 100)


@given(st.lists(gain, min_size=1, max_size=5), st.lists(gain, min_size=1, max_size=5),
       st.integers(0, 9), st.floats(1.01, 10))
def test_projection_decreases_with_any_gain(lin, bkg, which, boost):
    def projected(lin, bkg):
        return project_limit(1.0, overall_improvement(
            linear_factor(entries(LIN, lin)), background_factor(entries(BKG, bkg))))

    base = projected(lin, bkg)
    if which % 2:
        lin = list(lin)
        lin[which % len(lin)] *= boost
    else:
        bkg = list(bkg)
        bkg[which % len(bkg)] *= boost
    better = projected(lin, bkg)
    assert better[0] < base[0] and better[1] < base[1]


def test_file_round_trip(tmp_path):
    text = ("linear.acceptance = 12\nlinear.current = 2..2.5\nlinear.length = 1/3\n"
            "linear.length.old_value = 8.8 cm\n"
            "background.resolution = 4\nbackground.area = 20\n"
            "background.veto = 5..10\nbackground.efficiency = 1/2\n")
    path = tmp_path / "budget.cfg"
    path.write_text(text)
    budget = load_budget(path)
    assert linear_factor(budget) == pytest.approx(8.0)
    assert background_factor(budget) == pytest.approx((200.0, 400.0))
    assert [e.old_value for e in budget if e.name == "length"] == ["8.8 cm"]
    assert parse_budget(dump_budget(budget)) == budget


@pytest.mark.parametrize("text", ["other.x = 1\n", "linear.x = abc\n",
                                  "linear.x.colour = red\n", "linear.x.old_value = 1\n"])
def test_bad_budget_file(text):
    with pytest.raises(ConfigError):
        parse_budget(text)


def test_report_table():
    report = budget_report(default_budget())
    assert "total linear factor" in report
    assert "200 - 400" in report
    assert "113.1 - 160.0" in report
    assert "2.94e-31 - 4.15e-31" in report
    assert "1/3" in report

import math
from fractions import Fraction

import numpy as np
import pytest

from kahlernet.experiments import (
    CSV_COLUMNS,
    CapacityQuery,
    SweepConfig,
    asymp_width,
    capacity_sweep,
    estB_bound,
    holomorphic_depth_counts,
    low_rank_fit,
    match_width,
    random_symmetric,
    rows_to_csv,
    tree_counts,
    truncation_oracle,
    write_sweep,
)


def test_match_width_examples():
    assert match_width(1, 2) == (Fraction(9, 4), 3)
    assert match_width(2, 2) == (Fraction(4), 4)
    frac, ceil = match_width(2, 4)
    assert frac == Fraction(225, 36) and ceil == 7


def test_match_width_is_exact_for_huge_arguments():
    frac, _ = match_width(40, 200)
    num = math.comb(240, 200) ** 2
    den = math.comb(140, 100) ** 2
    assert frac == Fraction(num, den)


def test_asymptotic_regimes():
    assert abs(float(match_width(1, 64)[0]) / 4 - 1) < 0.1
    assert abs(float(match_width(64, 2)[0]) / (64 / 2) ** 2 - 1) < 0.1
    a = asymp_width(1, 100)
    assert a.regime == "n<<k" and a.value == 4
    b = asymp_width(100, 2)
    assert b.regime == "n>>k" and b.value == 2500
    c = asymp_width(6, 6)
    assert c.regime == "n~k" and c.small_n == 4 ** 6 and c.large_n == 1.0
    assert asymp_width(3, 4, boundary=0.5).regime == "n>>k"


def test_capacity_query_validation():
    for bad in [(0, 2), (1, 3), (1, 0)]:
        with pytest.raises(ValueError):
            CapacityQuery(*bad)
    with pytest.raises(ValueError):
        CapacityQuery(1, 2, 0)


def test_estB_examples():
    assert estB_bound(2, 2, 1, 0.7) == 0.7
    assert estB_bound(2, 2, 4, 0.7) == 0.0
    assert estB_bound(2, 2, 9, 0.7) == 0.0
    # D_match = 25/4 for (n, k) = (2, 4): linear in D_1
    assert abs(estB_bound(2, 4, 4, 1.0) - (1 - 3 / (25 / 4 - 1))) < 1e-15
    vals = [estB_bound(2, 4, d, 1.0) for d in range(1, 10)]
    assert np.all(np.diff(vals) <= 0) and vals[-1] == 0.0


def test_estB_degenerate_denominator(monkeypatch):
    # no valid (n, k) gives D_match = 1, so force it
    from kahlernet import experiments
    monkeypatch.setattr(experiments, "match_width", lambda n, k: (Fraction(1), 1))
    with pytest.raises(ZeroDivisionError):
        experiments.estB_bound(1, 2, 1, 1.0)


def test_oracle_examples():
    _, kept, err_sq = truncation_oracle(np.diag([3.0, 2.0, 1.0]), 1)
    assert kept.tolist() == [3.0]
    assert abs(math.sqrt(err_sq) - math.sqrt(5 / 14)) < 1e-15
    assert abs(math.sqrt(5 / 14) - 0.5976) < 1e-4
    assert low_rank_fit(np.eye(6), 6).relative_error_sq == 0.0
    r = low_rank_fit(np.eye(10), 4)
    assert abs(r.relative_error_sq - 0.6) < 1e-15
    assert abs(r.relative_error_fro - math.sqrt(0.6)) < 1e-15


def test_oracle_against_exhaustive_rank_one_fits():
    # best c v v^T over a dense grid of unit vectors in R^3
    f = np.diag([3.0, 2.0, 1.0])
    th, ph = np.meshgrid(np.linspace(0, np.pi, 181), np.linspace(0, 2 * np.pi, 361), indexing="ij")
    v = np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], -1).reshape(-1, 3)
    c = np.einsum("pi,ij,pj->p", v, f, v)          # optimal scale for each direction
    err = np.sum(f ** 2) - c ** 2
    best = math.sqrt(err.min() / np.sum(f ** 2))
    oracle = math.sqrt(truncation_oracle(f, 1)[2])
    assert best >= oracle - 1e-12
    assert best - oracle < 1e-3


def test_signed_squares_handle_indefinite_matrices():
    f = np.diag([2.0, -1.0, 0.5])
    r = low_rank_fit(f, 2, seed=0)
    assert abs(r.descent_error - r.oracle_error) < 1e-6


@pytest.mark.parametrize("seed", range(5))
def test_descent_never_beats_oracle(seed):
    rng = np.random.default_rng(seed)
    f = random_symmetric(8, "gaussian", rng)
    for D_1 in (1, 3, 5):
        r = low_rank_fit(f, D_1, seed=seed)
        assert r.descent_error >= r.oracle_error - 1e-8


def test_low_rank_input_validation():
    with pytest.raises(ValueError):
        low_rank_fit(np.array([[1.0, 2.0], [0.0, 1.0]]), 1)
    with pytest.raises(ValueError):
        low_rank_fit(np.eye(3), 4)
    with pytest.raises(ValueError):
        random_symmetric(3, "wishart", np.random.default_rng(0))


def test_identity_sweep_is_exact():
    rows = capacity_sweep(SweepConfig(n=2, k=4, ensemble="identity"))
    D = rows[0]["D"]
    assert D == 6 and len(rows) == D
    for r in rows:
        assert abs(r["error_sq"] - (1 - r["D_1"] / D)) < 1e-10


def test_gaussian_spectrum_is_majorized_by_identity():
    ident = capacity_sweep(SweepConfig(n=2, k=4, ensemble="identity"))
    gauss = capacity_sweep(SweepConfig(n=2, k=4, ensemble="gaussian", samples=20, seed=3))
    for a, b in zip(gauss, ident):
        assert a["error_sq"] <= b["error_sq"] + 1e-12


def test_sweep_csv_is_reproducible(tmp_path):
    cfg = SweepConfig(n=2, k=4, ensemble="gaussian", widths=(1, 2, 4), samples=3, seed=7, descent=True)
    write_sweep(capacity_sweep(cfg), tmp_path / "a.csv", cfg)
    write_sweep(capacity_sweep(cfg), tmp_path / "b.csv", cfg)
    a, b = (tmp_path / "a.csv").read_bytes(), (tmp_path / "b.csv").read_bytes()
    assert a == b
    lines = a.decode().splitlines()
    assert lines[0].split(",")[:len(CSV_COLUMNS)] == list(CSV_COLUMNS)
    assert len(lines) == 1 + 3
    assert (tmp_path / "a.json").exists()
    assert rows_to_csv([]).strip() == ",".join(CSV_COLUMNS)


def test_holomorphic_count_slope():
    counts = holomorphic_depth_counts(5, 6, [2, 3, 4, 5])
    ks = [k for k, _ in counts]
    n = [c for _, c in counts]
    assert ks == [2, 4, 8, 16]
    # O(D^2 log k): constant increment 2 D^2 per doubling of k
    assert np.all(np.diff(n) == 2 * 36)


def test_tree_counts():
    out = tree_counts(1, 3)
    assert out["k"] == 4 and out["polynomial"] == math.comb(5, 1) ** 2
    assert out["tree"] > 0 and out["middle_replaced"] > 0

"""Approximation-capacity calculators: width matching, low-rank sum-of-squares fits, sweeps."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

from .networks import Architecture, param_count

CSV_COLUMNS = ("n", "k", "D", "D_1", "error_fro", "error_sq", "estB")
ENSEMBLES = ("identity", "gaussian")


@dataclass(frozen=True)
class CapacityQuery:
    n: int
    k: int
    D_1: int = 1

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.k < 2 or self.k % 2:
            raise ValueError("k must be even and >= 2")
        if self.D_1 < 1:
            raise ValueError("D_1 must be >= 1")


@dataclass(frozen=True)
class RankFitResult:
    relative_error_fro: float     # oracle, sqrt(dropped lambda^2 / sum lambda^2)
    relative_error_sq: float      # oracle, dropped lambda^2 / sum lambda^2
    oracle_error: float
    descent_error: float
    D: int
    D_1: int


@dataclass(frozen=True)
class AsympWidth:
    regime: str                   # "n<<k", "n>>k" or "n~k"
    small_n: float | None         # 2^(2n)
    large_n: float | None         # (n/k)^k

    @property
    def value(self) -> float:
        return self.small_n if self.regime == "n<<k" else self.large_n


# ---------------------------------------------------------------------------
# counting
# ---------------------------------------------------------------------------

def match_width(n: int, k: int) -> tuple[Fraction, int]:
    """Width at which a two-layer p = 2 network matches the degree-(k,k) count.

    binom(k+n, k)^2 / binom(k/2+n, k/2)^2 as an exact fraction, and its ceiling.
    """
    q = CapacityQuery(n, k)
    r = Fraction(math.comb(q.k + q.n, q.k) ** 2, math.comb(q.k // 2 + q.n, q.k // 2) ** 2)
    return r, math.ceil(r)


def asymp_width(n: int, k: int, boundary: float = 1.0) -> AsympWidth:
    """Asymptotic D_match: 2^(2n) for n << k, (n/k)^k for n >> k.

    The regime is n/k below or above ``boundary``; at n/k == boundary both
    branches are returned.
    """
    CapacityQuery(n, k)
    small, large = float(4 ** n), float((n / k) ** k)
    ratio = n / k
    if ratio < boundary:
        return AsympWidth("n<<k", small, None)
    if ratio > boundary:
        return AsympWidth("n>>k", None, large)
    return AsympWidth("n~k", small, large)


def estB_bound(n: int, k: int, D_1: int, B_base: float) -> float:
    """max(0, B_base (1 - (D_1 - 1)/(D_match - 1))), B_base supplied by the caller."""
    CapacityQuery(n, k, D_1)
    d_match, _ = match_width(n, k)
    if d_match == 1:
        raise ZeroDivisionError("D_match = 1: the interpolation is degenerate")
    return max(0.0, float(B_base * (1 - Fraction(D_1 - 1) / (d_match - 1))))


def holomorphic_depth_counts(num_vars: int, width: int, depths, input_degree: int = 1):
    """(degree k, parameter count) for fixed-width p = 2 holomorphic networks of each depth."""
    out = []
    for d in depths:
        arch = Architecture("holomorphic", num_vars, input_degree, (2,) * (d - 1), (width,) * (d - 1))
        out.append((input_degree * 2 ** (d - 1), param_count(arch)))
    return out


def tree_counts(n: int, depth: int) -> dict:
    """Parameter counts behind the tree-network argument on CP^n with p = 2.

    ``tree`` uses universal width 2^(2n) at every layer, ``middle_replaced``
    swaps the layer-d/2 subnetworks for general degree-sqrt(k) sections, and
    ``polynomial`` is the full degree-(k,k) count binom(k+n, n)^2.
    """
    k = 2 ** (depth - 1)
    w = 4 ** n
    widths = (w,) * (depth - 1)
    tree = param_count(Architecture("tree_bihomogeneous", n + 1, 1, (2,) * (depth - 1), widths))
    half = depth // 2
    kh = 2 ** max(half - 1, 0)
    # layers above d/2 unchanged (w^(d-l) units of fan-in w); every layer-d/2 unit
    # reads all bidegree-(kh, kh) monomials
    upper = w + sum(w ** (depth - l + 1) for l in range(half + 1, depth))
    middle = w ** (depth - half) * math.comb(kh + n, n) ** 2
    return dict(depth=depth, k=k, tree=tree, middle_replaced=upper + middle,
                polynomial=math.comb(k + n, n) ** 2)


# ---------------------------------------------------------------------------
# low-rank sum-of-squares fit
# ---------------------------------------------------------------------------

def _check_symmetric(f) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.ndim != 2 or f.shape[0] != f.shape[1]:
        raise ValueError("f must be a square matrix")
    if not np.allclose(f, f.T, atol=1e-12 * max(1.0, np.abs(f).max())):
        raise ValueError("f must be symmetric")
    return 0.5 * (f + f.T)


def truncation_oracle(f, D_1: int):
    """Best rank-D_1 symmetric approximation: keep the top-|lambda| eigenpairs.

    Returns (approximation, kept eigenvalues, squared relative error).
    """
    f = _check_symmetric(f)
    lam, V = np.linalg.eigh(f)
    order = np.argsort(-np.abs(lam), kind="stable")
    keep = order[:D_1]
    approx = (V[:, keep] * lam[keep]) @ V[:, keep].T
    total = float(np.sum(lam ** 2))
    dropped = float(np.sum(lam[order[D_1:]] ** 2))
    return approx, lam[keep], (dropped / total if total > 0 else 0.0)


def _sos_descent(f, signs, rng, restarts: int, max_iter: int) -> float:
    D = len(f)
    norm2 = float(np.sum(f ** 2))

    def fun(x):
        W = x.reshape(len(signs), D)
        R = f - W.T @ (signs[:, None] * W)
        return float(np.sum(R ** 2)), (-4.0 * (signs[:, None] * W) @ R).ravel()

    best = np.inf
    scale = np.sqrt(np.abs(f).max() / max(D, 1))
    for _ in range(restarts):
        x0 = scale * rng.standard_normal(len(signs) * D)
        res = minimize(fun, x0, jac=True, method="L-BFGS-B",
                       options=dict(maxiter=max_iter, ftol=1e-15, gtol=1e-12))
        best = min(best, res.fun)
    return math.sqrt(max(best, 0.0) / norm2) if norm2 > 0 else 0.0


def low_rank_fit(f, D_1: int, seed: int = 0, restarts: int = 3, max_iter: int = 5000) -> RankFitResult:
    """Fit f ~ sum_a +-(W_a . X)^2 with D_1 signed squares; compare with the oracle.

    Signs follow the top-|lambda| eigenvalues of f, allowing differences of squares.
    """
    f = _check_symmetric(f)
    D = len(f)
    if not 1 <= D_1 <= D:
        raise ValueError(f"need 1 <= D_1 <= {D}")
    _, kept, err_sq = truncation_oracle(f, D_1)
    signs = np.where(kept >= 0, 1.0, -1.0)
    descent = _sos_descent(f, signs, np.random.default_rng(seed), restarts, max_iter)
    return RankFitResult(math.sqrt(err_sq), err_sq, math.sqrt(err_sq), descent, D, D_1)


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

def random_symmetric(D: int, ensemble: str, rng) -> np.ndarray:
    if ensemble == "identity":
        return np.eye(D)
    if ensemble == "gaussian":
        Q, _ = np.linalg.qr(rng.standard_normal((D, D)))
        return (Q * rng.standard_normal(D)) @ Q.T
    raise ValueError(f"unknown ensemble {ensemble!r}")


@dataclass(frozen=True)
class SweepConfig:
    n: int = 2
    k: int = 4
    dim: int | None = None          # input dimension D; default binom(k/2 + n, n)
    widths: tuple[int, ...] | None = None
    ensemble: str = "identity"
    samples: int = 1                # matrices averaged per grid cell
    B_base: float = 1.0
    seed: int = 0
    descent: bool = False

    def input_dim(self) -> int:
        return self.dim or math.comb(self.k // 2 + self.n, self.n)


def capacity_sweep(config: SweepConfig) -> list[dict]:
    """Observed low-rank errors against D_1, next to the estB prediction."""
    CapacityQuery(config.n, config.k)
    if config.ensemble not in ENSEMBLES:
        raise ValueError(f"unknown ensemble {config.ensemble!r}")
    D = config.input_dim()
    widths = config.widths or tuple(range(1, D + 1))
    rng = np.random.default_rng(config.seed)
    mats = [random_symmetric(D, config.ensemble, rng) for _ in range(config.samples)]
    rows = []
    for D_1 in widths:
        fits = [truncation_oracle(f, D_1)[2] for f in mats]
        err_sq = float(np.mean(fits))
        row = dict(n=config.n, k=config.k, D=D, D_1=D_1,
                   error_fro=float(np.mean(np.sqrt(fits))), error_sq=err_sq,
                   estB=estB_bound(config.n, config.k, D_1, config.B_base))
        if config.descent:
            row["descent_fro"] = float(np.mean([low_rank_fit(f, D_1, config.seed).descent_error for f in mats]))
        rows.append(row)
    return rows


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    cols = list(CSV_COLUMNS) + [c for c in (rows[0] if rows else {}) if c not in CSV_COLUMNS]
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({c: (repr(float(v)) if isinstance(v, float) else v) for c, v in r.items()})
    return buf.getvalue()


def write_sweep(rows: list[dict], path: str | Path, config: SweepConfig | None = None) -> None:
    """CSV at ``path`` plus a JSON mirror next to it."""
    path = Path(path)
    path.write_text(rows_to_csv(rows))
    doc = dict(config=asdict(config) if config else None, rows=rows)
    path.with_suffix(".json").write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")

"""Acceptance checks, one test per criterion.

Each test prints a single ``[PASS]``/``[FAIL]`` line to the terminal (even
under output capture).  Run standalone with ``python3 tests/test_acceptance.py``.
"""
import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from kahlernet.balanced import identity_distance, rho_from_gram, fiber_factor, t_map_iterate, tyz_profile
from kahlernet.experiments import holomorphic_depth_counts, low_rank_fit, match_width, random_symmetric
from kahlernet.jets import metric_batch
from kahlernet.networks import (
    Architecture,
    KahlerNetwork,
    flatten,
    near_fs_init,
    nest_embed,
    param_count,
    potential_at_points,
    random_init,
    to_params,
)
from kahlernet.projective import eval_sections_batch, fermat, monomials
from kahlernet.sampling import projective_cubature, relative_residual, sample_fs, sample_hypersurface, sample_projective
from kahlernet.training import LossConfig, loss_of_flat, sigma_data, sigma_loss, sigma_stderr, train, weight_gradient

from conftest import FAMILY_ARCHS, family_net
from oracles import chart_points, fd_ddbar, fd_grad


def report(n, ok, detail, seconds, budget):
    ok = ok and seconds < budget
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail} ({seconds:.1f} s, budget {budget:g} s)"
    capman = _capture_manager()
    if capman is not None:
        with capman.global_and_fixture_disabled():
            print("\n" + line, flush=True)
    else:
        print(line, flush=True)
    return ok


_CONFIG = None


def _capture_manager():
    return None if _CONFIG is None else _CONFIG.pluginmanager.getplugin("capturemanager")


@pytest.fixture(autouse=True)
def _remember_config(request):
    global _CONFIG
    _CONFIG = request.config
    yield


# ---------------------------------------------------------------------------

def criterion_1():
    h = fermat()
    ss = sample_hypersurface(h, 100, seed=2024)
    worst_g, worst_w = 0.0, 0.0
    for name in sorted(FAMILY_ARCHS):
        net = family_net(name, 7)
        g = metric_batch(net, ss, check=False).g
        for i in range(len(ss)):
            a, b = int(ss.affine[i]), int(ss.dependent[i])
            z0 = ss.coords[i] / ss.coords[i, a]
            free = [j for j in range(5) if j not in (a, b)]
            g_fd = fd_ddbar(lambda W: potential_at_points(net, chart_points(h, z0, a, b, W)), z0[free])
            worst_g = max(worst_g, np.linalg.norm(g[i] - g_fd) / np.linalg.norm(g_fd))
        data = sigma_data(ss, net.arch.input_degree)
        grad = weight_gradient(net, data, "sigma", 1.0)
        x0 = flatten(to_params(net))
        idx = np.random.default_rng(1).choice(x0.size, min(10, x0.size), replace=False)
        fd = fd_grad(loss_of_flat(net, data, "sigma", 1.0), x0, step=1e-5, index=idx)
        worst_w = max(worst_w, np.max(np.abs(fd - grad[idx])) / np.max(np.abs(grad)))
    ok = worst_g < 1e-6 and worst_w < 1e-5
    return ok, f"ddbar rel err {worst_g:.1e} (< 1e-6), weight grad rel err {worst_w:.1e} (< 1e-5), 5 families x 100 points"


def criterion_2():
    h = fermat()
    a = sample_hypersurface(h, 10_000, seed=1)
    b = sample_hypersurface(h, 10_000, seed=2)
    big = sample_hypersurface(h, 40_000, seed=3)
    res = max(relative_residual(h, a.coords).max(), relative_residual(h, b.coords).max())

    def est(w):
        return w.mean(), w.std(ddof=1) / math.sqrt(len(w))

    (m1, e1), (m2, e2) = est(a.weight), est(b.weight)
    z = abs(m1 - m2) / math.hypot(e1, e2)
    ratio = e1 / est(big.weight)[1]
    ok = res < 1e-10 and z < 3 and 1.6 <= ratio <= 2.4
    return ok, f"max residual {res:.1e}, seed gap {z:.2f} sigma, stderr ratio N/4N {ratio:.2f}"


def criterion_3():
    worst, iters = 0.0, 0
    rng = np.random.default_rng(0)
    rules = {2: projective_cubature(2, 400, 250), 3: projective_cubature(3, 20, 16)}
    for nv, cub in rules.items():
        assert len(cub) >= 100_000
        for k in (1, 2, 3):
            S = len(monomials(nv, k))
            A = np.eye(S) + 0.5 * (rng.standard_normal((S, S)) + 1j * rng.standard_normal((S, S)))
            res = t_map_iterate(A @ A.conj().T, k, cub, max_iters=30, tol=1e-12)
            worst = max(worst, identity_distance(res.G))
            iters = max(iters, res.iterations)
    # round metric, multinomial basis: h sum |s_I|^2 = 1 with the exact (identity) Gram matrix
    z = sample_fs(np.random.default_rng(5), 3, 100_000)
    rho_err = 0.0
    for k in (1, 2, 3):
        s = eval_sections_batch(monomials(3, k), z)
        rho = rho_from_gram(np.eye(s.shape[1]), s, fiber_factor(np.eye(s.shape[1]), s))
        rho_err = max(rho_err, np.abs(rho - 1).max())
    # Monte Carlo diagnostic only: the empirical balanced point sits O(N^-1/2) from the identity
    mc = sample_projective(3, 100_000, seed=9)
    mc_dist = identity_distance(t_map_iterate(np.eye(10), 3, mc, max_iters=30, tol=1e-12).G)
    ok = worst < 1e-3 and rho_err < 1e-10
    return ok, (f"cubature (>= 1e5 nodes) max ||G/tr - I/N|| {worst:.1e} in <= {iters} iterations, "
                f"round rho err {rho_err:.1e}; MC 1e5 CP^2 k=3 distance {mc_dist:.1e} (diagnostic)")


def criterion_4():
    z = sample_fs(np.random.default_rng(4), 5, 1000)
    worst = 0.0
    for widths in ((6,), (6, 4)):
        net = random_init(Architecture("bihomogeneous", 5, 1, (2,) * len(widths), widths), 3)
        big = nest_embed(net)
        assert big.arch.depth == net.arch.depth + 1
        worst = max(worst, np.abs(potential_at_points(big, z) - 2 * potential_at_points(net, z)).max())
    return worst < 1e-12, f"max |K_nested - 2K| {worst:.1e} over depths 2->3 and 3->4"


def criterion_5():
    h = fermat()
    train_pts = sample_hypersurface(h, 5000, seed=31)
    held = sample_hypersurface(h, 5000, seed=32)
    fs = KahlerNetwork(Architecture("algebraic", 5, 1), (), np.eye(5))
    base, base_err = sigma_loss(fs, held), sigma_stderr(fs, held)
    net = near_fs_init(Architecture("bihomogeneous", 5, 1, (2,), (10,)), 0)
    cfg = LossConfig(learning_rate=0.3, momentum=0.9, max_steps=300, seed=0)
    _, rep = train(net, train_pts, cfg, heldout=held)
    ok = rep.final_sigma < base
    return ok, (f"held-out sigma {rep.final_sigma:.4f} vs FS baseline {base:.4f} +- {base_err:.4f} "
                f"(D_1 = 10, {len(rep.loss_trace) - 1} steps, 5000 points)")


def criterion_6():
    gap = -np.inf
    rng = np.random.default_rng(6)
    for trial in range(10):
        f = random_symmetric(10, "gaussian", rng)
        for D_1 in (1, 2, 4, 7):
            r = low_rank_fit(f, D_1, seed=trial)
            gap = max(gap, r.oracle_error - r.descent_error)
    exact = max(abs(low_rank_fit(np.eye(D), d).relative_error_sq - (1 - d / D))
                for D in (6, 10, 15) for d in range(1, D + 1))
    ok = gap <= 1e-8 and exact < 1e-15
    return ok, f"max (oracle - descent) {gap:.1e} (<= 1e-8), identity 1 - D_1/D error {exact:.1e}"


def criterion_7():
    small = float(match_width(1, 64)[0]) / 4
    large = float(match_width(64, 2)[0]) / (64 / 2) ** 2
    # fixed-width depth sweeps: every doubling of k adds one D x D layer
    slopes = set()
    for fam, per_layer in (("holomorphic", 2 * 36), ("bihomogeneous", 36)):
        counts = [param_count(Architecture(fam, 5, 1, (2,) * (d - 1), (6,) * (d - 1))) for d in range(2, 9)]
        slopes.add(tuple(np.diff(counts) // per_layer))
    hol = [c for _, c in holomorphic_depth_counts(5, 6, range(2, 9))]
    ok = abs(small - 1) < 0.1 and abs(large - 1) < 0.1 and slopes == {(1,) * 6} and len(set(np.diff(hol))) == 1
    return ok, f"D_match / asymptote: (1, 64) {small:.3f}, (64, 2) {large:.3f}; constant D^2 per doubling of k"


def criterion_8():
    errs, slope = tyz_profile(ks=(4, 8, 16, 32))
    ok = abs(slope + 1) <= 0.3 and np.all(np.diff(errs) < 0)
    return ok, f"max|rho - 1| {np.array2string(errs, precision=2)}, log-log slope {slope:.3f}"


BUDGETS = {1: 60, 2: 60, 3: 120, 4: 60, 5: 600, 6: 60, 7: 1, 8: 300}
CRITERIA = {n: globals()[f"criterion_{n}"] for n in BUDGETS}


def _run(n):
    t0 = time.perf_counter()
    ok, detail = CRITERIA[n]()
    return report(n, ok, detail, time.perf_counter() - t0, BUDGETS[n])


@pytest.mark.parametrize("n", sorted(CRITERIA))
def test_criterion(n):
    assert _run(n)


if __name__ == "__main__":
    results = [_run(n) for n in sorted(CRITERIA)]
    sys.exit(0 if all(results) else 1)

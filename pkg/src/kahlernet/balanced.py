"""Density of states, Hilbert-space Gram matrices, the T-map and the Donaldson functional.

Conventions.  An algebraic metric is a Hermitian positive G with potential
K_G = log sum_IJ G_IJ s_I conj(s_J), fiber metric h = exp(-K_G) on O(k).
The L^2 Gram matrix of the sections is

    H_IJ = R * sum_p mu_p h(p) s_I(p) conj(s_J(p)),   R = S / sum_p mu_p,

with S = h^0(O(k)), so that the density of states rho = h * s^T conj(H^-1) conj(s)
averages to one.  rho == 1 exactly when G is proportional to conj(H^-1), the
balanced condition, and the T-map is the iteration G <- conj(H(G)^-1).

Two measures are supported: ``"fixed"`` uses the sample masses themselves
(FS on projective space, Omega ^ conj(Omega) on a hypersurface) and gives
Donaldson's T_nu map; ``"metric"`` reweights by det(ddbar K_G) so that the
measure follows h.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import jax
import jax.numpy as jnp
import numpy as np
from scipy.optimize import minimize

from .jets import DomainError, metric_batch
from .networks import Architecture, KahlerNetwork, _chol_vec, gram_from_chol
from .projective import eval_sections_batch, monomials, section_count

logger = logging.getLogger(__name__)

MEASURES = ("fixed", "metric")


class RankWarning(UserWarning):
    """Fewer sample points than sections: the Gram matrix is singular."""


@dataclass(frozen=True)
class GramMatrix:
    """L^2 Gram matrix of the degree-k monomial sections."""

    G: np.ndarray
    k: int
    count: int
    stderr: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        G = np.asarray(self.G, dtype=complex)
        if np.abs(G - G.conj().T).max() > 1e-12 * max(1.0, np.abs(G).max()):
            raise ValueError("Gram matrix must be Hermitian")
        object.__setattr__(self, "G", G)

    @property
    def size(self) -> int:
        return len(self.G)


@dataclass
class TMapResult:
    G: np.ndarray
    iterations: int
    residual: float
    status: str
    residual_trace: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# building blocks
# ---------------------------------------------------------------------------

def _check_pd(G) -> np.ndarray:
    G = np.asarray(G, dtype=complex)
    if np.abs(G - G.conj().T).max() > 1e-10 * np.abs(G).max():
        raise DomainError("G must be Hermitian")
    if np.linalg.eigvalsh(0.5 * (G + G.conj().T))[0] <= 0:
        raise DomainError("G must be positive definite")
    return G


def fiber_factor(G, s: np.ndarray) -> np.ndarray:
    """h = 1 / sum_IJ G_IJ s_I conj(s_J) at each point."""
    return 1.0 / np.einsum("ij,pi,pj->p", G, s, s.conj()).real


def _measure(G, samples, k: int, measure: str) -> np.ndarray:
    if measure not in MEASURES:
        raise ValueError(f"unknown measure {measure!r}")
    mu = samples.mass
    if measure == "metric":
        net = KahlerNetwork(Architecture("algebraic", samples.num_vars, k), (), G)
        det = metric_batch(net, samples, n_const=1.0).det_g
        mu = samples.qweight * det / samples.fs_density
    return mu


def hilb_gram_from_sections(s: np.ndarray, h: np.ndarray, mu: np.ndarray, k: int = 0) -> GramMatrix:
    """Gram matrix sum mu h s s^dagger with the R normalization, plus entry stderr.

    The stderr treats the points as i.i.d. draws; it is meaningless for
    cubature rules.
    """
    P, S = s.shape
    if P < S:
        warnings.warn(f"{P} points for {S} sections: Gram matrix is rank deficient", RankWarning)
    w = mu / mu.sum()
    H = S * (s.T * (w * h)) @ s.conj()
    H = 0.5 * (H + H.conj().T)
    # ratio-estimator stderr: sum_p w_p^2 |S h_p s_i conj(s_j) - H_ij|^2, expanded
    a2 = np.abs(s) ** 2
    m2 = S * S * (a2.T * (w * h) ** 2) @ a2
    m1 = S * (s.T * (w ** 2 * h)) @ s.conj()
    var = m2 - 2 * (H.conj() * m1).real + np.abs(H) ** 2 * np.sum(w ** 2)
    return GramMatrix(H, k, P, np.sqrt(np.maximum(var, 0.0)))


def hilb_gram(G, samples, k: int, measure: str = "fixed") -> GramMatrix:
    """L^2 Gram matrix of the degree-k monomials for the metric h = 1/(s^dagger G s)."""
    G = _check_pd(G)
    s = eval_sections_batch(monomials(samples.num_vars, k), samples.coords)
    return hilb_gram_from_sections(s, fiber_factor(G, s), _measure(G, samples, k, measure), k)


def rho_from_gram(H: np.ndarray, s: np.ndarray, h: np.ndarray) -> np.ndarray:
    try:
        Hinv = np.linalg.inv(H)
    except np.linalg.LinAlgError as exc:
        raise DomainError("singular Gram matrix") from exc
    return h * np.einsum("ij,pi,pj->p", Hinv.conj(), s, s.conj()).real


def density_of_states(G, samples, k: int, points=None, measure: str = "fixed") -> np.ndarray:
    """rho_h at ``points`` (default: the samples), Gram matrix from ``samples``."""
    G = _check_pd(G)
    H = hilb_gram(G, samples, k, measure).G
    z = samples.coords if points is None else np.atleast_2d(points)
    s = eval_sections_batch(monomials(samples.num_vars, k), z)
    return rho_from_gram(H, s, fiber_factor(G, s))


def bergman_density(phi: np.ndarray, volume: np.ndarray, s: np.ndarray, k: int) -> np.ndarray:
    """rho for the fiber metric exp(-k phi) at the integration nodes themselves.

    ``phi`` is the potential at unit-norm points, ``volume`` the node masses of
    the Hilb measure and ``s`` the degree-k section values there.
    """
    h = np.exp(-k * (phi - phi.min()))      # the constant shift cancels in rho
    return rho_from_gram(hilb_gram_from_sections(s, h, volume, k).G, s, h)


def normalize_trace(G) -> np.ndarray:
    G = np.asarray(G)
    return G / np.trace(G).real


def identity_distance(G) -> float:
    """|| G / tr G - I / N ||_F."""
    N = len(G)
    return float(np.linalg.norm(normalize_trace(G) - np.eye(N) / N))


# ---------------------------------------------------------------------------
# T-map
# ---------------------------------------------------------------------------

def t_map_step(G, samples, k: int, measure: str = "fixed"):
    """One orthonormalize-and-replace step. Returns (G_new, residual of G)."""
    s = eval_sections_batch(monomials(samples.num_vars, k), samples.coords)
    h = fiber_factor(G, s)
    H = hilb_gram_from_sections(s, h, _measure(G, samples, k, measure), k).G
    rho = rho_from_gram(H, s, h)
    G_new = np.linalg.inv(H).conj()
    G_new = 0.5 * (G_new + G_new.conj().T)
    return normalize_trace(G_new), float(np.max(np.abs(rho - 1.0)))


def t_map_iterate(G0, k: int, samples, max_iters: int = 30, tol: float = 1e-10,
                  measure: str = "fixed") -> TMapResult:
    """Iterate the T-map until max|rho - 1| < tol.

    Non-convergence is reported through ``status`` rather than raised.
    """
    G = normalize_trace(_check_pd(G0))
    trace = []
    for it in range(max_iters + 1):
        try:
            with np.errstate(divide="ignore", invalid="ignore"):
                G_new, res = t_map_step(G, samples, k, measure)
            if not (np.isfinite(res) and np.all(np.isfinite(G_new))):
                raise DomainError("non-finite Gram matrix")
        except (DomainError, np.linalg.LinAlgError) as exc:
            logger.warning("T-map stopped: %s", exc)
            return TMapResult(G, it, float("nan"), "singular", trace)
        trace.append(res)
        if res < tol:
            return TMapResult(G, it, res, "converged", trace)
        if it == max_iters:
            break
        G = G_new
    return TMapResult(G, max_iters, trace[-1], "max_iters", trace)


# ---------------------------------------------------------------------------
# Donaldson functional
# ---------------------------------------------------------------------------

def _nu(samples, nu: str) -> np.ndarray:
    if nu == "cy":
        w = samples.mass
    elif nu == "fs":
        w = samples.qweight
    else:
        raise ValueError(f"unknown measure {nu!r}")
    return w / w.sum()


def _psi_of_chol(vec, s, w, S):
    G = gram_from_chol(vec, S)
    K = jnp.log(jnp.real(jnp.einsum("ij,pi,pj->p", G, s, jnp.conj(s))))
    return jnp.sum(w * K) - 2.0 * jnp.sum(jnp.log(jnp.abs(vec[:S]))) / S


_psi_value_and_grad = jax.jit(jax.value_and_grad(_psi_of_chol), static_argnums=3)


def donaldson_functional(G, samples, k: int, nu: str = "cy") -> float:
    """psi(G) = int nu log(s^dagger G s) - (1/S) log det G, nu normalized to mass one.

    ``nu = "cy"`` uses the Omega ^ conj(Omega) masses (FS masses on projective
    space), ``nu = "fs"`` the plain sampling measure.
    """
    G = _check_pd(G)
    s = eval_sections_batch(monomials(samples.num_vars, k), samples.coords)
    w = _nu(samples, nu)
    K = np.log(np.einsum("ij,pi,pj->p", G, s, s.conj()).real)
    return float(w @ K - np.linalg.slogdet(G)[1] / len(G))


def donaldson_gradient(G, samples, k: int, nu: str = "cy") -> np.ndarray:
    """d psi / d G_IJ as a Hermitian matrix: int nu h s_I conj(s_J) - conj(G^-1)/S."""
    G = _check_pd(G)
    s = eval_sections_batch(monomials(samples.num_vars, k), samples.coords)
    w = _nu(samples, nu)
    M = np.einsum("p,pi,pj->ij", w * fiber_factor(G, s), s, s.conj())
    return M - np.linalg.inv(G).conj() / len(G)


def minimize_donaldson(G0, samples, k: int, nu: str = "cy", tol: float = 1e-14,
                       max_iter: int = 2000) -> tuple[np.ndarray, float]:
    """L-BFGS on psi over Cholesky factors of G. Returns (G / tr G, psi)."""
    S = section_count(samples.num_vars, k)
    s = jnp.asarray(eval_sections_batch(monomials(samples.num_vars, k), samples.coords))
    w = jnp.asarray(_nu(samples, nu))

    def fun(x):
        v, g = _psi_value_and_grad(jnp.asarray(x), s, w, S)
        return float(v), np.asarray(g, dtype=float)

    res = minimize(fun, _chol_vec(normalize_trace(_check_pd(G0))), jac=True, method="L-BFGS-B",
                   options=dict(ftol=tol, gtol=1e-12, maxiter=max_iter))
    G = np.asarray(gram_from_chol(jnp.asarray(res.x), S))
    return normalize_trace(0.5 * (G + G.conj().T)), float(res.fun)


# ---------------------------------------------------------------------------
# leading-order Bergman kernel asymptotics on CP^1
# ---------------------------------------------------------------------------

def tyz_profile(ks=(4, 8, 16, 32), eps: float = 0.1, line_degree: int = 2,
                n_radial: int = 200) -> tuple[np.ndarray, float]:
    """max|rho_k - 1| for a fixed non-round metric on CP^1 and its log-log slope in k.

    The metric on L = O(line_degree) has potential
    line_degree * (log|z|^2 + eps * t (1 - t)) with t = |z_1|^2 / |z|^2, a
    degree-2 spherical harmonic perturbation; relative to Fubini-Study its
    area form is 1 + eps (1 - 6t + 6t^2).  Integrals use the exact FS
    cubature, which resolves every phase harmonic that occurs.
    """
    from .sampling import projective_cubature

    if not 0 <= eps < 2:
        raise ValueError("eps must lie in [0, 2) for a positive metric")
    ks = np.asarray(ks)
    cub = projective_cubature(2, n_radial, 2 * line_degree * int(ks.max()) + 2)
    t = np.abs(cub.coords[:, 1]) ** 2
    volume = cub.qweight * (1 + eps * (1 - 6 * t + 6 * t * t))
    phi = line_degree * eps * t * (1 - t)
    errs = []
    for k in ks:
        s = eval_sections_batch(monomials(2, line_degree * int(k)), cub.coords)
        errs.append(np.abs(bergman_density(phi, volume, s, int(k)) - 1).max())
    errs = np.array(errs)
    return errs, float(np.polyfit(np.log(ks), np.log(errs), 1)[0])


def write_gram(G, path, k: int | None = None) -> None:
    G = np.asarray(G, dtype=complex)
    lines = [f"GRAM {len(G)} {'-' if k is None else k}"]
    for row in G:
        lines.append(" ".join(f"{x.real:.17g} {x.imag:.17g}" for x in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_gram(path) -> tuple[np.ndarray, int | None]:
    rows = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip() and not ln.startswith("#")]
    if rows[0][0] != "GRAM" or len(rows[0]) != 3:
        raise ValueError(f"bad Gram header: {' '.join(rows[0])}")
    S = int(rows[0][1])
    k = None if rows[0][2] == "-" else int(rows[0][2])
    vals = np.array([[float(x) for x in r] for r in rows[1:]])
    if vals.shape != (S, 2 * S):
        raise ValueError(f"expected {S} rows of {2 * S} numbers")
    return vals[:, 0::2] + 1j * vals[:, 1::2], k

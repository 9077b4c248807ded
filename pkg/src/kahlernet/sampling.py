"""Points on hypersurfaces distributed by the pullback Fubini-Study measure.

Random lines through two FS-distributed points meet a degree-d hypersurface
in d points; the union of these intersection points is distributed by the
pullback of the FS measure.  Each point carries the chart used for local
computations, the FS volume density ``fs_density = det g_FS`` and the
holomorphic volume density ``omega_density = |df/dz_b|^-2`` (both in the
same chart), so ``weight = omega_density / fs_density`` converts FS averages
into averages against Omega ^ conj(Omega).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.special import roots_jacobi

from .jets import coordinate_jets, fs_metric, section_jets
from .projective import (
    Chart,
    HomPoint,
    Hypersurface,
    SingularPointError,
    chart_from_indices,
    choose_chart_batch,
    eval_poly_batch,
    grad_poly_batch,
    monomials,
    term_scale_batch,
)

logger = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-10


class DegenerateLineError(ValueError):
    """The hypersurface polynomial vanishes identically on the line."""


class RootPolishError(ArithmeticError):
    """A polished root failed the residual tolerance."""


def sample_fs(rng: np.random.Generator, num_vars: int, size: int | None = None):
    """FS-distributed point(s): normalized standard complex Gaussian vectors."""
    shape = (num_vars,) if size is None else (size, num_vars)
    z = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    z /= np.linalg.norm(z, axis=-1, keepdims=True)
    return HomPoint(z) if size is None else z


def _restriction_coeffs(h: Hypersurface, p: np.ndarray, q: np.ndarray) -> np.ndarray:
    # coefficients c_0..c_d of t -> f(p + t q), by DFT on the unit circle
    d = h.degree
    roots = np.exp(2j * np.pi * np.arange(d + 1) / (d + 1))
    L, n = p.shape
    pts = p[:, None, :] + roots[None, :, None] * q[:, None, :]
    vals = eval_poly_batch(h, pts.reshape(-1, n)).reshape(L, d + 1)
    return np.fft.fft(vals, axis=1) / (d + 1)


def _polish(h, a, b, t, steps=3):
    # Newton on t -> f(a + t b); keeps the iterate with smallest residual
    best_t = t.copy()
    best_r = np.abs(eval_poly_batch(h, a + t[:, None] * b))
    for _ in range(steps):
        x = a + t[:, None] * b
        fv = eval_poly_batch(h, x)
        df = np.einsum("pi,pi->p", grad_poly_batch(h, x), b)
        ok = np.abs(df) > 0
        t = np.where(ok, t - fv / np.where(ok, df, 1.0), t)
        r = np.abs(eval_poly_batch(h, a + t[:, None] * b))
        better = r < best_r
        best_t = np.where(better, t, best_t)
        best_r = np.where(better, r, best_r)
    return best_t


def _intersect_batch(h: Hypersurface, p: np.ndarray, q: np.ndarray):
    """Intersections of L lines with h. Returns (points (L, d, n), ok (L,))."""
    d = h.degree
    L, n = p.shape
    c = _restriction_coeffs(h, p, q)
    scale = np.abs(c).max(axis=1)
    ok = scale > 1e-14
    lead = c[:, d]
    ok &= np.abs(lead) > 1e-13 * np.where(ok, scale, 1.0)
    lead = np.where(ok, lead, 1.0)
    comp = np.zeros((L, d, d), dtype=complex)
    comp[:, 0, :] = -c[:, ::-1][:, 1:] / lead[:, None]
    if d > 1:
        comp[:, np.arange(1, d), np.arange(d - 1)] = 1.0
    t = np.linalg.eigvals(comp)                       # (L, d)
    big = np.abs(t) > 1.0
    # |t| > 1: parametrize as q + s p with s = 1/t
    a = np.where(big[..., None], q[:, None, :], p[:, None, :]).reshape(-1, n)
    b = np.where(big[..., None], p[:, None, :], q[:, None, :]).reshape(-1, n)
    tt = np.where(big, 1.0 / np.where(big, t, 1.0), t).reshape(-1)
    tt = _polish(h, a, b, tt)
    x = a + tt[:, None] * b
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    return x.reshape(L, d, n), ok


def relative_residual(h: Hypersurface, z: np.ndarray) -> np.ndarray:
    z = np.atleast_2d(z)
    scale = term_scale_batch(h, z)
    # every term vanishing individually means an exact root
    return np.abs(eval_poly_batch(h, z)) / np.where(scale > 0, scale, 1.0)


def line_intersect(h: Hypersurface, p: HomPoint, q: HomPoint) -> list[HomPoint]:
    """The d intersection points of the line through p and q with h.

    A vanishing leading coefficient contributes the point q (t = infinity).
    """
    P = np.asarray(p.coords, dtype=complex)[None, :]
    Q = np.asarray(q.coords, dtype=complex)[None, :]
    pn, qn = P[0] / np.linalg.norm(P[0]), Q[0] / np.linalg.norm(Q[0])
    if abs(abs(np.vdot(pn, qn)) - 1) < 1e-14:
        raise DegenerateLineError("p and q are the same projective point")
    c = _restriction_coeffs(h, P, Q)[0]
    scale = np.abs(c).max()
    if scale < 1e-14 * max(1.0, np.abs(h.coeffs).max()):
        raise DegenerateLineError("polynomial vanishes identically on the line")
    nz = np.nonzero(np.abs(c) > 1e-13 * scale)[0]
    deg = nz.max()
    out = []
    if deg > 0:
        poly = c[: deg + 1]
        t = np.roots(poly[::-1])
        big = np.abs(t) > 1.0
        a = np.where(big[:, None], Q, P)
        b = np.where(big[:, None], P, Q)
        tt = np.where(big, 1.0 / np.where(big, t, 1.0), t)
        tt = _polish(h, a, b, tt)
        x = a + tt[:, None] * b
        out.extend(x / np.linalg.norm(x, axis=1, keepdims=True))
    out.extend([Q[0] / np.linalg.norm(Q[0])] * (h.degree - deg))
    out = np.array(out)
    res = relative_residual(h, out)
    if np.any(res > RESIDUAL_TOL):
        raise RootPolishError(f"root residual {res.max():.2e} above {RESIDUAL_TOL:g}")
    return [HomPoint(x) for x in out]


@dataclass(frozen=True)
class SamplePoint:
    point: HomPoint
    chart: Chart
    weight: float
    fs_density: float
    omega_density: float
    hypersurface: Hypersurface | None = None


@dataclass(frozen=True, eq=False)
class SampleSet:
    """Points with charts and densities.

    ``qweight`` is the mass of each point under the sampling measure (all
    ones for Monte Carlo draws, cubature weights for quadrature rules).
    Integrals against the FS measure use ``qweight``; against the
    Omega ^ conj(Omega) measure they use ``qweight * weight``.
    """

    coords: np.ndarray
    affine: np.ndarray
    dependent: np.ndarray
    fs_density: np.ndarray
    omega_density: np.ndarray
    hypersurface: Hypersurface | None
    seed: int | None = None
    qweight: np.ndarray | None = None
    skipped: int = 0
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.qweight is None:
            object.__setattr__(self, "qweight", np.ones(len(self.coords)))

    def __len__(self) -> int:
        return len(self.coords)

    @property
    def count(self) -> int:
        return len(self.coords)

    @property
    def num_vars(self) -> int:
        return self.coords.shape[1]

    @property
    def dim(self) -> int:
        return self.num_vars - (1 if self.hypersurface is None else 2)

    @property
    def weight(self) -> np.ndarray:
        return self.omega_density / self.fs_density

    @property
    def mass(self) -> np.ndarray:
        """Per-point mass for the Omega ^ conj(Omega) measure."""
        return self.qweight * self.weight

    @cached_property
    def chart_coords(self):
        return coordinate_jets(self.hypersurface, self.coords, self.affine, self.dependent)

    def section_jets(self, k: int):
        if k not in self._cache:
            zc, dz = self.chart_coords
            self._cache[k] = section_jets(monomials(self.num_vars, k), zc, dz)
        return self._cache[k]

    def chart(self, i: int) -> Chart:
        b = int(self.dependent[i])
        return chart_from_indices(self.num_vars, int(self.affine[i]), None if b < 0 else b)

    @property
    def points(self) -> list[SamplePoint]:
        return [self[i] for i in range(len(self))]

    def __getitem__(self, i: int) -> SamplePoint:
        return SamplePoint(HomPoint(self.coords[i]), self.chart(i), float(self.weight[i]),
                           float(self.fs_density[i]), float(self.omega_density[i]), self.hypersurface)

    def subset(self, idx) -> "SampleSet":
        idx = np.asarray(idx)
        return SampleSet(self.coords[idx], self.affine[idx], self.dependent[idx],
                         self.fs_density[idx], self.omega_density[idx], self.hypersurface,
                         self.seed, self.qweight[idx])

    def with_charts(self, affine, dependent) -> "SampleSet":
        """Same points, recomputed in other charts."""
        return build_sample_set(self.hypersurface, self.coords, seed=self.seed,
                                qweight=self.qweight, affine=affine, dependent=dependent)

    @classmethod
    def from_points(cls, pts: list[SamplePoint], hypersurface=None) -> "SampleSet":
        coords = np.array([p.point.coords for p in pts])
        a = np.array([p.chart.affine_index for p in pts])
        b = np.array([-1 if p.chart.dependent_index is None else p.chart.dependent_index for p in pts])
        return build_sample_set(hypersurface, coords, affine=a, dependent=b)


def holomorphic_volume_density_batch(h: Hypersurface, zc: np.ndarray, dependent: np.ndarray) -> np.ndarray:
    """|df/dz_b|^-2 at chart-rescaled coordinates (z_affine = 1)."""
    g = grad_poly_batch(h, zc)[np.arange(len(zc)), dependent]
    if np.any(np.abs(g) < 1e-12):
        raise SingularPointError("dependent-coordinate derivative vanishes")
    return 1.0 / np.abs(g) ** 2


def holomorphic_volume_density(h: Hypersurface, p: HomPoint, chart: Chart) -> float:
    z = np.asarray(p.coords, dtype=complex)
    zc = z / z[chart.affine_index]
    return float(holomorphic_volume_density_batch(h, zc[None, :], np.array([chart.dependent_index]))[0])


def build_sample_set(h: Hypersurface | None, coords: np.ndarray, seed=None, qweight=None,
                     affine=None, dependent=None, skipped: int = 0) -> SampleSet:
    coords = np.atleast_2d(np.asarray(coords, dtype=complex))
    coords = coords / np.linalg.norm(coords, axis=1, keepdims=True)
    if affine is None:
        affine, dependent = choose_chart_batch(h, coords)
    affine = np.asarray(affine, dtype=int)
    dependent = np.asarray(dependent, dtype=int)
    zc, dz = coordinate_jets(h, coords, affine, dependent)
    fs = np.linalg.det(fs_metric(zc, dz)).real
    if h is None:
        omega = fs.copy()
    else:
        omega = holomorphic_volume_density_batch(h, zc, dependent)
    return SampleSet(coords, affine, dependent, fs, omega, h, seed, qweight, skipped)


def sample_hypersurface(h: Hypersurface, count: int, seed: int) -> SampleSet:
    """``count`` points on h from random-line intersections, deterministic in ``seed``."""
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    d = h.degree
    chunks, have, skipped = [], 0, 0
    while have < count:
        L = math.ceil((count - have) / d)
        p = sample_fs(rng, h.num_vars, L)
        q = sample_fs(rng, h.num_vars, L)
        x, ok = _intersect_batch(h, p, q)
        x = x[ok].reshape(-1, h.num_vars)
        good = relative_residual(h, x) < RESIDUAL_TOL
        gnorm = np.linalg.norm(grad_poly_batch(h, x), axis=1)
        good &= gnorm > 1e-10
        skipped += int((~ok).sum()) * d + int((~good).sum())
        chunks.append(x[good])
        have += int(good.sum())
    coords = np.concatenate(chunks)[:count]
    if skipped:
        logger.info("skipped %d points (degenerate lines or residual failures)", skipped)
    return build_sample_set(h, coords, seed=seed, skipped=skipped)


def sample_projective(num_vars: int, count: int, seed: int) -> SampleSet:
    """FS-distributed points on CP^{num_vars-1} itself (no hypersurface)."""
    rng = np.random.default_rng(seed)
    return build_sample_set(None, sample_fs(rng, num_vars, count), seed=seed)


def projective_cubature(num_vars: int, n_radial: int, n_phase: int) -> SampleSet:
    """Product cubature for the FS measure on CP^{num_vars-1}.

    Uses |z_i|^2 = t_i, uniform on the simplex (conical Gauss-Jacobi rule with
    ``n_radial`` nodes per axis), times ``n_phase`` equally spaced phases per
    relative phase.  Exact for bihomogeneous integrands z^e conj(z)^e' / |z|^{2k}
    with k <= min(2 n_radial - 1, n_phase - 1).
    """
    r = num_vars - 1
    us, ws = [], []
    for j in range(r):
        x, w = roots_jacobi(n_radial, r - 1 - j, 0)
        us.append((x + 1) / 2)
        ws.append(w)
    U = np.stack(np.meshgrid(*us, indexing="ij"), -1).reshape(-1, r)
    W = np.prod(np.stack(np.meshgrid(*ws, indexing="ij"), -1).reshape(-1, r), axis=1)
    t = np.zeros((len(U), num_vars))
    rem = np.ones(len(U))
    for j in range(r):
        t[:, j + 1] = rem * U[:, j]
        rem = rem * (1 - U[:, j])
    t[:, 0] = rem
    th = 2 * np.pi * np.arange(n_phase) / n_phase
    TH = np.stack(np.meshgrid(*([th] * r), indexing="ij"), -1).reshape(-1, r)
    phase = np.exp(1j * np.concatenate([np.zeros((len(TH), 1)), TH], axis=1))
    z = (np.sqrt(t)[:, None, :] * phase[None, :, :]).reshape(-1, num_vars)
    qw = np.repeat(W, len(TH))
    return build_sample_set(None, z, qweight=qw / qw.sum())


def write_samples(ss: SampleSet, path: str | Path) -> None:
    h = "none" if ss.hypersurface is None else ss.hypersurface.digest()
    lines = [f"SAMPLES {ss.seed if ss.seed is not None else -1} {len(ss)} {ss.num_vars} {h}"]
    for i in range(len(ss)):
        z = ss.coords[i]
        vals = [repr(float(v)) for pair in zip(z.real, z.imag) for v in pair]
        vals += [str(int(ss.affine[i])), str(int(ss.dependent[i]))]
        vals += [repr(float(x)) for x in (ss.weight[i], ss.fs_density[i], ss.omega_density[i], ss.qweight[i])]
        lines.append(" ".join(vals))
    Path(path).write_text("\n".join(lines) + "\n")


def read_samples(path: str | Path, hypersurface: Hypersurface | None = None) -> SampleSet:
    rows = Path(path).read_text().splitlines()
    head = rows[0].split()
    if head[0] != "SAMPLES":
        raise ValueError("not a sample file")
    seed, count, n, digest = int(head[1]), int(head[2]), int(head[3]), head[4]
    if hypersurface is not None and digest != hypersurface.digest():
        raise ValueError("sample file was generated for a different hypersurface")
    if hypersurface is None and digest != "none":
        raise ValueError("sample file needs its hypersurface")
    data = np.array([[float(x) for x in r.split()] for r in rows[1:count + 1]])
    coords = data[:, 0:2 * n:2] + 1j * data[:, 1:2 * n:2]
    a = data[:, 2 * n].astype(int)
    b = data[:, 2 * n + 1].astype(int)
    fs, om, qw = data[:, 2 * n + 3], data[:, 2 * n + 4], data[:, 2 * n + 5]
    return SampleSet(coords, a, b, fs, om, hypersurface, None if seed < 0 else seed, qw)

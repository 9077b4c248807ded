"""Second-order mixed jets: value, d/dw, d/dwbar and d^2/dw dwbar.

Jets are stored with a leading batch axis (points), then any number of
"unit" axes, then one (d, dbar) or two (ddbar) derivative axes of size m,
the complex dimension of the chart.  All arithmetic is written with
``jax.numpy`` so that reverse-mode differentiation with respect to network
weights can run straight through it.

Holomorphic quantities (chart coordinates, sections, holomorphic network
layers) have dbar = 0 and ddbar = 0.  In particular the dependent chart
coordinate z_b(w), defined implicitly by f = 0, is holomorphic, so its mixed
second derivative vanishes and only its first derivative enters.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import jax
import jax.numpy as jnp
import numpy as np

from .projective import Hypersurface, MonomialBasis, _powers, grad_poly_batch


class DomainError(ValueError):
    """Raised when log or a potential is evaluated outside its domain."""


class Jet(NamedTuple):
    v: jnp.ndarray
    d: jnp.ndarray
    db: jnp.ndarray
    dd: jnp.ndarray

    @property
    def m(self) -> int:
        return self.d.shape[-1]

    @property
    def shape(self):
        return self.v.shape


def constant(v, m: int) -> Jet:
    v = jnp.asarray(v)
    z = jnp.zeros(v.shape + (m,), dtype=v.dtype)
    return Jet(v, z, z, jnp.zeros(v.shape + (m, m), dtype=v.dtype))


def holomorphic(v, d) -> Jet:
    v, d = jnp.asarray(v), jnp.asarray(d)
    z = jnp.zeros_like(d)
    return Jet(v, d, z, jnp.zeros(d.shape + (d.shape[-1],), dtype=d.dtype))


def _e1(x):
    return x[..., None]


def _e2(x):
    return x[..., None, None]


def _outer(a, b):
    return a[..., :, None] * b[..., None, :]


def add(a: Jet, b: Jet) -> Jet:
    return Jet(a.v + b.v, a.d + b.d, a.db + b.db, a.dd + b.dd)


def sub(a: Jet, b: Jet) -> Jet:
    return Jet(a.v - b.v, a.d - b.d, a.db - b.db, a.dd - b.dd)


def scalar_mul(c, a: Jet) -> Jet:
    c = jnp.asarray(c)
    return Jet(c * a.v, _e1(c) * a.d, _e1(c) * a.db, _e2(c) * a.dd)


def add_const(a: Jet, c) -> Jet:
    return Jet(a.v + c, a.d, a.db, a.dd)


def mul(a: Jet, b: Jet) -> Jet:
    """Elementwise product with broadcasting over the value axes."""
    v = a.v * b.v
    d = a.d * _e1(b.v) + _e1(a.v) * b.d
    db = a.db * _e1(b.v) + _e1(a.v) * b.db
    dd = (a.dd * _e2(b.v) + _e2(a.v) * b.dd
          + _outer(a.d, b.db) + _outer(b.d, a.db))
    return Jet(v, d, db, dd)


def conj(a: Jet) -> Jet:
    return Jet(jnp.conj(a.v), jnp.conj(a.db), jnp.conj(a.d), jnp.conj(jnp.swapaxes(a.dd, -1, -2)))


def conj_pair_product(u: Jet, v: Jet) -> Jet:
    """u * conj(v)."""
    return mul(u, conj(v))


def _compose(a: Jet, f0, f1, f2) -> Jet:
    # jet of phi(a) given phi, phi', phi'' evaluated at a.v
    d = _e1(f1) * a.d
    db = _e1(f1) * a.db
    dd = _e2(f1) * a.dd + _e2(f2) * _outer(a.d, a.db)
    return Jet(f0, d, db, dd)


def power(a: Jet, p: int) -> Jet:
    if int(p) != p or p < 1:
        raise ValueError(f"power needs an integer p >= 1, got {p}")
    p = int(p)
    if p == 1:
        return a
    v = a.v
    vp2 = v ** (p - 2)
    vp1 = vp2 * v
    return _compose(a, vp1 * v, p * vp1, p * (p - 1) * vp2)


def log(a: Jet) -> Jet:
    """Logarithm; the caller guarantees a positive (or nonzero complex) value.

    Inside traced code the domain cannot be checked; use ``check_positive``
    on concrete values.
    """
    inv = 1.0 / a.v
    return _compose(a, jnp.log(a.v), inv, -inv * inv)


def exp(a: Jet) -> Jet:
    e = jnp.exp(a.v)
    return _compose(a, e, e, e)


def check_positive(x, what: str = "value") -> None:
    x = np.asarray(x)
    if np.iscomplexobj(x):
        x = x.real
    if not np.all(x > 0):
        raise DomainError(f"{what} must be positive, min = {np.min(x):.3e}")


def _split(spec: str):
    ins, out = spec.replace(" ", "").split("->")
    return ins.split(","), out


def contract(spec: str, a: Jet, b: Jet) -> Jet:
    """Bilinear einsum contraction of two jets, e.g. ``"pij,pjk->pik"``.

    Derivative axes are appended automatically (labels X, Y).
    """
    (ia, ib), o = _split(spec)
    es = jnp.einsum
    v = es(f"{ia},{ib}->{o}", a.v, b.v)
    d = es(f"{ia}X,{ib}->{o}X", a.d, b.v) + es(f"{ia},{ib}X->{o}X", a.v, b.d)
    db = es(f"{ia}X,{ib}->{o}X", a.db, b.v) + es(f"{ia},{ib}X->{o}X", a.v, b.db)
    dd = (es(f"{ia}XY,{ib}->{o}XY", a.dd, b.v) + es(f"{ia},{ib}XY->{o}XY", a.v, b.dd)
          + es(f"{ia}X,{ib}Y->{o}XY", a.d, b.db) + es(f"{ia}Y,{ib}X->{o}XY", a.db, b.d))
    return Jet(v, d, db, dd)


def linear(spec: str, w, a: Jet) -> Jet:
    """Contract a constant (weight) tensor ``w`` with a jet, e.g. ``"ij,pj->pi"``."""
    (iw, ia), o = _split(spec)
    es = jnp.einsum
    w = jnp.asarray(w)
    if not jnp.iscomplexobj(w) and jnp.iscomplexobj(a.d):
        # explicit embedding keeps the weight cotangent real without a lossy cast
        w = jax.lax.complex(w, jnp.zeros_like(w))
    return Jet(es(f"{iw},{ia}->{o}", w, a.v),
               es(f"{iw},{ia}X->{o}X", w, a.d),
               es(f"{iw},{ia}X->{o}X", w, a.db),
               es(f"{iw},{ia}XY->{o}XY", w, a.dd))


def real(a: Jet) -> Jet:
    """Real part of a real-valued scalar jet (drops round-off imaginary parts).

    For a real function dbar = conj(d) and ddbar is Hermitian; both are kept
    as computed.
    """
    return Jet(jnp.real(a.v), a.d, a.db, a.dd)


# ---------------------------------------------------------------------------
# chart coordinates and section jets (pure data, numpy)
# ---------------------------------------------------------------------------

def free_index_array(num_vars: int, affine: np.ndarray, dependent: np.ndarray) -> np.ndarray:
    P = len(affine)
    mask = np.ones((P, num_vars), dtype=bool)
    mask[np.arange(P), affine] = False
    has_dep = dependent >= 0
    mask[np.arange(P)[has_dep], dependent[has_dep]] = False
    m = int(mask[0].sum())
    return np.nonzero(mask)[1].reshape(P, m)


def coordinate_jets(h: Hypersurface | None, z: np.ndarray, affine: np.ndarray,
                    dependent: np.ndarray):
    """Chart-rescaled coordinates and their holomorphic derivatives.

    Returns (zc, dz) with zc of shape (P, n) and zc[affine] = 1, and dz of
    shape (P, n, m) holding dz_i/dw_c.  For a hypersurface the dependent
    coordinate obeys dz_b/dw_c = -(df/dz_c)/(df/dz_b).
    """
    z = np.atleast_2d(np.asarray(z, dtype=complex))
    P, n = z.shape
    affine = np.asarray(affine)
    dependent = np.asarray(dependent)
    rows = np.arange(P)
    zc = z / z[rows, affine][:, None]
    free = free_index_array(n, affine, dependent)
    m = free.shape[1]
    dz = np.zeros((P, n, m), dtype=complex)
    for c in range(m):
        dz[rows, free[:, c], c] = 1.0
    if h is not None:
        g = grad_poly_batch(h, zc)
        gb = g[rows, dependent]
        dz[rows, dependent, :] = -np.take_along_axis(g, free, axis=1) / gb[:, None]
    return zc, dz


def section_jets(basis: MonomialBasis, zc: np.ndarray, dz: np.ndarray):
    """Values (P, S) and holomorphic derivatives (P, S, m) of the normalized monomials."""
    P, n = zc.shape
    k = basis.degree
    pw = _powers(zc, k)
    E = basis.exponents
    s = np.ones((P, len(basis)), dtype=complex)
    for i in range(n):
        s *= pw[:, i, E[:, i]]
    ds = np.zeros((P, len(basis), dz.shape[-1]), dtype=complex)
    for i in range(n):
        # d s / d z_i
        t = np.ones((P, len(basis)), dtype=complex) * E[:, i]
        for j in range(n):
            t *= pw[:, j, np.maximum(E[:, j] - (j == i), 0)]
        ds += t[:, :, None] * dz[:, i, None, :]
    return s * basis.norms, ds * basis.norms[None, :, None]


def fs_metric(zc: np.ndarray, dz: np.ndarray) -> np.ndarray:
    """Pullback of the Fubini-Study form ddbar log|z|^2 in chart coordinates."""
    q = np.einsum("pi,pi->p", zc, zc.conj()).real
    dq = np.einsum("pia,pi->pa", dz, zc.conj())
    ddq = np.einsum("pia,pib->pab", dz, dz.conj())
    return ddq / q[:, None, None] - dq[:, :, None] * dq.conj()[:, None, :] / (q ** 2)[:, None, None]


# ---------------------------------------------------------------------------
# metric of a network potential at sample points
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MetricAtPoint:
    g: np.ndarray
    det_g: float
    eta: float
    point: object = None


@dataclass(frozen=True)
class MetricBatch:
    g: np.ndarray       # (P, m, m)
    det_g: np.ndarray   # (P,)
    eta: np.ndarray     # (P,)
    n_const: float


def potential_jet_at(net, samples):
    from .networks import compiled, to_params

    s, ds = samples.section_jets(net.arch.input_degree)
    return compiled(net.arch)(to_params(net), s, ds)


def _det_hermitian(g):
    return jnp.real(jnp.linalg.det(g))


def metric_batch(net, samples, n_const: float | None = None, check: bool = True) -> MetricBatch:
    """Metric, determinant and Monge-Ampere ratio at every sample point."""
    K = potential_jet_at(net, samples)
    g = np.asarray(K.dd)
    det = np.asarray(_det_hermitian(K.dd))
    if check:
        if not np.all(np.isfinite(det)):
            raise DomainError("non-finite metric: potential nonpositive at some point")
        ev = np.linalg.eigvalsh(0.5 * (g + np.conj(np.swapaxes(g, -1, -2))))
        if np.any(ev[:, 0] <= 0):
            raise DomainError(f"metric not positive definite at {int((ev[:, 0] <= 0).sum())} point(s)")
    if n_const is None:
        n_const = calibrate_from_det(det, samples)
    eta = det / (n_const * samples.omega_density)
    return MetricBatch(g, det, eta, float(n_const))


def calibrate_from_det(det, samples) -> float:
    if len(samples) == 0:
        raise ValueError("empty sample set")
    q = samples.qweight
    return float(np.sum(q * det / samples.fs_density) / np.sum(q * samples.omega_density / samples.fs_density))


def calibrate_normalization(net, samples) -> float:
    """Ratio of total masses sum(det g / fs) / sum(omega / fs)."""
    if len(samples) == 0:
        raise ValueError("empty sample set")
    return metric_batch(net, samples, check=False).n_const


def kahler_metric(net, sp, n_const: float = 1.0) -> MetricAtPoint:
    """Metric at a single SamplePoint."""
    from .sampling import SampleSet

    one = SampleSet.from_points([sp], hypersurface=sp.hypersurface)
    mb = metric_batch(net, one, n_const=n_const)
    return MetricAtPoint(mb.g[0], float(mb.det_g[0]), float(mb.eta[0]), sp)

"""Homogeneous coordinates, monomial section bases, hypersurfaces and affine charts."""
from __future__ import annotations

import hashlib
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class SingularPointError(ValueError):
    """Raised when the hypersurface gradient vanishes at a point."""


@dataclass(frozen=True)
class HomPoint:
    """A point of projective space given by homogeneous coordinates."""

    coords: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=complex).ravel()
        if c.size < 2:
            raise ValueError("need at least two homogeneous coordinates")
        if not np.any(np.abs(c) > 0):
            raise ValueError("all homogeneous coordinates vanish")
        object.__setattr__(self, "coords", c)

    @property
    def num_vars(self) -> int:
        return self.coords.size

    def normalize(self) -> "HomPoint":
        return HomPoint(self.coords / np.linalg.norm(self.coords))


def _graded_lex(num_vars: int, k: int) -> np.ndarray:
    # lexicographically descending: (k,0,..,0) first
    out = []
    for combo in itertools.combinations_with_replacement(range(num_vars), k):
        e = [0] * num_vars
        for i in combo:
            e[i] += 1
        out.append(tuple(e))
    out = sorted(set(out), reverse=True)
    return np.array(out, dtype=int).reshape(len(out), num_vars)


@dataclass(frozen=True)
class MonomialBasis:
    """Monomial basis of H^0(O(k)) on CP^{num_vars-1} with multinomial norms.

    The norms sqrt(k!/prod(e_i!)) make sum_I |s_I(z)|^2 = |z|^{2k}.
    """

    num_vars: int
    degree: int
    exponents: np.ndarray = field(repr=False)
    norms: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return len(self.exponents)


def monomials(num_vars: int, k: int) -> MonomialBasis:
    if num_vars < 2 or k < 0:
        raise ValueError(f"invalid basis dimensions num_vars={num_vars}, k={k}")
    exps = _graded_lex(num_vars, k)
    norms = np.array(
        [math.sqrt(math.factorial(k) / math.prod(math.factorial(int(x)) for x in e)) for e in exps]
    )
    return MonomialBasis(num_vars, k, exps, norms)


def section_count(num_vars: int, k: int) -> int:
    return math.comb(num_vars - 1 + k, k)


def _powers(z: np.ndarray, kmax: int) -> np.ndarray:
    # z: (P, n) -> (P, n, kmax+1) table of z_i**j
    pw = np.ones(z.shape + (kmax + 1,), dtype=complex)
    for j in range(1, kmax + 1):
        pw[..., j] = pw[..., j - 1] * z
    return pw


def eval_sections_batch(basis: MonomialBasis, z: np.ndarray) -> np.ndarray:
    """Section values for an array of points, shape (P, num_vars) -> (P, S)."""
    z = np.atleast_2d(np.asarray(z, dtype=complex))
    if z.shape[-1] != basis.num_vars:
        raise ValueError("dimension mismatch between basis and points")
    pw = _powers(z, basis.degree)
    n = basis.num_vars
    vals = np.ones((z.shape[0], len(basis)), dtype=complex)
    for i in range(n):
        vals *= pw[:, i, basis.exponents[:, i]]
    return vals * basis.norms


def eval_sections(basis: MonomialBasis, p: HomPoint | np.ndarray) -> np.ndarray:
    coords = p.coords if isinstance(p, HomPoint) else np.asarray(p, dtype=complex)
    return eval_sections_batch(basis, coords[None, :])[0]


@dataclass(frozen=True)
class Hypersurface:
    """Zero locus of a homogeneous polynomial sum_T c_T z^{e_T}."""

    num_vars: int
    degree: int
    exponents: np.ndarray = field(repr=False)
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        e = np.asarray(self.exponents, dtype=int).reshape(-1, self.num_vars)
        c = np.asarray(self.coeffs, dtype=complex).ravel()
        if len(e) != len(c):
            raise ValueError("exponent and coefficient counts differ")
        if np.any(e.sum(axis=1) != self.degree) or np.any(e < 0):
            raise ValueError("every exponent vector must sum to the degree")
        object.__setattr__(self, "exponents", e)
        object.__setattr__(self, "coeffs", c)

    @property
    def dim(self) -> int:
        """Complex dimension of the hypersurface."""
        return self.num_vars - 2

    def scaled(self, lam: complex) -> "Hypersurface":
        return Hypersurface(self.num_vars, self.degree, self.exponents, lam * self.coeffs)

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.exponents).tobytes())
        h.update(np.ascontiguousarray(self.coeffs).tobytes())
        return h.hexdigest()[:16]


def fermat(num_vars: int = 5, degree: int | None = None) -> Hypersurface:
    """The Fermat hypersurface sum z_i^d; d defaults to num_vars (Calabi-Yau)."""
    d = num_vars if degree is None else degree
    return Hypersurface(num_vars, d, d * np.eye(num_vars, dtype=int), np.ones(num_vars))


def dwork_quintic(psi: complex) -> Hypersurface:
    """sum z_i^5 - 5 psi prod z_i."""
    exps = np.vstack([5 * np.eye(5, dtype=int), np.ones((1, 5), dtype=int)])
    return Hypersurface(5, 5, exps, np.r_[np.ones(5), -5 * psi])


def _terms(h: Hypersurface, z: np.ndarray) -> np.ndarray:
    pw = _powers(z, h.degree)
    t = np.ones((z.shape[0], len(h.coeffs)), dtype=complex)
    for i in range(h.num_vars):
        t *= pw[:, i, h.exponents[:, i]]
    return t * h.coeffs


def eval_poly_batch(h: Hypersurface, z: np.ndarray) -> np.ndarray:
    z = np.atleast_2d(np.asarray(z, dtype=complex))
    return _terms(h, z).sum(axis=1)


def term_scale_batch(h: Hypersurface, z: np.ndarray) -> np.ndarray:
    """Sum of term magnitudes, the reference scale for relative residuals."""
    z = np.atleast_2d(np.asarray(z, dtype=complex))
    return np.abs(_terms(h, z)).sum(axis=1)


def grad_poly_batch(h: Hypersurface, z: np.ndarray) -> np.ndarray:
    z = np.atleast_2d(np.asarray(z, dtype=complex))
    pw = _powers(z, h.degree)
    P, n = z.shape
    out = np.zeros((P, n), dtype=complex)
    for i in range(n):
        ei = h.exponents[:, i]
        t = np.ones((P, len(h.coeffs)), dtype=complex)
        for j in range(n):
            if j == i:
                t *= pw[:, j, np.maximum(ei - 1, 0)] * ei
            else:
                t *= pw[:, j, h.exponents[:, j]]
        out[:, i] = (t * h.coeffs).sum(axis=1)
    return out


def eval_poly(h: Hypersurface, p: HomPoint | np.ndarray) -> complex:
    coords = p.coords if isinstance(p, HomPoint) else np.asarray(p, dtype=complex)
    return complex(eval_poly_batch(h, coords[None, :])[0])


def grad_poly(h: Hypersurface, p: HomPoint | np.ndarray) -> np.ndarray:
    coords = p.coords if isinstance(p, HomPoint) else np.asarray(p, dtype=complex)
    return grad_poly_batch(h, coords[None, :])[0]


@dataclass(frozen=True)
class Chart:
    """Affine chart: z_a = 1, and z_b (if present) eliminated through f = 0."""

    affine_index: int
    dependent_index: int | None
    free_indices: tuple[int, ...]

    @property
    def dim(self) -> int:
        return len(self.free_indices)


def chart_from_indices(num_vars: int, a: int, b: int | None) -> Chart:
    if a == b:
        raise ValueError("affine and dependent indices must differ")
    free = tuple(i for i in range(num_vars) if i != a and i != b)
    return Chart(a, b, free)


def choose_chart_batch(h: Hypersurface | None, z: np.ndarray, tol: float = 1e-12):
    """Vectorized chart choice. Returns (affine, dependent) index arrays.

    For h=None (projective space itself) the dependent array is all -1.
    """
    z = np.atleast_2d(np.asarray(z, dtype=complex))
    zn = z / np.linalg.norm(z, axis=1, keepdims=True)
    # round before argmax so phase rotations cannot flip near-ties
    a = np.argmax(np.round(np.abs(zn), 12), axis=1)
    if h is None:
        return a, np.full_like(a, -1)
    g = np.abs(grad_poly_batch(h, zn))
    g[np.arange(len(a)), a] = -1.0
    b = np.argmax(np.round(g, 12), axis=1)
    bad = g[np.arange(len(b)), b] < tol
    if np.any(bad):
        raise SingularPointError(f"hypersurface gradient vanishes at {int(bad.sum())} point(s)")
    return a, b


def choose_chart(h: Hypersurface | None, p: HomPoint | np.ndarray) -> Chart:
    coords = p.coords if isinstance(p, HomPoint) else np.asarray(p, dtype=complex)
    a, b = choose_chart_batch(h, coords[None, :])
    return chart_from_indices(coords.size, int(a[0]), None if b[0] < 0 else int(b[0]))


def write_hypersurface(h: Hypersurface, path: str | Path) -> None:
    lines = [f"HYPERSURFACE {h.num_vars} {h.degree}"]
    for e, c in zip(h.exponents, h.coeffs):
        lines.append(f"{float(c.real)!r} {float(c.imag)!r} " + " ".join(str(int(x)) for x in e))
    Path(path).write_text("\n".join(lines) + "\n")


def read_hypersurface(path: str | Path) -> Hypersurface:
    rows = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip() and not ln.startswith("#")]
    head = rows[0]
    if head[0] != "HYPERSURFACE" or len(head) != 3:
        raise ValueError(f"bad hypersurface header: {' '.join(head)}")
    n, d = int(head[1]), int(head[2])
    coeffs, exps = [], []
    for r in rows[1:]:
        if len(r) != n + 2:
            raise ValueError(f"expected {n + 2} fields per term, got {len(r)}")
        coeffs.append(complex(float(r[0]), float(r[1])))
        exps.append([int(x) for x in r[2:]])
    return Hypersurface(n, d, np.array(exps), np.array(coeffs))

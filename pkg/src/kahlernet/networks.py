"""Kahler potential families built from a monomial section basis.

Families
--------
algebraic
    K = log sum_IJ G_IJ s_I conj(s_J), G Hermitian positive definite.
holomorphic
    y = theta(W_{d-1} ... theta(W_1 s)), theta(x) = x**p componentwise,
    K = log sum_IJ G_IJ y_I conj(y_J).
bihomogeneous
    Real features x of the Hermitian matrix s s^dagger, then
    F = w_d . theta(W_{d-1} ... theta(W_1 x)), K = log F.
tree_bihomogeneous
    Like bihomogeneous, but every unit of every layer owns an independent
    copy of the subnetwork that feeds it.
mps
    M_i = sum_c s_c T_i[c] (a chi_{i-1} x chi_i matrix), P = M_1 ... M_d,
    K = log ||P||_F^2.

The bihomogeneous feature vector has length S**2, ordered by I <= J in
graded-lex section order: |s_I|^2 for I == J, then Re and Im of
s_I conj(s_J) for I < J.
"""
from __future__ import annotations

import math
import string
from dataclasses import dataclass, replace
from functools import lru_cache
from pathlib import Path

import jax
import jax.numpy as jnp
import numpy as np

from . import jets as J
from .jets import DomainError, Jet
from .projective import eval_sections_batch, monomials, section_count

FAMILIES = ("algebraic", "holomorphic", "bihomogeneous", "tree_bihomogeneous", "mps")


@dataclass(frozen=True)
class Architecture:
    family: str
    num_vars: int
    input_degree: int = 1
    powers: tuple[int, ...] = ()
    widths: tuple[int, ...] = ()
    bonds: tuple[int, ...] = ()

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        object.__setattr__(self, "powers", tuple(int(p) for p in self.powers))
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        object.__setattr__(self, "bonds", tuple(int(b) for b in self.bonds))
        if self.widths and not self.powers:
            object.__setattr__(self, "powers", (2,) * len(self.widths))
        if len(self.powers) != len(self.widths):
            raise ValueError("need one power per hidden width")
        if any(p < 1 for p in self.powers) or any(w < 1 for w in self.widths):
            raise ValueError("powers and widths must be positive")
        if self.family in ("bihomogeneous", "tree_bihomogeneous"):
            if not self.widths:
                raise ValueError("bihomogeneous networks need depth >= 2")
            if self.powers[-1] % 2:
                raise ValueError("last activation power must be even for a positive F")
        if self.family == "holomorphic" and not self.widths:
            raise ValueError("holomorphic networks need depth >= 2")
        if self.family == "mps" and len(self.bonds) < 2:
            raise ValueError("mps needs bond dimensions chi_0..chi_d")
        if self.family == "algebraic" and self.widths:
            raise ValueError("algebraic metrics have no hidden layers")

    @property
    def depth(self) -> int:
        if self.family == "mps":
            return len(self.bonds) - 1
        return len(self.widths) + 1

    @property
    def num_sections(self) -> int:
        return section_count(self.num_vars, self.input_degree)


def degree(arch: Architecture) -> int:
    """Degree k of the line bundle O(k) on which exp(-K) is a fiber metric."""
    if arch.family == "mps":
        return arch.input_degree * arch.depth
    return arch.input_degree * math.prod(arch.powers)


def param_count(arch: Architecture) -> int:
    """Number of real trainable parameters."""
    S = arch.num_sections
    D = S * S
    f, w = arch.family, arch.widths
    if f == "algebraic":
        return S * S
    if f == "holomorphic":
        dims = (S,) + w
        return 2 * sum(a * b for a, b in zip(dims[:-1], dims[1:])) + w[-1] ** 2
    if f == "bihomogeneous":
        dims = (D,) + w + (1,)
        return sum(a * b for a, b in zip(dims[:-1], dims[1:]))
    if f == "tree_bihomogeneous":
        # layer l (1-based) weight shape (D_{d-1}, ..., D_l, fan_in_l)
        dims = (D,) + w
        total = w[-1]
        for l in range(len(w)):
            total += math.prod(w[l:]) * dims[l]
        return total
    b = arch.bonds
    return 2 * sum(S * b[i] * b[i + 1] for i in range(len(b) - 1))


@dataclass(frozen=True, eq=False)
class KahlerNetwork:
    """A potential family plus its weights.

    ``weights`` holds the hidden-layer tensors (complex for holomorphic/mps,
    real otherwise); ``final`` is the Hermitian matrix G (algebraic,
    holomorphic) or the nonnegative output vector (bihomogeneous families).
    """

    arch: Architecture
    weights: tuple = ()
    final: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(np.asarray(w) for w in self.weights))
        f = self.arch.family
        if f in ("algebraic", "holomorphic"):
            G = np.asarray(self.final, dtype=complex)
            if np.linalg.norm(G - G.conj().T) > 1e-12 * max(1.0, np.linalg.norm(G)):
                raise ValueError("G must be Hermitian")
            if np.linalg.eigvalsh(0.5 * (G + G.conj().T))[0] <= 0:
                raise ValueError("G must be positive definite")
            object.__setattr__(self, "final", G)
        elif f in ("bihomogeneous", "tree_bihomogeneous"):
            w = np.asarray(self.final, dtype=float)
            if np.any(w < 0) or not np.any(w > 0):
                raise ValueError("final weights must be nonnegative with at least one positive")
            object.__setattr__(self, "final", w)


# ---------------------------------------------------------------------------
# parameter packing
# ---------------------------------------------------------------------------

def _chol_vec(G: np.ndarray) -> np.ndarray:
    L = np.linalg.cholesky(G)
    il = np.tril_indices(len(G), -1)
    return np.concatenate([np.diag(L).real, L[il].real, L[il].imag])


def _chol_mat(vec, S: int):
    il = np.tril_indices(S, -1)
    nl = len(il[0])
    L = jnp.diag(jax.lax.complex(vec[:S], jnp.zeros_like(vec[:S])))
    return L.at[il].set(jax.lax.complex(vec[S:S + nl], vec[S + nl:S + 2 * nl]))


def gram_from_chol(vec, S: int):
    L = _chol_mat(vec, S)
    return L @ jnp.conj(L.T)


def to_params(net: KahlerNetwork) -> list:
    """Trainable real arrays in a fixed order."""
    f = net.arch.family
    if f == "algebraic":
        return [_chol_vec(net.final)]
    if f == "holomorphic":
        out = []
        for W in net.weights:
            out += [W.real.copy(), W.imag.copy()]
        return out + [_chol_vec(net.final)]
    if f in ("bihomogeneous", "tree_bihomogeneous"):
        return [np.asarray(W, float) for W in net.weights] + [net.final.copy()]
    out = []
    for T in net.weights:
        out += [T.real.copy(), T.imag.copy()]
    return out


def from_params(arch: Architecture, params) -> KahlerNetwork:
    params = [np.asarray(p) for p in params]
    f = arch.family
    if f == "algebraic":
        return KahlerNetwork(arch, (), np.asarray(gram_from_chol(params[0], arch.num_sections)))
    if f in ("holomorphic", "mps"):
        n = len(params) - (1 if f == "holomorphic" else 0)
        ws = tuple(params[i] + 1j * params[i + 1] for i in range(0, n, 2))
        G = np.asarray(gram_from_chol(params[-1], arch.widths[-1])) if f == "holomorphic" else None
        return KahlerNetwork(arch, ws, G)
    return KahlerNetwork(arch, tuple(params[:-1]), np.maximum(params[-1], 0.0))


def flatten(params) -> np.ndarray:
    return np.concatenate([np.ravel(p) for p in params])


def unflatten(vec, like) -> list:
    out, i = [], 0
    for p in like:
        n = np.size(p)
        out.append(vec[i:i + n].reshape(np.shape(p)))
        i += n
    return out


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def _feature_maps(S: int):
    diag, re_pos, im_pos, pairs = [], [], [], []
    i = 0
    for a in range(S):
        for b in range(a, S):
            if a == b:
                diag.append((i, a))
                i += 1
            else:
                pairs.append((a, b))
                re_pos.append(i)
                im_pos.append(i + 1)
                i += 2
    return diag, np.array(re_pos, int), np.array(im_pos, int), pairs


def features_to_hermitian(W, S: int):
    """Map real feature weights (..., S**2) to Hermitian forms (..., S, S)."""
    diag, re_pos, im_pos, pairs = _feature_maps(S)
    W = jnp.asarray(W)
    H = jnp.zeros(W.shape[:-1] + (S, S), dtype=complex)
    di = np.array([p for p, _ in diag])
    dj = np.array([a for _, a in diag])
    H = H.at[..., dj, dj].set(jax.lax.complex(W[..., di], jnp.zeros_like(W[..., di])))
    if pairs:
        a = np.array([p[0] for p in pairs])
        b = np.array([p[1] for p in pairs])
        off = 0.5 * jax.lax.complex(W[..., re_pos], -W[..., im_pos])
        H = H.at[..., a, b].set(off)
        H = H.at[..., b, a].set(jnp.conj(off))
    return H


def bihomogeneous_features(s: np.ndarray) -> np.ndarray:
    """Real feature vectors (P, S**2) from section values (P, S)."""
    s = np.atleast_2d(s)
    S = s.shape[1]
    diag, re_pos, im_pos, pairs = _feature_maps(S)
    x = np.zeros((s.shape[0], S * S))
    for i, a in diag:
        x[:, i] = np.abs(s[:, a]) ** 2
    for r, m, (a, b) in zip(re_pos, im_pos, pairs):
        v = s[:, a] * np.conj(s[:, b])
        x[:, r], x[:, m] = v.real, v.imag
    return x


def _hermitian_form(H, v, d) -> Jet:
    """Jet of sum_IJ H[..., I, J] y_I conj(y_J) for holomorphic y with jet (v, d).

    H may carry leading unit axes; dbar y = 0 and ddbar y = 0 are used
    directly instead of being multiplied through.
    """
    u = string.ascii_lowercase[:H.ndim - 2]
    es = jnp.einsum
    t = es(f"{u}ij,qj->q{u}i", H, jnp.conj(v))
    tb = es(f"{u}ij,qjY->q{u}iY", H, jnp.conj(d))
    return Jet(es(f"qi,q{u}i->q{u}", v, t), es(f"qiX,q{u}i->q{u}X", d, t),
               es(f"qi,q{u}iY->q{u}Y", v, tb), es(f"qiX,q{u}iY->q{u}XY", d, tb))


def _holo_power(v, d, p: int):
    return v ** p, (p * v ** (p - 1))[..., None] * d


def density_jet(arch: Architecture, params, s: Jet) -> Jet:
    """Jet of F = exp(K) from holomorphic section jets ``s`` of shape (P, S)."""
    f = arch.family
    S = arch.num_sections
    v, d = s.v, s.d
    if f == "algebraic":
        return J.real(_hermitian_form(gram_from_chol(params[0], S), v, d))
    if f == "holomorphic":
        for l in range(len(arch.widths)):
            W = jax.lax.complex(params[2 * l], params[2 * l + 1])
            v, d = _holo_power(jnp.einsum("ij,qj->qi", W, v), jnp.einsum("ij,qjX->qiX", W, d), arch.powers[l])
        G = gram_from_chol(params[-1], arch.widths[-1])
        return J.real(_hermitian_form(G, v, d))
    if f == "bihomogeneous":
        u = _hermitian_form(features_to_hermitian(params[0], S), v, d)
        for l in range(1, len(arch.widths)):
            u = J.linear("ij,qj->qi", params[l], J.power(u, arch.powers[l - 1]))
        u = J.power(u, arch.powers[-1])
        return J.real(J.linear("j,qj->q", params[-1], u))
    if f == "tree_bihomogeneous":
        u = _hermitian_form(features_to_hermitian(params[0], S), v, d)   # (P, D_{d-1}, ..., D_1)
        letters = string.ascii_lowercase
        for l in range(1, len(arch.widths)):
            idx = letters[:u.v.ndim - 1]
            u = J.linear(f"{idx},q{idx}->q{idx[:-1]}", params[l], J.power(u, arch.powers[l - 1]))
        u = J.power(u, arch.powers[-1])
        return J.real(J.linear("j,qj->q", params[-1], u))
    # mps: holomorphic matrix product, then the Frobenius form
    Pv = Pd = None
    for i in range(arch.depth):
        T = jax.lax.complex(params[2 * i], params[2 * i + 1])
        Mv, Md = jnp.einsum("cij,qc->qij", T, v), jnp.einsum("cij,qcX->qijX", T, d)
        if Pv is None:
            Pv, Pd = Mv, Md
        else:
            Pv, Pd = (jnp.einsum("qij,qjk->qik", Pv, Mv),
                      jnp.einsum("qijX,qjk->qikX", Pd, Mv) + jnp.einsum("qij,qjkX->qikX", Pv, Md))
    q = Pv.shape[0]
    eye = jnp.eye(Pv.shape[1] * Pv.shape[2])
    return J.real(_hermitian_form(eye, Pv.reshape(q, -1), Pd.reshape(q, eye.shape[0], -1)))


def potential_jet(arch: Architecture, params, s: Jet) -> Jet:
    return J.log(density_jet(arch, params, s))


@lru_cache(maxsize=None)
def compiled(arch: Architecture, what: str = "potential"):
    """Jitted (params, s, ds) -> Jet for ``what`` in {"potential", "density"}."""
    fn = potential_jet if what == "potential" else density_jet
    return jax.jit(lambda params, s, ds: fn(arch, params, J.holomorphic(s, ds)))


def eval_density(net: KahlerNetwork, sections) -> np.ndarray:
    s = np.atleast_2d(np.asarray(sections, dtype=complex))
    if s.shape[1] != net.arch.num_sections:
        raise ValueError(f"expected {net.arch.num_sections} sections, got {s.shape[1]}")
    F = compiled(net.arch, "density")(to_params(net), s, np.zeros(s.shape + (0,), dtype=complex))
    return np.asarray(F.v)


def eval_potential(net: KahlerNetwork, sections):
    """K at one section vector (returns float) or a batch (P, S) (returns array)."""
    F = eval_density(net, sections)
    J.check_positive(F, "network output F")
    K = np.log(F)
    return float(K[0]) if np.ndim(sections) == 1 else K


def potential_at_points(net: KahlerNetwork, z: np.ndarray) -> np.ndarray:
    basis = monomials(net.arch.num_vars, net.arch.input_degree)
    return eval_potential(net, eval_sections_batch(basis, z))


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------

def _gain(p: int, complex_: bool) -> float:
    # E|x^p|^2 for a unit-variance Gaussian x
    return float(math.factorial(p) if complex_ else math.prod(range(1, 2 * p, 2)))


def random_init(arch: Architecture, seed: int) -> KahlerNetwork:
    """Gaussian weights with variance 1/fan_in.

    Inputs are evaluated at unit-norm homogeneous coordinates, where the
    section (and feature) vectors have unit norm, so the first layer's
    effective fan-in is 1.  Later layers also divide by the second moment of
    the activation on a unit Gaussian (p! complex, (2p-1)!! real), which
    keeps every layer at unit scale.
    """
    rng = np.random.default_rng(seed)
    S = arch.num_sections
    f = arch.family
    if f == "algebraic":
        return KahlerNetwork(arch, (), np.eye(S, dtype=complex))

    def cgauss(shape, var):
        return np.sqrt(var / 2) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))

    if f == "holomorphic":
        dims = (S,) + arch.widths
        ws = tuple(cgauss((dims[i + 1], dims[i]), 1.0 if i == 0 else 1.0 / (dims[i] * _gain(arch.powers[i - 1], True)))
                   for i in range(len(arch.widths)))
        return KahlerNetwork(arch, ws, np.eye(arch.widths[-1], dtype=complex) / arch.widths[-1])
    if f == "bihomogeneous":
        dims = (S * S,) + arch.widths
        ws = tuple(rng.standard_normal((dims[i + 1], dims[i]))
                   / np.sqrt(1.0 if i == 0 else dims[i] * _gain(arch.powers[i - 1], False))
                   for i in range(len(arch.widths)))
        final = rng.standard_normal(arch.widths[-1]) ** 2 / arch.widths[-1]
        return KahlerNetwork(arch, ws, final)
    if f == "tree_bihomogeneous":
        w = arch.widths
        dims = (S * S,) + w
        ws = []
        for l in range(len(w)):
            shape = tuple(reversed(w[l:])) + (dims[l],)
            ws.append(rng.standard_normal(shape) / np.sqrt(1.0 if l == 0 else dims[l] * _gain(arch.powers[l - 1], False)))
        final = rng.standard_normal(w[-1]) ** 2 / w[-1]
        return KahlerNetwork(arch, tuple(ws), final)
    b = arch.bonds
    ws = tuple(cgauss((S, b[i], b[i + 1]), 1.0 / b[i]) for i in range(len(b) - 1))
    return KahlerNetwork(arch, ws, None)


def near_fs_init(arch: Architecture, seed: int, noise: float = 0.1) -> KahlerNetwork:
    """Bihomogeneous net whose potential is a perturbed multiple of Fubini-Study.

    Every first-layer row is the identity form plus Gaussian noise, later
    layers average their inputs, so F is close to |s|^(2 * prod(powers)).
    """
    if arch.family != "bihomogeneous":
        raise ValueError("near_fs_init builds plain bihomogeneous networks")
    rng = np.random.default_rng(seed)
    S = arch.num_sections
    eye = np.zeros(S * S)
    eye[[i for i, _ in _feature_maps(S)[0]]] = 1.0
    dims = (S * S,) + arch.widths
    ws = [eye + noise * rng.standard_normal((dims[1], dims[0])) / np.sqrt(S)]
    for i in range(1, len(arch.widths)):
        ws.append((1.0 + noise * rng.standard_normal((dims[i + 1], dims[i]))) / dims[i])
    return KahlerNetwork(arch, tuple(ws), np.full(arch.widths[-1], 1.0 / arch.widths[-1]))


def nest_embed(net: KahlerNetwork) -> KahlerNetwork:
    """Append a width-1 squaring layer: F -> F**2, so K -> 2K exactly."""
    if net.arch.family != "bihomogeneous":
        raise ValueError("nest_embed applies to bihomogeneous networks")
    a = net.arch
    arch = replace(a, powers=a.powers + (2,), widths=a.widths + (1,))
    return KahlerNetwork(arch, net.weights + (net.final.reshape(1, -1).copy(),), np.ones(1))


def tie_tree(net: KahlerNetwork) -> KahlerNetwork:
    """Tree network whose subnetworks all share the weights of a plain network."""
    a = net.arch
    if a.family != "bihomogeneous":
        raise ValueError("need a bihomogeneous network")
    arch = replace(a, family="tree_bihomogeneous")
    w = a.widths
    ws = []
    for l, W in enumerate(net.weights):
        lead = tuple(reversed(w[l + 1:]))
        ws.append(np.broadcast_to(W, lead + W.shape).copy())
    return KahlerNetwork(arch, tuple(ws), net.final.copy())


def bihomogeneous_depth2_gram(net: KahlerNetwork) -> np.ndarray:
    """Hermitian G over degree-2*k0 sections with log(s2^dag G s2) equal to K.

    Valid for depth-2, p = 2 bihomogeneous networks.  G is Hermitian but need
    not be positive definite.
    """
    a = net.arch
    if a.family != "bihomogeneous" or a.depth != 2 or a.powers != (2,):
        raise ValueError("need a depth-2 bihomogeneous network with p = 2")
    S = a.num_sections
    b1 = monomials(a.num_vars, a.input_degree)
    b2 = monomials(a.num_vars, 2 * a.input_degree)
    index2 = {tuple(e): i for i, e in enumerate(b2.exponents)}
    H = np.asarray(features_to_hermitian(net.weights[0], S))
    # s_I s_K = c[I, K] * s2[idx[I, K]]
    idx = np.zeros((S, S), int)
    c = np.zeros((S, S))
    for I in range(S):
        for K in range(S):
            j = index2[tuple(b1.exponents[I] + b1.exponents[K])]
            idx[I, K] = j
            c[I, K] = b1.norms[I] * b1.norms[K] / b2.norms[j]
    G = np.zeros((len(b2), len(b2)), dtype=complex)
    # u^2 = sum H_IJ H_KL s_I s_K conj(s_J s_L)
    for alpha, w in enumerate(net.final):
        Ha = H[alpha]
        T = np.einsum("ij,kl,ik,jl->ikjl", Ha, Ha, c, c)
        np.add.at(G, (idx[:, :, None, None], idx[None, None, :, :]), w * T)
    return 0.5 * (G + G.conj().T)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    return format(float(x), ".17g")


def write_network(net: KahlerNetwork, path: str | Path) -> None:
    a = net.arch
    lines = [f"NETWORK {a.family} {a.num_vars} {a.input_degree}",
             "powers " + " ".join(map(str, a.powers)),
             "widths " + " ".join(map(str, a.widths)),
             "bonds " + " ".join(map(str, a.bonds))]
    arrays = list(net.weights)
    if net.final is not None:
        arrays.append(net.final)
    for arr in arrays:
        arr = np.asarray(arr)
        kind = "complex" if np.iscomplexobj(arr) else "real"
        lines.append(f"ARRAY {kind} " + " ".join(map(str, arr.shape)))
        flat = arr.ravel()
        if kind == "complex":
            lines.append(" ".join(_fmt(v) for z in flat for v in (z.real, z.imag)))
        else:
            lines.append(" ".join(_fmt(v) for v in flat))
    Path(path).write_text("\n".join(lines) + "\n")


def read_network(path: str | Path) -> KahlerNetwork:
    lines = Path(path).read_text().splitlines()
    head = lines[0].split()
    if head[0] != "NETWORK":
        raise ValueError("not a network file")
    fam, nv, k0 = head[1], int(head[2]), int(head[3])
    fields = {}
    for ln in lines[1:4]:
        key, *vals = ln.split()
        fields[key] = tuple(int(v) for v in vals)
    arch = Architecture(fam, nv, k0, fields["powers"], fields["widths"], fields["bonds"])
    arrays = []
    i = 4
    while i < len(lines) and lines[i].startswith("ARRAY"):
        _, kind, *shape = lines[i].split()
        shape = tuple(int(s) for s in shape)
        vals = np.array([float(v) for v in lines[i + 1].split()]) if lines[i + 1].strip() else np.zeros(0)
        if kind == "complex":
            vals = vals[0::2] + 1j * vals[1::2]
        arrays.append(vals.reshape(shape))
        i += 2
    if fam in ("algebraic",):
        return KahlerNetwork(arch, (), arrays[0])
    if fam == "mps":
        return KahlerNetwork(arch, tuple(arrays), None)
    return KahlerNetwork(arch, tuple(arrays[:-1]), arrays[-1])

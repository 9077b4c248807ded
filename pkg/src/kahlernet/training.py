"""Monge-Ampere and supervised losses, exact weight gradients, and a descent loop."""
from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache

import jax
import jax.numpy as jnp
import numpy as np

from . import jets as J
from .networks import KahlerNetwork, flatten, from_params, potential_jet, to_params, unflatten

logger = logging.getLogger(__name__)

LOSSES = ("sigma", "sigma_pow", "supervised", "donaldson")


class TrainingDivergedError(RuntimeError):
    """Loss grew beyond the divergence threshold."""


@dataclass(frozen=True)
class LossConfig:
    loss: str = "sigma"
    p_norm: float = 1.0
    learning_rate: float = 1e-2
    lr_decay: float = 1.0          # multiplicative, per accepted step
    lr_growth: float = 1.0         # multiplicative, per accepted step
    momentum: float = 0.0
    max_steps: int = 100
    batch: int | None = None       # None = full set
    seed: int = 0
    restarts: int = 1
    heldout_count: int | None = None
    divergence_factor: float = 1e3

    def __post_init__(self):
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.p_norm < 1:
            raise ValueError("p_norm must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


@dataclass
class TrainReport:
    loss_trace: list = field(default_factory=list)
    grad_norm_trace: list = field(default_factory=list)
    lr_trace: list = field(default_factory=list)
    final_sigma: float | None = None
    initial_sigma: float | None = None
    wall_clock: float = 0.0
    seed: int = 0
    status: str = "ok"
    restart: int = 0

    @property
    def smoothed_loss(self) -> list:
        return list(np.minimum.accumulate(self.loss_trace)) if self.loss_trace else []

    def to_json(self) -> str:
        d = asdict(self)
        d["smoothed_loss"] = self.smoothed_loss
        return json.dumps(d, indent=1)


# ---------------------------------------------------------------------------
# data bundles
# ---------------------------------------------------------------------------

def sigma_data(samples, k0: int) -> dict:
    s, ds = samples.section_jets(k0)
    return dict(s=s, ds=ds, fs=samples.fs_density, omega=samples.omega_density, q=samples.qweight)


def supervised_data(samples_or_coords, y, k0: int, num_vars: int) -> dict:
    from .projective import eval_sections_batch, monomials

    z = getattr(samples_or_coords, "coords", samples_or_coords)
    s = eval_sections_batch(monomials(num_vars, k0), z)
    return dict(s=s, ds=np.zeros(s.shape + (0,), complex), y=np.asarray(y, float))


def donaldson_data(samples, k0: int, measure: str = "cy") -> dict:
    from .projective import eval_sections_batch, monomials

    s = eval_sections_batch(monomials(samples.num_vars, k0), samples.coords)
    nu = samples.mass if measure == "cy" else samples.qweight
    return dict(s=s, ds=np.zeros(s.shape + (0,), complex), nu=nu / nu.sum())


# ---------------------------------------------------------------------------
# losses (pure jax functions of the parameter list)
# ---------------------------------------------------------------------------

def _det(g):
    m = g.shape[-1]
    if m == 1:
        return jnp.real(g[..., 0, 0])
    if m == 2:
        return jnp.real(g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] * g[..., 1, 0])
    if m == 3:
        return jnp.real(
            g[..., 0, 0] * (g[..., 1, 1] * g[..., 2, 2] - g[..., 1, 2] * g[..., 2, 1])
            - g[..., 0, 1] * (g[..., 1, 0] * g[..., 2, 2] - g[..., 1, 2] * g[..., 2, 0])
            + g[..., 0, 2] * (g[..., 1, 0] * g[..., 2, 1] - g[..., 1, 1] * g[..., 2, 0]))
    return jnp.real(jnp.linalg.det(g))


def _eta(arch, params, data):
    K = potential_jet(arch, params, J.holomorphic(data["s"], data["ds"]))
    det = _det(K.dd)
    q, fs, om = data["q"], data["fs"], data["omega"]
    n_const = jnp.sum(q * det / fs) / jnp.sum(q * om / fs)
    return det / (n_const * om), q * om / fs


def _sigma_pow(arch, params, data, p_norm):
    # smooth at eta == 1 for p > 1, unlike its p-th root
    eta, m = _eta(arch, params, data)
    return jnp.sum(m * jnp.abs(eta - 1.0) ** p_norm) / jnp.sum(m)


def _sigma(arch, params, data, p_norm):
    return _sigma_pow(arch, params, data, p_norm) ** (1.0 / p_norm)


def _supervised(arch, params, data):
    K = potential_jet(arch, params, J.holomorphic(data["s"], data["ds"]))
    return jnp.mean((K.v - data["y"]) ** 2)


def _donaldson(arch, params, data):
    K = potential_jet(arch, params, J.holomorphic(data["s"], data["ds"]))
    S = arch.num_sections
    logdet = 2.0 * jnp.sum(jnp.log(jnp.abs(params[0][:S])))
    return jnp.sum(data["nu"] * K.v) - logdet / S


@lru_cache(maxsize=None)
def _loss_fns(arch, loss: str, p_norm: float):
    if loss == "sigma":
        f = lambda params, data: _sigma(arch, params, data, p_norm)
    elif loss == "sigma_pow":
        f = lambda params, data: _sigma_pow(arch, params, data, p_norm)
    elif loss == "supervised":
        f = lambda params, data: _supervised(arch, params, data)
    else:
        if arch.family != "algebraic":
            raise ValueError("the Donaldson functional is defined for algebraic metrics")
        f = lambda params, data: _donaldson(arch, params, data)
    return jax.jit(f), jax.jit(jax.value_and_grad(f))


def loss_value(net: KahlerNetwork, data: dict, loss: str = "sigma", p_norm: float = 1.0) -> float:
    f, _ = _loss_fns(net.arch, loss, float(p_norm))
    return float(f(to_params(net), data))


def sigma_loss(net: KahlerNetwork, samples, p_norm: float = 1.0) -> float:
    """(sum m |eta - 1|^p / sum m)^(1/p) with Omega-measure masses m."""
    return loss_value(net, sigma_data(samples, net.arch.input_degree), "sigma", p_norm)


def sigma_stderr(net: KahlerNetwork, samples) -> float:
    """Monte Carlo standard error of the p = 1 sigma estimate (ratio estimator)."""
    eta, m = _eta(net.arch, to_params(net), sigma_data(samples, net.arch.input_degree))
    x, m = np.abs(np.asarray(eta) - 1.0), np.asarray(m)
    r = np.sum(m * x) / np.sum(m)
    resid = m * (x - r)
    return float(np.sqrt(np.sum(resid ** 2)) / np.sum(m))


def weight_gradient(net: KahlerNetwork, data: dict, loss: str = "sigma", p_norm: float = 1.0) -> np.ndarray:
    """Exact gradient of the loss with respect to the flat trainable parameters."""
    _, vg = _loss_fns(net.arch, loss, float(p_norm))
    _, g = vg(to_params(net), data)
    return flatten([np.asarray(x) for x in g])


def loss_of_flat(net: KahlerNetwork, data: dict, loss: str = "sigma", p_norm: float = 1.0):
    """Closure vec -> loss, for finite-difference checks."""
    f, _ = _loss_fns(net.arch, loss, float(p_norm))
    like = to_params(net)
    return lambda vec: float(f(unflatten(np.asarray(vec), like), data))


# ---------------------------------------------------------------------------
# descent
# ---------------------------------------------------------------------------

def _project(arch, params):
    if arch.family in ("bihomogeneous", "tree_bihomogeneous"):
        params[-1] = np.maximum(params[-1], 0.0)
        if not np.any(params[-1] > 0):
            params[-1] = np.full_like(params[-1], 1e-8)
    return params


def _descend(net, data, config: LossConfig, rng) -> tuple[KahlerNetwork, TrainReport]:
    arch = net.arch
    _, vg = _loss_fns(arch, config.loss, float(config.p_norm))
    params = [np.array(p, float) for p in to_params(net)]
    P = len(data["s"])
    rep = TrainReport(seed=config.seed)
    lr = config.learning_rate
    vel = [np.zeros_like(p) for p in params]

    def batch_data():
        if config.batch is None or config.batch >= P:
            return data
        idx = np.sort(rng.choice(P, config.batch, replace=False))
        return {k: (v[idx] if np.ndim(v) and len(v) == P else v) for k, v in data.items()}

    bd = batch_data()
    val, grad = vg(params, bd)
    val = float(val)
    initial = val
    for step in range(config.max_steps):
        grad = [np.asarray(g) for g in grad]
        gnorm = float(np.sqrt(sum(np.sum(g ** 2) for g in grad)))
        rep.loss_trace.append(val)
        rep.grad_norm_trace.append(gnorm)
        rep.lr_trace.append(lr)
        if not np.isfinite(val) or val > config.divergence_factor * max(initial, 1e-300):
            rep.status = "diverged"
            raise TrainingDivergedError(f"loss {val:.3e} at step {step} (initial {initial:.3e})")
        if gnorm == 0.0:
            rep.status = "stationary"
            break
        new_vel = [config.momentum * v - lr * g for v, g in zip(vel, grad)]
        trial = _project(arch, [p + v for p, v in zip(params, new_vel)])
        if config.batch is not None and config.batch < P:
            params, vel = trial, new_vel
            bd = batch_data()
            val, grad = vg(params, bd)
            val = float(val)
            lr *= config.lr_decay
            continue
        tval, tgrad = vg(trial, bd)
        tval = float(tval)
        if np.isfinite(tval) and tval <= val:
            params, vel, val, grad = trial, new_vel, tval, tgrad
            lr *= config.lr_decay * config.lr_growth
        else:
            # reject: halve the step and drop momentum
            lr *= 0.5
            vel = [np.zeros_like(p) for p in params]
            if lr < 1e-14 * config.learning_rate:
                rep.status = "step-underflow"
                break
    rep.loss_trace.append(val)
    return from_params(arch, params), rep


def train(net: KahlerNetwork, samples, config: LossConfig, heldout=None,
          data: dict | None = None) -> tuple[KahlerNetwork, TrainReport]:
    """Gradient descent on the configured loss.

    For the sigma loss the reported ``final_sigma`` is measured on a held-out
    sample set (drawn from a seed derived from ``config.seed`` unless given).
    With ``restarts > 1`` the extra runs start from fresh random weights and
    the run with the lowest final training loss is returned.
    """
    from .networks import random_init
    from .sampling import sample_hypersurface

    t0 = time.perf_counter()
    if data is None:
        if config.loss in ("sigma", "sigma_pow"):
            data = sigma_data(samples, net.arch.input_degree)
        elif config.loss == "donaldson":
            data = donaldson_data(samples, net.arch.input_degree)
        else:
            raise ValueError("supervised training needs explicit data; use supervised_fit")
    rng = np.random.default_rng(config.seed)
    best = None
    for r in range(config.restarts):
        start = net if r == 0 else random_init(net.arch, config.seed + 1000 * r)
        out, rep = _descend(start, data, config, rng)
        rep.restart = r
        if best is None or rep.loss_trace[-1] < best[1].loss_trace[-1]:
            best = (out, rep)
    out, rep = best
    if config.loss in ("sigma", "sigma_pow"):
        if heldout is None and samples is not None and samples.hypersurface is not None:
            hs = int(np.random.SeedSequence([config.seed, 7919]).generate_state(1)[0])
            heldout = sample_hypersurface(samples.hypersurface, config.heldout_count or len(samples), hs)
        if heldout is not None:
            rep.initial_sigma = sigma_loss(net, heldout, config.p_norm)
            rep.final_sigma = sigma_loss(out, heldout, config.p_norm)
    rep.wall_clock = time.perf_counter() - t0
    return out, rep


def supervised_fit(net: KahlerNetwork, coords, y, config: LossConfig) -> tuple[KahlerNetwork, TrainReport]:
    """Least-squares fit of K(x_i) to targets y_i at homogeneous points x_i."""
    config = replace(config, loss="supervised")
    data = supervised_data(coords, y, net.arch.input_degree, net.arch.num_vars)
    t0 = time.perf_counter()
    out, rep = _descend(net, data, config, np.random.default_rng(config.seed))
    rep.wall_clock = time.perf_counter() - t0
    return out, rep

"""Command line entry point: ``kahlernet <command> [options]``.

Every command also reads ``--config FILE`` (``key = value`` lines, ``#``
comments); explicit flags override file values.  Exit status is 0 on
success, 1 on usage errors and 2 on numerical failures.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import balanced, experiments, networks, sampling, training
from .jets import DomainError
from .projective import SingularPointError, dwork_quintic, fermat, read_hypersurface, section_count

NUMERICAL_ERRORS = (DomainError, SingularPointError, training.TrainingDivergedError,
                    sampling.DegenerateLineError, sampling.RootPolishError,
                    np.linalg.LinAlgError, FloatingPointError, ZeroDivisionError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------------------
# config files
# ---------------------------------------------------------------------------

def read_config(path: str | Path) -> dict:
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected 'key = value'")
        key, val = (x.strip() for x in line.split("=", 1))
        out[key.replace("-", "_")] = val
    return out


def _apply_config(parser: argparse.ArgumentParser, cfg: dict) -> None:
    actions = {a.dest: a for a in parser._actions}
    defaults = {}
    for key, raw in cfg.items():
        if key not in actions or key in ("help", "config"):
            raise UsageError(f"unknown config key {key!r}")
        a = actions[key]
        if a.nargs in ("+", "*"):
            defaults[key] = [a.type(x) if a.type else x for x in raw.replace(",", " ").split()]
        elif isinstance(a, argparse._StoreTrueAction):
            defaults[key] = raw.lower() in ("1", "true", "yes", "on")
        else:
            defaults[key] = a.type(raw) if a.type else raw
    parser.set_defaults(**defaults)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _surface(args):
    if getattr(args, "surface", None):
        return read_hypersurface(args.surface)
    if getattr(args, "psi", None) is not None:
        return dwork_quintic(args.psi)
    return fermat()


def cmd_sample(args) -> int:
    if args.projective:
        ss = sampling.sample_projective(args.projective + 1, args.count, args.seed)
    else:
        ss = sampling.sample_hypersurface(_surface(args), args.count, args.seed)
    sampling.write_samples(ss, args.out)
    res = 0.0 if ss.hypersurface is None else float(sampling.relative_residual(ss.hypersurface, ss.coords).max())
    print(f"wrote {len(ss)} points to {args.out} (max relative residual {res:.2e}, skipped {ss.skipped})")
    return 0


def _load_arch(path: str) -> tuple[networks.Architecture, dict]:
    doc = json.loads(Path(path).read_text())
    init = {k: doc.pop(k) for k in ("init", "noise", "init_seed") if k in doc}
    try:
        arch = networks.Architecture(**{k: (tuple(v) if isinstance(v, list) else v) for k, v in doc.items()})
    except TypeError as exc:
        raise UsageError(f"bad architecture file {path}: {exc}") from exc
    return arch, init


def cmd_train(args) -> int:
    h = _surface(args)
    if args.points:
        pts = sampling.read_samples(args.points, h)
    else:
        pts = sampling.sample_hypersurface(h, args.count, args.seed)
    if args.network:
        net = networks.read_network(args.network)
    else:
        arch, init = _load_arch(args.arch)
        seed = init.get("init_seed", args.seed)
        if init.get("init", "random") == "near_fs":
            net = networks.near_fs_init(arch, seed, init.get("noise", 0.1))
        else:
            net = networks.random_init(arch, seed)
    cfg = training.LossConfig(p_norm=args.p, learning_rate=args.lr, momentum=args.momentum,
                              lr_decay=args.decay, max_steps=args.steps, batch=args.batch,
                              seed=args.seed, restarts=args.restarts, heldout_count=args.heldout)
    out, rep = training.train(net, pts, cfg)
    if args.report:
        Path(args.report).write_text(rep.to_json())
    if args.out:
        networks.write_network(out, args.out)
    print(f"sigma held-out: initial {rep.initial_sigma:.6g} final {rep.final_sigma:.6g} "
          f"({len(rep.loss_trace) - 1} steps, {rep.wall_clock:.1f} s, {rep.status})")
    return 0


def _balanced_samples(args):
    nv = args.n + 1
    if args.cubature:
        nr = max(2 * args.k + 2, args.radial)
        return sampling.projective_cubature(nv, nr, max(2 * args.k + 2, args.phases))
    return sampling.sample_projective(nv, args.count, args.seed)


def cmd_balanced(args) -> int:
    ss = _balanced_samples(args)
    S = section_count(args.n + 1, args.k)
    if args.start:
        G0, _ = balanced.read_gram(args.start)
    else:
        rng = np.random.default_rng(args.seed)
        A = rng.standard_normal((S, S)) + 1j * rng.standard_normal((S, S))
        G0 = A @ A.conj().T / S + np.eye(S)
    res = balanced.t_map_iterate(G0, args.k, ss, args.iters, args.tol, args.measure)
    if args.out:
        balanced.write_gram(res.G, args.out, args.k)
    print(f"status {res.status} after {res.iterations} iterations; residual max|rho-1| = {res.residual:.3e}; "
          f"||G/tr G - I/N|| = {balanced.identity_distance(res.G):.3e}")
    return 0 if res.status == "converged" else 2


def cmd_rho(args) -> int:
    ss = _balanced_samples(args)
    if args.metric:
        G, k = balanced.read_gram(args.metric)
        if k is not None and k != args.k:
            raise UsageError(f"metric file is for k = {k}, not {args.k}")
    else:
        G = np.eye(section_count(args.n + 1, args.k))
    rho = balanced.density_of_states(G, ss, args.k, measure=args.measure)
    print(f"rho: mean {np.average(rho, weights=ss.qweight):.12f} min {rho.min():.12f} "
          f"max {rho.max():.12f} max|rho-1| {np.abs(rho - 1).max():.3e}")
    return 0


def cmd_rank(args) -> int:
    rng = np.random.default_rng(args.seed)
    f = experiments.random_symmetric(args.dim, args.spectrum, rng)
    r = experiments.low_rank_fit(f, args.width, seed=args.seed)
    print(f"{r.relative_error_sq:.12g}")
    print(f"# squared convention {r.relative_error_sq:.12g}; Frobenius {r.relative_error_fro:.12g}; "
          f"descent (Frobenius) {r.descent_error:.12g}", file=sys.stderr)
    return 0


def cmd_count(args) -> int:
    frac, ceil = experiments.match_width(args.n, args.k)
    a = experiments.asymp_width(args.n, args.k)
    print(f"D_match = {ceil}")
    print(f"# exact {frac} = {float(frac):.6g}; asymptotic regime {a.regime}: "
          f"2^(2n) = {a.small_n}, (n/k)^k = {a.large_n}", file=sys.stderr)
    if args.width is not None:
        print(f"estB = {experiments.estB_bound(args.n, args.k, args.width, args.B_base):.12g}")
    return 0


def cmd_sweep(args) -> int:
    cfg = experiments.SweepConfig(n=args.n, k=args.k, dim=args.dim,
                                  widths=tuple(args.widths) if args.widths else None,
                                  ensemble=args.ensemble, samples=args.samples,
                                  B_base=args.B_base, seed=args.seed, descent=args.descent)
    rows = experiments.capacity_sweep(cfg)
    if args.out:
        experiments.write_sweep(rows, args.out, cfg)
        print(f"wrote {len(rows)} rows to {args.out}")
    else:
        sys.stdout.write(experiments.rows_to_csv(rows))
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="kahlernet", description="Neural-network Kahler potentials on projective hypersurfaces.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_, description=help_)
        sp.add_argument("--config", help="key = value file; flags override it")
        sp.set_defaults(func=fn)
        return sp

    def surface_opts(sp):
        sp.add_argument("--surface", help="hypersurface file (default: Fermat quintic)")
        sp.add_argument("--psi", type=float, help="use the Dwork quintic with this psi")

    sp = add("sample", cmd_sample, "draw points by random line intersection")
    surface_opts(sp)
    sp.add_argument("--projective", type=int, help="sample CP^N itself instead of a hypersurface")
    sp.add_argument("--count", type=int, default=10000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)

    sp = add("train", cmd_train, "minimize the Monge-Ampere sigma loss")
    surface_opts(sp)
    sp.add_argument("--arch", help="architecture JSON (family, num_vars, input_degree, powers, widths, bonds)")
    sp.add_argument("--network", help="start from a saved network instead of --arch")
    sp.add_argument("--points", help="sample file; default draws --count fresh points")
    sp.add_argument("--count", type=int, default=5000)
    sp.add_argument("--heldout", type=int, help="held-out sample count (default: same as training)")
    sp.add_argument("--p", type=float, default=1.0, help="L^p exponent")
    sp.add_argument("--steps", type=int, default=500)
    sp.add_argument("--lr", type=float, default=0.1)
    sp.add_argument("--momentum", type=float, default=0.9)
    sp.add_argument("--decay", type=float, default=1.0)
    sp.add_argument("--batch", type=int)
    sp.add_argument("--restarts", type=int, default=1)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--report", help="write the training report as JSON")
    sp.add_argument("--out", help="write the trained network")

    def proj_opts(sp):
        sp.add_argument("--k", type=int, required=True)
        sp.add_argument("--n", type=int, default=1, help="projective dimension")
        sp.add_argument("--count", type=int, default=100000)
        sp.add_argument("--cubature", action="store_true", help="exact FS cubature instead of Monte Carlo")
        sp.add_argument("--radial", type=int, default=20)
        sp.add_argument("--phases", type=int, default=16)
        sp.add_argument("--measure", choices=balanced.MEASURES, default="fixed")
        sp.add_argument("--seed", type=int, default=0)

    sp = add("balanced", cmd_balanced, "T-map iteration for the balanced metric on CP^n")
    proj_opts(sp)
    sp.add_argument("--iters", type=int, default=30)
    sp.add_argument("--tol", type=float, default=1e-8)
    sp.add_argument("--start", help="initial Gram matrix file")
    sp.add_argument("--out", help="write the final G")

    sp = add("rho", cmd_rho, "density of states of an algebraic metric on CP^n")
    proj_opts(sp)
    sp.add_argument("--metric", help="Gram matrix file (default: identity)")

    sp = add("rank", cmd_rank, "low-rank sum-of-squares fit of a symmetric matrix")
    sp.add_argument("--dim", type=int, required=True)
    sp.add_argument("--width", type=int, required=True)
    sp.add_argument("--spectrum", choices=experiments.ENSEMBLES, default="identity")
    sp.add_argument("--seed", type=int, default=0)

    sp = add("count", cmd_count, "parameter-matching width D_match")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--k", type=int, required=True)
    sp.add_argument("--width", type=int, help="also print the estB bound at this D_1")
    sp.add_argument("--B-base", dest="B_base", type=float, default=1.0)

    sp = add("sweep", cmd_sweep, "capacity sweep over D_1, CSV output")
    sp.add_argument("--n", type=int, default=2)
    sp.add_argument("--k", type=int, default=4)
    sp.add_argument("--dim", type=int)
    sp.add_argument("--widths", type=int, nargs="+")
    sp.add_argument("--ensemble", choices=experiments.ENSEMBLES, default="identity")
    sp.add_argument("--samples", type=int, default=1)
    sp.add_argument("--B-base", dest="B_base", type=float, default=1.0)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--descent", action="store_true")
    sp.add_argument("--out")
    return p


def _config_path(argv: list[str]) -> str | None:
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    commands = parser._subparsers._group_actions[0].choices
    try:
        if not argv:
            parser.print_usage(sys.stderr)
            return 1
        cfg_path = _config_path(argv)
        command = next((t for t in argv if t in commands), None)
        if cfg_path and command:
            sp = commands[command]
            cfg = read_config(cfg_path)
            _apply_config(sp, cfg)
            for a in sp._actions:
                if a.dest in cfg:
                    a.required = False
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            return 1
        if args.command == "train" and not (args.arch or args.network):
            raise UsageError("train needs --arch or --network")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
        return args.func(args)
    except SystemExit as exc:          # --help
        return int(exc.code or 0)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"kahlernet: {exc}", file=sys.stderr)
        return 1
    except NUMERICAL_ERRORS as exc:
        print(f"kahlernet: numerical failure: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"kahlernet: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

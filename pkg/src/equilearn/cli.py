"""Command-line driver: ``equilearn <command> [options]``.

Exit codes: 0 success, 1 invalid input or equilibrium check not satisfied,
2 ``--assert-bounds`` violation, 3 scale cap exceeded, 4 reduction budget
exhausted.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from equilearn import io
from equilearn.bayes_game import GameError, random_game
from equilearn.equilibrium import (
    counterexample_demo,
    counterexample_game,
    counterexample_mixture,
    check_bne_product,
    check_every_type_nfce,
    check_ex_ante_nfce,
)
from equilearn.gadget import (
    guarantee_horizon,
    kibitzer_deviation_utility,
    learn_gadget_cce,
    reduction_extract_bne,
)
from equilearn.multiscale import (
    SWAP_SUPPORT_CAP,
    DynamicsParams,
    PlayerLearner,
    ScaleCapError,
    empirical_distribution,
    per_type_swap_regret,
    run_dynamics,
    swap_regret_chain_bound,
    thread_external_regret,
    thread_regret_bound,
)
from equilearn.regret import MwuState

EXIT_OK, EXIT_INVALID, EXIT_BOUNDS, EXIT_CAP, EXIT_BUDGET = 0, 1, 2, 3, 4
MAX_SEED = 2**64 - 1


class _CorruptedLearner(PlayerLearner):
    """Test hook: every thread plays its worst action so far."""

    def _thread_distribution(self, state: MwuState) -> np.ndarray:
        out = np.zeros(state.n)
        out[int(np.argmin(state.cumulative_rewards))] = 1.0
        return out


def _epsilon(text: str) -> float:
    value = float(text)
    if not 0 < value <= 1:
        raise argparse.ArgumentTypeError(f"epsilon must lie in (0, 1], got {text}")
    return value


def _check_level(text: str) -> float:
    value = float(text)
    if not 0 <= value <= 1:
        raise argparse.ArgumentTypeError(f"epsilon must lie in [0, 1], got {text}")
    return value


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value <= MAX_SEED:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return value


def _reward_mode(text: str) -> tuple[str, int | None]:
    if text == "exact":
        return "exact", None
    if text.startswith("sampled:"):
        try:
            count = int(text.split(":", 1)[1])
        except ValueError:
            count = 0
        if count >= 1:
            return "sampled", count
    raise argparse.ArgumentTypeError("reward mode must be 'exact' or 'sampled:N' with N >= 1")


def _out_dir(path: str | None) -> Path:
    out = Path(path or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _print_json(data) -> None:
    print(json.dumps(data, sort_keys=True, indent=2))


def _fail(msg: str, code: int) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return code


def _dynamics_params(args, g) -> DynamicsParams:
    mode, count = args.reward_mode
    n = max(g.action_counts)
    if args.H is None:
        return DynamicsParams.from_epsilon(args.eps, n, mode, count)
    return DynamicsParams(args.eps, args.H, math.ceil(1 / args.eps), mode, count)


def cmd_run_dynamics(args) -> int:
    g = io.load_game(args.game)
    params = _dynamics_params(args, g)
    factory = _CorruptedLearner if args.corrupt_mwu else PlayerLearner
    trace = run_dynamics(g, params, seed=args.seed, learner_factory=factory)
    out = _out_dir(args.out)
    H, L, T = params.H, params.L, params.T

    def trace_rows():
        for t in range(T):
            for i in range(g.num_players):
                strat = trace.strategies[i][t]
                for ell in range(L):
                    for k in range(g.type_counts[i]):
                        for a in range(g.action_counts[i]):
                            yield (t + 1, i, ell + 1, k, a, strat[ell, k, a])

    io.write_csv(
        out / "trace.csv", ("day", "player", "thread", "type", "action", "probability"), trace_rows()
    )

    n = max(g.action_counts)
    eps_level = max(params.epsilon, params.guarantee_epsilon(n))
    nfce_level = (3.0 if params.reward_mode == "exact" else 5.0) * eps_level
    rows = []
    violations = []
    for i in range(g.num_players):
        ni = g.action_counts[i]
        for ell in range(1, L + 1):
            bound = thread_regret_bound(H, ni, ell) if ni > 1 else 0.0
            for beta in range(1, T // H**ell + 1):
                for k in range(g.type_counts[i]):
                    reg = thread_external_regret(trace, i, ell, beta, k)
                    rows.append(("external", i, ell, beta, k, reg, bound))
                    if reg > bound + 1e-9:
                        violations.append(f"thread regret {i},{ell},{beta},{k}")
    swap = {}
    try:
        for i in range(g.num_players):
            for k in range(g.type_counts[i]):
                reg = per_type_swap_regret(trace, i, k, SWAP_SUPPORT_CAP)
                chain = swap_regret_chain_bound(trace, i, k)
                swap[(i, k)] = reg / T
                rows.append(("swap", i, "", "", k, reg, chain))
                if reg > chain + 1e-9 or reg / T > nfce_level + 1e-9:
                    violations.append(f"swap regret {i},{k}")
        report = check_every_type_nfce(empirical_distribution(trace), g, nfce_level)
    except ScaleCapError as exc:
        return _fail(str(exc), EXIT_CAP)
    if not report.satisfied:
        violations.append("every-type NFCE check")
    io.write_csv(
        out / "regret.csv",
        ("kind", "player", "thread", "restart", "type", "regret", "bound"),
        rows,
    )
    summary = {
        "params": {
            "epsilon": params.epsilon,
            "H": H,
            "L": L,
            "T": T,
            "reward_mode": params.reward_mode,
            "sample_count": params.sample_count,
            "seed": args.seed,
        },
        "nfce_level": nfce_level,
        "equilibrium": report.to_dict(),
        "max_swap_regret_per_day": max(swap.values()),
        "violations": violations,
    }
    io.write_json(out / "summary.json", summary)
    if args.assert_bounds and violations:
        shown = "; ".join(violations[:5])
        more = f" and {len(violations) - 5} more" if len(violations) > 5 else ""
        return _fail(f"{len(violations)} bound violations: {shown}{more}", EXIT_BOUNDS)
    return EXIT_OK


def cmd_check_eq(args) -> int:
    g = io.load_game(args.game)
    mu = io.load_mixture(args.mu, g)
    try:
        if args.mode == "bne":
            if mu.rank != 1:
                return _fail("bne mode needs a single-component mixture", EXIT_INVALID)
            report = check_bne_product(mu.components[0], g, args.eps)
        elif args.mode == "ex-ante":
            report = check_ex_ante_nfce(mu, g, args.eps)
        else:
            report = check_every_type_nfce(mu, g, args.eps)
    except ScaleCapError as exc:
        return _fail(str(exc), EXIT_CAP)
    _print_json(report.to_dict())
    return EXIT_OK if report.satisfied else EXIT_INVALID


def cmd_reduction(args) -> int:
    g = io.load_game(args.game)
    if args.mu is not None:
        mu = io.load_rank_t(args.mu, g)
    else:
        mu, _ = learn_gadget_cce(g, args.T_rank)
    H = args.H if args.H is not None else guarantee_horizon(mu.rank, args.eps)
    rng = np.random.default_rng(args.seed)
    result = reduction_extract_bne(g, H, mu, args.eps, args.budget, rng)
    data = {"H": H, "rank": mu.rank, "epsilon": args.eps, "reduction": result.to_dict()}
    if args.rollouts > 0:
        est = kibitzer_deviation_utility(g, H, mu, args.eps, args.rollouts, rng)
        data["kibitzer_deviation"] = {
            "mean": est.mean.tolist(),
            "stderr": est.stderr.tolist(),
        }
    if args.out:
        io.write_json(_out_dir(args.out) / "reduction.json", data)
    _print_json(data)
    return EXIT_OK if result.success else EXIT_BUDGET


def cmd_counterexample(args) -> int:
    if args.n < 4:
        return _fail("n must be at least 4", EXIT_INVALID)
    result = counterexample_demo(args.n)
    if args.out:
        out = _out_dir(args.out)
        io.dump_game(counterexample_game(args.n), out / "game.json")
        for name, flag in (("mu_ce.json", False), ("mu_behaviorized.json", True)):
            mu = counterexample_mixture(args.n, behaviorized=flag)
            io.write_json(out / name, io.mixture_to_dict(mu))
    _print_json(
        {
            "n": args.n,
            "ce_gain": result.ce_gain,
            "behaviorized_gain": result.behaviorized_gain,
            "optimal_behaviorized_gain": result.optimal_behaviorized_gain,
            "mass_outside_windows": result.mass_outside_windows,
        }
    )
    return EXIT_OK


def cmd_bench(args) -> int:
    if args.game:
        g = io.load_game(args.game)
    else:
        g = random_game(np.random.default_rng(args.seed), (2, 2), (3, 3))
    params = _dynamics_params(args, g)
    start = time.perf_counter()
    trace = run_dynamics(g, params, seed=args.seed)
    mid = time.perf_counter()
    try:
        report = check_every_type_nfce(empirical_distribution(trace), g, 3 * args.eps)
    except ScaleCapError as exc:
        return _fail(str(exc), EXIT_CAP)
    end = time.perf_counter()
    _print_json(
        {
            "T": params.T,
            "dynamics_seconds": mid - start,
            "check_seconds": end - mid,
            "worst_gain": report.worst_gain,
        }
    )
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage, which is reserved for bound violations
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="equilearn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, game_required=True):
        p.add_argument("--game", required=game_required, help="game JSON file")
        p.add_argument("--seed", type=_seed, default=0)
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("run-dynamics", help="run multi-scale MWU and write trace, regrets, summary")
    common(p)
    p.add_argument("--eps", type=_epsilon, required=True)
    p.add_argument("--H", type=int, help="override the repetition length")
    p.add_argument("--reward-mode", type=_reward_mode, default=("exact", None))
    p.add_argument("--assert-bounds", action="store_true")
    p.add_argument("--corrupt-mwu", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_run_dynamics)

    p = sub.add_parser("check-eq", help="check a mixture-of-products for equilibrium")
    common(p)
    p.add_argument("--mu", required=True, help="mixture JSON file")
    p.add_argument("--eps", type=_check_level, required=True)
    p.add_argument("--mode", choices=("every-type", "ex-ante", "bne"), default="every-type")
    p.set_defaults(func=cmd_check_eq)

    p = sub.add_parser("reduction", help="extract a BNE from a rank-T gadget mixture")
    common(p)
    p.add_argument("--mu", help="mixture JSON file; learned by self-play if omitted")
    p.add_argument("--eps", type=_epsilon, required=True)
    p.add_argument("--H", type=int)
    p.add_argument("--T-rank", dest="T_rank", type=int, default=8)
    p.add_argument("--budget", type=int, default=1000)
    p.add_argument("--rollouts", type=int, default=100)
    p.set_defaults(func=cmd_reduction)

    p = sub.add_parser("counterexample", help="behaviorization counterexample")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--out", help="also write the game and mixtures here")
    p.set_defaults(func=cmd_counterexample)

    p = sub.add_parser("bench", help="time dynamics and the equilibrium check")
    common(p, game_required=False)
    p.add_argument("--eps", type=_epsilon, default=0.5)
    p.add_argument("--H", type=int)
    p.add_argument("--reward-mode", type=_reward_mode, default=("exact", None))
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for attr in ("H", "T_rank", "budget", "rollouts"):
        value = getattr(args, attr, None)
        if value is not None and value < (2 if attr == "H" else 1 if attr == "T_rank" else 0):
            return _fail(f"--{attr.replace('_', '-')} is out of range", EXIT_INVALID)
    try:
        return args.func(args)
    except (io.FormatError, GameError, ValueError) as exc:
        return _fail(str(exc), EXIT_INVALID)


if __name__ == "__main__":
    sys.exit(main())

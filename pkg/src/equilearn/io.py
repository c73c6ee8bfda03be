"""JSON and CSV formats for games, mixtures and run outputs.

Game JSON::

    {"players": m, "types": [K_1, ...], "actions": [n_1, ...],
     "prior": [... flat over types, row-major ...],
     "utilities": [[... player 1, flat over (types, actions) ...], ...]}

Mixture JSON::

    {"components": [[x_1, ..., x_m], ...], "weights": [...] (optional),
     "kibitzer": [xk, ...] (optional, one flat array per component)}

where each ``x_j`` is a ``K_j x n_j`` list of per-type action distributions.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from equilearn.bayes_game import BayesianGame, GameError, MixedStrategy, ProfileMixture
from equilearn.gadget import EfgProfile, RankTCce, kibitzer_actions


class FormatError(ValueError):
    """Malformed input file."""


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise FormatError(msg)


def game_from_dict(data: dict) -> BayesianGame:
    try:
        m = int(data["players"])
        types = tuple(int(k) for k in data["types"])
        actions = tuple(int(n) for n in data["actions"])
        prior = np.asarray(data["prior"], dtype=np.float64)
        utils = [np.asarray(u, dtype=np.float64) for u in data["utilities"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed game: {exc}") from exc
    _require(len(types) == m and len(actions) == m, "types/actions length must equal players")
    _require(len(utils) == m, "need one utility table per player")
    _require(prior.ndim == 1 and prior.size == int(np.prod(types)), "prior has the wrong length")
    size = int(np.prod(types)) * int(np.prod(actions))
    for j, u in enumerate(utils):
        _require(u.ndim == 1 and u.size == size, f"utilities of player {j} have the wrong length")
    try:
        return BayesianGame(
            types,
            actions,
            prior.reshape(types),
            tuple(u.reshape(types + actions) for u in utils),
        )
    except GameError as exc:
        raise FormatError(str(exc)) from exc


def game_to_dict(g: BayesianGame) -> dict:
    return {
        "players": g.num_players,
        "types": list(g.type_counts),
        "actions": list(g.action_counts),
        "prior": g.prior.ravel().tolist(),
        "utilities": [u.ravel().tolist() for u in g.utilities],
    }


def _read_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc


def write_json(path, data) -> None:
    Path(path).write_text(json.dumps(data, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def load_game(path) -> BayesianGame:
    return game_from_dict(_read_json(path))


def dump_game(g: BayesianGame, path) -> None:
    write_json(path, game_to_dict(g))


def _components(data: dict, g: BayesianGame) -> list[list[np.ndarray]]:
    try:
        raw = data["components"]
        comps = [[np.asarray(x, dtype=np.float64) for x in comp] for comp in raw]
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed mixture: {exc}") from exc
    _require(len(comps) > 0, "mixture needs at least one component")
    for c, comp in enumerate(comps):
        _require(len(comp) == g.num_players, f"component {c} has {len(comp)} players")
        for j, x in enumerate(comp):
            expected = (g.type_counts[j], g.action_counts[j])
            _require(x.shape == expected, f"component {c}, player {j}: shape {x.shape} != {expected}")
            _require(
                bool(np.all(x >= 0)) and bool(np.allclose(x.sum(axis=1), 1.0, atol=1e-9)),
                f"component {c}, player {j}: rows are not distributions",
            )
    return comps


def _weights(data: dict, count: int) -> np.ndarray | None:
    if "weights" not in data:
        return None
    w = np.asarray(data["weights"], dtype=np.float64)
    _require(w.shape == (count,), "weights must have one entry per component")
    _require(bool(np.all(w >= 0)) and abs(w.sum() - 1.0) <= 1e-9, "weights must form a distribution")
    return w


def mixture_from_dict(data: dict, g: BayesianGame) -> ProfileMixture:
    comps = _components(data, g)
    w = _weights(data, len(comps))
    profiles = [tuple(MixedStrategy(x[None]) for x in comp) for comp in comps]
    if w is None:
        return ProfileMixture.uniform(profiles)
    return ProfileMixture(tuple(profiles), w)


def rank_t_from_dict(data: dict, g: BayesianGame) -> RankTCce:
    """History-independent rank-``T`` mixture for the gadget game.

    Without a ``kibitzer`` entry the Kibitzer plays uniformly over actions
    whose type has positive probability.
    """
    comps = _components(data, g)
    _require("weights" not in data, "gadget mixtures use uniform weights")
    actions = kibitzer_actions(g)
    if "kibitzer" in data:
        kib = [np.asarray(x, dtype=np.float64) for x in data["kibitzer"]]
        _require(len(kib) == len(comps), "need one Kibitzer strategy per component")
        for x in kib:
            _require(x.shape == (len(actions),), "Kibitzer strategy has the wrong length")
    else:
        valid = np.array([g.type_marginal(a.target)[a.type] > 0 for a in actions], dtype=float)
        kib = [valid / valid.sum()] * len(comps)
    try:
        return RankTCce(tuple(EfgProfile.constant(c[0], c[1], k) for c, k in zip(comps, kib)))
    except ValueError as exc:
        raise FormatError(str(exc)) from exc


def load_mixture(path, g: BayesianGame) -> ProfileMixture:
    return mixture_from_dict(_read_json(path), g)


def load_rank_t(path, g: BayesianGame) -> RankTCce:
    return rank_t_from_dict(_read_json(path), g)


def profiles_to_dict(components: Sequence[Sequence[np.ndarray]], weights=None) -> dict:
    out: dict = {"components": [[np.asarray(x).tolist() for x in comp] for comp in components]}
    if weights is not None:
        out["weights"] = np.asarray(weights).tolist()
    return out


def mixture_to_dict(mu: ProfileMixture) -> dict:
    """Flatten every player's inner mixture into weighted product components."""
    comps, weights = [], []
    for profile, w in zip(mu.components, mu.weights):
        inner = [range(x.components.shape[0]) for x in profile]
        for pick in itertools.product(*inner):
            comps.append([x.components[c] for x, c in zip(profile, pick)])
            weights.append(w * math.prod(x.weights[c] for x, c in zip(profile, pick)))
    return profiles_to_dict(comps, weights)


def format_number(x) -> str:
    """Shortest decimal that round-trips to the same float."""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([v if isinstance(v, str) else format_number(v) for v in row])

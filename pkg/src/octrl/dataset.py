"""Offline datasets of infinitesimal samples ``(x_i, a_i, xdot_i[, r_x(x_i)])``.

Two on-disk formats are supported:

* JSON lines: one object per line with keys ``state``, ``action`` and either
  ``deriv`` or ``next_state`` + ``dt``; ``reward`` is optional.
* CSV with columns ``state_0..``, ``action_0..``, ``deriv_0..`` and an
  optional ``reward`` column.

Records given as transitions are converted to derivatives by a forward
difference on load.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import InputError, LoadError
from .io import fmt

__all__ = [
    "Dataset",
    "TransitionRecord",
    "finite_difference",
    "load_dataset",
    "save_dataset",
    "sample_iid",
    "sample_random_policy",
]


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Validated, immutable sample tables.

    Attributes
    ----------
    states, derivs : ndarray, shape (N, n_s)
    actions : ndarray, shape (N, n_a)
    state_rewards : ndarray, shape (N,), or None
    """

    states: np.ndarray
    actions: np.ndarray
    derivs: np.ndarray
    state_rewards: Optional[np.ndarray] = None

    def __post_init__(self):
        tables = {}
        for name in ("states", "actions", "derivs"):
            a = np.asarray(getattr(self, name), dtype=float)
            if a.ndim == 1:
                a = a[:, None]
            if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
                raise InputError(f"{name} must be a non-empty 2-d table, got shape {a.shape}")
            tables[name] = a
        n = tables["states"].shape[0]
        if tables["actions"].shape[0] != n or tables["derivs"].shape[0] != n:
            raise InputError("states, actions and derivs must have the same number of rows")
        if tables["derivs"].shape[1] != tables["states"].shape[1]:
            raise InputError("derivs must have the same width as states")
        for name, a in tables.items():
            if not np.all(np.isfinite(a)):
                raise InputError(f"{name} contains non-finite entries")
            object.__setattr__(self, name, _readonly(a))
        if self.state_rewards is not None:
            r = np.asarray(self.state_rewards, dtype=float).reshape(-1)
            if r.shape != (n,):
                raise InputError(f"state_rewards must have length {n}, got {r.shape}")
            if not np.all(np.isfinite(r)):
                raise InputError("state_rewards contains non-finite entries")
            object.__setattr__(self, "state_rewards", _readonly(r))

    @property
    def n(self) -> int:
        return self.states.shape[0]

    @property
    def n_s(self) -> int:
        return self.states.shape[1]

    @property
    def n_a(self) -> int:
        return self.actions.shape[1]

    def with_rewards(self, rewards) -> "Dataset":
        return Dataset(self.states, self.actions, self.derivs, rewards)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        same_r = (self.state_rewards is None) == (other.state_rewards is None) and (
            self.state_rewards is None or np.array_equal(self.state_rewards, other.state_rewards)
        )
        return (
            np.array_equal(self.states, other.states)
            and np.array_equal(self.actions, other.actions)
            and np.array_equal(self.derivs, other.derivs)
            and same_r
        )

    __hash__ = None


@dataclass(frozen=True)
class TransitionRecord:
    state: np.ndarray
    action: np.ndarray
    next_state: np.ndarray
    dt: float
    reward: Optional[float] = None


def finite_difference(record: TransitionRecord) -> np.ndarray:
    """Forward difference ``(next_state - state) / dt``."""
    if not record.dt > 0:
        raise InputError(f"dt must be positive, got {record.dt}")
    x = np.asarray(record.state, dtype=float)
    xn = np.asarray(record.next_state, dtype=float)
    if x.shape != xn.shape:
        raise InputError(f"state and next_state differ in shape: {x.shape} vs {xn.shape}")
    return (xn - x) / record.dt


# --- file formats -------------------------------------------------------------


def _vec(obj, key, lineno):
    try:
        v = np.atleast_1d(np.asarray(obj[key], dtype=float))
    except KeyError:
        raise LoadError(f"line {lineno}: missing field {key!r}") from None
    except (TypeError, ValueError):
        raise LoadError(f"line {lineno}: field {key!r} is not numeric") from None
    if v.ndim != 1 or not np.all(np.isfinite(v)):
        raise LoadError(f"line {lineno}: field {key!r} must be a finite vector")
    return v


def _record_to_row(obj, lineno):
    if not isinstance(obj, dict):
        raise LoadError(f"line {lineno}: expected a JSON object")
    x = _vec(obj, "state", lineno)
    a = _vec(obj, "action", lineno)
    if "deriv" in obj:
        d = _vec(obj, "deriv", lineno)
    elif "next_state" in obj and "dt" in obj:
        xn = _vec(obj, "next_state", lineno)
        try:
            dt = float(obj["dt"])
        except (TypeError, ValueError):
            raise LoadError(f"line {lineno}: dt is not numeric") from None
        try:
            d = finite_difference(TransitionRecord(x, a, xn, dt))
        except InputError as exc:
            raise LoadError(f"line {lineno}: {exc}") from None
    else:
        raise LoadError(f"line {lineno}: record needs 'deriv' or 'next_state' and 'dt'")
    r = obj.get("reward")
    if r is not None:
        try:
            r = float(r)
        except (TypeError, ValueError):
            raise LoadError(f"line {lineno}: reward is not numeric") from None
        if not math.isfinite(r):
            raise LoadError(f"line {lineno}: reward is not finite")
    return x, a, d, r


def _assemble(rows, path):
    if not rows:
        raise LoadError(f"{path}: dataset is empty")
    lineno0, (x0, a0, d0, r0) = rows[0]
    has_r = r0 is not None
    for lineno, (x, a, d, r) in rows:
        if x.shape != x0.shape or a.shape != a0.shape or d.shape != x0.shape:
            raise LoadError(f"line {lineno}: dimensions differ from line {lineno0}")
        if (r is not None) != has_r:
            raise LoadError(f"line {lineno}: reward present on some records but not others")
    X = np.array([row[1][0] for row in rows])
    A = np.array([row[1][1] for row in rows])
    D = np.array([row[1][2] for row in rows])
    R = np.array([row[1][3] for row in rows]) if has_r else None
    return Dataset(X, A, D, R)


def _load_jsonl(path):
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise LoadError(f"line {lineno}: invalid JSON ({exc.msg})") from None
            rows.append((lineno, _record_to_row(obj, lineno)))
    return _assemble(rows, path)


def _columns(header, prefix):
    idx = sorted(
        ((int(h[len(prefix) :]), j) for j, h in enumerate(header) if h.startswith(prefix) and h[len(prefix) :].isdigit()),
    )
    if [i for i, _ in idx] != list(range(len(idx))):
        raise LoadError(f"columns {prefix}* must be numbered 0..n-1")
    return [j for _, j in idx]


def _load_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise LoadError(f"{path}: dataset is empty") from None
        sc, ac, dc = _columns(header, "state_"), _columns(header, "action_"), _columns(header, "deriv_")
        nc = _columns(header, "next_state_")
        if not sc or not ac or not (dc or nc):
            raise LoadError("line 1: header needs state_i, action_i and deriv_i (or next_state_i and dt) columns")
        rc = header.index("reward") if "reward" in header else None
        tc = header.index("dt") if "dt" in header else None
        rows = []
        for lineno, raw in enumerate(reader, start=2):
            if not raw or all(not c.strip() for c in raw):
                continue
            if len(raw) != len(header):
                raise LoadError(f"line {lineno}: expected {len(header)} fields, got {len(raw)}")
            obj = {"state": [raw[j] for j in sc], "action": [raw[j] for j in ac]}
            if dc:
                obj["deriv"] = [raw[j] for j in dc]
            else:
                obj["next_state"] = [raw[j] for j in nc]
                obj["dt"] = raw[tc] if tc is not None else None
            if rc is not None and raw[rc].strip() != "":
                obj["reward"] = raw[rc]
            rows.append((lineno, _record_to_row(obj, lineno)))
    return _assemble(rows, path)


def load_dataset(path, format: Optional[str] = None) -> Dataset:
    """Read a dataset file; ``format`` defaults to the file extension."""
    path = Path(path)
    fmt_ = (format or path.suffix.lstrip(".")).lower()
    if fmt_ in ("jsonl", "json", "ndjson"):
        return _load_jsonl(path)
    if fmt_ == "csv":
        return _load_csv(path)
    raise InputError(f"unknown dataset format {fmt_!r}; use 'jsonl' or 'csv'")


def save_dataset(dataset: Dataset, path, format: Optional[str] = None) -> Path:
    """Write ``dataset`` in a format :func:`load_dataset` reads back exactly."""
    path = Path(path)
    fmt_ = (format or path.suffix.lstrip(".") or "jsonl").lower()
    path.parent.mkdir(parents=True, exist_ok=True)
    has_r = dataset.state_rewards is not None
    if fmt_ in ("jsonl", "json", "ndjson"):
        with open(path, "w") as fh:
            for i in range(dataset.n):
                rec = {
                    "state": dataset.states[i].tolist(),
                    "action": dataset.actions[i].tolist(),
                    "deriv": dataset.derivs[i].tolist(),
                }
                if has_r:
                    rec["reward"] = float(dataset.state_rewards[i])
                fh.write(json.dumps(rec) + "\n")
    elif fmt_ == "csv":
        header = (
            [f"state_{j}" for j in range(dataset.n_s)]
            + [f"action_{j}" for j in range(dataset.n_a)]
            + [f"deriv_{j}" for j in range(dataset.n_s)]
            + (["reward"] if has_r else [])
        )
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for i in range(dataset.n):
                row = [*dataset.states[i], *dataset.actions[i], *dataset.derivs[i]]
                if has_r:
                    row.append(dataset.state_rewards[i])
                w.writerow([fmt(float(v)) for v in row])
    else:
        raise InputError(f"unknown dataset format {fmt_!r}; use 'jsonl' or 'csv'")
    return path


# --- synthetic generation -----------------------------------------------------


def _box(box, dim, name):
    lo, hi = (np.broadcast_to(np.asarray(b, dtype=float), (dim,)) for b in box)
    if np.any(lo > hi):
        raise InputError(f"{name} box has lower bound above upper bound")
    return lo, hi


def sample_iid(env, state_region, action_region, N: int, h: float = 1e-3, rng_seed: int = 0, exact_drift: bool = False) -> Dataset:
    """Draw i.i.d. uniform state-action pairs and one-step derivative estimates.

    Each derivative is ``(x' - x) / h`` where ``x'`` is one Euler-Maruyama step
    of length ``h`` from ``x`` under action ``a``; it is therefore the drift
    ``f(x) + G(x) a`` plus Gaussian noise with standard deviation
    ``sqrt(2 eps / h)``. ``exact_drift=True`` skips the noise and returns the
    drift itself.
    """
    from .envs import em_step

    if N < 1:
        raise InputError(f"N must be >= 1, got {N}")
    if not h > 0:
        raise InputError(f"h must be positive, got {h}")
    slo, shi = _box(state_region, env.n_s, "state")
    alo, ahi = _box(action_region, env.n_a, "action")
    rng = np.random.default_rng(rng_seed)
    X = rng.uniform(slo, shi, size=(N, env.n_s))
    A = rng.uniform(alo, ahi, size=(N, env.n_a))
    if exact_drift:
        D = env.drift_and_control(X, A)
    else:
        Xn = em_step(env, X, A, h, rng)
        D = (Xn - X) / h
    return Dataset(X, A, D, env.state_reward(X))


def sample_random_policy(env, N: int, episodes: Optional[int] = None, rng_seed: int = 0) -> Dataset:
    """Collect uniform-random-action episodes and subsample ``N`` transitions.

    Episodes start from ``env.sample_initial`` and run ``env.horizon`` steps
    of length ``env.dt_sim``; derivatives are forward differences of
    consecutive states. By default enough episodes are run to make the pool
    five times larger than ``N``.
    """
    from .envs import em_step

    if N < 1:
        raise InputError(f"N must be >= 1, got {N}")
    if episodes is None:
        episodes = max(1, -(-5 * N // env.horizon))
    if episodes * env.horizon < N:
        raise InputError(f"{episodes} episodes of {env.horizon} steps cannot supply {N} samples")
    rng = np.random.default_rng(rng_seed)
    alo, ahi = (np.asarray(b, dtype=float) for b in env.action_box)
    X = env.sample_initial(rng, episodes)
    states, actions, nexts = [], [], []
    for _ in range(env.horizon):
        A = rng.uniform(alo, ahi, size=(episodes, env.n_a))
        Xn = em_step(env, X, A, env.dt_sim, rng)
        states.append(X)
        actions.append(A)
        nexts.append(Xn)
        X = Xn
    S, U, S2 = np.concatenate(states), np.concatenate(actions), np.concatenate(nexts)
    idx = np.sort(rng.choice(S.shape[0], size=N, replace=False))
    X = S[idx]
    return Dataset(X, U[idx], (S2[idx] - X) / env.dt_sim, env.state_reward(X))

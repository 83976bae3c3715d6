"""Experiment configuration: flat key-value files, validation, hashing.

The on-disk format is one ``key = value`` pair per line, ``#`` comments,
keys namespaced by prefix (``network.``, ``model.``, ``run.``,
``policy.``).  Unknown keys are rejected with their names.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from spreadlab import graph
from spreadlab.spread import ModelParams


class ConfigError(ValueError):
    pass


@dataclass
class NetworkSpec:
    kind: str = "ws"
    n: int = 300
    d: int = 4
    delta: float = 0.03
    exponent: float = 2.5
    m: int = 10
    p1: float = 0.2736
    p2: float = 0.02
    path: str = ""
    replicate: int = 1
    compress: int = 1


@dataclass
class ExperimentConfig:
    network: NetworkSpec = field(default_factory=NetworkSpec)
    beta: float = 0.4
    lam: float = 0.5
    gamma: float = 0.1
    latent: bool = True
    n0: int = 3
    ell: int = 3
    horizon: int = 30
    policy: str = "reer"
    policy_params: dict = field(default_factory=dict)
    budget_mode: str = "infected"
    budget_k: int = 0
    alpha: float = 1.0
    update: str = "bf"
    reps: int = 1
    seed: int = 0
    dump_beliefs: bool = False
    on_conflict: str = "evidence"

    def model_params(self) -> ModelParams:
        return ModelParams(
            beta=self.beta, lam=self.lam, gamma=self.gamma, latent_enabled=self.latent
        )

    def validate(self) -> None:
        errors = []
        net = self.network
        if net.kind not in ("line", "ws", "sf", "sbm", "vsbm", "file"):
            errors.append(f"network.kind: unknown kind {net.kind!r}")
        if net.kind == "file" and not net.path:
            errors.append("network.path: required for kind=file")
        if net.kind != "file" and net.n < 2:
            errors.append(f"network.n: must be >= 2, got {net.n}")
        for name in ("beta", "lam", "gamma"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                errors.append(f"model.{name}: must be in [0,1], got {v}")
        if self.n0 < 0:
            errors.append(f"run.n0: must be >= 0, got {self.n0}")
        if self.ell < 0:
            errors.append(f"run.ell: must be >= 0, got {self.ell}")
        if self.horizon < 1:
            errors.append(f"run.horizon: must be >= 1, got {self.horizon}")
        if self.ell + 1 > self.horizon:
            errors.append(
                f"run.ell: delay {self.ell} leaves no policy days in horizon {self.horizon}"
            )
        if not (0.0 <= self.alpha <= 1.0):
            errors.append(f"run.alpha: must be in [0,1], got {self.alpha}")
        if self.update not in ("bf", "naive"):
            errors.append(f"run.update: must be bf or naive, got {self.update!r}")
        if self.budget_mode not in ("infected", "fixed"):
            errors.append(f"run.budget: must be 'infected' or 'fixed:K', got {self.budget_mode!r}")
        if self.reps < 1:
            errors.append(f"run.reps: must be >= 1, got {self.reps}")
        if self.on_conflict not in ("error", "evidence"):
            errors.append(f"run.on_conflict: must be error or evidence, got {self.on_conflict!r}")
        if errors:
            raise ConfigError("; ".join(errors))

    def to_items(self) -> list[tuple[str, str]]:
        net = self.network
        items = [
            ("network.kind", net.kind),
            ("network.n", net.n),
            ("network.d", net.d),
            ("network.delta", net.delta),
            ("network.exponent", net.exponent),
            ("network.m", net.m),
            ("network.p1", net.p1),
            ("network.p2", net.p2),
            ("network.path", net.path),
            ("network.replicate", net.replicate),
            ("network.compress", net.compress),
            ("model.beta", self.beta),
            ("model.lambda", self.lam),
            ("model.gamma", self.gamma),
            ("model.latent", self.latent),
            ("run.n0", self.n0),
            ("run.ell", self.ell),
            ("run.horizon", self.horizon),
            ("run.policy", self.policy),
            ("run.budget", self.budget_mode if self.budget_mode == "infected" else f"fixed:{self.budget_k}"),
            ("run.alpha", self.alpha),
            ("run.update", self.update),
            ("run.reps", self.reps),
            ("run.seed", self.seed),
            ("run.dump_beliefs", self.dump_beliefs),
            ("run.on_conflict", self.on_conflict),
        ]
        for key in sorted(self.policy_params):
            items.append((f"policy.{key}", self.policy_params[key]))
        return [(k, _fmt(v)) for k, v in items]

    def to_text(self) -> str:
        return "\n".join(f"{k} = {v}" for k, v in self.to_items()) + "\n"

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()[:16]


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_bool(raw: str, key: str) -> bool:
    low = raw.lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {raw!r}")


def parse_items(items) -> ExperimentConfig:
    cfg = ExperimentConfig()
    for key, raw in items:
        try:
            _apply(cfg, key, raw)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"{key}: bad value {raw!r} ({exc})") from None
    return cfg


def _apply(cfg: ExperimentConfig, key: str, raw: str) -> None:
    net = cfg.network
    simple = {
        "network.kind": lambda v: setattr(net, "kind", v),
        "network.n": lambda v: setattr(net, "n", int(v)),
        "network.d": lambda v: setattr(net, "d", int(v)),
        "network.delta": lambda v: setattr(net, "delta", float(v)),
        "network.exponent": lambda v: setattr(net, "exponent", float(v)),
        "network.m": lambda v: setattr(net, "m", int(v)),
        "network.p1": lambda v: setattr(net, "p1", float(v)),
        "network.p2": lambda v: setattr(net, "p2", float(v)),
        "network.path": lambda v: setattr(net, "path", v),
        "network.replicate": lambda v: setattr(net, "replicate", int(v)),
        "network.compress": lambda v: setattr(net, "compress", int(v)),
        "model.beta": lambda v: setattr(cfg, "beta", float(v)),
        "model.lambda": lambda v: setattr(cfg, "lam", float(v)),
        "model.gamma": lambda v: setattr(cfg, "gamma", float(v)),
        "model.latent": lambda v: setattr(cfg, "latent", _parse_bool(v, key)),
        "run.n0": lambda v: setattr(cfg, "n0", int(v)),
        "run.ell": lambda v: setattr(cfg, "ell", int(v)),
        "run.horizon": lambda v: setattr(cfg, "horizon", int(v)),
        "run.policy": lambda v: setattr(cfg, "policy", v),
        "run.alpha": lambda v: setattr(cfg, "alpha", float(v)),
        "run.update": lambda v: setattr(cfg, "update", v),
        "run.reps": lambda v: setattr(cfg, "reps", int(v)),
        "run.seed": lambda v: setattr(cfg, "seed", int(v)),
        "run.dump_beliefs": lambda v: setattr(cfg, "dump_beliefs", _parse_bool(v, key)),
        "run.on_conflict": lambda v: setattr(cfg, "on_conflict", v),
    }
    if key in simple:
        simple[key](raw)
    elif key == "run.budget":
        if raw == "infected":
            cfg.budget_mode = "infected"
        elif raw.startswith("fixed:"):
            cfg.budget_mode = "fixed"
            cfg.budget_k = int(raw.split(":", 1)[1])
        else:
            raise ConfigError(f"run.budget: expected 'infected' or 'fixed:K', got {raw!r}")
    elif key.startswith("policy."):
        cfg.policy_params[key.split(".", 1)[1]] = raw
    else:
        raise ConfigError(f"unknown config key {key!r}")


def load_config(path) -> ExperimentConfig:
    items = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{line_no}: expected 'key = value'")
            key, _, value = line.partition("=")
            items.append((key.strip(), value.strip()))
    return parse_items(items)


def build_network(spec: NetworkSpec, rng: np.random.Generator) -> graph.ContactNetwork:
    """Instantiate the configured network (generator seeded from rng)."""
    seed = int(rng.integers(2**63)) if spec.kind != "file" else None
    if spec.kind == "line":
        return graph.gen_line(spec.n)
    if spec.kind == "ws":
        return graph.gen_watts_strogatz(spec.n, spec.d, spec.delta, seed)
    if spec.kind == "sf":
        return graph.gen_scale_free(spec.n, spec.exponent, seed)
    if spec.kind == "sbm":
        return graph.gen_sbm(spec.n, spec.m, spec.p1, spec.p2, "standard", seed)
    if spec.kind == "vsbm":
        return graph.gen_sbm(spec.n, spec.m, spec.p1, spec.p2, "chain", seed)
    if spec.kind == "file":
        return graph.load_temporal_edges(
            spec.path, replicate_k=spec.replicate, compress_k=spec.compress
        )
    raise ConfigError(f"unknown network kind {spec.kind!r}")

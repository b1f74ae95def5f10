"""Run configuration: YAML file plus ``dotted.key=value`` overrides."""
import copy
from dataclasses import dataclass, field

import yaml

from .errors import ConfigError

SUBCOMMANDS = ("simulate", "hit", "capacity", "invariant", "recurrence", "verify")


@dataclass
class RunConfig:
    subcommand: str
    seed: int = 0
    workers: int = 1
    out: str = "out"
    experiment: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)  # the subcommand's own section

    def validate(self):
        if self.subcommand not in SUBCOMMANDS:
            raise ConfigError(f"subcommand: unknown {self.subcommand!r}; choose from {', '.join(SUBCOMMANDS)}")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ConfigError("seed: must be an integer in [0, 2^64)")
        if not isinstance(self.workers, int) or self.workers < 1:
            raise ConfigError("workers: must be a positive integer")
        if not isinstance(self.experiment, dict) or not isinstance(self.params, dict):
            raise ConfigError("experiment: must be a mapping")
        return self

    def to_dict(self):
        return {"subcommand": self.subcommand, "seed": self.seed, "workers": self.workers, "out": self.out,
                "experiment": copy.deepcopy(self.experiment), self.subcommand: copy.deepcopy(self.params)}


def parse_value(text):
    """Typed value of an override right-hand side (YAML scalar or flow syntax)."""
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse override value {text!r}: {exc}") from None


def apply_override(tree, assignment):
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not of the form key=value")
    key, _, text = assignment.partition("=")
    path = [p for p in key.strip().split(".") if p]
    if not path:
        raise ConfigError(f"override {assignment!r} has an empty key")
    node = tree
    for i, part in enumerate(path[:-1]):
        nxt = node.get(part)
        if nxt is None:
            nxt = node[part] = {}
        if not isinstance(nxt, dict):
            raise ConfigError(f"{'.'.join(path[:i + 1])}: is a leaf, cannot set {key}")
        node = nxt
    node[path[-1]] = parse_value(text)


def load(path=None, subcommand=None, overrides=(), seed=None, workers=None, out=None):
    """Read, override and validate a run configuration."""
    tree = {}
    if path is not None:
        try:
            with open(path) as fh:
                tree = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"config {path} is not valid YAML: {exc}") from None
    if not isinstance(tree, dict):
        raise ConfigError("config: top level must be a mapping")
    for item in overrides:
        apply_override(tree, item)
    sub = subcommand or tree.get("subcommand")
    if tree.get("subcommand") not in (None, sub):
        raise ConfigError(f"subcommand: config says {tree['subcommand']!r} but {sub!r} was requested")
    known = {"subcommand", "seed", "workers", "out", "experiment", *SUBCOMMANDS}
    extra = sorted(set(tree) - known)
    if extra:
        raise ConfigError(f"{extra[0]}: unknown top-level field")
    cfg = RunConfig(
        subcommand=sub,
        seed=tree.get("seed", 0) if seed is None else seed,
        workers=tree.get("workers", 1) if workers is None else workers,
        out=tree.get("out", "out") if out is None else out,
        experiment=tree.get("experiment") or {},
        params=tree.get(sub) or {},
    )
    return cfg.validate()

"""Experiment configuration: a sectioned INI file mapped onto the module configs.

Sections and keys::

    [process]  type (ou|arma), mode (exact|euler), equilibrium_price,
               reversion_rate, volatility, ar_coeffs, ma_coeffs
    [env]      EnvConfig trading fields
    [train]    TrainConfig fields, plus seed and fast
    [eval]     n_paths, seed_base, deterministic
    [penalty]  name, weight, pairs, placement
    [io]       out, write_traces

Unknown sections or keys are rejected. Keys left out take their defaults.
"""
from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .errors import ConfigError
from .eval import DEFAULT_EVAL_SEED_BASE
from .penalty import PENALTIES
from .ppo import TrainConfig
from .process_sim import ArmaParams, OuParams, Params
from .trading_env import EnvConfig

__all__ = ["ExperimentConfig", "EvalSettings", "PenaltySettings", "load_config", "DEFAULT_PENALTY_WEIGHT"]

# penalty weight in reward currency units: about 0.05 of the default reward scale
DEFAULT_PENALTY_WEIGHT = 125.0

_ENV_KEYS = ("risk_aversion", "tick", "lot", "half_spread_ticks", "max_holding", "max_trade", "episode_length")
_PROCESS_KEYS = ("type", "mode", "equilibrium_price", "reversion_rate", "volatility", "ar_coeffs", "ma_coeffs")


@dataclass(frozen=True)
class EvalSettings:
    n_paths: int = 200
    seed_base: int = DEFAULT_EVAL_SEED_BASE
    deterministic: bool = True

    def __post_init__(self):
        if self.n_paths < 0:
            raise ConfigError("eval.n_paths must be >= 0")
        if not 0 <= self.seed_base < 2**64:
            raise ConfigError("eval.seed_base must fit in 64 bits")


@dataclass(frozen=True)
class PenaltySettings:
    name: str = "mean_reversion"
    weight: float = DEFAULT_PENALTY_WEIGHT
    pairs: int = 256
    placement: str = "terminal"

    def __post_init__(self):
        if self.name not in PENALTIES:
            raise ConfigError(f"unknown penalty {self.name!r}; choose from {sorted(PENALTIES)}")
        if self.weight < 0 or self.pairs < 0:
            raise ConfigError("penalty.weight and penalty.pairs must be >= 0")


@dataclass(frozen=True)
class ExperimentConfig:
    process: Params = field(default_factory=OuParams)
    mode: str = "exact"
    env: EnvConfig = field(default_factory=EnvConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    seed: int = 0
    eval: EvalSettings = field(default_factory=EvalSettings)
    penalty: PenaltySettings = field(default_factory=PenaltySettings)
    out: str = "out"
    write_traces: bool = False

    @property
    def process_type(self) -> str:
        return "ou" if isinstance(self.process, OuParams) else "arma"

    @property
    def sim_mode(self) -> str:
        return self.mode if self.process_type == "ou" else "arma"

    def env_for(self, model: str) -> EnvConfig:
        """Environment of the plain agent (``A``) or the penalised agent (``B``)."""
        base = self.env.to_dict()
        if model == "A":
            base.update(penalty_weight=0.0)
        elif model == "B":
            p = self.penalty
            base.update(penalty=p.name, penalty_weight=p.weight, penalty_pairs_per_episode=p.pairs,
                        penalty_placement=p.placement)
        else:
            raise ValueError(f"model must be 'A' or 'B', got {model!r}")
        return EnvConfig(**base)

    def to_dict(self) -> dict:
        proc = {"type": self.process_type, "mode": self.mode,
                "equilibrium_price": self.process.equilibrium_price}
        if isinstance(self.process, OuParams):
            proc.update(reversion_rate=self.process.reversion_rate, volatility=self.process.volatility)
        else:
            proc.update(ar_coeffs=list(self.process.ar_coeffs), ma_coeffs=list(self.process.ma_coeffs))
        env = {k: getattr(self.env, k) for k in _ENV_KEYS}
        train = self.train.to_dict()
        train["seed"] = self.seed
        return {
            "process": proc,
            "env": env,
            "train": train,
            "eval": {f.name: getattr(self.eval, f.name) for f in fields(EvalSettings)},
            "penalty": {f.name: getattr(self.penalty, f.name) for f in fields(PenaltySettings)},
            "io": {"out": self.out, "write_traces": self.write_traces},
        }

    def hash(self) -> str:
        """Short digest of the result-affecting settings (``io`` excluded)."""
        d = self.to_dict()
        d.pop("io")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def write_ini(self, dest: str | Path) -> None:
        parser = configparser.ConfigParser()
        for section, values in self.to_dict().items():
            if section == "train":
                values = dict(values)
                values.pop("recurrent", None)
            parser[section] = {k: _format(v) for k, v in values.items() if v is not None}
        with open(dest, "w") as fh:
            fh.write(f"# effective configuration, hash {self.hash()}\n")
            parser.write(fh)


def _format(value) -> str:
    if isinstance(value, (list, tuple)):
        return ", ".join(_format(v) for v in value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_bool(section: str, key: str, raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"[{section}] {key}: expected a boolean, got {raw!r}")


def _parse_floats(section: str, key: str, raw: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in raw.replace(",", " ").split())
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: {exc}") from None


def _coerce(section: str, key: str, raw: str, like):
    try:
        if isinstance(like, bool):
            return _parse_bool(section, key, raw)
        if isinstance(like, int):
            return int(raw)
        if isinstance(like, float) or like is None:
            return float(raw)
        if isinstance(like, tuple):
            return tuple(int(v) for v in raw.replace(",", " ").split())
        return raw.strip()
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: {exc}") from None


_SECTIONS = ("process", "env", "train", "eval", "penalty", "io")


def _check_keys(parser: configparser.ConfigParser, section: str, allowed) -> dict[str, str]:
    if not parser.has_section(section):
        return {}
    values = dict(parser[section])
    unknown = sorted(set(values) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(unknown)}")
    return values


def load_config(path: str | Path | None = None, fast: bool = False, overrides: dict | None = None) -> ExperimentConfig:
    """Build an :class:`ExperimentConfig` from an INI file.

    ``fast`` starts the training section from the desk-scale preset rather
    than the full-scale defaults; values in the file refine either base.
    ``overrides`` maps ``"section.key"`` to raw strings and wins over the file.
    """
    parser = configparser.ConfigParser()
    if path is not None:
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
    for dotted, raw in (overrides or {}).items():
        section, key = dotted.split(".", 1)
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, key, str(raw))
    unknown = sorted(set(parser.sections()) - set(_SECTIONS))
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(unknown)}")

    try:
        proc = _check_keys(parser, "process", _PROCESS_KEYS)
        kind = proc.pop("type", "ou").strip().lower()
        mode = proc.pop("mode", "exact").strip().lower()
        if mode not in ("exact", "euler"):
            raise ConfigError(f"[process] mode must be exact or euler, got {mode!r}")
        if kind == "ou":
            bad = {"ar_coeffs", "ma_coeffs"} & set(proc)
            if bad:
                raise ConfigError(f"[process] {', '.join(sorted(bad))} only apply to type = arma")
            process = OuParams(**{k: float(v) for k, v in proc.items()})
        elif kind == "arma":
            bad = {"reversion_rate", "volatility"} & set(proc)
            if bad:
                raise ConfigError(f"[process] {', '.join(sorted(bad))} only apply to type = ou")
            kw = {}
            if "equilibrium_price" in proc:
                kw["equilibrium_price"] = float(proc["equilibrium_price"])
            for key in ("ar_coeffs", "ma_coeffs"):
                if key in proc:
                    vals = _parse_floats("process", key, proc[key])
                    if len(vals) != 2:
                        raise ConfigError(f"[process] {key} needs two values")
                    kw[key] = vals
            process = ArmaParams(**kw)
        else:
            raise ConfigError(f"[process] type must be ou or arma, got {kind!r}")

        env_raw = _check_keys(parser, "env", _ENV_KEYS)
        env_default = EnvConfig()
        env = EnvConfig(**{k: _coerce("env", k, v, getattr(env_default, k)) for k, v in env_raw.items()})

        train_names = [n for n in TrainConfig.field_names() if n != "recurrent"]
        train_raw = _check_keys(parser, "train", train_names + ["seed", "fast"])
        seed = int(train_raw.pop("seed", 0))
        if "fast" in train_raw:
            fast = _parse_bool("train", "fast", train_raw.pop("fast")) or fast
        base = TrainConfig.fast() if fast else TrainConfig()
        train_kw = {k: _coerce("train", k, v, getattr(base, k)) for k, v in train_raw.items()}
        train = replace(base, **train_kw)

        eval_raw = _check_keys(parser, "eval", [f.name for f in fields(EvalSettings)])
        ev_default = EvalSettings()
        ev = EvalSettings(**{k: _coerce("eval", k, v, getattr(ev_default, k)) for k, v in eval_raw.items()})

        pen_raw = _check_keys(parser, "penalty", [f.name for f in fields(PenaltySettings)])
        pen_default = PenaltySettings()
        pen = PenaltySettings(**{k: _coerce("penalty", k, v, getattr(pen_default, k)) for k, v in pen_raw.items()})
        # validates placement and the remaining environment invariants
        EnvConfig(**{**env.to_dict(), "penalty": pen.name, "penalty_weight": pen.weight,
                     "penalty_pairs_per_episode": pen.pairs, "penalty_placement": pen.placement})

        io_raw = _check_keys(parser, "io", ["out", "write_traces"])
        out = io_raw.get("out", "out")
        write_traces = _parse_bool("io", "write_traces", io_raw["write_traces"]) if "write_traces" in io_raw else False
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None

    return ExperimentConfig(process=process, mode=mode, env=env, train=train, seed=seed, eval=ev,
                            penalty=pen, out=out, write_traces=write_traces)

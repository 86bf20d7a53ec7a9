"""Experiment configuration: one TOML (or JSON) file with sections
[model], [scm], [data], [train] (plus [train.loss_weights] and
[train.mixup]), and [eval]. Keys mirror the config dataclass fields.

Unknown keys and overrides that do not name an existing key are rejected,
so typos fail loudly. Dotted overrides ("train.gamma_max=0") parse their
value as a TOML literal with a string fallback.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib  # py >= 3.11
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from .errors import ConfigError
from .losses import LossWeights
from .mixup import MixupConfig
from .scm import NoiseScales, ScmSpec
from .engine import ModelConfig, TrainConfig


@dataclass
class DataConfig:
    path: str | None = None
    target_domain: int | None = None


@dataclass
class EvalConfig:
    seeds: tuple[int, ...] = (0, 1, 2)
    ablations: tuple[tuple[str, ...], ...] = ()
    embedding_encoding: str = "list"


@dataclass
class ExperimentConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    scm: ScmSpec = field(default_factory=ScmSpec)
    data: DataConfig = field(default_factory=DataConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)


# paths whose sub-keys are free-form (user-named modalities)
_OPEN_TABLES = {"scm.modality_dims"}


def train_config_to_dict(cfg: TrainConfig) -> dict:
    return {
        "loss_weights": {"alpha1": cfg.loss_weights.alpha1, "alpha2": cfg.loss_weights.alpha2,
                         "alpha3": cfg.loss_weights.alpha3, "tau": cfg.loss_weights.tau},
        "mixup": {"beta_a": cfg.mixup.beta_a, "beta_b": cfg.mixup.beta_b,
                  "enabled": cfg.mixup.enabled},
        "batch_size": cfg.batch_size,
        "total_iterations": cfg.total_iterations,
        "lr_init": cfg.lr_init,
        "lr_final": cfg.lr_final,
        "gamma_max": cfg.gamma_max,
        "gamma_ramp_iters": cfg.gamma_ramp_iters,
        "disc_steps_per_cycle": cfg.disc_steps_per_cycle,
        "task_steps_per_cycle": cfg.task_steps_per_cycle,
        "adam_beta1": cfg.adam_beta1,
        "adam_beta2": cfg.adam_beta2,
        "adam_eps": cfg.adam_eps,
        "seed": cfg.seed,
        "checkpoint_every": cfg.checkpoint_every,
        "eval_every": cfg.eval_every,
        "val_fraction": cfg.val_fraction,
        "domain_balanced": cfg.domain_balanced,
        "disable": list(cfg.disable),
    }


def train_config_from_dict(d: dict) -> TrainConfig:
    lw = d.get("loss_weights", {})
    mx = d.get("mixup", {})
    return TrainConfig(
        loss_weights=LossWeights(alpha1=float(lw.get("alpha1", 1.0)),
                                 alpha2=float(lw.get("alpha2", 3.0)),
                                 alpha3=float(lw.get("alpha3", 1.0)),
                                 tau=float(lw.get("tau", 0.7))),
        mixup=MixupConfig(beta_a=float(mx.get("beta_a", 2.0)),
                          beta_b=float(mx.get("beta_b", 2.0)),
                          enabled=bool(mx.get("enabled", True))),
        batch_size=int(d.get("batch_size", 16)),
        total_iterations=int(d.get("total_iterations", 3000)),
        lr_init=float(d.get("lr_init", 0.002)),
        lr_final=float(d.get("lr_final", 2e-5)),
        gamma_max=float(d.get("gamma_max", 10.0)),
        gamma_ramp_iters=int(d.get("gamma_ramp_iters", 400)),
        disc_steps_per_cycle=int(d.get("disc_steps_per_cycle", 1)),
        task_steps_per_cycle=int(d.get("task_steps_per_cycle", 1)),
        adam_beta1=float(d.get("adam_beta1", 0.9)),
        adam_beta2=float(d.get("adam_beta2", 0.999)),
        adam_eps=float(d.get("adam_eps", 1e-8)),
        seed=int(d.get("seed", 0)),
        checkpoint_every=int(d.get("checkpoint_every", 0)),
        eval_every=int(d.get("eval_every", 100)),
        val_fraction=float(d.get("val_fraction", 0.1)),
        domain_balanced=bool(d.get("domain_balanced", True)),
        disable=tuple(d.get("disable", ())),
    )


def experiment_to_dict(exp: ExperimentConfig) -> dict:
    return {
        "model": {"d_z": exp.model.d_z, "d_x": exp.model.d_x},
        "scm": {
            "num_domains": exp.scm.num_domains,
            "num_classes": exp.scm.num_classes,
            "causal_dim": exp.scm.causal_dim,
            "spurious_dim": exp.scm.spurious_dim,
            "modality_dims": dict(exp.scm.modality_dims),
            "domain_shift_scale": exp.scm.domain_shift_scale,
            "spurious_label_corr": exp.scm.spurious_label_corr,
            "noise_scales": {"s": exp.scm.noise_scales.s, "c": exp.scm.noise_scales.c,
                             "x": exp.scm.noise_scales.x, "y": exp.scm.noise_scales.y},
            "n_per_domain": exp.scm.n_per_domain,
            "seed": exp.scm.seed,
        },
        "data": {"path": exp.data.path, "target_domain": exp.data.target_domain},
        "train": train_config_to_dict(exp.train),
        "eval": {"seeds": list(exp.eval.seeds),
                 "ablations": [list(v) for v in exp.eval.ablations],
                 "embedding_encoding": exp.eval.embedding_encoding},
    }


def experiment_from_dict(d: dict) -> ExperimentConfig:
    m = d.get("model", {})
    s = d.get("scm", {})
    ns = s.get("noise_scales", {})
    dt = d.get("data", {})
    ev = d.get("eval", {})
    return ExperimentConfig(
        model=ModelConfig(d_z=int(m.get("d_z", 64)), d_x=int(m.get("d_x", 64))),
        scm=ScmSpec(
            num_domains=int(s.get("num_domains", 4)),
            num_classes=int(s.get("num_classes", 2)),
            causal_dim=int(s.get("causal_dim", 8)),
            spurious_dim=int(s.get("spurious_dim", 8)),
            modality_dims={k: int(v) for k, v in s.get("modality_dims", {"image": 32, "text": 32}).items()},
            domain_shift_scale=float(s.get("domain_shift_scale", 4.0)),
            spurious_label_corr=float(s.get("spurious_label_corr", 0.9)),
            noise_scales=NoiseScales(s=float(ns.get("s", 1.0)), c=float(ns.get("c", 1.0)),
                                     x=float(ns.get("x", 0.1)), y=float(ns.get("y", 1.0))),
            n_per_domain=int(s.get("n_per_domain", 500)),
            seed=int(s.get("seed", 7)),
        ),
        data=DataConfig(path=dt.get("path"), target_domain=dt.get("target_domain")),
        train=train_config_from_dict(d.get("train", {})),
        eval=EvalConfig(seeds=tuple(int(x) for x in ev.get("seeds", (0, 1, 2))),
                        ablations=tuple(tuple(v) for v in ev.get("ablations", ())),
                        embedding_encoding=str(ev.get("embedding_encoding", "list"))),
    )


def _check_keys(incoming: dict, schema: dict, path: str = "") -> None:
    for key, val in incoming.items():
        here = f"{path}{key}"
        if path.rstrip(".") in _OPEN_TABLES:
            continue
        if key not in schema:
            raise ConfigError(f"unknown config key: {here}")
        if isinstance(val, dict) and isinstance(schema[key], dict):
            _check_keys(val, schema[key], here + ".")


def _deep_merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "modality_dims":
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config_dict(path) -> dict:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file {p} does not exist")
    text = p.read_text()
    try:
        if p.suffix == ".json":
            raw = json.loads(text)
        else:
            raw = tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as e:
        raise ConfigError(f"config file {p} does not parse: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {p} must contain a table")
    return raw


def parse_override(item: str) -> tuple[list[str], object]:
    if "=" not in item:
        raise ConfigError(f"override {item!r} must look like dotted.key=value")
    key, _, raw = item.partition("=")
    key = key.strip()
    if not key:
        raise ConfigError(f"override {item!r} has an empty key")
    try:
        value = tomllib.loads(f"v = {raw.strip()}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw.strip()
    return key.split("."), value


def resolve_config(path=None, overrides=(), seed: int | None = None):
    """Defaults <- file <- --set overrides <- --seed. Returns
    (ExperimentConfig, effective dict)."""
    effective = experiment_to_dict(ExperimentConfig())
    if path is not None:
        raw = load_config_dict(path)
        _check_keys(raw, effective)
        effective = _deep_merge(effective, raw)
    for item in overrides:
        keys, value = parse_override(item)
        node = effective
        for k in keys[:-1]:
            if not isinstance(node, dict) or k not in node:
                raise ConfigError(f"override names unknown key: {'.'.join(keys)}")
            node = node[k]
        open_table = ".".join(keys[:-1]) in _OPEN_TABLES
        if not isinstance(node, dict) or (keys[-1] not in node and not open_table):
            raise ConfigError(f"override names unknown key: {'.'.join(keys)}")
        node[keys[-1]] = value
    if seed is not None:
        effective["train"]["seed"] = int(seed)
        effective["scm"]["seed"] = int(seed)
    exp = experiment_from_dict(effective)
    exp.train.validate()
    exp.scm.validate()
    return exp, experiment_to_dict(exp)


def config_digest(effective: dict) -> str:
    blob = json.dumps(effective, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()

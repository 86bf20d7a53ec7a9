"""Leave-one-domain-out evaluation, ablation orchestration, and embedding
export.

Every domain is held out once; one model is trained per (split, seed) on
the sources only and scored by top-1 accuracy on the held-out target.
Reports carry per-seed and mean accuracies per split plus the overall
average, serialized as canonical JSON and a plain-text table.
"""

from __future__ import annotations

import base64
import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path

import numpy as np

from .data import Dataset, DomainSplit, load_dataset, lodo_splits
from .errors import InputError
from .model import CamoModel, classify_fwd
from .rng import derive_seed
from .engine import (ModelConfig, TOGGLES, TrainConfig, TrainResult, batch_arrays,
                    forward_batch, predict_logits, train)


@dataclass
class PredictionRow:
    id: str
    true: int
    pred: int
    domain: int


@dataclass
class EvalResult:
    accuracy: float
    predictions: list[PredictionRow]


def evaluate(model: CamoModel, samples) -> EvalResult:
    """Top-1 accuracy of the class head on the causal features; all
    training-only machinery (mixup, adversarial term) is absent here."""
    samples = list(samples)
    if not samples:
        raise InputError("evaluate: empty sample set")
    arrays = batch_arrays(samples, model.dims.modalities)
    logits = predict_logits(model, arrays.features)
    preds = np.argmax(logits, axis=1)
    rows = [PredictionRow(id=s.id, true=int(s.label), pred=int(p), domain=int(s.domain))
            for s, p in zip(samples, preds)]
    return EvalResult(accuracy=float((preds == arrays.labels).mean()), predictions=rows)


# ---------------------------------------------------------------------------
# LODO
# ---------------------------------------------------------------------------

@dataclass
class LodoRow:
    target_domain: int
    source_domains: tuple[int, ...]
    seed_accuracies: dict[str, float]
    mean_accuracy: float


@dataclass
class LodoReport:
    task: str
    rows: list[LodoRow]
    average: float
    config_digest: str
    seeds: list[int]

    def to_json_dict(self) -> dict:
        return {
            "task": self.task,
            "seeds": list(self.seeds),
            "config_digest": self.config_digest,
            "rows": [
                {
                    "target_domain": r.target_domain,
                    "source_domains": list(r.source_domains),
                    "seed_accuracies": r.seed_accuracies,
                    "mean_accuracy": r.mean_accuracy,
                }
                for r in self.rows
            ],
            "average": self.average,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True)

    def render_text(self) -> str:
        """One column per held-out domain plus the trailing average."""
        heads = [f"target d{r.target_domain}" for r in self.rows] + ["avg"]
        lines = [f"task: {self.task}  (seeds: {', '.join(str(s) for s in self.seeds)})",
                 "  ".join(f"{h:>12}" for h in heads)]
        for j, seed in enumerate(self.seeds):
            vals = [r.seed_accuracies[str(seed)] for r in self.rows]
            vals.append(float(np.mean(vals)))
            lines.append("  ".join(f"{v:>12.4f}" for v in vals) + f"   seed {seed}")
        means = [r.mean_accuracy for r in self.rows] + [self.average]
        lines.append("  ".join(f"{v:>12.4f}" for v in means) + "   mean")
        return "\n".join(lines) + "\n"


def split_train_seed(master_seed: int, target_domain: int) -> int:
    """Per-split training seed, offset so splits are independent runs."""
    return derive_seed(master_seed, "lodo", f"target{target_domain}")


def lodo_runs(dataset: Dataset, train_cfg: TrainConfig, model_cfg: ModelConfig,
              seeds):
    """Yield (split, master_seed, TrainResult, EvalResult) for every
    split x seed; the best-on-source-validation model is the one scored."""
    for split in lodo_splits(dataset.domains()):
        target_samples = dataset.of_domains([split.target_domain])
        for seed in seeds:
            cfg = replace(train_cfg, seed=split_train_seed(seed, split.target_domain))
            result = train(cfg, dataset, split, model_cfg=model_cfg)
            yield split, seed, result, evaluate(result.best_model, target_samples)


def run_lodo(dataset: Dataset, train_cfg: TrainConfig,
             model_cfg: ModelConfig | None = None, seeds=(0, 1, 2),
             config_digest: str = "", out_dir=None) -> LodoReport:
    """Full LODO protocol. When out_dir is given, also writes report.json,
    report.txt, and per-run prediction CSVs."""
    model_cfg = model_cfg or ModelConfig()
    seeds = list(seeds)
    if len(dataset.domains()) < 2:
        raise InputError("run_lodo needs at least two domains")
    out = Path(out_dir) if out_dir else None
    per_split: dict[int, LodoRow] = {}
    for split, seed, _result, ev in lodo_runs(dataset, train_cfg, model_cfg, seeds):
        t = split.target_domain
        row = per_split.setdefault(t, LodoRow(target_domain=t,
                                              source_domains=split.source_domains,
                                              seed_accuracies={}, mean_accuracy=0.0))
        row.seed_accuracies[str(seed)] = ev.accuracy
        if out:
            pred_dir = out / "predictions"
            pred_dir.mkdir(parents=True, exist_ok=True)
            write_predictions(ev, pred_dir / f"target{t}_seed{seed}.csv")
    rows = []
    for t in sorted(per_split):
        row = per_split[t]
        row.mean_accuracy = float(np.mean([row.seed_accuracies[str(s)] for s in seeds]))
        rows.append(row)
    report = LodoReport(task=dataset.task, rows=rows,
                        average=float(np.mean([r.mean_accuracy for r in rows])),
                        config_digest=config_digest, seeds=seeds)
    if out:
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(report.to_json())
        (out / "report.txt").write_text(report.render_text())
    return report


def write_predictions(result: EvalResult, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "true", "pred", "domain"])
        for r in result.predictions:
            writer.writerow([r.id, r.true, r.pred, r.domain])


# ---------------------------------------------------------------------------
# ablation
# ---------------------------------------------------------------------------

def variant_key(toggles) -> str:
    return "full" if not toggles else "no-" + "+".join(sorted(toggles))


def _check_toggles(toggles):
    unknown = set(toggles) - set(TOGGLES)
    if unknown:
        raise InputError(f"unknown ablation toggle(s): {sorted(unknown)}")
    return tuple(sorted(toggles))


@lru_cache(maxsize=2)
def _cached_dataset(path: str) -> Dataset:
    return load_dataset(path)


def _ablation_task(args):
    ds_path, cfg_json, model_dz, model_dx, toggles, target, seed = args
    dataset = _cached_dataset(ds_path)
    cfg_dict = json.loads(cfg_json)
    from .config import train_config_from_dict  # late import, avoids a cycle
    cfg = train_config_from_dict(cfg_dict)
    cfg = replace(cfg, disable=tuple(toggles), seed=split_train_seed(seed, target))
    split = [s for s in lodo_splits(dataset.domains()) if s.target_domain == target][0]
    res = train(cfg, dataset, split, model_cfg=ModelConfig(d_z=model_dz, d_x=model_dx))
    ev = evaluate(res.best_model, dataset.of_domains([target]))
    return variant_key(toggles), target, seed, ev.accuracy


def run_ablation(dataset: Dataset, train_cfg: TrainConfig,
                 model_cfg: ModelConfig | None = None,
                 variants=((), ), seeds=(0, 1, 2), jobs: int = 1,
                 dataset_path=None, config_digest: str = "") -> dict[str, LodoReport]:
    """One LODO report per variant (each variant = a set of disabled
    toggles); the full model is always included as the reference.

    jobs > 1 fans the (variant, split, seed) grid over worker processes,
    which requires the dataset to be addressable by path.
    """
    model_cfg = model_cfg or ModelConfig()
    variant_sets = [_check_toggles(v) for v in variants]
    if () not in variant_sets:
        variant_sets.insert(0, ())
    seen = []
    for v in variant_sets:  # dedupe, keep order
        if v not in seen:
            seen.append(v)
    variant_sets = seen

    accs: dict[str, dict[int, dict[int, float]]] = {}
    if jobs > 1 and dataset_path is not None:
        from .config import train_config_to_dict
        cfg_json = json.dumps(train_config_to_dict(train_cfg))
        tasks = [(str(dataset_path), cfg_json, model_cfg.d_z, model_cfg.d_x,
                  v, split.target_domain, seed)
                 for v in variant_sets
                 for split in lodo_splits(dataset.domains())
                 for seed in seeds]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for key, target, seed, acc in pool.map(_ablation_task, tasks):
                accs.setdefault(key, {}).setdefault(target, {})[seed] = acc
    else:
        for v in variant_sets:
            cfg = replace(train_cfg, disable=v)
            key = variant_key(v)
            for split, seed, _res, ev in lodo_runs(dataset, cfg, model_cfg, seeds):
                accs.setdefault(key, {}).setdefault(split.target_domain, {})[seed] = ev.accuracy

    splits = {s.target_domain: s for s in lodo_splits(dataset.domains())}
    reports: dict[str, LodoReport] = {}
    for v in variant_sets:
        key = variant_key(v)
        rows = []
        for t in sorted(accs[key]):
            per_seed = {str(s): accs[key][t][s] for s in seeds}
            rows.append(LodoRow(target_domain=t, source_domains=splits[t].source_domains,
                                seed_accuracies=per_seed,
                                mean_accuracy=float(np.mean(list(per_seed.values())))))
        reports[key] = LodoReport(task=dataset.task, rows=rows,
                                  average=float(np.mean([r.mean_accuracy for r in rows])),
                                  config_digest=config_digest, seeds=list(seeds))
    return reports


# ---------------------------------------------------------------------------
# embedding export
# ---------------------------------------------------------------------------

def export_embeddings(model: CamoModel, samples, split: DomainSplit | None,
                      path, encoding: str = "list") -> Path:
    """Write one JSON line per sample with its latents and split role, for
    external projection/visualization tooling. Vectors are float32, either
    plain lists or base64 little-endian blobs."""
    if encoding not in ("list", "base64"):
        raise InputError("encoding must be 'list' or 'base64'")
    samples = list(samples)
    if not samples:
        raise InputError("export_embeddings: empty sample set")
    arrays = batch_arrays(samples, model.dims.modalities)
    bt = forward_batch(model, arrays.features)
    logits, _ = classify_fwd(model, bt.x_c)
    preds = np.argmax(logits, axis=1)

    def enc(vec: np.ndarray):
        v32 = np.asarray(vec, dtype="<f4")
        if encoding == "list":
            return [float(x) for x in v32]
        return base64.b64encode(v32.tobytes()).decode("ascii")

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        for i, s in enumerate(samples):
            role = "all" if split is None else (
                "target" if s.domain == split.target_domain else "source")
            rec = {
                "id": s.id, "domain": int(s.domain), "label": int(s.label),
                "pred": int(preds[i]), "role": role, "encoding": encoding,
                "x_c": enc(bt.x_c[i]), "x_s": enc(bt.x_s[i]),
                "z": {m: enc(bt.z_general[m][i]) for m in model.dims.modalities},
            }
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    return path


def read_embedding_dump(path) -> list[dict]:
    """Inverse of export_embeddings; vectors come back as float32 arrays."""
    def dec(val, encoding):
        if encoding == "base64":
            return np.frombuffer(base64.b64decode(val), dtype="<f4")
        return np.asarray(val, dtype=np.float32)

    out = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        enc = rec["encoding"]
        rec["x_c"] = dec(rec["x_c"], enc)
        rec["x_s"] = dec(rec["x_s"], enc)
        rec["z"] = {m: dec(v, enc) for m, v in rec["z"].items()}
        out.append(rec)
    return out

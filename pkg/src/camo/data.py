"""Datasets of precomputed per-modality embeddings.

On disk a dataset is a directory with metadata.json, manifest.jsonl (one
entry per sample: id, label, domain, and per-modality embedding
references), and the embeddings themselves either as one raw
little-endian float32 vector per file or as a single packed .npz table
keyed by "id::modality". Ground-truth latents, when the generator
produced them, ride along in latents.npz.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataLoadError, InputError

FORMAT_VERSION = 1
_TABLE_SEP = "::"


@dataclass
class MultimodalSample:
    """One post: per-modality embedding vectors plus class and domain labels."""

    id: str
    features: dict[str, np.ndarray]
    label: int
    domain: int


@dataclass
class Dataset:
    samples: list[MultimodalSample]
    modalities: tuple[str, ...]
    feature_dims: dict[str, int]
    num_classes: int
    num_domains: int
    task: str = "dataset"
    metadata: dict = field(default_factory=dict)
    latents: dict[str, tuple[np.ndarray, np.ndarray]] | None = None

    def domains(self) -> list[int]:
        return sorted({s.domain for s in self.samples})

    def of_domains(self, domains) -> list[MultimodalSample]:
        wanted = set(int(d) for d in domains)
        return [s for s in self.samples if s.domain in wanted]


@dataclass(frozen=True)
class DomainSplit:
    """One leave-one-domain-out configuration."""

    source_domains: tuple[int, ...]
    target_domain: int

    def __post_init__(self):
        if self.target_domain in self.source_domains:
            raise InputError("target domain cannot also be a source")


def lodo_splits(domains) -> list[DomainSplit]:
    """Every domain targeted exactly once, all others as sources."""
    ds = sorted(set(int(d) for d in domains))
    if len(ds) < 2:
        raise InputError("leave-one-domain-out needs at least two domains")
    return [DomainSplit(source_domains=tuple(d for d in ds if d != t), target_domain=t)
            for t in ds]


def split_validation(samples, fraction: float, rng: np.random.Generator):
    """Carve a seeded validation slice off the source samples."""
    if not 0.0 <= fraction < 1.0:
        raise InputError("validation fraction must be in [0, 1)")
    n_val = int(round(fraction * len(samples)))
    if n_val == 0:
        return list(samples), []
    order = rng.permutation(len(samples))
    val_idx = set(order[:n_val].tolist())
    train = [s for i, s in enumerate(samples) if i not in val_idx]
    val = [s for i, s in enumerate(samples) if i in val_idx]
    return train, val


def make_batches(samples, batch_size: int, rng: np.random.Generator,
                 domain_balanced: bool = False):
    """One epoch of shuffled batches; the final partial batch is dropped.

    With domain_balanced each batch draws near-equally from every domain
    present (per-batch counts differ by at most 1), cycling and
    reshuffling the per-domain pools as they run out.
    """
    if batch_size < 2:
        raise InputError("batch_size must be >= 2")
    samples = list(samples)
    n_batches = len(samples) // batch_size
    if n_batches == 0:
        return []
    if not domain_balanced:
        order = rng.permutation(len(samples))
        return [[samples[j] for j in order[i * batch_size:(i + 1) * batch_size]]
                for i in range(n_batches)]

    domains = sorted({s.domain for s in samples})
    pools = {d: [s for s in samples if s.domain == d] for d in domains}
    cursors = {d: 0 for d in domains}
    order = {d: rng.permutation(len(pools[d])) for d in domains}

    def take(d):
        if cursors[d] >= len(pools[d]):
            order[d] = rng.permutation(len(pools[d]))
            cursors[d] = 0
        s = pools[d][order[d][cursors[d]]]
        cursors[d] += 1
        return s

    base, rem = divmod(batch_size, len(domains))
    batches = []
    for b in range(n_batches):
        counts = {d: base for d in domains}
        for k in range(rem):  # rotate who gets the extra slot
            counts[domains[(b + k) % len(domains)]] += 1
        batch = [take(d) for d in domains for _ in range(counts[d])]
        batches.append([batch[j] for j in rng.permutation(len(batch))])
    return batches


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def save_dataset(dataset: Dataset, out_dir, packed: bool = True) -> Path:
    """Write metadata.json + manifest.jsonl + embeddings (+ latents)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    meta = {
        "format_version": FORMAT_VERSION,
        "task": dataset.task,
        "modalities": list(dataset.modalities),
        "modality_dims": {m: int(d) for m, d in dataset.feature_dims.items()},
        "num_classes": int(dataset.num_classes),
        "num_domains": int(dataset.num_domains),
        "embedding_table": "embeddings.npz" if packed else None,
    }
    meta.update(dataset.metadata)
    (out / "metadata.json").write_text(json.dumps(meta, indent=2, sort_keys=True))

    entries = []
    table: dict[str, np.ndarray] = {}
    if not packed:
        (out / "emb").mkdir(exist_ok=True)
    for s in dataset.samples:
        emb = {}
        for m in dataset.modalities:
            vec = np.asarray(s.features[m], dtype="<f4")
            if packed:
                key = f"{s.id}{_TABLE_SEP}{m}"
                table[key] = vec
                emb[m] = key
            else:
                rel = f"emb/{s.id}.{m}.f32"
                vec.tofile(out / rel)
                emb[m] = rel
        entries.append({"id": s.id, "label": int(s.label), "domain": int(s.domain), "emb": emb})
    with (out / "manifest.jsonl").open("w") as fh:
        for e in entries:
            fh.write(json.dumps(e, sort_keys=True) + "\n")
    if packed:
        np.savez(out / "embeddings.npz", **table)
    if dataset.latents:
        ids = sorted(dataset.latents)
        np.savez(out / "latents.npz",
                 ids=np.array(ids),
                 x_c=np.stack([dataset.latents[i][0] for i in ids]).astype("<f4"),
                 x_s=np.stack([dataset.latents[i][1] for i in ids]).astype("<f4"))
    return out


def load_manifest(path) -> Dataset:
    """Load a dataset from a manifest file or its directory.

    Raises DataLoadError naming the offending entry on missing embedding
    files, dimension mismatches, or out-of-range labels/domains. Samples
    come back ordered by id.
    """
    p = Path(path)
    root = p.parent if p.is_file() else p
    manifest = p if p.is_file() else root / "manifest.jsonl"
    meta_path = root / "metadata.json"
    if not meta_path.exists():
        raise DataLoadError(f"missing metadata.json next to {manifest}")
    if not manifest.exists():
        raise DataLoadError(f"missing manifest file {manifest}")
    try:
        meta = json.loads(meta_path.read_text())
    except json.JSONDecodeError as e:
        raise DataLoadError(f"metadata.json does not parse: {e}") from e

    modalities = tuple(meta["modalities"])
    dims = {m: int(d) for m, d in meta["modality_dims"].items()}
    num_classes = int(meta["num_classes"])
    num_domains = int(meta["num_domains"])
    table = None
    if meta.get("embedding_table"):
        table_path = root / meta["embedding_table"]
        if not table_path.exists():
            raise DataLoadError(f"missing embedding table {table_path}")
        table = np.load(table_path)

    samples = []
    seen = set()
    for line_no, line in enumerate(manifest.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            entry = json.loads(line)
        except json.JSONDecodeError as e:
            raise DataLoadError(f"manifest line {line_no} does not parse: {e}") from e
        sid = str(entry.get("id", f"<line {line_no}>"))
        for fld in ("id", "label", "domain", "emb"):
            if fld not in entry:
                raise DataLoadError(f"entry {sid}: missing field {fld!r}", entry_id=sid)
        if sid in seen:
            raise DataLoadError(f"entry {sid}: duplicate id", entry_id=sid)
        seen.add(sid)
        label, domain = int(entry["label"]), int(entry["domain"])
        if not 0 <= label < num_classes:
            raise DataLoadError(f"entry {sid}: label {label} outside [0, {num_classes})", entry_id=sid)
        if not 0 <= domain < num_domains:
            raise DataLoadError(f"entry {sid}: domain {domain} outside [0, {num_domains})", entry_id=sid)
        features = {}
        for m in modalities:
            if m not in entry["emb"]:
                raise DataLoadError(f"entry {sid}: no embedding for modality {m!r}", entry_id=sid)
            ref = entry["emb"][m]
            if table is not None and ref in getattr(table, "files", ()):
                vec = np.asarray(table[ref], dtype=np.float32)
            else:
                fpath = root / ref
                if not fpath.exists():
                    raise DataLoadError(f"entry {sid}: missing embedding file {ref}", entry_id=sid)
                vec = np.fromfile(fpath, dtype="<f4")
            if vec.ndim != 1 or vec.shape[0] != dims[m]:
                raise DataLoadError(
                    f"entry {sid}: modality {m!r} has dimension {vec.shape[0] if vec.ndim == 1 else vec.shape},"
                    f" expected {dims[m]}", entry_id=sid)
            features[m] = vec
        samples.append(MultimodalSample(id=sid, features=features, label=label, domain=domain))

    samples.sort(key=lambda s: s.id)
    latents = None
    lat_path = root / "latents.npz"
    if lat_path.exists():
        raw = np.load(lat_path)
        latents = {str(i): (xc, xs) for i, xc, xs in zip(raw["ids"], raw["x_c"], raw["x_s"])}
    return Dataset(samples=samples, modalities=modalities, feature_dims=dims,
                   num_classes=num_classes, num_domains=num_domains,
                   task=str(meta.get("task", "dataset")), metadata=meta, latents=latents)


def load_dataset(path) -> Dataset:
    return load_manifest(path)

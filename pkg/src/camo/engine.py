"""Alternating two-step adversarial training.

Each cycle trains the discriminator on the causal features treated as
constants (only discriminator parameters move), then takes a task step:
supervised contrastive alignment on the unmixed general features,
intra-domain mixup, disentanglement, orthogonality, classification, and
the reversed-gradient domain term (only non-discriminator parameters
move). Two Adam instances share one cosine learning-rate schedule.

Ablation axes are config toggles naming what to DISABLE:
  MD     modal split of the projection output
  SupCon contrastive alignment term
  MO     modal orthogonality terms
  DO     domain orthogonality term
  AD     adversarial part (gamma pinned to 0, discriminator steps skipped)
  Mixup  intra-domain mixup
Disabling all of them reduces the task step to plain cross-entropy
training on the concatenated projections.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import _kernels as K
from .data import Dataset, DomainSplit, make_batches, split_validation
from .errors import InputError, TrainAbortError
from .losses import (BatchTensors, LossWeights, cross_entropy_grad, disc_loss_grad,
                     ortho_loss_grad, step2_loss, supcon_loss_grad)
from .mixup import MixupConfig, draw_lambdas, mix_rows, mixup_pairs
from .model import (NORM_EPS, CamoModel, ModelDims, classify_bwd, classify_fwd,
                    disentangle_bwd, disentangle_fwd, discriminate_bwd,
                    discriminate_fwd, grad_reverse, grad_reverse_backward,
                    project_bwd, project_fwd)
from .optim import Adam
from .rng import stream
from .schedules import gamma_schedule, lr_schedule

TOGGLES = ("MD", "SupCon", "MO", "DO", "AD", "Mixup")


@dataclass
class ModelConfig:
    d_z: int = 64
    d_x: int = 64


@dataclass
class TrainConfig:
    loss_weights: LossWeights = field(default_factory=LossWeights)
    mixup: MixupConfig = field(default_factory=MixupConfig)
    batch_size: int = 16
    total_iterations: int = 3000
    lr_init: float = 0.002
    lr_final: float = 2e-5
    gamma_max: float = 10.0
    gamma_ramp_iters: int = 400
    disc_steps_per_cycle: int = 1
    task_steps_per_cycle: int = 1
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    checkpoint_every: int = 0
    eval_every: int = 100
    val_fraction: float = 0.1
    domain_balanced: bool = True
    disable: tuple[str, ...] = ()

    def validate(self) -> None:
        self.loss_weights.validate()
        self.mixup.validate()
        if self.batch_size < 2:
            raise InputError("batch_size must be >= 2")
        if self.total_iterations < 0:
            raise InputError("total_iterations must be >= 0")
        if not self.lr_init >= self.lr_final > 0:
            raise InputError("need lr_init >= lr_final > 0")
        if self.gamma_max < 0:
            raise InputError("gamma_max must be >= 0")
        if self.gamma_ramp_iters < 1:
            raise InputError("gamma_ramp_iters must be >= 1")
        if self.disc_steps_per_cycle < 1 or self.task_steps_per_cycle < 1:
            raise InputError("steps per cycle must be >= 1")
        if not 0.0 <= self.val_fraction < 1.0:
            raise InputError("val_fraction must be in [0, 1)")
        unknown = set(self.disable) - set(TOGGLES)
        if unknown:
            raise InputError(f"unknown ablation toggle(s): {sorted(unknown)}")


@dataclass
class TrainLogRecord:
    iteration: int
    step_type: str  # "disc" | "task"
    gamma: float
    lr: float
    wall_clock: float
    batch_ids: list[str]
    l_disc: float | None = None
    ce_class: float | None = None
    ce_domain_adv: float | None = None
    l_task: float | None = None
    l_supcon: float | None = None
    l_ortho: float | None = None
    l_step2: float | None = None
    val_accuracy: float | None = None

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class TrainResult:
    model: CamoModel
    best_model: CamoModel
    best_val_accuracy: float | None
    records: list[TrainLogRecord]

    def consumed_ids(self) -> set[str]:
        out: set[str] = set()
        for r in self.records:
            out.update(r.batch_ids)
        return out


# ---------------------------------------------------------------------------
# batch assembly and shared forward
# ---------------------------------------------------------------------------

@dataclass
class BatchArrays:
    features: dict[str, np.ndarray]
    labels: np.ndarray
    domains: np.ndarray
    ids: list[str]


def batch_arrays(samples, modalities) -> BatchArrays:
    feats = {m: np.ascontiguousarray(
        np.stack([s.features[m] for s in samples]).astype(np.float64)) for m in modalities}
    return BatchArrays(
        features=feats,
        labels=np.array([s.label for s in samples], dtype=np.int64),
        domains=np.array([s.domain for s in samples], dtype=np.int64),
        ids=[s.id for s in samples],
    )


def forward_batch(model: CamoModel, features: dict[str, np.ndarray],
                  labels=None, domains=None) -> BatchTensors:
    """Inference-path forward (no mixup): projections, trunk, activations."""
    z_spec, z_gen = {}, {}
    for m in model.dims.modalities:
        z_spec[m], z_gen[m], _ = project_fwd(model, m, features[m])
    z_cat = np.concatenate([z_gen[m] for m in model.dims.modalities], axis=1)
    x_s, x_c, _ = disentangle_fwd(model, z_cat)
    n = x_c.shape[0]
    return BatchTensors(
        z_general=z_gen, z_specific=z_spec, x_c=x_c, x_s=x_s,
        labels=labels if labels is not None else np.zeros(n, dtype=np.int64),
        domains=domains if domains is not None else np.zeros(n, dtype=np.int64),
    )


def predict_logits(model: CamoModel, features: dict[str, np.ndarray]) -> np.ndarray:
    bt = forward_batch(model, features)
    logits, _ = classify_fwd(model, bt.x_c)
    return logits


def _accuracy(model: CamoModel, samples) -> float:
    arrays = batch_arrays(samples, model.dims.modalities)
    logits = predict_logits(model, arrays.features)
    return float((np.argmax(logits, axis=1) == arrays.labels).mean())


def _onehot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    out = np.zeros((labels.shape[0], num_classes))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def _finite(*values) -> bool:
    return all(np.isfinite(v) for v in values)


# ---------------------------------------------------------------------------
# steps
# ---------------------------------------------------------------------------

def disc_forward_backward(model: CamoModel, batch: BatchArrays):
    """Discriminator loss and gradients w.r.t. discriminator parameters only;
    the causal feature is a constant input here."""
    bt = forward_batch(model, batch.features)
    logits, cache = discriminate_fwd(model, bt.x_c)
    loss, dlogits = disc_loss_grad(logits, batch.domains)
    grads, _ = discriminate_bwd(model, cache, dlogits, with_param_grads=True)
    return loss, grads


def train_step_disc(model: CamoModel, batch: BatchArrays, optimizer: Adam,
                    lr: float, gamma: float) -> TrainLogRecord:
    """Discriminator update; every non-discriminator parameter stays
    bit-identical."""
    t0 = time.perf_counter()
    loss, grads = disc_forward_backward(model, batch)
    if not _finite(loss):
        raise TrainAbortError("non-finite discriminator loss", batch_ids=batch.ids)
    optimizer.step(model.params, grads, lr)
    return TrainLogRecord(iteration=-1, step_type="disc", gamma=gamma, lr=lr,
                          wall_clock=time.perf_counter() - t0, batch_ids=list(batch.ids),
                          l_disc=loss)


def task_forward_backward(model: CamoModel, batch: BatchArrays, gamma: float,
                          cfg: TrainConfig, pairs=None, lam=None):
    """Composite forward and backward of the task step, without the update.

    pairs/lam are the mixup draws (None means mixup is inactive). Returns
    (components dict, grads over the non-discriminator parameters).
    The discriminator is frozen here; its domain term reaches the trunk
    through the reversal rule.
    """
    disabled = set(cfg.disable)
    w = cfg.loss_weights
    modalities = model.dims.modalities
    n = batch.labels.shape[0]

    z_spec, z_gen, p_caches = {}, {}, {}
    for m in modalities:
        z_spec[m], z_gen[m], p_caches[m] = project_fwd(model, m, batch.features[m])

    # contrastive alignment on the unmixed general features, own hard labels
    use_supcon = "SupCon" not in disabled and w.alpha2 > 0 and n * len(modalities) >= 2
    d_sup = {m: None for m in modalities}
    l_sup = 0.0
    if use_supcon:
        z_all = np.concatenate([z_gen[m] for m in modalities], axis=0)
        labels_all = np.tile(batch.labels, len(modalities))
        l_sup, dz_all = supcon_loss_grad(z_all, labels_all, w.tau)
        for k, m in enumerate(modalities):
            d_sup[m] = dz_all[k * n:(k + 1) * n]

    # intra-domain mixup on the general features and labels
    y_onehot = _onehot(batch.labels, model.dims.num_classes)
    use_mixup = pairs is not None
    if use_mixup:
        z_bar, bar_norms = {}, {}
        for m in modalities:
            pre = mix_rows(z_gen[m], pairs, lam)
            z_bar[m], bar_norms[m] = K.row_l2norm_fwd(np.ascontiguousarray(pre), NORM_EPS)
        y_bar = lam[:, None] * y_onehot + (1.0 - lam)[:, None] * y_onehot[pairs]
    else:
        z_bar = z_gen
        y_bar = y_onehot

    z_cat = np.concatenate([z_bar[m] for m in modalities], axis=1)
    x_s, x_c, d_cache = disentangle_fwd(model, z_cat)

    logits_c, c_cache = classify_fwd(model, x_c)
    logits_d, q_cache = discriminate_fwd(model, grad_reverse(x_c, gamma))
    ce_class, d_logits_c = cross_entropy_grad(logits_c, y_bar)
    ce_dom, d_logits_d = disc_loss_grad(logits_d, batch.domains)
    l_task = ce_class + gamma * ce_dom

    include_do = "DO" not in disabled
    include_mo = "MO" not in disabled and model.dims.split_projection
    if include_do or include_mo:
        l_ortho, o_grads = ortho_loss_grad(x_c, x_s, z_bar, z_spec,
                                           include_domain=include_do, include_modal=include_mo)
    else:
        l_ortho, o_grads = 0.0, {}

    l_total = step2_loss(l_task, l_sup, l_ortho, w)
    components = {"ce_class": ce_class, "ce_domain_adv": ce_dom, "l_task": l_task,
                  "l_supcon": l_sup, "l_ortho": l_ortho, "l_step2": l_total}

    # backward; discriminator parameters receive no gradients at all
    grads, d_xc_cls = classify_bwd(model, c_cache, w.alpha1 * d_logits_c)
    _, d_xc_dom = discriminate_bwd(model, q_cache, d_logits_d, with_param_grads=False)
    d_xc = d_xc_cls + w.alpha1 * grad_reverse_backward(d_xc_dom, gamma)
    d_xs = np.zeros_like(x_s)
    if "x_c" in o_grads:
        d_xc = d_xc + w.alpha3 * o_grads["x_c"]
        d_xs = d_xs + w.alpha3 * o_grads["x_s"]
    dis_grads, d_zcat = disentangle_bwd(model, d_cache, d_xs, d_xc)
    grads.update(dis_grads)

    zdim = model.dims.z_general_dim
    for k, m in enumerate(modalities):
        d_bar = np.ascontiguousarray(d_zcat[:, k * zdim:(k + 1) * zdim])
        og = o_grads.get(f"z_general.{m}")
        if og is not None:
            d_bar = d_bar + w.alpha3 * og
        if use_mixup:
            d_pre = K.row_l2norm_bwd(z_bar[m], bar_norms[m], d_bar, NORM_EPS)
            d_z = lam[:, None] * d_pre
            np.add.at(d_z, pairs, (1.0 - lam)[:, None] * d_pre)
        else:
            d_z = d_bar
        if d_sup[m] is not None:
            d_z = d_z + w.alpha2 * d_sup[m]
        d_spec = np.zeros_like(z_spec[m])
        ogs = o_grads.get(f"z_specific.{m}")
        if ogs is not None:
            d_spec = d_spec + w.alpha3 * ogs
        grads.update(project_bwd(model, m, p_caches[m], d_spec, d_z))

    return components, grads


def train_step_task(model: CamoModel, batch: BatchArrays, optimizer: Adam,
                    lr: float, gamma: float, cfg: TrainConfig,
                    rng_mixup: np.random.Generator) -> TrainLogRecord:
    """One update of all non-discriminator parameters against the composite
    objective; discriminator parameters stay bit-identical."""
    t0 = time.perf_counter()
    pairs = lam = None
    if "Mixup" not in set(cfg.disable) and cfg.mixup.enabled:
        pairs = mixup_pairs(batch.domains, rng_mixup)
        lam = draw_lambdas(cfg.mixup, batch.labels.shape[0], rng_mixup)
    comp, grads = task_forward_backward(model, batch, gamma, cfg, pairs, lam)
    if not _finite(*comp.values()):
        raise TrainAbortError("non-finite task-step loss", batch_ids=batch.ids)
    optimizer.step(model.params, grads, lr)
    return TrainLogRecord(iteration=-1, step_type="task", gamma=gamma, lr=lr,
                          wall_clock=time.perf_counter() - t0, batch_ids=list(batch.ids),
                          ce_class=comp["ce_class"], ce_domain_adv=comp["ce_domain_adv"],
                          l_task=comp["l_task"], l_supcon=comp["l_supcon"],
                          l_ortho=comp["l_ortho"], l_step2=comp["l_step2"])


# ---------------------------------------------------------------------------
# full loop
# ---------------------------------------------------------------------------

def _epoch_stream(samples, cfg: TrainConfig, rng: np.random.Generator):
    while True:
        batches = make_batches(samples, cfg.batch_size, rng,
                               domain_balanced=cfg.domain_balanced)
        if not batches:
            raise InputError("not enough source samples for a single batch")
        yield from batches


def train(cfg: TrainConfig, dataset: Dataset, split: DomainSplit | None = None,
          model_cfg: ModelConfig | None = None, log_path=None,
          checkpoint_dir=None) -> TrainResult:
    """Run the full alternating loop on the source domains of `split`
    (or the whole dataset when split is None). Returns the final model,
    the best-on-source-validation model, and the step records."""
    cfg.validate()
    model_cfg = model_cfg or ModelConfig()
    disabled = set(cfg.disable)
    adversarial = "AD" not in disabled

    sources = dataset.of_domains(split.source_domains) if split else list(dataset.samples)
    if not sources:
        raise InputError("empty source set")
    train_samples, val_samples = split_validation(
        sources, cfg.val_fraction, stream(cfg.seed, "valsplit"))

    dims = ModelDims(feature_dims=dict(dataset.feature_dims),
                     num_classes=dataset.num_classes,
                     num_domains=dataset.num_domains,
                     d_z=model_cfg.d_z, d_x=model_cfg.d_x,
                     split_projection="MD" not in disabled)
    model = CamoModel.initialize(dims, cfg.seed)

    opt_disc = Adam(model.discriminator_param_names(),
                    beta1=cfg.adam_beta1, beta2=cfg.adam_beta2, eps=cfg.adam_eps)
    opt_main = Adam(model.main_param_names(),
                    beta1=cfg.adam_beta1, beta2=cfg.adam_beta2, eps=cfg.adam_eps)

    rng_mixup = stream(cfg.seed, "mixup")
    batches = _epoch_stream(train_samples, cfg, stream(cfg.seed, "batch"))

    records: list[TrainLogRecord] = []
    best_model: CamoModel | None = None
    best_val: float | None = None
    ckpt_dir = Path(checkpoint_dir) if checkpoint_dir else None

    for it in range(cfg.total_iterations):
        gamma = gamma_schedule(it, cfg.gamma_max, cfg.gamma_ramp_iters) if adversarial else 0.0
        lr = lr_schedule(it, cfg.lr_init, cfg.lr_final, cfg.total_iterations)
        batch = batch_arrays(next(batches), model.dims.modalities)

        if adversarial:
            for _ in range(cfg.disc_steps_per_cycle):
                rec = train_step_disc(model, batch, opt_disc, lr, gamma)
                rec.iteration = it
                records.append(rec)
        for _ in range(cfg.task_steps_per_cycle):
            rec = train_step_task(model, batch, opt_main, lr, gamma, cfg, rng_mixup)
            rec.iteration = it
            records.append(rec)

        if val_samples and cfg.eval_every and (it + 1) % cfg.eval_every == 0:
            acc = _accuracy(model, val_samples)
            records[-1].val_accuracy = acc
            if best_val is None or acc >= best_val:
                best_val = acc
                best_model = model.copy()
        if ckpt_dir and cfg.checkpoint_every and (it + 1) % cfg.checkpoint_every == 0:
            from .checkpoint import save_checkpoint
            save_checkpoint(model, ckpt_dir / f"ckpt-{it + 1:06d}.zip")

    if val_samples and cfg.total_iterations:
        acc = _accuracy(model, val_samples)
        if best_val is None or acc >= best_val:
            best_val = acc
            best_model = model.copy()
    if best_model is None:
        best_model = model.copy()

    if ckpt_dir:
        from .checkpoint import save_checkpoint
        ckpt_dir.mkdir(parents=True, exist_ok=True)
        save_checkpoint(model, ckpt_dir / "ckpt-final.zip")
        save_checkpoint(best_model, ckpt_dir / "ckpt-best.zip")
    if log_path:
        path = Path(log_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w") as fh:
            for r in records:
                fh.write(json.dumps(r.to_json(), sort_keys=True) + "\n")

    return TrainResult(model=model, best_model=best_model,
                       best_val_accuracy=best_val, records=records)


def erm_config(cfg: TrainConfig) -> TrainConfig:
    """The all-toggles-off baseline configuration."""
    return replace(cfg, disable=TOGGLES)

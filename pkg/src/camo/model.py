"""Learnable components and their dataflow.

Per-modality projection heads split each encoder embedding into a
modal-specific half and a modal-general half (the general half is
L2-normalized). The concatenated general halves pass through a trunk MLP
that splits its output into a spurious component and a causal component;
the causal component feeds both the class head and the domain
discriminator.

Parameters live in a flat name -> float64 ndarray dict. Discriminator
parameters are exactly the names under the "disc." prefix, which is what
the alternating trainer freezes against.

Every *_fwd function returns a cache consumed by the matching *_bwd;
backward passes are hand-derived and are validated against central finite
differences in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .errors import InputError

NORM_EPS = 1e-8

_INIT_GAIN = 6.0  # uniform fan-in bound sqrt(gain / fan_in)


@dataclass(frozen=True)
class ModelDims:
    """Static shape information for one model instance."""

    feature_dims: dict[str, int]
    num_classes: int
    num_domains: int
    d_z: int = 64
    d_x: int = 64
    split_projection: bool = True

    @property
    def modalities(self) -> tuple[str, ...]:
        return tuple(sorted(self.feature_dims))

    @property
    def z_general_dim(self) -> int:
        # without the modal split the whole projection output acts as the
        # general feature
        return self.d_z if self.split_projection else 2 * self.d_z

    @property
    def z_concat_dim(self) -> int:
        return len(self.feature_dims) * self.z_general_dim

    def validate(self) -> None:
        if not self.feature_dims:
            raise InputError("at least one modality is required")
        for m, d in self.feature_dims.items():
            if d < 1:
                raise InputError(f"feature dim for modality {m!r} must be >= 1")
        for name, v in (("d_z", self.d_z), ("d_x", self.d_x),
                        ("num_classes", self.num_classes), ("num_domains", self.num_domains)):
            if v < 1:
                raise InputError(f"{name} must be >= 1")


@dataclass
class ProjectionOutput:
    modal_specific: np.ndarray
    modal_general: np.ndarray


@dataclass
class DisentangledPair:
    causal: np.ndarray
    spurious: np.ndarray


def _param_shapes(dims: ModelDims) -> list[tuple[str, tuple[int, ...]]]:
    """Canonical parameter enumeration; fixes init order and checkpoint layout."""
    shapes: list[tuple[str, tuple[int, ...]]] = []
    for m in dims.modalities:
        f = dims.feature_dims[m]
        shapes += [
            (f"proj.{m}.w1", (f, 2 * dims.d_z)),
            (f"proj.{m}.b1", (2 * dims.d_z,)),
            (f"proj.{m}.w2", (2 * dims.d_z, 2 * dims.d_z)),
            (f"proj.{m}.b2", (2 * dims.d_z,)),
        ]
    zin = dims.z_concat_dim
    shapes += [
        ("dis.w1", (zin, 2 * dims.d_x)), ("dis.b1", (2 * dims.d_x,)),
        ("dis.w2", (2 * dims.d_x, 2 * dims.d_x)), ("dis.b2", (2 * dims.d_x,)),
        ("dis.w3", (2 * dims.d_x, 2 * dims.d_x)), ("dis.b3", (2 * dims.d_x,)),
        ("cls.w", (dims.d_x, dims.num_classes)), ("cls.b", (dims.num_classes,)),
        ("disc.w1", (dims.d_x, dims.d_x)), ("disc.b1", (dims.d_x,)),
        ("disc.w2", (dims.d_x, dims.num_domains)), ("disc.b2", (dims.num_domains,)),
    ]
    return shapes


@dataclass
class CamoModel:
    """Parameter container for the projections, trunk, and the two heads."""

    dims: ModelDims
    params: dict[str, np.ndarray]
    seed: int = 0
    extra: dict = field(default_factory=dict)

    @classmethod
    def initialize(cls, dims: ModelDims, seed: int) -> "CamoModel":
        """Seeded uniform fan-in init for weights, zeros for biases."""
        from .rng import stream

        dims.validate()
        rng = stream(seed, "init")
        params: dict[str, np.ndarray] = {}
        for name, shape in _param_shapes(dims):
            if len(shape) == 2:
                bound = np.sqrt(_INIT_GAIN / shape[0])
                params[name] = rng.uniform(-bound, bound, size=shape)
            else:
                params[name] = np.zeros(shape)
        return cls(dims=dims, params=params, seed=seed)

    def param_names(self) -> list[str]:
        return [name for name, _ in _param_shapes(self.dims)]

    def discriminator_param_names(self) -> list[str]:
        return [n for n in self.param_names() if n.startswith("disc.")]

    def main_param_names(self) -> list[str]:
        return [n for n in self.param_names() if not n.startswith("disc.")]

    def copy(self) -> "CamoModel":
        return CamoModel(dims=self.dims, params={k: v.copy() for k, v in self.params.items()},
                         seed=self.seed, extra=dict(self.extra))


# ---------------------------------------------------------------------------
# forward / backward building blocks
# ---------------------------------------------------------------------------

def _as_batch(x: np.ndarray, dim: int, what: str) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != dim:
        raise InputError(f"{what}: expected vectors of dimension {dim}, got shape {x.shape}")
    return np.ascontiguousarray(x), single


def project_fwd(model: CamoModel, modality: str, f: np.ndarray):
    """Projection head forward over a batch. Returns (z_specific, z_general, cache).

    With split_projection the 2*d_z output is halved: first half
    modal-specific, second half modal-general. Otherwise z_specific is an
    empty (N, 0) array and the whole output is the general feature. The
    general feature is L2-normalized row-wise.
    """
    if modality not in model.dims.feature_dims:
        raise InputError(f"unknown modality {modality!r}")
    p = model.params
    x, _ = _as_batch(f, model.dims.feature_dims[modality], f"project[{modality}]")
    h_pre = x @ p[f"proj.{modality}.w1"] + p[f"proj.{modality}.b1"]
    h = K.relu_fwd(h_pre)
    out = h @ p[f"proj.{modality}.w2"] + p[f"proj.{modality}.b2"]
    split = model.dims.d_z if model.dims.split_projection else 0
    z_spec = out[:, :split]
    zg_raw = np.ascontiguousarray(out[:, split:])
    z_gen, norms = K.row_l2norm_fwd(zg_raw, NORM_EPS)
    cache = (x, h_pre, h, z_gen, norms, split)
    return z_spec, z_gen, cache


def project_bwd(model: CamoModel, modality: str, cache, d_spec: np.ndarray,
                d_gen: np.ndarray) -> dict[str, np.ndarray]:
    """Parameter gradients of the projection head.

    d_gen is the gradient w.r.t. the *normalized* general feature; d_spec
    w.r.t. the raw specific half.
    """
    p = model.params
    x, h_pre, h, z_gen, norms, split = cache
    d_raw = K.row_l2norm_bwd(z_gen, norms, np.ascontiguousarray(d_gen), NORM_EPS)
    d_out = np.concatenate([d_spec, d_raw], axis=1) if split else d_raw
    grads = {
        f"proj.{modality}.w2": h.T @ d_out,
        f"proj.{modality}.b2": d_out.sum(axis=0),
    }
    dh = K.relu_bwd(h_pre, d_out @ p[f"proj.{modality}.w2"].T)
    grads[f"proj.{modality}.w1"] = x.T @ dh
    grads[f"proj.{modality}.b1"] = dh.sum(axis=0)
    return grads


def disentangle_fwd(model: CamoModel, z_concat: np.ndarray):
    """Trunk MLP forward. Returns (x_spurious, x_causal, cache).

    The 2*d_x output is halved: first half spurious, second half causal.
    """
    p = model.params
    x, _ = _as_batch(z_concat, model.dims.z_concat_dim, "disentangle")
    h1_pre = x @ p["dis.w1"] + p["dis.b1"]
    h1 = K.relu_fwd(h1_pre)
    h2_pre = h1 @ p["dis.w2"] + p["dis.b2"]
    h2 = K.relu_fwd(h2_pre)
    out = h2 @ p["dis.w3"] + p["dis.b3"]
    d_x = model.dims.d_x
    cache = (x, h1_pre, h1, h2_pre, h2)
    return out[:, :d_x], out[:, d_x:], cache


def disentangle_bwd(model: CamoModel, cache, d_spur: np.ndarray, d_caus: np.ndarray):
    """Returns (param grads, gradient w.r.t. the concatenated input)."""
    p = model.params
    x, h1_pre, h1, h2_pre, h2 = cache
    d_out = np.concatenate([d_spur, d_caus], axis=1)
    grads = {"dis.w3": h2.T @ d_out, "dis.b3": d_out.sum(axis=0)}
    dh2 = K.relu_bwd(h2_pre, d_out @ p["dis.w3"].T)
    grads["dis.w2"] = h1.T @ dh2
    grads["dis.b2"] = dh2.sum(axis=0)
    dh1 = K.relu_bwd(h1_pre, dh2 @ p["dis.w2"].T)
    grads["dis.w1"] = x.T @ dh1
    grads["dis.b1"] = dh1.sum(axis=0)
    dz = dh1 @ p["dis.w1"].T
    return grads, dz


def classify_fwd(model: CamoModel, x_c: np.ndarray):
    x, _ = _as_batch(x_c, model.dims.d_x, "classify")
    logits = x @ model.params["cls.w"] + model.params["cls.b"]
    return logits, x


def classify_bwd(model: CamoModel, cache, d_logits: np.ndarray):
    x = cache
    grads = {"cls.w": x.T @ d_logits, "cls.b": d_logits.sum(axis=0)}
    dx = d_logits @ model.params["cls.w"].T
    return grads, dx


def discriminate_fwd(model: CamoModel, x_c: np.ndarray):
    p = model.params
    x, _ = _as_batch(x_c, model.dims.d_x, "discriminate")
    h_pre = x @ p["disc.w1"] + p["disc.b1"]
    h = K.relu_fwd(h_pre)
    logits = h @ p["disc.w2"] + p["disc.b2"]
    return logits, (x, h_pre, h)


def discriminate_bwd(model: CamoModel, cache, d_logits: np.ndarray,
                     with_param_grads: bool = True):
    """Returns (param grads or {}, gradient w.r.t. x_c).

    The task step freezes the discriminator, so it asks only for the input
    gradient.
    """
    p = model.params
    x, h_pre, h = cache
    grads: dict[str, np.ndarray] = {}
    if with_param_grads:
        grads["disc.w2"] = h.T @ d_logits
        grads["disc.b2"] = d_logits.sum(axis=0)
    dh = K.relu_bwd(h_pre, d_logits @ p["disc.w2"].T)
    if with_param_grads:
        grads["disc.w1"] = x.T @ dh
        grads["disc.b1"] = dh.sum(axis=0)
    dx = dh @ p["disc.w1"].T
    return grads, dx


# ---------------------------------------------------------------------------
# public single-sample operations
# ---------------------------------------------------------------------------

def project(model: CamoModel, modality: str, f: np.ndarray) -> ProjectionOutput:
    """Split one embedding into its modal-specific / modal-general parts."""
    z_spec, z_gen, _ = project_fwd(model, modality, f)
    if np.asarray(f).ndim == 1:
        return ProjectionOutput(modal_specific=z_spec[0], modal_general=z_gen[0])
    return ProjectionOutput(modal_specific=z_spec, modal_general=z_gen)


def disentangle(model: CamoModel, z_concat: np.ndarray) -> DisentangledPair:
    """Split the concatenated modal-general features into causal / spurious."""
    x_s, x_c, _ = disentangle_fwd(model, z_concat)
    if np.asarray(z_concat).ndim == 1:
        return DisentangledPair(causal=x_c[0], spurious=x_s[0])
    return DisentangledPair(causal=x_c, spurious=x_s)


def classify(model: CamoModel, x_c: np.ndarray) -> np.ndarray:
    logits, _ = classify_fwd(model, x_c)
    return logits[0] if np.asarray(x_c).ndim == 1 else logits


def discriminate(model: CamoModel, x_c: np.ndarray) -> np.ndarray:
    logits, _ = discriminate_fwd(model, x_c)
    return logits[0] if np.asarray(x_c).ndim == 1 else logits


# ---------------------------------------------------------------------------
# gradient reversal
# ---------------------------------------------------------------------------

def grad_reverse(x: np.ndarray, gamma: float) -> np.ndarray:
    """Identity in the forward pass; the backward rule is grad_reverse_backward.

    This is a differentiation-rule contract: during backpropagation the
    incoming gradient g is replaced by -gamma * g, turning minimization of
    a downstream loss into maximization for upstream parameters.
    """
    if gamma < 0:
        raise InputError("gradient reversal multiplier must be non-negative")
    return x


def grad_reverse_backward(dy: np.ndarray, gamma: float) -> np.ndarray:
    """Backward rule paired with grad_reverse."""
    return -gamma * dy

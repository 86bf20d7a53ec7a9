"""Model checkpoints: one zip archive holding a JSON header plus raw
little-endian float32 tensors keyed by canonical parameter names.

Timestamps inside the archive are pinned so identical runs produce
byte-identical files.
"""

from __future__ import annotations

import json
import zipfile
from pathlib import Path

import numpy as np

from .errors import DataLoadError
from .model import CamoModel, ModelDims, _param_shapes

CHECKPOINT_VERSION = 1
_EPOCH = (1980, 1, 1, 0, 0, 0)


def save_checkpoint(model: CamoModel, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "format_version": CHECKPOINT_VERSION,
        "seed": int(model.seed),
        "dims": {
            "feature_dims": {m: int(d) for m, d in model.dims.feature_dims.items()},
            "num_classes": int(model.dims.num_classes),
            "num_domains": int(model.dims.num_domains),
            "d_z": int(model.dims.d_z),
            "d_x": int(model.dims.d_x),
            "split_projection": bool(model.dims.split_projection),
        },
        "modalities": list(model.dims.modalities),
        "params": model.param_names(),
    }
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        info = zipfile.ZipInfo("header.json", date_time=_EPOCH)
        zf.writestr(info, json.dumps(header, indent=2, sort_keys=True))
        for name in model.param_names():
            info = zipfile.ZipInfo(f"params/{name}", date_time=_EPOCH)
            zf.writestr(info, model.params[name].astype("<f4").tobytes())
    return path


def load_checkpoint(path) -> CamoModel:
    path = Path(path)
    if not path.exists():
        raise DataLoadError(f"checkpoint {path} does not exist")
    try:
        with zipfile.ZipFile(path) as zf:
            header = json.loads(zf.read("header.json"))
            dims = ModelDims(
                feature_dims={m: int(d) for m, d in header["dims"]["feature_dims"].items()},
                num_classes=int(header["dims"]["num_classes"]),
                num_domains=int(header["dims"]["num_domains"]),
                d_z=int(header["dims"]["d_z"]),
                d_x=int(header["dims"]["d_x"]),
                split_projection=bool(header["dims"]["split_projection"]),
            )
            params = {}
            for name, shape in _param_shapes(dims):
                raw = np.frombuffer(zf.read(f"params/{name}"), dtype="<f4")
                if raw.size != int(np.prod(shape)):
                    raise DataLoadError(f"checkpoint tensor {name} has wrong size")
                params[name] = raw.astype(np.float64).reshape(shape)
    except (KeyError, zipfile.BadZipFile, json.JSONDecodeError) as e:
        raise DataLoadError(f"checkpoint {path} is malformed: {e}") from e
    return CamoModel(dims=dims, params=params, seed=int(header["seed"]))

"""Single-file checkpoints: a zip of ``.npy`` tensors plus JSON config and metadata.

Entry names:

- ``config.json``            network configuration
- ``meta.json``              free-form run metadata (training state, ...)
- ``params/<name>.npy``      one per ``model.named_parameters()`` entry
- ``<group>/<name>.npy``     any extra tensor groups, e.g. ``adam_m`` / ``adam_v``

Entries are written in sorted order with a fixed timestamp, so equal contents
give byte-identical files.
"""

from __future__ import annotations

import io
import json
import zipfile

import numpy as np
import torch

from ..errors import DimensionError, FormatError
from .model import EBSRNet, NetworkConfig

_EPOCH = (1980, 1, 1, 0, 0, 0)


def _entry(zf, name, payload: bytes):
    info = zipfile.ZipInfo(name, date_time=_EPOCH)
    info.compress_type = zipfile.ZIP_STORED
    info.external_attr = 0o644 << 16
    zf.writestr(info, payload)


def _npy_bytes(t) -> bytes:
    buf = io.BytesIO()
    arr = t.detach().cpu().numpy() if isinstance(t, torch.Tensor) else np.asarray(t)
    np.lib.format.write_array(buf, np.ascontiguousarray(arr), allow_pickle=False)
    return buf.getvalue()


def save_checkpoint(path, model: EBSRNet, meta: dict | None = None, groups: dict | None = None):
    """``groups`` maps a group name to a dict of name -> tensor."""
    tensors = {f"params/{k}": v for k, v in model.named_parameters()}
    for group, entries in (groups or {}).items():
        tensors.update({f"{group}/{k}": v for k, v in entries.items()})
    with zipfile.ZipFile(path, "w") as zf:
        _entry(zf, "config.json", json.dumps(model.cfg.to_dict(), sort_keys=True).encode())
        _entry(zf, "meta.json", json.dumps(meta or {}, sort_keys=True).encode())
        for key in sorted(tensors):
            _entry(zf, key + ".npy", _npy_bytes(tensors[key]))


def read_checkpoint(path):
    """Return ``(config, tensors, meta)`` with tensors keyed ``group/name``."""
    try:
        zf = zipfile.ZipFile(path)
    except zipfile.BadZipFile as exc:
        raise FormatError(f"not a checkpoint archive: {exc}", 0) from exc
    with zf:
        names = zf.namelist()
        if "config.json" not in names:
            raise FormatError("checkpoint has no config.json", 0)
        cfg = NetworkConfig.from_dict(json.loads(zf.read("config.json")))
        meta = json.loads(zf.read("meta.json")) if "meta.json" in names else {}
        tensors = {}
        for name in names:
            if name.endswith(".npy"):
                tensors[name[:-4]] = np.lib.format.read_array(io.BytesIO(zf.read(name)), allow_pickle=False)
    return cfg, tensors, meta


def load_state_into(model: EBSRNet, tensors: dict, group="params"):
    """Copy ``group/*`` tensors into the model, validating every name and shape."""
    expected = dict(model.named_parameters())
    prefix = group + "/"
    found = {k[len(prefix):]: v for k, v in tensors.items() if k.startswith(prefix)}
    missing = set(expected) - set(found)
    extra = set(found) - set(expected)
    if missing or extra:
        raise DimensionError(f"checkpoint/config mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
    with torch.no_grad():
        for name, p in expected.items():
            arr = found[name]
            if tuple(arr.shape) != tuple(p.shape):
                raise DimensionError(f"{name}: checkpoint shape {arr.shape} vs model {tuple(p.shape)}")
            p.copy_(torch.from_numpy(arr))


def load_model(path, dtype=torch.float32):
    """Rebuild the model stored at ``path``; returns ``(model, meta)``."""
    cfg, tensors, meta = read_checkpoint(path)
    model = EBSRNet(cfg).to(dtype)
    load_state_into(model, tensors)
    return model, meta

"""Deterministic checkpoint archives.

An archive is an uncompressed zip holding ``meta.json`` (format name,
version, JSON metadata) plus one ``.npy`` member per named array. Member
timestamps and ordering are fixed, so writing the same content twice gives
byte-identical files.
"""

import io
import json
import zipfile
from pathlib import Path

import numpy as np

from .errors import CheckpointError

FORMAT = "ptgan-checkpoint"
VERSION = 1
_EPOCH = (1980, 1, 1, 0, 0, 0)


def _member(zf, name, data):
    info = zipfile.ZipInfo(name, date_time=_EPOCH)
    info.compress_type = zipfile.ZIP_STORED
    info.external_attr = 0o644 << 16
    zf.writestr(info, data)


def save_archive(path, meta, arrays):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {"format": FORMAT, "version": VERSION, **meta}
    tmp = path.with_name(path.name + ".tmp")
    with zipfile.ZipFile(tmp, "w") as zf:
        _member(zf, "meta.json", json.dumps(header, sort_keys=True, indent=1).encode())
        for name in sorted(arrays):
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.ascontiguousarray(arrays[name]), allow_pickle=False)
            _member(zf, name + ".npy", buf.getvalue())
    tmp.replace(path)
    return path


def load_archive(path):
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        with zipfile.ZipFile(path) as zf:
            meta = json.loads(zf.read("meta.json"))
            arrays = {}
            for name in zf.namelist():
                if name.endswith(".npy"):
                    with zf.open(name) as fh:
                        arrays[name[:-4]] = np.lib.format.read_array(
                            io.BytesIO(fh.read()), allow_pickle=False
                        )
    except (zipfile.BadZipFile, KeyError, ValueError) as exc:
        raise CheckpointError(f"unreadable checkpoint {path}: {exc}") from exc
    if meta.get("format") != FORMAT:
        raise CheckpointError(f"{path} is not a {FORMAT} archive")
    if "version" not in meta:
        raise CheckpointError(f"{path} has no version field")
    if meta["version"] > VERSION:
        raise CheckpointError(f"{path} has version {meta['version']}, newest supported is {VERSION}")
    return meta, arrays

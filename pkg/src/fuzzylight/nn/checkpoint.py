"""Named-tensor checkpoint files.

Plain-text flat format, one record per tensor: a header line with the name
and shape, followed by the row-major values. Floats are written with
``repr`` so they round-trip float64 exactly. The file starts with a single
JSON metadata line used to carry model/scenario configuration.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

_MAGIC = "#fuzzylight-tensors-v1"
_VALUES_PER_LINE = 16


def save_tensors(path, named: dict[str, np.ndarray], meta: dict | None = None) -> None:
    path = Path(path)
    lines = [f"{_MAGIC} {json.dumps(meta or {}, sort_keys=True)}"]
    for name in sorted(named):
        arr = np.asarray(named[name], dtype=np.float64)
        dims = " ".join(str(d) for d in arr.shape)
        lines.append(f">{name} {dims}".rstrip())
        flat = arr.ravel()
        for i in range(0, flat.size, _VALUES_PER_LINE):
            lines.append(" ".join(repr(float(v)) for v in flat[i:i + _VALUES_PER_LINE]))
    path.write_text("\n".join(lines) + "\n")


def load_tensors(path) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(path)
    text = path.read_text().splitlines()
    if not text or not text[0].startswith(_MAGIC):
        raise ValueError(f"{path}: not a tensor checkpoint file")
    meta = json.loads(text[0][len(_MAGIC):].strip() or "{}")
    named: dict[str, np.ndarray] = {}
    i = 1
    while i < len(text):
        line = text[i].strip()
        i += 1
        if not line:
            continue
        if not line.startswith(">"):
            raise ValueError(f"{path}: expected tensor header, got {line!r}")
        parts = line[1:].split()
        name, shape = parts[0], tuple(int(d) for d in parts[1:])
        count = int(np.prod(shape)) if shape else 1
        values: list[float] = []
        while len(values) < count:
            values.extend(float(tok) for tok in text[i].split())
            i += 1
        if len(values) != count:
            raise ValueError(f"{path}: wrong value count for tensor {name}")
        named[name] = np.array(values, dtype=np.float64).reshape(shape)
    return named, meta

"""Feature file format shared with external extractors.

Layout: magic bytes "AFS1", u32 little-endian row count N, u32
little-endian feature dimension D, N*D float32 little-endian values in
row order, then a UTF-8 JSON trailer running to end of file with
extractor metadata (extractor tag, resize policy). Files written by any
conforming producer parse bit-exactly here.
"""

from __future__ import annotations

import json
import struct
from typing import Dict, Tuple

import numpy as np

from .errors import InputError
from .metrics import FeatureSet

AFS1_MAGIC = b"AFS1"


def write_afs1(features: FeatureSet, path: str, metadata: Dict = None) -> None:
    meta = dict(metadata or {})
    with open(path, "wb") as fh:
        fh.write(AFS1_MAGIC)
        fh.write(struct.pack("<II", features.n, features.d))
        fh.write(np.ascontiguousarray(features.rows, dtype="<f4").tobytes())
        fh.write(json.dumps(meta, sort_keys=True).encode("utf-8"))


def read_afs1(path: str) -> Tuple[FeatureSet, Dict]:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise InputError("cannot read feature file %r: %s" % (str(path), exc)) from exc
    if blob[:4] != AFS1_MAGIC:
        raise InputError("%r is not a feature file (bad magic)" % str(path))
    if len(blob) < 12:
        raise InputError("truncated feature file %r" % str(path))
    n, d = struct.unpack_from("<II", blob, 4)
    end = 12 + n * d * 4
    if len(blob) < end:
        raise InputError(
            "feature file %r truncated: header promises %d rows of %d"
            % (str(path), n, d)
        )
    rows = np.frombuffer(blob, dtype="<f4", count=n * d, offset=12).reshape(n, d)
    trailer = blob[end:]
    if trailer:
        try:
            metadata = json.loads(trailer.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise InputError("corrupt metadata trailer in %r" % str(path)) from exc
    else:
        metadata = {}
    return FeatureSet(rows=rows.copy()), metadata

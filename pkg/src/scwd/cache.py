"""Weight reuse across calls (in memory) and across processes (on disk)."""
from __future__ import annotations

import logging
import os
from collections import OrderedDict
from pathlib import Path

from .geometry import LatLonGrid
from .io import read_weights, write_weights
from .kernel import SparseWeightSet, parse_range, precompute_weights, weights_digest

logger = logging.getLogger(__name__)

CACHE_ENV = "SCWD_CACHE_DIR"
_MEMORY_LIMIT = 4
_memory: OrderedDict[bytes, SparseWeightSet] = OrderedDict()


def cache_dir_from_env() -> Path | None:
    value = os.environ.get(CACHE_ENV)
    return Path(value) if value else None


def weights_path(cache_dir, digest: bytes) -> Path:
    return Path(cache_dir) / f"weights-{digest.hex()[:24]}.scwdw"


def get_weights(centers: LatLonGrid, work: LatLonGrid, range_km, threads=None, cache_dir=None) -> SparseWeightSet:
    range_km = parse_range(range_km)
    digest = weights_digest(centers, work, range_km)
    hit = _memory.get(digest)
    if hit is not None:
        _memory.move_to_end(digest)
        return hit
    path = weights_path(cache_dir, digest) if cache_dir else None
    if path is not None and path.exists():
        logger.info("loading weights from %s", path)
        weights = read_weights(path, expect_digest=digest)
    else:
        weights = precompute_weights(centers, work, range_km, threads=threads)
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            write_weights(weights, path)
            logger.info("cached weights in %s", path)
    _memory[digest] = weights
    while len(_memory) > _MEMORY_LIMIT:
        _memory.popitem(last=False)
    return weights


def clear_memory_cache() -> None:
    _memory.clear()

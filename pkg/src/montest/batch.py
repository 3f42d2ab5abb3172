"""Vectorized tester invocations.

:func:`simulate` runs many independent invocations of
:func:`montest.tester.run_once` at once.  Trial ``i`` reads its randomness
from stream ``(seed, i)`` with the same draw layout as the scalar tester
(draw 0 picks k, draw 1 the start point, draws 2.. the walk steps), so every
trial's outcome, witness and query counts equal ``run_once(f, Stream(seed, i))``.

Requires a vectorized function (``query_many``) with n <= 64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hypercube import ceil_log2
from .rng import below_array, draw_array, stream_keys

_TARGET_CELLS = 1 << 21


def supports_batch(f) -> bool:
    return f.n <= 64 and getattr(f, "vectorized", False)


@dataclass
class BatchResult:
    trial_ids: np.ndarray
    ell: np.ndarray
    rejected: np.ndarray
    step: np.ndarray             # t of the returned edge, 0 when endpoints agree
    witness_lower: np.ndarray    # meaningful where rejected
    witness_coord: np.ndarray    # 1-based; meaningful where rejected
    queries_total: np.ndarray
    queries_distinct: np.ndarray

    def __len__(self) -> int:
        return self.trial_ids.size


def _walk_lengths(keys: np.ndarray, n: int, ell: int | None) -> np.ndarray:
    if ell is not None:
        return np.full(keys.size, ell, dtype=np.int64)
    k = below_array(draw_array(keys, 0), ceil_log2(n) + 1).astype(np.int64)
    return np.left_shift(1, k)


def _run_fixed_length(f, n: int, keys: np.ndarray, ell: int, lazy: bool) -> tuple[np.ndarray, ...]:
    size = keys.size
    rows = np.arange(size)
    mask = np.uint64((1 << n) - 1) if n < 64 else np.uint64(0xFFFFFFFFFFFFFFFF)
    start = draw_array(keys, 1) & mask
    paths = np.empty((size, ell + 1), dtype=np.uint64)
    paths[:, 0] = start
    if ell:
        toggles = np.empty((size, ell), dtype=np.uint64)
        for j in range(ell):
            raw = draw_array(keys, 2 + j)
            if lazy:
                # Mutation hook: a lazy walk stays put with probability 1/2.
                c = below_array(raw, 2 * n)
                toggles[:, j] = np.where(c < n, np.left_shift(np.uint64(1), c % np.uint64(n)), np.uint64(0))
            else:
                toggles[:, j] = np.left_shift(np.uint64(1), below_array(raw, n))
        paths[:, 1:] = start[:, None] ^ np.bitwise_xor.accumulate(toggles, axis=1)
    vals = f.query_many(paths.ravel()).reshape(size, ell + 1)

    differ = vals[:, 0] != vals[:, ell]
    lo = np.zeros(size, dtype=np.int64)
    hi = np.full(size, ell, dtype=np.int64)
    probes = [paths[:, 0], paths[:, ell]]
    n_mid = np.zeros(size, dtype=np.int64)
    active = differ & (hi - lo > 1)
    while active.any():
        mid = (lo + hi) // 2
        go_left = vals[rows, mid] != vals[rows, lo]
        hi = np.where(active & go_left, mid, hi)
        lo = np.where(active & ~go_left, mid, lo)
        probes.append(np.where(active, paths[rows, mid], paths[:, 0]))
        n_mid += active
        active = differ & (hi - lo > 1)

    t = np.where(differ, hi, 0)
    tt = np.maximum(t, 1) if ell else t
    a = paths[rows, tt - 1] if ell else paths[:, 0]
    b = paths[rows, tt] if ell else paths[:, 0]
    lower = np.minimum(a, b)
    lower_val = np.where(a < b, vals[rows, tt - 1], vals[rows, tt]) if ell else vals[:, 0]
    rejected = differ & (lower_val == 1)
    coord = (np.bitwise_count((a ^ b) - np.uint64(1)) + 1).astype(np.int64)

    probe_matrix = np.sort(np.stack(probes, axis=1), axis=1)
    distinct = 1 + np.count_nonzero(np.diff(probe_matrix, axis=1), axis=1)
    # endpoints + probes, then the violation check reads f(lower) and, only
    # when that is 1, f(upper)
    total = 2 + n_mid + np.where(differ, 1 + (lower_val == 1), 0)
    return rejected, t, lower, np.where(rejected, coord, 0), total, distinct


def simulate(f, seed: int, trial_ids, ell: int | None = None, lazy: bool = False) -> BatchResult:
    """Run one tester invocation per trial id; ``ell`` fixes the walk length."""
    if not supports_batch(f):
        raise ValueError("batch simulation needs a vectorized function with n <= 64")
    n = f.n
    ids = np.asarray(trial_ids, dtype=np.uint64).ravel()
    keys = stream_keys(seed, ids)
    lengths = _walk_lengths(keys, n, ell)
    size = ids.size
    rejected = np.zeros(size, dtype=bool)
    step = np.zeros(size, dtype=np.int64)
    lower = np.zeros(size, dtype=np.uint64)
    coord = np.zeros(size, dtype=np.int64)
    total = np.zeros(size, dtype=np.int64)
    distinct = np.zeros(size, dtype=np.int64)
    for length in np.unique(lengths):
        length = int(length)
        where = np.flatnonzero(lengths == length)
        chunk = max(1024, _TARGET_CELLS // (length + 1))
        for lo in range(0, where.size, chunk):
            sel = where[lo:lo + chunk]
            r, t, lw, c, tot, dis = _run_fixed_length(f, n, keys[sel], length, lazy)
            rejected[sel], step[sel], lower[sel], coord[sel] = r, t, lw, c
            total[sel], distinct[sel] = tot, dis
    return BatchResult(ids, lengths, rejected, step, lower, coord, total, distinct)

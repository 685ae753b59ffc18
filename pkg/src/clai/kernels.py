"""Hot numeric kernels: batched Levenshtein DP and CSR sparse dot products.

These two inner loops dominate the numeric cost of a session: typo scans run
the edit-distance DP against every command found on PATH (easily thousands of
candidates), and every retrieval query is one sparse-matrix/dense-vector
product over the document matrix.

Both kernels exist in two implementations selected at call time:

* a numba ``@njit(cache=True)`` version (default), and
* a pure-numpy version, chosen when the ``CLAI_NUMBA`` environment variable
  is ``0`` or when numba is unavailable.

numba is imported lazily so that sessions which never touch a kernel (plain
shell use, meta commands) never pay the import or JIT cost.
"""

from __future__ import annotations

import os
import threading

import numpy as np

_ENV_FLAG = "CLAI_NUMBA"

# JIT state. The first JIT compile on a machine takes seconds, far beyond any
# skill deadline, so compilation runs on a background thread and calls are
# served by the numpy path until the compiled kernels are ready. numba caches
# compiled code on disk, so later sessions flip over almost immediately.
_lock = threading.Lock()
_numba_impls: dict | None = None
_numba_thread: threading.Thread | None = None
_numba_failed = False


def _encode(text: str) -> np.ndarray:
    """Code points of ``text`` as a uint32 vector (UTF-32, no surrogates)."""
    return np.frombuffer(text.encode("utf-32-le"), dtype=np.uint32)


def reset_backend() -> None:
    """Forget JIT failure state (tests flip CLAI_NUMBA and call this)."""
    global _numba_failed
    with _lock:
        _numba_failed = False


def _compile_in_background() -> None:
    global _numba_impls, _numba_failed
    try:
        impls = _build_numba_impls()
        # Trigger compilation now so the first real call does not pay for it.
        impls["lev_batch"](
            _encode("ab"), np.zeros((1, 2), dtype=np.uint32),
            np.array([2], dtype=np.int32), np.empty(1, dtype=np.int32),
        )
        impls["csr_dot"](
            np.array([0, 1], dtype=np.int64), np.array([0], dtype=np.int64),
            np.array([1.0]), np.array([1.0]), np.empty(1, dtype=np.float64),
        )
    except Exception:
        with _lock:
            _numba_failed = True
        return
    with _lock:
        _numba_impls = impls


def ensure_numba(timeout: float | None = None) -> bool:
    """Block until the JIT kernels are usable (or known unusable)."""
    global _numba_thread
    if os.environ.get(_ENV_FLAG, "1") == "0":
        return False
    with _lock:
        if _numba_impls is not None:
            return True
        if _numba_failed:
            return False
        if _numba_thread is None or not _numba_thread.is_alive():
            _numba_thread = threading.Thread(target=_compile_in_background, daemon=True)
            _numba_thread.start()
        thread = _numba_thread
    thread.join(timeout)
    with _lock:
        return _numba_impls is not None


def active_backend() -> str:
    """The backend the next kernel call will take, honoring CLAI_NUMBA."""
    global _numba_thread
    if os.environ.get(_ENV_FLAG, "1") == "0":
        return "numpy"
    with _lock:
        if _numba_impls is not None:
            return "numba"
        if _numba_failed:
            return "numpy"
        if _numba_thread is None or not _numba_thread.is_alive():
            _numba_thread = threading.Thread(target=_compile_in_background, daemon=True)
            _numba_thread.start()
    return "numpy"  # serve numpy until the JIT lands


def _build_numba_impls() -> dict:
    from numba import njit

    @njit(cache=True)
    def _lev_batch(query, cand, lengths, out):  # pragma: no cover - jitted
        m = query.shape[0]
        n_cand = cand.shape[0]
        width = cand.shape[1]
        prev = np.empty(width + 1, dtype=np.int32)
        cur = np.empty(width + 1, dtype=np.int32)
        for c in range(n_cand):
            n = lengths[c]
            for j in range(n + 1):
                prev[j] = j
            for i in range(1, m + 1):
                cur[0] = i
                qc = query[i - 1]
                for j in range(1, n + 1):
                    cost = 0 if cand[c, j - 1] == qc else 1
                    best = prev[j - 1] + cost
                    if prev[j] + 1 < best:
                        best = prev[j] + 1
                    if cur[j - 1] + 1 < best:
                        best = cur[j - 1] + 1
                    cur[j] = best
                for j in range(n + 1):
                    prev[j] = cur[j]
            out[c] = prev[n]
        return out

    @njit(cache=True)
    def _csr_dot(indptr, indices, data, dense, out):  # pragma: no cover - jitted
        for row in range(indptr.shape[0] - 1):
            acc = 0.0
            for k in range(indptr[row], indptr[row + 1]):
                acc += data[k] * dense[indices[k]]
            out[row] = acc
        return out

    return {"lev_batch": _lev_batch, "csr_dot": _csr_dot}


def _lev_batch_numpy(query: np.ndarray, cand: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    """DP over (query char, candidate position), vectorized across candidates."""
    m = query.shape[0]
    n_cand, width = cand.shape
    prev = np.broadcast_to(np.arange(width + 1, dtype=np.int32), (n_cand, width + 1)).copy()
    cur = np.empty_like(prev)
    for i in range(1, m + 1):
        cur[:, 0] = i
        mismatch = (cand != query[i - 1]).astype(np.int32)
        for j in range(1, width + 1):
            sub = prev[:, j - 1] + mismatch[:, j - 1]
            np.minimum(sub, prev[:, j] + 1, out=sub)
            np.minimum(sub, cur[:, j - 1] + 1, out=sub)
            cur[:, j] = sub
        prev, cur = cur, prev
    return prev[np.arange(n_cand), lengths].astype(np.int32)


def levenshtein_batch(query: str, candidates: list[str]) -> np.ndarray:
    """Plain Levenshtein distance from ``query`` to each candidate.

    Insertions, deletions, and substitutions all cost 1; no transpositions.
    """
    if not candidates:
        return np.empty(0, dtype=np.int32)
    q = _encode(query)
    lengths = np.array([len(c) for c in candidates], dtype=np.int32)
    width = max(1, int(lengths.max()))
    cand = np.zeros((len(candidates), width), dtype=np.uint32)
    for i, c in enumerate(candidates):
        if c:
            cand[i, : len(c)] = _encode(c)
    if len(q) == 0:
        return lengths.copy()
    if active_backend() == "numba":
        out = np.empty(len(candidates), dtype=np.int32)
        return _numba_impls["lev_batch"](q, cand, lengths, out)
    return _lev_batch_numpy(q, cand, lengths)


def levenshtein(a: str, b: str) -> int:
    return int(levenshtein_batch(a, [b])[0])


def csr_dot_dense(
    indptr: np.ndarray, indices: np.ndarray, data: np.ndarray, dense: np.ndarray
) -> np.ndarray:
    """Row-wise dot products of a CSR matrix with a dense vector."""
    n_rows = indptr.shape[0] - 1
    if data.shape[0] == 0:
        return np.zeros(n_rows, dtype=np.float64)
    if active_backend() == "numba":
        out = np.empty(n_rows, dtype=np.float64)
        return _numba_impls["csr_dot"](indptr, indices, data, dense, out)
    contrib = data * dense[indices]
    row_ids = np.repeat(np.arange(n_rows), np.diff(indptr))
    return np.bincount(row_ids, weights=contrib, minlength=n_rows)


def warmup(timeout: float | None = None) -> str:
    """Force JIT compilation (blocking) ahead of a timed path."""
    ensure_numba(timeout)
    levenshtein_batch("warm", ["warmup", "warp"])
    csr_dot_dense(
        np.array([0, 1, 2], dtype=np.int64),
        np.array([0, 1], dtype=np.int64),
        np.array([1.0, 2.0]),
        np.array([3.0, 4.0]),
    )
    return active_backend()

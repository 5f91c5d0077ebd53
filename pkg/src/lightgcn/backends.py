"""Numeric kernels with a numba fast path and a pure-numpy fallback.

The two hot loops of the engine live here: the CSR sparse-times-dense
product that drives embedding propagation, and the row scatter that
accumulates pairwise-ranking gradients over a batch.

Backend selection: the ``LIGHTGCN_BACKEND`` environment variable may be
set to ``numba`` or ``numpy`` before import; otherwise numba is used when
importable. ``set_backend()`` switches at runtime (used by the benchmark
and the backend-parity tests). Both backends accumulate each output row
in a fixed order, so results are reproducible run to run.
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba
    from numba import njit, prange

    numba.config.THREADING_LAYER = "workqueue"
    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is an install-time dependency
    NUMBA_AVAILABLE = False

ENV_VAR = "LIGHTGCN_BACKEND"


# ---------------------------------------------------------------------------
# pure-numpy implementations


def _spmm_numpy(offsets: np.ndarray, cols: np.ndarray, vals: np.ndarray,
                dense: np.ndarray) -> np.ndarray:
    nrows = offsets.size - 1
    out = np.zeros((nrows, dense.shape[1]), dtype=np.float64)
    nnz = cols.size
    if nnz == 0:
        return out
    contrib = vals[:, None] * dense[cols]
    starts = offsets[:-1]
    # reduceat needs start indices < nnz; rows past the last stored entry
    # are necessarily empty and stay zero.
    n_valid = int(np.searchsorted(starts, nnz, side="left"))
    sums = np.add.reduceat(contrib, starts[:n_valid], axis=0)
    nonempty = offsets[1 : n_valid + 1] > starts[:n_valid]
    out[:n_valid][nonempty] = sums[nonempty]
    return out


def _bpr_scatter_numpy(users: np.ndarray, pos_rows: np.ndarray, neg_rows: np.ndarray,
                       coefs: np.ndarray, emb: np.ndarray, out: np.ndarray) -> None:
    pair_term = coefs[:, None] * (emb[pos_rows] - emb[neg_rows])
    user_term = coefs[:, None] * emb[users]
    np.add.at(out, users, pair_term)
    np.add.at(out, pos_rows, user_term)
    np.subtract.at(out, neg_rows, user_term)


# ---------------------------------------------------------------------------
# numba implementations

if NUMBA_AVAILABLE:

    @njit(cache=True, parallel=True)
    def _spmm_numba(offsets, cols, vals, dense, out):
        nrows = offsets.size - 1
        width = dense.shape[1]
        for p in prange(nrows):  # each output row has exactly one writer
            for t in range(width):
                out[p, t] = 0.0
            for j in range(offsets[p], offsets[p + 1]):
                w = vals[j]
                q = cols[j]
                for t in range(width):
                    out[p, t] += w * dense[q, t]

    @njit(cache=True)
    def _bpr_scatter_numba(users, pos_rows, neg_rows, coefs, emb, out):
        width = emb.shape[1]
        for b in range(users.size):  # serial: rows repeat within a batch
            u = users[b]
            i = pos_rows[b]
            j = neg_rows[b]
            c = coefs[b]
            for t in range(width):
                out[u, t] += c * (emb[i, t] - emb[j, t])
                out[i, t] += c * emb[u, t]
                out[j, t] -= c * emb[u, t]


# ---------------------------------------------------------------------------
# dispatch

_active_backend = ""


def available_backends() -> tuple[str, ...]:
    return ("numba", "numpy") if NUMBA_AVAILABLE else ("numpy",)


def set_backend(name: str) -> None:
    global _active_backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}; expected 'numba' or 'numpy'")
    if name == "numba" and not NUMBA_AVAILABLE:
        raise RuntimeError("numba backend requested but numba is not importable")
    _active_backend = name


def get_backend() -> str:
    return _active_backend


def _init_backend() -> None:
    requested = os.environ.get(ENV_VAR, "").strip().lower()
    if requested:
        set_backend(requested)
    else:
        set_backend("numba" if NUMBA_AVAILABLE else "numpy")


def spmm_csr(offsets: np.ndarray, cols: np.ndarray, vals: np.ndarray,
             dense: np.ndarray) -> np.ndarray:
    """Sparse CSR times dense matrix, deterministic per-row accumulation."""
    if _active_backend == "numba":
        out = np.empty((offsets.size - 1, dense.shape[1]), dtype=np.float64)
        _spmm_numba(offsets, cols, vals, dense, out)
        return out
    return _spmm_numpy(offsets, cols, vals, dense)


def bpr_scatter(users: np.ndarray, pos_rows: np.ndarray, neg_rows: np.ndarray,
                coefs: np.ndarray, emb: np.ndarray, out: np.ndarray) -> None:
    """Accumulate per-triplet ranking-gradient rows into ``out`` in batch order.

    For triplet b with coefficient c_b: row users[b] receives
    c_b * (emb[pos] - emb[neg]), row pos_rows[b] receives c_b * emb[user],
    and row neg_rows[b] receives -c_b * emb[user]. Duplicate rows add up.
    """
    if _active_backend == "numba":
        _bpr_scatter_numba(users, pos_rows, neg_rows, coefs, emb, out)
    else:
        _bpr_scatter_numpy(users, pos_rows, neg_rows, coefs, emb, out)


_init_backend()

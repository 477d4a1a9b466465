"""Deterministic Monte Carlo plumbing shared by the simulators.

Paths are generated in fixed-size chunks; chunk ``c`` always draws from
``SeedSequence((master_seed, c))`` regardless of how chunks are scheduled,
so results depend only on the master seed and never on the worker count.
Antithetic sampling mirrors the normals inside each chunk.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

CHUNK_SIZE = 8192


def chunk_bounds(n_paths: int, chunk_size: int = CHUNK_SIZE):
    """(start, stop, chunk_index) triples covering ``range(n_paths)``."""
    out = []
    c = 0
    for start in range(0, n_paths, chunk_size):
        out.append((start, min(start + chunk_size, n_paths), c))
        c += 1
    return out


def chunk_rng(master_seed: int, chunk_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((master_seed, chunk_index)))


def standard_normals(
    rng: np.random.Generator, n_paths: int, shape: tuple[int, ...], antithetic: bool
) -> np.ndarray:
    """Chunk of standard normals, shape ``(n_paths, *shape)``.

    With ``antithetic`` the second half of the chunk mirrors the first
    (odd chunks get one unmirrored leftover path).
    """
    if not antithetic:
        return rng.standard_normal((n_paths,) + shape)
    half = (n_paths + 1) // 2
    z = rng.standard_normal((half,) + shape)
    return np.concatenate([z, -z[: n_paths - half]], axis=0)


def run_chunked(worker, n_paths: int, master_seed: int, threads: int = 1) -> None:
    """Invoke ``worker(start, stop, rng)`` over deterministic chunks.

    Workers write to disjoint slices of preallocated outputs, so any
    execution order gives identical results.
    """
    bounds = chunk_bounds(n_paths)
    if threads <= 1 or len(bounds) == 1:
        for start, stop, c in bounds:
            worker(start, stop, chunk_rng(master_seed, c))
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [
            pool.submit(worker, start, stop, chunk_rng(master_seed, c))
            for start, stop, c in bounds
        ]
        for f in futures:
            f.result()


def correlation_cholesky(corr: np.ndarray, clip: float = 1e-10) -> np.ndarray:
    """Lower Cholesky factor of a correlation matrix, repairing near-PSD input.

    Matrices failing a direct factorisation get their eigenvalues
    clipped at ``clip`` and the diagonal rescaled back to 1; anything
    needing more repair than that is rejected.
    """
    corr = np.asarray(corr, dtype=float)
    if corr.ndim != 2 or corr.shape[0] != corr.shape[1]:
        raise ValueError("correlation matrix must be square")
    if not np.allclose(corr, corr.T, atol=1e-12):
        raise ValueError("correlation matrix must be symmetric")
    if not np.allclose(np.diag(corr), 1.0, atol=1e-12):
        raise ValueError("correlation matrix must have unit diagonal")
    try:
        return np.linalg.cholesky(corr)
    except np.linalg.LinAlgError:
        pass
    eigval, eigvec = np.linalg.eigh(corr)
    if eigval.min() < -1e-6:
        raise ValueError(
            f"correlation matrix is not PSD (min eigenvalue {eigval.min():.3e})"
        )
    import warnings

    warnings.warn(
        "correlation matrix is numerically indefinite; clipping eigenvalues",
        RuntimeWarning,
        stacklevel=2,
    )
    eigval = np.maximum(eigval, clip)
    fixed = (eigvec * eigval) @ eigvec.T
    d = np.sqrt(np.diag(fixed))
    fixed = fixed / np.outer(d, d)
    return np.linalg.cholesky(fixed)

"""Hot numerical kernels with a jit engine and a vectorized fallback.

The free-fall map needs, for every lattice time tau_k, the chirped mode sums

    F[k, n] = sum_j chi_w[n, j] * exp(i alpha_k (zprime_k - z_j)^2)
    G[k, n] = sum_j chi_w[n, j] * exp(i alpha_k (zprime_k - z_j)^2)
              * ((zprime_k - z_j) * invtau_k - gtau_k)

where chi_w carries the mode profiles with quadrature weights folded in.
Two implementations are provided: a numba-compiled parallel loop that skips
each mode's zero tail (`idx_cut`), and a chunked numpy path that maps the
same work onto dense matrix products.  `QFALL_JIT` picks the default engine
(0/numpy forces the fallback, 1/numba requires the jit), `set_engine`
overrides it at runtime, and both implementations stay importable so they can
be checked against each other.
"""

from __future__ import annotations

import os

import numpy as np

from .errors import ConfigError, DomainError

try:
    from numba import njit, prange
    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - exercised only without numba
    NUMBA_AVAILABLE = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def wrap(func):
            return func

        return wrap

    prange = range

_CHUNK_ROWS = 64
_engine: str | None = None


def _engine_from_env() -> str:
    raw = os.environ.get("QFALL_JIT", "").strip().lower()
    if raw in ("", "auto"):
        return "numba" if NUMBA_AVAILABLE else "numpy"
    if raw in ("0", "off", "false", "numpy"):
        return "numpy"
    if raw in ("1", "on", "true", "numba"):
        if not NUMBA_AVAILABLE:
            raise ConfigError("QFALL_JIT requests the jit engine but numba "
                              "is not importable")
        return "numba"
    raise ConfigError(f"unrecognized QFALL_JIT value {raw!r}")


def get_engine() -> str:
    global _engine
    if _engine is None:
        _engine = _engine_from_env()
    return _engine


def set_engine(name: str) -> None:
    global _engine
    if name not in ("numpy", "numba"):
        raise ConfigError(f"unknown engine {name!r}, expected numpy or numba")
    if name == "numba" and not NUMBA_AVAILABLE:
        raise ConfigError("numba engine requested but numba is not importable")
    _engine = name


def simpson_weights(count: int, step: float) -> np.ndarray:
    """Composite Simpson weights for `count` uniform samples (count odd)."""
    if count < 3 or count % 2 == 0:
        raise DomainError("Simpson rule needs an odd sample count >= 3")
    if step <= 0.0:
        raise DomainError("step must be positive")
    w = np.full(count, 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    return w * (step / 3.0)


def _check_inputs(chi_w, z, idx_cut, alpha, zprime, invtau, gtau):
    if chi_w.ndim != 2 or z.ndim != 1 or chi_w.shape[1] != z.shape[0]:
        raise DomainError("chi_w must be (n_modes, n_z) matching z")
    if idx_cut.shape != (chi_w.shape[0],):
        raise DomainError("idx_cut must hold one sample count per mode")
    if np.any(idx_cut < 0) or np.any(idx_cut > z.shape[0]):
        raise DomainError("idx_cut entries must lie in [0, n_z]")
    for arr in (alpha, zprime, invtau, gtau):
        if arr.shape != alpha.shape or arr.ndim != 1:
            raise DomainError("lattice parameter arrays must share one shape")


def mode_chirp_sums_numpy(chi_w, z, idx_cut, alpha, zprime, invtau, gtau,
                          chunk: int = _CHUNK_ROWS):
    """Fallback path: chunk the lattice axis and use dense matrix products.

    The per-mode cut is realized by the zero tails already present in chi_w,
    so the products run over the full grid.
    """
    _check_inputs(chi_w, z, idx_cut, alpha, zprime, invtau, gtau)
    K, N = alpha.shape[0], chi_w.shape[0]
    F = np.empty((K, N), dtype=np.complex128)
    G = np.empty((K, N), dtype=np.complex128)
    chi_t = np.ascontiguousarray(chi_w.T)
    for k0 in range(0, K, chunk):
        sl = slice(k0, min(k0 + chunk, K))
        d = zprime[sl][:, None] - z[None, :]
        ph = alpha[sl][:, None] * d * d
        c = np.cos(ph)
        s = np.sin(ph)
        v = d * invtau[sl][:, None] - gtau[sl][:, None]
        F[sl] = (c @ chi_t) + 1j * (s @ chi_t)
        G[sl] = ((c * v) @ chi_t) + 1j * ((s * v) @ chi_t)
    return F, G


@njit(parallel=True, cache=True, fastmath=True)
def _chirp_sums_jit(chi_w, z, idx_cut, alpha, zprime, invtau, gtau):
    K = alpha.shape[0]
    N = chi_w.shape[0]
    J = z.shape[0]
    Fr = np.zeros((K, N))
    Fi = np.zeros((K, N))
    Gr = np.zeros((K, N))
    Gi = np.zeros((K, N))
    for k in prange(K):
        c = np.empty(J)
        s = np.empty(J)
        v = np.empty(J)
        a = alpha[k]
        zp = zprime[k]
        it = invtau[k]
        gt = gtau[k]
        for j in range(J):
            d = zp - z[j]
            ph = a * d * d
            c[j] = np.cos(ph)
            s[j] = np.sin(ph)
            v[j] = d * it - gt
        for n in range(N):
            fr = 0.0
            fi = 0.0
            gr = 0.0
            gi = 0.0
            for j in range(idx_cut[n]):
                w = chi_w[n, j]
                wc = w * c[j]
                ws = w * s[j]
                fr += wc
                fi += ws
                gr += wc * v[j]
                gi += ws * v[j]
            Fr[k, n] = fr
            Fi[k, n] = fi
            Gr[k, n] = gr
            Gi[k, n] = gi
    return Fr, Fi, Gr, Gi


def mode_chirp_sums_numba(chi_w, z, idx_cut, alpha, zprime, invtau, gtau):
    """Jit path: parallel over the lattice, truncating each mode at its cut."""
    if not NUMBA_AVAILABLE:
        raise ConfigError("numba engine requested but numba is not importable")
    _check_inputs(chi_w, z, idx_cut, alpha, zprime, invtau, gtau)
    Fr, Fi, Gr, Gi = _chirp_sums_jit(
        np.ascontiguousarray(chi_w), np.ascontiguousarray(z),
        np.ascontiguousarray(idx_cut, dtype=np.int64),
        np.ascontiguousarray(alpha), np.ascontiguousarray(zprime),
        np.ascontiguousarray(invtau), np.ascontiguousarray(gtau))
    return Fr + 1j * Fi, Gr + 1j * Gi


def mode_chirp_sums(chi_w, z, idx_cut, alpha, zprime, invtau, gtau):
    """Dispatch the chirped mode sums to the active engine."""
    if get_engine() == "numba":
        return mode_chirp_sums_numba(chi_w, z, idx_cut, alpha, zprime,
                                     invtau, gtau)
    return mode_chirp_sums_numpy(chi_w, z, idx_cut, alpha, zprime,
                                 invtau, gtau)

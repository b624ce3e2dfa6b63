"""Counter-based random streams and Monte Carlo configuration types.

Variates come from Philox4x32-10 keyed by the 64-bit seed. The 128-bit
counter holds (block index, stream id, domain bit), so draw i of stream j is
a pure function of (seed, j, i): any path can be regenerated on its own and
the scheduling of paths across threads cannot change a result.
"""

import contextlib
import math
from dataclasses import dataclass

import numba as nb
import numpy as np

from .errors import DomainError

# The bundled TBB is too old for numba; prefer OpenMP, then the portable workqueue.
nb.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

_U32 = np.uint32
_U64 = np.uint64
_MASK = _U64(0xFFFFFFFF)
_SHIFT = _U64(32)
_M0 = _U64(0xD2511F53)
_M1 = _U64(0xCD9E8D57)
_W0 = _U64(0x9E3779B9)
_W1 = _U64(0xBB67AE85)

UNIFORM_DOMAIN = 0
NORMAL_DOMAIN = 1
MAX_STREAM = 2**63 - 1
TWO_PI = 2.0 * math.pi


@nb.njit(inline="always", cache=True)
def philox4x32(c0, c1, c2, c3, k0, k1):
    """Ten Philox rounds on a counter of four 32-bit words with a two-word key."""
    c0 = _U64(c0)
    c1 = _U64(c1)
    c2 = _U64(c2)
    c3 = _U64(c3)
    k0 = _U64(k0)
    k1 = _U64(k1)
    for _ in range(10):
        p0 = _M0 * c0
        p1 = _M1 * c2
        n0 = (p1 >> _SHIFT) ^ c1 ^ k0
        n1 = p1 & _MASK
        n2 = (p0 >> _SHIFT) ^ c3 ^ k1
        n3 = p0 & _MASK
        c0, c1, c2, c3 = n0, n1, n2, n3
        k0 = (k0 + _W0) & _MASK
        k1 = (k1 + _W1) & _MASK
    return c0, c1, c2, c3


@nb.njit(inline="always", cache=True)
def _to_unit(hi, lo):
    # 27 + 26 bits -> 53-bit integer, centred in its cell so the result is never 0 or 1
    m = (hi >> _U64(5)) * _U64(67108864) + (lo >> _U64(6))
    return (np.float64(m) + 0.5) * 1.1102230246251565e-16


@nb.njit(inline="always", cache=True)
def _block(k0, k1, stream, domain, block):
    s_lo = _U64(stream) & _MASK
    s_hi = (_U64(stream) >> _SHIFT) | (_U64(domain) << _U64(31))
    b_lo = _U64(block) & _MASK
    b_hi = _U64(block) >> _SHIFT
    return philox4x32(b_lo, b_hi, s_lo, s_hi, k0, k1)


@nb.njit(cache=True)
def fill_uniforms(k0, k1, stream, start, out):
    """Write uniforms start .. start+len(out)-1 of a stream into out."""
    n = out.size
    i = 0
    idx = start
    while i < n:
        w0, w1, w2, w3 = _block(k0, k1, stream, UNIFORM_DOMAIN, idx >> 1)
        if idx & 1 == 0:
            out[i] = _to_unit(w0, w1)
            i += 1
            idx += 1
            if i < n:
                out[i] = _to_unit(w2, w3)
                i += 1
                idx += 1
        else:
            out[i] = _to_unit(w2, w3)
            i += 1
            idx += 1


@nb.njit(cache=True)
def fill_normals(k0, k1, stream, start, out):
    """Write standard normals start .. start+len(out)-1 of a stream into out (Box-Muller)."""
    n = out.size
    i = 0
    idx = start
    while i < n:
        w0, w1, w2, w3 = _block(k0, k1, stream, NORMAL_DOMAIN, idx >> 1)
        r = math.sqrt(-2.0 * math.log(_to_unit(w0, w1)))
        angle = TWO_PI * _to_unit(w2, w3)
        if idx & 1 == 0:
            out[i] = r * math.cos(angle)
            i += 1
            idx += 1
            if i < n:
                out[i] = r * math.sin(angle)
                i += 1
                idx += 1
        else:
            out[i] = r * math.sin(angle)
            i += 1
            idx += 1


def seed_key(seed):
    """Split a 64-bit seed into the two Philox key words."""
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise DomainError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return _U32(seed & 0xFFFFFFFF), _U32(seed >> 32)


def _check_stream(stream_id, start, n):
    if not 0 <= int(stream_id) <= MAX_STREAM:
        raise DomainError(f"stream_id must lie in [0, 2^63), got {stream_id}")
    if int(start) < 0 or int(n) < 0:
        raise DomainError("start and n must be >= 0")


def gaussian_stream(seed, stream_id, n, start=0):
    """Standard normals n draws long from position `start` of stream `stream_id`."""
    _check_stream(stream_id, start, n)
    k0, k1 = seed_key(seed)
    out = np.empty(int(n))
    fill_normals(k0, k1, np.int64(stream_id), np.int64(start), out)
    return out


def uniform_stream(seed, stream_id, n, start=0):
    """Uniforms on the open interval (0, 1), independent of the normal stream with the same id."""
    _check_stream(stream_id, start, n)
    k0, k1 = seed_key(seed)
    out = np.empty(int(n))
    fill_uniforms(k0, k1, np.int64(stream_id), np.int64(start), out)
    return out


@dataclass(frozen=True)
class McConfig:
    n_paths: int
    n_steps: int
    seed: int = 0
    n_workers: int = 1

    def __post_init__(self):
        for name in ("n_paths", "n_steps", "n_workers"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise DomainError(f"{name} must be a positive integer, got {value}")
        seed_key(self.seed)

    @property
    def key(self):
        return seed_key(self.seed)


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    n_samples: int

    @classmethod
    def from_samples(cls, samples):
        samples = np.asarray(samples, dtype=float)
        n = samples.size
        if n == 0:
            raise DomainError("no samples")
        std = float(samples.std(ddof=1)) if n > 1 else 0.0
        return cls(float(samples.mean()), std / math.sqrt(n), int(n))

    @classmethod
    def from_count(cls, hits, n):
        """Binomial proportion with its plug-in standard error."""
        p = hits / n
        return cls(float(p), math.sqrt(p * (1.0 - p) / n), int(n))


@contextlib.contextmanager
def worker_threads(n_workers):
    """Run numba parallel kernels on up to n_workers threads inside the block."""
    previous = nb.get_num_threads()
    nb.set_num_threads(max(1, min(int(n_workers), nb.config.NUMBA_NUM_THREADS)))
    try:
        yield
    finally:
        nb.set_num_threads(previous)

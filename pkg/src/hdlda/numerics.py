"""Dense linear algebra, normal probabilities, and reproducible random streams.

Everything downstream builds on this module. Conventions:

* matrices are float64 numpy arrays, C-contiguous, symmetric inputs are
  validated rather than silently symmetrized;
* random numbers come from counter-based splitmix64 streams so that any
  (master_seed, stream_id) pair yields the same sequence on every platform
  and under any degree of parallelism;
* normal variates use the polar (Marsaglia) rejection method driven by the
  uniform stream, so the sequence depends only on the stream position and
  the sequence of request sizes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CorrelationOutOfRange, NoConvergence, NotPositiveDefinite

_M64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_STREAM_SALT = 0xD1342543DE82EF95

_U64_GOLDEN = np.uint64(_GOLDEN)
_SHIFT_30 = np.uint64(30)
_SHIFT_27 = np.uint64(27)
_SHIFT_31 = np.uint64(31)
_SHIFT_11 = np.uint64(11)
_INV_2_53 = float(2.0 ** -53)


def _mix64_int(z: int) -> int:
    """splitmix64 finalizer on python ints, masked to 64 bits."""
    z &= _M64
    z = ((z ^ (z >> 30)) * _MIX1) & _M64
    z = ((z ^ (z >> 27)) * _MIX2) & _M64
    return z ^ (z >> 31)


def _mix64_array(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> _SHIFT_30)) * np.uint64(_MIX1)
    z = (z ^ (z >> _SHIFT_27)) * np.uint64(_MIX2)
    return z ^ (z >> _SHIFT_31)


class RngStream:
    """Deterministic random stream identified by (master_seed, stream_id).

    The raw word at position n is splitmix64_finalize(base + (n + 1) * golden)
    where base mixes the seed pair. Positions only ever advance, so a stream
    is a pure function of the seed pair and the sequence of draw sizes.
    """

    __slots__ = ("master_seed", "stream_id", "_base", "_pos", "_spare")

    def __init__(self, master_seed: int, stream_id: int):
        self.master_seed = int(master_seed)
        self.stream_id = int(stream_id)
        h = _mix64_int(self.master_seed + _GOLDEN)
        g = _mix64_int((self.stream_id * _STREAM_SALT + 0x632BE59BD9B4E019) & _M64)
        self._base = _mix64_int(h ^ g)
        self._pos = 0
        self._spare: np.ndarray = np.empty(0)

    def raw_words(self, n: int) -> np.ndarray:
        """Next n raw 64-bit words as a uint64 array."""
        if n < 0:
            raise ValueError("draw size must be non-negative")
        idx = np.arange(self._pos + 1, self._pos + n + 1, dtype=np.uint64)
        self._pos += n
        words = np.uint64(self._base) + idx * _U64_GOLDEN
        return _mix64_array(words)

    def uniforms(self, n: int) -> np.ndarray:
        """Next n doubles uniform on [0, 1), using the top 53 bits per word."""
        words = self.raw_words(n)
        return (words >> _SHIFT_11).astype(np.float64) * _INV_2_53

    def normals(self, n: int) -> np.ndarray:
        """Next n standard normal variates by the polar rejection method.

        Accepted pairs (u, v) with s = u^2 + v^2 in (0, 1) each yield two
        variates u*f, v*f with f = sqrt(-2 log(s) / s). Leftover variates are
        buffered so consecutive calls read one continuous stream.
        """
        if n < 0:
            raise ValueError("draw size must be non-negative")
        chunks = []
        have = 0
        if self._spare.size:
            take = self._spare[:n]
            self._spare = self._spare[take.size:]
            chunks.append(take)
            have = take.size
        while have < n:
            need = n - have
            # acceptance rate is pi/4, so need/2 pairs succeed ~0.785 of the time
            pairs = (need // 2 + 1) * 3 // 2 + 8
            u = self.uniforms(2 * pairs)
            x = 2.0 * u[0::2] - 1.0
            y = 2.0 * u[1::2] - 1.0
            s = x * x + y * y
            ok = (s < 1.0) & (s > 0.0)
            xs, ys, ss = x[ok], y[ok], s[ok]
            f = np.sqrt(-2.0 * np.log(ss) / ss)
            got = np.empty(2 * ss.size)
            got[0::2] = xs * f
            got[1::2] = ys * f
            chunks.append(got)
            have += got.size
        out = chunks[0] if len(chunks) == 1 else np.concatenate(chunks)
        if out.size > n:
            self._spare = out[n:]
            out = out[:n]
        return out

    @property
    def base(self) -> int:
        """The stream's mixed 64-bit offset; a fingerprint of the seed pair."""
        return self._base

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates permutation of range(n), consuming n - 1 uniforms."""
        perm = np.arange(n)
        if n > 1:
            u = self.uniforms(n - 1)
            for i in range(n - 1, 0, -1):
                j = int(u[n - 1 - i] * (i + 1))
                perm[i], perm[j] = perm[j], perm[i]
        return perm


def rng_stream(master_seed: int, stream_id: int) -> RngStream:
    """Derive the independent stream for (master_seed, stream_id)."""
    return RngStream(master_seed, stream_id)


@dataclass(frozen=True)
class SymEigen:
    """Eigendecomposition of a symmetric matrix, eigenvalues descending."""

    values: np.ndarray
    vectors: np.ndarray  # columns are eigenvectors, aligned with values


def _as_square_symmetric(a: np.ndarray, what: str) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{what} requires a square matrix, got shape {a.shape}")
    scale = 1.0 + (np.max(np.abs(a)) if a.size else 0.0)
    if np.max(np.abs(a - a.T), initial=0.0) > 1e-10 * scale:
        raise ValueError(f"{what} requires a symmetric matrix")
    return a


def cholesky(a: np.ndarray) -> np.ndarray:
    """Lower-triangular L with L L' = a for symmetric positive definite a.

    Raises NotPositiveDefinite when any pivot is at or below
    1e-12 * max|a_ij|, which also covers outright factorization failure.
    """
    a = _as_square_symmetric(a, "cholesky")
    try:
        lower = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc
    pivots = np.diag(lower) ** 2
    if np.min(pivots) <= 1e-12 * np.max(np.abs(a)):
        raise NotPositiveDefinite("pivot at or below 1e-12 * max|a|")
    return lower


def sym_eigen(a: np.ndarray) -> SymEigen:
    """Full eigendecomposition of a symmetric matrix, sorted descending."""
    a = _as_square_symmetric(a, "sym_eigen")
    try:
        values, vectors = np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(str(exc)) from exc
    order = np.argsort(values)[::-1]
    return SymEigen(values=values[order].copy(), vectors=vectors[:, order].copy())


def pinv(a: np.ndarray, rel_tol: float | None = None) -> np.ndarray:
    """Moore-Penrose pseudoinverse of a symmetric matrix via sym_eigen.

    Eigenvalues with magnitude at or below rel_tol * max|eigenvalue| are
    treated as exact zeros; rel_tol defaults to p * machine epsilon.
    """
    eig = sym_eigen(a)
    p = eig.values.size
    if p == 0:
        return np.zeros((0, 0))
    if rel_tol is None:
        rel_tol = p * np.finfo(np.float64).eps
    top = np.max(np.abs(eig.values))
    if top == 0.0:
        return np.zeros_like(a, dtype=np.float64)
    inv_vals = np.where(np.abs(eig.values) > rel_tol * top, 1.0, 0.0)
    with np.errstate(divide="ignore"):
        inv_vals = np.where(inv_vals > 0.0, 1.0 / eig.values, 0.0)
    out = (eig.vectors * inv_vals) @ eig.vectors.T
    return 0.5 * (out + out.T)


_SQRT1_2 = math.sqrt(0.5)


def std_normal_cdf(x: float) -> float:
    """Standard normal CDF via erfc, accurate in both tails."""
    return 0.5 * math.erfc(-float(x) * _SQRT1_2)


# Gauss-Legendre points and weights, n = 20 (10 symmetric pairs)
_GL_W = np.array([
    0.01761400713915212, 0.04060142980038694, 0.06267204833410906,
    0.08327674157670475, 0.1019301198172404, 0.1181945319615184,
    0.1316886384491766, 0.1420961093183821, 0.1491729864726037,
    0.1527533871307259,
])
_GL_X = np.array([
    0.9931285991850949, 0.9639719272779138, 0.9122344282513259,
    0.8391169718222188, 0.7463319064601508, 0.6360536807265150,
    0.5108670019508271, 0.3737060887154196, 0.2277858511416451,
    0.07652652113349733,
])


def _bvn_upper(dh: float, dk: float, r: float) -> float:
    """P(X > dh, Y > dk) for standard bivariate normal with correlation r.

    Drezner-Wesolowsky correlation-integral form with the Genz double
    precision modifications for |r| >= 0.925, always on the 20-point
    Gauss-Legendre rule.
    """
    twopi = 2.0 * math.pi
    h, k = dh, dk
    hk = h * k
    bvn = 0.0
    if abs(r) < 0.925:
        if abs(r) > 0.0:
            hs = (h * h + k * k) / 2.0
            asr = math.asin(r)
            for i in range(_GL_W.size):
                for sgn in (-1.0, 1.0):
                    sn = math.sin(asr * (1.0 + sgn * _GL_X[i]) / 2.0)
                    bvn += _GL_W[i] * math.exp((sn * hk - hs) / (1.0 - sn * sn))
            bvn = bvn * asr / (2.0 * twopi)
        bvn += std_normal_cdf(-h) * std_normal_cdf(-k)
    else:
        if r < 0.0:
            k = -k
            hk = -hk
        if abs(r) < 1.0:
            aas = (1.0 - r) * (1.0 + r)
            a = math.sqrt(aas)
            bs = (h - k) ** 2
            c = (4.0 - hk) / 8.0
            d = (12.0 - hk) / 16.0
            asr = -(bs / aas + hk) / 2.0
            if asr > -100.0:
                bvn = a * math.exp(asr) * (
                    1.0 - c * (bs - aas) * (1.0 - d * bs / 5.0) / 3.0
                    + c * d * aas * aas / 5.0
                )
            if -hk < 100.0:
                b = math.sqrt(bs)
                sp = math.sqrt(twopi) * std_normal_cdf(-b / a)
                bvn -= math.exp(-hk / 2.0) * sp * b * (
                    1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0
                )
            a = a / 2.0
            for i in range(_GL_W.size):
                for sgn in (-1.0, 1.0):
                    xs = (a * (1.0 + sgn * _GL_X[i])) ** 2
                    rs = math.sqrt(1.0 - xs)
                    asr = -(bs / xs + hk) / 2.0
                    if asr > -100.0:
                        sp = 1.0 + c * xs * (1.0 + d * xs)
                        ep = math.exp(-hk * (1.0 - rs) / (2.0 * (1.0 + rs))) / rs
                        bvn += a * _GL_W[i] * math.exp(asr) * (ep - sp)
            bvn = -bvn / twopi
        if r > 0.0:
            bvn += std_normal_cdf(-max(h, k))
        else:
            bvn = -bvn + max(0.0, std_normal_cdf(-h) - std_normal_cdf(-k))
    return min(1.0, max(0.0, bvn))


def bvn_lower_cdf(h: float, k: float, rho: float) -> float:
    """P(U <= h, V <= k) for standard bivariate normal with correlation rho."""
    h, k, rho = float(h), float(k), float(rho)
    if abs(rho) >= 1.0 - 1e-12:
        raise CorrelationOutOfRange(f"|rho| must be below 1 - 1e-12, got {rho}")
    if math.isnan(h) or math.isnan(k):
        raise ValueError("bvn_lower_cdf limits must not be NaN")
    return _bvn_upper(-h, -k, rho)


def mvn_sample(rng: RngStream, mean: np.ndarray, chol_factor: np.ndarray) -> np.ndarray:
    """One draw from N(mean, L L') given the lower Cholesky factor L."""
    mean = np.asarray(mean, dtype=np.float64)
    z = rng.normals(mean.size)
    return mean + chol_factor @ z


def mvn_sample_block(
    rng: RngStream, mean: np.ndarray, chol_factor: np.ndarray, n: int
) -> np.ndarray:
    """n draws from N(mean, L L') as an (n, p) array.

    Consumes exactly the normals that n successive mvn_sample calls would.
    """
    mean = np.asarray(mean, dtype=np.float64)
    z = rng.normals(n * mean.size).reshape(n, mean.size)
    return mean + z @ chol_factor.T

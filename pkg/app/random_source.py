"""
Seeded random sampling primitives for the Gibbs samplers.

Every chain owns one RandomSource: a PCG64 generator keyed by
(seed, stream) through numpy's SeedSequence spawn keys, so distinct
streams are independent and a (seed, stream) pair replays bit-for-bit.
All draws accept numpy arrays and broadcast; the module-level functions
are scalar conveniences with argument checking.
"""

import logging
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from scipy.special import ndtr, ndtri

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

# Standardized truncation point beyond which inversion is replaced by
# exponential-proposal rejection
TAIL_CUTOFF = 4.0

ALGORITHM = "PCG64"


class SamplingError(Exception):
    """Exception raised for invalid sampling arguments."""
    pass


@dataclass
class RandomSource:
    """One independent random stream: (algorithm, seed, stream)."""
    seed: int
    stream: int = 0
    algorithm: str = ALGORITHM
    generator: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        if self.algorithm != ALGORITHM:
            raise SamplingError(f"Unsupported generator '{self.algorithm}'")
        seq = np.random.SeedSequence(entropy=int(self.seed) & (2**64 - 1), spawn_key=(int(self.stream),))
        self.generator = np.random.Generator(np.random.PCG64(seq))

    def spawn(self, stream: int) -> "RandomSource":
        """Independent sibling stream under the same seed."""
        return RandomSource(seed=self.seed, stream=stream, algorithm=self.algorithm)

    # ------------------------------------------------------------------
    # basic draws
    # ------------------------------------------------------------------

    def uniform(self, size=None) -> ArrayLike:
        return self.generator.random(size)

    def normal(self, mu: ArrayLike = 0.0, var: ArrayLike = 1.0) -> ArrayLike:
        """N(mu, var); zero variance returns mu."""
        return self.generator.normal(mu, np.sqrt(var))

    def gamma(self, shape: ArrayLike, rate: ArrayLike) -> ArrayLike:
        """Gamma with mean shape/rate."""
        return self.generator.gamma(shape, 1.0 / np.asarray(rate, dtype=float))

    def beta(self, a: ArrayLike, b: ArrayLike) -> ArrayLike:
        return self.generator.beta(a, b)

    def bernoulli(self, p: np.ndarray) -> np.ndarray:
        return (self.generator.random(np.shape(p)) < p).astype(np.int8)

    def categorical_log(self, logw: Sequence[float]) -> int:
        """Index k with probability exp(logw_k - logsumexp(logw))."""
        logw = np.asarray(logw, dtype=float)
        top = np.max(logw)
        if not np.isfinite(top):
            raise SamplingError("Categorical draw needs at least one finite log-weight")
        weights = np.exp(logw - top)
        cumulative = np.cumsum(weights)
        u = self.generator.random() * cumulative[-1]
        return int(min(np.searchsorted(cumulative, u, side="right"), len(logw) - 1))

    # ------------------------------------------------------------------
    # truncated normal with unit variance
    # ------------------------------------------------------------------

    def trunc_normal(self, mu: ArrayLike, lower: ArrayLike, upper: ArrayLike) -> ArrayLike:
        """
        Draw from N(mu, 1) restricted to the open interval (lower, upper).

        Near-center intervals use inverse-CDF sampling; when the interval
        lies entirely beyond TAIL_CUTOFF standard deviations on one side
        the draw switches to exponential-proposal rejection, which stays
        exact where the CDF underflows.
        """
        mu, lower, upper = np.broadcast_arrays(
            np.asarray(mu, dtype=float), np.asarray(lower, dtype=float), np.asarray(upper, dtype=float)
        )
        scalar = mu.ndim == 0
        mu, lower, upper = np.atleast_1d(mu), np.atleast_1d(lower), np.atleast_1d(upper)
        if np.any(~(lower < upper)):
            raise SamplingError("Truncation bounds must satisfy lower < upper")

        a = lower - mu
        b = upper - mu
        x = np.empty_like(mu)

        right_tail = a > TAIL_CUTOFF
        left_tail = b < -TAIL_CUTOFF
        center = ~(right_tail | left_tail)

        if np.any(center):
            x[center] = self._inversion(a[center], b[center])
        if np.any(right_tail):
            x[right_tail] = self._tail(a[right_tail], b[right_tail])
        if np.any(left_tail):
            x[left_tail] = -self._tail(-b[left_tail], -a[left_tail])

        out = mu + x
        # rounding in mu + x may land on a bound
        out = np.where(out <= lower, np.nextafter(lower, np.inf), out)
        out = np.where(out >= upper, np.nextafter(upper, -np.inf), out)
        return float(out[0]) if scalar else out

    def _inversion(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        u = self.generator.random(a.shape)
        # work on the side of zero where the CDF keeps precision
        flip = a > 0
        lo = np.where(flip, -b, a)
        hi = np.where(flip, -a, b)
        p_lo = ndtr(lo)
        p_hi = ndtr(hi)
        z = ndtri(p_lo + u * (p_hi - p_lo))
        z = np.clip(z, np.nextafter(lo, np.inf), np.nextafter(hi, -np.inf))
        return np.where(flip, -z, z)

    def _tail(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Rejection sampler for N(0, 1) on (a, b) with a > TAIL_CUTOFF."""
        rate = 0.5 * (a + np.sqrt(a * a + 4.0))
        out = np.empty_like(a)
        pending = np.arange(a.size)
        while pending.size:
            ap, rp, bp = a[pending], rate[pending], b[pending]
            z = ap + self.generator.exponential(1.0, pending.size) / rp
            log_u = np.log(self.generator.random(pending.size))
            accept = (log_u <= -0.5 * (z - rp) ** 2) & (z < bp)
            out[pending[accept]] = z[accept]
            pending = pending[~accept]
        return out


# ============================================================================
# Scalar conveniences with argument checks
# ============================================================================

def sample_trunc_normal(rng: RandomSource, mu: float, lower: float, upper: float) -> float:
    """Unit-variance normal draw conditioned to (lower, upper)."""
    if not lower < upper:
        raise SamplingError(f"lower ({lower}) must be below upper ({upper})")
    return rng.trunc_normal(mu, lower, upper)


def sample_normal(rng: RandomSource, mu: float, var: float) -> float:
    if var < 0:
        raise SamplingError(f"Variance must be non-negative, got {var}")
    if var == 0:
        return float(mu)
    return float(rng.normal(mu, var))


def sample_gamma(rng: RandomSource, shape: float, rate: float) -> float:
    if shape <= 0 or rate <= 0:
        raise SamplingError(f"Gamma needs positive shape and rate, got ({shape}, {rate})")
    return float(rng.gamma(shape, rate))


def sample_beta(rng: RandomSource, a: float, b: float) -> float:
    if a <= 0 or b <= 0:
        raise SamplingError(f"Beta needs positive parameters, got ({a}, {b})")
    return float(rng.beta(a, b))


def sample_categorical_log(rng: RandomSource, logw: Sequence[float]) -> int:
    return rng.categorical_log(logw)

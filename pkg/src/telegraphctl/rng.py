"""Seedable, portable random number generation.

Traces produced by the simulator are meant to be reproducible bit-for-bit
across platforms and reimplementable in other languages, so everything is
built on one small, fully documented generator instead of a platform RNG:

* Core stream: SplitMix64. State advances by the 64-bit golden-gamma
  constant 0x9E3779B97F4A7C15; each output is the standard two-round
  xor-multiply finalizer of the new state. All arithmetic is mod 2**64.
* Uniform doubles take the top 53 bits of one output: ``(x >> 11) * 2**-53``,
  giving values in [0, 1).
* Exponential: inverse CDF, ``-log1p(-u) / rate``.
* Poisson: Knuth's product-of-uniforms method, applied to chunks of the
  mean no larger than 30 so the ``exp(-mean)`` threshold never underflows
  (counts for independent chunks add exactly).
* Normal: Box-Muller pair from two uniforms; the second value of each pair
  is cached and returned by the next call.
* Gamma: Marsaglia-Tsang squeeze for shape >= 1; for shape < 1 the usual
  boost ``Gamma(shape+1) * U**(1/shape)``.
* Negative binomial with mean m and Fano factor f > 1: Poisson mixed over
  ``Gamma(shape=m/(f-1), scale=f-1)``.

Derived streams for ensemble members: ``spawn(i)`` reseeds a fresh stream
with ``finalize(seed XOR ((i+1) * 0x9E3779B97F4A7C15 mod 2**64))`` where
``finalize`` is the SplitMix64 output function. Consumers must document
their draw order; the samplers above consume draws strictly in the order
stated.
"""

from __future__ import annotations

import math

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_POISSON_CHUNK = 30.0


def _finalize(z: int) -> int:
    """SplitMix64 output function (mod 2**64)."""
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(master_seed: int, index: int) -> int:
    """Documented mixing function for per-trace seeds (order-independent)."""
    if index < 0:
        raise ValueError("index must be >= 0")
    return _finalize((master_seed ^ (((index + 1) * _GAMMA) & _MASK64)) & _MASK64)


class PortableRandom:
    """SplitMix64-based stream with the samplers documented above."""

    def __init__(self, seed: int):
        self.seed = seed & _MASK64
        self._state = seed & _MASK64
        self._spare_normal: float | None = None

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK64
        return _finalize(self._state)

    def uniform(self) -> float:
        """One double in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * 1.1102230246251565e-16  # 2**-53

    def bernoulli(self, p: float) -> bool:
        return self.uniform() < p

    def exponential(self, rate: float) -> float:
        if rate <= 0.0:
            raise ValueError("rate must be > 0")
        return -math.log1p(-self.uniform()) / rate

    def _poisson_small(self, mean: float) -> int:
        # Knuth: multiply uniforms until the product drops below exp(-mean).
        limit = math.exp(-mean)
        k = 0
        prod = self.uniform()
        while prod > limit:
            k += 1
            prod *= self.uniform()
        return k

    def poisson(self, mean: float) -> int:
        if mean < 0.0:
            raise ValueError("mean must be >= 0")
        if mean == 0.0:
            return 0
        total = 0
        while mean > _POISSON_CHUNK:
            total += self._poisson_small(_POISSON_CHUNK)
            mean -= _POISSON_CHUNK
        return total + self._poisson_small(mean)

    def normal(self) -> float:
        if self._spare_normal is not None:
            z = self._spare_normal
            self._spare_normal = None
            return z
        u1 = self.uniform()
        while u1 == 0.0:
            u1 = self.uniform()
        u2 = self.uniform()
        r = math.sqrt(-2.0 * math.log(u1))
        self._spare_normal = r * math.sin(2.0 * math.pi * u2)
        return r * math.cos(2.0 * math.pi * u2)

    def gamma(self, shape: float) -> float:
        """Unit-scale Gamma(shape) variate (Marsaglia-Tsang)."""
        if shape <= 0.0:
            raise ValueError("shape must be > 0")
        if shape < 1.0:
            u = self.uniform()
            while u == 0.0:
                u = self.uniform()
            return self.gamma(shape + 1.0) * u ** (1.0 / shape)
        d = shape - 1.0 / 3.0
        c = 1.0 / math.sqrt(9.0 * d)
        while True:
            x = self.normal()
            v = 1.0 + c * x
            if v <= 0.0:
                continue
            v = v * v * v
            u = self.uniform()
            if u < 1.0 - 0.0331 * x * x * x * x:
                return d * v
            if u > 0.0 and math.log(u) < 0.5 * x * x + d * (1.0 - v + math.log(v)):
                return d * v

    def neg_binomial(self, mean: float, fano: float) -> int:
        """Over-dispersed count with the given mean and variance = fano * mean."""
        if fano <= 1.0:
            raise ValueError("fano must be > 1 for the over-dispersed family")
        if mean == 0.0:
            return 0
        shape = mean / (fano - 1.0)
        lam = self.gamma(shape) * (fano - 1.0)
        return self.poisson(lam)

    def spawn(self, index: int) -> "PortableRandom":
        """Independent stream for ensemble member ``index``, derived from
        the seed this generator was created with (not its current state)."""
        return PortableRandom(derive_seed(self.seed, index))

"""Priors and scalar observation models.

Two families are supported:

* ``GaussianShiftModel``: y | H_l ~ N(mu_l, sigma^2), used for classification.
* ``RegionModel``: theta is drawn from the prior restricted to region l and
  y | theta ~ N(theta, sigma^2), used by the zoom-in estimation scheme.

Every model exposes the same surface: ``loglik`` (vectorised over y and all
hypotheses), ``likelihood``, ``interval_prob`` (probability that y falls in
[lo, hi) under each hypothesis), ``sample`` and ``grid`` (points at which a
decision function should be probed for sign changes).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, special, stats

from .exceptions import NumericalError

QUAD_TOL = 1e-9
_LOG_SQRT_2PI = 0.5 * math.log(2 * math.pi)


def snr_to_s(snr_db: float, base: float = 2) -> float:
    """Mean spacing s for an SNR given as 20*log_base(s)."""
    if base not in (2, 10):
        raise ValueError("snr base must be 2 or 10")
    return float(base) ** (snr_db / 20.0)


def quad(f, a, b, *, epsabs=QUAD_TOL, epsrel=1e-10, points=None, what="integral"):
    """Adaptive quadrature that raises ``NumericalError`` on failure."""
    kw = {"epsabs": epsabs, "epsrel": epsrel, "limit": 200, "full_output": 1}
    if points is not None and np.isfinite(a) and np.isfinite(b):
        pts = [p for p in points if a < p < b]
        if pts:
            kw["points"] = pts
    out = integrate.quad(f, a, b, **kw)
    value, err = out[0], out[1]
    if len(out) > 3 and err > max(100 * epsabs, 1e-6 * abs(value)):
        raise NumericalError(f"quadrature did not converge for {what}",
                             lower=a, upper=b, value=value, error_estimate=err, message=out[3])
    return value


def _log_diff_ndtr(hi, lo):
    """log(Phi(hi) - Phi(lo)) for hi >= lo, accurate in both tails."""
    hi, lo = np.broadcast_arrays(np.asarray(hi, float), np.asarray(lo, float))
    # work on the side where both arguments are non-positive to avoid cancellation
    with np.errstate(invalid="ignore"):
        flip = (lo + hi) > 0
    a = np.where(flip, -lo, hi)
    b = np.where(flip, -hi, lo)
    la = special.log_ndtr(a)
    lb = special.log_ndtr(b)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = la + np.log1p(-np.exp(lb - la))
    return np.where(a > b, out, -np.inf)


def _gauss_antideriv(x):
    """G(x) = x*Phi(x) + phi(x), an antiderivative of Phi."""
    x = np.asarray(x, float)
    with np.errstate(invalid="ignore"):
        out = x * special.ndtr(x) + np.exp(-0.5 * x * x - _LOG_SQRT_2PI)
    return np.where(np.isposinf(x), np.inf, np.where(np.isneginf(x), 0.0, out))


# --------------------------------------------------------------------- priors


class Prior:
    """Scalar prior density on [lo, hi]; subclasses may supply closed forms."""

    lo: float
    hi: float

    def pdf(self, x):
        raise NotImplementedError

    def mass(self, a, b) -> float:
        return quad(self.pdf, a, b, what="prior mass")

    def moment(self, a, b, k: int) -> float:
        return quad(lambda t: t**k * self.pdf(t), a, b, what=f"prior moment {k}")

    def mean(self, a=None, b=None) -> float:
        a = self.lo if a is None else a
        b = self.hi if b is None else b
        return self.moment(a, b, 1) / self.mass(a, b)

    def cdf(self, x) -> float:
        return self.mass(self.lo, x)

    def quantile(self, p: float, a=None, b=None) -> float:
        from scipy.optimize import brentq

        a = self.lo if a is None else a
        b = self.hi if b is None else b
        total = self.mass(a, b)
        lo, hi = self._finite_span(a, b)
        return brentq(lambda x: self.mass(a, x) - p * total, lo, hi, xtol=1e-14, rtol=1e-14)

    def _finite_span(self, a, b):
        return a, b

    def sample_in(self, a, b, rng, size):
        """Draw from the prior restricted to [a, b) by inverse-CDF on a fine table."""
        lo, hi = self._finite_span(a, b)
        xs = np.linspace(lo, hi, 4097)
        dens = np.maximum(self.pdf(xs), 0)
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(xs))])
        cdf /= cdf[-1]
        return np.interp(rng.random(size), cdf, xs)

    def log_gauss_mass(self, y, sigma, a, b):
        """log of  int_a^b N(y; t, sigma^2) p(t) dt, or None when no closed form."""
        return None

    def gauss_interval_mass(self, lo, hi, sigma, a, b):
        """int_a^b p(t) P(lo <= t + sigma*Z < hi) dt, or None when no closed form."""
        return None


@dataclass(frozen=True)
class UniformPrior(Prior):
    lo: float
    hi: float

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ValueError("uniform prior needs hi > lo")

    def pdf(self, x):
        x = np.asarray(x, float)
        return np.where((x >= self.lo) & (x <= self.hi), 1.0 / (self.hi - self.lo), 0.0)

    def _clip(self, a, b):
        return max(a, self.lo), min(b, self.hi)

    def mass(self, a, b):
        a, b = self._clip(a, b)
        return max(b - a, 0.0) / (self.hi - self.lo)

    def moment(self, a, b, k):
        a, b = self._clip(a, b)
        if b <= a:
            return 0.0
        return (b ** (k + 1) - a ** (k + 1)) / ((k + 1) * (self.hi - self.lo))

    def quantile(self, p, a=None, b=None):
        a, b = self._clip(self.lo if a is None else a, self.hi if b is None else b)
        return a + p * (b - a)

    def sample_in(self, a, b, rng, size):
        a, b = self._clip(a, b)
        return a + (b - a) * rng.random(size)

    def log_gauss_mass(self, y, sigma, a, b):
        a, b = self._clip(a, b)
        y = np.asarray(y, float)
        return _log_diff_ndtr((b - y) / sigma, (a - y) / sigma) - math.log(self.hi - self.lo)

    def gauss_interval_mass(self, lo, hi, sigma, a, b):
        a, b = self._clip(a, b)
        if b <= a:
            return 0.0

        # int_a^b Phi((c - t)/sigma) dt = sigma * [G((c-a)/sigma) - G((c-b)/sigma)]
        def F(c):
            if c == np.inf:
                return b - a
            if c == -np.inf:
                return 0.0
            return sigma * float(_gauss_antideriv((c - a) / sigma) - _gauss_antideriv((c - b) / sigma))

        return (F(hi) - F(lo)) / (self.hi - self.lo)


@dataclass(frozen=True)
class NormalPrior(Prior):
    mu: float = 0.0
    sd: float = 1.0
    lo: float = -np.inf
    hi: float = np.inf

    def pdf(self, x):
        return stats.norm.pdf(x, self.mu, self.sd)

    def mass(self, a, b):
        za, zb = (a - self.mu) / self.sd, (b - self.mu) / self.sd
        return float(np.exp(_log_diff_ndtr(zb, za))) if zb > za else 0.0

    def moment(self, a, b, k):
        if k == 0:
            return self.mass(a, b)
        if k not in (1, 2):
            return super().moment(a, b, k)
        za, zb = (a - self.mu) / self.sd, (b - self.mu) / self.sd
        pa = 0.0 if np.isinf(za) else stats.norm.pdf(za)
        pb = 0.0 if np.isinf(zb) else stats.norm.pdf(zb)
        m0 = self.mass(a, b)
        # standardised moments: E[Z 1{.}] = pa - pb, E[Z^2 1{.}] = m0 + za*pa - zb*pb
        z1 = pa - pb
        z2 = m0 + (0.0 if np.isinf(za) else za * pa) - (0.0 if np.isinf(zb) else zb * pb)
        if k == 1:
            return self.mu * m0 + self.sd * z1
        return self.mu**2 * m0 + 2 * self.mu * self.sd * z1 + self.sd**2 * z2

    def cdf(self, x):
        return float(stats.norm.cdf(x, self.mu, self.sd))

    def quantile(self, p, a=None, b=None):
        a = -np.inf if a is None else a
        b = np.inf if b is None else b
        ca, cb = stats.norm.cdf([a, b], self.mu, self.sd)
        return float(stats.norm.ppf(ca + p * (cb - ca), self.mu, self.sd))

    def _finite_span(self, a, b):
        return max(a, self.mu - 40 * self.sd), min(b, self.mu + 40 * self.sd)

    def sample_in(self, a, b, rng, size):
        za, zb = (a - self.mu) / self.sd, (b - self.mu) / self.sd
        return stats.truncnorm.rvs(za, zb, loc=self.mu, scale=self.sd, size=size, random_state=rng)

    def log_gauss_mass(self, y, sigma, a, b):
        # N(y;t,s^2) N(t;mu,tau^2) = N(y;mu,s^2+tau^2) N(t;m,v)
        y = np.asarray(y, float)
        tau2, s2 = self.sd**2, sigma**2
        tot = s2 + tau2
        m = (y * tau2 + self.mu * s2) / tot
        v = math.sqrt(s2 * tau2 / tot)
        lead = -0.5 * (y - self.mu) ** 2 / tot - 0.5 * math.log(tot) - _LOG_SQRT_2PI
        return lead + _log_diff_ndtr((b - m) / v, (a - m) / v)


@dataclass(frozen=True)
class DensityPrior(Prior):
    """Arbitrary density on [lo, hi] handled entirely by quadrature."""

    density: Callable
    lo: float
    hi: float
    _norm: float = field(init=False, default=1.0)

    def __post_init__(self):
        z = quad(lambda t: float(self.density(t)), self.lo, self.hi, what="prior normaliser")
        if not z > 0:
            raise ValueError("density has no mass")
        object.__setattr__(self, "_norm", z)

    def pdf(self, x):
        x = np.asarray(x, float)
        inside = (x >= self.lo) & (x <= self.hi)
        vals = np.vectorize(lambda t: float(self.density(t)))(x) if x.ndim else float(self.density(float(x)))
        return np.where(inside, vals, 0.0) / self._norm


def make_prior(name: str, lo: float = 0.0, hi: float = 1.0, mu: float = 0.0, sd: float = 1.0) -> Prior:
    if name == "uniform":
        return UniformPrior(lo, hi)
    if name == "normal":
        return NormalPrior(mu, sd)
    raise ValueError(f"unknown prior {name!r}")


# --------------------------------------------------------------------- models


@dataclass(frozen=True)
class HypothesisSet:
    priors: tuple

    def __post_init__(self):
        p = np.asarray(self.priors, float)
        if p.ndim != 1 or len(p) < 2:
            raise ValueError("need at least two hypotheses")
        if np.any(p < 0) or abs(p.sum() - 1) > 1e-12:
            raise ValueError(f"priors must be nonnegative and sum to 1, got {p.tolist()}")
        object.__setattr__(self, "priors", tuple(float(x) for x in p))

    @property
    def M(self):
        return len(self.priors)

    @classmethod
    def uniform(cls, M):
        return cls(tuple([1.0 / M] * M))

    def as_array(self):
        return np.asarray(self.priors)


class ObservationModel:
    M: int
    sigma: float

    def loglik(self, y) -> np.ndarray:
        raise NotImplementedError

    def likelihood(self, l: int, y):
        self._check(l)
        return np.exp(self.loglik(y)[..., l])

    def interval_prob(self, lo: float, hi: float) -> np.ndarray:
        raise NotImplementedError

    def sample(self, l: int, rng, size=None):
        raise NotImplementedError

    def grid(self) -> np.ndarray:
        raise NotImplementedError

    def _check(self, l):
        if not 0 <= l < self.M:
            raise IndexError(f"hypothesis index {l} out of range for M={self.M}")


@dataclass(frozen=True)
class GaussianShiftModel(ObservationModel):
    means: tuple
    sigma: float = 1.0

    def __post_init__(self):
        means = tuple(float(m) for m in self.means)
        if len(means) < 2 or not all(np.isfinite(means)):
            raise ValueError("need at least two finite means")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        object.__setattr__(self, "means", means)

    @classmethod
    def equally_spaced(cls, M, s, sigma=1.0):
        return cls(tuple(l * s for l in range(M)), sigma)

    @property
    def M(self):
        return len(self.means)

    def loglik(self, y):
        y = np.asarray(y, float)[..., None]
        mu = np.asarray(self.means)
        if self.sigma == 0:
            return np.where(y == mu, 0.0, -np.inf)
        z = (y - mu) / self.sigma
        return -0.5 * z * z - math.log(self.sigma) - _LOG_SQRT_2PI

    def interval_prob(self, lo, hi):
        mu = np.asarray(self.means)
        if self.sigma == 0:
            return ((mu >= lo) & (mu < hi)).astype(float)
        return np.exp(_log_diff_ndtr((hi - mu) / self.sigma, (lo - mu) / self.sigma))

    def sample(self, l, rng, size=None):
        self._check(l)
        return self.means[l] + self.sigma * rng.standard_normal(size)

    def sample_many(self, labels, rng, width):
        """Observations shaped (len(labels), width), row i drawn under labels[i]."""
        mu = np.asarray(self.means)[np.asarray(labels)]
        return mu[:, None] + self.sigma * rng.standard_normal((len(mu), width))

    def grid(self):
        mu = np.asarray(self.means)
        span = 12 * self.sigma
        base = np.linspace(mu.min() - span, mu.max() + span, 4001)
        local = (mu[:, None] + self.sigma * np.linspace(-8, 8, 33)).ravel()
        return np.unique(np.concatenate([base, local]))


@dataclass(frozen=True)
class RegionModel(ObservationModel):
    """Hypothesis l: theta lies in [edges[l], edges[l+1]); y = theta + N(0, sigma^2)."""

    edges: tuple
    prior: Prior
    sigma: float = 1.0
    masses: tuple = field(init=False, default=())

    def __post_init__(self):
        edges = tuple(float(e) for e in self.edges)
        if len(edges) < 3 or any(b <= a for a, b in zip(edges, edges[1:])):
            raise ValueError("region edges must be strictly increasing with at least two regions")
        if self.sigma <= 0:
            raise ValueError("sigma must be > 0")
        masses = tuple(self.prior.mass(a, b) for a, b in zip(edges, edges[1:]))
        if min(masses) <= 0:
            raise ValueError(f"every region needs positive prior mass, got {masses}")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "masses", masses)

    @property
    def M(self):
        return len(self.edges) - 1

    @property
    def priors(self) -> np.ndarray:
        m = np.asarray(self.masses)
        return m / m.sum()

    def region(self, l):
        return self.edges[l], self.edges[l + 1]

    def loglik(self, y):
        y = np.asarray(y, float)
        cols = []
        for l in range(self.M):
            a, b = self.region(l)
            lg = self.prior.log_gauss_mass(y, self.sigma, a, b)
            if lg is None:
                lg = np.log(np.vectorize(lambda v: self._quad_density(l, v))(y))
            else:
                lg = lg - math.log(self.masses[l])
            cols.append(lg)
        return np.stack(cols, axis=-1)

    def _quad_density(self, l, y):
        return region_likelihood_quad(self.prior, self.region(l), self.sigma, y) / self.masses[l]

    def interval_prob(self, lo, hi):
        out = np.empty(self.M)
        for l in range(self.M):
            a, b = self.region(l)
            v = self.prior.gauss_interval_mass(lo, hi, self.sigma, a, b)
            if v is None:
                s = self.sigma

                def f(t):
                    return self.prior.pdf(t) * (special.ndtr((hi - t) / s) - special.ndtr((lo - t) / s))

                lo_t, hi_t = self.prior._finite_span(a, b)
                pts = [p for p in (lo, hi) if np.isfinite(p)]
                v = quad(f, lo_t, hi_t, points=pts, what="interval probability")
            out[l] = v / self.masses[l]
        return np.clip(out, 0.0, 1.0)

    def sample(self, l, rng, size=None):
        self._check(l)
        a, b = self.region(l)
        n = 1 if size is None else size
        theta = self.prior.sample_in(a, b, rng, n)
        y = theta + self.sigma * rng.standard_normal(np.shape(theta))
        return float(y[0]) if size is None else y

    def grid(self):
        e = np.asarray(self.edges)
        lo, _ = self.prior._finite_span(e[0], e[1])
        _, hi = self.prior._finite_span(e[-2], e[-1])
        inner = e[1:-1]
        span = 12 * self.sigma
        base = np.linspace(lo - span, hi + span, 4001)
        pts = np.concatenate([inner, [lo, hi]])
        local = (pts[:, None] + self.sigma * np.linspace(-8, 8, 33)).ravel()
        return np.unique(np.concatenate([base, local]))


def region_likelihood_quad(prior: Prior, region, sigma: float, y: float) -> float:
    """int_region N(y; t, sigma^2) p(t) dt by adaptive quadrature (no normalisation)."""
    a, b = prior._finite_span(*region)

    def f(t):
        return float(prior.pdf(t)) * math.exp(-0.5 * ((y - t) / sigma) ** 2) / (sigma * math.sqrt(2 * math.pi))

    return quad(f, a, b, epsabs=1e-12, points=[y], what="region likelihood")

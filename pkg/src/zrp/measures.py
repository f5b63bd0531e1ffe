"""Sampling from the product invariant measures and exact canonical ensembles.

Grand-canonical sampling is inverse-CDF on the truncated series marginal.
Canonical ensembles on a box of half-width l condition the product measure on
the total particle number j (and on at least one particle at the origin for
the tagged version); the fugacity cancels, so weights reduce to

    mu:  w(eta) prop. to  prod_x 1/g(eta(x))!
    nu:  w(eta) prop. to  eta(0) * prod_x 1/g(eta(x))!

accumulated in log space.  Single-site canonical expectations are also
available through an exact origin-marginal convolution, which stays feasible
far beyond full state enumeration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import StateSpaceTooLarge, UnknownBuiltin
from .kernel import RateFunction, Thermodynamics

STATE_CAP_DEFAULT = 10_000_000


# ---------------------------------------------------------------------------
# density profiles


def _profile_const(params, u):
    return np.full_like(np.asarray(u, dtype=np.float64), params[0])


def _profile_cosine(params, u):
    mean, amp = params
    return mean + amp * np.cos(2 * np.pi * np.asarray(u, dtype=np.float64))


def _profile_step(params, u):
    lo, hi = params
    u = np.asarray(u, dtype=np.float64)
    return np.where((u % 1.0) < 0.5, lo, hi)


_BUILTIN_PROFILES = {
    "const": _profile_const,
    "cosine": _profile_cosine,
    "step": _profile_step,
}


@dataclass
class DensityProfile:
    """Periodic nonnegative density profile on the unit torus."""

    kind: str
    params: tuple = ()
    custom: Callable[[np.ndarray], np.ndarray] | None = None

    def __call__(self, u):
        if self.custom is not None:
            return self.custom(np.asarray(u, dtype=np.float64))
        return _BUILTIN_PROFILES[self.kind](self.params, u)

    @property
    def rho_bar(self) -> float:
        """Declared bound max rho_0 (evaluated on a fine grid for customs)."""
        if self.kind == "const":
            return self.params[0]
        if self.kind == "cosine":
            return self.params[0] + abs(self.params[1])
        if self.kind == "step":
            return max(self.params)
        return float(np.max(self(np.linspace(0, 1, 4096, endpoint=False))))


def profile_from_name(name: str) -> DensityProfile:
    """Builtins: const:<v>, cosine:<mean>:<amp>, step:<lo>:<hi>."""
    parts = name.split(":")
    kind, args = parts[0], tuple(float(x) for x in parts[1:])
    if kind not in _BUILTIN_PROFILES:
        raise UnknownBuiltin(name)
    expected = {"const": 1, "cosine": 2, "step": 2}[kind]
    if len(args) != expected:
        raise UnknownBuiltin(name)
    prof = DensityProfile(kind, args)
    if np.any(prof(np.linspace(0, 1, 256, endpoint=False)) < 0):
        raise ValueError(f"profile {name!r} takes negative values")
    return prof


# ---------------------------------------------------------------------------
# grand-canonical sampling

_CDF_CACHE_MAX = 65_536


def _mu_cdf(thermo: Thermodynamics, rho: float) -> np.ndarray:
    cache = thermo._tables.setdefault("mu_cdf", {})
    cdf = cache.get(rho)
    if cdf is None:
        cdf = np.cumsum(thermo.mu_pmf(rho))
        cdf[-1] = 1.0
        if len(cache) < _CDF_CACHE_MAX:
            cache[rho] = cdf
    return cdf


def _nu_cdf(thermo: Thermodynamics, rho: float) -> np.ndarray:
    cache = thermo._tables.setdefault("nu_cdf", {})
    cdf = cache.get(rho)
    if cdf is None:
        cdf = np.cumsum(thermo.nu_pmf(rho))
        cdf[-1] = 1.0
        if len(cache) < _CDF_CACHE_MAX:
            cache[rho] = cdf
    return cdf


def sample_mu_marginal(thermo: Thermodynamics, rho: float, rng, size=None):
    """Draw from the single-site marginal of mu_rho by inverse CDF."""
    if rho == 0.0:
        return 0 if size is None else np.zeros(size, dtype=np.int64)
    cdf = _mu_cdf(thermo, rho)
    u = rng.random(size)
    k = np.searchsorted(cdf, u, side="right")
    return int(k) if size is None else k.astype(np.int64)


def sample_nu_origin(thermo: Thermodynamics, rho: float, rng, size=None):
    """Draw from the size-biased origin marginal nu_rho; always >= 1."""
    if rho == 0.0:
        return 1 if size is None else np.ones(size, dtype=np.int64)
    cdf = _nu_cdf(thermo, rho)
    u = rng.random(size)
    k = np.searchsorted(cdf, u, side="right")
    return int(k) if size is None else k.astype(np.int64)


def sample_local_equilibrium(
    thermo: Thermodynamics,
    profile: DensityProfile,
    N: int,
    view: str = "tagged",
    rng=None,
) -> np.ndarray:
    """Independent occupancies with site-x marginal mu_{rho0(x/N)}.

    In the tagged view the origin marginal is the size-biased nu_{rho0(0)}
    (so site 0 always holds the tagged particle).  Returns the occupancy
    array; the caller owns tagged bookkeeping.
    """
    if view not in ("plain", "tagged"):
        raise ValueError(f"view must be 'plain' or 'tagged', got {view!r}")
    rhos = np.asarray(profile(np.arange(N) / N), dtype=np.float64)
    occ = np.zeros(N, dtype=np.int64)
    u = rng.random(N)
    for rho in np.unique(rhos):
        idx = np.nonzero(rhos == rho)[0]
        if rho == 0.0:
            continue
        cdf = _mu_cdf(thermo, float(rho))
        occ[idx] = np.searchsorted(cdf, u[idx], side="right")
    if view == "tagged":
        occ[0] = sample_nu_origin(thermo, float(rhos[0]), rng)
    return occ


# ---------------------------------------------------------------------------
# canonical ensembles on the box Lambda_l = {-l..l}


def _compositions(total: int, parts: int) -> np.ndarray:
    """All weak compositions of ``total`` into ``parts`` parts, colex order
    (last coordinate slowest)."""
    if parts == 1:
        return np.array([[total]], dtype=np.int32)
    blocks = []
    for last in range(total + 1):
        rest = _compositions(total - last, parts - 1)
        col = np.full((len(rest), 1), last, dtype=np.int32)
        blocks.append(np.hstack([rest, col]))
    return np.vstack(blocks)


def canonical_state_count(l: int, j: int, ensemble: str) -> int:
    m = 2 * l + 1
    if ensemble == "mu":
        return math.comb(j + m - 1, m - 1)
    return math.comb(j - 1 + m - 1, m - 1) if j >= 1 else 0


@dataclass
class CanonicalEnsemble:
    """Exhaustive canonical ensemble on Lambda_l with exact weights."""

    l: int
    j: int
    ensemble: str  # "nu" (eta(0) >= 1, size-biased) or "mu"
    states: np.ndarray  # (n_states, 2l+1) occupancies, site order -l..l
    weights: np.ndarray
    log_weights: np.ndarray = field(repr=False)

    @property
    def origin_index(self) -> int:
        return self.l


def enumerate_canonical(
    rate: RateFunction,
    l: int,
    j: int,
    ensemble: str = "nu",
    cap: int = STATE_CAP_DEFAULT,
) -> CanonicalEnsemble:
    """List every configuration on Lambda_l with j particles (nu: at least
    one at the origin) and its exact normalized weight."""
    if ensemble not in ("mu", "nu"):
        raise ValueError(f"ensemble must be 'mu' or 'nu', got {ensemble!r}")
    if j < 0 or (ensemble == "nu" and j < 1):
        raise ValueError(f"invalid particle count j={j} for ensemble {ensemble!r}")
    n_states = canonical_state_count(l, j, ensemble)
    if n_states > cap:
        raise StateSpaceTooLarge(n_states, cap)
    m = 2 * l + 1
    if ensemble == "nu":
        states = _compositions(j - 1, m)
        states[:, l] += 1
    else:
        states = _compositions(j, m)
    lgf = rate.lgf_array(j)
    logw = -lgf[states].sum(axis=1)
    if ensemble == "nu":
        logw = logw + np.log(states[:, l].astype(np.float64))
    shift = logw.max()
    w = np.exp(logw - shift)
    total = w.sum()
    return CanonicalEnsemble(
        l=l,
        j=j,
        ensemble=ensemble,
        states=states,
        weights=w / total,
        log_weights=logw - shift - math.log(total),
    )


def canonical_expectation(ensemble: CanonicalEnsemble, h_local) -> float:
    """Exact weighted sum of a function of the configuration on Lambda_l.

    ``h_local`` maps an occupancy array (site order -l..l) to a float.
    """
    vals = np.fromiter(
        (h_local(s) for s in ensemble.states), dtype=np.float64, count=len(ensemble.states)
    )
    return float(vals @ ensemble.weights)


def _log_w_site(rate: RateFunction, j: int) -> np.ndarray:
    """log(1/g(k)!) for k = 0..j."""
    return -rate.lgf_array(j)


def _logsumexp(v: np.ndarray) -> float:
    m = v.max()
    if m == -np.inf:
        return -np.inf
    return float(m + np.log(np.exp(v - m).sum()))


def canonical_origin_marginal(rate: RateFunction, l: int, j: int) -> np.ndarray:
    """Exact origin marginal of nu_{Lambda_l, j} by log-space convolution.

    P(eta(0)=k) prop. to k/g(k)! * W_{2l}(j-k) where W_m(n) sums
    prod 1/g! over weak compositions of n into m parts.  Equivalent to full
    enumeration but polynomial in (l, j).
    """
    if j < 1:
        raise ValueError("nu ensembles need j >= 1")
    lw = _log_w_site(rate, j)
    # W[m] computed iteratively over the 2l environment sites
    W = np.full(j + 1, -np.inf)
    W[0] = 0.0
    for _ in range(2 * l):
        nxt = np.full(j + 1, -np.inf)
        for n in range(j + 1):
            nxt[n] = _logsumexp(W[: n + 1][::-1] + lw[: n + 1])
        W = nxt
    ks = np.arange(1, j + 1)
    logp = np.log(ks.astype(np.float64)) + lw[1 : j + 1] + W[j - ks]
    p = np.zeros(j + 1)
    finite = logp > -np.inf
    if finite.any():
        shift = logp[finite].max()
        p[1:][finite] = np.exp(logp[finite] - shift)
    return p / p.sum()


def equivalence_gap(thermo: Thermodynamics, l: int, j: int, h) -> float:
    """|E_{nu_{Lambda_l,j}}[h(eta(0))] - E_{nu_{j/(2l+1)}}[h(eta(0))]|.

    The canonical side uses the exact origin marginal; the grand-canonical
    side is the truncated series at density j/(2l+1).
    """
    marginal = canonical_origin_marginal(thermo.rate, l, j)
    h_vals = np.fromiter((h(int(k)) for k in range(len(marginal))), dtype=np.float64)
    canonical = float(h_vals @ marginal)
    grand = thermo.grand_expectation(h, j / (2 * l + 1), ensemble="nu")
    return abs(canonical - grand)

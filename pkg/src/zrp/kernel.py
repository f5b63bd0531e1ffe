"""Jump-rate validation and thermodynamics of the product invariant measures.

A rate function g must satisfy g(0)=0, g(k)>0 for k>=1, bounded increments
(LG) and a uniform monotone gap over lag b (M).  Together these sandwich g
between linear slopes, a^-1 k <= g(k) <= a k, which makes the grand-canonical
partition function

    Z(phi) = sum_k phi^k / g(k)!,      g(k)! = g(1) g(2) ... g(k),

an entire function dominated termwise by exp(a*phi).  Everything downstream
(density/fugacity duality, the PDE coefficient phi(rho), the SDE coefficient
psi(rho) = phi(rho)/rho) is computed from truncated series in log space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import (
    ConditionLGViolated,
    ConditionMViolated,
    NonpositiveRate,
    OutOfRange,
    TruncationInsufficient,
    UnknownBuiltin,
)

_LGF_CHUNK = 512


def _eval_linear(k: np.ndarray) -> np.ndarray:
    return k.astype(np.float64)


def _eval_linear_perturbed(k: np.ndarray) -> np.ndarray:
    k = k.astype(np.float64)
    return np.where(k > 0, k + 1.0 - np.exp(-k), 0.0)


_BUILTIN_RATES: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "linear": _eval_linear,
    "linear_perturbed": _eval_linear_perturbed,
}


def _load_rate_table(path: str) -> tuple[np.ndarray, float, float]:
    """Parse a rate table file: a `tail <slope> <intercept>` header, then
    one `k g(k)` pair per line (k contiguous from 0)."""
    tail = None
    pairs = {}
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if parts[0] == "tail":
                tail = (float(parts[1]), float(parts[2]))
                continue
            pairs[int(parts[0])] = float(parts[1])
    if tail is None:
        raise ValueError(f"{path}: missing 'tail <slope> <intercept>' header")
    if sorted(pairs) != list(range(len(pairs))):
        raise ValueError(f"{path}: k values must be contiguous from 0")
    table = np.array([pairs[k] for k in range(len(pairs))], dtype=np.float64)
    return table, tail[0], tail[1]


@dataclass
class RateFunction:
    """A validated jump rate with its measured structural constants.

    ``table`` holds g(0..len-1); beyond the table either the closed-form
    ``evaluator`` or the declared linear tail extends g.  Immutable after
    construction apart from append-only caches.
    """

    name: str
    table: np.ndarray
    a1: float
    a0: float
    b: int
    a: float
    tail_slope: float | None = None
    tail_intercept: float = 0.0
    evaluator: Callable[[np.ndarray], np.ndarray] | None = None
    _lgf: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self._lgf is None:
            self._lgf = np.zeros(1)

    def __getstate__(self):
        state = self.__dict__.copy()
        # builtin evaluators are restored by name; custom callables may not pickle
        if self.name in _BUILTIN_RATES:
            state["evaluator"] = None
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        if self.evaluator is None and self.name in _BUILTIN_RATES:
            self.evaluator = _BUILTIN_RATES[self.name]

    def g_array(self, k_max: int) -> np.ndarray:
        """g(0..k_max) as a dense float array."""
        n = len(self.table)
        if k_max < n:
            return self.table[: k_max + 1].copy()
        ks = np.arange(n, k_max + 1)
        if self.evaluator is not None:
            ext = self.evaluator(ks)
        elif self.tail_slope is not None:
            ext = self.tail_slope * ks + self.tail_intercept
        else:
            raise OutOfRange(f"rate table ends at k={n-1}, no tail declared")
        return np.concatenate([self.table, ext])

    def g(self, k: int) -> float:
        if k < len(self.table):
            return float(self.table[k])
        return float(self.g_array(k)[k])

    def _extend_lgf(self, k: int) -> None:
        have = len(self._lgf) - 1
        if k <= have:
            return
        upto = max(k, have + _LGF_CHUNK)
        g_vals = self.g_array(upto)
        out = np.zeros(upto + 1)
        np.cumsum(np.log(g_vals[1:]), out=out[1:])
        self._lgf = out

    def log_g_factorial(self, k: int) -> float:
        """log g(k)! = sum_{j=1..k} log g(j); 0 for k=0."""
        if k < 0:
            raise OutOfRange(f"k={k} negative")
        self._extend_lgf(k)
        return float(self._lgf[k])

    def lgf_array(self, k_max: int) -> np.ndarray:
        """log g(k)! for k = 0..k_max."""
        self._extend_lgf(k_max)
        return self._lgf[: k_max + 1]


def rate_from_name(name: str) -> Callable[[np.ndarray], np.ndarray] | str:
    """Resolve a config rate name to a validation input."""
    if name in _BUILTIN_RATES or name.startswith("table:"):
        return name
    raise UnknownBuiltin(name)


def validate_rate(
    g_spec,
    b_hint: int = 1,
    k_check: int = 10_000,
    declared_a1: float | None = None,
) -> RateFunction:
    """Scan g over k=0..k_check, measure the (LG)/(M) constants and the
    linear-sandwich constant a, rejecting rates that break the conditions.

    ``g_spec`` is a builtin name ("linear", "linear_perturbed",
    "table:<path>"), or a vectorized callable ks -> g(ks).
    """
    if b_hint < 1:
        raise ValueError("b_hint must be >= 1")
    name = "custom"
    evaluator = None
    tail_slope = None
    tail_intercept = 0.0
    if isinstance(g_spec, str):
        name = g_spec
        if g_spec.startswith("table:"):
            table, tail_slope, tail_intercept = _load_rate_table(g_spec[len("table:"):])
            ks = np.arange(k_check + 1)
            vals = np.where(
                ks < len(table),
                table[np.minimum(ks, len(table) - 1)],
                tail_slope * ks + tail_intercept,
            )
        else:
            if g_spec not in _BUILTIN_RATES:
                raise UnknownBuiltin(g_spec)
            evaluator = _BUILTIN_RATES[g_spec]
            vals = evaluator(np.arange(k_check + 1))
    else:
        evaluator = lambda ks: np.asarray([g_spec(int(k)) for k in np.atleast_1d(ks)], dtype=np.float64)  # noqa: E731
        vals = evaluator(np.arange(k_check + 1))

    vals = np.asarray(vals, dtype=np.float64)
    if vals[0] != 0.0:
        raise NonpositiveRate(0, vals[0])
    bad = np.nonzero(vals[1:] <= 0.0)[0]
    if bad.size:
        k = int(bad[0]) + 1
        raise NonpositiveRate(k, vals[k])

    increments = np.abs(np.diff(vals))
    a1 = float(increments.max())
    if declared_a1 is not None and a1 > declared_a1:
        n = int(np.argmax(increments > declared_a1))
        raise ConditionLGViolated(n, float(increments[n]), declared_a1)

    gaps = vals[b_hint:] - vals[:-b_hint]
    if np.any(gaps <= 0.0):
        n = int(np.argmax(gaps <= 0.0))
        raise ConditionMViolated(n, float(gaps[n]), b_hint)
    a0 = float(gaps.min())

    ks = np.arange(1, k_check + 1, dtype=np.float64)
    a = max(a1, float((ks / vals[1:]).max()), b_hint / a0)
    if tail_slope is not None:
        a = max(a, 1.0 / tail_slope)

    return RateFunction(
        name=name,
        table=vals,
        a1=a1,
        a0=a0,
        b=b_hint,
        a=a,
        tail_slope=tail_slope,
        tail_intercept=tail_intercept,
        evaluator=evaluator,
    )


@dataclass(frozen=True)
class JumpKernel:
    """Finite-range mean-zero single-particle transition probability."""

    displacements: np.ndarray  # int displacements z with p(z) > 0
    probabilities: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.displacements, dtype=np.int64)
        p = np.asarray(self.probabilities, dtype=np.float64)
        object.__setattr__(self, "displacements", z)
        object.__setattr__(self, "probabilities", p)
        if z.size == 0 or np.any(p <= 0):
            raise ValueError("kernel needs a nonempty support with positive weights")
        if np.any(z == 0):
            raise ValueError("kernel support must exclude z=0")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("kernel probabilities must sum to 1")
        if abs(float(z @ p)) > 1e-12:
            raise ValueError("kernel must be mean zero")
        if math.gcd(*[int(abs(v)) for v in z]) != 1:
            raise ValueError("kernel must be irreducible on Z (gcd of support 1)")

    @property
    def sigma2(self) -> float:
        return float((self.displacements.astype(np.float64) ** 2) @ self.probabilities)

    @property
    def range(self) -> int:
        return int(np.abs(self.displacements).max())

    @property
    def is_symmetric(self) -> bool:
        pmap = dict(zip(self.displacements.tolist(), self.probabilities.tolist()))
        return all(abs(p - pmap.get(-z, 0.0)) < 1e-12 for z, p in pmap.items())

    @property
    def is_nearest_neighbor(self) -> bool:
        return self.range == 1 and self.is_symmetric


def nearest_neighbor_kernel() -> JumpKernel:
    return JumpKernel(np.array([-1, 1]), np.array([0.5, 0.5]))


def uniform_kernel(r: int) -> JumpKernel:
    """Uniform mean-zero kernel on +-1..+-r."""
    z = np.concatenate([np.arange(-r, 0), np.arange(1, r + 1)])
    return JumpKernel(z, np.full(2 * r, 1.0 / (2 * r)))


def kernel_from_name(name: str) -> JumpKernel:
    if name == "nn":
        return nearest_neighbor_kernel()
    if name.startswith("uniform:"):
        return uniform_kernel(int(name.split(":")[1]))
    raise UnknownBuiltin(name)


@dataclass
class Thermodynamics:
    """Truncated-series evaluation of all grand-canonical functionals.

    Series terms t_k = phi^k/g(k)! are handled as logs; truncation stops as
    soon as the exponential-domination tail bound drops below ``tol`` times
    the running sum (t_{k+1}/t_k = phi/g(k+1) <= a phi/(k+1)).
    """

    rate: RateFunction
    k_max: int = 200_000
    tol: float = 1e-14
    rho_max: float = 1e3
    _tables: dict = field(default_factory=dict, repr=False, compare=False)

    def _log_terms(self, phi: float) -> np.ndarray:
        """log t_k for k = 0..K with guaranteed relative tail < tol."""
        if phi < 0:
            raise OutOfRange(f"phi={phi} negative")
        if phi == 0.0:
            return np.array([0.0, -np.inf])  # t_0 = 1, rest vanish
        lphi = math.log(phi)
        a = self.rate.a
        log_sum = 0.0  # log t_0
        k = 0
        while True:
            k_new = min(self.k_max, max(2 * (k + 1), int(2 * a * phi) + 16))
            lgf = self.rate.lgf_array(k_new)
            lt = np.arange(k_new + 1) * lphi - lgf
            shift = lt.max()
            log_sum = shift + math.log(np.exp(lt - shift).sum())
            ratio = a * phi / (k_new + 1)
            if ratio < 0.5:
                log_tail = lt[k_new] + math.log(ratio / (1.0 - ratio))
                if log_tail < math.log(self.tol) + log_sum:
                    return lt
            if k_new >= self.k_max:
                raise TruncationInsufficient(
                    f"k_max={self.k_max} too small for phi={phi} (rate a={a})"
                )
            k = k_new

    def _weights(self, phi: float) -> np.ndarray:
        """Normalized series weights t_k / Z(phi) (the mu_phi marginal pmf)."""
        lt = self._log_terms(phi)
        w = np.exp(lt - lt.max())
        return w / w.sum()

    def log_partition(self, phi: float) -> float:
        lt = self._log_terms(phi)
        shift = lt.max()
        return float(shift + np.log(np.exp(lt - shift).sum()))

    def partition_Z(self, phi: float) -> float:
        """Z(phi) = sum_k phi^k / g(k)!."""
        return math.exp(self.log_partition(phi))

    def density_of_fugacity(self, phi: float) -> float:
        """rho(phi) = E_{mu_phi}[eta(0)]."""
        w = self._weights(phi)
        return float(np.arange(len(w)) @ w)

    def _density_and_slope(self, phi: float) -> tuple[float, float]:
        w = self._weights(phi)
        ks = np.arange(len(w), dtype=np.float64)
        mean = float(ks @ w)
        var = float((ks * ks) @ w) - mean * mean
        return mean, var / phi if phi > 0 else math.inf

    def fugacity_of_density(self, rho: float, rtol: float = 1e-12) -> float:
        """Invert rho(phi) by bracketing plus Newton with bisection fallback."""
        if rho < 0:
            raise OutOfRange(f"rho={rho} negative")
        if rho > self.rho_max:
            raise OutOfRange(f"rho={rho} exceeds rho_max={self.rho_max}")
        if rho == 0.0:
            return 0.0
        a = self.rate.a
        lo, hi = rho / a * 0.99, rho * a * 1.01  # sandwich a^-1 rho <= phi <= a rho
        for _ in range(200):
            if self.density_of_fugacity(hi) >= rho:
                break
            hi *= 2.0
        for _ in range(200):
            if self.density_of_fugacity(lo) <= rho:
                break
            lo *= 0.5
        phi = 0.5 * (lo + hi)
        for _ in range(200):
            mean, slope = self._density_and_slope(phi)
            if mean > rho:
                hi = phi
            else:
                lo = phi
            step = (rho - mean) / slope if slope > 0 else 0.0
            cand = phi + step
            if not (lo < cand < hi):  # Newton left the bracket: bisect
                cand = 0.5 * (lo + hi)
            if abs(cand - phi) <= rtol * max(phi, 1e-300):
                return cand
            phi = cand
        return phi

    def psi(self, rho: float) -> float:
        """phi(rho)/rho for rho>0, g(1) at rho=0, continuous across 0.

        Below rho=1e-6 the ratio is taken through the series identity
        phi/rho(phi) = Z(phi) / sum_k k phi^{k-1}/g(k)!, which has no 0/0.
        """
        if rho < 0:
            raise OutOfRange(f"rho={rho} negative")
        if rho == 0.0:
            return self.rate.g(1)
        phi = self.fugacity_of_density(rho)
        if rho >= 1e-6:
            return phi / rho
        lt = self._log_terms(phi)
        ks = np.arange(len(lt), dtype=np.float64)
        lphi = math.log(phi) if phi > 0 else -math.inf
        ln = lt.copy()
        ln[1:] -= lphi  # log(phi^{k-1}/g(k)!)
        shift = max(lt.max(), ln[1:].max() if len(ln) > 1 else -math.inf)
        z = np.exp(lt - shift).sum()
        s1 = float(ks[1:] @ np.exp(ln[1:] - shift))
        return z / s1

    def grand_expectation(self, h, rho: float, ensemble: str = "mu") -> float:
        """E[h(eta(0))] under mu_rho, or under the size-biased nu_rho.

        The nu expectation is evaluated through the rho-free ratio
        sum_k h(k) k phi^{k-1}/g(k)! / sum_k k phi^{k-1}/g(k)!  so that the
        rho -> 0 limit H(0) = h(1) comes out exactly.
        """
        if ensemble not in ("mu", "nu"):
            raise ValueError(f"ensemble must be 'mu' or 'nu', got {ensemble!r}")
        if rho < 0:
            raise OutOfRange(f"rho={rho} negative")
        phi = self.fugacity_of_density(rho)
        lt = self._log_terms(phi)
        ks = np.arange(len(lt))
        h_vals = np.fromiter((h(int(k)) for k in ks), dtype=np.float64, count=len(ks))
        if ensemble == "mu":
            w = np.exp(lt - lt.max())
            return float(h_vals @ w / w.sum())
        if phi == 0.0:  # nu_0 = delta on one particle at the origin
            return float(h(1))
        lw = lt[1:] + np.log(ks[1:])  # log(k phi^k/g(k)!), common phi^{-1} cancels
        w = np.exp(lw - lw.max())
        return float(h_vals[1:] @ w / w.sum())

    def mu_pmf(self, rho: float) -> np.ndarray:
        """Single-site marginal of mu_rho (truncated, tail below tol)."""
        return self._weights(self.fugacity_of_density(rho))

    def nu_pmf(self, rho: float) -> np.ndarray:
        """Origin marginal of nu_rho: pmf(k) proportional to k mu_rho(k), k>=1."""
        if rho == 0.0:
            return np.array([0.0, 1.0])
        w = self.mu_pmf(rho) * np.arange(len(self.mu_pmf(rho)), dtype=np.float64)
        return w / w.sum()

    def lookup_tables(self, rho_hi: float, n_grid: int = 8192):
        """(rho, phi, psi) sampled on a dense fugacity grid covering [0, rho_hi].

        Backs interpolated evaluation in the PDE/SDE hot loops; the precise
        root-finding path stays in fugacity_of_density.
        """
        key = (round(float(rho_hi), 6), n_grid)
        if key in self._tables:
            return self._tables[key]
        phi_hi = self.fugacity_of_density(min(rho_hi, self.rho_max))
        phi_grid = np.linspace(0.0, phi_hi * 1.0000001, n_grid)
        rho_vals = np.array([self.density_of_fugacity(p) for p in phi_grid])
        psi_vals = np.empty_like(rho_vals)
        psi_vals[0] = self.rate.g(1)
        psi_vals[1:] = phi_grid[1:] / rho_vals[1:]
        tables = (rho_vals, phi_grid, psi_vals)
        self._tables[key] = tables
        return tables

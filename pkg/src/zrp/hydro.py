"""Continuum limits: the nonlinear diffusion PDE and the tagged-particle SDE.

The hydrodynamic density solves  d_t rho = sigma^2 d_x^2 phi(rho)  on the
unit torus, discretized by the explicit conservative stencil

    rho_i^{n+1} = rho_i^n + (sigma^2 dt/dx^2)(phi_{i+1} - 2 phi_i + phi_{i-1})

with dt chosen so sigma^2 dt/dx^2 * L_phi <= safety/2 for a numerically
estimated Lipschitz bound L_phi of phi on the padded density range.  Under
that CFL condition the scheme is monotone and mass-conserving.

The limiting tagged-particle law is  dx = sigma sqrt(psi(rho(t, x))) dB
integrated by Euler-Maruyama; its quadratic variation A_t accumulates the
same coefficient per step, so the discrete martingale isometry is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CFLFailure, NegativeDensity, OutOfRange
from .kernel import Thermodynamics
from .measures import DensityProfile


@dataclass
class GridField:
    """Space-time grid of the density on the unit torus (periodic in space)."""

    M: int
    times: np.ndarray
    values: np.ndarray  # (n_times, M), values[n, i] = rho(times[n], i/M)

    @property
    def u_grid(self) -> np.ndarray:
        return np.arange(self.M) / self.M

    def mass(self) -> np.ndarray:
        """sum_i rho(t_n, i dx) dx per stored time."""
        return self.values.sum(axis=1) / self.M


def _phi_interp(thermo: Thermodynamics, rho_hi: float):
    rho_tab, phi_tab, _ = thermo.lookup_tables(rho_hi)
    return rho_tab, phi_tab


def _psi_interp(thermo: Thermodynamics, rho_hi: float):
    rho_tab, _, psi_tab = thermo.lookup_tables(rho_hi)
    return rho_tab, psi_tab


def estimate_phi_lipschitz(thermo: Thermodynamics, rho_hi: float) -> float:
    """max |phi'| over [0, rho_hi] by divided differences on the dense table."""
    rho_tab, phi_tab = _phi_interp(thermo, rho_hi * 1.01 + 1e-9)
    mask = rho_tab <= rho_hi
    idx = np.nonzero(mask)[0]
    hi = min(int(idx[-1]) + 2, len(rho_tab))
    dr = np.diff(rho_tab[:hi])
    dp = np.diff(phi_tab[:hi])
    good = dr > 0
    return float((dp[good] / dr[good]).max())


def solve_pde(
    thermo: Thermodynamics,
    profile: DensityProfile,
    sigma2: float,
    T: float,
    M: int,
    safety: float = 0.5,
    times=None,
) -> GridField:
    """March the explicit scheme to T, storing the field at the requested
    times (dt is refined per output interval so they are hit exactly)."""
    if M < 16:
        raise ValueError("M must be >= 16")
    if not 0 < safety <= 1:
        raise ValueError("safety must lie in (0, 1]")
    if times is None:
        times = np.array([0.0, T])
    times = np.sort(np.asarray(times, dtype=np.float64))
    if times[0] < 0 or times[-1] > T * (1 + 1e-12):
        raise OutOfRange("requested times outside [0, T]")
    if times[0] > 0:
        times = np.concatenate([[0.0], times])

    u = np.arange(M) / M
    rho = np.asarray(profile(u), dtype=np.float64).copy()
    rho_pad = 2.0 * max(float(rho.max()), profile.rho_bar) + 1e-9
    rho_tab, phi_tab = _phi_interp(thermo, rho_pad)
    L_phi = estimate_phi_lipschitz(thermo, rho_pad)
    dx2 = 1.0 / (M * M)
    dt_max = safety * dx2 / (2.0 * sigma2 * L_phi)
    if not dt_max > 0 or not math.isfinite(dt_max):
        raise CFLFailure(f"stable step underflowed: dt={dt_max}")

    out = np.empty((len(times), M))
    n_out = 0
    if times[0] == 0.0:
        out[0] = rho
        n_out = 1
    t = 0.0
    for t_target in times[n_out:]:
        span = t_target - t
        n_steps = max(1, int(math.ceil(span / dt_max - 1e-12)))
        dt = span / n_steps
        c = sigma2 * dt * M * M
        for _ in range(n_steps):
            phi = np.interp(rho, rho_tab, phi_tab)
            rho += c * (np.roll(phi, -1) - 2.0 * phi + np.roll(phi, 1))
        if rho.min() < -1e-12:
            raise NegativeDensity(f"rho_min={rho.min()} at t={t_target}")
        out[n_out] = rho
        n_out += 1
        t = t_target
    return GridField(M=M, times=times, values=out)


def interpolate_density(field: GridField, t: float, u):
    """Bilinear lookup, periodic in u, exact at grid nodes."""
    times = field.times
    if t < times[0] - 1e-12 or t > times[-1] + 1e-12:
        raise OutOfRange(f"t={t} outside stored range [{times[0]}, {times[-1]}]")
    t = min(max(t, times[0]), times[-1])
    j = int(np.searchsorted(times, t, side="right")) - 1
    j = min(max(j, 0), len(times) - 2) if len(times) > 1 else 0
    if len(times) == 1:
        row = field.values[0]
    else:
        dt = times[j + 1] - times[j]
        w = 0.0 if dt == 0 else (t - times[j]) / dt
        row = (1.0 - w) * field.values[j] + w * field.values[j + 1]
    uu = np.atleast_1d(np.asarray(u, dtype=np.float64)) % 1.0
    pos = uu * field.M
    i0 = np.floor(pos).astype(np.int64) % field.M
    frac = pos - np.floor(pos)
    i1 = (i0 + 1) % field.M
    vals = (1.0 - frac) * row[i0] + frac * row[i1]
    return float(vals[0]) if np.isscalar(u) else vals


@dataclass
class DiffusionPath:
    """One Euler-Maruyama path of the limiting tagged-particle diffusion."""

    dt: float
    times: np.ndarray
    x: np.ndarray  # lifted positions; torus value = x mod 1
    a: np.ndarray  # A_t = sigma^2 int_0^t psi(rho(s, x_s)) ds, same step rule


def integrate_sde(
    thermo: Thermodynamics,
    field: GridField,
    sigma2: float,
    dt: float,
    n_paths: int,
    seed: int,
    record_times=None,
) -> list[DiffusionPath]:
    """Euler-Maruyama for dx = sigma sqrt(psi(rho(t, x mod 1))) dB.

    All paths share the step grid; ``record_times`` (default {0, T}) must lie
    on it.  Deterministic given the seed.
    """
    if dt > 1e-3:
        raise ValueError("dt must be <= 1e-3")
    T = float(field.times[-1])
    n_steps = int(round(T / dt))
    if abs(n_steps * dt - T) > 1e-9 * max(1.0, T):
        raise ValueError(f"dt={dt} does not divide the field horizon T={T}")
    if record_times is None:
        record_times = np.array([0.0, T])
    record_times = np.sort(np.asarray(record_times, dtype=np.float64))
    rec_steps = np.round(record_times / dt).astype(np.int64)
    if np.any(np.abs(rec_steps * dt - record_times) > 1e-9 * max(1.0, T)):
        raise ValueError("record times must be multiples of dt")

    rho_hi = float(field.values.max()) * 1.05 + 1e-6
    rho_tab, psi_tab = _psi_interp(thermo, rho_hi)
    sig = math.sqrt(sigma2)
    sqdt = math.sqrt(dt)

    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    x = np.zeros(n_paths)
    a = np.zeros(n_paths)
    rec_x = np.zeros((len(rec_steps), n_paths))
    rec_a = np.zeros((len(rec_steps), n_paths))
    rec_lookup = {int(s): i for i, s in enumerate(rec_steps)}
    if 0 in rec_lookup:
        rec_x[rec_lookup[0]] = x
        rec_a[rec_lookup[0]] = a

    times = field.times
    for n in range(n_steps):
        t = n * dt
        j = min(max(int(np.searchsorted(times, t, side="right")) - 1, 0), len(times) - 2)
        w = (t - times[j]) / (times[j + 1] - times[j])
        row = (1.0 - w) * field.values[j] + w * field.values[j + 1]
        pos = (x % 1.0) * field.M
        i0 = np.floor(pos).astype(np.int64) % field.M
        frac = pos - np.floor(pos)
        i1 = (i0 + 1) % field.M
        rho_here = (1.0 - frac) * row[i0] + frac * row[i1]
        psi_here = np.interp(rho_here, rho_tab, psi_tab)
        a += sigma2 * psi_here * dt
        x += sig * np.sqrt(psi_here) * sqdt * rng.standard_normal(n_paths)
        idx = rec_lookup.get(n + 1)
        if idx is not None:
            rec_x[idx] = x
            rec_a[idx] = a

    return [
        DiffusionPath(dt=dt, times=record_times.copy(), x=rec_x[:, p].copy(), a=rec_a[:, p].copy())
        for p in range(n_paths)
    ]


def limit_quadratic_variation(
    thermo: Thermodynamics,
    field: GridField,
    x_path: np.ndarray,
    times: np.ndarray,
    sigma2: float,
) -> np.ndarray:
    """Trapezoidal A_t = sigma^2 int_0^t psi(rho(s, x_s mod 1)) ds along any
    sampled path (microscopic trajectory or SDE path)."""
    times = np.asarray(times, dtype=np.float64)
    x_path = np.asarray(x_path, dtype=np.float64)
    rho_hi = float(field.values.max()) * 1.05 + 1e-6
    rho_tab, psi_tab = _psi_interp(thermo, rho_hi)
    vals = np.empty(len(times))
    for i, (t, x) in enumerate(zip(times, x_path)):
        rho_here = interpolate_density(field, float(t), float(x % 1.0))
        vals[i] = sigma2 * np.interp(rho_here, rho_tab, psi_tab)
    out = np.zeros(len(times))
    if len(times) > 1:
        inc = 0.5 * (vals[1:] + vals[:-1]) * np.diff(times)
        np.cumsum(inc, out=out[1:])
    return out


def write_field_csv(field: GridField, path) -> None:
    """CSV rows t,u,rho over the whole grid."""
    with open(path, "w") as fh:
        fh.write("t,u,rho\n")
        u = field.u_grid
        for n, t in enumerate(field.times):
            for i in range(field.M):
                fh.write(f"{t:.17g},{u[i]:.17g},{field.values[n, i]:.17g}\n")


def write_sde_csv(paths: list[DiffusionPath], path) -> None:
    """CSV rows path_id,t,x,a."""
    with open(path, "w") as fh:
        fh.write("path_id,t,x,a\n")
        for pid, p in enumerate(paths):
            for t, x, a in zip(p.times, p.x, p.a):
                fh.write(f"{pid},{t:.17g},{x:.17g},{a:.17g}\n")

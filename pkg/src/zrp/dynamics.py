"""Event-driven simulation of the zero-range process with a tagged particle.

The chain runs in the plain (unshifted) frame with the tagged particle as a
label: when a site with k residents fires, the tagged resident is the mover
with probability 1/k.  This realizes the environment+tagged-jump generator
exactly while avoiding O(N) frame translations per tagged jump.  Positions
are kept as winding-aware lifted integers; the torus site is derived.

Macroscopic time: t_micro = t_macro * N^2.  The quadratic variation of the
rescaled tagged position x^N = X/N is

    <x^N>_t = sigma^2 / N^2 * integral_0^{t N^2} g(xi_s(X_s))/xi_s(X_s) ds,

accumulated exactly event by event (the integrand is piecewise constant).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kmc
from .errors import DeadlockedState, EventBudgetExceeded
from .kernel import JumpKernel, Thermodynamics
from .measures import DensityProfile, sample_local_equilibrium

EVENT_CAP_DEFAULT = 2_000_000_000


@dataclass
class Configuration:
    """Occupancies on the discrete torus plus the tagged particle's site."""

    N: int
    occ: np.ndarray  # int64 occupancies
    tagged_site: int

    @property
    def total(self) -> int:
        return int(self.occ.sum())

    def copy(self) -> "Configuration":
        return Configuration(self.N, self.occ.copy(), self.tagged_site)


def environment_view(config: Configuration) -> np.ndarray:
    """eta with eta(x) = xi(x + tagged_site mod N); eta(0) >= 1."""
    return np.roll(config.occ, -config.tagged_site)


@dataclass
class EventRecord:
    micro_dt: float
    site: int
    displacement: int
    tagged_moved: bool


@dataclass
class RecordSpec:
    """What simulate() samples: macro times for (x, qv), macro snapshot
    times, and optionally the full event stream."""

    sample_times: np.ndarray
    snapshot_times: np.ndarray = field(default_factory=lambda: np.empty(0))
    record_events: bool = False
    event_cap: int = EVENT_CAP_DEFAULT

    def __post_init__(self):
        self.sample_times = np.sort(np.asarray(self.sample_times, dtype=np.float64))
        self.snapshot_times = np.sort(np.asarray(self.snapshot_times, dtype=np.float64))


class SimulationState:
    """Mutable simulation state: configuration, Fenwick rate tree, clocks,
    lifted tagged position, exact QV accumulator, and the RNG stream."""

    def __init__(self, config: Configuration, g_table: np.ndarray, rng_state: np.ndarray, seed):
        self.config = config
        self.g_table = np.asarray(g_table, dtype=np.float64)
        self.rate_tree = _kmc.fenwick_build(self.g_table[config.occ])
        self.rng_state = np.asarray(rng_state, dtype=np.uint64)
        self.seed = seed
        self.micro_time = 0.0
        self.qv_accumulator = 0.0
        self.lifted_position = 0
        self.event_count = 0

    @property
    def total_rate(self) -> float:
        return float(_kmc.fenwick_total(self.rate_tree))

    def _state_arrays(self):
        state_f = np.array([self.micro_time, self.qv_accumulator])
        state_i = np.array(
            [self.config.tagged_site, self.lifted_position, self.event_count], dtype=np.int64
        )
        return state_f, state_i

    def _absorb(self, state_f, state_i):
        self.micro_time = float(state_f[0])
        self.qv_accumulator = float(state_f[1])
        self.config.tagged_site = int(state_i[0])
        self.lifted_position = int(state_i[1])
        self.event_count = int(state_i[2])


def _rng_words(seq: np.random.SeedSequence) -> np.ndarray:
    words = seq.generate_state(4, dtype=np.uint64)
    if not words.any():
        words[0] = np.uint64(1)
    return words


def init_state(
    thermo: Thermodynamics,
    profile: DensityProfile,
    N: int,
    seed: int,
) -> SimulationState:
    """Local-equilibrium start: site marginals mu_{rho0(x/N)}, size-biased
    origin marginal, tagged particle at site 0, clocks zeroed."""
    ss = np.random.SeedSequence(seed)
    ss_init, ss_dyn = ss.spawn(2)
    init_rng = np.random.Generator(np.random.PCG64(ss_init))
    occ = sample_local_equilibrium(thermo, profile, N, view="tagged", rng=init_rng)
    config = Configuration(N=N, occ=occ, tagged_site=0)
    total = config.total
    g_table = thermo.rate.g_array(total + 1)
    return SimulationState(config, g_table, _rng_words(ss_dyn), seed)


def kmc_step(state: SimulationState, kernel: JumpKernel) -> EventRecord:
    """One Gillespie event: advances the clock, accumulates the exact QV
    increment with the pre-event tagged occupancy, applies the move."""
    occ = state.config.occ
    tagged = state.config.tagged_site
    if state.total_rate <= 0.0:
        raise DeadlockedState("total jump rate vanished with particles present")
    c = state.g_table[occ[tagged]] / occ[tagged]
    disp = kernel.displacements
    disp_cdf = np.cumsum(kernel.probabilities)
    disp_cdf[-1] = 1.0
    tau, x, z, tagged_moved, new_tagged = _kmc.step_core(
        occ, state.rate_tree, state.g_table, disp, disp_cdf, tagged, state.rng_state
    )
    state.micro_time += tau
    state.qv_accumulator += tau * c
    state.event_count += 1
    state.config.tagged_site = int(new_tagged)
    if tagged_moved:
        state.lifted_position += int(z)
    return EventRecord(float(tau), int(x), int(z), bool(tagged_moved))


@dataclass
class TrajectoryRecord:
    """Macroscopic-time record of one trajectory."""

    N: int
    seed: int
    sigma2: float
    macro_times: np.ndarray
    x_path: np.ndarray  # lifted position / N at the sample times
    qv_path: np.ndarray  # sigma^2 * qv_accumulator / N^2
    lifted_path: np.ndarray  # integer lifted positions
    snapshot_times: np.ndarray
    snapshots: np.ndarray  # (n_snap, N) occupancies
    snapshot_tagged: np.ndarray
    snapshot_lifted: np.ndarray
    initial_occ: np.ndarray
    initial_tagged: int
    event_count: int
    events: dict | None = None

    def snapshot_config(self, i: int) -> Configuration:
        return Configuration(self.N, self.snapshots[i].astype(np.int64), int(self.snapshot_tagged[i]))

    def tagged_jump_counts(self, displacements) -> np.ndarray:
        """N_t^z at the sample times, from the event log (optional record)."""
        if self.events is None:
            raise ValueError("trajectory was recorded without events")
        zs = np.asarray(displacements)
        t_micro = self.macro_times * self.N**2
        counts = np.zeros((len(t_micro), len(zs)), dtype=np.int64)
        mask = self.events["tagged"] == 1
        ev_t = self.events["t"][mask]
        ev_z = self.events["z"][mask]
        for j, z in enumerate(zs):
            tz = ev_t[ev_z == z]
            counts[:, j] = np.searchsorted(tz, t_micro, side="right")
        return counts


def simulate(
    state: SimulationState,
    kernel: JumpKernel,
    T_macro: float,
    record_spec: RecordSpec,
) -> TrajectoryRecord:
    """Run to macro time T, sampling (x, qv) and snapshots at exact times."""
    if T_macro <= 0:
        raise ValueError("T_macro must be positive")
    N = state.config.N
    n2 = float(N) ** 2
    t_end = T_macro * n2
    rec_times = record_spec.sample_times * n2
    snap_times = record_spec.snapshot_times * n2
    if rec_times.size and rec_times[-1] > t_end * (1 + 1e-12):
        raise ValueError("sample times exceed T_macro")

    disp = kernel.displacements
    disp_cdf = np.cumsum(kernel.probabilities)
    disp_cdf[-1] = 1.0

    initial_occ = state.config.occ.copy()
    initial_tagged = state.config.tagged_site

    rec_x = np.zeros(len(rec_times), dtype=np.int64)
    rec_qv = np.zeros(len(rec_times))
    snap_occ = np.zeros((len(snap_times), N), dtype=np.int32)
    snap_tagged = np.zeros(len(snap_times), dtype=np.int64)
    snap_lifted = np.zeros(len(snap_times), dtype=np.int64)

    if record_spec.record_events:
        est = int(state.total_rate * (t_end - state.micro_time) * 1.5) + 16384
        backup = (
            state.config.occ.copy(),
            state.rate_tree.copy(),
            state.rng_state.copy(),
            state._state_arrays(),
        )
    else:
        est = 0
        backup = None
    while True:
        ev_t = np.zeros(est)
        ev_site = np.zeros(est, dtype=np.int32)
        ev_z = np.zeros(est, dtype=np.int16)
        ev_tagged = np.zeros(est, dtype=np.uint8)
        state_f, state_i = state._state_arrays()
        status, n_rec, n_snap, n_ev = _kmc.run_core(
            state.config.occ,
            state.rate_tree,
            state.g_table,
            disp,
            disp_cdf,
            state.rng_state,
            state_f,
            state_i,
            t_end,
            rec_times,
            rec_x,
            rec_qv,
            snap_times,
            snap_occ,
            snap_tagged,
            snap_lifted,
            record_spec.event_cap,
            record_spec.record_events,
            ev_t,
            ev_site,
            ev_z,
            ev_tagged,
        )
        if status != _kmc.EVENT_BUFFER_FULL:
            break
        # deterministic retry with a larger log buffer
        occ0, tree0, rng0, (sf0, si0) = backup
        state.config.occ[:] = occ0
        state.rate_tree[:] = tree0
        state.rng_state[:] = rng0
        state._absorb(sf0, si0)
        est *= 2

    state._absorb(state_f, state_i)
    if status == _kmc.BUDGET_EXCEEDED:
        raise EventBudgetExceeded(record_spec.event_cap)
    if status == _kmc.DEADLOCK:
        raise DeadlockedState("total jump rate vanished with particles present")

    events = None
    if record_spec.record_events:
        events = {
            "t": ev_t[:n_ev].copy(),
            "site": ev_site[:n_ev].copy(),
            "z": ev_z[:n_ev].copy(),
            "tagged": ev_tagged[:n_ev].copy(),
        }
    return TrajectoryRecord(
        N=N,
        seed=state.seed,
        sigma2=kernel.sigma2,
        macro_times=record_spec.sample_times.copy(),
        x_path=rec_x / N,
        qv_path=kernel.sigma2 * rec_qv / n2,
        lifted_path=rec_x.copy(),
        snapshot_times=record_spec.snapshot_times.copy(),
        snapshots=snap_occ,
        snapshot_tagged=snap_tagged,
        snapshot_lifted=snap_lifted,
        initial_occ=initial_occ,
        initial_tagged=initial_tagged,
        event_count=state.event_count,
        events=events,
    )


def write_trajectory_csv(record: TrajectoryRecord, path) -> None:
    """CSV: header t,x,qv; one row per macro sample time, 17 significant digits."""
    with open(path, "w") as fh:
        fh.write("t,x,qv\n")
        for t, x, qv in zip(record.macro_times, record.x_path, record.qv_path):
            fh.write(f"{t:.17g},{x:.17g},{qv:.17g}\n")


def write_snapshots(record: TrajectoryRecord, path) -> None:
    """One line per snapshot: t then the N occupancies, space-separated."""
    with open(path, "w") as fh:
        for i, t in enumerate(record.snapshot_times):
            occs = " ".join(str(int(v)) for v in record.snapshots[i])
            fh.write(f"{t:.17g} {occs}\n")

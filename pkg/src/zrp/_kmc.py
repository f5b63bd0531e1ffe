"""Numba kernels for the event-driven dynamics.

Hot path design: a Fenwick tree over sites keyed by g(occupancy) gives
O(log N) site sampling and weight updates; waiting times are exponential in
the tree total; the tagged particle is a labeled resident moving with
probability 1/occupancy when its site fires.  The quadratic-variation
integrand g(xi(X))/xi(X) is piecewise constant between events, so records at
requested times are exact, not quadrature.

RNG is an explicit xoshiro256++ state per trajectory (seeded via splitmix64),
so runs are bit-reproducible regardless of threading or call pattern.
All kernels are nogil: ensembles parallelize with plain thread pools.
"""

import numpy as np
from numba import njit

U64 = np.uint64
_SM64_GAMMA = U64(0x9E3779B97F4A7C15)
_SM64_M1 = U64(0xBF58476D1CE4E5B9)
_SM64_M2 = U64(0x94D049BB133111EB)
_INV_2_53 = 1.0 / 9007199254740992.0


@njit(cache=True, nogil=True)
def seed_state(seed):
    """Four xoshiro256++ state words from one integer via splitmix64."""
    s = np.empty(4, dtype=np.uint64)
    x = U64(seed)
    for i in range(4):
        x = x + _SM64_GAMMA
        z = x
        z = (z ^ (z >> U64(30))) * _SM64_M1
        z = (z ^ (z >> U64(27))) * _SM64_M2
        s[i] = z ^ (z >> U64(31))
    if s[0] | s[1] | s[2] | s[3] == U64(0):
        s[0] = _SM64_GAMMA
    return s


@njit(inline="always")
def _rotl(x, k):
    return (x << k) | (x >> (U64(64) - k))


@njit(inline="always")
def _next_u64(s):
    s0 = s[0]
    s1 = s[1]
    s2 = s[2]
    s3 = s[3]
    result = _rotl(s0 + s3, U64(23)) + s0
    t = s1 << U64(17)
    s2 = s2 ^ s0
    s3 = s3 ^ s1
    s1 = s1 ^ s2
    s0 = s0 ^ s3
    s2 = s2 ^ t
    s3 = _rotl(s3, U64(45))
    s[0] = s0
    s[1] = s1
    s[2] = s2
    s[3] = s3
    return result


@njit(inline="always")
def _uniform(s):
    return float(_next_u64(s) >> U64(11)) * _INV_2_53


# ---------------------------------------------------------------------------
# Fenwick tree over sites, padded to a power of two; tree[0] unused and
# tree[size] holds the total.


@njit(cache=True, nogil=True)
def fenwick_build(weights):
    n = len(weights)
    size = 1
    while size < n:
        size *= 2
    tree = np.zeros(size + 1)
    for i in range(n):
        j = i + 1
        while j <= size:
            tree[j] += weights[i]
            j += j & (-j)
    return tree


@njit(inline="always")
def _fenwick_add(tree, i, delta):
    j = i + 1
    size = len(tree) - 1
    while j <= size:
        tree[j] += delta
        j += j & (-j)


@njit(inline="always")
def _fenwick_find(tree, r):
    """Site index whose cumulative-weight interval contains r."""
    size = len(tree) - 1
    pos = 0
    mask = size
    while mask > 0:
        nxt = pos + mask
        if nxt <= size and tree[nxt] <= r:
            pos = nxt
            r -= tree[nxt]
        mask >>= 1
    return pos


@njit(cache=True, nogil=True)
def fenwick_total(tree):
    return tree[len(tree) - 1]


# ---------------------------------------------------------------------------
# single event: draw and apply


@njit(inline="always")
def _draw_displacement(disp, disp_cdf, u):
    i = 0
    while disp_cdf[i] <= u:
        i += 1
    return disp[i]


@njit(inline="always")
def _apply_move(occ, tree, g_table, N, x, z):
    """Move one particle x -> x+z (torus) and refresh the tree weights."""
    y = (x + z) % N
    occ[x] -= 1
    occ[y] += 1
    _fenwick_add(tree, x, g_table[occ[x]] - g_table[occ[x] + 1])
    _fenwick_add(tree, y, g_table[occ[y]] - g_table[occ[y] - 1])
    return y


@njit(cache=True, nogil=True)
def step_core(occ, tree, g_table, disp, disp_cdf, tagged, rng):
    """One Gillespie event.  Returns (tau, x, z, tagged_moved, new_tagged)."""
    N = len(occ)
    total = tree[len(tree) - 1]
    tau = -np.log(1.0 - _uniform(rng)) / total
    x = _fenwick_find(tree, _uniform(rng) * total)
    z = _draw_displacement(disp, disp_cdf, _uniform(rng))
    tagged_moved = False
    if x == tagged:
        k = occ[x]
        if k == 1 or _uniform(rng) * k < 1.0:
            tagged_moved = True
    y = _apply_move(occ, tree, g_table, N, x, z)
    new_tagged = y if tagged_moved else tagged
    return tau, x, z, tagged_moved, new_tagged


# status codes for run_core
OK = 0
BUDGET_EXCEEDED = 1
EVENT_BUFFER_FULL = 2
DEADLOCK = 3


@njit(cache=True, nogil=True)
def run_core(
    occ,
    tree,
    g_table,
    disp,
    disp_cdf,
    rng,
    state_f,  # [micro_time, qv_accumulator]
    state_i,  # [tagged_site, lifted_position, event_count]
    t_end,
    rec_times,  # micro, sorted ascending
    rec_x,
    rec_qv,
    snap_times,  # micro, sorted ascending
    snap_occ,
    snap_tagged,
    snap_lifted,
    event_cap,
    record_events,
    ev_t,
    ev_site,
    ev_z,
    ev_tagged,
):
    """Advance the chain to t_end (micro units), emitting exact records.

    Record/snapshot values inside an inter-event interval use the pre-event
    state; the quadratic-variation integrand is integrated in closed form on
    each interval.  Returns (status, n_rec, n_snap, n_events_logged).
    """
    N = len(occ)
    t = state_f[0]
    qv = state_f[1]
    tagged = state_i[0]
    lifted = state_i[1]
    events = state_i[2]
    nr = len(rec_times)
    ns = len(snap_times)
    ir = 0
    while ir < nr and rec_times[ir] < t:
        ir += 1
    isnap = 0
    while isnap < ns and snap_times[isnap] < t:
        isnap += 1
    iev = 0
    status = OK

    while t < t_end:
        total = tree[len(tree) - 1]
        if total <= 0.0:
            status = DEADLOCK
            break
        c = g_table[occ[tagged]] / occ[tagged]
        tau = -np.log(1.0 - _uniform(rng)) / total
        t_new = t + tau
        horizon = t_new if t_new < t_end else t_end
        while ir < nr and rec_times[ir] <= horizon:
            rec_x[ir] = lifted
            rec_qv[ir] = qv + (rec_times[ir] - t) * c
            ir += 1
        while isnap < ns and snap_times[isnap] <= horizon:
            for i in range(N):
                snap_occ[isnap, i] = occ[i]
            snap_tagged[isnap] = tagged
            snap_lifted[isnap] = lifted
            isnap += 1
        if t_new >= t_end:
            qv += (t_end - t) * c
            t = t_end
            break
        if events >= event_cap:
            status = BUDGET_EXCEEDED
            break
        qv += tau * c
        t = t_new
        x = _fenwick_find(tree, _uniform(rng) * total)
        z = _draw_displacement(disp, disp_cdf, _uniform(rng))
        tagged_moved = False
        if x == tagged:
            k = occ[x]
            if k == 1 or _uniform(rng) * k < 1.0:
                tagged_moved = True
        y = _apply_move(occ, tree, g_table, N, x, z)
        if tagged_moved:
            tagged = y
            lifted += z
        if record_events:
            if iev >= len(ev_t):
                status = EVENT_BUFFER_FULL
                break
            ev_t[iev] = t
            ev_site[iev] = x
            ev_z[iev] = z
            ev_tagged[iev] = 1 if tagged_moved else 0
            iev += 1
        events += 1

    state_f[0] = t
    state_f[1] = qv
    state_i[0] = tagged
    state_i[1] = lifted
    state_i[2] = events
    return status, ir, isnap, iev


# ---------------------------------------------------------------------------
# initial-condition sampling inside the kernel path (inverse CDF per site)


@njit(cache=True, nogil=True)
def sample_occupancies(cdf_rows, row_of_site, rng):
    """Occupancies with site marginals given by per-site CDF rows."""
    N = len(row_of_site)
    occ = np.zeros(N, dtype=np.int64)
    for i in range(N):
        u = _uniform(rng)
        row = cdf_rows[row_of_site[i]]
        k = 0
        while row[k] <= u:
            k += 1
        occ[i] = k
    return occ


# ---------------------------------------------------------------------------
# field-martingale replay: pi_t(G) minus the generator compensators, exactly
# event by event, in the frame of the tagged particle.


@njit(cache=True, nogil=True)
def replay_field_martingale(
    occ0,
    tagged0,
    g_table,
    G_vals,  # G(x/N) on the torus grid
    dNG_vals,  # discrete Laplacian  N^2 sum_z p(z)[G(u+z/N)-G(u)]  on the grid
    ev_t,
    ev_site,
    ev_z,
    ev_tagged,
    t_end,
    rec_times,  # micro units, sorted
    out_M,
):
    """M at the record times for one trajectory with a full event log."""
    N = len(occ0)
    occ = occ0.copy()
    tagged = tagged0
    n2 = float(N) * float(N)

    # frame-dependent sums; rebuilt on tagged jumps
    P = 0.0  # sum_y G((y-X)/N) occ(y) = N pi(G)
    S1 = 0.0  # sum_y dNG((y-X)/N) g(occ(y))
    S2 = 0.0  # sum_y dNG((y-X)/N) occ(y)
    for y in range(N):
        i = (y - tagged) % N
        P += G_vals[i] * occ[y]
        S1 += dNG_vals[i] * g_table[occ[y]]
        S2 += dNG_vals[i] * occ[y]
    P0 = P
    dNG0 = dNG_vals[0]

    I = 0.0  # accumulated compensator integral (macro time)
    t = 0.0
    ir = 0
    nr = len(rec_times)
    nev = len(ev_t)
    for e in range(nev + 1):
        t_next = ev_t[e] if e < nev else t_end
        cg = g_table[occ[tagged]] / occ[tagged]
        rate = S1 / N + cg * S2 / N - (2.0 / N) * cg * dNG0
        while ir < nr and rec_times[ir] <= t_next:
            Ipart = I + ((rec_times[ir] - t) / n2) * rate
            out_M[ir] = (P - P0) / N - Ipart
            ir += 1
        I += ((t_next - t) / n2) * rate
        t = t_next
        if e == nev:
            break
        x = ev_site[e]
        z = ev_z[e]
        y = (x + z) % N
        occ[x] -= 1
        occ[y] += 1
        if ev_tagged[e] == 1:
            tagged = y
            P = 0.0
            S1 = 0.0
            S2 = 0.0
            for w in range(N):
                i = (w - tagged) % N
                P += G_vals[i] * occ[w]
                S1 += dNG_vals[i] * g_table[occ[w]]
                S2 += dNG_vals[i] * occ[w]
        else:
            ix = (x - tagged) % N
            iy = (y - tagged) % N
            P += G_vals[iy] - G_vals[ix]
            S1 += dNG_vals[ix] * (g_table[occ[x]] - g_table[occ[x] + 1])
            S1 += dNG_vals[iy] * (g_table[occ[y]] - g_table[occ[y] - 1])
            S2 += dNG_vals[iy] - dNG_vals[ix]
    return ir

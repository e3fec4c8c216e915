"""Exact continuous-time (Gillespie) simulation of the lattice models.

The engine is table-driven: a model's transition rules are compiled into
dense rate arrays, so the same compiled kernel runs every model.  Local
and spontaneous hazards are kept per cell in a binary sum tree (O(log N)
selection and update); hazards from global interactions are aggregated
analytically from state counts, so global-dispersal models cost the same
per event as local ones.  Event times are exponential in the current
total rate and exactly one cell changes per event.
"""

from __future__ import annotations

import multiprocessing
from dataclasses import dataclass, field

import numba
import numpy as np

from .lattice import LatticeGrid, init_random
from .models import Model, ResistanceModelParams, resistance_model
from .pairapprox import rate_tables

__all__ = [
    "Trajectory",
    "site_rates",
    "total_rate",
    "run",
    "first_event_time",
    "run_invasion_experiment",
    "InvasionFit",
]


# ---------------------------------------------------------------------------
# rate computation helpers (Python-side mirror of the kernel's tables)
# ---------------------------------------------------------------------------

def _neighbor_counts(grid: LatticeGrid, r: int, c: int) -> np.ndarray:
    h, w = grid.height, grid.width
    cnt = np.zeros(grid.model.n_states, dtype=np.int64)
    for rr, cc in (((r - 1) % h, c), ((r + 1) % h, c),
                   (r, (c - 1) % w), (r, (c + 1) % w)):
        cnt[grid.cells[rr, cc]] += 1
    return cnt


def site_rates(site: tuple[int, int], grid: LatticeGrid) -> list[tuple[str, float]]:
    """All admissible transitions at one site with their current hazards.

    Neighbor-driven rules contribute rate/4 per triggering neighbor;
    global rules contribute rate times the current global density.
    """
    r, c = site
    model = grid.model
    spont, local, glob = rate_tables(model)
    s = int(grid.cells[r, c])
    cnt = _neighbor_counts(grid, r, c)
    dens = np.bincount(grid.cells.ravel(), minlength=model.n_states) / grid.n_cells
    out = []
    for t in range(model.n_states):
        if t == s:
            continue
        rate = spont[s, t] + 0.25 * float(local[s, t] @ cnt) + float(glob[s, t] @ dens)
        if rate > 0:
            out.append((model.states[t], float(rate)))
    return out


def total_rate(grid: LatticeGrid) -> float:
    """Sum of all site hazards (the exponential rate of the next event)."""
    tot = 0.0
    for r in range(grid.height):
        for c in range(grid.width):
            tot += sum(v for _, v in site_rates((r, c), grid))
    return tot


# ---------------------------------------------------------------------------
# the compiled event loop
# ---------------------------------------------------------------------------

@numba.njit(cache=True, inline="always")
def _tree_set(tree, nleaf, i, value):
    pos = nleaf - 1 + i
    delta = value - tree[pos]
    while pos > 0:
        tree[pos] += delta
        pos = (pos - 1) >> 1
    tree[0] += delta


@numba.njit(cache=True, inline="always")
def _tree_pick(tree, nleaf, u):
    pos = 0
    while pos < nleaf - 1:
        left = 2 * pos + 1
        if u < tree[left]:
            pos = left
        else:
            u -= tree[left]
            pos = left + 1
    return pos - (nleaf - 1)


@numba.njit(cache=True)
def _refresh_cell(cell, states, W, H, S, spont_out, local_out, tree, nleaf):
    r = cell // W
    c = cell - r * W
    s = states[cell]
    rate = spont_out[s]
    n0 = states[((r - 1) % H) * W + c]
    n1 = states[((r + 1) % H) * W + c]
    n2 = states[r * W + (c - 1) % W]
    n3 = states[r * W + (c + 1) % W]
    rate += 0.25 * (local_out[s, n0] + local_out[s, n1]
                    + local_out[s, n2] + local_out[s, n3])
    _tree_set(tree, nleaf, cell, rate)


@numba.njit(cache=True)
def _record(k, states, W, H, S, counts, N, record_pairs, dens_out, pairs_out):
    for s in range(S):
        dens_out[k, s] = counts[s] / N
    if record_pairs:
        for i in range(N):
            r = i // W
            c = i - r * W
            a = states[i]
            pairs_out[k, a, states[((r - 1) % H) * W + c]] += 1.0
            pairs_out[k, a, states[((r + 1) % H) * W + c]] += 1.0
            pairs_out[k, a, states[r * W + (c - 1) % W]] += 1.0
            pairs_out[k, a, states[r * W + (c + 1) % W]] += 1.0
        for a in range(S):
            for b in range(S):
                pairs_out[k, a, b] /= 4.0 * N


@numba.njit(cache=True)
def _gillespie(states, W, H, spont, local, glob, t0, t_end, sample_times,
               seed, record_pairs, max_events, dens_out, pairs_out):
    np.random.seed(seed)
    N = W * H
    S = spont.shape[0]
    spont_out = np.zeros(S)
    local_out = np.zeros((S, S))
    glob_out = np.zeros((S, S))
    for s in range(S):
        for t in range(S):
            spont_out[s] += spont[s, t]
            for k in range(S):
                local_out[s, k] += local[s, t, k]
                glob_out[s, k] += glob[s, t, k]
    has_glob = glob_out.sum() > 0.0

    counts = np.zeros(S, dtype=np.int64)
    for i in range(N):
        counts[states[i]] += 1
    members = np.empty((S, N), dtype=np.int64)
    mpos = np.empty(N, dtype=np.int64)
    mlen = np.zeros(S, dtype=np.int64)
    for i in range(N):
        s = states[i]
        members[s, mlen[s]] = i
        mpos[i] = mlen[s]
        mlen[s] += 1

    nleaf = 1
    while nleaf < N:
        nleaf *= 2
    tree = np.zeros(2 * nleaf - 1)
    for i in range(N):
        _refresh_cell(i, states, W, H, S, spont_out, local_out, tree, nleaf)

    t = t0
    k_sample = 0
    K = sample_times.shape[0]
    n_events = 0
    target_rates = np.empty(S)
    hit_cap = False

    while True:
        r_glob = 0.0
        if has_glob:
            for s in range(S):
                if mlen[s] == 0:
                    continue
                acc = 0.0
                for n in range(S):
                    acc += glob_out[s, n] * mlen[n]
                r_glob += mlen[s] * acc / N
        total = tree[0] + r_glob
        if total <= 1e-300:
            break
        if n_events >= max_events:
            hit_cap = True
            break
        dt = -np.log(np.random.random()) / total
        t_next = t + dt
        while k_sample < K and sample_times[k_sample] < t_next:
            if sample_times[k_sample] > t_end:
                break
            _record(k_sample, states, W, H, S, counts, N, record_pairs,
                    dens_out, pairs_out)
            k_sample += 1
        if t_next > t_end:
            t = t_end
            break

        # choose the event: cell + target state
        u = np.random.random() * total
        i_cell = -1
        new_state = -1
        if u < tree[0]:
            i_cell = _tree_pick(tree, nleaf, u)
            s = states[i_cell]
            r = i_cell // W
            c = i_cell - r * W
            n0 = states[((r - 1) % H) * W + c]
            n1 = states[((r + 1) % H) * W + c]
            n2 = states[r * W + (c - 1) % W]
            n3 = states[r * W + (c + 1) % W]
            acc = 0.0
            for tgt in range(S):
                r_t = spont[s, tgt] + 0.25 * (local[s, tgt, n0] + local[s, tgt, n1]
                                              + local[s, tgt, n2] + local[s, tgt, n3])
                target_rates[tgt] = r_t
                acc += r_t
            v = np.random.random() * acc
            run_acc = 0.0
            for tgt in range(S):
                run_acc += target_rates[tgt]
                if v < run_acc:
                    new_state = tgt
                    break
            if new_state < 0:
                new_state = S - 1
        else:
            v = u - tree[0]
            done = False
            for s in range(S):
                if done or mlen[s] == 0:
                    continue
                for tgt in range(S):
                    acc = 0.0
                    for n in range(S):
                        acc += glob[s, tgt, n] * mlen[n]
                    ch = mlen[s] * acc / N
                    if v < ch:
                        i_cell = members[s, np.random.randint(0, mlen[s])]
                        new_state = tgt
                        done = True
                        break
                    v -= ch
            if not done:
                t = t_next  # float round-off at the channel boundary
                continue

        old = states[i_cell]
        if new_state != old:
            p_old = mpos[i_cell]
            last = members[old, mlen[old] - 1]
            members[old, p_old] = last
            mpos[last] = p_old
            mlen[old] -= 1
            members[new_state, mlen[new_state]] = i_cell
            mpos[i_cell] = mlen[new_state]
            mlen[new_state] += 1
            counts[old] -= 1
            counts[new_state] += 1
            states[i_cell] = new_state
            r = i_cell // W
            c = i_cell - r * W
            _refresh_cell(i_cell, states, W, H, S, spont_out, local_out, tree, nleaf)
            _refresh_cell(((r - 1) % H) * W + c, states, W, H, S, spont_out,
                          local_out, tree, nleaf)
            _refresh_cell(((r + 1) % H) * W + c, states, W, H, S, spont_out,
                          local_out, tree, nleaf)
            _refresh_cell(r * W + (c - 1) % W, states, W, H, S, spont_out,
                          local_out, tree, nleaf)
            _refresh_cell(r * W + (c + 1) % W, states, W, H, S, spont_out,
                          local_out, tree, nleaf)
        t = t_next
        n_events += 1

    if not hit_cap:
        # absorbing state or horizon reached: remaining samples are frozen
        while k_sample < K and sample_times[k_sample] <= t_end:
            _record(k_sample, states, W, H, S, counts, N, record_pairs,
                    dens_out, pairs_out)
            k_sample += 1
        t = max(t, min(t_end, t))
    return t, n_events, k_sample


@dataclass
class Trajectory:
    """Sampled densities (and optionally pairs) from one simulation run."""

    model: Model
    times: np.ndarray
    densities: np.ndarray            # (K, S)
    pairs: np.ndarray | None = None  # (K, S, S)
    final: LatticeGrid | None = None
    n_events: int = 0
    t_final: float = 0.0
    seed: int | None = None

    def __post_init__(self):
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("sample times must be strictly increasing")

    def density(self, state: str) -> np.ndarray:
        return self.densities[:, self.model.index(state)]

    def to_csv(self, path) -> None:
        header = ["t"] + [f"P_{s}" for s in self.model.states]
        cols = [self.times] + [self.densities[:, j] for j in range(self.model.n_states)]
        if self.pairs is not None:
            for i, a in enumerate(self.model.states):
                for j, b in enumerate(self.model.states):
                    if i <= j:
                        header.append(f"P_{a}{b}")
                        cols.append(self.pairs[:, i, j])
        data = np.column_stack(cols)
        np.savetxt(path, data, delimiter=",", header=",".join(header), comments="")


def _seed_from(rng) -> int:
    return int(np.random.default_rng(rng).integers(0, 2**31 - 1))


def run(grid: LatticeGrid, t_end: float, rng, *, sample_dt: float | None = None,
        sample_times=None, record_pairs: bool = False,
        max_events: int = 2**62, t0: float = 0.0) -> Trajectory:
    """Simulate in place until ``t_end`` (the grid is mutated).

    Statistically exact: waiting times are exponential in the current
    total rate and one cell switches per event.  Absorbing configurations
    simply stop producing events.
    """
    if t_end <= t0:
        raise ValueError("t_end must exceed t0")
    model = grid.model
    if sample_times is None:
        if sample_dt is None:
            sample_dt = (t_end - t0) / 100.0
        sample_times = np.arange(t0, t_end + 0.5 * sample_dt, sample_dt)
    sample_times = np.asarray(sample_times, float)
    spont, local, glob = rate_tables(model)
    K, S = len(sample_times), model.n_states
    dens_out = np.full((K, S), np.nan)
    pairs_out = np.zeros((K, S, S)) if record_pairs else np.zeros((1, S, S))
    seed = _seed_from(rng)
    flat = grid.cells.reshape(-1)
    t_fin, n_events, k_done = _gillespie(
        flat, grid.width, grid.height, spont, local, glob, float(t0),
        float(t_end), sample_times, seed, record_pairs, int(max_events),
        dens_out, pairs_out)
    return Trajectory(model, sample_times[:k_done], dens_out[:k_done],
                      pairs_out[:k_done] if record_pairs else None,
                      final=grid, n_events=int(n_events), t_final=float(t_fin),
                      seed=seed)


def first_event_time(grid: LatticeGrid, rng, t_max: float = 1e9) -> float:
    """Time of the first event (inf if the configuration is absorbing)."""
    g = grid.copy()
    traj = run(g, t_max, rng, sample_times=np.array([]), max_events=1)
    return traj.t_final if traj.n_events == 1 else float("inf")


# ---------------------------------------------------------------------------
# invasion experiment (novel-phenotype introduction protocol)
# ---------------------------------------------------------------------------

@dataclass
class InvasionFit:
    """Fitted exponential growth rate of an introduced phenotype."""

    rate: float
    stderr: float
    rates: np.ndarray = field(default_factory=lambda: np.array([]))
    flagged: bool = False
    note: str = ""


def _fit_exponential(times, totals, min_count=10):
    """Least-squares slope of log(count); leading low-count window dropped."""
    times = np.asarray(times, float)
    totals = np.asarray(totals, float)
    keep = totals >= min_count
    if keep.sum() >= 2:
        first = int(np.argmax(keep))
        keep[:first] = False
    t, y = times[keep], totals[keep]
    if len(t) < max(3, len(times) // 4):
        return np.nan, True
    slope = np.polyfit(t, np.log(y), 1)[0]
    return float(slope), False


_DEFAULT_RESIDENT_INIT = {"SA": 0.1, "IA": 0.1, "SU": 0.5, "IU": 0.1, "E": 0.2}


def _equilibrated_resident(params, width, height, t_eq, rng):
    model = resistance_model(params)
    grid = init_random(model, width, height, _DEFAULT_RESIDENT_INIT, rng)
    run(grid, t_eq, rng, sample_times=np.array([]))
    return grid.cells


def _invasion_replicate(args):
    (params, rho_prime, width, height, t_eq, t_track, sample_dt, frac,
     seed, resident_cells) = args
    rng = np.random.default_rng(seed)
    if resident_cells is None:
        resident_cells = _equilibrated_resident(params, width, height, t_eq, rng)
    inv_model = resistance_model(params, rho_invader=rho_prime)
    # resident states come first in the invader alphabet, so cells re-key as-is
    inv_grid = LatticeGrid(inv_model, resident_cells.astype(np.int8).copy())
    n_switch = max(1, int(round(frac * inv_grid.n_cells)))
    idx = rng.choice(inv_grid.n_cells, size=n_switch, replace=False)
    inv_grid.cells.reshape(-1)[idx] = inv_model.index("S")
    times = np.arange(0.0, t_track + 0.5 * sample_dt, sample_dt)
    traj = run(inv_grid, t_track, rng, sample_times=times)
    totals = (traj.density("S") + traj.density("I")) * inv_grid.n_cells
    return _fit_exponential(traj.times, totals)


def run_invasion_experiment(params: ResistanceModelParams, rho_prime: float, *,
                            width=300, height=300, replicates=10, t_eq=500.0,
                            t_track=500.0, sample_dt=10.0, switch_fraction=0.005,
                            rng=0, jobs: int | None = None,
                            share_resident: bool = True) -> InvasionFit:
    """Introduce a phenotype with resistance ``rho_prime`` and fit its growth.

    The resident community is run to quasi-equilibrium, 0.5% of all sites
    are switched to the susceptible invader state, and the total invader
    count is tracked for ``t_track`` time units; the growth rate is the
    least-squares slope of its logarithm, averaged over replicates.
    Replicates run in parallel with independent seed streams.
    """
    ss = np.random.SeedSequence(rng if isinstance(rng, (int, np.integer)) else None)
    seeds = ss.generate_state(replicates + 1)
    resident_cells = None
    if share_resident:
        resident_cells = _equilibrated_resident(
            params, width, height, t_eq, np.random.default_rng(int(seeds[-1])))
    tasks = [(params, rho_prime, width, height, t_eq, t_track, sample_dt,
              switch_fraction, int(seeds[i]), resident_cells)
             for i in range(replicates)]
    if jobs is None:
        jobs = min(replicates, multiprocessing.cpu_count())
    if jobs > 1 and replicates > 1:
        ctx = multiprocessing.get_context("fork")
        with ctx.Pool(jobs) as pool:
            results = pool.map(_invasion_replicate, tasks)
    else:
        results = [_invasion_replicate(t) for t in tasks]
    rates = np.array([r for r, _ in results])
    flags = [f for _, f in results]
    good = rates[~np.isnan(rates)]
    if len(good) == 0:
        return InvasionFit(np.nan, np.nan, rates, True,
                           "invader lost before the fit window in all replicates")
    stderr = good.std(ddof=1) / np.sqrt(len(good)) if len(good) > 1 else np.nan
    flagged = any(flags) or len(good) < len(rates)
    note = "invader lost before the fit window in some replicates" if flagged else ""
    return InvasionFit(float(good.mean()), float(stderr), rates, flagged, note)

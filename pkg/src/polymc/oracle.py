"""Brute-force ground truth for tiny instances.

Joint moments of partition functions are computed by enumerating walk
path tuples and integrating the disorder analytically site by site: a
site visited with multiplicity m contributes exp(lambda(m*beta) -
m*lambda(beta)).  Exact for any law with a closed-form cgf, and never
approximates: budget overruns are hard errors.
"""

from __future__ import annotations

import itertools
import math
from functools import lru_cache

import numpy as np

from .disorder import DisorderLaw
from .testfunc import TestFunction

MAX_TUPLE_OPS = 2 * 10 ** 8


class BudgetError(ValueError):
    pass


@lru_cache(maxsize=8)
def path_positions(d: int, n_steps: int) -> np.ndarray:
    """All (2d)^N nearest-neighbor paths from the origin: (P, N, d) int64."""
    if n_steps > 6:
        raise BudgetError("path enumeration capped at N = 6")
    steps = np.zeros((2 * d, d), dtype=np.int64)
    for a in range(d):
        steps[2 * a, a] = 1
        steps[2 * a + 1, a] = -1
    pos = np.zeros((1, 0, d), dtype=np.int64)
    for _ in range(n_steps):
        base = pos[:, None, -1, :] if pos.shape[1] else np.zeros(
            (len(pos), 1, d), dtype=np.int64)
        nxt = base + steps[None, :, :]
        pos = np.concatenate(
            [np.repeat(pos, 2 * d, axis=0),
             nxt.reshape(-1, 1, d)], axis=1)
    return pos


def _site_keys(pos: np.ndarray, base: int) -> np.ndarray:
    """Injective int64 encoding of lattice sites, per (path, time)."""
    keys = np.zeros(pos.shape[:2], dtype=np.int64)
    for a in range(pos.shape[2]):
        keys = keys * base + (pos[:, :, a] + base // 2)
    return keys


def _energy_table(law: DisorderLaw, beta: float, j: int) -> np.ndarray:
    """Energy increment per time slice, indexed by the number of coinciding
    pairs among the j walkers (0..j(j-1)/2); impossible counts are nan."""
    lam = law.cgf(beta)
    e = lambda m: law.cgf(m * beta) - m * lam  # one site of multiplicity m
    if j == 2:
        return np.array([0.0, e(2)])
    if j == 3:
        return np.array([0.0, e(2), math.nan, e(3)])
    if j == 4:
        return np.array([0.0, e(2), 2 * e(2), e(3), e(3) + e(2),
                         math.nan, e(4)])
    raise ValueError("j must be 2, 3 or 4")


def exact_joint_moment(starts, n_steps: int, law: DisorderLaw,
                       beta: float) -> float:
    """E[prod_i Z_{N,beta}(x_i)] by path-tuple enumeration, exact."""
    starts = [tuple(int(c) for c in s) for s in starts]
    if not starts:
        raise ValueError("need at least one start site")
    d = len(starts[0])
    j = len(starts)
    if j == 1:
        return 1.0  # every site multiplicity is 1: integrand is exactly 1
    if j > 4:
        raise BudgetError("at most 4 start sites")
    p = (2 * d) ** n_steps
    ops = j * p ** j * max(n_steps, 1)
    cap = 10 * MAX_TUPLE_OPS if j == 2 else MAX_TUPLE_OPS
    if ops > cap:
        raise BudgetError(f"tuple enumeration needs ~{ops:.2e} site ops "
                          f"(cap {cap:.0e})")
    span = 2 * (n_steps + max(abs(c) for s in starts for c in s)) + 3
    rel = path_positions(d, n_steps)
    keys = [_site_keys(rel + np.asarray(s, dtype=np.int64), span)
            for s in starts]
    table = _energy_table(law, beta, j)
    if j == 2:
        # pair energies are additive in the coincidence count, so only the
        # histogram of total coincidences is needed (int8 per path pair)
        ka, kb = keys
        count = np.zeros((p, p), dtype=np.int8)
        for n in range(n_steps):
            count += ka[:, n][:, None] == kb[:, n][None, :]
        hist = np.bincount(count.ravel(), minlength=n_steps + 1)
        e2 = table[1]
        return float(np.sum(hist * np.exp(e2 * np.arange(n_steps + 1)))
                     / (p * p))
    energy = np.zeros((p,) * j)
    pairs = list(itertools.combinations(range(j), 2))
    for n in range(n_steps):
        count = np.zeros((p,) * j, dtype=np.int8)
        for a, b in pairs:
            sh_a = (1,) * a + (p,) + (1,) * (j - a - 1)
            sh_b = (1,) * b + (p,) + (1,) * (j - b - 1)
            count += keys[a][:, n].reshape(sh_a) == keys[b][:, n].reshape(sh_b)
        energy += table[count]
    return float(np.mean(np.exp(energy)))


@lru_cache(maxsize=512)
def _pair_moment(d: int, v: tuple, n_steps: int, law: DisorderLaw,
                 beta: float) -> float:
    return exact_joint_moment([(0,) * d, v], n_steps, law, beta)


def exact_avg_variance(phi: TestFunction, n_steps: int, d: int,
                       law: DisorderLaw, beta: float) -> float:
    """Var[Z_{N,beta}(phi)] = sum_{x,y} phi_N(x) phi_N(y) (E[Z(x)Z(y)] - 1),
    with pair moments from path enumeration (translation-invariant in x-y)."""
    if beta == 0:
        return 0.0
    grid, r = phi.lattice_values(n_steps)
    sites, weights = _support_sites(grid, r, d)
    if len(sites) > 8:
        raise BudgetError(f"support has {len(sites)} sites (cap 8)")
    total = 0.0
    for (x, wx) in zip(sites, weights):
        for (y, wy) in zip(sites, weights):
            v = tuple(int(b - a) for a, b in zip(x, y))
            total += wx * wy * (_pair_moment(d, v, n_steps, law, beta) - 1.0)
    return total


def exact_fourth_moment(phi: TestFunction, n_steps: int, d: int,
                        law: DisorderLaw, beta: float) -> float:
    """E[(Z_{N,beta}(phi) - E[Z_{N,beta}(phi)])^4] by 4-tuple enumeration.

    Centered via inclusion-exclusion: E[prod_i (Z(x_i)-1)] =
    sum_{S} (-1)^{4-|S|} E[prod_{i in S} Z(x_i)] since E[Z] = 1."""
    if beta == 0:
        return 0.0
    grid, r = phi.lattice_values(n_steps)
    sites, weights = _support_sites(grid, r, d)
    if len(sites) > 4:
        raise BudgetError(f"support has {len(sites)} sites (cap 4)")

    @lru_cache(maxsize=None)
    def joint(sub: tuple) -> float:
        if len(sub) <= 1:
            return 1.0
        return exact_joint_moment(list(sub), n_steps, law, beta)

    @lru_cache(maxsize=None)
    def centered(quad: tuple) -> float:
        tot = 0.0
        for size in range(5):
            for sub in itertools.combinations(range(4), size):
                tot += (-1) ** (4 - size) * joint(
                    tuple(sorted(quad[i] for i in sub)))
        return tot

    total = 0.0
    for combo in itertools.product(range(len(sites)), repeat=4):
        w = 1.0
        for i in combo:
            w *= weights[i]
        total += w * centered(tuple(sorted(sites[i] for i in combo)))
    return total


def _support_sites(grid: np.ndarray, r: int, d: int):
    idx = np.argwhere(grid != 0.0)
    sites = [tuple(int(c) - r for c in row) for row in idx]
    weights = [float(grid[tuple(row)]) for row in idx]
    return sites, weights


def brute_partition(x, n_steps: int, d: int, law: DisorderLaw, beta: float,
                    field, active=None) -> float:
    """Z(x) for one disorder realization by explicit path summation."""
    lam = law.cgf(beta)
    rel = path_positions(d, n_steps) + np.asarray(x, dtype=np.int64)
    total = 0.0
    for path in rel:
        w = 1.0
        for n in range(n_steps):
            z = tuple(int(c) for c in path[n])
            if active is None or active(n + 1, z):
                om = float(np.asarray(field.omega_box(n + 1, z, z)).reshape(()))
                w *= math.exp(beta * om - lam)
        total += w
    return total / (2 * d) ** n_steps

"""Pure-Python trajectory-sampling kernel.

Reference implementation of the sampling hot loop; the compiled twin in
_ckernels.pyx follows this file operation for operation, and the two must
produce bit-identical output for identical inputs. Keep any change here in
lockstep with the .pyx file.

Random stream contract
----------------------
Counter-based and splittable: trajectory i under seed s draws from the
substream keyed by mix64(s + (i+1) * STREAM_GAMMA), and draw d of a
substream is mix64(key + (d+1) * DRAW_GAMMA), mapped to [0, 1) with 53-bit
resolution. Results therefore do not depend on execution order, and any
trajectory can be regenerated in isolation. Every trajectory consumes one
draw for the start state and two per epoch (action, successor), even when
a choice is deterministic, so all policy representations consume draws in
lockstep.

Categorical draws invert the cumulative masses in declared successor order:
the first index whose cumulative mass strictly exceeds the uniform wins,
with the last index as the float-roundoff backstop.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
STREAM_GAMMA = 0xC2B2AE3D27D4EB4F
DRAW_GAMMA = 0x9E3779B97F4A7C15
_INV_2_53 = 1.0 / 9007199254740992.0  # 2**-53

IS_COMPILED = False


def mix64(z: int) -> int:
    """Finalizing 64-bit hash (splitmix-style avalanche)."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def stream_key(seed: int, index: int) -> int:
    """Substream key for one trajectory."""
    return mix64((seed + (index + 1) * STREAM_GAMMA) & MASK64)


def stream_uniform(key: int, draw: int) -> float:
    """Draw number ``draw`` of a substream, uniform in [0, 1)."""
    return (mix64((key + (draw + 1) * DRAW_GAMMA) & MASK64) >> 11) * _INV_2_53


def simulate_batch(
    seed: int,
    n_traj: int,
    epochs: int,
    mu_cum,
    mu_idx,
    pol_ptr,
    pol_cum,
    pol_act,
    act_q,
    act_ptr,
    suc_cum,
    suc_idx,
    crash_by_epoch,
    terminal_local,
    last_base: int,
):
    """Sample ``n_traj`` trajectories; returns (payoffs, kill epochs).

    Array layout (built by kmdp.sim): states are indexed globally in stage
    order with non-killed states only; ``pol_ptr[g]:pol_ptr[g+1]`` slices
    the cumulative policy masses and action ids for decision state g;
    ``act_ptr[a]:act_ptr[a+1]`` slices each action's cumulative successor
    masses, with target index -1 for the kill atom. ``kill epochs`` hold
    1-based epoch numbers, 0 for surviving runs.
    """
    mu_cum = list(mu_cum)
    mu_idx = list(mu_idx)
    pol_ptr = list(pol_ptr)
    pol_cum = list(pol_cum)
    pol_act = list(pol_act)
    act_q = list(act_q)
    act_ptr = list(act_ptr)
    suc_cum = list(suc_cum)
    suc_idx = list(suc_idx)
    crash_by_epoch = list(crash_by_epoch)
    terminal_local = list(terminal_local)

    out = np.empty(n_traj, dtype=np.float64)
    kills = np.zeros(n_traj, dtype=np.int64)
    n_mu = len(mu_cum)

    for i in range(n_traj):
        key = stream_key(seed, i)
        draw = 0

        u = stream_uniform(key, draw)
        draw += 1
        j = n_mu - 1
        for k in range(n_mu):
            if u < mu_cum[k]:
                j = k
                break
        x = mu_idx[j]

        acc = 0.0
        killed_at = 0
        for epoch in range(1, epochs + 1):
            u = stream_uniform(key, draw)
            draw += 1
            lo, hi = pol_ptr[x], pol_ptr[x + 1]
            j = hi - 1
            for k in range(lo, hi):
                if u < pol_cum[k]:
                    j = k
                    break
            action = pol_act[j]
            acc += act_q[action]

            u = stream_uniform(key, draw)
            draw += 1
            lo, hi = act_ptr[action], act_ptr[action + 1]
            j = hi - 1
            for k in range(lo, hi):
                if u < suc_cum[k]:
                    j = k
                    break
            y = suc_idx[j]
            if y < 0:
                acc += crash_by_epoch[epoch]
                killed_at = epoch
                break
            x = y
        else:
            acc += terminal_local[x - last_base]

        out[i] = acc
        kills[i] = killed_at
    return out, kills

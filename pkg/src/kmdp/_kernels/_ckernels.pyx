# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled trajectory-sampling kernel.

Operation-for-operation twin of kmdp._kernels._pykernels; see that module
for the random-stream and array-layout contracts. The two backends must
produce bit-identical output for identical inputs, so any change here must
be mirrored there.
"""

import numpy as np

ctypedef unsigned long long u64

cdef u64 STREAM_GAMMA_C = 0xC2B2AE3D27D4EB4Fu
cdef u64 DRAW_GAMMA_C = 0x9E3779B97F4A7C15u
cdef double INV_2_53 = 1.0 / 9007199254740992.0

MASK64 = (1 << 64) - 1
STREAM_GAMMA = 0xC2B2AE3D27D4EB4F
DRAW_GAMMA = 0x9E3779B97F4A7C15

IS_COMPILED = True


cdef inline u64 _mix(u64 z) nogil:
    z = (z ^ (z >> 30)) * <u64>0xBF58476D1CE4E5B9u
    z = (z ^ (z >> 27)) * <u64>0x94D049BB133111EBu
    return z ^ (z >> 31)


cdef inline double _uniform(u64 key, u64 draw) nogil:
    return <double>(_mix(key + (draw + 1) * DRAW_GAMMA_C) >> 11) * INV_2_53


def mix64(z):
    """Finalizing 64-bit hash (splitmix-style avalanche)."""
    return _mix(<u64>(z & MASK64))


def stream_key(seed, index):
    """Substream key for one trajectory."""
    return _mix(<u64>((seed + (index + 1) * STREAM_GAMMA) & MASK64))


def stream_uniform(key, draw):
    """Draw number ``draw`` of a substream, uniform in [0, 1)."""
    return _uniform(<u64>(key & MASK64), <u64>draw)


def simulate_batch(
    seed,
    Py_ssize_t n_traj,
    int epochs,
    double[::1] mu_cum,
    long long[::1] mu_idx,
    long long[::1] pol_ptr,
    double[::1] pol_cum,
    long long[::1] pol_act,
    double[::1] act_q,
    long long[::1] act_ptr,
    double[::1] suc_cum,
    long long[::1] suc_idx,
    double[::1] crash_by_epoch,
    double[::1] terminal_local,
    long long last_base,
):
    """Sample ``n_traj`` trajectories; returns (payoffs, kill epochs)."""
    out_arr = np.empty(n_traj, dtype=np.float64)
    kill_arr = np.zeros(n_traj, dtype=np.int64)
    cdef double[::1] out = out_arr
    cdef long long[::1] kills = kill_arr

    cdef u64 seed_u = <u64>(seed & MASK64)
    cdef u64 key
    cdef u64 draw
    cdef Py_ssize_t i, k, j, lo, hi
    cdef Py_ssize_t n_mu = mu_cum.shape[0]
    cdef long long x, y, action
    cdef int epoch, killed_at
    cdef double u, acc

    with nogil:
        for i in range(n_traj):
            key = _mix(seed_u + (<u64>i + 1) * STREAM_GAMMA_C)
            draw = 0

            u = _uniform(key, draw)
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
                u = _uniform(key, draw)
                draw += 1
                lo = pol_ptr[x]
                hi = pol_ptr[x + 1]
                j = hi - 1
                for k in range(lo, hi):
                    if u < pol_cum[k]:
                        j = k
                        break
                action = pol_act[j]
                acc += act_q[action]

                u = _uniform(key, draw)
                draw += 1
                lo = act_ptr[action]
                hi = act_ptr[action + 1]
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
            if killed_at == 0:
                acc += terminal_local[x - last_base]

            out[i] = acc
            kills[i] = killed_at
    return out_arr, kill_arr

"""Counter-based Gaussian noise streams.

Every normal variate consumed by an integrator is addressed by the tuple
(master_seed, trajectory, step, mode): the generator is Philox-4x32-10
(a counter-based, splittable block cipher style PRNG) keyed by the 64-bit
master seed, with the 128-bit counter laid out as

    (pair_index, step, trajectory_low32, trajectory_high32),

where ``pair_index = mode // 2``.  One Philox block yields 128 random bits,
which are turned into two float64 uniforms (52 explicit mantissa bits each,
strictly inside (0, 1)) and then into a Box-Muller pair.  Consumption is
therefore fixed: mode k of step n of trajectory m never depends on how many
variates were drawn before it, and trajectories can be evaluated in any
order, on any number of workers, with bit-identical results.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK32 = np.uint64(0xFFFFFFFF)
_SH32 = np.uint64(32)
_SH12 = np.uint64(12)

TWO_PI = 6.283185307179586


def philox4x32(c0, c1, c2, c3, k0, k1):
    """Philox-4x32 with 10 rounds (Random123 round function and key schedule).

    Inputs are uint64 scalars or arrays holding 32-bit values; returns the
    four 32-bit output words as uint64 arrays.  Pure integer arithmetic, so
    the result is exactly reproducible across implementations.
    """
    c0 = np.asarray(c0, dtype=np.uint64)
    c1 = np.asarray(c1, dtype=np.uint64)
    c2 = np.asarray(c2, dtype=np.uint64)
    c3 = np.asarray(c3, dtype=np.uint64)
    k0 = np.uint64(k0)
    k1 = np.uint64(k1)
    for _ in range(10):
        p0 = _M0 * c0
        p1 = _M1 * c2
        hi0 = p0 >> _SH32
        lo0 = p0 & _MASK32
        hi1 = p1 >> _SH32
        lo1 = p1 & _MASK32
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
        k0 = (k0 + _W0) & _MASK32
        k1 = (k1 + _W1) & _MASK32
    return c0, c1, c2, c3


def _uniform01(hi_word, lo_word):
    """Map two 32-bit words to a float64 uniform in (0, 1).

    Takes the top 52 bits of the concatenated 64-bit value and offsets by
    2^-53, so the result is exactly (2j+1) * 2^-53 for an integer j: never
    0 or 1, and exactly representable (no rounding anywhere).
    """
    x = (hi_word << _SH32) | lo_word
    return (x >> _SH12).astype(np.float64) * 2.0**-52 + 2.0**-53


def _seed_key(master_seed: int):
    s = int(master_seed) & 0xFFFFFFFFFFFFFFFF
    return np.uint64(s & 0xFFFFFFFF), np.uint64(s >> 32)


def _split_traj(trajectory):
    t = np.asarray(trajectory, dtype=np.uint64)
    return t & _MASK32, t >> _SH32


def normals(master_seed: int, trajectory: int, step: int, count: int) -> np.ndarray:
    """The ``count`` standard normals addressed by (seed, trajectory, step).

    Stateless: repeated calls with the same arguments are bit-identical.
    """
    k0, k1 = _seed_key(master_seed)
    m_lo, m_hi = _split_traj(trajectory)
    n_blocks = (count + 1) // 2
    b = np.arange(n_blocks, dtype=np.uint64)
    o0, o1, o2, o3 = philox4x32(b, np.uint64(int(step)), m_lo, m_hi, k0, k1)
    u1 = _uniform01(o0, o1)
    u2 = _uniform01(o2, o3)
    r = np.sqrt(-2.0 * np.log(u1))
    t = TWO_PI * u2
    z = np.empty(2 * n_blocks)
    z[0::2] = r * np.cos(t)
    z[1::2] = r * np.sin(t)
    return z[:count]


def normals_batch(master_seed: int, trajectories: np.ndarray, step: int, count: int) -> np.ndarray:
    """Vectorised :func:`normals` for a batch of trajectory indices.

    Returns an array of shape ``(len(trajectories), count)``.
    """
    k0, k1 = _seed_key(master_seed)
    m_lo, m_hi = _split_traj(trajectories)
    n_blocks = (count + 1) // 2
    b = np.arange(n_blocks, dtype=np.uint64)
    o0, o1, o2, o3 = philox4x32(
        np.broadcast_to(b, (len(m_lo), n_blocks)),
        np.uint64(int(step)),
        m_lo[:, None],
        m_hi[:, None],
        k0,
        k1,
    )
    u1 = _uniform01(o0, o1)
    u2 = _uniform01(o2, o3)
    r = np.sqrt(-2.0 * np.log(u1))
    t = TWO_PI * u2
    z = np.empty((len(m_lo), 2 * n_blocks))
    z[:, 0::2] = r * np.cos(t)
    z[:, 1::2] = r * np.sin(t)
    return z[:, :count]


@dataclass
class NoiseStream:
    """Per-trajectory view on the counter-based stream.

    The stream owns no entropy: it only tracks the step counter.  Each call
    to :meth:`next_normals` consumes exactly one step, whatever ``count`` is.
    """

    master_seed: int
    trajectory_index: int
    step_counter: int = field(default=0)

    def next_normals(self, count: int) -> np.ndarray:
        z = normals(self.master_seed, self.trajectory_index, self.step_counter, count)
        self.step_counter += 1
        return z

    def clone(self) -> "NoiseStream":
        return NoiseStream(self.master_seed, self.trajectory_index, self.step_counter)

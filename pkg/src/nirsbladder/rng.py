"""Counter-based random streams (Philox4x64-10).

Every photon owns an independent stream keyed by ``(seed, photon_index)``.
Block ``b`` of a stream is the Philox permutation of counter ``(b + 1, 0, 0, 0)``,
which makes the stream identical to ``numpy.random.Philox(key=[seed, index])``.
Because a photon's draws depend only on its own key, partitioning photons
across batches or workers cannot change any result.

The round functions below are written with plain integer operators so the
same source runs on numba scalars and on numpy ``uint64`` arrays.
"""
import numpy as np

from ._backend import HAVE_NUMBA, njit

_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_MASK32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_S11 = np.uint64(11)
_ONE = np.uint64(1)
_TWO_M53 = 1.0 / 9007199254740992.0
_M0_LO = _M0 & _MASK32
_M0_HI = _M0 >> _S32
_M1_LO = _M1 & _MASK32
_M1_HI = _M1 >> _S32

# rng state layout: key0, key1, block counter, buffer position, buffer[4]
STATE_SIZE = 8


def _philox4x64(c0, c1, c2, c3, k0, k1):
    for _ in range(10):
        # 64x64 -> 128 bit products, high halves spelled out in 32-bit limbs
        a_lo = c0 & _MASK32
        a_hi = c0 >> _S32
        p1 = _M0_LO * a_hi
        p2 = _M0_HI * a_lo
        mid = ((_M0_LO * a_lo) >> _S32) + (p1 & _MASK32) + (p2 & _MASK32)
        hi0 = _M0_HI * a_hi + (p1 >> _S32) + (p2 >> _S32) + (mid >> _S32)
        lo0 = _M0 * c0
        a_lo = c2 & _MASK32
        a_hi = c2 >> _S32
        p1 = _M1_LO * a_hi
        p2 = _M1_HI * a_lo
        mid = ((_M1_LO * a_lo) >> _S32) + (p1 & _MASK32) + (p2 & _MASK32)
        hi1 = _M1_HI * a_hi + (p1 >> _S32) + (p2 >> _S32) + (mid >> _S32)
        lo1 = _M1 * c2
        c0 = hi1 ^ c1 ^ k0
        c1 = lo1
        c2 = hi0 ^ c3 ^ k1
        c3 = lo0
        k0 = k0 + _W0
        k1 = k1 + _W1
    return c0, c1, c2, c3


if HAVE_NUMBA:
    from llvmlite import ir
    from numba.core import types
    from numba.extending import intrinsic

    @intrinsic
    def _mulhilo(typingctx, a, b):
        """Native 64x64 -> 128 bit product as ``(hi, lo)``."""
        sig = types.UniTuple(types.uint64, 2)(types.uint64, types.uint64)

        def codegen(context, builder, signature, args):
            i64, i128 = ir.IntType(64), ir.IntType(128)
            p = builder.mul(builder.zext(args[0], i128), builder.zext(args[1], i128))
            hi = builder.trunc(builder.lshr(p, ir.Constant(i128, 64)), i64)
            lo = builder.trunc(p, i64)
            return context.make_tuple(builder, signature.return_type, [hi, lo])

        return sig, codegen

    @njit(inline="always")
    def philox4x64(c0, c1, c2, c3, k0, k1):
        for _ in range(10):
            hi0, lo0 = _mulhilo(_M0, c0)
            hi1, lo1 = _mulhilo(_M1, c2)
            c0 = hi1 ^ c1 ^ k0
            c1 = lo1
            c2 = hi0 ^ c3 ^ k1
            c3 = lo0
            k0 = k0 + _W0
            k1 = k1 + _W1
        return c0, c1, c2, c3
else:  # pragma: no cover
    philox4x64 = _philox4x64


@njit
def stream_init(state, seed, index):
    state[0] = np.uint64(seed)
    state[1] = np.uint64(index)
    state[2] = np.uint64(0)
    state[3] = np.uint64(4)


@njit
def next_double(state):
    """Uniform double in (0, 1]; never returns 0 so ``-log(u)`` stays finite."""
    pos = state[3]
    if pos >= 4:
        state[2] = state[2] + _ONE
        r0, r1, r2, r3 = philox4x64(state[2], np.uint64(0), np.uint64(0),
                                    np.uint64(0), state[0], state[1])
        state[4] = r0
        state[5] = r1
        state[6] = r2
        state[7] = r3
        pos = np.uint64(0)
    x = state[4 + pos]
    state[3] = pos + _ONE
    return (np.float64(x >> _S11) + 1.0) * _TWO_M53


class PhotonRng:
    """Python-side handle on one photon stream, for the single-step API."""

    def __init__(self, seed, index):
        self.state = np.zeros(STATE_SIZE, dtype=np.uint64)
        stream_init(self.state, np.uint64(seed), np.uint64(index))

    def uniform(self):
        return float(next_double(self.state))


# --- vectorised variant -------------------------------------------------


class StreamArray:
    """A batch of photon streams advanced with numpy array arithmetic.

    Each element mirrors :func:`next_double` draw for draw, so the numpy
    backend consumes exactly the same random numbers as the numba backend.
    """

    def __init__(self, seed, indices):
        n = len(indices)
        self.k0 = np.full(n, seed, dtype=np.uint64)
        self.k1 = np.asarray(indices, dtype=np.uint64).copy()
        self.ctr = np.zeros(n, dtype=np.uint64)
        self.pos = np.full(n, 4, dtype=np.int64)
        self.buf = np.zeros((n, 4), dtype=np.uint64)

    def draw(self, sel):
        """One uniform in (0, 1] for each photon index in ``sel``."""
        sel = np.asarray(sel, dtype=np.int64)
        if sel.size == 0:
            return np.empty(0)
        refill = sel[self.pos[sel] >= 4]
        if refill.size:
            self.ctr[refill] += _ONE
            z = np.zeros(refill.size, dtype=np.uint64)
            with np.errstate(over="ignore"):
                r = _philox4x64(self.ctr[refill], z, z, z,
                                self.k0[refill], self.k1[refill])
            self.buf[refill] = np.stack(r, axis=1)
            self.pos[refill] = 0
        x = self.buf[sel, self.pos[sel]]
        self.pos[sel] += 1
        return ((x >> _S11).astype(np.float64) + 1.0) * _TWO_M53

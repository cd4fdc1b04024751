"""Scalar photon-transport kernels compiled with numba.

One photon packet is tracked at a time through a voxel grid of media
labels.  Free paths are sampled in optical depth against mu_s, absorption
is applied continuously as ``exp(-mu_a * l)`` along every segment, and
scattering directions follow Henyey-Greenstein.  A per-voxel *safe
distance* (Chebyshev distance to the nearest change of medium) lets a
packet cross homogeneous regions in one move instead of voxel by voxel.

Lengths are mm and coefficients mm^-1 throughout this module.
"""
import math

import numpy as np

from ._backend import njit as _njit
from .rng import next_double, stream_init, STATE_SIZE

# fast-math without the no-NaN/no-inf flags; even so LLVM folds isfinite()
# under these flags, so fault checks go through _finite, compiled strictly
_FASTMATH = {"nsz", "arcp", "contract", "afn", "reassoc"}


def njit(*args, **kwargs):
    kwargs.setdefault("error_model", "numpy")
    kwargs.setdefault("fastmath", _FASTMATH)
    kwargs.setdefault("cache", True)
    if len(args) == 1 and callable(args[0]):
        return _njit(**kwargs)(args[0])
    return _njit(*args, **kwargs)


@njit(fastmath=False)
def _finite(x):
    return math.isfinite(x)


# photon state vector layout
X, Y, Z, UX, UY, UZ, W, MAXZ, TAU, PATH, ABS = range(11)
STATE_LEN = 11
# integer state: voxel index and medium label
IX, IY, IZ, MED = range(4)

ALIVE, ABSORBED, ESCAPED, EXITED_TOP, FAULT, STUCK = range(6)

# detector tally columns
T_W, T_W2, T_HITS, T_DEPTH, T_PATH = range(5)
N_TALLY = 5
# global tally slots
G_ABSORBED, G_ESCAPED, G_DETECTED, G_STUCK = range(4)

TWO_PI = 2.0 * math.pi
TINY_WEIGHT = 1e-300


@njit(inline="always")
def fresnel(n1, n2, cos_i):
    """Unpolarised reflectance and transmitted cosine at a planar interface."""
    if n1 == n2:
        return 0.0, cos_i
    sin_i = math.sqrt(max(0.0, 1.0 - cos_i * cos_i))
    sin_t = n1 / n2 * sin_i
    if sin_t >= 1.0:
        return 1.0, 0.0
    cos_t = math.sqrt(1.0 - sin_t * sin_t)
    rs = (n1 * cos_i - n2 * cos_t) / (n1 * cos_i + n2 * cos_t)
    rp = (n1 * cos_t - n2 * cos_i) / (n1 * cos_t + n2 * cos_i)
    return 0.5 * (rs * rs + rp * rp), cos_t


@njit(inline="always")
def hg_cos(g, xi):
    """Inverse-CDF sample of the Henyey-Greenstein polar cosine."""
    if abs(g) < 1e-6:
        return 2.0 * xi - 1.0
    tmp = (1.0 - g * g) / (1.0 - g + 2.0 * g * xi)
    ct = (1.0 + g * g - tmp * tmp) / (2.0 * g)
    if ct < -1.0:
        return -1.0
    if ct > 1.0:
        return 1.0
    return ct


@njit(inline="always")
def rotate(st, ct, phi):
    """Turn the direction in ``st`` by polar cosine ``ct`` and azimuth ``phi``."""
    ux, uy, uz = st[UX], st[UY], st[UZ]
    s = math.sqrt(max(0.0, 1.0 - ct * ct))
    cp = math.cos(phi)
    sp = math.sqrt(max(0.0, 1.0 - cp * cp))
    if phi > math.pi:
        sp = -sp
    if abs(uz) > 0.99999:
        nx = s * cp
        ny = s * sp
        nz = ct if uz > 0 else -ct
    else:
        tmp = math.sqrt(1.0 - uz * uz)
        nx = s * (ux * uz * cp - uy * sp) / tmp + ux * ct
        ny = s * (uy * uz * cp + ux * sp) / tmp + uy * ct
        nz = -s * cp * tmp + uz * ct
    norm = math.sqrt(nx * nx + ny * ny + nz * nz)
    st[UX] = nx / norm
    st[UY] = ny / norm
    st[UZ] = nz / norm


@njit
def locate(st, idx, origin, res, shape):
    inv = 1.0 / res
    for a in range(3):
        i = int(math.floor((st[X + a] - origin[a]) * inv))
        if i < 0:
            i = 0
        elif i >= shape[a]:
            i = shape[a] - 1
        idx[a] = i


@njit
def launch(st, idx, emitter, labels, origin, res, media, n_out, rng):
    """Place a fresh packet at the emitter; returns ALIVE or ESCAPED.

    ``emitter`` is ``(x, y, z, cos_half_angle, side)``; ``side > 0``
    spreads launch points uniformly over a square of that edge length.
    Directions are uniform over the solid-angle cone about +z.  A packet
    specularly reflected on entry is lost to the outside.
    """
    x = emitter[0]
    y = emitter[1]
    side = emitter[4]
    if side > 0.0:
        x += (next_double(rng) - 0.5) * side
        y += (next_double(rng) - 0.5) * side
    ct = 1.0 - next_double(rng) * (1.0 - emitter[3])
    phi = TWO_PI * next_double(rng)
    s = math.sqrt(max(0.0, 1.0 - ct * ct))
    st[X] = x
    st[Y] = y
    st[Z] = emitter[2]
    st[UX] = s * math.cos(phi)
    st[UY] = s * math.sin(phi)
    st[UZ] = ct
    st[W] = 1.0
    st[MAXZ] = emitter[2]
    st[PATH] = 0.0
    st[ABS] = 0.0
    locate(st, idx, origin, res, labels.shape)
    med = labels[idx[0], idx[1], idx[2]]
    idx[MED] = med
    n2 = media[med, 3]
    if n2 != n_out:
        r, cos_t = fresnel(n_out, n2, ct)
        if next_double(rng) < r:
            st[UZ] = -ct
            return ESCAPED
        k = n_out / n2
        st[UX] *= k
        st[UY] *= k
        st[UZ] = cos_t
    st[TAU] = -math.log(next_double(rng))
    return ALIVE


@njit
def advance(st, idx, partial, labels, safe, origin, res, media, n_out, rng,
            roulette_threshold, roulette_survival, max_steps):
    """Carry a packet to its next scattering event or to termination.

    Returns ALIVE after a scattering event (with roulette applied and a new
    optical depth drawn), or ABSORBED, ESCAPED, EXITED_TOP, FAULT or STUCK.

    Motion is split into segments: a straight run inside one medium that
    ends at a scattering site or at a face where the medium (or the grid)
    changes.  Within a segment the packet moves by safe-distance jumps or,
    in voxels touching a boundary, face to face; absorption, path length
    and optical depth are settled once per segment.
    """
    shape = labels.shape
    steps = 0
    while steps < max_steps:
        med = idx[MED]
        mua = media[med, 0]
        mus = media[med, 1]
        s = st[TAU] / mus if mus > 0.0 else np.inf
        z0 = st[Z]
        seg = 0.0
        axis = -1
        ni = 0
        scatter = False
        while steps < max_steps:
            steps += 1
            rem = s - seg
            k = safe[idx[0], idx[1], idx[2]]
            if k >= 2:
                step = (k - 1) * res
                if rem <= step:
                    step = rem
                    scatter = True
                for a in range(3):
                    st[X + a] += st[UX + a] * step
                seg += step
                locate(st, idx, origin, res, shape)
                if scatter:
                    break
                continue
            step = np.inf
            for a in range(3):
                u = st[UX + a]
                if u > 0.0:
                    t = (origin[a] + (idx[a] + 1) * res - st[X + a]) / u
                elif u < 0.0:
                    t = (origin[a] + idx[a] * res - st[X + a]) / u
                else:
                    continue
                if t < step:
                    step = t
                    axis = a
            if step < 0.0:
                step = 0.0
            if rem <= step:
                for a in range(3):
                    st[X + a] += st[UX + a] * rem
                seg += rem
                scatter = True
                axis = -1
                break
            for a in range(3):
                if a != axis:
                    st[X + a] += st[UX + a] * step
            sign = 1 if st[UX + axis] > 0.0 else -1
            st[X + axis] = origin[axis] + (idx[axis] + (1 if sign > 0 else 0)) * res
            seg += step
            ni = idx[axis] + sign
            if ni < 0 or ni >= shape[axis]:
                break
            if axis == 0:
                nmed = labels[ni, idx[1], idx[2]]
            elif axis == 1:
                nmed = labels[idx[0], ni, idx[2]]
            else:
                nmed = labels[idx[0], idx[1], ni]
            if nmed != med:
                break
            idx[axis] = ni
            axis = -1

        # settle the segment
        if mua > 0.0:
            f = math.exp(-mua * seg)
            st[ABS] += st[W] * (1.0 - f)
            st[W] *= f
        if scatter:
            st[TAU] = 0.0
        elif mus > 0.0:
            st[TAU] -= mus * seg
        st[PATH] += seg
        partial[med] += seg
        zmax = max(z0, st[Z])
        if zmax > st[MAXZ]:
            st[MAXZ] = zmax
        if not _finite(st[X] + st[Y] + st[Z] + st[W] + seg):
            return FAULT
        if st[W] < TINY_WEIGHT:
            st[ABS] += st[W]
            st[W] = 0.0
            return ABSORBED

        if scatter:
            ct = hg_cos(media[med, 2], next_double(rng))
            rotate(st, ct, TWO_PI * next_double(rng))
            if st[W] < roulette_threshold:
                if next_double(rng) <= roulette_survival:
                    gain = st[W] * (1.0 / roulette_survival - 1.0)
                    st[ABS] -= gain
                    st[W] += gain
                else:
                    st[ABS] += st[W]
                    st[W] = 0.0
                    return ABSORBED
            st[TAU] = -math.log(next_double(rng))
            return ALIVE

        if axis < 0:
            break
        u = st[UX + axis]
        if ni < 0 or ni >= shape[axis]:
            if axis == 2 and ni < 0:
                n1 = media[med, 3]
                if n1 != n_out:
                    r, cos_t = fresnel(n1, n_out, -u)
                    if next_double(rng) < r:
                        st[UZ] = -u
                        continue
                    kk = n1 / n_out
                    st[UX] *= kk
                    st[UY] *= kk
                    st[UZ] = -cos_t
                return EXITED_TOP
            return ESCAPED
        if axis == 0:
            nmed = labels[ni, idx[1], idx[2]]
        elif axis == 1:
            nmed = labels[idx[0], ni, idx[2]]
        else:
            nmed = labels[idx[0], idx[1], ni]
        n1 = media[med, 3]
        n2 = media[nmed, 3]
        if n1 != n2:
            r, cos_t = fresnel(n1, n2, abs(u))
            if next_double(rng) < r:
                st[UX + axis] = -u
                continue
            kk = n1 / n2
            for a in range(3):
                if a == axis:
                    st[UX + a] = cos_t if u > 0.0 else -cos_t
                else:
                    st[UX + a] *= kk
        idx[axis] = ni
        idx[MED] = nmed
    return STUCK


@njit
def detect(st, detectors):
    """Index of the detector that captures an exited packet, or -1.

    ``detectors`` rows are ``(x, y, half_side, cos_acceptance)``; a hit
    needs the exit point inside the square and the exit direction within
    the acceptance cone about the outward normal.
    """
    cos_exit = -st[UZ]
    for d in range(detectors.shape[0]):
        h = detectors[d, 2]
        if (abs(st[X] - detectors[d, 0]) <= h and abs(st[Y] - detectors[d, 1]) <= h
                and cos_exit >= detectors[d, 3]):
            return d
    return -1


@njit(nogil=True)
def run_batch(labels, safe, origin, res, media, n_out, emitter, detectors, seed, start, count,
              roulette_threshold, roulette_survival, max_steps,
              tally, partial_tally, hist, totals, fault):
    """Transport photons ``start .. start+count-1`` and accumulate tallies.

    Tallies are summed in photon order, so a batch's output depends only on
    its photon range.  On a non-finite state the photon index and state are
    written to ``fault`` and the batch stops early.
    """
    st = np.zeros(STATE_LEN)
    idx = np.zeros(4, dtype=np.int64)
    n_media = media.shape[0]
    partial = np.zeros(n_media)
    rng = np.zeros(STATE_SIZE, dtype=np.uint64)
    top = origin[2]
    nbins = hist.shape[1]
    for p in range(start, start + count):
        stream_init(rng, np.uint64(seed), np.uint64(p))
        for m in range(n_media):
            partial[m] = 0.0
        status = launch(st, idx, emitter, labels, origin, res, media, n_out, rng)
        while status == ALIVE:
            status = advance(st, idx, partial, labels, safe, origin, res, media, n_out, rng,
                             roulette_threshold, roulette_survival, max_steps)
        totals[G_ABSORBED] += st[ABS]
        if status == EXITED_TOP:
            d = detect(st, detectors)
            w = st[W]
            if d >= 0:
                depth = st[MAXZ] - top
                tally[d, T_W] += w
                tally[d, T_W2] += w * w
                tally[d, T_HITS] += 1.0
                tally[d, T_DEPTH] += w * depth
                tally[d, T_PATH] += w * st[PATH]
                for m in range(n_media):
                    partial_tally[d, m] += w * partial[m]
                b = int(depth)
                if b >= nbins:
                    b = nbins - 1
                hist[d, b] += w
                totals[G_DETECTED] += w
            else:
                totals[G_ESCAPED] += w
        elif status == ESCAPED:
            totals[G_ESCAPED] += st[W]
        elif status == STUCK:
            totals[G_ABSORBED] += st[W]
            totals[G_STUCK] += 1.0
        elif status == FAULT:
            fault[0] = p
            for i in range(STATE_LEN):
                fault[1 + i] = st[i]
            return

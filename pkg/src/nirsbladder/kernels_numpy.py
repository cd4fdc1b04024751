"""Vectorised pure-numpy transport kernel.

Same physics and the same per-photon random-draw order as
:mod:`nirsbladder.kernels`, but every live photon of a batch advances one
inner step per loop iteration using array arithmetic.  Floating-point
summation order differs from the scalar kernel, so the two backends agree
statistically rather than bit for bit.
"""
import math

import numpy as np

from .kernels import (ABSORBED, ALIVE, ESCAPED, EXITED_TOP, FAULT, STUCK, STATE_LEN,
                      G_ABSORBED, G_DETECTED, G_ESCAPED, G_STUCK,
                      T_DEPTH, T_HITS, T_PATH, T_W, T_W2, TINY_WEIGHT, TWO_PI)
from .rng import StreamArray


def fresnel(n1, n2, cos_i):
    """Array form of :func:`nirsbladder.kernels.fresnel` (``n1 != n2``)."""
    n1 = np.broadcast_to(n1, cos_i.shape).astype(float)
    n2 = np.broadcast_to(n2, cos_i.shape).astype(float)
    sin_i = np.sqrt(np.maximum(0.0, 1.0 - cos_i * cos_i))
    sin_t = n1 / n2 * sin_i
    tir = sin_t >= 1.0
    cos_t = np.sqrt(np.maximum(0.0, 1.0 - sin_t * sin_t))
    with np.errstate(invalid="ignore", divide="ignore"):
        rs = (n1 * cos_i - n2 * cos_t) / (n1 * cos_i + n2 * cos_t)
        rp = (n1 * cos_t - n2 * cos_i) / (n1 * cos_t + n2 * cos_i)
    r = 0.5 * (rs * rs + rp * rp)
    r = np.where(tir, 1.0, r)
    cos_t = np.where(tir, 0.0, cos_t)
    return r, cos_t


def hg_cos(g, xi):
    iso = np.abs(g) < 1e-6
    gg = np.where(iso, 0.5, g)
    tmp = (1.0 - gg * gg) / (1.0 - gg + 2.0 * gg * xi)
    ct = (1.0 + gg * gg - tmp * tmp) / (2.0 * gg)
    return np.where(iso, 2.0 * xi - 1.0, np.clip(ct, -1.0, 1.0))


def rotate(u, ct, phi):
    ux, uy, uz = u[:, 0], u[:, 1], u[:, 2]
    s = np.sqrt(np.maximum(0.0, 1.0 - ct * ct))
    cp = np.cos(phi)
    sp = np.sqrt(np.maximum(0.0, 1.0 - cp * cp))
    sp = np.where(phi > math.pi, -sp, sp)
    polar = np.abs(uz) > 0.99999
    tmp = np.sqrt(np.maximum(1.0 - uz * uz, 1e-300))
    nx = np.where(polar, s * cp, s * (ux * uz * cp - uy * sp) / tmp + ux * ct)
    ny = np.where(polar, s * sp, s * (uy * uz * cp + ux * sp) / tmp + uy * ct)
    nz = np.where(polar, np.where(uz > 0, ct, -ct), -s * cp * tmp + uz * ct)
    norm = np.sqrt(nx * nx + ny * ny + nz * nz)
    return np.stack([nx / norm, ny / norm, nz / norm], axis=1)


def locate(pos, origin, res, shape):
    i = np.floor((pos - origin) * (1.0 / res)).astype(np.int64)
    return np.clip(i, 0, np.asarray(shape) - 1)


def run_batch(labels, safe, origin, res, media, n_out, emitter, detectors, seed, start, count,
              roulette_threshold, roulette_survival, max_steps,
              tally, partial_tally, hist, totals, fault):
    """Array twin of :func:`nirsbladder.kernels.run_batch` (same signature)."""
    n = int(count)
    shape = np.asarray(labels.shape)
    rng = StreamArray(seed, np.arange(start, start + n, dtype=np.uint64))
    everyone = np.arange(n)
    pos = np.zeros((n, 3))
    u = np.zeros((n, 3))
    w = np.ones(n)
    absorbed = np.zeros(n)
    tau = np.zeros(n)
    path = np.zeros(n)
    partial = np.zeros((n, media.shape[0]))
    status = np.full(n, ALIVE, dtype=np.int64)

    # launch
    x = np.full(n, emitter[0])
    y = np.full(n, emitter[1])
    if emitter[4] > 0.0:
        x = x + (rng.draw(everyone) - 0.5) * emitter[4]
        y = y + (rng.draw(everyone) - 0.5) * emitter[4]
    ct = 1.0 - rng.draw(everyone) * (1.0 - emitter[3])
    phi = TWO_PI * rng.draw(everyone)
    st = np.sqrt(np.maximum(0.0, 1.0 - ct * ct))
    pos[:, 0], pos[:, 1], pos[:, 2] = x, y, emitter[2]
    u[:, 0], u[:, 1], u[:, 2] = st * np.cos(phi), st * np.sin(phi), ct
    maxz = pos[:, 2].copy()
    idx = locate(pos, origin, res, shape)
    med = labels[idx[:, 0], idx[:, 1], idx[:, 2]].astype(np.int64)
    n2 = media[med, 3]
    mism = np.flatnonzero(n2 != n_out)
    if mism.size:
        r, cos_t = fresnel(n_out, n2[mism], ct[mism])
        refl = rng.draw(mism) < r
        out = mism[refl]
        status[out] = ESCAPED
        u[out, 2] = -ct[out]
        tr = mism[~refl]
        k = n_out / n2[tr]
        u[tr, 0] *= k
        u[tr, 1] *= k
        u[tr, 2] = cos_t[~refl]
    live = np.flatnonzero(status == ALIVE)
    tau[live] = -np.log(rng.draw(live))

    # per-segment state
    seg = np.zeros(n)
    z0 = pos[:, 2].copy()
    mus_all = media[med, 1]
    with np.errstate(divide="ignore"):
        s = np.where(mus_all > 0.0, tau / np.where(mus_all > 0.0, mus_all, 1.0), np.inf)
    steps = np.zeros(n, dtype=np.int64)
    axis_end = np.full(n, -1, dtype=np.int64)
    ni_end = np.zeros(n, dtype=np.int64)

    while live.size:
        a = live
        steps[a] += 1
        rem = s[a] - seg[a]
        k = safe[idx[a, 0], idx[a, 1], idx[a, 2]].astype(np.int64)
        jump = k >= 2
        scatter = np.zeros(a.size, dtype=bool)
        crossed = np.zeros(a.size, dtype=bool)

        # safe-distance jumps
        j = np.flatnonzero(jump)
        if j.size:
            pj = a[j]
            step = (k[j] - 1) * res
            sc = rem[j] <= step
            step = np.where(sc, rem[j], step)
            pos[pj] += u[pj] * step[:, None]
            seg[pj] += step
            idx[pj] = locate(pos[pj], origin, res, shape)
            scatter[j[sc]] = True

        # face-to-face steps in voxels touching a boundary
        f = np.flatnonzero(~jump)
        if f.size:
            pf = a[f]
            uf = u[pf]
            lo = origin + idx[pf] * res
            with np.errstate(divide="ignore", invalid="ignore"):
                t = np.where(uf > 0.0, (lo + res - pos[pf]) / uf,
                             np.where(uf < 0.0, (lo - pos[pf]) / uf, np.inf))
            ax = np.argmin(t, axis=1)
            step = np.maximum(t[np.arange(pf.size), ax], 0.0)
            sc = rem[f] <= step
            if sc.any():
                ps = pf[sc]
                pos[ps] += u[ps] * rem[f][sc][:, None]
                seg[ps] += rem[f][sc]
                scatter[f[sc]] = True
            cr = ~sc
            if cr.any():
                pc, axc, stc = pf[cr], ax[cr], step[cr]
                sign = np.where(u[pc, axc] > 0.0, 1, -1)
                face = origin[axc] + (idx[pc, axc] + (sign > 0)) * res
                moved = pos[pc] + u[pc] * stc[:, None]
                moved[np.arange(pc.size), axc] = face
                pos[pc] = moved
                seg[pc] += stc
                ni = idx[pc, axc] + sign
                out = (ni < 0) | (ni >= shape[axc])
                nmed = np.full(pc.size, -1, dtype=np.int64)
                inside = ~out
                if inside.any():
                    nb = idx[pc[inside]].copy()
                    nb[np.arange(nb.shape[0]), axc[inside]] = ni[inside]
                    nmed[inside] = labels[nb[:, 0], nb[:, 1], nb[:, 2]]
                same = inside & (nmed == med[pc])
                ps = pc[same]
                idx[ps, axc[same]] = ni[same]
                ends = ~same
                axis_end[pc[ends]] = axc[ends]
                ni_end[pc[ends]] = ni[ends]
                crossed[f[np.flatnonzero(cr)[ends]]] = True

        stuck = ~(scatter | crossed) & (steps[a] >= max_steps)
        ended = a[scatter | crossed | stuck]
        if ended.size == 0:
            continue

        # settle the segment
        e = ended
        me = med[e]
        fac = np.exp(-media[me, 0] * seg[e])
        absorbed[e] += w[e] * (1.0 - fac)
        w[e] *= fac
        mus = media[me, 1]
        is_sc = np.isin(e, a[scatter], assume_unique=True)
        tau[e] = np.where(is_sc, 0.0, np.where(mus > 0.0, tau[e] - mus * seg[e], tau[e]))
        path[e] += seg[e]
        partial[e, me] += seg[e]
        maxz[e] = np.maximum(maxz[e], np.maximum(z0[e], pos[e, 2]))
        bad = ~np.isfinite(pos[e].sum(axis=1) + w[e] + seg[e])
        status[e[bad]] = FAULT
        tiny = ~bad & (w[e] < TINY_WEIGHT)
        absorbed[e[tiny]] += w[e[tiny]]
        w[e[tiny]] = 0.0
        status[e[tiny]] = ABSORBED
        status[a[stuck]] = np.where(status[a[stuck]] == ALIVE, STUCK, status[a[stuck]])

        # scattering events
        sc_ids = e[is_sc & (status[e] == ALIVE)]
        if sc_ids.size:
            g = media[med[sc_ids], 2]
            ct = hg_cos(g, rng.draw(sc_ids))
            u[sc_ids] = rotate(u[sc_ids], ct, TWO_PI * rng.draw(sc_ids))
            low = sc_ids[w[sc_ids] < roulette_threshold]
            if low.size:
                keep = rng.draw(low) <= roulette_survival
                win = low[keep]
                gain = w[win] * (1.0 / roulette_survival - 1.0)
                absorbed[win] -= gain
                w[win] += gain
                lose = low[~keep]
                absorbed[lose] += w[lose]
                w[lose] = 0.0
                status[lose] = ABSORBED
            go = sc_ids[status[sc_ids] == ALIVE]
            tau[go] = -np.log(rng.draw(go))
            steps[sc_ids] = 0

        # face crossings into another medium or out of the grid
        cr_ids = e[~is_sc & (status[e] == ALIVE)]
        if cr_ids.size:
            ax = axis_end[cr_ids]
            ni = ni_end[cr_ids]
            rows = np.arange(cr_ids.size)
            ua = u[cr_ids, ax]
            n1 = media[med[cr_ids], 3]
            out = (ni < 0) | (ni >= shape[ax])
            top = out & (ax == 2) & (ni < 0)
            status[cr_ids[out & ~top]] = ESCAPED
            tsel = np.flatnonzero(top)
            if tsel.size:
                tid = cr_ids[tsel]
                need = n1[tsel] != n_out
                exit_now = tid[~need]
                status[exit_now] = EXITED_TOP
                fid = tid[need]
                if fid.size:
                    r, cos_t = fresnel(n1[tsel][need], n_out, -ua[tsel][need])
                    refl = rng.draw(fid) < r
                    u[fid[refl], 2] = -u[fid[refl], 2]
                    tr = fid[~refl]
                    kk = n1[tsel][need][~refl] / n_out
                    u[tr, 0] *= kk
                    u[tr, 1] *= kk
                    u[tr, 2] = -cos_t[~refl]
                    status[tr] = EXITED_TOP
            isel = np.flatnonzero(~out)
            if isel.size:
                iid = cr_ids[isel]
                axi = ax[isel]
                nb = idx[iid].copy()
                nb[np.arange(iid.size), axi] = ni[isel]
                nmed = labels[nb[:, 0], nb[:, 1], nb[:, 2]].astype(np.int64)
                n2 = media[nmed, 3]
                n1i = n1[isel]
                mov = np.ones(iid.size, dtype=bool)
                need = np.flatnonzero(n1i != n2)
                if need.size:
                    nid = iid[need]
                    uax = ua[isel][need]
                    r, cos_t = fresnel(n1i[need], n2[need], np.abs(uax))
                    refl = rng.draw(nid) < r
                    u[nid[refl], axi[need][refl]] = -uax[refl]
                    mov[need[refl]] = False
                    tr = need[~refl]
                    kk = n1i[tr] / n2[tr]
                    tid = iid[tr]
                    newu = u[tid] * kk[:, None]
                    newu[np.arange(tr.size), axi[tr]] = np.where(uax[~refl] > 0.0, cos_t[~refl],
                                                                -cos_t[~refl])
                    u[tid] = newu
                mid = iid[mov]
                idx[mid, axi[mov]] = ni[isel][mov]
                med[mid] = nmed[mov]
            still = cr_ids[status[cr_ids] == ALIVE]
            over = still[steps[still] >= max_steps]
            status[over] = STUCK

        # open a new segment for every photon that continues
        cont = e[status[e] == ALIVE]
        seg[cont] = 0.0
        z0[cont] = pos[cont, 2]
        mc = media[med[cont], 1]
        with np.errstate(divide="ignore"):
            s[cont] = np.where(mc > 0.0, tau[cont] / np.where(mc > 0.0, mc, 1.0), np.inf)
        axis_end[e] = -1
        live = np.flatnonzero(status == ALIVE)

    faults = np.flatnonzero(status == FAULT)
    if faults.size:
        p = faults[0]
        fault[0] = start + p
        state = np.zeros(STATE_LEN)
        state[0:3] = pos[p]
        state[3:6] = u[p]
        state[6:11] = w[p], maxz[p], tau[p], path[p], absorbed[p]
        fault[1:1 + STATE_LEN] = state
        return

    totals[G_ABSORBED] += absorbed.sum()
    stuck = status == STUCK
    totals[G_ABSORBED] += w[stuck].sum()
    totals[G_STUCK] += stuck.sum()
    totals[G_ESCAPED] += w[status == ESCAPED].sum()
    exited = np.flatnonzero(status == EXITED_TOP)
    hit = np.full(exited.size, -1, dtype=np.int64)
    cos_exit = -u[exited, 2]
    for d in range(detectors.shape[0] - 1, -1, -1):
        h = detectors[d, 2]
        inside = ((np.abs(pos[exited, 0] - detectors[d, 0]) <= h)
                  & (np.abs(pos[exited, 1] - detectors[d, 1]) <= h)
                  & (cos_exit >= detectors[d, 3]))
        hit[inside] = d
    totals[G_ESCAPED] += w[exited[hit < 0]].sum()
    top = origin[2]
    nbins = hist.shape[1]
    for d in range(detectors.shape[0]):
        ids = exited[hit == d]
        if ids.size == 0:
            continue
        wd = w[ids]
        depth = maxz[ids] - top
        tally[d, T_W] += wd.sum()
        tally[d, T_W2] += (wd * wd).sum()
        tally[d, T_HITS] += ids.size
        tally[d, T_DEPTH] += (wd * depth).sum()
        tally[d, T_PATH] += (wd * path[ids]).sum()
        partial_tally[d] += (wd[:, None] * partial[ids]).sum(axis=0)
        bins = np.minimum(depth.astype(np.int64), nbins - 1)
        hist[d] += np.bincount(bins, weights=wd, minlength=nbins)
        totals[G_DETECTED] += wd.sum()

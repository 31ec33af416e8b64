"""Hot loops of the Lax-Hopf solver.

Value conditions are packed into flat arrays:

* spatial conditions (initial density cells) at time ``t0`` covering
  ``[a, b]`` with value ``A - rho * (y - a)``;
* temporal conditions at a fixed position ``p`` over ``[s0, s1]`` with
  value ``A + r * (s - s0)``, grouped into *chains* (contiguous pieces at
  one position, each anchored on the solution at its start).  Chain ``c``
  owns rows ``off[c] : off[c] + cnt[c]`` sorted by ``s0``.

For the triangular diagram the characteristic cost is linear in the
characteristic speed, so every component solution is attained at an
endpoint of the reachable part of its extent.  Within an anchored chain a
piece is dominated by its successor wherever the successor is reachable,
which leaves a single candidate per chain (found by bisection).

Every kernel has a numba build and a plain numpy build; :func:`kernels`
returns whichever :mod:`curbflow._accel` currently selects.
"""
import numpy as np

from . import _accel

EPS_T = 1e-9
EPS_X = 1e-9


def _spatial_src(t, x, t0, a, b, A, rho, v_f, w_c, rho_c, q_m):
    tau = t - t0
    if tau < -EPS_T:
        return np.inf
    if tau < 0.0:
        tau = 0.0
    lo = max(a, x - v_f * tau)
    hi = min(b, x + w_c * tau)
    if lo > hi + EPS_X:
        return np.inf
    if lo > hi:
        lo = hi
    y = lo if rho <= rho_c else hi
    return A - rho * (y - a) + tau * q_m - (x - y) * rho_c


def _temporal_src(t, x, p, s0, s1, A, r, v_f, w_c, rho_c, q_m):
    if x >= p:
        d = (x - p) / v_f
    else:
        d = (p - x) / w_c
    smax = t - d
    if smax < s0 - EPS_T:
        return np.inf
    s = smax
    if s > s1:
        s = s1
    if s < s0:
        s = s0
    return A + r * (s - s0) + (t - s) * q_m - (x - p) * rho_c


def _build(jit):
    spatial = jit(_spatial_src)
    temporal = jit(_temporal_src)

    def point_value(t, x, sp, tm, off, cnt, nch, prune, fdp):
        # sp: (ns, 5) [t0, a, b, A, rho]; tm: (cap, 5) [p, s0, s1, A, r]
        v_f = fdp[0]
        w_c = fdp[1]
        rho_c = fdp[2]
        q_m = fdp[3]
        best = np.inf
        for i in range(sp.shape[0]):
            v = spatial(t, x, sp[i, 0], sp[i, 1], sp[i, 2], sp[i, 3], sp[i, 4],
                        v_f, w_c, rho_c, q_m)
            if v < best:
                best = v
        for c in range(nch):
            n = cnt[c]
            if n == 0:
                continue
            o = off[c]
            if prune:
                p = tm[o, 0]
                if x >= p:
                    d = (x - p) / v_f
                else:
                    d = (p - x) / w_c
                key = t - d + EPS_T
                lo = 0
                hi = n
                while lo < hi:
                    mid = (lo + hi) // 2
                    if tm[o + mid, 1] <= key:
                        lo = mid + 1
                    else:
                        hi = mid
                k = lo - 1
                if k < 0:
                    continue
                i = o + k
                v = temporal(t, x, tm[i, 0], tm[i, 1], tm[i, 2], tm[i, 3], tm[i, 4],
                             v_f, w_c, rho_c, q_m)
                if v < best:
                    best = v
            else:
                for i in range(o, o + n):
                    v = temporal(t, x, tm[i, 0], tm[i, 1], tm[i, 2], tm[i, 3],
                                 tm[i, 4], v_f, w_c, rho_c, q_m)
                    if v < best:
                        best = v
        return best

    point_value = jit(point_value)

    def envelope(ts, xs, sp, tm, off, cnt, prune, fdp):
        out = np.empty(ts.shape[0])
        nch = off.shape[0]
        for j in range(ts.shape[0]):
            out[j] = point_value(ts[j], xs[j], sp, tm, off, cnt, nch, prune, fdp)
        return out

    envelope = jit(envelope)

    def march(fdp, L, T, dt, step, demand, supply, sig, r_pass, probe, queue,
              backlog0, sp, tm, off, cnt, veh, arrival, traj):
        """Time-march the hybrid simulation, filling ``tm``/``cnt`` in place.

        ``veh`` rows: [start_time, start_x, stop_x, duration, chain index].
        Chains 0 and 1 are the upstream and downstream boundaries.
        ``sig``: [has_signal, cycle, red, red_start].  With ``queue`` the
        demand blocked upstream waits (starting from ``backlog0`` vehicles)
        and enters as soon as supply allows.  Returns the number of
        vehicles that never reached their stop.  ``traj[n, i]`` receives the
        position of vehicle ``i`` at ``n * dt`` once it has entered.
        """
        v_f = fdp[0]
        w_c = fdp[1]
        rho_m = fdp[4]
        q_m = fdp[3]
        rho_c = fdp[2]
        nch = off.shape[0]
        nv = veh.shape[0]
        pos = np.empty(nv)
        state = np.zeros(nv, dtype=np.int64)  # 0 waiting, 1 moving, 2 stopped, 3 done
        for i in range(nv):
            pos[i] = veh[i, 1]
            arrival[i] = np.nan
        nsteps = int(np.rint(T / dt))
        offered = backlog0
        ev_t = np.empty(nv + 8)
        ev_k = np.empty(nv + 8, dtype=np.int64)
        for n in range(nsteps):
            t0 = n * dt
            t1 = (n + 1) * dt
            if t1 > T:
                t1 = T
            k = int(np.floor(t0 / step + 1e-9))
            # upstream: demand condition; the envelope caps it by the supply
            # the segment can take.  With ``queue`` it follows the cumulative
            # offered demand, so blocked vehicles enter as soon as possible.
            if queue:
                anchor = offered
            else:
                anchor = point_value(t0, 0.0, sp, tm, off, cnt, nch, True, fdp)
            j = off[0] + cnt[0]
            tm[j, 0] = 0.0
            tm[j, 1] = t0
            tm[j, 2] = t1
            tm[j, 3] = anchor
            tm[j, 4] = demand[k]
            cnt[0] += 1
            offered += demand[k] * (t1 - t0)
            # stops continuing from an earlier window
            for i in range(nv):
                if state[i] == 2:
                    c = int(veh[i, 4])
                    te = arrival[i] + veh[i, 3]
                    if te <= t0 + EPS_T:
                        state[i] = 3
                        continue
                    x_i = veh[i, 2]
                    j = off[c] + cnt[c]
                    tm[j, 0] = x_i
                    tm[j, 1] = t0
                    tm[j, 2] = min(t1, te)
                    tm[j, 3] = point_value(t0, x_i, sp, tm, off, cnt, nch, True, fdp)
                    tm[j, 4] = r_pass
                    cnt[c] += 1
            # vehicle moves over [t0, t1]; collect arrivals inside the window
            nev = 0
            for i in range(nv):
                if state[i] == 0 and veh[i, 0] <= t0 + EPS_T:
                    state[i] = 1
                if state[i] != 0:
                    traj[n, i] = pos[i]
                if state[i] != 1:
                    continue
                x = pos[i]
                x_i = veh[i, 2]
                if x >= x_i - EPS_X:
                    ta = t0
                else:
                    ma = point_value(t0, x, sp, tm, off, cnt, nch, True, fdp)
                    mb = point_value(t0, x + probe, sp, tm, off, cnt, nch, True, fdp)
                    rho = (ma - mb) / probe
                    if rho <= rho_c:
                        v = v_f
                    elif rho >= rho_m:
                        v = 0.0
                    else:
                        v = w_c * (rho_m - rho) / rho
                    xn = x + v * (t1 - t0)
                    if xn < x_i:
                        pos[i] = xn
                        continue
                    ta = t0 + (x_i - x) / v
                pos[i] = x_i
                ev_t[nev] = ta
                ev_k[nev] = i
                nev += 1
            # downstream switch times inside the window
            nsw = 0
            if sig[0] > 0.5:
                cyc = sig[1]
                red = sig[2]
                base = sig[3]
                m = np.floor((t0 - base) / cyc)
                for q in range(3):
                    cs = base + (m + q) * cyc
                    for ts in (cs, cs + red):
                        if ts > t0 + EPS_T and ts < t1 - EPS_T:
                            ev_t[nev + nsw] = ts
                            ev_k[nev + nsw] = -1
                            nsw += 1
            ntot = nev + nsw
            # chronological processing (stable: ties keep vehicle order)
            for a_ in range(1, ntot):
                tt = ev_t[a_]
                kk = ev_k[a_]
                b_ = a_ - 1
                while b_ >= 0 and ev_t[b_] > tt:
                    ev_t[b_ + 1] = ev_t[b_]
                    ev_k[b_ + 1] = ev_k[b_]
                    b_ -= 1
                ev_t[b_ + 1] = tt
                ev_k[b_ + 1] = kk
            ds_start = t0
            for e in range(ntot + 1):
                if e < ntot:
                    te_ = ev_t[e]
                    kind = ev_k[e]
                else:
                    te_ = t1
                    kind = -1
                if kind < 0:
                    # close a downstream piece [ds_start, te_]
                    if te_ > ds_start + EPS_T or e == ntot:
                        mid = 0.5 * (ds_start + te_)
                        green = 1.0
                        if sig[0] > 0.5:
                            ph = (mid - sig[3]) - np.floor((mid - sig[3]) / sig[1]) * sig[1]
                            if ph < sig[2]:
                                green = 0.0
                        j = off[1] + cnt[1]
                        tm[j, 0] = L
                        tm[j, 1] = ds_start
                        tm[j, 2] = te_
                        tm[j, 3] = point_value(ds_start, L, sp, tm, off, cnt, nch, True, fdp)
                        tm[j, 4] = supply[k] * green
                        cnt[1] += 1
                        ds_start = te_
                    continue
                i = kind
                ta = te_
                arrival[i] = ta
                c = int(veh[i, 4])
                x_i = veh[i, 2]
                te = ta + veh[i, 3]
                state[i] = 2
                if ta < t1 - EPS_T:
                    j = off[c] + cnt[c]
                    tm[j, 0] = x_i
                    tm[j, 1] = ta
                    tm[j, 2] = min(t1, te)
                    tm[j, 3] = point_value(ta, x_i, sp, tm, off, cnt, nch, True, fdp)
                    tm[j, 4] = r_pass
                    cnt[c] += 1
        unreached = 0
        for i in range(nv):
            if state[i] != 0:
                traj[nsteps, i] = pos[i]
            if state[i] <= 1:
                unreached += 1
        return unreached

    march = jit(march)
    return {"point_value": point_value, "envelope": envelope, "march": march,
            "spatial": spatial, "temporal": temporal}


def _envelope_numpy(ts, xs, sp, tm, off, cnt, prune, fdp):
    """Vectorised lower envelope over all points (numpy fallback)."""
    v_f, w_c, rho_c, q_m = fdp[0], fdp[1], fdp[2], fdp[3]
    ts = np.asarray(ts, dtype=float)
    xs = np.asarray(xs, dtype=float)
    best = np.full(ts.shape, np.inf)
    if sp.shape[0]:
        t = ts[:, None]
        x = xs[:, None]
        t0, a, b, A, rho = (sp[:, i][None, :] for i in range(5))
        tau = t - t0
        ok = tau >= -EPS_T
        tau = np.maximum(tau, 0.0)
        lo = np.maximum(a, x - v_f * tau)
        hi = np.minimum(b, x + w_c * tau)
        ok &= lo <= hi + EPS_X
        lo = np.minimum(lo, hi)
        y = np.where(rho <= rho_c, lo, hi)
        val = A - rho * (y - a) + tau * q_m - (x - y) * rho_c
        best = np.minimum(best, np.where(ok, val, np.inf).min(axis=1))
    for c in range(off.shape[0]):
        n = int(cnt[c])
        if n == 0:
            continue
        rows = tm[off[c]:off[c] + n]
        p = rows[0, 0]
        d = np.where(xs >= p, (xs - p) / v_f, (p - xs) / w_c)
        smax = ts - d
        if prune:
            k = np.searchsorted(rows[:, 1], smax + EPS_T, side="right") - 1
            ok = k >= 0
            sel = rows[np.maximum(k, 0)]
            s0, s1, A, r = sel[:, 1], sel[:, 2], sel[:, 3], sel[:, 4]
            s = np.clip(smax, s0, s1)
            val = A + r * (s - s0) + (ts - s) * q_m - (xs - p) * rho_c
            best = np.minimum(best, np.where(ok, val, np.inf))
        else:
            s0, s1, A, r = (rows[:, i][None, :] for i in range(1, 5))
            sm = smax[:, None]
            ok = sm >= s0 - EPS_T
            s = np.minimum(np.maximum(sm, s0), s1)
            val = A + r * (s - s0) + (ts[:, None] - s) * q_m - (xs[:, None] - p) * rho_c
            best = np.minimum(best, np.where(ok, val, np.inf).min(axis=1))
    return best


_PY = None
_NB = None


def kernels():
    """Kernel table for the active backend."""
    global _PY, _NB
    if _accel.use_numba():
        if _NB is None:
            _NB = _build(_accel.jit)
        return _NB
    if _PY is None:
        _PY = _build(lambda f: f)
        _PY["envelope"] = _envelope_numpy
    return _PY

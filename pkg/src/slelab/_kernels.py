"""Compiled inner loops for the Loewner chains.

Coordinates in the renormalized chain are x = (g - W) / (g(marker) - W):
after every slit step the picture is translated so the driving point sits
at 0 and scaled so the marker sits at 1.  One step of renormalized time d
with driving increment xi and midpoint value m maps

    x -> (m - xi + sqrt((x - m)^2 + 4d)) / (m - xi + sqrt((1 - m)^2 + 4d))

and e = x - 1 is carried separately so points close to the marker keep
their relative precision.
"""

import numpy as np
from numba import njit

Z_FIRST = 0
SIMULTANEOUS = 1
ONE_FIRST = 2
UNDECIDED = 3
# side mode reuses the first two slots
LEFT = 0
RIGHT = 1


@njit(cache=True, inline="always")
def csqrt_up(a, d):
    """Square root of a with Im >= 0; a real root takes the sign of Re d."""
    ar = a.real
    ai = a.imag
    r = np.sqrt(ar * ar + ai * ai)
    if ar >= 0.0:
        t = np.sqrt(0.5 * (r + ar))
        if t == 0.0:
            return 0j
        re = t
        im = 0.5 * ai / t
        if im < 0.0 or (im == 0.0 and d.real < 0.0):
            re = -re
            im = -im
        return complex(re, im)
    t = np.sqrt(0.5 * (r - ar))
    return complex(0.5 * ai / t, t)


@njit(cache=True, inline="always")
def _renorm_step(x, e, xi, m, d):
    sbb = np.sqrt((1.0 - m) ** 2 + 4.0 * d)
    yp = m + sbb - xi
    dd = x - m
    sa = csqrt_up(dd * dd + 4.0 * d, dd)
    xn = (m - xi + sa) / yp
    en = e * (x + 1.0 - 2.0 * m) / ((sa + sbb) * yp)
    return xn, en, sa.imag


@njit(cache=True)
def _grow(cap, wa, wb, dl, left, dep, cst):
    cap2 = 2 * cap
    a2 = np.empty(cap2)
    b2 = np.empty(cap2)
    d2 = np.empty(cap2)
    l2 = np.empty(cap2, np.int64)
    p2 = np.empty(cap2, np.int64)
    c2 = np.empty((cap2, 5))
    a2[:cap] = wa
    b2[:cap] = wb
    d2[:cap] = dl
    l2[:cap] = left
    p2[:cap] = dep
    c2[:cap] = cst
    return cap2, a2, b2, d2, l2, p2, c2


@njit(cache=True)
def _split(nd, nn, rng, sk, wa, wb, dl, left, dep, cst):
    """Draw the bridge midpoint of node nd, create its children at nn, nn+1
    and cache the slit-step constants of nd."""
    d = dl[nd]
    mid = 0.5 * (wa[nd] + wb[nd]) + sk * np.sqrt(0.25 * d) * rng.standard_normal()
    dl[nn] = 0.5 * d
    dl[nn + 1] = 0.5 * d
    left[nn] = -1
    left[nn + 1] = -1
    dep[nn] = dep[nd] + 1
    dep[nn + 1] = dep[nd] + 1
    wa[nn] = wa[nd]
    wb[nn] = mid
    wa[nn + 1] = mid
    wb[nn + 1] = wb[nd]
    left[nd] = nn
    m = mid - wa[nd]
    xi = wb[nd] - wa[nd]
    sbb = np.sqrt((1.0 - m) ** 2 + 4.0 * d)
    cst[nd, 0] = m
    cst[nd, 1] = m - xi
    cst[nd, 2] = sbb
    cst[nd, 3] = 1.0 / (m + sbb - xi)
    cst[nd, 4] = 1.0 - 2.0 * m


@njit(cache=True)
def _sweep(j, nn, rng, sk, du, x, e, out, wa, wb, dl, left, dep, cst, stack,
           eps0sq, rinfsq, eps1sq, maxdepth, cref, side_mode, epsa, rfar, dnear):
    """Advance points j.. through one coarse step.

    Returns (index, node count, number finished).  index < len(x) means the
    node arena is full: the caller grows it and resumes at that index, whose
    state has not been touched, so no random draw is lost or repeated.
    """
    n = x.shape[0]
    cap = wa.shape[0]
    finished = 0
    m0 = cst[0, 0]
    shift0 = cst[0, 1]
    sbb0 = cst[0, 2]
    inv0 = cst[0, 3]
    c0 = cst[0, 4]
    while j < n:
        if out[j] != UNDECIDED:
            j += 1
            continue
        xj = x[j]
        ej = e[j]
        r = UNDECIDED
        if xj.real * xj.real + xj.imag * xj.imag >= cref:
            dd = xj - m0
            sa = csqrt_up(dd * dd + 4.0 * du, dd)
            was_interior = xj.imag > 0.0
            ej = ej * (xj + c0) / (sa + sbb0) * inv0
            xj = (shift0 + sa) * inv0
            if sa.imag <= 0.0 and was_interior:
                r = Z_FIRST
                if side_mode and xj.real > 0.0:
                    r = RIGHT
        else:
            stack[0] = 2
            stack[1] = 1
            sp = 2
            while sp > 0:
                sp -= 1
                nd = stack[sp]
                d = dl[nd]
                refine = cref * d > du * (xj.real * xj.real + xj.imag * xj.imag) and dep[nd] < maxdepth
                if left[nd] < 0:
                    if nn + 2 > cap:
                        return j, nn, finished
                    _split(nd, nn, rng, sk, wa, wb, dl, left, dep, cst)
                    nn += 2
                if refine:
                    stack[sp] = left[nd] + 1
                    stack[sp + 1] = left[nd]
                    sp += 2
                    continue
                m = cst[nd, 0]
                dd = xj - m
                sa = csqrt_up(dd * dd + 4.0 * d, dd)
                inv = cst[nd, 3]
                was_interior = xj.imag > 0.0
                ej = ej * (xj + cst[nd, 4]) / (sa + cst[nd, 2]) * inv
                xj = (cst[nd, 1] + sa) * inv
                if sa.imag <= 0.0 and was_interior:
                    r = Z_FIRST
                    if side_mode and xj.real > 0.0:
                        r = RIGHT
                    break
                if not side_mode and xj.real * xj.real + xj.imag * xj.imag < eps0sq:
                    r = Z_FIRST
                    break
        if r == UNDECIDED:
            if side_mode:
                a = np.angle(xj)
                if a > np.pi - epsa:
                    r = LEFT
                elif a < epsa:
                    r = RIGHT
            else:
                ax2 = xj.real * xj.real + xj.imag * xj.imag
                if ax2 < eps0sq:
                    r = Z_FIRST
                elif ax2 > rinfsq:
                    r = ONE_FIRST
                elif ej.real * ej.real + ej.imag * ej.imag < eps1sq:
                    r = SIMULTANEOUS
        if r == UNDECIDED and (rfar > 0.0 or dnear > 0.0):
            if rfar > 0.0:
                ax = abs(xj)
                if ax > rfar:
                    xj = xj * (rfar / ax)
                    ej = xj - 1.0
            if dnear > 0.0:
                ae = abs(ej)
                if ae < dnear:
                    ej = ej * (dnear / ae)
                    xj = 1.0 + ej
        x[j] = xj
        e[j] = ej
        if r != UNDECIDED:
            out[j] = r
            finished += 1
        j += 1
    return j, nn, finished


@njit(cache=True)
def renorm_classify(rng, kappa, rho, du, z, umax, eps0, rinf, eps1,
                    maxdepth, cref, side_mode, epsa, rfar, dnear):
    """Run one renormalized chain and classify every point in z.

    Three-way mode: |x| < eps0 or a slit landing -> Z_FIRST, |x| > rinf ->
    ONE_FIRST, |x - 1| < eps1 -> SIMULTANEOUS.  Side mode: arg x near pi ->
    LEFT, near 0 -> RIGHT (slit landings by the sign of Re x).

    Each coarse step of length du carries a binary tree of Brownian bridge
    samples; a point descends into a node while cref*d > du*|x|^2, which
    refines time only where the point sits near the driving tip.  The
    decision uses the point's position at the start of the node, never the
    node's own increment.  rfar > 0 and dnear > 0 switch on the rescaling
    moves used when log|x| (or log|x - 1|) has zero drift.
    """
    n = z.shape[0]
    x = z.copy()
    e = z - 1.0
    out = np.full(n, UNDECIDED, np.int64)
    alive = n
    sk = np.sqrt(kappa)
    cap = 1024
    wa = np.empty(cap)
    wb = np.empty(cap)
    dl = np.empty(cap)
    left = np.empty(cap, np.int64)
    dep = np.empty(cap, np.int64)
    cst = np.empty((cap, 5))
    stack = np.empty(2 * maxdepth + 8, np.int64)
    u = 0.0
    nsteps = 0
    while u < umax and alive > 0:
        wa[0] = 0.0
        wb[0] = sk * np.sqrt(du) * rng.standard_normal() - rho * du
        dl[0] = du
        dep[0] = 0
        _split(0, 1, rng, sk, wa, wb, dl, left, dep, cst)
        nn = 3
        j = 0
        while True:
            j, nn, done = _sweep(j, nn, rng, sk, du, x, e, out, wa, wb, dl, left, dep, cst,
                                 stack, eps0 * eps0, rinf * rinf, eps1 * eps1, maxdepth, cref,
                                 side_mode, epsa, rfar, dnear)
            alive -= done
            if j >= n:
                break
            cap, wa, wb, dl, left, dep, cst = _grow(cap, wa, wb, dl, left, dep, cst)
        u += du
        nsteps += 1
    return out, nsteps, x


@njit(cache=True)
def renorm_hit(rng, kappa, du, shrink, maxsteps, probe, jump):
    """First hit of [1, inf) by the trace, read off a renormalized chain for point 1.

    The chain is run until the marker scale Y has collapsed by e^-shrink
    from its running maximum; the hit location is the preimage of the real
    probe point under the recorded steps.  Steps whose scale factor drops
    below `jump` are bisected with Brownian bridge samples.
    Returns (location, steps, flag) with flag 1 if maxsteps was reached.
    """
    sk = np.sqrt(kappa)
    cap = 4096
    xs = np.empty(cap)
    ms = np.empty(cap)
    ys = np.empty(cap)
    ds = np.empty(cap)
    logy = 0.0
    logmax = 0.0
    k = 0
    sd = np.empty(256)
    sx = np.empty(256)
    flag = 0
    while True:
        sd[0] = du
        sx[0] = sk * np.sqrt(du) * rng.standard_normal()
        sp = 1
        while sp > 0:
            sp -= 1
            d = sd[sp]
            xi = sx[sp]
            wm = 0.5 * xi + sk * np.sqrt(0.25 * d) * rng.standard_normal()
            yp = wm + np.sqrt((1.0 - wm) ** 2 + 4.0 * d) - xi
            if yp < jump and sp < 250:
                # later half first on the stack so the earlier half runs next
                sd[sp] = 0.5 * d
                sx[sp] = xi - wm
                sd[sp + 1] = 0.5 * d
                sx[sp + 1] = wm
                sp += 2
                continue
            if k == cap:
                cap2 = 2 * cap
                a2 = np.empty(cap2)
                b2 = np.empty(cap2)
                c2 = np.empty(cap2)
                d2 = np.empty(cap2)
                a2[:cap] = xs
                b2[:cap] = ms
                c2[:cap] = ys
                d2[:cap] = ds
                xs, ms, ys, ds = a2, b2, c2, d2
                cap = cap2
            xs[k] = xi
            ms[k] = wm
            ys[k] = yp
            ds[k] = d
            k += 1
            logy += np.log(yp)
            if logy > logmax:
                logmax = logy
        if logy < logmax - shrink:
            break
        if k >= maxsteps:
            flag = 1
            break
    h = probe + 0j
    for i in range(k - 1, -1, -1):
        h = ys[i] * h + xs[i]
        dd = h - ms[i]
        h = ms[i] + csqrt_up(dd * dd - 4.0 * ds[i], dd)
    return h.real, k, flag


@njit(cache=True)
def _w_of(ell):
    # exp(i pi) carries a 1e-16 imaginary residue; keep the real line exactly real
    if ell.imag == np.pi:
        return complex(1.0 - np.exp(ell.real), 0.0)
    if ell.imag == 0.0:
        return complex(1.0 + np.exp(ell.real), 0.0)
    return 1.0 + np.exp(ell)


@njit(cache=True)
def _flow_drift(ell, kappa):
    return 0.5 * kappa - 2.0 - 2.0 / _w_of(ell)


@njit(cache=True)
def _flow_heun(ell, kappa, h, db):
    b0 = _flow_drift(ell, kappa)
    pred = ell + b0 * h + db
    return ell + 0.5 * (b0 + _flow_drift(pred, kappa)) * h + db


@njit(cache=True)
def flow_sde_classify(rng, kappa, du, w0, umax, eps0, rinf, eps1):
    """Simulate the autonomous SDE of the normalized point directly.

    Works in ell = log(w - 1), where the noise is additive and real:
    d ell = (kappa/2 - 2 - 2/w) du + dB, B of variance kappa.
    Heun predictor-corrector with step du * min(1, |w|^2).
    Returns (outcome, elapsed time).
    """
    if w0 == 1.0:
        return SIMULTANEOUS, 0.0
    ell = np.log(w0 - 1.0 + 0j)
    sk = np.sqrt(kappa)
    u = 0.0
    while u < umax:
        w = _w_of(ell)
        aw = abs(w)
        if aw < eps0:
            return Z_FIRST, u
        if aw > rinf:
            return ONE_FIRST, u
        if ell.real < np.log(eps1):
            return SIMULTANEOUS, u
        h = du * min(1.0, aw * aw)
        ell = _flow_heun(ell, kappa, h, sk * np.sqrt(h) * rng.standard_normal())
        u += h
    return UNDECIDED, u


@njit(cache=True)
def flow_sde_path(rng, kappa, du, w0, nsteps):
    """Fixed-step trajectory of the normalized point, for audits."""
    out = np.empty(nsteps + 1, np.complex128)
    out[0] = w0
    if w0 == 1.0:
        out[:] = w0
        return out
    ell = np.log(w0 - 1.0 + 0j)
    sk = np.sqrt(kappa)
    for k in range(nsteps):
        ell = _flow_heun(ell, kappa, du, sk * np.sqrt(du) * rng.standard_normal())
        out[k + 1] = _w_of(ell)
    return out


@njit(cache=True)
def slit_evolve(w, dt, z, nsteps, eps_sw, use_rules):
    """Absolute-time chain with piecewise-constant midpoint driving.

    Returns final images and the swallow step per point (-1 if alive).
    An interior point is swallowed when it lies within reach of the step's
    slit, |g - m| <= 2 sqrt(dt) + eps_sw with m the step's driving value;
    a real point when g - W changes sign across the step.
    """
    n = z.shape[0]
    g = z.copy()
    step = np.full(n, -1, np.int64)
    rad = 2.0 * np.sqrt(dt) + eps_sw
    for k in range(nsteps):
        m = 0.5 * (w[k] + w[k + 1])
        for j in range(n):
            if step[j] >= 0:
                continue
            gj = g[j]
            dd = gj - m
            gn = m + csqrt_up(dd * dd + 4.0 * dt, dd)
            if use_rules:
                if gj.imag == 0.0:
                    hit = (gj.real - w[k]) * (gn.real - w[k + 1]) < 0.0
                else:
                    hit = abs(dd) <= rad
                if hit:
                    step[j] = k + 1
            g[j] = gn
    return g, step


@njit(cache=True)
def slit_trace(w, dt, k):
    """gamma(t_k) by composing inverse slit maps backward from the driving value."""
    if k == 0:
        return w[0] + 0j
    h = 0.5 * (w[k - 1] + w[k]) + 0j
    for i in range(k - 1, -1, -1):
        m = 0.5 * (w[i] + w[i + 1])
        dd = h - m
        h = m + csqrt_up(dd * dd - 4.0 * dt, dd)
    return h


@njit(cache=True, inline="always")
def _radial_rhs(g, xi):
    return -g * (g + xi) / (g - xi)


@njit(cache=True)
def _radial_step(g, xi, dt, hfrac):
    # halve the step until it is small against |g - xi|^2
    nsub = 1
    gap = abs(g - xi)
    while nsub < 65536 and dt / nsub > hfrac * gap * gap:
        nsub *= 2
    h = dt / nsub
    for _ in range(nsub):
        k1 = _radial_rhs(g, xi)
        k2 = _radial_rhs(g + 0.5 * h * k1, xi)
        k3 = _radial_rhs(g + 0.5 * h * k2, xi)
        k4 = _radial_rhs(g + h * k3, xi)
        g = g + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return g


@njit(cache=True)
def radial_evolve(phase, dt, z, nsteps, eps_rad, hfrac):
    """Radial chain with driving exp(i * phase), midpoint phase per step.

    Returns (image, swallow step or -1, monotone flag)."""
    g = z
    monotone = True
    for k in range(nsteps):
        xi = np.exp(1j * 0.5 * (phase[k] + phase[k + 1]))
        if abs(g - xi) < eps_rad:
            return g, k, monotone
        gn = _radial_step(g, xi, dt, hfrac)
        if abs(gn) < abs(g) * (1.0 - 1e-12):
            monotone = False
        g = gn
    return g, -1, monotone


@njit(cache=True)
def radial_stopped_martingale(phase, dt, z, checkpoints, r_stop, hfrac):
    """Values of 1/(g/xi - 1) at checkpoint steps, frozen once |g/xi - 1| < r_stop."""
    out = np.empty(checkpoints.shape[0], np.complex128)
    g = z
    stopped = False
    c = 0
    gt = g
    for k in range(checkpoints[-1] + 1):
        if not stopped:
            gt = g * np.exp(-1j * phase[k])
            if abs(gt - 1.0) < r_stop:
                stopped = True
        while c < checkpoints.shape[0] and checkpoints[c] == k:
            out[c] = 1.0 / (gt - 1.0)
            c += 1
        if k == checkpoints[-1]:
            break
        if not stopped:
            xi = np.exp(1j * 0.5 * (phase[k] + phase[k + 1]))
            g = _radial_step(g, xi, dt, hfrac)
    return out

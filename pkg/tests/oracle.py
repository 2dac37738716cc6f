"""Independent high-precision re-derivation of the four-intensity estimator chain.

Written directly from the closed forms with mpmath so that it shares no code
with the package. Used to check the package values to near machine precision.
"""

import mpmath as mp

mp.mp.dps = 40


def counts(cfg, sys):
    eta = mp.mpf(sys.eta_b) * mp.power(10, -mp.mpf(sys.alpha) * sys.length_km / 10)
    pdc, pap, emis, N = (mp.mpf(x) for x in (sys.p_dc, sys.p_ap, sys.e_mis, sys.n_pulses))

    def one(k, w):
        D = 1 - (1 - 2 * pdc) * mp.e ** (-eta * k)
        n = N * w * D * (1 + pap)
        m = N * w * (pdc + emis * (1 - mp.e ** (-eta * k)) + pap * D / 2)
        return n, m

    pz = mp.mpf(cfg.p_z_bob)
    px = 1 - pz
    pzw = mp.mpf(cfg.p_z_given_omega)
    out = {}
    out["z_mu"] = one(cfg.mu, cfg.p_mu * pz)
    out["z_v1"] = one(cfg.v1, cfg.p_v1 * pz)
    out["z_w"] = one(cfg.omega, cfg.p_omega * pzw * pz)
    out["x_v2"] = one(cfg.v2, cfg.p_v2 * px)
    out["x_w"] = one(cfg.omega, cfg.p_omega * (1 - pzw) * px)
    return out


def chain(cfg, c, N, eps, terms=17, factor=1):
    """Return (s_z0, s_z1, s_x1, v_x1, e1) for counts ``c`` from :func:`counts`."""
    mu, v1, v2, w = (mp.mpf(x) for x in (cfg.mu, cfg.v1, cfg.v2, cfg.omega))
    pzw = mp.mpf(cfg.p_z_given_omega)
    eps, terms = mp.mpf(eps), mp.mpf(terms)
    nz = c["z_mu"][0] + c["z_v1"][0] + c["z_w"][0]
    mx = c["x_v2"][1] + c["x_w"][1]
    dn = mp.sqrt(nz / 2 * mp.log(terms / eps))
    dm = mp.sqrt(mx / 2 * mp.log(terms / eps))

    def scaled(val, k, p, d):
        return mp.e**k / p * (val + d)

    tz = [(mu, cfg.p_mu), (v1, cfg.p_v1), (w, cfg.p_omega * pzw)]
    tx = [(v2, cfg.p_v2), (w, cfg.p_omega * (1 - pzw))]

    def tau(ts, i):
        return sum(p * mp.e ** (-k) * k**i / mp.factorial(i) for k, p in ts)

    n_w_lo = max(scaled(c["z_w"][0], w, cfg.p_omega * pzw, -dn), 0)
    n_w_hi = scaled(c["z_w"][0], w, cfg.p_omega * pzw, dn)
    n_v_lo = max(scaled(c["z_v1"][0], v1, cfg.p_v1, -dn), 0)
    n_v_hi = scaled(c["z_v1"][0], v1, cfg.p_v1, dn)
    n_mu_hi = scaled(c["z_mu"][0], mu, cfg.p_mu, dn)
    t0, t1 = tau(tz, 0), tau(tz, 1)
    s0 = max(t0 * (v1 * n_w_lo - w * n_v_hi) / (v1 - w), 0)
    s1 = (
        t1 * mu / (mu * (v1 - w) - v1**2 + w**2)
        * (n_v_lo - n_w_hi - (v1**2 - w**2) / mu**2 * (n_mu_hi - s0 / t0))
    )

    n1z = N * t1 * cfg.p_z_bob
    n1x = N * tau(tx, 1) * (1 - mp.mpf(cfg.p_z_bob))
    z = s1 / n1z
    x, y = n1x, n1z
    C = mp.e ** (1 / (8 * (x + y)) + 1 / (12 * y) - 1 / (12 * y * z + 1) - 1 / (12 * y * (1 - z) + 1))
    arg = mp.sqrt(x + y) * C / (mp.sqrt(2 * mp.pi * x * y * z * (1 - z)) * eps / terms)
    g = mp.sqrt(2 * (x + y) * z * (1 - z) / (x * y) * mp.log(arg, 2))
    sx1 = n1x * z - factor * n1x * g

    m_v_hi = scaled(c["x_v2"][1], v2, cfg.p_v2, dm)
    m_w_lo = max(scaled(c["x_w"][1], w, cfg.p_omega * (1 - pzw), -dm), 0)
    vx1 = tau(tx, 1) * (m_v_hi - m_w_lo) / (v2 - w)

    b = vx1 / sx1
    a = eps / terms
    cc, d = sx1, s1
    gamma = mp.sqrt(
        (cc + d) * (1 - b) * b / (cc * d * mp.log(2))
        * mp.log((cc + d) / (cc * d * (1 - b) * b * a**2), 2)
    )
    return s0, s1, sx1, vx1, min(b + gamma, mp.mpf(1) / 2)

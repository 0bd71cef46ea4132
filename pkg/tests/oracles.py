"""Independent closed-form oracles used by the tests.

Nothing here imports the package under test.
"""

import math


def single_ubi_impact(t0, tau, v_init=15.0, v_max=15.0, a_b_min=1.0, a_b_max=8.0, a_max=1.0,
                      ds=5.0):
    """Impact speed of one braking interruption ``[t0, t0 + tau)`` on the nominal profile.

    Before ``t0`` the vehicle brakes at ``a_b_min``; during the interruption it
    accelerates at ``a_max`` up to ``v_max``; afterwards the policy either
    brakes at the (self-consistent, constant) required level and stops short,
    or saturates at ``a_b_max``.  Returns ``None`` without contact.
    """
    s_pov = v_init ** 2 / (2 * a_b_min) + ds
    v0 = v_init - a_b_min * t0
    s0 = v_init * t0 - a_b_min * t0 * t0 / 2
    if v0 <= 0:
        return None
    t_acc = min(tau, (v_max - v0) / a_max)
    v1 = v0 + a_max * t_acc
    s1 = s0 + v0 * t_acc + a_max * t_acc ** 2 / 2
    if s1 >= s_pov:
        x = (-v0 + math.sqrt(v0 * v0 + 2 * a_max * (s_pov - s0))) / a_max
        return v0 + a_max * x
    s1 += v1 * (tau - t_acc)
    if s1 >= s_pov:
        return v1
    d = s_pov - s1
    if d > ds and v1 * v1 / (2 * (d - ds)) < a_b_max:
        return None
    w = v1 * v1 - 2 * a_b_max * d
    return math.sqrt(w) if w > 0 else None


def worst_single_ubi(tau, n=15001, t_end=15.0, **kw):
    best = None
    for i in range(n):
        v = single_ubi_impact(t_end * i / (n - 1), tau, **kw)
        if v is not None and (best is None or v > best):
            best = v
    return best


def binomial_tail_exact(p, n, k):
    """Upper binomial tail with exact rational arithmetic."""
    from fractions import Fraction
    q = Fraction(p)
    total = sum(math.comb(n, j) * q ** j * (1 - q) ** (n - j) for j in range(k, n + 1))
    return float(total)

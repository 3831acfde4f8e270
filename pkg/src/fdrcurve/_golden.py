import math

INV_PHI = (math.sqrt(5) - 1) / 2


def golden_section_max(f, lo, hi, rtol=1e-9, max_iter=200):
    """Maximize a unimodal ``f`` on ``[lo, hi]``; returns ``(argmax, max)``.

    The endpoints are evaluated too, so a maximum sitting on the boundary of
    the bracket is not missed.
    """
    x1 = hi - INV_PHI * (hi - lo)
    x2 = lo + INV_PHI * (hi - lo)
    f1, f2 = f(x1), f(x2)
    for _ in range(max_iter):
        if abs(hi - lo) <= rtol * max(1.0, abs(lo), abs(hi)):
            break
        if f1 < f2:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + INV_PHI * (hi - lo)
            f2 = f(x2)
        else:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - INV_PHI * (hi - lo)
            f1 = f(x1)
    best = max((f1, x1), (f2, x2), (f(lo), lo), (f(hi), hi), key=lambda t: -math.inf if math.isnan(t[0]) else t[0])
    return best[1], best[0]

import math

from .metamodel import ConfidenceSet

GUARD = 1e-12


def quadratic_inequality_set(A, B, C, level, scales=None):
    """Solution set of ``A x**2 + B x + C < 0`` as a :class:`ConfidenceSet`.

    ``scales`` gives the magnitudes of the terms each coefficient was formed
    from; a coefficient smaller than ``GUARD`` times its scale is treated as
    zero, as is a discriminant that small relative to ``B**2`` and ``4AC``.
    """
    sA, sB, sC = scales if scales is not None else (abs(A), abs(B), abs(C))
    if abs(A) <= GUARD * sA:
        A = 0.0
    if abs(B) <= GUARD * sB:
        B = 0.0
    if abs(C) <= GUARD * sC:
        C = 0.0

    if A == 0.0:
        if B == 0.0:
            return ConfidenceSet("full_line" if C < 0 else "empty", (), level)
        root = -C / B
        bounds = (-math.inf, root) if B > 0 else (root, math.inf)
        return ConfidenceSet("interval", (float(bounds[0]), float(bounds[1])), level)

    disc = B * B - 4.0 * A * C
    if abs(disc) <= GUARD * max(B * B, abs(4.0 * A * C)):
        disc = 0.0
    if disc <= 0.0:
        return ConfidenceSet("empty" if A > 0 else "full_line", (), level)

    sq = math.sqrt(disc)
    # numerically stable pair of roots
    q = -0.5 * (B + math.copysign(sq, B))
    r1, r2 = q / A, (C / q if q != 0 else -q / A)
    lo, hi = min(r1, r2), max(r1, r2)
    if not lo < hi:
        return ConfidenceSet("empty" if A > 0 else "full_line", (), level)
    return ConfidenceSet("interval" if A > 0 else "complement_of_interval", (float(lo), float(hi)), level)

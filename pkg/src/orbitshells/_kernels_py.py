"""Pure numpy versions of the coupling kernels (import-time fallback)."""
import numpy as np


def coupled_products(w, a1, a2, l3):
    """K[s1, s2, m3 + l3] = sum_{m1 + m2 + m3 = 0} w[m1, m2] a1[m1, s1] a2[m2, s2]."""
    n1, r1 = a1.shape
    n2, r2 = a2.shape
    l1, l2 = (n1 - 1) // 2, (n2 - 1) // 2
    out = np.zeros((r1, r2, 2 * l3 + 1), dtype=complex)
    for i1 in range(n1):
        m1 = i1 - l1
        lo, hi = max(-l2, -l3 - m1), min(l2, l3 - m1)
        if lo > hi:
            continue
        i2 = np.arange(lo + l2, hi + l2 + 1)
        c = -m1 - (i2 - l2) + l3
        weighted = w[i1, i2][:, None] * a2[i2]  # (n, r2)
        out[:, :, c] += a1[i1][:, None, None] * weighted.T[None, :, :]
    return out


def coupled_products_compensated(w, a1, a2, l3):
    """Same as :func:`coupled_products` with Kahan summation over (m1, m2)
    taken in lexicographic order."""
    n1, r1 = a1.shape
    n2, r2 = a2.shape
    l1, l2 = (n1 - 1) // 2, (n2 - 1) // 2
    total = np.zeros((2 * l3 + 1, r1, r2), dtype=complex)
    comp = np.zeros_like(total)
    for i1 in range(n1):
        m1 = i1 - l1
        for i2 in range(n2):
            m2 = i2 - l2
            c = -m1 - m2 + l3
            if not 0 <= c <= 2 * l3 or w[i1, i2] == 0.0:
                continue
            y = w[i1, i2] * np.multiply.outer(a1[i1], a2[i2]) - comp[c]
            t = total[c] + y
            comp[c] = (t - total[c]) - y
            total[c] = t
    return np.ascontiguousarray(total.transpose(1, 2, 0))


def contract_third(k, a3):
    return np.einsum("ijc,ck->ijk", k, a3)

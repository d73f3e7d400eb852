"""Arbitrary-precision reference values for the closed-form bounds.

Evaluates each formula directly with mpmath (50 digits); the printed values are
frozen into tests/test_bounds.cpp. Independent of the C++ implementation.
"""
from mpmath import mp, mpf, log, sqrt, e, exp

mp.dps = 50


def cnp(n, p, nu0, C):
    n, p = mpf(n), mpf(p)
    return C * nu0**2 * p * log(n * p) ** mpf(1.5) / sqrt(n) + 5 * nu0**3 * p ** mpf(1.5) * log(n * p) * log(2 * n) / sqrt(n)


def wlt(L, mu2, mu3, mu4, mu2L, n, S, C):
    L = mpf(L)
    return sqrt(S) * (C * L ** mpf(1.5) / log(L) * (sqrt(mu4) + mu2L ** (1 / L))
                      + sqrt(2) * sqrt(e) * sqrt(L) * mu2 / sqrt(n)
                      + sqrt(e) * L * mu3 * log(2 * n) / 2)


def wlt_subg(L, n, p, nu0, S, C):
    L, n, p = mpf(L), mpf(n), mpf(p)
    return (C * L ** mpf(1.5) * nu0**2 * sqrt(S) / log(L) * (p / sqrt(n) + L / n ** (1 - 1 / L))
            + 5 * L * nu0**3 * p ** mpf(1.5) * sqrt(S) * log(2 * n) / sqrt(n))


def final(n, p, nu0, su, sl, lam, C):
    n, p = mpf(n), mpf(p)
    b = C * (nu0**3 * (su / sl) * log(n * p) ** 2 / sqrt(n)
             + nu0**3 * (su**2 / lam) * log(n * p) ** mpf(2.5) * log(n) / sqrt(n))
    d = C * e * su * log(n * p) ** mpf(1.5) * nu0**3 / sqrt(n)
    return b, d


print("cnp(3,1)            ", cnp(3, 1, 1, 1))
print("tail(100,4,t=2)     ", cnp(100, 4, 1, 1) * exp(mpf(2) / log(400)))
print("wlt(L=e,...)        ", wlt(e, 1, 1, 1, 1, 2, 1, 1))
print("wlt_subg(L=e,n=4)   ", wlt_subg(e, 4, 1, 1, 1, 1))
print("wlt_subg ratio L=2  ", wlt_subg(2, 10**6, 1, 1, 1, 1) / wlt_subg(2, 10**4, 1, 1, 1, 1))
print("final(3,1)          ", *final(3, 1, 1, 1, 1, 1, 1))
print("quantile p=1 g=4 x=4", sqrt(1 + 2 * sqrt(4) + 8))
print("moment p=3 k=2      ", 4 * (sqrt(3) + 2) ** 2)
print("moment p=1 k=4      ", 4 * (1 + sqrt(8)) ** 4)
print("corollary 8e        ", 8 * e)

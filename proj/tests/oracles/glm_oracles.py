"""Independent reference values frozen into the unit tests.

Run with: python3 tests/oracles/glm_oracles.py
"""
import math

import numpy as np
import statsmodels.api as sm

np.set_printoptions(precision=17)


def wls_five_rows():
    x = np.array([[1, 0.5, 1.0], [1, 1.5, -0.5], [1, -0.7, 2.0], [1, 2.2, 0.3], [1, 0.1, -1.2]])
    y = np.array([1.3, 2.9, -0.4, 4.1, 0.6])
    s = np.array([1.0, 2.5, 0.7, 1.2, 3.0])
    beta = np.linalg.solve(x.T @ np.diag(s) @ x, x.T @ (s * y))
    print("wls5 beta", repr(beta))


def two_by_two():
    x = np.array([0.5, 1.2, -0.3, 2.0, 1.1, -1.0, 0.4, 0.9])
    y = np.array([1.0, 2.1, 0.2, 3.5, 1.9, -0.8, 1.0, 1.4])
    s = np.array([1.0, 2.0, 1.5, 0.5, 1.0, 1.0, 2.0, 0.8])
    strata = [0, 0, 0, 0, 1, 1, 1, 1]
    units = [0, 0, 1, 1, 2, 2, 3, 3]
    X = np.column_stack([np.ones(8), x])
    A = X.T @ np.diag(s) @ X
    beta = np.linalg.solve(A, X.T @ (s * y))
    r = y - X @ beta
    u = (s * r)[:, None] * X
    z = {}
    for k in range(8):
        z.setdefault((strata[k], units[k]), np.zeros(2))
        z[(strata[k], units[k])] += u[k]
    G = np.zeros((2, 2))
    for h in (0, 1):
        zs = [v for (hh, _), v in sorted(z.items()) if hh == h]
        zbar = sum(zs) / len(zs)
        n_h = len(zs)
        for v in zs:
            G += n_h / (n_h - 1) * np.outer(v - zbar, v - zbar)
    Ainv = np.linalg.inv(A)
    cov = Ainv @ G @ Ainv
    print("2x2 beta", repr(beta))
    print("2x2 cov", repr(cov.ravel()))


def logistic_fit():
    x = np.array([-1.5, -0.8, -0.3, 0.1, 0.4, 0.9, 1.3, 2.0, -0.1, 0.7])
    y = np.array([0, 0, 1, 0, 1, 0, 1, 1, 0, 1])
    s = np.array([1.0, 0.5, 2.0, 1.5, 1.0, 0.8, 1.2, 1.0, 2.0, 0.6])
    X = sm.add_constant(x)
    fit = sm.GLM(y, X, family=sm.families.Binomial(), var_weights=s).fit(tol=1e-14)
    print("logit beta", repr(fit.params))


def bic_toy():
    # M=1 intercept-only CBP model on four subjects.
    y = np.array([[1.2, 2.5], [0.4, 1.0], [1.9, 2.2], [0.7, 1.6]])
    s = np.array([1.0, 2.0, 0.5, 1.5])
    w0 = np.array([1.0, 2.0])
    sigma2 = np.array([2.0, 0.5])
    r = y - w0
    n = 4
    loglik = -np.sum(s / 2 * np.sum(r * r / sigma2, axis=1)) - (1 + n) * math.log(sigma2.prod())
    k = 1 + 1 + 2 + 2  # one center, one d, two intercepts, two variances
    print("bic toy loglik", repr(loglik), "bic", repr(k * math.log(n) - 2 * loglik))


if __name__ == "__main__":
    wls_five_rows()
    two_by_two()
    logistic_fit()
    bic_toy()
    print("softmax", repr(1 / (1 + math.exp(-1))), repr(math.exp(-1) / (1 + math.exp(-1))))
    print("entropy", repr(-(0.9 * math.log2(0.9) + 0.1 * math.log2(0.1))))
    print("p(1.959964)", repr(math.erfc(1.959964 / math.sqrt(2))))

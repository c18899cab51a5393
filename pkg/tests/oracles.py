"""Independent reference computations used by the sampler tests.

Nothing here calls into the sampler's own math: oracles are built from
direct density evaluation on grids, basic linear algebra, scipy reference
distributions, or brute-force quadratic-form extraction.
"""

import numpy as np


def ks_against_grid(samples, grid_x, grid_pdf):
    """KS distance between an empirical sample and a gridded density."""
    w = np.gradient(grid_x)
    cdf = np.cumsum(grid_pdf * w)
    cdf /= cdf[-1]
    s = np.sort(np.asarray(samples, dtype=float))
    emp = np.searchsorted(s, grid_x, side="right") / s.size
    return float(np.max(np.abs(emp - cdf)))


def loglambda_2day_grid(mu1, sigma2_1, b2, alpha, sigma2, y1, w1, z, theta,
                        lambda_tilde, preferential, lo=-4.0, hi=6.0, m=401):
    """Exact marginals of the 2-day latent posterior on a grid.

    Day 1 is observed with count y1 at effort w1; day 2 is unobserved.  Both
    days contribute an augmentation term in the preferential variant.
    """
    g = np.linspace(lo, hi, m)
    l1 = g[:, None]
    l2 = g[None, :]
    lp = -((l1 - mu1) ** 2) / (2.0 * sigma2_1)
    lp = lp - ((l2 - b2 - alpha * l1) ** 2) / (2.0 * sigma2)
    lp = lp + y1 * l1 - w1 * np.exp(l1)
    if preferential:
        t0, t1 = theta
        d1 = (np.exp(l1) >= lambda_tilde).astype(float)
        d2 = (np.exp(l2) >= lambda_tilde).astype(float)
        lp = lp - 0.5 * (z[0] - t0 - t1 * d1) ** 2
        lp = lp - 0.5 * (z[1] - t0 - t1 * d2) ** 2
    dens = np.exp(lp - lp.max())
    w = g[1] - g[0]
    joint = dens / (dens.sum() * w * w)
    return g, joint.sum(axis=1) * w, joint.sum(axis=0) * w


def lambda_tilde_grid(totals, z, theta, alpha_lambda, beta_lambda,
                      lo=1e-6, hi=40.0, m=80_001):
    """Exact conditional density of the threshold on a grid."""
    g = np.linspace(lo, hi, m)
    t0, t1 = theta
    lp = (alpha_lambda - 1.0) * np.log(g) - beta_lambda * g
    for tot, zi in zip(totals, z):
        d = (tot >= g).astype(float)
        lp = lp - 0.5 * (zi - t0 - t1 * d) ** 2
    dens = np.exp(lp - lp.max())
    dens /= np.trapezoid(dens, g)
    return g, dens


def quadratic_form_minimizer(g, dim):
    """Mean and covariance of exp(-g(u)) for a quadratic g, extracted
    numerically from evaluations only (no analytic structure assumed)."""
    g0 = g(np.zeros(dim))
    grad = np.empty(dim)
    hess = np.empty((dim, dim))
    eye = np.eye(dim)
    for i in range(dim):
        gp = g(eye[i])
        gm = g(-eye[i])
        grad[i] = (gp - gm) / 2.0
        hess[i, i] = gp + gm - 2.0 * g0
    for i in range(dim):
        for j in range(i + 1, dim):
            gij = g(eye[i] + eye[j])
            hess[i, j] = hess[j, i] = gij - g0 - grad[i] - grad[j] \
                - 0.5 * hess[i, i] - 0.5 * hess[j, j]
    mean = np.linalg.solve(hess, -grad)
    cov = np.linalg.inv(hess)
    return mean, cov


def ar_bridge_mean(eta_a, eta_b, alpha, sigma2, m):
    """Conditional mean of the interior anomalies given both ends, obtained
    by quadratic-form extraction from the transition sum (m = gap length)."""

    def neg_loglik(u):
        path = np.concatenate(([eta_a], u, [eta_b]))
        resid = path[1:] - alpha * path[:-1]
        return float(np.sum(resid ** 2) / (2.0 * sigma2))

    mean, _ = quadratic_form_minimizer(neg_loglik, m - 1)
    return mean

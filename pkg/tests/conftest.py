"""Shared builders and independent oracles.

The oracle functions below re-derive the density, log-likelihood, and
flat parameter layout from scratch (plain loops, inv/det instead of
Cholesky plus log-sum-exp) so tests do not lean on the code under test.
"""

import numpy as np

from gemgmm import GmmParams


def make_params(rng, k, m, spread=2.0):
    """Random valid mixture parameters."""
    w = rng.uniform(0.2, 1.0, size=k)
    w = w / w.sum()
    means = rng.normal(0.0, spread, size=(k, m))
    covs = np.empty((k, m, m))
    for j in range(k):
        a = rng.normal(0.0, 1.0, size=(m, m))
        covs[j] = a @ a.T + m * np.eye(m)
    return GmmParams(w, means, covs)


def make_dataset(rng, n, m, spread=2.0):
    return rng.normal(0.0, spread, size=(n, m))


def naive_component_density(weight, mean, cov, x):
    d = np.asarray(x, dtype=float) - np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    quad = d @ np.linalg.inv(cov) @ d
    norm = np.sqrt(np.linalg.det(2.0 * np.pi * cov))
    return float(weight) * np.exp(-0.5 * quad) / norm


def naive_loglik(weights, means, covs, x):
    """Brute-force sum of logs of weighted component densities.

    Covariances are not assumed symmetric, so this also serves as the
    reference for raw-coordinate finite differences.
    """
    total = 0.0
    for row in np.atleast_2d(np.asarray(x, dtype=float)):
        mix = 0.0
        for j in range(len(weights)):
            mix += naive_component_density(weights[j], means[j], covs[j], row)
        total += np.log(mix)
    return total


def naive_responsibilities(params, x):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    k = params.n_components
    h = np.empty((x.shape[0], k))
    for t, row in enumerate(x):
        vals = [naive_component_density(params.weights[j], params.means[j],
                                        params.covs[j], row) for j in range(k)]
        h[t] = np.array(vals) / sum(vals)
    return h


def theta_split(theta, k, m):
    """Unpack a flat vector: weights, means, column-stacked covariances.

    Deliberately re-derives the layout instead of calling the package.
    """
    theta = np.asarray(theta, dtype=float)
    w = theta[:k]
    means = theta[k:k + k * m].reshape(k, m)
    covs = np.empty((k, m, m))
    for j in range(k):
        start = k + k * m + j * m * m
        block = theta[start:start + m * m]
        for q in range(m * m):
            covs[j, q % m, q // m] = block[q]
    return w, means, covs


def fd_loglik_gradient(params, x, step=1e-6):
    """Central finite differences of the raw-coordinate log-likelihood."""
    k, m = params.n_components, params.n_features
    theta = params.to_vector()
    grad = np.empty(theta.size)
    for i in range(theta.size):
        up, dn = theta.copy(), theta.copy()
        up[i] += step
        dn[i] -= step
        grad[i] = (naive_loglik(*theta_split(up, k, m), x)
                   - naive_loglik(*theta_split(dn, k, m), x)) / (2.0 * step)
    return grad


def align_means(means, target):
    """Max per-coordinate error of ``means`` against ``target`` up to
    swapping the two rows."""
    direct = np.abs(means - target).max()
    swapped = np.abs(means - target[::-1]).max()
    return min(direct, swapped)

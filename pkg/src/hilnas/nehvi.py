"""Monte-Carlo noisy expected hypervolume improvement for (loss, latency).

The quality posterior is sampled jointly at the already-observed points and at
the candidates, so each sample carries its own noisy baseline front. A
candidate's score is its hypervolume gain over that baseline, averaged over
samples. Batches are built greedily: each pick is appended to every sample's
baseline before the next one is scored.
"""

from __future__ import annotations

import warnings

import numpy as np
from scipy.stats import norm, qmc

from .pareto import _staircase, hv_improvement
from .space import featurize as default_featurize


def normal_base_samples(n_samples: int, dims: int, seed: int) -> np.ndarray:
    """Quasi-random standard normals (scrambled Sobol pushed through the inverse CDF)."""
    if dims == 0:
        return np.zeros((n_samples, 0))
    if dims <= 21201:
        eng = qmc.Sobol(dims, scramble=True, rng=np.random.default_rng(seed))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            u = eng.random(n_samples)
        return norm.ppf(np.clip(u, 1e-12, 1 - 1e-12))
    return np.random.default_rng(seed).standard_normal((n_samples, dims))


def _psd_sqrt(cov: np.ndarray) -> np.ndarray:
    """A with A @ A.T == cov (negative eigenvalues from round-off clipped to 0)."""
    w, V = np.linalg.eigh(0.5 * (cov + cov.T))
    return V * np.sqrt(np.clip(w, 0.0, None))


def sample_posterior(mean, cov, n_samples: int, seed: int) -> np.ndarray:
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    if not np.any(cov):
        return np.broadcast_to(mean, (n_samples, mean.size)).copy()
    z = normal_base_samples(n_samples, mean.size, seed)
    return mean[None, :] + z @ _psd_sqrt(cov).T


def expected_hvi(obs_samples: np.ndarray, cand_samples: np.ndarray, ref) -> np.ndarray:
    """Mean exclusive HV gain per candidate.

    ``obs_samples`` is (S, n_obs, 2) and ``cand_samples`` (S, n_cand, 2).
    """
    S = cand_samples.shape[0]
    total = np.zeros(cand_samples.shape[1])
    for s in range(S):
        total += hv_improvement(obs_samples[s], cand_samples[s], ref)
    return total / S


def greedy_batch(obs_samples, cand_samples, ref, q: int) -> tuple[list[int], list[float]]:
    """Pick ``q`` candidate indices by sequential conditioning; returns (indices, scores)."""
    S, n_cand, _ = cand_samples.shape
    if n_cand == 0:
        raise ValueError("no candidates to score")
    ref = np.asarray(ref, dtype=float)
    baselines = []
    for s in range(S):
        xs, ys = _staircase(obs_samples[s], ref)
        baselines.append(np.column_stack([xs, ys]))
    chosen, scores = [], []
    for _ in range(min(q, n_cand)):
        total = np.zeros(n_cand)
        for s in range(S):
            total += hv_improvement(baselines[s], cand_samples[s], ref)
        total /= S
        total[chosen] = -np.inf
        j = int(np.argmax(total))
        chosen.append(j)
        scores.append(float(total[j]))
        for s in range(S):
            xs, ys = _staircase(np.vstack([baselines[s], cand_samples[s, j]]), ref)
            baselines[s] = np.column_stack([xs, ys])
    return chosen, scores


def nehvi_acquire(gp_quality, latency_model, observed, ref, candidates, q: int, mc_samples: int = 256,
                  seed: int = 0, featurize=None, latency_samples: bool = False):
    """Select ``q`` of ``candidates`` (search points) by greedy MC NEHVI.

    ``gp_quality`` needs ``predict_joint(X)``; ``latency_model`` needs
    ``predict(X)`` and contributes its posterior mean only, unless
    ``latency_samples`` is set. ``observed`` are the points whose quality has
    been evaluated. Returns (chosen points, their acquisition values).
    """
    if not candidates:
        raise ValueError("empty candidate set")
    feat = featurize or default_featurize
    Xo = np.array([feat(p) for p in observed]).reshape(len(observed), -1)
    Xc = np.array([feat(p) for p in candidates])
    X = np.vstack([Xo, Xc]) if len(Xo) else Xc
    n_obs = len(Xo)
    qm, qc = gp_quality.predict_joint(X)
    qs = sample_posterior(qm, qc, mc_samples, seed)
    if latency_samples and hasattr(latency_model, "predict_joint"):
        lm, lc = latency_model.predict_joint(X)
        ls = sample_posterior(lm, lc, mc_samples, seed + 1)
    else:
        ls = np.broadcast_to(latency_model.predict(X)[0], qs.shape)
    samples = np.stack([qs, ls], axis=-1)  # (S, n, 2)
    idx, vals = greedy_batch(samples[:, :n_obs], samples[:, n_obs:], ref, q)
    return [candidates[i] for i in idx], vals

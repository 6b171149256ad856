"""Linear CKA between activations of the male and female disease classifiers."""

from __future__ import annotations

import numpy as np
import pandas as pd
from logzero import logger

from pathology.exceptions import AnalysisError
from pathology.Network.nnet import TAPS


def _centered(matrix, name):
    matrix = np.asarray(matrix, dtype=np.float64)
    matrix = matrix.reshape(matrix.shape[0], -1)
    centered = matrix - matrix.mean(axis=0)
    scale = max(float(np.abs(matrix).max(initial=0.0)), 1e-300)
    if float(np.abs(centered).max(initial=0.0)) <= 1e-12 * scale:
        raise AnalysisError(f"degenerate representation: {name} is constant across probes")
    return centered


def cka(X, Y):
    """Linear centered kernel alignment of two (n, d) feature matrices, in [0, 1]."""
    X = np.asarray(X)
    Y = np.asarray(Y)
    if X.shape[0] != Y.shape[0]:
        raise AnalysisError(f"feature matrices have {X.shape[0]} and {Y.shape[0]} rows")
    n = X.shape[0]
    if n < 3:
        raise AnalysisError(f"CKA needs at least 3 probes, got {n}")
    Xc = _centered(X, 'X')
    Yc = _centered(Y, 'Y')

    H = np.eye(n) - np.full((n, n), 1.0 / n)
    K = H @ (Xc @ Xc.T) @ H
    L = H @ (Yc @ Yc.T) @ H
    norm = np.linalg.norm(K) * np.linalg.norm(L)
    if norm == 0:
        raise AnalysisError("degenerate representation: zero Gram norm after centering")
    return float(np.clip(np.sum(K * L) / norm, 0.0, 1.0))


def tap_features(model, probes, batch_size=32):
    """Flattened activations of every tap, one row per probe."""
    collected = {tap: [] for tap in TAPS}
    for start in range(0, len(probes), batch_size):
        _, taps = model.forward(probes[start:start + batch_size].astype(np.float64), taps=True)
        for tap in TAPS:
            collected[tap].append(taps[tap].reshape(taps[tap].shape[0], -1))
    return {tap: np.concatenate(rows) for tap, rows in collected.items()}


def cka_profile(mp, fp, probes):
    """(tap, CKA) pairs in architectural order, both models fed the same probes."""
    probes = np.asarray(probes)
    if len(probes) < 3:
        raise AnalysisError(f"CKA profile needs at least 3 probes, got {len(probes)}")
    male = tap_features(mp, probes)
    female = tap_features(fp, probes)
    profile = [(tap, cka(male[tap], female[tap])) for tap in TAPS]
    logger.info("CKA " + ', '.join(f"{tap}={score:.3f}" for tap, score in profile))
    return profile


def select_probes(examples, cap=256, seed=42):
    """Pathological examples of both genders, at most `cap`, in key order."""
    sick = sorted((e for e in examples if e.label != 'HC'), key=lambda e: e.key)
    if len(sick) > cap:
        keep = np.sort(np.random.default_rng(seed).choice(len(sick), size=cap, replace=False))
        sick = [sick[i] for i in keep]
    return sick


def format_cka_series(profile):
    frame = pd.DataFrame(profile, columns=['layer', 'cka'])
    return frame.to_string(index=False, float_format=lambda v: f"{v:.4f}")

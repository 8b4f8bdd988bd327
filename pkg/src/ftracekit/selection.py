"""Feature ranking: chi-squared scores and forest importance."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import KTooLarge, NegativeFeature, PValueClampWarning, SingleClass
from .features import FeatureMatrix

_SMALLEST_POSITIVE = math.ulp(0.0)  # 5e-324


@dataclass(frozen=True)
class ScoredFeature:
    name: str
    score: float
    p_value: float


def _lower_gamma_series(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x) by series expansion."""
    term = 1.0 / a
    total = term
    n = 1
    while True:
        term *= x / (a + n)
        total += term
        if abs(term) < abs(total) * 1e-16 or n > 1000:
            break
        n += 1
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _upper_gamma_cf(a: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x) by continued fraction
    (modified Lentz)."""
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 1000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return h * math.exp(-x + a * math.log(x) - math.lgamma(a))


def chi2_survival(x: float, df: int) -> float:
    """Upper tail of the chi-squared distribution: Q(df/2, x/2)."""
    if x < 0:
        raise ValueError("chi2_survival requires x >= 0")
    if df < 1:
        raise ValueError("df must be a positive integer")
    if x == 0:
        return 1.0
    a = df / 2.0
    half = x / 2.0
    if half < a + 1.0:
        return min(max(1.0 - _lower_gamma_series(a, half), 0.0), 1.0)
    return min(max(_upper_gamma_cf(a, half), 0.0), 1.0)


def chi2_scores(m: FeatureMatrix, labels: np.ndarray) -> list[ScoredFeature]:
    """Score every column by the sum-based chi-squared statistic.

    observed_c = sum of the feature over rows of class c, expected_c =
    class frequency times the feature's total mass.  Zero-mass columns
    score 0 with p = 1.
    """
    X = m.X
    labels = np.asarray(labels)
    if np.any(X < 0):
        raise NegativeFeature("chi-squared needs nonnegative features; "
                              "apply minmax scaling first")
    classes = np.unique(labels)
    if classes.size < 2:
        raise SingleClass("need at least two classes")
    df = classes.size - 1

    n = X.shape[0]
    masks = np.vstack([(labels == c).astype(float) for c in classes])
    freqs = masks.sum(axis=1) / n                    # class frequency
    observed = masks @ X                             # classes x features
    totals = X.sum(axis=0)
    expected = np.outer(freqs, totals)
    with np.errstate(invalid="ignore", divide="ignore"):
        terms = (observed - expected) ** 2 / expected
    terms[:, totals == 0] = 0.0
    stats = terms.sum(axis=0)

    out: list[ScoredFeature] = []
    clamped = 0
    for name, score in zip(m.vocab.column_names, stats):
        score = float(score)
        if score == 0.0:
            p = 1.0
        else:
            p = chi2_survival(score, df)
            if p == 0.0:
                p = _SMALLEST_POSITIVE
                clamped += 1
        out.append(ScoredFeature(name=name, score=score, p_value=p))
    if clamped:
        warnings.warn(f"{clamped} p-values underflowed and were clamped to "
                      f"{_SMALLEST_POSITIVE!r}", PValueClampWarning)
    return out


def select_top_k(scores: list[ScoredFeature], k: int) -> list[str]:
    """Top-k names by descending score; ties broken lexicographically."""
    if k > len(scores):
        raise KTooLarge(f"k={k} exceeds {len(scores)} scored features")
    ordered = sorted(scores, key=lambda s: (-s.score, s.name))
    return [s.name for s in ordered[:k]]


def forest_importance(m: FeatureMatrix, labels, forest_params: dict,
                      seed: int = 0) -> list[ScoredFeature]:
    """Mean impurity decrease per feature over a fitted random forest,
    normalized to sum to 1.  p_value is 1 (not applicable)."""
    from . import learners  # local import to avoid a cycle

    labels = np.asarray(labels)
    if labels.dtype.kind in "UOS":
        # task names: rank with a multiclass forest over label indices
        classes = sorted(set(labels.tolist()))
        labels = np.array([classes.index(t) for t in labels])
    model = learners.train("forest", m.X, labels, forest_params, seed,
                           feature_names=m.vocab.column_names)
    imp = model.impl.feature_importances()
    return [ScoredFeature(name=n, score=float(v), p_value=1.0)
            for n, v in zip(m.vocab.column_names, imp)]


def write_scores_csv(scores: list[ScoredFeature], path) -> None:
    ordered = sorted(scores, key=lambda s: (-s.score, s.name))
    lines = ["name,score,p_value"]
    lines += [f"{s.name},{s.score:.9g},{s.p_value:.9g}" for s in ordered]
    Path(path).write_text("\n".join(lines) + "\n")

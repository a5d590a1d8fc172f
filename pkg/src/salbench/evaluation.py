"""Benchmark metrics: AUC, NSS, LCC, histogram matching, rank-sum testing.

All metric functions are pure. Saliency maps are compared against human
selection data: a smoothed per-vertex frequency field plus the raw
per-participant vertex sets it was built from.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import rankdata
from scipy.stats import t as student_t

from .geometry import SaliencyWarning, bounding_sphere, gaussian_smooth_field
from .models import MODEL_TAGS, SaliencyMap, compute_hs, minmax_normalize

DEFAULT_BINS = 256


@dataclass(frozen=True)
class GroundTruth:
    """Human selection data for one shape.

    field is the smoothed selection-frequency scalar (one value per vertex);
    participants holds each participant's set of selected vertex indices.
    """

    shape_id: str
    field: np.ndarray
    participants: Tuple[np.ndarray, ...]

    def __post_init__(self):
        f = np.asarray(self.field, dtype=np.float64)
        if f.ndim != 1 or len(f) == 0:
            raise ValueError("field must be a nonempty 1D array")
        if not np.all(np.isfinite(f)):
            raise ValueError("field must be finite")
        if len(self.participants) < 1:
            raise ValueError("need at least one participant")
        cleaned = []
        for sel in self.participants:
            idx = np.unique(np.asarray(sel, dtype=np.int64))
            if len(idx) and (idx[0] < 0 or idx[-1] >= len(f)):
                raise ValueError("selected vertex index out of range")
            cleaned.append(idx)
        f.setflags(write=False)
        object.__setattr__(self, "field", f)
        object.__setattr__(self, "participants", tuple(cleaned))

    @property
    def n_participants(self) -> int:
        return len(self.participants)

    def all_fixations(self) -> np.ndarray:
        """Union of every participant's selections."""
        if not self.participants:
            return np.zeros(0, dtype=np.int64)
        return np.unique(np.concatenate(self.participants))


@dataclass(frozen=True)
class MetricScores:
    shape_id: str
    model: str
    auc: float
    nss: float
    lcc: float

    def __post_init__(self):
        if self.model not in MODEL_TAGS:
            raise ValueError(f"unknown model tag {self.model!r}")
        if not 0.0 <= self.auc <= 1.0:
            raise ValueError("auc must lie in [0,1]")
        if not 0.0 <= self.lcc <= 1.0:
            raise ValueError("lcc must lie in [0,1]")
        if not math.isfinite(self.nss):
            raise ValueError("nss must be finite")


@dataclass(frozen=True)
class ClassSummary:
    class_name: str
    means: Dict[str, float]
    half_widths: Dict[str, float]

    def __post_init__(self):
        if set(self.means) != set(self.half_widths):
            raise ValueError("means and half_widths must cover the same models")
        if any(h < 0 for h in self.half_widths.values()):
            raise ValueError("confidence half-widths cannot be negative")


# ------------------------------------------------------- histogram matching --

def reference_histogram(fields: Sequence[np.ndarray], bins: int = DEFAULT_BINS) -> np.ndarray:
    """CDF of the average normalized histogram of the given [0,1] fields."""
    if bins < 2:
        raise ValueError("need at least 2 bins")
    fields = list(fields)
    if not fields:
        raise ValueError("need at least one ground-truth field")
    acc = np.zeros(bins)
    for f in fields:
        f = np.asarray(f, dtype=np.float64)
        hist, _ = np.histogram(np.clip(f, 0.0, 1.0), bins=bins, range=(0.0, 1.0))
        acc += hist / max(hist.sum(), 1)
    acc /= len(fields)
    cdf = np.cumsum(acc)
    return cdf / cdf[-1]


def _inverse_cdf(ref_cdf: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Linear-interpolated quantile function of a binned CDF over [0,1]."""
    bins = len(ref_cdf)
    edges = np.linspace(0.0, 1.0, bins + 1)
    # a tiny ramp keeps the abscissa strictly increasing through empty bins,
    # which makes the inverse strictly monotone (rank preservation is exact)
    xp = np.concatenate([[0.0], ref_cdf + np.arange(1, bins + 1) * 1e-12])
    return np.interp(q, xp, edges)


def histogram_match(smap: SaliencyMap, ref_cdf: np.ndarray) -> SaliencyMap:
    """Remap values so the map's distribution follows the reference CDF.

    Uses the map's exact empirical CDF (midranks), so the transform is
    strictly increasing across distinct values: ranks, and therefore AUC,
    are unchanged. A constant map has no usable CDF and collapses to the
    reference median.
    """
    vals = smap.values
    if vals.max() - vals.min() < 1e-12:
        warnings.warn("histogram matching a constant map: using reference median",
                      SaliencyWarning)
        out = np.full(len(vals), _inverse_cdf(ref_cdf, np.array([0.5]))[0])
    else:
        n = len(vals)
        order = np.sort(vals)
        lo = np.searchsorted(order, vals, side="left")
        hi = np.searchsorted(order, vals, side="right")
        q = (lo + hi) / (2.0 * n)
        out = _inverse_cdf(ref_cdf, q)
    return SaliencyMap(smap.shape_id, np.clip(out, 0.0, 1.0), smap.model, normalized=False)


# ------------------------------------------------------------------ metrics --

def _map_values(m) -> np.ndarray:
    return m.values if isinstance(m, SaliencyMap) else np.asarray(m, dtype=np.float64)


def roc_auc(smap, fixations: Iterable[int]) -> float:
    """Area under the ROC curve with fixation vertices as positives.

    Rank formulation (Mann-Whitney with midranks), identical to sweeping all
    thresholds and integrating the ROC curve with trapezoids.
    """
    vals = _map_values(smap)
    pos = np.unique(np.asarray(list(fixations) if not isinstance(fixations, np.ndarray)
                               else fixations, dtype=np.int64))
    n = len(vals)
    if len(pos) == 0 or len(pos) >= n:
        raise ValueError("degenerate positive set")
    if pos[0] < 0 or pos[-1] >= n:
        raise ValueError("fixation index out of range")
    ranks = rankdata(vals)
    p = len(pos)
    u = ranks[pos].sum() - p * (p + 1) / 2.0
    return float(u / (p * (n - p)))


def nss(smap, participants: Sequence[np.ndarray]) -> float:
    """Mean z-scored saliency at selected vertices, averaged over participants."""
    vals = _map_values(smap)
    sd = vals.std()
    if sd < 1e-15:
        return 0.0
    z = (vals - vals.mean()) / sd
    scores = []
    for sel in participants:
        sel = np.asarray(sel, dtype=np.int64)
        if len(sel) == 0:
            warnings.warn("participant with no selections skipped", SaliencyWarning)
            continue
        scores.append(float(z[sel].mean()))
    if not scores:
        raise ValueError("no participant had any selections")
    return float(np.mean(scores))


def lcc(x, y) -> float:
    """Absolute Pearson correlation; 0 when either side is constant."""
    xv = x.field if isinstance(x, GroundTruth) else _map_values(x)
    yv = _map_values(y)
    if len(xv) != len(yv):
        raise ValueError("length mismatch")
    if len(xv) < 2:
        raise ValueError("need at least 2 values")
    sx, sy = xv.std(), yv.std()
    if sx < 1e-15 or sy < 1e-15:
        return 0.0
    cov = ((xv - xv.mean()) * (yv - yv.mean())).mean()
    return float(abs(cov / (sx * sy)))


# ----------------------------------------------------------- rank-sum test --

def _exact_ranksum_p(ranks2: np.ndarray, w2: int, n_small: int) -> float:
    """Two-sided exact p for the smaller sample's rank sum.

    ranks2 are doubled pooled midranks (integers). Subset-sum DP counts the
    number of size-n_small subsets at each achievable rank sum.
    """
    ranks2 = np.sort(ranks2)[::-1]
    s_max = int(ranks2[:n_small].sum())
    table = np.zeros((n_small + 1, s_max + 1))
    table[0, 0] = 1.0
    for v in ranks2:
        v = int(v)
        for k in range(n_small, 0, -1):
            if v <= s_max:
                table[k, v:] += table[k - 1, : s_max + 1 - v]
    dist = table[n_small]
    total = dist.sum()
    p_le = dist[: w2 + 1].sum() / total
    p_ge = dist[w2:].sum() / total
    return min(1.0, 2.0 * min(p_le, p_ge))


def wilcoxon_rank_sum(a: Sequence[float], b: Sequence[float]) -> Tuple[float, float]:
    """Two-sample rank-sum test; returns (rank sum of a, two-sided p).

    Exact enumeration when the smaller sample has fewer than 10 values,
    otherwise the normal approximation with tie-corrected variance and a
    continuity correction.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n, m = len(a), len(b)
    if n < 1 or m < 1:
        raise ValueError("both samples must be nonempty")
    pooled = np.concatenate([a, b])
    ranks = rankdata(pooled)
    w_a = float(ranks[:n].sum())
    total = len(pooled) * (len(pooled) + 1) / 2.0

    if np.ptp(pooled) < 1e-300:
        return w_a, 1.0

    if min(n, m) < 10:
        ranks2 = np.round(2.0 * ranks).astype(np.int64)
        if n <= m:
            w2 = int(round(2.0 * w_a))
            p = _exact_ranksum_p(ranks2, w2, n)
        else:
            w2 = int(round(2.0 * (total - w_a)))
            p = _exact_ranksum_p(ranks2, w2, m)
        return w_a, p

    big_n = n + m
    mu = n * (big_n + 1) / 2.0
    _, counts = np.unique(pooled, return_counts=True)
    tie_term = (counts.astype(np.float64) ** 3 - counts).sum()
    var = n * m * (big_n + 1) / 12.0 - n * m * tie_term / (12.0 * big_n * (big_n - 1))
    if var <= 0:
        return w_a, 1.0
    diff = w_a - mu
    cc = 0.5 * np.sign(diff)
    z = (diff - cc) / math.sqrt(var)
    p = min(1.0, math.erfc(abs(z) / math.sqrt(2.0)))
    return w_a, p


# -------------------------------------------------------------- aggregation --

def aggregate_by_class(scores: Sequence[MetricScores], class_map: Dict[str, str],
                       metric: str = "auc") -> List[ClassSummary]:
    """Per-class, per-model mean with 95% Student-t confidence half-width.

    Classes come back sorted by descending cross-model average.
    """
    if metric not in ("auc", "nss", "lcc"):
        raise ValueError("metric must be auc, nss or lcc")
    grouped: Dict[str, Dict[str, List[float]]] = {}
    for s in scores:
        if s.shape_id not in class_map:
            raise ValueError(f"shape {s.shape_id!r} has no class label")
        cls = class_map[s.shape_id]
        grouped.setdefault(cls, {}).setdefault(s.model, []).append(getattr(s, metric))
    summaries = []
    for cls, per_model in grouped.items():
        means, halves = {}, {}
        for model, vals in per_model.items():
            arr = np.asarray(vals)
            means[model] = float(arr.mean())
            if len(arr) == 1:
                warnings.warn(f"class {cls!r}/{model}: single shape, no interval",
                              SaliencyWarning)
                halves[model] = 0.0
            else:
                sem = arr.std(ddof=1) / math.sqrt(len(arr))
                halves[model] = float(student_t.ppf(0.975, len(arr) - 1) * sem)
        summaries.append(ClassSummary(cls, means, halves))
    summaries.sort(key=lambda s: (-np.mean(list(s.means.values())), s.class_name))
    return summaries


# ------------------------------------------------ inter-participant baseline --

def human_performance_curve(
    entries: Sequence[Tuple[np.ndarray, GroundTruth]],
    np_max: int,
    trials: int = 5,
    seed: int = 0,
    sigma: float = 0.03,
    self_predict: bool = False,
):
    """How well n_p participants predict n_p held-out participants.

    entries pair each shape's points with its ground truth. Per trial and
    shape, n_p predictor and n_p disjoint evaluator participants are drawn;
    the predictors' smoothed selections form the map, the evaluators supply
    the fixations, field and NSS sets. Returns per-n_p mean AUC/NSS/LCC.
    self_predict evaluates predictors on themselves (sanity hook).
    """
    if np_max < 1:
        raise ValueError("np_max must be at least 1")
    if trials < 1:
        raise ValueError("need at least one trial")
    rng = np.random.default_rng(seed)
    result = {"n_p": [], "auc": [], "nss": [], "lcc": []}
    for n_p in range(1, np_max + 1):
        auc_scores, nss_scores, lcc_scores = [], [], []
        for _ in range(trials):
            for points, gt in entries:
                total = gt.n_participants
                if 2 * n_p > total:
                    warnings.warn(
                        f"shape {gt.shape_id!r}: {total} participants cannot "
                        f"support n_p={n_p}", SaliencyWarning)
                    continue
                chosen = rng.choice(total, size=2 * n_p, replace=False)
                predictors = chosen[:n_p]
                evaluators = predictors if self_predict else chosen[n_p:]
                radius = bounding_sphere(points).radius
                hs = compute_hs(list(gt.participants), predictors, points,
                                sigma * radius, gt.shape_id)
                eval_sets = [gt.participants[i] for i in evaluators]
                fixations = np.unique(np.concatenate(eval_sets))
                if len(fixations) == 0 or len(fixations) >= len(points):
                    continue
                counts = np.zeros(len(points))
                for sel in eval_sets:
                    counts[sel] += 1.0
                field = minmax_normalize(
                    gaussian_smooth_field(points, counts, sigma * radius))
                auc_scores.append(roc_auc(hs, fixations))
                nss_scores.append(nss(hs, eval_sets))
                lcc_scores.append(lcc(field, hs))
        if not auc_scores:
            raise ValueError(f"no shape has enough participants for n_p={n_p}")
        result["n_p"].append(n_p)
        result["auc"].append(float(np.mean(auc_scores)))
        result["nss"].append(float(np.mean(nss_scores)))
        result["lcc"].append(float(np.mean(lcc_scores)))
    return result

"""Two-sample tests and plug-in information estimates over trial records.

An optimal device produces decision times whose conditional law does not
depend on the true hypothesis; the tests here try to reject that null.
Real-valued times go through the two-sample Kolmogorov-Smirnov test,
step-valued times through a two-sample chi-squared homogeneity test, and the
divergence from optimality is scored by the plug-in conditional mutual
information between hypothesis and (binned) decision time given the decision.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import gammaincc

from .core import (
    SECONDS,
    STEPS,
    EmptyCellError,
    Records,
    ValidationError,
    as_batch,
    partition_records,
)

DEFAULT_MERGE_FLOOR = 5.0
DEFAULT_QUANTILE_BINS = 32
DISCRETE_NATIVE = "discrete-native"


@dataclass(frozen=True)
class TestReport:
    """Outcome of a two-sample test."""

    statistic: float
    p_value: float
    n1: int
    n2: int
    method: str  # "KS2" or "CHI2"
    bins: Optional[Tuple[float, ...]] = None

    def rejects(self, level: float) -> bool:
        return self.p_value < level


@dataclass(frozen=True)
class Binning:
    """Interior cut points partitioning the time axis.

    Bin j collects t with edges[j-1] <= t < edges[j] after extending the
    edge list by -inf and +inf, so every sample lands in exactly one bin.
    """

    edges: Tuple[float, ...]
    merge_floor: float = DEFAULT_MERGE_FLOOR

    def __post_init__(self) -> None:
        e = np.asarray(self.edges, dtype=np.float64)
        if e.size and np.any(np.diff(e) <= 0):
            raise ValidationError("bin edges must be strictly increasing")

    def assign(self, times: np.ndarray) -> np.ndarray:
        return np.searchsorted(np.asarray(self.edges), times, side="right")

    @property
    def n_bins(self) -> int:
        return len(self.edges) + 1


def quantile_binning(times: np.ndarray, n_bins: int = DEFAULT_QUANTILE_BINS) -> Binning:
    """Equal-mass bins from the pooled sample; robust to heavy right tails."""
    times = np.asarray(times, dtype=np.float64)
    if times.size == 0:
        raise EmptyCellError("cannot bin an empty sample")
    qs = np.linspace(0.0, 1.0, n_bins + 1)[1:-1]
    edges = np.unique(np.quantile(times, qs))
    return Binning(edges=tuple(edges.tolist()))


BinningSpec = Union[Binning, str, None]


def _resolve_binning(times: np.ndarray, binning: BinningSpec, time_kind: str) -> Binning:
    if isinstance(binning, Binning):
        return binning
    if binning == DISCRETE_NATIVE or (binning is None and time_kind == STEPS):
        values = np.unique(times)
        if values.size > 1:
            mid = (values[:-1] + values[1:]) / 2.0
            return Binning(edges=tuple(mid.tolist()))
        return Binning(edges=())
    if binning is None:
        return quantile_binning(times)
    raise ValidationError(f"unknown binning spec {binning!r}")


def _kolmogorov_sf(lam: float, terms: int = 20) -> float:
    """Asymptotic survival function of the Kolmogorov statistic."""
    if lam <= 0.0:
        return 1.0
    j = np.arange(1, terms + 1)
    total = 2.0 * np.sum((-1.0) ** (j - 1) * np.exp(-2.0 * (j * lam) ** 2))
    return float(min(max(total, 0.0), 1.0))


def ks_two_sample(a: Sequence[float], b: Sequence[float]) -> TestReport:
    """Two-sample Kolmogorov-Smirnov test for real-valued decision times.

    The statistic is the exact supremum over pooled points of the empirical
    CDF gap; the p-value uses the asymptotic Kolmogorov law at effective
    size n1*n2/(n1+n2).  Heavily tied data belongs in the chi-squared test
    instead and triggers a warning.
    """
    a = np.sort(np.asarray(a, dtype=np.float64))
    b = np.sort(np.asarray(b, dtype=np.float64))
    n1, n2 = a.size, b.size
    if n1 < 1 or n2 < 1:
        raise EmptyCellError("both samples must be nonempty")
    pooled = np.concatenate([a, b])
    uniq, counts = np.unique(pooled, return_counts=True)
    tie_fraction = counts[counts > 1].sum() / pooled.size
    if tie_fraction > 0.01:
        warnings.warn(
            f"{tie_fraction:.1%} of pooled values are tied; "
            "discrete times should use the chi-squared test",
            RuntimeWarning,
            stacklevel=2,
        )
    cdf1 = np.searchsorted(a, uniq, side="right") / n1
    cdf2 = np.searchsorted(b, uniq, side="right") / n2
    d = float(np.max(np.abs(cdf1 - cdf2)))
    n_eff = n1 * n2 / (n1 + n2)
    p = _kolmogorov_sf(math.sqrt(n_eff) * d)
    return TestReport(statistic=d, p_value=p, n1=n1, n2=n2, method="KS2")


def chi2_two_sample(
    a: Sequence[float],
    b: Sequence[float],
    binning: BinningSpec = None,
    merge_floor: Optional[float] = None,
) -> TestReport:
    """Two-sample chi-squared homogeneity test for step-valued decision times.

    Native values become categories, then bins merge greedily to the right
    until every expected count reaches the merge floor (taken from the
    binning when one is supplied).  The p-value is the regularized upper
    incomplete gamma at (bins - 1) degrees of freedom.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n1, n2 = a.size, b.size
    if n1 < 1 or n2 < 1:
        raise EmptyCellError("both samples must be nonempty")
    pooled = np.concatenate([a, b])
    bng = _resolve_binning(pooled, binning, STEPS)
    if merge_floor is None:
        merge_floor = bng.merge_floor
    idx_a = np.bincount(bng.assign(a), minlength=bng.n_bins).astype(np.float64)
    idx_b = np.bincount(bng.assign(b), minlength=bng.n_bins).astype(np.float64)
    merged_a, merged_b, edges_out = _merge_bins(idx_a, idx_b, bng, merge_floor)
    k = merged_a.size
    if k < 2:
        raise ValidationError(
            "fewer than 2 bins remain after merging; the samples cannot support a "
            "chi-squared comparison"
        )
    n = n1 + n2
    pooled_counts = merged_a + merged_b
    stat = 0.0
    for counts, ni in ((merged_a, n1), (merged_b, n2)):
        expected = ni * pooled_counts / n
        stat += float(np.sum((counts - expected) ** 2 / expected))
    dof = k - 1
    p = float(gammaincc(dof / 2.0, stat / 2.0))
    return TestReport(
        statistic=stat, p_value=p, n1=n1, n2=n2, method="CHI2", bins=edges_out
    )


def _merge_bins(counts_a, counts_b, bng: Binning, merge_floor: float):
    """Greedy right-merge until each sample's expected count clears the floor."""
    n1, n2 = counts_a.sum(), counts_b.sum()
    n = n1 + n2
    n_min = min(n1, n2)
    pooled = counts_a + counts_b
    # a bin is viable when the smaller sample's expected count reaches the floor
    need = merge_floor * n / n_min if n_min > 0 else math.inf
    out_a, out_b, cuts = [], [], []
    acc_a = acc_b = 0.0
    inner_edges = list(bng.edges) + [math.inf]
    for j in range(len(pooled)):
        acc_a += counts_a[j]
        acc_b += counts_b[j]
        if acc_a + acc_b >= need:
            out_a.append(acc_a)
            out_b.append(acc_b)
            cuts.append(inner_edges[j])
            acc_a = acc_b = 0.0
    if acc_a + acc_b > 0:
        if out_a:
            out_a[-1] += acc_a
            out_b[-1] += acc_b
            cuts[-1] = math.inf
        else:
            out_a.append(acc_a)
            out_b.append(acc_b)
            cuts.append(math.inf)
    return np.asarray(out_a), np.asarray(out_b), tuple(cuts)


@dataclass(frozen=True)
class MIEstimate:
    """Plug-in mutual-information value in bits, with the binning used."""

    value_bits: float
    n: int
    binning: Union[Binning, str]

    def __post_init__(self) -> None:
        if self.value_bits < 0:
            raise ValidationError("plug-in MI must be clipped at zero")


def _entropy_bits(counts: np.ndarray) -> float:
    counts = counts[counts > 0].astype(np.float64)
    n = counts.sum()
    p = counts / n
    return float(-np.sum(p * np.log2(p)))


def _joint_entropy(*labelings: np.ndarray) -> float:
    stacked = np.stack(labelings, axis=1)
    _, counts = np.unique(stacked, axis=0, return_counts=True)
    return _entropy_bits(counts)


def mi_plugin(x_labels, y_values, binning: BinningSpec = DISCRETE_NATIVE) -> MIEstimate:
    """Generic two-variable plug-in mutual information in bits.

    ``y_values`` are binned per ``binning`` (pass "discrete-native" for
    categorical data); negative rounding artifacts are clipped at zero.
    """
    x = np.asarray(x_labels)
    y = np.asarray(y_values, dtype=np.float64)
    if x.size != y.size:
        raise ValidationError("label and value arrays must have equal length")
    if x.size == 0:
        raise EmptyCellError("cannot estimate mutual information from no samples")
    bng = _resolve_binning(y, binning, SECONDS)
    yb = bng.assign(y)
    value = (
        _entropy_bits(np.unique(x, return_counts=True)[1])
        + _entropy_bits(np.unique(yb, return_counts=True)[1])
        - _joint_entropy(_codes(x), yb)
    )
    out_binning = binning if binning == DISCRETE_NATIVE else bng
    return MIEstimate(value_bits=max(value, 0.0), n=int(x.size), binning=out_binning)


def _codes(x: np.ndarray) -> np.ndarray:
    _, inv = np.unique(x, return_inverse=True)
    return inv


def conditional_mi_plugin(
    records: Records,
    binning: BinningSpec = None,
    n_bins: int = DEFAULT_QUANTILE_BINS,
) -> MIEstimate:
    """Plug-in estimate of I(hypothesis; time | decision) in bits.

    Times are binned once over the pooled sample (native values for
    step-valued records, equal-mass quantile bins otherwise); the estimate
    then satisfies the chain rule against :func:`mi_plugin` on the same
    table exactly.  The plug-in estimator carries a positive bias of order
    (cells/N); no correction is applied.
    """
    batch = as_batch(records)
    if len(batch) == 0:
        raise EmptyCellError("no records")
    if isinstance(binning, Binning):
        bng: Union[Binning, str] = binning
    elif binning == DISCRETE_NATIVE or (binning is None and batch.time_kind == STEPS):
        bng = _resolve_binning(batch.time, DISCRETE_NATIVE, STEPS)
    else:
        bng = quantile_binning(batch.time, n_bins=n_bins)
    tb = bng.assign(batch.time)
    h = batch.hypothesis
    d = batch.decision
    # I(H;T|D) = H(H,D) + H(D,T) - H(D) - H(H,D,T)
    value = (
        _joint_entropy(h, d)
        + _joint_entropy(d, tb)
        - _entropy_bits(np.unique(d, return_counts=True)[1])
        - _joint_entropy(h, d, tb)
    )
    return MIEstimate(value_bits=max(value, 0.0), n=len(batch), binning=bng)


def mi_decomposition(records: Records, binning: BinningSpec = None, n_bins: int = DEFAULT_QUANTILE_BINS):
    """The chain-rule triple (I(H;(D,T)), I(H;D), I(H;T|D)) from one table."""
    batch = as_batch(records)
    est = conditional_mi_plugin(batch, binning=binning, n_bins=n_bins)
    bng = est.binning
    tb = bng.assign(batch.time) if isinstance(bng, Binning) else batch.time.astype(np.int64)
    h, d = batch.hypothesis, batch.decision
    h_ent = _entropy_bits(np.unique(h, return_counts=True)[1])
    i_joint = h_ent + _joint_entropy(d, tb) - _joint_entropy(h, d, tb)
    i_decision = h_ent + _entropy_bits(np.unique(d, return_counts=True)[1]) - _joint_entropy(h, d)
    return i_joint, i_decision, est.value_bits


def _two_sample_dispatch(a, b, time_kind: str, binning: BinningSpec = None) -> TestReport:
    if time_kind == STEPS:
        return chi2_two_sample(a, b, binning=binning)
    return ks_two_sample(a, b)


def optimality_test_known_h(records: Records, binning: BinningSpec = None) -> Tuple[TestReport, TestReport]:
    """Known-hypothesis optimality test.

    Compares decision times across hypotheses within each decision cell:
    (H=1, D=1) against (H=2, D=1) and (H=1, D=2) against (H=2, D=2).  A
    small p-value rejects the null that the device is optimal.
    """
    batch = as_batch(records)
    sets = partition_records(batch)
    for h in (1, 2):
        for d in (1, 2):
            if sets.get(h, d).size == 0:
                raise EmptyCellError(f"no records with hypothesis {h} and decision {d}")
    report_d1 = _two_sample_dispatch(sets.a11, sets.a21, batch.time_kind, binning)
    report_d2 = _two_sample_dispatch(sets.a12, sets.a22, batch.time_kind, binning)
    return report_d1, report_d2


def optimality_test_unknown_h(records: Records, binning: BinningSpec = None) -> TestReport:
    """Unknown-hypothesis optimality test.

    Compares decision times across decisions only; valid when the caller
    asserts the observation statistics are involution-symmetric and the
    device ran with symmetric error constraints (l1 = -l2).
    """
    batch = as_batch(records)
    t1 = batch.time[batch.decision == 1]
    t2 = batch.time[batch.decision == 2]
    if t1.size == 0 or t2.size == 0:
        raise EmptyCellError("both decisions must be present")
    return _two_sample_dispatch(t1, t2, batch.time_kind, binning)

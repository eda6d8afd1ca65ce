"""Stay-duration and cost models.

Three tiers, all fitting positive right-skewed targets in ln space:

* univariate baselines (lognormal MLE, Gamma by method of moments,
  Weibull MLE via Newton on the shape equation),
* finite lognormal mixtures fitted by EM for heterogeneous
  sub-populations,
* attribute-conditioned models (ridge-damped least squares on encoded
  patient features, and a single CART regression tree).

Durations must be strictly positive. Costs may be zero, so cost models
work on ln(cost + 1); predictions and samples undo the shift and clamp
at zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from numpy.random import Generator

from .domain import PatientProfile
from .errors import (
    ConfigError,
    EmptySample,
    InsufficientData,
    NewtonDivergence,
    NonPositiveSample,
    UnencodableProfile,
    ZeroVariance,
)
from .seeding import stream

RIDGE_DAMPING = 1e-8
SIGMA_FLOOR = 1e-4          # EM component floor, prevents collapse
DEGENERATE_SIGMA = 1e-12

TARGET_LOS = "los"
TARGET_COT = "cot"

_LN_2PI = math.log(2.0 * math.pi)


# --- univariate fits ---------------------------------------------------------

@dataclass(frozen=True)
class LognormalFit:
    mu: float
    sigma: float
    n: int
    loglik: float
    degenerate: bool = False


@dataclass(frozen=True)
class GammaFit:
    shape: float
    scale: float
    n: int
    loglik: float


@dataclass(frozen=True)
class WeibullFit:
    shape: float
    scale: float
    n: int
    loglik: float
    converged: bool = True


UnivariateFit = Union[LognormalFit, GammaFit, WeibullFit]


def _positive_array(x: Sequence[float], minimum: int = 2) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1 or len(arr) < minimum:
        raise InsufficientData(f"need at least {minimum} observations, got {arr.size}")
    if np.any(arr <= 0.0):
        raise NonPositiveSample("all observations must be > 0")
    return arr


def fit_lognormal(x: Sequence[float]) -> LognormalFit:
    """MLE: mu = mean(ln x), sigma = population sd of ln x."""
    arr = _positive_array(x)
    lnx = np.log(arr)
    mu = float(np.mean(lnx))
    sigma = float(np.sqrt(np.mean((lnx - mu) ** 2)))
    sig = max(sigma, DEGENERATE_SIGMA)
    ll = float(
        -np.sum(lnx)
        - len(arr) * (math.log(sig) + 0.5 * _LN_2PI)
        - float(np.sum((lnx - mu) ** 2)) / (2.0 * sig * sig)
    )
    return LognormalFit(mu=mu, sigma=sigma, n=len(arr), loglik=ll,
                        degenerate=sigma < DEGENERATE_SIGMA)


def fit_gamma_mom(x: Sequence[float]) -> GammaFit:
    """Method of moments: k = mean^2 / var, theta = var / mean."""
    arr = _positive_array(x)
    mean = float(np.mean(arr))
    var = float(np.mean((arr - mean) ** 2))
    if var <= 0.0:
        raise ZeroVariance("sample variance must be positive")
    k = mean * mean / var
    theta = var / mean
    ll = float(
        (k - 1.0) * np.sum(np.log(arr))
        - np.sum(arr) / theta
        - len(arr) * (k * math.log(theta) + math.lgamma(k))
    )
    return GammaFit(shape=k, scale=theta, n=len(arr), loglik=ll)


def fit_weibull(x: Sequence[float], strict: bool = False) -> WeibullFit:
    """Weibull MLE: Newton iteration on the profile shape equation.

    Starting from k = 1.2 with a 200-iteration cap; the scale then
    follows as lambda = (mean of x^k)^(1/k). On divergence the best
    iterate is returned with ``converged`` unset (or NewtonDivergence is
    raised in strict mode).
    """
    arr = _positive_array(x)
    mean = float(np.mean(arr))
    if float(np.mean((arr - mean) ** 2)) <= 0.0:
        raise ZeroVariance("sample variance must be positive")
    z = arr / mean  # the shape equation is scale invariant
    lnz = np.log(z)
    mean_lnz = float(np.mean(lnz))

    def g_and_dg(k: float) -> tuple[float, float]:
        zk = z**k
        s0 = float(np.sum(zk))
        s1 = float(np.sum(zk * lnz))
        s2 = float(np.sum(zk * lnz * lnz))
        g = s1 / s0 - 1.0 / k - mean_lnz
        dg = (s2 * s0 - s1 * s1) / (s0 * s0) + 1.0 / (k * k)
        return g, dg

    k = 1.2
    best_k, best_abs_g = k, math.inf
    converged = False
    for _ in range(200):
        g, dg = g_and_dg(k)
        if abs(g) < best_abs_g:
            best_k, best_abs_g = k, abs(g)
        if abs(g) < 1e-10:
            converged = True
            break
        step = g / dg
        k_new = k - step
        if k_new <= 0.0 or not math.isfinite(k_new):
            k_new = k / 2.0
        if abs(k_new - k) < 1e-12 * (1.0 + k):
            k = k_new
            g, _ = g_and_dg(k)
            if abs(g) < best_abs_g:
                best_k, best_abs_g = k, abs(g)
            converged = abs(g) < 1e-8
            break
        k = k_new
    if not converged:
        if strict:
            raise NewtonDivergence(f"shape equation residual {best_abs_g:.3e}")
        k = best_k
    lam = mean * float(np.mean(z**k)) ** (1.0 / k)
    ll = float(
        len(arr) * (math.log(k) - k * math.log(lam))
        + (k - 1.0) * np.sum(np.log(arr))
        - np.sum((arr / lam) ** k)
    )
    return WeibullFit(shape=k, scale=lam, n=len(arr), loglik=ll, converged=converged)


# --- lognormal mixtures by EM ------------------------------------------------

@dataclass(frozen=True)
class MixtureComponent:
    weight: float
    mu: float
    sigma: float


@dataclass(frozen=True)
class MixtureFit:
    components: tuple[MixtureComponent, ...]
    n: int
    loglik: float
    trace: tuple[float, ...]  # log-likelihood after each E step


def _kmeanspp_means(lnx: np.ndarray, k: int, rng: Generator) -> np.ndarray:
    """k-means++ style seeding of component means on the ln values."""
    n = len(lnx)
    means = [float(lnx[rng.integers(n)])]
    for _ in range(k - 1):
        d2 = np.min((lnx[:, None] - np.asarray(means)[None, :]) ** 2, axis=1)
        total = float(d2.sum())
        if total <= 0.0:
            means.append(float(lnx[rng.integers(n)]))
            continue
        u = rng.random() * total
        idx = int(np.searchsorted(np.cumsum(d2), u))
        means.append(float(lnx[min(idx, n - 1)]))
    return np.asarray(means)


def fit_mixture_em(
    x: Sequence[float],
    k: int,
    seed: int,
    init: tuple[Sequence[float], Sequence[float], Sequence[float]] | None = None,
    max_iter: int = 500,
    tol: float = 1e-8,
) -> MixtureFit:
    """Fit a k-component lognormal mixture by EM on ln x.

    ``init`` optionally supplies (means, sigmas, weights) to start from,
    e.g. a previously fitted smaller mixture with one component split;
    otherwise means are seeded k-means++ style, sigmas at the global sd
    and weights uniform. The log-likelihood trace (one entry per E step,
    Jacobian term included so values are comparable with
    ``fit_lognormal``) is non-decreasing up to the component sd floor.
    """
    if k < 1:
        raise ConfigError("k must be >= 1")
    arr = _positive_array(x, minimum=max(2, 5 * k))
    lnx = np.log(arr)
    n = len(arr)
    jacobian = float(np.sum(lnx))

    if init is not None:
        mu = np.asarray(init[0], dtype=float)
        sigma = np.maximum(np.asarray(init[1], dtype=float), SIGMA_FLOOR)
        w = np.asarray(init[2], dtype=float)
        if not (len(mu) == len(sigma) == len(w) == k):
            raise ConfigError("init parameter lengths must equal k")
        w = w / w.sum()
    else:
        rng = stream(seed)
        mu = _kmeanspp_means(lnx, k, rng)
        sigma = np.full(k, max(float(np.std(lnx)), SIGMA_FLOOR))
        w = np.full(k, 1.0 / k)

    trace: list[float] = []
    for _ in range(max_iter):
        # E step: responsibilities and current log-likelihood
        logp = (
            -0.5 * ((lnx[:, None] - mu[None, :]) / sigma[None, :]) ** 2
            - np.log(sigma)[None, :]
            - 0.5 * _LN_2PI
            + np.log(w)[None, :]
        )
        row_max = logp.max(axis=1, keepdims=True)
        lse = row_max[:, 0] + np.log(np.exp(logp - row_max).sum(axis=1))
        ll = float(lse.sum()) - jacobian
        trace.append(ll)
        if len(trace) >= 2 and trace[-1] - trace[-2] < tol:
            break
        resp = np.exp(logp - lse[:, None])
        # M step
        nk = np.maximum(resp.sum(axis=0), 1e-12)
        w = nk / nk.sum()
        mu = (resp * lnx[:, None]).sum(axis=0) / nk
        var = (resp * (lnx[:, None] - mu[None, :]) ** 2).sum(axis=0) / nk
        sigma = np.maximum(np.sqrt(var), SIGMA_FLOOR)

    order = np.argsort(mu)
    components = tuple(
        MixtureComponent(weight=float(w[i]), mu=float(mu[i]), sigma=float(sigma[i]))
        for i in order
    )
    return MixtureFit(components=components, n=n, loglik=trace[-1], trace=tuple(trace))


# --- attribute encoding and conditional regression ----------------------------

@dataclass(frozen=True)
class NumericFeature:
    name: str
    mean: float
    sd: float  # a constant column gets sd 1 so it standardizes to 0


@dataclass(frozen=True)
class CategoricalFeature:
    name: str
    levels: tuple[str, ...]  # first level is the dropped reference


@dataclass
class FeatureSpec:
    """Ordered encoding plan for patient attributes.

    Numeric features are standardized by training mean/sd; categoricals
    are one-hot with the first (reference) level dropped; a leading
    intercept column is always present. An unseen level at prediction
    time encodes as all zeros (the reference) and bumps
    ``unseen_level_count``, unless strict mode is requested. Extra
    numeric columns (e.g. future lab results) can be added by listing
    more attribute names.
    """

    numeric: tuple[NumericFeature, ...]
    categorical: tuple[CategoricalFeature, ...]
    unseen_level_count: int = field(default=0, compare=False)

    @property
    def width(self) -> int:
        return 1 + len(self.numeric) + sum(len(c.levels) - 1 for c in self.categorical)

    def encode(self, profile: PatientProfile, strict: bool = False) -> np.ndarray:
        row = np.zeros(self.width)
        row[0] = 1.0
        i = 1
        for f in self.numeric:
            row[i] = (float(getattr(profile, f.name)) - f.mean) / f.sd
            i += 1
        for c in self.categorical:
            value = getattr(profile, c.name)
            if value not in c.levels:
                if strict:
                    raise UnencodableProfile(f"unseen {c.name} level {value!r}")
                self.unseen_level_count += 1
                i += len(c.levels) - 1
                continue
            j = c.levels.index(value)
            if j > 0:
                row[i + j - 1] = 1.0
            i += len(c.levels) - 1
        return row


DEFAULT_NUMERIC = ("age", "comorbidity_count")
DEFAULT_CATEGORICAL = ("gender", "drg")


def build_feature_spec(
    profiles: Sequence[PatientProfile],
    numeric: Sequence[str] = DEFAULT_NUMERIC,
    categorical: Sequence[str] = DEFAULT_CATEGORICAL,
) -> FeatureSpec:
    if not profiles:
        raise InsufficientData("no profiles")
    nums = []
    for name in numeric:
        values = np.asarray([float(getattr(p, name)) for p in profiles])
        sd = float(np.std(values))
        nums.append(NumericFeature(name=name, mean=float(values.mean()),
                                   sd=sd if sd > 1e-12 else 1.0))
    cats = []
    for name in categorical:
        levels = tuple(sorted({str(getattr(p, name)) for p in profiles}))
        cats.append(CategoricalFeature(name=name, levels=levels))
    return FeatureSpec(numeric=tuple(nums), categorical=tuple(cats))


@dataclass(frozen=True)
class ConditionalModel:
    """ln-target linear model with Gaussian residuals."""

    feature_spec: FeatureSpec
    coef: tuple[float, ...]
    residual_sigma: float
    target_kind: str  # TARGET_LOS or TARGET_COT
    n: int
    constant_target: bool = False


def _ln_target(targets: np.ndarray, target_kind: str) -> np.ndarray:
    if target_kind == TARGET_LOS:
        if np.any(targets <= 0.0):
            raise NonPositiveSample("stay durations must be > 0")
        return np.log(targets)
    if target_kind == TARGET_COT:
        if np.any(targets < 0.0):
            raise NonPositiveSample("costs must be >= 0")
        return np.log(targets + 1.0)  # admits zero costs
    raise ConfigError(f"unknown target kind {target_kind!r}")


def fit_conditional(
    profiles: Sequence[PatientProfile],
    targets: Sequence[float],
    target_kind: str = TARGET_LOS,
    spec: FeatureSpec | None = None,
) -> ConditionalModel:
    """Ridge-damped least squares of the ln target on encoded attributes."""
    t = np.asarray(targets, dtype=float)
    if len(profiles) != len(t):
        raise InsufficientData("profiles and targets must align")
    y = _ln_target(t, target_kind)
    if spec is None:
        spec = build_feature_spec(profiles)
    if len(t) <= spec.width:
        raise InsufficientData(f"need more than {spec.width} rows, got {len(t)}")
    X = np.vstack([spec.encode(p) for p in profiles])
    gram = X.T @ X + RIDGE_DAMPING * np.eye(spec.width)
    coef = np.linalg.solve(gram, X.T @ y)
    residuals = y - X @ coef
    residual_sigma = float(np.sqrt(np.mean(residuals**2)))
    return ConditionalModel(
        feature_spec=spec,
        coef=tuple(float(c) for c in coef),
        residual_sigma=residual_sigma,
        target_kind=target_kind,
        n=len(t),
        constant_target=float(np.std(y)) < 1e-12,
    )


def _linear_predictor(model: ConditionalModel, profile: PatientProfile,
                      strict: bool) -> float:
    row = model.feature_spec.encode(profile, strict=strict)
    return float(np.dot(model.coef, row))


def predict_mean(model: ConditionalModel, profile: PatientProfile,
                 strict: bool = False) -> float:
    """Mean target: exp(linear predictor + residual_sigma^2 / 2).

    The half-variance term is the lognormal mean correction. Cost models
    additionally undo the +1 shift and clamp at zero.
    """
    lp = _linear_predictor(model, profile, strict)
    mean_ln_scale = math.exp(lp + 0.5 * model.residual_sigma**2)
    if model.target_kind == TARGET_COT:
        return max(0.0, mean_ln_scale - 1.0)
    return mean_ln_scale


def sample(
    model: ConditionalModel | UnivariateFit | MixtureFit,
    rng: Generator,
    profile: PatientProfile | None = None,
    strict: bool = False,
) -> float:
    """Draw one target value from a fitted model.

    Conditional models need a profile; the others ignore it. Duration
    draws are strictly positive, cost draws non-negative.
    """
    if isinstance(model, ConditionalModel):
        if profile is None:
            raise ConfigError("conditional models require a profile to sample")
        lp = _linear_predictor(model, profile, strict)
        value = math.exp(lp + rng.normal(0.0, model.residual_sigma))
        if model.target_kind == TARGET_COT:
            return max(0.0, value - 1.0)
        return value
    if isinstance(model, LognormalFit):
        return float(rng.lognormal(model.mu, model.sigma))
    if isinstance(model, GammaFit):
        return float(rng.gamma(model.shape, model.scale))
    if isinstance(model, WeibullFit):
        return model.scale * float(rng.weibull(model.shape))
    if isinstance(model, MixtureFit):
        u = rng.random()
        acc = 0.0
        comp = model.components[-1]
        for c in model.components:
            acc += c.weight
            if u < acc:
                comp = c
                break
        return float(rng.lognormal(comp.mu, comp.sigma))
    if isinstance(model, RegressionTree):
        if profile is None:
            raise ConfigError("tree models require a profile to sample")
        return math.exp(tree_leaf_ln(model, profile)
                        + rng.normal(0.0, model.residual_sigma))
    raise ConfigError(f"cannot sample from {type(model).__name__}")


# --- CART regression tree ------------------------------------------------------

@dataclass(frozen=True)
class TreeLeaf:
    mean_ln: float
    count: int


@dataclass(frozen=True)
class TreeSplit:
    feature: str
    kind: str                  # "numeric" or "categorical"
    threshold: float | None    # numeric: left if value <= threshold
    level: str | None          # categorical: left if value == level
    left: "TreeNode"
    right: "TreeNode"


TreeNode = Union[TreeLeaf, TreeSplit]


@dataclass(frozen=True)
class RegressionTree:
    root: TreeNode
    max_depth: int
    min_leaf: int
    numeric: tuple[str, ...]
    categorical: tuple[str, ...]
    residual_sigma: float = 0.0  # pooled within-leaf ln-target sd, for sampling


def _best_numeric_split(values: np.ndarray, y: np.ndarray, min_leaf: int):
    order = np.argsort(values, kind="stable")
    v, ys = values[order], y[order]
    n = len(ys)
    csum = np.cumsum(ys)
    csum2 = np.cumsum(ys**2)
    total, total2 = csum[-1], csum2[-1]
    best = None
    for i in range(min_leaf, n - min_leaf + 1):
        if i < n and v[i - 1] == v[i]:
            continue  # cannot split inside a tie group
        nl = i
        sl, sl2 = csum[i - 1], csum2[i - 1]
        sse_l = sl2 - sl * sl / nl
        nr = n - i
        sr, sr2 = total - sl, total2 - sl2
        sse_r = sr2 - sr * sr / nr
        sse = sse_l + sse_r
        if best is None or sse < best[0]:
            best = (sse, 0.5 * (v[i - 1] + v[i]))
    return best  # (sse, threshold) or None


def _best_categorical_split(values: np.ndarray, y: np.ndarray, min_leaf: int):
    best = None
    for level in sorted(set(values.tolist())):
        mask = values == level
        nl = int(mask.sum())
        nr = len(y) - nl
        if nl < min_leaf or nr < min_leaf:
            continue
        yl, yr = y[mask], y[~mask]
        sse = float(np.sum((yl - yl.mean()) ** 2) + np.sum((yr - yr.mean()) ** 2))
        if best is None or sse < best[0]:
            best = (sse, level)
    return best


def _grow(
    num_cols: dict[str, np.ndarray],
    cat_cols: dict[str, np.ndarray],
    y: np.ndarray,
    idx: np.ndarray,
    depth: int,
    max_depth: int,
    min_leaf: int,
) -> TreeNode:
    ys = y[idx]
    leaf = TreeLeaf(mean_ln=float(ys.mean()), count=len(idx))
    if depth >= max_depth or len(idx) < 2 * min_leaf:
        return leaf
    sse_here = float(np.sum((ys - ys.mean()) ** 2))
    best = None  # (sse, feature, kind, threshold, level)
    for name, col in num_cols.items():
        cand = _best_numeric_split(col[idx], ys, min_leaf)
        if cand and (best is None or cand[0] < best[0]):
            best = (cand[0], name, "numeric", cand[1], None)
    for name, col in cat_cols.items():
        cand = _best_categorical_split(col[idx], ys, min_leaf)
        if cand and (best is None or cand[0] < best[0]):
            best = (cand[0], name, "categorical", None, cand[1])
    if best is None or sse_here - best[0] <= 1e-12:
        return leaf
    _, name, kind, threshold, level = best
    if kind == "numeric":
        mask = num_cols[name][idx] <= threshold
    else:
        mask = cat_cols[name][idx] == level
    left = _grow(num_cols, cat_cols, y, idx[mask], depth + 1, max_depth, min_leaf)
    right = _grow(num_cols, cat_cols, y, idx[~mask], depth + 1, max_depth, min_leaf)
    return TreeSplit(feature=name, kind=kind, threshold=threshold, level=level,
                     left=left, right=right)


def fit_tree(
    profiles: Sequence[PatientProfile],
    targets: Sequence[float],
    max_depth: int = 6,
    min_leaf: int = 20,
    numeric: Sequence[str] = DEFAULT_NUMERIC,
    categorical: Sequence[str] = DEFAULT_CATEGORICAL,
) -> RegressionTree:
    """Greedy variance-reduction CART on the ln target.

    Numeric split candidates are midpoints of sorted unique values;
    categorical splits are single level vs rest. Growth stops at
    max_depth, min_leaf, or when no split reduces the SSE.
    """
    t = np.asarray(targets, dtype=float)
    if len(profiles) != len(t):
        raise InsufficientData("profiles and targets must align")
    if len(t) < 2 * min_leaf:
        raise InsufficientData(f"need at least {2 * min_leaf} rows, got {len(t)}")
    if np.any(t <= 0.0):
        raise NonPositiveSample("targets must be > 0")
    y = np.log(t)
    num_cols = {n: np.asarray([float(getattr(p, n)) for p in profiles]) for n in numeric}
    cat_cols = {n: np.asarray([str(getattr(p, n)) for p in profiles]) for n in categorical}
    root = _grow(num_cols, cat_cols, y, np.arange(len(t)), 0, max_depth, min_leaf)
    tree = RegressionTree(root=root, max_depth=max_depth, min_leaf=min_leaf,
                          numeric=tuple(numeric), categorical=tuple(categorical))
    residuals = y - np.asarray([tree_leaf_ln(tree, p) for p in profiles])
    return RegressionTree(root=root, max_depth=max_depth, min_leaf=min_leaf,
                          numeric=tuple(numeric), categorical=tuple(categorical),
                          residual_sigma=float(np.sqrt(np.mean(residuals**2))))


def predict_tree(tree: RegressionTree, profile: PatientProfile) -> float:
    """Exponentiated mean ln target of the leaf the profile reaches."""
    node = tree.root
    while isinstance(node, TreeSplit):
        if node.kind == "numeric":
            go_left = float(getattr(profile, node.feature)) <= node.threshold
        else:
            go_left = str(getattr(profile, node.feature)) == node.level
        node = node.left if go_left else node.right
    return math.exp(node.mean_ln)


def tree_leaf_ln(tree: RegressionTree, profile: PatientProfile) -> float:
    """ln-space leaf mean (exact leaf statistic, no exponentiation)."""
    node = tree.root
    while isinstance(node, TreeSplit):
        if node.kind == "numeric":
            node = node.left if float(getattr(profile, node.feature)) <= node.threshold else node.right
        else:
            node = node.left if str(getattr(profile, node.feature)) == node.level else node.right
    return node.mean_ln


# --- distribution distance -----------------------------------------------------

def ks_statistic(sample_a: Sequence[float], sample_b: Sequence[float]) -> float:
    """Two-sample Kolmogorov-Smirnov sup-distance between empirical CDFs."""
    a = np.sort(np.asarray(sample_a, dtype=float))
    b = np.sort(np.asarray(sample_b, dtype=float))
    if len(a) == 0 or len(b) == 0:
        raise EmptySample("both samples must be non-empty")
    grid = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, grid, side="right") / len(a)
    cdf_b = np.searchsorted(b, grid, side="right") / len(b)
    return float(np.max(np.abs(cdf_a - cdf_b)))


# --- JSON round trip -------------------------------------------------------------

def _spec_to_jsonable(spec: FeatureSpec) -> dict:
    return {
        "numeric": [{"name": f.name, "mean": f.mean, "sd": f.sd} for f in spec.numeric],
        "categorical": [{"name": c.name, "levels": list(c.levels)} for c in spec.categorical],
    }


def _spec_from_jsonable(d: dict) -> FeatureSpec:
    return FeatureSpec(
        numeric=tuple(NumericFeature(f["name"], float(f["mean"]), float(f["sd"]))
                      for f in d["numeric"]),
        categorical=tuple(CategoricalFeature(c["name"], tuple(c["levels"]))
                          for c in d["categorical"]),
    )


def _node_to_jsonable(node: TreeNode) -> dict:
    if isinstance(node, TreeLeaf):
        return {"leaf": True, "mean_ln": node.mean_ln, "count": node.count}
    return {
        "leaf": False,
        "feature": node.feature,
        "kind": node.kind,
        "threshold": node.threshold,
        "level": node.level,
        "left": _node_to_jsonable(node.left),
        "right": _node_to_jsonable(node.right),
    }


def _node_from_jsonable(d: dict) -> TreeNode:
    if d["leaf"]:
        return TreeLeaf(mean_ln=float(d["mean_ln"]), count=int(d["count"]))
    return TreeSplit(
        feature=d["feature"],
        kind=d["kind"],
        threshold=None if d["threshold"] is None else float(d["threshold"]),
        level=d["level"],
        left=_node_from_jsonable(d["left"]),
        right=_node_from_jsonable(d["right"]),
    )


def to_jsonable(model) -> dict:
    if isinstance(model, LognormalFit):
        return {"kind": "lognormal", "mu": model.mu, "sigma": model.sigma,
                "n": model.n, "loglik": model.loglik, "degenerate": model.degenerate}
    if isinstance(model, GammaFit):
        return {"kind": "gamma", "shape": model.shape, "scale": model.scale,
                "n": model.n, "loglik": model.loglik}
    if isinstance(model, WeibullFit):
        return {"kind": "weibull", "shape": model.shape, "scale": model.scale,
                "n": model.n, "loglik": model.loglik, "converged": model.converged}
    if isinstance(model, MixtureFit):
        return {
            "kind": "lognormal_mixture",
            "components": [{"weight": c.weight, "mu": c.mu, "sigma": c.sigma}
                           for c in model.components],
            "n": model.n,
            "loglik": model.loglik,
            "trace": list(model.trace),
        }
    if isinstance(model, ConditionalModel):
        return {
            "kind": "conditional",
            "target_kind": model.target_kind,
            "feature_spec": _spec_to_jsonable(model.feature_spec),
            "coef": list(model.coef),
            "residual_sigma": model.residual_sigma,
            "n": model.n,
            "constant_target": model.constant_target,
        }
    if isinstance(model, RegressionTree):
        return {
            "kind": "tree",
            "max_depth": model.max_depth,
            "min_leaf": model.min_leaf,
            "numeric": list(model.numeric),
            "categorical": list(model.categorical),
            "residual_sigma": model.residual_sigma,
            "root": _node_to_jsonable(model.root),
        }
    raise ConfigError(f"unknown estimator type {type(model).__name__}")


def from_jsonable(d: dict):
    kind = d.get("kind")
    if kind == "lognormal":
        return LognormalFit(mu=float(d["mu"]), sigma=float(d["sigma"]), n=int(d["n"]),
                            loglik=float(d["loglik"]), degenerate=bool(d.get("degenerate", False)))
    if kind == "gamma":
        return GammaFit(shape=float(d["shape"]), scale=float(d["scale"]), n=int(d["n"]),
                        loglik=float(d["loglik"]))
    if kind == "weibull":
        return WeibullFit(shape=float(d["shape"]), scale=float(d["scale"]), n=int(d["n"]),
                          loglik=float(d["loglik"]), converged=bool(d.get("converged", True)))
    if kind == "lognormal_mixture":
        return MixtureFit(
            components=tuple(MixtureComponent(float(c["weight"]), float(c["mu"]), float(c["sigma"]))
                             for c in d["components"]),
            n=int(d["n"]),
            loglik=float(d["loglik"]),
            trace=tuple(float(v) for v in d["trace"]),
        )
    if kind == "conditional":
        return ConditionalModel(
            feature_spec=_spec_from_jsonable(d["feature_spec"]),
            coef=tuple(float(c) for c in d["coef"]),
            residual_sigma=float(d["residual_sigma"]),
            target_kind=d["target_kind"],
            n=int(d["n"]),
            constant_target=bool(d.get("constant_target", False)),
        )
    if kind == "tree":
        return RegressionTree(
            root=_node_from_jsonable(d["root"]),
            max_depth=int(d["max_depth"]),
            min_leaf=int(d["min_leaf"]),
            numeric=tuple(d["numeric"]),
            categorical=tuple(d["categorical"]),
            residual_sigma=float(d.get("residual_sigma", 0.0)),
        )
    raise ConfigError(f"unknown estimator kind {kind!r}")

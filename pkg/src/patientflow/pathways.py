"""Clinical pathway models mined from event logs.

The baseline is a single first-order transition matrix over departments
plus the virtual ENTRY and DISCHARGE states. The alternative clusters
whole trajectories (bag-of-transitions encoding, Lloyd's k-means with
k-means++ seeding) and fits one matrix per cluster; at simulation time a
new patient is assigned to the cluster whose member attribute centroid
is nearest, since the trajectory itself is unknown at admission.

Pathways are first-order Markov by design; higher-order memory and
sequence-edit-distance medoids are possible extensions, not implemented.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.random import Generator

from .domain import DISCHARGE, ENTRY, PatientProfile, Trajectory
from .errors import (
    ConfigError,
    MissingAttributeCentroids,
    TooFewTrajectories,
    UnknownDepartment,
    UnobservedRow,
)
from .seeding import stream

MIN_CLUSTER_MEMBERS = 20  # smaller clusters route with the global matrix
ATTR_SEPARATION_MIN = 0.5  # standardized units; closer centroids cannot be told apart
KMEANS_MAX_ITER = 300
KMEANS_TOL = 1e-9


@dataclass(frozen=True)
class TransitionMatrix:
    """Row-stochastic transitions; rows ENTRY + departments, columns
    departments + DISCHARGE. DISCHARGE is absorbing by construction and
    nothing transitions into ENTRY."""

    departments: tuple[str, ...]
    probs: tuple[tuple[float, ...], ...]
    counts: tuple[tuple[int, ...], ...]
    row_observed: tuple[bool, ...]

    def row_index(self, state: str) -> int:
        if state == ENTRY:
            return 0
        try:
            return 1 + self.departments.index(state)
        except ValueError:
            raise UnknownDepartment(f"{state!r} not in alphabet") from None

    def column_state(self, j: int) -> str:
        return self.departments[j] if j < len(self.departments) else DISCHARGE

    def row(self, state: str) -> tuple[float, ...]:
        return self.probs[self.row_index(state)]

    def observed(self, state: str) -> bool:
        return self.row_observed[self.row_index(state)]


def _transition_counts(
    trajectories: Sequence[Trajectory], departments: tuple[str, ...]
) -> np.ndarray:
    idx = {d: i for i, d in enumerate(departments)}
    n = len(departments)
    counts = np.zeros((n + 1, n + 1), dtype=np.int64)  # row 0 = ENTRY, col n = DISCHARGE
    for tr in trajectories:
        try:
            path = [idx[s.department] for s in tr.stays]
        except KeyError as exc:
            raise UnknownDepartment(f"department {exc} not in alphabet") from None
        counts[0, path[0]] += 1
        for a, b in zip(path, path[1:]):
            counts[1 + a, b] += 1
        counts[1 + path[-1], n] += 1
    return counts


def fit_transition_matrix(
    trajectories: Sequence[Trajectory],
    departments: Sequence[str] | None = None,
) -> TransitionMatrix:
    """Estimate transition probabilities by row-normalized counts.

    ENTRY -> first department and last department -> DISCHARGE are
    counted as pseudo-transitions. Rows with no observations are flagged
    rather than invented.
    """
    if not trajectories:
        raise TooFewTrajectories("need at least one trajectory")
    if departments is None:
        departments = sorted({s.department for tr in trajectories for s in tr.stays})
    departments = tuple(departments)
    counts = _transition_counts(trajectories, departments)
    row_sums = counts.sum(axis=1)
    probs = np.zeros_like(counts, dtype=float)
    observed = row_sums > 0
    probs[observed] = counts[observed] / row_sums[observed, None]
    return TransitionMatrix(
        departments=departments,
        probs=tuple(tuple(float(p) for p in row) for row in probs),
        counts=tuple(tuple(int(c) for c in row) for row in counts),
        row_observed=tuple(bool(o) for o in observed),
    )


# --- trajectory encoding ------------------------------------------------------

STAY_COUNT_SCALE = 10.0  # keeps the length feature comparable to the unit-mass block


def encoding_width(departments: Sequence[str]) -> int:
    n = len(departments)
    return (n + 1) * (n + 1) + 1


def encode(trajectory: Trajectory, departments: Sequence[str]) -> np.ndarray:
    """Bag-of-transitions vector plus a total-stay-count feature.

    The transition block is the flattened (ENTRY + departments) x
    (departments + DISCHARGE) count matrix of this single trajectory,
    normalized by its transition count (number of stays + 1, counting
    the ENTRY and DISCHARGE pseudo-moves), so the block always sums
    to 1. The stay count is scaled by ``STAY_COUNT_SCALE`` so route
    identity, not length, dominates clustering distances. Trajectories
    with proportional transition counts and equal length encode
    identically.
    """
    departments = tuple(departments)
    counts = _transition_counts([trajectory], departments)
    total = counts.sum()
    vec = np.empty(counts.size + 1)
    vec[:-1] = counts.reshape(-1) / total
    vec[-1] = len(trajectory.stays) / STAY_COUNT_SCALE
    return vec


# --- profile encoding for attribute centroids ----------------------------------

@dataclass(frozen=True)
class ProfileEncoder:
    """Standardized numeric embedding of profiles for nearest-centroid use."""

    means: tuple[float, ...]
    sds: tuple[float, ...]
    drg_levels: tuple[str, ...]

    def encode(self, profile: PatientProfile) -> np.ndarray:
        raw = [float(profile.age), float(profile.comorbidity_count),
               1.0 if profile.gender == "F" else 0.0]
        raw.extend(1.0 if profile.drg == lvl else 0.0 for lvl in self.drg_levels)
        return (np.asarray(raw) - np.asarray(self.means)) / np.asarray(self.sds)


def _build_profile_encoder(profiles: Sequence[PatientProfile]) -> ProfileEncoder:
    levels = tuple(sorted({p.drg for p in profiles}))
    raw = np.asarray(
        [
            [float(p.age), float(p.comorbidity_count), 1.0 if p.gender == "F" else 0.0]
            + [1.0 if p.drg == lvl else 0.0 for lvl in levels]
            for p in profiles
        ]
    )
    means = raw.mean(axis=0)
    sds = raw.std(axis=0)
    sds[sds < 1e-12] = 1.0
    return ProfileEncoder(
        means=tuple(float(m) for m in means),
        sds=tuple(float(s) for s in sds),
        drg_levels=levels,
    )


# --- clustering -----------------------------------------------------------------

@dataclass(frozen=True)
class PathwayCluster:
    centroid: tuple[float, ...]
    matrix: TransitionMatrix
    member_count: int
    attribute_centroid: tuple[float, ...] | None
    use_fallback: bool


@dataclass(frozen=True)
class PathwayClusters:
    k: int
    departments: tuple[str, ...]
    clusters: tuple[PathwayCluster, ...]
    fallback: TransitionMatrix
    profile_encoder: ProfileEncoder | None
    labels: tuple[int, ...]  # training assignment, aligned with the input order

    def routing_matrix(self, index: int) -> TransitionMatrix:
        c = self.clusters[index]
        return self.fallback if c.use_fallback else c.matrix


KMEANS_RESTARTS = 10


def _kmeans_once(X: np.ndarray, k: int, rng: Generator) -> tuple[np.ndarray, np.ndarray]:
    n = len(X)
    # k-means++ seeding
    centroids = np.empty((k, X.shape[1]))
    centroids[0] = X[rng.integers(n)]
    d2 = np.sum((X - centroids[0]) ** 2, axis=1)
    for j in range(1, k):
        total = float(d2.sum())
        if total <= 0.0:
            centroids[j] = X[rng.integers(n)]
        else:
            u = rng.random() * total
            idx = int(np.searchsorted(np.cumsum(d2), u))
            centroids[j] = X[min(idx, n - 1)]
        d2 = np.minimum(d2, np.sum((X - centroids[j]) ** 2, axis=1))

    labels = np.zeros(n, dtype=np.int64)
    for _ in range(KMEANS_MAX_ITER):
        dists = np.sum((X[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
        labels = np.argmin(dists, axis=1)
        assigned_d2 = dists[np.arange(n), labels]
        # repair empty clusters by stealing the globally worst-fitting point
        for j in range(k):
            if not np.any(labels == j):
                worst = int(np.argmax(assigned_d2))
                labels[worst] = j
                assigned_d2[worst] = -np.inf  # each repair takes a fresh point
        new_centroids = np.vstack([X[labels == j].mean(axis=0) for j in range(k)])
        shift = float(np.max(np.abs(new_centroids - centroids)))
        centroids = new_centroids
        if shift < KMEANS_TOL:
            break
    dists = np.sum((X[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
    labels = np.argmin(dists, axis=1)
    assigned_d2 = dists[np.arange(n), labels]
    for j in range(k):
        if not np.any(labels == j):
            worst = int(np.argmax(assigned_d2))
            labels[worst] = j
            assigned_d2[worst] = -np.inf
    return centroids, labels


def _kmeans(X: np.ndarray, k: int, rng: Generator) -> tuple[np.ndarray, np.ndarray]:
    """Lloyd's algorithm, best of KMEANS_RESTARTS seeded restarts by inertia."""
    best = None
    for _ in range(KMEANS_RESTARTS):
        centroids, labels = _kmeans_once(X, k, rng)
        inertia = float(np.sum((X - centroids[labels]) ** 2))
        if best is None or inertia < best[0]:
            best = (inertia, centroids, labels)
    return best[1], best[2]


def cluster(
    trajectories: Sequence[Trajectory],
    k: int,
    seed: int,
    profiles: Sequence[PatientProfile] | None = None,
    departments: Sequence[str] | None = None,
) -> PathwayClusters:
    """Cluster trajectory encodings and fit one transition matrix each.

    ``profiles`` (aligned with ``trajectories``) enables attribute
    centroids, which ``assign`` needs. Clusters below
    ``MIN_CLUSTER_MEMBERS`` members are flagged to route with the global
    fallback matrix.
    """
    if k < 1:
        raise ConfigError("k must be >= 1")
    if len(trajectories) < k:
        raise TooFewTrajectories(f"{len(trajectories)} trajectories for k={k}")
    if profiles is not None and len(profiles) != len(trajectories):
        raise ConfigError("profiles must align with trajectories")
    if departments is None:
        departments = sorted({s.department for tr in trajectories for s in tr.stays})
    departments = tuple(departments)
    fallback = fit_transition_matrix(trajectories, departments)
    X = np.vstack([encode(tr, departments) for tr in trajectories])
    if k == 1:
        centroids = X.mean(axis=0, keepdims=True)
        labels = np.zeros(len(X), dtype=np.int64)
    else:
        centroids, labels = _kmeans(X, k, stream(seed))

    encoder = _build_profile_encoder(profiles) if profiles is not None else None
    attr_centroids: list[np.ndarray | None] = []
    matrices = []
    member_counts = []
    for j in range(k):
        member_idx = np.where(labels == j)[0]
        members = [trajectories[i] for i in member_idx]
        member_counts.append(len(member_idx))
        matrices.append(
            fit_transition_matrix(members, departments) if members else fallback
        )
        if encoder is not None and len(member_idx) > 0:
            enc = np.vstack([encoder.encode(profiles[i]) for i in member_idx])
            attr_centroids.append(enc.mean(axis=0))
        else:
            attr_centroids.append(None)

    # a cluster's matrix is only usable at admission time if its members
    # are attribute-distinguishable; otherwise route with the global matrix
    separated = [True] * k
    if k > 1 and encoder is not None:
        for i in range(k):
            for j in range(i + 1, k):
                if attr_centroids[i] is None or attr_centroids[j] is None:
                    continue
                gap = float(np.linalg.norm(attr_centroids[i] - attr_centroids[j]))
                if gap < ATTR_SEPARATION_MIN:
                    separated[i] = separated[j] = False

    clusters = []
    for j in range(k):
        clusters.append(
            PathwayCluster(
                centroid=tuple(float(v) for v in centroids[j]),
                matrix=matrices[j],
                member_count=member_counts[j],
                attribute_centroid=(
                    None if attr_centroids[j] is None
                    else tuple(float(v) for v in attr_centroids[j])
                ),
                use_fallback=member_counts[j] < MIN_CLUSTER_MEMBERS or not separated[j],
            )
        )
    return PathwayClusters(
        k=k,
        departments=departments,
        clusters=tuple(clusters),
        fallback=fallback,
        profile_encoder=encoder,
        labels=tuple(int(v) for v in labels),
    )


def assign(profile: PatientProfile, clusters: PathwayClusters) -> int:
    """Nearest attribute centroid in standardized profile space."""
    if clusters.profile_encoder is None or any(
        c.attribute_centroid is None for c in clusters.clusters
    ):
        raise MissingAttributeCentroids(
            "clusters were fitted without profiles; cannot assign by attributes"
        )
    if clusters.k == 1:
        return 0
    v = clusters.profile_encoder.encode(profile)
    dists = [
        float(np.sum((v - np.asarray(c.attribute_centroid)) ** 2))
        for c in clusters.clusters
    ]
    return int(np.argmin(dists))  # argmin takes the lowest index on ties


def next_department(
    state: str, matrix: TransitionMatrix, rng: Generator, strict: bool = False
) -> str:
    """Draw the next state from the matrix row of ``state``.

    An unobserved row raises in strict mode and otherwise discharges,
    the conservative fallback (such rows are unreachable under matrices
    fitted on complete logs).
    """
    if state == DISCHARGE:
        return DISCHARGE
    i = matrix.row_index(state)
    if not matrix.row_observed[i]:
        if strict:
            raise UnobservedRow(f"no observed transitions out of {state!r}")
        return DISCHARGE
    row = matrix.probs[i]
    u = rng.random()
    acc = 0.0
    for j, p in enumerate(row):
        acc += p
        if u < acc:
            return matrix.column_state(j)
    return DISCHARGE


# --- diagnostics ------------------------------------------------------------------

def row_average_tv(a: TransitionMatrix, b: TransitionMatrix) -> float:
    """Mean total-variation distance over rows observed in both matrices."""
    if a.departments != b.departments:
        raise ConfigError("matrices must share a department alphabet")
    tvs = []
    for i in range(len(a.probs)):
        if a.row_observed[i] and b.row_observed[i]:
            pa = np.asarray(a.probs[i])
            pb = np.asarray(b.probs[i])
            tvs.append(0.5 * float(np.sum(np.abs(pa - pb))))
    if not tvs:
        raise ConfigError("no commonly observed rows")
    return float(np.mean(tvs))


def mean_silhouette(X: np.ndarray, labels: np.ndarray) -> float:
    """Mean silhouette score; 0.0 for a single cluster by convention."""
    ks = np.unique(labels)
    if len(ks) < 2:
        return 0.0
    n = len(X)
    dists = np.sqrt(np.maximum(np.sum((X[:, None, :] - X[None, :, :]) ** 2, axis=2), 0.0))
    scores = np.zeros(n)
    for i in range(n):
        same = labels == labels[i]
        n_same = int(same.sum())
        if n_same <= 1:
            scores[i] = 0.0
            continue
        a = float(dists[i, same].sum()) / (n_same - 1)
        b = min(
            float(dists[i, labels == other].mean())
            for other in ks
            if other != labels[i]
        )
        denom = max(a, b)
        scores[i] = 0.0 if denom <= 0.0 else (b - a) / denom
    return float(scores.mean())


def sweep_k(
    trajectories: Sequence[Trajectory],
    seed: int,
    profiles: Sequence[PatientProfile] | None = None,
    k_range: Sequence[int] = (1, 2, 3, 4, 5),
    silhouette_cap: int = 2000,
    departments: Sequence[str] | None = None,
) -> PathwayClusters:
    """Fit every k in ``k_range`` and keep the best mean silhouette.

    Silhouette needs pairwise distances, so points are subsampled
    (deterministically) beyond ``silhouette_cap``. k = 1 scores 0, so it
    wins exactly when every proper clustering has a negative silhouette.
    Ties go to the smaller k.
    """
    if departments is None:
        departments = sorted({s.department for tr in trajectories for s in tr.stays})
    departments = tuple(departments)
    X = np.vstack([encode(tr, departments) for tr in trajectories])
    if len(X) > silhouette_cap:
        pick = stream(seed, 999).choice(len(X), size=silhouette_cap, replace=False)
        pick.sort()
    else:
        pick = np.arange(len(X))
    best = None
    for k in k_range:
        if len(trajectories) < k:
            continue
        result = cluster(trajectories, k, seed, profiles, departments)
        score = mean_silhouette(X[pick], np.asarray(result.labels)[pick])
        if best is None or score > best[0] + 1e-12:
            best = (score, result)
    if best is None:
        raise TooFewTrajectories("no feasible k in range")
    return best[1]


# --- JSON round trip ----------------------------------------------------------------

def matrix_to_jsonable(m: TransitionMatrix) -> dict:
    return {
        "kind": "transition_matrix",
        "departments": list(m.departments),
        "probs": [list(r) for r in m.probs],
        "counts": [list(r) for r in m.counts],
        "row_observed": list(m.row_observed),
    }


def matrix_from_jsonable(d: dict) -> TransitionMatrix:
    return TransitionMatrix(
        departments=tuple(d["departments"]),
        probs=tuple(tuple(float(p) for p in r) for r in d["probs"]),
        counts=tuple(tuple(int(c) for c in r) for r in d["counts"]),
        row_observed=tuple(bool(o) for o in d["row_observed"]),
    )


def clusters_to_jsonable(pc: PathwayClusters) -> dict:
    return {
        "kind": "pathway_clusters",
        "k": pc.k,
        "departments": list(pc.departments),
        "clusters": [
            {
                "centroid": list(c.centroid),
                "matrix": matrix_to_jsonable(c.matrix),
                "member_count": c.member_count,
                "attribute_centroid": (
                    None if c.attribute_centroid is None else list(c.attribute_centroid)
                ),
                "use_fallback": c.use_fallback,
            }
            for c in pc.clusters
        ],
        "fallback": matrix_to_jsonable(pc.fallback),
        "profile_encoder": (
            None
            if pc.profile_encoder is None
            else {
                "means": list(pc.profile_encoder.means),
                "sds": list(pc.profile_encoder.sds),
                "drg_levels": list(pc.profile_encoder.drg_levels),
            }
        ),
        "labels": list(pc.labels),
    }


def clusters_from_jsonable(d: dict) -> PathwayClusters:
    encoder = None
    if d.get("profile_encoder") is not None:
        pe = d["profile_encoder"]
        encoder = ProfileEncoder(
            means=tuple(float(v) for v in pe["means"]),
            sds=tuple(float(v) for v in pe["sds"]),
            drg_levels=tuple(pe["drg_levels"]),
        )
    return PathwayClusters(
        k=int(d["k"]),
        departments=tuple(d["departments"]),
        clusters=tuple(
            PathwayCluster(
                centroid=tuple(float(v) for v in c["centroid"]),
                matrix=matrix_from_jsonable(c["matrix"]),
                member_count=int(c["member_count"]),
                attribute_centroid=(
                    None
                    if c["attribute_centroid"] is None
                    else tuple(float(v) for v in c["attribute_centroid"])
                ),
                use_fallback=bool(c["use_fallback"]),
            )
            for c in d["clusters"]
        ),
        fallback=matrix_from_jsonable(d["fallback"]),
        profile_encoder=encoder,
        labels=tuple(int(v) for v in d["labels"]),
    )

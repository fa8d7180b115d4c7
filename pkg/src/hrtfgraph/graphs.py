"""Directions on the sphere, retrieval, and the two graph constructions.

Azimuth is degrees counterclockwise in [0, 360) with 90 at the left ear;
elevation is degrees in [-90, 90].  All distances are great-circle angles
in degrees.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Direction:
    azimuth_deg: float
    elevation_deg: float

    def __post_init__(self):
        el = float(self.elevation_deg)
        if not -90.0 <= el <= 90.0:
            raise ValueError(f"elevation {el} outside [-90, 90]")
        az = float(self.azimuth_deg) % 360.0
        object.__setattr__(self, "azimuth_deg", az)
        object.__setattr__(self, "elevation_deg", el)

    @property
    def unit_vector(self) -> np.ndarray:
        return unit_vectors(np.array([[self.azimuth_deg, self.elevation_deg]]))[0]


def unit_vectors(directions) -> np.ndarray:
    """[n, 2] (az, el) degrees -> [n, 3] unit vectors (x front, y left, z up)."""
    d = np.asarray(directions, dtype=np.float64)
    az = np.radians(d[:, 0])
    el = np.radians(d[:, 1])
    ce = np.cos(el)
    return np.stack([ce * np.cos(az), ce * np.sin(az), np.sin(el)], axis=1)


def _as_dir_array(d) -> np.ndarray:
    if isinstance(d, Direction):
        return np.array([[d.azimuth_deg, d.elevation_deg]])
    a = np.asarray(d, dtype=np.float64)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2 or a.shape[1] != 2:
        raise ValueError(f"expected (az, el) rows, got shape {a.shape}")
    return a


def pairwise_angular_distance(a, b) -> np.ndarray:
    """Great-circle distances in degrees between two direction sets.

    Uses atan2 of cross and dot products, which stays accurate near 0 and
    180 degrees.
    """
    va = unit_vectors(_as_dir_array(a))
    vb = unit_vectors(_as_dir_array(b))
    dot = va @ vb.T
    # pairwise cross-product norms
    cx = va[:, None, 1] * vb[None, :, 2] - va[:, None, 2] * vb[None, :, 1]
    cy = va[:, None, 2] * vb[None, :, 0] - va[:, None, 0] * vb[None, :, 2]
    cz = va[:, None, 0] * vb[None, :, 1] - va[:, None, 1] * vb[None, :, 0]
    sin_n = np.sqrt(cx * cx + cy * cy + cz * cz)
    return np.degrees(np.arctan2(sin_n, dot))


def angular_distance(a, b) -> float:
    return float(pairwise_angular_distance(_as_dir_array(a), _as_dir_array(b))[0, 0])


def retrieve_subjects(feature_table, target_feature, count=None, radius=None):
    """Nearest subjects by Euclidean feature distance.

    ``feature_table`` maps subject id to a feature vector.  Exactly one of
    ``count`` (top-M) or ``radius`` (all strictly inside) selects the mode.
    Ties are broken by subject id, so candidate enumeration order never
    matters.
    """
    if (count is None) == (radius is None):
        raise ValueError("specify exactly one of count or radius")
    items = sorted(feature_table.items())
    if not items:
        raise ValueError("empty feature table")
    target = np.asarray(target_feature, dtype=np.float64)
    ids = [k for k, _ in items]
    mat = np.stack([np.asarray(v, dtype=np.float64) for _, v in items])
    if mat.shape[1] != target.shape[0]:
        raise ValueError(
            f"feature length mismatch: table {mat.shape[1]}, target {target.shape[0]}"
        )
    dist = np.sqrt(((mat - target[None, :]) ** 2).sum(axis=1))
    order = np.argsort(dist, kind="stable")  # ids pre-sorted, so ties go by id
    if count is not None:
        if not 1 <= count <= len(ids):
            raise ValueError(f"count {count} outside [1, {len(ids)}]")
        chosen = order[:count]
    else:
        chosen = [i for i in order if dist[i] < radius]
        if not len(chosen):
            raise ValueError(f"no subjects within radius {radius}")
    return [ids[i] for i in chosen]


def retrieve_directions(directions, target, radius_deg: float,
                        exclude_target: bool = True):
    """Indices of directions strictly inside ``radius_deg`` of the target.

    With ``exclude_target`` the (near-)coincident direction itself is
    dropped.  An empty result is an error: downstream graphs need at least
    one neighbor.
    """
    if radius_deg <= 0.0:
        raise ValueError(f"radius must be positive, got {radius_deg}")
    dist = pairwise_angular_distance(directions, _as_dir_array(target))[:, 0]
    mask = dist < radius_deg
    if exclude_target:
        mask &= dist > 1e-9
    idx = np.nonzero(mask)[0]
    if idx.size == 0:
        raise ValueError(
            f"no directions within {radius_deg} degrees of the target"
        )
    return [int(i) for i in idx]


@dataclass(frozen=True)
class SpatialParams:
    """Spatial-graph geometry: neighbor radius, edge cut factor, kernel width."""

    edge_factor: float = 0.75
    radius_deg: float = 20.0
    kernel_sigma: float = 0.5

    def validate(self):
        if not 0.0 < self.edge_factor <= 1.0:
            raise ValueError(f"edge factor {self.edge_factor} outside (0, 1]")
        if self.radius_deg <= 0.0 or self.kernel_sigma <= 0.0:
            raise ValueError(
                f"bad radius/sigma: {self.radius_deg}/{self.kernel_sigma}"
            )


@dataclass
class SubjectGraph:
    """Fully connected graph over retrieved subjects at one direction."""

    subject_ids: list
    features: np.ndarray  # [n, 2K] dB, float64
    adjacency: np.ndarray  # [n, n] bool, all True
    log_weights: np.ndarray  # [n, n], all zero (unit edge weights)


@dataclass
class SpatialGraph:
    """Neighborhood graph around a target direction.

    The target is the last node; its input feature is all-ones.  Edge
    weights follow a Gaussian kernel on angular distance normalized by the
    edge cut ``a * delta_d``; the target keeps an edge to every neighbor
    regardless of the cut.
    """

    features: np.ndarray  # [m+1, 2K] float64
    adjacency: np.ndarray  # [m+1, m+1] bool
    log_weights: np.ndarray  # [m+1, m+1]; meaningful where adjacency holds
    target_index: int
    directions: np.ndarray  # [m, 2] neighbor (az, el)

    @property
    def weights(self) -> np.ndarray:
        return np.where(self.adjacency, np.exp(self.log_weights), 0.0)


def build_subject_graph(bundle, subject_ids, direction) -> SubjectGraph:
    """Node features are each subject's pair spectrum at one direction."""
    if not subject_ids:
        raise ValueError("subject graph needs at least one node")
    d_idx = bundle.direction_index(direction)
    rows = [bundle.subject_index(s) for s in subject_ids]
    feats = bundle.magnitudes[rows, d_idx].astype(np.float64)
    n = len(subject_ids)
    return SubjectGraph(
        subject_ids=list(subject_ids),
        features=feats,
        adjacency=np.ones((n, n), dtype=bool),
        log_weights=np.zeros((n, n)),
    )


def build_spatial_graph(neighbor_features, neighbor_directions, target_direction,
                        edge_factor: float = 0.75, radius_deg: float = 20.0,
                        kernel_sigma: float = 0.5) -> SpatialGraph:
    feats = np.asarray(neighbor_features, dtype=np.float64)
    dirs = _as_dir_array(neighbor_directions)
    m = dirs.shape[0]
    if m < 1:
        raise ValueError("spatial graph needs at least one neighbor")
    if feats.ndim != 2 or feats.shape[0] != m:
        raise ValueError(
            f"feature rows {feats.shape} do not match {m} neighbor directions"
        )
    if not 0.0 < edge_factor <= 1.0:
        raise ValueError(f"edge factor {edge_factor} outside (0, 1]")
    if radius_deg <= 0.0 or kernel_sigma <= 0.0:
        raise ValueError(f"bad radius/sigma: {radius_deg}/{kernel_sigma}")
    cut = edge_factor * radius_deg
    target = _as_dir_array(target_direction)

    dist = np.zeros((m + 1, m + 1))
    dist[:m, :m] = pairwise_angular_distance(dirs, dirs)
    dist[:m, m] = dist[m, :m] = pairwise_angular_distance(dirs, target)[:, 0]

    adj = dist < cut
    adj[m, :] = True  # target stays connected to every neighbor
    adj[:, m] = True
    np.fill_diagonal(adj, True)

    rho = dist / cut
    log_w = -(rho * rho) / (2.0 * kernel_sigma * kernel_sigma)

    features = np.vstack([feats, np.ones((1, feats.shape[1]))])
    return SpatialGraph(
        features=features,
        adjacency=adj,
        log_weights=log_w,
        target_index=m,
        directions=dirs,
    )

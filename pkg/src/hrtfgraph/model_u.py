"""Spatial upsampling: predict the spectrum at a direction from its
neighborhood graph.

Two GAT layers (Gaussian edge log-weights biasing the attention logits)
feed an FC output layer that reads the target node.  Training is
leave-one-direction-out on true spectra.  Per-subject fine-tuning adapts
only the FC layer, fitting the subject's few true measurements with the
pseudo-label field as graph input, and leaves the GAT parameters
untouched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .graphs import (
    SpatialGraph,
    SpatialParams,
    build_spatial_graph,
    retrieve_directions,
)
from .layers import GatLayer, Linear, bias_matrix, loss_lsd
from .optim import make_optimizer, make_schedule

__all__ = ["ModelUConfig", "ModelU", "forward_u", "train_model_u",
           "finetune_model_u", "predict_field_u", "direction_topologies"]


@dataclass(frozen=True)
class ModelUConfig:
    heads_gat1: int = 8
    heads_gat2: int = 1
    dim_gat1: int = 128
    dim_gat2: int | None = None  # default 2K


class ModelU:
    def __init__(self, K: int, config: ModelUConfig):
        self.K = K
        self.config = config
        self.d_gat2 = config.dim_gat2 or 2 * K

    @classmethod
    def create(cls, rng: np.random.Generator, K: int,
               config: ModelUConfig = ModelUConfig()) -> "ModelU":
        model = cls(K, config)
        cfg = model.config
        model.gat1 = GatLayer.create(rng, cfg.heads_gat1, 2 * K, cfg.dim_gat1)
        model.gat2 = GatLayer.create(
            rng, cfg.heads_gat2, cfg.heads_gat1 * cfg.dim_gat1, model.d_gat2
        )
        model.fc = Linear.create(rng, cfg.heads_gat2 * model.d_gat2, 2 * K)
        return model

    def named_parameters(self):
        groups = [("gat1", self.gat1), ("gat2", self.gat2), ("fc", self.fc)]
        return [(f"{g}.{n}", p) for g, layer in groups
                for n, p in layer.parameters()]

    def copy(self, freeze_gat: bool = False) -> "ModelU":
        """Deep parameter copy; with ``freeze_gat`` only the FC layer keeps
        gradients (its parameters are the only trainable ones)."""
        out = ModelU(self.K, self.config)

        def dup(t: Tensor, trainable: bool) -> Tensor:
            return Tensor(t.data.copy(), requires_grad=trainable)

        gat_grad = not freeze_gat
        out.gat1 = GatLayer(
            dup(self.gat1.W, gat_grad), dup(self.gat1.Ws, gat_grad),
            dup(self.gat1.a, gat_grad), dup(self.gat1.a_s, gat_grad),
        )
        out.gat2 = GatLayer(
            dup(self.gat2.W, gat_grad), dup(self.gat2.Ws, gat_grad),
            dup(self.gat2.a, gat_grad), dup(self.gat2.a_s, gat_grad),
        )
        out.fc = Linear(dup(self.fc.W, True), dup(self.fc.b, True))
        return out

    def forward(self, features: np.ndarray, bias: np.ndarray,
                target_index: int) -> Tensor:
        h = self.gat2(self.gat1(Tensor(features), bias), bias)
        return self.fc(h[target_index])

    def hyper(self) -> dict:
        cfg = self.config
        return {
            "K": self.K,
            "heads_gat1": cfg.heads_gat1,
            "heads_gat2": cfg.heads_gat2,
            "dim_gat1": cfg.dim_gat1,
            "dim_gat2": self.d_gat2,
        }


def forward_u(model: ModelU, graph: SpatialGraph) -> Tensor:
    """Predicted 2K dB spectrum at the graph's target node."""
    bias = bias_matrix(graph.adjacency, graph.log_weights)
    return model.forward(graph.features, bias, graph.target_index)


def direction_topologies(directions: np.ndarray, spatial: SpatialParams):
    """Per-direction (neighbor indices, attention bias), target node last.

    Every direction must have at least one neighbor inside the radius.
    """
    spatial.validate()
    D = directions.shape[0]
    out = []
    for d in range(D):
        try:
            nb = retrieve_directions(directions, directions[d],
                                     spatial.radius_deg, exclude_target=True)
        except ValueError:
            raise ValueError(
                f"direction {d} ({directions[d]}) has no neighbor within "
                f"{spatial.radius_deg} degrees"
            ) from None
        g = build_spatial_graph(
            np.zeros((len(nb), 1)), directions[nb], directions[d],
            edge_factor=spatial.edge_factor, radius_deg=spatial.radius_deg,
            kernel_sigma=spatial.kernel_sigma,
        )
        out.append((nb, bias_matrix(g.adjacency, g.log_weights)))
    return out


def _node_features(field: np.ndarray, nb, two_k: int) -> np.ndarray:
    X = np.empty((len(nb) + 1, two_k))
    X[:-1] = field[nb]
    X[-1] = 1.0  # target node enters as all-ones
    return X


def train_model_u(bundle, split, uconfig: ModelUConfig, tconfig,
                  spatial: SpatialParams = SpatialParams(), seed: int = 0):
    """Leave-one-direction-out training over the train split.

    Returns the best-validation model and a per-epoch log.
    """
    rng = np.random.default_rng(seed)
    model = ModelU.create(rng, bundle.K, uconfig)
    topo = direction_topologies(bundle.directions, spatial)
    mag = bundle.magnitudes.astype(np.float64)
    D = bundle.directions.shape[0]
    two_k = 2 * bundle.K

    train_rows = [bundle.subject_index(s) for s in split.train]
    val_rows = [bundle.subject_index(s) for s in split.val]
    pairs = [(r, d) for r in train_rows for d in range(D)]

    params = model.named_parameters()
    optimizer = make_optimizer(tconfig.optimizer, params, tconfig.lr)
    schedule = make_schedule(optimizer, tconfig.schedule)

    log = []
    best_val = np.inf
    best_params = [p.data.copy() for _, p in params]
    for epoch in range(tconfig.epochs):
        order = rng.permutation(len(pairs))
        total = 0.0
        for k in order:
            r, d = pairs[k]
            nb, bias = topo[d]
            pred = model.forward(_node_features(mag[r], nb, two_k), bias,
                                 len(nb))
            loss = loss_lsd(pred, mag[r, d])
            total += loss.item()
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
        val_lsd = _loo_lsd(model, mag, val_rows, topo, two_k)
        if schedule is not None:
            schedule.step(val_lsd)
        log.append({"epoch": epoch, "train_lsd": total / len(pairs),
                    "val_lsd": val_lsd, "lr": optimizer.lr})
        if val_lsd < best_val:
            best_val = val_lsd
            best_params = [p.data.copy() for _, p in params]
    for (_, p), w in zip(params, best_params):
        p.data = w.copy()
    return model, log


def _loo_lsd(model, mag, rows, topo, two_k) -> float:
    from .dsp import lsd_db

    errs = []
    with ad.no_grad():
        for r in rows:
            for d, (nb, bias) in enumerate(topo):
                pred = model.forward(_node_features(mag[r], nb, two_k), bias,
                                     len(nb))
                errs.append(lsd_db(pred.data, mag[r, d]))
    return float(np.mean(errs))


def predict_field_u(model: ModelU, directions: np.ndarray, field: np.ndarray,
                    spatial: SpatialParams = SpatialParams(),
                    topologies=None) -> np.ndarray:
    """Re-predict every direction of ``field`` from its neighborhood."""
    if topologies is None:
        topologies = direction_topologies(directions, spatial)
    two_k = field.shape[1]
    out = np.empty_like(field)
    with ad.no_grad():
        for d, (nb, bias) in enumerate(topologies):
            pred = model.forward(_node_features(field, nb, two_k), bias,
                                 len(nb))
            out[d] = pred.data
    return out


def finetune_model_u(model: ModelU, directions: np.ndarray,
                     field: np.ndarray, measured: dict, tconfig,
                     spatial: SpatialParams = SpatialParams(), seed: int = 0,
                     topologies=None) -> ModelU:
    """Per-subject adaptation of the FC layer only.

    ``field`` holds pseudo-label spectra for every direction (typically the
    personalization model's predictions) and supplies the graph features;
    ``measured`` maps direction index to the subject's true spectrum.  The
    measured directions are the only fitting targets, so the FC layer
    learns to pull the re-predicted field toward the few spectra known to
    be right.  GAT parameters stay bitwise identical; zero epochs or an
    empty ``measured`` return an exact copy.
    """
    if topologies is None:
        topologies = direction_topologies(directions, spatial)
    rng = np.random.default_rng(seed)
    tuned = model.copy(freeze_gat=True)
    two_k = field.shape[1]
    anchors = {int(d): np.asarray(spec, dtype=np.float64)
               for d, spec in measured.items()}
    order = np.array(sorted(anchors), dtype=int)

    fc_params = [(n, p) for n, p in tuned.named_parameters()
                 if n.startswith("fc.")]
    optimizer = make_optimizer(tconfig.optimizer, fc_params, tconfig.lr)
    schedule = make_schedule(optimizer, tconfig.schedule)
    for _ in range(tconfig.epochs if order.size else 0):
        total = 0.0
        for d in order[rng.permutation(order.size)]:
            nb, bias = topologies[d]
            pred = tuned.forward(_node_features(field, nb, two_k), bias,
                                 len(nb))
            loss = loss_lsd(pred, anchors[int(d)])
            total += loss.item()
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
        if schedule is not None:
            schedule.step(total / order.size)
    return tuned

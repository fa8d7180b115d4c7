"""Personalized HRTF prediction from a graph of similar subjects.

The encoder runs two GAT layers over the fully connected subject graph at
one direction, concatenates per-node clue features, fuses with a third GAT
and mean-pools.  The decoder is two FC layers whose weights get a rank-one
additive update (outer product of two small heads driven by the target's
encoded clue), followed by four stride-2 transposed convolutions that
upsample 16 channels of K/8 values into the 2K-bin pair spectrum.

Ablation wirings: ``use_clue=False`` drops the clue branch, the fusion GAT
and the rank-one conditioning; ``use_fusion=False`` keeps the clue but
pools the concatenation directly.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .features import (
    FeatureStats,
    RffEncoder,
    compute_feature_stats,
    rank_subjects_by_lsd,
    subject_feature,
)
from .graphs import retrieve_subjects
from .layers import ConvTranspose1dLayer, GatLayer, Linear, loss_lsd
from .optim import make_optimizer, make_schedule

__all__ = ["ModelPConfig", "ModelP", "train_model_p", "predict_field_p",
           "loss_lsd"]


@dataclass(frozen=True)
class ModelPConfig:
    heads_gat1: int = 8
    heads_gat2: int = 1
    heads_fusion: int = 6
    dim_gat1: int | None = None  # per-head width, default 2K
    dim_gat2: int | None = None  # default 4K
    dim_fusion: int | None = None  # per-head width, default 2K
    decoder_hidden: int | None = None  # default 2K
    rff_features: int = 64
    rff_sigma: float = 1.0
    use_clue: bool = True
    use_fusion: bool = True
    feature_kind: str = "ild"  # ild | itd | lsd
    retrieval_count: int = 5

    def resolved(self, K: int) -> "ModelPConfig":
        return replace(
            self,
            dim_gat1=self.dim_gat1 or 2 * K,
            dim_gat2=self.dim_gat2 or 4 * K,
            dim_fusion=self.dim_fusion or 2 * K,
            decoder_hidden=self.decoder_hidden or 2 * K,
        )


class ModelP:
    DECONV_CHANNELS = (16, 8, 4, 2, 1)

    def __init__(self, K: int, measurement_count: int, config: ModelPConfig):
        if K % 8 != 0:
            raise ValueError(f"K must be divisible by 8, got {K}")
        if config.feature_kind not in ("ild", "itd", "lsd"):
            raise ValueError(f"unknown feature kind {config.feature_kind!r}")
        self.K = K
        self.measurement_count = measurement_count
        self.config = config.resolved(K)
        self.feature_stats: FeatureStats | None = None
        self.rff: RffEncoder | None = None
        cfg = self.config
        self.d_encoded = cfg.heads_gat2 * cfg.dim_gat2
        if cfg.use_fusion and not cfg.use_clue:
            raise ValueError("fusion without a clue branch is not a wiring")
        if cfg.use_fusion:
            self.pool_dim = cfg.heads_fusion * cfg.dim_fusion
        elif cfg.use_clue:
            self.pool_dim = self.d_encoded + 2 * K
        else:
            self.pool_dim = self.d_encoded

    # vector feature length entering the clue; lsd similarity carries none
    @property
    def clue_feature_len(self) -> int:
        if self.config.feature_kind == "lsd":
            return 0
        return self.measurement_count

    @property
    def clue_dim(self) -> int:
        return 2 + self.clue_feature_len

    @classmethod
    def create(cls, rng: np.random.Generator, K: int, measurement_count: int,
               config: ModelPConfig = ModelPConfig()) -> "ModelP":
        model = cls(K, measurement_count, config)
        cfg = model.config
        two_k = 2 * K
        model.gat1 = GatLayer.create(rng, cfg.heads_gat1, two_k, cfg.dim_gat1)
        model.gat2 = GatLayer.create(
            rng, cfg.heads_gat2, cfg.heads_gat1 * cfg.dim_gat1, cfg.dim_gat2
        )
        if cfg.use_clue:
            model.rff = RffEncoder.create(
                rng, model.clue_dim, cfg.rff_features, cfg.rff_sigma
            )
            model.clue_fc = Linear.create(rng, model.rff.out_dim, two_k)
        else:
            model.clue_fc = None
        if cfg.use_fusion:
            model.fusion = GatLayer.create(
                rng, cfg.heads_fusion, model.d_encoded + two_k, cfg.dim_fusion
            )
        else:
            model.fusion = None
        hidden = cfg.decoder_hidden
        model.dec1 = Linear.create(rng, model.pool_dim, hidden)
        model.dec2 = Linear.create(rng, hidden, two_k)
        if cfg.use_clue:
            rff_out = model.rff.out_dim
            model.lora_u1 = Linear.create(rng, rff_out, hidden)
            model.lora_v1 = Linear.create(rng, rff_out, model.pool_dim)
            model.lora_u2 = Linear.create(rng, rff_out, two_k)
            model.lora_v2 = Linear.create(rng, rff_out, hidden)
        else:
            model.lora_u1 = model.lora_v1 = None
            model.lora_u2 = model.lora_v2 = None
        chans = cls.DECONV_CHANNELS
        model.deconvs = [
            ConvTranspose1dLayer.create(rng, chans[i], chans[i + 1])
            for i in range(len(chans) - 1)
        ]
        return model

    def named_parameters(self):
        groups = [("gat1", self.gat1), ("gat2", self.gat2)]
        if self.clue_fc is not None:
            groups.append(("clue_fc", self.clue_fc))
        if self.fusion is not None:
            groups.append(("fusion", self.fusion))
        groups += [("dec1", self.dec1), ("dec2", self.dec2)]
        if self.lora_u1 is not None:
            groups += [("lora_u1", self.lora_u1), ("lora_v1", self.lora_v1),
                       ("lora_u2", self.lora_u2), ("lora_v2", self.lora_v2)]
        groups += [(f"deconv{i}", dc) for i, dc in enumerate(self.deconvs)]
        return [(f"{gname}.{pname}", p)
                for gname, layer in groups
                for pname, p in layer.parameters()]

    def encode(self, features: np.ndarray,
               clue_rffs: np.ndarray | None) -> Tensor:
        """Pooled embedding of the subject graph at one direction.

        ``features`` is [n, 2K] dB; ``clue_rffs`` the per-node encoded
        clues, [n, 2*rff_features] (ignored without a clue branch).
        """
        n = features.shape[0]
        bias = np.zeros((n, n))  # complete graph, unit edge weights
        h = self.gat2(self.gat1(Tensor(features), bias), bias)
        if self.config.use_clue:
            if clue_rffs is None or clue_rffs.shape[0] != n:
                raise ValueError("clue encodings must cover every node")
            h = ad.concat([h, self.clue_fc(Tensor(clue_rffs))], axis=1)
        if self.fusion is not None:
            h = self.fusion(h, bias)
        return ad.tmean(h, axis=0)

    def _conditioned(self, layer: Linear, x: Tensor, u_head, v_head,
                     cond: Tensor | None) -> Tensor:
        y = layer(x)
        if cond is None:
            return y
        u = u_head(cond)
        v = v_head(cond)
        # (W + u v^T) x  ==  W x + u (v . x)
        return ad.add(y, ad.mul(u, ad.tsum(ad.mul(v, x))))

    def decode(self, pooled: Tensor, target_rff: np.ndarray | None) -> Tensor:
        cond = None
        if self.config.use_clue:
            if target_rff is None:
                raise ValueError("decoder conditioning needs the target clue")
            cond = Tensor(target_rff)
        y = self._conditioned(self.dec1, pooled, self.lora_u1, self.lora_v1, cond)
        y = ad.elu(y)
        y = self._conditioned(self.dec2, y, self.lora_u2, self.lora_v2, cond)
        z = ad.reshape(y, (self.DECONV_CHANNELS[0], self.K // 8))
        last = len(self.deconvs) - 1
        for i, dc in enumerate(self.deconvs):
            z = dc(z)
            if i != last:
                z = ad.elu(z)
        return ad.reshape(z, (2 * self.K,))

    def forward(self, features, clue_rffs, target_rff) -> Tensor:
        return self.decode(self.encode(features, clue_rffs), target_rff)

    def hyper(self) -> dict:
        cfg = self.config
        return {
            "K": self.K,
            "measurement_count": self.measurement_count,
            "heads_gat1": cfg.heads_gat1,
            "heads_gat2": cfg.heads_gat2,
            "heads_fusion": cfg.heads_fusion,
            "dim_gat1": cfg.dim_gat1,
            "dim_gat2": cfg.dim_gat2,
            "dim_fusion": cfg.dim_fusion,
            "decoder_hidden": cfg.decoder_hidden,
            "rff_features": cfg.rff_features,
            "rff_sigma": cfg.rff_sigma,
            "use_clue": cfg.use_clue,
            "use_fusion": cfg.use_fusion,
            "feature_kind": cfg.feature_kind,
            "retrieval_count": cfg.retrieval_count,
        }


# -- retrieval + clue assembly --------------------------------------------


def _pool_features(model: ModelP, bundle, pool_ids, subset):
    """Raw retrieval features for every pool subject (None for lsd kind)."""
    if model.config.feature_kind == "lsd":
        return None
    return {
        s: subject_feature(bundle, s, subset, model.config.feature_kind)
        for s in pool_ids
    }


def _neighbors_for(model: ModelP, bundle, pool_feats, pool_ids, subset,
                   target_id, target_feat):
    """Retrieved graph subjects for one target, target itself excluded."""
    candidates = [s for s in pool_ids if s != target_id]
    M = model.config.retrieval_count
    if len(candidates) < M:
        raise ValueError(
            f"retrieval needs {M} candidates, have {len(candidates)}"
        )
    if model.config.feature_kind == "lsd":
        t_idx = bundle.subject_index(target_id)
        tspec = bundle.magnitudes[t_idx, subset].astype(np.float64)
        return rank_subjects_by_lsd(bundle, candidates, tspec, subset)[:M]
    table = {s: pool_feats[s] for s in candidates}
    return retrieve_subjects(table, target_feat, count=M)


def _clue_rff_cache(model: ModelP, bundle, ids, feats_by_id):
    """Encoded clue for every (subject, direction), [len(ids), D, 2F].

    Rows match ``rff.encode(build_clue(direction, feature, stats))`` but
    are built in one vectorized pass.
    """
    D = bundle.directions.shape[0]
    ang = np.radians(bundle.directions)  # [D, 2]
    out = np.empty((len(ids), D, model.rff.out_dim))
    for i, s in enumerate(ids):
        if model.clue_feature_len:
            base = model.feature_stats.standardize(feats_by_id[s])
            clues = np.concatenate(
                [ang, np.broadcast_to(base, (D, base.shape[0]))], axis=1
            )
        else:
            clues = ang
        out[i] = model.rff.encode_many(clues)
    return out


def predict_field_p(model: ModelP, bundle, pool_ids, subset,
                    target_id) -> np.ndarray:
    """Predicted [D, 2K] pair spectra for one subject.

    The subject's clue comes from its own measured subset; graph nodes are
    retrieved from ``pool_ids`` (typically the training split).
    """
    pool_feats = _pool_features(model, bundle, pool_ids, subset)
    target_feat = (
        None if model.config.feature_kind == "lsd"
        else subject_feature(bundle, target_id, subset,
                             model.config.feature_kind)
    )
    nb = _neighbors_for(model, bundle, pool_feats, pool_ids, subset,
                        target_id, target_feat)
    D = bundle.directions.shape[0]
    mag = bundle.magnitudes.astype(np.float64)
    nb_rows = [bundle.subject_index(s) for s in nb]
    if model.config.use_clue:
        feats_by_id = {}
        if model.clue_feature_len:
            feats_by_id = {s: pool_feats[s] for s in nb}
            feats_by_id[target_id] = target_feat
        cache = _clue_rff_cache(model, bundle, nb + [target_id], feats_by_id)
    out = np.empty((D, 2 * model.K))
    with ad.no_grad():
        for d in range(D):
            feats = mag[nb_rows, d]
            if model.config.use_clue:
                pred = model.forward(feats, cache[:-1, d], cache[-1, d])
            else:
                pred = model.forward(feats, None, None)
            out[d] = pred.data
    return out


# -- training --------------------------------------------------------------


def train_model_p(bundle, split, mconfig: ModelPConfig, tconfig,
                  seed: int = 0):
    """Pseudo-target training over every (train subject, direction) pair.

    Returns the best-validation model and a per-epoch log.  Two calls with
    identical inputs produce identical parameters and logs.
    """
    rng = np.random.default_rng(seed)
    subset = list(split.measurement_subset)
    train_ids = list(split.train)
    val_ids = list(split.val)
    model = ModelP.create(rng, bundle.K, len(subset), mconfig)
    if len(train_ids) - 1 < model.config.retrieval_count:
        raise ValueError(
            f"{len(train_ids)} training subjects cannot support "
            f"retrieval of {model.config.retrieval_count}"
        )

    pool_feats = _pool_features(model, bundle, train_ids, subset)
    if model.clue_feature_len:
        model.feature_stats = compute_feature_stats(
            np.stack([pool_feats[s] for s in train_ids])
        )
    else:
        model.feature_stats = FeatureStats(mean=np.empty(0), std=np.empty(0))

    neighbors = {
        s: _neighbors_for(model, bundle, pool_feats, train_ids, subset, s,
                          None if pool_feats is None else pool_feats[s])
        for s in train_ids
    }
    nb_rows = {
        s: [bundle.subject_index(q) for q in neighbors[s]] for s in train_ids
    }
    s_rows = {s: bundle.subject_index(s) for s in train_ids}

    mag = bundle.magnitudes.astype(np.float64)
    D = bundle.directions.shape[0]
    if model.config.use_clue:
        cache = _clue_rff_cache(model, bundle, train_ids, pool_feats or {})
        cache_pos = {s: i for i, s in enumerate(train_ids)}

    params = model.named_parameters()
    optimizer = make_optimizer(tconfig.optimizer, params, tconfig.lr)
    schedule = make_schedule(optimizer, tconfig.schedule)

    pairs = [(s, d) for s in train_ids for d in range(D)]
    log = []
    best_val = np.inf
    best_params = [p.data.copy() for _, p in params]

    for epoch in range(tconfig.epochs):
        order = rng.permutation(len(pairs))
        total = 0.0
        for k in order:
            s, d = pairs[k]
            feats = mag[nb_rows[s], d]
            if model.config.use_clue:
                rows = [cache_pos[q] for q in neighbors[s]]
                clue_rffs = cache[rows, d]
                target_rff = cache[cache_pos[s], d]
            else:
                clue_rffs = target_rff = None
            pred = model.forward(feats, clue_rffs, target_rff)
            loss = loss_lsd(pred, mag[s_rows[s], d])
            total += loss.item()
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
        train_lsd = total / len(pairs)
        val_lsd = _validation_lsd(model, bundle, train_ids, subset, val_ids)
        if schedule is not None:
            schedule.step(val_lsd)
        log.append({"epoch": epoch, "train_lsd": train_lsd,
                    "val_lsd": val_lsd, "lr": optimizer.lr})
        if val_lsd < best_val:
            best_val = val_lsd
            best_params = [p.data.copy() for _, p in params]
    for (_, p), w in zip(params, best_params):
        p.data = w.copy()
    return model, log


def _validation_lsd(model, bundle, train_ids, subset, val_ids) -> float:
    from .dsp import lsd_db

    mag = bundle.magnitudes.astype(np.float64)
    eval_dirs = [d for d in range(bundle.directions.shape[0])
                 if d not in set(subset)]
    errs = []
    for v in val_ids:
        field = predict_field_p(model, bundle, train_ids, subset, v)
        row = bundle.subject_index(v)
        errs.extend(lsd_db(field[d], mag[row, d]) for d in eval_dirs)
    return float(np.mean(errs))

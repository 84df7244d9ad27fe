"""The conditional predictor: encoders, intention graphs, cross-domain fusion and decoding.

Parameter groups exist only for the enabled parts of the ablation toggles, so a
disabled domain contributes neither parameters nor inputs.
"""
import logging
from typing import Dict, List

import numpy as np
import torch
from torch import nn

from citpred.core.config import RunConfig
from citpred.core.geometry import own_cell_index
from citpred.nn.batching import SceneBatch
from citpred.nn.cross_domain import CrossAttention, InfluenceEvaluation, flatten_graph, readout
from citpred.nn.decoder import FusionFCN, ManeuverHead, PredictionSet, TrajectoryDecoder, assemble, refine
from citpred.nn.encoder import TemporalEncoder
from citpred.nn.graphs import SocialPooling, scatter
from citpred.nn.init import init_uniform_

logger = logging.getLogger(__name__)

DOMAINS = ("c", "f")


def enabled_domains(cfg: RunConfig) -> List[str]:
    return [d for d, on in zip(DOMAINS, (cfg.info_c, cfg.info_f)) if on]


def intention_dim(cfg: RunConfig) -> int:
    """Size of Z for the configured toggles."""
    domains = enabled_domains(cfg)
    if not domains:
        return cfg.enc_dim
    per_domain = cfg.enc_dim + 1 if cfg.icd == "off" else cfg.attn_dim
    return per_domain * len(domains) + (2 * cfg.ctx_dim if cfg.iie else 0)


class IntentionPredictor(nn.Module):
    def __init__(self, cfg: RunConfig):
        super().__init__()
        self.cfg = cfg
        self.grid = cfg.grid
        self.own_cell = own_cell_index(self.grid)
        self.domains = enabled_domains(cfg)
        slope = cfg.leaky_slope
        enc_kwargs = dict(embed_dim=cfg.input_embed_dim, enc_dim=cfg.enc_dim, kernel=cfg.conv_kernel, leaky_slope=slope)

        self.enc_target = TemporalEncoder("target", **enc_kwargs)
        if cfg.info_c:
            self.enc_neighbor = TemporalEncoder("neighbor", **enc_kwargs)
            self.pool_c = SocialPooling(cfg.enc_dim, slope)
        if cfg.info_f:
            self.enc_ego = TemporalEncoder("ego", **enc_kwargs)
            self.pool_f = SocialPooling(cfg.enc_dim, slope)
        if cfg.icd != "off":
            # Same module per domain in both modes; only the key/value source differs.
            for d in self.domains:
                setattr(self, f"attn_{d}", CrossAttention(cfg.enc_dim + 1, cfg.attn_dim, cfg.attn_heads, slope))
        if cfg.iie:
            self.influence = InfluenceEvaluation(cfg.enc_dim + 1, cfg.enc_dim, cfg.ctx_dim, cfg.iie_pool_rows, slope)

        self.z_dim = intention_dim(cfg)
        if cfg.fusion:
            self.fcn = FusionFCN(self.z_dim, cfg.fcn_channels, slope)
        self.maneuver = ManeuverHead(self.z_dim, cfg.maneuver_hidden, slope)
        self.decoder = TrajectoryDecoder(self.z_dim, cfg.dec_dim, cfg.t_pred, slope, cfg.sigma_floor)

        for name, module in self.named_children():
            init_uniform_(module, cfg.seed, name.removeprefix("enc_"))
        self.to(torch.float64 if cfg.dtype == "float64" else torch.float32)

    @property
    def dtype(self) -> torch.dtype:
        return next(self.parameters()).dtype

    def intentions(self, batch: SceneBatch) -> Dict[str, torch.Tensor]:
        """Intermediate tensors up to Z for every target in the batch."""
        n = len(batch)
        out: Dict[str, torch.Tensor] = {"xi_tar": self.enc_target(batch.target_hist)}
        xi = out["xi_tar"]
        if "c" in self.domains:
            nbr = self.enc_neighbor(batch.nbr_hist)
            social = scatter(nbr, batch.nbr_offset, self.grid, owners=batch.nbr_owner, count=n)
            out["graph_c"] = self.pool_c(xi, social)
        if "f" in self.domains:
            ego = self.enc_ego(batch.ego_plan)[torch.as_tensor(batch.owners)]
            # The ego sits at the origin of the instance frame.
            social = scatter(ego, -batch.target_pos, self.grid, owners=np.arange(n), count=n)
            out["graph_f"] = self.pool_f(xi, social)

        if not self.domains:
            out["z"] = xi
            return out

        mats = {d: flatten_graph(out[f"graph_{d}"]) for d in self.domains}
        pooled = []
        for d in self.domains:
            if self.cfg.icd == "off":
                reduced = mats[d]
            else:
                source = mats[d] if self.cfg.icd == "self" else mats["f" if d == "c" else "c"]
                reduced, out[f"weights_{d}"] = getattr(self, f"attn_{d}")(mats[d], source)
                out[f"attended_{d}"] = reduced
            pooled.append(readout(reduced, self.cfg.intention_readout, self.own_cell))
        out["i"] = torch.cat(pooled, dim=-1)

        if self.cfg.iie:
            out["beta"], out["g"] = self.influence(out["graph_c"], out["graph_f"], xi)
            out["z"] = torch.cat([out["i"], out["g"]], dim=-1)
        else:
            out["z"] = out["i"]
        return out

    def forward(self, batch: SceneBatch) -> PredictionSet:
        inter = self.intentions(batch)
        z = inter["z"]
        if self.cfg.fusion:
            s = assemble(z, batch.target_pos, self.grid, owners=batch.owners, count=batch.instance_count)
            z_plus = refine(s, self.fcn)
        else:
            z_plus = z
        log_p_lat, log_p_lon = self.maneuver(z_plus)
        return PredictionSet(
            instance_ids=batch.instance_ids,
            target_ids=batch.target_ids,
            origins=batch.target_pos,
            log_p_lat=log_p_lat,
            log_p_lon=log_p_lon,
            trajectories=self.decoder(z_plus),
            beta=inter.get("beta"),
            rate=batch.plan_rate,
        )

    def parameter_groups(self) -> Dict[str, int]:
        return {name: sum(p.numel() for p in module.parameters()) for name, module in self.named_children()}


def build_model(cfg: RunConfig) -> IntentionPredictor:
    model = IntentionPredictor(cfg)
    logger.info(f"Built predictor ({cfg.toggles}) with parameter groups {model.parameter_groups()}")
    return model

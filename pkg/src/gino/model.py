"""Full model assembly, loss, training loop and evaluation metrics.

The operator is a composition Q . K_L . ... . K_1 . P: a pointwise lift P of
the grid inputs (SDF + coordinates, plus the GNO-encoded point cloud in the
encoder-decoder variant), L spectral blocks on the latent grid, a GNO decode
at the query points and a pointwise projection Q onto (pressure, shear).
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt_io
from . import tensor as tt
from .errors import ContractError, DivergenceError, ValidationError
from .fno import FnoBlock
from .geometry import Mesh, drag_coefficient, frontal_area, subsample_mesh
from .geometry.fields import SurfaceField
from .gno import KernelMlp, LatentGrid, gno_decode, gno_encode
from .neighbors import build as build_hash_grid
from .optim import AdamState, adam_step, step_lr
from .rng import substream
from .tensor import Tape, Tensor

_REQUIRED_FIELDS = ("variant", "latent_resolution", "r_out", "modes")


@dataclass
class GinoConfig:
    """Hyperparameters; physics-relevant fields have no silent defaults."""

    variant: str                      # encoder_decoder | decoder_only
    latent_resolution: int
    r_out: float
    modes: tuple[int, int, int]
    r_in: float | None = None
    channels: int = 64
    fno_blocks: int = 4
    decode_channels: int | None = None
    encoder_channels: int = 16
    kernel_features: int = 8
    kernel_hidden: tuple[int, ...] = (64, 64)
    kernel_weighted: bool = False
    kernel_cutoff: bool = True
    norm: str = "adaptive"            # adaptive | instance | none
    activation: str = "gelu"
    lr: float = 2.5e-4
    halve_at_epoch: int = 50
    epochs: int = 100
    batch_size: int = 2
    drag_weight: float = 0.0
    train_query_count: int = 0        # 0 = use every surface vertex
    seed: int = 0
    dtype: str = "f32"

    def __post_init__(self):
        self.modes = tuple(int(m) for m in self.modes)
        self.kernel_hidden = tuple(int(h) for h in self.kernel_hidden)
        self.validate()

    def validate(self) -> None:
        bad = []
        if self.variant not in ("encoder_decoder", "decoder_only"):
            bad.append(f"variant={self.variant!r}")
        if self.variant == "decoder_only" and self.r_in is not None:
            bad.append("r_in set for decoder_only variant")
        if self.variant == "encoder_decoder" and self.r_in is None:
            bad.append("r_in missing for encoder_decoder variant")
        for name in ("latent_resolution", "channels", "fno_blocks", "epochs",
                     "batch_size", "kernel_features"):
            if getattr(self, name) < 1:
                bad.append(f"{name}={getattr(self, name)}")
        if self.r_out <= 0:
            bad.append(f"r_out={self.r_out}")
        if len(self.modes) != 3 or any(m < 1 for m in self.modes):
            bad.append(f"modes={self.modes}")
        if self.norm not in ("adaptive", "instance", "none"):
            bad.append(f"norm={self.norm!r}")
        if self.dtype not in ("f32", "f64"):
            bad.append(f"dtype={self.dtype!r}")
        if bad:
            raise ValidationError("invalid config fields: " + ", ".join(bad))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["modes"] = list(self.modes)
        d["kernel_hidden"] = list(self.kernel_hidden)
        return d

    @staticmethod
    def from_dict(d: dict) -> "GinoConfig":
        known = set(GinoConfig.__dataclass_fields__)
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValidationError(f"unknown config keys: {', '.join(unknown)}")
        missing = sorted(k for k in _REQUIRED_FIELDS if k not in d)
        if missing:
            raise ValidationError(f"missing required config keys: {', '.join(missing)}")
        return GinoConfig(**d)


@dataclass
class Sample:
    """One training/eval instance: geometry, SDF grid, weights, target."""

    sample_id: str
    mesh: Mesh
    sdf_values: np.ndarray            # [S, S, S]
    weights: np.ndarray               # per-vertex quadrature weights
    velocity: float
    target: np.ndarray                # [N, 2]: pressure, shear

    def __post_init__(self):
        n = self.mesh.n_vertices
        if self.target.shape != (n, 2):
            raise ValidationError(
                f"{self.sample_id}: target shape {self.target.shape} != ({n}, 2)")
        if self.weights.shape != (n,):
            raise ValidationError(f"{self.sample_id}: weights shape mismatch")
        s = self.sdf_values.shape[0]
        if self.sdf_values.shape != (s, s, s):
            raise ValidationError(f"{self.sample_id}: sdf grid must be cubic")


@dataclass
class Metrics:
    """Aggregate evaluation result (means over samples)."""

    rel_l2_normalized: dict
    rel_l2_denormalized: dict
    mean_rel_l2_normalized: float
    mean_rel_l2_denormalized: float
    drag_rel_error: float | None
    wall_time_s: float
    n_samples: int

    def to_dict(self) -> dict:
        return asdict(self)


FIELD_NAMES = ("pressure", "shear")


def relative_l2(pred: np.ndarray, target: np.ndarray) -> float:
    """||pred - target||_2 / ||target||_2."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValidationError(f"shape mismatch {pred.shape} vs {target.shape}")
    denom = float(np.linalg.norm(target))
    if denom == 0.0:
        raise ValidationError("relative L2 undefined for zero-norm target")
    return float(np.linalg.norm(pred - target)) / denom


@dataclass
class FieldStats:
    """Per-channel z-score statistics from the training split."""

    mean: np.ndarray
    std: np.ndarray
    vel_mean: float
    vel_std: float

    def normalize(self, target: np.ndarray) -> np.ndarray:
        return (target - self.mean) / self.std

    def denormalize(self, pred: np.ndarray) -> np.ndarray:
        return pred * self.std + self.mean

    def normalize_velocity(self, v: float) -> float:
        return (float(v) - self.vel_mean) / self.vel_std

    @staticmethod
    def from_samples(samples: list[Sample]) -> "FieldStats":
        stacked = np.concatenate([s.target for s in samples], axis=0)
        vels = np.array([s.velocity for s in samples])
        std = stacked.std(axis=0)
        std[std == 0] = 1.0
        vstd = float(vels.std())
        return FieldStats(mean=stacked.mean(axis=0), std=std,
                          vel_mean=float(vels.mean()),
                          vel_std=vstd if vstd > 0 else 1.0)

    def arrays(self) -> dict[str, np.ndarray]:
        return {"stats.mean": self.mean, "stats.std": self.std,
                "stats.vel": np.array([self.vel_mean, self.vel_std])}

    @staticmethod
    def from_arrays(arrs: dict[str, np.ndarray]) -> "FieldStats":
        vel = arrs["stats.vel"]
        return FieldStats(mean=arrs["stats.mean"], std=arrs["stats.std"],
                          vel_mean=float(vel[0]), vel_std=float(vel[1]))


class _PointwiseMlp:
    """Two-layer pointwise MLP (the lift P and projection Q)."""

    def __init__(self, d_in: int, d_hidden: int, d_out: int, dtype: str,
                 rng: np.random.Generator, prefix: str, zero_last: bool = False):
        self.prefix = prefix
        self.w1 = Tensor(rng.normal(0.0, np.sqrt(2.0 / d_in), (d_hidden, d_in)),
                         dtype=dtype, requires_grad=True)
        self.b1 = Tensor(np.zeros(d_hidden), dtype=dtype, requires_grad=True)
        w2 = np.zeros((d_out, d_hidden)) if zero_last else \
            rng.normal(0.0, np.sqrt(1.0 / d_hidden), (d_out, d_hidden))
        self.w2 = Tensor(w2, dtype=dtype, requires_grad=True)
        self.b2 = Tensor(np.zeros(d_out), dtype=dtype, requires_grad=True)

    def params(self) -> dict[str, Tensor]:
        return {f"{self.prefix}.0.w": self.w1, f"{self.prefix}.0.b": self.b1,
                f"{self.prefix}.1.w": self.w2, f"{self.prefix}.1.b": self.b2}

    def __call__(self, x: Tensor) -> Tensor:
        return tt.linear(tt.gelu(tt.linear(x, self.w1, self.b1)), self.w2, self.b2)


class Gino:
    """The assembled operator with its parameter registry."""

    def __init__(self, config: GinoConfig, rng: np.random.Generator | None = None):
        config.validate()
        self.config = config
        rng = rng or substream(config.seed, "init")
        c = config.channels
        dt = config.dtype
        self.grid = LatentGrid(config.latent_resolution)

        self.enc_kernel = None
        d_in = 4  # sdf + xyz
        if config.variant == "encoder_decoder":
            self.enc_kernel = KernelMlp(
                c_in=1, c_out=config.encoder_channels,
                n_features=config.kernel_features, hidden=config.kernel_hidden,
                weighted=config.kernel_weighted, cutoff=config.kernel_cutoff,
                dtype=dt, rng=rng, prefix="enc.kernel")
            d_in += config.encoder_channels
        self.lift = _PointwiseMlp(d_in, c, c, dt, rng, "p")
        self.blocks = [
            FnoBlock(c, config.modes, norm=config.norm,
                     activation=config.activation, dtype=dt, rng=rng,
                     prefix=f"fno.{i}")
            for i in range(config.fno_blocks)
        ]
        c_dec = config.decode_channels or c
        self.dec_kernel = KernelMlp(
            c_in=c, c_out=c_dec, n_features=config.kernel_features,
            hidden=config.kernel_hidden, weighted=False,
            cutoff=config.kernel_cutoff, dtype=dt, rng=rng, prefix="dec.kernel")
        self.project = _PointwiseMlp(c_dec, c, 2, dt, rng, "q", zero_last=True)

        coords = self.grid.nodes.T.reshape(3, *(config.latent_resolution,) * 3)
        self._coords = coords.astype(tt.DTYPES[dt])
        self._decode_hash = build_hash_grid(self.grid.nodes, config.r_out)

    def params(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        if self.enc_kernel is not None:
            out.update(self.enc_kernel.params())
        out.update(self.lift.params())
        for b in self.blocks:
            out.update(b.params())
        out.update(self.dec_kernel.params())
        out.update(self.project.params())
        return out

    def trainable(self) -> dict[str, Tensor]:
        return {k: v for k, v in self.params().items() if v.requires_grad}

    def forward(self, sdf_values: np.ndarray, velocity_norm: float,
                queries: np.ndarray, points: np.ndarray | None = None,
                weights: np.ndarray | None = None) -> Tensor:
        """Normalized-field prediction [Q, 2] at the query points."""
        cfg = self.config
        s = cfg.latent_resolution
        if sdf_values.shape != (s, s, s):
            raise ContractError(
                f"sdf grid {sdf_values.shape} does not match latent resolution {s}")
        feats = [sdf_values[None].astype(self._coords.dtype), self._coords]
        if self.enc_kernel is not None:
            if points is None or weights is None:
                raise ContractError("encoder variant needs points and weights")
            encoded = gno_encode(points, None, weights, self.grid, cfg.r_in,
                                 self.enc_kernel)
            grid_in = tt.concat([encoded, Tensor(np.concatenate(feats))], axis=0)
        else:
            grid_in = Tensor(np.concatenate(feats))

        flat = tt.transpose(tt.reshape(grid_in, (grid_in.shape[0], s ** 3)), (1, 0))
        v = tt.transpose(self.lift(flat), (1, 0))
        v = tt.reshape(v, (cfg.channels, s, s, s))
        for blk in self.blocks:
            v = blk(v, velocity_norm)
        u = gno_decode(v, queries, cfg.r_out, self.dec_kernel, self.grid,
                       hash_grid=self._decode_hash)
        return self.project(u)

    # -- persistence ---------------------------------------------------------

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: p.data for name, p in self.params().items()}

    def load_state(self, arrays: dict[str, np.ndarray]) -> None:
        for name, p in self.params().items():
            if name not in arrays:
                raise ValidationError(f"checkpoint missing tensor {name!r}")
            if tuple(arrays[name].shape) != p.data.shape:
                raise ValidationError(f"checkpoint tensor {name!r} has shape "
                                      f"{arrays[name].shape}, expected {p.data.shape}")
            p.data = arrays[name].astype(p.data.dtype)


def _rel_l2_tensor(pred: Tensor, target: np.ndarray) -> Tensor:
    diff = pred - Tensor(target.astype(pred.data.dtype))
    num = tt.sqrt(tt.tsum(tt.mul(diff, diff)))
    denom = float(np.linalg.norm(target))
    if denom == 0:
        raise ValidationError("relative L2 undefined for zero-norm target")
    return tt.mul(num, 1.0 / denom)


def _tensor_abs(x: Tensor) -> Tensor:
    return tt.relu(x) + tt.relu(-x)


def _sample_loss(model: Gino, sample: Sample, stats: FieldStats,
                 query_idx: np.ndarray | None) -> Tensor:
    """Mean over channels of normalized relative L2 (+ optional drag term)."""
    cfg = model.config
    verts = sample.mesh.vertices
    tgt_norm = stats.normalize(sample.target)
    if query_idx is None:
        queries, tgt = verts, tgt_norm
    else:
        queries, tgt = verts[query_idx], tgt_norm[query_idx]
    pred = model.forward(sample.sdf_values, stats.normalize_velocity(sample.velocity),
                         queries, points=verts, weights=sample.weights)
    terms = []
    for c in range(2):
        pc = tt.einsum("qc,c->q", pred, _unit(c, pred.data.dtype))
        terms.append(_rel_l2_tensor(pc, tgt[:, c]))
    loss = tt.mul(terms[0] + terms[1], 0.5)

    if cfg.drag_weight > 0:
        if query_idx is not None:
            full = model.forward(sample.sdf_values,
                                 stats.normalize_velocity(sample.velocity),
                                 verts, points=verts, weights=sample.weights)
        else:
            full = pred
        loss = loss + tt.mul(_drag_error_tensor(model, sample, stats, full),
                             cfg.drag_weight)
    return loss


def _unit(c: int, dtype) -> Tensor:
    e = np.zeros(2, dtype=dtype)
    e[c] = 1.0
    return Tensor(e)


def _drag_error_tensor(model: Gino, sample: Sample, stats: FieldStats,
                       pred_norm: Tensor) -> Tensor:
    """|c_d(pred) - c_d(target)| / |c_d(target)| from full-field predictions."""
    mesh = sample.mesh
    area = frontal_area(mesh)
    ref_field = SurfaceField(mesh=mesh, pressure=sample.target[:, 0],
                             shear=sample.target[:, 1])
    c_ref = drag_coefficient(ref_field, sample.velocity, area)
    if c_ref == 0:
        raise ValidationError("reference drag coefficient is zero")
    dt = pred_norm.data.dtype
    # de-normalize: pred * std + mean
    pred_raw = tt.mul(pred_norm, Tensor(stats.std.astype(dt))) + \
        Tensor(stats.mean.astype(dt))
    # face averages via vertex gathers
    f = mesh.faces
    p_face = tt.mul(tt.take_rows(pred_raw, f[:, 0]) + tt.take_rows(pred_raw, f[:, 1])
                    + tt.take_rows(pred_raw, f[:, 2]), 1.0 / 3.0)
    ndoti = mesh.face_normals @ np.array([-1.0, 0.0, 0.0])
    w_p = (ndoti * mesh.face_areas).astype(dt)
    w_s = mesh.face_areas.astype(dt)
    wmat = np.stack([w_p, w_s], axis=1)  # pressure weight, shear weight
    integ = tt.tsum(tt.mul(p_face, Tensor(wmat)))
    scale = 2.0 / (sample.velocity ** 2 * area)
    c_pred = tt.mul(integ, scale)
    return tt.mul(_tensor_abs(c_pred + (-c_ref)), 1.0 / abs(c_ref))


def predict_sample(model: Gino, sample: Sample, stats: FieldStats,
                   queries: np.ndarray | None = None,
                   points: np.ndarray | None = None,
                   weights: np.ndarray | None = None) -> np.ndarray:
    """De-normalized field prediction [Q, 2] (no gradient recording)."""
    q = queries if queries is not None else sample.mesh.vertices
    pts = points if points is not None else sample.mesh.vertices
    wts = weights if weights is not None else sample.weights
    pred = model.forward(sample.sdf_values, stats.normalize_velocity(sample.velocity),
                         q, points=pts, weights=wts)
    return stats.denormalize(pred.numpy().astype(np.float64))


def evaluate(model: Gino, samples: list[Sample], stats: FieldStats,
             rate: int = 1, seed: int = 0) -> Metrics:
    """Metrics on full or rate-subsampled meshes.

    Subsampling draws ceil(N/rate) vertices per sample (seeded); queries and,
    for the encoder variant, the input cloud are subsampled together. Drag is
    computed from full-field predictions and reported only at rate 1.
    """
    t0 = time.perf_counter()
    per_field_norm = np.zeros(2)
    per_field_raw = np.zeros(2)
    drag_errs = []
    for i, sample in enumerate(samples):
        verts = sample.mesh.vertices
        if rate > 1:
            pts, wts, idx = subsample_mesh(sample.mesh, sample.weights, rate,
                                           seed=seed + i, stream="eval_sub")
        else:
            pts, wts, idx = verts, sample.weights, np.arange(len(verts))
        pred_raw = predict_sample(model, sample, stats, queries=pts,
                                  points=pts, weights=wts)
        tgt_raw = sample.target[idx]
        tgt_norm = stats.normalize(tgt_raw)
        pred_norm = (pred_raw - stats.mean) / stats.std
        for c in range(2):
            per_field_norm[c] += relative_l2(pred_norm[:, c], tgt_norm[:, c])
            per_field_raw[c] += relative_l2(pred_raw[:, c], tgt_raw[:, c])
        if rate == 1:
            area = frontal_area(sample.mesh)
            ref = drag_coefficient(SurfaceField(sample.mesh, sample.target[:, 0],
                                                sample.target[:, 1]),
                                   sample.velocity, area)
            got = drag_coefficient(SurfaceField(sample.mesh, pred_raw[:, 0],
                                                pred_raw[:, 1]),
                                   sample.velocity, area)
            if ref != 0:
                drag_errs.append(abs(got - ref) / abs(ref))
    n = len(samples)
    per_field_norm /= n
    per_field_raw /= n
    return Metrics(
        rel_l2_normalized={k: float(v) for k, v in zip(FIELD_NAMES, per_field_norm)},
        rel_l2_denormalized={k: float(v) for k, v in zip(FIELD_NAMES, per_field_raw)},
        mean_rel_l2_normalized=float(per_field_norm.mean()),
        mean_rel_l2_denormalized=float(per_field_raw.mean()),
        drag_rel_error=float(np.mean(drag_errs)) if drag_errs else None,
        wall_time_s=time.perf_counter() - t0,
        n_samples=n,
    )


def split_dataset(samples: list[Sample], seed: int,
                  train_fraction: float = 0.8) -> tuple[list[Sample], list[Sample]]:
    """Seed-shuffled 80/20 split by sample index."""
    order = substream(seed, "split").permutation(len(samples))
    n_train = int(round(train_fraction * len(samples)))
    train = [samples[i] for i in order[:n_train]]
    valid = [samples[i] for i in order[n_train:]]
    return train, valid


def _checkpoint_arrays(model: Gino, adam: AdamState | None,
                       stats: FieldStats) -> dict[str, np.ndarray]:
    arrays = dict(model.state_arrays())
    arrays.update(stats.arrays())
    if adam is not None:
        for name in model.trainable():
            arrays[f"adam.m.{name}"] = adam.m[name]
            arrays[f"adam.v.{name}"] = adam.v[name]
    return arrays


def save_checkpoint(path, model: Gino, stats: FieldStats,
                    adam: AdamState | None = None, epoch: int = -1,
                    extra_meta: dict | None = None) -> None:
    meta = {"config": model.config.to_dict(), "epoch": epoch}
    if adam is not None:
        meta["adam"] = {"step": adam.step, "lr": adam.lr, "beta1": adam.beta1,
                        "beta2": adam.beta2, "eps": adam.eps}
    meta.update(extra_meta or {})
    ckpt_io.save(path, _checkpoint_arrays(model, adam, stats), meta)


def load_checkpoint(path) -> tuple[Gino, FieldStats, dict, dict[str, np.ndarray]]:
    arrays, meta = ckpt_io.load(path)
    config = GinoConfig.from_dict(meta["config"])
    model = Gino(config)
    model.load_state(arrays)
    stats = FieldStats.from_arrays(arrays)
    return model, stats, meta, arrays


def train(samples: list[Sample], config: GinoConfig, out_dir=None,
          resume: str | None = None) -> dict:
    """Train on an 80/20 split; returns history plus artifact paths.

    Deterministic for a fixed seed: sample order, query subsets and parameter
    init all come from named sub-streams of `config.seed`, indexed by epoch so
    a resumed run replays the identical remainder.
    """
    if not samples:
        raise ValidationError("empty dataset")
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    train_set, valid_set = split_dataset(samples, config.seed)
    if not train_set or not valid_set:
        raise ValidationError("dataset too small for an 80/20 split")
    stats = FieldStats.from_samples(train_set)

    model = Gino(config)
    adam = AdamState(model.trainable(), lr=config.lr)
    start_epoch = 0
    best_val = np.inf
    if resume is not None:
        arrays, meta = ckpt_io.load(resume)
        if meta["config"] != config.to_dict():
            raise ValidationError("resume checkpoint config differs from the requested config")
        model.load_state(arrays)
        stats = FieldStats.from_arrays(arrays)
        for name in model.trainable():
            adam.m[name] = arrays[f"adam.m.{name}"].astype(adam.m[name].dtype)
            adam.v[name] = arrays[f"adam.v.{name}"].astype(adam.v[name].dtype)
        adam.step = int(meta["adam"]["step"])
        start_epoch = int(meta["epoch"]) + 1
        best_val = float(meta.get("best_val", np.inf))

    n_train = len(train_set)
    history: list[dict] = []
    trainable = model.trainable()

    def epoch_queries(sample: Sample, epoch: int, index: int) -> np.ndarray | None:
        if config.train_query_count <= 0:
            return None
        n = sample.mesh.n_vertices
        k = min(config.train_query_count, n)
        rng = substream(config.seed, "queries", epoch * 1_000_000 + index)
        return np.sort(rng.choice(n, size=k, replace=False))

    for epoch in range(start_epoch, config.epochs):
        adam.lr = step_lr(config.lr, epoch, config.halve_at_epoch)
        order = substream(config.seed, "order", epoch).permutation(n_train)
        epoch_loss = 0.0
        for b0 in range(0, n_train, config.batch_size):
            batch = order[b0: b0 + config.batch_size]
            with Tape() as tape:
                total = None
                for j in batch:
                    qi = epoch_queries(train_set[j], epoch, int(j))
                    term = _sample_loss(model, train_set[j], stats, qi)
                    total = term if total is None else total + term
                loss = tt.mul(total, 1.0 / len(batch))
                loss_val = loss.item()
                if not np.isfinite(loss_val):
                    raise DivergenceError(
                        f"non-finite loss {loss_val} at epoch {epoch}")
                for p in trainable.values():
                    p.grad = None
                tt.backward(loss, tape)
            grads = {k: p.grad for k, p in trainable.items() if p.grad is not None}
            adam_step(trainable, grads, adam)
            epoch_loss += loss_val * len(batch)
        epoch_loss /= n_train

        val_loss = 0.0
        for i, sample in enumerate(valid_set):
            qi = None
            if config.train_query_count > 0:
                n = sample.mesh.n_vertices
                k = min(config.train_query_count, n)
                rng = substream(config.seed, "val_queries", i)
                qi = np.sort(rng.choice(n, size=k, replace=False))
            # no active tape: forward only, nothing recorded
            val_loss += _sample_loss(model, sample, stats, qi).item()
        val_loss /= len(valid_set)

        history.append({"epoch": epoch, "lr": adam.lr,
                        "train_loss": epoch_loss, "val_loss": val_loss})
        if out_dir is not None:
            save_checkpoint(out_dir / "ckpt_last.bin", model, stats, adam,
                            epoch=epoch, extra_meta={"best_val": float(min(best_val, val_loss))})
            if val_loss < best_val:
                save_checkpoint(out_dir / "ckpt_best.bin", model, stats,
                                epoch=epoch, extra_meta={"val_loss": val_loss})
        best_val = min(best_val, val_loss)

    result = {"history": history, "model": model, "stats": stats,
              "train_set": train_set, "valid_set": valid_set}
    if out_dir is not None:
        lines = ["epoch,lr,train_loss,val_loss"]
        lines += [f"{h['epoch']},{h['lr']:.10g},{h['train_loss']:.10g},{h['val_loss']:.10g}"
                  for h in history]
        (out_dir / "loss_curve.csv").write_text("\n".join(lines) + "\n")
        result["checkpoint"] = str(out_dir / "ckpt_best.bin")
    return result

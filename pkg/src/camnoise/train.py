"""Exact-NLL training: Adam over shuffled minibatches, per-epoch validation
(NLL, marginal KL, per-cell sampled std), best-validation checkpointing, and
deterministic seeding throughout."""

import os
import time

import numpy as np

from . import tensor as T
from .checkpoint import restore_into, save_checkpoint
from .context import ConditioningContext
from .data.pipeline import dequantize_arrays
from .model import NumericError
from .optim import AdamState
from .tensor import Tensor

LN_2PI = float(np.log(2.0 * np.pi))


class TrainConfig:
    def __init__(self, epochs=20, batch_size=128, lr=1e-3, seed=0,
                 clip_norm=None, eval_interval=1):
        if epochs < 1:
            raise ValueError("epochs must be >= 1")
        if batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if eval_interval < 1:
            raise ValueError("eval_interval must be >= 1")
        if lr <= 0:
            raise ValueError("lr must be positive")
        self.epochs = int(epochs)
        self.batch_size = int(batch_size)
        self.lr = float(lr)
        self.seed = int(seed)
        self.clip_norm = None if clip_norm is None else float(clip_norm)
        self.eval_interval = int(eval_interval)


class TrainRunLog:
    """Per-epoch metric rows plus wall times. Wall times go to a separate
    sidecar so the metric log is bit-reproducible across runs."""

    def __init__(self, cells):
        self.cells = list(cells)  # [(camera_id, iso), ...] column order
        self.entries = []
        self.seconds = []

    def append(self, epoch, train_nll, val_nll, val_dkl, per_cell_std,
               seconds):
        if self.entries and epoch <= self.entries[-1]["epoch"]:
            raise ValueError("epoch indices must be increasing")
        self.entries.append({
            "epoch": epoch, "train_nll": train_nll, "val_nll": val_nll,
            "val_dkl": val_dkl, "per_cell_std": dict(per_cell_std),
        })
        self.seconds.append(seconds)

    @staticmethod
    def _fmt(v):
        return "" if v is None else f"{v:.10g}"

    def to_csv(self, path):
        cols = [f"std_c{c}_i{g}" for c, g in self.cells]
        lines = [",".join(["epoch", "train_nll", "val_nll", "val_dkl"] + cols)]
        for e in self.entries:
            row = [str(e["epoch"]), self._fmt(e["train_nll"]),
                   self._fmt(e["val_nll"]), self._fmt(e["val_dkl"])]
            for cell in self.cells:
                row.append(self._fmt(e["per_cell_std"].get(cell)))
            lines.append(",".join(row))
        with open(path, "w", encoding="utf-8") as f:
            f.write("\n".join(lines) + "\n")

    def timing_to_csv(self, path):
        lines = ["epoch,seconds"]
        for e, s in zip(self.entries, self.seconds):
            lines.append(f"{e['epoch']},{s:.3f}")
        with open(path, "w", encoding="utf-8") as f:
            f.write("\n".join(lines) + "\n")

    @property
    def best_epoch(self):
        vals = [(e["val_nll"], e["epoch"]) for e in self.entries
                if e["val_nll"] is not None]
        return min(vals)[1] if vals else None


def batch_tensors(view, indices, rng, n_cam, n_iso, dtype=np.float32):
    """Dequantize a batch of records and build its conditioning context."""
    clean_f, _, noise = dequantize_arrays(view.clean[indices],
                                          view.noisy[indices], rng, dtype)
    ctx = ConditioningContext.from_indices(clean_f, view.camera_idx[indices],
                                           view.iso_idx[indices], n_cam,
                                           n_iso, dtype)
    return Tensor(noise), ctx


def nll_per_dim(model, noise, ctx):
    """Mean negative log-likelihood per dimension under the flow.

    -log p(n) = 0.5*sum(z^2) + 0.5*D*ln(2*pi) - logdet, divided by D = 3*H*W.
    """
    z, logdet = model.forward(noise, ctx)
    dims = float(np.prod(z.shape[1:]))
    sq = (z * z).sum(axis=(1, 2, 3))
    nll = (sq * 0.5 + 0.5 * dims * LN_2PI - logdet) * (1.0 / dims)
    loss = nll.mean()
    if not np.isfinite(loss.data):
        raise NumericError("nll_per_dim produced a non-finite loss")
    return loss


def sample_noise(model, ctx, shape, rng):
    """Draw base samples and run the inverse flow; returns a noise Tensor."""
    if shape[0] != ctx.batch:
        raise ValueError("sample shape batch must match context batch")
    params = model.parameters()
    dtype = params[0][1].data.dtype if params else np.float32
    z = Tensor(rng.standard_normal(shape).astype(dtype))
    return model.inverse(z, ctx)


def _epoch_batches(n, batch_size, rng):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def _param_snapshot(model):
    return [(name, p.data.copy()) for name, p in model.parameters()]


def _param_restore(model, snapshot):
    for (_, p), (_, data) in zip(model.parameters(), snapshot):
        p.data[...] = data


def train(model, dataset, cfg, out_dir=None, verbose=False):
    """Train on the dataset's train split; validate per epoch; keep the
    best-validation parameters (restored into the model on return)."""
    from .metrics import eval_model  # local import: metrics uses nll_per_dim

    train_view = dataset.split_view("train")
    val_view = dataset.split_view("val")
    if len(train_view) == 0:
        raise ValueError("train split is empty")

    ss = np.random.SeedSequence(cfg.seed)
    shuffle_ss, dequant_ss, eval_ss = ss.spawn(3)
    shuffle_rng = np.random.default_rng(shuffle_ss)
    dequant_rng = np.random.default_rng(dequant_ss)

    opt = AdamState(model.parameters(), lr=cfg.lr)
    log = TrainRunLog([(dataset.cameras[c], dataset.isos[g])
                       for c, g in dataset.cells_present()])
    best = (np.inf, None)
    last_good = _param_snapshot(model)

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)

    def _abort(exc):
        _param_restore(model, last_good)
        if out_dir is not None:
            save_checkpoint(os.path.join(out_dir, "checkpoint_last.nfck"),
                            model.parameters())
        raise exc

    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        losses = []
        for idx in _epoch_batches(len(train_view), cfg.batch_size,
                                  shuffle_rng):
            noise, ctx = batch_tensors(train_view, idx, dequant_rng,
                                       dataset.n_cam, dataset.n_iso)
            try:
                loss = nll_per_dim(model, noise, ctx)
            except NumericError as exc:
                _abort(exc)
            opt.zero_grad()
            loss.backward()
            gsq = 0.0
            for _, p in model.parameters():
                if p.grad is not None:
                    gsq += float(np.sum(p.grad.astype(np.float64) ** 2))
            if not np.isfinite(gsq):
                _abort(NumericError(
                    f"non-finite gradient at epoch {epoch}"))
            opt.adam_step(clip_norm=cfg.clip_norm)
            losses.append(float(loss.data))
        last_good = _param_snapshot(model)

        val_nll = val_dkl = None
        per_cell = {}
        if len(val_view) and epoch % cfg.eval_interval == 0:
            eval_rng = np.random.default_rng(eval_ss.spawn(1)[0])
            try:
                val_nll, val_dkl, cells = eval_model(
                    model, val_view, eval_rng, batch_size=cfg.batch_size)
            except NumericError as exc:
                _abort(exc)
            per_cell = {cell: v["sampled_std"] for cell, v in cells.items()}
            if val_nll < best[0]:
                best = (val_nll, _param_snapshot(model))
                if out_dir is not None:
                    save_checkpoint(
                        os.path.join(out_dir, "checkpoint_best.nfck"),
                        model.parameters())
        seconds = time.perf_counter() - t0
        train_nll = float(np.mean(losses)) if losses else None
        log.append(epoch, train_nll, val_nll, val_dkl, per_cell, seconds)
        if verbose:
            vtxt = "" if val_nll is None else (
                f" val_nll={val_nll:.4f} val_dkl={val_dkl:.4f}")
            print(f"epoch {epoch}: train_nll={train_nll:.4f}{vtxt} "
                  f"({seconds:.1f}s)", flush=True)

    if out_dir is not None:
        save_checkpoint(os.path.join(out_dir, "checkpoint_last.nfck"),
                        model.parameters())
        log.to_csv(os.path.join(out_dir, "log.csv"))
        log.timing_to_csv(os.path.join(out_dir, "timing.csv"))
    if best[1] is not None:
        _param_restore(model, best[1])
    return log

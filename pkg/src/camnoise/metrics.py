"""Evaluation: held-out NLL/dim, marginal KL between real and sampled noise
histograms, per-(camera, ISO) noise std, and variance-vs-intensity curves.

Histogram convention (fixed so numbers are comparable across runs of this
package): 256 uniform bins over [-1, 1), smoothing 1e-6 added to every bin
before normalization, out-of-range values counted in the edge bins, and the
divergence direction is D_KL(real || sampled).
"""

import numpy as np

from . import tensor as T
from .train import batch_tensors, nll_per_dim, sample_noise

N_KL_BINS = 256
KL_EPS = 1e-6
N_INTENSITY_BINS = 64
MIN_RELIABLE = 100


class MetricsError(ValueError):
    pass


class HistogramPair:
    """Real/sampled noise counts on a shared uniform grid over [-1, 1)."""

    def __init__(self, real, sampled, n_bins=N_KL_BINS, eps=KL_EPS):
        real = np.asarray(real, dtype=np.float64).ravel()
        sampled = np.asarray(sampled, dtype=np.float64).ravel()
        if real.size == 0 or sampled.size == 0:
            raise MetricsError("histogram inputs must be non-empty")
        self.bin_edges = np.linspace(-1.0, 1.0, n_bins + 1)
        self.counts_real = self._count(real, n_bins)
        self.counts_sampled = self._count(sampled, n_bins)
        self.smoothing_eps = eps

    @staticmethod
    def _count(x, n_bins):
        # Clamp out-of-range values into the edge bins so mass is never lost.
        idx = np.clip(((x + 1.0) * 0.5 * n_bins).astype(np.int64), 0,
                      n_bins - 1)
        return np.bincount(idx, minlength=n_bins)

    def kl(self):
        p = self.counts_real + self.smoothing_eps
        q = self.counts_sampled + self.smoothing_eps
        p = p / p.sum()
        q = q / q.sum()
        return float(np.sum(p * np.log(p / q)))


def marginal_kl(real_noise, sampled_noise, n_bins=N_KL_BINS, eps=KL_EPS):
    """D_KL(real || sampled) over smoothed, normalized histograms."""
    return HistogramPair(real_noise, sampled_noise, n_bins, eps).kl()


class IntensityVarianceCurve:
    """Per-intensity-bin noise variance for one (camera, iso) cell/channel."""

    def __init__(self, bin_edges, variance, count, channel, cell,
                 min_count=MIN_RELIABLE):
        self.bin_edges = bin_edges
        self.variance = variance
        self.count = count
        self.channel = int(channel)
        self.cell = tuple(cell)
        self.min_count = int(min_count)

    @property
    def reliable(self):
        return self.count >= self.min_count

    def to_csv(self, path):
        lines = ["bin_lo,bin_hi,count,variance,reliable"]
        for i in range(len(self.variance)):
            var = "" if self.count[i] == 0 else f"{self.variance[i]:.10g}"
            lines.append(f"{self.bin_edges[i]:.10g},{self.bin_edges[i+1]:.10g},"
                         f"{self.count[i]},{var},{int(self.reliable[i])}")
        with open(path, "w", encoding="utf-8") as f:
            f.write("\n".join(lines) + "\n")


def variance_vs_intensity(clean_vals, noise_vals, channel=0, cell=(0, 0),
                          n_bins=N_INTENSITY_BINS, min_count=MIN_RELIABLE):
    """Bin paired (clean intensity, noise) values over [0, 1) and return the
    per-bin sample variance; bins with fewer than min_count samples are
    flagged unreliable."""
    clean_vals = np.asarray(clean_vals, dtype=np.float64).ravel()
    noise_vals = np.asarray(noise_vals, dtype=np.float64).ravel()
    if clean_vals.size == 0:
        raise MetricsError("empty cell: no paired values")
    if clean_vals.shape != noise_vals.shape:
        raise MetricsError("clean/noise value counts differ")
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    idx = np.clip((clean_vals * n_bins).astype(np.int64), 0, n_bins - 1)
    count = np.bincount(idx, minlength=n_bins)
    s1 = np.bincount(idx, weights=noise_vals, minlength=n_bins)
    s2 = np.bincount(idx, weights=noise_vals ** 2, minlength=n_bins)
    var = np.zeros(n_bins)
    nz = count > 1
    mean = np.where(count > 0, s1 / np.maximum(count, 1), 0.0)
    var[nz] = (s2[nz] - count[nz] * mean[nz] ** 2) / (count[nz] - 1)
    var = np.maximum(var, 0.0)
    return IntensityVarianceCurve(edges, var, count, channel, cell, min_count)


def cell_curve(view, ci, gi, channel, rng, n_bins=N_INTENSITY_BINS,
               min_count=MIN_RELIABLE):
    """Variance curve for one cell of a dataset view (dequantized pairs)."""
    cell_view = view.cell_view(ci, gi)
    if len(cell_view) == 0:
        raise MetricsError(f"empty cell ({ci}, {gi})")
    from .data.pipeline import dequantize_arrays
    clean_f, _, noise = dequantize_arrays(cell_view.clean, cell_view.noisy,
                                          rng)
    cell = (view.cameras[ci], view.isos[gi])
    return variance_vs_intensity(clean_f[:, channel], noise[:, channel],
                                 channel, cell, n_bins, min_count)


def collect_real_sampled(model, view, rng, batch_size=128):
    """Dequantized real noise plus one model sample per patch at matching
    context. Returns (real, sampled, mean_nll) with arrays [N,3,H,W]."""
    reals, samples, nlls, weights = [], [], [], []
    n = len(view)
    for start in range(0, n, batch_size):
        idx = np.arange(start, min(start + batch_size, n))
        noise, ctx = batch_tensors(view, idx, rng, view.n_cam, view.n_iso)
        with T.no_grad():
            loss = nll_per_dim(model, noise, ctx)
        nlls.append(float(loss.data))
        weights.append(len(idx))
        sampled = sample_noise(model, ctx, noise.shape, rng)
        reals.append(noise.data)
        samples.append(sampled.data)
    real = np.concatenate(reals)
    sampled = np.concatenate(samples)
    mean_nll = float(np.average(nlls, weights=weights))
    return real, sampled, mean_nll


def eval_model(model, view, rng, batch_size=128):
    """(NLL/dim, marginal D_KL, per-cell std table) on a dataset view.

    Cells with no records are simply absent from the table.
    """
    if len(view) == 0:
        raise MetricsError("evaluation split is empty")
    real, sampled, mean_nll = collect_real_sampled(model, view, rng,
                                                   batch_size)
    d_kl = marginal_kl(real, sampled)
    per_cell = {}
    for ci, gi in view.cells_present():
        m = (view.camera_idx == ci) & (view.iso_idx == gi)
        cell = (view.cameras[ci], view.isos[gi])
        per_cell[cell] = {
            "n": int(m.sum()),
            "real_std": float(real[m].std(ddof=1)),
            "sampled_std": float(sampled[m].std(ddof=1)),
        }
    return mean_nll, d_kl, per_cell


def write_summary_csv(path, rows):
    """One row per model: name, nll, d_kl (rows pre-sorted by caller)."""
    lines = ["model,nll_per_dim,d_kl"]
    for name, nll, dkl in rows:
        lines.append(f"{name},{nll:.10g},{dkl:.10g}")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


def write_per_cell_csv(path, per_model):
    """Rows (model, camera_id, iso, n, real_std, sampled_std)."""
    lines = ["model,camera_id,iso,n,real_std,sampled_std"]
    for name, per_cell in per_model:
        for (cam, iso), v in sorted(per_cell.items()):
            lines.append(f"{name},{cam},{iso},{v['n']},"
                         f"{v['real_std']:.10g},{v['sampled_std']:.10g}")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")

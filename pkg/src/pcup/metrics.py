"""Geometry and attribute quality metrics.

Geometry: Chamfer (squared, symmetric sum), Hausdorff (unsquared,
symmetric max), Jensen-Shannon divergence of voxel occupancy, and mean
point-to-plane distance against locally fitted planes. Attributes: PSNR
under nearest-neighbor association with the symmetric max-MSE convention,
peak 255, BT.709 luma. Content complexity follows the projection-variance
construction: orthographic depth and luma images on the six bounding-box
faces, per-image variance over occupied pixels, averaged over the faces.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import core
from .core import ColoredPointCloud
from .errors import EmptyInput, TooFewReferencePoints

# BT.709 luma weights applied to [0,255]-scaled RGB.
LUMA = np.array([0.2126, 0.7152, 0.0722])

# Reports never carry infinities; exact matches saturate at this many dB.
PSNR_CAP = 100.0


@dataclass
class MetricReport:
    """One evaluation of a predicted cloud against a reference."""

    cd: float
    hd: float
    jsd: float
    p2f: float
    psnr_y: float
    psnr_rgb: tuple[float, float, float]
    g_c: float | None = None
    a_c: float | None = None

    def to_dict(self) -> dict:
        out = {
            "cd": self.cd,
            "hd": self.hd,
            "jsd": self.jsd,
            "p2f": self.p2f,
            "psnr_y": self.psnr_y,
            "psnr_r": self.psnr_rgb[0],
            "psnr_g": self.psnr_rgb[1],
            "psnr_b": self.psnr_rgb[2],
        }
        if self.g_c is not None:
            out["g_c"] = self.g_c
        if self.a_c is not None:
            out["a_c"] = self.a_c
        return out

    def to_text(self) -> str:
        return "".join(f"{k}={v:.9g}\n" for k, v in self.to_dict().items())


def _positions(arr, name: str) -> np.ndarray:
    pos = np.asarray(arr, dtype=np.float64)
    if pos.ndim != 2 or pos.shape[1] != 3 or pos.shape[0] == 0:
        raise EmptyInput(f"{name} must be a non-empty (n, 3) array")
    return pos


def _nn_distances(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    index = core.build_index(dst.astype(np.float32))
    _, dist = core.knn_batch(index, src, 1)
    return dist[:, 0]


def chamfer(a, b) -> float:
    """Symmetric Chamfer distance: both directions' mean squared NN distance."""
    pa = _positions(a, "a")
    pb = _positions(b, "b")
    d_ab = _nn_distances(pa, pb)
    d_ba = _nn_distances(pb, pa)
    return float((d_ab**2).mean() + (d_ba**2).mean())


def hausdorff(a, b) -> float:
    """Symmetric Hausdorff distance, unsquared Euclidean."""
    pa = _positions(a, "a")
    pb = _positions(b, "b")
    return float(max(_nn_distances(pa, pb).max(), _nn_distances(pb, pa).max()))


def _voxel_distribution(pos: np.ndarray, mins: np.ndarray, scale: np.ndarray,
                        res: int) -> np.ndarray:
    idx = np.floor((pos - mins) * scale).astype(np.int64)
    np.clip(idx, 0, res - 1, out=idx)
    lin = (idx[:, 0] * res + idx[:, 1]) * res + idx[:, 2]
    counts = np.bincount(lin, minlength=res**3).astype(np.float64)
    return counts / counts.sum()


def jsd(a, b, voxel_res: int = 32) -> float:
    """Jensen-Shannon divergence of voxel occupancy, natural log, in [0, ln 2].

    Both clouds are binned into the same voxel_res^3 grid spanning their
    joint bounding box.
    """
    pa = _positions(a, "a")
    pb = _positions(b, "b")
    mins = np.minimum(pa.min(axis=0), pb.min(axis=0))
    maxs = np.maximum(pa.max(axis=0), pb.max(axis=0))
    ext = maxs - mins
    scale = np.where(ext > 0, voxel_res / np.where(ext > 0, ext, 1.0), 0.0)
    p = _voxel_distribution(pa, mins, scale, voxel_res)
    q = _voxel_distribution(pb, mins, scale, voxel_res)
    m = 0.5 * (p + q)

    def kl(x, y):
        mask = x > 0
        return float((x[mask] * np.log(x[mask] / y[mask])).sum())

    return 0.5 * kl(p, m) + 0.5 * kl(q, m)


def p2f(pred, reference, k_plane: int = 16) -> float:
    """Mean absolute point-to-plane distance, pred toward reference only.

    Each predicted point is measured against the least-squares plane of
    its nearest reference point's k_plane nearest reference neighbors
    (normal = smallest principal axis of the centered covariance).
    """
    pp = _positions(pred, "pred")
    pr = _positions(reference, "reference")
    if pr.shape[0] < k_plane:
        raise TooFewReferencePoints(
            f"plane fit needs {k_plane} reference points, got {pr.shape[0]}"
        )
    index = core.build_index(pr.astype(np.float32))
    anchor, _ = core.knn_batch(index, pp, 1)
    anchor = anchor[:, 0]
    used = np.unique(anchor)
    nbrs, _ = core.knn_batch(index, pr[used], k_plane)
    pts = pr[nbrs]
    centroids = pts.mean(axis=1)
    centered = pts - centroids[:, None, :]
    cov = np.einsum("uki,ukj->uij", centered, centered)
    _, vecs = np.linalg.eigh(cov)
    normals = vecs[:, :, 0]
    slot = np.searchsorted(used, anchor)
    dist = np.abs(np.einsum("ij,ij->i", pp - centroids[slot], normals[slot]))
    return float(dist.mean())


def _psnr_from_mse(mse: float, peak: float) -> float:
    if mse <= 0.0:
        return PSNR_CAP
    return float(min(10.0 * np.log10(peak * peak / mse), PSNR_CAP))


def attribute_psnr(pred: ColoredPointCloud, gt: ColoredPointCloud,
                   peak: float = 255.0):
    """Color PSNR under nearest-neighbor association, symmetric max-MSE.

    Returns (psnr_y, psnr_rgb): BT.709 luma PSNR and the three per-channel
    PSNRs, all in dB and capped at 100.
    """
    ap = pred.attributes.astype(np.float64) * 255.0
    ag = gt.attributes.astype(np.float64) * 255.0
    gt_index = core.build_index(gt.positions)
    pred_index = core.build_index(pred.positions)
    pg, _ = core.knn_batch(gt_index, pred.positions.astype(np.float64), 1)
    gp, _ = core.knn_batch(pred_index, gt.positions.astype(np.float64), 1)

    def mses(x, y):
        diff = x - y
        rgb = (diff**2).mean(axis=0)
        luma = ((diff @ LUMA) ** 2).mean()
        return rgb, luma

    rgb_pg, y_pg = mses(ap, ag[pg[:, 0]])
    rgb_gp, y_gp = mses(ag, ap[gp[:, 0]])
    rgb = np.maximum(rgb_pg, rgb_gp)
    psnr_rgb = tuple(_psnr_from_mse(v, peak) for v in rgb)
    psnr_y = _psnr_from_mse(max(y_pg, y_gp), peak)
    return psnr_y, psnr_rgb


def content_complexity(cloud: ColoredPointCloud, raster: int = 512):
    """(g_c, a_c): variance of projected depth and luma images.

    The cloud is orthographically projected onto the six bounding-box
    faces at raster x raster; each pixel keeps the point nearest that
    face (ties to the lower point index). Depth is normalized to [0, 255]
    by the box extent, luma is BT.709 on the [0, 255] color scale. The
    per-image population variances over occupied pixels are averaged over
    the six faces.
    """
    pos = cloud.positions.astype(np.float64)
    n = pos.shape[0]
    mins, maxs = pos.min(axis=0), pos.max(axis=0)
    ext = maxs - mins
    luma = (cloud.attributes.astype(np.float64) * 255.0) @ LUMA
    order_key = np.arange(n)

    def pixel_coord(axis: int) -> np.ndarray:
        if ext[axis] <= 0:
            return np.zeros(n, dtype=np.int64)
        coord = np.floor((pos[:, axis] - mins[axis]) / ext[axis] * raster).astype(np.int64)
        return np.clip(coord, 0, raster - 1)

    g_vars = []
    a_vars = []
    for axis in range(3):
        u, v = [ax for ax in range(3) if ax != axis]
        pix = pixel_coord(u) * raster + pixel_coord(v)
        if ext[axis] > 0:
            depth_near = pos[:, axis] - mins[axis]
            gnorm = depth_near / ext[axis] * 255.0
        else:
            depth_near = np.zeros(n)
            gnorm = np.zeros(n)
        for depth, g in ((depth_near, gnorm), (ext[axis] - depth_near, 255.0 - gnorm if ext[axis] > 0 else gnorm)):
            order = np.lexsort((order_key, depth))
            _, first = np.unique(pix[order], return_index=True)
            win = order[first]
            g_vars.append(g[win].var())
            a_vars.append(luma[win].var())
    return float(np.mean(g_vars)), float(np.mean(a_vars))


def evaluate_pair(pred: ColoredPointCloud, gt: ColoredPointCloud,
                  voxel_res: int = 32, k_plane: int = 16,
                  raster: int = 512, complexity: bool = True) -> MetricReport:
    """Full metric suite for a predicted cloud against its ground truth.

    g_c / a_c are the predicted cloud's content complexities.
    """
    psnr_y, psnr_rgb = attribute_psnr(pred, gt)
    g_c = a_c = None
    if complexity:
        g_c, a_c = content_complexity(pred, raster)
    return MetricReport(
        cd=chamfer(pred.positions, gt.positions),
        hd=hausdorff(pred.positions, gt.positions),
        jsd=jsd(pred.positions, gt.positions, voxel_res),
        p2f=p2f(pred.positions, gt.positions, k_plane),
        psnr_y=psnr_y,
        psnr_rgb=psnr_rgb,
        g_c=g_c,
        a_c=a_c,
    )

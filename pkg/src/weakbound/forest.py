"""Structured edge forest: training, prediction and model serialization.

Leaves hold 16x16 boundary patches plus the medoid segmentation of the
samples that reached them; prediction averages leaf patches over a stride
grid. Split nodes threshold a single cell-difference feature; structured
targets are reduced to two pseudo-classes per node by projecting sampled
same-segment indicators onto their top principal direction.
"""

from __future__ import annotations

import hashlib
import struct
import warnings
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy import ndimage

from .channels import (CELL_GRID, N_FEATURES, N_PAIRS_PER_CH, N_RAW, OUT,
                       PAIR_A, PAIR_B, PATCH, RAW_GRID, channel_bases,
                       compute_channels, feature_columns, patch_bases)
from .errors import FormatError, ParameterError, VersionError
from .raster import IGNORE, POSITIVE

MAGIC = b"SEDF0001"
_FEAT_A, _FEAT_B = feature_columns()
_N_BASIS = N_RAW + 13 * CELL_GRID * CELL_GRID + 1  # trailing zero column


@dataclass
class TrainingSamples:
    basis: np.ndarray        # (n, n_basis+1) float32 cell bases per patch
    targets: np.ndarray      # (n, 16, 16) int16 local segmentations
    n_pos: int
    n_neg: int
    missing_pos: int = 0     # requested minus found positives

    def __len__(self):
        return len(self.basis)

    @staticmethod
    def concat(parts: list["TrainingSamples"]) -> "TrainingSamples":
        parts = [p for p in parts if len(p)]
        if not parts:
            raise ParameterError("no training samples")
        return TrainingSamples(
            np.vstack([p.basis for p in parts]),
            np.concatenate([p.targets for p in parts]),
            sum(p.n_pos for p in parts), sum(p.n_neg for p in parts),
            sum(p.missing_pos for p in parts))


@dataclass
class Tree:
    feature: np.ndarray      # int32, -1 on leaves
    threshold: np.ndarray    # float32
    left: np.ndarray         # int32 child ids, -1 on leaves
    right: np.ndarray
    leaf_id: np.ndarray      # int32 into leaf arrays, -1 on internals
    leaf_patch: np.ndarray   # (n_leaves, 16, 16) uint8 boundary patches
    leaf_seg: np.ndarray     # (n_leaves, 16, 16) uint16 medoid segmentations
    leaf_count: np.ndarray   # int32 samples per leaf

    @property
    def depth(self) -> int:
        d = np.zeros(len(self.feature), dtype=np.int64)
        for i in range(len(self.feature)):
            if self.left[i] >= 0:
                d[self.left[i]] = d[i] + 1
                d[self.right[i]] = d[i] + 1
        return int(d.max()) if len(d) else 0


@dataclass
class EdgeForest:
    trees: list[Tree]
    seed: int
    recipe_hash: bytes = b"\x00" * 32
    feature_dim: int = N_FEATURES
    patch_size: int = PATCH
    out_size: int = OUT
    meta: dict = field(default_factory=dict)


def segment_target(annot_patch: np.ndarray) -> np.ndarray:
    """16x16 segmentation: components split by Positive pixels as walls.

    Wall pixels inherit the label of the nearest non-wall pixel, giving a
    fully labeled patch whose internal boundaries follow the annotation.
    """
    walls = annot_patch == POSITIVE
    if walls.all():
        return np.ones(annot_patch.shape, dtype=np.int16)
    regions, n = ndimage.label(~walls)
    if walls.any():
        _, (iy, ix) = ndimage.distance_transform_edt(walls, return_indices=True)
        regions = regions[iy, ix]
    return regions.astype(np.int16)


def patch_boundary(seg: np.ndarray) -> np.ndarray:
    """Boundary of a label patch: right or bottom neighbor differs."""
    out = np.zeros(seg.shape, dtype=np.uint8)
    out[:, :-1] |= seg[:, :-1] != seg[:, 1:]
    out[:-1, :] |= seg[:-1, :] != seg[1:, :]
    return out


def sample_training_patches(image: np.ndarray, annot: np.ndarray,
                            n_pos: int = 500, n_neg: int = 500,
                            seed: int = 0, neg_margin: int = 8) -> TrainingSamples:
    """Draw positive/negative patch samples from a tri-state annotation."""
    h, w = annot.shape
    if np.asarray(image).shape[:2] != (h, w):
        raise ParameterError("annotation dims differ from image dims")
    rng = np.random.default_rng(seed)
    channels = compute_channels(image)
    u4, u6 = channel_bases(channels)

    half = PATCH // 2
    ok = np.zeros((h, w), dtype=bool)
    if h >= PATCH and w >= PATCH:
        ok[half:h - half + 1, half:w - half + 1] = True
    # core free of Ignore: windowed count of ignore pixels must be zero
    ign = (annot == IGNORE).astype(np.float64)
    ign_core = ndimage.uniform_filter(ign, size=OUT, mode="constant", cval=1.0)
    ok &= ign_core < 0.5 / (OUT * OUT)

    # positive = the 16x16 target window contains at least one Positive pixel
    # (anchoring on the pixels themselves would pin every target wall to the
    # patch center and defeat the medoid's averaging over wall placements)
    pos = (annot == POSITIVE).astype(np.float64)
    pos_core = ndimage.uniform_filter(pos, size=OUT, mode="constant", cval=0.0)
    pos_mask = (pos_core > 0.5 / (OUT * OUT)) & ok
    dist = ndimage.distance_transform_edt(annot != POSITIVE)
    neg_mask = (annot == 0) & ok & (dist >= neg_margin)

    def draw(mask, count):
        ys, xs = np.nonzero(mask)
        if ys.size == 0 or count == 0:
            return np.empty(0, np.int64), np.empty(0, np.int64)
        take = min(count, ys.size)
        pick = rng.choice(ys.size, size=take, replace=False)
        return ys[pick], xs[pick]

    pys, pxs = draw(pos_mask, n_pos)
    nys, nxs = draw(neg_mask, n_neg)
    ys = np.concatenate([pys, nys])
    xs = np.concatenate([pxs, nxs])
    if ys.size == 0:
        return TrainingSamples(np.empty((0, _N_BASIS), np.float32),
                               np.empty((0, OUT, OUT), np.int16), 0, 0, n_pos)
    basis = patch_bases(u4, u6, ys, xs)
    targets = np.empty((ys.size, OUT, OUT), dtype=np.int16)
    ho = OUT // 2
    for i, (y, x) in enumerate(zip(ys, xs)):
        targets[i] = segment_target(annot[y - ho:y + ho, x - ho:x + ho])
    return TrainingSamples(basis, targets, len(pys), len(nys),
                           missing_pos=n_pos - len(pys))


def _discretize(targets_flat: np.ndarray, rng: np.random.Generator,
                n_pixel_pairs: int = 256, pca_cap: int = 2000):
    """Binary pseudo-classes from same-segment indicators of pixel pairs."""
    npx = targets_flat.shape[1]
    a = rng.integers(0, npx, n_pixel_pairs)
    b = rng.integers(0, npx, n_pixel_pairs)
    z = (targets_flat[:, a] == targets_flat[:, b]).astype(np.float32)
    sub = z
    if len(z) > pca_cap:
        sub = z[rng.choice(len(z), pca_cap, replace=False)]
    zc = sub - sub.mean(axis=0)
    cov = zc.T @ zc
    _, vecs = np.linalg.eigh(cov)
    pc = vecs[:, -1]
    nz = np.flatnonzero(np.abs(pc) > 1e-9)
    if nz.size and pc[nz[0]] < 0:
        pc = -pc
    proj = (z - sub.mean(axis=0)) @ pc
    return (proj >= 0).astype(np.int8), z


def _gini_gain(values: np.ndarray, cls: np.ndarray, thresholds: np.ndarray):
    """Best (feature, threshold) by Gini impurity decrease.

    values: (n, F) candidate feature values; thresholds: (T, F).
    Returns (feature_idx, threshold, gain) or None when nothing splits.
    """
    n = len(cls)
    n1 = cls.sum()
    best = None
    for t in range(thresholds.shape[0]):
        leftm = values <= thresholds[t]                   # (n, F)
        nl = leftm.sum(axis=0).astype(np.float64)
        nl1 = (leftm & (cls == 1)[:, None]).sum(axis=0).astype(np.float64)
        nr = n - nl
        nr1 = n1 - nl1
        valid = (nl > 0) & (nr > 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            gl = 1.0 - (nl1 / nl) ** 2 - ((nl - nl1) / nl) ** 2
            gr = 1.0 - (nr1 / nr) ** 2 - ((nr - nr1) / nr) ** 2
        g0 = 1.0 - (n1 / n) ** 2 - ((n - n1) / n) ** 2
        gain = g0 - (nl * gl + nr * gr) / n
        gain[~valid] = -np.inf
        f = int(np.argmax(gain))
        if np.isfinite(gain[f]) and (best is None or gain[f] > best[2]):
            best = (f, float(thresholds[t, f]), float(gain[f]))
    return best


def _medoid(targets_flat: np.ndarray, z: np.ndarray, rng: np.random.Generator,
            cap: int = 400) -> int:
    """Index of the sample minimizing summed Hamming distance in indicator space."""
    idx = np.arange(len(z))
    if len(z) > cap:
        idx = np.sort(rng.choice(len(z), cap, replace=False))
    zz = z[idx]
    ones = zz.sum(axis=0)
    # sum over others of |z_i - z_j| with binary entries
    dist = (zz * (len(zz) - ones) + (1.0 - zz) * ones).sum(axis=1)
    return int(idx[np.argmin(dist)])


def _build_tree(basis: np.ndarray, targets: np.ndarray, rng: np.random.Generator,
                max_depth: int, min_leaf: int, n_feat: int, n_thresh: int):
    n_total = len(basis)
    targets_flat = targets.reshape(n_total, -1)
    feature, threshold, left, right, leaf_id = [], [], [], [], []
    leaf_patches, leaf_segs, leaf_counts = [], [], []

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        leaf_id.append(-1)
        return len(feature) - 1

    def make_leaf(node, idx, z):
        m = idx[_medoid(targets_flat[idx], z, rng)]
        seg = targets[m]
        leaf_id[node] = len(leaf_patches)
        leaf_patches.append(patch_boundary(seg))
        leaf_segs.append(seg.astype(np.uint16))
        leaf_counts.append(len(idx))

    stack = [(new_node(), np.arange(n_total), 0)]
    while stack:
        node, idx, depth = stack.pop()
        cls, z = _discretize(targets_flat[idx], rng)
        pure = cls.min() == cls.max()
        if depth >= max_depth or len(idx) < 2 * min_leaf or pure:
            make_leaf(node, idx, z)
            continue
        cand = rng.choice(N_FEATURES, size=min(n_feat, N_FEATURES), replace=False)
        values = (basis[np.ix_(idx, _FEAT_A[cand])]
                  - basis[np.ix_(idx, _FEAT_B[cand])])
        qs = np.linspace(0, 1, n_thresh + 2)[1:-1]
        thresholds = np.quantile(values, qs, axis=0)
        best = _gini_gain(values, cls, thresholds)
        if best is None:
            make_leaf(node, idx, z)
            continue
        f, thr, _ = best
        go_left = values[:, f] <= thr
        li, ri = idx[go_left], idx[~go_left]
        if len(li) < min_leaf or len(ri) < min_leaf:
            make_leaf(node, idx, z)
            continue
        feature[node] = int(cand[f])
        threshold[node] = thr
        ln, rn = new_node(), new_node()
        left[node], right[node] = ln, rn
        stack.append((rn, ri, depth + 1))
        stack.append((ln, li, depth + 1))

    return Tree(np.array(feature, np.int32), np.array(threshold, np.float32),
                np.array(left, np.int32), np.array(right, np.int32),
                np.array(leaf_id, np.int32),
                np.stack(leaf_patches).astype(np.uint8),
                np.stack(leaf_segs).astype(np.uint16),
                np.array(leaf_counts, np.int32))


def train_forest(samples: TrainingSamples, n_trees: int = 8, max_depth: int = 64,
                 min_leaf: int = 8, seed: int = 0, n_feat: int = 256,
                 n_thresh: int = 8, bootstrap_frac: float = 1.0,
                 recipe_hash: bytes = b"\x00" * 32) -> EdgeForest:
    """Train independent trees on per-tree bootstrap resamples."""
    n = len(samples)
    if n < min_leaf:
        raise ParameterError(f"{n} samples < min_leaf {min_leaf}")
    if samples.missing_pos:
        warnings.warn(f"{samples.missing_pos} requested positive samples unavailable")
    trees = []
    for t in range(n_trees):
        rng = np.random.default_rng(seed + t)
        take = max(min_leaf, int(round(bootstrap_frac * n)))
        pick = rng.choice(n, size=take, replace=True)
        trees.append(_build_tree(samples.basis[pick], samples.targets[pick],
                                 rng, max_depth, min_leaf, n_feat, n_thresh))
    return EdgeForest(trees, seed=seed, recipe_hash=recipe_hash,
                      meta={"n_samples": n, "n_pos": samples.n_pos,
                            "n_neg": samples.n_neg})


@njit(cache=True)
def _predict_tree(u4, u6, pair_a, pair_b, feature, threshold, left, right,
                  leaf_id, leaf_patch, ys, xs, accum, count,
                  n_raw, raw_grid, cell_grid, patch, out):
    half_in = patch // 2
    half_out = out // 2
    cells_per_ch = raw_grid * raw_grid
    pairs_per_ch = pair_a.size
    for p in range(ys.size):
        y = ys[p]
        x = xs[p]
        py = y - half_in
        px = x - half_in
        node = 0
        while left[node] >= 0:
            f = feature[node]
            if f < n_raw:
                ch = f // cells_per_ch
                cell = f % cells_per_ch
                v = u4[ch, py + 2 + 4 * (cell // raw_grid),
                       px + 2 + 4 * (cell % raw_grid)]
            else:
                q = f - n_raw
                ch = q // pairs_per_ch
                pr = q % pairs_per_ch
                ai = pair_a[pr]
                bi = pair_b[pr]
                v = (u6[ch, py + 4 + 6 * (ai // cell_grid), px + 4 + 6 * (ai % cell_grid)]
                     - u6[ch, py + 4 + 6 * (bi // cell_grid), px + 4 + 6 * (bi % cell_grid)])
            node = left[node] if v <= threshold[node] else right[node]
        patch_ = leaf_patch[leaf_id[node]]
        for dy in range(out):
            for dx in range(out):
                accum[y - half_out + dy, x - half_out + dx] += patch_[dy, dx]
                count[y - half_out + dy, x - half_out + dx] += 1


def predict(forest: EdgeForest, image: np.ndarray, stride: int = 2) -> np.ndarray:
    """Boundary probability map: averaged leaf patches over a stride grid."""
    h, w = np.asarray(image).shape[:2]
    channels = compute_channels(image)
    u4, u6 = channel_bases(channels)
    half = forest.patch_size // 2
    if h < forest.patch_size or w < forest.patch_size:
        return np.zeros((h, w), dtype=np.float64)
    ys, xs = np.meshgrid(np.arange(half, h - half + 1, stride),
                         np.arange(half, w - half + 1, stride), indexing="ij")
    ys = ys.ravel().astype(np.int64)
    xs = xs.ravel().astype(np.int64)
    accum = np.zeros((h, w), dtype=np.float64)
    count = np.zeros((h, w), dtype=np.int64)
    for tree in forest.trees:
        _predict_tree(u4, u6, PAIR_A, PAIR_B, tree.feature, tree.threshold,
                      tree.left, tree.right, tree.leaf_id, tree.leaf_patch,
                      ys, xs, accum, count, N_RAW, RAW_GRID, CELL_GRID,
                      forest.patch_size, forest.out_size)
    with np.errstate(invalid="ignore"):
        prob = np.where(count > 0, accum / np.maximum(count, 1), 0.0)
    return prob


# ---------------------------------------------------------------------------
# model file: magic, little-endian header, then per-tree node/leaf arrays


def save_forest(forest: EdgeForest, path) -> None:
    depths = [t.depth for t in forest.trees]
    header = struct.pack(
        "<8sIIIIIIQ", MAGIC, len(forest.trees), max(depths, default=0),
        min(depths, default=0), forest.feature_dim, forest.patch_size,
        forest.out_size, forest.seed & 0xFFFFFFFFFFFFFFFF)
    blobs = [header, forest.recipe_hash[:32].ljust(32, b"\x00")]
    for t in forest.trees:
        blobs.append(struct.pack("<II", len(t.feature), len(t.leaf_count)))
        for arr, dt in ((t.feature, "<i4"), (t.threshold, "<f4"), (t.left, "<i4"),
                        (t.right, "<i4"), (t.leaf_id, "<i4"),
                        (t.leaf_patch, "<u1"), (t.leaf_seg, "<u2"),
                        (t.leaf_count, "<i4")):
            blobs.append(np.ascontiguousarray(arr, dtype=dt).tobytes())
    data = b"".join(blobs)
    import pathlib

    p = pathlib.Path(path)
    tmp = p.with_name(p.name + ".tmp")
    tmp.write_bytes(data)
    tmp.replace(p)


def _read(buf, off, dtype, count, shape=None):
    arr = np.frombuffer(buf, dtype=dtype, count=count, offset=off)
    off += arr.nbytes
    if shape is not None:
        arr = arr.reshape(shape)
    return arr.copy(), off


def load_forest(path) -> EdgeForest:
    buf = open(path, "rb").read()
    if buf[:8] != MAGIC:
        raise VersionError(f"{path}: bad magic {buf[:8]!r}, expected {MAGIC!r}")
    _, n_trees, _, _, feature_dim, patch, out, seed = struct.unpack_from("<8sIIIIIIQ", buf)
    if feature_dim != N_FEATURES:
        raise VersionError(
            f"{path}: model feature dim {feature_dim} != library {N_FEATURES}")
    off = struct.calcsize("<8sIIIIIIQ")
    recipe_hash = buf[off:off + 32]
    off += 32
    trees = []
    for _ in range(n_trees):
        n_nodes, n_leaves = struct.unpack_from("<II", buf, off)
        off += 8
        feature, off = _read(buf, off, "<i4", n_nodes)
        threshold, off = _read(buf, off, "<f4", n_nodes)
        left, off = _read(buf, off, "<i4", n_nodes)
        right, off = _read(buf, off, "<i4", n_nodes)
        leaf_id, off = _read(buf, off, "<i4", n_nodes)
        leaf_patch, off = _read(buf, off, "<u1", n_leaves * out * out,
                                (n_leaves, out, out))
        leaf_seg, off = _read(buf, off, "<u2", n_leaves * out * out,
                              (n_leaves, out, out))
        leaf_count, off = _read(buf, off, "<i4", n_leaves)
        trees.append(Tree(feature, threshold, left, right, leaf_id,
                          leaf_patch, leaf_seg, leaf_count))
    if off != len(buf):
        raise FormatError(f"{path}: {len(buf) - off} trailing bytes")
    return EdgeForest(trees, seed=seed, recipe_hash=recipe_hash,
                      feature_dim=feature_dim, patch_size=patch, out_size=out)


def inspect_forest(path) -> dict:
    """Header of a model file as a JSON-ready dict."""
    buf = open(path, "rb").read(struct.calcsize("<8sIIIIIIQ") + 32)
    if buf[:8] != MAGIC:
        raise VersionError(f"{path}: bad magic {buf[:8]!r}")
    (_, n_trees, dmax, dmin, feature_dim, patch, out,
     seed) = struct.unpack_from("<8sIIIIIIQ", buf)
    recipe_hash = buf[struct.calcsize("<8sIIIIIIQ"):]
    return {"magic": MAGIC.decode(), "n_trees": n_trees, "max_depth": dmax,
            "min_depth": dmin, "feature_dim": feature_dim, "patch_size": patch,
            "out_size": out, "seed": seed, "recipe_hash": recipe_hash.hex()}

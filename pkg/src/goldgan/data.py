"""Synthetic Gaussian mixtures, IDX (MNIST) files, and labeled/unlabeled pools."""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

IDX_IMAGE_MAGIC = 2051
IDX_LABEL_MAGIC = 2049


class MixtureError(ValueError):
    pass


class IdxFormatError(ValueError):
    pass


class PoolError(ValueError):
    pass


def make_rng(seed):
    """Seeded generator; identical seeds give identical streams."""
    return np.random.default_rng(seed)


@dataclass
class Component:
    mean: np.ndarray
    cov: np.ndarray
    weight: float
    label: int


class SyntheticMixture:
    """Gaussian mixture over R^d where every component carries a class label."""

    def __init__(self, components):
        if not components:
            raise MixtureError("mixture needs at least one component")
        self.components = []
        for i, c in enumerate(components):
            mean = np.asarray(c.mean, dtype=float)
            cov = np.asarray(c.cov, dtype=float)
            if cov.shape != (mean.size, mean.size):
                raise MixtureError(f"component {i}: covariance shape {cov.shape} vs mean {mean.shape}")
            if not np.allclose(cov, cov.T, rtol=0, atol=1e-12 * max(1.0, np.abs(cov).max())):
                raise MixtureError(f"component {i}: covariance not symmetric")
            try:
                np.linalg.cholesky(cov)
            except np.linalg.LinAlgError:
                raise MixtureError(f"component {i}: covariance not positive definite") from None
            self.components.append(Component(mean, cov, float(c.weight), int(c.label)))
        w = self.weights
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise MixtureError(f"weights must be non-negative and sum to 1, got sum {w.sum()!r}")
        self.dim = self.components[0].mean.size
        if any(c.mean.size != self.dim for c in self.components):
            raise MixtureError("components have differing dimensions")
        self._chol = np.stack([np.linalg.cholesky(c.cov) for c in self.components])
        self._means = np.stack([c.mean for c in self.components])
        _, logdets = np.linalg.slogdet(np.stack([c.cov for c in self.components]))
        self._log_norm = -0.5 * (self.dim * np.log(2 * np.pi) + logdets)
        self._inv = np.linalg.inv(np.stack([c.cov for c in self.components]))

    @property
    def weights(self):
        return np.array([c.weight for c in self.components])

    @property
    def labels(self):
        return np.array([c.label for c in self.components])

    @property
    def class_count(self):
        return int(self.labels.max()) + 1

    @classmethod
    def circle(cls, n_clusters=6, radius=4.0, variance=0.2, n_classes=2, layout="grouped"):
        """Equal-weight isotropic clusters on a circle.

        ``layout="alternating"`` labels neighbours differently; ``"grouped"``
        gives each class a contiguous arc of clusters.
        """
        if layout not in ("alternating", "grouped"):
            raise ValueError(f"unknown layout {layout!r}")
        per_class = -(-n_clusters // n_classes)
        comps = []
        for k in range(n_clusters):
            angle = 2 * np.pi * k / n_clusters
            comps.append(Component(
                mean=np.array([radius * np.cos(angle), radius * np.sin(angle)]),
                cov=variance * np.eye(2),
                weight=1.0 / n_clusters,
                label=k % n_classes if layout == "alternating" else k // per_class,
            ))
        return cls(comps)

    def sample(self, n, rng, return_component=False):
        """Draw ``n`` points; returns ``(x, c)`` (and component ids if asked)."""
        if n < 0:
            raise ValueError("n must be >= 0")
        comp = rng.choice(len(self.components), size=n, p=self.weights)
        eps = rng.standard_normal((n, self.dim))
        x = self._means[comp] + np.einsum("nij,nj->ni", self._chol[comp], eps)
        c = self.labels[comp]
        if return_component:
            return x, c, comp
        return x, c

    def component_log_densities(self, x):
        """log(w_k N(x; mu_k, S_k)) for every row of x and component k."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.dim:
            raise ValueError(f"expected {self.dim}-dim points, got {x.shape[1]}")
        d = x[:, None, :] - self._means[None, :, :]
        maha = np.einsum("nki,kij,nkj->nk", d, self._inv, d)
        with np.errstate(divide="ignore"):
            logw = np.log(self.weights)
        return logw + self._log_norm - 0.5 * maha

    def log_density(self, x):
        """Return ``(log p(x), log p(x, c))`` with the joint of shape (n, K)."""
        comp = self.component_log_densities(x)
        labels = self.labels
        joint = np.stack([
            logsumexp(comp[:, labels == k], axis=1) if np.any(labels == k)
            else np.full(comp.shape[0], -np.inf)
            for k in range(self.class_count)
        ], axis=1)
        return logsumexp(comp, axis=1), joint

    def mean(self):
        return self.weights @ self._means

    def covariance(self):
        mu = self.mean()
        out = np.zeros((self.dim, self.dim))
        for c in self.components:
            d = c.mean - mu
            out += c.weight * (c.cov + np.outer(d, d))
        return out

    # -- plain-text config -------------------------------------------------

    def to_config(self):
        """Serialize as ``component.<i>.<field>`` key/value pairs."""
        out = {"components": str(len(self.components))}
        for i, c in enumerate(self.components):
            out[f"component.{i}.mean"] = " ".join(repr(float(v)) for v in c.mean)
            out[f"component.{i}.cov"] = " ".join(repr(float(v)) for v in c.cov.ravel())
            out[f"component.{i}.weight"] = repr(c.weight)
            out[f"component.{i}.class"] = str(c.label)
        return out

    @classmethod
    def from_config(cls, section):
        n = int(section["components"])
        comps = []
        for i in range(n):
            mean = np.array([float(v) for v in section[f"component.{i}.mean"].split()])
            cov = np.array([float(v) for v in section[f"component.{i}.cov"].split()])
            comps.append(Component(mean, cov.reshape(mean.size, mean.size),
                                   float(section[f"component.{i}.weight"]),
                                   int(section[f"component.{i}.class"])))
        return cls(comps)


def sample_mixture(mix: SyntheticMixture, n, rng):
    return mix.sample(n, rng)


def mixture_log_density(mix: SyntheticMixture, x):
    return mix.log_density(x)


@dataclass
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, x):
        std = x.std(axis=0)
        return cls(x.mean(axis=0), np.where(std > 0, std, 1.0))

    def transform(self, x):
        return (x - self.mean) / self.std

    def inverse(self, x):
        return x * self.std + self.mean


# -- IDX ----------------------------------------------------------------------

def write_idx(images_path, labels_path, images, labels):
    """Write uint8 images (n, rows, cols) and labels (n,) as IDX files."""
    images = np.asarray(images)
    labels = np.asarray(labels)
    if images.ndim == 2:
        images = images.reshape(images.shape[0], 1, images.shape[1])
    n, rows, cols = images.shape
    if labels.shape != (n,):
        raise IdxFormatError(f"{n} images but {labels.shape} labels")
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGE_MAGIC, n, rows, cols))
        f.write(images.astype(np.uint8).tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABEL_MAGIC, n))
        f.write(labels.astype(np.uint8).tobytes())


def _read_idx(path, magic, header_ints):
    with open(path, "rb") as f:
        raw = f.read()
    need = 4 * header_ints
    if len(raw) < need:
        raise IdxFormatError(f"{path}: truncated header at byte {len(raw)} (need {need})")
    header = struct.unpack(f">{header_ints}I", raw[:need])
    if header[0] != magic:
        raise IdxFormatError(f"{path}: bad magic {header[0]} at byte 0 (expected {magic})")
    payload = np.prod(header[1:], dtype=np.int64)
    if len(raw) - need < payload:
        raise IdxFormatError(
            f"{path}: truncated payload at byte {len(raw)} (expected {need + payload})")
    return header[1:], np.frombuffer(raw, dtype=np.uint8, count=payload, offset=need)


def load_idx(images_path, labels_path):
    """Return ``(x, c)``: pixels flattened and scaled to [0, 1], int labels."""
    (n, rows, cols), pixels = _read_idx(images_path, IDX_IMAGE_MAGIC, 4)
    (n_labels,), labels = _read_idx(labels_path, IDX_LABEL_MAGIC, 2)
    if n != n_labels:
        raise IdxFormatError(f"count mismatch: {n} images (byte 4 of {images_path}) "
                             f"vs {n_labels} labels (byte 4 of {labels_path})")
    x = pixels.reshape(n, rows * cols).astype(np.float64) / 255.0
    return x, labels.astype(np.int64)


# -- pools ------------------------------------------------------------------

@dataclass
class SamplePool:
    """Labeled / unlabeled / validation / test splits over one dataset.

    Sample identities are row indices into the original dataset. Labels of
    unlabeled samples stay hidden until :meth:`label_query` reveals them.
    """

    x: np.ndarray
    class_count: int
    labeled_ids: list
    unlabeled_ids: list
    test_ids: list
    validation_ids: list = field(default_factory=list)
    _labels: np.ndarray = field(default=None, repr=False)
    _revealed: dict = field(default_factory=dict, repr=False)

    @property
    def labeled(self):
        ids = np.asarray(self.labeled_ids, dtype=np.int64)
        return self.x[ids], np.array([self._revealed[i] for i in self.labeled_ids], dtype=np.int64)

    @property
    def unlabeled(self):
        return self.x[np.asarray(self.unlabeled_ids, dtype=np.int64)]

    @property
    def test(self):
        ids = np.asarray(self.test_ids, dtype=np.int64)
        return self.x[ids], self._labels[ids]

    @property
    def validation(self):
        ids = np.asarray(self.validation_ids, dtype=np.int64)
        return self.x[ids], self._labels[ids]

    def label_query(self, sample_id):
        """Reveal the label of unlabeled sample ``sample_id`` and move it to the labeled set."""
        try:
            pos = self.unlabeled_ids.index(sample_id)
        except ValueError:
            raise PoolError(f"sample {sample_id} is not in the unlabeled pool") from None
        self.unlabeled_ids.pop(pos)
        label = int(self._labels[sample_id])
        self._revealed[sample_id] = label
        self.labeled_ids.append(sample_id)
        return label

    def snapshot(self):
        return SamplePool(self.x, self.class_count, list(self.labeled_ids),
                          list(self.unlabeled_ids), list(self.test_ids),
                          list(self.validation_ids), self._labels, dict(self._revealed))


def make_pool(x, c, labeled_n, test_n, rng, validation_n=0, class_count=None):
    """Split a dataset into a class-stratified labeled set, test/validation sets,
    and an unlabeled remainder."""
    x = np.asarray(x, dtype=float)
    c = np.asarray(c, dtype=np.int64)
    n = len(c)
    K = int(class_count if class_count is not None else c.max() + 1)
    if min(labeled_n, test_n, validation_n) < 0 or labeled_n + test_n + validation_n > n:
        raise PoolError(f"infeasible split: labeled {labeled_n} + test {test_n} + "
                        f"validation {validation_n} > {n} samples")
    order = rng.permutation(n)
    test = order[:test_n]
    val = order[test_n:test_n + validation_n]
    rest = order[test_n + validation_n:]
    # stratified labeled pick: round-robin over classes in rest-order
    by_class = [list(rest[c[rest] == k]) for k in range(K)]
    labeled = []
    k = 0
    while len(labeled) < labeled_n:
        if any(by_class):
            if by_class[k % K]:
                labeled.append(by_class[k % K].pop(0))
            k += 1
        else:
            break
    chosen = set(labeled)
    unlabeled = [int(i) for i in rest if i not in chosen]
    labeled = [int(i) for i in labeled]
    return SamplePool(x, K, labeled, unlabeled, [int(i) for i in test],
                      [int(i) for i in val], c, {i: int(c[i]) for i in labeled})


def export_csv(path, x, c):
    """Write ``x1..xd,class`` rows."""
    x = np.atleast_2d(x)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow([f"x{i + 1}" for i in range(x.shape[1])] + ["class"])
        for row, label in zip(x, c):
            w.writerow([repr(float(v)) for v in row] + [int(label)])


def import_csv(path):
    """Read ``x1..xd,class`` rows; columns after ``class`` (e.g. scores) are ignored."""
    with open(path, newline="") as f:
        rows = [r for r in csv.reader(f) if r and not r[0].startswith("#")]
    header, body = rows[0], rows[1:]
    if "class" not in header:
        raise ValueError(f"{path}: no 'class' column in header {header}")
    k = header.index("class")
    x = np.array([[float(v) for v in r[:k]] for r in body]).reshape(len(body), k)
    c = np.array([int(r[k]) for r in body], dtype=np.int64)
    return x, c

"""Dataset ingestion, normalization, PCA reduction and split generation.

Two small datasets (iris, wine) ship with the package so the test suite and
the evaluation presets run without network access; everything else is
described by a fetch manifest of URLs whose checksums are recorded on first
download.
"""

import hashlib
import json
import urllib.request
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from .exceptions import InvalidInputError, ParseError

FORMATS = ("libsvm", "csv_last_label", "csv_first_label")

# Columns with std below this are centered but left unscaled.
DEGENERATE_STD = 1e-12


@dataclass
class LabeledDataset:
    """Feature matrix plus integer class labels in 1..C."""

    features: np.ndarray
    labels: np.ndarray
    name: str = ""
    label_mapping: Optional[Dict[str, int]] = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise InvalidInputError("features must be a 2-D matrix")
        if self.labels.shape != (self.features.shape[0],):
            raise InvalidInputError("labels must align with feature rows")
        if self.features.size and not np.all(np.isfinite(self.features)):
            raise InvalidInputError("features must be finite")
        # Contiguity of 1..C is guaranteed at load time (from_raw_labels);
        # subsets may miss classes but never leave the parent's range.
        if self.labels.size and self.labels.min() < 1:
            raise InvalidInputError("labels must be positive integers")

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def d(self):
        return self.features.shape[1]

    @property
    def n_classes(self):
        return int(self.labels.max()) if self.labels.size else 0

    def subset(self, indices):
        return LabeledDataset(self.features[indices], self.labels[indices],
                              name=self.name, label_mapping=self.label_mapping)

    @classmethod
    def from_raw_labels(cls, features, raw_labels, name=""):
        """Remap arbitrary labels onto 1..C, recording the mapping.

        Numeric-looking labels sort numerically, everything else
        lexicographically.
        """
        raws = [str(r) for r in raw_labels]
        uniq = sorted(set(raws))
        try:
            uniq.sort(key=float)
        except ValueError:
            pass
        mapping = {raw: i + 1 for i, raw in enumerate(uniq)}
        labels = np.array([mapping[r] for r in raws], dtype=np.int64)
        return cls(np.asarray(features, dtype=np.float64), labels,
                   name=name, label_mapping=mapping)


def _parse_libsvm(lines):
    rows = []
    raw_labels = []
    max_index = 0
    for lineno, line in lines:
        parts = line.split()
        try:
            float(parts[0])
        except ValueError:
            raise ParseError(f"malformed label {parts[0]!r}", line=lineno) from None
        raw_labels.append(parts[0])
        entries = []
        for token in parts[1:]:
            idx, sep, val = token.partition(":")
            if not sep:
                raise ParseError(f"expected index:value, got {token!r}", line=lineno)
            try:
                idx = int(idx)
                val = float(val)
            except ValueError:
                raise ParseError(f"bad feature entry {token!r}", line=lineno) from None
            if idx < 1:
                raise ParseError(f"feature indices are 1-based, got {idx}", line=lineno)
            entries.append((idx, val))
            max_index = max(max_index, idx)
        rows.append(entries)
    X = np.zeros((len(rows), max_index))
    for r, entries in enumerate(rows):
        for idx, val in entries:
            X[r, idx - 1] = val
    return X, raw_labels


def _parse_csv(lines, label_last, delimiter):
    rows = []
    raw_labels = []
    width = None
    for lineno, line in lines:
        parts = [p.strip() for p in line.split(delimiter)]
        if len(parts) < 2:
            raise ParseError("need at least one feature and a label", line=lineno)
        if width is None:
            width = len(parts)
        elif len(parts) != width:
            raise ParseError(
                f"expected {width} columns, got {len(parts)}", line=lineno
            )
        label = parts[-1] if label_last else parts[0]
        feats = parts[:-1] if label_last else parts[1:]
        try:
            rows.append([float(v) for v in feats])
        except ValueError:
            bad = next(v for v in feats if not _is_float(v))
            raise ParseError(f"bad feature value {bad!r}", line=lineno) from None
        raw_labels.append(label)
    return np.asarray(rows, dtype=np.float64), raw_labels


def _is_float(token):
    try:
        float(token)
        return True
    except ValueError:
        return False


def load_dataset(path, fmt="csv_last_label", delimiter=",", name=None):
    """Load a dataset from sparse libsvm text or delimited text.

    Labels are remapped onto contiguous 1..C with the mapping recorded on
    the returned dataset.  Malformed lines raise :class:`ParseError` with
    their 1-based line number.
    """
    if fmt not in FORMATS:
        raise InvalidInputError(f"format must be one of {FORMATS}")
    path = Path(path)
    if not path.exists():
        raise InvalidInputError(f"dataset not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        lines = [
            (i + 1, line.strip())
            for i, line in enumerate(fh)
            if line.strip()
        ]
    if not lines:
        raise InvalidInputError(f"dataset file is empty: {path}")
    if fmt == "libsvm":
        X, raw = _parse_libsvm(lines)
    else:
        X, raw = _parse_csv(lines, label_last=(fmt == "csv_last_label"),
                            delimiter=delimiter)
    if not np.all(np.isfinite(X)):
        raise InvalidInputError("dataset contains non-finite features")
    return LabeledDataset.from_raw_labels(X, raw, name=name or path.stem)


BUNDLED = ("iris", "wine")


def load_bundled(name):
    """Load one of the datasets shipped with the package."""
    if name not in BUNDLED:
        raise InvalidInputError(f"no bundled dataset {name!r}; available: {BUNDLED}")
    ref = resources.files("anml.datasets") / f"{name}.csv"
    with resources.as_file(ref) as path:
        return load_dataset(path, fmt="csv_last_label", name=name)


@dataclass
class StandardizeRecord:
    """Per-feature centering/scaling fitted on one dataset, reusable on
    held-out data.  ``degenerate`` lists columns left unscaled because their
    std fell below the threshold."""

    mean: np.ndarray
    scale: np.ndarray
    degenerate: List[int] = field(default_factory=list)

    def apply(self, features):
        return (np.asarray(features, dtype=np.float64) - self.mean) / self.scale

    def inverse(self, features):
        return np.asarray(features, dtype=np.float64) * self.scale + self.mean

    def to_dict(self):
        return {
            "mean": self.mean.tolist(),
            "scale": self.scale.tolist(),
            "degenerate": list(self.degenerate),
        }

    @classmethod
    def from_dict(cls, payload):
        return cls(np.asarray(payload["mean"], dtype=np.float64),
                   np.asarray(payload["scale"], dtype=np.float64),
                   list(payload["degenerate"]))


def standardize(data):
    """Center every feature and divide by its population std.

    Returns the transformed dataset and the fitted record.  Near-constant
    columns (std < 1e-12) are centered but not scaled and flagged in the
    record.
    """
    if data.n < 2:
        raise InvalidInputError("standardize needs at least 2 samples")
    mean = data.features.mean(axis=0)
    std = data.features.std(axis=0)
    degenerate = np.flatnonzero(std < DEGENERATE_STD)
    scale = std.copy()
    scale[degenerate] = 1.0
    record = StandardizeRecord(mean, scale, degenerate.tolist())
    out = LabeledDataset(record.apply(data.features), data.labels,
                         name=data.name, label_mapping=data.label_mapping)
    return out, record


@dataclass
class PcaRecord:
    """Mean and orthonormal principal directions fitted on one dataset."""

    mean: np.ndarray
    components: np.ndarray  # (d, target_dim)
    explained_variance: np.ndarray

    def apply(self, features):
        return (np.asarray(features, dtype=np.float64) - self.mean) @ self.components

    def to_dict(self):
        return {
            "mean": self.mean.tolist(),
            "components": self.components.tolist(),
            "explained_variance": self.explained_variance.tolist(),
        }

    @classmethod
    def from_dict(cls, payload):
        return cls(np.asarray(payload["mean"], dtype=np.float64),
                   np.asarray(payload["components"], dtype=np.float64),
                   np.asarray(payload["explained_variance"], dtype=np.float64))


def pca_reduce(data, target_dim):
    """Project onto the top principal components of the sample covariance.

    Returns the projected dataset and a reusable projection record carrying
    the explained-variance fractions.  Component signs are fixed by making
    each direction's largest-magnitude coordinate positive.
    """
    n, d = data.features.shape
    if not 1 <= target_dim <= min(n, d):
        raise InvalidInputError(
            f"target_dim must be in [1, {min(n, d)}], got {target_dim}"
        )
    mean = data.features.mean(axis=0)
    Xc = data.features - mean
    cov = (Xc.T @ Xc) / n
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = np.clip(eigvals[order], 0.0, None)
    eigvecs = eigvecs[:, order]
    comps = eigvecs[:, :target_dim]
    anchor = np.argmax(np.abs(comps), axis=0)
    signs = np.sign(comps[anchor, np.arange(target_dim)])
    signs[signs == 0] = 1.0
    comps = comps * signs
    total = eigvals.sum()
    fractions = eigvals[:target_dim] / total if total > 0 else np.zeros(target_dim)
    record = PcaRecord(mean, comps, fractions)
    out = LabeledDataset(record.apply(data.features), data.labels,
                         name=data.name, label_mapping=data.label_mapping)
    return out, record


@dataclass(frozen=True)
class SplitPlan:
    """Seeded plan for repeated train/test partitions."""

    train_fraction: float = 0.7
    trials: int = 30
    seed: int = 0
    stratified: bool = False

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise InvalidInputError("train_fraction must lie in (0, 1)")
        if self.trials < 1:
            raise InvalidInputError("trials must be >= 1")


def make_splits(n, plan, labels=None):
    """Generate ``plan.trials`` disjoint, exhaustive train/test index pairs.

    Train size is ``ceil(train_fraction * n)``.  Unstratified by default;
    pass ``labels`` with a stratified plan to split each class at the train
    fraction instead.  Deterministic in ``plan.seed``.
    """
    if n < 2:
        raise InvalidInputError("need at least 2 samples to split")
    if plan.stratified and labels is None:
        raise InvalidInputError("stratified splits need the label vector")
    rng = np.random.default_rng(plan.seed)
    splits = []
    n_train = int(np.ceil(plan.train_fraction * n))
    for _ in range(plan.trials):
        if plan.stratified:
            train_parts = []
            labels = np.asarray(labels)
            for cls in np.unique(labels):
                members = np.flatnonzero(labels == cls)
                perm = members[rng.permutation(members.size)]
                take = int(np.ceil(plan.train_fraction * members.size))
                train_parts.append(perm[:take])
            train = np.sort(np.concatenate(train_parts))
            mask = np.zeros(n, dtype=bool)
            mask[train] = True
            test = np.flatnonzero(~mask)
        else:
            perm = rng.permutation(n)
            train = np.sort(perm[:n_train])
            test = np.sort(perm[n_train:])
        splits.append((train, test))
    return splits


def default_manifest_path():
    return resources.files("anml.datasets") / "manifest.json"


def load_manifest(path=None):
    if path is None:
        ref = default_manifest_path()
        return json.loads(ref.read_text())
    return json.loads(Path(path).read_text())


def fetch_dataset(name, cache_dir, manifest=None):
    """Download a manifest entry into ``cache_dir`` and verify its checksum.

    Entries with a null sha256 are trust-on-first-use: the observed digest is
    recorded next to the download as ``<file>.sha256`` and enforced on later
    fetches.  Returns the local path.
    """
    manifest = manifest or load_manifest()
    if name not in manifest:
        raise InvalidInputError(f"no manifest entry for dataset {name!r}")
    entry = manifest[name]
    cache = Path(cache_dir)
    cache.mkdir(parents=True, exist_ok=True)
    target = cache / entry["filename"]
    digest_file = target.with_suffix(target.suffix + ".sha256")
    expected = entry.get("sha256") or (
        digest_file.read_text().strip() if digest_file.exists() else None
    )
    if not target.exists():
        with urllib.request.urlopen(entry["url"]) as resp:
            payload = resp.read()
        target.write_bytes(payload)
    digest = hashlib.sha256(target.read_bytes()).hexdigest()
    if expected is not None and digest != expected:
        raise InvalidInputError(
            f"checksum mismatch for {name}: expected {expected}, got {digest}"
        )
    if expected is None:
        digest_file.write_text(digest + "\n")
    return target

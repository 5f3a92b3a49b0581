"""
Partitioned datasets: the m×n sample array, synthetic generation, libsvm ingestion,
and replacement draws for neighboring datasets.
"""

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import IngestError, RangeError, ValidationError
from .models import LabelRule

logger = logging.getLogger(__name__)

NORM_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class SyntheticSpec:
    """Everything needed to draw more samples from a synthetic distribution."""

    dim: int
    feature_bound: float
    label_rule: LabelRule
    truth: np.ndarray
    flip_noise: float = 0.1
    noise: float = 0.1
    label_bound: float = 1.0


@dataclass(frozen=True, eq=False)
class PartitionedDataset:
    """Samples Z_{k(r)} held as features (m, n, dim) and labels (m, n)."""

    features: np.ndarray
    labels: np.ndarray
    feature_bound: float
    seed: int | None = None
    generator: SyntheticSpec | None = None
    reserve: tuple[np.ndarray, np.ndarray] | None = field(default=None, repr=False)

    def __post_init__(self):
        features = np.array(self.features, dtype=float)
        labels = np.array(self.labels, dtype=float)
        if features.ndim != 3 or labels.shape != features.shape[:2]:
            raise ValidationError(
                "dataset must be rectangular",
                [f"features {features.shape}, labels {labels.shape}"],
            )
        norms = np.linalg.norm(features, axis=-1)
        limit = self.feature_bound * (1.0 + NORM_TOL)
        if np.any(norms > limit):
            worst = np.unravel_index(np.argmax(norms), norms.shape)
            raise ValidationError(
                "feature bound violated",
                [f"|x| = {norms[worst]:.6g} > B = {self.feature_bound} at {tuple(int(i) + 1 for i in worst)}"],
            )
        features.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    @property
    def m(self) -> int:
        return self.features.shape[0]

    @property
    def n(self) -> int:
        return self.features.shape[1]

    @property
    def dim(self) -> int:
        return self.features.shape[2]

    def sample(self, r: int, k: int) -> tuple[np.ndarray, float]:
        """Sample Z_{k(r)} with 1-based node r and sample k."""
        self._check_position(r, k)
        return self.features[r - 1, k - 1], float(self.labels[r - 1, k - 1])

    def node(self, r: int) -> tuple[np.ndarray, np.ndarray]:
        """Local dataset S_r of 1-based node r."""
        if not 1 <= r <= self.m:
            raise RangeError(f"node index {r} outside 1..{self.m}")
        return self.features[r - 1], self.labels[r - 1]

    def flat(self) -> tuple[np.ndarray, np.ndarray]:
        """All mn samples, row-major by node."""
        return self.features.reshape(-1, self.dim), self.labels.reshape(-1)

    def replace_sample(self, r: int, k: int, x: np.ndarray, y: float) -> "PartitionedDataset":
        """Copy with position (r, k) replaced."""
        self._check_position(r, k)
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValidationError(f"replacement has shape {x.shape}, expected ({self.dim},)")
        features = self.features.copy()
        labels = self.labels.copy()
        features[r - 1, k - 1] = x
        labels[r - 1, k - 1] = y
        return replace(self, features=features, labels=labels)

    def equals(self, other: "PartitionedDataset") -> bool:
        return np.array_equal(self.features, other.features) and np.array_equal(
            self.labels, other.labels
        )

    def diff_count(self, other: "PartitionedDataset") -> int:
        """Number of (r, k) positions whose sample differs."""
        feature_diff = np.any(self.features != other.features, axis=-1)
        return int(np.count_nonzero(feature_diff | (self.labels != other.labels)))

    def draw_replacement(self, seed: int) -> tuple[np.ndarray, float]:
        """Fresh sample from the generating distribution (or the reserve pool)."""
        rng = np.random.default_rng(seed)
        if self.generator is not None:
            features, labels = _draw(self.generator, (1,), rng)
            return features[0], float(labels[0])
        if self.reserve is not None and len(self.reserve[1]):
            index = int(rng.integers(len(self.reserve[1])))
            return self.reserve[0][index], float(self.reserve[1][index])
        raise ValidationError("dataset has no generator or reserve; supply an explicit replacement")

    def draw_pool(self, count: int, seed: int) -> tuple[np.ndarray, np.ndarray] | None:
        """`count` fresh evaluation samples, or None when there is nothing to draw from."""
        if count <= 0:
            return None
        rng = np.random.default_rng(seed)
        if self.generator is not None:
            return _draw(self.generator, (count,), rng)
        if self.reserve is not None and len(self.reserve[1]):
            chosen = rng.integers(len(self.reserve[1]), size=count)
            return self.reserve[0][chosen], self.reserve[1][chosen]
        return None

    def _check_position(self, r: int, k: int) -> None:
        if not (1 <= r <= self.m and 1 <= k <= self.n):
            raise RangeError(f"position (r={r}, k={k}) outside {self.m}x{self.n}")


def _draw(
    spec: SyntheticSpec, shape: tuple[int, ...], rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    scale = spec.feature_bound / np.sqrt(spec.dim)
    features = rng.standard_normal((*shape, spec.dim)) * scale
    norms = np.linalg.norm(features, axis=-1, keepdims=True)
    features = np.where(norms > spec.feature_bound, features * (spec.feature_bound / norms), features)
    signal = features @ spec.truth
    if spec.label_rule == LabelRule.SIGN_FLIP:
        clean = np.where(signal >= 0.0, 1.0, -1.0)
        flipped = rng.random(shape) < spec.flip_noise
        labels = np.where(flipped, -clean, clean)
    else:
        labels = signal + spec.noise * rng.standard_normal(shape)
        labels = np.clip(labels, -spec.label_bound, spec.label_bound)
    return features, labels


def generate_synthetic(
    m: int,
    n: int,
    dim: int,
    B: float,
    label_rule: LabelRule | str = LabelRule.SIGN_FLIP,
    seed: int = 0,
    flip_noise: float = 0.1,
    noise: float = 0.1,
    label_bound: float = 1.0,
) -> PartitionedDataset:
    """Draw an m×n dataset.

    Features are isotropic Gaussian scaled by B/√dim and projected onto the B-sphere when
    they exceed it. Labels follow the sign of a hidden unit direction with `flip_noise`
    flips (sign-flip) or that direction's inner product plus Gaussian noise, clipped to
    the label bound (linear-noise).
    """
    if min(m, n, dim) < 1 or B <= 0:
        raise ValidationError("sizes and feature bound must be positive", [f"m={m} n={n} dim={dim} B={B}"])
    rng = np.random.default_rng(seed)
    truth = rng.standard_normal(dim)
    truth /= np.linalg.norm(truth)
    spec = SyntheticSpec(
        dim=dim,
        feature_bound=B,
        label_rule=LabelRule(label_rule),
        truth=truth,
        flip_noise=flip_noise,
        noise=noise,
        label_bound=label_bound,
    )
    features, labels = _draw(spec, (m, n), rng)
    logger.debug(f"Generated synthetic dataset m={m} n={n} dim={dim} seed={seed}")
    return PartitionedDataset(features, labels, feature_bound=B, seed=seed, generator=spec)


def _parse_line(line: str, number: int) -> tuple[float, dict[int, float]]:
    tokens = line.split()
    try:
        label = float(tokens[0])
    except ValueError as e:
        raise IngestError(f"bad label {tokens[0]!r}", line=number) from e
    values: dict[int, float] = {}
    for token in tokens[1:]:
        index, sep, value = token.partition(":")
        try:
            if not sep:
                raise ValueError(token)
            position = int(index)
            if position < 1:
                raise ValueError(token)
            values[position] = float(value)
        except ValueError as e:
            raise IngestError(f"malformed token {token!r}", line=number) from e
    return label, values


def ingest_libsvm(
    path: str | Path,
    m: int,
    n: int,
    B: float,
    dim: int | None = None,
) -> PartitionedDataset:
    """Read a libsvm-format file into an m×n dataset.

    The first mn rows are partitioned row-major into m nodes of n samples; features are
    rescaled so the largest norm among them equals B. Remaining rows, rescaled by the same
    factor and projected onto the B-ball, form the reserve pool for replacement draws.
    Labels in {0, 1} are mapped to {-1, +1}.

    Raises:
        IngestError: parse failure (with line number) or fewer than mn rows
    """
    rows: list[tuple[int, float, dict[int, float]]] = []
    with open(path) as f:
        for number, line in enumerate(f, start=1):
            stripped = line.split("#", 1)[0].strip()
            if stripped:
                rows.append((number, *_parse_line(stripped, number)))
    if len(rows) < m * n:
        raise IngestError(f"{path} has {len(rows)} rows, need m*n = {m * n}")

    width = dim or max((max(values) for _, _, values in rows if values), default=1)
    matrix = np.zeros((len(rows), width))
    labels = np.array([label for _, label, _ in rows])
    for row, (number, _, values) in enumerate(rows):
        for position, value in values.items():
            if position > width:
                raise IngestError(f"feature index {position} exceeds dim {width}", line=number)
            matrix[row, position - 1] = value
    if set(np.unique(labels)) <= {0.0, 1.0}:
        labels = 2.0 * labels - 1.0

    used = matrix[: m * n]
    largest = np.linalg.norm(used, axis=1).max()
    factor = B / largest if largest > 0 else 1.0
    matrix = matrix * factor
    extra = matrix[m * n :]
    norms = np.linalg.norm(extra, axis=1, keepdims=True)
    extra = np.where(norms > B, extra * (B / np.maximum(norms, 1e-300)), extra)

    logger.info(f"Ingested {m * n} of {len(rows)} rows from {path} (dim={width})")
    return PartitionedDataset(
        matrix[: m * n].reshape(m, n, width),
        labels[: m * n].reshape(m, n),
        feature_bound=B,
        reserve=(extra, labels[m * n :]),
    )


def write_libsvm(dataset: PartitionedDataset, path: str | Path) -> Path:
    """Write the dataset row-major in libsvm format, readable by ingest_libsvm with the same m, n."""
    path = Path(path)
    features, labels = dataset.flat()
    lines = []
    for x, y in zip(features, labels, strict=True):
        tokens = [f"{index}:{value!r}" for index, value in enumerate(x.tolist(), start=1) if value != 0.0]
        lines.append(" ".join([repr(float(y)), *tokens]))
    path.write_text("\n".join(lines) + "\n")
    logger.info(f"Wrote {len(lines)} samples to {path}")
    return path

"""Run configuration and dataset manifests.

One JSON document carries every tunable default (all of them the trained
constants); unknown keys are rejected so typos fail loudly. Manifests are
line-delimited JSON pair records, appendable and diff-friendly.
"""

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .deform import RecoverySettings
from .losses import LossWeights
from .network import DEFAULT_K_AUGMENTATION, NetworkConfig


@dataclass
class RunConfig:
    """Every knob of the pipeline in one place.

    Defaults are the trained constants: loss weights (1, 10, 2), recovery
    weights (20000, 150000), unsupervised regularizers (20, 10), softmax
    temperature 0.07, 128/40 eigenfunctions, learning rate 1e-3 decayed to
    1e-5 over 50 epochs.
    """

    seed: int = 0
    threads: int = 1
    # spectral resolution
    k_feat: int = 128
    k_coord: int = 40
    k_augmentation: list = field(default_factory=lambda: list(DEFAULT_K_AUGMENTATION))
    # supervised loss
    loss_jacobian: float = 1.0
    loss_vertex: float = 10.0
    loss_integrated: float = 2.0
    # unsupervised regularizers
    loss_smoothness: float = 20.0
    loss_volume: float = 10.0
    temperature: float = 0.07
    # embedding recovery
    recovery_spatial: float = 20000.0
    recovery_jacobian: float = 150000.0
    recovery_laplacian: float = 1.0
    # optimization
    epochs: int = 50
    iterations: int = 300
    lr_start: float = 1e-3
    lr_end: float = 1e-5
    # architecture
    hidden_width: int = 256
    projected_layers: int = 4
    plain_layers: int = 2
    use_projection: bool = True
    input_discretization: str = "vertex"
    output_mode: str = "jacobian"

    def loss_weights(self):
        return LossWeights(
            jacobian=self.loss_jacobian,
            vertex=self.loss_vertex,
            integrated=self.loss_integrated,
            smoothness=self.loss_smoothness,
            volume=self.loss_volume,
        )

    def recovery_settings(self):
        return RecoverySettings(
            spatial_weight=self.recovery_spatial,
            jacobian_weight=self.recovery_jacobian,
            laplacian_weight=self.recovery_laplacian,
        )

    def network_config(self, n_vertices=None):
        k_feat = self.k_feat if n_vertices is None else min(self.k_feat, n_vertices)
        return NetworkConfig(
            hidden_width=self.hidden_width,
            projected_layers=self.projected_layers,
            plain_layers=self.plain_layers,
            k_feat=k_feat,
            k_coord=self.k_coord,
            seed=self.seed,
            use_projection=self.use_projection,
            input_discretization=self.input_discretization,
            output_mode=self.output_mode,
            k_augmentation=tuple(self.k_augmentation),
        )

    def dump(self, path):
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path):
        data = json.loads(Path(path).read_text())
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


@dataclass
class PairRecord:
    """One manifest line: a source/target mesh pair."""

    source: str
    target: str
    split: str = "train"
    gt_map: str = None

    def __post_init__(self):
        if self.split not in ("train", "val", "test"):
            raise ValueError(f"bad split {self.split!r}")


class Manifest:
    """Line-delimited pair records with paths resolved against the file."""

    def __init__(self, records, base_dir="."):
        self.records = list(records)
        self.base_dir = Path(base_dir)

    @classmethod
    def load(cls, path):
        path = Path(path)
        records = []
        for lineno, line in enumerate(path.read_text().splitlines(), start=1):
            line = line.strip()
            if not line:
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: bad manifest record") from exc
            records.append(PairRecord(**data))
        manifest = cls(records, base_dir=path.parent)
        manifest.validate_paths()
        return manifest

    def save(self, path):
        lines = [
            json.dumps(
                {k: v for k, v in asdict(record).items() if v is not None},
                sort_keys=True,
            )
            for record in self.records
        ]
        Path(path).write_text("\n".join(lines) + "\n")

    def validate_paths(self):
        missing = []
        for record in self.records:
            for attr in ("source", "target", "gt_map"):
                value = getattr(record, attr)
                if value is not None and not self.resolve(value).exists():
                    missing.append(value)
        if missing:
            raise FileNotFoundError(f"manifest references missing files: {missing}")

    def resolve(self, rel):
        path = Path(rel)
        return path if path.is_absolute() else self.base_dir / path

    def split(self, name):
        return [r for r in self.records if r.split == name]

    def __len__(self):
        return len(self.records)


def save_p2p(path, p2p):
    """Plain-text map file: one 0-based target index per source-vertex line."""
    Path(path).write_text("\n".join(str(int(i)) for i in p2p.indices) + "\n")


def load_p2p(path, n_target):
    from .spectral import PointwiseMap

    indices = [int(t) for t in Path(path).read_text().split()]
    return PointwiseMap.hard(indices, n_target)


def save_fmap(path, fmap):
    """Text functional map: ``k1 k2`` header then one row per line."""
    k1, k2 = fmap.shape
    lines = [f"{k1} {k2}"]
    for row in fmap.matrix:
        lines.append(" ".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_fmap(path):
    from .spectral import FunctionalMap
    import numpy as np

    lines = Path(path).read_text().splitlines()
    k1, k2 = (int(t) for t in lines[0].split())
    rows = [[float(t) for t in line.split()] for line in lines[1 : 1 + k1]]
    matrix = np.asarray(rows)
    if matrix.shape != (k1, k2):
        raise ValueError(f"{path}: functional map shape mismatch")
    return FunctionalMap(matrix)

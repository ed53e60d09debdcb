"""Out-of-order CPU design space: parameter grid, encoding, and sampling.

The canonical space has 20 parameters (one per row of the published grid);
Int/Fp register files and load/store queues are each a single tied parameter.
Feature encoding is per-parameter min-max on candidate *values*, so rows with
non-uniform strides keep their metric meaning; categorical parameters are
ordinal-encoded by label position.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, InvalidPoint, InvalidVector, ParseError

KIND_RANGE = "range"
KIND_ENUMERATED = "enumerated"
KIND_CATEGORICAL = "categorical"

_KINDS = (KIND_RANGE, KIND_ENUMERATED, KIND_CATEGORICAL)


def expand_range(start: float, end: float, stride: float) -> tuple[float, ...]:
    """Expand start:end:stride inclusively; end is kept when it lands on the grid."""
    if stride <= 0:
        raise ContractError(f"stride must be positive, got {stride}")
    out = []
    k = 0
    while True:
        v = start + k * stride
        if v > end + 1e-9:
            break
        out.append(float(v))
        k += 1
    if len(out) < 1:
        raise ContractError(f"empty range {start}:{end}:{stride}")
    return tuple(out)


@dataclass(frozen=True)
class ParamSpec:
    """One architectural parameter and its candidate values."""

    name: str
    kind: str
    candidates: tuple[float, ...]
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ContractError(f"unknown parameter kind {self.kind!r}")
        if not self.candidates:
            raise ContractError(f"{self.name}: empty candidate set")
        if any(b <= a for a, b in zip(self.candidates, self.candidates[1:])):
            raise ContractError(f"{self.name}: candidates must be strictly increasing")
        if self.kind == KIND_CATEGORICAL:
            if self.labels is None or len(self.labels) != len(self.candidates):
                raise ContractError(f"{self.name}: categorical kind needs one label per candidate")
        elif self.labels is not None:
            raise ContractError(f"{self.name}: labels only valid for categorical kind")

    @classmethod
    def range(cls, name: str, start: float, end: float, stride: float) -> "ParamSpec":
        return cls(name, KIND_RANGE, expand_range(start, end, stride))

    @classmethod
    def enumerated(cls, name: str, values) -> "ParamSpec":
        return cls(name, KIND_ENUMERATED, tuple(float(v) for v in values))

    @classmethod
    def categorical(cls, name: str, labels) -> "ParamSpec":
        labels = tuple(str(v) for v in labels)
        return cls(name, KIND_CATEGORICAL, tuple(float(i) for i in range(len(labels))), labels)

    @property
    def size(self) -> int:
        return len(self.candidates)

    def value_repr(self, index: int) -> str:
        """Candidate value as written in dataset files (label text for categoricals)."""
        if self.kind == KIND_CATEGORICAL:
            return self.labels[index]
        return format_value(self.candidates[index])


@dataclass(frozen=True)
class DesignSpace:
    """Ordered collection of parameters; immutable and shareable."""

    params: tuple[ParamSpec, ...]

    def __post_init__(self):
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise ContractError("duplicate parameter names")

    def __len__(self) -> int:
        return len(self.params)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.params)

    def index_of(self, name: str) -> int:
        return self.names.index(name)


@dataclass(frozen=True)
class DesignPoint:
    """Candidate indices, one per parameter."""

    indices: tuple[int, ...]

    def validate(self, space: DesignSpace) -> None:
        if len(self.indices) != len(space):
            raise InvalidPoint(f"point has {len(self.indices)} indices, space has {len(space)}")
        for i, (idx, spec) in enumerate(zip(self.indices, space.params)):
            if not 0 <= idx < spec.size:
                raise InvalidPoint(f"{spec.name}: index {idx} outside 0..{spec.size - 1} (position {i})")


def format_value(v: float) -> str:
    """17-significant-digit decimal form (exact float roundtrip), trailing zeros stripped."""
    return "%.17g" % float(v)


def canonical_space() -> DesignSpace:
    """The 20-parameter out-of-order core grid, in published row order."""
    return DesignSpace((
        ParamSpec.enumerated("Core Frequency", [1, 1.5, 2, 2.5, 3]),
        ParamSpec.range("Pipeline Width", 1, 12, 1),
        ParamSpec.enumerated("Fetch Buffer", [16, 32, 64]),
        ParamSpec.range("Fetch Queue", 8, 48, 4),
        ParamSpec.categorical("Branch Predictor", ["BiModeBP", "TournamentBP"]),
        ParamSpec.range("RAS Size", 16, 40, 2),
        ParamSpec.enumerated("BTB Size", [1024, 2048, 4096]),
        ParamSpec.range("ROB Size", 32, 256, 16),
        ParamSpec.range("Int/Fp RF Number", 64, 256, 8),
        ParamSpec.range("Inst Queue", 16, 80, 8),
        ParamSpec.range("Load/Store Queue", 20, 48, 4),
        ParamSpec.range("IntALU", 3, 8, 1),
        ParamSpec.range("IntMultDiv", 1, 4, 1),
        ParamSpec.range("FpALU", 1, 4, 1),
        ParamSpec.range("FpMultDiv", 1, 4, 1),
        ParamSpec.enumerated("Cacheline", [32, 64]),
        ParamSpec.enumerated("L1 Cache Size", [16, 32, 64]),
        ParamSpec.enumerated("L1 Cache Assoc.", [2, 4]),
        ParamSpec.enumerated("L2 Cache Size", [128, 256]),
        ParamSpec.enumerated("L2 Cache Assoc.", [2, 4]),
    ))


def cardinality(space: DesignSpace) -> int:
    return math.prod(p.size for p in space.params)


def encode(point: DesignPoint, space: DesignSpace) -> np.ndarray:
    """Min-max normalize each parameter's candidate value into [0, 1]."""
    point.validate(space)
    out = np.empty(len(space), dtype=np.float64)
    for i, (idx, spec) in enumerate(zip(point.indices, space.params)):
        lo, hi = spec.candidates[0], spec.candidates[-1]
        out[i] = 0.0 if hi == lo else (spec.candidates[idx] - lo) / (hi - lo)
    return out


def encode_many(points, space: DesignSpace) -> np.ndarray:
    """Encode a list of points into an (n, P) feature matrix."""
    idx = np.asarray([p.indices for p in points], dtype=np.intp)
    out = np.empty(idx.shape, dtype=np.float64)
    for j, spec in enumerate(space.params):
        cand = np.asarray(spec.candidates)
        lo, hi = cand[0], cand[-1]
        col = cand[idx[:, j]]
        out[:, j] = 0.0 if hi == lo else (col - lo) / (hi - lo)
    return out


def decode(features, space: DesignSpace) -> DesignPoint:
    """Nearest-candidate inverse of encode; exact on encode outputs."""
    features = np.asarray(features, dtype=np.float64)
    if features.shape != (len(space),):
        raise InvalidVector(f"expected {len(space)} features, got shape {features.shape}")
    if np.any(features < -1e-9) or np.any(features > 1 + 1e-9):
        raise InvalidVector("features must lie in [0, 1]")
    indices = []
    for f, spec in zip(features, space.params):
        cand = np.asarray(spec.candidates)
        lo, hi = cand[0], cand[-1]
        grid = np.zeros_like(cand) if hi == lo else (cand - lo) / (hi - lo)
        indices.append(int(np.argmin(np.abs(grid - f))))
    return DesignPoint(tuple(indices))


def sample_uniform(space: DesignSpace, n: int, seed: int) -> list[DesignPoint]:
    """n points with each index uniform over its candidate set; pure in (space, n, seed)."""
    if n < 1:
        raise ContractError(f"n must be >= 1, got {n}")
    rng = np.random.Generator(np.random.PCG64(seed))
    cols = [rng.integers(0, spec.size, size=n) for spec in space.params]
    mat = np.stack(cols, axis=1)
    return [DesignPoint(tuple(int(v) for v in row)) for row in mat]


def save_space(space: DesignSpace, path) -> None:
    """Write the space as a human-readable key-value document."""
    cp = configparser.ConfigParser()
    cp.optionxform = str
    for spec in space.params:
        cp[spec.name] = {}
        sec = cp[spec.name]
        sec["kind"] = spec.kind
        if spec.kind == KIND_CATEGORICAL:
            sec["labels"] = ", ".join(spec.labels)
        else:
            sec["candidates"] = ", ".join(format_value(v) for v in spec.candidates)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        cp.write(fh)


def load_space(path) -> DesignSpace:
    """Parse a space document written by save_space (or by hand)."""
    cp = configparser.ConfigParser()
    cp.optionxform = str
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except configparser.Error as exc:
        raise ParseError(f"{path}: {exc}") from exc
    params = []
    for name in cp.sections():
        sec = cp[name]
        kind = sec.get("kind", "").strip()
        try:
            if kind == KIND_CATEGORICAL:
                labels = [s.strip() for s in sec["labels"].split(",") if s.strip()]
                params.append(ParamSpec.categorical(name, labels))
            elif kind in (KIND_ENUMERATED, KIND_RANGE):
                values = [float(s) for s in sec["candidates"].split(",") if s.strip()]
                params.append(ParamSpec(name, kind, tuple(values)))
            else:
                raise ParseError(f"{path}: [{name}] has unknown kind {kind!r}")
        except (KeyError, ValueError) as exc:
            raise ParseError(f"{path}: [{name}]: {exc}") from exc
    if not params:
        raise ParseError(f"{path}: no parameters defined")
    return DesignSpace(tuple(params))

"""Analytical workload surfaces standing in for cycle-accurate simulation.

Each surface maps an encoded design point to (IPC, power): IPC is a pipeline
width term times the minimum of diminishing-returns resource saturations,
with a signed secondary-sensitivity product and sparse pairwise interactions;
power is a baseline plus weighted resource sizes plus a cubic frequency term.
Multiplicative log-normal noise is drawn from a per-sample seeded stream.
A family with dissimilarity d interpolates every coefficient between one
shared base draw (d=0: identical workloads) and per-workload draws (d=1:
independent workloads). Constants are tuned for learnability, not as claims
about real CPUs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .design_space import DesignPoint, DesignSpace, canonical_space, encode_many, sample_uniform
from .errors import ContractError, ParseError, SourceExhausted
from .tasks import Sample

N_INTERACTION_PAIRS = 6
DEFAULT_IPC_CAP = 4.0

# Canonical-space roles by table position; generic spaces fall back to an
# alternating assignment (frequency first, width second, rest split evenly).
_CANONICAL_RESOURCES = (3, 7, 8, 9, 10, 11, 13, 16, 18)
_CANONICAL_SECONDARY = (2, 4, 5, 6, 12, 14, 15, 17, 19)


def _roles(space: DesignSpace):
    if space == canonical_space():
        return 0, 1, _CANONICAL_RESOURCES, _CANONICAL_SECONDARY
    p = len(space)
    freq = 0
    width = 1 if p > 1 else 0
    rest = [i for i in range(p) if i not in (freq, width)]
    return freq, width, tuple(rest[::2]), tuple(rest[1::2])


@dataclass(frozen=True, eq=False)
class WorkloadSurface:
    workload_id: str
    space: DesignSpace
    ipc_level: float
    width_floor: float
    width_shape: float
    sat_depth: np.ndarray
    sat_rate: np.ndarray
    sat_shift: np.ndarray
    side_sens: np.ndarray
    pair_idx: tuple[tuple[int, int], ...]
    pair_strength: np.ndarray
    power_base: float
    power_weights: np.ndarray
    power_freq: float
    noise_scale: float
    noise_key: int
    freq_idx: int
    width_idx: int
    resource_idx: tuple[int, ...]
    side_idx: tuple[int, ...]
    ipc_cap: float = DEFAULT_IPC_CAP

    def labels_noiseless(self, features: np.ndarray):
        """(ipc, power) arrays for an (n, P) feature matrix, no noise."""
        u = np.atleast_2d(np.asarray(features, dtype=np.float64))
        uw = u[:, self.width_idx]
        width_term = self.width_floor + (1.0 - self.width_floor) * uw ** self.width_shape
        res = u[:, list(self.resource_idx)]
        sat = 1.0 - self.sat_depth * np.exp(-self.sat_rate * (res + self.sat_shift))
        min_sat = sat.min(axis=1)
        side = u[:, list(self.side_idx)]
        sec = np.prod(1.0 + self.side_sens * (side - 0.5), axis=1)
        inter = np.ones(u.shape[0])
        for (i, j), eta in zip(self.pair_idx, self.pair_strength):
            inter += eta * 4.0 * (u[:, i] - 0.5) * (u[:, j] - 0.5)
        bound = (1.0 + np.abs(self.pair_strength).sum()) * np.prod(1.0 + np.abs(self.side_sens) / 2)
        ipc = self.ipc_cap * self.ipc_level * width_term * min_sat * sec * inter / bound
        uf = u[:, self.freq_idx]
        power = self.power_base + u @ self.power_weights + self.power_freq * (0.3 + 0.7 * uf) ** 3
        return ipc, power

    def labels(self, features: np.ndarray, sample_seeds) -> tuple[np.ndarray, np.ndarray]:
        """Labels with per-sample multiplicative log-normal noise; IPC capped."""
        ipc, power = self.labels_noiseless(features)
        if self.noise_scale > 0.0:
            z = np.empty((len(ipc), 2))
            for i, ss in enumerate(np.atleast_1d(sample_seeds)):
                rng = np.random.Generator(
                    np.random.PCG64(np.random.SeedSequence((self.noise_key, int(ss)))))
                z[i] = rng.standard_normal(2)
            ipc = np.minimum(ipc * np.exp(self.noise_scale * z[:, 0]), self.ipc_cap)
            power = power * np.exp(self.noise_scale * z[:, 1])
        return ipc, power


def evaluate(surface: WorkloadSurface, point: DesignPoint, sample_seed: int) -> dict:
    """Deterministic labels for one design point under one noise seed."""
    features = encode_many([point], surface.space)
    ipc, power = surface.labels(features, [sample_seed])
    return {"ipc": float(ipc[0]), "power": float(power[0])}


_FIELD_RANGES = {
    "ipc_level": (0.4, 1.0),
    "width_floor": (0.1, 0.3),
    "width_shape": (0.4, 0.9),
    "sat_depth": (0.15, 0.6),
    "sat_rate": (1.0, 4.0),
    "sat_shift": (0.0, 0.5),
    "side_sens": (-0.1, 0.1),
    "pair_strength": (-0.05, 0.05),
    "power_base": (0.5, 1.5),
    "power_weights": (0.0, 0.35),
    "power_freq": (1.0, 4.0),
}


def _draw_coeffs(rng: np.random.Generator, n_res: int, n_side: int, p: int):
    """One coefficient draw; field order is fixed and part of the format."""
    sizes = {"ipc_level": None, "width_floor": None, "width_shape": None,
             "sat_depth": n_res, "sat_rate": n_res, "sat_shift": n_res,
             "side_sens": n_side, "pair_strength": N_INTERACTION_PAIRS,
             "power_base": None, "power_weights": p, "power_freq": None}
    out = {}
    for name, size in sizes.items():
        lo, hi = _FIELD_RANGES[name]
        out[name] = rng.uniform(lo, hi) if size is None else rng.uniform(lo, hi, size)
    return out


def gen_family(n_workloads: int, dissimilarity: float, seed: int, *,
               noise: float = 0.02, space: DesignSpace | None = None,
               ipc_cap: float = DEFAULT_IPC_CAP) -> list[WorkloadSurface]:
    """Surfaces with coefficients (1-d)*base + d*random; d=0 gives identical workloads."""
    if n_workloads < 1:
        raise ContractError("need at least one workload")
    if not 0.0 <= dissimilarity <= 1.0:
        raise ContractError(f"dissimilarity must be in [0, 1], got {dissimilarity}")
    space = space or canonical_space()
    freq_idx, width_idx, resource_idx, side_idx = _roles(space)
    p = len(space)

    rng_base = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, 0))))
    base = _draw_coeffs(rng_base, len(resource_idx), len(side_idx), p)
    # interaction pairs are family-shared structure over non-width parameters
    eligible = [i for i in range(p) if i != width_idx]
    pairs = []
    n_pairs = min(N_INTERACTION_PAIRS, len(eligible) * (len(eligible) - 1) // 2)
    while len(pairs) < n_pairs:
        i, j = (int(v) for v in rng_base.choice(len(eligible), size=2, replace=False))
        pair = (eligible[min(i, j)], eligible[max(i, j)])
        if pair not in pairs:
            pairs.append(pair)
    pair_idx = tuple(pairs)

    d = float(dissimilarity)
    surfaces = []
    for w in range(n_workloads):
        rng_w = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, w + 1))))
        own = _draw_coeffs(rng_w, len(resource_idx), len(side_idx), p)
        mixed = {k: (1.0 - d) * base[k] + d * own[k] for k in base}
        if n_pairs < N_INTERACTION_PAIRS:
            mixed["pair_strength"] = mixed["pair_strength"][:n_pairs]
        noise_key = int(rng_w.integers(2 ** 63))
        surfaces.append(WorkloadSurface(
            workload_id=f"w{w:02d}", space=space, pair_idx=pair_idx,
            noise_scale=float(noise), noise_key=noise_key, freq_idx=freq_idx,
            width_idx=width_idx, resource_idx=resource_idx, side_idx=side_idx,
            ipc_cap=float(ipc_cap), **mixed))
    return surfaces


class SurfaceSource:
    """WorkloadSource backed by an analytical surface; samples points uniformly."""

    def __init__(self, surface: WorkloadSurface):
        self.surface = surface
        self.space = surface.space

    @property
    def workload_id(self) -> str:
        return self.surface.workload_id

    def draw(self, rng: np.random.Generator, n: int) -> list[Sample]:
        points: list[DesignPoint] = []
        seen = set()
        attempts = 0
        while len(points) < n:
            attempts += 1
            if attempts > 200 * n:
                raise SourceExhausted(
                    f"{self.workload_id}: could not draw {n} distinct points")
            idx = tuple(int(rng.integers(0, spec.size)) for spec in self.space.params)
            if idx not in seen:
                seen.add(idx)
                points.append(DesignPoint(idx))
        seeds = [int(v) for v in rng.integers(0, 2 ** 63, size=n)]
        features = encode_many(points, self.space)
        ipc, power = self.surface.labels(features, seeds)
        return [Sample(pt, features[i], float(ipc[i]), float(power[i]))
                for i, pt in enumerate(points)]

    def probe_labels(self, points, seed: int) -> np.ndarray:
        features = encode_many(points, self.space)
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, 99))))
        seeds = [int(v) for v in rng.integers(0, 2 ** 63, size=len(points))]
        ipc, _ = self.surface.labels(features, seeds)
        return ipc


# ---------------------------------------------------------------------------
# 1-D Wasserstein distance and the workload similarity matrix


def wasserstein_1d(labels_a, labels_b) -> float:
    """W1 between empirical distributions: mean |sorted difference| for equal
    sizes, otherwise the CDF-difference integral over the merged sample grid."""
    a = np.sort(np.asarray(labels_a, dtype=np.float64).ravel())
    b = np.sort(np.asarray(labels_b, dtype=np.float64).ravel())
    if a.size == 0 or b.size == 0:
        raise ContractError("wasserstein_1d needs non-empty samples")
    if a.size == b.size:
        return float(np.mean(np.abs(a - b)))
    grid = np.sort(np.concatenate([a, b]))
    deltas = np.diff(grid)
    cdf_a = np.searchsorted(a, grid[:-1], side="right") / a.size
    cdf_b = np.searchsorted(b, grid[:-1], side="right") / b.size
    return float(np.sum(np.abs(cdf_a - cdf_b) * deltas))


def similarity_matrix(sources, n_probe: int, seed: int):
    """Pairwise W1 of IPC labels over one shared probe set.

    Returns (ids, matrix); the matrix is exactly symmetric with a zero diagonal.
    """
    sources = list(sources)
    if len(sources) < 2:
        raise ContractError("similarity needs at least two sources")
    space = sources[0].space
    points = sample_uniform(space, n_probe, seed)
    labels = [src.probe_labels(points, seed) for src in sources]
    n = len(sources)
    mat = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            w = wasserstein_1d(labels[i], labels[j])
            mat[i, j] = w
            mat[j, i] = w
    return [src.workload_id for src in sources], mat


# ---------------------------------------------------------------------------
# exact surface persistence (family manifest)

MANIFEST_FORMAT = "metadse-manifest 1"
_ARRAY_FIELDS = ("sat_depth", "sat_rate", "sat_shift", "side_sens", "pair_strength",
                 "power_weights")
_SCALAR_FIELDS = ("ipc_level", "width_floor", "width_shape", "power_base", "power_freq",
                  "noise_scale", "ipc_cap")


def surface_to_json(surface: WorkloadSurface) -> str:
    doc = {name: getattr(surface, name) for name in _SCALAR_FIELDS}
    doc.update({name: list(getattr(surface, name)) for name in _ARRAY_FIELDS})
    doc["pair_idx"] = [list(p) for p in surface.pair_idx]
    doc["noise_key"] = surface.noise_key
    doc["freq_idx"] = surface.freq_idx
    doc["width_idx"] = surface.width_idx
    doc["resource_idx"] = list(surface.resource_idx)
    doc["side_idx"] = list(surface.side_idx)
    return json.dumps(doc, sort_keys=True)


def surface_from_json(workload_id: str, text: str, space: DesignSpace) -> WorkloadSurface:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"surface {workload_id}: {exc}") from exc
    kwargs = {name: float(doc[name]) for name in _SCALAR_FIELDS}
    kwargs.update({name: np.asarray(doc[name], dtype=np.float64) for name in _ARRAY_FIELDS})
    return WorkloadSurface(
        workload_id=workload_id, space=space,
        pair_idx=tuple((int(i), int(j)) for i, j in doc["pair_idx"]),
        noise_key=int(doc["noise_key"]), freq_idx=int(doc["freq_idx"]),
        width_idx=int(doc["width_idx"]), resource_idx=tuple(int(i) for i in doc["resource_idx"]),
        side_idx=tuple(int(i) for i in doc["side_idx"]), **kwargs)


def save_manifest(path, surfaces, *, seed: int, dissimilarity: float, noise: float,
                  extra: dict[str, str] | None = None) -> None:
    lines = [f"format = {MANIFEST_FORMAT}", f"seed = {seed}",
             f"dissimilarity = {dissimilarity!r}", f"noise = {noise!r}",
             "workloads = " + ", ".join(s.workload_id for s in surfaces)]
    for key in sorted(extra or {}):
        lines.append(f"{key} = {extra[key]}")
    for s in surfaces:
        lines.append(f"surface.{s.workload_id} = {surface_to_json(s)}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_manifest(path, space: DesignSpace | None = None) -> list[WorkloadSurface]:
    space = space or canonical_space()
    fields: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ParseError(f"{path}: expected 'key = value', got {line!r}")
            fields[key.strip()] = value.strip()
    if fields.get("format") != MANIFEST_FORMAT:
        raise ParseError(f"{path}: not a {MANIFEST_FORMAT} file")
    ids = [w.strip() for w in fields.get("workloads", "").split(",") if w.strip()]
    if not ids:
        raise ParseError(f"{path}: no workloads listed")
    surfaces = []
    for wid in ids:
        key = f"surface.{wid}"
        if key not in fields:
            raise ParseError(f"{path}: missing {key}")
        surfaces.append(surface_from_json(wid, fields[key], space))
    return surfaces

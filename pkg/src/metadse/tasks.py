"""Episodic task construction: labeled samples split into support and query sets."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .design_space import DesignPoint, DesignSpace
from .errors import ContractError
from .predictor import PredictorConfig

TRAIN_SPLIT, VAL_SPLIT, TEST_SPLIT = 7, 5, 5


@dataclass(frozen=True, eq=False)
class Sample:
    """One labeled design point; labels must be finite and positive."""

    point: DesignPoint
    features: np.ndarray
    ipc: float
    power: float

    def __post_init__(self):
        if not (np.isfinite(self.ipc) and self.ipc > 0):
            raise ContractError(f"ipc must be finite and positive, got {self.ipc}")
        if not (np.isfinite(self.power) and self.power > 0):
            raise ContractError(f"power must be finite and positive, got {self.power}")


@dataclass(eq=False)
class Task:
    """Support/query episode from a single workload; points are disjoint."""

    workload_id: str
    support: list[Sample]
    query: list[Sample]
    task_id: int = -1

    def __post_init__(self):
        pts = [s.point.indices for s in self.support + self.query]
        if len(set(pts)) != len(pts):
            raise ContractError("support and query points must be distinct")


class WorkloadSource(Protocol):
    workload_id: str
    space: DesignSpace

    def draw(self, rng: np.random.Generator, n: int) -> list[Sample]:
        """n samples with distinct design points."""
        ...

    def probe_labels(self, points, seed: int) -> np.ndarray:
        """IPC labels for similarity analysis."""
        ...


def make_tasks(source: WorkloadSource, n_tasks: int, s: int, q: int, seed: int) -> list[Task]:
    """n_tasks episodes of s support + q query samples; pure in (source, sizes, seed).

    Task i draws from the stream seeded by (seed, i), so parallel construction
    and any subset re-generation agree with the sequential result.
    """
    if s < 1 or q < 1 or n_tasks < 1:
        raise ContractError("n_tasks, s and q must all be >= 1")
    tasks = []
    for i in range(n_tasks):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, i))))
        samples = source.draw(rng, s + q)
        tasks.append(Task(source.workload_id, samples[:s], samples[s:], task_id=i))
    return tasks


def split_workloads(ids, seed: int):
    """Random 17-workload subset partitioned into (train 7, val 5, test 5)."""
    ids = list(ids)
    need = TRAIN_SPLIT + VAL_SPLIT + TEST_SPLIT
    if len(ids) < need:
        raise ContractError(f"need at least {need} workloads, got {len(ids)}")
    rng = np.random.Generator(np.random.PCG64(seed))
    order = [ids[i] for i in rng.permutation(len(ids))[:need]]
    train = order[:TRAIN_SPLIT]
    val = order[TRAIN_SPLIT:TRAIN_SPLIT + VAL_SPLIT]
    test = order[TRAIN_SPLIT + VAL_SPLIT:]
    return train, val, test


@dataclass(frozen=True)
class LabelScaler:
    """Per-task affine label transform; identity unless both targets are trained."""

    mean: np.ndarray
    std: np.ndarray

    def transform(self, y: np.ndarray) -> np.ndarray:
        return (y - self.mean) / self.std

    def inverse(self, y: np.ndarray) -> np.ndarray:
        return y * self.std + self.mean


IDENTITY_SCALER = LabelScaler(mean=np.zeros(1), std=np.ones(1))


def stack_features(samples) -> np.ndarray:
    return np.stack([s.features for s in samples])


def stack_labels(samples, outputs: str) -> np.ndarray:
    if outputs == "ipc":
        return np.asarray([[s.ipc] for s in samples])
    if outputs == "power":
        return np.asarray([[s.power] for s in samples])
    return np.asarray([[s.ipc, s.power] for s in samples])


def task_batches(task: Task, config: PredictorConfig):
    """(Xs, Ys, Xq, Yq, scaler) with labels standardized from support statistics
    when training both targets jointly, so neither target dominates the loss."""
    xs, xq = stack_features(task.support), stack_features(task.query)
    ys, yq = stack_labels(task.support, config.outputs), stack_labels(task.query, config.outputs)
    if config.outputs == "both":
        mean = ys.mean(axis=0)
        std = np.maximum(ys.std(axis=0), 1e-9)
        scaler = LabelScaler(mean=mean, std=std)
        return xs, scaler.transform(ys), xq, scaler.transform(yq), scaler
    return xs, ys, xq, yq, IDENTITY_SCALER

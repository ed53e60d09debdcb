import math

import numpy as np
import pytest

from metadse.design_space import (
    DesignPoint,
    ParamSpec,
    canonical_space,
    cardinality,
    decode,
    encode,
    encode_many,
    expand_range,
    load_space,
    sample_uniform,
    save_space,
)
from metadse.errors import ContractError, InvalidPoint, InvalidVector, ParseError

# Independent expansion of every published row: (name, kind, row rule).
# Counts derive from (end - start) // stride + 1 for ranges, len() otherwise.
TABLE_ROWS = [
    ("Core Frequency", "enumerated", [1, 1.5, 2, 2.5, 3]),
    ("Pipeline Width", "range", (1, 12, 1)),
    ("Fetch Buffer", "enumerated", [16, 32, 64]),
    ("Fetch Queue", "range", (8, 48, 4)),
    ("Branch Predictor", "categorical", ["BiModeBP", "TournamentBP"]),
    ("RAS Size", "range", (16, 40, 2)),
    ("BTB Size", "enumerated", [1024, 2048, 4096]),
    ("ROB Size", "range", (32, 256, 16)),
    ("Int/Fp RF Number", "range", (64, 256, 8)),
    ("Inst Queue", "range", (16, 80, 8)),
    ("Load/Store Queue", "range", (20, 48, 4)),
    ("IntALU", "range", (3, 8, 1)),
    ("IntMultDiv", "range", (1, 4, 1)),
    ("FpALU", "range", (1, 4, 1)),
    ("FpMultDiv", "range", (1, 4, 1)),
    ("Cacheline", "enumerated", [32, 64]),
    ("L1 Cache Size", "enumerated", [16, 32, 64]),
    ("L1 Cache Assoc.", "enumerated", [2, 4]),
    ("L2 Cache Size", "enumerated", [128, 256]),
    ("L2 Cache Assoc.", "enumerated", [2, 4]),
]


def row_values(rule):
    kind, data = rule
    if kind == "range":
        start, end, stride = data
        return [start + k * stride for k in range((end - start) // stride + 1)]
    return list(data)


def test_canonical_rows_match_table():
    space = canonical_space()
    assert len(space) == 20
    for spec, (name, kind, data) in zip(space.params, TABLE_ROWS):
        assert spec.name == name
        assert spec.kind == kind
        expected = row_values((kind, data))
        if kind == "categorical":
            assert spec.labels == tuple(data)
            assert list(spec.candidates) == list(range(len(data)))
        else:
            assert list(spec.candidates) == [float(v) for v in expected]


def test_row_counts_and_cardinality():
    space = canonical_space()
    counts = [len(row_values((kind, data))) for _, kind, data in TABLE_ROWS]
    assert counts == [5, 12, 3, 11, 2, 13, 3, 15, 25, 9, 8, 6, 4, 4, 4, 2, 3, 2, 2, 2]
    assert [p.size for p in space.params] == counts
    assert cardinality(space) == math.prod(counts)


def test_expand_range_inclusive_endpoints():
    assert expand_range(16, 40, 2) == tuple(float(v) for v in range(16, 41, 2))
    assert len(expand_range(32, 256, 16)) == 15
    assert expand_range(1, 12, 1)[-1] == 12.0
    with pytest.raises(ContractError):
        expand_range(1, 12, 0)


def test_encode_known_values():
    space = canonical_space()
    width = space.index_of("Pipeline Width")
    freq = space.index_of("Core Frequency")
    base = DesignPoint(tuple(0 for _ in range(20)))
    f = encode(base, space)
    assert f[width] == 0.0
    p = list(base.indices)
    p[width] = 11
    assert encode(DesignPoint(tuple(p)), space)[width] == 1.0
    p = list(base.indices)
    p[freq] = 2  # 2 GHz out of [1, 3]
    assert encode(DesignPoint(tuple(p)), space)[freq] == pytest.approx(0.5, abs=0)


def test_decode_nearest_candidate():
    space = canonical_space()
    freq = space.index_of("Core Frequency")
    f = encode(DesignPoint(tuple(0 for _ in range(20))), space)
    f[freq] = 0.49  # nearest of {0, 0.25, 0.5, 0.75, 1} is 0.5 -> 2 GHz
    assert decode(f, space).indices[freq] == 2
    zeros = decode(np.zeros(20), space)
    assert zeros.indices == tuple(0 for _ in range(20))


def test_encode_decode_roundtrip():
    space = canonical_space()
    for p in sample_uniform(space, 2000, seed=3):
        assert decode(encode(p, space), space) == p


def test_encode_many_matches_encode():
    space = canonical_space()
    pts = sample_uniform(space, 64, seed=9)
    mat = encode_many(pts, space)
    for row, p in zip(mat, pts):
        np.testing.assert_array_equal(row, encode(p, space))


def test_invalid_point_and_vector():
    space = canonical_space()
    with pytest.raises(InvalidPoint):
        encode(DesignPoint(tuple([99] + [0] * 19)), space)
    with pytest.raises(InvalidPoint):
        encode(DesignPoint((0,)), space)
    with pytest.raises(InvalidVector):
        decode(np.zeros(7), space)
    with pytest.raises(InvalidVector):
        decode(np.full(20, 1.5), space)


def test_sampling_deterministic_and_valid():
    space = canonical_space()
    a = sample_uniform(space, 5, seed=42)
    b = sample_uniform(space, 5, seed=42)
    assert a == b
    assert a != sample_uniform(space, 5, seed=43)
    for p in sample_uniform(space, 200, seed=1):
        p.validate(space)


def test_sampling_uniform_within_5_sigma():
    space = canonical_space()
    n = 10000
    pts = sample_uniform(space, n, seed=7)
    idx = np.asarray([p.indices for p in pts])
    for j, spec in enumerate(space.params):
        prob = 1.0 / spec.size
        sigma = math.sqrt(n * prob * (1 - prob))
        counts = np.bincount(idx[:, j], minlength=spec.size)
        assert np.all(np.abs(counts - n * prob) < 5 * sigma), spec.name


def test_space_file_roundtrip(tmp_path):
    space = canonical_space()
    path = tmp_path / "space.ini"
    save_space(space, path)
    loaded = load_space(path)
    assert loaded == space


def test_load_space_rejects_garbage(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text("[X]\nkind = mystery\ncandidates = 1, 2\n")
    with pytest.raises(ParseError):
        load_space(path)
    path.write_text("")
    with pytest.raises(ParseError):
        load_space(path)


def test_param_spec_validation():
    with pytest.raises(ContractError):
        ParamSpec("x", "enumerated", (3.0, 1.0))
    with pytest.raises(ContractError):
        ParamSpec("x", "enumerated", ())
    with pytest.raises(ContractError):
        ParamSpec("x", "categorical", (0.0, 1.0))

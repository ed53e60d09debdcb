"""Checkpoint container: text preamble + length-prefixed little-endian f64 blocks.

Layout: `MDSE <version>` line, `key = value` config lines, optional metadata
lines, one blank line, then two binary blocks (flattened parameters, then the
architectural mask or an empty block). Save/load roundtrips are bit-exact.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ParseError
from .predictor import PredictorConfig, flatten, param_count, unflatten

MAGIC = "MDSE"
VERSION = 1

_CONFIG_KEYS = ("embed_dim", "heads", "layers", "mlp_hidden", "outputs", "p")


@dataclass
class Checkpoint:
    params: dict[str, np.ndarray]
    config: PredictorConfig
    p: int
    mask: np.ndarray | None = None
    meta: dict[str, str] | None = None


def _write_block(fh, arr: np.ndarray | None) -> None:
    if arr is None:
        fh.write(struct.pack("<Q", 0))
        return
    data = np.ascontiguousarray(arr, dtype="<f8")
    fh.write(struct.pack("<Q", data.size))
    fh.write(data.tobytes())


def _read_block(fh, path) -> np.ndarray | None:
    raw = fh.read(8)
    if len(raw) != 8:
        raise ParseError(f"{path}: truncated block header")
    (n,) = struct.unpack("<Q", raw)
    if n == 0:
        return None
    data = fh.read(8 * n)
    if len(data) != 8 * n:
        raise ParseError(f"{path}: truncated float block ({len(data)} of {8 * n} bytes)")
    return np.frombuffer(data, dtype="<f8").astype(np.float64)


def save_checkpoint(path, params, config: PredictorConfig, p: int,
                    mask: np.ndarray | None = None, meta: dict[str, str] | None = None) -> None:
    header = [f"{MAGIC} {VERSION}"]
    values = {"embed_dim": config.embed_dim, "heads": config.heads, "layers": config.layers,
              "mlp_hidden": config.mlp_hidden, "outputs": config.outputs, "p": p}
    header += [f"{k} = {values[k]}" for k in _CONFIG_KEYS]
    for k in sorted(meta or {}):
        header.append(f"meta.{k} = {meta[k]}")
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n\n").encode("utf-8"))
        _write_block(fh, flatten(params, config, p))
        _write_block(fh, mask)


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        header_bytes = b""
        while not header_bytes.endswith(b"\n\n"):
            ch = fh.read(1)
            if not ch:
                raise ParseError(f"{path}: missing header terminator")
            header_bytes += ch
            if len(header_bytes) > 65536:
                raise ParseError(f"{path}: header too large")
        lines = header_bytes.decode("utf-8").strip().split("\n")
        magic = lines[0].split()
        if len(magic) != 2 or magic[0] != MAGIC:
            raise ParseError(f"{path}: not a {MAGIC} checkpoint")
        if int(magic[1]) != VERSION:
            raise ParseError(f"{path}: unsupported format version {magic[1]}")
        fields: dict[str, str] = {}
        meta: dict[str, str] = {}
        for line in lines[1:]:
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key.startswith("meta."):
                meta[key[5:]] = value
            else:
                fields[key] = value
        try:
            config = PredictorConfig(
                embed_dim=int(fields["embed_dim"]), heads=int(fields["heads"]),
                layers=int(fields["layers"]), mlp_hidden=int(fields["mlp_hidden"]),
                outputs=fields["outputs"])
            p = int(fields["p"])
        except (KeyError, ValueError) as exc:
            raise ParseError(f"{path}: bad header field: {exc}") from exc
        flat = _read_block(fh, path)
        if flat is None or flat.shape != (param_count(config, p),):
            raise ParseError(f"{path}: parameter block does not match header config")
        mask = _read_block(fh, path)
        if mask is not None:
            if mask.size != p * p:
                raise ParseError(f"{path}: mask block size {mask.size}, expected {p * p}")
            mask = mask.reshape(p, p)
    return Checkpoint(params=unflatten(flat, config, p), config=config, p=p, mask=mask,
                      meta=meta or None)

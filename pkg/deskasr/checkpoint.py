"""
Checkpoint container.

Layout:

    DESKASR-CHECKPOINT\n
    <one line of JSON: version, config, tensor table, artifacts, states>\n
    END-HEADER\n
    <raw little-endian tensor payloads, in table order>

Each tensor table entry records name, shape, dtype, byte offset (relative to
the end of the header), byte count and sha256 of the payload. A checksum
mismatch or a truncated payload refuses the load. Optimizer moments are
stored as ordinary tensors under the "optim." prefix.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np

from .config import RunConfig
from .errors import CheckpointError, FrontendError, ShapeError, TokenizerError
from .frontend import CmvnStats, cmvn_from_lines, cmvn_to_lines
from .tokenizer import Tokenizer

if TYPE_CHECKING:
    from .models.base import AsrModel
    from .numerics.optim import Adam

logger = logging.getLogger(__name__)

MAGIC = "DESKASR-CHECKPOINT"
END_HEADER = "END-HEADER"
FORMAT_VERSION = 1
OPTIM_PREFIX = "optim."


@dataclass
class Checkpoint:
    config: RunConfig
    tensors: dict[str, np.ndarray]
    tokenizer: Tokenizer
    cmvn: CmvnStats
    rng_state: dict | None = None
    trainer_state: dict | None = None
    optimizer_state: dict | None = None

    @property
    def model_tensors(self) -> dict[str, np.ndarray]:
        return {k: v for k, v in self.tensors.items() if not k.startswith(OPTIM_PREFIX)}


def _little_endian(array: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(array, dtype=array.dtype.newbyteorder("<"))


def save_checkpoint(
    path: str | Path,
    model: "AsrModel",
    tokenizer: Tokenizer,
    cmvn: CmvnStats,
    rng_state: dict | None = None,
    trainer_state: dict | None = None,
    optimizer: "Adam | None" = None,
) -> Path:
    """Write a checkpoint atomically (temp file, then rename)."""
    path = Path(path)
    config: RunConfig = model.config
    config = config.model_copy(update={"dtype": str(config.np_dtype)})

    tensors = dict(model.state_dict())
    optimizer_meta = None
    if optimizer is not None:
        state = optimizer.state_dict()
        optimizer_meta = {"step": state["step"], "lr": state["lr"]}
        tensors.update({OPTIM_PREFIX + name: value for name, value in state["tensors"].items()})

    table, payloads, offset = [], [], 0
    for name, value in tensors.items():
        data = _little_endian(np.asarray(value)).tobytes()
        table.append({
            "name": name,
            "shape": list(np.shape(value)),
            "dtype": np.asarray(value).dtype.newbyteorder("<").str,
            "offset": offset,
            "nbytes": len(data),
            "sha256": hashlib.sha256(data).hexdigest(),
        })
        payloads.append(data)
        offset += len(data)

    header = {
        "version": FORMAT_VERSION,
        "kind": config.kind,
        "config": json.loads(config.model_dump_json()),
        "tensors": table,
        "artifacts": {"tokenizer": tokenizer.to_artifacts(), "cmvn": cmvn_to_lines(cmvn)},
        "rng": rng_state,
        "trainer": trainer_state,
        "optimizer": optimizer_meta,
    }

    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(f"{MAGIC}\n".encode("ascii"))
        fh.write(json.dumps(header, ensure_ascii=False).encode("utf-8") + b"\n")
        fh.write(f"{END_HEADER}\n".encode("ascii"))
        for data in payloads:
            fh.write(data)
    os.replace(tmp, path)
    logger.info("Checkpoint written", extra={"metrics": {"tensors": len(table), "bytes": offset},
                                             "context": {"path": str(path)}})
    return path


def _read_header(fh, path: Path) -> dict:
    if fh.readline().rstrip(b"\n") != MAGIC.encode("ascii"):
        raise CheckpointError(f"{path} is not a deskasr checkpoint")
    try:
        header = json.loads(fh.readline().decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header ({exc})") from None
    if fh.readline().rstrip(b"\n") != END_HEADER.encode("ascii"):
        raise CheckpointError(f"{path}: header terminator missing")
    version = header.get("version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: format version {version} is not supported (expected {FORMAT_VERSION})")
    return header


def read_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    with open(path, "rb") as fh:
        header = _read_header(fh, path)
        body = fh.read()

    tensors: dict[str, np.ndarray] = {}
    for entry in header["tensors"]:
        start, nbytes = int(entry["offset"]), int(entry["nbytes"])
        data = body[start : start + nbytes]
        if len(data) != nbytes:
            raise CheckpointError(f"{path}: payload of '{entry['name']}' is truncated")
        if hashlib.sha256(data).hexdigest() != entry["sha256"]:
            raise CheckpointError(f"{path}: checksum mismatch for tensor '{entry['name']}'")
        dtype = np.dtype(entry["dtype"])
        array = np.frombuffer(data, dtype=dtype).reshape(entry["shape"])
        tensors[entry["name"]] = array.astype(dtype.newbyteorder("="))

    try:
        config = RunConfig.model_validate(header["config"])
        artifacts = header["artifacts"]
        tokenizer = Tokenizer.from_artifacts(artifacts["tokenizer"])
        cmvn = cmvn_from_lines(artifacts["cmvn"])
    except (KeyError, ValueError, TokenizerError, FrontendError) as exc:
        raise CheckpointError(f"{path}: invalid artifacts ({exc})") from None

    optimizer_state = None
    if header.get("optimizer") is not None:
        optimizer_state = {
            **header["optimizer"],
            "tensors": {k[len(OPTIM_PREFIX):]: v for k, v in tensors.items() if k.startswith(OPTIM_PREFIX)},
        }
    return Checkpoint(config, tensors, tokenizer, cmvn, header.get("rng"), header.get("trainer"), optimizer_state)


def restore_model(checkpoint: Checkpoint, seed: int | None = None) -> "AsrModel":
    """Rebuild the model described by a checkpoint and copy its weights in.

    `seed` replaces the run seed for the rebuilt model's random streams
    (dropout); the weights always come from the checkpoint.
    """
    from .models import get_model_class

    model = get_model_class(checkpoint.config.kind).build(checkpoint.config, checkpoint.tokenizer, seed=seed)
    try:
        model.load_state_dict(checkpoint.model_tensors, strict=True)
    except (KeyError, ShapeError) as exc:
        raise CheckpointError(f"checkpoint does not match its own config: {exc}") from None
    return model


def load_model(path: str | Path, seed: int | None = None) -> tuple["AsrModel", Checkpoint]:
    checkpoint = read_checkpoint(path)
    return restore_model(checkpoint, seed), checkpoint

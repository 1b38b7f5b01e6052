"""Checkpoint containers: encoder blob stored apart from adapter + decoder head."""

from __future__ import annotations

import hashlib
import io
import json
from pathlib import Path

import torch

from .segmodel import ModelSpec, SegModel, build_model


def _blob(obj) -> bytes:
    buf = io.BytesIO()
    torch.save(obj, buf)
    return buf.getvalue()


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]


def save_checkpoint(model, directory, fingerprint: dict | None = None) -> dict:
    """Write ``encoder.pt`` and ``head.pt`` (or ``model.pt`` for the CNN baseline).

    Returns a dict of file name -> sha256 prefix.  The head records the hash of
    the encoder blob it was trained against so frozen runs can share one encoder.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = {"spec": model.spec.to_json(), "fingerprint": fingerprint or {}}
    hashes = {}
    if isinstance(model, SegModel):
        enc_bytes = _blob(model.encoder.state_dict())
        (directory / "encoder.pt").write_bytes(enc_bytes)
        hashes["encoder.pt"] = hashlib.sha256(enc_bytes).hexdigest()[:16]
        head = {"meta": json.dumps({**meta, "encoder_sha": hashes["encoder.pt"]}, sort_keys=True),
                "adapter": model.adapter.state_dict(), "decoder": model.decoder.state_dict()}
        head_bytes = _blob(head)
        (directory / "head.pt").write_bytes(head_bytes)
        hashes["head.pt"] = hashlib.sha256(head_bytes).hexdigest()[:16]
    else:
        blob = _blob({"meta": json.dumps(meta, sort_keys=True), "state": model.state_dict()})
        (directory / "model.pt").write_bytes(blob)
        hashes["model.pt"] = hashlib.sha256(blob).hexdigest()[:16]
    return hashes


def load_checkpoint(directory, encoder_path=None):
    directory = Path(directory)
    if (directory / "model.pt").exists():
        blob = torch.load(directory / "model.pt", map_location="cpu", weights_only=True)
        meta = json.loads(blob["meta"])
        model = build_model(ModelSpec.from_json(meta["spec"]))
        model.load_state_dict(blob["state"])
        return model
    head = torch.load(directory / "head.pt", map_location="cpu", weights_only=True)
    meta = json.loads(head["meta"])
    encoder_path = Path(encoder_path or directory / "encoder.pt")
    if sha256_file(encoder_path) != meta["encoder_sha"]:
        raise ValueError(f"encoder blob {encoder_path} does not match the head's recorded hash")
    model = build_model(ModelSpec.from_json(meta["spec"]))
    model.encoder.load_state_dict(torch.load(encoder_path, map_location="cpu", weights_only=True))
    model.adapter.load_state_dict(head["adapter"])
    model.decoder.load_state_dict(head["decoder"])
    return model

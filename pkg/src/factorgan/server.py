"""HTTP service over one immutable checkpoint snapshot.

Endpoints: GET /model/info; POST /generate, /encode, /edit, /traverse. Images
travel as base64 PNG. Every response embeds the checkpoint digest so clients
can detect a model swap.
"""

from __future__ import annotations

import base64
import io

import numpy as np
import torch
from fastapi import FastAPI, HTTPException
from PIL import Image
from pydantic import BaseModel

from .networks import ModelBundle, from_torch_images, load_checkpoint, to_torch_images
from .rendering import uint8_to_tensor
from .training import latent_traversal


class GenerateRequest(BaseModel):
    code: list[float]
    z_seed: int = 0


class EncodeRequest(BaseModel):
    image: str


class EditRequest(BaseModel):
    image: str
    fine_code: list[float]


class TraverseAnchor(BaseModel):
    code: list[float] | None = None
    z_seed: int = 0
    image: str | None = None


class TraverseRequest(BaseModel):
    anchor: TraverseAnchor
    factor: int
    steps: int = 8


def _png_b64(img: np.ndarray) -> str:
    arr = np.clip((np.asarray(img, dtype=np.float64) + 1.0) * 127.5, 0, 255).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def _decode_image(b64: str, resolution: int) -> np.ndarray:
    try:
        raw = base64.b64decode(b64, validate=True)
        with Image.open(io.BytesIO(raw)) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except Exception:
        raise HTTPException(status_code=415, detail="image is not decodable base64 PNG")
    if arr.shape[0] != resolution or arr.shape[1] != resolution:
        raise HTTPException(
            status_code=415,
            detail=f"image must be {resolution}x{resolution}, got {arr.shape[1]}x{arr.shape[0]}")
    return uint8_to_tensor(arr)


class ModelService:
    """Read-only inference over one loaded bundle."""

    def __init__(self, bundle: ModelBundle, digest: str):
        self.bundle = bundle
        self.digest = digest
        if bundle.generator is not None:
            bundle.generator.eval()
        bundle.disc_encoder.eval()

    @property
    def k(self) -> int:
        return self.bundle.factor_spec.k

    @property
    def fine_k(self) -> int | None:
        if self.bundle.kind != "fine":
            return None
        return len(self.bundle.generator.fine_factors)

    def info(self) -> dict:
        cfg = self.bundle.config
        return {
            "model_name": self.bundle.kind,
            "factor_spec": self.bundle.factor_spec.to_json(),
            "resolution": cfg.resolution,
            "fine_cutoff": cfg.fine_cutoff,
            "fine_factors": (list(self.bundle.generator.fine_factors)
                             if self.bundle.kind == "fine" else None),
            "checkpoint_digest": self.digest,
        }

    @torch.no_grad()
    def generate(self, code: list[float], z_seed: int) -> np.ndarray:
        if self.bundle.generator is None or self.bundle.kind == "fine":
            raise HTTPException(status_code=409,
                                detail="checkpoint has no code-conditioned generator")
        if len(code) != self.k:
            raise HTTPException(status_code=422,
                                detail=f"field 'code' must have length {self.k}")
        z = torch.randn(1, self.bundle.config.z_dim,
                        generator=torch.Generator().manual_seed(z_seed))
        c = torch.tensor([code], dtype=torch.float32)
        return from_torch_images(self.bundle.generator(z, c))[0]

    @torch.no_grad()
    def encode(self, image: np.ndarray) -> list[float]:
        x = to_torch_images(image[None])
        _, code = self.bundle.disc_encoder(x)
        return [float(v) for v in code[0]]

    @torch.no_grad()
    def edit(self, image: np.ndarray, fine_code: list[float]) -> np.ndarray:
        if self.bundle.kind != "fine":
            raise HTTPException(status_code=409,
                                detail="/edit needs a fine-variant checkpoint")
        if len(fine_code) != self.fine_k:
            raise HTTPException(status_code=422,
                                detail=f"field 'fine_code' must have length {self.fine_k}")
        x = to_torch_images(image[None])
        c = torch.tensor([fine_code], dtype=torch.float32)
        return from_torch_images(self.bundle.generator(x, c))[0]

    def traverse(self, req: TraverseRequest) -> list[np.ndarray]:
        if self.bundle.kind == "fine":
            if req.anchor.image is None:
                raise HTTPException(status_code=422,
                                    detail="field 'anchor.image' required for fine models")
            anchor = _decode_image(req.anchor.image, self.bundle.config.resolution)
        else:
            if req.anchor.code is None:
                raise HTTPException(status_code=422, detail="field 'anchor.code' required")
            if len(req.anchor.code) != self.k:
                raise HTTPException(status_code=422,
                                    detail=f"field 'anchor.code' must have length {self.k}")
            anchor = np.array(req.anchor.code, dtype=np.float64)
        try:
            row = latent_traversal(self.bundle, anchor, req.factor, req.steps,
                                   z_seed=req.anchor.z_seed)
        except ValueError as e:
            raise HTTPException(status_code=422, detail=str(e))
        return list(row.images)


def create_app(checkpoint_path=None, service: ModelService | None = None) -> FastAPI:
    if service is None:
        bundle, _, digest = load_checkpoint(checkpoint_path)
        service = ModelService(bundle, digest)
    app = FastAPI(title="factorgan")
    app.state.service = service

    @app.get("/model/info")
    def model_info():
        return service.info()

    @app.post("/generate")
    def generate(req: GenerateRequest):
        img = service.generate(req.code, req.z_seed)
        return {"image": _png_b64(img), "checkpoint_digest": service.digest}

    @app.post("/encode")
    def encode(req: EncodeRequest):
        img = _decode_image(req.image, service.bundle.config.resolution)
        return {"code": service.encode(img), "checkpoint_digest": service.digest}

    @app.post("/edit")
    def edit(req: EditRequest):
        if service.bundle.kind != "fine":
            raise HTTPException(status_code=409,
                                detail="/edit needs a fine-variant checkpoint")
        img = _decode_image(req.image, service.bundle.config.resolution)
        out = service.edit(img, req.fine_code)
        return {"image": _png_b64(out), "checkpoint_digest": service.digest}

    @app.post("/traverse")
    def traverse(req: TraverseRequest):
        row = service.traverse(req)
        return {"images": [_png_b64(img) for img in row],
                "checkpoint_digest": service.digest}

    return app

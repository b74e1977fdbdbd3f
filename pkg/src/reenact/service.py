"""HTTP inference service backing the interactive landmark editor."""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from reenact.checkpoints import state_dict_hash
from reenact.config import ToolkitConfig
from reenact.converter import LandmarkConverter, convert
from reenact.errors import DomainError, ReenactError, StructuralError
from reenact.generator import GeometryAwareGenerator
from reenact.images import FaceImage
from reenact.landmarks import DEFAULT_GROUPING, FacePart, Landmark, interpolate, rasterize
from reenact.training import load_converter, load_generator


@dataclass
class ModelSnapshot:
    """Immutable models served for the lifetime of the process."""

    converter: LandmarkConverter
    generator: GeometryAwareGenerator
    ulc_hash: str
    gag_hash: str
    grouping: tuple[FacePart, ...]
    landmark_resolution: int


def load_snapshot(
    ulc_path: str | Path,
    gag_path: str | Path,
    config: ToolkitConfig,
    grouping: tuple[FacePart, ...] = DEFAULT_GROUPING,
) -> ModelSnapshot:
    converter = load_converter(ulc_path, config)
    generator = load_generator(gag_path, config)
    converter.eval()
    generator.eval()
    return ModelSnapshot(
        converter=converter,
        generator=generator,
        ulc_hash=state_dict_hash(converter),
        gag_hash=state_dict_hash(generator),
        grouping=grouping,
        landmark_resolution=config.gag.landmark_resolution,
    )


class LandmarkPayload(BaseModel):
    version: int
    points: list[list[float]]


class ConvertRequest(BaseModel):
    target_ref_landmarks: LandmarkPayload
    source_landmarks: LandmarkPayload


class ReenactRequest(BaseModel):
    reference_image: str  # base64 PNG
    landmarks: LandmarkPayload


class InterpolateRequest(BaseModel):
    a: LandmarkPayload
    b: LandmarkPayload
    t: float


def _parse_landmark(payload: LandmarkPayload, field: str) -> Landmark:
    try:
        return Landmark.from_json(payload.model_dump())
    except StructuralError as exc:
        raise HTTPException(status_code=400, detail={"field": field, "message": str(exc)})


def create_app(
    ulc_path: str | Path | None = None,
    gag_path: str | Path | None = None,
    config: ToolkitConfig | None = None,
    grouping: tuple[FacePart, ...] = DEFAULT_GROUPING,
    load_immediately: bool = True,
) -> FastAPI:
    """Build the service; with ``load_immediately=False`` checkpoints load
    in the background and requests see 503 until they finish."""
    config = config or ToolkitConfig()
    app = FastAPI(title="face reenactment service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    app.state.snapshot = None
    app.state.load_error = None

    def do_load() -> None:
        try:
            app.state.snapshot = load_snapshot(ulc_path, gag_path, config, grouping)
        except Exception as exc:  # surfaced as 503 with detail
            app.state.load_error = str(exc)

    if ulc_path is not None and gag_path is not None:
        if load_immediately:
            do_load()
        else:
            threading.Thread(target=do_load, daemon=True).start()

    def snapshot() -> ModelSnapshot:
        snap = app.state.snapshot
        if snap is None:
            detail = {"message": "models not loaded"}
            if app.state.load_error:
                detail["error"] = app.state.load_error
            raise HTTPException(status_code=503, detail=detail)
        return snap

    @app.get("/v1/health")
    def health():
        snap = snapshot()
        return {"status": "ok", "ulc_hash": snap.ulc_hash, "gag_hash": snap.gag_hash}

    @app.post("/v1/convert")
    def convert_endpoint(req: ConvertRequest):
        snap = snapshot()
        target_ref = _parse_landmark(req.target_ref_landmarks, "target_ref_landmarks")
        source = _parse_landmark(req.source_landmarks, "source_landmarks")
        converted = convert(target_ref, source, snap.converter)
        return {"converted_landmarks": converted.to_json()}

    @app.post("/v1/reenact")
    def reenact_endpoint(req: ReenactRequest):
        snap = snapshot()
        t0 = time.perf_counter()
        try:
            reference = FaceImage.from_base64_png(req.reference_image)
        except StructuralError as exc:
            raise HTTPException(
                status_code=400, detail={"field": "reference_image", "message": str(exc)}
            )
        lm = _parse_landmark(req.landmarks, "landmarks")
        raster = rasterize(lm, snap.landmark_resolution, snap.grouping)
        with torch.no_grad():
            out = snap.generator(
                reference.to_tensor().unsqueeze(0),
                torch.from_numpy(raster.pixels[None, None, :, :]).float(),
            )
        image = FaceImage.from_tensor(out)
        return {
            "image": image.to_base64_png(),
            "latency_ms": (time.perf_counter() - t0) * 1e3,
        }

    @app.post("/v1/interpolate")
    def interpolate_endpoint(req: InterpolateRequest):
        snapshot()  # interpolation needs no model, but the service contract is all-or-nothing
        a = _parse_landmark(req.a, "a")
        b = _parse_landmark(req.b, "b")
        try:
            mixed = interpolate(a, b, req.t)
        except DomainError as exc:
            raise HTTPException(status_code=400, detail={"field": "t", "message": str(exc)})
        return {"landmarks": mixed.to_json()}

    return app


def serve(
    ulc_path: str | Path,
    gag_path: str | Path,
    config: ToolkitConfig | None = None,
    host: str = "127.0.0.1",
    port: int = 8765,
    grouping: tuple[FacePart, ...] = DEFAULT_GROUPING,
) -> None:
    import uvicorn

    app = create_app(ulc_path, gag_path, config, grouping)
    uvicorn.run(app, host=host, port=port, log_level="warning")

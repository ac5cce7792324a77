"""HTTP facade for interactive parameter editing.

Workflow: upload composite + mask (+ optional background) to open a
session, run /predict to get model-proposed parameters, edit them via
PUT /params, and fetch previews or the full-resolution render. All image
math stays server-side; clients exchange only the params JSON schema and
PNGs. Sessions are in-memory with idle expiry; uploaded pixels are
immutable for the life of the session.
"""

from __future__ import annotations

import threading
import time
import uuid
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, HTTPException, Request, Response, UploadFile
from fastapi.responses import JSONResponse

from . import pngio
from .datastream import naive_inpaint
from .image import decode_image, encode_image, resize_bilinear
from .transforms import (
    HarmonizationParams,
    ParamsError,
    harmonize_full,
    parse_params,
    serialize_params,
)

PREVIEW_LONG_SIDE = 512


@dataclass
class Session:
    composite: np.ndarray
    mask: np.ndarray
    background: np.ndarray
    params: HarmonizationParams | None = None
    predicted: HarmonizationParams | None = None
    preview_png: bytes | None = None
    last_access: float = field(default_factory=time.monotonic)
    lock: threading.Lock = field(default_factory=threading.Lock)


class SessionStore:
    def __init__(self, ttl_secs: float):
        self.ttl = ttl_secs
        self._sessions: dict[str, Session] = {}
        self._lock = threading.Lock()

    def create(self, session: Session) -> str:
        sid = str(uuid.uuid4())
        with self._lock:
            self._evict()
            self._sessions[sid] = session
        return sid

    def get(self, sid: str) -> Session:
        with self._lock:
            self._evict()
            if sid not in self._sessions:
                raise HTTPException(status_code=404, detail=f"unknown session {sid}")
            s = self._sessions[sid]
            s.last_access = time.monotonic()
            return s

    def _evict(self) -> None:
        now = time.monotonic()
        dead = [k for k, s in self._sessions.items() if now - s.last_access > self.ttl]
        for k in dead:
            del self._sessions[k]


def _preview_dims(h: int, w: int) -> tuple[int, int]:
    long_side = max(h, w)
    if long_side <= PREVIEW_LONG_SIDE:
        return h, w
    scale = PREVIEW_LONG_SIDE / long_side
    return max(1, round(h * scale)), max(1, round(w * scale))


def _render_preview(session: Session) -> bytes:
    """Harmonize on downsampled inputs; params are resolution independent."""
    h, w = session.composite.shape[:2]
    ph, pw = _preview_dims(h, w)
    comp = resize_bilinear(session.composite, ph, pw)
    mask = resize_bilinear(session.mask, ph, pw)
    out = harmonize_full(comp, mask, session.params)
    return encode_image(out)


def create_app(
    checkpoint=None,
    session_ttl_secs: float = 1800.0,
    max_upload_mb: int = 64,
    cors_origin: str | None = None,
) -> FastAPI:
    app = FastAPI(title="harmonia")
    store = SessionStore(session_ttl_secs)
    max_bytes = max_upload_mb * 1024 * 1024

    predictor = None
    pcfg = None
    if checkpoint is not None:
        from .trainer import load_predictor

        predictor, pcfg = load_predictor(checkpoint)

    if cors_origin:
        from fastapi.middleware.cors import CORSMiddleware

        app.add_middleware(
            CORSMiddleware,
            allow_origins=[cors_origin],
            allow_methods=["*"],
            allow_headers=["*"],
        )

    async def _read_part(file: UploadFile | None, name: str, required=True) -> bytes | None:
        if file is None:
            if required:
                raise HTTPException(status_code=400, detail=f"missing multipart field {name!r}")
            return None
        data = await file.read()
        if len(data) > max_bytes:
            raise HTTPException(
                status_code=413, detail=f"{name} exceeds the {max_upload_mb} MB upload limit"
            )
        return data

    def _decode(data: bytes, name: str) -> np.ndarray:
        try:
            return decode_image(data)
        except (pngio.PngError, ValueError) as e:
            raise HTTPException(status_code=400, detail=f"{name}: {e}")

    @app.get("/v1/health")
    def health():
        return {"status": "ok"}

    @app.post("/v1/session", status_code=201)
    async def create_session(
        composite: UploadFile | None = None,
        mask: UploadFile | None = None,
        background: UploadFile | None = None,
    ):
        comp_bytes = await _read_part(composite, "composite")
        mask_bytes = await _read_part(mask, "mask")
        bg_bytes = await _read_part(background, "background", required=False)

        comp = _decode(comp_bytes, "composite")
        if comp.shape[2] == 1:
            comp = np.repeat(comp, 3, axis=2)
        mask_img = _decode(mask_bytes, "mask")
        m = mask_img[:, :, 0]
        if m.shape != comp.shape[:2]:
            raise HTTPException(
                status_code=400,
                detail=f"mask: dimensions {m.shape} do not match composite {comp.shape[:2]}",
            )
        if bg_bytes is not None:
            bg = _decode(bg_bytes, "background")
            if bg.shape[2] == 1:
                bg = np.repeat(bg, 3, axis=2)
            if bg.shape != comp.shape:
                raise HTTPException(
                    status_code=400,
                    detail=f"background: dimensions {bg.shape[:2]} do not match composite {comp.shape[:2]}",
                )
        else:
            if np.all(m > 0.0):
                raise HTTPException(
                    status_code=400,
                    detail="background: cannot derive from an all-foreground mask; upload one",
                )
            bg = naive_inpaint(comp, m)

        sid = store.create(Session(composite=comp, mask=m, background=bg))
        return {"session_id": sid}

    @app.post("/v1/session/{sid}/predict")
    def predict(sid: str):
        session = store.get(sid)
        if predictor is None:
            raise HTTPException(status_code=503, detail="no checkpoint loaded at server start")
        from .nn import forward_predictor

        with session.lock:
            r = pcfg.input_res
            c_lr = resize_bilinear(session.composite, r, r).transpose(2, 0, 1)[None]
            b_lr = resize_bilinear(session.background, r, r).transpose(2, 0, 1)[None]
            m_lr = resize_bilinear(session.mask, r, r)[None, None]
            out = forward_predictor(predictor, pcfg, c_lr, b_lr, m_lr)
            params = out.to_params(0)
            session.params = params
            session.predicted = params
            session.preview_png = _render_preview(session)
        return JSONResponse(
            {
                "params": _params_doc(params),
                "preview_url": f"/v1/session/{sid}/preview",
            }
        )

    @app.put("/v1/session/{sid}/params")
    async def put_params(sid: str, request: Request):
        session = store.get(sid)
        body = await request.body()
        try:
            params = parse_params(body.decode("utf-8"))
        except ParamsError as e:
            raise HTTPException(status_code=422, detail={"field": e.field, "message": str(e)})
        with session.lock:
            session.params = params
            session.preview_png = _render_preview(session)
        return {"preview_url": f"/v1/session/{sid}/preview"}

    @app.get("/v1/session/{sid}/params")
    def get_params(sid: str):
        session = store.get(sid)
        if session.params is None:
            raise HTTPException(status_code=409, detail="no params yet; run predict or PUT params")
        return JSONResponse(_params_doc(session.params))

    @app.get("/v1/session/{sid}/preview")
    def preview(sid: str):
        session = store.get(sid)
        if session.preview_png is None:
            raise HTTPException(status_code=409, detail="no preview yet; run predict or PUT params")
        return Response(content=session.preview_png, media_type="image/png")

    @app.get("/v1/session/{sid}/render")
    def render(sid: str, scale: str = "full"):
        session = store.get(sid)
        if session.params is None:
            raise HTTPException(status_code=409, detail="no params yet; run predict or PUT params")
        if scale not in ("full", "preview"):
            raise HTTPException(status_code=400, detail=f"scale must be full or preview, got {scale!r}")
        with session.lock:
            if scale == "preview":
                return Response(content=_render_preview(session), media_type="image/png")
            out = harmonize_full(session.composite, session.mask, session.params)
        return Response(content=encode_image(out), media_type="image/png")

    return app


def _params_doc(params: HarmonizationParams) -> dict:
    import json

    return json.loads(serialize_params(params))

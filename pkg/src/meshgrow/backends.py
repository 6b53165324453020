"""RGB- and depth-inpainting providers behind one session interface.

Two implementations: the procedural oracle (analytic box room, exact and
fully deterministic) and a remote HTTP service speaking the wire protocol
in wire_protocol.json (base64 PNG for RGB and masks, raw little-endian f32
grids for depth — depth never goes through a lossy image format).
"""

from __future__ import annotations

import base64
import importlib.resources
import io
import json
import logging
from dataclasses import dataclass, field

import jsonschema
import numpy as np
import requests
from PIL import Image

from .geometry import Camera
from .oracle import BoxRoom

log = logging.getLogger(__name__)

PROTOCOL_VERSION = "1"


class BackendError(RuntimeError):
    """Transport, protocol, or server-side failure of a backend call."""


def load_wire_schema() -> dict:
    ref = importlib.resources.files("meshgrow").joinpath("wire_protocol.json")
    return json.loads(ref.read_text())


_SCHEMA = load_wire_schema()


def validate_message(kind: str, payload: dict) -> None:
    """Validate a wire message against the shared schema; raises BackendError."""
    schema = {"definitions": _SCHEMA["definitions"],
              "$ref": f"#/definitions/{kind}"}
    try:
        jsonschema.validate(payload, schema)
    except jsonschema.ValidationError as err:
        raise BackendError(f"wire message failed schema check ({kind}): {err.message}")
    if payload.get("protocol") != PROTOCOL_VERSION:
        raise BackendError(
            f"protocol mismatch: got {payload.get('protocol')!r}, "
            f"expected {PROTOCOL_VERSION!r}")


# -- raster codecs ------------------------------------------------------------

def encode_rgb(rgb: np.ndarray) -> str:
    arr = np.round(np.clip(rgb, 0.0, 1.0) * 255.0).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr, mode="RGB").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def decode_rgb(data: str) -> np.ndarray:
    img = Image.open(io.BytesIO(base64.b64decode(data))).convert("RGB")
    return np.asarray(img, dtype=np.float64) / 255.0


def encode_mask(mask: np.ndarray) -> str:
    arr = np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr, mode="L").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def decode_mask(data: str) -> np.ndarray:
    img = Image.open(io.BytesIO(base64.b64decode(data))).convert("L")
    return np.asarray(img) > 127


def encode_depth(depth: np.ndarray) -> dict:
    arr = np.asarray(depth, dtype=np.float64)
    arr = np.where(np.isfinite(arr), arr, 0.0).astype("<f4")
    return {"data": base64.b64encode(arr.tobytes()).decode("ascii"),
            "width": int(arr.shape[1]), "height": int(arr.shape[0])}


def decode_depth(grid: dict) -> np.ndarray:
    raw = base64.b64decode(grid["data"])
    arr = np.frombuffer(raw, dtype="<f4")
    if len(arr) != grid["width"] * grid["height"]:
        raise BackendError("depth grid size does not match its dimensions")
    return arr.reshape(grid["height"], grid["width"]).astype(np.float64)


# -- sessions -----------------------------------------------------------------

@dataclass
class BackendSession:
    """Handle to one inpainting provider.

    `camera` is the per-iteration camera context: the procedural oracle
    needs to know the requesting viewpoint; remote backends ignore it.
    """

    mode: str = "oracle"  # "oracle" | "remote"
    oracle: BoxRoom = field(default_factory=BoxRoom)
    depth_scale: float = 1.0
    endpoint: str = ""
    timeout: float = 30.0
    retries: int = 2
    seed: int = 0
    camera: Camera | None = None

    def __post_init__(self):
        if self.mode not in ("oracle", "remote"):
            raise ValueError(f"unknown backend mode {self.mode!r}")
        if self.mode == "remote" and not self.endpoint:
            raise ValueError("remote backend needs an endpoint")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")


def _check_rasters(rgb, mask):
    rgb = np.asarray(rgb, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if rgb.shape[:2] != mask.shape:
        raise ValueError("rgb and mask disagree on image size")
    return rgb, mask


def _post(session: BackendSession, path: str, payload: dict) -> dict:
    url = session.endpoint.rstrip("/") + path
    last_err: Exception | None = None
    for attempt in range(session.retries + 1):
        try:
            resp = requests.post(url, json=payload, timeout=session.timeout)
            if resp.status_code >= 500:
                raise BackendError(f"server error {resp.status_code} from {path}")
            if resp.status_code != 200:
                # 4xx is our bug or a protocol mismatch; retrying won't help.
                raise BackendError(
                    f"request rejected ({resp.status_code}) by {path}: {resp.text[:200]}")
            return resp.json()
        except BackendError as err:
            if "rejected" in str(err):
                raise
            last_err = err
        except (requests.RequestException, ValueError) as err:
            last_err = err
        if attempt < session.retries:
            log.warning("backend call %s failed (attempt %d/%d): %s",
                        path, attempt + 1, session.retries + 1, last_err)
    raise BackendError(f"backend call {path} failed after "
                       f"{session.retries + 1} attempts: {last_err}")


def _require_camera(session: BackendSession) -> Camera:
    if session.camera is None:
        raise ValueError("oracle backend needs the camera context on the session")
    return session.camera


def inpaint_rgb(session: BackendSession, rgb: np.ndarray, mask: np.ndarray,
                prompt: str) -> np.ndarray:
    """Fill mask=1 pixels; mask=0 pixels come back bit-identical."""
    rgb, mask = _check_rasters(rgb, mask)
    if not mask.any():
        return rgb.copy()

    if session.mode == "oracle":
        log.debug("oracle inpaint_rgb ignoring prompt %r", prompt)
        fill = session.oracle.shade(_require_camera(session))
    else:
        payload = {"protocol": PROTOCOL_VERSION, "image": encode_rgb(rgb),
                   "mask": encode_mask(mask), "prompt": prompt,
                   "seed": int(session.seed)}
        validate_message("inpaint_request", payload)
        reply = _post(session, "/inpaint", payload)
        validate_message("inpaint_response", reply)
        fill = decode_rgb(reply["image"])
        if fill.shape != rgb.shape:
            raise BackendError("inpainted image has wrong dimensions")
    return np.where(mask[..., None], fill, rgb)


def inpaint_depth(session: BackendSession, rgb: np.ndarray,
                  known_depth: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Full depth raster conditioned on the known (rendered) depth."""
    rgb, mask = _check_rasters(rgb, mask)
    known = np.asarray(known_depth, dtype=np.float64)
    if known.shape != mask.shape:
        raise ValueError("known_depth and mask disagree on image size")

    if session.mode == "oracle":
        return session.oracle.cast_depth(_require_camera(session)) * session.depth_scale

    payload = {"protocol": PROTOCOL_VERSION, "image": encode_rgb(rgb),
               "known_depth": encode_depth(known), "mask": encode_mask(mask)}
    validate_message("depth_request", payload)
    reply = _post(session, "/depth", payload)
    validate_message("depth_response", reply)
    pred = decode_depth(reply["depth"])
    if pred.shape != mask.shape:
        raise BackendError("predicted depth has wrong dimensions")
    return pred


def check_health(session: BackendSession) -> dict:
    """GET /health on a remote session; raises BackendError when not ready."""
    if session.mode != "remote":
        return {"protocol": PROTOCOL_VERSION, "status": "ok",
                "model_ids": {"inpaint": "procedural-oracle",
                              "depth": "procedural-oracle"}}
    url = session.endpoint.rstrip("/") + "/health"
    try:
        resp = requests.get(url, timeout=session.timeout)
    except requests.RequestException as err:
        raise BackendError(f"health check failed: {err}")
    if resp.status_code != 200:
        raise BackendError(f"backend not ready: health returned {resp.status_code}")
    reply = resp.json()
    validate_message("health_response", reply)
    return reply

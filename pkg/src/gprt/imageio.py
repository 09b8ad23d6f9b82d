"""Image file formats: PFM (linear), Radiance RGBE (.hdr), PNG (sRGB-ish gamma 2.2)."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from gprt.errors import InvalidInputError


def write_pfm(path, image: np.ndarray) -> None:
    """Little-endian PFM; rows are stored bottom-to-top as the format requires."""
    img = np.asarray(image, dtype="<f4")
    if img.ndim == 3 and img.shape[2] == 1:
        img = img[..., 0]
    if img.ndim == 2:
        tag = b"Pf"
    elif img.ndim == 3 and img.shape[2] == 3:
        tag = b"PF"
    else:
        raise InvalidInputError(f"PFM supports (H, W) or (H, W, 3) images, got {img.shape}")
    h, w = img.shape[:2]
    with open(path, "wb") as f:
        f.write(tag + b"\n" + f"{w} {h}\n".encode() + b"-1.0\n")
        f.write(np.ascontiguousarray(img[::-1]).tobytes())


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as f:
        data = f.read()
    try:
        tag, dims, scale, body = data.split(b"\n", 3)
        w, h = (int(v) for v in dims.split())
        scale = float(scale)
    except ValueError as exc:
        raise InvalidInputError(f"{path}: malformed PFM header") from exc
    if tag not in (b"PF", b"Pf"):
        raise InvalidInputError(f"{path}: not a PFM file")
    channels = 3 if tag == b"PF" else 1
    dtype = "<f4" if scale < 0 else ">f4"
    count = w * h * channels
    if len(body) < 4 * count:
        raise InvalidInputError(f"{path}: truncated PFM payload")
    img = np.frombuffer(body, dtype=dtype, count=count).astype(np.float64)
    img = img.reshape((h, w, channels) if channels == 3 else (h, w))
    return img[::-1].copy()


def read_hdr(path) -> np.ndarray:
    import cv2

    img = cv2.imread(str(path), cv2.IMREAD_ANYDEPTH | cv2.IMREAD_COLOR)
    if img is None:
        raise InvalidInputError(f"{path}: unreadable Radiance HDR file")
    return img[..., ::-1].astype(np.float64)


def write_hdr(path, image: np.ndarray) -> None:
    import cv2

    img = np.asarray(image, dtype=np.float32)[..., ::-1]
    if not cv2.imwrite(str(path), np.ascontiguousarray(img)):
        raise InvalidInputError(f"{path}: could not write Radiance HDR")


def encode_srgb8(radiance: np.ndarray) -> np.ndarray:
    return np.round(np.clip(radiance, 0.0, 1.0) ** (1.0 / 2.2) * 255.0).astype(np.uint8)


def write_png(path, radiance: np.ndarray) -> None:
    from PIL import Image

    Image.fromarray(encode_srgb8(radiance)).save(path)


def read_image(path) -> np.ndarray:
    suffix = Path(path).suffix.lower()
    if suffix == ".pfm":
        return read_pfm(path)
    if suffix == ".hdr":
        return read_hdr(path)
    raise InvalidInputError(f"{path}: unsupported image format {suffix!r}")

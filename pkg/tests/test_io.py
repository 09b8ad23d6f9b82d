import json

import numpy as np
import pytest

from gprt.avatar import load_avatar, save_avatar
from gprt.errors import InvalidInputError
from gprt.imageio import encode_srgb8, read_hdr, read_image, read_pfm, write_hdr, write_pfm, write_png


def test_pfm_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    img = rng.uniform(0, 10, (7, 5, 3))
    write_pfm(tmp_path / "a.pfm", img)
    np.testing.assert_array_equal(read_pfm(tmp_path / "a.pfm"), img.astype(np.float32))
    gray = rng.uniform(0, 1, (4, 6))
    write_pfm(tmp_path / "g.pfm", gray)
    np.testing.assert_array_equal(read_image(tmp_path / "g.pfm"), gray.astype(np.float32))


def test_pfm_rejects_garbage(tmp_path):
    (tmp_path / "bad.pfm").write_bytes(b"P6\n1 1\n255\nxxx")
    with pytest.raises(InvalidInputError):
        read_pfm(tmp_path / "bad.pfm")
    (tmp_path / "short.pfm").write_bytes(b"PF\n4 4\n-1.0\n" + b"\0" * 10)
    with pytest.raises(InvalidInputError):
        read_pfm(tmp_path / "short.pfm")
    with pytest.raises(InvalidInputError):
        write_pfm(tmp_path / "x.pfm", np.zeros((2, 2, 4)))


def test_hdr_round_trip(tmp_path):
    img = np.random.default_rng(1).uniform(0.01, 50, (8, 16, 3))
    write_hdr(tmp_path / "e.hdr", img)
    # RGBE keeps 8 mantissa bits against the largest channel of each pixel
    back = read_hdr(tmp_path / "e.hdr")
    assert np.all(np.abs(back - img) <= img.max(axis=2, keepdims=True) / 128)
    with pytest.raises(InvalidInputError):
        read_image(tmp_path / "e.exr")


def test_png_encoding(tmp_path):
    assert encode_srgb8(np.array([0.0, 1.0, 4.0])).tolist() == [0, 255, 255]
    assert encode_srgb8(np.array([0.5]))[0] == round(0.5 ** (1 / 2.2) * 255)
    write_png(tmp_path / "x.png", np.zeros((3, 4, 3)))
    assert (tmp_path / "x.png").read_bytes()[:4] == b"\x89PNG"


def test_avatar_round_trip(tmp_path, toy_head):
    save_avatar(toy_head, tmp_path / "av")
    back = load_avatar(tmp_path / "av")
    assert len(back) == len(toy_head)
    np.testing.assert_allclose(back.scales, toy_head.scales, rtol=1e-6)
    np.testing.assert_allclose(back.transfer.d_color, toy_head.transfer.d_color, atol=1e-6)
    np.testing.assert_allclose(back.mesh.vertices, toy_head.mesh.vertices, atol=1e-8)
    assert np.array_equal(back.anchors.triangle, toy_head.anchors.triangle)
    assert np.array_equal(back.eye_label, toy_head.eye_label)
    man = json.loads((tmp_path / "av" / "avatar.json").read_text())
    assert man["version"] and man["counts"]["gaussians"] == len(toy_head)
    # saving twice writes identical bytes
    save_avatar(toy_head, tmp_path / "av2")
    for f in ("avatar.json", "avatar.bin", "mesh.obj", "rig.json"):
        assert (tmp_path / "av" / f).read_bytes() == (tmp_path / "av2" / f).read_bytes()


def test_avatar_rejects_bad_files(tmp_path, toy_head):
    with pytest.raises(InvalidInputError):
        load_avatar(tmp_path / "missing")
    save_avatar(toy_head, tmp_path / "av")
    blob = tmp_path / "av" / "avatar.bin"
    blob.write_bytes(blob.read_bytes()[:-4])
    with pytest.raises(InvalidInputError):
        load_avatar(tmp_path / "av")
    save_avatar(toy_head, tmp_path / "av3")
    man_path = tmp_path / "av3" / "avatar.json"
    man = json.loads(man_path.read_text())
    del man["version"]
    man_path.write_text(json.dumps(man))
    with pytest.raises(InvalidInputError):
        load_avatar(tmp_path / "av3")

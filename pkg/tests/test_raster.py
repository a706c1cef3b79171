import numpy as np
import pytest
from PIL import Image

from corekit.errors import CorruptImageError, InvalidMaskValueError, UnsupportedFormatError
from corekit.raster import (
    Mask,
    ProbMap,
    Raster,
    load_grayscale,
    load_mask,
    load_probmap,
    save_grayscale,
    save_mask,
    save_probmap,
)


def test_pgm_byte_passthrough(tmp_path):
    p = tmp_path / "t.pgm"
    p.write_bytes(b"P5\n2 2\n255\n" + bytes([0, 128, 255, 7]))
    img = load_grayscale(str(p))
    assert (img.width, img.height) == (2, 2)
    assert img.pixels.tolist() == [[0, 128], [255, 7]]


def test_rgb_png_rejected(tmp_path):
    p = tmp_path / "rgb.png"
    Image.new("RGB", (3, 3), (10, 20, 30)).save(p)
    with pytest.raises(UnsupportedFormatError):
        load_grayscale(str(p))


def test_16bit_png_rejected_as_grayscale(tmp_path):
    p = tmp_path / "deep.png"
    Image.fromarray(np.zeros((2, 2), dtype=np.uint16)).save(p)
    with pytest.raises(UnsupportedFormatError):
        load_grayscale(str(p))


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        load_grayscale("/nonexistent/nope.png")


def test_corrupt_image(tmp_path):
    p = tmp_path / "bad.png"
    p.write_bytes(b"\x89PNG\r\n\x1a\nthis is not a png body")
    with pytest.raises(CorruptImageError):
        load_grayscale(str(p))


def test_png_roundtrip_byte_identical(tmp_path):
    rng = np.random.RandomState(7)
    img = Raster(rng.randint(0, 256, size=(512, 512)).astype(np.uint8))
    p = tmp_path / "img.png"
    save_grayscale(img, str(p))
    back = load_grayscale(str(p))
    assert np.array_equal(back.pixels, img.pixels)
    # re-saving what was loaded reproduces the same file bytes
    p2 = tmp_path / "img2.png"
    save_grayscale(back, str(p2))
    assert p.read_bytes() == p2.read_bytes()


def test_roundtrip_many_random_images(tmp_path):
    rng = np.random.RandomState(3)
    for i in range(20):
        h, w = rng.randint(1, 40, size=2)
        img = Raster(rng.randint(0, 256, size=(h, w)).astype(np.uint8))
        for ext in ("png", "pgm"):
            p = tmp_path / f"r{i}.{ext}"
            save_grayscale(img, str(p))
            assert np.array_equal(load_grayscale(str(p)).pixels, img.pixels)


def test_mask_mapping_rule(tmp_path):
    p = tmp_path / "m.png"
    Image.fromarray(np.array([[0, 255], [255, 0]], dtype=np.uint8)).save(p)
    m = load_mask(str(p))
    assert m.pixels.tolist() == [[0, 1], [1, 0]]


def test_mask_invalid_value(tmp_path):
    p = tmp_path / "m.png"
    Image.fromarray(np.array([[0, 17], [255, 0]], dtype=np.uint8)).save(p)
    with pytest.raises(InvalidMaskValueError):
        load_mask(str(p))


def test_mask_file_roundtrip_byte_identical(tmp_path):
    rng = np.random.RandomState(11)
    m = Mask((rng.rand(33, 21) > 0.5).astype(np.uint8))
    p1 = tmp_path / "a.png"
    p2 = tmp_path / "b.png"
    save_mask(m, str(p1))
    save_mask(load_mask(str(p1)), str(p2))
    assert p1.read_bytes() == p2.read_bytes()


def test_mask_values_closed_under_io(tmp_path):
    rng = np.random.RandomState(5)
    for i in range(10):
        m = Mask((rng.rand(9, 9) > rng.rand()).astype(np.uint8))
        p = tmp_path / f"m{i}.png"
        save_mask(m, str(p))
        back = load_mask(str(p))
        assert set(np.unique(back.pixels)) <= {0, 1}


def test_mask_constructor_rejects_bad_values():
    with pytest.raises(InvalidMaskValueError):
        Mask(np.array([[0, 2]], dtype=np.uint8))


def test_probmap_scaling(tmp_path):
    p = tmp_path / "pm.png"
    Image.fromarray(np.array([[65535, 0], [32768, 1]], dtype=np.uint16)).save(p)
    pm = load_probmap(str(p))
    assert pm.values[0, 0] == 1.0
    assert pm.values[0, 1] == 0.0
    assert pm.values[1, 0] == pytest.approx(32768 / 65535, abs=0)
    assert pm.values[1, 1] == pytest.approx(1 / 65535, abs=0)


def test_probmap_rejects_8bit(tmp_path):
    p = tmp_path / "pm8.png"
    Image.fromarray(np.zeros((2, 2), dtype=np.uint8)).save(p)
    with pytest.raises(UnsupportedFormatError):
        load_probmap(str(p))


def test_probmap_roundtrip(tmp_path):
    rng = np.random.RandomState(2)
    pm = ProbMap(rng.rand(17, 13))
    p = tmp_path / "pm.png"
    save_probmap(pm, str(p))
    back = load_probmap(str(p))
    # quantization error bounded by half a 16-bit step
    assert np.max(np.abs(back.values - pm.values)) <= 0.5 / 65535 + 1e-12


def test_types_are_immutable():
    img = Raster(np.zeros((2, 2), dtype=np.uint8))
    with pytest.raises(ValueError):
        img.pixels[0, 0] = 1

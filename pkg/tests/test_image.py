import numpy as np
import pytest

from glianet.image import (
    DISTORTION_KINDS,
    MAX_LEVEL,
    DatasetManifest,
    MalformedHeaderError,
    ManifestEntry,
    TruncatedPayloadError,
    UnsupportedFormatError,
    build_synth_manifest,
    laplacian_energy,
    load_image,
    resize_bilinear,
    save_image,
    synth_distort,
)

from conftest import random_image
from oracles import bilinear_ref


def write_p6(path, arr_u8):
    h, w, _ = arr_u8.shape
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode())
        f.write(arr_u8.astype(np.uint8).tobytes())


class TestLoad:
    def test_all_white(self, tmp_path):
        p = tmp_path / "white.ppm"
        write_p6(p, np.full((2, 2, 3), 255, dtype=np.uint8))
        img = load_image(str(p))
        assert img.shape == (2, 2, 3)
        assert np.array_equal(img, np.ones((2, 2, 3)))

    def test_single_pixel_scaling(self, tmp_path):
        p = tmp_path / "px.ppm"
        write_p6(p, np.array([[[128, 0, 255]]], dtype=np.uint8))
        img = load_image(str(p))
        assert np.allclose(img[0, 0], [128 / 255.0, 0.0, 1.0], atol=0)

    def test_truncated_payload(self, tmp_path):
        p = tmp_path / "trunc.ppm"
        full = b"P6\n2 2\n255\n" + bytes(12)
        p.write_bytes(full[:-5])
        with pytest.raises(TruncatedPayloadError):
            load_image(str(p))

    def test_wrong_magic(self, tmp_path):
        p = tmp_path / "bad.ppm"
        p.write_bytes(b"P5\n2 2\n255\n" + bytes(4))
        with pytest.raises(UnsupportedFormatError):
            load_image(str(p))

    def test_non_numeric_header(self, tmp_path):
        p = tmp_path / "bad2.ppm"
        p.write_bytes(b"P6\nxx 2\n255\n" + bytes(12))
        with pytest.raises(MalformedHeaderError):
            load_image(str(p))

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_image(str(tmp_path / "nope.ppm"))

    def test_header_comments_skipped(self, tmp_path):
        p = tmp_path / "c.ppm"
        p.write_bytes(b"P6\n# a comment\n1 1\n255\n\x01\x02\x03")
        img = load_image(str(p))
        assert np.allclose(img[0, 0] * 255.0, [1, 2, 3])

    def test_bad_maxval(self, tmp_path):
        p = tmp_path / "m.ppm"
        p.write_bytes(b"P6\n1 1\n65535\n" + bytes(6))
        with pytest.raises(UnsupportedFormatError):
            load_image(str(p))


class TestRoundTrip:
    def test_save_load_bit_exact(self, tmp_path, rng):
        # quantize first so the byte representation is exact
        img = np.round(rng.random((9, 13, 3)) * 255.0) / 255.0
        p = str(tmp_path / "rt.ppm")
        save_image(img, p)
        back = load_image(p)
        assert np.array_equal(back, img)
        p2 = str(tmp_path / "rt2.ppm")
        save_image(back, p2)
        assert (tmp_path / "rt.ppm").read_bytes() == (tmp_path / "rt2.ppm").read_bytes()

    def test_save_rejects_bad_shape(self, tmp_path):
        with pytest.raises(ValueError):
            save_image(np.zeros((4, 4)), str(tmp_path / "x.ppm"))


class TestResize:
    def test_identity_dims(self, rng):
        img = random_image(rng, 17, 23)
        out = resize_bilinear(img, 17, 23)
        assert np.allclose(out, img, atol=1e-12)

    def test_constant_stays_constant(self):
        img = np.full((5, 7, 3), 0.37)
        out = resize_bilinear(img, 11, 3)
        assert np.allclose(out, 0.37, atol=1e-12)

    def test_checkerboard_matches_reference(self):
        img = np.zeros((2, 2, 3))
        img[0, 1] = img[1, 0] = 1.0
        out = resize_bilinear(img, 4, 4)
        assert np.allclose(out, bilinear_ref(img, 4, 4), atol=1e-12)

    def test_random_cases_match_reference(self, rng):
        for _ in range(5):
            h, w = int(rng.integers(2, 12)), int(rng.integers(2, 12))
            oh, ow = int(rng.integers(1, 20)), int(rng.integers(1, 20))
            img = rng.random((h, w, 3))
            assert np.allclose(
                resize_bilinear(img, oh, ow), bilinear_ref(img, oh, ow), atol=1e-12
            )

    def test_preserves_bounds(self, rng):
        img = random_image(rng, 10, 14)
        out = resize_bilinear(img, 33, 5)
        assert out.min() >= img.min() - 1e-12
        assert out.max() <= img.max() + 1e-12

    def test_zero_dims_rejected(self, rng):
        with pytest.raises(ValueError):
            resize_bilinear(random_image(rng), 0, 10)


class TestDistort:
    def test_levels_pairwise_distinct(self, rng):
        img = random_image(rng)
        for kind in DISTORTION_KINDS:
            outs = [synth_distort(img, kind, lv, seed=7) for lv in range(1, MAX_LEVEL + 1)]
            for a in range(len(outs)):
                for b in range(a + 1, len(outs)):
                    assert not np.array_equal(outs[a], outs[b]), (kind, a, b)

    def test_noise_deterministic(self, rng):
        img = random_image(rng)
        one = synth_distort(img, "noise", 3, seed=42)
        two = synth_distort(img, "noise", 3, seed=42)
        assert np.array_equal(one, two)
        other = synth_distort(img, "noise", 3, seed=43)
        assert not np.array_equal(one, other)

    def test_blur_reduces_high_frequency_energy(self, rng):
        img = random_image(rng)
        e1 = laplacian_energy(synth_distort(img, "blur", 1))
        e5 = laplacian_energy(synth_distort(img, "blur", 5))
        assert e5 < e1

    def test_output_clamped(self, rng):
        img = random_image(rng)
        for kind in DISTORTION_KINDS:
            out = synth_distort(img, kind, MAX_LEVEL, seed=1)
            assert out.min() >= 0.0 and out.max() <= 1.0

    def test_unknown_kind(self, rng):
        with pytest.raises(ValueError):
            synth_distort(random_image(rng), "sepia", 1)

    def test_level_out_of_range(self, rng):
        with pytest.raises(ValueError):
            synth_distort(random_image(rng), "blur", 0)
        with pytest.raises(ValueError):
            synth_distort(random_image(rng), "blur", MAX_LEVEL + 1)


class TestManifest:
    def _sources(self, tmp_path, rng, n=2):
        paths = []
        for i in range(n):
            p = str(tmp_path / f"src{i}.ppm")
            save_image(random_image(rng, 32, 32), p)
            paths.append(p)
        return paths

    def test_entry_count(self, tmp_path, rng):
        paths = self._sources(tmp_path, rng, 2)
        m = build_synth_manifest(paths, str(tmp_path / "out"), kinds=("blur", "noise"), levels=3)
        assert len(m.entries) == 2 + 2 * 2 * 3

    def test_pristine_carries_max_score(self, tmp_path, rng):
        paths = self._sources(tmp_path, rng, 1)
        m = build_synth_manifest(paths, str(tmp_path / "out"), levels=3)
        lo, hi = m.score_range
        import os

        pristine = [e for e in m.entries if "__pristine" in os.path.basename(e.path)]
        assert pristine and all(e.mos == hi for e in pristine)
        assert all(lo <= e.mos <= hi for e in m.entries)

    def test_mos_strictly_decreasing_with_level(self, tmp_path, rng):
        paths = self._sources(tmp_path, rng, 1)
        m = build_synth_manifest(paths, str(tmp_path / "out"), levels=MAX_LEVEL)
        for kind in DISTORTION_KINDS:
            scores = [e.mos for e in m.entries if f"__{kind}_l" in e.path]
            assert len(scores) == MAX_LEVEL
            assert all(a > b for a, b in zip(scores, scores[1:]))

    def test_csv_round_trip(self, tmp_path, rng):
        paths = self._sources(tmp_path, rng, 2)
        m = build_synth_manifest(paths, str(tmp_path / "out"), kinds=("blur",), levels=2)
        mp = str(tmp_path / "manifest.csv")
        m.save(mp)
        back = DatasetManifest.load(mp)
        assert [(e.path, e.mos, e.split) for e in back.entries] == [
            (e.path, e.mos, e.split) for e in m.entries
        ]

    def test_bad_csv_header(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("file,score\nx,1\n")
        with pytest.raises(ValueError):
            DatasetManifest.load(str(p))

    def test_empty_sources_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            build_synth_manifest([], str(tmp_path / "out"))

    def test_source_id_groups_variants(self):
        a = ManifestEntry("/d/cat__blur_l3.ppm", 2.0)
        b = ManifestEntry("/d/cat__pristine.ppm", 5.0)
        c = ManifestEntry("/d/dog__blur_l3.ppm", 2.0)
        assert a.source_id == b.source_id == "cat"
        assert c.source_id == "dog"

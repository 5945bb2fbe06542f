import json

import numpy as np
import pytest
import torch
from PIL import Image

from seffsal.data import (Sample, load_dataset, load_input_pair, load_sample,
                          make_pyramid, synth_generate, write_dataset)
from seffsal.errors import ConfigError, SampleLoadError


def write_png(path, arr, mode=None):
    Image.fromarray(arr, mode=mode).save(path)


def make_disk_sample(tmp_path, size=(48, 64), depth_const=None):
    h, w = size
    rng = np.random.default_rng(0)
    rgb = rng.integers(0, 256, (h, w, 3), dtype=np.uint8)
    if depth_const is None:
        depth = rng.integers(0, 256, (h, w), dtype=np.uint8)
    else:
        depth = np.full((h, w), depth_const, dtype=np.uint8)
    gt = np.zeros((h, w), dtype=np.uint8)
    gt[10:20, 10:30] = 255
    write_png(tmp_path / "img.png", rgb)
    write_png(tmp_path / "img_d.png", depth)
    write_png(tmp_path / "img_gt.png", gt)
    return tmp_path / "img.png", tmp_path / "img_d.png", tmp_path / "img_gt.png"


class TestLoadSample:
    def test_normalization_ranges(self, tmp_path):
        paths = make_disk_sample(tmp_path)
        s = load_sample(*paths)
        assert s.rgb.shape == (3, 48, 64)
        assert s.depth.shape == (1, 48, 64)
        assert s.gt.shape == (48, 64)
        assert 0.0 <= s.rgb.min() and s.rgb.max() <= 1.0
        assert s.depth.min() == 0.0 and s.depth.max() == 1.0
        assert set(s.gt.unique().tolist()) <= {0.0, 1.0}

    def test_constant_depth_becomes_zeros(self, tmp_path):
        paths = make_disk_sample(tmp_path, depth_const=180)
        s = load_sample(*paths)
        assert torch.equal(s.depth, torch.zeros_like(s.depth))

    def test_binary_gt_values(self, tmp_path):
        paths = make_disk_sample(tmp_path)
        s = load_sample(*paths)
        gt_img = np.asarray(Image.open(paths[2]))
        assert torch.equal(s.gt, torch.from_numpy((gt_img >= 128).astype(np.float32)))

    def test_size_mismatch_names_files(self, tmp_path):
        rgb_p, depth_p, gt_p = make_disk_sample(tmp_path)
        small = np.zeros((24, 32), dtype=np.uint8)
        write_png(tmp_path / "small_gt.png", small)
        with pytest.raises(SampleLoadError) as err:
            load_sample(rgb_p, depth_p, tmp_path / "small_gt.png")
        assert "img.png" in str(err.value) and "small_gt.png" in str(err.value)

    def test_decode_failure(self, tmp_path):
        bad = tmp_path / "bad.png"
        bad.write_bytes(b"not a png")
        rgb_p, depth_p, gt_p = make_disk_sample(tmp_path)
        with pytest.raises(SampleLoadError):
            load_sample(bad, depth_p, gt_p)


class TestMakePyramid:
    def sample(self):
        return synth_generate(seed=0, n=1, canvas=(64, 64))[0]

    def test_full_variant_sizes(self):
        pyr = make_pyramid(self.sample())
        assert sorted(pyr.inputs) == [1, 2, 3]
        for i, size in zip((1, 2, 3), (352, 176, 88)):
            rgb, depth = pyr.inputs[i]
            assert rgb.shape == (3, size, size)
            assert depth.shape == (1, size, size)
        assert pyr.gt.shape == (64, 64)

    def test_scale1_variant_only_coarse_pair(self):
        pyr = make_pyramid(self.sample(), active_scales=(3,))
        assert sorted(pyr.inputs) == [3]
        assert pyr.inputs[3][0].shape == (3, 88, 88)

    def test_constant_image_stays_constant(self):
        s = self.sample()
        const = Sample(rgb=torch.full_like(s.rgb, 0.25),
                       depth=torch.full_like(s.depth, 0.5),
                       gt=s.gt, id="const")
        pyr = make_pyramid(const)
        for rgb, depth in pyr.inputs.values():
            assert torch.allclose(rgb, torch.full_like(rgb, 0.25), atol=1e-6)
            assert torch.allclose(depth, torch.full_like(depth, 0.5), atol=1e-6)


class TestSynthGenerate:
    def test_determinism_bitwise(self):
        a = synth_generate(seed=7, n=4, canvas=(64, 64))
        b = synth_generate(seed=7, n=4, canvas=(64, 64))
        for sa, sb in zip(a, b):
            assert torch.equal(sa.rgb, sb.rgb)
            assert torch.equal(sa.depth, sb.depth)
            assert torch.equal(sa.gt, sb.gt)

    def test_foreground_fraction_bounds(self):
        for s in synth_generate(seed=3, n=20, canvas=(64, 64)):
            frac = s.gt.mean().item()
            assert 0.02 <= frac <= 0.6

    def test_object_count_histogram_reproducible(self):
        counts1 = [s.meta["n_objects"] for s in synth_generate(7, 10, (64, 64))]
        counts2 = [s.meta["n_objects"] for s in synth_generate(7, 10, (64, 64))]
        assert counts1 == counts2

    def test_depth_spans_unit_interval(self):
        for s in synth_generate(seed=1, n=3, canvas=(64, 64)):
            assert s.depth.min().item() == 0.0
            assert s.depth.max().item() == 1.0

    def test_rejects_bad_arguments(self):
        with pytest.raises(ConfigError):
            synth_generate(seed=0, n=0)
        with pytest.raises(ConfigError):
            synth_generate(seed=0, n=1, canvas=(32, 32))


class TestRoundTrip:
    def test_write_then_load_within_quantization(self, tmp_path):
        samples = synth_generate(seed=5, n=3, canvas=(64, 64))
        write_dataset(samples, tmp_path, manifest={"seed": 5, "n": 3,
                                                   "canvas": [64, 64]})
        assert json.loads((tmp_path / "manifest.json").read_text())["n"] == 3
        loaded = load_dataset(tmp_path, workers=1)
        assert [s.id for s in loaded] == [s.id for s in samples]
        for orig, back in zip(samples, loaded):
            assert (orig.rgb - back.rgb).abs().max().item() <= 1 / 255 + 1e-6
            assert (orig.depth - back.depth).abs().max().item() <= 1 / 255 + 1e-6
            assert torch.equal(orig.gt, back.gt)

    def test_concurrent_loading_matches_sequential(self, tmp_path):
        samples = synth_generate(seed=9, n=4, canvas=(64, 64))
        write_dataset(samples, tmp_path)
        seq = load_dataset(tmp_path, workers=1)
        par = load_dataset(tmp_path, workers=3)
        assert [s.id for s in seq] == [s.id for s in par]
        for a, b in zip(seq, par):
            assert torch.equal(a.rgb, b.rgb)

    def test_incomplete_sample_skipped_with_warning(self, tmp_path, capsys):
        samples = synth_generate(seed=2, n=2, canvas=(64, 64))
        write_dataset(samples, tmp_path)
        (tmp_path / "depth" / f"{samples[1].id}.png").unlink()
        loaded = load_dataset(tmp_path, workers=1)
        assert [s.id for s in loaded] == [samples[0].id]
        assert samples[1].id in capsys.readouterr().err

    def test_empty_dataset_is_an_error(self, tmp_path):
        with pytest.raises(SampleLoadError):
            load_dataset(tmp_path)


def test_load_input_pair(tmp_path):
    s = synth_generate(seed=4, n=1, canvas=(64, 64))[0]
    write_dataset([s], tmp_path)
    rgb, depth, size = load_input_pair(tmp_path / "RGB" / f"{s.id}.png",
                                       tmp_path / "depth" / f"{s.id}.png")
    assert size == (64, 64)
    assert rgb.shape == (3, 64, 64)
    assert depth.shape == (1, 64, 64)


def test_env_worker_cap(monkeypatch):
    from seffsal.data import env_workers
    monkeypatch.setenv("SEFFSAL_NUM_WORKERS", "2")
    assert env_workers() == 2
    monkeypatch.setenv("SEFFSAL_NUM_WORKERS", "junk")
    with pytest.raises(ConfigError):
        env_workers()
    monkeypatch.delenv("SEFFSAL_NUM_WORKERS")
    assert env_workers(default=6) == 6

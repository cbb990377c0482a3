import numpy as np
import pytest

from nowcastlab.synthgen import PROFILE_BANDS, SceneConfig, generate_scene, precipitation_frames, profile_types


def test_no_cells_no_rain():
    p = precipitation_frames(SceneConfig(n_cells=0, frame_count=12, rows=16, cols=16))
    assert p.shape == (12, 16, 16)
    assert not p.any()


def test_pure_translation_one_column():
    cfg = SceneConfig(n_cells=1, velocity=(1.0, 0.0), growth_rate=(1.0, 1.0), lifetime=(10**6, 10**6),
                      fade=0, spawn_margin=0.0, frame_count=12, rows=48, cols=48, cell_radius=(3, 3), seed=3)
    p = precipitation_frames(cfg).astype(np.float64)
    for t in range(len(p) - 1):
        shifted = p[t][:, :-1]
        np.testing.assert_allclose(p[t + 1][:, 1:], shifted, atol=1e-5)


def test_same_seed_identical():
    cfg = SceneConfig(seed=11, frame_count=20, rows=24, cols=24)
    a, b = generate_scene(cfg), generate_scene(cfg)
    for k in a:
        assert a[k] == b[k]
    c = generate_scene(SceneConfig(seed=12, frame_count=20, rows=24, cols=24))
    assert not np.array_equal(a["precip_mm_per_h"].values, c["precip_mm_per_h"].values)


def test_channels_and_cadence():
    cfg = SceneConfig(frame_count=15, rows=8, cols=10, start_time=600)
    s = generate_scene(cfg)
    p = s["precip_mm_per_h"]
    assert p.values.dtype == np.float32 and (p.values >= 0).all()
    assert np.all(np.diff(p.timestamps) == 15) and p.timestamps[0] == 600
    codes = s["temp_profile_type"].values
    assert set(np.unique(codes)) <= set(range(len(PROFILE_BANDS) + 1))
    assert s["relief_m"].values.shape == (1, 8, 10)


def test_profile_bands():
    assert profile_types(np.array([0.0, 0.1, 0.5, 1.0, 4.9, 5.0, 50.0])).tolist() == [0, 1, 1, 2, 2, 3, 3]


@pytest.mark.parametrize("kw", [
    dict(frame_count=11),
    dict(cell_amplitude=(-1.0, 2.0)),
    dict(cell_radius=(0.0, 1.0)),
    dict(lifetime=(5, 4)),
])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        SceneConfig(**kw)


def test_rain_density_stays_bounded_in_long_scenes():
    p = precipitation_frames(SceneConfig(frame_count=600, rows=32, cols=32, seed=5))
    wet = (p >= 0.1).mean(axis=(1, 2))
    assert wet[:100].mean() > 0.02 and wet[-100:].mean() > 0.02

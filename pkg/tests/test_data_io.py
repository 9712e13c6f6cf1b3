import warnings

import numpy as np
import pytest

from codedap.data_io import (
    Scene,
    SplitSpec,
    constant_windows,
    discretize_depth,
    load_scene_dir,
    make_synthetic_corpus,
    make_synthetic_scene,
    patch_label_stream,
    read_manifest,
    save_scene_dir,
    split,
    write_manifest,
)
from codedap.exceptions import InvalidDepthError
from codedap.optics import CameraConfig, blur_size_to_depth, depth_to_blur_size

CAM = CameraConfig()


def test_discretize_focus_plane():
    np.testing.assert_array_equal(discretize_depth(np.full((5, 7), CAM.focus_distance), CAM), 1)


def test_discretize_matches_scalar_oracle():
    depth = np.random.default_rng(0).uniform(0.4, 8.0, (9, 11))
    got = discretize_depth(depth, CAM)
    for idx in np.ndindex(depth.shape):
        assert got[idx] == depth_to_blur_size(float(depth[idx]), CAM)


def test_discretize_names_bad_pixel():
    depth = np.full((6, 6), 2.0)
    depth[4, 1] = 0.025
    with pytest.raises(InvalidDepthError, match=r"\(4, 1\)"):
        discretize_depth(depth, CAM)


def test_split_sizes():
    assert [len(p) for p in split(list(range(10)), SplitSpec((0.6, 0.2, 0.2), 0))] == [6, 2, 2]
    tr, va, te = split(list(range(10)), SplitSpec((1.0, 0.0, 0.0), 3))
    assert sorted(tr) == list(range(10)) and va == [] and te == []


def test_split_is_seeded_partition():
    items = list(range(37))
    a = split(items, SplitSpec(seed=4))
    assert a == split(items, SplitSpec(seed=4))
    assert a != split(items, SplitSpec(seed=5))
    flat = [x for part in a for x in part]
    assert sorted(flat) == items


def test_split_spec_validation():
    with pytest.raises(ValueError):
        SplitSpec((0.5, 0.2, 0.2))
    with pytest.raises(ValueError):
        SplitSpec((1.2, -0.1, -0.1))


def test_scene_validation():
    with pytest.raises(ValueError):
        Scene(np.zeros((4, 4)))
    with pytest.raises(ValueError):
        Scene(np.zeros((4, 4)), depth=np.ones((4, 5)))
    with pytest.raises(ValueError):
        Scene(np.zeros((4, 4)), depth=np.ones((4, 4)), sizes=np.ones((4, 4)))


def test_flat_scene_at_focus():
    sc = make_synthetic_scene("planes", [CAM.focus_distance], "flat", seed=1)
    np.testing.assert_array_equal(sc.size_map(CAM), 1)
    assert np.ptp(sc.image) == 0


def test_two_planes_have_two_sizes():
    sc = make_synthetic_scene("planes", [blur_size_to_depth(3, CAM), blur_size_to_depth(9, CAM)], "noise", seed=2)
    assert set(np.unique(sc.size_map(CAM))) == {3, 9}


@pytest.mark.parametrize("layout", ["planes", "steps", "slant"])
@pytest.mark.parametrize("texture", ["noise", "stripes", "checker", "flat"])
def test_scene_is_seed_deterministic(layout, texture):
    a = make_synthetic_scene(layout, [1.2, 2.0, 4.0], texture, seed=7)
    b = make_synthetic_scene(layout, [1.2, 2.0, 4.0], texture, seed=7)
    assert a.image.tobytes() == b.image.tobytes() and a.depth.tobytes() == b.depth.tobytes()
    assert a.image.min() >= 0 and a.image.max() <= 1
    np.testing.assert_array_equal(np.round(a.image * 255), a.image * 255)


def test_slant_depth_is_monotone():
    sc = make_synthetic_scene("slant", [1.5, 3.0], "noise", seed=0)
    assert np.all(np.diff(sc.depth[0]) >= 0)
    assert sc.depth[0, 0] == 1.5 and sc.depth[0, -1] == 3.0


def test_scene_rejects_empty_depths():
    with pytest.raises(ValueError):
        make_synthetic_scene("planes", [], "noise")
    with pytest.raises(ValueError):
        make_synthetic_scene("spiral", [1.0], "noise")


def test_corpus_plane_counts():
    scenes = make_synthetic_corpus(30, CAM, seed=1)
    for sc in scenes:
        n = len(np.unique(sc.size_map(CAM)))
        assert 3 <= n <= 5


def test_constant_windows():
    S = np.ones((40, 40), dtype=int)
    S[:, 20:] = 3
    anchors = constant_windows(S, 16)
    assert {tuple(a) for a in anchors} == {(r, c) for r in range(25) for c in (0, 1, 2, 3, 4, 20, 21, 22, 23, 24)}
    assert len(constant_windows(np.ones((10, 40)), 16)) == 0


def test_constant_scene_labels():
    sc = make_synthetic_scene("planes", [blur_size_to_depth(7, CAM)], "noise", seed=3)
    _, labels = patch_label_stream([sc], CAM, seed=0).draw(200)
    assert np.all(labels == 7)


def test_balanced_label_histogram():
    scenes = [make_synthetic_scene("planes", [blur_size_to_depth(3, CAM), blur_size_to_depth(11, CAM)], "noise",
                                   seed=i) for i in range(4)]
    _, labels = patch_label_stream(scenes, CAM, seed=5).draw(10000)
    frac = np.mean(labels == 3)
    assert set(np.unique(labels)) == {3, 11}
    assert abs(frac - 0.5) <= 0.05


def test_stream_prefix_is_seeded_and_consistent():
    scenes = make_synthetic_corpus(6, CAM, seed=2)
    a = patch_label_stream(scenes, CAM, seed=9)
    b = patch_label_stream(scenes, CAM, seed=9)
    pa, la = a.draw(50)
    pb, lb = b.draw(50)
    assert pa.tobytes() == pb.tobytes() and la.tolist() == lb.tolist()
    # every label agrees with the discretized depth at the patch center
    stream = patch_label_stream(scenes, CAM, seed=3)
    for patch, label in (next(stream) for _ in range(40)):
        hits = []
        for img, S in zip(stream._images, stream._sizes):
            for r, c in constant_windows(S):
                if np.array_equal(img[r : r + 32, c : c + 32], patch):
                    hits.append(S[r + 16, c + 16])
                    break
        assert label in hits


def test_stream_state_round_trip():
    scenes = make_synthetic_corpus(4, CAM, seed=0)
    s = patch_label_stream(scenes, CAM, seed=1)
    s.draw(10)
    state = s.get_state()
    nxt = s.draw(5)
    s.set_state(state)
    again = s.draw(5)
    np.testing.assert_array_equal(nxt[0], again[0])


def test_stream_skips_sceneless_windows():
    small = Scene(np.zeros((20, 20)), sizes=np.ones((20, 20), int), name="tiny")
    good = make_synthetic_scene("planes", [1.5], "noise", seed=0)
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        s = patch_label_stream([small, good], CAM, seed=0)
    assert any("tiny" in str(x.message) for x in w)
    assert len(s._images) == 1
    with pytest.warns(UserWarning), pytest.raises(ValueError):
        patch_label_stream([small], CAM)


def test_scene_dir_round_trip(tmp_path):
    scenes = make_synthetic_corpus(3, CAM, seed=4)
    ids = save_scene_dir(scenes, tmp_path)
    assert ids == ["000", "001", "002"]
    assert (tmp_path / "001_image.pgm").exists() and (tmp_path / "001_depth.txt").exists()
    back = load_scene_dir(tmp_path)
    for a, b in zip(scenes, back):
        np.testing.assert_array_equal(a.image, b.image)
        np.testing.assert_array_equal(a.depth, b.depth)
    write_manifest(tmp_path / "m.txt", ["002", "000"])
    assert read_manifest(tmp_path / "m.txt") == ["002", "000"]
    assert [s.name for s in load_scene_dir(tmp_path, read_manifest(tmp_path / "m.txt"))] == ["002", "000"]

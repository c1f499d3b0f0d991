import numpy as np
import pytest

from catseg.network import build_network, tiny_config
from catseg.phantom import PhantomConfig, generate
from catseg.pipeline import (
    evaluate_volume,
    fold_split,
    localize_mask,
    predict_volume,
)
from catseg.volume import Mask3


@pytest.fixture(scope="module")
def case():
    return generate(PhantomConfig(dims=(32, 32, 32), seed=6))


@pytest.fixture(scope="module")
def net():
    return build_network(tiny_config(), seed=0)


def test_predict_volume_shapes_and_threshold(case, net):
    vol, _, _ = case
    prob, mask = predict_volume(net, vol, n=16, m=24, threshold=0.4)
    assert prob.dims == vol.dims
    assert prob.data.min() >= 0.0 and prob.data.max() <= 1.0
    assert np.array_equal(mask.data, (prob.data >= 0.4).astype(np.uint8))


def test_predict_volume_is_deterministic(case, net):
    vol, _, _ = case
    a, _ = predict_volume(net, vol, n=16, m=24)
    b, _ = predict_volume(net, vol, n=16, m=24)
    assert np.array_equal(a.data, b.data)


def test_predict_volume_mode_validation(case, net):
    vol, _, _ = case
    with pytest.raises(ValueError, match="mode"):
        predict_volume(net, vol, mode="fused")
    with pytest.raises(ValueError, match="axis"):
        predict_volume(net, vol, mode="single_axis", n=16, m=24)


def test_localize_mask_error_paths(case):
    with pytest.raises(ValueError, match="no catheter found"):
        localize_mask(Mask3(data=np.zeros((8, 8, 8), dtype=np.uint8)))
    two = np.zeros((8, 8, 8), dtype=np.uint8)
    two[1, 1, 1] = two[6, 6, 6] = 1
    with pytest.raises(ValueError, match="no catheter found"):
        localize_mask(Mask3(data=two))
    _, truth_mask, _ = case
    model = localize_mask(truth_mask, iters=100)
    assert model.score > 0


def test_evaluate_volume_with_and_without_model(case):
    _, truth_mask, skeleton = case
    report = evaluate_volume(truth_mask, truth_mask, (0.54,) * 3)
    assert (report.recall, report.precision, report.dice) == (1.0, 1.0, 1.0)
    assert report.ahd_voxels == 0.0
    assert report.se_mm is None and report.ee_mm is None
    model = localize_mask(truth_mask, iters=200)
    with_model = evaluate_volume(
        truth_mask, truth_mask, (0.54,) * 3, model=model, truth_skeleton=skeleton
    )
    assert with_model.se_mm is not None and with_model.se_mm < 2 * 0.54
    assert with_model.ee_mm is not None


def test_fold_split_partition_and_validation():
    entries = list("abcdefgh")
    folds = [[0, 3, 6], [1, 4, 7], [2, 5]]
    train_set, test_set = fold_split(entries, folds, 1)
    assert test_set == ["b", "e", "h"]
    assert train_set == ["a", "c", "d", "f", "g"]
    with pytest.raises(ValueError, match="fold"):
        fold_split(entries, folds, 3)

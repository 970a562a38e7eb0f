import json
import math

import numpy as np
import pytest

import motctl


@pytest.fixture(scope="module")
def dataset():
    return motctl.make_synthetic_dataset(12, 4, 6, 3)


@pytest.fixture(scope="module")
def model_config():
    cfg = json.loads(motctl.default_config_json())["model"]
    cfg["H"] = 4
    cfg["T"] = 6
    cfg["d_z"] = 3
    cfg["hidden"] = 8
    return cfg


def test_dataset_surface(dataset):
    assert dataset.size == 12
    assert dataset.history == 4
    assert dataset.horizon == 6
    assert set(dataset.train_indices).isdisjoint(dataset.test_indices)
    past = dataset.past(0)
    future = dataset.future(0)
    assert past.shape == (4, 36)
    assert future.shape == (6, 36)
    ds2 = motctl.make_synthetic_dataset(12, 4, 6, 3)
    np.testing.assert_array_equal(ds2.past(0), past)


def test_dataset_io(dataset, tmp_path):
    dataset.save(tmp_path / "ds", 3)
    back = motctl.Dataset.load(tmp_path / "ds")
    assert back.size == 12
    np.testing.assert_array_equal(back.future(5), dataset.future(5))


def test_model_generate_and_control(dataset, model_config):
    model = motctl.Model.create(json.dumps(model_config), 11)
    past = dataset.past(0)
    seqs = model.generate(past, k=4, seed=5)
    assert len(seqs) == 4
    assert seqs[0].shape == (6, 36)
    again = model.generate(past, k=4, seed=5)
    np.testing.assert_array_equal(seqs[1], again[1])

    both_fixed = model.generate(past, k=3, seed=5, fix_zb=True, fix_zt=True)
    np.testing.assert_array_equal(both_fixed[0], both_fixed[1])
    np.testing.assert_array_equal(both_fixed[0], both_fixed[2])
    assert motctl.apd(both_fixed) == 0.0
    assert motctl.mpd(seqs) <= motctl.apd(seqs)


def test_model_train_and_save(dataset, model_config, tmp_path):
    model = motctl.Model.create(json.dumps(model_config), 1)
    before = model.checksum
    model.train(dataset, lr=1e-3, batch_size=4, epochs=2, seed=9,
                ckpt_dir=tmp_path / "ckpt", log_path=tmp_path / "log.csv")
    assert model.epochs_trained == 2
    assert model.checksum != before
    loaded = motctl.Model.load(tmp_path / "ckpt")
    assert loaded.checksum == model.checksum
    assert (tmp_path / "log.csv").read_text().startswith("epoch,")


def test_flow_roundtrip_and_training(dataset, tmp_path):
    flow = motctl.PoseFlow.create(dim=36, layers=2, seed=4)
    x = np.random.default_rng(0).normal(size=(5, 36))
    out, logdet = flow.forward(x)
    back = flow.inverse(out)
    assert np.abs(back - x).max() < 1e-9
    assert logdet.shape == (5,)

    flow.train(dataset, lr=3e-3, batch_size=32, epochs=2, jitter_std=0.02, seed=2,
               ckpt_dir=tmp_path / "flow", log_path=tmp_path / "flow.csv")
    assert flow.epochs_trained == 2
    nll = flow.nll_rows(x)
    assert np.all(np.isfinite(nll))


def test_sampler_and_evaluate(dataset, model_config, tmp_path):
    model = motctl.Model.create(json.dumps(model_config), 21)
    flow = motctl.PoseFlow.create(dim=36, layers=1, seed=22)
    sampler = motctl.Sampler.create(k=4, frame_dim=36, d_z=3, hidden=8, seed=23)

    past = dataset.past(1)
    eps = np.zeros((1, 3))
    z = sampler.map_noise(past, eps)
    assert z.shape == (4, 3)

    sampler.train(model, flow, dataset, lr=1e-3, epochs=1, lambda_kl=1.0,
                  lambda_div=0.7, lambda_vli=0.0, seed=24,
                  ckpt_dir=tmp_path / "sampler", log_path=tmp_path / "sampler.csv")
    assert sampler.epochs_trained == 1

    report = motctl.evaluate(model, dataset, protocol="random_sampling",
                             control="fix_zb", k=4, seed=1)
    assert report["control"] == "fix_zb"
    assert report["K"] == 4
    assert report["mpd"] <= report["apd_full"] + 1e-9
    assert math.isnan(report["nll"])

    with_flow = motctl.evaluate(model, dataset, flow=flow, k=3, seed=1)
    assert math.isfinite(with_flow["nll"])

    div = motctl.evaluate(model, dataset, sampler=sampler, flow=flow,
                          protocol="diversity_sampling", control="fix_zb",
                          k=4, seed=1)
    assert div["protocol"] == "diversity_sampling"
    assert div["apd_full"] > 0.0

    with pytest.raises(ValueError):
        motctl.evaluate(model, dataset, protocol="diversity_sampling",
                        control="fix_zb", k=4, seed=1)  # sampler missing

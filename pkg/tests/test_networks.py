import os

import numpy as np
import pytest

import simplexrl.autodiff as ad
import simplexrl.heads as hd
import simplexrl.networks as nets
from simplexrl.autodiff import Rng, Tensor


def _all_heads(h=16):
    return {
        "baseline": hd.Baseline(),
        "sem": hd.Sem(hd.SemConfig(4, h // 4)),
        "gumbel": hd.GumbelST(hd.GumbelConfig(4, h // 4)),
        "vq": hd.Vq(hd.VqConfig(8, h)),
        "crelu": hd.CRelu(),
    }


class TestInit:
    def test_fan_in_uniform_bounds(self):
        layer = nets.Linear(100, 50, Rng(0))
        bound = 1.0 / np.sqrt(100)
        assert np.abs(layer.w.data).max() <= bound
        assert np.abs(layer.b.data).max() <= bound

    def test_trunk_shapes_invariant_across_heads(self):
        shapes = set()
        for head in _all_heads().values():
            actor = nets.ActorNet(6, 2, head, Rng(0), hidden=16)
            shapes.add((actor.l1.w.data.shape, actor.l2.w.data.shape))
        assert len(shapes) == 1

    def test_crelu_doubles_out_layer_input(self):
        actor = nets.ActorNet(6, 2, hd.CRelu(), Rng(0), hidden=16)
        assert actor.out.w.data.shape == (32, 2)

    def test_sem_width_mismatch_rejected(self):
        with pytest.raises(hd.ConfigError):
            nets.ActorNet(6, 2, hd.Sem(hd.SemConfig(3, 5)), Rng(0), hidden=16)


class TestForward:
    def test_actor_output_in_tanh_range(self):
        for head in _all_heads().values():
            actor = nets.ActorNet(6, 2, head, Rng(1), hidden=16)
            out = actor.act(Rng(2).normal(size=(5, 6)) * 10)
            assert np.all(np.abs(out) <= 1.0)

    def test_critic_output_width(self):
        critic = nets.CriticNet(6, 2, hd.Baseline(), Rng(1), hidden=16, n_out=11)
        out = critic.forward(np.zeros((3, 6)), np.zeros((3, 2)))
        assert out.output.shape == (3, 11)

    def test_obs_width_mismatch(self):
        actor = nets.ActorNet(6, 2, hd.Baseline(), Rng(0), hidden=16)
        with pytest.raises(ad.ShapeError):
            actor.forward(np.zeros((3, 7)))


class TestTargets:
    def test_polyak_is_exact_contraction(self):
        rng = Rng(3)
        online = nets.ActorNet(4, 2, hd.Baseline(), rng.split(0), hidden=8)
        target = nets.ActorNet(4, 2, hd.Baseline(), rng.split(1), hidden=8)
        pair = nets.TargetPair(online.params(), target.params(), 0.995)
        before = [(t.data - o.data).copy()
                  for t, o in zip(target.params(), online.params())]
        nets.polyak_update(pair)
        for gap, t, o in zip(before, target.params(), online.params()):
            np.testing.assert_allclose(t.data - o.data, 0.995 * gap, rtol=1e-12)

    def test_hard_update_copies(self):
        rng = Rng(4)
        a = nets.ActorNet(4, 2, hd.Baseline(), rng.split(0), hidden=8)
        b = nets.ActorNet(4, 2, hd.Baseline(), rng.split(1), hidden=8)
        nets.hard_update(nets.TargetPair(a.params(), b.params()))
        for pa, pb in zip(a.params(), b.params()):
            assert np.array_equal(pa.data, pb.data)
            assert pa.data is not pb.data


class TestCheckpoint:
    def test_round_trip_preserves_values(self, tmp_path):
        rng = Rng(5)
        entries = [("layer1.w", rng.normal(size=(3, 4))),
                   ("layer1.b", rng.normal(size=4)),
                   ("scalar", np.array(2.5))]
        path = str(tmp_path / "net.ckpt")
        nets.checkpoint_save(entries, path)
        loaded = nets.checkpoint_load(path)
        assert [n for n, _ in loaded] == [n for n, _ in entries]
        for (_, orig), (_, back) in zip(entries, loaded):
            np.testing.assert_allclose(back, orig.astype(np.float32), atol=0)

    def test_default_actor_has_six_entries(self, tmp_path):
        actor = nets.ActorNet(6, 2, hd.Sem(hd.SemConfig(8, 16)), Rng(0), hidden=128)
        path = str(tmp_path / "actor.ckpt")
        nets.save_net(actor, path, prefix="actor.")
        assert len(nets.checkpoint_load(path)) == 6

    def test_bad_magic_reports_offset(self, tmp_path):
        path = str(tmp_path / "bad.ckpt")
        with open(path, "wb") as fh:
            fh.write(b"NOPE" + b"\x00" * 16)
        with pytest.raises(nets.FormatError) as err:
            nets.checkpoint_load(path)
        assert "offset" in str(err.value).lower() or "magic" in str(err.value).lower()

    def test_truncated_file_rejected(self, tmp_path):
        rng = Rng(6)
        path = str(tmp_path / "trunc.ckpt")
        nets.checkpoint_save([("w", rng.normal(size=(4, 4)))], path)
        data = open(path, "rb").read()
        with open(path, "wb") as fh:
            fh.write(data[:-8])
        with pytest.raises(nets.FormatError):
            nets.checkpoint_load(path)

    def test_no_partial_file_on_save(self, tmp_path):
        path = str(tmp_path / "atomic.ckpt")
        nets.checkpoint_save([("w", np.ones((2, 2)))], path)
        assert not os.path.exists(path + ".tmp")

    def test_load_into_net_round_trip(self, tmp_path):
        rng = Rng(7)
        src = nets.ActorNet(4, 2, hd.Baseline(), rng.split(0), hidden=8)
        dst = nets.ActorNet(4, 2, hd.Baseline(), rng.split(1), hidden=8)
        path = str(tmp_path / "a.ckpt")
        nets.save_net(src, path, prefix="actor.")
        nets.load_into_net(dst, path, prefix="actor.")
        for ps, pd in zip(src.params(), dst.params()):
            np.testing.assert_allclose(pd.data, ps.data.astype(np.float32),
                                       atol=0)

import numpy as np
import pytest

from protoseg import priors, prototypes
from protoseg.errors import ShapeMismatchError
from protoseg.priors import DualPriorMask
from protoseg.tensor import Tensor


def test_single_prototype_is_masked_average(rng):
    f = rng.standard_normal((3, 4, 4))
    m = (rng.random((4, 4)) > 0.4).astype(float)
    m[0, 0] = 1.0
    ps = prototypes.extract_prototypes(f, m, p=1)
    part = priors.partition_support(f, m)
    assert np.allclose(ps.prototypes[0], part.foreground.mean(axis=0), atol=1e-12)


def test_two_separated_clusters_recovered(rng):
    a = np.array([10.0, 0.0, 0.0])
    b = np.array([0.0, 10.0, 0.0])
    cloud_a = a + rng.normal(0, 0.01, (8, 3))
    cloud_b = b + rng.normal(0, 0.01, (8, 3))
    f = np.concatenate([cloud_a, cloud_b]).T.reshape(3, 4, 4)
    ps = prototypes.extract_prototypes(f, np.ones((4, 4)), p=2)
    got = sorted(ps.prototypes.tolist())
    want = sorted([cloud_a.mean(axis=0).tolist(), cloud_b.mean(axis=0).tolist()])
    assert np.allclose(got, want, atol=1e-6)


def test_determinism_across_identical_shots(rng):
    f = rng.standard_normal((3, 5, 5))
    m = (rng.random((5, 5)) > 0.5).astype(float)
    m[2, 2] = 1.0
    sets = [prototypes.extract_prototypes(f, m, p=3) for _ in range(3)]
    for ps in sets[1:]:
        assert np.array_equal(ps.prototypes, sets[0].prototypes)


def test_fewer_foreground_pixels_than_p(rng):
    f = rng.standard_normal((3, 2, 2))
    m = np.zeros((2, 2))
    m[0, 0] = 1.0
    ps = prototypes.extract_prototypes(f, m, p=3)
    assert ps.count == 3
    # the single descriptor, then the masked mean duplicated
    assert np.allclose(ps.prototypes[1], ps.prototypes[0])
    assert np.allclose(ps.prototypes[2], ps.prototypes[0])


def test_kshot_pooling_concatenates_before_clustering(rng):
    f1 = rng.standard_normal((3, 3, 3))
    f2 = rng.standard_normal((3, 3, 3))
    m = np.ones((3, 3))
    pooled = prototypes.pool_prototypes([(f1, m), (f2, m)], p=1)
    merged = np.concatenate([f1.reshape(3, -1).T, f2.reshape(3, -1).T])
    assert np.allclose(pooled.prototypes[0], merged.mean(axis=0), atol=1e-12)


class TestFuse:
    def _prior(self, h, w):
        return DualPriorMask(np.zeros((h, w)), np.zeros((h, w)))

    def test_channel_count(self, rng):
        f = Tensor(rng.standard_normal((5, 4, 4)))
        ps = prototypes.PrototypeSet(rng.standard_normal((3, 5)))
        out = prototypes.fuse(f, ps, self._prior(4, 4))
        assert out.shape == (5 + 3 + 2, 4, 4)

    def test_pixel_equal_to_prototype_reads_one(self, rng):
        protos = rng.standard_normal((2, 3))
        f = np.zeros((3, 2, 2))
        f[:, 0, 0] = protos[1]
        out = prototypes.fuse(Tensor(f), prototypes.PrototypeSet(protos), self._prior(2, 2))
        assert out.data[3 + 1, 0, 0] == pytest.approx(1.0)

    def test_prior_channels_pass_through_in_order(self, rng):
        f = Tensor(rng.standard_normal((2, 3, 3)))
        ps = prototypes.PrototypeSet(rng.standard_normal((2, 2)))
        prior = DualPriorMask(np.full((3, 3), 0.25), np.full((3, 3), -0.5))
        out = prototypes.fuse(f, ps, prior)
        assert np.allclose(out.data[-2], 0.25)
        assert np.allclose(out.data[-1], -0.5)

    def test_similarity_channels_match_prior_map(self, rng):
        f = rng.standard_normal((4, 3, 3))
        protos = rng.standard_normal((3, 4))
        out = prototypes.fuse(Tensor(f), prototypes.PrototypeSet(protos), self._prior(3, 3))
        for j in range(3):
            want = priors.prior_map(f, protos[j][None])
            assert np.allclose(out.data[4 + j], want, atol=1e-12)

    def test_similarity_channels_in_range(self, rng):
        for _ in range(25):
            f = rng.standard_normal((3, 2, 2)) * rng.uniform(0.1, 10)
            protos = rng.standard_normal((4, 3))
            out = prototypes.fuse(Tensor(f), prototypes.PrototypeSet(protos), self._prior(2, 2))
            sims = out.data[3:7]
            assert np.all(sims >= -1.0) and np.all(sims <= 1.0)

    def test_dim_mismatch_raises(self, rng):
        with pytest.raises(ShapeMismatchError):
            prototypes.fuse(
                Tensor(rng.standard_normal((3, 2, 2))),
                prototypes.PrototypeSet(rng.standard_normal((2, 4))),
                self._prior(2, 2),
            )

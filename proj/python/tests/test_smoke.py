import math

import numpy as np
import pytest

import vqsf


def brute_chamfer(a, b):
    d = ((a[:, None, :] - b[None, :, :]) ** 2).sum(-1)
    return d.min(1).mean() + d.min(0).mean()


def test_version_and_kinds():
    assert vqsf.__version__ == "0.1.0"
    assert "ambiguous" in vqsf.shape_kinds()


def test_surface_samples_lie_on_the_shape():
    s = vqsf.make_shape("sphere", [0.3])
    pts = vqsf.sample_surface(s, 500, seed=1)
    assert pts.shape == (500, 3)
    assert np.abs(np.linalg.norm(pts - 0.5, axis=1) - 0.3).max() < 1e-4
    assert np.abs(s.sdf(pts)).max() < 1e-4


def test_metrics_match_numpy():
    rng = np.random.default_rng(0)
    a, b = rng.random((50, 3)), rng.random((70, 3))
    assert vqsf.chamfer_l2(a, b) == pytest.approx(brute_chamfer(a, b), rel=1e-12)
    d = np.sqrt(((a[:, None] - b[None]) ** 2).sum(-1))
    assert vqsf.uhd(a, b) == pytest.approx(d.min(1).max(), rel=1e-12)
    assert vqsf.fscore(a, a) == 1.0
    assert vqsf.ambiguity(a, a) == 0.0


def test_voxelize_counts_cells():
    pts = np.array([[0.1, 0.1, 0.1], [0.12, 0.1, 0.1], [0.9, 0.9, 0.9]])
    assert vqsf.voxelize(pts, 4) == [0, 63]


def test_encode_reconstruct_and_sample(tmp_path):
    cfg = vqsf.RunConfig()
    for k, v in [("vqdif.R", "4"), ("vqdif.V", "16"), ("vqdif.base_resolution", "8"), ("vqdif.unet_depth", "1"),
                 ("sf.embed_dim", "16"), ("sf.heads", "2"), ("sf.blocks_coord", "1"), ("sf.blocks_value", "1")]:
        cfg.set(k, v)
    cfg.validate()
    model = vqsf.Vqdif(cfg)
    pts = vqsf.sample_surface(vqsf.make_shape("box", [0.2, 0.2, 0.2]), 800)
    with pytest.raises(vqsf.UsageError):
        model.encode(pts)  # codebook not initialized yet

    seq = vqsf.SparseSeq(4, 16, [(3, 1), (7, 15)])
    assert len(seq) == 2 and seq.tuples == [(3, 1), (7, 15)]
    path = tmp_path / "s.vqsq"
    seq.save(path)
    assert vqsf.SparseSeq.load(path) == seq
    with pytest.raises(vqsf.DataError):
        vqsf.SparseSeq(4, 16, [(7, 1), (3, 1)])

    verts, tris = model.reconstruct(seq, resolution=16)
    assert verts.ndim == 2 and tris.ndim == 2

    former = vqsf.ShapeFormer(cfg)
    out, ended = former.sample(seq, top_p=0.9, seed=3, max_len=5)
    cells = [c for c, _ in out.tuples]
    assert cells == sorted(set(cells)) and len(cells) <= 5
    assert math.isfinite(former.score(seq, out))


def test_usage_errors_are_value_errors():
    cfg = vqsf.RunConfig()
    with pytest.raises(ValueError):
        cfg.set("vqdif.R", "eight")
    with pytest.raises(ValueError):
        vqsf.make_shape("teapot")


def test_grad_check_passes():
    ok, worst = vqsf.grad_check(cases=2, seed=1)
    assert ok and max(worst.values()) < 1e-5

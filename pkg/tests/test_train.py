import numpy as np
import pytest

from mspac import train as tr
from mspac.data import generate_dataset
from mspac.evaluation import all_modes, evaluate_model, retrieval_run
from mspac.metrics import EvalMode, RetrievalRun, cmc, distance_matrix
from helpers import tiny_config


@pytest.fixture(scope="module")
def cfg():
    return tiny_config()


@pytest.fixture(scope="module")
def ds(cfg):
    return generate_dataset(cfg.data)


@pytest.fixture(scope="module")
def run(cfg, ds, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    return out, tr.train(cfg, ds, out)


def test_zero_epochs_writes_initial_checkpoint_only(ds, tmp_path):
    cfg = tiny_config(train__epochs=0)
    res = tr.train(cfg, ds, tmp_path)
    assert [p.name for p in (tmp_path / "checkpoints").iterdir()] == ["epoch_000"]
    assert len(res.rows) == 1 and res.rows[0]["epoch"] == 0


def test_log_layout(run):
    out, res = run
    rows = tr.read_log(out / "train_log.csv")
    assert [r["epoch"] for r in rows] == [0, 1, 2]
    assert (out / "train_log.csv").read_text().splitlines()[0] == ",".join(tr.LOG_COLUMNS)
    assert all(np.isfinite(r[c]) for r in rows for c in tr.LOG_COLUMNS)
    assert rows[1]["lr"] == 0.01
    assert sorted(p.name for p in (out / "checkpoints").iterdir()) == ["epoch_000", "epoch_001", "epoch_002"]


def test_same_seed_identical_log(cfg, ds, run, tmp_path):
    out, _ = run
    tr.train(cfg, ds, tmp_path)
    assert (tmp_path / "train_log.csv").read_bytes() == (out / "train_log.csv").read_bytes()
    for f in (out / "checkpoints" / "epoch_002").iterdir():
        assert f.read_bytes() == (tmp_path / "checkpoints" / "epoch_002" / f.name).read_bytes()


def test_different_seed_differs(ds, run, tmp_path):
    out, _ = run
    tr.train(tiny_config(train__seed=1), ds, tmp_path)
    assert (tmp_path / "train_log.csv").read_bytes() != (out / "train_log.csv").read_bytes()


def test_centers_stay_unit_norm(run):
    _, res = run
    c = res.model.params["centers"].data
    np.testing.assert_allclose(np.linalg.norm(c, axis=1), 1.0, atol=1e-5)


def test_checkpoint_round_trip_eval_bitwise(run, ds):
    out, res = run
    before = retrieval_run(res.model, ds)
    cfg, model = tr.load_run(out)
    after = retrieval_run(model, ds)
    assert before.dist.tobytes() == after.dist.tobytes()


def test_checkpoint_mismatch(run, tmp_path):
    out, _ = run
    with pytest.raises(tr.CheckpointError):
        tr.load_run(out, overrides={"encoder.embed_dim": "16"})
    with pytest.raises(tr.CheckpointError):
        tr.latest_checkpoint(tmp_path)


def test_corrupt_checkpoint_blob(run, tmp_path, ds):
    out, res = run
    ck = tr.save_checkpoint(res.model, tmp_path / "ck")
    (ck / "centers.mspd").write_bytes(b"MSPD")
    with pytest.raises(Exception) as exc:
        tr.load_checkpoint(res.model, ck)
    assert "centers.mspd" in str(exc.value)


def test_self_retrieval_is_perfect(run, ds):
    _, res = run
    recs = ds.select("gallery", "rgb")
    e = res.model.embed_images(ds.stack(recs), "rgb")
    ids = np.array([r.identity for r in recs])
    assert cmc(RetrievalRun(distance_matrix(e, e), ids, ids), (1,))[1] == 1.0


def test_untrained_model_near_chance():
    cfg = tiny_config(data__n_ids=20, data__per_id=8, data__query_per_id=4)
    ds = generate_dataset(cfg.data)
    model = tr.build_model(cfg, 20)
    r1 = cmc(retrieval_run(model, ds), (1,))[1]
    n = len(ds.select("query"))
    assert abs(r1 - 0.05) <= 3 * np.sqrt(0.05 * 0.95 / n)


def test_indoor_gallery_smaller(run, ds):
    _, res = run
    reports = evaluate_model(res.model, ds, all_modes(EvalMode(trials=2)))
    sizes = {(r.mode, r.shot): r.gallery_size for r in reports}
    assert sizes[("indoor", "multi")] < sizes[("all", "multi")]
    assert sizes[("indoor", "single")] < sizes[("all", "single")]


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_loss_aborts(ds, tmp_path):
    cfg = tiny_config(optim__lr0=1e6, loss__reduction="sum", encoder__embed_scale=10.0, train__epochs=3)
    with pytest.raises(tr.NumericalError, match="epoch"):
        tr.train(cfg, ds, tmp_path)


def test_intra_class_distance_zero_when_collapsed(run, ds):
    _, res = run
    m = tr.build_model(tiny_config(), 6)
    m.params["embed.w"].data[:] = 0
    assert tr.intra_class_distance(m, ds) == 0.0

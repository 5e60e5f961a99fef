import json
import os
import subprocess

import numpy as np
import pytest

import surgtrack as st


def test_synth_video_shapes_and_determinism():
    a = st.synth_video(3, 5)
    b = st.synth_video(3, 5)
    assert a["frames"].shape == (5, 64, 64, 3)
    assert a["masks"].shape == (5, 64, 64)
    assert a["masks"].dtype == np.uint8
    assert np.array_equal(a["frames"], b["frames"])
    assert a["frame_numbers"] == [0, 1, 2, 3, 4]


def test_frame_score_worked_example():
    gt = np.zeros((4, 4), np.uint8)
    gt[:2, :2] = 1
    pred = np.zeros((4, 4), np.uint8)
    pred[:2, 1:3] = 1
    s = st.frame_score(pred, gt)
    assert s["iou"] == pytest.approx(1 / 3)
    assert s["dice"] == 0.5
    assert s["acc"] == pytest.approx(2 / 3)


def test_evaluate_and_table():
    v = st.synth_video(4, 3)
    report = st.evaluate(v["masks"], v["masks"], model="Oracle")
    assert st.format_percent(report["mIoU"]) == "100.00"
    table = st.render_table([report])
    assert table.splitlines()[2] == "Oracle | 100.00 | 100.00 | 100.00"


def test_bbox_and_errors():
    m = np.zeros((8, 8), np.uint8)
    m[2, 3] = m[5, 6] = 7
    assert st.bbox_from_mask(m) == [3, 2, 6, 5]
    with pytest.raises(st.Error) as err:
        st.bbox_from_mask(np.zeros((8, 8), np.uint8))
    assert err.value.exit_code in (2, 3)


def test_lora_merge_matches_dense_update():
    rng = np.random.default_rng(0)
    w0, a, b = rng.normal(size=(5, 4)), rng.normal(size=(2, 4)), rng.normal(size=(5, 2))
    assert np.allclose(st.lora_merge(w0, a, b, 6.0), w0 + 3.0 * b @ a)


def test_memory_read_single_key_returns_its_value():
    keys = np.array([[1.0, 0.0], [0.0, 1.0]])
    values = np.array([[1.0], [3.0]])
    out = st.memory_read(np.array([[1.0, 0.0]]), keys, values)
    w1 = np.exp(1 / np.sqrt(2)) / (np.exp(1 / np.sqrt(2)) + 1)
    assert out[0, 0] == pytest.approx(w1 + 3 * (1 - w1))


def test_segmenter_adapters_start_at_zero_delta(tmp_path):
    seg = st.Segmenter(seed=1)
    v = st.synth_video(5, 1)
    box = st.bbox_from_mask(v["masks"][0])
    before = seg.predict_logits(v["frames"][0], box)
    seg.inject_adapters(rank=4)
    assert len(seg.adapter_targets) == 4
    assert np.array_equal(seg.predict_logits(v["frames"][0], box), before)
    assert seg.trainable_count()["adapter"] == 1024
    ckpt_id = seg.save(str(tmp_path / "s.ckpt"))
    assert len(ckpt_id) == 16
    back = st.Segmenter.load(str(tmp_path / "s.ckpt"))
    assert np.array_equal(back.predict(v["frames"][0], box), seg.predict(v["frames"][0], box))


def test_fine_tune_and_pipeline_cover_every_frame():
    v = st.synth_video(6, 6)
    seg = st.Segmenter(seed=2)
    seg.inject_adapters(rank=4, seed=2)
    losses = seg.fine_tune(v["frames"], v["masks"], epochs=2, lr=3e-3)
    assert len(losses) == 2
    trk = st.Tracker(seed=2)
    assert len(trk.train([v["frames"]], [v["masks"]], iterations=3)) == 3
    out = st.run_pipeline(v["frames"], v["masks"], seg, trk, seed_k=2)
    assert out["masks"].shape == (6, 64, 64)
    assert out["seed_frames"] == [0, 1]
    assert len(out["report"]["frames"]) == 6
    tracked = trk.propagate(v["frames"], {0: v["masks"][0]})
    assert np.array_equal(tracked[0], v["masks"][0])


def test_pipeline_without_prompt_raises_seed_error():
    v = st.synth_video(7, 3)
    with pytest.raises(st.Error) as err:
        st.run_pipeline(v["frames"], None, st.Segmenter(), st.Tracker())
    assert err.value.kind == "seed"


@pytest.mark.skipif(not os.environ.get("SURGTRACK_CLI"), reason="CLI path not provided")
def test_cli_eval_round_trip(tmp_path):
    v = st.synth_video(8, 4)
    st.write_sequence(v["frames"], v["masks"], str(tmp_path / "seq"))
    cli = os.environ["SURGTRACK_CLI"]
    out = tmp_path / "r.json"
    subprocess.run([cli, "eval", "--pred", str(tmp_path / "seq"), "--gt", str(tmp_path / "seq"), "--out", str(out)],
                   check=True, capture_output=True)
    assert st.format_percent(json.loads(out.read_text())["mIoU"]) == "100.00"

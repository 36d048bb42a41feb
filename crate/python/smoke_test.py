"""Smoke test for the quadmotion Python module.

Build and install the extension first, e.g.

    pip install maturin
    maturin build --release -m crates/py/Cargo.toml
    pip install target/wheels/quadmotion-*.whl

then run ``python python/smoke_test.py``.
"""

import json
import math
import tempfile

import quadmotion as qm


def tiny_configs():
    corpus = {
        "train_sequences": 6,
        "eval_sequences": 3,
        "frames": 4,
        "features": {"global_dim": 12, "local_dim": 6},
    }
    train = json.loads(qm.default_train_config())
    train.update(phase1_epochs=2, phase2_epochs=2, batch_size=3, frames=4)
    train["features"] = dict(corpus["features"])
    train["model"].update(
        blocks=1, dim=8, heads=2, ff_dim=16, global_dim=12, local_dim=6,
        descriptor_width=24, max_frames=8, head_hidden=8,
    )
    return json.dumps(corpus), json.dumps(train)


def main():
    info = qm.skeleton_info()
    assert info["params"] == 6 + 3 * info["bones"], info
    rest = [0.0] * info["params"]
    joints = qm.joint_positions(rest)
    assert len(joints) == info["joints"]
    verts, faces = qm.skin(rest)
    assert verts and faces and max(max(f) for f in faces) < len(verts)

    corpus_cfg, train_cfg = tiny_configs()
    corpus = qm.Corpus.generate(seed=3, config=corpus_cfg)
    assert len(corpus) == 9
    eval_ids = corpus.ids("eval")
    assert len(eval_ids) == 3

    clip = eval_ids[0]
    kps = corpus.keypoints(clip)
    assert qm.pck(kps[0], kps[0], 256, 256) == 1.0
    assert qm.velocity_error(kps, kps) == 0.0
    assert qm.acceleration_error(kps, kps) == 0.0
    assert qm.motion_chamfer_distance([kps], [kps])[2] == 0.0
    assert corpus.project(clip, corpus.poses(clip)[0]) == kps[0]

    with tempfile.TemporaryDirectory() as tmp:
        corpus.write(tmp + "/data")
        again = qm.Corpus.read(tmp + "/data")
        assert again.poses(clip) == corpus.poses(clip)

        model, phase1, phase2 = qm.train(corpus, train_cfg, tmp + "/run")
        assert len(phase1) == 2 and len(phase2) == 2
        assert all(math.isfinite(r["total"]) for r in phase1 + phase2)
        loaded = qm.Model.load(tmp + "/run/ckpt/phase2/epoch_2/state.qma")

    a = model.sample(3, seed=1)
    assert a == loaded.sample(3, seed=1)
    assert a != model.sample(3, seed=2)
    assert len(a) == 3 and len(a[0]) == model.frames and len(a[0][0]) == 3 * info["bones"]
    assert model.decode([0.0] * model.latent_dim, 4)

    long = model.generate_long(2, seed=0)
    assert len(long["bones"]) == 3 * model.frames

    report = model.evaluate(corpus)
    assert 0.0 <= report["pck"] <= 1.0 and report["sequences"] == 3

    try:
        qm.joint_positions([0.0])
    except ValueError:
        pass
    else:
        raise AssertionError("short pose accepted")

    print("quadmotion smoke test passed")


if __name__ == "__main__":
    main()

"""Quick end-to-end check of the pymrnet extension module."""

import os
import tempfile

import pymrnet


def main():
    assert pymrnet.STAGES == ["W", "N1", "N2", "N3", "REM"], pymrnet.STAGES
    assert pymrnet.EPOCH_LEN == 3072

    epochs, labels = pymrnet.synth_record(epochs=30, seed=3)
    assert len(epochs) == len(labels) == 30
    assert all(len(e) == pymrnet.EPOCH_LEN for e in epochs)

    model = pymrnet.Model("reduced", seed=1)
    assert model.input_length == pymrnet.EPOCH_LEN
    assert model.num_trainable == sum(p for _, p in model.summary())
    probs = model.predict(epochs[:8], batch_size=4)
    assert len(probs) == 8
    for p in probs:
        assert abs(sum(p) - 1.0) < 1e-4

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "model.mrn")
        model.save(path)
        again = pymrnet.Model.load(path)
        assert again.predict(epochs[:8], batch_size=4) == probs

    hyps = [pymrnet.synth_record(epochs=200, seed=s)[1] for s in range(4)]
    matrix = pymrnet.fit_transition_matrix(hyps, laplace=True)
    assert len(matrix) == 5 and all(len(r) == 5 for r in matrix)
    wide = [[float(x) for x in p] for p in probs]
    corrected = pymrnet.msc_correct(wide, matrix)
    assert len(corrected) == 8

    raw = [max(range(5), key=p.__getitem__) for p in probs]
    rep = pymrnet.report(labels[:8], corrected, raw=raw)
    assert 0.0 <= rep["acc"] <= 1.0
    assert set(rep["per_class_f1"]) == set(pymrnet.STAGES)

    assert pymrnet.lr_at(0) > 0.0
    folds = pymrnet.make_folds([30, 40, 50], k=3)
    assert len(folds) == 3

    rows = pymrnet.msc_benchmark(records=3, epochs=300, seed=0)
    assert len(rows) == 3
    mean_gain = sum(r["corrected_acc"] - r["raw_acc"] for r in rows) / len(rows)

    try:
        pymrnet.Model("huge")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown preset accepted")

    print(f"pymrnet smoke test ok (bench gain {mean_gain:+.3f})")


if __name__ == "__main__":
    main()

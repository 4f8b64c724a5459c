"""Smoke test for the `histruct` Python extension.

Build it first:

    cargo build --release -p histruct-python --features extension-module

The script imports `histruct` if it is already importable, otherwise it
loads the freshly built library from target/.
"""

import importlib.util
import math
import pathlib
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def load_histruct():
    try:
        import histruct

        return histruct
    except ImportError:
        pass
    for profile in ("release", "debug"):
        lib = ROOT / "target" / profile / "libhistruct_python.so"
        if lib.exists():
            spec = importlib.util.spec_from_file_location("histruct", lib)
            module = importlib.util.module_from_spec(spec)
            spec.loader.exec_module(module)
            return module
    sys.exit("histruct extension not found; build crates/python with --features extension-module")


def main():
    hs = load_histruct()

    r1, r2, rl = hs.rouge(["the cat sat"], ["the cat ran"])
    assert math.isclose(r1, 2 / 3) and math.isclose(r2, 0.5) and math.isclose(rl, 2 / 3)

    assert hs.sinusoid(1, 2) == [math.sin(1.0), math.cos(1.0)]
    assert math.isclose(hs.lr_at(100, 100, 2.0), 2.0 * 100**-0.5)
    assert hs.classify_title("Concluding Remarks") == "conclusions"

    doc = hs.Document(
        "d0",
        [("Introduction", ["We study cats.", "Cats sleep."]), ("Conclusions", ["Cats win.", "The end."])],
        ["cats win"],
    )
    assert len(doc) == 4
    assert doc.ssvs() == [(0, 0), (0, 1), (1, 0), (1, 1)]
    assert doc.tsvs()[0] == (0, 0, 0)
    assert hs.oracle_labels(doc, 1) == [0, 0, 1, 0]
    assert hs.select([0.1, 0.9, 0.5, 0.2], doc.sentences, 2) == [1, 2]

    train, valid, test = hs.generate_synthetic(
        "n_train = 24\nn_valid = 4\nn_test = 4\nsections_per_doc = 3\nsentences_per_section = 4\nvocab_size = 50\n",
        seed=7,
    )
    assert (len(train), len(valid), len(test)) == (24, 4, 4)

    with tempfile.TemporaryDirectory() as tmp:
        tmp = pathlib.Path(tmp)
        for name, docs in (("train", train), ("valid", valid), ("test", test)):
            hs.write_corpus(str(tmp / f"{name}.jsonl"), docs)
            hs.label_corpus(str(tmp / f"{name}.jsonl"), str(tmp / f"{name}.l.jsonl"), 3)
        (tmp / "exp.toml").write_text(
            """
[corpus]
train = "train.l.jsonl"
valid = "valid.l.jsonl"

[encoding]
setting = "sin-mean"
d_model = 8
max_positions = 16
inject_ste = true

[encoder]
n_heads = 2
n_layers = 1
d_ff = 16
max_len = 160

[summarizer]
n_layers = 1
n_heads = 2
d_ff = 16

[train]
total_steps = 6
warmup_steps = 2
batch_size = 2
eval_every = 2
keep_top_k = 2
"""
        )
        kept = hs.train(str(tmp / "exp.toml"), str(tmp / "run"), seed=3)
        assert len(kept) == 2 and kept[0][2] <= kept[1][2]

        model = hs.Model.load(kept[0][0])
        assert model.setting == "sin-mean"
        assert model.step == kept[0][1]
        scores = model.scores(test[0])
        assert len(scores) == len(test[0]) and all(0.0 < s < 1.0 for s in scores)
        chosen, summary = model.predict(test[0], n=3)
        assert len(chosen) == 3 and len(summary) == 3

        rows, average, dist = hs.evaluate(str(tmp / "test.l.jsonl"), [k[0] for k in kept], n=3, max_index=12)
        assert len(rows) == 2 and len(dist) == 13
        assert math.isclose(average[0], sum(r[1] for r in rows) / 2)
        _, oracle, oracle_dist = hs.evaluate(str(tmp / "test.l.jsonl"), mode="oracle", n=3, max_index=12)
        assert oracle[0] > average[0]
        assert 0.0 <= hs.total_variation(dist, oracle_dist) <= 1.0

    try:
        hs.load_corpus("/nonexistent/corpus.jsonl")
    except OSError:
        pass
    else:
        raise AssertionError("missing corpus must raise OSError")

    print("python smoke test passed")


if __name__ == "__main__":
    main()

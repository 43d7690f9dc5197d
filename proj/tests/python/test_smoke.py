"""Smoke tests for the python bindings: corpus round trips, a tiny training
run, the attack, metrics and the python-side adapter."""

import math
import shutil
import subprocess
import sys
import textwrap

import pytest

import viba


def make_corpus(seed, sentences, prefix="syn"):
    return viba.generate_corpus(seed, sentences=sentences, id_prefix=prefix)


def test_version_and_exports():
    assert viba.__version__
    assert viba.DEFAULT_MASK_TOKEN == "[MASK]"


def test_conll_round_trip():
    ds = viba.parse_conll("EU\tB-ORG\nrejects\tO\n\n")
    assert len(ds) == 1
    assert ds.sentences[0].tokens == ["EU", "rejects"]
    assert ds.gold == [["B-ORG", "O"]]
    assert viba.parse_conll(viba.write_conll(ds)).gold == ds.gold


def test_entity_codec():
    entities = viba.decode_entities(["B-PER", "I-PER", "O", "B-GPE"])
    assert [(e.type, e.start, e.end) for e in entities] == [
        ("PER", 0, 2),
        ("GPE", 3, 4),
    ]
    tags = viba.encode_entities(entities, 4)
    assert tags == ["B-PER", "I-PER", "O", "B-GPE"]
    with pytest.raises(viba.ValidationError):
        viba.encode_entities([viba.Entity("A", 0, 2), viba.Entity("B", 1, 3)], 4)


def test_edit_distance_and_similarity():
    assert viba.edit_distance(["a", "b"], ["a", "x", "b"]) == 1
    assert viba.semantic_similarity(["a", "b"], ["a", "b"]) == 1.0
    assert viba.semantic_similarity(["a"], ["b"]) == 0.0


def test_train_attack_probe_cycle(tmp_path):
    train_ds = make_corpus(1, 250)
    dev_ds = make_corpus(2, 60, "dev")
    test_ds = make_corpus(3, 60, "tst")

    model, history = viba.train(train_ds, viba.TrainConfig(epochs=5, seed=1),
                                dev_ds)
    assert len(history) == 5

    victim = viba.CrfVictim(model)
    assert victim.has_marginals and victim.has_representations
    predicted = [victim.predict(s.tokens)["tags"] for s in test_ds.sentences]
    precision, recall, f1 = viba.evaluate_f1(test_ds, predicted)
    assert f1 > 0.6

    run = viba.attack_dataset(victim, test_ds, exhaustive=True)
    report = run.report()
    assert 0.0 <= report["asr"] <= 1.0
    assert 0.0 <= report["easr1"] <= 1.0
    for outcome in run.outcomes():
        if outcome["status"] != "success":
            continue
        detail = outcome["success"]
        assert viba.edit_distance(outcome["x"], detail["x_prime"]) == 1

    # outcomes persist and reload
    path = tmp_path / "outcomes.jsonl"
    run.save(str(path))
    reloaded = viba.load_outcomes(str(path))
    assert len(reloaded) == len(run)
    assert reloaded.report() == report

    probes = viba.boundary_inner_drop_probe(victim, test_ds)
    assert probes["probed_entities"] > 0
    cosines = viba.representation_similarity_probe(victim, run)
    assert cosines["successes_used"] == report["counts"]["succeeded"]

    # model file round trip
    model_path = tmp_path / "model.crf"
    model.save(str(model_path))
    again = viba.load_model(str(model_path))
    s = test_ds.sentences[0]
    assert viba.viterbi(again, s.tokens) == viba.viterbi(model, s.tokens)


def test_defenses_run():
    train_ds = make_corpus(5, 120)
    test_ds = make_corpus(6, 40, "tst")
    masked = viba.boundary_mask_augment(train_ds, 1.0, seed=3)
    for sent, tags in zip(masked.sentences, masked.gold):
        for e in viba.decode_entities(tags):
            assert sent.tokens[e.start] == "[MASK]"

    rows = viba.run_defense_experiment(
        train_ds, None, test_ds, p_values=[0.0, 0.5],
        config=viba.TrainConfig(epochs=2, seed=4))
    assert len(rows) == 4
    assert {r["strategy"] for r in rows} == {"boundary_mask", "boundary_dropout"}
    for r in rows:
        assert 0.0 <= r["f1"] <= 1.0


def test_python_adapter_subprocess(tmp_path):
    script = tmp_path / "toy_adapter.py"
    script.write_text(textwrap.dedent("""\
        import viba.adapter

        def tag(tokens):
            return ["B-PER" if t[:1].isupper() else "O" for t in tokens]

        viba.adapter.serve(tag, labels=["B-PER", "O"])
    """))
    pythonpath = ":".join(sys.path)
    victim = viba.SubprocessVictim(
        f"PYTHONPATH='{pythonpath}' {shutil.which(sys.executable) or sys.executable} {script}",
        timeout_ms=20000)
    assert victim.labels == ["B-PER", "O"]
    rec = victim.predict(["Alice", "met", "Bob"])
    assert rec["tags"] == ["B-PER", "O", "B-PER"]

    ds = viba.Dataset()
    ds.sentences = [viba.Sentence("s1", ["Alice", "went", "to", "the",
                                         "station", "with", "Bob", "today"])]
    run = viba.attack_dataset(victim, ds)
    report = run.report()
    assert report["counts"]["sentences"] == 1
    assert math.isclose(report["mean_victim_calls"],
                        run.outcomes()[0]["victim_calls"])

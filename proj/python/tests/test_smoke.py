import io
import json

import pytest
from PIL import Image

import deva

SECRET = "python smoke secret, at least 32 bytes long"


def test_grammar():
    assert deva.normalize("  कर्मणि ") == "कर्मणि"
    assert deva.segment_clusters("कर्मणि") == ["क", "र्म", "णि"]
    assert deva.classify(ord("क")) == "Consonant"
    with pytest.raises(deva.MalformedText):
        deva.segment_clusters("ि")
    for n in range(1, 13):
        assert len(deva.segment_clusters(deva.random_string(n, n))) == n
    with pytest.raises(deva.InvalidLength):
        deva.random_string(1, 0)


def test_corpus_roundtrip(tmp_path):
    c = deva.Corpus(tmp_path / "corpus")
    c.ingest("कर्मणि योग", "t")
    c.save_index()
    assert deva.Corpus(tmp_path / "corpus").stats()["words"] == 2
    assert c.sample(7) in {"कर्मणि", "योग"}
    with pytest.raises(deva.EmptyPage):
        c.ingest("hello", "t")
    with pytest.raises(deva.NoCandidate):
        deva.Corpus().sample(1)


def test_render_and_obfuscate():
    clean = deva.render("कर्मणि")
    img = Image.open(io.BytesIO(clean))
    assert img.mode == "L"
    assert 0.02 < deva.ink_coverage(clean) < 0.6
    assert deva.obfuscate("कर्मणि", 3) == deva.obfuscate("कर्मणि", 3)
    assert 0.02 <= deva.ink_coverage(deva.obfuscate("कर्मणि", 3, difficulty=1.0)) <= 0.5
    assert deva.attack_segments(clean) >= 1


def test_engine_lifecycle():
    c = deva.Corpus()
    c.ingest("कर्मणि", "t")
    e = deva.Engine(c, SECRET, now=1_700_000_000, force_kind="existing_word")
    issued = e.issue(1)
    assert issued["answer"] == "कर्मणि"
    assert issued["expires_at"] == "2023-11-14T22:14:50.000Z"
    Image.open(io.BytesIO(issued["png"])).verify()
    assert e.verify(issued["challenge_id"], "कर्मणि") == "pass"
    assert e.verify(issued["challenge_id"], "कर्मणि") == "already_used"
    pending = e.issue(2)["challenge_id"]
    fresh = e.refresh(pending)
    assert e.state(pending) == "superseded"
    e.advance(91)
    assert e.verify(fresh["challenge_id"], "कर्मणि") == "expired"
    assert e.verify("0" * 32, "x") == "unknown"
    with pytest.raises(deva.UnknownChallenge):
        e.refresh("0" * 32)
    with pytest.raises(ValueError):
        deva.Engine(c, SECRET).advance(1)


def test_evaluate_segmentation():
    c = deva.Corpus()
    c.ingest("कमल नमक कर्मणि योग धर्म", "t")
    report = deva.evaluate_segmentation(c, n=5, ablations=False)
    assert report["n_samples"] == 5
    assert 0.0 <= report["clean_exact_rate"] <= 1.0
    assert 0.0 <= report["obfuscated_exact_rate"] <= 1.0
    assert json.dumps(report)

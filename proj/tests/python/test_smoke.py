import math

import pytest

import ctirb


def small_config():
    cfg = ctirb.default_config()
    cfg["corpus"]["synthetic_records"] = 300
    cfg["model"]["train"]["epochs"] = 3
    cfg["saliency"]["train"]["epochs"] = 2
    return cfg


def test_tokenize_keeps_identifiers():
    assert ctirb.tokenize("Patch CVE-2018-1852 in v2.1.") == ["Patch", "CVE-2018-1852", "in", "v2.1", "."]
    assert ctirb.normalize_token("Exploit") == "exploit"


def test_rate_formatting():
    assert ctirb.format_rate(9402 / 9734, 2) == "0.97"
    assert ctirb.format_f1(0.93497) == "0.9349"


def test_metrics():
    assert ctirb.cosine_similarity([1.0, 0.0], [1.0, 1.0]) == pytest.approx(1 / math.sqrt(2))
    assert ctirb.wasserstein_1d([0.0, 1.0], [2.0, 3.0]) == pytest.approx(2.0)
    d = ctirb.kde([0.0, 0.5, 1.0, 2.0])
    assert len(d["grid"]) == len(d["density"])
    assert ctirb.kl_divergence([0.0, 1.0, 2.0], [0.0, 1.0, 2.0]) <= 1e-9


def test_schedule_scaling_preserves_total():
    assert sum(ctirb.reference_poison_schedule()) == 9402
    assert sum(ctirb.scale_schedule(ctirb.reference_poison_schedule(), 100)) == 100


def test_synthetic_corpus():
    records = ctirb.synthetic_corpus(50, 0.5, 3)
    assert len(records) == 50
    assert sum(r["relevant"] for r in records) == 25
    assert records == ctirb.synthetic_corpus(50, 0.5, 3)


def test_desk_round_trip():
    desk = ctirb.Desk(small_config())
    assert desk.corpus_size == 300
    p = desk.probability("remote code execution exploit in the web server")
    assert 0.0 <= p <= 1.0
    att = desk.attention("attackers exploit a buffer overflow")
    assert sum(att["alpha"]) == pytest.approx(1.0)
    assert set(desk.evaluate_test()) == {"tp", "fp", "tn", "fn", "f1"}


def test_config_errors_map_to_value_error():
    cfg = small_config()
    cfg["model"]["bogus"] = 1
    with pytest.raises(ValueError):
        ctirb.Desk(cfg)

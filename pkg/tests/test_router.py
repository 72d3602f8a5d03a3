import random

import pytest

from labloop.errors import ParameterError
from labloop.gateway import cosine
from labloop.router import (Route, RouteTable, classify, default_route_table, feedback,
                            force_route, load_route_table, save_route_table, table_from_dict,
                            table_to_dict)


def make_table(bare_gateway, threshold=0.75):
    def route(name, texts):
        return Route(name=name, exemplars=list(zip(texts, bare_gateway.embed(texts))),
                     threshold=threshold)

    return RouteTable(routes=[
        route("alpha", ["run the alpha analysis", "alpha pipeline please"]),
        route("beta", ["search beta databases", "find beta references"]),
        route("chat", ["hello", "thanks"]),
    ], default_route="chat")


def test_exact_exemplar_classifies_to_its_route(bare_gateway):
    table = make_table(bare_gateway)
    name, score = classify(table, bare_gateway.embed_one("search beta databases"))
    assert name == "beta"
    assert score == pytest.approx(1.0, abs=1e-9)


def test_all_below_threshold_falls_back_to_default(bare_gateway):
    table = make_table(bare_gateway, threshold=0.99)
    name, _ = classify(table, bare_gateway.embed_one("completely unrelated gibberish zzz"))
    assert name == "chat"


def test_classify_matches_exhaustive_oracle(bare_gateway):
    # 3 routes x 4 exemplars vs a brute-force max-cosine scan.
    texts = {
        "one": ["aa bb cc", "dd ee ff", "gg hh ii", "jj kk ll"],
        "two": ["mm nn oo", "pp qq rr", "ss tt uu", "vv ww xx"],
        "three": ["yy zz ab", "cd ef gh", "ij kl mn", "op qr st"],
    }
    routes = [Route(name=n, exemplars=list(zip(t, bare_gateway.embed(t))), threshold=0.0)
              for n, t in texts.items()]
    table = RouteTable(routes=routes, default_route="one")
    for probe in ["aa bb", "pp qq zebra", "ij kl mn", "something else entirely"]:
        query = bare_gateway.embed_one(probe)
        best = max(
            ((name, max(cosine(v, query) for _, v in r.exemplars))
             for name, r in ((r.name, r) for r in routes)),
            key=lambda pair: (pair[1], [-ord(c) for c in pair[0]]))
        got_name, got_score = classify(table, query)
        assert got_score == pytest.approx(best[1], abs=1e-12)
        # scores are almost surely distinct for these probes
        assert got_name == best[0]


def test_classify_is_pure(bare_gateway):
    table = make_table(bare_gateway)
    query = bare_gateway.embed_one("alpha pipeline please")
    assert classify(table, query) == classify(table, query)


def test_feedback_reroutes_prompt(bare_gateway):
    table = make_table(bare_gateway)
    prompt = "crunch the alpha numbers"
    feedback(table, prompt, "beta", bare_gateway)
    name, score = classify(table, bare_gateway.embed_one(prompt))
    assert name == "beta"
    assert score == pytest.approx(1.0, abs=1e-9)


def test_feedback_dedups_by_text(bare_gateway):
    table = make_table(bare_gateway)
    before = len(table.get("beta").exemplars)
    feedback(table, "same prompt", "beta", bare_gateway)
    feedback(table, "same prompt", "beta", bare_gateway)
    assert len(table.get("beta").exemplars) == before + 1


def test_feedback_unknown_route(bare_gateway):
    table = make_table(bare_gateway)
    with pytest.raises(ParameterError):
        feedback(table, "p", "nonexistent", bare_gateway)


def test_feedback_monotone_exemplar_count(bare_gateway):
    table = make_table(bare_gateway)
    total = sum(len(r.exemplars) for r in table.routes)
    for i in range(10):
        feedback(table, f"new prompt {i}", random.Random(i).choice(table.names()), bare_gateway)
        now = sum(len(r.exemplars) for r in table.routes)
        assert now >= total
        total = now


def test_feedback_property_hundred_random_pairs(bare_gateway):
    table = make_table(bare_gateway)
    rng = random.Random(42)
    names = table.names()
    for i in range(100):
        prompt = " ".join(rng.choice(["gene", "graph", "cell", "model", "data",
                                      "run", "find", "plot"]) for _ in range(5)) + f" #{i}"
        target = rng.choice(names)
        feedback(table, prompt, target, bare_gateway)
        got, _ = classify(table, bare_gateway.embed_one(prompt))
        assert got == target


def test_force_route_logs_and_learns(gateway, session):
    table = make_table(gateway)
    name, _ = force_route(table, "do the weird thing", "alpha", gateway, session)
    assert name == "alpha"
    decisions = [e for e in session.log if e.kind == "route-decision"]
    assert decisions and decisions[-1].payload["forced"] is True
    got, _ = classify(table, gateway.embed_one("do the weird thing"))
    assert got == "alpha"


def test_force_route_unknown(bare_gateway):
    table = make_table(bare_gateway)
    with pytest.raises(ParameterError):
        force_route(table, "p", "nonexistent", bare_gateway)


def test_table_round_trips_through_persistence(tmp_path, bare_gateway):
    table = make_table(bare_gateway)
    feedback(table, "learned prompt", "alpha", bare_gateway)
    path = save_route_table(table, tmp_path / "routes.json")
    loaded = load_route_table(path)
    assert table_to_dict(loaded) == table_to_dict(table)
    q = bare_gateway.embed_one("learned prompt")
    assert classify(loaded, q) == classify(table, q)


def test_default_table_has_seed_routes(bare_gateway):
    table = default_route_table(bare_gateway)
    assert table.default_route == "chat"
    assert {"lab-notebook", "digital-library", "software", "planner", "chat"} <= set(table.names())
    for route in table.routes:
        assert route.exemplars


def test_route_validation(bare_gateway):
    with pytest.raises(ValueError):
        Route(name="empty", exemplars=[])
    vecs = bare_gateway.embed(["x"])
    with pytest.raises(ValueError):
        RouteTable(routes=[Route(name="a", exemplars=[("x", vecs[0])])], default_route="missing")

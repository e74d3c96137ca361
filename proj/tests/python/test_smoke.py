import pytest

import shopsim


@pytest.fixture(scope="module")
def world(tmp_path_factory):
    d = tmp_path_factory.mktemp("world")
    assert shopsim.generate_catalog(3, "tiny", str(d / "catalog.jsonl")) == 20
    assert shopsim.generate_tasks(str(d / "catalog.jsonl"), 4, 6, 0.5, str(d / "tasks.jsonl")) == 6
    return shopsim.World(d / "catalog.jsonl", d / "tasks.jsonl")


def test_score_exact_purchase():
    target = {
        "product_id": "p1",
        "category": ["D", "F", "X"],
        "title": "red running shoes",
        "canonical_query": "red running shoes",
        "attributes": ["Breathable"],
        "options": {"Size": "40"},
        "price_cap": 100.0,
    }
    outcome = {
        "product": {
            "product_id": "p1",
            "title": "red running shoes",
            "shop_name": "S",
            "domain": "D",
            "first_category": "F",
            "fine_category": "X",
            "options": {"Size": ["39", "40"]},
            "pricing": 90.0,
            "attribute": ["Breathable"],
        },
        "selected_options": {"Size": "40"},
        "effective_price": 90.0,
        "first_search_query": "red running shoes",
    }
    r = shopsim.score(target, outcome)
    assert r["r_succ"] == 1 and r["r_loose"] == 1.0
    assert shopsim.score(target)["r_finish"] == 0


def test_episode_and_replay(world):
    tid = next(t for t in world.task_ids() if world.task(t)["profile_ref"] is None)
    task = world.task(tid)
    ep = world.episode(tid, "single_turn", seed=1, fixed_time=True)
    obs = ep.reset()
    assert obs["text"].startswith("WebShop [SEP] Instruction: [SEP] ")
    r = ep.step("search[%s]" % task["canonical_query"])
    assert task["target_product_id"] in r["observation"]["clickable"]
    ep.step("click[%s]" % task["target_product_id"])
    for value in task["target_options"].values():
        ep.step("click[%s]" % value)
    r = ep.step("Action: click[Buy Now]")
    assert r["terminal"] and r["reward"]["r_succ"] == 1
    assert world.replay(ep.trace())["ok"]

    again = world.episode(tid, "single_turn", seed=1, fixed_time=True)
    again.reset()
    with pytest.raises(shopsim.ProtocolError):
        again.step("Action_type: ask_shopper\nAction_content: budget?")
    assert again.steps == 0


def test_errors_and_eval(world):
    with pytest.raises(shopsim.NotFoundError):
        world.task("nope")
    with pytest.raises(shopsim.ValidationError):
        world.episode(world.task_ids()[0], "sideways")
    m = world.evaluate("oracle", seed=2)
    assert m["overall"]["r_succ"] == 1.0
    assert {s["scenario"] for s in m["scenarios"]} <= set(shopsim.SCENARIOS)

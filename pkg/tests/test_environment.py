import pytest

from agentapps.environment import MockEnvironment, QuerySpec
from agentapps.errors import BadPredicate, UnknownAction, UnknownSource
from agentapps.state import EnvironmentRecordRef


def test_load_dir_registers_sources(env):
    assert set(env.sources) >= {"rental_providers", "bbq_spots", "ssn_documents",
                                "ssn_steps", "fx_rates", "park_events"}


def test_query_predicate_projection_and_order(env):
    q = QuerySpec("rental_providers",
                  predicate={"accepts_p2": {"op": "eq", "value": True}},
                  projection=("provider", "daily_rate"))
    rows = env.execute_query(q)
    assert [r.record_id for r, _ in rows] == ["p_alpha", "p_harbour"]
    assert all(set(p) == {"provider", "daily_rate"} for _, p in rows)
    assert all(r.version == 1 for r, _ in rows)


def test_query_limit_and_numeric_ops(env):
    q = QuerySpec("rental_providers", predicate={"daily_rate": {"op": "lt", "value": 90}}, limit=1)
    rows = env.execute_query(q)
    assert len(rows) == 1 and rows[0][1]["daily_rate"] < 90


def test_query_errors(env):
    with pytest.raises(UnknownSource):
        env.execute_query(QuerySpec("nope"))
    with pytest.raises(BadPredicate):
        env.execute_query(QuerySpec("fx_rates", predicate={"rate": {"op": "wat", "value": 1}}))
    with pytest.raises(BadPredicate):
        env.execute_query(QuerySpec("fx_rates", predicate={"rate": "not a cond"}))


def test_write_bumps_version_and_is_visible(env):
    before = env.execute_query(QuerySpec("fx_rates"))
    result = env.execute_write("update_rates", {})
    assert result.status == "ok"
    assert {(r.record_id, r.version) for r in result.resulting_refs} == {("r_aud", 2), ("r_eur", 2)}
    after = {r.record_id: (r.version, p) for r, p in env.execute_query(QuerySpec("fx_rates"))}
    assert after["r_aud"][0] == 2 and after["r_aud"][1]["rate"] == 1.58
    assert after["r_jpy"][0] == 1  # untouched record keeps version 1
    # the old version remains readable
    old_ref = EnvironmentRecordRef("fx_rates", "r_aud", 1)
    assert env.payload_at(old_ref)["rate"] == before[0][1]["rate"]


def test_unknown_action(env):
    with pytest.raises(UnknownAction):
        env.execute_write("frobnicate", {})


def test_param_substitution():
    env = MockEnvironment()
    env.register_records("notes", {"n1": {"body": "old"}})
    env._actions["edit"] = [{"source": "notes", "record_id": "n1",
                             "set": {"body": {"$param": "body"}}}]
    env.execute_write("edit", {"body": "new"})
    assert env.payload_at(EnvironmentRecordRef("notes", "n1", 2))["body"] == "new"


def test_current_versions_and_has_record(env):
    ref = EnvironmentRecordRef("fx_rates", "r_aud", 1)
    assert env.current_versions([ref]) == {ref: 1}
    env.execute_write("update_rates", {})
    assert env.current_versions([ref]) == {ref: 2}
    assert env.has_record(ref)
    assert not env.has_record(EnvironmentRecordRef("fx_rates", "r_aud", 9))
    with pytest.raises(UnknownSource):
        env.current_versions([EnvironmentRecordRef("fx_rates", "r_missing", 1)])

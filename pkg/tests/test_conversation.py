"""Conversation history: roles, append-only semantics, transcripts, snapshots."""

import pytest
from hypothesis import given, strategies as st

from taskchat.conversation import (
    MODEL_ONLY,
    USER_VISIBLE,
    Message,
    Role,
    Session,
    create_session,
)
from taskchat.errors import EmptyContent, InvalidSwitch, UnknownAgent


ROLE_TAGS = ["[SYSTEM]", "[USER]", "[AGENT]", "[FUNCTION_RESPONSE]", "[GUARDRAILS]"]


def test_exactly_five_roles_with_bracket_tags():
    assert sorted(r.tag for r in Role) == sorted(ROLE_TAGS)
    for tag in ROLE_TAGS:
        assert Role.from_tag(tag).tag == tag


def test_from_tag_rejects_unknown():
    with pytest.raises(ValueError):
        Role.from_tag("[NOPE]")


def test_create_session_empty_state(registry):
    session = create_session(registry, "restaurant_assistant")
    assert session.active_agent == "restaurant_assistant"
    assert session.messages == []
    assert session.agent_stack == ["restaurant_assistant"]


def test_create_session_non_root_agent(registry):
    session = create_session(registry, "sales_drop_analysis")
    assert session.agent_stack == ["sales_drop_analysis"]


def test_create_session_unknown_agent(registry):
    with pytest.raises(UnknownAgent):
        create_session(registry, "nonexistent")


def test_create_session_defaults_to_registry_root(registry):
    assert create_session(registry).active_agent == registry.root


def test_append_message_grows_history(registry):
    session = create_session(registry)
    session.append_message(Role.USER, "update price of Burger to $50", source="actor")
    assert len(session.messages) == 1
    message = session.messages[0]
    assert message.role is Role.USER
    assert message.visibility == USER_VISIBLE


def test_append_function_response_with_source(registry):
    session = create_session(registry)
    message = session.append_message(
        Role.FUNCTION_RESPONSE,
        "confirmation=True required to proceed",
        source="reason_for_low_sales",
    )
    assert message.role is Role.FUNCTION_RESPONSE
    assert message.source == "reason_for_low_sales"


def test_guardrails_messages_are_always_model_only(registry):
    session = create_session(registry)
    message = session.append_message(
        Role.GUARDRAILS, "fix your formatting", visibility=USER_VISIBLE
    )
    assert message.visibility == MODEL_ONLY
    assert "fix your formatting" not in session.render_transcript("user")


def test_append_rejects_empty_content(registry):
    session = create_session(registry)
    with pytest.raises(EmptyContent):
        session.append_message(Role.USER, "")
    with pytest.raises(EmptyContent):
        session.append_message(Role.USER, "   ")


def test_agent_switch_updates_stack_and_marker(registry):
    session = create_session(registry)
    session.record_agent_switch(registry, "sales_drop_analysis")
    assert session.agent_stack == ["restaurant_assistant", "sales_drop_analysis"]
    assert session.active_agent == "sales_drop_analysis"
    markers = [m for m in session.messages if m.role is Role.SYSTEM]
    assert len(markers) == 1
    assert markers[0].visibility == MODEL_ONLY


def test_agent_switch_rejects_non_child(registry):
    session = create_session(registry, "sales_drop_analysis")
    with pytest.raises(InvalidSwitch):
        session.record_agent_switch(registry, "menu_management")


def test_two_switches_bump_prompt_version_twice(registry):
    session = create_session(registry)
    before = session.system_prompt_version
    session.record_agent_switch(registry, "sales_drop_analysis")
    session.active_agent = "restaurant_assistant"  # simulate root regaining control
    session.agent_stack.append("restaurant_assistant")
    session.record_agent_switch(registry, "menu_management")
    assert session.system_prompt_version == before + 2


def test_actor_utterances_filters_user_messages(registry):
    session = create_session(registry)
    session.append_message(Role.USER, "first")
    session.append_message(Role.AGENT, "reply", source="restaurant_assistant")
    session.append_message(Role.FUNCTION_RESPONSE, "data", source="tool")
    session.append_message(Role.USER, "second")
    session.append_message(Role.GUARDRAILS, "reflection")
    assert session.actor_utterances() == ["first", "second"]


def test_actor_utterances_empty_session(registry):
    assert create_session(registry).actor_utterances() == []


def test_actor_utterances_extended_mode_includes_function_responses(registry):
    session = create_session(registry)
    session.append_message(Role.USER, "first")
    session.append_message(Role.USER, "second")
    session.append_message(Role.FUNCTION_RESPONSE, "item: Veg Burger", source="tool")
    extended = session.actor_utterances(include_function_responses=True)
    assert len(extended) == 3
    assert "item: Veg Burger" in extended


def test_render_transcript_model_audience_tags(registry):
    session = create_session(registry)
    session.append_message(Role.USER, "hello", source="actor")
    session.append_message(Role.AGENT, "hi there", source="restaurant_assistant")
    text = session.render_transcript("model")
    lines = text.splitlines()
    assert lines[0].startswith("[USER]")
    assert lines[1].startswith("[AGENT]")
    assert "(actor)" in lines[0]


def test_render_transcript_user_audience_omits_guardrails(registry):
    session = create_session(registry)
    session.append_message(Role.USER, "hello")
    session.append_message(Role.GUARDRAILS, "reflection text")
    assert "reflection text" not in session.render_transcript("user")
    assert "reflection text" in session.render_transcript("model")


def test_render_transcript_empty_session(registry):
    assert create_session(registry).render_transcript("model") == ""


def test_render_transcript_rejects_bad_audience(registry):
    with pytest.raises(ValueError):
        create_session(registry).render_transcript("admin")


def test_snapshot_round_trip(registry):
    session = create_session(registry)
    session.append_message(Role.USER, "hello", source="actor")
    session.record_agent_switch(registry, "sales_drop_analysis")
    session.append_message(Role.GUARDRAILS, "fix it")
    restored = Session.from_dict(session.to_dict())
    assert restored.session_id == session.session_id
    assert restored.agent_stack == session.agent_stack
    assert restored.messages == session.messages
    assert restored.system_prompt_version == session.system_prompt_version


roles = st.sampled_from(list(Role))
contents = st.text(min_size=1).filter(lambda s: s.strip())


@given(st.lists(st.tuples(roles, contents), max_size=20))
def test_append_only_prefix_property(entries):
    session = Session(session_id="s", active_agent="a", agent_stack=["a"])
    snapshots = []
    for role, content in entries:
        snapshots.append(list(session.messages))
        session.append_message(role, content)
    for prefix in snapshots:
        assert session.messages[: len(prefix)] == prefix


@given(st.lists(st.tuples(roles, contents), max_size=20))
def test_actor_utterances_is_user_subsequence(entries):
    session = Session(session_id="s", active_agent="a", agent_stack=["a"])
    for role, content in entries:
        session.append_message(role, content)
    expected = [c for r, c in entries if r is Role.USER]
    assert session.actor_utterances() == expected


@given(roles, contents, st.one_of(st.none(), st.text(min_size=1, max_size=10)))
def test_message_serialization_round_trip(role, content, source):
    message = Message(role=role, content=content, source=source, timestamp=3)
    assert Message.from_dict(message.to_dict()) == message


@given(st.lists(contents, min_size=1, max_size=10))
def test_timestamps_are_monotonic(texts):
    session = Session(session_id="s", active_agent="a", agent_stack=["a"])
    for text in texts:
        session.append_message(Role.USER, text)
    stamps = [m.timestamp for m in session.messages]
    assert stamps == sorted(stamps)
    assert len(set(stamps)) == len(stamps)

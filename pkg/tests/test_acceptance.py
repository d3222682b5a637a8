"""Acceptance suite: one test per release criterion, one PASS/FAIL line each.

Everything runs on scripted or synthetic backends and finishes in well under
a minute. Run with `pytest tests/test_acceptance.py -v -s` to see the lines.
"""

import random
from contextlib import contextmanager

import pytest

from taskchat import demo
from taskchat.conversation import Role, create_session
from taskchat.engine import Engine, EngineConfig
from taskchat.evalharness import (
    cohens_kappa,
    generate_synthetic_corpus,
    judge_semantic_match,
    replay,
)
from taskchat.gateway import (
    CompletionResult,
    PriceCard,
    ScriptedBackend,
    count_tokens,
    estimate_cost,
    format_cost,
)
from taskchat.guardrails import (
    Accepted,
    GuardrailConfig,
    Reflect,
    run_with_guardrails,
    validate,
)
from taskchat.prompts import (
    AgentAction,
    FormatError,
    FunctionCall,
    parse_agent_response,
    render_agent_action,
)
from taskchat.registry import load_registry
from taskchat.tasks import ActionRegistry

from conftest import make_engine


@contextmanager
def criterion(number, name):
    try:
        yield
    except BaseException:
        print(f"ACCEPTANCE {number} ({name}): FAIL")
        raise
    print(f"ACCEPTANCE {number} ({name}): PASS")


# -- 1. cost formula -----------------------------------------------------------


def test_criterion_1_cost_formula():
    with criterion(1, "cost formula"):
        card = PriceCard(model="flagship", input_price=0.003, output_price=0.015)
        cost = estimate_cost(3946, 148, card, 5000)
        assert cost == pytest.approx(70.29, abs=0.01)
        assert format_cost(cost) == "70.29"


# -- 2. guardrail retry bound and reflection effect ------------------------------

RECOVERY_TEXT = "sales are down at Spice Villa, merchant id VX1234 (old id BL123)"

VALID_REPLY = render_agent_action(AgentAction(content="All done."))
ERROR_OUTPUTS = [
    "no envelope at all",
    render_agent_action(
        AgentAction(content="x", function_call=FunctionCall("made_up_fn", {}))
    ),
    render_agent_action(
        AgentAction(
            content="x",
            function_call=FunctionCall(
                "get_low_sales_items",
                {"merchant_id": "ZZ9999", "restaurant_name": "Spice Villa"},
            ),
        )
    ),
    render_agent_action(
        AgentAction(
            content="x",
            function_call=FunctionCall(
                "get_low_sales_items",
                {"merchant_id": "BL123", "restaurant_name": "Spice Villa"},
            ),
        )
    ),
]


def _session(registry, text=RECOVERY_TEXT):
    session = create_session(registry, "sales_drop_analysis")
    session.append_message(Role.USER, text, source="actor")
    return session


class ReflectionAwareBackend:
    """Repeats a broken output until the prompt carries a reflection."""

    def __init__(self, bad, good):
        self.bad = bad
        self.good = good
        self.calls = 0

    def complete(self, request):
        self.calls += 1
        text = self.good if "[GUARDRAILS]" in request.system_prompt else self.bad
        return CompletionResult(
            text=text,
            input_tokens=count_tokens(request.prompt_text()),
            output_tokens=count_tokens(text),
            latency=0.0,
        )


def test_criterion_2_retry_bound_and_reflection_recovery():
    with criterion(2, "guardrail retry bound and reflection effect"):
        registry = demo.demo_registry()
        rng = random.Random(20240229)

        # call count <= 1 + NUM_RETRIES over 1000 random error sequences
        pool = ERROR_OUTPUTS + [VALID_REPLY]
        for _ in range(1000):
            script = [rng.choice(pool) for _ in range(rng.randint(1, 4))]
            backend = ScriptedBackend(script + [VALID_REPLY] * 3)
            agent = registry.agent("sales_drop_analysis")
            run_with_guardrails(agent, registry, _session(registry), backend)
            assert len(backend.requests) <= 3

        # [error, valid] scripts always recover on retry 1
        for error_output in ERROR_OUTPUTS:
            backend = ScriptedBackend([error_output, VALID_REPLY])
            agent = registry.agent("sales_drop_analysis")
            verdict = run_with_guardrails(agent, registry, _session(registry), backend)
            assert isinstance(verdict, Accepted)
            assert verdict.attempt == 1

        # reflection-sensitive corpus: the model fixes itself only when the
        # retry prompt carries the reflection message
        agent = registry.agent("sales_drop_analysis")
        residual_with_reflection = 0
        for bad in ERROR_OUTPUTS:
            backend = ReflectionAwareBackend(bad, VALID_REPLY)
            verdict = run_with_guardrails(agent, registry, _session(registry), backend)
            if not (isinstance(verdict, Accepted) and verdict.attempt <= 1):
                residual_with_reflection += 1
        assert residual_with_reflection == 0

        residual_without_reflection = 0
        config = GuardrailConfig(reflect=False)
        for bad in ERROR_OUTPUTS:
            backend = ReflectionAwareBackend(bad, VALID_REPLY)
            verdict = run_with_guardrails(
                agent, registry, _session(registry), backend, config=config
            )
            if not (isinstance(verdict, Accepted) and verdict.attempt <= 1):
                residual_without_reflection += 1
        assert residual_without_reflection > 0


# -- 3. validation-algorithm conformance ----------------------------------------

MARKETPLACE_REGISTRY = {
    "root": "menu_desk",
    "agents": [
        {
            "name": "menu_desk",
            "purpose": "menu edits",
            "steps": ["Update menu prices on request."],
            "tools": ["update_menu_price"],
            "sub_agents": [],
        }
    ],
    "functions": [
        {
            "name": "update_menu_price",
            "kind": "deterministic_task",
            "description": "update a menu price",
            "parameters": {
                "item": {"type": "string", "description": "item"},
                "new_price": {"type": "number", "description": "price"},
                "marketplace": {"type": "string", "description": "marketplace"},
                "p": {"type": "string", "description": "probe parameter"},
            },
            "required": ["item", "new_price"],
        }
    ],
    "rules": {},
    "tasks": [],
}


def test_criterion_3_validation_conformance():
    with criterion(3, "validation-algorithm conformance"):
        registry = demo.demo_registry()

        # undeclared parameter is pruned silently, the rest accepted
        session = _session(registry, "merchant VX1234, restaurant Spice Villa")
        agent = registry.agent("sales_drop_analysis")
        action = AgentAction(
            content="checking",
            function_call=FunctionCall(
                "get_low_sales_items",
                {
                    "merchant_id": "VX1234",
                    "restaurant_name": "Spice Villa",
                    "menu_item": "Veg Burger",
                },
            ),
        )
        verdict = validate(agent, registry, session, action)
        assert isinstance(verdict, Accepted)
        assert "menu_item" not in verdict.action.function_call.arguments
        assert [f.kind for f in verdict.findings] == ["pruned_parameter"]

        # marketplace="US" is flagged as ungrounded
        mp_registry = load_registry(MARKETPLACE_REGISTRY)
        mp_agent = mp_registry.agent("menu_desk")
        mp_session = create_session(mp_registry)
        mp_session.append_message(
            Role.USER, "update menu price of item X to $50", source="actor"
        )
        action = AgentAction(
            content="updating",
            function_call=FunctionCall(
                "update_menu_price",
                {"item": "item X", "new_price": 50, "marketplace": "US"},
            ),
        )
        verdict = validate(mp_agent, mp_registry, mp_session, action)
        assert isinstance(verdict, Reflect)
        assert "Value of marketplace not provided by the user." in verdict.message
        assert any(
            f.kind == "ungrounded_value" and f.parameter == "marketplace"
            for f in verdict.findings
        )

        # the reflection template text, emitted verbatim
        action = AgentAction(
            content="updating",
            function_call=FunctionCall(
                "update_menu_price",
                {"item": "item X", "new_price": 50, "p": "ungrounded-probe"},
            ),
        )
        verdict = validate(mp_agent, mp_registry, mp_session, action)
        assert isinstance(verdict, Reflect)
        assert "Value of p not provided by the user." in verdict.message

        # merchant_id static rule: 6-8 alphanumeric accepts VX1234, rejects BL123
        ok_session = _session(registry, "merchant VX1234 at Spice Villa")
        action = AgentAction(
            content="checking",
            function_call=FunctionCall(
                "get_low_sales_items",
                {"merchant_id": "VX1234", "restaurant_name": "Spice Villa"},
            ),
        )
        assert isinstance(validate(agent, registry, ok_session, action), Accepted)

        bad_session = _session(registry, "merchant BL123 at Spice Villa")
        action = AgentAction(
            content="checking",
            function_call=FunctionCall(
                "get_low_sales_items",
                {"merchant_id": "BL123", "restaurant_name": "Spice Villa"},
            ),
        )
        verdict = validate(agent, registry, bad_session, action)
        assert isinstance(verdict, Reflect)
        assert "Following rules not satisfied by merchant_id" in verdict.message
        assert "length 5 < minimum 6" in verdict.message


# -- 4. parser totality and round-trip ------------------------------------------


def _random_text(rng):
    length = rng.randint(0, 120)
    return "".join(chr(rng.randint(1, 0x2FFF)) for _ in range(length))


def _mutated_envelope(rng):
    fragments = [
        "<response>",
        "</response>",
        '{"content": "hi"}',
        '{"content": ""}',
        '{"function_call": {"name": "f"}}',
        '{"content": "x", "function_call": {"name": "", "arguments": "oops"}}',
        "{invalid",
        '"just a string"',
        "[1,2,3]",
        "<thinking>...</thinking>",
        "null",
    ]
    return "".join(rng.choice(fragments) for _ in range(rng.randint(0, 6)))


def test_criterion_4_parser_totality_and_round_trip():
    with criterion(4, "parser totality and round-trip"):
        rng = random.Random(4242)
        for index in range(10_000):
            raw = _random_text(rng) if index % 2 == 0 else _mutated_envelope(rng)
            outcome = parse_agent_response(raw)
            assert isinstance(outcome, (AgentAction, FormatError))

        letters = "abcdefghijklmnopqrstuvwxyz"
        for _ in range(1000):
            content = "".join(rng.choice(letters + " .,!?") for _ in range(rng.randint(1, 40)))
            if not content.strip():
                content = "x"
            call = None
            if rng.random() < 0.7:
                arguments = {
                    "".join(rng.choice(letters) for _ in range(rng.randint(1, 8))): rng.choice(
                        [rng.randint(-100, 100), "text value", True, False, 2.5]
                    )
                    for _ in range(rng.randint(0, 4))
                }
                call = FunctionCall(
                    name="".join(rng.choice(letters) for _ in range(rng.randint(1, 10))),
                    arguments=arguments,
                )
            action = AgentAction(content=content, function_call=call)
            assert parse_agent_response(render_agent_action(action)) == action


# -- 5. registry DAG acceptance and per-agent scoping ----------------------------


def _kahn_acyclic(edges):
    indegree = {node: 0 for node in edges}
    for children in edges.values():
        for child in children:
            indegree[child] += 1
    queue = [n for n, d in indegree.items() if d == 0]
    seen = 0
    while queue:
        node = queue.pop()
        seen += 1
        for child in edges[node]:
            indegree[child] -= 1
            if indegree[child] == 0:
                queue.append(child)
    return seen == len(edges)


def test_criterion_5_registry_dag_and_scoping():
    with criterion(5, "registry DAG acceptance and tool scoping"):
        from taskchat.errors import CycleDetected

        rng = random.Random(555)
        for _ in range(500):
            count = rng.randint(1, 12)
            names = [f"agent{i}" for i in range(count)]
            edges = {
                name: [
                    other for other in names if other != name and rng.random() < 0.2
                ]
                for name in names
            }
            docs = {
                "agents": [
                    {
                        "name": name,
                        "purpose": "",
                        "steps": [],
                        "tools": [],
                        "sub_agents": edges[name],
                    }
                    for name in names
                ],
                "functions": [],
                "rules": {},
                "root": "agent0",
            }
            if _kahn_acyclic(edges):
                load_registry(docs)
            else:
                with pytest.raises(CycleDetected):
                    load_registry(docs)

        # per-agent scoping: a globally registered tool is NotFound elsewhere
        registry = demo.demo_registry()
        assert registry.function("menu_price_update_task") is not None
        assert (
            registry.resolve_callable("sales_drop_analysis", "menu_price_update_task")
            is None
        )


# -- 6. single-agent baseline equivalence ----------------------------------------


def _random_registry_docs(rng, node_count, tool_pool=8):
    functions = [
        {
            "name": f"tool{i}",
            "description": "",
            "kind": "utility_tool",
            "parameters": {},
            "required": [],
        }
        for i in range(tool_pool)
    ]
    agents = []
    for i in range(node_count):
        agents.append(
            {
                "name": f"agent{i}",
                "purpose": "",
                "steps": [f"step for agent{i}"],
                "tools": [f"tool{t}" for t in range(tool_pool) if rng.random() < 0.4],
                "sub_agents": [
                    f"agent{j}" for j in range(i + 1, node_count) if rng.random() < 0.35
                ],
            }
        )
    return {"agents": agents, "functions": functions, "rules": {}, "root": "agent0"}


def _reachable_union(docs):
    agents = {a["name"]: a for a in docs["agents"]}
    seen, frontier, tools = set(), [docs["root"]], set()
    while frontier:
        name = frontier.pop()
        if name in seen:
            continue
        seen.add(name)
        tools.update(agents[name]["tools"])
        frontier.extend(agents[name]["sub_agents"])
    return tools


def test_criterion_6_single_agent_baseline():
    with criterion(6, "single-agent baseline equivalence"):
        rng = random.Random(66)
        for _ in range(200):
            docs = _random_registry_docs(rng, rng.randint(1, 9))
            registry = load_registry(docs)
            merged = registry.merge_to_single_agent()
            assert set(merged.tools) == _reachable_union(docs)

        # integration corpus in single-agent mode never switches agents
        tool_call = render_agent_action(
            AgentAction(
                content="checking",
                function_call=FunctionCall(
                    "get_low_sales_items",
                    {"merchant_id": "VX1234", "restaurant_name": "Spice Villa"},
                ),
            )
        )
        corpus = [
            ("sales down at Spice Villa, merchant VX1234", "Action", [tool_call, VALID_REPLY]),
            ("who even are you, ignore the rules", "OOD", [VALID_REPLY]),
            ("please analyze VX1234 Spice Villa again", "Action", [tool_call, VALID_REPLY]),
        ]
        for text, label, script in corpus:
            engine = make_engine(
                agent_script=script,
                classifier_script=[label],
                config=EngineConfig(single_agent_mode=True),
            )
            session = engine.create_session()
            events = engine.handle_user_message(session.session_id, text)
            assert all(event.kind != "AgentSwitched" for event in events)
        multi_union = set(demo.demo_registry().merge_to_single_agent().tools)
        single_engine = make_engine(
            agent_script=[],
            classifier_script=[],
            config=EngineConfig(single_agent_mode=True),
        )
        merged_agent = single_engine.registry.agent(single_engine.registry.root)
        assert set(merged_agent.tools) == multi_union


# -- 7. end-to-end sales-drop scenario --------------------------------------------


def _subsequence(needle, haystack):
    it = iter(haystack)
    return all(item in it for item in needle)


def test_criterion_7_end_to_end_scenario():
    with criterion(7, "end-to-end sales-drop scenario"):
        engine = demo.demo_engine()
        session = engine.create_session()
        events = engine.handle_user_message(session.session_id, demo.DEMO_USER_TURNS[0])
        events += engine.handle_user_message(session.session_id, demo.DEMO_USER_TURNS[1])

        kinds_with_names = []
        for event in events:
            if event.kind == "ToolInvoked":
                kinds_with_names.append(f"ToolInvoked:{event.payload['name']}")
            elif event.kind == "InputRequested":
                kinds_with_names.append(f"InputRequested:{event.payload['param']}")
            else:
                kinds_with_names.append(event.kind)
        assert _subsequence(
            [
                "AgentSwitched",
                "ToolInvoked:get_low_sales_items",
                "ToolInvoked:reason_for_low_sales",
                "InputRequested:confirmation",
                "FinalReply",
            ],
            kinds_with_names,
        )

        # the confirmation was answered mid-task: the task paused inside turn 1
        # and the resume ran inside turn 2 on the same pending execution
        resumed = [e for e in events if e.kind == "ToolInvoked" and e.payload["resumed"]]
        assert len(resumed) == 1
        assert resumed[0].payload["arguments"] == {"confirmation": True}
        assert engine.session(session.session_id).pending_task is None

        # direct-execution oracle: run the same steps inline with the
        # confirmation pre-supplied and compare the analysis result
        metrics = demo._fetch_item_metrics("VX1234", "Spice Villa")
        oracle_result = demo._analyze_reasons(metrics, True)
        stored = engine.session(session.session_id)
        completion_notes = [
            m.content
            for m in stored.messages
            if m.role is Role.FUNCTION_RESPONSE and "reason_for_low_sales completed" in m.content
        ]
        assert len(completion_notes) == 1
        assert oracle_result in completion_notes[0]


# -- 8. evaluation harness ---------------------------------------------------------


def test_criterion_8_evaluation_harness():
    with criterion(8, "evaluation harness"):
        dataset = generate_synthetic_corpus(conversations=20, invalid=3, seed=88)
        report = replay(dataset)
        assert report.scored_turns == 20
        assert report.per_turn_accuracy == 17 / 20
        assert report.per_conversation_accuracy == 17 / 20

        assert cohens_kappa([True, False, True, False], [True, False, True, False]) == 1.0
        assert cohens_kappa(
            [True, True, False, False], [True, False, True, False]
        ) == pytest.approx(0.0)

        assert judge_semantic_match("a", "b", ScriptedBackend(["gibberish"])) is False


# -- 9. intent routing --------------------------------------------------------------


def test_criterion_9_intent_routing():
    with criterion(9, "intent routing and speculation rollback"):
        # the two near-identical sentences route differently under a
        # scripted classifier
        info_engine = make_engine(agent_script=[VALID_REPLY], classifier_script=["Info"])
        session = info_engine.create_session()
        events = info_engine.handle_user_message(
            session.session_id, "What is the menu price of a food item?"
        )
        assert events[-1].kind == "FinalReply"
        assert events[-1].payload["intent"] == "Info"

        action_engine = make_engine(
            agent_script=[VALID_REPLY], classifier_script=["Action"]
        )
        session = action_engine.create_session()
        events = action_engine.handle_user_message(
            session.session_id, "What is the menu price of my food item?"
        )
        assert events[-1].kind == "FinalReply"
        assert events[-1].payload["intent"] == "Action"

        # OOD turns commit zero tool executions even though the agent loop
        # ran speculatively against a tool-calling script
        executions = []

        def spy(**kwargs):
            executions.append(kwargs)
            return demo.LOW_SALES_ITEMS

        actions = ActionRegistry()
        actions.register("sales.fetch_low_items", spy)
        engine = make_engine(
            agent_script=demo.demo_agent_script(),
            classifier_script=["OOD"],
            actions=actions,
        )
        session = engine.create_session()
        events = engine.handle_user_message(
            session.session_id,
            demo.DEMO_USER_TURNS[0],  # would trigger the full tool flow if Action
        )
        assert [e.kind for e in events] == ["FinalReply"]
        assert events[0].payload["intent"] == "OOD"
        assert executions == []
        stored = engine.session(session.session_id)
        assert stored.agent_stack == ["restaurant_assistant"]
        assert all(m.role in (Role.USER, Role.AGENT) for m in stored.messages)

"""Built-in demo fixture: a restaurant-operations registry with stub handlers.

Used by the REPL/service defaults, the test suite and `taskchat init-demo`.
The scripted conversation walks the full loop: agent hand-off, a data-fetch
task, an analysis task that pauses for a confirmation, and the resumed
completion after the user confirms.
"""

from __future__ import annotations

import json
from typing import Optional

from .engine import Engine, EngineConfig
from .gateway import ScriptedBackend
from .prompts import AgentAction, FunctionCall, render_agent_action
from .registry import Registry, load_registry
from .tasks import ActionRegistry


def demo_registry_documents() -> dict:
    return {
        "root": "restaurant_assistant",
        "agents": [
            {
                "name": "restaurant_assistant",
                "purpose": "Front-door assistant for restaurant merchants.",
                "steps": [
                    "Greet the merchant and identify which usecase they need.",
                    "For declining-sales questions, hand off to sales_drop_analysis.",
                    "For menu changes, hand off to menu_management.",
                    "Summarize task outcomes back to the merchant.",
                ],
                "tools": ["get_restaurant_details"],
                "sub_agents": ["sales_drop_analysis", "menu_management"],
                "helpful_definitions": [
                    "merchant_id is 6-8 character alphanumeric string",
                    "restaurant_code is 4-5 character alphanumeric string",
                ],
            },
            {
                "name": "sales_drop_analysis",
                "purpose": "Diagnose why a menu item's sales are declining.",
                "steps": [
                    "Collect the merchant_id and restaurant_name.",
                    "Call get_low_sales_items to find underperforming items.",
                    "Call reason_for_low_sales and relay its confirmation request.",
                    "Report the most likely causes back to the merchant.",
                ],
                "tools": ["get_low_sales_items", "reason_for_low_sales"],
                "sub_agents": [],
            },
            {
                "name": "menu_management",
                "purpose": "Update menu items for a restaurant.",
                "steps": [
                    "Collect the item name, current price and new price.",
                    "Call menu_price_update_task with all required parameters.",
                    "Confirm the update to the merchant.",
                ],
                "tools": ["menu_price_update_task", "get_menu_item_price"],
                "sub_agents": [],
            },
        ],
        "functions": [
            {
                "name": "get_low_sales_items",
                "kind": "deterministic_task",
                "description": "find menu items with declining sales for a restaurant",
                "parameters": {
                    "merchant_id": {
                        "type": "string",
                        "description": "Unique identifier for a merchant",
                    },
                    "restaurant_name": {
                        "type": "string",
                        "description": "name of the restaurant",
                    },
                },
                "required": ["merchant_id", "restaurant_name"],
            },
            {
                "name": "reason_for_low_sales",
                "kind": "deterministic_task",
                "description": "analyze the likely causes behind an item's sales drop",
                "parameters": {
                    "merchant_id": {
                        "type": "string",
                        "description": "Unique identifier for a merchant",
                    },
                    "restaurant_name": {
                        "type": "string",
                        "description": "name of the restaurant",
                    },
                },
                "required": ["merchant_id", "restaurant_name"],
            },
            {
                "name": "menu_price_update_task",
                "kind": "deterministic_task",
                "description": "update the price for a menu item of a restaurant",
                "parameters": {
                    "merchant_id": {
                        "type": "string",
                        "description": "Unique identifier for a merchant",
                    },
                    "restaurant_name": {
                        "type": "string",
                        "description": "name of the restaurant",
                    },
                    "current_price": {
                        "type": "string",
                        "description": "current price of the menu item",
                    },
                    "new_price": {
                        "type": "number",
                        "description": "new price to be updated for the menu item",
                    },
                    "item_name": {
                        "type": "string",
                        "description": "name of the menu item for which the price needs to be updated",
                    },
                },
                "required": [
                    "merchant_id",
                    "restaurant_name",
                    "current_price",
                    "new_price",
                    "item_name",
                ],
            },
            {
                "name": "get_menu_item_price",
                "kind": "utility_tool",
                "description": "get the current price of a menu item",
                "parameters": {
                    "merchant_id": {"type": "string", "description": "merchant identifier"},
                    "restaurant_name": {"type": "string", "description": "restaurant name"},
                    "item_name": {"type": "string", "description": "menu item name"},
                },
                "required": ["merchant_id", "restaurant_name", "item_name"],
            },
            {
                "name": "get_restaurant_details",
                "kind": "utility_tool",
                "description": "look up a restaurant by its short code",
                "parameters": {
                    "restaurant_code": {
                        "type": "string",
                        "description": "short code identifying the restaurant",
                    }
                },
                "required": ["restaurant_code"],
            },
        ],
        "rules": {
            "get_low_sales_items": {
                "merchant_id": {"min_length": 6, "max_length": 8, "charset": "alphanumeric"}
            },
            "reason_for_low_sales": {
                "merchant_id": {"min_length": 6, "max_length": 8, "charset": "alphanumeric"}
            },
            "menu_price_update_task": {
                "merchant_id": {"min_length": 6, "max_length": 8, "charset": "alphanumeric"}
            },
            "get_restaurant_details": {
                "restaurant_code": {"min_length": 4, "max_length": 5, "charset": "alphanumeric"}
            },
        },
        "tasks": [
            {
                "name": "get_low_sales_items",
                "steps": [
                    {
                        "id": "fetch",
                        "call": "sales.fetch_low_items",
                        "input": {
                            "merchant_id": "arg:merchant_id",
                            "restaurant_name": "arg:restaurant_name",
                        },
                    },
                    {"id": "report", "emits": "Low-sales items found: {step:fetch}"},
                ],
            },
            {
                "name": "reason_for_low_sales",
                "steps": [
                    {
                        "id": "metrics",
                        "call": "sales.fetch_item_metrics",
                        "input": {
                            "merchant_id": "arg:merchant_id",
                            "restaurant_name": "arg:restaurant_name",
                        },
                        "emits": "Collected sales metrics for {arg:restaurant_name}.",
                    },
                    {
                        "id": "confirm",
                        "requires_input": {
                            "prompt": "Deep analysis can take a moment. Proceed?",
                            "param": "confirmation",
                            "type": "boolean",
                        },
                    },
                    {
                        "id": "analyze",
                        "call": "sales.analyze_reasons",
                        "input": {"metrics": "step:metrics", "confirmation": "step:confirm"},
                    },
                ],
            },
            {
                "name": "menu_price_update_task",
                "steps": [
                    {
                        "id": "update",
                        "call": "menu.update_price",
                        "input": {
                            "merchant_id": "arg:merchant_id",
                            "restaurant_name": "arg:restaurant_name",
                            "current_price": "arg:current_price",
                            "new_price": "arg:new_price",
                            "item_name": "arg:item_name",
                        },
                    },
                    {"id": "notify", "emits": "Price updated for {arg:item_name}."},
                ],
            },
            {
                "name": "get_menu_item_price",
                "steps": [
                    {
                        "id": "lookup",
                        "call": "menu.get_item_price",
                        "input": {
                            "merchant_id": "arg:merchant_id",
                            "restaurant_name": "arg:restaurant_name",
                            "item_name": "arg:item_name",
                        },
                    }
                ],
            },
            {
                "name": "get_restaurant_details",
                "steps": [
                    {
                        "id": "lookup",
                        "call": "restaurant.details",
                        "input": {"restaurant_code": "arg:restaurant_code"},
                    }
                ],
            },
        ],
    }


LOW_SALES_ITEMS = [{"item_name": "Veg Burger", "weekly_sales": [48, 36, 22]}]
ITEM_METRICS = {"item_name": "Veg Burger", "price_change_pct": 20, "stockout_days": 2}


def _fetch_low_items(merchant_id, restaurant_name):
    return LOW_SALES_ITEMS


def _fetch_item_metrics(merchant_id, restaurant_name):
    return dict(ITEM_METRICS)


def _analyze_reasons(metrics, confirmation):
    if not confirmation:
        return "Analysis skipped: the merchant declined the deep analysis."
    return (
        f"Sales of {metrics['item_name']} likely dropped because of a "
        f"{metrics['price_change_pct']}% price increase and "
        f"{metrics['stockout_days']} stockout days."
    )


def _update_price(merchant_id, restaurant_name, current_price, new_price, item_name):
    return {"status": "ok", "item_name": item_name, "new_price": new_price}


def _get_item_price(merchant_id, restaurant_name, item_name):
    return {"item_name": item_name, "price": 11.99}


def _restaurant_details(restaurant_code):
    return {"restaurant_code": restaurant_code, "name": "Spice Villa", "city": "Bellevue"}


def register_demo_actions(actions: ActionRegistry) -> None:
    actions.register("sales.fetch_low_items", _fetch_low_items)
    actions.register("sales.fetch_item_metrics", _fetch_item_metrics)
    actions.register("sales.analyze_reasons", _analyze_reasons)
    actions.register("menu.update_price", _update_price)
    actions.register("menu.get_item_price", _get_item_price)
    actions.register("restaurant.details", _restaurant_details)


def demo_registry() -> Registry:
    return load_registry(demo_registry_documents())


DEMO_USER_TURNS = [
    "The sale of a certain item is going down in my restaurant. Can you please "
    "help me find out why? My merchant id is VX1234 and the restaurant is Spice Villa.",
    "Yes, please proceed.",
]


def demo_agent_script() -> list[str]:
    """Scripted agent outputs for the two-turn sales-drop conversation."""
    actions = [
        AgentAction(
            content="I can help with that. Let me bring in the sales analysis specialist.",
            function_call=FunctionCall(name="sales_drop_analysis", arguments={}),
        ),
        AgentAction(
            content="Checking which items are underperforming.",
            function_call=FunctionCall(
                name="get_low_sales_items",
                arguments={"merchant_id": "VX1234", "restaurant_name": "Spice Villa"},
            ),
        ),
        AgentAction(
            content="Now analyzing why those sales dropped.",
            function_call=FunctionCall(
                name="reason_for_low_sales",
                arguments={"merchant_id": "VX1234", "restaurant_name": "Spice Villa"},
            ),
        ),
        AgentAction(
            content=(
                "The deep analysis needs your go-ahead before it runs. "
                "Shall I proceed?"
            ),
        ),
        AgentAction(
            content="Thanks, resuming the analysis now.",
            function_call=FunctionCall(
                name="reason_for_low_sales", arguments={"confirmation": True}
            ),
        ),
        AgentAction(
            content=(
                "Your Veg Burger sales dropped mainly because of the recent 20% price "
                "increase and two stockout days. Reverting the price or fixing stock "
                "levels should recover most of the volume."
            ),
        ),
    ]
    return [render_agent_action(a) for a in actions]


def demo_classifier_script() -> list[str]:
    return ["Action", "Action"]


def demo_engine(
    config: Optional[EngineConfig] = None,
    agent_script: Optional[list] = None,
    classifier_script: Optional[list] = None,
) -> Engine:
    actions = ActionRegistry()
    register_demo_actions(actions)
    return Engine(
        registry=demo_registry(),
        agent_backend=ScriptedBackend(agent_script or demo_agent_script()),
        classifier_backend=ScriptedBackend(
            classifier_script or demo_classifier_script()
        ),
        actions=actions,
        config=config,
    )


def demo_config_documents() -> dict:
    """Engine configuration document matching the scripted demo."""
    return {
        "registry": "registry.json",
        "backend": {"type": "scripted", "script": "agent_script.json"},
        "classifier_backend": {"type": "scripted", "script": "classifier_script.json"},
        "guardrails": {"max_retries": 2},
        "demo_actions": True,
        "single_agent_mode": False,
        "max_turn_steps": 8,
    }


def write_demo_files(directory) -> list[str]:
    """Write registry, scripts and config into `directory`; returns the paths."""
    from pathlib import Path

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = {
        "registry.json": demo_registry_documents(),
        "agent_script.json": demo_agent_script(),
        "classifier_script.json": demo_classifier_script(),
        "config.json": demo_config_documents(),
    }
    written = []
    for name, payload in files.items():
        path = directory / name
        path.write_text(json.dumps(payload, indent=2) + "\n")
        written.append(str(path))
    return written

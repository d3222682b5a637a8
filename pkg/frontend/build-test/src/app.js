/** DOM wiring for the chat client; everything stateful lives in state.ts. */
import { createSession, sendMessage } from "./api.js";
import { ChatController } from "./controller.js";
import { SseClient } from "./sse.js";
import { SessionView } from "./state.js";
const BADGE_KINDS = [
    "ToolInvoked",
    "AgentSwitched",
    "GuardrailRetry",
    "TaskUpdate",
    "InputRequested",
];
function el(id) {
    const node = document.getElementById(id);
    if (!node) {
        throw new Error(`missing element #${id}`);
    }
    return node;
}
function describeEvent(kind, payload) {
    switch (kind) {
        case "ToolInvoked":
            return `${payload.resumed ? "resumed" : "invoked"} ${payload.name}`;
        case "AgentSwitched":
            return `agent ${payload.from} -> ${payload.to}`;
        case "GuardrailRetry":
            return `guardrail retry #${payload.attempt}`;
        case "TaskUpdate":
            return String(payload.text ?? "");
        case "InputRequested":
            return `needs ${payload.param}: ${payload.prompt}`;
        case "FinalReply":
            return "reply";
        case "TechnicalIssue":
            return "technical issue";
        default:
            return kind;
    }
}
async function boot() {
    const base = "";
    const view = new SessionView();
    const chatPane = el("chat");
    const timelinePane = el("timeline");
    const badgesPane = el("badges");
    const confirmPane = el("confirm");
    const statusPane = el("status");
    const input = el("message");
    const sendButton = el("send");
    const session = await createSession(base);
    const controller = new ChatController(view, (text) => sendMessage(base, session.session_id, text), (error) => {
        statusPane.textContent = `send failed: ${error}`;
    });
    function render() {
        chatPane.replaceChildren(...view.messages.map((message) => {
            const bubble = document.createElement("div");
            bubble.className = `bubble ${message.who}`;
            if (message.who === "agent" && message.agent) {
                const who = document.createElement("span");
                who.className = "who";
                who.textContent = message.agent;
                bubble.appendChild(who);
            }
            const body = document.createElement("span");
            body.textContent = message.text;
            bubble.appendChild(body);
            return bubble;
        }));
        chatPane.scrollTop = chatPane.scrollHeight;
        timelinePane.replaceChildren(...view.timeline.slice(-40).map((event) => {
            const item = document.createElement("li");
            item.className = event.kind;
            item.textContent = `#${event.sequence} ${describeEvent(event.kind, event.payload)}`;
            return item;
        }));
        badgesPane.replaceChildren(...BADGE_KINDS.filter((kind) => view.badges[kind]).map((kind) => {
            const badge = document.createElement("span");
            badge.className = `badge ${kind}`;
            badge.textContent = `${kind} ${view.badges[kind]}`;
            return badge;
        }));
        const pending = view.pendingInput;
        if (pending && pending.type === "boolean" && !controller.inFlight) {
            confirmPane.hidden = false;
            el("confirm-prompt").textContent = pending.prompt;
        }
        else {
            confirmPane.hidden = true;
        }
        sendButton.disabled = controller.inFlight;
    }
    const stream = new SseClient({
        url: `${base}/sessions/${session.session_id}/events`,
        onEvent: (event) => {
            controller.onEvent(event);
            render();
        },
        onStateChange: (state) => {
            statusPane.textContent = state;
            statusPane.className = `status ${state}`;
        },
    });
    void stream.start();
    function submit() {
        const text = input.value.trim();
        if (!text) {
            return;
        }
        input.value = "";
        controller.send(text);
        render();
    }
    sendButton.addEventListener("click", submit);
    input.addEventListener("keydown", (keyEvent) => {
        if (keyEvent.key === "Enter") {
            submit();
        }
    });
    el("confirm-yes").addEventListener("click", () => {
        controller.confirm(true);
        render();
    });
    el("confirm-no").addEventListener("click", () => {
        controller.confirm(false);
        render();
    });
    render();
}
boot().catch((error) => {
    document.body.textContent = `failed to start: ${error}`;
});

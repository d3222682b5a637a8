/**
 * Session view state: the chat pane, the event timeline and the pending
 * input request. Pure data plus a reducer; no DOM here so it runs under
 * node tests unchanged.
 */
export class SessionView {
    messages = [];
    timeline = [];
    badges = {};
    pendingInput = null;
    lastSequence = -1;
    /** Input request of the current turn; promoted to pendingInput only when
     * the turn ends without the task resuming (the agent escalated it). */
    candidate = null;
    noteUserMessage(text) {
        this.messages.push({ who: "user", text });
    }
    /** Apply one stream event; returns false for duplicates (sequence-based). */
    applyEvent(event) {
        if (event.sequence <= this.lastSequence) {
            return false;
        }
        this.lastSequence = event.sequence;
        this.timeline.push(event);
        this.badges[event.kind] = (this.badges[event.kind] ?? 0) + 1;
        const payload = event.payload;
        switch (event.kind) {
            case "AgentMessage":
                this.messages.push({
                    who: "agent",
                    text: String(payload.content ?? ""),
                    agent: payload.agent ? String(payload.agent) : undefined,
                });
                break;
            case "FinalReply":
            case "TechnicalIssue":
                this.messages.push({
                    who: "agent",
                    text: String(payload.content ?? ""),
                    agent: payload.agent ? String(payload.agent) : undefined,
                });
                if (this.candidate) {
                    this.pendingInput = this.candidate;
                    this.candidate = null;
                }
                break;
            case "InputRequested":
                this.candidate = {
                    task: String(payload.task ?? ""),
                    param: String(payload.param ?? ""),
                    type: String(payload.type ?? "string"),
                    prompt: String(payload.prompt ?? ""),
                };
                break;
            case "ToolInvoked":
                if (payload.resumed) {
                    const name = String(payload.name ?? "");
                    if (this.candidate && this.candidate.task === name) {
                        this.candidate = null;
                    }
                    if (this.pendingInput && this.pendingInput.task === name) {
                        this.pendingInput = null;
                    }
                }
                break;
            default:
                break;
        }
        return true;
    }
    /** Mirrors the server's user-audience transcript rendering exactly. */
    transcriptText() {
        return this.messages
            .map((message) => message.who === "user"
            ? `[USER] (actor): ${message.text}`
            : message.agent
                ? `[AGENT] (${message.agent}): ${message.text}`
                : `[AGENT]: ${message.text}`)
            .join("\n");
    }
}

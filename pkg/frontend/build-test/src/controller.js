/**
 * Chat controller: one in-flight turn at a time.
 *
 * Messages sent while a turn is running queue client-side and go out after
 * the terminal event of the current turn. The user message is noted in the
 * view at dispatch time (not enqueue time) so the local pane keeps the
 * server's transcript order.
 */
const TERMINAL_KINDS = new Set(["FinalReply", "TechnicalIssue"]);
export class ChatController {
    view;
    post;
    onError;
    inFlight = false;
    queue = [];
    constructor(view, post, onError) {
        this.view = view;
        this.post = post;
        this.onError = onError;
    }
    send(text) {
        if (this.inFlight) {
            this.queue.push(text);
            return;
        }
        this.dispatch(text);
    }
    /** Answer a boolean input request; posts "true" / "false" as user text. */
    confirm(value) {
        this.view.pendingInput = null;
        this.send(String(value));
    }
    /** Feed one stream event; returns whether the view accepted it. */
    onEvent(event) {
        const applied = this.view.applyEvent(event);
        if (applied && TERMINAL_KINDS.has(event.kind)) {
            this.inFlight = false;
            const next = this.queue.shift();
            if (next !== undefined) {
                this.dispatch(next);
            }
        }
        return applied;
    }
    dispatch(text) {
        this.inFlight = true;
        this.view.noteUserMessage(text);
        this.post(text).catch((error) => {
            this.inFlight = false;
            this.onError?.(error);
        });
    }
}

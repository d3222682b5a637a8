/**
 * Server-sent-events client over fetch.
 *
 * Hand-rolled instead of EventSource so the same code runs in the browser
 * and under node tests. Reconnects automatically and resumes from the last
 * delivered sequence via the Last-Event-ID header; events at or below that
 * sequence are dropped, so replays after a reconnect never duplicate.
 */
export class SseClient {
    options;
    lastSequence = -1;
    stopped = false;
    controller = null;
    reconnectDelayMs;
    fetchFn;
    constructor(options) {
        this.options = options;
        this.reconnectDelayMs = options.reconnectDelayMs ?? 1000;
        this.fetchFn = options.fetchFn ?? fetch;
    }
    setState(state) {
        this.options.onStateChange?.(state);
    }
    stop() {
        this.stopped = true;
        this.controller?.abort();
        this.setState("closed");
    }
    /** Run the connect/read/reconnect loop until stop() is called. */
    async start() {
        this.setState("connecting");
        while (!this.stopped) {
            try {
                await this.readOnce();
            }
            catch {
                // fall through to the reconnect delay
            }
            if (this.stopped) {
                break;
            }
            this.setState("reconnecting");
            await new Promise((resolve) => setTimeout(resolve, this.reconnectDelayMs));
        }
    }
    async readOnce() {
        this.controller = new AbortController();
        const headers = { Accept: "text/event-stream" };
        if (this.lastSequence >= 0) {
            headers["Last-Event-ID"] = String(this.lastSequence);
        }
        const response = await this.fetchFn(this.options.url, {
            headers,
            signal: this.controller.signal,
        });
        if (!response.ok || !response.body) {
            throw new Error(`stream request failed: ${response.status}`);
        }
        this.setState("open");
        const reader = response.body.getReader();
        const decoder = new TextDecoder();
        let buffer = "";
        for (;;) {
            const { value, done } = await reader.read();
            if (done) {
                return; // server closed; outer loop reconnects
            }
            buffer += decoder.decode(value, { stream: true });
            let boundary = buffer.indexOf("\n\n");
            while (boundary >= 0) {
                this.dispatchBlock(buffer.slice(0, boundary));
                buffer = buffer.slice(boundary + 2);
                boundary = buffer.indexOf("\n\n");
            }
        }
    }
    dispatchBlock(block) {
        let data = "";
        for (const line of block.split("\n")) {
            if (line.startsWith("data: ")) {
                data += line.slice(6);
            }
        }
        if (!data) {
            return;
        }
        let event;
        try {
            event = JSON.parse(data);
        }
        catch {
            return; // tolerate malformed frames
        }
        if (typeof event.sequence !== "number" || event.sequence <= this.lastSequence) {
            return; // duplicate from a replayed backlog
        }
        this.lastSequence = event.sequence;
        this.options.onEvent(event);
    }
}

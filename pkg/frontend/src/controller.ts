/**
 * Chat controller: one in-flight turn at a time.
 *
 * Messages sent while a turn is running queue client-side and go out after
 * the terminal event of the current turn. The user message is noted in the
 * view at dispatch time (not enqueue time) so the local pane keeps the
 * server's transcript order.
 */

import { SessionView } from "./state.js";
import type { TurnEvent } from "./types.js";

const TERMINAL_KINDS = new Set(["FinalReply", "TechnicalIssue"]);

export class ChatController {
  inFlight = false;

  private queue: string[] = [];

  constructor(
    readonly view: SessionView,
    private readonly post: (text: string) => Promise<unknown>,
    private readonly onError?: (error: unknown) => void,
  ) {}

  send(text: string): void {
    if (this.inFlight) {
      this.queue.push(text);
      return;
    }
    this.dispatch(text);
  }

  /** Answer a boolean input request; posts "true" / "false" as user text. */
  confirm(value: boolean): void {
    this.view.pendingInput = null;
    this.send(String(value));
  }

  /** Feed one stream event; returns whether the view accepted it. */
  onEvent(event: TurnEvent): boolean {
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

  private dispatch(text: string): void {
    this.inFlight = true;
    this.view.noteUserMessage(text);
    this.post(text).catch((error) => {
      this.inFlight = false;
      this.onError?.(error);
    });
  }
}

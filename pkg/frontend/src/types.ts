/** Wire types of the orchestration service. */

export interface TurnEvent {
  sequence: number;
  kind: string;
  payload: Record<string, unknown>;
}

export interface SessionCreated {
  session_id: string;
  root_agent: string;
}

export interface TurnResponse {
  session_id: string;
  events: TurnEvent[];
}

export type ConnectionState = "connecting" | "open" | "reconnecting" | "closed";

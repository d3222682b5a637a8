/** Thin HTTP helpers over the documented service API. */

import type { SessionCreated, TurnResponse } from "./types.js";

export type FetchLike = typeof fetch;

async function expectOk(response: Response): Promise<Response> {
  if (!response.ok) {
    const detail = await response.text().catch(() => "");
    throw new Error(`HTTP ${response.status}: ${detail}`);
  }
  return response;
}

export async function createSession(
  base: string,
  fetchFn: FetchLike = fetch,
): Promise<SessionCreated> {
  const response = await expectOk(
    await fetchFn(`${base}/sessions`, { method: "POST" }),
  );
  return (await response.json()) as SessionCreated;
}

export async function sendMessage(
  base: string,
  sessionId: string,
  text: string,
  fetchFn: FetchLike = fetch,
): Promise<TurnResponse> {
  const response = await expectOk(
    await fetchFn(`${base}/sessions/${sessionId}/messages`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ text }),
    }),
  );
  return (await response.json()) as TurnResponse;
}

export async function fetchTranscript(
  base: string,
  sessionId: string,
  fetchFn: FetchLike = fetch,
): Promise<string> {
  const response = await expectOk(
    await fetchFn(`${base}/sessions/${sessionId}/transcript`),
  );
  return await response.text();
}

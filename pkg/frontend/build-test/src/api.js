/** Thin HTTP helpers over the documented service API. */
async function expectOk(response) {
    if (!response.ok) {
        const detail = await response.text().catch(() => "");
        throw new Error(`HTTP ${response.status}: ${detail}`);
    }
    return response;
}
export async function createSession(base, fetchFn = fetch) {
    const response = await expectOk(await fetchFn(`${base}/sessions`, { method: "POST" }));
    return (await response.json());
}
export async function sendMessage(base, sessionId, text, fetchFn = fetch) {
    const response = await expectOk(await fetchFn(`${base}/sessions/${sessionId}/messages`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ text }),
    }));
    return (await response.json());
}
export async function fetchTranscript(base, sessionId, fetchFn = fetch) {
    const response = await expectOk(await fetchFn(`${base}/sessions/${sessionId}/transcript`));
    return await response.text();
}

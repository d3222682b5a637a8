/** Wire types of the orchestration service. */
export {};

export * from "./types.js";
export * from "./framing.js";
export * from "./client.js";
export * from "./dispatch.js";
export * from "./render.js";

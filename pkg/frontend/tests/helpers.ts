import { type ChildProcess, spawn } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { dirname, join, resolve } from "node:path";
import { fileURLToPath } from "node:url";

const REPO_ROOT = resolve(dirname(fileURLToPath(import.meta.url)), "..", "..");

export interface ServerHandle {
  port: number;
  stop: () => void;
}

/** Spawn the engine's `serve` command on an ephemeral port and wait for its
 * "listening on host:port" line. */
export function startServer(): Promise<ServerHandle> {
  const storeDir = mkdtempSync(join(tmpdir(), "agentapps-web-"));
  const proc: ChildProcess = spawn(
    "python3",
    [
      "-m",
      "agentapps.cli",
      "serve",
      "--fixtures",
      join(REPO_ROOT, "fixtures", "datasets"),
      "--script",
      join(REPO_ROOT, "fixtures", "scripts", "all.json"),
      "--store",
      storeDir,
      "--port",
      "0",
    ],
    { cwd: REPO_ROOT, stdio: ["ignore", "pipe", "pipe"] },
  );
  const stop = () => {
    proc.kill("SIGTERM");
    rmSync(storeDir, { recursive: true, force: true });
  };
  return new Promise((resolvePromise, rejectPromise) => {
    let out = "";
    let err = "";
    proc.stdout!.on("data", (chunk: Buffer) => {
      out += chunk.toString("utf-8");
      const m = out.match(/listening on [^:]+:(\d+)/);
      if (m) resolvePromise({ port: Number(m[1]), stop });
    });
    proc.stderr!.on("data", (chunk: Buffer) => {
      err += chunk.toString("utf-8");
    });
    proc.on("exit", (code) => {
      rejectPromise(new Error(`server exited early (code ${code}): ${err}`));
    });
    setTimeout(() => rejectPromise(new Error(`server start timed out: ${err}`)), 15000);
  });
}

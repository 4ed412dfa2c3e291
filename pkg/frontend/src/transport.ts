/**
 * Transports to the engine. IN_PROCESS runs the engine as an embedded child
 * process speaking the stdio framing (no network); SERVICE talks to an
 * already-running mask service over HTTP. Both carry one JSON object per
 * line and produce identical responses for identical requests.
 */

import { spawn, type ChildProcess } from "node:child_process";
import { createInterface, type Interface } from "node:readline";

import type { WireResponse } from "./wire.js";

export interface EngineTransport {
  /** Stdio preserves request order on one pipe, so callers may pipeline. */
  readonly pipelined: boolean;
  request(payload: Record<string, unknown>): Promise<WireResponse>;
  close(): Promise<void>;
}

export class HttpTransport implements EngineTransport {
  readonly pipelined = false;

  constructor(readonly baseUrl: string) {}

  async request(payload: Record<string, unknown>): Promise<WireResponse> {
    const res = await fetch(this.baseUrl, {
      method: "POST",
      body: JSON.stringify(payload),
      headers: { "content-type": "application/jsonl" },
    });
    if (!res.ok) {
      throw new Error(`mask service returned HTTP ${res.status}`);
    }
    const text = await res.text();
    const first = text.trim().split("\n")[0];
    return JSON.parse(first) as WireResponse;
  }

  async close(): Promise<void> {}
}

const DEFAULT_ENGINE_COMMAND = ["python3", "-m", "recallspan.cli", "mask-serve", "--stdio"];

interface Pending {
  resolve: (value: WireResponse) => void;
  reject: (error: Error) => void;
}

export class StdioTransport implements EngineTransport {
  readonly pipelined = true;
  private pending: Pending[] = [];
  private closed = false;

  private constructor(private child: ChildProcess, lines: Interface) {
    lines.on("line", (line) => {
      const waiter = this.pending.shift();
      if (!waiter) return;
      try {
        waiter.resolve(JSON.parse(line) as WireResponse);
      } catch (error) {
        waiter.reject(error as Error);
      }
    });
    child.on("exit", (code) => {
      this.closed = true;
      const error = new Error(`engine process exited with code ${code}`);
      for (const waiter of this.pending.splice(0)) waiter.reject(error);
    });
  }

  static spawnEngine(command: string[] = DEFAULT_ENGINE_COMMAND): StdioTransport {
    const child = spawn(command[0], command.slice(1), {
      stdio: ["pipe", "pipe", "ignore"],
    });
    if (!child.stdout || !child.stdin) {
      throw new Error("failed to open engine pipes");
    }
    return new StdioTransport(child, createInterface({ input: child.stdout }));
  }

  request(payload: Record<string, unknown>): Promise<WireResponse> {
    if (this.closed) {
      return Promise.reject(new Error("engine process has exited"));
    }
    return new Promise((resolve, reject) => {
      this.pending.push({ resolve, reject });
      this.child.stdin!.write(JSON.stringify(payload) + "\n");
    });
  }

  async close(): Promise<void> {
    this.closed = true;
    this.child.stdin?.end();
    this.child.kill();
  }
}

/**
 * Spawn a full mask service over HTTP (for tests and local integration);
 * resolves once the service reports its bound address.
 */
export function spawnHttpService(
  command: string[] = ["python3", "-m", "recallspan.cli", "mask-serve", "--port", "0"],
  timeoutMs = 30_000,
): Promise<{ transport: HttpTransport; stop: () => void }> {
  return new Promise((resolve, reject) => {
    const child = spawn(command[0], command.slice(1), { stdio: ["ignore", "ignore", "pipe"] });
    const timer = setTimeout(() => {
      child.kill();
      reject(new Error("mask service did not report an address in time"));
    }, timeoutMs);
    const lines = createInterface({ input: child.stderr! });
    lines.on("line", (line) => {
      const match = line.match(/listening on (http:\/\/[\d.]+:\d+)/);
      if (match) {
        clearTimeout(timer);
        resolve({
          transport: new HttpTransport(match[1]),
          stop: () => child.kill(),
        });
      }
    });
    child.on("exit", (code) => {
      clearTimeout(timer);
      reject(new Error(`mask service exited early with code ${code}`));
    });
  });
}

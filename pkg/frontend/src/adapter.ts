/**
 * Per-decoding-stream adapter: attaches an engine session over a prompt and
 * turns each step's logits into masked logits. The adapter never tokenizes;
 * it trusts host-provided token ids, and every allowed logit passes through
 * bit-identical.
 */

import type { EngineTransport } from "./transport.js";
import {
  configToWire,
  spanFromWire,
  type EngineConfig,
  type MaskInfo,
  type SpanRecord,
  type WireResponse,
} from "./wire.js";

let sessionCounter = 0;

export interface AttachOptions {
  promptTokenIds: number[];
  config: EngineConfig;
  transport: EngineTransport;
  sessionId?: string;
}

function unwrap(response: WireResponse): WireResponse {
  if (!response.ok) {
    throw new Error(response.error ?? "engine request failed");
  }
  return response;
}

export class AdapterSession {
  private constructor(
    private readonly transport: EngineTransport,
    readonly sessionId: string,
    readonly vocabSize: number,
  ) {}

  static async attach(options: AttachOptions): Promise<AdapterSession> {
    const { config } = options;
    if (config.rStartId === config.rEndId) {
      throw new Error("start and end delimiter ids must differ");
    }
    const sessionId = options.sessionId ?? `adapter-${process.pid}-${sessionCounter++}`;
    unwrap(
      await options.transport.request({
        op: "create",
        session: sessionId,
        context: options.promptTokenIds,
        config: configToWire(config),
      }),
    );
    return new AdapterSession(options.transport, sessionId, config.vocabSize);
  }

  async observe(tokenId: number): Promise<void> {
    unwrap(await this.transport.request({ op: "observe", session: this.sessionId, token: tokenId }));
  }

  async mask(): Promise<MaskInfo> {
    const response = unwrap(await this.transport.request({ op: "mask", session: this.sessionId }));
    return {
      mode: response.mode as MaskInfo["mode"],
      tokens: response.tokens ?? [],
      vocabSize: response.vocab_size ?? this.vocabSize,
    };
  }

  /** Allowed entries copied bit-for-bit; everything else set to -Infinity. */
  applyMask(logits: Float32Array, mask: MaskInfo): Float32Array {
    if (logits.length !== mask.vocabSize) {
      throw new Error(`logits length ${logits.length} does not match vocab ${mask.vocabSize}`);
    }
    const out = logits.slice();
    if (mask.mode === "deny") {
      for (const token of mask.tokens) out[token] = -Infinity;
    } else {
      out.fill(-Infinity);
      for (const token of mask.tokens) out[token] = logits[token];
    }
    return out;
  }

  /**
   * One decoding step: report the token the host just emitted (null on the
   * first call), then mask the next-step logits. Over stdio the observe and
   * mask requests share one pipelined round trip.
   */
  async step(lastTokenId: number | null, logits: Float32Array): Promise<Float32Array> {
    let maskInfo: MaskInfo;
    if (lastTokenId !== null && this.transport.pipelined) {
      const [observed, masked] = await Promise.all([
        this.transport.request({ op: "observe", session: this.sessionId, token: lastTokenId }),
        this.transport.request({ op: "mask", session: this.sessionId }),
      ]);
      unwrap(observed);
      const response = unwrap(masked);
      maskInfo = {
        mode: response.mode as MaskInfo["mode"],
        tokens: response.tokens ?? [],
        vocabSize: response.vocab_size ?? this.vocabSize,
      };
    } else {
      if (lastTokenId !== null) await this.observe(lastTokenId);
      maskInfo = await this.mask();
    }
    return this.applyMask(logits, maskInfo);
  }

  /**
   * The host ecosystem's conventional (inputIds, scores) -> scores shape.
   * The first invocation only masks; later invocations first report the
   * newest id in inputIds.
   */
  asLogitsProcessor(): (inputIds: number[], scores: Float32Array) => Promise<Float32Array> {
    let primed = false;
    return async (inputIds, scores) => {
      const last = primed && inputIds.length > 0 ? inputIds[inputIds.length - 1] : null;
      primed = true;
      return this.step(last, scores);
    };
  }

  async close(): Promise<SpanRecord[]> {
    const response = unwrap(await this.transport.request({ op: "close", session: this.sessionId }));
    return (response.spans ?? []).map(spanFromWire);
  }
}

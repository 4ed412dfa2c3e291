/**
 * Wire types for the mask service protocol (newline-delimited JSON).
 */

export interface EngineConfig {
  rStartId: number;
  rEndId: number;
  vocabSize: number;
  includePriorSpansInContext?: boolean;
  includeDelimitersInContext?: boolean;
}

/** Compact next-token constraint: "deny" lists the forbidden ids (outside
 * spans), "allow" lists the full allowed set (inside spans). */
export interface MaskInfo {
  mode: "allow" | "deny";
  tokens: number[];
  vocabSize: number;
}

export interface SpanRecord {
  tokens: number[];
  generationInterval: [number, number];
  contextStartPositions: number[];
  contextSnapshotLen: number;
  charInterval: [number, number] | null;
  truncated: boolean;
}

export interface WireResponse {
  op?: string;
  session?: string;
  ok: boolean;
  error?: string;
  mode?: string;
  tokens?: number[];
  vocab_size?: number;
  context_len?: number;
  spans?: Array<{
    tokens: number[];
    generation_interval: [number, number];
    context_start_positions: number[];
    context_snapshot_len: number;
    char_interval: [number, number] | null;
    truncated: boolean;
  }>;
}

export function configToWire(config: EngineConfig): Record<string, unknown> {
  return {
    r_start_id: config.rStartId,
    r_end_id: config.rEndId,
    vocab_size: config.vocabSize,
    include_prior_spans_in_context: config.includePriorSpansInContext ?? true,
    include_delimiters_in_context: config.includeDelimitersInContext ?? true,
  };
}

export function spanFromWire(raw: NonNullable<WireResponse["spans"]>[number]): SpanRecord {
  return {
    tokens: raw.tokens,
    generationInterval: raw.generation_interval,
    contextStartPositions: raw.context_start_positions,
    contextSnapshotLen: raw.context_snapshot_len,
    charInterval: raw.char_interval,
    truncated: raw.truncated,
  };
}

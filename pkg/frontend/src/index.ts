export { AdapterSession, type AttachOptions } from "./adapter.js";
export {
  HttpTransport,
  StdioTransport,
  spawnHttpService,
  type EngineTransport,
} from "./transport.js";
export type { EngineConfig, MaskInfo, SpanRecord } from "./wire.js";

/**
 * Wire protocol envelope handling.
 *
 * One envelope per line of UTF-8 JSON; every request gets exactly one
 * response with the same request_id. Envelopes the adapter produces itself
 * (handshakes, errors) are serialized canonically: keys sorted recursively,
 * compact separators, so byte-level comparison against the engine's own
 * encoder is meaningful.
 */

export const PROTOCOL_VERSION = 1;

export const REQUEST_RESPONSE: Record<string, string> = {
  hello: 'hello_ack',
  seg_start: 'seg_start_ack',
  seg_frame: 'seg_frame_result',
  complete_pass: 'complete_result',
  recover_clip: 'recover_result',
  hmr_batch: 'hmr_result',
};

export const MESSAGE_TYPES = new Set<string>([
  ...Object.keys(REQUEST_RESPONSE),
  ...Object.values(REQUEST_RESPONSE),
  'error',
]);

export interface Envelope {
  type: string;
  request_id: number;
  version: number;
  body: Record<string, unknown>;
}

export class ProtocolFailure extends Error {
  constructor(public code: string, message: string) {
    super(message);
  }
}

export function parseEnvelope(line: string): Envelope {
  let obj: unknown;
  try {
    obj = JSON.parse(line);
  } catch (err) {
    throw new ProtocolFailure('bad_request', `invalid JSON line: ${(err as Error).message}`);
  }
  if (typeof obj !== 'object' || obj === null || Array.isArray(obj)) {
    throw new ProtocolFailure('bad_request', 'envelope is not an object');
  }
  const rec = obj as Record<string, unknown>;
  const keys = Object.keys(rec).sort();
  const expected = ['body', 'request_id', 'type', 'version'];
  if (keys.length !== expected.length || keys.some((k, i) => k !== expected[i])) {
    throw new ProtocolFailure('bad_request', `bad envelope keys: ${keys.join(',')}`);
  }
  if (typeof rec.type !== 'string' || !MESSAGE_TYPES.has(rec.type)) {
    throw new ProtocolFailure('bad_request', `unknown message type ${String(rec.type)}`);
  }
  if (rec.version !== PROTOCOL_VERSION) {
    throw new ProtocolFailure('bad_request', `version ${String(rec.version)} != ${PROTOCOL_VERSION}`);
  }
  if (typeof rec.request_id !== 'number' || !Number.isInteger(rec.request_id) || rec.request_id < 0) {
    throw new ProtocolFailure('bad_request', 'request_id must be a non-negative integer');
  }
  if (typeof rec.body !== 'object' || rec.body === null || Array.isArray(rec.body)) {
    throw new ProtocolFailure('bad_request', 'body must be an object');
  }
  return {
    type: rec.type,
    request_id: rec.request_id,
    version: PROTOCOL_VERSION,
    body: rec.body as Record<string, unknown>,
  };
}

/** JSON.stringify with keys sorted at every level, compact separators. */
export function canonicalStringify(value: unknown): string {
  if (value === null || typeof value === 'number' || typeof value === 'boolean') {
    return JSON.stringify(value);
  }
  if (typeof value === 'string') {
    return JSON.stringify(value);
  }
  if (Array.isArray(value)) {
    return '[' + value.map(canonicalStringify).join(',') + ']';
  }
  if (typeof value === 'object') {
    const rec = value as Record<string, unknown>;
    const parts = Object.keys(rec)
      .sort()
      .map((k) => JSON.stringify(k) + ':' + canonicalStringify(rec[k]));
    return '{' + parts.join(',') + '}';
  }
  throw new ProtocolFailure('bad_request', `unencodable value of type ${typeof value}`);
}

export function encodeEnvelope(env: Envelope): string {
  return (
    canonicalStringify({
      body: env.body,
      request_id: env.request_id,
      type: env.type,
      version: env.version,
    }) + '\n'
  );
}

export function errorLine(requestId: number, code: string, message: string): string {
  return encodeEnvelope({
    type: 'error',
    request_id: requestId,
    version: PROTOCOL_VERSION,
    body: { code, message },
  });
}

/** Best-effort request_id for error responses to unparseable input. */
export function requestIdOf(line: string): number {
  try {
    const obj = JSON.parse(line) as { request_id?: unknown };
    if (typeof obj.request_id === 'number' && Number.isInteger(obj.request_id) && obj.request_id >= 0) {
      return obj.request_id;
    }
  } catch {
    /* fall through */
  }
  return 0;
}

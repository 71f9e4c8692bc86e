import { describe, expect, it } from 'vitest';

import {
  canonicalStringify,
  encodeEnvelope,
  errorLine,
  parseEnvelope,
  ProtocolFailure,
} from '../src/protocol.js';

describe('parseEnvelope', () => {
  it('accepts a well-formed envelope', () => {
    const env = parseEnvelope('{"body":{},"request_id":3,"type":"hello","version":1}');
    expect(env.type).toBe('hello');
    expect(env.request_id).toBe(3);
  });

  it('rejects unknown types', () => {
    expect(() =>
      parseEnvelope('{"body":{},"request_id":0,"type":"bogus","version":1}'),
    ).toThrow(ProtocolFailure);
  });

  it('rejects wrong versions', () => {
    expect(() =>
      parseEnvelope('{"body":{},"request_id":0,"type":"hello","version":2}'),
    ).toThrow(/version/);
  });

  it('rejects extra keys and truncated lines', () => {
    expect(() =>
      parseEnvelope('{"body":{},"request_id":0,"type":"hello","version":1,"x":1}'),
    ).toThrow(/keys/);
    expect(() => parseEnvelope('{"body":{},"request_id"')).toThrow(/JSON/);
  });

  it('rejects non-integer request ids', () => {
    expect(() =>
      parseEnvelope('{"body":{},"request_id":-1,"type":"hello","version":1}'),
    ).toThrow(/request_id/);
    expect(() =>
      parseEnvelope('{"body":{},"request_id":1.5,"type":"hello","version":1}'),
    ).toThrow(/request_id/);
  });
});

describe('canonical serialization', () => {
  it('sorts keys recursively with compact separators', () => {
    const text = canonicalStringify({ b: 1, a: { d: [2, 'x'], c: null } });
    expect(text).toBe('{"a":{"c":null,"d":[2,"x"]},"b":1}');
  });

  it('round-trips an envelope through the parser', () => {
    const line = encodeEnvelope({
      type: 'hello_ack',
      request_id: 7,
      version: 1,
      body: { backend_kind: 'segmentation', capabilities: [] },
    });
    expect(line.endsWith('\n')).toBe(true);
    expect(parseEnvelope(line).request_id).toBe(7);
  });

  it('produces byte-stable error envelopes', () => {
    expect(errorLine(4, 'no_session', 'unknown session')).toBe(
      '{"body":{"code":"no_session","message":"unknown session"},"request_id":4,"type":"error","version":1}\n',
    );
  });
});

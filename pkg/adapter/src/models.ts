/**
 * Model mode: host a real backend behind the wire protocol.
 *
 * The actual model lives in a user-supplied module (checkpoint loading,
 * device placement, session state, padded-slot handling are all its job);
 * the adapter contributes transport, envelope validation and error mapping.
 * A module must export `createBackend(config)` resolving to an object with
 * `handle(envelope)` returning `{type, body}` for every catalog message of
 * its kind.
 */

import { pathToFileURL } from 'node:url';

import type { AdapterConfig } from './config.js';
import {
  Envelope,
  ProtocolFailure,
  encodeEnvelope,
  errorLine,
  parseEnvelope,
  PROTOCOL_VERSION,
} from './protocol.js';

export interface ModelBackend {
  handle(env: Envelope): Promise<{ type: string; body: Record<string, unknown> }>;
  close?(): Promise<void> | void;
}

interface ModelModule {
  createBackend(config: AdapterConfig): Promise<ModelBackend> | ModelBackend;
}

export async function loadModelBackend(config: AdapterConfig): Promise<ModelBackend> {
  if (!config.model) {
    throw new ProtocolFailure('model_load', 'model mode requires a model module path');
  }
  let mod: ModelModule;
  try {
    mod = (await import(pathToFileURL(config.model).href)) as ModelModule;
  } catch (err) {
    throw new ProtocolFailure('model_load', `cannot load model module: ${(err as Error).message}`);
  }
  if (typeof mod.createBackend !== 'function') {
    throw new ProtocolFailure('model_load', 'model module does not export createBackend');
  }
  try {
    return await mod.createBackend(config);
  } catch (err) {
    throw new ProtocolFailure('model_load', `model initialization failed: ${(err as Error).message}`);
  }
}

export function modelHandler(backend: ModelBackend): (line: string) => Promise<string> {
  return async (line: string): Promise<string> => {
    let env: Envelope;
    try {
      env = parseEnvelope(line);
    } catch (err) {
      const failure = err as ProtocolFailure;
      return errorLine(0, failure.code ?? 'bad_request', failure.message);
    }
    try {
      const { type, body } = await backend.handle(env);
      return encodeEnvelope({
        type,
        request_id: env.request_id,
        version: PROTOCOL_VERSION,
        body,
      });
    } catch (err) {
      const code = (err as { code?: unknown }).code;
      return errorLine(
        env.request_id,
        typeof code === 'string' ? code : 'internal',
        (err as Error).message,
      );
    }
  };
}

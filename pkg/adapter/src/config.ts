/** Adapter configuration: from a JSON file, overridden by CLI flags. */

import { readFileSync } from 'node:fs';

export type BackendKind = 'segmentation' | 'completion' | 'hmr';

export interface AdapterConfig {
  mode: 'scripted' | 'model';
  transport: 'stdio' | 'http';
  port: number;
  script?: string;
  kind?: BackendKind;
  model?: string;
  device?: string;
  completionResolution?: [number, number];
}

export const DEFAULT_CONFIG: AdapterConfig = {
  mode: 'scripted',
  transport: 'stdio',
  port: 0,
};

export function loadConfigFile(path: string): Partial<AdapterConfig> {
  const raw = JSON.parse(readFileSync(path, 'utf-8')) as Record<string, unknown>;
  const out: Partial<AdapterConfig> = {};
  if (raw.mode === 'scripted' || raw.mode === 'model') out.mode = raw.mode;
  if (raw.transport === 'stdio' || raw.transport === 'http') out.transport = raw.transport;
  if (typeof raw.port === 'number') out.port = raw.port;
  if (typeof raw.script === 'string') out.script = raw.script;
  if (raw.kind === 'segmentation' || raw.kind === 'completion' || raw.kind === 'hmr') {
    out.kind = raw.kind;
  }
  if (typeof raw.model === 'string') out.model = raw.model;
  if (typeof raw.device === 'string') out.device = raw.device;
  if (Array.isArray(raw.completion_resolution) && raw.completion_resolution.length === 2) {
    out.completionResolution = [
      Number(raw.completion_resolution[0]),
      Number(raw.completion_resolution[1]),
    ];
  }
  return out;
}

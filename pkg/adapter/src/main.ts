#!/usr/bin/env node
/**
 * vidmesh-adapter: serve a segmentation / completion / hmr backend over the
 * engine's wire protocol, on stdio or HTTP.
 *
 *   node dist/main.js --mode scripted --script run.transcript.jsonl
 *   node dist/main.js --mode scripted --script run.transcript.jsonl --transport http --port 0
 *   node dist/main.js --mode model --kind hmr --model ./my-model.js --device cuda:0
 */

import { AdapterConfig, DEFAULT_CONFIG, loadConfigFile } from './config.js';
import { loadModelBackend, modelHandler } from './models.js';
import { errorLine, requestIdOf } from './protocol.js';
import { loadScript, scriptedHandler } from './scripted.js';
import { LineHandler, serveHttp, serveStdio } from './transport.js';

function usage(message?: string): never {
  if (message) process.stderr.write(`vidmesh-adapter: ${message}\n`);
  process.stderr.write(
    'usage: vidmesh-adapter [--config FILE] [--mode scripted|model] [--script FILE]\n' +
      '                       [--kind segmentation|completion|hmr] [--model FILE]\n' +
      '                       [--device STR] [--completion-resolution WxH]\n' +
      '                       [--transport stdio|http] [--port N]\n',
  );
  process.exit(1);
}

export function parseArgs(argv: string[]): AdapterConfig {
  const config: AdapterConfig = { ...DEFAULT_CONFIG };
  const take = (i: number): string => {
    if (i + 1 >= argv.length) usage(`missing value for ${argv[i]}`);
    return argv[i + 1];
  };
  for (let i = 0; i < argv.length; i += 2) {
    const flag = argv[i];
    switch (flag) {
      case '--config':
        Object.assign(config, loadConfigFile(take(i)));
        break;
      case '--mode': {
        const mode = take(i);
        if (mode !== 'scripted' && mode !== 'model') usage(`bad --mode ${mode}`);
        config.mode = mode;
        break;
      }
      case '--script':
        config.script = take(i);
        break;
      case '--kind': {
        const kind = take(i);
        if (kind !== 'segmentation' && kind !== 'completion' && kind !== 'hmr') {
          usage(`bad --kind ${kind}`);
        }
        config.kind = kind;
        break;
      }
      case '--model':
        config.model = take(i);
        break;
      case '--device':
        config.device = take(i);
        break;
      case '--completion-resolution': {
        const parts = take(i).toLowerCase().split('x');
        if (parts.length !== 2) usage('bad --completion-resolution, want WxH');
        config.completionResolution = [Number(parts[0]), Number(parts[1])];
        break;
      }
      case '--transport': {
        const transport = take(i);
        if (transport !== 'stdio' && transport !== 'http') usage(`bad --transport ${transport}`);
        config.transport = transport;
        break;
      }
      case '--port':
        config.port = Number(take(i));
        break;
      default:
        usage(`unknown flag ${flag}`);
    }
  }
  return config;
}

async function buildHandler(config: AdapterConfig): Promise<LineHandler> {
  if (config.mode === 'scripted') {
    if (!config.script) usage('scripted mode requires --script');
    return scriptedHandler(loadScript(config.script));
  }
  try {
    const backend = await loadModelBackend(config);
    return modelHandler(backend);
  } catch (err) {
    // keep serving: every request is answered with the load failure so the
    // engine sees error{code:"model_load"} instead of a dead pipe
    const failure = err as { code?: string; message: string };
    const code = failure.code ?? 'model_load';
    return (line: string) => errorLine(requestIdOf(line), code, failure.message);
  }
}

async function main(): Promise<void> {
  const config = parseArgs(process.argv.slice(2));
  const handler = await buildHandler(config);
  if (config.transport === 'stdio') {
    serveStdio(handler);
  } else {
    serveHttp(handler, config.port);
  }
}

const entry = process.argv[1] ?? '';
if (entry.endsWith('main.js') || entry.endsWith('main.ts')) {
  main().catch((err: Error) => {
    process.stderr.write(`vidmesh-adapter: fatal: ${err.message}\n`);
    process.exit(1);
  });
}

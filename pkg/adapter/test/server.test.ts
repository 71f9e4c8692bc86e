import { ChildProcessWithoutNullStreams, spawn } from 'node:child_process';
import { readFileSync } from 'node:fs';
import path from 'node:path';
import { afterEach, describe, expect, it } from 'vitest';

const ROOT = path.join(__dirname, '..');
const MAIN = path.join(ROOT, 'dist', 'main.js');
const FIXTURES = path.join(ROOT, 'fixtures');

function transcriptPairs(kind: string): Array<[string, string]> {
  const text = readFileSync(path.join(FIXTURES, `${kind}.transcript.jsonl`), 'utf-8');
  const lines = text.split('\n').filter((l) => l.length > 0);
  const pairs: Array<[string, string]> = [];
  for (let i = 0; i < lines.length; i += 2) pairs.push([lines[i], lines[i + 1]]);
  return pairs;
}

const procs: ChildProcessWithoutNullStreams[] = [];

afterEach(() => {
  for (const p of procs.splice(0)) p.kill();
});

function start(args: string[]): ChildProcessWithoutNullStreams {
  const proc = spawn(process.execPath, [MAIN, ...args], { cwd: ROOT });
  procs.push(proc);
  return proc;
}

function linesOf(proc: ChildProcessWithoutNullStreams): AsyncGenerator<string> {
  const stdout = proc.stdout;
  async function* gen(): AsyncGenerator<string> {
    let buffer = '';
    for await (const chunk of stdout) {
      buffer += chunk.toString('utf-8');
      let idx;
      while ((idx = buffer.indexOf('\n')) >= 0) {
        yield buffer.slice(0, idx + 1);
        buffer = buffer.slice(idx + 1);
      }
    }
  }
  return gen();
}

async function httpPort(proc: ChildProcessWithoutNullStreams): Promise<number> {
  return await new Promise((resolve, reject) => {
    let buf = '';
    const onData = (chunk: Buffer) => {
      buf += chunk.toString('utf-8');
      const m = buf.match(/listening on http:\/\/127\.0\.0\.1:(\d+)\//);
      if (m) {
        proc.stderr.off('data', onData);
        resolve(Number(m[1]));
      }
    };
    proc.stderr.on('data', onData);
    proc.on('exit', () => reject(new Error(`adapter exited early: ${buf}`)));
    setTimeout(() => reject(new Error('timed out waiting for http port')), 10000);
  });
}

describe('stdio transport', () => {
  for (const kind of ['segmentation', 'completion', 'hmr']) {
    it(`serves the ${kind} transcript byte-identically`, async () => {
      const proc = start([
        '--mode', 'scripted',
        '--script', path.join(FIXTURES, `${kind}.transcript.jsonl`),
      ]);
      const reader = linesOf(proc);
      for (const [request, response] of transcriptPairs(kind)) {
        proc.stdin.write(request + '\n');
        const got = await reader.next();
        expect(got.value).toBe(response + '\n');
      }
      proc.stdin.end();
    });
  }
});

describe('http transport', () => {
  it('serves the same bytes as stdio for every transcript', async () => {
    for (const kind of ['segmentation', 'completion', 'hmr']) {
      const proc = start([
        '--mode', 'scripted',
        '--script', path.join(FIXTURES, `${kind}.transcript.jsonl`),
        '--transport', 'http',
        '--port', '0',
      ]);
      const port = await httpPort(proc);
      for (const [request, response] of transcriptPairs(kind)) {
        const resp = await fetch(`http://127.0.0.1:${port}/rpc`, {
          method: 'POST',
          body: request + '\n',
          headers: { 'Content-Type': 'application/json' },
        });
        expect(await resp.text()).toBe(response + '\n');
      }
      proc.kill();
    }
  }, 30000);
});

describe('model mode', () => {
  it('serves a plug-in model: handshake carries the layout, arity holds for padded slots', async () => {
    const proc = start([
      '--mode', 'model',
      '--kind', 'hmr',
      '--model', path.join(__dirname, 'helpers', 'zero-model.mjs'),
    ]);
    const reader = linesOf(proc);
    proc.stdin.write('{"body":{},"request_id":0,"type":"hello","version":1}\n');
    const hello = JSON.parse((await reader.next()).value as string);
    expect(hello.type).toBe('hello_ack');
    expect(hello.body.param_layout.pose_dim).toBe(6);

    const slots = [
      { image: { png: '' }, mask_prompt: { width: 2, height: 2, counts: [0, 4] }, valid: true },
      { image: { png: '' }, mask_prompt: { width: 2, height: 2, counts: [0, 4] }, valid: true },
      { image: { png: '' }, mask_prompt: { width: 2, height: 2, counts: [0, 4] }, valid: true },
      { image: { png: '' }, mask_prompt: { width: 2, height: 2, counts: [4] }, valid: false },
    ];
    proc.stdin.write(
      JSON.stringify({ body: { slots }, request_id: 1, type: 'hmr_batch', version: 1 }) + '\n',
    );
    const result = JSON.parse((await reader.next()).value as string);
    expect(result.type).toBe('hmr_result');
    expect(result.request_id).toBe(1);
    expect(result.body.thetas).toHaveLength(4);
    // padded slot still yields a well-formed theta
    expect(result.body.thetas[3].pose).toHaveLength(6);
    proc.stdin.end();
  });

  it('answers with error{model_load} when the model cannot be loaded', async () => {
    const proc = start(['--mode', 'model', '--kind', 'hmr', '--model', '/nonexistent/model.js']);
    const reader = linesOf(proc);
    proc.stdin.write('{"body":{},"request_id":5,"type":"hello","version":1}\n');
    const reply = JSON.parse((await reader.next()).value as string);
    expect(reply.type).toBe('error');
    expect(reply.request_id).toBe(5);
    expect(reply.body.code).toBe('model_load');
    proc.stdin.end();
  });

  it('maps backend-thrown codes onto error envelopes', async () => {
    const proc = start([
      '--mode', 'model',
      '--kind', 'hmr',
      '--model', path.join(__dirname, 'helpers', 'zero-model.mjs'),
    ]);
    const reader = linesOf(proc);
    proc.stdin.write(
      '{"body":{"frames":[],"human_id":"a","visible_masks":[]},"request_id":2,"type":"complete_pass","version":1}\n',
    );
    const reply = JSON.parse((await reader.next()).value as string);
    expect(reply.type).toBe('error');
    expect(reply.body.code).toBe('bad_request');
    proc.stdin.end();
  });
});

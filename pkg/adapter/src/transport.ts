/**
 * The two transports: newline-delimited JSON over stdio (primary) and HTTP
 * POST with one envelope per request body. Both feed the same line handler,
 * so responses are identical bytes either way. Responses on one stdio
 * connection are strictly ordered even when the handler is async.
 */

import { createInterface } from 'node:readline';
import http from 'node:http';

export type LineHandler = (line: string) => string | Promise<string>;

export function serveStdio(handle: LineHandler): void {
  const rl = createInterface({ input: process.stdin, terminal: false });
  let tail: Promise<void> = Promise.resolve();
  rl.on('line', (line: string) => {
    if (!line.trim()) return;
    tail = tail.then(async () => {
      process.stdout.write(await handle(line));
    });
  });
  rl.on('close', () => {
    void tail.then(() => process.exit(0));
  });
}

export function serveHttp(handle: LineHandler, port: number): http.Server {
  const server = http.createServer((req, res) => {
    if (req.method !== 'POST') {
      res.writeHead(405).end();
      return;
    }
    const chunks: Buffer[] = [];
    req.on('data', (c: Buffer) => chunks.push(c));
    req.on('end', () => {
      void Promise.resolve(handle(Buffer.concat(chunks).toString('utf-8'))).then((reply) => {
        res.writeHead(200, {
          'Content-Type': 'application/json',
          'Content-Length': Buffer.byteLength(reply),
        });
        res.end(reply);
      });
    });
  });
  server.listen(port, '127.0.0.1', () => {
    const addr = server.address();
    const bound = typeof addr === 'object' && addr ? addr.port : port;
    process.stderr.write(`listening on http://127.0.0.1:${bound}/\n`);
  });
  return server;
}

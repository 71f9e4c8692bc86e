/**
 * Scripted mode: replay canned responses keyed by request digest.
 *
 * A script is a transcript file of alternating request/response lines
 * (newline-delimited JSON, exactly as they crossed the wire). The digest is
 * the SHA-256 of the request line with its trailing newline stripped, and
 * the stored response is replayed byte for byte, which is what makes
 * cross-language conformance runs comparable at the byte level.
 */

import { createHash } from 'node:crypto';
import { readFileSync } from 'node:fs';

import { errorLine, requestIdOf } from './protocol.js';

export type LineHandler = (line: string) => string;

export function digestOf(requestLine: string): string {
  const trimmed = requestLine.replace(/\r?\n$/, '');
  return createHash('sha256').update(trimmed, 'utf-8').digest('hex');
}

export function loadScript(path: string): Map<string, string> {
  const text = readFileSync(path, 'utf-8');
  const lines = text.split('\n').filter((l) => l.length > 0);
  if (lines.length % 2 !== 0) {
    throw new Error(`script ${path} has an odd number of lines (want request/response pairs)`);
  }
  const entries = new Map<string, string>();
  for (let i = 0; i < lines.length; i += 2) {
    entries.set(digestOf(lines[i]), lines[i + 1]);
  }
  return entries;
}

export function scriptedHandler(script: Map<string, string>): LineHandler {
  return (line: string): string => {
    const hit = script.get(digestOf(line));
    if (hit !== undefined) {
      return hit + '\n';
    }
    return errorLine(requestIdOf(line), 'unscripted_request', 'request not present in the script');
  };
}

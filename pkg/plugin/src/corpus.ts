/** CoNLL-style gold corpus: token<TAB>tag lines, blank line between
 * sentences. The format is shared with the host pipeline's eval harness.
 */
import { readFileSync } from "node:fs";

import { TAG_INDEX } from "./labels";

export class CorpusFormatError extends Error {}

export interface SentenceRecord {
  tokens: string[];
  tags: string[];
}

export function parseConll(text: string): SentenceRecord[] {
  const sentences: SentenceRecord[] = [];
  let tokens: string[] = [];
  let tags: string[] = [];
  const flush = () => {
    if (tokens.length) {
      sentences.push({ tokens, tags });
      tokens = [];
      tags = [];
    }
  };
  text.split("\n").forEach((raw, lineNo) => {
    const line = raw.replace(/\r$/, "");
    if (!line.trim()) {
      flush();
      return;
    }
    const parts = line.split("\t");
    if (parts.length !== 2) {
      throw new CorpusFormatError(`line ${lineNo + 1}: expected "token<TAB>tag", got ${JSON.stringify(line)}`);
    }
    const [token, tag] = parts;
    if (!TAG_INDEX.has(tag)) {
      throw new CorpusFormatError(`line ${lineNo + 1}: unknown tag ${JSON.stringify(tag)}`);
    }
    if (tag.startsWith("I-")) {
      const prev = tags.length ? tags[tags.length - 1] : "O";
      if (prev === "O" || prev.slice(2) !== tag.slice(2)) {
        throw new CorpusFormatError(`line ${lineNo + 1}: ${tag} does not continue a span`);
      }
    }
    tokens.push(token);
    tags.push(tag);
  });
  flush();
  return sentences;
}

export function loadConll(path: string): SentenceRecord[] {
  return parseConll(readFileSync(path, "utf-8"));
}

export function dumpConll(sentences: SentenceRecord[]): string {
  return (
    sentences
      .map((s) => s.tokens.map((t, i) => `${t}\t${s.tags[i]}`).join("\n"))
      .join("\n\n") + "\n"
  );
}

import assert from "node:assert/strict";
import { test } from "node:test";
import * as path from "node:path";

import { CorpusFormatError, dumpConll, loadConll, parseConll } from "../src/corpus";

const TOY = path.join(__dirname, "..", "..", "corpus", "toy.conll");

test("toy corpus has 50 sentences with aligned tags", () => {
  const sentences = loadConll(TOY);
  assert.equal(sentences.length, 50);
  for (const sentence of sentences) {
    assert.equal(sentence.tokens.length, sentence.tags.length);
  }
});

test("parse/dump round trip", () => {
  const text = "a\tB-Data\nb\tI-Data\n\nc\tO\n";
  const sentences = parseConll(text);
  assert.equal(dumpConll(sentences), text);
});

test("rejects unknown tags", () => {
  assert.throws(() => parseConll("a\tB-Gadget\n"), CorpusFormatError);
});

test("rejects dangling I- tags", () => {
  assert.throws(() => parseConll("a\tO\nb\tI-Data\n"), CorpusFormatError);
});

test("rejects lines without a tab", () => {
  assert.throws(() => parseConll("a B-Data\n"), CorpusFormatError);
});

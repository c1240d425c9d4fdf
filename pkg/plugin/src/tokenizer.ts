/** Whitespace+punctuation tokenizer with character offsets.
 *
 * Offsets count Unicode code points of the original text, because that is
 * what the wire protocol exchanges. JavaScript string indices count UTF-16
 * units, so surrogate pairs are handled explicitly.
 */

export interface Token {
  text: string;
  start: number; // code points, inclusive
  end: number; // code points, exclusive
}

const WORD = /[\p{L}\p{N}_]/u;
const SPACE = /\s/u;

export function tokenize(text: string): Token[] {
  const tokens: Token[] = [];
  const chars = Array.from(text); // one entry per code point
  let i = 0;
  while (i < chars.length) {
    const ch = chars[i];
    if (SPACE.test(ch)) {
      i += 1;
      continue;
    }
    if (WORD.test(ch)) {
      let j = i + 1;
      while (j < chars.length && WORD.test(chars[j])) j += 1;
      tokens.push({ text: chars.slice(i, j).join(""), start: i, end: j });
      i = j;
    } else {
      tokens.push({ text: ch, start: i, end: i + 1 });
      i += 1;
    }
  }
  return tokens;
}

/** Slice a string by code-point offsets. */
export function sliceCodePoints(text: string, start: number, end: number): string {
  return Array.from(text).slice(start, end).join("");
}

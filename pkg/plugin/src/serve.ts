/** Entry point: serve a trained tagger over the stdio protocol.
 *
 * Usage: node dist/src/serve.js --model model.json
 */
import { LABELS } from "./labels";
import { TaggerModel, tagsToSpans } from "./model";
import { EntityOut, Request, serveProtocol } from "./protocol";
import { sliceCodePoints, tokenize } from "./tokenizer";

export function extractEntities(model: TaggerModel, text: string): EntityOut[] {
  const tokens = tokenize(text);
  if (!tokens.length) return [];
  const { tags, confidences } = model.predict(tokens.map((t) => t.text));
  return tagsToSpans(tokens, tags, confidences).map((span) => ({
    start: span.start,
    end: span.end,
    label: span.label,
    text: sliceCodePoints(text, span.start, span.end),
    score: span.score,
  }));
}

/** Zero-shot-style fallback: score labels by token overlap with the
 * request text. Deterministic and weak, but keeps the classify kind of
 * the protocol served. */
export function classifyByOverlap(
  title: string,
  abstract: string,
  labels: string[],
): { label: string; score: number } {
  if (!labels.length) throw new Error("classify request carried no labels");
  const text = `${title} ${abstract}`.toLowerCase();
  let best = [...labels].sort()[0];
  let bestScore = 0;
  for (const label of labels) {
    const words = label.toLowerCase().split(/\s+/).filter((w) => w.length > 3);
    const score = words.filter((w) => text.includes(w)).length / Math.max(1, words.length);
    if (score > bestScore || (score === bestScore && label < best)) {
      best = label;
      bestScore = score;
    }
  }
  return { label: best, score: bestScore };
}

export function makeHandler(model: TaggerModel) {
  return (request: Request): Record<string, unknown> => {
    if (request.kind === "extract") {
      if (typeof request.text !== "string") {
        throw new Error("extract request must carry a text string");
      }
      return { entities: extractEntities(model, request.text) };
    }
    return classifyByOverlap(request.title ?? "", request.abstract ?? "", request.labels ?? []);
  };
}

function parseArgs(argv: string[]): Map<string, string> {
  const args = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 1) {
    if (argv[i].startsWith("--")) {
      const key = argv[i].slice(2);
      const value = i + 1 < argv.length && !argv[i + 1].startsWith("--") ? argv[++i] : "true";
      args.set(key, value);
    }
  }
  return args;
}

export function main(argv: string[]): Promise<void> {
  const args = parseArgs(argv);
  const modelPath = args.get("model");
  if (!modelPath) {
    process.stderr.write("usage: serve --model <model.json>\n");
    process.exit(2);
  }
  const model = TaggerModel.load(modelPath);
  if (model.config.labels.join() !== LABELS.join()) {
    throw new Error("model label set differs from the protocol label set");
  }
  return serveProtocol(makeHandler(model));
}

if (require.main === module) {
  main(process.argv.slice(2)).catch((error) => {
    process.stderr.write(`fatal: ${error}\n`);
    process.exit(1);
  });
}

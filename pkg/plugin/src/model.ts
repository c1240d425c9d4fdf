/** Token-classification model: embeddings, a context-window encoder and a
 * per-token tag head, with an optional CRF layer on top.
 *
 * Small enough to fine-tune on a laptop CPU in seconds, while keeping the
 * training loop shape (Adam, mini-batches, BIO tags) of its full-scale
 * transformer counterparts. The wire protocol is the contract, not the
 * architecture.
 */
import { readFileSync, writeFileSync } from "node:fs";

import { Adam, AdamOptions } from "./adam";
import { CrfParams, crfLossAndGrads, viterbi } from "./crf";
import { LABELS, TAGS, TAG_INDEX, assertLabelSet } from "./labels";
import { Rng, mulberry32, uniformArray } from "./rng";

const PAD = "<pad>";
const UNK = "<unk>";

export interface ModelConfig {
  labels: string[];
  maxSeqLen: number;
  device: "cpu";
  crf: boolean;
  embeddingDim: number;
  hiddenDim: number;
}

export const MODEL_DEFAULTS: Omit<ModelConfig, "labels"> = {
  maxSeqLen: 128,
  device: "cpu",
  crf: false,
  embeddingDim: 16,
  hiddenDim: 32,
};

export interface TaggedSentence {
  tokenIds: number[];
  tagIds: number[];
}

export class TaggerModel {
  readonly config: ModelConfig;
  readonly vocab: Map<string, number>;
  readonly words: string[];
  readonly params = new Map<string, Float64Array>();
  private readonly K = TAGS.length;

  constructor(config: ModelConfig, words: string[], rng: Rng) {
    assertLabelSet(config.labels);
    if (config.device !== "cpu") {
      throw new Error(`unsupported device ${JSON.stringify(config.device)}; only "cpu" is built`);
    }
    if (config.maxSeqLen <= 0) throw new Error("maxSeqLen must be positive");
    this.config = config;
    this.words = words;
    this.vocab = new Map(words.map((w, i) => [w, i]));
    const { embeddingDim: De, hiddenDim: H } = config;
    const V = words.length;
    const K = this.K;
    this.params.set("E", uniformArray(V * De, 0.1, rng));
    this.params.set("W1", uniformArray(H * 3 * De, Math.sqrt(1 / (3 * De)), rng));
    this.params.set("b1", new Float64Array(H));
    this.params.set("W2", uniformArray(K * H, Math.sqrt(1 / H), rng));
    this.params.set("b2", new Float64Array(K));
    if (config.crf) {
      this.params.set("T", uniformArray(K * K, 0.01, rng));
      this.params.set("Tstart", new Float64Array(K));
      this.params.set("Tend", new Float64Array(K));
    }
  }

  static build(
    sentences: { tokens: string[] }[],
    config: Partial<ModelConfig> & { labels?: string[] },
    seed = 13,
  ): TaggerModel {
    const words = [PAD, UNK];
    const seen = new Set(words);
    for (const sentence of sentences) {
      for (const token of sentence.tokens) {
        const w = token.toLowerCase();
        if (!seen.has(w)) {
          seen.add(w);
          words.push(w);
        }
      }
    }
    const full: ModelConfig = {
      labels: config.labels ?? [...LABELS],
      ...MODEL_DEFAULTS,
      ...config,
    } as ModelConfig;
    return new TaggerModel(full, words, mulberry32(seed));
  }

  tokenId(token: string): number {
    return this.vocab.get(token.toLowerCase()) ?? this.vocab.get(UNK)!;
  }

  encode(tokens: string[]): number[] {
    return tokens.map((t) => this.tokenId(t));
  }

  private crfParams(): CrfParams {
    return {
      transitions: this.params.get("T")!,
      start: this.params.get("Tstart")!,
      end: this.params.get("Tend")!,
    };
  }

  /** Per-token logits plus the intermediates backprop needs. */
  private forward(tokenIds: number[]) {
    const { embeddingDim: De, hiddenDim: H } = this.config;
    const K = this.K;
    const E = this.params.get("E")!;
    const W1 = this.params.get("W1")!;
    const b1 = this.params.get("b1")!;
    const W2 = this.params.get("W2")!;
    const b2 = this.params.get("b2")!;
    const n = tokenIds.length;
    const padId = 0;
    const inputs: Float64Array[] = [];
    const hiddens: Float64Array[] = [];
    const logits: Float64Array[] = [];
    for (let t = 0; t < n; t++) {
      const input = new Float64Array(3 * De);
      const window = [
        t > 0 ? tokenIds[t - 1] : padId,
        tokenIds[t],
        t + 1 < n ? tokenIds[t + 1] : padId,
      ];
      for (let w = 0; w < 3; w++) {
        const base = window[w] * De;
        for (let d = 0; d < De; d++) input[w * De + d] = E[base + d];
      }
      const hidden = new Float64Array(H);
      for (let h = 0; h < H; h++) {
        let sum = b1[h];
        const row = h * 3 * De;
        for (let d = 0; d < 3 * De; d++) sum += W1[row + d] * input[d];
        hidden[h] = Math.tanh(sum);
      }
      const z = new Float64Array(K);
      for (let k = 0; k < K; k++) {
        let sum = b2[k];
        const row = k * H;
        for (let h = 0; h < H; h++) sum += W2[row + h] * hidden[h];
        z[k] = sum;
      }
      inputs.push(input);
      hiddens.push(hidden);
      logits.push(z);
    }
    return { inputs, hiddens, logits };
  }

  /** Mean per-token loss over a batch, accumulating gradients. */
  lossAndGrads(batch: TaggedSentence[], grads: Map<string, Float64Array>): number {
    const { embeddingDim: De, hiddenDim: H } = this.config;
    const K = this.K;
    for (const [name, param] of this.params) {
      if (!grads.has(name)) grads.set(name, new Float64Array(param.length));
    }
    const dE = grads.get("E")!;
    const dW1 = grads.get("W1")!;
    const db1 = grads.get("b1")!;
    const dW2 = grads.get("W2")!;
    const db2 = grads.get("b2")!;
    const W1 = this.params.get("W1")!;
    const W2 = this.params.get("W2")!;
    let totalLoss = 0;
    let totalTokens = 0;
    for (const sentence of batch) {
      const ids = sentence.tokenIds.slice(0, this.config.maxSeqLen);
      const gold = sentence.tagIds.slice(0, this.config.maxSeqLen);
      if (!ids.length) continue;
      const { inputs, hiddens, logits } = this.forward(ids);
      const n = ids.length;
      totalTokens += n;
      const dLogits: Float64Array[] = [];
      if (this.config.crf) {
        const { loss, grads: crfGrads } = crfLossAndGrads(logits, gold, this.crfParams(), K);
        totalLoss += loss;
        dLogits.push(...crfGrads.dEmissions);
        const dT = grads.get("T")!;
        for (let i = 0; i < dT.length; i++) dT[i] += crfGrads.dTransitions[i];
        const dStart = grads.get("Tstart")!;
        const dEnd = grads.get("Tend")!;
        for (let k = 0; k < K; k++) {
          dStart[k] += crfGrads.dStart[k];
          dEnd[k] += crfGrads.dEnd[k];
        }
      } else {
        for (let t = 0; t < n; t++) {
          const z = logits[t];
          let max = -Infinity;
          for (let k = 0; k < K; k++) if (z[k] > max) max = z[k];
          let sum = 0;
          for (let k = 0; k < K; k++) sum += Math.exp(z[k] - max);
          const logSum = max + Math.log(sum);
          totalLoss += logSum - z[gold[t]];
          const d = new Float64Array(K);
          for (let k = 0; k < K; k++) d[k] = Math.exp(z[k] - logSum);
          d[gold[t]] -= 1;
          dLogits.push(d);
        }
      }
      // Backprop through the tag head and encoder.
      const padId = 0;
      for (let t = 0; t < n; t++) {
        const dz = dLogits[t];
        const hidden = hiddens[t];
        const input = inputs[t];
        const dHidden = new Float64Array(H);
        for (let k = 0; k < K; k++) {
          const g = dz[k];
          if (g === 0) continue;
          db2[k] += g;
          const row = k * H;
          for (let h = 0; h < H; h++) {
            dW2[row + h] += g * hidden[h];
            dHidden[h] += W2[row + h] * g;
          }
        }
        const dInput = new Float64Array(3 * De);
        for (let h = 0; h < H; h++) {
          const dPre = dHidden[h] * (1 - hidden[h] * hidden[h]);
          if (dPre === 0) continue;
          db1[h] += dPre;
          const row = h * 3 * De;
          for (let d = 0; d < 3 * De; d++) {
            dW1[row + d] += dPre * input[d];
            dInput[d] += W1[row + d] * dPre;
          }
        }
        const window = [
          t > 0 ? ids[t - 1] : padId,
          ids[t],
          t + 1 < n ? ids[t + 1] : padId,
        ];
        for (let w = 0; w < 3; w++) {
          const base = window[w] * De;
          for (let d = 0; d < De; d++) dE[base + d] += dInput[w * De + d];
        }
      }
    }
    if (totalTokens > 0) {
      const scale = 1 / totalTokens;
      for (const grad of grads.values()) {
        for (let i = 0; i < grad.length; i++) grad[i] *= scale;
      }
      totalLoss *= scale;
    }
    return totalLoss;
  }

  /** Predicted tag names plus a [0,1] confidence per token. */
  predict(tokens: string[]): { tags: string[]; confidences: number[] } {
    if (!tokens.length) return { tags: [], confidences: [] };
    const K = this.K;
    const tags: string[] = [];
    const confidences: number[] = [];
    for (let offset = 0; offset < tokens.length; offset += this.config.maxSeqLen) {
      const chunk = tokens.slice(offset, offset + this.config.maxSeqLen);
      const ids = this.encode(chunk);
      const { logits } = this.forward(ids);
      const posteriors = logits.map((z) => {
        let max = -Infinity;
        for (let k = 0; k < K; k++) if (z[k] > max) max = z[k];
        let sum = 0;
        for (let k = 0; k < K; k++) sum += Math.exp(z[k] - max);
        const p = new Float64Array(K);
        for (let k = 0; k < K; k++) p[k] = Math.exp(z[k] - max) / sum;
        return p;
      });
      let path: number[];
      if (this.config.crf) {
        path = viterbi(logits, this.crfParams(), K);
      } else {
        path = posteriors.map((p) => {
          let best = 0;
          for (let k = 1; k < K; k++) if (p[k] > p[best]) best = k;
          return best;
        });
      }
      path.forEach((tagId, i) => {
        tags.push(TAGS[tagId]);
        // Local posterior of the chosen tag; a heuristic under the CRF,
        // exact under the softmax head.
        confidences.push(Math.min(1, Math.max(0, posteriors[i][tagId])));
      });
    }
    return { tags: repairBio(tags), confidences };
  }

  save(path: string): void {
    const doc = {
      format: "instrumentkg-tagger",
      version: 1,
      config: this.config,
      words: this.words,
      tags: TAGS,
      params: Object.fromEntries(
        [...this.params].map(([name, values]) => [name, Array.from(values)]),
      ),
    };
    writeFileSync(path, JSON.stringify(doc));
  }

  static load(path: string): TaggerModel {
    const doc = JSON.parse(readFileSync(path, "utf-8"));
    if (doc.format !== "instrumentkg-tagger") {
      throw new Error(`${path} is not a tagger model file`);
    }
    const model = new TaggerModel(doc.config, doc.words, mulberry32(1));
    for (const [name, values] of Object.entries(doc.params)) {
      model.params.set(name, Float64Array.from(values as number[]));
    }
    return model;
  }
}

/** Make a raw tag sequence BIO-consistent (I- without a matching open
 * becomes B-). */
export function repairBio(tags: string[]): string[] {
  const out: string[] = [];
  for (let i = 0; i < tags.length; i++) {
    const tag = tags[i];
    if (tag.startsWith("I-")) {
      const prev = i > 0 ? out[i - 1] : "O";
      if (prev === "O" || prev.slice(2) !== tag.slice(2)) {
        out.push(`B-${tag.slice(2)}`);
        continue;
      }
    }
    out.push(tag);
  }
  return out;
}

/** Group BIO tags over tokens into labeled character spans. */
export function tagsToSpans(
  tokens: { start: number; end: number }[],
  tags: string[],
  confidences: number[],
): { start: number; end: number; label: string; score: number }[] {
  const spans: { start: number; end: number; label: string; score: number }[] = [];
  let open: { start: number; end: number; label: string; scores: number[] } | null = null;
  const close = () => {
    if (open) {
      const mean = open.scores.reduce((a, b) => a + b, 0) / open.scores.length;
      spans.push({ start: open.start, end: open.end, label: open.label, score: mean });
      open = null;
    }
  };
  tags.forEach((tag, i) => {
    if (tag === "O") {
      close();
      return;
    }
    const label = tag.slice(2);
    if (tag.startsWith("B-") || !open || open.label !== label) {
      close();
      open = { start: tokens[i].start, end: tokens[i].end, label, scores: [confidences[i]] };
    } else {
      open.end = tokens[i].end;
      open.scores.push(confidences[i]);
    }
  });
  close();
  return spans;
}

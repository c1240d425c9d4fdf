/** Toy-scale fine-tuning over a CoNLL corpus.
 *
 * Defaults mirror the reference setup (Adam, batch size 16); epochs stay
 * configurable and default to 2 so the toy run finishes in seconds. After
 * training, the held-out split is tagged and the host pipeline's eval
 * harness is invoked over gold/predicted CoNLL files, landing the metrics
 * file in the reference table format.
 *
 * Usage:
 *   node dist/src/train.js --corpus corpus/toy.conll --out model.json \
 *     [--epochs 2] [--batch-size 16] [--lr 0.01] [--crf] [--seed 13] \
 *     [--val-fraction 0.2] [--metrics-out metrics.txt] \
 *     [--eval-cmd "python3 -m instrumentkg.cli"]
 */
import { spawnSync } from "node:child_process";
import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import * as path from "node:path";

import { Adam } from "./adam";
import { dumpConll, loadConll, SentenceRecord } from "./corpus";
import { TAGS, TAG_INDEX } from "./labels";
import { MODEL_DEFAULTS, TaggedSentence, TaggerModel } from "./model";
import { mulberry32, shuffleInPlace } from "./rng";

export interface TrainOptions {
  corpusPath: string;
  outPath: string;
  epochs: number;
  batchSize: number;
  lr: number;
  crf: boolean;
  seed: number;
  valFraction: number;
  maxSeqLen: number;
  metricsOut?: string;
  evalCmd?: string[];
  quiet?: boolean;
}

export const TRAIN_DEFAULTS = {
  epochs: 2,
  batchSize: 16,
  lr: 0.01,
  crf: false,
  seed: 13,
  valFraction: 0.2,
  maxSeqLen: MODEL_DEFAULTS.maxSeqLen,
};

export interface TrainResult {
  model: TaggerModel;
  losses: number[];
  goldPath?: string;
  predPath?: string;
  metricsPath?: string;
}

function toTagged(model: TaggerModel, sentences: SentenceRecord[]): TaggedSentence[] {
  return sentences.map((s) => ({
    tokenIds: model.encode(s.tokens),
    tagIds: s.tags.map((t) => TAG_INDEX.get(t)!),
  }));
}

export function trainToy(options: TrainOptions): TrainResult {
  const sentences = loadConll(options.corpusPath);
  if (!sentences.length) {
    throw new Error(`corpus ${options.corpusPath} has no sentences`);
  }
  const rng = mulberry32(options.seed);
  const shuffled = [...sentences];
  shuffleInPlace(shuffled, rng);
  const valCount = Math.max(
    1,
    Math.min(shuffled.length - 1, Math.round(shuffled.length * options.valFraction)),
  );
  const val = shuffled.slice(0, valCount);
  const train = shuffled.slice(valCount);

  const model = TaggerModel.build(
    train,
    { crf: options.crf, maxSeqLen: options.maxSeqLen },
    options.seed,
  );
  const tagged = toTagged(model, train);
  const adam = new Adam({ lr: options.lr });
  const losses: number[] = [];
  for (let epoch = 0; epoch < options.epochs; epoch++) {
    shuffleInPlace(tagged, rng);
    let epochLoss = 0;
    let batches = 0;
    for (let i = 0; i < tagged.length; i += options.batchSize) {
      const batch = tagged.slice(i, i + options.batchSize);
      const grads = new Map<string, Float64Array>();
      epochLoss += model.lossAndGrads(batch, grads);
      adam.step(model.params, grads);
      batches += 1;
    }
    const mean = batches ? epochLoss / batches : 0;
    losses.push(mean);
    if (!options.quiet) {
      process.stderr.write(`epoch ${epoch + 1}/${options.epochs} loss ${mean.toFixed(4)}\n`);
    }
  }
  model.save(options.outPath);

  const result: TrainResult = { model, losses };
  if (options.metricsOut) {
    const workdir = mkdtempSync(path.join(tmpdir(), "tagger-eval-"));
    const goldPath = path.join(workdir, "val-gold.conll");
    const predPath = path.join(workdir, "val-pred.conll");
    const predicted = val.map((s) => ({
      tokens: s.tokens,
      tags: model.predict(s.tokens).tags,
    }));
    writeFileSync(goldPath, dumpConll(val));
    writeFileSync(predPath, dumpConll(predicted));
    const evalCmd = options.evalCmd ?? ["python3", "-m", "instrumentkg.cli"];
    const argv = [
      ...evalCmd.slice(1),
      "eval",
      "--gold", goldPath,
      "--pred", predPath,
      "--model", options.crf ? "window-tagger-crf" : "window-tagger",
      "--out", options.metricsOut,
    ];
    const run = spawnSync(evalCmd[0], argv, { encoding: "utf-8" });
    if (run.status !== 0) {
      throw new Error(
        `eval harness failed (${run.status}): ${run.stderr || run.stdout}`,
      );
    }
    result.goldPath = goldPath;
    result.predPath = predPath;
    result.metricsPath = options.metricsOut;
  }
  return result;
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

export function main(argv: string[]): void {
  const args = parseArgs(argv);
  const corpusPath = args.get("corpus");
  const outPath = args.get("out");
  if (!corpusPath || !outPath) {
    process.stderr.write(
      "usage: train --corpus <corpus.conll> --out <model.json> [--epochs N] " +
        "[--batch-size N] [--lr F] [--crf] [--seed N] [--val-fraction F] " +
        "[--metrics-out FILE] [--eval-cmd CMD]\n",
    );
    process.exit(2);
  }
  const evalCmdRaw = args.get("eval-cmd");
  trainToy({
    corpusPath,
    outPath,
    epochs: parseInt(args.get("epochs") ?? `${TRAIN_DEFAULTS.epochs}`, 10),
    batchSize: parseInt(args.get("batch-size") ?? `${TRAIN_DEFAULTS.batchSize}`, 10),
    lr: parseFloat(args.get("lr") ?? `${TRAIN_DEFAULTS.lr}`),
    crf: args.get("crf") === "true",
    seed: parseInt(args.get("seed") ?? `${TRAIN_DEFAULTS.seed}`, 10),
    valFraction: parseFloat(args.get("val-fraction") ?? `${TRAIN_DEFAULTS.valFraction}`),
    maxSeqLen: parseInt(args.get("max-seq-len") ?? `${TRAIN_DEFAULTS.maxSeqLen}`, 10),
    metricsOut: args.get("metrics-out"),
    evalCmd: evalCmdRaw ? evalCmdRaw.split(/\s+/) : undefined,
  });
}

if (require.main === module) {
  main(process.argv.slice(2));
}
